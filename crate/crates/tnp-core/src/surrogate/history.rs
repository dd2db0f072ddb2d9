//! Observation sets: the unit of conditioning for the surrogate.

use std::io::{Read, Write};

use super::SurrogateError;

/// One evaluated configuration. Coordinates live in the unit hypercube and the
/// score is finite; both are enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    x: Vec<f64>,
    y: f64,
}

impl Observation {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self, SurrogateError> {
        if x.is_empty() {
            return Err(SurrogateError::InvalidObservation(
                "configuration is empty".into(),
            ));
        }
        if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SurrogateError::InvalidObservation(format!(
                "coordinate {bad} outside [0, 1]"
            )));
        }
        if !y.is_finite() {
            return Err(SurrogateError::InvalidObservation(format!(
                "score {y} is not finite"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// The observation history of one task, with its running best.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySet {
    task_id: String,
    observations: Vec<Observation>,
    best: Option<(Vec<f64>, f64)>,
}

impl HistorySet {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            observations: Vec::new(),
            best: None,
        }
    }

    pub fn from_observations(
        task_id: impl Into<String>,
        observations: Vec<Observation>,
    ) -> Result<Self, SurrogateError> {
        let mut set = Self::new(task_id);
        for obs in observations {
            set.push(obs)?;
        }
        Ok(set)
    }

    /// Appends an observation, maintaining the best-seen pair. Ties keep the
    /// earlier incumbent, so insertion order fully determines the best.
    pub fn push(&mut self, obs: Observation) -> Result<(), SurrogateError> {
        if let Some(first) = self.observations.first() {
            if first.dim() != obs.dim() {
                return Err(SurrogateError::DimensionMismatch {
                    expected: first.dim(),
                    got: obs.dim(),
                });
            }
        }
        match &self.best {
            Some((_, best_y)) if obs.y() <= *best_y => {}
            _ => self.best = Some((obs.x().to_vec(), obs.y())),
        }
        self.observations.push(obs);
        Ok(())
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Input dimensionality, if any observation has been recorded.
    pub fn dim(&self) -> Option<usize> {
        self.observations.first().map(Observation::dim)
    }

    /// Best observed pair (highest score; ties resolved to the earliest).
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, y)| (x.as_slice(), *y))
    }
}

/// Per-task score statistics used for standardization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
}

impl ScoreStats {
    pub fn of(history: &HistorySet) -> Self {
        let n = history.len().max(1) as f64;
        let mean = history.observations().iter().map(Observation::y).sum::<f64>() / n;
        let var = history
            .observations()
            .iter()
            .map(|o| (o.y() - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        Self {
            mean,
            std: if std < 1e-12 { 1.0 } else { std },
        }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Returns a copy of `history` with scores shifted to mean zero and scaled to
/// unit standard deviation (population convention), plus the statistics used.
/// Degenerate histories (all scores equal) keep their offsets and use scale 1.
pub fn standardize(history: &HistorySet) -> (HistorySet, ScoreStats) {
    let stats = ScoreStats::of(history);
    let mut out = HistorySet::new(history.task_id());
    for obs in history.observations() {
        // Values were finite and in-range before; the affine map keeps them finite.
        out.push(Observation::new(obs.x().to_vec(), stats.forward(obs.y())).expect("standardized"))
            .expect("same dimensions");
    }
    (out, stats)
}

/// Writes history sets as CSV rows `task_id, t, x, y` with `x` semicolon-joined.
pub fn histories_to_csv(sets: &[HistorySet], writer: impl Write) -> Result<(), SurrogateError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["task_id", "t", "x", "y"])
        .map_err(|e| SurrogateError::Io(e.to_string()))?;
    for set in sets {
        for (t, obs) in set.observations().iter().enumerate() {
            let x = obs
                .x()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([set.task_id(), &t.to_string(), &x, &obs.y().to_string()])
                .map_err(|e| SurrogateError::Io(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| SurrogateError::Io(e.to_string()))?;
    Ok(())
}

/// Reads history sets written by [`histories_to_csv`], grouping consecutive
/// rows by task id.
pub fn histories_from_csv(reader: impl Read) -> Result<Vec<HistorySet>, SurrogateError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut sets: Vec<HistorySet> = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| SurrogateError::Io(e.to_string()))?;
        let line = i + 2; // header is line 1
        if record.len() != 4 {
            return Err(SurrogateError::InvalidObservation(format!(
                "line {line}: expected 4 fields, got {}",
                record.len()
            )));
        }
        let task_id = record[0].to_string();
        let x: Vec<f64> = record[2]
            .split(';')
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    SurrogateError::InvalidObservation(format!(
                        "line {line}: bad coordinate {p:?}"
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        let y: f64 = record[3].parse().map_err(|_| {
            SurrogateError::InvalidObservation(format!("line {line}: bad score {:?}", &record[3]))
        })?;
        let obs = Observation::new(x, y)
            .map_err(|e| SurrogateError::InvalidObservation(format!("line {line}: {e}")))?;
        match sets.last_mut() {
            Some(last) if last.task_id() == task_id => last.push(obs)?,
            _ => {
                let mut set = HistorySet::new(task_id);
                set.push(obs)?;
                sets.push(set);
            }
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn obs(x: &[f64], y: f64) -> Observation {
        Observation::new(x.to_vec(), y).unwrap()
    }

    #[test]
    fn out_of_range_coordinates_are_rejected() {
        assert!(Observation::new(vec![1.2], 0.0).is_err());
        assert!(Observation::new(vec![-0.1], 0.0).is_err());
        assert!(Observation::new(vec![], 0.0).is_err());
        assert!(Observation::new(vec![0.5], f64::NAN).is_err());
        assert!(Observation::new(vec![0.0, 1.0], 3.0).is_ok());
    }

    #[test]
    fn best_tracks_maximum_and_keeps_earliest_on_ties() {
        let mut h = HistorySet::new("t");
        h.push(obs(&[0.1], 0.5)).unwrap();
        h.push(obs(&[0.2], 0.9)).unwrap();
        h.push(obs(&[0.3], 0.9)).unwrap();
        h.push(obs(&[0.4], 0.2)).unwrap();
        let (bx, by) = h.best().unwrap();
        assert_eq!(bx, &[0.2]);
        assert_eq!(by, 0.9);
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let mut h = HistorySet::new("t");
        h.push(obs(&[0.1, 0.2], 0.5)).unwrap();
        assert!(h.push(obs(&[0.1], 0.5)).is_err());
    }

    #[test]
    fn standardize_centers_and_scales() {
        let h = HistorySet::from_observations(
            "t",
            vec![obs(&[0.1], 1.0), obs(&[0.2], 3.0), obs(&[0.3], 5.0)],
        )
        .unwrap();
        let (std_h, stats) = standardize(&h);
        assert_abs_diff_eq!(stats.mean, 3.0);
        let ys: Vec<f64> = std_h.observations().iter().map(Observation::y).collect();
        assert_abs_diff_eq!(ys.iter().sum::<f64>(), 0.0, epsilon = 1e-12);
        let var: f64 = ys.iter().map(|y| y * y).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(var, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.inverse(stats.forward(4.2)), 4.2, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_scores_use_unit_scale() {
        let h = HistorySet::from_observations("t", vec![obs(&[0.1], 2.0), obs(&[0.2], 2.0)])
            .unwrap();
        let (std_h, stats) = standardize(&h);
        assert_eq!(stats.std, 1.0);
        assert!(std_h.observations().iter().all(|o| o.y() == 0.0));
    }

    #[test]
    fn csv_round_trip_preserves_sets() {
        let a = HistorySet::from_observations(
            "alpha",
            vec![obs(&[0.1, 0.9], 0.25), obs(&[0.4, 0.5], -1.5)],
        )
        .unwrap();
        let b = HistorySet::from_observations("beta", vec![obs(&[0.7, 0.2], 0.75)]).unwrap();
        let mut buf = Vec::new();
        histories_to_csv(&[a.clone(), b.clone()], &mut buf).unwrap();
        let back = histories_from_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn malformed_csv_reports_line_numbers() {
        let text = "task_id,t,x,y\nalpha,0,0.1;oops,1.0\n";
        let err = histories_from_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got: {err}");
    }
}
