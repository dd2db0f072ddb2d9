//! Comparison metrics across optimization runs, and their CSV artifacts.
//!
//! The raw material is one best-so-far curve per (method, task, seed). At
//! each trial, methods competing on the same (task, seed) are ranked; each
//! curve also yields a scaled distance to the task's maximum and a simple
//! regret. Summaries aggregate per (method, trial).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BenchError;

/// Descending ranks with ties averaged: the largest value gets rank 1, and
/// equal values share the mean of the ranks they span. Values must be finite.
pub fn rank_desc_avg_ties(values: &[f64]) -> Vec<f64> {
    assert!(
        values.iter().all(|v| v.is_finite()),
        "ranking requires finite values"
    );
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j + 2) as f64 / 2.0; // mean of ranks i+1 ..= j+1
        for k in i..=j {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    ranks
}

/// Scaled distance to the maximum, clipped to [0, 1]. A degenerate scale
/// (`y_max <= y_min`) counts as distance zero.
pub fn adtm(best_so_far: f64, y_min: f64, y_max: f64) -> f64 {
    if y_max <= y_min {
        return 0.0;
    }
    ((y_max - best_so_far) / (y_max - y_min)).clamp(0.0, 1.0)
}

/// Simple regret against the task's best attainable score; never negative.
pub fn regret(best_so_far: f64, y_max: f64) -> f64 {
    (y_max - best_so_far).max(0.0)
}

/// Linear-interpolation quantile (the common "type 7" rule) of an ascending
/// slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&q));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One best-so-far curve over the model-guided trials of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub method: String,
    pub task_id: String,
    pub seed: u64,
    pub best_so_far: Vec<f64>,
}

/// Score range used to scale a task's distances: the pooled observed minimum
/// and the best attainable (or pooled best observed) score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskBounds {
    pub y_min: f64,
    pub y_max: f64,
}

/// One row of metrics.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub task_id: String,
    pub seed: u64,
    pub trial: usize,
    pub best_so_far: f64,
    pub rank: f64,
    pub adtm: f64,
    pub regret: f64,
}

/// One row of summary.csv: per-trial aggregates for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub trial: usize,
    pub mean_rank: f64,
    pub mean_adtm: f64,
    pub median_regret: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Ranks every (task, seed, trial) slice across methods and scales each
/// curve by its task's bounds. All curves on one (task, seed) must cover the
/// same methods and trial count; rows come back sorted by
/// (method, task, seed, trial).
pub fn compute_metrics(
    curves: &[RunCurve],
    bounds: &BTreeMap<String, TaskBounds>,
) -> Result<Vec<MetricRow>, BenchError> {
    let mut groups: BTreeMap<(String, u64), Vec<&RunCurve>> = BTreeMap::new();
    for curve in curves {
        groups
            .entry((curve.task_id.clone(), curve.seed))
            .or_default()
            .push(curve);
    }

    let mut expected_methods: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for ((task_id, seed), mut group) in groups {
        group.sort_by(|a, b| a.method.cmp(&b.method));
        let methods: Vec<String> = group.iter().map(|c| c.method.clone()).collect();
        if methods.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Contract(format!(
                "duplicate method on task '{task_id}' seed {seed}"
            )));
        }
        match &expected_methods {
            None => expected_methods = Some(methods),
            Some(expected) if *expected != methods => {
                return Err(BenchError::Contract(format!(
                    "task '{task_id}' seed {seed} covers methods {methods:?}, others cover {expected:?}"
                )));
            }
            _ => {}
        }
        let trials = group[0].best_so_far.len();
        if group.iter().any(|c| c.best_so_far.len() != trials) {
            return Err(BenchError::Contract(format!(
                "misaligned trial counts on task '{task_id}' seed {seed}"
            )));
        }
        let b = bounds.get(&task_id).ok_or_else(|| {
            BenchError::Contract(format!("no score bounds for task '{task_id}'"))
        })?;
        for t in 0..trials {
            let values: Vec<f64> = group.iter().map(|c| c.best_so_far[t]).collect();
            let ranks = rank_desc_avg_ties(&values);
            for (curve, rank) in group.iter().zip(ranks) {
                let best = curve.best_so_far[t];
                rows.push(MetricRow {
                    method: curve.method.clone(),
                    task_id: task_id.clone(),
                    seed,
                    trial: t + 1,
                    best_so_far: best,
                    rank,
                    adtm: adtm(best, b.y_min, b.y_max),
                    regret: regret(best, b.y_max),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.method, &a.task_id, a.seed, a.trial).cmp(&(&b.method, &b.task_id, b.seed, b.trial))
    });
    Ok(rows)
}

/// Per-(method, trial) aggregates: mean rank, mean distance, and quartiles
/// of the regret distribution. A pure function of the metric rows.
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&MetricRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.method.clone(), row.trial))
            .or_default()
            .push(row);
    }
    groups
        .into_iter()
        .map(|((method, trial), members)| {
            let n = members.len() as f64;
            let mean_rank = members.iter().map(|r| r.rank).sum::<f64>() / n;
            let mean_adtm = members.iter().map(|r| r.adtm).sum::<f64>() / n;
            let mut regrets: Vec<f64> = members.iter().map(|r| r.regret).collect();
            regrets.sort_by(|a, b| a.partial_cmp(b).unwrap());
            SummaryRow {
                method,
                trial,
                mean_rank,
                mean_adtm,
                median_regret: quantile(&regrets, 0.5),
                q25: quantile(&regrets, 0.25),
                q75: quantile(&regrets, 0.75),
            }
        })
        .collect()
}

fn io_err(path: &Path, err: impl std::fmt::Display) -> BenchError {
    BenchError::Io(format!("{}: {err}", path.display()))
}

/// Writes metric rows (assumed sorted) as metrics.csv.
pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads metrics.csv back; malformed rows report their 1-based line number.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>, BenchError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (i, record) in reader.deserialize::<MetricRow>().enumerate() {
        // line 1 is the header
        rows.push(record.map_err(|e| {
            BenchError::Io(format!("{} line {}: {e}", path.display(), i + 2))
        })?);
    }
    Ok(rows)
}

/// Writes the per-(method, trial) summary as summary.csv.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), BenchError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads metrics.csv and writes its summary next to it (or to `out`);
/// returns the summary rows.
pub fn report(metrics_path: &Path, out: &Path) -> Result<Vec<SummaryRow>, BenchError> {
    let rows = read_metrics_csv(metrics_path)?;
    let summary = summarize(&rows);
    write_summary_csv(out, &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranks_match_hand_computed_cases() {
        assert_eq!(rank_desc_avg_ties(&[0.9, 0.2]), vec![1.0, 2.0]);
        assert_eq!(rank_desc_avg_ties(&[0.4, 0.4]), vec![1.5, 1.5]);
        assert_eq!(rank_desc_avg_ties(&[0.9, 0.5, 0.5]), vec![1.0, 2.5, 2.5]);
        assert_eq!(
            rank_desc_avg_ties(&[1.0, 3.0, 2.0, 3.0]),
            vec![4.0, 1.5, 3.0, 1.5]
        );
    }

    #[test]
    fn distance_matches_hand_computed_cases() {
        assert_eq!(adtm(2.0, 0.0, 2.0), 0.0);
        assert_eq!(adtm(0.0, 0.0, 2.0), 1.0);
        assert_eq!(adtm(1.5, 0.0, 2.0), 0.25);
        assert_eq!(adtm(5.0, 1.0, 1.0), 0.0);
        assert_eq!(adtm(-3.0, 0.0, 2.0), 1.0); // clipped
        assert_eq!(adtm(3.0, 0.0, 2.0), 0.0); // clipped
    }

    #[test]
    fn regret_is_the_positive_shortfall() {
        assert_eq!(regret(1.5, 2.0), 0.5);
        assert_eq!(regret(2.5, 2.0), 0.0);
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.75), 3.25);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.5), 7.0);
    }

    fn curve(method: &str, task: &str, seed: u64, best: &[f64]) -> RunCurve {
        RunCurve {
            method: method.into(),
            task_id: task.into(),
            seed,
            best_so_far: best.to_vec(),
        }
    }

    fn simple_bounds(task: &str) -> BTreeMap<String, TaskBounds> {
        BTreeMap::from([(
            task.to_string(),
            TaskBounds {
                y_min: 0.0,
                y_max: 1.0,
            },
        )])
    }

    #[test]
    fn metric_rows_rank_within_each_task_seed_slice() {
        let curves = vec![
            curve("a", "t", 0, &[0.5, 0.9]),
            curve("b", "t", 0, &[0.5, 0.7]),
        ];
        let rows = compute_metrics(&curves, &simple_bounds("t")).unwrap();
        assert_eq!(rows.len(), 4);
        let by_key: BTreeMap<(String, usize), &MetricRow> = rows
            .iter()
            .map(|r| ((r.method.clone(), r.trial), r))
            .collect();
        assert_eq!(by_key[&("a".into(), 1)].rank, 1.5);
        assert_eq!(by_key[&("b".into(), 1)].rank, 1.5);
        assert_eq!(by_key[&("a".into(), 2)].rank, 1.0);
        assert_eq!(by_key[&("b".into(), 2)].rank, 2.0);
        assert!((by_key[&("a".into(), 2)].adtm - 0.1).abs() < 1e-12);
        assert!((by_key[&("a".into(), 2)].regret - 0.1).abs() < 1e-12);
    }

    #[test]
    fn misaligned_or_inconsistent_groups_are_contract_errors() {
        let misaligned = vec![
            curve("a", "t", 0, &[0.5, 0.9]),
            curve("b", "t", 0, &[0.5]),
        ];
        assert!(compute_metrics(&misaligned, &simple_bounds("t")).is_err());
        let inconsistent = vec![
            curve("a", "t", 0, &[0.5]),
            curve("b", "t", 0, &[0.5]),
            curve("a", "t", 1, &[0.5]),
        ];
        assert!(compute_metrics(&inconsistent, &simple_bounds("t")).is_err());
        let duplicated = vec![curve("a", "t", 0, &[0.5]), curve("a", "t", 0, &[0.6])];
        assert!(compute_metrics(&duplicated, &simple_bounds("t")).is_err());
    }

    #[test]
    fn summaries_equal_hand_computed_means_on_a_fixture() {
        let row = |method: &str, task: &str, rank: f64, adtm: f64, regret: f64| MetricRow {
            method: method.into(),
            task_id: task.into(),
            seed: 0,
            trial: 1,
            best_so_far: 0.0,
            rank,
            adtm,
            regret,
        };
        let rows = vec![
            row("a", "t1", 1.0, 0.2, 0.1),
            row("a", "t2", 2.0, 0.4, 0.3),
            row("b", "t1", 2.0, 0.6, 0.5),
            row("b", "t2", 1.0, 0.8, 0.7),
        ];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 2);
        assert_eq!(summary[0].method, "a");
        assert!((summary[0].mean_rank - 1.5).abs() < 1e-12);
        assert!((summary[0].mean_adtm - 0.3).abs() < 1e-12);
        assert!((summary[0].median_regret - 0.2).abs() < 1e-12);
        assert!((summary[0].q25 - 0.15).abs() < 1e-12);
        assert!((summary[0].q75 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_method_summaries_have_rank_one_everywhere() {
        let curves = vec![
            curve("solo", "t", 0, &[0.1, 0.2, 0.3]),
            curve("solo", "t", 1, &[0.4, 0.5, 0.6]),
        ];
        let rows = compute_metrics(&curves, &simple_bounds("t")).unwrap();
        let summary = summarize(&rows);
        assert!(summary.iter().all(|s| s.mean_rank == 1.0));
    }

    #[test]
    fn metrics_csv_round_trips_and_reports_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![MetricRow {
            method: "a".into(),
            task_id: "t".into(),
            seed: 3,
            trial: 1,
            best_so_far: 0.123456789012345,
            rank: 1.5,
            adtm: 0.25,
            regret: 0.5,
        }];
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);

        let bad = dir.path().join("bad.csv");
        std::fs::write(
            &bad,
            "method,task_id,seed,trial,best_so_far,rank,adtm,regret\na,t,3,1,0.5,1.0,0.1,0.0\na,t,oops,1,0.5,1.0,0.1,0.0\n",
        )
        .unwrap();
        let err = read_metrics_csv(&bad).unwrap_err().to_string();
        assert!(err.contains("line 3"), "unhelpful error: {err}");
    }

    #[test]
    fn report_writes_the_summary_of_what_it_reads() {
        let dir = tempfile::tempdir().unwrap();
        let metrics_path = dir.path().join("metrics.csv");
        let summary_path = dir.path().join("summary.csv");
        let curves = vec![
            curve("a", "t", 0, &[0.5, 0.9]),
            curve("b", "t", 0, &[0.5, 0.7]),
        ];
        let rows = compute_metrics(&curves, &simple_bounds("t")).unwrap();
        write_metrics_csv(&metrics_path, &rows).unwrap();
        let summary = report(&metrics_path, &summary_path).unwrap();
        assert_eq!(summary, summarize(&rows));
        let text = std::fs::read_to_string(&summary_path).unwrap();
        assert!(text.starts_with("method,trial,mean_rank,mean_adtm,median_regret,q25,q75"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rank_sums_hit_the_permutation_identity(values in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let ranks = rank_desc_avg_ties(&values);
            let n = values.len() as f64;
            let total: f64 = ranks.iter().sum();
            prop_assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn distances_stay_inside_the_unit_interval(
            best in -5.0f64..5.0,
            lo in -3.0f64..3.0,
            width in 0.0f64..4.0,
        ) {
            let d = adtm(best, lo, lo + width);
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
