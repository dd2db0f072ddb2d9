//! Black-box tasks and task families.
//!
//! A task maps a configuration in `[0, 1]^d` to a real score to maximize, is
//! deterministic given its seed, and optionally knows its own optimum so that
//! regret-style metrics need no external constants. Families generate related
//! members: functions drawn from a Gaussian-process prior on a fixed grid,
//! shifted closed-form landscapes, and tabulated evaluation logs.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::cholesky_jittered;
use crate::nn::{rng_from, seed_stream, splitmix64};
use crate::surrogate::Observation;

/// Errors raised while constructing or evaluating tasks.
#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid task configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("covariance factorization failed even with jitter up to {max_jitter}")]
    Factorization { max_jitter: f64 },
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// A deterministic scalar score over the unit cube, to be maximized.
pub struct BlackBoxTask {
    task_id: String,
    dim: usize,
    evaluator: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    optimum: Option<(Vec<f64>, f64)>,
    noise_std: f64,
    seed: u64,
    candidates: Option<Vec<Vec<f64>>>,
}

impl fmt::Debug for BlackBoxTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBoxTask")
            .field("task_id", &self.task_id)
            .field("dim", &self.dim)
            .field("optimum", &self.optimum)
            .field("noise_std", &self.noise_std)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl BlackBoxTask {
    /// Wraps a scoring function over `[0, 1]^dim`.
    pub fn new(
        task_id: impl Into<String>,
        dim: usize,
        evaluator: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        assert!(dim >= 1, "tasks must have at least one input dimension");
        Self {
            task_id: task_id.into(),
            dim,
            evaluator: Box::new(evaluator),
            optimum: None,
            noise_std: 0.0,
            seed: 0,
            candidates: None,
        }
    }

    /// Records the known maximizer and its score.
    pub fn with_optimum(mut self, x: Vec<f64>, y: f64) -> Self {
        self.optimum = Some((x, y));
        self
    }

    /// Adds observation noise of the given standard deviation. Noise is a
    /// pure function of the queried point and the task seed, so repeated
    /// evaluations agree.
    pub fn with_noise(mut self, noise_std: f64, seed: u64) -> Self {
        assert!(noise_std >= 0.0 && noise_std.is_finite());
        self.noise_std = noise_std;
        self.seed = seed;
        self
    }

    /// Restricts proposals to a fixed candidate list (tabulated tasks).
    pub fn with_candidates(mut self, candidates: Vec<Vec<f64>>) -> Self {
        self.candidates = Some(candidates);
        self
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn optimum(&self) -> Option<(&[f64], f64)> {
        self.optimum.as_ref().map(|(x, y)| (x.as_slice(), *y))
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn candidates(&self) -> Option<&[Vec<f64>]> {
        self.candidates.as_deref()
    }

    /// Scores a configuration, adding seeded observation noise if configured.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, TaskError> {
        if x.len() != self.dim {
            return Err(TaskError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(TaskError::InvalidInput(format!(
                "configuration {x:?} leaves the unit cube"
            )));
        }
        let mut value = (self.evaluator)(x);
        if self.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ fingerprint(x)));
            let z: f64 = rng.sample(StandardNormal);
            value += self.noise_std * z;
        }
        Ok(value)
    }
}

fn fingerprint(x: &[f64]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in x {
        for byte in v.to_bits().to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Prior for sampled functions: squared-exponential kernel with the given
/// length scale and kernel scale over a regular grid on the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct GpSampleSpec {
    pub dim: usize,
    pub length_scale: f64,
    pub kernel_scale: f64,
}

impl GpSampleSpec {
    pub fn new(dim: usize, length_scale: f64, kernel_scale: f64) -> Result<Self, TaskError> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(TaskError::InvalidConfig(format!(
                "length scale {length_scale} must be positive"
            )));
        }
        if !(kernel_scale > 0.0 && kernel_scale.is_finite()) {
            return Err(TaskError::InvalidConfig(format!(
                "kernel scale {kernel_scale} must be positive"
            )));
        }
        if !(1..=2).contains(&dim) {
            return Err(TaskError::InvalidConfig(format!(
                "grid-interpolated sampling supports 1 or 2 dimensions, not {dim}"
            )));
        }
        Ok(Self {
            dim,
            length_scale,
            kernel_scale,
        })
    }
}

const BASE_JITTER: f64 = 1e-8;
const MAX_JITTER: f64 = 1e-2;

fn se_cov(points: &[f64], length_scale: f64, scale_sq: f64) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = points[i] - points[j];
            k[i * n + j] = scale_sq * (-d * d / (2.0 * length_scale * length_scale)).exp();
        }
    }
    k
}

fn grid_axis(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

fn standard_normals(count: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Values of a sampled function on a regular grid, evaluated anywhere by
/// linear (bilinear at two dimensions) interpolation.
struct GridFunction {
    dim: usize,
    n: usize,
    values: Vec<f64>,
}

impl GridFunction {
    fn eval(&self, x: &[f64]) -> f64 {
        let locate = |v: f64| -> (usize, f64) {
            let scaled = v.clamp(0.0, 1.0) * (self.n - 1) as f64;
            let idx = (scaled.floor() as usize).min(self.n - 2);
            (idx, scaled - idx as f64)
        };
        match self.dim {
            1 => {
                let (i, t) = locate(x[0]);
                self.values[i] * (1.0 - t) + self.values[i + 1] * t
            }
            _ => {
                let (i, s) = locate(x[0]);
                let (j, t) = locate(x[1]);
                let at = |a: usize, b: usize| self.values[a * self.n + b];
                (1.0 - s) * ((1.0 - t) * at(i, j) + t * at(i, j + 1))
                    + s * ((1.0 - t) * at(i + 1, j) + t * at(i + 1, j + 1))
            }
        }
    }

    fn argmax(&self) -> (Vec<f64>, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        let axis = grid_axis(self.n);
        let location = match self.dim {
            1 => vec![axis[best.0]],
            _ => vec![axis[best.0 / self.n], axis[best.0 % self.n]],
        };
        (location, best.1)
    }
}

/// Draws one function from the prior, fixed on an `n`-per-axis grid; between
/// grid points the function interpolates linearly. The returned task stores
/// the grid maximum as its optimum (interpolation never exceeds grid nodes).
pub fn sample_gp_function(
    spec: &GpSampleSpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<BlackBoxTask, TaskError> {
    GpSampleSpec::new(spec.dim, spec.length_scale, spec.kernel_scale)?;
    if n < 2 {
        return Err(TaskError::InvalidConfig(format!(
            "need at least 2 grid points per axis, got {n}"
        )));
    }
    let axis = grid_axis(n);
    let scale_sq = spec.kernel_scale * spec.kernel_scale;
    let values = match spec.dim {
        1 => {
            let k = se_cov(&axis, spec.length_scale, scale_sq);
            let (l, _) = cholesky_jittered(n, &k, BASE_JITTER, MAX_JITTER)
                .ok_or(TaskError::Factorization { max_jitter: MAX_JITTER })?;
            let z = standard_normals(n, rng);
            let mut f = vec![0.0; n];
            for i in 0..n {
                for j in 0..=i {
                    f[i] += l[i * n + j] * z[j];
                }
            }
            f
        }
        _ => {
            // The squared-exponential kernel factorizes over axes on a tensor
            // grid: K = K1 (x) K2, so L1 Z L2^T draws exactly from N(0, K).
            let k_axis = se_cov(&axis, spec.length_scale, 1.0);
            let (l, _) = cholesky_jittered(n, &k_axis, BASE_JITTER, MAX_JITTER)
                .ok_or(TaskError::Factorization { max_jitter: MAX_JITTER })?;
            let z = standard_normals(n * n, rng);
            // rows: first axis; cols: second axis
            let mut lz = vec![0.0; n * n];
            for i in 0..n {
                for p in 0..=i {
                    let lip = l[i * n + p];
                    if lip == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        lz[i * n + j] += lip * z[p * n + j];
                    }
                }
            }
            let mut f = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for q in 0..=j {
                        acc += lz[i * n + q] * l[j * n + q];
                    }
                    f[i * n + j] = spec.kernel_scale * acc;
                }
            }
            return Ok(grid_task(spec.dim, n, f));
        }
    };
    Ok(grid_task(spec.dim, n, values))
}

fn grid_task(dim: usize, n: usize, values: Vec<f64>) -> BlackBoxTask {
    let grid = GridFunction { dim, n, values };
    let (opt_x, opt_y) = grid.argmax();
    BlackBoxTask::new("gp-sample", dim, move |x| grid.eval(x)).with_optimum(opt_x, opt_y)
}

/// Draws a function from the prior jointly at `n_obs` uniform points of the
/// unit cube, at any dimension; used to build synthetic training sets.
pub fn sample_gp_observations(
    dim: usize,
    n_obs: usize,
    length_scale: f64,
    kernel_scale: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Observation>, TaskError> {
    if dim == 0 || n_obs == 0 {
        return Err(TaskError::InvalidConfig(
            "need at least one dimension and one observation".into(),
        ));
    }
    if !(length_scale > 0.0 && kernel_scale > 0.0) {
        return Err(TaskError::InvalidConfig(
            "length scale and kernel scale must be positive".into(),
        ));
    }
    let xs: Vec<Vec<f64>> = (0..n_obs)
        .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let scale_sq = kernel_scale * kernel_scale;
    let mut k = vec![0.0; n_obs * n_obs];
    for i in 0..n_obs {
        for j in 0..n_obs {
            let dist_sq: f64 = xs[i]
                .iter()
                .zip(&xs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            k[i * n_obs + j] = scale_sq * (-dist_sq / (2.0 * length_scale * length_scale)).exp();
        }
    }
    let (l, _) = cholesky_jittered(n_obs, &k, BASE_JITTER, MAX_JITTER)
        .ok_or(TaskError::Factorization { max_jitter: MAX_JITTER })?;
    let z = standard_normals(n_obs, rng);
    let mut observations = Vec::with_capacity(n_obs);
    for (i, x) in xs.into_iter().enumerate() {
        let y: f64 = (0..=i).map(|j| l[i * n_obs + j] * z[j]).sum();
        observations.push(
            Observation::new(x, y)
                .map_err(|e| TaskError::InvalidInput(e.to_string()))?,
        );
    }
    Ok(observations)
}

/// Minimum of the standard two-dimensional test landscape.
const BRANIN_MIN: f64 = 0.397887;
/// Maximum of the same landscape over its standard domain (at its corner
/// `(-5, 0)`), used to flip and rescale scores into roughly `[0, 1]`.
const BRANIN_MAX: f64 = 308.129_096_011_606_63;

fn branin_raw(a: f64, b: f64) -> f64 {
    use std::f64::consts::PI;
    let t = b - 5.1 / (4.0 * PI * PI) * a * a + 5.0 / PI * a - 6.0;
    t * t + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * a.cos() + 10.0
}

fn branin_score(x: &[f64], shift: [f64; 2]) -> f64 {
    let a = -5.0 + 15.0 * (x[0] + shift[0]);
    let b = 15.0 * (x[1] + shift[1]);
    (BRANIN_MAX - branin_raw(a, b)) / (BRANIN_MAX - BRANIN_MIN)
}

const OPTIMUM_GRID: usize = 1001;

fn dense_grid_argmax(dim: usize, f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let axis = grid_axis(OPTIMUM_GRID);
    let mut best: (Vec<f64>, f64) = (vec![0.0; dim], f64::NEG_INFINITY);
    match dim {
        1 => {
            for &a in &axis {
                let v = f(&[a]);
                if v > best.1 {
                    best = (vec![a], v);
                }
            }
        }
        _ => {
            let mut probe = [0.0; 2];
            for &a in &axis {
                probe[0] = a;
                for &b in &axis {
                    probe[1] = b;
                    let v = f(&probe);
                    if v > best.1 {
                        best = (probe.to_vec(), v);
                    }
                }
            }
        }
    }
    best
}

pub(crate) fn branin_task_with_shift(shift: [f64; 2], task_id: &str) -> BlackBoxTask {
    let (opt_x, opt_y) = dense_grid_argmax(2, |x| branin_score(x, shift));
    BlackBoxTask::new(task_id, 2, move |x| branin_score(x, shift)).with_optimum(opt_x, opt_y)
}

/// A flipped, rescaled two-valley landscape on `[0, 1]²` with a seeded
/// translation of up to 0.1 per axis; the stored optimum comes from a dense
/// 1001-per-axis grid search.
pub fn branin_task(member_seed: u64) -> BlackBoxTask {
    let mut rng = rng_from(member_seed, "shift");
    let shift = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
    branin_task_with_shift(shift, &format!("branin-{member_seed}"))
}

/// A concave bowl `1 - ||x - c||² / d` with its center drawn uniformly in
/// `[0.3, 0.7]^d`; the optimum is exactly `(c, 1)`.
pub fn quad_task(dim: usize, member_seed: u64) -> BlackBoxTask {
    assert!(dim >= 1);
    let mut rng = rng_from(member_seed, "center");
    let center: Vec<f64> = (0..dim).map(|_| rng.random_range(0.3..0.7)).collect();
    let c = center.clone();
    let task = BlackBoxTask::new(format!("quad-{member_seed}"), dim, move |x| {
        let dist_sq: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 - dist_sq / dim as f64
    });
    task.with_optimum(center, 1.0)
}

/// Reads a tabulated task: CSV with header `x1,...,xd,y`, all inputs in
/// `[0, 1]`. Queries resolve to the nearest tabulated row (ties to the lower
/// row index) and the rows double as the task's candidate set.
pub fn load_tabular_task(path: &Path) -> Result<BlackBoxTask, TaskError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| TaskError::Io(e.to_string()))?;
    let headers = reader.headers().map_err(|e| TaskError::Io(e.to_string()))?;
    let cols = headers.len();
    if cols < 2 {
        return Err(TaskError::Malformed {
            line: 1,
            msg: "need at least one input column and a score column".into(),
        });
    }
    let dim = cols - 1;
    for (i, name) in headers.iter().enumerate() {
        let expected = if i < dim { format!("x{}", i + 1) } else { "y".to_string() };
        if name != expected {
            return Err(TaskError::Malformed {
                line: 1,
                msg: format!("column {} is {name:?}, expected {expected:?}", i + 1),
            });
        }
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| TaskError::Malformed {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != cols {
            return Err(TaskError::Malformed {
                line,
                msg: format!("{} fields, expected {cols}", record.len()),
            });
        }
        let mut parsed = Vec::with_capacity(cols);
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| TaskError::Malformed {
                line,
                msg: format!("cannot parse {field:?} as a number"),
            })?;
            parsed.push(v);
        }
        let y = parsed.pop().expect("at least two columns");
        if parsed.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(TaskError::Malformed {
                line,
                msg: format!("input {parsed:?} leaves [0, 1]"),
            });
        }
        if !y.is_finite() {
            return Err(TaskError::Malformed {
                line,
                msg: format!("score {y} is not finite"),
            });
        }
        rows.push((parsed, y));
    }
    if rows.is_empty() {
        return Err(TaskError::Malformed {
            line: 2,
            msg: "table has no data rows".into(),
        });
    }

    let candidates: Vec<Vec<f64>> = rows.iter().map(|(x, _)| x.clone()).collect();
    let best = rows
        .iter()
        .enumerate()
        .max_by(|(ia, (_, ya)), (ib, (_, yb))| {
            ya.partial_cmp(yb)
                .unwrap()
                .then(ib.cmp(ia)) // prefer the lower row index on ties
        })
        .map(|(_, (x, y))| (x.clone(), *y))
        .expect("non-empty table");

    let table = rows;
    let task_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tabular".into());
    let task = BlackBoxTask::new(task_id, dim, move |x| {
        let mut best_dist = f64::INFINITY;
        let mut best_y = 0.0;
        for (row_x, row_y) in &table {
            let dist: f64 = x.iter().zip(row_x).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best_dist {
                best_dist = dist;
                best_y = *row_y;
            }
        }
        best_y
    });
    Ok(task
        .with_optimum(best.0, best.1)
        .with_candidates(candidates))
}

/// The kind of generator behind a [`TaskFamily`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// Functions drawn from the grid-interpolated prior.
    Gp,
    /// Translated flipped two-valley landscapes.
    BraninShift,
    /// Translated concave bowls.
    QuadShift,
    /// Tabulated logs cycled by member index.
    Tabular,
}

/// A seeded generator of related tasks sharing one input dimension.
#[derive(Debug, Clone)]
pub struct TaskFamily {
    kind: FamilyKind,
    seed: u64,
    dim: usize,
    grid_points: usize,
    paths: Vec<PathBuf>,
}

impl TaskFamily {
    /// Prior-sampled functions at the default grid resolution for the
    /// dimension (256 at one dimension, 64 per axis at two).
    pub fn gp(dim: usize, seed: u64) -> Result<Self, TaskError> {
        let grid_points = match dim {
            1 => 256,
            2 => 64,
            _ => {
                return Err(TaskError::InvalidConfig(format!(
                    "grid-interpolated family supports 1 or 2 dimensions, not {dim}"
                )))
            }
        };
        Ok(Self {
            kind: FamilyKind::Gp,
            seed,
            dim,
            grid_points,
            paths: Vec::new(),
        })
    }

    /// Prior-sampled functions at an explicit grid resolution.
    pub fn gp_with_grid(dim: usize, seed: u64, grid_points: usize) -> Result<Self, TaskError> {
        let mut family = Self::gp(dim, seed)?;
        if grid_points < 2 {
            return Err(TaskError::InvalidConfig(format!(
                "need at least 2 grid points per axis, got {grid_points}"
            )));
        }
        family.grid_points = grid_points;
        Ok(family)
    }

    pub fn branin_shift(seed: u64) -> Self {
        Self {
            kind: FamilyKind::BraninShift,
            seed,
            dim: 2,
            grid_points: 0,
            paths: Vec::new(),
        }
    }

    pub fn quad_shift(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1);
        Self {
            kind: FamilyKind::QuadShift,
            seed,
            dim,
            grid_points: 0,
            paths: Vec::new(),
        }
    }

    pub fn tabular(paths: Vec<PathBuf>) -> Result<Self, TaskError> {
        if paths.is_empty() {
            return Err(TaskError::InvalidConfig(
                "tabular family needs at least one file".into(),
            ));
        }
        let first = load_tabular_task(&paths[0])?;
        Ok(Self {
            kind: FamilyKind::Tabular,
            seed: 0,
            dim: first.dim(),
            grid_points: 0,
            paths,
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Builds the `m`-th member task, deterministically in the family seed.
    pub fn member(&self, m: u64) -> Result<BlackBoxTask, TaskError> {
        let member_seed = seed_stream(self.seed, &format!("member-{m}"));
        match self.kind {
            FamilyKind::Gp => {
                let length_scale = rng_from(member_seed, "length-scale").random_range(0.3..1.0);
                let spec = GpSampleSpec::new(self.dim, length_scale, 1.0)?;
                let mut rng = rng_from(member_seed, "function");
                let mut task = sample_gp_function(&spec, self.grid_points, &mut rng)?;
                task.task_id = format!("gp-{m}");
                Ok(task)
            }
            FamilyKind::BraninShift => {
                let mut rng = rng_from(member_seed, "shift");
                let shift = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
                Ok(branin_task_with_shift(shift, &format!("branin-{m}")))
            }
            FamilyKind::QuadShift => Ok(quad_task(self.dim, member_seed)),
            FamilyKind::Tabular => load_tabular_task(&self.paths[m as usize % self.paths.len()]),
        }
    }
}
