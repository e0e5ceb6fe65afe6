//! Experiment orchestration: free-energy landscapes, the stationarity
//! quadrant census, and the seeded benchmark / sweep suites.
//!
//! Every suite derives one seed per cell from `(master seed, cell index)`, so
//! record sets are identical no matter how cells are scheduled; `jobs > 1`
//! runs cells on a small worker pool and merges by index.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{calibrate_ar_gaussian, discretize_lti, run_kf, run_sa, run_smikf};
use crate::error::{Error, Result};
use crate::noise::{generalized_precision_parts, smoothness_precision};
use crate::observer::{run_dem_fixed_s, run_dems, ObserverConfig};
use crate::simlab::scenarios::Scenario;
use crate::simlab::{derive_seed, Dataset, TrialResult};

/// Estimation methods known to the suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Joint state and smoothness observer.
    Dems,
    /// Generalized-coordinate observer with fixed smoothness.
    DemFixed,
    /// Discrete Kalman filter (white-noise assumption).
    Kf,
    /// State augmentation with AR(6) process noise.
    Sa,
    /// Kalman variant with AR(1) state/noise cross-covariance.
    Smikf,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dems => "dems",
            Method::DemFixed => "dem",
            Method::Kf => "kf",
            Method::Sa => "sa",
            Method::Smikf => "smikf",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        match name {
            "dems" => Some(Method::Dems),
            "dem" => Some(Method::DemFixed),
            "kf" => Some(Method::Kf),
            "sa" => Some(Method::Sa),
            "smikf" => Some(Method::Smikf),
            _ => None,
        }
    }

    /// Order of the AR noise model granted to the method, if any.
    fn ar_order(&self) -> Option<usize> {
        match self {
            Method::Sa => Some(6),
            Method::Smikf => Some(1),
            _ => None,
        }
    }
}

/// One suite cell outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRecord {
    pub scenario: String,
    pub method: String,
    pub s_real: f64,
    /// Assumed smoothness for fixed-smoothness cells, when it differs.
    pub s_assumed: Option<f64>,
    pub seed: u64,
    pub p: usize,
    pub sse: f64,
    pub runtime_s: f64,
    pub error: Option<String>,
}

/// Common knobs for the experiment suites.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub dt: f64,
    pub t_total: f64,
    pub seeds: usize,
    pub p: usize,
    pub d: usize,
}

impl SuiteConfig {
    pub fn for_scenario(scenario: Scenario, master_seed: u64) -> Self {
        let dt = scenario.dt;
        let t_total = scenario.t_total;
        let p = scenario.p;
        let d = scenario.d;
        Self {
            scenario,
            master_seed,
            dt,
            t_total,
            seeds: 10,
            p,
            d,
        }
    }

    fn observer_config(&self, p: usize, d: usize) -> ObserverConfig {
        let (pw, pz) = self.scenario.observer_precisions();
        ObserverConfig::new(p, d.min(p), self.dt, pw, pz)
    }
}

/// Runs one method over one dataset with the suite's observer settings.
pub fn run_method(
    suite: &SuiteConfig,
    method: Method,
    dataset: &Dataset,
    s_real: f64,
    s_assumed: Option<f64>,
    p: usize,
) -> Result<TrialResult> {
    let plant = suite.scenario.plant();
    match method {
        Method::Dems => {
            let cfg = suite.observer_config(p, suite.d);
            run_dems(dataset, plant, &cfg)
        }
        Method::DemFixed => {
            let cfg = suite.observer_config(p, suite.d);
            run_dem_fixed_s(dataset, plant, &cfg, s_assumed.unwrap_or(s_real))
        }
        Method::Kf | Method::Sa | Method::Smikf => {
            let (pw, pz) = suite.scenario.observer_precisions();
            let w_cov = pw
                .try_inverse()
                .ok_or_else(|| Error::numerical("prec_w not invertible"))?;
            let z_cov = pz
                .try_inverse()
                .ok_or_else(|| Error::numerical("prec_z not invertible"))?;
            let dplant = discretize_lti(plant, suite.dt, &w_cov, &z_cov)?;
            match method.ar_order() {
                None => run_kf(dataset, &dplant),
                Some(order) => {
                    // AR methods are granted the true correlation structure of
                    // the per-step disturbance.
                    let sigma_w =
                        crate::baselines::step_disturbance_cov(plant, suite.dt, &w_cov)?;
                    let ar = calibrate_ar_gaussian(s_real, suite.dt, &sigma_w, order)?;
                    if method == Method::Sa {
                        run_sa(dataset, &dplant, &ar)
                    } else {
                        run_smikf(dataset, &dplant, &ar)
                    }
                }
            }
        }
    }
}

fn run_cell(
    suite: &SuiteConfig,
    method: Method,
    s_real: f64,
    s_assumed: Option<f64>,
    p: usize,
    cell_index: u64,
    seed_index: u64,
) -> BenchmarkRecord {
    let seed = derive_seed(suite.master_seed, seed_index);
    let started = Instant::now();
    let outcome = suite
        .scenario
        .simulate(s_real, seed, suite.t_total, suite.dt)
        .and_then(|ds| run_method(suite, method, &ds, s_real, s_assumed, p));
    let runtime_s = started.elapsed().as_secs_f64();
    let _ = cell_index;
    let (sse, error) = match outcome {
        Ok(result) => (result.sse.unwrap_or(f64::NAN), None),
        Err(err) => (f64::NAN, Some(err.to_string())),
    };
    BenchmarkRecord {
        scenario: suite.scenario.name().to_string(),
        method: method.as_str().to_string(),
        s_real,
        s_assumed,
        seed,
        p,
        sse,
        runtime_s,
        error,
    }
}

/// Runs `count` independent cells on `jobs` workers, merging by index.
fn run_indexed<T, F>(count: usize, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let jobs = jobs.max(1);
    if jobs == 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(count) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = f(i);
                slots.lock().expect("worker poisened the slot lock")[i] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker poisoned the slot lock")
        .into_iter()
        .map(|v| v.expect("every cell index filled"))
        .collect()
}

/// Benchmark grid: every `(method, s_real, seed)` cell.
pub fn benchmark_suite(
    suite: &SuiteConfig,
    s_real_list: &[f64],
    methods: &[Method],
    jobs: usize,
) -> Vec<BenchmarkRecord> {
    let mut cells = Vec::new();
    for (si, &s_real) in s_real_list.iter().enumerate() {
        for seed_idx in 0..suite.seeds {
            for &method in methods {
                // All methods see the same dataset for a given (s, seed).
                let seed_index = (si * suite.seeds + seed_idx) as u64;
                cells.push((method, s_real, seed_index));
            }
        }
    }
    let indexed: Vec<_> = cells.into_iter().enumerate().collect();
    run_indexed(indexed.len(), jobs, |i| {
        let (idx, (method, s_real, seed_index)) = indexed[i];
        run_cell(suite, method, s_real, None, suite.p, idx as u64, seed_index)
    })
}

/// Embedding-order sweep: fixed-smoothness runs at the true `s` per cell.
pub fn embedding_sweep(
    suite: &SuiteConfig,
    p_list: &[usize],
    s_real_list: &[f64],
    jobs: usize,
) -> Vec<BenchmarkRecord> {
    let mut cells = Vec::new();
    for (si, &s_real) in s_real_list.iter().enumerate() {
        for seed_idx in 0..suite.seeds {
            for &p in p_list {
                let seed_index = (si * suite.seeds + seed_idx) as u64;
                cells.push((p, s_real, seed_index));
            }
        }
    }
    let indexed: Vec<_> = cells.into_iter().enumerate().collect();
    run_indexed(indexed.len(), jobs, |i| {
        let (idx, (p, s_real, seed_index)) = indexed[i];
        run_cell(
            suite,
            Method::DemFixed,
            s_real,
            Some(s_real),
            p,
            idx as u64,
            seed_index,
        )
    })
}

/// Mismatch sweep: fixed-smoothness runs at each assumed `s`, plus a KF
/// reference per `(s_real, seed)` pair.
pub fn mismatch_sweep(
    suite: &SuiteConfig,
    assumed_grid: &[f64],
    s_real_list: &[f64],
    jobs: usize,
) -> Vec<BenchmarkRecord> {
    let mut cells: Vec<(Method, f64, Option<f64>, u64)> = Vec::new();
    for (si, &s_real) in s_real_list.iter().enumerate() {
        for seed_idx in 0..suite.seeds {
            let seed_index = (si * suite.seeds + seed_idx) as u64;
            for &assumed in assumed_grid {
                cells.push((Method::DemFixed, s_real, Some(assumed), seed_index));
            }
            cells.push((Method::Kf, s_real, None, seed_index));
        }
    }
    let indexed: Vec<_> = cells.into_iter().enumerate().collect();
    run_indexed(indexed.len(), jobs, |i| {
        let (idx, (method, s_real, assumed, seed_index)) = indexed[i];
        run_cell(suite, method, s_real, assumed, suite.p, idx as u64, seed_index)
    })
}

/// A sampled free-energy landscape over the smoothness grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeCurve {
    /// `(s, F̄)` pairs in grid order.
    pub points: Vec<(f64, f64)>,
    /// Grid value with the largest `F̄`.
    pub argmax: f64,
}

impl LandscapeCurve {
    /// Indices of strict interior local maxima.
    pub fn interior_maxima(&self) -> Vec<usize> {
        let f: Vec<f64> = self.points.iter().map(|p| p.1).collect();
        (1..f.len().saturating_sub(1))
            .filter(|&i| f[i] > f[i - 1] && f[i] > f[i + 1])
            .collect()
    }

    /// True when the curve has exactly one strict local maximum and it is
    /// interior (neither endpoint dominates its neighbour).
    pub fn is_unimodal_interior(&self) -> bool {
        let f: Vec<f64> = self.points.iter().map(|p| p.1).collect();
        if f.len() < 3 {
            return false;
        }
        let boundary_max = f[0] >= f[1] || f[f.len() - 1] >= f[f.len() - 2];
        self.interior_maxima().len() == 1 && !boundary_max
    }
}

/// Free-energy landscape: for each grid `s`, runs the fixed-smoothness state
/// estimator to `t_eval` and reports the trailing mean of `F` over a window
/// of `window_s` seconds ending at `t_eval`.
///
/// Averaging over a window rather than a single sample keeps the curve's
/// shape stable against the realization of the noise at one instant; the
/// window defaults to [`DEFAULT_LANDSCAPE_WINDOW`] seconds.
pub fn fe_landscape(
    dataset: &Dataset,
    plant: &crate::gencoord::LinearPlant,
    cfg: &ObserverConfig,
    s_grid: &[f64],
    t_eval: f64,
    window_s: f64,
) -> Result<LandscapeCurve> {
    if s_grid.is_empty() {
        return Err(Error::invalid("empty smoothness grid"));
    }
    if s_grid.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
        return Err(Error::invalid("smoothness grid must lie in (0, 1]"));
    }
    let k_eval = (t_eval / dataset.dt).round() as usize;
    if k_eval == 0 || k_eval >= dataset.len() {
        return Err(Error::invalid("t_eval outside the dataset span"));
    }
    let window = ((window_s / dataset.dt).round() as usize).clamp(1, k_eval);

    let truncated = Dataset {
        dt: dataset.dt,
        times: dataset.times[..=k_eval].to_vec(),
        y: dataset.y.rows(0, k_eval + 1).into_owned(),
        v: dataset.v.rows(0, k_eval + 1).into_owned(),
        truth: None,
        meta: dataset.meta.clone(),
    };

    let mut points = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let out = run_dem_fixed_s(&truncated, plant, cfg, s)?;
        let f_traj = out.f_traj.as_ref().expect("observer records F");
        let tail = &f_traj[k_eval + 1 - window..=k_eval];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        points.push((s, mean));
    }
    let argmax = points
        .iter()
        .cloned()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, p| {
            if p.1 > acc.1 {
                p
            } else {
                acc
            }
        })
        .0;
    Ok(LandscapeCurve { points, argmax })
}

/// Default trailing window for landscape evaluation, seconds.
pub const DEFAULT_LANDSCAPE_WINDOW: f64 = 8.0;

/// Counts of `(ε̃ᵀΠ̃_s ε̃, ε̃ᵀΠ̃_ss ε̃)` sign pairs over random draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadrantCensus {
    pub samples: usize,
    /// Quadrants I..IV: `(+,+)`, `(-,+)`, `(-,-)`, `(+,-)`.
    pub counts: [usize; 4],
    pub on_axis: usize,
}

impl QuadrantCensus {
    pub fn first_quadrant_fraction(&self) -> f64 {
        self.counts[0] as f64 / self.samples as f64
    }

    pub fn fourth_quadrant(&self) -> usize {
        self.counts[3]
    }
}

/// Draws `(ε̃, s)` pairs with `|ε̃| < 1`, `s ∈ (0, 1]` and unit noise
/// precisions, evaluates the first two `s`-gradients of the precision
/// quadratic form, and tallies their sign quadrants.
///
/// Error components are drawn uniformly from the nonnegative orthant of the
/// unit ball (uniform direction with nonnegative entries, radius `u^{1/dim}`),
/// matching the entrywise-nonnegative structure of the smoothness matrix.
/// Returns the census plus the raw sample log.
pub fn quadrant_analysis(
    sample_count: usize,
    seed: u64,
    p: usize,
    n: usize,
    m: usize,
) -> Result<(QuadrantCensus, Vec<(f64, f64)>)> {
    if sample_count == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let dim = (p + 1) * (n + m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prec_w = DMatrix::identity(n, n);
    let prec_z = DMatrix::identity(m, m);

    let mut counts = [0usize; 4];
    let mut on_axis = 0usize;
    let mut log = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let mut eps = DVector::from_fn(dim, |_, _| rng.random::<f64>());
        let norm = eps.norm();
        let radius: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
        eps *= radius / norm;
        let s = 1.0 - rng.random::<f64>();

        let sp = smoothness_precision(p, s)?;
        let gp = generalized_precision_parts(sp, &prec_w, &prec_z)?;
        let first = gp.quad_form_grad(&eps)?;
        let second = gp.quad_form_hess(&eps)?;
        log.push((first, second));
        match (first.partial_cmp(&0.0), second.partial_cmp(&0.0)) {
            (Some(std::cmp::Ordering::Greater), Some(std::cmp::Ordering::Greater)) => {
                counts[0] += 1
            }
            (Some(std::cmp::Ordering::Less), Some(std::cmp::Ordering::Greater)) => counts[1] += 1,
            (Some(std::cmp::Ordering::Less), Some(std::cmp::Ordering::Less)) => counts[2] += 1,
            (Some(std::cmp::Ordering::Greater), Some(std::cmp::Ordering::Less)) => counts[3] += 1,
            _ => on_axis += 1,
        }
    }
    Ok((
        QuadrantCensus {
            samples: sample_count,
            counts,
            on_axis,
        },
        log,
    ))
}

/// Median of a slice, ignoring NaNs; NaN when everything is NaN.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
