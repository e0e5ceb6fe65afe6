//! The joint state and noise-smoothness observer.
//!
//! The state estimate evolves by the exactly discretized linear update
//!
//! ```text
//! x̃(t+dt) = e^{A₁ dt} x̃(t) + A₁⁻¹ (e^{A₁ dt} - I) B₁ [ỹ; ṽ]
//! A₁ = Dˣ - kˣ C̃ᵀ Π̃ᶻ C̃ - kˣ (Dˣ - Ã)ᵀ Π̃ʷ (Dˣ - Ã)
//! B₁ = kˣ [C̃ᵀ Π̃ᶻ , (Dˣ - Ã)ᵀ Π̃ʷ B̃]
//! ```
//!
//! while the smoothness estimate follows the exponential-Euler Newton step
//! `ds = (e^{F_ss dt} - 1) F_s / F_ss`, clamped to `[s_min, s_max]`. Both
//! `A₁` and `B₁` depend on the current `s` through the generalized
//! precisions, so they are rebuilt whenever `s` moves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::free_energy::{self, FreeEnergyEval, SmoothnessPrior};
use crate::gencoord::{embed_series, lift_system, GeneralizedSystem, GeneralizedVector};
use crate::linalg;
use crate::noise::{generalized_precision_parts, smoothness_precision, GeneralizedPrecision};
use crate::simlab::{Dataset, TrialResult};

/// Two smoothness values closer than this share cached update matrices.
const S_CACHE_TOL: f64 = 1e-12;

/// Configuration of the observer.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub p: usize,
    pub d: usize,
    pub k_x: f64,
    pub s_init: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub dt: f64,
    pub prior: SmoothnessPrior,
    /// Process-noise precision the observer assumes (`n × n`).
    pub prec_w: DMatrix<f64>,
    /// Measurement-noise precision the observer assumes (`m × m`).
    pub prec_z: DMatrix<f64>,
}

impl ObserverConfig {
    /// Builds a configuration with the standard defaults: `kˣ = 1`,
    /// `s_init = 0.001`, clamp `[1e-4, 1]`, low-confidence prior.
    pub fn new(p: usize, d: usize, dt: f64, prec_w: DMatrix<f64>, prec_z: DMatrix<f64>) -> Self {
        Self {
            p,
            d,
            k_x: 1.0,
            s_init: 0.001,
            s_min: 1e-4,
            s_max: 1.0,
            dt,
            prior: SmoothnessPrior::default(),
            prec_w,
            prec_z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d > self.p {
            return Err(Error::invalid("d must not exceed p"));
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max && self.s_max <= 1.0) {
            return Err(Error::invalid("need 0 < s_min <= s_max <= 1"));
        }
        if !(self.s_init >= self.s_min && self.s_init <= self.s_max) {
            return Err(Error::invalid("s_init must lie within the clamp bounds"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !self.k_x.is_finite() || self.k_x < 0.0 {
            return Err(Error::invalid("k_x must be non-negative"));
        }
        if !linalg::is_spd(&self.prec_w, 1e-10) || !linalg::is_spd(&self.prec_z, 1e-10) {
            return Err(Error::invalid("observer precisions must be SPD"));
        }
        Ok(())
    }
}

/// Running state of the observer: current estimate, smoothness and time.
#[derive(Debug, Clone)]
pub struct ObserverState {
    pub x_gen: GeneralizedVector,
    pub s: f64,
    pub t: f64,
    pub last_f: Option<FreeEnergyEval>,
}

/// Builds the continuous-time update matrices `(A₁, B₁)`.
pub fn build_observer_matrices(
    gsys: &GeneralizedSystem,
    gp: &GeneralizedPrecision,
    k_x: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = gsys.plant().state_dim();
    let m = gsys.plant().output_dim();
    if gp.state_dim() != n || gp.output_dim() != m || gp.order() != gsys.state_order() {
        return Err(Error::dims("precision and system dimensions disagree"));
    }
    let c = gsys.c_gen();
    let da = gsys.shift() - gsys.a_gen();
    let pz = gp.block_z();
    let pw = gp.block_w();
    let ct_pz = c.transpose() * &pz;
    let dat_pw = da.transpose() * &pw;
    let a1 = gsys.shift() - k_x * (&ct_pz * c) - k_x * (&dat_pw * &da);

    let rows = a1.nrows();
    let y_cols = ct_pz.ncols();
    let v_cols = gsys.b_gen().ncols();
    let mut b1 = DMatrix::zeros(rows, y_cols + v_cols);
    b1.view_mut((0, 0), (rows, y_cols))
        .copy_from(&(k_x * &ct_pz));
    b1.view_mut((0, y_cols), (rows, v_cols))
        .copy_from(&(k_x * (&dat_pw * gsys.b_gen())));
    Ok((a1, b1))
}

/// Precomputed discretization of one observer step at a fixed `(A₁, dt)`.
#[derive(Debug, Clone)]
pub struct DiscreteUpdate {
    exp_a1: DMatrix<f64>,
    gamma: DMatrix<f64>,
}

impl DiscreteUpdate {
    pub fn new(a1: &DMatrix<f64>, dt: f64) -> Result<Self> {
        let (exp_a1, gamma) = linalg::exp_and_phi(a1, dt)?;
        Ok(Self { exp_a1, gamma })
    }

    /// `x⁺ = e^{A₁ dt} x + Γ B₁ u`.
    pub fn apply(&self, x: &DVector<f64>, b1: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.exp_a1 * x + &self.gamma * (b1 * u)
    }

    pub fn exp_a1(&self) -> &DMatrix<f64> {
        &self.exp_a1
    }
}

/// One exactly discretized state update (builds the matrix exponential for
/// this call; use [`DiscreteUpdate`] to amortize it across steps).
pub fn state_step(
    a1: &DMatrix<f64>,
    b1: &DMatrix<f64>,
    x_gen: &GeneralizedVector,
    y_gen: &GeneralizedVector,
    v_gen: &GeneralizedVector,
    dt: f64,
) -> Result<GeneralizedVector> {
    let upd = DiscreteUpdate::new(a1, dt)?;
    let u = stack_inputs(y_gen, v_gen);
    let x = upd.apply(x_gen.values(), b1, &u);
    if !linalg::vec_all_finite(&x) {
        return Err(Error::numerical("state update produced non-finite values"));
    }
    GeneralizedVector::new(x_gen.base_dim(), x_gen.order(), x)
}

fn stack_inputs(y_gen: &GeneralizedVector, v_gen: &GeneralizedVector) -> DVector<f64> {
    let mut u = DVector::zeros(y_gen.len() + v_gen.len());
    u.rows_mut(0, y_gen.len()).copy_from(y_gen.values());
    u.rows_mut(y_gen.len(), v_gen.len()).copy_from(v_gen.values());
    u
}

/// Newton-Gauss smoothness increment `ds = (e^{F_ss dt} - 1) F_s / F_ss`,
/// falling back to the first-order limit `F_s dt` when `|F_ss|` is tiny, and
/// clamping the result to `[s_min, s_max]`.
pub fn smoothness_step(
    s: f64,
    f_s: f64,
    f_ss: f64,
    dt: f64,
    bounds: (f64, f64),
) -> Result<f64> {
    if !f_s.is_finite() || !f_ss.is_finite() {
        return Err(Error::invalid("non-finite free-energy gradients"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let ds = if f_s == 0.0 {
        0.0
    } else if f_ss.abs() < 1e-9 {
        f_s * dt
    } else {
        (f_ss * dt).exp_m1() * f_s / f_ss
    };
    Ok((s + ds).clamp(bounds.0, bounds.1))
}

/// Joint state and smoothness estimation over a dataset.
///
/// Per step: embed `ỹ, ṽ` with centered Taylor windows; rebuild `Π̃(s)`,
/// `A₁`, `B₁` when `s` moved; advance the state; evaluate the free-energy
/// gradients at the updated state; advance `s`. Returns the full estimate,
/// smoothness and free-energy trajectories plus the SSE when truth is stored.
pub fn run_dems(
    dataset: &Dataset,
    plant: &crate::gencoord::LinearPlant,
    cfg: &ObserverConfig,
) -> Result<TrialResult> {
    run_observer(dataset, plant, cfg, None)
}

/// DEM with the smoothness pinned at `s_fixed` (no smoothness update).
pub fn run_dem_fixed_s(
    dataset: &Dataset,
    plant: &crate::gencoord::LinearPlant,
    cfg: &ObserverConfig,
    s_fixed: f64,
) -> Result<TrialResult> {
    if !(s_fixed > 0.0) {
        return Err(Error::invalid("s_fixed must be positive"));
    }
    run_observer(dataset, plant, cfg, Some(s_fixed))
}

fn run_observer(
    dataset: &Dataset,
    plant: &crate::gencoord::LinearPlant,
    cfg: &ObserverConfig,
    s_fixed: Option<f64>,
) -> Result<TrialResult> {
    cfg.validate()?;
    dataset.validate()?;
    if (dataset.dt - cfg.dt).abs() > 1e-9 * cfg.dt {
        return Err(Error::invalid(format!(
            "dataset dt {} does not match observer dt {}",
            dataset.dt, cfg.dt
        )));
    }
    let n = plant.state_dim();
    let m = plant.output_dim();
    if dataset.output_dim() != m || cfg.prec_w.nrows() != n || cfg.prec_z.nrows() != m {
        return Err(Error::dims("plant, dataset and precision dimensions disagree"));
    }
    let count = dataset.len();
    if count < cfg.p + 1 || count < cfg.d + 1 {
        return Err(Error::invalid("dataset too short for the embedding windows"));
    }

    let gsys = lift_system(plant, cfg.p, cfg.d)?;
    let y_embedded = embed_series(&dataset.y, cfg.dt, cfg.p)?;
    let v_embedded = embed_series(&dataset.v, cfg.dt, cfg.d)?;

    let mut x = GeneralizedVector::zeros(n, cfg.p);
    let mut s = s_fixed.unwrap_or(cfg.s_init);
    let estimate_s = s_fixed.is_none();

    let mut estimates = DMatrix::zeros(count, n);
    let mut s_traj = vec![s; count];
    let mut f_traj = vec![f64::NAN; count];
    estimates.row_mut(0).copy_from(&x.block(0).transpose());

    let mut built_s = f64::NAN;
    let mut gp_cache: Option<GeneralizedPrecision> = None;
    let mut b1_cache = DMatrix::zeros(0, 0);
    let mut upd_cache: Option<DiscreteUpdate> = None;

    for k in 0..count - 1 {
        if gp_cache.is_none() || (s - built_s).abs() > S_CACHE_TOL {
            let sp = smoothness_precision(cfg.p, s)?;
            let gp = generalized_precision_parts(sp, &cfg.prec_w, &cfg.prec_z)?;
            let (a1, b1) = build_observer_matrices(&gsys, &gp, cfg.k_x)?;
            upd_cache = Some(DiscreteUpdate::new(&a1, cfg.dt).map_err(|e| match e {
                Error::Numerical(msg) => Error::Divergence {
                    step: k,
                    reason: format!("{msg} (dt too large for the precision magnitudes)"),
                },
                other => other,
            })?);
            gp_cache = Some(gp);
            b1_cache = b1;
            built_s = s;
        }
        let gp = gp_cache.as_ref().expect("cache filled above");
        let upd = upd_cache.as_ref().expect("cache filled above");

        let u = stack_inputs(&y_embedded[k], &v_embedded[k]);
        let xv = upd.apply(x.values(), &b1_cache, &u);
        if !linalg::vec_all_finite(&xv) {
            return Err(Error::Divergence {
                step: k,
                reason: "state estimate became non-finite".to_string(),
            });
        }
        x = GeneralizedVector::new(n, cfg.p, xv)?;
        estimates.row_mut(k + 1).copy_from(&x.block(0).transpose());

        // Smoothness gradients from the freshly updated state against the
        // same sample's embeddings.
        let eps = free_energy::prediction_error(&gsys, &x, &y_embedded[k], &v_embedded[k])?;
        let eval = free_energy::evaluate(&eps, gp, s, &cfg.prior)?;
        f_traj[k + 1] = eval.f;
        if estimate_s {
            s = smoothness_step(s, eval.f_s, eval.f_ss, cfg.dt, (cfg.s_min, cfg.s_max))?;
        }
        s_traj[k + 1] = s;
    }

    let sse = match &dataset.truth {
        Some(truth) => Some(crate::simlab::sse(&estimates, &truth.x)?),
        None => None,
    };
    Ok(TrialResult {
        estimates,
        s_traj: if estimate_s { Some(s_traj) } else { None },
        f_traj: Some(f_traj),
        sse,
    })
}
