//! The free-energy objective and its smoothness gradients.
//!
//! For a combined prediction error `ε̃` and generalized precision `Π̃(s)`,
//!
//! ```text
//! F(s) = -½ ε̃ᵀ Π̃ ε̃ + ½ ln|Π̃| - ½ Πˢ (s - ηˢ)² + ½ ln Πˢ
//! ```
//!
//! where `ηˢ, Πˢ` are the prior smoothness mean and precision. The gradients
//! follow from the entrywise power law of the smoothness matrix, with
//! `∂ln|Π̃|/∂s = K(n+m)/s` and `K = p(p+1)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gencoord::{GeneralizedSystem, GeneralizedVector};
use crate::noise::{log_det_precision_grads, GeneralizedPrecision};

/// Gaussian prior over the smoothness hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessPrior {
    eta_s: f64,
    prec_s: f64,
}

impl SmoothnessPrior {
    pub fn new(eta_s: f64, prec_s: f64) -> Result<Self> {
        if !(prec_s > 0.0) || !prec_s.is_finite() || !eta_s.is_finite() {
            return Err(Error::invalid("prior precision must be positive and finite"));
        }
        Ok(Self { eta_s, prec_s })
    }

    pub fn mean(&self) -> f64 {
        self.eta_s
    }

    pub fn precision(&self) -> f64 {
        self.prec_s
    }
}

/// Low-confidence prior near zero: `ηˢ = 0.001`, `Πˢ = 1`.
impl Default for SmoothnessPrior {
    fn default() -> Self {
        Self {
            eta_s: 0.001,
            prec_s: 1.0,
        }
    }
}

/// One evaluation of the objective: value and first two `s`-derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyEval {
    pub f: f64,
    pub f_s: f64,
    pub f_ss: f64,
}

/// Combined prediction error `ε̃ = [ỹ - C̃ x̃ ; Dˣ x̃ - Ã x̃ - B̃ ṽ]`, output
/// block first.
pub fn prediction_error(
    gsys: &GeneralizedSystem,
    x_gen: &GeneralizedVector,
    y_gen: &GeneralizedVector,
    v_gen: &GeneralizedVector,
) -> Result<DVector<f64>> {
    let p = gsys.state_order();
    let d = gsys.input_order();
    let n = gsys.plant().state_dim();
    let m = gsys.plant().output_dim();
    let r = gsys.plant().input_dim();
    if x_gen.order() != p || x_gen.base_dim() != n {
        return Err(Error::dims("state vector does not match system orders"));
    }
    if y_gen.order() != p || y_gen.base_dim() != m {
        return Err(Error::dims("output vector does not match system orders"));
    }
    if v_gen.order() != d || v_gen.base_dim() != r {
        return Err(Error::dims("input vector does not match system orders"));
    }
    let x = x_gen.values();
    let ez = y_gen.values() - gsys.c_gen() * x;
    let ew = gsys.shift() * x - gsys.a_gen() * x - gsys.b_gen() * v_gen.values();
    let mut eps = DVector::zeros(ez.len() + ew.len());
    eps.rows_mut(0, ez.len()).copy_from(&ez);
    eps.rows_mut(ez.len(), ew.len()).copy_from(&ew);
    Ok(eps)
}

/// Evaluates `F(s)`.
pub fn free_energy(
    eps: &DVector<f64>,
    gp: &GeneralizedPrecision,
    s: f64,
    prior: &SmoothnessPrior,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::invalid("s must be positive"));
    }
    if !crate::linalg::vec_all_finite(eps) {
        return Err(Error::invalid("error vector contains non-finite entries"));
    }
    let quad = gp.quad_form(eps)?;
    let eps_s = s - prior.eta_s;
    Ok(-0.5 * quad + 0.5 * gp.log_det()? - 0.5 * prior.prec_s * eps_s * eps_s
        + 0.5 * prior.prec_s.ln())
}

/// First and second derivatives of `F` with respect to `s`:
///
/// ```text
/// F_s  = -½ ε̃ᵀ Π̃_s ε̃  + ½ K(n+m)/s  - Πˢ(s - ηˢ)
/// F_ss = -½ ε̃ᵀ Π̃_ss ε̃ - ½ K(n+m)/s² - Πˢ
/// ```
pub fn free_energy_grads(
    eps: &DVector<f64>,
    gp: &GeneralizedPrecision,
    s: f64,
    prior: &SmoothnessPrior,
) -> Result<(f64, f64)> {
    if !(s > 0.0) {
        return Err(Error::invalid("s must be positive"));
    }
    let (ld_s, ld_ss) = log_det_precision_grads(gp.order(), s, gp.state_dim(), gp.output_dim())?;
    let f_s = -0.5 * gp.quad_form_grad(eps)? + 0.5 * ld_s - prior.prec_s * (s - prior.eta_s);
    let f_ss = -0.5 * gp.quad_form_hess(eps)? + 0.5 * ld_ss - prior.prec_s;
    Ok((f_s, f_ss))
}

/// Evaluates `F`, `F_s` and `F_ss` in one call.
pub fn evaluate(
    eps: &DVector<f64>,
    gp: &GeneralizedPrecision,
    s: f64,
    prior: &SmoothnessPrior,
) -> Result<FreeEnergyEval> {
    let f = free_energy(eps, gp, s, prior)?;
    let (f_s, f_ss) = free_energy_grads(eps, gp, s, prior)?;
    Ok(FreeEnergyEval { f, f_s, f_ss })
}

/// Left-minus-right of the stationarity condition,
/// `½ ε̃ᵀ Π̃_s ε̃ - K(n+m)/(2s) + Πˢ(s - ηˢ)`; zero exactly where `F_s = 0`.
pub fn stationarity_residual(
    eps: &DVector<f64>,
    gp: &GeneralizedPrecision,
    s: f64,
    prior: &SmoothnessPrior,
) -> Result<f64> {
    let (f_s, _) = free_energy_grads(eps, gp, s, prior)?;
    Ok(-f_s)
}
