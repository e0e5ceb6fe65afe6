//! Colored-noise generation and the smoothness precision structure.
//!
//! Noise is modelled as white Gaussian noise convolved with a Gaussian kernel
//! of width `s` seconds, which induces the autocorrelation
//! `ρ(h) = exp(-h² / (4 s²))`. Stationarity then fixes the covariance between
//! noise derivatives, `Cov(u⁽ⁱ⁾, u⁽ʲ⁾) = (-1)ⁱ ρ⁽ⁱ⁺ʲ⁾(0)`, and the smoothness
//! matrix `S(s)` is the inverse of that derivative covariance. Entry `(i, j)`
//! of `S` scales as `s^{i+j}`, which gives closed forms for `∂S/∂s`,
//! `∂²S/∂s²` and the determinant.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

/// Noise description: kernel width, channel precisions and a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    s: f64,
    prec_w: DMatrix<f64>,
    prec_z: DMatrix<f64>,
    seed: u64,
}

/// Which noise channel of a [`NoiseSpec`] to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseChannel {
    Process,
    Measurement,
}

impl NoiseSpec {
    /// Validates `s > 0` and that both precisions are symmetric positive
    /// definite.
    pub fn new(s: f64, prec_w: DMatrix<f64>, prec_z: DMatrix<f64>, seed: u64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid("kernel width s must be positive"));
        }
        if !linalg::is_spd(&prec_w, 1e-10) {
            return Err(Error::invalid("process precision must be SPD"));
        }
        if !linalg::is_spd(&prec_z, 1e-10) {
            return Err(Error::invalid("measurement precision must be SPD"));
        }
        Ok(Self {
            s,
            prec_w,
            prec_z,
            seed,
        })
    }

    /// Isotropic precisions `prec_w·I_n`, `prec_z·I_m`.
    pub fn isotropic(s: f64, prec_w: f64, n: usize, prec_z: f64, m: usize, seed: u64) -> Result<Self> {
        Self::new(
            s,
            DMatrix::identity(n, n) * prec_w,
            DMatrix::identity(m, m) * prec_z,
            seed,
        )
    }

    pub fn kernel_width(&self) -> f64 {
        self.s
    }

    pub fn prec_w(&self) -> &DMatrix<f64> {
        &self.prec_w
    }

    pub fn prec_z(&self) -> &DMatrix<f64> {
        &self.prec_z
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Copy with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// `S(s)` together with `∂S/∂s` and `∂²S/∂s²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessPrecision {
    p: usize,
    s: f64,
    s_mat: DMatrix<f64>,
    s_grad: DMatrix<f64>,
    s_hess: DMatrix<f64>,
}

impl SmoothnessPrecision {
    pub fn order(&self) -> usize {
        self.p
    }

    pub fn kernel_width(&self) -> f64 {
        self.s
    }

    /// The smoothness matrix `S(s)`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s_mat
    }

    /// `∂S/∂s`.
    pub fn grad(&self) -> &DMatrix<f64> {
        &self.s_grad
    }

    /// `∂²S/∂s²`.
    pub fn hess(&self) -> &DMatrix<f64> {
        &self.s_hess
    }
}

/// Block generalized precision `Π̃ = diag(S ⊗ Πᶻ, S ⊗ Πʷ)` with its first and
/// second `s`-derivative blocks.
#[derive(Debug, Clone)]
pub struct GeneralizedPrecision {
    sp: SmoothnessPrecision,
    prec_w: DMatrix<f64>,
    prec_z: DMatrix<f64>,
    log_det_prec_w: f64,
    log_det_prec_z: f64,
}

impl GeneralizedPrecision {
    pub fn smoothness(&self) -> &SmoothnessPrecision {
        &self.sp
    }

    pub fn order(&self) -> usize {
        self.sp.p
    }

    pub fn state_dim(&self) -> usize {
        self.prec_w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.prec_z.nrows()
    }

    /// Measurement block `S ⊗ Πᶻ`, size `(p+1)m` square.
    pub fn block_z(&self) -> DMatrix<f64> {
        self.sp.s_mat.kronecker(&self.prec_z)
    }

    /// Process block `S ⊗ Πʷ`, size `(p+1)n` square.
    pub fn block_w(&self) -> DMatrix<f64> {
        self.sp.s_mat.kronecker(&self.prec_w)
    }

    /// `∂/∂s` of the measurement block.
    pub fn block_z_grad(&self) -> DMatrix<f64> {
        self.sp.s_grad.kronecker(&self.prec_z)
    }

    /// `∂/∂s` of the process block.
    pub fn block_w_grad(&self) -> DMatrix<f64> {
        self.sp.s_grad.kronecker(&self.prec_w)
    }

    /// `∂²/∂s²` of the measurement block.
    pub fn block_z_hess(&self) -> DMatrix<f64> {
        self.sp.s_hess.kronecker(&self.prec_z)
    }

    /// `∂²/∂s²` of the process block.
    pub fn block_w_hess(&self) -> DMatrix<f64> {
        self.sp.s_hess.kronecker(&self.prec_w)
    }

    /// Full block-diagonal `Π̃` (measurement block first).
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let z = self.block_z();
        let w = self.block_w();
        let nz = z.nrows();
        let nw = w.nrows();
        let mut full = DMatrix::zeros(nz + nw, nz + nw);
        full.view_mut((0, 0), (nz, nz)).copy_from(&z);
        full.view_mut((nz, nz), (nw, nw)).copy_from(&w);
        full
    }

    /// `ln |Π̃| = (p+1)(ln|Πᶻ| + ln|Πʷ|) + (n+m) ln|S|`.
    pub fn log_det(&self) -> Result<f64> {
        let p = self.sp.p;
        let nm = (self.state_dim() + self.output_dim()) as f64;
        Ok((p as f64 + 1.0) * (self.log_det_prec_z + self.log_det_prec_w)
            + nm * log_det_s(p, self.sp.s)?)
    }

    /// Blockwise quadratic form `ε̃ᵀ (W ⊗ Π) ε̃` where `eps` is laid out
    /// derivative-major with the measurement block first.
    fn quad(&self, eps: &DVector<f64>, weight: &DMatrix<f64>) -> Result<f64> {
        let p1 = self.sp.p + 1;
        let m = self.output_dim();
        let n = self.state_dim();
        if eps.len() != p1 * (m + n) {
            return Err(Error::dims(format!(
                "error vector length {} != (p+1)(m+n) = {}",
                eps.len(),
                p1 * (m + n)
            )));
        }
        let ez = eps.rows(0, p1 * m);
        let ew = eps.rows(p1 * m, p1 * n);
        // eps^T (W ⊗ Π) eps = Σ_{i,j} W(i,j) · block_iᵀ Π block_j
        let mut acc = 0.0;
        for i in 0..p1 {
            for j in 0..p1 {
                let wij = weight[(i, j)];
                if wij == 0.0 {
                    continue;
                }
                let zi = ez.rows(i * m, m);
                let zj = ez.rows(j * m, m);
                acc += wij * (zi.transpose() * &self.prec_z * zj)[(0, 0)];
                let wi = ew.rows(i * n, n);
                let wj = ew.rows(j * n, n);
                acc += wij * (wi.transpose() * &self.prec_w * wj)[(0, 0)];
            }
        }
        Ok(acc)
    }

    /// `ε̃ᵀ Π̃ ε̃`.
    pub fn quad_form(&self, eps: &DVector<f64>) -> Result<f64> {
        self.quad(eps, &self.sp.s_mat)
    }

    /// `ε̃ᵀ (∂Π̃/∂s) ε̃`.
    pub fn quad_form_grad(&self, eps: &DVector<f64>) -> Result<f64> {
        self.quad(eps, &self.sp.s_grad)
    }

    /// `ε̃ᵀ (∂²Π̃/∂s²) ε̃`.
    pub fn quad_form_hess(&self, eps: &DVector<f64>) -> Result<f64> {
        self.quad(eps, &self.sp.s_hess)
    }
}

/// Derivatives of the Gaussian autocorrelation `ρ(h) = exp(-h²/(4s²))` at
/// `h = 0`, orders `0..=max_order`.
///
/// Even orders are `ρ⁽²ᵏ⁾(0) = (-1)ᵏ (2k-1)!! / (2s²)ᵏ`; odd orders vanish.
pub fn autocorr_derivatives(s: f64, max_order: usize) -> Result<Vec<f64>> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("kernel width s must be positive"));
    }
    let a = 1.0 / (2.0 * s * s);
    let mut out = Vec::with_capacity(max_order + 1);
    for k in 0..=max_order {
        if k % 2 == 1 {
            out.push(0.0);
        } else {
            let half = k / 2;
            let sign = if half % 2 == 0 { 1.0 } else { -1.0 };
            out.push(sign * double_factorial_odd(half) * a.powi(half as i32));
        }
    }
    Ok(out)
}

/// `(2k-1)!!` with the empty-product convention for `k = 0`.
fn double_factorial_odd(k: usize) -> f64 {
    let mut acc = 1.0;
    let mut v = 2 * k as i64 - 1;
    while v > 1 {
        acc *= v as f64;
        v -= 2;
    }
    acc
}

/// Covariance between noise derivatives up to order `p`:
/// `C(i,j) = (-1)ⁱ ρ⁽ⁱ⁺ʲ⁾(0)`, zero whenever `i+j` is odd.
pub fn derivative_covariance(p: usize, s: f64) -> Result<DMatrix<f64>> {
    let rho = autocorr_derivatives(s, 2 * p)?;
    let mut c = DMatrix::zeros(p + 1, p + 1);
    for i in 0..=p {
        for j in 0..=p {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            c[(i, j)] = sign * rho[i + j];
        }
    }
    Ok(c)
}

/// Derivative covariance at the reference scale `2s² = 1`, entrywise
/// `(-1)ⁱ (-1)^((i+j)/2) (i+j-1)!!` for even `i+j`.
fn normalized_covariance(p: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(p + 1, p + 1);
    for i in 0..=p {
        for j in 0..=p {
            if (i + j) % 2 == 0 {
                let half = (i + j) / 2;
                let mut sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                if half % 2 == 1 {
                    sign = -sign;
                }
                c[(i, j)] = sign * double_factorial_odd(half);
            }
        }
    }
    c
}

/// Builds `S(s)` (the inverse derivative covariance) with its first two
/// `s`-derivatives.
///
/// The covariance is inverted once at the reference scale `2s² = 1` and then
/// rescaled entrywise by `(√2 s)^{i+j}`; the rescaling is exact because every
/// entry of the covariance is a pure power of `s`, and it keeps the inversion
/// well conditioned for any `s`. The derivative matrices follow from the same
/// scaling law: `S_s(i,j) = (i+j) S(i,j)/s`, `S_ss(i,j) = (i+j)(i+j-1) S(i,j)/s²`.
pub fn smoothness_precision(p: usize, s: f64) -> Result<SmoothnessPrecision> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("kernel width s must be positive"));
    }
    let base = normalized_covariance(p)
        .try_inverse()
        .ok_or_else(|| Error::numerical("derivative covariance is singular"))?;
    let scale = std::f64::consts::SQRT_2 * s;
    let mut s_mat = DMatrix::zeros(p + 1, p + 1);
    let mut s_grad = DMatrix::zeros(p + 1, p + 1);
    let mut s_hess = DMatrix::zeros(p + 1, p + 1);
    for i in 0..=p {
        for j in 0..=p {
            let k = (i + j) as f64;
            let v = base[(i, j)] * scale.powi((i + j) as i32);
            s_mat[(i, j)] = v;
            s_grad[(i, j)] = k * v / s;
            s_hess[(i, j)] = k * (k - 1.0) * v / (s * s);
        }
    }
    if !linalg::all_finite(&s_mat) || !linalg::all_finite(&s_hess) {
        return Err(Error::numerical(format!(
            "smoothness matrix overflowed at p={p}, s={s}"
        )));
    }
    Ok(SmoothnessPrecision {
        p,
        s,
        s_mat,
        s_grad,
        s_hess,
    })
}

/// Assembles the generalized precision from a smoothness structure and the
/// channel precisions of a [`NoiseSpec`].
pub fn generalized_precision(sp: SmoothnessPrecision, noise: &NoiseSpec) -> Result<GeneralizedPrecision> {
    generalized_precision_parts(sp, noise.prec_w(), noise.prec_z())
}

/// As [`generalized_precision`] but with explicit precision matrices.
pub fn generalized_precision_parts(
    sp: SmoothnessPrecision,
    prec_w: &DMatrix<f64>,
    prec_z: &DMatrix<f64>,
) -> Result<GeneralizedPrecision> {
    if !linalg::is_spd(prec_w, 1e-10) || !linalg::is_spd(prec_z, 1e-10) {
        return Err(Error::invalid("noise precisions must be SPD"));
    }
    let log_det_prec_w = linalg::log_det_spd(prec_w)?;
    let log_det_prec_z = linalg::log_det_spd(prec_z)?;
    Ok(GeneralizedPrecision {
        sp,
        prec_w: prec_w.clone(),
        prec_z: prec_z.clone(),
        log_det_prec_w,
        log_det_prec_z,
    })
}

/// `(∂ ln|Π̃|/∂s, ∂² ln|Π̃|/∂s²) = (K(n+m)/s, -K(n+m)/s²)` with `K = p(p+1)`.
pub fn log_det_precision_grads(p: usize, s: f64, n: usize, m: usize) -> Result<(f64, f64)> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("kernel width s must be positive"));
    }
    let k = (p * (p + 1)) as f64;
    let nm = (n + m) as f64;
    Ok((k * nm / s, -k * nm / (s * s)))
}

/// `ln det S(p, s)`; the determinant is a pure power `det S ∝ s^{p(p+1)}`.
pub fn log_det_s(p: usize, s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid("kernel width s must be positive"));
    }
    let base = normalized_covariance(p);
    let det_base = base
        .lu()
        .determinant();
    if det_base <= 0.0 {
        return Err(Error::numerical("derivative covariance is not PD"));
    }
    let k = (p * (p + 1)) as f64;
    // det S = det(C₁)⁻¹ (√2 s)^{p(p+1)}
    Ok(-det_base.ln() + k * (std::f64::consts::SQRT_2 * s).ln())
}

/// Draws a colored Gaussian sequence: i.i.d. samples with the covariance
/// implied by the selected precision, convolved per channel with a Gaussian
/// kernel `exp(-t²/(2s²))` sampled on the `dt` grid, truncated at `±6s` and
/// normalized to unit L2 energy so filtering preserves the marginal variance.
///
/// Deterministic for a given seed; the process and measurement channels use
/// independent substreams. Rows are samples, columns are channels.
pub fn generate_colored_noise(
    count: usize,
    dt: f64,
    noise: &NoiseSpec,
    which: NoiseChannel,
) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let (prec, stream) = match which {
        NoiseChannel::Process => (noise.prec_w(), 1),
        NoiseChannel::Measurement => (noise.prec_z(), 2),
    };
    let dim = prec.nrows();
    let cov = prec
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("precision is not invertible"))?;
    let chol = linalg::symmetrize(&cov)
        .cholesky()
        .ok_or_else(|| Error::numerical("covariance is not positive definite"))?;
    let l = chol.l();

    let kernel = gaussian_kernel(noise.kernel_width(), dt);
    let half = kernel.len() / 2;
    let total = count + 2 * half;

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed());
    rng.set_stream(stream);
    let mut white = DMatrix::<f64>::zeros(total, dim);
    for r in 0..total {
        let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let colored = &l * g;
        white.row_mut(r).copy_from(&colored.transpose());
    }

    let mut out = DMatrix::<f64>::zeros(count, dim);
    for c in 0..dim {
        for r in 0..count {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * white[(r + k, c)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Gaussian kernel sampled at `dt`, truncated at `±6s`, unit L2 energy.
fn gaussian_kernel(s: f64, dt: f64) -> Vec<f64> {
    let half = ((6.0 * s / dt).ceil() as usize).max(1);
    let mut k: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let t = (i as f64 - half as f64) * dt;
            (-t * t / (2.0 * s * s)).exp()
        })
        .collect();
    let energy: f64 = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut k {
        *v /= energy;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// The published p=6 smoothness matrix, entrywise in `s`.
    pub(crate) fn reference_s_matrix(s: f64) -> DMatrix<f64> {
        let s2 = s * s;
        let s4 = s2 * s2;
        let s6 = s4 * s2;
        let s8 = s4 * s4;
        let s10 = s8 * s2;
        let s12 = s8 * s4;
        DMatrix::from_row_slice(
            7,
            7,
            &[
                35.0 / 16.0, 0.0, 35.0 / 8.0 * s2, 0.0, 7.0 / 4.0 * s4, 0.0, s6 / 6.0,
                0.0, 35.0 / 4.0 * s2, 0.0, 7.0 * s4, 0.0, s6, 0.0,
                35.0 / 8.0 * s2, 0.0, 77.0 / 4.0 * s4, 0.0, 19.0 / 2.0 * s6, 0.0, s8,
                0.0, 7.0 * s4, 0.0, 8.0 * s6, 0.0, 4.0 / 3.0 * s8, 0.0,
                7.0 / 4.0 * s4, 0.0, 19.0 / 2.0 * s6, 0.0, 17.0 / 3.0 * s8, 0.0, 2.0 / 3.0 * s10,
                0.0, s6, 0.0, 4.0 / 3.0 * s8, 0.0, 4.0 / 15.0 * s10, 0.0,
                s6 / 6.0, 0.0, s8, 0.0, 2.0 / 3.0 * s10, 0.0, 4.0 / 45.0 * s12,
            ],
        )
    }

    #[test]
    fn autocorr_normalization_and_low_orders() {
        for s in [0.1, 0.5, 2.0] {
            let rho = autocorr_derivatives(s, 4).unwrap();
            assert_eq!(rho[0], 1.0);
            assert_eq!(rho[1], 0.0);
            assert_eq!(rho[3], 0.0);
        }
        // Second derivative at s = 0.5: -1/(2 s²) = -2.
        let rho = autocorr_derivatives(0.5, 2).unwrap();
        assert_relative_eq!(rho[2], -2.0, max_relative = 1e-14);
        // Fourth derivative at s = 1: 3/(2 s²)² = 3/4.
        let rho = autocorr_derivatives(1.0, 4).unwrap();
        assert_relative_eq!(rho[4], 0.75, max_relative = 1e-14);
    }

    #[test]
    fn autocorr_rejects_nonpositive_width() {
        assert!(autocorr_derivatives(0.0, 2).is_err());
        assert!(autocorr_derivatives(-1.0, 2).is_err());
    }

    #[test]
    fn derivative_covariance_low_orders() {
        let s = 0.7;
        let a = 1.0 / (2.0 * s * s);
        let c = derivative_covariance(1, s).unwrap();
        assert_relative_eq!(c[(0, 0)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(c[(1, 1)], a, max_relative = 1e-14);
        assert_eq!(c[(0, 1)], 0.0);

        let c = derivative_covariance(2, s).unwrap();
        assert_relative_eq!(c[(0, 2)], -a, max_relative = 1e-14);
        assert_relative_eq!(c[(1, 1)], a, max_relative = 1e-14);
        assert_relative_eq!(c[(2, 2)], 3.0 * a * a, max_relative = 1e-14);
    }

    #[test]
    fn derivative_covariance_is_symmetric() {
        let c = derivative_covariance(6, 0.3).unwrap();
        assert!((&c - c.transpose()).norm() < 1e-12);
    }

    #[test]
    fn smoothness_matrix_matches_published_p6_form() {
        for s in [0.1, 0.5, 1.0] {
            let sp = smoothness_precision(6, s).unwrap();
            let reference = reference_s_matrix(s);
            for i in 0..7 {
                for j in 0..7 {
                    let want = reference[(i, j)];
                    let got = sp.matrix()[(i, j)];
                    if want == 0.0 {
                        assert_eq!(got, 0.0, "entry ({i},{j}) at s={s}");
                    } else {
                        assert_relative_eq!(got, want, max_relative = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn smoothness_matrix_small_orders() {
        // p = 0: scalar unit-variance noise.
        let sp = smoothness_precision(0, 0.4).unwrap();
        assert_eq!(sp.matrix().nrows(), 1);
        assert_relative_eq!(sp.matrix()[(0, 0)], 1.0, max_relative = 1e-14);

        // p = 2 closed form.
        let s = 0.6;
        let sp = smoothness_precision(2, s).unwrap();
        let expect = DMatrix::from_row_slice(
            3,
            3,
            &[
                1.5, 0.0, s * s,
                0.0, 2.0 * s * s, 0.0,
                s * s, 0.0, 2.0 * s.powi(4),
            ],
        );
        assert!((sp.matrix() - expect).norm() < 1e-12);
    }

    #[test]
    fn smoothness_scaling_law() {
        for lambda in [0.5, 2.0] {
            for p in [1usize, 3, 6] {
                let s0 = 0.37;
                let a = smoothness_precision(p, s0).unwrap();
                let b = smoothness_precision(p, lambda * s0).unwrap();
                for i in 0..=p {
                    for j in 0..=p {
                        let want = a.matrix()[(i, j)] * lambda.powi((i + j) as i32);
                        assert_relative_eq!(
                            b.matrix()[(i, j)],
                            want,
                            max_relative = 1e-12,
                            epsilon = 1e-300
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn smoothness_derivatives_match_finite_differences() {
        let p = 6;
        let s = 0.45;
        let h = 1e-5;
        let sp = smoothness_precision(p, s).unwrap();
        let plus = smoothness_precision(p, s + h).unwrap();
        let minus = smoothness_precision(p, s - h).unwrap();
        let fd_grad = (plus.matrix() - minus.matrix()) / (2.0 * h);
        let fd_hess = (plus.matrix() + minus.matrix() - 2.0 * sp.matrix()) / (h * h);
        for i in 0..=p {
            for j in 0..=p {
                if sp.matrix()[(i, j)] == 0.0 {
                    continue;
                }
                assert_relative_eq!(sp.grad()[(i, j)], fd_grad[(i, j)], max_relative = 1e-5);
                assert_relative_eq!(sp.hess()[(i, j)], fd_hess[(i, j)], max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn determinant_matches_published_power_law() {
        for s in [0.2, 0.8, 1.0] {
            let sp = smoothness_precision(6, s).unwrap();
            let det = sp.matrix().clone().lu().determinant();
            let want = 512.0 / 6075.0 * s.powi(42);
            assert_relative_eq!(det, want, max_relative = 1e-8);
        }
    }

    #[test]
    fn log_det_s_values() {
        // p = 6, s = 1: ln(512/6075).
        let v = log_det_s(6, 1.0).unwrap();
        assert_relative_eq!(v, (512.0f64 / 6075.0).ln(), max_relative = 1e-12);
        // Pure power law in s: difference is 42 ln s.
        let s = 0.37;
        assert_relative_eq!(
            log_det_s(6, s).unwrap() - log_det_s(6, 1.0).unwrap(),
            42.0 * s.ln(),
            max_relative = 1e-12
        );
        // p = 2, s = 1: det = 4 s⁶ → ln 4.
        assert_relative_eq!(log_det_s(2, 1.0).unwrap(), 4.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn log_det_grads_closed_form() {
        let (g1, g2) = log_det_precision_grads(6, 0.5, 2, 4).unwrap();
        assert_relative_eq!(g1, 504.0, max_relative = 1e-14);
        assert_relative_eq!(g2, -1008.0, max_relative = 1e-14);
        // 42(n+m)/s for any dimensions at p = 6.
        let (g1, _) = log_det_precision_grads(6, 0.21, 3, 5).unwrap();
        assert_relative_eq!(g1, 42.0 * 8.0 / 0.21, max_relative = 1e-14);
        // p = 0: |S| is constant.
        assert_eq!(log_det_precision_grads(0, 0.5, 2, 4).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn log_det_grads_match_finite_differences() {
        let (p, n, m, s) = (6, 2, 4, 0.43);
        let h = 1e-6;
        let noise = NoiseSpec::isotropic(s, 6.0f64.exp(), n, 6.0f64.exp(), m, 0).unwrap();
        let ld = |sv: f64| {
            let gp = generalized_precision(smoothness_precision(p, sv).unwrap(), &noise).unwrap();
            gp.log_det().unwrap()
        };
        let fd = (ld(s + h) - ld(s - h)) / (2.0 * h);
        let (g1, g2) = log_det_precision_grads(p, s, n, m).unwrap();
        assert_relative_eq!(g1, fd, max_relative = 1e-6);
        let fd2 = (ld(s + h) + ld(s - h) - 2.0 * ld(s)) / (h * h);
        assert_relative_eq!(g2, fd2, max_relative = 1e-3);
    }

    #[test]
    fn generalized_precision_p0_is_block_identity_scale() {
        let e6 = 6.0f64.exp();
        let noise = NoiseSpec::isotropic(0.5, e6, 2, e6, 4, 0).unwrap();
        let gp = generalized_precision(smoothness_precision(0, 0.5).unwrap(), &noise).unwrap();
        let full = gp.full_matrix();
        assert_eq!(full.shape(), (6, 6));
        assert!((full - DMatrix::identity(6, 6) * e6).norm() < 1e-10);
    }

    #[test]
    fn generalized_precision_dimensions_and_positivity() {
        let e6 = 6.0f64.exp();
        let noise = NoiseSpec::isotropic(0.5, e6, 2, e6, 4, 0).unwrap();
        let gp = generalized_precision(smoothness_precision(6, 0.5).unwrap(), &noise).unwrap();
        let full = gp.full_matrix();
        assert_eq!(full.shape(), (42, 42));
        assert!(linalg::min_symmetric_eigenvalue(&full) > 0.0);
    }

    #[test]
    fn quad_forms_match_dense_evaluation() {
        let noise = NoiseSpec::isotropic(0.4, 3.0, 2, 5.0, 4, 0).unwrap();
        let gp = generalized_precision(smoothness_precision(6, 0.4).unwrap(), &noise).unwrap();
        let eps = DVector::from_fn(42, |i, _| ((i * 7 % 13) as f64 - 6.0) / 10.0);
        let dense = (&eps.transpose() * gp.full_matrix() * &eps)[(0, 0)];
        assert_relative_eq!(gp.quad_form(&eps).unwrap(), dense, max_relative = 1e-12);

        let mut full_grad = DMatrix::zeros(42, 42);
        full_grad
            .view_mut((0, 0), (28, 28))
            .copy_from(&gp.block_z_grad());
        full_grad
            .view_mut((28, 28), (14, 14))
            .copy_from(&gp.block_w_grad());
        let dense_grad = (&eps.transpose() * full_grad * &eps)[(0, 0)];
        assert_relative_eq!(gp.quad_form_grad(&eps).unwrap(), dense_grad, max_relative = 1e-12);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let noise = NoiseSpec::isotropic(0.5, 1.0, 2, 1.0, 3, 42).unwrap();
        let a = generate_colored_noise(100, 0.05, &noise, NoiseChannel::Process).unwrap();
        let b = generate_colored_noise(100, 0.05, &noise, NoiseChannel::Process).unwrap();
        assert_eq!(a, b);
        let z = generate_colored_noise(100, 0.05, &noise, NoiseChannel::Measurement).unwrap();
        assert_ne!(a, z);
    }

    #[test]
    fn near_white_noise_has_small_lag_one_autocorrelation() {
        let dt = 0.05;
        let noise = NoiseSpec::isotropic(dt / 10.0, 1.0, 1, 1.0, 1, 7).unwrap();
        let x = generate_colored_noise(100_000, dt, &noise, NoiseChannel::Process).unwrap();
        let n = x.nrows();
        let mean = x.column(0).sum() / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let d = x[(i, 0)] - mean;
            den += d * d;
            if i + 1 < n {
                num += d * (x[(i + 1, 0)] - mean);
            }
        }
        assert!((num / den).abs() < 0.1, "lag-1 autocorrelation {}", num / den);
    }

    #[test]
    fn unit_energy_kernel_preserves_variance() {
        let noise = NoiseSpec::isotropic(0.5, 4.0, 1, 1.0, 1, 3).unwrap();
        let x = generate_colored_noise(100_000, 0.05, &noise, NoiseChannel::Process).unwrap();
        let n = x.nrows() as f64;
        let mean = x.column(0).sum() / n;
        let var = x.column(0).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        // Target variance 1/4 within 5%.
        assert!((var - 0.25).abs() < 0.05 * 0.25, "variance {var}");
    }

    #[test]
    fn empirical_autocorrelation_matches_gaussian_form() {
        let s = 0.4;
        let dt = 0.05;
        let n = 100_000usize;
        let noise = NoiseSpec::isotropic(s, 1.0, 1, 1.0, 1, 11).unwrap();
        let x = generate_colored_noise(n, dt, &noise, NoiseChannel::Process).unwrap();
        let mean = x.column(0).sum() / n as f64;
        let var = x.column(0).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        // Bartlett-style standard error with the theoretical correlation.
        let rho_theory = |h: f64| (-h * h / (4.0 * s * s)).exp();
        let mut rho_sq_sum = 0.0;
        let mut k = 0;
        loop {
            let r = rho_theory(k as f64 * dt);
            if r < 1e-6 {
                break;
            }
            rho_sq_sum += if k == 0 { r * r } else { 2.0 * r * r };
            k += 1;
        }
        let se = (rho_sq_sum / n as f64).sqrt();
        for lag in [1usize, 2, 4] {
            let mut acc = 0.0;
            for i in 0..n - lag {
                acc += (x[(i, 0)] - mean) * (x[(i + lag, 0)] - mean);
            }
            let rho_hat = acc / ((n - lag) as f64 * var);
            let want = rho_theory(lag as f64 * dt);
            assert!(
                (rho_hat - want).abs() < 3.0 * se,
                "lag {lag}: got {rho_hat}, want {want}, se {se}"
            );
        }
    }

    #[test]
    fn noise_spec_rejects_bad_inputs() {
        assert!(NoiseSpec::isotropic(0.0, 1.0, 1, 1.0, 1, 0).is_err());
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(NoiseSpec::new(0.5, not_pd, DMatrix::identity(1, 1), 0).is_err());
    }
}
