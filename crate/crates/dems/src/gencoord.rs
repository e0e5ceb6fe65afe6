//! Generalized coordinates: shift matrices, Kronecker lifts of LTI system
//! matrices, and Taylor embedding of sampled signals into derivative vectors.
//!
//! A signal `u(t)` is represented by the vector of its value and first `q`
//! time derivatives, `ũ = [u, u', u'', …]`, stored derivative-major (all
//! channels of `u`, then all channels of `u'`, …). With that layout a lifted
//! system matrix is a literal Kronecker product `I_{q+1} ⊗ M`.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// Continuous-time LTI plant `ẋ = Ax + Bv + w`, `y = Cx + z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LinearPlant {
    /// Builds a plant, validating that `A` is square `n×n`, `B` has `n` rows,
    /// `C` has `n` columns and every entry is finite.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::dims("A must be square and non-empty"));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::dims("B must have n rows and at least one column"));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::dims("C must have n columns and at least one row"));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if !crate::linalg::all_finite(m) {
                return Err(Error::invalid(format!("{name} contains non-finite entries")));
            }
        }
        Ok(Self { a, b, c })
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `r`.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension `m`.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
}

/// A signal and its first `order` derivatives, flattened derivative-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedVector {
    base_dim: usize,
    order: usize,
    values: DVector<f64>,
}

impl GeneralizedVector {
    /// Wraps a flat vector; its length must be `(order+1) * base_dim`.
    pub fn new(base_dim: usize, order: usize, values: DVector<f64>) -> Result<Self> {
        if base_dim == 0 {
            return Err(Error::invalid("base_dim must be positive"));
        }
        if values.len() != (order + 1) * base_dim {
            return Err(Error::dims(format!(
                "generalized vector length {} != (order+1)*base_dim = {}",
                values.len(),
                (order + 1) * base_dim
            )));
        }
        Ok(Self {
            base_dim,
            order,
            values,
        })
    }

    /// All-zero generalized vector.
    pub fn zeros(base_dim: usize, order: usize) -> Self {
        Self {
            base_dim,
            order,
            values: DVector::zeros((order + 1) * base_dim),
        }
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// View of the `k`-th derivative block (`k = 0` is the signal itself).
    pub fn block(&self, k: usize) -> DVectorView<'_, f64> {
        assert!(k <= self.order, "derivative order out of range");
        self.values.rows(k * self.base_dim, self.base_dim)
    }
}

/// Kronecker-lifted system matrices for embedding orders `(p, d)`.
#[derive(Debug, Clone)]
pub struct GeneralizedSystem {
    plant: LinearPlant,
    p: usize,
    d: usize,
    a_gen: DMatrix<f64>,
    b_gen: DMatrix<f64>,
    c_gen: DMatrix<f64>,
    shift: DMatrix<f64>,
}

impl GeneralizedSystem {
    pub fn plant(&self) -> &LinearPlant {
        &self.plant
    }

    /// State embedding order `p`.
    pub fn state_order(&self) -> usize {
        self.p
    }

    /// Input embedding order `d`.
    pub fn input_order(&self) -> usize {
        self.d
    }

    /// `Ã = I_{p+1} ⊗ A`, size `(p+1)n × (p+1)n`.
    pub fn a_gen(&self) -> &DMatrix<f64> {
        &self.a_gen
    }

    /// `B̃` zero-padded past order `d`, size `(p+1)n × (d+1)r`.
    pub fn b_gen(&self) -> &DMatrix<f64> {
        &self.b_gen
    }

    /// `C̃ = I_{p+1} ⊗ C`, size `(p+1)m × (p+1)n`.
    pub fn c_gen(&self) -> &DMatrix<f64> {
        &self.c_gen
    }

    /// Shift matrix `Dˣ` acting on the generalized state.
    pub fn shift(&self) -> &DMatrix<f64> {
        &self.shift
    }
}

/// Block shift matrix of order `p` with `block_dim`-sized identity blocks on
/// the first superdiagonal.
///
/// Applying it to a generalized vector moves every derivative block up one
/// slot and zeroes the last block, i.e. it differentiates the truncated
/// representation.
pub fn shift_matrix(p: usize, block_dim: usize) -> Result<DMatrix<f64>> {
    if block_dim == 0 {
        return Err(Error::invalid("block_dim must be positive"));
    }
    let n = (p + 1) * block_dim;
    let mut d = DMatrix::<f64>::zeros(n, n);
    for blk in 0..p {
        for i in 0..block_dim {
            d[(blk * block_dim + i, (blk + 1) * block_dim + i)] = 1.0;
        }
    }
    Ok(d)
}

/// Lifts a plant into generalized coordinates with state order `p` and input
/// order `d ≤ p`. Input derivative slots above `d` are zero-padded so the
/// lifted input matrix stays `(p+1)n × (d+1)r`.
pub fn lift_system(plant: &LinearPlant, p: usize, d: usize) -> Result<GeneralizedSystem> {
    if d > p {
        return Err(Error::invalid(format!(
            "input order d={d} must not exceed state order p={p}"
        )));
    }
    let eye = DMatrix::<f64>::identity(p + 1, p + 1);
    let a_gen = eye.kronecker(plant.a());
    let c_gen = eye.kronecker(plant.c());
    // Selector keeping the first d+1 derivative slots.
    let mut sel = DMatrix::<f64>::zeros(p + 1, d + 1);
    for i in 0..=d {
        sel[(i, i)] = 1.0;
    }
    let b_gen = sel.kronecker(plant.b());
    let shift = shift_matrix(p, plant.state_dim())?;
    Ok(GeneralizedSystem {
        plant: plant.clone(),
        p,
        d,
        a_gen,
        b_gen,
        c_gen,
        shift,
    })
}

/// Recovers derivatives at the window sample `center` by inverting the Taylor
/// expansion matrix `E(i,j) = ((i - center) dt)^j / j!`.
///
/// `window` holds one sample per row and one signal channel per column. The
/// result is exact for polynomial signals of degree at most `order`. Windows
/// longer than `order + 1` are solved in the least-squares sense.
pub fn taylor_embed(
    window: &DMatrix<f64>,
    dt: f64,
    order: usize,
    center: usize,
) -> Result<GeneralizedVector> {
    let rows = window.nrows();
    let channels = window.ncols();
    if dt <= 0.0 {
        return Err(Error::invalid("dt must be positive"));
    }
    if channels == 0 {
        return Err(Error::dims("window must have at least one channel"));
    }
    if rows < order + 1 {
        return Err(Error::invalid(format!(
            "window of {rows} samples is too short for embedding order {order}"
        )));
    }
    if center >= rows {
        return Err(Error::invalid("center index outside the window"));
    }

    let e = taylor_matrix(rows, dt, order, center);
    let derivs = if rows == order + 1 {
        e.lu()
            .solve(window)
            .ok_or_else(|| Error::numerical("singular Taylor matrix (repeated sample times)"))?
    } else {
        let svd = e.svd(true, true);
        svd.solve(window, 1e-300)
            .map_err(|m| Error::numerical(format!("Taylor least squares failed: {m}")))?
    };

    // derivs is (order+1) x channels; flatten derivative-major.
    let mut values = DVector::zeros((order + 1) * channels);
    for k in 0..=order {
        for c in 0..channels {
            values[k * channels + c] = derivs[(k, c)];
        }
    }
    GeneralizedVector::new(channels, order, values)
}

fn taylor_matrix(rows: usize, dt: f64, order: usize, center: usize) -> DMatrix<f64> {
    let mut e = DMatrix::<f64>::zeros(rows, order + 1);
    for i in 0..rows {
        let tau = (i as f64 - center as f64) * dt;
        let mut fact = 1.0;
        let mut pow = 1.0;
        for j in 0..=order {
            if j > 0 {
                fact *= j as f64;
                pow *= tau;
            }
            e[(i, j)] = pow / fact;
        }
    }
    e
}

/// Embeds every sample of a uniformly sampled multichannel signal using
/// centered windows of exactly `order + 1` samples; windows are shifted to
/// stay inside the sequence near its boundaries.
pub fn embed_series(
    samples: &DMatrix<f64>,
    dt: f64,
    order: usize,
) -> Result<Vec<GeneralizedVector>> {
    let n = samples.nrows();
    let width = order + 1;
    if n < width {
        return Err(Error::invalid(format!(
            "sequence of {n} samples is too short for embedding order {order}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let start = k.saturating_sub(width / 2).min(n - width);
        let window = samples.rows(start, width).into_owned();
        out.push(taylor_embed(&window, dt, order, k - start)?);
    }
    Ok(out)
}
