//! Gaussian variational family in square-root parameterization.
//!
//! The variational state is a mean vector together with a lower-triangular
//! Cholesky factor `C` of the covariance `V = C * C^T`. The module also
//! provides the natural-parameter view (mean + precision), entropy / KL
//! evaluation, and the `tril` operator that halves the diagonal.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Hard floor for Cholesky diagonal entries. Entries at or below this value
/// indicate a degenerate covariance and are surfaced as errors, never clamped.
pub const DIAG_FLOOR: f64 = 1e-12;

const LN_2PI: f64 = 1.8378770664093453;

/// Lower-triangular part of `a` with the diagonal halved and the strict
/// upper triangle zeroed.
pub fn tril_half_diag(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "tril_half_diag requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let d = a.nrows();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        out[(j, j)] = 0.5 * a[(j, j)];
        for i in (j + 1)..d {
            out[(i, j)] = a[(i, j)];
        }
    }
    Ok(out)
}

/// Plain lower-triangular extraction (full diagonal kept, strict upper zeroed).
pub fn tril_full_diag(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows().min(a.ncols());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    for j in 0..d {
        for i in j..a.nrows() {
            out[(i, j)] = a[(i, j)];
        }
    }
    out
}

/// Replace `a` by its symmetric part `(a + a^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Variational Gaussian state `(m, C)` with `V = C C^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl GaussianParams {
    /// Validates and stores the state. The factor must be square, match the
    /// mean length, be lower-triangular, and have diagonal entries above
    /// [`DIAG_FLOOR`].
    pub fn new(mean: DVector<f64>, chol: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Dimension("dimension must be at least 1".into()));
        }
        if chol.nrows() != d || chol.ncols() != d {
            return Err(Error::Dimension(format!(
                "mean has length {d} but factor is {}x{}",
                chol.nrows(),
                chol.ncols()
            )));
        }
        for j in 0..d {
            for i in 0..j {
                if chol[(i, j)] != 0.0 {
                    return Err(Error::Dimension(format!(
                        "factor entry ({i},{j}) above the diagonal is nonzero"
                    )));
                }
            }
            let v = chol[(j, j)];
            if !(v > DIAG_FLOOR) {
                return Err(Error::DiagonalCollapse {
                    index: j,
                    value: v,
                    floor: DIAG_FLOOR,
                });
            }
        }
        Ok(Self { mean, chol })
    }

    /// Standard normal state of dimension `d`.
    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity factor is valid")
    }

    /// State `(m0, c0 * I)` as used for theory-checked initializations.
    pub fn isotropic(mean: DVector<f64>, c0: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * c0)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Covariance `V = C C^T`, symmetrized against floating-point drift.
    pub fn covariance(&self) -> DMatrix<f64> {
        symmetrize(&(&self.chol * self.chol.transpose()))
    }

    /// Precision `V^{-1}` via triangular solves with the stored factor.
    pub fn precision(&self) -> DMatrix<f64> {
        let d = self.dim();
        // V^{-1} = C^{-T} C^{-1}
        let inv_c = self
            .chol
            .clone()
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .expect("factor diagonal is positive");
        symmetrize(&(inv_c.transpose() * inv_c))
    }

    /// log det V = 2 * sum log C_ii.
    pub fn log_det_cov(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.chol[(i, i)].ln()).sum::<f64>()
    }

    /// `E_q[log q] = -(d/2)(1 + log 2 pi) - sum_i log C_ii`.
    pub fn neg_entropy(&self) -> f64 {
        let d = self.dim() as f64;
        -0.5 * d * (1.0 + LN_2PI) - 0.5 * self.log_det_cov()
    }

    /// Convert to the natural-parameter view `(m, S = V^{-1})`.
    pub fn to_natural(&self) -> NaturalState {
        NaturalState::new(self.mean.clone(), self.precision())
            .expect("precision of a valid factor is positive definite")
    }
}

/// `KL[q || p]` for two Gaussians given by their square-root states.
pub fn gaussian_kl(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    let d = q.dim();
    if p.dim() != d {
        return Err(Error::Dimension(format!(
            "KL between dimensions {d} and {}",
            p.dim()
        )));
    }
    // tr(Vp^{-1} Vq) = ||Cp^{-1} Cq||_F^2, (mp-mq)^T Vp^{-1} (mp-mq) = ||Cp^{-1} (mp-mq)||^2
    let w = p
        .chol
        .clone()
        .solve_lower_triangular(&q.chol)
        .expect("factor diagonal is positive");
    let trace_term = w.iter().map(|x| x * x).sum::<f64>();
    let dm = p.mean() - q.mean();
    let z = p
        .chol
        .clone()
        .solve_lower_triangular(&dm)
        .expect("factor diagonal is positive");
    let maha = z.norm_squared();
    Ok(0.5 * (trace_term + maha - d as f64 + p.log_det_cov() - q.log_det_cov()))
}

/// Natural-parameter Gaussian state `(m, S)` with `S = V^{-1}` symmetric
/// positive definite. Symmetrized on construction; positive definiteness is
/// certified by a successful Cholesky factorization.
#[derive(Debug, Clone)]
pub struct NaturalState {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

impl NaturalState {
    pub fn new(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::Dimension(format!(
                "mean has length {d} but precision is {}x{}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        let precision = symmetrize(&precision);
        if precision.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(
                "precision matrix failed Cholesky factorization".into(),
            ));
        }
        Ok(Self { mean, precision })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// Covariance `S^{-1}`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let chol = self
            .precision
            .clone()
            .cholesky()
            .expect("checked at construction");
        symmetrize(&chol.inverse())
    }

    /// Convert back to the square-root view using the unique lower Cholesky
    /// factor of `S^{-1}` with positive diagonal.
    pub fn to_square_root(&self) -> Result<GaussianParams> {
        let v = self.covariance();
        let chol = v
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("covariance failed Cholesky".into()))?;
        GaussianParams::new(self.mean.clone(), chol.l())
    }
}

/// Conversion helpers mirroring the two state views.
pub fn to_natural(q: &GaussianParams) -> NaturalState {
    q.to_natural()
}

pub fn from_natural(s: &NaturalState) -> Result<GaussianParams> {
    s.to_square_root()
}

/// Provenance of a moment estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasTag {
    Exact,
    Quadrature,
    MonteCarlo,
    Injected,
}

/// Expected gradient and expected Hessian of the loss under the current
/// Gaussian. The Hessian is symmetrized on construction.
#[derive(Debug, Clone)]
pub struct MomentEstimates {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub bias_tag: BiasTag,
}

impl MomentEstimates {
    pub fn new(grad: DVector<f64>, hess: DMatrix<f64>, bias_tag: BiasTag) -> Result<Self> {
        let d = grad.len();
        if hess.nrows() != d || hess.ncols() != d {
            return Err(Error::Dimension(format!(
                "gradient has length {d} but Hessian is {}x{}",
                hess.nrows(),
                hess.ncols()
            )));
        }
        Ok(Self {
            grad,
            hess: symmetrize(&hess),
            bias_tag,
        })
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }
}
