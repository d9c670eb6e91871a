//! Weighted least squares problems and the sketched block update.
//!
//! A problem holds A (m-by-n), right-hand side b, and an SPD weight B given
//! either as a positive diagonal or as a dense symmetric positive definite
//! matrix. The symmetric square root B^(1/2) is fixed at construction. The
//! solver-facing pieces are the gradient A^T B (Ax - b), its sketched
//! compression S^T g, and the block update
//!
//!   x' = x - S (S^T A^T B A S)^+ S^T A^T B (Ax - b)
//!
//! with pseudoinverse semantics, so rank-deficient compressions are handled
//! by dropping tiny singular values instead of failing.
//!
//! [`ProjectionOracle`] exposes the diagnostics used to study runs: the norm
//! of the residual component inside col(B^(1/2) A), which the update can
//! only shrink, and the envelope M = ||A^T B^(1/2)||_2 times that norm.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::sketch::SketchDraw;

/// SPD weight on the residual space.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// Diagonal with strictly positive entries.
    Diagonal(DVector<f64>),
    /// Dense symmetric positive definite matrix.
    Dense(DMatrix<f64>),
}

impl Weight {
    pub fn identity(m: usize) -> Self {
        Weight::Diagonal(DVector::from_element(m, 1.0))
    }

    fn dim(&self) -> usize {
        match self {
            Weight::Diagonal(d) => d.len(),
            Weight::Dense(b) => b.nrows(),
        }
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Weight::Diagonal(d) => v.component_mul(d),
            Weight::Dense(b) => b * v,
        }
    }

    fn apply_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Weight::Diagonal(d) => {
                let mut out = m.clone();
                for j in 0..out.ncols() {
                    let mut col = out.column_mut(j);
                    for (i, e) in col.iter_mut().enumerate() {
                        *e *= d[i];
                    }
                }
                out
            }
            Weight::Dense(b) => b * m,
        }
    }
}

#[derive(Debug, Error)]
pub enum WlsError {
    #[error("A is {rows}x{cols}; b has length {rhs}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        rhs: usize,
    },
    #[error("weight has dimension {weight}, expected {rows}")]
    WeightShape { weight: usize, rows: usize },
    #[error("diagonal weight entry {index} is {value}; all must be positive and finite")]
    WeightNotPositive { index: usize, value: f64 },
    #[error("dense weight is not symmetric (max asymmetry {max_asymmetry:e})")]
    WeightNotSymmetric { max_asymmetry: f64 },
    #[error("dense weight is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    WeightNotPositiveDefinite { min_eigenvalue: f64 },
    #[error("iterate has length {got}, expected {expected}")]
    IterateLength { got: usize, expected: usize },
    #[error("sketch has {got} rows, expected {expected}")]
    SketchRows { got: usize, expected: usize },
    #[error("non-finite values encountered in {place}")]
    NonFinite { place: &'static str },
}

/// Weighted least squares problem min_x (Ax-b)^T B (Ax-b) / 2.
#[derive(Debug, Clone)]
pub struct WlsProblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    weight: Weight,
    sqrt_weight: Weight,
}

impl WlsProblem {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, weight: Weight) -> Result<Self, WlsError> {
        if b.len() != a.nrows() || a.ncols() == 0 || a.nrows() == 0 {
            return Err(WlsError::ShapeMismatch {
                rows: a.nrows(),
                cols: a.ncols(),
                rhs: b.len(),
            });
        }
        if weight.dim() != a.nrows() {
            return Err(WlsError::WeightShape {
                weight: weight.dim(),
                rows: a.nrows(),
            });
        }
        let sqrt_weight = match &weight {
            Weight::Diagonal(d) => {
                for (i, &v) in d.iter().enumerate() {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(WlsError::WeightNotPositive { index: i, value: v });
                    }
                }
                Weight::Diagonal(d.map(f64::sqrt))
            }
            Weight::Dense(m) => {
                let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
                let max_asymmetry = (m - m.transpose())
                    .iter()
                    .fold(0.0f64, |acc, v| acc.max(v.abs()));
                if max_asymmetry > 1e-12 * scale {
                    return Err(WlsError::WeightNotSymmetric { max_asymmetry });
                }
                let eig = nalgebra::SymmetricEigen::new(m.clone());
                let min_eigenvalue = eig.eigenvalues.min();
                if !(min_eigenvalue > 0.0) {
                    return Err(WlsError::WeightNotPositiveDefinite { min_eigenvalue });
                }
                // B^(1/2) = V sqrt(Lambda) V^T, symmetric by construction.
                let sqrt_vals = eig.eigenvalues.map(f64::sqrt);
                let mut half = eig.eigenvectors.clone();
                for j in 0..half.ncols() {
                    half.column_mut(j).scale_mut(sqrt_vals[j]);
                }
                Weight::Dense(&half * eig.eigenvectors.transpose())
            }
        };
        Ok(WlsProblem {
            a,
            b,
            weight,
            sqrt_weight,
        })
    }

    /// Unit weight convenience.
    pub fn unweighted(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, WlsError> {
        let m = a.nrows();
        Self::new(a, b, Weight::identity(m))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>, WlsError> {
        if x.len() != self.a.ncols() {
            return Err(WlsError::IterateLength {
                got: x.len(),
                expected: self.a.ncols(),
            });
        }
        Ok(&self.a * x - &self.b)
    }

    /// Gradient A^T B (Ax - b) of the weighted objective.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, WlsError> {
        let r = self.residual(x)?;
        Ok(self.a.tr_mul(&self.weight.apply(&r)))
    }

    /// Sketched gradient S^T A^T B (Ax - b).
    pub fn sketched_gradient(
        &self,
        x: &DVector<f64>,
        sketch: &SketchDraw,
    ) -> Result<DVector<f64>, WlsError> {
        if sketch.matrix.nrows() != self.a.ncols() {
            return Err(WlsError::SketchRows {
                got: sketch.matrix.nrows(),
                expected: self.a.ncols(),
            });
        }
        let g = self.gradient(x)?;
        Ok(sketch.matrix.tr_mul(&g))
    }

    /// One sketched block update. The compressed normal matrix
    /// S^T A^T B A S is inverted in the pseudoinverse sense: singular values
    /// at or below max(p, m) * machine epsilon * sigma_max are dropped.
    pub fn block_update(
        &self,
        x: &DVector<f64>,
        sketch: &SketchDraw,
    ) -> Result<DVector<f64>, WlsError> {
        if sketch.matrix.nrows() != self.a.ncols() {
            return Err(WlsError::SketchRows {
                got: sketch.matrix.nrows(),
                expected: self.a.ncols(),
            });
        }
        let r = self.residual(x)?;
        let as_ = &self.a * &sketch.matrix;
        let weighted_as = self.weight.apply_mat(&as_);
        let gram = as_.tr_mul(&weighted_as);
        let rhs = as_.tr_mul(&self.weight.apply(&r));
        if gram.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
            return Err(WlsError::NonFinite {
                place: "compressed normal equations",
            });
        }
        let u = pinv_solve(&gram, &rhs, self.a.nrows())?;
        Ok(x - &sketch.matrix * u)
    }

    /// Diagnostics helper bound to this problem's column space.
    pub fn projection_oracle(&self) -> Result<ProjectionOracle, WlsError> {
        ProjectionOracle::new(self)
    }

    fn weighted_half_a(&self) -> DMatrix<f64> {
        self.sqrt_weight.apply_mat(&self.a)
    }

    fn weighted_half_residual(&self, x: &DVector<f64>) -> Result<DVector<f64>, WlsError> {
        Ok(self.sqrt_weight.apply(&self.residual(x)?))
    }
}

/// Solves G u = rhs through an SVD pseudoinverse with the stated cutoff.
fn pinv_solve(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    problem_rows: usize,
) -> Result<DVector<f64>, WlsError> {
    let p = gram.nrows();
    let svd = gram.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let cutoff = p.max(problem_rows) as f64 * f64::EPSILON * sigma_max;
    let u_t_rhs = svd.u.as_ref().expect("requested U").tr_mul(rhs);
    let mut scaled = DVector::zeros(p);
    for i in 0..p {
        let s = svd.singular_values[i];
        if s > cutoff && s > 0.0 {
            scaled[i] = u_t_rhs[i] / s;
        }
    }
    let out = svd.v_t.as_ref().expect("requested V^T").tr_mul(&scaled);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(WlsError::NonFinite {
            place: "pseudoinverse solve",
        });
    }
    Ok(out)
}

/// Orthonormal basis of col(B^(1/2) A) plus the spectral norm of
/// A^T B^(1/2), precomputed once per problem.
#[derive(Debug, Clone)]
pub struct ProjectionOracle {
    basis: DMatrix<f64>,
    spectral_norm: f64,
}

impl ProjectionOracle {
    fn new(problem: &WlsProblem) -> Result<Self, WlsError> {
        let weighted = problem.weighted_half_a();
        if weighted.iter().any(|v| !v.is_finite()) {
            return Err(WlsError::NonFinite {
                place: "weighted system matrix",
            });
        }
        let (m, n) = weighted.shape();
        let qr = weighted.clone().col_piv_qr();
        let q = qr.q();
        let r = qr.r();
        let r00 = r[(0, 0)].abs();
        let cutoff = m.max(n) as f64 * f64::EPSILON * r00;
        let rank = (0..r.nrows().min(r.ncols()))
            .take_while(|&i| r[(i, i)].abs() > cutoff)
            .count()
            .max(1);
        let basis = q.columns(0, rank).clone_owned();
        let spectral_norm = weighted.singular_values()[0];
        Ok(ProjectionOracle {
            basis,
            spectral_norm,
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// ||A^T B^(1/2)||_2.
    pub fn spectral_norm(&self) -> f64 {
        self.spectral_norm
    }

    /// Norm of the projection of B^(1/2)(Ax - b) onto col(B^(1/2) A). The
    /// block update never increases this quantity.
    pub fn projected_residual_norm(
        &self,
        problem: &WlsProblem,
        x: &DVector<f64>,
    ) -> Result<f64, WlsError> {
        let psi = problem.weighted_half_residual(x)?;
        Ok(self.basis.tr_mul(&psi).norm())
    }

    /// Envelope M = ||A^T B^(1/2)||_2 * ||P B^(1/2)(Ax - b)||; the true
    /// gradient norm never exceeds it.
    pub fn m_value(&self, problem: &WlsProblem, x: &DVector<f64>) -> Result<f64, WlsError> {
        Ok(self.spectral_norm * self.projected_residual_norm(problem, x)?)
    }
}
