//! Streaming weighted least squares by square-root-free Givens rotations,
//! after Gentleman's updating scheme (the AS 274 formulation).
//!
//! State is a row-scale vector `d`, the strict upper triangle of a unit
//! upper triangular factor `rbar`, the transformed right-hand side
//! `thetab`, and the accumulated weighted residual sum of squares `sse`.
//! Rows arrive one at a time with a non-negative weight and are rotated in
//! without ever forming the normal equations or taking square roots, so the
//! memory footprint is O(s^2) regardless of how many rows stream through.
//!
//! A solve may be taken at any time and does not disturb the accumulation.
//! Coordinates never touched by any row (or indistinguishable from rounding
//! noise, as with exactly collinear columns) are free; the solve pins them
//! to zero, which leaves fitted values equal to those of the minimum-norm
//! solution.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RowStreamError {
    #[error("row has {got} entries, state expects {expected}")]
    RowLength { got: usize, expected: usize },
    #[error("row weight {weight} must be non-negative and finite")]
    BadWeight { weight: f64 },
    #[error("row contains non-finite values")]
    NonFiniteRow,
}

/// Accumulator for min sum_i w_i (x_i . u - y_i)^2 over streamed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GentlemanState {
    s: usize,
    d: Vec<f64>,
    rbar: Vec<f64>,
    thetab: Vec<f64>,
    sse: f64,
    rows: u64,
    scratch: Vec<f64>,
}

impl GentlemanState {
    /// Fresh accumulator over `s` coefficients.
    pub fn new(s: usize) -> Self {
        assert!(s > 0, "coefficient count must be positive");
        GentlemanState {
            s,
            d: vec![0.0; s],
            rbar: vec![0.0; s * (s - 1) / 2],
            thetab: vec![0.0; s],
            sse: 0.0,
            rows: 0,
            scratch: vec![0.0; s],
        }
    }

    pub fn dimension(&self) -> usize {
        self.s
    }

    /// Weighted residual sum of squares of the rows so far.
    pub fn sse(&self) -> f64 {
        self.sse
    }

    pub fn rows_included(&self) -> u64 {
        self.rows
    }

    /// Offset of rbar[i][k] (k > i) in the packed strict upper triangle.
    #[inline]
    fn idx(&self, i: usize, k: usize) -> usize {
        // Row i starts after rows 0..i, which hold (s-1) + .. + (s-i) slots.
        i * (2 * self.s - i - 1) / 2 + (k - i - 1)
    }

    /// Rotates one weighted row into the factorization.
    pub fn include_row(&mut self, weight: f64, row: &[f64], y: f64) -> Result<(), RowStreamError> {
        if row.len() != self.s {
            return Err(RowStreamError::RowLength {
                got: row.len(),
                expected: self.s,
            });
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(RowStreamError::BadWeight { weight });
        }
        if !y.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(RowStreamError::NonFiniteRow);
        }
        self.rows += 1;
        if weight == 0.0 {
            return Ok(());
        }
        let mut w = weight;
        let mut y = y;
        self.scratch.copy_from_slice(row);
        for i in 0..self.s {
            if w == 0.0 {
                return Ok(());
            }
            let xi = self.scratch[i];
            if xi == 0.0 {
                continue;
            }
            let di = self.d[i];
            let wxi = w * xi;
            let dpi = di + wxi * xi;
            let cbar = di / dpi;
            let sbar = wxi / dpi;
            w *= cbar;
            self.d[i] = dpi;
            for k in i + 1..self.s {
                let idx = self.idx(i, k);
                let xk = self.scratch[k];
                self.scratch[k] = xk - xi * self.rbar[idx];
                self.rbar[idx] = cbar * self.rbar[idx] + sbar * xk;
            }
            let yk = y;
            y = yk - xi * self.thetab[i];
            self.thetab[i] = cbar * self.thetab[i] + sbar * yk;
        }
        self.sse += w * y * y;
        Ok(())
    }

    /// True when coordinate `i` carries no information beyond rounding noise.
    pub fn is_free(&self, i: usize) -> bool {
        let max_d = self.d.iter().cloned().fold(0.0f64, f64::max);
        self.d[i] <= self.free_tolerance(max_d)
    }

    fn free_tolerance(&self, max_d: f64) -> f64 {
        // Collinear columns leave d at the square of the rounding error of
        // the data scale; anything at that level is noise, not signal.
        max_d * self.s as f64 * f64::EPSILON * f64::EPSILON * 64.0
    }

    /// Back-substitutes the current factorization. Free coordinates are set
    /// to zero. Does not modify the accumulator.
    pub fn solve(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.s);
        let max_d = self.d.iter().cloned().fold(0.0f64, f64::max);
        if max_d == 0.0 {
            return x;
        }
        let tol = self.free_tolerance(max_d);
        for i in (0..self.s).rev() {
            if self.d[i] <= tol {
                x[i] = 0.0;
                continue;
            }
            let mut acc = self.thetab[i];
            for k in i + 1..self.s {
                acc -= self.rbar[self.idx(i, k)] * x[k];
            }
            x[i] = acc;
        }
        x
    }

    /// Clears the accumulation back to the empty state.
    pub fn reset(&mut self) {
        self.d.fill(0.0);
        self.rbar.fill(0.0);
        self.thetab.fill(0.0);
        self.sse = 0.0;
        self.rows = 0;
    }
}
