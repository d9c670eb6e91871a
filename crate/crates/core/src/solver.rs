//! The iteration loop: sketched block updates driven by the window tracker.
//!
//! Each iteration k draws a fresh embedding S_k, pushes the squared sketched
//! gradient norm into the tracker, applies the block update, and then asks
//! the stopping rule whether the run is done. The window is adapted last,
//! against the interval that was current before the push, so a regime jump
//! registers against the belief it violated.
//!
//! Oracle mode adds per-iteration ground truth for studies: the exact
//! squared gradient norm, its mean over the same window the tracker used,
//! and (on problems small enough to factor) the projected weighted residual
//! together with the envelope that bounds the true gradient norm.

use nalgebra::DVector;

use thiserror::Error;

use crate::sketch::{draw_sketch, SketchError, SketchSpec};
use crate::tracker::{window_moments, TailParams, TrackerConfig, TrackerError, TrackerState};
use crate::wls::{WlsError, WlsProblem};

/// Ground-truth instrumentation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleConfig {
    /// Projection diagnostics are computed only when the problem has at
    /// most this many rows; the factorization behind them is dense.
    pub max_rows_for_projection: usize,
    /// Pushes the exact squared gradient norm into the tracker instead of
    /// the sketched one. The block update still uses the sketch; only the
    /// tracked stream changes.
    pub feed_exact: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_rows_for_projection: 4096,
            feed_exact: false,
        }
    }
}

/// Embedding dimension, iteration budget, tracker settings, and optional
/// instrumentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Embedding dimension p of each per-iteration sketch.
    pub p: usize,
    pub max_iterations: u64,
    pub tracker: TrackerConfig,
    pub oracle: Option<OracleConfig>,
    /// Stores the iterate at the start of every iteration in the report.
    pub record_iterates: bool,
    /// Added to the iteration index when addressing the per-iteration draw
    /// stream. Lets a run restarted from a checkpoint replay the exact
    /// draws the original run used from that point on.
    pub stream_offset: u64,
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("embedding dimension must be at least 1")]
    BadEmbedding,
    #[error("iteration budget must be at least 1")]
    BadIterationBudget,
    #[error("initial iterate has length {got}, expected {expected}, or holds non-finite values")]
    BadInitial { got: usize, expected: usize },
    #[error("non-finite quantity at iteration {iteration}; the run is numerically dead")]
    NonFinite { iteration: u64 },
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Wls(#[from] WlsError),
}

/// Ground truth captured at one iteration (iterate taken before the
/// update).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRecord {
    /// Exact squared gradient norm at the iterate.
    pub exact_sq_norm: f64,
    /// Mean of the exact squared norms over the same window the tracker
    /// used this iteration.
    pub rho_exact: f64,
    /// Mean of the exact fourth powers over that window.
    pub iota_exact: f64,
    /// Norm of the weighted residual projected onto the weighted column
    /// space; never increases across iterations.
    pub projected_residual_norm: Option<f64>,
    /// Upper envelope for the exact gradient norm at the iterate.
    pub envelope: Option<f64>,
}

/// Tracked quantities at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: u64,
    /// Squared norm pushed into the tracker this iteration.
    pub value: f64,
    pub rho: f64,
    pub iota: f64,
    /// Effective window length behind rho and iota.
    pub lambda: usize,
    /// Credible half-width around rho after the push.
    pub ci_half_width: f64,
    /// Stopping threshold for iota at this window length.
    pub threshold: f64,
    pub oracle: Option<OracleRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Both stopping conditions held.
    StoppingRule,
    /// The iteration budget ran out first.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Final iterate, including the update of the stopping iteration.
    pub x: DVector<f64>,
    /// Number of iterations performed.
    pub iterations: u64,
    pub stop_reason: StopReason,
    pub trace: Vec<IterationRecord>,
    /// Iterate at the start of each iteration, when requested.
    pub iterates: Vec<DVector<f64>>,
}

/// Runs the sketched iteration from `x0` (zeros when absent) until the
/// stopping rule fires or the budget is exhausted.
pub fn solve(
    problem: &WlsProblem,
    sketch: &SketchSpec,
    config: &SolverConfig,
    x0: Option<&DVector<f64>>,
) -> Result<SolveReport, SolverError> {
    sketch.validate()?;
    if config.p == 0 {
        return Err(SolverError::BadEmbedding);
    }
    if config.max_iterations == 0 {
        return Err(SolverError::BadIterationBudget);
    }
    let n = problem.ncols();
    let mut x = match x0 {
        Some(v) => {
            if v.len() != n || v.iter().any(|e| !e.is_finite()) {
                return Err(SolverError::BadInitial {
                    got: v.len(),
                    expected: n,
                });
            }
            v.clone()
        }
        None => DVector::zeros(n),
    };

    let tail = TailParams {
        c: sketch.c,
        omega: sketch.omega,
        eta: sketch.eta,
        p: config.p,
    };
    let mut tracker = TrackerState::new(config.tracker, tail)?;
    let projection = match &config.oracle {
        Some(ocfg) if problem.nrows() <= ocfg.max_rows_for_projection => {
            Some(problem.projection_oracle()?)
        }
        _ => None,
    };

    let reserve = config.max_iterations.min(16_384) as usize;
    let mut trace: Vec<IterationRecord> = Vec::with_capacity(reserve);
    let mut iterates: Vec<DVector<f64>> = Vec::new();
    if config.record_iterates {
        iterates.reserve(reserve);
    }
    let mut exact_history: Vec<f64> = Vec::new();
    if config.oracle.is_some() {
        exact_history.reserve(reserve);
    }

    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIterations;
    for k in 0..config.max_iterations {
        if config.record_iterates {
            iterates.push(x.clone());
        }
        let draw = draw_sketch(sketch, n, config.p, config.stream_offset + k)?;
        let mut value = problem.sketched_gradient(&x, &draw)?.norm_squared();

        let mut exact_sq_norm = None;
        if let Some(ocfg) = &config.oracle {
            let exact = problem.gradient(&x)?.norm_squared();
            if !exact.is_finite() {
                return Err(SolverError::NonFinite { iteration: k });
            }
            if ocfg.feed_exact {
                value = exact;
            }
            exact_history.push(exact);
            exact_sq_norm = Some(exact);
        }
        if !value.is_finite() {
            return Err(SolverError::NonFinite { iteration: k });
        }

        let ci_pre = tracker.credible_interval();
        let est = tracker.push_and_estimate(value)?;
        let ci_post = tracker.credible_interval();

        let oracle = match exact_sq_norm {
            Some(exact) => {
                let (rho_exact, iota_exact) = window_moments(&exact_history, est.lambda);
                let (projected, envelope) = match &projection {
                    Some(po) => {
                        let pr = po.projected_residual_norm(problem, &x)?;
                        (Some(pr), Some(po.spectral_norm() * pr))
                    }
                    None => (None, None),
                };
                Some(OracleRecord {
                    exact_sq_norm: exact,
                    rho_exact,
                    iota_exact,
                    projected_residual_norm: projected,
                    envelope,
                })
            }
            None => None,
        };

        x = problem.block_update(&x, &draw)?;
        if x.iter().any(|e| !e.is_finite()) {
            return Err(SolverError::NonFinite { iteration: k });
        }
        iterations = k + 1;

        let verdict = tracker.stopping_check();
        trace.push(IterationRecord {
            iteration: k,
            value,
            rho: est.rho,
            iota: est.iota,
            lambda: est.lambda,
            ci_half_width: ci_post.half_width,
            threshold: verdict.threshold,
            oracle,
        });
        if verdict.stop {
            stop_reason = StopReason::StoppingRule;
            break;
        }
        tracker.adapt_window(value, &ci_pre);
    }

    Ok(SolveReport {
        x,
        iterations,
        stop_reason,
        trace,
        iterates,
    })
}
