//! Moving-window tracking of the sketched gradient norm with a credible
//! interval and a two-sided stopping rule.
//!
//! Each iteration pushes v_k = ||sketched gradient||^2. Over the most recent
//! lambda values the tracker maintains
//!
//!   rho  = mean of v_i        (second-moment estimate)
//!   iota = mean of v_i^2      (fourth-moment estimate)
//!
//! The credible half-width around rho combines a sub-Gaussian and a
//! sub-exponential branch (natural logarithms throughout):
//!
//!   max( sqrt(2 ln(2/alpha) iota (1+ln lambda) / (C p lambda eta)),
//!        2 ln(2/alpha) iota (1+ln lambda) omega / (C p lambda eta) )
//!
//! Stopping requires rho strictly below the target upsilon and iota at or
//! below a threshold that makes both a late stop (missing that the true
//! quantity fell to delta_I * upsilon) and an early stop (stopping while it
//! still exceeds delta_II * upsilon) have probability at most xi_I and
//! xi_II. The window length adapts between lambda1 and lambda2: it grows by
//! one while new values stay inside the interval and resets to lambda1 when
//! one falls outside (a regime change); lambda1 = lambda2 fixes it.

use std::collections::VecDeque;

use thiserror::Error;

/// Tail parameters of the sketch in use, as they enter interval widths and
/// stopping thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailParams {
    /// Tail exponent constant C > 0.
    pub c: f64,
    /// Tail scale omega > 0.
    pub omega: f64,
    /// Oversampling factor eta > 0.
    pub eta: f64,
    /// Embedding dimension p >= 1.
    pub p: usize,
}

impl TailParams {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.c) || !ok(self.omega) || !ok(self.eta) || self.p == 0 {
            return Err(TrackerError::BadTailParams {
                c: self.c,
                omega: self.omega,
                eta: self.eta,
                p: self.p,
            });
        }
        Ok(())
    }
}

/// Window bounds, credibility level, stopping target, and error budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Smallest (and initial) window length, at least 1.
    pub lambda1: usize,
    /// Largest window length, at least lambda1.
    pub lambda2: usize,
    /// Credibility level in (0, 1); the interval misses with probability at
    /// most alpha under the tail model.
    pub alpha: f64,
    /// Stopping target for rho, positive.
    pub upsilon: f64,
    /// Late-stop guard band in (0, 1].
    pub delta_i: f64,
    /// Early-stop guard band, at least 1.
    pub delta_ii: f64,
    /// Late-stop error budget in (0, 1).
    pub xi_i: f64,
    /// Early-stop error budget in (0, 1).
    pub xi_ii: f64,
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.lambda1 == 0 || self.lambda2 < self.lambda1 {
            return Err(TrackerError::BadWindowBounds {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
            });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TrackerError::BadAlpha { alpha: self.alpha });
        }
        if !(self.upsilon > 0.0) || !self.upsilon.is_finite() {
            return Err(TrackerError::BadUpsilon {
                upsilon: self.upsilon,
            });
        }
        if !(self.delta_i > 0.0 && self.delta_i <= 1.0) {
            return Err(TrackerError::BadDelta {
                which: "delta_i",
                value: self.delta_i,
            });
        }
        if !(self.delta_ii >= 1.0) || !self.delta_ii.is_finite() {
            return Err(TrackerError::BadDelta {
                which: "delta_ii",
                value: self.delta_ii,
            });
        }
        for (name, xi) in [("xi_i", self.xi_i), ("xi_ii", self.xi_ii)] {
            if !(xi > 0.0 && xi < 1.0) {
                return Err(TrackerError::BadXi {
                    which: name,
                    value: xi,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("window bounds lambda1={lambda1}, lambda2={lambda2} need 1 <= lambda1 <= lambda2")]
    BadWindowBounds { lambda1: usize, lambda2: usize },
    #[error("alpha={alpha} must lie in (0, 1)")]
    BadAlpha { alpha: f64 },
    #[error("upsilon={upsilon} must be positive and finite")]
    BadUpsilon { upsilon: f64 },
    #[error("{which}={value} out of range")]
    BadDelta { which: &'static str, value: f64 },
    #[error("{which}={value} must lie in (0, 1)")]
    BadXi { which: &'static str, value: f64 },
    #[error("tail parameters invalid: c={c}, omega={omega}, eta={eta}, p={p}")]
    BadTailParams {
        c: f64,
        omega: f64,
        eta: f64,
        p: usize,
    },
    #[error("pushed value {value} must be a non-negative finite number")]
    BadValue { value: f64 },
}

/// Window moments after a push.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowEstimates {
    /// Mean of the last `lambda` squared norms.
    pub rho: f64,
    /// Mean of their squares.
    pub iota: f64,
    /// Effective window length used (capped by the number of pushes).
    pub lambda: usize,
}

/// Credible interval around rho; the lower bound may be negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CredibleInterval {
    pub center: f64,
    pub half_width: f64,
}

impl CredibleInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower() && v <= self.upper()
    }
}

/// Outcome of the stopping rule at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingVerdict {
    /// Both conditions hold and at least two values were pushed.
    pub stop: bool,
    /// rho strictly below upsilon (equality continues).
    pub rho_below: bool,
    /// iota at or below the threshold (equality stops).
    pub iota_ok: bool,
    pub threshold: f64,
}

/// Tracker over the streamed squared norms.
#[derive(Debug, Clone)]
pub struct TrackerState {
    config: TrackerConfig,
    tail: TailParams,
    lambda_target: usize,
    values: VecDeque<f64>,
    pushes: u64,
}

impl TrackerState {
    pub fn new(config: TrackerConfig, tail: TailParams) -> Result<Self, TrackerError> {
        config.validate()?;
        tail.validate()?;
        Ok(TrackerState {
            config,
            tail,
            lambda_target: config.lambda1,
            values: VecDeque::with_capacity(config.lambda2 + 1),
            pushes: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tail(&self) -> &TailParams {
        &self.tail
    }

    /// Effective window length: the adapted target capped by history.
    pub fn lambda(&self) -> usize {
        self.lambda_target.min(self.values.len().max(1))
    }

    pub fn pushes(&self) -> u64 {
        self.pushes
    }

    /// Accepts the next squared norm and returns the window moments.
    pub fn push_and_estimate(&mut self, value: f64) -> Result<WindowEstimates, TrackerError> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(TrackerError::BadValue { value });
        }
        self.values.push_back(value);
        while self.values.len() > self.config.lambda2 {
            self.values.pop_front();
        }
        self.pushes += 1;
        Ok(self.estimates())
    }

    /// Window moments without pushing.
    pub fn estimates(&self) -> WindowEstimates {
        let lambda = self.lambda().min(self.values.len());
        if lambda == 0 {
            return WindowEstimates {
                rho: 0.0,
                iota: 0.0,
                lambda: 0,
            };
        }
        let (rho, iota) = window_moments_deque(&self.values, lambda);
        WindowEstimates { rho, iota, lambda }
    }

    /// Credible interval around the current rho.
    pub fn credible_interval(&self) -> CredibleInterval {
        let est = self.estimates();
        let hw = interval_half_width(est.iota, est.lambda.max(1), &self.tail, self.config.alpha);
        CredibleInterval {
            center: est.rho,
            half_width: hw,
        }
    }

    /// Stopping threshold at the current effective window length.
    pub fn stopping_threshold(&self) -> f64 {
        stopping_threshold(&self.config, &self.tail, self.lambda())
    }

    /// Evaluates the stopping rule. Never signals a stop before the second
    /// push, whatever the estimates say.
    pub fn stopping_check(&self) -> StoppingVerdict {
        let est = self.estimates();
        let threshold = self.stopping_threshold();
        let rho_below = est.rho < self.config.upsilon;
        let iota_ok = est.iota <= threshold;
        StoppingVerdict {
            stop: rho_below && iota_ok && self.pushes >= 2,
            rho_below,
            iota_ok,
            threshold,
        }
    }

    /// Regime-aware window update: the newest value inside the interval
    /// grows the window by one (up to lambda2); outside resets it to
    /// lambda1. With lambda1 = lambda2 the window is fixed.
    ///
    /// Pass the interval computed before the value was pushed. An interval
    /// over a window that already contains the value widens quadratically
    /// with it and would never flag a jump.
    pub fn adapt_window(&mut self, latest: f64, interval: &CredibleInterval) {
        if self.config.lambda1 == self.config.lambda2 {
            return;
        }
        if interval.contains(latest) {
            self.lambda_target = (self.lambda_target + 1).min(self.config.lambda2);
        } else {
            self.lambda_target = self.config.lambda1;
        }
    }
}

fn window_moments_deque(values: &VecDeque<f64>, lambda: usize) -> (f64, f64) {
    let start = values.len() - lambda;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &v in values.iter().skip(start) {
        sum += v;
        sum_sq += v * v;
    }
    (sum / lambda as f64, sum_sq / lambda as f64)
}

/// Means of the last `lambda` values and of their squares; `lambda` is
/// capped at the slice length. Shared with the study harnesses, which apply
/// it to exact gradient norms.
pub fn window_moments(values: &[f64], lambda: usize) -> (f64, f64) {
    let lambda = lambda.min(values.len()).max(1);
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let tail = &values[values.len() - lambda..];
    let sum: f64 = tail.iter().sum();
    let sum_sq: f64 = tail.iter().map(|v| v * v).sum();
    (sum / lambda as f64, sum_sq / lambda as f64)
}

/// Credible half-width for a fourth-moment estimate `iota` at window length
/// `lambda`. Substituting a known envelope for `iota` gives the analytic
/// version of the same interval.
pub fn interval_half_width(iota: f64, lambda: usize, tail: &TailParams, alpha: f64) -> f64 {
    let l = (2.0 / alpha).ln();
    let f = 1.0 + (lambda as f64).ln();
    let denom = tail.c * tail.p as f64 * lambda as f64 * tail.eta;
    let shared = l * iota * f / denom;
    let gaussian_branch = (2.0 * shared).sqrt();
    let exponential_branch = 2.0 * shared * tail.omega;
    gaussian_branch.max(exponential_branch)
}

/// Largest fourth-moment level at which both stopping error budgets hold at
/// window length `lambda`.
pub fn stopping_threshold(config: &TrackerConfig, tail: &TailParams, lambda: usize) -> f64 {
    let lambda = lambda.max(1);
    let f = 1.0 + (lambda as f64).ln();
    let scale = tail.c * tail.p as f64 * lambda as f64 * tail.eta;
    let branch = |gap: f64, xi: f64| {
        let u = gap * config.upsilon;
        let tightest = (u * u).min(u / tail.omega);
        scale * tightest / (f * (2.0 / xi).ln())
    };
    branch(1.0 - config.delta_i, config.xi_i).min(branch(config.delta_ii - 1.0, config.xi_ii))
}
