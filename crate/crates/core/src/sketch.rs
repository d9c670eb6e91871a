//! Random sketching operators with sub-exponential embedding guarantees.
//!
//! Three methods are provided: dense Gaussian, the sparse three-point
//! (Achlioptas) distribution, and a subsampled randomized Walsh-Hadamard
//! transform. All are normalized so that E ||S^T z||^2 = ||z||^2, and every
//! draw is a pure function of (seed, iteration index, method, n, p): the
//! generator is a keyed counter-mode stream, so iteration k can be redrawn
//! without replaying iterations 0..k.
//!
//! The tail model is P(| ||S^T z||^2 - ||z||^2 | > eps ||z||^2) bounded by
//! 2 exp(-C p min(eps^2, eps/omega)); `min_embedding_dim` inverts it for the
//! smallest usable p and `calibrate_constants` fits (C, omega) empirically.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::streams::{keyed_rng, DOMAIN_PROBE, DOMAIN_SKETCH};

/// Distribution family of the sketching matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SketchMethod {
    /// Independent N(0, 1/p) entries.
    Gaussian,
    /// Entries sqrt(3/p) * {+1 w.p. 1/6, 0 w.p. 2/3, -1 w.p. 1/6}.
    Achlioptas,
    /// Subsampled randomized Walsh-Hadamard transform on the input zero-padded
    /// to a power of two; p rows sampled without replacement, random signs.
    Fjlt,
}

impl SketchMethod {
    /// Conservative default tail constant for this method.
    pub fn default_c(self) -> f64 {
        match self {
            SketchMethod::Gaussian | SketchMethod::Achlioptas => std::f64::consts::LN_2 / 2.0,
            SketchMethod::Fjlt => std::f64::consts::LN_2 / 22.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SketchMethod::Gaussian => "gaussian",
            SketchMethod::Achlioptas => "achlioptas",
            SketchMethod::Fjlt => "fjlt",
        }
    }
}

/// Method plus tail and stream parameters; everything a caller needs to
/// reproduce a sequence of sketches.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSpec {
    pub method: SketchMethod,
    /// Tail exponent constant C > 0.
    pub c: f64,
    /// Tail scale omega > 0 separating the quadratic and linear branches.
    pub omega: f64,
    /// Oversampling factor eta > 0 multiplying C p in interval widths.
    pub eta: f64,
    pub seed: u64,
}

impl SketchSpec {
    /// Spec with the method's default constants, omega = 1, eta = 1.
    pub fn new(method: SketchMethod, seed: u64) -> Self {
        SketchSpec {
            method,
            c: method.default_c(),
            omega: 1.0,
            eta: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SketchError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.c) || !ok(self.omega) || !ok(self.eta) {
            return Err(SketchError::BadConstants {
                c: self.c,
                omega: self.omega,
                eta: self.eta,
            });
        }
        Ok(())
    }
}

/// One realized sketching matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchDraw {
    /// n-by-p sketch; applied to vectors as S^T z.
    pub matrix: DMatrix<f64>,
    pub iteration_index: u64,
}

impl SketchDraw {
    /// Deterministic full sketch (p = n, S = I); the update it induces is the
    /// exact unsketched one.
    pub fn identity(n: usize) -> Self {
        SketchDraw {
            matrix: DMatrix::identity(n, n),
            iteration_index: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("sketch dimensions n={n}, p={p} must both be positive")]
    EmptyDimension { n: usize, p: usize },
    #[error("sketch constants must be finite and positive: c={c}, omega={omega}, eta={eta}")]
    BadConstants { c: f64, omega: f64, eta: f64 },
    #[error("failure tolerance delta={delta} must lie in (0, 1]")]
    BadDelta { delta: f64 },
    #[error("embedding bound overflows usize (c={c}, omega={omega}, delta={delta})")]
    BoundOverflow { c: f64, omega: f64, delta: f64 },
    #[error("calibration needs at least one trial")]
    NoTrials,
    #[error("calibration epsilon grid must be non-empty with positive entries")]
    BadGrid,
    #[error("probe vector has zero norm")]
    DegenerateProbe,
    #[error("probe vector length {got} does not match n={n}")]
    ProbeLength { got: usize, n: usize },
}

/// Draws the n-by-p sketch for one iteration.
pub fn draw_sketch(
    spec: &SketchSpec,
    n: usize,
    p: usize,
    iteration_index: u64,
) -> Result<SketchDraw, SketchError> {
    spec.validate()?;
    if n == 0 || p == 0 {
        return Err(SketchError::EmptyDimension { n, p });
    }
    let mut rng = keyed_rng(spec.seed, DOMAIN_SKETCH, iteration_index);
    let matrix = match spec.method {
        SketchMethod::Gaussian => {
            let scale = 1.0 / (p as f64).sqrt();
            // Column-major fill; the apply path consumes the stream in the
            // same order, so both routes see identical entries.
            DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
        }
        SketchMethod::Achlioptas => {
            let scale = (3.0 / p as f64).sqrt();
            DMatrix::from_fn(n, p, |_, _| match rng.gen_range(0u32..6) {
                0 => scale,
                1 => -scale,
                _ => 0.0,
            })
        }
        SketchMethod::Fjlt => {
            let (signs, rows) = fjlt_support(&mut rng, n, p);
            let scale = 1.0 / (p as f64).sqrt();
            DMatrix::from_fn(n, p, |i, j| {
                let sign = if (i & rows[j]).count_ones() % 2 == 0 {
                    signs[i]
                } else {
                    -signs[i]
                };
                sign * scale
            })
        }
    };
    Ok(SketchDraw {
        matrix,
        iteration_index,
    })
}

/// Random signs over the padded dimension, then p distinct transform rows.
/// Draw order is part of the reproducibility contract.
fn fjlt_support(rng: &mut impl Rng, n: usize, p: usize) -> (Vec<f64>, Vec<usize>) {
    let n2 = n.next_power_of_two();
    let signs: Vec<f64> = (0..n2)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut perm: Vec<usize> = (0..n2).collect();
    for t in 0..p {
        let pick = rng.gen_range(t..n2.max(t + 1));
        perm.swap(t, pick.min(n2 - 1));
    }
    let mut rows = perm;
    rows.truncate(p.min(n2));
    // With p > n2 the transform has no p distinct rows; cycle deterministically.
    while rows.len() < p {
        let idx = rows.len() % n2;
        rows.push(idx);
    }
    (signs, rows)
}

/// Computes S^T z for the sketch of one iteration without materializing S.
/// Matches `draw_sketch(..).matrix.transpose() * z` to rounding; for the
/// Gaussian and Achlioptas methods the entries are consumed in the same
/// order, so the result is bit-identical to a same-order accumulation.
pub fn sketch_transpose_apply(
    spec: &SketchSpec,
    n: usize,
    p: usize,
    iteration_index: u64,
    z: &DVector<f64>,
) -> Result<DVector<f64>, SketchError> {
    spec.validate()?;
    if n == 0 || p == 0 {
        return Err(SketchError::EmptyDimension { n, p });
    }
    if z.len() != n {
        return Err(SketchError::ProbeLength { got: z.len(), n });
    }
    let mut rng = keyed_rng(spec.seed, DOMAIN_SKETCH, iteration_index);
    let mut out = DVector::zeros(p);
    match spec.method {
        SketchMethod::Gaussian => {
            let scale = 1.0 / (p as f64).sqrt();
            for j in 0..p {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += rng.sample::<f64, _>(StandardNormal) * scale * z[i];
                }
                out[j] = acc;
            }
        }
        SketchMethod::Achlioptas => {
            let scale = (3.0 / p as f64).sqrt();
            for j in 0..p {
                let mut acc = 0.0;
                for i in 0..n {
                    match rng.gen_range(0u32..6) {
                        0 => acc += scale * z[i],
                        1 => acc -= scale * z[i],
                        _ => {}
                    }
                }
                out[j] = acc;
            }
        }
        SketchMethod::Fjlt => {
            let (signs, rows) = fjlt_support(&mut rng, n, p);
            let n2 = n.next_power_of_two();
            let mut w = vec![0.0f64; n2];
            for i in 0..n {
                w[i] = signs[i] * z[i];
            }
            fwht(&mut w);
            let scale = 1.0 / (p as f64).sqrt();
            for j in 0..p {
                out[j] = w[rows[j]] * scale;
            }
        }
    }
    Ok(out)
}

/// In-place unnormalized Walsh-Hadamard transform; length must be a power of
/// two. Sign convention: (Hw)[r] = sum_i (-1)^popcount(r & i) w[i].
fn fwht(w: &mut [f64]) {
    let n = w.len();
    let mut len = 1;
    while len < n {
        let mut i = 0;
        while i < n {
            for k in i..i + len {
                let a = w[k];
                let b = w[k + len];
                w[k] = a + b;
                w[k + len] = a - b;
            }
            i += len << 1;
        }
        len <<= 1;
    }
}

/// Smallest embedding dimension p strictly exceeding
/// ln(2)/c * max(omega^2, 1/delta^2).
pub fn min_embedding_dim(c: f64, omega: f64, delta: f64) -> Result<usize, SketchError> {
    if !(c.is_finite() && c > 0.0) || !(omega.is_finite() && omega > 0.0) {
        return Err(SketchError::BadConstants { c, omega, eta: 1.0 });
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(SketchError::BadDelta { delta });
    }
    let bound = std::f64::consts::LN_2 / c * omega.powi(2).max(delta.powi(-2));
    if !bound.is_finite() || bound >= usize::MAX as f64 {
        return Err(SketchError::BoundOverflow { c, omega, delta });
    }
    // Nudge values a few ulps under an integer back onto it, so reconstructed
    // round bounds (e.g. exactly 22) stay strictly exceeded.
    let guarded = bound * (1.0 + 4.0 * f64::EPSILON);
    Ok(guarded.floor() as usize + 1)
}

/// Result of an empirical tail fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub method: SketchMethod,
    pub c: f64,
    pub omega: f64,
    /// Sample mean of ||S^T z||^2 / ||z||^2 over the trials.
    pub mean_sq: f64,
    /// Standard error of that mean.
    pub se_mean: f64,
    /// Exceedance frequency per epsilon grid point.
    pub frequencies: Vec<f64>,
    pub trials: usize,
}

/// Cap for the fitted tail constant when no exceedances are observed.
pub const MAX_CALIBRATED_C: f64 = 16.0;

const OMEGA_LADDER: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Fits conservative (C, omega) so the sub-exponential tail bound holds at
/// every grid point for the observed frequencies. Among feasible pairs, the
/// one minimizing the implied embedding dimension ln(2)/C * max(omega^2, 1)
/// wins, ties toward the smaller omega; with zero observed exceedance C is
/// capped at [`MAX_CALIBRATED_C`]. The probe defaults to a seeded unit
/// vector.
pub fn calibrate_constants(
    method: SketchMethod,
    n: usize,
    p: usize,
    trials: usize,
    epsilon_grid: &[f64],
    probe: Option<&DVector<f64>>,
    seed: u64,
) -> Result<Calibration, SketchError> {
    let spec = SketchSpec::new(method, seed);
    if n == 0 || p == 0 {
        return Err(SketchError::EmptyDimension { n, p });
    }
    let z = match probe {
        Some(v) => {
            if v.len() != n {
                return Err(SketchError::ProbeLength { got: v.len(), n });
            }
            v.clone()
        }
        None => {
            let mut rng = keyed_rng(seed, DOMAIN_PROBE, 0);
            DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
        }
    };
    calibrate_with(method, p, trials, epsilon_grid, &z, |k, z| {
        sketch_transpose_apply(&spec, n, p, k, z).expect("validated dimensions")
    })
}

/// Calibration against an arbitrary draw map (k, z) -> S_k^T z; the public
/// entry point fixes the map to the keyed sketch stream.
pub(crate) fn calibrate_with(
    method: SketchMethod,
    p: usize,
    trials: usize,
    epsilon_grid: &[f64],
    z: &DVector<f64>,
    apply: impl Fn(u64, &DVector<f64>) -> DVector<f64>,
) -> Result<Calibration, SketchError> {
    if trials == 0 {
        return Err(SketchError::NoTrials);
    }
    if epsilon_grid.is_empty() || epsilon_grid.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(SketchError::BadGrid);
    }
    let z_sq = z.norm_squared();
    if z_sq == 0.0 {
        return Err(SketchError::DegenerateProbe);
    }
    let mut exceed = vec![0usize; epsilon_grid.len()];
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for k in 0..trials {
        let y = apply(k as u64, z);
        let ratio = y.norm_squared() / z_sq;
        let dev = (ratio - 1.0).abs();
        for (cnt, &eps) in exceed.iter_mut().zip(epsilon_grid) {
            if dev > eps {
                *cnt += 1;
            }
        }
        // Welford running mean and scatter.
        let delta = ratio - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (ratio - mean);
    }
    let frequencies: Vec<f64> = exceed.iter().map(|&c| c as f64 / trials as f64).collect();
    let se_mean = if trials > 1 {
        (m2 / (trials as f64 - 1.0) / trials as f64).sqrt()
    } else {
        0.0
    };

    // Feasible C for a given omega: the bound 2 exp(-C p min(eps^2, eps/om))
    // must sit above every observed frequency.
    let c_for = |omega: f64| -> f64 {
        let mut c = MAX_CALIBRATED_C;
        for (&freq, &eps) in frequencies.iter().zip(epsilon_grid) {
            if freq > 0.0 {
                let branch = (eps * eps).min(eps / omega);
                // The tightest C makes the bound touch the frequency; back
                // off a hair so re-evaluating it in floating point still
                // strictly dominates the observation.
                c = c.min(-(freq / 2.0).ln() / (p as f64 * branch) * (1.0 - 1e-9));
            }
        }
        c
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for &omega in &OMEGA_LADDER {
        let c = c_for(omega);
        if c <= 0.0 {
            continue;
        }
        let implied_dim = std::f64::consts::LN_2 / c * omega.max(1.0).powi(2);
        let better = match best {
            None => true,
            Some((dim, _, best_omega)) => {
                implied_dim < dim * (1.0 - 1e-12)
                    || ((implied_dim - dim).abs() <= dim * 1e-12 && omega < best_omega)
            }
        };
        if better {
            best = Some((implied_dim, c, omega));
        }
    }
    let (_, c, omega) = best.expect("ladder always yields a positive C");
    Ok(Calibration {
        method,
        c,
        omega,
        mean_sq: mean,
        se_mean,
        frequencies,
        trials,
    })
}
