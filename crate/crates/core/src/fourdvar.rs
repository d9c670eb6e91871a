//! Streaming four-dimensional variational assimilation for the 1-D
//! shallow-water model, solved by the same sketched block iteration as the
//! dense solver but without ever materializing the full system.
//!
//! Given a background initial state z_b, a previous estimate z_prev, and
//! height observations y_1..y_Nt along the window, the increment x solves
//! the least-squares problem whose residual blocks are
//!
//!   block 0:      x + (z_prev - z_b)                 weighted by V
//!   block i>=1:   H M_{0,i} x - (y_i - H(x_i))       weighted by W
//!
//! where x_i is the trajectory propagated from z_prev, M_{0,i} is the
//! tangent of i model steps at that trajectory, and H observes heights
//! only. Each iteration draws a sketch S, sweeps the window once — rows of
//! the compressed system [V^(1/2) S; W^(1/2) H M_{0,i} S] stream into a
//! square-root-free row accumulator while the sketched gradient
//! accumulates on the side — solves the small system, and steps
//! x <- x - S u. Nothing larger than the state-by-embedding tangent block
//! or the p x p accumulator is ever alive; an allocation probe in the
//! report records the matrix buffer sizes for auditing.

use nalgebra::DVector;
use thiserror::Error;

use crate::rowstream::{GentlemanState, RowStreamError};
use crate::shallow_water::{ShallowWaterError, SwState};
use crate::sketch::{draw_sketch, SketchError, SketchSpec};
use crate::solver::{IterationRecord, StopReason};
use crate::tracker::{TailParams, TrackerConfig, TrackerError, TrackerState};

#[derive(Debug, Error)]
pub enum FourDVarError {
    #[error("assimilation window has no observations")]
    NoObservations,
    #[error("observation {index} has length {got}, expected {expected}")]
    ObservationShape {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("observation {index} contains non-finite values")]
    ObservationValue { index: usize },
    #[error("previous estimate has length {got}, expected {expected}, or holds non-finite values")]
    PrevEstimateShape { got: usize, expected: usize },
    #[error("{which} weight has length {got}, expected {expected}")]
    WeightShape {
        which: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{which} weight entry {index} is {value}; all must be positive and finite")]
    WeightValue {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("embedding dimension must be at least 1")]
    BadEmbedding,
    #[error("iteration budget must be at least 1")]
    BadIterationBudget,
    #[error("iterate has length {got}, expected {expected}")]
    IterateShape { got: usize, expected: usize },
    #[error("non-finite quantity at iteration {iteration}; the run is numerically dead")]
    NonFinite { iteration: u64 },
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    ShallowWater(#[from] ShallowWaterError),
    #[error(transparent)]
    RowStream(#[from] RowStreamError),
}

/// Assimilation window: background state, linearization point, height
/// observations, and diagonal weights.
#[derive(Debug, Clone)]
pub struct FourDVarProblem {
    background: SwState,
    prev_estimate: DVector<f64>,
    observations: Vec<DVector<f64>>,
    background_weight: Option<DVector<f64>>,
    observation_weight: Option<DVector<f64>>,
}

impl FourDVarProblem {
    /// `observations[i]` is the stacked observation vector taken after
    /// i + 1 model steps; only its height half is used. The previous
    /// estimate defaults to the background.
    pub fn new(
        background: SwState,
        observations: Vec<DVector<f64>>,
    ) -> Result<Self, FourDVarError> {
        if observations.is_empty() {
            return Err(FourDVarError::NoObservations);
        }
        let ns = 2 * background.n_cells();
        for (index, y) in observations.iter().enumerate() {
            if y.len() != ns {
                return Err(FourDVarError::ObservationShape {
                    index,
                    got: y.len(),
                    expected: ns,
                });
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(FourDVarError::ObservationValue { index });
            }
        }
        let prev_estimate = background.state_vector();
        Ok(FourDVarProblem {
            background,
            prev_estimate,
            observations,
            background_weight: None,
            observation_weight: None,
        })
    }

    /// Replaces the linearization point (kept at the background by
    /// default).
    pub fn with_prev_estimate(mut self, z: DVector<f64>) -> Result<Self, FourDVarError> {
        let ns = self.state_dim();
        if z.len() != ns || z.iter().any(|v| !v.is_finite()) {
            return Err(FourDVarError::PrevEstimateShape {
                got: z.len(),
                expected: ns,
            });
        }
        self.prev_estimate = z;
        Ok(self)
    }

    pub fn with_background_weight(mut self, w: DVector<f64>) -> Result<Self, FourDVarError> {
        validate_weight("background", &w, self.state_dim())?;
        self.background_weight = Some(w);
        Ok(self)
    }

    pub fn with_observation_weight(mut self, w: DVector<f64>) -> Result<Self, FourDVarError> {
        validate_weight("observation", &w, self.state_dim())?;
        self.observation_weight = Some(w);
        Ok(self)
    }

    pub fn background(&self) -> &SwState {
        &self.background
    }

    pub fn prev_estimate(&self) -> &DVector<f64> {
        &self.prev_estimate
    }

    pub fn observations(&self) -> &[DVector<f64>] {
        &self.observations
    }

    /// Number of model steps in the window.
    pub fn n_steps(&self) -> usize {
        self.observations.len()
    }

    /// Stacked state dimension 2 * cells.
    pub fn state_dim(&self) -> usize {
        2 * self.background.n_cells()
    }

    fn v_weight(&self, j: usize) -> f64 {
        self.background_weight.as_ref().map_or(1.0, |w| w[j])
    }

    fn w_weight(&self, j: usize) -> f64 {
        self.observation_weight.as_ref().map_or(1.0, |w| w[j])
    }

    /// Weighted squared objective at increment `x`, computed in one sweep
    /// over the window.
    pub fn inner_objective(&self, x: &DVector<f64>) -> Result<f64, FourDVarError> {
        let ns = self.state_dim();
        let nc = ns / 2;
        if x.len() != ns {
            return Err(FourDVarError::IterateShape {
                got: x.len(),
                expected: ns,
            });
        }
        let mut total = 0.0;
        for j in 0..ns {
            let r = x[j] + self.prev_estimate[j] - self.background.state_vector()[j];
            total += self.v_weight(j) * r * r;
        }
        let mut state = self.background.with_state_vector(&self.prev_estimate)?;
        let mut w = x.clone();
        for y in &self.observations {
            let jac = state.jacobian();
            state = state.step();
            w = jac.apply_vec(&w);
            for j in 0..nc {
                let d = y[j] - state.phi()[j];
                let r = w[j] - d;
                total += self.w_weight(j) * r * r;
            }
        }
        Ok(total)
    }

    /// Square root of the weighted objective: the streamed residual norm.
    pub fn streamed_residual(&self, x: &DVector<f64>) -> Result<f64, FourDVarError> {
        Ok(self.inner_objective(x)?.sqrt())
    }
}

fn validate_weight(
    which: &'static str,
    w: &DVector<f64>,
    expected: usize,
) -> Result<(), FourDVarError> {
    if w.len() != expected {
        return Err(FourDVarError::WeightShape {
            which,
            got: w.len(),
            expected,
        });
    }
    for (index, &value) in w.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(FourDVarError::WeightValue {
                which,
                index,
                value,
            });
        }
    }
    Ok(())
}

/// Embedding dimension, iteration budget, and tracker settings for one
/// assimilation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourDVarConfig {
    pub p: usize,
    pub max_iterations: u64,
    pub tracker: TrackerConfig,
}

/// Sizes (in f64 entries) of the matrix buffers a run allocated, by site.
/// The point of the streaming design is that the maximum stays at
/// max(state_dim * p, p^2)-order no matter how long the window is.
#[derive(Debug, Clone, Default)]
pub struct AllocProbe {
    sites: Vec<(&'static str, usize)>,
}

impl AllocProbe {
    fn note(&mut self, label: &'static str, entries: usize) {
        match self.sites.iter_mut().find(|(l, _)| *l == label) {
            Some((_, e)) => *e = (*e).max(entries),
            None => self.sites.push((label, entries)),
        }
    }

    pub fn sites(&self) -> &[(&'static str, usize)] {
        &self.sites
    }

    /// Largest single matrix buffer seen, in entries.
    pub fn largest_entries(&self) -> usize {
        self.sites.iter().map(|&(_, e)| e).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct AssimilationReport {
    /// Final increment in stacked coordinates.
    pub increment: DVector<f64>,
    /// Previous estimate plus the increment, as a model state.
    pub analysis: SwState,
    pub iterations: u64,
    pub stop_reason: StopReason,
    pub trace: Vec<IterationRecord>,
    pub alloc: AllocProbe,
}

/// Runs the sketched streaming iteration on the window's increment
/// problem.
pub fn assimilate(
    problem: &FourDVarProblem,
    sketch: &SketchSpec,
    config: &FourDVarConfig,
) -> Result<AssimilationReport, FourDVarError> {
    sketch.validate()?;
    if config.p == 0 {
        return Err(FourDVarError::BadEmbedding);
    }
    if config.max_iterations == 0 {
        return Err(FourDVarError::BadIterationBudget);
    }
    let ns = problem.state_dim();
    let nc = ns / 2;
    let p = config.p;
    let tail = TailParams {
        c: sketch.c,
        omega: sketch.omega,
        eta: sketch.eta,
        p,
    };
    let mut tracker = TrackerState::new(config.tracker, tail)?;
    let mut probe = AllocProbe::default();
    probe.note("row accumulator (packed)", p * (p + 5) / 2);

    let z_b = problem.background.state_vector();
    let mut x = DVector::zeros(ns);
    let mut gent = GentlemanState::new(p);
    let mut row_buf = vec![0.0; p];
    let reserve = config.max_iterations.min(16_384) as usize;
    let mut trace: Vec<IterationRecord> = Vec::with_capacity(reserve);
    let mut iterations = 0;
    let mut stop_reason = StopReason::MaxIterations;

    for k in 0..config.max_iterations {
        let draw = draw_sketch(sketch, ns, p, k)?;
        probe.note("sketch", ns * p);
        gent.reset();
        let mut g_tilde: DVector<f64> = DVector::zeros(p);

        // Background block: rows of S against x + (z_prev - z_b).
        for j in 0..ns {
            let weight = problem.v_weight(j);
            let rhs = x[j] + problem.prev_estimate[j] - z_b[j];
            for (q, slot) in row_buf.iter_mut().enumerate() {
                *slot = draw.matrix[(j, q)];
            }
            gent.include_row(weight, &row_buf, rhs)?;
            for (q, slot) in row_buf.iter().enumerate() {
                g_tilde[q] += weight * rhs * slot;
            }
        }

        // Window sweep: propagate the tangent block and the increment,
        // streaming each step's height rows.
        let mut t = draw.matrix.clone();
        probe.note("tangent block", ns * p);
        let mut w = x.clone();
        let mut state = problem
            .background
            .with_state_vector(&problem.prev_estimate)?;
        for y in &problem.observations {
            let jac = state.jacobian();
            // Eleven coefficient arrays of one entry per cell; the probe
            // tracks single buffers.
            probe.note("step tangent stencil (per coefficient array)", nc);
            state = state.step();
            t = jac.apply_mat(&t);
            w = jac.apply_vec(&w);
            for j in 0..nc {
                let weight = problem.w_weight(j);
                let d = y[j] - state.phi()[j];
                let rhs = w[j] - d;
                for (q, slot) in row_buf.iter_mut().enumerate() {
                    *slot = t[(j, q)];
                }
                gent.include_row(weight, &row_buf, rhs)?;
                for (q, slot) in row_buf.iter().enumerate() {
                    g_tilde[q] += weight * rhs * slot;
                }
            }
        }

        let value = g_tilde.norm_squared();
        if !value.is_finite() {
            return Err(FourDVarError::NonFinite { iteration: k });
        }
        let ci_pre = tracker.credible_interval();
        let est = tracker.push_and_estimate(value)?;
        let ci_post = tracker.credible_interval();

        let u = gent.solve();
        x -= &draw.matrix * u;
        if x.iter().any(|e| !e.is_finite()) {
            return Err(FourDVarError::NonFinite { iteration: k });
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
            oracle: None,
        });
        if verdict.stop {
            stop_reason = StopReason::StoppingRule;
            break;
        }
        tracker.adapt_window(value, &ci_pre);
    }

    let analysis = problem
        .background
        .with_state_vector(&(&problem.prev_estimate + &x))?;
    Ok(AssimilationReport {
        increment: x,
        analysis,
        iterations,
        stop_reason,
        trace,
        alloc: probe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shallow_water::{generate_observations, simulate, Boundary};
    use crate::sketch::SketchMethod;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn truth_state(nc: usize) -> SwState {
        SwState::new(
            DVector::from_fn(nc, |i, _| 1.0 + 0.3 * (i as f64 * 0.9).sin()),
            DVector::from_fn(nc, |i, _| 0.2 * (i as f64 * 1.3).cos()),
            0.8,
            0.05,
            Boundary::Periodic,
        )
        .unwrap()
    }

    fn background_state(nc: usize) -> SwState {
        let truth = truth_state(nc);
        let phi = truth.phi().map(|v| v + 0.05);
        let u = truth.u().map(|v| v - 0.03);
        SwState::new(phi, u, truth.dx(), truth.dt(), truth.boundary()).unwrap()
    }

    fn small_problem(nc: usize, nt: usize, sigma: f64, seed: u64) -> FourDVarProblem {
        let truth = truth_state(nc);
        let traj = simulate(&truth, nt);
        let obs = generate_observations(&traj, sigma, seed).unwrap()[1..].to_vec();
        FourDVarProblem::new(background_state(nc), obs).unwrap()
    }

    fn tracker_config(upsilon: f64) -> TrackerConfig {
        TrackerConfig {
            lambda1: 1,
            lambda2: 20,
            alpha: 0.05,
            upsilon,
            delta_i: 0.9,
            delta_ii: 1.1,
            xi_i: 0.05,
            xi_ii: 0.05,
        }
    }

    /// Independent dense assembly of the same window: tangent blocks by
    /// dense products, weighted least squares by SVD.
    fn dense_solution(problem: &FourDVarProblem) -> (DVector<f64>, f64) {
        let ns = problem.state_dim();
        let nc = ns / 2;
        let nt = problem.n_steps();
        let rows = ns + nt * nc;
        let mut a = DMatrix::zeros(rows, ns);
        let mut b = DVector::zeros(rows);
        let mut weights = DVector::zeros(rows);
        let z_b = problem.background().state_vector();
        for j in 0..ns {
            a[(j, j)] = 1.0;
            b[j] = z_b[j] - problem.prev_estimate()[j];
            weights[j] = problem.v_weight(j);
        }
        let mut propagated = DMatrix::identity(ns, ns);
        let mut state = problem
            .background()
            .with_state_vector(problem.prev_estimate())
            .unwrap();
        for (i, y) in problem.observations().iter().enumerate() {
            let jac = state.jacobian().to_dense();
            state = state.step();
            propagated = &jac * &propagated;
            for j in 0..nc {
                let row = ns + i * nc + j;
                for c in 0..ns {
                    a[(row, c)] = propagated[(j, c)];
                }
                b[row] = y[j] - state.phi()[j];
                weights[row] = problem.w_weight(j);
            }
        }
        let mut scaled_a = a.clone();
        let mut scaled_b = b.clone();
        for r in 0..rows {
            let s = weights[r].sqrt();
            for c in 0..ns {
                scaled_a[(r, c)] *= s;
            }
            scaled_b[r] *= s;
        }
        let svd = scaled_a.clone().svd(true, true);
        let x = svd.solve(&scaled_b, 1e-12).unwrap();
        let residual = (&scaled_a * &x - &scaled_b).norm();
        (x, residual)
    }

    #[test]
    fn full_dimension_sketch_reaches_the_dense_solution_in_one_step() {
        let problem = small_problem(3, 2, 0.02, 5);
        let ns = problem.state_dim();
        let config = FourDVarConfig {
            p: ns,
            max_iterations: 4,
            tracker: tracker_config(1e-300),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, 11);
        let report = assimilate(&problem, &spec, &config).unwrap();
        let (x_dense, res_dense) = dense_solution(&problem);
        assert_relative_eq!(report.increment, x_dense, max_relative = 1e-8);
        let res_stream = problem.streamed_residual(&report.increment).unwrap();
        assert_relative_eq!(res_stream, res_dense, max_relative = 1e-8);
    }

    #[test]
    fn weighted_offset_background_pins_the_sign_convention() {
        let nc = 3;
        let base = small_problem(nc, 2, 0.05, 9);
        let ns = 2 * nc;
        let z_prev = DVector::from_fn(ns, |i, _| {
            base.background().state_vector()[i] + 0.02 * ((i + 1) as f64)
        });
        let problem = base
            .with_prev_estimate(z_prev)
            .unwrap()
            .with_background_weight(DVector::from_fn(ns, |i, _| 1.0 + 0.1 * i as f64))
            .unwrap()
            .with_observation_weight(DVector::from_fn(ns, |i, _| 2.0 - 0.1 * i as f64))
            .unwrap();
        let config = FourDVarConfig {
            p: ns,
            max_iterations: 4,
            tracker: tracker_config(1e-300),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, 13);
        let report = assimilate(&problem, &spec, &config).unwrap();
        let (x_dense, res_dense) = dense_solution(&problem);
        assert_relative_eq!(report.increment, x_dense, max_relative = 1e-8);
        let res_stream = problem.streamed_residual(&report.increment).unwrap();
        assert_relative_eq!(res_stream, res_dense, max_relative = 1e-8);
    }

    #[test]
    fn compressed_sketches_converge_to_the_dense_residual() {
        let problem = small_problem(4, 3, 0.03, 17);
        let config = FourDVarConfig {
            p: 4,
            max_iterations: 600,
            tracker: tracker_config(1e-300),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, 29);
        let report = assimilate(&problem, &spec, &config).unwrap();
        let (x_dense, res_dense) = dense_solution(&problem);
        assert_relative_eq!(report.increment, x_dense, max_relative = 1e-5);
        let res_stream = problem.streamed_residual(&report.increment).unwrap();
        assert!((res_stream - res_dense).abs() <= 1e-6 * res_dense.max(1.0));
    }

    #[test]
    fn streamed_objective_matches_dense_evaluation_at_any_point() {
        let problem = small_problem(5, 3, 0.1, 23);
        let ns = problem.state_dim();
        let x = DVector::from_fn(ns, |i, _| 0.05 * ((i as f64) - 3.0));
        // Dense evaluation with the same assembly as the oracle.
        let nc = ns / 2;
        let mut dense = 0.0;
        let z_b = problem.background().state_vector();
        for j in 0..ns {
            let r = x[j] + problem.prev_estimate()[j] - z_b[j];
            dense += problem.v_weight(j) * r * r;
        }
        let mut propagated = DMatrix::identity(ns, ns);
        let mut state = problem
            .background()
            .with_state_vector(problem.prev_estimate())
            .unwrap();
        for y in problem.observations() {
            let jac = state.jacobian().to_dense();
            state = state.step();
            propagated = &jac * &propagated;
            let hx = propagated.rows(0, nc) * &x;
            for j in 0..nc {
                let r = hx[j] - (y[j] - state.phi()[j]);
                dense += problem.w_weight(j) * r * r;
            }
        }
        let streamed = problem.inner_objective(&x).unwrap();
        assert_relative_eq!(streamed, dense, max_relative = 1e-12);
    }

    #[test]
    fn identical_seeds_reproduce_the_assimilation() {
        let problem = small_problem(4, 2, 0.05, 31);
        let config = FourDVarConfig {
            p: 3,
            max_iterations: 40,
            tracker: tracker_config(1e-300),
        };
        let spec = SketchSpec::new(SketchMethod::Achlioptas, 37);
        let a = assimilate(&problem, &spec, &config).unwrap();
        let b = assimilate(&problem, &spec, &config).unwrap();
        assert_eq!(a.increment, b.increment);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn stopping_rule_ends_the_run_early() {
        let problem = small_problem(4, 2, 0.02, 41);
        let g0 = {
            // Size the target from the first sketched push of a probe run.
            let config = FourDVarConfig {
                p: 4,
                max_iterations: 1,
                tracker: tracker_config(1e-300),
            };
            let spec = SketchSpec::new(SketchMethod::Gaussian, 43);
            assimilate(&problem, &spec, &config).unwrap().trace[0].value
        };
        let config = FourDVarConfig {
            p: 4,
            max_iterations: 3_000,
            tracker: tracker_config(1e-8 * g0.max(1e-12)),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, 43);
        let report = assimilate(&problem, &spec, &config).unwrap();
        assert_eq!(report.stop_reason, StopReason::StoppingRule);
        assert!(report.iterations < 3_000);
    }

    #[test]
    fn allocation_probe_stays_within_the_streaming_contract() {
        let problem = small_problem(20, 10, 0.05, 47);
        let ns = problem.state_dim();
        let p = 5;
        let config = FourDVarConfig {
            p,
            max_iterations: 5,
            tracker: tracker_config(1e-300),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, 53);
        let report = assimilate(&problem, &spec, &config).unwrap();
        let bound = (ns * p).max(p * p);
        assert!(
            report.alloc.largest_entries() <= bound,
            "largest matrix {} exceeds contract {}",
            report.alloc.largest_entries(),
            bound
        );
        assert!(report
            .alloc
            .sites()
            .iter()
            .any(|&(label, _)| label.contains("tangent block")));
    }

    #[test]
    fn observation_velocity_half_is_ignored() {
        let nc = 3;
        let truth = truth_state(nc);
        let traj = simulate(&truth, 2);
        let mut obs = generate_observations(&traj, 0.02, 5).unwrap()[1..].to_vec();
        let clean = FourDVarProblem::new(background_state(nc), obs.clone()).unwrap();
        for y in &mut obs {
            for j in nc..2 * nc {
                y[j] = 123.0 + j as f64;
            }
        }
        let noisy_u = FourDVarProblem::new(background_state(nc), obs).unwrap();
        let config = FourDVarConfig {
            p: 4,
            max_iterations: 30,
            tracker: tracker_config(1e-300),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, 59);
        let a = assimilate(&clean, &spec, &config).unwrap();
        let b = assimilate(&noisy_u, &spec, &config).unwrap();
        assert_eq!(a.increment, b.increment);
    }

    #[test]
    fn analysis_state_is_prev_estimate_plus_increment() {
        let problem = small_problem(4, 2, 0.05, 61);
        let config = FourDVarConfig {
            p: 3,
            max_iterations: 20,
            tracker: tracker_config(1e-300),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, 67);
        let report = assimilate(&problem, &spec, &config).unwrap();
        let expected = problem.prev_estimate() + &report.increment;
        assert_eq!(report.analysis.state_vector(), expected);
    }

    #[test]
    fn rejects_malformed_problems_and_configs() {
        let bg = background_state(3);
        assert!(matches!(
            FourDVarProblem::new(bg.clone(), vec![]),
            Err(FourDVarError::NoObservations)
        ));
        assert!(matches!(
            FourDVarProblem::new(bg.clone(), vec![DVector::zeros(5)]),
            Err(FourDVarError::ObservationShape { .. })
        ));
        assert!(
            FourDVarProblem::new(bg.clone(), vec![DVector::from_element(6, f64::NAN)]).is_err()
        );
        let problem = FourDVarProblem::new(bg.clone(), vec![DVector::zeros(6)]).unwrap();
        assert!(problem
            .clone()
            .with_prev_estimate(DVector::zeros(4))
            .is_err());
        assert!(problem
            .clone()
            .with_background_weight(DVector::zeros(6))
            .is_err());
        assert!(problem
            .clone()
            .with_observation_weight(DVector::from_element(4, 1.0))
            .is_err());
        let spec = SketchSpec::new(SketchMethod::Gaussian, 1);
        let bad = FourDVarConfig {
            p: 0,
            max_iterations: 10,
            tracker: tracker_config(1.0),
        };
        assert!(matches!(
            assimilate(&problem, &spec, &bad),
            Err(FourDVarError::BadEmbedding)
        ));
        let bad = FourDVarConfig {
            p: 2,
            max_iterations: 0,
            tracker: tracker_config(1.0),
        };
        assert!(matches!(
            assimilate(&problem, &spec, &bad),
            Err(FourDVarError::BadIterationBudget)
        ));
        assert!(problem.inner_objective(&DVector::zeros(3)).is_err());
    }
}
