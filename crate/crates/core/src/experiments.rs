//! Reproducible statistical studies over the sketched solver: estimator
//! consistency along the iteration, credible-interval coverage under
//! re-runs from checkpoints, and stopping-error frequencies. Each study
//! runs its matrix-by-method cells on a work pool and merges results by
//! cell index, so reports are deterministic under a fixed seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::gallery::{generate, rectangularize, GalleryError, GeneratorKind};
use crate::sketch::{SketchMethod, SketchSpec};
use crate::solver::{solve, OracleConfig, SolverConfig, SolverError};
use crate::streams::{derive_seed, keyed_rng, DOMAIN_EXPERIMENT, DOMAIN_RERUN};
use crate::tracker::{stopping_threshold, TailParams, TrackerConfig, TrackerError};
use crate::wls::{WlsError, WlsProblem};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment needs at least one cell")]
    NoCells,
    #[error("{what} must be at least 1")]
    BadCount { what: &'static str },
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Wls(#[from] WlsError),
}

/// Matrix families a study cell can draw from. Square generators are
/// embedded into the requested shape; the dense family is drawn at shape
/// directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellGenerator {
    Hadamard,
    Golub,
    Rohess,
    Wilkinson,
    RandIllcond,
    RandDense,
}

impl CellGenerator {
    pub fn all() -> [CellGenerator; 6] {
        [
            CellGenerator::Hadamard,
            CellGenerator::Golub,
            CellGenerator::Rohess,
            CellGenerator::Wilkinson,
            CellGenerator::RandIllcond,
            CellGenerator::RandDense,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            CellGenerator::Hadamard => "hadamard",
            CellGenerator::Golub => "golub",
            CellGenerator::Rohess => "rohess",
            CellGenerator::Wilkinson => "wilkinson",
            CellGenerator::RandIllcond => "rand_illcond",
            CellGenerator::RandDense => "rand_dense",
        }
    }

    fn index(self) -> u64 {
        match self {
            CellGenerator::Hadamard => 0,
            CellGenerator::Golub => 1,
            CellGenerator::Rohess => 2,
            CellGenerator::Wilkinson => 3,
            CellGenerator::RandIllcond => 4,
            CellGenerator::RandDense => 5,
        }
    }
}

/// One matrix-family-by-sketch-method study cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSpec {
    pub generator: CellGenerator,
    pub method: SketchMethod,
}

/// The full six-generator by three-method grid.
pub fn standard_cells() -> Vec<CellSpec> {
    let methods = [
        SketchMethod::Gaussian,
        SketchMethod::Achlioptas,
        SketchMethod::Fjlt,
    ];
    let mut cells = Vec::with_capacity(18);
    for generator in CellGenerator::all() {
        for method in methods {
            cells.push(CellSpec { generator, method });
        }
    }
    cells
}

/// Condition-number target for the ill-conditioned random family.
const ILLCOND_TARGET: f64 = 1e3;

fn cell_matrix(
    generator: CellGenerator,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<DMatrix<f64>, ExperimentError> {
    let gseed = derive_seed(seed, &[generator.index(), 1]);
    let rseed = derive_seed(seed, &[generator.index(), 2]);
    let square = match generator {
        CellGenerator::Hadamard => generate(&GeneratorKind::Hadamard { n: cols })?,
        CellGenerator::Golub => generate(&GeneratorKind::Golub {
            n: cols,
            seed: gseed,
        })?,
        CellGenerator::Rohess => generate(&GeneratorKind::Rohess {
            n: cols,
            seed: gseed,
        })?,
        CellGenerator::Wilkinson => generate(&GeneratorKind::Wilkinson { n: cols })?,
        CellGenerator::RandIllcond => generate(&GeneratorKind::RandIllcond {
            n: cols,
            cond: ILLCOND_TARGET,
            seed: gseed,
        })?,
        CellGenerator::RandDense => {
            return Ok(generate(&GeneratorKind::RandDense {
                rows,
                cols,
                seed: gseed,
            })?)
        }
    };
    Ok(rectangularize(&square, rows, cols, rseed)?)
}

fn cell_rhs(rows: usize, seed: u64, cell_index: usize) -> DVector<f64> {
    let mut rng = keyed_rng(
        derive_seed(seed, &[cell_index as u64]),
        DOMAIN_EXPERIMENT,
        0,
    );
    DVector::from_fn(rows, |_, _| rng.sample(StandardNormal))
}

/// A target stopping level so small the rule cannot fire; used when a
/// study must observe the full horizon.
fn never_stop_upsilon() -> f64 {
    f64::MIN_POSITIVE
}

fn rel_err(estimate: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (estimate - truth).abs() / truth
    }
}

/// Linear-interpolation percentile; `q` in [0, 1]. NaN on empty input.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Medians of the first and second halves of a series, for trend checks.
pub fn median_halves(series: &[f64]) -> (f64, f64) {
    let mid = series.len() / 2;
    (
        percentile(&series[..mid], 0.5),
        percentile(&series[mid..], 0.5),
    )
}

// ---------------------------------------------------------------------------
// Consistency study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyConfig {
    pub cells: Vec<CellSpec>,
    pub rows: usize,
    pub cols: usize,
    pub p: usize,
    pub lambda1: usize,
    pub lambda2: usize,
    pub alpha: f64,
    pub iterations: u64,
    pub seed: u64,
    /// Pushes exact values into the tracker; every relative error is then
    /// exactly zero, which pins the harness itself.
    pub feed_exact: bool,
}

impl ConsistencyConfig {
    pub fn desk_scale(seed: u64) -> Self {
        ConsistencyConfig {
            cells: standard_cells(),
            rows: 256,
            cols: 128,
            p: 20,
            lambda1: 1,
            lambda2: 100,
            alpha: 0.05,
            iterations: 2_000,
            seed,
            feed_exact: false,
        }
    }
}

/// Estimates and their exact windowed counterparts at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRecord {
    pub iteration: u64,
    pub rho_tilde: f64,
    pub rho: f64,
    pub iota_tilde: f64,
    pub iota: f64,
    pub rel_err_rho: f64,
    pub rel_err_iota: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyCell {
    pub generator: &'static str,
    pub method: &'static str,
    pub records: Vec<ConsistencyRecord>,
}

/// Cross-cell percentiles of the relative errors at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentileRow {
    pub iteration: u64,
    pub rho_p05: f64,
    pub rho_p50: f64,
    pub rho_p95: f64,
    pub iota_p05: f64,
    pub iota_p50: f64,
    pub iota_p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub cells: Vec<ConsistencyCell>,
    pub summary: Vec<PercentileRow>,
}

pub fn run_consistency(config: &ConsistencyConfig) -> Result<ConsistencyReport, ExperimentError> {
    if config.cells.is_empty() {
        return Err(ExperimentError::NoCells);
    }
    if config.iterations == 0 {
        return Err(ExperimentError::BadCount { what: "iterations" });
    }
    let tracker = TrackerConfig {
        lambda1: config.lambda1,
        lambda2: config.lambda2,
        alpha: config.alpha,
        upsilon: never_stop_upsilon(),
        delta_i: 0.9,
        delta_ii: 1.1,
        xi_i: 0.01,
        xi_ii: 0.01,
    };
    let cells: Vec<ConsistencyCell> = config
        .cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| -> Result<ConsistencyCell, ExperimentError> {
            let a = cell_matrix(cell.generator, config.rows, config.cols, config.seed)?;
            let b = cell_rhs(config.rows, config.seed, idx);
            let problem = WlsProblem::unweighted(a, b)?;
            let mut spec = SketchSpec::new(cell.method, derive_seed(config.seed, &[idx as u64, 7]));
            spec.eta = 1.0;
            let solver_config = SolverConfig {
                p: config.p,
                max_iterations: config.iterations,
                tracker,
                oracle: Some(OracleConfig {
                    max_rows_for_projection: 0,
                    feed_exact: config.feed_exact,
                }),
                record_iterates: false,
                stream_offset: 0,
            };
            let report = solve(&problem, &spec, &solver_config, None)?;
            let records = report
                .trace
                .iter()
                .map(|rec| {
                    let oracle = rec.oracle.expect("oracle mode is on");
                    ConsistencyRecord {
                        iteration: rec.iteration,
                        rho_tilde: rec.rho,
                        rho: oracle.rho_exact,
                        iota_tilde: rec.iota,
                        iota: oracle.iota_exact,
                        rel_err_rho: rel_err(rec.rho, oracle.rho_exact),
                        rel_err_iota: rel_err(rec.iota, oracle.iota_exact),
                    }
                })
                .collect();
            Ok(ConsistencyCell {
                generator: cell.generator.name(),
                method: cell.method.name(),
                records,
            })
        })
        .collect::<Result<_, _>>()?;

    let horizon = cells.iter().map(|c| c.records.len()).min().unwrap_or(0);
    let mut summary = Vec::with_capacity(horizon);
    let mut rho_errs = Vec::with_capacity(cells.len());
    let mut iota_errs = Vec::with_capacity(cells.len());
    for t in 0..horizon {
        rho_errs.clear();
        iota_errs.clear();
        for cell in &cells {
            rho_errs.push(cell.records[t].rel_err_rho);
            iota_errs.push(cell.records[t].rel_err_iota);
        }
        summary.push(PercentileRow {
            iteration: t as u64,
            rho_p05: percentile(&rho_errs, 0.05),
            rho_p50: percentile(&rho_errs, 0.50),
            rho_p95: percentile(&rho_errs, 0.95),
            iota_p05: percentile(&iota_errs, 0.05),
            iota_p50: percentile(&iota_errs, 0.50),
            iota_p95: percentile(&iota_errs, 0.95),
        });
    }
    Ok(ConsistencyReport { cells, summary })
}

// ---------------------------------------------------------------------------
// Coverage study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageConfig {
    pub rows: usize,
    pub cols: usize,
    pub p: usize,
    /// Constant window length; the interval at iteration j + lambda - 1
    /// pairs with the checkpoint saved at iteration j.
    pub lambda: usize,
    pub eta: f64,
    pub alpha: f64,
    pub method: SketchMethod,
    pub checkpoints: usize,
    pub reruns: usize,
    pub seed: u64,
    /// Oracle-fed mode: the tracker sees exact values and re-runs replay
    /// the main run's draw streams, so every re-run mean lands exactly on
    /// the interval center.
    pub feed_exact: bool,
}

impl CoverageConfig {
    pub fn desk_scale(seed: u64) -> Self {
        CoverageConfig {
            rows: 512,
            cols: 256,
            p: 25,
            lambda: 15,
            eta: 1.0,
            alpha: 0.05,
            method: SketchMethod::Gaussian,
            checkpoints: 50,
            reruns: 200,
            seed,
            feed_exact: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageRow {
    /// Iteration whose starting iterate seeds the re-runs.
    pub checkpoint: usize,
    /// Iteration whose interval is under test.
    pub interval_iteration: u64,
    pub rho_tilde: f64,
    pub half_width: f64,
    /// Mean over re-runs of the exact windowed value.
    pub rho_mean: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
    /// Fraction of checkpoints whose re-run mean fell outside the
    /// interval.
    pub failure_rate: f64,
}

pub fn run_coverage(config: &CoverageConfig) -> Result<CoverageReport, ExperimentError> {
    if config.checkpoints == 0 {
        return Err(ExperimentError::BadCount {
            what: "checkpoints",
        });
    }
    if config.reruns == 0 {
        return Err(ExperimentError::BadCount { what: "reruns" });
    }
    if config.lambda == 0 {
        return Err(ExperimentError::BadCount { what: "lambda" });
    }
    let a = rectangularize(
        &generate(&GeneratorKind::Golub {
            n: config.cols,
            seed: derive_seed(config.seed, &[11]),
        })?,
        config.rows,
        config.cols,
        derive_seed(config.seed, &[12]),
    )?;
    let b = cell_rhs(config.rows, config.seed, usize::MAX);
    let problem = WlsProblem::unweighted(a, b)?;
    let mut spec = SketchSpec::new(config.method, derive_seed(config.seed, &[13]));
    spec.eta = config.eta;
    let tracker = TrackerConfig {
        lambda1: config.lambda,
        lambda2: config.lambda,
        alpha: config.alpha,
        upsilon: never_stop_upsilon(),
        delta_i: 0.9,
        delta_ii: 1.1,
        xi_i: 0.01,
        xi_ii: 0.01,
    };
    let main_iterations = config.checkpoints as u64 + config.lambda as u64 - 1;
    let main_config = SolverConfig {
        p: config.p,
        max_iterations: main_iterations,
        tracker,
        oracle: Some(OracleConfig {
            max_rows_for_projection: 0,
            feed_exact: config.feed_exact,
        }),
        record_iterates: true,
        stream_offset: 0,
    };
    let main = solve(&problem, &spec, &main_config, None)?;

    let rows: Vec<CoverageRow> = (0..config.checkpoints)
        .into_par_iter()
        .map(|j| -> Result<CoverageRow, ExperimentError> {
            let k = j + config.lambda - 1;
            let rec = &main.trace[k];
            let mut sum = 0.0;
            for r in 0..config.reruns {
                let (rerun_spec, offset) = if config.feed_exact {
                    (spec.clone(), j as u64)
                } else {
                    let mut s = spec.clone();
                    s.seed = derive_seed(config.seed, &[DOMAIN_RERUN, j as u64, r as u64]);
                    (s, 0)
                };
                let rerun_config = SolverConfig {
                    p: config.p,
                    max_iterations: config.lambda as u64,
                    tracker,
                    oracle: Some(OracleConfig {
                        max_rows_for_projection: 0,
                        feed_exact: false,
                    }),
                    record_iterates: false,
                    stream_offset: offset,
                };
                let rerun = solve(
                    &problem,
                    &rerun_spec,
                    &rerun_config,
                    Some(&main.iterates[j]),
                )?;
                let last = rerun.trace.last().expect("at least one iteration");
                sum += last.oracle.expect("oracle mode is on").rho_exact;
            }
            let rho_mean = sum / config.reruns as f64;
            let failed =
                rho_mean < rec.rho - rec.ci_half_width || rho_mean > rec.rho + rec.ci_half_width;
            Ok(CoverageRow {
                checkpoint: j,
                interval_iteration: rec.iteration,
                rho_tilde: rec.rho,
                half_width: rec.ci_half_width,
                rho_mean,
                failed,
            })
        })
        .collect::<Result<_, _>>()?;

    let failures = rows.iter().filter(|r| r.failed).count();
    Ok(CoverageReport {
        failure_rate: failures as f64 / rows.len() as f64,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Stopping-error study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingConfig {
    pub cells: Vec<CellSpec>,
    pub rows: usize,
    pub cols: usize,
    pub p: usize,
    pub lambda1: usize,
    pub lambda2: usize,
    pub alpha: f64,
    pub iterations: u64,
    pub seed: u64,
    pub upsilon: f64,
    pub delta_i: f64,
    pub delta_ii: f64,
    pub xi_i: f64,
    pub xi_ii: f64,
    pub feed_exact: bool,
}

impl StoppingConfig {
    pub fn desk_scale(seed: u64) -> Self {
        StoppingConfig {
            cells: standard_cells(),
            rows: 256,
            cols: 128,
            p: 20,
            lambda1: 1,
            lambda2: 100,
            alpha: 0.05,
            iterations: 2_000,
            seed,
            upsilon: 100.0,
            delta_i: 0.9,
            delta_ii: 1.1,
            xi_i: 0.01,
            xi_ii: 0.01,
            feed_exact: false,
        }
    }

    fn rule_config(&self) -> TrackerConfig {
        TrackerConfig {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            alpha: self.alpha,
            upsilon: self.upsilon,
            delta_i: self.delta_i,
            delta_ii: self.delta_ii,
            xi_i: self.xi_i,
            xi_ii: self.xi_ii,
        }
    }
}

/// Error tallies for one cell, over iterations where the fourth-moment
/// condition held.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingCell {
    pub generator: &'static str,
    pub method: &'static str,
    pub condition_iterations: u64,
    pub late_errors: u64,
    pub early_errors: u64,
}

impl StoppingCell {
    pub fn late_rate(&self) -> f64 {
        rate(self.late_errors, self.condition_iterations)
    }

    pub fn early_rate(&self) -> f64 {
        rate(self.early_errors, self.condition_iterations)
    }
}

fn rate(count: u64, denom: u64) -> f64 {
    if denom == 0 {
        0.0
    } else {
        count as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingReport {
    pub cells: Vec<StoppingCell>,
    pub pooled_condition_iterations: u64,
    pub pooled_late_errors: u64,
    pub pooled_early_errors: u64,
}

impl StoppingReport {
    pub fn pooled_late_rate(&self) -> f64 {
        rate(self.pooled_late_errors, self.pooled_condition_iterations)
    }

    pub fn pooled_early_rate(&self) -> f64 {
        rate(self.pooled_early_errors, self.pooled_condition_iterations)
    }
}

/// Classifies would-be stopping decisions along full-horizon runs: at the
/// iterations where iota passes the threshold, a late error has the
/// estimate above the target while the exact windowed value is at or
/// below delta_I of it, an early error the reverse.
pub fn run_stopping(config: &StoppingConfig) -> Result<StoppingReport, ExperimentError> {
    if config.cells.is_empty() {
        return Err(ExperimentError::NoCells);
    }
    if config.iterations == 0 {
        return Err(ExperimentError::BadCount { what: "iterations" });
    }
    let rule = config.rule_config();
    rule.validate()?;
    // The run itself must observe the full horizon, so it tracks with a
    // stopping target it can never reach; the rule is evaluated offline.
    let run_tracker = TrackerConfig {
        upsilon: never_stop_upsilon(),
        ..rule
    };
    let cells: Vec<StoppingCell> = config
        .cells
        .par_iter()
        .enumerate()
        .map(|(idx, cell)| -> Result<StoppingCell, ExperimentError> {
            let a = cell_matrix(cell.generator, config.rows, config.cols, config.seed)?;
            let b = cell_rhs(config.rows, config.seed, idx);
            let problem = WlsProblem::unweighted(a, b)?;
            let mut spec = SketchSpec::new(cell.method, derive_seed(config.seed, &[idx as u64, 8]));
            spec.eta = 1.0;
            let tail = TailParams {
                c: spec.c,
                omega: spec.omega,
                eta: spec.eta,
                p: config.p,
            };
            let solver_config = SolverConfig {
                p: config.p,
                max_iterations: config.iterations,
                tracker: run_tracker,
                oracle: Some(OracleConfig {
                    max_rows_for_projection: 0,
                    feed_exact: config.feed_exact,
                }),
                record_iterates: false,
                stream_offset: 0,
            };
            let report = solve(&problem, &spec, &solver_config, None)?;
            let mut tally = StoppingCell {
                generator: cell.generator.name(),
                method: cell.method.name(),
                condition_iterations: 0,
                late_errors: 0,
                early_errors: 0,
            };
            for rec in &report.trace {
                let threshold = stopping_threshold(&rule, &tail, rec.lambda);
                if rec.iota > threshold {
                    continue;
                }
                tally.condition_iterations += 1;
                let rho = rec.oracle.expect("oracle mode is on").rho_exact;
                if rec.rho > config.upsilon && rho <= config.delta_i * config.upsilon {
                    tally.late_errors += 1;
                }
                if rec.rho <= config.upsilon && rho > config.delta_ii * config.upsilon {
                    tally.early_errors += 1;
                }
            }
            Ok(tally)
        })
        .collect::<Result<_, _>>()?;

    let pooled_condition_iterations = cells.iter().map(|c| c.condition_iterations).sum();
    let pooled_late_errors = cells.iter().map(|c| c.late_errors).sum();
    let pooled_early_errors = cells.iter().map(|c| c.early_errors).sum();
    Ok(StoppingReport {
        cells,
        pooled_condition_iterations,
        pooled_late_errors,
        pooled_early_errors,
    })
}
