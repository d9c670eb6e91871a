//! One function per subcommand. Each resolves its settings (flag >
//! config section > shared [sketch] section > default), runs the backing
//! library routine, and writes CSV only after the computation finished,
//! so a failed run never leaves a partial file.

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DVector;

use sketchls::experiments::{
    run_consistency, run_coverage, run_stopping, CellGenerator, CellSpec, ConsistencyConfig,
    CoverageConfig, StoppingConfig,
};
use sketchls::fourdvar::{self, FourDVarConfig, FourDVarProblem};
use sketchls::io::{load_matrix_market, load_vector_market};
use sketchls::shallow_water::{generate_observations, simulate, Boundary, SwState};
use sketchls::sketch::{calibrate_constants, SketchMethod, SketchSpec};
use sketchls::solver::{self, OracleConfig, SolverConfig, StopReason};
use sketchls::tracker::TrackerConfig;
use sketchls::wls::{Weight, WlsProblem};

use crate::config::{summary_path, ConfigFile, Settings};
use crate::table::{count, flag, num, write_table};
use crate::{
    AssimilateArgs, CalibrateArgs, CliError, ConsistencyArgs, CoverageArgs, SolveArgs, StoppingArgs,
};

/// Lower bound substituted for negative interval endpoints when the
/// clamp flag is on; keeps log-scale plots finite.
const CLAMP_FLOOR: f64 = 1e-16;

fn parse_method(name: &str) -> Result<SketchMethod, CliError> {
    match name {
        "gaussian" => Ok(SketchMethod::Gaussian),
        "achlioptas" => Ok(SketchMethod::Achlioptas),
        "fjlt" => Ok(SketchMethod::Fjlt),
        other => Err(CliError::Config(format!(
            "unknown sketch method '{other}' (expected gaussian, achlioptas, or fjlt)"
        ))),
    }
}

fn parse_generator(name: &str) -> Result<CellGenerator, CliError> {
    match name {
        "hadamard" => Ok(CellGenerator::Hadamard),
        "golub" => Ok(CellGenerator::Golub),
        "rohess" => Ok(CellGenerator::Rohess),
        "wilkinson" => Ok(CellGenerator::Wilkinson),
        "rand_illcond" => Ok(CellGenerator::RandIllcond),
        "rand_dense" => Ok(CellGenerator::RandDense),
        other => Err(CliError::Config(format!(
            "unknown matrix family '{other}' (expected hadamard, golub, rohess, wilkinson, \
             rand_illcond, or rand_dense)"
        ))),
    }
}

fn split_list(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn parse_cells(
    s: &Settings,
    generators: Option<String>,
    methods: Option<String>,
) -> Result<Vec<CellSpec>, CliError> {
    let generators: Vec<CellGenerator> = match s.optional(generators, "generators")? {
        Some(list) => split_list(&list)
            .map(parse_generator)
            .collect::<Result<_, _>>()?,
        None => CellGenerator::all().to_vec(),
    };
    let methods: Vec<SketchMethod> = match s.optional(methods, "methods")? {
        Some(list) => split_list(&list)
            .map(parse_method)
            .collect::<Result<_, _>>()?,
        None => vec![
            SketchMethod::Gaussian,
            SketchMethod::Achlioptas,
            SketchMethod::Fjlt,
        ],
    };
    if generators.is_empty() || methods.is_empty() {
        return Err(CliError::Config(
            "generator and method lists must be non-empty".into(),
        ));
    }
    let mut cells = Vec::with_capacity(generators.len() * methods.len());
    for &generator in &generators {
        for &method in &methods {
            cells.push(CellSpec { generator, method });
        }
    }
    Ok(cells)
}

/// Sketch spec from the method/constant flags, the config sections, and
/// the method's own defaults.
fn sketch_spec(
    s: &Settings,
    method: Option<String>,
    c: Option<f64>,
    omega: Option<f64>,
    eta: Option<f64>,
    default_method: SketchMethod,
    seed: u64,
) -> Result<SketchSpec, CliError> {
    let method = match s.optional(method, "sketch")? {
        Some(name) => parse_method(&name)?,
        None => default_method,
    };
    let mut spec = SketchSpec::new(method, seed);
    if let Some(c) = s.optional(c, "sketch-c")? {
        spec.c = c;
    }
    if let Some(omega) = s.optional(omega, "sketch-omega")? {
        spec.omega = omega;
    }
    spec.eta = s.value(eta, "eta", 1.0)?;
    spec.validate()?;
    Ok(spec)
}

fn clamp_low(v: f64, on: bool) -> f64 {
    if on && v < 0.0 {
        CLAMP_FLOOR
    } else {
        v
    }
}

fn stop_text(reason: StopReason) -> &'static str {
    match reason {
        StopReason::StoppingRule => "stopped by rule",
        StopReason::MaxIterations => "iteration budget exhausted",
    }
}

pub(crate) fn solve(args: &SolveArgs, file: Option<&ConfigFile>) -> Result<(), CliError> {
    let s = Settings::new(file, "solve");
    let matrix_path: PathBuf = s.required(args.matrix.clone(), "matrix")?;
    let rhs_path: PathBuf = s.required(args.rhs.clone(), "rhs")?;
    let weight_path: Option<PathBuf> = s.optional(args.weight.clone(), "weight")?;
    let seed = s.value(args.seed, "seed", 0)?;
    let spec = sketch_spec(
        &s,
        args.sketch.clone(),
        args.sketch_c,
        args.sketch_omega,
        args.eta,
        SketchMethod::Gaussian,
        seed,
    )?;
    let tracker = TrackerConfig {
        lambda1: s.value(args.lambda1, "lambda1", 1)?,
        lambda2: s.value(args.lambda2, "lambda2", 100)?,
        alpha: s.value(args.alpha, "alpha", 0.05)?,
        upsilon: s.value(args.upsilon, "upsilon", 1e-8)?,
        delta_i: s.value(args.delta_i, "deltaI", 0.9)?,
        delta_ii: s.value(args.delta_ii, "deltaII", 1.1)?,
        xi_i: s.value(args.xi_i, "xiI", 0.01)?,
        xi_ii: s.value(args.xi_ii, "xiII", 0.01)?,
    };
    let oracle = s.switch(args.oracle, "oracle")?;
    let clamp = s.switch(args.clamp_lower, "clamp-lower")?;
    let config = SolverConfig {
        p: s.value(args.p, "p", 20)?,
        max_iterations: s.value(args.max_iters, "max-iters", 1000)?,
        tracker,
        oracle: oracle.then_some(OracleConfig {
            max_rows_for_projection: usize::MAX,
            feed_exact: false,
        }),
        record_iterates: false,
        stream_offset: 0,
    };
    let out = s.out_path(args.out.clone(), "solve.csv")?;

    let a = load_matrix_market(&matrix_path)?;
    let b = load_vector_market(&rhs_path)?;
    let weight = match weight_path {
        Some(path) => {
            let w = load_matrix_market(&path)?;
            if w.ncols() == 1 {
                Weight::Diagonal(DVector::from_column_slice(w.as_slice()))
            } else {
                Weight::Dense(w)
            }
        }
        None => Weight::identity(a.nrows()),
    };
    let problem = WlsProblem::new(a, b, weight)?;
    let report = solver::solve(&problem, &spec, &config, None)?;

    let mut header = vec![
        "k",
        "lambda",
        "rho_tilde",
        "iota_tilde",
        "ci_low",
        "ci_high",
        "threshold",
        "rho_below",
        "iota_ok",
        "stop",
    ];
    if oracle {
        header.extend(["rho", "iota", "proj_residual", "m_envelope"]);
    }
    let rows: Vec<Vec<String>> = report
        .trace
        .iter()
        .map(|rec| {
            let rho_below = rec.rho < config.tracker.upsilon;
            let iota_ok = rec.iota <= rec.threshold;
            let stop = rho_below && iota_ok && rec.iteration >= 1;
            let mut row = vec![
                count(rec.iteration),
                count(rec.lambda as u64),
                num(rec.rho),
                num(rec.iota),
                num(clamp_low(rec.rho - rec.ci_half_width, clamp)),
                num(rec.rho + rec.ci_half_width),
                num(rec.threshold),
                flag(rho_below),
                flag(iota_ok),
                flag(stop),
            ];
            if oracle {
                let o = rec.oracle.expect("oracle mode records ground truth");
                row.push(num(o.rho_exact));
                row.push(num(o.iota_exact));
                row.push(num(o.projected_residual_norm.unwrap_or(f64::NAN)));
                row.push(num(o.envelope.unwrap_or(f64::NAN)));
            }
            row
        })
        .collect();
    write_table(&out, &header, &rows)?;
    let last = report.trace.last().expect("at least one iteration");
    println!(
        "solve: {} after {} iterations; rho_tilde {} in [{}, {}]; trace in {}",
        stop_text(report.stop_reason),
        report.iterations,
        num(last.rho),
        num(clamp_low(last.rho - last.ci_half_width, clamp)),
        num(last.rho + last.ci_half_width),
        out.display()
    );
    Ok(())
}

pub(crate) fn consistency(
    args: &ConsistencyArgs,
    file: Option<&ConfigFile>,
) -> Result<(), CliError> {
    let s = Settings::new(file, "consistency");
    let config = ConsistencyConfig {
        cells: parse_cells(&s, args.generators.clone(), args.methods.clone())?,
        rows: s.value(args.rows, "rows", 256)?,
        cols: s.value(args.cols, "cols", 128)?,
        p: s.value(args.p, "p", 20)?,
        lambda1: s.value(args.lambda1, "lambda1", 1)?,
        lambda2: s.value(args.lambda2, "lambda2", 100)?,
        alpha: s.value(args.alpha, "alpha", 0.05)?,
        iterations: s.value(args.iters, "iters", 2000)?,
        seed: s.value(args.seed, "seed", 0)?,
        feed_exact: s.switch(args.oracle_fed, "oracle-fed")?,
    };
    let out = s.out_path(args.out.clone(), "consistency.csv")?;
    let summary_out = summary_path(&out);

    let report = run_consistency(&config)?;
    let mut rows = Vec::new();
    for cell in &report.cells {
        println!(
            "cell {} x {}: {} iterations",
            cell.generator,
            cell.method,
            cell.records.len()
        );
        for rec in &cell.records {
            rows.push(vec![
                cell.generator.to_string(),
                cell.method.to_string(),
                count(rec.iteration),
                num(rec.rho_tilde),
                num(rec.rho),
                num(rec.iota_tilde),
                num(rec.iota),
                num(rec.rel_err_rho),
                num(rec.rel_err_iota),
            ]);
        }
    }
    write_table(
        &out,
        &[
            "generator",
            "method",
            "k",
            "rho_tilde",
            "rho",
            "iota_tilde",
            "iota",
            "rel_err_rho",
            "rel_err_iota",
        ],
        &rows,
    )?;
    let summary_rows: Vec<Vec<String>> = report
        .summary
        .iter()
        .map(|row| {
            vec![
                count(row.iteration),
                num(row.rho_p05),
                num(row.rho_p50),
                num(row.rho_p95),
                num(row.iota_p05),
                num(row.iota_p50),
                num(row.iota_p95),
            ]
        })
        .collect();
    write_table(
        &summary_out,
        &[
            "k",
            "rho_err_p05",
            "rho_err_p50",
            "rho_err_p95",
            "iota_err_p05",
            "iota_err_p50",
            "iota_err_p95",
        ],
        &summary_rows,
    )?;
    println!(
        "consistency: {} cells, detail in {}, percentile summary in {}",
        report.cells.len(),
        out.display(),
        summary_out.display()
    );
    Ok(())
}

pub(crate) fn coverage(args: &CoverageArgs, file: Option<&ConfigFile>) -> Result<(), CliError> {
    let s = Settings::new(file, "coverage");
    let method = match s.optional(args.sketch.clone(), "sketch")? {
        Some(name) => parse_method(&name)?,
        None => SketchMethod::Gaussian,
    };
    let config = CoverageConfig {
        rows: s.value(args.rows, "rows", 512)?,
        cols: s.value(args.cols, "cols", 256)?,
        p: s.value(args.p, "p", 25)?,
        lambda: s.value(args.lambda, "lambda", 15)?,
        eta: s.value(args.eta, "eta", 1.0)?,
        alpha: s.value(args.alpha, "alpha", 0.05)?,
        method,
        checkpoints: s.value(args.checkpoints, "checkpoints", 50)?,
        reruns: s.value(args.reruns, "reruns", 200)?,
        seed: s.value(args.seed, "seed", 0)?,
        feed_exact: s.switch(args.oracle_fed, "oracle-fed")?,
    };
    let out = s.out_path(args.out.clone(), "coverage.csv")?;
    let summary_out = summary_path(&out);

    let report = run_coverage(&config)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|row| {
            println!(
                "checkpoint {:>3} @ k={:>4}: re-run mean {} against [{}, {}]{}",
                row.checkpoint,
                row.interval_iteration,
                num(row.rho_mean),
                num(row.rho_tilde - row.half_width),
                num(row.rho_tilde + row.half_width),
                if row.failed { "  MISS" } else { "" }
            );
            vec![
                count(row.checkpoint as u64),
                count(row.interval_iteration),
                num(row.rho_tilde),
                num(row.rho_tilde - row.half_width),
                num(row.rho_tilde + row.half_width),
                num(row.rho_mean),
                flag(row.failed),
            ]
        })
        .collect();
    write_table(
        &out,
        &[
            "checkpoint",
            "k",
            "rho_tilde",
            "ci_low",
            "ci_high",
            "rho_mean",
            "failed",
        ],
        &rows,
    )?;
    let failures = report.rows.iter().filter(|r| r.failed).count() as u64;
    write_table(
        &summary_out,
        &["checkpoints", "reruns", "failures", "failure_rate"],
        &[vec![
            count(report.rows.len() as u64),
            count(config.reruns as u64),
            count(failures),
            num(report.failure_rate),
        ]],
    )?;
    println!(
        "coverage: failure rate {} over {} checkpoints x {} re-runs; detail in {}",
        num(report.failure_rate),
        report.rows.len(),
        config.reruns,
        out.display()
    );
    Ok(())
}

pub(crate) fn stopping(args: &StoppingArgs, file: Option<&ConfigFile>) -> Result<(), CliError> {
    let s = Settings::new(file, "stopping");
    let config = StoppingConfig {
        cells: parse_cells(&s, args.generators.clone(), args.methods.clone())?,
        rows: s.value(args.rows, "rows", 256)?,
        cols: s.value(args.cols, "cols", 128)?,
        p: s.value(args.p, "p", 20)?,
        lambda1: s.value(args.lambda1, "lambda1", 1)?,
        lambda2: s.value(args.lambda2, "lambda2", 100)?,
        alpha: s.value(args.alpha, "alpha", 0.05)?,
        iterations: s.value(args.iters, "iters", 2000)?,
        seed: s.value(args.seed, "seed", 0)?,
        upsilon: s.value(args.upsilon, "upsilon", 100.0)?,
        delta_i: s.value(args.delta_i, "deltaI", 0.9)?,
        delta_ii: s.value(args.delta_ii, "deltaII", 1.1)?,
        xi_i: s.value(args.xi_i, "xiI", 0.01)?,
        xi_ii: s.value(args.xi_ii, "xiII", 0.01)?,
        feed_exact: s.switch(args.oracle_fed, "oracle-fed")?,
    };
    let out = s.out_path(args.out.clone(), "stopping.csv")?;
    let summary_out = summary_path(&out);

    let report = run_stopping(&config)?;
    let rows: Vec<Vec<String>> = report
        .cells
        .iter()
        .map(|cell| {
            println!(
                "cell {} x {}: {} condition iterations, {} late, {} early",
                cell.generator,
                cell.method,
                cell.condition_iterations,
                cell.late_errors,
                cell.early_errors
            );
            vec![
                cell.generator.to_string(),
                cell.method.to_string(),
                count(cell.condition_iterations),
                count(cell.late_errors),
                count(cell.early_errors),
                num(cell.late_rate()),
                num(cell.early_rate()),
            ]
        })
        .collect();
    write_table(
        &out,
        &[
            "generator",
            "method",
            "condition_iterations",
            "late_errors",
            "early_errors",
            "late_rate",
            "early_rate",
        ],
        &rows,
    )?;
    write_table(
        &summary_out,
        &[
            "condition_iterations",
            "late_errors",
            "early_errors",
            "late_rate",
            "early_rate",
        ],
        &[vec![
            count(report.pooled_condition_iterations),
            count(report.pooled_late_errors),
            count(report.pooled_early_errors),
            num(report.pooled_late_rate()),
            num(report.pooled_early_rate()),
        ]],
    )?;
    if report.pooled_condition_iterations == 0 {
        println!(
            "note: the moment condition never held, so the error rates are vacuous \
             (denominator 0)"
        );
    }
    println!(
        "stopping: pooled late rate {}, early rate {} over {} condition iterations; \
         detail in {}",
        num(report.pooled_late_rate()),
        num(report.pooled_early_rate()),
        report.pooled_condition_iterations,
        out.display()
    );
    Ok(())
}

pub(crate) fn assimilate(args: &AssimilateArgs, file: Option<&ConfigFile>) -> Result<(), CliError> {
    let s = Settings::new(file, "assimilate");
    let nc = s.value(args.nc, "nc", 40)?;
    let nt = s.value(args.nt, "nt", 20)?;
    if nc == 0 || nt == 0 {
        return Err(CliError::Config("nc and nt must be at least 1".into()));
    }
    let dt = s.value(args.dt, "dt", 1e-3)?;
    let dx = s.value(args.dx, "dx", 1.0)?;
    let boundary = match s.optional(args.boundary.clone(), "boundary")?.as_deref() {
        None | Some("periodic") => Boundary::Periodic,
        Some("clamped") => Boundary::ClampedEdge,
        Some(other) => {
            return Err(CliError::Config(format!(
                "unknown boundary '{other}' (expected periodic or clamped)"
            )))
        }
    };
    let sigma = s.value(args.noise_sigma, "noise-sigma", 1.0)?;
    let seed = s.value(args.seed, "seed", 0)?;
    let spec = sketch_spec(
        &s,
        args.sketch.clone(),
        args.sketch_c,
        args.sketch_omega,
        args.eta,
        SketchMethod::Achlioptas,
        seed,
    )?;
    let upsilon_scale = s.value(args.upsilon_scale, "upsilon-scale", 1e-9)?;
    let tracker = TrackerConfig {
        lambda1: s.value(args.lambda1, "lambda1", 1)?,
        lambda2: s.value(args.lambda2, "lambda2", 100)?,
        alpha: s.value(args.alpha, "alpha", 0.05)?,
        upsilon: upsilon_scale * nc as f64 * (nt as f64 + 1.0),
        delta_i: s.value(args.delta_i, "deltaI", 0.9)?,
        delta_ii: s.value(args.delta_ii, "deltaII", 1.1)?,
        xi_i: s.value(args.xi_i, "xiI", 0.95)?,
        xi_ii: s.value(args.xi_ii, "xiII", 0.95)?,
    };
    let config = FourDVarConfig {
        p: s.value(args.p, "p", 20)?,
        max_iterations: s.value(args.max_iters, "max-iters", 4000)?,
        tracker,
    };
    let clamp = s.switch(args.clamp_lower, "clamp-lower")?;
    let out = s.out_path(args.out.clone(), "assimilate.csv")?;

    // Twin experiment: simulate a truth trajectory from a quadratic
    // height bump with constant velocity, observe its heights under
    // noise, then assimilate against that record.
    let center = nc as f64 / 2.0;
    let phi = DVector::from_fn(nc, |i, _| {
        let d = (i as f64 - center) / center;
        d * d
    });
    let u = DVector::from_element(nc, 0.5);
    let initial = SwState::new(phi, u, dx, dt, boundary)?;
    let trajectory = simulate(&initial, nt);
    for (step, state) in trajectory.iter().enumerate() {
        let finite = state
            .phi()
            .iter()
            .chain(state.u().iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(CliError::Numerical(format!(
                "model blew up at step {step}; reduce dt or the grid resolution"
            )));
        }
    }
    let observations = generate_observations(&trajectory[1..], sigma, seed)?;
    let problem = FourDVarProblem::new(initial, observations)?;
    let report = fourdvar::assimilate(&problem, &spec, &config)?;

    let rows: Vec<Vec<String>> = report
        .trace
        .iter()
        .map(|rec| {
            vec![
                count(rec.iteration),
                num(rec.rho),
                num(clamp_low(rec.rho - rec.ci_half_width, clamp)),
                num(rec.rho + rec.ci_half_width),
            ]
        })
        .collect();
    write_table(&out, &["k", "rho_tilde", "ci_low", "ci_high"], &rows)?;
    println!(
        "assimilate: {} after {} iterations; increment norm {}; trace in {}",
        stop_text(report.stop_reason),
        report.iterations,
        num(report.increment.norm()),
        out.display()
    );
    println!(
        "largest matrix buffer: {} entries (bound max(Ns*p, p^2) = {})",
        report.alloc.largest_entries(),
        (2 * nc * config.p).max(config.p * config.p)
    );
    Ok(())
}

pub(crate) fn calibrate(args: &CalibrateArgs, file: Option<&ConfigFile>) -> Result<(), CliError> {
    let s = Settings::new(file, "calibrate");
    let method = match s.optional(args.sketch.clone(), "sketch")? {
        Some(name) => parse_method(&name)?,
        None => SketchMethod::Gaussian,
    };
    let n = s.value(args.n, "n", 512)?;
    let p = s.value(args.p, "p", 20)?;
    let trials = s.value(args.trials, "trials", 100_000)?;
    let seed = s.value(args.seed, "seed", 0)?;
    let raw = s
        .optional(args.epsilons.clone(), "epsilons")?
        .unwrap_or_else(|| "0.25,0.5,1.0".to_string());
    let grid: Vec<f64> = split_list(&raw)
        .map(|t| {
            t.parse()
                .map_err(|e| CliError::Config(format!("epsilon '{t}': {e}")))
        })
        .collect::<Result<_, _>>()?;
    let out = s.out_path(args.out.clone(), "calibration.conf")?;

    let cal = calibrate_constants(method, n, p, trials, &grid, None, seed)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "# sketch tail constants fitted by Monte Carlo\n# method={} n={n} p={p} trials={trials} seed={seed}",
        cal.method.name()
    );
    let _ = writeln!(
        text,
        "# mean of ||S^T z||^2 / ||z||^2 = {} (standard error {})",
        num(cal.mean_sq),
        num(cal.se_mean)
    );
    for (eps, freq) in grid.iter().zip(&cal.frequencies) {
        let _ = writeln!(text, "# exceedance frequency at eps={eps}: {}", num(*freq));
    }
    let _ = writeln!(text, "[sketch]\nmethod = {}", cal.method.name());
    let _ = writeln!(text, "c = {}", num(cal.c));
    let _ = writeln!(text, "omega = {}", num(cal.omega));
    std::fs::write(&out, &text)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", out.display())))?;
    println!(
        "calibrate {}: c = {}, omega = {}; fragment in {}",
        cal.method.name(),
        num(cal.c),
        num(cal.omega),
        out.display()
    );
    Ok(())
}
