//! Acceptance gate: one test per shipped guarantee, each printing a
//! single pass/fail line (visible under --nocapture). Tolerances and
//! scales are frozen; loosening any of them is a behavior change.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use sketchls::experiments::{
    median_halves, run_consistency, run_coverage, run_stopping, ConsistencyConfig, CoverageConfig,
    StoppingConfig,
};
use sketchls::fourdvar::{assimilate, FourDVarConfig, FourDVarProblem};
use sketchls::gallery::{generate, rectangularize, GeneratorKind};
use sketchls::rowstream::GentlemanState;
use sketchls::shallow_water::{generate_observations, simulate, Boundary, SwState};
use sketchls::sketch::{calibrate_constants, draw_sketch, SketchDraw, SketchMethod, SketchSpec};
use sketchls::tracker::TrackerConfig;
use sketchls::wls::WlsProblem;

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn unit_rhs(rows: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let b = DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = b.norm();
    b / n
}

fn never_stop(lambda1: usize, lambda2: usize) -> TrackerConfig {
    TrackerConfig {
        lambda1,
        lambda2,
        alpha: 0.05,
        upsilon: f64::MIN_POSITIVE,
        delta_i: 0.9,
        delta_ii: 1.1,
        xi_i: 0.01,
        xi_ii: 0.01,
    }
}

#[test]
fn criterion_01_sketch_tail_concentration() {
    let t0 = Instant::now();
    let grid = [0.25, 0.5, 1.0];
    let mut ok = true;
    let mut details = String::new();
    for (method, seed) in [
        (SketchMethod::Gaussian, 101),
        (SketchMethod::Achlioptas, 102),
        (SketchMethod::Fjlt, 103),
    ] {
        let cal = calibrate_constants(method, 512, 20, 100_000, &grid, None, seed).unwrap();
        for (eps, freq) in grid.iter().zip(&cal.frequencies) {
            let exponent = cal.c * 20.0 * (eps * eps).min(eps / cal.omega);
            let bound = 2.0 * (-exponent).exp();
            if *freq > bound {
                ok = false;
                details.push_str(&format!(
                    "{}: freq {freq:.4} above bound {bound:.4} at eps {eps}\n",
                    method.name()
                ));
            }
        }
        if (cal.mean_sq - 1.0).abs() > 3.0 * cal.se_mean {
            ok = false;
            details.push_str(&format!(
                "{}: mean {:.6} strays from 1 by more than 3 x {:.2e}\n",
                method.name(),
                cal.mean_sq,
                cal.se_mean
            ));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = ok && elapsed < 120.0;
    println!(
        "criterion 01 (sketch tail concentration, 3 methods x 1e5 draws): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(ok, "{details}elapsed {elapsed:.1}s (limit 120s)");
}

#[test]
fn criterion_02_full_sketch_is_the_exact_solve() {
    let t0 = Instant::now();
    let a = generate(&GeneratorKind::RandDense {
        rows: 64,
        cols: 32,
        seed: 21,
    })
    .unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(22);
    let b = DVector::from_fn(64, |_, _| rng.sample::<f64, _>(StandardNormal));
    let problem = WlsProblem::unweighted(a, b).unwrap();
    let x1 = problem
        .block_update(&DVector::zeros(32), &SketchDraw::identity(32))
        .unwrap();
    let g = problem.gradient(&x1).unwrap().norm();
    let ok = g <= 1e-10;
    println!(
        "criterion 02 (identity sketch gives gradient {g:.2e} <= 1e-10 in one update): {} [{:.1}s]",
        verdict(ok),
        t0.elapsed().as_secs_f64()
    );
    assert!(ok, "gradient norm {g:.3e}");
}

#[test]
fn criterion_03_projected_residual_monotone_and_contracting() {
    let t0 = Instant::now();
    let hadamard = |n: usize, idx: u64| {
        let h = generate(&GeneratorKind::Hadamard { n }).unwrap();
        rectangularize(&h, n, n / 2, 3000 + idx).unwrap()
    };
    let rohess = |n: usize, idx: u64| {
        let q = generate(&GeneratorKind::Rohess { n, seed: 40 + idx }).unwrap();
        rectangularize(&q, n, n / 2, 3100 + idx).unwrap()
    };
    let illcond = |n: usize, cond: f64, idx: u64| {
        generate(&GeneratorKind::RandIllcond {
            n,
            cond,
            seed: 50 + idx,
        })
        .unwrap()
    };
    let dense = |rows: usize, cols: usize, idx: u64| {
        generate(&GeneratorKind::RandDense {
            rows,
            cols,
            seed: 60 + idx,
        })
        .unwrap()
    };
    let wilkinson = || {
        let w = generate(&GeneratorKind::Wilkinson { n: 9 }).unwrap();
        rectangularize(&w, 64, 32, 3200).unwrap()
    };

    let systems: Vec<(String, DMatrix<f64>)> = vec![
        ("hadamard 256x128".into(), hadamard(256, 0)),
        ("hadamard 512x256".into(), hadamard(512, 1)),
        ("hadamard 1024x512".into(), hadamard(1024, 2)),
        ("rohess 128x64".into(), rohess(128, 0)),
        ("rohess 256x128".into(), rohess(256, 1)),
        ("rohess 512x256".into(), rohess(512, 2)),
        ("wilkinson 64x32".into(), wilkinson()),
        ("illcond 64 cond 5".into(), illcond(64, 5.0, 0)),
        ("illcond 64 cond 20".into(), illcond(64, 20.0, 1)),
        ("illcond 128 cond 10".into(), illcond(128, 10.0, 2)),
        ("dense 50x10".into(), dense(50, 10, 0)),
        ("dense 80x32".into(), dense(80, 32, 1)),
        ("dense 120x60".into(), dense(120, 60, 2)),
        ("dense 160x64".into(), dense(160, 64, 3)),
        ("dense 200x100".into(), dense(200, 100, 4)),
        ("dense 256x128".into(), dense(256, 128, 5)),
        ("dense 320x160".into(), dense(320, 160, 6)),
        ("dense 384x192".into(), dense(384, 192, 7)),
        ("dense 448x224".into(), dense(448, 224, 8)),
        ("dense 512x256".into(), dense(512, 256, 9)),
    ];
    assert_eq!(systems.len(), 20);

    let methods = [
        SketchMethod::Gaussian,
        SketchMethod::Achlioptas,
        SketchMethod::Fjlt,
    ];
    let mut ok = true;
    let mut details = String::new();
    for (idx, (label, a)) in systems.into_iter().enumerate() {
        let rows = a.nrows();
        let cols = a.ncols();
        let b = unit_rhs(rows, 7000 + idx as u64);
        let problem = WlsProblem::unweighted(a, b).unwrap();
        let oracle = problem.projection_oracle().unwrap();
        let spec = SketchSpec::new(methods[idx % 3], 7100 + idx as u64);
        let mut x = DVector::zeros(cols);
        let initial = oracle.projected_residual_norm(&problem, &x).unwrap();
        let mut prev = initial;
        let mut reached = None;
        for k in 0..10_000u64 {
            let draw = draw_sketch(&spec, cols, 20, k).unwrap();
            x = problem.block_update(&x, &draw).unwrap();
            let cur = oracle.projected_residual_norm(&problem, &x).unwrap();
            if cur > prev + 1e-12 {
                ok = false;
                details.push_str(&format!(
                    "{label}: projected residual rose {prev:.6e} -> {cur:.6e} at iteration {k}\n"
                ));
            }
            prev = cur;
            if cur <= 1e-6 * initial {
                reached = Some(k + 1);
                break;
            }
        }
        match reached {
            Some(_) => {}
            None => {
                ok = false;
                details.push_str(&format!(
                    "{label}: still at {:.3e} of initial after 10000 iterations\n",
                    prev / initial
                ));
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    println!(
        "criterion 03 (projected residual monotone, 1e-6 contraction on 20 systems): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(ok, "{details}");
}

#[test]
fn criterion_04_estimates_stay_consistent_over_long_runs() {
    let t0 = Instant::now();
    let report = run_consistency(&ConsistencyConfig::desk_scale(42)).unwrap();
    let rho_p50: Vec<f64> = report.summary.iter().map(|row| row.rho_p50).collect();
    let iota_p50: Vec<f64> = report.summary.iter().map(|row| row.iota_p50).collect();
    let (rho_first, rho_last) = median_halves(&rho_p50);
    let (iota_first, iota_last) = median_halves(&iota_p50);
    let trend_ok = rho_last <= 1.5 * rho_first && iota_last <= 1.5 * iota_first;
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = trend_ok && elapsed < 600.0;
    println!(
        "criterion 04 (18-cell consistency, median rel err rho {rho_first:.3}->{rho_last:.3}, iota {iota_first:.3}->{iota_last:.3}): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(
        ok,
        "rho halves ({rho_first:.4}, {rho_last:.4}), iota halves ({iota_first:.4}, {iota_last:.4}), elapsed {elapsed:.1}s (limit 600s)"
    );
}

#[test]
fn criterion_05_credible_intervals_cover_rerun_means() {
    let t0 = Instant::now();
    let report = run_coverage(&CoverageConfig::desk_scale(7)).unwrap();
    let rate = report.failure_rate;
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = rate <= 0.05 && elapsed < 900.0;
    println!(
        "criterion 05 (coverage over 50 checkpoints x 200 reruns, failure rate {rate:.3}): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(
        ok,
        "failure rate {rate}, elapsed {elapsed:.1}s (limit 900s)"
    );
}

#[test]
fn criterion_06_stopping_errors_stay_within_budget() {
    let t0 = Instant::now();
    let report = run_stopping(&StoppingConfig::desk_scale(13)).unwrap();
    let late = report.pooled_late_rate();
    let early = report.pooled_early_rate();
    let denom = report.pooled_condition_iterations;
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = denom > 0 && late <= 0.01 && early <= 0.01 && elapsed < 600.0;
    println!(
        "criterion 06 (stopping errors over {denom} counted iterations: late {late:.4}, early {early:.4}): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(
        ok,
        "late {late}, early {early}, denominator {denom}, elapsed {elapsed:.1}s (limit 600s)"
    );
}

#[test]
fn criterion_07_streamed_rows_match_the_dense_weighted_solve() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    let mut ok = true;
    let mut details = String::new();
    for case in 0..100 {
        let cols = rng.gen_range(2..=10usize);
        let rows = rng.gen_range((cols + 2).max(10)..=50usize);
        let a = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = DVector::from_fn(rows, |_, _| rng.gen_range(0.5..2.0));
        let truth = DVector::from_fn(cols, |_, _| rng.sample::<f64, _>(StandardNormal));
        let noise = DVector::from_fn(rows, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let b = &a * &truth + noise;

        let mut stream = GentlemanState::new(cols);
        for i in 0..rows {
            let row: Vec<f64> = (0..cols).map(|j| a[(i, j)]).collect();
            stream.include_row(w[i], &row, b[i]).unwrap();
        }
        let x_s = stream.solve();

        let scaled_a = DMatrix::from_fn(rows, cols, |i, j| w[i].sqrt() * a[(i, j)]);
        let scaled_b = DVector::from_fn(rows, |i, _| w[i].sqrt() * b[i]);
        let x_d = scaled_a
            .clone()
            .svd(true, true)
            .solve(&scaled_b, 1e-14)
            .unwrap();
        let r_s = (&scaled_a * &x_s - &scaled_b).norm();
        let r_d = (&scaled_a * &x_d - &scaled_b).norm();
        if (r_s - r_d).abs() > 1e-10 * r_d {
            ok = false;
            details.push_str(&format!(
                "case {case} ({rows}x{cols}): streamed residual {r_s:.12e} vs dense {r_d:.12e}\n"
            ));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    println!(
        "criterion 07 (100 streamed weighted solves match dense residuals to 1e-10): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(ok, "{details}");
}

#[test]
fn criterion_08_step_jacobian_matches_finite_differences() {
    let t0 = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(88);
    let mut ok = true;
    let mut details = String::new();
    for case in 0..20 {
        let nc = 8 + case;
        let boundary = if case % 2 == 0 {
            Boundary::Periodic
        } else {
            Boundary::ClampedEdge
        };
        let phi = DVector::from_fn(nc, |_, _| 1.0 + 0.5 * rng.gen_range(0.0..1.0));
        let u = DVector::from_fn(nc, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
        let state = SwState::new(phi, u, 0.5, 0.01, boundary).unwrap();
        let jac = state.jacobian().to_dense();

        let z0 = state.state_vector();
        let ns = z0.len();
        let mut fd = DMatrix::zeros(ns, ns);
        for j in 0..ns {
            let h = 1e-6 * (1.0 + z0[j].abs());
            let mut plus = z0.clone();
            plus[j] += h;
            let mut minus = z0.clone();
            minus[j] -= h;
            let f_plus = state
                .with_state_vector(&plus)
                .unwrap()
                .step()
                .state_vector();
            let f_minus = state
                .with_state_vector(&minus)
                .unwrap()
                .step()
                .state_vector();
            fd.set_column(j, &((f_plus - f_minus) / (2.0 * h)));
        }
        let rel = (&fd - &jac).norm() / jac.norm();
        if rel > 1e-5 {
            ok = false;
            details.push_str(&format!("state {case} (nc {nc}): fd mismatch {rel:.3e}\n"));
        }
        // The velocity update has no self-coupling through the height:
        // the diagonal of that block is exactly zero wherever the stencil
        // does not fold a neighbor index back onto the cell (everywhere
        // under wrap-around; interior cells under clamped edges).
        let diag_range = match boundary {
            Boundary::Periodic => 0..nc,
            Boundary::ClampedEdge => 1..nc - 1,
        };
        for i in diag_range {
            if jac[(nc + i, i)] != 0.0 {
                ok = false;
                details.push_str(&format!(
                    "state {case}: velocity-height diagonal entry ({},{}) = {:.3e} not exactly zero\n",
                    nc + i,
                    i,
                    jac[(nc + i, i)]
                ));
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    println!(
        "criterion 08 (step Jacobian vs finite differences at 20 states): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(ok, "{details}");
}

#[test]
fn criterion_09_streamed_window_matches_the_assembled_dense_solve() {
    let t0 = Instant::now();
    // (cells, steps, weighted, shifted linearization point)
    let instances = [
        (2usize, 1usize, false, false),
        (3, 1, true, false),
        (3, 2, false, true),
        (4, 2, true, false),
        (4, 3, false, false),
        (5, 1, true, true),
        (5, 2, false, false),
        (5, 3, true, false),
        (2, 3, false, true),
        (4, 1, true, true),
    ];
    let mut ok = true;
    let mut details = String::new();
    for (case, &(nc, nt, weighted, shifted)) in instances.iter().enumerate() {
        let seed = 9000 + case as u64;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let ns = 2 * nc;
        let half = nc as f64 / 2.0;
        let phi = DVector::from_fn(nc, |i, _| {
            let t = (i as f64 - half) / half.max(1.0);
            1.0 + t * t
        });
        let u = DVector::from_element(nc, 0.5);
        let background = SwState::new(phi, u, 0.5, 1e-3, Boundary::Periodic).unwrap();
        let trajectory = simulate(&background, nt);
        let observations = generate_observations(&trajectory[1..], 0.5, seed).unwrap();

        let mut problem = FourDVarProblem::new(background.clone(), observations.clone()).unwrap();
        let mut v = DVector::from_element(ns, 1.0);
        let mut w_obs = DVector::from_element(ns, 1.0);
        if weighted {
            v = DVector::from_fn(ns, |_, _| rng.gen_range(1.0..2.0));
            w_obs = DVector::from_fn(ns, |_, _| rng.gen_range(1.0..2.0));
            problem = problem
                .with_background_weight(v.clone())
                .unwrap()
                .with_observation_weight(w_obs.clone())
                .unwrap();
        }
        let mut prev = background.state_vector();
        if shifted {
            prev = DVector::from_fn(ns, |j, _| {
                prev[j] + 0.05 * rng.sample::<f64, _>(StandardNormal)
            });
            problem = problem.with_prev_estimate(prev.clone()).unwrap();
        }

        // Streamed run; p = state dimension makes every update exact.
        let config = FourDVarConfig {
            p: ns,
            max_iterations: 8,
            tracker: never_stop(2, 2),
        };
        let spec = SketchSpec::new(SketchMethod::Gaussian, seed + 50);
        let report = assimilate(&problem, &spec, &config).unwrap();
        let r_s = problem.streamed_residual(&report.increment).unwrap();

        // Dense oracle: assemble the whole window and solve it in one go.
        let zb = background.state_vector();
        let total_rows = ns + nt * nc;
        let mut a = DMatrix::zeros(total_rows, ns);
        let mut rhs = DVector::zeros(total_rows);
        let mut weights = DVector::zeros(total_rows);
        for j in 0..ns {
            a[(j, j)] = 1.0;
            rhs[j] = zb[j] - prev[j];
            weights[j] = v[j];
        }
        let mut state = background.with_state_vector(&prev).unwrap();
        let mut m = DMatrix::identity(ns, ns);
        let mut row = ns;
        for y in &observations {
            let jac = state.jacobian();
            state = state.step();
            m = jac.apply_mat(&m);
            for j in 0..nc {
                for col in 0..ns {
                    a[(row, col)] = m[(j, col)];
                }
                rhs[row] = y[j] - state.phi()[j];
                weights[row] = w_obs[j];
                row += 1;
            }
        }
        let scaled_a = DMatrix::from_fn(total_rows, ns, |i, j| weights[i].sqrt() * a[(i, j)]);
        let scaled_rhs = DVector::from_fn(total_rows, |i, _| weights[i].sqrt() * rhs[i]);
        let x_d = scaled_a
            .clone()
            .svd(true, true)
            .solve(&scaled_rhs, 1e-14)
            .unwrap();
        let r_d = (&scaled_a * &x_d - &scaled_rhs).norm();

        if (r_s - r_d).abs() > 1e-6 * r_d {
            ok = false;
            details.push_str(&format!(
                "instance {case} (nc {nc}, nt {nt}): streamed {r_s:.9e} vs dense {r_d:.9e}\n"
            ));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    println!(
        "criterion 09 (10 tiny windows: streamed residual = dense assembled residual): {} [{elapsed:.1}s]",
        verdict(ok)
    );
    assert!(ok, "{details}");
}

#[test]
fn criterion_10_streaming_buffers_respect_the_memory_contract() {
    let t0 = Instant::now();
    let nc = 200;
    let nt = 50;
    let p = 20;
    let half = nc as f64 / 2.0;
    let phi = DVector::from_fn(nc, |i, _| {
        let t = (i as f64 - half) / half;
        t * t
    });
    let u = DVector::from_element(nc, 0.5);
    let initial = SwState::new(phi, u, 1.0, 1e-3, Boundary::Periodic).unwrap();
    let trajectory = simulate(&initial, nt);
    let observations = generate_observations(&trajectory[1..], 1.0, 1000).unwrap();
    let problem = FourDVarProblem::new(initial, observations).unwrap();
    let config = FourDVarConfig {
        p,
        max_iterations: 3,
        tracker: never_stop(3, 3),
    };
    let spec = SketchSpec::new(SketchMethod::Achlioptas, 1001);
    let report = assimilate(&problem, &spec, &config).unwrap();

    let ns = 2 * nc;
    let bound = (ns * p).max(p * p);
    let largest = report.alloc.largest_entries();
    let ok = largest <= bound && !report.alloc.sites().is_empty();
    println!(
        "criterion 10 (largest streamed buffer {largest} entries within bound {bound}): {} [{:.1}s]",
        verdict(ok),
        t0.elapsed().as_secs_f64()
    );
    assert!(
        ok,
        "largest buffer {largest}, bound {bound}, sites {:?}",
        report.alloc.sites()
    );
}
