//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test --test acceptance`.

// `ensure!` negates its condition so NaN measurements fail.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use bcfw::boxfw::BoxBounds;
use bcfw::diagnostics::{curvature_from_radius, descent_check, exact_curvature, nonuniformity_chi, StepRecord};
use bcfw::models::{gen_synthetic_chain, ChainGenConfig, StructuredModel, ToyModel};
use bcfw::objective::{certified_gap, evaluate_gaps};
use bcfw::regpath::{certificate_at, run_path_observed, PathStatus, RegPathConfig};
use bcfw::solvers::{lagrange_dual, PrimalState, Sampling, Solver, SolverConfig, StaleCheck, StepAction, StepKind};
use bcfw::state::weight_from_duals;
use bcfw_oracles::{fixtures, DenseProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn configs(lambda: f64) -> Vec<SolverConfig> {
    let mut out = Vec::new();
    for step_kind in [StepKind::Fw, StepKind::Pairwise, StepKind::Away] {
        for sampling in [Sampling::Uniform, Sampling::Gap] {
            for cache_enabled in [false, true] {
                out.push(SolverConfig { lambda, step_kind, sampling, cache_enabled, ..Default::default() });
            }
        }
    }
    out
}

fn dense_alpha(p: &DenseProblem, s: &Solver<'_, dyn StructuredModel + '_>) -> Vec<Vec<f64>> {
    let duals = s.state().duals.as_ref().expect("duals");
    p.blocks.iter().zip(&duals.blocks).map(|(b, d)| b.iter().map(|c| d.alpha(&c.labeling.key())).collect()).collect()
}

fn small_chain(seed: u64) -> bcfw::models::ChainModel {
    gen_synthetic_chain(&ChainGenConfig { n: 6, t_min: 2, t_max: 4, d_u: 4, num_labels: 3, seed, ..Default::default() })
        .unwrap()
}

fn brute_force_equivalence() -> Check {
    let m = fixtures::three_examples();
    let lambda = 0.1;
    let reference = DenseProblem::from_model(&m, lambda).solve_dual(1e-10, 1_000_000);
    ensure!(reference.gap <= 1e-10, "reference solve gap {}", reference.gap);
    let mut worst: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for cfg in configs(lambda) {
        let cfg = SolverConfig { tol: 1e-9, max_passes: 100_000, gap_check_every: 1, ..cfg };
        let name = cfg.method_name();
        let clock = Instant::now();
        let mut s = Solver::new(&m, cfg).map_err(|e| e.to_string())?;
        let out = s.run().map_err(|e| e.to_string())?;
        let secs = clock.elapsed().as_secs_f64();
        let err = (s.state().primal.dual_objective(lambda) - reference.objective).abs();
        ensure!(out.converged && err <= 1e-6, "{name}: error {err:e}");
        ensure!(secs < 5.0, "{name}: {secs:.2} s");
        worst = worst.max(err);
        slowest = slowest.max(secs);
    }
    Ok(format!("12 methods, max |f - f*| = {worst:.1e}, slowest {slowest:.3} s"))
}

fn gap_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let three = fixtures::three_examples();
    let chains: Vec<_> = (0..4).map(small_chain).collect();
    let mut max_sum_err: f64 = 0.0;
    let mut max_dense_err: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for trial in 0..100 {
        let m: &dyn StructuredModel = if trial % 5 == 0 { &three } else { &chains[trial % 4] };
        let lambda = 10f64.powf(rng.gen_range(-2.5..0.5));
        let all = configs(lambda);
        let cfg = SolverConfig { seed: trial as u64, track_duals: true, ..all[rng.gen_range(0..all.len())].clone() };
        let steps = rng.gen_range(1..300);
        let mut s = Solver::new(m, cfg).map_err(|e| e.to_string())?;
        for _ in 0..steps {
            s.step().map_err(|e| e.to_string())?;
        }
        let acc = s.state().primal.accumulators();
        let pass = evaluate_gaps(m, lambda, s.state().primal.point(), acc).map_err(|e| e.to_string())?;
        let sum: f64 = pass.per_block.iter().sum();
        max_sum_err = max_sum_err.max((sum - pass.total).abs());
        let p = DenseProblem::from_model(m, lambda);
        for (a, b) in pass.per_block.iter().zip(p.block_gaps(&dense_alpha(&p, &s))) {
            max_dense_err = max_dense_err.max((a - b).abs());
        }
        let dual = lagrange_dual(&s.state().primal, lambda);
        // relative to the magnitude that cancels in P - D
        let rel = (pass.primal - dual - pass.total).abs() / pass.primal.abs().max(dual.abs()).max(1e-300);
        max_rel = max_rel.max(rel);
    }
    ensure!(max_sum_err <= 1e-10, "sum mismatch {max_sum_err:e}");
    ensure!(max_dense_err <= 1e-10, "dense block gaps differ by {max_dense_err:e}");
    ensure!(max_rel <= 1e-8, "primal - dual differs from the gap by {max_rel:e} (relative)");
    Ok(format!("100 states, sum err {max_sum_err:.1e}, dense err {max_dense_err:.1e}, P-D rel err {max_rel:.1e}"))
}

fn descent_audit() -> Check {
    let three = fixtures::three_examples();
    let toy = ToyModel::new(10, 6).unwrap().relaxed();
    let chain = gen_synthetic_chain(&ChainGenConfig { n: 20, seed: 3, ..Default::default() }).unwrap();
    let runs: [(&dyn StructuredModel, f64, Sampling, bool); 4] = [
        (&three, 0.1, Sampling::Uniform, true),
        (&toy, 0.05, Sampling::Gap, true),
        (&chain, 0.01, Sampling::Uniform, false),
        (&chain, 0.1, Sampling::Gap, false),
    ];
    let mut steps = 0;
    let mut violations = 0;
    for (m, lambda, sampling, exact) in runs {
        let curv: Vec<f64> = if exact {
            (0..m.num_examples()).map(|i| exact_curvature(m, i, lambda).unwrap().unwrap()).collect()
        } else {
            Vec::new()
        };
        let mut s = Solver::new(m, SolverConfig { lambda, sampling, seed: 5, ..Default::default() })
            .map_err(|e| e.to_string())?;
        for _ in 0..250 {
            let before = s.state().primal.dual_objective(lambda);
            let r = s.step().map_err(|e| e.to_string())?;
            let rec = StepRecord {
                block: r.block,
                f_before: before,
                f_after: s.state().primal.dual_objective(lambda),
                gap: r.gap,
            };
            let c = if exact { curv[r.block] } else { s.curvature_bound(r.block) };
            violations += usize::from(!descent_check(&rec, c));
            steps += 1;
        }
    }
    ensure!(violations == 0, "{violations} of {steps} steps violate the bound");
    Ok(format!("{steps} FW steps, 0 violations"))
}

fn rate_envelope() -> Check {
    let m = fixtures::three_examples();
    let lambda = 0.1;
    let n = m.num_examples();
    let p = DenseProblem::from_model(&m, lambda);
    let f_opt = p.solve_dual(1e-12, 1_000_000).objective;
    let c_hat: f64 = p
        .blocks
        .iter()
        .map(|b| {
            let r = b.iter().map(|c| c.psi.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
            curvature_from_radius(r, lambda, n)
        })
        .sum();
    let mut checked = 0;
    let mut tightest = f64::INFINITY;
    for seed in 0..10 {
        let mut s = Solver::new(&m, SolverConfig { lambda, seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let h0 = s.state().primal.dual_objective(lambda) - f_opt;
        for k in 1..=2000u64 {
            s.step().map_err(|e| e.to_string())?;
            let h = s.state().primal.dual_objective(lambda) - f_opt;
            let bound = 2.0 * n as f64 * (c_hat + h0) / (k as f64 + 2.0 * n as f64);
            ensure!(h <= bound, "seed {seed}, k {k}: h = {h:e} > {bound:e}");
            tightest = tightest.min(bound - h);
            checked += 1;
        }
    }
    Ok(format!("{checked} iterates under the envelope (min slack {tightest:.2e})"))
}

fn toy_separation() -> Check {
    let (n, k, tol) = (50, 20, 1e-3);
    let m = ToyModel::new(n, k).unwrap();
    let cfg = |sampling, seed| SolverConfig {
        lambda: m.lambda(),
        sampling,
        seed,
        tol,
        max_passes: 100_000,
        ..Default::default()
    };

    for seed in 0..5 {
        let mut s = Solver::new(&m, cfg(Sampling::Gap, seed)).map_err(|e| e.to_string())?;
        let mut calls = vec![0usize; n];
        let mut first = None;
        while !(s.state().gaps.all_finite() && s.state().gaps.sum() <= tol) {
            let r = s.step().map_err(|e| e.to_string())?;
            if r.oracle_called && !m.is_hard(r.block) {
                if first.is_none() {
                    first = Some(r.block);
                } else {
                    calls[r.block] += 1;
                }
            }
        }
        let total: usize = calls.iter().sum();
        ensure!(total == n - 1, "seed {seed}: {total} easy calls after the first visit");
        ensure!((1..n).all(|i| calls[i] == 1), "seed {seed}: some easy block visited twice");
        ensure!(s.checkpoint().map_err(|e| e.to_string())? <= tol, "seed {seed}: audited gap above tol");
    }

    let mut ratios = Vec::new();
    let mut detail = Vec::new();
    for seed in 0..5 {
        let mut calls = [0u64; 2];
        for (slot, sampling) in [Sampling::Gap, Sampling::Uniform].into_iter().enumerate() {
            let mut s = Solver::new(&m, cfg(sampling, seed)).map_err(|e| e.to_string())?;
            let out = s.run().map_err(|e| e.to_string())?;
            ensure!(out.converged, "{sampling} seed {seed} did not converge");
            calls[slot] = out.counters.oracle_calls;
        }
        ratios.push(calls[1] as f64 / calls[0] as f64);
        detail.push(format!("{}/{}", calls[0], calls[1]));
    }
    ratios.sort_by(f64::total_cmp);
    let median = ratios[2];
    ensure!(median >= 5.0, "median ratio {median:.2} ({})", detail.join(" "));
    Ok(format!("n-1 easy calls on 5 seeds; gap/uniform calls {}; median ratio {median:.2}", detail.join(" ")))
}

fn toy_constants() -> Check {
    let (n, k) = (50, 20);
    let m = ToyModel::new(n, k).unwrap();
    let lambda = m.lambda();
    let mut s = Solver::new(&m, SolverConfig { lambda, ..Default::default() }).map_err(|e| e.to_string())?;
    let r = s.step_block(7).map_err(|e| e.to_string())?;
    ensure!((r.gap - 1.0 / n as f64).abs() <= 1e-12, "first easy gap {}", r.gap);

    let p = DenseProblem::from_model(&m, lambda);
    let hard: Vec<f64> = p.solve_dual(1e-13, 2_000_000).alpha[0].clone();
    let mut alpha = p.ground_truth_alpha();
    alpha[0] = hard;
    let w = p.weights(&alpha);
    // hard and easy blocks use disjoint coordinates, so only the hard part of w is nonzero
    let f_hard_opt = 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>() - p.loss_term(&alpha);
    let mut s = Solver::new(&m, SolverConfig { lambda, ..Default::default() }).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for t in 1..=k {
        s.step_block(0).map_err(|e| e.to_string())?;
        let acc = s.state().primal.accumulators();
        let f = 0.5 * lambda * acc.per_block_w[0].iter().map(|x| x * x).sum::<f64>() - acc.per_block_ell[0];
        let want = (1.0 / (4.0 * n as f64)) * (1.0 / t as f64 - 1.0 / k as f64);
        let err = (f - f_hard_opt - want).abs();
        ensure!(err <= 1e-9, "t = {t}: error {err:e}");
        worst = worst.max(err);
    }
    Ok(format!("easy gap 1/n; hard suboptimality formula max error {worst:.1e}"))
}

fn chi_identity() -> Check {
    for n in [1usize, 2, 7, 100] {
        let u = nonuniformity_chi(&vec![3.5; n]).map_err(|e| e.to_string())?;
        ensure!((u - 1.0).abs() <= 1e-12, "uniform chi {u} at n = {n}");
        let mut e = vec![0.0; n];
        e[n / 2] = 2.0;
        let o = nonuniformity_chi(&e).map_err(|e| e.to_string())?;
        ensure!((o - (n as f64).sqrt()).abs() <= 1e-12, "one-hot chi {o} at n = {n}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let x: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..10.0) }).collect();
        if x.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let l1: f64 = x.iter().sum();
        let l2 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let lhs = l2 * (n as f64).sqrt();
        let rhs = nonuniformity_chi(&x).map_err(|e| e.to_string())? * l1;
        worst = worst.max((lhs - rhs).abs() / lhs);
    }
    ensure!(worst <= 1e-12, "relative error {worst:e}");
    Ok(format!("uniform 1, one-hot sqrt(n); identity max rel error {worst:.1e}"))
}

fn cache_safety() -> Check {
    let m = gen_synthetic_chain(&ChainGenConfig {
        n: 200,
        t_min: 6,
        t_max: 10,
        num_labels: 5,
        seed: 0,
        ..Default::default()
    })
    .unwrap();
    let mut parts = Vec::new();
    for sampling in [Sampling::Uniform, Sampling::Gap] {
        let mut calls = [0u64; 2];
        for (slot, cache_enabled) in [false, true].into_iter().enumerate() {
            let cfg = SolverConfig {
                lambda: 0.01,
                tol: 0.01,
                sampling,
                cache_enabled,
                cache_f: 0.25,
                cache_nu: 0.01,
                max_passes: 1000,
                ..Default::default()
            };
            let mut s = Solver::new(&m, cfg).map_err(|e| e.to_string())?;
            let out = s.run().map_err(|e| e.to_string())?;
            ensure!(out.converged, "{sampling} cache={cache_enabled} did not reach 0.01");
            if cache_enabled {
                ensure!(out.counters.cache_hits > 0, "{sampling}: no cache hits");
                ensure!(
                    out.counters.hit_safety_violations == 0,
                    "{sampling}: {} hits below the global term",
                    out.counters.hit_safety_violations
                );
            }
            calls[slot] = out.counters.oracle_calls;
        }
        let saving = 1.0 - calls[1] as f64 / calls[0] as f64;
        ensure!(saving >= 0.3, "{sampling}: {} vs {} calls, saving {:.0}%", calls[1], calls[0], 100.0 * saving);
        parts.push(format!("{sampling} {}->{} ({:.0}% fewer)", calls[0], calls[1], 100.0 * saving));
    }
    Ok(format!("{}; every hit above (nu/n) g", parts.join(", ")))
}

fn r_squared(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (v - ym);
        sxx += dx * dx;
        syy += (v - ym) * (v - ym);
    }
    (sxy / sxx, sxy * sxy / (sxx * syy))
}

fn pairwise_audit() -> Check {
    let mut steps = 0;
    let mut drops = 0;
    for seed in 0..5u64 {
        let m = gen_synthetic_chain(&ChainGenConfig {
            n: 20,
            t_min: 3,
            t_max: 5,
            d_u: 6,
            num_labels: 4,
            seed,
            ..Default::default()
        })
        .unwrap();
        let cfg = SolverConfig {
            lambda: [0.01, 0.05, 0.2, 1.0, 0.03][seed as usize],
            step_kind: StepKind::Pairwise,
            sampling: if seed % 2 == 0 { Sampling::Uniform } else { Sampling::Gap },
            cache_enabled: seed % 3 == 0,
            seed,
            ..Default::default()
        };
        let mut s = Solver::new(&m, cfg).map_err(|e| e.to_string())?;
        for _ in 0..2000 {
            let r = s.step().map_err(|e| e.to_string())?;
            steps += 1;
            let duals = s.state().duals.as_ref().unwrap();
            ensure!(duals.simplex_error() <= 1e-10, "simplex error {:e}", duals.simplex_error());
            ensure!(duals.blocks.iter().all(|b| b.entries().all(|e| e.alpha >= 0.0)), "negative coefficient");
            if r.action == StepAction::Pairwise {
                let away = r.away.as_ref().unwrap().key();
                let kept = duals.blocks[r.block].active().any(|e| e.corner.key() == away);
                ensure!(r.dropped == (r.gamma == r.gamma_max), "drop flag disagrees with the clip");
                ensure!(r.dropped != kept, "away corner {} active after a step with dropped = {}", away, r.dropped);
                drops += usize::from(r.dropped);
            }
        }
    }
    ensure!(drops > 0, "no drop steps exercised");

    let m = fixtures::three_examples();
    let mut worst_r2: f64 = 1.0;
    for lambda in [100.0, 300.0, 1000.0] {
        for seed in 0..5 {
            let cfg = SolverConfig {
                lambda,
                step_kind: StepKind::Pairwise,
                sampling: Sampling::Gap,
                tol: 1e-12,
                gap_check_every: 1,
                max_passes: 10_000,
                stale_check: StaleCheck::Off,
                seed,
                ..Default::default()
            };
            let mut s = Solver::new(&m, cfg).map_err(|e| e.to_string())?;
            let out = s.run().map_err(|e| e.to_string())?;
            ensure!(out.converged, "lambda {lambda} seed {seed}: no convergence");
            let gaps: Vec<f64> = s.trace().records.iter().map(|r| r.gap).collect();
            ensure!(gaps.len() >= 10, "lambda {lambda} seed {seed}: only {} checkpoints", gaps.len());
            let tail = &gaps[gaps.len() - 10..];
            ensure!(tail.windows(2).all(|w| w[1] < w[0]), "lambda {lambda} seed {seed}: gap not decreasing {tail:?}");
            ensure!(tail[0] / tail[9] >= 10.0, "lambda {lambda} seed {seed}: tail spans less than a decade");
            let logs: Vec<f64> = tail.iter().map(|g| g.ln()).collect();
            let (slope, r2) = r_squared(&logs);
            ensure!(slope < 0.0 && r2 >= 0.95, "lambda {lambda} seed {seed}: slope {slope:.3}, R^2 {r2:.3}");
            worst_r2 = worst_r2.min(r2);
        }
    }
    Ok(format!("{steps} pairwise steps, {drops} drops; log-gap tail linear, min R^2 {worst_r2:.3}"))
}

fn regularization_path() -> Check {
    let m = gen_synthetic_chain(&ChainGenConfig { n: 100, seed: 0, ..Default::default() }).unwrap();
    let (eps, kappa) = (0.1, 0.9);
    let cfg = RegPathConfig { epsilon: eps, kappa, lambda_min: 1e-3, ..RegPathConfig::exact() };
    let d = m.feature_dim();
    let mut predict_err: f64 = 0.0;
    let mut rebuild_err: f64 = 0.0;
    let mut problems = Vec::new();
    let path = run_path_observed(&m, &cfg, |ev| {
        if ev.state.primal.accumulators().w != *ev.w_before {
            problems.push(format!("w changed by the rescale at {}", ev.lambda_new));
        }
        let rebuilt = weight_from_duals(ev.state.duals.as_ref().unwrap(), ev.lambda_new, d);
        for (a, b) in rebuilt.iter().zip(ev.w_before) {
            rebuild_err = rebuild_err.max((a - b).abs());
        }
        let acc = ev.state.primal.accumulators();
        match evaluate_gaps(&m, ev.lambda_new, &acc.w, acc) {
            Ok(pass) => {
                for (pred, g) in ev.state.gaps.g.iter().zip(&pass.per_block) {
                    predict_err = predict_err.max((pred - g).abs());
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
    })
    .map_err(|e| e.to_string())?;
    ensure!(problems.is_empty(), "{}", problems.join("; "));
    ensure!(!matches!(path.status, PathStatus::Aborted { .. }), "path aborted: {:?}", path.status);
    ensure!(predict_err <= 1e-9, "predicted block gaps off by {predict_err:e}");
    ensure!(rebuild_err <= 1e-10, "duals rebuild w with error {rebuild_err:e}");

    let mut worst: f64 = 0.0;
    for b in &path.breakpoints {
        let g = certified_gap(&m, b.lambda, &b.w, b.ell).map_err(|e| e.to_string())?;
        ensure!(g <= eps, "breakpoint {}: gap {g}", b.lambda);
        worst = worst.max(g);
    }
    let hi = path.breakpoints[0].lambda * 4.0;
    let lo = if path.covered_to > 0.0 { path.covered_to } else { path.breakpoints.last().unwrap().lambda / 10.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let lambda = (rng.gen_range(lo.ln()..hi.ln())).exp();
        let g = certificate_at(&m, &path, lambda).map_err(|e| e.to_string())?;
        ensure!(g <= eps, "lambda {lambda}: gap {g}");
        worst = worst.max(g);
    }
    Ok(format!(
        "{} breakpoints down to {:.2e}, worst audited gap {worst:.4}, prediction err {predict_err:.1e}, rebuild err {rebuild_err:.1e}",
        path.breakpoints.len(),
        path.covered_to
    ))
}

fn box_constraints() -> Check {
    let m = fixtures::two_features();
    let lambda = 0.1;
    let bounds = BoxBounds::new(vec![-0.1, -0.05], vec![0.2, 0.05]).map_err(|e| e.to_string())?;
    let mut free =
        Solver::new(&m, SolverConfig { lambda, tol: 1e-8, ..Default::default() }).map_err(|e| e.to_string())?;
    free.run().map_err(|e| e.to_string())?;
    let w_free = free.state().primal.point().to_vec();
    let binding = (0..2).filter(|&j| w_free[j] < bounds.lower[j] || w_free[j] > bounds.upper[j]).count();
    ensure!(binding > 0, "bounds do not bind: free optimum {w_free:?}");

    let cfg = SolverConfig { lambda, tol: 1e-7, max_passes: 1_000_000, ..Default::default() };
    let mut s = Solver::with_bounds(&m, cfg, bounds.clone()).map_err(|e| e.to_string())?;
    ensure!(s.run().map_err(|e| e.to_string())?.converged, "box solve did not converge");
    let PrimalState::Boxed(b) = &s.state().primal else { return Err("box state expected".into()) };
    ensure!(b.is_feasible(), "w outside the box: {:?}", b.w);
    ensure!(b.slackness() == (0.0, 0.0), "slackness {:?}", b.slackness());
    let pass = evaluate_gaps(&m, lambda, &b.w, &b.v).map_err(|e| e.to_string())?;
    ensure!(pass.per_block.iter().all(|&g| (0.0..=1e-5).contains(&g)), "block gaps {:?}", pass.per_block);

    let chain = small_chain(12);
    let d = chain.feature_dim();
    let cfg = SolverConfig { lambda: 0.05, max_passes: 40, gap_check_every: 1, seed: 3, ..Default::default() };
    let mut plain = Solver::new(&chain, cfg.clone()).map_err(|e| e.to_string())?;
    let loose = BoxBounds::new(vec![-1e6; d], vec![1e6; d]).map_err(|e| e.to_string())?;
    let mut boxed = Solver::with_bounds(&chain, cfg, loose).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..40 * chain.num_examples() {
        plain.step().map_err(|e| e.to_string())?;
        boxed.step().map_err(|e| e.to_string())?;
        for (a, b) in plain.state().primal.point().iter().zip(boxed.state().primal.point()) {
            worst = worst.max((a - b).abs());
        }
    }
    plain.checkpoint().map_err(|e| e.to_string())?;
    boxed.checkpoint().map_err(|e| e.to_string())?;
    for (x, y) in plain.trace().records.iter().zip(&boxed.trace().records) {
        worst = worst.max((x.gap - y.gap).abs()).max((x.primal - y.primal).abs());
    }
    ensure!(worst <= 1e-12, "non-binding box deviates by {worst:e}");
    Ok(format!("{binding} binding bound(s), gaps {:.1e}; loose box max deviation {worst:.1e}", pass.total))
}

fn bcfw(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_bcfw")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("bcfw {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for tag in ["a", "b"] {
        let dir = root.path().join(tag);
        fs::create_dir(&dir).map_err(|e| e.to_string())?;
        let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
        let data = p("chain.jsonl");
        let mut stdout = Vec::new();
        bcfw(&["gen", "--n", "15", "--t-min", "3", "--t-max", "5", "--seed", "4", "--out", &data])?;
        bcfw(&["toy", "--n", "10", "--K", "5", "--out", &p("toy.jsonl")])?;
        let solver = ["--steps", "pairwise", "--sampling", "gap", "--cache", "--seed", "9", "--time-column", "zero"];
        let mut train = vec!["train", "--data", &data, "--lambda", "0.05", "--max-passes", "30"];
        let (trace, weights) = (p("trace.csv"), p("weights.txt"));
        train.extend(solver);
        train.extend(["--out-trace", &trace, "--out-weights", &weights]);
        stdout.push(bcfw(&train)?);
        let path_dir = p("path");
        bcfw(&["regpath", "--data", &data, "--lambda-min", "0.02", "--time-column", "zero", "--out-dir", &path_dir])?;
        stdout.push(bcfw(&["audit", "--data", &data, "--manifest", &format!("{path_dir}/manifest.json")])?);
        let grid_dir = p("grid");
        bcfw(&[
            "regpath",
            "--data",
            &data,
            "--grid",
            "--tol",
            "0.05",
            "--time-column",
            "zero",
            "--out-dir",
            &grid_dir,
        ])?;
        let sweep_dir = p("sweep");
        bcfw(&[
            "sweep",
            "--data",
            &data,
            "--lambda",
            "0.05",
            "--seeds",
            "2",
            "--jobs",
            "4",
            "--max-passes",
            "10",
            "--time-column",
            "zero",
            "--out-dir",
            &sweep_dir,
        ])?;
        let mut files = snapshot(&dir);
        files.retain(|(name, _)| !["path", "grid", "sweep"].contains(&name.as_str()));
        for sub in ["path", "grid", "sweep"] {
            files.extend(snapshot(&dir.join(sub)).into_iter().map(|(n, b)| (format!("{sub}/{n}"), b)));
        }
        runs.push((files, stdout));
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure!(a.0.len() == b.0.len(), "different file sets");
    for ((na, ba), (nb, bb)) in a.0.iter().zip(&b.0) {
        ensure!(na == nb && ba == bb, "{na} differs between runs");
    }
    ensure!(a.1 == b.1, "train or audit stdout differs");
    Ok(format!("{} output files byte-identical across reruns", a.0.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("brute-force equivalence", brute_force_equivalence),
        ("gap identities", gap_identities),
        ("descent inequality audit", descent_audit),
        ("uniform FW rate envelope", rate_envelope),
        ("toy separation of gap vs uniform sampling", toy_separation),
        ("toy constants", toy_constants),
        ("non-uniformity measure", chi_identity),
        ("cache safety and savings", cache_safety),
        ("pairwise simplex and drop steps", pairwise_audit),
        ("regularization path audit", regularization_path),
        ("box constraints", box_constraints),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panic: {}", msg.unwrap_or_default()))
        });
        let secs = clock.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.1} s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
