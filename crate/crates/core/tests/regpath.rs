use bcfw::error::Error;
use bcfw::linalg::SparseVec;
use bcfw::models::{
    gen_synthetic_chain, ChainGenConfig, ChainModel, Labeling, OracleMode, OracleResult, StructuredModel,
};
use bcfw::objective::{certified_gap, evaluate_gaps};
use bcfw::regpath::{
    certificate_at, eval_path_at, init_path, rescale_state, run_path, run_path_observed, PathMode, PathStatus,
    RegPathConfig,
};
use bcfw::solvers::{Solver, SolverConfig};
use bcfw::state::weight_from_duals;
use bcfw_oracles::{fixtures, DenseProblem};

fn chain(n: usize, seed: u64) -> ChainModel {
    gen_synthetic_chain(&ChainGenConfig { n, seed, ..Default::default() }).unwrap()
}

fn small_path_config() -> RegPathConfig {
    RegPathConfig { lambda_min: 1e-2, ..RegPathConfig::exact() }
}

#[test]
fn init_is_kappa_epsilon_approximate() {
    let m = chain(40, 1);
    let (eps, kappa) = (0.1, 0.9);
    let init = init_path(&m, eps, kappa).unwrap();
    let acc = init.state.primal.accumulators();
    let pass = evaluate_gaps(&m, init.lambda_inf, &acc.w, acc).unwrap();
    assert!(pass.total <= kappa * eps + 1e-12, "{}", pass.total);
    // the closed-form estimates bound the true block gaps
    for (est, g) in init.state.gaps.g.iter().zip(&pass.per_block) {
        assert!(g <= &(est + 1e-12));
    }
}

#[test]
fn scaled_initial_point_covers_larger_lambdas() {
    let m = chain(40, 2);
    let init = init_path(&m, 0.1, 0.9).unwrap();
    let acc = init.state.primal.accumulators();
    for factor in [1.0, 2.0, 10.0] {
        let lambda = factor * init.lambda_inf;
        let w: Vec<f64> = acc.w.iter().map(|x| x / factor).collect();
        assert!(certified_gap(&m, lambda, &w, acc.ell).unwrap() <= 0.1);
    }
}

#[test]
fn predicted_gaps_match_dense_recomputation() {
    let m = fixtures::three_examples();
    let lambda = 0.5;
    let cfg = SolverConfig { lambda, tol: 1e-4, track_duals: true, ..Default::default() };
    let mut s = Solver::new(&m, cfg).unwrap();
    s.run().unwrap();
    let mut state = s.into_state();
    let w_before = state.primal.accumulators().w.clone();
    for rho in [0.9, 0.5] {
        let old = if rho == 0.9 { lambda } else { lambda * 0.9 };
        let new = old * rho;
        rescale_state(&m, &mut state, old, rho).unwrap();
        assert_eq!(state.primal.accumulators().w, w_before);

        let p = DenseProblem::from_model(&m, new);
        let duals = state.duals.as_ref().unwrap();
        let alpha: Vec<Vec<f64>> = p
            .blocks
            .iter()
            .zip(&duals.blocks)
            .map(|(b, d)| b.iter().map(|c| d.alpha(&c.labeling.key())).collect())
            .collect();
        let w_dense = p.weights(&alpha);
        for (a, b) in w_dense.iter().zip(&w_before) {
            assert!((a - b).abs() < 1e-10);
        }
        for (pred, dense) in state.gaps.g.iter().zip(p.block_gaps(&alpha)) {
            assert!((pred - dense).abs() < 1e-9, "{pred} vs {dense}");
        }
        assert!(duals.simplex_error() < 1e-12);
    }
}

#[test]
fn exact_path_passes_audit() {
    let m = chain(30, 3);
    let mut rescales = 0;
    let path = run_path_observed(&m, &small_path_config(), |ev| {
        rescales += 1;
        assert_eq!(ev.state.primal.accumulators().w, ev.w_before);
        let duals = ev.state.duals.as_ref().unwrap();
        let rebuilt = weight_from_duals(duals, ev.lambda_new, m.feature_dim());
        assert!(rebuilt.iter().zip(ev.w_before).all(|(a, b)| (a - b).abs() < 1e-10));
        let acc = ev.state.primal.accumulators();
        let pass = evaluate_gaps(&m, ev.lambda_new, &acc.w, acc).unwrap();
        assert!((pass.total - ev.state.gaps.sum()).abs() < 1e-9);
        assert!((ev.state.gaps.sum() - 0.1).abs() < 1e-9, "rescaled gap lands on epsilon");
    })
    .unwrap();
    assert!(path.breakpoints.len() > 3);
    assert_eq!(rescales, path.breakpoints.len() - 1);
    for pair in path.breakpoints.windows(2) {
        let rho = pair[1].rho.unwrap();
        assert!(rho > 0.0 && rho < 1.0);
        assert_eq!(pair[1].lambda, rho * pair[0].lambda);
    }
    for b in &path.breakpoints {
        assert!(b.gap <= 0.09 + 1e-12);
        assert!(certificate_at(&m, &path, b.lambda).unwrap() <= 0.1);
    }
    let hi = path.breakpoints[0].lambda;
    let lo = if path.covered_to > 0.0 { path.covered_to } else { path.breakpoints.last().unwrap().lambda / 100.0 };
    for k in 0..15 {
        let lambda = hi * (lo / hi).powf((k as f64 + 0.37) / 15.0);
        assert!(certificate_at(&m, &path, lambda).unwrap() <= 0.1 + 1e-12);
    }
}

#[test]
fn evaluation_rule() {
    let m = chain(20, 4);
    let path = run_path(&m, &small_path_config()).unwrap();
    let first = &path.breakpoints[0];
    let half: Vec<f64> = first.w.iter().map(|x| x / 2.0).collect();
    let at_double = eval_path_at(&path, 2.0 * first.lambda).unwrap();
    assert!(at_double.iter().zip(&half).all(|(a, b)| (a - b).abs() <= 1e-15 * b.abs().max(1e-300)));
    for b in &path.breakpoints {
        assert_eq!(eval_path_at(&path, b.lambda).unwrap(), b.w);
    }
    if path.covered_to > 0.0 {
        assert!(matches!(eval_path_at(&path, path.covered_to / 2.0), Err(Error::OutOfRange(_))));
    }
    assert!(eval_path_at(&path, 0.0).is_err());
}

#[test]
fn lambda_min_above_lambda_inf_gives_one_breakpoint() {
    let m = chain(20, 5);
    let cfg = RegPathConfig { lambda_min: 1e9, ..RegPathConfig::exact() };
    let path = run_path(&m, &cfg).unwrap();
    assert_eq!(path.breakpoints.len(), 1);
    assert_eq!(path.status, PathStatus::LambdaMin);
}

#[test]
fn heuristic_path_is_cheaper() {
    let m = chain(30, 6);
    let exact = run_path(&m, &small_path_config()).unwrap();
    let heur = run_path(&m, &RegPathConfig { lambda_min: 1e-2, ..RegPathConfig::heuristic() }).unwrap();
    assert_eq!(heur.mode, PathMode::Heuristic);
    let cost = |p: &bcfw::regpath::RegPath| p.breakpoints.last().unwrap().passes;
    assert!(cost(&heur) < cost(&exact), "{} vs {}", cost(&heur), cost(&exact));
}

#[test]
fn bad_kappa_rejected() {
    let m = chain(5, 0);
    for kappa in [0.0, 1.0, 1.5] {
        assert!(run_path(&m, &RegPathConfig { kappa, ..RegPathConfig::exact() }).is_err());
    }
}

/// One example whose ground truth carries a loss.
struct LossyTruth {
    truth: Labeling,
}

impl StructuredModel for LossyTruth {
    fn num_examples(&self) -> usize {
        1
    }
    fn feature_dim(&self) -> usize {
        1
    }
    fn ground_truth(&self, _i: usize) -> &Labeling {
        &self.truth
    }
    fn feature_diff(&self, _i: usize, y: &Labeling) -> bcfw::Result<SparseVec> {
        Ok(SparseVec::from_pairs(vec![(0, y.0[0] as f64)]))
    }
    fn loss(&self, _i: usize, _y: &Labeling) -> bcfw::Result<f64> {
        Ok(0.5)
    }
    fn oracle(&self, i: usize, w: &[f64], mode: OracleMode) -> bcfw::Result<OracleResult> {
        let y = Labeling::single(0);
        Ok(OracleResult::assemble(y.clone(), self.feature_diff(i, &y)?, 0.5, w, mode))
    }
}

#[test]
fn nonzero_ground_truth_loss_rejected() {
    let m = LossyTruth { truth: Labeling::single(0) };
    assert!(matches!(init_path(&m, 0.1, 0.9), Err(Error::NonzeroGroundTruthLoss { .. })));
}
