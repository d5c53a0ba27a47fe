//! Epsilon-approximate regularization paths.
//!
//! Starting from a closed-form point that is `kappa * epsilon`-approximate
//! at a large `lambda`, each step shrinks `lambda` by the largest ratio that
//! keeps the rescaled dual point `epsilon`-approximate, then re-solves to
//! `kappa * epsilon` from there. Rescaling multiplies every non-ground-truth
//! coefficient by `rho` and moves the remainder onto the ground truth, which
//! leaves `w` untouched (the ground truth has `psi = 0`) and changes each
//! block gap by exactly `(1 - rho) delta_i`.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, scale};
use crate::models::{OracleMode, StructuredModel};
use crate::objective::{certified_gap, full_gap_pass, oracle_all};
use crate::solvers::{PrimalState, Sampling, SolveOutcome, Solver, SolverConfig, SolverState, StaleCheck, StopReason};
use crate::state::{Corner, DualBlockState, GapEstimates, WeightState};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathMode {
    /// Breakpoint gaps are certified by full gap passes.
    Exact,
    /// Inner solves stop on the stale gap estimates.
    Heuristic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegPathConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub mode: PathMode,
    /// Stop once the next breakpoint would fall below this.
    pub lambda_min: f64,
    pub max_breakpoints: usize,
    /// Template for the inner solver; `lambda`, `tol` and `stale_check` are
    /// set per breakpoint.
    pub inner: SolverConfig,
}

impl RegPathConfig {
    pub fn exact() -> Self {
        RegPathConfig {
            epsilon: 0.1,
            kappa: 0.9,
            mode: PathMode::Exact,
            lambda_min: 2f64.powi(-15),
            max_breakpoints: 10_000,
            inner: SolverConfig { sampling: Sampling::Gap, max_passes: 1000, ..SolverConfig::default() },
        }
    }

    pub fn heuristic() -> Self {
        RegPathConfig { kappa: 0.7, mode: PathMode::Heuristic, ..Self::exact() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Config("kappa must lie in (0, 1)".into()));
        }
        if !(self.lambda_min > 0.0) || self.max_breakpoints == 0 {
            return Err(Error::Config("lambda_min and max_breakpoints must be positive".into()));
        }
        Ok(())
    }

    fn inner_config(&self, lambda: f64, index: usize) -> SolverConfig {
        SolverConfig {
            lambda,
            tol: self.kappa * self.epsilon,
            stale_check: match self.mode {
                PathMode::Exact => StaleCheck::Verify,
                PathMode::Heuristic => StaleCheck::Trust,
            },
            track_duals: true,
            seed: self.inner.seed.wrapping_add(index as u64),
            ..self.inner.clone()
        }
    }
}

/// Starting point of a path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathInit {
    pub lambda_inf: f64,
    pub state: SolverState,
    /// `max_y -<psi_tilde, psi_i(y)>` per block.
    pub theta: Vec<f64>,
    pub oracle_calls: u64,
}

/// All mass on the loss-maximizing labeling of each block, at
/// `lambda_inf = (|psi_tilde|^2 + (1/n) sum theta_i) / (kappa epsilon)`.
/// The gap estimates are the closed-form upper bounds
/// `theta_i / (n lambda_inf) + lambda_inf w_i^T w`.
pub fn init_path<M: StructuredModel + ?Sized>(model: &M, epsilon: f64, kappa: f64) -> Result<PathInit> {
    let (n, d) = (model.num_examples(), model.feature_dim());
    for i in 0..n {
        Corner::ground_truth(model, i)?;
    }
    let zero = vec![0.0; d];
    let worst: Vec<Corner> = oracle_all(model, &zero)?.iter().map(Corner::from_oracle).collect();
    let mut psi_tilde = vec![0.0; d];
    for c in &worst {
        c.psi.axpy_into(1.0 / n as f64, &mut psi_tilde);
    }
    let theta = (0..n)
        .map(|i| model.oracle(i, &psi_tilde, OracleMode::ScoreOnly).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    let scale_num = norm_sq(&psi_tilde) + theta.iter().sum::<f64>() / n as f64;
    let lambda_inf = scale_num / (kappa * epsilon);
    if !(lambda_inf > 0.0) || !lambda_inf.is_finite() {
        return Err(Error::Degenerate("no loss-maximizing labeling moves the weights".into()));
    }

    let mut duals = DualBlockState { blocks: Vec::with_capacity(n) };
    let mut weights = WeightState::zeros(n, d);
    for (i, c) in worst.iter().enumerate() {
        let mut block = crate::state::BlockCorners::default();
        block.ensure(c, 0).alpha = 1.0;
        duals.blocks.push(block);
        weights.per_block_w[i] = c.corner_w(lambda_inf, n, d);
        weights.per_block_ell[i] = c.corner_ell(n);
    }
    weights.resync();
    let bounds: Vec<f64> = (0..n)
        .map(|i| theta[i] / (n as f64 * lambda_inf) + lambda_inf * dot(&weights.per_block_w[i], &weights.w))
        .collect();
    let mut gaps = GapEstimates::fresh(n);
    gaps.set_all(&bounds, 0);
    Ok(PathInit {
        lambda_inf,
        state: SolverState { primal: PrimalState::Plain(weights), duals: Some(duals), gaps },
        theta,
        oracle_calls: 2 * n as u64,
    })
}

/// `delta_i = ell_i - lambda <w_i, w>`: the average hinge over the block's
/// active corners, divided by `n`.
pub fn block_deltas(weights: &WeightState, lambda: f64) -> Vec<f64> {
    weights.per_block_w.iter().zip(&weights.per_block_ell).map(|(w_i, &e)| e - lambda * dot(w_i, &weights.w)).collect()
}

/// Block gaps after moving from `lambda` to `rho * lambda`.
pub fn gap_rescale(gaps: &[f64], deltas: &[f64], rho: f64) -> Vec<f64> {
    gaps.iter().zip(deltas).map(|(g, dl)| g + (1.0 - rho) * dl).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NextBreakpoint {
    Rho(f64),
    /// The current weights are epsilon-approximate for every smaller lambda.
    EndOfPath,
}

/// `tau = epsilon - gap_sum`; end of path if `delta <= tau`, otherwise
/// `rho = 1 - tau / delta`.
pub fn next_breakpoint(gap_sum: f64, delta: f64, epsilon: f64) -> Result<NextBreakpoint> {
    let tau = epsilon - gap_sum;
    if !(tau > 0.0) {
        return Err(Error::SolverTolerance { gap_sum, epsilon });
    }
    if delta <= tau {
        return Ok(NextBreakpoint::EndOfPath);
    }
    Ok(NextBreakpoint::Rho(1.0 - tau / delta))
}

/// Scale every non-ground-truth coefficient by `rho` and give the remainder
/// to the ground truth.
pub fn rescale_duals<M: StructuredModel + ?Sized>(model: &M, duals: &mut DualBlockState, rho: f64) -> Result<()> {
    for i in 0..duals.num_blocks() {
        let gt = Corner::ground_truth(model, i)?;
        let block = &mut duals.blocks[i];
        block.scale_alphas(rho);
        block.ensure(&gt, 0).alpha += 1.0 - rho;
    }
    Ok(())
}

/// Move a converged state from `lambda` to `rho * lambda` without changing
/// `w`. Stored gap estimates are shifted by `(1 - rho) delta_i`.
/// Returns the `delta_i`.
pub fn rescale_state<M: StructuredModel + ?Sized>(
    model: &M,
    state: &mut SolverState,
    lambda: f64,
    rho: f64,
) -> Result<Vec<f64>> {
    let PrimalState::Plain(weights) = &mut state.primal else {
        return Err(Error::Config("regularization paths do not support box constraints".into()));
    };
    let duals = state.duals.as_mut().ok_or_else(|| Error::Config("rescaling needs dual coefficients".into()))?;
    let deltas = block_deltas(weights, lambda);
    rescale_duals(model, duals, rho)?;
    state.primal.scale_losses(rho);
    if state.gaps.all_finite() {
        let shifted = gap_rescale(&state.gaps.g, &deltas, rho);
        state.gaps.set_all(&shifted, 0);
    } else {
        state.gaps = GapEstimates::fresh(deltas.len());
    }
    Ok(deltas)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathBreakpoint {
    pub lambda: f64,
    pub w: Vec<f64>,
    /// `b^T alpha` of the stored dual point.
    pub ell: f64,
    /// Certified gap (exact mode) or estimate sum (heuristic mode).
    pub gap: f64,
    /// Cumulative effective passes (oracle calls / n).
    pub passes: f64,
    pub oracle_calls: u64,
    pub seconds: f64,
    /// Ratio to the previous breakpoint.
    pub rho: Option<f64>,
    /// The inner solve stopped with a gap above `kappa epsilon` (but not
    /// above `epsilon`).
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PathStatus {
    EndOfPath,
    LambdaMin,
    BreakpointLimit,
    /// The inner solve at `lambda` ended with a gap above `epsilon`.
    Aborted {
        lambda: f64,
        gap: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegPath {
    pub epsilon: f64,
    pub kappa: f64,
    pub mode: PathMode,
    pub lambda_inf: f64,
    pub breakpoints: Vec<PathBreakpoint>,
    /// Smallest lambda the last breakpoint covers; zero at end of path.
    pub covered_to: f64,
    pub status: PathStatus,
}

impl RegPath {
    /// Index of the piece that serves `lambda`: the last breakpoint with
    /// `lambda_j >= lambda`, or `None` above the first breakpoint.
    pub fn piece(&self, lambda: f64) -> Result<Option<usize>> {
        if !(lambda > 0.0) || lambda < self.covered_to {
            return Err(Error::OutOfRange(lambda));
        }
        Ok(self.breakpoints.iter().rposition(|b| b.lambda >= lambda))
    }
}

/// Weights the path assigns to `lambda`.
pub fn eval_path_at(path: &RegPath, lambda: f64) -> Result<Vec<f64>> {
    match path.piece(lambda)? {
        Some(j) => Ok(path.breakpoints[j].w.clone()),
        None => {
            let first = path.breakpoints.first().ok_or(Error::OutOfRange(lambda))?;
            let mut w = first.w.clone();
            scale(first.lambda / lambda, &mut w);
            Ok(w)
        }
    }
}

/// Duality gap of the path's point at `lambda`, certified with one oracle
/// pass. On the first piece the dual point stays fixed; on later pieces it
/// is the breakpoint's dual point rescaled to `lambda`.
pub fn certificate_at<M: StructuredModel + ?Sized>(model: &M, path: &RegPath, lambda: f64) -> Result<f64> {
    let w = eval_path_at(path, lambda)?;
    let ell = match path.piece(lambda)? {
        Some(j) => path.breakpoints[j].ell * lambda / path.breakpoints[j].lambda,
        None => path.breakpoints[0].ell,
    };
    certified_gap(model, lambda, &w, ell)
}

/// State right after a dual rescale, before the inner solve.
#[derive(Debug)]
pub struct RescaleEvent<'a> {
    pub lambda_old: f64,
    pub lambda_new: f64,
    pub rho: f64,
    pub w_before: &'a [f64],
    /// Rescaled state; its gap estimates are the predicted gaps at
    /// `lambda_new`.
    pub state: &'a SolverState,
}

pub fn run_path<M: StructuredModel + ?Sized>(model: &M, config: &RegPathConfig) -> Result<RegPath> {
    run_path_observed(model, config, |_| {})
}

/// [`run_path`], calling `observe` after every dual rescale.
pub fn run_path_observed<M, F>(model: &M, config: &RegPathConfig, mut observe: F) -> Result<RegPath>
where
    M: StructuredModel + ?Sized,
    F: FnMut(&RescaleEvent<'_>),
{
    config.validate()?;
    let clock = Instant::now();
    let n = model.num_examples();
    let init = init_path(model, config.epsilon, config.kappa)?;
    let mut lambda = init.lambda_inf;
    let mut state = init.state;
    let mut oracle_calls = init.oracle_calls;
    if config.mode == PathMode::Exact {
        let PrimalState::Plain(weights) = &mut state.primal else { unreachable!() };
        full_gap_pass(model, lambda, weights, &mut state.gaps, 0)?;
        oracle_calls += n as u64;
    }

    let mut path = RegPath {
        epsilon: config.epsilon,
        kappa: config.kappa,
        mode: config.mode,
        lambda_inf: lambda,
        breakpoints: Vec::new(),
        covered_to: 0.0,
        status: PathStatus::EndOfPath,
    };
    let mut rho_prev = None;
    let mut flagged = false;
    loop {
        let acc = state.primal.accumulators();
        path.breakpoints.push(PathBreakpoint {
            lambda,
            w: acc.w.clone(),
            ell: acc.ell,
            gap: state.gaps.sum(),
            passes: oracle_calls as f64 / n as f64,
            oracle_calls,
            seconds: clock.elapsed().as_secs_f64(),
            rho: rho_prev,
            flagged,
        });
        let delta: f64 = block_deltas(acc, lambda).iter().sum();
        let rho = match next_breakpoint(state.gaps.sum(), delta, config.epsilon)? {
            NextBreakpoint::EndOfPath => {
                path.status = PathStatus::EndOfPath;
                path.covered_to = 0.0;
                return Ok(path);
            }
            NextBreakpoint::Rho(rho) => rho,
        };
        let next = rho * lambda;
        path.covered_to = next;
        if next < config.lambda_min {
            path.status = PathStatus::LambdaMin;
            return Ok(path);
        }
        if path.breakpoints.len() >= config.max_breakpoints {
            path.status = PathStatus::BreakpointLimit;
            return Ok(path);
        }
        let w_before = state.primal.accumulators().w.clone();
        rescale_state(model, &mut state, lambda, rho)?;
        observe(&RescaleEvent { lambda_old: lambda, lambda_new: next, rho, w_before: &w_before, state: &state });
        lambda = next;
        let mut solver = Solver::from_state(model, config.inner_config(lambda, path.breakpoints.len()), state)?;
        let outcome: SolveOutcome = solver.run()?;
        oracle_calls += outcome.counters.oracle_calls;
        state = solver.into_state();
        flagged = outcome.reason == StopReason::MaxPasses;
        if flagged && !(outcome.final_gap <= config.epsilon) {
            path.status = PathStatus::Aborted { lambda, gap: outcome.final_gap };
            return Ok(path);
        }
        rho_prev = Some(rho);
    }
}

/// One point of a grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub w: Vec<f64>,
    pub gap: f64,
    pub converged: bool,
    /// Cumulative effective passes.
    pub passes: f64,
    pub seconds: f64,
}

/// `2^15, 2^14, ..., 2^-15`
pub fn default_grid() -> Vec<f64> {
    (-15..=15).rev().map(|e| 2f64.powi(e)).collect()
}

/// Solve independently at each lambda of a decreasing grid to the inner
/// tolerance. With `warm`, each solve starts from the previous solution
/// with its duals rescaled to the new lambda.
pub fn grid_search<M: StructuredModel + ?Sized>(
    model: &M,
    inner: &SolverConfig,
    grid: &[f64],
    warm: bool,
) -> Result<Vec<GridPoint>> {
    if grid.windows(2).any(|p| !(p[1] < p[0])) {
        return Err(Error::Config("grid must be strictly decreasing".into()));
    }
    let clock = Instant::now();
    let n = model.num_examples();
    let mut oracle_calls = 0u64;
    let mut prev: Option<(f64, SolverState)> = None;
    let mut out = Vec::with_capacity(grid.len());
    for (j, &lambda) in grid.iter().enumerate() {
        let cfg = SolverConfig { lambda, track_duals: true, seed: inner.seed.wrapping_add(j as u64), ..inner.clone() };
        let mut solver = match prev.take() {
            Some((old, mut state)) if warm => {
                rescale_state(model, &mut state, old, lambda / old)?;
                Solver::from_state(model, cfg, state)?
            }
            _ => Solver::new(model, cfg)?,
        };
        let outcome = solver.run()?;
        oracle_calls += outcome.counters.oracle_calls;
        let state = solver.into_state();
        out.push(GridPoint {
            lambda,
            w: state.primal.point().to_vec(),
            gap: outcome.final_gap,
            converged: outcome.converged,
            passes: oracle_calls as f64 / n as f64,
            seconds: clock.elapsed().as_secs_f64(),
        });
        prev = Some((lambda, state));
    }
    Ok(out)
}
