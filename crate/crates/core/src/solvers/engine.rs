use super::cache::{cache_lookup, cache_threshold, CacheDecision};
use super::sampler::BlockSampler;
use super::steps::{
    away_corner, away_duals, away_gap, away_update, fw_duals, fw_update, pairwise_duals, pairwise_update, BlockUpdate,
    SKIP_GAP,
};
use super::{Sampling, SolverConfig, StaleCheck, StepKind};
use crate::boxfw::{BoxBounds, BoxWeightState};
use crate::diagnostics::{curvature_from_radius, ConvergenceTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::models::{Labeling, StructuredModel};
use crate::objective::{block_gap, evaluate_gaps};
use crate::state::{Corner, DualBlockState, GapEstimates, WeightState};
use std::time::Instant;

/// Primal accumulators, optionally with a box on the weights.
#[derive(Clone, Debug, PartialEq)]
pub enum PrimalState {
    Plain(WeightState),
    Boxed(BoxWeightState),
}

impl PrimalState {
    /// `w`, `w_i`, `ell`, `ell_i`; in box mode the untruncated `v` parts.
    pub fn accumulators(&self) -> &WeightState {
        match self {
            PrimalState::Plain(ws) => ws,
            PrimalState::Boxed(b) => &b.v,
        }
    }

    /// The point the oracles are called at.
    pub fn point(&self) -> &[f64] {
        match self {
            PrimalState::Plain(ws) => &ws.w,
            PrimalState::Boxed(b) => &b.w,
        }
    }

    pub fn set_block(&mut self, i: usize, w_i: Vec<f64>, ell_i: f64) {
        match self {
            PrimalState::Plain(ws) => ws.set_block(i, w_i, ell_i),
            PrimalState::Boxed(b) => {
                b.v.set_block(i, w_i, ell_i);
                b.retruncate();
            }
        }
    }

    /// Scale every `ell_i` (and `ell`) by `factor`.
    pub fn scale_losses(&mut self, factor: f64) {
        let acc = match self {
            PrimalState::Plain(ws) => ws,
            PrimalState::Boxed(b) => &mut b.v,
        };
        for e in acc.per_block_ell.iter_mut() {
            *e *= factor;
        }
        acc.ell = acc.per_block_ell.iter().sum();
    }

    pub fn resync(&mut self) {
        match self {
            PrimalState::Plain(ws) => ws.resync(),
            PrimalState::Boxed(b) => {
                b.v.resync();
                b.retruncate();
            }
        }
    }

    /// Minimized dual objective at the current dual point.
    pub fn dual_objective(&self, lambda: f64) -> f64 {
        match self {
            PrimalState::Plain(ws) => ws.dual_objective(lambda),
            PrimalState::Boxed(b) => b.dual_objective(lambda),
        }
    }
}

/// Lagrange dual value (the negated minimized dual objective); the primal
/// objective minus this value is the duality gap.
pub fn lagrange_dual(primal: &PrimalState, lambda: f64) -> f64 {
    -primal.dual_objective(lambda)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub primal: PrimalState,
    pub duals: Option<DualBlockState>,
    pub gaps: GapEstimates,
}

impl SolverState {
    /// Zero weights, all dual mass on the ground truth, fresh estimates.
    pub fn initial<M: StructuredModel + ?Sized>(
        model: &M,
        with_duals: bool,
        bounds: Option<BoxBounds>,
    ) -> Result<Self> {
        let (n, d) = (model.num_examples(), model.feature_dim());
        let ws = WeightState::zeros(n, d);
        let primal = match bounds {
            None => PrimalState::Plain(ws),
            Some(b) => PrimalState::Boxed(BoxWeightState::new(ws, b)?),
        };
        let duals = if with_duals { Some(DualBlockState::at_ground_truth(model)?) } else { None };
        Ok(SolverState { primal, duals, gaps: GapEstimates::fresh(n) })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverCounters {
    pub iterations: u64,
    /// Max-oracle calls, including those of full gap passes.
    pub oracle_calls: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub gap_passes: u64,
    pub drop_steps: u64,
    /// Away steps refused because the away corner held all the mass.
    pub away_full_mass: u64,
    /// Cache hits whose gap fell below `(nu / n) g_global`; always zero.
    pub hit_safety_violations: u64,
}

impl SolverCounters {
    /// Oracle calls divided by `n`.
    pub fn effective_passes(&self, n: usize) -> f64 {
        self.oracle_calls as f64 / n as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepAction {
    Fw,
    Pairwise,
    Away,
    Skipped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub block: usize,
    pub action: StepAction,
    pub gamma: f64,
    pub gamma_max: f64,
    /// Frank-Wolfe gap of the corner the step was based on.
    pub gap: f64,
    pub corner: Labeling,
    /// Away corner considered by pairwise and away steps.
    pub away: Option<Labeling>,
    pub oracle_called: bool,
    pub cache_hit: bool,
    /// `(nu / n) g_global` at the time of a cache hit.
    pub hit_global_term: Option<f64>,
    pub dropped: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// A full gap pass certified the tolerance.
    Tolerance,
    /// The stale estimates summed below the tolerance (trusted).
    Estimate,
    MaxPasses,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOutcome {
    pub converged: bool,
    pub reason: StopReason,
    /// Last certified gap, or the estimate sum when stopping on estimates.
    pub final_gap: f64,
    pub counters: SolverCounters,
}

pub struct Solver<'m, M: StructuredModel + ?Sized> {
    model: &'m M,
    config: SolverConfig,
    state: SolverState,
    sampler: BlockSampler,
    n: usize,
    counters: SolverCounters,
    radius: Vec<f64>,
    trace: ConvergenceTrace,
    clock: Instant,
    last_check: Option<u64>,
    last_gap: f64,
}

impl<'m, M: StructuredModel + ?Sized> Solver<'m, M> {
    pub fn new(model: &'m M, config: SolverConfig) -> Result<Self> {
        let state = SolverState::initial(model, config.needs_duals(), None)?;
        Self::from_state(model, config, state)
    }

    pub fn with_bounds(model: &'m M, config: SolverConfig, bounds: BoxBounds) -> Result<Self> {
        let state = SolverState::initial(model, config.needs_duals(), Some(bounds))?;
        Self::from_state(model, config, state)
    }

    /// Continue from an existing state, e.g. a warm start.
    pub fn from_state(model: &'m M, config: SolverConfig, state: SolverState) -> Result<Self> {
        let n = model.num_examples();
        config.validate(n)?;
        model.check_lambda(config.lambda)?;
        let acc = state.primal.accumulators();
        if acc.num_blocks() != n || state.gaps.g.len() != n {
            return Err(Error::Config("state does not match the number of examples".into()));
        }
        if acc.dim() != model.feature_dim() {
            return Err(Error::DimensionMismatch { expected: model.feature_dim(), got: acc.dim() });
        }
        if config.needs_duals() && state.duals.is_none() {
            return Err(Error::Config("this method needs dual coefficients in the state".into()));
        }
        let mut radius = vec![0.0; n];
        if let Some(duals) = &state.duals {
            for (i, b) in duals.blocks.iter().enumerate() {
                radius[i] = b.entries().map(|e| e.corner.psi.norm_sq().sqrt()).fold(0.0, f64::max);
            }
        }
        Ok(Solver {
            model,
            sampler: BlockSampler::new(config.sampling, config.seed),
            trace: ConvergenceTrace::new(config.method_name(), config.seed),
            config,
            state,
            n,
            counters: SolverCounters::default(),
            radius,
            clock: Instant::now(),
            last_check: None,
            last_gap: f64::INFINITY,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn into_state(self) -> SolverState {
        self.state
    }

    pub fn trace(&self) -> &ConvergenceTrace {
        &self.trace
    }

    pub fn into_parts(self) -> (SolverState, ConvergenceTrace, SolverCounters) {
        (self.state, self.trace, self.counters)
    }

    pub fn counters(&self) -> SolverCounters {
        self.counters
    }

    /// Largest `|psi_i(y)|` seen so far on block `i`.
    pub fn observed_radius(&self, i: usize) -> f64 {
        self.radius[i]
    }

    /// `4 R_i^2 / (lambda n^2)` from the observed radius.
    pub fn curvature_bound(&self, i: usize) -> f64 {
        curvature_from_radius(self.radius[i], self.config.lambda, self.n)
    }

    /// One block step on a sampled block. Returns what was done.
    pub fn step(&mut self) -> Result<StepReport> {
        if self.config.sampling == Sampling::ExactGap {
            let k = self.counters.iterations;
            let acc = self.state.primal.accumulators();
            let pass = evaluate_gaps(self.model, self.config.lambda, self.state.primal.point(), acc)?;
            self.counters.oracle_calls += self.n as u64;
            self.state.gaps.set_all(&pass.per_block, k);
        }
        let i = self.sampler.sample(&self.state.gaps);
        self.step_block(i)
    }

    /// One block step on block `i`, bypassing the sampler.
    pub fn step_block(&mut self, i: usize) -> Result<StepReport> {
        let (n, lambda) = (self.n, self.config.lambda);
        if i >= n {
            return Err(Error::ExampleOutOfRange(i));
        }
        let k = self.counters.iterations;
        let SolverState { primal, duals, gaps } = &mut self.state;
        let acc = primal.accumulators();
        let point = primal.point();
        let (w_i, ell_i) = (&acc.per_block_w[i], acc.per_block_ell[i]);
        let mut report = StepReport {
            block: i,
            action: StepAction::Skipped,
            gamma: 0.0,
            gamma_max: 0.0,
            gap: 0.0,
            corner: Labeling(Vec::new()),
            away: None,
            oracle_called: false,
            cache_hit: false,
            hit_global_term: None,
            dropped: false,
        };

        let mut cached = None;
        if self.config.cache_enabled {
            let block = &duals.as_ref().expect("caching keeps duals").blocks[i];
            let threshold = cache_threshold(self.config.cache_f, self.config.cache_nu, n, gaps.g[i], gaps.global);
            match cache_lookup(block, lambda, n, point, w_i, ell_i, threshold) {
                CacheDecision::Hit { corner, gap, .. } => {
                    let global_term = self.config.cache_nu / n as f64 * gaps.global;
                    self.counters.cache_hits += 1;
                    if !(gap >= global_term) {
                        self.counters.hit_safety_violations += 1;
                    }
                    report.cache_hit = true;
                    report.hit_global_term = Some(global_term);
                    cached = Some((corner, gap));
                }
                CacheDecision::Miss => self.counters.cache_misses += 1,
            }
        }
        let (s, gap) = match cached {
            Some(hit) => {
                let d = duals.as_mut().expect("caching keeps duals");
                if let Some(e) = d.blocks[i].get_mut(&hit.0.key()) {
                    e.last_used = k;
                }
                hit
            }
            None => {
                let r = self.model.max_oracle(i, point)?;
                self.counters.oracle_calls += 1;
                report.oracle_called = true;
                let c = Corner::from_oracle(&r);
                let g = block_gap(lambda, n, point, w_i, ell_i, &c.psi, c.loss);
                gaps.set(i, g, k);
                self.radius[i] = self.radius[i].max(c.psi.norm_sq().sqrt());
                if self.config.cache_enabled {
                    let block = &mut duals.as_mut().expect("caching keeps duals").blocks[i];
                    block.ensure(&c, k).last_used = k;
                    if let Some(max) = self.config.cache_max_size {
                        block.evict_to(max);
                    }
                }
                (c, g)
            }
        };
        report.gap = gap;
        report.corner = s.labeling.clone();

        let update: Option<BlockUpdate> = match self.config.step_kind {
            StepKind::Fw => {
                let u = fw_update(lambda, n, w_i, ell_i, &s, gap);
                if let Some(d) = duals.as_mut() {
                    fw_duals(&mut d.blocks[i], &s, u.gamma, k);
                }
                report.action = StepAction::Fw;
                Some(u)
            }
            StepKind::Pairwise => {
                let d = duals.as_mut().expect("pairwise steps keep duals");
                let (a, alpha_a) = away_corner(&d.blocks[i], point).ok_or(Error::EmptyActiveSet(i))?;
                let a = a.clone();
                report.away = Some(a.labeling.clone());
                if a.key() == s.key() {
                    None
                } else {
                    let u = pairwise_update(lambda, n, point, w_i, ell_i, &s, &a, alpha_a);
                    pairwise_duals(&mut d.blocks[i], &s, &a.key(), &u, k);
                    report.action = StepAction::Pairwise;
                    report.dropped = u.at_bound();
                    Some(u)
                }
            }
            StepKind::Away => {
                let d = duals.as_mut().expect("away steps keep duals");
                let (a, alpha_a) = away_corner(&d.blocks[i], point).ok_or(Error::EmptyActiveSet(i))?;
                let a = a.clone();
                report.away = Some(a.labeling.clone());
                let gap_a = away_gap(lambda, n, point, w_i, ell_i, &a);
                if gap.max(gap_a) <= SKIP_GAP {
                    None
                } else if gap > gap_a {
                    let u = fw_update(lambda, n, w_i, ell_i, &s, gap);
                    fw_duals(&mut d.blocks[i], &s, u.gamma, k);
                    report.action = StepAction::Fw;
                    Some(u)
                } else if alpha_a >= 1.0 {
                    self.counters.away_full_mass += 1;
                    None
                } else {
                    let u = away_update(lambda, n, w_i, ell_i, &a, alpha_a, gap_a);
                    away_duals(&mut d.blocks[i], &a.key(), &u);
                    report.action = StepAction::Away;
                    report.gap = gap_a;
                    report.dropped = u.at_bound();
                    Some(u)
                }
            }
        };

        if !self.config.cache_enabled {
            if let Some(d) = duals.as_mut() {
                d.blocks[i].prune_inactive();
            }
        }
        if let Some(u) = update {
            report.gamma = u.gamma;
            report.gamma_max = u.gamma_max;
            if report.dropped {
                self.counters.drop_steps += 1;
            }
            primal.set_block(i, u.w_i, u.ell_i);
        }
        self.counters.iterations += 1;
        Ok(report)
    }

    /// Full gap pass: re-sync the sums, refresh every block gap, append a
    /// trace row. Returns the total gap.
    pub fn checkpoint(&mut self) -> Result<f64> {
        let k = self.counters.iterations;
        if self.last_check == Some(k) {
            return Ok(self.last_gap);
        }
        let lambda = self.config.lambda;
        self.state.primal.resync();
        let pass = evaluate_gaps(self.model, lambda, self.state.primal.point(), self.state.primal.accumulators())?;
        self.counters.oracle_calls += self.n as u64;
        self.counters.gap_passes += 1;
        self.state.gaps.set_all(&pass.per_block, k);
        for (i, r) in pass.corners.iter().enumerate() {
            self.radius[i] = self.radius[i].max(r.psi.norm_sq().sqrt());
        }
        self.trace.push(TraceRecord {
            pass: k as f64 / self.n as f64,
            oracle_calls: self.counters.oracle_calls,
            cache_hits: self.counters.cache_hits,
            gap: pass.total,
            primal: pass.primal,
            dual: Some(lagrange_dual(&self.state.primal, lambda)),
            time_s: self.clock.elapsed().as_secs_f64(),
        });
        self.last_check = Some(k);
        self.last_gap = pass.total;
        Ok(pass.total)
    }

    fn outcome(&self, reason: StopReason, final_gap: f64) -> SolveOutcome {
        SolveOutcome { converged: reason != StopReason::MaxPasses, reason, final_gap, counters: self.counters }
    }

    /// Iterate until the tolerance is certified (or trusted, see
    /// [`StaleCheck`]) or the pass budget runs out.
    pub fn run(&mut self) -> Result<SolveOutcome> {
        let n = self.n as u64;
        let interval = self.config.gap_check_every as u64 * n;
        let budget = self.counters.iterations + self.config.max_passes as u64 * n;
        let tol = self.config.tol;
        loop {
            let k = self.counters.iterations;
            if k > 0 && k.is_multiple_of(interval) && self.last_check != Some(k) && self.checkpoint()? <= tol {
                return Ok(self.outcome(StopReason::Tolerance, self.last_gap));
            }
            if k >= budget {
                let g = self.checkpoint()?;
                let reason = if g <= tol { StopReason::Tolerance } else { StopReason::MaxPasses };
                return Ok(self.outcome(reason, g));
            }
            self.step()?;
            let gaps = &self.state.gaps;
            if self.config.stale_check == StaleCheck::Off || !gaps.all_finite() {
                continue;
            }
            let estimate = gaps.sum();
            if estimate > tol {
                continue;
            }
            match self.config.stale_check {
                StaleCheck::Trust => return Ok(self.outcome(StopReason::Estimate, estimate)),
                StaleCheck::Verify => {
                    let since = self.counters.iterations - self.last_check.unwrap_or(0);
                    if (self.last_check.is_none() || since >= n) && self.checkpoint()? <= tol {
                        return Ok(self.outcome(StopReason::Tolerance, self.last_gap));
                    }
                }
                StaleCheck::Off => {}
            }
        }
    }
}
