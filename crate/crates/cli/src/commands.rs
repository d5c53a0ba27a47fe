use crate::dataset::Dataset;
use crate::files::{
    format_weights, read_bounds, read_weights, to_json, GridManifest, GridPointEntry, GridRun, ManifestBreakpoint,
    PathManifest,
};
use anyhow::{anyhow, Context};
use bcfw::boxfw::BoxBounds;
use bcfw::models::{gen_synthetic_chain, ChainGenConfig, StructuredModel, ToyModel};
use bcfw::regpath::{
    certificate_at, default_grid, grid_search, run_path, PathBreakpoint, PathMode, PathStatus, RegPath, RegPathConfig,
};
use bcfw::solvers::{Sampling, SolveOutcome, Solver, SolverConfig, StepKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Exit codes: 2 for bad flags, 3 for unreadable data, 4 for runs that did
/// not converge (with `--strict`) or failed audits, 1 for anything else.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

pub type CmdResult = Result<(), Failure>;

fn fail(code: i32) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, error: anyhow!(msg.into()) }
}

#[derive(Parser, Debug)]
#[command(name = "bcfw", version, about = "Block-coordinate Frank-Wolfe training for structured SVMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic chain dataset.
    Gen(GenArgs),
    /// Write the two-type toy construction.
    Toy(ToyArgs),
    /// Train one solver configuration.
    Train(TrainArgs),
    /// Compute a regularization path, or run a lambda grid with --grid.
    Regpath(RegpathArgs),
    /// Recompute the gaps certified by a saved path.
    Audit(AuditArgs),
    /// Run several methods and seeds on one dataset.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    Uniform,
    Gap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StepsArg {
    Fw,
    Pairwise,
    Away,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TimeColumn {
    Wall,
    /// Write zeros so reruns are byte-identical.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WarmArg {
    On,
    Off,
    Both,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 6)]
    pub t_min: usize,
    #[arg(long, default_value_t = 10)]
    pub t_max: usize,
    #[arg(long, default_value_t = 16)]
    pub d_u: usize,
    #[arg(long, default_value_t = 5)]
    pub labels: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long = "K")]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub sampling: SamplingArg,
    #[arg(long, value_enum, default_value = "fw")]
    pub steps: StepsArg,
    #[arg(long)]
    pub cache: bool,
    #[arg(long = "cache-F", default_value_t = 0.25)]
    pub cache_f: f64,
    #[arg(long = "cache-nu", default_value_t = 0.01)]
    pub cache_nu: f64,
    /// Per-block cache size limit.
    #[arg(long)]
    pub cache_size: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub gap_check_every: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_passes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    fn config(&self, lambda: f64) -> SolverConfig {
        SolverConfig {
            lambda,
            sampling: match self.sampling {
                SamplingArg::Uniform => Sampling::Uniform,
                SamplingArg::Gap => Sampling::Gap,
            },
            step_kind: match self.steps {
                StepsArg::Fw => StepKind::Fw,
                StepsArg::Pairwise => StepKind::Pairwise,
                StepsArg::Away => StepKind::Away,
            },
            cache_enabled: self.cache,
            cache_f: self.cache_f,
            cache_nu: self.cache_nu,
            cache_max_size: self.cache_size,
            gap_check_every: self.gap_check_every,
            tol: self.tol,
            max_passes: self.max_passes,
            seed: self.seed,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Required unless the dataset records one.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
    #[arg(long)]
    pub out_weights: Option<PathBuf>,
    /// Lower bounds on w, one per line.
    #[arg(long)]
    pub lower: Option<PathBuf>,
    /// Upper bounds on w, one per line.
    #[arg(long)]
    pub upper: Option<PathBuf>,
    /// Exit with code 4 when the tolerance is not reached.
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum, default_value = "wall")]
    pub time_column: TimeColumn,
}

#[derive(Args, Debug)]
pub struct RegpathArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Defaults to 0.9 in exact mode and 0.7 in heuristic mode.
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 2f64.powi(-15))]
    pub lambda_min: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_breakpoints: usize,
    /// Solve on the grid 2^15, 2^14, ..., 2^-15 instead of following a path.
    #[arg(long)]
    pub grid: bool,
    /// Warm starts for --grid.
    #[arg(long, value_enum, default_value = "both")]
    pub warm: WarmArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub strict: bool,
    #[arg(long, value_enum, default_value = "wall")]
    pub time_column: TimeColumn,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Extra log-spaced lambdas checked inside the covered range.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated method names such as `fw-uniform,pairwise-gap-cache`;
    /// all twelve combinations by default.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "wall")]
    pub time_column: TimeColumn,
}

pub fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Toy(a) => cmd_toy(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Regpath(a) => cmd_regpath(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn write(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(fail(1))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(fail(1))
}

fn load(path: &Path) -> Result<Dataset, Failure> {
    Dataset::load(path).map_err(fail(3))
}

fn resolve_lambda(data: &Dataset, flag: Option<f64>) -> Result<f64, Failure> {
    flag.or(data.default_lambda()).ok_or_else(|| usage("--lambda is required for this dataset"))
}

fn seconds(t: f64, col: TimeColumn) -> f64 {
    match col {
        TimeColumn::Wall => t,
        TimeColumn::Zero => 0.0,
    }
}

pub fn cmd_gen(a: &GenArgs) -> CmdResult {
    let cfg = ChainGenConfig {
        n: a.n,
        t_min: a.t_min,
        t_max: a.t_max,
        d_u: a.d_u,
        num_labels: a.labels,
        noise: a.noise,
        seed: a.seed,
    };
    if !(0.0..=1.0).contains(&a.noise) {
        return Err(usage("--noise must lie in [0, 1]"));
    }
    let m = gen_synthetic_chain(&cfg).map_err(|e| usage(e.to_string()))?;
    write(&a.out, &Dataset::Chain(m).to_jsonl())
}

pub fn cmd_toy(a: &ToyArgs) -> CmdResult {
    let m = ToyModel::new(a.n, a.k).map_err(|e| usage(e.to_string()))?;
    write(&a.out, &Dataset::Toy(m).to_jsonl())
}

fn summary_line(out: &SolveOutcome, n: usize, iterations: u64) -> String {
    format!(
        "converged={} reason={:?} passes={} oracle_calls={} cache_hits={} gap={:e}",
        out.converged,
        out.reason,
        iterations as f64 / n as f64,
        out.counters.oracle_calls,
        out.counters.cache_hits,
        out.final_gap
    )
}

pub fn cmd_train(a: &TrainArgs) -> CmdResult {
    let data = load(&a.data)?;
    let model = data.model();
    let lambda = resolve_lambda(&data, a.lambda)?;
    let cfg = a.solver.config(lambda);
    let method = cfg.method_name();
    let bounds = match (&a.lower, &a.upper) {
        (None, None) => None,
        (lo, hi) => {
            let d = model.feature_dim();
            let read = |p: &Option<PathBuf>, fill: f64| -> Result<Vec<f64>, Failure> {
                match p {
                    Some(p) => read_bounds(p).map_err(fail(3)),
                    None => Ok(vec![fill; d]),
                }
            };
            let (lo, hi) = (read(lo, f64::NEG_INFINITY)?, read(hi, f64::INFINITY)?);
            if lo.len() != d || hi.len() != d {
                return Err(usage(format!("bounds must have {d} entries")));
            }
            Some(BoxBounds::new(lo, hi).map_err(|e| usage(e.to_string()))?)
        }
    };
    let mut solver = match bounds {
        Some(b) => Solver::with_bounds(model, cfg, b),
        None => Solver::new(model, cfg),
    }
    .map_err(|e| usage(e.to_string()))?;
    let out = solver.run().map_err(|e| fail(1)(e.into()))?;
    let iterations = solver.counters().iterations;
    if let Some(p) = &a.out_trace {
        write(p, &solver.trace().to_csv(a.time_column == TimeColumn::Wall))?;
    }
    if let Some(p) = &a.out_weights {
        write(p, &format_weights(solver.state().primal.point(), lambda, &method))?;
    }
    println!("{method} {}", summary_line(&out, model.num_examples(), iterations));
    if a.strict && !out.converged {
        return Err(Failure {
            code: 4,
            error: anyhow!("did not reach tol {} (gap {:e})", a.solver.tol, out.final_gap),
        });
    }
    Ok(())
}

fn status_name(s: &PathStatus) -> &'static str {
    match s {
        PathStatus::EndOfPath => "end_of_path",
        PathStatus::LambdaMin => "lambda_min",
        PathStatus::BreakpointLimit => "breakpoint_limit",
        PathStatus::Aborted { .. } => "aborted",
    }
}

pub fn cmd_regpath(a: &RegpathArgs) -> CmdResult {
    let data = load(&a.data)?;
    let model = data.model();
    if a.grid {
        return grid_command(a, model);
    }
    let base = match a.mode {
        ModeArg::Exact => RegPathConfig::exact(),
        ModeArg::Heuristic => RegPathConfig::heuristic(),
    };
    let cfg = RegPathConfig {
        epsilon: a.epsilon,
        kappa: a.kappa.unwrap_or(base.kappa),
        lambda_min: a.lambda_min,
        max_breakpoints: a.max_breakpoints,
        inner: a.solver.config(1.0),
        ..base
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    cfg.inner.validate(model.num_examples()).map_err(|e| usage(e.to_string()))?;
    let path = run_path(model, &cfg).map_err(|e| fail(1)(e.into()))?;
    let method = format!("path-{}", if cfg.mode == PathMode::Exact { "exact" } else { "heuristic" });
    let mut entries = Vec::with_capacity(path.breakpoints.len());
    for (j, b) in path.breakpoints.iter().enumerate() {
        let name = format!("weights_{j:04}.txt");
        write(&a.out_dir.join(&name), &format_weights(&b.w, b.lambda, &method))?;
        entries.push(ManifestBreakpoint {
            lambda: b.lambda,
            gap: b.gap,
            ell: b.ell,
            passes: b.passes,
            oracle_calls: b.oracle_calls,
            seconds: seconds(b.seconds, a.time_column),
            rho: b.rho,
            flagged: b.flagged,
            weights: name,
        });
    }
    let manifest = PathManifest {
        format_version: 1,
        mode: match cfg.mode {
            PathMode::Exact => "exact".into(),
            PathMode::Heuristic => "heuristic".into(),
        },
        epsilon: path.epsilon,
        kappa: path.kappa,
        lambda_inf: path.lambda_inf,
        covered_to: path.covered_to,
        status: status_name(&path.status).into(),
        breakpoints: entries,
    };
    write(&a.out_dir.join("manifest.json"), &to_json(&manifest))?;
    let last = path.breakpoints.last().expect("a path has at least one breakpoint");
    println!(
        "breakpoints={} lambda_inf={:e} covered_to={:e} status={} passes={}",
        path.breakpoints.len(),
        path.lambda_inf,
        path.covered_to,
        status_name(&path.status),
        last.passes
    );
    if a.strict && matches!(path.status, PathStatus::Aborted { .. }) {
        return Err(Failure { code: 4, error: anyhow!("inner solver failed at lambda {:e}", path.covered_to) });
    }
    Ok(())
}

fn grid_command(a: &RegpathArgs, model: &dyn StructuredModel) -> CmdResult {
    let inner = a.solver.config(1.0);
    inner.validate(model.num_examples()).map_err(|e| usage(e.to_string()))?;
    let grid = default_grid();
    let modes: &[bool] = match a.warm {
        WarmArg::On => &[true],
        WarmArg::Off => &[false],
        WarmArg::Both => &[false, true],
    };
    let mut runs = Vec::new();
    let mut not_converged = 0;
    for &warm in modes {
        let tag = if warm { "warm" } else { "cold" };
        let points = grid_search(model, &inner, &grid, warm).map_err(|e| fail(1)(e.into()))?;
        let mut entries = Vec::with_capacity(points.len());
        for (j, p) in points.iter().enumerate() {
            let name = format!("grid_{tag}_{j:02}.txt");
            write(&a.out_dir.join(&name), &format_weights(&p.w, p.lambda, &format!("grid-{tag}")))?;
            not_converged += usize::from(!p.converged);
            entries.push(GridPointEntry {
                lambda: p.lambda,
                gap: p.gap,
                converged: p.converged,
                passes: p.passes,
                seconds: seconds(p.seconds, a.time_column),
                weights: name,
            });
        }
        let total = points.last().map_or(0.0, |p| p.passes);
        println!("grid {tag}: total_passes={total}");
        runs.push(GridRun { warm, total_passes: total, points: entries });
    }
    write(&a.out_dir.join("grid.json"), &to_json(&GridManifest { format_version: 1, tol: inner.tol, runs }))?;
    if a.strict && not_converged > 0 {
        return Err(Failure { code: 4, error: anyhow!("{not_converged} grid points did not converge") });
    }
    Ok(())
}

/// Rebuild a path from a manifest and its weight files.
pub fn load_path(manifest_path: &Path) -> anyhow::Result<RegPath> {
    let text =
        std::fs::read_to_string(manifest_path).with_context(|| format!("reading {}", manifest_path.display()))?;
    let m: PathManifest = serde_json::from_str(&text).context("bad path manifest")?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let breakpoints = m
        .breakpoints
        .iter()
        .map(|b| {
            Ok(PathBreakpoint {
                lambda: b.lambda,
                w: read_weights(&dir.join(&b.weights))?.w,
                ell: b.ell,
                gap: b.gap,
                passes: b.passes,
                oracle_calls: b.oracle_calls,
                seconds: b.seconds,
                rho: b.rho,
                flagged: b.flagged,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let status = match m.status.as_str() {
        "end_of_path" => PathStatus::EndOfPath,
        "lambda_min" => PathStatus::LambdaMin,
        "breakpoint_limit" => PathStatus::BreakpointLimit,
        "aborted" => PathStatus::Aborted { lambda: m.covered_to, gap: f64::NAN },
        other => anyhow::bail!("unknown path status {other:?}"),
    };
    Ok(RegPath {
        epsilon: m.epsilon,
        kappa: m.kappa,
        mode: if m.mode == "heuristic" { PathMode::Heuristic } else { PathMode::Exact },
        lambda_inf: m.lambda_inf,
        breakpoints,
        covered_to: m.covered_to,
        status,
    })
}

/// `points` log-spaced lambdas strictly inside `[lo, hi]`.
pub fn audit_lambdas(path: &RegPath, points: usize) -> Vec<f64> {
    let Some(first) = path.breakpoints.first() else { return Vec::new() };
    let hi = first.lambda;
    let lo = if path.covered_to > 0.0 { path.covered_to } else { path.breakpoints.last().unwrap().lambda / 10.0 };
    (0..points).map(|k| hi * (lo / hi).powf((k as f64 + 0.5) / points as f64)).collect()
}

/// Rounding slack on certified gaps, which sit at exactly `epsilon` at the
/// lower end of each piece.
pub const AUDIT_SLACK: f64 = 1e-12;

pub fn cmd_audit(a: &AuditArgs) -> CmdResult {
    let data = load(&a.data)?;
    let model = data.model();
    let path = load_path(&a.manifest).map_err(fail(3))?;
    let mut lambdas: Vec<f64> = path.breakpoints.iter().map(|b| b.lambda).collect();
    lambdas.extend(audit_lambdas(&path, a.points));
    let gaps = lambdas
        .par_iter()
        .map(|&l| certificate_at(model, &path, l))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail(1)(e.into()))?;
    let mut failed = 0;
    let mut report = String::new();
    for (l, g) in lambdas.iter().zip(&gaps) {
        let ok = *g <= path.epsilon + AUDIT_SLACK;
        failed += usize::from(!ok);
        let _ = writeln!(report, "lambda={l:e} gap={g:e} {}", if ok { "ok" } else { "FAIL" });
    }
    print!("{report}");
    println!("audit: {}/{} within epsilon={}", lambdas.len() - failed, lambdas.len(), path.epsilon);
    if failed > 0 {
        return Err(Failure { code: 4, error: anyhow!("{failed} audited lambdas exceed epsilon") });
    }
    Ok(())
}

/// Parse `fw-uniform`, `pairwise-gap-cache` and the like.
pub fn parse_method(name: &str) -> Option<(StepsArg, SamplingArg, bool)> {
    let mut parts = name.split('-');
    let steps = StepsArg::from_str(parts.next()?, false).ok()?;
    let sampling = SamplingArg::from_str(parts.next()?, false).ok()?;
    let cache = match parts.next() {
        None => false,
        Some("cache") => true,
        Some(_) => return None,
    };
    parts.next().is_none().then_some((steps, sampling, cache))
}

pub fn all_methods() -> Vec<String> {
    let mut out = Vec::new();
    for s in ["fw", "pairwise", "away"] {
        for p in ["uniform", "gap"] {
            out.push(format!("{s}-{p}"));
            out.push(format!("{s}-{p}-cache"));
        }
    }
    out
}

pub fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let data = load(&a.data)?;
    let model = data.model();
    let lambda = resolve_lambda(&data, a.lambda)?;
    let names = match &a.methods {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).collect(),
        None => all_methods(),
    };
    let mut jobs = Vec::new();
    for name in &names {
        let (steps, sampling, cache) = parse_method(name).ok_or_else(|| usage(format!("unknown method {name:?}")))?;
        for s in 0..a.seeds {
            let args = SolverArgs { steps, sampling, cache, seed: a.solver.seed + s, ..a.solver.clone() };
            let cfg = args.config(lambda);
            cfg.validate(model.num_examples()).map_err(|e| usage(e.to_string()))?;
            jobs.push(cfg);
        }
    }
    if a.jobs == 0 {
        return Err(usage("--jobs must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build().map_err(|e| fail(1)(e.into()))?;
    let wall = a.time_column == TimeColumn::Wall;
    let results = pool.install(|| {
        jobs.par_iter()
            .map(|cfg| {
                let mut solver = Solver::new(model, cfg.clone())?;
                let out = solver.run()?;
                Ok((cfg.method_name(), cfg.seed, out, solver.trace().to_csv(wall)))
            })
            .collect::<bcfw::Result<Vec<_>>>()
    });
    let results = results.map_err(|e| usage(e.to_string()))?;
    let mut summary = String::from("method,seed,converged,oracle_calls,cache_hits,final_gap\n");
    for (method, seed, out, csv) in &results {
        write(&a.out_dir.join(format!("{method}_seed{seed}.csv")), csv)?;
        let _ = writeln!(
            summary,
            "{method},{seed},{},{},{},{:?}",
            out.converged, out.counters.oracle_calls, out.counters.cache_hits, out.final_gap
        );
    }
    write(&a.out_dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}
