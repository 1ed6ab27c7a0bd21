//! Command-line front end.
//!
//! Exit codes: 0 on success (including `--help` and `--version`), 2 for bad
//! arguments, unreadable inputs or invalid configuration, 1 when a run fails.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use pora_core::analysis::{
    calibrate_beta_labeled, default_beta_grid, DeltaPSummary, KlDirection, LabeledScenario,
    DEFAULT_BINS,
};
use pora_core::grid::{covering_spec, OccupancyGrid};
use pora_core::predictor::{predict_at, BlobPeak, MotionModel};
use pora_core::risk::{build_safety_box, pora_trajectory, RiskField};
use pora_core::sim::{
    ego_plan, generate_scenario, initial_states, make_penetration_sweep, mixed_family_specs,
    Family, FamilyParams, MetricKind, ScenarioSpec, SimConfig,
};
use pora_core::types::{speed_kmh, OrientedBox, PlannedTrajectory, Pose2};

use crate::batch::{calibrate_beta_parallel, default_workers, run_parallel};
use crate::bench::{bench_latency, bench_to_csv};
use crate::experiments::{correlation_study, separation_study, CorrelationStudy};
use crate::io;
use crate::manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "pora", version, about = "Predictive occupancy risk assessment for automated vehicles")]
pub struct Cli {
    /// Directory for every file a command writes.
    #[arg(long, global = true, env = "PORA_OUT_DIR", default_value = "pora-out")]
    pub out_dir: PathBuf,
    /// Worker threads for multi-episode commands (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Format of summary tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-loop traffic simulation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Score a planned trajectory against occupancy grids.
    #[command(subcommand)]
    Risk(RiskCmd),
    /// Metric studies.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Per-stage latency of the risk computation.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum SimCmd {
    /// One episode from a scenario file.
    Run(SimRunArgs),
    /// Many episodes, from files or generated per family.
    Batch(SimBatchArgs),
    /// Vary the share of vehicles driven by the controller.
    Sweep(SweepArgs),
    /// Write a generated scenario file.
    Generate(GenerateArgs),
}

#[derive(Debug, Subcommand)]
pub enum RiskCmd {
    /// Per-step risk scores for a plan.
    Eval(EvalArgs),
    /// Predicted occupancy grids and the AV plan for a scenario's first frame.
    Predict(PredictArgs),
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Occupancy change vs. relative motion on approach/separate episodes.
    Correlate(CorrelateArgs),
    /// Crash vs. safe distributions of per-tick metric values.
    Separate(SeparateArgs),
    /// Choose the Cox coefficient.
    #[command(subcommand)]
    Calibrate(CalibrateCmd),
    /// Same as the top-level `bench`.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum CalibrateCmd {
    /// Minimize simulated collisions over a β grid.
    Sim(CalibrateSimArgs),
    /// Labeled crash scenarios with known collision times.
    Labeled(CalibrateLabeledArgs),
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    MetricKind::parse(s).ok_or_else(|| format!("unknown metric {s:?} (pora, ttc1, ttc2)"))
}

fn parse_family(s: &str) -> Result<Family, String> {
    Family::parse(s).ok_or_else(|| {
        format!("unknown family {s:?} (nominal, pedestrian_violation, lane_incursion, brake_cutin)")
    })
}

fn parse_peak(s: &str) -> Result<BlobPeak, String> {
    match s {
        "unit" => Ok(BlobPeak::Unit),
        "mass-preserving" => Ok(BlobPeak::MassPreserving),
        _ => Err(format!("unknown blob peak {s:?} (unit, mass-preserving)")),
    }
}

fn parse_motion(s: &str) -> Result<MotionModel, String> {
    match s {
        "cv" | "constant-velocity" => Ok(MotionModel::ConstantVelocity),
        "ca" | "constant-acceleration" => Ok(MotionModel::ConstantAcceleration),
        _ => Err(format!("unknown motion model {s:?} (cv, ca)")),
    }
}

fn parse_summary(s: &str) -> Result<DeltaPSummary, String> {
    match s {
        "max" => Ok(DeltaPSummary::MaxOccupancy),
        "sum-phi" => Ok(DeltaPSummary::SumOverPhi),
        _ => Err(format!("unknown summary {s:?} (max, sum-phi)")),
    }
}

fn parse_direction(s: &str) -> Result<KlDirection, String> {
    match s {
        "crash-safe" => Ok(KlDirection::CrashSafe),
        "safe-crash" => Ok(KlDirection::SafeCrash),
        _ => Err(format!("unknown direction {s:?} (crash-safe, safe-crash)")),
    }
}

/// `LxW` in meters.
fn parse_dims(s: &str) -> Result<(f64, f64), String> {
    let (l, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected LxW, got {s:?}"))?;
    let l: f64 = l.trim().parse().map_err(|_| format!("bad length in {s:?}"))?;
    let w: f64 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    if !(l > 0.0 && w > 0.0 && l.is_finite() && w.is_finite()) {
        return Err(format!("dimensions must be positive: {s:?}"));
    }
    Ok((l, w))
}

/// `ROWSxCOLS`.
fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let r: usize = r.trim().parse().map_err(|_| format!("bad rows in {s:?}"))?;
    let c: usize = c.trim().parse().map_err(|_| format!("bad cols in {s:?}"))?;
    if r == 0 || c == 0 {
        return Err(format!("window must be non-empty: {s:?}"));
    }
    Ok((r, c))
}

/// Risk model and predictor settings shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelOpts {
    /// JSON simulation config to start from; the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cox coefficient.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Perception-reaction time for the stopping sight distance, s.
    #[arg(long)]
    pub reaction_time: Option<f64>,
    /// Design deceleration for the stopping sight distance, m/s^2.
    #[arg(long)]
    pub decel: Option<f64>,
    /// Cell edge of the AV window, m.
    #[arg(long)]
    pub cell_size: Option<f64>,
    /// Prediction steps K.
    #[arg(long)]
    pub horizon_steps: Option<usize>,
    /// Spacing of prediction steps, s.
    #[arg(long)]
    pub step_dt: Option<f64>,
    /// unit | mass-preserving
    #[arg(long, value_parser = parse_peak)]
    pub blob_peak: Option<BlobPeak>,
    /// cv | ca
    #[arg(long, value_parser = parse_motion)]
    pub motion_model: Option<MotionModel>,
}

/// Controller settings.
#[derive(Debug, Clone, Default, Args)]
pub struct PolicyOpts {
    /// Metric the controller acts on: pora | ttc1 | ttc2.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<MetricKind>,
    #[arg(long)]
    pub proceed_below: Option<f64>,
    #[arg(long)]
    pub brake_above: Option<f64>,
    /// Below this the controller may speed back up.
    #[arg(long)]
    pub resume_below: Option<f64>,
    /// Extra metrics to log each tick, comma separated.
    #[arg(long, value_parser = parse_metric, value_delimiter = ',')]
    pub record: Vec<MetricKind>,
}

#[derive(Debug, Clone, Args)]
pub struct FamilyOpts {
    /// Families to cycle through, comma separated (default: all four).
    #[arg(long, value_parser = parse_family, value_delimiter = ',')]
    pub families: Vec<Family>,
    /// Number of generated episodes.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Seed of the first episode; episode i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Episode length, s.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimRunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Also write every agent's state per tick.
    #[arg(long)]
    pub trajectory: bool,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub policy: PolicyOpts,
}

#[derive(Debug, Args)]
pub struct SimBatchArgs {
    /// Scenario files; when absent, episodes are generated per family.
    #[arg(long, num_args = 1..)]
    pub scenario: Vec<PathBuf>,
    #[command(flatten)]
    pub families: FamilyOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub policy: PolicyOpts,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_parser = parse_family, default_value = "lane_incursion")]
    pub family: Family,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Penetration levels in [0, 1], comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub levels: Vec<f64>,
    /// Episodes per level.
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    #[arg(long)]
    pub duration: Option<f64>,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub policy: PolicyOpts,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Destination (default: scenario.json in the output directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Plan CSV (t,x,y,heading,vx,vy). Defaults to the scenario's constant-speed plan.
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Occupancy grids in time order (.csv or .json).
    #[arg(long, num_args = 1..)]
    pub grids: Vec<PathBuf>,
    /// Predict the grids from the scenario's first frame instead of reading them.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Participant dimensions LxW; repeatable. Defaults to the scenario's agents.
    #[arg(long, value_parser = parse_dims)]
    pub participant: Vec<(f64, f64)>,
    /// AV dimensions LxW.
    #[arg(long, value_parser = parse_dims)]
    pub av_dims: Option<(f64, f64)>,
    /// Also write the per-cell breakdown of every step.
    #[arg(long)]
    pub fields: bool,
    #[command(flatten)]
    pub model: ModelOpts,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[command(flatten)]
    pub model: ModelOpts,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Number of approach/separate episodes.
    #[arg(long, default_value_t = 30)]
    pub scenarios: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    /// max | sum-phi
    #[arg(long, value_parser = parse_summary, default_value = "max")]
    pub summary: DeltaPSummary,
    #[command(flatten)]
    pub model: ModelOpts,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Metric driving the AV during the study.
    #[arg(long, value_parser = parse_metric, default_value = "ttc2")]
    pub controller: MetricKind,
    /// Metrics to compare, comma separated.
    #[arg(long, value_parser = parse_metric, value_delimiter = ',', default_value = "pora,ttc1")]
    pub compare: Vec<MetricKind>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// crash-safe | safe-crash
    #[arg(long, value_parser = parse_direction, default_value = "crash-safe")]
    pub direction: KlDirection,
    #[command(flatten)]
    pub families: FamilyOpts,
    #[command(flatten)]
    pub model: ModelOpts,
}

#[derive(Debug, Args)]
pub struct CalibrateSimArgs {
    /// Candidate β values, comma separated (default: 0 to 5 in steps of 0.05).
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
    #[command(flatten)]
    pub families: FamilyOpts,
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub policy: PolicyOpts,
}

#[derive(Debug, Args)]
pub struct CalibrateLabeledArgs {
    /// JSON array of labeled scenarios.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Window sizes ROWSxCOLS, comma separated.
    #[arg(long, value_parser = parse_window, value_delimiter = ',', default_value = "30x40,60x80")]
    pub windows: Vec<(usize, usize)>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
}

#[derive(Debug)]
enum CliError {
    /// Bad input or configuration; exit code 2.
    Config(String),
    /// The computation itself failed; exit code 1.
    Runtime(String),
}

fn config_err(e: impl Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type CliResult<T> = Result<T, CliError>;

/// Files written by one command, plus its manifest.
struct Output {
    dir: PathBuf,
    format: Format,
    manifest: Manifest,
}

impl Output {
    fn new(cli: &Cli, command: &str, config: Value) -> Self {
        Self {
            dir: cli.out_dir.clone(),
            format: cli.format,
            manifest: Manifest::new(command, config),
        }
    }

    fn file(&mut self, name: &str, contents: &str) -> CliResult<()> {
        io::write(&self.dir.join(name), contents).map_err(runtime_err)?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// `stem.csv` or `stem.json` depending on `--format`.
    fn table<T: Serialize>(&mut self, stem: &str, value: &T, csv: String) -> CliResult<()> {
        match self.format {
            Format::Csv => self.file(&format!("{stem}.csv"), &csv),
            Format::Json => self.file(&format!("{stem}.json"), &io::to_json(value)),
        }
    }

    fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.display().to_string());
    }

    fn finish(self) -> CliResult<()> {
        io::write(&self.dir.join("manifest.json"), &io::to_json(&self.manifest))
            .map_err(runtime_err)
    }
}

fn sim_config(model: &ModelOpts, policy: Option<&PolicyOpts>) -> CliResult<SimConfig> {
    let mut cfg = match &model.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = model.beta {
        cfg.risk.cox.beta = v;
    }
    if let Some(v) = model.reaction_time {
        cfg.risk.ssd.reaction_time = v;
    }
    if let Some(v) = model.decel {
        cfg.risk.ssd.decel_rate = v;
    }
    if let Some(v) = model.cell_size {
        cfg.risk.cell_size = v;
    }
    if let Some(v) = model.horizon_steps {
        cfg.predictor.horizon_steps = v;
    }
    if let Some(v) = model.step_dt {
        cfg.predictor.step_dt = v;
    }
    if let Some(v) = model.blob_peak {
        cfg.predictor.blob_peak = v;
    }
    if let Some(v) = model.motion_model {
        cfg.predictor.motion_model = v;
    }
    if let Some(p) = policy {
        if let Some(v) = p.metric {
            cfg.metric = v;
        }
        if let Some(v) = p.proceed_below {
            cfg.policy.proceed_below = v;
        }
        if let Some(v) = p.brake_above {
            cfg.policy.brake_above = v;
        }
        if let Some(v) = p.resume_below {
            cfg.policy.resume_below = v;
        }
        if !p.record.is_empty() {
            cfg.record_metrics = p.record.clone();
        }
    }
    cfg.validate().map_err(config_err)?;
    Ok(cfg)
}

fn family_specs(opts: &FamilyOpts) -> CliResult<Vec<ScenarioSpec>> {
    let mut params = FamilyParams::default();
    if let Some(d) = opts.duration {
        params.duration = d;
    }
    let families = if opts.families.is_empty() {
        Family::ALL.to_vec()
    } else {
        opts.families.clone()
    };
    if opts.episodes == 0 {
        return Err(config_err("--episodes must be at least 1"));
    }
    mixed_family_specs(&families, opts.episodes, opts.seed, &params).map_err(config_err)
}

fn workers(cli: &Cli) -> CliResult<usize> {
    match cli.workers {
        Some(0) => Err(config_err("--workers must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(default_workers()),
    }
}

fn summary_line(label: &str, s: &pora_core::sim::BatchSummary) {
    println!(
        "{label}: {} episodes, {:.3} conflicts/episode, {:.2} collisions/100, {} crash episodes",
        s.episodes, s.avg_conflicts, s.collisions_per_100, s.crash_episodes
    );
}

fn sim_run(cli: &Cli, a: &SimRunArgs) -> CliResult<()> {
    let mut cfg = sim_config(&a.model, Some(&a.policy))?;
    cfg.record_trajectory = a.trajectory;
    let spec = io::load_scenario(&a.scenario).map_err(config_err)?;
    let mut out = Output::new(cli, "sim run", json!({ "sim": cfg }));
    out.input(&a.scenario);
    out.manifest.seeds.push(spec.seed);
    let mut report = pora_core::sim::run_episode(&spec, &cfg).map_err(runtime_err)?;
    let trajectory = std::mem::take(&mut report.trajectory);
    out.file("metric.csv", &io::series_to_csv(cfg.metric.as_str(), &report.metric_trace))?;
    for m in &report.recorded {
        out.file(
            &format!("recorded_{}.csv", m.metric.as_str()),
            &io::series_to_csv(m.metric.as_str(), &m.values),
        )?;
    }
    if a.trajectory {
        out.file("trajectory.csv", &io::trajectory_to_csv(&trajectory))?;
    }
    out.file("report.json", &io::to_json(&report))?;
    println!(
        "{:?}: {} conflicts, {} collisions, return {:.3}",
        report.outcome, report.conflicts, report.collisions, report.episode_return
    );
    out.finish()
}

fn sim_batch(cli: &Cli, a: &SimBatchArgs) -> CliResult<()> {
    let cfg = sim_config(&a.model, Some(&a.policy))?;
    let specs = if a.scenario.is_empty() {
        family_specs(&a.families)?
    } else {
        a.scenario
            .iter()
            .map(|p| io::load_scenario(p).map_err(config_err))
            .collect::<CliResult<Vec<_>>>()?
    };
    let mut out = Output::new(cli, "sim batch", json!({ "sim": cfg }));
    for p in &a.scenario {
        out.input(p);
    }
    out.manifest.seeds = specs.iter().map(|s| s.seed).collect();
    let (reports, summary) = run_parallel(&specs, &cfg, workers(cli)?).map_err(runtime_err)?;
    out.file("episodes.csv", &io::episodes_to_csv(&reports))?;
    out.table("summary", &summary, io::summary_to_csv(&summary))?;
    summary_line(cfg.metric.as_str(), &summary);
    out.finish()
}

#[derive(Serialize)]
struct SweepRow {
    level: f64,
    #[serde(flatten)]
    summary: pora_core::sim::BatchSummary,
}

fn sim_sweep(cli: &Cli, a: &SweepArgs) -> CliResult<()> {
    let cfg = sim_config(&a.model, Some(&a.policy))?;
    let mut params = FamilyParams::default();
    if let Some(d) = a.duration {
        params.duration = d;
    }
    if a.episodes == 0 || a.levels.is_empty() {
        return Err(config_err("need at least one level and one episode"));
    }
    let base = generate_scenario(a.family, a.seed, &params).map_err(config_err)?;
    let specs = make_penetration_sweep(&base, &a.levels, a.episodes).map_err(config_err)?;
    let mut out = Output::new(
        cli,
        "sim sweep",
        json!({ "sim": cfg, "family": a.family, "levels": a.levels, "episodes": a.episodes }),
    );
    out.manifest.seeds = specs.iter().map(|s| s.seed).collect();
    let n = workers(cli)?;
    let mut rows = Vec::new();
    for (level, chunk) in a.levels.iter().zip(specs.chunks(a.episodes)) {
        let (_, summary) = run_parallel(chunk, &cfg, n).map_err(runtime_err)?;
        summary_line(&format!("level {level}"), &summary);
        rows.push(SweepRow {
            level: *level,
            summary,
        });
    }
    let mut csv = format!("level,{}\n", io::SUMMARY_COLUMNS.join(","));
    for r in &rows {
        csv.push_str(&format!("{},{}\n", r.level, io::summary_fields(&r.summary).join(",")));
    }
    out.table("penetration", &rows, csv)?;
    out.finish()
}

fn sim_generate(cli: &Cli, a: &GenerateArgs) -> CliResult<()> {
    let mut params = FamilyParams::default();
    if let Some(d) = a.duration {
        params.duration = d;
    }
    let spec = generate_scenario(a.family, a.seed, &params).map_err(config_err)?;
    let json = io::scenario_to_json(&spec);
    match &a.output {
        Some(path) => {
            io::write(path, &json).map_err(runtime_err)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            let mut out = Output::new(
                cli,
                "sim generate",
                json!({ "family": a.family, "duration": params.duration }),
            );
            out.manifest.seeds.push(a.seed);
            out.file("scenario.json", &json)?;
            out.finish()
        }
    }
}

/// Grids predicted from the scenario's first frame at the plan's sample
/// times (`k = 1..=K`), on one world grid covering every step's window.
fn predicted_grids(
    spec: &ScenarioSpec,
    plan: &PlannedTrajectory,
    cfg: &SimConfig,
) -> CliResult<Vec<OccupancyGrid>> {
    let states = initial_states(spec).map_err(runtime_err)?;
    let (av, others) = states.split_first().ok_or_else(|| runtime_err("empty scene"))?;
    let boxes: Vec<OrientedBox> = others.iter().map(|s| s.bbox).collect();
    let offsets = cfg.predictor.offsets();
    let mut windows = Vec::new();
    for tau in &offsets {
        let s = plan
            .sample_at(*tau, pora_core::risk::TIME_ALIGNMENT_TOLERANCE)
            .ok_or_else(|| config_err(format!("plan has no sample at t = {tau}")))?;
        let footprint = av.bbox.with_center(s.pose);
        let reach = if boxes.is_empty() {
            // Still predict around the plan when the scene is empty.
            vec![OrientedBox::new(Pose2::default(), 4.5, 1.8).map_err(runtime_err)?]
        } else {
            boxes.clone()
        };
        let bx = build_safety_box(&footprint, speed_kmh(s.velocity), &reach, &cfg.risk.ssd)
            .map_err(runtime_err)?;
        windows.push(bx.window_spec(cfg.risk.cell_size).map_err(runtime_err)?);
    }
    let global = covering_spec(&windows, cfg.risk.cell_size).map_err(runtime_err)?;
    predict_at(others, &global, &cfg.predictor, 0.0, &offsets).map_err(runtime_err)
}

fn grid_name(k: usize, format: Format) -> String {
    match format {
        Format::Csv => format!("grid_{k}.csv"),
        Format::Json => format!("grid_{k}.json"),
    }
}

fn risk_predict(cli: &Cli, a: &PredictArgs) -> CliResult<()> {
    let cfg = sim_config(&a.model, None)?;
    let spec = io::load_scenario(&a.scenario).map_err(config_err)?;
    let mut offsets = vec![0.0];
    offsets.extend(cfg.predictor.offsets());
    let plan = ego_plan(&spec, &offsets).map_err(runtime_err)?;
    let grids = predicted_grids(&spec, &plan, &cfg)?;
    let mut out = Output::new(
        cli,
        "risk predict",
        json!({ "risk": cfg.risk, "predictor": cfg.predictor }),
    );
    out.input(&a.scenario);
    out.manifest.seeds.push(spec.seed);
    out.file("plan.csv", &io::plan_to_csv(&plan))?;
    for (k, g) in grids.iter().enumerate() {
        let text = match cli.format {
            Format::Csv => io::grid_to_csv(g),
            Format::Json => io::grid_to_json(g),
        };
        out.file(&grid_name(k + 1, cli.format), &text)?;
    }
    println!("wrote plan and {} grids to {}", grids.len(), cli.out_dir.display());
    out.finish()
}

#[derive(Serialize)]
struct ScoreRow {
    t: f64,
    k: usize,
    score: f64,
}

#[derive(Serialize)]
struct FieldRow<'a> {
    t: f64,
    k: usize,
    field: &'a Option<RiskField>,
}

fn risk_eval(cli: &Cli, a: &EvalArgs) -> CliResult<()> {
    let cfg = sim_config(&a.model, None)?;
    let spec = match &a.scenario {
        Some(p) => Some(io::load_scenario(p).map_err(config_err)?),
        None => None,
    };
    let plan = match (&a.plan, &spec) {
        (Some(p), _) => io::load_plan(p).map_err(config_err)?,
        (None, Some(s)) => {
            let mut offsets = vec![0.0];
            offsets.extend(cfg.predictor.offsets());
            ego_plan(s, &offsets).map_err(runtime_err)?
        }
        (None, None) => return Err(config_err("need --plan or --scenario")),
    };
    let grids = match (a.grids.is_empty(), &spec) {
        (false, _) => a
            .grids
            .iter()
            .map(|p| io::load_grid(p).map_err(config_err))
            .collect::<CliResult<Vec<_>>>()?,
        (true, Some(s)) => predicted_grids(s, &plan, &cfg)?,
        (true, None) => return Err(config_err("need --grids or --scenario")),
    };
    let others: Vec<OrientedBox> = if !a.participant.is_empty() {
        a.participant
            .iter()
            .map(|&(l, w)| OrientedBox::new(Pose2::default(), l, w))
            .collect::<Result<_, _>>()
            .map_err(config_err)?
    } else if let Some(s) = &spec {
        initial_states(s)
            .map_err(runtime_err)?
            .iter()
            .skip(1)
            .map(|st| st.bbox)
            .collect()
    } else {
        return Err(config_err("need --participant or --scenario"));
    };
    let av_dims = match (a.av_dims, &spec) {
        (Some(d), _) => d,
        (None, Some(s)) => s.ego.dimensions(),
        (None, None) => pora_core::types::ParticipantKind::Car.default_dimensions(),
    };
    let scores =
        pora_trajectory(&plan, &grids, av_dims, &others, &cfg.risk).map_err(runtime_err)?;

    let mut out = Output::new(
        cli,
        "risk eval",
        json!({
            "risk": cfg.risk,
            "predictor": cfg.predictor,
            "av_dims": av_dims,
            "participants": others.iter().map(|b| (b.length, b.width)).collect::<Vec<_>>(),
        }),
    );
    for p in a.plan.iter().chain(&a.grids).chain(&a.scenario) {
        out.input(p);
    }
    let rows: Vec<ScoreRow> = scores
        .iter()
        .map(|s| ScoreRow {
            t: s.t,
            k: s.k,
            score: s.score,
        })
        .collect();
    let mut csv = String::from("t,k,score\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.t, r.k, r.score));
        println!("t={:<8} k={:<3} score={:.6}", r.t, r.k, r.score);
    }
    out.table("scores", &rows, csv)?;
    if a.fields {
        let fields: Vec<FieldRow> = scores
            .iter()
            .map(|s| FieldRow {
                t: s.t,
                k: s.k,
                field: &s.field,
            })
            .collect();
        out.file("fields.json", &io::to_json(&fields))?;
    }
    out.finish()
}

fn analyze_correlate(cli: &Cli, a: &CorrelateArgs) -> CliResult<()> {
    let cfg = sim_config(&a.model, None)?;
    if a.scenarios == 0 {
        return Err(config_err("--scenarios must be at least 1"));
    }
    let study = CorrelationStudy {
        duration: a.duration,
        summary: a.summary,
        ..CorrelationStudy::default()
    };
    let seeds: Vec<u64> = (0..a.scenarios as u64).map(|i| a.seed + i).collect();
    let summary = correlation_study(&seeds, &study, &cfg, workers(cli)?).map_err(runtime_err)?;
    let mut out = Output::new(
        cli,
        "analyze correlate",
        json!({
            "risk": cfg.risk,
            "predictor": cfg.predictor,
            "duration": a.duration,
            "tick_dt": study.tick_dt,
            "summary": a.summary,
        }),
    );
    out.manifest.seeds = seeds;
    let mut csv = String::from("id,n,pearson,spearman,kendall\n");
    for c in &summary.per_scenario {
        let k = c.coefficients;
        csv.push_str(&format!("{},{},{},{},{}\n", c.id, c.n, k.pearson, k.spearman, k.kendall));
    }
    let g = summary.aggregate;
    csv.push_str(&format!("aggregate,,{},{},{}\n", g.pearson, g.spearman, g.kendall));
    out.table("correlation", &summary, csv)?;
    println!(
        "aggregate over {} scenarios ({} excluded): pearson {:.3}, spearman {:.3}, kendall {:.3}",
        summary.per_scenario.len(),
        summary.excluded.len(),
        g.pearson,
        g.spearman,
        g.kendall
    );
    out.finish()
}

fn analyze_separate(cli: &Cli, a: &SeparateArgs) -> CliResult<()> {
    let cfg = sim_config(&a.model, None)?;
    if a.compare.is_empty() {
        return Err(config_err("--compare needs at least one metric"));
    }
    let specs = family_specs(&a.families)?;
    let study = separation_study(
        &specs,
        &cfg,
        a.controller,
        &a.compare,
        a.bins,
        a.direction,
        workers(cli)?,
    )
    .map_err(runtime_err)?;
    let mut out = Output::new(
        cli,
        "analyze separate",
        json!({ "sim": cfg, "controller": a.controller, "bins": a.bins, "direction": a.direction }),
    );
    out.manifest.seeds = specs.iter().map(|s| s.seed).collect();
    let mut csv = String::from("metric,kl,safe_samples,crash_samples,proceed_below,brake_above\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for m in &study.metrics {
        let r = &m.report;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.metric.as_str(),
            r.kl,
            r.safe_samples,
            r.crash_samples,
            opt(r.threshold_suggestions.proceed_below),
            opt(r.threshold_suggestions.brake_above)
        ));
        println!("{}: KL {:.4} nats", m.metric.as_str(), r.kl);
    }
    out.table("separation", &study, csv)?;
    out.file("histograms.json", &io::to_json(&study.metrics))?;
    summary_line(a.controller.as_str(), &study.summary);
    out.finish()
}

fn beta_grid(betas: &[f64]) -> Vec<f64> {
    if betas.is_empty() {
        default_beta_grid()
    } else {
        betas.to_vec()
    }
}

fn calibrate_sim(cli: &Cli, a: &CalibrateSimArgs) -> CliResult<()> {
    let cfg = sim_config(&a.model, Some(&a.policy))?;
    let betas = beta_grid(&a.betas);
    if let Some(b) = betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
        return Err(config_err(format!("invalid beta {b}")));
    }
    let specs = family_specs(&a.families)?;
    let cal = calibrate_beta_parallel(&specs, &betas, &cfg, workers(cli)?).map_err(runtime_err)?;
    let mut out = Output::new(
        cli,
        "analyze calibrate sim",
        json!({ "sim": cfg, "betas": betas }),
    );
    out.manifest.seeds = specs.iter().map(|s| s.seed).collect();
    let mut csv = format!("beta,cost,{}\n", io::SUMMARY_COLUMNS.join(","));
    for r in &cal.table {
        csv.push_str(&format!("{},{},{}\n", r.beta, r.cost, io::summary_fields(&r.summary).join(",")));
    }
    out.table("calibration", &cal, csv)?;
    println!("beta = {}", cal.beta);
    out.finish()
}

fn calibrate_labeled(cli: &Cli, a: &CalibrateLabeledArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| config_err(format!("{}: {e}", a.input.display())))?;
    let scenarios: Vec<LabeledScenario> = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", a.input.display())))?;
    let betas = beta_grid(&a.betas);
    let cal = calibrate_beta_labeled(&scenarios, &betas).map_err(config_err)?;
    let mut out = Output::new(cli, "analyze calibrate labeled", json!({ "betas": betas }));
    out.input(&a.input);
    let mut csv = String::from("beta,feasible,mean_risk_at_collision,violation\n");
    for r in &cal.table {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.beta, r.feasible, r.mean_risk_at_collision, r.violation
        ));
    }
    out.table("calibration", &cal, csv)?;
    println!(
        "beta = {}{}",
        cal.beta,
        if cal.feasible { "" } else { " (no feasible beta; least violation)" }
    );
    out.finish()
}

fn bench(cli: &Cli, a: &BenchArgs) -> CliResult<()> {
    if a.reps == 0 {
        return Err(config_err("--reps must be at least 1"));
    }
    let rows = bench_latency(&a.windows, a.reps);
    let windows: Vec<String> = a.windows.iter().map(|(r, c)| format!("{r}x{c}")).collect();
    let mut out = Output::new(cli, "bench", json!({ "windows": windows, "reps": a.reps }));
    for r in &rows {
        println!(
            "{:>8} {:<22} median {:.4} ms  p95 {:.4} ms",
            r.window, r.stage, r.median_ms, r.p95_ms
        );
    }
    out.table("latency", &rows, bench_to_csv(&rows))?;
    out.finish()
}

fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Sim(SimCmd::Run(a)) => sim_run(cli, a),
        Command::Sim(SimCmd::Batch(a)) => sim_batch(cli, a),
        Command::Sim(SimCmd::Sweep(a)) => sim_sweep(cli, a),
        Command::Sim(SimCmd::Generate(a)) => sim_generate(cli, a),
        Command::Risk(RiskCmd::Eval(a)) => risk_eval(cli, a),
        Command::Risk(RiskCmd::Predict(a)) => risk_predict(cli, a),
        Command::Analyze(AnalyzeCmd::Correlate(a)) => analyze_correlate(cli, a),
        Command::Analyze(AnalyzeCmd::Separate(a)) => analyze_separate(cli, a),
        Command::Analyze(AnalyzeCmd::Calibrate(CalibrateCmd::Sim(a))) => calibrate_sim(cli, a),
        Command::Analyze(AnalyzeCmd::Calibrate(CalibrateCmd::Labeled(a))) => {
            calibrate_labeled(cli, a)
        }
        Command::Analyze(AnalyzeCmd::Bench(a)) | Command::Bench(a) => bench(cli, a),
    }
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}
