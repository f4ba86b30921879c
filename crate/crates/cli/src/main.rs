//! `mrpp`: map generation, single trials, sweeps and report audits.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrpp_core::mapgen::{generate_polytunnel, generate_reference_scale, PolytunnelParams};
use mrpp_core::sweep::{render_summary, write_sweep, SweepOutcome};
use mrpp_core::topomap::save_map;
use mrpp_core::{report, run_sweep, run_trial, Error, FleetConfig, MapSource, PlannerKind, SweepSpec, TrialConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_COLLISION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "mrpp", version, about = "Multi-robot route planning on topological maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a polytunnel map (or a preset) as topomap JSON.
    Mapgen(MapgenArgs),
    /// Run one trial and write its CSVs.
    Run(RunArgs),
    /// Run a planner x fleet x seed grid.
    Sweep(SweepArgs),
    /// Recompute the summary of a sweep directory from its per-task log.
    Report {
        dir: PathBuf,
    },
}

#[derive(Args, Default)]
struct LayoutArgs {
    #[arg(long)]
    tunnels: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    nodes_per_row: Option<usize>,
    #[arg(long)]
    row_spacing: Option<f64>,
    #[arg(long)]
    node_spacing: Option<f64>,
    #[arg(long)]
    header_speed: Option<f64>,
    #[arg(long)]
    row_speed: Option<f64>,
    #[arg(long)]
    envelope: Option<f64>,
    /// Rows are traversable in one direction only.
    #[arg(long)]
    one_way_rows: bool,
}

impl LayoutArgs {
    fn any(&self) -> bool {
        self.tunnels.is_some()
            || self.rows.is_some()
            || self.nodes_per_row.is_some()
            || self.row_spacing.is_some()
            || self.node_spacing.is_some()
            || self.header_speed.is_some()
            || self.row_speed.is_some()
            || self.envelope.is_some()
            || self.one_way_rows
    }

    fn params(&self) -> PolytunnelParams {
        let d = PolytunnelParams::default();
        PolytunnelParams {
            n_tunnels: self.tunnels.unwrap_or(d.n_tunnels),
            rows_per_tunnel: self.rows.unwrap_or(d.rows_per_tunnel),
            nodes_per_row: self.nodes_per_row.unwrap_or(d.nodes_per_row),
            row_spacing: self.row_spacing.unwrap_or(d.row_spacing),
            node_spacing: self.node_spacing.unwrap_or(d.node_spacing),
            header_speed_limit: self.header_speed.unwrap_or(d.header_speed_limit),
            row_speed_limit: self.row_speed.unwrap_or(d.row_speed_limit),
            envelope: self.envelope.unwrap_or(d.envelope),
            bidirectional_rows: !self.one_way_rows,
        }
    }
}

#[derive(Args)]
struct MapgenArgs {
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    layout: LayoutArgs,
    #[arg(long, short)]
    out: PathBuf,
}

/// Where the map comes from; at most one of these may be given.
#[derive(Args, Default)]
struct MapArgs {
    /// Topomap JSON file.
    #[arg(long, conflicts_with = "preset")]
    map: Option<PathBuf>,
    /// Named map, e.g. `reference`.
    #[arg(long)]
    preset: Option<String>,
    #[command(flatten)]
    layout: LayoutArgs,
}

impl MapArgs {
    fn source(&self) -> Result<Option<MapSource>, Error> {
        let layout = self.layout.any();
        if layout && (self.map.is_some() || self.preset.is_some()) {
            return Err(Error::Config("layout flags cannot be combined with --map or --preset".into()));
        }
        Ok(if let Some(p) = &self.map {
            Some(MapSource::File(p.clone()))
        } else if let Some(p) = &self.preset {
            Some(MapSource::Preset(p.clone()))
        } else if layout {
            Some(MapSource::Polytunnel(self.layout.params()))
        } else {
            None
        })
    }
}

#[derive(Args)]
struct RunArgs {
    /// Trial config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    map: MapArgs,
    #[arg(long)]
    planner: Option<PlannerKind>,
    /// Number of robots, placed automatically.
    #[arg(long)]
    fleet: Option<usize>,
    #[arg(long, env = "MRPP_SEED")]
    seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[command(flatten)]
    trial: TrialFlags,
    #[arg(long, short, default_value = "results")]
    out: PathBuf,
    /// Record measured wall time instead of 0 in the per-trial CSV.
    #[arg(long)]
    wall_clock: bool,
}

/// Per-trial settings shared by `run` and `sweep`.
#[derive(Args)]
struct TrialFlags {
    #[arg(long)]
    fallback_period: Option<f64>,
    #[arg(long)]
    pbs_window: Option<f64>,
    #[arg(long)]
    pbs_attempts: Option<usize>,
    /// Check for collisions (default: on for every planner except naive).
    #[arg(long, value_parser = parse_switch)]
    collision_check: Option<bool>,
    /// Fail the trial when a collision is logged (`on` by default).
    #[arg(long, value_parser = parse_switch)]
    strict: Option<bool>,
}

impl TrialFlags {
    fn apply(&self, cfg: &mut TrialConfig) {
        if let Some(x) = self.fallback_period {
            cfg.fallback_period_s = x;
        }
        if let Some(x) = self.pbs_window {
            cfg.pbs_window_s = x;
        }
        if let Some(x) = self.pbs_attempts {
            cfg.pbs_max_attempts = x;
        }
        if self.collision_check.is_some() {
            cfg.collision_check = self.collision_check;
        }
        if let Some(x) = self.strict {
            cfg.strict = x;
        }
    }

    fn any(&self) -> bool {
        self.fallback_period.is_some()
            || self.pbs_window.is_some()
            || self.pbs_attempts.is_some()
            || self.collision_check.is_some()
            || self.strict.is_some()
    }
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got {s:?}")),
    }
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep spec JSON; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[command(flatten)]
    map: MapArgs,
    #[arg(long, value_delimiter = ',')]
    planners: Option<Vec<PlannerKind>>,
    #[arg(long, value_delimiter = ',')]
    fleets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    duration: Option<f64>,
    #[command(flatten)]
    trial: TrialFlags,
    /// Worker threads (default: all processors).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, short, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    wall_clock: bool,
}

fn bad_json(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
    move |e| Error::Config(format!("{}: {e}", path.display()))
}

fn cmd_mapgen(args: &MapgenArgs) -> Result<u8, Error> {
    let map = match &args.preset {
        Some(_) if args.layout.any() => return Err(Error::Config("--preset cannot be combined with layout flags".into())),
        Some(p) if p == "reference" => generate_reference_scale(),
        Some(p) => return Err(Error::Config(format!("unknown map preset {p:?}"))),
        None => generate_polytunnel(&args.layout.params())?,
    };
    std::fs::write(&args.out, save_map(&map))?;
    println!("{}: {} nodes, {} edges -> {}", map.name(), map.node_count(), map.edge_count(), args.out.display());
    Ok(0)
}

fn run_config(args: &RunArgs) -> Result<TrialConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?).map_err(bad_json(path))?,
        None => {
            let planner = args.planner.ok_or_else(|| Error::Config("--planner is required without --config".into()))?;
            let fleet = args.fleet.ok_or_else(|| Error::Config("--fleet is required without --config".into()))?;
            TrialConfig::new(MapSource::reference(), FleetConfig::homogeneous(fleet), planner, 3600.0, 0)
        }
    };
    if let Some(m) = args.map.source()? {
        cfg.map = m;
    }
    if let Some(p) = args.planner {
        cfg.planner = p;
    }
    if let Some(f) = args.fleet {
        cfg.fleet = FleetConfig::homogeneous(f);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.duration {
        cfg.duration_s = d;
    }
    args.trial.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<u8, Error> {
    let cfg = run_config(args)?;
    let result = run_trial(&cfg)?;
    let failed = result.failed;
    let outcome = SweepOutcome { results: vec![result], failures: Vec::new() };
    let summary = write_sweep(&args.out, &outcome, args.wall_clock)?;
    let r = &summary.rows[0];
    let na = |x: Option<f64>| x.map_or("NA".into(), |v| format!("{v:.4}"));
    println!(
        "{} tasks={} poe_task={} poe_avg={} collisions={} stalls={}",
        r.trial_id,
        r.tasks_completed,
        na(r.poe_task),
        na(r.poe_avg),
        r.collisions,
        r.stalls
    );
    if failed {
        eprintln!("strict collision check failed; see {}", args.out.join(mrpp_core::sweep::COLLISIONS_CSV).display());
        return Ok(EXIT_COLLISION);
    }
    Ok(0)
}

fn sweep_spec(args: &SweepArgs) -> Result<SweepSpec, Error> {
    let mut spec = match &args.spec {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?).map_err(bad_json(path))?,
        None => SweepSpec {
            planners: PlannerKind::all().to_vec(),
            fleet_sizes: (5..=10).collect(),
            seeds: vec![1, 2, 3],
            duration_s: 3600.0,
            map: MapSource::reference(),
            base: None,
        },
    };
    if let Some(m) = args.map.source()? {
        spec.map = m;
    }
    if let Some(p) = &args.planners {
        spec.planners = p.clone();
    }
    if let Some(f) = &args.fleets {
        spec.fleet_sizes = f.clone();
    }
    if let Some(s) = &args.seeds {
        spec.seeds = s.clone();
    }
    if let Some(d) = args.duration {
        spec.duration_s = d;
    }
    if args.trial.any() {
        let mut base = spec.base.take().unwrap_or_else(|| {
            TrialConfig::new(spec.map.clone(), FleetConfig::homogeneous(1), spec.planners[0], spec.duration_s, 0)
        });
        args.trial.apply(&mut base);
        spec.base = Some(base);
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, Error> {
    let spec = sweep_spec(args)?;
    let outcome = run_sweep(&spec, args.threads)?;
    let summary = write_sweep(&args.out, &outcome, args.wall_clock)?;
    let mut text = Vec::new();
    render_summary(&mut text, &summary)?;
    std::fs::write(args.out.join("summary.txt"), &text)?;
    print!("{}", String::from_utf8_lossy(&text));
    for f in &outcome.failures {
        eprintln!("trial {} failed: {}", f.trial_id, f.error);
    }
    let collided = outcome.results.iter().filter(|r| r.failed).count();
    if collided > 0 {
        eprintln!("{collided} trial(s) failed the strict collision check");
        return Ok(EXIT_COLLISION);
    }
    Ok(0)
}

fn cmd_report(dir: &Path) -> Result<u8, Error> {
    let rep = report(dir)?;
    let mut out = std::io::stdout().lock();
    render_summary(&mut out, &rep.summary)?;
    if rep.mismatches.is_empty() {
        return Ok(0);
    }
    for m in &rep.mismatches {
        eprintln!("mismatch: {m}");
    }
    Ok(EXIT_CONFIG)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let out = match &cli.command {
        Command::Mapgen(a) => cmd_mapgen(a),
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Report { dir } => cmd_report(dir),
    };
    match out {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
