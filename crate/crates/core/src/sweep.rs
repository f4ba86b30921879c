//! Planner × fleet × seed grids, their output files, and the audit that
//! rebuilds the summary from those files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::FleetConfig;
use crate::metrics::{
    fmt6, read_task_csv, read_trial_csv, sort_rows, summarize, trial_id, write_collision_csv, write_task_csv,
    write_trial_csv, SweepSummary, ThroughputTable, TrialResult, TrialRow,
};
use crate::planners::PlannerKind;
use crate::simulator::{run_trial_on, MapSource, TrialConfig};

pub const TASKS_CSV: &str = "tasks.csv";
pub const TRIALS_CSV: &str = "trials.csv";
pub const COLLISIONS_CSV: &str = "collisions.csv";
pub const FAILURES_CSV: &str = "failures.csv";
pub const TABLE2_CSV: &str = "table2_relative_throughput.csv";
pub const FIG2_CSV: &str = "fig2_throughput_vs_poe.csv";
pub const FIG3_CSV: &str = "fig3_poe_by_planner.csv";
pub const FIG4_CSV: &str = "fig4_throughput_by_fleet.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub planners: Vec<PlannerKind>,
    pub fleet_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub duration_s: f64,
    pub map: MapSource,
    /// Settings shared by every trial; its planner, fleet, seed and duration
    /// are replaced per cell.
    #[serde(default)]
    pub base: Option<TrialConfig>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.planners.is_empty() || self.fleet_sizes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("planners, fleet sizes and seeds must all be non-empty".into()));
        }
        Ok(())
    }

    /// Every trial config of the grid, planner-major.
    pub fn trials(&self) -> Vec<TrialConfig> {
        let mut out = Vec::new();
        for &planner in &self.planners {
            for &fleet in &self.fleet_sizes {
                for &seed in &self.seeds {
                    let mut cfg = match &self.base {
                        Some(base) => base.clone(),
                        None => TrialConfig::new(self.map.clone(), FleetConfig::homogeneous(fleet), planner, self.duration_s, seed),
                    };
                    cfg.map = self.map.clone();
                    cfg.fleet = FleetConfig::homogeneous(fleet);
                    cfg.planner = planner;
                    cfg.duration_s = self.duration_s;
                    cfg.seed = seed;
                    out.push(cfg);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub results: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

/// Runs the grid on `threads` workers (all processors when `None`). Results
/// come back in grid order whatever the degree of parallelism.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<SweepOutcome> {
    spec.validate()?;
    let map = spec.map.load()?;
    let configs = spec.trials();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<Result<TrialResult>> = pool.install(|| configs.par_iter().map(|c| run_trial_on(&map, c)).collect());
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (cfg, out) in configs.iter().zip(outcomes) {
        match out {
            Ok(r) => results.push(r),
            Err(e) => failures.push(TrialFailure {
                trial_id: trial_id(&cfg.planner.to_string(), cfg.fleet.size(), cfg.seed),
                error: e.to_string(),
            }),
        }
    }
    Ok(SweepOutcome { results, failures })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes every CSV of a finished sweep into `dir` and returns its summary.
pub fn write_sweep(dir: &Path, outcome: &SweepOutcome, record_wall_time: bool) -> Result<SweepSummary> {
    std::fs::create_dir_all(dir)?;
    let mut results: Vec<&TrialResult> = outcome.results.iter().collect();
    let rows: Vec<TrialRow> = results.iter().map(|r| r.row(record_wall_time)).collect();
    let summary = SweepSummary::new(rows)?;
    let order: Vec<&str> = summary.rows.iter().map(|r| r.trial_id.as_str()).collect();
    results.sort_by_key(|r| order.iter().position(|id| *id == r.trial_id));
    let sorted: Vec<TrialResult> = results.into_iter().cloned().collect();

    write_task_csv(create(dir, TASKS_CSV)?, &sorted)?;
    write_trial_csv(create(dir, TRIALS_CSV)?, &summary.rows)?;
    write_collision_csv(create(dir, COLLISIONS_CSV)?, &sorted)?;
    let mut w = csv::Writer::from_writer(create(dir, FAILURES_CSV)?);
    w.write_record(["trial_id", "error"])?;
    for f in &outcome.failures {
        w.write_record([&f.trial_id, &f.error])?;
    }
    w.flush()?;
    write_figures(dir, &summary)?;
    Ok(summary)
}

/// The relative-throughput table and the plot-ready figure files, all derived from the summary.
pub fn write_figures(dir: &Path, summary: &SweepSummary) -> Result<()> {
    summary.relative_throughput_table().write_csv(create(dir, TABLE2_CSV)?)?;
    let na = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), fmt6);

    let mut w = csv::Writer::from_writer(create(dir, FIG2_CSV)?);
    w.write_record(["planner", "fleet", "seed", "tasks_completed", "poe_avg"])?;
    for r in &summary.rows {
        w.write_record([r.planner.clone(), r.fleet.to_string(), r.seed.to_string(), r.tasks_completed.to_string(), na(r.poe_avg)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(dir, FIG3_CSV)?);
    w.write_record(["planner", "fleet", "seed", "poe_avg", "poe_task"])?;
    for r in &summary.rows {
        w.write_record([r.planner.clone(), r.fleet.to_string(), r.seed.to_string(), na(r.poe_avg), na(r.poe_task)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(create(dir, FIG4_CSV)?);
    w.write_record(["planner", "fleet", "trials", "mean_tasks", "min_tasks", "max_tasks"])?;
    for p in summary.planners() {
        for f in summary.fleets() {
            let cell: Vec<usize> =
                summary.rows.iter().filter(|r| r.planner == p && r.fleet == f).map(|r| r.tasks_completed).collect();
            if cell.is_empty() {
                continue;
            }
            let mean = cell.iter().sum::<usize>() as f64 / cell.len() as f64;
            w.write_record([
                p.clone(),
                f.to_string(),
                cell.len().to_string(),
                fmt6(mean),
                cell.iter().min().unwrap().to_string(),
                cell.iter().max().unwrap().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Rows rebuilt from the per-task log; collision, stall and timing
    /// columns are taken from the per-trial file.
    pub summary: SweepSummary,
    pub table: ThroughputTable,
    /// One line per field where the per-trial file disagrees with the log.
    pub mismatches: Vec<String>,
}

fn open(dir: &Path, name: &str) -> Result<BufReader<File>> {
    let path = dir.join(name);
    File::open(&path).map(BufReader::new).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Rebuilds the summary of a sweep directory from its per-task log and checks
/// it against the stored per-trial rows.
pub fn report(dir: &Path) -> Result<Report> {
    let stored = read_trial_csv(open(dir, TRIALS_CSV)?)?;
    let tasks = read_task_csv(open(dir, TASKS_CSV)?)?;
    if stored.is_empty() {
        return Err(Error::Audit(format!("{} lists no trials", dir.join(TRIALS_CSV).display())));
    }
    let collisions = {
        let mut rdr = csv::Reader::from_reader(open(dir, COLLISIONS_CSV)?);
        let mut counts = std::collections::BTreeMap::<String, usize>::new();
        for rec in rdr.records() {
            let rec = rec?;
            *counts.entry(rec.get(0).unwrap_or_default().to_string()).or_default() += 1;
        }
        counts
    };
    let mut mismatches = Vec::new();
    let mut rebuilt = Vec::new();
    for s in &stored {
        let mine: Vec<_> = tasks.iter().filter(|t| t.trial_id == s.trial_id).cloned().collect();
        let (tasks_completed, poe_task, poe_avg) = summarize(&mine);
        let row = TrialRow {
            tasks_completed,
            poe_task,
            poe_avg,
            collisions: collisions.get(&s.trial_id).copied().unwrap_or(0),
            ..s.clone()
        };
        let (a, b) = (row.fields(), s.fields());
        for (i, name) in crate::metrics::TRIAL_HEADER.iter().enumerate() {
            if a[i] != b[i] {
                mismatches.push(format!("{}: {name} stored {} recomputed {}", s.trial_id, b[i], a[i]));
            }
        }
        rebuilt.push(row);
    }
    let known: std::collections::BTreeSet<&str> = stored.iter().map(|s| s.trial_id.as_str()).collect();
    for t in &tasks {
        if !known.contains(t.trial_id.as_str()) {
            mismatches.push(format!("{}: tasks logged for a trial missing from {TRIALS_CSV}", t.trial_id));
            break;
        }
    }
    sort_rows(&mut rebuilt);
    let summary = SweepSummary::new(rebuilt)?;
    let table = summary.relative_throughput_table();
    Ok(Report { summary, table, mismatches })
}

/// Text rendering of a summary: per-trial rows then the relative throughput table.
pub fn render_summary<W: Write>(mut out: W, summary: &SweepSummary) -> Result<()> {
    writeln!(out, "{:<24} {:>6} {:>8} {:>10} {:>10} {:>10} {:>7}", "trial", "fleet", "seed", "tasks", "poe_task", "poe_avg", "coll")?;
    for r in &summary.rows {
        let na = |x: Option<f64>| x.map_or("NA".into(), |v| format!("{v:.4}"));
        writeln!(
            out,
            "{:<24} {:>6} {:>8} {:>10} {:>10} {:>10} {:>7}",
            r.trial_id,
            r.fleet,
            r.seed,
            r.tasks_completed,
            na(r.poe_task),
            na(r.poe_avg),
            r.collisions
        )?;
    }
    writeln!(out)?;
    writeln!(out, "throughput as % of naive")?;
    write!(out, "{}", summary.relative_throughput_table().render())?;
    Ok(())
}
