//! Path optimisation efficiency, throughput and the CSV records they are
//! computed from.
//!
//! Summary rows are always derived from the per-task records exactly as they
//! are written (six decimals), so a report rebuilt from the files matches the
//! sweep's own summary bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::Task;
use crate::planners::PlannerKind;
use crate::simulator::{CollisionEvent, TrialConfig};

/// Per-task efficiency: executed over optimal distance. `None` when the
/// optimum is zero.
pub fn poe_i(d_exec: f64, d_opt: f64) -> Option<f64> {
    (d_opt > 0.0).then(|| d_exec / d_opt)
}

fn completed(tasks: &[Task]) -> impl Iterator<Item = &Task> {
    tasks.iter().filter(|t| t.end_time.is_some() && t.d_opt > 0.0)
}

/// Mean of the per-task ratios over completed tasks.
pub fn poe_task(tasks: &[Task]) -> Option<f64> {
    mean_ratio(completed(tasks).map(|t| (t.d_exec, t.d_opt)))
}

/// Total executed over total optimal distance of completed tasks.
pub fn poe_avg(tasks: &[Task]) -> Option<f64> {
    ratio_of_sums(completed(tasks).map(|t| (t.d_exec, t.d_opt)))
}

fn mean_ratio(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (sum, n) = pairs.fold((0.0, 0usize), |(s, n), (e, o)| (s + e / o, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn ratio_of_sums(pairs: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let (e, o, n) = pairs.fold((0.0, 0.0, 0usize), |(se, so, n), (e, o)| (se + e, so + o, n + 1));
    (n > 0).then(|| e / o)
}

/// Planner throughput as a percentage of the naive planner's.
pub fn relative_throughput(planner_tasks: usize, naive_tasks: usize) -> Option<f64> {
    (naive_tasks > 0).then(|| 100.0 * planner_tasks as f64 / naive_tasks as f64)
}

pub fn trial_id(planner: &str, fleet: usize, seed: u64) -> String {
    format!("{planner}_f{fleet:02}_s{seed}")
}

pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt6)
}

fn round6(x: f64) -> f64 {
    fmt6(x).parse().expect("formatted float parses")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: String,
    /// The trial's config with every default resolved.
    pub config: TrialConfig,
    pub fleet_size: usize,
    pub tasks: Vec<Task>,
    pub collisions: Vec<CollisionEvent>,
    pub stalls: usize,
    pub wall_time: f64,
    pub planning_instances: usize,
    pub tasks_completed: usize,
    /// A collision was logged while the strict check was on.
    pub failed: bool,
}

impl TrialResult {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        config: TrialConfig,
        fleet_size: usize,
        tasks: Vec<Task>,
        collisions: Vec<CollisionEvent>,
        stalls: usize,
        wall_time: f64,
        planning_instances: usize,
        failed: bool,
    ) -> Self {
        let tasks_completed = tasks.iter().filter(|t| t.end_time.is_some()).count();
        TrialResult {
            trial_id: trial_id(&config.planner.to_string(), fleet_size, config.seed),
            config,
            fleet_size,
            tasks,
            collisions,
            stalls,
            wall_time,
            planning_instances,
            tasks_completed,
            failed,
        }
    }

    pub fn planner(&self) -> PlannerKind {
        self.config.planner
    }

    pub fn poe_task(&self) -> Option<f64> {
        poe_task(&self.tasks)
    }

    pub fn poe_avg(&self) -> Option<f64> {
        poe_avg(&self.tasks)
    }

    /// Per-task records as they appear in the task CSV.
    pub fn task_records(&self) -> Vec<TaskRecord> {
        self.tasks
            .iter()
            .map(|t| {
                let (d_opt, d_exec) = (round6(t.d_opt), round6(t.d_exec));
                let end = t.end_time.map(round6);
                TaskRecord {
                    trial_id: self.trial_id.clone(),
                    planner: self.config.planner.to_string(),
                    fleet: self.fleet_size,
                    seed: self.config.seed,
                    task_id: t.id,
                    agent: t.agent.clone(),
                    start_s: round6(t.start_time),
                    end_s: end,
                    d_opt_m: d_opt,
                    d_exec_m: d_exec,
                    poe_i: end.and(poe_i(d_exec, d_opt)).map(round6),
                }
            })
            .collect()
    }

    /// The per-trial row. Wall time is written as zero unless asked for, so
    /// that output files stay a pure function of the inputs.
    pub fn row(&self, record_wall_time: bool) -> TrialRow {
        let (tasks_completed, poe_task, poe_avg) = summarize(&self.task_records());
        TrialRow {
            trial_id: self.trial_id.clone(),
            planner: self.config.planner.to_string(),
            fleet: self.fleet_size,
            seed: self.config.seed,
            tasks_completed,
            poe_task,
            poe_avg,
            collisions: self.collisions.len(),
            stalls: self.stalls,
            sim_s: round6(self.config.duration_s),
            wall_s: if record_wall_time { round6(self.wall_time) } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub trial_id: String,
    pub planner: String,
    pub fleet: usize,
    pub seed: u64,
    pub task_id: u64,
    pub agent: String,
    pub start_s: f64,
    pub end_s: Option<f64>,
    pub d_opt_m: f64,
    pub d_exec_m: f64,
    pub poe_i: Option<f64>,
}

/// `(tasks_completed, poe_task, poe_avg)` of one trial's records.
pub fn summarize(records: &[TaskRecord]) -> (usize, Option<f64>, Option<f64>) {
    let done: Vec<&TaskRecord> = records.iter().filter(|r| r.end_s.is_some()).collect();
    let pairs = || done.iter().filter(|r| r.d_opt_m > 0.0).map(|r| (r.d_exec_m, r.d_opt_m));
    (done.len(), mean_ratio(pairs()), ratio_of_sums(pairs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial_id: String,
    pub planner: String,
    pub fleet: usize,
    pub seed: u64,
    pub tasks_completed: usize,
    pub poe_task: Option<f64>,
    pub poe_avg: Option<f64>,
    pub collisions: usize,
    pub stalls: usize,
    pub sim_s: f64,
    pub wall_s: f64,
}

pub const TASK_HEADER: [&str; 11] =
    ["trial_id", "planner", "fleet", "seed", "task_id", "agent", "start_s", "end_s", "d_opt_m", "d_exec_m", "poe_i"];
pub const TRIAL_HEADER: [&str; 11] = [
    "trial_id",
    "planner",
    "fleet",
    "seed",
    "tasks_completed",
    "poe_task",
    "poe_avg",
    "collisions",
    "stalls",
    "sim_s",
    "wall_s",
];
pub const COLLISION_HEADER: [&str; 6] = ["trial_id", "time_s", "kind", "agent_a", "agent_b", "site"];

impl TaskRecord {
    fn fields(&self) -> [String; 11] {
        [
            self.trial_id.clone(),
            self.planner.clone(),
            self.fleet.to_string(),
            self.seed.to_string(),
            self.task_id.to_string(),
            self.agent.clone(),
            fmt6(self.start_s),
            self.end_s.map(fmt6).unwrap_or_default(),
            fmt6(self.d_opt_m),
            fmt6(self.d_exec_m),
            self.poe_i.map(fmt6).unwrap_or_default(),
        ]
    }
}

impl TrialRow {
    pub fn fields(&self) -> [String; 11] {
        [
            self.trial_id.clone(),
            self.planner.clone(),
            self.fleet.to_string(),
            self.seed.to_string(),
            self.tasks_completed.to_string(),
            fmt_opt(self.poe_task),
            fmt_opt(self.poe_avg),
            self.collisions.to_string(),
            self.stalls.to_string(),
            fmt6(self.sim_s),
            fmt6(self.wall_s),
        ]
    }
}

pub fn write_task_csv<W: Write>(out: W, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TASK_HEADER)?;
    for r in results {
        for rec in r.task_records() {
            w.write_record(rec.fields())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_trial_csv<W: Write>(out: W, rows: &[TrialRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_collision_csv<W: Write>(out: W, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLLISION_HEADER)?;
    for r in results {
        for c in &r.collisions {
            w.write_record([
                r.trial_id.clone(),
                fmt6(c.time),
                c.kind.to_string(),
                c.agents.0.clone(),
                c.agents.1.clone(),
                c.site.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse(format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>())));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad {name} field {:?}", rec.get(i))))
}

fn opt_field(rec: &csv::StringRecord, i: usize, name: &str) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") | Some("NA") => Ok(None),
        _ => field(rec, i, name).map(Some),
    }
}

pub fn read_task_csv<R: Read>(input: R) -> Result<Vec<TaskRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &TASK_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(TaskRecord {
                trial_id: field(&rec, 0, "trial_id")?,
                planner: field(&rec, 1, "planner")?,
                fleet: field(&rec, 2, "fleet")?,
                seed: field(&rec, 3, "seed")?,
                task_id: field(&rec, 4, "task_id")?,
                agent: field(&rec, 5, "agent")?,
                start_s: field(&rec, 6, "start_s")?,
                end_s: opt_field(&rec, 7, "end_s")?,
                d_opt_m: field(&rec, 8, "d_opt_m")?,
                d_exec_m: field(&rec, 9, "d_exec_m")?,
                poe_i: opt_field(&rec, 10, "poe_i")?,
            })
        })
        .collect()
}

pub fn read_trial_csv<R: Read>(input: R) -> Result<Vec<TrialRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    check_header(&mut rdr, &TRIAL_HEADER)?;
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(TrialRow {
                trial_id: field(&rec, 0, "trial_id")?,
                planner: field(&rec, 1, "planner")?,
                fleet: field(&rec, 2, "fleet")?,
                seed: field(&rec, 3, "seed")?,
                tasks_completed: field(&rec, 4, "tasks_completed")?,
                poe_task: opt_field(&rec, 5, "poe_task")?,
                poe_avg: opt_field(&rec, 6, "poe_avg")?,
                collisions: field(&rec, 7, "collisions")?,
                stalls: field(&rec, 8, "stalls")?,
                sim_s: field(&rec, 9, "sim_s")?,
                wall_s: field(&rec, 10, "wall_s")?,
            })
        })
        .collect()
}

/// Position of a planner in the standard grid order; unknown names sort last.
pub fn planner_rank(planner: &str) -> usize {
    let all = PlannerKind::all();
    planner.parse::<PlannerKind>().ok().and_then(|k| all.iter().position(|x| *x == k)).unwrap_or(all.len())
}

pub fn sort_rows(rows: &mut [TrialRow]) {
    rows.sort_by(|a, b| {
        (planner_rank(&a.planner), &a.planner, a.fleet, a.seed).cmp(&(planner_rank(&b.planner), &b.planner, b.fleet, b.seed))
    });
}

/// One row per (planner, fleet, seed) trial.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<TrialRow>,
}

impl SweepSummary {
    pub fn new(mut rows: Vec<TrialRow>) -> Result<Self> {
        sort_rows(&mut rows);
        let mut keys = BTreeSet::new();
        for r in &rows {
            if !keys.insert((r.planner.clone(), r.fleet, r.seed)) {
                return Err(Error::Audit(format!("duplicate trial {}", r.trial_id)));
            }
        }
        Ok(SweepSummary { rows })
    }

    pub fn fleets(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.fleet).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn planners(&self) -> Vec<String> {
        let mut p: Vec<String> = self.rows.iter().map(|r| r.planner.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        p.sort_by_key(|x| (planner_rank(x), x.clone()));
        p
    }

    /// Relative throughput of every non-naive planner for each fleet size:
    /// its tasks summed over the seeds that also have a naive trial, as a
    /// percentage of the naive tasks over the same seeds.
    pub fn relative_throughput_table(&self) -> ThroughputTable {
        let naive: BTreeMap<(usize, u64), usize> = self
            .rows
            .iter()
            .filter(|r| r.planner == "naive")
            .map(|r| ((r.fleet, r.seed), r.tasks_completed))
            .collect();
        let fleets = self.fleets();
        let rows = self
            .planners()
            .into_iter()
            .filter(|p| p != "naive")
            .map(|p| {
                let cells = fleets
                    .iter()
                    .map(|&f| {
                        let (mut mine, mut base) = (0, 0);
                        for r in self.rows.iter().filter(|r| r.planner == p && r.fleet == f) {
                            if let Some(&n) = naive.get(&(f, r.seed)) {
                                mine += r.tasks_completed;
                                base += n;
                            }
                        }
                        relative_throughput(mine, base)
                    })
                    .collect();
                (p, cells)
            })
            .collect();
        ThroughputTable { fleets, rows }
    }

    /// Mean tasks completed over seeds, per (planner, fleet).
    pub fn mean_throughput(&self) -> BTreeMap<(String, usize), f64> {
        let mut acc: BTreeMap<(String, usize), (usize, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry((r.planner.clone(), r.fleet)).or_default();
            e.0 += r.tasks_completed;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s as f64 / n as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputTable {
    pub fleets: Vec<usize>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl ThroughputTable {
    pub fn get(&self, planner: &str, fleet: usize) -> Option<f64> {
        let col = self.fleets.iter().position(|&f| f == fleet)?;
        self.rows.iter().find(|(p, _)| p == planner).and_then(|(_, cells)| cells[col])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["planner".to_string()];
        header.extend(self.fleets.iter().map(|f| format!("fleet_{f}")));
        w.write_record(&header)?;
        for (p, cells) in &self.rows {
            let mut rec = vec![p.clone()];
            rec.extend(cells.iter().map(|c| fmt_opt(*c)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width text rendering, two decimals.
    pub fn render(&self) -> String {
        let mut s = format!("{:<16}", "planner");
        for f in &self.fleets {
            s.push_str(&format!("{:>9}", format!("{f} rob")));
        }
        s.push('\n');
        for (p, cells) in &self.rows {
            s.push_str(&format!("{p:<16}"));
            for c in cells {
                s.push_str(&format!("{:>9}", c.map_or("NA".into(), |x| format!("{x:.2}"))));
            }
            s.push('\n');
        }
        s
    }
}
