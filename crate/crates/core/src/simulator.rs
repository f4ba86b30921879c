//! Event-driven lifelong simulation.
//!
//! Robots drive along their executable plans at `min(speed_limit, speed)`.
//! Events are node arrivals and a periodic fallback tick; everything that
//! happens at one timestamp is handled as a batch: arrivals, task completion
//! and regeneration, at most one planning instance, departures, and finally a
//! collision scan over the resulting state.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::{assign_task, empty_graph_route, EdgeProgress, Fleet, FleetConfig, Task, DEFAULT_MAX_REDRAWS};
use crate::mapgen::{generate_polytunnel, generate_reference_scale, PolytunnelParams};
use crate::metrics::TrialResult;
use crate::planners::{make_planner, Planner, PlannerConfig, PlannerKind, DEFAULT_PBS_MAX_ATTEMPTS, DEFAULT_PBS_WINDOW_S};
use crate::topomap::{edge_traversal_time, load_map, NodeId, NodeIx, TopoMap};

pub const DEFAULT_FALLBACK_PERIOD_S: f64 = 5.0;
/// Idle fallback periods before a stall is logged.
pub const STALL_PERIODS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSource {
    File(PathBuf),
    Preset(String),
    Polytunnel(PolytunnelParams),
}

impl MapSource {
    pub fn reference() -> Self {
        MapSource::Preset("reference".into())
    }

    pub fn load(&self) -> Result<TopoMap> {
        match self {
            MapSource::File(path) => load_map(&std::fs::read_to_string(path)?),
            MapSource::Preset(name) if name == "reference" => Ok(generate_reference_scale()),
            MapSource::Preset(name) => Err(Error::Config(format!("unknown map preset {name:?}"))),
            MapSource::Polytunnel(p) => generate_polytunnel(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub map: MapSource,
    pub fleet: FleetConfig,
    pub planner: PlannerKind,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fallback")]
    pub fallback_period_s: f64,
    #[serde(default = "default_window")]
    pub pbs_window_s: f64,
    #[serde(default = "default_attempts")]
    pub pbs_max_attempts: usize,
    /// Defaults to on for every planner except naive.
    #[serde(default)]
    pub collision_check: Option<bool>,
    #[serde(default = "default_strict")]
    pub strict: bool,
}

fn default_fallback() -> f64 {
    DEFAULT_FALLBACK_PERIOD_S
}

fn default_window() -> f64 {
    DEFAULT_PBS_WINDOW_S
}

fn default_attempts() -> usize {
    DEFAULT_PBS_MAX_ATTEMPTS
}

fn default_strict() -> bool {
    true
}

impl TrialConfig {
    pub fn new(map: MapSource, fleet: FleetConfig, planner: PlannerKind, duration_s: f64, seed: u64) -> Self {
        TrialConfig {
            map,
            fleet,
            planner,
            duration_s,
            seed,
            fallback_period_s: DEFAULT_FALLBACK_PERIOD_S,
            pbs_window_s: DEFAULT_PBS_WINDOW_S,
            pbs_max_attempts: DEFAULT_PBS_MAX_ATTEMPTS,
            collision_check: None,
            strict: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::Config("duration_s must be positive".into()));
        }
        if !(self.fallback_period_s > 0.0) || !self.fallback_period_s.is_finite() {
            return Err(Error::Config("fallback_period_s must be positive".into()));
        }
        Ok(())
    }

    pub fn collision_check_enabled(&self) -> bool {
        self.collision_check.unwrap_or(!self.planner.is_naive())
    }

    /// The same config with every default written out.
    pub fn resolved(&self) -> TrialConfig {
        TrialConfig { collision_check: Some(self.collision_check_enabled()), ..self.clone() }
    }

    fn planner_config(&self) -> PlannerConfig {
        PlannerConfig { pbs_max_attempts: self.pbs_max_attempts, pbs_window_s: self.pbs_window_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    Node,
    Edge,
    Crossing,
}

impl fmt::Display for CollisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollisionKind::Node => "node",
            CollisionKind::Edge => "edge",
            CollisionKind::Crossing => "crossing",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionSite {
    Node(NodeId),
    Edge(NodeId, NodeId),
}

impl fmt::Display for CollisionSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollisionSite::Node(v) => write!(f, "{v}"),
            CollisionSite::Edge(a, b) => write!(f, "{a}->{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub time: f64,
    pub kind: CollisionKind,
    pub agents: (String, String),
    pub site: CollisionSite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Arrival,
    Tick,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    agent: usize,
    seq: u64,
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.agent.cmp(&self.agent))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

/// A contact currently in progress; logged once when it starts.
type Contact = (CollisionKind, usize, usize, CollisionSite);

pub struct SimState<'m> {
    map: &'m TopoMap,
    pub clock: f64,
    pub fleet: Fleet,
    events: BinaryHeap<Event>,
    seq: u64,
    rng: ChaCha8Rng,
    planner: Box<dyn Planner>,
    fallback_period: f64,
    collision_check: bool,
    pub tasks: Vec<Task>,
    /// Index into `tasks` of each agent's open task.
    open_task: Vec<Option<usize>>,
    departed_at: Vec<f64>,
    pub collisions: Vec<CollisionEvent>,
    contacts: BTreeSet<Contact>,
    pub stalls: usize,
    last_activity: f64,
    pub planning_instances: usize,
}

impl<'m> SimState<'m> {
    pub fn new(map: &'m TopoMap, config: &TrialConfig) -> Result<Self> {
        config.validate()?;
        let fleet = config.fleet.build(map)?;
        let n = fleet.len();
        let mut state = SimState {
            map,
            clock: 0.0,
            fleet,
            events: BinaryHeap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            planner: make_planner(config.planner, &config.planner_config())?,
            fallback_period: config.fallback_period_s,
            collision_check: config.collision_check_enabled(),
            tasks: Vec::new(),
            open_task: vec![None; n],
            departed_at: vec![0.0; n],
            collisions: Vec::new(),
            contacts: BTreeSet::new(),
            stalls: 0,
            last_activity: 0.0,
            planning_instances: 0,
        };
        state.push(config.fallback_period_s, EventKind::Tick, 0);
        Ok(state)
    }

    fn push(&mut self, time: f64, kind: EventKind, agent: usize) {
        self.seq += 1;
        self.events.push(Event { time, kind, agent, seq: self.seq });
    }

    pub fn map(&self) -> &TopoMap {
        self.map
    }

    /// Brings every in-transit agent's edge progress up to `until`.
    pub fn advance_motion(&mut self, until: f64) {
        debug_assert!(until >= self.clock);
        for (i, a) in self.fleet.agents.iter_mut().enumerate() {
            if let Some(p) = a.edge_progress.as_mut() {
                let v = self.map.edge(p.edge).speed_limit.min(a.nominal_speed);
                p.travelled = (v * (until - self.departed_at[i])).min(p.length);
            }
        }
        self.clock = until;
    }

    /// Draws a fresh goal for `agent` among the nodes no robot stands on.
    /// Returns the task index, or `None` when every draw was unusable.
    pub fn spawn_task(&mut self, agent: usize) -> Result<Option<usize>> {
        let mut taken = vec![false; self.map.node_count()];
        for a in &self.fleet.agents {
            for v in a.position_nodes() {
                taken[v] = true;
            }
        }
        let here = self.fleet.agents[agent].next_node();
        let candidates: Vec<NodeIx> = (0..self.map.node_count()).filter(|&v| !taken[v] && v != here).collect();
        if candidates.is_empty() {
            return Ok(None);
        }
        let footprint = self.fleet.agents[agent].footprint;
        for _ in 0..DEFAULT_MAX_REDRAWS {
            let goal = candidates[self.rng.random_range(0..candidates.len())];
            if empty_graph_route(self.map, footprint, here, goal).is_none() {
                continue;
            }
            let id = self.tasks.len() as u64;
            if let Some(task) = assign_task(&mut self.fleet.agents[agent], id, goal, self.clock, self.map)? {
                self.tasks.push(task);
                self.open_task[agent] = Some(self.tasks.len() - 1);
                return Ok(Some(self.tasks.len() - 1));
            }
        }
        Ok(None)
    }

    pub fn planning_instance(&mut self) -> Result<()> {
        self.advance_motion(self.clock);
        self.planner.find_routes(self.map, &mut self.fleet, self.clock)?;
        self.planning_instances += 1;
        for a in &self.fleet.agents {
            if !a.route.is_empty() && a.route.nodes[0] != a.next_node() {
                return Err(Error::Planner(format!("route of {} does not start at its next node", a.id)));
            }
        }
        Ok(())
    }

    fn depart(&mut self) -> Result<()> {
        for i in 0..self.fleet.len() {
            let a = &self.fleet.agents[i];
            if a.is_moving() || a.executable_plan().len() < 2 {
                continue;
            }
            let (from, to) = (a.route.nodes[0], a.route.nodes[1]);
            let e = self
                .map
                .edge_between(from, to)
                .ok_or_else(|| Error::BrokenRoute(format!("{} -> {}", self.map.node_id(from), self.map.node_id(to))))?;
            let edge = self.map.edge(e);
            let dt = edge_traversal_time(edge, a.nominal_speed)?;
            let a = &mut self.fleet.agents[i];
            a.edge_progress = Some(EdgeProgress { edge: e, from, to, length: edge.length, travelled: 0.0 });
            a.pop_route_front();
            self.departed_at[i] = self.clock;
            self.last_activity = self.clock;
            self.push(self.clock + dt, EventKind::Arrival, i);
        }
        Ok(())
    }

    /// Returns whether the agent's plan ran out here.
    fn arrive(&mut self, i: usize) -> Result<bool> {
        let a = &mut self.fleet.agents[i];
        let p = a.edge_progress.take().ok_or_else(|| Error::Planner(format!("arrival of stationary {}", a.id)))?;
        a.current_node = p.to;
        if let Some(t) = self.open_task[i] {
            self.tasks[t].d_exec += p.length;
        }
        self.last_activity = self.clock;
        if a.goal == Some(p.to) {
            a.goal = None;
            a.clear_route();
            a.route_issued = false;
            if let Some(t) = self.open_task[i].take() {
                self.tasks[t].end_time = Some(self.clock);
            }
            self.spawn_task(i)?;
            return Ok(true);
        }
        Ok(a.executable_plan().len() < 2)
    }

    /// Contacts in the current state: two robots on one node, on one
    /// directed edge, or on the two directions of one edge.
    pub fn detect_collisions(&self) -> Vec<CollisionEvent> {
        self.current_contacts()
            .into_iter()
            .map(|(kind, a, b, site)| CollisionEvent {
                time: self.clock,
                kind,
                agents: (self.fleet.agents[a].id.clone(), self.fleet.agents[b].id.clone()),
                site,
            })
            .collect()
    }

    fn current_contacts(&self) -> BTreeSet<Contact> {
        let mut out = BTreeSet::new();
        let agents = &self.fleet.agents;
        let id = |v: NodeIx| self.map.node_id(v).clone();
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                match (agents[i].edge_progress, agents[j].edge_progress) {
                    (None, None) if agents[i].current_node == agents[j].current_node => {
                        out.insert((CollisionKind::Node, i, j, CollisionSite::Node(id(agents[i].current_node))));
                    }
                    (Some(p), Some(q)) if p.edge == q.edge => {
                        out.insert((CollisionKind::Edge, i, j, CollisionSite::Edge(id(p.from), id(p.to))));
                    }
                    (Some(p), Some(q)) if p.from == q.to && p.to == q.from => {
                        let (u, v) = (p.from.min(p.to), p.from.max(p.to));
                        out.insert((CollisionKind::Crossing, i, j, CollisionSite::Edge(id(u), id(v))));
                    }
                    _ => {}
                }
            }
        }
        out
    }

    fn log_collisions(&mut self) {
        let now = self.current_contacts();
        for c in now.difference(&self.contacts) {
            self.collisions.push(CollisionEvent {
                time: self.clock,
                kind: c.0,
                agents: (self.fleet.agents[c.1].id.clone(), self.fleet.agents[c.2].id.clone()),
                site: c.3.clone(),
            });
        }
        self.contacts = now;
    }

    fn needs_fallback(&self) -> bool {
        self.fleet
            .agents
            .iter()
            .any(|a| a.goal.is_none() || (!a.is_moving() && a.executable_plan().len() < 2))
    }

    fn step(&mut self, batch: &[Event], force_plan: bool) -> Result<()> {
        let mut plan = force_plan;
        let mut tick = false;
        for ev in batch {
            match ev.kind {
                EventKind::Arrival => plan |= self.arrive(ev.agent)?,
                EventKind::Tick => tick = true,
            }
        }
        if tick {
            self.push(self.clock + self.fallback_period, EventKind::Tick, 0);
            if self.clock - self.last_activity >= STALL_PERIODS * self.fallback_period - 1e-9 {
                self.stalls += 1;
                self.last_activity = self.clock;
            }
            if self.needs_fallback() {
                for i in 0..self.fleet.len() {
                    if self.fleet.agents[i].goal.is_none() {
                        self.spawn_task(i)?;
                    }
                }
                plan = true;
            }
        }
        if plan {
            self.planning_instance()?;
        }
        self.depart()?;
        if self.collision_check {
            self.log_collisions();
        }
        Ok(())
    }

    /// Processes every event up to and including `until`.
    pub fn run_until(&mut self, until: f64) -> Result<()> {
        let mut batch = Vec::new();
        while let Some(&next) = self.events.peek() {
            if next.time > until {
                break;
            }
            batch.clear();
            while let Some(&ev) = self.events.peek() {
                if ev.time != next.time {
                    break;
                }
                batch.push(self.events.pop().unwrap());
            }
            self.advance_motion(next.time);
            self.step(&batch, false)?;
        }
        if until > self.clock {
            self.advance_motion(until);
        }
        Ok(())
    }

    /// Gives every agent its first task and runs the first planning instance.
    pub fn start(&mut self) -> Result<()> {
        for i in 0..self.fleet.len() {
            self.spawn_task(i)?;
        }
        self.step(&[], true)
    }
}

pub fn run_trial(config: &TrialConfig) -> Result<TrialResult> {
    let map = config.map.load()?;
    run_trial_on(&map, config)
}

/// Runs one trial on an already loaded map.
pub fn run_trial_on(map: &TopoMap, config: &TrialConfig) -> Result<TrialResult> {
    let started = Instant::now();
    let mut sim = SimState::new(map, config)?;
    sim.start()?;
    sim.run_until(config.duration_s)?;
    let wall = started.elapsed().as_secs_f64();
    let failed = config.strict && !sim.collisions.is_empty();
    Ok(TrialResult::new(
        config.resolved(),
        sim.fleet.len(),
        sim.tasks,
        sim.collisions,
        sim.stalls,
        wall,
        sim.planning_instances,
        failed,
    ))
}
