//! Python bindings: maps, route search, trials, sweeps and the metric helpers.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mrpp_core::mapgen::{generate_polytunnel, generate_reference_scale, PolytunnelParams};
use mrpp_core::metrics::{self, TrialRow};
use mrpp_core::sweep::write_sweep;
use mrpp_core::topomap::{self, Weight};
use mrpp_core::{Error, FleetConfig, MapSource, NodeId, PlannerKind, SweepSpec, TrialConfig};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Csv(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "TopoMap", module = "mrpp", frozen)]
struct PyTopoMap {
    inner: topomap::TopoMap,
}

#[pymethods]
impl PyTopoMap {
    /// Parses topomap JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyTopoMap { inner: topomap::load_map(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| py_err(e.into()))?;
        Self::from_json(&text)
    }

    /// The reference farm used by the experiments.
    #[staticmethod]
    fn reference() -> Self {
        PyTopoMap { inner: generate_reference_scale() }
    }

    #[staticmethod]
    #[pyo3(signature = (tunnels, rows, nodes_per_row, row_spacing=None, node_spacing=None, bidirectional_rows=true))]
    fn polytunnel(
        tunnels: usize,
        rows: usize,
        nodes_per_row: usize,
        row_spacing: Option<f64>,
        node_spacing: Option<f64>,
        bidirectional_rows: bool,
    ) -> PyResult<Self> {
        let d = PolytunnelParams::default();
        let params = PolytunnelParams {
            n_tunnels: tunnels,
            rows_per_tunnel: rows,
            nodes_per_row,
            row_spacing: row_spacing.unwrap_or(d.row_spacing),
            node_spacing: node_spacing.unwrap_or(d.node_spacing),
            bidirectional_rows,
            ..d
        };
        Ok(PyTopoMap { inner: generate_polytunnel(&params).map_err(py_err)? })
    }

    fn to_json(&self) -> String {
        topomap::save_map(&self.inner)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    /// Node ids in index order.
    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes().iter().map(|n| n.id.0.clone()).collect()
    }

    /// Shortest route as a list of node ids, or None when the goal is
    /// unreachable. With `speed` the cost is travel time, otherwise distance.
    #[pyo3(signature = (start, goal, speed=None))]
    fn route(&self, start: &str, goal: &str, speed: Option<f64>) -> PyResult<Option<Vec<String>>> {
        let weight = speed.map_or(Weight::Distance, |agent_speed| Weight::Time { agent_speed });
        let route = topomap::route_search(&self.inner, &NodeId::new(start), &NodeId::new(goal), weight).map_err(py_err)?;
        Ok(route.map(|r| r.ids(&self.inner).into_iter().map(|id| id.0.clone()).collect()))
    }

    /// Length in metres of a route given as node ids.
    fn route_length(&self, ids: Vec<String>) -> PyResult<f64> {
        let nodes = ids
            .iter()
            .map(|id| self.inner.index_of(&NodeId::new(id.as_str())).ok_or_else(|| py_err(Error::UnknownNode(id.clone()))))
            .collect::<PyResult<Vec<_>>>()?;
        topomap::route_distance(&self.inner, &topomap::Route::new(nodes)).map_err(py_err)
    }

    fn articulation_points(&self) -> Vec<String> {
        let mut cut = topomap::articulation_points(&topomap::support_neighbours(&self.inner));
        cut.sort_unstable();
        cut.into_iter().map(|v| self.inner.node_id(v).0.clone()).collect()
    }

    fn corridor_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = topomap::corridor_stats(&self.inner);
        let d = PyDict::new(py);
        d.set_item("frac_deg_le_2", s.frac_deg_le_2)?;
        d.set_item("articulation_count", s.articulation_count)?;
        d.set_item("node_count", s.node_count)?;
        d.set_item("edge_count", s.edge_count)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("TopoMap({:?}, nodes={}, edges={})", self.inner.name(), self.inner.node_count(), self.inner.edge_count())
    }
}

fn row_dict<'py>(py: Python<'py>, r: &TrialRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("trial_id", &r.trial_id)?;
    d.set_item("planner", &r.planner)?;
    d.set_item("fleet", r.fleet)?;
    d.set_item("seed", r.seed)?;
    d.set_item("tasks_completed", r.tasks_completed)?;
    d.set_item("poe_task", r.poe_task)?;
    d.set_item("poe_avg", r.poe_avg)?;
    d.set_item("collisions", r.collisions)?;
    d.set_item("stalls", r.stalls)?;
    d.set_item("sim_s", r.sim_s)?;
    d.set_item("wall_s", r.wall_s)?;
    Ok(d)
}

#[pyclass(name = "TrialResult", module = "mrpp", frozen)]
struct PyTrialResult {
    inner: metrics::TrialResult,
}

#[pymethods]
impl PyTrialResult {
    #[getter]
    fn trial_id(&self) -> &str {
        &self.inner.trial_id
    }

    #[getter]
    fn tasks_completed(&self) -> usize {
        self.inner.tasks_completed
    }

    #[getter]
    fn poe_task(&self) -> Option<f64> {
        self.inner.poe_task()
    }

    #[getter]
    fn poe_avg(&self) -> Option<f64> {
        self.inner.poe_avg()
    }

    #[getter]
    fn collisions(&self) -> usize {
        self.inner.collisions.len()
    }

    #[getter]
    fn stalls(&self) -> usize {
        self.inner.stalls
    }

    /// A collision was logged while the strict check was on.
    #[getter]
    fn failed(&self) -> bool {
        self.inner.failed
    }

    /// The per-trial row exactly as written to the CSV (wall time as 0).
    fn row<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        row_dict(py, &self.inner.row(false))
    }

    /// One dict per task, open tasks included.
    fn tasks<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .tasks
            .iter()
            .map(|t| {
                let d = PyDict::new(py);
                d.set_item("id", t.id)?;
                d.set_item("agent", &t.agent)?;
                d.set_item("start_node", &t.start_node.0)?;
                d.set_item("goal", &t.goal.0)?;
                d.set_item("start_time", t.start_time)?;
                d.set_item("end_time", t.end_time)?;
                d.set_item("d_opt", t.d_opt)?;
                d.set_item("d_exec", t.d_exec)?;
                Ok(d)
            })
            .collect()
    }

    fn tasks_csv(&self) -> PyResult<String> {
        let mut out = Vec::new();
        metrics::write_task_csv(&mut out, std::slice::from_ref(&self.inner)).map_err(py_err)?;
        Ok(String::from_utf8(out).expect("csv output is utf-8"))
    }

    fn __repr__(&self) -> String {
        format!("TrialResult({:?}, tasks_completed={})", self.inner.trial_id, self.inner.tasks_completed)
    }
}

fn parse_planner(name: &str) -> PyResult<PlannerKind> {
    name.parse().map_err(py_err)
}

/// Runs one trial. `map` defaults to the reference farm.
#[pyfunction]
#[pyo3(signature = (planner, fleet, seed=0, duration_s=3600.0, map=None))]
fn run_trial(
    py: Python<'_>,
    planner: &str,
    fleet: usize,
    seed: u64,
    duration_s: f64,
    map: Option<&PyTopoMap>,
) -> PyResult<PyTrialResult> {
    let cfg = TrialConfig::new(MapSource::reference(), FleetConfig::homogeneous(fleet), parse_planner(planner)?, duration_s, seed);
    cfg.validate().map_err(py_err)?;
    let owned;
    let map = match map {
        Some(m) => &m.inner,
        None => {
            owned = generate_reference_scale();
            &owned
        }
    };
    let inner = py.detach(|| mrpp_core::run_trial_on(map, &cfg)).map_err(py_err)?;
    Ok(PyTrialResult { inner })
}

/// Runs one trial from a JSON trial config.
#[pyfunction]
fn run_trial_json(py: Python<'_>, config: &str) -> PyResult<PyTrialResult> {
    let cfg: TrialConfig = serde_json::from_str(config).map_err(json_err)?;
    cfg.validate().map_err(py_err)?;
    let inner = py.detach(|| mrpp_core::run_trial(&cfg)).map_err(py_err)?;
    Ok(PyTrialResult { inner })
}

/// Runs a JSON sweep spec, writes its CSVs to `out_dir` and returns the
/// per-trial rows.
#[pyfunction]
#[pyo3(signature = (spec, out_dir, threads=None))]
fn run_sweep<'py>(py: Python<'py>, spec: &str, out_dir: PathBuf, threads: Option<usize>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec: SweepSpec = serde_json::from_str(spec).map_err(json_err)?;
    let summary = py
        .detach(|| -> mrpp_core::Result<_> {
            let outcome = mrpp_core::run_sweep(&spec, threads)?;
            write_sweep(&out_dir, &outcome, false)
        })
        .map_err(py_err)?;
    summary.rows.iter().map(|r| row_dict(py, r)).collect()
}

/// Rebuilds a sweep directory's summary from its task log. Returns the rows,
/// the relative-throughput table as text and any audit mismatches.
#[pyfunction]
fn report<'py>(py: Python<'py>, dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let rep = mrpp_core::report(&dir).map_err(py_err)?;
    let d = PyDict::new(py);
    let rows = rep.summary.rows.iter().map(|r| row_dict(py, r)).collect::<PyResult<Vec<_>>>()?;
    d.set_item("rows", rows)?;
    d.set_item("table", rep.table.render())?;
    d.set_item("mismatches", rep.mismatches)?;
    Ok(d)
}

/// Path optimality of one task: executed over optimal distance.
#[pyfunction]
fn poe_i(d_exec: f64, d_opt: f64) -> Option<f64> {
    metrics::poe_i(d_exec, d_opt)
}

/// Planner throughput as a percentage of the matched naive run.
#[pyfunction]
fn relative_throughput(planner_tasks: usize, naive_tasks: usize) -> Option<f64> {
    metrics::relative_throughput(planner_tasks, naive_tasks)
}

#[pyfunction]
fn planners() -> Vec<String> {
    PlannerKind::all().iter().map(|p| p.to_string()).collect()
}

#[pymodule]
fn mrpp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTopoMap>()?;
    m.add_class::<PyTrialResult>()?;
    m.add_function(wrap_pyfunction!(run_trial, m)?)?;
    m.add_function(wrap_pyfunction!(run_trial_json, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(poe_i, m)?)?;
    m.add_function(wrap_pyfunction!(relative_throughput, m)?)?;
    m.add_function(wrap_pyfunction!(planners, m)?)?;
    Ok(())
}
