// End-to-end trials: reproducibility, output files and the metric audit.

use std::collections::BTreeSet;

use mrpp_core::mapgen::PolytunnelParams;
use mrpp_core::metrics::write_task_csv;
use mrpp_core::planners::fragment::FpVariant;
use mrpp_core::sweep::{write_sweep, TASKS_CSV, TRIALS_CSV};
use mrpp_core::topomap::{route_search, Weight};
use mrpp_core::{report, run_sweep, run_trial, FleetConfig, MapSource, PlannerKind, SweepSpec, TrialConfig};
use proptest::prelude::*;

fn small_map() -> MapSource {
    MapSource::Polytunnel(PolytunnelParams { n_tunnels: 2, rows_per_tunnel: 4, nodes_per_row: 3, ..Default::default() })
}

fn task_csv(cfg: &TrialConfig) -> Vec<u8> {
    let result = run_trial(cfg).unwrap();
    let mut out = Vec::new();
    write_task_csv(&mut out, &[result]).unwrap();
    out
}

fn small_spec(seeds: Vec<u64>) -> SweepSpec {
    SweepSpec {
        planners: vec![PlannerKind::Naive, PlannerKind::Pbs, PlannerKind::Fp(FpVariant::SpaceOnly)],
        fleet_sizes: vec![2, 4],
        seeds,
        duration_s: 300.0,
        map: small_map(),
        base: None,
    }
}

#[test]
fn repeated_trials_write_identical_logs() {
    for planner in PlannerKind::all() {
        let cfg = TrialConfig::new(small_map(), FleetConfig::homogeneous(4), planner, 400.0, 17);
        let first = task_csv(&cfg);
        assert!(first.len() > 200, "{planner}");
        assert_eq!(first, task_csv(&cfg), "{planner}");
    }
    let a = TrialConfig::new(small_map(), FleetConfig::homogeneous(4), PlannerKind::Pbs, 400.0, 1);
    let b = TrialConfig { seed: 2, ..a.clone() };
    assert_ne!(task_csv(&a), task_csv(&b));
}

#[test]
fn parallel_sweep_equals_serial_sweep() {
    let spec = small_spec(vec![1, 2, 3]);
    let serial = run_sweep(&spec, Some(1)).unwrap();
    let parallel = run_sweep(&spec, Some(4)).unwrap();
    assert!(serial.failures.is_empty());
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    write_sweep(dirs[0].path(), &serial, false).unwrap();
    write_sweep(dirs[1].path(), &parallel, false).unwrap();
    for name in [TASKS_CSV, TRIALS_CSV] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn report_rebuilds_the_stored_summary() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_sweep(&small_spec(vec![5, 6]), None).unwrap();
    let summary = write_sweep(dir.path(), &outcome, false).unwrap();
    let rep = report(dir.path()).unwrap();
    assert!(rep.mismatches.is_empty(), "{:?}", rep.mismatches);
    assert_eq!(rep.summary, summary);
    assert!(rep.table.get("naive", 2).is_none());
    assert!(rep.table.get("pbs", 4).is_some_and(|x| x > 0.0));

    // a tampered per-trial file is caught
    let path = dir.path().join(TRIALS_CSV);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[4] = (cells[4].parse::<usize>().unwrap() + 1).to_string();
    lines[1] = cells.join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let rep = report(dir.path()).unwrap();
    assert_eq!(rep.mismatches.len(), 1, "{:?}", rep.mismatches);
}

#[test]
fn report_on_a_missing_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report(&dir.path().join("nope")), Err(mrpp_core::Error::Io(_))));
}

#[test]
fn config_round_trips_through_json() {
    let cfg = TrialConfig::new(small_map(), FleetConfig::homogeneous(3), PlannerKind::Fp(FpVariant::SpaceTime), 60.0, 4);
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(serde_json::from_str::<TrialConfig>(&text).unwrap(), cfg);
    let minimal: TrialConfig =
        serde_json::from_str(r#"{"map":{"preset":"reference"},"fleet":{"count":5},"planner":"pp:name","duration_s":10}"#).unwrap();
    assert_eq!(minimal.seed, 0);
    assert!(minimal.collision_check_enabled());
    assert!(serde_json::from_str::<TrialConfig>(r#"{"map":{"preset":"reference"},"fleet":{"count":5},"planner":"cbs","duration_s":10}"#).is_err());
    assert!(serde_json::from_str::<TrialConfig>(r#"{"map":{"preset":"reference"},"fleet":{"count":5},"planner":"pbs","duration_s":10,"speed":2}"#).is_err());
}

#[test]
fn logged_optimum_is_the_empty_map_distance() {
    let cfg = TrialConfig::new(small_map(), FleetConfig::homogeneous(3), PlannerKind::Pp(mrpp_core::baseplanner::HeuristicKind::Name), 300.0, 9);
    let map = cfg.map.load().unwrap();
    let result = run_trial(&cfg).unwrap();
    assert!(result.tasks.len() > 5);
    for t in &result.tasks {
        let r = route_search(&map, &t.start_node, &t.goal, Weight::Distance).unwrap().unwrap();
        assert_eq!(mrpp_core::topomap::route_distance(&map, &r).unwrap(), t.d_opt);
    }
    // each robot holds at most one open task, and ids are dense
    let open: Vec<_> = result.tasks.iter().filter(|t| t.end_time.is_none()).map(|t| t.agent.clone()).collect();
    assert_eq!(open.iter().collect::<BTreeSet<_>>().len(), open.len());
    assert!(result.tasks.iter().enumerate().all(|(i, t)| t.id == i as u64));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn executed_distance_never_beats_the_optimum(seed in 0u64..10_000, planner in 0usize..7, fleet in 1usize..6) {
        let planner = PlannerKind::all()[planner];
        let cfg = TrialConfig::new(small_map(), FleetConfig::homogeneous(fleet), planner, 200.0, seed);
        let result = run_trial(&cfg).unwrap();
        for t in result.tasks.iter().filter(|t| t.end_time.is_some()) {
            prop_assert!(t.d_exec >= t.d_opt - 1e-9, "{:?}", t);
            prop_assert!(t.end_time.unwrap() >= t.start_time);
        }
        if !planner.is_naive() {
            prop_assert!(result.collisions.is_empty(), "{:?}", result.collisions);
        }
        if let Some(p) = result.poe_avg() {
            prop_assert!(p >= 1.0 - 1e-9);
        }
    }
}
