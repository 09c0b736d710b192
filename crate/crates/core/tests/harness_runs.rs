use embodied_core::harness::{compare, default_configs, run, BackendKind, HarnessError, RunConfig};
use embodied_core::roschain::CommandRegistry;
use embodied_core::scenarios::ScenarioId;

#[test]
fn concurrent_mode_matches_deterministic_tr() {
    for s in ScenarioId::ALL {
        let plain = run(&RunConfig::new(s, BackendKind::ScriptedFull, 2)).unwrap();
        let mut c = RunConfig::new(s, BackendKind::ScriptedFull, 2);
        c.concurrent = true;
        let threaded = run(&c).unwrap();
        assert_eq!(plain.tr, threaded.tr, "{s}");
    }
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(ScenarioId::Landing, BackendKind::ScriptedFull, 0);
    c.out_dir = Some(dir.path().to_path_buf());
    let r = run(&c).unwrap();
    for f in [
        "report.json",
        "ledger.csv",
        "trajectory.jsonl",
        "bus_trace.jsonl",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let traj = std::fs::read_to_string(dir.path().join("trajectory.jsonl")).unwrap();
    assert_eq!(traj.lines().count() as u64, r.step_count);
    let last: serde_json::Value = serde_json::from_str(traj.lines().last().unwrap()).unwrap();
    for key in [
        "step",
        "pose",
        "action",
        "reward_delta",
        "cumulative_normalized",
    ] {
        assert!(last.get(key).is_some(), "{key}");
    }
    assert_eq!(last["cumulative_normalized"].as_f64().unwrap(), r.tr);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["command_trace_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn scripted_traces_repeat_exactly() {
    for s in ScenarioId::ALL {
        let a = run(&RunConfig::new(s, BackendKind::ScriptedFull, 4)).unwrap();
        let b = run(&RunConfig::new(s, BackendKind::ScriptedFull, 4)).unwrap();
        assert_eq!(a, b, "{s}");
    }
}

#[test]
fn agent_commands_are_registry_operations() {
    let registry = CommandRegistry::standard();
    for s in ScenarioId::ALL {
        let r = run(&RunConfig::new(s, BackendKind::RandomBaseline, 3)).unwrap();
        for line in &r.command_trace {
            let op = line.split(" -> ").next().unwrap();
            assert!(registry.contains(op), "{line}");
        }
    }
}

#[test]
fn step_budget_is_respected() {
    let mut c = RunConfig::new(ScenarioId::SafeNav, BackendKind::SingleCall, 0);
    c.max_steps = 17;
    let r = run(&c).unwrap();
    assert_eq!(r.step_count, 17);
    assert!((r.ar * 17.0 - r.tr).abs() < 1e-9);
}

#[test]
fn bad_configs_are_config_errors() {
    let mut c = RunConfig::new(ScenarioId::Wildfire, BackendKind::ScriptedFull, 0);
    c.max_speed = 10.0;
    assert!(matches!(run(&c), Err(HarnessError::Config(_))));
    let mut c = RunConfig::new(ScenarioId::Wildfire, BackendKind::ScriptedFull, 0);
    c.max_steps = 0;
    assert!(matches!(run(&c), Err(HarnessError::Config(_))));
}

#[test]
fn missing_layout_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::new(ScenarioId::Landing, BackendKind::ScriptedFull, 0);
    c.layout = Some(dir.path().join("missing.json"));
    assert!(matches!(run(&c), Err(HarnessError::Config(_))));
}

#[test]
fn comparison_table_has_one_decimal() {
    let configs: Vec<_> = default_configs(0)
        .into_iter()
        .filter(|c| c.scenario == ScenarioId::Inspection)
        .collect();
    let (table, reports) = compare(&configs).unwrap();
    assert_eq!(reports.len(), 4);
    let csv = table.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "backend,inspection_TR,inspection_AR");
    assert_eq!(lines.next().unwrap(), "scripted_full,100.0,50.0");
    assert!(table.to_json().contains("\"TR\""));
}
