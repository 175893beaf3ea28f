use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn plan(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmteb"))
        .arg("plan")
        .arg("--scenario")
        .arg(scenario)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn straight_line(goal: &str, obstacles: &str) -> String {
    format!(
        r#"{{
  "environment": {{
    "workspace": {{"min": [-5, -10, 0], "max": [55, 10, 0]}},
    "obstacle_sets": {{"taxi": [{obstacles}]}}
  }},
  "start": {{"position": [0, 0, 0], "yaw": 0, "velocity": [0, 0, 0]}},
  "goal": {goal},
  "mode_sequence": ["taxi"]
}}"#
    )
}

#[test]
fn csv_output_and_cost_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = plan(&bundled("dubins_straightline.json"), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("mode sequence: taxi"));
    assert!(stdout.contains("feasible: true"));

    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,mode,x,y,z,qw,qx,qy,qz,vx,vy,vz,ax,ay,az,u0,u1"
    );
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("taxi")));
    let last_x: f64 = rows.last().unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((last_x - 50.0).abs() < 1e-6);

    let trace = fs::read_to_string(dir.path().join("traj.cost.csv")).unwrap();
    assert!(trace.starts_with("iteration,cost_before,cost_after"));
    assert_eq!(trace.lines().count(), 41);
}

#[test]
fn json_output_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.json");
    let diag = dir.path().join("diag");
    let o = plan(
        &bundled("taxi_flight_loop.json"),
        &out,
        &["--format", "json", "--diagnostics", diag.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["metadata"]["mode_sequence"], serde_json::json!(["taxi"]));
    assert_eq!(doc["metadata"]["feasibility"]["feasible"], serde_json::json!(true));
    let samples = doc["samples"].as_array().unwrap();
    assert_eq!(samples[0]["position"], serde_json::json!([0.0, 0.0, 0.0]));
    assert_eq!(samples[0]["orientation"].as_array().unwrap().len(), 4);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(diag.join("feasibility.json")).unwrap()).unwrap();
    assert!(report["max_dynamics_residual"].as_f64().unwrap() < 0.1);
    let steps = fs::read_to_string(diag.join("lm_steps.csv")).unwrap();
    assert!(steps.starts_with("iteration,step,cost"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let oa = plan(&bundled("dubins_straightline.json"), &a, &["--seed", "7"]);
    let ob = plan(&bundled("dubins_straightline.json"), &b, &["--seed", "7"]);
    assert_eq!(oa.stdout, ob.stdout);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(dir.path().join("a.cost.csv")).unwrap(),
        fs::read(dir.path().join("b.cost.csv")).unwrap()
    );
}

#[test]
fn goal_inside_obstacle_is_an_init_failure() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("blocked.json");
    let goal = r#"{"position": [50, 0, 0], "yaw": 0}"#;
    let block = r#"{"type": "box", "min": [48, -2, -1], "max": [52, 2, 1]}"#;
    fs::write(&sc, straight_line(goal, block)).unwrap();
    let o = plan(&sc, &dir.path().join("out.csv"), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_scenarios_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let goal = r#"{"position": [50, 0, 0], "yaw": 0}"#;
    let cases = [
        ("syntax.json", "{ not json".to_string()),
        (
            "field.json",
            straight_line(goal, "").replace("\"mode_sequence\"", "\"colour\": 1, \"mode_sequence\""),
        ),
        (
            "mode.json",
            straight_line(goal, "").replace("[\"taxi\"]", "[\"submarine\"]"),
        ),
        (
            "planner.json",
            straight_line(goal, "").replace("\"mode_sequence\"", "\"planner\": {\"d_min\": 3.0}, \"mode_sequence\""),
        ),
    ];
    for (name, text) in cases {
        let sc = dir.path().join(name);
        fs::write(&sc, text).unwrap();
        let o = plan(&sc, &dir.path().join("out.csv"), &[]);
        assert_eq!(
            o.status.code(),
            Some(4),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn missing_scenario_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = plan(&dir.path().join("absent.json"), &dir.path().join("out.csv"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unconverged_plan_reports_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = plan(
        &bundled("airplane_wall.json"),
        &dir.path().join("out.csv"),
        &["--iterations", "1"],
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("feasible: false"));
    assert!(dir.path().join("out.csv").exists());
}
