use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reachctl::{parse_problem, write_problem};
use reachctl_core::synthesis::parse_controller;
use tempfile::TempDir;

fn problems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn problem(name: &str) -> PathBuf {
    problems().join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reachctl"))
        .args(args)
        .env_remove("REACHCTL_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, problem_file: &str, pins: Option<&str>, name: &str) -> PathBuf {
    let out = dir.path().join(name);
    let p = problem(problem_file);
    let mut args = vec!["synthesize", s(&p), "--out", s(&out)];
    let pin_path;
    if let Some(pins) = pins {
        pin_path = problem(pins);
        args.extend(["--pin-controls", s(&pin_path)]);
    }
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    out
}

#[test]
fn analyze_planar_example() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("a.json");
    let o = run(&["analyze", s(&problem("double_integrator.txt")), "--out", s(&json)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("kappa = 1, m_hat = 1, p = 1"), "{text}");
    assert!(text.contains("r = (2)"), "{text}");
    assert!(text.contains("route: NEEDS_SUBDIVISION"), "{text}");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["r"], serde_json::json!([2]));
    assert_eq!(v["g_vertices"], serde_json::json!([1, 2]));
}

#[test]
fn analyze_four_dim_example() {
    let o = run(&["analyze", s(&problem("two_input_4d.txt"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("kappa = 3, m_hat = 2, p = 2"), "{text}");
    assert!(text.contains("r = (2, 2)"), "{text}");
}

#[test]
fn malformed_matrix_row_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.txt");
    let text = std::fs::read_to_string(problem("double_integrator.txt")).unwrap();
    std::fs::write(&bad, text.replacen("  0 0\n", "  0 0 7\n", 1)).unwrap();
    let o = run(&["analyze", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.txt:5:3:"), "{}", stderr(&o));
    assert!(stderr(&o).contains("has 3 entries, expected 2"), "{}", stderr(&o));
}

#[test]
fn infeasible_invariance_exits_with_assumption_code() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("inf.txt");
    std::fs::write(
        &p,
        "[system]\nA:\n 0 0\n 0 0\nB:\n 1\n 0\na: 0 -1\n[simplex]\nvertices:\n 0 0\n 1 0\n 0 1\n",
    )
    .unwrap();
    let o = run(&["analyze", s(&p)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("route: INFEASIBLE"));
    assert_eq!(run(&["synthesize", s(&p)]).status.code(), Some(3));
}

#[test]
fn planar_pinned_controller_verifies() {
    let dir = TempDir::new().unwrap();
    let ctrl = synth(&dir, "double_integrator.txt", Some("double_integrator.pins"), "pwa.ctrl");
    let parsed = parse_controller(&std::fs::read_to_string(&ctrl).unwrap()).unwrap();
    assert_eq!(parsed.pieces.len(), 2);

    let report = dir.path().join("r.json");
    let o = run(&["verify", s(&problem("double_integrator.txt")), s(&ctrl), "--out", s(&report)]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("66 exited F0"), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["passed"], serde_json::json!(true));
}

#[test]
fn planar_affine_law_fails_verification() {
    let dir = TempDir::new().unwrap();
    let ctrl = synth(&dir, "double_integrator.txt", Some("double_integrator_affine.pins"), "aff.ctrl");
    let o = run(&["verify", s(&problem("double_integrator.txt")), s(&ctrl)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).contains("likely equilibrium"), "{}", stdout(&o));
}

#[test]
fn empty_grid_passes_with_warning() {
    let dir = TempDir::new().unwrap();
    let ctrl = synth(&dir, "double_integrator.txt", Some("double_integrator.pins"), "pwa.ctrl");
    let o = run(&["verify", s(&problem("double_integrator.txt")), s(&ctrl), "--grid", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("warning: empty start grid"));
}

#[test]
fn four_dim_synthesis_has_three_pieces() {
    let dir = TempDir::new().unwrap();
    let ctrl = synth(&dir, "two_input_4d.txt", Some("two_input_4d.pins"), "4d.ctrl");
    let parsed = parse_controller(&std::fs::read_to_string(&ctrl).unwrap()).unwrap();
    assert_eq!(parsed.pieces.len(), 3);
    let o = run(&["verify", s(&problem("two_input_4d.txt")), s(&ctrl), "--grid", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn verification_report_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let ctrl = synth(&dir, "double_integrator.txt", Some("double_integrator.pins"), "pwa.ctrl");
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        let o = run(&["verify", s(&problem("double_integrator.txt")), s(&ctrl), "--grid", "4", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn simulate_writes_csv() {
    let dir = TempDir::new().unwrap();
    let ctrl = synth(&dir, "double_integrator.txt", Some("double_integrator.pins"), "pwa.ctrl");
    let csv = dir.path().join("t.csv");
    let o = run(&[
        "simulate",
        s(&problem("double_integrator.txt")),
        s(&ctrl),
        "--x0",
        "-0.5,0.6",
        "--out",
        s(&csv),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ExitedF0"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,x1,x2,piece,u1\n"));
    assert!(text.lines().count() > 10);

    let o = run(&["simulate", s(&problem("double_integrator.txt")), s(&ctrl), "--x0", "5,5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plot_is_deterministic_and_planar_only() {
    let dir = TempDir::new().unwrap();
    let pwa = synth(&dir, "double_integrator.txt", Some("double_integrator.pins"), "pwa.ctrl");
    let aff = synth(&dir, "double_integrator.txt", Some("double_integrator_affine.pins"), "aff.ctrl");
    let p = problem("double_integrator.txt");
    let render = |ctrl: &Path, extra: &[&str]| {
        let mut args = vec!["plot", s(&p), s(ctrl)];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        stdout(&o)
    };
    let first = render(&pwa, &[]);
    assert!(first.starts_with("<svg"));
    assert!(first.contains("stroke=\"#ff7f0e\""));
    assert_eq!(first, render(&pwa, &[]));

    let field_only = render(&aff, &["--no-trajectories"]);
    assert!(!field_only.contains("stroke=\"#ff7f0e\""));
    // The single law has an equilibrium on the grid.
    assert!(field_only.contains("<circle"));

    let dir4 = TempDir::new().unwrap();
    let ctrl4 = synth(&dir4, "two_input_4d.txt", Some("two_input_4d.pins"), "4d.ctrl");
    let o = run(&["plot", s(&problem("two_input_4d.txt")), s(&ctrl4)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("dimension 4"));
}

#[test]
fn problem_files_round_trip() {
    for name in ["double_integrator.txt", "two_input_4d.txt"] {
        let text = std::fs::read_to_string(problem(name)).unwrap();
        let pf = parse_problem(&text, name).unwrap();
        assert_eq!(parse_problem(&write_problem(&pf), name).unwrap(), pf);
    }
}
