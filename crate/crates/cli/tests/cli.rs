use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use paraell::symbols::BVProblem;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paraell"))
}

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("problems").join(name)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("run paraell")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_problems_match_constructors() {
    let read = |n| serde_json::from_str::<BVProblem>(&std::fs::read_to_string(problem(n)).unwrap()).unwrap();
    assert_eq!(read("helmholtz_robin.json"), BVProblem::helmholtz_robin());
    assert_eq!(read("helmholtz_dirichlet.json"), BVProblem::helmholtz_dirichlet());
}

#[test]
fn robin_on_imaginary_ray_is_elliptic() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(exe().arg("check-ellipticity").arg(problem("helmholtz_robin.json")).args(["--ray", "90deg", "--out"]).arg(dir.path()));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ellipticity.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["verdict"], true);
}

#[test]
fn robin_on_positive_axis_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(exe().arg("check-ellipticity").arg(problem("helmholtz_robin.json")).args(["--ray", "0deg", "--out"]).arg(dir.path()));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ellipticity.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["verdict"], false);
    let worst = report["report"]["worst_points"].as_array().unwrap();
    assert_eq!(worst.len(), 2);
    assert!(worst.iter().all(|w| w["value"].as_f64().unwrap() < 1e-6));
}

#[test]
fn interp_verify_example() {
    let o = run(exe().args(["interp-verify", "--alpha", "powerlog:2,1", "--s0", "1", "--s1", "3", "--grid", "32x32"]));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    let relerr: f64 = line.split("max relerr ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!(relerr < 1e-12, "{line}");
}

#[test]
fn malformed_config_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, "{\n  \"phiSpec\": \"power:1\",\n  \"gridSpec\" 16\n}\n").unwrap();
    let o = run(exe().args(["norm", "--config"]).arg(&cfg));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3, column 14"), "{}", stderr(&o));
}

#[test]
fn malformed_problem_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    std::fs::write(&path, "{\"q\": 1,\n \"interior\": [,]}").unwrap();
    let o = run(exe().arg("check-ellipticity").arg(&path).args(["--ray", "90deg"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn usage_and_file_errors_exit_one() {
    let o = run(exe().arg("check-ellipticity").arg("/nonexistent/problem.json").args(["--ray", "90deg"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(exe().args(["estimate-scan", "--bogus"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(exe().arg("check-ellipticity").arg(problem("helmholtz_robin.json")).args(["--ray", "90"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("deg or rad"));
    let o = run(exe().args(["norm", "--phi", "power:1"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--grid"));
    let o = run(exe().arg("--help"));
    assert_eq!(o.status.code(), Some(0));
}

fn small_scan(dir: &Path, format: &str, threads: Option<&str>) -> Output {
    let mut cmd = exe();
    cmd.arg("estimate-scan")
        .arg(problem("helmholtz_dirichlet.json"))
        .args(["--phi", "power:0", "--ray", "90deg", "--lambdas", "4,8,16", "--grid", "4x16", "--format", format, "--out"])
        .arg(dir);
    if let Some(t) = threads {
        cmd.env("PARAELL_THREADS", t);
    }
    run(&mut cmd)
}

#[test]
fn scan_matches_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_scan(dir.path(), "csv", None);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("scan.csv")).unwrap(), golden("scan_dirichlet_4x16.csv"));
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for format in ["json", "svg"] {
        assert_eq!(small_scan(a.path(), format, Some("1")).status.code(), Some(0));
        assert_eq!(small_scan(b.path(), format, Some("3")).status.code(), Some(0));
    }
    for name in ["scan.json", "scan.csv", "scan.svg"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let norm = |dir: &Path| {
        run(exe().args(["norm", "--phi", "powerlog:1,1", "--grid", "16x16", "--p", "1,10,100", "--seed", "7", "--out"]).arg(dir));
        std::fs::read(dir.join("norm.json")).unwrap()
    };
    assert_eq!(norm(a.path()), norm(b.path()));
}

#[test]
fn seed_changes_random_spectra() {
    let line = |seed: &str| stdout(&run(exe().args(["norm", "--phi", "power:1", "--grid", "8x8", "--seed", seed])));
    assert_eq!(line("0"), line("0"));
    assert_ne!(line("0"), line("1"));
}

#[test]
fn fredholm_probe_finds_resonance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        exe().arg("fredholm-probe")
            .arg(problem("helmholtz_dirichlet.json"))
            .args(["--lambdas", "2i,3.141592653589793,1+1i", "--grid", "2x24", "--out"])
            .arg(dir.path()),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("fredholm.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2] == r[3]));
    assert_eq!(rows[0][2], "0");
    assert!(rows[1][2].parse::<usize>().unwrap() >= 1);
}

#[test]
fn config_file_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    let body = serde_json::json!({
        "command": "estimate-scan",
        "problemPath": problem("helmholtz_dirichlet.json"),
        "phiSpec": "power:0",
        "anglesOrRay": "90deg",
        "lambdaList": "4,8,16",
        "gridSpec": "4x16",
        "outputDir": out,
        "format": "csv"
    });
    std::fs::write(&cfg, body.to_string()).unwrap();
    let o = run(exe().args(["estimate-scan", "--config"]).arg(&cfg));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(out.join("scan.csv")).unwrap(), golden("scan_dirichlet_4x16.csv"));
}
