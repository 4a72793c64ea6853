use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phaseprior::imageio::{load_grid, save_grid};
use phaseprior::optics::{forward_born, forward_full, ImagingConfig};
use phaseprior::Image2D;

fn phaseprior(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaseprior")).args(args).env_remove("PHASEPRIOR_OUT").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = phaseprior(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(out: &Path, extra: &[&str]) {
    let mut args = vec!["--out", s(out), "simulate", "--phantom", "blob", "--rows", "64", "--cols", "64"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_writes_nonnegative_intensity_matching_forward_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    simulate(&out, &[]);
    let theta = load_grid(&out.join("theta_true.grid")).unwrap();
    let i = load_grid(&out.join("intensity.grid")).unwrap();
    assert_eq!(i.shape(), (64, 64));
    assert!(i.data().iter().all(|&v| v >= 0.0));
    assert_eq!(i, forward_full(&theta, &ImagingConfig::new(64, 64)).unwrap());
    for f in ["theta_true.png", "intensity.png", "config.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate(&a, &["--noise", "0"]);
    simulate(&b, &["--noise", "0"]);
    for f in ["theta_true.grid", "intensity.grid", "intensity.png", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (c, d) = (dir.path().join("c"), dir.path().join("d"));
    simulate(&c, &["--noise", "0.02", "--seed", "4"]);
    simulate(&d, &["--noise", "0.02", "--seed", "5"]);
    assert_ne!(fs::read(c.join("intensity.grid")).unwrap(), fs::read(d.join("intensity.grid")).unwrap());
}

#[test]
fn unknown_phantom_and_solver_exit_one_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = phaseprior(&["--out", s(dir.path()), "simulate", "--phantom", "teapot"]);
    assert_eq!(o.status.code(), Some(1));
    let grid = dir.path().join("i.grid");
    save_grid(&grid, &Image2D::filled(16, 16, 1.0)).unwrap();
    let o = phaseprior(&["--out", s(&dir.path().join("r")), "retrieve", s(&grid), "--solver", "sgd"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage: "));
    let o = phaseprior(&["--out", s(&dir.path().join("r")), "retrieve", s(&dir.path().join("missing.grid")), "--solver", "born"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn born_solver_on_born_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ImagingConfig::new(64, 64);
    let truth = Image2D::from_fn(64, 64, |r, c| {
        let (y, x) = (r as f64 - 32.0, c as f64 - 32.0);
        0.1 * (-(x * x + y * y) / 328.0).exp() * (x * std::f64::consts::PI / 3.0).sin() * (y * std::f64::consts::PI / 3.5).cos()
    });
    save_grid(&dir.path().join("truth.grid"), &truth).unwrap();
    save_grid(&dir.path().join("i.grid"), &forward_born(&truth, &cfg).unwrap()).unwrap();
    let out = dir.path().join("r");
    ok(&["--out", s(&out), "retrieve", s(&dir.path().join("i.grid")), "--solver", "born", "--truth", s(&dir.path().join("truth.grid"))]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["terminated_by"], "closed_form");
    assert!(summary["relative_error"].as_f64().unwrap() < 0.05, "{summary}");
    assert!(!fs::read_to_string(out.join("summary.json")).unwrap().contains("time"));
}

#[test]
fn network_retrieve_respects_iteration_cap_and_logs() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &[]);
    let out = dir.path().join("r");
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "base_channels = 4\ndepth = 2\ninner_depth = 2\nmax_iters = 12\ntol = 0\n").unwrap();
    ok(&["--config", s(&conf), "--out", s(&out), "retrieve", s(&sim.join("intensity.grid")), "--solver", "u2net", "--log-every", "4"]);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations_run"], 12);
    assert_eq!(summary["terminated_by"], "max_iters");
    assert!(summary["final_loss"].as_f64() <= summary["initial_loss"].as_f64());
    assert_eq!(fs::read_to_string(out.join("loss.csv")).unwrap().lines().count(), 1 + 13);
    assert!(fs::read_to_string(out.join("progress.csv")).unwrap().lines().count() >= 3);
    let config = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(config.contains("max_iters = 12") && config.contains("log_every = 4") && config.contains("solver = u2net"));
}

#[test]
fn constant_phase_gives_flat_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("flat.grid");
    save_grid(&grid, &Image2D::filled(9, 7, 0.4)).unwrap();
    for pipeline in ["sfs", "direct"] {
        let out = dir.path().join(pipeline);
        ok(&["--out", s(&out), "reconstruct3d", s(&grid), "--pipeline", pipeline]);
        let height = load_grid(&out.join("height.grid")).unwrap();
        assert!(height.data().iter().all(|&v| v == 0.0));
        let report = fs::read_to_string(out.join("skewness.txt")).unwrap();
        // right-isosceles halves of square cells
        assert!(report.contains("mean = 2.500000000000e-1") && report.contains("max = 2.500000000000e-1"), "{report}");
        let obj = fs::read_to_string(out.join("mesh.obj")).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 2 * 8 * 6);
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_phaseprior"))
        .args(["simulate", "--rows", "16", "--cols", "16"])
        .env("PHASEPRIOR_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("intensity.grid").exists());
}

fn bench(out: &Path) -> String {
    ok(&[
        "--out",
        s(out),
        "benchmark",
        "--phantoms",
        "steps",
        "--solvers",
        "born,unet",
        "--rows",
        "32",
        "--cols",
        "32",
        "--base-channels",
        "4",
        "--depth",
        "2",
        "--max-iters",
        "10",
    ]);
    fs::read_to_string(out.join("benchmark.csv")).unwrap()
}

#[test]
fn benchmark_tables_and_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let csv = bench(&a);
    assert_eq!(csv, bench(&b));
    // born: one model; unet: both
    assert_eq!(csv.lines().count(), 1 + 3);
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert!(fields[3..8].iter().all(|v| v.parse::<f64>().unwrap().is_finite()), "{line}");
    }
    let report = fs::read_to_string(a.join("report.txt")).unwrap();
    let tables: Vec<&str> = report.split("\n\n").take(4).collect();
    assert_eq!(tables.len(), 4);
    for t in tables {
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4, "{t}");
        assert!(lines[2].starts_with("Born") && lines[3].starts_with("UNet"));
        // aligned columns: every row has the same width
        assert_eq!(lines[1].len(), lines[2].len());
        assert_eq!(lines[2].len(), lines[3].len());
    }
    assert!(report.contains("Network ordering"));
    assert!(a.join("timing.csv").exists());
}
