use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use spsr::{OrientedPointCloud, ReconstructionConfig, Reconstructor, UniformGrid, Vec3};
use spsr_cli::commands::query_row;
use spsr_cli::store::load_field;
use spsr_cli::QueryKind;

fn write_circle(dir: &Path, n: usize) -> PathBuf {
    let mut s = String::from("# planar circle\n");
    for i in 0..n {
        let t = i as f64 * std::f64::consts::TAU / n as f64;
        s.push_str(&format!("{} {} {} {}\n", 0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin(), t.cos(), t.sin()));
    }
    let p = dir.join("circle.xyzn");
    fs::write(&p, s).unwrap();
    p
}

fn circle_cloud(n: usize) -> OrientedPointCloud {
    let (mut p, mut nr) = (Vec::new(), Vec::new());
    for i in 0..n {
        let t = i as f64 * std::f64::consts::TAU / n as f64;
        p.push(Vec3::new(0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin(), 0.0));
        nr.push(Vec3::new(t.cos(), t.sin(), 0.0));
    }
    OrientedPointCloud::new(p, nr, 0.0).unwrap()
}

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut full = vec!["spsr"];
    full.extend_from_slice(args);
    let code = spsr_cli::run_args(full, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn value(stdout: &str, key: &str) -> String {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {stdout}"))
        .to_string()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spsr"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn circle_reconstruction_writes_field_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_circle(dir.path(), 500);
    let prefix = dir.path().join("f");
    let (code, out) = run(&["reconstruct", s(&input), "-o", s(&prefix), "--resolution", "100"]);
    assert_eq!(code, 0);
    let u: f64 = value(&out, "total_uncertainty").parse().unwrap();
    assert!(u.is_finite() && u > 0.0);
    for suffix in [".mean.grid", ".var.grid", ".pin.grid", ".field.meta", ".C.bin"] {
        let mut p = prefix.clone().into_os_string();
        p.push(suffix);
        assert!(Path::new(&p).exists(), "{suffix} missing");
    }
}

fn round_trip(binary: bool) {
    let dir = tempfile::tempdir().unwrap();
    let input = write_circle(dir.path(), 64);
    let prefix = dir.path().join("f");
    let mut args = vec!["reconstruct", s(&input), "-o", s(&prefix), "--resolution", "24", "--eigen-k", "120"];
    if binary {
        args.push("--binary-grids");
    }
    assert_eq!(run(&args).0, 0);

    // the same pipeline in process
    let cloud = circle_cloud(64);
    let grid = UniformGrid::fit_to_points(cloud.positions(), 24, 0.1, true).unwrap();
    let cfg = ReconstructionConfig { eigen_k: 120, ..Default::default() };
    let field = Reconstructor::new(grid, cfg).unwrap().reconstruct(&cloud).unwrap().field;

    let (loaded, _) = load_field(&prefix).unwrap();
    assert_eq!(loaded.grid(), field.grid());
    assert!(loaded.mean().iter().zip(field.mean()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(loaded.variance().iter().zip(field.variance()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(loaded.reduced(), field.reduced());

    let pts = dir.path().join("q.csv");
    fs::write(&pts, "x,y\n0.5,0.5\n0.8,0.5\n0.77,0.31\n0.2,0.6\n9,9\n").unwrap();
    for (what, flag) in [(QueryKind::Inside, "inside"), (QueryKind::Surface, "surface"), (QueryKind::Ci95, "ci95")] {
        let (code, csv) = run(&["query", s(&prefix), s(&pts), "--what", flag]);
        assert_eq!(code, 0);
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows.len(), 5);
        for row in rows {
            let cols: Vec<&str> = row.split(',').collect();
            let p = Vec3::new(cols[0].parse().unwrap(), cols[1].parse().unwrap(), cols[2].parse().unwrap());
            let expect = query_row(&field, &p, what);
            assert_eq!(cols.len(), 3 + expect.len());
            for (c, e) in cols[3..].iter().zip(&expect) {
                if e.is_nan() {
                    assert_eq!(*c, "nan");
                } else {
                    assert_eq!(c.parse::<f64>().unwrap().to_bits(), e.to_bits(), "{flag} at {p:?}");
                }
            }
        }
    }
}

#[test]
fn reload_then_query_matches_in_process_text() {
    round_trip(false);
}

#[test]
fn reload_then_query_matches_in_process_binary() {
    round_trip(true);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.xyzn");
    fs::write(&empty, "# nothing\n").unwrap();
    let o = bin().args(["reconstruct", s(&empty), "-o", s(&dir.path().join("g"))]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no samples"));

    let o = bin().args(["reconstruct", "--no-such-flag"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));

    let bad = dir.path().join("bad.xyzn");
    fs::write(&bad, "0 0 1 0\n0 0 x 0\n").unwrap();
    let o = bin().args(["reconstruct", s(&bad), "-o", s(&dir.path().join("g"))]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.xyzn:2:"));

    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn small_grid_clamps_basis_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for (x, y, z) in [(1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0)] {
        text.push_str(&format!("{} {} {} {x} {y} {z}\n", 0.5 + 0.3 * x, 0.5 + 0.3 * y, 0.5 + 0.3 * z));
    }
    let input = dir.path().join("oct.xyzn");
    fs::write(&input, text).unwrap();
    let o = bin()
        .args(["reconstruct", s(&input), "-o", s(&dir.path().join("f")), "--resolution", "4", "--eigen-k", "3000"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(value(&String::from_utf8_lossy(&o.stdout), "eigen_k"), "63");
    assert!(String::from_utf8_lossy(&o.stderr).contains("clamped to 63"));
}

#[test]
fn randomized_commands_are_reproducible_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_circle(dir.path(), 16);
    let prefix = dir.path().join("f");
    let args = ["reconstruct", s(&input), "-o", s(&prefix), "--resolution", "24", "--eigen-k", "120", "--sigma-n", "0.3"];
    assert_eq!(run(&args).0, 0);

    let region = dir.path().join("r.csv");
    fs::write(&region, "0.82,0.5\n0.84,0.5\n0.8,0.6\n").unwrap();
    let collide = |seed: &str| run(&["collide", s(&prefix), s(&region), "--samples", "2000", "--seed", seed]);
    let (code, a) = collide("5");
    assert_eq!(code, 0);
    assert!(a.starts_with("p_collision=") && a.contains(" stderr="));
    assert_eq!(a, collide("5").1);
    assert_ne!(a, collide("6").1);

    let repair = |seed: &str, out: &Path| {
        assert_eq!(run(&["repair", s(&prefix), s(&input), "-o", s(out), "-n", "20", "--seed", seed]).0, 0);
        fs::read_to_string(out).unwrap()
    };
    let r1 = repair("1", &dir.path().join("a.xyzn"));
    assert_eq!(r1, repair("1", &dir.path().join("b.xyzn")));
    assert_ne!(r1, repair("2", &dir.path().join("c.xyzn")));
    assert_eq!(r1.lines().count(), 20);
}

#[test]
fn scan_reconstruct_score_and_extract() {
    let dir = tempfile::tempdir().unwrap();
    // planar square as a closed polyline
    let obj = dir.path().join("square.obj");
    fs::write(&obj, "v 0.3 0.3 0\nv 0.7 0.3 0\nv 0.7 0.7 0\nv 0.3 0.7 0\nl 1 2 3 4 1\n").unwrap();
    let scan = dir.path().join("scan.xyzn");
    let (code, out) = run(&[
        "scan", s(&obj), "-o", s(&scan), "-n", "200", "--position", "0.5,-1", "--direction", "0,1", "--half-angle", "0.4",
        "--seed", "3",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(value(&out, "points").parse::<usize>().unwrap() > 40);

    let prefix = dir.path().join("f");
    assert_eq!(run(&["reconstruct", s(&scan), "-o", s(&prefix), "--resolution", "20", "--eigen-k", "80"]).0, 0);

    let cams = dir.path().join("cams.csv");
    fs::write(&cams, "px,py,dx,dy,half_angle\n0.5,-1,0,1,0.3\n0.5,2,0,-1,0.3\n").unwrap();
    let (code, csv) = run(&["next-view", s(&prefix), s(&scan), s(&cams), "--repeats", "3"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "camera_id,score");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() >= 0.0));

    let lvl = dir.path().join("l.obj");
    let (code, out) = run(&["levelset", s(&prefix), "-o", s(&lvl), "--of", "pin"]);
    assert_eq!(code, 0);
    assert!(value(&out, "curves").parse::<usize>().unwrap() >= 1);
    assert!(fs::read_to_string(&lvl).unwrap().contains("\nl "));
}
