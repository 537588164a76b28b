use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const STANDING: &str = "m = 32\nsteps = 24\nmodes = 8\nc.1 = 0.01\n";
const TRAVELING: &str = "m = 32\nsteps = 2\nmodes = 16\nc.1 = 0.01\nc.2 = -0.01\namplitude = 0.02\nretries = 0\n";

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_waterwave"))
        .arg("--config")
        .arg(&cfg)
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn ok(out: Output) -> String {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Decimal comment after the hex value on a `key` line of a solution file.
fn decimal(path: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no '{key}' in {}", path.display()));
    line.rsplit('#').next().unwrap().trim().parse().unwrap()
}

fn converged(path: &Path) -> bool {
    fs::read_to_string(path).unwrap().lines().any(|l| l == "converged true")
}

fn standing_seed(dir: &Path) -> PathBuf {
    ok(run(dir, STANDING, &["--out", "seed", "standing"]));
    dir.join("seed/solution.txt")
}

#[test]
fn standing_solution_round_trips_through_diag() {
    let dir = TempDir::new().unwrap();
    let sol = standing_seed(dir.path());
    assert!(converged(&sol));
    let period = decimal(&sol, "c 0 ");
    assert!((period - 2.0 * std::f64::consts::PI).abs() < 1e-3, "period {period}");

    let report = ok(run(dir.path(), "", &["diag", sol.to_str().unwrap()]));
    let diff: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("f relative diff"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(diff < 1e-14, "{report}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    ok(run(dir.path(), STANDING, &["--out", "a", "--threads", "1", "standing"]));
    ok(run(dir.path(), STANDING, &["--out", "b", "--threads", "1", "standing"]));
    let a = fs::read(dir.path().join("a/solution.txt")).unwrap();
    let b = fs::read(dir.path().join("b/solution.txt")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_configuration_exits_3() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), "m = 32\nbogus = 1\n", &["standing"])), 3);
    assert_eq!(code(&run(dir.path(), "m = 32\nm = 48\n", &["standing"])), 3);
    assert_eq!(code(&run(dir.path(), "depth = -1\n", &["standing"])), 3);
    assert_eq!(code(&run(dir.path(), "m = 16\nmodes = 12\nc.1 = 0.01\n", &["standing"])), 3);
}

#[test]
fn unconverged_solve_exits_2_and_keeps_best_iterate() {
    let dir = TempDir::new().unwrap();
    let cfg = format!("{STANDING}max_iter = 1\nretries = 0\n");
    let out = run(dir.path(), &cfg, &["--out", "o", "standing"]);
    assert_eq!(code(&out), 2);
    let sol = dir.path().join("o/solution.txt");
    assert!(!converged(&sol));
    assert!(decimal(&sol, "f ") > 0.0);
}

#[test]
fn small_traveling_wave_has_stokes_speed() {
    let dir = TempDir::new().unwrap();
    let report = ok(run(dir.path(), TRAVELING, &["--out", "t", "--tol-f", "1e-24", "travel"]));
    let sol = dir.path().join("t/solution.txt");
    assert!(converged(&sol), "{report}");
    let speed = 2.0 * std::f64::consts::PI / decimal(&sol, "c 0 ");
    // deep-water Stokes correction c = 1 + (ka)^2 / 2 with a = 0.02
    assert!((speed - 1.0002).abs() < 1e-5, "speed {speed}");
}

#[test]
fn counterpropagating_collision_from_traveling_wave() {
    let dir = TempDir::new().unwrap();
    ok(run(dir.path(), TRAVELING, &["--out", "t", "--tol-f", "1e-24", "travel"]));
    let cfg = "m = 32\nsteps = 24\nmodes = 12\nstart = t/solution.txt\n";
    ok(run(dir.path(), cfg, &["--out", "cp", "counterprop"]));
    let sol = dir.path().join("cp/solution.txt");
    assert!(converged(&sol));
    assert!(fs::read_to_string(&sol).unwrap().contains("family standing"));
    assert!((decimal(&sol, "c 0 ") - 2.0 * std::f64::consts::PI).abs() < 1e-3);
}

#[test]
fn sweep_resumes_and_spectra_are_tracked() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let base = format!("{STANDING}continue.target = c1\n");
    let floquet = format!("{STANDING}floquet.n_keep = 16\nfloquet.steps = 120\n");
    ok(run(d, &format!("{base}continue.values = 0.02\n"), &["--out", "fam", "continue"]));
    let first = fs::read(d.join("fam/member_0001.txt")).unwrap();
    assert!(!d.join("fam/member_0002.txt").exists());

    ok(run(d, &format!("{base}continue.values = 0.02, 0.03\n"), &["--out", "fam", "--resume", "continue"]));
    assert_eq!(fs::read(d.join("fam/member_0001.txt")).unwrap(), first);
    let members: Vec<PathBuf> = (0..3).map(|i| d.join(format!("fam/member_{i:04}.txt"))).collect();
    let periods: Vec<f64> = members.iter().map(|p| decimal(p, "c 0 ")).collect();
    assert!(periods.windows(2).all(|w| w[1] > w[0]), "{periods:?}");
    let sweep = fs::read_to_string(d.join("fam/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count(), 2);

    let mut spectra = Vec::new();
    for m in &members {
        ok(run(d, &floquet, &["--out", "fam", "floquet", m.to_str().unwrap()]));
        spectra.push(m.with_extension("spectrum.csv"));
    }
    let spectra: Vec<&str> = spectra.iter().map(|p| p.to_str().unwrap()).collect();
    ok(run(d, "", &[&["--out", "match", "match"], spectra.as_slice()].concat()));
    let plain = fs::read_to_string(d.join("match/permutation.txt")).unwrap();
    for line in fs::read_to_string(d.join("match/phase.dat")).unwrap().lines() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let sigma: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!(sigma > -1.0 && sigma <= 1.0, "{line}");
    }

    fs::write(d.join("swaps.txt"), "2 1 2\n").unwrap();
    ok(run(d, "", &[&["--out", "swapped", "match", "--swaps", "swaps.txt"], spectra.as_slice()].concat()));
    let swapped = fs::read_to_string(d.join("swapped/permutation.txt")).unwrap();
    assert_ne!(plain, swapped);
}

#[test]
fn unknown_subcommand_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_waterwave")).arg("launch").output().unwrap();
    assert_ne!(code(&out), 0);
}
