use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn resel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resel")).args(args).output().expect("spawn resel")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_points(path: &Path, pts: &[[f64; 3]]) {
    let mut s = String::from("# x y z\n");
    for p in pts {
        s.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    fs::write(path, s).unwrap();
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn verify_single_suite_passes() {
    let o = resel(&["verify", "--suite", "so3", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().filter(|l| l.starts_with("[PASS]")).count() >= 5);
    assert!(!out.contains("[FAIL]"));
}

#[test]
fn verify_all_covers_every_suite() {
    let o = resel(&["verify", "--suite", "all"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    for suite in ["so3/", "registration/", "jacobians/", "uncertainty/"] {
        assert!(out.contains(suite), "missing {suite}");
    }
}

#[test]
fn verify_rejects_unknown_suite() {
    let o = resel(&["verify", "--suite", "geometry"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("possible values"));
}

#[test]
fn simulate_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = resel(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_zero_disturbance_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = resel(&["simulate", "--seed", "11", "--da", "0", "--rn", "120", "--reps", "5", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().next().unwrap(), "da,rn,trial,method,trans_err_m,rot_err_rad");
    let rows = csv_rows(&trials);
    assert_eq!(rows.len(), 10);
    for r in &rows {
        let err: f64 = r[4].parse().unwrap();
        assert!(err < 1e-6, "{r:?}");
    }
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "da,rn,method,mean_trans_err_m,stderr_m");
    assert_eq!(csv_rows(&summary).len(), 2);
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let small = ["--da", "0,0.05,0.1", "--rn", "60,90", "--reps", "3", "--config"];
    let base = tempfile::tempdir().unwrap();
    let cfg = base.path().join("run.cfg");
    fs::write(&cfg, "# reduced scene\nring_count = 16\nazimuth_step_deg = 1.0\n").unwrap();
    let mut outputs = Vec::new();
    for threads in [None, Some("1"), Some("3")] {
        let out = base.path().join(format!("out-{}", threads.unwrap_or("default")));
        let mut args = vec!["simulate", "--seed", "5"];
        args.extend_from_slice(&small);
        args.push(cfg.to_str().unwrap());
        args.extend_from_slice(&["--out", out.to_str().unwrap()]);
        if let Some(t) = threads {
            args.extend_from_slice(&["--threads", t]);
        }
        let o = resel(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((fs::read(out.join("trials.csv")).unwrap(), fs::read(out.join("summary.csv")).unwrap()));
    }
    assert_eq!(csv_rows(std::str::from_utf8(&outputs[0].0).unwrap()).len(), 3 * 2 * 3 * 2);
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn simulate_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "ring_count = 8\nazimuth_step_deg = 2\nreps = 4\nda = 0\nrn = 30\n").unwrap();
    let out = dir.path().join("out");
    let o = resel(&[
        "simulate",
        "--seed",
        "2",
        "--config",
        cfg.to_str().unwrap(),
        "--reps",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_rows(&fs::read_to_string(out.join("trials.csv")).unwrap()).len(), 4);
}

#[test]
fn simulate_bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "reps = 3\nunknown_key = 1\n").unwrap();
    let o = resel(&["simulate", "--seed", "1", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = resel(&["simulate", "--seed", "1", "--da", "1.5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = resel(&["simulate", "--seed", "1", "--mode", "both", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

fn ground_grid(x0: f64, y0: f64, n: usize, step: f64, z: f64) -> Vec<[f64; 3]> {
    (0..n * n).map(|i| [x0 + step * (i % n) as f64, y0 + step * (i / n) as f64, z]).collect()
}

fn wall_grid(x: f64, y0: f64, n: usize, step: f64) -> Vec<[f64; 3]> {
    (0..n * n).map(|i| [x, y0 + step * (i % n) as f64, -1.0 + step * (i / n) as f64]).collect()
}

#[test]
fn score_single_plane_cloud() {
    let dir = tempfile::tempdir().unwrap();
    let map = ground_grid(4.0, -2.0, 21, 0.2, -1.7);
    let cloud: Vec<[f64; 3]> = ground_grid(5.05, -0.95, 8, 0.25, -1.7);
    write_points(&dir.path().join("map.xyz"), &map);
    write_points(&dir.path().join("cloud.xyz"), &cloud);
    let out = dir.path().join("scores.csv");
    let o = resel(&[
        "score",
        "--cloud",
        dir.path().join("cloud.xyz").to_str().unwrap(),
        "--map",
        dir.path().join("map.xyz").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "x,y,z,kind,phi,s1,s2,s3,s4,s5,s6,psi1,psi2,psi3,psi4,psi5,psi6,selected"
    );
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), cloud.len());
    let mut any_selected = false;
    for r in &rows {
        assert_eq!(r[3], "plane");
        let psi: Vec<f64> = r[11..17].iter().map(|v| v.parse().unwrap()).collect();
        // Normal is +-z: t_z dominates both other translation axes.
        assert!(psi[5] > 0.0);
        assert!(psi[3] < 1e-6 * psi[5] && psi[4] < 1e-6 * psi[5], "{r:?}");
        any_selected |= r[17] == "1";
    }
    assert!(any_selected);
}

#[test]
fn score_near_ground_has_less_yaw_sensitivity_than_far_wall() {
    let dir = tempfile::tempdir().unwrap();
    let mut map = ground_grid(3.0, -2.0, 16, 0.2, -1.7);
    map.extend(wall_grid(30.0, 3.0, 16, 0.2));
    let ground: Vec<[f64; 3]> = (0..5).map(|i| [4.0 + 0.3 * i as f64, -1.0 + 0.4 * i as f64, -1.7]).collect();
    let wall: Vec<[f64; 3]> = (0..5).map(|i| [30.0, 4.0 + 0.4 * i as f64, -0.5 + 0.3 * i as f64]).collect();
    let cloud: Vec<[f64; 3]> = ground.iter().chain(&wall).copied().collect();
    write_points(&dir.path().join("map.xyz"), &map);
    write_points(&dir.path().join("cloud.xyz"), &cloud);
    let o = resel(&[
        "score",
        "--cloud",
        dir.path().join("cloud.xyz").to_str().unwrap(),
        "--map",
        dir.path().join("map.xyz").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    let rz: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    let ground_max = rz[..5].iter().cloned().fold(0.0, f64::max);
    let wall_min = rz[5..].iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(rows.iter().all(|r| r[3] == "plane"));
    assert!(ground_max < wall_min, "ground {ground_max} vs wall {wall_min}");
}

#[test]
fn score_empty_cloud_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cloud.xyz"), "# nothing\n").unwrap();
    write_points(&dir.path().join("map.xyz"), &ground_grid(0.0, 0.0, 4, 0.2, 0.0));
    let o = resel(&[
        "score",
        "--cloud",
        dir.path().join("cloud.xyz").to_str().unwrap(),
        "--map",
        dir.path().join("map.xyz").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out, "x,y,z,kind,phi,s1,s2,s3,s4,s5,s6,psi1,psi2,psi3,psi4,psi5,psi6,selected\n");
}

#[test]
fn score_parse_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cloud.xyz"), "1 2 3\n# ok\n4 five 6\n").unwrap();
    write_points(&dir.path().join("map.xyz"), &ground_grid(0.0, 0.0, 4, 0.2, 0.0));
    let o = resel(&[
        "score",
        "--cloud",
        dir.path().join("cloud.xyz").to_str().unwrap(),
        "--map",
        dir.path().join("map.xyz").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn score_isolated_points_get_kind_none() {
    let dir = tempfile::tempdir().unwrap();
    write_points(&dir.path().join("cloud.xyz"), &[[100.0, 0.0, 0.0], [5.2, 0.2, -1.7]]);
    write_points(&dir.path().join("map.xyz"), &ground_grid(4.0, -1.0, 11, 0.2, -1.7));
    let o = resel(&[
        "score",
        "--cloud",
        dir.path().join("cloud.xyz").to_str().unwrap(),
        "--map",
        dir.path().join("map.xyz").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows[0][3], "none");
    assert!(rows[0][4..17].iter().all(|v| v.is_empty()));
    assert_eq!(rows[0][17], "0");
    assert_eq!(rows[1][3], "plane");
}

#[test]
fn score_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut map = ground_grid(3.0, -2.0, 16, 0.2, -1.7);
    map.extend(wall_grid(12.0, -1.0, 12, 0.2));
    let cloud: Vec<[f64; 3]> = map.iter().step_by(7).map(|p| [p[0] + 0.01, p[1] - 0.01, p[2]]).collect();
    write_points(&dir.path().join("map.xyz"), &map);
    write_points(&dir.path().join("cloud.xyz"), &cloud);
    let run = |seed: &str| {
        resel(&[
            "score",
            "--seed",
            seed,
            "--cloud",
            dir.path().join("cloud.xyz").to_str().unwrap(),
            "--map",
            dir.path().join("map.xyz").to_str().unwrap(),
        ])
        .stdout
    };
    assert_eq!(run("3"), run("3"));
}
