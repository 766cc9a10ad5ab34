use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const SMALL: &str = "torus_n = 64
torus_dims = 16, 32, 64
window_start = 500
window_len = 500
g_list = logspace:0.01:1:4
rmt_dim = 8
rmt_samples = 1000
";

const SUBCOMMANDS: [&str; 6] = ["echo-series", "coupling-scan", "hbar-scan", "equilibrate", "bipartite", "rmt-check"];

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn scanlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_scanlab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn unknown_key_exits_with_config_status() {
    let dir = scratch("unknown_key");
    let cfg = write_config(&dir, "torus_n = 64\nwindow_size = 3\n");
    let out = scanlab(&["bipartite", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window_size"));
}

#[test]
fn resonant_hbar_exits_with_config_status() {
    let dir = scratch("resonant");
    let cfg = write_config(&dir, "geometry = lattice\nhbar_list = 0.1, 3.141592653589793, 0.3\n");
    let out = scanlab(&["hbar-scan", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn physics_errors_exit_with_status_three() {
    let dir = scratch("physics");
    // The packet reaches the edge of a fixed 64-level lattice.
    let cfg = write_config(&dir, "geometry = lattice\nhbar = 0.1\nlattice_dim = 64\nwindow_len = 500\n");
    let out = scanlab(&["bipartite", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("boundary"));
}

#[test]
fn failed_self_check_exits_with_status_four() {
    let dir = scratch("check");
    // Weak coupling throughout: the last decade is not in the RMT regime.
    let cfg = write_config(&dir, &format!("{SMALL}g_list = logspace:1e-6:1e-5:3\n"));
    let out = scanlab(&["coupling-scan", "--config", &cfg, "--out", dir.to_str().unwrap(), "--check"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stdout));
    let out = scanlab(&["coupling-scan", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn every_subcommand_is_deterministic() {
    for sub in SUBCOMMANDS {
        let dir = scratch(sub);
        let cfg = write_config(&dir, SMALL);
        let mut outputs = Vec::new();
        for run in ["a", "b"] {
            let out_dir = dir.join(run);
            let out = scanlab(&[sub, "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", "2", "--seed", "7"]);
            assert!(out.status.success(), "{sub}: {}", String::from_utf8_lossy(&out.stderr));
            assert!(out_dir.join("manifest.txt").exists());
            assert!(fs::read_dir(&out_dir).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));
            outputs.push(csv_files(&out_dir));
        }
        assert!(!outputs[0].is_empty(), "{sub} wrote no CSV");
        assert_eq!(outputs[0], outputs[1], "{sub} output differs between runs");
    }
}

#[test]
fn flags_override_the_config() {
    let dir = scratch("override");
    let cfg = write_config(&dir, &format!("{SMALL}seed = 3\noutput_dir = {}\n", dir.join("unused").display()));
    let out_dir = dir.join("out");
    let out = scanlab(&["rmt-check", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "9"]);
    assert!(out.status.success());
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("\nseed=9\n"));
    assert!(!dir.join("unused").exists());
}
