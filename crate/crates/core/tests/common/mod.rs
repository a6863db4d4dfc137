#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn simulate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(args)
        .output()
        .expect("simulate binary runs")
}

/// Run a pinned configuration into `out` and return its exit code.
pub fn run_pinned(experiment: &str, out: &Path) -> i32 {
    let config = golden_dir().join(format!("{experiment}.toml"));
    let output = simulate(&[
        experiment,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    output.status.code().expect("process exited normally")
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".csv"))
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

/// Compare every CSV in `out` byte for byte against the stored copy.
/// With `UPDATE_GOLDEN` set the stored copies are replaced instead.
/// Returns the names that differ, are missing, or are unexpected.
pub fn golden_mismatches(experiment: &str, out: &Path) -> Vec<String> {
    let stored = golden_dir().join(experiment);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        let _ = std::fs::remove_dir_all(&stored);
        std::fs::create_dir_all(&stored).unwrap();
        for name in csv_files(out) {
            std::fs::copy(out.join(&name), stored.join(&name)).unwrap();
        }
        return Vec::new();
    }
    let produced = csv_files(out);
    let expected = csv_files(&stored);
    let mut bad: Vec<String> = expected
        .iter()
        .filter(|n| !produced.contains(n))
        .map(|n| format!("{n} (missing)"))
        .collect();
    for name in &produced {
        match std::fs::read(stored.join(name)) {
            Ok(want) if want == std::fs::read(out.join(name)).unwrap() => {}
            Ok(_) => bad.push(format!("{name} (differs)")),
            Err(_) => bad.push(format!("{name} (unexpected)")),
        }
    }
    if expected.is_empty() {
        bad.push(format!("no stored files for {experiment}"));
    }
    bad
}
