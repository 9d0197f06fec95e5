#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SERVICES: [&str; 5] = ["http", "ftp", "smtp", "private", "domain_u"];

/// Rows in the NSL-KDD layout: 41 features, label, difficulty, no header.
/// `num_outbound_cmds` (feature 19) is always zero. The test file adds the
/// attack types `mailbomb` and `mscan`, which never occur in training.
pub fn write_nsl_like(path: &Path, n: usize, seed: u64, test_file: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..n {
        let u: f64 = rng.random();
        let label = match (u, test_file) {
            (u, _) if u < 0.5 => "normal",
            (u, false) if u < 0.7 => "neptune",
            (u, false) if u < 0.85 => "satan",
            (_, false) => "guess_passwd",
            (u, true) if u < 0.65 => "neptune",
            (u, true) if u < 0.75 => "satan",
            (u, true) if u < 0.85 => "guess_passwd",
            (u, true) if u < 0.93 => "mailbomb",
            _ => "mscan",
        };
        let shift = match label {
            "normal" => 0.2,
            "neptune" | "mailbomb" => 0.8,
            "satan" | "mscan" => 0.6,
            _ => 0.45,
        };
        let mut cells: Vec<String> = Vec::with_capacity(43);
        for k in 0..41 {
            let cell = match k {
                1 => ["tcp", "udp", "icmp"][if label == "normal" { rng.random_range(0..2) } else { rng.random_range(0..3) }].to_string(),
                2 => SERVICES[if label == "normal" { rng.random_range(0..3) } else { rng.random_range(0..5) }].to_string(),
                3 => ["SF", "S0", "REJ"][if label == "normal" { 0 } else { rng.random_range(0..3) }].to_string(),
                19 => "0".to_string(),
                _ => {
                    let wobble: f64 = if k % 2 == 0 { shift } else { 1.0 - shift };
                    let v: f64 = (wobble + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0);
                    format!("{v:.4}")
                }
            };
            cells.push(cell);
        }
        cells.push(label.to_string());
        cells.push(rng.random_range(0..22).to_string());
        let _ = writeln!(out, "{}", cells.join(","));
    }
    std::fs::write(path, out).unwrap();
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    /// Writes `KDDTrain+.txt` and `KDDTest+.txt` into a fresh directory.
    pub fn nsl(n_train: usize, n_test: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_nsl_like(&dir.path().join("KDDTrain+.txt"), n_train, 1, false);
        write_nsl_like(&dir.path().join("KDDTest+.txt"), n_test, 2, true);
        Self { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub fn ondetect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ondetect"))
        .args(args)
        .env_remove("ONDETECT_OUT")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small schedule shared by the run tests.
pub const FAST: [&str; 12] = [
    "--epoch0", "3", "--epoch1", "1", "--chunk", "100", "--learning-rate", "0.05",
    "--batch-size", "32", "--temperature", "0.1",
];
