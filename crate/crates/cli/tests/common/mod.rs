#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn cfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfx"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("spawn cfx")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Rows whose label depends on age, hours and level.
pub fn write_synth_csv(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = ["low", "mid", "high"];
    let colors = ["red", "green", "blue"];
    let mut s = String::from("age,hours,level,color,group,y\n");
    for _ in 0..n {
        let age: u32 = rng.random_range(18..70);
        let hours: u32 = rng.random_range(10..60);
        let level = rng.random_range(0..3);
        let color = colors[rng.random_range(0..3)];
        let group = if rng.random::<bool>() { "a" } else { "b" };
        let score = 0.05 * age as f64 + 0.04 * hours as f64 + 1.2 * level as f64 + rng.random::<f64>();
        let y = u8::from(score > 5.0);
        s.push_str(&format!("{age},{hours},{},{color},{group},{y}\n", levels[level]));
    }
    std::fs::write(path, s).unwrap();
}

pub struct Trained {
    pub dir: tempfile::TempDir,
    pub csv: PathBuf,
    pub model: PathBuf,
}

impl Trained {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// A small model trained once per test binary through the CLI.
pub fn trained() -> &'static Trained {
    static TRAINED: OnceLock<Trained> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("synth.csv");
        let model = dir.path().join("synth.cfx");
        write_synth_csv(&csv, 600, 1);
        let out = cfx(&[
            "train",
            "--data",
            csv.to_str().unwrap(),
            "--schema",
            fixture("synth.schema.json").to_str().unwrap(),
            "--config",
            fixture("quick.config.json").to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            model.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "train failed: {}", stderr(&out));
        Trained { dir, csv, model }
    })
}
