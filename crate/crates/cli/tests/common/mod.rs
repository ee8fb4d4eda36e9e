#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hse_core::loadmetrics::{AthleteProfile, Sex};
use tempfile::TempDir;

pub const KNOWLEDGE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/fixtures/knowledge/cycling_cardiac.json"
);
pub const RULES: &str = "VolOverload := (HR > 140) ∨ (Cycling ∧ detect-climb(Altitude))\n\
                         PressOverload := detect-spike(HR) ∨ (Power > 400 W)\n";

/// 2024-01-01T00:00:00Z.
pub const JAN1: i64 = 1_704_067_200;
pub const DAY: i64 = 86_400;

pub fn profile(mass_kg: f64) -> AthleteProfile {
    AthleteProfile {
        mass_kg,
        height_cm: 170.0,
        sex: Sex::Male,
        age_years: 30.0,
        hr_rest: 48.0,
        hr_max: None,
    }
}

/// One activity CSV: `t` from `t0`, one row per second, one column per
/// `(name, f(second))`.
pub fn ride_csv(t0: i64, seconds: i64, cols: &[(&str, &dyn Fn(i64) -> f64)]) -> String {
    let mut out = String::from("t");
    for (name, _) in cols {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    for k in 0..seconds {
        write!(out, "{}", t0 + k).unwrap();
        for (_, f) in cols {
            write!(out, ",{}", f(k)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub struct Env {
    pub dir: TempDir,
}

impl Env {
    pub fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn store(&self) -> PathBuf {
        self.path("store")
    }

    pub fn write(&self, name: &str, content: &str) -> PathBuf {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).unwrap();
        }
        std::fs::write(&p, content).unwrap();
        p
    }

    pub fn raw(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_hse"))
            .arg("--store")
            .arg(self.store())
            .args(args)
            .env_remove("HSE_LOG")
            .output()
            .unwrap()
    }

    /// Runs a command that must succeed and returns its stdout.
    pub fn ok(&self, args: &[&str]) -> String {
        let out = self.raw(args);
        assert!(
            out.status.success(),
            "hse {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    /// Runs a command that must fail; returns (exit code, stderr).
    pub fn fails(&self, args: &[&str]) -> (i32, String) {
        let out = self.raw(args);
        assert!(!out.status.success(), "hse {args:?} unexpectedly succeeded");
        (
            out.status.code().unwrap(),
            String::from_utf8(out.stderr).unwrap(),
        )
    }

    pub fn init(&self, p: &AthleteProfile, extra: &[&str]) -> String {
        let prof = self.write("profile.json", &serde_json::to_string(p).unwrap());
        let mut args = vec![
            "init",
            "--intent",
            "cycling",
            "--knowledge",
            KNOWLEDGE,
            "--profile",
        ];
        let prof = prof.to_str().unwrap().to_string();
        args.push(&prof);
        args.extend_from_slice(extra);
        self.ok(&args)
    }

    pub fn ingest(&self, files: &[PathBuf], extra: &[&str]) -> String {
        let mut args: Vec<String> = vec!["ingest".into()];
        args.extend(files.iter().map(|p| p.to_str().unwrap().to_string()));
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        self.ok(&refs)
    }
}

pub fn as_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses CSV text into header and rows.
pub fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .take_while(|l| !l.is_empty())
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

pub fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Vec<&'a str> {
    let i = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].as_str()).collect()
}
