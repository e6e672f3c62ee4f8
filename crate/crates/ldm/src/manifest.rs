//! JSON run manifests. Struct fields serialize in declaration order and free-form reports use
//! sorted maps, so key order is stable.

use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::config::ScenarioConfig;
use crate::io::{sha256_hex, FileRecord};

pub const TOOL: &str = "ldm";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Inputs that, with the tool version, determine every emitted file.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub param_file: String,
    pub param_sha256: String,
    pub kind: &'static str,
    pub n_steps: usize,
    pub n_paths: usize,
    pub mode: &'static str,
    pub full_retention: bool,
    pub series: Vec<String>,
    pub strides: Vec<usize>,
    pub figures: Vec<String>,
    pub every: usize,
    pub value_grid: Vec<f64>,
    pub oracle_paths: usize,
    pub seed: u64,
    pub perturb: Option<(String, f64)>,
}

impl ConfigEcho {
    pub fn of(sc: &ScenarioConfig) -> Self {
        let param_file = sc.file.render();
        ConfigEcho {
            param_sha256: sha256_hex(param_file.as_bytes()),
            param_file,
            kind: sc.file.kind.slug(),
            n_steps: sc.file.grid.n_steps,
            n_paths: sc.n_paths,
            mode: sc.mode.slug(),
            full_retention: sc.full_retention,
            series: sc.series.clone(),
            strides: sc.strides.clone(),
            figures: sc.figures.clone(),
            every: sc.every,
            value_grid: sc.value_grid.clone(),
            oracle_paths: sc.oracle_paths,
            seed: sc.seed,
            perturb: sc.perturb.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub wall_seconds: f64,
}

/// One pass/fail line of an identity or oracle check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub kind: &'static str,
    pub name: String,
    /// `None` when the value is not finite.
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: ConfigEcho,
    pub stages: Vec<Stage>,
    pub checks: Vec<Check>,
    pub all_checks_passed: bool,
    pub report: Value,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new(command: &str, sc: &ScenarioConfig) -> Self {
        RunManifest {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config: ConfigEcho::of(sc),
            stages: Vec::new(),
            checks: Vec::new(),
            all_checks_passed: true,
            report: Value::Object(Default::default()),
            files: Vec::new(),
        }
    }

    /// Runs `f` and records its wall time under `name`.
    pub fn stage<T>(&mut self, name: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages.push(Stage { name: name.into(), wall_seconds: t0.elapsed().as_secs_f64() });
        out
    }

    pub fn check(&mut self, kind: &'static str, name: impl Into<String>, value: f64, tolerance: Option<f64>, passed: bool) {
        self.all_checks_passed &= passed;
        let value = value.is_finite().then_some(value);
        self.checks.push(Check { kind, name: name.into(), value, tolerance, passed });
    }

    /// Stores `v` under `key` in the report object.
    pub fn report(&mut self, key: &str, v: Value) {
        if let Value::Object(m) = &mut self.report {
            m.insert(key.to_string(), v);
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
