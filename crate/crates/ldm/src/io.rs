//! CSV tables with 17-significant-digit numbers, and content hashes of what was written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use ldm_core::analytics::{CorrelationCurve, ValueSurface};
use ldm_core::coeffs::{DriftCoeffs, DriftLoadings, HoldingLoadings, HoldingsCoeffs};
use ldm_core::sim::PathTrajectory;
use ldm_core::EquilibriumCurves;

/// Round-trips every finite double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push_nums(&mut self, row: impl IntoIterator<Item = f64>) {
        let row: Vec<String> = row.into_iter().map(num).collect();
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes files under one directory and remembers their hashes in write order.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    pub files: Vec<FileRecord>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<&FileRecord> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileRecord { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(self.files.last().expect("just pushed"))
    }

    pub fn write_table(&mut self, rel: &str, t: &Table) -> Result<&FileRecord> {
        self.write(rel, &t.to_bytes())
    }
}

pub fn curves_table(c: &EquilibriumCurves) -> Table {
    let mut t = Table::new(["t", "B", "Bprime", "A", "Sigma", "F1", "F2"]);
    for k in 0..c.len() {
        t.push_nums([c.t(k), c.b[k], c.b_prime[k], c.a[k], c.sigma_filt[k], c.f1[k], c.f2[k]]);
    }
    t
}

pub fn holdings_table(c: &EquilibriumCurves, h: &HoldingsCoeffs) -> Table {
    let mut t = Table::new(std::iter::once("t").chain(HoldingLoadings::NAMES));
    for (k, l) in h.nodes.iter().enumerate() {
        t.push_nums(std::iter::once(c.t(k)).chain(l.values()));
    }
    t
}

pub fn drift_table(c: &EquilibriumCurves, d: &DriftCoeffs) -> Table {
    let mut t = Table::new(std::iter::once("t").chain(DriftLoadings::NAMES));
    for (k, l) in d.nodes.iter().enumerate() {
        t.push_nums(std::iter::once(c.t(k)).chain(l.values()));
    }
    t
}

pub fn correlation_table(c: &CorrelationCurve) -> Table {
    let mut t = Table::new(["t", "estimate", "se", "h"]);
    for k in 0..c.len() {
        t.push_nums([c.t[k], c.estimate[k], c.se[k], c.h]);
    }
    t
}

pub fn drift_variance_table(c: &EquilibriumCurves, v: &[f64]) -> Table {
    let mut t = Table::new(["t", "variance"]);
    for (k, x) in v.iter().enumerate() {
        t.push_nums([c.t(k), *x]);
    }
    t
}

/// `RC` is empty when the grid lacks `a_i = 0`.
pub fn value_table(s: &ValueSurface) -> Table {
    let mut t = Table::new(["a_i", "J", "J_se", "RC"]);
    for k in 0..s.a_grid.len() {
        let rc = s.rc.as_ref().map(|r| num(r.rc[k])).unwrap_or_default();
        t.push(vec![num(s.a_grid[k]), num(s.j[k]), num(s.j_se[k]), rc]);
    }
    t
}

/// Values of one [`ldm_core::sim::SERIES`] entry on one trajectory, one per node, or `M` per
/// node for rebalancer series.
pub fn series_values<'a>(tr: &'a PathTrajectory, name: &str) -> Option<&'a [f64]> {
    Some(match name {
        "reb_holding" => &tr.reb,
        "trk_holding" => &tr.trk,
        "price" => &tr.price,
        "eta" => &tr.eta,
        "Y" => &tr.y,
        "q" => &tr.q,
        "w" => &tr.w,
        "trk_drift" => &tr.trk_drift,
        "reb_drift" => &tr.reb_drift,
        "reb_wealth" => &tr.reb_wealth,
        "trk_wealth" => &tr.trk_wealth,
        _ => return None,
    })
}

/// Long-format `t,path_id,value`. Rebalancer series report rebalancer 0.
pub fn series_table(c: &EquilibriumCurves, paths: &[PathTrajectory], name: &str) -> Option<Table> {
    let mut t = Table::new(["t", "path_id", "value"]);
    for tr in paths {
        let v = series_values(tr, name)?;
        let per = v.len() / tr.nodes();
        for k in 0..tr.nodes() {
            t.push(vec![num(c.t(k)), tr.path_id.to_string(), num(v[k * per])]);
        }
    }
    Some(t)
}
