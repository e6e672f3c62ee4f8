//! Flat key-value parameter files and the resolved scenario a command runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use ldm_core::sim::StepMode;
use ldm_core::{EquilibriumKind, ModelParams, PenaltySpec, TimeGrid};

/// Every key a parameter file may contain, in render order.
pub const KEYS: [&str; 12] = ["M", "Mbar", "sigma_a", "sigma_w0", "gamma", "alpha", "B0", "kappa.kind", "kappa.c0", "kappa.c1", "grid.n_steps", "kind"];

pub const DEFAULT_STEPS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindSelection {
    One(EquilibriumKind),
    Both,
}

impl KindSelection {
    pub fn kinds(self) -> Vec<EquilibriumKind> {
        match self {
            KindSelection::One(k) => vec![k],
            KindSelection::Both => EquilibriumKind::ALL.to_vec(),
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            KindSelection::One(k) => k.slug(),
            KindSelection::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "price-impact" => Some(KindSelection::One(EquilibriumKind::PriceImpact)),
            "nash" => Some(KindSelection::One(EquilibriumKind::Nash)),
            "both" => Some(KindSelection::Both),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based; 0 when the error concerns the file as a whole.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

/// Contents of one parameter file.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamFile {
    pub params: ModelParams,
    pub kind: KindSelection,
    pub grid: TimeGrid,
}

impl ParamFile {
    /// Caption parameterization of the holdings figures at `(gamma, sigma_w0) = (1, 1)`.
    pub fn figure_default() -> Self {
        ParamFile { params: ModelParams::figure_base(1.0, 1.0), kind: KindSelection::One(EquilibriumKind::PriceImpact), grid: TimeGrid::new(DEFAULT_STEPS) }
    }

    /// Canonical text; `parse_param_file` reads it back to an equal value.
    ///
    /// Panics on tabulated penalties, which the file format cannot express.
    pub fn render(&self) -> String {
        let p = &self.params;
        let (kind, c0, c1) = match &p.kappa {
            PenaltySpec::Constant(c) => ("constant", *c, None),
            PenaltySpec::Affine { c0, c1 } => ("affine", *c0, Some(*c1)),
            PenaltySpec::Tabulated(_) => panic!("tabulated kappa has no parameter-file form"),
        };
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("M", p.m_rebalancers.to_string());
        put("Mbar", p.m_trackers.to_string());
        put("sigma_a", format!("{:?}", p.sigma_a));
        put("sigma_w0", format!("{:?}", p.sigma_w0));
        put("gamma", format!("{:?}", p.gamma));
        put("alpha", format!("{:?}", p.alpha));
        put("B0", format!("{:?}", p.b0));
        put("kappa.kind", kind.to_string());
        put("kappa.c0", format!("{c0:?}"));
        if let Some(c1) = c1 {
            put("kappa.c1", format!("{c1:?}"));
        }
        put("grid.n_steps", self.grid.n_steps.to_string());
        put("kind", self.kind.slug().to_string());
        s
    }
}

fn real(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| err(line, format!("{key}: '{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(err(line, format!("{key}: '{v}' is not finite")));
    }
    Ok(x)
}

fn count(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| err(line, format!("{key}: '{v}' is not a nonnegative integer")))
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
///
/// Unknown and repeated keys are errors. `kappa.kind` defaults to `constant`, `grid.n_steps` to
/// 2000 and `kind` to `price-impact`; `kappa.c1` is required for affine penalties and rejected
/// otherwise. Model constraints are checked later, per equilibrium kind.
pub fn parse_param_file(text: &str) -> Result<ParamFile, ConfigError> {
    let mut seen: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body.split_once('=').ok_or_else(|| err(line, format!("expected 'key = value', got '{body}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let key = *KEYS.iter().find(|x| **x == k).ok_or_else(|| err(line, format!("unknown key '{k}'")))?;
        if v.is_empty() {
            return Err(err(line, format!("{key}: missing value")));
        }
        if let Some((first, _)) = seen.insert(key, (line, v)) {
            return Err(err(line, format!("{key}: already set on line {first}")));
        }
    }
    let need = |k: &str| seen.get(k).copied().ok_or_else(|| err(0, format!("missing required key '{k}'")));
    let num = |k: &str| need(k).and_then(|(l, v)| real(l, k, v));
    let m_rebalancers = need("M").and_then(|(l, v)| count(l, "M", v))?;
    let m_trackers = need("Mbar").and_then(|(l, v)| count(l, "Mbar", v))?;
    let c0 = num("kappa.c0")?;
    let kappa = match seen.get("kappa.kind").map(|x| x.1).unwrap_or("constant") {
        "constant" => {
            if let Some((l, _)) = seen.get("kappa.c1") {
                return Err(err(*l, "kappa.c1 is only allowed with kappa.kind = affine"));
            }
            PenaltySpec::Constant(c0)
        }
        "affine" => PenaltySpec::Affine { c0, c1: num("kappa.c1")? },
        other => {
            let l = seen["kappa.kind"].0;
            return Err(err(l, format!("kappa.kind: '{other}' is not one of constant, affine")));
        }
    };
    let params = ModelParams {
        m_rebalancers,
        m_trackers,
        sigma_a: num("sigma_a")?,
        sigma_w0: num("sigma_w0")?,
        gamma: num("gamma")?,
        alpha: num("alpha")?,
        b0: num("B0")?,
        kappa,
    };
    let n_steps = match seen.get("grid.n_steps") {
        Some((l, v)) => count(*l, "grid.n_steps", v)?,
        None => DEFAULT_STEPS,
    };
    if n_steps < 2 {
        return Err(err(seen["grid.n_steps"].0, "grid.n_steps must be at least 2"));
    }
    let kind = match seen.get("kind") {
        Some((l, v)) => KindSelection::parse(v).ok_or_else(|| err(*l, format!("kind: '{v}' is not one of price-impact, nash, both")))?,
        None => KindSelection::One(EquilibriumKind::PriceImpact),
    };
    Ok(ParamFile { params, kind, grid: TimeGrid::new(n_steps) })
}

/// Everything one command needs, after flags override the parameter file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub file: ParamFile,
    pub n_paths: usize,
    pub mode: StepMode,
    /// Keep every trajectory so per-path series can be written.
    pub full_retention: bool,
    /// Per-path series to export under full retention.
    pub series: Vec<String>,
    /// Correlation bandwidths in grid steps.
    pub strides: Vec<usize>,
    pub figures: Vec<String>,
    /// Keep every `every`-th node in figure datasets.
    pub every: usize,
    pub value_grid: Vec<f64>,
    pub oracle_paths: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Test hook: add `delta` to one named holdings loading at every node.
    pub perturb: Option<(String, f64)>,
}

/// Every panel `figures` can emit.
pub const PANELS: [&str; 17] = ["1A", "1B", "1C", "1D", "1E", "2A", "2B", "3A", "3B", "3C", "3D", "3E", "4A", "4B", "6A", "6B", "all"];

/// `-6, -5.5, ..., 6`
pub fn default_value_grid() -> Vec<f64> {
    (0..=24).map(|k| -6.0 + 0.5 * k as f64).collect()
}

impl ScenarioConfig {
    pub fn new(file: ParamFile, out_dir: PathBuf) -> Self {
        ScenarioConfig {
            file,
            n_paths: 1000,
            mode: StepMode::Euler,
            full_retention: false,
            series: Vec::new(),
            strides: vec![2, 4],
            figures: vec!["all".into()],
            every: 1,
            value_grid: default_value_grid(),
            oracle_paths: 100_000,
            out_dir,
            seed: 1,
            perturb: None,
        }
    }

    pub fn kinds(&self) -> Vec<EquilibriumKind> {
        self.file.kind.kinds()
    }

    /// Budget and figure checks plus the model constraints of every selected kind.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.n_paths == 0 || self.oracle_paths == 0 {
            return Err(err(0, "path budgets must be positive"));
        }
        if self.every == 0 {
            return Err(err(0, "figure subsampling step must be positive"));
        }
        if let Some(f) = self.figures.iter().find(|f| !PANELS.contains(&f.as_str())) {
            return Err(err(0, format!("unknown figure panel '{f}'")));
        }
        if !self.series.is_empty() && !self.full_retention {
            return Err(err(0, "per-path series need full retention"));
        }
        if let Some(s) = self.series.iter().find(|s| !ldm_core::sim::SERIES.contains(&s.as_str())) {
            return Err(err(0, format!("unknown series '{s}'")));
        }
        if let Some((name, _)) = &self.perturb {
            if !ldm_core::coeffs::HoldingLoadings::NAMES.contains(&name.as_str()) {
                return Err(err(0, format!("unknown holdings loading '{name}'")));
            }
        }
        for kind in self.kinds() {
            self.file.params.validate(kind).map_err(|e| err(0, format!("{kind}: {e}")))?;
        }
        Ok(())
    }

    /// Whether panel `id` is requested.
    pub fn wants(&self, id: &str) -> bool {
        self.figures.iter().any(|f| f == "all" || f == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = "\
# holdings figure, red trajectory
M = 5
Mbar = 10
sigma_a = 1
sigma_w0 = 1
gamma = 1
alpha = 0
B0 = -0.2
kappa.kind = constant
kappa.c0 = 1
";

    #[test]
    fn figure_file_parses_to_defaults() {
        let f = parse_param_file(FIG1).unwrap();
        assert_eq!(f, ParamFile::figure_default());
        assert_eq!(parse_param_file(&f.render()).unwrap(), f);
    }

    #[test]
    fn rejects_unknown_repeated_and_malformed() {
        let e = parse_param_file(&format!("{FIG1}kappa.c2 = 1\n")).unwrap_err();
        assert_eq!(e.line, 11);
        assert!(e.message.contains("unknown key"));
        assert!(parse_param_file(&format!("{FIG1}M = 4\n")).unwrap_err().message.contains("already set on line 2"));
        assert!(parse_param_file(&FIG1.replace("B0 = -0.2", "")).unwrap_err().message.contains("'B0'"));
        assert!(parse_param_file(&FIG1.replace("gamma = 1", "gamma = fast")).is_err());
        assert!(parse_param_file(&FIG1.replace("gamma = 1", "gamma = inf")).is_err());
        assert!(parse_param_file(&FIG1.replace("M = 5", "M = -1")).is_err());
        assert!(parse_param_file(&FIG1.replace("M = 5", "M 5")).is_err());
        assert!(parse_param_file(&format!("{FIG1}kappa.c1 = 1\n")).is_err());
        assert!(parse_param_file(&format!("{FIG1}kind = sideways\n")).is_err());
        assert!(parse_param_file(&format!("{FIG1}grid.n_steps = 1\n")).is_err());
    }

    #[test]
    fn affine_penalty_and_kind() {
        let text = FIG1.replace("kappa.kind = constant", "kappa.kind = affine") + "kappa.c1 = 0.5\nkind = both\ngrid.n_steps = 400\n";
        let f = parse_param_file(&text).unwrap();
        assert_eq!(f.params.kappa, PenaltySpec::Affine { c0: 1.0, c1: 0.5 });
        assert_eq!(f.kind, KindSelection::Both);
        assert_eq!(f.grid.n_steps, 400);
        assert_eq!(parse_param_file(&f.render()).unwrap(), f);
        assert!(parse_param_file(&FIG1.replace("kappa.kind = constant", "kappa.kind = affine")).is_err());
    }

    #[test]
    fn scenario_checks_model_constraints_per_kind() {
        let mut f = ParamFile::figure_default();
        f.params.m_rebalancers = 1;
        f.params.m_trackers = 1;
        let mut sc = ScenarioConfig::new(f, PathBuf::from("out"));
        assert!(sc.check().is_ok());
        sc.file.kind = KindSelection::One(EquilibriumKind::Nash);
        assert!(sc.check().unwrap_err().message.contains("Nash kind needs"));
        sc.file.kind = KindSelection::Both;
        sc.file.params.m_trackers = 0;
        assert!(sc.check().unwrap_err().message.contains("Mbar must be at least 1"));
        let mut ok = ScenarioConfig::new(ParamFile::figure_default(), PathBuf::from("out"));
        ok.figures = vec!["5A".into()];
        assert!(ok.check().is_err());
        assert_eq!(default_value_grid().len(), 25);
        assert_eq!(default_value_grid()[12], 0.0);
    }
}
