//! Run configuration. TOML, with unknown keys rejected at every level.
//!
//! ```toml
//! dim = 3
//! alpha = [0, 1]
//! seed = 7
//!
//! [potential]
//! kind = "hardy"        # hardy | zero | decaying | blend | gaussian | bump | table
//! lambda = 2.0
//! # criticality = "subcritical"   # optional; must agree with the classification when one exists
//!
//! [grid]
//! r_min = 1e-8
//! r_max = 1e4
//! points = 4096
//!
//! [modes]
//! k_max = 6
//!
//! [time]
//! t_min = 0.1
//! t_max = 1000.0
//! points_per_decade = 4
//!
//! [[lorentz]]
//! p = 1
//! q = "inf"
//! sigma = 1
//! theta = "inf"
//! ```

use crate::error::{CliError, CliResult};
use hardylab::grid::{Grid, DEFAULT_POINTS, DEFAULT_R_MAX, DEFAULT_R_MIN};
use hardylab::params::{validate_lambda, LorentzParams};
use hardylab::potential::PotentialSpec;
use hardylab::spectral::{classify_criticality, Criticality, CriticalityReport};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// A number, or the string `"inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Extended {
    Num(f64),
    Text(InfWord),
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub enum InfWord {
    #[serde(rename = "inf")]
    Inf,
}

impl Extended {
    pub fn value(self) -> f64 {
        match self {
            Extended::Num(x) => x,
            Extended::Text(InfWord::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    pub kind: String,
    pub lambda: Option<f64>,
    pub a: Option<f64>,
    pub kappa: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub rc: Option<f64>,
    pub width: Option<f64>,
    pub radius: Option<f64>,
    pub r: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub criticality: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridBlock {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { r_min: DEFAULT_R_MIN, r_max: DEFAULT_R_MAX, points: DEFAULT_POINTS }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModesBlock {
    pub k_max: usize,
}

impl Default for ModesBlock {
    fn default() -> Self {
        ModesBlock { k_max: 6 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeBlock {
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_decade: usize,
}

impl Default for TimeBlock {
    fn default() -> Self {
        TimeBlock { t_min: 0.1, t_max: 1e3, points_per_decade: 4 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TupleBlock {
    pub p: Extended,
    pub q: Extended,
    pub sigma: Extended,
    pub theta: Extended,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    /// gaussian | ball | hk_bump
    pub kind: String,
    #[serde(default)]
    pub k: usize,
    /// Gaussian `exp(-r^2 / (4 s))`.
    pub s: Option<f64>,
    pub radius: Option<f64>,
}

fn default_dim() -> usize {
    3
}

fn default_alpha() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub potential: PotentialBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub modes: ModesBlock,
    #[serde(default)]
    pub time: TimeBlock,
    #[serde(default)]
    pub lorentz: Vec<TupleBlock>,
    #[serde(default = "default_alpha")]
    pub alpha: Vec<usize>,
    pub output: Option<PathBuf>,
    /// Recorded in the manifest; the test family itself is deterministic.
    #[serde(default)]
    pub seed: u64,
    pub initial: Option<InitialBlock>,
}

/// A parsed config with everything derived from it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub cfg: RunConfig,
    pub spec: PotentialSpec,
    pub grid: Grid,
    pub tuples: Vec<LorentzParams>,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> CliResult<Loaded> {
    let cfg: RunConfig = toml::from_str(text)?;
    let spec = build_potential(cfg.dim, &cfg.potential)?;
    let g = cfg.grid;
    if !(g.r_min > 0.0 && g.r_min < g.r_max && g.r_max.is_finite()) {
        return Err(CliError::Config(format!("grid needs 0 < r_min < r_max < inf, got [{}, {}]", g.r_min, g.r_max)));
    }
    if g.points < 16 {
        return Err(CliError::Config(format!("grid needs at least 16 points, got {}", g.points)));
    }
    let grid = Grid::geometric(g.r_min, g.r_max, g.points)?;
    let t = cfg.time;
    if !(t.t_min > 0.0 && t.t_min <= t.t_max && t.t_max.is_finite()) {
        return Err(CliError::Config(format!("time needs 0 < t_min <= t_max < inf, got [{}, {}]", t.t_min, t.t_max)));
    }
    if cfg.alpha.is_empty() {
        return Err(CliError::Config("alpha list is empty".into()));
    }
    let a_max = cfg.alpha.iter().copied().max().unwrap_or(0);
    if a_max > hardylab::iterated::MAX_ORDER {
        return Err(CliError::Config(format!(
            "alpha = {a_max} exceeds the supported order {}",
            hardylab::iterated::MAX_ORDER
        )));
    }
    if cfg.modes.k_max < a_max.max(1) {
        return Err(CliError::Config(format!("k_max = {} must be at least max(alpha, 1)", cfg.modes.k_max)));
    }
    let tuples = if cfg.lorentz.is_empty() {
        vec![validate_lambda(1.0, f64::INFINITY, 1.0, f64::INFINITY)?]
    } else {
        cfg.lorentz
            .iter()
            .map(|b| validate_lambda(b.p.value(), b.q.value(), b.sigma.value(), b.theta.value()))
            .collect::<hardylab::error::Result<Vec<_>>>()?
    };
    if let Some(init) = &cfg.initial {
        check_initial(init, cfg.modes.k_max)?;
    }
    Ok(Loaded { spec, grid, tuples, sha256: sha256_hex(text.as_bytes()), cfg })
}

fn check_initial(b: &InitialBlock, k_max: usize) -> CliResult<()> {
    let (need, other) = match b.kind.as_str() {
        "gaussian" => (b.s, b.radius.map(|_| "radius")),
        "ball" | "hk_bump" => (b.radius, b.s.map(|_| "s")),
        k => return Err(CliError::Config(format!("unknown initial kind '{k}' (gaussian, ball, hk_bump)"))),
    };
    if let Some(f) = other {
        return Err(CliError::Config(format!("initial kind '{}' takes no '{f}'", b.kind)));
    }
    match need {
        Some(x) if x > 0.0 && x.is_finite() => {}
        _ => return Err(CliError::Config(format!("initial kind '{}' needs a positive scale", b.kind))),
    }
    if b.k > k_max {
        return Err(CliError::Config(format!("initial mode k = {} exceeds k_max = {k_max}", b.k)));
    }
    Ok(())
}

fn build_potential(dim: usize, b: &PotentialBlock) -> CliResult<PotentialSpec> {
    let present: [(&str, bool); 10] = [
        ("lambda", b.lambda.is_some()),
        ("a", b.a.is_some()),
        ("kappa", b.kappa.is_some()),
        ("lambda1", b.lambda1.is_some()),
        ("lambda2", b.lambda2.is_some()),
        ("rc", b.rc.is_some()),
        ("width", b.width.is_some()),
        ("radius", b.radius.is_some()),
        ("r", b.r.is_some()),
        ("v", b.v.is_some()),
    ];
    let allowed: &[&str] = match b.kind.as_str() {
        "hardy" => &["lambda"],
        "zero" => &[],
        "decaying" => &["a", "kappa"],
        "blend" => &["lambda1", "lambda2", "rc"],
        "gaussian" => &["a", "width"],
        "bump" => &["a", "radius"],
        "table" => &["r", "v"],
        k => {
            return Err(CliError::Config(format!(
                "unknown potential kind '{k}' (hardy, zero, decaying, blend, gaussian, bump, table)"
            )))
        }
    };
    for (name, set) in present {
        if set && !allowed.contains(&name) {
            return Err(CliError::Config(format!("potential kind '{}' takes no '{name}'", b.kind)));
        }
    }
    for name in allowed {
        if !present.iter().any(|(n, s)| n == name && *s) {
            return Err(CliError::Config(format!("potential kind '{}' needs '{name}'", b.kind)));
        }
    }
    let f = |x: Option<f64>| x.unwrap_or_default();
    let spec = match b.kind.as_str() {
        "hardy" => PotentialSpec::hardy(dim, f(b.lambda)),
        "zero" => PotentialSpec::zero(dim),
        "decaying" => PotentialSpec::decaying(dim, f(b.a), f(b.kappa)),
        "blend" => PotentialSpec::blend(dim, f(b.lambda1), f(b.lambda2), f(b.rc)),
        "gaussian" => PotentialSpec::gaussian(dim, f(b.a), f(b.width)),
        "bump" => PotentialSpec::bump(dim, f(b.a), f(b.radius)),
        _ => PotentialSpec::table(dim, b.r.clone().unwrap_or_default(), b.v.clone().unwrap_or_default()),
    }?;
    Ok(spec)
}

fn parse_criticality(s: &str) -> CliResult<Criticality> {
    match s {
        "subcritical" => Ok(Criticality::Subcritical),
        "null-critical" => Ok(Criticality::NullCritical),
        "positive-critical" => Ok(Criticality::PositiveCritical),
        _ => Err(CliError::Config(format!(
            "unknown criticality '{s}' (subcritical, null-critical, positive-critical)"
        ))),
    }
}

/// The classification, with an optional override that may only fill in an unknown result.
pub fn resolve_criticality(l: &Loaded) -> CliResult<(Criticality, CriticalityReport)> {
    let report = classify_criticality(&l.spec, &l.grid)?;
    let Some(text) = &l.cfg.potential.criticality else {
        return Ok((report.class, report));
    };
    let asserted = parse_criticality(text)?;
    if report.class != Criticality::Unknown && report.class != asserted {
        let why = if l.spec.is_pure_inverse_square() {
            format!(
                "an inverse-square potential is critical exactly when lambda = lambda_* = {}; here lambda = {}",
                l.spec.lambda_star(),
                l.spec.lambda1
            )
        } else {
            format!("the large-r exponent of h_0 gives {}", report.class.label())
        };
        return Err(CliError::Core(hardylab::error::Error::Admissibility(format!(
            "criticality override '{}' contradicts the classification: {why}",
            asserted.label()
        ))));
    }
    Ok((asserted, report))
}

/// Geometric time samples; empty when `points_per_decade` is zero.
pub fn times(t: &TimeBlock) -> Vec<f64> {
    if t.points_per_decade == 0 {
        return Vec::new();
    }
    let decades = (t.t_max / t.t_min).log10();
    let n = (decades * t.points_per_decade as f64).round() as usize + 1;
    if n == 1 {
        return vec![t.t_min];
    }
    (0..n).map(|i| t.t_min * (t.t_max / t.t_min).powf(i as f64 / (n - 1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "[potential]\nkind = \"hardy\"\nlambda = 2.0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let l = parse(BASE).unwrap();
        assert_eq!(l.cfg.dim, 3);
        assert_eq!(l.grid.len(), DEFAULT_POINTS);
        assert_eq!(l.tuples.len(), 1);
        assert!(l.tuples[0].q.is_infinite());
        assert_eq!(times(&l.cfg.time).len(), 17);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(parse(&format!("{BASE}lamda = 1\n")), Err(CliError::Config(_))));
        assert!(matches!(parse(&format!("{BASE}[grid]\npoint = 10\n")), Err(CliError::Config(_))));
        assert!(matches!(parse("dim = 3\nfoo = 1\n[potential]\nkind = \"zero\"\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn potential_fields_checked_per_kind() {
        let e = parse("[potential]\nkind = \"decaying\"\na = 1\n").unwrap_err();
        assert!(e.to_string().contains("kappa"), "{e}");
        let e = parse("[potential]\nkind = \"zero\"\nlambda = 1\n").unwrap_err();
        assert!(e.to_string().contains("lambda"), "{e}");
    }

    #[test]
    fn lorentz_tuples_parse_inf_and_validate() {
        let ok = format!("{BASE}[[lorentz]]\np = 2\nq = \"inf\"\nsigma = 2\ntheta = inf\n");
        let l = parse(&ok).unwrap();
        assert_eq!(l.tuples[0].p, 2.0);
        assert!(l.tuples[0].theta.is_infinite());
        let bad = format!("{BASE}[[lorentz]]\np = 3\nq = 2\nsigma = 2\ntheta = 2\n");
        let e = parse(&bad).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let word = format!("{BASE}[[lorentz]]\np = 2\nq = \"infinity\"\nsigma = 2\ntheta = 2\n");
        assert!(parse(&word).is_err());
    }

    #[test]
    fn ranges_checked() {
        assert!(parse(&format!("{BASE}[time]\nt_min = 10\nt_max = 1\n")).is_err());
        assert!(parse(&format!("{BASE}[grid]\nr_min = 0\n")).is_err());
        assert!(parse(&format!("alpha = [4]\n{BASE}")).is_err());
        assert!(parse(&format!("alpha = [2]\n{BASE}[modes]\nk_max = 1\n")).is_err());
    }

    #[test]
    fn hardy_floor_override_rejected() {
        let l = parse("[potential]\nkind = \"hardy\"\nlambda = -0.25\ncriticality = \"subcritical\"\n").unwrap();
        let e = resolve_criticality(&l).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("lambda_*"), "{e}");
        let l = parse("[potential]\nkind = \"hardy\"\nlambda = -0.25\n").unwrap();
        assert!(resolve_criticality(&l).unwrap().0.is_critical());
    }

    #[test]
    fn time_samples() {
        let t = TimeBlock { t_min: 0.1, t_max: 100.0, points_per_decade: 3 };
        let s = times(&t);
        assert_eq!(s.len(), 10);
        assert!((s[9] - 100.0).abs() < 1e-9);
        assert!(times(&TimeBlock { points_per_decade: 0, ..t }).is_empty());
    }
}
