//! Exponent arithmetic, criticality and nonnegativity of radial potentials.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::harmonic::solve_h;
use crate::potential::{hardy_constant, PotentialSpec};

pub const DEFAULT_K_MAX: usize = 12;
const FIT_TOL: f64 = 0.05;
const ROOT_GAP: f64 = 0.2;

/// `omega_k = k (N + k - 2)`.
pub fn omega(k: usize, n: usize) -> f64 {
    (k * (n + k - 2)) as f64
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication.
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

/// Dimension of the degree-`k` spherical harmonics on `S^{N-1}`, exactly.
pub fn eigenspace_dimension(k: usize, n: usize) -> Result<u128> {
    let (k, n) = (k as u128, n as u128);
    let over = || Error::Overflow(format!("d_k for k={k}, N={n}"));
    let a = binomial(n + k - 1, k).ok_or_else(over)?;
    let b = if k >= 2 { binomial(n + k - 3, k - 2).ok_or_else(over)? } else { 0 };
    Ok(a - b)
}

/// Roots `(A^+, A^-)` of `A (A + N - 2) = lambda`.
pub fn a_exponents(lambda: f64, n: usize) -> Result<(f64, f64)> {
    let floor = hardy_constant(n);
    if !(lambda >= floor - 1e-12) {
        return Err(Error::BelowHardy { lambda, floor });
    }
    let m = n as f64 - 2.0;
    let d = (m * m + 4.0 * lambda).max(0.0).sqrt();
    Ok(((-m + d) / 2.0, (-m - d) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Subcritical,
    NullCritical,
    PositiveCritical,
    Unknown,
}

impl Criticality {
    pub fn is_critical(self) -> bool {
        matches!(self, Criticality::NullCritical | Criticality::PositiveCritical)
    }

    pub fn label(self) -> &'static str {
        match self {
            Criticality::Subcritical => "subcritical",
            Criticality::NullCritical => "null-critical",
            Criticality::PositiveCritical => "positive-critical",
            Criticality::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentRow {
    pub k: usize,
    pub omega: f64,
    pub d_k: u128,
    pub a1: f64,
    pub a2: f64,
    pub b: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentTable {
    pub dim: usize,
    pub criticality: Criticality,
    pub rows: Vec<ExponentRow>,
    /// Fitted `c_k`, filled in by callers that solved the profiles.
    pub c_k: Vec<Option<f64>>,
}

impl ExponentTable {
    pub fn row(&self, k: usize) -> &ExponentRow {
        &self.rows[k]
    }

    pub fn k_max(&self) -> usize {
        self.rows.len() - 1
    }
}

pub fn exponent_table(spec: &PotentialSpec, criticality: Criticality, k_max: usize) -> Result<ExponentTable> {
    spec.validate()?;
    let n = spec.dim;
    let critical = match criticality {
        Criticality::Subcritical => false,
        Criticality::NullCritical | Criticality::PositiveCritical => true,
        Criticality::Unknown => {
            return Err(Error::Ambiguous("criticality is unknown; assert it explicitly".into()))
        }
    };
    let at_floor = (spec.lambda2 - spec.lambda_star()).abs() < 1e-12;
    let mut rows = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let om = omega(k, n);
        let (a1, _) = a_exponents(spec.lambda1 + om, n)?;
        let (p2, m2) = a_exponents(spec.lambda2 + om, n)?;
        let a2 = if k == 0 && critical { m2 } else { p2 };
        let b = u8::from(k == 0 && at_floor && !critical);
        rows.push(ExponentRow { k, omega: om, d_k: eigenspace_dimension(k, n)?, a1, a2, b });
    }
    if critical && !(rows[0].a2 > -(n as f64) / 2.0) {
        return Err(Error::Admissibility(format!(
            "critical operator needs A_2,0 > -N/2, got A_2,0 = {} (h_0 is square integrable)",
            rows[0].a2
        )));
    }
    Ok(ExponentTable { dim: n, criticality, rows, c_k: vec![None; k_max + 1] })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassificationMethod {
    Analytic,
    /// Large-r exponent of the numerically solved `h_0`.
    ExponentFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalityReport {
    pub class: Criticality,
    pub method: ClassificationMethod,
    pub fitted_exponent: Option<f64>,
    pub roots: (f64, f64),
    pub note: String,
}

fn split_critical(a_minus: f64, n: usize) -> Criticality {
    if 2.0 * a_minus + n as f64 >= 0.0 {
        Criticality::NullCritical
    } else {
        Criticality::PositiveCritical
    }
}

pub fn classify_criticality(spec: &PotentialSpec, grid: &Grid) -> Result<CriticalityReport> {
    spec.validate()?;
    let n = spec.dim;
    let roots = a_exponents(spec.lambda2, n)?;
    if spec.is_pure_inverse_square() {
        let critical = (spec.lambda1 - spec.lambda_star()).abs() < 1e-12;
        let class = if critical { split_critical(roots.1, n) } else { Criticality::Subcritical };
        return Ok(CriticalityReport {
            class,
            method: ClassificationMethod::Analytic,
            fitted_exponent: None,
            roots,
            note: "inverse-square potential: subcritical iff lambda > lambda_*".into(),
        });
    }
    let h = solve_h(spec, 0, grid)?;
    let r = h.radii();
    let v = h.values();
    let last = r.len() - 1;
    let lo = r.partition_point(|x| *x < r[last] / 10.0).min(last - 1);
    let at_floor = (roots.0 - roots.1).abs() < 1e-12;
    if at_floor {
        // Both roots coincide: subcritical carries one extra power of ln r.
        let a = roots.0;
        let q = |i: usize| (v[i] / r[i].powf(a)).ln();
        let slope = (q(last) - q(lo)) / (r[last].ln().ln() - r[lo].ln().ln());
        let class = if (slope - 1.0).abs() < 0.25 {
            Criticality::Subcritical
        } else if slope.abs() < 0.25 {
            split_critical(roots.1, n)
        } else {
            Criticality::Unknown
        };
        return Ok(CriticalityReport {
            class,
            method: ClassificationMethod::ExponentFit,
            fitted_exponent: Some(slope),
            roots,
            note: "lambda2 = lambda_*: fitted log power of h_0 / r^A".into(),
        });
    }
    let fitted = (v[last] / v[lo]).ln() / (r[last] / r[lo]).ln();
    let gap_ok = roots.0 - roots.1 >= ROOT_GAP;
    let class = if !gap_ok {
        Criticality::Unknown
    } else if (fitted - roots.0).abs() < FIT_TOL {
        Criticality::Subcritical
    } else if (fitted - roots.1).abs() < FIT_TOL {
        split_critical(roots.1, n)
    } else {
        Criticality::Unknown
    };
    Ok(CriticalityReport {
        class,
        method: ClassificationMethod::ExponentFit,
        fitted_exponent: Some(fitted),
        roots,
        note: "numerical classification from the large-r exponent of h_0".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonnegativityReport {
    pub nonnegative: bool,
    /// Smallest eigenvalue of the discretized radial operator (analytic case: `lambda - lambda_*`).
    pub evidence: f64,
    pub analytic: bool,
}

/// Number of eigenvalues below `mu` of the symmetric tridiagonal matrix `(d, e)`.
fn sturm_count(d: &[f64], e: &[f64], mu: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..d.len() {
        let off = if i == 0 { 0.0 } else { e[i - 1] * e[i - 1] };
        q = d[i] - mu - if i == 0 { 0.0 } else { off / q };
        if q == 0.0 {
            q = 1e-300;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Bottom of the radial (`k = 0`) spectrum on a large ball with Dirichlet walls.
pub fn check_nonnegativity(spec: &PotentialSpec) -> NonnegativityReport {
    let n = spec.dim;
    if spec.is_pure_inverse_square() {
        let margin = spec.lambda1 - hardy_constant(n);
        return NonnegativityReport { nonnegative: margin >= -1e-12, evidence: margin, analytic: true };
    }
    const TOL: f64 = 1e-6;
    let (r_lo, r_hi, m) = (1e-4, 2e3, 3000usize);
    let ratio = (r_hi / r_lo as f64).powf(1.0 / (m + 1) as f64);
    let nodes: Vec<f64> = (0..m + 2).map(|i| r_lo * ratio.powi(i as i32)).collect();
    let w = |x: f64| x.powi(n as i32 - 1);
    // Interior unknowns 1..=m; conductances between consecutive nodes.
    let cond: Vec<f64> = (0..m + 1)
        .map(|i| {
            let mid = (nodes[i] * nodes[i + 1]).sqrt();
            w(mid) / (nodes[i + 1] - nodes[i])
        })
        .collect();
    let mut d = vec![0.0; m];
    let mut e = vec![0.0; m.saturating_sub(1)];
    let mass: Vec<f64> = (1..=m).map(|i| w(nodes[i]) * 0.5 * (nodes[i + 1] - nodes[i - 1])).collect();
    for j in 0..m {
        let i = j + 1;
        d[j] = (cond[i - 1] + cond[i]) / mass[j] + spec.v(nodes[i]);
        if j + 1 < m {
            e[j] = -cond[i] / (mass[j] * mass[j + 1]).sqrt();
        }
    }
    // Gershgorin bounds, then bisection on the Sturm count.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..m {
        let rad = if j > 0 { e[j - 1].abs() } else { 0.0 } + if j + 1 < m { e[j].abs() } else { 0.0 };
        lo = lo.min(d[j] - rad);
        hi = hi.max(d[j] + rad);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(&d, &e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    NonnegativityReport { nonnegative: mu >= -TOL, evidence: mu, analytic: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        assert_eq!(omega(1, 3), 2.0);
        assert_eq!(omega(2, 4), 8.0);
        assert_eq!(eigenspace_dimension(0, 3).unwrap(), 1);
        assert_eq!(eigenspace_dimension(1, 3).unwrap(), 3);
        assert_eq!(eigenspace_dimension(2, 3).unwrap(), 5);
        assert_eq!(eigenspace_dimension(3, 4).unwrap(), 16);
        assert!(eigenspace_dimension(2000, 60).is_err());
        assert_eq!(a_exponents(2.0, 3).unwrap(), (1.0, -2.0));
        assert_eq!(a_exponents(-0.25, 3).unwrap(), (-0.5, -0.5));
        assert!(a_exponents(-0.3, 3).is_err());
    }

    #[test]
    fn tables() {
        let z = PotentialSpec::zero(3).unwrap();
        let t = exponent_table(&z, Criticality::Subcritical, 6).unwrap();
        for row in &t.rows {
            assert!((row.a1 - row.k as f64).abs() < 1e-12 && (row.a2 - row.k as f64).abs() < 1e-12);
        }
        let crit = PotentialSpec::hardy(3, -0.25).unwrap();
        let t = exponent_table(&crit, Criticality::Subcritical, 2).unwrap();
        assert_eq!(t.rows[0].b, 1);
        let t = exponent_table(&crit, Criticality::NullCritical, 2).unwrap();
        assert_eq!(t.rows[0].b, 0);
        assert!(exponent_table(&crit, Criticality::Unknown, 2).is_err());
    }

    #[test]
    fn nonnegativity() {
        assert!(!check_nonnegativity(&PotentialSpec::constant(3, -1.0)).nonnegative);
        assert!(check_nonnegativity(&PotentialSpec::hardy(3, -0.25).unwrap()).nonnegative);
        assert!(check_nonnegativity(&PotentialSpec::decaying(3, 1.0, 4.0).unwrap()).nonnegative);
        assert!(check_nonnegativity(&PotentialSpec::gaussian(3, -1.0, 1.0).unwrap()).nonnegative);
        assert!(!check_nonnegativity(&PotentialSpec::gaussian(3, -5.0, 1.0).unwrap()).nonnegative);
        let c = check_nonnegativity(&PotentialSpec::constant(3, -1.0));
        assert!((c.evidence + 1.0).abs() < 1e-2);
    }

    #[test]
    fn criticality() {
        let g = Grid::default_grid();
        let c = |s: PotentialSpec| classify_criticality(&s, &g).unwrap().class;
        assert_eq!(c(PotentialSpec::hardy(3, 0.75).unwrap()), Criticality::Subcritical);
        assert_eq!(c(PotentialSpec::hardy(3, -0.25).unwrap()), Criticality::NullCritical);
        assert_eq!(c(PotentialSpec::zero(3).unwrap()), Criticality::Subcritical);
        assert_eq!(c(PotentialSpec::zero(2).unwrap()), Criticality::NullCritical);
        assert_eq!(c(PotentialSpec::decaying(3, 1.0, 4.0).unwrap()), Criticality::Subcritical);
    }
}
