//! Iterated right inverses `I_k^n` of the mode operators and the radial
//! envelopes of `J^n_k = h_k I_k^n Q_k`.
//!
//! `I_k[f]` is the solution of `(r^{N-1} h_k^2 I')' = r^{N-1} h_k^2 f` with
//! `I(0) = I'(0) = 0`; equivalently `L_k(h_k I_k[f]) = h_k f` where
//! `L_k = d^2/dr^2 + (N-1)/r d/dr - V_k`.

use crate::error::{Error, Result};
use crate::harmonic::HarmonicProfile;
use crate::profile::{InnerExtension, OuterExtension, RadialProfile};
use crate::quad::{cumulative_integral, leading_exponent};

/// Highest derivative of `I_k^n` tabulated.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone)]
pub struct IteratedIntegral {
    pub k: usize,
    pub n: usize,
    pub profile: RadialProfile,
    /// `d^j I / dr^j` on the grid for `j <= MAX_ORDER`.
    pub derivs: Vec<Vec<f64>>,
}

fn tail(r: &[f64], v: &[f64]) -> OuterExtension {
    let n = r.len();
    let (a, b) = (v[n - 2], v[n - 1]);
    if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
        return OuterExtension::Zero;
    }
    OuterExtension::PowerTail { exponent: (b / a).ln() / (r[n - 1] / r[n - 2]).ln(), log_power: 0.0 }
}

fn profile_from(r: &[f64], v: Vec<f64>, dim: usize) -> Result<RadialProfile> {
    let outer = tail(r, &v);
    if v.iter().all(|x| *x == 0.0) {
        return RadialProfile::new(r.to_vec(), v, dim, InnerExtension::Zero, OuterExtension::Zero);
    }
    RadialProfile::with_fitted_inner(r.to_vec(), v, dim, outer)
}

/// `I_k[f]` and `I_k[f]'` for `f` sampled on the profile grid with inner law `r^{a_f}`.
fn apply_samples(hk: &HarmonicProfile, f: &[f64], a_f: Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = hk.radii();
    let h = hk.values();
    let nd = hk.dim as f64;
    if f.iter().all(|x| *x == 0.0) {
        return Ok((vec![0.0; r.len()], vec![0.0; r.len()]));
    }
    let inner: Vec<f64> = (0..r.len()).map(|i| r[i].powf(nd - 1.0) * h[i] * h[i] * f[i]).collect();
    let inner_exp = a_f.map(|a| nd - 1.0 + 2.0 * hk.inner_exponent + a);
    if let Some(m) = inner_exp {
        if m <= -1.0 {
            return Err(Error::Divergent(format!(
                "f ~ r^{} is too singular: need exponent above -(N + 2 A_1) = {}",
                a_f.unwrap_or(0.0),
                -nd - 2.0 * hk.inner_exponent
            )));
        }
    }
    let s = cumulative_integral(r, &inner, inner_exp)?;
    let d1: Vec<f64> = (0..r.len()).map(|i| s[i] / (r[i].powf(nd - 1.0) * h[i] * h[i])).collect();
    let i0 = cumulative_integral(r, &d1, a_f.map(|a| a + 1.0))?;
    Ok((i0, d1))
}

/// `I_k[f]` on the grid of `hk`.
pub fn apply_i(hk: &HarmonicProfile, f: &RadialProfile) -> Result<RadialProfile> {
    let f_s: Vec<f64> = hk.radii().iter().map(|x| f.eval(*x)).collect();
    let a_f = match f.inner() {
        InnerExtension::Power { exponent } => Some(exponent),
        InnerExtension::Zero => None,
    };
    let a_f = a_f.or_else(|| leading_exponent(hk.radii(), &f_s));
    let (v, _) = apply_samples(hk, &f_s, a_f)?;
    profile_from(hk.radii(), v, hk.dim)
}

/// `I_k^m = I_k^m[1]` for `m = 0..=n`, with derivatives up to [`MAX_ORDER`].
pub fn iterate_i(hk: &HarmonicProfile, n: usize) -> Result<Vec<IteratedIntegral>> {
    let r = hk.radii();
    let len = r.len();
    let nd = hk.dim as f64;
    let hd = hk.derivative_table(2.min(hk.max_derivative_order()))?;
    let h = &hd[0];
    // P = (N-1)/r + 2 h'/h and its derivative.
    let p: Vec<f64> = (0..len).map(|i| (nd - 1.0) / r[i] + 2.0 * hd[1][i] / h[i]).collect();
    let dp: Vec<f64> = (0..len)
        .map(|i| {
            let q = hd[1][i] / h[i];
            let h2 = hd.get(2).map_or(0.0, |v| v[i]) / h[i];
            -(nd - 1.0) / (r[i] * r[i]) + 2.0 * (h2 - q * q)
        })
        .collect();
    let mut out = Vec::with_capacity(n + 1);
    let mut derivs = vec![vec![1.0; len]];
    derivs.extend((0..MAX_ORDER).map(|_| vec![0.0; len]));
    out.push(IteratedIntegral {
        k: hk.k,
        n: 0,
        profile: profile_from(r, derivs[0].clone(), hk.dim)?,
        derivs: derivs.clone(),
    });
    for m in 1..=n {
        let prev = &out[m - 1].derivs;
        let a_f = Some(2.0 * (m - 1) as f64);
        let (v, d1) = apply_samples(hk, &prev[0], a_f)?;
        let d2: Vec<f64> = (0..len).map(|i| prev[0][i] - p[i] * d1[i]).collect();
        let d3: Vec<f64> = (0..len).map(|i| prev[1][i] - p[i] * d2[i] - dp[i] * d1[i]).collect();
        let profile = profile_from(r, v.clone(), hk.dim)?;
        out.push(IteratedIntegral { k: hk.k, n: m, profile, derivs: vec![v, d1, d2, d3] });
    }
    Ok(out)
}

/// `C_{k,n}` with `I_k^n = C_{k,n} r^{2n}` for the free Laplacian.
pub fn laplacian_oracle_c(k: usize, n: usize, dim: usize) -> f64 {
    (0..n).fold(1.0, |c, j| c / ((2 * j + 2) as f64 * (2 * j + 2 * k + dim) as f64))
}

/// Radial part `h_k(r) I_k^n(r)` of `J^n_k`.
pub fn j_envelope(hk: &HarmonicProfile, it: &IteratedIntegral, r: f64) -> f64 {
    hk.eval(r) * it.profile.eval(r)
}

/// Derivatives of `phi = r^{-k} h_k I_k^n` up to `order` on the grid, so that
/// `J^n_k = phi(r) P_k(x)` with `P_k = r^k Q_k` a harmonic polynomial.
pub fn j_derivatives(hk: &HarmonicProfile, it: &IteratedIntegral, order: usize) -> Result<Vec<Vec<f64>>> {
    if order > MAX_ORDER {
        return Err(Error::Smoothness { order, max: MAX_ORDER });
    }
    let hd = hk.shifted_derivative_table(order, hk.k)?;
    Ok(leibniz(&hd, &it.derivs, order))
}

/// Derivatives of a product from the derivatives of its factors.
pub fn leibniz(f: &[Vec<f64>], g: &[Vec<f64>], order: usize) -> Vec<Vec<f64>> {
    let len = f[0].len();
    let mut out = vec![vec![0.0; len]; order + 1];
    for (ell, row) in out.iter_mut().enumerate() {
        for j in 0..=ell {
            let c = (0..j).fold(1.0, |acc, i| acc * (ell - i) as f64 / (i + 1) as f64);
            for i in 0..len {
                row[i] += c * f[ell - j][i] * g[j][i];
            }
        }
    }
    out
}

/// Radial envelope of `|nabla^m phi(|x|)|`: `|phi|` for `m = 0`, else
/// `sum_{1 <= j <= m} |phi^{(j)}| r^{j - m}`.
fn radial_envelope(r: f64, d: &[f64], m: usize) -> f64 {
    if m == 0 {
        return d[0].abs();
    }
    (1..=m).map(|j| d[j].abs() * r.powi(j as i32 - m as i32)).sum()
}

/// Envelope of `|nabla^alpha (phi(r) P_k(x))|` for a degree-`k` harmonic polynomial
/// `P_k`, from the derivatives of `phi`. Since `|nabla^b P_k| ~ r^{k-b}` for `b <= k`
/// and vanishes beyond, this is `sum_b r^{k-b} E_{alpha-b}[phi]`.
pub fn gradient_envelope(r: &[f64], derivs: &[Vec<f64>], k: usize, alpha: usize) -> Vec<f64> {
    (0..r.len())
        .map(|i| {
            let d: Vec<f64> = derivs.iter().map(|row| row[i]).collect();
            (0..=alpha.min(k))
                .map(|b| r[i].powi(k as i32 - b as i32) * radial_envelope(r[i], &d, alpha - b))
                .sum()
        })
        .collect()
}

/// Snapping band for inner exponents read off sampled data.
pub const SNAP_TOL: f64 = 0.02;

/// Profile whose inner exponent is read from the first samples and snapped onto
/// `Z` or `anchor + Z`, so round-off cannot flip membership at a borderline exponent.
pub fn snapped_profile(
    r: &[f64],
    values: Vec<f64>,
    dim: usize,
    anchor: f64,
    outer: OuterExtension,
) -> Result<RadialProfile> {
    let inner = match leading_exponent(r, &values) {
        None if values[0] == 0.0 => InnerExtension::Zero,
        None => InnerExtension::Power { exponent: 0.0 },
        Some(e) => {
            let shifted = anchor + (e - anchor).round();
            let exponent = [e.round(), shifted]
                .into_iter()
                .find(|c| (c - e).abs() < SNAP_TOL)
                .map_or(e, |c| c + 0.0);
            InnerExtension::Power { exponent }
        }
    };
    RadialProfile::new(r.to_vec(), values, dim, inner, outer)
}

/// [`gradient_envelope`] as a profile on the grid.
pub fn envelope_profile(r: &[f64], values: Vec<f64>, dim: usize) -> Result<RadialProfile> {
    profile_from(r, values, dim)
}
