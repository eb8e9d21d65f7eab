//! Quadrature helpers: Gauss-Legendre rules and cumulative integrals on
//! geometric grids.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

pub(crate) fn gl6() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(6))
}

pub(crate) fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static R: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    R.get_or_init(|| gauss_legendre(8))
}

/// Integrate `f` over [a, b] with the 8-point rule.
pub fn gl8_integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gl8();
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(xi, wi)| wi * f(m + h * xi)).sum::<f64>() * h
}

fn lagrange(xs: &[f64; 4], ys: &[f64; 4], x: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        let mut l = 1.0;
        for j in 0..4 {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        s += l * ys[i];
    }
    s
}

/// Local power exponent of `g` at the first grid point, from the first two samples.
pub fn leading_exponent(r: &[f64], g: &[f64]) -> Option<f64> {
    if r.len() < 2 || g[0] == 0.0 || g[1] == 0.0 || g[0].signum() != g[1].signum() {
        return None;
    }
    Some((g[1] / g[0]).ln() / (r[1] / r[0]).ln())
}

/// Running integral `F[j] = int_0^{r_j} g(r) dr` on a positive increasing grid.
///
/// Each panel interpolates `ln|r g|` by a cubic in `u = ln r` when the four
/// neighbouring samples share a sign, and `r g` itself otherwise. The piece on
/// `(0, r_0)` is integrated as a power law with exponent `inner_exponent`, or
/// with the exponent read off the first two samples when none is given.
pub fn cumulative_integral(r: &[f64], g: &[f64], inner_exponent: Option<f64>) -> Result<Vec<f64>> {
    let n = r.len();
    if n < 4 || g.len() != n {
        return Err(Error::Profile("cumulative integral needs at least four samples".into()));
    }
    let u: Vec<f64> = r.iter().map(|x| x.ln()).collect();
    let gu: Vec<f64> = r.iter().zip(g).map(|(x, y)| x * y).collect();
    let mut out = vec![0.0; n];
    out[0] = if g[0] == 0.0 {
        0.0
    } else {
        let m = inner_exponent
            .or_else(|| leading_exponent(r, g))
            .ok_or_else(|| Error::Divergent("integrand changes sign at the inner edge".into()))?;
        if m <= -1.0 {
            return Err(Error::Divergent(format!("integrand ~ r^{m} is not integrable at 0")));
        }
        g[0] * r[0] / (m + 1.0)
    };
    let (gx, gw) = gl6();
    for i in 0..n - 1 {
        let s = if i == 0 { 0 } else if i + 2 >= n { n - 4 } else { i - 1 };
        let xs = [u[s], u[s + 1], u[s + 2], u[s + 3]];
        let raw = [gu[s], gu[s + 1], gu[s + 2], gu[s + 3]];
        let (a, b) = (u[i], u[i + 1]);
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        let same_sign = raw.iter().all(|v| *v > 0.0) || raw.iter().all(|v| *v < 0.0);
        let mut acc = 0.0;
        if same_sign {
            let sg = raw[0].signum();
            let ls = raw.map(|v| v.abs().ln());
            for (xi, wi) in gx.iter().zip(gw) {
                acc += wi * sg * lagrange(&xs, &ls, m + h * xi).exp();
            }
        } else {
            for (xi, wi) in gx.iter().zip(gw) {
                acc += wi * lagrange(&xs, &raw, m + h * xi);
            }
        }
        out[i + 1] = out[i] + acc * h;
    }
    Ok(out)
}
