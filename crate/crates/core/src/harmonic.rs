//! Positive radial harmonics `h_k` of the mode operators.
//!
//! With `h = r^A G`, `A = A^+_{lambda1 + omega_k}`, the inverse-square part of
//! `V_k` cancels and `G` solves `G_ss + beta G_s = r^2 W G` in `s = ln r`,
//! where `beta = 2A + N - 2` and `W = V - lambda1 r^-2`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::iterated::snapped_profile;
use crate::jet::Jet;
use crate::params::lorentz_norm_on_ball;
use crate::potential::PotentialSpec;
use crate::profile::{InnerExtension, OuterExtension, RadialProfile};
use crate::spectral::{a_exponents, omega};

const RK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct HarmonicProfile {
    pub k: usize,
    pub dim: usize,
    pub omega: f64,
    /// `A_{1,k}`.
    pub inner_exponent: f64,
    beta: f64,
    spec: PotentialSpec,
    r: Vec<f64>,
    g: Vec<f64>,
    gs: Vec<f64>,
    profile: RadialProfile,
}

/// Fitted `c_k` in `h_k(r) ~ c_k r^{A_2} (ln r)^B` over the last decade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticFit {
    pub c: f64,
    /// RMS relative deviation of `h / v` from `c` over the window.
    pub residual: f64,
    pub window: (f64, f64),
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dp_step(f: &impl Fn(f64, [f64; 2]) -> [f64; 2], s: f64, y: [f64; 2], h: f64) -> ([f64; 2], f64) {
    let mut k = [[0.0; 2]; 7];
    for i in 0..7 {
        let mut yi = y;
        for j in 0..i {
            yi[0] += h * A[i][j] * k[j][0];
            yi[1] += h * A[i][j] * k[j][1];
        }
        k[i] = f(s + C[i] * h, yi);
    }
    let mut y5 = y;
    let mut err = [0.0; 2];
    for i in 0..7 {
        for c in 0..2 {
            y5[c] += h * B5[i] * k[i][c];
            err[c] += h * (B5[i] - B4[i]) * k[i][c];
        }
    }
    // G_s is controlled relative to itself: near the origin it is tiny, and the
    // derivative tables divide it by powers of r.
    let s0 = RK_TOL * y5[0].abs().max(1e-300);
    let s1 = RK_TOL * (y5[1].abs() + 1e-12 * y5[0].abs()).max(1e-300);
    (y5, (err[0].abs() / s0).max(err[1].abs() / s1))
}

/// Integrate `(G, G_s)` across the grid in `s = ln r`.
fn integrate(spec: &PotentialSpec, beta: f64, r: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = r.len();
    let mut g = vec![1.0; n];
    let mut gs = vec![0.0; n];
    if spec.is_pure_inverse_square() {
        return Ok((g, gs));
    }
    // Leading Frobenius correction G = 1 + c r^rho1.
    let r0 = r[0];
    let w0 = spec.w(r0) * r0.powf(2.0 - spec.rho1);
    let c = w0 / (spec.rho1 * (spec.rho1 + beta));
    g[0] = 1.0 + c * r0.powf(spec.rho1);
    gs[0] = c * spec.rho1 * r0.powf(spec.rho1);
    let rhs = |s: f64, y: [f64; 2]| {
        let x = s.exp();
        [y[1], -beta * y[1] + x * x * spec.w(x) * y[0]]
    };
    let mut y = [g[0], gs[0]];
    let mut h = (r[1] / r[0]).ln();
    for i in 0..n - 1 {
        let (s0, s1) = (r[i].ln(), r[i + 1].ln());
        let mut s = s0;
        while s1 - s > 1e-13 * (1.0 + s1.abs()) {
            let step = h.min(s1 - s);
            if step < 1e-14 * (1.0 + s.abs()) {
                return Err(Error::Solver(format!("step size underflow at r = {:e}", s.exp())));
            }
            let (yn, e) = dp_step(&rhs, s, y, step);
            if e <= 1.0 {
                s = if step == s1 - s { s1 } else { s + step };
                y = yn;
                h = step * (0.9 * e.max(1e-10).powf(-0.2)).min(5.0);
            } else {
                h = step * (0.9 * e.powf(-0.25)).max(0.1);
            }
        }
        if !(y[0] > 0.0) || !y[0].is_finite() {
            return Err(Error::Solver(format!(
                "h_k is not positive at r = {:e}; the operator is not nonnegative",
                r[i + 1]
            )));
        }
        g[i + 1] = y[0];
        gs[i + 1] = y[1];
    }
    Ok((g, gs))
}

/// Exponent of the power law through the last two samples.
fn outer_exponent(r: &[f64], v: &[f64]) -> OuterExtension {
    let n = r.len();
    let (a, b) = (v[n - 2], v[n - 1]);
    if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
        return OuterExtension::Zero;
    }
    OuterExtension::PowerTail { exponent: (b / a).ln() / (r[n - 1] / r[n - 2]).ln(), log_power: 0.0 }
}

/// Falling factorial `a (a-1) ... (a-m+1)`.
fn falling(a: f64, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, i| acc * (a - i as f64))
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Solve for `h_k` on `grid`.
pub fn solve_h(spec: &PotentialSpec, k: usize, grid: &Grid) -> Result<HarmonicProfile> {
    spec.validate()?;
    let n = spec.dim;
    let om = omega(k, n);
    let (a, _) = a_exponents(spec.lambda1 + om, n)?;
    let beta = 2.0 * a + n as f64 - 2.0;
    let r = grid.radii().to_vec();
    let (g, gs) = integrate(spec, beta, &r)?;
    let h: Vec<f64> = r.iter().zip(&g).map(|(x, gg)| x.powf(a) * gg).collect();
    let outer = outer_exponent(&r, &h);
    let profile = RadialProfile::new(r.clone(), h, n, InnerExtension::Power { exponent: a }, outer)?;
    Ok(HarmonicProfile { k, dim: n, omega: om, inner_exponent: a, beta, spec: spec.clone(), r, g, gs, profile })
}

impl HarmonicProfile {
    pub fn profile(&self) -> &RadialProfile {
        &self.profile
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn values(&self) -> &[f64] {
        self.profile.values()
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.profile.eval(r)
    }

    pub fn max_derivative_order(&self) -> usize {
        self.spec.smoothness + 1
    }

    /// Derivatives `G^{(j)}(r_i)`, `j <= order`, from the Taylor recursion of
    /// `r G'' + (beta + 1) G' - r W G = 0`.
    fn g_derivatives(&self, i: usize, order: usize) -> Vec<f64> {
        let r0 = self.r[i];
        let mut c = vec![0.0; order + 1];
        c[0] = self.g[i];
        if order >= 1 {
            c[1] = self.gs[i] / r0;
        }
        if order >= 2 && !self.spec.is_pure_inverse_square() {
            let q = &Jet::variable(r0, order - 2) * &self.spec.w_jet(r0, order - 2);
            for j in 0..=order - 2 {
                let jf = j as f64;
                let conv: f64 = (0..=j).map(|l| q.c[l] * c[j - l]).sum();
                c[j + 2] = (conv - (jf + 1.0) * (jf + self.beta + 1.0) * c[j + 1]) / (r0 * (jf + 2.0) * (jf + 1.0));
            }
        }
        let mut fact = 1.0;
        for (j, cj) in c.iter_mut().enumerate() {
            if j > 0 {
                fact *= j as f64;
            }
            *cj *= fact;
        }
        c
    }

    /// `h^{(j)}(r_i)` for `j <= order`.
    pub fn derivatives_at(&self, i: usize, order: usize) -> Vec<f64> {
        self.shifted_derivatives_at(i, order, 0)
    }

    /// Derivatives of `r^{-shift} h_k` at `r_i`, computed from `r^{A - shift} G`
    /// so that no cancellation occurs when `shift = A`.
    pub fn shifted_derivatives_at(&self, i: usize, order: usize, shift: usize) -> Vec<f64> {
        let a = self.inner_exponent - shift as f64;
        let x = self.r[i];
        let gd = self.g_derivatives(i, order);
        (0..=order)
            .map(|ell| {
                (0..=ell)
                    .map(|j| binom(ell, j) * falling(a, ell - j) * x.powf(a - (ell - j) as f64) * gd[j])
                    .sum()
            })
            .collect()
    }

    /// `h^{(j)}` on the whole grid for every `j <= order`.
    pub fn derivative_table(&self, order: usize) -> Result<Vec<Vec<f64>>> {
        self.shifted_derivative_table(order, 0)
    }

    /// `(r^{-shift} h)^{(j)}` on the whole grid for every `j <= order`.
    pub fn shifted_derivative_table(&self, order: usize, shift: usize) -> Result<Vec<Vec<f64>>> {
        if order > self.max_derivative_order() {
            return Err(Error::Smoothness { order, max: self.max_derivative_order() });
        }
        let mut out = vec![Vec::with_capacity(self.r.len()); order + 1];
        for i in 0..self.r.len() {
            for (j, d) in self.shifted_derivatives_at(i, order, shift).into_iter().enumerate() {
                out[j].push(d);
            }
        }
        Ok(out)
    }

    /// `d^ell h_k / dr^ell` as a profile.
    pub fn derivative(&self, ell: usize) -> Result<RadialProfile> {
        let table = self.derivative_table(ell)?;
        let v = table[ell].clone();
        let outer = outer_exponent(&self.r, &v);
        let a = self.inner_exponent;
        if v.iter().all(|x| *x == 0.0) {
            return RadialProfile::new(self.r.clone(), v, self.dim, InnerExtension::Zero, OuterExtension::Zero);
        }
        if !self.spec.is_pure_inverse_square() {
            return snapped_profile(&self.r, v, self.dim, a, outer);
        }
        let inner = if falling(a, ell) == 0.0 {
            InnerExtension::Zero
        } else {
            InnerExtension::Power { exponent: a - ell as f64 }
        };
        RadialProfile::new(self.r.clone(), v, self.dim, inner, outer)
    }
}

/// Alias kept for symmetry with [`solve_h`].
pub fn derivative_h(hk: &HarmonicProfile, ell: usize) -> Result<RadialProfile> {
    hk.derivative(ell)
}

/// `Gamma^k_{p,sigma}(t) = ||h_k||_{L^{p,sigma}(B(0, sqrt t))} / h_k(sqrt t)`; infinite
/// when `h_k` is not in `L^{p,sigma}` near the origin.
pub fn gamma_ratio(hk: &HarmonicProfile, p: f64, sigma: f64, t: f64) -> Result<f64> {
    let rt = t.sqrt();
    let num = lorentz_norm_on_ball(&hk.profile, p, sigma, rt)?;
    Ok(num / hk.eval(rt))
}

/// Fit `c_k` with `v(r) = r^{a2} (ln r)^b` over the last decade of the grid.
pub fn fit_asymptotic_constant(hk: &HarmonicProfile, a2: f64, b: f64) -> Result<AsymptoticFit> {
    let r_max = hk.r[hk.r.len() - 1];
    let lo = (r_max / 10.0).max(hk.r[0]);
    let ratios: Vec<f64> = hk
        .r
        .iter()
        .zip(hk.values())
        .filter(|(x, _)| **x >= lo && **x > 1.0)
        .map(|(x, h)| h / (x.powf(a2) * x.ln().powf(b)))
        .collect();
    if ratios.len() < 4 {
        return Err(Error::Fit("fit window needs r_max well above 1".into()));
    }
    let c = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let residual = (ratios.iter().map(|q| (q / c - 1.0).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Fit(format!("nonpositive asymptotic constant {c}")));
    }
    Ok(AsymptoticFit { c, residual, window: (lo, r_max) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::geometric(1e-8, 1e4, 2048).unwrap()
    }

    #[test]
    fn laplacian_gives_monomials() {
        let s = PotentialSpec::zero(3).unwrap();
        let h = solve_h(&s, 2, &grid()).unwrap();
        for (x, v) in h.radii().iter().zip(h.values()) {
            assert!((v / (x * x) - 1.0).abs() < 1e-12);
        }
        let d2 = h.derivative(2).unwrap();
        assert!(d2.values().iter().all(|v| (v - 2.0).abs() < 1e-9));
    }

    #[test]
    fn hardy_derivative_is_exact() {
        let s = PotentialSpec::hardy(3, 2.0).unwrap();
        let h = solve_h(&s, 0, &grid()).unwrap();
        let d1 = h.derivative(1).unwrap();
        assert!(d1.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn bounded_potential_profile_satisfies_ode() {
        let s = PotentialSpec::decaying(3, 1.0, 4.0).unwrap();
        let h = solve_h(&s, 1, &grid()).unwrap();
        // Independent check: finite differences of h against the ODE.
        let r = h.radii();
        let v = h.values();
        for i in (200..1800).step_by(97) {
            let (x0, x1, x2) = (r[i - 1], r[i], r[i + 1]);
            let d1 = (v[i + 1] - v[i - 1]) / (x2 - x0);
            let d2 = 2.0 * ((v[i + 1] - v[i]) / (x2 - x1) - (v[i] - v[i - 1]) / (x1 - x0)) / (x2 - x0);
            let vk = s.v(x1) + h.omega / (x1 * x1);
            let res = d2 + 2.0 / x1 * d1 - vk * v[i];
            assert!(res.abs() < 1e-3 * (vk.abs() + 1.0 / (x1 * x1)) * v[i], "i={i} res={res}");
            let d = h.derivatives_at(i, 2);
            assert!((d[1] - d1).abs() < 1e-4 * d1.abs());
            assert!((d[2] - d2).abs() < 1e-3 * d2.abs().max(v[i] / (x1 * x1)));
        }
        let fit = fit_asymptotic_constant(&h, 1.0, 0.0).unwrap();
        assert!(fit.residual < 1e-2);
    }

    #[test]
    fn gamma_ratio_of_constant() {
        let s = PotentialSpec::zero(3).unwrap();
        let h = solve_h(&s, 0, &grid()).unwrap();
        let t: f64 = 4.0;
        let g = gamma_ratio(&h, 2.0, 2.0, t).unwrap();
        let exact = (4.0 * std::f64::consts::PI / 3.0 * t.powf(1.5)).sqrt();
        assert!((g / exact - 1.0).abs() < 1e-9);
    }
}
