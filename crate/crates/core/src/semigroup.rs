//! Mode-wise heat flow `v_t = v'' + (N-1)/r v' - V_k v`.
//!
//! The flow is solved for `w = v / h_k`, which obeys the divergence-form equation
//! `w_t = (r^{N-1} h_k^2)^{-1} (r^{N-1} h_k^2 w_r)_r`. The finite-volume
//! discretization keeps `w = 1` stationary to round-off, so the singular
//! behaviour of `v` at the origin is carried entirely by `h_k`.

use crate::error::{Error, Result};
use crate::harmonic::HarmonicProfile;
use crate::iterated::{envelope_profile, gradient_envelope, iterate_i, leibniz, snapped_profile};
use crate::params::{lorentz_norm, LorentzParams};
use crate::profile::{InnerExtension, OuterExtension, RadialProfile};
use crate::quad::gl8;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterBoundary {
    /// Homogeneous Dirichlet condition one cell beyond the last center.
    Absorbing,
    /// Zero flux.
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeScheme {
    /// L-stable TR-BDF2 with `gamma = 2 - sqrt 2`.
    TrBdf2,
    /// Theta method; the first `rannacher` steps use backward Euler.
    Theta { theta: f64, rannacher: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub points_per_decade: usize,
    /// Innermost center as a multiple of `sqrt(t_first)`.
    pub inner_scale: f64,
    /// Outer radius as a multiple of `sqrt(t_last)`.
    pub outer_scale: f64,
    /// `dt = max(dt_min, t / steps_per_unit_log_time)`.
    pub steps_per_unit_log_time: f64,
    pub boundary: OuterBoundary,
    pub time_scheme: TimeScheme,
    /// Interior-region parameter used by callers that need one.
    pub delta: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            points_per_decade: 400,
            inner_scale: 1e-4,
            outer_scale: 20.0,
            steps_per_unit_log_time: 64.0,
            boundary: OuterBoundary::Absorbing,
            time_scheme: TimeScheme::TrBdf2,
            delta: 0.25,
        }
    }
}

/// Spatial discretization of one mode on a fixed radial window.
#[derive(Debug)]
pub struct Scheme {
    pub k: usize,
    pub dim: usize,
    r: Vec<f64>,
    du: f64,
    mass: Vec<f64>,
    /// Conductance of face `i + 1/2`; the last entry couples to the ghost cell.
    cond: Vec<f64>,
    /// `h^{(j)}` at the centers.
    h: Vec<Vec<f64>>,
    /// `(r^{-k} h)^{(j)}` at the centers.
    h_shifted: Vec<Vec<f64>>,
    /// Basis `I_k^1, I_k^2` and their derivatives, for the expansion near 0.
    iter_basis: Vec<Vec<RadialProfile>>,
    opts: SchemeOptions,
    hk_inner: f64,
    hk_at_face0: f64,
    face0: f64,
}

/// The solution of one mode at one time.
#[derive(Debug, Clone)]
pub struct ModeState {
    pub k: usize,
    pub t: f64,
    pub w: Vec<f64>,
    /// Fraction of `sum M |w|` carried by cells beyond half the outer radius.
    pub boundary_mass: f64,
    pub scheme: Arc<Scheme>,
}

const GRID_EPS: f64 = 1e-12;

impl Scheme {
    pub fn new(hk: &HarmonicProfile, r_lo: f64, r_hi: f64, opts: SchemeOptions) -> Result<Self> {
        if !(r_lo > 0.0 && r_hi > r_lo) {
            return Err(Error::Mismatch(format!("bad scheme window [{r_lo}, {r_hi}]")));
        }
        let decades = (r_hi / r_lo).log10();
        let cells = ((decades * opts.points_per_decade as f64).ceil() as usize).max(16);
        let du = (r_hi / r_lo).ln() / (cells - 1) as f64;
        let r: Vec<f64> = (0..cells).map(|i| r_lo * (du * i as f64).exp()).collect();
        let n = hk.dim as f64;
        let nu = |x: f64| {
            let h = hk.eval(x);
            x.powf(n - 1.0) * h * h
        };
        let half = (0.5 * du).exp();
        let faces: Vec<f64> = (0..=cells).map(|i| if i == 0 { 0.0 } else { r[i - 1] * half }).collect();
        let (gx, gw) = gl8();
        let a = hk.inner_exponent;
        let mut mass = Vec::with_capacity(cells);
        for i in 0..cells {
            let (lo, hi) = (faces[i], faces[i + 1]);
            if i == 0 {
                let hf = hk.eval(hi);
                mass.push(hi.powf(n) * hf * hf / (n + 2.0 * a));
            } else {
                let (ul, uh) = (lo.ln(), hi.ln());
                let (m, hw) = (0.5 * (ul + uh), 0.5 * (uh - ul));
                let s: f64 = gx.iter().zip(gw).map(|(x, wt)| {
                    let y = (m + hw * x).exp();
                    wt * nu(y) * y
                }).sum();
                mass.push(s * hw);
            }
        }
        let nu_c: Vec<f64> = r.iter().map(|x| nu(*x)).collect();
        let ghost = r[cells - 1] * du.exp();
        let mut cond: Vec<f64> = (0..cells - 1).map(|i| (nu_c[i] * nu_c[i + 1]).sqrt() / (r[i + 1] - r[i])).collect();
        cond.push(match opts.boundary {
            OuterBoundary::Absorbing => (nu_c[cells - 1] * nu(ghost)).sqrt() / (ghost - r[cells - 1]),
            OuterBoundary::Reflecting => 0.0,
        });
        let order = 3.min(hk.max_derivative_order());
        let at_centers = |table: Vec<Vec<f64>>| -> Result<Vec<Vec<f64>>> {
            table
                .into_iter()
                .map(|row| {
                    let p = envelope_profile(hk.radii(), row, hk.dim)?;
                    Ok(r.iter().map(|x| p.eval(*x)).collect())
                })
                .collect()
        };
        let h = at_centers(hk.derivative_table(order)?)?;
        let h_shifted = at_centers(hk.shifted_derivative_table(order, hk.k)?)?;
        let its = iterate_i(hk, 2)?;
        let mut iter_basis = Vec::new();
        for it in its.iter().skip(1) {
            let mut row = Vec::new();
            for d in &it.derivs {
                row.push(envelope_profile(hk.radii(), d.clone(), hk.dim)?);
            }
            iter_basis.push(row);
        }
        Ok(Scheme {
            k: hk.k,
            dim: hk.dim,
            r,
            du,
            mass,
            cond,
            h,
            h_shifted,
            iter_basis,
            opts,
            hk_inner: a,
            hk_at_face0: hk.eval(faces[1]),
            face0: faces[1],
        })
    }

    /// Window adapted to the requested times.
    pub fn for_times(hk: &HarmonicProfile, t_first: f64, t_last: f64, opts: SchemeOptions) -> Result<Self> {
        Scheme::new(hk, opts.inner_scale * t_first.sqrt(), opts.outer_scale * t_last.sqrt(), opts)
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    pub fn options(&self) -> &SchemeOptions {
        &self.opts
    }

    /// Cell averages of `phi / h_k` in the weighted measure.
    pub fn project(&self, phi: &RadialProfile) -> Vec<f64> {
        let n = self.dim as f64;
        let (gx, gw) = gl8();
        let half = (0.5 * self.du).exp();
        let h_eval = |x: f64| {
            // h_k is only needed at quadrature nodes; the Leibniz table holds it at centers.
            self.h_at(x)
        };
        let mut w = Vec::with_capacity(self.r.len());
        for i in 0..self.r.len() {
            if i == 0 {
                let e = match phi.inner() {
                    InnerExtension::Power { exponent } => exponent,
                    InnerExtension::Zero => f64::INFINITY,
                };
                let num = if e.is_finite() {
                    let hi = self.face0;
                    hi.powf(n) * self.hk_at_face0 * phi.eval(hi) / (n + self.hk_inner + e)
                } else {
                    0.0
                };
                w.push(num / self.mass[0]);
                continue;
            }
            let lo = self.r[i] / half;
            let hi = self.r[i] * half;
            let (ul, uh) = (lo.ln(), hi.ln());
            let (m, hw) = (0.5 * (ul + uh), 0.5 * (uh - ul));
            let s: f64 = gx
                .iter()
                .zip(gw)
                .map(|(x, wt)| {
                    let y = (m + hw * x).exp();
                    wt * y.powf(n) * h_eval(y) * phi.eval(y)
                })
                .sum();
            w.push(s * hw / self.mass[i]);
        }
        w
    }

    fn h_at(&self, x: f64) -> f64 {
        // Power-law interpolation of the tabulated h between centers.
        let u = (x / self.r[0]).ln() / self.du;
        let last = self.r.len() - 1;
        let j = (u.floor().max(0.0) as usize).min(last - 1);
        let (a, b) = (self.h[0][j], self.h[0][j + 1]);
        let s = u - j as f64;
        if a > 0.0 && b > 0.0 {
            a * (b / a).powf(s)
        } else {
            a + (b - a) * s
        }
    }

    fn apply_stiffness(&self, w: &[f64], out: &mut [f64]) {
        let n = w.len();
        for i in 0..n {
            let mut f = 0.0;
            if i + 1 < n {
                f += self.cond[i] * (w[i + 1] - w[i]);
            } else {
                f -= self.cond[i] * w[i];
            }
            if i > 0 {
                f -= self.cond[i - 1] * (w[i] - w[i - 1]);
            }
            out[i] = -f;
        }
    }

    /// Solve `(M + a K) x = rhs` by the Thomas algorithm.
    fn solve(&self, a: f64, rhs: &[f64], x: &mut [f64]) {
        let n = rhs.len();
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let diag = |i: usize| self.mass[i] + a * (self.cond[i] + if i > 0 { self.cond[i - 1] } else { 0.0 });
        let up = |i: usize| -a * self.cond[i];
        let mut d = diag(0);
        cp[0] = up(0) / d;
        dp[0] = rhs[0] / d;
        for i in 1..n {
            let lo = up(i - 1);
            d = diag(i) - lo * cp[i - 1];
            cp[i] = if i + 1 < n { up(i) / d } else { 0.0 };
            dp[i] = (rhs[i] - lo * dp[i - 1]) / d;
        }
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
    }

    fn step(&self, w: &mut Vec<f64>, dt: f64, step_index: usize) {
        let n = w.len();
        let mut kw = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut next = vec![0.0; n];
        match self.opts.time_scheme {
            TimeScheme::TrBdf2 => {
                let g = 2.0 - std::f64::consts::SQRT_2;
                self.apply_stiffness(w, &mut kw);
                for i in 0..n {
                    rhs[i] = self.mass[i] * w[i] - 0.5 * g * dt * kw[i];
                }
                let mut star = vec![0.0; n];
                self.solve(0.5 * g * dt, &rhs, &mut star);
                let c1 = 1.0 / (g * (2.0 - g));
                let c0 = (1.0 - g) * (1.0 - g) / (g * (2.0 - g));
                for i in 0..n {
                    rhs[i] = self.mass[i] * (c1 * star[i] - c0 * w[i]);
                }
                self.solve((1.0 - g) / (2.0 - g) * dt, &rhs, &mut next);
            }
            TimeScheme::Theta { theta, rannacher } => {
                let th = if step_index < rannacher { 1.0 } else { theta };
                self.apply_stiffness(w, &mut kw);
                for i in 0..n {
                    rhs[i] = self.mass[i] * w[i] - (1.0 - th) * dt * kw[i];
                }
                self.solve(th * dt, &rhs, &mut next);
            }
        }
        *w = next;
    }

    fn boundary_fraction(&self, w: &[f64]) -> f64 {
        let cut = 0.5 * self.r_max();
        let mut total = 0.0;
        let mut outer = 0.0;
        for (i, x) in self.r.iter().enumerate() {
            let m = self.mass[i] * w[i].abs();
            total += m;
            if *x > cut {
                outer += m;
            }
        }
        if total > 0.0 {
            outer / total
        } else {
            0.0
        }
    }

    /// Evolve projected data `w0` to each of `targets` (sorted ascending).
    pub fn evolve(self: &Arc<Self>, w0: Vec<f64>, targets: &[f64]) -> Result<Vec<ModeState>> {
        if targets.windows(2).any(|p| p[1] < p[0]) || targets.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Mismatch("target times must be positive and sorted".into()));
        }
        let mut out = Vec::with_capacity(targets.len());
        if targets.is_empty() {
            return Ok(out);
        }
        let dt_min = 1e-6 * targets[0];
        let mut w = w0;
        let mut t = 0.0;
        let mut steps = 0usize;
        for &target in targets {
            while t < target * (1.0 - GRID_EPS) {
                let dt = (t / self.opts.steps_per_unit_log_time).max(dt_min).min(target - t);
                self.step(&mut w, dt, steps);
                steps += 1;
                t += dt;
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Solver("non-finite value in the evolved mode".into()));
            }
            let boundary_mass = self.boundary_fraction(&w);
            out.push(ModeState { k: self.k, t: target, w: w.clone(), boundary_mass, scheme: Arc::clone(self) });
        }
        Ok(out)
    }
}

/// Evolve `phi_k` (physical mode data) under `e^{-tH_k}` to each target time.
pub fn evolve_mode(
    hk: &HarmonicProfile,
    phi: &RadialProfile,
    targets: &[f64],
    opts: SchemeOptions,
) -> Result<Vec<ModeState>> {
    let (first, last) = match (targets.first(), targets.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Ok(Vec::new()),
    };
    let scheme = Arc::new(Scheme::for_times(hk, first, last, opts)?);
    let w0 = scheme.project(phi);
    scheme.evolve(w0, targets)
}

fn fd_u(f: &[f64], i: usize, du: f64) -> [f64; 3] {
    let n = f.len();
    let c = i.clamp(3, n - 4);
    let g = |o: isize| f[(c as isize + o) as usize];
    let d1 = (g(-2) - 8.0 * g(-1) + 8.0 * g(1) - g(2)) / (12.0 * du);
    let d2 = (-g(-2) + 16.0 * g(-1) - 30.0 * g(0) + 16.0 * g(1) - g(2)) / (12.0 * du * du);
    let d3 = (g(-3) - 8.0 * g(-2) + 13.0 * g(-1) - 13.0 * g(1) + 8.0 * g(2) - g(3)) / (8.0 * du * du * du);
    [d1, d2, d3]
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *xc = det(m) / d;
    }
    Some(x)
}

impl ModeState {
    pub fn radii(&self) -> &[f64] {
        &self.scheme.r
    }

    /// `v = h_k w` at the centers.
    pub fn v(&self) -> Vec<f64> {
        self.w.iter().zip(&self.scheme.h[0]).map(|(w, h)| w * h).collect()
    }

    pub fn v_profile(&self) -> Result<RadialProfile> {
        self.snapped(self.v())
    }

    /// Profile with a snapped inner exponent (see [`snapped_profile`]) and no tail,
    /// since the solution is negligible beyond the outer radius.
    fn snapped(&self, values: Vec<f64>) -> Result<RadialProfile> {
        let s = &self.scheme;
        snapped_profile(&s.r, values, s.dim, s.hk_inner, OuterExtension::Zero)
    }

    /// `w^{(j)}` at the centers for `j <= 3`. Near the origin the derivatives come
    /// from a fitted expansion `w = a0 + a1 I_k^1 + a2 I_k^2`.
    pub fn w_derivatives(&self) -> Vec<Vec<f64>> {
        let s = &self.scheme;
        let n = s.r.len();
        let mut out = vec![vec![0.0; n]; 4];
        for i in 0..n {
            let [d1, d2, d3] = fd_u(&self.w, i, s.du);
            let x = s.r[i];
            out[0][i] = self.w[i];
            out[1][i] = d1 / x;
            out[2][i] = (d2 - d1) / (x * x);
            out[3][i] = (d3 - 3.0 * d2 + 2.0 * d1) / (x * x * x);
        }
        let rt = self.t.sqrt();
        let (fit_lo, fit_hi, switch) = (0.01 * rt, 0.1 * rt, 0.02 * rt);
        let b = &s.iter_basis;
        let mut ata = [[0.0; 3]; 3];
        let mut atb = [0.0; 3];
        let mut used = 0;
        for i in 0..n {
            let x = s.r[i];
            if x < fit_lo || x > fit_hi {
                continue;
            }
            // Columns scaled to order one on the fit window.
            let row = [1.0, b[0][0].eval(x) / self.t, b[1][0].eval(x) / (self.t * self.t)];
            for p in 0..3 {
                for q in 0..3 {
                    ata[p][q] += row[p] * row[q];
                }
                atb[p] += row[p] * self.w[i];
            }
            used += 1;
        }
        if used < 6 {
            return out;
        }
        if let Some(c) = solve3(ata, atb) {
            let (a1, a2) = (c[1] / self.t, c[2] / (self.t * self.t));
            for i in 0..n {
                let x = s.r[i];
                if x >= switch {
                    break;
                }
                for j in 1..4 {
                    out[j][i] = a1 * b[0][j].eval(x) + a2 * b[1][j].eval(x);
                }
            }
        }
        out
    }

    /// `d^j v / dr^j` for `j <= alpha`.
    pub fn v_derivatives(&self, alpha: usize) -> Result<Vec<Vec<f64>>> {
        self.product_derivatives(&self.scheme.h, alpha)
    }

    fn product_derivatives(&self, h: &[Vec<f64>], alpha: usize) -> Result<Vec<Vec<f64>>> {
        let max = (h.len() - 1).min(3);
        if alpha > max {
            return Err(Error::Smoothness { order: alpha, max });
        }
        Ok(leibniz(h, &self.w_derivatives(), alpha))
    }

    /// Envelope of `|nabla^alpha (v Q_k)|` as a profile.
    pub fn gradient_envelope(&self, alpha: usize) -> Result<RadialProfile> {
        let d = self.product_derivatives(&self.scheme.h_shifted, alpha)?;
        self.snapped(gradient_envelope(&self.scheme.r, &d, self.k, alpha))
    }

    /// Mass `sum M_i w_i`.
    pub fn weighted_mass(&self) -> f64 {
        self.w.iter().zip(&self.scheme.mass).map(|(w, m)| w * m).sum()
    }
}

/// `d^alpha v / dr^alpha` as a profile.
pub fn radial_derivative(state: &ModeState, alpha: usize) -> Result<RadialProfile> {
    let d = state.v_derivatives(alpha)?;
    state.snapped(d[alpha].clone())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    Full,
    Ball(f64),
    Annulus(f64, f64),
}

impl Region {
    fn restrict(&self, p: &RadialProfile) -> Result<RadialProfile> {
        match *self {
            Region::Full => Ok(p.clone()),
            Region::Ball(r) => p.restrict(0.0, r),
            Region::Annulus(a, b) => p.restrict(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestDatum {
    pub label: String,
    pub profile: RadialProfile,
}

/// Candidate initial data at scale `sqrt t`, each with unit `L^{p,sigma}` norm.
#[derive(Debug, Clone)]
pub struct TestFamily {
    pub members: Vec<TestDatum>,
}

pub const FAMILY_LEVELS: usize = 7;

impl TestFamily {
    pub fn new(hk: &HarmonicProfile, p: f64, sigma: f64, t: f64) -> Result<Self> {
        let rt = t.sqrt();
        let n = hk.dim;
        let mut raw = Vec::new();
        for j in 0..FAMILY_LEVELS {
            let rad = rt / 2f64.powi(j as i32);
            raw.push((format!("ball(2^-{j} sqrt t)"), RadialProfile::ball_indicator(n, rad)?));
            let ann = RadialProfile::new(
                vec![rad * 0.5, rad],
                vec![1.0, 1.0],
                n,
                InnerExtension::Zero,
                OuterExtension::Zero,
            )?;
            raw.push((format!("annulus(2^-{j} sqrt t)"), ann));
        }
        raw.push(("h_k bump(sqrt t)".to_string(), hk.profile().restrict_ball(rt)?));
        let mut members = Vec::with_capacity(raw.len());
        for (label, prof) in raw {
            let norm = lorentz_norm(&prof, p, sigma)?;
            if !(norm > 0.0 && norm.is_finite()) {
                continue;
            }
            let scaled = prof.with_values(prof.values().iter().map(|v| v / norm).collect())?;
            members.push(TestDatum { label, profile: scaled });
        }
        Ok(TestFamily { members })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    pub t: f64,
    /// Largest ratio found; a lower bound for the operator norm.
    pub value: f64,
    pub best_datum: String,
    pub boundary_mass: f64,
}

/// `max_phi ||nabla^alpha e^{-tH_k} phi||_{L^{q,theta}(region)}` over the test family.
pub fn estimate_operator_norm(
    hk: &HarmonicProfile,
    alpha: usize,
    params: &LorentzParams,
    t: f64,
    region: Region,
    opts: SchemeOptions,
) -> Result<NormEstimate> {
    let family = TestFamily::new(hk, params.p, params.sigma, t)?;
    let scheme = Arc::new(Scheme::for_times(hk, t, t, opts)?);
    let results: Vec<Result<(f64, f64)>> = family
        .members
        .par_iter()
        .map(|d| {
            let st = scheme.evolve(scheme.project(&d.profile), &[t])?.remove(0);
            let env = region.restrict(&st.gradient_envelope(alpha)?)?;
            Ok((lorentz_norm(&env, params.q, params.theta)?, st.boundary_mass))
        })
        .collect();
    let mut best = NormEstimate { t, value: 0.0, best_datum: String::new(), boundary_mass: 0.0 };
    for (d, r) in family.members.iter().zip(results) {
        let (v, b) = r?;
        best.boundary_mass = best.boundary_mass.max(b);
        if v > best.value {
            best.value = v;
            best.best_datum = d.label.clone();
        }
    }
    Ok(best)
}

/// [`estimate_operator_norm`] over several times.
pub fn operator_norm_series(
    hk: &HarmonicProfile,
    alpha: usize,
    params: &LorentzParams,
    times: &[f64],
    region: Region,
    opts: SchemeOptions,
) -> Result<Vec<NormEstimate>> {
    times.iter().map(|t| estimate_operator_norm(hk, alpha, params, *t, region, opts)).collect()
}

/// Pointwise envelope of several modes at a common time.
#[derive(Debug, Clone)]
pub struct AssembledSum {
    pub envelope: RadialProfile,
    /// `sum_{k in tail} d_k h_k(delta sqrt t / 2) / h_k(delta sqrt t)`.
    pub tail_estimate: f64,
}

/// `sum M_k |v_k|` on the grid of the first state, plus the mode-decay tail bound
/// for the omitted modes `tail`, given as `(d_k, h_k)`.
pub fn assemble_sum(
    states: &[(ModeState, f64)],
    tail: &[(u128, &HarmonicProfile)],
    delta: f64,
) -> Result<AssembledSum> {
    let (first, _) = states.first().ok_or_else(|| Error::Mismatch("no states to assemble".into()))?;
    let t = first.t;
    if states.iter().any(|(s, _)| (s.t - t).abs() > 1e-12 * t) {
        return Err(Error::Mismatch("states are at different times".into()));
    }
    let r = first.radii().to_vec();
    let mut env = vec![0.0; r.len()];
    for (st, m) in states {
        let vp = st.v_profile()?;
        for (e, x) in env.iter_mut().zip(&r) {
            *e += m * vp.eval(*x).abs();
        }
    }
    let rd = delta * t.sqrt();
    let tail_estimate = tail.iter().map(|(d, h)| *d as f64 * h.eval(0.5 * rd) / h.eval(rd)).sum();
    Ok(AssembledSum { envelope: envelope_profile(&r, env, first.scheme.dim)?, tail_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::harmonic::solve_h;
    use crate::params::validate_lambda;
    use crate::potential::PotentialSpec;

    fn gaussian(g: &Grid, s0: f64) -> RadialProfile {
        RadialProfile::from_fn(
            g,
            3,
            |r| (-r * r / (4.0 * s0)).exp(),
            InnerExtension::Power { exponent: 0.0 },
            OuterExtension::Zero,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_evolution() {
        let g = Grid::default_grid();
        let h = solve_h(&PotentialSpec::zero(3).unwrap(), 0, &g).unwrap();
        let phi = gaussian(&g, 1.0);
        let ts = [0.1, 1.0, 10.0];
        let states = evolve_mode(&h, &phi, &ts, SchemeOptions::default()).unwrap();
        for st in &states {
            let v = st.v();
            let d = st.v_derivatives(2).unwrap();
            let s = 1.0 + st.t;
            let mut err: f64 = 0.0;
            let mut err1: f64 = 0.0;
            for (i, r) in st.radii().iter().enumerate() {
                let ex = s.powf(-1.5) * (-r * r / (4.0 * s)).exp();
                err = err.max((v[i] - ex).abs());
                if *r < 10.0 * s.sqrt() {
                    err1 = err1.max((d[1][i] + r / (2.0 * s) * ex).abs());
                }
            }
            let peak = s.powf(-1.5);
            println!("t={} rel err {:e} d1 {:e}", st.t, err / peak, err1 / peak * s.sqrt());
            assert!(err / peak < 1e-4);
        }
    }

    #[test]
    fn harmonic_is_stationary() {
        let g = Grid::default_grid();
        let h = solve_h(&PotentialSpec::decaying(3, 1.0, 4.0).unwrap(), 1, &g).unwrap();
        let opts = SchemeOptions { boundary: OuterBoundary::Reflecting, ..Default::default() };
        let scheme = Arc::new(Scheme::for_times(&h, 1.0, 5.0, opts).unwrap());
        let ones = vec![1.0; scheme.radii().len()];
        for s in scheme.evolve(ones, &[1.0, 5.0]).unwrap() {
            let dev = s.w.iter().fold(0.0f64, |m, w| m.max((w - 1.0).abs()));
            // Round-off accumulates over roughly a thousand steps.
            assert!(dev < 1e-10, "t={} dev={dev:e}", s.t);
        }
        // Projecting h_k itself reproduces w = 1 up to interpolation error.
        let w0 = scheme.project(h.profile());
        assert!(w0.iter().all(|w| (w - 1.0).abs() < 1e-5));
    }

    #[test]
    fn heat_kernel_norm() {
        let g = Grid::default_grid();
        let h = solve_h(&PotentialSpec::zero(3).unwrap(), 0, &g).unwrap();
        let lp = validate_lambda(1.0, f64::INFINITY, 1.0, f64::INFINITY).unwrap();
        for t in [0.1, 3.0] {
            let e = estimate_operator_norm(&h, 0, &lp, t, Region::Full, SchemeOptions::default()).unwrap();
            let exact = (4.0 * std::f64::consts::PI * t).powf(-1.5);
            println!("t={t} ratio {}", e.value / exact);
            assert!(e.value / exact > 0.5 && e.value / exact < 1.05);
        }
    }
}
