//! Radial functions sampled on a grid.
//!
//! Between grid points a profile is interpolated as a power law (linear in
//! `ln r` / `ln |phi|`) whenever the two end values share a sign, and linearly
//! otherwise. Power functions are therefore represented exactly, and the
//! super-level sets of `|phi|` have closed-form volumes on every segment.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Behaviour below the first grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerExtension {
    /// `phi(r) = phi(r_0) (r / r_0)^exponent` on `(0, r_0)`.
    Power { exponent: f64 },
    /// `phi = 0` on `(0, r_0)`.
    Zero,
}

/// Behaviour beyond the last grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterExtension {
    Zero,
    /// `phi(r) = phi(r_M) (r / r_M)^exponent (ln r / ln r_M)^log_power`.
    PowerTail { exponent: f64, log_power: f64 },
}

/// Volume of the unit ball in `R^N`.
pub fn unit_ball_volume(n: usize) -> f64 {
    let pi = std::f64::consts::PI;
    match n {
        0 => 1.0,
        1 => 2.0,
        2 => pi,
        _ => unit_ball_volume(n - 2) * 2.0 * pi / n as f64,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    r: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
    inner: InnerExtension,
    outer: OuterExtension,
}

/// A piece of `|phi|` on which it is monotone, with a closed-form inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Piece {
    /// `va (r / a)^e` on `[a, b]`; `a` may be 0 and `b` may be infinite.
    Power { a: f64, b: f64, va: f64, e: f64, anchor: f64 },
    /// Linear from `va` at `a` to `vb` at `b`.
    Linear { a: f64, b: f64, va: f64, vb: f64 },
    /// Log-corrected tail on `[a, b]`, monotone there; `rm, vm` anchor the formula.
    Tail { a: f64, b: f64, rm: f64, vm: f64, e: f64, c: f64 },
}

fn tail_value(rm: f64, vm: f64, e: f64, c: f64, r: f64) -> f64 {
    let base = vm * (r / rm).powf(e);
    if c == 0.0 {
        base
    } else {
        base * (r.ln() / rm.ln()).powf(c)
    }
}

impl Piece {
    pub(crate) fn bounds(&self) -> (f64, f64) {
        match *self {
            Piece::Power { a, b, .. } | Piece::Linear { a, b, .. } | Piece::Tail { a, b, .. } => (a, b),
        }
    }

    pub(crate) fn value_at(&self, r: f64) -> f64 {
        match *self {
            Piece::Power { va, e, anchor, .. } => va * (r / anchor).powf(e),
            Piece::Linear { a, b, va, vb } => va + (vb - va) * (r - a) / (b - a),
            Piece::Tail { rm, vm, e, c, .. } => tail_value(rm, vm, e, c, r),
        }
    }

    /// Values at the two ends (limits for open ends).
    pub(crate) fn end_values(&self) -> (f64, f64) {
        let (a, b) = self.bounds();
        let lo = if a == 0.0 {
            match *self {
                Piece::Power { va, e, .. } => {
                    if e > 0.0 {
                        0.0
                    } else if e < 0.0 {
                        f64::INFINITY
                    } else {
                        va
                    }
                }
                _ => self.value_at(a),
            }
        } else {
            self.value_at(a)
        };
        let hi = if b.is_infinite() {
            match *self {
                Piece::Power { va, e, .. } => {
                    if e < 0.0 {
                        0.0
                    } else if e > 0.0 {
                        f64::INFINITY
                    } else {
                        va
                    }
                }
                Piece::Tail { e, c, .. } => {
                    if e < 0.0 || (e == 0.0 && c < 0.0) {
                        0.0
                    } else if e == 0.0 && c == 0.0 {
                        self.value_at(a)
                    } else {
                        f64::INFINITY
                    }
                }
                _ => self.value_at(b),
            }
        } else {
            self.value_at(b)
        };
        (lo, hi)
    }

    pub(crate) fn range(&self) -> (f64, f64) {
        let (x, y) = self.end_values();
        (x.min(y), x.max(y))
    }

    /// `int_{piece} [|phi| > lambda] d(r^N)`, i.e. the measure in `r^N` units.
    pub(crate) fn level_measure(&self, lambda: f64, n: i32) -> f64 {
        let (a, b) = self.bounds();
        let (va, vb) = self.end_values();
        let (lo, hi) = (va.min(vb), va.max(vb));
        let full = |x: f64, y: f64| {
            if y.is_infinite() {
                f64::INFINITY
            } else {
                y.powi(n) - x.powi(n)
            }
        };
        if lambda >= hi {
            return 0.0;
        }
        if lambda < lo {
            return full(a, b);
        }
        if va == vb {
            return if lambda < va { full(a, b) } else { 0.0 };
        }
        let rho = self.crossing(lambda);
        if vb > va {
            full(rho, b)
        } else {
            full(a, rho)
        }
    }

    /// Radius in the piece where `|phi| = lambda`, for `lambda` strictly inside the range.
    pub(crate) fn crossing(&self, lambda: f64) -> f64 {
        match *self {
            Piece::Power { va, e, anchor, .. } => anchor * (lambda / va).powf(1.0 / e),
            Piece::Linear { a, b, va, vb } => a + (lambda - va) * (b - a) / (vb - va),
            Piece::Tail { a, b, rm, vm, e, c } => {
                let f = |r: f64| tail_value(rm, vm, e, c, r);
                let increasing = f(a) < {
                    if b.is_finite() {
                        f(b)
                    } else {
                        f(a * 2.0)
                    }
                };
                let (mut lo, mut hi) = (a.ln(), if b.is_finite() { b.ln() } else { a.ln() + 1.0 });
                if b.is_infinite() {
                    while (f(hi.exp()) > lambda) != increasing {
                        hi = lo + 2.0 * (hi - lo);
                        if hi > 700.0 {
                            break;
                        }
                    }
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (f(mid.exp()) > lambda) == increasing {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo < 1e-15 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                (0.5 * (lo + hi)).exp()
            }
        }
    }
}

fn interp(a: f64, b: f64, va: f64, vb: f64, x: f64) -> f64 {
    if va == vb {
        va
    } else if va != 0.0 && vb != 0.0 && va.signum() == vb.signum() {
        va * (x / a).powf((vb / va).ln() / (b / a).ln())
    } else {
        va + (vb - va) * (x - a) / (b - a)
    }
}

impl RadialProfile {
    pub fn new(
        r: Vec<f64>,
        values: Vec<f64>,
        dim: usize,
        inner: InnerExtension,
        outer: OuterExtension,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(Error::Profile("dimension must be at least 1".into()));
        }
        if r.len() < 2 || r.len() != values.len() {
            return Err(Error::Profile("need at least two samples and matching lengths".into()));
        }
        if r[0] <= 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Profile("grid must be positive and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Profile("non-finite sample".into()));
        }
        if let OuterExtension::PowerTail { exponent, log_power } = outer {
            if !exponent.is_finite() || !log_power.is_finite() {
                return Err(Error::Profile("non-finite tail descriptor".into()));
            }
            if log_power != 0.0 && r[r.len() - 1] <= 1.0 {
                return Err(Error::Profile("a logarithmic tail needs r_max > 1".into()));
            }
        }
        if let InnerExtension::Power { exponent } = inner {
            if !exponent.is_finite() {
                return Err(Error::Profile("non-finite inner exponent".into()));
            }
        }
        Ok(RadialProfile { r, values, dim, inner, outer })
    }

    /// Sample `f` on a grid.
    pub fn from_fn(
        grid: &Grid,
        dim: usize,
        f: impl Fn(f64) -> f64,
        inner: InnerExtension,
        outer: OuterExtension,
    ) -> Result<Self> {
        let r = grid.radii().to_vec();
        let values = r.iter().map(|x| f(*x)).collect();
        RadialProfile::new(r, values, dim, inner, outer)
    }

    /// Profile whose inner exponent is read from the first two samples
    /// (falling back to a constant extension when they differ in sign or vanish).
    pub fn with_fitted_inner(r: Vec<f64>, values: Vec<f64>, dim: usize, outer: OuterExtension) -> Result<Self> {
        let exponent = crate::quad::leading_exponent(&r, &values).unwrap_or(0.0);
        RadialProfile::new(r, values, dim, InnerExtension::Power { exponent }, outer)
    }

    /// `|x|^a` on the grid, exact everywhere.
    pub fn power(grid: &Grid, dim: usize, a: f64) -> Result<Self> {
        RadialProfile::from_fn(
            grid,
            dim,
            |x| x.powf(a),
            InnerExtension::Power { exponent: a },
            OuterExtension::PowerTail { exponent: a, log_power: 0.0 },
        )
    }

    /// Indicator of the ball `B(0, radius)`.
    pub fn ball_indicator(dim: usize, radius: f64) -> Result<Self> {
        RadialProfile::new(
            vec![radius * 0.5, radius],
            vec![1.0, 1.0],
            dim,
            InnerExtension::Power { exponent: 0.0 },
            OuterExtension::Zero,
        )
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner(&self) -> InnerExtension {
        self.inner
    }

    pub fn outer(&self) -> OuterExtension {
        self.outer
    }

    pub fn r_min(&self) -> f64 {
        self.r[0]
    }

    pub fn r_max(&self) -> f64 {
        self.r[self.r.len() - 1]
    }

    /// Same grid and extensions with new sample values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        RadialProfile::new(self.r.clone(), values, self.dim, self.inner, self.outer)
    }

    pub fn with_extensions(mut self, inner: InnerExtension, outer: OuterExtension) -> Result<Self> {
        self.inner = inner;
        self.outer = outer;
        RadialProfile::new(self.r, self.values, self.dim, self.inner, self.outer)
    }

    /// Declared inner exponent agrees with the slope of the first two samples.
    pub fn check_inner_consistency(&self, tol: f64) -> Result<()> {
        if let InnerExtension::Power { exponent } = self.inner {
            if let Some(e) = crate::quad::leading_exponent(&self.r, &self.values) {
                if (e - exponent).abs() > tol {
                    return Err(Error::Profile(format!(
                        "inner exponent {exponent} disagrees with sampled slope {e}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.r.len();
        if x < self.r[0] {
            return match self.inner {
                InnerExtension::Zero => 0.0,
                InnerExtension::Power { exponent } => self.values[0] * (x / self.r[0]).powf(exponent),
            };
        }
        if x > self.r[n - 1] {
            return match self.outer {
                OuterExtension::Zero => 0.0,
                OuterExtension::PowerTail { exponent, log_power } => {
                    tail_value(self.r[n - 1], self.values[n - 1], exponent, log_power, x)
                }
            };
        }
        let k = match self.r.partition_point(|v| *v <= x) {
            0 => 0,
            k => (k - 1).min(n - 2),
        };
        interp(self.r[k], self.r[k + 1], self.values[k], self.values[k + 1], x)
    }

    /// Restriction to `lo < r < hi`, zero outside; `lo = 0` keeps the inner law.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let empty = || RadialProfile::new(vec![1.0, 2.0], vec![0.0, 0.0], self.dim, InnerExtension::Zero, OuterExtension::Zero);
        if !(hi > lo) || hi <= 0.0 {
            return empty();
        }
        let mut r = Vec::new();
        let mut v = Vec::new();
        if lo > 0.0 {
            r.push(lo);
            v.push(self.eval(lo));
        }
        for (x, y) in self.r.iter().zip(&self.values) {
            if *x > lo && *x < hi {
                r.push(*x);
                v.push(*y);
            }
        }
        let hi_eff = if hi.is_finite() { hi } else { self.r_max() };
        if r.last().map_or(true, |last| *last < hi_eff) {
            r.push(hi_eff);
            v.push(self.eval(hi_eff));
        }
        if lo == 0.0 && r.len() == 1 {
            r.insert(0, hi_eff * 0.5);
            v.insert(0, self.eval(hi_eff * 0.5));
        }
        if r.len() < 2 {
            return empty();
        }
        let inner = if lo > 0.0 { InnerExtension::Zero } else { self.inner };
        let outer = if hi.is_finite() { OuterExtension::Zero } else { self.outer };
        RadialProfile::new(r, v, self.dim, inner, outer)
    }

    pub fn restrict_ball(&self, radius: f64) -> Result<Self> {
        self.restrict(0.0, radius)
    }

    /// `ess sup |phi|`, possibly infinite.
    pub fn sup_abs(&self) -> f64 {
        self.pieces().iter().map(|p| p.range().1).fold(0.0, f64::max)
    }

    /// Monotone pieces of `|phi|`.
    pub(crate) fn pieces(&self) -> Vec<Piece> {
        let n = self.r.len();
        let mut out = Vec::with_capacity(n + 2);
        let (r, v) = (&self.r, &self.values);
        if let InnerExtension::Power { exponent } = self.inner {
            if v[0] != 0.0 {
                out.push(Piece::Power { a: 0.0, b: r[0], va: v[0].abs(), e: exponent, anchor: r[0] });
            }
        }
        for k in 0..n - 1 {
            let (a, b, va, vb) = (r[k], r[k + 1], v[k], v[k + 1]);
            if va == 0.0 && vb == 0.0 {
                continue;
            }
            if va != 0.0 && vb != 0.0 && va.signum() == vb.signum() {
                let e = (vb / va).ln() / (b / a).ln();
                out.push(Piece::Power { a, b, va: va.abs(), e, anchor: a });
            } else if va.signum() * vb.signum() < 0.0 {
                let z = a + va * (b - a) / (va - vb);
                out.push(Piece::Linear { a, b: z, va: va.abs(), vb: 0.0 });
                out.push(Piece::Linear { a: z, b, va: 0.0, vb: vb.abs() });
            } else {
                out.push(Piece::Linear { a, b, va: va.abs(), vb: vb.abs() });
            }
        }
        if let OuterExtension::PowerTail { exponent, log_power } = self.outer {
            let (rm, vm) = (r[n - 1], v[n - 1].abs());
            if vm != 0.0 {
                if log_power == 0.0 {
                    out.push(Piece::Power { a: rm, b: f64::INFINITY, va: vm, e: exponent, anchor: rm });
                } else {
                    // d/d(ln r) of ln phi is exponent + log_power / ln r: split at its zero.
                    let turn = if exponent != 0.0 { (-log_power / exponent).exp() } else { f64::NAN };
                    let (e, c) = (exponent, log_power);
                    if turn.is_finite() && turn > rm && -log_power / exponent < 700.0 {
                        out.push(Piece::Tail { a: rm, b: turn, rm, vm, e, c });
                        out.push(Piece::Tail { a: turn, b: f64::INFINITY, rm, vm, e, c });
                    } else {
                        out.push(Piece::Tail { a: rm, b: f64::INFINITY, rm, vm, e, c });
                    }
                }
            }
        }
        out
    }

    /// `|{x in R^N : |phi(x)| > lambda}|`.
    pub fn distribution(&self, lambda: f64) -> f64 {
        let n = self.dim as i32;
        let m: f64 = self.pieces().iter().map(|p| p.level_measure(lambda, n)).sum();
        unit_ball_volume(self.dim) * m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        let pi = std::f64::consts::PI;
        assert!((unit_ball_volume(3) - 4.0 * pi / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - pi).abs() < 1e-15);
        assert!((unit_ball_volume(5) - 8.0 * pi * pi / 15.0).abs() < 1e-14);
    }

    #[test]
    fn power_interpolation_is_exact() {
        let g = Grid::geometric(1e-3, 1e3, 50).unwrap();
        let p = RadialProfile::power(&g, 3, -1.3).unwrap();
        for x in [2e-4, 3.7e-2, 1.234, 900.0, 5e3] {
            assert!((p.eval(x) / x.powf(-1.3) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_of_inverse_radius() {
        let g = Grid::geometric(1e-4, 1e4, 200).unwrap();
        let p = RadialProfile::power(&g, 3, -1.0).unwrap();
        let a3 = unit_ball_volume(3);
        for lam in [1e-6f64, 0.3, 2.0, 7e5] {
            let exact = a3 * lam.powi(-3);
            assert!((p.distribution(lam) / exact - 1.0).abs() < 1e-10, "{lam}");
        }
    }

    #[test]
    fn sign_changes_split_into_linear_pieces() {
        let p = RadialProfile::new(vec![1.0, 2.0, 3.0], vec![1.0, -1.0, -1.0], 1, InnerExtension::Zero, OuterExtension::Zero).unwrap();
        // |phi| > 0.5 on (1, 1.25) and (1.75, 3) in one dimension, volume factor 2.
        assert!((p.distribution(0.5) - 2.0 * (0.25 + 1.25)).abs() < 1e-14);
        assert_eq!(p.distribution(1.0), 0.0);
    }

    #[test]
    fn restriction_inserts_endpoints() {
        let g = Grid::geometric(1e-3, 1e3, 64).unwrap();
        let p = RadialProfile::power(&g, 2, 1.0).unwrap();
        let q = p.restrict(0.5, 2.0).unwrap();
        assert_eq!(q.r_min(), 0.5);
        assert_eq!(q.r_max(), 2.0);
        assert_eq!(q.eval(0.4), 0.0);
        assert_eq!(q.eval(2.5), 0.0);
        assert!((q.eval(1.3) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn log_tail_is_monotone_after_split() {
        let p = RadialProfile::new(
            vec![2.0, 4.0],
            vec![1.0, 1.0],
            3,
            InnerExtension::Power { exponent: 0.0 },
            OuterExtension::PowerTail { exponent: -1.0, log_power: 3.0 },
        )
        .unwrap();
        let pcs = p.pieces();
        assert!(pcs.len() >= 3);
        let d1 = p.distribution(0.5);
        let d2 = p.distribution(0.25);
        assert!(d2 > d1 && d1 > 0.0);
    }
}
