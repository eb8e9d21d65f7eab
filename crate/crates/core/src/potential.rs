//! Radial potentials and their local Taylor expansions.

use crate::error::{Error, Result};
use crate::jet::Jet;
use std::fmt;
use std::sync::Arc;

/// `lambda_* = -(N-2)^2 / 4`.
pub fn hardy_constant(n: usize) -> f64 {
    let m = n as f64 - 2.0;
    -m * m / 4.0
}

pub type PotentialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    /// `lambda / r^2`.
    Hardy { lambda: f64 },
    Zero,
    /// `a (1 + r^2)^{-kappa/2}`.
    Decaying { a: f64, kappa: f64 },
    /// `(lambda1 + (lambda2 - lambda1) r^2 / (r^2 + rc^2)) / r^2`.
    Blend { lambda1: f64, lambda2: f64, rc: f64 },
    /// `a exp(-r^2 / width^2)`.
    Gaussian { a: f64, width: f64 },
    /// `a (1 - (r/radius)^2)^3` inside the ball, zero outside.
    Bump { a: f64, radius: f64 },
    /// Constant potential; only meaningful for the nonnegativity check.
    Constant { value: f64 },
    /// Samples of `V`; `r^2 V` is interpolated by local cubics in `ln r`.
    Table { r: Vec<f64>, v: Vec<f64> },
    /// User-supplied `V(r)`; derivatives by finite differences.
    Custom { name: String, f: PotentialFn },
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialKind::Hardy { lambda } => write!(f, "Hardy({lambda})"),
            PotentialKind::Zero => write!(f, "Zero"),
            PotentialKind::Decaying { a, kappa } => write!(f, "Decaying(a={a}, kappa={kappa})"),
            PotentialKind::Blend { lambda1, lambda2, rc } => {
                write!(f, "Blend(lambda1={lambda1}, lambda2={lambda2}, rc={rc})")
            }
            PotentialKind::Gaussian { a, width } => write!(f, "Gaussian(a={a}, width={width})"),
            PotentialKind::Bump { a, radius } => write!(f, "Bump(a={a}, radius={radius})"),
            PotentialKind::Constant { value } => write!(f, "Constant({value})"),
            PotentialKind::Table { r, .. } => write!(f, "Table({} samples)", r.len()),
            PotentialKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A radial potential with its inverse-square data at the origin and at infinity:
/// `V = lambda1 r^-2 + O(r^{-2+rho1})` near 0 and `V = lambda2 r^-2 + O(r^{-2-rho2})` near infinity.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub dim: usize,
    pub kind: PotentialKind,
    pub lambda1: f64,
    pub rho1: f64,
    pub lambda2: f64,
    pub rho2: f64,
    /// Number of derivatives of `V` the decay bounds are claimed for.
    pub smoothness: usize,
}

const ANALYTIC_SMOOTHNESS: usize = 8;
const FD_SMOOTHNESS: usize = 3;

impl PotentialSpec {
    fn build(dim: usize, kind: PotentialKind, l1: f64, r1: f64, l2: f64, r2: f64, m: usize) -> Result<Self> {
        let s = PotentialSpec { dim, kind, lambda1: l1, rho1: r1, lambda2: l2, rho2: r2, smoothness: m };
        s.validate()?;
        Ok(s)
    }

    pub fn hardy(dim: usize, lambda: f64) -> Result<Self> {
        Self::build(dim, PotentialKind::Hardy { lambda }, lambda, 2.0, lambda, 2.0, ANALYTIC_SMOOTHNESS)
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::build(dim, PotentialKind::Zero, 0.0, 2.0, 0.0, 2.0, ANALYTIC_SMOOTHNESS)
    }

    pub fn decaying(dim: usize, a: f64, kappa: f64) -> Result<Self> {
        if kappa < 2.0 {
            return Err(Error::Potential("kappa must be at least 2 for r^2 V to stay bounded".into()));
        }
        let (l2, r2) = if kappa == 2.0 { (a, 2.0) } else { (0.0, kappa - 2.0) };
        Self::build(dim, PotentialKind::Decaying { a, kappa }, 0.0, 2.0, l2, r2, ANALYTIC_SMOOTHNESS)
    }

    pub fn blend(dim: usize, lambda1: f64, lambda2: f64, rc: f64) -> Result<Self> {
        if !(rc > 0.0) {
            return Err(Error::Potential("blend radius must be positive".into()));
        }
        Self::build(dim, PotentialKind::Blend { lambda1, lambda2, rc }, lambda1, 2.0, lambda2, 2.0, ANALYTIC_SMOOTHNESS)
    }

    pub fn gaussian(dim: usize, a: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Potential("gaussian width must be positive".into()));
        }
        Self::build(dim, PotentialKind::Gaussian { a, width }, 0.0, 2.0, 0.0, 2.0, ANALYTIC_SMOOTHNESS)
    }

    pub fn bump(dim: usize, a: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Potential("bump radius must be positive".into()));
        }
        Self::build(dim, PotentialKind::Bump { a, radius }, 0.0, 2.0, 0.0, 2.0, 2)
    }

    /// A constant potential. Unless `value = 0` it fails the decay requirement at
    /// infinity, so it is usable only by [`crate::spectral::check_nonnegativity`].
    pub fn constant(dim: usize, value: f64) -> Self {
        PotentialSpec {
            dim,
            kind: PotentialKind::Constant { value },
            lambda1: 0.0,
            rho1: 2.0,
            lambda2: if value == 0.0 { 0.0 } else { f64::NAN },
            rho2: 2.0,
            smoothness: ANALYTIC_SMOOTHNESS,
        }
    }

    pub fn table(dim: usize, r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if r.len() < 4 || r.len() != v.len() || r[0] <= 0.0 || r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Potential("table needs at least 4 increasing positive radii".into()));
        }
        let l1 = r[0] * r[0] * v[0];
        let n = r.len() - 1;
        let l2 = r[n] * r[n] * v[n];
        Self::build(dim, PotentialKind::Table { r, v }, l1, 1.0, l2, 1.0, FD_SMOOTHNESS)
    }

    pub fn custom(
        dim: usize,
        name: &str,
        f: PotentialFn,
        lambda1: f64,
        rho1: f64,
        lambda2: f64,
        rho2: f64,
    ) -> Result<Self> {
        Self::build(
            dim,
            PotentialKind::Custom { name: name.to_string(), f },
            lambda1,
            rho1,
            lambda2,
            rho2,
            FD_SMOOTHNESS,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Potential(format!("dimension must be at least 2, got {}", self.dim)));
        }
        let floor = hardy_constant(self.dim);
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !l.is_finite() {
                return Err(Error::Potential(format!("{name} is undefined: r^2 V(r) is unbounded")));
            }
            if l < floor - 1e-12 {
                return Err(Error::BelowHardy { lambda: l, floor });
            }
        }
        if !(self.rho1 > 0.0 && self.rho2 > 0.0) {
            return Err(Error::Potential("rho1 and rho2 must be positive".into()));
        }
        Ok(())
    }

    pub fn lambda_star(&self) -> f64 {
        hardy_constant(self.dim)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero) || matches!(self.kind, PotentialKind::Constant { value } if value == 0.0)
    }

    pub fn is_hardy(&self) -> bool {
        matches!(self.kind, PotentialKind::Hardy { .. })
    }

    /// `V - lambda1 r^-2` vanishes identically.
    pub fn is_pure_inverse_square(&self) -> bool {
        self.is_zero() || self.is_hardy()
    }

    /// Bounded near the origin (`lambda1 = 0` and no singular part).
    pub fn is_bounded(&self) -> bool {
        self.lambda1 == 0.0 && !self.is_hardy()
    }

    fn table_r2v(r: &[f64], v: &[f64], x: f64) -> f64 {
        let n = r.len();
        if x <= r[0] {
            return r[0] * r[0] * v[0];
        }
        if x >= r[n - 1] {
            return r[n - 1] * r[n - 1] * v[n - 1];
        }
        let k = r.partition_point(|y| *y <= x).saturating_sub(1).min(n - 2);
        let s = k.saturating_sub(1).min(n - 4);
        let u = x.ln();
        let mut acc = 0.0;
        for i in s..s + 4 {
            let mut l = 1.0;
            for j in s..s + 4 {
                if i != j {
                    l *= (u - r[j].ln()) / (r[i].ln() - r[j].ln());
                }
            }
            acc += l * r[i] * r[i] * v[i];
        }
        acc
    }

    /// `W(r) = V(r) - lambda1 / r^2`.
    pub fn w(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Hardy { .. } | PotentialKind::Zero => 0.0,
            PotentialKind::Decaying { a, kappa } => a * (1.0 + r * r).powf(-kappa / 2.0),
            PotentialKind::Blend { lambda1, lambda2, rc } => (lambda2 - lambda1) / (r * r + rc * rc),
            PotentialKind::Gaussian { a, width } => a * (-(r * r) / (width * width)).exp(),
            PotentialKind::Bump { a, radius } => {
                if r < *radius {
                    let z = 1.0 - (r / radius).powi(2);
                    a * z * z * z
                } else {
                    0.0
                }
            }
            PotentialKind::Constant { value } => *value,
            PotentialKind::Table { r: rs, v } => (Self::table_r2v(rs, v, r) - self.lambda1) / (r * r),
            PotentialKind::Custom { f, .. } => f(r) - self.lambda1 / (r * r),
        }
    }

    pub fn v(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::Hardy { lambda } => lambda / (r * r),
            _ => self.w(r) + self.lambda1 / (r * r),
        }
    }

    /// Taylor coefficients of `W` at `r0`, up to `order`.
    pub fn w_jet(&self, r0: f64, order: usize) -> Jet {
        let x = Jet::variable(r0, order);
        match &self.kind {
            PotentialKind::Hardy { .. } | PotentialKind::Zero => Jet::zero(order),
            PotentialKind::Decaying { a, kappa } => (&x * &x).add_const(1.0).powf(-kappa / 2.0).scale(*a),
            PotentialKind::Blend { lambda1, lambda2, rc } => {
                (&x * &x).add_const(rc * rc).powf(-1.0).scale(lambda2 - lambda1)
            }
            PotentialKind::Gaussian { a, width } => (&x * &x).scale(-1.0 / (width * width)).exp().scale(*a),
            PotentialKind::Bump { a, radius } => {
                if r0 < *radius {
                    let z = (&x * &x).scale(-1.0 / (radius * radius)).add_const(1.0);
                    (&(&z * &z) * &z).scale(*a)
                } else {
                    Jet::zero(order)
                }
            }
            PotentialKind::Constant { value } => Jet::constant(*value, order),
            PotentialKind::Table { .. } | PotentialKind::Custom { .. } => fd_jet(|r| self.w(r), r0, order),
        }
    }

    /// Taylor coefficients of `V_k = V + omega_k r^-2` at `r0`.
    pub fn vk_jet(&self, r0: f64, omega: f64, order: usize) -> Jet {
        let sing = Jet::power_of_variable(r0, -2.0, order).scale(self.lambda1 + omega);
        &self.w_jet(r0, order) + &sing
    }

    /// `sup_r |r^{l+2} V^{(l)}(r)|` over the given radii, for `l <= smoothness`.
    pub fn scaled_derivative_sups(&self, radii: &[f64]) -> Vec<f64> {
        let m = self.smoothness.min(FD_SMOOTHNESS.max(self.smoothness));
        let mut sups = vec![0.0f64; m + 1];
        for &r in radii {
            let jet = self.vk_jet(r, 0.0, m);
            for (l, s) in sups.iter_mut().enumerate() {
                *s = s.max((r.powi(l as i32 + 2) * jet.derivative(l)).abs());
            }
        }
        sups
    }
}

/// Taylor coefficients up to order 3 from central differences.
fn fd_jet(f: impl Fn(f64) -> f64, r0: f64, order: usize) -> Jet {
    let h = 1e-3 * r0;
    let f0 = f(r0);
    let (fp, fm) = (f(r0 + h), f(r0 - h));
    let (fp2, fm2) = (f(r0 + 2.0 * h), f(r0 - 2.0 * h));
    let d1 = (fm2 - 8.0 * fm + 8.0 * fp - fp2) / (12.0 * h);
    let d2 = (-fm2 + 16.0 * fm - 30.0 * f0 + 16.0 * fp - fp2) / (12.0 * h * h);
    let d3 = (-fm2 + 2.0 * fm - 2.0 * fp + fp2) / (2.0 * h * h * h);
    let mut j = Jet::zero(order);
    let ds = [f0, d1, d2 / 2.0, d3 / 6.0];
    for (i, c) in j.c.iter_mut().enumerate() {
        if i < 4 {
            *c = ds[i];
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymptotic_data() {
        let d = PotentialSpec::decaying(3, 1.0, 4.0).unwrap();
        assert_eq!((d.lambda1, d.lambda2), (0.0, 0.0));
        assert_eq!(d.rho2, 2.0);
        let b = PotentialSpec::blend(3, 0.5, -0.2, 1.0).unwrap();
        assert!((b.v(1e-6) * 1e-12 - 0.5).abs() < 1e-9);
        assert!((b.v(1e6) * 1e12 + 0.2).abs() < 1e-9);
        assert!(PotentialSpec::hardy(3, -0.3).is_err());
        assert!(PotentialSpec::hardy(3, -0.25).is_ok());
        assert!(PotentialSpec::constant(3, -1.0).validate().is_err());
    }

    #[test]
    fn jets_match_finite_differences() {
        let specs = [
            PotentialSpec::decaying(3, 1.5, 5.0).unwrap(),
            PotentialSpec::blend(3, 0.5, 2.0, 0.7).unwrap(),
            PotentialSpec::gaussian(3, -0.4, 1.3).unwrap(),
            PotentialSpec::bump(3, 2.0, 1.5).unwrap(),
        ];
        for s in &specs {
            for r0 in [0.3, 1.1, 2.0] {
                let j = s.w_jet(r0, 3);
                let fd = fd_jet(|r| s.w(r), r0, 3);
                for l in 0..3 {
                    let scale = 1.0 + j.c[l].abs();
                    assert!((j.c[l] - fd.c[l]).abs() < 1e-5 * scale, "{:?} r0={r0} l={l}", s.kind);
                }
            }
        }
    }

    #[test]
    fn vm_bounds_are_finite_for_hardy() {
        let s = PotentialSpec::hardy(3, 2.0).unwrap();
        let radii: Vec<f64> = (0..50).map(|i| 1e-6 * 1.5f64.powi(i)).collect();
        let sups = s.scaled_derivative_sups(&radii);
        // r^{l+2} d^l (2 r^-2) = 2 (-1)^l (l+1)!
        assert!((sups[0] - 2.0).abs() < 1e-9);
        assert!((sups[2] - 12.0).abs() < 1e-9);
    }

    #[test]
    fn table_reproduces_inverse_square() {
        let r: Vec<f64> = (0..40).map(|i| 1e-3 * 1.4f64.powi(i)).collect();
        let v: Vec<f64> = r.iter().map(|x| 0.7 / (x * x)).collect();
        let s = PotentialSpec::table(3, r, v).unwrap();
        assert!((s.lambda1 - 0.7).abs() < 1e-12);
        assert!(s.w(0.05).abs() < 1e-9);
    }
}
