//! Truncated Taylor series in one variable.
//!
//! A jet of order `n` stores the coefficients `c[i]` of `f(r0 + e) = sum c[i] e^i`
//! for `i <= n`. Potentials build their local expansions out of these, and the
//! harmonic recursion consumes the coefficients directly.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub c: Vec<f64>,
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = value;
        Jet { c }
    }

    pub fn zero(order: usize) -> Self {
        Jet::constant(0.0, order)
    }

    /// The identity map `r` expanded at `r0`.
    pub fn variable(r0: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = r0;
        if order >= 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    /// `r^a` expanded at `r0 > 0` by the binomial series.
    pub fn power_of_variable(r0: f64, a: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        let mut coef = r0.powf(a);
        c[0] = coef;
        for i in 1..=order {
            coef *= (a - (i as f64 - 1.0)) / (i as f64 * r0);
            c[i] = coef;
        }
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `ell`-th derivative at the expansion point.
    pub fn derivative(&self, ell: usize) -> f64 {
        if ell >= self.c.len() {
            return 0.0;
        }
        let mut f = 1.0;
        for i in 2..=ell {
            f *= i as f64;
        }
        self.c[ell] * f
    }

    pub fn scale(&self, s: f64) -> Self {
        Jet { c: self.c.iter().map(|x| x * s).collect() }
    }

    pub fn add_const(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    /// `self^alpha`; requires a positive constant term.
    pub fn powf(&self, alpha: f64) -> Self {
        let n = self.order();
        let a = &self.c;
        assert!(a[0] > 0.0, "powf of a jet needs a positive base");
        let mut b = vec![0.0; n + 1];
        b[0] = a[0].powf(alpha);
        for m in 1..=n {
            let mut s = 0.0;
            for k in 1..=m {
                s += (alpha * k as f64 - (m - k) as f64) * a[k] * b[m - k];
            }
            b[m] = s / (m as f64 * a[0]);
        }
        Jet { c: b }
    }

    pub fn exp(&self) -> Self {
        let n = self.order();
        let a = &self.c;
        let mut b = vec![0.0; n + 1];
        b[0] = a[0].exp();
        for m in 1..=n {
            let mut s = 0.0;
            for k in 1..=m {
                s += k as f64 * a[k] * b[m - k];
            }
            b[m] = s / m as f64;
        }
        Jet { c: b }
    }

    pub fn recip(&self) -> Self {
        self.powf_signed(-1.0)
    }

    /// Integer-exponent powers that tolerate a negative base.
    fn powf_signed(&self, alpha: f64) -> Self {
        if self.c[0] > 0.0 {
            self.powf(alpha)
        } else {
            self.neg().powf(alpha).scale((-1.0f64).powf(alpha))
        }
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        Jet { c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        Jet { c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect() }
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let n = self.order().min(o.order());
        let mut c = vec![0.0; n + 1];
        for i in 0..=n {
            for j in 0..=(n - i) {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_series_matches_derivatives() {
        let j = Jet::power_of_variable(2.0, -2.0, 4);
        assert!((j.derivative(0) - 0.25).abs() < 1e-15);
        assert!((j.derivative(1) + 2.0 / 8.0).abs() < 1e-15);
        assert!((j.derivative(2) - 6.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn powf_and_exp_agree_with_closed_forms() {
        // (1 + r^2)^(-2) at r = 0.5
        let r = Jet::variable(0.5, 3);
        let base = (&r * &r).add_const(1.0);
        let v = base.powf(-2.0);
        let f = |x: f64| (1.0 + x * x).powi(-2);
        let h = 1e-4;
        let d1 = (f(0.5 + h) - f(0.5 - h)) / (2.0 * h);
        assert!((v.derivative(1) - d1).abs() < 1e-7);
        let g = (&r * &r).scale(-1.0).exp();
        let d2 = (-(0.25f64)).exp() * (4.0 * 0.25 - 2.0);
        assert!((g.derivative(2) - d2).abs() < 1e-12);
    }

    #[test]
    fn recip_handles_negative_base() {
        let j = Jet::variable(-2.0, 2).recip();
        assert!((j.value() + 0.5).abs() < 1e-15);
        assert!((j.derivative(1) + 0.25).abs() < 1e-15);
    }
}
