//! Predicted decay envelopes, case tags, and log-log rate fits.
//!
//! Every envelope here is a rate statement: theorem constants are set to one and
//! only exponents and log powers are meant to be compared.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::harmonic::{gamma_ratio, solve_h, HarmonicProfile};
use crate::iterated::{gradient_envelope, iterate_i, j_derivatives, snapped_profile, IteratedIntegral};
use crate::params::{lorentz_norm_on_ball, power_in_lorentz, LorentzParams, INF};
use crate::potential::{PotentialKind, PotentialSpec};
use crate::profile::{OuterExtension, RadialProfile};
use crate::quad::cumulative_integral;
use crate::semigroup::{operator_norm_series, Region, SchemeOptions};
use crate::spectral::{omega, Criticality, ExponentTable};

/// Minimum number of samples and decades for a rate fit.
pub const MIN_FIT_POINTS: usize = 8;
pub const MIN_FIT_DECADES: f64 = 2.0;
/// Slack on exponent comparisons against the free rate.
pub const RATE_TOL: f64 = 0.05;

const ANALYTIC_INT_TOL: f64 = 1e-9;
const FITTED_INT_TOL: f64 = 1e-3;
/// Fitted exponents this close to an integer, but outside [`FITTED_INT_TOL`],
/// cannot be classified without the user's say-so.
const AMBIGUOUS_BAND: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateModel {
    PurePower,
    PowerLog,
    /// Fit both and keep the power-log model only when it clearly wins.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// `v ~ a t^b (ln t)^c`.
    pub exponent: f64,
    pub log_power: f64,
    pub amplitude: f64,
    /// RMS of the log-deviations over the window.
    pub residual: f64,
    pub window: (f64, f64),
    /// The model actually used.
    pub model: RateModel,
    /// Residual of the rejected model minus that of the chosen one (Auto only).
    pub margin: Option<f64>,
}

impl RateEstimate {
    pub fn eval(&self, t: f64) -> f64 {
        let lg = if self.log_power == 0.0 { 1.0 } else { t.ln().powf(self.log_power) };
        self.amplitude * t.powf(self.exponent) * lg
    }
}

/// Least squares with a handful of columns, by normal equations with pivoting.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let m = rows[0].len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (row, yi) in rows.iter().zip(y) {
        for p in 0..m {
            for q in 0..m {
                a[p][q] += row[p] * row[q];
            }
            a[p][m] += row[p] * yi;
        }
    }
    for c in 0..m {
        let piv = (c..m).max_by(|i, j| a[*i][c].abs().total_cmp(&a[*j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..m).map(|i| a[i][m] / a[i][i]).collect())
}

fn fit_model(series: &[(f64, f64)], log_term: bool) -> Result<(Vec<f64>, f64)> {
    // Center ln t for conditioning.
    let xm = series.iter().map(|(t, _)| t.ln()).sum::<f64>() / series.len() as f64;
    let rows: Vec<Vec<f64>> = series
        .iter()
        .map(|(t, _)| {
            let mut r = vec![1.0, t.ln() - xm];
            if log_term {
                r.push(t.ln().ln());
            }
            r
        })
        .collect();
    let y: Vec<f64> = series.iter().map(|(_, v)| v.ln()).collect();
    let mut c = least_squares(&rows, &y).ok_or_else(|| Error::Fit("singular rate regression".into()))?;
    let res = (rows
        .iter()
        .zip(&y)
        .map(|(r, yi)| {
            let pred: f64 = r.iter().zip(&c).map(|(a, b)| a * b).sum();
            (pred - yi).powi(2)
        })
        .sum::<f64>()
        / y.len() as f64)
        .sqrt();
    c[0] -= c[1] * xm;
    Ok((c, res))
}

/// Fit `v ~ a t^b` or `v ~ a t^b (ln t)^c` in log-log coordinates.
pub fn fit_rate(series: &[(f64, f64)], model: RateModel) -> Result<RateEstimate> {
    if series.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!("need at least {MIN_FIT_POINTS} points, got {}", series.len())));
    }
    if let Some((t, v)) = series.iter().find(|(t, v)| !(*t > 0.0 && t.is_finite() && *v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(format!("rate fit needs finite positive data, got ({t}, {v})")));
    }
    let lo = series.iter().map(|s| s.0).fold(INF, f64::min);
    let hi = series.iter().map(|s| s.0).fold(0.0, f64::max);
    if (hi / lo).log10() < MIN_FIT_DECADES - 1e-9 {
        return Err(Error::Fit(format!("window [{lo}, {hi}] spans less than {MIN_FIT_DECADES} decades")));
    }
    let log_ok = lo > 1.0;
    let build = |c: &[f64], res: f64, model: RateModel, margin: Option<f64>| RateEstimate {
        exponent: c[1],
        log_power: c.get(2).copied().unwrap_or(0.0),
        amplitude: c[0].exp(),
        residual: res,
        window: (lo, hi),
        model,
        margin,
    };
    match model {
        RateModel::PurePower => {
            let (c, r) = fit_model(series, false)?;
            Ok(build(&c, r, model, None))
        }
        RateModel::PowerLog => {
            if !log_ok {
                return Err(Error::Fit("the power-log model needs t > 1 throughout".into()));
            }
            let (c, r) = fit_model(series, true)?;
            Ok(build(&c, r, model, None))
        }
        RateModel::Auto => {
            let (c0, r0) = fit_model(series, false)?;
            if !log_ok {
                return Ok(build(&c0, r0, RateModel::PurePower, None));
            }
            let (c1, r1) = fit_model(series, true)?;
            // The extra column always lowers the residual a little; demand a halving.
            if r0 > 1e-8 && r1 < 0.5 * r0 {
                Ok(build(&c1, r1, RateModel::PowerLog, Some(r0 - r1)))
            } else {
                Ok(build(&c0, r0, RateModel::PurePower, Some(r1 - r0)))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearZero {
    A,
    /// `h_0 ~ r^A` at the origin with `A` in `0..alpha`.
    B(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearInfinity {
    APrime,
    BPrime(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseTag {
    pub near_zero: NearZero,
    pub near_infinity: NearInfinity,
    pub alpha: usize,
}

impl CaseTag {
    pub fn label(&self) -> String {
        let a = self.alpha;
        let z = match self.near_zero {
            NearZero::A => format!("A_{a}"),
            NearZero::B(e) => format!("B_{a}({e})"),
        };
        let i = match self.near_infinity {
            NearInfinity::APrime => format!("A'_{a}"),
            NearInfinity::BPrime(e) => format!("B'_{a}({e})"),
        };
        format!("{z}/{i}")
    }
}

/// Where the exponents of a table came from; sets the integer-membership tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentSource {
    Analytic,
    Fitted,
}

impl ExponentSource {
    /// Closed-form potentials have exact `lambda1, lambda2`; sampled ones do not.
    pub fn for_spec(spec: &PotentialSpec) -> Self {
        match spec.kind {
            PotentialKind::Table { .. } | PotentialKind::Custom { .. } => ExponentSource::Fitted,
            _ => ExponentSource::Analytic,
        }
    }
}

fn integer_member(a: f64, alpha: usize, source: ExponentSource, what: &str) -> Result<Option<u32>> {
    let nearest = a.round();
    if alpha == 0 || nearest < 0.0 || nearest > alpha as f64 - 1.0 {
        return Ok(None);
    }
    let d = (a - nearest).abs();
    match source {
        ExponentSource::Analytic if d <= ANALYTIC_INT_TOL => Ok(Some(nearest as u32)),
        ExponentSource::Fitted if d <= FITTED_INT_TOL => Ok(Some(nearest as u32)),
        ExponentSource::Fitted if d < AMBIGUOUS_BAND => Err(Error::Ambiguous(format!(
            "{what} = {a} is within {d:.1e} of the integer {nearest}; assert the case explicitly"
        ))),
        _ => Ok(None),
    }
}

/// Case tags from `A_{1,0}` (origin) and `A_{2,0}, B_0` (infinity).
pub fn classify_cases(table: &ExponentTable, alpha: usize, source: ExponentSource) -> Result<CaseTag> {
    let row = table.row(0);
    let near_zero = match integer_member(row.a1, alpha, source, "A_1,0")? {
        Some(e) => NearZero::B(e),
        None => NearZero::A,
    };
    // A logarithmic factor rules out exact power behaviour.
    let near_infinity = if row.b != 0 {
        NearInfinity::APrime
    } else {
        match integer_member(row.a2, alpha, source, "A_2,0")? {
            Some(e) => NearInfinity::BPrime(e),
            None => NearInfinity::APrime,
        }
    };
    Ok(CaseTag { near_zero, near_infinity, alpha })
}

/// Harmonic profiles and iterated integrals shared by the envelopes.
#[derive(Debug, Clone)]
pub struct RateContext {
    pub spec: PotentialSpec,
    pub table: ExponentTable,
    /// `h_k` for `k = 0..=max(alpha_max, 1)`.
    pub profiles: Vec<HarmonicProfile>,
    /// `iterates[k][n] = I_k^n` for `k + 2n <= alpha_max`.
    pub iterates: Vec<Vec<IteratedIntegral>>,
    pub alpha_max: usize,
}

impl RateContext {
    pub fn new(spec: &PotentialSpec, table: &ExponentTable, grid: &Grid, alpha_max: usize) -> Result<Self> {
        if alpha_max > crate::iterated::MAX_ORDER {
            return Err(Error::Smoothness { order: alpha_max, max: crate::iterated::MAX_ORDER });
        }
        let k_top = alpha_max.max(1);
        if table.k_max() < k_top {
            return Err(Error::Mismatch(format!("exponent table stops at k = {}, need {k_top}", table.k_max())));
        }
        let profiles = (0..=k_top).map(|k| solve_h(spec, k, grid)).collect::<Result<Vec<_>>>()?;
        let iterates = profiles
            .iter()
            .take(alpha_max + 1)
            .map(|h| iterate_i(h, (alpha_max - h.k) / 2))
            .collect::<Result<Vec<_>>>()?;
        Ok(RateContext { spec: spec.clone(), table: table.clone(), profiles, iterates, alpha_max })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn h(&self, k: usize) -> &HarmonicProfile {
        &self.profiles[k]
    }

    fn check_alpha(&self, alpha: usize) -> Result<()> {
        if alpha > self.alpha_max {
            return Err(Error::Mismatch(format!("context built for alpha <= {}, asked for {alpha}", self.alpha_max)));
        }
        Ok(())
    }

    /// Radial envelope of `|nabla^alpha J^n_k|`.
    pub fn j_envelope(&self, k: usize, n: usize, alpha: usize) -> Result<RadialProfile> {
        let h = self.h(k);
        let it = self
            .iterates
            .get(k)
            .and_then(|v| v.get(n))
            .ok_or_else(|| Error::Mismatch(format!("I_{k}^{n} was not tabulated")))?;
        let d = j_derivatives(h, it, alpha)?;
        let env = gradient_envelope(h.radii(), &d, k, alpha);
        snapped_profile(h.radii(), env, h.dim, h.inner_exponent, OuterExtension::Zero)
    }

    fn j_norm(&self, k: usize, n: usize, alpha: usize, lp: &LorentzParams, radius: f64) -> Result<f64> {
        lorentz_norm_on_ball(&self.j_envelope(k, n, alpha)?, lp.q, lp.theta, radius)
    }
}

fn inv(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        1.0 / x
    }
}

/// `a * b` with `inf * 0 = inf`, since an infinite norm cannot be rescued.
fn mul_ext(a: f64, b: f64) -> f64 {
    if a.is_infinite() || b.is_infinite() {
        INF
    } else {
        a * b
    }
}

/// The two-sided envelope `Phi_alpha(t)` for `alpha <= 2`.
pub fn phi_alpha(ctx: &RateContext, lp: &LorentzParams, alpha: usize, t: f64) -> Result<f64> {
    if alpha > 2 {
        return Err(Error::Smoothness { order: alpha, max: 2 });
    }
    ctx.check_alpha(alpha)?;
    let nd = ctx.dim() as f64;
    let rt = t.sqrt();
    let h0 = ctx.h(0);
    let g = gamma_ratio(h0, lp.p_conj(), lp.sigma_conj(), t)?;
    let free = t.powf(nd / 2.0 * inv(lp.q) - alpha as f64 / 2.0);
    let bracket = match alpha {
        0 => gamma_ratio(h0, lp.q, lp.theta, t)?,
        1 => ctx.j_norm(0, 0, 1, lp, rt)? / h0.eval(rt) + free,
        _ => {
            let d1 = ctx.table.row(1).d_k as f64;
            let h1 = ctx.h(1);
            ctx.j_norm(0, 0, 2, lp, rt)? / h0.eval(rt) + d1 * ctx.j_norm(1, 0, 2, lp, rt)? / h1.eval(rt) + free
        }
    };
    Ok(mul_ext(t.powf(-nd / 2.0) * g, bracket))
}

/// The upper envelope `t^{-N/2} Gamma_{p',sigma'}(t) [J_alpha(t) + t^{N/2q - alpha/2}]`.
pub fn upper_envelope_j(ctx: &RateContext, lp: &LorentzParams, alpha: usize, t: f64) -> Result<f64> {
    ctx.check_alpha(alpha)?;
    let nd = ctx.dim() as f64;
    let rt = t.sqrt();
    let g = gamma_ratio(ctx.h(0), lp.p_conj(), lp.sigma_conj(), t)?;
    let mut j = 0.0;
    for k in 0..=alpha {
        let dk = ctx.table.row(k).d_k as f64;
        let hk = ctx.h(k).eval(rt);
        for n in 0..=(alpha - k) / 2 {
            j += dk * t.powi(-(n as i32)) * ctx.j_norm(k, n, alpha, lp, rt)? / hk;
        }
    }
    let free = t.powf(nd / 2.0 * inv(lp.q) - alpha as f64 / 2.0);
    Ok(mul_ext(t.powf(-nd / 2.0) * g, j + free))
}

/// Constants of the lower envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerOptions {
    /// `E = B(0, delta sqrt t)`.
    pub delta: f64,
    pub c: f64,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions { delta: 0.25, c: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerEnvelope {
    pub value: f64,
    pub floor: f64,
    /// Mode terms `k = 0..=alpha`.
    pub terms: Vec<f64>,
}

/// `max(floor, max_k t^{-N/2} Gamma^k / h_k(sqrt t) [C^-1 ||d_r^alpha h_k||_E - C t^-1 ||r^{2-alpha} h_k||_E]_+)`.
pub fn lower_envelope(
    ctx: &RateContext,
    lp: &LorentzParams,
    alpha: usize,
    t: f64,
    opts: LowerOptions,
) -> Result<LowerEnvelope> {
    ctx.check_alpha(alpha)?;
    let nd = ctx.dim() as f64;
    let rt = t.sqrt();
    let re = opts.delta * rt;
    let mut terms = Vec::with_capacity(alpha + 1);
    for k in 0..=alpha {
        let h = ctx.h(k);
        let d = h.derivative(alpha)?;
        let main = lorentz_norm_on_ball(&d, lp.q, lp.theta, re)?;
        let shift = 2.0 - alpha as f64;
        let weighted: Vec<f64> = h.radii().iter().zip(h.values()).map(|(x, v)| x.powf(shift) * v).collect();
        let wp = snapped_profile(h.radii(), weighted, h.dim, h.inner_exponent, OuterExtension::Zero)?;
        let corr = lorentz_norm_on_ball(&wp, lp.q, lp.theta, re)?;
        let bracket = if main.is_infinite() {
            INF
        } else if corr.is_infinite() {
            0.0
        } else {
            (main / opts.c - opts.c * corr / t).max(0.0)
        };
        let term = if bracket == 0.0 {
            0.0
        } else {
            let g = gamma_ratio(h, lp.p_conj(), lp.sigma_conj(), t)?;
            mul_ext(t.powf(-nd / 2.0) * g / h.eval(rt), bracket)
        };
        terms.push(term);
    }
    let floor = t.powf(lp.free_exponent(ctx.dim(), alpha));
    let value = terms.iter().copied().fold(floor, f64::max);
    Ok(LowerEnvelope { value, floor, terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormRate {
    /// Pure inverse-square potentials.
    Hardy,
    /// Bounded potentials, cases (A) and (B).
    Bounded,
    /// `V ~ a r^-kappa` at infinity with `lambda2 = 0`.
    PowerDecay,
    /// `A_{2,0} = 0` and a nonzero weighted integral of `V`.
    Integrable,
}

impl ClosedFormRate {
    pub fn name(self) -> &'static str {
        match self {
            ClosedFormRate::Hardy => "inverse-square",
            ClosedFormRate::Bounded => "bounded",
            ClosedFormRate::PowerDecay => "power-decay",
            ClosedFormRate::Integrable => "integrable",
        }
    }
}

/// Predicted rate `t^b (ln t)^c` with the hypotheses that failed, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePrediction {
    pub theorem: ClosedFormRate,
    /// All hypotheses hold.
    pub applicable: bool,
    /// The operator norm is finite.
    pub finite: bool,
    pub exponent: f64,
    pub log_power: f64,
    pub flags: Vec<String>,
}

impl RatePrediction {
    pub fn value(&self, t: f64) -> f64 {
        if !self.finite {
            return INF;
        }
        let lg = if self.log_power != 0.0 && t > 1.0 { t.ln().powf(self.log_power) } else { 1.0 };
        t.powf(self.exponent) * lg
    }

    fn skip(theorem: ClosedFormRate, flag: String) -> Self {
        RatePrediction {
            theorem,
            applicable: false,
            finite: true,
            exponent: f64::NAN,
            log_power: 0.0,
            flags: vec![flag],
        }
    }
}

/// Times at or below this use the small-time branch of the bounded-potential result.
pub const SMALL_TIME: f64 = 1.0;

const EXP_TOL: f64 = 1e-9;

fn is_even_positive(a: f64) -> bool {
    let g = (a / 2.0).round();
    g >= 1.0 && (a - 2.0 * g).abs() < EXP_TOL
}

fn is_even_nonneg(a: f64) -> bool {
    let g = (a / 2.0).round();
    g >= 0.0 && (a - 2.0 * g).abs() < EXP_TOL
}

/// Larger of two `(exponent, log power)` pairs as `t -> infinity`.
fn dominant(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    if (a.0 - b.0).abs() < EXP_TOL {
        (a.0, a.1.max(b.1))
    } else if a.0 > b.0 {
        a
    } else {
        b
    }
}

/// Growth of `||(1+r)^-gamma (ln(r+2))^l||_{L^{q,theta}(B(0, sqrt t))}`.
fn eta_norm_rate(gamma: f64, l: f64, n: usize, q: f64, theta: f64) -> (f64, f64) {
    let nq = n as f64 * inv(q);
    if gamma > nq + EXP_TOL {
        (0.0, 0.0)
    } else if gamma < nq - EXP_TOL {
        ((nq - gamma) / 2.0, l)
    } else {
        (0.0, l + inv(theta))
    }
}

fn hardy_rate(ctx: &RateContext, lp: &LorentzParams, alpha: usize) -> RatePrediction {
    let th = ClosedFormRate::Hardy;
    let spec = &ctx.spec;
    let lambda = match spec.kind {
        PotentialKind::Hardy { lambda } => lambda,
        _ => return RatePrediction::skip(th, "needs V = lambda |x|^-2".into()),
    };
    if lambda == 0.0 {
        return RatePrediction::skip(th, "needs lambda != 0".into());
    }
    let n = spec.dim;
    let a0 = ctx.table.row(0).a1;
    let a1 = ctx.table.row(1).a1;
    let mut flags = Vec::new();
    let finite = if is_even_positive(a0) {
        let ok = alpha as f64 <= a0 + EXP_TOL || power_in_lorentz(a1 - alpha as f64, n, lp.q, lp.theta);
        if !ok {
            flags.push(format!("alpha > A_0 = {a0} and |x|^(A_1 - alpha) not in L^(q,theta)(B(0,1))"));
        }
        ok
    } else {
        let in_dual = power_in_lorentz(a0, n, lp.p_conj(), lp.sigma_conj());
        let in_target = power_in_lorentz(a0 - alpha as f64, n, lp.q, lp.theta);
        if !in_dual {
            flags.push(format!("|x|^{a0} not in L^(p',sigma')(B(0,1))"));
        }
        if !in_target {
            flags.push(format!("|x|^({a0} - {alpha}) not in L^(q,theta)(B(0,1))"));
        }
        in_dual && in_target
    };
    RatePrediction {
        theorem: th,
        applicable: true,
        finite,
        exponent: lp.free_exponent(n, alpha),
        log_power: 0.0,
        flags,
    }
}

/// Large-time factors of the bounded-potential result.
fn gamma_dual_rate(n: usize, a20: f64, b0: u8, lp: &LorentzParams) -> (f64, f64) {
    let nd = n as f64;
    let p_star = nd / (nd + a20);
    if (lp.p - p_star).abs() < EXP_TOL {
        (-a20 / 2.0, inv(lp.sigma_conj()))
    } else if lp.p < p_star {
        (-a20 / 2.0, -(b0 as f64))
    } else {
        (nd / 2.0 * (1.0 - 1.0 / lp.p), 0.0)
    }
}

fn weighted_h_rate(n: usize, a: f64, b: u8, alpha: usize, lp: &LorentzParams) -> (f64, f64) {
    let nd = n as f64;
    let al = alpha as f64;
    let free = (nd / 2.0 * inv(lp.q) - al / 2.0, 0.0);
    if al < a - EXP_TOL {
        return free;
    }
    let q_alpha = if (al - a).abs() < EXP_TOL { INF } else { nd / (al - a) };
    let same = if q_alpha.is_infinite() { lp.q.is_infinite() } else { (lp.q - q_alpha).abs() < EXP_TOL };
    if same {
        (-a / 2.0, inv(lp.theta))
    } else if lp.q < q_alpha {
        free
    } else {
        (-a / 2.0, -(b as f64))
    }
}

fn bounded_rate(ctx: &RateContext, lp: &LorentzParams, alpha: usize, t: f64) -> RatePrediction {
    let th = ClosedFormRate::Bounded;
    let spec = &ctx.spec;
    if !spec.is_bounded() {
        return RatePrediction::skip(th, "needs V in C^m([0, inf)), i.e. lambda1 = 0".into());
    }
    if alpha > spec.smoothness + 1 {
        return RatePrediction::skip(th, format!("alpha = {alpha} exceeds m + 1 = {}", spec.smoothness + 1));
    }
    let n = spec.dim;
    let free = RatePrediction {
        theorem: th,
        applicable: true,
        finite: true,
        exponent: lp.free_exponent(n, alpha),
        log_power: 0.0,
        flags: Vec::new(),
    };
    if spec.is_zero() {
        return RatePrediction { flags: vec!["h_0 = 1: free rate at all times".into()], ..free };
    }
    if t <= SMALL_TIME {
        return RatePrediction { flags: vec!["small-time branch".into()], ..free };
    }
    let r0 = ctx.table.row(0);
    let (a20, b0) = (r0.a2, r0.b);
    let al = alpha as f64;
    let case_a = !is_even_nonneg(a20) || a20 >= al - EXP_TOL;
    let case_b = is_even_positive(a20) && a20 < al;
    let g = gamma_dual_rate(n, a20, b0, lp);
    let second = if case_a {
        weighted_h_rate(n, a20, b0, alpha, lp)
    } else if case_b {
        let r1 = ctx.table.row(1);
        weighted_h_rate(n, r1.a2, r1.b, alpha, lp)
    } else {
        return RatePrediction::skip(
            th,
            format!("A_2,0 = 0 with alpha = {alpha} >= 1 lies outside cases (A) and (B)"),
        );
    };
    let mut flags = vec![if case_a { "case (A)".to_string() } else { "case (B)".to_string() }];
    if case_b {
        flags.push("the nabla^alpha h_0 term is dominated by the h_1 term".into());
    }
    RatePrediction {
        exponent: -(n as f64) / 2.0 + g.0 + second.0,
        log_power: g.1 + second.1,
        flags,
        ..free
    }
}

/// `tau^{N-1} V` is integrable at infinity, judged from the tail of `r^N |V|`.
fn weighted_v_integrable(spec: &PotentialSpec) -> bool {
    let n = spec.dim as i32;
    match spec.kind {
        PotentialKind::Zero | PotentialKind::Gaussian { .. } | PotentialKind::Bump { .. } => true,
        PotentialKind::Decaying { kappa, .. } => kappa > spec.dim as f64,
        PotentialKind::Hardy { lambda } => lambda == 0.0,
        PotentialKind::Constant { value } => value == 0.0,
        _ => {
            let tail = |r: f64| r.powi(n) * spec.v(r).abs();
            let (a, b) = (tail(1e3), tail(1e4));
            b == 0.0 || b < 0.5 * a
        }
    }
}

/// `int_0^inf tau^{N-1} V h_0 d tau` over the profile grid.
fn weighted_v_integral(ctx: &RateContext) -> Result<f64> {
    let h0 = ctx.h(0);
    let r = h0.radii();
    let g: Vec<f64> = r.iter().zip(h0.values()).map(|(x, h)| x.powi(ctx.dim() as i32 - 1) * ctx.spec.v(*x) * h).collect();
    let s = cumulative_integral(r, &g, Some(ctx.dim() as f64 - 1.0))?;
    Ok(s[s.len() - 1])
}

fn slow_rate(
    ctx: &RateContext,
    lp: &LorentzParams,
    alpha: usize,
    t: f64,
    th: ClosedFormRate,
) -> RatePrediction {
    let spec = &ctx.spec;
    let n = spec.dim;
    let nd = n as f64;
    if !spec.is_bounded() {
        return RatePrediction::skip(th, "needs V in C^m([0, inf)), i.e. lambda1 = 0".into());
    }
    if alpha == 0 {
        return RatePrediction::skip(th, "needs alpha >= 1".into());
    }
    if alpha > spec.smoothness + 1 {
        return RatePrediction::skip(th, format!("alpha = {alpha} exceeds m + 1 = {}", spec.smoothness + 1));
    }
    let (gamma, l) = match th {
        ClosedFormRate::PowerDecay => {
            let (a, kappa) = match spec.kind {
                PotentialKind::Decaying { a, kappa } => (a, kappa),
                _ => return RatePrediction::skip(th, "needs V ~ a r^-kappa at infinity".into()),
            };
            if a == 0.0 {
                return RatePrediction::skip(th, "needs a != 0".into());
            }
            if kappa <= 2.0 {
                return RatePrediction::skip(th, format!("needs kappa > 2, got {kappa}"));
            }
            let al = alpha as f64;
            if kappa < nd {
                (kappa - 2.0 + al, 0.0)
            } else if kappa == nd {
                (nd - 2.0 + al, 1.0)
            } else {
                (nd - 2.0 + al, 0.0)
            }
        }
        _ => {
            let a20 = ctx.table.row(0).a2;
            if a20.abs() > EXP_TOL {
                return RatePrediction::skip(th, format!("needs A_2,0 = 0, got {a20}"));
            }
            if !weighted_v_integrable(spec) {
                return RatePrediction::skip(th, "tau^(N-1) V is not integrable".into());
            }
            match weighted_v_integral(ctx) {
                Ok(s) if s.abs() > 1e-10 => {}
                Ok(s) => return RatePrediction::skip(th, format!("int tau^(N-1) V h_0 = {s:e} vanishes")),
                Err(e) => return RatePrediction::skip(th, format!("weighted integral failed: {e}")),
            }
            (nd - 2.0 + alpha as f64, 0.0)
        }
    };
    let mut flags = Vec::new();
    if t <= SMALL_TIME {
        flags.push("large-time result evaluated at small t".into());
    }
    if l != 0.0 && (gamma - nd * inv(lp.q)).abs() < EXP_TOL {
        flags.push("borderline kappa = N with gamma = N/q: log power approximate".into());
    }
    let eta = eta_norm_rate(gamma, l, n, lp.q, lp.theta);
    let inner = dominant(eta, (nd / 2.0 * inv(lp.q) - alpha as f64 / 2.0, 0.0));
    RatePrediction {
        theorem: th,
        applicable: true,
        finite: true,
        exponent: -nd / 2.0 * inv(lp.p) + inner.0,
        log_power: inner.1,
        flags,
    }
}

/// Prediction of one specific theorem, with failed hypotheses flagged.
pub fn closed_form_rate_for(
    ctx: &RateContext,
    lp: &LorentzParams,
    alpha: usize,
    t: f64,
    theorem: ClosedFormRate,
) -> RatePrediction {
    if ctx.table.criticality == Criticality::Unknown {
        return RatePrediction::skip(theorem, "(N') unchecked: criticality unknown".into());
    }
    match theorem {
        ClosedFormRate::Hardy => hardy_rate(ctx, lp, alpha),
        ClosedFormRate::Bounded => bounded_rate(ctx, lp, alpha, t),
        ClosedFormRate::PowerDecay | ClosedFormRate::Integrable => slow_rate(ctx, lp, alpha, t, theorem),
    }
}

/// Prediction from the first theorem whose hypotheses hold at this `(alpha, t)`.
pub fn closed_form_rate(ctx: &RateContext, lp: &LorentzParams, alpha: usize, t: f64) -> Result<RatePrediction> {
    let order: &[ClosedFormRate] = if t <= SMALL_TIME {
        &[ClosedFormRate::Hardy, ClosedFormRate::Bounded]
    } else {
        &[
            ClosedFormRate::Hardy,
            ClosedFormRate::Bounded,
            ClosedFormRate::PowerDecay,
            ClosedFormRate::Integrable,
        ]
    };
    let mut reasons = Vec::new();
    for th in order {
        let p = closed_form_rate_for(ctx, lp, alpha, t, *th);
        if p.applicable {
            return Ok(p);
        }
        reasons.push(format!("{}: {}", th.name(), p.flags.join("; ")));
    }
    Err(Error::Mismatch(format!("no closed-form rate applies: {}", reasons.join(" | "))))
}

/// One order of the free-rate contrapositive check.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeRateRow {
    pub alpha: usize,
    pub free_exponent: f64,
    /// `None` when the empirical norm was infinite somewhere in the window.
    pub fitted: Option<RateEstimate>,
    /// The empirical rate is slower than the free rate (or the norm is infinite).
    pub violated: bool,
    /// `lambda1`, `lambda2` or criticality fall outside the free-rate ranges,
    /// so a violation is forced.
    pub violation_forced: bool,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeRateReport {
    pub rows: Vec<FreeRateRow>,
    /// The free rate held at every order checked; only `V = 0` can keep this up for all orders.
    pub free_at_all_orders: bool,
    pub notes: Vec<String>,
}

impl FreeRateReport {
    pub fn consistent(&self) -> bool {
        self.rows.iter().all(|r| r.consistent)
    }
}

fn free_rate_ranges_hold(ctx: &RateContext, alpha: usize) -> bool {
    let om = omega(alpha, ctx.dim());
    let s = &ctx.spec;
    ctx.table.criticality == Criticality::Subcritical
        && (s.lambda1 >= om || s.lambda1 == 0.0)
        && s.lambda2 >= om
}

/// Compare empirical series `(alpha, [(t, value)])` against the free rate with `q = inf`.
pub fn free_rate_check_from_series(
    ctx: &RateContext,
    lp: &LorentzParams,
    series: &[(usize, Vec<(f64, f64)>)],
) -> Result<FreeRateReport> {
    let mut notes = Vec::new();
    if ctx.spec.is_zero() {
        notes.push("V = 0: the free rate holds at every order".into());
    }
    if !lp.q.is_infinite() {
        notes.push("the contrapositive concerns q = inf; rows are informative only".into());
    }
    let mut rows = Vec::new();
    for (alpha, data) in series {
        let free = lp.free_exponent(ctx.dim(), *alpha);
        let infinite = data.iter().any(|(_, v)| v.is_infinite());
        let fitted = if infinite { None } else { Some(fit_rate(data, RateModel::PurePower)?) };
        let violated = fitted.map_or(true, |f| f.exponent > free + RATE_TOL);
        let forced = !ctx.spec.is_zero() && lp.q.is_infinite() && !free_rate_ranges_hold(ctx, *alpha);
        rows.push(FreeRateRow {
            alpha: *alpha,
            free_exponent: free,
            fitted,
            violated,
            violation_forced: forced,
            consistent: !forced || violated,
        });
    }
    let free_at_all_orders = rows.iter().all(|r| !r.violated);
    if free_at_all_orders && !ctx.spec.is_zero() {
        notes.push("free rate held at all orders checked; higher orders must eventually fail for V != 0".into());
    }
    Ok(FreeRateReport { rows, free_at_all_orders, notes })
}

/// Empirical norms, maximized over modes `k <= min(alpha, 1)`, over `times`.
pub fn empirical_series(
    ctx: &RateContext,
    lp: &LorentzParams,
    alpha: usize,
    times: &[f64],
    opts: SchemeOptions,
) -> Result<Vec<(f64, f64)>> {
    let mut best = vec![0.0f64; times.len()];
    for k in 0..=alpha.min(1) {
        let est = operator_norm_series(ctx.h(k), alpha, lp, times, Region::Full, opts)?;
        for (b, e) in best.iter_mut().zip(&est) {
            *b = b.max(e.value);
        }
    }
    Ok(times.iter().copied().zip(best).collect())
}

/// Run the estimator for `alpha = 0..=alpha_max` and apply [`free_rate_check_from_series`].
pub fn free_rate_consistency(
    ctx: &RateContext,
    lp: &LorentzParams,
    alpha_max: usize,
    times: &[f64],
    opts: SchemeOptions,
) -> Result<FreeRateReport> {
    let series = (0..=alpha_max)
        .map(|a| Ok((a, empirical_series(ctx, lp, a, times, opts)?)))
        .collect::<Result<Vec<_>>>()?;
    free_rate_check_from_series(ctx, lp, &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::validate_lambda;
    use crate::spectral::exponent_table;

    fn times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    fn ctx(spec: &PotentialSpec, alpha_max: usize) -> RateContext {
        let table = exponent_table(spec, Criticality::Subcritical, 4).unwrap();
        RateContext::new(spec, &table, &Grid::geometric(1e-6, 1e4, 2048).unwrap(), alpha_max).unwrap()
    }

    #[test]
    fn exact_power_recovered() {
        let s: Vec<(f64, f64)> = times(0.1, 100.0, 10).into_iter().map(|t| (t, 3.0 * t.powf(-1.5))).collect();
        let f = fit_rate(&s, RateModel::PurePower).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-10 && (f.amplitude - 3.0).abs() < 1e-9);
        let f = fit_rate(&s, RateModel::Auto).unwrap();
        assert_eq!(f.model, RateModel::PurePower);
    }

    #[test]
    fn power_log_recovered() {
        let s: Vec<(f64, f64)> = times(10.0, 1e4, 12).into_iter().map(|t| (t, t.ln() / t)).collect();
        let f = fit_rate(&s, RateModel::PowerLog).unwrap();
        assert!((f.exponent + 1.0).abs() < 1e-9 && (f.log_power - 1.0).abs() < 1e-9);
        assert_eq!(fit_rate(&s, RateModel::Auto).unwrap().model, RateModel::PowerLog);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let short: Vec<(f64, f64)> = times(1.0, 10.0, 10).into_iter().map(|t| (t, t)).collect();
        assert!(fit_rate(&short, RateModel::PurePower).is_err());
        let mut s: Vec<(f64, f64)> = times(1.0, 1e3, 10).into_iter().map(|t| (t, t)).collect();
        s[3].1 = 0.0;
        assert!(fit_rate(&s, RateModel::PurePower).is_err());
        assert!(fit_rate(&s[..5], RateModel::PurePower).is_err());
    }

    #[test]
    fn case_tags() {
        let z = PotentialSpec::zero(3).unwrap();
        let t = exponent_table(&z, Criticality::Subcritical, 2).unwrap();
        let c = classify_cases(&t, 1, ExponentSource::Analytic).unwrap();
        assert_eq!((c.near_zero, c.near_infinity), (NearZero::B(0), NearInfinity::BPrime(0)));
        let h = PotentialSpec::hardy(3, 2.0).unwrap();
        let t = exponent_table(&h, Criticality::Subcritical, 2).unwrap();
        let c = classify_cases(&t, 1, ExponentSource::Analytic).unwrap();
        assert_eq!((c.near_zero, c.near_infinity), (NearZero::A, NearInfinity::APrime));
        assert_eq!(c.label(), "A_1/A'_1");
        let c = classify_cases(&t, 2, ExponentSource::Analytic).unwrap();
        assert_eq!(c.near_zero, NearZero::B(1));
    }

    #[test]
    fn fitted_exponent_in_ambiguous_band() {
        let h = PotentialSpec::hardy(3, 2.0).unwrap();
        let mut t = exponent_table(&h, Criticality::Subcritical, 2).unwrap();
        t.rows[0].a1 = 1.004;
        assert!(matches!(classify_cases(&t, 2, ExponentSource::Fitted), Err(Error::Ambiguous(_))));
        t.rows[0].a1 = 1.0004;
        assert_eq!(classify_cases(&t, 2, ExponentSource::Fitted).unwrap().near_zero, NearZero::B(1));
        assert_eq!(classify_cases(&t, 2, ExponentSource::Analytic).unwrap().near_zero, NearZero::A);
    }

    #[test]
    fn free_envelopes_have_free_rate() {
        let c = ctx(&PotentialSpec::zero(3).unwrap(), 2);
        let lp = validate_lambda(1.0, INF, 1.0, INF).unwrap();
        for alpha in 0..=2 {
            let e = lp.free_exponent(3, alpha);
            let f = |g: &dyn Fn(f64) -> f64| (g(10.0) / g(1.0)).log10();
            let phi = f(&|t| phi_alpha(&c, &lp, alpha, t).unwrap());
            let up = f(&|t| upper_envelope_j(&c, &lp, alpha, t).unwrap());
            let lo = f(&|t| lower_envelope(&c, &lp, alpha, t, LowerOptions::default()).unwrap().value);
            assert!((phi - e).abs() < 1e-6 && (up - e).abs() < 1e-6 && (lo - e).abs() < 1e-6, "{alpha}: {phi} {up} {lo}");
        }
    }

    #[test]
    fn hardy_predictions() {
        let c = ctx(&PotentialSpec::hardy(3, 2.0).unwrap(), 2);
        let lp = validate_lambda(1.0, INF, 1.0, INF).unwrap();
        let p = closed_form_rate(&c, &lp, 0, 5.0).unwrap();
        assert_eq!(p.theorem, ClosedFormRate::Hardy);
        assert!(p.finite && (p.exponent + 1.5).abs() < 1e-12);
        // |x|^(1-2) is unbounded.
        assert!(!closed_form_rate(&c, &lp, 2, 5.0).unwrap().finite);
        assert!(phi_alpha(&c, &lp, 2, 5.0).unwrap().is_infinite());
        let f = |g: &dyn Fn(f64) -> f64| (g(10.0) / g(1.0)).log10();
        let up = f(&|t| upper_envelope_j(&c, &lp, 1, t).unwrap());
        assert!((up + 2.0).abs() < 1e-6, "{up}");
    }

    #[test]
    fn decaying_predictions() {
        let s = PotentialSpec::decaying(3, 1.0, 4.0).unwrap();
        let c = ctx(&s, 2);
        let lp = validate_lambda(2.0, INF, 2.0, INF).unwrap();
        let p = closed_form_rate(&c, &lp, 1, 1e3).unwrap();
        assert_eq!(p.theorem, ClosedFormRate::PowerDecay);
        assert!((p.exponent + 0.75).abs() < 1e-12);
        let p = closed_form_rate(&c, &lp, 0, 1e3).unwrap();
        assert_eq!(p.theorem, ClosedFormRate::Bounded);
        assert!((p.exponent + 0.75).abs() < 1e-12);
        let p = closed_form_rate_for(&c, &lp, 1, 1e3, ClosedFormRate::Integrable);
        assert!(p.applicable && (p.exponent + 0.75).abs() < 1e-12);
        assert!(closed_form_rate(&c, &lp, 1, 0.5).unwrap().exponent == lp.free_exponent(3, 1));
    }

    #[test]
    fn forced_violation_detected() {
        let c = ctx(&PotentialSpec::hardy(3, 1.0).unwrap(), 1);
        let lp = validate_lambda(1.0, INF, 1.0, INF).unwrap();
        let ts = times(0.1, 10.0, 8);
        let series = vec![(1, ts.iter().map(|t| (*t, INF)).collect::<Vec<_>>())];
        let r = free_rate_check_from_series(&c, &lp, &series).unwrap();
        assert!(r.rows[0].violation_forced && r.rows[0].violated && r.consistent());
    }
}
