use super::{spec_label, table, tuple_slug, two_column};
use crate::config::{times, Loaded};
use crate::error::{CliError, CliResult};
use crate::manifest::{Output, VerdictRecord};
use clap::ValueEnum;
use hardylab::error::Error as CoreError;
use hardylab::params::LorentzParams;
use hardylab::rates::{
    closed_form_rate_for, empirical_series, fit_rate, phi_alpha, upper_envelope_j, ClosedFormRate, RateContext,
    RateEstimate, RateModel, RATE_TOL, SMALL_TIME,
};
use hardylab::semigroup::SchemeOptions;
use rayon::prelude::*;

/// Exponent tolerance for fits that only see large times.
pub const LARGE_TIME_TOL: f64 = 0.07;
pub const LOG_POWER_TOL: f64 = 0.3;
/// Largest admissible max/min of a two-sided ratio.
pub const BAND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TheoremId {
    /// Two-sided envelope Phi_alpha.
    #[value(name = "T1.1")]
    TwoSided,
    /// Upper envelope J_alpha.
    #[value(name = "T3.1")]
    Upper,
    /// Universal floor at the free rate.
    #[value(name = "T4.2")]
    Floor,
    /// Inverse-square potentials.
    #[value(name = "T7.1")]
    InverseSquare,
    /// Bounded potentials.
    #[value(name = "T7.2")]
    Bounded,
    /// Power decay at infinity.
    #[value(name = "T7.3")]
    PowerDecay,
    /// Integrable potentials with a nonzero weighted mean.
    #[value(name = "T7.4")]
    Integrable,
}

impl TheoremId {
    pub const ALL: [TheoremId; 7] = [
        TheoremId::TwoSided,
        TheoremId::Upper,
        TheoremId::Floor,
        TheoremId::InverseSquare,
        TheoremId::Bounded,
        TheoremId::PowerDecay,
        TheoremId::Integrable,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TheoremId::TwoSided => "T1.1",
            TheoremId::Upper => "T3.1",
            TheoremId::Floor => "T4.2",
            TheoremId::InverseSquare => "T7.1",
            TheoremId::Bounded => "T7.2",
            TheoremId::PowerDecay => "T7.3",
            TheoremId::Integrable => "T7.4",
        }
    }

    fn closed_form(self) -> Option<ClosedFormRate> {
        match self {
            TheoremId::InverseSquare => Some(ClosedFormRate::Hardy),
            TheoremId::Bounded => Some(ClosedFormRate::Bounded),
            TheoremId::PowerDecay => Some(ClosedFormRate::PowerDecay),
            TheoremId::Integrable => Some(ClosedFormRate::Integrable),
            _ => None,
        }
    }
}

struct Check {
    alpha: usize,
    verdict: &'static str,
    fitted: Option<f64>,
    predicted: Option<f64>,
    note: String,
    plots: Vec<(&'static str, Vec<(f64, f64)>)>,
}

impl Check {
    fn skip(alpha: usize, note: String) -> Self {
        Check { alpha, verdict: "SKIP", fitted: None, predicted: None, note, plots: Vec::new() }
    }

    fn fail(alpha: usize, note: String) -> Self {
        Check { verdict: "FAIL", ..Check::skip(alpha, note) }
    }
}

fn window(series: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    series.iter().copied().filter(|(t, _)| *t > lo && *t <= hi).collect()
}

fn ratio(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    a.iter().zip(b).map(|((t, x), (_, y))| (*t, x / y)).collect()
}

fn band(s: &[(f64, f64)]) -> f64 {
    let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
    hi / lo
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn closed_form_checks(
    ctx: &RateContext,
    lp: &LorentzParams,
    alpha: usize,
    th: ClosedFormRate,
    emp: &[(f64, f64)],
) -> Vec<Check> {
    let windows: &[(&str, f64, f64, f64)] = match th {
        ClosedFormRate::Hardy => &[("all", 0.0, f64::INFINITY, RATE_TOL)],
        ClosedFormRate::Bounded => {
            &[("small", 0.0, SMALL_TIME, RATE_TOL), ("large", SMALL_TIME, f64::INFINITY, LARGE_TIME_TOL)]
        }
        _ => &[("large", SMALL_TIME, f64::INFINITY, LARGE_TIME_TOL)],
    };
    let mut out = Vec::new();
    for (name, lo, hi, tol) in windows {
        let part = window(emp, *lo, *hi);
        let Some(t_ref) = part.last().map(|x| x.0) else {
            out.push(Check::skip(alpha, format!("{name}: no times in window")));
            continue;
        };
        let pred = closed_form_rate_for(ctx, lp, alpha, t_ref, th);
        if !pred.applicable {
            out.push(Check::skip(alpha, format!("{name}: {}", pred.flags.join("; "))));
            continue;
        }
        if !pred.finite {
            out.push(Check::skip(alpha, format!("{name}: norm is infinite for this tuple")));
            continue;
        }
        if part.iter().any(|(_, v)| !v.is_finite()) {
            out.push(Check::fail(alpha, format!("{name}: empirical norm infinite where a finite rate is predicted")));
            continue;
        }
        let model = if pred.log_power != 0.0 { RateModel::PowerLog } else { RateModel::PurePower };
        let fit = match fit_rate(&part, model) {
            Ok(f) => f,
            Err(e) => {
                out.push(Check::skip(alpha, format!("{name}: {e}")));
                continue;
            }
        };
        let ok = (fit.exponent - pred.exponent).abs() <= *tol
            && (model == RateModel::PurePower || (fit.log_power - pred.log_power).abs() <= LOG_POWER_TOL);
        let predicted: Vec<(f64, f64)> = part.iter().map(|(t, _)| (*t, pred.value(*t))).collect();
        out.push(Check {
            alpha,
            verdict: pass(ok),
            fitted: Some(fit.exponent),
            predicted: Some(pred.exponent),
            note: format!(
                "{name}: log power {:.3} vs {:.3}, tolerance {tol}{}",
                fit.log_power,
                pred.log_power,
                if pred.flags.is_empty() { String::new() } else { format!(" ({})", pred.flags.join("; ")) }
            ),
            plots: vec![("empirical", part), ("predicted", predicted)],
        });
    }
    out
}

fn fit_all(emp: &[(f64, f64)]) -> Result<RateEstimate, String> {
    fit_rate(emp, RateModel::PurePower).map_err(|e| e.to_string())
}

fn envelope_series(
    ctx: &RateContext,
    lp: &LorentzParams,
    ts: &[f64],
    f: impl Fn(&RateContext, &LorentzParams, f64) -> hardylab::error::Result<f64>,
) -> CliResult<Vec<(f64, f64)>> {
    ts.iter().map(|t| Ok((*t, f(ctx, lp, *t)?))).collect()
}

fn run_checks(
    id: TheoremId,
    ctx: &RateContext,
    lp: &LorentzParams,
    alpha: usize,
    ts: &[f64],
) -> CliResult<Vec<Check>> {
    let m = ctx.spec.smoothness;
    if alpha > m + 1 {
        return Ok(vec![Check::skip(alpha, format!("all: alpha = {alpha} exceeds m + 1 = {}", m + 1))]);
    }
    if id == TheoremId::TwoSided && alpha > 2 {
        return Ok(vec![Check::skip(alpha, "all: Phi_alpha is defined for alpha <= 2".into())]);
    }
    if let Some(th) = id.closed_form() {
        // The hypotheses do not depend on the sampled norms; check them first.
        let t_ref = ts[ts.len() - 1];
        let pred = closed_form_rate_for(ctx, lp, alpha, t_ref, th);
        let small = closed_form_rate_for(ctx, lp, alpha, ts[0], th);
        if !pred.applicable && !small.applicable {
            return Ok(vec![Check::skip(alpha, format!("all: {}", pred.flags.join("; ")))]);
        }
    }
    let emp = empirical_series(ctx, lp, alpha, ts, SchemeOptions::default())?;
    let checks = match id {
        TheoremId::Floor => {
            let free = lp.free_exponent(ctx.dim(), alpha);
            if emp.iter().any(|(_, v)| v.is_infinite()) {
                vec![Check {
                    alpha,
                    verdict: "PASS",
                    fitted: None,
                    predicted: Some(free),
                    note: "all: norm infinite, floor holds trivially".into(),
                    plots: vec![("empirical", emp)],
                }]
            } else {
                match fit_all(&emp) {
                    Ok(fit) => vec![Check {
                        alpha,
                        verdict: pass(fit.exponent >= free - RATE_TOL),
                        fitted: Some(fit.exponent),
                        predicted: Some(free),
                        note: format!("all: floor exponent {free}, tolerance {RATE_TOL}"),
                        plots: vec![
                            ("empirical", emp.clone()),
                            ("floor", emp.iter().map(|(t, _)| (*t, t.powf(free))).collect()),
                        ],
                    }],
                    Err(e) => vec![Check::skip(alpha, format!("all: {e}"))],
                }
            }
        }
        TheoremId::Upper => {
            let up = envelope_series(ctx, lp, ts, |c, l, t| upper_envelope_j(c, l, alpha, t))?;
            if up.iter().any(|(_, v)| !v.is_finite()) {
                vec![Check::skip(alpha, "all: upper envelope infinite for this tuple".into())]
            } else if emp.iter().any(|(_, v)| !v.is_finite()) {
                vec![Check::fail(alpha, "all: empirical norm infinite under a finite envelope".into())]
            } else {
                let r = ratio(&emp, &up);
                match (fit_all(&r), fit_all(&emp), fit_all(&up)) {
                    (Ok(fr), Ok(fe), Ok(fu)) => vec![Check {
                        alpha,
                        verdict: pass(fr.exponent <= RATE_TOL),
                        fitted: Some(fe.exponent),
                        predicted: Some(fu.exponent),
                        note: format!("all: ratio to envelope grows like t^{:.4}, tolerance {RATE_TOL}", fr.exponent),
                        plots: vec![("empirical", emp), ("upper", up)],
                    }],
                    (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => vec![Check::skip(alpha, format!("all: {e}"))],
                }
            }
        }
        TheoremId::TwoSided => {
            let phi = envelope_series(ctx, lp, ts, |c, l, t| phi_alpha(c, l, alpha, t))?;
            let up = envelope_series(ctx, lp, ts, |c, l, t| upper_envelope_j(c, l, alpha, t))?;
            if phi.iter().any(|(_, v)| !v.is_finite()) {
                vec![Check::skip(alpha, "all: Phi_alpha infinite for this tuple".into())]
            } else {
                let (b1, b2) = (band(&ratio(&emp, &phi)), band(&ratio(&up, &phi)));
                let worst = if b1.is_nan() || b2.is_nan() { f64::INFINITY } else { b1.max(b2) };
                vec![Check {
                    alpha,
                    verdict: pass(worst <= BAND),
                    fitted: Some(worst),
                    predicted: Some(BAND),
                    note: format!("all: band empirical/Phi {b1:.3}, upper/Phi {b2:.3}"),
                    plots: vec![("empirical", emp), ("phi", phi), ("upper", up)],
                }]
            }
        }
        _ => closed_form_checks(ctx, lp, alpha, id.closed_form().expect("closed-form id"), &emp),
    };
    Ok(checks)
}

/// Run one recipe over every `(tuple, alpha)`; returns whether any check failed.
pub fn verify(l: &Loaded, out: &mut Output, id: TheoremId) -> CliResult<bool> {
    let spec = spec_label(l);
    let ts = times(&l.cfg.time);
    let record = |out: &mut Output, lp: &LorentzParams, c: &Check| {
        println!(
            "{} {} {} alpha={}: {} fitted={} predicted={} {}",
            id.label(),
            spec,
            lp.label(),
            c.alpha,
            c.verdict,
            c.fitted.map_or("-".into(), |v| format!("{v:.4}")),
            c.predicted.map_or("-".into(), |v| format!("{v:.4}")),
            c.note
        );
        out.verdict(VerdictRecord {
            theorem: id.label().into(),
            spec: spec.clone(),
            tuple: lp.label(),
            alpha: c.alpha,
            verdict: c.verdict.into(),
            fitted: c.fitted,
            predicted: c.predicted,
            note: c.note.clone(),
        });
    };
    let table = match table(l) {
        Ok(t) => t,
        Err(CliError::Core(e @ (CoreError::Ambiguous(_) | CoreError::Admissibility(_)))) => {
            for lp in &l.tuples {
                for a in &l.cfg.alpha {
                    record(out, lp, &Check::skip(*a, format!("all: hypotheses unchecked: {e}")));
                }
            }
            return Ok(false);
        }
        Err(e) => return Err(e),
    };
    if ts.is_empty() {
        out.warn("time", "empty time range; nothing verified", 0.0);
        return Ok(false);
    }
    let a_max = l.cfg.alpha.iter().copied().max().unwrap_or(0);
    let ctx = RateContext::new(&l.spec, &table, &l.grid, a_max)?;
    let jobs: Vec<(usize, usize)> =
        (0..l.tuples.len()).flat_map(|ti| l.cfg.alpha.iter().map(move |a| (ti, *a))).collect();
    let results = jobs
        .par_iter()
        .map(|(ti, a)| run_checks(id, &ctx, &l.tuples[*ti], *a, &ts))
        .collect::<CliResult<Vec<_>>>()?;
    let mut failed = false;
    for ((ti, _), checks) in jobs.iter().zip(results) {
        let lp = &l.tuples[*ti];
        for c in checks {
            failed |= c.verdict == "FAIL";
            let window = c.note.split(':').next().unwrap_or("all").to_string();
            for (name, data) in &c.plots {
                let rel = format!("verify/{}/{}_alpha{}_{window}_{name}.dat", id.label(), tuple_slug(lp), c.alpha);
                out.write(&rel, two_column(&format!("t {name}"), data).as_bytes())?;
            }
            record(out, lp, &c);
        }
    }
    Ok(failed)
}
