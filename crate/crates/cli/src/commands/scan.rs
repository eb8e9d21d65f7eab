use super::{fmt_num, table, tuple_slug, BOUNDARY_WARN};
use crate::config::{times, Loaded};
use crate::error::CliResult;
use crate::manifest::Output;
use hardylab::params::LorentzParams;
use hardylab::rates::{
    classify_cases, lower_envelope, phi_alpha, upper_envelope_j, ExponentSource, LowerOptions, RateContext,
};
use hardylab::semigroup::{estimate_operator_norm, Region, SchemeOptions};
use rayon::prelude::*;

pub const HEADER: [&str; 6] = ["t", "empirical_lower", "upper_env", "lower_env", "phi_alpha", "case_tag"];

type Cell = Result<f64, String>;

struct Row {
    /// One entry per mode `k <= alpha`: value and wall mass.
    empirical: Vec<Result<(f64, f64), String>>,
    upper: Cell,
    lower: Cell,
    phi: Option<Cell>,
}

fn cell(c: &Cell) -> String {
    c.as_ref().map(|v| fmt_num(*v)).unwrap_or_default()
}

fn scan_row(ctx: &RateContext, lp: &LorentzParams, alpha: usize, k_top: usize, t: f64) -> Row {
    let opts = SchemeOptions::default();
    let e = |r: hardylab::error::Result<f64>| r.map_err(|e| e.to_string());
    Row {
        empirical: (0..=k_top)
            .map(|k| {
                estimate_operator_norm(ctx.h(k), alpha, lp, t, Region::Full, opts)
                    .map(|n| (n.value, n.boundary_mass))
                    .map_err(|e| e.to_string())
            })
            .collect(),
        upper: e(upper_envelope_j(ctx, lp, alpha, t)),
        lower: e(lower_envelope(ctx, lp, alpha, t, LowerOptions::default()).map(|l| l.value)),
        phi: (alpha <= 2).then(|| e(phi_alpha(ctx, lp, alpha, t))),
    }
}

/// One CSV per `(k <= alpha, alpha, tuple)`; failed cells are left empty and logged.
pub fn norm_scan(l: &Loaded, out: &mut Output) -> CliResult<()> {
    let table = table(l)?;
    let a_max = l.cfg.alpha.iter().copied().max().unwrap_or(0);
    let ctx = RateContext::new(&l.spec, &table, &l.grid, a_max)?;
    let ts = times(&l.cfg.time);
    if ts.is_empty() {
        out.warn("time", "empty time range; CSV files hold only the header", 0.0);
    }
    let source = ExponentSource::for_spec(&l.spec);
    let mut jobs = Vec::new();
    for (ti, _) in l.tuples.iter().enumerate() {
        for a in &l.cfg.alpha {
            for t in &ts {
                jobs.push((ti, *a, *t));
            }
        }
    }
    let rows: Vec<Row> = jobs
        .par_iter()
        .map(|(ti, a, t)| scan_row(&ctx, &l.tuples[*ti], *a, (*a).min(l.cfg.modes.k_max), *t))
        .collect();

    let mut it = rows.into_iter();
    for lp in &l.tuples {
        let slug = tuple_slug(lp);
        for a in &l.cfg.alpha {
            let tag = match classify_cases(&table, *a, source) {
                Ok(c) => c.label(),
                Err(e) => {
                    out.warn("ambiguous", format!("case tag for alpha = {a}: {e}"), table.row(0).a1);
                    String::new()
                }
            };
            let block: Vec<Row> = it.by_ref().take(ts.len()).collect();
            for k in 0..=(*a).min(l.cfg.modes.k_max) {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(HEADER)?;
                for (t, row) in ts.iter().zip(&block) {
                    let emp = match &row.empirical[k] {
                        Ok((v, mass)) => {
                            if *mass > BOUNDARY_WARN {
                                out.warn("boundary", format!("k = {k}, alpha = {a}, t = {t:e}, {slug}"), *mass);
                            }
                            fmt_num(*v)
                        }
                        Err(e) => {
                            out.warn("row", format!("empirical k = {k}, alpha = {a}, t = {t:e}: {e}"), *t);
                            String::new()
                        }
                    };
                    for (name, c) in [("upper", Some(&row.upper)), ("lower", Some(&row.lower)), ("phi", row.phi.as_ref())] {
                        if let (0, Some(Err(e))) = (k, c) {
                            out.warn("row", format!("{name} alpha = {a}, t = {t:e}: {e}"), *t);
                        }
                    }
                    let phi = row.phi.as_ref().map(cell).unwrap_or_default();
                    w.write_record([fmt_num(*t), emp, cell(&row.upper), cell(&row.lower), phi, tag.clone()])?;
                }
                let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
                out.write(&format!("norm_scan/k{k}_alpha{a}_{slug}.csv"), &bytes)?;
            }
        }
    }
    println!("norm-scan: {} tuples x {} orders x {} times", l.tuples.len(), l.cfg.alpha.len(), ts.len());
    Ok(())
}
