mod classify;
mod evolve;
mod harmonic;
mod report;
mod scan;
mod verify;

pub use classify::classify;
pub use evolve::evolve;
pub use harmonic::harmonic;
pub use report::report;
pub use scan::norm_scan;
pub use verify::{verify, TheoremId};

use crate::config::{resolve_criticality, Loaded};
use crate::error::CliResult;
use crate::manifest::Output;
use hardylab::params::LorentzParams;
use hardylab::spectral::{exponent_table, ExponentTable};
use hardylab::suites::SuiteReport;
use std::fmt::Write as _;

/// Fraction of mass at the outer wall above which a solution is flagged.
pub const BOUNDARY_WARN: f64 = 1e-6;

/// Fixed-precision number text; infinities spelled out, NaN as an empty field.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.12e}")
    }
}

fn fmt_ext(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x}")
    }
}

/// File-name friendly form of a tuple, e.g. `p1_q-inf_s1_th-inf`.
pub fn tuple_slug(lp: &LorentzParams) -> String {
    let f = |x: f64| fmt_ext(x).replace("inf", "-inf").replace('.', "p");
    format!("p{}_q{}_s{}_th{}", f(lp.p), f(lp.q), f(lp.sigma), f(lp.theta))
}

pub fn spec_label(l: &Loaded) -> String {
    format!("N={} {:?}", l.spec.dim, l.spec.kind)
}

/// Two-column plot data with a comment header.
pub fn two_column(header: &str, rows: &[(f64, f64)]) -> String {
    let mut s = format!("# {header}\n");
    for (x, y) in rows {
        let _ = writeln!(s, "{} {}", fmt_num(*x), fmt_num(*y));
    }
    s
}

pub fn table(l: &Loaded) -> CliResult<ExponentTable> {
    let (class, _) = resolve_criticality(l)?;
    Ok(exponent_table(&l.spec, class, l.cfg.modes.k_max)?)
}

/// Print a suite and copy its constants and failures into the manifest.
pub fn record_suite(out: &mut Output, rep: &SuiteReport) {
    let status = if rep.passed { "pass" } else { "FAIL" };
    let consts: Vec<String> = rep.constants.iter().map(|(n, v)| format!("{n}={v:.4e}")).collect();
    println!("suite {:<28} {status}  {}", rep.name, consts.join(" "));
    for (n, v) in &rep.constants {
        out.constant(format!("{}.{n}", rep.name), *v);
    }
    if !rep.passed {
        let worst = rep.constants.iter().map(|c| c.1).fold(0.0f64, |m, v| m.max(v.abs()));
        out.warn("suite", format!("{} failed: {}", rep.name, rep.notes.join("; ")), worst);
    }
}
