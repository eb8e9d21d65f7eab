use super::spec_label;
use crate::config::{resolve_criticality, Loaded};
use crate::error::CliResult;
use crate::manifest::Output;
use hardylab::rates::{classify_cases, ExponentSource};
use hardylab::spectral::{check_nonnegativity, exponent_table, Criticality};
use std::fmt::Write as _;

pub fn classify(l: &Loaded, out: &mut Output) -> CliResult<()> {
    let (class, report) = resolve_criticality(l)?;
    let spec = &l.spec;
    let n = spec.dim;
    let mut s = String::new();
    let _ = writeln!(s, "potential      {}", spec_label(l));
    let _ = writeln!(
        s,
        "lambda1 = {}  lambda2 = {}  lambda_* = {}",
        spec.lambda1,
        spec.lambda2,
        spec.lambda_star()
    );
    let _ = writeln!(s, "criticality    {} ({:?}) {}", class.label(), report.method, report.note);
    if let Some(f) = report.fitted_exponent {
        let _ = writeln!(s, "fitted         {f:.6}  roots {:.6}, {:.6}", report.roots.0, report.roots.1);
        out.constant("classify.fitted_exponent", f);
    }
    let nn = check_nonnegativity(spec);
    let _ = writeln!(
        s,
        "nonnegativity  {} (bottom of spectrum {:.3e}, {})",
        if nn.nonnegative { "holds" } else { "FAILS" },
        nn.evidence,
        if nn.analytic { "analytic" } else { "discretized" }
    );
    out.constant("classify.nonnegativity_evidence", nn.evidence);
    if class == Criticality::Unknown {
        let value = report.fitted_exponent.unwrap_or(f64::NAN);
        out.warn("ambiguous", "criticality could not be decided; set potential.criticality", value);
        let _ = writeln!(s, "exponent table not available until criticality is decided");
        print!("{s}");
        out.write("classify.txt", s.as_bytes())?;
        return Ok(());
    }
    let table = exponent_table(spec, class, l.cfg.modes.k_max)?;
    let a20 = table.row(0).a2;
    if class.is_critical() {
        let _ = writeln!(s, "condition (N') A_2,0 = {a20} > -N/2 = {}: holds", -(n as f64) / 2.0);
    } else {
        let _ = writeln!(s, "condition (N') holds (subcritical)");
    }
    let _ = writeln!(s, "{:>3} {:>10} {:>12} {:>12} {:>12} {:>3}", "k", "omega", "d_k", "A_1,k", "A_2,k", "B_k");
    for r in &table.rows {
        let _ = writeln!(s, "{:>3} {:>10} {:>12} {:>12.6} {:>12.6} {:>3}", r.k, r.omega, r.d_k, r.a1, r.a2, r.b);
    }
    let source = ExponentSource::for_spec(spec);
    for a in &l.cfg.alpha {
        match classify_cases(&table, *a, source) {
            Ok(tag) => {
                let _ = writeln!(s, "alpha = {a}: {}", tag.label());
            }
            Err(e) => {
                let _ = writeln!(s, "alpha = {a}: ambiguous ({e})");
                out.warn("ambiguous", format!("case tag for alpha = {a}: {e}"), table.row(0).a1);
            }
        }
    }
    print!("{s}");
    out.write("classify.txt", s.as_bytes())?;
    Ok(())
}
