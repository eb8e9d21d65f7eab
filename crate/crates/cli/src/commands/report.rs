use super::{fmt_num, spec_label, TheoremId};
use crate::config::Loaded;
use crate::error::{CliError, CliResult};
use crate::manifest::{Output, RunManifest, VerdictRecord};
use std::fmt::Write as _;

pub const CSV_HEADER: [&str; 9] = ["kind", "theorem", "spec", "tuple", "alpha", "verdict", "fitted", "predicted", "note"];

/// Summarize the verdicts and constants in the output directory. One row per
/// `(theorem, spec, tuple, alpha)`; rows never verified are marked MISSING.
pub fn report(l: &Loaded, out: &mut Output) -> CliResult<()> {
    let root = out.root().to_path_buf();
    let prior = RunManifest::read(&root)?
        .ok_or_else(|| CliError::Missing(format!("no manifest in {}; run other commands first", root.display())))?;
    prior.verify_files(&root)?;
    if prior.config_sha256 != l.sha256 {
        return Err(CliError::Integrity("manifest was written for a different config".into()));
    }
    let spec = spec_label(l);
    let mut rows: Vec<VerdictRecord> = Vec::new();
    for id in TheoremId::ALL {
        for lp in &l.tuples {
            for a in &l.cfg.alpha {
                let found: Vec<&VerdictRecord> = prior
                    .verdicts
                    .iter()
                    .filter(|v| v.theorem == id.label() && v.spec == spec && v.tuple == lp.label() && v.alpha == *a)
                    .collect();
                if found.is_empty() {
                    rows.push(VerdictRecord {
                        theorem: id.label().into(),
                        spec: spec.clone(),
                        tuple: lp.label(),
                        alpha: *a,
                        verdict: "MISSING".into(),
                        fitted: None,
                        predicted: None,
                        note: String::new(),
                    });
                } else {
                    rows.extend(found.into_iter().cloned());
                }
            }
        }
    }
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    let mut txt = String::new();
    let _ = writeln!(txt, "spec {spec}\nconfig sha256 {}\n", l.sha256);
    let _ = writeln!(txt, "{:<6} {:<28} {:>5} {:<8} {:>20} {:>20}  note", "id", "tuple", "alpha", "verdict", "fitted", "predicted");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &rows {
        let _ = writeln!(
            txt,
            "{:<6} {:<28} {:>5} {:<8} {:>20} {:>20}  {}",
            r.theorem,
            r.tuple,
            r.alpha,
            r.verdict,
            opt(r.fitted),
            opt(r.predicted),
            r.note
        );
        let alpha = r.alpha.to_string();
        w.write_record([
            "verdict",
            &r.theorem,
            &r.spec,
            &r.tuple,
            &alpha,
            &r.verdict,
            &opt(r.fitted),
            &opt(r.predicted),
            &r.note,
        ])?;
    }
    let _ = writeln!(txt, "\nfitted constants");
    for run in prior.runs.iter().filter(|r| r.command != "report") {
        for (name, v) in &run.constants {
            let _ = writeln!(txt, "  {:<10} {:<48} {}", run.command, name, fmt_num(*v));
            w.write_record(["constant", &run.command, &spec, "", "", "", &fmt_num(*v), "", name])?;
        }
        for warn in &run.warnings {
            let _ = writeln!(txt, "  {:<10} warning [{}] {} ({})", run.command, warn.kind, warn.message, fmt_num(warn.value));
        }
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    print!("{txt}");
    out.write("report.txt", txt.as_bytes())?;
    out.write("report.csv", &bytes)?;
    Ok(())
}
