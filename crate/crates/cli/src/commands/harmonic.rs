use super::{record_suite, table, two_column};
use crate::config::{times, Loaded};
use crate::error::CliResult;
use crate::manifest::Output;
use hardylab::harmonic::{fit_asymptotic_constant, solve_h};
use hardylab::iterated::iterate_i;
use hardylab::suites;
use rayon::prelude::*;

/// Iterated integrals tabulated for the envelope suites.
const SUITE_N: usize = 2;

pub fn harmonic(l: &Loaded, out: &mut Output) -> CliResult<()> {
    let table = table(l)?;
    let k_max = l.cfg.modes.k_max;
    let hs = (0..=k_max)
        .into_par_iter()
        .map(|k| solve_h(&l.spec, k, &l.grid))
        .collect::<hardylab::error::Result<Vec<_>>>()?;
    for h in &hs {
        let rows: Vec<(f64, f64)> = h.radii().iter().copied().zip(h.values().iter().copied()).collect();
        out.write(&format!("harmonic/h_{}.dat", h.k), two_column(&format!("r h_{}(r)", h.k), &rows).as_bytes())?;
        let row = table.row(h.k);
        match fit_asymptotic_constant(h, row.a2, row.b as f64) {
            Ok(fit) => {
                println!("k = {:>2}  c_k = {:.6e}  residual {:.2e}", h.k, fit.c, fit.residual);
                out.constant(format!("harmonic.c_{}", h.k), fit.c);
            }
            Err(e) => out.warn("fit", format!("c_{} not fitted: {e}", h.k), f64::NAN),
        }
    }
    let its = hs.par_iter().map(|h| iterate_i(h, SUITE_N)).collect::<hardylab::error::Result<Vec<_>>>()?;
    let ts = times(&l.cfg.time);
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for lp in &l.tuples {
        for pair in [(lp.p, lp.sigma), (lp.q, lp.theta)] {
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
    }
    record_suite(out, &suites::sandwich_bounds(&hs, &table)?);
    record_suite(out, &suites::energy_bound(&hs)?);
    record_suite(out, &suites::ratio_decay(&hs)?);
    record_suite(out, &suites::iterated_bounds(&its)?);
    if ts.is_empty() {
        out.warn("time", "empty time range; time-dependent suites skipped", 0.0);
    } else {
        record_suite(out, &suites::gamma_lower_bound(&hs[0], &pairs, &ts)?);
        record_suite(out, &suites::mode_function_bounds(&hs, &its, 2, &ts)?);
    }
    Ok(())
}
