use super::{record_suite, two_column, BOUNDARY_WARN};
use crate::config::{times, InitialBlock, Loaded};
use crate::error::CliResult;
use crate::manifest::Output;
use hardylab::harmonic::solve_h;
use hardylab::profile::{InnerExtension, OuterExtension, RadialProfile};
use hardylab::rates::{MIN_FIT_DECADES, MIN_FIT_POINTS};
use hardylab::semigroup::{evolve_mode, SchemeOptions};
use hardylab::suites::interior_bounds;
use rayon::prelude::*;

fn default_initial() -> InitialBlock {
    InitialBlock { kind: "gaussian".into(), k: 0, s: Some(1.0), radius: None }
}

pub fn evolve(l: &Loaded, out: &mut Output) -> CliResult<()> {
    let init = l.cfg.initial.clone().unwrap_or_else(default_initial);
    let ts = times(&l.cfg.time);
    if ts.is_empty() {
        out.warn("time", "empty time range; nothing evolved", 0.0);
        return Ok(());
    }
    let opts = SchemeOptions::default();
    let hk = solve_h(&l.spec, init.k, &l.grid)?;
    let n = l.spec.dim;
    let phi = match init.kind.as_str() {
        "gaussian" => {
            let s = init.s.unwrap_or(1.0);
            RadialProfile::from_fn(
                &l.grid,
                n,
                |r| (-r * r / (4.0 * s)).exp(),
                InnerExtension::Power { exponent: 0.0 },
                OuterExtension::Zero,
            )?
        }
        "ball" => RadialProfile::ball_indicator(n, init.radius.unwrap_or(1.0))?,
        _ => hk.profile().restrict_ball(init.radius.unwrap_or(1.0))?,
    };
    let states = evolve_mode(&hk, &phi, &ts, opts)?;
    for (i, st) in states.iter().enumerate() {
        let rows: Vec<(f64, f64)> = st.radii().iter().copied().zip(st.v()).collect();
        let header = format!("r v_{}(r, t = {:.6e})", init.k, st.t);
        out.write(&format!("evolve/k{}_t{:03}.dat", init.k, i), two_column(&header, &rows).as_bytes())?;
        if st.boundary_mass > BOUNDARY_WARN {
            out.warn("boundary", format!("mass fraction at the outer wall at t = {:e}", st.t), st.boundary_mass);
        }
    }
    println!("evolved mode k = {} ({}) to {} times", init.k, init.kind, ts.len());

    let span = (ts[ts.len() - 1] / ts[0]).log10();
    if ts.len() < MIN_FIT_POINTS || span < MIN_FIT_DECADES {
        out.warn("time", "interior suites need 8 times over two decades; skipped", span);
        return Ok(());
    }
    let hs = (0..=l.cfg.modes.k_max)
        .into_par_iter()
        .map(|k| solve_h(&l.spec, k, &l.grid))
        .collect::<hardylab::error::Result<Vec<_>>>()?;
    let a_max = l.cfg.alpha.iter().copied().max().unwrap_or(0).min(2);
    let (w, d) = interior_bounds(&hs, &l.tuples[0], a_max, &ts, opts)?;
    record_suite(out, &w);
    record_suite(out, &d);
    Ok(())
}
