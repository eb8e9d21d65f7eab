// Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any fails.

use hardylab::grid::Grid;
use hardylab::harmonic::{solve_h, HarmonicProfile};
use hardylab::iterated::{apply_i, iterate_i, IteratedIntegral};
use hardylab::params::{validate_lambda, LorentzParams};
use hardylab::potential::PotentialSpec;
use hardylab::profile::{InnerExtension, OuterExtension, RadialProfile};
use hardylab::rates::{
    empirical_series, fit_rate, free_rate_check_from_series, phi_alpha, upper_envelope_j, RateContext, RateModel,
};
use hardylab::semigroup::{estimate_operator_norm, evolve_mode, Region, SchemeOptions};
use hardylab::spectral::{check_nonnegativity, exponent_table, Criticality};
use hardylab::suites::{
    energy_bound, gamma_lower_bound, interior_bounds, iterated_bounds, mode_function_bounds, ratio_decay,
    sandwich_bounds, SuiteReport,
};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

const INF: f64 = f64::INFINITY;

type Outcome = Result<(bool, String), String>;

fn geom(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn desk_grid() -> Grid {
    Grid::geometric(1e-8, 1e4, 4096).unwrap()
}

fn suite_grid() -> Grid {
    Grid::geometric(1e-6, 1e4, 2048).unwrap()
}

fn lorentz(p: f64, q: f64, sigma: f64, theta: f64) -> LorentzParams {
    validate_lambda(p, q, sigma, theta).unwrap()
}

fn free_exponent(n: usize, lp: &LorentzParams, alpha: usize) -> f64 {
    -(n as f64) / 2.0 * (1.0 / lp.p - 1.0 / lp.q) - alpha as f64 / 2.0
}

fn decaying() -> PotentialSpec {
    PotentialSpec::decaying(3, 1.0, 4.0).unwrap()
}

fn hardy() -> PotentialSpec {
    PotentialSpec::hardy(3, 2.0).unwrap()
}

fn ctx(spec: &PotentialSpec, alpha_max: usize) -> RateContext {
    let table = exponent_table(spec, Criticality::Subcritical, 4).unwrap();
    RateContext::new(spec, &table, &suite_grid(), alpha_max).unwrap()
}

fn max_rel(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(g, w)| ((g - w) / w).abs()).fold(0.0, f64::max)
}

fn c1_laplacian_harmonics() -> Outcome {
    let g = desk_grid();
    let mut worst: f64 = 0.0;
    for n in [2, 3, 5] {
        let spec = PotentialSpec::zero(n).map_err(|e| e.to_string())?;
        for k in 0..=6 {
            let h = solve_h(&spec, k, &g).map_err(|e| e.to_string())?;
            let want: Vec<f64> = h.radii().iter().map(|r| r.powi(k as i32)).collect();
            worst = worst.max(max_rel(h.values(), &want));
        }
    }
    Ok((worst <= 1e-8, format!("max relative error {worst:.2e}")))
}

fn c2_hardy_harmonics() -> Outcome {
    let g = desk_grid();
    let n = 3usize;
    let m = n as f64 - 2.0;
    let mut worst: f64 = 0.0;
    for lambda in [-0.25 + 0.01, 0.5, 2.0, 6.0] {
        let spec = PotentialSpec::hardy(n, lambda).map_err(|e| e.to_string())?;
        for k in 0..=6 {
            let c = lambda + (k * (n + k - 2)) as f64;
            let a = (-m + (m * m + 4.0 * c).sqrt()) / 2.0;
            let h = solve_h(&spec, k, &g).map_err(|e| e.to_string())?;
            let want: Vec<f64> = h.radii().iter().map(|r| r.powf(a)).collect();
            worst = worst.max(max_rel(h.values(), &want));
        }
    }
    Ok((worst <= 1e-8, format!("max relative error {worst:.2e}")))
}

fn c3_iterated_integrals() -> Outcome {
    let g = desk_grid();
    let mut worst: f64 = 0.0;
    for n in [2usize, 3, 5] {
        let spec = PotentialSpec::zero(n).map_err(|e| e.to_string())?;
        for k in 0..=4 {
            let h = solve_h(&spec, k, &g).map_err(|e| e.to_string())?;
            let its = iterate_i(&h, 3).map_err(|e| e.to_string())?;
            // (r^{N-1+2k} (c r^{2m})')' / r^{N-1+2k} = 2m (2m + 2k + N - 2) c r^{2m-2}
            let mut c = 1.0;
            for (m, it) in its.iter().enumerate().skip(1) {
                c /= (2 * m * (2 * m + 2 * k + n - 2)) as f64;
                let want: Vec<f64> = it.profile.radii().iter().map(|r| c * r.powi(2 * m as i32)).collect();
                worst = worst.max(max_rel(it.profile.values(), &want));
            }
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e}")))
}

/// `(1/w) d/dr (w du/dr)` with `w = r^{N-1} h^2`, by fourth-order differences in `ln r`.
fn mode_operator(r: &[f64], u: &[f64], h: &[f64], n: usize) -> Vec<Option<f64>> {
    let du = (r[1] / r[0]).ln();
    let d = |f: &[f64], i: usize| (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * du);
    let w: Vec<f64> = (0..r.len()).map(|i| r[i].powi(n as i32 - 1) * h[i] * h[i]).collect();
    let mut flux = vec![0.0; r.len()];
    for i in 2..r.len() - 2 {
        flux[i] = w[i] * d(u, i) / r[i];
    }
    (0..r.len())
        .map(|i| if i < 4 || i + 4 >= r.len() { None } else { Some(d(&flux, i) / (r[i] * w[i])) })
        .collect()
}

fn c4_right_inverse() -> Outcome {
    let g = Grid::geometric(1e-4, 1e2, 8192).map_err(|e| e.to_string())?;
    let corpus: Vec<(&str, f64, Box<dyn Fn(f64) -> f64>)> = vec![
        ("1", 0.0, Box::new(|_| 1.0)),
        ("r", 1.0, Box::new(|r| r)),
        ("r^2", 2.0, Box::new(|r| r * r)),
        ("r^0.5", 0.5, Box::new(|r| r.sqrt())),
        ("r^-1", -1.0, Box::new(|r| 1.0 / r)),
        ("exp(-r^2)", 0.0, Box::new(|r| (-r * r).exp())),
        ("exp(-r^2/4)", 0.0, Box::new(|r| (-r * r / 4.0).exp())),
        ("r^2 exp(-r^2)", 2.0, Box::new(|r| r * r * (-r * r).exp())),
        ("(1+r^2)^-1", 0.0, Box::new(|r| 1.0 / (1.0 + r * r))),
        ("(1+r)^-4", 0.0, Box::new(|r| (1.0 + r).powi(-4))),
    ];
    let n = 3usize;
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for spec in [hardy(), decaying()] {
        for k in 0..=1 {
            let h = solve_h(&spec, k, &g).map_err(|e| e.to_string())?;
            for (name, a, f) in &corpus {
                let fp = RadialProfile::from_fn(&g, n, f, InnerExtension::Power { exponent: *a }, OuterExtension::Zero)
                    .map_err(|e| e.to_string())?;
                let u = apply_i(&h, &fp).map_err(|e| e.to_string())?;
                let lu = mode_operator(u.radii(), u.values(), h.values(), n);
                let scale = fp.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (i, v) in lu.iter().enumerate() {
                    if let Some(v) = v {
                        let want = fp.values()[i];
                        // Where f is below 1e-6 sup|f| the differenced flux is mostly rounding error.
                        if want.abs() < 1e-6 * scale {
                            continue;
                        }
                        let e = ((v - want) / want).abs();
                        if e > worst {
                            worst = e;
                            worst_at = format!("{name}, k={k}, r={:.2e}", u.radii()[i]);
                        }
                    }
                }
            }
        }
    }
    Ok((worst <= 1e-5, format!("max relative residual {worst:.2e} ({worst_at})")))
}

fn c5_gaussian() -> Outcome {
    let n = 3usize;
    let s = 1.0;
    let g = desk_grid();
    let spec = PotentialSpec::zero(n).map_err(|e| e.to_string())?;
    let h = solve_h(&spec, 0, &g).map_err(|e| e.to_string())?;
    let phi = RadialProfile::from_fn(
        &g,
        n,
        |r| (-r * r / (4.0 * s)).exp(),
        InnerExtension::Power { exponent: 0.0 },
        OuterExtension::Zero,
    )
    .map_err(|e| e.to_string())?;
    let times = geom(0.1, 10.0, 5);
    let states = evolve_mode(&h, &phi, &times, SchemeOptions::default()).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for st in &states {
        let amp = (s / (s + st.t)).powf(n as f64 / 2.0);
        let err = st
            .radii()
            .iter()
            .zip(st.v())
            .map(|(r, v)| (v - amp * (-r * r / (4.0 * (s + st.t))).exp()).abs())
            .fold(0.0, f64::max);
        worst = worst.max(err / amp);
    }
    let lp = lorentz(1.0, INF, 1.0, INF);
    let mut band = (INF, 0.0f64);
    for t in [0.1, 1.0, 10.0] {
        let est = estimate_operator_norm(&h, 0, &lp, t, Region::Full, SchemeOptions::default())
            .map_err(|e| e.to_string())?;
        let ratio = est.value / (4.0 * PI * t).powf(-(n as f64) / 2.0);
        band = (band.0.min(ratio), band.1.max(ratio));
    }
    let pass = worst <= 1e-4 && band.0 >= 0.5 && band.1 <= 1.05;
    Ok((pass, format!("relative sup error {worst:.2e}; norm ratio in [{:.3}, {:.3}]", band.0, band.1)))
}

fn c6_hardy_rates() -> Outcome {
    let spec = hardy();
    let c = ctx(&spec, 1);
    let lp = lorentz(1.0, INF, 1.0, INF);
    let times = geom(0.1, 100.0, 10);
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in 0..=1 {
        let s = empirical_series(&c, &lp, alpha, &times, SchemeOptions::default()).map_err(|e| e.to_string())?;
        let f = fit_rate(&s, RateModel::Auto).map_err(|e| e.to_string())?;
        let want = -1.5 - alpha as f64 / 2.0;
        pass &= (f.exponent - want).abs() <= 0.05;
        parts.push(format!("alpha={alpha}: {:.4} vs {want}", f.exponent));
    }
    Ok((pass, parts.join("; ")))
}

struct TwoSpecSeries {
    // (label, alpha, floor exponent, fitted exponent, band emp/phi, band upper/phi)
    rows: Vec<(String, usize, f64, f64, f64, f64)>,
}

fn band(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((INF, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
    hi / lo
}

fn two_spec_series() -> Result<TwoSpecSeries, String> {
    let times = geom(0.1, 100.0, 10);
    let cases = [("Hardy lambda=2", hardy(), lorentz(1.0, 2.0, 1.0, 2.0)), ("decaying a=1 kappa=4", decaying(), lorentz(2.0, INF, 2.0, INF))];
    let mut rows = Vec::new();
    for (label, spec, lp) in cases {
        let c = ctx(&spec, 2);
        for alpha in 0..=2 {
            let s = empirical_series(&c, &lp, alpha, &times, SchemeOptions::default()).map_err(|e| e.to_string())?;
            let f = fit_rate(&s, RateModel::Auto).map_err(|e| e.to_string())?;
            let mut emp = Vec::new();
            let mut up = Vec::new();
            for (t, v) in &s {
                let phi = phi_alpha(&c, &lp, alpha, *t).map_err(|e| e.to_string())?;
                let u = upper_envelope_j(&c, &lp, alpha, *t).map_err(|e| e.to_string())?;
                emp.push(v / phi);
                up.push(u / phi);
            }
            rows.push((label.to_string(), alpha, free_exponent(3, &lp, alpha), f.exponent, band(&emp), band(&up)));
        }
    }
    Ok(TwoSpecSeries { rows })
}

fn c7_floor(s: &TwoSpecSeries) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, alpha, floor, fitted, _, _) in &s.rows {
        pass &= *fitted >= floor - 0.05;
        parts.push(format!("{label} alpha={alpha}: {fitted:.3} >= {floor:.3}"));
    }
    Ok((pass, parts.join("; ")))
}

fn c10_two_sided(s: &TwoSpecSeries) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, alpha, _, _, emp, up) in &s.rows {
        pass &= emp.is_finite() && up.is_finite() && *emp <= 10.0 && *up <= 10.0;
        parts.push(format!("{label} alpha={alpha}: {emp:.2}/{up:.2}"));
    }
    Ok((pass, parts.join("; ")))
}

fn c8_slow_rate() -> Outcome {
    let spec = decaying();
    let nonneg = check_nonnegativity(&spec);
    let c = ctx(&spec, 1);
    let lp = lorentz(2.0, INF, 2.0, INF);
    let times = geom(1e2, 1e4, 9);
    let s = empirical_series(&c, &lp, 1, &times, SchemeOptions::default()).map_err(|e| e.to_string())?;
    let f = fit_rate(&s, RateModel::Auto).map_err(|e| e.to_string())?;
    let want = -3.0 / 4.0;
    let free = free_exponent(3, &lp, 1);
    let check = free_rate_check_from_series(&c, &lp, &[(1, s)]).map_err(|e| e.to_string())?;
    let pass = nonneg.nonnegative
        && (f.exponent - want).abs() <= 0.07
        && f.exponent > free + 0.05
        && check.consistent();
    Ok((
        pass,
        format!(
            "nonnegative={} fitted {:.4} vs {want} (free {free}); free-rate check consistent={}",
            nonneg.nonnegative,
            f.exponent,
            check.consistent()
        ),
    ))
}

fn suites_for(spec: &PotentialSpec) -> Result<Vec<SuiteReport>, String> {
    let e = |x: hardylab::error::Error| x.to_string();
    let g = suite_grid();
    let table = exponent_table(spec, Criticality::Subcritical, 6).map_err(e)?;
    let hs: Vec<HarmonicProfile> = (0..=6).map(|k| solve_h(spec, k, &g)).collect::<Result<_, _>>().map_err(e)?;
    let its: Vec<Vec<IteratedIntegral>> = hs.iter().map(|h| iterate_i(h, 3)).collect::<Result<_, _>>().map_err(e)?;
    let times = geom(0.1, 10.0, 9);
    let pairs = [(1.0, 1.0), (2.0, 2.0), (2.0, INF), (4.0, 2.0)];
    let lp = lorentz(1.0, INF, 1.0, INF);
    let (w, d) = interior_bounds(&hs, &lp, 2, &times, SchemeOptions::default()).map_err(e)?;
    Ok(vec![
        sandwich_bounds(&hs, &table).map_err(e)?,
        gamma_lower_bound(&hs[0], &pairs, &times).map_err(e)?,
        energy_bound(&hs).map_err(e)?,
        ratio_decay(&hs).map_err(e)?,
        iterated_bounds(&its).map_err(e)?,
        mode_function_bounds(&hs, &its, 2, &times).map_err(e)?,
        w,
        d,
    ])
}

const CONFIG: &str = r#"
dim = 3
alpha = [0, 1]
seed = 11

[potential]
kind = "hardy"
lambda = 2.0

[grid]
r_min = 1e-6
r_max = 1e4
points = 1024

[modes]
k_max = 2

[time]
t_min = 0.1
t_max = 10.0
points_per_decade = 4

[[lorentz]]
p = 1
q = "inf"
sigma = 1
theta = "inf"
"#;

fn hardylab(dir: &Path, args: &[&str]) -> Result<(), String> {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, CONFIG).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_hardylab"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("hardylab {args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn c9_suites() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, spec) in [("Hardy", hardy()), ("decaying", decaying())] {
        for rep in suites_for(&spec)? {
            pass &= rep.passed;
            if !rep.passed {
                parts.push(format!("{label} {} FAIL {:?}", rep.name, rep.notes));
            }
        }
    }
    // The harmonic command must put the fitted constants in the manifest.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    hardylab(dir.path(), &["harmonic"])?;
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.toml")).map_err(|e| e.to_string())?;
    let listed = ["harmonic sandwich.C_sandwich", "energy bound.C_2", "mode ratio decay.C_3", "iterated integral bound.C"]
        .iter()
        .all(|k| manifest.contains(k));
    pass &= listed;
    parts.push(format!("manifest lists constants: {listed}"));
    Ok((pass, parts.join("; ")))
}

fn csv_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c11_determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    hardylab(a.path(), &["--jobs", "1", "norm-scan"])?;
    hardylab(a.path(), &["report"])?;
    hardylab(b.path(), &["--jobs", "4", "norm-scan"])?;
    hardylab(b.path(), &["report"])?;
    let fa = csv_files(&a.path().join("out"));
    let fb = csv_files(&b.path().join("out"));
    let same = !fa.is_empty() && fa == fb;
    Ok((same, format!("{} CSV files compared", fa.len())))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {n}: {} ({detail}) [{secs:.1}s]", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed += 1;
        }
    };
    report(1, &c1_laplacian_harmonics);
    report(2, &c2_hardy_harmonics);
    report(3, &c3_iterated_integrals);
    report(4, &c4_right_inverse);
    report(5, &c5_gaussian);
    report(6, &c6_hardy_rates);
    let shared = two_spec_series();
    report(7, &|| shared.as_ref().map_err(Clone::clone).and_then(c7_floor));
    report(8, &c8_slow_rate);
    report(9, &c9_suites);
    report(10, &|| shared.as_ref().map_err(Clone::clone).and_then(c10_two_sided));
    report(11, &c11_determinism);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
