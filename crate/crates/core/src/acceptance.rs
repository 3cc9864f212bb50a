//! Acceptance suite: one check per criterion, each returning measured values next
//! to the pinned tolerance.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::discretization::{build_grid, RadialField, RadialGrid, Spacing};
use crate::error::{Error, Result};
use crate::flow::{
    barenblatt_alpha_field, change_of_variables, run_flow, run_flow_observed, squeezed_datum, uniform_samples,
    FlowState, FunctionalSet, StepperSettings, TimeMaps, Variables,
};
use crate::functionals::{
    blw_identity_check, entropy_suite, g_from_relative, gn_deficit_with, relative_values, renormalize_mass,
};
use crate::params::{optimal_gn_constant, ParamSet, RegionClass};
use crate::profiles::{self_similar_transformed, source_time, Profile, ProfileKind};
use crate::region::{region_map, Axis};
use crate::spectral::{
    assemble_mode, f2_oracle, rate_oracle, reference_spectral_grid, solve_spectrum, solve_spectrum_with,
    symmetry_threshold_via_q, Family, QGrid,
};

pub const CRITERIA: [&str; 12] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11", "A12"];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub measured: Vec<(String, f64)>,
    /// Wall-clock checks, kept apart so that CSV reports stay reproducible.
    pub timings: Vec<(String, f64)>,
    pub expected: String,
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl CriterionReport {
    fn failed(id: &str, title: &str, expected: &str, err: Error, seconds: f64) -> Self {
        CriterionReport {
            id: id.into(),
            title: title.into(),
            passed: false,
            measured: vec![],
            timings: vec![],
            expected: expected.into(),
            notes: vec![format!("error: {err}")],
            seconds,
        }
    }

    /// `A1 PASS mass conservation | drift_m0.7=1.2e-14 ... | expected ... | 3.1s`
    pub fn line(&self) -> String {
        let measured: Vec<String> =
            self.measured.iter().chain(&self.timings).map(|(k, v)| format!("{k}={v:.6e}")).collect();
        let mut s = format!(
            "{} {} {} | {} | expected {} | {:.1}s",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            measured.join(" "),
            self.expected,
            self.seconds
        );
        for n in &self.notes {
            s.push_str(&format!("\n    note: {n}"));
        }
        s
    }
}

/// Rows `id,passed,key,value,expected`, one per measured value.
pub fn write_reports_csv<W: Write>(reports: &[CriterionReport], out: W, meta: &[(String, String)]) -> Result<()> {
    let mut out = out;
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "passed", "key", "value", "expected"])?;
    for r in reports {
        let rows: Vec<(String, String)> = if r.measured.is_empty() {
            vec![("".into(), "".into())]
        } else {
            r.measured.iter().map(|(k, v)| (k.clone(), format!("{v:.12e}"))).collect()
        };
        for (k, v) in rows {
            w.write_record([r.id.clone(), r.passed.to_string(), k, v, r.expected.clone()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceOptions {
    /// Criteria to run; empty means all.
    pub only: Vec<String>,
    /// Multiplies cell counts of the flow criteria (1 = reference resolution).
    /// Tolerances are not rescaled.
    pub resolution: f64,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { only: vec![], resolution: 1.0 }
    }
}

impl AcceptanceOptions {
    fn cells(&self, base: usize) -> usize {
        ((base as f64 * self.resolution).round() as usize).max(crate::discretization::MIN_CELLS)
    }
}

/// Run the selected criteria concurrently; reports come back in criterion order.
pub fn run_all(opts: &AcceptanceOptions) -> Result<Vec<CriterionReport>> {
    for id in &opts.only {
        if !CRITERIA.contains(&id.as_str()) {
            return Err(Error::Argument(format!("unknown criterion {id}")));
        }
    }
    let ids: Vec<&str> = CRITERIA.iter().copied().filter(|id| opts.only.is_empty() || opts.only.iter().any(|o| o == id)).collect();
    Ok(ids.par_iter().map(|id| run_one(id, opts)).collect())
}

pub fn run_one(id: &str, opts: &AcceptanceOptions) -> CriterionReport {
    let (title, expected, f): (&str, &str, fn(&AcceptanceOptions) -> Result<Outcome>) = match id {
        "A1" => ("mass conservation", "drift < 1e-10, < 60 s per trajectory", a1),
        "A2" => ("stationarity", "sup drift < 1e-6 (flow and mapped self-similar solution)", a2),
        "A3" => ("entropy-production identity", "max relative defect < 1e-3 on finest grid, order 2 +- 0.3", a3),
        "A4" => ("Renyi concavity", "G nonincreasing, slack 1e-8 G per step", a4),
        "A5" => ("deficit-remainder identity", "relative gap < 2e-2, < 300 s", a5),
        "A6" => ("BLW identity", "relative gap < 1e-4, order >= 1.7", a6),
        "A7" => ("two-methods equivalence", "relative gap < 5e-3 at five times", a7),
        "A8" => ("spectral kernel and f2", "|lambda_0| < 1e-10, f2 eigenpair within 1e-4", a8),
        "A9" => ("threshold reproduction", "|alpha - alpha_FS| < 1e-3, < 120 s per family", a9),
        "A10" => ("rate consistency", "E_rel rate within 5% of 2 lambda", a10),
        "A11" => ("region map", "boundary within one cell of beta_FS, gamma >= 0 all Symmetry", a11),
        "A12" => ("GN deficit", "deficit >= -1e-8, |deficit| < 1e-6 at optimizers", a12),
        _ => unreachable!("criterion ids are validated by run_all"),
    };
    let start = Instant::now();
    match f(opts) {
        Ok(o) => CriterionReport {
            id: id.into(),
            title: title.into(),
            passed: o.passed,
            measured: o.measured,
            timings: o.timings,
            expected: expected.into(),
            notes: o.notes,
            seconds: start.elapsed().as_secs_f64(),
        },
        Err(e) => CriterionReport::failed(id, title, expected, e, start.elapsed().as_secs_f64()),
    }
}

#[derive(Default)]
struct Outcome {
    passed: bool,
    measured: Vec<(String, f64)>,
    timings: Vec<(String, f64)>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, ..Default::default() }
    }

    fn record(&mut self, key: impl Into<String>, value: f64) {
        self.measured.push((key.into(), value));
    }

    /// Record and require `ok`; NaN values fail.
    fn check(&mut self, key: impl Into<String>, value: f64, ok: bool) {
        self.record(key, value);
        self.passed &= ok && !value.is_nan();
    }

    fn check_time(&mut self, key: impl Into<String>, seconds: f64, limit: f64) {
        self.timings.push((key.into(), seconds));
        self.passed &= seconds < limit;
    }
}

fn flow_err(e: Box<crate::flow::FlowFailure>) -> Error {
    e.error
}

fn fixed_step(dt: f64) -> StepperSettings {
    StepperSettings { dt0: dt, dt_max: dt, grow: 1.0, ..StepperSettings::default() }
}

fn unweighted(m: f64) -> Result<ParamSet> {
    ParamSet::unweighted_from_m(3, m)
}

fn weighted_reference() -> Result<ParamSet> {
    ParamSet::from_m(3, -1.0, -2.0, 0.8)
}

fn uniform(ps: &ParamSet, r_max: f64, cells: usize) -> Result<Arc<RadialGrid>> {
    build_grid(ps, r_max, cells, Spacing::Uniform)
}

fn geometric(ps: &ParamSet, r_max: f64, cells: usize, first: f64) -> Result<Arc<RadialGrid>> {
    build_grid(ps, r_max, cells, Spacing::geometric_with_first_cell(r_max, cells, first)?)
}

fn a1(opts: &AcceptanceOptions) -> Result<Outcome> {
    let cases = [
        ("m0.7", unweighted(0.7)?),
        ("m0.75", unweighted(0.75)?),
        ("m0.8", unweighted(0.8)?),
        ("weighted", weighted_reference()?),
    ];
    let runs: Vec<Result<(f64, f64)>> = cases
        .par_iter()
        .map(|(_, ps)| {
            let start = Instant::now();
            let g = uniform(ps, 20.0, opts.cells(512))?;
            let s = FlowState::new(squeezed_datum(&g, ps, 0.5)?, 0.0, Variables::SelfSimilar, *ps)?;
            let set = FunctionalSet::none();
            let tr = run_flow(&s, 10.0, &uniform_samples(10.0, 100), &set, &StepperSettings::default()).map_err(flow_err)?;
            Ok((tr.max_relative_mass_drift(), start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut o = Outcome::new();
    for ((name, _), run) in cases.iter().zip(runs) {
        let (drift, secs) = run?;
        o.check(format!("drift_{name}"), drift, drift < 1e-10);
        o.check_time(format!("seconds_{name}"), secs, 60.0);
    }
    Ok(o)
}

fn a2(opts: &AcceptanceOptions) -> Result<Outcome> {
    let mut o = Outcome::new();
    for (name, ps) in [("unweighted", unweighted(0.75)?), ("weighted", weighted_reference()?)] {
        let g = uniform(&ps, 20.0, opts.cells(512))?;
        let b = barenblatt_alpha_field(&g, &ps);
        let s = FlowState::new(b.clone(), 0.0, Variables::SelfSimilar, ps)?;
        let mut drift = 0.0f64;
        run_flow_observed(&s, 5.0, &[], &FunctionalSet::none(), &StepperSettings::default(), |_, next| {
            drift = drift.max(next.field.max_abs_diff(&b));
        })
        .map_err(flow_err)?;
        o.check(format!("flow_drift_{name}"), drift, drift < 1e-6);

        // v★(t₀ + t) held at original time t and mapped to self-similar variables
        let maps = TimeMaps::new(&ps);
        let t0 = source_time(&ps);
        let mut image = 0.0f64;
        for tau in [0.0, 0.5, 1.0, 2.0] {
            let t = maps.t_of_tau(tau);
            let og = uniform(&ps, 20.0 * maps.h(t) * 1.01, opts.cells(4000))?;
            let v = FlowState::new(og.sample(|s| self_similar_transformed(&ps, t0 + t, s)), t, Variables::Original, ps)?;
            let u = change_of_variables(&v, Variables::SelfSimilar, Arc::clone(&g))?;
            image = image.max(u.field.max_abs_diff(&b));
        }
        o.check(format!("image_drift_{name}"), image, image < 1e-6);
    }
    Ok(o)
}

/// Largest |ΔE_rel/Δτ + I_rel(τ_{k+1})| / I_rel(τ_{k+1}) over all accepted steps.
fn production_defect(cells: usize, dt: f64, horizon: f64) -> Result<f64> {
    let ps = unweighted(0.75)?;
    let g = uniform(&ps, 20.0, cells)?;
    let s = FlowState::new(squeezed_datum(&g, &ps, 0.5)?, 0.0, Variables::SelfSimilar, ps)?;
    let mut worst = 0.0f64;
    run_flow_observed(&s, horizon, &[], &FunctionalSet::none(), &fixed_step(dt), |prev, next| {
        let (e0, _) = relative_values(&prev.field, &ps);
        let (e1, i1) = relative_values(&next.field, &ps);
        let rate = (e1 - e0) / (next.time - prev.time);
        worst = worst.max((rate + i1).abs() / i1);
    })
    .map_err(flow_err)?;
    Ok(worst)
}

fn a3(opts: &AcceptanceOptions) -> Result<Outcome> {
    // dt ∝ h²: the scheme satisfies the identity exactly in space, so the defect is
    // the time error O(dt) = O(h²) under this refinement.
    let base = opts.cells(512);
    let levels = [base / 4, base / 2, base];
    let defects: Vec<Result<f64>> = levels
        .par_iter()
        .map(|&c| {
            let ratio = base as f64 / c as f64;
            production_defect(c, 1e-4 * ratio * ratio, 2.0)
        })
        .collect();
    let defects = defects.into_iter().collect::<Result<Vec<_>>>()?;
    let mut o = Outcome::new();
    for (c, d) in levels.iter().zip(&defects) {
        o.record(format!("defect_{c}"), *d);
    }
    let finest = defects[2];
    o.check("defect_finest", finest, finest < 1e-3);
    let order = fit_order(&levels.iter().map(|&c| 1.0 / c as f64).collect::<Vec<_>>(), &defects);
    o.check("order", order, (order - 2.0).abs() <= 0.3);
    o.notes.push("time step refined as h^2 alongside the grid".into());
    Ok(o)
}

/// Slope of ln err against ln h.
fn fit_order(h: &[f64], err: &[f64]) -> f64 {
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn a4(opts: &AcceptanceOptions) -> Result<Outcome> {
    let ps = unweighted(0.75)?;
    let g = uniform(&ps, 80.0, opts.cells(1600))?;
    let reference = barenblatt_alpha_field(&g, &ps).mass();
    let dilated = Profile::with_scale(ProfileKind::BarenblattAlpha, ps, 0.7);
    let bump = Profile::new(ProfileKind::BarenblattAlpha, ps);
    let data: [(&str, RadialField); 3] = [
        ("dilated", renormalize_mass(&g.sample(|r| dilated.eval(r)), reference)),
        ("squeezed", squeezed_datum(&g, &ps, 0.5)?),
        ("bump", renormalize_mass(&g.sample(|r| bump.eval(r) * (1.0 + 0.3 * (-r * r).exp())), reference)),
    ];
    let maps = TimeMaps::new(&ps);
    // run until the self-similar scale has doubled
    let horizon = (2f64.powf(ps.mu) - 1.0) / (ps.mu * ps.kappa.powf(ps.mu));
    let results: Vec<Result<(f64, usize)>> = data
        .par_iter()
        .map(|(_, f)| {
            let s = FlowState::new(f.clone(), 0.0, Variables::Original, ps)?;
            let mut worst = f64::NEG_INFINITY;
            let mut steps = 0;
            let mut prev_g = entropy_suite(&s.field, &ps, Variables::Original)?.g;
            let mut err = None;
            run_flow_observed(&s, horizon, &[], &FunctionalSet::none(), &fixed_step(horizon / 2000.0), |_, next| {
                match entropy_suite(&next.field, &ps, Variables::Original) {
                    Ok(e) => {
                        // positive values are increases beyond the allowed slack
                        worst = worst.max((e.g - prev_g) / (1e-8 * prev_g));
                        prev_g = e.g;
                        steps += 1;
                    }
                    Err(e) => err = Some(e),
                }
            })
            .map_err(flow_err)?;
            if let Some(e) = err {
                return Err(e);
            }
            Ok((worst, steps))
        })
        .collect();
    let mut o = Outcome::new();
    o.record("h_final", maps.h(horizon));
    for ((name, _), r) in data.iter().zip(results) {
        let (worst, steps) = r?;
        o.check(format!("max_increase_over_slack_{name}"), worst, worst <= 1.0);
        o.record(format!("steps_{name}"), steps as f64);
    }
    Ok(o)
}

fn a5(opts: &AcceptanceOptions) -> Result<Outcome> {
    let start = Instant::now();
    let ps = unweighted(0.75)?;
    let g = uniform(&ps, 20.0, opts.cells(2000))?;
    let u0 = squeezed_datum(&g, &ps, 0.5)?;
    let (e0, i0) = relative_values(&u0, &ps);
    let lhs = i0 - 4.0 * e0;
    let set = FunctionalSet { entropy: false, relative: false, rstar: true, weighted: false };
    let mut state = FlowState::new(u0, 0.0, Variables::SelfSimilar, ps)?;
    let mut integral = 0.0;
    let mut last: Option<(f64, f64)> = None;
    let chunk = 1.0;
    for _ in 0..30 {
        let tr = run_flow(&state, chunk, &uniform_samples(chunk, 100), &set, &fixed_step(1e-3)).map_err(flow_err)?;
        for r in &tr.rows {
            if let Some((t, v)) = last {
                if r.tau > t {
                    integral += 0.5 * (r.tau - t) * (r.r_star + v);
                }
            }
            last = Some((r.tau, r.r_star));
        }
        state = tr.final_state.ok_or_else(|| Error::Argument("flow ended without a final state".into()))?;
        if last.map(|l| l.1.abs() < 1e-10).unwrap_or(false) {
            break;
        }
    }
    let mut o = Outcome::new();
    o.record("I_minus_4E", lhs);
    o.record("integral_R_star", integral);
    o.record("final_R_star", last.map(|l| l.1).unwrap_or(f64::NAN));
    let gap = (lhs - integral).abs() / lhs.abs();
    o.check("relative_gap", gap, gap < 2e-2);
    let secs = start.elapsed().as_secs_f64();
    o.check_time("seconds", secs, 300.0);
    Ok(o)
}

fn a6(opts: &AcceptanceOptions) -> Result<Outcome> {
    let ps = unweighted(0.8)?;
    let b = Profile::new(ProfileKind::BarenblattStar, ps);
    let fields: [(&str, Box<dyn Fn(f64) -> f64 + Sync>); 3] = [
        ("barenblatt", Box::new(|r| b.eval(r))),
        ("bump", Box::new(|r| b.eval(r) * (1.0 + 0.1 * (-r * r).exp()))),
        ("shell", Box::new(|r| b.eval(r) * (1.0 + 0.3 * r * r * (-r * r).exp()))),
    ];
    let mut o = Outcome::new();
    let levels = [opts.cells(20000), opts.cells(40000)];
    for (name, f) in &fields {
        let mut rel = vec![];
        for &cells in &levels {
            let grid = geometric(&ps, 200.0, cells, 1.0 / cells as f64)?;
            let chk = blw_identity_check(&grid.sample(f), &ps)?;
            rel.push(chk.gap / chk.rhs.abs());
        }
        o.check(format!("relative_gap_{name}"), rel[1], rel[1] < 1e-4);
        let order = (rel[0] / rel[1]).log2();
        o.check(format!("order_{name}"), order, order >= 1.7);
    }
    Ok(o)
}

fn a7(opts: &AcceptanceOptions) -> Result<Outcome> {
    let ps = unweighted(0.75)?;
    let taus = [0.0, 0.15, 0.3, 0.45, 0.6];
    let maps = TimeMaps::new(&ps);
    let t_end = maps.t_of_tau(taus[4]);
    // one grid wide enough for the spreading original solution serves both runs;
    // at t = τ = 0 the two sets of variables coincide
    let g = uniform(&ps, 20.0 * maps.h(t_end) * 1.05, opts.cells(4000))?;
    let u0 = squeezed_datum(&g, &ps, 0.5)?;
    let v0 = FlowState::new(u0.clone(), 0.0, Variables::Original, ps)?;
    let ts: Vec<f64> = taus.iter().map(|&t| maps.t_of_tau(t)).collect();
    let set = FunctionalSet { entropy: true, relative: false, rstar: false, weighted: false };
    let orig = run_flow(&v0, t_end, &ts, &set, &fixed_step(t_end / 4000.0)).map_err(flow_err)?;
    let mut ss_g = vec![];
    let mut state = FlowState::new(u0, 0.0, Variables::SelfSimilar, ps)?;
    ss_g.push(g_from_relative(&state.field, &ps)?);
    for w in taus.windows(2) {
        let tr = run_flow(&state, w[1] - w[0], &[], &FunctionalSet::none(), &fixed_step(1e-4)).map_err(flow_err)?;
        state = tr.final_state.ok_or_else(|| Error::Argument("flow ended without a final state".into()))?;
        ss_g.push(g_from_relative(&state.field, &ps)?);
    }
    let mut o = Outcome::new();
    if orig.rows.len() != taus.len() {
        return Err(Error::Argument(format!("expected {} samples, got {}", taus.len(), orig.rows.len())));
    }
    for ((tau, row), gs) in taus.iter().zip(&orig.rows).zip(&ss_g) {
        let gap = (row.g - gs).abs() / gs.abs();
        o.check(format!("gap_tau{tau}"), gap, gap < 5e-3);
    }
    Ok(o)
}

fn a8(_opts: &AcceptanceOptions) -> Result<Outcome> {
    let mut o = Outcome::new();
    for (name, ps) in [("unweighted", unweighted(0.8)?), ("weighted", weighted_reference()?)] {
        // r_max 60 truncates the f₂ eigenvector at the 2e-4 level in the weighted case
        let g = geometric(&ps, 240.0, 4096, 2.56 / 4096.0)?;
        let mp = assemble_mode(&ps, 0, &g)?;
        let undeflated = solve_spectrum_with(&mp, 1, false)?;
        let l0 = undeflated.eigenvalues[0];
        o.check(format!("lambda0_{name}"), l0, l0.abs() < 1e-10);
        let sp = solve_spectrum(&mp, 1)?;
        let (c, lam) = f2_oracle(&ps);
        let rel = (sp.eigenvalues[0] - lam).abs() / lam;
        o.check(format!("f2_eigenvalue_rel_{name}"), rel, rel < 1e-4);
        let r2: Vec<f64> = g.centers.iter().map(|r| r * r - c).collect();
        let phi = &sp.eigenvectors[0].values;
        let nf = mp.weighted_product(&r2, &r2).sqrt();
        let s = mp.weighted_product(phi, &r2).signum() / nf;
        let diff: Vec<f64> = phi.iter().zip(&r2).map(|(p, f)| p - s * f).collect();
        let dn = mp.weighted_product(&diff, &diff).sqrt();
        o.check(format!("f2_eigenvector_{name}"), dn, dn < 1e-4);
        // translations: the ℓ = 1 profile r, reported as a Rayleigh residual
        let m1 = assemble_mode(&ps, 1, &g)?;
        let x: Vec<f64> = g.centers.clone();
        let lx = m1.apply_minus_l(&x);
        let q = m1.weighted_product(&x, &lx) / m1.weighted_product(&x, &x);
        let res: Vec<f64> = lx.iter().zip(&x).map(|(a, b)| a - q * b).collect();
        o.record(format!("ell1_x_rayleigh_{name}"), q);
        o.record(format!("ell1_x_residual_{name}"), (m1.weighted_product(&res, &res) / m1.weighted_product(&x, &x)).sqrt());
        if name == "unweighted" {
            o.notes.push(format!("convention: {}", sp.convention.statement));
        }
    }
    o.notes.push("the f2 eigenvector is compared in the weighted L2 norm after normalization".into());
    Ok(o)
}

fn a9(_opts: &AcceptanceOptions) -> Result<Outcome> {
    let families = [Family { d: 3, gamma: -1.0, p: 1.5 }, Family { d: 3, gamma: -2.0, p: 2.0 }];
    let runs: Vec<Result<(f64, f64, f64, f64)>> = families
        .par_iter()
        .map(|fam| {
            let start = Instant::now();
            let th = symmetry_threshold_via_q(fam, None, &QGrid::default(), 4, 1e-5)?;
            let predicted = fam.predicted_alpha().ok_or_else(|| Error::Argument("no fixed point".into()))?;
            let bfs = crate::params::beta_fs(fam.d, fam.gamma).unwrap_or(f64::NAN);
            Ok((th.alpha - predicted, th.beta, bfs, start.elapsed().as_secs_f64()))
        })
        .collect();
    let mut o = Outcome::new();
    for (fam, r) in families.iter().zip(runs) {
        let tag = format!("g{}_p{}", fam.gamma, fam.p);
        match r {
            Ok((da, beta, bfs, secs)) => {
                o.check(format!("alpha_gap_{tag}"), da.abs(), da.abs() < 1e-3);
                o.record(format!("beta_{tag}"), beta);
                o.record(format!("beta_fs_{tag}"), bfs);
                o.check_time(format!("seconds_{tag}"), secs, 120.0);
            }
            Err(e) => {
                o.passed = false;
                o.notes.push(format!("{tag}: {e}"));
            }
        }
    }
    Ok(o)
}

fn a10(opts: &AcceptanceOptions) -> Result<Outcome> {
    let mut o = Outcome::new();
    for (name, ps) in [("unweighted", unweighted(0.75)?), ("weighted", weighted_reference()?)] {
        let g = reference_spectral_grid(&ps, opts.cells(512))?;
        let sp = solve_spectrum(&assemble_mode(&ps, 0, &g)?, 1)?;
        let lam = sp.eigenvalues[0];
        let fit = rate_oracle(&ps, 1e-3, &sp.eigenvectors[0], &fixed_step(5e-4))?;
        let rel = (fit.e_rate - 2.0 * lam).abs() / (2.0 * lam);
        o.record(format!("lambda_{name}"), lam);
        o.record(format!("e_rate_{name}"), fit.e_rate);
        o.check(format!("rate_gap_{name}"), rel, rel < 0.05);
        o.notes.extend(fit.warnings.iter().map(|w| format!("{name}: {w}")));
    }
    Ok(o)
}

fn a11(_opts: &AcceptanceOptions) -> Result<Outcome> {
    let d = 3;
    let gamma = Axis::new(-3.0, -0.1, 50)?;
    let beta = Axis::new(-3.0, 0.0, 50)?;
    let cells = region_map(d, gamma, beta, 1.5, None)?;
    let mut o = Outcome::new();
    let overlay = |g: f64| {
        let d = d as f64;
        d - 2.0 - ((g - d).powi(2) - 4.0 * (d - 1.0)).sqrt()
    };
    let mut worst = 0.0f64;
    let mut inadmissible = 0;
    let mut breaking = 0;
    for c in &cells {
        let expect_breaking = c.beta > overlay(c.gamma);
        match c.class {
            RegionClass::Inadmissible => inadmissible += 1,
            RegionClass::FSBoundary => {}
            class => {
                breaking += usize::from(class == RegionClass::SymmetryBreaking);
                if (class == RegionClass::SymmetryBreaking) != expect_breaking {
                    worst = worst.max((c.beta - overlay(c.gamma)).abs() / beta.width());
                }
            }
        }
    }
    o.record("cells", cells.len() as f64);
    o.record("inadmissible_cells", inadmissible as f64);
    o.record("breaking_cells", breaking as f64);
    o.check("max_misclassified_distance_cells", worst, worst <= 1.0 && breaking > 0);
    let strip = region_map(d, Axis::new(0.0, 1.9, 10)?, beta, 1.5, None)?;
    let admissible: Vec<_> = strip.iter().filter(|c| c.class != RegionClass::Inadmissible).collect();
    let bad = admissible.iter().filter(|c| c.class != RegionClass::Symmetry).count();
    o.record("strip_admissible_cells", admissible.len() as f64);
    o.check("strip_non_symmetric_cells", bad as f64, bad == 0 && !admissible.is_empty());
    Ok(o)
}

fn a12(_opts: &AcceptanceOptions) -> Result<Outcome> {
    let ps = unweighted(0.8)?;
    let grid = geometric(&ps, 2000.0, 80000, 5e-4)?;
    let c = optimal_gn_constant(&ps)?.c_gn;
    let k = (ps.m - 0.5) / (1.0 - ps.m);
    let mut rng = rand::rngs::StdRng::seed_from_u64(20260101);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let tail: f64 = rng.gen_range(0.2..3.0);
        let decay: f64 = rng.gen_range(1.05..2.5) * k;
        let bumps: Vec<(f64, f64, f64)> =
            (0..3).map(|_| (rng.gen_range(0.0..2.0), rng.gen_range(0.0..4.0), rng.gen_range(0.3..2.0))).collect();
        let w = grid.sample(|r| {
            let b: f64 = bumps.iter().map(|(a, c, s)| a * (-((r - c) / s).powi(2)).exp()).sum();
            (1.0 + (r / tail).powi(2)).powf(-decay) + b
        });
        // the deficit is homogeneous: `relative` is the deficit with the subtracted term set to 1
        let rel = gn_deficit_with(&w, &ps, c)?.term("relative").unwrap_or(f64::NAN);
        worst = worst.min(rel);
    }
    let mut o = Outcome::new();
    o.check("min_normalized_deficit", worst, worst >= -1e-8);
    for (name, amp, scale) in [("optimizer", 1.0, 1.0), ("dilate0.5", 1.0, 0.5), ("dilate2", 1.0, 2.0), ("multiple3", 3.0, 1.0)] {
        let w = grid.sample(|r| amp * (1.0 + (r / scale).powi(2)).powf(-k));
        let rel = gn_deficit_with(&w, &ps, c)?.term("relative").unwrap_or(f64::NAN);
        o.check(format!("relative_deficit_{name}"), rel.abs(), rel.abs() < 1e-6);
    }
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_criterion_rejected_and_lines_formatted() {
        let opts = AcceptanceOptions { only: vec!["A13".into()], resolution: 1.0 };
        assert!(run_all(&opts).is_err());
        let r = run_one("A11", &AcceptanceOptions::default());
        assert!(r.passed, "{}", r.line());
        assert!(r.line().starts_with("A11 PASS region map |"));
        let mut buf = Vec::new();
        write_reports_csv(&[r], &mut buf, &[("k".into(), "v".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# k: v\nid,passed,key,value,expected\nA11,true,"));
    }

    #[test]
    fn order_fit() {
        let h = [0.4, 0.2, 0.1];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v * v).collect();
        assert!((fit_order(&h, &e) - 2.0).abs() < 1e-12);
    }
}
