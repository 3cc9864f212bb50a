//! Implicit radial solvers for the fast diffusion equation in original and
//! self-similar variables, and the exact change of variables between them.
//!
//! Both flows live on a transformed grid (s = |x|^α, measure s^{n−1} ds):
//!
//! * original: `g_t = L_α g^m`;
//! * self-similar: `u_τ = D_α*(u z)`, `z = D_α(u^{m−1} − ℬ_α^{m−1})`.
//!
//! Each step is backward Euler in conservative flux form, solved by Newton's
//! method in the pressure-like unknown `p = u^{m−1}`. The Jacobian is tridiagonal.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::{interpolate_even, RadialField, RadialGrid};
use crate::error::{Error, Result};
use crate::functionals;
use crate::params::ParamSet;
use crate::profiles::{Profile, ProfileKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variables {
    Original,
    SelfSimilar,
}

impl Variables {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variables::Original => "original",
            Variables::SelfSimilar => "self-similar",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub field: RadialField,
    /// t for original variables, τ for self-similar ones.
    pub time: f64,
    pub variables: Variables,
    pub ps: ParamSet,
}

impl FlowState {
    pub fn new(field: RadialField, time: f64, variables: Variables, ps: ParamSet) -> Result<Self> {
        field.check_positive()?;
        Ok(FlowState { field, time, variables, ps })
    }

    pub fn mass(&self) -> f64 {
        self.field.mass()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperSettings {
    /// Newton stops when Δt·‖R‖₁ / mass falls below this.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Rejections allowed for a single step before giving up.
    pub max_retries: usize,
    pub dt0: f64,
    pub dt_max: f64,
    pub grow: f64,
}

impl Default for StepperSettings {
    fn default() -> Self {
        StepperSettings { newton_tol: 1e-12, max_newton: 50, max_retries: 20, dt0: 1e-3, dt_max: 0.1, grow: 1.2 }
    }
}

impl StepperSettings {
    pub fn describe(&self) -> String {
        format!(
            "newton_tol={} max_newton={} dt0={} dt_max={} grow={}",
            self.newton_tol, self.max_newton, self.dt0, self.dt_max, self.grow
        )
    }
}

/// Diagnostics of one implicit step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub newton_iterations: usize,
    pub residual: f64,
}

fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> bool {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return false;
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return false;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    rhs.iter().all(|v| v.is_finite())
}

struct Problem<'a> {
    grid: &'a RadialGrid,
    m: f64,
    dt: f64,
    old: &'a [f64],
    /// ℬ_α^{m−1} at nodes for the self-similar drift; None for the original flow.
    drift: Option<Vec<f64>>,
}

impl Problem<'_> {
    fn density(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|&p| p.powf(1.0 / (self.m - 1.0))).collect()
    }

    fn fluxes(&self, p: &[f64], u: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let n = g.cells;
        let a2 = g.alpha * g.alpha;
        let mut f = vec![0.0; n + 1];
        for j in 1..n {
            let coef = g.edge_measure[j] * a2 / g.spans[j];
            f[j] = match &self.drift {
                Some(b) => {
                    let dq = (p[j] - b[j]) - (p[j - 1] - b[j - 1]);
                    coef * 0.5 * (u[j - 1] + u[j]) * dq
                }
                None => -coef * (u[j] * p[j] - u[j - 1] * p[j - 1]),
            };
        }
        f
    }

    fn residual(&self, p: &[f64], u: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let f = self.fluxes(p, u);
        (0..g.cells).map(|i| g.weights[i] * (u[i] - self.old[i]) / self.dt + f[i + 1] - f[i]).collect()
    }

    fn jacobian(&self, p: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let n = g.cells;
        let m = self.m;
        let a2 = g.alpha * g.alpha;
        let du: Vec<f64> = (0..n).map(|i| u[i] / ((m - 1.0) * p[i])).collect();
        let mut diag: Vec<f64> = (0..n).map(|i| g.weights[i] * du[i] / self.dt).collect();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for j in 1..n {
            let coef = g.edge_measure[j] * a2 / g.spans[j];
            // ∂F_j/∂p_j and ∂F_j/∂p_{j−1}
            let (dfj, dfjm) = match &self.drift {
                Some(b) => {
                    let dq = (p[j] - b[j]) - (p[j - 1] - b[j - 1]);
                    let ubar = 0.5 * (u[j - 1] + u[j]);
                    (coef * (0.5 * du[j] * dq + ubar), coef * (0.5 * du[j - 1] * dq - ubar))
                }
                None => {
                    let k = m / (m - 1.0);
                    (-coef * k * u[j], coef * k * u[j - 1])
                }
            };
            // F_j enters row j−1 with + and row j with −
            diag[j - 1] += dfjm;
            upper[j - 1] += dfj;
            diag[j] -= dfj;
            lower[j] -= dfjm;
        }
        (lower, diag, upper)
    }
}

fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn implicit_step(state: &FlowState, dt: f64, settings: &StepperSettings) -> Result<(Vec<f64>, StepInfo)> {
    let g = &*state.field.grid;
    let m = state.ps.m;
    let old = &state.field.values;
    let drift = match state.variables {
        Variables::SelfSimilar => {
            let a2 = g.alpha * g.alpha;
            Some(g.centers.iter().map(|r| 1.0 + r * r / a2).collect())
        }
        Variables::Original => None,
    };
    let prob = Problem { grid: g, m, dt, old, drift };
    let mass = state.field.mass();
    let scale = mass / dt;
    let mut p: Vec<f64> = old.iter().map(|&u| u.powf(m - 1.0)).collect();
    let mut u = prob.density(&p);
    let mut r = prob.residual(&p, &u);
    let mut res = norm1(&r) / scale;
    let mut polished = false;
    for it in 0..=settings.max_newton {
        if res < settings.newton_tol {
            if polished || res < 1e-16 {
                return Ok((u, StepInfo { newton_iterations: it, residual: res }));
            }
            polished = true;
        }
        if it == settings.max_newton {
            break;
        }
        let (lower, diag, upper) = prob.jacobian(&p, &u);
        let mut delta: Vec<f64> = r.iter().map(|v| -v).collect();
        if !solve_tridiagonal(&lower, &diag, &upper, &mut delta) {
            return Err(Error::NewtonDivergence { iterations: it, residual: res, dt });
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = p.iter().zip(&delta).map(|(p, d)| p + lambda * d).collect();
            if trial.iter().all(|&v| v > 0.0 && v.is_finite()) {
                let ut = prob.density(&trial);
                let rt = prob.residual(&trial, &ut);
                let rest = norm1(&rt) / scale;
                if rest.is_finite() && (rest < res || lambda < 1e-3 || polished) {
                    p = trial;
                    u = ut;
                    r = rt;
                    res = rest;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            let index = p.iter().zip(&delta).position(|(p, d)| p + d <= 0.0).unwrap_or(0);
            return Err(Error::PositivityLoss { index, retries: 0 });
        }
    }
    Err(Error::NewtonDivergence { iterations: settings.max_newton, residual: res, dt })
}

fn step(state: &FlowState, dt: f64, expect: Variables, settings: &StepperSettings) -> Result<(FlowState, StepInfo)> {
    if state.variables != expect {
        return Err(Error::WrongVariables { expected: expect.as_str(), found: state.variables.as_str() });
    }
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!("time step {dt} must be nonnegative")));
    }
    state.field.check_positive()?;
    if dt == 0.0 {
        return Ok((state.clone(), StepInfo { newton_iterations: 0, residual: 0.0 }));
    }
    let (values, info) = implicit_step(state, dt, settings)?;
    if let Some(index) = values.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::PositivityLoss { index, retries: 0 });
    }
    let field = RadialField { grid: Arc::clone(&state.field.grid), values };
    Ok((FlowState { field, time: state.time + dt, variables: state.variables, ps: state.ps }, info))
}

/// One backward Euler step of the self-similar flow.
pub fn step_self_similar(s: &FlowState, dtau: f64, settings: &StepperSettings) -> Result<FlowState> {
    step(s, dtau, Variables::SelfSimilar, settings).map(|r| r.0)
}

/// One backward Euler step of the original flow with zero flux at r_max.
pub fn step_original(s: &FlowState, dt: f64, settings: &StepperSettings) -> Result<FlowState> {
    step(s, dt, Variables::Original, settings).map(|r| r.0)
}

/// Closed-form time maps of the self-similar change of variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeMaps {
    pub mu: f64,
    pub kappa: f64,
}

impl TimeMaps {
    pub fn new(ps: &ParamSet) -> Self {
        TimeMaps { mu: ps.mu, kappa: ps.kappa }
    }

    pub fn r0(&self) -> f64 {
        1.0 / self.kappa
    }

    /// R(t) = (R₀^μ + μt)^{1/μ}, the solution of dR/dt = R^{1−μ}, R(0) = R₀.
    pub fn radius(&self, t: f64) -> f64 {
        (self.r0().powf(self.mu) + self.mu * t).powf(1.0 / self.mu)
    }

    pub fn tau_of_t(&self, t: f64) -> f64 {
        (self.mu * t * self.kappa.powf(self.mu)).ln_1p() / (2.0 * self.mu)
    }

    pub fn t_of_tau(&self, tau: f64) -> f64 {
        self.r0().powf(self.mu) * (2.0 * self.mu * tau).exp_m1() / self.mu
    }

    /// h(t) = κR(t).
    pub fn h(&self, t: f64) -> f64 {
        (1.0 + self.mu * t * self.kappa.powf(self.mu)).powf(1.0 / self.mu)
    }
}

/// Map a state to the other set of variables on `target` (cubic interpolation).
///
/// Original → self-similar: u(τ, y) = (κR)^n g(t, κR y); the inverse divides.
pub fn change_of_variables(s: &FlowState, target: Variables, grid: Arc<RadialGrid>) -> Result<FlowState> {
    let maps = TimeMaps::new(&s.ps);
    let n = s.ps.n;
    let (lambda, time) = match (s.variables, target) {
        (Variables::Original, Variables::SelfSimilar) => {
            let l = maps.h(s.time);
            (l, maps.tau_of_t(s.time))
        }
        (Variables::SelfSimilar, Variables::Original) => {
            let t = maps.t_of_tau(s.time);
            (1.0 / maps.h(t), t)
        }
        _ => {
            let values = resample(&s.field, &grid, 1.0, 1.0)?;
            return Ok(FlowState { field: RadialField { grid, values }, ..s.clone() });
        }
    };
    let values = resample(&s.field, &grid, lambda, lambda.powf(n))?;
    Ok(FlowState { field: RadialField { grid, values }, time, variables: target, ps: s.ps })
}

/// Values `amp · f(λ y)` at the centers y of `grid`.
fn resample(f: &RadialField, grid: &RadialGrid, lambda: f64, amp: f64) -> Result<Vec<f64>> {
    grid.centers
        .iter()
        .map(|&y| interpolate_even(&f.grid.centers, &f.values, lambda * y).map(|v| amp * v))
        .collect()
}

/// Functionals recorded at each sample of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalSet {
    pub entropy: bool,
    pub relative: bool,
    pub rstar: bool,
    pub weighted: bool,
}

impl FunctionalSet {
    pub fn all() -> Self {
        FunctionalSet { entropy: true, relative: true, rstar: true, weighted: true }
    }

    pub fn none() -> Self {
        FunctionalSet { entropy: false, relative: false, rstar: false, weighted: false }
    }
}

/// One row of a trace; functionals that are not defined for the run are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tau: f64,
    pub mass: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
    pub e_rel: f64,
    pub i_rel: f64,
    pub r_star: f64,
    pub r_weighted: f64,
}

pub const TRACE_COLUMNS: [&str; 9] = ["tau", "mass", "E", "F", "G", "E_rel", "I_rel", "R_star", "R_weighted"];

impl TraceRow {
    pub fn values(&self) -> [f64; 9] {
        [self.tau, self.mass, self.e, self.f, self.g, self.e_rel, self.i_rel, self.r_star, self.r_weighted]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
    pub variables: Variables,
    pub ps: ParamSet,
    pub grid: String,
    pub settings: StepperSettings,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub final_state: Option<FlowState>,
}

/// A failed run with the trace recorded up to the failure.
#[derive(Debug, Clone)]
pub struct FlowFailure {
    pub error: Error,
    pub partial: FlowTrace,
}

impl std::fmt::Display for FlowFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} samples)", self.error, self.partial.rows.len())
    }
}

impl std::error::Error for FlowFailure {}

impl FlowTrace {
    fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values()[k]).collect()
    }

    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.rows.first().map(|r| r.mass).unwrap_or(0.0);
        self.rows.iter().map(|r| (r.mass - m0).abs() / m0).fold(0.0, f64::max)
    }

    fn nonincreasing(v: &[f64], slack: f64) -> bool {
        v.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    pub fn e_rel_nonincreasing(&self) -> bool {
        Self::nonincreasing(&self.column(5), 0.0)
    }

    pub fn g_nonincreasing(&self, slack: f64) -> bool {
        Self::nonincreasing(&self.column(4), slack)
    }

    pub fn write_csv<W: Write>(&self, out: W, meta: &[(String, String)]) -> Result<()> {
        let mut out = out;
        for (k, v) in meta {
            writeln!(out, "# {k}: {v}")?;
        }
        writeln!(out, "# variables: {}", self.variables.as_str())?;
        writeln!(out, "# grid: {}", self.grid)?;
        writeln!(out, "# stepper: {}", self.settings.describe())?;
        writeln!(out, "# steps: accepted={} rejected={}", self.accepted_steps, self.rejected_steps)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.rows {
            w.write_record(r.values().iter().map(|v| format!("{v:.12e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sample the requested functionals of a state.
pub fn trace_row(s: &FlowState, set: &FunctionalSet) -> TraceRow {
    let nan = f64::NAN;
    let mut row = TraceRow {
        tau: s.time,
        mass: s.mass(),
        e: nan,
        f: nan,
        g: nan,
        e_rel: nan,
        i_rel: nan,
        r_star: nan,
        r_weighted: nan,
    };
    if set.entropy {
        if let Ok(e) = functionals::entropy_suite(&s.field, &s.ps, s.variables) {
            row.e = e.e;
            row.f = e.f;
            row.g = e.g;
        }
    }
    if s.variables == Variables::SelfSimilar {
        if set.relative {
            let (e, i) = functionals::relative_values(&s.field, &s.ps);
            row.e_rel = e;
            row.i_rel = i;
        }
        if set.rstar && s.ps.is_unweighted() {
            if let Ok(r) = functionals::rstar_remainder(&s.field, &s.ps) {
                row.r_star = r.value;
            }
        }
    }
    if set.weighted {
        if let Ok(r) = functionals::weighted_remainder(&s.field, &s.ps, None) {
            row.r_weighted = r.value;
        }
    }
    row
}

/// Sample times `horizon·k/count`, k = 0..=count.
pub fn uniform_samples(horizon: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| horizon * k as f64 / count as f64).collect()
}

/// Adaptive stepping to `horizon`, sampling the functionals at `samples`
/// (relative to the initial time). `observe` sees every accepted step as
/// (previous state, new state).
pub fn run_flow_observed<F>(
    s0: &FlowState,
    horizon: f64,
    samples: &[f64],
    set: &FunctionalSet,
    settings: &StepperSettings,
    mut observe: F,
) -> std::result::Result<FlowTrace, Box<FlowFailure>>
where
    F: FnMut(&FlowState, &FlowState),
{
    let mut trace = FlowTrace {
        rows: Vec::new(),
        variables: s0.variables,
        ps: s0.ps,
        grid: s0.field.grid.describe(),
        settings: *settings,
        accepted_steps: 0,
        rejected_steps: 0,
        final_state: None,
    };
    let fail = |error: Error, trace: FlowTrace| Box::new(FlowFailure { error, partial: trace });
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(fail(Error::Argument(format!("horizon {horizon} must be positive")), trace));
    }
    if let Err(e) = s0.field.check_positive() {
        return Err(fail(e, trace));
    }
    let t0 = s0.time;
    let mut targets: Vec<f64> = samples.iter().copied().filter(|&t| t > 0.0 && t <= horizon).collect();
    targets.push(horizon);
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    targets.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * horizon);
    if samples.contains(&0.0) {
        trace.rows.push(trace_row(s0, set));
    }
    let sample_set: Vec<f64> = samples.to_vec();
    let mut state = s0.clone();
    let mut dt = settings.dt0.min(settings.dt_max);
    for &target in &targets {
        loop {
            let elapsed = state.time - t0;
            let remaining = target - elapsed;
            if remaining <= 1e-12 * horizon.max(1.0) {
                break;
            }
            let mut retries = 0;
            loop {
                let this_dt = dt.min(remaining);
                match step(&state, this_dt, state.variables, settings) {
                    Ok((next, _)) => {
                        let mut next = next;
                        if (remaining - this_dt).abs() <= 1e-12 * horizon.max(1.0) {
                            next.time = t0 + target;
                        }
                        observe(&state, &next);
                        state = next;
                        trace.accepted_steps += 1;
                        if this_dt == dt {
                            dt = (dt * settings.grow).min(settings.dt_max);
                        }
                        break;
                    }
                    Err(e @ (Error::NewtonDivergence { .. } | Error::PositivityLoss { .. })) => {
                        trace.rejected_steps += 1;
                        retries += 1;
                        dt *= 0.5;
                        if retries > settings.max_retries {
                            let e = match e {
                                Error::PositivityLoss { index, .. } => Error::PositivityLoss { index, retries },
                                other => other,
                            };
                            trace.final_state = Some(state);
                            return Err(fail(e, trace));
                        }
                    }
                    Err(e) => {
                        trace.final_state = Some(state);
                        return Err(fail(e, trace));
                    }
                }
            }
        }
        if sample_set.iter().any(|&t| (t - target).abs() <= 1e-12 * horizon.max(1.0)) {
            trace.rows.push(trace_row(&state, set));
        }
    }
    trace.final_state = Some(state);
    Ok(trace)
}

pub fn run_flow(
    s0: &FlowState,
    horizon: f64,
    samples: &[f64],
    set: &FunctionalSet,
    settings: &StepperSettings,
) -> std::result::Result<FlowTrace, Box<FlowFailure>> {
    run_flow_observed(s0, horizon, samples, set, settings, |_, _| {})
}

/// ℬ_α sampled on a transformed grid.
pub fn barenblatt_alpha_field(grid: &Arc<RadialGrid>, ps: &ParamSet) -> RadialField {
    let b = Profile::new(ProfileKind::BarenblattAlpha, *ps);
    grid.sample(|r| b.eval(r))
}

/// Datum (1 + a e^{−r²} + b e^{−(r−2)²} + r²/α²)^{1/(m−1)} with b chosen so that its
/// discrete mass equals that of ℬ_α on the same grid. It lies between two
/// Barenblatt-type profiles since the perturbation of the pressure is bounded.
pub fn squeezed_datum(grid: &Arc<RadialGrid>, ps: &ParamSet, a: f64) -> Result<RadialField> {
    let target = barenblatt_alpha_field(grid, ps).mass();
    let a2 = ps.alpha * ps.alpha;
    let make = |b: f64| {
        grid.sample(|r| {
            let c = a * (-r * r).exp() + b * (-(r - 2.0) * (r - 2.0)).exp();
            (1.0 + c + r * r / a2).powf(1.0 / (ps.m - 1.0))
        })
    };
    if a <= -1.0 {
        return Err(Error::Argument(format!("a = {a} must exceed -1")));
    }
    // mass is decreasing in b; keep the base positive everywhere
    let floor = grid
        .centers
        .iter()
        .map(|&r| (1.0 + a * (-r * r).exp() + r * r / a2) * ((r - 2.0) * (r - 2.0)).exp())
        .fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (-0.9 * floor, 10.0);
    let mass = |b: f64| make(b).mass() - target;
    if mass(lo) < 0.0 || mass(hi) > 0.0 {
        return Err(Error::Argument(format!("cannot match the reference mass with a = {a}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let f = make(0.5 * (lo + hi));
    // final touch so the discrete masses agree to round-off
    let c = target / f.mass();
    Ok(f.scaled(c))
}
