//! Closed-form reference profiles: Barenblatt functions, Aubin–Talenti functions,
//! the self-similar solution and the pressure variable.

use serde::{Deserialize, Serialize};

use crate::discretization::{apply_lalpha, RadialField};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    /// (1 + |x|^{2+β−γ})^{−1/(1−m)} in the original variable.
    BarenblattStar,
    /// (1 + s²/α²)^{1/(m−1)} in the transformed variable s = |x|^α.
    BarenblattAlpha,
    /// (1 + |x|^{2+β−γ})^{−1/(p−1)} in the original variable.
    AubinTalenti,
}

impl ProfileKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "barenblattstar" | "bstar" => Ok(ProfileKind::BarenblattStar),
            "barenblattalpha" | "balpha" => Ok(ProfileKind::BarenblattAlpha),
            "aubintalenti" | "wstar" => Ok(ProfileKind::AubinTalenti),
            other => Err(Error::Argument(format!("unknown profile {other}"))),
        }
    }
}

/// `(1 + x)^e` with `x = exp(log_x)`, stable for very large x.
fn pow1p_log(log_x: f64, e: f64) -> f64 {
    let log1p_x = if log_x > 30.0 { log_x + (-log_x).exp().ln_1p() } else { log_x.exp().ln_1p() };
    (e * log1p_x).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub kind: ProfileKind,
    pub params: ParamSet,
    /// Dilation: the profile is evaluated at r/scale.
    pub scale: f64,
    /// Total mass in R^d against |x|^{−γ} dx (r^{n−1} ds times |S^{d−1}| for ℬ_α);
    /// None when the tail is not integrable.
    pub mass: Option<f64>,
}

impl Profile {
    pub fn new(kind: ProfileKind, params: ParamSet) -> Self {
        Self::with_scale(kind, params, 1.0)
    }

    pub fn with_scale(kind: ProfileKind, params: ParamSet, scale: f64) -> Self {
        let mut pr = Profile { kind, params, scale, mass: None };
        pr.mass = pr.compute_mass();
        pr
    }

    /// Radial exponent of the measure in the profile's own variable.
    fn measure_exponent(&self) -> f64 {
        let ps = &self.params;
        match self.kind {
            ProfileKind::BarenblattAlpha => ps.n - 1.0,
            _ => ps.d as f64 - 1.0 - ps.gamma,
        }
    }

    fn compute_mass(&self) -> Option<f64> {
        let ps = &self.params;
        let decay = match self.kind {
            ProfileKind::BarenblattStar => 2.0 * ps.alpha / (1.0 - ps.m),
            ProfileKind::BarenblattAlpha => 2.0 / (1.0 - ps.m),
            ProfileKind::AubinTalenti => 2.0 * ps.alpha / (ps.p - 1.0),
        };
        let k = self.measure_exponent();
        if decay <= k + 1.0 {
            return None;
        }
        let base = Profile { scale: 1.0, ..self.clone() };
        let est = quadrature::integrate_half_line(|r| base.eval(r) * r.powf(k), 0.0, 1e-12).ok()?;
        Some(est.value * quadrature::sphere_area(ps.d) * self.scale.powf(k + 1.0))
    }

    /// Closed-form value at radius r (in the profile's own variable).
    pub fn eval(&self, r: f64) -> f64 {
        let ps = &self.params;
        let x = r / self.scale;
        if x == 0.0 {
            return 1.0;
        }
        let lx = x.ln();
        match self.kind {
            ProfileKind::BarenblattStar => pow1p_log(2.0 * ps.alpha * lx, -1.0 / (1.0 - ps.m)),
            ProfileKind::BarenblattAlpha => pow1p_log(2.0 * (lx - ps.alpha.ln()), 1.0 / (ps.m - 1.0)),
            ProfileKind::AubinTalenti => pow1p_log(2.0 * ps.alpha * lx, -1.0 / (ps.p - 1.0)),
        }
    }

    /// Value at transformed radius s = r^α (identity for ℬ_α).
    pub fn eval_transformed(&self, s: f64) -> f64 {
        match self.kind {
            ProfileKind::BarenblattAlpha => self.eval(s),
            _ => self.eval(s.powf(1.0 / self.params.alpha)),
        }
    }

    /// Constant c such that c·profile has the given mass.
    pub fn normalizing_factor(&self, target_mass: f64) -> Result<f64> {
        match self.mass {
            Some(m) => Ok(target_mass / m),
            None => Err(Error::Argument("profile mass is not finite".into())),
        }
    }
}

/// h(t) = (1 + 2m/(1−m) μ t)^{1/μ}.
pub fn h(ps: &ParamSet, t: f64) -> f64 {
    (1.0 + 2.0 * ps.m / (1.0 - ps.m) * ps.mu * t).powf(1.0 / ps.mu)
}

/// Self-similar solution in the transformed variable s:
/// κ^{−n}(μt)^{−n/μ} ℬ_α(s/(κ(μt)^{1/μ})).
pub fn self_similar_transformed(ps: &ParamSet, t: f64, s: f64) -> f64 {
    let scale = ps.kappa * (ps.mu * t).powf(1.0 / ps.mu);
    let b = Profile::new(ProfileKind::BarenblattAlpha, *ps);
    scale.powf(-ps.n) * b.eval(s / scale)
}

/// Self-similar solution v★(t, x) of the weighted equation at |x| = r.
pub fn self_similar_solution(ps: &ParamSet, t: f64, r: f64) -> f64 {
    self_similar_transformed(ps, t, r.powf(ps.alpha))
}

/// Time t₀ = κ^{−μ}/μ at which the self-similar solution coincides with ℬ_α.
pub fn source_time(ps: &ParamSet) -> f64 {
    ps.kappa.powf(-ps.mu) / ps.mu
}

/// P = m/(1−m) v^{m−1}.
pub fn pressure(field: &RadialField, ps: &ParamSet) -> Result<RadialField> {
    field.check_positive()?;
    let c = ps.m / (1.0 - ps.m);
    Ok(field.map(|v| c * v.powf(ps.m - 1.0)))
}

/// Amplitude A and transformed-variable scale λ such that A·W(s/λ), W = (1+s²)^{−1/(p−1)},
/// solves −L_α w = w^{2p−1} − w^p exactly. None when p ≥ p★.
pub fn aubin_talenti_solution_scaling(ps: &ParamSet) -> Option<(f64, f64)> {
    let k = 1.0 / (ps.p - 1.0);
    let c2 = 4.0 * k * (k + 1.0);
    let c1 = c2 - 2.0 * k * ps.n;
    (c1 > 0.0).then(|| {
        let a = (c2 / c1).powf(1.0 / (ps.p - 1.0));
        let lambda = ps.alpha * c1 / c2.sqrt();
        (a, lambda)
    })
}

/// Max-norm over interior nodes of −L_α w − (w^{2p−1} − w^p) on a transformed grid.
///
/// This is the radial Euler–Lagrange residual −div(|x|^{−β}∇w) − |x|^{−γ}(w^{2p−1} − w^p)
/// multiplied by |x|^γ, written in s = |x|^α. The last cell is skipped since the
/// truncated domain closes it with zero flux.
pub fn elliptic_residual(w: &RadialField, ps: &ParamSet) -> Result<f64> {
    w.check_positive()?;
    let lw = apply_lalpha(w, None);
    let n = w.values.len();
    Ok((0..n - 1)
        .map(|i| {
            let v = w.values[i];
            (-lw.values[i] - (v.powf(2.0 * ps.p - 1.0) - v.powf(ps.p))).abs()
        })
        .fold(0.0, f64::max))
}
