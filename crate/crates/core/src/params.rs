//! Parameter algebra for the weighted (CKN) and unweighted (GN) settings.
//!
//! Every derived scalar is computed once in the constructor, and the
//! redundant closed forms are cross-checked there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{Profile, ProfileKind};
use crate::quadrature;

/// Default tolerance (in β) for the Felli–Schneider boundary class.
pub const FS_TOLERANCE: f64 = 1e-9;

const CROSS_CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Unweighted,
    Weighted,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Unweighted => "unweighted",
            Mode::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub d: u32,
    pub beta: f64,
    pub gamma: f64,
    pub p: f64,
    pub mode: Mode,
    pub alpha: f64,
    pub n: f64,
    pub delta: f64,
    pub m: f64,
    pub m_c: f64,
    pub m1: f64,
    pub sigma: f64,
    pub mu: f64,
    pub mu_star: f64,
    pub kappa: f64,
    /// `f64::INFINITY` when d − β − 2 ≤ 0 (unweighted d ≤ 2).
    pub p_star: f64,
    pub vartheta: f64,
    /// None when (γ−d)² − 4(d−1) < 0.
    pub beta_fs: Option<f64>,
    /// None when n ≤ 1.
    pub alpha_fs: Option<f64>,
    /// Whether p ≤ p★ holds; only `family_member` may produce `false`.
    pub p_admissible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionClass {
    Symmetry,
    SymmetryBreaking,
    FSBoundary,
    /// Parameters outside the admissible range; only produced by sweeps.
    Inadmissible,
}

impl RegionClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionClass::Symmetry => "Symmetry",
            RegionClass::SymmetryBreaking => "SymmetryBreaking",
            RegionClass::FSBoundary => "FSBoundary",
            RegionClass::Inadmissible => "Inadmissible",
        }
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn check(name: &str, a: f64, b: f64) -> Result<()> {
    if rel_gap(a, b) > CROSS_CHECK_TOL {
        return Err(Error::InvariantViolation(format!("{name}: {a:.17e} vs {b:.17e}")));
    }
    Ok(())
}

/// β_FS(γ) = d − 2 − sqrt((γ−d)² − 4(d−1)), or None when the root is complex.
pub fn beta_fs(d: u32, gamma: f64) -> Option<f64> {
    let d = d as f64;
    let disc = (gamma - d).powi(2) - 4.0 * (d - 1.0);
    (disc >= 0.0).then(|| d - 2.0 - disc.sqrt())
}

/// The α at which α = α_FS along the family β = γ + 2(α−1): the smaller root of
/// α² − (d−γ)α + (d−1) = 0.
pub fn alpha_fs_fixed_point(d: u32, gamma: f64) -> Option<f64> {
    let d = d as f64;
    let b = d - gamma;
    let disc = b * b - 4.0 * (d - 1.0);
    (disc >= 0.0).then(|| 0.5 * (b - disc.sqrt()))
}

impl ParamSet {
    /// Derive the full parameter set from (d, β, γ, p). (β, γ) = (0, 0) selects the
    /// unweighted mode.
    pub fn new(d: u32, beta: f64, gamma: f64, p: f64) -> Result<Self> {
        if beta == 0.0 && gamma == 0.0 {
            Self::unweighted(d, p)
        } else {
            Self::build(d, beta, gamma, p, Mode::Weighted, true)
        }
    }

    /// Same as [`ParamSet::new`] with p recovered from m = (p+1)/(2p).
    pub fn from_m(d: u32, beta: f64, gamma: f64, m: f64) -> Result<Self> {
        Self::new(d, beta, gamma, p_from_m(m)?)
    }

    /// Unweighted GN mode (β = γ = 0), which also admits d ∈ {1, 2}.
    pub fn unweighted(d: u32, p: f64) -> Result<Self> {
        Self::build(d, 0.0, 0.0, p, Mode::Unweighted, true)
    }

    pub fn unweighted_from_m(d: u32, m: f64) -> Result<Self> {
        Self::unweighted(d, p_from_m(m)?)
    }

    /// Member of the one-parameter family with fixed (d, γ, p) and varying α,
    /// β = γ + 2(α − 1). The bound p ≤ p★ is recorded in `p_admissible` instead of
    /// being enforced, since threshold scans cross it.
    pub fn family_member(d: u32, gamma: f64, alpha: f64, p: f64) -> Result<Self> {
        Self::build(d, gamma + 2.0 * (alpha - 1.0), gamma, p, Mode::Weighted, false)
    }

    fn build(d: u32, beta: f64, gamma: f64, p: f64, mode: Mode, enforce_pstar: bool) -> Result<Self> {
        if !(beta.is_finite() && gamma.is_finite() && p.is_finite()) {
            return Err(Error::Inadmissible("non-finite input".into()));
        }
        let df = d as f64;
        match mode {
            Mode::Unweighted => {
                if d < 1 {
                    return Err(Error::Inadmissible("d must be at least 1".into()));
                }
            }
            Mode::Weighted => {
                if d < 2 {
                    return Err(Error::Inadmissible("d ≥ 2 required with weights".into()));
                }
                if !(gamma < df) {
                    return Err(Error::Inadmissible(format!("gamma = {gamma} must be < d = {d}")));
                }
                if !(gamma - 2.0 < beta) {
                    return Err(Error::Inadmissible(format!("beta = {beta} must exceed gamma - 2 = {}", gamma - 2.0)));
                }
                let upper = (df - 2.0) * gamma / df;
                if !(beta < upper) {
                    return Err(Error::Inadmissible(format!("beta = {beta} must be < (d-2)gamma/d = {upper}")));
                }
            }
        }
        if beta + 2.0 - gamma <= 0.0 {
            return Err(Error::DegenerateDenominator("beta + 2 - gamma <= 0".into()));
        }
        if mode == Mode::Weighted && df - beta - 2.0 <= 0.0 {
            return Err(Error::DegenerateDenominator("d - beta - 2 <= 0".into()));
        }
        if !(p > 1.0) {
            return Err(Error::Inadmissible(format!("p = {p} must exceed 1")));
        }
        let p_star = if df - beta - 2.0 > 0.0 { (df - gamma) / (df - beta - 2.0) } else { f64::INFINITY };
        let p_admissible = p <= p_star * (1.0 + 1e-14);
        if enforce_pstar && !p_admissible {
            return Err(Error::Inadmissible(format!("p = {p} exceeds p_star = {p_star}")));
        }

        let alpha = 1.0 + (beta - gamma) / 2.0;
        let n = 2.0 * (df - gamma) / (beta + 2.0 - gamma);
        let m = (p + 1.0) / (2.0 * p);
        let m_c = (df - 2.0 - beta) / (df - gamma);
        let m1 = (2.0 * df - 2.0 - beta - gamma) / (2.0 * (df - gamma));
        let mu = 2.0 + n * (m - 1.0);
        let mu_star = (df - gamma) * (m - m_c);
        let ps = ParamSet {
            d,
            beta,
            gamma,
            p,
            mode,
            alpha,
            n,
            delta: df - n,
            m,
            m_c,
            m1,
            sigma: (m - m_c) / (1.0 - m),
            mu,
            mu_star,
            kappa: (2.0 * m / (1.0 - m)).powf(1.0 / mu),
            p_star,
            vartheta: (df - gamma) * (p - 1.0) / (p * (df + beta + 2.0 - 2.0 * gamma - p * (df - beta - 2.0))),
            beta_fs: beta_fs(d, gamma),
            alpha_fs: (n > 1.0).then(|| ((df - 1.0) / (n - 1.0)).sqrt()),
            p_admissible,
        };
        ps.cross_check()?;
        Ok(ps)
    }

    fn cross_check(&self) -> Result<()> {
        let df = self.d as f64;
        check("m1 = 1 - 1/n", self.m1, 1.0 - 1.0 / self.n)?;
        if self.n > 2.0 {
            check("p_star = n/(n-2)", self.p_star, self.n / (self.n - 2.0))?;
        }
        let mu_hmu = 2.0 * (2.0 + self.beta - df + self.m * (df - self.gamma)) / (2.0 + self.beta - self.gamma);
        check("mu two forms", self.mu, mu_hmu)?;
        check("mu_star = alpha mu", self.mu_star, self.alpha * self.mu)?;
        check("d - 2 - beta = alpha (n - 2)", df - 2.0 - self.beta, self.alpha * (self.n - 2.0))?;
        if self.mode == Mode::Unweighted {
            check("sigma unweighted", self.sigma, 2.0 / (df * (1.0 - self.m)) - 1.0)?;
            if self.alpha != 1.0 || self.n != df || self.delta != 0.0 {
                return Err(Error::InvariantViolation("zero weights must give alpha=1, n=d".into()));
            }
        }
        if self.p_admissible && !(self.m >= self.m1 * (1.0 - 1e-14) && self.m < 1.0) {
            return Err(Error::InvariantViolation(format!("m = {} outside [m1, 1)", self.m)));
        }
        Ok(())
    }

    pub fn is_unweighted(&self) -> bool {
        self.mode == Mode::Unweighted
    }

    /// GN exponent q = 1/(2m−1) (equal to p).
    pub fn q(&self) -> f64 {
        1.0 / (2.0 * self.m - 1.0)
    }

    /// Angular eigenvalue Λ_ℓ = ℓ(ℓ + d − 2).
    pub fn lambda_ell(&self, ell: u32) -> f64 {
        ell as f64 * (ell as f64 + self.d as f64 - 2.0)
    }

    /// Flat key/value record for CSV headers and config echo.
    pub fn records(&self) -> Vec<(&'static str, String)> {
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_else(|| "none".into());
        vec![
            ("mode", self.mode.as_str().to_string()),
            ("d", self.d.to_string()),
            ("beta", format!("{}", self.beta)),
            ("gamma", format!("{}", self.gamma)),
            ("p", format!("{}", self.p)),
            ("m", format!("{}", self.m)),
            ("alpha", format!("{}", self.alpha)),
            ("n", format!("{}", self.n)),
            ("delta", format!("{}", self.delta)),
            ("m_c", format!("{}", self.m_c)),
            ("m1", format!("{}", self.m1)),
            ("sigma", format!("{}", self.sigma)),
            ("mu", format!("{}", self.mu)),
            ("mu_star", format!("{}", self.mu_star)),
            ("kappa", format!("{}", self.kappa)),
            ("p_star", format!("{}", self.p_star)),
            ("vartheta", format!("{}", self.vartheta)),
            ("beta_fs", opt(self.beta_fs)),
            ("alpha_fs", opt(self.alpha_fs)),
        ]
    }

    /// Rebuild from a record produced by [`ParamSet::records`].
    pub fn from_records(rec: &[(&str, &str)]) -> Result<Self> {
        let get = |k: &str| {
            rec.iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Config(format!("missing key {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|e| Error::Config(format!("{k}: {e}")))
        };
        let d: u32 = get("d")?.parse().map_err(|e| Error::Config(format!("d: {e}")))?;
        match get("mode")? {
            "unweighted" => Self::unweighted(d, num("p")?),
            _ => Self::new(d, num("beta")?, num("gamma")?, num("p")?),
        }
    }
}

fn p_from_m(m: f64) -> Result<f64> {
    if !(m > 0.5 && m < 1.0) {
        return Err(Error::Inadmissible(format!("m = {m} must lie in (1/2, 1)")));
    }
    Ok(1.0 / (2.0 * m - 1.0))
}

/// Region classification with the default boundary tolerance.
pub fn classify_region(ps: &ParamSet) -> RegionClass {
    classify_region_tol(ps, FS_TOLERANCE)
}

pub fn classify_region_tol(ps: &ParamSet, tol: f64) -> RegionClass {
    if ps.gamma >= 0.0 {
        return RegionClass::Symmetry;
    }
    // γ < 0 always has a real β_FS.
    let bfs = ps.beta_fs.expect("beta_fs is real for gamma < 0");
    if (ps.beta - bfs).abs() <= tol {
        RegionClass::FSBoundary
    } else if ps.beta > bfs {
        RegionClass::SymmetryBreaking
    } else {
        RegionClass::Symmetry
    }
}

/// Mass, entropy, Fisher information of ℬ★ and the resulting optimal GN constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnConstant {
    pub c_gn: f64,
    /// C_GN from the closed form without the mass factor (equal to `c_gn` when M★ = 1).
    pub c_gn_unit_mass: f64,
    pub theta: f64,
    pub q: f64,
    pub mass: f64,
    pub entropy: f64,
    pub fisher: f64,
    pub g: f64,
}

/// Optimal GN constant from quadrature of E[ℬ★] and I[ℬ★] in R^d, normalized so that
/// ‖∇w‖₂^θ ‖w‖_{q+1}^{1−θ} ≥ C_GN ‖w‖_{2q} with equality at w = ℬ★^{m−1/2}.
///
/// The factor M★^{−1/(2q)} makes the constant independent of the mass normalization
/// of ℬ★; without it the formula only holds when M★ = 1.
pub fn optimal_gn_constant(ps: &ParamSet) -> Result<GnConstant> {
    if !ps.is_unweighted() {
        return Err(Error::Argument("optimal_gn_constant needs unweighted parameters".into()));
    }
    let (m, d) = (ps.m, ps.d as f64);
    let b = Profile::new(ProfileKind::BarenblattStar, *ps);
    let area = quadrature::sphere_area(ps.d);
    let tol = 1e-13;
    let mass = quadrature::integrate_half_line(|r| b.eval(r) * r.powf(d - 1.0), 0.0, tol)?.value * area;
    let entropy = quadrature::integrate_half_line(|r| b.eval(r).powf(m) * r.powf(d - 1.0), 0.0, tol)?.value * area;
    // ∇P★ = 2m/(1−m) x for ℬ★ = (1+r²)^{−1/(1−m)}
    let c = 2.0 * m / (1.0 - m);
    let fisher = quadrature::integrate_half_line(|r| b.eval(r) * (c * r).powi(2) * r.powf(d - 1.0), 0.0, tol)?.value * area;
    let g = entropy.powf(ps.sigma - 1.0) * fisher;
    let theta = ps.vartheta;
    let q = ps.q();
    let c_gn_unit_mass = ((2.0 * m - 1.0).powi(2) / (4.0 * m * m) * g).powf(theta / 2.0);
    Ok(GnConstant {
        c_gn: c_gn_unit_mass * mass.powf(-1.0 / (2.0 * q)),
        c_gn_unit_mass,
        theta,
        q,
        mass,
        entropy,
        fisher,
        g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unweighted_example() {
        let ps = ParamSet::new(3, 0.0, 0.0, 2.0).unwrap();
        assert_eq!(ps.mode, Mode::Unweighted);
        assert_eq!(ps.alpha, 1.0);
        assert_eq!(ps.n, 3.0);
        assert_eq!(ps.delta, 0.0);
        assert_eq!(ps.m, 0.75);
    }

    #[test]
    fn weighted_example() {
        let ps = ParamSet::new(3, -1.0, -2.0, 2.0).unwrap();
        assert!((ps.alpha - 1.5).abs() < 1e-15);
        assert!((ps.n - 10.0 / 3.0).abs() < 1e-14);
        assert!((ps.m1 - 0.7).abs() < 1e-14);
        assert!((ps.p_star - 2.5).abs() < 1e-14);
        assert!((ps.alpha_fs.unwrap() - (6.0f64 / 7.0).sqrt()).abs() < 1e-14);
        assert!((ps.alpha_fs.unwrap() - 0.92582).abs() < 1e-5);
    }

    #[test]
    fn beta_above_upper_bound_rejected() {
        assert!(matches!(ParamSet::new(3, 1.0, 0.0, 2.0), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn other_guards() {
        assert!(matches!(ParamSet::new(3, 0.0, 0.0, 1.0), Err(Error::Inadmissible(_))));
        assert!(matches!(ParamSet::new(3, 0.0, 0.0, 3.5), Err(Error::Inadmissible(_))));
        assert!(matches!(ParamSet::new(1, -1.0, -0.5, 2.0), Err(Error::Inadmissible(_))));
        assert!(ParamSet::unweighted(1, 10.0).is_ok());
        assert!(ParamSet::unweighted(2, 50.0).is_ok());
        assert!(matches!(ParamSet::new(3, 0.0, f64::NAN, 2.0), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn m_input_round_trip() {
        let ps = ParamSet::unweighted_from_m(3, 0.8).unwrap();
        assert!((ps.p - 5.0 / 3.0).abs() < 1e-14);
        assert!((ps.m - 0.8).abs() < 1e-15);
        assert!(ParamSet::unweighted_from_m(3, 0.5).is_err());
    }

    #[test]
    fn kappa_and_mu_for_m_08() {
        let ps = ParamSet::unweighted_from_m(3, 0.8).unwrap();
        assert!((ps.mu - 1.4).abs() < 1e-14);
        assert!((ps.kappa - 8f64.powf(5.0 / 7.0)).abs() < 1e-13);
        assert!((ps.kappa - 4.41636).abs() < 1e-5);
    }

    #[test]
    fn classification_examples() {
        let ps = ParamSet::new(3, -1.5, -1.0, 1.5).unwrap();
        assert!((ps.beta_fs.unwrap() - (1.0 - 2.0 * 2f64.sqrt())).abs() < 1e-14);
        assert_eq!(classify_region(&ps), RegionClass::SymmetryBreaking);
        // γ = 1 admits β < 1/3
        let ps = ParamSet::new(3, 0.0, 1.0, 1.5).unwrap();
        assert_eq!(classify_region(&ps), RegionClass::Symmetry);
        let ps = ParamSet::new(3, 0.0, 0.0, 2.0).unwrap();
        assert_eq!(classify_region(&ps), RegionClass::Symmetry);
        let g = -1.0;
        let ps = ParamSet::new(3, beta_fs(3, g).unwrap() + 1e-11, g, 1.2).unwrap();
        assert_eq!(classify_region(&ps), RegionClass::FSBoundary);
    }

    #[test]
    fn fixed_point_is_alpha_fs_of_its_family_member() {
        for &g in &[-0.5, -1.0, -2.0, -3.0] {
            let a = alpha_fs_fixed_point(3, g).unwrap();
            let ps = ParamSet::family_member(3, g, a, 1.1).unwrap();
            assert!((ps.alpha_fs.unwrap() - a).abs() < 1e-13);
            assert!((ps.beta - ps.beta_fs.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn records_round_trip() {
        let ps = ParamSet::new(3, -1.0, -2.0, 2.0).unwrap();
        let rec = ps.records();
        let view: Vec<(&str, &str)> = rec.iter().map(|(k, v)| (*k, v.as_str())).collect();
        assert_eq!(ParamSet::from_records(&view).unwrap(), ps);
    }

    #[test]
    fn gn_constant_requires_p_above_one() {
        assert!(ParamSet::unweighted(3, 1.0).is_err());
    }

    #[test]
    fn barenblatt_mass_d3_m_two_thirds() {
        let ps = ParamSet::unweighted_from_m(3, 2.0 / 3.0).unwrap();
        let gn = optimal_gn_constant(&ps).unwrap();
        let pi = std::f64::consts::PI;
        assert!((gn.mass - pi * pi / 4.0).abs() < 1e-10);
        assert!((gn.mass - 2.46740).abs() < 1e-5);
    }

    #[test]
    fn gn_constant_matches_quotient_at_optimizer() {
        // Independent oracle: the GN quotient of w★ = ℬ★^{m−1/2} in R^d.
        for &(d, m) in &[(3u32, 0.75), (3, 0.8), (2, 0.7), (1, 0.6)] {
            let ps = ParamSet::unweighted_from_m(d, m).unwrap();
            let gn = optimal_gn_constant(&ps).unwrap();
            let q = ps.q();
            let df = d as f64;
            let k = (m - 0.5) / (1.0 - m);
            let w = |r: f64| (1.0 + r * r).powf(-k);
            let dw = |r: f64| -2.0 * k * r * (1.0 + r * r).powf(-k - 1.0);
            let area = quadrature::sphere_area(d);
            let int = |f: &dyn Fn(f64) -> f64| {
                area * quadrature::integrate_half_line(|r| f(r) * r.powf(df - 1.0), 0.0, 1e-13).unwrap().value
            };
            let grad = int(&|r| dw(r).powi(2)).sqrt();
            let lq1 = int(&|r| w(r).powf(q + 1.0)).powf(1.0 / (q + 1.0));
            let l2q = int(&|r| w(r).powf(2.0 * q)).powf(1.0 / (2.0 * q));
            let quotient = grad.powf(gn.theta) * lq1.powf(1.0 - gn.theta) / l2q;
            assert!((quotient - gn.c_gn).abs() < 1e-9 * gn.c_gn, "d={d} m={m}: {quotient} vs {}", gn.c_gn);
        }
    }

    #[test]
    fn gn_constant_two_tolerances_agree() {
        let ps = ParamSet::unweighted_from_m(3, 0.75).unwrap();
        let a = optimal_gn_constant(&ps).unwrap();
        assert!(a.c_gn.is_finite() && a.c_gn > 0.0);
        let b = Profile::new(ProfileKind::BarenblattStar, ps);
        let coarse = quadrature::integrate_half_line(|r| b.eval(r).powf(0.75) * r * r, 0.0, 1e-9).unwrap().value;
        let fine = quadrature::integrate_half_line(|r| b.eval(r).powf(0.75) * r * r, 0.0, 1e-13).unwrap().value;
        assert!((coarse - fine).abs() < 1e-8 * fine);
        assert!((a.entropy - 4.0 * std::f64::consts::PI * fine).abs() < 1e-12 * a.entropy);
    }

    fn admissible() -> impl Strategy<Value = ParamSet> {
        (2u32..7, -4.0f64..0.0, 0.01f64..0.99, 0.001f64..1.0).prop_filter_map("admissible", |(d, gamma, tb, tp)| {
            let df = d as f64;
            let lo = gamma - 2.0;
            let hi = (df - 2.0) * gamma / df;
            let beta = lo + tb * (hi - lo);
            let pstar = (df - gamma) / (df - beta - 2.0);
            let p = 1.0 + tp * (pstar - 1.0);
            ParamSet::new(d, beta, gamma, p).ok()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn derived_identities(ps in admissible()) {
            prop_assert!(rel_gap(ps.m1, 1.0 - 1.0 / ps.n) < 1e-12);
            prop_assert!(rel_gap(ps.p_star, ps.n / (ps.n - 2.0)) < 1e-12);
            prop_assert!(rel_gap(ps.mu_star, ps.alpha * ps.mu) < 1e-12);
            prop_assert!(ps.m >= ps.m1 - 1e-14 && ps.m < 1.0);
        }

        #[test]
        fn unweighted_sigma(d in 1u32..8, t in 0.001f64..1.0) {
            let pstar = if d > 2 { d as f64 / (d as f64 - 2.0) } else { 20.0 };
            let ps = ParamSet::unweighted(d, 1.0 + t * (pstar - 1.0)).unwrap();
            prop_assert!(rel_gap(ps.sigma, 2.0 / (d as f64 * (1.0 - ps.m)) - 1.0) < 1e-12);
            prop_assert_eq!(ps.alpha, 1.0);
        }
    }

    #[test]
    fn classification_matches_alpha_form_on_grid() {
        let d = 3u32;
        let mut checked = 0;
        for i in 0..100 {
            let gamma = -4.0 + 3.99 * i as f64 / 99.0;
            for j in 0..100 {
                let lo = gamma - 2.0;
                let hi = (d as f64 - 2.0) * gamma / d as f64;
                let beta = lo + (hi - lo) * (j as f64 + 0.5) / 100.0;
                let ps = match ParamSet::new(d, beta, gamma, 1.0001) {
                    Ok(ps) => ps,
                    Err(_) => continue,
                };
                let class = classify_region(&ps);
                if class == RegionClass::FSBoundary {
                    continue;
                }
                let by_alpha = ps.alpha > ps.alpha_fs.unwrap();
                assert_eq!(class == RegionClass::SymmetryBreaking, by_alpha, "gamma={gamma} beta={beta}");
                checked += 1;
            }
        }
        assert!(checked > 9000);
    }
}
