//! Linearized operator around ℬ_α, restricted to angular modes, and the quadratic
//! form Q that locates the symmetry-breaking threshold.
//!
//! Both problems are symmetric tridiagonal pencils (A, M) with diagonal M, assembled
//! with the edge weights of the flow discretization.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::discretization::{build_grid, RadialField, RadialGrid, Spacing};
use crate::error::{Error, Result};
use crate::flow::{barenblatt_alpha_field, run_flow, FlowState, FunctionalSet, StepperSettings, TraceRow, Variables};
use crate::params::{alpha_fs_fixed_point, ParamSet};

/// Sign and factor convention: −⟨f, 𝓛f⟩ = factor · ⟪f, f⟫, obtained by substituting
/// 𝓛f = (m−1) ℬ^{m−2} D*(ℬ D f) into ⟨f, g⟩ = ∫ f g ℬ^{2−m}. Eigenvalues λ solve
/// factor · ⟪f, ·⟫ = λ ⟨f, ·⟩, so that −𝓛f = λf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convention {
    pub factor: f64,
    pub statement: &'static str,
}

impl Convention {
    pub fn substitution(ps: &ParamSet) -> Self {
        Convention { factor: 1.0 - ps.m, statement: "-<f,Lf> = (1-m) <<f,f>>; -Lf = lambda f" }
    }
}

/// Symmetric tridiagonal A (diagonal `diag`, couplings `off[i]` between i and i+1)
/// and diagonal positive M.
#[derive(Debug, Clone, PartialEq)]
pub struct Pencil {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    pub mass: Vec<f64>,
    /// Coupling k_j between cells j−1 and j (index 0 unused) and the zeroth-order
    /// diagonal part, kept to evaluate the form by differences.
    pub edge: Vec<f64>,
    pub potential: Vec<f64>,
}

impl Pencil {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    fn from_parts(edge: Vec<f64>, potential: Vec<f64>, mass: Vec<f64>) -> Self {
        let n = potential.len();
        let mut diag = potential.clone();
        let mut off = vec![0.0; n - 1];
        for j in 1..n {
            diag[j - 1] += edge[j];
            diag[j] += edge[j];
            off[j - 1] = -edge[j];
        }
        Pencil { diag, off, mass, edge, potential }
    }

    /// Σ k_j (x_j − x_{j−1})(y_j − y_{j−1}) + Σ V_i x_i y_i
    pub fn a_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.len();
        let grad: f64 = (1..n).map(|j| self.edge[j] * (x[j] - x[j - 1]) * (y[j] - y[j - 1])).sum();
        grad + self.potential.iter().zip(x).zip(y).map(|((v, a), b)| v * a * b).sum::<f64>()
    }

    pub fn m_form(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mass.iter().zip(x).zip(y).map(|((m, a), b)| m * a * b).sum()
    }

    /// M^{−1/2} A M^{−1/2} as (diagonal, off-diagonal).
    fn normalized(&self) -> (Vec<f64>, Vec<f64>) {
        let sq: Vec<f64> = self.mass.iter().map(|m| m.sqrt()).collect();
        let d = self.diag.iter().zip(&self.mass).map(|(a, m)| a / m).collect();
        let e = (0..self.len() - 1).map(|i| self.off[i] / (sq[i] * sq[i + 1])).collect();
        (d, e)
    }

    /// The k-th smallest generalized eigenpair (0-based) with the residual
    /// ‖M^{−1/2}(A − λM)φ‖ / ‖M^{1/2}φ‖. φ is M-normalized with φ₀ > 0.
    pub fn eigenpair(&self, k: usize) -> Result<(f64, Vec<f64>, f64)> {
        let (d, e) = self.normalized();
        let lam0 = kth_eigenvalue(&d, &e, k);
        let (lam, y, res) = inverse_iteration(&d, &e, lam0)?;
        let mut phi: Vec<f64> = y.iter().zip(&self.mass).map(|(y, m)| y / m.sqrt()).collect();
        let norm = self.m_form(&phi, &phi).sqrt();
        let sign = if phi[0] < 0.0 { -1.0 } else { 1.0 };
        for v in phi.iter_mut() {
            *v *= sign / norm;
        }
        Ok((lam, phi, res))
    }

    /// Smallest generalized eigenvalue only (Sturm bisection).
    pub fn lowest_eigenvalue(&self) -> f64 {
        let (d, e) = self.normalized();
        kth_eigenvalue(&d, &e, 0)
    }
}

/// Number of eigenvalues of the symmetric tridiagonal (d, e) below x.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    let tiny = f64::MIN_POSITIVE.sqrt();
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let qq = if q.abs() < tiny { tiny.copysign(q) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn kth_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let n = d.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let span = hi - lo;
    lo -= 1e-12 * span;
    hi += 1e-12 * span;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Tridiagonal solve with partial pivoting; `sub[i]` couples rows i+1 and i.
fn solve_tridiagonal_pivoting(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut dl = sub.to_vec();
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut b = rhs.to_vec();
    let floor = f64::MIN_POSITIVE.sqrt();
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            let piv = if d[i] == 0.0 { floor } else { d[i] };
            d[i] = piv;
            let f = dl[i] / piv;
            d[i + 1] -= f * du[i];
            b[i + 1] -= f * b[i];
            if i + 2 < n {
                du2[i] = 0.0;
            }
        } else {
            let f = d[i] / dl[i];
            d[i] = dl[i];
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            du[i] = tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -f;
            }
            b.swap(i, i + 1);
            b[i + 1] -= f * b[i];
        }
        dl[i] = 0.0;
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = floor;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n > 1 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    x
}

fn inverse_iteration(d: &[f64], e: &[f64], lam: f64) -> Result<(f64, Vec<f64>, f64)> {
    let n = d.len();
    let scale = d.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let shift = lam + 1e-13 * scale * if lam >= 0.0 { 1.0 } else { -1.0 };
    let dd: Vec<f64> = d.iter().map(|v| v - shift).collect();
    // deterministic start vector with components along every eigenvector
    let mut y: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.73).sin()).collect();
    let mut best = (f64::NAN, y.clone(), f64::INFINITY);
    for _ in 0..6 {
        let z = solve_tridiagonal_pivoting(e, &dd, e, &y);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::EigensolverFailure(format!("inverse iteration broke down near {lam}")));
        }
        y = z.iter().map(|v| v / norm).collect();
        let ty = tri_apply(d, e, &y);
        let rq: f64 = ty.iter().zip(&y).map(|(a, b)| a * b).sum();
        let res = ty.iter().zip(&y).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt();
        if res < best.2 {
            best = (rq, y.clone(), res);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::EigensolverFailure(format!("no converged eigenvector near {lam}")));
    }
    Ok(best)
}

fn tri_apply(d: &[f64], e: &[f64], x: &[f64]) -> Vec<f64> {
    let n = d.len();
    (0..n)
        .map(|i| {
            let mut v = d[i] * x[i];
            if i > 0 {
                v += e[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += e[i] * x[i + 1];
            }
            v
        })
        .collect()
}

/// Linearized operator on mode ℓ: A = factor·(Σ ω B̄ (Dφ)(Dψ) + Λ_ℓ Σ w B φψ / r²),
/// M = Σ w B^{2−m} φψ, with zero flux at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeProblem {
    pub ps: ParamSet,
    pub ell: u32,
    pub lambda_ell: f64,
    pub grid: Arc<RadialGrid>,
    pub convention: Convention,
    pub pencil: Pencil,
}

pub fn assemble_mode(ps: &ParamSet, ell: u32, grid: &Arc<RadialGrid>) -> Result<ModeProblem> {
    let convention = Convention::substitution(ps);
    let b = barenblatt_alpha_field(grid, ps).values;
    let lambda_ell = ps.lambda_ell(ell);
    let n = grid.cells;
    let a2 = ps.alpha * ps.alpha;
    let mut edge = vec![0.0; n];
    for j in 1..n {
        edge[j] = convention.factor * grid.edge_measure[j] * a2 * 0.5 * (b[j - 1] + b[j]) / grid.spans[j];
    }
    let potential = (0..n)
        .map(|i| {
            let r = grid.centers[i];
            convention.factor * lambda_ell * grid.weights[i] * b[i] / (r * r)
        })
        .collect();
    let mass = (0..n).map(|i| grid.weights[i] * b[i].powf(2.0 - ps.m)).collect();
    let pencil = Pencil::from_parts(edge, potential, mass);
    Ok(ModeProblem { ps: *ps, ell, lambda_ell, grid: Arc::clone(grid), convention, pencil })
}

impl ModeProblem {
    /// ⟪φ, ψ⟫ restricted to the mode, without the convention factor.
    pub fn dirichlet_form(&self, phi: &[f64], psi: &[f64]) -> f64 {
        self.pencil.a_form(phi, psi) / self.convention.factor
    }

    /// ⟨φ, ψ⟩
    pub fn weighted_product(&self, phi: &[f64], psi: &[f64]) -> f64 {
        self.pencil.m_form(phi, psi)
    }

    /// Largest |A_ij − A_ji| and |M_ij − M_ji| over neighbouring pairs, from the forms.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.grid.cells;
        let mut worst = 0.0f64;
        let mut ei = vec![0.0; n];
        let mut ej = vec![0.0; n];
        for i in 0..n - 1 {
            ei[i] = 1.0;
            ej[i + 1] = 1.0;
            let a = self.pencil.a_form(&ei, &ej) - self.pencil.a_form(&ej, &ei);
            let m = self.pencil.m_form(&ei, &ej) - self.pencil.m_form(&ej, &ei);
            worst = worst.max(a.abs()).max(m.abs());
            ei[i] = 0.0;
            ej[i + 1] = 0.0;
        }
        worst
    }

    /// −𝓛φ = M^{−1} A φ on the grid.
    pub fn apply_minus_l(&self, phi: &[f64]) -> Vec<f64> {
        self.pencil.apply(phi).iter().zip(&self.pencil.mass).map(|(a, m)| a / m).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub ell: u32,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<RadialField>,
    pub residuals: Vec<f64>,
    /// Whether the constants were removed (ℓ = 0 only).
    pub deflated: bool,
    pub convention: Convention,
}

/// Geometric grid on [0, 60] with first cell 2.56/cells, used for reference spectra.
pub fn reference_spectral_grid(ps: &ParamSet, cells: usize) -> Result<Arc<RadialGrid>> {
    let r_max = 60.0;
    build_grid(ps, r_max, cells, Spacing::geometric_with_first_cell(r_max, cells, 2.56 / cells as f64)?)
}

/// Largest accepted normalized residual of a reported eigenpair.
pub const RESIDUAL_LIMIT: f64 = 1e-8;

/// Lowest `count` eigenpairs, with the constant kernel deflated for ℓ = 0.
pub fn solve_spectrum(mp: &ModeProblem, count: usize) -> Result<ModeSpectrum> {
    solve_spectrum_with(mp, count, true)
}

pub fn solve_spectrum_with(mp: &ModeProblem, count: usize, deflate_constants: bool) -> Result<ModeSpectrum> {
    if count == 0 {
        return Err(Error::Argument("eigenpair count must be at least 1".into()));
    }
    if count + 1 >= mp.grid.cells {
        return Err(Error::Argument(format!("count {count} too large for {} cells", mp.grid.cells)));
    }
    // M-orthogonality of eigenvectors makes the remaining ones orthogonal to 1
    let skip = usize::from(mp.ell == 0 && deflate_constants);
    let mut eigenvalues = Vec::with_capacity(count);
    let mut eigenvectors = Vec::with_capacity(count);
    let mut residuals = Vec::with_capacity(count);
    for k in skip..skip + count {
        let (lam, phi, res) = mp.pencil.eigenpair(k)?;
        let scale = lam.abs().max(1.0);
        if !(res < RESIDUAL_LIMIT * scale) {
            return Err(Error::EigensolverFailure(format!(
                "mode {} index {k}: eigenvalue {lam:e} residual {res:e}",
                mp.ell
            )));
        }
        eigenvalues.push(lam);
        eigenvectors.push(RadialField { grid: Arc::clone(&mp.grid), values: phi });
        residuals.push(res);
    }
    Ok(ModeSpectrum { ell: mp.ell, eigenvalues, eigenvectors, residuals, deflated: skip == 1, convention: mp.convention })
}

/// Closed-form radial eigenpair f₂ = r² − c under the substitution convention:
/// c = α² n (1−m) / (2 − n(1−m)) and λ = 2μ.
pub fn f2_oracle(ps: &ParamSet) -> (f64, f64) {
    let nm = ps.n * (1.0 - ps.m);
    (ps.alpha * ps.alpha * nm / (2.0 - nm), 2.0 * ps.mu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HardyPoincare {
    pub lambda1: f64,
    pub ell: u32,
    pub eigenvector: RadialField,
    /// factor·⟪f,f⟫ − λ₁⟨f,f⟩ for the returned eigenvector.
    pub equality_gap: f64,
    /// −⟪f, 𝓛f⟫ / ⟪f, f⟫.
    pub higher_order_quotient: f64,
    pub per_mode: Vec<(u32, f64)>,
}

/// Smallest eigenvalue over ℓ ∈ [0, ℓ_max] (constants deflated at ℓ = 0).
pub fn hardy_poincare_constant(ps: &ParamSet, grid: &Arc<RadialGrid>, ell_max: u32) -> Result<HardyPoincare> {
    if ell_max < 2 {
        return Err(Error::Argument(format!("ell_max = {ell_max} must be at least 2")));
    }
    let modes: Vec<(ModeProblem, ModeSpectrum)> = (0..=ell_max)
        .into_par_iter()
        .map(|ell| {
            let mp = assemble_mode(ps, ell, grid)?;
            let sp = solve_spectrum(&mp, 1)?;
            Ok((mp, sp))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_mode: Vec<(u32, f64)> = modes.iter().map(|(mp, sp)| (mp.ell, sp.eigenvalues[0])).collect();
    let (mp, sp) = modes
        .iter()
        .min_by(|a, b| a.1.eigenvalues[0].total_cmp(&b.1.eigenvalues[0]))
        .expect("at least three modes");
    let phi = &sp.eigenvectors[0].values;
    let lambda1 = sp.eigenvalues[0];
    let dir = mp.dirichlet_form(phi, phi);
    let equality_gap = mp.convention.factor * dir - lambda1 * mp.weighted_product(phi, phi);
    // ⟪f, g⟫ = A(f, g)/factor and 𝓛f = −M^{−1}A f
    let lf = mp.apply_minus_l(phi);
    let higher_order_quotient = mp.dirichlet_form(phi, &lf) / dir;
    Ok(HardyPoincare {
        lambda1,
        ell: mp.ell,
        eigenvector: sp.eigenvectors[0].clone(),
        equality_gap,
        higher_order_quotient,
        per_mode,
    })
}

/// Grid used for the quadratic form Q along a family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QGrid {
    pub r_max: f64,
    pub cells: usize,
    pub first_cell: f64,
}

impl Default for QGrid {
    fn default() -> Self {
        QGrid { r_max: 1e3, cells: 4000, first_cell: 1e-3 }
    }
}

impl QGrid {
    pub fn build(&self, ps: &ParamSet) -> Result<Arc<RadialGrid>> {
        let sp = Spacing::geometric_with_first_cell(self.r_max, self.cells, self.first_cell)?;
        build_grid(ps, self.r_max, self.cells, sp)
    }
}

/// Coefficients (c₁, c₂) of the zeroth-order terms of Q.
pub fn q_coefficients(ps: &ParamSet) -> (f64, f64) {
    let (a2, p, n) = (ps.alpha * ps.alpha, ps.p, ps.n);
    let c1 = 2.0 * a2 * p * (n - p * (n - 2.0)) / (p - 1.0).powi(2);
    let c2 = 4.0 * a2 * p * (2.0 * p - 1.0) / (p - 1.0).powi(2);
    (c1, c2)
}

/// Q on mode ℓ: Σ ω (Dg)² + Σ w (Λ_ℓ/r² + c₁/(1+r²) − c₂/(1+r²)²) g², with g = 0
/// beyond r_max, against the mass Σ w g²/(1+r²).
pub fn assemble_q(ps: &ParamSet, ell: u32, grid: &RadialGrid) -> Pencil {
    let n = grid.cells;
    let a2 = ps.alpha * ps.alpha;
    let (c1, c2) = q_coefficients(ps);
    let lam = ps.lambda_ell(ell);
    let mut edge = vec![0.0; n];
    for j in 1..n {
        edge[j] = grid.edge_measure[j] * a2 / grid.spans[j];
    }
    let mut potential = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for i in 0..n {
        let r = grid.centers[i];
        let w = 1.0 + r * r;
        potential[i] = grid.weights[i] * (lam / (r * r) + c1 / w - c2 / (w * w));
        mass[i] = grid.weights[i] / w;
    }
    // Dirichlet closure: g vanishes at the outer edge
    potential[n - 1] += grid.edge_measure[n] * a2 / (grid.edges[n] - grid.centers[n - 1]);
    Pencil::from_parts(edge, potential, mass)
}

/// Minimum over ℓ ∈ [1, ℓ_max] of the lowest eigenvalue of Q, with the achieving ℓ.
pub fn min_q_eigenvalue(ps: &ParamSet, qgrid: &QGrid, ell_max: u32) -> Result<(f64, u32)> {
    if ell_max < 1 {
        return Err(Error::Argument("ell_max must be at least 1".into()));
    }
    let grid = qgrid.build(ps)?;
    Ok((1..=ell_max)
        .map(|ell| (assemble_q(ps, ell, &grid).lowest_eigenvalue(), ell))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("nonempty"))
}

/// One-parameter family at fixed (d, γ, p) with β = γ + 2(α − 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Family {
    pub d: u32,
    pub gamma: f64,
    pub p: f64,
}

impl Family {
    pub fn member(&self, alpha: f64) -> Result<ParamSet> {
        ParamSet::family_member(self.d, self.gamma, alpha, self.p)
    }

    /// Fixed point of α ↦ α_FS(α), used only to center the bracket.
    pub fn predicted_alpha(&self) -> Option<f64> {
        alpha_fs_fixed_point(self.d, self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub alpha: f64,
    pub beta: f64,
    pub bracket: (f64, f64),
    /// (α, min eigenvalue) at every evaluation.
    pub scan: Vec<(f64, f64)>,
}

/// α at which the minimal eigenvalue of Q over ℓ ≥ 1 changes sign, by bisection.
pub fn symmetry_threshold_via_q(
    family: &Family,
    bracket: Option<(f64, f64)>,
    qgrid: &QGrid,
    ell_max: u32,
    tol: f64,
) -> Result<Threshold> {
    let (lo0, hi0) = match bracket {
        Some(b) => b,
        None => {
            let a = family
                .predicted_alpha()
                .ok_or_else(|| Error::Argument(format!("no threshold prediction for gamma = {}", family.gamma)))?;
            (0.5 * a, 1.5 * a)
        }
    };
    let mut scan = Vec::new();
    let mut eval = |alpha: f64| -> Result<f64> {
        let v = min_q_eigenvalue(&family.member(alpha)?, qgrid, ell_max)?.0;
        scan.push((alpha, v));
        Ok(v)
    };
    let (mut lo, mut hi) = (lo0, hi0);
    let f_lo = eval(lo)?;
    let f_hi = eval(hi)?;
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = eval(mid)?;
        if fm.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    Ok(Threshold { alpha, beta: family.gamma + 2.0 * (alpha - 1.0), bracket: (lo0, hi0), scan })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub e_rate: f64,
    pub e_rate_ci: f64,
    pub i_rate: f64,
    pub i_rate_ci: f64,
    /// RMS residual of the log-linear fit of E_rel.
    pub residual: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub warnings: Vec<String>,
    pub rows: Vec<TraceRow>,
}

/// Largest RMS residual of ln E_rel accepted by the fit.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.05;

/// Evolve u = ℬ_α(1 + ε f ℬ_α^{1−m}) in self-similar variables and fit the decay
/// rates of E_rel and I_rel where both lie in [1e−10, 1e−4].
pub fn rate_oracle(ps: &ParamSet, eps: f64, f: &RadialField, settings: &StepperSettings) -> Result<RateFit> {
    let grid = Arc::clone(&f.grid);
    let b = barenblatt_alpha_field(&grid, ps);
    let weight: Vec<f64> = (0..grid.cells).map(|i| grid.weights[i] * b.values[i].powf(2.0 - ps.m)).collect();
    let dot = |x: &[f64], y: &[f64]| weight.iter().zip(x).zip(y).map(|((w, a), b)| w * a * b).sum::<f64>();
    let ones = vec![1.0; grid.cells];
    let fm = dot(&f.values, &ones);
    if fm.abs() > 1e-8 * dot(&f.values, &f.values).sqrt() * dot(&ones, &ones).sqrt() {
        return Err(Error::Argument("perturbation changes the mass (not orthogonal to constants)".into()));
    }
    let mut warnings = Vec::new();
    if eps > 1e-3 {
        warnings.push(format!("amplitude {eps:e} above the linear regime (1e-3)"));
    }
    let u0 = RadialField {
        grid: Arc::clone(&grid),
        values: (0..grid.cells).map(|i| b.values[i] * (1.0 + eps * f.values[i] * b.values[i].powf(1.0 - ps.m))).collect(),
    };
    let mut state = FlowState::new(u0, 0.0, Variables::SelfSimilar, *ps)?;
    let set = FunctionalSet { entropy: false, relative: true, rstar: false, weighted: false };
    let mut rows: Vec<TraceRow> = Vec::new();
    let chunk = 0.5;
    for _ in 0..200 {
        let tr = run_flow(&state, chunk, &crate::flow::uniform_samples(chunk, 25), &set, settings).map_err(|e| e.error)?;
        let skip = usize::from(!rows.is_empty());
        rows.extend(tr.rows.iter().skip(skip).copied());
        state = tr.final_state.ok_or_else(|| Error::EigensolverFailure("flow ended without a final state".into()))?;
        if rows.last().map(|r| r.e_rel < 1e-11 && r.i_rel < 1e-11).unwrap_or(false) {
            break;
        }
    }
    let in_window = |v: f64| (1e-10..=1e-4).contains(&v);
    let window: Vec<&TraceRow> = rows.iter().filter(|r| in_window(r.e_rel) && in_window(r.i_rel)).collect();
    if window.len() < 6 {
        return Err(Error::FitFailure(format!("only {} samples inside the fit window", window.len())));
    }
    let taus: Vec<f64> = window.iter().map(|r| r.tau).collect();
    let le: Vec<f64> = window.iter().map(|r| r.e_rel.ln()).collect();
    let li: Vec<f64> = window.iter().map(|r| r.i_rel.ln()).collect();
    let (se, se_err, e_res) = log_linear_fit(&taus, &le);
    let (si, si_err, _) = log_linear_fit(&taus, &li);
    if !(e_res <= FIT_RESIDUAL_LIMIT) {
        return Err(Error::FitFailure(format!("log-linear residual {e_res:e} above {FIT_RESIDUAL_LIMIT}")));
    }
    let half = taus.len() / 2;
    let (s1, _, _) = log_linear_fit(&taus[..half], &le[..half]);
    let (s2, _, _) = log_linear_fit(&taus[half..], &le[half..]);
    if ((s1 - s2) / se).abs() > 0.01 {
        warnings.push(format!("nonlinear contamination: early rate {:.6} vs late rate {:.6}", -s1, -s2));
    }
    Ok(RateFit {
        e_rate: -se,
        e_rate_ci: 1.96 * se_err,
        i_rate: -si,
        i_rate_ci: 1.96 * si_err,
        residual: e_res,
        window: (taus[0], taus[taus.len() - 1]),
        samples: taus.len(),
        warnings,
        rows,
    })
}

/// Least-squares slope, its standard error and the RMS residual.
fn log_linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let se = if k > 2.0 { (ssr / (k - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, se, (ssr / k).sqrt())
}

/// CSV rows `ell,index,eigenvalue,residual`.
pub fn write_spectrum_csv<W: Write>(spectra: &[ModeSpectrum], out: W, meta: &[(String, String)]) -> Result<()> {
    let mut out = out;
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ell", "index", "eigenvalue", "residual"])?;
    for sp in spectra {
        for (i, (lam, res)) in sp.eigenvalues.iter().zip(&sp.residuals).enumerate() {
            w.write_record([sp.ell.to_string(), i.to_string(), format!("{lam:.15e}"), format!("{res:.3e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// CSV rows `alpha,min_eigenvalue`, sorted by α.
pub fn write_threshold_csv<W: Write>(th: &Threshold, out: W, meta: &[(String, String)]) -> Result<()> {
    let mut out = out;
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut scan = th.scan.clone();
    scan.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha", "min_eigenvalue"])?;
    for (a, v) in scan {
        w.write_record([format!("{a:.12e}"), format!("{v:.12e}")])?;
    }
    w.flush()?;
    Ok(())
}
