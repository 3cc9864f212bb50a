//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals and on [0, ∞).

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (k, &x) in XGK.iter().take(7).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        kron += WGK[k] * (f1 + f2);
        if k % 2 == 1 {
            gauss += WG[k / 2] * (f1 + f2);
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    whole: (f64, f64),
    depth: u32,
    evals: &mut usize,
) -> Result<(f64, f64)> {
    let (v, e) = whole;
    if e <= tol || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return Ok((v, e));
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailure(format!(
            "depth limit on [{a:e}, {b:e}], local error {e:e} > {tol:e}"
        )));
    }
    let c = 0.5 * (a + b);
    let left = gk15(f, a, c);
    let right = gk15(f, c, b);
    *evals += 30;
    let (lv, le) = adapt(f, a, c, 0.5 * tol, left, depth + 1, evals)?;
    let (rv, re) = adapt(f, c, b, 0.5 * tol, right, depth + 1, evals)?;
    Ok((lv + rv, le + re))
}

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol` or relative tolerance `rel_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::QuadratureFailure("non-finite interval".into()));
    }
    // A coarse first pass sets the scale for the relative tolerance.
    let pieces = 16;
    let mut total = 0.0;
    let mut parts = Vec::with_capacity(pieces);
    for k in 0..pieces {
        let lo = a + (b - a) * k as f64 / pieces as f64;
        let hi = a + (b - a) * (k + 1) as f64 / pieces as f64;
        let r = gk15(&f, lo, hi);
        total += r.0;
        parts.push((lo, hi, r));
    }
    let tol = abs_tol.max(rel_tol * total.abs());
    let mut evals = 15 * pieces;
    let mut value = 0.0;
    let mut error = 0.0;
    for (lo, hi, r) in parts {
        let (v, e) = adapt(&f, lo, hi, tol / pieces as f64, r, 0, &mut evals)?;
        value += v;
        error += e;
    }
    if !value.is_finite() {
        return Err(Error::QuadratureFailure("non-finite integral".into()));
    }
    Ok(Estimate { value, error, evaluations: evals })
}

/// Integrate `f` over `[0, ∞)` through the map `r = t/(1−t)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, abs_tol: f64, rel_tol: f64) -> Result<Estimate> {
    let g = |t: f64| {
        let s = 1.0 - t;
        let v = f(t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, abs_tol, rel_tol)
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    for i in 0..k {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = k as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Area of the unit sphere S^{d−1} in R^d.
pub fn sphere_area(d: u32) -> f64 {
    use std::f64::consts::PI;
    // |S^{d-1}| = 2 π^{d/2} / Γ(d/2), via the recursion |S^{d+1}| = 2π/d |S^{d-1}|
    let (mut area, start) = if d.is_multiple_of(2) { (2.0 * PI, 2) } else { (2.0, 1) };
    let mut k = start;
    while k < d {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let e = integrate(|x| x.powi(5) - 3.0 * x * x, 0.0, 2.0, 1e-14, 1e-14).unwrap();
        assert!((e.value - (64.0 / 6.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn half_line_beta_integral() {
        // ∫ r²/(1+r²)³ dr = π/16
        let e = integrate_half_line(|r| r * r / (1.0 + r * r).powi(3), 1e-14, 1e-13).unwrap();
        assert!((e.value - std::f64::consts::PI / 16.0).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2k_minus_1() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(1) - 2.0).abs() < 1e-15);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }
}
