//! Cell-centered radial grids for the measure r^{n−1} dr and the discrete
//! operators D_α, D_α* and L_α in flux form.
//!
//! Cells are `[e_i, e_{i+1}]` with centers `r_i`; interior edges `j = 1..N−1`
//! carry the flux unknowns. With `w_i = (e_{i+1}^n − e_i^n)/n`, `s_j = e_j^{n−1}`
//! and `h_j = r_j − r_{j−1}`, the operators
//!
//! ```text
//! (D f)_j  = α (f_j − f_{j−1}) / h_j
//! (D* Z)_i = −(s_{i+1} α Z_{i+1} − s_i α Z_i) / w_i,   Z_0 = Z_N = 0
//! ```
//!
//! satisfy `Σ w_i g_i (D* Z)_i = Σ_j s_j h_j Z_j (D g)_j` exactly. The sphere
//! measure is normalized to one throughout.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;

pub const MIN_CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Spacing {
    Uniform,
    /// Cell widths grow by `ratio` from the origin outward.
    Geometric { ratio: f64 },
}

impl Spacing {
    /// Geometric spacing whose first cell has width `first` on `[0, r_max]`.
    pub fn geometric_with_first_cell(r_max: f64, cells: usize, first: f64) -> Result<Spacing> {
        let uniform = r_max / cells as f64;
        if !(first > 0.0 && first < uniform) {
            return Err(Error::BadGridSpec(format!("first cell {first:e} must lie in (0, {uniform:e})")));
        }
        // first·(q^N − 1)/(q − 1) = r_max, increasing in q
        let total = |q: f64| first * ((cells as f64) * q.ln()).exp_m1() / (q - 1.0);
        let (mut lo, mut hi) = (1.0 + 1e-12, 2.0);
        while total(hi) < r_max {
            hi = 1.0 + 2.0 * (hi - 1.0);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < r_max {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Spacing::Geometric { ratio: 0.5 * (lo + hi) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub r_max: f64,
    pub cells: usize,
    pub spacing: Spacing,
    pub n: f64,
    pub alpha: f64,
    /// N+1 edge radii, `edges[0] = 0`, `edges[N] = r_max`.
    pub edges: Vec<f64>,
    /// N cell centers.
    pub centers: Vec<f64>,
    /// Cell measures w_i.
    pub weights: Vec<f64>,
    /// s_j = e_j^{n−1} at every edge.
    pub edge_measure: Vec<f64>,
    /// h_j = r_j − r_{j−1} at interior edges, 0 at the two boundary edges.
    pub spans: Vec<f64>,
}

impl RadialGrid {
    pub fn new(n: f64, alpha: f64, r_max: f64, cells: usize, spacing: Spacing) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::BadGridSpec(format!("r_max = {r_max} must be positive")));
        }
        if cells < MIN_CELLS {
            return Err(Error::BadGridSpec(format!("cells = {cells} below minimum {MIN_CELLS}")));
        }
        if !(n > 0.0 && alpha > 0.0) {
            return Err(Error::BadGridSpec(format!("n = {n}, alpha = {alpha} must be positive")));
        }
        let mut edges = Vec::with_capacity(cells + 1);
        match spacing {
            Spacing::Uniform => {
                for i in 0..=cells {
                    edges.push(r_max * i as f64 / cells as f64);
                }
            }
            Spacing::Geometric { ratio } => {
                if !(ratio.is_finite() && ratio >= 1.0) {
                    return Err(Error::BadGridSpec(format!("geometric ratio {ratio} must be ≥ 1")));
                }
                let first = if ratio == 1.0 {
                    r_max / cells as f64
                } else {
                    r_max * (ratio - 1.0) / ((cells as f64) * ratio.ln()).exp_m1()
                };
                if !(first >= 1e-8 * r_max) {
                    return Err(Error::BadGridSpec(format!(
                        "first cell {first:e} below 1e-8 r_max (ratio {ratio})"
                    )));
                }
                let mut e = 0.0;
                let mut h = first;
                edges.push(0.0);
                for _ in 0..cells {
                    e += h;
                    h *= ratio;
                    edges.push(e);
                }
                // remove accumulated rounding so that the last edge is exactly r_max
                let scale = r_max / edges[cells];
                for e in edges.iter_mut() {
                    *e *= scale;
                }
                edges[cells] = r_max;
            }
        }
        let centers: Vec<f64> = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        let weights: Vec<f64> = edges.windows(2).map(|e| (e[1].powf(n) - e[0].powf(n)) / n).collect();
        let edge_measure: Vec<f64> = edges.iter().map(|&e| if e == 0.0 { 0.0 } else { e.powf(n - 1.0) }).collect();
        let mut spans = vec![0.0; cells + 1];
        for j in 1..cells {
            spans[j] = centers[j] - centers[j - 1];
        }
        if weights.iter().any(|&w| !(w > 0.0)) || centers.windows(2).any(|c| !(c[1] > c[0])) {
            return Err(Error::BadGridSpec("degenerate cells".into()));
        }
        Ok(RadialGrid { r_max, cells, spacing, n, alpha, edges, centers, weights, edge_measure, spans })
    }

    pub fn len(&self) -> usize {
        self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells == 0
    }

    /// Edge quadrature weight ω_j = s_j h_j (zero at boundary edges).
    pub fn edge_weight(&self, j: usize) -> f64 {
        self.edge_measure[j] * self.spans[j]
    }

    /// Σ w_i f_i
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, f)| w * f).sum()
    }

    /// Σ_j ω_j Z_j over interior edges.
    pub fn integrate_edges(&self, values: &[f64]) -> f64 {
        (1..self.cells).map(|j| self.edge_weight(j) * values[j]).sum()
    }

    pub fn sample<F: Fn(f64) -> f64>(self: &Arc<Self>, f: F) -> RadialField {
        RadialField { grid: Arc::clone(self), values: self.centers.iter().map(|&r| f(r)).collect() }
    }

    /// Short description used in CSV metadata.
    pub fn describe(&self) -> String {
        let sp = match self.spacing {
            Spacing::Uniform => "uniform".to_string(),
            Spacing::Geometric { ratio } => format!("geometric(ratio={ratio})"),
        };
        format!("cells={} r_max={} spacing={} n={} alpha={}", self.cells, self.r_max, sp, self.n, self.alpha)
    }
}

/// Grid for the artificial dimension and α of `ps`.
pub fn build_grid(ps: &ParamSet, r_max: f64, cells: usize, spacing: Spacing) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(RadialGrid::new(ps.n, ps.alpha, r_max, cells, spacing)?))
}

/// Samples at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
}

/// Values at the N+1 cell edges; the two boundary entries are closure values.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells {
            return Err(Error::Argument(format!("{} values for {} cells", values.len(), grid.cells)));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite value at node {i}")));
        }
        Ok(RadialField { grid, values })
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> RadialField {
        RadialField { grid: Arc::clone(&self.grid), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, c: f64) -> RadialField {
        self.map(|v| c * v)
    }

    pub fn max_abs_diff(&self, other: &RadialField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Error on the first sample that is not strictly positive.
    pub fn check_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v > 0.0)) {
            Some(index) => Err(Error::NonPositiveDensity { index, value: self.values[index] }),
            None => Ok(()),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W, meta: &[(String, String)]) -> Result<()> {
        let mut out = out;
        for (k, v) in meta {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "value"])?;
        for (r, v) in self.grid.centers.iter().zip(&self.values) {
            w.write_record([format!("{r:.17e}"), format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// (D_α f)_j at interior edges.
pub fn apply_dalpha(f: &RadialField) -> EdgeField {
    let g = &f.grid;
    let mut z = vec![0.0; g.cells + 1];
    for j in 1..g.cells {
        z[j] = g.alpha * (f.values[j] - f.values[j - 1]) / g.spans[j];
    }
    EdgeField { grid: Arc::clone(g), values: z }
}

/// Adjoint of [`apply_dalpha`] with zero flux at both boundary edges.
pub fn apply_dalpha_star(z: &EdgeField) -> RadialField {
    let g = &z.grid;
    let n = g.cells;
    let flux = |j: usize| if j == 0 || j == n { 0.0 } else { g.edge_measure[j] * g.alpha * z.values[j] };
    let values = (0..n).map(|i| -(flux(i + 1) - flux(i)) / g.weights[i]).collect();
    RadialField { grid: Arc::clone(g), values }
}

/// L_α f = −D_α*(c D_α f) with an optional edge coefficient c (default 1).
pub fn apply_lalpha(f: &RadialField, coefficient: Option<&EdgeField>) -> RadialField {
    let mut z = apply_dalpha(f);
    if let Some(c) = coefficient {
        for (zj, cj) in z.values.iter_mut().zip(&c.values) {
            *zj *= cj;
        }
    }
    apply_dalpha_star(&z).scaled(-1.0)
}

/// Arithmetic mean of neighbouring nodes at each interior edge.
pub fn edge_mean(f: &RadialField) -> EdgeField {
    let g = &f.grid;
    let mut v = vec![0.0; g.cells + 1];
    for j in 1..g.cells {
        v[j] = 0.5 * (f.values[j - 1] + f.values[j]);
    }
    EdgeField { grid: Arc::clone(g), values: v }
}

/// Symmetry of a radial function under x → −x, used for the ghost node at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// First and second r-derivatives at nodes from three-point stencils, exact for
/// quadratics. The origin uses a reflected ghost node, the outer end a one-sided stencil.
pub fn node_derivatives(centers: &[f64], f: &[f64], parity: Parity) -> (Vec<f64>, Vec<f64>) {
    let n = centers.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let stencil = |x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64| {
        let (h1, h2) = (x1 - x0, x2 - x1);
        let a = -h2 / (h1 * (h1 + h2)) * f0 + (h2 - h1) / (h1 * h2) * f1 + h1 / (h2 * (h1 + h2)) * f2;
        let b = 2.0 * (f0 / (h1 * (h1 + h2)) - f1 / (h1 * h2) + f2 / (h2 * (h1 + h2)));
        (a, b)
    };
    let ghost = match parity {
        Parity::Even => f[0],
        Parity::Odd => -f[0],
    };
    let (a, b) = stencil(-centers[0], centers[0], centers[1], ghost, f[0], f[1]);
    d1[0] = a;
    d2[0] = b;
    for i in 1..n - 1 {
        let (a, b) = stencil(centers[i - 1], centers[i], centers[i + 1], f[i - 1], f[i], f[i + 1]);
        d1[i] = a;
        d2[i] = b;
    }
    let (x0, x1, x2) = (centers[n - 3], centers[n - 2], centers[n - 1]);
    let (h1, h2) = (x1 - x0, x2 - x1);
    d1[n - 1] = h2 / (h1 * (h1 + h2)) * f[n - 3] - (h1 + h2) / (h1 * h2) * f[n - 2]
        + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * f[n - 1];
    d2[n - 1] = 2.0 * (f[n - 3] / (h1 * (h1 + h2)) - f[n - 2] / (h1 * h2) + f[n - 1] / (h2 * (h1 + h2)));
    (d1, d2)
}

/// Cubic (four-point Lagrange) interpolation of an even radial function at `x`.
/// Points left of the first center use the mirrored nodes; points beyond the last
/// center are rejected.
pub fn interpolate_even(centers: &[f64], f: &[f64], x: f64) -> Result<f64> {
    let n = centers.len();
    let last = centers[n - 1];
    if !(x >= 0.0) || x > last * (1.0 + 1e-12) {
        return Err(Error::InterpolationOutOfRange { x, limit: last });
    }
    let node = |k: isize| -> (f64, f64) {
        if k < 0 {
            let i = (-k - 1) as usize;
            (-centers[i], f[i])
        } else {
            (centers[k as usize], f[k as usize])
        }
    };
    // index of the first center strictly greater than x
    let upper = centers.partition_point(|&c| c <= x) as isize;
    let mut start = upper - 2;
    start = start.min(n as isize - 4);
    let pts: Vec<(f64, f64)> = (start..start + 4).map(node).collect();
    let mut acc = 0.0;
    for (i, &(xi, fi)) in pts.iter().enumerate() {
        let mut l = 1.0;
        for (j, &(xj, _)) in pts.iter().enumerate() {
            if i != j {
                l *= (x - xj) / (xi - xj);
            }
        }
        acc += l * fi;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: f64, alpha: f64, r_max: f64, cells: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::new(n, alpha, r_max, cells, Spacing::Uniform).unwrap())
    }

    #[test]
    fn volume_of_ball() {
        let g = grid(3.0, 1.0, 10.0, 256);
        let v = g.integrate(&vec![1.0; 256]);
        assert!((v - 1000.0 / 3.0).abs() < 1e-3 * 1000.0 / 3.0);
    }

    #[test]
    fn moment_quadrature_second_order() {
        for &n in &[3.0, 10.0 / 3.0, 2.5] {
            let mut errs = vec![];
            for &cells in &[64usize, 128, 256] {
                let g = grid(n, 1.0, 2.0, cells);
                let mut e = 0.0f64;
                for k in 0..3 {
                    let exact = 2f64.powf(n + k as f64) / (n + k as f64);
                    let num = g.integrate(&g.centers.iter().map(|r| r.powi(k)).collect::<Vec<_>>());
                    e = e.max((num - exact).abs() / exact);
                }
                errs.push(e);
            }
            let order = (errs[1] / errs[2]).log2();
            assert!(order > 1.8 && order < 2.2, "n={n} errs={errs:?}");
        }
    }

    #[test]
    fn guards() {
        assert!(matches!(RadialGrid::new(3.0, 1.0, 10.0, 4, Spacing::Uniform), Err(Error::BadGridSpec(_))));
        assert!(matches!(
            RadialGrid::new(3.0, 1.0, 10.0, 64, Spacing::Geometric { ratio: 1.5 }),
            Err(Error::BadGridSpec(_))
        ));
        assert!(RadialGrid::new(3.0, 1.0, 10.0, 64, Spacing::Geometric { ratio: 1.05 }).is_ok());
    }

    #[test]
    fn geometric_first_cell_helper() {
        let sp = Spacing::geometric_with_first_cell(1000.0, 400, 1e-3).unwrap();
        let g = RadialGrid::new(3.0, 1.0, 1000.0, 400, sp).unwrap();
        assert!((g.edges[1] - 1e-3).abs() < 1e-9);
        assert_eq!(g.edges[400], 1000.0);
        assert!(g.centers[0] > 0.0);
    }

    #[test]
    fn dalpha_of_square_and_constants() {
        let alpha = 1.5;
        let g = grid(3.2, alpha, 5.0, 100);
        let z = apply_dalpha(&g.sample(|r| r * r));
        for j in 1..100 {
            // exact on a uniform grid: the difference quotient of r² is 2·(edge)
            assert!((z.values[j] - 2.0 * alpha * g.edges[j]).abs() < 1e-12);
        }
        let z = apply_dalpha(&g.sample(|_| 3.7));
        assert!(z.values.iter().all(|&v| v == 0.0));
        let z = apply_dalpha(&g.sample(|r| 1.0 + r * r / (alpha * alpha)));
        for j in 1..100 {
            assert!((z.values[j] - 2.0 / alpha * g.edges[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn lalpha_of_square_is_2n_alpha2() {
        let (n, alpha) = (10.0 / 3.0, 1.5);
        let g = grid(n, alpha, 5.0, 200);
        let l = apply_lalpha(&g.sample(|r| r * r), None);
        // exact in every cell but the last, where the zero-flux closure applies
        for i in 0..199 {
            assert!((l.values[i] - 2.0 * n * alpha * alpha).abs() < 1e-9, "{i}: {}", l.values[i]);
        }
        let l = apply_lalpha(&g.sample(|_| 2.0), None);
        assert!(l.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lalpha_second_order_on_smooth_function() {
        let (n, alpha) = (3.0, 1.2);
        let f = |r: f64| (-r * r).exp();
        // L f = α² (f'' + (n−1) f'/r) = α² e^{−r²}(4r² − 2n)
        let lf = |r: f64| alpha * alpha * (-r * r).exp() * (4.0 * r * r - 2.0 * n);
        let mut errs = vec![];
        for &cells in &[100usize, 200, 400] {
            let g = grid(n, alpha, 6.0, cells);
            let l = apply_lalpha(&g.sample(f), None);
            let e = (0..cells - 1).map(|i| (l.values[i] - lf(g.centers[i])).abs()).fold(0.0, f64::max);
            errs.push(e);
        }
        let order = (errs[1] / errs[2]).log2();
        assert!((order - 2.0).abs() < 0.2, "{errs:?}");
    }

    #[test]
    fn node_derivatives_exact_for_quadratics() {
        let g = RadialGrid::new(3.0, 1.0, 4.0, 50, Spacing::Geometric { ratio: 1.03 }).unwrap();
        let f: Vec<f64> = g.centers.iter().map(|r| 2.0 + 3.0 * r * r).collect();
        let (d1, d2) = node_derivatives(&g.centers, &f, Parity::Even);
        for (i, r) in g.centers.iter().enumerate() {
            assert!((d1[i] - 6.0 * r).abs() < 1e-9);
            assert!((d2[i] - 6.0).abs() < 1e-8);
        }
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let g = grid(3.0, 1.0, 4.0, 40);
        let f: Vec<f64> = g.centers.iter().map(|r| 1.0 + r * r - 0.1 * r * r * r * r / 4.0).collect();
        for &x in &[0.0, 0.03, 1.234, 3.9] {
            let v = interpolate_even(&g.centers, &f, x).unwrap();
            let exact = 1.0 + x * x - 0.1 * x.powi(4) / 4.0;
            assert!((v - exact).abs() < 1e-3);
        }
        let f: Vec<f64> = g.centers.iter().map(|r| 1.0 + r * r).collect();
        assert!((interpolate_even(&g.centers, &f, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(interpolate_even(&g.centers, &f, 4.0).is_err());
    }

    proptest! {
        #[test]
        fn summation_by_parts_exact(
            n in 1.5f64..8.0,
            alpha in 0.3f64..2.0,
            seed in proptest::collection::vec(-1.0f64..1.0, 64),
            seed2 in proptest::collection::vec(-1.0f64..1.0, 64),
            c in proptest::collection::vec(0.1f64..3.0, 65),
        ) {
            let g = Arc::new(RadialGrid::new(n, alpha, 7.0, 64, Spacing::Geometric { ratio: 1.02 }).unwrap());
            let f = RadialField::new(Arc::clone(&g), seed).unwrap();
            let h = RadialField::new(Arc::clone(&g), seed2).unwrap();
            let coeff = EdgeField { grid: Arc::clone(&g), values: c };
            let lf = apply_lalpha(&f, Some(&coeff));
            let lhs = g.integrate(&h.values.iter().zip(&lf.values).map(|(a, b)| a * b).collect::<Vec<_>>());
            let df = apply_dalpha(&f);
            let dh = apply_dalpha(&h);
            let rhs: Vec<f64> = (0..=64).map(|j| coeff.values[j] * df.values[j] * dh.values[j]).collect();
            let rhs = -g.integrate_edges(&rhs);
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            prop_assert!((lhs - rhs).abs() <= 1e-11 * scale.max(g.integrate(&vec![1.0; 64])));
            // D* is the adjoint of D
            let ds = apply_dalpha_star(&df);
            let a = g.integrate(&h.values.iter().zip(&ds.values).map(|(a, b)| a * b).collect::<Vec<_>>());
            let b = g.integrate_edges(&(0..=64).map(|j| df.values[j] * dh.values[j]).collect::<Vec<_>>());
            prop_assert!((a - b).abs() <= 1e-11 * a.abs().max(b.abs()).max(1.0));
            // mass conservation of the divergence form
            prop_assert!(g.integrate(&lf.values).abs() <= 1e-10 * lf.values.iter().map(|v| v.abs()).sum::<f64>().max(1.0) * g.integrate(&vec![1.0; 64]));
        }
    }
}
