//! (β, γ) sweeps classified against the Felli–Schneider curve.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{classify_region, ParamSet, RegionClass};
use crate::spectral::{min_q_eigenvalue, QGrid};

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCell {
    pub i_gamma: usize,
    pub i_beta: usize,
    pub beta: f64,
    pub gamma: f64,
    pub p: f64,
    pub class: RegionClass,
    pub alpha: Option<f64>,
    pub alpha_fs: Option<f64>,
    pub q_min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Argument(format!("empty sweep range [{lo}, {hi}] with {steps} steps")));
        }
        Ok(Axis { lo, hi, steps })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.steps as f64
    }

    /// Cell centers.
    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }
}

/// Classify every cell center. Inadmissible centers are kept with that class.
/// With `confirm`, the smallest non-radial eigenvalue of Q is attached to admissible
/// weighted cells. The output is ordered by (γ index, β index).
pub fn region_map(d: u32, gamma: Axis, beta: Axis, p: f64, confirm: Option<(QGrid, u32)>) -> Result<Vec<RegionCell>> {
    let idx: Vec<(usize, usize)> = (0..gamma.steps).flat_map(|i| (0..beta.steps).map(move |j| (i, j))).collect();
    idx.par_iter()
        .map(|&(i, j)| {
            let (g, b) = (gamma.center(i), beta.center(j));
            let mut cell = RegionCell {
                i_gamma: i,
                i_beta: j,
                beta: b,
                gamma: g,
                p,
                class: RegionClass::Inadmissible,
                alpha: None,
                alpha_fs: None,
                q_min_eigenvalue: None,
            };
            let ps = match ParamSet::new(d, b, g, p) {
                Ok(ps) => ps,
                Err(Error::Inadmissible(_)) => return Ok(cell),
                Err(e) => return Err(e),
            };
            cell.class = classify_region(&ps);
            cell.alpha = Some(ps.alpha);
            cell.alpha_fs = ps.alpha_fs;
            if let Some((qg, ell_max)) = confirm {
                if !ps.is_unweighted() {
                    cell.q_min_eigenvalue = Some(min_q_eigenvalue(&ps, &qg, ell_max)?.0);
                }
            }
            Ok(cell)
        })
        .collect()
}

pub fn write_region_csv<W: Write>(cells: &[RegionCell], out: W, meta: &[(String, String)]) -> Result<()> {
    let mut out = out;
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["beta", "gamma", "p", "class", "alpha", "alpha_FS", "q_min_eigenvalue"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
    for c in cells {
        w.write_record([
            format!("{:.12e}", c.beta),
            format!("{:.12e}", c.gamma),
            format!("{:.12e}", c.p),
            c.class.as_str().to_string(),
            opt(c.alpha),
            opt(c.alpha_fs),
            opt(c.q_min_eigenvalue),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inadmissible_cells_are_kept() {
        let g = Axis::new(-3.0, -0.1, 6).unwrap();
        let b = Axis::new(-3.0, 0.0, 6).unwrap();
        let cells = region_map(3, g, b, 1.5, None).unwrap();
        assert_eq!(cells.len(), 36);
        assert!(cells.iter().any(|c| c.class == RegionClass::Inadmissible));
        assert!(cells.iter().any(|c| c.class == RegionClass::SymmetryBreaking));
        assert!(cells.windows(2).all(|w| (w[0].i_gamma, w[0].i_beta) < (w[1].i_gamma, w[1].i_beta)));
        assert!(Axis::new(1.0, 1.0, 5).is_err());
        assert!(Axis::new(0.0, 1.0, 0).is_err());
    }
}
