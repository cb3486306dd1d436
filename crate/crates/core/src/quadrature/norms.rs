//! Weighted sup-norms evaluated on log-radial × angular probe grids.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ScalarField, MAX_DIM};
use crate::geometry::norm;
use crate::probes::{directions_with_axes, log_radii};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum NormKind {
    /// Solution norm with gradient terms; `sigma` is the small exponent used
    /// in dimension four.
    Star { sigma: f64 },
    /// Right-hand-side norm: `|y|^{n-2}` inside the unit sphere, `1 + |y|⁴`
    /// outside.
    StarStar,
    /// `sup (1 + |y|^{n-2}) |f|` over `R^n`.
    Fundamental,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeGrid {
    pub radii: usize,
    pub directions: usize,
    pub seed: u64,
    /// Extra directions always included, e.g. towards ring bubbles.
    pub extra_directions: Vec<Vec<f64>>,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self {
            radii: 200,
            directions: 64,
            seed: 0x6e6f726d,
            extra_directions: Vec::new(),
        }
    }
}

impl ProbeGrid {
    pub fn doubled(&self) -> Self {
        Self {
            radii: 2 * self.radii,
            directions: 2 * self.directions,
            ..self.clone()
        }
    }
}

fn star_exponents(n: usize, sigma: f64) -> Option<(f64, f64)> {
    match n {
        3 => None,
        4 => Some((sigma, 2.0 - sigma)),
        _ => Some((n as f64 - 4.0, 2.0)),
    }
}

/// Weighted sup-norm of `f` over `D_ε = {√ε < |y| < 1/√ε}` (star norms) or
/// over `10⁻³ ≤ |y| ≤ 10³` (fundamental norm).
pub fn weighted_norm<F: ScalarField + ?Sized>(
    f: &F,
    which: NormKind,
    eps: f64,
    grid: &ProbeGrid,
) -> Result<f64> {
    if grid.radii == 0 || grid.directions + grid.extra_directions.len() == 0 {
        return Err(Error::Parameter("empty probe grid".into()));
    }
    let n = f.dim();
    let (r_lo, r_hi) = match which {
        NormKind::Fundamental => (1e-3, 1e3),
        _ => {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::Parameter(format!("ε = {eps} not in (0, 1)")));
            }
            // Stay strictly inside the open domain.
            (eps.sqrt() * (1.0 + 1e-9), eps.sqrt().recip() * (1.0 - 1e-9))
        }
    };
    let mut dirs = grid.extra_directions.clone();
    dirs.extend(directions_with_axes(n, grid.directions, grid.seed));
    let radii = log_radii(r_lo, r_hi, grid.radii);
    let mut y = [0.0; MAX_DIM];
    let mut g = [0.0; MAX_DIM];
    let mut sup_in: f64 = 0.0;
    let mut sup_out: f64 = 0.0;
    let nf = n as f64;
    if which == NormKind::Fundamental {
        sup_in = f.try_value(&vec![0.0; n]).map(f64::abs).unwrap_or(0.0);
    }
    for d in &dirs {
        let dn = norm(d);
        for &r in &radii {
            for j in 0..n {
                y[j] = r * d[j] / dn;
            }
            let v = f.try_value(&y[..n])?.abs();
            match which {
                NormKind::Fundamental => sup_in = sup_in.max((1.0 + r.powf(nf - 2.0)) * v),
                NormKind::StarStar => {
                    if r < 1.0 {
                        sup_in = sup_in.max(r.powf(nf - 2.0) * v);
                    } else {
                        sup_out = sup_out.max((1.0 + r.powi(4)) * v);
                    }
                }
                NormKind::Star { sigma } => {
                    f.gradient(&y[..n], &mut g[..n]);
                    let dv = norm(&g[..n]);
                    match star_exponents(n, sigma) {
                        None => {
                            sup_in = sup_in.max((1.0 + r) * v + (1.0 + r * r) * dv);
                        }
                        Some((a, b)) => {
                            if r < 1.0 {
                                sup_in = sup_in.max(r.powf(a) * v + r.powf(a + 1.0) * dv);
                            } else {
                                sup_out = sup_out
                                    .max((1.0 + r.powf(b)) * v + (1.0 + r.powf(b + 1.0)) * dv);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(sup_in + sup_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crown::bubble;
    use crate::field::FnField;
    use crate::geometry::Dimension;
    use approx::assert_relative_eq;

    #[test]
    fn fundamental_solution_profile_on_inner_region() {
        let f = FnField::new(3, |y: &[f64]| {
            let r = norm(y);
            if r < 1.0 {
                1.0 / r
            } else {
                0.0
            }
        });
        let v = weighted_norm(&f, NormKind::StarStar, 1e-4, &ProbeGrid::default()).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn bubble_fundamental_norm_matches_radial_scan() {
        for n in 3..6 {
            let d = Dimension::new(n).unwrap();
            let u = bubble(d);
            let grid = ProbeGrid::default();
            let v = weighted_norm(&u, NormKind::Fundamental, 0.0, &grid).unwrap();
            let scan = log_radii(1e-3, 1e3, grid.radii)
                .into_iter()
                .map(|r| d.alpha() * (1.0 + r.powi(n as i32 - 2)) * (1.0 + r * r).powf(-(n as f64 - 2.0) / 2.0))
                .fold(d.alpha(), f64::max);
            assert_relative_eq!(v, scan, max_relative = 1e-12);
        }
    }

    #[test]
    fn homogeneity() {
        let u = bubble(Dimension::new(4).unwrap());
        let scaled = FnField::new(4, |y: &[f64]| -3.0 * u.value(y));
        for kind in [NormKind::StarStar, NormKind::Fundamental] {
            let a = weighted_norm(&u, kind, 1e-3, &ProbeGrid::default()).unwrap();
            let b = weighted_norm(&scaled, kind, 1e-3, &ProbeGrid::default()).unwrap();
            assert_eq!(b, 3.0 * a);
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let u = bubble(Dimension::new(3).unwrap());
        let g = ProbeGrid {
            radii: 0,
            ..Default::default()
        };
        assert!(matches!(weighted_norm(&u, NormKind::StarStar, 0.1, &g), Err(Error::Parameter(_))));
    }
}
