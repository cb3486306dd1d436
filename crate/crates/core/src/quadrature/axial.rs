//! Reduced integration for fields that depend on `y' = (y3, …, yn)` only
//! through `|y'|`, such as the crown and its energy densities.
//!
//! The point `y = (ρ cos φ, ρ sin φ, s e)` is parametrised by
//! `ρ = r cos ψ`, `s = r sin ψ` with `ψ ∈ [0, π/2]`, leaving a
//! three-dimensional integral with weight
//! `|S^{n-3}| r^{n-1} cos ψ sin^{n-3} ψ`. Integrands that are not invariant
//! in `y'` are averaged over the `2(n-2)` directions `±e_l`, which is exact
//! for every polynomial of degree at most three in `y'`, in particular for
//! products of two kernel fields.

use std::f64::consts::PI;

use super::{integrate_cells, Cell, CubatureOptions};
use crate::crown::CrownSpec;
use crate::error::{Error, Result};
use crate::field::MAX_DIM;
use crate::geometry::sphere_area;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YPrime {
    /// The integrand depends on `y'` only through `|y'|`.
    Invariant,
    /// Average the integrand over `s e` for `e ∈ {±e_3, …, ±e_n}`.
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxialSpec {
    /// Integrate over `φ ∈ [0, π/k]` and multiply by `2k`; the integrand must
    /// then be invariant under the dihedral group of order `2k`.
    pub dihedral: Option<usize>,
    pub yprime: YPrime,
    pub r_cuts: Vec<f64>,
    pub psi_cuts: Vec<f64>,
    pub phi_cuts: Vec<f64>,
}

impl AxialSpec {
    pub fn plain(yprime: YPrime) -> Self {
        Self {
            dihedral: None,
            yprime,
            r_cuts: Vec::new(),
            psi_cuts: Vec::new(),
            phi_cuts: Vec::new(),
        }
    }

    /// Dihedral reduction with initial cells graded around the ring bubble
    /// sitting at `r = √(1-μ²)`, `ψ = 0`, `φ = 0`.
    pub fn for_crown(spec: &CrownSpec, yprime: YPrime) -> Self {
        let mu = spec.mu;
        let ring = (1.0 - mu * mu).sqrt();
        let widths = [0.5, 2.0, 8.0, 32.0];
        let mut r_cuts = Vec::new();
        let mut psi_cuts = Vec::new();
        let mut phi_cuts = Vec::new();
        for w in widths {
            r_cuts.push(ring - w * mu);
            r_cuts.push(ring + w * mu);
            psi_cuts.push(w * mu / ring);
            phi_cuts.push(w * mu / ring);
        }
        Self {
            dihedral: Some(spec.k),
            yprime,
            r_cuts,
            psi_cuts,
            phi_cuts,
        }
    }
}

/// Integrate the `m`-component integrand `f` over `R^n` in the reduced
/// coordinates. The exterior `|y| > 1` is Kelvin-inverted.
pub fn integrate_axial<F>(
    n: usize,
    m: usize,
    f: F,
    spec: &AxialSpec,
    opts: &CubatureOptions,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(3..=MAX_DIM).contains(&n) {
        return Err(Error::Parameter(format!("axial integration needs 3 ≤ n ≤ {MAX_DIM}")));
    }
    let (phi_hi, factor) = match spec.dihedral {
        Some(0) => return Err(Error::Parameter("dihedral order must be positive".into())),
        Some(k) => (PI / k as f64, 2.0 * k as f64),
        None => (2.0 * PI, 1.0),
    };
    let omega = sphere_area(n - 3);
    let to_u = |r: f64| if r <= 1.0 { r } else { 2.0 - 1.0 / r };
    let mut ucuts: Vec<f64> = spec.r_cuts.iter().filter(|&&r| r > 0.0).map(|&r| to_u(r)).collect();
    ucuts.push(1.0);
    let cells = Cell::new(vec![0.0, 0.0, 0.0], vec![2.0, PI / 2.0, phi_hi]).split_at(&[
        ucuts,
        spec.psi_cuts.clone(),
        spec.phi_cuts.clone(),
    ]);
    let dirs: Vec<(usize, f64)> = match spec.yprime {
        YPrime::Invariant => vec![(2, 1.0)],
        YPrime::Average => (2..n).flat_map(|l| [(l, 1.0), (l, -1.0)]).collect(),
    };
    let inv = 1.0 / dirs.len() as f64;
    let mut y = [0.0; MAX_DIM];
    let mut buf = vec![0.0; m];
    let res = integrate_cells(
        |x, out| {
            let u = x[0];
            let (r, rjac) = if u <= 1.0 {
                (u, u.powi(n as i32 - 1))
            } else {
                let t = 2.0 - u;
                (1.0 / t, t.powi(-(n as i32) - 1))
            };
            let (sp, cp) = x[1].sin_cos();
            let (sf, cf) = x[2].sin_cos();
            let rho = r * cp;
            let s = r * sp;
            let w = rjac * cp * sp.powi(n as i32 - 3) * omega * factor * inv;
            out.iter_mut().for_each(|o| *o = 0.0);
            if w == 0.0 {
                return;
            }
            for &(l, sign) in &dirs {
                y[..n].iter_mut().for_each(|v| *v = 0.0);
                y[0] = rho * cf;
                y[1] = rho * sf;
                y[l] = sign * s;
                f(&y[..n], &mut buf);
                for i in 0..m {
                    out[i] += w * buf[i];
                }
            }
        },
        m,
        cells,
        opts,
    )?;
    Ok((res.value, res.error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::spherical::integrate_radial;
    use crate::quadrature::QuadratureSpec;
    use approx::assert_relative_eq;

    #[test]
    fn radial_integrand_matches_one_dimensional() {
        for n in 3..7 {
            let f = |y: &[f64], o: &mut [f64]| {
                let r2: f64 = y.iter().map(|v| v * v).sum();
                o[0] = (1.0 + r2).powf(-(n as f64));
            };
            let opts = CubatureOptions {
                rel_tol: 1e-10,
                ..Default::default()
            };
            let (v, _) = integrate_axial(n, 1, f, &AxialSpec::plain(YPrime::Invariant), &opts).unwrap();
            let exact = integrate_radial(
                n,
                |r| (1.0 + r * r).powf(-(n as f64)),
                0.0,
                f64::INFINITY,
                &QuadratureSpec::with_tol(1e-13),
            )
            .unwrap()
            .value;
            assert_relative_eq!(v[0], exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn direction_average_handles_quadratic_yprime() {
        // ∫ y3² e^{-|y|²} = π^{n/2}/2 for any n.
        for n in 3..6 {
            let f = |y: &[f64], o: &mut [f64]| {
                let r2: f64 = y.iter().map(|v| v * v).sum();
                o[0] = y[2] * y[2] * (-r2).exp();
                o[1] = y[2] * y[n - 1] * (-r2).exp();
            };
            let opts = CubatureOptions {
                rel_tol: 1e-10,
                abs_tol: 1e-13,
                ..Default::default()
            };
            let (v, _) = integrate_axial(n, 2, f, &AxialSpec::plain(YPrime::Average), &opts).unwrap();
            let expect_cross = if n == 3 { PI.powf(1.5) / 2.0 } else { 0.0 };
            assert_relative_eq!(v[0], PI.powf(n as f64 / 2.0) / 2.0, max_relative = 1e-9);
            assert!((v[1] - expect_cross).abs() < 1e-9);
        }
    }
}
