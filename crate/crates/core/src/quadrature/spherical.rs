//! Integration over `R^n` and annuli in hyperspherical coordinates.
//!
//! The radial coordinate `u ∈ [0, 2]` covers `|y| = R u` for `u ≤ 1` and the
//! Kelvin-inverted exterior `|y| = R/(2 - u)` for `u > 1`; the Jacobian of
//! the inversion is folded into the weight so the integrand sees plain
//! Cartesian points.

use std::f64::consts::PI;

use super::{integrate_cells, Cell, Estimate, Exterior, QuadratureSpec, Symmetry};
use crate::error::{Error, Result};
use crate::field::MAX_DIM;
use crate::geometry::sphere_area;

/// Write the Cartesian point for radius `r` and angles `phi` into `y`, and
/// return the angular Jacobian `Π sin^{d-1-i} φ_i`.
pub(crate) fn hyperspherical(r: f64, phi: &[f64], y: &mut [f64]) -> f64 {
    let d = y.len();
    let mut jac = 1.0;
    let mut s = r;
    // y_d = r cos φ1, y_{d-1} = r sin φ1 cos φ2, …
    for i in 0..d.saturating_sub(2) {
        let (sn, cs) = phi[i].sin_cos();
        y[d - 1 - i] = s * cs;
        s *= sn;
        jac *= sn.powi((d - 2 - i) as i32);
    }
    let (sn, cs) = phi[d - 2].sin_cos();
    y[0] = s * cs;
    y[1] = s * sn;
    jac
}

fn angle_box(d: usize, symmetry: Symmetry) -> Result<(Vec<f64>, f64)> {
    let mut hi = vec![PI; d - 1];
    let factor = match symmetry {
        Symmetry::None => {
            hi[d - 2] = 2.0 * PI;
            1.0
        }
        Symmetry::FullEven => {
            hi.iter_mut().for_each(|h| *h = PI / 2.0);
            (1u64 << d) as f64
        }
        Symmetry::Dihedral(k) => {
            if k == 0 {
                return Err(Error::Parameter("dihedral order must be positive".into()));
            }
            hi[d - 2] = PI / k as f64;
            2.0 * k as f64
        }
    };
    Ok((hi, factor))
}

/// Vector-valued integral over `R^d` (or the ball `|y| < R` under a radial
/// cutoff). `radial_cuts` are extra breakpoints in `|y|`.
pub fn integrate_rn_vec<F>(
    d: usize,
    m: usize,
    f: F,
    spec: &QuadratureSpec,
    radial_cuts: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(2..=MAX_DIM).contains(&d) {
        return Err(Error::Parameter(format!("integration dimension {d} unsupported")));
    }
    let (ahi, factor) = angle_box(d, spec.symmetry)?;
    let (radius, u_max) = match spec.exterior {
        Exterior::KelvinMap { radius } => (radius, 2.0),
        Exterior::RadialCutoff(radius) => (radius, 1.0),
    };
    if !(radius > 0.0) {
        return Err(Error::Parameter("splitting radius must be positive".into()));
    }
    let to_u = |r: f64| if r <= radius { r / radius } else { 2.0 - radius / r };
    let mut ucuts: Vec<f64> = radial_cuts.iter().map(|&r| to_u(r)).collect();
    ucuts.push(1.0);
    let mut lo = vec![0.0; d];
    let mut hi = vec![u_max];
    hi.extend_from_slice(&ahi);
    lo[0] = 0.0;
    let cells = Cell::new(lo, hi).split_at(&[ucuts]);

    let mut y = [0.0; MAX_DIM];
    let mut buf = vec![0.0; m];
    let res = integrate_cells(
        |x, out| {
            let u = x[0];
            let (r, rjac) = if u <= 1.0 {
                let r = radius * u;
                (r, radius * r.powi(d as i32 - 1))
            } else {
                let t = 2.0 - u;
                (radius / t, radius.powi(d as i32) * t.powi(-(d as i32) - 1))
            };
            let ajac = hyperspherical(r, &x[1..], &mut y[..d]);
            f(&y[..d], &mut buf);
            let w = rjac * ajac * factor;
            for i in 0..m {
                out[i] = if w == 0.0 { 0.0 } else { w * buf[i] };
            }
        },
        m,
        cells,
        &spec.cubature(),
    )?;
    Ok((res.value, res.error))
}

/// `∫_{R^d} f` with the error estimate.
pub fn integrate_rn<F>(d: usize, f: F, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    let (v, e) = integrate_rn_vec(d, 1, |y, o| o[0] = f(y), spec, &[])?;
    Ok(Estimate::new(v[0], e[0]))
}

/// Vector-valued integral over the annulus `r_in < |y| < r_out` using the
/// logarithmic radius, with one initial cell per decade.
pub fn integrate_shell_vec<F>(
    d: usize,
    m: usize,
    f: F,
    r_in: f64,
    r_out: f64,
    spec: &QuadratureSpec,
    radial_cuts: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    if !(r_in > 0.0 && r_out > r_in) {
        return Err(Error::Parameter(format!("invalid annulus ({r_in}, {r_out})")));
    }
    if !(2..=MAX_DIM).contains(&d) {
        return Err(Error::Parameter(format!("integration dimension {d} unsupported")));
    }
    let (ahi, factor) = angle_box(d, spec.symmetry)?;
    let (a, b) = (r_in.ln(), r_out.ln());
    let decades = ((b - a) / std::f64::consts::LN_10).ceil() as usize;
    let mut cuts: Vec<f64> = (1..decades)
        .map(|i| a + (b - a) * i as f64 / decades as f64)
        .collect();
    cuts.extend(radial_cuts.iter().filter(|&&r| r > r_in && r < r_out).map(|r| r.ln()));
    let mut lo = vec![0.0; d];
    lo[0] = a;
    let mut hi = vec![b];
    hi.extend_from_slice(&ahi);
    let cells = Cell::new(lo, hi).split_at(&[cuts]);
    let mut y = [0.0; MAX_DIM];
    let mut buf = vec![0.0; m];
    let res = integrate_cells(
        |x, out| {
            let r = x[0].exp();
            let ajac = hyperspherical(r, &x[1..], &mut y[..d]);
            f(&y[..d], &mut buf);
            let w = r.powi(d as i32) * ajac * factor;
            for i in 0..m {
                out[i] = if w == 0.0 { 0.0 } else { w * buf[i] };
            }
        },
        m,
        cells,
        &spec.cubature(),
    )?;
    Ok((res.value, res.error))
}

/// `∫_{eps < |x| < 1} f`.
pub fn integrate_annulus<F>(d: usize, f: F, eps: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("annulus inner radius {eps} not in (0, 1)")));
    }
    let (v, e) = integrate_shell_vec(d, 1, |y, o| o[0] = f(y), eps, 1.0, spec, &[])?;
    Ok(Estimate::new(v[0], e[0]))
}

/// `|S^{d-1}| ∫_a^b r^{d-1} g(r) dr` for a radial integrand; `b = ∞` is
/// handled by inversion beyond `max(a, 1)`.
pub fn integrate_radial<G>(d: usize, g: G, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    G: Fn(f64) -> f64,
{
    let opts = spec.cubature();
    let area = sphere_area(d - 1);
    let w = |r: f64| g(r) * r.powi(d as i32 - 1);
    let mut cells = Vec::new();
    let split = if b.is_infinite() { a.max(1.0) } else { b };
    if split > a {
        let mut edges = vec![a];
        if a > 0.0 {
            let decades = (split / a).log10().ceil().max(1.0) as usize;
            for i in 1..decades {
                edges.push(a * (split / a).powf(i as f64 / decades as f64));
            }
        }
        edges.push(split);
        for e in edges.windows(2) {
            cells.push(Cell::new(vec![e[0]], vec![e[1]]));
        }
    }
    let tail = b.is_infinite();
    if tail {
        // t = 1/r on (0, 1/split]; tag the cells with negative coordinates.
        cells.push(Cell::new(vec![-1.0 / split], vec![0.0]));
    }
    let res = integrate_cells(
        |x, out| {
            let s = x[0];
            out[0] = if s >= 0.0 {
                w(s)
            } else {
                let t = -s;
                w(1.0 / t) / (t * t)
            };
        },
        1,
        cells,
        &opts,
    )?;
    Ok(Estimate::new(area * res.value[0], area * res.error[0]))
}
