//! Dimension-generic primitives: critical exponent, sphere areas, plane
//! rotations, the fundamental solution and the Dirichlet Green's function of
//! the unit ball.

use nalgebra::DMatrix;
use serde::Serialize;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Space dimension, `n >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Dimension(usize);

impl Dimension {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidDimension(n));
        }
        Ok(Self(n))
    }

    #[inline]
    pub fn n(self) -> usize {
        self.0
    }

    /// Critical exponent `(n+2)/(n-2)`.
    #[inline]
    pub fn p(self) -> f64 {
        let n = self.0 as f64;
        (n + 2.0) / (n - 2.0)
    }

    /// Bubble normalisation `[n(n-2)]^{(n-2)/4}`.
    pub fn alpha(self) -> f64 {
        let n = self.0 as f64;
        (n * (n - 2.0)).powf((n - 2.0) / 4.0)
    }

    /// Constant of the fundamental solution, `1/((n-2)|S^{n-1}|)`.
    pub fn gamma_n(self) -> f64 {
        1.0 / ((self.0 as f64 - 2.0) * sphere_area(self.0 - 1))
    }

    /// Number of kernel fields, `3n`.
    pub fn kernel_count(self) -> usize {
        3 * self.0
    }

    /// Number of rotation angles, `2n-3`.
    pub fn angle_count(self) -> usize {
        2 * self.0 - 3
    }
}

/// Surface area of the unit sphere `S^m` in `R^{m+1}`.
pub fn sphere_area(m: usize) -> f64 {
    let h = (m as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_area(n - 1) / n as f64
}

/// Plane indices `(i, j)` in the order of the rotation angles:
/// (0,1), (0,2), …, (0,n-1), (1,2), …, (1,n-1).
pub fn rotation_planes(n: usize) -> Vec<(usize, usize)> {
    let mut planes = Vec::with_capacity(2 * n - 3);
    for j in 1..n {
        planes.push((0, j));
    }
    for j in 2..n {
        planes.push((1, j));
    }
    planes
}

/// Angle coordinates on SO(n) restricted to the planes touching `e1` or `e2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationCoords {
    angles: Vec<f64>,
}

impl RotationCoords {
    pub fn new(n: Dimension, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != n.angle_count() {
            return Err(Error::DimensionMismatch {
                expected: n.angle_count(),
                got: angles.len(),
            });
        }
        Ok(Self { angles })
    }

    pub fn zeros(n: Dimension) -> Self {
        Self {
            angles: vec![0.0; n.angle_count()],
        }
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    /// Angles reduced into `(-π, π]`.
    pub fn reduced(&self) -> Vec<f64> {
        self.angles.iter().map(|&t| wrap_angle(t)).collect()
    }

    /// Equality modulo 2π in every coordinate.
    pub fn same_rotation(&self, other: &Self, tol: f64) -> bool {
        self.angles.len() == other.angles.len()
            && self
                .angles
                .iter()
                .zip(&other.angles)
                .all(|(a, b)| wrap_angle(a - b).abs() <= tol)
    }
}

/// Reduce an angle into `(-π, π]`.
pub fn wrap_angle(t: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = t.rem_euclid(two_pi);
    if r > PI {
        r -= two_pi;
    }
    r
}

fn plane_rotation(n: usize, i: usize, j: usize, t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    let (s, c) = t.sin_cos();
    m[(i, i)] = c;
    m[(i, j)] = -s;
    m[(j, i)] = s;
    m[(j, j)] = c;
    m
}

fn plane_rotation_derivative(n: usize, i: usize, j: usize, t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let (s, c) = t.sin_cos();
    m[(i, i)] = -s;
    m[(i, j)] = -c;
    m[(j, i)] = c;
    m[(j, j)] = -s;
    m
}

/// Ordered product `P12 P13 … P1n P23 … P2n`.
pub fn rotation_matrix(theta: &RotationCoords, n: Dimension) -> Result<DMatrix<f64>> {
    let n = n.n();
    if theta.len() != 2 * n - 3 {
        return Err(Error::DimensionMismatch {
            expected: 2 * n - 3,
            got: theta.len(),
        });
    }
    let mut r = DMatrix::identity(n, n);
    for (&(i, j), &t) in rotation_planes(n).iter().zip(theta.angles()) {
        if t != 0.0 {
            r *= plane_rotation(n, i, j, t);
        }
    }
    Ok(r)
}

/// Partial derivative of [`rotation_matrix`] with respect to angle `index`.
pub fn rotation_matrix_derivative(
    theta: &RotationCoords,
    n: Dimension,
    index: usize,
) -> Result<DMatrix<f64>> {
    let n = n.n();
    if theta.len() != 2 * n - 3 {
        return Err(Error::DimensionMismatch {
            expected: 2 * n - 3,
            got: theta.len(),
        });
    }
    if index >= theta.len() {
        return Err(Error::Index {
            index,
            len: theta.len(),
        });
    }
    let mut r = DMatrix::identity(n, n);
    for (k, (&(i, j), &t)) in rotation_planes(n).iter().zip(theta.angles()).enumerate() {
        if k == index {
            r *= plane_rotation_derivative(n, i, j, t);
        } else if t != 0.0 {
            r *= plane_rotation(n, i, j, t);
        }
    }
    Ok(r)
}

#[inline]
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

/// `r^{(n-2)/2}` computed with integer powers and at most one square root.
#[inline]
pub(crate) fn pow_half_int(r: f64, m: usize) -> f64 {
    if m % 2 == 0 {
        r.powi((m / 2) as i32)
    } else {
        r.sqrt() * r.powi((m / 2) as i32)
    }
}

/// `|x|^e` with a fast path for small integer exponents.
#[inline]
pub(crate) fn abs_pow(x: f64, e: f64) -> f64 {
    let a = x.abs();
    if e == e.trunc() && e.abs() <= 16.0 {
        a.powi(e as i32)
    } else {
        a.powf(e)
    }
}

/// `Γ(x) = γ_n |x|^{2-n}`.
pub fn fundamental_solution(x: &[f64]) -> Result<f64> {
    let n = Dimension::new(x.len())?;
    let r2 = norm_sq(x);
    if r2 == 0.0 {
        return Err(Error::Singularity("fundamental solution at the origin".into()));
    }
    Ok(n.gamma_n() / pow_half_int(r2, n.n() - 2))
}

fn check_same_len(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(())
}

fn check_in_closed_ball(x: &[f64], what: &str) -> Result<()> {
    if norm(x) > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("{what} lies outside the closed unit ball")));
    }
    Ok(())
}

/// Regular part `H(x, y) = Γ(x-y) - G(x, y)` of the ball Green's function.
pub fn ball_regular_part(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y)?;
    check_in_closed_ball(x, "x")?;
    check_in_closed_ball(y, "y")?;
    let n = Dimension::new(x.len())?;
    let ry = norm(y);
    if ry == 0.0 {
        return Ok(n.gamma_n());
    }
    // |y| x - y/|y|
    let w2: f64 = x.iter().zip(y).map(|(a, b)| (ry * a - b / ry).powi(2)).sum();
    if w2 == 0.0 {
        return Err(Error::Singularity("image point on the boundary".into()));
    }
    Ok(n.gamma_n() / pow_half_int(w2, n.n() - 2))
}

/// Gradient of `H(·, y)` at `x`.
pub fn ball_regular_part_gradient(x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
    check_same_len(x, y)?;
    let n = Dimension::new(x.len())?;
    let ry = norm(y);
    if ry == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return Ok(());
    }
    let w: Vec<f64> = x.iter().zip(y).map(|(a, b)| ry * a - b / ry).collect();
    let w2 = norm_sq(&w);
    if w2 == 0.0 {
        return Err(Error::Singularity("image point on the boundary".into()));
    }
    let nn = n.n();
    let scale = n.gamma_n() * (2.0 - nn as f64) * ry / pow_half_int(w2, nn);
    for (o, wi) in out.iter_mut().zip(&w) {
        *o = scale * wi;
    }
    Ok(())
}

/// Dirichlet Green's function of the unit ball, `G = Γ(x-y) - H(x,y)`.
pub fn ball_green(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len(x, y)?;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if norm_sq(&d) == 0.0 {
        return Err(Error::Singularity("Green's function on the diagonal".into()));
    }
    let h = ball_regular_part(x, y)?;
    Ok(fundamental_solution(&d)? - h)
}
