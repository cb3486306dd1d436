//! Adaptive integration over `R^n`, annuli and the crown's reduced
//! coordinates, plus weighted sup-norm evaluators.

pub mod axial;
pub mod battery;
pub mod cubature;
pub mod norms;
pub mod spherical;

use serde::Serialize;

pub use cubature::{integrate_box, integrate_cells, Cell, CubatureOptions, CubatureResult};

/// Symmetry the integrand is known to have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Symmetry {
    None,
    /// Invariant under rotation by `2π/k` in the `(y1, y2)` plane and under
    /// `y2 -> -y2`.
    Dihedral(usize),
    /// Even in every coordinate.
    FullEven,
}

/// Treatment of the region outside the splitting sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Exterior {
    /// Kelvin inversion of `|y| > R` onto `|z| < 1/R`.
    KelvinMap { radius: f64 },
    /// Integrate only `|y| < R`.
    RadialCutoff(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: u32,
    pub max_evals: usize,
    pub symmetry: Symmetry,
    pub exterior: Exterior,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_depth: 40,
            max_evals: 50_000_000,
            symmetry: Symmetry::None,
            exterior: Exterior::KelvinMap { radius: 1.0 },
        }
    }
}

impl QuadratureSpec {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    pub fn symmetry(mut self, s: Symmetry) -> Self {
        self.symmetry = s;
        self
    }

    pub fn exterior(mut self, e: Exterior) -> Self {
        self.exterior = e;
        self
    }

    pub(crate) fn cubature(&self) -> CubatureOptions {
        CubatureOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_depth: self.max_depth,
            max_evals: self.max_evals,
        }
    }
}

/// A value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }
}
