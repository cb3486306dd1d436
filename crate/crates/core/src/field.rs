//! The `ScalarField` abstraction: a function on `R^n` with gradient and
//! Laplacian evaluators, analytic where the implementor can supply them.

use std::sync::Arc;

use crate::error::Result;
use crate::geometry::norm;

/// Largest dimension supported by the stack buffers used in hot loops.
pub const MAX_DIM: usize = 12;

/// Default finite-difference step `1e-4 (1 + |y|)`.
pub fn default_step(y: &[f64]) -> f64 {
    1e-4 * (1.0 + norm(y))
}

pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, y: &[f64]) -> f64;

    /// Checked evaluation. Fields with a singular set override this.
    fn try_value(&self, y: &[f64]) -> Result<f64> {
        Ok(self.value(y))
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        fd_gradient(self, y, out)
    }

    fn laplacian(&self, y: &[f64]) -> f64 {
        stencil_laplacian(self, y, default_step(y))
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    fn has_analytic_laplacian(&self) -> bool {
        false
    }
}

/// Central differences with step `1e-4 (1 + |y|)`.
pub fn fd_gradient<F: ScalarField + ?Sized>(f: &F, y: &[f64], out: &mut [f64]) {
    let h = default_step(y);
    let mut buf = [0.0; MAX_DIM];
    let n = y.len();
    buf[..n].copy_from_slice(y);
    for i in 0..n {
        buf[i] = y[i] + h;
        let fp = f.value(&buf[..n]);
        buf[i] = y[i] - h;
        let fm = f.value(&buf[..n]);
        buf[i] = y[i];
        out[i] = (fp - fm) / (2.0 * h);
    }
}

/// Second-order `2n+1`-point Laplacian stencil.
pub fn stencil_laplacian<F: ScalarField + ?Sized>(f: &F, y: &[f64], h: f64) -> f64 {
    let n = y.len();
    let mut buf = [0.0; MAX_DIM];
    buf[..n].copy_from_slice(y);
    let mut acc = -2.0 * n as f64 * f.value(y);
    for i in 0..n {
        buf[i] = y[i] + h;
        acc += f.value(&buf[..n]);
        buf[i] = y[i] - h;
        acc += f.value(&buf[..n]);
        buf[i] = y[i];
    }
    acc / (h * h)
}

/// Fourth-order `4n+1`-point Laplacian stencil.
pub fn stencil_laplacian4<F: ScalarField + ?Sized>(f: &F, y: &[f64], h: f64) -> f64 {
    let n = y.len();
    let mut buf = [0.0; MAX_DIM];
    buf[..n].copy_from_slice(y);
    let mut acc = -30.0 * n as f64 * f.value(y);
    for i in 0..n {
        for (s, w) in [(1.0, 16.0), (-1.0, 16.0), (2.0, -1.0), (-2.0, -1.0)] {
            buf[i] = y[i] + s * h;
            acc += w * f.value(&buf[..n]);
        }
        buf[i] = y[i];
    }
    acc / (12.0 * h * h)
}

macro_rules! forward_field {
    ($t:ty) => {
        impl<F: ScalarField + ?Sized> ScalarField for $t {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn value(&self, y: &[f64]) -> f64 {
                (**self).value(y)
            }
            fn try_value(&self, y: &[f64]) -> Result<f64> {
                (**self).try_value(y)
            }
            fn gradient(&self, y: &[f64], out: &mut [f64]) {
                (**self).gradient(y, out)
            }
            fn laplacian(&self, y: &[f64]) -> f64 {
                (**self).laplacian(y)
            }
            fn has_analytic_gradient(&self) -> bool {
                (**self).has_analytic_gradient()
            }
            fn has_analytic_laplacian(&self) -> bool {
                (**self).has_analytic_laplacian()
            }
        }
    };
}

forward_field!(&F);
forward_field!(Box<F>);
forward_field!(Arc<F>);

/// A field defined by closures; gradient and Laplacian fall back to finite
/// differences unless supplied.
pub struct FnField<V> {
    n: usize,
    value: V,
    gradient: Option<Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>>,
}

impl<V: Fn(&[f64]) -> f64 + Send + Sync> FnField<V> {
    pub fn new(n: usize, value: V) -> Self {
        Self {
            n,
            value,
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        g: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }
}

impl<V: Fn(&[f64]) -> f64 + Send + Sync> ScalarField for FnField<V> {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, y: &[f64]) -> f64 {
        (self.value)(y)
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        match &self.gradient {
            Some(g) => g(y, out),
            None => fd_gradient(self, y, out),
        }
    }
    fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }
}

/// A field that also exposes `R = Δf + |f|^{p-1} f` and its gradient.
pub trait ResidualField: ScalarField {
    fn residual(&self, y: &[f64]) -> f64;
    fn residual_gradient(&self, y: &[f64], out: &mut [f64]);
}

impl<F: ResidualField + ?Sized> ResidualField for &F {
    fn residual(&self, y: &[f64]) -> f64 {
        (**self).residual(y)
    }
    fn residual_gradient(&self, y: &[f64], out: &mut [f64]) {
        (**self).residual_gradient(y, out)
    }
}

impl<F: ResidualField + ?Sized> ResidualField for Arc<F> {
    fn residual(&self, y: &[f64]) -> f64 {
        (**self).residual(y)
    }
    fn residual_gradient(&self, y: &[f64], out: &mut [f64]) {
        (**self).residual_gradient(y, out)
    }
}
