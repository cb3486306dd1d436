//! The reduced functional `Ψ(d, τ, a, θ)`, its closed-form critical scale,
//! the energy-expansion check and a saddle-point optimizer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::crown::kelvin_defect;
use crate::energy::{energy_domain_radial, EnergyConstants};
use crate::error::{Error, Result};
use crate::field::{ScalarField, MAX_DIM};
use crate::fit::{fixed_exponent_coefficient, loglog_fit, ExpansionReport, Verdict};
use crate::geometry::{rotation_matrix, rotation_matrix_derivative, wrap_angle, Dimension, RotationCoords};
use crate::probes::shell_points;
use crate::projection::{f_function, f_kelvin, project_leading, rotate_a, RadialProjection};
use crate::quadrature::QuadratureSpec;

pub use crate::kelvin::ReducedPoint;

/// Default half-width `η` of the parameter box.
pub const DEFAULT_ETA: f64 = 0.1;

/// `Ψ = ½ [γₙ⁻² Q(-R_θa)² H(0,0) d^{n-2} + c₂ F(τ,a,θ) / d^{n-2}]` for a
/// fixed profile `Q`.
#[derive(Debug, Clone)]
pub struct ReducedFunctional<F> {
    q: F,
    n: Dimension,
    c2: f64,
    eta: f64,
    kelvin_invariant: bool,
}

/// `Ψ = ½ (A d^m + B d^{-m})` with `m = n - 2` at fixed `(τ, a, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialCoefficients {
    pub a: f64,
    pub b: f64,
    pub m: f64,
}

impl RadialCoefficients {
    pub fn value(&self, d: f64) -> f64 {
        0.5 * (self.a * d.powf(self.m) + self.b * d.powf(-self.m))
    }

    pub fn derivative(&self, d: f64) -> f64 {
        0.5 * self.m * (self.a * d.powf(self.m - 1.0) - self.b * d.powf(-self.m - 1.0))
    }

    pub fn second_derivative(&self, d: f64) -> f64 {
        let m = self.m;
        0.5 * m * ((m - 1.0) * self.a * d.powf(m - 2.0) + (m + 1.0) * self.b * d.powf(-m - 2.0))
    }

    /// `Ψ(d₁) - Ψ(d₂)` without cancellation between the two values.
    pub fn difference(&self, d1: f64, d2: f64) -> f64 {
        let pd = |e: f64| d2.powf(e) * (e * ((d1 - d2) / d2).ln_1p()).exp_m1();
        0.5 * (self.a * pd(self.m) + self.b * pd(-self.m))
    }

    /// `(B/A)^{1/(2m)}`.
    pub fn critical(&self) -> Result<f64> {
        if !(self.b > 0.0) {
            return Err(Error::Regime(format!("c₂F = {} is not positive", self.b)));
        }
        if !(self.a > 0.0) {
            return Err(Error::Regime("Q(-R_θa) vanishes".into()));
        }
        Ok((self.b / self.a).powf(1.0 / (2.0 * self.m)))
    }
}

impl<F: ScalarField> ReducedFunctional<F> {
    /// Uses the smooth Kelvin form of `F` when `Q` is Kelvin invariant to
    /// `1e-10` on a probe shell, and the literal definition otherwise.
    pub fn new(q: F, consts: &EnergyConstants) -> Result<Self> {
        let n = Dimension::new(q.dim())?;
        if consts.n != n.n() {
            return Err(Error::DimensionMismatch {
                expected: n.n(),
                got: consts.n,
            });
        }
        let probes = shell_points(n.n(), 64, 0.05, 20.0, 0x4b);
        let kelvin_invariant = kelvin_defect(&q, &probes)? < 1e-10;
        Ok(Self {
            q,
            n,
            c2: consts.c2,
            eta: DEFAULT_ETA,
            kelvin_invariant,
        })
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn dimension(&self) -> Dimension {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn profile(&self) -> &F {
        &self.q
    }

    pub fn is_kelvin_invariant(&self) -> bool {
        self.kelvin_invariant
    }

    fn check(&self, pt: &ReducedPoint) -> Result<()> {
        if pt.dimension() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n.n(),
                got: pt.tau.len(),
            });
        }
        if !(pt.d > self.eta && pt.d < 1.0 / self.eta) {
            return Err(Error::Parameter(format!(
                "d = {} outside ({}, {})",
                pt.d,
                self.eta,
                1.0 / self.eta
            )));
        }
        if pt.a[0].hypot(pt.a[1]) >= 0.5 {
            return Err(Error::Parameter("|a| must be below 1/2".into()));
        }
        Ok(())
    }

    pub fn f_value(&self, tau: &[f64], a: [f64; 2], theta: &RotationCoords) -> Result<f64> {
        if self.kelvin_invariant {
            Ok(f_kelvin(tau, &rotate_a(a, theta, self.n)?, &self.q).value)
        } else {
            f_function(tau, a, theta, &self.q)
        }
    }

    /// Coefficients of `Ψ` as a function of `d` alone.
    pub fn radial(&self, tau: &[f64], a: [f64; 2], theta: &RotationCoords) -> Result<RadialCoefficients> {
        let b = rotate_a(a, theta, self.n)?;
        let mb: Vec<f64> = b.iter().map(|v| -v).collect();
        let qb = self.q.value(&mb);
        Ok(RadialCoefficients {
            a: qb * qb / self.n.gamma_n(),
            b: self.c2 * self.f_value(tau, a, theta)?,
            m: self.n.n() as f64 - 2.0,
        })
    }

    pub fn psi(&self, pt: &ReducedPoint) -> Result<f64> {
        self.check(pt)?;
        Ok(self.radial(&pt.tau, pt.a, &pt.theta)?.value(pt.d))
    }

    /// Gradient in the coordinates `[d, τ, a, θ]` (length `3n`).
    pub fn gradient(&self, pt: &ReducedPoint) -> Result<Vec<f64>> {
        self.check(pt)?;
        if !self.kelvin_invariant {
            return self.fd_gradient(pt, 1e-4);
        }
        let n = self.n.n();
        let nf = n as f64;
        let m = nf - 2.0;
        let r = rotation_matrix(&pt.theta, self.n)?;
        let b: Vec<f64> = (0..n).map(|i| r[(i, 0)] * pt.a[0] + r[(i, 1)] * pt.a[1]).collect();
        let mb: Vec<f64> = b.iter().map(|v| -v).collect();
        let mut dq = [0.0; MAX_DIM];
        let qb = self.q.value(&mb);
        self.q.gradient(&mb, &mut dq[..n]);
        let fg = f_kelvin(&pt.tau, &b, &self.q);
        let ga = 1.0 / self.n.gamma_n();
        let dm = pt.d.powf(m);
        let coeffs = RadialCoefficients {
            a: ga * qb * qb,
            b: self.c2 * fg.value,
            m,
        };
        let mut g = vec![0.0; 3 * n];
        g[0] = coeffs.derivative(pt.d);
        for j in 0..n {
            g[1 + j] = 0.5 * self.c2 * fg.d_tau[j] / dm;
        }
        // ∂Ψ/∂b = ½[γ⁻¹ d^m · 2Q(-b)(-∇Q(-b)) + c₂ ∂_bF / d^m]
        let gb: Vec<f64> = (0..n)
            .map(|j| 0.5 * (-2.0 * ga * dm * qb * dq[j] + self.c2 * fg.d_b[j] / dm))
            .collect();
        for i in 0..2 {
            g[1 + n + i] = (0..n).map(|j| gb[j] * r[(j, i)]).sum();
        }
        for k in 0..self.n.angle_count() {
            let dr = rotation_matrix_derivative(&pt.theta, self.n, k)?;
            g[3 + n + k] = (0..n).map(|j| gb[j] * (dr[(j, 0)] * pt.a[0] + dr[(j, 1)] * pt.a[1])).sum();
        }
        Ok(g)
    }

    /// Richardson central differences of `Ψ` with base step `h`.
    pub fn fd_gradient(&self, pt: &ReducedPoint, h: f64) -> Result<Vec<f64>> {
        let x = to_coords(pt);
        let mut g = vec![0.0; x.len()];
        for (i, gi) in g.iter_mut().enumerate() {
            let cd = |h: f64| -> Result<f64> {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let (p, q) = (self.psi(&from_coords(self.n, &xp)?)?, self.psi(&from_coords(self.n, &xm)?)?);
                Ok((p - q) / (2.0 * h))
            };
            let (d1, d2) = (cd(h)?, cd(h / 2.0)?);
            *gi = (4.0 * d2 - d1) / 3.0;
        }
        Ok(g)
    }

    /// Hessian from Richardson differences of the gradient, symmetrised.
    pub fn hessian(&self, pt: &ReducedPoint, h: f64) -> Result<DMatrix<f64>> {
        let x = to_coords(pt);
        let k = x.len();
        let mut hm = DMatrix::zeros(k, k);
        for j in 0..k {
            let gd = |h: f64| -> Result<Vec<f64>> {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let gp = self.gradient(&from_coords(self.n, &xp)?)?;
                let gm = self.gradient(&from_coords(self.n, &xm)?)?;
                Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            };
            let (c1, c2) = (gd(h)?, gd(h / 2.0)?);
            for i in 0..k {
                hm[(i, j)] = (4.0 * c2[i] - c1[i]) / 3.0;
            }
        }
        Ok((&hm + hm.transpose()) * 0.5)
    }
}

/// `[d, τ₁…τₙ, a₁, a₂, θ…]`.
pub fn to_coords(pt: &ReducedPoint) -> Vec<f64> {
    let mut x = vec![pt.d];
    x.extend_from_slice(&pt.tau);
    x.extend_from_slice(&pt.a);
    x.extend_from_slice(pt.theta.angles());
    x
}

pub fn from_coords(n: Dimension, x: &[f64]) -> Result<ReducedPoint> {
    let nn = n.n();
    if x.len() != 3 * nn {
        return Err(Error::DimensionMismatch {
            expected: 3 * nn,
            got: x.len(),
        });
    }
    ReducedPoint::new(
        n,
        x[0],
        x[1..1 + nn].to_vec(),
        [x[1 + nn], x[2 + nn]],
        RotationCoords::new(n, x[3 + nn..].to_vec())?,
    )
}

/// `Ψ` from the spec-level ingredients.
pub fn psi<F: ScalarField>(pt: &ReducedPoint, consts: &EnergyConstants, q: F) -> Result<f64> {
    ReducedFunctional::new(q, consts)?.psi(pt)
}

/// Closed-form critical scale with derivative checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalScale {
    pub d0: f64,
    pub psi: f64,
    /// Analytic `∂_dΨ(d₀)`.
    pub first_derivative: f64,
    /// Central-difference `∂²_{dd}Ψ(d₀)`.
    pub second_derivative: f64,
    pub coefficients: RadialCoefficients,
}

pub fn d_critical<F: ScalarField>(
    f: &ReducedFunctional<F>,
    tau: &[f64],
    a: [f64; 2],
    theta: &RotationCoords,
) -> Result<CriticalScale> {
    let c = f.radial(tau, a, theta)?;
    let d0 = c.critical()?;
    let h = 1e-4 * d0;
    let second = (c.value(d0 + h) - 2.0 * c.value(d0) + c.value(d0 - h)) / (h * h);
    Ok(CriticalScale {
        d0,
        psi: c.value(d0),
        first_derivative: c.derivative(d0),
        second_derivative: second,
        coefficients: c,
    })
}

/// Golden-section minimisation driven by a difference oracle
/// `diff(x, y) = f(x) - f(y)`. Returns the midpoint of the final bracket.
pub fn golden_section_by<D: Fn(f64, f64) -> f64>(diff: D, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::Parameter(format!("bad bracket [{lo}, {hi}] or tolerance {tol}")));
    }
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    for _ in 0..400 {
        if hi - lo <= tol * (lo.abs() + hi.abs()).max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        if diff(x1, x2) < 0.0 {
            hi = x2;
            x2 = x1;
            x1 = hi - r * (hi - lo);
        } else {
            lo = x1;
            x1 = x2;
            x2 = lo + r * (hi - lo);
        }
    }
    Err(Error::NonConvergence {
        estimate: vec![0.5 * (lo + hi)],
        error: hi - lo,
        evaluations: 400,
    })
}

pub fn golden_section<G: Fn(f64) -> f64>(f: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    golden_section_by(|x, y| f(x) - f(y), lo, hi, tol)
}

/// Argmin of `Ψ(·, τ, a, θ)` on the `d`-box.
pub fn d_argmin<F: ScalarField>(f: &ReducedFunctional<F>, tau: &[f64], a: [f64; 2], theta: &RotationCoords) -> Result<f64> {
    let c = f.radial(tau, a, theta)?;
    golden_section_by(|x, y| c.difference(x, y), f.eta, 1.0 / f.eta, 1e-14)
}

/// How the projection is realised in the energy-expansion check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProjectionMode {
    /// Exact projection of the centred bubble onto the annulus.
    ExactRadial,
    /// The leading-order model (corrections without remainder).
    Leading,
}

/// `J_ε` of the projected centred bubble `λ = d√ε`, `ξ = 0`, `a = 0`.
pub fn projected_bubble_energy(n: Dimension, d: f64, eps: f64, mode: ProjectionMode, spec: &QuadratureSpec) -> Result<f64> {
    let lambda = d * eps.sqrt();
    let est = match mode {
        ProjectionMode::ExactRadial => {
            let rp = RadialProjection::new(n, lambda, eps)?;
            energy_domain_radial(n, |r| rp.profile(r), eps, spec)?
        }
        ProjectionMode::Leading => {
            let pt = ReducedPoint::centred(n, d);
            let pf = project_leading(&pt.params(eps)?, eps, crate::crown::bubble(n))?;
            let nn = n.n();
            energy_domain_radial(
                n,
                |r| {
                    let mut x = [0.0; MAX_DIM];
                    x[0] = r;
                    let mut g = [0.0; MAX_DIM];
                    pf.gradient(&x[..nn], &mut g[..nn]);
                    (pf.value(&x[..nn]), g[0])
                },
                eps,
                spec,
            )?
        }
    };
    Ok(est.value)
}

/// Coefficient, slope and sign of `J_ε - c₁` against `Ψ ε^{(n-2)/2}` for
/// the centred bubble at scale `d`, and the same for `∂_d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionCheck {
    pub mode: ProjectionMode,
    pub d: f64,
    pub value: ExpansionReport,
    /// `+1` when `J_ε > c₁` on the whole sweep, `-1` when below.
    pub measured_sign: f64,
    pub derivative: Option<ExpansionReport>,
}

fn coefficient_report(
    claim: &str,
    eps: &[f64],
    ys: Vec<f64>,
    expected_exponent: f64,
    expected: f64,
    tol: f64,
) -> Result<ExpansionReport> {
    let fit = loglog_fit(eps, &ys)?;
    let k = fixed_exponent_coefficient(eps, &ys, expected_exponent)?;
    let ok = fit.r_squared >= 0.99
        && (fit.slope - expected_exponent).abs() <= 0.1 * expected_exponent
        && (k / expected - 1.0).abs() <= tol;
    Ok(ExpansionReport {
        claim: claim.to_string(),
        measured_coefficient: k,
        expected_coefficient: Some(expected),
        fitted_exponent: fit.slope,
        expected_exponent,
        r_squared: fit.r_squared,
        tolerance: tol,
        xs: eps.to_vec(),
        ys,
        verdict: Verdict::from_bool(ok),
    })
}

/// The energy expansion for `Q = U` at `(d, 0, 0, 0)`; the `d`-derivative
/// is checked at `derivative_at` when given.
pub fn expansion_check<F: ScalarField>(
    f: &ReducedFunctional<F>,
    consts: &EnergyConstants,
    d: f64,
    eps_list: &[f64],
    mode: ProjectionMode,
    derivative_at: Option<f64>,
    spec: &QuadratureSpec,
) -> Result<ExpansionCheck> {
    let n = f.dimension();
    let e = (n.n() as f64 - 2.0) / 2.0;
    let tau = vec![0.0; n.n()];
    let theta = RotationCoords::zeros(n);
    let coeffs = f.radial(&tau, [0.0; 2], &theta)?;
    let excess = eps_list
        .par_iter()
        .map(|&eps| Ok(projected_bubble_energy(n, d, eps, mode, spec)? - consts.c1))
        .collect::<Result<Vec<f64>>>()?;
    let sign = if excess.iter().all(|&v| v > 0.0) {
        1.0
    } else if excess.iter().all(|&v| v < 0.0) {
        -1.0
    } else {
        0.0
    };
    let value = coefficient_report("J - c1 ~ +Psi eps^((n-2)/2)", eps_list, excess, e, coeffs.value(d), 0.15)?;
    let derivative = match derivative_at {
        None => None,
        Some(dd) => {
            let h = 1e-3 * dd;
            let ys = eps_list
                .par_iter()
                .map(|&eps| {
                    let jp = projected_bubble_energy(n, dd + h, eps, mode, spec)?;
                    let jm = projected_bubble_energy(n, dd - h, eps, mode, spec)?;
                    let jp2 = projected_bubble_energy(n, dd + h / 2.0, eps, mode, spec)?;
                    let jm2 = projected_bubble_energy(n, dd - h / 2.0, eps, mode, spec)?;
                    Ok((4.0 * (jp2 - jm2) / h - (jp - jm) / (2.0 * h)) / 3.0)
                })
                .collect::<Result<Vec<f64>>>()?;
            Some(coefficient_report(
                "d/dd J ~ d/dd Psi eps^((n-2)/2)",
                eps_list,
                ys,
                e,
                coeffs.derivative(dd),
                0.15,
            )?)
        }
    };
    Ok(ExpansionCheck {
        mode,
        d,
        value,
        measured_sign: sign,
        derivative,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    /// Curvature below which a `θ` direction counts as flat.
    pub flat_tol: f64,
    pub hessian_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-9,
            flat_tol: 1e-8,
            hessian_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimized {
    pub start: ReducedPoint,
    pub point: ReducedPoint,
    pub psi: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Gradient norm per outer iteration.
    pub trace: Vec<f64>,
    pub d_curvature: f64,
    pub tau_a_eigenvalues: Vec<f64>,
    pub theta_eigenvalues: Vec<f64>,
    /// Every `θ` curvature is below `flat_tol` in magnitude.
    pub theta_degenerate: bool,
    /// `d`-curvature positive, `(τ, a)` block negative definite and `θ` at a
    /// minimum (or flat).
    pub saddle_structure: bool,
}

fn block(g: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| g[i]).collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Saddle-free Newton step on one block: ascent when `maximise`.
fn block_step(h: &DMatrix<f64>, g: &[f64], maximise: bool, floor: f64) -> Vec<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let gv = DVector::from_column_slice(g);
    let proj = eig.eigenvectors.transpose() * &gv;
    let scaled = DVector::from_iterator(
        proj.len(),
        proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p / l.abs().max(floor)),
    );
    let step = &eig.eigenvectors * scaled;
    let s = if maximise { 1.0 } else { -1.0 };
    step.iter().map(|v| s * v).collect()
}

fn eigenvalues(h: &DMatrix<f64>, idx: &[usize]) -> Vec<f64> {
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])]);
    let mut e: Vec<f64> = SymmetricEigen::new(sub).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Alternating saddle search: `d` by its closed form, `(τ, a)` by ascent,
/// `θ` by descent, each with saddle-free Newton steps.
pub fn optimize<F: ScalarField>(f: &ReducedFunctional<F>, start: &ReducedPoint, opts: &OptimizerOptions) -> Result<Optimized> {
    let n = f.dimension();
    let nn = n.n();
    f.check(start)?;
    let ta: Vec<usize> = (1..nn + 3).collect();
    let th: Vec<usize> = (nn + 3..3 * nn).collect();
    let mut x = to_coords(start);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let grad_at = |x: &[f64]| -> Result<Vec<f64>> { f.gradient(&from_coords(n, x)?) };
    loop {
        let g = grad_at(&x)?;
        let gn = inf_norm(&g);
        trace.push(gn);
        if gn < opts.gradient_tol {
            break;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::Optimizer {
                iterations,
                grad_norm: gn,
                trace,
            });
        }
        iterations += 1;
        // d: exact minimiser at the current (τ, a, θ).
        let pt = from_coords(n, &x)?;
        x[0] = d_critical(f, &pt.tau, pt.a, &pt.theta)?.d0.clamp(f.eta * 1.0001, 0.9999 / f.eta);
        // (τ, a) then θ.
        for (idx, maximise) in [(&ta, true), (&th, false)] {
            let g = grad_at(&x)?;
            let gb = block(&g, idx);
            let g0 = inf_norm(&gb);
            if g0 < 0.1 * opts.gradient_tol {
                continue;
            }
            let h = f.hessian(&from_coords(n, &x)?, opts.hessian_step)?;
            let hb = DMatrix::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])]);
            if !maximise {
                let ev = eigenvalues(&h, idx);
                if ev.iter().all(|l| l.abs() < opts.flat_tol) && g0 < opts.gradient_tol {
                    continue;
                }
            }
            let step = block_step(&hb, &gb, maximise, opts.flat_tol.max(1e-12));
            let mut t = 1.0;
            for _ in 0..40 {
                let mut xt = x.clone();
                for (k, &i) in idx.iter().enumerate() {
                    xt[i] += t * step[k];
                }
                let ok = from_coords(n, &xt)
                    .and_then(|p| {
                        f.check(&p)?;
                        f.gradient(&p)
                    })
                    .map(|gt| inf_norm(&block(&gt, idx)) < g0)
                    .unwrap_or(false);
                if ok {
                    x = xt;
                    break;
                }
                t *= 0.5;
            }
        }
    }
    for i in th.clone() {
        x[i] = wrap_angle(x[i]);
    }
    let point = from_coords(n, &x)?;
    let h = f.hessian(&point, opts.hessian_step)?;
    let tau_a = eigenvalues(&h, &ta);
    let theta_ev = eigenvalues(&h, &th);
    let theta_flat = theta_ev.iter().all(|l| l.abs() < opts.flat_tol);
    let d_curv = h[(0, 0)];
    let structure = d_curv > 0.0
        && tau_a.iter().all(|&l| l < 0.0)
        && (theta_flat || theta_ev.iter().all(|&l| l > -opts.flat_tol));
    Ok(Optimized {
        start: start.clone(),
        psi: f.psi(&point)?,
        gradient_norm: inf_norm(&f.gradient(&point)?),
        point,
        iterations,
        trace,
        d_curvature: d_curv,
        tau_a_eigenvalues: tau_a,
        theta_eigenvalues: theta_ev,
        theta_degenerate: theta_flat,
        saddle_structure: structure,
    })
}

/// Runs `optimize` from every start in parallel and returns all outcomes
/// with the selected index: the lowest gradient norm, ties broken by the
/// lexicographically smallest start.
pub fn optimize_multistart<F: ScalarField>(
    f: &ReducedFunctional<F>,
    starts: &[ReducedPoint],
    opts: &OptimizerOptions,
) -> Result<(usize, Vec<Result<Optimized>>)> {
    let runs: Vec<Result<Optimized>> = starts.par_iter().map(|s| optimize(f, s, opts)).collect();
    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().ok().map(|o| (i, o)))
        .min_by(|(_, a), (_, b)| {
            a.gradient_norm
                .total_cmp(&b.gradient_norm)
                .then_with(|| lexicographic(&to_coords(&a.start), &to_coords(&b.start)))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Optimizer {
            iterations: 0,
            grad_norm: f64::INFINITY,
            trace: Vec::new(),
        })?;
    Ok((best, runs))
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// `(τ, a)` block of the Hessian at `(d, 0, 0, 0)`.
pub fn tau_a_hessian<F: ScalarField>(f: &ReducedFunctional<F>, d: f64, step: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = f.dimension();
    let h = f.hessian(&ReducedPoint::centred(n, d), step)?;
    let idx: Vec<usize> = (1..n.n() + 3).collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])]);
    Ok((sub, eigenvalues(&h, &idx)))
}

/// `Ψ` along one coordinate through `base`.
pub fn psi_slice<F: ScalarField>(f: &ReducedFunctional<F>, base: &ReducedPoint, coord: usize, values: &[f64]) -> Result<Vec<(f64, f64)>> {
    let x = to_coords(base);
    if coord >= x.len() {
        return Err(Error::Index {
            index: coord,
            len: x.len(),
        });
    }
    values
        .iter()
        .map(|&v| {
            let mut xv = x.clone();
            xv[coord] = v;
            Ok((v, f.psi(&from_coords(f.dimension(), &xv)?)?))
        })
        .collect()
}

/// Relative change of `Ψ` at `probes` when `Q` is replaced by `other`.
pub fn psi_discrepancy<F: ScalarField, G: ScalarField>(
    f: &ReducedFunctional<F>,
    g: &ReducedFunctional<G>,
    probes: &[ReducedPoint],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in probes {
        let (a, b) = (f.psi(p)?, g.psi(p)?);
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crown::{bubble, crown, kelvin_image, CrownSpec};
    use crate::energy::constants;
    use crate::field::FnField;
    use crate::geometry::norm;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    fn bubble_functional(n: usize) -> (ReducedFunctional<crate::crown::BubbleSum>, EnergyConstants) {
        let d = dim(n);
        let c = constants(d, None, &QuadratureSpec::with_tol(1e-12)).unwrap();
        (ReducedFunctional::new(bubble(d), &c).unwrap(), c)
    }

    #[test]
    fn bubble_psi_closed_form() {
        for n in 3..6 {
            let (f, c) = bubble_functional(n);
            let d = dim(n);
            let al = d.alpha();
            let g = d.gamma_n();
            for dd in [0.5f64, 1.0, 2.0] {
                let m = n as i32 - 2;
                let expect = 0.5 * (al * al / (g * g) * g * dd.powi(m) + c.c2 * al / dd.powi(m));
                let got = f.psi(&ReducedPoint::centred(d, dd)).unwrap();
                assert_relative_eq!(got, expect, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn three_dimensional_reference_values() {
        let (f, c) = bubble_functional(3);
        let cs = d_critical(&f, &[0.0; 3], [0.0; 2], &RotationCoords::zeros(dim(3))).unwrap();
        assert_relative_eq!(cs.d0, 1.0, max_relative = 1e-10);
        assert_relative_eq!(cs.psi, 4.0 * PI * 3f64.sqrt(), max_relative = 1e-10);
        assert_relative_eq!(c.c2, 4.0 * PI * 3f64.powf(0.25), max_relative = 1e-10);
    }

    #[test]
    fn critical_scale_matches_golden_section() {
        for n in 3..6 {
            let (f, _) = bubble_functional(n);
            let th = RotationCoords::zeros(dim(n));
            let tau = vec![0.0; n];
            let cs = d_critical(&f, &tau, [0.0; 2], &th).unwrap();
            assert!(cs.first_derivative.abs() < 1e-10);
            assert!(cs.second_derivative > 0.0);
            let gs = d_argmin(&f, &tau, [0.0; 2], &th).unwrap();
            assert!((gs - cs.d0).abs() < 1e-8, "n = {n}: {gs} vs {}", cs.d0);
        }
    }

    #[test]
    fn golden_section_on_a_parabola() {
        let x = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-12).unwrap();
        assert!((x - 0.3).abs() < 1e-6);
        assert!(golden_section(|x| x, 1.0, 0.0, 1e-8).is_err());
    }

    #[test]
    fn psi_is_coercive_and_theta_blind_for_the_bubble() {
        let (f, _) = bubble_functional(4);
        let d = dim(4);
        let cs = d_critical(&f, &[0.0; 4], [0.0; 2], &RotationCoords::zeros(d)).unwrap();
        let eta = f.eta();
        let at = |x: f64| f.psi(&ReducedPoint::centred(d, x)).unwrap();
        assert!(at(eta * 1.01) + at(0.99 / eta) > cs.psi);
        assert!(at(eta * 1.01) > cs.psi && at(0.99 / eta) > cs.psi);
        let mut p = ReducedPoint::centred(d, 1.3);
        let base = f.psi(&p).unwrap();
        p.theta = RotationCoords::new(d, vec![0.4, 1.0, -0.3, 2.0, 0.7]).unwrap();
        assert_relative_eq!(f.psi(&p).unwrap(), base, max_relative = 1e-14);
        assert!(f.psi(&ReducedPoint::centred(d, 0.01)).is_err());
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let d = dim(4);
        let spec = CrownSpec::new(d, 8).unwrap();
        let c = constants(d, Some(&spec), &QuadratureSpec::with_tol(1e-9)).unwrap();
        let f = ReducedFunctional::new(crown(&spec), &c).unwrap();
        assert!(f.is_kelvin_invariant());
        let p = ReducedPoint::new(
            d,
            1.1,
            vec![0.02, -0.01, 0.015, 0.005],
            [0.05, -0.03],
            RotationCoords::new(d, vec![0.2, -0.1, 0.3, 0.05, -0.2]).unwrap(),
        )
        .unwrap();
        let g = f.gradient(&p).unwrap();
        let fd = f.fd_gradient(&p, 1e-4).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()), "{a} vs {b}");
        }
        assert_relative_eq!(g[0], fd[0], max_relative = 1e-7);
    }

    #[test]
    fn kelvin_image_profile_gives_the_same_psi() {
        let d = dim(4);
        let spec = CrownSpec::new(d, 8).unwrap();
        let c = constants(d, Some(&spec), &QuadratureSpec::with_tol(1e-8)).unwrap();
        let q = crown(&spec);
        let f = ReducedFunctional::new(q.clone(), &c).unwrap();
        let img = FnField::new(4, move |y: &[f64]| kelvin_image(&q, y));
        let g = ReducedFunctional::new(img, &c).unwrap();
        let probes: Vec<ReducedPoint> = (1..5)
            .map(|i| {
                let t = 0.01 * i as f64;
                ReducedPoint::new(d, 0.8 + 0.1 * i as f64, vec![t, -t, 0.5 * t, 0.0], [t, 2.0 * t], RotationCoords::zeros(d)).unwrap()
            })
            .collect();
        assert!(psi_discrepancy(&f, &g, &probes).unwrap() < 1e-10);
    }

    #[test]
    fn crown_tau_a_block_is_negative_definite() {
        let d = dim(4);
        let spec = CrownSpec::new(d, 8).unwrap();
        let c = constants(d, Some(&spec), &QuadratureSpec::with_tol(1e-9)).unwrap();
        let f = ReducedFunctional::new(crown(&spec), &c).unwrap();
        let cs = d_critical(&f, &[0.0; 4], [0.0; 2], &RotationCoords::zeros(d)).unwrap();
        let (_, ev) = tau_a_hessian(&f, cs.d0, 1e-4).unwrap();
        assert!(ev.iter().all(|&l| l < 0.0), "{ev:?}");
    }

    #[test]
    fn optimizer_on_the_bubble_flags_flat_theta() {
        let (f, _) = bubble_functional(3);
        let d = dim(3);
        let start = ReducedPoint::new(d, 0.7, vec![0.02, -0.01, 0.01], [0.03, 0.01], RotationCoords::new(d, vec![0.2, 0.1, -0.3]).unwrap()).unwrap();
        let o = optimize(&f, &start, &OptimizerOptions::default()).unwrap();
        assert!(o.gradient_norm < 1e-9);
        assert!((o.point.d - 1.0).abs() < 1e-6, "{:?}", o.point);
        assert!(norm(&o.point.tau) < 1e-6 && o.point.a[0].hypot(o.point.a[1]) < 1e-6);
        assert!(o.theta_degenerate);
        assert!(o.saddle_structure);
    }

    #[test]
    fn optimizer_returns_the_crown_to_the_centre() {
        let d = dim(4);
        let spec = CrownSpec::new(d, 8).unwrap();
        let c = constants(d, Some(&spec), &QuadratureSpec::with_tol(1e-9)).unwrap();
        let f = ReducedFunctional::new(crown(&spec), &c).unwrap();
        let starts: Vec<ReducedPoint> = [[0.05, 0.0], [0.0, 0.05], [-0.035, 0.035]]
            .iter()
            .map(|&[t, a]| ReducedPoint::new(d, 1.0, vec![t, -t, 0.5 * t, 0.02], [a, -a], RotationCoords::zeros(d)).unwrap())
            .collect();
        let (best, runs) = optimize_multistart(&f, &starts, &OptimizerOptions::default()).unwrap();
        for r in &runs {
            let o = r.as_ref().unwrap();
            assert!(o.gradient_norm < 1e-9);
            assert!(norm(&o.point.tau) < 1e-6, "{:?}", o.point);
            assert!(o.point.a[0].hypot(o.point.a[1]) < 1e-6);
            assert!(o.saddle_structure);
        }
        assert!(best < runs.len());
    }

    #[test]
    fn energy_expansion_for_the_bubble() {
        let (f, c) = bubble_functional(3);
        let spec = QuadratureSpec::with_tol(1e-13);
        for mode in [ProjectionMode::ExactRadial, ProjectionMode::Leading] {
            let chk = expansion_check(&f, &c, 1.0, &[1e-5, 1e-6, 1e-7, 1e-8], mode, Some(1.2), &spec).unwrap();
            assert_eq!(chk.measured_sign, 1.0);
            assert!(chk.value.verdict.passed(), "{:?}", chk.value);
            assert!(chk.derivative.as_ref().unwrap().verdict.passed(), "{:?}", chk.derivative);
        }
    }
}

