//! Leading-order projection of `Q_A` onto `H¹₀(Ω_ε)`, the far-field
//! function `F(τ, a, θ)`, boundary defects of the projection model and the
//! error term of the rescaled problem.

use rayon::prelude::*;
use serde::Serialize;

use crate::crown::far_field_constant;
use crate::error::{Error, Result};
use crate::field::{ScalarField, MAX_DIM};
use crate::fit::{loglog_fit, ExpansionReport, Verdict};
use crate::geometry::{
    abs_pow, ball_regular_part, ball_regular_part_gradient, norm, norm_sq, pow_half_int, rotation_matrix,
    Dimension, RotationCoords,
};
use crate::kelvin::{q_family, ParamSet, ReducedPoint, ThetaTransform};
use crate::probes::{directions_with_axes, log_radii};
use crate::quadrature::norms::{weighted_norm, NormKind, ProbeGrid};

/// `R_θ a` as an `n`-vector.
pub fn rotate_a(a: [f64; 2], theta: &RotationCoords, n: Dimension) -> Result<Vec<f64>> {
    let r = rotation_matrix(theta, n)?;
    Ok((0..n.n()).map(|i| r[(i, 0)] * a[0] + r[(i, 1)] * a[1]).collect())
}

/// `F(τ, a, θ) = Q(-τ/|τ|² - R_θ a) |τ|^{2-n}`, and the far-field constant
/// of `Q` at `τ = 0`.
pub fn f_function<F: ScalarField + ?Sized>(tau: &[f64], a: [f64; 2], theta: &RotationCoords, q: &F) -> Result<f64> {
    let n = Dimension::new(q.dim())?;
    if tau.len() != n.n() {
        return Err(Error::DimensionMismatch {
            expected: n.n(),
            got: tau.len(),
        });
    }
    if a[0].hypot(a[1]) >= 0.5 {
        return Err(Error::Parameter("|a| must be below 1/2".into()));
    }
    let t2 = norm_sq(tau);
    if t2 == 0.0 {
        return far_field_constant(q);
    }
    let b = rotate_a(a, theta, n)?;
    let w: Vec<f64> = tau.iter().zip(&b).map(|(t, bi)| -t / t2 - bi).collect();
    Ok(q.value(&w) / pow_half_int(t2, n.n() - 2))
}

/// `F` and its partials in `τ` and `b = R_θ a` for a Kelvin-invariant `Q`,
/// using `F = m^{(2-n)/2} Q(-(τ + b|τ|²)/m)`, `m = 1 + 2b·τ + |b|²|τ|²`.
/// This form is smooth through `τ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FGradient {
    pub value: f64,
    pub d_tau: Vec<f64>,
    pub d_b: Vec<f64>,
}

pub fn f_kelvin<F: ScalarField + ?Sized>(tau: &[f64], b: &[f64], q: &F) -> FGradient {
    let n = tau.len();
    let nf = n as f64;
    let t2 = norm_sq(tau);
    let b2 = norm_sq(b);
    let bt: f64 = b.iter().zip(tau).map(|(x, y)| x * y).sum();
    let m = 1.0 + 2.0 * bt + b2 * t2;
    let mut g = [0.0; MAX_DIM];
    let mut s = [0.0; MAX_DIM];
    for i in 0..n {
        s[i] = tau[i] + b[i] * t2;
        g[i] = -s[i] / m;
    }
    let mut dq = [0.0; MAX_DIM];
    q.gradient(&g[..n], &mut dq[..n]);
    let qv = q.value(&g[..n]);
    let w = m.powf((2.0 - nf) / 2.0);
    let dw = (2.0 - nf) / 2.0 * w / m;
    let dqs: f64 = (0..n).map(|i| dq[i] * s[i]).sum();
    let dqb: f64 = (0..n).map(|i| dq[i] * b[i]).sum();
    let mut d_tau = vec![0.0; n];
    let mut d_b = vec![0.0; n];
    for j in 0..n {
        let dm_t = 2.0 * b[j] + 2.0 * b2 * tau[j];
        let dm_b = 2.0 * tau[j] + 2.0 * b[j] * t2;
        // ∇Q·∂g/∂τ_j = -(∂_jQ + 2 τ_j ∇Q·b)/m + (∇Q·s) ∂m/∂τ_j / m²
        let gt = -(dq[j] + 2.0 * tau[j] * dqb) / m + dqs * dm_t / (m * m);
        let gb = -dq[j] * t2 / m + dqs * dm_b / (m * m);
        d_tau[j] = dw * dm_t * qv + w * gt;
        d_b[j] = dw * dm_b * qv + w * gb;
    }
    FGradient {
        value: w * qv,
        d_tau,
        d_b,
    }
}

/// `-γₙ⁻¹ λ^{(n-2)/2} Q(-R_θ a) H(x, ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularCorrection {
    pub coefficient: f64,
    pub xi: Vec<f64>,
}

impl ScalarField for RegularCorrection {
    fn dim(&self) -> usize {
        self.xi.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.try_value(x).unwrap_or(f64::NAN)
    }

    fn try_value(&self, x: &[f64]) -> Result<f64> {
        Ok(-self.coefficient * ball_regular_part(x, &self.xi)?)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        if ball_regular_part_gradient(x, &self.xi, out).is_err() {
            out.iter_mut().for_each(|o| *o = f64::NAN);
            return;
        }
        out.iter_mut().for_each(|o| *o *= -self.coefficient);
    }

    fn laplacian(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_laplacian(&self) -> bool {
        true
    }
}

/// `-λ^{-(n-2)/2} F ε^{n-2} |x|^{2-n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoleCorrection {
    pub n: usize,
    pub coefficient: f64,
}

impl ScalarField for HoleCorrection {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        -self.coefficient / pow_half_int(norm_sq(x), self.n - 2)
    }

    fn try_value(&self, x: &[f64]) -> Result<f64> {
        if norm_sq(x) == 0.0 {
            return Err(Error::Singularity("hole correction at the origin".into()));
        }
        Ok(self.value(x))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r2 = norm_sq(x);
        let s = self.coefficient * (self.n as f64 - 2.0) / pow_half_int(r2, self.n);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = s * xi;
        }
    }

    fn laplacian(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_laplacian(&self) -> bool {
        true
    }
}

/// `Q_A` minus its two harmonic corrections, defined on `Ω_ε`.
pub struct ProjectionField<F> {
    pub base: ThetaTransform<F>,
    pub h_correction: RegularCorrection,
    pub hole_correction: HoleCorrection,
    pub eps: f64,
    pub params: ParamSet,
    /// `F(τ, a, θ)` used in the hole correction.
    pub f_value: f64,
}

impl<F: ScalarField> ProjectionField<F> {
    /// Sum of both corrections at `x`.
    pub fn corrections(&self, x: &[f64]) -> Result<f64> {
        Ok(self.h_correction.try_value(x)? + self.hole_correction.try_value(x)?)
    }

    /// The value of `Q` at `-R_θ a` entering the regular correction.
    pub fn q_at_minus_a(&self) -> f64 {
        let n = self.params.xi.len();
        self.h_correction.coefficient * Dimension::new(n).map(|d| d.gamma_n()).unwrap_or(f64::NAN)
            / pow_half_int(self.params.lambda, n - 2)
    }
}

impl<F: ScalarField> ScalarField for ProjectionField<F> {
    fn dim(&self) -> usize {
        self.params.xi.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.try_value(x).unwrap_or(f64::NAN)
    }

    fn try_value(&self, x: &[f64]) -> Result<f64> {
        let r = norm(x);
        if r < self.eps * (1.0 - 1e-12) || r > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("|x| = {r} outside the punctured ball")));
        }
        Ok(self.base.try_value(x)? + self.corrections(x)?)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let mut a = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        self.base.gradient(x, out);
        self.h_correction.gradient(x, &mut a[..n]);
        self.hole_correction.gradient(x, &mut b[..n]);
        for j in 0..n {
            out[j] += a[j] + b[j];
        }
    }

    /// The corrections are harmonic, so only `Q_A` contributes.
    fn laplacian(&self, x: &[f64]) -> f64 {
        self.base.laplacian(x)
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_laplacian(&self) -> bool {
        self.base.has_analytic_laplacian()
    }
}

fn check_projection_regime(params: &ParamSet, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("ε = {eps} not in (0, 1)")));
    }
    if params.lambda >= 1.0 {
        return Err(Error::Parameter(format!("λ = {} is not small", params.lambda)));
    }
    if norm(&params.xi) >= 1.0 {
        return Err(Error::Parameter("ξ must lie inside the unit ball".into()));
    }
    if eps >= params.lambda {
        return Err(Error::Parameter(format!("hole radius {eps} not below λ = {}", params.lambda)));
    }
    Ok(())
}

/// Leading-order model of `P_ε Q_A`.
pub fn project_leading<F: ScalarField>(params: &ParamSet, eps: f64, q: F) -> Result<ProjectionField<F>> {
    check_projection_regime(params, eps)?;
    let n = params.dimension();
    let nn = n.n();
    let tau: Vec<f64> = params.xi.iter().map(|x| x / params.lambda).collect();
    let f_value = f_function(&tau, params.a, &params.theta, &q)?;
    let minus_b: Vec<f64> = params.rotated_a().iter().map(|v| -v).collect();
    let q_mb = q.value(&minus_b);
    let half = pow_half_int(params.lambda, nn - 2);
    let h_correction = RegularCorrection {
        coefficient: half * q_mb / n.gamma_n(),
        xi: params.xi.clone(),
    };
    let hole_correction = HoleCorrection {
        n: nn,
        coefficient: f_value * eps.powi(nn as i32 - 2) / half,
    };
    Ok(ProjectionField {
        base: q_family(params, q)?,
        h_correction,
        hole_correction,
        eps,
        params: params.clone(),
        f_value,
    })
}

/// Sups of the projection model over `|x| = ε` and `|x| = 1`. The true
/// remainder is harmonic with exactly minus these boundary values, so the
/// sups bound it throughout `Ω_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryDefect {
    pub inner_sup: f64,
    pub outer_sup: f64,
}

pub const DEFECT_DIRECTIONS: usize = 256;

fn boundary_sups(n: usize, eps: f64, model: impl Fn(&[f64]) -> Result<f64>) -> Result<BoundaryDefect> {
    let dirs = directions_with_axes(n, DEFECT_DIRECTIONS, 0xb0da);
    let mut inner: f64 = 0.0;
    let mut outer: f64 = 0.0;
    let mut x = [0.0; MAX_DIM];
    for d in &dirs {
        for j in 0..n {
            x[j] = eps * d[j];
        }
        inner = inner.max(model(&x[..n])?.abs());
        for j in 0..n {
            x[j] = d[j];
        }
        outer = outer.max(model(&x[..n])?.abs());
    }
    Ok(BoundaryDefect {
        inner_sup: inner,
        outer_sup: outer,
    })
}

pub fn remainder_boundary_defect<F: ScalarField>(field: &ProjectionField<F>) -> Result<BoundaryDefect> {
    boundary_sups(field.dim(), field.eps, |x| field.try_value(x))
}

/// Which parameter derivative of the remainder is being bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DefectKind {
    Value,
    Lambda,
    Tau(usize),
    A(usize),
    Theta(usize),
}

impl std::fmt::Display for DefectKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DefectKind::Value => write!(f, "value"),
            DefectKind::Lambda => write!(f, "lambda"),
            DefectKind::Tau(i) => write!(f, "tau_{}", i + 1),
            DefectKind::A(i) => write!(f, "a_{}", i + 1),
            DefectKind::Theta(i) => write!(f, "theta_{}", i),
        }
    }
}

/// The stated remainder bound (without its constant) at radius `r`.
pub fn remainder_bound(kind: DefectKind, n: usize, lambda: f64, eps: f64, r: f64) -> f64 {
    let nf = n as f64;
    let hole = eps.powf(nf - 2.0) / r.powf(nf - 2.0);
    match kind {
        DefectKind::Tau(_) => {
            lambda.powf(nf / 2.0)
                * (hole * (1.0 + eps * lambda.powf(-nf)) + lambda * lambda + eps.powf(nf - 2.0) / lambda.powf(nf - 1.0))
        }
        _ => {
            let pre = if kind == DefectKind::Lambda {
                lambda.powf((nf - 4.0) / 2.0)
            } else {
                lambda.powf((nf - 2.0) / 2.0)
            };
            pre * (hole * (1.0 + eps * lambda.powf(1.0 - nf)) + lambda * lambda + (eps / lambda).powf(nf - 2.0))
        }
    }
}

fn perturbed(point: &ReducedPoint, eps: f64, kind: DefectKind, h: f64) -> Result<ParamSet> {
    let base = point.params(eps)?;
    let mut p = base.clone();
    match kind {
        DefectKind::Value => {}
        // λ varies with ξ held fixed.
        DefectKind::Lambda => p.lambda += h,
        DefectKind::Tau(i) => p.xi[i] += h * p.lambda,
        DefectKind::A(i) => p.a[i] += h,
        DefectKind::Theta(i) => p.theta.angles_mut()[i] += h,
    }
    Ok(p)
}

/// Boundary sups of `∂_param` of the projection model by Richardson
/// central differences.
pub fn derivative_defect<F: ScalarField + Clone>(
    point: &ReducedPoint,
    eps: f64,
    kind: DefectKind,
    q: &F,
) -> Result<BoundaryDefect> {
    let n = q.dim();
    if kind == DefectKind::Value {
        return remainder_boundary_defect(&project_leading(&point.params(eps)?, eps, q.clone())?);
    }
    let lambda = point.d * eps.sqrt();
    let h0 = match kind {
        DefectKind::Lambda => 1e-3 * lambda,
        _ => 1e-3,
    };
    let fields = [h0, -h0, h0 / 2.0, -h0 / 2.0]
        .iter()
        .map(|&h| project_leading(&perturbed(point, eps, kind, h)?, eps, q.clone()))
        .collect::<Result<Vec<_>>>()?;
    boundary_sups(n, eps, |x| {
        let v: Vec<f64> = fields.iter().map(|f| f.try_value(x)).collect::<Result<_>>()?;
        let d1 = (v[0] - v[1]) / (2.0 * h0);
        let d2 = (v[2] - v[3]) / h0;
        Ok((4.0 * d2 - d1) / 3.0)
    })
}

/// One ε-sweep of boundary defects against the stated bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectSweep {
    pub kind: DefectKind,
    pub eps: Vec<f64>,
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
    pub inner_bound: Vec<f64>,
    pub outer_bound: Vec<f64>,
    pub inner_slope: f64,
    pub outer_slope: f64,
    pub inner_bound_slope: f64,
    pub outer_bound_slope: f64,
    /// Fitted constants `max defect / bound` on each boundary.
    pub inner_constant: f64,
    pub outer_constant: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Sweeps `ε`, fitting log-log slopes of the defects and of the bound. For
/// the value itself the slopes must agree within `tol`; a derivative defect
/// passes when it decays at least as fast as its bound.
pub fn defect_sweep<F: ScalarField + Clone>(
    point: &ReducedPoint,
    eps_list: &[f64],
    kind: DefectKind,
    q: &F,
    tol: f64,
) -> Result<DefectSweep> {
    let n = q.dim();
    let defects = eps_list
        .par_iter()
        .map(|&e| derivative_defect(point, e, kind, q))
        .collect::<Result<Vec<_>>>()?;
    let inner: Vec<f64> = defects.iter().map(|d| d.inner_sup).collect();
    let outer: Vec<f64> = defects.iter().map(|d| d.outer_sup).collect();
    let lam = |e: f64| point.d * e.sqrt();
    let inner_bound: Vec<f64> = eps_list.iter().map(|&e| remainder_bound(kind, n, lam(e), e, e)).collect();
    let outer_bound: Vec<f64> = eps_list.iter().map(|&e| remainder_bound(kind, n, lam(e), e, 1.0)).collect();
    // An identically vanishing defect decays faster than any power.
    let slope = |ys: &[f64]| -> Result<f64> {
        if ys.iter().all(|&v| v == 0.0) {
            Ok(f64::INFINITY)
        } else {
            Ok(loglog_fit(eps_list, ys)?.slope)
        }
    };
    let (fi, fo) = (slope(&inner)?, slope(&outer)?);
    let (bi, bo) = (slope(&inner_bound)?, slope(&outer_bound)?);
    let ok = |m: f64, b: f64| {
        if kind == DefectKind::Value {
            (m - b).abs() <= tol * b.abs()
        } else {
            m >= b - tol * b.abs()
        }
    };
    let ratio = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x / y).fold(0.0, f64::max);
    Ok(DefectSweep {
        kind,
        eps: eps_list.to_vec(),
        inner_constant: ratio(&inner, &inner_bound),
        outer_constant: ratio(&outer, &outer_bound),
        inner,
        outer,
        inner_bound,
        outer_bound,
        inner_slope: fi,
        outer_slope: fo,
        inner_bound_slope: bi,
        outer_bound_slope: bo,
        tolerance: tol,
        verdict: Verdict::from_bool(ok(fi, bi) && ok(fo, bo)),
    })
}

/// `V(y) = ε^{(n-2)/4} P(√ε y)` on `D_ε = B(0, 1/√ε) \ B(0, √ε)`.
pub struct RescaledProjection<F> {
    pub projection: ProjectionField<F>,
    scale: f64,
    root_eps: f64,
}

impl<F: ScalarField> RescaledProjection<F> {
    pub fn new(projection: ProjectionField<F>) -> Self {
        let n = projection.dim() as f64;
        let eps = projection.eps;
        Self {
            scale: eps.powf((n - 2.0) / 4.0),
            root_eps: eps.sqrt(),
            projection,
        }
    }

    fn shrink(&self, y: &[f64], x: &mut [f64]) {
        for (xi, yi) in x.iter_mut().zip(y) {
            *xi = self.root_eps * yi;
        }
    }

    /// `(Q_Ã(y), V(y) - Q_Ã(y))`.
    pub fn split(&self, y: &[f64]) -> Result<(f64, f64)> {
        let n = y.len();
        let mut x = [0.0; MAX_DIM];
        self.shrink(y, &mut x[..n]);
        let r = norm(&x[..n]);
        let eps = self.projection.eps;
        if r < eps * (1.0 - 1e-12) || r > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("|y| = {} outside D_ε", norm(y))));
        }
        Ok((
            self.scale * self.projection.base.try_value(&x[..n])?,
            self.scale * self.projection.corrections(&x[..n])?,
        ))
    }
}

impl<F: ScalarField> ScalarField for RescaledProjection<F> {
    fn dim(&self) -> usize {
        self.projection.dim()
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.try_value(y).unwrap_or(f64::NAN)
    }

    fn try_value(&self, y: &[f64]) -> Result<f64> {
        let (q, c) = self.split(y)?;
        Ok(q + c)
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        let n = y.len();
        let mut x = [0.0; MAX_DIM];
        self.shrink(y, &mut x[..n]);
        self.projection.gradient(&x[..n], out);
        let s = self.scale * self.root_eps;
        out.iter_mut().for_each(|o| *o *= s);
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }
}

/// `E = |V|^{p-1}V - |Q_Ã|^{p-1}Q_Ã` on `D_ε`.
pub struct ErrorField<F> {
    pub v: RescaledProjection<F>,
    p: f64,
}

impl<F: ScalarField> ErrorField<F> {
    pub fn new(projection: ProjectionField<F>) -> Self {
        let p = projection.params.dimension().p();
        Self {
            v: RescaledProjection::new(projection),
            p,
        }
    }
}

fn signed_pow(v: f64, p: f64) -> f64 {
    abs_pow(v, p - 1.0) * v
}

impl<F: ScalarField> ScalarField for ErrorField<F> {
    fn dim(&self) -> usize {
        self.v.dim()
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.try_value(y).unwrap_or(f64::NAN)
    }

    fn try_value(&self, y: &[f64]) -> Result<f64> {
        let (q, c) = self.v.split(y)?;
        Ok(signed_pow(q + c, self.p) - signed_pow(q, self.p))
    }
}

/// The error field for regime point `point` at `ε`.
pub fn error_field<F: ScalarField>(point: &ReducedPoint, eps: f64, q: F) -> Result<ErrorField<F>> {
    Ok(ErrorField::new(project_leading(&point.params(eps)?, eps, q)?))
}

/// `‖E‖_**` across `eps_list` with a log-log fit against `(n-2)/2`.
pub fn error_norm_scaling<F: ScalarField + Clone>(
    point: &ReducedPoint,
    eps_list: &[f64],
    q: &F,
    grid: &ProbeGrid,
    tol: f64,
) -> Result<ExpansionReport> {
    let n = q.dim() as f64;
    let norms = eps_list
        .par_iter()
        .map(|&e| weighted_norm(&error_field(point, e, q.clone())?, NormKind::StarStar, e, grid))
        .collect::<Result<Vec<_>>>()?;
    ExpansionReport::exponent("error norm ~ eps^((n-2)/2)", eps_list.to_vec(), norms, (n - 2.0) / 2.0, tol)
}

/// Weighted sups of `E` on `√ε < |y| < 1` and `1 < |y| < 1/√ε` separately.
pub fn error_region_split<F: ScalarField>(e: &ErrorField<F>, grid: &ProbeGrid) -> Result<(f64, f64)> {
    let n = e.dim();
    let eps = e.v.projection.eps;
    let nf = n as f64;
    let dirs = directions_with_axes(n, grid.directions, grid.seed);
    let radii = log_radii(eps.sqrt() * (1.0 + 1e-9), eps.sqrt().recip() * (1.0 - 1e-9), grid.radii);
    let mut inner: f64 = 0.0;
    let mut outer: f64 = 0.0;
    let mut y = [0.0; MAX_DIM];
    for d in &dirs {
        for &r in &radii {
            for j in 0..n {
                y[j] = r * d[j];
            }
            let v = e.try_value(&y[..n])?.abs();
            if r < 1.0 {
                inner = inner.max(r.powf(nf - 2.0) * v);
            } else {
                outer = outer.max((1.0 + r.powi(4)) * v);
            }
        }
    }
    Ok((inner, outer))
}

/// Exact projection of a centred bubble `U_λ` onto `H¹₀` of the annulus
/// `ε < |x| < 1`: `P = U_λ + A + B|x|^{2-n}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialProjection {
    pub n: usize,
    pub lambda: f64,
    pub eps: f64,
    pub a: f64,
    pub b: f64,
}

impl RadialProjection {
    pub fn new(n: Dimension, lambda: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0 && lambda > 0.0) {
            return Err(Error::Parameter(format!("need 0 < ε < 1 and λ > 0, got ε = {eps}, λ = {lambda}")));
        }
        let nf = n.n() as f64;
        let mut s = Self {
            n: n.n(),
            lambda,
            eps,
            a: 0.0,
            b: 0.0,
        };
        let (ue, u1) = (s.bubble(eps).0, s.bubble(1.0).0);
        // A + B ε^{2-n} = -U(ε), A + B = -U(1)
        let e = eps.powf(2.0 - nf);
        s.b = (u1 - ue) / (e - 1.0);
        s.a = -u1 - s.b;
        Ok(s)
    }

    fn bubble(&self, r: f64) -> (f64, f64) {
        let nf = self.n as f64;
        let alpha = (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0);
        let l = self.lambda;
        let t = 1.0 + r * r / (l * l);
        let u = alpha * l.powf(-(nf - 2.0) / 2.0) * t.powf(-(nf - 2.0) / 2.0);
        (u, -(nf - 2.0) * u * r / (l * l * t))
    }

    /// `(P(r), P'(r))`.
    pub fn profile(&self, r: f64) -> (f64, f64) {
        let nf = self.n as f64;
        let (u, du) = self.bubble(r);
        (
            u + self.a + self.b * r.powf(2.0 - nf),
            du + self.b * (2.0 - nf) * r.powf(1.0 - nf),
        )
    }
}

impl ScalarField for RadialProjection {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.profile(norm(x)).0
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let r = norm(x);
        let d = self.profile(r).1;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = if r > 0.0 { d * xi / r } else { 0.0 };
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crown::{bubble, crown, CrownSpec};
    use crate::field::{stencil_laplacian, stencil_laplacian4};
    use crate::probes::{shell_points, sphere_directions};
    use approx::assert_relative_eq;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    fn point(n: usize, d: f64, tau1: f64) -> ReducedPoint {
        let mut tau = vec![0.0; n];
        tau[0] = tau1;
        ReducedPoint::new(dim(n), d, tau, [0.0; 2], RotationCoords::zeros(dim(n))).unwrap()
    }

    #[test]
    fn f_at_origin_is_far_field() {
        for n in 3..6 {
            let d = dim(n);
            let f = f_function(&vec![0.0; n], [0.0; 2], &RotationCoords::zeros(d), &bubble(d)).unwrap();
            assert_relative_eq!(f, d.alpha(), max_relative = 1e-6);
        }
    }

    #[test]
    fn f_two_route_evaluation() {
        let d = dim(3);
        let u = bubble(d);
        let tau = [0.03, 0.0, -0.04];
        let f = f_function(&tau, [0.0; 2], &RotationCoords::zeros(d), &u).unwrap();
        let t2 = norm_sq(&tau);
        let y: Vec<f64> = tau.iter().map(|t| -t / t2).collect();
        assert_relative_eq!(f, norm(&y).powi(1) * u.value(&y), max_relative = 1e-13);
    }

    #[test]
    fn f_is_continuous_along_rays() {
        let d = dim(4);
        let q = crown(&CrownSpec::new(d, 8).unwrap());
        let theta = RotationCoords::new(d, vec![0.3, -0.2, 0.1, 0.4, 0.2]).unwrap();
        let a = [0.1, -0.05];
        let b = rotate_a(a, &theta, d).unwrap();
        let f0 = f_kelvin(&[0.0; 4], &b, &q).value;
        assert_relative_eq!(f0, q.value(&[0.0; 4]), max_relative = 1e-14);
        for dir in sphere_directions(4, 8, 3) {
            let ts = [1e-3, 5e-4, 2.5e-4, 1.25e-4];
            let gaps: Vec<f64> = ts
                .iter()
                .map(|t| {
                    let tau: Vec<f64> = dir.iter().map(|v| t * v).collect();
                    (f_function(&tau, a, &theta, &q).unwrap() - f0).abs()
                })
                .collect();
            let fit = loglog_fit(&ts, &gaps).unwrap();
            // O(t): at least linear decay, faster where the linear term is small
            assert!(fit.slope > 0.95, "slope {} {gaps:?}", fit.slope);
        }
    }

    #[test]
    fn smooth_form_matches_literal_and_its_gradient() {
        let d = dim(4);
        let q = crown(&CrownSpec::new(d, 8).unwrap());
        let theta = RotationCoords::new(d, vec![0.3, -0.2, 0.1, 0.4, 0.2]).unwrap();
        let a = [0.1, -0.05];
        let b = rotate_a(a, &theta, d).unwrap();
        let tau = [0.05, -0.02, 0.01, 0.03];
        let g = f_kelvin(&tau, &b, &q);
        assert_relative_eq!(g.value, f_function(&tau, a, &theta, &q).unwrap(), max_relative = 1e-10);
        let h = 1e-5;
        for j in 0..4 {
            let mut tp = tau;
            let mut tm = tau;
            tp[j] += h;
            tm[j] -= h;
            let fd = (f_kelvin(&tp, &b, &q).value - f_kelvin(&tm, &b, &q).value) / (2.0 * h);
            assert_relative_eq!(g.d_tau[j], fd, epsilon = 1e-6 * (1.0 + fd.abs()));
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[j] += h;
            bm[j] -= h;
            let fd = (f_kelvin(&tau, &bp, &q).value - f_kelvin(&tau, &bm, &q).value) / (2.0 * h);
            assert_relative_eq!(g.d_b[j], fd, epsilon = 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn projection_solves_the_interior_equation() {
        let d = dim(3);
        let pt = point(3, 1.0, 0.1);
        let eps = 1e-3;
        let pf = project_leading(&pt.params(eps).unwrap(), eps, bubble(d)).unwrap();
        let p = d.p();
        let lam = pf.params.lambda;
        for x in shell_points(3, 50, 2.0 * eps, 0.9, 11) {
            let scale = norm(&x).min(lam);
            let lap = stencil_laplacian4(&pf, &x, 1e-2 * scale);
            let rhs = signed_pow(pf.base.value(&x), p);
            let size = rhs.abs() + pf.value(&x).abs() / (scale * scale);
            assert!((-lap - rhs).abs() <= 1e-4 * size, "{x:?}: {lap} vs {rhs}");
        }
    }

    #[test]
    fn corrections_are_harmonic_and_vanish_with_eps() {
        let d = dim(4);
        let q = crown(&CrownSpec::new(d, 8).unwrap());
        let pt = point(4, 1.2, 0.05);
        let x = [0.3, -0.2, 0.1, 0.25];
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let pf = project_leading(&pt.params(eps).unwrap(), eps, q.clone()).unwrap();
            for c in [&pf.h_correction as &dyn ScalarField, &pf.hole_correction] {
                // field scale: value over the squared distance to the singularity
                let scale = c.value(&x).abs() / norm_sq(&x);
                assert!(stencil_laplacian4(c, &x, 3e-3).abs() < 1e-6 * scale);
                assert!(stencil_laplacian(c, &x, 2e-4).abs() < 1e-5 * scale);
            }
            let c = pf.corrections(&x).unwrap().abs();
            assert!(c < last);
            last = c;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn outer_defect_follows_the_bound() {
        let d = dim(3);
        let pt = point(3, 1.0, 0.1);
        let s = defect_sweep(&pt, &[1e-4, 1e-5, 1e-6, 1e-7], DefectKind::Value, &bubble(d), 0.1).unwrap();
        assert!(s.verdict.passed(), "{s:?}");
    }

    #[test]
    fn derivative_defects_respect_their_bounds() {
        let d = dim(3);
        let pt = point(3, 1.0, 0.1);
        let eps = [1e-4, 1e-5, 1e-6, 1e-7];
        for kind in [DefectKind::Lambda, DefectKind::Tau(0), DefectKind::Tau(1), DefectKind::A(0), DefectKind::A(1)] {
            let s = defect_sweep(&pt, &eps, kind, &bubble(d), 0.1).unwrap();
            assert!(s.verdict.passed(), "{kind}: {s:?}");
        }
        // A radial profile with a = 0 does not see rotations.
        let s = defect_sweep(&pt, &eps, DefectKind::Theta(0), &bubble(d), 0.1).unwrap();
        assert_eq!(s.inner_slope, f64::INFINITY);
        assert!(s.verdict.passed());
    }

    #[test]
    fn defect_at_tau_zero_and_theta_blindness() {
        let d = dim(3);
        let eps = 1e-5;
        let u = bubble(d);
        let pt = point(3, 1.0, 0.0);
        let base = remainder_boundary_defect(&project_leading(&pt.params(eps).unwrap(), eps, u.clone()).unwrap()).unwrap();
        assert!(base.inner_sup.is_finite() && base.outer_sup.is_finite());
        let mut rot = pt.clone();
        rot.theta = RotationCoords::new(d, vec![0.7, -1.1, 2.0]).unwrap();
        let other = remainder_boundary_defect(&project_leading(&rot.params(eps).unwrap(), eps, u).unwrap()).unwrap();
        assert_relative_eq!(base.inner_sup, other.inner_sup, max_relative = 1e-10);
        assert_relative_eq!(base.outer_sup, other.outer_sup, max_relative = 1e-10);
    }

    #[test]
    fn rejects_bad_regimes() {
        let d = dim(3);
        let pt = point(3, 1.0, 0.1);
        let params = pt.params(1e-4).unwrap();
        assert!(project_leading(&params, 0.5, bubble(d)).is_err());
        assert!(project_leading(&params, 0.0, bubble(d)).is_err());
    }

    #[test]
    fn error_norm_scales_like_eps_power() {
        let sweeps: [(usize, &[f64]); 2] = [(3, &[1e-4, 1e-5, 1e-6, 1e-7]), (4, &[1e-2, 1e-3, 1e-4, 1e-5])];
        for (n, eps) in sweeps {
            let d = dim(n);
            let pt = point(n, 1.0, 0.0);
            let r = error_norm_scaling(&pt, eps, &bubble(d), &ProbeGrid::default(), 0.1).unwrap();
            assert!(r.verdict.passed(), "n = {n}: {r:?}");
        }
    }

    #[test]
    fn error_norm_has_a_slow_transient_in_three_dimensions() {
        // ‖E‖/ε^{1/2} approaches its limit with an O(ε^{1/2}) relative
        // correction, so the early decades fit a visibly smaller slope.
        let pt = point(3, 1.0, 0.0);
        let early = error_norm_scaling(&pt, &[1e-2, 1e-3, 1e-4, 1e-5], &bubble(dim(3)), &ProbeGrid::default(), 0.1).unwrap();
        let late = error_norm_scaling(&pt, &[1e-4, 1e-5, 1e-6, 1e-7], &bubble(dim(3)), &ProbeGrid::default(), 0.1).unwrap();
        assert!(early.fitted_exponent < late.fitted_exponent);
        assert!((late.fitted_exponent - 0.5).abs() < 0.025);
    }

    #[test]
    fn inner_error_is_of_order_eps_power() {
        let d = dim(4);
        let pt = point(4, 1.0, 0.0);
        for eps in [1e-3, 1e-5] {
            let e = error_field(&pt, eps, bubble(d)).unwrap();
            let (inner, outer) = error_region_split(&e, &ProbeGrid::default()).unwrap();
            assert!(inner < 100.0 * eps && outer < 100.0 * eps, "{inner} {outer}");
        }
    }

    #[test]
    fn radial_projection_vanishes_on_the_boundary() {
        let rp = RadialProjection::new(dim(3), 3e-3, 1e-5).unwrap();
        assert!(rp.profile(1e-5).0.abs() < 1e-10 * rp.bubble(1e-5).0);
        assert!(rp.profile(1.0).0.abs() < 1e-12);
        let h = 1e-7;
        let fd = (rp.profile(0.3 + h).0 - rp.profile(0.3 - h).0) / (2.0 * h);
        assert_relative_eq!(rp.profile(0.3).1, fd, max_relative = 1e-6);
    }
}
