//! The conformal parameter family `Θ_A[f]`, the translated family `Q_A`,
//! the `3n` kernel fields and numerical checks of the identities linking
//! them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{stencil_laplacian4, ResidualField, ScalarField, MAX_DIM};
use crate::geometry::{abs_pow, norm, norm_sq, pow_half_int, rotation_matrix, Dimension, RotationCoords};

/// Parameters `A = (λ, ξ, a, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSet {
    pub lambda: f64,
    pub xi: Vec<f64>,
    pub a: [f64; 2],
    pub theta: RotationCoords,
}

impl ParamSet {
    pub fn new(n: Dimension, lambda: f64, xi: Vec<f64>, a: [f64; 2], theta: RotationCoords) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Parameter(format!("λ = {lambda} must be positive")));
        }
        if xi.len() != n.n() {
            return Err(Error::DimensionMismatch {
                expected: n.n(),
                got: xi.len(),
            });
        }
        if theta.len() != n.angle_count() {
            return Err(Error::DimensionMismatch {
                expected: n.angle_count(),
                got: theta.len(),
            });
        }
        if (a[0] * a[0] + a[1] * a[1]).sqrt() >= 0.5 {
            return Err(Error::Parameter("|a| must be below 1/2".into()));
        }
        Ok(Self { lambda, xi, a, theta })
    }

    pub fn identity(n: Dimension) -> Self {
        Self {
            lambda: 1.0,
            xi: vec![0.0; n.n()],
            a: [0.0; 2],
            theta: RotationCoords::zeros(n),
        }
    }

    /// `λ = d √ε`, `ξ = λ τ`.
    pub fn from_regime(n: Dimension, d: f64, tau: &[f64], a: [f64; 2], theta: RotationCoords, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Parameter(format!("ε = {eps} not in (0, 1)")));
        }
        if !(d > 0.0) {
            return Err(Error::Parameter(format!("d = {d} must be positive")));
        }
        let lambda = d * eps.sqrt();
        Self::new(n, lambda, tau.iter().map(|t| lambda * t).collect(), a, theta)
    }

    pub fn dimension(&self) -> Dimension {
        Dimension::new(self.xi.len()).expect("validated on construction")
    }

    /// `(d, τ)` for a given ε.
    pub fn regime_coords(&self, eps: f64) -> (f64, Vec<f64>) {
        (self.lambda / eps.sqrt(), self.xi.iter().map(|x| x / self.lambda).collect())
    }

    /// Whether `η < d < 1/η`, `|τ| < η`, `|a| < 1/2`.
    pub fn in_regime(&self, eps: f64, eta: f64) -> bool {
        let (d, tau) = self.regime_coords(eps);
        d > eta && d < 1.0 / eta && norm(&tau) < eta && (self.a[0].hypot(self.a[1])) < 0.5
    }

    /// `R_θ a` as an `n`-vector.
    pub fn rotated_a(&self) -> Vec<f64> {
        let n = self.dimension();
        let r = rotation_matrix(&self.theta, n).expect("validated on construction");
        (0..n.n()).map(|i| r[(i, 0)] * self.a[0] + r[(i, 1)] * self.a[1]).collect()
    }
}

/// Regime coordinates `(d, τ, a, θ)` with `λ = d √ε` and `ξ = λ τ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedPoint {
    pub d: f64,
    pub tau: Vec<f64>,
    pub a: [f64; 2],
    pub theta: RotationCoords,
}

impl ReducedPoint {
    pub fn new(n: Dimension, d: f64, tau: Vec<f64>, a: [f64; 2], theta: RotationCoords) -> Result<Self> {
        if !(d > 0.0) {
            return Err(Error::Parameter(format!("d = {d} must be positive")));
        }
        if tau.len() != n.n() {
            return Err(Error::DimensionMismatch {
                expected: n.n(),
                got: tau.len(),
            });
        }
        if theta.len() != n.angle_count() {
            return Err(Error::DimensionMismatch {
                expected: n.angle_count(),
                got: theta.len(),
            });
        }
        if a[0].hypot(a[1]) >= 0.5 {
            return Err(Error::Parameter("|a| must be below 1/2".into()));
        }
        Ok(Self { d, tau, a, theta })
    }

    /// `(d, 0, 0, 0)`.
    pub fn centred(n: Dimension, d: f64) -> Self {
        Self {
            d,
            tau: vec![0.0; n.n()],
            a: [0.0; 2],
            theta: RotationCoords::zeros(n),
        }
    }

    pub fn dimension(&self) -> Dimension {
        Dimension::new(self.tau.len()).expect("validated on construction")
    }

    pub fn params(&self, eps: f64) -> Result<ParamSet> {
        ParamSet::from_regime(self.dimension(), self.d, &self.tau, self.a, self.theta.clone(), eps)
    }

    /// Error unless `η < d < 1/η` and `|τ| < η`.
    pub fn check_box(&self, eta: f64) -> Result<()> {
        if !(self.d > eta && self.d < 1.0 / eta) {
            return Err(Error::Parameter(format!("d = {} outside ({eta}, {})", self.d, 1.0 / eta)));
        }
        if norm(&self.tau) >= eta {
            return Err(Error::Parameter(format!("|τ| = {} not below {eta}", norm(&self.tau))));
        }
        Ok(())
    }
}

/// Map `x ↦ R (v - a|v|²)/m` with `v = (x-ξ)/λ`, `m = 1 - 2a·v + |a|²|v|²`,
/// carrying the conformal weight `λ^{-(n-2)/2} m^{(2-n)/2}`.
#[derive(Debug, Clone)]
pub struct Mobius {
    n: usize,
    lambda: f64,
    xi: Vec<f64>,
    a: Vec<f64>,
    a2: f64,
    rot: Option<Vec<f64>>,
}

pub const SINGULAR_MODULUS: f64 = 1e-12;

struct MobiusEval {
    v: [f64; MAX_DIM],
    u: [f64; MAX_DIM],
    g: [f64; MAX_DIM],
    m: f64,
    weight: f64,
}

impl Mobius {
    pub fn new(lambda: f64, xi: Vec<f64>, a: Vec<f64>, rot: Option<Vec<f64>>) -> Self {
        let a2 = norm_sq(&a);
        Self {
            n: xi.len(),
            lambda,
            xi,
            a,
            a2,
            rot,
        }
    }

    fn rotate(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        match &self.rot {
            None => out[..n].copy_from_slice(&u[..n]),
            Some(r) => {
                for i in 0..n {
                    out[i] = (0..n).map(|j| r[i * n + j] * u[j]).sum();
                }
            }
        }
    }

    fn rotate_t(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        match &self.rot {
            None => out[..n].copy_from_slice(&u[..n]),
            Some(r) => {
                for i in 0..n {
                    out[i] = (0..n).map(|j| r[j * n + i] * u[j]).sum();
                }
            }
        }
    }

    fn eval(&self, x: &[f64]) -> Result<MobiusEval> {
        let n = self.n;
        let mut e = MobiusEval {
            v: [0.0; MAX_DIM],
            u: [0.0; MAX_DIM],
            g: [0.0; MAX_DIM],
            m: 0.0,
            weight: 0.0,
        };
        let mut v2 = 0.0;
        let mut av = 0.0;
        for j in 0..n {
            e.v[j] = (x[j] - self.xi[j]) / self.lambda;
            v2 += e.v[j] * e.v[j];
            av += self.a[j] * e.v[j];
        }
        e.m = 1.0 - 2.0 * av + self.a2 * v2;
        if e.m < SINGULAR_MODULUS {
            return Err(Error::SingularLocus(e.m));
        }
        let mut uu = [0.0; MAX_DIM];
        for j in 0..n {
            e.u[j] = e.v[j] - self.a[j] * v2;
            uu[j] = e.u[j] / e.m;
        }
        self.rotate(&uu, &mut e.g);
        e.weight = 1.0 / (pow_half_int(self.lambda, n - 2) * pow_half_int(e.m, n - 2));
        Ok(e)
    }
}

/// `Θ_A[f]` as a scalar field.
pub struct ThetaTransform<F> {
    map: Mobius,
    f: F,
}

impl<F: ScalarField> ThetaTransform<F> {
    pub fn from_mobius(map: Mobius, f: F) -> Self {
        Self { map, f }
    }

    pub fn inner(&self) -> &F {
        &self.f
    }
}

/// `Θ_A[f](x) = λ^{-(n-2)/2} m^{(2-n)/2} f(R_θ (v - a|v|²)/m)`.
pub fn theta_transform<F: ScalarField>(params: &ParamSet, f: F) -> Result<ThetaTransform<F>> {
    let n = params.dimension();
    if f.dim() != n.n() {
        return Err(Error::DimensionMismatch {
            expected: n.n(),
            got: f.dim(),
        });
    }
    let r = rotation_matrix(&params.theta, n)?;
    let nn = n.n();
    let rot: Vec<f64> = (0..nn * nn).map(|k| r[(k / nn, k % nn)]).collect();
    let mut a = vec![0.0; nn];
    a[0] = params.a[0];
    a[1] = params.a[1];
    Ok(ThetaTransform::from_mobius(
        Mobius::new(params.lambda, params.xi.clone(), a, Some(rot)),
        f,
    ))
}

/// `Q_A(x) = Θ_A[Q](ξ + R_θ⁻¹(x-ξ))`, i.e. the transform with `a` replaced
/// by `R_θ a` and no rotation of the argument.
pub fn q_family<F: ScalarField>(params: &ParamSet, q: F) -> Result<ThetaTransform<F>> {
    let n = params.dimension();
    if q.dim() != n.n() {
        return Err(Error::DimensionMismatch {
            expected: n.n(),
            got: q.dim(),
        });
    }
    Ok(ThetaTransform::from_mobius(
        Mobius::new(params.lambda, params.xi.clone(), params.rotated_a(), None),
        q,
    ))
}

impl<F: ScalarField> ScalarField for ThetaTransform<F> {
    fn dim(&self) -> usize {
        self.map.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.try_value(x).unwrap_or(f64::NAN)
    }

    fn try_value(&self, x: &[f64]) -> Result<f64> {
        let e = self.map.eval(x)?;
        Ok(e.weight * self.f.value(&e.g[..self.map.n]))
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.map.n;
        let Ok(e) = self.map.eval(x) else {
            out[..n].iter_mut().for_each(|o| *o = f64::NAN);
            return;
        };
        let mut gf = [0.0; MAX_DIM];
        let fv = if self.f.has_analytic_gradient() {
            self.f.gradient(&e.g[..n], &mut gf[..n]);
            self.f.value(&e.g[..n])
        } else {
            self.f.gradient(&e.g[..n], &mut gf[..n]);
            self.f.value(&e.g[..n])
        };
        let a = &self.map.a;
        let a2 = self.map.a2;
        // ∇_v m = -2a + 2|a|² v
        let mut dm = [0.0; MAX_DIM];
        for j in 0..n {
            dm[j] = -2.0 * a[j] + 2.0 * a2 * e.v[j];
        }
        let mut h = [0.0; MAX_DIM];
        self.map.rotate_t(&gf, &mut h);
        let ah: f64 = (0..n).map(|j| a[j] * h[j]).sum();
        let uh: f64 = (0..n).map(|j| e.u[j] * h[j]).sum();
        let lam = self.map.lambda;
        let wprime = e.weight * (2.0 - n as f64) / 2.0 / e.m;
        for j in 0..n {
            // Dgᵀ h = (h - 2 v (a·h))/m - ∇m (u·h)/m²
            let dgh = (h[j] - 2.0 * e.v[j] * ah) / e.m - dm[j] * uh / (e.m * e.m);
            out[j] = (wprime * dm[j] * fv + e.weight * dgh) / lam;
        }
    }

    /// Conformal covariance: `ΔΘ_A[f] = λ^{-2} m^{-2} · weight · (Δf)(g)`.
    fn laplacian(&self, x: &[f64]) -> f64 {
        if !self.f.has_analytic_laplacian() {
            return stencil_laplacian4(self, x, 1e-3 * (1.0 + norm(x)) * self.map.lambda.min(1.0));
        }
        match self.map.eval(x) {
            Ok(e) => {
                let n = self.map.n;
                e.weight / (self.map.lambda * self.map.lambda * e.m * e.m) * self.f.laplacian(&e.g[..n])
            }
            Err(_) => f64::NAN,
        }
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_laplacian(&self) -> bool {
        self.f.has_analytic_laplacian()
    }
}

/// Infinitesimal generator `(ẇ, ġ)` of kernel field `alpha` at `y`:
/// `z_α[f] = ẇ f + ġ·∇f`.
pub fn generator(alpha: usize, y: &[f64], wdot: &mut f64, gdot: &mut [f64]) -> Result<()> {
    let n = y.len();
    if alpha >= 3 * n {
        return Err(Error::Index { index: alpha, len: 3 * n });
    }
    gdot[..n].iter_mut().for_each(|g| *g = 0.0);
    *wdot = 0.0;
    let nf = n as f64;
    match alpha {
        0 => {
            *wdot = (nf - 2.0) / 2.0;
            gdot[..n].copy_from_slice(y);
        }
        a if a <= n => gdot[a - 1] = 1.0,
        a if a == n + 1 => {
            gdot[0] = -y[1];
            gdot[1] = y[0];
        }
        a if a == n + 2 || a == n + 3 => {
            let c = a - n - 2;
            let r2 = norm_sq(y);
            *wdot = -(nf - 2.0) * y[c];
            for j in 0..n {
                gdot[j] = -2.0 * y[c] * y[j];
            }
            gdot[c] += r2;
        }
        a if a <= 2 * n + 1 => {
            // n + l + 1 with l = 3..n (1-based l)
            let l = a - n - 2; // 0-based index of y_l
            gdot[0] = -y[l];
            gdot[l] = y[0];
        }
        a => {
            // 2n + l - 1 with l = 3..n
            let l = a - 2 * n; // 0-based index of y_l
            gdot[1] = -y[l];
            gdot[l] = y[1];
        }
    }
    Ok(())
}

/// Kernel field `z_α` built from `Q` and its gradient.
pub struct KernelField<F> {
    alpha: usize,
    q: F,
}

pub fn kernel_field<F: ScalarField>(alpha: usize, q: F) -> Result<KernelField<F>> {
    let n = q.dim();
    if alpha >= 3 * n {
        return Err(Error::Index { index: alpha, len: 3 * n });
    }
    Ok(KernelField { alpha, q })
}

impl<F: ScalarField> KernelField<F> {
    pub fn alpha(&self) -> usize {
        self.alpha
    }
}

impl<F: ScalarField> ScalarField for KernelField<F> {
    fn dim(&self) -> usize {
        self.q.dim()
    }

    fn value(&self, y: &[f64]) -> f64 {
        let n = y.len();
        let mut wdot = 0.0;
        let mut gdot = [0.0; MAX_DIM];
        generator(self.alpha, y, &mut wdot, &mut gdot).expect("index checked on construction");
        let mut g = [0.0; MAX_DIM];
        self.q.gradient(y, &mut g[..n]);
        let mut v = (0..n).map(|j| gdot[j] * g[j]).sum::<f64>();
        if wdot != 0.0 {
            v += wdot * self.q.value(y);
        }
        v
    }
}

/// The residual transported along a generator, `p ẇ R + ġ·∇R`; this is what
/// `L(z_α)` equals exactly when `Q` is only an approximate solution.
pub fn transported_residual<F: ResidualField + ?Sized>(q: &F, alpha: usize, y: &[f64], p: f64) -> Result<f64> {
    let n = y.len();
    let mut wdot = 0.0;
    let mut gdot = [0.0; MAX_DIM];
    generator(alpha, y, &mut wdot, &mut gdot)?;
    let mut gr = [0.0; MAX_DIM];
    q.residual_gradient(y, &mut gr[..n]);
    Ok(p * wdot * q.residual(y) + (0..n).map(|j| gdot[j] * gr[j]).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelResidualReport {
    pub alpha: usize,
    /// `sup (1+|y|)^{n+2} |L z_α|` over the probes.
    pub weighted_lz: f64,
    /// `sup (1+|y|)^{n+2} |p ẇ R + ġ·∇R|` over the probes.
    pub weighted_budget: f64,
    /// `max |L z_α - budget| / scale` where the scale is the size of the
    /// terms entering `L z_α`.
    pub identity_error: f64,
    pub pass: bool,
}

/// Check `L(z_α) = Δz_α + p|Q|^{p-1} z_α` against its residual budget at
/// each probe using a fourth-order stencil.
pub fn kernel_residual_check<F: ResidualField>(q: &F, alpha: usize, probes: &[Vec<f64>], tol: f64) -> Result<KernelResidualReport> {
    let n = q.dim();
    let p = Dimension::new(n)?.p();
    let z = kernel_field(alpha, q)?;
    let mut rep = KernelResidualReport {
        alpha,
        weighted_lz: 0.0,
        weighted_budget: 0.0,
        identity_error: 0.0,
        pass: true,
    };
    for y in probes {
        let r = norm(y);
        let ell = local_scale(q, y);
        let h = 2e-3 * (1.0 + r) * ell;
        let lap = stencil_laplacian4(&z, y, h);
        let zv = z.value(y);
        let qv = q.value(y);
        let pot = p * abs_pow(qv, p - 1.0);
        let lz = lap + pot * zv;
        let budget = transported_residual(q, alpha, y, p)?;
        let w = (1.0 + r).powi(n as i32 + 2);
        // Size of the terms z_α is assembled from, so that cancellation in
        // z_α itself does not inflate the relative error.
        let mut wdot = 0.0;
        let mut gdot = [0.0; MAX_DIM];
        generator(alpha, y, &mut wdot, &mut gdot)?;
        let mut gq = [0.0; MAX_DIM];
        q.gradient(y, &mut gq[..n]);
        let parts = (wdot * qv).abs() + norm(&gdot[..n]) * norm(&gq[..n]);
        let scale = lap.abs() + pot * zv.abs() + parts * (pot + 1.0 / (ell * ell)) + 1e-300;
        let err = (lz - budget).abs() / scale;
        rep.weighted_lz = rep.weighted_lz.max(w * lz.abs());
        rep.weighted_budget = rep.weighted_budget.max(w * budget.abs());
        rep.identity_error = rep.identity_error.max(err);
        if err > tol || w * lz.abs() > w * budget.abs() + tol * w * scale {
            rep.pass = false;
        }
    }
    Ok(rep)
}

/// Length scale on which `q` varies near `y`, estimated from `|∇q|/|q|`
/// and capped to `[1e-2, 1]`.
fn local_scale<F: ScalarField + ?Sized>(q: &F, y: &[f64]) -> f64 {
    let n = y.len();
    let mut g = [0.0; MAX_DIM];
    q.gradient(y, &mut g[..n]);
    let v = q.value(y).abs();
    let gn = norm(&g[..n]);
    if gn == 0.0 {
        1.0
    } else {
        (v / gn).clamp(1e-2, 1.0)
    }
}

/// One parameter direction of the family and the kernel field it produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityEntry {
    pub parameter: String,
    pub alpha: usize,
    /// Sign stated by the reference identities.
    pub stated_sign: f64,
    /// Sign of `⟨∂Θ, z_α⟩` over the probes.
    pub measured_sign: f64,
    /// `‖∂Θ - s z_α‖_∞ / ‖z_α‖_∞` with `s` the measured sign.
    pub relative_error: f64,
    pub sign_flip: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeIdentityReport {
    pub entries: Vec<IdentityEntry>,
}

impl DerivativeIdentityReport {
    pub fn all_match(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn flips(&self) -> Vec<&IdentityEntry> {
        self.entries.iter().filter(|e| e.sign_flip).collect()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Lambda,
    Xi(usize),
    A(usize),
    Theta(usize),
}

fn perturbed(base: &ParamSet, dir: Direction, t: f64) -> ParamSet {
    let mut p = base.clone();
    match dir {
        Direction::Lambda => p.lambda += t,
        Direction::Xi(j) => p.xi[j] += t,
        Direction::A(j) => p.a[j] += t,
        Direction::Theta(j) => p.theta.angles_mut()[j] += t,
    }
    p
}

/// Richardson-extrapolated central difference of `Θ_A[q](x)` at `base`.
fn parameter_derivative<F: ScalarField + Clone>(q: &F, base: &ParamSet, dir: Direction, x: &[f64], h: f64) -> Result<f64> {
    let val = |t: f64| -> Result<f64> { theta_transform(&perturbed(base, dir, t), q.clone())?.try_value(x) };
    let d1 = (val(h)? - val(-h)?) / (2.0 * h);
    let d2 = (val(h / 2.0)? - val(-h / 2.0)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// Compare parameter derivatives of `Θ_A[Q]` at `A0` with the kernel
/// fields. The stated signs are those of the reference identities:
/// `∂_λ → -z0`, `∂_ξj → -z_j`, `∂_a → +z_{n+2}, +z_{n+3}`, `∂_θ12 → z_{n+1}`,
/// `∂_θ1l → z_{n+l+1}`, `∂_θ2l → z_{2n+l-1}`.
pub fn derivative_identity_check<F: ScalarField + Clone>(
    a0: &ParamSet,
    q: &F,
    probes: &[Vec<f64>],
    tol: f64,
) -> Result<DerivativeIdentityReport> {
    let n = a0.dimension().n();
    let mut dirs: Vec<(String, Direction, usize, f64)> = vec![("lambda".into(), Direction::Lambda, 0, -1.0)];
    for j in 0..n {
        dirs.push((format!("xi_{}", j + 1), Direction::Xi(j), j + 1, -1.0));
    }
    dirs.push(("a_1".into(), Direction::A(0), n + 2, 1.0));
    dirs.push(("a_2".into(), Direction::A(1), n + 3, 1.0));
    dirs.push(("theta_12".into(), Direction::Theta(0), n + 1, 1.0));
    for l in 3..=n {
        dirs.push((format!("theta_1{l}"), Direction::Theta(l - 2), n + l + 1, 1.0));
    }
    for l in 3..=n {
        dirs.push((format!("theta_2{l}"), Direction::Theta(n - 1 + l - 3), 2 * n + l - 1, 1.0));
    }
    let mut entries = Vec::with_capacity(dirs.len());
    for (name, dir, alpha, stated) in dirs {
        let z = kernel_field(alpha, q.clone())?;
        let mut fd = Vec::with_capacity(probes.len());
        let mut zs = Vec::with_capacity(probes.len());
        for x in probes {
            fd.push(parameter_derivative(q, a0, dir, x, 1e-3)?);
            zs.push(z.value(x));
        }
        let inner: f64 = fd.iter().zip(&zs).map(|(a, b)| a * b).sum();
        let measured = if inner >= 0.0 { 1.0 } else { -1.0 };
        let zmax = zs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let err = fd
            .iter()
            .zip(&zs)
            .map(|(a, b)| (a - measured * b).abs())
            .fold(0.0, f64::max)
            / zmax.max(f64::MIN_POSITIVE);
        entries.push(IdentityEntry {
            parameter: name,
            alpha,
            stated_sign: stated,
            measured_sign: measured,
            relative_error: err,
            sign_flip: zmax > 0.0 && measured != stated,
            pass: err <= tol,
        });
    }
    Ok(DerivativeIdentityReport { entries })
}

/// `Z_j = Θ_Ã[z_j]` with `Ã = (d, dτ, a, θ)` the ε-rescaled parameters.
pub fn projected_kernel<F: ScalarField>(j: usize, params: &ParamSet, eps: f64, q: F) -> Result<ThetaTransform<KernelField<F>>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("ε = {eps} not in (0, 1)")));
    }
    let (d, tau) = params.regime_coords(eps);
    let rescaled = ParamSet {
        lambda: d,
        xi: tau.iter().map(|t| d * t).collect(),
        a: params.a,
        theta: params.theta.clone(),
    };
    theta_transform(&rescaled, kernel_field(j, q)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crown::{bubble, crown, CrownSpec};
    use crate::field::{fd_gradient, stencil_laplacian4};
    use crate::probes::shell_points;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    fn sample_params(n: Dimension) -> ParamSet {
        let nn = n.n();
        let angles: Vec<f64> = (0..n.angle_count()).map(|i| 0.3 - 0.17 * i as f64).collect();
        let xi: Vec<f64> = (0..nn).map(|i| 0.1 * (i as f64 - 1.0)).collect();
        ParamSet::new(n, 0.7, xi, [0.2, -0.15], RotationCoords::new(n, angles).unwrap()).unwrap()
    }

    #[test]
    fn identity_parameters_are_exact() {
        let q = crown(&CrownSpec::new(dim(4), 8).unwrap());
        let t = theta_transform(&ParamSet::identity(dim(4)), q.clone()).unwrap();
        for x in shell_points(4, 50, 1e-2, 1e2, 1) {
            let a = t.value(&x);
            let b = q.value(&x);
            assert!((a - b).abs() <= 1e-14 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn dilation_branch() {
        let n = dim(3);
        let u = bubble(n);
        let mut p = ParamSet::identity(n);
        p.lambda = 0.3;
        let t = theta_transform(&p, u.clone()).unwrap();
        for x in shell_points(3, 20, 0.01, 10.0, 2) {
            let xs: Vec<f64> = x.iter().map(|v| v / 0.3).collect();
            assert_relative_eq!(t.value(&x), 0.3f64.powf(-0.5) * u.value(&xs), max_relative = 1e-13);
        }
    }

    #[test]
    fn q_family_is_rotated_theta() {
        let n = dim(4);
        let q = crown(&CrownSpec::new(n, 8).unwrap());
        let p = sample_params(n);
        let qa = q_family(&p, q.clone()).unwrap();
        let th = theta_transform(&p, q.clone()).unwrap();
        let r = rotation_matrix(&p.theta, n).unwrap();
        for x in shell_points(4, 30, 0.05, 5.0, 4) {
            let d: Vec<f64> = (0..4).map(|i| x[i] - p.xi[i]).collect();
            let xr: Vec<f64> = (0..4)
                .map(|i| p.xi[i] + (0..4).map(|j| r[(j, i)] * d[j]).sum::<f64>())
                .collect();
            let a = qa.value(&x);
            let b = th.value(&xr);
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} {b}");
        }
        let id = q_family(&ParamSet::identity(n), q.clone()).unwrap();
        assert_eq!(id.value(&[0.3, 0.1, 0.2, 0.0]), q.value(&[0.3, 0.1, 0.2, 0.0]));
    }

    #[test]
    fn pure_rotation_conjugates() {
        let n = dim(3);
        let q = crown(&CrownSpec::new(n, 6).unwrap());
        let mut p = ParamSet::identity(n);
        p.theta = RotationCoords::new(n, vec![0.4, -1.1, 2.0]).unwrap();
        let r = rotation_matrix(&p.theta, n).unwrap();
        let t = theta_transform(&p, q.clone()).unwrap();
        for x in shell_points(3, 20, 0.1, 3.0, 8) {
            let rx: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[(i, j)] * x[j]).sum()).collect();
            assert!((t.value(&x) - q.value(&rx)).abs() < 1e-12 * (1.0 + q.value(&rx).abs()));
        }
    }

    #[test]
    fn transform_gradient_and_laplacian() {
        let n = dim(4);
        let q = crown(&CrownSpec::new(n, 8).unwrap());
        let t = theta_transform(&sample_params(n), q).unwrap();
        for x in shell_points(4, 20, 0.1, 3.0, 6) {
            let mut g = [0.0; 4];
            let mut gf = [0.0; 4];
            t.gradient(&x, &mut g);
            fd_gradient(&t, &x, &mut gf);
            let s = g.iter().map(|v| v.abs()).fold(1e-12, f64::max);
            for i in 0..4 {
                assert!((g[i] - gf[i]).abs() < 1e-5 * s, "{g:?} {gf:?}");
            }
            let lap = t.laplacian(&x);
            let st = stencil_laplacian4(&t, &x, 1e-3);
            assert!((lap - st).abs() < 1e-4 * lap.abs().max(1.0), "{lap} {st}");
        }
    }

    #[test]
    fn singular_locus_is_reported() {
        let n = dim(3);
        let mut p = ParamSet::identity(n);
        p.a = [0.25, 0.0];
        let t = theta_transform(&p, bubble(n)).unwrap();
        // m vanishes at v = a/|a|² = (4, 0, 0).
        assert!(matches!(t.try_value(&[4.0, 0.0, 0.0]), Err(Error::SingularLocus(_))));
        assert!(t.value(&[4.0, 0.0, 0.0]).is_nan());
        assert!(t.try_value(&[0.0; 3]).unwrap().is_finite());
    }

    #[test]
    fn transformed_bubble_solves_equation() {
        let n = dim(3);
        let t = q_family(&sample_params(n), bubble(n)).unwrap();
        for x in shell_points(3, 50, 0.05, 5.0, 9) {
            let v = t.value(&x);
            let st = stencil_laplacian4(&t, &x, 1e-3);
            let rhs = -v.abs().powi(4) * v;
            assert!((st - rhs).abs() < 1e-5 * rhs.abs().max(1e-3), "{st} {rhs}");
        }
    }

    #[test]
    fn kernel_field_index_and_radial_rotation() {
        let u = bubble(dim(3));
        assert!(matches!(kernel_field(9, &u), Err(Error::Index { index: 9, len: 9 })));
        let z = kernel_field(4, &u).unwrap();
        for x in shell_points(3, 20, 0.01, 100.0, 3) {
            assert!(z.value(&x).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_fields_decay_like_fundamental_solution() {
        let q = crown(&CrownSpec::new(dim(4), 8).unwrap());
        for alpha in 0..12 {
            let z = kernel_field(alpha, &q).unwrap();
            let mut sup: f64 = 0.0;
            for x in shell_points(4, 200, 10.0, 1e3, 5) {
                sup = sup.max((1.0 + norm_sq(&x)) * z.value(&x).abs());
            }
            assert!(sup.is_finite() && sup < 1e3, "alpha {alpha}: {sup}");
        }
    }

    #[test]
    fn bubble_kernel_fields_solve_linearised_equation() {
        let u = bubble(dim(4));
        let probes = shell_points(4, 30, 0.05, 10.0, 12);
        for alpha in 0..12 {
            let rep = kernel_residual_check(&u, alpha, &probes, 1e-5).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn crown_kernel_residual_equals_transported_budget() {
        let q = crown(&CrownSpec::new(dim(3), 6).unwrap());
        let probes = shell_points(3, 30, 0.05, 10.0, 13);
        for alpha in 0..9 {
            let rep = kernel_residual_check(&q, alpha, &probes, 1e-5).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn derivative_identities_and_sign_of_kelvin_directions() {
        let n = dim(4);
        let q = Arc::new(crown(&CrownSpec::new(n, 8).unwrap()));
        let probes = shell_points(4, 20, 0.1, 3.0, 21);
        let rep = derivative_identity_check(&ParamSet::identity(n), &q, &probes, 1e-5).unwrap();
        assert!(rep.all_match(), "{rep:#?}");
        let flips: Vec<&str> = rep.flips().iter().map(|e| e.parameter.as_str()).collect();
        assert_eq!(flips, vec!["a_1", "a_2"]);
    }

    #[test]
    fn projected_kernel_rescaling() {
        let n = dim(3);
        let q = crown(&CrownSpec::new(n, 6).unwrap());
        let eps = 1e-3;
        let p = ParamSet::from_regime(n, 1.3, &[0.05, -0.02, 0.01], [0.1, 0.05], RotationCoords::new(n, vec![0.2, 0.1, -0.3]).unwrap(), eps).unwrap();
        let zj = projected_kernel(2, &p, eps, &q).unwrap();
        let direct = theta_transform(&p, kernel_field(2, &q).unwrap()).unwrap();
        let pw = 1.0 / (n.p() - 1.0);
        for y in shell_points(3, 30, 0.05, 20.0, 2) {
            let x: Vec<f64> = y.iter().map(|v| v * eps.sqrt()).collect();
            let a = eps.powf(pw) * direct.value(&x);
            let b = zj.value(&y);
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} {b}");
        }
        let id = projected_kernel(0, &ParamSet::from_regime(n, 1.0, &[0.0; 3], [0.0; 2], RotationCoords::zeros(n), 0.25).unwrap(), 0.25, &q).unwrap();
        let z0 = kernel_field(0, &q).unwrap();
        assert!((id.value(&[0.3, 0.2, 0.1]) - z0.value(&[0.3, 0.2, 0.1])).abs() < 1e-14);
        let _ = PI;
    }
}
