//! Bubbles, sums of bubbles and the crown profile `U - Σ U_j`.

use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{ResidualField, ScalarField, MAX_DIM};
use crate::geometry::{abs_pow, norm, norm_sq, pow_half_int, Dimension};
use crate::probes::{antipodal_directions, directions_with_axes};

/// One term `w · s^{-(n-2)/2} U((y - c)/s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BubbleTerm {
    pub center: Vec<f64>,
    pub scale: f64,
    pub weight: f64,
}

/// A finite signed sum of translated and dilated bubbles, with analytic
/// gradient, Laplacian and equation residual.
#[derive(Debug, Clone)]
pub struct BubbleSum {
    n: Dimension,
    alpha: f64,
    p: f64,
    centers: Vec<f64>,
    scale_sq: Vec<f64>,
    coef: Vec<f64>,
    weights: Vec<f64>,
    terms: Vec<BubbleTerm>,
}

impl BubbleSum {
    pub fn new(n: Dimension, terms: Vec<BubbleTerm>) -> Result<Self> {
        let nn = n.n();
        if nn > MAX_DIM {
            return Err(Error::Parameter(format!("dimension above {MAX_DIM}")));
        }
        let alpha = n.alpha();
        let mut centers = Vec::with_capacity(terms.len() * nn);
        let mut scale_sq = Vec::with_capacity(terms.len());
        let mut coef = Vec::with_capacity(terms.len());
        let mut weights = Vec::with_capacity(terms.len());
        for t in &terms {
            if t.center.len() != nn {
                return Err(Error::DimensionMismatch {
                    expected: nn,
                    got: t.center.len(),
                });
            }
            if !(t.scale > 0.0) {
                return Err(Error::Parameter("bubble scale must be positive".into()));
            }
            centers.extend_from_slice(&t.center);
            scale_sq.push(t.scale * t.scale);
            coef.push(t.weight * alpha * pow_half_int(t.scale, nn - 2));
            weights.push(t.weight);
        }
        Ok(Self {
            n,
            alpha,
            p: n.p(),
            centers,
            scale_sq,
            coef,
            weights,
            terms,
        })
    }

    pub fn dimension(&self) -> Dimension {
        self.n
    }

    pub fn terms(&self) -> &[BubbleTerm] {
        &self.terms
    }

    /// Value and gradient in one pass.
    pub fn value_and_gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n.n();
        let m = n - 2;
        grad[..n].iter_mut().for_each(|g| *g = 0.0);
        let mut val = 0.0;
        let mut diff = [0.0; MAX_DIM];
        for (i, c) in self.centers.chunks_exact(n).enumerate() {
            let mut d2 = self.scale_sq[i];
            for j in 0..n {
                diff[j] = y[j] - c[j];
                d2 += diff[j] * diff[j];
            }
            let u = self.coef[i] / pow_half_int(d2, m);
            val += u;
            let s = -(m as f64) * u / d2;
            for j in 0..n {
                grad[j] += s * diff[j];
            }
        }
        val
    }
}

impl ScalarField for BubbleSum {
    fn dim(&self) -> usize {
        self.n.n()
    }

    fn value(&self, y: &[f64]) -> f64 {
        let n = self.n.n();
        let mut val = 0.0;
        for (i, c) in self.centers.chunks_exact(n).enumerate() {
            let d2 = self.scale_sq[i] + c.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum::<f64>();
            val += self.coef[i] / pow_half_int(d2, n - 2);
        }
        val
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        self.value_and_gradient(y, out);
    }

    /// Each bubble solves `ΔU_i = -U_i^p`; for weight `w` this gives
    /// `-w |U_i|^p` after accounting for the sign of `w`.
    fn laplacian(&self, y: &[f64]) -> f64 {
        // w U_i with U_i > 0: Δ(w U_i) = -w U_i^p and U_i = coef_i/(w D^{m/2}).
        let n = self.n.n();
        let mut acc = 0.0;
        for (i, c) in self.centers.chunks_exact(n).enumerate() {
            let d2 = self.scale_sq[i] + c.iter().zip(y).map(|(a, b)| (b - a).powi(2)).sum::<f64>();
            let u = (self.coef[i] / self.weights[i]) / pow_half_int(d2, n - 2);
            acc -= self.weights[i] * u.powf(self.p);
        }
        acc
    }

    fn has_analytic_gradient(&self) -> bool {
        true
    }

    fn has_analytic_laplacian(&self) -> bool {
        true
    }
}

impl ResidualField for BubbleSum {
    fn residual(&self, y: &[f64]) -> f64 {
        let q = self.value(y);
        self.laplacian(y) + abs_pow(q, self.p - 1.0) * q
    }

    fn residual_gradient(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n.n();
        let mut gq = [0.0; MAX_DIM];
        let q = self.value_and_gradient(y, &mut gq);
        let k = self.p * abs_pow(q, self.p - 1.0);
        for j in 0..n {
            out[j] = k * gq[j];
        }
        let mut diff = [0.0; MAX_DIM];
        for (i, c) in self.centers.chunks_exact(n).enumerate() {
            let mut d2 = self.scale_sq[i];
            for j in 0..n {
                diff[j] = y[j] - c[j];
                d2 += diff[j] * diff[j];
            }
            let u = (self.coef[i] / self.weights[i]) / pow_half_int(d2, n - 2);
            // ∇(-w U^p) = -w p U^{p-1} ∇U, ∇U = -(n-2) U diff / D
            let s = self.weights[i] * self.p * u.powf(self.p) * (n as f64 - 2.0) / d2;
            for j in 0..n {
                out[j] += s * diff[j];
            }
        }
        let _ = self.alpha;
    }
}

/// The standard bubble `α_n (1 + |y|²)^{-(n-2)/2}`.
pub fn bubble(n: Dimension) -> BubbleSum {
    translated_bubble(n, vec![0.0; n.n()], 1.0).expect("unit bubble is always valid")
}

/// `s^{-(n-2)/2} U((y - c)/s)`.
pub fn translated_bubble(n: Dimension, center: Vec<f64>, scale: f64) -> Result<BubbleSum> {
    BubbleSum::new(
        n,
        vec![BubbleTerm {
            center,
            scale,
            weight: 1.0,
        }],
    )
}

/// Outcome of the scale-balance equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuSolution {
    pub mu: f64,
    /// Coefficient `Σ_{j≥2} (1 - cos θ_j)^{-(n-2)/2}`.
    pub interaction_sum: f64,
    pub residual: f64,
    pub in_regime: bool,
}

fn interaction_sum(n: Dimension, k: usize) -> f64 {
    let e = (n.n() as f64 - 2.0) / 2.0;
    // 1 - cos θ = 2 sin²(θ/2), accurate for small angles.
    (1..k)
        .map(|j| {
            let half = PI * j as f64 / k as f64;
            (2.0 * half.sin().powi(2)).powf(-e)
        })
        .sum()
}

/// Solve `S μ^{(n-2)/2} = 1` where `S` sums the interactions of one ring
/// bubble with the other `k - 1`.
pub fn solve_mu(n: Dimension, k: usize) -> Result<MuSolution> {
    if k < 2 {
        return Err(Error::Parameter(format!("need at least 2 ring bubbles, got {k}")));
    }
    let s = interaction_sum(n, k);
    let e = (n.n() as f64 - 2.0) / 2.0;
    let mu = s.powf(-1.0 / e);
    Ok(MuSolution {
        mu,
        interaction_sum: s,
        residual: s * mu.powf(e) - 1.0,
        in_regime: mu > 0.0 && mu < 1.0,
    })
}

/// Parameters of one crown profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrownSpec {
    pub n: Dimension,
    pub k: usize,
    pub mu: f64,
}

pub const DEFAULT_K_MIN: usize = 5;

impl CrownSpec {
    pub fn new(n: Dimension, k: usize) -> Result<Self> {
        Self::with_k_min(n, k, DEFAULT_K_MIN)
    }

    pub fn with_k_min(n: Dimension, k: usize, k_min: usize) -> Result<Self> {
        if k < k_min {
            return Err(Error::Parameter(format!("k = {k} below the minimum {k_min}")));
        }
        let sol = solve_mu(n, k)?;
        if !sol.in_regime {
            return Err(Error::Regime(format!("scale μ = {} is not in (0, 1)", sol.mu)));
        }
        Ok(Self { n, k, mu: sol.mu })
    }

    /// Ring centres `√(1-μ²)(cos θ_j, sin θ_j, 0, …)`.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let r = (1.0 - self.mu * self.mu).sqrt();
        (0..self.k)
            .map(|j| {
                let t = 2.0 * PI * j as f64 / self.k as f64;
                let mut c = vec![0.0; self.n.n()];
                c[0] = r * t.cos();
                c[1] = r * t.sin();
                c
            })
            .collect()
    }

    /// Far-field constant predicted by summing the bubble tails.
    pub fn predicted_far_field(&self) -> f64 {
        self.n.alpha() * (1.0 - self.k as f64 * pow_half_int(self.mu, self.n.n() - 2))
    }
}

/// The crown `U - Σ_j μ^{-(n-2)/2} U((y - ξ_j)/μ)`.
pub fn crown(spec: &CrownSpec) -> BubbleSum {
    let n = spec.n.n();
    let mut terms = vec![BubbleTerm {
        center: vec![0.0; n],
        scale: 1.0,
        weight: 1.0,
    }];
    terms.extend(spec.centers().into_iter().map(|c| BubbleTerm {
        center: c,
        scale: spec.mu,
        weight: -1.0,
    }));
    BubbleSum::new(spec.n, terms).expect("crown terms are valid by construction")
}

/// Kelvin image `|y|^{2-n} f(y/|y|²)` evaluated at `y`.
pub fn kelvin_image<F: ScalarField + ?Sized>(f: &F, y: &[f64]) -> f64 {
    let n = y.len();
    let r2 = norm_sq(y);
    let mut z = [0.0; MAX_DIM];
    for j in 0..n {
        z[j] = y[j] / r2;
    }
    f.value(&z[..n]) / pow_half_int(r2, n - 2)
}

/// `max |Q(y) - |y|^{2-n}Q(y/|y|²)| / (1 + |Q(y)|)` over `sample`.
pub fn kelvin_defect<F: ScalarField + ?Sized>(q: &F, sample: &[Vec<f64>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in sample {
        if norm_sq(y) == 0.0 {
            return Err(Error::Singularity("Kelvin defect sampled at the origin".into()));
        }
        let v = q.value(y);
        worst = worst.max((v - kelvin_image(q, y)).abs() / (1.0 + v.abs()));
    }
    Ok(worst)
}

/// `lim |y|^{n-2} Q(y)` by ratio-10 Richardson extrapolation over
/// `R ∈ {10², 10³, 10⁴}`, averaged over antipodal directions.
pub fn far_field_constant<F: ScalarField + ?Sized>(q: &F) -> Result<f64> {
    let n = q.dim();
    let dirs = antipodal_directions(n, 24, 0xfa7);
    let g = |r: f64| -> f64 {
        let mut buf = [0.0; MAX_DIM];
        let mut acc = 0.0;
        for d in &dirs {
            for j in 0..n {
                buf[j] = r * d[j];
            }
            acc += q.value(&buf[..n]);
        }
        acc / dirs.len() as f64 * r.powi(n as i32 - 2)
    };
    let (g2, g3, g4) = (g(1e2), g(1e3), g(1e4));
    let l1 = (100.0 * g3 - g2) / 99.0;
    let l2 = (100.0 * g4 - g3) / 99.0;
    let spread = (l1 - l2).abs() / l2.abs().max(f64::MIN_POSITIVE);
    if !(spread <= 1e-3) {
        return Err(Error::Estimation(spread));
    }
    Ok(l2)
}

/// Radii bracketing the negative region of a sign-changing profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignRadii {
    /// `Q > 0` on `|y| ≤ r_inner` along every probed direction.
    pub r_inner: f64,
    /// `Q > 0` on `|y| ≥ r_outer` along every probed direction.
    pub r_outer: f64,
}

fn bisect_sign<F: ScalarField + ?Sized>(q: &F, dir: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    // Invariant: sign at lo differs from sign at hi.
    let n = dir.len();
    let at = |t: f64| {
        let mut b = [0.0; MAX_DIM];
        for j in 0..n {
            b[j] = t * dir[j];
        }
        q.value(&b[..n])
    };
    let s_lo = at(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (at(mid) > 0.0) == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sign radii along `e1` (through the first ring centre) and 64 further
/// probe directions.
pub fn sign_radii<F: ScalarField + ?Sized>(q: &F) -> Result<SignRadii> {
    let n = q.dim();
    let mut dirs = directions_with_axes(n, 64, 0x5161);
    dirs.sort_by_key(|d| if d[0] == 1.0 { 0 } else { 1 });
    let mut grid: Vec<f64> = (0..=8000).map(|i| 4.0 * i as f64 / 8000.0).collect();
    grid.extend((1..=400).map(|i| 4.0 * (250f64).powf(i as f64 / 400.0)));
    let mut r_in = f64::INFINITY;
    let mut r_out: f64 = 0.0;
    let mut found = false;
    let mut buf = vec![0.0; n];
    for d in &dirs {
        let mut prev_t = grid[0];
        let mut prev_pos = q.value(&buf.iter().map(|_| 0.0).collect::<Vec<_>>()) > 0.0;
        let mut first: Option<f64> = None;
        let mut last: Option<f64> = None;
        for &t in &grid[1..] {
            for j in 0..n {
                buf[j] = t * d[j];
            }
            let pos = q.value(&buf) > 0.0;
            if pos != prev_pos {
                let root = bisect_sign(q, d, prev_t, t);
                if first.is_none() {
                    first = Some(root);
                }
                last = Some(root);
            }
            prev_t = t;
            prev_pos = pos;
        }
        if let (Some(a), Some(b)) = (first, last) {
            found = true;
            r_in = r_in.min(a);
            r_out = r_out.max(b);
        }
    }
    if !found {
        return Err(Error::DegenerateProfile);
    }
    Ok(SignRadii {
        r_inner: r_in,
        r_outer: r_out,
    })
}

/// `sup |ΔQ + |Q|^{p-1}Q| (1+|y|)^{n+2}` over `probes`.
pub fn residual_budget<F: ResidualField + ?Sized>(q: &F, probes: &[Vec<f64>]) -> f64 {
    let n = q.dim() as i32;
    probes
        .iter()
        .map(|y| q.residual(y).abs() * (1.0 + norm(y)).powi(n + 2))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{fd_gradient, stencil_laplacian4};
    use crate::probes::shell_points;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn bubble_at_origin() {
        assert_relative_eq!(bubble(dim(3)).value(&[0.0; 3]), 3f64.powf(0.25), max_relative = 1e-15);
        assert_relative_eq!(bubble(dim(4)).value(&[0.0; 4]), 8f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn bubble_solves_equation() {
        let d = dim(5);
        let u = bubble(d);
        for y in shell_points(5, 40, 1e-2, 10.0, 3) {
            let up = u.value(&y).powf(d.p());
            let lap = stencil_laplacian4(&u, &y, 1e-3 * (1.0 + norm(&y)));
            assert!((lap + up).abs() < 1e-8 * up.max(1e-300) + 1e-9 * u.value(&y), "{lap} {up}");
            assert!(u.residual(&y).abs() < 1e-12 * up);
        }
    }

    #[test]
    fn mu_examples() {
        let s = solve_mu(dim(4), 2).unwrap();
        assert_relative_eq!(s.mu, 2.0, max_relative = 1e-14);
        assert!(!s.in_regime);
        assert!(matches!(CrownSpec::new(dim(4), 2), Err(Error::Parameter(_))));
        assert!(matches!(CrownSpec::with_k_min(dim(4), 2, 2), Err(Error::Regime(_))));
        assert!(matches!(solve_mu(dim(4), 1), Err(Error::Parameter(_))));
        // In four dimensions the interaction sum is (k²-1)/6.
        for k in [5, 8, 16, 32] {
            let mu = solve_mu(dim(4), k).unwrap().mu;
            assert_relative_eq!(mu, 6.0 / (k * k - 1) as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn mu_matches_bisection() {
        let n = dim(3);
        let s = solve_mu(n, 100).unwrap();
        let f = |mu: f64| interaction_sum(n, 100) * mu.sqrt() - 1.0;
        let (mut lo, mut hi) = (1e-12, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!((s.mu - lo).abs() < 1e-14);
        assert!(s.residual.abs() < 1e-14);
    }

    #[test]
    fn mu_rate_and_monotonicity() {
        let n = dim(4);
        let mut prev = 1.0;
        for k in 5..200 {
            let mu = solve_mu(n, k).unwrap().mu;
            assert!(mu < prev);
            prev = mu;
            let scaled = mu * (k * k) as f64;
            assert!(scaled > 5.0 && scaled < 8.0);
        }
    }

    #[test]
    fn crown_value_at_ring_centre() {
        let spec = CrownSpec::new(dim(4), 16).unwrap();
        let q = crown(&spec);
        let xi = &spec.centers()[0];
        let alpha = spec.n.alpha();
        let dominant = -alpha / spec.mu;
        let rest: f64 = {
            let u = bubble(spec.n).value(xi);
            let others: f64 = spec.centers()[1..]
                .iter()
                .map(|c| {
                    translated_bubble(spec.n, c.clone(), spec.mu).unwrap().value(xi)
                })
                .sum();
            u - others
        };
        assert_relative_eq!(q.value(xi), dominant + rest, max_relative = 1e-13);
        assert!(q.value(xi) < 0.0);
    }

    #[test]
    fn crown_gradient_and_laplacian() {
        let spec = CrownSpec::new(dim(4), 8).unwrap();
        let q = crown(&spec);
        for y in shell_points(4, 30, 0.1, 5.0, 11) {
            let mut g = [0.0; 4];
            let mut gf = [0.0; 4];
            q.gradient(&y, &mut g);
            fd_gradient(&q, &y, &mut gf);
            let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for i in 0..4 {
                assert!((g[i] - gf[i]).abs() <= 1e-5 * scale);
            }
            let lap = q.laplacian(&y);
            let st = stencil_laplacian4(&q, &y, 1e-3);
            assert!((lap - st).abs() <= 1e-4 * lap.abs().max(1e-3), "{lap} {st}");
        }
    }

    #[test]
    fn crown_residual_gradient() {
        let spec = CrownSpec::new(dim(3), 6).unwrap();
        let q = crown(&spec);
        let r = crate::field::FnField::new(3, |y: &[f64]| q.residual(y));
        for y in shell_points(3, 20, 0.1, 4.0, 5) {
            let mut g = [0.0; 3];
            let mut gf = [0.0; 3];
            q.residual_gradient(&y, &mut g);
            fd_gradient(&r, &y, &mut gf);
            let scale = g.iter().map(|v| v.abs()).fold(1e-8, f64::max);
            for i in 0..3 {
                assert!((g[i] - gf[i]).abs() <= 1e-5 * scale, "{g:?} {gf:?}");
            }
        }
    }

    #[test]
    fn kelvin_defects() {
        let sample = shell_points(4, 64, 1e-2, 1e2, 2);
        assert!(kelvin_defect(&bubble(dim(4)), &sample).unwrap() < 1e-12);
        let spec = CrownSpec::new(dim(4), 16).unwrap();
        assert!(kelvin_defect(&crown(&spec), &sample).unwrap() < 1e-12);
        let shifted = translated_bubble(dim(4), vec![1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert!(kelvin_defect(&shifted, &sample).unwrap() > 1e-2);
    }

    #[test]
    fn far_fields() {
        for n in 3..6 {
            let d = dim(n);
            assert_relative_eq!(far_field_constant(&bubble(d)).unwrap(), d.alpha(), max_relative = 1e-9);
            let mut c = vec![0.0; n];
            c[0] = 1.0;
            let shifted = translated_bubble(d, c, 1.0).unwrap();
            assert_relative_eq!(far_field_constant(&shifted).unwrap(), d.alpha(), max_relative = 1e-6);
        }
        for (n, k) in [(3, 8), (4, 8), (4, 16), (5, 12)] {
            let spec = CrownSpec::new(dim(n), k).unwrap();
            assert_relative_eq!(
                far_field_constant(&crown(&spec)).unwrap(),
                spec.predicted_far_field(),
                max_relative = 1e-7
            );
        }
    }

    #[test]
    fn sign_radii_bracket_ring() {
        let spec = CrownSpec::new(dim(4), 16).unwrap();
        let q = crown(&spec);
        let r = sign_radii(&q).unwrap();
        let ring = (1.0 - spec.mu * spec.mu).sqrt();
        assert!(r.r_inner > 0.0 && r.r_inner < ring - spec.mu);
        assert!(r.r_outer > ring + spec.mu);
        assert!(r.r_inner < 1.0 && r.r_outer > 1.0);
        assert!(q.value(&[0.0; 4]) > 0.0);
        assert_eq!(sign_radii(&bubble(dim(4))), Err(Error::DegenerateProfile));
    }

    #[test]
    fn residual_budget_shrinks_with_k() {
        let probes = shell_points(4, 200, 0.05, 20.0, 17);
        let b: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&k| residual_budget(&crown(&CrownSpec::new(dim(4), k).unwrap()), &probes))
            .collect();
        assert!(b.iter().all(|v| v.is_finite()));
        assert!(residual_budget(&bubble(dim(4)), &probes) < 1e-10);
        assert!(b[2] < b[0], "{b:?}");
    }

    proptest! {
        #[test]
        fn crown_dihedral_symmetry(y in prop::collection::vec(-2.0f64..2.0, 4), j in 0usize..8) {
            let spec = CrownSpec::new(dim(4), 8).unwrap();
            let q = crown(&spec);
            let t = 2.0 * PI * j as f64 / 8.0;
            let (s, c) = t.sin_cos();
            let ry = [c * y[0] - s * y[1], s * y[0] + c * y[1], y[2], y[3]];
            let v = q.value(&y);
            prop_assert!((q.value(&ry) - v).abs() <= 1e-12 * (1.0 + v.abs()));
            for i in 1..4 {
                let mut fy = y.clone();
                fy[i] = -fy[i];
                prop_assert!((q.value(&fy) - v).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }
}
