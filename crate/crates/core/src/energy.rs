//! Energies on `R^n` and on the punctured ball, the constants entering the
//! reduced functional, and Gram matrices of the kernel fields.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::crown::{bubble, crown, BubbleSum, CrownSpec};
use crate::error::{Error, Result};
use crate::field::{ScalarField, MAX_DIM};
use crate::geometry::{abs_pow, sphere_area, Dimension};
use crate::kelvin::generator;
use crate::quadrature::axial::{integrate_axial, AxialSpec, YPrime};
use crate::quadrature::spherical::{integrate_radial, integrate_rn_vec, integrate_shell_vec};
use crate::quadrature::{Estimate, QuadratureSpec};

/// Energy split into its two integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParts {
    /// `∫ |∇u|²`
    pub dirichlet: Estimate,
    /// `∫ |u|^{p+1}`
    pub potential: Estimate,
    /// `½ ∫|∇u|² - ∫|u|^{p+1}/(p+1)`
    pub energy: Estimate,
}

fn assemble(p: f64, v: &[f64], e: &[f64]) -> EnergyParts {
    EnergyParts {
        dirichlet: Estimate::new(v[0], e[0]),
        potential: Estimate::new(v[1], e[1]),
        energy: Estimate::new(0.5 * v[0] - v[1] / (p + 1.0), 0.5 * e[0] + e[1] / (p + 1.0)),
    }
}

fn density<F: ScalarField + ?Sized>(u: &F, p: f64) -> impl Fn(&[f64], &mut [f64]) + '_ {
    move |y: &[f64], out: &mut [f64]| {
        let n = y.len();
        let mut g = [0.0; MAX_DIM];
        u.gradient(y, &mut g[..n]);
        out[0] = g[..n].iter().map(|v| v * v).sum();
        out[1] = abs_pow(u.value(y), p + 1.0);
    }
}

/// `E(u)` over `R^n` by hyperspherical cubature with Kelvin-mapped exterior.
pub fn energy_entire<F: ScalarField + ?Sized>(u: &F, spec: &QuadratureSpec) -> Result<EnergyParts> {
    let n = Dimension::new(u.dim())?;
    let (v, e) = integrate_rn_vec(n.n(), 2, density(u, n.p()), spec, &[])?;
    Ok(assemble(n.p(), &v, &e))
}

/// `E(U_*)` for the crown in reduced coordinates.
pub fn energy_crown(spec: &CrownSpec, quad: &QuadratureSpec) -> Result<EnergyParts> {
    let q = crown(spec);
    let p = spec.n.p();
    let (v, e) = integrate_axial(
        spec.n.n(),
        2,
        density(&q, p),
        &AxialSpec::for_crown(spec, YPrime::Invariant),
        &quad.cubature(),
    )?;
    Ok(assemble(p, &v, &e))
}

/// Energy on the shell `r_in < |y| < r_out`.
pub fn energy_shell<F: ScalarField + ?Sized>(
    u: &F,
    r_in: f64,
    r_out: f64,
    spec: &QuadratureSpec,
    radial_cuts: &[f64],
) -> Result<EnergyParts> {
    let n = Dimension::new(u.dim())?;
    let (v, e) = integrate_shell_vec(n.n(), 2, density(u, n.p()), r_in, r_out, spec, radial_cuts)?;
    Ok(assemble(n.p(), &v, &e))
}

/// `J_ε(u)` on `Ω_ε = B(0,1) \ B(0,ε)`.
pub fn energy_domain<F: ScalarField + ?Sized>(u: &F, eps: f64, spec: &QuadratureSpec) -> Result<EnergyParts> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("ε = {eps} not in (0, 1)")));
    }
    energy_shell(u, eps, 1.0, spec, &[])
}

/// `J_ε` for a radial profile given as `r ↦ (u(r), u'(r))`.
pub fn energy_domain_radial<G>(n: Dimension, profile: G, eps: f64, spec: &QuadratureSpec) -> Result<Estimate>
where
    G: Fn(f64) -> (f64, f64),
{
    let p = n.p();
    let d = integrate_radial(n.n(), |r| profile(r).1.powi(2), eps, 1.0, spec)?;
    let pot = integrate_radial(n.n(), |r| abs_pow(profile(r).0, p + 1.0), eps, 1.0, spec)?;
    Ok(Estimate::new(0.5 * d.value - pot.value / (p + 1.0), 0.5 * d.error + pot.error / (p + 1.0)))
}

/// `c̃` as printed in the reference closed form,
/// `2^{(n-4)/2} n (n-2)² Γ(n/2)² / Γ(n+2)`.
pub fn c_tilde_reference(n: Dimension) -> f64 {
    let nf = n.n() as f64;
    2f64.powf((nf - 4.0) / 2.0) * nf * (nf - 2.0).powi(2) * gamma(nf / 2.0).powi(2) / gamma(nf + 2.0)
}

/// Exact value of `∫ U^{p-1} z₀²` for the bubble normalised by `α_n`,
/// `α_n^{p+1} |S^{n-1}| n (n-2)² Γ(n/2)² / (8 Γ(n+2))`.
pub fn c_tilde_exact(n: Dimension) -> f64 {
    let nf = n.n() as f64;
    n.alpha().powf(n.p() + 1.0) * sphere_area(n.n() - 1) * nf * (nf - 2.0).powi(2) * gamma(nf / 2.0).powi(2)
        / (8.0 * gamma(nf + 2.0))
}

/// `S_n = (1/n) ∫ U^{p+1} = α^{p+1}|S^{n-1}| Γ(n/2)² / (2 n Γ(n))`.
pub fn s_n_exact(n: Dimension) -> f64 {
    let nf = n.n() as f64;
    n.alpha().powf(n.p() + 1.0) * sphere_area(n.n() - 1) * gamma(nf / 2.0).powi(2) / (2.0 * nf * gamma(nf))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyConstants {
    pub n: usize,
    /// `(1/n) ∫ |Q|^{p+1}` for the profile in use.
    pub c1: f64,
    /// `∫ |Q|^p` for the profile in use.
    pub c2: f64,
    /// `∫ |Q|^{p-1} Q`.
    pub c2_signed: f64,
    /// Per-bubble constant `(1/n) ∫ U^{p+1}`.
    pub s_n: f64,
    /// `∫ U^{p-1} z₀²` by quadrature.
    pub c_tilde: f64,
    pub c_tilde_error: f64,
    /// `∫ U^{p-1} z_1²` by quadrature (equal to `c_tilde`).
    pub c_tilde_translation: f64,
    /// The reference closed form.
    pub c_tilde_reference: f64,
    /// The closed form of the integral as actually normalised.
    pub c_tilde_exact: f64,
    pub alpha_n: f64,
    pub gamma_n: f64,
    /// Number of ring bubbles, `None` for the single bubble.
    pub k: Option<usize>,
}

impl EnergyConstants {
    /// Relative gap between quadrature and the reference closed form.
    pub fn reference_gap(&self) -> f64 {
        (self.c_tilde - self.c_tilde_reference).abs() / self.c_tilde_reference
    }
}

fn bubble_c_tilde(n: Dimension, spec: &QuadratureSpec) -> Result<(Estimate, Estimate)> {
    let nf = n.n() as f64;
    let alpha = n.alpha();
    let p = n.p();
    let u = |r: f64| alpha * (1.0 + r * r).powf(-(nf - 2.0) / 2.0);
    let z0 = |r: f64| (nf - 2.0) / 2.0 * alpha * (1.0 + r * r).powf(-nf / 2.0) * (1.0 - r * r);
    let du = |r: f64| -(nf - 2.0) * alpha * r * (1.0 + r * r).powf(-nf / 2.0);
    let c0 = integrate_radial(n.n(), |r| u(r).powf(p - 1.0) * z0(r).powi(2), 0.0, f64::INFINITY, spec)?;
    // ∫ U^{p-1} (∂_1 U)² = (1/n) ∫ U^{p-1} |U'|².
    let c1 = integrate_radial(n.n(), |r| u(r).powf(p - 1.0) * du(r).powi(2) / nf, 0.0, f64::INFINITY, spec)?;
    Ok((c0, c1))
}

/// Constants for the single bubble (`crown = None`) or a crown profile.
pub fn constants(n: Dimension, crown_spec: Option<&CrownSpec>, spec: &QuadratureSpec) -> Result<EnergyConstants> {
    let p = n.p();
    let nf = n.n() as f64;
    let u = bubble(n);
    let up = |r: f64, e: f64| abs_pow(u.value(&radial_point(n.n(), r)), e);
    let s_n = integrate_radial(n.n(), |r| up(r, p + 1.0), 0.0, f64::INFINITY, spec)?.value / nf;
    let (ct, ct1) = bubble_c_tilde(n, spec)?;
    let exact = c_tilde_exact(n);
    if (ct.value - exact).abs() > 1e-4 * exact {
        return Err(Error::Consistency(format!(
            "quadrature c̃ = {} disagrees with its closed form {exact}",
            ct.value
        )));
    }
    let (c1, c2, c2s, k) = match crown_spec {
        None => {
            let c2 = integrate_radial(n.n(), |r| up(r, p), 0.0, f64::INFINITY, spec)?.value;
            (s_n, c2, c2, None)
        }
        Some(cs) => {
            if cs.n != n {
                return Err(Error::DimensionMismatch {
                    expected: n.n(),
                    got: cs.n.n(),
                });
            }
            let q = crown(cs);
            let (v, _) = integrate_axial(
                n.n(),
                3,
                |y, out| {
                    let v = q.value(y);
                    let a = v.abs();
                    out[0] = abs_pow(a, p + 1.0);
                    out[1] = abs_pow(a, p);
                    out[2] = abs_pow(a, p - 1.0) * v;
                },
                &AxialSpec::for_crown(cs, YPrime::Invariant),
                &spec.cubature(),
            )?;
            (v[0] / nf, v[1], v[2], Some(cs.k))
        }
    };
    Ok(EnergyConstants {
        n: n.n(),
        c1,
        c2,
        c2_signed: c2s,
        s_n,
        c_tilde: ct.value,
        c_tilde_error: ct.error,
        c_tilde_translation: ct1.value,
        c_tilde_reference: c_tilde_reference(n),
        c_tilde_exact: exact,
        alpha_n: n.alpha(),
        gamma_n: n.gamma_n(),
        k,
    })
}

fn radial_point(n: usize, r: f64) -> Vec<f64> {
    let mut y = vec![0.0; n];
    y[0] = r;
    y
}

/// Sign of `z_α` under the reflection `y_axis -> -y_axis`, found by
/// evaluation at a generic point.
fn reflection_parity(q: &BubbleSum, alpha: usize, axis: usize) -> f64 {
    let n = q.dim();
    let y: Vec<f64> = (0..n).map(|i| 0.31 + 0.17 * i as f64).collect();
    let mut ry = y.clone();
    ry[axis] = -ry[axis];
    let z = crate::kelvin::kernel_field(alpha, q).expect("index in range");
    let (a, b) = (z.value(&y), z.value(&ry));
    if (a == 0.0 && b == 0.0) || (a - b).abs() <= 1e-10 * a.abs().max(b.abs()) {
        1.0
    } else if (a + b).abs() <= 1e-10 * a.abs().max(b.abs()) {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramReport {
    pub n: usize,
    pub k: usize,
    pub mu: f64,
    /// Row-major `3n × 3n` matrix.
    pub matrix: Vec<f64>,
    pub error: Vec<f64>,
    /// Entries that vanish by reflection parity and were set to zero.
    pub parity_zero: Vec<(usize, usize)>,
    /// Largest absolute integrated value among the parity-zero entries.
    pub parity_residual: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl GramReport {
    pub fn dim(&self) -> usize {
        3 * self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim() + j]
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.matrix)
    }
}

/// `M_ij = ∫ |Q|^{p-1} z_i z_j` for the crown, integrated in reduced
/// coordinates after symmetrising over the dihedral group.
pub fn gram_matrix(spec: &CrownSpec, quad: &QuadratureSpec) -> Result<GramReport> {
    let n = spec.n.n();
    let m = 3 * n;
    let p = spec.n.p();
    let k = spec.k;
    let q = crown(spec);
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let images: Vec<(f64, f64, f64)> = (0..k)
        .flat_map(|j| {
            let t = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            let (s, c) = t.sin_cos();
            // rotation, and rotation composed with y2 -> -y2
            [(c, s, 1.0), (c, s, -1.0)]
        })
        .collect();
    let inv = 1.0 / images.len() as f64;
    let integrand = |y: &[f64], out: &mut [f64]| {
        let mut g = [0.0; MAX_DIM];
        let qv = q.value_and_gradient(y, &mut g);
        let pot = abs_pow(qv, p - 1.0);
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut gy = [0.0; MAX_DIM];
        let mut gg = [0.0; MAX_DIM];
        let mut z = [0.0; 3 * MAX_DIM];
        let mut gdot = [0.0; MAX_DIM];
        for &(c, s, refl) in &images {
            // image point R(S y) and gradient R(S ∇Q), S = diag(1, refl, 1, …)
            let (y1, y2) = (y[0], refl * y[1]);
            let (g1, g2) = (g[0], refl * g[1]);
            gy[..n].copy_from_slice(&y[..n]);
            gg[..n].copy_from_slice(&g[..n]);
            gy[0] = c * y1 - s * y2;
            gy[1] = s * y1 + c * y2;
            gg[0] = c * g1 - s * g2;
            gg[1] = s * g1 + c * g2;
            for (a, za) in z.iter_mut().enumerate().take(m) {
                let mut wdot = 0.0;
                generator(a, &gy[..n], &mut wdot, &mut gdot).expect("index in range");
                *za = wdot * qv + (0..n).map(|j| gdot[j] * gg[j]).sum::<f64>();
            }
            for (idx, &(i, j)) in pairs.iter().enumerate() {
                out[idx] += inv * pot * z[i] * z[j];
            }
        }
    };
    let (v, e) = integrate_axial(
        n,
        pairs.len(),
        integrand,
        &AxialSpec::for_crown(spec, YPrime::Average),
        &quad.cubature(),
    )?;
    let parity: Vec<Vec<f64>> = (0..m)
        .map(|a| (1..n).map(|axis| reflection_parity(&q, a, axis)).collect())
        .collect();
    let mut matrix = vec![0.0; m * m];
    let mut error = vec![0.0; m * m];
    let mut parity_zero = Vec::new();
    let mut parity_residual: f64 = 0.0;
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        let odd = (0..n - 1).any(|ax| parity[i][ax] * parity[j][ax] == -1.0);
        let val = if odd {
            parity_zero.push((i, j));
            parity_residual = parity_residual.max(v[idx].abs());
            0.0
        } else {
            v[idx]
        };
        matrix[i * m + j] = val;
        matrix[j * m + i] = val;
        error[i * m + j] = e[idx];
        error[j * m + i] = e[idx];
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, &matrix)).eigenvalues;
    Ok(GramReport {
        n,
        k,
        mu: spec.mu,
        matrix,
        error,
        parity_zero,
        parity_residual,
        min_eigenvalue: eig.iter().copied().fold(f64::INFINITY, f64::min),
        max_eigenvalue: eig.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Crown energies for several `k`, computed in parallel in input order.
pub fn crown_energy_sweep(n: Dimension, ks: &[usize], quad: &QuadratureSpec) -> Result<Vec<(usize, EnergyParts)>> {
    ks.par_iter()
        .map(|&k| {
            let spec = CrownSpec::new(n, k)?;
            Ok((k, energy_crown(&spec, quad)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crown::translated_bubble;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn dim(n: usize) -> Dimension {
        Dimension::new(n).unwrap()
    }

    #[test]
    fn closed_form_arithmetic() {
        assert_relative_eq!(c_tilde_reference(dim(4)), 2.0 / 15.0, max_relative = 1e-14);
        assert_relative_eq!(c_tilde_reference(dim(3)), PI / (32.0 * 2f64.sqrt()), max_relative = 1e-14);
        // Literal integral at n = 4: 64π²/30.
        assert_relative_eq!(c_tilde_exact(dim(4)), 64.0 * PI * PI / 30.0, max_relative = 1e-13);
    }

    #[test]
    fn bubble_constants_agree_with_closed_forms() {
        let spec = QuadratureSpec::with_tol(1e-12);
        for n in 3..7 {
            let c = constants(dim(n), None, &spec).unwrap();
            assert_relative_eq!(c.c_tilde, c.c_tilde_exact, max_relative = 1e-10);
            assert_relative_eq!(c.c_tilde_translation, c.c_tilde, max_relative = 1e-10);
            assert_relative_eq!(c.s_n, s_n_exact(dim(n)), max_relative = 1e-10);
            assert_eq!(c.c1, c.s_n);
            // ∫ U^p = α_n / γ_n (flux of the far field).
            assert_relative_eq!(c.c2 * c.gamma_n, c.alpha_n, max_relative = 1e-10);
        }
    }

    #[test]
    fn bubble_energy_identity() {
        let spec = QuadratureSpec::with_tol(1e-9);
        for n in 3..6 {
            let d = dim(n);
            let e = energy_entire(&bubble(d), &spec).unwrap();
            assert_relative_eq!(e.dirichlet.value, e.potential.value, max_relative = 1e-7);
            assert_relative_eq!(e.energy.value, s_n_exact(d), max_relative = 1e-7);
        }
    }

    #[test]
    fn energy_is_scale_invariant() {
        let d = dim(4);
        let spec = QuadratureSpec::with_tol(1e-10);
        let base = energy_entire(&bubble(d), &spec).unwrap().energy.value;
        for lam in [0.5, 2.0] {
            let u = translated_bubble(d, vec![0.0; 4], lam).unwrap();
            let e = energy_entire(&u, &spec).unwrap().energy.value;
            assert_relative_eq!(e, base, max_relative = 1e-8);
        }
    }

    #[test]
    fn crown_energy_routes_agree() {
        let spec = CrownSpec::new(dim(3), 6).unwrap();
        let quad = QuadratureSpec::with_tol(1e-8);
        let reduced = energy_crown(&spec, &quad).unwrap();
        let full = energy_entire(&crown(&spec), &QuadratureSpec::with_tol(1e-7)).unwrap();
        assert_relative_eq!(reduced.energy.value, full.energy.value, max_relative = 1e-5);
    }

    #[test]
    fn crown_constants_and_signed_mass() {
        let d = dim(4);
        let spec = CrownSpec::new(d, 8).unwrap();
        let c = constants(d, Some(&spec), &QuadratureSpec::with_tol(1e-9)).unwrap();
        // The flux of -ΔQ gives the far field; the nonlinearity does not.
        let q = crown(&spec);
        let (flux, _) = integrate_axial(
            4,
            1,
            |y, out| out[0] = -q.laplacian(y),
            &AxialSpec::for_crown(&spec, YPrime::Invariant),
            &QuadratureSpec::with_tol(1e-9).cubature(),
        )
        .unwrap();
        assert_relative_eq!(flux[0] * c.gamma_n, spec.predicted_far_field(), max_relative = 1e-6);
        assert!(c.c2_signed < 0.0);
        assert!(c.c2 > c.c2_signed.abs());
        let ratio = c.c1 / ((spec.k + 1) as f64 * c.s_n);
        assert!((ratio - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn domain_energy_basics() {
        let d = dim(3);
        let zero = crate::field::FnField::new(3, |_: &[f64]| 0.0).with_gradient(|_, g| g.iter_mut().for_each(|v| *v = 0.0));
        let e = energy_domain(&zero, 1e-3, &QuadratureSpec::default()).unwrap();
        assert_eq!(e.energy.value, 0.0);
        // Change of variables: J_ε(u) = I_ε(v), v(y) = ε^{1/(p-1)} u(√ε y).
        let eps: f64 = 1e-2;
        let u = translated_bubble(d, vec![0.0, 0.0, 0.0], 0.1).unwrap();
        let v = translated_bubble(d, vec![0.0; 3], 0.1 / eps.sqrt()).unwrap();
        let spec = QuadratureSpec::with_tol(1e-11);
        let j = energy_domain(&u, eps, &spec).unwrap().energy.value;
        let i = energy_shell(&v, eps.sqrt(), 1.0 / eps.sqrt(), &spec, &[]).unwrap().energy.value;
        assert_relative_eq!(j, i, max_relative = 1e-8);
    }

    #[test]
    fn small_gram_is_symmetric_and_positive() {
        let spec = CrownSpec::new(dim(3), 6).unwrap();
        let g = gram_matrix(&spec, &QuadratureSpec::with_tol(1e-6)).unwrap();
        let m = g.as_matrix();
        assert!((&m - m.transpose()).abs().max() < 1e-10);
        assert!(g.min_eigenvalue > 0.0);
        assert!(g.parity_residual < 1e-6 * g.max_eigenvalue, "{}", g.parity_residual);
        assert!(!g.parity_zero.is_empty());
    }
}
