//! Closed-form integrals used to audit the reported error estimates.

use std::f64::consts::{E, PI};

use serde::Serialize;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use super::spherical::{integrate_annulus, integrate_rn};
use super::{integrate_box, Estimate, QuadratureSpec};
use crate::error::Result;
use crate::geometry::sphere_area;

type Runner = Box<dyn Fn(&QuadratureSpec) -> Result<Estimate> + Send + Sync>;

pub struct AnalyticCase {
    pub name: &'static str,
    pub exact: f64,
    run: Runner,
}

impl AnalyticCase {
    pub fn evaluate(&self, spec: &QuadratureSpec) -> Result<Estimate> {
        (self.run)(spec)
    }
}

fn boxed<F>(f: F, lo: &[f64], hi: &[f64]) -> Runner
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    let (lo, hi) = (lo.to_vec(), hi.to_vec());
    Box::new(move |spec| {
        let (v, e) = integrate_box(&f, &lo, &hi, &spec.cubature())?;
        Ok(Estimate::new(v, e))
    })
}

fn case(name: &'static str, exact: f64, run: Runner) -> AnalyticCase {
    AnalyticCase { name, exact, run }
}

/// `∫_{R^n} (1+|y|²)^{-s} = |S^{n-1}| Γ(n/2) Γ(s-n/2) / (2 Γ(s))`.
fn algebraic_rn(n: usize, s: f64) -> f64 {
    let h = n as f64 / 2.0;
    sphere_area(n - 1) * gamma(h) * gamma(s - h) / (2.0 * gamma(s))
}

/// The twenty audit integrals.
pub fn analytic_cases() -> Vec<AnalyticCase> {
    let osc_c = 0.6 * PI;
    // ∫∫ cos(c + x + y) over the unit square = -Re[e^{ic}(e^{i}-1)²]
    let osc = {
        let (re, im) = (1f64.cos() - 1.0, 1f64.sin());
        let (sq_re, sq_im) = (re * re - im * im, 2.0 * re * im);
        -(osc_c.cos() * sq_re - osc_c.sin() * sq_im)
    };
    let peak_1d = 2.0 * 5.0 * (2.5f64).atan();
    let gauss_1d = PI.sqrt() / 5.0 * erf(2.5);
    vec![
        case("exp_1d", E - 1.0, boxed(|x| x[0].exp(), &[0.0], &[1.0])),
        case("sin_1d", 2.0, boxed(|x| x[0].sin(), &[0.0], &[PI])),
        case("runge_1d", 5f64.atan() / 5.0, boxed(|x| 1.0 / (1.0 + 25.0 * x[0] * x[0]), &[0.0], &[1.0])),
        case("sqrt_1d", 2.0 / 3.0, boxed(|x| x[0].sqrt(), &[0.0], &[1.0])),
        case("log_1d", -1.0, boxed(|x| x[0].ln(), &[0.0], &[1.0])),
        case("cos_squared_1d", PI, boxed(|x| (10.0 * x[0]).cos().powi(2), &[0.0], &[2.0 * PI])),
        case("abs_1d", 1.0, boxed(|x| x[0].abs(), &[-1.0], &[1.0])),
        case("exp_2d", (E - 1.0).powi(2), boxed(|x| (x[0] + x[1]).exp(), &[0.0; 2], &[1.0; 2])),
        case("oscillatory_2d", osc, boxed(move |x| (osc_c + x[0] + x[1]).cos(), &[0.0; 2], &[1.0; 2])),
        case(
            "product_peak_2d",
            peak_1d * peak_1d,
            boxed(
                |x| 1.0 / ((0.04 + (x[0] - 0.5).powi(2)) * (0.04 + (x[1] - 0.5).powi(2))),
                &[0.0; 2],
                &[1.0; 2],
            ),
        ),
        case(
            "gaussian_2d",
            gauss_1d * gauss_1d,
            boxed(
                |x| (-25.0 * ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2))).exp(),
                &[0.0; 2],
                &[1.0; 2],
            ),
        ),
        case("corner_peak_2d", 1.0 / 6.0, boxed(|x| (1.0 + x[0] + x[1]).powi(-3), &[0.0; 2], &[1.0; 2])),
        case("monomial_2d", 1.0 / 12.0, boxed(|x| x[0] * x[0] * x[1].powi(3), &[0.0; 2], &[1.0; 2])),
        case("exp_3d", (E - 1.0).powi(3), boxed(|x| (x[0] + x[1] + x[2]).exp(), &[0.0; 3], &[1.0; 3])),
        case(
            "cos_product_3d",
            1.0,
            boxed(|x| x[0].cos() * x[1].cos() * x[2].cos(), &[0.0; 3], &[PI / 2.0; 3]),
        ),
        case(
            "algebraic_r3",
            PI * PI / 4.0,
            Box::new(|spec| integrate_rn(3, |y| (1.0 + y.iter().map(|v| v * v).sum::<f64>()).powi(-3), spec)),
        ),
        case(
            "gaussian_r4",
            PI * PI,
            Box::new(|spec| integrate_rn(4, |y| (-y.iter().map(|v| v * v).sum::<f64>()).exp(), spec)),
        ),
        case(
            "algebraic_r5",
            algebraic_rn(5, 5.0),
            Box::new(|spec| integrate_rn(5, |y| (1.0 + y.iter().map(|v| v * v).sum::<f64>()).powi(-5), spec)),
        ),
        case(
            "bubble_power_r4",
            algebraic_rn(4, 4.0),
            Box::new(|spec| integrate_rn(4, |y| (1.0 + y.iter().map(|v| v * v).sum::<f64>()).powi(-4), spec)),
        ),
        case(
            "newton_annulus_r3",
            2.0 * PI * (1.0 - 0.01),
            Box::new(|spec| integrate_annulus(3, |y| 1.0 / y.iter().map(|v| v * v).sum::<f64>().sqrt(), 0.1, spec)),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HonestyEntry {
    pub name: String,
    pub rel_tol: f64,
    pub exact: f64,
    pub value: f64,
    pub estimate: f64,
    pub true_error: f64,
    /// `true_error ≤ 2 · estimate`.
    pub honest: bool,
}

/// Run every case at each tolerance.
pub fn honesty_audit(tols: &[f64]) -> Result<Vec<HonestyEntry>> {
    let mut out = Vec::new();
    for case in analytic_cases() {
        for &tol in tols {
            let est = case.evaluate(&QuadratureSpec::with_tol(tol))?;
            let true_error = (est.value - case.exact).abs();
            out.push(HonestyEntry {
                name: case.name.to_string(),
                rel_tol: tol,
                exact: case.exact,
                value: est.value,
                estimate: est.error,
                true_error,
                honest: true_error <= 2.0 * est.error,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_cases_with_distinct_names() {
        let cases = analytic_cases();
        assert_eq!(cases.len(), 20);
        let mut names: Vec<_> = cases.iter().map(|c| c.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 20);
    }

    #[test]
    fn estimates_bound_true_errors() {
        let audit = honesty_audit(&[1e-5, 1e-10]).unwrap();
        let bad: Vec<_> = audit.iter().filter(|e| !e.honest).collect();
        assert!(bad.is_empty(), "{bad:#?}");
    }
}
