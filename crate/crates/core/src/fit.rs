//! Log-log least squares and the pass/fail record for one scaling claim.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// `log y ≈ intercept + slope · log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LogLogFit {
    /// Coefficient `K` in `y ≈ K x^slope`.
    pub fn coefficient(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Ordinary least squares on `(ln x, ln |y|)`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !(v.abs() > 0.0) || !v.is_finite()) {
        return Err(Error::Fit("log-log fit needs finite non-zero data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.abs().ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Least-squares `K` in `y ≈ K x^e` for a known exponent `e`.
pub fn fixed_exponent_coefficient(x: &[f64], y: &[f64], e: f64) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Fit("mismatched or empty data".into()));
    }
    let (num, den) = x.iter().zip(y).fold((0.0, 0.0), |(n, d), (xi, yi)| {
        let b = xi.powf(e);
        (n + b * yi, d + b * b)
    });
    Ok(num / den)
}

/// Outcome of checking one asymptotic claim.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub claim: String,
    pub measured_coefficient: f64,
    pub expected_coefficient: Option<f64>,
    pub fitted_exponent: f64,
    pub expected_exponent: f64,
    pub r_squared: f64,
    /// Relative tolerance on the exponent (and on the coefficient when one
    /// is expected).
    pub tolerance: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub verdict: Verdict,
}

impl ExpansionReport {
    /// Exponent-only check: `|slope - expected| ≤ tol · |expected|`.
    pub fn exponent(claim: &str, xs: Vec<f64>, ys: Vec<f64>, expected: f64, tol: f64) -> Result<Self> {
        let f = loglog_fit(&xs, &ys)?;
        let ok = (f.slope - expected).abs() <= tol * expected.abs();
        Ok(Self {
            claim: claim.to_string(),
            measured_coefficient: f.coefficient(),
            expected_coefficient: None,
            fitted_exponent: f.slope,
            expected_exponent: expected,
            r_squared: f.r_squared,
            tolerance: tol,
            xs,
            ys,
            verdict: Verdict::from_bool(ok),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let x = [1e-2, 1e-3, 1e-4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.5)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert_relative_eq!(f.slope, 0.5, epsilon = 1e-12);
        assert_relative_eq!(f.coefficient(), 3.0, max_relative = 1e-10);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        assert_relative_eq!(fixed_exponent_coefficient(&x, &y, 0.5).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_data() {
        assert!(loglog_fit(&[1.0], &[1.0]).is_err());
        assert!(loglog_fit(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(loglog_fit(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn report_verdicts() {
        let x: Vec<f64> = vec![1e-2, 1e-3, 1e-4];
        let y: Vec<f64> = x.iter().map(|v| v.powf(1.05)).collect();
        assert!(ExpansionReport::exponent("t", x.clone(), y.clone(), 1.0, 0.1).unwrap().verdict.passed());
        assert!(!ExpansionReport::exponent("t", x, y, 1.0, 0.01).unwrap().verdict.passed());
    }

    proptest! {
        #[test]
        fn slope_is_scale_free(k in 0.1f64..10.0, e in -3.0f64..3.0) {
            let x: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 3.0];
            let y: Vec<f64> = x.iter().map(|v| k * v.powf(e)).collect();
            let f = loglog_fit(&x, &y).unwrap();
            prop_assert!((f.slope - e).abs() < 1e-10);
        }
    }
}
