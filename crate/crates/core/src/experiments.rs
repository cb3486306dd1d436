//! The ten acceptance experiments as configurable runners producing
//! uniform result rows.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::appendix::{convolution_bound_a, convolution_bound_b, default_decay_radii, kernel_decay_report, rescaled_constant};
use crate::crown::{bubble, crown, CrownSpec};
use crate::energy::{c_tilde_exact, constants, crown_energy_sweep, gram_matrix, s_n_exact};
use crate::error::Result;
use crate::fit::{loglog_fit, ExpansionReport, Verdict};
use crate::geometry::{Dimension, RotationCoords};
use crate::kelvin::{derivative_identity_check, kernel_residual_check, ParamSet};
use crate::probes::shell_points;
use crate::projection::{defect_sweep, error_norm_scaling, DefectKind, DefectSweep};
use crate::quadrature::battery::honesty_audit;
use crate::quadrature::norms::ProbeGrid;
use crate::quadrature::QuadratureSpec;
use crate::reduced::{d_argmin, d_critical, expansion_check, tau_a_hessian, ProjectionMode, ReducedFunctional, ReducedPoint};

/// One line of output. Optional fields are left empty in tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub n: usize,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub value: f64,
    pub error_estimate: Option<f64>,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    /// `None` for informational rows.
    pub verdict: Option<Verdict>,
}

impl Row {
    fn info(experiment: impl Into<String>, n: usize, value: f64) -> Self {
        Self {
            experiment: experiment.into(),
            n,
            k: None,
            eps: None,
            value,
            error_estimate: None,
            target: None,
            tolerance: None,
            verdict: None,
        }
    }

    fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    fn eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }

    fn err(mut self, e: f64) -> Self {
        self.error_estimate = Some(e);
        self
    }

    fn check(mut self, target: f64, tolerance: f64, ok: bool) -> Self {
        self.target = Some(target);
        self.tolerance = Some(tolerance);
        self.verdict = Some(Verdict::from_bool(ok));
        self
    }

    fn verdict(mut self, ok: bool) -> Self {
        self.verdict = Some(Verdict::from_bool(ok));
        self
    }
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub criterion: usize,
    pub name: String,
    pub verdict: Verdict,
    pub summary: String,
    pub rows: Vec<Row>,
}

impl Outcome {
    fn new(criterion: usize, name: &str, ok: bool, summary: String, rows: Vec<Row>) -> Self {
        Self {
            criterion,
            name: name.to_string(),
            verdict: Verdict::from_bool(ok),
            summary,
            rows,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn dim(n: usize) -> Result<Dimension> {
    Dimension::new(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsSettings {
    pub dims: Vec<usize>,
    pub rel_tol: f64,
    pub quad_tol: f64,
}

impl Default for ConstantsSettings {
    fn default() -> Self {
        Self {
            dims: vec![3, 4, 5],
            rel_tol: 1e-6,
            quad_tol: 1e-12,
        }
    }
}

/// Quadrature of `c̃` against the reference closed form; the normalised
/// closed form and the other bubble constants are reported alongside.
pub fn constants_check(s: &ConstantsSettings) -> Result<Outcome> {
    let spec = QuadratureSpec::with_tol(s.quad_tol);
    let mut rows = Vec::new();
    let mut ok = true;
    let mut gaps = Vec::new();
    for &n in &s.dims {
        let c = constants(dim(n)?, None, &spec)?;
        let pass = c.reference_gap() <= s.rel_tol;
        ok &= pass;
        gaps.push(format!("n={n}: ratio {:.6}", c.c_tilde / c.c_tilde_reference));
        rows.push(
            Row::info("constants.c_tilde.reference", n, c.c_tilde)
                .err(c.c_tilde_error)
                .check(c.c_tilde_reference, s.rel_tol, pass),
        );
        rows.push(Row::info("constants.c_tilde.normalised", n, c.c_tilde).err(c.c_tilde_error).check(
            c.c_tilde_exact,
            s.rel_tol,
            rel(c.c_tilde, c.c_tilde_exact) <= s.rel_tol,
        ));
        rows.push(Row::info("constants.c_tilde.translation", n, c.c_tilde_translation));
        rows.push(Row::info("constants.c1", n, c.c1));
        rows.push(Row::info("constants.c2", n, c.c2));
        rows.push(Row::info("constants.s_n", n, c.s_n));
        rows.push(Row::info("constants.alpha_n", n, c.alpha_n));
        rows.push(Row::info("constants.gamma_n", n, c.gamma_n));
    }
    Ok(Outcome::new(
        1,
        "constants",
        ok,
        format!("quadrature c̃ / reference closed form: {}", gaps.join(", ")),
        rows,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrownEnergySettings {
    pub n: usize,
    pub ks: Vec<usize>,
    pub exponent_window: [f64; 2],
    pub quad_tol: f64,
}

impl Default for CrownEnergySettings {
    fn default() -> Self {
        Self {
            n: 4,
            ks: vec![8, 16, 32],
            exponent_window: [-2.5, -1.0],
            quad_tol: 1e-9,
        }
    }
}

/// `|E(Q_k)/((k+1)S_n) - 1|` must decrease in `k` with a fitted exponent
/// inside the window.
pub fn crown_energy_check(s: &CrownEnergySettings) -> Result<Outcome> {
    let d = dim(s.n)?;
    let sweep = crown_energy_sweep(d, &s.ks, &QuadratureSpec::with_tol(s.quad_tol))?;
    let sn = s_n_exact(d);
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for (k, parts) in &sweep {
        let target = (*k as f64 + 1.0) * sn;
        let ratio = parts.energy.value / target;
        gaps.push((ratio - 1.0).abs());
        rows.push(Row::info("crown_energy.energy", s.n, parts.energy.value).k(*k).err(parts.energy.error));
        rows.push(Row::info("crown_energy.ratio", s.n, ratio).k(*k).err(parts.energy.error / target));
    }
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let ks: Vec<f64> = s.ks.iter().map(|&k| k as f64).collect();
    let slope = loglog_fit(&ks, &gaps)?.slope;
    let [lo, hi] = s.exponent_window;
    let in_window = slope >= lo && slope <= hi;
    rows.push(Row::info("crown_energy.decreasing", s.n, f64::from(u8::from(decreasing))).verdict(decreasing));
    let mut fit = Row::info("crown_energy.decay_exponent", s.n, slope).verdict(in_window);
    fit.target = Some(0.5 * (lo + hi));
    fit.tolerance = Some(0.5 * (hi - lo));
    rows.push(fit);
    let signs: Vec<String> = sweep
        .iter()
        .map(|(k, p)| format!("k={k}: {:+.3e}", p.energy.value / ((*k as f64 + 1.0) * sn) - 1.0))
        .collect();
    Ok(Outcome::new(
        2,
        "crown energy",
        decreasing && in_window,
        format!("E/((k+1)S)-1 {}; fitted exponent {slope:.3} vs window [{lo}, {hi}]", signs.join(", ")),
        rows,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GramSettings {
    pub n: usize,
    pub k: usize,
    pub rel_tol: f64,
    pub quad_tol: f64,
}

impl Default for GramSettings {
    fn default() -> Self {
        Self {
            n: 4,
            k: 16,
            rel_tol: 0.05,
            quad_tol: 1e-6,
        }
    }
}

/// Diagonal and the two Kelvin–translation couplings against `(k+1)c̃`;
/// every other entry below `rel_tol · (k+1)c̃`.
pub fn gram_check(s: &GramSettings) -> Result<Outcome> {
    let d = dim(s.n)?;
    let g = gram_matrix(&CrownSpec::new(d, s.k)?, &QuadratureSpec::with_tol(s.quad_tol))?;
    let target = (s.k as f64 + 1.0) * c_tilde_exact(d);
    let m = g.dim();
    let coupled = |i: usize, j: usize| {
        let (a, b) = (i.min(j), i.max(j));
        (a == 1 && b == s.n + 2) || (a == 2 && b == s.n + 3)
    };
    let mut rows = Vec::new();
    let mut ok = true;
    let mut worst_diag: f64 = 0.0;
    let mut worst_off: f64 = 0.0;
    for i in 0..m {
        for j in i..m {
            let v = g.get(i, j);
            let e = g.error[i * m + j];
            let name = format!("gram.m_{i}_{j}");
            if i == j || coupled(i, j) {
                let pass = rel(v, target) <= s.rel_tol;
                worst_diag = worst_diag.max(rel(v, target));
                ok &= pass;
                rows.push(Row::info(name, s.n, v).k(s.k).err(e).check(target, s.rel_tol, pass));
            } else {
                let pass = v.abs() <= s.rel_tol * target;
                worst_off = worst_off.max(v.abs() / target);
                ok &= pass;
                rows.push(Row::info(name, s.n, v).k(s.k).err(e).check(0.0, s.rel_tol * target, pass));
            }
        }
    }
    rows.push(Row::info("gram.mu", s.n, g.mu).k(s.k));
    rows.push(Row::info("gram.parity_residual", s.n, g.parity_residual).k(s.k));
    rows.push(Row::info("gram.min_eigenvalue", s.n, g.min_eigenvalue).k(s.k));
    Ok(Outcome::new(
        3,
        "gram matrix",
        ok,
        format!(
            "M_00/((k+1)c̃) = {:.4}, M_11/((k+1)c̃) = {:.4}, worst structured deviation {worst_diag:.3e}, worst off-diagonal {worst_off:.3e}, mu = {:.4e}; {}",
            g.get(0, 0) / target,
            g.get(1, 1) / target,
            g.mu,
            crate::appendix::CORRECTOR_BUDGET_NOTE
        ),
        rows,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSettings {
    pub dims: Vec<usize>,
    /// Ring size used for each entry of `dims`.
    pub ks: Vec<usize>,
    pub probes: usize,
    pub residual_tol: f64,
    pub identity_tol: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            dims: vec![3, 4],
            ks: vec![6, 8],
            probes: 50,
            residual_tol: 1e-5,
            identity_tol: 1e-5,
        }
    }
}

/// `L(z_α)` against the transported crown residual, and parameter
/// derivatives of the family against the kernel fields.
pub fn kernel_check(s: &KernelSettings) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut ok = true;
    let mut flips = Vec::new();
    for (idx, &n) in s.dims.iter().enumerate() {
        let d = dim(n)?;
        let k = s.ks.get(idx).copied().unwrap_or(8);
        let q = Arc::new(crown(&CrownSpec::new(d, k)?));
        let probes = shell_points(n, s.probes, 0.05, 10.0, 0x6b72 + n as u64);
        for alpha in 0..d.kernel_count() {
            let rep = kernel_residual_check(&q, alpha, &probes, s.residual_tol)?;
            ok &= rep.pass;
            let mut row = Row::info(format!("kernel.residual.z{alpha}"), n, rep.weighted_lz).k(k);
            row.error_estimate = Some(rep.identity_error);
            rows.push(row.check(rep.weighted_budget, s.residual_tol, rep.pass));
        }
        let idp = shell_points(n, 20, 0.1, 3.0, 0x6964 + n as u64);
        let rep = derivative_identity_check(&ParamSet::identity(d), &q, &idp, s.identity_tol)?;
        for e in &rep.entries {
            ok &= e.pass;
            if e.sign_flip {
                flips.push(format!("n={n} {}", e.parameter));
            }
            rows.push(
                Row::info(format!("kernel.identity.{}", e.parameter), n, e.relative_error)
                    .k(k)
                    .check(0.0, s.identity_tol, e.pass),
            );
            rows.push(Row::info(format!("kernel.identity.{}.sign", e.parameter), n, e.measured_sign).k(k));
        }
    }
    let flips = if flips.is_empty() {
        "none".to_string()
    } else {
        flips.join(", ")
    };
    Ok(Outcome::new(
        4,
        "kernel identities",
        ok,
        format!("sign flips relative to the stated identities: {flips}"),
        rows,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSettings {
    pub n: usize,
    pub d: f64,
    pub tau1: f64,
    pub eps: Vec<f64>,
    pub rel_tol: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            n: 3,
            d: 1.0,
            tau1: 0.1,
            eps: vec![1e-4, 1e-5, 1e-6, 1e-7],
            rel_tol: 0.1,
        }
    }
}

fn sweep_rows(sw: &DefectSweep, n: usize) -> Vec<Row> {
    let tag = sw.kind.to_string();
    let mut rows = Vec::new();
    for (i, &e) in sw.eps.iter().enumerate() {
        rows.push(Row::info(format!("projection.{tag}.inner"), n, sw.inner[i]).eps(e).check(
            sw.inner_bound[i],
            sw.tolerance,
            sw.verdict.passed(),
        ));
        rows.push(Row::info(format!("projection.{tag}.outer"), n, sw.outer[i]).eps(e).check(
            sw.outer_bound[i],
            sw.tolerance,
            sw.verdict.passed(),
        ));
    }
    rows.push(Row::info(format!("projection.{tag}.inner_slope"), n, sw.inner_slope).check(
        sw.inner_bound_slope,
        sw.tolerance,
        sw.verdict.passed(),
    ));
    rows.push(Row::info(format!("projection.{tag}.outer_slope"), n, sw.outer_slope).check(
        sw.outer_bound_slope,
        sw.tolerance,
        sw.verdict.passed(),
    ));
    rows
}

/// Boundary-defect sweeps for the value and every parameter derivative.
pub fn projection_check(s: &ProjectionSettings) -> Result<Outcome> {
    let d = dim(s.n)?;
    let mut tau = vec![0.0; s.n];
    tau[0] = s.tau1;
    let pt = ReducedPoint::new(d, s.d, tau, [0.0; 2], RotationCoords::zeros(d))?;
    let u = bubble(d);
    let mut kinds = vec![DefectKind::Value, DefectKind::Lambda];
    kinds.extend((0..s.n).map(DefectKind::Tau));
    kinds.extend([DefectKind::A(0), DefectKind::A(1)]);
    kinds.extend((0..d.angle_count()).map(DefectKind::Theta));
    let mut rows = Vec::new();
    let mut ok = true;
    let mut summary = String::new();
    for kind in kinds {
        let sw = defect_sweep(&pt, &s.eps, kind, &u, s.rel_tol)?;
        ok &= sw.verdict.passed();
        if kind == DefectKind::Value {
            summary = format!(
                "value slopes inner {:.4}/{:.4}, outer {:.4}/{:.4} (measured/bound)",
                sw.inner_slope, sw.inner_bound_slope, sw.outer_slope, sw.outer_bound_slope
            );
        }
        rows.extend(sweep_rows(&sw, s.n));
    }
    Ok(Outcome::new(5, "projection defects", ok, summary, rows))
}

/// One `ε` window per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsWindow {
    pub n: usize,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualSettings {
    pub windows: Vec<EpsWindow>,
    pub d: f64,
    pub rel_tol: f64,
    pub radii: usize,
    pub directions: usize,
}

impl Default for ResidualSettings {
    fn default() -> Self {
        Self {
            windows: vec![
                EpsWindow {
                    n: 3,
                    eps: vec![1e-4, 1e-5, 1e-6, 1e-7],
                },
                EpsWindow {
                    n: 4,
                    eps: vec![1e-2, 1e-3, 1e-4, 1e-5],
                },
            ],
            d: 1.0,
            rel_tol: 0.1,
            radii: 200,
            directions: 64,
        }
    }
}

fn report_rows(prefix: &str, n: usize, r: &ExpansionReport) -> Vec<Row> {
    let mut rows: Vec<Row> = r
        .xs
        .iter()
        .zip(&r.ys)
        .map(|(&e, &y)| Row::info(format!("{prefix}.value"), n, y).eps(e))
        .collect();
    rows.push(Row::info(format!("{prefix}.exponent"), n, r.fitted_exponent).check(
        r.expected_exponent,
        r.tolerance,
        r.verdict.passed(),
    ));
    rows.push(Row::info(format!("{prefix}.r_squared"), n, r.r_squared));
    if let Some(c) = r.expected_coefficient {
        rows.push(Row::info(format!("{prefix}.coefficient"), n, r.measured_coefficient).check(
            c,
            r.tolerance,
            r.verdict.passed(),
        ));
    }
    rows
}

/// `‖E‖_**` against `ε^{(n-2)/2}`.
pub fn residual_check(s: &ResidualSettings) -> Result<Outcome> {
    let grid = ProbeGrid {
        radii: s.radii,
        directions: s.directions,
        ..ProbeGrid::default()
    };
    let mut rows = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for w in &s.windows {
        let d = dim(w.n)?;
        let pt = ReducedPoint::centred(d, s.d);
        let r = error_norm_scaling(&pt, &w.eps, &bubble(d), &grid, s.rel_tol)?;
        ok &= r.verdict.passed();
        parts.push(format!("n={}: slope {:.4} vs {:.2}", w.n, r.fitted_exponent, r.expected_exponent));
        rows.extend(report_rows("residual", w.n, &r));
    }
    Ok(Outcome::new(6, "error term", ok, parts.join("; "), rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionSettings {
    pub n: usize,
    /// Concentration scale; the critical `d₀` when absent.
    pub d: Option<f64>,
    pub eps: Vec<f64>,
    pub derivative_at: Option<f64>,
    pub rel_tol: f64,
    pub quad_tol: f64,
}

impl Default for ExpansionSettings {
    fn default() -> Self {
        Self {
            n: 3,
            d: None,
            eps: vec![1e-5, 1e-6, 1e-7, 1e-8],
            derivative_at: Some(1.2),
            rel_tol: 0.15,
            quad_tol: 1e-13,
        }
    }
}

/// `J_ε - c₁ ≈ K ε^{(n-2)/2}` with `K` compared to `Ψ` for both the exact
/// and the leading-order projection.
pub fn expansion_check_all(s: &ExpansionSettings) -> Result<Outcome> {
    let d = dim(s.n)?;
    let spec = QuadratureSpec::with_tol(s.quad_tol);
    let consts = constants(d, None, &spec)?;
    let f = ReducedFunctional::new(bubble(d), &consts)?;
    let d0 = match s.d {
        Some(v) => v,
        None => d_critical(&f, &vec![0.0; s.n], [0.0; 2], &RotationCoords::zeros(d))?.d0,
    };
    let mut rows = vec![Row::info("expansion.d", s.n, d0)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (mode, tag) in [(ProjectionMode::ExactRadial, "exact"), (ProjectionMode::Leading, "leading")] {
        let mut chk = expansion_check(&f, &consts, d0, &s.eps, mode, s.derivative_at, &spec)?;
        // Re-grade at the configured tolerance with the same fit.
        chk.value.tolerance = s.rel_tol;
        let v = &chk.value;
        let k_ok = v
            .expected_coefficient
            .map(|c| (v.measured_coefficient / c - 1.0).abs() <= s.rel_tol)
            .unwrap_or(false);
        let slope_ok = (v.fitted_exponent - v.expected_exponent).abs() <= 0.1 * v.expected_exponent;
        let pass = k_ok && slope_ok && v.r_squared >= 0.99 && chk.measured_sign > 0.0;
        parts.push(format!(
            "{tag}: K = {:.4}, Psi = {:.4}, K/Psi = {:.4}, slope {:.4}, sign {:+}",
            v.measured_coefficient,
            v.expected_coefficient.unwrap_or(f64::NAN),
            v.measured_coefficient / v.expected_coefficient.unwrap_or(f64::NAN),
            v.fitted_exponent,
            chk.measured_sign
        ));
        chk.value.verdict = Verdict::from_bool(pass);
        ok &= pass;
        rows.extend(report_rows(&format!("expansion.{tag}"), s.n, &chk.value));
        rows.push(Row::info(format!("expansion.{tag}.sign"), s.n, chk.measured_sign).check(1.0, 0.0, chk.measured_sign > 0.0));
        if let Some(dr) = &chk.derivative {
            ok &= dr.verdict.passed();
            rows.extend(report_rows(&format!("expansion.{tag}.derivative"), s.n, dr));
        }
    }
    Ok(Outcome::new(7, "energy expansion", ok, parts.join("; "), rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReducedSettings {
    /// Bubble dimensions for the `d₀` checks.
    pub dims: Vec<usize>,
    pub d0_tol: f64,
    /// Crown `(n, k)` for the Hessian check; skipped when absent.
    pub crown: Option<[usize; 2]>,
    pub hessian_step: f64,
    pub quad_tol: f64,
}

impl Default for ReducedSettings {
    fn default() -> Self {
        Self {
            dims: vec![3, 4, 5],
            d0_tol: 1e-8,
            crown: Some([4, 8]),
            hessian_step: 1e-4,
            quad_tol: 1e-9,
        }
    }
}

/// Closed-form `d₀` against golden section, `∂²_{dd}Ψ > 0`, and the sign
/// of the crown `(τ, a)` Hessian.
pub fn reduced_check(s: &ReducedSettings) -> Result<Outcome> {
    let spec = QuadratureSpec::with_tol(s.quad_tol);
    let mut rows = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for &n in &s.dims {
        let d = dim(n)?;
        let f = ReducedFunctional::new(bubble(d), &constants(d, None, &spec)?)?;
        let tau = vec![0.0; n];
        let theta = RotationCoords::zeros(d);
        let cs = d_critical(&f, &tau, [0.0; 2], &theta)?;
        let gs = d_argmin(&f, &tau, [0.0; 2], &theta)?;
        let pass = (cs.d0 - gs).abs() <= s.d0_tol;
        ok &= pass && cs.second_derivative > 0.0;
        rows.push(Row::info("reduced.d0", n, cs.d0).check(gs, s.d0_tol, pass));
        rows.push(Row::info("reduced.psi_d0", n, cs.psi));
        rows.push(Row::info("reduced.dpsi_d0", n, cs.first_derivative));
        rows.push(Row::info("reduced.d2psi_dd", n, cs.second_derivative).check(0.0, 0.0, cs.second_derivative > 0.0));
        parts.push(format!("n={n}: |d0 - argmin| = {:.2e}", (cs.d0 - gs).abs()));
    }
    if let Some([n, k]) = s.crown {
        let d = dim(n)?;
        let cspec = CrownSpec::new(d, k)?;
        let f = ReducedFunctional::new(crown(&cspec), &constants(d, Some(&cspec), &spec)?)?;
        let cs = d_critical(&f, &vec![0.0; n], [0.0; 2], &RotationCoords::zeros(d))?;
        let (_, ev) = tau_a_hessian(&f, cs.d0, s.hessian_step)?;
        let neg = ev.iter().all(|&l| l < 0.0);
        ok &= neg;
        rows.push(Row::info("reduced.crown.d0", n, cs.d0).k(k));
        for (i, l) in ev.iter().enumerate() {
            rows.push(Row::info(format!("reduced.crown.tau_a_eigenvalue_{i}"), n, *l).k(k).check(0.0, 0.0, *l < 0.0));
        }
        let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        parts.push(format!("crown n={n} k={k}: largest (tau,a) eigenvalue {max:.4e}"));
    }
    Ok(Outcome::new(8, "reduced energy", ok, parts.join("; "), rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSettings {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub a_norms: Vec<f64>,
    pub b_norms: Vec<f64>,
    pub quad_tol: f64,
    /// Crown `(n, k)` pairs for decay reports.
    pub decay: Vec<[usize; 2]>,
}

impl Default for BoundsSettings {
    fn default() -> Self {
        Self {
            n: 3,
            a: 0.5,
            b: 0.5,
            a_norms: vec![1.0, 10.0, 100.0],
            b_norms: vec![0.5, 0.1, 0.02],
            quad_tol: 1e-8,
            decay: vec![[4, 8], [4, 16], [4, 32]],
        }
    }
}

/// Stability of the empirical constants in the two convolution bounds;
/// kernel decay sups are reported alongside.
pub fn bounds_check(s: &BoundsSettings) -> Result<Outcome> {
    let d = dim(s.n)?;
    let spec = QuadratureSpec::with_tol(s.quad_tol);
    let ra = convolution_bound_a(d, s.a, &s.a_norms, &spec)?;
    let rb = convolution_bound_b(d, s.b, &s.b_norms, &spec)?;
    let mut rows = Vec::new();
    for (tag, r) in [("bounds.first", &ra), ("bounds.second", &rb)] {
        for (i, y) in r.y_norms.iter().enumerate() {
            let it = &r.integrals[i];
            let mut row = Row::info(format!("{tag}.scaled"), s.n, r.scaled[i]).err(it.total.error);
            row.eps = Some(*y);
            rows.push(row);
            let mut row = Row::info(format!("{tag}.integral"), s.n, it.total.value).err(it.total.error);
            row.eps = Some(*y);
            rows.push(row.check(it.radial, 1e-6, rel(it.total.value, it.radial) <= 1e-6));
        }
        rows.push(Row::info(format!("{tag}.final_spread"), s.n, r.final_spread).check(0.0, r.tolerance, r.verdict.passed()));
        rows.push(Row::info(format!("{tag}.constant"), s.n, r.empirical_constant));
        rows.push(Row::info(format!("{tag}.borderline"), s.n, f64::from(u8::from(r.borderline))));
    }
    if let Some(c) = rescaled_constant(d, s.b, 16, &spec)? {
        rows.push(Row::info("bounds.second.rescaled_constant", s.n, c));
    }
    for &[n, k] in &s.decay {
        let dd = dim(n)?;
        let cs = CrownSpec::new(dd, k)?;
        let rep = kernel_decay_report(&crown(&cs), &default_decay_radii(), &cs.centers())?;
        let sup = rep.sups.iter().copied().fold(0.0, f64::max);
        rows.push(Row::info("bounds.kernel_decay.max_sup", n, sup).k(k).verdict(rep.stable));
    }
    let agree = rows
        .iter()
        .filter(|r| r.experiment.ends_with(".integral"))
        .all(|r| r.verdict == Some(Verdict::Pass));
    let ok = ra.verdict.passed() && rb.verdict.passed() && agree;
    Ok(Outcome::new(
        9,
        "convolution bounds",
        ok,
        format!(
            "first (a = {}): spread {:.3}, C = {:.4}; second (b = {}): spread {:.3}, C = {:.4}",
            s.a, ra.final_spread, ra.empirical_constant, s.b, rb.final_spread, rb.empirical_constant
        ),
        rows,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSettings {
    pub tols: Vec<f64>,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self { tols: vec![1e-5, 1e-10] }
    }
}

/// Reported error estimates bound the true error on closed-form integrals,
/// and a second run reproduces every bit.
pub fn quadrature_check(s: &QuadratureSettings) -> Result<Outcome> {
    let first = honesty_audit(&s.tols)?;
    let second = honesty_audit(&s.tols)?;
    let identical = first.len() == second.len()
        && first
            .iter()
            .zip(&second)
            .all(|(a, b)| a.value.to_bits() == b.value.to_bits() && a.estimate.to_bits() == b.estimate.to_bits());
    let mut rows = Vec::new();
    let mut honest = true;
    for e in &first {
        honest &= e.honest;
        let mut row = Row::info(format!("quadrature.{}", e.name), 0, e.true_error).err(e.estimate);
        row.eps = Some(e.rel_tol);
        rows.push(row.check(0.0, 2.0 * e.estimate, e.honest));
    }
    rows.push(Row::info("quadrature.bit_identical", 0, f64::from(u8::from(identical))).verdict(identical));
    let dishonest = first.iter().filter(|e| !e.honest).count();
    Ok(Outcome::new(
        10,
        "quadrature honesty",
        honest && identical,
        format!(
            "{} cases x {} tolerances, {dishonest} with true error above twice the estimate; reruns bit-identical: {identical}",
            first.len() / s.tols.len().max(1),
            s.tols.len()
        ),
        rows,
    ))
}

/// Settings for every experiment; absent sections take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub constants: ConstantsSettings,
    pub crown_energy: CrownEnergySettings,
    pub gram: GramSettings,
    pub kernel: KernelSettings,
    pub projection: ProjectionSettings,
    pub residual: ResidualSettings,
    pub expansion: ExpansionSettings,
    pub reduced: ReducedSettings,
    pub bounds: BoundsSettings,
    pub quadrature: QuadratureSettings,
}

/// Run criteria `1..=10` in order.
pub fn run_all(s: &Settings) -> Result<Vec<Outcome>> {
    Ok(vec![
        constants_check(&s.constants)?,
        crown_energy_check(&s.crown_energy)?,
        gram_check(&s.gram)?,
        kernel_check(&s.kernel)?,
        projection_check(&s.projection)?,
        residual_check(&s.residual)?,
        expansion_check_all(&s.expansion)?,
        reduced_check(&s.reduced)?,
        bounds_check(&s.bounds)?,
        quadrature_check(&s.quadrature)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalised_constants_pass_and_rows_are_labelled() {
        let out = constants_check(&ConstantsSettings {
            dims: vec![4],
            ..Default::default()
        })
        .unwrap();
        let norm = out.rows.iter().find(|r| r.experiment == "constants.c_tilde.normalised").unwrap();
        assert_eq!(norm.verdict, Some(Verdict::Pass));
        assert!(out.rows.iter().all(|r| r.n == 4));
    }

    #[test]
    fn reduced_bubble_only() {
        let out = reduced_check(&ReducedSettings {
            dims: vec![3],
            crown: None,
            ..Default::default()
        })
        .unwrap();
        assert!(out.verdict.passed(), "{out:?}");
        let d0 = out.rows.iter().find(|r| r.experiment == "reduced.d0").unwrap();
        assert!((d0.value - 1.0).abs() < 1e-12);
    }
}
