//! Globally adaptive cubature on unions of boxes: Gauss–Kronrod (7,15) in one
//! dimension, the Genz–Malik degree-7/5 embedded rule in two or more.
//!
//! Regions are refined in order of decreasing error with a deterministic
//! tie-break, and the final sums are taken in creation order, so a fixed
//! integrand and option set always yields the same bits.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Cell {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Tensor grid of sub-boxes cut at the given interior breakpoints.
    pub fn split_at(&self, cuts: &[Vec<f64>]) -> Vec<Cell> {
        let d = self.dim();
        let edges: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let mut e = vec![self.lo[i]];
                let mut inner: Vec<f64> = cuts
                    .get(i)
                    .map(|c| {
                        c.iter()
                            .copied()
                            .filter(|&x| x > self.lo[i] && x < self.hi[i])
                            .collect()
                    })
                    .unwrap_or_default();
                inner.sort_by(f64::total_cmp);
                inner.dedup();
                e.extend(inner);
                e.push(self.hi[i]);
                e
            })
            .collect();
        let mut out = vec![Cell::new(Vec::new(), Vec::new())];
        for e in &edges {
            let mut next = Vec::with_capacity(out.len() * (e.len() - 1));
            for c in &out {
                for w in e.windows(2) {
                    let mut lo = c.lo.clone();
                    let mut hi = c.hi.clone();
                    lo.push(w[0]);
                    hi.push(w[1]);
                    next.push(Cell::new(lo, hi));
                }
            }
            out = next;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubatureOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of bisections along any lineage of a region.
    pub max_depth: u32,
    pub max_evals: usize,
}

impl Default for CubatureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-14,
            max_depth: 40,
            max_evals: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubatureResult {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
    pub evaluations: usize,
    pub regions: usize,
}

impl CubatureResult {
    pub fn max_error(&self) -> f64 {
        self.error.iter().copied().fold(0.0, f64::max)
    }
}

struct Region {
    cell: Cell,
    depth: u32,
    value: Vec<f64>,
    error: Vec<f64>,
    split_axis: usize,
    id: u64,
}

struct Keyed {
    key: f64,
    id: u64,
    region: Region,
}

impl PartialEq for Keyed {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Keyed {}
impl PartialOrd for Keyed {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Keyed {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key.total_cmp(&o.key).then_with(|| o.id.cmp(&self.id))
    }
}

const GK_X: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const ROUNDOFF: f64 = 50.0 * f64::EPSILON;

/// Evaluation scratch shared by every rule invocation.
struct Scratch {
    point: Vec<f64>,
    f: Vec<f64>,
    f0: Vec<f64>,
    fabs: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    s4: Vec<f64>,
    s5: Vec<f64>,
    diff: Vec<f64>,
}

impl Scratch {
    fn new(d: usize, m: usize) -> Self {
        Self {
            point: vec![0.0; d],
            f: vec![0.0; m],
            f0: vec![0.0; m],
            fabs: vec![0.0; m],
            s2: vec![0.0; m],
            s3: vec![0.0; m],
            s4: vec![0.0; m],
            s5: vec![0.0; m],
            diff: vec![0.0; d],
        }
    }
}

fn gauss_kronrod<F: FnMut(&[f64], &mut [f64])>(
    f: &mut F,
    cell: &Cell,
    s: &mut Scratch,
    value: &mut [f64],
    error: &mut [f64],
) -> usize {
    let m = value.len();
    let c = 0.5 * (cell.lo[0] + cell.hi[0]);
    let h = 0.5 * (cell.hi[0] - cell.lo[0]);
    let mut kron = vec![0.0; m];
    let mut gauss = vec![0.0; m];
    s.fabs.iter_mut().for_each(|v| *v = 0.0);
    s.point[0] = c;
    f(&s.point, &mut s.f);
    for i in 0..m {
        kron[i] = GK_WK[7] * s.f[i];
        gauss[i] = GK_WG[3] * s.f[i];
        s.fabs[i] = GK_WK[7] * s.f[i].abs();
    }
    for j in 0..7 {
        for sign in [-1.0, 1.0] {
            s.point[0] = c + sign * h * GK_X[j];
            f(&s.point, &mut s.f);
            for i in 0..m {
                kron[i] += GK_WK[j] * s.f[i];
                s.fabs[i] += GK_WK[j] * s.f[i].abs();
                if j % 2 == 1 {
                    gauss[i] += GK_WG[j / 2] * s.f[i];
                }
            }
        }
    }
    for i in 0..m {
        value[i] = kron[i] * h;
        error[i] = ((kron[i] - gauss[i]) * h).abs() + ROUNDOFF * s.fabs[i] * h.abs();
    }
    15
}

/// Genz–Malik rule; returns the number of evaluations and writes the axis
/// with the largest fourth difference into `axis`.
fn genz_malik<F: FnMut(&[f64], &mut [f64])>(
    f: &mut F,
    cell: &Cell,
    s: &mut Scratch,
    value: &mut [f64],
    error: &mut [f64],
    axis: &mut usize,
) -> usize {
    let d = cell.dim();
    let m = value.len();
    let df = d as f64;
    let l2 = (9.0f64 / 70.0).sqrt();
    let l4 = (9.0f64 / 10.0).sqrt();
    let l5 = (9.0f64 / 19.0).sqrt();
    let w1 = (12824.0 - 9120.0 * df + 400.0 * df * df) / 19683.0;
    let w2 = 980.0 / 6561.0;
    let w3 = (1820.0 - 400.0 * df) / 19683.0;
    let w4 = 200.0 / 19683.0;
    let w5 = 6859.0 / 19683.0 / (1u64 << d) as f64;
    let e1 = (729.0 - 950.0 * df + 50.0 * df * df) / 729.0;
    let e2 = 245.0 / 486.0;
    let e3 = (265.0 - 100.0 * df) / 1458.0;
    let e4 = 25.0 / 729.0;
    let ratio = (l2 / l4).powi(2);

    let centre: Vec<f64> = (0..d).map(|i| 0.5 * (cell.lo[i] + cell.hi[i])).collect();
    let half: Vec<f64> = (0..d).map(|i| 0.5 * (cell.hi[i] - cell.lo[i])).collect();
    let vol: f64 = half.iter().map(|h| 2.0 * h).product();

    for v in [&mut s.s2, &mut s.s3, &mut s.s4, &mut s.s5, &mut s.fabs] {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    s.point.copy_from_slice(&centre);
    f(&s.point, &mut s.f0);
    let mut evals = 1;
    let mut fabs = vec![0.0; m];
    for i in 0..m {
        fabs[i] += w1.abs() * s.f0[i].abs();
    }
    let f0_norm: f64 = s.f0.iter().map(|v| v.abs()).sum();

    for k in 0..d {
        let mut fl2 = 0.0;
        let mut fl4 = 0.0;
        for sign in [-1.0, 1.0] {
            s.point[k] = centre[k] + sign * l2 * half[k];
            f(&s.point, &mut s.f);
            for i in 0..m {
                s.s2[i] += s.f[i];
                fabs[i] += w2 * s.f[i].abs();
            }
            fl2 += s.f.iter().map(|v| v.abs()).sum::<f64>();
            s.point[k] = centre[k] + sign * l4 * half[k];
            f(&s.point, &mut s.f);
            for i in 0..m {
                s.s3[i] += s.f[i];
                fabs[i] += w3.abs() * s.f[i].abs();
            }
            fl4 += s.f.iter().map(|v| v.abs()).sum::<f64>();
        }
        s.point[k] = centre[k];
        evals += 4;
        s.diff[k] = (fl2 - 2.0 * f0_norm - ratio * (fl4 - 2.0 * f0_norm)).abs();
    }
    // Component-wise fourth differences are more robust than norms.
    // Recompute them cheaply only when the norm-based ones are all zero.
    for k in 0..d {
        for l in k + 1..d {
            for sk in [-1.0, 1.0] {
                for sl in [-1.0, 1.0] {
                    s.point[k] = centre[k] + sk * l4 * half[k];
                    s.point[l] = centre[l] + sl * l4 * half[l];
                    f(&s.point, &mut s.f);
                    for i in 0..m {
                        s.s4[i] += s.f[i];
                        fabs[i] += w4 * s.f[i].abs();
                    }
                    evals += 1;
                }
            }
            s.point[k] = centre[k];
            s.point[l] = centre[l];
        }
    }
    for mask in 0u64..(1u64 << d) {
        for k in 0..d {
            let sign = if mask >> k & 1 == 1 { 1.0 } else { -1.0 };
            s.point[k] = centre[k] + sign * l5 * half[k];
        }
        f(&s.point, &mut s.f);
        for i in 0..m {
            s.s5[i] += s.f[i];
            fabs[i] += w5 * s.f[i].abs();
        }
        evals += 1;
    }
    for i in 0..m {
        let r7 = w1 * s.f0[i] + w2 * s.s2[i] + w3 * s.s3[i] + w4 * s.s4[i] + w5 * s.s5[i];
        let r5 = e1 * s.f0[i] + e2 * s.s2[i] + e3 * s.s3[i] + e4 * s.s4[i];
        value[i] = vol * r7;
        error[i] = (vol * (r7 - r5)).abs() + ROUNDOFF * vol * fabs[i];
    }
    let mut best = 0;
    for k in 1..d {
        let dk = s.diff[k];
        let db = s.diff[best];
        if dk > db * (1.0 + 1e-12) || ((dk - db).abs() <= 1e-12 * db && half[k] > half[best]) {
            best = k;
        }
    }
    *axis = best;
    evals
}

fn evaluate<F: FnMut(&[f64], &mut [f64])>(
    f: &mut F,
    cell: Cell,
    depth: u32,
    id: u64,
    m: usize,
    s: &mut Scratch,
) -> Result<(Region, usize)> {
    let mut value = vec![0.0; m];
    let mut error = vec![0.0; m];
    let mut axis = 0;
    let evals = if cell.dim() == 1 {
        gauss_kronrod(f, &cell, s, &mut value, &mut error)
    } else {
        genz_malik(f, &cell, s, &mut value, &mut error, &mut axis)
    };
    if value.iter().chain(&error).any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "integrand not finite on the cell {:?}..{:?}",
            cell.lo, cell.hi
        )));
    }
    Ok((
        Region {
            cell,
            depth,
            value,
            error,
            split_axis: axis,
            id,
        },
        evals,
    ))
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Integrate the `m`-component integrand `f` over the union of `cells`.
///
/// Converged when `max_i err_i ≤ max(abs_tol, rel_tol · max_i |I_i|)`.
pub fn integrate_cells<F>(
    mut f: F,
    m: usize,
    cells: Vec<Cell>,
    opts: &CubatureOptions,
) -> Result<CubatureResult>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Error::Parameter("tolerances must be positive".into()));
    }
    if opts.max_depth > 40 {
        return Err(Error::Parameter("max_depth must not exceed 40".into()));
    }
    let d = cells.first().map(Cell::dim).unwrap_or(0);
    if d == 0 || cells.iter().any(|c| c.dim() != d) {
        return Err(Error::Parameter("cells must be non-empty and of equal dimension".into()));
    }
    let mut s = Scratch::new(d, m);
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Region> = Vec::new();
    let mut next_id = 0u64;
    let mut evals = 0usize;
    let mut tot_v = vec![0.0; m];
    let mut tot_e = vec![0.0; m];
    for cell in cells {
        let (r, e) = evaluate(&mut f, cell, 0, next_id, m, &mut s)?;
        next_id += 1;
        evals += e;
        for i in 0..m {
            tot_v[i] += r.value[i];
            tot_e[i] += r.error[i];
        }
        heap.push(Keyed {
            key: norm_inf(&r.error),
            id: r.id,
            region: r,
        });
    }
    let mut iter = 0usize;
    loop {
        iter += 1;
        if iter % 512 == 0 {
            // Refresh running sums to stop drift from repeated subtraction.
            tot_v.iter_mut().for_each(|v| *v = 0.0);
            tot_e.iter_mut().for_each(|v| *v = 0.0);
            for r in heap.iter().map(|k| &k.region).chain(frozen.iter()) {
                for i in 0..m {
                    tot_v[i] += r.value[i];
                    tot_e[i] += r.error[i];
                }
            }
        }
        let target = opts.abs_tol.max(opts.rel_tol * norm_inf(&tot_v));
        if norm_inf(&tot_e) <= target {
            break;
        }
        if evals >= opts.max_evals {
            return Err(non_convergence(heap, frozen, m, evals));
        }
        let Some(top) = heap.pop() else {
            return Err(non_convergence(heap, frozen, m, evals));
        };
        let r = top.region;
        if r.depth >= opts.max_depth {
            frozen.push(r);
            continue;
        }
        for i in 0..m {
            tot_v[i] -= r.value[i];
            tot_e[i] -= r.error[i];
        }
        let ax = r.split_axis;
        let mid = 0.5 * (r.cell.lo[ax] + r.cell.hi[ax]);
        let mut a = r.cell.clone();
        let mut b = r.cell;
        a.hi[ax] = mid;
        b.lo[ax] = mid;
        for c in [a, b] {
            let (child, e) = evaluate(&mut f, c, r.depth + 1, next_id, m, &mut s)?;
            next_id += 1;
            evals += e;
            for i in 0..m {
                tot_v[i] += child.value[i];
                tot_e[i] += child.error[i];
            }
            heap.push(Keyed {
                key: norm_inf(&child.error),
                id: child.id,
                region: child,
            });
        }
    }
    let (value, error, regions) = final_sums(heap, frozen, m);
    Ok(CubatureResult {
        value,
        error,
        evaluations: evals,
        regions,
    })
}

fn final_sums(heap: BinaryHeap<Keyed>, frozen: Vec<Region>, m: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let mut all: Vec<Region> = heap.into_iter().map(|k| k.region).chain(frozen).collect();
    all.sort_by_key(|r| r.id);
    let mut v = vec![0.0; m];
    let mut comp = vec![0.0; m];
    let mut e = vec![0.0; m];
    for r in &all {
        for i in 0..m {
            // Neumaier summation for the values.
            let t = v[i] + r.value[i];
            if v[i].abs() >= r.value[i].abs() {
                comp[i] += (v[i] - t) + r.value[i];
            } else {
                comp[i] += (r.value[i] - t) + v[i];
            }
            v[i] = t;
            e[i] += r.error[i];
        }
    }
    for i in 0..m {
        v[i] += comp[i];
    }
    (v, e, all.len())
}

fn non_convergence(heap: BinaryHeap<Keyed>, frozen: Vec<Region>, m: usize, evaluations: usize) -> Error {
    let (estimate, error, _) = final_sums(heap, frozen, m);
    Error::NonConvergence {
        error: norm_inf(&error),
        estimate,
        evaluations,
    }
}

/// Scalar convenience wrapper around [`integrate_cells`].
pub fn integrate_box<F>(mut f: F, lo: &[f64], hi: &[f64], opts: &CubatureOptions) -> Result<(f64, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    let r = integrate_cells(
        |x, out| out[0] = f(x),
        1,
        vec![Cell::new(lo.to_vec(), hi.to_vec())],
        opts,
    )?;
    Ok((r.value[0], r.error[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn genz_malik_is_exact_for_degree_seven() {
        let mut s = Scratch::new(3, 1);
        let cell = Cell::new(vec![0.0, -1.0, 0.5], vec![1.0, 2.0, 1.5]);
        let mut f = |x: &[f64], o: &mut [f64]| o[0] = x[0].powi(7) + x[1].powi(3) * x[2].powi(4) + x[0] * x[1] * x[2];
        let (mut v, mut e, mut ax) = ([0.0], [0.0], 0);
        genz_malik(&mut f, &cell, &mut s, &mut v, &mut e, &mut ax);
        let exact = 3.0 / 8.0 + (16.0 - 1.0) / 4.0 * (1.5f64.powi(5) - 0.5f64.powi(5)) / 5.0 + 0.5 * 1.5 * 1.0;
        assert_relative_eq!(v[0], exact, max_relative = 1e-13);
    }

    #[test]
    fn gauss_kronrod_polynomial() {
        let (v, _) = integrate_box(|x| x[0].powi(10), &[0.0], &[2.0], &CubatureOptions::default()).unwrap();
        assert_relative_eq!(v, 2f64.powi(11) / 11.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_peak() {
        let opts = CubatureOptions {
            rel_tol: 1e-9,
            ..Default::default()
        };
        let (v, e) = integrate_box(
            |x| 1.0 / (1e-4 + (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2)),
            &[0.0, 0.0],
            &[1.0, 1.0],
            &opts,
        )
        .unwrap();
        let (r, _) = integrate_box(
            |x| {
                let y = x[0];
                // inner integral in closed form
                let c = 1e-4 + (y - 0.3).powi(2);
                ((0.4 / c.sqrt()).atan() + (0.6 / c.sqrt()).atan()) / c.sqrt()
            },
            &[0.0],
            &[1.0],
            &opts,
        )
        .unwrap();
        assert!((v - r).abs() <= 2.0 * e + 1e-9 * r, "{v} {r} {e}");
    }

    #[test]
    fn deterministic_bits() {
        let f = |x: &[f64]| (x[0] * 3.0 + x[1] * x[2]).sin() / (0.1 + x[0] * x[0]);
        let opts = CubatureOptions::default();
        let a = integrate_box(f, &[0.0; 3], &[1.0; 3], &opts).unwrap();
        let b = integrate_box(f, &[0.0; 3], &[1.0; 3], &opts).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    #[test]
    fn non_convergence_carries_estimate() {
        let opts = CubatureOptions {
            max_evals: 2000,
            rel_tol: 1e-14,
            ..Default::default()
        };
        let err = integrate_box(|x| x[0].powf(-0.9), &[0.0, 0.0], &[1.0, 1.0], &opts).unwrap_err();
        match err {
            Error::NonConvergence { estimate, .. } => assert!(estimate[0] > 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_cells_cover_box() {
        let c = Cell::new(vec![0.0, 0.0], vec![1.0, 2.0]);
        let parts = c.split_at(&[vec![0.5, 3.0], vec![0.1, 1.0]]);
        assert_eq!(parts.len(), 6);
        let area: f64 = parts
            .iter()
            .map(|p| (p.hi[0] - p.lo[0]) * (p.hi[1] - p.lo[1]))
            .sum();
        assert_relative_eq!(area, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = integrate_box(|x| 1.0 / x[0], &[-1.0, 0.0], &[1.0, 1.0], &CubatureOptions::default());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_options() {
        let opts = CubatureOptions {
            max_depth: 41,
            ..Default::default()
        };
        assert!(integrate_box(|_| 1.0, &[0.0], &[1.0], &opts).is_err());
    }
}
