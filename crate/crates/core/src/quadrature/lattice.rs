//! Box-shell frequency lattices: tensor Gauss-Legendre rules on sup-norm annuli.
//!
//! A shell `{a ≤ |λ|_∞ < b}` splits exactly into boxes whose per-axis segments are
//! drawn from `[-b,-a]`, `[-a,0]`, `[0,a]`, `[a,b]`, excluding the boxes inside
//! `[-a,a]^d`. Coordinate hyperplanes are box faces, so `|λ_j|^{β_j}` never has a
//! kink inside a box.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{IntegralEstimate, QuadratureConfig};
use crate::error::{Error, Result};
use crate::model::{AnisotropicDensity, Density, SpectralModel};
use crate::quadrature::atoms_variogram;

type Rule = Arc<(Vec<f64>, Vec<f64>)>;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().unwrap().get(&n) {
        return r.clone();
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if n == 1 { (z, 1.0) } else { (p1, p0) };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n == 1 {
        w[0] = 2.0;
    }
    let rule = Arc::new((x, w));
    cache.lock().unwrap().insert(n, rule.clone());
    rule
}

/// Per-axis segments of the box shell `[a, b)`, flagged when inside `[-a, a]`.
fn segments(a: f64, b: f64) -> [(f64, f64, bool); 4] {
    [(-b, -a, false), (-a, 0.0, true), (0.0, a, true), (a, b, false)]
}

/// Boxes of the shell, restricted to `λ_1 > 0` when `half` is set.
pub fn shell_boxes(d: usize, a: f64, b: f64, half: bool) -> Vec<Vec<(f64, f64)>> {
    let segs = segments(a, b);
    let mut out = Vec::new();
    let total = 4usize.pow(d as u32);
    for code in 0..total {
        let mut c = code;
        let mut bx = Vec::with_capacity(d);
        let mut inner = true;
        for j in 0..d {
            let s = segs[c % 4];
            c /= 4;
            if half && j == 0 && s.1 <= 0.0 {
                inner = true;
                bx.clear();
                break;
            }
            inner &= s.2;
            bx.push((s.0, s.1));
        }
        if bx.len() == d && !inner {
            out.push(bx);
        }
    }
    out
}

/// Tensor Gauss nodes of one box; `counts[j]` nodes along axis `j`.
fn box_nodes(bx: &[(f64, f64)], counts: &[usize], mut visit: impl FnMut(&[f64], f64)) {
    let d = bx.len();
    let rules: Vec<Rule> = counts.iter().map(|n| gauss_legendre(*n)).collect();
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    loop {
        let mut w = 1.0;
        for j in 0..d {
            let (lo, hi) = bx[j];
            let half = 0.5 * (hi - lo);
            let (x, ww) = (&rules[j].0, &rules[j].1);
            point[j] = lo + half * (x[idx[j]] + 1.0);
            w *= half * ww[idx[j]];
        }
        visit(&point, w);
        let mut j = 0;
        loop {
            if j == d {
                return;
            }
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn oscillation_nodes(width: f64, extent: f64, base: usize) -> usize {
    let periods = width * extent / (2.0 * PI);
    base.max((8.0 * periods).ceil() as usize)
}

/// Frequency cells covering `r_min ≤ |λ|_∞ ≤ r_max` in the half-space `λ_1 > 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyLattice {
    pub dim: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Row-major `len × dim` node coordinates.
    pub nodes: Vec<f64>,
    /// Positive cell volumes (Gauss weights).
    pub weights: Vec<f64>,
    /// Index of the shell each cell belongs to.
    pub shell: Vec<u32>,
    pub shell_radii: Vec<f64>,
}

impl FrequencyLattice {
    /// `extent[j]` is the largest `|t_j|` the lattice must resolve.
    pub fn build(dim: usize, cfg: &QuadratureConfig, extent: &[f64]) -> Result<Self> {
        cfg.check()?;
        if extent.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: extent.len(),
            });
        }
        let ratio = 10f64.powf(1.0 / cfg.shells_per_decade as f64);
        let mut radii = vec![cfg.r_min];
        while *radii.last().unwrap() * ratio < cfg.r_max * (1.0 - 1e-12) {
            let next = radii.last().unwrap() * ratio;
            radii.push(next);
        }
        radii.push(cfg.r_max);
        let mut lat = FrequencyLattice {
            dim,
            r_min: cfg.r_min,
            r_max: cfg.r_max,
            nodes: Vec::new(),
            weights: Vec::new(),
            shell: Vec::new(),
            shell_radii: radii.clone(),
        };
        for (s, w) in radii.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            for bx in shell_boxes(dim, a, b, true) {
                let counts: Vec<usize> = bx
                    .iter()
                    .zip(extent)
                    .map(|(seg, e)| oscillation_nodes(seg.1 - seg.0, *e, cfg.points_per_shell_axis))
                    .collect();
                box_nodes(&bx, &counts, |p, wt| {
                    lat.nodes.extend_from_slice(p);
                    lat.weights.push(wt);
                    lat.shell.push(s as u32);
                });
            }
        }
        Ok(lat)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn shell_count(&self) -> usize {
        self.shell_radii.len() - 1
    }
}

/// `Π_{i≠j} c_i · Γ(γ − σ_j)/Γ(γ)` with `σ_j = Σ_{i≠j} 1/β_i`: the integral of
/// `(|x|^{β_j} + Σ_{i≠j} |λ_i|^{β_i})^{-γ}` over the other axes is this times
/// `|x|^{-(β_j α + 1)}`.
fn slab_constant(a: &AnisotropicDensity, j: usize) -> f64 {
    let sigma: f64 = a
        .beta
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, b)| 1.0 / b)
        .sum();
    let log_c: f64 = a
        .beta
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, b)| (2.0f64).ln() + ln_gamma(1.0 + 1.0 / b))
        .sum();
    (log_c + ln_gamma(a.gamma - sigma) - ln_gamma(a.gamma)).exp()
}

/// Upper bound on `∫_{|λ|_∞ < r} |e_t(λ)|² f(λ) dλ`.
pub fn inner_bound(a: &AnisotropicDensity, t: &[f64], r: f64) -> f64 {
    let alpha = a.alpha();
    let active: Vec<usize> = (0..a.dim()).filter(|j| t[*j] != 0.0).collect();
    let n = active.len() as f64;
    active
        .iter()
        .map(|&j| {
            let e = 2.0 - a.beta[j] * alpha;
            if e <= 0.0 {
                return f64::INFINITY;
            }
            n * t[j] * t[j] * slab_constant(a, j) * 2.0 * r.powf(e) / e
        })
        .sum()
}

/// Upper bound on `∫_{|λ|_∞ > r} |e_t(λ)|² f(λ) dλ` via `|e_t|² ≤ 4`.
pub fn tail_bound(a: &AnisotropicDensity, r: f64) -> f64 {
    let alpha = a.alpha();
    (0..a.dim())
        .map(|j| {
            let e = a.beta[j] * alpha;
            4.0 * slab_constant(a, j) * 2.0 * r.powf(-e) / e
        })
        .sum()
}

/// Variogram as the lattice sum `2 Σ_cells f(λ_c)·vol_c·|e_t(λ_c)|²`; the
/// truncation bound covers the omitted inner box and the tail beyond `r_max`.
pub fn lattice_variogram(
    model: &SpectralModel,
    t: &[f64],
    lattice: &FrequencyLattice,
) -> Result<IntegralEstimate> {
    if t.len() != model.dim() || lattice.dim != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: t.len(),
        });
    }
    if t.iter().all(|x| *x == 0.0) {
        return Ok(IntegralEstimate::zero());
    }
    let mut shells = vec![0.0; lattice.shell_count()];
    for i in 0..lattice.len() {
        let l = lattice.node(i);
        let phase: f64 = l.iter().zip(t).map(|(a, b)| a * b).sum();
        let e2 = 2.0 - 2.0 * phase.cos();
        shells[lattice.shell[i] as usize] += 2.0 * model.value(l) * lattice.weights[i] * e2;
    }
    let flat = model.flatten();
    let mut trunc = 0.0;
    for (w, a) in &flat.densities {
        trunc += w * (inner_bound(a, t, lattice.r_min) + tail_bound(a, lattice.r_max));
    }
    let mut value: f64 = shells.iter().sum();
    if let Some((w, atoms)) = &flat.atoms {
        let est = atoms_variogram(atoms, t, 1e-14);
        value += w * est.0;
        trunc += w * est.1;
        shells.push(w * est.0);
    }
    Ok(IntegralEstimate {
        value,
        error_estimate: 0.0,
        shell_values: shells,
        truncation_bound: trunc,
        converged: true,
    })
}

const SHELL_REL_TOL: f64 = 1e-7;
/// Box-rule evaluations allowed per shell beyond the initial tiling.
const SHELL_MAX_SPLITS: usize = 400;

/// `(∫ ((f1 − f0)/f0)², min f1/f0)` over one box with an `n`-point tensor rule.
fn ratio_box(f0: &dyn Density, f1: &dyn Density, bx: &[(f64, f64)], n: usize) -> (f64, f64) {
    let mut sum = 0.0;
    let mut min_ratio = f64::INFINITY;
    box_nodes(bx, &vec![n; bx.len()], |p, w| {
        let (v0, v1) = (f0.value(p), f1.value(p));
        let r = (v1 - v0) / v0;
        sum += w * r * r;
        min_ratio = min_ratio.min(v1 / v0);
    });
    (sum, min_ratio)
}

/// A box with its `3n/2`-point value and the gap to the `n`-point value.
struct RatedBox {
    bx: Vec<(f64, f64)>,
    value: f64,
    err: f64,
}

impl PartialEq for RatedBox {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}
impl Eq for RatedBox {}
impl PartialOrd for RatedBox {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for RatedBox {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn rate(f0: &dyn Density, f1: &dyn Density, bx: Vec<(f64, f64)>, n: usize, min_ratio: &mut f64) -> RatedBox {
    let (coarse, r0) = ratio_box(f0, f1, &bx, n);
    let (fine, r1) = ratio_box(f0, f1, &bx, n + n / 2);
    *min_ratio = min_ratio.min(r0).min(r1);
    RatedBox {
        bx,
        value: fine,
        err: (fine - coarse).abs(),
    }
}

/// Best-first refinement over `boxes`: the box with the largest error is bisected
/// along every axis until the total error meets `SHELL_REL_TOL` or the split
/// budget runs out. Returns `(value, error, min ratio)`.
fn adaptive_ratio(f0: &dyn Density, f1: &dyn Density, boxes: Vec<Vec<(f64, f64)>>, n: usize) -> (f64, f64, f64) {
    let mut min_ratio = f64::INFINITY;
    let mut heap: std::collections::BinaryHeap<RatedBox> =
        boxes.into_iter().map(|b| rate(f0, f1, b, n, &mut min_ratio)).collect();
    let total = |h: &std::collections::BinaryHeap<RatedBox>| {
        h.iter().fold((0.0, 0.0), |(v, e), b| (v + b.value, e + b.err))
    };
    for _ in 0..SHELL_MAX_SPLITS {
        let (value, err) = total(&heap);
        if err <= SHELL_REL_TOL * value.abs() {
            break;
        }
        let worst = heap.pop().expect("non-empty tiling");
        let d = worst.bx.len();
        for code in 0..(1usize << d) {
            let child: Vec<(f64, f64)> = worst
                .bx
                .iter()
                .enumerate()
                .map(|(j, &(lo, hi))| {
                    let mid = 0.5 * (lo + hi);
                    if code >> j & 1 == 0 {
                        (lo, mid)
                    } else {
                        (mid, hi)
                    }
                })
                .collect();
            heap.push(rate(f0, f1, child, n, &mut min_ratio));
        }
    }
    let (value, err) = total(&heap);
    (value, err, min_ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellIntegral {
    pub index: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub value: f64,
    pub error_estimate: f64,
    /// Minimum of `f1/f0` over the shell's nodes.
    pub min_density_ratio: f64,
    pub converged: bool,
}

/// `I_m = ∫_{2^{m-1}k ≤ |λ|_∞ < 2^m k} ((f1 − f0)/f0)² dλ` for `m = 1..=m_shells`.
pub fn tail_shell_integrals(
    f0: &dyn Density,
    f1: &dyn Density,
    k: f64,
    m_shells: usize,
    cfg: &QuadratureConfig,
) -> Result<Vec<ShellIntegral>> {
    if f0.dim() != f1.dim() {
        return Err(Error::DimensionMismatch {
            expected: f0.dim(),
            found: f1.dim(),
        });
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Config(format!("k = {k} must be positive")));
    }
    let d = f0.dim();
    let n = cfg.points_per_shell_axis.max(2);
    let shells: Vec<ShellIntegral> = (1..=m_shells)
        .into_par_iter()
        .map(|m| {
            let a = k * 2f64.powi(m as i32 - 1);
            let b = 2.0 * a;
            let (value, err, min_ratio) = adaptive_ratio(f0, f1, shell_boxes(d, a, b, true), n);
            // integrand is even, so the full shell is twice the half-space part
            ShellIntegral {
                index: m,
                inner_radius: a,
                outer_radius: b,
                value: 2.0 * value,
                error_estimate: 2.0 * err,
                min_density_ratio: min_ratio,
                converged: err <= 10.0 * SHELL_REL_TOL * value.abs() + 1e-300,
            }
        })
        .collect();
    Ok(shells)
}
