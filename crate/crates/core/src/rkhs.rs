//! Finite-rank Gram-inverse approximations of the reproducing kernel of the
//! closed span of `{e_t : t ∈ [−T, T]^d}` in `L²(F)`.
//!
//! With `e(ω) = (e^{i⟨t_j, ω⟩} − 1)_j` and Gram matrix `G`,
//! `K_n(ω, λ) = e(λ)ᵀ G⁻¹ conj(e(ω))`. Nested anchor sets give nested subspaces,
//! so `K_n(ω, ω)` is nondecreasing in `n`.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, Density, SpectralModel};
use crate::quadrature::{covariance_matrix, QuadratureConfig};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut x = 0.0;
    while i > 0 {
        x += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    x
}

/// First `n` Halton points mapped to `[−T, T]^d`, skipping any that land on the origin.
/// Prefixes are nested: `halton_anchors(d, T, m)` starts with `halton_anchors(d, T, n)` for `n ≤ m`.
pub fn halton_anchors(d: usize, t_half: f64, n: usize) -> Result<Vec<Vec<f64>>> {
    if d == 0 || d > PRIMES.len() {
        return Err(Error::Unsupported(format!("Halton anchors for d = {d}")));
    }
    let mut out = Vec::with_capacity(n);
    let mut i = 1u64;
    while out.len() < n {
        let p: Vec<f64> = (0..d)
            .map(|j| -t_half + 2.0 * t_half * radical_inverse(i, PRIMES[j]))
            .collect();
        i += 1;
        if p.iter().all(|x| *x == 0.0) {
            continue;
        }
        out.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FiniteRankKernel {
    pub dim: usize,
    pub t_half: f64,
    pub anchors: Vec<Vec<f64>>,
    pub gram: DMatrix<f64>,
    /// Ridge actually used in the factorization.
    pub ridge: f64,
    /// True when the default ridge failed and was increased.
    pub ridge_raised: bool,
    factor: Cholesky<f64, Dyn>,
}

/// Real and imaginary parts of `e(ω)`.
fn features(anchors: &[Vec<f64>], omega: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let n = anchors.len();
    let mut re = DVector::zeros(n);
    let mut im = DVector::zeros(n);
    for (j, t) in anchors.iter().enumerate() {
        let phase: f64 = t.iter().zip(omega).map(|(a, b)| a * b).sum();
        // cos − 1 without cancellation
        let h = (0.5 * phase).sin();
        re[j] = -2.0 * h * h;
        im[j] = phase.sin();
    }
    (re, im)
}

impl FiniteRankKernel {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: p.len(),
            });
        }
        Ok(())
    }

    /// `K_n(ω, λ)` as `(re, im)`.
    pub fn eval(&self, omega: &[f64], lambda: &[f64]) -> Result<(f64, f64)> {
        self.check_point(omega)?;
        self.check_point(lambda)?;
        let (wr, wi) = features(&self.anchors, omega);
        let (lr, li) = features(&self.anchors, lambda);
        let xr = self.factor.solve(&wr);
        let xi = self.factor.solve(&wi);
        // e(λ)ᵀ G⁻¹ conj(e(ω)) = (lr + i li)ᵀ (xr − i xi)
        Ok((lr.dot(&xr) + li.dot(&xi), li.dot(&xr) - lr.dot(&xi)))
    }

    /// `K_n(ω, ω) = aᵀG⁻¹a + bᵀG⁻¹b ≥ 0` with `e(ω) = a + ib`.
    pub fn diagonal(&self, omega: &[f64]) -> Result<f64> {
        self.check_point(omega)?;
        let (a, b) = features(&self.anchors, omega);
        let v = a.dot(&self.factor.solve(&a)) + b.dot(&self.factor.solve(&b));
        Ok(v.max(0.0))
    }

    /// `max_j |⟨e_{t_j}, K_n(ω, ·)⟩_F − e_{t_j}(ω)| = |G G_δ⁻¹ e(ω) − e(ω)|_∞` over `omegas`.
    pub fn reproducing_residual(&self, omegas: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for w in omegas {
            self.check_point(w)?;
            let (a, b) = features(&self.anchors, w);
            let ra = &self.gram * self.factor.solve(&a) - &a;
            let rb = &self.gram * self.factor.solve(&b) - &b;
            for j in 0..self.len() {
                worst = worst.max(ra[j].hypot(rb[j]));
            }
        }
        Ok(worst)
    }
}

/// Gram matrix of the anchors and its ridge-regularized Cholesky factor. A
/// `ridge` of `None` uses `1e-10·trace/n`, raised by decades until the
/// factorization succeeds.
pub fn build_kernel(
    model: &SpectralModel,
    t_half: f64,
    anchors: &[Vec<f64>],
    ridge: Option<f64>,
    cfg: &QuadratureConfig,
) -> Result<FiniteRankKernel> {
    validate(model).into_result()?;
    if !(t_half.is_finite() && t_half > 0.0) {
        return Err(Error::Domain(format!("T = {t_half} must be positive")));
    }
    if anchors.is_empty() {
        return Err(Error::Domain("at least one anchor is required".into()));
    }
    let d = model.dim();
    for a in anchors {
        if a.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: a.len(),
            });
        }
        if a.iter().any(|x| !(x.abs() <= t_half)) {
            return Err(Error::Domain(format!("anchor {a:?} outside [-T, T]^d")));
        }
    }
    let gram = covariance_matrix(model, anchors, cfg)?.matrix;
    let n = anchors.len();
    let scale = gram.trace() / n as f64;
    if !(scale > 0.0) {
        return Err(Error::Factorization {
            ridge: 0.0,
            detail: "Gram matrix has zero trace".into(),
        });
    }
    let requested = ridge.unwrap_or(1e-10 * scale);
    if requested < 0.0 {
        return Err(Error::Domain("ridge must be nonnegative".into()));
    }
    let mut delta = requested;
    for attempt in 0..16 {
        let shifted = &gram + DMatrix::identity(n, n) * delta;
        if let Some(factor) = Cholesky::new(shifted) {
            return Ok(FiniteRankKernel {
                dim: d,
                t_half,
                anchors: anchors.to_vec(),
                gram,
                ridge: delta,
                ridge_raised: attempt > 0,
                factor,
            });
        }
        delta = if delta == 0.0 { 1e-12 * scale } else { delta * 10.0 };
    }
    Err(Error::Factorization {
        ridge: delta,
        detail: "Gram matrix is not positive definite".into(),
    })
}

/// `(ω, K_n(ω, ω))` for each `ω`.
pub fn diagonal_profile(
    kernel: &FiniteRankKernel,
    omegas: &[Vec<f64>],
) -> Result<Vec<(Vec<f64>, f64)>> {
    omegas
        .par_iter()
        .map(|w| Ok((w.clone(), kernel.diagonal(w)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// `K_n(ω, ω)/|ω|²` near the origin.
    Small,
    /// `K_n(λ, λ)·f(λ)` at high frequency.
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub kind: ProbeKind,
    pub n: usize,
    pub omega: Vec<f64>,
    pub k_diag: f64,
    pub bound_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelLevel {
    pub n: usize,
    pub ridge: f64,
    pub ridge_raised: bool,
    pub reproducing_residual: f64,
    pub small_sup: f64,
    pub large_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    pub levels: Vec<KernelLevel>,
    /// `small_sup` ratios between successive levels.
    pub small_growth: Vec<f64>,
    pub large_growth: Vec<f64>,
    /// Largest successive-level ratio tolerated at the finest levels.
    pub growth_limit: f64,
    pub violation: bool,
    pub rows: Vec<DiagnosticRow>,
}

impl KernelDiagnostics {
    /// Columns `kind,n,omega,k_diag,bound_ratio`; vector `ω` components are joined by `;`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "kind,n,omega,k_diag,bound_ratio")?;
        for r in &self.rows {
            let kind = match r.kind {
                ProbeKind::Small => "small",
                ProbeKind::Large => "large",
            };
            let omega: Vec<String> = r.omega.iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{kind},{},{},{:e},{:e}", r.n, omega.join(";"), r.k_diag, r.bound_ratio)?;
        }
        Ok(())
    }
}

fn ratios(v: &[f64]) -> Vec<f64> {
    v.windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else if w[1] > 0.0 { f64::INFINITY } else { 1.0 })
        .collect()
}

/// Sup of `K_n(ω,ω)/|ω|²` over `small_omegas` and of `K_n(λ,λ)·f(λ)` over
/// `large_omegas` for each refinement `n` of a nested Halton anchor set. A
/// violation is flagged when either sup more than doubles between the last two levels.
pub fn check_diagonal_bounds(
    model: &SpectralModel,
    t_half: f64,
    refinements: &[usize],
    small_omegas: &[Vec<f64>],
    large_omegas: &[Vec<f64>],
    cfg: &QuadratureConfig,
) -> Result<KernelDiagnostics> {
    if refinements.is_empty() {
        return Err(Error::Config("need at least one refinement level".into()));
    }
    if !model.has_density() {
        return Err(Error::Unsupported("large-frequency probe needs a density".into()));
    }
    let d = model.dim();
    let n_max = *refinements.iter().max().expect("non-empty");
    let all = halton_anchors(d, t_half, n_max)?;
    let mut levels = Vec::new();
    let mut rows = Vec::new();
    for &n in refinements {
        let kernel = build_kernel(model, t_half, &all[..n], None, cfg)?;
        let mut probes: Vec<Vec<f64>> = small_omegas.to_vec();
        probes.extend_from_slice(large_omegas);
        let residual = kernel.reproducing_residual(&probes)?;
        let mut small_sup: f64 = 0.0;
        for (w, k) in diagonal_profile(&kernel, small_omegas)? {
            let r2: f64 = w.iter().map(|x| x * x).sum();
            let ratio = if r2 > 0.0 { k / r2 } else { 0.0 };
            small_sup = small_sup.max(ratio);
            rows.push(DiagnosticRow {
                kind: ProbeKind::Small,
                n,
                omega: w,
                k_diag: k,
                bound_ratio: ratio,
            });
        }
        let mut large_sup: f64 = 0.0;
        for (w, k) in diagonal_profile(&kernel, large_omegas)? {
            let ratio = if w.iter().any(|x| *x != 0.0) { k * model.value(&w) } else { 0.0 };
            large_sup = large_sup.max(ratio);
            rows.push(DiagnosticRow {
                kind: ProbeKind::Large,
                n,
                omega: w,
                k_diag: k,
                bound_ratio: ratio,
            });
        }
        levels.push(KernelLevel {
            n,
            ridge: kernel.ridge,
            ridge_raised: kernel.ridge_raised,
            reproducing_residual: residual,
            small_sup,
            large_sup,
        });
    }
    let small: Vec<f64> = levels.iter().map(|l| l.small_sup).collect();
    let large: Vec<f64> = levels.iter().map(|l| l.large_sup).collect();
    let small_growth = ratios(&small);
    let large_growth = ratios(&large);
    let growth_limit = 2.0;
    let violation = small.iter().chain(&large).any(|x| !x.is_finite())
        || small_growth.last().is_some_and(|r| *r > growth_limit)
        || large_growth.last().is_some_and(|r| *r > growth_limit);
    Ok(KernelDiagnostics {
        levels,
        small_growth,
        large_growth,
        growth_limit,
        violation,
        rows,
    })
}
