//! Realizations of stationary-increment fields on grids in `[−T, T]^d`.
//!
//! Random numbers follow a counter-style contract: the normals of cell (or grid
//! point) `i` in a sample with seed `s` come from the ChaCha8 stream `i` keyed by
//! `s`, so output never depends on evaluation order or thread count.

mod format;

pub use format::{decode_binary, encode_binary, write_csv, MAGIC, VERSION};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::model::{validate, Density, SpectralModel};
use crate::quadrature::{FrequencyLattice, QuadratureConfig};

/// Default cap on grid points for Cholesky sampling.
pub const CHOLESKY_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Half side `T` of the cube.
    pub t_half: f64,
    /// Odd, so that the origin is a node.
    pub points_per_axis: usize,
    pub d: usize,
}

impl GridSpec {
    pub fn new(t_half: f64, points_per_axis: usize, d: usize) -> Result<Self> {
        let g = Self {
            t_half,
            points_per_axis,
            d,
        };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.t_half.is_finite() && self.t_half > 0.0) {
            return Err(Error::Config(format!("T = {} must be positive", self.t_half)));
        }
        if self.points_per_axis.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "points_per_axis = {} must be odd so the origin is a node",
                self.points_per_axis
            )));
        }
        if self.d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if self.len_checked().is_none() {
            return Err(Error::Config("grid size overflows".into()));
        }
        Ok(())
    }

    fn len_checked(&self) -> Option<usize> {
        (0..self.d).try_fold(1usize, |acc, _| acc.checked_mul(self.points_per_axis))
    }

    pub fn len(&self) -> usize {
        self.len_checked().expect("checked grid")
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_nodes(&self) -> Vec<f64> {
        let p = self.points_per_axis;
        if p == 1 {
            return vec![0.0];
        }
        let half = (p - 1) / 2;
        (0..p)
            .map(|i| self.t_half * (i as f64 - half as f64) / half as f64)
            .collect()
    }

    /// Row-major points, last axis fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let nodes = self.axis_nodes();
        let p = self.points_per_axis;
        (0..self.len())
            .map(|mut idx| {
                let mut pt = vec![0.0; self.d];
                for j in (0..self.d).rev() {
                    pt[j] = nodes[idx % p];
                    idx /= p;
                }
                pt
            })
            .collect()
    }

    pub fn origin_index(&self) -> usize {
        let half = (self.points_per_axis - 1) / 2;
        (0..self.d).fold(0, |acc, _| acc * self.points_per_axis + half)
    }

    /// Index of the node equal to `x` (within `1e-9·T` per axis).
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.d {
            return None;
        }
        let p = self.points_per_axis;
        let half = ((p - 1) / 2) as f64;
        let mut idx = 0;
        for &xj in x {
            let k = if p == 1 { 0.0 } else { xj / self.t_half * half + half };
            let r = k.round();
            if (k - r).abs() > 1e-9 * half.max(1.0) || r < 0.0 || r > (p - 1) as f64 {
                return None;
            }
            idx = idx * p + r as usize;
        }
        Some(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Spectral,
    Cholesky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisMeta {
    pub cells: usize,
    pub atoms: usize,
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: GridSpec,
    /// Row-major values over `grid.points()`.
    pub values: Vec<f64>,
    pub method: Method,
    pub seed: u64,
    pub meta: Option<SynthesisMeta>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` standard normals from stream `stream` of `seed`.
pub fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, stream);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One normal per index `i < n`, each from its own stream.
pub fn point_normals(seed: u64, n: usize) -> Vec<f64> {
    (0..n as u64)
        .map(|i| StandardNormal.sample(&mut stream_rng(seed, i)))
        .collect()
}

/// Lattice and atom truncation for spectral synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub lattice: QuadratureConfig,
    /// Atoms summed explicitly when the family has no `n_max_explicit`.
    pub max_atoms: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            lattice: QuadratureConfig {
                r_min: 1e-2,
                r_max: 1e3,
                shells_per_decade: 8,
                points_per_shell_axis: 4,
                ..QuadratureConfig::default()
            },
            max_atoms: 1000,
        }
    }
}

/// A frequency with amplitude `a`: contributes `a·[ξ(cos⟨t,λ⟩ − 1) + η sin⟨t,λ⟩]`.
#[derive(Debug, Clone)]
struct Wave {
    lambda: Vec<f64>,
    amp: f64,
}

/// Precomputed spectral synthesis for one model and grid.
#[derive(Debug, Clone)]
pub struct SpectralSampler {
    grid: GridSpec,
    points: Vec<Vec<f64>>,
    waves: Vec<Wave>,
    meta: SynthesisMeta,
    /// `cos − 1` and `sin` per (wave, point), when small enough to cache.
    basis: Option<(Vec<f64>, Vec<f64>)>,
}

const BASIS_CACHE_LIMIT: usize = 20_000_000;

impl SpectralSampler {
    pub fn new(model: &SpectralModel, grid: GridSpec, cfg: &SynthesisConfig) -> Result<Self> {
        validate(model).into_result()?;
        grid.check()?;
        if model.dim() != grid.d {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: grid.d,
            });
        }
        let extent = vec![grid.t_half; grid.d];
        let mut waves = Vec::new();
        let mut cells = 0;
        if model.has_density() {
            let lat = FrequencyLattice::build(grid.d, &cfg.lattice, &extent)?;
            cells = lat.len();
            for i in 0..lat.len() {
                let l = lat.node(i);
                let f = model.value(l);
                waves.push(Wave {
                    lambda: l.to_vec(),
                    amp: (2.0 * f * lat.weights[i]).sqrt(),
                });
            }
        }
        let mut atoms = 0;
        let flat = model.flatten();
        if let Some((w, fam)) = &flat.atoms {
            if !fam.is_empty() && *w > 0.0 {
                atoms = fam.n_max_explicit.unwrap_or(cfg.max_atoms);
                for n in 1..=atoms {
                    let mut l = vec![0.0; grid.d];
                    l[fam.axis] = fam.location(n);
                    waves.push(Wave {
                        lambda: l,
                        amp: (2.0 * w * fam.mass(n)).sqrt(),
                    });
                }
            }
        }
        let points = grid.points();
        let basis = (waves.len().saturating_mul(points.len()) <= BASIS_CACHE_LIMIT).then(|| {
            let np = points.len();
            let mut c = vec![0.0; waves.len() * np];
            let mut s = vec![0.0; waves.len() * np];
            c.par_chunks_mut(np)
                .zip(s.par_chunks_mut(np))
                .zip(waves.par_iter())
                .for_each(|((cr, sr), w)| {
                    for (k, p) in points.iter().enumerate() {
                        let (cm1, sn) = wave_basis(&w.lambda, p);
                        cr[k] = cm1;
                        sr[k] = sn;
                    }
                });
            (c, s)
        });
        Ok(Self {
            grid,
            points,
            waves,
            basis,
            meta: SynthesisMeta {
                cells,
                atoms,
                r_min: cfg.lattice.r_min,
                r_max: cfg.lattice.r_max,
            },
        })
    }

    pub fn meta(&self) -> &SynthesisMeta {
        &self.meta
    }

    /// Variance the discrete synthesis produces at `t`: `Σ a²|e_t(λ)|²`.
    pub fn discrete_variogram(&self, t: &[f64]) -> f64 {
        self.waves
            .iter()
            .map(|w| {
                let (cm1, s) = wave_basis(&w.lambda, t);
                w.amp * w.amp * (cm1 * cm1 + s * s)
            })
            .sum()
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        let np = self.points.len();
        let mut values = vec![0.0; np];
        for (i, w) in self.waves.iter().enumerate() {
            let mut rng = stream_rng(seed, i as u64);
            let xi: f64 = StandardNormal.sample(&mut rng);
            let eta: f64 = StandardNormal.sample(&mut rng);
            let (a, b) = (w.amp * xi, w.amp * eta);
            match &self.basis {
                Some((c, s)) => {
                    let cr = &c[i * np..(i + 1) * np];
                    let sr = &s[i * np..(i + 1) * np];
                    for k in 0..np {
                        values[k] += a * cr[k] + b * sr[k];
                    }
                }
                None => {
                    for (k, p) in self.points.iter().enumerate() {
                        let (cm1, sn) = wave_basis(&w.lambda, p);
                        values[k] += a * cm1 + b * sn;
                    }
                }
            }
        }
        // every term vanishes at the origin; make it exact
        values[self.grid.origin_index()] = 0.0;
        FieldSample {
            grid: self.grid,
            values,
            method: Method::Spectral,
            seed,
            meta: Some(self.meta.clone()),
        }
    }
}

fn wave_basis(lambda: &[f64], t: &[f64]) -> (f64, f64) {
    let phase: f64 = lambda.iter().zip(t).map(|(a, b)| a * b).sum();
    let h = (0.5 * phase).sin();
    (-2.0 * h * h, phase.sin())
}

/// One spectral-synthesis sample.
pub fn sample_spectral(
    model: &SpectralModel,
    grid: GridSpec,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<FieldSample> {
    Ok(SpectralSampler::new(model, grid, cfg)?.sample(seed))
}

/// Deterministic relative bias `|Σ a²|e_t|² − v(t)| / v(t)` of the synthesis at `t`,
/// including the omitted low and high frequencies and any truncated atoms.
pub fn synthesis_bias(
    sampler: &SpectralSampler,
    model: &SpectralModel,
    t: &[f64],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let v = crate::quadrature::variogram(model, t, cfg)?.value;
    if v == 0.0 {
        return Ok(0.0);
    }
    let discrete = sampler.discrete_variogram(t);
    Ok((discrete - v).abs() / v)
}

/// Cholesky factor of `cov + δI`, starting from `δ = 0` and then `1e-14·trace/n`
/// raised by decades.
pub fn ridged_cholesky(cov: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = cov.nrows();
    let scale = cov.trace() / n as f64;
    let mut delta = 0.0;
    for _ in 0..12 {
        let shifted = cov + DMatrix::identity(n, n) * delta;
        if let Some(ch) = Cholesky::new(shifted) {
            return Ok((ch, delta));
        }
        delta = if delta == 0.0 { 1e-14 * scale } else { delta * 10.0 };
    }
    let min_diag = (0..n).map(|i| cov[(i, i)]).fold(f64::INFINITY, f64::min);
    Err(Error::Factorization {
        ridge: delta,
        detail: format!(
            "covariance of {n} points not positive definite (trace/n = {scale:e}, min diagonal = {min_diag:e})"
        ),
    })
}

/// Exact Gaussian sampling through the Cholesky factor of the grid covariance.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    grid: GridSpec,
    /// Grid indices of the non-origin points, in factor order.
    active: Vec<usize>,
    factor: Option<DMatrix<f64>>,
    pub ridge: f64,
}

impl CholeskySampler {
    pub fn new(model: &SpectralModel, grid: GridSpec, cfg: &QuadratureConfig, cap: usize) -> Result<Self> {
        grid.check()?;
        if model.dim() != grid.d {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                found: grid.d,
            });
        }
        if grid.len() > cap {
            return Err(Error::Config(format!(
                "{} grid points exceed the Cholesky cap of {cap}",
                grid.len()
            )));
        }
        let origin = grid.origin_index();
        let pts = grid.points();
        let active: Vec<usize> = (0..pts.len()).filter(|i| *i != origin).collect();
        if active.is_empty() {
            return Ok(Self {
                grid,
                active,
                factor: None,
                ridge: 0.0,
            });
        }
        let sub: Vec<Vec<f64>> = active.iter().map(|i| pts[*i].clone()).collect();
        let cov = crate::quadrature::covariance_matrix(model, &sub, cfg)?.matrix;
        let (factor, ridge) = ridged_cholesky(&cov)?;
        Ok(Self {
            grid,
            active,
            factor: Some(factor.unpack()),
            ridge,
        })
    }

    pub fn sample(&self, seed: u64) -> FieldSample {
        let mut values = vec![0.0; self.grid.len()];
        if let Some(l) = &self.factor {
            let n = self.active.len();
            let z = point_normals(seed, n);
            let x = l * DVector::from_vec(z);
            for (k, &i) in self.active.iter().enumerate() {
                values[i] = x[k];
            }
        }
        FieldSample {
            grid: self.grid,
            values,
            method: Method::Cholesky,
            seed,
            meta: None,
        }
    }
}

pub fn sample_cholesky(
    model: &SpectralModel,
    grid: GridSpec,
    cfg: &QuadratureConfig,
    seed: u64,
) -> Result<FieldSample> {
    Ok(CholeskySampler::new(model, grid, cfg, CHOLESKY_CAP)?.sample(seed))
}

/// `n` samples with seeds `base_seed, base_seed + 1, …`.
pub fn sample_batch<F: Fn(u64) -> FieldSample + Sync>(sample: F, base_seed: u64, n: usize) -> Vec<FieldSample> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| sample(base_seed.wrapping_add(i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementTest {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub var_unshifted: f64,
    pub var_shifted: f64,
    /// `var_shifted / var_unshifted`.
    pub ratio: f64,
    /// Two-sided F-test p-value.
    pub p_value: f64,
    pub pass: bool,
    /// True when `t = s` makes both variances vanish.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub samples: usize,
    pub level: f64,
    pub tests: Vec<IncrementTest>,
    pub pass: bool,
}

pub const MIN_STATIONARITY_SAMPLES: usize = 1000;

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Variance-ratio test of `Var(X(t+h) − X(s+h))` against `Var(X(t) − X(s))` at the 1% level.
pub fn stationarity_of_increments_test(
    samples: &[FieldSample],
    h: &[f64],
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<StationarityReport> {
    if samples.len() < MIN_STATIONARITY_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_STATIONARITY_SAMPLES,
            got: samples.len(),
        });
    }
    let grid = samples[0].grid;
    if samples.iter().any(|s| s.grid != grid) {
        return Err(Error::Config("samples are on different grids".into()));
    }
    let level = 0.01;
    let n = samples.len();
    let df = (n - 1) as f64;
    let fdist = FisherSnedecor::new(df, df).map_err(|e| Error::Domain(e.to_string()))?;
    let locate = |x: &[f64]| {
        grid.index_of(x)
            .ok_or_else(|| Error::Domain(format!("point {x:?} is not a grid node")))
    };
    let mut tests = Vec::new();
    for (t, s) in pairs {
        let shift = |p: &[f64]| -> Vec<f64> { p.iter().zip(h).map(|(a, b)| a + b).collect() };
        if t.len() != grid.d || s.len() != grid.d || h.len() != grid.d {
            return Err(Error::DimensionMismatch {
                expected: grid.d,
                found: t.len().min(s.len()).min(h.len()),
            });
        }
        let (it, is) = (locate(t)?, locate(s)?);
        let (ith, ish) = (locate(&shift(t))?, locate(&shift(s))?);
        if it == is {
            tests.push(IncrementTest {
                t: t.clone(),
                s: s.clone(),
                var_unshifted: 0.0,
                var_shifted: 0.0,
                ratio: 1.0,
                p_value: 1.0,
                pass: true,
                skipped: true,
            });
            continue;
        }
        let d0: Vec<f64> = samples.iter().map(|x| x.values[it] - x.values[is]).collect();
        let d1: Vec<f64> = samples.iter().map(|x| x.values[ith] - x.values[ish]).collect();
        let v0 = sample_variance(&d0);
        let v1 = sample_variance(&d1);
        let ratio = if ith == it && ish == is { 1.0 } else { v1 / v0 };
        let cdf = fdist.cdf(ratio);
        let p = (2.0 * cdf.min(1.0 - cdf)).clamp(0.0, 1.0);
        tests.push(IncrementTest {
            t: t.clone(),
            s: s.clone(),
            var_unshifted: v0,
            var_shifted: v1,
            ratio,
            p_value: p,
            pass: p >= level,
            skipped: false,
        });
    }
    let pass = tests.iter().all(|t| t.pass);
    Ok(StationarityReport {
        samples: n,
        level,
        tests,
        pass,
    })
}
