//! Likelihood-ratio and norm-ratio studies contrasting equivalent and singular pairs.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{h_from_beta_gamma, validate, HFormDensity, SpectralModel};
use crate::quadrature::{covariance_matrix, variogram, QuadratureConfig};
use crate::simulate::{point_normals, ridged_cholesky, GridSpec};

pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlrStudyConfig {
    pub model0: SpectralModel,
    pub model1: SpectralModel,
    /// Nested grids of increasing resolution.
    pub grids: Vec<GridSpec>,
    pub n_replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

impl LlrStudyConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_replications < MIN_REPLICATIONS {
            return Err(Error::Config(format!(
                "n_replications = {} is below {MIN_REPLICATIONS}",
                self.n_replications
            )));
        }
        if self.grids.is_empty() {
            return Err(Error::Config("at least one grid is required".into()));
        }
        for g in &self.grids {
            g.check()?;
            if g.d != self.model0.dim() || g.d != self.model1.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.model0.dim(),
                    found: g.d,
                });
            }
        }
        for w in self.grids.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let nested = a.t_half == b.t_half
                && b.points_per_axis > a.points_per_axis
                && (b.points_per_axis - 1) % (a.points_per_axis - 1).max(1) == 0;
            if !nested {
                return Err(Error::Config(format!(
                    "grid with {} points per axis is not nested in the one with {}",
                    a.points_per_axis, b.points_per_axis
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub points_per_axis: usize,
    /// Non-origin points entering the likelihood.
    pub n_points: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub median_abs: f64,
    pub ridge0: f64,
    pub ridge1: f64,
    /// `median_abs` over that of the previous grid.
    pub growth_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlrStudy {
    pub grids: Vec<GridSummary>,
    /// `llr[g][r]` for grid `g` and replication `r`.
    pub llr: Vec<Vec<f64>>,
}

impl LlrStudy {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.grids).expect("summaries always serialize")
    }

    /// Columns `grid,n_points,replication,llr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "grid,n_points,replication,llr")?;
        for (g, (s, vals)) in self.grids.iter().zip(&self.llr).enumerate() {
            for (r, v) in vals.iter().enumerate() {
                writeln!(w, "{g},{},{r},{v:e}", s.n_points)?;
            }
        }
        Ok(())
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

struct Gaussian {
    chol: Cholesky<f64, Dyn>,
    lower: DMatrix<f64>,
    log_det: f64,
    ridge: f64,
}

impl Gaussian {
    fn new(model: &SpectralModel, points: &[Vec<f64>], cfg: &QuadratureConfig) -> Result<Self> {
        let cov = covariance_matrix(model, points, cfg)?.matrix;
        let (chol, ridge) = ridged_cholesky(&cov)?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(Self {
            lower: chol.l(),
            chol,
            log_det,
            ridge,
        })
    }

    /// `xᵀΣ⁻¹x = |L⁻¹x|²`.
    fn quad(&self, x: &DVector<f64>) -> f64 {
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(x)
            .expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }
}

/// `log(dP₀/dP₁)(x) = ½(xᵀΣ₁⁻¹x − xᵀΣ₀⁻¹x) + ½(log det Σ₁ − log det Σ₀)`.
fn llr(g0: &Gaussian, g1: &Gaussian, x: &DVector<f64>) -> f64 {
    0.5 * (g1.quad(x) - g0.quad(x)) + 0.5 * (g1.log_det - g0.log_det)
}

/// Simulates under `model0` by Cholesky sampling and evaluates the log-likelihood
/// ratio on each grid. Replication `r` uses seed `seed + r`.
pub fn llr_study(cfg: &LlrStudyConfig) -> Result<LlrStudy> {
    cfg.check()?;
    validate(&cfg.model0).into_result()?;
    validate(&cfg.model1).into_result()?;
    let mut grids = Vec::new();
    let mut all = Vec::new();
    let mut prev: Option<f64> = None;
    for grid in &cfg.grids {
        let points = non_origin_points(grid);
        let g0 = Gaussian::new(&cfg.model0, &points, &cfg.quadrature)?;
        let same = cfg.model0 == cfg.model1;
        let g1 = if same {
            None
        } else {
            Some(Gaussian::new(&cfg.model1, &points, &cfg.quadrature)?)
        };
        let g1r = g1.as_ref().unwrap_or(&g0);
        let n = points.len();
        let values: Vec<f64> = (0..cfg.n_replications as u64)
            .into_par_iter()
            .map(|r| {
                let z = DVector::from_vec(point_normals(cfg.seed.wrapping_add(r), n));
                let x = &g0.lower * z;
                llr(&g0, g1r, &x)
            })
            .collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let median_abs = quantile(&abs, 0.5);
        let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
        grids.push(GridSummary {
            points_per_axis: grid.points_per_axis,
            n_points: n,
            median: quantile(&sorted, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
            median_abs,
            ridge0: g0.ridge,
            ridge1: g1r.ridge,
            growth_ratio: prev.map(|p| if p > 0.0 { median_abs / p } else { f64::NAN }),
        });
        prev = Some(median_abs);
        all.push(values);
    }
    Ok(LlrStudy { grids, llr: all })
}

/// LLR values for the given fields (rows of `samples`, non-origin points only),
/// used to check antisymmetry on identical inputs.
pub fn llr_values(
    model0: &SpectralModel,
    model1: &SpectralModel,
    points: &[Vec<f64>],
    samples: &[Vec<f64>],
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let g0 = Gaussian::new(model0, points, cfg)?;
    let g1 = Gaussian::new(model1, points, cfg)?;
    samples
        .iter()
        .map(|s| {
            if s.len() != points.len() {
                return Err(Error::DimensionMismatch {
                    expected: points.len(),
                    found: s.len(),
                });
            }
            Ok(llr(&g0, &g1, &DVector::from_column_slice(s)))
        })
        .collect()
}

/// Draws one field under `model` on `points` with seed `seed`.
pub fn draw(model: &SpectralModel, points: &[Vec<f64>], seed: u64, cfg: &QuadratureConfig) -> Result<Vec<f64>> {
    let g = Gaussian::new(model, points, cfg)?;
    let z = DVector::from_vec(point_normals(seed, points.len()));
    Ok((&g.lower * z).iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRatioRow {
    pub t: f64,
    pub v0: f64,
    pub v1: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRatioStudy {
    pub axis: usize,
    pub rows: Vec<NormRatioRow>,
    /// OLS slope of `log r` against `log t`.
    pub slope: f64,
    /// `2(H¹_j − H⁰_j)`.
    pub predicted_slope: f64,
}

impl NormRatioStudy {
    /// Columns `t,v0,v1,ratio`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,v0,v1,ratio")?;
        for r in &self.rows {
            writeln!(w, "{:e},{:e},{:e},{:e}", r.t, r.v0, r.v1, r.ratio)?;
        }
        Ok(())
    }
}

/// `(slope, intercept)` of the least-squares line through `(x, y)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `r(t) = v₁(t·e_j)/v₀(t·e_j)` and its log-log slope.
pub fn norm_ratio_study(
    h0: &HFormDensity,
    h1: &HFormDensity,
    axis: usize,
    t_values: &[f64],
    cfg: &QuadratureConfig,
) -> Result<NormRatioStudy> {
    if h0.dim() != h1.dim() {
        return Err(Error::DimensionMismatch {
            expected: h0.dim(),
            found: h1.dim(),
        });
    }
    if axis >= h0.dim() {
        return Err(Error::Domain(format!("axis {axis} out of range for d = {}", h0.dim())));
    }
    if t_values.len() < 2 || t_values.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Domain("need at least two positive t values".into()));
    }
    let m0 = SpectralModel::Hform(h0.clone());
    let m1 = SpectralModel::Hform(h1.clone());
    let rows: Vec<NormRatioRow> = t_values
        .par_iter()
        .map(|&t| {
            let mut p = vec![0.0; h0.dim()];
            p[axis] = t;
            let v0 = variogram(&m0, &p, cfg)?.value;
            let v1 = variogram(&m1, &p, cfg)?.value;
            Ok(NormRatioRow {
                t,
                v0,
                v1,
                ratio: v1 / v0,
            })
        })
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.ratio.ln()).collect();
    let (slope, _) = ols(&lx, &ly);
    let hh0 = h_from_beta_gamma(&h0.to_anisotropic()).h[axis];
    let hh1 = h_from_beta_gamma(&h1.to_anisotropic()).h[axis];
    Ok(NormRatioStudy {
        axis,
        rows,
        slope,
        predicted_slope: 2.0 * (hh1 - hh0),
    })
}

/// Log-spaced values `lo·(hi/lo)^{i/(n−1)}`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Point list of a grid without its origin, in row-major order.
pub fn non_origin_points(grid: &GridSpec) -> Vec<Vec<f64>> {
    let origin = grid.origin_index();
    grid.points()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != origin)
        .map(|(_, p)| p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grids() -> Vec<GridSpec> {
        [5, 9, 17].iter().map(|p| GridSpec::new(1.0, *p, 1).unwrap()).collect()
    }

    #[test]
    fn self_llr_is_exactly_zero() {
        let m = SpectralModel::hform(vec![0.4]);
        let s = llr_study(&LlrStudyConfig {
            model0: m.clone(),
            model1: m,
            grids: grids(),
            n_replications: 100,
            seed: 9,
            quadrature: QuadratureConfig::default(),
        })
        .unwrap();
        assert!(s.llr.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn antisymmetry_is_exact() {
        let m0 = SpectralModel::hform(vec![0.3]);
        let m1 = SpectralModel::hform(vec![0.5]);
        let g = GridSpec::new(1.0, 9, 1).unwrap();
        let pts = non_origin_points(&g);
        let cfg = QuadratureConfig::default();
        let xs: Vec<Vec<f64>> = (0..5).map(|s| draw(&m0, &pts, s, &cfg).unwrap()).collect();
        let a = llr_values(&m0, &m1, &pts, &xs, &cfg).unwrap();
        let b = llr_values(&m1, &m0, &pts, &xs, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let m = SpectralModel::hform(vec![0.4]);
        let mut c = LlrStudyConfig {
            model0: m.clone(),
            model1: m,
            grids: grids(),
            n_replications: 50,
            seed: 0,
            quadrature: QuadratureConfig::default(),
        };
        assert!(llr_study(&c).is_err());
        c.n_replications = 100;
        c.grids = vec![GridSpec::new(1.0, 9, 1).unwrap(), GridSpec::new(1.0, 11, 1).unwrap()];
        assert!(llr_study(&c).is_err());
    }

    #[test]
    fn norm_ratio_examples() {
        let cfg = QuadratureConfig::default();
        let ts = log_space(1.0 / 16.0, 1.0, 6);
        let h = HFormDensity::new(vec![0.4]);
        let s = norm_ratio_study(&h, &h, 0, &ts, &cfg).unwrap();
        assert!(s.rows.iter().all(|r| r.ratio == 1.0));
        let s = norm_ratio_study(&HFormDensity::new(vec![0.25]), &HFormDensity::new(vec![0.5]), 0, &ts, &cfg)
            .unwrap();
        assert!((s.slope - 0.5).abs() < 0.05, "{}", s.slope);
        let s = norm_ratio_study(
            &HFormDensity::new(vec![0.3, 0.7]),
            &HFormDensity::new(vec![0.3, 0.5]),
            1,
            &ts,
            &cfg,
        )
        .unwrap();
        assert!((s.slope + 0.4).abs() < 0.04, "{}", s.slope);
    }

    #[test]
    fn ols_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (m, b) = ols(&x, &y);
        assert!((m - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
    }
}
