//! Equivalence and singularity verdicts for pairs of spectral models.
//!
//! Every positive rule is a sufficient condition except the H-form rule, which is
//! the only one allowed to return [`Verdict::Singular`]. Boundary cases within
//! [`TIE_EPS`](crate::model::TIE_EPS) resolve to [`Verdict::Unknown`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    strictly_greater, validate, AnisotropicDensity, Density, DiscreteAtomFamily, HFormDensity,
    SpectralModel,
};
use crate::quadrature::{tail_shell_integrals, QuadratureConfig, ShellIntegral};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Equivalent,
    Singular,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    MixtureInequality,
    FbmBoundary,
    DiscreteSeries,
    HformIff,
    TailSquareIntegrability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureEvidence {
    /// `γ′`.
    pub lhs: f64,
    /// `½ Σ 1/β′_j + max_j(β_j/β′_j)·γ`.
    pub rhs: f64,
    pub slack: f64,
    pub max_beta_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbmEvidence {
    pub h: f64,
    pub h_added: f64,
    pub gamma: f64,
    pub gamma_added: f64,
    pub reduced: MixtureEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesEvidence {
    /// Decay exponent `p − q·β_j·γ` of `α_n / f(γ_n)`.
    pub series_exponent: f64,
    pub axis: usize,
    pub n_cut: usize,
    pub partial_sum: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HformEvidence {
    pub h0: Vec<f64>,
    pub h1: Vec<f64>,
    /// Axes where the exponents differ.
    pub differing_axes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailEvidence {
    pub k_requested: f64,
    pub k_used: f64,
    pub margin: f64,
    pub shells: Vec<ShellIntegral>,
    /// Median successive ratio over the last shells; absent when all shells vanish.
    pub ratio: Option<f64>,
    pub min_density_ratio: f64,
    pub norm_domination: bool,
    pub converged: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Evidence {
    Mixture(MixtureEvidence),
    Fbm(FbmEvidence),
    Series(SeriesEvidence),
    Hform(HformEvidence),
    Tail(TailEvidence),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub verdict: Verdict,
    pub rule: Rule,
    pub evidence: Evidence,
}

impl EquivalenceVerdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdicts always serialize")
    }
}

fn check_valid(a: &AnisotropicDensity) -> Result<()> {
    validate(&SpectralModel::Anisotropic(a.clone())).into_result()
}

fn mixture_evidence(base: &AnisotropicDensity, added: &AnisotropicDensity) -> MixtureEvidence {
    let max_ratio = base
        .beta
        .iter()
        .zip(&added.beta)
        .map(|(b, bp)| b / bp)
        .fold(f64::NEG_INFINITY, f64::max);
    let rhs = 0.5 * added.inverse_beta_sum() + max_ratio * base.gamma;
    MixtureEvidence {
        lhs: added.gamma,
        rhs,
        slack: added.gamma - rhs,
        max_beta_ratio: max_ratio,
    }
}

/// `f0 + f′` is equivalent to `f0` when `γ′ > ½ Σ 1/β′_j + max_j(β_j/β′_j)·γ`.
pub fn check_mixture_inequality(
    base: &AnisotropicDensity,
    added: &AnisotropicDensity,
) -> Result<EquivalenceVerdict> {
    if base.dim() != added.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            found: added.dim(),
        });
    }
    check_valid(base)?;
    check_valid(added)?;
    let ev = mixture_evidence(base, added);
    let verdict = if strictly_greater(ev.lhs, ev.rhs) {
        Verdict::Equivalent
    } else {
        Verdict::Unknown
    };
    Ok(EquivalenceVerdict {
        verdict,
        rule: Rule::MixtureInequality,
        evidence: Evidence::Mixture(ev),
    })
}

/// fBm with exponent `h` plus an independent fBm with exponent `h_added`.
pub fn check_fbm_boundary(h: f64, h_added: f64) -> Result<EquivalenceVerdict> {
    for (name, x) in [("h", h), ("h_added", h_added)] {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!("{name} = {x} must lie in (0, 1)")));
        }
    }
    let base = AnisotropicDensity::new(vec![2.0], h + 0.5);
    let added = AnisotropicDensity::new(vec![2.0], h_added + 0.5);
    let ev = mixture_evidence(&base, &added);
    // γ′ > ¼ + γ reduces to h_added > h + ¼; compare in the h variables
    let verdict = if strictly_greater(h_added, h + 0.25) {
        Verdict::Equivalent
    } else {
        Verdict::Unknown
    };
    Ok(EquivalenceVerdict {
        verdict,
        rule: Rule::FbmBoundary,
        evidence: Evidence::Fbm(FbmEvidence {
            h,
            h_added,
            gamma: base.gamma,
            gamma_added: added.gamma,
            reduced: ev,
        }),
    })
}

/// Atoms on axis `j`: `Σ α_n / f(γ_n)` has terms `a b^{β_j γ} n^{-(p − q β_j γ)}`.
pub fn check_discrete_series(
    base: &AnisotropicDensity,
    atoms: &DiscreteAtomFamily,
    n_cut: usize,
) -> Result<EquivalenceVerdict> {
    check_valid(base)?;
    if atoms.axis >= base.dim() {
        return Err(Error::Unsupported(format!(
            "atoms on axis {} of a {}-dimensional model",
            atoms.axis,
            base.dim()
        )));
    }
    if n_cut == 0 {
        return Err(Error::Domain("n_cut must be at least 1".into()));
    }
    let j = atoms.axis;
    let exponent = atoms.amp_exp - atoms.loc_exp * base.beta[j] * base.gamma;
    let mut point = vec![0.0; base.dim()];
    let mut partial = 0.0;
    if !atoms.is_empty() {
        for n in 1..=n_cut {
            point[j] = atoms.location(n);
            partial += atoms.mass(n) / base.eval(&point);
        }
    }
    let verdict = if atoms.is_empty() || strictly_greater(exponent, 1.0) {
        Verdict::Equivalent
    } else {
        Verdict::Unknown
    };
    Ok(EquivalenceVerdict {
        verdict,
        rule: Rule::DiscreteSeries,
        evidence: Evidence::Series(SeriesEvidence {
            series_exponent: exponent,
            axis: j,
            n_cut,
            partial_sum: partial,
            empty: atoms.is_empty(),
        }),
    })
}

/// Two H-form fields are equivalent iff their exponents agree on every axis.
pub fn check_hform_iff(h0: &HFormDensity, h1: &HFormDensity) -> Result<EquivalenceVerdict> {
    if h0.dim() != h1.dim() {
        return Err(Error::DimensionMismatch {
            expected: h0.dim(),
            found: h1.dim(),
        });
    }
    validate(&SpectralModel::Hform(h0.clone())).into_result()?;
    validate(&SpectralModel::Hform(h1.clone())).into_result()?;
    let differing: Vec<usize> = (0..h0.dim()).filter(|j| h0.h[*j] != h1.h[*j]).collect();
    Ok(EquivalenceVerdict {
        verdict: if differing.is_empty() {
            Verdict::Equivalent
        } else {
            Verdict::Singular
        },
        rule: Rule::HformIff,
        evidence: Evidence::Hform(HformEvidence {
            h0: h0.h.clone(),
            h1: h1.h.clone(),
            differing_axes: differing,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailOptions {
    pub k: f64,
    pub margin: f64,
    pub shells: usize,
    /// Shells used for the decay ratio.
    pub window: usize,
    /// Smallest acceptable sampled `f1/f0`.
    pub domination_floor: f64,
    /// `f0 = f1` is promised outside the Euclidean ball of this radius.
    pub perturbation_radius: f64,
}

impl Default for TailOptions {
    fn default() -> Self {
        Self {
            k: 1.0,
            margin: 0.1,
            shells: 10,
            window: 5,
            domination_floor: 1e-8,
            perturbation_radius: 0.0,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Dyadic-shell estimate of `∫_{|λ|>k} ((f1 − f0)/f0)² dλ < ∞` plus the density
/// domination surrogate `f1 ≥ c f0` at high frequency.
pub fn check_tail_square_integrability_density(
    f0: &dyn Density,
    f1: &dyn Density,
    opts: &TailOptions,
    cfg: &QuadratureConfig,
) -> Result<EquivalenceVerdict> {
    if !(opts.k.is_finite() && opts.k > 0.0) {
        return Err(Error::Config(format!("k = {} must be positive", opts.k)));
    }
    if opts.window < 3 || opts.shells < opts.window {
        return Err(Error::Config(format!(
            "need 3 ≤ window ≤ shells, got window = {}, shells = {}",
            opts.window, opts.shells
        )));
    }
    if !(opts.margin >= 0.0 && opts.margin < 1.0) {
        return Err(Error::Config(format!("margin = {} must lie in [0, 1)", opts.margin)));
    }
    let k_used = opts.k.max(opts.perturbation_radius);
    let shells = tail_shell_integrals(f0, f1, k_used, opts.shells, cfg)?;
    let converged = shells.iter().all(|s| s.converged);
    let min_ratio = shells
        .iter()
        .map(|s| s.min_density_ratio)
        .fold(f64::INFINITY, f64::min);
    let m = shells.len();
    let last = &shells[m - 1];
    let earlier = &shells[m - 4];
    let domination = min_ratio > opts.domination_floor
        && last.min_density_ratio >= 0.5 * earlier.min_density_ratio;
    let tail = &shells[m - opts.window..];
    let mut note = if k_used > opts.k {
        format!("k raised from {} to the perturbation radius {}", opts.k, k_used)
    } else {
        String::new()
    };
    let (ratio, verdict) = if shells.iter().all(|s| s.value == 0.0) {
        (None, Verdict::Equivalent)
    } else {
        let ratios: Vec<f64> = tail
            .windows(2)
            .map(|w| {
                if w[0].value > 0.0 {
                    w[1].value / w[0].value
                } else if w[1].value > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .collect();
        let rho = median(ratios);
        let v = if !converged {
            note.push_str("shell quadrature did not converge; ");
            Verdict::Unknown
        } else if rho < 1.0 - opts.margin && domination {
            Verdict::Equivalent
        } else {
            Verdict::Unknown
        };
        (Some(rho), v)
    };
    Ok(EquivalenceVerdict {
        verdict,
        rule: Rule::TailSquareIntegrability,
        evidence: Evidence::Tail(TailEvidence {
            k_requested: opts.k,
            k_used,
            margin: opts.margin,
            shells,
            ratio,
            min_density_ratio: min_ratio,
            norm_domination: domination,
            converged,
            note: note.trim_end_matches("; ").to_string(),
        }),
    })
}

pub fn check_tail_square_integrability(
    f0: &SpectralModel,
    f1: &SpectralModel,
    opts: &TailOptions,
    cfg: &QuadratureConfig,
) -> Result<EquivalenceVerdict> {
    if f0.dim() != f1.dim() {
        return Err(Error::DimensionMismatch {
            expected: f0.dim(),
            found: f1.dim(),
        });
    }
    for m in [f0, f1] {
        validate(m).into_result()?;
        if !m.has_density() {
            return Err(Error::Unsupported("tail rule needs a density component".into()));
        }
    }
    check_tail_square_integrability_density(f0, f1, opts, cfg)
}

/// Density modification supported on the Euclidean ball `|λ| ≤ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// `f ↦ factor·f` inside the ball.
    Scale { radius: f64, factor: f64 },
    /// `f ↦ f·(1 + amplitude·(1 − |λ|²/r²))` inside the ball.
    Bump { radius: f64, amplitude: f64 },
    /// `f ↦ f + level` inside the ball.
    Additive { radius: f64, level: f64 },
}

impl Perturbation {
    pub fn radius(&self) -> f64 {
        match *self {
            Perturbation::Scale { radius, .. }
            | Perturbation::Bump { radius, .. }
            | Perturbation::Additive { radius, .. } => radius,
        }
    }
}

pub struct Perturbed<'a> {
    pub base: &'a dyn Density,
    pub perturbation: Perturbation,
}

impl Density for Perturbed<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        let f = self.base.value(lambda);
        let r2: f64 = lambda.iter().map(|x| x * x).sum();
        let rr = self.perturbation.radius();
        if r2 > rr * rr {
            return f;
        }
        match self.perturbation {
            Perturbation::Scale { factor, .. } => factor * f,
            Perturbation::Bump { amplitude, .. } => f * (1.0 + amplitude * (1.0 - r2 / (rr * rr))),
            Perturbation::Additive { level, .. } => f + level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub perturbation: Perturbation,
    pub k_requested: f64,
    pub k_used: f64,
    pub k_adjusted: bool,
    pub before: EquivalenceVerdict,
    pub after: EquivalenceVerdict,
    pub invariant: bool,
}

/// Verdict of `(f0, f1)` against `(f0, perturbed f1)`; shells start at or beyond
/// the perturbation radius, so the two must agree.
pub fn bounded_perturbation_invariance(
    f0: &dyn Density,
    f1: &dyn Density,
    perturbation: Perturbation,
    opts: &TailOptions,
    cfg: &QuadratureConfig,
) -> Result<PerturbationReport> {
    let r = perturbation.radius();
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!("perturbation radius {r} must be positive")));
    }
    let opts = TailOptions {
        perturbation_radius: opts.perturbation_radius.max(r),
        ..opts.clone()
    };
    let before = check_tail_square_integrability_density(f0, f1, &opts, cfg)?;
    let perturbed = Perturbed {
        base: f1,
        perturbation,
    };
    let after = check_tail_square_integrability_density(f0, &perturbed, &opts, cfg)?;
    let k_used = opts.k.max(opts.perturbation_radius);
    Ok(PerturbationReport {
        perturbation,
        k_requested: opts.k,
        k_used,
        k_adjusted: k_used > opts.k,
        invariant: before.verdict == after.verdict,
        before,
        after,
    })
}

/// Which rule `check_auto` dispatches to for a model pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleChoice {
    Auto,
    Mixture,
    Discrete,
    Hform,
    Tail,
}

/// Splits `f1` as `f0 + added` when `f1` is a mixture holding `f0` at unit weight
/// and a single other anisotropic component.
fn split_mixture(f0: &SpectralModel, f1: &SpectralModel) -> Option<(AnisotropicDensity, AnisotropicDensity)> {
    let base = match f0 {
        SpectralModel::Anisotropic(a) => a.clone(),
        SpectralModel::Hform(h) => h.to_anisotropic(),
        _ => return None,
    };
    let flat = f1.flatten();
    if flat.atoms.is_some() || flat.densities.len() != 2 {
        return None;
    }
    let pos = flat
        .densities
        .iter()
        .position(|(w, a)| *w == 1.0 && *a == base)?;
    let (w, added) = &flat.densities[1 - pos];
    (*w > 0.0).then(|| (base, added.clone()))
}

fn split_atoms(f0: &SpectralModel, f1: &SpectralModel) -> Option<(AnisotropicDensity, DiscreteAtomFamily)> {
    let base = match f0 {
        SpectralModel::Anisotropic(a) => a.clone(),
        SpectralModel::Hform(h) => h.to_anisotropic(),
        _ => return None,
    };
    match f1 {
        SpectralModel::DensityPlusAtoms { density, atoms } if *density == base => {
            Some((base, atoms.clone()))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckOptions {
    pub rule: RuleChoice,
    pub tail: TailOptions,
    /// Terms in the numeric partial sum of the atom series.
    pub n_cut: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            rule: RuleChoice::Auto,
            tail: TailOptions::default(),
            n_cut: 1000,
        }
    }
}

/// Applies the requested rule, or for `Auto` the most specific rule the pair's
/// structure admits, falling back to the tail rule.
pub fn check_pair(
    f0: &SpectralModel,
    f1: &SpectralModel,
    opts: &CheckOptions,
    cfg: &QuadratureConfig,
) -> Result<EquivalenceVerdict> {
    if f0.dim() != f1.dim() {
        return Err(Error::DimensionMismatch {
            expected: f0.dim(),
            found: f1.dim(),
        });
    }
    validate(f0).into_result()?;
    validate(f1).into_result()?;
    let hform_pair = match (f0, f1) {
        (SpectralModel::Hform(a), SpectralModel::Hform(b)) => Some((a, b)),
        _ => None,
    };
    match opts.rule {
        RuleChoice::Hform => {
            let (a, b) = hform_pair
                .ok_or_else(|| Error::Unsupported("hform rule needs two hform models".into()))?;
            check_hform_iff(a, b)
        }
        RuleChoice::Mixture => {
            let (base, added) = split_mixture(f0, f1).ok_or_else(|| {
                Error::Unsupported("mixture rule needs model1 = model0 + one anisotropic term".into())
            })?;
            check_mixture_inequality(&base, &added)
        }
        RuleChoice::Discrete => {
            let (base, atoms) = split_atoms(f0, f1).ok_or_else(|| {
                Error::Unsupported("discrete rule needs model1 = model0 plus atoms".into())
            })?;
            check_discrete_series(&base, &atoms, opts.n_cut)
        }
        RuleChoice::Tail => check_tail_square_integrability(f0, f1, &opts.tail, cfg),
        RuleChoice::Auto => {
            if let Some((a, b)) = hform_pair {
                return check_hform_iff(a, b);
            }
            if let Some((base, added)) = split_mixture(f0, f1) {
                return check_mixture_inequality(&base, &added);
            }
            if let Some((base, atoms)) = split_atoms(f0, f1) {
                return check_discrete_series(&base, &atoms, opts.n_cut);
            }
            check_tail_square_integrability(f0, f1, &opts.tail, cfg)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(beta: &[f64], gamma: f64) -> AnisotropicDensity {
        AnisotropicDensity::new(beta.to_vec(), gamma)
    }

    #[test]
    fn mixture_examples() {
        let v = check_mixture_inequality(&a(&[2.0], 1.0), &a(&[2.0], 1.3)).unwrap();
        assert_eq!(v.verdict, Verdict::Equivalent);
        let v = check_mixture_inequality(&a(&[2.0], 1.0), &a(&[2.0], 1.2)).unwrap();
        assert_eq!(v.verdict, Verdict::Unknown);
        let v = check_mixture_inequality(&a(&[2.0, 2.0], 1.2), &a(&[2.0, 2.0], 2.0)).unwrap();
        assert_eq!(v.verdict, Verdict::Equivalent);
        let v = check_mixture_inequality(&a(&[2.0], 1.0), &a(&[2.0], 1.25)).unwrap();
        assert_eq!(v.verdict, Verdict::Unknown, "boundary is not equivalent");
        assert!(check_mixture_inequality(&a(&[2.0], 1.0), &a(&[2.0, 2.0], 2.0)).is_err());
    }

    #[test]
    fn fbm_examples() {
        assert_eq!(check_fbm_boundary(0.3, 0.6).unwrap().verdict, Verdict::Equivalent);
        assert_eq!(check_fbm_boundary(0.3, 0.5).unwrap().verdict, Verdict::Unknown);
        assert_eq!(check_fbm_boundary(0.5, 0.751).unwrap().verdict, Verdict::Equivalent);
        assert_eq!(check_fbm_boundary(0.3, 0.55).unwrap().verdict, Verdict::Unknown);
        assert!(check_fbm_boundary(0.0, 0.5).is_err());
    }

    #[test]
    fn discrete_examples() {
        let atoms = |p: f64, q: f64| DiscreteAtomFamily {
            axis: 0,
            amp_coeff: 1.0,
            amp_exp: p,
            loc_coeff: 1.0,
            loc_exp: q,
            n_max_explicit: None,
        };
        let base = a(&[2.0], 0.75);
        let v = check_discrete_series(&base, &atoms(4.0, 1.0), 100).unwrap();
        assert_eq!(v.verdict, Verdict::Equivalent);
        if let Evidence::Series(e) = &v.evidence {
            assert!((e.series_exponent - 2.5).abs() < 1e-15);
            // Σ n^{-2.5} over n ≤ 100 is close to ζ(2.5) = 1.341487...
            assert!((e.partial_sum - 1.341487).abs() < 1e-3);
        } else {
            panic!("wrong evidence");
        }
        assert_eq!(
            check_discrete_series(&base, &atoms(2.0, 1.0), 100).unwrap().verdict,
            Verdict::Unknown
        );
        assert_eq!(
            check_discrete_series(&base, &atoms(2.5, 1.0), 100).unwrap().verdict,
            Verdict::Unknown
        );
        let mut empty = atoms(2.0, 1.0);
        empty.amp_coeff = 0.0;
        assert_eq!(check_discrete_series(&base, &empty, 5).unwrap().verdict, Verdict::Equivalent);
        let mut off = atoms(4.0, 1.0);
        off.axis = 1;
        assert!(matches!(check_discrete_series(&base, &off, 5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn hform_examples() {
        let h = |v: &[f64]| HFormDensity::new(v.to_vec());
        assert_eq!(check_hform_iff(&h(&[0.3, 0.7]), &h(&[0.3, 0.7])).unwrap().verdict, Verdict::Equivalent);
        assert_eq!(check_hform_iff(&h(&[0.3, 0.7]), &h(&[0.3, 0.6])).unwrap().verdict, Verdict::Singular);
        assert_eq!(check_hform_iff(&h(&[0.5]), &h(&[0.5])).unwrap().verdict, Verdict::Equivalent);
        assert!(check_hform_iff(&h(&[0.5]), &h(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn tail_examples() {
        let cfg = QuadratureConfig::default();
        let opts = TailOptions::default();
        let f0 = SpectralModel::anisotropic(vec![2.0], 1.0);
        let v = check_tail_square_integrability(&f0, &f0, &opts, &cfg).unwrap();
        assert_eq!(v.verdict, Verdict::Equivalent);

        let f1 = SpectralModel::sum(vec![f0.clone(), SpectralModel::anisotropic(vec![2.0], 1.5)]);
        let v = check_tail_square_integrability(&f0, &f1, &opts, &cfg).unwrap();
        assert_eq!(v.verdict, Verdict::Equivalent);
        let Evidence::Tail(e) = &v.evidence else { panic!() };
        assert!((e.ratio.unwrap() - 0.5).abs() < 1e-6);

        let f2 = SpectralModel::anisotropic(vec![3.0], 1.0);
        let v = check_tail_square_integrability(&f0, &f2, &opts, &cfg).unwrap();
        assert_eq!(v.verdict, Verdict::Unknown);
        let Evidence::Tail(e) = &v.evidence else { panic!() };
        assert!((e.ratio.unwrap() - 2.0).abs() < 0.05);
    }

    #[test]
    fn perturbation_raises_k() {
        let cfg = QuadratureConfig::default();
        let f0 = SpectralModel::anisotropic(vec![2.0, 2.0], 1.5);
        let opts = TailOptions {
            k: 1.0,
            ..TailOptions::default()
        };
        let r = bounded_perturbation_invariance(
            &f0,
            &f0,
            Perturbation::Scale {
                radius: 5.0,
                factor: 10.0,
            },
            &opts,
            &cfg,
        )
        .unwrap();
        assert!(r.k_adjusted);
        assert_eq!(r.k_used, 5.0);
        assert!(r.invariant);
        assert_eq!(r.after.verdict, Verdict::Equivalent);
    }

    #[test]
    fn auto_dispatch() {
        let cfg = QuadratureConfig::default();
        let f0 = SpectralModel::anisotropic(vec![2.0], 1.0);
        let f1 = SpectralModel::sum(vec![f0.clone(), SpectralModel::anisotropic(vec![2.0], 1.3)]);
        let v = check_pair(&f0, &f1, &CheckOptions::default(), &cfg).unwrap();
        assert_eq!(v.rule, Rule::MixtureInequality);
        let h0 = SpectralModel::hform(vec![0.3]);
        let h1 = SpectralModel::hform(vec![0.5]);
        let v = check_pair(&h0, &h1, &CheckOptions::default(), &cfg).unwrap();
        assert_eq!(v.verdict, Verdict::Singular);
        let v = check_pair(&f0, &SpectralModel::anisotropic(vec![3.0], 1.0), &CheckOptions::default(), &cfg)
            .unwrap();
        assert_eq!(v.rule, Rule::TailSquareIntegrability);
    }

    #[test]
    fn verdict_json_shape() {
        let v = check_fbm_boundary(0.3, 0.6).unwrap();
        let j: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(j["verdict"], "Equivalent");
        assert_eq!(j["rule"], "fbm_boundary");
        assert!(j["evidence"]["reduced"]["slack"].as_f64().unwrap() > 0.0);
    }
}
