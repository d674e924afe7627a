//! Parametric spectral measure families and their validation.
//!
//! The anisotropic family has density `f(λ) = (Σ_j |λ_j|^{β_j})^{-γ}` and is
//! integrable at infinity iff `γ > Σ_j 1/β_j`; the H-form family is the same
//! density with `β_j = H_j` and `γ = Q + 2`, `Q = Σ_j 1/H_j`. Atom families put
//! symmetric point masses `α_n = a n^{-p}` at `±b n^q e_axis`.
//!
//! Models are plain data; every operation on them is pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative band inside which a strict inequality is treated as a tie.
pub const TIE_EPS: f64 = 1e-12;

/// `lhs > rhs` with ties (up to rounding of decimal inputs) resolved as false.
pub fn strictly_greater(lhs: f64, rhs: f64) -> bool {
    lhs - rhs > TIE_EPS * lhs.abs().max(rhs.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisotropicDensity {
    pub beta: Vec<f64>,
    pub gamma: f64,
}

impl AnisotropicDensity {
    pub fn new(beta: Vec<f64>, gamma: f64) -> Self {
        Self { beta, gamma }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn inverse_beta_sum(&self) -> f64 {
        self.beta.iter().map(|b| 1.0 / b).sum()
    }

    /// Homogeneity exponent `γ − Σ 1/β_j`: `v(c^{1/β} ⊙ t) = c^α v(t)`.
    pub fn alpha(&self) -> f64 {
        self.gamma - self.inverse_beta_sum()
    }

    pub fn eval(&self, lambda: &[f64]) -> f64 {
        let rho: f64 = self
            .beta
            .iter()
            .zip(lambda)
            .map(|(b, l)| l.abs().powf(*b))
            .sum();
        (-self.gamma * rho.ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HFormDensity {
    pub h: Vec<f64>,
}

impl HFormDensity {
    pub fn new(h: Vec<f64>) -> Self {
        Self { h }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn q(&self) -> f64 {
        self.h.iter().map(|h| 1.0 / h).sum()
    }

    /// The same density written in the anisotropic parametrisation.
    pub fn to_anisotropic(&self) -> AnisotropicDensity {
        AnisotropicDensity::new(self.h.clone(), self.q() + 2.0)
    }
}

/// Symmetric atoms `F({±b n^q e_axis}) = a n^{-p}`, `n ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteAtomFamily {
    pub axis: usize,
    pub amp_coeff: f64,
    pub amp_exp: f64,
    pub loc_coeff: f64,
    pub loc_exp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max_explicit: Option<usize>,
}

impl DiscreteAtomFamily {
    pub fn mass(&self, n: usize) -> f64 {
        self.amp_coeff * (n as f64).powf(-self.amp_exp)
    }

    pub fn location(&self, n: usize) -> f64 {
        self.loc_coeff * (n as f64).powf(self.loc_exp)
    }

    pub fn is_empty(&self) -> bool {
        self.amp_coeff == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub model: SpectralModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralModel {
    Anisotropic(AnisotropicDensity),
    Hform(HFormDensity),
    Mixture {
        components: Vec<MixtureComponent>,
    },
    DensityPlusAtoms {
        density: AnisotropicDensity,
        atoms: DiscreteAtomFamily,
    },
}

/// A model reduced to weighted anisotropic densities plus at most one atom family.
#[derive(Debug, Clone)]
pub struct Flattened {
    pub dim: usize,
    pub densities: Vec<(f64, AnisotropicDensity)>,
    pub atoms: Option<(f64, DiscreteAtomFamily)>,
}

impl SpectralModel {
    pub fn anisotropic(beta: Vec<f64>, gamma: f64) -> Self {
        SpectralModel::Anisotropic(AnisotropicDensity::new(beta, gamma))
    }

    pub fn hform(h: Vec<f64>) -> Self {
        SpectralModel::Hform(HFormDensity::new(h))
    }

    /// Weight-one sum, i.e. the spectral measure of `X + Y` for independent `X`, `Y`.
    pub fn sum(models: Vec<SpectralModel>) -> Self {
        SpectralModel::Mixture {
            components: models
                .into_iter()
                .map(|model| MixtureComponent { weight: 1.0, model })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SpectralModel::Anisotropic(a) => a.dim(),
            SpectralModel::Hform(h) => h.dim(),
            SpectralModel::Mixture { components } => {
                components.first().map(|c| c.model.dim()).unwrap_or(0)
            }
            SpectralModel::DensityPlusAtoms { density, .. } => density.dim(),
        }
    }

    /// Every model in this crate has an absolutely continuous part.
    pub fn has_density(&self) -> bool {
        match self {
            SpectralModel::Mixture { components } => {
                components.iter().any(|c| c.weight > 0.0 && c.model.has_density())
            }
            _ => true,
        }
    }

    pub fn flatten(&self) -> Flattened {
        let mut out = Flattened {
            dim: self.dim(),
            densities: Vec::new(),
            atoms: None,
        };
        self.flatten_into(1.0, &mut out);
        out
    }

    fn flatten_into(&self, weight: f64, out: &mut Flattened) {
        match self {
            SpectralModel::Anisotropic(a) => out.densities.push((weight, a.clone())),
            SpectralModel::Hform(h) => out.densities.push((weight, h.to_anisotropic())),
            SpectralModel::Mixture { components } => {
                for c in components {
                    c.model.flatten_into(weight * c.weight, out);
                }
            }
            SpectralModel::DensityPlusAtoms { density, atoms } => {
                out.densities.push((weight, density.clone()));
                if out.atoms.is_none() {
                    out.atoms = Some((weight, atoms.clone()));
                }
            }
        }
    }

    fn atom_family_count(&self) -> usize {
        match self {
            SpectralModel::Mixture { components } => {
                components.iter().map(|c| c.model.atom_family_count()).sum()
            }
            SpectralModel::DensityPlusAtoms { .. } => 1,
            _ => 0,
        }
    }

    /// Model scaled by a nonnegative factor.
    pub fn scaled(&self, weight: f64) -> SpectralModel {
        SpectralModel::Mixture {
            components: vec![MixtureComponent {
                weight,
                model: self.clone(),
            }],
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("models always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Anything that can be evaluated as a spectral density on `ℝ^d \ {0}`.
pub trait Density: Sync {
    fn dim(&self) -> usize;

    /// Density value; callers guarantee `λ ≠ 0` and `λ.len() == dim()`.
    fn value(&self, lambda: &[f64]) -> f64;
}

impl Density for AnisotropicDensity {
    fn dim(&self) -> usize {
        self.beta.len()
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        self.eval(lambda)
    }
}

impl Density for SpectralModel {
    fn dim(&self) -> usize {
        SpectralModel::dim(self)
    }

    fn value(&self, lambda: &[f64]) -> f64 {
        match self {
            SpectralModel::Anisotropic(a) => a.eval(lambda),
            SpectralModel::Hform(h) => h.to_anisotropic().eval(lambda),
            SpectralModel::Mixture { components } => components
                .iter()
                .filter(|c| c.weight != 0.0)
                .map(|c| c.weight * c.model.value(lambda))
                .sum(),
            SpectralModel::DensityPlusAtoms { density, .. } => density.eval(lambda),
        }
    }
}

/// `f(λ)` for the absolutely continuous part of `model` (atoms contribute 0).
pub fn density_at(model: &SpectralModel, lambda: &[f64]) -> Result<f64> {
    if lambda.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: lambda.len(),
        });
    }
    if lambda.iter().all(|l| *l == 0.0) {
        return Err(Error::Domain(
            "spectral density is singular at the origin".into(),
        ));
    }
    Ok(model.value(lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Issue>,
    /// Conditions outside the model invariants, e.g. a variogram that is infinite.
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn into_result(self) -> Result<()> {
        if self.ok {
            Ok(())
        } else {
            let msg = self
                .violations
                .iter()
                .map(|v| format!("{}: {}", v.path, v.message))
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::InvalidModel(msg))
        }
    }
}

struct Collector {
    violations: Vec<Issue>,
    warnings: Vec<Issue>,
}

impl Collector {
    fn violation(&mut self, path: &str, message: String) {
        self.violations.push(Issue {
            path: path.to_string(),
            message,
        });
    }

    fn warning(&mut self, path: &str, message: String) {
        self.warnings.push(Issue {
            path: path.to_string(),
            message,
        });
    }
}

pub fn validate(model: &SpectralModel) -> ValidationReport {
    let mut c = Collector {
        violations: Vec::new(),
        warnings: Vec::new(),
    };
    validate_into(model, "$", &mut c);
    if model.atom_family_count() > 1 {
        c.violation(
            "$",
            format!(
                "at most one atom family per model, found {}",
                model.atom_family_count()
            ),
        );
    }
    ValidationReport {
        ok: c.violations.is_empty(),
        violations: c.violations,
        warnings: c.warnings,
    }
}

fn validate_into(model: &SpectralModel, path: &str, c: &mut Collector) {
    match model {
        SpectralModel::Anisotropic(a) => validate_anisotropic(a, path, c),
        SpectralModel::Hform(h) => {
            if h.h.is_empty() {
                c.violation(path, "dimension must be at least 1".into());
            }
            for (j, hj) in h.h.iter().enumerate() {
                if !(hj.is_finite() && *hj > 0.0 && *hj < 1.0) {
                    c.violation(&format!("{path}.h[{j}]"), format!("H_j = {hj} not in (0, 1)"));
                }
            }
        }
        SpectralModel::Mixture { components } => {
            if components.is_empty() {
                c.violation(path, "mixture needs at least one component".into());
            }
            let d = model.dim();
            for (i, comp) in components.iter().enumerate() {
                let p = format!("{path}.components[{i}]");
                if !(comp.weight.is_finite() && comp.weight >= 0.0) {
                    c.violation(&p, format!("weight {} must be finite and nonnegative", comp.weight));
                }
                if comp.model.dim() != d {
                    c.violation(
                        &p,
                        format!("dimension {} differs from first component's {d}", comp.model.dim()),
                    );
                }
                validate_into(&comp.model, &format!("{p}.model"), c);
            }
        }
        SpectralModel::DensityPlusAtoms { density, atoms } => {
            validate_anisotropic(density, &format!("{path}.density"), c);
            validate_atoms(atoms, density.dim(), &format!("{path}.atoms"), c);
        }
    }
}

fn validate_anisotropic(a: &AnisotropicDensity, path: &str, c: &mut Collector) {
    if a.beta.is_empty() {
        c.violation(path, "dimension must be at least 1".into());
        return;
    }
    let mut betas_ok = true;
    for (j, b) in a.beta.iter().enumerate() {
        if !(b.is_finite() && *b > 0.0) {
            betas_ok = false;
            c.violation(&format!("{path}.beta[{j}]"), format!("β_j = {b} must be positive"));
        }
    }
    if !a.gamma.is_finite() {
        c.violation(&format!("{path}.gamma"), format!("γ = {} must be finite", a.gamma));
        return;
    }
    if !betas_ok {
        return;
    }
    let s = a.inverse_beta_sum();
    if !strictly_greater(a.gamma, s) {
        c.violation(
            &format!("{path}.gamma"),
            format!("γ ≤ Σ 1/β_j (γ = {}, Σ 1/β_j = {s})", a.gamma),
        );
        return;
    }
    let conv = h_from_beta_gamma(a);
    for j in conv.outside_range.iter() {
        c.warning(
            &format!("{path}.beta[{j}]"),
            format!(
                "H_j = {} ≥ 1: ∫_{{|λ|<1}} |λ|² f(λ) dλ diverges, variogram is infinite along this axis",
                conv.h[*j]
            ),
        );
    }
}

fn validate_atoms(atoms: &DiscreteAtomFamily, d: usize, path: &str, c: &mut Collector) {
    if atoms.axis >= d {
        c.violation(
            &format!("{path}.axis"),
            format!("axis {} out of range for dimension {d}", atoms.axis),
        );
    }
    if !(atoms.amp_coeff.is_finite() && atoms.amp_coeff >= 0.0) {
        c.violation(
            &format!("{path}.amp_coeff"),
            format!("a = {} must be nonnegative", atoms.amp_coeff),
        );
    }
    if !(atoms.amp_exp.is_finite() && atoms.amp_exp > 1.0) {
        c.violation(
            &format!("{path}.amp_exp"),
            format!(
                "p = {} must exceed 1 for Σ α_n |γ^n|²/(1+|γ^n|²) < ∞",
                atoms.amp_exp
            ),
        );
    }
    if !(atoms.loc_coeff.is_finite() && atoms.loc_coeff > 0.0) {
        c.violation(
            &format!("{path}.loc_coeff"),
            format!("b = {} must be positive", atoms.loc_coeff),
        );
    }
    if !(atoms.loc_exp.is_finite() && atoms.loc_exp > 0.0) {
        c.violation(
            &format!("{path}.loc_exp"),
            format!("q = {} must be positive", atoms.loc_exp),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HConversion {
    pub h: Vec<f64>,
    /// Axes with `H_j ≥ 1`, outside the H-form range.
    pub outside_range: Vec<usize>,
}

/// Per-axis regularity `H_j = β_j (γ − Σ_k 1/β_k) / 2`.
pub fn h_from_beta_gamma(a: &AnisotropicDensity) -> HConversion {
    let alpha = a.alpha();
    let h: Vec<f64> = a.beta.iter().map(|b| b * alpha / 2.0).collect();
    let outside_range = h
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= 1.0)
        .map(|(j, _)| j)
        .collect();
    HConversion { h, outside_range }
}
