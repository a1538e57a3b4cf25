//! Experiment configuration: JSON schema, validation, and construction of
//! the domain objects the driver needs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{QuadRule, TaperWindow, TauQuadrature};
use crate::semigroup::HeatMethod;
use crate::weights::WeightPolynomial;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Preset(String),
    Coeffs { coeffs: Vec<[f64; 4]> },
    File { file: String },
}

impl WeightSpec {
    pub fn build(&self) -> Result<WeightPolynomial> {
        match self {
            WeightSpec::Preset(name) => WeightPolynomial::preset(name),
            WeightSpec::Coeffs { coeffs } => Self::from_rows(coeffs),
            WeightSpec::File { file } => {
                let text = std::fs::read_to_string(file)?;
                let parsed: WeightFile = serde_json::from_str(&text)?;
                Self::from_rows(&parsed.coeffs)
            }
        }
    }

    fn from_rows(rows: &[[f64; 4]]) -> Result<WeightPolynomial> {
        let mut terms = Vec::with_capacity(rows.len());
        for row in rows {
            let [j, k, re, im] = *row;
            if j < 0.0 || k < 0.0 || j.fract() != 0.0 || k.fract() != 0.0 {
                return Err(Error::Config(format!("coefficient indices must be nonnegative integers, got ({j},{k})")));
            }
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::Config("non-finite coefficient".into()));
            }
            terms.push((j as u32, k as u32, re, im));
        }
        WeightPolynomial::from_terms(&terms)
    }
}

/// On-disk weight specification: `{"coeffs": [[j, k, re, im], ...]}`.
#[derive(Deserialize)]
struct WeightFile {
    coeffs: Vec<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSpec {
    One(f64),
    Many(Vec<f64>),
}

impl TauSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TauSpec::One(t) => vec![*t],
            TauSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub r: f64,
    pub n: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        GridSpec::new(self.r, self.n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTask {
    pub s: Vec<f64>,
    pub w: [f64; 2],
    #[serde(default = "default_kernel_kind")]
    pub kind: String,
    #[serde(default = "default_method")]
    pub method: HeatMethod,
    /// Absolute eigenvalue cut for the Szego projector when `kind` needs it.
    #[serde(default)]
    pub eig_cut: Option<f64>,
}

fn default_kernel_kind() -> String {
    "h".into()
}

fn default_method() -> HeatMethod {
    HeatMethod::Krylov
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivCounts {
    pub n: usize,
    pub ell: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsTask {
    pub estimate_id: String,
    #[serde(default)]
    pub derivative: Option<DerivCounts>,
    #[serde(default)]
    pub k_time: usize,
    pub seed: u64,
    #[serde(default)]
    pub s: Option<Vec<f64>>,
    #[serde(default)]
    pub w: Option<[f64; 2]>,
    #[serde(default)]
    pub n_samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CancelTask {
    pub z: [f64; 2],
    pub s: f64,
    pub derivative: DerivCounts,
    #[serde(default = "default_delta_fractions")]
    pub delta_fractions: Vec<f64>,
}

fn default_delta_fractions() -> Vec<f64> {
    vec![0.5, 0.70710678118654752, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorTask {
    pub parts: Vec<WeightSpec>,
    pub j: Vec<usize>,
    pub s: f64,
    #[serde(default = "default_factor_samples")]
    pub n_samples: usize,
}

fn default_factor_samples() -> usize {
    25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    #[serde(default)]
    pub tau_max: Option<f64>,
    #[serde(default = "default_quad_nodes")]
    pub nodes: usize,
    #[serde(default = "default_quad_rule")]
    pub rule: QuadRule,
    #[serde(default = "default_quad_window")]
    pub window: TaperWindow,
}

fn default_quad_nodes() -> usize {
    65
}

fn default_quad_rule() -> QuadRule {
    QuadRule::Trapezoid
}

fn default_quad_window() -> TaperWindow {
    TaperWindow::CosineTaper
}

impl QuadratureConfig {
    pub fn build(&self, tau_max: f64) -> Result<TauQuadrature> {
        TauQuadrature::new(self.tau_max.unwrap_or(tau_max), self.nodes, self.rule, self.window)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelTask {
    pub s: f64,
    pub w: [f64; 2],
    pub z: [f64; 2],
    pub t: Vec<f64>,
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumTask {
    #[serde(default = "default_spectrum_count")]
    pub count: usize,
    #[serde(default = "default_spectrum_variant")]
    pub variant: String,
    #[serde(default = "default_spectrum_form")]
    pub form: String,
}

fn default_spectrum_count() -> usize {
    12
}

fn default_spectrum_variant() -> String {
    "boxtilde".into()
}

fn default_spectrum_form() -> String {
    "factored".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub weight: WeightSpec,
    pub tau: TauSpec,
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cancel: Option<CancelTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<FactorTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        self.weight.build()?;
        let taus = self.tau.values();
        if taus.is_empty() || taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("tau must be a finite value or nonempty list".into()));
        }
        let semigroup_task = self.kernel.is_some()
            || self.bounds.is_some()
            || self.cancel.is_some()
            || self.factor.is_some()
            || self.model.is_some();
        if semigroup_task && taus.iter().any(|&t| t <= 0.0) {
            return Err(Error::Config("semigroup tasks require tau > 0".into()));
        }
        if let Some(k) = &self.kernel {
            if k.s.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::Config("kernel times must be finite and nonnegative".into()));
            }
            if !matches!(k.kind.as_str(), "h" | "htilde" | "gtilde" | "szego") {
                return Err(Error::Config(format!("unknown kernel kind `{}`", k.kind)));
            }
        }
        if let Some(m) = &self.model {
            if m.s <= 0.0 || !m.s.is_finite() {
                return Err(Error::Config("model evolution time must be positive".into()));
            }
        }
        if let Some(sp) = &self.spectrum {
            if !matches!(sp.variant.as_str(), "box" | "boxtilde") {
                return Err(Error::Config(format!("unknown spectrum variant `{}`", sp.variant)));
            }
            if !matches!(sp.form.as_str(), "factored" | "schrodinger") {
                return Err(Error::Config(format!("unknown spectrum form `{}`", sp.form)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_round_trip() {
        let text = r#"{
            "weight": "abs2",
            "tau": [0.5, 1.0],
            "grid": {"r": 6.0, "n": 32},
            "kernel": {"s": [0.5, 1.0], "w": [0.5, 0.0], "kind": "h", "method": "Krylov"}
        }"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::parse(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_tau = r#"{"weight": "abs2", "tau": -1.0, "grid": {"r": 4.0, "n": 16},
            "kernel": {"s": [1.0], "w": [0.0, 0.0]}}"#;
        assert!(ExperimentConfig::parse(bad_tau).is_err());
        let bad_grid = r#"{"weight": "abs2", "tau": 1.0, "grid": {"r": 4.0, "n": 4}}"#;
        assert!(ExperimentConfig::parse(bad_grid).is_err());
        let bad_weight = r#"{"weight": "nope", "tau": 1.0, "grid": {"r": 4.0, "n": 16}}"#;
        assert!(ExperimentConfig::parse(bad_weight).is_err());
        let unknown_field = r#"{"weight": "abs2", "tau": 1.0, "grid": {"r": 4.0, "n": 16},
            "kernel": {"s": [1.0], "w": [0.0, 0.0], "bogus": 3}}"#;
        assert!(ExperimentConfig::parse(unknown_field).is_err());
    }

    #[test]
    fn inline_coefficients_build() {
        let text = r#"{
            "weight": {"coeffs": [[1, 1, 1.0, 0.0], [2, 2, 0.05, 0.0], [2, 0, 0.3, 0.1], [0, 2, 0.3, -0.1]]},
            "tau": 1.0,
            "grid": {"r": 4.0, "n": 16}
        }"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        let p = cfg.weight.build().unwrap();
        assert!(p.is_nonharmonic());
    }
}
