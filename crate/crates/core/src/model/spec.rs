use serde::{Deserialize, Serialize};

use super::innovation::InnovationFamily;
use crate::error::{AcdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanForm {
    /// `ψ_i = ω + Σ α_j w_{i-j} + Σ β_j ψ_{i-j}`
    Linear,
    /// `ln ψ_i = ω + Σ α_j ln w_{i-j} + Σ β_j ln ψ_{i-j}`
    LogType1,
    /// `ln ψ_i = ω + Σ α_j (w_{i-j}/ψ_{i-j}) + Σ β_j ln ψ_{i-j}`
    LogType2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum InitRule {
    UnconditionalMean,
    SampleMean,
    /// Mean of the durations starting in the first `minutes` of the session.
    FirstWindowMean { minutes: f64 },
}

impl Default for InitRule {
    fn default() -> Self {
        InitRule::FirstWindowMean { minutes: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcdSpec {
    pub mean_form: MeanForm,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub innovation: InnovationFamily,
    #[serde(default)]
    pub init_rule: InitRule,
}

impl AcdSpec {
    pub fn new(
        mean_form: MeanForm,
        omega: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        innovation: InnovationFamily,
        init_rule: InitRule,
    ) -> Result<Self> {
        let spec = Self { mean_form, omega, alpha, beta, innovation, init_rule };
        spec.validate()?;
        Ok(spec)
    }

    /// Linear ACD(1,1) with the default initialization rule.
    pub fn linear11(omega: f64, alpha: f64, beta: f64, innovation: InnovationFamily) -> Result<Self> {
        Self::new(MeanForm::Linear, omega, vec![alpha], vec![beta], innovation, InitRule::default())
    }

    pub fn with_init(mut self, init_rule: InitRule) -> Self {
        self.init_rule = init_rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.beta.is_empty() {
            return Err(AcdError::Parameter("both lag orders must be at least 1".into()));
        }
        let finite = std::iter::once(&self.omega).chain(&self.alpha).chain(&self.beta).all(|v| v.is_finite());
        if !finite {
            return Err(AcdError::Parameter("mean-equation parameters must be finite".into()));
        }
        if let InitRule::FirstWindowMean { minutes } = self.init_rule {
            if !(minutes.is_finite() && minutes > 0.0) {
                return Err(AcdError::Parameter(format!("init window must be positive, got {minutes}")));
            }
        }
        self.innovation.validate()
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.alpha.len(), self.beta.len())
    }

    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    pub fn is_stationary(&self) -> bool {
        match self.mean_form {
            MeanForm::Linear => self.persistence() < 1.0,
            MeanForm::LogType1 => self.persistence().abs() < 1.0,
            MeanForm::LogType2 => self.beta.iter().sum::<f64>().abs() < 1.0,
        }
    }

    /// True when the linear form carries a negative coefficient. Allowed, only flagged.
    pub fn has_negative_coefficients(&self) -> bool {
        self.mean_form == MeanForm::Linear && self.alpha.iter().chain(&self.beta).any(|&v| v < 0.0)
    }

    pub fn n_mean_params(&self) -> usize {
        1 + self.alpha.len() + self.beta.len()
    }

    /// Free parameters including innovation shapes.
    pub fn n_params(&self) -> usize {
        self.n_mean_params() + self.innovation.n_shapes()
    }

    /// `[ω, α.., β.., shapes..]`
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.push(self.omega);
        p.extend(&self.alpha);
        p.extend(&self.beta);
        p.extend(self.innovation.shapes());
        p
    }

    /// Inverse of [`params`](Self::params); keeps form, orders, family and init rule.
    pub fn with_params(&self, p: &[f64]) -> Self {
        let (m, q) = self.orders();
        Self {
            mean_form: self.mean_form,
            omega: p[0],
            alpha: p[1..1 + m].to_vec(),
            beta: p[1 + m..1 + m + q].to_vec(),
            innovation: self.innovation.with_shapes(&p[1 + m + q..]),
            init_rule: self.init_rule,
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["omega".to_string()];
        names.extend((1..=self.alpha.len()).map(|j| format!("alpha{j}")));
        names.extend((1..=self.beta.len()).map(|j| format!("beta{j}")));
        names.extend(self.innovation.shape_names().iter().map(|s| s.to_string()));
        names
    }

    /// Label such as `GACD(2,1)` or `log1-WACD(1,1)`.
    pub fn name(&self) -> String {
        let (m, q) = self.orders();
        let prefix = match self.mean_form {
            MeanForm::Linear => "",
            MeanForm::LogType1 => "log1-",
            MeanForm::LogType2 => "log2-",
        };
        format!("{prefix}{}ACD({m},{q})", self.innovation.label())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}
