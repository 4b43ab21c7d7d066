//! Experiment configuration: every hyper-parameter of the pipeline in one
//! serializable record.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{BaselineKind, DEFAULT_THRESHOLD};
use crate::knowledge::KnowledgeBase;
use crate::learner::{AlphaWeights, FeatureMap, TrainConfig};
use crate::reasoning::{default_specs, AbductionPolicy, TargetSpec};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultKeyword {
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformKeyword {
    Uniform,
}

/// `"default"` or an explicit list of specs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpecsSetting {
    Named(DefaultKeyword),
    Explicit(Vec<TargetSpec>),
}

impl Default for TargetSpecsSetting {
    fn default() -> Self {
        TargetSpecsSetting::Named(DefaultKeyword::Default)
    }
}

/// `"uniform"` or explicit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Named(UniformKeyword),
    Explicit(Vec<f64>),
}

impl Default for AlphaSetting {
    fn default() -> Self {
        AlphaSetting::Named(UniformKeyword::Uniform)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapConfig {
    pub window_radius: usize,
}

impl Default for FeatureMapConfig {
    fn default() -> Self {
        Self { window_radius: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    #[serde(default = "KnowledgeBase::reference")]
    pub kb: KnowledgeBase,
    #[serde(default)]
    pub policy: AbductionPolicy,
    #[serde(default)]
    pub target_specs: TargetSpecsSetting,
    /// Boundary width used when `target_specs` is `"default"`.
    #[serde(default = "default_soft_boundary_width")]
    pub soft_boundary_width: usize,
    #[serde(default)]
    pub alpha: AlphaSetting,
    #[serde(default)]
    pub feature_map: FeatureMapConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub baselines: Vec<BaselineKind>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_soft_boundary_width() -> usize {
    1
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let d = synth.profiles.len();
        Self {
            synth,
            kb: KnowledgeBase::reference(),
            policy: AbductionPolicy::default(),
            target_specs: TargetSpecsSetting::default(),
            soft_boundary_width: default_soft_boundary_width(),
            alpha: AlphaSetting::default(),
            feature_map: FeatureMapConfig::default(),
            train: TrainConfig::default(),
            baselines: BaselineKind::all(d),
            seeds: (0..20).collect(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the field path of the first error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::InvalidConfig(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        let d = self.synth.profiles.len();
        let specs = self.resolve_specs(d);
        if specs.is_empty() {
            return Err(Error::InvalidConfig("target_specs: at least one spec is required".into()));
        }
        for spec in &specs {
            if let Some(&branch) = spec.branches.iter().find(|&&b| b >= d) {
                return Err(Error::SpecOutOfRange { target_id: spec.target_id, branch, d });
            }
        }
        self.resolve_alpha(specs.len())?;
        for b in &self.baselines {
            if let BaselineKind::SingleNls { branch } = *b {
                if branch >= d {
                    return Err(Error::InvalidConfig(format!("baselines: branch {branch} >= d = {d}")));
                }
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }

    pub fn resolve_specs(&self, d: usize) -> Vec<TargetSpec> {
        match &self.target_specs {
            TargetSpecsSetting::Named(DefaultKeyword::Default) => default_specs(d, self.soft_boundary_width),
            TargetSpecsSetting::Explicit(specs) => specs.clone(),
        }
    }

    pub fn resolve_alpha(&self, m: usize) -> Result<AlphaWeights> {
        match &self.alpha {
            AlphaSetting::Named(UniformKeyword::Uniform) => AlphaWeights::uniform(m),
            AlphaSetting::Explicit(w) if w.len() != m => {
                Err(Error::InvalidAlpha(format!("{} weights given for {m} targets", w.len())))
            }
            AlphaSetting::Explicit(w) => AlphaWeights::new(w.clone()),
        }
    }

    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap { window_radius: self.feature_map.window_radius, k: self.synth.k }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn missing_field_reports_path() {
        let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        v["synth"].as_object_mut().unwrap().remove("n");
        let err = ExperimentConfig::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("synth"), "{err}");
        assert!(err.contains("`n`"), "{err}");
    }

    #[test]
    fn alpha_must_match_resolved_m() {
        let mut cfg = ExperimentConfig { alpha: AlphaSetting::Explicit(vec![0.5, 0.5]), ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.alpha = AlphaSetting::Explicit(vec![0.2; 5]);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn keywords_parse() {
        let v: TargetSpecsSetting = serde_json::from_str(r#""default""#).unwrap();
        assert_eq!(v, TargetSpecsSetting::Named(DefaultKeyword::Default));
        let a: AlphaSetting = serde_json::from_str(r#""uniform""#).unwrap();
        assert_eq!(a, AlphaSetting::Named(UniformKeyword::Uniform));
        let a: AlphaSetting = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(a, AlphaSetting::Explicit(vec![0.25, 0.75]));
        assert!(serde_json::from_str::<AlphaSetting>(r#""other""#).is_err());
    }
}
