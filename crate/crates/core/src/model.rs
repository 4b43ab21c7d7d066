//! Noisy samples carrying several diverse noisy label samples over one
//! instance sample, with the pairwise diversity measure and the validation
//! gate that every downstream stage relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary label. Only `0` and `1` are valid.
pub type Label = u8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub index: usize,
    pub features: Vec<f64>,
}

/// Ordered instances `0..n`, all with the same feature width `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSample {
    instances: Vec<Instance>,
    k: usize,
}

impl InstanceSample {
    /// Builds a sample from an `n × k` feature table.
    pub fn from_features(features: Vec<Vec<f64>>) -> Result<Self> {
        let k = features.first().map(Vec::len).ok_or(Error::EmptySample)?;
        if k == 0 {
            return Err(Error::InvalidInstances("feature width k must be >= 1".into()));
        }
        let mut instances = Vec::with_capacity(features.len());
        for (index, row) in features.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidInstances(format!(
                    "instance {index} has {} features, expected {k}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInstances(format!(
                    "instance {index} feature {j} is not finite"
                )));
            }
            instances.push(Instance { index, features: row });
        }
        Ok(Self { instances, k })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Feature width shared by every instance.
    pub fn feature_width(&self) -> usize {
        self.k
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.instances[i].features
    }
}

/// One annotator's labelling of the whole instance sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoisyLabelSample {
    pub annotator_id: String,
    pub labels: Vec<Label>,
}

impl NoisyLabelSample {
    pub fn new(annotator_id: impl Into<String>, labels: Vec<Label>) -> Result<Self> {
        check_binary(&labels)?;
        Ok(Self { annotator_id: annotator_id.into(), labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub(crate) fn check_binary(labels: &[Label]) -> Result<()> {
    match labels.iter().position(|&v| v > 1) {
        Some(index) => Err(Error::InvalidLabel { index, value: labels[index] }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiverseNoisyLabelSamples {
    pub samples: Vec<NoisyLabelSample>,
    pub tau_div: f64,
}

impl DiverseNoisyLabelSamples {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// An instance sample together with its diverse noisy label samples and,
/// for synthetic data, the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySampleDnls {
    pub instance_sample: InstanceSample,
    pub dnls: DiverseNoisyLabelSamples,
    pub true_labels: Option<Vec<Label>>,
}

impl NoisySampleDnls {
    pub fn n(&self) -> usize {
        self.instance_sample.len()
    }

    pub fn d(&self) -> usize {
        self.dnls.len()
    }

    /// Errors with [`Error::InvalidDnls`] unless [`validate_dnls`] passes.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_dnls(self);
        if report.is_ok() {
            Ok(())
        } else {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidDnls(msgs.join("; ")))
        }
    }
}

/// Normalized Hamming distance between two label samples.
pub fn differentiate(a: &NoisyLabelSample, b: &NoisyLabelSample) -> Result<f64> {
    hamming_fraction(&a.labels, &b.labels)
}

pub(crate) fn hamming_fraction(a: &[Label], b: &[Label]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), found: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let diff = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(diff as f64 / a.len() as f64)
}

fn check_threshold(tau_div: f64) -> Result<()> {
    if (0.0..1.0).contains(&tau_div) {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(tau_div))
    }
}

/// Binarized diversity: `1` iff `differentiate(a, b) > tau_div`.
pub fn div_nls(a: &NoisyLabelSample, b: &NoisyLabelSample, tau_div: f64) -> Result<u8> {
    check_threshold(tau_div)?;
    Ok(u8::from(differentiate(a, b)? > tau_div))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TooFewSamples { d: usize },
    EmptyInstanceSample,
    LengthMismatch { branch: usize, expected: usize, found: usize },
    InvalidThreshold { tau_div: f64 },
    DiversityViolation { a: usize, b: usize, diversity: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TooFewSamples { d } => write!(f, "too few noisy label samples (d = {d}, need >= 2)"),
            Violation::EmptyInstanceSample => write!(f, "instance sample is empty"),
            Violation::LengthMismatch { branch, expected, found } => {
                write!(f, "branch {branch} has {found} labels, expected {expected}")
            }
            Violation::InvalidThreshold { tau_div } => write!(f, "tau_div {tau_div} outside [0, 1)"),
            Violation::DiversityViolation { a, b, diversity } => {
                write!(f, "branches {a} and {b} are not diverse (difference {diversity})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `d >= 2`, label lengths, and that every unordered pair of branches
/// binarizes to diverse.
pub fn validate_dnls(ns: &NoisySampleDnls) -> ValidationReport {
    let mut violations = Vec::new();
    let n = ns.n();
    let d = ns.d();
    let tau = ns.dnls.tau_div;
    if d < 2 {
        violations.push(Violation::TooFewSamples { d });
    }
    if n == 0 {
        violations.push(Violation::EmptyInstanceSample);
    }
    if check_threshold(tau).is_err() {
        violations.push(Violation::InvalidThreshold { tau_div: tau });
    }
    let mut length_ok = vec![true; d];
    for (branch, nls) in ns.dnls.samples.iter().enumerate() {
        if nls.len() != n {
            length_ok[branch] = false;
            violations.push(Violation::LengthMismatch { branch, expected: n, found: nls.len() });
        }
    }
    if n > 0 {
        let samples = &ns.dnls.samples;
        for a in 0..d {
            for b in a + 1..d {
                if !(length_ok[a] && length_ok[b]) {
                    continue;
                }
                let diversity = hamming_fraction(&samples[a].labels, &samples[b].labels)
                    .expect("lengths checked above");
                if diversity <= tau {
                    violations.push(Violation::DiversityViolation { a, b, diversity });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Pairwise `differentiate` matrix over all branches. Requires equal lengths.
pub fn diversity_matrix(dnls: &DiverseNoisyLabelSamples) -> Result<Vec<Vec<f64>>> {
    let d = dnls.len();
    let mut out = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in a + 1..d {
            let v = differentiate(&dnls.samples[a], &dnls.samples[b])?;
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    Ok(out)
}

/// On-disk dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub n: usize,
    pub k: usize,
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_labels: Option<Vec<Label>>,
    pub nls: Vec<NoisyLabelSample>,
    pub tau_div: f64,
}

impl DatasetFile {
    pub fn from_sample(ns: &NoisySampleDnls) -> Self {
        Self {
            n: ns.n(),
            k: ns.instance_sample.feature_width(),
            features: ns.instance_sample.instances().iter().map(|i| i.features.clone()).collect(),
            true_labels: ns.true_labels.clone(),
            nls: ns.dnls.samples.clone(),
            tau_div: ns.dnls.tau_div,
        }
    }

    /// Structural checks only; diversity is left to [`validate_dnls`].
    pub fn into_sample(self) -> Result<NoisySampleDnls> {
        if self.features.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, found: self.features.len() });
        }
        let instance_sample = InstanceSample::from_features(self.features)?;
        if instance_sample.feature_width() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                found: instance_sample.feature_width(),
            });
        }
        for nls in &self.nls {
            check_binary(&nls.labels)?;
        }
        if let Some(truth) = &self.true_labels {
            check_binary(truth)?;
            if truth.len() != self.n {
                return Err(Error::LengthMismatch { expected: self.n, found: truth.len() });
            }
        }
        Ok(NoisySampleDnls {
            instance_sample,
            dnls: DiverseNoisyLabelSamples { samples: self.nls, tau_div: self.tau_div },
            true_labels: self.true_labels,
        })
    }
}
