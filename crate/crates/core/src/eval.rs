//! Ground-truth metrics, the label-aggregation baselines, and the end-to-end
//! abductive multi-target run. Every method trains through the same
//! [`learner::train`] call; only the targets differ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::KnowledgeBase;
use crate::learner::{self, AlphaWeights, FeatureMap, TrainConfig, TrainOutput};
use crate::model::{Label, NoisySampleDnls};
use crate::reasoning::{one_step_reasoning, AbductionPolicy, Abduction, PerInstanceTargets, TargetSpec};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedFlags {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub undefined: UndefinedFlags,
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
        let (precision, p_undef) = ratio(tp, tp + fp);
        let (recall, r_undef) = ratio(tp, tp + fn_);
        let (f1, f_undef) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        let n = tp + fp + fn_ + tn;
        let accuracy = if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 };
        Self {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            accuracy,
            undefined: UndefinedFlags { precision: p_undef, recall: r_undef, f1: f_undef },
        }
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Binarizes `pred >= threshold` and counts confusion cells against `truth`.
pub fn confusion(pred: &[f64], truth: &[Label], threshold: f64) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), found: pred.len() });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("threshold {threshold} outside (0, 1)")));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &y) in pred.iter().zip(truth) {
        match (p >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    SingleNls { branch: usize },
    MajorityVote,
    UnionLabels,
    IntersectionLabels,
}

impl BaselineKind {
    pub fn name(&self) -> String {
        match self {
            BaselineKind::SingleNls { branch } => format!("single_nls_{branch}"),
            BaselineKind::MajorityVote => "majority_vote".into(),
            BaselineKind::UnionLabels => "union_labels".into(),
            BaselineKind::IntersectionLabels => "intersection_labels".into(),
        }
    }

    /// Every single-branch baseline plus the three aggregations.
    pub fn all(d: usize) -> Vec<Self> {
        let mut out: Vec<Self> = (0..d).map(|branch| BaselineKind::SingleNls { branch }).collect();
        out.extend([BaselineKind::MajorityVote, BaselineKind::UnionLabels, BaselineKind::IntersectionLabels]);
        out
    }
}

/// The single target a baseline trains against.
pub fn baseline_targets(kind: BaselineKind, ns: &NoisySampleDnls) -> Result<Vec<f64>> {
    let samples = &ns.dnls.samples;
    let d = samples.len();
    let n = ns.n();
    if d == 0 {
        return Err(Error::InvalidDnls("no noisy label samples".into()));
    }
    let column = |i: usize| samples.iter().map(move |s| s.labels[i]);
    Ok(match kind {
        BaselineKind::SingleNls { branch } => {
            let s = samples
                .get(branch)
                .ok_or(Error::SpecOutOfRange { target_id: 0, branch, d })?;
            s.labels.iter().map(|&v| f64::from(v)).collect()
        }
        BaselineKind::MajorityVote => (0..n)
            .map(|i| {
                let ones = column(i).filter(|&v| v == 1).count();
                match (2 * ones).cmp(&d) {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                }
            })
            .collect(),
        BaselineKind::UnionLabels => (0..n).map(|i| f64::from(column(i).max().unwrap_or(0))).collect(),
        BaselineKind::IntersectionLabels => (0..n).map(|i| f64::from(column(i).min().unwrap_or(0))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRun {
    pub metrics: Metrics,
    pub training: TrainOutput,
    pub predictions: Vec<f64>,
}

fn fit_and_score(
    ns: &NoisySampleDnls,
    pit: &PerInstanceTargets,
    alpha: &AlphaWeights,
    fm: &FeatureMap,
    cfg: &TrainConfig,
    threshold: f64,
) -> Result<MethodRun> {
    let truth = ns.true_labels.as_ref().ok_or(Error::MissingTruth)?;
    let training = learner::train(ns, pit, alpha, fm, cfg)?;
    let predictions = learner::predict_all(&training.params, fm, &ns.instance_sample, cfg.clamp_eps)?;
    let metrics = confusion(&predictions, truth, threshold)?;
    Ok(MethodRun { metrics, training, predictions })
}

pub fn run_baseline_detailed(
    kind: BaselineKind,
    ns: &NoisySampleDnls,
    fm: &FeatureMap,
    cfg: &TrainConfig,
    threshold: f64,
) -> Result<MethodRun> {
    if ns.true_labels.is_none() {
        return Err(Error::MissingTruth);
    }
    let target = baseline_targets(kind, ns)?;
    let pit = PerInstanceTargets::from_tuples(target.into_iter().map(|v| vec![v]).collect())?;
    fit_and_score(ns, &pit, &AlphaWeights::uniform(1)?, fm, cfg, threshold)
}

/// Trains on one baseline's aggregated labels and scores against the truth.
pub fn run_baseline(kind: BaselineKind, ns: &NoisySampleDnls, fm: &FeatureMap, cfg: &TrainConfig) -> Result<Metrics> {
    run_baseline_detailed(kind, ns, fm, cfg, DEFAULT_THRESHOLD).map(|r| r.metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OsamtlRun {
    pub abduction: Abduction,
    pub alpha: AlphaWeights,
    pub run: MethodRun,
}

impl OsamtlRun {
    pub fn metrics(&self) -> &Metrics {
        &self.run.metrics
    }
}

/// The full chain: groundings, reasoning, abduction, targets, training and
/// evaluation. `alpha = None` means uniform weights over the resolved targets.
#[allow(clippy::too_many_arguments)]
pub fn run_osamtl_dnls(
    ns: &NoisySampleDnls,
    kb: &KnowledgeBase,
    policy: &AbductionPolicy,
    specs: &[TargetSpec],
    alpha: Option<&AlphaWeights>,
    fm: &FeatureMap,
    cfg: &TrainConfig,
    threshold: f64,
) -> Result<OsamtlRun> {
    if ns.true_labels.is_none() {
        return Err(Error::MissingTruth);
    }
    let abduction = one_step_reasoning(ns, kb, policy, specs)?;
    let pit = abduction.per_instance();
    let alpha = match alpha {
        Some(a) => a.clone(),
        None => AlphaWeights::uniform(pit.m())?,
    };
    let run = fit_and_score(ns, &pit, &alpha, fm, cfg, threshold)?;
    Ok(OsamtlRun { abduction, alpha, run })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiverseNoisyLabelSamples, InstanceSample, NoisyLabelSample};

    fn ns(branches: &[&[u8]], truth: Option<&[u8]>) -> NoisySampleDnls {
        let n = branches[0].len();
        NoisySampleDnls {
            instance_sample: InstanceSample::from_features(vec![vec![0.0]; n]).unwrap(),
            dnls: DiverseNoisyLabelSamples {
                samples: branches.iter().map(|b| NoisyLabelSample::new("x", b.to_vec()).unwrap()).collect(),
                tau_div: 0.0,
            },
            true_labels: truth.map(<[u8]>::to_vec),
        }
    }

    #[test]
    fn perfect_prediction() {
        let truth = [0, 1, 1, 0];
        let m = confusion(&[0.0, 1.0, 1.0, 0.0], &truth, 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(m.undefined, UndefinedFlags::default());
    }

    #[test]
    fn all_negative_prediction() {
        let m = confusion(&[0.0; 4], &[0, 1, 1, 0], 0.5).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.precision, 0.0);
        assert!(m.undefined.precision && m.undefined.f1 && !m.undefined.recall);
    }

    #[test]
    fn hand_counts() {
        let m = Metrics::from_counts(2, 1, 1, 6);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.8);
    }

    #[test]
    fn threshold_is_inclusive() {
        let m = confusion(&[0.5, 0.49], &[1, 1], 0.5).unwrap();
        assert_eq!((m.tp, m.fn_), (1, 1));
        assert!(confusion(&[0.5], &[1], 1.0).is_err());
        assert!(confusion(&[0.5], &[1, 0], 0.5).is_err());
    }

    #[test]
    fn baseline_targets_examples() {
        let s = ns(&[&[1, 0], &[1, 1]], None);
        assert_eq!(baseline_targets(BaselineKind::MajorityVote, &s).unwrap(), vec![1.0, 0.5]);
        let s = ns(&[&[0, 1], &[1, 0]], None);
        assert_eq!(baseline_targets(BaselineKind::UnionLabels, &s).unwrap(), vec![1.0, 1.0]);
        assert_eq!(baseline_targets(BaselineKind::IntersectionLabels, &s).unwrap(), vec![0.0, 0.0]);
        assert_eq!(baseline_targets(BaselineKind::SingleNls { branch: 1 }, &s).unwrap(), vec![1.0, 0.0]);
        assert!(baseline_targets(BaselineKind::SingleNls { branch: 2 }, &s).is_err());
    }

    #[test]
    fn baseline_needs_truth() {
        let s = ns(&[&[0, 1], &[1, 0]], None);
        let fm = FeatureMap::new(0, 1).unwrap();
        assert!(matches!(
            run_baseline(BaselineKind::MajorityVote, &s, &fm, &TrainConfig::default()),
            Err(Error::MissingTruth)
        ));
    }

    #[test]
    fn baseline_names() {
        let names: Vec<String> = BaselineKind::all(2).iter().map(BaselineKind::name).collect();
        assert_eq!(
            names,
            ["single_nls_0", "single_nls_1", "majority_vote", "union_labels", "intersection_labels"]
        );
    }
}
