//! Seeded generator for the reference 1-D segmentation task: interval ground
//! truth, class-conditional Gaussian features, and annotators with distinct
//! noise regimes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{positive_runs, rasterize, Span};
use crate::model::{
    hamming_fraction, DiverseNoisyLabelSamples, InstanceSample, Label, NoisyLabelSample, NoisySampleDnls,
};
use crate::rng::{mix_seed, SplitMix64};

/// One annotator's noise regime. Stages run in field order: drop, erode,
/// dilate, false positives, flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    #[serde(default)]
    pub dilate_max: usize,
    #[serde(default)]
    pub erode_max: usize,
    #[serde(default)]
    pub drop_prob: f64,
    #[serde(default)]
    pub fp_rate: f64,
    #[serde(default)]
    pub flip_prob: f64,
}

impl AnnotatorProfile {
    pub fn clean(annotator_id: impl Into<String>) -> Self {
        Self {
            annotator_id: annotator_id.into(),
            dilate_max: 0,
            erode_max: 0,
            drop_prob: 0.0,
            fp_rate: 0.0,
            flip_prob: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [("drop_prob", self.drop_prob), ("fp_rate", self.fp_rate), ("flip_prob", self.flip_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSynthConfig(format!(
                    "annotator {}: {name} = {p} outside [0, 1]",
                    self.annotator_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub interval_count: usize,
    pub interval_len_min: usize,
    pub interval_len_max: usize,
    pub min_separation: usize,
    pub mu0: f64,
    pub mu1: f64,
    pub sigma: f64,
    pub profiles: Vec<AnnotatorProfile>,
    pub seed: u64,
    #[serde(default)]
    pub tau_div: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
}

fn default_k() -> usize {
    1
}

fn default_max_retries() -> usize {
    100
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            k: 1,
            interval_count: 20,
            interval_len_min: 5,
            interval_len_max: 15,
            min_separation: 5,
            mu0: 0.0,
            mu1: 1.0,
            sigma: 0.75,
            profiles: default_profiles(),
            seed: 7,
            tau_div: 0.0,
            max_retries: default_max_retries(),
        }
    }
}

/// Over-labeler, under-labeler and flipper.
pub fn default_profiles() -> Vec<AnnotatorProfile> {
    vec![
        AnnotatorProfile { dilate_max: 1, fp_rate: 0.45, ..AnnotatorProfile::clean("over_labeler") },
        AnnotatorProfile { erode_max: 1, drop_prob: 0.1, ..AnnotatorProfile::clean("under_labeler") },
        AnnotatorProfile { flip_prob: 0.1, ..AnnotatorProfile::clean("flipper") },
    ]
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSynthConfig(msg));
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if self.interval_len_min == 0 || self.interval_len_min > self.interval_len_max {
            return bad("interval lengths must satisfy 1 <= interval_len_min <= interval_len_max".into());
        }
        if self.interval_count * (self.interval_len_max + self.min_separation) > self.n {
            return bad(format!(
                "{} intervals of length <= {} with separation {} do not fit in n = {}",
                self.interval_count, self.interval_len_max, self.min_separation, self.n
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0 && self.mu0.is_finite() && self.mu1.is_finite()) {
            return bad("class means must be finite and sigma finite and non-negative".into());
        }
        if self.profiles.len() < 2 {
            return bad(format!("need at least 2 annotator profiles, got {}", self.profiles.len()));
        }
        if !(0.0..1.0).contains(&self.tau_div) {
            return Err(Error::InvalidThreshold(self.tau_div));
        }
        self.profiles.iter().try_for_each(AnnotatorProfile::validate)
    }
}

/// Places `interval_count` runs by rejection sampling.
pub fn generate_ground_truth(cfg: &SynthConfig, rng: &mut SplitMix64) -> Result<Vec<Label>> {
    cfg.validate()?;
    let budget = 10 * cfg.interval_count;
    let mut placed: Vec<Span> = Vec::with_capacity(cfg.interval_count);
    let mut rejections = 0;
    while placed.len() < cfg.interval_count {
        let len = rng.uniform_inclusive(cfg.interval_len_min, cfg.interval_len_max);
        let start = rng.uniform_inclusive(0, cfg.n - len);
        let candidate = Span::new(start, len);
        let sep = cfg.min_separation;
        let clash = placed
            .iter()
            .any(|p| candidate.start < p.end() + sep && p.start < candidate.end() + sep);
        if clash {
            rejections += 1;
            if rejections >= budget {
                return Err(Error::PlacementInfeasible { rejections });
            }
        } else {
            placed.push(candidate);
        }
    }
    Ok(rasterize(&placed, cfg.n))
}

/// `feature ~ Normal(mu_y, sigma)`, drawn in index order.
pub fn generate_features(y: &[Label], cfg: &SynthConfig, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    y.iter()
        .map(|&label| {
            let mu = if label == 1 { cfg.mu1 } else { cfg.mu0 };
            (0..cfg.k).map(|_| mu + cfg.sigma * rng.next_normal()).collect()
        })
        .collect()
}

/// Shrinks each run by `(left, right)`, keeping at least one element.
pub fn erode_spans(runs: &[Span], amounts: &[(usize, usize)]) -> Vec<Span> {
    runs.iter()
        .zip(amounts)
        .map(|(r, &(left, right))| {
            let left = left.min(r.len - 1);
            let right = right.min(r.len - 1 - left);
            Span::new(r.start + left, r.len - left - right)
        })
        .collect()
}

/// Grows each run by `(left, right)`, clipped to `[0, n)`. The result may
/// overlap; rasterize to merge.
pub fn dilate_spans(runs: &[Span], amounts: &[(usize, usize)], n: usize) -> Vec<Span> {
    runs.iter()
        .zip(amounts)
        .map(|(r, &(left, right))| {
            let start = r.start.saturating_sub(left);
            let end = (r.end() + right).min(n);
            Span::new(start, end - start)
        })
        .collect()
}

/// Applies one annotator's noise to the ground truth.
pub fn corrupt(y: &[Label], profile: &AnnotatorProfile, rng: &mut SplitMix64) -> NoisyLabelSample {
    let n = y.len();
    let mut runs = positive_runs(y);

    runs.retain(|_| !rng.bernoulli(profile.drop_prob));

    let mut draw_pairs = |max: usize, count: usize| -> Vec<(usize, usize)> {
        (0..count).map(|_| (rng.uniform_inclusive(0, max), rng.uniform_inclusive(0, max))).collect()
    };
    let erosion = draw_pairs(profile.erode_max, runs.len());
    let runs = erode_spans(&runs, &erosion);
    let dilation = draw_pairs(profile.dilate_max, runs.len());
    let runs = dilate_spans(&runs, &dilation, n);
    let mut labels = rasterize(&runs, n);

    for i in 0..n {
        if labels[i] == 0 && rng.bernoulli(profile.fp_rate) {
            let len = rng.uniform_inclusive(1, 3);
            labels[i..(i + len).min(n)].fill(1);
        }
    }
    for v in labels.iter_mut() {
        if rng.bernoulli(profile.flip_prob) {
            *v ^= 1;
        }
    }
    NoisyLabelSample { annotator_id: profile.annotator_id.clone(), labels }
}

fn draw_annotator(cfg: &SynthConfig, truth: &[Label], j: usize, retry: usize) -> NoisyLabelSample {
    let mut rng = SplitMix64::new(mix_seed(cfg.seed, j as u64 + 1, retry as u64));
    corrupt(truth, &cfg.profiles[j], &mut rng)
}

/// Ground truth, features and a diverse set of annotators. An annotator is
/// redrawn from a fresh sub-seed while it fails the diversity check against an
/// earlier one.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<NoisySampleDnls> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let truth = generate_ground_truth(cfg, &mut rng)?;
    let features = generate_features(&truth, cfg, &mut rng);

    let d = cfg.profiles.len();
    let mut retry = vec![0usize; d];
    let mut samples: Vec<NoisyLabelSample> = (0..d).map(|j| draw_annotator(cfg, &truth, j, 0)).collect();
    let mut total_retries = 0;
    while let Some((a, b)) = first_non_diverse(&samples, cfg.tau_div) {
        if total_retries >= cfg.max_retries {
            return Err(Error::DiversityUnreachable { a, b, retries: total_retries });
        }
        total_retries += 1;
        retry[b] += 1;
        samples[b] = draw_annotator(cfg, &truth, b, retry[b]);
    }

    let ns = NoisySampleDnls {
        instance_sample: InstanceSample::from_features(features)?,
        dnls: DiverseNoisyLabelSamples { samples, tau_div: cfg.tau_div },
        true_labels: Some(truth),
    };
    ns.ensure_valid()?;
    Ok(ns)
}

fn first_non_diverse(samples: &[NoisyLabelSample], tau: f64) -> Option<(usize, usize)> {
    let d = samples.len();
    (0..d)
        .flat_map(|a| (a + 1..d).map(move |b| (a, b)))
        .find(|&(a, b)| hamming_fraction(&samples[a].labels, &samples[b].labels).is_ok_and(|v| v <= tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::extract_from_labels;
    use crate::model::validate_dnls;

    #[test]
    fn empty_placement() {
        let cfg = SynthConfig { interval_count: 0, ..Default::default() };
        let y = generate_ground_truth(&cfg, &mut SplitMix64::new(1)).unwrap();
        assert!(y.iter().all(|&v| v == 0));
    }

    #[test]
    fn default_truth_geometry() {
        let cfg = SynthConfig::default();
        let y = generate_ground_truth(&cfg, &mut SplitMix64::new(cfg.seed)).unwrap();
        let gs = extract_from_labels(&y, 0).unwrap();
        assert_eq!(gs.runs().len(), 20);
        assert!(gs.runs().iter().all(|r| (5..=15).contains(&r.len)));
        assert!(gs.gaps().iter().all(|g| g.len >= 5));
        let again = generate_ground_truth(&cfg, &mut SplitMix64::new(cfg.seed)).unwrap();
        assert_eq!(y, again);
    }

    #[test]
    fn infeasible_geometry_rejected() {
        let cfg = SynthConfig { n: 100, ..Default::default() };
        assert!(matches!(
            generate_ground_truth(&cfg, &mut SplitMix64::new(0)),
            Err(Error::InvalidSynthConfig(_))
        ));
    }

    #[test]
    fn placement_budget_exhausted() {
        // Total length fits, but random starts leave no room: two runs of 50 in n = 100.
        let cfg = SynthConfig {
            n: 100,
            interval_count: 2,
            interval_len_min: 50,
            interval_len_max: 50,
            min_separation: 0,
            ..Default::default()
        };
        let err = (0..20u64)
            .map(|s| generate_ground_truth(&cfg, &mut SplitMix64::new(s)))
            .find(Result::is_err)
            .expect("some seed fails placement");
        assert!(matches!(err, Err(Error::PlacementInfeasible { rejections: 20 })));
    }

    #[test]
    fn features_degenerate_noise() {
        let cfg = SynthConfig { sigma: 0.0, mu0: -2.0, mu1: 3.0, ..Default::default() };
        let y = [0, 1, 1, 0];
        let f = generate_features(&y, &cfg, &mut SplitMix64::new(5));
        assert_eq!(f, vec![vec![-2.0], vec![3.0], vec![3.0], vec![-2.0]]);
    }

    #[test]
    fn positive_feature_mean() {
        let cfg = SynthConfig::default();
        let mut rng = SplitMix64::new(cfg.seed);
        let y = generate_ground_truth(&cfg, &mut rng).unwrap();
        let f = generate_features(&y, &cfg, &mut rng);
        let pos: Vec<f64> = y.iter().zip(&f).filter(|(l, _)| **l == 1).map(|(_, x)| x[0]).collect();
        let mean = pos.iter().sum::<f64>() / pos.len() as f64;
        assert!((mean - cfg.mu1).abs() < 0.1, "{mean}");
        let f2 = generate_features(&y, &cfg, &mut SplitMix64::new(99));
        let mut rng = SplitMix64::new(cfg.seed);
        let _ = generate_ground_truth(&cfg, &mut rng).unwrap();
        assert_eq!(f, generate_features(&y, &cfg, &mut rng));
        assert_ne!(f, f2);
    }

    #[test]
    fn clean_profile_is_identity() {
        let y = vec![0, 1, 1, 1, 0, 0, 1, 0];
        let out = corrupt(&y, &AnnotatorProfile::clean("c"), &mut SplitMix64::new(3));
        assert_eq!(out.labels, y);
    }

    #[test]
    fn dilation_by_one() {
        let y = [0, 0, 1, 1, 1, 0, 0, 0];
        let runs = positive_runs(&y);
        assert_eq!(runs, vec![Span::new(2, 3)]);
        assert_eq!(dilate_spans(&runs, &[(1, 1)], 8), vec![Span::new(1, 5)]);
        assert_eq!(dilate_spans(&runs, &[(5, 9)], 8), vec![Span::new(0, 8)]);
        assert_eq!(erode_spans(&runs, &[(1, 1)]), vec![Span::new(3, 1)]);
        assert_eq!(erode_spans(&runs, &[(2, 2)]), vec![Span::new(4, 1)]);
    }

    #[test]
    fn full_flip_complements() {
        let y = vec![0, 1, 1, 0, 1];
        let p = AnnotatorProfile { flip_prob: 1.0, ..AnnotatorProfile::clean("f") };
        let out = corrupt(&y, &p, &mut SplitMix64::new(0));
        assert_eq!(out.labels, vec![1, 0, 0, 1, 0]);
    }

    #[test]
    fn full_drop_clears() {
        let y = vec![0, 1, 1, 0, 1];
        let p = AnnotatorProfile { drop_prob: 1.0, ..AnnotatorProfile::clean("d") };
        assert_eq!(corrupt(&y, &p, &mut SplitMix64::new(0)).labels, vec![0; 5]);
    }

    #[test]
    fn default_dataset_is_diverse_and_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate_dataset(&cfg).unwrap();
        assert!(validate_dnls(&a).is_ok());
        assert_eq!(a.d(), 3);
        assert_eq!(a.n(), 2000);
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_clean_profiles_never_diverse() {
        let cfg = SynthConfig {
            profiles: vec![AnnotatorProfile::clean("a"), AnnotatorProfile::clean("b")],
            max_retries: 5,
            ..Default::default()
        };
        assert!(matches!(
            generate_dataset(&cfg),
            Err(Error::DiversityUnreachable { a: 0, b: 1, retries: 5 })
        ));
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut cfg = SynthConfig::default();
        cfg.profiles[0].flip_prob = 1.5;
        assert!(cfg.validate().is_err());
        let one = SynthConfig { profiles: vec![AnnotatorProfile::clean("a")], ..Default::default() };
        assert!(one.validate().is_err());
    }
}
