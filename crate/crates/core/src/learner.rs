//! Windowed logistic model trained against a convex combination of losses
//! over the abduced targets.
//!
//! With binary cross-entropy the weighted loss over several targets equals the
//! loss against their weighted mean, so the gradient with respect to the
//! pre-activation is simply `sigmoid(z) - ȳ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InstanceSample, NoisySampleDnls};
use crate::reasoning::PerInstanceTargets;
use crate::rng::SplitMix64;

pub const DEFAULT_CLAMP_EPS: f64 = 1e-7;

/// `φ(i)` is the concatenation of the features of instances `i-W ..= i+W`,
/// zero-padded beyond either end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub window_radius: usize,
    pub k: usize,
}

impl FeatureMap {
    pub fn new(window_radius: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInstances("feature width k must be >= 1".into()));
        }
        Ok(Self { window_radius, k })
    }

    pub fn dim(&self) -> usize {
        self.k * (2 * self.window_radius + 1)
    }

    pub fn encode_into(&self, is: &InstanceSample, i: usize, out: &mut [f64]) {
        let n = is.len() as isize;
        let w = self.window_radius as isize;
        for (slot, offset) in (-w..=w).enumerate() {
            let j = i as isize + offset;
            let dst = &mut out[slot * self.k..(slot + 1) * self.k];
            if (0..n).contains(&j) {
                dst.copy_from_slice(is.features(j as usize));
            } else {
                dst.fill(0.0);
            }
        }
    }

    pub fn encode(&self, is: &InstanceSample, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(is, i, &mut out);
        out
    }

    fn check(&self, is: &InstanceSample) -> Result<()> {
        if is.feature_width() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: is.feature_width() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self { w: vec![0.0; dim], b: 0.0 }
    }

    fn pre_activation(&self, phi: &[f64]) -> f64 {
        self.w.iter().zip(phi).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

/// On-disk model record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub w: Vec<f64>,
    pub b: f64,
    pub window_radius: usize,
    pub k: usize,
}

impl ModelFile {
    pub fn new(params: &ModelParams, fm: &FeatureMap) -> Self {
        Self { w: params.w.clone(), b: params.b, window_radius: fm.window_radius, k: fm.k }
    }

    pub fn split(self) -> Result<(ModelParams, FeatureMap)> {
        let fm = FeatureMap::new(self.window_radius, self.k)?;
        if self.w.len() != fm.dim() {
            return Err(Error::DimensionMismatch { expected: fm.dim(), found: self.w.len() });
        }
        Ok((ModelParams { w: self.w, b: self.b }, fm))
    }
}

/// Non-negative loss weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AlphaWeights(Vec<f64>);

impl AlphaWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidAlpha("at least one weight is required".into()));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidAlpha("weights must be finite and non-negative".into()));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidAlpha(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self(alpha))
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidAlpha("at least one weight is required".into()));
        }
        Ok(Self(vec![1.0 / m as f64; m]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ α_c · targets[c]`.
    pub fn weighted_mean(&self, targets: &[f64]) -> f64 {
        self.0.iter().zip(targets).map(|(a, y)| a * y).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Bce,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss_kind: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clamp_eps: f64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_kind: LossKind::Bce,
            learning_rate: 0.5,
            epochs: 200,
            batch_size: 64,
            seed: 0,
            clamp_eps: DEFAULT_CLAMP_EPS,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidTrainConfig(msg.into()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return bad("clamp_eps must lie in (0, 0.5)");
        }
        Ok(())
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clamp(t: f64, eps: f64) -> f64 {
    t.clamp(eps, 1.0 - eps)
}

/// Model output for instance `i`, clamped to `[ε, 1-ε]`.
pub fn predict(params: &ModelParams, fm: &FeatureMap, is: &InstanceSample, i: usize) -> Result<f64> {
    predict_with_eps(params, fm, is, i, DEFAULT_CLAMP_EPS)
}

pub fn predict_with_eps(params: &ModelParams, fm: &FeatureMap, is: &InstanceSample, i: usize, eps: f64) -> Result<f64> {
    if i >= is.len() {
        return Err(Error::IndexOutOfRange { index: i, n: is.len() });
    }
    fm.check(is)?;
    check_params(params, fm)?;
    Ok(clamp(logistic(params.pre_activation(&fm.encode(is, i))), eps))
}

/// Predictions for every instance in order.
pub fn predict_all(params: &ModelParams, fm: &FeatureMap, is: &InstanceSample, eps: f64) -> Result<Vec<f64>> {
    fm.check(is)?;
    check_params(params, fm)?;
    let mut phi = vec![0.0; fm.dim()];
    Ok((0..is.len())
        .map(|i| {
            fm.encode_into(is, i, &mut phi);
            clamp(logistic(params.pre_activation(&phi)), eps)
        })
        .collect())
}

fn check_params(params: &ModelParams, fm: &FeatureMap) -> Result<()> {
    if params.w.len() != fm.dim() {
        return Err(Error::DimensionMismatch { expected: fm.dim(), found: params.w.len() });
    }
    Ok(())
}

pub fn base_loss(t: f64, y: f64, kind: LossKind, eps: f64) -> f64 {
    match kind {
        LossKind::Bce => {
            let t = clamp(t, eps);
            -(y * t.ln() + (1.0 - y) * (1.0 - t).ln())
        }
        LossKind::Mse => (t - y).powi(2),
    }
}

/// `Σ α_c ℓ(t, targets[c])`.
pub fn joint_loss(t: f64, targets: &[f64], alpha: &AlphaWeights, kind: LossKind) -> Result<f64> {
    joint_loss_with_eps(t, targets, alpha, kind, DEFAULT_CLAMP_EPS)
}

pub fn joint_loss_with_eps(t: f64, targets: &[f64], alpha: &AlphaWeights, kind: LossKind, eps: f64) -> Result<f64> {
    check_targets(targets, alpha)?;
    Ok(alpha
        .as_slice()
        .iter()
        .zip(targets)
        .map(|(a, &y)| a * base_loss(t, y, kind, eps))
        .sum())
}

/// `∂/∂t Σ α_c ℓ(t, targets[c])`, summed term by term.
pub fn joint_loss_dt(t: f64, targets: &[f64], alpha: &AlphaWeights, kind: LossKind) -> Result<f64> {
    check_targets(targets, alpha)?;
    Ok(alpha
        .as_slice()
        .iter()
        .zip(targets)
        .map(|(a, &y)| {
            a * match kind {
                LossKind::Bce => (t - y) / (t * (1.0 - t)),
                LossKind::Mse => 2.0 * (t - y),
            }
        })
        .sum())
}

fn check_targets(targets: &[f64], alpha: &AlphaWeights) -> Result<()> {
    if targets.len() != alpha.len() {
        return Err(Error::DimensionMismatch { expected: alpha.len(), found: targets.len() });
    }
    Ok(())
}

/// Derivative of the joint loss with respect to the pre-activation `z`,
/// taken through the unclamped sigmoid.
fn dloss_dz(z: f64, targets: &[f64], alpha: &AlphaWeights, kind: LossKind) -> f64 {
    let s = logistic(z);
    let y_bar = alpha.weighted_mean(targets);
    match kind {
        LossKind::Bce => s - y_bar,
        LossKind::Mse => 2.0 * (s - y_bar) * s * (1.0 - s),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Analytic gradient of the joint loss at instance `i` with respect to `(w, b)`.
pub fn joint_loss_gradient(
    params: &ModelParams,
    fm: &FeatureMap,
    is: &InstanceSample,
    i: usize,
    targets: &[f64],
    alpha: &AlphaWeights,
    kind: LossKind,
) -> Result<Gradient> {
    if i >= is.len() {
        return Err(Error::IndexOutOfRange { index: i, n: is.len() });
    }
    fm.check(is)?;
    check_params(params, fm)?;
    check_targets(targets, alpha)?;
    let phi = fm.encode(is, i);
    let g = dloss_dz(params.pre_activation(&phi), targets, alpha, kind);
    Ok(Gradient { w: phi.iter().map(|x| g * x).collect(), b: g })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutput {
    pub params: ModelParams,
    /// Mean joint loss per epoch, each instance evaluated at the parameters
    /// in effect before its batch's update.
    pub trace: Vec<f64>,
}

/// Mini-batch gradient descent from zero initialization.
pub fn train(
    ns: &NoisySampleDnls,
    pit: &PerInstanceTargets,
    alpha: &AlphaWeights,
    fm: &FeatureMap,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    let is = &ns.instance_sample;
    let n = is.len();
    fm.check(is)?;
    if pit.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: pit.n() });
    }
    if pit.m() != alpha.len() {
        return Err(Error::DimensionMismatch { expected: alpha.len(), found: pit.m() });
    }

    let dim = fm.dim();
    let mut design = vec![0.0; n * dim];
    for i in 0..n {
        fm.encode_into(is, i, &mut design[i * dim..(i + 1) * dim]);
    }
    // BCE and MSE gradients only depend on the targets through ȳ.
    let y_bar: Vec<f64> = (0..n).map(|i| alpha.weighted_mean(pit.targets(i))).collect();

    let mut params = ModelParams::zeros(dim);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut grad_w = vec![0.0; dim];

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad_w.fill(0.0);
            let mut grad_b = 0.0;
            for &i in batch {
                let phi = &design[i * dim..(i + 1) * dim];
                let z = params.pre_activation(phi);
                let t = clamp(logistic(z), cfg.clamp_eps);
                epoch_loss += joint_loss_with_eps(t, pit.targets(i), alpha, cfg.loss_kind, cfg.clamp_eps)?;
                let g = match cfg.loss_kind {
                    LossKind::Bce => logistic(z) - y_bar[i],
                    LossKind::Mse => {
                        let s = logistic(z);
                        2.0 * (s - y_bar[i]) * s * (1.0 - s)
                    }
                };
                for (gw, x) in grad_w.iter_mut().zip(phi) {
                    *gw += g * x;
                }
                grad_b += g;
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (w, gw) in params.w.iter_mut().zip(&grad_w) {
                *w -= step * gw;
            }
            params.b -= step * grad_b;
        }
        let mean = epoch_loss / n as f64;
        if !mean.is_finite() || params.w.iter().any(|w| !w.is_finite()) || !params.b.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(mean);
    }
    Ok(TrainOutput { params, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiverseNoisyLabelSamples, NoisyLabelSample};

    fn single_instance(feature: f64) -> NoisySampleDnls {
        NoisySampleDnls {
            instance_sample: InstanceSample::from_features(vec![vec![feature]]).unwrap(),
            dnls: DiverseNoisyLabelSamples {
                samples: vec![
                    NoisyLabelSample::new("a", vec![1]).unwrap(),
                    NoisyLabelSample::new("b", vec![0]).unwrap(),
                ],
                tau_div: 0.0,
            },
            true_labels: None,
        }
    }

    #[test]
    fn feature_window_pads_with_zeros() {
        let is = InstanceSample::from_features(vec![vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]]).unwrap();
        let fm = FeatureMap::new(1, 2).unwrap();
        assert_eq!(fm.dim(), 6);
        assert_eq!(fm.encode(&is, 0), vec![0.0, 0.0, 1.0, 10.0, 2.0, 20.0]);
        assert_eq!(fm.encode(&is, 2), vec![2.0, 20.0, 3.0, 30.0, 0.0, 0.0]);
    }

    #[test]
    fn predict_examples() {
        let is = InstanceSample::from_features(vec![vec![2.0]]).unwrap();
        let fm = FeatureMap::new(0, 1).unwrap();
        let zero = ModelParams::zeros(1);
        assert_eq!(predict(&zero, &fm, &is, 0).unwrap(), 0.5);
        let p = ModelParams { w: vec![0.0], b: 3f64.ln() };
        assert!((predict(&p, &fm, &is, 0).unwrap() - 0.75).abs() < 1e-15);
        let p = ModelParams { w: vec![0.0], b: 50.0 };
        assert_eq!(predict(&p, &fm, &is, 0).unwrap(), 1.0 - DEFAULT_CLAMP_EPS);
        assert!(matches!(predict(&zero, &fm, &is, 1), Err(Error::IndexOutOfRange { index: 1, n: 1 })));
    }

    #[test]
    fn joint_loss_examples() {
        let one = AlphaWeights::new(vec![1.0]).unwrap();
        assert_eq!(
            joint_loss(0.3, &[1.0], &one, LossKind::Bce).unwrap(),
            base_loss(0.3, 1.0, LossKind::Bce, DEFAULT_CLAMP_EPS)
        );

        let half = AlphaWeights::uniform(2).unwrap();
        let l = joint_loss(0.8, &[1.0, 0.0], &half, LossKind::Bce).unwrap();
        let hand = 0.5 * -(0.8f64.ln()) + 0.5 * -(0.2f64.ln());
        assert!((l - hand).abs() < 1e-12);
        assert!((l - 0.916_290_731_874_155).abs() < 1e-12);
        let single = base_loss(0.8, 0.5, LossKind::Bce, DEFAULT_CLAMP_EPS);
        assert!((l - single).abs() < 1e-12);

        let a = AlphaWeights::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(joint_loss(0.5, &[0.5, 0.5], &a, LossKind::Mse).unwrap(), 0.0);
        assert!(matches!(joint_loss(0.5, &[0.5], &a, LossKind::Mse), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn alpha_validation() {
        assert!(AlphaWeights::new(vec![0.5, 0.6]).is_err());
        assert!(AlphaWeights::new(vec![1.5, -0.5]).is_err());
        assert!(AlphaWeights::new(vec![]).is_err());
        assert!(AlphaWeights::new(vec![0.25, 0.75]).is_ok());
        assert!(AlphaWeights::uniform(0).is_err());
    }

    #[test]
    fn zero_gradient_at_half() {
        let is = InstanceSample::from_features(vec![vec![1.5], vec![-0.5]]).unwrap();
        let fm = FeatureMap::new(1, 1).unwrap();
        let a = AlphaWeights::new(vec![0.2, 0.8]).unwrap();
        for kind in [LossKind::Bce, LossKind::Mse] {
            let g = joint_loss_gradient(&ModelParams::zeros(3), &fm, &is, 0, &[0.5, 0.5], &a, kind).unwrap();
            assert_eq!(g.b, 0.0);
            assert!(g.w.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn train_examples() {
        let ns = single_instance(1.0);
        let fm = FeatureMap::new(0, 1).unwrap();
        let pit = PerInstanceTargets::from_tuples(vec![vec![1.0]]).unwrap();
        let alpha = AlphaWeights::uniform(1).unwrap();
        let cfg = TrainConfig { learning_rate: 1.0, epochs: 200, batch_size: 1, ..Default::default() };
        let out = train(&ns, &pit, &alpha, &fm, &cfg).unwrap();
        assert!(predict(&out.params, &fm, &ns.instance_sample, 0).unwrap() > 0.9);
        assert_eq!(out.trace.len(), 200);

        let zero_epochs = TrainConfig { epochs: 0, ..cfg.clone() };
        assert!(matches!(train(&ns, &pit, &alpha, &fm, &zero_epochs), Err(Error::InvalidTrainConfig(_))));

        let no_step = TrainConfig { epochs: 1, learning_rate: 0.0, ..cfg.clone() };
        let out = train(&ns, &pit, &alpha, &fm, &no_step).unwrap();
        assert_eq!(out.params, ModelParams::zeros(1));
    }

    #[test]
    fn train_dimension_checks() {
        let ns = single_instance(1.0);
        let fm = FeatureMap::new(0, 1).unwrap();
        let pit = PerInstanceTargets::from_tuples(vec![vec![1.0, 0.0]]).unwrap();
        let alpha = AlphaWeights::uniform(1).unwrap();
        assert!(matches!(
            train(&ns, &pit, &alpha, &fm, &TrainConfig::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let wrong_k = FeatureMap::new(0, 2).unwrap();
        let pit = PerInstanceTargets::from_tuples(vec![vec![1.0]]).unwrap();
        assert!(train(&ns, &pit, &alpha, &wrong_k, &TrainConfig::default()).is_err());
    }

    #[test]
    fn train_detects_divergence() {
        let ns = single_instance(1e200);
        let fm = FeatureMap::new(0, 1).unwrap();
        let pit = PerInstanceTargets::from_tuples(vec![vec![1.0]]).unwrap();
        let alpha = AlphaWeights::uniform(1).unwrap();
        let cfg = TrainConfig { learning_rate: 1e200, epochs: 5, ..Default::default() };
        assert!(matches!(train(&ns, &pit, &alpha, &fm, &cfg), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn model_file_roundtrip() {
        let fm = FeatureMap::new(2, 1).unwrap();
        let params = ModelParams { w: vec![0.1, -0.2, 0.3, 0.4, 1e-17], b: -1.25 };
        let file = ModelFile::new(&params, &fm);
        let json = serde_json::to_string(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, file);
        let (p, f) = back.split().unwrap();
        assert_eq!((p, f), (params, fm));
    }
}
