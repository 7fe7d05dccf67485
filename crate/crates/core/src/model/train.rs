use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{batch_loss_and_grad, Example, LossKind, LossSpec};
use super::params::{ModelConfig, ModelParams, Objective};
use super::real::Real;
use crate::corpus::{CorpusManifest, Split};
use crate::features::{spec_augment, AugmentPolicy, MelSpectrogram};
use crate::{Error, Result};

/// Spectrograms keyed by utterance id.
pub type FeatureSet = BTreeMap<String, MelSpectrogram>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub alpha: f64,
    pub tau: f64,
    pub seed: u64,
    /// SpecAugment applied to every training example; per-example seeds are
    /// drawn from the training generator.
    pub augment: Option<AugmentPolicy>,
}

impl TrainConfig {
    /// Adam at 1e-3, batch 128, alpha 3e-2, tau 0.1. SupCon trains on
    /// SpecAugment views; the other losses on clean spectrograms.
    pub fn new(loss: LossKind) -> Self {
        TrainConfig {
            loss,
            lr: 1e-3,
            batch_size: 128,
            epochs: 10,
            alpha: 3e-2,
            tau: 0.1,
            seed: 0,
            augment: (loss == LossKind::SupCon).then(AugmentPolicy::default),
        }
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            kind: self.loss,
            tau: self.tau,
            alpha: self.alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Validation(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::Validation(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with bias correction.
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: ModelParams<T>,
    v: ModelParams<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ModelParams<T>, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ModelParams<T>, grad: &ModelParams<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step));
        let c2 = T::of(1.0 - self.beta2.powi(self.step));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        let grads = grad.tensors();
        for (((p, m), v), (_, _, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Trains on the manifest's train split. Class ids follow the sorted list
/// of training languages. Every random choice (initialization, shuffling,
/// augmentation) derives from `config.seed`.
pub fn train(
    manifest: &CorpusManifest,
    features: &FeatureSet,
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let records: Vec<_> = manifest.split(Split::Train).collect();
    if records.is_empty() {
        return Err(Error::Validation("train split is empty".into()));
    }
    if config.loss == LossKind::Multimodal {
        if let Some(r) = records
            .iter()
            .find(|r| r.text.as_deref().is_none_or(str::is_empty))
        {
            return Err(Error::Validation(format!(
                "multimodal training needs text; utterance `{}` has none",
                r.id
            )));
        }
    }
    let languages: Vec<String> = manifest.languages(Split::Train).into_iter().collect();
    let label_of: BTreeMap<&str, usize> = languages
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let examples = records
        .iter()
        .map(|r| {
            let spec = features
                .get(&r.id)
                .ok_or_else(|| Error::lookup("features for utterance", &r.id))?;
            Ok((spec, r.text.as_deref(), label_of[r.language.as_str()]))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut params =
        ModelParams::<f32>::init(model.clone().with_languages(languages), config.seed)?;
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            loss_trace: Vec::new(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(&params, config.lr);
    let spec = config.loss_spec();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let augmented: Option<Vec<MelSpectrogram>> = match &config.augment {
                None => None,
                Some(policy) => Some(
                    chunk
                        .iter()
                        .map(|&i| {
                            let s = examples[i].0;
                            let p = AugmentPolicy {
                                freq_width_max: policy.freq_width_max.min(s.channels()),
                                time_width_max: policy.time_width_max.min(s.frames()),
                                seed: rng.next_u64(),
                                ..policy.clone()
                            };
                            spec_augment(s, &p)
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| Example {
                    spec: augmented.as_ref().map_or(examples[i].0, |a| &a[k]),
                    text: examples[i].1,
                    label: examples[i].2,
                })
                .collect();
            if config.loss == LossKind::SupCon && !has_positive_pair(&batch) {
                // contrastive loss is undefined here; the batch carries no signal
                continue;
            }
            let (loss, grad) = batch_loss_and_grad(&params, &batch, &spec)?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::Numeric("training loss".into()));
            }
            adam.update(&mut params, &grad);
            total += f64::from(loss) * batch.len() as f64;
            seen += batch.len();
        }
        trace.push(if seen > 0 {
            total / seen as f64
        } else {
            f64::NAN
        });
    }
    params.objective = match config.loss {
        LossKind::Ce => Objective::Ce,
        LossKind::SupCon => Objective::SupCon,
        LossKind::Multimodal => Objective::Multimodal,
    };
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
    })
}

fn has_positive_pair(batch: &[Example<'_>]) -> bool {
    let mut counts = BTreeMap::new();
    batch.iter().any(|e| {
        let c = counts.entry(e.label).or_insert(0);
        *c += 1;
        *c > 1
    })
}
