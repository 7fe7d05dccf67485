use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{dot, l2_normalize, l2_normalize_backward, relu, relu_backward};
use super::params::ModelParams;
use super::real::Real;
use super::speech::{speech_backward, speech_forward, SpeechForward};
use super::text::{text_backward, text_forward, TextForward};
use crate::features::MelSpectrogram;
use crate::{Error, Result};

/// Examples per backward work unit. Fixed so gradient sums are reduced in
/// the same order regardless of thread count.
const BACKWARD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ce,
    SupCon,
    Multimodal,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "supcon" => Ok(LossKind::SupCon),
            "multimodal" => Ok(LossKind::Multimodal),
            _ => Err(Error::Validation(format!("unknown loss `{s}`"))),
        }
    }
}

/// A loss together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// SupCon temperature.
    pub tau: f64,
    /// Weight of the speech/text cosine alignment term.
    pub alpha: f64,
}

impl LossSpec {
    pub fn ce() -> Self {
        LossSpec {
            kind: LossKind::Ce,
            tau: 0.1,
            alpha: 3e-2,
        }
    }

    pub fn supcon(tau: f64) -> Self {
        LossSpec {
            kind: LossKind::SupCon,
            tau,
            ..Self::ce()
        }
    }

    pub fn multimodal(alpha: f64) -> Self {
        LossSpec {
            kind: LossKind::Multimodal,
            alpha,
            ..Self::ce()
        }
    }
}

/// One training example: spectrogram, optional romanized text, class id.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub spec: &'a MelSpectrogram,
    pub text: Option<&'a str>,
    pub label: usize,
}

/// `-log softmax(logits)[label]`.
pub fn loss_ce<T: Real>(logits: &[T], label: usize) -> Result<T> {
    ce_with_grad(logits, label).map(|(l, _)| l)
}

/// Loss and gradient `softmax - onehot` with respect to the logits.
pub(crate) fn ce_with_grad<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::Validation(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite logits".into()));
    }
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: T = exps.iter().copied().sum();
    let loss = m + z.ln() - logits[label];
    let mut grad: Vec<T> = exps.iter().map(|&e| e / z).collect();
    grad[label] -= T::one();
    Ok((loss, grad))
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Supervised contrastive loss over unit vectors `z` with temperature `tau`.
///
/// Anchors without any positive are left out of the mean; a batch with no
/// positive pair at all is an error.
pub fn loss_supcon<T: Real>(z: &[Vec<T>], labels: &[usize], tau: f64) -> Result<T> {
    supcon_with_grad(z, labels, tau).map(|(l, _)| l)
}

pub(crate) fn supcon_with_grad<T: Real>(
    z: &[Vec<T>],
    labels: &[usize],
    tau: f64,
) -> Result<(T, Vec<Vec<T>>)> {
    let n = z.len();
    if labels.len() != n {
        return Err(Error::Validation(format!(
            "{n} vectors but {} labels",
            labels.len()
        )));
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Validation(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let positives: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .collect()
        })
        .collect();
    let anchors: Vec<usize> = (0..n).filter(|&i| !positives[i].is_empty()).collect();
    if anchors.is_empty() {
        return Err(Error::UndefinedLoss(
            "supervised contrastive loss: no anchor has a positive in the batch".into(),
        ));
    }
    let inv_tau = T::of(1.0 / tau);
    let sim: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&z[i], &z[j]) * inv_tau).collect())
        .collect();
    let inv_anchors = T::one() / T::of(anchors.len() as f64);
    let mut loss = T::zero();
    let mut dz = vec![vec![T::zero(); z[0].len()]; n];
    for &i in &anchors {
        let m = (0..n)
            .filter(|&a| a != i)
            .map(|a| sim[i][a])
            .fold(T::neg_infinity(), T::max);
        let denom: T = (0..n)
            .filter(|&a| a != i)
            .map(|a| (sim[i][a] - m).exp())
            .sum();
        let lse = m + denom.ln();
        let inv_p = T::one() / T::of(positives[i].len() as f64);
        let mean_pos: T = positives[i].iter().map(|&p| sim[i][p]).sum::<T>() * inv_p;
        loss += lse - mean_pos;
        for j in (0..n).filter(|&j| j != i) {
            let mut g = (sim[i][j] - m).exp() / denom;
            if labels[j] == labels[i] {
                g -= inv_p;
            }
            let g = g * inv_anchors * inv_tau;
            for d in 0..z[i].len() {
                let (zi, zj) = (z[i][d], z[j][d]);
                dz[i][d] += g * zj;
                dz[j][d] += g * zi;
            }
        }
    }
    Ok((loss * inv_anchors, dz))
}

/// Classifier logits for a speech embedding: `ce_head(relu(e))`.
pub fn head_logits<T: Real>(params: &ModelParams<T>, embedding: &[T]) -> Vec<T> {
    params.ce_head.forward(&relu(embedding))
}

pub fn speech_logits<T: Real>(params: &ModelParams<T>, spec: &MelSpectrogram) -> Result<Vec<T>> {
    Ok(head_logits(
        params,
        &speech_forward(params, spec)?.embedding,
    ))
}

/// Text embedding through the shared classifier head.
pub fn text_logits<T: Real>(params: &ModelParams<T>, text: &str) -> Result<Vec<T>> {
    Ok(head_logits(params, &text_forward(params, text)?.embedding))
}

/// Batch means of the three multimodal loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultimodalTerms<T> {
    pub speech_ce: T,
    pub text_ce: T,
    /// Mean cosine distance between speech and text embeddings.
    pub alignment: T,
}

struct ExampleForward<T> {
    speech: SpeechForward<T>,
    text: Option<TextForward<T>>,
}

/// CE through the shared head; accumulates head gradients and returns the
/// gradient with respect to `embedding`.
fn ce_head_step<T: Real>(
    params: &ModelParams<T>,
    embedding: &[T],
    label: usize,
    scale: T,
    grad: Option<&mut ModelParams<T>>,
) -> Result<(T, Vec<T>)> {
    let r = relu(embedding);
    let logits = params.ce_head.forward(&r);
    let (loss, mut dl) = ce_with_grad(&logits, label)?;
    let Some(grad) = grad else {
        return Ok((loss, Vec::new()));
    };
    dl.iter_mut().for_each(|g| *g *= scale);
    let mut dr = params.ce_head.backward(&r, &dl, &mut grad.ce_head);
    relu_backward(&r, &mut dr);
    Ok((loss, dr))
}

struct Evaluation<T> {
    loss: T,
    terms: Option<MultimodalTerms<T>>,
    grad: Option<ModelParams<T>>,
}

fn evaluate<T: Real>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
    spec: &LossSpec,
    want_grad: bool,
) -> Result<Evaluation<T>> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    let n_classes = params.config.n_languages();
    if spec.kind != LossKind::SupCon {
        if let Some(e) = batch.iter().find(|e| e.label >= n_classes) {
            return Err(Error::Validation(format!(
                "label {} out of range for {n_classes} classes",
                e.label
            )));
        }
    }
    if spec.kind == LossKind::Multimodal {
        if spec.alpha.is_nan() || spec.alpha < 0.0 {
            return Err(Error::Validation(format!(
                "alpha must be non-negative, got {}",
                spec.alpha
            )));
        }
        if batch.iter().any(|e| e.text.is_none()) {
            return Err(Error::Validation(
                "multimodal loss needs text for every example".into(),
            ));
        }
    }
    let forwards: Vec<ExampleForward<T>> = batch
        .par_iter()
        .map(|ex| {
            let speech = speech_forward(params, ex.spec)?;
            let text = match (spec.kind, ex.text) {
                (LossKind::Multimodal, Some(t)) => Some(text_forward(params, t)?),
                _ => None,
            };
            Ok(ExampleForward { speech, text })
        })
        .collect::<Result<_>>()?;

    let mut head_grad = want_grad.then(|| params.zeros_like());
    let inv_n = T::one() / T::of(n as f64);
    let mut d_speech: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut d_text: Vec<Vec<T>> = vec![Vec::new(); n];
    let mut terms = None;

    let loss = match spec.kind {
        LossKind::Ce => {
            let mut total = T::zero();
            for (i, (f, ex)) in forwards.iter().zip(batch).enumerate() {
                let (l, de) = ce_head_step(
                    params,
                    &f.speech.embedding,
                    ex.label,
                    inv_n,
                    head_grad.as_mut(),
                )?;
                total += l;
                d_speech[i] = de;
            }
            total * inv_n
        }
        LossKind::SupCon => {
            let projected = forwards
                .iter()
                .map(|f| {
                    let p = params.proj_head.forward(&f.speech.embedding);
                    l2_normalize(&p, "proj_head.normalize")
                })
                .collect::<Result<Vec<_>>>()?;
            let z: Vec<Vec<T>> = projected.iter().map(|(z, _)| z.clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
            let (loss, dz) = supcon_with_grad(&z, &labels, spec.tau)?;
            if let Some(g) = head_grad.as_mut() {
                for i in 0..n {
                    let (zi, norm) = &projected[i];
                    let dp = l2_normalize_backward(zi, *norm, &dz[i]);
                    d_speech[i] = params.proj_head.backward(
                        &forwards[i].speech.embedding,
                        &dp,
                        &mut g.proj_head,
                    );
                }
            }
            loss
        }
        LossKind::Multimodal => {
            let (mut s_total, mut t_total, mut a_total) = (T::zero(), T::zero(), T::zero());
            let alpha = T::of(spec.alpha);
            for (i, (f, ex)) in forwards.iter().zip(batch).enumerate() {
                let e = &f.speech.embedding;
                let t = &f.text.as_ref().expect("text forward present").embedding;
                let (ls, mut de) = ce_head_step(params, e, ex.label, inv_n, head_grad.as_mut())?;
                let (lt, mut dt) = ce_head_step(params, t, ex.label, inv_n, head_grad.as_mut())?;
                s_total += ls;
                t_total += lt;
                a_total += T::one() - dot(e, t);
                if want_grad {
                    let k = alpha * inv_n;
                    for d in 0..e.len() {
                        de[d] -= k * t[d];
                        dt[d] -= k * e[d];
                    }
                }
                d_speech[i] = de;
                d_text[i] = dt;
            }
            let m = MultimodalTerms {
                speech_ce: s_total * inv_n,
                text_ce: t_total * inv_n,
                alignment: a_total * inv_n,
            };
            terms = Some(m);
            m.speech_ce + m.text_ce + alpha * m.alignment
        }
    };

    let grad = match head_grad {
        None => None,
        Some(mut total) => {
            let idx: Vec<usize> = (0..n).collect();
            let partials: Vec<ModelParams<T>> = idx
                .par_chunks(BACKWARD_CHUNK)
                .map(|chunk| {
                    let mut g = params.zeros_like();
                    for &i in chunk {
                        speech_backward(params, &forwards[i].speech, &d_speech[i], &mut g);
                        if let Some(tf) = &forwards[i].text {
                            text_backward(params, tf, &d_text[i], &mut g);
                        }
                    }
                    g
                })
                .collect();
            for p in &partials {
                total.add_assign(p);
            }
            Some(total)
        }
    };
    Ok(Evaluation { loss, terms, grad })
}

/// Hash of every piecewise-linear branch taken while evaluating the loss.
/// Two parameter settings with equal patterns lie in the same smooth region.
pub(crate) fn activation_pattern<T: Real>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
    spec: &LossSpec,
) -> Result<u64> {
    use std::hash::Hasher;
    let mut h = std::collections::hash_map::DefaultHasher::new();
    let uses_head = spec.kind != LossKind::SupCon;
    for ex in batch {
        let f = speech_forward(params, ex.spec)?;
        f.hash_pattern(&mut h);
        if uses_head {
            f.embedding
                .iter()
                .for_each(|v| h.write_u8(u8::from(*v > T::zero())));
        }
        if let (LossKind::Multimodal, Some(t)) = (spec.kind, ex.text) {
            let tf = text_forward(params, t)?;
            tf.hash_pattern(&mut h);
            tf.embedding
                .iter()
                .for_each(|v| h.write_u8(u8::from(*v > T::zero())));
        }
    }
    Ok(h.finish())
}

/// Batch loss without gradients.
pub fn batch_loss<T: Real>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
    spec: &LossSpec,
) -> Result<T> {
    evaluate(params, batch, spec, false).map(|e| e.loss)
}

/// Batch loss and its gradient with respect to every parameter.
pub fn batch_loss_and_grad<T: Real>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
    spec: &LossSpec,
) -> Result<(T, ModelParams<T>)> {
    let e = evaluate(params, batch, spec, true)?;
    Ok((e.loss, e.grad.expect("gradient requested")))
}

/// Speech CE + text CE + `alpha` x speech/text cosine distance, batch-averaged.
pub fn loss_multimodal<T: Real>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
    alpha: f64,
) -> Result<T> {
    batch_loss(params, batch, &LossSpec::multimodal(alpha))
}

pub fn multimodal_terms<T: Real>(
    params: &ModelParams<T>,
    batch: &[Example<'_>],
) -> Result<MultimodalTerms<T>> {
    let e = evaluate(params, batch, &LossSpec::multimodal(0.0), false)?;
    Ok(e.terms.expect("multimodal terms"))
}
