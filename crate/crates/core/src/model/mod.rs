//! Speech encoder, classifier/projection heads, character-level text
//! encoder, the three training losses, Adam training and gradient checking.
//!
//! The network is generic over [`Real`] so the same code trains in `f32`
//! and is verified against finite differences in `f64`.

mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod params;
mod real;
mod speech;
mod text;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions, GradCheckReport};
pub use loss::{
    batch_loss, batch_loss_and_grad, head_logits, loss_ce, loss_multimodal, loss_supcon,
    multimodal_terms, speech_logits, text_logits, Example, LossKind, LossSpec, MultimodalTerms,
};
pub use params::{
    Conv2d, ConvBlock, EncoderConfig, Linear, ModelConfig, ModelParams, Objective, TextConfig,
};
pub use real::Real;
pub use text::{tokenize, VOCAB_SIZE};
pub use train::{train, Adam, FeatureSet, TrainConfig, TrainOutcome};

use crate::features::MelSpectrogram;
use crate::{Error, Result};

/// Unit-norm speech embedding (the encoder output before any head).
pub fn encode_speech<T: Real>(params: &ModelParams<T>, spec: &MelSpectrogram) -> Result<Vec<T>> {
    speech::speech_forward(params, spec).map(|f| f.embedding)
}

/// Unit-norm text embedding in the speech embedding space.
pub fn encode_text<T: Real>(params: &ModelParams<T>, text: &str) -> Result<Vec<T>> {
    text::text_forward(params, text).map(|f| f.embedding)
}

/// Predicted class (lowest index on ties) and softmax probabilities.
pub fn classify<T: Real>(
    params: &ModelParams<T>,
    spec: &MelSpectrogram,
) -> Result<(usize, Vec<f64>)> {
    if params.objective == Objective::SupCon {
        return Err(Error::Capability(
            "parameters were trained with SupCon only; the classifier head is untrained".into(),
        ));
    }
    let logits: Vec<f64> = speech_logits(params, spec)?
        .into_iter()
        .map(Real::as_f64)
        .collect();
    let probs = loss::softmax(&logits);
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok((best, probs))
}
