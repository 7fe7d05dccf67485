use super::layers::{
    adaptive_max_pool, check_finite, l2_normalize, l2_normalize_backward, relu_backward,
    relu_in_place,
};
use super::params::ModelParams;
use super::real::Real;
use crate::features::MelSpectrogram;
use crate::Result;

/// Activations kept from a speech forward pass for backpropagation.
pub(crate) struct SpeechForward<T> {
    /// Input to each conv block: (values, height, width).
    inputs: Vec<(Vec<T>, usize, usize)>,
    /// Post-ReLU output of the last block.
    last: (Vec<T>, usize, usize),
    pool_idx: Vec<usize>,
    flat: Vec<T>,
    norm: T,
    /// Unit-norm embedding.
    pub embedding: Vec<T>,
}

impl<T: Real> SpeechForward<T> {
    /// Hashes every ReLU on/off state and max-pool winner.
    pub(crate) fn hash_pattern(&self, h: &mut impl std::hash::Hasher) {
        for (x, _, _) in self
            .inputs
            .iter()
            .skip(1)
            .chain(std::iter::once(&self.last))
        {
            for v in x {
                h.write_u8(u8::from(*v > T::zero()));
            }
        }
        for &i in &self.pool_idx {
            h.write_usize(i);
        }
    }
}

pub(crate) fn speech_forward<T: Real>(
    params: &ModelParams<T>,
    spec: &MelSpectrogram,
) -> Result<SpeechForward<T>> {
    let mut x: Vec<T> = spec.data().iter().map(|&v| T::of(f64::from(v))).collect();
    let (mut h, mut w) = (spec.channels(), spec.frames());
    let mut inputs = Vec::with_capacity(params.convs.len());
    for (i, conv) in params.convs.iter().enumerate() {
        let (mut z, oh, ow) = conv.forward(&x, h, w);
        relu_in_place(&mut z);
        check_finite(&z, &format!("encoder.conv{i}"))?;
        inputs.push((std::mem::replace(&mut x, z), h, w));
        h = oh;
        w = ow;
    }
    let channels = params.convs.last().map_or(1, |c| c.out_channels);
    let [ph, pw] = params.config.encoder.pool;
    let (flat, pool_idx) = adaptive_max_pool(&x, channels, h, w, ph, pw);
    let pre = params.embed.forward(&flat);
    check_finite(&pre, "encoder.embed")?;
    let (embedding, norm) = l2_normalize(&pre, "encoder.normalize")?;
    Ok(SpeechForward {
        inputs,
        last: (x, h, w),
        pool_idx,
        flat,
        norm,
        embedding,
    })
}

/// Accumulates encoder gradients for upstream gradient `d_embedding`.
pub(crate) fn speech_backward<T: Real>(
    params: &ModelParams<T>,
    fwd: &SpeechForward<T>,
    d_embedding: &[T],
    grad: &mut ModelParams<T>,
) {
    let d_pre = l2_normalize_backward(&fwd.embedding, fwd.norm, d_embedding);
    let d_flat = params.embed.backward(&fwd.flat, &d_pre, &mut grad.embed);
    let (last, _, _) = &fwd.last;
    let mut dx = vec![T::zero(); last.len()];
    for (g, &i) in d_flat.iter().zip(&fwd.pool_idx) {
        dx[i] += *g;
    }
    relu_backward(last, &mut dx);
    for i in (0..params.convs.len()).rev() {
        let (x, h, w) = &fwd.inputs[i];
        let want_dx = i > 0;
        let d_in = params.convs[i].backward(x, *h, *w, &dx, &mut grad.convs[i], want_dx);
        if let Some(mut d) = d_in {
            // inputs[i] is the post-ReLU output of block i-1
            relu_backward(x, &mut d);
            dx = d;
        }
    }
}
