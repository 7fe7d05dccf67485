use super::layers::{
    check_finite, l2_normalize, l2_normalize_backward, relu_backward, relu_in_place,
};
use super::params::ModelParams;
use super::real::Real;
use crate::{Error, Result};

pub(crate) const PAD: usize = 0;
pub(crate) const UNK: usize = 1;
/// PAD, UNK and the 95 printable ASCII characters.
pub const VOCAB_SIZE: usize = 97;

/// Maps printable ASCII to 2..=96 and everything else to UNK.
pub fn tokenize(text: &str) -> Vec<usize> {
    text.chars()
        .map(|c| match c {
            ' '..='~' => c as usize - ' ' as usize + 2,
            _ => UNK,
        })
        .collect()
}

pub(crate) struct TextForward<T> {
    /// Token ids of each window.
    windows: Vec<Vec<usize>>,
    /// Post-ReLU hidden vector per window.
    hidden: Vec<Vec<T>>,
    /// Winning window per hidden unit.
    argmax: Vec<usize>,
    pooled: Vec<T>,
    norm: T,
    pub embedding: Vec<T>,
}

impl<T: Real> TextForward<T> {
    /// Hashes every ReLU on/off state and max-pool winner.
    pub(crate) fn hash_pattern(&self, h: &mut impl std::hash::Hasher) {
        for row in &self.hidden {
            for v in row {
                h.write_u8(u8::from(*v > T::zero()));
            }
        }
        for &i in &self.argmax {
            h.write_usize(i);
        }
    }
}

pub(crate) fn text_forward<T: Real>(params: &ModelParams<T>, text: &str) -> Result<TextForward<T>> {
    if text.is_empty() {
        return Err(Error::Validation("cannot encode empty text".into()));
    }
    let cfg = &params.config.text;
    let mut seq = vec![PAD; cfg.window - 1];
    seq.extend(tokenize(text));
    seq.extend(std::iter::repeat_n(PAD, cfg.window - 1));
    let windows: Vec<Vec<usize>> = seq.windows(cfg.window).map(<[usize]>::to_vec).collect();

    let mut hidden = Vec::with_capacity(windows.len());
    for win in &windows {
        let input: Vec<T> = win
            .iter()
            .flat_map(|&t| {
                params.char_embed[t * cfg.char_dim..(t + 1) * cfg.char_dim]
                    .iter()
                    .copied()
            })
            .collect();
        let mut h = params.text_conv.forward(&input);
        relu_in_place(&mut h);
        hidden.push(h);
    }
    let mut pooled = vec![T::neg_infinity(); cfg.hidden];
    let mut argmax = vec![0; cfg.hidden];
    for (t, h) in hidden.iter().enumerate() {
        for (j, &v) in h.iter().enumerate() {
            if v > pooled[j] {
                pooled[j] = v;
                argmax[j] = t;
            }
        }
    }
    check_finite(&pooled, "text.conv")?;
    let pre = params.text_out.forward(&pooled);
    check_finite(&pre, "text.out")?;
    let (embedding, norm) = l2_normalize(&pre, "text.normalize")?;
    Ok(TextForward {
        windows,
        hidden,
        argmax,
        pooled,
        norm,
        embedding,
    })
}

pub(crate) fn text_backward<T: Real>(
    params: &ModelParams<T>,
    fwd: &TextForward<T>,
    d_embedding: &[T],
    grad: &mut ModelParams<T>,
) {
    let cfg = &params.config.text;
    let d_pre = l2_normalize_backward(&fwd.embedding, fwd.norm, d_embedding);
    let d_pooled = params
        .text_out
        .backward(&fwd.pooled, &d_pre, &mut grad.text_out);
    for (t, win) in fwd.windows.iter().enumerate() {
        let mut dh: Vec<T> = (0..cfg.hidden)
            .map(|j| {
                if fwd.argmax[j] == t {
                    d_pooled[j]
                } else {
                    T::zero()
                }
            })
            .collect();
        if dh.iter().all(|g| *g == T::zero()) {
            continue;
        }
        relu_backward(&fwd.hidden[t], &mut dh);
        let input: Vec<T> = win
            .iter()
            .flat_map(|&tok| {
                params.char_embed[tok * cfg.char_dim..(tok + 1) * cfg.char_dim]
                    .iter()
                    .copied()
            })
            .collect();
        let d_input = params.text_conv.backward(&input, &dh, &mut grad.text_conv);
        for (slot, &tok) in win.iter().enumerate() {
            let dst = &mut grad.char_embed[tok * cfg.char_dim..(tok + 1) * cfg.char_dim];
            for (d, g) in dst
                .iter_mut()
                .zip(&d_input[slot * cfg.char_dim..(slot + 1) * cfg.char_dim])
            {
                *d += *g;
            }
        }
    }
}
