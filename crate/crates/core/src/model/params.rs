use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::real::Real;
use super::text::VOCAB_SIZE;
use crate::{Error, Result};

/// One convolution block: `out_channels` filters of `kernel x kernel`,
/// padding `kernel / 2`, followed by ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub conv_blocks: Vec<ConvBlock>,
    pub embed_dim: usize,
    /// Output grid of the adaptive max pool (frequency, time).
    pub pool: [usize; 2],
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let block = |c| ConvBlock {
            out_channels: c,
            kernel: 3,
            stride: 2,
        };
        EncoderConfig {
            conv_blocks: vec![block(8), block(16), block(32)],
            embed_dim: 64,
            pool: [4, 4],
        }
    }
}

/// Character encoder: embedding, width-`window` convolution + ReLU,
/// max-pool over positions, affine projection into the speech embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextConfig {
    pub char_dim: usize,
    pub hidden: usize,
    pub window: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            char_dim: 16,
            hidden: 32,
            window: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub text: TextConfig,
    /// Output width of the contrastive projection head.
    pub proj_dim: usize,
    /// Classifier labels, index = class id.
    pub languages: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            text: TextConfig::default(),
            proj_dim: 32,
            languages: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn with_languages(mut self, languages: Vec<String>) -> Self {
        self.languages = languages;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let enc = &self.encoder;
        if enc.conv_blocks.is_empty() {
            return Err(Error::Validation(
                "encoder needs at least one conv block".into(),
            ));
        }
        if enc
            .conv_blocks
            .iter()
            .any(|b| b.out_channels == 0 || b.kernel == 0 || b.stride == 0)
        {
            return Err(Error::Validation(
                "conv blocks need positive channels, kernel and stride".into(),
            ));
        }
        if enc.embed_dim < 2 {
            return Err(Error::Validation("embed_dim must be at least 2".into()));
        }
        if enc.pool.contains(&0) {
            return Err(Error::Validation("pool grid must be positive".into()));
        }
        if self.proj_dim == 0
            || self.text.char_dim == 0
            || self.text.hidden == 0
            || self.text.window == 0
        {
            return Err(Error::Validation(
                "head and text dimensions must be positive".into(),
            ));
        }
        if self.languages.is_empty() {
            return Err(Error::Validation(
                "model needs at least one language".into(),
            ));
        }
        Ok(())
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    fn flat_dim(&self) -> usize {
        let last = self
            .encoder
            .conv_blocks
            .last()
            .map_or(0, |b| b.out_channels);
        last * self.encoder.pool[0] * self.encoder.pool[1]
    }
}

/// Which loss the parameters were trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Untrained,
    Ce,
    SupCon,
    Multimodal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out][in][k][k]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }
}

/// Speech encoder, classifier and projection heads, and text encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub objective: Objective,
    pub seed: u64,
    pub convs: Vec<Conv2d<T>>,
    pub embed: Linear<T>,
    pub ce_head: Linear<T>,
    pub proj_head: Linear<T>,
    /// `[vocab][char_dim]`
    pub char_embed: Vec<T>,
    pub text_conv: Linear<T>,
    pub text_out: Linear<T>,
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut in_c = 1;
        let convs = config
            .encoder
            .conv_blocks
            .iter()
            .map(|b| {
                let c = Conv2d {
                    in_channels: in_c,
                    out_channels: b.out_channels,
                    kernel: b.kernel,
                    stride: b.stride,
                    padding: b.kernel / 2,
                    weight: vec![T::zero(); b.out_channels * in_c * b.kernel * b.kernel],
                    bias: vec![T::zero(); b.out_channels],
                };
                in_c = b.out_channels;
                c
            })
            .collect();
        let d = config.encoder.embed_dim;
        let t = &config.text;
        Ok(ModelParams {
            convs,
            embed: Linear::zeros(config.flat_dim(), d),
            ce_head: Linear::zeros(d, config.n_languages()),
            proj_head: Linear::zeros(d, config.proj_dim),
            char_embed: vec![T::zero(); VOCAB_SIZE * t.char_dim],
            text_conv: Linear::zeros(t.window * t.char_dim, t.hidden),
            text_out: Linear::zeros(t.hidden, d),
            objective: Objective::Untrained,
            seed: 0,
            config,
        })
    }

    /// He-uniform weights for ReLU layers, Glorot-uniform for the output
    /// projections, zero biases. Fully determined by `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        p.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut [T], bound: f64| {
            for v in w.iter_mut() {
                *v = T::of(rng.gen_range(-bound..bound));
            }
        };
        for c in &mut p.convs {
            let fan_in = (c.in_channels * c.kernel * c.kernel) as f64;
            fill(&mut c.weight, (6.0 / fan_in).sqrt());
        }
        let glorot = |l: &Linear<T>| (6.0 / (l.inputs + l.outputs) as f64).sqrt();
        let b = glorot(&p.embed);
        fill(&mut p.embed.weight, b);
        let b = glorot(&p.ce_head);
        fill(&mut p.ce_head.weight, b);
        let b = glorot(&p.proj_head);
        fill(&mut p.proj_head.weight, b);
        fill(&mut p.char_embed, 1.0);
        let b = (6.0 / p.text_conv.inputs as f64).sqrt();
        fill(&mut p.text_conv.weight, b);
        let b = glorot(&p.text_out);
        fill(&mut p.text_out.weight, b);
        Ok(p)
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    /// Named tensors with their dimensions, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((
                format!("encoder.conv{i}.weight"),
                vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                &c.weight,
            ));
            out.push((
                format!("encoder.conv{i}.bias"),
                vec![c.out_channels],
                &c.bias,
            ));
        }
        let lin = |name: &str, l: &Linear<T>| -> [(String, Vec<usize>); 2] {
            [
                (format!("{name}.weight"), vec![l.outputs, l.inputs]),
                (format!("{name}.bias"), vec![l.outputs]),
            ]
        };
        for (name, l) in [
            ("encoder.embed", &self.embed),
            ("ce_head", &self.ce_head),
            ("proj_head", &self.proj_head),
        ] {
            let [w, b] = lin(name, l);
            out.push((w.0, w.1, &l.weight));
            out.push((b.0, b.1, &l.bias));
        }
        out.push((
            "text.char_embed".into(),
            vec![VOCAB_SIZE, self.config.text.char_dim],
            &self.char_embed,
        ));
        for (name, l) in [("text.conv", &self.text_conv), ("text.out", &self.text_out)] {
            let [w, b] = lin(name, l);
            out.push((w.0, w.1, &l.weight));
            out.push((b.0, b.1, &l.bias));
        }
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for l in [&mut self.embed, &mut self.ce_head, &mut self.proj_head] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.char_embed);
        for l in [&mut self.text_conv, &mut self.text_out] {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Self) {
        let src = other.tensors();
        for (dst, (_, _, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += *v;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Converts every weight to another precision.
    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let mut out =
            ModelParams::<U>::zeros(self.config.clone()).expect("config already validated");
        out.objective = self.objective;
        out.seed = self.seed;
        let src = self.tensors();
        for (dst, (_, _, s)) in out.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d = U::of(v.as_f64());
            }
        }
        out
    }
}
