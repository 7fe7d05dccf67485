use langsim::features::MelSpectrogram;
use langsim::model::{
    grad_check_with, ConvBlock, EncoderConfig, Example, GradCheckOptions, LossSpec, ModelConfig,
    ModelParams, TextConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAMES: usize = 21;

fn batch_inputs(seed: u64) -> Vec<MelSpectrogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..8)
        .map(|i| {
            let data = (0..80 * FRAMES)
                .map(|_| rng.gen_range(-2.0f32..2.0))
                .collect();
            MelSpectrogram::new(data, FRAMES, format!("u{i}")).unwrap()
        })
        .collect()
}

fn params(seed: u64) -> ModelParams<f64> {
    let langs = ["aaa", "bbb", "ccc", "ddd"].map(String::from).to_vec();
    let block = |c| ConvBlock {
        out_channels: c,
        kernel: 3,
        stride: 2,
    };
    let config = ModelConfig {
        encoder: EncoderConfig {
            conv_blocks: vec![block(4), block(8), block(8)],
            embed_dim: 16,
            pool: [2, 2],
        },
        text: TextConfig {
            char_dim: 8,
            hidden: 8,
            window: 2,
        },
        proj_dim: 8,
        languages: langs,
    };
    ModelParams::<f64>::init(config, seed).unwrap()
}

const TEXTS: [&str; 8] = [
    "abca", "bcab", "mnop", "nopm", "xyz", "zyx", "hello", "world",
];

fn check(spec: LossSpec, seed: u64) -> f64 {
    let p = params(seed);
    let specs = batch_inputs(seed + 100);
    let batch: Vec<Example<'_>> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| Example {
            spec: s,
            text: Some(TEXTS[i]),
            label: i / 2,
        })
        .collect();
    let opts = GradCheckOptions {
        fraction: 0.1,
        seed,
        ..GradCheckOptions::default()
    };
    let r = grad_check_with(&p, &spec, &batch, &opts).unwrap();
    assert!(r.checked > 100);
    println!(
        "{:?} seed {seed}: max rel err {:.3e} at {:?}, kinks resolved {} skipped {}",
        spec.kind, r.max_rel_error, r.worst, r.kinks_resolved, r.kinks_skipped
    );
    assert_eq!(r.kinks_skipped, 0);
    r.max_rel_error
}

#[test]
fn ce_gradients_match_finite_differences() {
    for seed in 0..5 {
        assert!(check(LossSpec::ce(), seed) <= 1e-4);
    }
}

#[test]
fn supcon_gradients_match_finite_differences() {
    for seed in 0..5 {
        assert!(check(LossSpec::supcon(0.1), seed) <= 1e-4);
    }
}

#[test]
fn multimodal_gradients_match_finite_differences() {
    for seed in 0..5 {
        assert!(check(LossSpec::multimodal(0.03), seed) <= 1e-4);
    }
}
