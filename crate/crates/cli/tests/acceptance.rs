//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line in `cargo test` output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use langsim::corpus::{DistanceTable, FamilyTree, LanguageRegistry, MeasureKind, Split, TreeNode};
use langsim::distances::{
    cosine_distance, ensemble, genetic_distance, geographic_distance, rank_sources, Coordinate,
    EARTH_RADIUS_KM,
};
use langsim::evaluation::{eval_family_classification, spearman};
use langsim::features::{mcd, MelConfig, MelExtractor, MelSpectrogram};
use langsim::model::{
    batch_loss, classify, encode_speech, grad_check_with, loss_ce, loss_multimodal, loss_supcon,
    multimodal_terms, speech_logits, text_logits, train, ConvBlock, EncoderConfig, Example,
    FeatureSet, GradCheckOptions, LossKind, LossSpec, ModelConfig, ModelParams, TextConfig,
    TrainConfig,
};
use langsim::synthetic::{generate, SyntheticCorpus, SyntheticLanguage, SyntheticSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);
type Case = ((f64, f64), (f64, f64), f64);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.2?}, limit {limit:?}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "table reproduction via correlate", table_reproduction),
        (2, "ranking reproduction via rank", ranking_reproduction),
        (3, "gradient correctness", gradient_correctness),
        (4, "training sanity", training_sanity),
        (5, "loss oracles", loss_oracles),
        (6, "spearman oracle", spearman_oracle),
        (7, "geometry", geometry),
        (8, "DSP", dsp),
        (9, "ensemble properties", ensemble_properties),
        (10, "determinism", determinism),
        (11, "zero-shot family protocol", family_protocol),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2}: PASS  {name} [{secs:.1}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL  {name} [{secs:.1}s] {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

// CLI helpers

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tts_mos")
}

fn langsim(args: &[&str], cwd: &Path) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_langsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| format!("cannot run langsim: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "langsim {} failed ({}): {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

// 1

fn table_reproduction() -> Outcome {
    let start = Instant::now();
    let out = langsim(
        &[
            "correlate",
            "--table",
            "speech-sc.csv",
            "--table",
            "multimodal.csv",
            "--table",
            "speech-ce.csv",
            "--scores",
            "mos.csv",
            "--task",
            "mos",
            "--anchor",
            "target",
        ],
        &fixtures(),
    )?;
    within(start, Duration::from_secs(1))?;
    let mut lines = out.lines();
    ensure(
        lines.next() == Some("measure,anchor,anchor_lang,n,rho"),
        "missing report header",
    )?;
    let mut rho = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        ensure(f.len() == 5, format!("bad report row `{line}`"))?;
        ensure(f[3] == "5", format!("expected 5 pairs in `{line}`"))?;
        rho.insert(
            (f[0].to_string(), f[2].to_string()),
            f[4].parse::<f64>().map_err(|e| e.to_string())?,
        );
    }
    let get = |m: &str, l: &str| {
        rho.get(&(m.to_string(), l.to_string()))
            .copied()
            .ok_or(format!("no row {m}/{l}"))
    };
    let mut detail = Vec::new();
    for (m, l, want) in [
        ("speech-sc", "hin", -0.87),
        ("multimodal", "hin", -0.87),
        ("speech-ce", "hin", -0.87),
        ("speech-sc", "tel", -1.0),
        ("multimodal", "tel", -1.0),
    ] {
        let got = get(m, l)?;
        ensure(
            (got - want).abs() <= 0.005,
            format!("{m}/{l}: rho {got} vs {want}"),
        )?;
        detail.push(format!("{m}/{l}={got:.4}"));
    }
    let ce_tel = get("speech-ce", "tel")?;
    ensure(
        (-1.0..=-0.90).contains(&ce_tel),
        format!("speech-ce/tel rho {ce_tel} outside [-1, -0.90]"),
    )?;
    detail.push(format!("speech-ce/tel={ce_tel:.4} in [-1,-0.90]"));
    Ok(detail.join(" "))
}

// 2

fn ranking_reproduction() -> Outcome {
    let start = Instant::now();
    let mut detail = Vec::new();
    for (target, expect) in [("hin", ["kan", "mar"]), ("tel", ["kan", "hin"])] {
        let out = langsim(
            &["rank", "--table", "speech-sc.csv", "--target", target],
            &fixtures(),
        )?;
        let rows: Vec<(String, f64)> = out
            .lines()
            .map(|l| {
                let (a, b) = l.split_once(',').ok_or(format!("bad rank line `{l}`"))?;
                Ok((a.to_string(), b.parse::<f64>().map_err(|e| e.to_string())?))
            })
            .collect::<Result<_, String>>()?;
        ensure(
            rows.first().map(|r| r.0.as_str()) == Some(target),
            "target does not rank first",
        )?;
        let top2: BTreeSet<&str> = rows.iter().skip(1).take(2).map(|r| r.0.as_str()).collect();
        ensure(
            top2 == expect.into_iter().collect(),
            format!("{target}: top-2 {top2:?}, expected {expect:?}"),
        )?;
        detail.push(format!("{target}: {}", out.trim().replace('\n', " ")));
    }
    within(start, Duration::from_secs(1))?;
    Ok(detail.join(" | "))
}

// 3

fn desk_config(langs: usize) -> ModelConfig {
    let block = |c| ConvBlock {
        out_channels: c,
        kernel: 3,
        stride: 2,
    };
    ModelConfig {
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
        languages: (0..langs).map(|i| format!("l{i:02}")).collect(),
    }
}

fn random_specs(seed: u64, n: usize, frames: usize) -> Vec<MelSpectrogram> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let data = (0..80 * frames)
                .map(|_| rng.gen_range(-2.0f32..2.0))
                .collect();
            MelSpectrogram::new(data, frames, format!("u{i}")).unwrap()
        })
        .collect()
}

const TEXTS: [&str; 8] = [
    "abca", "bcab", "mnop", "nopm", "xyz", "zyx", "hello", "world",
];

fn batch<'a>(specs: &'a [MelSpectrogram]) -> Vec<Example<'a>> {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| Example {
            spec: s,
            text: Some(TEXTS[i % TEXTS.len()]),
            label: i / 2,
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let (mut checked, mut kinks) = (0, 0);
    for seed in 0..5u64 {
        let params = ModelParams::<f64>::init(desk_config(4), seed).map_err(|e| e.to_string())?;
        let specs = random_specs(seed + 100, 8, 21);
        let b = batch(&specs);
        for spec in [
            LossSpec::ce(),
            LossSpec::supcon(0.1),
            LossSpec::multimodal(0.03),
        ] {
            let opts = GradCheckOptions {
                fraction: 0.1,
                seed,
                ..GradCheckOptions::default()
            };
            let r = grad_check_with(&params, &spec, &b, &opts).map_err(|e| e.to_string())?;
            ensure(
                r.kinks_skipped == 0,
                format!("{:?} seed {seed}: unresolved kinks", spec.kind),
            )?;
            ensure(
                r.max_rel_error <= 1e-4,
                format!(
                    "{:?} seed {seed}: max rel error {:.3e} at {:?}",
                    spec.kind, r.max_rel_error, r.worst
                ),
            )?;
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
            kinks += r.kinks_resolved;
        }
    }
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "max rel error {worst:.2e} over {checked} coordinates (3 losses x 5 seeds, eps 1e-5, {kinks} kink crossings re-measured)"
    ))
}

// 4

fn four_tone() -> (SyntheticCorpus, FeatureSet) {
    let corpus = generate(&SyntheticSpec::four_tone(11)).unwrap();
    let features = corpus.features(&MelConfig::default()).unwrap();
    (corpus, features)
}

fn train_with(loss: LossKind, seed: u64, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::new(loss);
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.lr = 3e-3;
    cfg.seed = seed;
    cfg
}

fn training_sanity() -> Outcome {
    let start = Instant::now();
    let (corpus, f) = four_tone();
    let m = &corpus.manifest;
    let cfg = train_with(LossKind::Ce, 5, 20);
    let a = train(m, &f, &ModelConfig::default(), &cfg).map_err(|e| e.to_string())?;
    let b = train(m, &f, &ModelConfig::default(), &cfg).map_err(|e| e.to_string())?;
    ensure(
        a.params.to_checkpoint_bytes() == b.params.to_checkpoint_bytes(),
        "CE training is not deterministic for a fixed seed",
    )?;
    let val: Vec<_> = m.split(Split::Val).collect();
    let langs = &a.params.config.languages;
    let correct = val
        .iter()
        .filter(|u| langs[classify(&a.params, &f[&u.id]).unwrap().0] == u.language)
        .count();
    let acc = correct as f64 / val.len() as f64;
    ensure(acc >= 0.9, format!("CE held-out accuracy {acc}"))?;

    let cfg = train_with(LossKind::SupCon, 5, 20);
    let sc = train(m, &f, &ModelConfig::default(), &cfg).map_err(|e| e.to_string())?;
    let emb: Vec<Vec<f64>> = val
        .iter()
        .map(|u| {
            encode_speech(&sc.params, &f[&u.id])
                .unwrap()
                .into_iter()
                .map(f64::from)
                .collect()
        })
        .collect();
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for i in 0..val.len() {
        for j in i + 1..val.len() {
            let d = cosine_distance(&emb[i], &emb[j]).unwrap();
            if val[i].language == val[j].language {
                intra.push(d);
            } else {
                inter.push(d);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mi, mo) = (mean(&intra), mean(&inter));
    ensure(
        mo - mi >= 0.1,
        format!("SupCon intra {mi:.3} vs inter {mo:.3}"),
    )?;
    within(start, Duration::from_secs(600))?;
    Ok(format!(
        "CE val accuracy {acc:.3} ({} utterances, 20 epochs, deterministic); SupCon intra {mi:.3} inter {mo:.3}",
        val.len()
    ))
}

// 5

fn brute_ce(logits: &[f64], label: usize) -> f64 {
    let z: f64 = logits.iter().map(|v| v.exp()).sum();
    -(logits[label].exp() / z).ln()
}

fn brute_supcon(z: &[Vec<f64>], labels: &[usize], tau: f64) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    let mut anchors = 0;
    for i in 0..z.len() {
        let pos: Vec<usize> = (0..z.len())
            .filter(|&p| p != i && labels[p] == labels[i])
            .collect();
        if pos.is_empty() {
            continue;
        }
        anchors += 1;
        let denom: f64 = (0..z.len())
            .filter(|&a| a != i)
            .map(|a| (dot(&z[i], &z[a]) / tau).exp())
            .sum();
        let mut s = 0.0;
        for &p in &pos {
            s += ((dot(&z[i], &z[p]) / tau).exp() / denom).ln();
        }
        total += -s / pos.len() as f64;
    }
    total / anchors as f64
}

fn loss_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_ce = 0.0f64;
    for _ in 0..8 {
        let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let label = rng.gen_range(0..5);
        let got = loss_ce(&logits, label).map_err(|e| e.to_string())?;
        worst_ce = worst_ce.max((got - brute_ce(&logits, label)).abs());
    }
    // batch CE through the model against the per-example formula
    let params = ModelParams::<f64>::init(desk_config(4), 9).map_err(|e| e.to_string())?;
    let specs = random_specs(77, 8, 21);
    let b = batch(&specs);
    let batch_ce = batch_loss(&params, &b, &LossSpec::ce()).map_err(|e| e.to_string())?;
    let mut manual = 0.0;
    for ex in &b {
        manual += brute_ce(&speech_logits(&params, ex.spec).unwrap(), ex.label);
    }
    manual /= b.len() as f64;
    worst_ce = worst_ce.max((batch_ce - manual).abs());
    ensure(
        worst_ce <= 1e-9,
        format!("CE deviates from formula by {worst_ce:e}"),
    )?;

    let mut worst_sc = 0.0f64;
    for (k, labels) in [
        [0, 0, 1, 1, 2, 2, 3, 3],
        [0, 0, 0, 1, 1, 1, 2, 2],
        [0, 0, 1, 1, 2, 3, 4, 5],
        [0, 1, 0, 1, 0, 1, 0, 1],
    ]
    .iter()
    .enumerate()
    {
        let z: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        for tau in [0.1, 0.5, 1.0] {
            let got = loss_supcon(&z, labels, tau).map_err(|e| e.to_string())?;
            let want = brute_supcon(&z, labels, tau);
            ensure(
                got.is_finite() && want.is_finite(),
                format!("batch {k}: non-finite SupCon"),
            )?;
            worst_sc = worst_sc.max((got - want).abs());
        }
    }
    ensure(
        worst_sc <= 1e-9,
        format!("SupCon deviates from formula by {worst_sc:e}"),
    )?;

    let mm = loss_multimodal(&params, &b, 0.0).map_err(|e| e.to_string())?;
    let terms = multimodal_terms(&params, &b).map_err(|e| e.to_string())?;
    ensure(
        mm == terms.speech_ce + terms.text_ce,
        "alpha = 0 multimodal loss differs from CE sum",
    )?;
    ensure(
        terms.speech_ce == batch_ce,
        "multimodal speech term differs from the speech CE loss",
    )?;
    let mut text_ce = 0.0;
    for ex in &b {
        text_ce += loss_ce(&text_logits(&params, ex.text.unwrap()).unwrap(), ex.label).unwrap();
    }
    text_ce *= 1.0 / b.len() as f64;
    ensure(
        terms.text_ce == text_ce,
        "multimodal text term differs from the text CE loss",
    )?;
    Ok(format!(
        "CE max abs diff {worst_ce:.1e}, SupCon max abs diff {worst_sc:.1e}, multimodal(alpha=0) == speech CE + text CE exactly"
    ))
}

// 6

/// Ranks by explicit construction: 1 + number of smaller values + half the
/// number of other equal values.
fn brute_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let less = xs.iter().filter(|&&y| y < x).count() as f64;
            let equal = xs.iter().filter(|&&y| y == x).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn brute_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(xs), brute_ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn spearman_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst, mut tied, mut free) = (0.0f64, 0, 0);
    let mut cases = 0;
    while cases < 200 {
        let n = rng.gen_range(2..=6);
        let with_ties = cases % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if with_ties {
                (0..n).map(|_| f64::from(rng.gen_range(0..3))).collect()
            } else {
                let mut v: Vec<f64> = (0..n).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect();
                v.shuffle(rng);
                v
            }
        };
        let (xs, ys) = (draw(&mut rng), draw(&mut rng));
        let distinct = |v: &[f64]| v.iter().any(|&x| x != v[0]);
        if !distinct(&xs) || !distinct(&ys) {
            ensure(
                spearman(&xs, &ys).is_err(),
                "constant input must be rejected",
            )?;
            continue;
        }
        cases += 1;
        let got = spearman(&xs, &ys).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_spearman(&xs, &ys)).abs());
        if with_ties {
            tied += 1;
        } else {
            free += 1;
            let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
            let flipped = spearman(&xs, &neg).map_err(|e| e.to_string())?;
            ensure(
                (flipped + got).abs() <= 1e-12,
                format!("reversal: {got} vs {flipped}"),
            )?;
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("{tied} tied + {free} tie-free cases, max deviation {worst:.1e}, reversal antisymmetry holds"))
}

// 7

fn fixture_tree() -> FamilyTree {
    // 15 nodes
    FamilyTree::new(TreeNode::group(
        "root",
        vec![
            TreeNode::group(
                "A",
                vec![
                    TreeNode::group(
                        "A1",
                        vec![TreeNode::leaf("aaa", "aaa"), TreeNode::leaf("aab", "aab")],
                    ),
                    TreeNode::group("A2", vec![TreeNode::leaf("aac", "aac")]),
                ],
            ),
            TreeNode::group(
                "B",
                vec![
                    TreeNode::leaf("bba", "bba"),
                    TreeNode::group(
                        "B1",
                        vec![
                            TreeNode::leaf("bbb", "bbb"),
                            TreeNode::leaf("bbc", "bbc"),
                            TreeNode::group("B2", vec![TreeNode::leaf("bbd", "bbd")]),
                        ],
                    ),
                ],
            ),
            TreeNode::leaf("cca", "cca"),
        ],
    ))
    .unwrap()
}

fn geometry() -> Outcome {
    let r = EARTH_RADIUS_KM;
    let deg = std::f64::consts::PI / 180.0;
    let c = |lat: f64, lon: f64| Coordinate::new(lat, lon).unwrap();
    // spherical law of cosines as an independent closed form
    let central = |a: (f64, f64), b: (f64, f64)| {
        let (p1, p2) = (a.0 * deg, b.0 * deg);
        let dl = (b.1 - a.1) * deg;
        r * (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos())
            .clamp(-1.0, 1.0)
            .acos()
    };
    let cases: [Case; 10] = [
        ((0.0, 0.0), (0.0, 0.0), 0.0),
        ((0.0, 0.0), (0.0, 90.0), 10007.54),
        ((0.0, 0.0), (0.0, 180.0), 20015.09),
        ((90.0, 0.0), (0.0, 0.0), r * 90.0 * deg),
        ((0.0, 0.0), (0.0, 1.0), r * deg),
        ((10.0, 20.0), (40.0, 20.0), r * 30.0 * deg),
        ((45.0, 0.0), (45.0, 180.0), r * 90.0 * deg),
        ((-30.0, 10.0), (30.0, 10.0), r * 60.0 * deg),
        (
            (51.5, -0.13),
            (40.7, -74.0),
            central((51.5, -0.13), (40.7, -74.0)),
        ),
        (
            (25.0, 77.0),
            (17.4, 78.5),
            central((25.0, 77.0), (17.4, 78.5)),
        ),
    ];
    let mut worst = 0.0f64;
    for (a, b, want) in cases {
        let got = geographic_distance(c(a.0, a.1), c(b.0, b.1));
        let err = (got - want).abs();
        ensure(err <= 0.01, format!("{a:?}-{b:?}: {got} km vs {want} km"))?;
        worst = worst.max(err);
    }

    let tree = fixture_tree();
    let hand: [(&str, &str, f64); 10] = [
        ("aaa", "aaa", 0.0),
        ("aaa", "aab", 0.0),
        ("aaa", "aac", 1.0 - 2.0 / 3.0),
        ("aaa", "bbb", 1.0 - 1.0 / 3.0),
        ("bba", "bbb", 1.0 - 2.0 / 3.0),
        ("bbb", "bbd", 1.0 - 3.0 / 4.0),
        ("bba", "bbd", 1.0 - 2.0 / 4.0),
        ("cca", "aaa", 1.0 - 1.0 / 3.0),
        ("cca", "bbd", 1.0 - 1.0 / 4.0),
        ("aac", "bbc", 1.0 - 1.0 / 3.0),
    ];
    for (a, b, want) in hand {
        let got = genetic_distance(&tree, a, b).map_err(|e| e.to_string())?;
        ensure(
            got == want,
            format!("genetic({a}, {b}) = {got}, hand count {want}"),
        )?;
        ensure(
            genetic_distance(&tree, b, a).unwrap() == want,
            format!("genetic({b}, {a}) not symmetric"),
        )?;
    }
    Ok(format!(
        "10 haversine pairs within {worst:.1e} km; 10 genetic pairs exact on a 15-node tree"
    ))
}

// 8

fn dsp() -> Outcome {
    let config = MelConfig::default();
    let extractor = MelExtractor::new(config.clone()).map_err(|e| e.to_string())?;
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(0.0), mel(8000.0));
    let edges: Vec<f64> = (0..82)
        .map(|i| hz(lo + (hi - lo) * i as f64 / 81.0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut detail = Vec::new();
    for _ in 0..10 {
        let f = rng.gen_range(100.0..7000.0);
        let samples: Vec<f32> = (0..8000)
            .map(|n| (0.5 * (2.0 * std::f64::consts::PI * f * n as f64 / 16000.0).sin()) as f32)
            .collect();
        let log_mel = extractor.log_mel(&samples).map_err(|e| e.to_string())?;
        let energy: Vec<f64> = log_mel
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        let best = (0..energy.len()).fold(0, |b, i| if energy[i] > energy[b] { i } else { b });
        ensure(
            edges[best] <= f && f <= edges[best + 2],
            format!(
                "{f:.1} Hz peaks in channel {best} spanning [{:.1}, {:.1}] Hz",
                edges[best],
                edges[best + 2]
            ),
        )?;
        detail.push(format!("{f:.0}->{best}"));
    }
    for len in [800usize, 801, 999, 1000, 1200, 12345, 16000] {
        let samples: Vec<f32> = (0..len).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
        let frames = extractor
            .compute(&samples, "x")
            .map_err(|e| e.to_string())?
            .frames();
        let want = 1 + (len - 800) / 200;
        ensure(
            frames == want && config.frame_count(len) == want,
            format!("{len} samples: {frames} frames, want {want}"),
        )?;
    }
    ensure(
        extractor.compute(&[0.1; 799], "x").is_err(),
        "input shorter than a window must be rejected",
    )?;
    let a = vec![vec![0.3, 1.0, 2.0, -1.0]];
    let b = vec![vec![5.0, 2.0, 2.0, -1.0]];
    let d = mcd(&a, &b).map_err(|e| e.to_string())?;
    let want = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();
    ensure(
        (d - want).abs() <= 1e-6 && (d - 6.14185).abs() <= 1e-5,
        format!("MCD {d} vs {want}"),
    )?;
    Ok(format!(
        "tone->channel {}; frame counts exact; MCD {d:.6}",
        detail.join(" ")
    ))
}

// 9

fn random_table(rng: &mut ChaCha8Rng, langs: &[String]) -> Vec<(String, String, f64)> {
    let mut rows = Vec::new();
    for (i, a) in langs.iter().enumerate() {
        for b in &langs[i + 1..] {
            rows.push((a.clone(), b.clone(), rng.gen_range(0.0..1.0)));
        }
    }
    rows
}

fn ensemble_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let langs: Vec<String> = ["aaa", "bbb", "ccc", "ddd", "eee", "fff"]
        .map(String::from)
        .to_vec();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let rows1 = random_table(&mut rng, &langs);
        let rows2 = random_table(&mut rng, &langs);
        let (a, b) = (rng.gen_range(0.01..100.0), rng.gen_range(-50.0..50.0));
        let t1 = DistanceTable::new(MeasureKind::Custom, rows1.clone()).unwrap();
        let t2 = DistanceTable::new(MeasureKind::Custom, rows2).unwrap();
        let t1a = DistanceTable::new(
            MeasureKind::Custom,
            rows1
                .iter()
                .map(|(x, y, d)| (x.clone(), y.clone(), a * d + b)),
        )
        .unwrap();
        let mut pairs: Vec<(String, String)> = rows1
            .iter()
            .map(|(x, y, _)| (x.clone(), y.clone()))
            .collect();
        pairs.shuffle(&mut rng);
        pairs.truncate(rng.gen_range(3..=pairs.len()));
        let e = ensemble(&[&t1, &t2], &pairs).map_err(|e| e.to_string())?;
        let ea = ensemble(&[&t1a, &t2], &pairs).map_err(|e| e.to_string())?;
        for (x, y) in &pairs {
            let (u, v) = (e.get(x, y).unwrap(), ea.get(x, y).unwrap());
            ensure(
                (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v),
                format!("ensemble value {u} outside [0,1]"),
            )?;
            worst = worst.max((u - v).abs());
        }
    }
    ensure(
        worst <= 1e-9,
        format!("affine transform changed the ensemble by {worst:e}"),
    )?;

    let mut preserved = 0;
    for _ in 0..20 {
        let rows = random_table(&mut rng, &langs);
        let t = DistanceTable::new(MeasureKind::Custom, rows.clone()).unwrap();
        let constant = DistanceTable::new(
            MeasureKind::Custom,
            rows.iter().map(|(x, y, _)| (x.clone(), y.clone(), 0.7)),
        )
        .unwrap();
        let target = "aaa";
        let pairs: Vec<(String, String)> = langs[1..]
            .iter()
            .map(|l| (l.clone(), target.to_string()))
            .collect();
        let e = ensemble(&[&t, &constant], &pairs).map_err(|e| e.to_string())?;
        let order = |tab: &DistanceTable| -> Vec<String> {
            rank_sources(tab, target, &langs[1..])
                .unwrap()
                .into_iter()
                .map(|(l, _)| l)
                .collect()
        };
        ensure(order(&e) == order(&t), "constant table changed the ranking")?;
        preserved += 1;
    }
    Ok(format!(
        "100 random affine maps: max change {worst:.1e}; outputs in [0,1]; {preserved}/20 rankings kept with a constant table"
    ))
}

// 10

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    langsim(
        &[
            "synth",
            "--seed",
            "4",
            "--per-language",
            "10",
            "--duration",
            "0.5",
            "--out",
            "corpus",
        ],
        d,
    )?;
    langsim(
        &[
            "featurize",
            "--manifest",
            "corpus/manifest.jsonl",
            "--out",
            "feats",
        ],
        d,
    )?;
    let mut compared = Vec::new();
    let same = |a: &str, b: &str| -> Result<(), String> {
        let (x, y) = (
            fs::read(d.join(a)).map_err(|e| e.to_string())?,
            fs::read(d.join(b)).map_err(|e| e.to_string())?,
        );
        ensure(x == y, format!("{a} and {b} differ"))
    };
    for loss in ["ce", "supcon", "multimodal"] {
        for run in ["1", "2"] {
            langsim(
                &[
                    "train",
                    "--manifest",
                    "corpus/manifest.jsonl",
                    "--features",
                    "feats",
                    "--loss",
                    loss,
                    "--seed",
                    "7",
                    "--epochs",
                    "2",
                    "--batch",
                    "8",
                    "--out",
                    &format!("{loss}{run}"),
                ],
                d,
            )?;
        }
        same(
            &format!("{loss}1/model.ckpt"),
            &format!("{loss}2/model.ckpt"),
        )?;
        same(
            &format!("{loss}1/loss_trace.csv"),
            &format!("{loss}2/loss_trace.csv"),
        )?;
        compared.push(format!("train[{loss}]"));
    }
    for run in ["1", "2"] {
        langsim(
            &[
                "embed",
                "--checkpoint",
                "ce1/model.ckpt",
                "--manifest",
                "corpus/manifest.jsonl",
                "--out",
                &format!("emb{run}"),
            ],
            d,
        )?;
        langsim(
            &[
                "cluster",
                "--store",
                "emb1/embeddings.json",
                "--k",
                "2",
                "--seed",
                "3",
                "--out",
                &format!("cl{run}"),
            ],
            d,
        )?;
    }
    same("emb1/embeddings.json", "emb2/embeddings.json")?;
    compared.push("embed".into());
    same("cl1/clusters.csv", "cl2/clusters.csv")?;
    compared.push("cluster".into());
    Ok(format!(
        "byte-identical artifacts for {}",
        compared.join(", ")
    ))
}

// 11

fn family_protocol() -> Outcome {
    let spec = SyntheticSpec {
        languages: vec![
            SyntheticLanguage::new("aaa", &[300.0, 450.0]),
            SyntheticLanguage::new("aab", &[320.0, 470.0]).held_out(Split::Test),
            SyntheticLanguage::new("bba", &[1000.0, 1300.0]),
            SyntheticLanguage::new("bbb", &[1050.0, 1350.0]).held_out(Split::Test),
            SyntheticLanguage::new("cca", &[3000.0, 3800.0]),
            SyntheticLanguage::new("ccb", &[3150.0, 3900.0]).held_out(Split::Test),
        ],
        utterances_per_language: 20,
        duration_s: 0.5,
        val_per_language: 0,
        noise_amplitude: 0.01,
        seed: 21,
    };
    let corpus = generate(&spec).map_err(|e| e.to_string())?;
    let manifest = corpus
        .manifest
        .clone()
        .into_zero_shot()
        .map_err(|e| e.to_string())?;
    let f = corpus
        .features(&MelConfig::default())
        .map_err(|e| e.to_string())?;
    let mut cfg = TrainConfig::new(LossKind::Ce);
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.lr = 3e-3;
    cfg.seed = 2;
    let params = train(&manifest, &f, &ModelConfig::default(), &cfg)
        .map_err(|e| e.to_string())?
        .params;
    let train_langs = params.config.languages.clone();

    let family_of = |l: &str| l[..1].to_string();
    let mut registry = LanguageRegistry::new();
    let mut single = LanguageRegistry::new();
    for (i, l) in ["aaa", "aab", "bba", "bbb", "cca", "ccb"]
        .iter()
        .enumerate()
    {
        registry
            .insert(l, &family_of(l), i as f64, i as f64)
            .unwrap();
        single.insert(l, "only", i as f64, i as f64).unwrap();
    }
    let result = eval_family_classification(&params, &manifest, &registry, &train_langs, &f)
        .map_err(|e| e.to_string())?;

    // independent tally
    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    let (mut correct, mut total) = (0usize, 0usize);
    for u in manifest.split(Split::Test) {
        let (k, _) = classify(&params, &f[&u.id]).unwrap();
        let (t, p) = (family_of(&u.language), family_of(&train_langs[k]));
        if t == p {
            correct += 1;
        }
        total += 1;
        *confusion.entry((t, p)).or_insert(0) += 1;
    }
    let tally = correct as f64 / total as f64;
    let got = result
        .accuracy
        .get(&Split::Test)
        .copied()
        .ok_or("no test accuracy")?;
    ensure(
        got == tally,
        format!("harness accuracy {got} vs hand tally {tally}"),
    )?;
    ensure(result.n_evaluated == total, "evaluated count differs")?;
    for ((t, p), n) in &confusion {
        ensure(
            result.confusion.get(t).and_then(|row| row.get(p)) == Some(n),
            format!("confusion cell {t}->{p} differs"),
        )?;
    }
    ensure(
        result
            .confusion
            .values()
            .flat_map(|r| r.values())
            .sum::<usize>()
            == total,
        "confusion counts do not sum to the evaluated total",
    )?;

    let degenerate = eval_family_classification(&params, &manifest, &single, &train_langs, &f)
        .map_err(|e| e.to_string())?;
    ensure(
        degenerate.accuracy.get(&Split::Test) == Some(&1.0),
        "single-family registry must give accuracy 1.0",
    )?;
    Ok(format!(
        "test accuracy {got:.3} = hand tally {correct}/{total}; single-family registry accuracy 1.0"
    ))
}
