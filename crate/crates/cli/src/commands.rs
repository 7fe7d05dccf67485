use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use langsim::corpus::{
    load_distance_table, load_manifest, load_registry, load_score_table, load_tree,
    save_distance_table, CorpusManifest, DistanceTable, MeasureKind, Split, Task,
};
use langsim::distances::{
    acoustic_distance, ensemble, genetic_table, geographic_table, rank_sources,
};
use langsim::embeddings::{embed_language_with_id, kmeans, load_store, save_store, EmbeddingStore};
use langsim::evaluation::{correlate, emit_report, eval_family_classification, report_csv, Anchor};
use langsim::features::{featurize_manifest, read_feature_cache, write_feature_cache, MelConfig};
use langsim::model::{
    load_checkpoint, save_checkpoint, train, FeatureSet, LossKind, ModelConfig, TrainConfig,
};
use langsim::synthetic::{generate, SyntheticSpec};
use langsim::{Error, Result};

use crate::{
    AnchorArg, ClusterArgs, Command, CorrelateArgs, DistanceArgs, EmbedArgs, EnsembleArgs,
    FamilyEvalArgs, FeaturizeArgs, LossArg, RankArgs, SplitArg, SynthArgs, TaskArg, TrainArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train_cmd(a),
        Command::Embed(a) => embed(a),
        Command::Distance(a) => distance(a),
        Command::Ensemble(a) => ensemble_cmd(a),
        Command::Rank(a) => rank(a),
        Command::Correlate(a) => correlate_cmd(a),
        Command::FamilyEval(a) => family_eval(a),
        Command::Cluster(a) => cluster(a),
        Command::Synth(a) => synth(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Audio paths in a manifest are relative to the manifest's directory.
fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn check_file_safe_id(id: &str) -> Result<()> {
    if id.is_empty()
        || id.starts_with('.')
        || !id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
    {
        return Err(Error::Validation(format!(
            "utterance id `{id}` cannot be used as a file name (use letters, digits, '-', '_', '.')"
        )));
    }
    Ok(())
}

fn feature_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.lmel"))
}

fn load_features(
    manifest: &CorpusManifest,
    manifest_path: &Path,
    features: Option<&Path>,
) -> Result<FeatureSet> {
    match features {
        None => featurize_manifest(
            manifest,
            &manifest_dir(manifest_path),
            &MelConfig::default(),
        ),
        Some(dir) => manifest
            .records()
            .iter()
            .map(|u| {
                check_file_safe_id(&u.id)?;
                Ok((
                    u.id.clone(),
                    read_feature_cache(feature_path(dir, &u.id), &u.id)?,
                ))
            })
            .collect(),
    }
}

/// `measure=path`, or a bare path whose file stem names the measure
/// (anything else loads as `custom`).
fn load_table_arg(arg: &str) -> Result<DistanceTable> {
    if let Some((name, path)) = arg.split_once('=') {
        return load_distance_table(path, name.parse()?);
    }
    let stem = Path::new(arg)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("");
    let kind = stem.parse().unwrap_or(MeasureKind::Custom);
    load_distance_table(arg, kind)
}

fn featurize(a: FeaturizeArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    for u in manifest.records() {
        check_file_safe_id(&u.id)?;
    }
    let features =
        featurize_manifest(&manifest, &manifest_dir(&a.manifest), &MelConfig::default())?;
    ensure_dir(&a.out)?;
    for (id, spec) in &features {
        write_feature_cache(feature_path(&a.out, id), spec)?;
    }
    println!(
        "featurized {} utterances into {}",
        features.len(),
        a.out.display()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let features = load_features(&manifest, &a.manifest, a.features.as_deref())?;
    let loss = match a.loss {
        LossArg::Ce => LossKind::Ce,
        LossArg::Supcon => LossKind::SupCon,
        LossArg::Multimodal => LossKind::Multimodal,
    };
    let mut config = TrainConfig::new(loss);
    config.seed = a.seed;
    config.epochs = a.epochs;
    config.batch_size = a.batch;
    config.lr = a.lr;
    config.alpha = a.alpha;
    config.tau = a.tau;
    let outcome = train(&manifest, &features, &ModelConfig::default(), &config)?;
    ensure_dir(&a.out)?;
    let ckpt = a.out.join("model.ckpt");
    save_checkpoint(&ckpt, &outcome.params)?;
    let mut trace = String::from("epoch,loss\n");
    for (i, l) in outcome.loss_trace.iter().enumerate() {
        writeln!(trace, "{},{l}", i + 1).unwrap();
    }
    write(&a.out.join("loss_trace.csv"), &trace)?;
    println!("model_id {}", outcome.params.model_id());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let params = load_checkpoint(&a.checkpoint)?;
    let model_id = params.model_id();
    let manifest = load_manifest(&a.manifest)?;
    let wanted = |s: Split| match a.split {
        SplitArg::All => true,
        SplitArg::Train => s == Split::Train,
        SplitArg::Val => s == Split::Val,
        SplitArg::Test => s == Split::Test,
    };
    let mut by_lang: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for u in manifest.records().iter().filter(|u| wanted(u.split)) {
        by_lang.entry(&u.language).or_default().push(&u.id);
    }
    if by_lang.is_empty() {
        return Err(Error::InsufficientData(
            "no utterances selected for embedding".into(),
        ));
    }
    if let Some(max) = a.max_per_language {
        for ids in by_lang.values_mut() {
            ids.sort_unstable();
            ids.truncate(max);
        }
    }
    let features = load_features(&manifest, &a.manifest, a.features.as_deref())?;
    let mut store = EmbeddingStore::new(&model_id, params.config.encoder.embed_dim);
    for (lang, ids) in &by_lang {
        let specs: Vec<_> = ids.iter().map(|id| &features[*id]).collect();
        store.insert(embed_language_with_id(&params, &model_id, &specs, lang)?)?;
    }
    ensure_dir(&a.out)?;
    save_store(a.out.join("embeddings.json"), &store)?;
    println!("embedded {} languages with model {model_id}", store.len());
    Ok(())
}

fn distance(a: DistanceArgs) -> Result<()> {
    let kind: MeasureKind = a.measure.parse()?;
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone()
            .ok_or_else(|| Error::Validation(format!("measure `{kind}` needs --{flag}")))
    };
    let table = match kind {
        MeasureKind::SpeechCe | MeasureKind::SpeechSc | MeasureKind::Multimodal => {
            let store = load_store(need(&a.store, "store")?)?;
            let langs: Vec<String> = if a.langs.is_empty() {
                store.languages().map(str::to_string).collect()
            } else {
                a.langs.clone()
            };
            let mut rows = Vec::new();
            for (i, x) in langs.iter().enumerate() {
                for y in &langs[i..] {
                    rows.push((x.clone(), y.clone(), acoustic_distance(&store, x, y)?));
                }
            }
            DistanceTable::new(kind, rows)?.with_note(format!("model_id {}", store.model_id()))
        }
        MeasureKind::Genetic => {
            let tree = load_tree(need(&a.tree, "tree")?)?;
            let langs: Vec<String> = if a.langs.is_empty() {
                tree.languages().map(str::to_string).collect()
            } else {
                a.langs.clone()
            };
            genetic_table(&tree, &langs)?
        }
        MeasureKind::Geographic => {
            let registry = load_registry(need(&a.registry, "registry")?)?;
            let langs: Vec<String> = if a.langs.is_empty() {
                registry.languages().map(str::to_string).collect()
            } else {
                a.langs.clone()
            };
            geographic_table(&registry, &langs)?
        }
        other => {
            return Err(Error::Validation(format!(
                "measure `{other}` is loaded from precomputed tables, not computed"
            )))
        }
    };
    ensure_dir(&a.out)?;
    let path = a.out.join(format!("{kind}.csv"));
    save_distance_table(&path, &table)?;
    println!("wrote {} ({} ordered pairs)", path.display(), table.len());
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path.display().to_string(), e))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["lang_a", "lang_b"] {
        return Err(Error::parse(
            format!("{}:1", path.display()),
            "expected header `lang_a,lang_b`",
        ));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, r)| {
            let r = r.map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 2), e))?;
            Ok((r[0].to_string(), r[1].to_string()))
        })
        .collect()
}

fn ensemble_cmd(a: EnsembleArgs) -> Result<()> {
    let tables = a
        .table
        .iter()
        .map(|t| load_table_arg(t))
        .collect::<Result<Vec<_>>>()?;
    let pairs = match (&a.pairs, &a.target) {
        (Some(p), None) => read_pairs(p)?,
        (None, Some(target)) => {
            let mut sources: Vec<String> = tables[0]
                .iter()
                .filter(|(_, b, _)| b == target)
                .map(|(s, _, _)| s.to_string())
                .collect();
            sources.sort();
            sources.dedup();
            sources.into_iter().map(|s| (s, target.clone())).collect()
        }
        _ => {
            return Err(Error::Validation(
                "give exactly one of --pairs or --target".into(),
            ))
        }
    };
    let refs: Vec<&DistanceTable> = tables.iter().collect();
    let out = ensemble(&refs, &pairs)?;
    ensure_dir(&a.out)?;
    let path = a.out.join("ensemble.csv");
    save_distance_table(&path, &out)?;
    println!("wrote {} ({} pairs)", path.display(), pairs.len());
    Ok(())
}

fn rank(a: RankArgs) -> Result<()> {
    let table = load_table_arg(&a.table)?;
    let candidates: Vec<String> = if a.candidates.is_empty() {
        table
            .iter()
            .filter(|(_, b, _)| *b == a.target)
            .map(|(s, _, _)| s.to_string())
            .collect()
    } else {
        a.candidates.clone()
    };
    if candidates.is_empty() {
        return Err(Error::lookup("target language in table", &a.target));
    }
    for (lang, d) in rank_sources(&table, &a.target, &candidates)? {
        println!("{lang},{d}");
    }
    Ok(())
}

fn correlate_cmd(a: CorrelateArgs) -> Result<()> {
    let task = match a.task {
        TaskArg::Cer => Task::Cer,
        TaskArg::Mcd => Task::Mcd,
        TaskArg::Mos => Task::Mos,
    };
    let anchor = match a.anchor {
        AnchorArg::Source => Anchor::Source,
        AnchorArg::Target => Anchor::Target,
    };
    let scores = load_score_table(&a.scores, task)?;
    let langs: Vec<String> = if a.lang.is_empty() {
        let mut v: Vec<String> = scores
            .iter()
            .map(|(s, t, _)| match anchor {
                Anchor::Source => s.to_string(),
                Anchor::Target => t.to_string(),
            })
            .collect();
        v.sort();
        v.dedup();
        v
    } else {
        a.lang.clone()
    };
    let mut reports = Vec::new();
    for t in &a.table {
        let table = load_table_arg(t)?;
        for lang in &langs {
            reports.push(correlate(&table, &scores, anchor, lang)?);
        }
    }
    print!("{}", report_csv(&reports));
    if let Some(out) = &a.out {
        emit_report(out, &reports, &[])?;
    }
    Ok(())
}

fn family_eval(a: FamilyEvalArgs) -> Result<()> {
    let params = load_checkpoint(&a.checkpoint)?;
    let manifest = load_manifest(&a.manifest)?.into_zero_shot()?;
    let registry = load_registry(&a.registry)?;
    let features = load_features(&manifest, &a.manifest, a.features.as_deref())?;
    let train_langs = params.config.languages.clone();
    let result =
        eval_family_classification(&params, &manifest, &registry, &train_langs, &features)?;
    println!("split,n,accuracy");
    for (split, acc) in &result.accuracy {
        let n = result
            .predictions
            .iter()
            .filter(|p| p.split == *split)
            .count();
        println!("{split},{n},{acc}");
    }
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        let json = serde_json::to_string_pretty(&result).expect("result serializes");
        write(&out.join("family_eval.json"), &(json + "\n"))?;
    }
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let store = load_store(&a.store)?;
    let result = kmeans(&store, a.k, a.seed, a.max_iters)?;
    let mut csv = String::from("lang,cluster\n");
    for (lang, c) in &result.assignments {
        writeln!(csv, "{lang},{c}").unwrap();
    }
    ensure_dir(&a.out)?;
    write(&a.out.join("clusters.csv"), &csv)?;
    print!("{csv}");
    println!("# inertia {}", result.inertia);
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec = SyntheticSpec::four_tone(a.seed);
    spec.utterances_per_language = a.per_language;
    spec.val_per_language = a.per_language / 5;
    spec.duration_s = a.duration;
    let corpus = generate(&spec)?;
    ensure_dir(&a.out)?;
    let manifest = corpus.write(&a.out)?;
    println!("wrote {}", manifest.display());
    Ok(())
}
