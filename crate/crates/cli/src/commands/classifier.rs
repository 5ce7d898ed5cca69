use std::collections::HashMap;
use std::path::Path;

use anyhow::{Context, Result};
use coherence_core::classify::{
    encode_example, evaluate_classifier, load_classifier, save_classifier, split_sizes, train_classifier,
    ClassifierConfig, EncodedExample, ImageEncoderSpec, LabelMode, LinearSvm, RawExample, SvmConfig, Target,
    TextEncoder, TextEncoderSpec,
};
use coherence_core::corpus::FeatureFile;
use coherence_core::labelmap::{single_label_dataset, train_test_split};
use coherence_core::ImageCaptionPair;
use serde::{Deserialize, Serialize};

use crate::args::{EvalClassifierArgs, ImageArg, ModeArg, PartArg, PresetArg, TextArg, TrainClassifierArgs};
use crate::config::{layered, preset_in_file, usage};
use crate::data;
use crate::manifest::{self, Manifest};

/// Image vector width of the fixture encoder, matching the published
/// image embedding size.
const FIXTURE_IMAGE_DIM: usize = 64;

/// Schema of the `train-classifier` config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierRun {
    pub preset: String,
    pub classifier: ClassifierConfig,
    /// Seed of the label mapping and the train/test split.
    pub label_seed: u64,
    /// Share of the training rows held out for checkpoint selection.
    pub dev_fraction: f64,
    pub svm: Option<SvmConfig>,
}

impl ClassifierRun {
    fn preset(name: &str) -> Result<Self> {
        let classifier = match name {
            "paper" => ClassifierConfig::paper(LabelMode::SingleLabel),
            "desk" => ClassifierConfig::desk(LabelMode::SingleLabel),
            other => return Err(usage(format!("unknown preset {other:?}; expected paper or desk"))),
        };
        Ok(ClassifierRun {
            preset: name.to_string(),
            classifier,
            label_seed: 0,
            dev_fraction: 0.1,
            svm: None,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitRow {
    pair_id: String,
    target: Target,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitFile {
    mode: LabelMode,
    label_seed: u64,
    train: Vec<SplitRow>,
    dev: Vec<SplitRow>,
    test: Vec<SplitRow>,
}

fn feature_dims(features: Option<&FeatureFile>) -> Option<(usize, usize)> {
    let f = features?;
    let e = f.entries().next()?;
    Some((e.text_vec.len(), e.image_vec.len()))
}

fn resolve(args: &TrainClassifierArgs, features: Option<&FeatureFile>) -> Result<ClassifierRun> {
    let preset = match (args.preset, preset_in_file(args.config.as_deref())?) {
        (Some(p), _) => p.name().to_string(),
        (None, Some(p)) => p,
        (None, None) => PresetArg::Desk.name().to_string(),
    };
    let mut run = layered(&ClassifierRun::preset(&preset)?, args.config.as_deref())?;
    run.preset = preset;
    let c = &mut run.classifier;
    if let Some(m) = args.mode {
        c.mode = match m {
            ModeArg::Single => LabelMode::SingleLabel,
            ModeArg::Multi => LabelMode::MultiLabel,
        };
    }
    let dims = feature_dims(features);
    if let Some(t) = args.text {
        c.text = match (t, &c.text) {
            (TextArg::Ngram, s @ TextEncoderSpec::NgramBow { .. }) => s.clone(),
            (TextArg::Ngram, _) => TextEncoderSpec::ngram_default(),
            (TextArg::Recurrent, s @ TextEncoderSpec::RecurrentEmbedding { .. }) => s.clone(),
            (TextArg::Recurrent, _) => TextEncoderSpec::recurrent_default(),
            (TextArg::Precomputed, _) => TextEncoderSpec::Precomputed {
                dim: dims.map(|d| d.0).ok_or_else(|| usage("--text precomputed needs --features"))?,
            },
        };
    }
    if let Some(i) = args.image {
        c.image = match i {
            ImageArg::None => ImageEncoderSpec::None,
            ImageArg::Fixture => ImageEncoderSpec::FixtureHash { dim: FIXTURE_IMAGE_DIM },
            ImageArg::Precomputed => ImageEncoderSpec::Precomputed {
                dim: dims.map(|d| d.1).ok_or_else(|| usage("--image precomputed needs --features"))?,
            },
        };
    }
    if let Some(s) = args.seed {
        c.seed = s;
        run.label_seed = s;
    }
    if let Some(e) = args.epochs {
        c.epochs = e;
    }
    if let Some(lr) = args.lr {
        c.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        c.batch_size = b;
    }
    if args.svm && run.svm.is_none() {
        run.svm = Some(SvmConfig::new(c.mode));
    }
    if let Some(svm) = &mut run.svm {
        svm.mode = c.mode;
        svm.seed = c.seed;
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    if !(0.0..1.0).contains(&run.dev_fraction) {
        return Err(usage("config: field `dev_fraction`: must be in [0, 1)"));
    }
    Ok(run)
}

/// Encodes `rows`, reading fixture images from the cache when needed.
fn encode_rows(
    rows: &[SplitRow],
    pairs: &HashMap<&str, &ImageCaptionPair>,
    text: &TextEncoder,
    image: &ImageEncoderSpec,
    features: Option<&FeatureFile>,
    cache_dir: &Path,
) -> Result<Vec<EncodedExample>> {
    rows.iter()
        .map(|row| {
            let pair = pairs
                .get(row.pair_id.as_str())
                .with_context(|| format!("pair {} is not in the caption file", row.pair_id))?;
            let bytes = match image {
                ImageEncoderSpec::FixtureHash { .. } => Some(data::fixture_image(cache_dir, &pair.image_ref)?),
                _ => None,
            };
            Ok(encode_example(
                text,
                image,
                features,
                RawExample {
                    pair_id: &pair.pair_id,
                    caption: &pair.caption,
                    image_bytes: bytes.as_deref(),
                    target: row.target,
                },
            )?)
        })
        .collect()
}

fn load_features(path: Option<&Path>) -> Result<Option<FeatureFile>> {
    path.map(|p| FeatureFile::load(p).with_context(|| format!("loading {}", p.display())))
        .transpose()
}

pub fn train(args: &TrainClassifierArgs, cache_dir: &Path) -> Result<()> {
    let features = load_features(args.features.as_deref())?;
    let run = resolve(args, features.as_ref())?;
    let config = &run.classifier;

    let corpus = data::ground_truth(&args.pairs)?;
    let store = data::restrict(&data::annotations(&args.annotations)?, &corpus)?;
    let rows: Vec<SplitRow> = match config.mode {
        LabelMode::SingleLabel => single_label_dataset(&store, run.label_seed)
            .into_iter()
            .map(|r| SplitRow {
                pair_id: r.pair_id,
                target: Target::Single(r.label),
            })
            .collect(),
        LabelMode::MultiLabel => store
            .pair_ids()
            .into_iter()
            .filter_map(|id| {
                let target = Target::multi_from_set(&store.union_labels(&id)?).ok()?;
                Some(SplitRow { pair_id: id, target })
            })
            .collect(),
    };
    if rows.is_empty() {
        anyhow::bail!("no annotated pair carries a primary relation");
    }
    let (train_size, _) = split_sizes(rows.len());
    let (train_all, test) = train_test_split(&rows, train_size, run.label_seed);
    let dev_size = (train_all.len() as f64 * run.dev_fraction).round() as usize;
    let (train_rows, dev_rows) = train_all.split_at(train_all.len() - dev_size);
    eprintln!(
        "{} rows: {} train, {} dev, {} test",
        rows.len(),
        train_rows.len(),
        dev_rows.len(),
        test.len()
    );

    let index: HashMap<&str, &ImageCaptionPair> = corpus.pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let train_captions: Vec<&str> = train_rows
        .iter()
        .map(|r| index.get(r.pair_id.as_str()).map(|p| p.caption.as_str()).unwrap_or_default())
        .collect();
    let text = TextEncoder::fit(&config.text, train_captions)?;
    let enc = |rows: &[SplitRow]| encode_rows(rows, &index, &text, &config.image, features.as_ref(), cache_dir);
    let (train_set, dev_set, test_set) = (enc(train_rows)?, enc(dev_rows)?, enc(&test)?);

    let (model, log) = train_classifier(config, text.clone(), &train_set, &dev_set)?;
    eprintln!(
        "best epoch {} (dev weighted F1 {:.4})",
        log.best_epoch, log.best_dev_weighted_f1
    );
    let out = &args.out;
    let model_dir = out.join("model");
    save_classifier(&model, &model_dir)?;
    data::write_json(&out.join("training_log.json"), &log)?;
    data::write_json(
        &out.join("split.json"),
        &SplitFile {
            mode: config.mode,
            label_seed: run.label_seed,
            train: train_rows.to_vec(),
            dev: dev_rows.to_vec(),
            test: test.clone(),
        },
    )?;
    let mut outputs = vec![model_dir, out.join("training_log.json"), out.join("split.json")];
    if !test_set.is_empty() {
        let eval = evaluate_classifier(&model, &test_set)?;
        eprintln!("test weighted F1 {:.4}", eval.f1.weighted);
        data::write_json(&out.join("evaluation.json"), &eval)?;
        outputs.push(out.join("evaluation.json"));
    }
    if let Some(svm_config) = run.svm {
        let svm = LinearSvm::train(svm_config, &train_set)?;
        let report = svm.evaluate(if test_set.is_empty() { &train_set } else { &test_set })?;
        eprintln!("svm test weighted F1 {:.4}", report.weighted);
        data::write_json(&out.join("svm_evaluation.json"), &report)?;
        outputs.push(out.join("svm_evaluation.json"));
    }

    let mut m = Manifest::new("train-classifier", &run)?;
    m.input(&args.annotations)?.input(&args.pairs)?.inputs(&args.features)?;
    m.inputs(&args.config)?;
    for p in &outputs {
        m.output(p);
    }
    m.write(&manifest::for_dir(out))
}

#[derive(Debug, Serialize)]
struct EvalConfig<'a> {
    model: &'a Path,
    split: &'a Path,
    part: &'static str,
    pairs: &'a Path,
    features: Option<&'a Path>,
}

pub fn eval(args: &EvalClassifierArgs, cache_dir: &Path) -> Result<()> {
    let model = load_classifier(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let split: SplitFile = data::read_json(&args.split)?;
    if split.mode != model.config.mode {
        return Err(usage("split and model disagree on the label mode"));
    }
    let (part, rows) = match args.part {
        PartArg::Train => ("train", &split.train),
        PartArg::Dev => ("dev", &split.dev),
        PartArg::Test => ("test", &split.test),
    };
    let features = load_features(args.features.as_deref())?;
    let corpus = data::ground_truth(&args.pairs)?;
    let index: HashMap<&str, &ImageCaptionPair> = corpus.pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let set = encode_rows(rows, &index, &model.text, &model.config.image, features.as_ref(), cache_dir)?;
    let eval = evaluate_classifier(&model, &set)?;
    eprintln!("{part} weighted F1 {:.4} over {} pairs", eval.f1.weighted, set.len());
    let out = args.out.join("evaluation.json");
    data::write_json(&out, &eval)?;

    let config = EvalConfig {
        model: &args.model,
        split: &args.split,
        part,
        pairs: &args.pairs,
        features: args.features.as_deref(),
    };
    let mut m = Manifest::new("eval-classifier", &config)?;
    m.input(&args.model.join("manifest.json"))?
        .input(&args.model.join("weights.bin"))?
        .input(&args.split)?
        .input(&args.pairs)?
        .inputs(&args.features)?;
    m.output(&out);
    m.write(&manifest::for_dir(&args.out))
}
