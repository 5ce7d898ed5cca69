use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use coherence_core::caption::{
    build_vocab, fixture_caption_input, generate_caption, load_captioner, save_captioner, train_captioner,
    CaptionExample, CaptionerConfig, ConditionLabel, DecodeStrategy, Generation, ValidationItem,
};
use coherence_core::classify::{encode_example, load_classifier, ImageEncoderSpec, RawExample, Target};
use coherence_core::labelmap::{single_label_dataset, train_test_split, SingleLabel};
use coherence_core::ImageCaptionPair;
use serde::{Deserialize, Serialize};

use crate::args::{GenerateArgs, LabelSourceArg, PresetArg, TrainCaptionerArgs};
use crate::config::{layered, preset_in_file, usage};
use crate::data;
use crate::manifest::{self, Manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Clue,
    Predicted,
    None,
}

/// Schema of the `train-captioner` config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionerRun {
    pub preset: String,
    pub captioner: CaptionerConfig,
    pub labels: LabelSource,
    /// Seed of the label mapping and the validation split.
    pub label_seed: u64,
    pub steps: usize,
    /// Validation CIDEr is computed every this many steps.
    pub eval_every: usize,
    pub validation_fraction: f64,
}

impl CaptionerRun {
    fn preset(name: &str) -> Result<Self> {
        let captioner = CaptionerConfig::preset(name).map_err(|e| usage(e.to_string()))?;
        Ok(CaptionerRun {
            preset: name.to_string(),
            captioner,
            labels: LabelSource::Clue,
            label_seed: 0,
            steps: 500,
            eval_every: 100,
            validation_fraction: 0.1,
        })
    }
}

fn resolve(args: &TrainCaptionerArgs) -> Result<CaptionerRun> {
    let preset = match (args.preset, preset_in_file(args.config.as_deref())?) {
        (Some(p), _) => p.name().to_string(),
        (None, Some(p)) => p,
        (None, None) => PresetArg::Desk.name().to_string(),
    };
    let mut run = layered(&CaptionerRun::preset(&preset)?, args.config.as_deref())?;
    run.preset = preset;
    if let Some(l) = args.labels {
        run.labels = match l {
            LabelSourceArg::Clue => LabelSource::Clue,
            LabelSourceArg::Predicted => LabelSource::Predicted,
            LabelSourceArg::None => LabelSource::None,
        };
    }
    if let Some(s) = args.seed {
        run.captioner.seed = s;
        run.label_seed = s;
    }
    if let Some(s) = args.steps {
        run.steps = s;
    }
    if let Some(e) = args.eval_every {
        run.eval_every = e;
    }
    run.captioner.validate().map_err(|e| usage(e.to_string()))?;
    if !(0.0..1.0).contains(&run.validation_fraction) {
        return Err(usage("config: field `validation_fraction`: must be in [0, 1)"));
    }
    match run.labels {
        LabelSource::Clue if args.annotations.is_none() => Err(usage("--labels clue needs --annotations")),
        LabelSource::Predicted if args.classifier.is_none() => Err(usage("--labels predicted needs --classifier")),
        _ => Ok(run),
    }
}

/// Condition label for each usable pair, in caption-file order.
fn labelled_pairs(
    run: &CaptionerRun,
    args: &TrainCaptionerArgs,
    pairs: &[ImageCaptionPair],
    cache_dir: &Path,
) -> Result<Vec<(usize, ConditionLabel)>> {
    match run.labels {
        LabelSource::None => Ok((0..pairs.len()).map(|i| (i, ConditionLabel::None)).collect()),
        LabelSource::Clue => {
            let path = args.annotations.as_deref().expect("checked");
            let corpus = coherence_core::corpus::CaptionCorpus {
                split: coherence_core::corpus::Split::Eval,
                pairs: pairs.to_vec(),
            };
            let store = data::restrict(&data::annotations(path)?, &corpus)?;
            let mapped: HashMap<String, SingleLabel> = single_label_dataset(&store, run.label_seed)
                .into_iter()
                .map(|r| (r.pair_id, r.label))
                .collect();
            Ok(pairs
                .iter()
                .enumerate()
                .filter_map(|(i, p)| mapped.get(&p.pair_id).map(|l| (i, ConditionLabel::Relation(*l))))
                .collect())
        }
        LabelSource::Predicted => {
            let dir = args.classifier.as_deref().expect("checked");
            let model = load_classifier(dir).with_context(|| format!("loading {}", dir.display()))?;
            if !matches!(model.config.image, ImageEncoderSpec::None | ImageEncoderSpec::FixtureHash { .. }) {
                return Err(usage("--labels predicted supports classifiers with no or fixture image encoders"));
            }
            let placeholder = Target::Single(SingleLabel::from_index(0).expect("class 0"));
            let mut examples = Vec::with_capacity(pairs.len());
            for p in pairs {
                let bytes = match model.config.image {
                    ImageEncoderSpec::FixtureHash { .. } => Some(data::fixture_image(cache_dir, &p.image_ref)?),
                    _ => None,
                };
                examples.push(encode_example(
                    &model.text,
                    &model.config.image,
                    None,
                    RawExample {
                        pair_id: &p.pair_id,
                        caption: &p.caption,
                        image_bytes: bytes.as_deref(),
                        target: placeholder,
                    },
                )?);
            }
            let batch: Vec<_> = examples.iter().collect();
            let predicted = model.predict_single(&batch)?;
            Ok(predicted
                .into_iter()
                .enumerate()
                .map(|(i, c)| (i, ConditionLabel::Relation(SingleLabel::from_index(c).expect("class index"))))
                .collect())
        }
    }
}

pub fn train(args: &TrainCaptionerArgs, cache_dir: &Path) -> Result<()> {
    let run = resolve(args)?;
    let config = &run.captioner;
    let pairs = data::ground_truth(&args.pairs)?.pairs;
    let rows = labelled_pairs(&run, args, &pairs, cache_dir)?;
    if rows.is_empty() {
        anyhow::bail!("no pair has a condition label");
    }
    let val_size = (rows.len() as f64 * run.validation_fraction).round() as usize;
    let (train_rows, val_rows) = train_test_split(&rows, rows.len() - val_size, run.label_seed);

    let captions: Vec<&str> = train_rows.iter().map(|(i, _)| pairs[*i].caption.as_str()).collect();
    let vocab = build_vocab(&captions, config.merges)?;
    let input = |i: usize, label: ConditionLabel| -> Result<_> {
        let bytes = data::fixture_image(cache_dir, &pairs[i].image_ref)?;
        Ok(fixture_caption_input(&bytes, label, config))
    };
    let train_set: Vec<CaptionExample> = train_rows
        .iter()
        .map(|&(i, l)| {
            Ok(CaptionExample {
                input: input(i, l)?,
                target_ids: vocab.encode_target(&pairs[i].caption),
            })
        })
        .collect::<Result<_>>()?;
    let validation: Vec<ValidationItem> = val_rows
        .iter()
        .map(|&(i, l)| {
            Ok(ValidationItem {
                input: input(i, l)?,
                references: vec![pairs[i].caption.clone()],
            })
        })
        .collect::<Result<_>>()?;
    eprintln!(
        "{} training pairs, {} validation pairs, vocabulary {}",
        train_set.len(),
        validation.len(),
        vocab.len()
    );

    let (model, log) = train_captioner(config, vocab, &train_set, &validation, run.steps, run.eval_every)?;
    eprintln!(
        "final loss {:.4}; selected step {}",
        log.losses.last().copied().unwrap_or(f64::NAN),
        log.selected_step
    );
    let model_dir = args.out.join("model");
    save_captioner(&model, log.selected_step, &model_dir)?;
    let log_path = args.out.join("training_log.json");
    data::write_json(&log_path, &log)?;

    let mut m = Manifest::new("train-captioner", &run)?;
    m.input(&args.pairs)?.inputs(&args.annotations)?.inputs(&args.config)?;
    if let Some(dir) = &args.classifier {
        m.input(&dir.join("manifest.json"))?.input(&dir.join("weights.bin"))?;
    }
    m.output(&model_dir).output(&log_path);
    m.write(&manifest::for_dir(&args.out))
}

#[derive(Debug, Serialize)]
struct GenerateConfig<'a> {
    model: &'a Path,
    label: String,
    image: Option<&'a Path>,
    pairs: Option<&'a Path>,
    strategy: DecodeStrategy,
    cache_dir: &'a Path,
}

#[derive(Debug, Serialize)]
struct SingleOutput<'a> {
    label: String,
    checkpoint_step: u64,
    generation: &'a Generation,
}

#[derive(Debug, Serialize)]
struct RequestedRow<'a> {
    pair_id: String,
    label: String,
    source_pair: &'a str,
}

pub fn generate(args: &GenerateArgs, cache_dir: &Path) -> Result<()> {
    let label: ConditionLabel = args.label.parse().map_err(|e: coherence_core::Error| usage(e.to_string()))?;
    let strategy = match args.beam {
        None => DecodeStrategy::Greedy,
        Some(k) => DecodeStrategy::Beam { k, alpha: args.alpha },
    };
    let (model, step) = load_captioner(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let config = GenerateConfig {
        model: &args.model,
        label: label.to_string(),
        image: args.image.as_deref(),
        pairs: args.pairs.as_deref(),
        strategy,
        cache_dir,
    };
    let mut m = Manifest::new("generate", &config)?;
    m.input(&args.model.join("manifest.json"))?.input(&args.model.join("weights.bin"))?;

    let manifest_path = if let Some(image) = &args.image {
        let bytes = fs::read(image).with_context(|| format!("reading {}", image.display()))?;
        let g = generate_caption(&model, &fixture_caption_input(&bytes, label, &model.config), strategy)?;
        let out = SingleOutput {
            label: label.to_string(),
            checkpoint_step: step,
            generation: &g,
        };
        m.input(image)?;
        match &args.out {
            Some(path) => {
                data::write_json(path, &out)?;
                m.output(path);
                manifest::beside(path)
            }
            None => {
                println!("{}", serde_json::to_string_pretty(&out)?);
                cache_dir.join("runs").join("generate.manifest.json")
            }
        }
    } else {
        let pairs_path = args.pairs.as_deref().expect("clap requires image or pairs");
        let out = args.out.as_deref().ok_or_else(|| usage("--pairs needs --out"))?;
        let pairs = data::ground_truth(pairs_path)?.pairs;
        let mut tsv = String::new();
        let mut requested = Vec::with_capacity(pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            let bytes = data::fixture_image(cache_dir, &p.image_ref)?;
            let g = generate_caption(&model, &fixture_caption_input(&bytes, label, &model.config), strategy)?;
            let text = g.text.replace(['\t', '\n'], " ");
            tsv.push_str(&format!("{text}\t{}\n", p.image_ref));
            requested.push(RequestedRow {
                pair_id: format!("model:{i}"),
                label: label.to_string(),
                source_pair: &p.pair_id,
            });
        }
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::File::create(out)
            .and_then(|mut f| f.write_all(tsv.as_bytes()))
            .with_context(|| format!("writing {}", out.display()))?;
        let req_path = out.with_extension("requested.jsonl");
        data::write_jsonl(&req_path, &requested)?;
        eprintln!("generated {} captions -> {}", pairs.len(), out.display());
        m.input(pairs_path)?.output(out).output(&req_path);
        manifest::beside(out)
    };
    m.write(&manifest_path)
}
