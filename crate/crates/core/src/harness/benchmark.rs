use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::StftParams;
use crate::error::{Error, Result};
use crate::losses::{
    clip_input, default_backbone, inference_speed, train_backbone, ClassifierSchedule, InferenceSpeed, LabeledInput,
    PerceptualBackbone,
};
use crate::models::{inpaint, Domain, InpaintRequest, ModelConfig, Network};
use crate::seed;

use super::corpus::{generate_corpus, Corpus, CorpusClip, CorpusSpec, Split};
use super::evaluate::{config_hash, evaluate, weights_hash, Backbones, BenchmarkReport, EvalConfig, Pipeline, RunInfo};
use super::training::{train, LossPoint, TrainConfig, TrainOutcome};

/// Section names used in benchmark reports.
pub const MASKED_INPUT: &str = "masked_input";
pub const GRIFFIN_LIM_GT: &str = "griffin_lim_gt";

/// Classifier examples for every clip of `split`.
pub fn labeled_inputs(corpus: &Corpus, split: Split, domain: Domain, stft: &StftParams) -> Result<Vec<LabeledInput>> {
    corpus
        .split(split)
        .into_iter()
        .map(|c| {
            Ok(LabeledInput {
                input: clip_input(domain, stft, &c.clip)?,
                label: c.class,
            })
        })
        .collect()
}

/// Train a backbone on the train and validation splits and score it on
/// the test split.
pub fn corpus_backbone(
    corpus: &Corpus,
    domain: Domain,
    schedule: &ClassifierSchedule,
    stft: &StftParams,
) -> Result<(PerceptualBackbone, f64)> {
    let mut train_set = labeled_inputs(corpus, Split::Train, domain, stft)?;
    train_set.extend(labeled_inputs(corpus, Split::Val, domain, stft)?);
    let heldout = labeled_inputs(corpus, Split::Test, domain, stft)?;
    let (mut bb, acc) = train_backbone(default_backbone(domain, corpus.spec.class_count), &train_set, &heldout, schedule)?;
    bb.meta.stft = *stft;
    Ok((bb, acc))
}

/// `final.ckpt`, `best.ckpt`, `config.json` and `loss_curve.csv` for a trained model.
pub fn save_trained(dir: &Path, net: &Network, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    net.config.save(&dir.join("config.json"))?;
    net.save(&dir.join("final.ckpt"))?;
    if let Some(best) = &outcome.best_params {
        Network::from_parts(net.config.clone(), best.clone())?.save(&dir.join("best.ckpt"))?;
    }
    write_curve(&dir.join("loss_curve.csv"), &outcome.curve)
}

pub fn write_curve(path: &Path, curve: &[LossPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub corpus: CorpusSpec,
    pub waveform: TrainConfig,
    pub spectrogram: TrainConfig,
    pub backbone: ClassifierSchedule,
    pub eval: EvalConfig,
    pub model_seed: u64,
}

/// The default schedule is sized for a single CPU core: well short of the
/// full training defaults, but long enough for both models to beat the
/// masked input on the toy corpus.
impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::toy_sc(2024),
            waveform: TrainConfig { steps: 1500, batch: 4, val_every: 250, ..TrainConfig::default() },
            spectrogram: TrainConfig { steps: 500, batch: 2, val_every: 250, ..TrainConfig::default() },
            backbone: ClassifierSchedule::default(),
            eval: EvalConfig::default(),
            model_seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub report: BenchmarkReport,
    pub backbone_accuracy: [(Domain, f64); 2],
    pub models: Vec<(Network, TrainOutcome)>,
    pub speed: Vec<(Domain, InferenceSpeed)>,
}

fn clips_of(list: &[&CorpusClip]) -> Vec<crate::dsp::AudioClip> {
    list.iter().map(|c| c.clip.clone()).collect()
}

/// Generate the corpus, train both backbones and both inpainting models,
/// then evaluate them next to the two reference rows. When `out` is given
/// every artifact is written below it; timing goes to `speed.json` only.
pub fn run_benchmark(config: &BenchmarkConfig, out: Option<&Path>, jobs: usize) -> Result<BenchmarkOutcome> {
    let corpus = generate_corpus(&config.corpus)?;
    let stft = config.eval.spectrogram.stft;
    let (wave_bb, wave_acc) = corpus_backbone(&corpus, Domain::Waveform, &config.backbone, &stft)?;
    let (spec_bb, spec_acc) = corpus_backbone(&corpus, Domain::Spectrogram, &config.backbone, &stft)?;
    let backbones = Backbones {
        waveform: &wave_bb,
        spectrogram: &spec_bb,
    };
    let train_clips = clips_of(&corpus.split(Split::Train));
    let val_clips = clips_of(&corpus.split(Split::Val));
    let test = corpus.split(Split::Test);

    let mut models = Vec::new();
    for (domain, tc) in [(Domain::Waveform, &config.waveform), (Domain::Spectrogram, &config.spectrogram)] {
        let init_seed = seed::derive_seed(config.model_seed, domain.name());
        let mut net = Network::init(ModelConfig::default_for(domain), init_seed)?;
        let outcome = train(&mut net, &train_clips, &val_clips, tc, None)?;
        models.push((net, outcome));
    }

    let mut run = RunInfo {
        corpus: config.corpus.name.clone(),
        corpus_spec_hash: config.corpus.hash(),
        eval: Some(config.eval.clone()),
        ..Default::default()
    };
    run.seeds.insert("corpus".into(), config.corpus.seed);
    run.seeds.insert("model".into(), config.model_seed);
    run.seeds.insert("backbone".into(), config.backbone.seed);
    run.seeds.insert("eval".into(), config.eval.seed);
    let mut sections = vec![
        evaluate(MASKED_INPUT, Pipeline::MaskedInput, &test, &config.eval, backbones, jobs)?,
        evaluate(GRIFFIN_LIM_GT, Pipeline::GriffinLimGt, &test, &config.eval, backbones, jobs)?,
    ];
    for (domain, bb) in [(Domain::Waveform, &wave_bb), (Domain::Spectrogram, &spec_bb)] {
        run.weight_hashes.insert(format!("backbone_{}", domain.name()), weights_hash_params(bb));
    }
    for (net, _) in &models {
        let name = net.domain().name();
        run.model_config_hashes.insert(name.into(), config_hash(&net.config)?);
        run.weight_hashes.insert(name.into(), weights_hash(net));
        sections.push(evaluate(name, Pipeline::Model(net), &test, &config.eval, backbones, jobs)?);
    }
    let report = BenchmarkReport { run, sections };

    let mut speed = Vec::new();
    for (net, _) in &models {
        let requests = test
            .iter()
            .map(|c| Ok(InpaintRequest::new(c.clip.clone(), config.eval.mask.resolve(c.clip.len(), c.clip.sample_rate())?)?))
            .collect::<Result<Vec<_>>>()?;
        let s = inference_speed(&requests, |r| inpaint(net, r, &config.eval.spectrogram).map(|_| ()))?;
        speed.push((net.domain(), s));
    }

    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg_path = dir.join("config.json");
        fs::write(&cfg_path, serde_json::to_string_pretty(config)? + "\n").map_err(|e| Error::io(&cfg_path, e))?;
        corpus.write(&dir.join("corpus"))?;
        wave_bb.save(&dir.join("backbones").join("waveform"))?;
        spec_bb.save(&dir.join("backbones").join("spectrogram"))?;
        for (net, outcome) in &models {
            save_trained(&dir.join("models").join(net.domain().name()), net, outcome)?;
        }
        report.write(&dir.join("report"))?;
        write_speed(&dir.join("speed.json"), &speed)?;
    }
    Ok(BenchmarkOutcome {
        report,
        backbone_accuracy: [(Domain::Waveform, wave_acc), (Domain::Spectrogram, spec_acc)],
        models,
        speed,
    })
}

fn weights_hash_params(bb: &PerceptualBackbone) -> String {
    super::corpus::sha256_hex(&crate::autograd::checkpoint::encode_params(&bb.params))
}

pub fn write_speed(path: &Path, speed: &[(Domain, InferenceSpeed)]) -> Result<()> {
    let map: std::collections::BTreeMap<&str, &InferenceSpeed> = speed.iter().map(|(d, s)| (d.name(), s)).collect();
    fs::write(path, serde_json::to_string_pretty(&map)? + "\n").map_err(|e| Error::io(path, e))
}
