use std::fs;
use std::path::Path;

use inpaint_core::dsp::wav::{read_wav, write_wav};
use inpaint_core::harness::{
    self, ablate as run_ablation, corpus_backbone, evaluate as eval_section, run_benchmark, save_trained, thresholds,
    weights_hash, write_ablation_csv, AblationConfig, Backbones, BenchmarkConfig, BenchmarkReport, Corpus, CorpusSpec,
    EvalConfig, Pipeline, RunInfo, Split, TrainConfig, GRIFFIN_LIM_GT, MASKED_INPUT,
};
use inpaint_core::losses::{inference_speed, ClassifierSchedule, PerceptualBackbone, MIN_SPEED_CLIPS};
use inpaint_core::models::{inpaint as run_inpaint, Domain, InpaintRequest, ModelConfig, Network, SpectrogramOptions};
use inpaint_core::seed::derive_seed;
use serde::{Deserialize, Serialize};

use crate::overrides::resolve;
use crate::{CliError, ConfigArgs, PipelineArg, TrainTarget};

type CliResult<T = ()> = Result<T, CliError>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Resolve defaults < file < `--seed` < `--set`.
fn resolve_with_seed<T, F>(defaults: T, args: &ConfigArgs, reseed: F) -> CliResult<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
    F: Fn(&mut T, u64),
{
    let mut cfg = resolve(&defaults, args.config.as_deref(), &[])?;
    if let Some(root) = args.seed {
        reseed(&mut cfg, root);
    }
    resolve(&cfg, None, &args.set)
}

pub fn gen_corpus(preset: &str, out: &Path, args: &ConfigArgs) -> CliResult {
    let defaults = CorpusSpec::preset(preset, 0).map_err(|e| CliError::Usage(e.to_string()))?;
    let spec = resolve_with_seed(defaults, args, |s, root| s.seed = root)?;
    spec.validate()?;
    let corpus = harness::generate_corpus(&spec)?;
    let manifest = corpus.write(out)?;
    write_json(&out.join("resolved_config.json"), &spec)?;
    println!("{} clips of {} written to {} (spec hash {})", manifest.entries.len(), spec.name, out.display(), manifest.spec_hash);
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainRun {
    /// Architecture; the domain default when null.
    pub model: Option<ModelConfig>,
    pub model_seed: u64,
    pub train: TrainConfig,
    pub classifier: ClassifierSchedule,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            model: None,
            model_seed: 1,
            train: TrainConfig::default(),
            classifier: ClassifierSchedule::default(),
        }
    }
}

pub fn train(target: TrainTarget, corpus_dir: &Path, out: &Path, backbone: Option<&Path>, args: &ConfigArgs) -> CliResult {
    let run = resolve_with_seed(TrainRun::default(), args, |r, root| {
        r.model_seed = derive_seed(root, "model");
        r.train.seed = derive_seed(root, "train");
        r.classifier.seed = derive_seed(root, "backbone");
    })?;
    let corpus = Corpus::load(corpus_dir)?;
    fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    match target {
        TrainTarget::BackboneWaveform | TrainTarget::BackboneSpectrogram => {
            let domain = if target == TrainTarget::BackboneWaveform { Domain::Waveform } else { Domain::Spectrogram };
            let (bb, acc) = corpus_backbone(&corpus, domain, &run.classifier, &run.train.stft)?;
            bb.save(&out.join("backbone"))?;
            write_json(&out.join("resolved_config.json"), &run)?;
            println!("{} backbone: held-out accuracy {:.1}%", domain.name(), acc * 100.0);
        }
        TrainTarget::Waveform | TrainTarget::Spectrogram => {
            let domain = if target == TrainTarget::Waveform { Domain::Waveform } else { Domain::Spectrogram };
            let config = run.model.clone().unwrap_or_else(|| ModelConfig::default_for(domain));
            if config.domain != domain {
                return Err(CliError::Usage(format!("model config is {} but target is {}", config.domain.name(), domain.name())));
            }
            let bb = backbone.map(PerceptualBackbone::load).transpose()?;
            let clips = |s| corpus.split(s).into_iter().map(|c| c.clip.clone()).collect::<Vec<_>>();
            let mut net = Network::init(config, run.model_seed)?;
            let outcome = harness::train(&mut net, &clips(Split::Train), &clips(Split::Val), &run.train, bb.as_ref())?;
            save_trained(out, &net, &outcome)?;
            write_json(&out.join("resolved_config.json"), &run)?;
            let last = outcome.curve.last().map_or(f64::NAN, |p| p.total);
            println!("{} steps, final loss {last:.5}, best validation {:?}", outcome.steps_run, outcome.best_val);
        }
    }
    Ok(())
}

fn load_model(ckpt: &Path, config: Option<&Path>) -> CliResult<Network> {
    if !ckpt.is_file() {
        return Err(CliError::Data(format!("checkpoint {} not found", ckpt.display())));
    }
    let config_path = config.map(Path::to_path_buf).unwrap_or_else(|| ckpt.with_file_name("config.json"));
    let config = ModelConfig::load(&config_path)?;
    Ok(Network::load(config, ckpt)?)
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    corpus_dir: &Path,
    wave_ckpt: Option<&Path>,
    spec_ckpt: Option<&Path>,
    wave_backbone: &Path,
    spec_backbone: &Path,
    out: &Path,
    jobs: usize,
    args: &ConfigArgs,
) -> CliResult {
    let config = resolve_with_seed(EvalConfig::default(), args, |c, root| c.seed = derive_seed(root, "eval"))?;
    let corpus = Corpus::load(corpus_dir)?;
    let test = corpus.split(Split::Test);
    let w = PerceptualBackbone::load(wave_backbone)?;
    let s = PerceptualBackbone::load(spec_backbone)?;
    if w.domain() != Domain::Waveform || s.domain() != Domain::Spectrogram {
        return Err(CliError::Usage("backbone domains do not match their flags".into()));
    }
    let backbones = Backbones {
        waveform: &w,
        spectrogram: &s,
    };
    let mut models = Vec::new();
    for (ckpt, domain) in [(wave_ckpt, Domain::Waveform), (spec_ckpt, Domain::Spectrogram)] {
        if let Some(path) = ckpt {
            let net = load_model(path, None)?;
            if net.domain() != domain {
                return Err(CliError::Usage(format!("{} holds a {} model", path.display(), net.domain().name())));
            }
            models.push(net);
        }
    }
    let mut run = RunInfo {
        corpus: corpus.spec.name.clone(),
        corpus_spec_hash: corpus.spec.hash(),
        eval: Some(config.clone()),
        ..Default::default()
    };
    run.seeds.insert("corpus".into(), corpus.spec.seed);
    run.seeds.insert("eval".into(), config.seed);
    let mut sections = vec![
        eval_section(MASKED_INPUT, Pipeline::MaskedInput, &test, &config, backbones, jobs)?,
        eval_section(GRIFFIN_LIM_GT, Pipeline::GriffinLimGt, &test, &config, backbones, jobs)?,
    ];
    let mut speed = Vec::new();
    for net in &models {
        let name = net.domain().name();
        let before = weights_hash(net);
        sections.push(eval_section(name, Pipeline::Model(net), &test, &config, backbones, jobs)?);
        if weights_hash(net) != before {
            return Err(CliError::Numeric(format!("{name} weights changed during evaluation")));
        }
        run.weight_hashes.insert(name.into(), before);
        run.model_config_hashes.insert(name.into(), harness::config_hash(&net.config)?);
        let requests = test
            .iter()
            .map(|c| Ok(InpaintRequest::new(c.clip.clone(), config.mask.resolve(c.clip.len(), c.clip.sample_rate())?)?))
            .collect::<inpaint_core::Result<Vec<_>>>()?;
        if requests.len() >= MIN_SPEED_CLIPS {
            speed.push((net.domain(), inference_speed(&requests, |r| run_inpaint(net, r, &config.spectrogram).map(|_| ()))?));
        }
    }
    let report = BenchmarkReport { run, sections };
    report.write(out)?;
    harness::write_speed(&out.join("speed.json"), &speed)?;
    write_json(&out.join("resolved_config.json"), &config)?;
    print_table(&report);
    Ok(())
}

fn print_table(report: &BenchmarkReport) {
    println!("{:<16} {:>10} {:>8} {:>11} {:>11} {:>9}", "pipeline", "masked_l1", "ssim", "wave_pdist", "spec_pdist", "spec_ml1");
    for s in &report.sections {
        let a = &s.aggregate;
        println!(
            "{:<16} {:>10.5} {:>8.4} {:>11.5} {:>11.5} {:>9.5}",
            s.name, a.masked_l1, a.ssim, a.wave_perc_dist, a.spec_perc_dist, a.spec_masked_l1
        );
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblateRun {
    pub ablation: AblationConfig,
    /// Used only when no backbone is supplied.
    pub classifier: ClassifierSchedule,
}

impl Default for AblateRun {
    fn default() -> Self {
        Self {
            ablation: AblationConfig::default(),
            classifier: ClassifierSchedule::default(),
        }
    }
}

pub fn ablate(out: &Path, backbone: Option<&Path>, jobs: usize, args: &ConfigArgs) -> CliResult {
    let run = resolve_with_seed(AblateRun::default(), args, |r, root| {
        r.ablation.seed = derive_seed(root, "ablation");
        r.ablation.corpus.seed = derive_seed(root, "corpus");
        r.classifier.seed = derive_seed(root, "backbone");
    })?;
    run.ablation.validate()?;
    let bb = match backbone {
        Some(stem) => PerceptualBackbone::load(stem)?,
        None => {
            let corpus = harness::generate_corpus(&run.ablation.corpus)?;
            let (bb, acc) = corpus_backbone(&corpus, Domain::Spectrogram, &run.classifier, &run.ablation.spectrogram.stft)?;
            println!("spectrogram backbone: held-out accuracy {:.1}%", acc * 100.0);
            bb.save(&out.join("backbone"))?;
            bb
        }
    };
    let rows = run_ablation(&run.ablation, &bb, jobs)?;
    write_ablation_csv(&out.join("ablation.csv"), &rows)?;
    write_json(&out.join("resolved_config.json"), &run)?;
    println!("{:>12} {:>11} {:>15} {:>9} {:>10} {:>8}", "mask_seconds", "mask_frames", "receptive_field", "l1", "spec_perc", "success");
    for r in &rows {
        println!(
            "{:>12} {:>11} {:>15} {:>9.4} {:>10.4} {:>8}",
            r.mask_seconds,
            r.mask_frames,
            r.receptive_field,
            r.l1,
            r.spec_perc,
            if r.success { "yes" } else { "no" }
        );
    }
    for (m, t) in thresholds(&rows) {
        match t {
            Some(rf) => println!("mask {m} s: smallest passing receptive field {rf}"),
            None => println!("mask {m} s: largest receptive field fails"),
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InpaintRecord {
    input: String,
    checkpoint: String,
    model: ModelConfig,
    mask_start: usize,
    mask_end: usize,
    spectrogram: SpectrogramOptions,
}

#[allow(clippy::too_many_arguments)]
pub fn inpaint(
    input: &Path,
    mask_start: f64,
    mask_end: f64,
    pipeline: PipelineArg,
    ckpt: &Path,
    model_config: Option<&Path>,
    out: &Path,
    griffin_lim_iterations: usize,
) -> CliResult {
    if !(mask_end > mask_start) || !mask_start.is_finite() || !mask_end.is_finite() {
        return Err(CliError::Usage(format!("mask end {mask_end} must exceed mask start {mask_start}")));
    }
    let clip = read_wav(input)?;
    let sr = clip.sample_rate() as f64;
    let (start, end) = ((mask_start * sr).round(), (mask_end * sr).round());
    if start < 1.0 || end >= clip.len() as f64 {
        return Err(CliError::Usage(format!(
            "mask {mask_start}..{mask_end} s must lie strictly inside the {:.3} s clip",
            clip.duration_secs()
        )));
    }
    let mask = harness::MaskSpec::new(start as usize, end as usize, clip.len())?;
    let net = load_model(ckpt, model_config)?;
    let want = match pipeline {
        PipelineArg::Wave => Domain::Waveform,
        PipelineArg::Spec => Domain::Spectrogram,
    };
    if net.domain() != want {
        return Err(CliError::Usage(format!("checkpoint holds a {} model", net.domain().name())));
    }
    let options = SpectrogramOptions {
        griffin_lim_iterations,
        ..Default::default()
    };
    let filled = run_inpaint(&net, &InpaintRequest::new(clip, mask)?, &options)?;
    write_wav(out, &filled)?;
    let record = InpaintRecord {
        input: input.display().to_string(),
        checkpoint: ckpt.display().to_string(),
        model: net.config.clone(),
        mask_start: mask.start,
        mask_end: mask.end,
        spectrogram: options,
    };
    write_json(&out.with_extension("config.json"), &record)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn benchmark(out: &Path, jobs: usize, args: &ConfigArgs) -> CliResult {
    let config = resolve_with_seed(BenchmarkConfig::default(), args, |c, root| {
        c.corpus.seed = derive_seed(root, "corpus");
        c.model_seed = derive_seed(root, "model");
        c.waveform.seed = derive_seed(root, "train-waveform");
        c.spectrogram.seed = derive_seed(root, "train-spectrogram");
        c.backbone.seed = derive_seed(root, "backbone");
        c.eval.seed = derive_seed(root, "eval");
    })?;
    let outcome = run_benchmark(&config, Some(out), jobs)?;
    write_json(&out.join("resolved_config.json"), &config)?;
    for (d, acc) in outcome.backbone_accuracy {
        println!("{} backbone: held-out accuracy {:.1}%", d.name(), acc * 100.0);
    }
    print_table(&outcome.report);
    Ok(())
}
