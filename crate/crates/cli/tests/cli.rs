use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use inpaint_core::dsp::wav::{read_wav, write_wav};
use inpaint_core::dsp::AudioClip;
use inpaint_core::harness::read_rows_csv;
use inpaint_core::losses::{default_backbone, PerceptualBackbone};
use inpaint_core::models::Domain;

fn inpaint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inpaint")).args(args).output().expect("spawn inpaint")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_corpus(dir: &Path, seed: &str) -> Output {
    inpaint(&["gen-corpus", "--preset", "toy-sc", "--out", path(dir), "--seed", seed, "--set", "examples_per_class=6"])
}

fn untrained_backbone(dir: &Path, domain: Domain) -> std::path::PathBuf {
    let mut bb = PerceptualBackbone::init(default_backbone(domain, 10), 3).unwrap();
    bb.meta.trained = true;
    let stem = dir.join(domain.name());
    bb.save(&stem).unwrap();
    stem
}

#[test]
fn help_lists_subcommands() {
    let out = inpaint(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["gen-corpus", "train", "evaluate", "ablate", "inpaint", "benchmark"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = inpaint(&["gen-corpus", "--out", "x", "--frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = inpaint(&["gen-corpus", "--preset", "toy-xx", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_override_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = inpaint(&["gen-corpus", "--out", path(dir.path()), "--set", "no_such_key=1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn corpus_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (d, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = small_corpus(d, seed);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest = |d: &Path| fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(manifest(&a), manifest(&b));
    assert_ne!(manifest(&a), manifest(&c));
}

#[test]
fn inpaint_rejects_bad_masks_and_missing_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    let clip = AudioClip::new((0..16000).map(|i| (i as f64 * 0.05).sin() * 0.5).collect(), 16000).unwrap();
    write_wav(&wav, &clip).unwrap();
    let out_wav = dir.path().join("out.wav");
    let missing = dir.path().join("nothing.ckpt");
    let base = |start: &str, end: &str| {
        inpaint(&[
            "inpaint", "--in", path(&wav), "--mask-start", start, "--mask-end", end, "--pipeline", "wave", "--ckpt",
            path(&missing), "--out", path(&out_wav),
        ])
    };
    assert_eq!(code(&base("0.5", "0.4")), 2);
    assert_eq!(code(&base("0.5", "0.5")), 2);
    assert_eq!(code(&base("0.0", "0.5")), 2);
    assert_eq!(code(&base("0.4", "0.6")), 3);
    assert!(!out_wav.exists());
}

#[test]
fn train_inpaint_and_evaluate_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert_eq!(code(&small_corpus(&corpus, "9")), 0);

    let model = dir.path().join("wave");
    let out = inpaint(&[
        "train", "--target", "waveform", "--corpus", path(&corpus), "--out", path(&model), "--seed", "1", "--set",
        "train.steps=2", "--set", "train.batch=1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "final.ckpt", "loss_curve.csv", "resolved_config.json"] {
        assert!(model.join(f).is_file(), "{f} missing");
    }
    let resolved: serde_json::Value = serde_json::from_slice(&fs::read(model.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["train"]["steps"], 2);

    let wav = corpus.join("clips").join(fs::read_dir(corpus.join("clips")).unwrap().next().unwrap().unwrap().file_name());
    let filled = dir.path().join("filled.wav");
    let out = inpaint(&[
        "inpaint", "--in", path(&wav), "--mask-start", "0.4", "--mask-end", "0.6", "--pipeline", "wave", "--ckpt",
        path(&model.join("final.ckpt")), "--out", path(&filled),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (orig, result) = (read_wav(&wav).unwrap(), read_wav(&filled).unwrap());
    assert_eq!(orig.len(), result.len());
    assert_eq!(&orig.samples()[..6000], &result.samples()[..6000]);
    assert!(dir.path().join("filled.config.json").is_file());

    let wave_bb = untrained_backbone(dir.path(), Domain::Waveform);
    let spec_bb = untrained_backbone(dir.path(), Domain::Spectrogram);
    let report = dir.path().join("report");
    let out = inpaint(&[
        "evaluate", "--corpus", path(&corpus), "--wave-ckpt", path(&model.join("final.ckpt")), "--wave-backbone",
        path(&wave_bb), "--spec-backbone", path(&spec_bb), "--out", path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for section in ["masked_input", "griffin_lim_gt", "waveform"] {
        let rows = read_rows_csv(&report.join(format!("{section}.csv"))).unwrap();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.ml1.is_finite() && r.ssim.is_finite()));
    }
    let header = fs::read_to_string(report.join("masked_input.csv")).unwrap();
    assert!(header.starts_with("clip_id,ml1,ssim,wave_pdist,spec_pdist,spec_ml1"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(report.join("report.json")).unwrap()).unwrap();
    assert!(summary["rows"].is_object() || summary["rows"].is_array());
}

#[test]
fn evaluate_with_a_missing_backbone_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert_eq!(code(&small_corpus(&corpus, "2")), 0);
    let nowhere = dir.path().join("none");
    let out = inpaint(&[
        "evaluate", "--corpus", path(&corpus), "--wave-backbone", path(&nowhere), "--spec-backbone", path(&nowhere),
        "--out", path(&dir.path().join("r")),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn benchmark_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("fresh").join("bench");
    let out = inpaint(&[
        "benchmark", "--out", path(&out_dir), "--set", "corpus.examples_per_class=20", "--set", "waveform.steps=1",
        "--set", "waveform.batch=1", "--set", "spectrogram.steps=1", "--set", "spectrogram.batch=1", "--set",
        "backbone.steps=150",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "config.json",
        "corpus/manifest.json",
        "backbones/waveform.json",
        "backbones/spectrogram.ckpt",
        "models/waveform/final.ckpt",
        "models/spectrogram/loss_curve.csv",
        "report/waveform.csv",
        "speed.json",
    ] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
}
