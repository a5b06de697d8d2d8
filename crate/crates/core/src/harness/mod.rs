//! Synthetic corpora, masking, training, evaluation and the ablation runner.

mod ablate;
mod benchmark;
mod corpus;
mod evaluate;
mod masking;
mod parallel;
mod training;

pub use crate::mask::MaskSpec;
pub use corpus::{
    generate_corpus, sha256_hex, synthesize, ClassGenerator, Corpus, CorpusClip, CorpusSpec, Envelope, Manifest,
    ManifestEntry, Split, PRESETS,
};
pub use parallel::par_map;
pub use masking::{apply_mask, augment_tile_crop, random_mask, tile_crop_at, zero_interval, MaskPolicy};
pub use training::{
    crop_example, log_magnitude, native_masked_l1, train, validation_l1, CropExample, LossPoint, LrSchedule,
    TrainConfig, TrainItem, TrainMask, TrainOutcome,
};
pub use ablate::{
    ablate, detect, frame_rms, read_ablation_csv, run_cell, thresholds, write_ablation_csv, AblationConfig,
    AblationRow, Detection, DetectorConfig,
};
pub use benchmark::{
    corpus_backbone, labeled_inputs, run_benchmark, save_trained, write_curve, write_speed, BenchmarkConfig,
    BenchmarkOutcome, GRIFFIN_LIM_GT, MASKED_INPUT,
};
pub use evaluate::{
    aggregate, clip_metrics, config_hash, evaluate, pipeline_output, read_rows_csv, weights_hash, write_rows_csv,
    AggregateSummary, Backbones, BenchmarkReport, ClipRow, EvalConfig, Pipeline, ReportSection, RunInfo,
};
