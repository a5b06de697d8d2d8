//! Training losses, evaluation metrics and the classifier backbones behind
//! the perceptual terms.

mod metrics;
mod perceptual;

pub use metrics::{
    dynamic_range, gaussian_kernel, hardware_descriptor, inference_speed, masked_l1, ssim, ssim_from_moments,
    InferenceSpeed, MaskedL1, MetricRecord, SsimWindow, MIN_SPEED_CLIPS,
};
pub use perceptual::{
    accuracy, backbone_tap, clip_input, combined_loss, default_backbone, fit_classifier, perceptual_distance,
    perceptual_distance_clips, train_backbone, BackboneMeta, ClassifierSchedule, LabeledInput, LossBreakdown,
    LossWeights, PerceptualBackbone, MIN_BACKBONE_ACCURACY, MIN_EXAMPLES_PER_CLASS,
};
