//! End-to-end acceptance gates. Prints one PASS/FAIL line per criterion and
//! always exits 0; failures are reported, not hidden.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{max_rel_error, project, random};
use inpaint_core::autograd::{
    gradient_support, layers, receptive_field_axes, Activation, ConvGeom, Graph, LayerSpec, Tensor,
};
use inpaint_core::dsp::{griffin_lim_traced, AudioClip, PhaseSeed, Stft, StftParams};
use inpaint_core::harness::{
    ablate, corpus_backbone, generate_corpus, native_masked_l1, run_benchmark, thresholds, train, AblationConfig,
    AblationRow, BenchmarkConfig, BenchmarkOutcome, CorpusSpec, MaskPolicy, Split, TrainConfig, TrainMask,
    MASKED_INPUT,
};
use inpaint_core::losses::{
    combined_loss, masked_l1, perceptual_distance, ssim, ClassifierSchedule, LossWeights, PerceptualBackbone,
    SsimWindow,
};
use inpaint_core::models::{Domain, ModelConfig, Network};
use inpaint_core::seed;
use rand::Rng;

const ISTFT_TOL: f64 = 1e-10;
const FD_TOL: f64 = 1e-6;
const FD_INSTANCES: usize = 20;
const RF_ARCHITECTURES: usize = 50;
const ORACLE_TOL: f64 = 1e-12;
const OVERFIT_STEPS: usize = 2000;
const OVERFIT_WAVE: f64 = 0.01;
const OVERFIT_SPEC: f64 = 0.02;
const BACKBONE_ACCURACY: f64 = 0.9;
const METRIC_PAIRS: usize = 100;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn run(results: &mut Vec<bool>, id: usize, name: &str, body: impl FnOnce() -> Verdict) {
    if !selected(id) {
        return;
    }
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &verdict {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id} [{tag}] {name}: {detail} ({secs:.1} s)");
    results.push(verdict.is_ok());
}

/// Criterion numbers given on the command line restrict the run; none
/// means all.
fn selected(id: usize) -> bool {
    let picks: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    picks.is_empty() || picks.contains(&id)
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("create acceptance dir");

    let mut results = Vec::new();
    run(&mut results, 1, "dsp fidelity", dsp_fidelity);
    run(&mut results, 2, "finite-difference gradients", gradients);
    run(&mut results, 3, "receptive-field oracle", receptive_fields);
    run(&mut results, 4, "naive-loop oracles", oracles);
    run(&mut results, 5, "single-clip overfit", overfit);

    let first = dir.join("benchmark_a");
    let started = Instant::now();
    let bench: Result<BenchmarkOutcome, String> = if [6, 8, 9].into_iter().any(selected) {
        match catch_unwind(AssertUnwindSafe(|| run_benchmark(&BenchmarkConfig::default(), Some(&first), 1))) {
            Ok(Ok(b)) => Ok(b),
            Ok(Err(e)) => Err(e.to_string()),
            Err(_) => Err("benchmark panicked".into()),
        }
    } else {
        Err("benchmark not run".into())
    };
    let bench_secs = started.elapsed().as_secs_f64();
    run(&mut results, 6, "benchmark ordering", || benchmark_ordering(&bench, bench_secs));
    run(&mut results, 7, "ablation pattern", || ablation(&dir));
    run(&mut results, 8, "backbone viability", || backbones(&bench, &first));
    run(&mut results, 9, "determinism", || determinism(&bench, &first, &dir.join("benchmark_b")));

    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
}

// ---------------------------------------------------------------- 1

fn dsp_fidelity() -> Verdict {
    let mut rng = seed::rng(101);
    let mut worst: f64 = 0.0;
    for width in [256, 512] {
        for hop in [width / 4, width / 2] {
            let params = StftParams::new(width, hop).map_err(|e| e.to_string())?;
            let engine = Stft::new(params).map_err(|e| e.to_string())?;
            for len in [4000, 16000, 16001] {
                let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
                let clip = AudioClip::new(x.clone(), 16000).unwrap();
                let back = engine.inverse(&engine.forward(&clip).unwrap()).unwrap();
                let err = back.samples().iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(err);
            }
        }
    }
    if worst >= ISTFT_TOL {
        return Err(format!("round-trip max error {worst:.3e}"));
    }

    let corpus = generate_corpus(&CorpusSpec::toy_sc(31)).map_err(|e| e.to_string())?;
    let engine = Stft::new(StftParams::default()).unwrap();
    let mut increases = 0;
    for i in 0..20 {
        let pick = rng.random_range(0..corpus.clips.len());
        let mag = engine.forward(&corpus.clips[pick].clip).unwrap().magnitude().unwrap();
        let out = griffin_lim_traced(&mag, 60, PhaseSeed::Random(i)).map_err(|e| e.to_string())?;
        increases += out.errors.windows(2).filter(|w| w[1] > w[0]).count();
    }
    check(
        increases == 0,
        format!("round-trip max error {worst:.3e} over 4 grids; {increases} Griffin-Lim increases on 20 clips"),
    )
}

// ---------------------------------------------------------------- 2

fn small_backbone(domain: Domain, seed_value: u64) -> PerceptualBackbone {
    let act = Activation::leaky();
    let layers = match domain {
        Domain::Waveform => vec![
            LayerSpec::conv1d(1, 3, 5, 2, 1, act),
            LayerSpec::conv1d(3, 4, 3, 2, 1, act),
            LayerSpec::global_avg_pool(),
            LayerSpec::dense(4, 3),
        ],
        Domain::Spectrogram => vec![
            LayerSpec::conv2d(1, 3, [3, 3], [2, 2], [1, 1], act),
            LayerSpec::conv2d(3, 4, [3, 3], [2, 1], [1, 1], act),
            LayerSpec::global_avg_pool(),
            LayerSpec::dense(4, 3),
        ],
    };
    let config = ModelConfig {
        domain,
        input_channels: 1,
        output_channels: 3,
        layers,
    };
    let mut bb = PerceptualBackbone::init(config, seed_value).unwrap();
    bb.meta.trained = true;
    bb
}

fn backbone_shape(domain: Domain, rng: &mut impl Rng) -> Vec<usize> {
    match domain {
        Domain::Waveform => vec![1, 1, rng.random_range(8..20)],
        Domain::Spectrogram => vec![1, 1, rng.random_range(6..9), rng.random_range(5..8)],
    }
}

/// Residuals kept at least 0.05 away from the L1 kink.
fn offset_target(out: &Tensor, rng: &mut impl Rng) -> Vec<f64> {
    out.data()
        .iter()
        .map(|o| {
            let d = rng.random_range(0.05..0.5);
            if rng.random_bool(0.5) {
                o + d
            } else {
                o - d
            }
        })
        .collect()
}

fn gradients() -> Verdict {
    let mut rng = seed::rng(202);
    let mut report = Vec::new();
    let mut failed = Vec::new();
    let mut record = |name: &str, errs: Vec<f64>| {
        let worst = errs.iter().copied().fold(0.0, f64::max);
        if worst >= FD_TOL || errs.len() < FD_INSTANCES {
            failed.push(name.to_string());
        }
        report.push(format!("{name} {:.1e}", worst));
    };

    let mut errs = Vec::new();
    for i in 0..FD_INSTANCES {
        let (k, s, d) = (2 * rng.random_range(0..3) + 1, rng.random_range(1..3), rng.random_range(1..3));
        let geom = ConvGeom::one_d(k, s, d);
        let (cin, cout) = (rng.random_range(1..3), rng.random_range(1..3));
        let len = geom.span(1) + rng.random_range(0..6);
        let x = random(&[1, cin, len], &mut rng, -1.0, 1.0);
        let w = random(&[cout, cin, k], &mut rng, -1.0, 1.0);
        let b = random(&[cout], &mut rng, -1.0, 1.0);
        errs.push(max_rel_error(&[x, w, b], |g, v| {
            let y = g.conv(v[0], v[1], Some(v[2]), geom).unwrap();
            project(g, y, i as u64)
        }));
    }
    record("conv1d", errs);

    let mut errs = Vec::new();
    for i in 0..FD_INSTANCES {
        let geom = ConvGeom {
            kernel: [2 * rng.random_range(0..2) + 1, 2 * rng.random_range(0..2) + 1],
            stride: [rng.random_range(1..3), rng.random_range(1..3)],
            dilation: [rng.random_range(1..3), rng.random_range(1..3)],
        };
        let (cin, cout) = (rng.random_range(1..3), rng.random_range(1..3));
        let (h, w) = (geom.span(0) + rng.random_range(0..3), geom.span(1) + rng.random_range(0..3));
        let x = random(&[1, cin, h, w], &mut rng, -1.0, 1.0);
        let wt = random(&[cout, cin, geom.kernel[0], geom.kernel[1]], &mut rng, -1.0, 1.0);
        let b = random(&[cout], &mut rng, -1.0, 1.0);
        errs.push(max_rel_error(&[x, wt, b], |g, v| {
            let y = g.conv(v[0], v[1], Some(v[2]), geom).unwrap();
            project(g, y, 100 + i as u64)
        }));
    }
    record("conv2d", errs);

    let mut errs = Vec::new();
    for i in 0..FD_INSTANCES {
        let (cin, cout) = (rng.random_range(1..3), rng.random_range(1..3));
        let (layer, shape) = if i % 2 == 0 {
            let l = LayerSpec::gated_conv1d(cin, cout, 2 * rng.random_range(0..3) + 1, rng.random_range(1..3), rng.random_range(1..3));
            let len = l.geom().unwrap().span(1) + rng.random_range(0..5);
            (l, vec![1, cin, len])
        } else {
            let l = LayerSpec::gated_conv2d(cin, cout, [3, 2 * rng.random_range(0..2) + 1], [rng.random_range(1..3), 1], [1, rng.random_range(1..3)]);
            let g = l.geom().unwrap();
            (l, vec![1, cin, g.span(0) + 2, g.span(1) + 1])
        };
        let mut inputs = vec![random(&shape, &mut rng, -1.0, 1.0)];
        for s in layer.param_shapes() {
            inputs.push(random(&s, &mut rng, -0.8, 0.8));
        }
        errs.push(max_rel_error(&inputs, |g, v| {
            let y = layer.apply(g, &v[1..], v[0]).unwrap();
            project(g, y, 200 + i as u64)
        }));
    }
    record("gated conv", errs);

    let mut errs = Vec::new();
    for i in 0..FD_INSTANCES {
        let (cin, mid) = (rng.random_range(1..3), rng.random_range(1..3));
        let stride = rng.random_range(1..3);
        let stack = vec![
            LayerSpec::gated_conv1d(cin, mid, 3, stride, 1),
            LayerSpec::upsample(vec![stride]),
            LayerSpec::skip_input(),
            LayerSpec::conv1d(mid + cin, 1, 3, 1, rng.random_range(1..3), Activation::Tanh),
        ];
        let len = rng.random_range(6..14);
        let mut inputs = vec![random(&[1, cin, len], &mut rng, -1.0, 1.0)];
        let mut counts = Vec::new();
        for l in &stack {
            let shapes = l.param_shapes();
            counts.push(shapes.len());
            inputs.extend(shapes.iter().map(|s| random(s, &mut rng, -0.8, 0.8)));
        }
        errs.push(max_rel_error(&inputs, |g, v| {
            let mut vars = Vec::new();
            let mut at = 1;
            for c in &counts {
                vars.push(v[at..at + c].to_vec());
                at += c;
            }
            let (y, _) = layers::forward_layers(g, &stack, &vars, v[0], None).unwrap();
            project(g, y, 250 + i as u64)
        }));
    }
    record("input skip", errs);

    let acts = [Activation::leaky(), Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Softplus];
    let mut errs = Vec::new();
    for i in 0..FD_INSTANCES {
        let act = acts[i % acts.len()];
        let n = rng.random_range(3..15);
        // Away from the kink at 0 for the piecewise-linear ones.
        let data = (0..n)
            .map(|_| rng.random_range(0.01..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let x = Tensor::new(vec![1, 1, n], data).unwrap();
        errs.push(max_rel_error(&[x], |g, v| {
            let y = act.apply(g, v[0]);
            project(g, y, 300 + i as u64)
        }));
    }
    record("activations", errs);

    let mut errs = Vec::new();
    for _ in 0..FD_INSTANCES {
        let n = rng.random_range(4..30);
        let out = random(&[1, 1, n], &mut rng, -1.0, 1.0);
        let target = offset_target(&out, &mut rng);
        let mut mask: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        mask[0] = 1.0;
        errs.push(max_rel_error(&[out], |g, v| g.masked_l1(v[0], &target, &mask).unwrap()));
    }
    record("masked L1", errs);

    let mut errs = Vec::new();
    for i in 0..FD_INSTANCES {
        let domain = if i % 2 == 0 { Domain::Waveform } else { Domain::Spectrogram };
        let bb = small_backbone(domain, 400 + i as u64);
        let shape = backbone_shape(domain, &mut rng);
        let out = random(&shape, &mut rng, -1.0, 1.0);
        let target = random(&shape, &mut rng, -1.0, 1.0);
        errs.push(max_rel_error(&[out], |g, v| {
            let t = g.constant(target.clone());
            let fo = bb.features(g, v[0]).unwrap();
            let ft = bb.features(g, t).unwrap();
            g.mean_abs_diff(fo, ft).unwrap()
        }));
    }
    record("perceptual distance", errs);

    let mut errs = Vec::new();
    for i in 0..FD_INSTANCES {
        let domain = if i % 2 == 0 { Domain::Waveform } else { Domain::Spectrogram };
        let bb = small_backbone(domain, 500 + i as u64);
        let shape = backbone_shape(domain, &mut rng);
        let out = random(&shape, &mut rng, -1.0, 1.0);
        let target = offset_target(&out, &mut rng);
        let n = out.numel();
        let mask: Vec<f64> = (0..n).map(|j| if j % 3 != 0 { 1.0 } else { 0.0 }).collect();
        let weights = LossWeights {
            l1: rng.random_range(0.5..2.0),
            perceptual: rng.random_range(0.05..1.0),
        };
        errs.push(max_rel_error(&[out], |g, v| {
            combined_loss(g, v[0], &target, &mask, weights, Some(&bb)).unwrap().0
        }));
    }
    record("combined loss", errs);

    let detail = format!("{FD_INSTANCES} instances each, worst relative error: {}", report.join(", "));
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; over tolerance: {}", failed.join(", ")))
    }
}

// ---------------------------------------------------------------- 3

fn random_stack(rng: &mut impl Rng) -> (Vec<LayerSpec>, Vec<usize>) {
    let two_d = rng.random_bool(0.5);
    let depth = rng.random_range(1..6);
    let mut c = rng.random_range(1..3);
    let cin = c;
    let mut layers = Vec::new();
    for _ in 0..depth {
        let cout = rng.random_range(1..3);
        let mut pick = || (2 * rng.random_range(0..3) + 1, rng.random_range(1..3), rng.random_range(1..4));
        let (k, s, d) = pick();
        let layer = if two_d {
            let (kf, sf, df) = pick();
            if rng.random_bool(0.5) {
                LayerSpec::gated_conv2d(c, cout, [kf, k], [sf, s], [df, d])
            } else {
                LayerSpec::conv2d(c, cout, [kf, k], [sf, s], [df, d], Activation::leaky())
            }
        } else if rng.random_bool(0.5) {
            LayerSpec::gated_conv1d(c, cout, k, s, d)
        } else {
            LayerSpec::conv1d(c, cout, k, s, d, Activation::Tanh)
        };
        layers.push(layer);
        c = cout;
    }
    let rf = receptive_field_axes(&layers).unwrap();
    let shape = if two_d {
        vec![cin, 3 * rf[0] + 8, 3 * rf[1] + 8]
    } else {
        vec![cin, 3 * rf[1] + 8]
    };
    (layers, shape)
}

fn receptive_fields() -> Verdict {
    let mut rng = seed::rng(303);
    let mut mismatches = Vec::new();
    let mut largest = 0;
    for i in 0..RF_ARCHITECTURES {
        let (stack, shape) = random_stack(&mut rng);
        let params: Vec<_> = stack.iter().map(|l| l.init_params(&mut rng)).collect();
        let analytic = receptive_field_axes(&stack).map_err(|e| e.to_string())?;
        let empirical = gradient_support(&stack, &params, &shape).map_err(|e| e.to_string())?;
        let matches = if shape.len() == 3 { analytic == empirical } else { analytic[1] == empirical[1] };
        if !matches {
            mismatches.push(format!("#{i}: {analytic:?} vs {empirical:?}"));
        }
        largest = largest.max(analytic[1]);
    }
    check(
        mismatches.is_empty(),
        format!("{RF_ARCHITECTURES} random stacks (largest RF {largest}), mismatches: {mismatches:?}"),
    )
}

// ---------------------------------------------------------------- 4

struct Plane {
    data: Vec<f64>,
    c: usize,
    h: usize,
    w: usize,
}

fn apply_act(act: Activation, v: f64) -> f64 {
    match act {
        Activation::Identity => v,
        Activation::LeakyRelu { slope } => {
            if v > 0.0 {
                v
            } else {
                slope * v
            }
        }
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        Activation::Tanh => v.tanh(),
        Activation::Relu => v.max(0.0),
        Activation::Softplus => (1.0 + v.exp()).ln(),
    }
}

/// Zero-padded cross-correlation written as plain loops.
fn naive_conv(x: &Plane, weight: &Tensor, bias: &Tensor, geom: ConvGeom) -> Plane {
    let o = weight.shape()[0];
    let (kh, kw) = (geom.kernel[0], geom.kernel[1]);
    let span = |a: usize| (geom.kernel[a] - 1) * geom.dilation[a] + 1;
    let pad = |a: usize| (span(a) - 1) / 2;
    let oh = (x.h + 2 * pad(0) - span(0)) / geom.stride[0] + 1;
    let ow = (x.w + 2 * pad(1) - span(1)) / geom.stride[1] + 1;
    let wd = weight.data();
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.data()[oc];
                for ic in 0..x.c {
                    for i in 0..kh {
                        for j in 0..kw {
                            let iy = (oy * geom.stride[0] + i * geom.dilation[0]) as isize - pad(0) as isize;
                            let ix = (ox * geom.stride[1] + j * geom.dilation[1]) as isize - pad(1) as isize;
                            if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                continue;
                            }
                            acc += wd[((oc * x.c + ic) * kh + i) * kw + j]
                                * x.data[(ic * x.h + iy as usize) * x.w + ix as usize];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Plane { data: out, c: o, h: oh, w: ow }
}

fn plane_of(t: &Tensor) -> Plane {
    let s = t.shape();
    match s.len() {
        3 => Plane { data: t.data().to_vec(), c: s[1], h: 1, w: s[2] },
        _ => Plane { data: t.data().to_vec(), c: s[1], h: s[2], w: s[3] },
    }
}

fn naive_features(bb: &PerceptualBackbone, input: &Tensor) -> Vec<f64> {
    let mut x = plane_of(input);
    for (layer, p) in bb.meta.config.layers.iter().zip(&bb.params).take(bb.feature_tap() + 1) {
        let mut y = naive_conv(&x, &p.tensors[0], &p.tensors[1], layer.geom().unwrap());
        y.data.iter_mut().for_each(|v| *v = apply_act(layer.activation, *v));
        x = y;
    }
    x.data
}

fn naive_gated(x: &Plane, layer: &LayerSpec, p: &[Tensor]) -> Vec<f64> {
    let geom = layer.geom().unwrap();
    let gate = naive_conv(x, &p[0], &p[1], geom);
    let feat = naive_conv(x, &p[2], &p[3], geom);
    gate.data
        .iter()
        .zip(&feat.data)
        .map(|(g, f)| 1.0 / (1.0 + (-g).exp()) * apply_act(layer.activation, *f))
        .collect()
}

/// Mean SSIM over every valid 11x11 placement of a 2-D Gaussian window
/// (sigma 1.5), moments taken directly around the local means.
fn naive_ssim(a: &[f64], b: &[f64], rows: usize, cols: usize) -> f64 {
    let n = 11;
    let sigma: f64 = 1.5;
    let mut win = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            win[i * n + j] = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let c1 = (0.01 * (hi - lo)).powi(2);
    let c2 = (0.03 * (hi - lo)).powi(2);
    let mut sum = 0.0;
    let mut count = 0;
    for r in 0..=rows - n {
        for c in 0..=cols - n {
            let at = |v: &[f64], i: usize, j: usize| v[(r + i) * cols + c + j];
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    ma += win[i * n + j] * at(a, i, j);
                    mb += win[i * n + j] * at(b, i, j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let (da, db) = (at(a, i, j) - ma, at(b, i, j) - mb);
                    va += win[i * n + j] * da * da;
                    vb += win[i * n + j] * db * db;
                    cov += win[i * n + j] * da * db;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

fn oracles() -> Verdict {
    let mut rng = seed::rng(404);
    let mut worst = [0.0f64; 4];
    let mut invariance_breaks = 0;

    for _ in 0..50 {
        let n = rng.random_range(1..200);
        let out: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        mask[n / 2] = true;
        let (mut total, mut count) = (0.0, 0.0);
        for i in 0..n {
            if mask[i] {
                total += (out[i] - target[i]).abs();
                count += 1.0;
            }
        }
        let expected = total / count;
        let value = masked_l1(&out, &target, &mask).unwrap().value;
        let weights: Vec<f64> = mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
        let mut g = Graph::new();
        let v = g.constant(Tensor::new(vec![1, 1, n], out.clone()).unwrap());
        let l = g.masked_l1(v, &target, &weights).unwrap();
        let graph_value = g.value(l).item();
        worst[0] = worst[0].max((value - expected).abs()).max((graph_value - expected).abs());

        let mut moved = out.clone();
        for i in 0..n {
            if !mask[i] {
                moved[i] += rng.random_range(-10.0..10.0);
            }
        }
        let mut g = Graph::new();
        let v = g.constant(Tensor::new(vec![1, 1, n], moved.clone()).unwrap());
        let l = g.masked_l1(v, &target, &weights).unwrap();
        let moved_graph = g.value(l).item();
        if masked_l1(&moved, &target, &mask).unwrap().value != value || moved_graph != graph_value {
            invariance_breaks += 1;
        }
    }

    let mut backbones: Vec<(PerceptualBackbone, Vec<usize>)> = Vec::new();
    for i in 0..10 {
        let domain = if i % 2 == 0 { Domain::Waveform } else { Domain::Spectrogram };
        let shape = match domain {
            Domain::Waveform => vec![1, 1, rng.random_range(30..120)],
            Domain::Spectrogram => vec![1, 1, rng.random_range(10..40), rng.random_range(10..40)],
        };
        backbones.push((small_backbone(domain, 600 + i), shape));
    }
    for (i, domain) in [Domain::Waveform, Domain::Spectrogram].into_iter().enumerate() {
        let config = inpaint_core::losses::default_backbone(domain, 10);
        let mut bb = PerceptualBackbone::init(config, 700 + i as u64).unwrap();
        bb.meta.trained = true;
        let shape = match domain {
            Domain::Waveform => vec![1, 1, 16000],
            Domain::Spectrogram => vec![1, 1, 257, 126],
        };
        backbones.push((bb, shape));
    }
    for (bb, shape) in &backbones {
        let a = random(shape, &mut rng, -1.0, 1.0);
        let b = random(shape, &mut rng, -1.0, 1.0);
        let fa = naive_features(bb, &a);
        let fb = naive_features(bb, &b);
        let expected = fa.iter().zip(&fb).map(|(x, y)| (x - y).abs()).sum::<f64>() / fa.len() as f64;
        let value = perceptual_distance(&a, &b, bb).map_err(|e| e.to_string())?;
        worst[1] = worst[1].max((value - expected).abs());
    }

    for _ in 0..10 {
        let (rows, cols) = (rng.random_range(11..40), rng.random_range(11..40));
        let a: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..3.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let value = ssim(&a, &b, rows, cols, SsimWindow::Gaussian).unwrap();
        worst[2] = worst[2].max((value - naive_ssim(&a, &b, rows, cols)).abs());
    }
    let corpus = generate_corpus(&CorpusSpec::toy_sc(41)).map_err(|e| e.to_string())?;
    let engine = Stft::new(StftParams::default()).unwrap();
    let spec = |c: usize| engine.forward(&corpus.clips[c].clip).unwrap().magnitude().unwrap().log_compress().unwrap();
    let (sa, sb) = (spec(0), spec(7));
    let (ra, rb) = (sa.real_bins().unwrap(), sb.real_bins().unwrap());
    let value = ssim(ra, rb, sa.freq_bins(), sa.frames(), SsimWindow::Gaussian).unwrap();
    worst[2] = worst[2].max((value - naive_ssim(ra, rb, sa.freq_bins(), sa.frames())).abs());

    for i in 0..30 {
        let (cin, cout) = (rng.random_range(1..4), rng.random_range(1..4));
        let (layer, shape) = if i % 2 == 0 {
            let l = LayerSpec::gated_conv1d(cin, cout, 2 * rng.random_range(0..4) + 1, rng.random_range(1..4), rng.random_range(1..4));
            let span = l.geom().unwrap().span(1);
            (l, vec![1, cin, span + rng.random_range(0..40)])
        } else {
            let k = [2 * rng.random_range(0..3) + 1, 2 * rng.random_range(0..3) + 1];
            let s = [rng.random_range(1..3), rng.random_range(1..3)];
            let d = [rng.random_range(1..3), rng.random_range(1..3)];
            let l = LayerSpec::gated_conv2d(cin, cout, k, s, d);
            let g = l.geom().unwrap();
            (l, vec![1, cin, g.span(0) + rng.random_range(0..15), g.span(1) + rng.random_range(0..15)])
        };
        let x = random(&shape, &mut rng, -1.0, 1.0);
        let params: Vec<Tensor> = layer.param_shapes().iter().map(|s| random(s, &mut rng, -1.0, 1.0)).collect();
        let expected = naive_gated(&plane_of(&x), &layer, &params);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let pv: Vec<_> = params.into_iter().map(|t| g.constant(t)).collect();
        let y = layers::gated_conv(&mut g, xv, &pv, layer.geom().unwrap(), layer.activation).unwrap();
        let got = g.value(y).data();
        if got.len() != expected.len() {
            return Err(format!("gated conv produced {} values, oracle {}", got.len(), expected.len()));
        }
        let err = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst[3] = worst[3].max(err);
    }

    let ok = worst.iter().all(|w| *w < ORACLE_TOL) && invariance_breaks == 0;
    check(
        ok,
        format!(
            "max |diff| masked_l1 {:.1e}, perceptual {:.1e}, ssim {:.1e}, gated conv {:.1e}; out-of-mask invariance breaks {invariance_breaks}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

// ---------------------------------------------------------------- 5

fn overfit_one(domain: Domain, threshold: f64) -> Result<(f64, usize), String> {
    let corpus = generate_corpus(&CorpusSpec::toy_sc(2024)).map_err(|e| e.to_string())?;
    let clip = corpus.clips[0].clip.clone();
    let mut net = Network::init(ModelConfig::default_for(domain), 5).map_err(|e| e.to_string())?;
    let mask = TrainMask::Fixed {
        start_seconds: 0.4,
        end_seconds: 0.6,
    };
    let policy = MaskPolicy::Fixed {
        start_seconds: 0.4,
        end_seconds: 0.6,
    };
    let config = TrainConfig {
        steps: OVERFIT_STEPS,
        batch: 1,
        lr: 1e-3,
        mask,
        val_every: 50,
        val_mask: policy.clone(),
        target_l1: Some(threshold),
        ..Default::default()
    };
    let outcome = train(&mut net, std::slice::from_ref(&clip), std::slice::from_ref(&clip), &config, None)
        .map_err(|e| e.to_string())?;
    let spec = policy.resolve(clip.len(), clip.sample_rate()).unwrap();
    let l1 = native_masked_l1(&net, &clip, &spec, &config.stft).map_err(|e| e.to_string())?;
    Ok((l1, outcome.steps_run))
}

fn overfit() -> Verdict {
    let (wave, wave_steps) = overfit_one(Domain::Waveform, OVERFIT_WAVE)?;
    let (spec, spec_steps) = overfit_one(Domain::Spectrogram, OVERFIT_SPEC)?;
    check(
        wave < OVERFIT_WAVE && spec < OVERFIT_SPEC && wave_steps <= OVERFIT_STEPS && spec_steps <= OVERFIT_STEPS,
        format!(
            "waveform masked L1 {wave:.4} after {wave_steps} steps (< {OVERFIT_WAVE}), spectrogram masked-frame L1 {spec:.4} after {spec_steps} steps (< {OVERFIT_SPEC})"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn benchmark_ordering(bench: &Result<BenchmarkOutcome, String>, secs: f64) -> Verdict {
    let bench = bench.as_ref().map_err(|e| e.clone())?;
    let report = &bench.report;
    let get = |name: &str| report.section(name).map(|s| s.aggregate).ok_or(format!("missing section {name}"));
    let base = get(MASKED_INPUT)?;
    let wave = get(Domain::Waveform.name())?;
    let spec = get(Domain::Spectrogram.name())?;
    let wave_ok = wave.masked_l1 < base.masked_l1;
    let spec_ok = spec.spec_masked_l1 < base.spec_masked_l1;
    check(
        wave_ok && spec_ok,
        format!(
            "waveform ml1 {:.6} vs masked input {:.6}; spectrogram spec ml1 {:.6} vs masked input {:.6} (its waveform ml1 {:.6}); run {secs:.0} s",
            wave.masked_l1, base.masked_l1, spec.spec_masked_l1, base.spec_masked_l1, spec.masked_l1
        ),
    )
}

// ---------------------------------------------------------------- 7

fn ablation(dir: &Path) -> Verdict {
    let config = AblationConfig::default();
    let corpus = generate_corpus(&config.corpus).map_err(|e| e.to_string())?;
    let (bb, _) = corpus_backbone(&corpus, Domain::Spectrogram, &ClassifierSchedule::default(), &config.spectrogram.stft)
        .map_err(|e| e.to_string())?;
    let rows = ablate(&config, &bb, 1).map_err(|e| e.to_string())?;
    inpaint_core::harness::write_ablation_csv(&dir.join("ablation.csv"), &rows).map_err(|e| e.to_string())?;
    let mut bad: Vec<String> = Vec::new();
    let fmt = |r: &AblationRow| format!("M{}/RF{}", r.mask_frames, r.receptive_field);
    for r in &rows {
        println!(
            "  mask {:.2} s ({:>2} frames) RF {:>3}: {} pass {:.2} mid-silence {:.2} l1 {:.4}",
            r.mask_seconds,
            r.mask_frames,
            r.receptive_field,
            if r.success { "PASS" } else { "FAIL" },
            r.pass_rate,
            r.mid_silence_rate,
            r.l1
        );
        if r.receptive_field < r.mask_frames && (r.success || r.mid_silence_rate < config.quorum) {
            bad.push(format!("{} should fail with mid-mask silence", fmt(r)));
        }
        if r.receptive_field as f64 >= 1.2 * r.mask_frames as f64 && !r.success {
            bad.push(format!("{} should succeed", fmt(r)));
        }
    }
    let th = thresholds(&rows);
    let values: Vec<Option<usize>> = th.iter().map(|(_, t)| *t).collect();
    let monotone = values.iter().all(Option::is_some) && values.windows(2).all(|w| w[0] <= w[1]);
    if !monotone {
        bad.push(format!("thresholds not non-decreasing: {values:?}"));
    }
    check(
        bad.is_empty() && rows.len() == 15,
        format!("{} cells, thresholds {values:?}; violations: {bad:?}", rows.len()),
    )
}

// ---------------------------------------------------------------- 8

fn backbones(bench: &Result<BenchmarkOutcome, String>, dir: &Path) -> Verdict {
    let bench = bench.as_ref().map_err(|e| e.clone())?;
    let acc: Vec<String> = bench.backbone_accuracy.iter().map(|(d, a)| format!("{} {:.3}", d.name(), a)).collect();
    let acc_ok = bench.backbone_accuracy.iter().all(|(_, a)| *a >= BACKBONE_ACCURACY);

    let corpus = generate_corpus(&CorpusSpec::toy_sc(2024)).map_err(|e| e.to_string())?;
    let test: Vec<_> = corpus.split(Split::Test);
    let stft = StftParams::default();
    let mut rng = seed::rng(808);
    let mut violations = 0;
    let mut checked = 0;
    for domain in [Domain::Waveform, Domain::Spectrogram] {
        let bb = PerceptualBackbone::load(&dir.join("backbones").join(domain.name())).map_err(|e| e.to_string())?;
        let input = |i: usize| inpaint_core::losses::clip_input(domain, &stft, &test[i].clip).unwrap();
        for _ in 0..METRIC_PAIRS / 2 {
            let (x, y, z) = (
                input(rng.random_range(0..test.len())),
                input(rng.random_range(0..test.len())),
                input(rng.random_range(0..test.len())),
            );
            let d = |a: &Tensor, b: &Tensor| perceptual_distance(a, b, &bb).unwrap();
            let (xy, yx, xz, yz, xx) = (d(&x, &y), d(&y, &x), d(&x, &z), d(&y, &z), d(&x, &x));
            let ok = xx == 0.0 && xy >= 0.0 && xy == yx && xz <= xy + yz + 1e-12 * (xy + yz);
            if !ok {
                violations += 1;
            }
            checked += 1;
        }
    }
    check(
        acc_ok && violations == 0,
        format!("held-out accuracy {}; pseudometric violations {violations}/{checked} pairs", acc.join(", ")),
    )
}

// ---------------------------------------------------------------- 9

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(bench: &Result<BenchmarkOutcome, String>, first: &Path, second: &Path) -> Verdict {
    bench.as_ref().map_err(|e| e.clone())?;
    run_benchmark(&BenchmarkConfig::default(), Some(second), 1).map_err(|e| e.to_string())?;
    let (a, b) = (files_under(first), files_under(second));
    if a != b {
        return Err(format!("file sets differ: {} vs {} files", a.len(), b.len()));
    }
    let mut differing = Vec::new();
    let mut compared = 0;
    for rel in &a {
        if rel == Path::new("speed.json") {
            continue;
        }
        compared += 1;
        if fs::read(first.join(rel)).ok() != fs::read(second.join(rel)).ok() {
            differing.push(rel.display().to_string());
        }
    }
    check(
        differing.is_empty() && compared > 0,
        format!("{compared} files compared (speed.json excluded), differing: {differing:?}"),
    )
}
