"""Smoke test for the inpaint_rs extension.

Build and run from the repository root:

    cargo build --release -p inpaint-py --features extension-module
    python3 python/smoke_test.py

The script looks for the built library under target/release and imports it
under its module name.
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_extension():
    for name in ("libinpaint_rs.so", "libinpaint_rs.dylib", "inpaint_rs.dll"):
        lib = ROOT / "target" / "release" / name
        if lib.exists():
            break
    else:
        sys.exit("extension not built; run: cargo build --release -p inpaint-py --features extension-module")
    staged = pathlib.Path(tempfile.mkdtemp()) / "inpaint_rs.so"
    shutil.copy(lib, staged)
    spec = importlib.util.spec_from_file_location("inpaint_rs", staged)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    ir = load_extension()

    sr = 16000
    samples = [0.5 * math.sin(2 * math.pi * 440 * i / sr) for i in range(sr)]
    clip = ir.AudioClip(samples, sr)
    assert len(clip) == sr

    spec = ir.stft(clip)
    assert (spec.freq_bins, spec.frames) == (257, 126), (spec.freq_bins, spec.frames)
    back = ir.istft(spec).samples
    err = max(abs(a - b) for a, b in zip(back, samples))
    assert err < 1e-10, err

    mag = spec.magnitude()
    gl = ir.griffin_lim(mag, iterations=5, seed=1)
    assert len(gl) == sr

    mask = ir.MaskSpec(6400, 9600, sr)
    assert sum(mask.sample_mask(sr)) == 3200
    assert sum(mask.frame_mask(sr)) == 28

    wave_cfg = ir.ModelConfig.default_waveform()
    assert wave_cfg.receptive_field() >= 3200
    assert ir.ModelConfig.from_json(wave_cfg.to_json()).receptive_field() == wave_cfg.receptive_field()

    net = ir.Network(wave_cfg, seed=3)
    out = net.inpaint(clip, mask)
    outside = [i for i in range(sr) if not 6400 <= i < 9600]
    assert all(out.samples[i] == samples[i] for i in outside), "paste-back must keep known samples"

    spec_net = ir.Network(ir.ModelConfig.default_spectrogram(), seed=3)
    spec_out = spec_net.inpaint(clip, mask, griffin_lim_iterations=3)
    assert len(spec_out) == sr

    assert ir.masked_l1([1.0, 5.0, 3.0], [0.0, 0.0, 0.0], [True, False, True]) == 2.0
    assert abs(ir.ssim([float(i) for i in range(144)], [float(i) for i in range(144)], 12, 12) - 1.0) < 1e-12

    clips = ir.corpus("toy-sc", seed=4, examples_per_class=2)
    assert len(clips) == 20
    clip_id, label, split, first = clips[0]
    assert 0.5 <= max(abs(v) for v in first.samples) <= 1.0

    with tempfile.TemporaryDirectory() as tmp:
        path = str(pathlib.Path(tmp) / "clip.wav")
        ir.write_wav(path, first)
        assert ir.read_wav(path).samples == first.samples

    try:
        ir.MaskSpec(0, 100, sr)
    except ValueError:
        pass
    else:
        raise AssertionError("a mask touching the clip start must be rejected")

    print("inpaint_rs smoke test passed")


if __name__ == "__main__":
    main()
