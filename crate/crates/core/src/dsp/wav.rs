//! 16-bit PCM mono RIFF/WAV files. Samples map to [-1, 1) by division by
//! 32768; writing clamps out-of-range values.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

fn spec(sample_rate: u32) -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    }
}

pub fn sample_to_pcm(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn pcm_to_sample(v: i16) -> f64 {
    f64::from(v) / 32768.0
}

fn write_to<W: Write + Seek>(writer: W, clip: &AudioClip) -> Result<()> {
    let mut w = WavWriter::new(writer, spec(clip.sample_rate()))?;
    for s in clip.samples() {
        w.write_sample(sample_to_pcm(*s))?;
    }
    w.finalize()?;
    Ok(())
}

fn read_from<R: Read>(reader: R) -> Result<AudioClip> {
    let r = WavReader::new(reader)?;
    let s = r.spec();
    if s.channels != 1 || s.bits_per_sample != 16 || s.sample_format != SampleFormat::Int {
        return Err(Error::Data(format!(
            "expected 16-bit PCM mono, found {} channel(s) at {} bits ({:?})",
            s.channels, s.bits_per_sample, s.sample_format
        )));
    }
    let samples = r
        .into_samples::<i16>()
        .map(|v| v.map(pcm_to_sample))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AudioClip::new(samples, s.sample_rate)
}

pub fn encode_wav(clip: &AudioClip) -> Result<Vec<u8>> {
    let mut cursor = Cursor::new(Vec::new());
    write_to(&mut cursor, clip)?;
    Ok(cursor.into_inner())
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    read_from(Cursor::new(bytes))
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let bytes = encode_wav(clip)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}
