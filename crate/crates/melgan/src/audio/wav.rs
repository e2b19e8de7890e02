//! Minimal RIFF/WAVE reader and PCM-16 writer.
//!
//! Reads PCM-16 and 32-bit-float files, mono or first channel of
//! multi-channel. Writes mono PCM-16. Samples are `value / 32768` so a
//! write/read round trip stays within one quantization step.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn wav_err(path: &Path, chunk: &str, reason: impl Into<String>) -> Error {
    Error::Wav {
        path: path.display().to_string(),
        chunk: chunk.to_string(),
        reason: reason.into(),
    }
}

fn take<'a>(path: &Path, chunk: &str, buf: &'a [u8], at: usize, len: usize) -> Result<&'a [u8]> {
    buf.get(at..at + len)
        .ok_or_else(|| wav_err(path, chunk, "truncated"))
}

fn u16_at(path: &Path, chunk: &str, buf: &[u8], at: usize) -> Result<u16> {
    let b = take(path, chunk, buf, at, 2)?;
    Ok(u16::from_le_bytes([b[0], b[1]]))
}

fn u32_at(path: &Path, chunk: &str, buf: &[u8], at: usize) -> Result<u32> {
    let b = take(path, chunk, buf, at, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if take(path, "RIFF", &bytes, 0, 4)? != b"RIFF" {
        return Err(wav_err(path, "RIFF", "missing RIFF tag"));
    }
    if take(path, "WAVE", &bytes, 8, 4)? != b"WAVE" {
        return Err(wav_err(path, "WAVE", "missing WAVE tag"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = take(path, "chunk", &bytes, pos, 4)?;
        let size = u32_at(path, "chunk", &bytes, pos + 4)? as usize;
        let body = take(
            path,
            std::str::from_utf8(id).unwrap_or("chunk"),
            &bytes,
            pos + 8,
            size,
        )?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(wav_err(path, "fmt ", "chunk shorter than 16 bytes"));
                }
                let format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos += 8 + size + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| wav_err(path, "fmt ", "missing"))?;
    let data = data.ok_or_else(|| wav_err(path, "data", "missing"))?;
    if channels == 0 {
        return Err(wav_err(path, "fmt ", "zero channels"));
    }
    let ch = channels as usize;
    let samples = match (format, bits) {
        (1, 16) => {
            let frames = data.len() / (2 * ch);
            let mut out = Vec::with_capacity(frames);
            for f in 0..frames {
                let at = f * 2 * ch;
                let v = i16::from_le_bytes([data[at], data[at + 1]]);
                out.push(v as f32 / 32768.0);
            }
            out
        }
        (3, 32) => {
            let frames = data.len() / (4 * ch);
            let mut out = Vec::with_capacity(frames);
            for f in 0..frames {
                let at = f * 4 * ch;
                let v = f32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]]);
                out.push(v.clamp(-1.0, 1.0));
            }
            out
        }
        _ => {
            return Err(wav_err(
                path,
                "fmt ",
                format!("unsupported codec: format={format} bits={bits}"),
            ))
        }
    };
    Ok(AudioClip::new(samples, rate))
}

/// Writes mono PCM-16 (samples clipped to [-1, 1]).
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let n = clip.samples.len();
    let data_bytes = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round() as i32;
        let q = q.clamp(i16::MIN as i32, i16::MAX as i32) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}
