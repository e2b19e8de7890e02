//! Log-mel features: the generator's conditioning input at 256x lower
//! temporal resolution than the waveform.

use super::stft::stft_magnitude;
use super::wav::AudioClip;
use crate::config::Kv;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// The hop is pinned: one mel frame per 256 waveform samples, matching the
/// generator's total upsampling factor.
pub const MEL_HOP: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    pub n_mels: usize,
    pub fmin: f32,
    pub fmax: f32,
    pub log_floor: f32,
}

impl Default for MelConfig {
    fn default() -> Self {
        MelConfig {
            sample_rate: 22050,
            n_fft: 1024,
            hop: MEL_HOP,
            win_length: 1024,
            n_mels: 80,
            fmin: 0.0,
            fmax: 11025.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidArg {
            op: "MelConfig",
            reason,
        };
        if self.hop != MEL_HOP {
            return Err(fail(format!("hop must be {MEL_HOP}, got {}", self.hop)));
        }
        if self.n_fft == 0 || !self.n_fft.is_multiple_of(2) {
            return Err(fail(format!("n_fft must be even and positive, got {}", self.n_fft)));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(fail(format!(
                "win_length must be in 1..=n_fft, got {} (n_fft {})",
                self.win_length, self.n_fft
            )));
        }
        if self.n_mels == 0 {
            return Err(fail("n_mels must be >= 1".into()));
        }
        let nyquist = self.sample_rate as f32 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(fail(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(fail(format!("log_floor must be positive, got {}", self.log_floor)));
        }
        Ok(())
    }

    /// Mel frames for a clip of `len` samples: ceil(len / hop), so that
    /// `hop * frames >= len > hop * (frames - 1)`.
    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    pub fn to_kv(&self, prefix: &str, kv: &mut Kv) {
        kv.set(format!("{prefix}sample_rate"), self.sample_rate);
        kv.set(format!("{prefix}n_fft"), self.n_fft);
        kv.set(format!("{prefix}hop"), self.hop);
        kv.set(format!("{prefix}win_length"), self.win_length);
        kv.set(format!("{prefix}n_mels"), self.n_mels);
        kv.set(format!("{prefix}fmin"), self.fmin);
        kv.set(format!("{prefix}fmax"), self.fmax);
        kv.set(format!("{prefix}log_floor"), self.log_floor);
    }

    pub fn from_kv(prefix: &str, kv: &Kv) -> Result<Self> {
        let cfg = MelConfig {
            sample_rate: kv.get(&format!("{prefix}sample_rate"))?,
            n_fft: kv.get(&format!("{prefix}n_fft"))?,
            hop: kv.get(&format!("{prefix}hop"))?,
            win_length: kv.get(&format!("{prefix}win_length"))?,
            n_mels: kv.get(&format!("{prefix}n_mels"))?,
            fmin: kv.get(&format!("{prefix}fmin"))?,
            fmax: kv.get(&format!("{prefix}fmax"))?,
            log_floor: kv.get(&format!("{prefix}log_floor"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Natural-log mel magnitudes, `[batch, n_mels, frames]`, floored at
/// `ln(log_floor)`.
#[derive(Clone, Debug)]
pub struct MelSpectrogram {
    pub values: Tensor,
}

impl MelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.values.shape().channels
    }

    pub fn frames(&self) -> usize {
        self.values.shape().time
    }

    pub fn batch(&self) -> usize {
        self.values.shape().batch
    }
}

fn hz_to_mel(f: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    if f < MIN_LOG_HZ {
        f / F_SP
    } else {
        MIN_LOG_MEL + (f / MIN_LOG_HZ).ln() / LOG_STEP
    }
}

fn mel_to_hz(m: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;
    if m < MIN_LOG_MEL {
        m * F_SP
    } else {
        MIN_LOG_HZ * ((m - MIN_LOG_MEL) * LOG_STEP).exp()
    }
}

const LOG_STEP: f64 = 0.06875177742094912; // ln(6.4) / 27

/// Band edge frequencies: n_mels + 2 points even in mel space.
fn band_edges(cfg: &MelConfig) -> Vec<f64> {
    let lo = hz_to_mel(cfg.fmin as f64);
    let hi = hz_to_mel(cfg.fmax as f64);
    let n = cfg.n_mels + 2;
    (0..n)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Center frequency (Hz) of each mel band.
pub fn mel_band_centers(cfg: &MelConfig) -> Vec<f32> {
    band_edges(cfg)[1..=cfg.n_mels]
        .iter()
        .map(|&f| f as f32)
        .collect()
}

/// Area-normalized triangular filterbank, row-major `[n_mels, n_fft/2 + 1]`.
pub fn mel_filterbank(cfg: &MelConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let edges = band_edges(cfg);
    let bins = cfg.n_fft / 2 + 1;
    let mut fb = vec![0.0f32; cfg.n_mels * bins];
    for m in 0..cfg.n_mels {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for b in 0..bins {
            let f = b as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
            let rise = (f - lo) / (mid - lo);
            let fall = (hi - f) / (hi - mid);
            let w = rise.min(fall).max(0.0);
            fb[m * bins + b] = (w * norm) as f32;
        }
    }
    Ok(fb)
}

/// Log-mel features for one clip: `[1, n_mels, ceil(len/hop)]`.
pub fn mel_spectrogram(clip: &AudioClip, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let fb = mel_filterbank(cfg)?;
    mel_with_filterbank(clip, cfg, &fb)
}

/// Same as [`mel_spectrogram`] with a precomputed filterbank.
pub fn mel_with_filterbank(
    clip: &AudioClip,
    cfg: &MelConfig,
    fb: &[f32],
) -> Result<MelSpectrogram> {
    let mag = stft_magnitude(clip, cfg)?;
    let bins = cfg.n_fft / 2 + 1;
    let stft_frames = mag.shape().time;
    let frames = cfg.frames_for(clip.samples.len());
    debug_assert!(frames <= stft_frames);
    let floor = cfg.log_floor.max(f32::MIN_POSITIVE);
    let mut out = Tensor::zeros(Shape::new(1, cfg.n_mels, frames));
    let data = out.data_mut();
    for m in 0..cfg.n_mels {
        let row = &fb[m * bins..(m + 1) * bins];
        for t in 0..frames {
            let mut acc = 0f64;
            for (b, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    acc += w as f64 * mag.data()[b * stft_frames + t] as f64;
                }
            }
            data[m * frames + t] = (acc as f32).max(floor).ln();
        }
    }
    Ok(MelSpectrogram { values: out })
}

/// Batched mel over `[batch, 1, time]` audio; every clip gets the same
/// frame count.
pub fn mel_from_audio_tensor(audio: &Tensor, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let shape = audio.shape();
    if shape.channels != 1 {
        return Err(Error::DimMismatch {
            op: "mel_spectrogram",
            axis: "channels",
            expected: 1,
            actual: shape.channels,
        });
    }
    let fb = mel_filterbank(cfg)?;
    let frames = cfg.frames_for(shape.time);
    let mut out = Tensor::zeros(Shape::new(shape.batch, cfg.n_mels, frames));
    for n in 0..shape.batch {
        let clip = AudioClip::new(audio.plane(n, 0).to_vec(), cfg.sample_rate);
        let mel = mel_with_filterbank(&clip, cfg, &fb)?;
        let per = cfg.n_mels * frames;
        out.data_mut()[n * per..(n + 1) * per].copy_from_slice(mel.values.data());
    }
    Ok(MelSpectrogram { values: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_hits_log_floor_everywhere() {
        let cfg = MelConfig::default();
        let clip = AudioClip::new(vec![0.0; 2560], 22050);
        let mel = mel_spectrogram(&clip, &cfg).unwrap();
        let expected = (1e-5f32).ln();
        assert!((expected - (-11.512925)).abs() < 1e-4);
        assert!(mel.values.data().iter().all(|&v| v == expected));
    }

    #[test]
    fn frame_count_is_ceil_of_len_over_hop() {
        let cfg = MelConfig::default();
        for (len, want) in [(256usize, 1usize), (8192, 32), (8191, 32), (8193, 33), (1, 1)] {
            let clip = AudioClip::new(vec![0.0; len], 22050);
            let mel = mel_spectrogram(&clip, &cfg).unwrap();
            assert_eq!(mel.frames(), want, "len={len}");
        }
    }

    #[test]
    fn filterbank_rows_nonnegative_and_nonempty() {
        let cfg = MelConfig::default();
        let fb = mel_filterbank(&cfg).unwrap();
        let bins = cfg.n_fft / 2 + 1;
        for m in 0..cfg.n_mels {
            let row = &fb[m * bins..(m + 1) * bins];
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!(row.iter().any(|&v| v > 0.0), "row {m} is all zero");
        }
    }

    #[test]
    fn sine_peaks_in_nearest_center_band() {
        let cfg = MelConfig::default();
        let sr = cfg.sample_rate as f64;
        let samples: Vec<f32> = (0..22050)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr).sin() as f32)
            .collect();
        let mel = mel_spectrogram(&AudioClip::new(samples, cfg.sample_rate), &cfg).unwrap();
        let centers = mel_band_centers(&cfg);
        let want = centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - 440.0).abs().partial_cmp(&(b.1 - 440.0).abs()).unwrap()
            })
            .unwrap()
            .0;
        let frames = mel.frames();
        let t = frames / 2;
        let mut got = 0;
        for m in 0..cfg.n_mels {
            if mel.values.data()[m * frames + t] > mel.values.data()[got * frames + t] {
                got = m;
            }
        }
        assert_eq!(got, want);
    }

    #[test]
    fn all_values_finite_and_floored() {
        let cfg = MelConfig::default();
        let samples: Vec<f32> = (0..4096).map(|i| ((i * 37) % 97) as f32 / 97.0 - 0.5).collect();
        let mel = mel_spectrogram(&AudioClip::new(samples, 22050), &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        assert!(mel.values.data().iter().all(|v| v.is_finite() && *v >= floor));
    }

    #[test]
    fn kv_round_trip() {
        let cfg = MelConfig::default();
        let mut kv = Kv::new();
        cfg.to_kv("mel.", &mut kv);
        let back = MelConfig::from_kv("mel.", &kv).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = MelConfig::default();
        cfg.hop = 128;
        assert!(cfg.validate().is_err());
        let mut cfg = MelConfig::default();
        cfg.fmax = 20000.0;
        assert!(cfg.validate().is_err());
        let mut cfg = MelConfig::default();
        cfg.win_length = 2048;
        assert!(cfg.validate().is_err());
        let mut cfg = MelConfig::default();
        cfg.log_floor = 0.0;
        assert!(cfg.validate().is_err());
    }
}
