//! Short-time Fourier transform magnitudes (Hann window, reflect-centered).

use rustfft::num_complex::Complex32;
use rustfft::FftPlanner;

use super::mel::MelConfig;
use super::wav::AudioClip;
use crate::error::{Error, Result};
use crate::kernels::reflect_index;
use crate::tensor::{Shape, Tensor};

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .map(|v| v as f32)
        .collect()
}

/// Signal padded by `pad` reflected samples on each side.
pub fn reflect_pad_signal(x: &[f32], pad: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(x.len() + 2 * pad);
    for i in -(pad as isize)..(x.len() + pad) as isize {
        out.push(x[reflect_index(i, x.len())]);
    }
    out
}

/// Windowed STFT magnitudes: `[1, n_fft/2 + 1, floor(len/hop) + 1]`.
///
/// The signal is reflect-padded by n_fft/2 on each side so frame `t` is
/// centered on sample `t * hop`.
pub fn stft_magnitude(clip: &AudioClip, cfg: &MelConfig) -> Result<Tensor> {
    cfg.validate()?;
    if clip.samples.is_empty() {
        return Err(Error::InvalidArg {
            op: "stft_magnitude",
            reason: "clip must contain at least one sample".into(),
        });
    }
    let n_fft = cfg.n_fft;
    let half = n_fft / 2;
    let frames = clip.samples.len() / cfg.hop + 1;
    let bins = half + 1;

    let padded = reflect_pad_signal(&clip.samples, half);
    let win = hann_window(cfg.win_length);
    let offset = (n_fft - cfg.win_length) / 2;

    let mut planner = FftPlanner::<f32>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut buf = vec![Complex32::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex32::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let mut out = Tensor::zeros(Shape::new(1, bins, frames));
    for t in 0..frames {
        let start = t * cfg.hop;
        buf.iter_mut().for_each(|c| *c = Complex32::new(0.0, 0.0));
        for (i, &w) in win.iter().enumerate() {
            buf[offset + i] = Complex32::new(padded[start + offset + i] * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        let data = out.data_mut();
        for (b, c) in buf.iter().take(bins).enumerate() {
            data[b * frames + t] = c.norm();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_pad_bounces() {
        assert_eq!(reflect_pad_signal(&[1.0, 2.0, 3.0], 2), vec![3.0, 2.0, 1.0, 2.0, 3.0, 2.0, 1.0]);
        // pad wider than the signal keeps bouncing
        assert_eq!(
            reflect_pad_signal(&[1.0, 2.0], 3),
            vec![2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0]
        );
        assert_eq!(reflect_pad_signal(&[5.0], 2), vec![5.0; 5]);
    }

    #[test]
    fn zero_signal_gives_zero_magnitudes() {
        let cfg = MelConfig::default();
        let clip = AudioClip::new(vec![0.0; 1024], 22050);
        let mag = stft_magnitude(&clip, &cfg).unwrap();
        assert!(mag.data().iter().all(|&v| v == 0.0));
        assert_eq!(mag.shape(), Shape::new(1, 513, 5));
    }

    #[test]
    fn frame_count_follows_hop_law() {
        let cfg = MelConfig::default();
        for len in [1usize, 255, 256, 257, 8192] {
            let clip = AudioClip::new(vec![0.1; len], 22050);
            let mag = stft_magnitude(&clip, &cfg).unwrap();
            assert_eq!(mag.shape().time, len / 256 + 1, "len={len}");
        }
    }

    #[test]
    fn bin_centered_sine_peaks_at_its_bin() {
        let cfg = MelConfig::default();
        let sr = cfg.sample_rate as f64;
        let k = 40; // bin index
        let freq = k as f64 * sr / cfg.n_fft as f64;
        let n = 4096;
        let samples: Vec<f32> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr).sin() as f32)
            .collect();
        let mag = stft_magnitude(&AudioClip::new(samples, cfg.sample_rate), &cfg).unwrap();
        let (bins, frames) = (mag.shape().channels, mag.shape().time);
        // interior frame, away from edge padding
        let t = frames / 2;
        let mut best = 0;
        for b in 0..bins {
            if mag.data()[b * frames + t] > mag.data()[best * frames + t] {
                best = b;
            }
        }
        assert_eq!(best, k);
    }
}
