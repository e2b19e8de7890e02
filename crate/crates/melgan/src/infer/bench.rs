//! Synthesis throughput measurement (median over repeats).

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::compile::CompiledGenerator;
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Published single-core CPU throughput for this architecture, printed next
/// to measured numbers for orientation.
pub const REFERENCE_CPU_KHZ: f64 = 51.9;

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub samples_generated: u64,
    pub wall_seconds: f64,
    pub throughput_khz: f64,
    pub real_time_factor: f64,
    pub sample_rate: u32,
    pub threads: usize,
    pub warmup: usize,
    pub repeats: usize,
    pub reference_cpu_khz: f64,
}

impl BenchReport {
    pub fn human_table(&self) -> String {
        format!(
            "frames            {:>12}\n\
             samples/call      {:>12}\n\
             median wall       {:>12.4} s\n\
             throughput        {:>12.1} kHz\n\
             real-time factor  {:>12.2}x at {} Hz\n\
             threads           {:>12}\n\
             reference         {:>12.1} kHz (published single-core CPU figure)",
            self.frames,
            self.samples_generated,
            self.wall_seconds,
            self.throughput_khz,
            self.real_time_factor,
            self.sample_rate,
            self.threads,
            self.reference_cpu_khz,
        )
    }
}

/// Times `repeats` synthesize calls on a seeded random mel after `warmup`
/// untimed calls; reports the median.
pub fn benchmark(
    gen: &CompiledGenerator,
    frames: usize,
    repeats: usize,
    warmup: usize,
    sample_rate: u32,
    seed: u64,
) -> Result<BenchReport> {
    if repeats < 3 {
        return Err(Error::InvalidArg {
            op: "benchmark",
            reason: format!("need >= 3 repeats, got {repeats}"),
        });
    }
    if warmup < 1 {
        return Err(Error::InvalidArg {
            op: "benchmark",
            reason: "need >= 1 warmup iteration".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mel = MelSpectrogram {
        values: Tensor::randn(
            Shape::new(1, gen.config().mel_channels, frames),
            2.0,
            &mut rng,
        ),
    };
    let mut scratch = gen.make_scratch();
    let mut out = Vec::new();
    for _ in 0..warmup {
        gen.synthesize_into(&mut scratch, &mel, &mut out)?;
    }
    let mut walls = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        gen.synthesize_into(&mut scratch, &mel, &mut out)?;
        walls.push(t0.elapsed().as_secs_f64());
    }
    walls.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = walls[walls.len() / 2];
    let samples = out.len() as u64;
    let throughput_khz = samples as f64 / median / 1000.0;
    Ok(BenchReport {
        frames,
        samples_generated: samples,
        wall_seconds: median,
        throughput_khz,
        real_time_factor: throughput_khz * 1000.0 / sample_rate as f64,
        sample_rate,
        threads: gen.threads(),
        warmup,
        repeats,
        reference_cpu_khz: REFERENCE_CPU_KHZ,
    })
}
