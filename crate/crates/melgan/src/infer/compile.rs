//! Autodiff-free generator forward path with weight norm pre-folded and all
//! scratch buffers sized up front: after construction, synthesis performs no
//! allocation (single-threaded mode).

use crate::arch::generator::GeneratorPlan;
use crate::arch::{GeneratorConfig, ModelParams};
use crate::audio::{AudioClip, MelSpectrogram};
use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{ConvSpec, PaddingMode};

struct FoldedLayer {
    w: Vec<f32>,
    bias: Vec<f32>,
    spec: ConvSpec,
}

#[derive(Clone, Copy, Debug)]
enum Step {
    Pad {
        src: usize,
        dst: usize,
        pad: usize,
        mode: PaddingMode,
    },
    Conv {
        src: usize,
        dst: usize,
        layer: usize,
    },
    ConvT {
        src: usize,
        dst: usize,
        layer: usize,
    },
    LeakyInto {
        src: usize,
        dst: usize,
        slope: f32,
    },
    AddAssign {
        dst: usize,
        src: usize,
    },
    Tanh {
        buf: usize,
    },
}

/// Immutable compiled plan; share freely across threads. Each thread brings
/// its own [`SynthScratch`].
pub struct CompiledGenerator {
    cfg: GeneratorConfig,
    layers: Vec<FoldedLayer>,
    steps: Vec<Step>,
    /// channel count per buffer
    channels: Vec<usize>,
    /// buffer capacities (f32 counts) for `max_frames`
    capacities: Vec<usize>,
    input_buf: usize,
    output_buf: usize,
    max_frames: usize,
    threads: usize,
}

/// Per-thread workspace for a [`CompiledGenerator`].
pub struct SynthScratch {
    bufs: Vec<Vec<f32>>,
    lens: Vec<usize>,
}

struct PlanBuilder<'p> {
    params: &'p ModelParams,
    layers: Vec<FoldedLayer>,
    steps: Vec<Step>,
    channels: Vec<usize>,
}

impl<'p> PlanBuilder<'p> {
    fn new_buf(&mut self, channels: usize) -> usize {
        self.channels.push(channels);
        self.channels.len() - 1
    }

    fn fold_layer(&mut self, name: &str, spec: &ConvSpec) -> Result<usize> {
        let layer = self.params.get(name).ok_or_else(|| Error::InvalidArg {
            op: "compile",
            reason: format!("model params have no layer `{name}`"),
        })?;
        if layer.v.shape() != spec.weight_shape() {
            return Err(Error::InvalidArg {
                op: "compile",
                reason: format!("layer `{name}`: weight shape mismatch"),
            });
        }
        let mut w = vec![0.0f32; layer.v.numel()];
        kernels::wn_fold(layer.v.data(), layer.g.data(), layer.v.shape().batch, &mut w)?;
        self.layers.push(FoldedLayer {
            w,
            bias: layer.bias.data().to_vec(),
            spec: *spec,
        });
        Ok(self.layers.len() - 1)
    }

    /// Emits pad (if needed) + conv; returns the output buffer.
    fn conv(&mut self, name: &str, spec: &ConvSpec, src: usize) -> Result<usize> {
        let layer = self.fold_layer(name, spec)?;
        if spec.transposed {
            let dst = self.new_buf(spec.out_channels);
            self.steps.push(Step::ConvT { src, dst, layer });
            Ok(dst)
        } else {
            let mut conv_src = src;
            if spec.padding > 0 {
                let padded = self.new_buf(self.channels[src]);
                self.steps.push(Step::Pad {
                    src,
                    dst: padded,
                    pad: spec.padding,
                    mode: spec.padding_mode,
                });
                conv_src = padded;
            }
            let dst = self.new_buf(spec.out_channels);
            self.steps.push(Step::Conv {
                src: conv_src,
                dst,
                layer,
            });
            Ok(dst)
        }
    }

    fn leaky(&mut self, src: usize, slope: f32) -> usize {
        let dst = self.new_buf(self.channels[src]);
        self.steps.push(Step::LeakyInto { src, dst, slope });
        dst
    }
}

/// Output time of one step given its input time. Regular convs see padding
/// as a separate step, so their spec padding is applied by `Pad`.
fn step_out_time(step: &Step, layers: &[FoldedLayer], t_in: usize) -> Result<usize> {
    Ok(match step {
        Step::Pad { pad, .. } => t_in + 2 * pad,
        Step::Conv { layer, .. } => {
            let s = &layers[*layer].spec;
            let eff = s.effective_kernel();
            if t_in < eff {
                return Err(Error::InvalidArg {
                    op: "synthesize",
                    reason: format!("padded time {t_in} shorter than kernel extent {eff}"),
                });
            }
            (t_in - eff) / s.stride + 1
        }
        Step::ConvT { layer, .. } => layers[*layer].spec.out_time(t_in)?,
        Step::LeakyInto { .. } | Step::AddAssign { .. } | Step::Tanh { .. } => t_in,
    })
}

impl CompiledGenerator {
    /// Folds weight norm out of `params` and lays out scratch for inputs of
    /// up to `max_frames` mel frames.
    pub fn compile(
        params: &ModelParams,
        cfg: &GeneratorConfig,
        max_frames: usize,
    ) -> Result<Self> {
        if max_frames == 0 {
            return Err(Error::InvalidArg {
                op: "compile",
                reason: "max_frames must be >= 1".into(),
            });
        }
        let plan = GeneratorPlan::new(cfg)?;
        let mut b = PlanBuilder {
            params,
            layers: Vec::new(),
            steps: Vec::new(),
            channels: Vec::new(),
        };
        let input_buf = b.new_buf(cfg.mel_channels);
        let mut h = b.conv(&plan.pre.name, &plan.pre.spec, input_buf)?;
        for stage in &plan.stages {
            h = b.leaky(h, cfg.leaky_slope);
            h = b.conv(&stage.up.name, &stage.up.spec, h)?;
            for block in &stage.blocks {
                let mut path = b.leaky(h, cfg.leaky_slope);
                path = b.conv(&block.dilated.name, &block.dilated.spec, path)?;
                path = b.leaky(path, cfg.leaky_slope);
                path = b.conv(&block.pointwise.name, &block.pointwise.spec, path)?;
                let skip = b.conv(&block.shortcut.name, &block.shortcut.spec, h)?;
                b.steps.push(Step::AddAssign {
                    dst: path,
                    src: skip,
                });
                h = path;
            }
        }
        h = b.leaky(h, cfg.leaky_slope);
        h = b.conv(&plan.post.name, &plan.post.spec, h)?;
        b.steps.push(Step::Tanh { buf: h });

        // size every buffer by walking the plan at max_frames
        let mut times = vec![0usize; b.channels.len()];
        times[input_buf] = max_frames;
        for step in &b.steps {
            let (src, dst) = step_bufs(step);
            let t = step_out_time(step, &b.layers, times[src])?;
            times[dst] = times[dst].max(t);
        }
        let capacities: Vec<usize> = b
            .channels
            .iter()
            .zip(&times)
            .map(|(c, t)| c * t)
            .collect();

        Ok(CompiledGenerator {
            cfg: cfg.clone(),
            layers: b.layers,
            steps: b.steps,
            channels: b.channels,
            capacities,
            input_buf,
            output_buf: h,
            max_frames,
            threads: 1,
        })
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = kernels::clamp_threads(threads);
        self
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn max_frames(&self) -> usize {
        self.max_frames
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn upsampling(&self) -> usize {
        self.cfg.total_upsampling()
    }

    pub fn make_scratch(&self) -> SynthScratch {
        SynthScratch {
            bufs: self.capacities.iter().map(|&c| vec![0.0; c]).collect(),
            lens: vec![0; self.capacities.len()],
        }
    }

    /// Mel -> waveform into a caller-owned buffer. Reuses `out`'s capacity;
    /// steady-state calls allocate nothing (threads = 1).
    pub fn synthesize_into(
        &self,
        scratch: &mut SynthScratch,
        mel: &MelSpectrogram,
        out: &mut Vec<f32>,
    ) -> Result<()> {
        let shape = mel.values.shape();
        if shape.batch != 1 {
            return Err(Error::DimMismatch {
                op: "synthesize",
                axis: "batch",
                expected: 1,
                actual: shape.batch,
            });
        }
        if shape.channels != self.cfg.mel_channels {
            return Err(Error::DimMismatch {
                op: "synthesize",
                axis: "channels",
                expected: self.cfg.mel_channels,
                actual: shape.channels,
            });
        }
        if shape.time > self.max_frames {
            return Err(Error::InvalidArg {
                op: "synthesize",
                reason: format!(
                    "{} frames exceed compiled max_frames {}",
                    shape.time, self.max_frames
                ),
            });
        }
        debug_assert_eq!(scratch.bufs.len(), self.capacities.len());

        let frames = shape.time;
        let in_len = self.cfg.mel_channels * frames;
        scratch.bufs[self.input_buf][..in_len].copy_from_slice(mel.values.data());
        scratch.lens[self.input_buf] = frames;

        for step in &self.steps {
            let (src, dst) = step_bufs(step);
            let t_in = scratch.lens[src];
            let t_out = step_out_time(step, &self.layers, t_in)?;
            scratch.lens[dst] = t_out;
            match *step {
                Step::Pad { src, dst, pad, mode } => {
                    let planes = self.channels[src];
                    let (s, d) = two_bufs(&mut scratch.bufs, src, dst);
                    kernels::pad1d(&s[..planes * t_in], planes, t_in, pad, mode, &mut d[..planes * t_out])?;
                }
                Step::Conv { src, dst, layer } => {
                    let l = &self.layers[layer];
                    let geom = kernels::ConvGeom {
                        batch: 1,
                        in_channels: l.spec.in_channels,
                        time: t_in,
                        out_channels: l.spec.out_channels,
                        kernel: l.spec.kernel_size,
                        stride: l.spec.stride,
                        dilation: l.spec.dilation,
                        groups: l.spec.groups,
                        out_time: t_out,
                    };
                    let (s, d) = two_bufs(&mut scratch.bufs, src, dst);
                    kernels::conv1d_forward(
                        &s[..l.spec.in_channels * t_in],
                        &l.w,
                        Some(&l.bias),
                        &geom,
                        &mut d[..l.spec.out_channels * t_out],
                        self.threads,
                    );
                }
                Step::ConvT { src, dst, layer } => {
                    let l = &self.layers[layer];
                    let geom = kernels::ConvTGeom {
                        batch: 1,
                        in_channels: l.spec.in_channels,
                        time: t_in,
                        out_channels: l.spec.out_channels,
                        kernel: l.spec.kernel_size,
                        stride: l.spec.stride,
                        padding: l.spec.padding,
                        groups: l.spec.groups,
                        out_time: t_out,
                    };
                    let (s, d) = two_bufs(&mut scratch.bufs, src, dst);
                    kernels::convt1d_forward(
                        &s[..l.spec.in_channels * t_in],
                        &l.w,
                        Some(&l.bias),
                        &geom,
                        &mut d[..l.spec.out_channels * t_out],
                        self.threads,
                    );
                }
                Step::LeakyInto { src, dst, slope } => {
                    let n = self.channels[src] * t_in;
                    let (s, d) = two_bufs(&mut scratch.bufs, src, dst);
                    kernels::leaky_relu_forward(&s[..n], slope, &mut d[..n]);
                }
                Step::AddAssign { dst, src } => {
                    let n = self.channels[src] * t_in;
                    let (s, d) = two_bufs(&mut scratch.bufs, src, dst);
                    for (dv, &sv) in d[..n].iter_mut().zip(&s[..n]) {
                        *dv += sv;
                    }
                }
                Step::Tanh { buf } => {
                    let n = self.channels[buf] * t_in;
                    let b = &mut scratch.bufs[buf];
                    for v in &mut b[..n] {
                        *v = v.tanh();
                    }
                }
            }
        }

        let out_len = scratch.lens[self.output_buf];
        debug_assert_eq!(out_len, frames * self.upsampling());
        out.clear();
        out.extend_from_slice(&scratch.bufs[self.output_buf][..out_len]);
        Ok(())
    }

    /// Convenience wrapper returning a fresh clip.
    pub fn synthesize(
        &self,
        scratch: &mut SynthScratch,
        mel: &MelSpectrogram,
        sample_rate: u32,
    ) -> Result<AudioClip> {
        let mut samples = Vec::new();
        self.synthesize_into(scratch, mel, &mut samples)?;
        Ok(AudioClip::new(samples, sample_rate))
    }
}

fn step_bufs(step: &Step) -> (usize, usize) {
    match *step {
        Step::Pad { src, dst, .. }
        | Step::Conv { src, dst, .. }
        | Step::ConvT { src, dst, .. }
        | Step::LeakyInto { src, dst, .. } => (src, dst),
        Step::AddAssign { dst, src } => (src, dst),
        Step::Tanh { buf } => (buf, buf),
    }
}

fn two_bufs(bufs: &mut [Vec<f32>], a: usize, b: usize) -> (&Vec<f32>, &mut Vec<f32>) {
    debug_assert_ne!(a, b);
    if a < b {
        let (x, y) = bufs.split_at_mut(b);
        (&x[a], &mut y[0])
    } else {
        let (x, y) = bufs.split_at_mut(a);
        (&y[0], &mut x[b])
    }
}
