//! Generator: 7x1 input conv, transposed-conv upsampling stages each followed
//! by a dilated residual stack, 7x1 output conv, tanh.

use std::collections::BTreeMap;

use rand::Rng;

use super::backend::{Backend, EagerBackend, GraphBackend, WnNodeIds};
use super::config::{GeneratorConfig, NormKind};
use super::params::{init_wn_layer, ModelParams};
use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::kernels;
use crate::tensor::{ConvSpec, Tensor};

/// Kernel of the input and output convolutions.
pub const IO_KERNEL: usize = 7;

#[derive(Clone, Debug)]
pub(crate) struct LayerPlan {
    pub name: String,
    pub spec: ConvSpec,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockPlan {
    pub dilated: LayerPlan,
    pub pointwise: LayerPlan,
    pub shortcut: LayerPlan,
}

#[derive(Clone, Debug)]
pub(crate) struct StagePlan {
    pub up: LayerPlan,
    pub blocks: Vec<BlockPlan>,
}

#[derive(Clone, Debug)]
pub(crate) struct GeneratorPlan {
    pub pre: LayerPlan,
    pub stages: Vec<StagePlan>,
    pub post: LayerPlan,
}

impl GeneratorPlan {
    pub fn new(cfg: &GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let pre = LayerPlan {
            name: "gen.pre".into(),
            spec: ConvSpec::conv(cfg.mel_channels, cfg.base_width, IO_KERNEL)
                .padding(IO_KERNEL / 2)
                .reflect(),
        };
        let mut stages = Vec::with_capacity(cfg.num_stages());
        for (i, &ratio) in cfg.upsample_ratios.iter().enumerate() {
            let kernel = cfg.stage_kernel(i);
            let (w_in, w_out) = (cfg.width_in(i), cfg.width_out(i));
            let up = LayerPlan {
                name: format!("gen.up{i}"),
                spec: ConvSpec::conv_transpose(w_in, w_out, kernel)
                    .stride(ratio)
                    .padding((kernel - ratio) / 2),
            };
            let blocks = cfg
                .resblock_dilations
                .iter()
                .enumerate()
                .map(|(j, &d)| BlockPlan {
                    dilated: LayerPlan {
                        name: format!("gen.s{i}.b{j}.dil"),
                        spec: ConvSpec::conv(w_out, w_out, cfg.resblock_kernel)
                            .dilation(d)
                            .padding(d * (cfg.resblock_kernel - 1) / 2)
                            .reflect(),
                    },
                    pointwise: LayerPlan {
                        name: format!("gen.s{i}.b{j}.pw"),
                        spec: ConvSpec::conv(w_out, w_out, 1),
                    },
                    shortcut: LayerPlan {
                        name: format!("gen.s{i}.b{j}.skip"),
                        spec: ConvSpec::conv(w_out, w_out, 1),
                    },
                })
                .collect();
            stages.push(StagePlan { up, blocks });
        }
        let post = LayerPlan {
            name: "gen.post".into(),
            spec: ConvSpec::conv(cfg.width_out(cfg.num_stages() - 1), 1, IO_KERNEL)
                .padding(IO_KERNEL / 2)
                .reflect(),
        };
        Ok(GeneratorPlan { pre, stages, post })
    }

    /// Layers in forward order (fixes parameter/checkpoint layout).
    pub fn layers(&self) -> Vec<&LayerPlan> {
        let mut out = vec![&self.pre];
        for stage in &self.stages {
            out.push(&stage.up);
            for b in &stage.blocks {
                out.push(&b.dilated);
                out.push(&b.pointwise);
                out.push(&b.shortcut);
            }
        }
        out.push(&self.post);
        out
    }
}

pub fn build_generator<R: Rng>(cfg: &GeneratorConfig, rng: &mut R) -> Result<ModelParams> {
    let plan = GeneratorPlan::new(cfg)?;
    let mut params = ModelParams::new();
    for layer in plan.layers() {
        params.insert(layer.name.clone(), init_wn_layer(&layer.spec, rng)?)?;
    }
    Ok(params)
}

pub(crate) fn generator_topology<B: Backend>(
    b: &mut B,
    plan: &GeneratorPlan,
    slope: f32,
    x: B::Handle,
) -> Result<B::Handle> {
    let mut h = b.conv(&plan.pre.name, &plan.pre.spec, x)?;
    for stage in &plan.stages {
        h = b.leaky_relu(h, slope)?;
        h = b.conv(&stage.up.name, &stage.up.spec, h)?;
        for block in &stage.blocks {
            let mut path = b.leaky_relu(h, slope)?;
            path = b.conv(&block.dilated.name, &block.dilated.spec, path)?;
            path = b.leaky_relu(path, slope)?;
            path = b.conv(&block.pointwise.name, &block.pointwise.spec, path)?;
            let skip = b.conv(&block.shortcut.name, &block.shortcut.spec, h)?;
            h = b.add(skip, path)?;
        }
    }
    h = b.leaky_relu(h, slope)?;
    h = b.conv(&plan.post.name, &plan.post.spec, h)?;
    b.tanh(h)
}

fn check_mel_channels(cfg: &GeneratorConfig, channels: usize) -> Result<()> {
    if channels != cfg.mel_channels {
        return Err(Error::DimMismatch {
            op: "generator_forward",
            axis: "channels",
            expected: cfg.mel_channels,
            actual: channels,
        });
    }
    Ok(())
}

/// Deterministic mel -> waveform forward on plain tensors.
/// Output is `[batch, 1, total_upsampling * frames]`.
pub fn generator_forward(
    params: &ModelParams,
    cfg: &GeneratorConfig,
    mel: &MelSpectrogram,
) -> Result<Tensor> {
    let plan = GeneratorPlan::new(cfg)?;
    check_mel_channels(cfg, mel.values.shape().channels)?;
    let mut backend = EagerBackend::new(params, NormKind::Weight, kernels::max_threads());
    let x = backend.put(mel.values.clone());
    let out = generator_topology(&mut backend, &plan, cfg.leaky_slope, x)?;
    Ok(backend.take(out))
}

/// Same forward recorded on an autodiff graph. `ids` comes from
/// [`super::backend::register_params`].
pub fn generator_forward_graph(
    graph: &mut Graph,
    ids: &BTreeMap<String, WnNodeIds>,
    cfg: &GeneratorConfig,
    mel: NodeId,
) -> Result<NodeId> {
    let plan = GeneratorPlan::new(cfg)?;
    check_mel_channels(cfg, graph.value(mel).shape().channels)?;
    let mut backend = GraphBackend {
        graph,
        ids,
        norm: NormKind::Weight,
    };
    generator_topology(&mut backend, &plan, cfg.leaky_slope, mel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> GeneratorConfig {
        GeneratorConfig {
            mel_channels: 3,
            base_width: 8,
            upsample_ratios: vec![2, 2],
            upsample_kernels: None,
            resblock_kernel: 3,
            resblock_dilations: vec![1, 3],
            leaky_slope: 0.2,
        }
    }

    fn mel_of(shape: Shape, seed: u64) -> MelSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MelSpectrogram {
            values: Tensor::randn(shape, 1.0, &mut rng),
        }
    }

    #[test]
    fn tiny_generator_upsamples_4x() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = build_generator(&cfg, &mut rng).unwrap();
        for t in [1usize, 2, 5, 16] {
            let mel = mel_of(Shape::new(1, 3, t), t as u64);
            let out = generator_forward(&params, &cfg, &mel).unwrap();
            assert_eq!(out.shape(), Shape::new(1, 1, 4 * t));
        }
    }

    #[test]
    fn output_is_within_tanh_range() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = build_generator(&cfg, &mut rng).unwrap();
        let mel = mel_of(Shape::new(2, 3, 9), 7);
        let out = generator_forward(&params, &cfg, &mel).unwrap();
        assert!(out.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn batch_forward_stacks_independent_items() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = build_generator(&cfg, &mut rng).unwrap();
        let a = mel_of(Shape::new(1, 3, 6), 10);
        let b = mel_of(Shape::new(1, 3, 6), 11);
        let mut stacked = Tensor::zeros(Shape::new(2, 3, 6));
        stacked.data_mut()[..18].copy_from_slice(a.values.data());
        stacked.data_mut()[18..].copy_from_slice(b.values.data());
        let out_ab = generator_forward(&params, &cfg, &MelSpectrogram { values: stacked }).unwrap();
        let out_a = generator_forward(&params, &cfg, &a).unwrap();
        let out_b = generator_forward(&params, &cfg, &b).unwrap();
        assert_eq!(&out_ab.data()[..out_a.numel()], out_a.data());
        assert_eq!(&out_ab.data()[out_a.numel()..], out_b.data());
    }

    #[test]
    fn channel_mismatch_rejected() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = build_generator(&cfg, &mut rng).unwrap();
        let mel = mel_of(Shape::new(1, 5, 4), 0);
        assert!(matches!(
            generator_forward(&params, &cfg, &mel),
            Err(Error::DimMismatch { axis: "channels", .. })
        ));
    }

    #[test]
    fn graph_forward_matches_eager() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = build_generator(&cfg, &mut rng).unwrap();
        let mel = mel_of(Shape::new(1, 3, 4), 20);
        let eager = generator_forward(&params, &cfg, &mel).unwrap();

        let mut graph = Graph::new();
        let ids = super::super::backend::register_params(&mut graph, &params, false);
        let x = graph.leaf(mel.values.clone());
        let y = generator_forward_graph(&mut graph, &ids, &cfg, x).unwrap();
        assert_eq!(graph.value(y).data(), eager.data());
    }

    #[test]
    fn scaling_v_leaves_forward_unchanged() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut params = build_generator(&cfg, &mut rng).unwrap();
        let mel = mel_of(Shape::new(1, 3, 5), 30);
        let before = generator_forward(&params, &cfg, &mel).unwrap();
        for v in params.get_mut("gen.s0.b0.dil").unwrap().v.data_mut() {
            *v *= 3.0;
        }
        let after = generator_forward(&params, &cfg, &mel).unwrap();
        let max_diff = before
            .data()
            .iter()
            .zip(after.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff < 1e-5, "max diff {max_diff}");
    }
}
