//! Multi-scale window-based discriminator: identical strided-conv blocks
//! applied to the raw waveform and progressively average-pooled copies.

use std::collections::BTreeMap;

use rand::Rng;

use super::backend::{Backend, EagerBackend, GraphBackend, WnNodeIds};
use super::config::DiscriminatorConfig;
use super::generator::LayerPlan;
use super::params::{init_wn_layer, ModelParams};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::kernels;
use crate::tensor::{ConvSpec, Tensor};

#[derive(Clone, Debug)]
pub(crate) struct DiscriminatorPlan {
    /// One block of layers per scale; blocks share the layer chain but own
    /// separate parameters.
    pub blocks: Vec<Vec<LayerPlan>>,
}

impl DiscriminatorPlan {
    pub fn new(cfg: &DiscriminatorConfig) -> Result<Self> {
        cfg.validate()?;
        let mut blocks = Vec::with_capacity(cfg.num_scales);
        for s in 0..cfg.num_scales {
            let mut in_ch = 1usize;
            let mut layers = Vec::with_capacity(cfg.layers.len());
            for (i, l) in cfg.layers.iter().enumerate() {
                layers.push(LayerPlan {
                    name: format!("disc{s}.l{i}"),
                    spec: ConvSpec::conv(in_ch, l.out_channels, l.kernel)
                        .stride(l.stride)
                        .groups(l.groups)
                        .padding(l.kernel / 2),
                });
                in_ch = l.out_channels;
            }
            blocks.push(layers);
        }
        Ok(DiscriminatorPlan { blocks })
    }
}

pub fn build_discriminator<R: Rng>(cfg: &DiscriminatorConfig, rng: &mut R) -> Result<ModelParams> {
    let plan = DiscriminatorPlan::new(cfg)?;
    let mut params = ModelParams::new();
    for block in &plan.blocks {
        for layer in block {
            params.insert(layer.name.clone(), init_wn_layer(&layer.spec, rng)?)?;
        }
    }
    Ok(params)
}

pub(crate) fn discriminator_topology<B: Backend>(
    b: &mut B,
    plan: &DiscriminatorPlan,
    cfg: &DiscriminatorConfig,
    audio: B::Handle,
) -> Result<Vec<(B::Handle, Vec<B::Handle>)>> {
    let mut scale_input = audio;
    let mut outs = Vec::with_capacity(plan.blocks.len());
    for (s, block) in plan.blocks.iter().enumerate() {
        if s > 0 {
            scale_input = b.avg_pool(
                scale_input,
                cfg.pool_kernel,
                cfg.pool_stride,
                cfg.pool_padding,
            )?;
        }
        let mut h = scale_input;
        let mut features = Vec::with_capacity(block.len());
        for (i, layer) in block.iter().enumerate() {
            h = b.conv(&layer.name, &layer.spec, h)?;
            if i + 1 < block.len() {
                h = b.leaky_relu(h, cfg.leaky_slope)?;
            }
            features.push(h);
        }
        outs.push((h, features));
    }
    Ok(outs)
}

fn check_input(cfg: &DiscriminatorConfig, channels: usize, time: usize) -> Result<()> {
    if channels != 1 {
        return Err(Error::DimMismatch {
            op: "discriminator_forward",
            axis: "channels",
            expected: 1,
            actual: channels,
        });
    }
    let rf = cfg.block_receptive_field();
    if time < rf {
        return Err(Error::InvalidArg {
            op: "discriminator_forward",
            reason: format!("input time {time} shorter than one block receptive field {rf}"),
        });
    }
    Ok(())
}

/// Per-scale discriminator output: the 1-channel score map and every
/// intermediate feature map (one per layer; the last one is the score).
#[derive(Clone, Debug)]
pub struct ScaleOutput {
    pub score: Tensor,
    pub features: Vec<Tensor>,
}

pub fn discriminator_forward(
    params: &ModelParams,
    cfg: &DiscriminatorConfig,
    audio: &Tensor,
) -> Result<Vec<ScaleOutput>> {
    let plan = DiscriminatorPlan::new(cfg)?;
    check_input(cfg, audio.shape().channels, audio.shape().time)?;
    let mut backend = EagerBackend::new(params, cfg.norm, kernels::max_threads());
    let x = backend.put(audio.clone());
    let outs = discriminator_topology(&mut backend, &plan, cfg, x)?;
    Ok(outs
        .into_iter()
        .map(|(score, feats)| ScaleOutput {
            score: backend.tensor(score).clone(),
            features: feats
                .into_iter()
                .map(|f| backend.tensor(f).clone())
                .collect(),
        })
        .collect())
}

/// Per-scale node handles when recording on a graph.
#[derive(Clone, Debug)]
pub struct ScaleNodes {
    pub score: NodeId,
    pub features: Vec<NodeId>,
}

pub fn discriminator_forward_graph(
    graph: &mut Graph,
    ids: &BTreeMap<String, WnNodeIds>,
    cfg: &DiscriminatorConfig,
    audio: NodeId,
) -> Result<Vec<ScaleNodes>> {
    let plan = DiscriminatorPlan::new(cfg)?;
    let shape = graph.value(audio).shape();
    check_input(cfg, shape.channels, shape.time)?;
    let mut backend = GraphBackend {
        graph,
        ids,
        norm: cfg.norm,
    };
    let outs = discriminator_topology(&mut backend, &plan, cfg, audio)?;
    Ok(outs
        .into_iter()
        .map(|(score, features)| ScaleNodes { score, features })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::config::NormKind;
    use crate::tensor::Shape;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn audio(time: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::randn(Shape::new(1, 1, time), 0.5, &mut rng)
    }

    #[test]
    fn three_scales_see_halved_lengths() {
        let cfg = DiscriminatorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = build_discriminator(&cfg, &mut rng).unwrap();
        let outs = discriminator_forward(&params, &cfg, &audio(16384, 1)).unwrap();
        assert_eq!(outs.len(), 3);
        // first feature of each scale is stride-1, so it keeps the scale's length
        assert_eq!(outs[0].features[0].shape().time, 16384);
        assert_eq!(outs[1].features[0].shape().time, 8192);
        assert_eq!(outs[2].features[0].shape().time, 4096);
    }

    #[test]
    fn scores_are_one_channel_and_features_one_per_layer() {
        let cfg = DiscriminatorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = build_discriminator(&cfg, &mut rng).unwrap();
        let outs = discriminator_forward(&params, &cfg, &audio(8192, 3)).unwrap();
        for scale in &outs {
            assert_eq!(scale.score.shape().channels, 1);
            assert_eq!(scale.features.len(), 7);
            let last = scale.features.last().unwrap();
            assert_eq!(last.data(), scale.score.data());
        }
    }

    #[test]
    fn short_input_rejected_by_receptive_field() {
        let cfg = DiscriminatorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = build_discriminator(&cfg, &mut rng).unwrap();
        let err = discriminator_forward(&params, &cfg, &audio(4096, 5)).unwrap_err();
        assert!(matches!(err, Error::InvalidArg { .. }));
        assert!(err.to_string().contains("4951"));
    }

    #[test]
    fn single_scale_and_spectral_are_constructible() {
        let mut cfg = DiscriminatorConfig::default();
        cfg.num_scales = 1;
        cfg.norm = NormKind::Spectral;
        cfg.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = build_discriminator(&cfg, &mut rng).unwrap();
        assert_eq!(params.len(), 7);
        // spectral has no forward path; it must fail loudly, not silently
        assert!(discriminator_forward(&params, &cfg, &audio(8192, 7)).is_err());
    }

    #[test]
    fn score_map_time_follows_length_formulas() {
        let cfg = DiscriminatorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = build_discriminator(&cfg, &mut rng).unwrap();
        let outs = discriminator_forward(&params, &cfg, &audio(16384, 9)).unwrap();
        // compose the conv length formulas at scale 1
        let mut t = 16384usize;
        for l in &cfg.layers {
            t = (t + 2 * (l.kernel / 2) - l.kernel) / l.stride + 1;
        }
        assert_eq!(outs[0].score.shape().time, t);
    }
}
