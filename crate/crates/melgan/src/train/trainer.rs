//! One-D-then-one-G training steps over windowed batches.

use std::collections::BTreeMap;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::loss::{
    discriminator_loss, feature_matching_loss, generator_adversarial_loss, generator_total_loss,
};
use crate::arch::{
    build_discriminator, build_generator, discriminator_forward, discriminator_forward_graph,
    generator_forward, generator_forward_graph, register_params, DiscriminatorConfig,
    GeneratorConfig, ModelParams, WnNodeIds,
};
use crate::audio::{mel_from_audio_tensor, MelConfig, MelSpectrogram};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::optim::{adam_step, AdamEntry, AdamHyper, AdamState};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainHyper {
    pub adam: AdamHyper,
    pub lambda_fm: f32,
    pub batch_size: usize,
    pub window_samples: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            adam: AdamHyper::default(),
            lambda_fm: 10.0,
            batch_size: 16,
            window_samples: 8192,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepMetrics {
    pub step: u64,
    pub d_loss: f32,
    pub g_adv: f32,
    pub g_fm: f32,
    pub wall_ms: f64,
}

/// A fixed-length audio window batch with mels computed from the same
/// windows.
#[derive(Clone, Debug)]
pub struct Batch {
    pub audio: Tensor,
    pub mel: MelSpectrogram,
}

impl Batch {
    pub fn from_audio(audio: Tensor, mel_cfg: &MelConfig) -> Result<Self> {
        let mel = mel_from_audio_tensor(&audio, mel_cfg)?;
        Ok(Batch { audio, mel })
    }
}

pub struct Trainer {
    pub gen_cfg: GeneratorConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub mel_cfg: MelConfig,
    pub hyper: TrainHyper,
    pub gen: ModelParams,
    pub disc: ModelParams,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
    pub step: u64,
    pub seed: u64,
}

impl Trainer {
    pub fn new(
        gen_cfg: GeneratorConfig,
        disc_cfg: DiscriminatorConfig,
        mel_cfg: MelConfig,
        hyper: TrainHyper,
        seed: u64,
    ) -> Result<Self> {
        gen_cfg.validate()?;
        disc_cfg.validate()?;
        mel_cfg.validate()?;
        if hyper.window_samples % gen_cfg.total_upsampling() != 0 {
            return Err(Error::InvalidArg {
                op: "Trainer::new",
                reason: format!(
                    "window {} is not a multiple of the generator upsampling {}",
                    hyper.window_samples,
                    gen_cfg.total_upsampling()
                ),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = build_generator(&gen_cfg, &mut rng)?;
        let disc = build_discriminator(&disc_cfg, &mut rng)?;
        Ok(Trainer {
            gen_cfg,
            disc_cfg,
            mel_cfg,
            hyper,
            gen,
            disc,
            adam_g: AdamState::new(),
            adam_d: AdamState::new(),
            step: 0,
            seed,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            seed: self.seed,
            gen_cfg: self.gen_cfg.clone(),
            disc_cfg: self.disc_cfg.clone(),
            mel_cfg: self.mel_cfg,
            adam: self.hyper.adam,
            lambda_fm: self.hyper.lambda_fm,
            gen: self.gen.clone(),
            disc: self.disc.clone(),
            adam_g: self.adam_g.clone(),
            adam_d: self.adam_d.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint, batch_size: usize, window_samples: usize) -> Self {
        Trainer {
            gen_cfg: ckpt.gen_cfg,
            disc_cfg: ckpt.disc_cfg,
            mel_cfg: ckpt.mel_cfg,
            hyper: TrainHyper {
                adam: ckpt.adam,
                lambda_fm: ckpt.lambda_fm,
                batch_size,
                window_samples,
            },
            gen: ckpt.gen,
            disc: ckpt.disc,
            adam_g: ckpt.adam_g,
            adam_d: ckpt.adam_d,
            step: ckpt.step,
            seed: ckpt.seed,
        }
    }

    fn check_finite(graph: &Graph, value: f32, what: &str) -> Result<()> {
        if value.is_finite() {
            return Ok(());
        }
        Err(Error::NonFinite(
            graph.first_nonfinite().unwrap_or_else(|| what.to_string()),
        ))
    }

    /// Applies Adam to every parameter tensor using gradients accumulated in
    /// `graph` at the registered leaf ids.
    fn apply_adam(
        graph: &Graph,
        params: &mut ModelParams,
        ids: &BTreeMap<String, WnNodeIds>,
        state: &mut AdamState,
        hyper: &AdamHyper,
    ) -> Result<()> {
        let mut names: Vec<(String, crate::graph::NodeId)> = Vec::with_capacity(ids.len() * 3);
        for (name, wn) in ids {
            names.push((format!("{name}.v"), wn.v));
            names.push((format!("{name}.g"), wn.g));
            names.push((format!("{name}.b"), wn.b));
        }
        let mut grads: Vec<(String, &[f32])> = Vec::with_capacity(names.len());
        for (full, id) in &names {
            let g = graph
                .grad(*id)
                .ok_or_else(|| Error::MissingGrad(full.clone()))?;
            grads.push((full.clone(), g));
        }
        let mut grad_map: BTreeMap<&str, &[f32]> = BTreeMap::new();
        for (n, g) in &grads {
            grad_map.insert(n.as_str(), g);
        }
        let mut entries: Vec<AdamEntry> = Vec::with_capacity(grads.len());
        let mut keys: Vec<String> = Vec::with_capacity(grads.len());
        for (name, layer) in params.iter_mut() {
            for (suffix, tensor) in [
                (".v", &mut layer.v),
                (".g", &mut layer.g),
                (".b", &mut layer.bias),
            ] {
                keys.push(format!("{name}{suffix}"));
                let grad = *grad_map
                    .get(format!("{name}{suffix}").as_str())
                    .ok_or_else(|| Error::MissingGrad(format!("{name}{suffix}")))?;
                entries.push(AdamEntry {
                    name: "",
                    param: tensor.data_mut(),
                    grad,
                });
            }
        }
        for (e, k) in entries.iter_mut().zip(&keys) {
            e.name = k;
        }
        adam_step(&mut entries, state, hyper)
    }

    /// One discriminator update followed by one generator update on the same
    /// batch. No loss is ever taken in raw audio space.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepMetrics> {
        let t0 = Instant::now();
        let up = self.gen_cfg.total_upsampling();
        let t_audio = batch.audio.shape().time;
        if t_audio % up != 0 || batch.mel.frames() * up != t_audio {
            return Err(Error::InvalidArg {
                op: "train_step",
                reason: format!(
                    "audio window {t_audio} must be mel frames {} x upsampling {up}",
                    batch.mel.frames()
                ),
            });
        }

        // -- discriminator step (generator frozen) --
        let fake = generator_forward(&self.gen, &self.gen_cfg, &batch.mel)?;
        let d_loss_val;
        {
            let mut graph = Graph::new();
            let d_ids = register_params(&mut graph, &self.disc, true);
            let real_leaf = graph.named_leaf("batch.audio", batch.audio.clone());
            let fake_leaf = graph.named_leaf("gen.output.detached", fake);
            let real_scales =
                discriminator_forward_graph(&mut graph, &d_ids, &self.disc_cfg, real_leaf)?;
            let fake_scales =
                discriminator_forward_graph(&mut graph, &d_ids, &self.disc_cfg, fake_leaf)?;
            let real_scores: Vec<_> = real_scales.iter().map(|s| s.score).collect();
            let fake_scores: Vec<_> = fake_scales.iter().map(|s| s.score).collect();
            let d_loss = discriminator_loss(&mut graph, &real_scores, &fake_scores)?;
            d_loss_val = graph.value(d_loss).item();
            Self::check_finite(&graph, d_loss_val, "d_loss")?;
            graph.backward(d_loss)?;
            Self::apply_adam(
                &graph,
                &mut self.disc,
                &d_ids,
                &mut self.adam_d,
                &self.hyper.adam.clone(),
            )?;
        }

        // -- generator step (fresh forward against the updated D) --
        let real_scales = discriminator_forward(&self.disc, &self.disc_cfg, &batch.audio)?;
        let (g_adv_val, g_fm_val);
        {
            let mut graph = Graph::new();
            let g_ids = register_params(&mut graph, &self.gen, true);
            let d_ids = register_params(&mut graph, &self.disc, false);
            let mel_leaf = graph.named_leaf("batch.mel", batch.mel.values.clone());
            let fake = generator_forward_graph(&mut graph, &g_ids, &self.gen_cfg, mel_leaf)?;
            let fake_scales =
                discriminator_forward_graph(&mut graph, &d_ids, &self.disc_cfg, fake)?;
            // real features enter as constants: the real path carries no
            // gradient
            let real_feature_ids: Vec<Vec<_>> = real_scales
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    s.features
                        .iter()
                        .enumerate()
                        .map(|(i, f)| graph.named_leaf(format!("d.real.s{k}.f{i}"), f.clone()))
                        .collect()
                })
                .collect();
            let fake_feature_ids: Vec<Vec<_>> = fake_scales
                .iter()
                .map(|s| s.features.clone())
                .collect();
            let fake_scores: Vec<_> = fake_scales.iter().map(|s| s.score).collect();
            let adv = generator_adversarial_loss(&mut graph, &fake_scores)?;
            let fm = feature_matching_loss(&mut graph, &real_feature_ids, &fake_feature_ids)?;
            let total = generator_total_loss(&mut graph, adv, fm, self.hyper.lambda_fm)?;
            g_adv_val = graph.value(adv).item();
            g_fm_val = graph.value(fm).item();
            Self::check_finite(&graph, graph.value(total).item(), "g_total")?;
            graph.backward(total)?;
            Self::apply_adam(
                &graph,
                &mut self.gen,
                &g_ids,
                &mut self.adam_g,
                &self.hyper.adam.clone(),
            )?;
        }

        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            d_loss: d_loss_val,
            g_adv: g_adv_val,
            g_fm: g_fm_val,
            wall_ms: t0.elapsed().as_secs_f64() * 1000.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::DiscLayerSpec;
    use crate::tensor::Shape;

    pub(crate) fn tiny_setup() -> (GeneratorConfig, DiscriminatorConfig, TrainHyper) {
        let gen_cfg = GeneratorConfig {
            mel_channels: 4,
            base_width: 8,
            upsample_ratios: vec![2, 2],
            upsample_kernels: None,
            resblock_kernel: 3,
            resblock_dilations: vec![1, 3],
            leaky_slope: 0.2,
        };
        let disc_cfg = DiscriminatorConfig {
            num_scales: 2,
            pool_kernel: 4,
            pool_stride: 2,
            pool_padding: 1,
            layers: vec![
                DiscLayerSpec::new(5, 2, 1, 4),
                DiscLayerSpec::new(3, 1, 1, 1),
            ],
            leaky_slope: 0.2,
            norm: crate::arch::NormKind::Weight,
        };
        let hyper = TrainHyper {
            batch_size: 1,
            window_samples: 64,
            ..TrainHyper::default()
        };
        (gen_cfg, disc_cfg, hyper)
    }

    fn tiny_batch(gen_cfg: &GeneratorConfig, window: usize, seed: u64) -> Batch {
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let audio = Tensor::randn(Shape::new(1, 1, window), 0.4, &mut rng);
        let frames = window / gen_cfg.total_upsampling();
        let mel = MelSpectrogram {
            values: Tensor::randn(Shape::new(1, gen_cfg.mel_channels, frames), 1.0, &mut rng),
        };
        Batch { audio, mel }
    }

    #[test]
    fn step_returns_finite_metrics_and_increments() {
        let (gen_cfg, disc_cfg, hyper) = tiny_setup();
        let mut tr = Trainer::new(gen_cfg.clone(), disc_cfg, MelConfig::default(), hyper, 1)
            .unwrap();
        let batch = tiny_batch(&gen_cfg, 64, 2);
        let m = tr.train_step(&batch).unwrap();
        assert_eq!(m.step, 1);
        assert!(m.d_loss.is_finite() && m.g_adv.is_finite() && m.g_fm.is_finite());
        assert!(m.d_loss >= 0.0);
    }

    #[test]
    fn identical_seeds_give_identical_metric_streams() {
        let (gen_cfg, disc_cfg, hyper) = tiny_setup();
        let mk = || {
            Trainer::new(
                gen_cfg.clone(),
                disc_cfg.clone(),
                MelConfig::default(),
                hyper,
                7,
            )
            .unwrap()
        };
        let mut a = mk();
        let mut b = mk();
        for i in 0..3 {
            let batch = tiny_batch(&gen_cfg, 64, 100 + i);
            let ma = a.train_step(&batch).unwrap();
            let mb = b.train_step(&batch).unwrap();
            assert_eq!(ma.d_loss.to_bits(), mb.d_loss.to_bits());
            assert_eq!(ma.g_adv.to_bits(), mb.g_adv.to_bits());
            assert_eq!(ma.g_fm.to_bits(), mb.g_fm.to_bits());
        }
    }

    #[test]
    fn d_step_leaves_g_unchanged_and_vice_versa() {
        let (gen_cfg, disc_cfg, hyper) = tiny_setup();
        let mut tr = Trainer::new(
            gen_cfg.clone(),
            disc_cfg,
            MelConfig::default(),
            hyper,
            3,
        )
        .unwrap();
        let batch = tiny_batch(&gen_cfg, 64, 5);
        let gen_before: Vec<Vec<f32>> = tr.gen.iter().map(|(_, l)| l.v.data().to_vec()).collect();
        let disc_before: Vec<Vec<f32>> =
            tr.disc.iter().map(|(_, l)| l.v.data().to_vec()).collect();
        tr.train_step(&batch).unwrap();
        let gen_after: Vec<Vec<f32>> = tr.gen.iter().map(|(_, l)| l.v.data().to_vec()).collect();
        let disc_after: Vec<Vec<f32>> =
            tr.disc.iter().map(|(_, l)| l.v.data().to_vec()).collect();
        // both nets actually moved (one D and one G update happened)
        assert_ne!(gen_before, gen_after);
        assert_ne!(disc_before, disc_after);
    }

    #[test]
    fn non_multiple_window_rejected() {
        let (gen_cfg, disc_cfg, hyper) = tiny_setup();
        let mut tr = Trainer::new(
            gen_cfg.clone(),
            disc_cfg,
            MelConfig::default(),
            hyper,
            3,
        )
        .unwrap();
        let mut batch = tiny_batch(&gen_cfg, 64, 5);
        batch.audio = Tensor::zeros(Shape::new(1, 1, 63));
        assert!(tr.train_step(&batch).is_err());
    }

    #[test]
    fn nonfinite_input_aborts_with_tensor_name() {
        let (gen_cfg, disc_cfg, hyper) = tiny_setup();
        let mut tr = Trainer::new(
            gen_cfg.clone(),
            disc_cfg,
            MelConfig::default(),
            hyper,
            3,
        )
        .unwrap();
        let mut batch = tiny_batch(&gen_cfg, 64, 5);
        batch.audio.data_mut()[0] = f32::NAN;
        match tr.train_step(&batch) {
            Err(Error::NonFinite(name)) => assert!(!name.is_empty()),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
