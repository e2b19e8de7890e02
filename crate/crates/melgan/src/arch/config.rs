//! Declarative generator/discriminator layer specifications.

use crate::config::Kv;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub mel_channels: usize,
    pub base_width: usize,
    pub upsample_ratios: Vec<usize>,
    /// Transposed-conv kernel per stage; `None` means twice the ratio.
    pub upsample_kernels: Option<Vec<usize>>,
    pub resblock_kernel: usize,
    pub resblock_dilations: Vec<usize>,
    pub leaky_slope: f32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mel_channels: 80,
            base_width: 512,
            upsample_ratios: vec![8, 8, 2, 2],
            upsample_kernels: None,
            resblock_kernel: 3,
            resblock_dilations: vec![1, 3, 9],
            leaky_slope: 0.2,
        }
    }
}

impl GeneratorConfig {
    pub fn num_stages(&self) -> usize {
        self.upsample_ratios.len()
    }

    /// Product of the upsample ratios: waveform samples per mel frame.
    pub fn total_upsampling(&self) -> usize {
        self.upsample_ratios.iter().product()
    }

    pub fn stage_kernel(&self, stage: usize) -> usize {
        match &self.upsample_kernels {
            Some(ks) => ks[stage],
            None => 2 * self.upsample_ratios[stage],
        }
    }

    /// Channel width entering stage `i` (stage 0 sees `base_width`).
    pub fn width_in(&self, stage: usize) -> usize {
        self.base_width >> stage
    }

    pub fn width_out(&self, stage: usize) -> usize {
        self.base_width >> (stage + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidArg {
            op: "GeneratorConfig",
            reason,
        };
        if self.mel_channels == 0 {
            return Err(fail("mel_channels must be >= 1".into()));
        }
        if self.upsample_ratios.is_empty() {
            return Err(fail("need at least one upsample stage".into()));
        }
        if let Some(ks) = &self.upsample_kernels {
            if ks.len() != self.upsample_ratios.len() {
                return Err(fail(format!(
                    "upsample_kernels has {} entries for {} stages",
                    ks.len(),
                    self.upsample_ratios.len()
                )));
            }
        }
        for (i, &r) in self.upsample_ratios.iter().enumerate() {
            if r < 2 {
                return Err(fail(format!("stage {i}: ratio must be >= 2, got {r}")));
            }
            let k = self.stage_kernel(i);
            if k < r || !(k - r).is_multiple_of(2) {
                return Err(fail(format!(
                    "stage {i}: kernel {k} with stride {r} needs padding (kernel-stride)/2, \
                     which is not a whole number of frames"
                )));
            }
        }
        let stages = self.num_stages();
        if self.base_width % (1 << stages) != 0 || self.base_width >> stages == 0 {
            return Err(fail(format!(
                "base_width {} cannot halve across {stages} stages",
                self.base_width
            )));
        }
        if self.resblock_kernel == 0 || self.resblock_kernel.is_multiple_of(2) {
            return Err(fail(format!(
                "resblock_kernel must be odd, got {}",
                self.resblock_kernel
            )));
        }
        if self.resblock_dilations.is_empty() || self.resblock_dilations.iter().any(|&d| d == 0) {
            return Err(fail("resblock_dilations must be nonempty positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(fail(format!(
                "leaky_slope must lie in (0,1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self, prefix: &str, kv: &mut Kv) {
        kv.set(format!("{prefix}mel_channels"), self.mel_channels);
        kv.set(format!("{prefix}base_width"), self.base_width);
        kv.set_list(format!("{prefix}upsample_ratios"), &self.upsample_ratios);
        if let Some(ks) = &self.upsample_kernels {
            kv.set_list(format!("{prefix}upsample_kernels"), ks);
        }
        kv.set(format!("{prefix}resblock_kernel"), self.resblock_kernel);
        kv.set_list(format!("{prefix}resblock_dilations"), &self.resblock_dilations);
        kv.set(format!("{prefix}leaky_slope"), self.leaky_slope);
    }

    pub fn from_kv(prefix: &str, kv: &Kv) -> Result<Self> {
        let kernels_key = format!("{prefix}upsample_kernels");
        let cfg = GeneratorConfig {
            mel_channels: kv.get(&format!("{prefix}mel_channels"))?,
            base_width: kv.get(&format!("{prefix}base_width"))?,
            upsample_ratios: kv.get_list(&format!("{prefix}upsample_ratios"))?,
            upsample_kernels: if kv.contains(&kernels_key) {
                Some(kv.get_list(&kernels_key)?)
            } else {
                None
            },
            resblock_kernel: kv.get(&format!("{prefix}resblock_kernel"))?,
            resblock_dilations: kv.get_list(&format!("{prefix}resblock_dilations"))?,
            leaky_slope: kv.get(&format!("{prefix}leaky_slope"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Normalization applied to every layer. Spectral mode exists as an ablation
/// axis: models are constructible, but only weight norm has a forward path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Weight,
    Spectral,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKind::Weight => write!(f, "weight"),
            NormKind::Spectral => write!(f, "spectral"),
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "weight" => Ok(NormKind::Weight),
            "spectral" => Ok(NormKind::Spectral),
            other => Err(format!("unknown norm kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscLayerSpec {
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
    pub out_channels: usize,
}

impl DiscLayerSpec {
    pub fn new(kernel: usize, stride: usize, groups: usize, out_channels: usize) -> Self {
        DiscLayerSpec {
            kernel,
            stride,
            groups,
            out_channels,
        }
    }
}

impl std::fmt::Display for DiscLayerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.kernel, self.stride, self.groups, self.out_channels
        )
    }
}

impl std::str::FromStr for DiscLayerSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 4 {
            return Err(format!("expected kernel/stride/groups/out, got `{s}`"));
        }
        let nums: std::result::Result<Vec<usize>, _> =
            parts.iter().map(|p| p.trim().parse::<usize>()).collect();
        let nums = nums.map_err(|e| format!("bad layer `{s}`: {e}"))?;
        Ok(DiscLayerSpec::new(nums[0], nums[1], nums[2], nums[3]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub num_scales: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub pool_padding: usize,
    /// Identical layer chain for every scale block (input is 1 channel).
    pub layers: Vec<DiscLayerSpec>,
    pub leaky_slope: f32,
    pub norm: NormKind,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            num_scales: 3,
            pool_kernel: 4,
            pool_stride: 2,
            pool_padding: 1,
            layers: vec![
                DiscLayerSpec::new(15, 1, 1, 16),
                DiscLayerSpec::new(41, 4, 4, 64),
                DiscLayerSpec::new(41, 4, 16, 256),
                DiscLayerSpec::new(41, 4, 64, 1024),
                DiscLayerSpec::new(41, 4, 256, 1024),
                DiscLayerSpec::new(5, 1, 1, 1024),
                DiscLayerSpec::new(3, 1, 1, 1),
            ],
            leaky_slope: 0.2,
            norm: NormKind::Weight,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidArg {
            op: "DiscriminatorConfig",
            reason,
        };
        if self.num_scales == 0 {
            return Err(fail("num_scales must be >= 1".into()));
        }
        if self.layers.is_empty() {
            return Err(fail("need at least one layer".into()));
        }
        if self.pool_kernel == 0 || self.pool_stride == 0 {
            return Err(fail("pool kernel/stride must be >= 1".into()));
        }
        let mut in_ch = 1usize;
        for (i, l) in self.layers.iter().enumerate() {
            if l.kernel == 0 || l.stride == 0 || l.groups == 0 || l.out_channels == 0 {
                return Err(fail(format!("layer {i}: all fields must be >= 1")));
            }
            if in_ch % l.groups != 0 || l.out_channels % l.groups != 0 {
                return Err(fail(format!(
                    "layer {i}: groups {} must divide in {} and out {}",
                    l.groups, in_ch, l.out_channels
                )));
            }
            in_ch = l.out_channels;
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(fail(format!(
                "leaky_slope must lie in (0,1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    /// Input samples influencing one score-map element of a block.
    pub fn block_receptive_field(&self) -> usize {
        let mut rf = 1usize;
        let mut stride = 1usize;
        for l in &self.layers {
            rf += (l.kernel - 1) * stride;
            stride *= l.stride;
        }
        rf
    }

    pub fn to_kv(&self, prefix: &str, kv: &mut Kv) {
        kv.set(format!("{prefix}num_scales"), self.num_scales);
        kv.set(format!("{prefix}pool_kernel"), self.pool_kernel);
        kv.set(format!("{prefix}pool_stride"), self.pool_stride);
        kv.set(format!("{prefix}pool_padding"), self.pool_padding);
        let layers = self
            .layers
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",");
        kv.set(format!("{prefix}layers"), layers);
        kv.set(format!("{prefix}leaky_slope"), self.leaky_slope);
        kv.set(format!("{prefix}norm"), self.norm);
    }

    pub fn from_kv(prefix: &str, kv: &Kv) -> Result<Self> {
        let layers_raw = kv.require(&format!("{prefix}layers"))?;
        let layers: std::result::Result<Vec<DiscLayerSpec>, String> =
            layers_raw.split(',').map(|p| p.trim().parse()).collect();
        let layers = layers.map_err(|reason| Error::ConfigParse {
            key: format!("{prefix}layers"),
            reason,
        })?;
        let norm: NormKind = kv
            .require(&format!("{prefix}norm"))?
            .parse()
            .map_err(|reason| Error::ConfigParse {
                key: format!("{prefix}norm"),
                reason,
            })?;
        let cfg = DiscriminatorConfig {
            num_scales: kv.get(&format!("{prefix}num_scales"))?,
            pool_kernel: kv.get(&format!("{prefix}pool_kernel"))?,
            pool_stride: kv.get(&format!("{prefix}pool_stride"))?,
            pool_padding: kv.get(&format!("{prefix}pool_padding"))?,
            layers,
            leaky_slope: kv.get(&format!("{prefix}leaky_slope"))?,
            norm,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_generator_validates_and_upsamples_256x() {
        let cfg = GeneratorConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_upsampling(), 256);
        assert_eq!(cfg.stage_kernel(0), 16);
        assert_eq!(cfg.stage_kernel(2), 4);
        assert_eq!(cfg.width_in(0), 512);
        assert_eq!(cfg.width_out(3), 32);
    }

    #[test]
    fn odd_ratio_rejected() {
        let cfg = GeneratorConfig {
            upsample_ratios: vec![8, 3],
            base_width: 8,
            ..GeneratorConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_discriminator_receptive_field() {
        let cfg = DiscriminatorConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.block_receptive_field(), 4951);
    }

    #[test]
    fn disc_scale_blocks_share_one_layer_spec() {
        // the config holds a single chain; every scale instantiates it
        let cfg = DiscriminatorConfig::default();
        assert_eq!(cfg.layers.len(), 7);
        assert_eq!(cfg.layers[1], DiscLayerSpec::new(41, 4, 4, 64));
    }

    #[test]
    fn generator_kv_round_trip() {
        let cfg = GeneratorConfig::default();
        let mut kv = Kv::new();
        cfg.to_kv("gen.", &mut kv);
        assert_eq!(GeneratorConfig::from_kv("gen.", &kv).unwrap(), cfg);
    }

    #[test]
    fn discriminator_kv_round_trip() {
        let mut cfg = DiscriminatorConfig::default();
        cfg.norm = NormKind::Spectral;
        cfg.num_scales = 1;
        let mut kv = Kv::new();
        cfg.to_kv("disc.", &mut kv);
        assert_eq!(DiscriminatorConfig::from_kv("disc.", &kv).unwrap(), cfg);
    }
}
