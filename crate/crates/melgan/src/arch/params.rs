//! Named weight-normalized layer parameters.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{ConvSpec, Shape, Tensor};

/// One weight-normalized layer: direction `v`, per-slice magnitude `g`
/// (over the leading axis of `v`), and a bias.
#[derive(Clone, Debug)]
pub struct WnLayer {
    pub v: Tensor,
    pub g: Tensor,
    pub bias: Tensor,
}

impl WnLayer {
    pub fn param_count(&self) -> usize {
        self.v.numel() + self.g.numel() + self.bias.numel()
    }
}

/// Ordered name -> layer map covering a whole network. Iteration follows
/// insertion (forward) order, which also fixes checkpoint layout.
#[derive(Clone, Debug, Default)]
pub struct ModelParams {
    entries: Vec<(String, WnLayer)>,
    index: BTreeMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, layer: WnLayer) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::CkptNameCollision(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, layer));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&WnLayer> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WnLayer> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WnLayer)> {
        self.entries.iter().map(|(n, l)| (n.as_str(), l))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut WnLayer)> {
        self.entries.iter_mut().map(|(n, l)| (n.as_str(), l))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total learnable scalars: v + g + bias over every layer.
    pub fn count_parameters(&self) -> usize {
        self.entries.iter().map(|(_, l)| l.param_count()).sum()
    }

    /// Flat view as (name, tensor) with `.v` / `.g` / `.b` suffixes.
    pub fn named_tensors(&self) -> impl Iterator<Item = (String, &Tensor)> {
        self.entries.iter().flat_map(|(n, l)| {
            [
                (format!("{n}.v"), &l.v),
                (format!("{n}.g"), &l.g),
                (format!("{n}.b"), &l.bias),
            ]
        })
    }
}

/// Weight init: v ~ N(0, 0.02), g = ||v|| per slice (so the effective weight
/// starts equal to v), bias 0.
pub fn init_wn_layer<R: Rng>(spec: &ConvSpec, rng: &mut R) -> Result<WnLayer> {
    let ws = spec.weight_shape();
    let v = Tensor::randn(ws, 0.02, rng);
    let norms = kernels::wn_norms(v.data(), ws.batch)?;
    let g = Tensor::from_vec(Shape::new(ws.batch, 1, 1), norms)?;
    let bias = Tensor::zeros(spec.bias_shape());
    Ok(WnLayer { v, g, bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn count_counts_v_g_and_bias() {
        // 1x1 conv 2 -> 3 with bias: 6 (v) + 3 (g) + 3 (bias) = 12
        let mut params = ModelParams::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = ConvSpec::conv(2, 3, 1);
        params.insert("l", init_wn_layer(&spec, &mut rng).unwrap()).unwrap();
        assert_eq!(params.count_parameters(), 12);
        assert_eq!(ModelParams::new().count_parameters(), 0);
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut params = ModelParams::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = ConvSpec::conv(1, 1, 1);
        params.insert("a", init_wn_layer(&spec, &mut rng).unwrap()).unwrap();
        let err = params.insert("a", init_wn_layer(&spec, &mut rng).unwrap());
        assert!(matches!(err, Err(Error::CkptNameCollision(_))));
    }

    #[test]
    fn init_makes_effective_weight_equal_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec::conv(4, 6, 5);
        let layer = init_wn_layer(&spec, &mut rng).unwrap();
        let mut folded = vec![0.0; layer.v.numel()];
        kernels::wn_fold(
            layer.v.data(),
            layer.g.data(),
            layer.v.shape().batch,
            &mut folded,
        )
        .unwrap();
        assert_eq!(folded.as_slice(), layer.v.data());
        assert!(layer.bias.data().iter().all(|&b| b == 0.0));
    }
}
