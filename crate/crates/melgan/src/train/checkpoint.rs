//! Binary named-tensor container and the training checkpoint built on it.
//!
//! Layout (all little-endian):
//!   magic "MGK1" | u32 version | u32 tensor count
//!   per tensor: u16 name length | name UTF-8 | u8 ndim | u64 dims... | f32 data
//!   u32 metadata length | metadata (key=value text)
//!
//! Save -> load -> save is byte-identical: tensor order is preserved, floats
//! are raw bits, metadata keys are sorted.

use std::io::{Read, Write};
use std::path::Path;

use crate::arch::{DiscriminatorConfig, GeneratorConfig, ModelParams, WnLayer};
use crate::audio::MelConfig;
use crate::config::Kv;
use crate::error::{Error, Result};
use crate::optim::{AdamHyper, AdamState, Moments};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: [u8; 4] = *b"MGK1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default)]
pub struct Container {
    pub tensors: Vec<NamedTensor>,
    pub metadata: Kv,
}

impl Container {
    pub fn push(&mut self, name: impl Into<String>, dims: Vec<u64>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if self.tensors.iter().any(|t| t.name == name) {
            return Err(Error::CkptNameCollision(name));
        }
        let numel: u64 = dims.iter().product();
        debug_assert_eq!(numel as usize, data.len());
        self.tensors.push(NamedTensor { name, dims, data });
        Ok(())
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, t: &Tensor) -> Result<()> {
        let s = t.shape();
        self.push(
            name,
            vec![s.batch as u64, s.channels as u64, s.time as u64],
            t.data().to_vec(),
        )
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::CkptMissingTensor(name.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.dims.len() as u8);
            for d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = self.metadata.to_text();
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, at: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::CkptMagic);
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::CkptVersion(version));
        }
        let count = cur.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| Error::CkptMalformed("tensor name is not UTF-8".into()))?;
            if tensors.iter().any(|t: &NamedTensor| t.name == name) {
                return Err(Error::CkptNameCollision(name));
            }
            let ndim = cur.u8()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(cur.u64()?);
            }
            let numel: u64 = dims.iter().product();
            let raw = cur.take(numel as usize * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, dims, data });
        }
        let meta_len = cur.u32()? as usize;
        let meta_text = std::str::from_utf8(cur.take(meta_len)?)
            .map_err(|_| Error::CkptMalformed("metadata is not UTF-8".into()))?;
        let metadata = Kv::parse(meta_text)?;
        if cur.at != bytes.len() {
            return Err(Error::CkptMalformed(format!(
                "{} trailing bytes",
                bytes.len() - cur.at
            )));
        }
        Ok(Container { tensors, metadata })
    }

    /// Writes atomically: temp file in the target directory, then rename.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let out = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::CkptMalformed(format!("truncated at byte {}", self.at)))?;
        self.at += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }
}

// ---------------------------------------------------------------------------
// training checkpoint
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub step: u64,
    pub seed: u64,
    pub gen_cfg: GeneratorConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub mel_cfg: MelConfig,
    pub adam: AdamHyper,
    pub lambda_fm: f32,
    pub gen: ModelParams,
    pub disc: ModelParams,
    pub adam_g: AdamState,
    pub adam_d: AdamState,
}

fn push_params(c: &mut Container, params: &ModelParams) -> Result<()> {
    for (name, tensor) in params.named_tensors() {
        c.push_tensor(name, tensor)?;
    }
    Ok(())
}

fn push_adam(c: &mut Container, prefix: &str, state: &AdamState) -> Result<()> {
    for (name, m) in &state.slots {
        c.push(format!("{prefix}{name}.m1"), vec![m.m.len() as u64], m.m.clone())?;
        c.push(format!("{prefix}{name}.m2"), vec![m.v.len() as u64], m.v.clone())?;
    }
    Ok(())
}

fn tensor_from(nt: &NamedTensor) -> Result<Tensor> {
    if nt.dims.len() != 3 {
        return Err(Error::CkptMalformed(format!(
            "tensor `{}` has rank {}, expected 3",
            nt.name,
            nt.dims.len()
        )));
    }
    Tensor::from_vec(
        Shape::new(nt.dims[0] as usize, nt.dims[1] as usize, nt.dims[2] as usize),
        nt.data.clone(),
    )
}

/// Rebuilds a ModelParams from `.v`/`.g`/`.b` triples with `prefix`,
/// preserving the container's tensor order.
fn params_from(c: &Container, prefix: &str) -> Result<ModelParams> {
    let mut params = ModelParams::new();
    for nt in &c.tensors {
        if let Some(stem) = nt.name.strip_suffix(".v") {
            if !stem.starts_with(prefix) {
                continue;
            }
            let layer = WnLayer {
                v: tensor_from(nt)?,
                g: tensor_from(c.get(&format!("{stem}.g"))?)?,
                bias: tensor_from(c.get(&format!("{stem}.b"))?)?,
            };
            params.insert(stem, layer)?;
        }
    }
    if params.is_empty() {
        return Err(Error::CkptMissingTensor(format!("{prefix}*")));
    }
    Ok(params)
}

fn adam_from(c: &Container, prefix: &str, step: u64) -> AdamState {
    let mut state = AdamState {
        step,
        ..AdamState::new()
    };
    for nt in &c.tensors {
        if let Some(stem) = nt.name.strip_prefix(prefix) {
            if let Some(param) = stem.strip_suffix(".m1") {
                let m2 = c
                    .get(&format!("{prefix}{param}.m2"))
                    .map(|t| t.data.clone())
                    .unwrap_or_else(|_| vec![0.0; nt.data.len()]);
                state.slots.insert(
                    param.to_string(),
                    Moments {
                        m: nt.data.clone(),
                        v: m2,
                    },
                );
            }
        }
    }
    state
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::default();
        push_params(&mut c, &self.gen)?;
        push_params(&mut c, &self.disc)?;
        push_adam(&mut c, "opt.gen.", &self.adam_g)?;
        push_adam(&mut c, "opt.disc.", &self.adam_d)?;
        let kv = &mut c.metadata;
        kv.set("kind", "checkpoint");
        kv.set("step", self.step);
        kv.set("seed", self.seed);
        kv.set("init", "normal(0,0.02)");
        kv.set("adam.g.step", self.adam_g.step);
        kv.set("adam.d.step", self.adam_d.step);
        kv.set("hyper.lr", self.adam.lr);
        kv.set("hyper.beta1", self.adam.beta1);
        kv.set("hyper.beta2", self.adam.beta2);
        kv.set("hyper.eps", self.adam.eps);
        kv.set("hyper.lambda_fm", self.lambda_fm);
        self.gen_cfg.to_kv("gen.", kv);
        self.disc_cfg.to_kv("disc.", kv);
        self.mel_cfg.to_kv("mel.", kv);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.metadata.get_or::<String>("kind", String::new())? != "checkpoint" {
            return Err(Error::CkptMalformed(
                "metadata kind is not `checkpoint`".into(),
            ));
        }
        let step: u64 = c.metadata.get("step")?;
        Ok(Checkpoint {
            step,
            seed: c.metadata.get("seed")?,
            gen_cfg: GeneratorConfig::from_kv("gen.", &c.metadata)?,
            disc_cfg: DiscriminatorConfig::from_kv("disc.", &c.metadata)?,
            mel_cfg: MelConfig::from_kv("mel.", &c.metadata)?,
            adam: AdamHyper {
                lr: c.metadata.get("hyper.lr")?,
                beta1: c.metadata.get("hyper.beta1")?,
                beta2: c.metadata.get("hyper.beta2")?,
                eps: c.metadata.get("hyper.eps")?,
            },
            lambda_fm: c.metadata.get("hyper.lambda_fm")?,
            gen: params_from(c, "gen.")?,
            disc: params_from(c, "disc")?,
            adam_g: adam_from(c, "opt.gen.", c.metadata.get("adam.g.step")?),
            adam_d: adam_from(c, "opt.disc.", c.metadata.get("adam.d.step")?),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_container() -> Container {
        let mut c = Container::default();
        c.push("a.v", vec![2, 1, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-7, -0.125])
            .unwrap();
        c.push("a.g", vec![2, 1, 1], vec![0.5, 2.0]).unwrap();
        c.metadata.set("kind", "test");
        c.metadata.set("step", 7u64);
        c
    }

    #[test]
    fn container_round_trip_is_byte_identical() {
        let c = sample_container();
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = sample_container().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Container::from_bytes(&bytes), Err(Error::CkptMagic)));
    }

    #[test]
    fn unknown_version_rejected() {
        let mut bytes = sample_container().to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            Container::from_bytes(&bytes),
            Err(Error::CkptVersion(9))
        ));
    }

    #[test]
    fn truncation_rejected() {
        let bytes = sample_container().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 6] {
            assert!(
                Container::from_bytes(&bytes[..cut]).is_err(),
                "cut at {cut} accepted"
            );
        }
    }

    #[test]
    fn trailing_garbage_rejected() {
        let mut bytes = sample_container().to_bytes();
        bytes.push(0);
        assert!(matches!(
            Container::from_bytes(&bytes),
            Err(Error::CkptMalformed(_))
        ));
    }

    #[test]
    fn duplicate_names_rejected_on_push() {
        let mut c = sample_container();
        assert!(matches!(
            c.push("a.v", vec![1], vec![0.0]),
            Err(Error::CkptNameCollision(_))
        ));
    }
}
