//! Shared execution surface for the network topologies.
//!
//! A topology is written once against `Backend` and runs in two modes:
//! eagerly on plain tensors (no autodiff, used for gradient-blocked forwards
//! and as the reference path), or recorded on a [`Graph`] for training.

use std::collections::BTreeMap;

use super::config::NormKind;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::kernels;
use crate::tensor::{ConvSpec, Shape, Tensor};

pub(crate) trait Backend {
    type Handle: Copy;

    /// Weight-normalized convolution (regular or transposed per the spec).
    fn conv(&mut self, name: &str, spec: &ConvSpec, x: Self::Handle) -> Result<Self::Handle>;
    fn leaky_relu(&mut self, x: Self::Handle, slope: f32) -> Result<Self::Handle>;
    fn tanh(&mut self, x: Self::Handle) -> Result<Self::Handle>;
    fn add(&mut self, a: Self::Handle, b: Self::Handle) -> Result<Self::Handle>;
    fn avg_pool(
        &mut self,
        x: Self::Handle,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self::Handle>;
    fn time_of(&self, x: Self::Handle) -> usize;
}

fn missing_layer(name: &str) -> Error {
    Error::InvalidArg {
        op: "forward",
        reason: format!("model params have no layer `{name}`"),
    }
}

fn check_weight_shape(name: &str, spec: &ConvSpec, actual: Shape) -> Result<()> {
    let expected = spec.weight_shape();
    if actual != expected {
        return Err(Error::InvalidArg {
            op: "forward",
            reason: format!("layer `{name}`: weight shape {actual} does not match spec {expected}"),
        });
    }
    Ok(())
}

fn spectral_unsupported() -> Error {
    Error::InvalidArg {
        op: "forward",
        reason: "spectral norm is a structural ablation axis; only weight norm has a forward path"
            .into(),
    }
}

// ---------------------------------------------------------------------------
// eager execution on plain tensors
// ---------------------------------------------------------------------------

pub(crate) struct EagerBackend<'a> {
    params: &'a ModelParams,
    norm: NormKind,
    threads: usize,
    store: Vec<Tensor>,
}

impl<'a> EagerBackend<'a> {
    pub fn new(params: &'a ModelParams, norm: NormKind, threads: usize) -> Self {
        EagerBackend {
            params,
            norm,
            threads,
            store: Vec::new(),
        }
    }

    pub fn put(&mut self, t: Tensor) -> usize {
        self.store.push(t);
        self.store.len() - 1
    }

    pub fn tensor(&self, h: usize) -> &Tensor {
        &self.store[h]
    }

    pub fn take(&mut self, h: usize) -> Tensor {
        std::mem::replace(&mut self.store[h], Tensor::zeros(Shape::new(1, 1, 0)))
    }
}

/// One weight-normalized convolution applied eagerly (norm folded on the fly).
pub(crate) fn eager_wn_conv(
    x: &Tensor,
    v: &Tensor,
    g: &Tensor,
    bias: &Tensor,
    spec: &ConvSpec,
    threads: usize,
) -> Result<Tensor> {
    spec.validate()?;
    let xs = x.shape();
    if xs.channels != spec.in_channels {
        return Err(Error::DimMismatch {
            op: if spec.transposed {
                "conv_transpose1d"
            } else {
                "conv1d"
            },
            axis: "channels",
            expected: spec.in_channels,
            actual: xs.channels,
        });
    }
    let mut w = vec![0.0f32; v.numel()];
    kernels::wn_fold(v.data(), g.data(), v.shape().batch, &mut w)?;
    let t_out = spec.out_time(xs.time)?;
    let mut out = Tensor::zeros(Shape::new(xs.batch, spec.out_channels, t_out));
    if spec.transposed {
        let geom = kernels::ConvTGeom {
            batch: xs.batch,
            in_channels: spec.in_channels,
            time: xs.time,
            out_channels: spec.out_channels,
            kernel: spec.kernel_size,
            stride: spec.stride,
            padding: spec.padding,
            groups: spec.groups,
            out_time: t_out,
        };
        kernels::convt1d_forward(x.data(), &w, Some(bias.data()), &geom, out.data_mut(), threads);
    } else {
        let planes = xs.batch * xs.channels;
        let tp = xs.time + 2 * spec.padding;
        let mut padded = vec![0.0f32; planes * tp];
        kernels::pad1d(
            x.data(),
            planes,
            xs.time,
            spec.padding,
            spec.padding_mode,
            &mut padded,
        )?;
        let geom = kernels::ConvGeom {
            batch: xs.batch,
            in_channels: spec.in_channels,
            time: tp,
            out_channels: spec.out_channels,
            kernel: spec.kernel_size,
            stride: spec.stride,
            dilation: spec.dilation,
            groups: spec.groups,
            out_time: t_out,
        };
        kernels::conv1d_forward(&padded, &w, Some(bias.data()), &geom, out.data_mut(), threads);
    }
    Ok(out)
}

impl Backend for EagerBackend<'_> {
    type Handle = usize;

    fn conv(&mut self, name: &str, spec: &ConvSpec, x: usize) -> Result<usize> {
        if self.norm == NormKind::Spectral {
            return Err(spectral_unsupported());
        }
        let layer = self.params.get(name).ok_or_else(|| missing_layer(name))?;
        check_weight_shape(name, spec, layer.v.shape())?;
        let out = eager_wn_conv(
            &self.store[x],
            &layer.v,
            &layer.g,
            &layer.bias,
            spec,
            self.threads,
        )?;
        Ok(self.put(out))
    }

    fn leaky_relu(&mut self, x: usize, slope: f32) -> Result<usize> {
        let mut out = Tensor::zeros(self.store[x].shape());
        kernels::leaky_relu_forward(self.store[x].data(), slope, out.data_mut());
        Ok(self.put(out))
    }

    fn tanh(&mut self, x: usize) -> Result<usize> {
        let mut out = Tensor::zeros(self.store[x].shape());
        kernels::tanh_forward(self.store[x].data(), out.data_mut());
        Ok(self.put(out))
    }

    fn add(&mut self, a: usize, b: usize) -> Result<usize> {
        let (sa, sb) = (self.store[a].shape(), self.store[b].shape());
        if sa != sb {
            return Err(Error::DimMismatch {
                op: "elementwise_add",
                axis: "time",
                expected: sa.time,
                actual: sb.time,
            });
        }
        let mut out = Tensor::zeros(sa);
        for ((o, &x), &y) in out
            .data_mut()
            .iter_mut()
            .zip(self.store[a].data())
            .zip(self.store[b].data())
        {
            *o = x + y;
        }
        Ok(self.put(out))
    }

    fn avg_pool(&mut self, x: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
        let xs = self.store[x].shape();
        let t_out = kernels::avg_pool1d_out_time(xs.time, kernel, stride, padding)?;
        let mut out = Tensor::zeros(Shape::new(xs.batch, xs.channels, t_out));
        kernels::avg_pool1d_forward(
            self.store[x].data(),
            xs.batch * xs.channels,
            xs.time,
            kernel,
            stride,
            padding,
            out.data_mut(),
        );
        Ok(self.put(out))
    }

    fn time_of(&self, x: usize) -> usize {
        self.store[x].shape().time
    }
}

// ---------------------------------------------------------------------------
// recorded execution on the autodiff graph
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct WnNodeIds {
    pub v: NodeId,
    pub g: NodeId,
    pub b: NodeId,
}

/// Registers every layer's tensors as (optionally trainable) graph leaves.
pub fn register_params(
    graph: &mut Graph,
    params: &ModelParams,
    requires_grad: bool,
) -> BTreeMap<String, WnNodeIds> {
    let mut ids = BTreeMap::new();
    for (name, layer) in params.iter() {
        let v = graph.named_leaf(
            format!("{name}.v"),
            layer.v.clone().with_requires_grad(requires_grad),
        );
        let g = graph.named_leaf(
            format!("{name}.g"),
            layer.g.clone().with_requires_grad(requires_grad),
        );
        let b = graph.named_leaf(
            format!("{name}.b"),
            layer.bias.clone().with_requires_grad(requires_grad),
        );
        ids.insert(name.to_string(), WnNodeIds { v, g, b });
    }
    ids
}

pub(crate) struct GraphBackend<'a, 'g> {
    pub graph: &'g mut Graph,
    pub ids: &'a BTreeMap<String, WnNodeIds>,
    pub norm: NormKind,
}

impl Backend for GraphBackend<'_, '_> {
    type Handle = NodeId;

    fn conv(&mut self, name: &str, spec: &ConvSpec, x: NodeId) -> Result<NodeId> {
        if self.norm == NormKind::Spectral {
            return Err(spectral_unsupported());
        }
        let ids = self.ids.get(name).ok_or_else(|| missing_layer(name))?;
        check_weight_shape(name, spec, self.graph.value(ids.v).shape())?;
        let w = self.graph.weight_norm(ids.v, ids.g)?;
        if spec.transposed {
            self.graph.conv_transpose1d(x, w, ids.b, spec)
        } else {
            self.graph.conv1d(x, w, ids.b, spec)
        }
    }

    fn leaky_relu(&mut self, x: NodeId, slope: f32) -> Result<NodeId> {
        self.graph.leaky_relu(x, slope)
    }

    fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        Ok(self.graph.tanh(x))
    }

    fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.graph.add(a, b)
    }

    fn avg_pool(&mut self, x: NodeId, kernel: usize, stride: usize, padding: usize) -> Result<NodeId> {
        self.graph.avg_pool1d(x, kernel, stride, padding)
    }

    fn time_of(&self, x: NodeId) -> usize {
        self.graph.value(x).shape().time
    }
}
