//! Reverse-mode autodiff tape over rank-3 tensors.
//!
//! Operations are recorded in execution order; `backward` replays them once in
//! reverse, accumulating vector-Jacobian products. Leaf gradients persist
//! across `backward` calls (additive); intermediate gradients are cleared at
//! the start of each pass.

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{ConvSpec, Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeId(usize);

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Conv1d { x: NodeId, w: NodeId, b: NodeId, spec: ConvSpec },
    ConvT1d { x: NodeId, w: NodeId, b: NodeId, spec: ConvSpec },
    AvgPool { x: NodeId, kernel: usize, stride: usize, padding: usize },
    LeakyRelu { x: NodeId, slope: f32 },
    Relu { x: NodeId },
    Tanh { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Affine { x: NodeId, scale: f32 },
    SumAll { x: NodeId },
    MeanAll { x: NodeId },
    L1Mean { a: NodeId, b: NodeId },
    WeightNorm { v: NodeId, g: NodeId },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv1d { .. } => "conv1d",
            Op::ConvT1d { .. } => "conv_transpose1d",
            Op::AvgPool { .. } => "avg_pool1d",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Relu { .. } => "relu",
            Op::Tanh { .. } => "tanh",
            Op::Add { .. } => "add",
            Op::Affine { .. } => "affine",
            Op::SumAll { .. } => "sum",
            Op::MeanAll { .. } => "mean",
            Op::L1Mean { .. } => "l1_mean",
            Op::WeightNorm { .. } => "weight_norm",
        }
    }
}

struct Node {
    tensor: Tensor,
    op: Op,
    label: Option<String>,
}

pub struct Graph {
    nodes: Vec<Node>,
    threads: usize,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            threads: kernels::max_threads(),
        }
    }

    pub fn with_threads(threads: usize) -> Self {
        Graph {
            nodes: Vec::new(),
            threads: kernels::clamp_threads(threads),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor. Gradient flows to it iff `requires_grad` is
    /// set on the tensor.
    pub fn leaf(&mut self, tensor: Tensor) -> NodeId {
        self.push(tensor, Op::Leaf, None)
    }

    pub fn named_leaf(&mut self, name: impl Into<String>, tensor: Tensor) -> NodeId {
        self.push(tensor, Op::Leaf, Some(name.into()))
    }

    pub fn scalar_leaf(&mut self, value: f32) -> NodeId {
        self.leaf(Tensor::scalar(value))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.nodes[id.0].tensor.grad()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.tensor.zero_grad();
        }
    }

    /// Name of the first tensor (in execution order) containing NaN/Inf.
    pub fn first_nonfinite(&self) -> Option<String> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.tensor.is_finite())
            .map(|(i, n)| self.describe(i, n))
    }

    fn describe(&self, index: usize, node: &Node) -> String {
        match &node.label {
            Some(l) => l.clone(),
            None => format!("{}#{}", node.op.name(), index),
        }
    }

    fn push(&mut self, tensor: Tensor, op: Op, label: Option<String>) -> NodeId {
        self.nodes.push(Node { tensor, op, label });
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, mut tensor: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires = inputs.iter().any(|id| self.nodes[id.0].tensor.requires_grad());
        tensor = tensor.with_requires_grad(requires);
        self.push(tensor, op, None)
    }

    fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].tensor.shape()
    }

    fn check_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            let axis = if sa.batch != sb.batch {
                "batch"
            } else if sa.channels != sb.channels {
                "channels"
            } else {
                "time"
            };
            let (expected, actual) = match axis {
                "batch" => (sa.batch, sb.batch),
                "channels" => (sa.channels, sb.channels),
                _ => (sa.time, sb.time),
            };
            return Err(Error::DimMismatch { op, axis, expected, actual });
        }
        Ok(())
    }

    // -- operations ---------------------------------------------------------

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: NodeId, spec: &ConvSpec) -> Result<NodeId> {
        spec.validate()?;
        if spec.transposed {
            return Err(Error::InvalidArg {
                op: "conv1d",
                reason: "spec is transposed; use conv_transpose1d".into(),
            });
        }
        let xs = self.shape(x);
        if xs.channels != spec.in_channels {
            return Err(Error::DimMismatch {
                op: "conv1d",
                axis: "channels",
                expected: spec.in_channels,
                actual: xs.channels,
            });
        }
        let ws = self.shape(w);
        if ws != spec.weight_shape() {
            return Err(Error::DimMismatch {
                op: "conv1d",
                axis: "channels",
                expected: spec.weight_shape().numel(),
                actual: ws.numel(),
            });
        }
        if self.shape(b).numel() != spec.out_channels {
            return Err(Error::DimMismatch {
                op: "conv1d",
                axis: "channels",
                expected: spec.out_channels,
                actual: self.shape(b).numel(),
            });
        }
        let t_out = spec.out_time(xs.time)?;
        let geom = conv_geom(spec, xs, t_out);
        let planes = xs.batch * xs.channels;
        let mut padded = vec![0.0; planes * geom.time];
        kernels::pad1d(
            self.nodes[x.0].tensor.data(),
            planes,
            xs.time,
            spec.padding,
            spec.padding_mode,
            &mut padded,
        )?;
        let mut out = Tensor::zeros(Shape::new(xs.batch, spec.out_channels, t_out));
        kernels::conv1d_forward(
            &padded,
            self.nodes[w.0].tensor.data(),
            Some(self.nodes[b.0].tensor.data()),
            &geom,
            out.data_mut(),
            self.threads,
        );
        Ok(self.push_op(out, Op::Conv1d { x, w, b, spec: *spec }, &[x, w, b]))
    }

    pub fn conv_transpose1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        spec: &ConvSpec,
    ) -> Result<NodeId> {
        spec.validate()?;
        if !spec.transposed {
            return Err(Error::InvalidArg {
                op: "conv_transpose1d",
                reason: "spec is not transposed; use conv1d".into(),
            });
        }
        let xs = self.shape(x);
        if xs.channels != spec.in_channels {
            return Err(Error::DimMismatch {
                op: "conv_transpose1d",
                axis: "channels",
                expected: spec.in_channels,
                actual: xs.channels,
            });
        }
        let ws = self.shape(w);
        if ws != spec.weight_shape() {
            return Err(Error::DimMismatch {
                op: "conv_transpose1d",
                axis: "channels",
                expected: spec.weight_shape().numel(),
                actual: ws.numel(),
            });
        }
        let t_out = spec.out_time(xs.time)?;
        let geom = convt_geom(spec, xs, t_out);
        let mut out = Tensor::zeros(Shape::new(xs.batch, spec.out_channels, t_out));
        kernels::convt1d_forward(
            self.nodes[x.0].tensor.data(),
            self.nodes[w.0].tensor.data(),
            Some(self.nodes[b.0].tensor.data()),
            &geom,
            out.data_mut(),
            self.threads,
        );
        Ok(self.push_op(out, Op::ConvT1d { x, w, b, spec: *spec }, &[x, w, b]))
    }

    pub fn avg_pool1d(
        &mut self,
        x: NodeId,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        if kernel == 0 || stride == 0 {
            return Err(Error::InvalidArg {
                op: "avg_pool1d",
                reason: "kernel and stride must be >= 1".into(),
            });
        }
        let xs = self.shape(x);
        let t_out = kernels::avg_pool1d_out_time(xs.time, kernel, stride, padding)?;
        let mut out = Tensor::zeros(Shape::new(xs.batch, xs.channels, t_out));
        kernels::avg_pool1d_forward(
            self.nodes[x.0].tensor.data(),
            xs.batch * xs.channels,
            xs.time,
            kernel,
            stride,
            padding,
            out.data_mut(),
        );
        Ok(self.push_op(out, Op::AvgPool { x, kernel, stride, padding }, &[x]))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f32) -> Result<NodeId> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::InvalidArg {
                op: "leaky_relu",
                reason: format!("slope must lie in (0,1), got {slope}"),
            });
        }
        let mut out = Tensor::zeros(self.shape(x));
        kernels::leaky_relu_forward(self.nodes[x.0].tensor.data(), slope, out.data_mut());
        Ok(self.push_op(out, Op::LeakyRelu { x, slope }, &[x]))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut out = Tensor::zeros(self.shape(x));
        kernels::relu_forward(self.nodes[x.0].tensor.data(), out.data_mut());
        self.push_op(out, Op::Relu { x }, &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let mut out = Tensor::zeros(self.shape(x));
        kernels::tanh_forward(self.nodes[x.0].tensor.data(), out.data_mut());
        self.push_op(out, Op::Tanh { x }, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("elementwise_add", a, b)?;
        let mut out = Tensor::zeros(self.shape(a));
        for ((o, &x), &y) in out
            .data_mut()
            .iter_mut()
            .zip(self.nodes[a.0].tensor.data())
            .zip(self.nodes[b.0].tensor.data())
        {
            *o = x + y;
        }
        Ok(self.push_op(out, Op::Add { a, b }, &[a, b]))
    }

    /// y = scale * x + shift, elementwise with scalar constants.
    pub fn affine(&mut self, x: NodeId, scale: f32, shift: f32) -> NodeId {
        let mut out = Tensor::zeros(self.shape(x));
        for (o, &v) in out.data_mut().iter_mut().zip(self.nodes[x.0].tensor.data()) {
            *o = scale * v + shift;
        }
        self.push_op(out, Op::Affine { x, scale }, &[x])
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = kernels::sum_f64(self.nodes[x.0].tensor.data()) as f32;
        self.push_op(Tensor::scalar(s), Op::SumAll { x }, &[x])
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x.0].tensor.numel() as f64;
        let s = (kernels::sum_f64(self.nodes[x.0].tensor.data()) / n) as f32;
        self.push_op(Tensor::scalar(s), Op::MeanAll { x }, &[x])
    }

    /// Mean over all elements of |a - b|.
    pub fn l1_mean(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("l1_mean", a, b)?;
        let (ta, tb) = (self.nodes[a.0].tensor.data(), self.nodes[b.0].tensor.data());
        let n = ta.len() as f64;
        let s: f64 = ta
            .iter()
            .zip(tb)
            .map(|(&x, &y)| ((x - y) as f64).abs())
            .sum();
        Ok(self.push_op(Tensor::scalar((s / n) as f32), Op::L1Mean { a, b }, &[a, b]))
    }

    /// w = g * v / ||v||_2 per leading-axis slice of `v`.
    pub fn weight_norm(&mut self, v: NodeId, g: NodeId) -> Result<NodeId> {
        let vs = self.shape(v);
        if self.shape(g).numel() != vs.batch {
            return Err(Error::DimMismatch {
                op: "weight_norm",
                axis: "channels",
                expected: vs.batch,
                actual: self.shape(g).numel(),
            });
        }
        let mut out = Tensor::zeros(vs);
        kernels::wn_fold(
            self.nodes[v.0].tensor.data(),
            self.nodes[g.0].tensor.data(),
            vs.batch,
            out.data_mut(),
        )?;
        Ok(self.push_op(out, Op::WeightNorm { v, g }, &[v, g]))
    }

    // -- backward ------------------------------------------------------------

    /// Accumulates d(root)/d(leaf) into every `requires_grad` leaf.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let root_node = &self.nodes[root.0];
        if root_node.tensor.numel() != 1 {
            return Err(Error::NotScalar {
                op: "backward",
                numel: root_node.tensor.numel(),
            });
        }
        if matches!(root_node.op, Op::Leaf) {
            return Err(Error::DetachedGraph);
        }
        // fresh flow for intermediates; leaves keep accumulating
        for node in &mut self.nodes {
            if !matches!(node.op, Op::Leaf) {
                node.tensor.zero_grad();
            }
        }
        self.nodes[root.0].tensor.accumulate_grad(&[1.0]);

        for id in (0..=root.0).rev() {
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            if !self.nodes[id].tensor.requires_grad() {
                continue;
            }
            let Some(g_out) = self.nodes[id].tensor.grad().map(|g| g.to_vec()) else {
                continue;
            };
            self.backward_op(id, &g_out);
        }
        Ok(())
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].tensor.requires_grad()
    }

    fn accum(&mut self, id: NodeId, delta: &[f32]) {
        self.nodes[id.0].tensor.accumulate_grad(delta);
    }

    fn backward_op(&mut self, id: usize, g_out: &[f32]) {
        let op = self.nodes[id].op;
        match op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b, spec } => {
                let xs = self.shape(x);
                let t_out = self.shape_of(id).time;
                let geom = conv_geom(&spec, xs, t_out);
                let planes = xs.batch * xs.channels;
                if self.requires(x) {
                    let mut g_padded = vec![0.0; planes * geom.time];
                    kernels::conv1d_backward_input(
                        g_out,
                        self.nodes[w.0].tensor.data(),
                        &geom,
                        &mut g_padded,
                        self.threads,
                    );
                    let mut g_x = vec![0.0; planes * xs.time];
                    kernels::pad1d_backward(
                        &g_padded,
                        planes,
                        xs.time,
                        spec.padding,
                        spec.padding_mode,
                        &mut g_x,
                    );
                    self.accum(x, &g_x);
                }
                if self.requires(w) {
                    let mut padded = vec![0.0; planes * geom.time];
                    kernels::pad1d(
                        self.nodes[x.0].tensor.data(),
                        planes,
                        xs.time,
                        spec.padding,
                        spec.padding_mode,
                        &mut padded,
                    )
                    .expect("padding validated during forward");
                    let mut g_w = vec![0.0; self.nodes[w.0].tensor.numel()];
                    kernels::conv1d_backward_weight(g_out, &padded, &geom, &mut g_w, self.threads);
                    self.accum(w, &g_w);
                }
                if self.requires(b) {
                    let mut g_b = vec![0.0; spec.out_channels];
                    kernels::conv1d_backward_bias(g_out, xs.batch, spec.out_channels, t_out, &mut g_b);
                    self.accum(b, &g_b);
                }
            }
            Op::ConvT1d { x, w, b, spec } => {
                let xs = self.shape(x);
                let t_out = self.shape_of(id).time;
                let geom = convt_geom(&spec, xs, t_out);
                if self.requires(x) {
                    let mut g_x = vec![0.0; self.nodes[x.0].tensor.numel()];
                    kernels::convt1d_backward_input(
                        g_out,
                        self.nodes[w.0].tensor.data(),
                        &geom,
                        &mut g_x,
                        self.threads,
                    );
                    self.accum(x, &g_x);
                }
                if self.requires(w) {
                    let mut g_w = vec![0.0; self.nodes[w.0].tensor.numel()];
                    kernels::convt1d_backward_weight(
                        g_out,
                        self.nodes[x.0].tensor.data(),
                        &geom,
                        &mut g_w,
                        self.threads,
                    );
                    self.accum(w, &g_w);
                }
                if self.requires(b) {
                    let mut g_b = vec![0.0; spec.out_channels];
                    kernels::conv1d_backward_bias(g_out, xs.batch, spec.out_channels, t_out, &mut g_b);
                    self.accum(b, &g_b);
                }
            }
            Op::AvgPool { x, kernel, stride, padding } => {
                if self.requires(x) {
                    let xs = self.shape(x);
                    let mut g_x = vec![0.0; self.nodes[x.0].tensor.numel()];
                    kernels::avg_pool1d_backward(
                        g_out,
                        xs.batch * xs.channels,
                        xs.time,
                        kernel,
                        stride,
                        padding,
                        &mut g_x,
                    );
                    self.accum(x, &g_x);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if self.requires(x) {
                    let mut g_x = vec![0.0; g_out.len()];
                    kernels::leaky_relu_backward(self.nodes[x.0].tensor.data(), g_out, slope, &mut g_x);
                    self.accum(x, &g_x);
                }
            }
            Op::Relu { x } => {
                if self.requires(x) {
                    let mut g_x = vec![0.0; g_out.len()];
                    kernels::relu_backward(self.nodes[x.0].tensor.data(), g_out, &mut g_x);
                    self.accum(x, &g_x);
                }
            }
            Op::Tanh { x } => {
                if self.requires(x) {
                    let mut g_x = vec![0.0; g_out.len()];
                    kernels::tanh_backward(self.nodes[id].tensor.data(), g_out, &mut g_x);
                    self.accum(x, &g_x);
                }
            }
            Op::Add { a, b } => {
                if self.requires(a) {
                    self.accum(a, g_out);
                }
                if self.requires(b) {
                    self.accum(b, g_out);
                }
            }
            Op::Affine { x, scale } => {
                if self.requires(x) {
                    let g_x: Vec<f32> = g_out.iter().map(|&g| g * scale).collect();
                    self.accum(x, &g_x);
                }
            }
            Op::SumAll { x } => {
                if self.requires(x) {
                    let g = g_out[0];
                    let g_x = vec![g; self.nodes[x.0].tensor.numel()];
                    self.accum(x, &g_x);
                }
            }
            Op::MeanAll { x } => {
                if self.requires(x) {
                    let n = self.nodes[x.0].tensor.numel();
                    let g = g_out[0] / n as f32;
                    let g_x = vec![g; n];
                    self.accum(x, &g_x);
                }
            }
            Op::L1Mean { a, b } => {
                let n = self.nodes[a.0].tensor.numel() as f32;
                let g = g_out[0] / n;
                let (da, db): (Vec<f32>, Vec<f32>) = self.nodes[a.0]
                    .tensor
                    .data()
                    .iter()
                    .zip(self.nodes[b.0].tensor.data())
                    .map(|(&x, &y)| {
                        let s = if x > y {
                            g
                        } else if x < y {
                            -g
                        } else {
                            0.0
                        };
                        (s, -s)
                    })
                    .unzip();
                if self.requires(a) {
                    self.accum(a, &da);
                }
                if self.requires(b) {
                    self.accum(b, &db);
                }
            }
            Op::WeightNorm { v, g } => {
                let vs = self.shape(v);
                let rows = vs.batch;
                let row_len = vs.channels * vs.time;
                let v_data = self.nodes[v.0].tensor.data();
                let g_data = self.nodes[g.0].tensor.data();
                let norms = kernels::wn_norms(v_data, rows).expect("validated during forward");
                let mut g_v = vec![0.0; v_data.len()];
                let mut g_g = vec![0.0; rows];
                for r in 0..rows {
                    let vr = &v_data[r * row_len..(r + 1) * row_len];
                    let gr = &g_out[r * row_len..(r + 1) * row_len];
                    let n = norms[r] as f64;
                    let dotvg: f64 = vr
                        .iter()
                        .zip(gr)
                        .map(|(&vv, &gv)| vv as f64 * gv as f64)
                        .sum();
                    g_g[r] = (dotvg / n) as f32;
                    let scale = g_data[r] as f64 / n;
                    let corr = g_data[r] as f64 * dotvg / (n * n * n);
                    for ((gvv, &gv), &vv) in g_v[r * row_len..(r + 1) * row_len]
                        .iter_mut()
                        .zip(gr)
                        .zip(vr)
                    {
                        *gvv = (scale * gv as f64 - corr * vv as f64) as f32;
                    }
                }
                if self.requires(v) {
                    self.accum(v, &g_v);
                }
                if self.requires(g) {
                    self.accum(g, &g_g);
                }
            }
        }
    }

    fn shape_of(&self, id: usize) -> Shape {
        self.nodes[id].tensor.shape()
    }
}

fn conv_geom(spec: &ConvSpec, xs: Shape, t_out: usize) -> kernels::ConvGeom {
    kernels::ConvGeom {
        batch: xs.batch,
        in_channels: spec.in_channels,
        time: xs.time + 2 * spec.padding,
        out_channels: spec.out_channels,
        kernel: spec.kernel_size,
        stride: spec.stride,
        dilation: spec.dilation,
        groups: spec.groups,
        out_time: t_out,
    }
}

fn convt_geom(spec: &ConvSpec, xs: Shape, t_out: usize) -> kernels::ConvTGeom {
    kernels::ConvTGeom {
        batch: xs.batch,
        in_channels: spec.in_channels,
        time: xs.time,
        out_channels: spec.out_channels,
        kernel: spec.kernel_size,
        stride: spec.stride,
        padding: spec.padding,
        groups: spec.groups,
        out_time: t_out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: (usize, usize, usize), data: Vec<f32>) -> Tensor {
        Tensor::from_vec(Shape::new(shape.0, shape.1, shape.2), data).unwrap()
    }

    #[test]
    fn conv1d_identity_kernel() {
        let mut g = Graph::new();
        let x = g.leaf(t((1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]));
        let w = g.leaf(t((1, 1, 1), vec![1.0]));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 1, 1)));
        let spec = ConvSpec::conv(1, 1, 1);
        let y = g.conv1d(x, w, b, &spec).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv1d_difference_kernel() {
        let mut g = Graph::new();
        let x = g.leaf(t((1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]));
        let w = g.leaf(t((1, 1, 3), vec![1.0, 0.0, -1.0]));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 1, 1)));
        let y = g.conv1d(x, w, b, &ConvSpec::conv(1, 1, 3)).unwrap();
        assert_eq!(g.value(y).data(), &[-2.0, -2.0]);
    }

    #[test]
    fn conv1d_grouped_identity() {
        let mut g = Graph::new();
        let x = g.leaf(t((1, 2, 4), (1..=8).map(|v| v as f32).collect()));
        let w = g.leaf(t((2, 1, 1), vec![1.0, 1.0]));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 2, 1)));
        let spec = ConvSpec::conv(2, 2, 1).groups(2);
        let y = g.conv1d(x, w, b, &spec).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn conv1d_channel_mismatch_names_axis() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 3, 4)));
        let w = g.leaf(Tensor::zeros(Shape::new(1, 1, 1)));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 1, 1)));
        let err = g.conv1d(x, w, b, &ConvSpec::conv(1, 1, 1)).unwrap_err();
        match err {
            Error::DimMismatch { axis, .. } => assert_eq!(axis, "channels"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn conv_transpose_scatter_example() {
        let mut g = Graph::new();
        let x = g.leaf(t((1, 1, 1), vec![1.0]));
        let w = g.leaf(t((1, 1, 2), vec![1.0, 2.0]));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 1, 1)));
        let spec = ConvSpec::conv_transpose(1, 1, 2).stride(2);
        let y = g.conv_transpose1d(x, w, b, &spec).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn conv_transpose_zero_input_zero_output() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(Shape::new(2, 3, 5)));
        let w = g.leaf(Tensor::filled(Shape::new(3, 2, 8), 0.7));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 2, 1)));
        let spec = ConvSpec::conv_transpose(3, 2, 8).stride(4).padding(2);
        let y = g.conv_transpose1d(x, w, b, &spec).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn leaky_relu_values() {
        let mut g = Graph::new();
        let x = g.leaf(t((1, 1, 3), vec![1.0, -1.0, 0.0]));
        let y = g.leaky_relu(x, 0.2).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -0.2, 0.0]);
    }

    #[test]
    fn leaky_relu_slope_range_enforced() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 1, 1)));
        assert!(g.leaky_relu(x, 0.0).is_err());
        assert!(g.leaky_relu(x, 1.0).is_err());
    }

    #[test]
    fn tanh_odd_and_saturating() {
        let mut g = Graph::new();
        let x = g.leaf(t((1, 1, 3), vec![0.0, 20.0, -20.0]));
        let y = g.tanh(x);
        let out = g.value(y).data();
        assert_eq!(out[0], 0.0);
        assert!((out[1] - 1.0).abs() < 1e-6);
        assert_eq!(out[1], -out[2]);
    }

    #[test]
    fn add_and_backward_distributes() {
        let mut g = Graph::new();
        let a = g.leaf(t((1, 1, 2), vec![1.0, 2.0]).with_requires_grad(true));
        let b = g.leaf(t((1, 1, 2), vec![3.0, 4.0]).with_requires_grad(true));
        let y = g.add(a, b).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 6.0]);
        let s = g.sum_all(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[1.0, 1.0]);
        assert_eq!(g.grad(b).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn add_shape_mismatch_rejected() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(Shape::new(1, 1, 2)));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 1, 3)));
        assert!(g.add(a, b).is_err());
    }

    #[test]
    fn l1_mean_values_and_symmetry() {
        let mut g = Graph::new();
        let a = g.leaf(t((1, 1, 2), vec![1.0, 2.0]));
        let b = g.leaf(t((1, 1, 2), vec![0.0, 0.0]));
        let y = g.l1_mean(a, b).unwrap();
        assert_eq!(g.value(y).item(), 1.5);
        let y2 = g.l1_mean(b, a).unwrap();
        assert_eq!(g.value(y2).item(), 1.5);
        let same = g.l1_mean(a, a).unwrap();
        assert_eq!(g.value(same).item(), 0.0);
    }

    #[test]
    fn l1_mean_grad_is_sign_over_n() {
        let mut g = Graph::new();
        let a = g.leaf(t((1, 1, 4), vec![1.0, 2.0, 3.0, 4.0]).with_requires_grad(true));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 1, 4)));
        let y = g.l1_mean(a, b).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(a).unwrap(), &[0.25; 4]);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(t((2, 2, 2), vec![0.5; 8]).with_requires_grad(true));
        let s = g.sum_all(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0; 8]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 1, 2)).with_requires_grad(true));
        let y = g.relu(x);
        assert!(matches!(g.backward(y), Err(Error::NotScalar { .. })));
    }

    #[test]
    fn backward_on_detached_leaf_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(1.0).with_requires_grad(true));
        assert!(matches!(g.backward(x), Err(Error::DetachedGraph)));
    }

    #[test]
    fn repeated_backward_accumulates_on_leaves() {
        let mut g = Graph::new();
        let x = g.leaf(t((1, 1, 2), vec![1.0, 2.0]).with_requires_grad(true));
        let s = g.sum_all(x);
        g.backward(s).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
        g.zero_grads();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn no_grad_flows_to_non_requiring_leaf() {
        let mut g = Graph::new();
        let a = g.leaf(t((1, 1, 2), vec![1.0, 2.0]).with_requires_grad(true));
        let b = g.leaf(t((1, 1, 2), vec![5.0, 6.0]));
        let y = g.add(a, b).unwrap();
        let s = g.sum_all(y);
        g.backward(s).unwrap();
        assert!(g.grad(a).is_some());
        assert!(g.grad(b).is_none());
    }

    #[test]
    fn weight_norm_examples() {
        let mut g = Graph::new();
        // v row [3,4] with g = 5 keeps the row unchanged
        let v = g.leaf(t((1, 1, 2), vec![3.0, 4.0]));
        let gg = g.leaf(t((1, 1, 1), vec![5.0]));
        let w = g.weight_norm(v, gg).unwrap();
        assert_eq!(g.value(w).data(), &[3.0, 4.0]);

        // scaling v by c > 0 leaves w unchanged
        let v2 = g.leaf(t((1, 1, 2), vec![9.0, 12.0]));
        let w2 = g.weight_norm(v2, gg).unwrap();
        let diff: f32 = g
            .value(w)
            .data()
            .iter()
            .zip(g.value(w2).data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(diff < 1e-6);
    }

    #[test]
    fn weight_norm_zero_norm_rejected() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::zeros(Shape::new(2, 1, 3)));
        let gg = g.leaf(Tensor::filled(Shape::new(2, 1, 1), 1.0));
        assert!(g.weight_norm(v, gg).is_err());
    }

    #[test]
    fn inputs_unmodified_by_forward() {
        let mut g = Graph::new();
        let data = vec![0.3, -0.7, 1.2, 0.0, 2.0, -1.0];
        let x = g.leaf(t((1, 2, 3), data.clone()));
        let w = g.leaf(t((2, 2, 2), vec![0.1; 8]));
        let b = g.leaf(Tensor::zeros(Shape::new(1, 2, 1)));
        let spec = ConvSpec::conv(2, 2, 2).padding(1);
        g.conv1d(x, w, b, &spec).unwrap();
        let _ = g.leaky_relu(x, 0.2).unwrap();
        let _ = g.tanh(x);
        let _ = g.avg_pool1d(x, 2, 1, 0).unwrap();
        assert_eq!(g.value(x).data(), &data[..]);
    }

    #[test]
    fn first_nonfinite_names_offender() {
        let mut g = Graph::new();
        let x = g.named_leaf("probe", t((1, 1, 2), vec![1.0, f32::NAN]));
        let _ = x;
        assert_eq!(g.first_nonfinite().unwrap(), "probe");
    }
}
