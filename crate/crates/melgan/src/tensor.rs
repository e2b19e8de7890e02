//! Rank-3 `[batch, channels, time]` float tensors and convolution specs.
//!
//! The time axis is contiguous (row-major in batch, channel, time order) so
//! convolution inner loops run over adjacent memory.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub time: usize,
}

impl Shape {
    pub fn new(batch: usize, channels: usize, time: usize) -> Self {
        Shape {
            batch,
            channels,
            time,
        }
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.time
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}, {}]", self.batch, self.channels, self.time)
    }
}

/// A dense float32 tensor. Shape is fixed at creation; `data` may be mutated
/// in place (optimizer updates) but never resized.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<f32>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::DimMismatch {
                op: "Tensor::from_vec",
                axis: "numel",
                expected: shape.numel(),
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// `[1,1,1]` tensor holding a single value.
    pub fn scalar(value: f32) -> Self {
        Tensor::filled(Shape::new(1, 1, 1), value)
    }

    /// Samples from N(0, std^2) via Box-Muller, deterministic given the RNG.
    pub fn randn<R: Rng>(shape: Shape, std: f32, rng: &mut R) -> Self {
        let n = shape.numel();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            data.push((r * theta.cos() * std as f64) as f32);
            if data.len() < n {
                data.push((r * theta.sin() * std as f64) as f32);
            }
        }
        Tensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.numel()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f32]) {
        debug_assert_eq!(delta.len(), self.data.len());
        let grad = self
            .grad
            .get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Value of a `[1,1,1]` tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    /// Contiguous time row for one (batch, channel) pair.
    pub fn plane(&self, batch: usize, channel: usize) -> &[f32] {
        let t = self.shape.time;
        let start = (batch * self.shape.channels + channel) * t;
        &self.data[start..start + t]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PaddingMode {
    Zeros,
    Reflect,
}

impl std::fmt::Display for PaddingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PaddingMode::Zeros => write!(f, "zeros"),
            PaddingMode::Reflect => write!(f, "reflect"),
        }
    }
}

/// Geometry of one (possibly transposed, grouped, dilated) 1-D convolution.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub transposed: bool,
    /// Frames added on each side before the convolution (or trimmed from the
    /// transposed output).
    pub padding: usize,
    pub padding_mode: PaddingMode,
}

impl ConvSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            dilation: 1,
            groups: 1,
            transposed: false,
            padding: 0,
            padding_mode: PaddingMode::Zeros,
        }
    }

    pub fn conv_transpose(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        ConvSpec {
            transposed: true,
            ..ConvSpec::conv(in_channels, out_channels, kernel_size)
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn reflect(mut self) -> Self {
        self.padding_mode = PaddingMode::Reflect;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidArg {
            op: "ConvSpec",
            reason,
        };
        if self.kernel_size == 0 || self.stride == 0 || self.dilation == 0 || self.groups == 0 {
            return Err(fail(format!(
                "kernel/stride/dilation/groups must be >= 1, got k={} s={} d={} g={}",
                self.kernel_size, self.stride, self.dilation, self.groups
            )));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(fail(format!(
                "channels must divide groups: in={} out={} groups={}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        if self.transposed && self.dilation != 1 {
            return Err(fail("transposed convolution requires dilation = 1".into()));
        }
        if self.transposed && self.padding_mode != PaddingMode::Zeros {
            return Err(fail(
                "transposed convolution requires zeros padding mode".into(),
            ));
        }
        Ok(())
    }

    /// Span of the kernel over the input: (k-1)*dilation + 1.
    pub fn effective_kernel(&self) -> usize {
        (self.kernel_size - 1) * self.dilation + 1
    }

    /// Stored weight shape: `(out, in/groups, k)` regular,
    /// `(in, out/groups, k)` transposed.
    pub fn weight_shape(&self) -> Shape {
        if self.transposed {
            Shape::new(
                self.in_channels,
                self.out_channels / self.groups,
                self.kernel_size,
            )
        } else {
            Shape::new(
                self.out_channels,
                self.in_channels / self.groups,
                self.kernel_size,
            )
        }
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1)
    }

    /// Output time length for an input of `t_in` frames.
    pub fn out_time(&self, t_in: usize) -> Result<usize> {
        if self.transposed {
            if t_in == 0 {
                return Err(Error::InvalidArg {
                    op: "conv_transpose1d",
                    reason: "input time must be >= 1".into(),
                });
            }
            let full = (t_in - 1) * self.stride + self.kernel_size;
            if full < 2 * self.padding + 1 {
                return Err(Error::InvalidArg {
                    op: "conv_transpose1d",
                    reason: format!(
                        "computed output length {full} - 2*{} is not positive",
                        self.padding
                    ),
                });
            }
            Ok(full - 2 * self.padding)
        } else {
            let padded = t_in + 2 * self.padding;
            let eff = self.effective_kernel();
            if padded < eff {
                return Err(Error::InvalidArg {
                    op: "conv1d",
                    reason: format!(
                        "padded time {padded} shorter than effective kernel extent {eff}"
                    ),
                });
            }
            Ok((padded - eff) / self.stride + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        let err = Tensor::from_vec(Shape::new(1, 2, 3), vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::DimMismatch { axis: "numel", .. }));
    }

    #[test]
    fn grad_accumulates_additively() {
        let mut t = Tensor::zeros(Shape::new(1, 1, 3));
        t.accumulate_grad(&[1.0, 2.0, 3.0]);
        t.accumulate_grad(&[1.0, 1.0, 1.0]);
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn randn_is_deterministic_for_a_seed() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = Tensor::randn(Shape::new(2, 3, 4), 0.02, &mut r1);
        let b = Tensor::randn(Shape::new(2, 3, 4), 0.02, &mut r2);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn conv_length_formula() {
        let spec = ConvSpec::conv(1, 1, 3).stride(1).dilation(1);
        assert_eq!(spec.out_time(4).unwrap(), 2);
        let spec = ConvSpec::conv(1, 1, 41).stride(4).padding(20);
        assert_eq!(spec.out_time(16384).unwrap(), 4096);
    }

    #[test]
    fn transposed_length_formula_gives_exact_upsampling() {
        // kernel 16, stride 8, padding 4 -> 8x upsampling
        let spec = ConvSpec::conv_transpose(1, 1, 16).stride(8).padding(4);
        for t in 1..64 {
            assert_eq!(spec.out_time(t).unwrap(), 8 * t);
        }
    }

    #[test]
    fn transposed_negative_length_rejected() {
        let spec = ConvSpec::conv_transpose(1, 1, 2).stride(1).padding(3);
        assert!(spec.out_time(1).is_err());
    }

    #[test]
    fn grouped_channel_divisibility_enforced() {
        let spec = ConvSpec::conv(6, 4, 3).groups(4);
        assert!(spec.validate().is_err());
        let spec = ConvSpec::conv(8, 4, 3).groups(4);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn transposed_dilation_rejected() {
        let spec = ConvSpec::conv_transpose(1, 1, 4).dilation(2);
        assert!(spec.validate().is_err());
    }
}
