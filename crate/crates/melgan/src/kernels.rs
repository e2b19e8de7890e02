//! Raw convolution/pooling/activation loops over `&[f32]` buffers.
//!
//! Every kernel writes each output element from exactly one task with a fixed
//! accumulation order, so results are bit-identical for any worker count.
//! Reductions use a fixed 8-lane summation tree, which keeps them both
//! deterministic and autovectorizable.
//!
//! Regular convolutions expect the caller to have materialized padding
//! (`pad1d`); transposed convolutions crop their own output padding.

use crate::error::{Error, Result};
use crate::tensor::PaddingMode;

/// Resolved geometry for a (possibly grouped/dilated) convolution whose
/// padding has already been applied to the input.
#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    /// Input time including padding.
    pub time: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub groups: usize,
    pub out_time: usize,
}

impl ConvGeom {
    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }
    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }
}

// ---------------------------------------------------------------------------
// threading
// ---------------------------------------------------------------------------

/// Worker cap: MELGAN_THREADS if set, else available parallelism.
pub fn max_threads() -> usize {
    use std::sync::OnceLock;
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        let avail = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        match std::env::var("MELGAN_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
        {
            Some(n) if n >= 1 => n.min(avail.max(n)),
            _ => avail,
        }
    })
}

pub fn clamp_threads(requested: usize) -> usize {
    requested.clamp(1, max_threads())
}

/// Runs `f(plane_index, plane)` over consecutive `plane_len` chunks of `out`,
/// split across up to `threads` scoped workers. Small outputs run inline.
fn for_planes<F>(out: &mut [f32], plane_len: usize, threads: usize, f: F)
where
    F: Fn(usize, &mut [f32]) + Sync,
{
    debug_assert_eq!(out.len() % plane_len.max(1), 0);
    let n_planes = if plane_len == 0 { 0 } else { out.len() / plane_len };
    let threads = threads.min(n_planes).max(1);
    if threads == 1 || out.len() < 16384 {
        for (i, plane) in out.chunks_mut(plane_len).enumerate() {
            f(i, plane);
        }
        return;
    }
    let per = n_planes.div_ceil(threads);
    std::thread::scope(|scope| {
        for (c, chunk) in out.chunks_mut(per * plane_len).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, plane) in chunk.chunks_mut(plane_len).enumerate() {
                    f(c * per + i, plane);
                }
            });
        }
    });
}

// ---------------------------------------------------------------------------
// fixed-order reductions
// ---------------------------------------------------------------------------

/// Dot product with a fixed 8-lane reduction tree.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 8;
    let mut lanes = [0f32; 8];
    for i in 0..chunks {
        let a8 = &a[i * 8..i * 8 + 8];
        let b8 = &b[i * 8..i * 8 + 8];
        for l in 0..8 {
            lanes[l] += a8[l] * b8[l];
        }
    }
    let mut tail = 0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    let s0 = (lanes[0] + lanes[4]) + (lanes[1] + lanes[5]);
    let s1 = (lanes[2] + lanes[6]) + (lanes[3] + lanes[7]);
    (s0 + s1) + tail
}

#[inline]
fn dot_dilated(w: &[f32], x: &[f32], dilation: usize) -> f32 {
    let mut acc = 0f32;
    for (k, wv) in w.iter().enumerate() {
        acc += wv * x[k * dilation];
    }
    acc
}

/// Sum over all elements, accumulated in f64.
pub fn sum_f64(x: &[f32]) -> f64 {
    x.iter().map(|&v| v as f64).sum()
}

// ---------------------------------------------------------------------------
// padding
// ---------------------------------------------------------------------------

/// Reflect index into `[0, len)`, bouncing repeatedly when the pad is wider
/// than the signal. A one-frame signal reflects to itself.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Materializes per-plane padding: `out` has time `t + 2*pad` per plane.
pub fn pad1d(
    x: &[f32],
    planes: usize,
    t: usize,
    pad: usize,
    mode: PaddingMode,
    out: &mut [f32],
) -> Result<()> {
    let tp = t + 2 * pad;
    debug_assert_eq!(x.len(), planes * t);
    debug_assert_eq!(out.len(), planes * tp);
    if t == 0 && pad > 0 {
        return Err(Error::InvalidArg {
            op: "pad1d",
            reason: "cannot pad an empty time axis".into(),
        });
    }
    if pad == 0 {
        out.copy_from_slice(x);
        return Ok(());
    }
    for p in 0..planes {
        let src = &x[p * t..(p + 1) * t];
        let dst = &mut out[p * tp..(p + 1) * tp];
        dst[pad..pad + t].copy_from_slice(src);
        match mode {
            PaddingMode::Zeros => {
                dst[..pad].iter_mut().for_each(|v| *v = 0.0);
                dst[pad + t..].iter_mut().for_each(|v| *v = 0.0);
            }
            PaddingMode::Reflect => {
                for i in 0..pad {
                    dst[i] = src[reflect_index(i as isize - pad as isize, t)];
                    dst[pad + t + i] = src[reflect_index((t + i) as isize, t)];
                }
            }
        }
    }
    Ok(())
}

/// Folds gradient of a padded buffer back onto the unpadded one (accumulates).
pub fn pad1d_backward(
    g_padded: &[f32],
    planes: usize,
    t: usize,
    pad: usize,
    mode: PaddingMode,
    g_x: &mut [f32],
) {
    let tp = t + 2 * pad;
    debug_assert_eq!(g_padded.len(), planes * tp);
    debug_assert_eq!(g_x.len(), planes * t);
    for p in 0..planes {
        let src = &g_padded[p * tp..(p + 1) * tp];
        let dst = &mut g_x[p * t..(p + 1) * t];
        for (d, s) in dst.iter_mut().zip(&src[pad..pad + t]) {
            *d += s;
        }
        if pad > 0 && mode == PaddingMode::Reflect {
            for i in 0..pad {
                dst[reflect_index(i as isize - pad as isize, t)] += src[i];
                dst[reflect_index((t + i) as isize, t)] += src[pad + t + i];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// conv1d (cross-correlation; input pre-padded)
// ---------------------------------------------------------------------------

pub fn conv1d_forward(
    x: &[f32],
    w: &[f32],
    bias: Option<&[f32]>,
    g: &ConvGeom,
    out: &mut [f32],
    threads: usize,
) {
    let (cin_g, k, to, tp, d, s) = (
        g.in_per_group(),
        g.kernel,
        g.out_time,
        g.time,
        g.dilation,
        g.stride,
    );
    let out_per_group = g.out_per_group();
    for_planes(out, to, threads, |plane, out_plane| {
        let n = plane / g.out_channels;
        let oc = plane % g.out_channels;
        let group = oc / out_per_group;
        let b = bias.map_or(0.0, |b| b[oc]);
        out_plane.iter_mut().for_each(|v| *v = b);
        let w_oc = &w[oc * cin_g * k..(oc + 1) * cin_g * k];
        let x_base = (n * g.in_channels + group * cin_g) * tp;
        if s == 1 {
            // saxpy over the time axis: out[t] += w_k * x[t + k*d]
            for icl in 0..cin_g {
                let x_row = &x[x_base + icl * tp..x_base + (icl + 1) * tp];
                for (kk, &wv) in w_oc[icl * k..(icl + 1) * k].iter().enumerate() {
                    let xs = &x_row[kk * d..kk * d + to];
                    for (o, &xv) in out_plane.iter_mut().zip(xs) {
                        *o += wv * xv;
                    }
                }
            }
        } else {
            // dot over the kernel window per output position
            for icl in 0..cin_g {
                let x_row = &x[x_base + icl * tp..x_base + (icl + 1) * tp];
                let w_row = &w_oc[icl * k..(icl + 1) * k];
                for (t, o) in out_plane.iter_mut().enumerate() {
                    let window = &x_row[t * s..];
                    *o += if d == 1 {
                        dot(w_row, &window[..k])
                    } else {
                        dot_dilated(w_row, window, d)
                    };
                }
            }
        }
    });
}

/// Gradient w.r.t. the (padded) input. `g_x` must be zeroed by the caller.
pub fn conv1d_backward_input(
    g_out: &[f32],
    w: &[f32],
    g: &ConvGeom,
    g_x: &mut [f32],
    threads: usize,
) {
    let (cin_g, k, to, tp, d, s) = (
        g.in_per_group(),
        g.kernel,
        g.out_time,
        g.time,
        g.dilation,
        g.stride,
    );
    let out_per_group = g.out_per_group();
    for_planes(g_x, tp, threads, |plane, gx_row| {
        let n = plane / g.in_channels;
        let ic = plane % g.in_channels;
        let group = ic / cin_g;
        let icl = ic % cin_g;
        for ocl in 0..out_per_group {
            let oc = group * out_per_group + ocl;
            let go_row = &g_out[(n * g.out_channels + oc) * to..][..to];
            let w_row = &w[(oc * cin_g + icl) * k..][..k];
            if s == 1 {
                for (kk, &wv) in w_row.iter().enumerate() {
                    let dst = &mut gx_row[kk * d..kk * d + to];
                    for (gx, &gov) in dst.iter_mut().zip(go_row) {
                        *gx += wv * gov;
                    }
                }
            } else {
                for (t, &gov) in go_row.iter().enumerate() {
                    let base = t * s;
                    for (kk, &wv) in w_row.iter().enumerate() {
                        gx_row[base + kk * d] += wv * gov;
                    }
                }
            }
        }
    });
}

/// Gradient w.r.t. the weight. `g_w` is accumulated into (caller zeroes).
pub fn conv1d_backward_weight(
    g_out: &[f32],
    x: &[f32],
    g: &ConvGeom,
    g_w: &mut [f32],
    threads: usize,
) {
    let (cin_g, k, to, tp, d, s) = (
        g.in_per_group(),
        g.kernel,
        g.out_time,
        g.time,
        g.dilation,
        g.stride,
    );
    let out_per_group = g.out_per_group();
    // one task per weight row (oc, icl)
    for_planes(g_w, k, threads.min(4), |row, w_row| {
        let oc = row / cin_g;
        let icl = row % cin_g;
        let group = oc / out_per_group;
        let ic = group * cin_g + icl;
        for n in 0..g.batch {
            let go_row = &g_out[(n * g.out_channels + oc) * to..][..to];
            let x_row = &x[(n * g.in_channels + ic) * tp..][..tp];
            if s == 1 {
                // one long contiguous dot per tap
                for (kk, wv) in w_row.iter_mut().enumerate() {
                    *wv += dot(go_row, &x_row[kk * d..kk * d + to]);
                }
            } else if d == 1 {
                // saxpy over taps: w[k] += g_out[t] * x[t*s + k]
                for (t, &gov) in go_row.iter().enumerate() {
                    let window = &x_row[t * s..t * s + k];
                    for (wv, &xv) in w_row.iter_mut().zip(window) {
                        *wv += gov * xv;
                    }
                }
            } else {
                for (t, &gov) in go_row.iter().enumerate() {
                    for (kk, wv) in w_row.iter_mut().enumerate() {
                        *wv += gov * x_row[t * s + kk * d];
                    }
                }
            }
        }
    });
}

/// Gradient w.r.t. the bias: per-channel sum of `g_out` over batch and time.
pub fn conv1d_backward_bias(g_out: &[f32], batch: usize, out_channels: usize, t_out: usize, g_b: &mut [f32]) {
    debug_assert_eq!(g_b.len(), out_channels);
    for n in 0..batch {
        for oc in 0..out_channels {
            let row = &g_out[(n * out_channels + oc) * t_out..][..t_out];
            g_b[oc] += sum_f64(row) as f32;
        }
    }
}

// ---------------------------------------------------------------------------
// conv_transpose1d (weight layout (in, out/groups, k); crops its own padding)
// ---------------------------------------------------------------------------

/// Transposed-conv geometry: `time` is the *input* time, `out_time` the final
/// (cropped) output time, `padding` the crop on each side.
#[derive(Clone, Copy, Debug)]
pub struct ConvTGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub time: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub out_time: usize,
}

impl ConvTGeom {
    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }
    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }
}

pub fn convt1d_forward(
    x: &[f32],
    w: &[f32],
    bias: Option<&[f32]>,
    g: &ConvTGeom,
    out: &mut [f32],
    threads: usize,
) {
    let (cin_g, cout_g, k, ti, to, s) = (
        g.in_per_group(),
        g.out_per_group(),
        g.kernel,
        g.time,
        g.out_time,
        g.stride,
    );
    let pad = g.padding as isize;
    for_planes(out, to, threads, |plane, out_plane| {
        let n = plane / g.out_channels;
        let oc = plane % g.out_channels;
        let group = oc / cout_g;
        let ocl = oc % cout_g;
        let b = bias.map_or(0.0, |b| b[oc]);
        out_plane.iter_mut().for_each(|v| *v = b);
        let params = ConvTPlane {
            x_base: (n * g.in_channels + group * cin_g) * ti,
            w_base: (group * cin_g * cout_g + ocl) * k,
            w_row_stride: cout_g * k,
            cin_g,
            ti,
            to,
            s,
            pad,
            k,
        };
        match k {
            2 => convt_plane::<2>(x, w, &params, out_plane),
            4 => convt_plane::<4>(x, w, &params, out_plane),
            8 => convt_plane::<8>(x, w, &params, out_plane),
            16 => convt_plane::<16>(x, w, &params, out_plane),
            32 => convt_plane::<32>(x, w, &params, out_plane),
            _ => convt_plane_generic(x, w, &params, out_plane),
        }
    });
}

struct ConvTPlane {
    x_base: usize,
    w_base: usize,
    w_row_stride: usize,
    cin_g: usize,
    ti: usize,
    to: usize,
    s: usize,
    pad: isize,
    k: usize,
}

/// One input frame scattered into the output window, clamped at the edges.
/// Accumulation order per output element is in-channel ascending inside each
/// input frame, frames ascending.
#[inline]
fn convt_frame_clamped(x: &[f32], w: &[f32], p: &ConvTPlane, t: usize, out_plane: &mut [f32]) {
    let base = t as isize * p.s as isize - p.pad;
    let k_lo = (-base).max(0) as usize;
    let k_hi = (p.to as isize - base).clamp(0, p.k as isize) as usize;
    if k_lo >= k_hi {
        return;
    }
    let dst = &mut out_plane[(base + k_lo as isize) as usize..][..k_hi - k_lo];
    for icl in 0..p.cin_g {
        let xv = x[p.x_base + icl * p.ti + t];
        let w_row = &w[p.w_base + icl * p.w_row_stride + k_lo..][..k_hi - k_lo];
        for (o, &wv) in dst.iter_mut().zip(w_row) {
            *o += xv * wv;
        }
    }
}

fn convt_plane_generic(x: &[f32], w: &[f32], p: &ConvTPlane, out_plane: &mut [f32]) {
    for t in 0..p.ti {
        convt_frame_clamped(x, w, p, t, out_plane);
    }
}

/// Interior frames reduce over in-channels in a K-wide register accumulator;
/// edge frames fall back to the clamped path. Same accumulation order as the
/// generic path.
fn convt_plane<const K: usize>(x: &[f32], w: &[f32], p: &ConvTPlane, out_plane: &mut [f32]) {
    debug_assert_eq!(p.k, K);
    // full window iff base >= 0 and base + K <= to
    let t_lo = (p.pad as usize).div_ceil(p.s);
    let t_hi_excl = if p.to + (p.pad as usize) >= K {
        (((p.to + p.pad as usize - K) / p.s) + 1).min(p.ti)
    } else {
        0
    };
    for t in 0..t_lo.min(p.ti) {
        convt_frame_clamped(x, w, p, t, out_plane);
    }
    for t in t_lo..t_hi_excl {
        let base = (t * p.s) as isize - p.pad;
        let mut acc = [0f32; K];
        for icl in 0..p.cin_g {
            let xv = x[p.x_base + icl * p.ti + t];
            let w_row = &w[p.w_base + icl * p.w_row_stride..][..K];
            for j in 0..K {
                acc[j] += xv * w_row[j];
            }
        }
        let dst = &mut out_plane[base as usize..][..K];
        for (o, &a) in dst.iter_mut().zip(&acc) {
            *o += a;
        }
    }
    for t in t_lo.max(t_hi_excl)..p.ti {
        convt_frame_clamped(x, w, p, t, out_plane);
    }
}

/// Gradient w.r.t. input: a gather over the upstream window (a plain conv).
pub fn convt1d_backward_input(
    g_out: &[f32],
    w: &[f32],
    g: &ConvTGeom,
    g_x: &mut [f32],
    threads: usize,
) {
    let (cin_g, cout_g, k, ti, to, s) = (
        g.in_per_group(),
        g.out_per_group(),
        g.kernel,
        g.time,
        g.out_time,
        g.stride,
    );
    let pad = g.padding as isize;
    for_planes(g_x, ti, threads, |plane, gx_row| {
        let n = plane / g.in_channels;
        let ic = plane % g.in_channels;
        let group = ic / cin_g;
        let icl = ic % cin_g;
        for ocl in 0..cout_g {
            let oc = group * cout_g + ocl;
            let go_row = &g_out[(n * g.out_channels + oc) * to..][..to];
            let w_row = &w[(ic * cout_g + ocl) * k..][..k];
            for (t, gx) in gx_row.iter_mut().enumerate() {
                let base = t as isize * s as isize - pad;
                let k_lo = (-base).max(0) as usize;
                let k_hi = (to as isize - base).clamp(0, k as isize) as usize;
                if k_lo < k_hi {
                    let window = &go_row[(base + k_lo as isize) as usize..][..k_hi - k_lo];
                    *gx += dot(&w_row[k_lo..k_hi], window);
                }
            }
        }
        let _ = icl;
    });
}

pub fn convt1d_backward_weight(
    g_out: &[f32],
    x: &[f32],
    g: &ConvTGeom,
    g_w: &mut [f32],
    threads: usize,
) {
    let (cin_g, cout_g, k, ti, to, s) = (
        g.in_per_group(),
        g.out_per_group(),
        g.kernel,
        g.time,
        g.out_time,
        g.stride,
    );
    let pad = g.padding as isize;
    for_planes(g_w, k, threads.min(4), |row, w_row| {
        let ic = row / cout_g;
        let ocl = row % cout_g;
        let group = ic / cin_g;
        let oc = group * cout_g + ocl;
        for n in 0..g.batch {
            let x_row = &x[(n * g.in_channels + ic) * ti..][..ti];
            let go_row = &g_out[(n * g.out_channels + oc) * to..][..to];
            for (t, &xv) in x_row.iter().enumerate() {
                let base = t as isize * s as isize - pad;
                let k_lo = (-base).max(0) as usize;
                let k_hi = (to as isize - base).clamp(0, k as isize) as usize;
                if k_lo >= k_hi {
                    continue;
                }
                let window = &go_row[(base + k_lo as isize) as usize..][..k_hi - k_lo];
                for (wv, &gov) in w_row[k_lo..k_hi].iter_mut().zip(window) {
                    *wv += xv * gov;
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// average pooling (count_include_pad = false)
// ---------------------------------------------------------------------------

pub fn avg_pool1d_out_time(t_in: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = t_in + 2 * padding;
    if padded < kernel {
        return Err(Error::InvalidArg {
            op: "avg_pool1d",
            reason: format!("kernel {kernel} larger than padded input time {padded}"),
        });
    }
    Ok((padded - kernel) / stride + 1)
}

pub fn avg_pool1d_forward(
    x: &[f32],
    planes: usize,
    t_in: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    out: &mut [f32],
) {
    let to = out.len() / planes;
    for p in 0..planes {
        let row = &x[p * t_in..(p + 1) * t_in];
        let dst = &mut out[p * to..(p + 1) * to];
        for (t, o) in dst.iter_mut().enumerate() {
            let start = t as isize * stride as isize - padding as isize;
            let lo = start.max(0) as usize;
            let hi = ((start + kernel as isize) as usize).min(t_in);
            let mut acc = 0f32;
            for &v in &row[lo..hi] {
                acc += v;
            }
            *o = acc / (hi - lo) as f32;
        }
    }
}

pub fn avg_pool1d_backward(
    g_out: &[f32],
    planes: usize,
    t_in: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    g_x: &mut [f32],
) {
    let to = g_out.len() / planes;
    for p in 0..planes {
        let go = &g_out[p * to..(p + 1) * to];
        let gx = &mut g_x[p * t_in..(p + 1) * t_in];
        for (t, &gov) in go.iter().enumerate() {
            let start = t as isize * stride as isize - padding as isize;
            let lo = start.max(0) as usize;
            let hi = ((start + kernel as isize) as usize).min(t_in);
            let share = gov / (hi - lo) as f32;
            for v in &mut gx[lo..hi] {
                *v += share;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

pub fn leaky_relu_forward(x: &[f32], slope: f32, out: &mut [f32]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = if v > 0.0 { v } else { slope * v };
    }
}

pub fn leaky_relu_backward(x: &[f32], g_out: &[f32], slope: f32, g_x: &mut [f32]) {
    for ((gx, &v), &g) in g_x.iter_mut().zip(x).zip(g_out) {
        *gx += if v > 0.0 { g } else { slope * g };
    }
}

pub fn relu_forward(x: &[f32], out: &mut [f32]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v.max(0.0);
    }
}

pub fn relu_backward(x: &[f32], g_out: &[f32], g_x: &mut [f32]) {
    for ((gx, &v), &g) in g_x.iter_mut().zip(x).zip(g_out) {
        if v > 0.0 {
            *gx += g;
        }
    }
}

pub fn tanh_forward(x: &[f32], out: &mut [f32]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v.tanh();
    }
}

/// Uses the saved output: d tanh(x)/dx = 1 - y^2.
pub fn tanh_backward(y: &[f32], g_out: &[f32], g_x: &mut [f32]) {
    for ((gx, &yv), &g) in g_x.iter_mut().zip(y).zip(g_out) {
        *gx += g * (1.0 - yv * yv);
    }
}

// ---------------------------------------------------------------------------
// weight normalization
// ---------------------------------------------------------------------------

/// Per-slice L2 norms over the leading axis of `v` (f64 accumulation).
pub fn wn_norms(v: &[f32], rows: usize) -> Result<Vec<f32>> {
    let row_len = v.len() / rows;
    let mut norms = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &v[r * row_len..(r + 1) * row_len];
        let n = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt() as f32;
        if n == 0.0 {
            return Err(Error::ZeroNorm { index: r });
        }
        norms.push(n);
    }
    Ok(norms)
}

/// w = g * v / ||v|| per leading-axis slice.
pub fn wn_fold(v: &[f32], g: &[f32], rows: usize, out: &mut [f32]) -> Result<()> {
    let norms = wn_norms(v, rows)?;
    let row_len = v.len() / rows;
    for r in 0..rows {
        let scale = g[r] / norms[r];
        for (o, &vv) in out[r * row_len..(r + 1) * row_len]
            .iter_mut()
            .zip(&v[r * row_len..(r + 1) * row_len])
        {
            *o = vv * scale;
        }
    }
    Ok(())
}
