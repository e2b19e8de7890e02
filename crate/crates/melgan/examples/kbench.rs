use melgan::kernels::*;
use std::time::Instant;

fn bench_conv(n: usize, cin: usize, t: usize, cout: usize, k: usize, stride: usize, dilation: usize, groups: usize, threads: usize, label: &str) {
    let tp = t + (k - 1) * dilation;
    let x = vec![0.3f32; n * cin * tp];
    let w = vec![0.02f32; cout * (cin / groups) * k];
    let to = (tp - (k - 1) * dilation - 1) / stride + 1;
    let mut out = vec![0f32; n * cout * to];
    let g = ConvGeom { batch: n, in_channels: cin, time: tp, out_channels: cout, kernel: k, stride, dilation, groups, out_time: to };
    let macs = (n * cout * to * (cin / groups) * k) as f64;
    let reps = (2.0e9 / macs).max(1.0) as usize;
    let t0 = Instant::now();
    for _ in 0..reps { conv1d_forward(&x, &w, None, &g, &mut out, threads); }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("{label}: {:.2} GMAC/s ({} reps, {:.4}s each)", macs / dt / 1e9, reps, dt);
}

fn main() {
    let th: usize = std::env::var("BT").map(|v| v.parse().unwrap()).unwrap_or(1);
    println!("threads={th}");
    bench_conv(1, 128, 2048, 128, 3, 1, 3, 1, th, "res128 dilated k3");
    bench_conv(1, 32, 8192, 32, 3, 1, 9, 1, th, "res32 dilated k3");
    bench_conv(1, 128, 2048, 128, 1, 1, 1, 1, th, "res128 pointwise");
    bench_conv(1, 80, 38, 512, 7, 1, 1, 1, th, "pre conv 80->512");
    bench_conv(1, 16, 8192, 64, 41, 4, 1, 4, th, "disc l1 grouped s4");
    bench_conv(1, 1024, 32, 1024, 5, 1, 1, 1, th, "disc l5 1024x1024 k5");

    // convT up1: 512->256 k16 s8, T 32
    let (cin, cout, k, s, t) = (512, 256, 16, 8, 32);
    let x = vec![0.3f32; cin * t];
    let w = vec![0.02f32; cin * cout * k];
    let to = (t - 1) * s + k - 2 * 4;
    let mut out = vec![0f32; cout * to];
    let g = ConvTGeom { batch: 1, in_channels: cin, time: t, out_channels: cout, kernel: k, stride: s, padding: 4, groups: 1, out_time: to };
    let macs = (cin * cout * k * t) as f64;
    let reps = 30;
    let t0 = Instant::now();
    for _ in 0..reps { convt1d_forward(&x, &w, None, &g, &mut out, th); }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("convT 512->256 k16: {:.2} GMAC/s", macs / dt / 1e9);
}
