use melgan::arch::*;
use melgan::audio::MelSpectrogram;
use melgan::tensor::{Shape, Tensor};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = GeneratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let gen = build_generator(&cfg, &mut rng).unwrap();
    println!("generator params: {}", gen.count_parameters());
    let dcfg = DiscriminatorConfig::default();
    let disc = build_discriminator(&dcfg, &mut rng).unwrap();
    println!("discriminator params: {}", disc.count_parameters());

    // time an eager forward at 32 and 64 frames
    for frames in [32usize, 64] {
        let mel = MelSpectrogram { values: Tensor::randn(Shape::new(1, 80, frames), 1.0, &mut rng) };
        let t0 = std::time::Instant::now();
        let out = generator_forward(&gen, &cfg, &mel).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let samples = out.shape().time;
        println!("frames {frames}: {samples} samples in {:.3}s -> {:.1} kHz (threads {})",
                 dt, samples as f64 / dt / 1000.0, melgan::kernels::max_threads());
    }
}
