//! Dirichlet mixing weights and the mixed features they produce.
//!
//! cargo run --example dirichlet_mixup -- [draws]

use candle_core::{Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchclip::codebook::{coefficients_tensor, mixup_feature, sample_mix_coefficients};
use sketchclip::nn::to_f64_vec;

fn main() -> sketchclip::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(20_000, |a| a.parse().expect("draws"));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for alpha in [0.2, 1.0, 5.0] {
        let draws: Vec<_> = (0..n).map(|_| sample_mix_coefficients(alpha, &mut rng)).collect::<Result<_, _>>()?;
        let mean = draws.iter().map(|c| c.lambda[0]).sum::<f64>() / n as f64;
        let var = draws.iter().map(|c| (c.lambda[0] - mean).powi(2)).sum::<f64>() / n as f64;
        let expected_var = 2.0 / (9.0 * (3.0 * alpha + 1.0));
        let near_vertex = draws.iter().filter(|c| c.lambda.iter().any(|&l| l > 0.9)).count();
        println!(
            "alpha {alpha:>3}: mean {mean:.4} (1/3)  variance {var:.4} ({expected_var:.4})  near a vertex {:.1}%",
            100.0 * near_vertex as f64 / n as f64
        );
    }

    let dev = Device::Cpu;
    let f_l = Tensor::new(&[[1.0f64, 0.0, 0.0]], &dev)?;
    let f_m = Tensor::new(&[[0.0f64, 1.0, 0.0]], &dev)?;
    let f_h = Tensor::new(&[[0.0f64, 0.0, 1.0]], &dev)?;
    for _ in 0..3 {
        let c = sample_mix_coefficients(1.0, &mut rng)?;
        let coeffs = coefficients_tensor(&[c], &dev, candle_core::DType::F64)?;
        let mixed = to_f64_vec(&mixup_feature(&f_l, &f_m, &f_h, &coeffs)?)?;
        println!("lambda {:.3?} -> mixed feature {mixed:.3?}", c.lambda);
    }
    Ok(())
}
