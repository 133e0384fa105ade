//! Builds activations from a known four-synergy basis plus noise, then prints
//! variance accounted for against factorization rank.

use myoexo::synergy::{extract_basis_from_rollouts, ActivationMatrix, NmfConfig, SynergyBasis};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = SynergyBasis::reference_leg();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (strides, period) = (20, 80);
    let n = strides * period;
    let h = Array2::from_shape_fn((truth.rank(), n), |(k, t)| {
        let phase = (t % period) as f64 / period as f64 - k as f64 / truth.rank() as f64;
        (std::f64::consts::TAU * phase).cos().max(0.0).powi(2)
    });
    let noisy = truth.w.dot(&h).mapv(|x| (x + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0));
    let log = ActivationMatrix {
        muscles: truth.muscles.clone(),
        data: noisy,
        strides: (0..=strides).map(|s| s * period).collect(),
        sample_rate: 40.0,
    };
    for rank in 1..=6 {
        let cfg = NmfConfig { rank, restarts: 3, ..Default::default() };
        let fit = extract_basis_from_rollouts(&log, &cfg, 0)?;
        println!("rank {rank}: VAF {:.4}", fit.vaf);
    }
    Ok(())
}
