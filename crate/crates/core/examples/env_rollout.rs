//! Runs the walking environment with random synergy commands and prints the
//! reward terms of each episode.
//!
//! `cargo run --example env_rollout -- [episodes] [seed]`

use myoexo::env::{ActionVector, Env, EnvConfig, Stage};
use myoexo::synergy::SynergyBasis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut env = Env::new(EnvConfig::default(), SynergyBasis::reference_leg(), Stage::TwoA, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    println!("observation {} values, action {} values", env.obs_dim(), env.action_dim());
    for ep in 0..episodes {
        env.reset()?;
        let (slope, speed) = (env.slope_deg(), env.target_speed());
        let mut total = [0.0; 6];
        let mut ret = 0.0;
        loop {
            let flat: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = env.step(&ActionVector::from_policy_output(&flat, env.rank())?)?;
            ret += r.reward;
            for (t, c) in total.iter_mut().zip(r.info.breakdown.components()) {
                *t += c;
            }
            if r.terminated || env.is_done() {
                break;
            }
        }
        let secs = env.tick() as f64 / env.config().control_hz;
        println!(
            "episode {ep}: slope {slope:+} deg, target {speed:.1} m/s, {secs:.2} s, return {ret:.2}, terms {:.2?}",
            total
        );
    }
    Ok(())
}
