//! Trains the soft actor-critic learner on the one-joint tracking toy and
//! prints the evaluation return curve.
//!
//! `cargo run --example sac_toy -- [seed] [steps]`

use myoexo::sac::{train_toy, ToyRun};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut run = ToyRun::default();
    if let Some(steps) = args.next() {
        run.sac.stage1_steps = steps.parse()?;
        run.sac.checkpoint_every = (run.sac.stage1_steps / 10).max(1);
    }
    let start = std::time::Instant::now();
    for (step, ret) in train_toy(&run, seed)? {
        println!("{step:>8} {ret:>12.5}");
    }
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
