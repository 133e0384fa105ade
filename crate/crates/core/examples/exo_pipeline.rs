//! Feeds a square-wave command through the exoskeleton command pipeline in
//! simulation and hardware settings and prints the applied torque.

use myoexo::exo::{ExoPipelineConfig, ExoPipelineState};

fn trace(cfg: &ExoPipelineConfig, hold: usize, label: &str) {
    let mut s = ExoPipelineState::default();
    let mut out = Vec::new();
    for cmd in 0..24 {
        s.command(if (cmd / 8) % 2 == 0 { 1.0 } else { -1.0 }, cfg);
        for _ in 0..hold {
            out.push(s.advance(cfg));
        }
    }
    let shown: Vec<String> = out.iter().step_by(hold * 2).map(|t| format!("{t:.2}")).collect();
    println!("{label} (every other command): {}", shown.join(" "));
}

fn main() {
    let sim = ExoPipelineConfig::default();
    trace(&sim, 5, "simulation, 74.5 kg");
    trace(&ExoPipelineConfig::hardware(60.0), 2, "hardware, 60 kg");
    trace(&ExoPipelineConfig::hardware(90.0), 2, "hardware, 90 kg");
    println!("peak {} Nm, rate limit {} per command, filter alpha {}", sim.t_max, sim.rate_limit, sim.alpha());
}
