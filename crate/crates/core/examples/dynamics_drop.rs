//! Drops the biped from a few centimetres onto level ground with no joint
//! torques and prints centre-of-mass height, foot loading and energy.
//!
//! `cargo run --example dynamics_drop -- [drop_m]`

use myoexo::dynamics::{com_state, mechanical_energy, step_dynamics_detailed, BodyModel, SimState, Terrain, NJOINT};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let drop: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.03);
    let model = BodyModel::default();
    let terrain = Terrain::flat();
    let mut state = SimState::standing(&model);
    state.q[1] += drop;
    let dt = 0.005;
    println!("mass {:.1} kg, weight {:.0} N", model.total_mass(), model.weight());
    println!("{:>6} {:>8} {:>9} {:>9} {:>10}", "t", "com_y", "grf_l", "grf_r", "energy");
    for tick in 0..=200 {
        let (next, acc) = step_dynamics_detailed(&state, &model, &[0.0; NJOINT], &terrain, dt)?;
        if tick % 20 == 0 {
            let (com, _) = com_state(&state, &model);
            let (kinetic, potential) = mechanical_energy(&state, &model);
            let f = acc.contact.feet;
            println!(
                "{:>6.2} {:>8.4} {:>9.1} {:>9.1} {:>10.2}",
                state.t,
                com[1],
                f[0].normal,
                f[1].normal,
                kinetic + potential
            );
        }
        state = next;
    }
    Ok(())
}
