//! Prints the Hill curves, an activation step response and the joint torques
//! produced by fully excited muscles at the standing pose.

use myoexo::dynamics::{BodyModel, Joint, SimState};
use myoexo::muscle::{
    activation_step, force_length, force_velocity, passive_force_length, update_muscles, MuscleSet,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>6} {:>8} {:>8} {:>8}", "x", "f_l(x)", "f_p(x)", "f_v(x-1)");
    for k in 0..=10 {
        let x = 0.5 + 0.1 * k as f64;
        println!("{x:>6.2} {:>8.4} {:>8.4} {:>8.4}", force_length(x), passive_force_length(x), force_velocity(x - 1.0));
    }

    let set = MuscleSet::default();
    let spec = &set.muscles[0];
    let mut a = 0.0;
    print!("\n{} activation at 5 ms steps, excitation 1 then 0:", spec.name);
    for tick in 0..30 {
        a = activation_step(a, if tick < 15 { 1.0 } else { 0.0 }, 0.005, spec)?;
        print!(" {a:.2}");
    }
    println!();

    let model = BodyModel::default();
    let state = SimState::standing(&model);
    let initial = set.initial_states(&state);
    println!("\njoint torque with one muscle fully excited for 0.1 s (Nm):");
    for (i, m) in set.muscles.iter().enumerate().take(8) {
        let mut e = vec![0.0; set.len()];
        e[i] = 1.0;
        let mut states = initial.clone();
        let mut tau = [0.0; 6];
        for _ in 0..20 {
            (states, tau) = update_muscles(&state, &states, &e, 0.005, &set)?;
        }
        println!(
            "{:>6}: hip {:>8.1} knee {:>8.1} ankle {:>8.1}",
            m.name,
            tau[Joint::HipL.index()],
            tau[Joint::KneeL.index()],
            tau[Joint::AnkleL.index()]
        );
    }
    Ok(())
}
