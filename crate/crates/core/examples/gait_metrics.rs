//! Walks the scripted oscillator on the support harness and reports stride
//! normalized exo torque, peak timing, activation and positive joint power.

use myoexo::distill::{run_trial, ScriptedGait, ScriptedTeacher, SpeedProfile, Teacher, TrialSpec};
use myoexo::env::{Env, EnvConfig, Stage};
use myoexo::gait::{detect_gait_events, mean_activation, mean_positive_power, normalize_cycle, peak_timing};
use myoexo::synergy::SynergyBasis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut teacher = ScriptedTeacher::new(ScriptedGait::default());
    let mut cfg = teacher.env_config(&EnvConfig::default());
    cfg.horizon_s = 17.0;
    let mut env = Env::new(cfg, SynergyBasis::reference_leg(), Stage::TwoA, 0)?;
    let trial = TrialSpec { slope: 0, speed: SpeedProfile::Constant(1.2), duration_s: 17.0 };
    let log = run_trial(&mut teacher as &mut dyn Teacher, &mut env, &trial, None)?;
    let events = detect_gait_events(&log.grf[1], log.sample_rate, 250.0, 0.3)?;
    let wave = normalize_cycle(&log.exo_torque[1], &events, 5)?;
    let (ext, flex) = peak_timing(&wave);
    let stride_s = (events[events.len() - 1] - events[0]) as f64 / (events.len() - 1) as f64 / log.sample_rate;
    println!("{} right heel strikes, mean stride {stride_s:.2} s", events.len());
    println!("right exo torque peaks: extension at {ext}%, flexion at {flex}% of the stride");
    let shown: Vec<String> = wave.values.iter().step_by(10).map(|v| format!("{v:.2}")).collect();
    println!("torque every 10%: {}", shown.join(" "));
    println!("mean activation {:.4}", mean_activation(&log.activations, log.control_rate, 2.0, 15.0)?);
    println!("mean positive joint power {:.4} W/kg", mean_positive_power(&log.muscle_torque, &log.joint_rate, log.body_mass)?);
    Ok(())
}
