//! Distils a gyroscope-only student from the scripted oscillator teacher and
//! compares closed-loop student assistance against the teacher.
//!
//! `cargo run --example distill_scripted -- [seed]`

use std::time::Instant;

use myoexo::distill::*;
use myoexo::env::EnvConfig;
use myoexo::gait::{detect_gait_events, normalize_cycle, waveform_stats};
use myoexo::net::TcnNet;
use myoexo::rng::child_rng;
use myoexo::synergy::SynergyBasis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let teacher = ScriptedTeacher::new(ScriptedGait::default());
    let basis = SynergyBasis::reference_leg();
    let env_cfg = EnvConfig::default();
    let t0 = Instant::now();
    let (ds, _) = generate_dataset(&teacher, &DatasetConfig::default(), &env_cfg, &basis, seed, 1)?;
    println!("dataset: {} samples ({} train, {} val) in {:.1?}", ds.len(), ds.train.len(), ds.val.len(), t0.elapsed());

    let t1 = Instant::now();
    let cfg = StudentConfig::default();
    let net = TcnNet::<f32>::new(cfg.tcn.clone(), &mut child_rng(seed, "distill/init"))?;
    let (student, losses) = train_student(&ds, net, &cfg, seed)?;
    for l in &losses {
        println!("epoch {}: train {:.5} val {:.5}", l.epoch, l.train, l.val);
    }
    println!("held-out R2 {:.4} (training {:.1?})", split_agreement(&student, &ds, &ds.val)?, t1.elapsed());

    let trial = TrialSpec { slope: 0, speed: SpeedProfile::Constant(1.2), duration_s: 10.0 };
    let mut cfg_env = teacher.env_config(&env_cfg);
    cfg_env.horizon_s = 10.0;
    let mut t = teacher.clone();
    let mut env = myoexo::env::Env::new(cfg_env.clone(), basis.clone(), myoexo::env::Stage::TwoA, seed)?;
    let base = run_trial(&mut t, &mut env, &trial, None)?;
    let mut env = myoexo::env::Env::new(cfg_env, basis, myoexo::env::Stage::TwoA, seed)?;
    let closed = closed_loop_student_rollout(&student, &mut t, &mut env, &trial)?;
    let wave = |log: &myoexo::gait::RolloutLog| -> Result<_, Box<dyn std::error::Error>> {
        let ev = detect_gait_events(&log.grf[1], log.sample_rate, 250.0, 0.3)?;
        Ok(normalize_cycle(&log.exo_torque[1], &ev, 5)?)
    };
    let stats = waveform_stats(&wave(&base)?, &wave(&closed)?)?;
    println!("closed-loop torque waveform r {:?}, rmse {:.3} Nm", stats.r, stats.rmse);
    Ok(())
}
