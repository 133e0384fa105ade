//! Per-tick episode log as CSV.

use std::io::Write;

use super::{Env, EnvError, RewardBreakdown, StepResult};

pub struct EpisodeLogWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> EpisodeLogWriter<W> {
    pub fn new(out: W, env: &Env) -> Result<Self, EnvError> {
        let mut out = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["tick", "t", "slope_deg", "target_speed", "forward_speed", "reward"].iter().map(|s| s.to_string()).collect();
        header.extend(RewardBreakdown::NAMES.iter().map(|n| format!("r_{n}")));
        header.extend(
            ["exo_torque_l", "exo_torque_r", "grf_l", "grf_r", "fell", "truncated"].iter().map(|s| s.to_string()),
        );
        header.extend(env.config().muscles.names().iter().map(|n| format!("act_{n}")));
        out.write_record(&header)?;
        Ok(EpisodeLogWriter { out })
    }

    pub fn record(&mut self, env: &Env, step: &StepResult) -> Result<(), EnvError> {
        let last = step.info.substeps.last();
        let mut row = vec![
            env.tick().to_string(),
            last.map_or(env.state().t, |s| s.t).to_string(),
            env.slope_deg().to_string(),
            env.target_speed().to_string(),
            step.info.forward_speed.to_string(),
            step.reward.to_string(),
        ];
        row.extend(step.info.breakdown.components().iter().map(|c| c.to_string()));
        let exo = last.map_or([0.0; 2], |s| s.exo_torque);
        let grf = last.map_or([0.0; 2], |s| [s.grf[0].normal, s.grf[1].normal]);
        row.extend(exo.iter().chain(grf.iter()).map(|v| v.to_string()));
        row.push(u8::from(step.info.fell).to_string());
        row.push(u8::from(step.info.truncated).to_string());
        row.extend(step.info.activations.iter().map(|a| a.to_string()));
        self.out.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, EnvError> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| EnvError::Io(e.into_error()))
    }
}
