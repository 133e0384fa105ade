//! Episodic walking environment: synergy action decoding, observation
//! assembly, multi-term reward, fall/horizon termination and slope/speed
//! randomization with the staged exoskeleton clamp.

pub mod action;
pub mod curriculum;
mod log;
pub mod reward;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    com_state, step_dynamics_damped, Accelerations, BaseMode, BodyModel, DynamicsError, Grf, Kinematics, SegmentId, Side, SimState,
    Terrain, NJOINT,
};
use crate::exo::{ExoError, ExoPipelineConfig, ExoPipelineState};
use crate::muscle::{muscle_damping, update_muscles, MuscleError, MuscleSet, MuscleState};
use crate::rng::child_rng;
use crate::synergy::{SynergyBasis, SynergyError};

pub use action::{decode_action, ActionVector, DecodedAction};
pub use curriculum::{
    next_target_speed, sample_slope, slope_index, slope_probabilities, target_speed_at, update_difficulty,
    CurriculumContext, DifficultyConfig, Outcome, Stage, SLOPES, SPEED_CYCLE,
};
pub use log::EpisodeLogWriter;
pub use reward::{compute_reward, RewardBreakdown, RewardSnapshot, RewardWeights};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called after the episode terminated")]
    SteppedAfterTermination,
    #[error("expected {expected} action entries, got {got}")]
    ActionLength { expected: usize, got: usize },
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Synergy(#[from] SynergyError),
    #[error(transparent)]
    Muscle(#[from] MuscleError),
    #[error(transparent)]
    Exo(#[from] ExoError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub control_hz: f64,
    /// Physics steps per control tick.
    pub substeps: usize,
    pub horizon_s: f64,
    /// Half-width of the uniform joint-angle jitter at reset (rad).
    pub init_jitter: f64,
    /// Initial ground penetration of the lowest contact point (m).
    pub init_penetration: f64,
    /// Multiplier applied to joint and trunk rates in the observation.
    pub rate_obs_scale: f64,
    pub reward: RewardWeights,
    pub difficulty: DifficultyConfig,
    pub exo: ExoPipelineConfig,
    pub model: BodyModel,
    pub muscles: MuscleSet,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            control_hz: 40.0,
            substeps: 5,
            horizon_s: 20.0,
            init_jitter: 0.03,
            init_penetration: 0.005,
            rate_obs_scale: 0.1,
            reward: RewardWeights::default(),
            difficulty: DifficultyConfig::default(),
            exo: ExoPipelineConfig::default(),
            model: BodyModel::default(),
            muscles: MuscleSet::default(),
        }
    }
}

impl EnvConfig {
    pub fn physics_dt(&self) -> f64 {
        1.0 / (self.control_hz * self.substeps as f64)
    }

    pub fn horizon_ticks(&self) -> usize {
        (self.horizon_s * self.control_hz).round() as usize
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| EnvError::Config(m);
        if !(self.control_hz > 0.0) || self.substeps == 0 || !(self.horizon_s > 0.0) {
            return Err(bad("control_hz, substeps and horizon_s must be positive".into()));
        }
        self.exo.validate()?;
        if (self.exo.dt - self.physics_dt()).abs() > 1e-12 {
            return Err(bad(format!(
                "exo filter step {} s must equal the physics step {} s",
                self.exo.dt,
                self.physics_dt()
            )));
        }
        self.reward.validate().map_err(bad)?;
        self.difficulty.validate().map_err(bad)?;
        self.model.validate()?;
        self.muscles.validate()?;
        if self.muscles.side_indices(Side::Left).len() != self.muscles.side_indices(Side::Right).len() {
            return Err(bad("both legs need the same muscles".into()));
        }
        Ok(())
    }
}

/// What an external exo controller sees at each physics step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubstepView {
    pub t: f64,
    /// Physics steps taken since reset.
    pub step_index: usize,
    /// Thigh angular velocity (rad/s), left then right.
    pub thigh_rate: [f64; 2],
    pub hip_angle: [f64; 2],
}

/// Source of raw exo commands evaluated at the physics rate. Returning
/// `None` holds the previous command.
pub trait ExoController {
    fn on_substep(&mut self, view: &SubstepView) -> Option<[f64; 2]>;
}

/// One physics step of a control tick.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstepRecord {
    pub t: f64,
    pub thigh_rate: [f64; 2],
    pub hip_angle: [f64; 2],
    /// Applied exo torque (Nm).
    pub exo_torque: [f64; 2],
    /// Rate-limited normalized command held during this step.
    pub exo_cmd: [f64; 2],
    pub grf: [Grf; 2],
    /// Net muscle joint torques.
    pub muscle_torque: [f64; NJOINT],
    pub joint_rate: [f64; NJOINT],
    /// Actuator activations after this step (leg muscles, then trunk).
    pub activations: Vec<f64>,
    pub step_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub breakdown: RewardBreakdown,
    pub substeps: Vec<SubstepRecord>,
    /// All actuator activations after the tick (leg muscles, then trunk).
    pub activations: Vec<f64>,
    pub forward_speed: f64,
    pub exo_cmd: [f64; 2],
    pub fell: bool,
    /// Horizon reached without a fall.
    pub truncated: bool,
    /// The physics state became non-finite; treated as a fall.
    pub unstable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

pub struct Env {
    cfg: EnvConfig,
    basis: SynergyBasis,
    pub ctx: CurriculumContext,
    rng: ChaCha8Rng,
    terrain: Terrain,
    state: SimState,
    muscle_states: Vec<MuscleState>,
    pipes: [ExoPipelineState; 2],
    exo_torque: [f64; 2],
    grf: [Grf; 2],
    tick: usize,
    steps: usize,
    done: bool,
    slope_deg: i32,
    target_speed: f64,
    from_curriculum: bool,
    standing_com_height: f64,
}

impl Env {
    /// `basis` maps per-leg coefficients onto the leg muscles; its row count
    /// must match the muscles of one leg.
    pub fn new(cfg: EnvConfig, basis: SynergyBasis, stage: Stage, seed: u64) -> Result<Self, EnvError> {
        cfg.validate()?;
        basis.validate()?;
        let per_leg = cfg.muscles.side_indices(Side::Right).len();
        if basis.n_muscles() != per_leg {
            return Err(EnvError::Config(format!("basis has {} rows, legs have {per_leg} muscles", basis.n_muscles())));
        }
        let standing = SimState::standing(&cfg.model);
        let standing_com_height = com_state(&standing, &cfg.model).0[1];
        let ctx = CurriculumContext::new(stage, &cfg.difficulty);
        let muscle_states = cfg.muscles.initial_states(&standing);
        let mut env = Env {
            basis,
            ctx,
            rng: child_rng(seed, "env"),
            terrain: Terrain::flat(),
            state: standing,
            muscle_states,
            pipes: [ExoPipelineState::default(); 2],
            exo_torque: [0.0; 2],
            grf: [Grf::default(); 2],
            tick: 0,
            steps: 0,
            done: true,
            slope_deg: 0,
            target_speed: target_speed_at(0),
            from_curriculum: false,
            standing_com_height,
            cfg,
        };
        env.reset_to(0, target_speed_at(0))?;
        env.done = true;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn basis(&self) -> &SynergyBasis {
        &self.basis
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn muscle_states(&self) -> &[MuscleState] {
        &self.muscle_states
    }

    pub fn slope_deg(&self) -> i32 {
        self.slope_deg
    }

    pub fn target_speed(&self) -> f64 {
        self.target_speed
    }

    /// Changes the target speed mid-episode. A pinned trunk is carried
    /// along the terrain at this speed.
    pub fn set_target_speed(&mut self, v: f64) {
        self.target_speed = v;
        self.carry_pinned_base();
    }

    fn carry_pinned_base(&mut self) {
        if self.cfg.model.base == BaseMode::Pinned {
            let (tangent, _) = self.terrain.frame();
            self.state.qd[0] = self.target_speed * tangent[0];
            self.state.qd[1] = self.target_speed * tangent[1];
            self.state.qd[2] = 0.0;
        }
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn stage(&self) -> Stage {
        self.ctx.stage
    }

    pub fn set_stage(&mut self, stage: Stage) {
        self.ctx.stage = stage;
    }

    pub fn rank(&self) -> usize {
        self.basis.rank()
    }

    pub fn action_dim(&self) -> usize {
        ActionVector::dim(self.rank())
    }

    pub fn obs_dim(&self) -> usize {
        observation_dim(&self.cfg.muscles)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Starts an episode with a curriculum-sampled slope and the next speed
    /// of the cycle.
    pub fn reset(&mut self) -> Result<Vec<f64>, EnvError> {
        let idx = sample_slope(&self.ctx.scores, &mut self.rng);
        let speed = next_target_speed(&mut self.ctx);
        let obs = self.reset_to(SLOPES[idx], speed)?;
        self.from_curriculum = true;
        Ok(obs)
    }

    /// Starts an episode on a given slope and speed without touching the
    /// curriculum state.
    pub fn reset_to(&mut self, slope_deg: i32, target_speed: f64) -> Result<Vec<f64>, EnvError> {
        self.terrain = Terrain::new(slope_deg)?;
        self.slope_deg = slope_deg;
        self.target_speed = target_speed;
        let mut state = SimState::standing(&self.cfg.model);
        let j = self.cfg.init_jitter;
        for k in 3..9 {
            let mut d = if j > 0.0 { self.rng.random_range(-j..=j) } else { 0.0 };
            // Knees start flexed, never hyperextended.
            if k == 4 || k == 7 {
                d = d.abs();
            }
            state.q[k] += d;
        }
        let kin = Kinematics::compute(&self.cfg.model, &state);
        let lowest = kin.contacts.iter().map(|p| self.terrain.clearance(p.pos)).fold(f64::INFINITY, f64::min);
        let cos = self.terrain.angle().cos();
        state.q[1] -= (lowest + self.cfg.init_penetration) / cos;
        self.state = state;
        self.carry_pinned_base();
        self.muscle_states = self.cfg.muscles.initial_states(&self.state);
        self.pipes = [ExoPipelineState::default(); 2];
        self.exo_torque = [0.0; 2];
        self.grf = [Grf::default(); 2];
        self.tick = 0;
        self.steps = 0;
        self.done = false;
        self.from_curriculum = false;
        Ok(self.observation())
    }

    pub fn observation(&self) -> Vec<f64> {
        let cfg = &self.cfg;
        let mut obs = Vec::with_capacity(self.obs_dim());
        let n_leg = cfg.muscles.muscles.len();
        for (spec, st) in cfg.muscles.muscles.iter().zip(&self.muscle_states[..n_leg]) {
            obs.push(spec.normalized_length(st.fiber_length));
            obs.push(spec.normalized_velocity(st.fiber_velocity));
            obs.push(st.force / spec.f_max);
            obs.push(st.excitation);
        }
        let s = &self.state;
        obs.extend_from_slice(&s.q[3..]);
        obs.extend(s.qd[3..].iter().map(|w| w * cfg.rate_obs_scale));
        obs.push(s.q[2]);
        obs.push(s.qd[2] * cfg.rate_obs_scale);
        let kin = Kinematics::compute(&cfg.model, s);
        for ankle in &kin.ankles {
            obs.push(ankle.pos[0] - s.q[0]);
            obs.push(ankle.pos[1] - s.q[1]);
        }
        let bw = cfg.model.weight();
        for g in &self.grf {
            obs.push(g.normal / bw);
            obs.push(g.tangential / bw);
        }
        obs.extend(self.exo_torque.iter().map(|t| t / cfg.exo.t_max));
        let (_, v) = com_state(s, &cfg.model);
        obs.extend_from_slice(&v);
        obs.push(self.target_speed);
        obs.extend(self.muscle_states[n_leg..].iter().map(|m| m.activation));
        obs
    }

    pub fn step(&mut self, action: &ActionVector) -> Result<StepResult, EnvError> {
        self.step_with(action, None)
    }

    /// Advances one control tick. With a controller, its commands replace the
    /// policy's exo entries; they still pass through the shaping pipeline and
    /// the stage clamp.
    pub fn step_with<'c>(
        &mut self,
        action: &ActionVector,
        mut controller: Option<&mut (dyn ExoController + 'c)>,
    ) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::SteppedAfterTermination);
        }
        let rank = self.rank();
        if action.syn_left.len() != rank || action.syn_right.len() != rank {
            return Err(EnvError::ActionLength {
                expected: ActionVector::dim(rank),
                got: action.syn_left.len() + action.syn_right.len() + 4,
            });
        }
        let stage = self.ctx.stage;
        let decoded = decode_action(action, &self.basis, stage)?;
        let exo_cmd_prev = self.pipes.map(|p| p.u_prev_cmd);
        if controller.is_none() {
            for side in 0..2 {
                self.pipes[side].command(decoded.exo[side], &self.cfg.exo);
            }
        }
        let dt = self.cfg.physics_dt();
        let mut knee_load = [0.0f64; 2];
        let mut records = Vec::with_capacity(self.cfg.substeps);
        let mut unstable = false;
        for _ in 0..self.cfg.substeps {
            if let Some(c) = controller.as_deref_mut() {
                let view = self.substep_view();
                if let Some(raw) = c.on_substep(&view) {
                    for side in 0..2 {
                        let u = if stage.exo_active() { raw[side] } else { 0.0 };
                        self.pipes[side].command(u, &self.cfg.exo);
                    }
                }
            }
            let (states, muscle_tau) =
                update_muscles(&self.state, &self.muscle_states, &decoded.excitations, dt, &self.cfg.muscles)?;
            let damping = muscle_damping(&states, &self.cfg.muscles);
            let held_cmd = self.pipes.map(|p| p.u_prev_cmd);
            let step_activations: Vec<f64> = states.iter().map(|m| m.activation).collect();
            let exo = [self.pipes[0].advance(&self.cfg.exo), self.pipes[1].advance(&self.cfg.exo)];
            let mut tau = muscle_tau;
            tau[0] += exo[0];
            tau[3] += exo[1];
            self.muscle_states = states;
            self.exo_torque = exo;
            match step_dynamics_damped(&self.state, &self.cfg.model, &tau, &damping, &self.terrain, dt) {
                Ok((next, acc)) => {
                    let load = knee_loads(&self.cfg.model, &acc);
                    for side in 0..2 {
                        knee_load[side] = knee_load[side].max(load[side]);
                    }
                    self.grf = acc.contact.feet;
                    self.state = next;
                    self.steps += 1;
                    records.push(SubstepRecord {
                        t: self.state.t,
                        thigh_rate: thigh_rates(&self.state),
                        hip_angle: [self.state.q[3], self.state.q[6]],
                        exo_torque: exo,
                        exo_cmd: held_cmd,
                        grf: self.grf,
                        muscle_torque: muscle_tau,
                        joint_rate: self.state.joint_rates(),
                        activations: step_activations,
                        step_index: self.steps,
                    });
                }
                Err(DynamicsError::NonFiniteState { .. }) => {
                    unstable = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        }
        self.tick += 1;
        let (tangent, normal) = self.terrain.frame();
        let (com, vel) = com_state(&self.state, &self.cfg.model);
        let height = self.terrain.clearance(com);
        let fell = unstable || height < self.cfg.reward.fall_fraction * self.standing_com_height;
        let truncated = !fell && self.tick >= self.cfg.horizon_ticks();
        let forward_speed = vel[0] * tangent[0] + vel[1] * tangent[1];
        let n_leg = self.cfg.muscles.muscles.len();
        let activations: Vec<f64> = self.muscle_states.iter().map(|m| m.activation).collect();
        let exo_cmd = self.pipes.map(|p| p.u_prev_cmd);
        let snap = RewardSnapshot {
            forward_speed,
            vertical_speed: vel[0] * normal[0] + vel[1] * normal[1],
            trunk_pitch: self.state.q[2],
            trunk_rate: self.state.qd[2],
            knee_angles: [self.state.q[4], self.state.q[7]],
            knee_load,
            activations: activations[..n_leg].to_vec(),
            exo_cmd,
            exo_cmd_prev,
            fell,
        };
        let breakdown = compute_reward(&snap, self.target_speed, &self.cfg.reward);
        let terminated = fell || truncated;
        if terminated {
            self.done = true;
            if self.from_curriculum {
                if let Some(idx) = slope_index(self.slope_deg) {
                    let outcome = if fell { Outcome::Fell } else { Outcome::Completed };
                    update_difficulty(&mut self.ctx.scores, idx, outcome, &self.cfg.difficulty);
                }
            }
        }
        let obs = if unstable { vec![0.0; self.obs_dim()] } else { self.observation() };
        Ok(StepResult {
            obs,
            reward: breakdown.total,
            terminated,
            info: StepInfo {
                breakdown,
                substeps: records,
                activations,
                forward_speed,
                exo_cmd,
                fell,
                truncated,
                unstable,
            },
        })
    }

    fn substep_view(&self) -> SubstepView {
        SubstepView {
            t: self.state.t,
            step_index: self.steps,
            thigh_rate: thigh_rates(&self.state),
            hip_angle: [self.state.q[3], self.state.q[6]],
        }
    }
}

pub fn observation_dim(muscles: &MuscleSet) -> usize {
    // muscles ×4, joints ×2, trunk 2, feet 4, GRF 4, exo 2, COM velocity 2, target speed 1, trunk actuators
    4 * muscles.muscles.len() + 2 * NJOINT + 2 + 4 + 4 + 2 + 2 + 1 + muscles.trunk.len()
}

/// Thigh angular velocities in the world frame (the gyroscope signal).
pub fn thigh_rates(state: &SimState) -> [f64; 2] {
    Side::BOTH.map(|side| crate::dynamics::segment_angular_velocity(state, SegmentId::thigh(side)))
}

/// Knee joint reaction force per leg, in body weights, from Newton's law on
/// the shank and foot: `F = Σ m (a − g) − F_ground`. Zero for a foot without
/// ground contact.
pub fn knee_loads(model: &BodyModel, acc: &Accelerations) -> [f64; 2] {
    let bw = model.weight();
    let segs = [[SegmentId::ShankL, SegmentId::FootL], [SegmentId::ShankR, SegmentId::FootR]];
    std::array::from_fn(|side| {
        if acc.contact.feet[side].normal <= 0.0 {
            return 0.0;
        }
        let mut f = [0.0; 2];
        for seg in segs[side] {
            let m = model.segment(seg).mass;
            let p = &acc.kinematics.coms[seg.index()];
            for a in 0..2 {
                let lin: f64 = (0..acc.qdd.len()).map(|k| p.jac[a][k] * acc.qdd[k]).sum();
                let g = if a == 1 { -model.gravity } else { 0.0 };
                f[a] += m * (lin + p.bias_acc[a] - g);
            }
        }
        for point in [2 * side, 2 * side + 1] {
            for (fa, pa) in f.iter_mut().zip(acc.contact.points[point]) {
                *fa -= pa;
            }
        }
        f[0].hypot(f[1]) / bw
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(stage: Stage) -> Env {
        Env::new(EnvConfig::default(), SynergyBasis::reference_leg(), stage, 7).unwrap()
    }

    #[test]
    fn dimensions() {
        let e = env(Stage::One);
        assert_eq!(e.action_dim(), 12);
        assert_eq!(e.obs_dim(), 93);
        assert_eq!(e.observation().len(), 93);
        assert_eq!(EnvConfig::default().horizon_ticks(), 800);
        assert!((EnvConfig::default().physics_dt() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn stepping_requires_reset() {
        let mut e = env(Stage::One);
        assert!(matches!(e.step(&ActionVector::zeros(4)), Err(EnvError::SteppedAfterTermination)));
        e.reset().unwrap();
        let r = e.step(&ActionVector::zeros(4)).unwrap();
        assert_eq!(r.info.substeps.len(), 5);
        assert_eq!(r.obs.len(), 93);
    }

    #[test]
    fn exo_dt_must_match_physics() {
        let cfg = EnvConfig { exo: ExoPipelineConfig { dt: 0.01, ..Default::default() }, ..Default::default() };
        assert!(matches!(Env::new(cfg, SynergyBasis::reference_leg(), Stage::One, 0), Err(EnvError::Config(_))));
    }

    #[test]
    fn first_tick_is_finite_with_nonnegative_grf() {
        let mut e = env(Stage::One);
        e.reset_to(0, 1.0).unwrap();
        let mut a = ActionVector::zeros(4);
        a.syn_left = vec![0.3; 4];
        a.syn_right = vec![0.3; 4];
        let r = e.step(&a).unwrap();
        assert!(r.info.substeps.iter().all(|s| s.grf[0].normal >= 0.0));
        assert!(r.reward.is_finite());
    }
}
