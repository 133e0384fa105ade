//! Hill-type musculotendon actuators with rigid tendons and constant moment
//! arms, plus ideal torque actuators for the trunk.

mod curves;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{JointDamping, Side, SimState, NJOINT};

pub use curves::{force_length, force_velocity, force_velocity_slope, passive_force_length};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MuscleError {
    #[error("{what} = {value} outside [0, 1]")]
    InvalidRange { what: &'static str, value: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid muscle `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
}

/// A lower-limb muscle acting on the joints of one leg.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleSpec {
    pub name: String,
    pub side: Side,
    /// Maximum isometric force (N).
    pub f_max: f64,
    /// Optimal fiber length (m).
    pub l_opt: f64,
    /// Maximum contraction velocity in optimal lengths per second.
    pub v_max: f64,
    pub tau_act: f64,
    pub tau_deact: f64,
    /// Tendon slack length (m).
    pub l_slack: f64,
    /// Musculotendon path length at the neutral pose (m).
    pub mtu_neutral: f64,
    /// Signed moment arms about hip, knee and ankle (m), positive in the
    /// joint's positive direction (flexion, flexion, dorsiflexion).
    pub moment_arms: [f64; 3],
}

/// An ideal torque actuator between trunk and pelvis. Its torque is applied
/// to the trunk and reacted equally by both hips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrunkActuatorSpec {
    pub name: String,
    /// Peak torque on the trunk (Nm); positive pitches the trunk backward.
    pub max_torque: f64,
    pub tau_act: f64,
    pub tau_deact: f64,
}

/// Per-actuator state. Torque actuators leave the fiber fields at zero and
/// report torque in `force`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MuscleState {
    pub activation: f64,
    pub excitation: f64,
    pub fiber_length: f64,
    pub fiber_velocity: f64,
    pub force: f64,
}

impl MuscleSpec {
    pub fn validate(&self) -> Result<(), MuscleError> {
        let bad = |reason: &str| MuscleError::InvalidSpec { name: self.name.clone(), reason: reason.into() };
        if !(self.f_max > 0.0) {
            return Err(bad("f_max must be positive"));
        }
        if !(self.l_opt > 0.0) {
            return Err(bad("l_opt must be positive"));
        }
        if !(self.v_max > 0.0) {
            return Err(bad("v_max must be positive"));
        }
        if !(self.tau_act > 0.0 && self.tau_act <= self.tau_deact) {
            return Err(bad("need 0 < tau_act <= tau_deact"));
        }
        Ok(())
    }

    fn leg_angles(&self, state: &SimState) -> ([f64; 3], [f64; 3]) {
        let off = 3 + self.side.joint_offset();
        (
            [state.q[off], state.q[off + 1], state.q[off + 2]],
            [state.qd[off], state.qd[off + 1], state.qd[off + 2]],
        )
    }

    /// Fiber length (m) and velocity (m/s) for a rigid tendon.
    pub fn fiber_kinematics(&self, state: &SimState) -> (f64, f64) {
        let (q, qd) = self.leg_angles(state);
        let stretch: f64 = self.moment_arms.iter().zip(q).map(|(r, a)| r * a).sum();
        let rate: f64 = self.moment_arms.iter().zip(qd).map(|(r, w)| r * w).sum();
        (self.mtu_neutral - stretch - self.l_slack, -rate)
    }

    pub fn normalized_length(&self, fiber_length: f64) -> f64 {
        fiber_length / self.l_opt
    }

    pub fn normalized_velocity(&self, fiber_velocity: f64) -> f64 {
        fiber_velocity / (self.v_max * self.l_opt)
    }
}

fn check_unit(what: &'static str, value: f64) -> Result<(), MuscleError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MuscleError::InvalidRange { what, value })
    }
}

fn exact_activation(a: f64, e: f64, dt: f64, tau_act: f64, tau_deact: f64) -> f64 {
    let tau = if e > a { tau_act } else { tau_deact };
    (e + (a - e) * (-dt / tau).exp()).clamp(0.0, 1.0)
}

/// First-order activation dynamics integrated exactly over `dt`.
pub fn activation_step(a: f64, e: f64, dt: f64, spec: &MuscleSpec) -> Result<f64, MuscleError> {
    check_unit("activation", a)?;
    check_unit("excitation", e)?;
    Ok(exact_activation(a, e, dt, spec.tau_act, spec.tau_deact))
}

/// Hill force `F_max (a f_l f_v + f_p)` from normalized fiber length and velocity.
pub fn muscle_force(a: f64, l_norm: f64, v_norm: f64, spec: &MuscleSpec) -> f64 {
    let a = a.clamp(0.0, 1.0);
    spec.f_max * (a * force_length(l_norm) * force_velocity(v_norm) + passive_force_length(l_norm))
}

/// The full actuator set of the biped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuscleSet {
    pub muscles: Vec<MuscleSpec>,
    pub trunk: Vec<TrunkActuatorSpec>,
}

/// Hip flexor, gluteals, hamstrings, rectus femoris, vasti, gastrocnemius,
/// soleus, tibialis anterior.
pub const LEG_MUSCLES: [&str; 8] = ["HFL", "GLU", "HAM", "RF", "VAS", "GAS", "SOL", "TA"];

impl Default for MuscleSet {
    /// Planar gait muscle set.
    fn default() -> Self {
        // name, f_max, l_opt, l_slack, neutral normalized length, [hip, knee, ankle] arms
        let table: [(&str, f64, f64, f64, f64, [f64; 3]); 8] = [
            ("HFL", 2000.0, 0.11, 0.10, 0.95, [0.08, 0.0, 0.0]),
            ("GLU", 1500.0, 0.11, 0.13, 0.95, [-0.08, 0.0, 0.0]),
            ("HAM", 3000.0, 0.10, 0.31, 0.90, [-0.08, 0.05, 0.0]),
            ("RF", 1200.0, 0.08, 0.35, 0.95, [0.08, -0.06, 0.0]),
            ("VAS", 6000.0, 0.09, 0.23, 0.95, [0.0, -0.06, 0.0]),
            ("GAS", 1500.0, 0.05, 0.40, 0.95, [0.0, 0.05, -0.05]),
            ("SOL", 4000.0, 0.04, 0.26, 0.95, [0.0, 0.0, -0.05]),
            ("TA", 800.0, 0.06, 0.24, 0.95, [0.0, 0.0, 0.04]),
        ];
        let mut muscles = Vec::with_capacity(16);
        for side in Side::BOTH {
            let suffix = match side {
                Side::Left => "_l",
                Side::Right => "_r",
            };
            for (name, f_max, l_opt, l_slack, l_ref, arms) in table {
                muscles.push(MuscleSpec {
                    name: format!("{name}{suffix}"),
                    side,
                    f_max,
                    l_opt,
                    v_max: 12.0,
                    tau_act: 0.01,
                    tau_deact: 0.04,
                    l_slack,
                    mtu_neutral: l_slack + l_ref * l_opt,
                    moment_arms: arms,
                });
            }
        }
        let trunk = vec![
            TrunkActuatorSpec { name: "trunk_ext".into(), max_torque: 150.0, tau_act: 0.01, tau_deact: 0.04 },
            TrunkActuatorSpec { name: "trunk_flex".into(), max_torque: -150.0, tau_act: 0.01, tau_deact: 0.04 },
        ];
        MuscleSet { muscles, trunk }
    }
}

impl MuscleSet {
    pub fn validate(&self) -> Result<(), MuscleError> {
        for m in &self.muscles {
            m.validate()?;
        }
        for t in &self.trunk {
            if !(t.tau_act > 0.0 && t.tau_act <= t.tau_deact) {
                return Err(MuscleError::InvalidSpec { name: t.name.clone(), reason: "need 0 < tau_act <= tau_deact".into() });
            }
        }
        Ok(())
    }

    /// Number of excitation inputs: leg muscles followed by trunk actuators.
    pub fn len(&self) -> usize {
        self.muscles.len() + self.trunk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Indices of the leg muscles on one side, in set order.
    pub fn side_indices(&self, side: Side) -> Vec<usize> {
        self.muscles.iter().enumerate().filter(|(_, m)| m.side == side).map(|(i, _)| i).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.muscles.iter().map(|m| m.name.clone()).chain(self.trunk.iter().map(|t| t.name.clone())).collect()
    }

    pub fn initial_states(&self, state: &SimState) -> Vec<MuscleState> {
        let zeros = vec![0.0; self.len()];
        let (states, _) = self.evaluate(state, &zeros, &zeros);
        states
    }

    /// Geometry, forces and joint torques for given activations and excitations.
    fn evaluate(&self, state: &SimState, activations: &[f64], excitations: &[f64]) -> (Vec<MuscleState>, [f64; NJOINT]) {
        let mut out = Vec::with_capacity(self.len());
        for (i, spec) in self.muscles.iter().enumerate() {
            let (len, vel) = spec.fiber_kinematics(state);
            let a = activations[i];
            let force = muscle_force(a, spec.normalized_length(len), spec.normalized_velocity(vel), spec);
            out.push(MuscleState { activation: a, excitation: excitations[i], fiber_length: len, fiber_velocity: vel, force });
        }
        for (k, spec) in self.trunk.iter().enumerate() {
            let i = self.muscles.len() + k;
            let a = activations[i];
            out.push(MuscleState { activation: a, excitation: excitations[i], force: a * spec.max_torque, ..Default::default() });
        }
        let torques = joint_torques_from_muscles(&out, self);
        (out, torques)
    }
}

/// `τ_j = Σ_i r_ij F_i`; trunk torques are reacted half by each hip.
pub fn joint_torques_from_muscles(states: &[MuscleState], set: &MuscleSet) -> [f64; NJOINT] {
    let mut tau = [0.0; NJOINT];
    for (spec, st) in set.muscles.iter().zip(states) {
        let off = spec.side.joint_offset();
        for (k, r) in spec.moment_arms.iter().enumerate() {
            tau[off + k] += r * st.force;
        }
    }
    for st in states.iter().skip(set.muscles.len()).take(set.trunk.len()) {
        tau[0] -= 0.5 * st.force;
        tau[3] -= 0.5 * st.force;
    }
    tau
}

/// Sensitivity of muscle joint torques to joint rates through the
/// force-velocity relation: `D = Σ_i c_i r_i r_iᵀ` with
/// `c_i = F_max a f_l f_v' / (v_max l_opt)`. Positive semidefinite.
pub fn muscle_damping(states: &[MuscleState], set: &MuscleSet) -> JointDamping {
    let mut d = [[0.0; NJOINT]; NJOINT];
    for (spec, st) in set.muscles.iter().zip(states) {
        let l = spec.normalized_length(st.fiber_length);
        let v = spec.normalized_velocity(st.fiber_velocity);
        let c = spec.f_max * st.activation * force_length(l) * force_velocity_slope(v) / (spec.v_max * spec.l_opt);
        let off = spec.side.joint_offset();
        for (j, rj) in spec.moment_arms.iter().enumerate() {
            for (k, rk) in spec.moment_arms.iter().enumerate() {
                d[off + j][off + k] += c * rj * rk;
            }
        }
    }
    d
}

/// Advances activations by `dt` toward `excitations` and recomputes forces and
/// joint torques at `state`.
pub fn update_muscles(
    state: &SimState,
    previous: &[MuscleState],
    excitations: &[f64],
    dt: f64,
    set: &MuscleSet,
) -> Result<(Vec<MuscleState>, [f64; NJOINT]), MuscleError> {
    let n = set.len();
    if excitations.len() != n {
        return Err(MuscleError::LengthMismatch { expected: n, got: excitations.len() });
    }
    if previous.len() != n {
        return Err(MuscleError::LengthMismatch { expected: n, got: previous.len() });
    }
    for &e in excitations {
        check_unit("excitation", e)?;
    }
    let taus = set
        .muscles
        .iter()
        .map(|m| (m.tau_act, m.tau_deact))
        .chain(set.trunk.iter().map(|t| (t.tau_act, t.tau_deact)));
    let activations: Vec<f64> = previous
        .iter()
        .zip(excitations)
        .zip(taus)
        .map(|((p, &e), (ta, td))| exact_activation(p.activation.clamp(0.0, 1.0), e, dt, ta, td))
        .collect();
    Ok(set.evaluate(state, &activations, excitations))
}
