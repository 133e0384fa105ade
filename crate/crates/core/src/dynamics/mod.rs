//! Planar articulated biped: 7 rigid segments, 9 generalized coordinates,
//! spring-damper ground contact on sloped terrain and semi-implicit Euler
//! integration at a fixed physics rate.

mod contact;
mod kinematics;
mod model;
mod state;
pub mod trace;

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

pub use contact::{contact_forces, friction_force, normal_force, ContactForces, Grf};
pub use kinematics::{segment_angles, segment_rates, Kinematics, PointKinematics, Vec2};
pub use model::{
    BaseMode, BodyModel, ContactParams, DeviceMass, Joint, JointLimits, Segment, SegmentId, Side, NDOF, NJOINT,
};
pub use state::{ContactMemory, SimState, Terrain};

/// Physics integration step (200 Hz).
pub const PHYSICS_DT: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("simulation state became non-finite at t = {t:.4} s")]
    NonFiniteState { t: f64 },
    #[error("unknown segment `{0}`")]
    UnknownSegment(String),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("expected {expected} joint torques, got {got}")]
    TorqueLength { expected: usize, got: usize },
    #[error("terrain slope {0} deg outside [-5, 5]")]
    SlopeOutOfRange(i32),
    #[error("invalid body model: {0}")]
    InvalidModel(String),
}

/// Result of one forward-dynamics evaluation.
#[derive(Clone, Debug)]
pub struct Accelerations {
    pub qdd: [f64; NDOF],
    pub contact: ContactForces,
    pub kinematics: Kinematics,
}

type Mat9 = SMatrix<f64, NDOF, NDOF>;
type Vec9 = SVector<f64, NDOF>;

/// Joint-space mass matrix `M(q)`.
pub fn mass_matrix(model: &BodyModel, kin: &Kinematics) -> [[f64; NDOF]; NDOF] {
    let m = mass_matrix_na(model, kin);
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn mass_matrix_na(model: &BodyModel, kin: &Kinematics) -> Mat9 {
    let mut m = Mat9::zeros();
    for seg in SegmentId::ALL {
        let s = model.segment(seg);
        let jac = &kin.coms[seg.index()].jac;
        let c = seg.angle_coefficients();
        for i in 0..NDOF {
            for j in i..NDOF {
                let v = s.mass * (jac[0][i] * jac[0][j] + jac[1][i] * jac[1][j]) + s.inertia * c[i] * c[j];
                m[(i, j)] += v;
                if i != j {
                    m[(j, i)] += v;
                }
            }
        }
    }
    m
}

/// Penalty and damping torques from the joint model (limits plus viscous damping).
pub fn passive_joint_torques(model: &BodyModel, state: &SimState) -> [f64; NJOINT] {
    std::array::from_fn(|j| {
        let q = state.q[3 + j];
        let qd = state.qd[3 + j];
        let [lo, hi] = model.limits.for_joint(j);
        let mut tau = -model.joint_damping * qd;
        if q < lo {
            tau += (model.limit_stiffness * (lo - q) - model.limit_damping * qd).max(0.0);
        } else if q > hi {
            tau += (model.limit_stiffness * (hi - q) - model.limit_damping * qd).min(0.0);
        }
        tau
    })
}

/// Joint-space damping matrix supplied by actuators: the applied joint
/// torques change by `-D Δq̇` when joint rates change by `Δq̇`.
pub type JointDamping = [[f64; NJOINT]; NJOINT];

/// Forces evaluated at the current state, before solving for accelerations.
struct Assembly {
    kin: Kinematics,
    contact: ContactForces,
    mass: Mat9,
    rhs: Vec9,
    /// Derivative of the generalized force with respect to `-q̇`.
    damping: Mat9,
}

fn assemble(
    state: &SimState,
    model: &BodyModel,
    joint_torques: &[f64],
    extra_damping: &JointDamping,
    terrain: &Terrain,
) -> Result<Assembly, DynamicsError> {
    if joint_torques.len() != NJOINT {
        return Err(DynamicsError::TorqueLength { expected: NJOINT, got: joint_torques.len() });
    }
    state.check_finite()?;
    let kin = Kinematics::compute(model, state);
    let contact = contact::contact_forces_with(&kin, &state.contact, model, terrain);
    let mut rhs = Vec9::zeros();
    let mut damping = Mat9::zeros();
    let passive = passive_joint_torques(model, state);
    for j in 0..NJOINT {
        rhs[3 + j] += joint_torques[j] + passive[j];
        damping[(3 + j, 3 + j)] += model.joint_damping + limit_damping(model, state, j);
        for k in 0..NJOINT {
            damping[(3 + j, 3 + k)] += extra_damping[j][k];
        }
    }
    for seg in SegmentId::ALL {
        let s = model.segment(seg);
        let com = &kin.coms[seg.index()];
        // External minus velocity-product force on the COM.
        let f = [-s.mass * com.bias_acc[0], -s.mass * (model.gravity + com.bias_acc[1])];
        for k in 0..NDOF {
            rhs[k] += com.jac[0][k] * f[0] + com.jac[1][k] * f[1];
        }
    }
    let (tangent, normal) = terrain.frame();
    for (i, (point, force)) in kin.contacts.iter().zip(contact.points.iter()).enumerate() {
        for k in 0..NDOF {
            rhs[k] += point.jac[0][k] * force[0] + point.jac[1][k] * force[1];
        }
        let [d_n, d_t] = contact.point_damping[i];
        if d_n == 0.0 && d_t == 0.0 {
            continue;
        }
        // Jᵀ (d_n n nᵀ + d_t t tᵀ) J
        let jn: [f64; NDOF] = std::array::from_fn(|k| point.jac[0][k] * normal[0] + point.jac[1][k] * normal[1]);
        let jt: [f64; NDOF] = std::array::from_fn(|k| point.jac[0][k] * tangent[0] + point.jac[1][k] * tangent[1]);
        for a in 0..NDOF {
            for b in 0..NDOF {
                damping[(a, b)] += d_n * jn[a] * jn[b] + d_t * jt[a] * jt[b];
            }
        }
    }
    let mass = mass_matrix_na(model, &kin);
    Ok(Assembly { kin, contact, mass, rhs, damping })
}

fn limit_damping(model: &BodyModel, state: &SimState, joint: usize) -> f64 {
    let q = state.q[3 + joint];
    let [lo, hi] = model.limits.for_joint(joint);
    if q < lo || q > hi {
        model.limit_damping
    } else {
        0.0
    }
}

/// Solves `A x = b` on the unconstrained coordinates.
fn solve(a: &Mat9, b: &Vec9, base: BaseMode, t: f64) -> Result<[f64; NDOF], DynamicsError> {
    let singular = DynamicsError::NonFiniteState { t };
    let mut x = [0.0; NDOF];
    match base {
        BaseMode::Floating => {
            let sol = a.cholesky().ok_or(singular)?.solve(b);
            x.copy_from_slice(sol.as_slice());
        }
        BaseMode::Pinned => {
            let sub: SMatrix<f64, NJOINT, NJOINT> = a.fixed_view::<NJOINT, NJOINT>(3, 3).into_owned();
            let sub_b: SVector<f64, NJOINT> = b.fixed_rows::<NJOINT>(3).into_owned();
            let sol = sub.cholesky().ok_or(singular)?.solve(&sub_b);
            x[3..].copy_from_slice(sol.as_slice());
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFiniteState { t });
    }
    Ok(x)
}

/// Generalized accelerations under gravity, the given joint torques, joint
/// limits and ground contact.
pub fn forward_dynamics(
    state: &SimState,
    model: &BodyModel,
    joint_torques: &[f64],
    terrain: &Terrain,
) -> Result<Accelerations, DynamicsError> {
    let asm = assemble(state, model, joint_torques, &[[0.0; NJOINT]; NJOINT], terrain)?;
    let qdd = solve(&asm.mass, &asm.rhs, model.base, state.t)?;
    Ok(Accelerations { qdd, contact: asm.contact, kinematics: asm.kin })
}

/// Advances the state by `dt`: velocities first, then positions.
pub fn step_dynamics(
    state: &SimState,
    model: &BodyModel,
    joint_torques: &[f64],
    terrain: &Terrain,
    dt: f64,
) -> Result<SimState, DynamicsError> {
    step_dynamics_detailed(state, model, joint_torques, terrain, dt).map(|(s, _)| s)
}

/// Like [`step_dynamics`], also returning the accelerations and contact forces
/// that acted during the step.
pub fn step_dynamics_detailed(
    state: &SimState,
    model: &BodyModel,
    joint_torques: &[f64],
    terrain: &Terrain,
    dt: f64,
) -> Result<(SimState, Accelerations), DynamicsError> {
    step_dynamics_damped(state, model, joint_torques, &[[0.0; NJOINT]; NJOINT], terrain, dt)
}

/// Semi-implicit step in which velocity-dependent forces (joint and limit
/// damping, contact damping and the actuator damping `extra_damping`) are
/// evaluated at the end-of-step velocity:
/// `(M + dt D) Δq̇ = dt f(q, q̇)`, then `q += dt (q̇ + Δq̇)`.
pub fn step_dynamics_damped(
    state: &SimState,
    model: &BodyModel,
    joint_torques: &[f64],
    extra_damping: &JointDamping,
    terrain: &Terrain,
    dt: f64,
) -> Result<(SimState, Accelerations), DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    let asm = assemble(state, model, joint_torques, extra_damping, terrain)?;
    let lhs = asm.mass + asm.damping * dt;
    let mut qdd = solve(&lhs, &asm.rhs, model.base, state.t)?;
    let mut next = state.clone();
    for k in 0..NDOF {
        next.qd[k] += dt * qdd[k];
        next.q[k] += dt * next.qd[k];
    }
    if model.base == BaseMode::Pinned {
        qdd[..3].fill(0.0);
    }
    next.t += dt;
    next.contact = asm.contact.memory;
    next.check_finite()?;
    Ok((next, Accelerations { qdd, contact: asm.contact, kinematics: asm.kin }))
}

/// Whole-body centre of mass position and velocity, device masses included.
pub fn com_state(state: &SimState, model: &BodyModel) -> ([f64; 2], [f64; 2]) {
    com_from_kinematics(&Kinematics::compute(model, state), model)
}

pub(crate) fn com_from_kinematics(kin: &Kinematics, model: &BodyModel) -> ([f64; 2], [f64; 2]) {
    let mut pos = [0.0; 2];
    let mut vel = [0.0; 2];
    let mut total = 0.0;
    for seg in SegmentId::ALL {
        let m = model.segment(seg).mass;
        let com = &kin.coms[seg.index()];
        total += m;
        for a in 0..2 {
            pos[a] += m * com.pos[a];
            vel[a] += m * com.vel[a];
        }
    }
    (pos.map(|p| p / total), vel.map(|v| v / total))
}

/// Linear momentum of the whole body.
pub fn linear_momentum(state: &SimState, model: &BodyModel) -> [f64; 2] {
    let (_, v) = com_state(state, model);
    let m = model.total_mass();
    [m * v[0], m * v[1]]
}

/// World-frame planar angular velocity of a segment. For a thigh this is
/// the mediolateral gyroscope channel.
pub fn segment_angular_velocity(state: &SimState, segment: SegmentId) -> f64 {
    segment_rates(&state.qd)[segment.index()]
}

/// Kinetic and gravitational potential energy (potential measured from y = 0).
pub fn mechanical_energy(state: &SimState, model: &BodyModel) -> (f64, f64) {
    let kin = Kinematics::compute(model, state);
    let m = mass_matrix_na(model, &kin);
    let qd = Vec9::from_column_slice(&state.qd);
    let kinetic = 0.5 * qd.dot(&(m * qd));
    let potential = SegmentId::ALL
        .iter()
        .map(|seg| model.segment(*seg).mass * model.gravity * kin.coms[seg.index()].pos[1])
        .sum();
    (kinetic, potential)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn airborne() -> (BodyModel, SimState, Terrain) {
        let model = BodyModel::default();
        let mut state = SimState::standing(&model);
        state.q[1] += 1.0;
        (model, state, Terrain::flat())
    }

    #[test]
    fn free_fall_loses_g_dt_of_vertical_speed() {
        let (model, state, terrain) = airborne();
        let next = step_dynamics(&state, &model, &[0.0; 6], &terrain, 0.005).unwrap();
        assert!((next.qd[1] - (-0.04905)).abs() < 1e-12);
        for k in [0, 2, 3, 4, 5, 6, 7, 8] {
            assert!(next.qd[k].abs() < 1e-12, "dof {k} moved: {}", next.qd[k]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (model, state, terrain) = airborne();
        assert_eq!(
            step_dynamics(&state, &model, &[0.0; 5], &terrain, 0.005).unwrap_err(),
            DynamicsError::TorqueLength { expected: 6, got: 5 }
        );
        assert!(matches!(
            step_dynamics(&state, &model, &[0.0; 6], &terrain, 0.0),
            Err(DynamicsError::InvalidTimeStep(_))
        ));
        let mut bad = state.clone();
        bad.qd[4] = f64::NAN;
        assert!(matches!(
            step_dynamics(&bad, &model, &[0.0; 6], &terrain, 0.005),
            Err(DynamicsError::NonFiniteState { .. })
        ));
        assert!(Terrain::new(6).is_err());
        assert_eq!("pelvis".parse::<SegmentId>().unwrap_err(), DynamicsError::UnknownSegment("pelvis".into()));
    }

    #[test]
    fn device_mass_is_counted() {
        let model = BodyModel::default();
        assert!((model.body_mass() - 74.5).abs() < 1e-9);
        assert!((model.total_mass() - (74.5 + 0.5 * 2.0 + 3.3)).abs() < 1e-9);
        let thigh = model.segment(SegmentId::ThighL);
        assert!((thigh.inertia / model.thigh.inertia - thigh.mass / model.thigh.mass).abs() < 1e-12);
        model.validate().unwrap();
    }

    #[test]
    fn thigh_rate_is_sum_of_frame_rates() {
        let model = BodyModel::default();
        let mut state = SimState::standing(&model);
        assert_eq!(segment_angular_velocity(&state, SegmentId::ThighR), 0.0);
        state.qd[6] = 1.0;
        assert_eq!(segment_angular_velocity(&state, SegmentId::ThighR), 1.0);
        state.qd[2] = 0.5;
        assert_eq!(segment_angular_velocity(&state, SegmentId::ThighR), 1.5);
        assert_eq!(segment_angular_velocity(&state, SegmentId::ThighL), 0.5);
    }

    #[test]
    fn step_is_deterministic() {
        let model = BodyModel::default();
        let mut state = SimState::standing(&model);
        state.qd = [0.3, -0.1, 0.2, 1.0, -0.5, 0.3, -0.7, 0.2, 0.1];
        let tau = [3.0, -2.0, 1.0, 0.5, 4.0, -1.0];
        let a = step_dynamics(&state, &model, &tau, &Terrain::new(3).unwrap(), PHYSICS_DT).unwrap();
        let b = step_dynamics(&state, &model, &tau, &Terrain::new(3).unwrap(), PHYSICS_DT).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pinned_base_keeps_trunk_still() {
        let mut model = BodyModel::default();
        model.base = BaseMode::Pinned;
        let mut state = SimState::standing(&model);
        state.q[1] += 0.5;
        state.q[3] = 0.4;
        let next = step_dynamics(&state, &model, &[0.0; 6], &Terrain::flat(), PHYSICS_DT).unwrap();
        assert_eq!(&next.q[..3], &state.q[..3]);
        assert!(next.qd[3] < 0.0, "lifted thigh should swing back");
    }
}
