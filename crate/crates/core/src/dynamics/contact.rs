//! Spring-damper ground contact with anchored Coulomb friction.

use serde::{Deserialize, Serialize};

use super::kinematics::{Kinematics, Vec2};
use super::model::{BodyModel, ContactParams};
use super::state::{ContactMemory, SimState, Terrain};

/// Ground reaction force in the terrain frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Grf {
    pub normal: f64,
    pub tangential: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContactForces {
    /// Summed heel + toe force per foot (left, right).
    pub feet: [Grf; 2],
    /// World-frame force on each contact point (left heel, left toe, right heel, right toe).
    pub points: [Vec2; 4],
    /// Friction anchors after this evaluation.
    pub memory: ContactMemory,
    /// Per point: derivative of the normal and tangential force with respect
    /// to the point's approach and slip rates.
    pub(crate) point_damping: [[f64; 2]; 4],
}

/// Hunt-Crossley normal force with exponent 1, clipped at zero.
pub fn normal_force(params: &ContactParams, penetration: f64, penetration_rate: f64) -> f64 {
    if penetration <= 0.0 {
        return 0.0;
    }
    (params.stiffness * penetration * (1.0 + params.damping * penetration_rate)).max(0.0)
}

/// Tangential force from the anchor spring, limited to the friction cone.
/// Returns the force and the (possibly slid) anchor.
pub fn friction_force(params: &ContactParams, normal: f64, along: f64, along_rate: f64, anchor: f64) -> (f64, f64) {
    let trial = -params.tangential_stiffness * (along - anchor) - params.tangential_damping * along_rate;
    let cap = params.friction * normal;
    if trial.abs() <= cap {
        (trial, anchor)
    } else {
        let force = cap.copysign(trial);
        (force, along + force / params.tangential_stiffness)
    }
}

pub fn contact_forces(state: &SimState, model: &BodyModel, terrain: &Terrain) -> ContactForces {
    let kin = Kinematics::compute(model, state);
    contact_forces_with(&kin, &state.contact, model, terrain)
}

pub(crate) fn contact_forces_with(
    kin: &Kinematics,
    memory: &ContactMemory,
    model: &BodyModel,
    terrain: &Terrain,
) -> ContactForces {
    let params = &model.contact;
    let (t, n) = terrain.frame();
    let mut out = ContactForces::default();
    for (i, point) in kin.contacts.iter().enumerate() {
        let penetration = -terrain.clearance(point.pos);
        if penetration <= 0.0 {
            out.memory.anchors[i] = None;
            continue;
        }
        let penetration_rate = -(point.vel[0] * n[0] + point.vel[1] * n[1]);
        let fn_ = normal_force(params, penetration, penetration_rate);
        let along = terrain.along(point.pos);
        let along_rate = point.vel[0] * t[0] + point.vel[1] * t[1];
        let anchor = memory.anchors[i].unwrap_or(along);
        let (ft, anchor) = friction_force(params, fn_, along, along_rate, anchor);
        let d_n = if fn_ > 0.0 { params.stiffness * penetration * params.damping } else { 0.0 };
        let d_t = if ft.abs() < params.friction * fn_ { params.tangential_damping } else { 0.0 };
        out.point_damping[i] = [d_n, d_t];
        out.memory.anchors[i] = Some(anchor);
        out.points[i] = [fn_ * n[0] + ft * t[0], fn_ * n[1] + ft * t[1]];
        let foot = &mut out.feet[i / 2];
        foot.normal += fn_;
        foot.tangential += ft;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn airborne_foot_has_no_force() {
        let model = BodyModel::default();
        let mut state = SimState::standing(&model);
        state.q[1] += 0.1;
        let f = contact_forces(&state, &model, &Terrain::flat());
        assert_eq!(f.feet, [Grf::default(); 2]);
        assert!(f.memory.anchors.iter().all(Option::is_none));
    }

    #[test]
    fn static_penetration_gives_spring_force() {
        let params = ContactParams { stiffness: 30_000.0, ..ContactParams::default() };
        assert!((normal_force(&params, 0.002, 0.0) - 60.0).abs() < 1e-12);
        assert_eq!(normal_force(&params, -0.01, 0.0), 0.0);
        // Fast separation would pull; the law clips at zero.
        assert_eq!(normal_force(&params, 0.002, -10.0), 0.0);
    }

    #[test]
    fn sliding_force_stays_in_friction_cone() {
        let params = ContactParams::default();
        let (ft, anchor) = friction_force(&params, 400.0, 0.3, 2.0, 0.0);
        assert!((ft.abs() - 360.0).abs() < 1e-9);
        assert!(ft < 0.0);
        // The anchor slides so the spring exactly carries the capped force.
        assert!((-params.tangential_stiffness * (0.3 - anchor) - ft).abs() < 1e-9);
    }

    #[test]
    fn penetration_is_measured_along_slope_normal() {
        let terrain = Terrain::new(5).unwrap();
        let x = 0.7;
        let dip = 0.003;
        let p = [x, terrain.height_at(x) - dip];
        let expected = -dip * terrain.angle().cos();
        assert!((terrain.clearance(p) - expected).abs() < 1e-15);
    }
}
