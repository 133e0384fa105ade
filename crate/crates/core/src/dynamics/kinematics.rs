//! Closed-form planar kinematics.
//!
//! Every material point of the biped is the trunk base point plus a sum of
//! rotated local vectors, one per segment along the chain. Because absolute
//! segment angles are linear in `q`, Jacobians and the velocity-product
//! accelerations follow directly from that sum.

use super::model::{BodyModel, SegmentId, Side, NDOF};
use super::state::SimState;

pub type Vec2 = [f64; 2];

#[inline]
pub(crate) fn rotate(theta: f64, v: Vec2) -> Vec2 {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// One chain term: a local vector carried by a segment.
#[derive(Clone, Copy, Debug)]
struct Term {
    seg: SegmentId,
    v: Vec2,
}

/// Position, Jacobian and velocity-product acceleration of a body point.
#[derive(Clone, Debug)]
pub struct PointKinematics {
    pub pos: Vec2,
    pub vel: Vec2,
    /// 2 x NDOF Jacobian, row-major.
    pub jac: [[f64; NDOF]; 2],
    /// `J̇ q̇`, the acceleration when `q̈ = 0`.
    pub bias_acc: Vec2,
}

/// Kinematic snapshot of the whole body at one state.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub angles: [f64; 7],
    pub rates: [f64; 7],
    pub coms: [PointKinematics; 7],
    /// Heel and toe of the left foot, then of the right foot.
    pub contacts: [PointKinematics; 4],
    pub ankles: [PointKinematics; 2],
}

fn chain_to_proximal(model: &BodyModel, seg: SegmentId) -> Vec<Term> {
    let (thigh, shank) = match seg {
        SegmentId::ThighL | SegmentId::ShankL | SegmentId::FootL => (SegmentId::ThighL, SegmentId::ShankL),
        _ => (SegmentId::ThighR, SegmentId::ShankR),
    };
    let thigh_v = [0.0, -model.thigh.length];
    let shank_v = [0.0, -model.shank.length];
    match seg {
        SegmentId::Trunk | SegmentId::ThighL | SegmentId::ThighR => vec![],
        SegmentId::ShankL | SegmentId::ShankR => vec![Term { seg: thigh, v: thigh_v }],
        SegmentId::FootL | SegmentId::FootR => {
            vec![Term { seg: thigh, v: thigh_v }, Term { seg: shank, v: shank_v }]
        }
    }
}

fn point_terms(model: &BodyModel, seg: SegmentId, local: Vec2) -> Vec<Term> {
    let mut terms = chain_to_proximal(model, seg);
    terms.push(Term { seg, v: local });
    terms
}

fn evaluate(terms: &[Term], q: &[f64; NDOF], qd: &[f64; NDOF], angles: &[f64; 7], rates: &[f64; 7]) -> PointKinematics {
    let mut pos = [q[0], q[1]];
    let mut vel = [qd[0], qd[1]];
    let mut jac = [[0.0; NDOF]; 2];
    jac[0][0] = 1.0;
    jac[1][1] = 1.0;
    let mut bias_acc = [0.0; 2];
    for term in terms {
        let i = term.seg.index();
        let r = rotate(angles[i], term.v);
        // d(R v)/dθ = perp(R v)
        let dr = [-r[1], r[0]];
        let coeff = term.seg.angle_coefficients();
        pos[0] += r[0];
        pos[1] += r[1];
        vel[0] += dr[0] * rates[i];
        vel[1] += dr[1] * rates[i];
        for (k, c) in coeff.iter().enumerate() {
            if *c != 0.0 {
                jac[0][k] += dr[0] * c;
                jac[1][k] += dr[1] * c;
            }
        }
        let w2 = rates[i] * rates[i];
        bias_acc[0] -= w2 * r[0];
        bias_acc[1] -= w2 * r[1];
    }
    PointKinematics { pos, vel, jac, bias_acc }
}

pub fn segment_angles(q: &[f64; NDOF]) -> [f64; 7] {
    SegmentId::ALL.map(|seg| dot(&seg.angle_coefficients(), q))
}

pub fn segment_rates(qd: &[f64; NDOF]) -> [f64; 7] {
    SegmentId::ALL.map(|seg| dot(&seg.angle_coefficients(), qd))
}

fn dot(a: &[f64; NDOF], b: &[f64; NDOF]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Kinematics {
    pub fn compute(model: &BodyModel, state: &SimState) -> Self {
        let q = &state.q;
        let qd = &state.qd;
        let angles = segment_angles(q);
        let rates = segment_rates(qd);
        let coms = SegmentId::ALL.map(|seg| {
            let local = model.segment(seg).com;
            evaluate(&point_terms(model, seg, local), q, qd, &angles, &rates)
        });
        let foot = |side: Side| match side {
            Side::Left => SegmentId::FootL,
            Side::Right => SegmentId::FootR,
        };
        let contacts = [
            (Side::Left, model.heel),
            (Side::Left, model.toe),
            (Side::Right, model.heel),
            (Side::Right, model.toe),
        ]
        .map(|(side, local)| evaluate(&point_terms(model, foot(side), local), q, qd, &angles, &rates));
        let ankles = Side::BOTH.map(|side| evaluate(&chain_to_proximal(model, foot(side)), q, qd, &angles, &rates));
        Kinematics { angles, rates, coms, contacts, ankles }
    }
}
