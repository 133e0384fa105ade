use serde::{Deserialize, Serialize};

use super::model::{BodyModel, NDOF};
use super::DynamicsError;

/// Tangential friction anchors per contact point (left heel, left toe,
/// right heel, right toe), expressed as a coordinate along the ground.
/// `None` means the point is not in contact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactMemory {
    pub anchors: [Option<f64>; 4],
}

/// Generalized state of the biped.
///
/// `q = [x, y, trunk pitch, hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r]`
/// where `(x, y)` is the hip (pelvis) point in metres and the remaining
/// entries are radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub q: [f64; NDOF],
    pub qd: [f64; NDOF],
    pub t: f64,
    pub contact: ContactMemory,
}

impl SimState {
    /// Standing reference pose with the feet resting on flat ground at height zero.
    pub fn standing(model: &BodyModel) -> Self {
        let mut q = [0.0; NDOF];
        q[1] = model.standing_hip_height();
        SimState { q, qd: [0.0; NDOF], t: 0.0, contact: ContactMemory::default() }
    }

    pub fn joint_angles(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.q[3 + i])
    }

    pub fn joint_rates(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.qd[3 + i])
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(self.qd.iter()).all(|v| v.is_finite())
    }

    pub(crate) fn check_finite(&self) -> Result<(), DynamicsError> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(DynamicsError::NonFiniteState { t: self.t })
        }
    }
}

/// Straight sloped ground through `(0, origin_height)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub slope_deg: i32,
    pub origin_height: f64,
}

impl Terrain {
    pub const MIN_SLOPE: i32 = -5;
    pub const MAX_SLOPE: i32 = 5;

    pub fn new(slope_deg: i32) -> Result<Self, DynamicsError> {
        Self::with_origin(slope_deg, 0.0)
    }

    pub fn with_origin(slope_deg: i32, origin_height: f64) -> Result<Self, DynamicsError> {
        if !(Self::MIN_SLOPE..=Self::MAX_SLOPE).contains(&slope_deg) {
            return Err(DynamicsError::SlopeOutOfRange(slope_deg));
        }
        Ok(Terrain { slope_deg, origin_height })
    }

    pub fn flat() -> Self {
        Terrain { slope_deg: 0, origin_height: 0.0 }
    }

    pub fn angle(&self) -> f64 {
        (self.slope_deg as f64).to_radians()
    }

    /// Unit tangent (uphill for positive slopes) and upward unit normal.
    pub fn frame(&self) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.angle().sin_cos();
        ([c, s], [-s, c])
    }

    pub fn height_at(&self, x: f64) -> f64 {
        self.origin_height + x * self.angle().tan()
    }

    /// Signed distance of a point above the surface, measured along the normal.
    pub fn clearance(&self, p: [f64; 2]) -> f64 {
        let (_, n) = self.frame();
        n[0] * p[0] + n[1] * (p[1] - self.origin_height)
    }

    /// Coordinate of a point along the surface tangent.
    pub fn along(&self, p: [f64; 2]) -> f64 {
        let (t, _) = self.frame();
        t[0] * p[0] + t[1] * (p[1] - self.origin_height)
    }
}
