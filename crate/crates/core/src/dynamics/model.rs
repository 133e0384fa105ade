use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DynamicsError;

/// Number of generalized coordinates: trunk x, y, pitch and six joint angles.
pub const NDOF: usize = 9;
/// Number of actuated revolute joints.
pub const NJOINT: usize = 6;

/// Rigid segments of the planar biped, in generalized-coordinate order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SegmentId {
    Trunk,
    ThighL,
    ShankL,
    FootL,
    ThighR,
    ShankR,
    FootR,
}

impl SegmentId {
    pub const ALL: [SegmentId; 7] = [
        SegmentId::Trunk,
        SegmentId::ThighL,
        SegmentId::ShankL,
        SegmentId::FootL,
        SegmentId::ThighR,
        SegmentId::ShankR,
        SegmentId::FootR,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentId::Trunk => "trunk",
            SegmentId::ThighL => "thigh_l",
            SegmentId::ShankL => "shank_l",
            SegmentId::FootL => "foot_l",
            SegmentId::ThighR => "thigh_r",
            SegmentId::ShankR => "shank_r",
            SegmentId::FootR => "foot_r",
        }
    }

    pub fn thigh(side: Side) -> Self {
        match side {
            Side::Left => SegmentId::ThighL,
            Side::Right => SegmentId::ThighR,
        }
    }

    /// Coefficients of the segment's absolute angle as a linear function of `q`.
    ///
    /// Absolute angles are counter-clockwise rotations away from the standing
    /// reference pose. Hip flexion, knee extension and ankle dorsiflexion all
    /// rotate the distal segment counter-clockwise.
    pub(crate) fn angle_coefficients(self) -> [f64; NDOF] {
        let mut c = [0.0; NDOF];
        c[2] = 1.0;
        let (hip, knee, ankle) = match self {
            SegmentId::Trunk => return c,
            SegmentId::ThighL | SegmentId::ShankL | SegmentId::FootL => (3, 4, 5),
            SegmentId::ThighR | SegmentId::ShankR | SegmentId::FootR => (6, 7, 8),
        };
        c[hip] = 1.0;
        if matches!(self, SegmentId::ShankL | SegmentId::ShankR | SegmentId::FootL | SegmentId::FootR) {
            c[knee] = -1.0;
        }
        if matches!(self, SegmentId::FootL | SegmentId::FootR) {
            c[ankle] = 1.0;
        }
        c
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SegmentId {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SegmentId::ALL
            .into_iter()
            .find(|seg| seg.name() == s)
            .ok_or_else(|| DynamicsError::UnknownSegment(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Offset of this side's hip angle inside the joint vector.
    pub fn joint_offset(self) -> usize {
        3 * self.index()
    }
}

/// Revolute joints in joint-vector order; the generalized index is `3 + index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Joint {
    HipL,
    KneeL,
    AnkleL,
    HipR,
    KneeR,
    AnkleR,
}

impl Joint {
    pub const ALL: [Joint; NJOINT] =
        [Joint::HipL, Joint::KneeL, Joint::AnkleL, Joint::HipR, Joint::KneeR, Joint::AnkleR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::HipL => "hip_l",
            Joint::KneeL => "knee_l",
            Joint::AnkleL => "ankle_l",
            Joint::HipR => "hip_r",
            Joint::KneeR => "knee_r",
            Joint::AnkleR => "ankle_r",
        }
    }
}

/// Inertial and geometric description of one segment in its local frame.
///
/// The frame origin is the proximal joint (the hip for the trunk) and the
/// axes are aligned with the world axes in the standing reference pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub mass: f64,
    /// Moment of inertia about the segment COM.
    pub inertia: f64,
    pub length: f64,
    pub com: [f64; 2],
}

impl Segment {
    fn augmented(&self, added: f64) -> Segment {
        let scale = (self.mass + added) / self.mass;
        Segment {
            mass: self.mass + added,
            inertia: self.inertia * scale,
            length: self.length,
            com: self.com,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub hip: [f64; 2],
    pub knee: [f64; 2],
    pub ankle: [f64; 2],
}

impl JointLimits {
    pub fn for_joint(&self, joint: usize) -> [f64; 2] {
        match joint % 3 {
            0 => self.hip,
            1 => self.knee,
            _ => self.ankle,
        }
    }
}

/// Extra mass carried by the exoskeleton, added to segment inertial properties.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceMass {
    pub thigh: f64,
    pub trunk: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseMode {
    /// Trunk pose is free (normal walking).
    Floating,
    /// Trunk pose is held fixed; only the legs move (test rigs, suspended harness).
    Pinned,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// Normal stiffness per contact point (N/m).
    pub stiffness: f64,
    /// Hunt-Crossley damping (s/m).
    pub damping: f64,
    pub friction: f64,
    /// Tangential anchor spring (N/m) and damper (N·s/m).
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 30_000.0,
            damping: 1.5,
            friction: 0.9,
            tangential_stiffness: 20_000.0,
            tangential_damping: 300.0,
        }
    }
}

/// The planar 7-segment biped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BodyModel {
    pub trunk: Segment,
    pub thigh: Segment,
    pub shank: Segment,
    pub foot: Segment,
    /// Heel and toe contact points in the foot frame (origin at the ankle).
    pub heel: [f64; 2],
    pub toe: [f64; 2],
    pub limits: JointLimits,
    pub device: DeviceMass,
    pub gravity: f64,
    pub base: BaseMode,
    pub contact: ContactParams,
    /// Penalty stiffness beyond a joint limit (Nm/rad) and its damper (Nm·s/rad).
    pub limit_stiffness: f64,
    pub limit_damping: f64,
    /// Viscous damping on every joint (Nm·s/rad).
    pub joint_damping: f64,
}

impl Default for BodyModel {
    /// Anthropometry of a 74.5 kg adult plus the hip exoskeleton mass.
    fn default() -> Self {
        BodyModel {
            trunk: Segment { mass: 50.52, inertia: 2.8, length: 0.80, com: [0.0, 0.30] },
            thigh: Segment { mass: 7.45, inertia: 0.165, length: 0.46, com: [0.0, -0.20] },
            shank: Segment { mass: 3.46, inertia: 0.064, length: 0.45, com: [0.0, -0.195] },
            foot: Segment { mass: 1.08, inertia: 0.013, length: 0.23, com: [0.05, -0.05] },
            heel: [-0.06, -0.08],
            toe: [0.17, -0.08],
            limits: JointLimits { hip: [-0.6, 2.0], knee: [-0.1, 2.4], ankle: [-0.8, 0.5] },
            device: DeviceMass { thigh: 0.5, trunk: 3.3 },
            gravity: 9.81,
            base: BaseMode::Floating,
            contact: ContactParams::default(),
            limit_stiffness: 200.0,
            limit_damping: 5.0,
            joint_damping: 1.0,
        }
    }
}

impl BodyModel {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let segs = [("trunk", &self.trunk), ("thigh", &self.thigh), ("shank", &self.shank), ("foot", &self.foot)];
        for (name, s) in segs {
            if !(s.mass > 0.0 && s.inertia > 0.0 && s.length > 0.0) {
                return Err(DynamicsError::InvalidModel(format!(
                    "{name}: mass, inertia and length must be positive"
                )));
            }
        }
        for (name, [lo, hi]) in [("hip", self.limits.hip), ("knee", self.limits.knee), ("ankle", self.limits.ankle)] {
            if !(lo < hi) {
                return Err(DynamicsError::InvalidModel(format!("{name} limits must satisfy min < max")));
            }
        }
        if self.device.thigh < 0.0 || self.device.trunk < 0.0 {
            return Err(DynamicsError::InvalidModel("device masses must be non-negative".into()));
        }
        let c = &self.contact;
        if !(c.stiffness > 0.0 && c.friction >= 0.0 && c.damping >= 0.0 && c.tangential_stiffness > 0.0) {
            return Err(DynamicsError::InvalidModel("contact parameters out of range".into()));
        }
        Ok(())
    }

    /// Effective segment (device mass included) for each of the 7 segments.
    pub fn segment(&self, id: SegmentId) -> Segment {
        match id {
            SegmentId::Trunk => self.trunk.augmented(self.device.trunk),
            SegmentId::ThighL | SegmentId::ThighR => self.thigh.augmented(self.device.thigh),
            SegmentId::ShankL | SegmentId::ShankR => self.shank.clone(),
            SegmentId::FootL | SegmentId::FootR => self.foot.clone(),
        }
    }

    pub fn segments(&self) -> [Segment; 7] {
        SegmentId::ALL.map(|id| self.segment(id))
    }

    /// Sum of all segment masses including device augmentation.
    pub fn total_mass(&self) -> f64 {
        self.segments().iter().map(|s| s.mass).sum()
    }

    /// Body mass without the device.
    pub fn body_mass(&self) -> f64 {
        self.trunk.mass + 2.0 * (self.thigh.mass + self.shank.mass + self.foot.mass)
    }

    pub fn weight(&self) -> f64 {
        self.total_mass() * self.gravity
    }

    /// Hip height above flat ground in the standing reference pose (no penetration).
    pub fn standing_hip_height(&self) -> f64 {
        self.thigh.length + self.shank.length - self.heel[1].min(self.toe[1])
    }

    /// A model with every device mass removed.
    pub fn without_device(&self) -> BodyModel {
        BodyModel { device: DeviceMass { thigh: 0.0, trunk: 0.0 }, ..self.clone() }
    }
}
