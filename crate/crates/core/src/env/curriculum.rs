//! Slope difficulty scores, categorical slope sampling, the cyclic speed
//! schedule and the training-stage flag.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Terrain slopes in degrees, indexed 0..11.
pub const SLOPES: [i32; 11] = [-5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5];

/// Target speeds visited one per episode, in m/s.
pub const SPEED_CYCLE: [f64; 8] = [0.7, 0.9, 1.1, 1.3, 1.5, 1.3, 1.1, 0.9];

pub fn slope_index(slope_deg: i32) -> Option<usize> {
    SLOPES.iter().position(|&s| s == slope_deg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    /// Exoskeleton clamped to zero.
    #[serde(rename = "1")]
    One,
    /// Exoskeleton active.
    #[serde(rename = "2a")]
    TwoA,
    /// Exoskeleton clamped, matched baseline.
    #[serde(rename = "2b")]
    TwoB,
}

impl Stage {
    pub fn exo_active(self) -> bool {
        self == Stage::TwoA
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::One => "1",
            Stage::TwoA => "2a",
            Stage::TwoB => "2b",
        })
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" => Ok(Stage::One),
            "2a" => Ok(Stage::TwoA),
            "2b" => Ok(Stage::TwoB),
            other => Err(format!("unknown stage `{other}` (expected 1, 2a or 2b)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifficultyConfig {
    /// Score increase after a fall.
    pub up: f64,
    /// Score decrease after a completed episode.
    pub down: f64,
    pub min: f64,
    pub initial: f64,
}

impl Default for DifficultyConfig {
    fn default() -> Self {
        DifficultyConfig { up: 1.0, down: 0.2, min: 0.5, initial: 1.0 }
    }
}

impl DifficultyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min > 0.0 && self.up >= 0.0 && self.down >= 0.0 && self.initial >= self.min) {
            return Err("difficulty needs min > 0, up >= 0, down >= 0 and initial >= min".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Fell,
    Completed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumContext {
    pub scores: [f64; 11],
    pub speed_index: usize,
    pub stage: Stage,
}

impl CurriculumContext {
    pub fn new(stage: Stage, cfg: &DifficultyConfig) -> Self {
        CurriculumContext { scores: [cfg.initial; 11], speed_index: 0, stage }
    }
}

/// `P(i) = s_i / Σ s`.
pub fn slope_probabilities(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    scores.iter().map(|s| s / total).collect()
}

/// Draws a slope index with probability proportional to its score.
pub fn sample_slope<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(scores).expect("difficulty scores are positive").sample(rng)
}

pub fn update_difficulty(scores: &mut [f64], slope: usize, outcome: Outcome, cfg: &DifficultyConfig) {
    let s = &mut scores[slope];
    *s = match outcome {
        Outcome::Fell => *s + cfg.up,
        Outcome::Completed => (*s - cfg.down).max(cfg.min),
    };
}

pub fn target_speed_at(index: usize) -> f64 {
    SPEED_CYCLE[index % SPEED_CYCLE.len()]
}

/// Returns the speed for the current episode and advances the cycle.
pub fn next_target_speed(ctx: &mut CurriculumContext) -> f64 {
    let v = target_speed_at(ctx.speed_index);
    ctx.speed_index = (ctx.speed_index + 1) % SPEED_CYCLE.len();
    v
}
