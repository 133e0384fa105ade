//! Normalized Hill curves.

/// Width of the active force-length Gaussian, in optimal lengths.
const FL_WIDTH: f64 = 0.45;
/// Curvature of the concentric hyperbola.
const FV_K: f64 = 0.25;
/// Eccentric force plateau.
const FV_ECCENTRIC_MAX: f64 = 1.4;
/// Passive strain at which the passive element reaches `F_max`.
const FP_STRAIN: f64 = 0.6;
const FP_SHAPE: f64 = 4.0;
/// Length domain; inputs outside are clamped.
const L_MIN: f64 = 0.0;
const L_MAX: f64 = 1.0 + FP_STRAIN;

/// Active force-length: Gaussian bump with `f_l(1) = 1`.
pub fn force_length(l_norm: f64) -> f64 {
    let x = (l_norm.clamp(L_MIN, L_MAX) - 1.0) / FL_WIDTH;
    (-x * x).exp()
}

/// Force-velocity: Hill hyperbola for shortening (`v < 0`), saturating
/// eccentric branch for lengthening. `f_v(0) = 1`, `f_v(-1) = 0`, `f_v ≤ 1.4`.
pub fn force_velocity(v_norm: f64) -> f64 {
    let v = v_norm.clamp(-1.0, 1.0);
    if v <= 0.0 {
        (1.0 + v) / (1.0 - v / FV_K)
    } else {
        let a = 7.56 * FV_K;
        FV_ECCENTRIC_MAX - (FV_ECCENTRIC_MAX - 1.0) * (1.0 - v) / (1.0 + a * v)
    }
}

/// Derivative of [`force_velocity`]; zero where the input is clamped.
pub fn force_velocity_slope(v_norm: f64) -> f64 {
    if !(-1.0..=1.0).contains(&v_norm) {
        return 0.0;
    }
    if v_norm <= 0.0 {
        let d = 1.0 - v_norm / FV_K;
        (1.0 + 1.0 / FV_K) / (d * d)
    } else {
        let a = 7.56 * FV_K;
        let d = 1.0 + a * v_norm;
        (FV_ECCENTRIC_MAX - 1.0) * (1.0 + a) / (d * d)
    }
}

/// Passive exponential rise above optimal length; zero for `l ≤ 1`.
pub fn passive_force_length(l_norm: f64) -> f64 {
    let l = l_norm.clamp(L_MIN, L_MAX);
    if l <= 1.0 {
        0.0
    } else {
        ((FP_SHAPE * (l - 1.0) / FP_STRAIN).exp() - 1.0) / (FP_SHAPE.exp() - 1.0)
    }
}
