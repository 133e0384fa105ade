//! Action layout and decoding into muscle excitations and exo commands.

use crate::synergy::{synergy_expand, SynergyBasis, SynergyError};

use super::curriculum::Stage;

/// Per-leg synergy coefficients, two trunk excitations and two exo commands
/// (left, right). With an identity basis the per-leg entries are direct
/// muscle excitations.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionVector {
    pub syn_left: Vec<f64>,
    pub syn_right: Vec<f64>,
    pub trunk: [f64; 2],
    pub exo: [f64; 2],
}

impl ActionVector {
    pub fn dim(rank: usize) -> usize {
        2 * rank + 4
    }

    pub fn zeros(rank: usize) -> Self {
        ActionVector { syn_left: vec![0.0; rank], syn_right: vec![0.0; rank], trunk: [0.0; 2], exo: [0.0; 2] }
    }

    /// Splits a flat vector laid out as `[left.., right.., trunk×2, exo×2]`.
    pub fn from_flat(flat: &[f64], rank: usize) -> Result<Self, SynergyError> {
        let dim = Self::dim(rank);
        if flat.len() != dim {
            return Err(SynergyError::LengthMismatch { expected: dim, got: flat.len() });
        }
        Ok(ActionVector {
            syn_left: flat[..rank].to_vec(),
            syn_right: flat[rank..2 * rank].to_vec(),
            trunk: [flat[2 * rank], flat[2 * rank + 1]],
            exo: [flat[2 * rank + 2], flat[2 * rank + 3]],
        })
    }

    /// Maps a squashed policy output in `[-1, 1]` to natural units: synergy
    /// and trunk entries to `[0, 1]`, exo entries unchanged.
    pub fn from_policy_output(y: &[f64], rank: usize) -> Result<Self, SynergyError> {
        let mut a = Self::from_flat(y, rank)?;
        let unit = |v: &mut f64| *v = 0.5 * (*v + 1.0);
        a.syn_left.iter_mut().for_each(unit);
        a.syn_right.iter_mut().for_each(unit);
        a.trunk.iter_mut().for_each(unit);
        Ok(a)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.syn_left.clone();
        v.extend_from_slice(&self.syn_right);
        v.extend_from_slice(&self.trunk);
        v.extend_from_slice(&self.exo);
        v
    }
}

/// Decoded controls: 16 leg excitations (left leg first), 2 trunk excitations,
/// then the exo commands.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedAction {
    pub excitations: Vec<f64>,
    pub exo: [f64; 2],
}

pub fn decode_action(a: &ActionVector, basis: &SynergyBasis, stage: Stage) -> Result<DecodedAction, SynergyError> {
    let clip01 = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let left: Vec<f64> = a.syn_left.iter().map(|&c| clip01(c)).collect();
    let right: Vec<f64> = a.syn_right.iter().map(|&c| clip01(c)).collect();
    let mut excitations = synergy_expand(&left, basis)?;
    excitations.extend(synergy_expand(&right, basis)?);
    excitations.extend(a.trunk.iter().map(|&t| clip01(t)));
    let exo = if stage.exo_active() {
        a.exo.map(|u| if u.is_nan() { 0.0 } else { u.clamp(-1.0, 1.0) })
    } else {
        [0.0; 2]
    };
    Ok(DecodedAction { excitations, exo })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> SynergyBasis {
        SynergyBasis::reference_leg()
    }

    #[test]
    fn zero_action_decodes_to_zero() {
        let d = decode_action(&ActionVector::zeros(4), &basis(), Stage::TwoA).unwrap();
        assert_eq!(d.excitations, vec![0.0; 18]);
        assert_eq!(d.exo, [0.0; 2]);
    }

    #[test]
    fn exo_clamped_outside_assisted_stage() {
        let mut a = ActionVector::zeros(4);
        a.exo = [1.0, 1.0];
        assert_eq!(decode_action(&a, &basis(), Stage::One).unwrap().exo, [0.0, 0.0]);
        assert_eq!(decode_action(&a, &basis(), Stage::TwoB).unwrap().exo, [0.0, 0.0]);
        a.exo = [0.5, -0.5];
        assert_eq!(decode_action(&a, &basis(), Stage::TwoA).unwrap().exo, [0.5, -0.5]);
        a.exo = [3.0, -7.0];
        assert_eq!(decode_action(&a, &basis(), Stage::TwoA).unwrap().exo, [1.0, -1.0]);
    }

    #[test]
    fn policy_output_mapping() {
        let y: Vec<f64> = vec![-1.0, 0.0, 1.0, 0.5, -1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -0.25, 0.75];
        let a = ActionVector::from_policy_output(&y, 4).unwrap();
        assert_eq!(a.syn_left, vec![0.0, 0.5, 1.0, 0.75]);
        assert_eq!(a.trunk, [1.0, 0.0]);
        assert_eq!(a.exo, [-0.25, 0.75]);
        assert_eq!(ActionVector::from_flat(&a.to_flat(), 4).unwrap(), a);
        assert!(ActionVector::from_flat(&y[..11], 4).is_err());
    }
}
