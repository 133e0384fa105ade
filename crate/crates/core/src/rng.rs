//! Named, reproducible random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Independent stream for `name` under `seed`. The same pair always yields
/// the same stream, and distinct names yield unrelated streams.
pub fn child_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Serializable position of a ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngSnapshot {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngSnapshot {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngSnapshot { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    pub fn to_hex(&self) -> String {
        format!("{}:{:x}:{:x}", hex::encode(self.seed), self.stream, self.word_pos)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut it = s.split(':');
        let seed: [u8; 32] = hex::decode(it.next()?).ok()?.try_into().ok()?;
        let stream = u64::from_str_radix(it.next()?, 16).ok()?;
        let word_pos = u128::from_str_radix(it.next()?, 16).ok()?;
        if it.next().is_some() {
            return None;
        }
        Some(RngSnapshot { seed, stream, word_pos })
    }
}
