//! Self-describing parameter container: a text header followed by a raw
//! little-endian `f32` payload.
//!
//! ```text
//! myoexo-checkpoint v1
//! seed 42
//! meta stage 1
//! tensor actor dense:93-128-128-64-24:gaussian 31064
//! end
//! <payload>
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{DenseNet, NetError, Scalar, TcnNet};

pub const CHECKPOINT_MAGIC: &str = "myoexo-checkpoint";
const VERSION: &str = "v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint version `{0}`")]
    Version(String),
    #[error("checkpoint has no tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint has no metadata `{0}`")]
    MissingMeta(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    /// Architecture descriptor, or `raw` for plain arrays.
    pub arch: String,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<Tensor>,
}

fn check_token(kind: &str, s: &str) -> Result<(), CheckpointError> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(CheckpointError::Format(format!("{kind} `{s}` must be a non-empty token without whitespace")));
    }
    Ok(())
}

impl Checkpoint {
    pub fn new(seed: u64) -> Self {
        Checkpoint { seed, ..Default::default() }
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| CheckpointError::MissingMeta(key.into()))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        self.meta(key)?.parse().map_err(|_| CheckpointError::Format(format!("metadata `{key}` does not parse")))
    }

    /// Adds or replaces a tensor.
    pub fn push(&mut self, name: &str, arch: &str, data: Vec<f32>) {
        self.tensors.retain(|t| t.name != name);
        self.tensors.push(Tensor { name: name.into(), arch: arch.into(), data });
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, CheckpointError> {
        self.tensors.iter().find(|t| t.name == name).ok_or_else(|| CheckpointError::MissingTensor(name.into()))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let mut header = format!("{CHECKPOINT_MAGIC} {VERSION}\nseed {}\n", self.seed);
        for (k, v) in &self.meta {
            check_token("metadata key", k)?;
            if v.contains('\n') {
                return Err(CheckpointError::Format(format!("metadata `{k}` spans lines")));
            }
            header.push_str(&format!("meta {k} {v}\n"));
        }
        for t in &self.tensors {
            check_token("tensor name", &t.name)?;
            check_token("architecture", &t.arch)?;
            header.push_str(&format!("tensor {} {} {}\n", t.name, t.arch, t.data.len()));
        }
        header.push_str("end\n");
        w.write_all(header.as_bytes())?;
        for t in &self.tensors {
            let mut bytes = Vec::with_capacity(4 * t.data.len());
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next_line = |r: &mut BufReader<R>| -> Result<String, CheckpointError> {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(CheckpointError::Format("header ends before `end`".into()));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };
        let first = next_line(&mut r)?;
        let mut it = first.split(' ');
        if it.next() != Some(CHECKPOINT_MAGIC) {
            return Err(CheckpointError::Format("not a checkpoint file".into()));
        }
        match it.next() {
            Some(VERSION) => {}
            other => return Err(CheckpointError::Version(other.unwrap_or("").into())),
        }
        let mut ck = Checkpoint::default();
        let mut shapes = Vec::new();
        let mut seen_seed = false;
        loop {
            let l = next_line(&mut r)?;
            if l == "end" {
                break;
            }
            let (kind, rest) = l.split_once(' ').ok_or_else(|| CheckpointError::Format(format!("line `{l}`")))?;
            match kind {
                "seed" => {
                    ck.seed = rest.parse().map_err(|_| CheckpointError::Format(format!("seed `{rest}`")))?;
                    seen_seed = true;
                }
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ck.meta.insert(k.into(), v.into());
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 3 {
                        return Err(CheckpointError::Format(format!("tensor line `{l}`")));
                    }
                    let len: usize = f[2].parse().map_err(|_| CheckpointError::Format(format!("tensor length `{}`", f[2])))?;
                    shapes.push((f[0].to_string(), f[1].to_string(), len));
                }
                _ => return Err(CheckpointError::Format(format!("unknown header entry `{kind}`"))),
            }
        }
        if !seen_seed {
            return Err(CheckpointError::Format("missing seed".into()));
        }
        for (name, arch, len) in shapes {
            let mut bytes = vec![0u8; 4 * len];
            r.read_exact(&mut bytes).map_err(|_| CheckpointError::Format(format!("payload of `{name}` is truncated")))?;
            let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            ck.tensors.push(Tensor { name, arch, data });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(CheckpointError::Format("trailing bytes after payload".into()));
        }
        Ok(ck)
    }

    pub fn push_dense<S: Scalar>(&mut self, name: &str, net: &DenseNet<S>) {
        self.push(name, &net.descriptor(), net.params().iter().map(|p| p.as_f32()).collect());
    }

    pub fn dense<S: Scalar>(&self, name: &str) -> Result<DenseNet<S>, CheckpointError> {
        let t = self.tensor(name)?;
        let mut net = DenseNet::from_descriptor(&t.arch).map_err(net_err)?;
        let p: Vec<S> = t.data.iter().map(|&v| S::from_f32(v)).collect();
        net.set_params(&p).map_err(net_err)?;
        Ok(net)
    }

    pub fn push_tcn<S: Scalar>(&mut self, name: &str, net: &TcnNet<S>) {
        self.push(name, &net.descriptor(), net.params().iter().map(|p| p.as_f32()).collect());
    }

    pub fn tcn<S: Scalar>(&self, name: &str) -> Result<TcnNet<S>, CheckpointError> {
        let t = self.tensor(name)?;
        let mut net = TcnNet::from_descriptor(&t.arch).map_err(net_err)?;
        let p: Vec<S> = t.data.iter().map(|&v| S::from_f32(v)).collect();
        net.set_params(&p).map_err(net_err)?;
        Ok(net)
    }

    pub fn push_raw<S: Scalar>(&mut self, name: &str, data: &[S]) {
        self.push(name, "raw", data.iter().map(|p| p.as_f32()).collect());
    }

    pub fn raw<S: Scalar>(&self, name: &str) -> Result<Vec<S>, CheckpointError> {
        Ok(self.tensor(name)?.data.iter().map(|&v| S::from_f32(v)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        self.write_to(std::io::BufWriter::new(std::fs::File::create(&tmp)?))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}

fn net_err(e: NetError) -> CheckpointError {
    CheckpointError::Format(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_in_memory() {
        let mut ck = Checkpoint::new(9);
        ck.set_meta("stage", "2a");
        ck.set_meta("note", "two words");
        ck.push("a", "raw", vec![1.5, -0.0, f32::MIN_POSITIVE]);
        ck.push("b", "dense:2-1:linear", vec![]);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&buf[..]).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta("note").unwrap(), "two words");
    }

    #[test]
    fn rejects_corruption() {
        let mut ck = Checkpoint::new(1);
        ck.push("a", "raw", vec![1.0, 2.0]);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert!(Checkpoint::read_from(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Checkpoint::read_from(&extra[..]).is_err());
        let v2 = String::from_utf8_lossy(&buf).replacen("v1", "v2", 1);
        assert!(matches!(Checkpoint::read_from(v2.as_bytes()), Err(CheckpointError::Version(_))));
        let mut bad = Checkpoint::new(1);
        bad.push("has space", "raw", vec![]);
        assert!(bad.write_to(Vec::new()).is_err());
    }
}
