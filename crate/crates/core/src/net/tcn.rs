//! Causal dilated convolutional network mapping a scalar history to one
//! bounded output.
//!
//! An input convolution lifts the signal to `channels` feature maps, each
//! residual block adds `relu(conv_d(h))` with its own dilation, and a linear
//! head on the newest time step is squashed with `tanh`. Convolution taps
//! look only backward in time and read zero before the sequence start.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetError, Scalar};

/// Samples in one input window.
pub const WINDOW_LEN: usize = 95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcnConfig {
    pub channels: usize,
    pub kernel: usize,
    /// One residual block per entry.
    pub dilations: Vec<usize>,
}

impl Default for TcnConfig {
    fn default() -> Self {
        TcnConfig { channels: 16, kernel: 5, dilations: vec![1, 2, 4] }
    }
}

impl TcnConfig {
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel - 1) * (1 + self.dilations.iter().sum::<usize>())
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.channels == 0 || self.kernel == 0 || self.dilations.iter().any(|&d| d == 0) {
            return Err(NetError::InvalidArchitecture("channels, kernel and dilations must be positive".into()));
        }
        if self.receptive_field() > WINDOW_LEN {
            return Err(NetError::InvalidArchitecture(format!(
                "receptive field {} exceeds the {WINDOW_LEN}-sample window",
                self.receptive_field()
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (c, k) = (self.channels, self.kernel);
        (c * k + c) + self.dilations.len() * (c * c * k + c) + (c + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcnNet<S: Scalar> {
    cfg: TcnConfig,
    params: Vec<S>,
    version: u64,
}

/// Intermediates of a full-sequence forward pass. Feature maps are stored
/// channel-major (`c * len + t`).
#[derive(Clone, Debug)]
pub struct TcnCache<S: Scalar> {
    version: u64,
    len: usize,
    input: Vec<S>,
    /// Post-ReLU input convolution followed by each block's output.
    hidden: Vec<Vec<S>>,
    /// Each block's pre-ReLU convolution.
    block_pre: Vec<Vec<S>>,
    output: Vec<S>,
}

impl<S: Scalar> TcnCache<S> {
    pub fn output(&self) -> &[S] {
        &self.output
    }
}

fn relu<S: Scalar>(v: S) -> S {
    if v > S::zero() {
        v
    } else {
        S::zero()
    }
}

struct Offsets {
    input_w: usize,
    input_b: usize,
    blocks: Vec<(usize, usize)>,
    head_w: usize,
    head_b: usize,
}

impl<S: Scalar> TcnNet<S> {
    pub fn zeros(cfg: TcnConfig) -> Result<Self, NetError> {
        cfg.validate()?;
        let params = vec![S::zero(); cfg.param_count()];
        Ok(TcnNet { cfg, params, version: 0 })
    }

    /// Uniform `±1/√fan_in` initialization.
    pub fn new<R: Rng + ?Sized>(cfg: TcnConfig, rng: &mut R) -> Result<Self, NetError> {
        let mut net = Self::zeros(cfg)?;
        let (c, k) = (net.cfg.channels, net.cfg.kernel);
        let o = net.offsets();
        let mut fill = |params: &mut [S], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in params {
                *p = S::from_f64(rng.random_range(-bound..bound));
            }
        };
        fill(&mut net.params[o.input_w..o.input_b + c], k);
        for &(w, b) in &o.blocks {
            fill(&mut net.params[w..b + c], c * k);
        }
        fill(&mut net.params[o.head_w..o.head_b + 1], c);
        Ok(net)
    }

    pub fn config(&self) -> &TcnConfig {
        &self.cfg
    }

    pub fn receptive_field(&self) -> usize {
        self.cfg.receptive_field()
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [S] {
        self.version += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, p: &[S]) -> Result<(), NetError> {
        if p.len() != self.params.len() {
            return Err(NetError::DimensionMismatch { expected: self.params.len(), got: p.len() });
        }
        self.params_mut().copy_from_slice(p);
        Ok(())
    }

    fn offsets(&self) -> Offsets {
        let (c, k) = (self.cfg.channels, self.cfg.kernel);
        let mut off = c * k + c;
        let blocks = self
            .cfg
            .dilations
            .iter()
            .map(|_| {
                let w = off;
                off += c * c * k;
                let b = off;
                off += c;
                (w, b)
            })
            .collect();
        Offsets { input_w: 0, input_b: c * k, blocks, head_w: off, head_b: off + c }
    }

    /// Output at every time step of `x`.
    pub fn forward_sequence(&self, x: &[S]) -> (Vec<S>, TcnCache<S>) {
        let (c, k) = (self.cfg.channels, self.cfg.kernel);
        let n = x.len();
        let o = self.offsets();
        let p = &self.params;
        let mut h = vec![S::zero(); c * n];
        for co in 0..c {
            let b = p[o.input_b + co];
            for t in 0..n {
                let mut acc = b;
                for tap in 0..k.min(t + 1) {
                    acc = acc + p[o.input_w + co * k + tap] * x[t - tap];
                }
                h[co * n + t] = relu(acc);
            }
        }
        let mut hidden = vec![h];
        let mut block_pre = Vec::with_capacity(o.blocks.len());
        for (&(wo, bo), &d) in o.blocks.iter().zip(&self.cfg.dilations) {
            let hin = hidden.last().expect("input layer");
            let mut z = vec![S::zero(); c * n];
            for co in 0..c {
                let zrow = &mut z[co * n..(co + 1) * n];
                zrow.iter_mut().for_each(|v| *v = p[bo + co]);
                for ci in 0..c {
                    let hrow = &hin[ci * n..(ci + 1) * n];
                    for tap in 0..k {
                        let w = p[wo + (co * c + ci) * k + tap];
                        let shift = tap * d;
                        if shift >= n {
                            break;
                        }
                        for (zv, hv) in zrow[shift..].iter_mut().zip(&hrow[..n - shift]) {
                            *zv = *zv + w * *hv;
                        }
                    }
                }
            }
            let hout: Vec<S> = hin.iter().zip(&z).map(|(&a, &b)| a + relu(b)).collect();
            block_pre.push(z);
            hidden.push(hout);
        }
        let top = hidden.last().expect("hidden layers");
        let output: Vec<S> = (0..n)
            .map(|t| {
                let mut acc = p[o.head_b];
                for ch in 0..c {
                    acc = acc + p[o.head_w + ch] * top[ch * n + t];
                }
                acc.tanh()
            })
            .collect();
        let cache = TcnCache { version: self.version, len: n, input: x.to_vec(), hidden, block_pre, output: output.clone() };
        (output, cache)
    }

    /// Prediction for the newest sample of a full window.
    pub fn forward_window(&self, window: &[S]) -> Result<S, NetError> {
        if window.len() != WINDOW_LEN {
            return Err(NetError::WindowLengthMismatch { expected: WINDOW_LEN, got: window.len() });
        }
        let rf = self.receptive_field();
        let (out, _) = self.forward_sequence(&window[WINDOW_LEN - rf..]);
        Ok(out[rf - 1])
    }

    /// Gradients with respect to the parameters and the input sequence,
    /// given `∂L/∂output[t]` for every step.
    pub fn backward(&self, cache: &TcnCache<S>, grad_out: &[S]) -> Result<(Vec<S>, Vec<S>), NetError> {
        if cache.version != self.version {
            return Err(NetError::StaleCache { cache: cache.version, current: self.version });
        }
        let n = cache.len;
        if grad_out.len() != n {
            return Err(NetError::DimensionMismatch { expected: n, got: grad_out.len() });
        }
        let (c, k) = (self.cfg.channels, self.cfg.kernel);
        let o = self.offsets();
        let p = &self.params;
        let mut g = vec![S::zero(); p.len()];
        let one = S::one();
        let top = cache.hidden.last().expect("hidden layers");
        let mut dh = vec![S::zero(); c * n];
        for t in 0..n {
            let y = cache.output[t];
            let dy = grad_out[t] * (one - y * y);
            if dy == S::zero() {
                continue;
            }
            g[o.head_b] = g[o.head_b] + dy;
            for ch in 0..c {
                g[o.head_w + ch] = g[o.head_w + ch] + dy * top[ch * n + t];
                dh[ch * n + t] = dh[ch * n + t] + dy * p[o.head_w + ch];
            }
        }
        for (bi, (&(wo, bo), &d)) in o.blocks.iter().zip(&self.cfg.dilations).enumerate().rev() {
            let hin = &cache.hidden[bi];
            let z = &cache.block_pre[bi];
            let dz: Vec<S> = dh.iter().zip(z).map(|(&gv, &zv)| if zv > S::zero() { gv } else { S::zero() }).collect();
            let mut dhin = dh;
            for co in 0..c {
                let dzrow = &dz[co * n..(co + 1) * n];
                g[bo + co] = dzrow.iter().fold(g[bo + co], |acc, &v| acc + v);
                for ci in 0..c {
                    let hrow = &hin[ci * n..(ci + 1) * n];
                    for tap in 0..k {
                        let shift = tap * d;
                        if shift >= n {
                            break;
                        }
                        let wi = wo + (co * c + ci) * k + tap;
                        let w = p[wi];
                        let mut acc = S::zero();
                        let drow = &mut dhin[ci * n..(ci + 1) * n];
                        for ((dzv, hv), dv) in dzrow[shift..].iter().zip(&hrow[..n - shift]).zip(&mut drow[..n - shift]) {
                            acc = acc + *dzv * *hv;
                            *dv = *dv + w * *dzv;
                        }
                        g[wi] = g[wi] + acc;
                    }
                }
            }
            dh = dhin;
        }
        let h0 = &cache.hidden[0];
        let mut dx = vec![S::zero(); n];
        for co in 0..c {
            for t in 0..n {
                if h0[co * n + t] <= S::zero() {
                    continue;
                }
                let dzv = dh[co * n + t];
                g[o.input_b + co] = g[o.input_b + co] + dzv;
                for tap in 0..k.min(t + 1) {
                    let wi = o.input_w + co * k + tap;
                    g[wi] = g[wi] + dzv * cache.input[t - tap];
                    dx[t - tap] = dx[t - tap] + dzv * p[wi];
                }
            }
        }
        Ok((g, dx))
    }

    /// Signature of every ReLU region visited by the last forward pass.
    pub fn relu_mask(cache: &TcnCache<S>) -> Vec<bool> {
        let mut m: Vec<bool> = cache.hidden[0].iter().map(|v| *v > S::zero()).collect();
        for z in &cache.block_pre {
            m.extend(z.iter().map(|v| *v > S::zero()));
        }
        m
    }

    pub fn cast<T: Scalar>(&self) -> TcnNet<T> {
        TcnNet { cfg: self.cfg.clone(), params: self.params.iter().map(|p| T::from_f64(p.as_f64())).collect(), version: 0 }
    }

    /// Architecture string used in checkpoints, e.g. `tcn:c16:k5:d1-2-4`.
    pub fn descriptor(&self) -> String {
        let d: Vec<String> = self.cfg.dilations.iter().map(|d| d.to_string()).collect();
        format!("tcn:c{}:k{}:d{}", self.cfg.channels, self.cfg.kernel, d.join("-"))
    }

    pub fn from_descriptor(desc: &str) -> Result<Self, NetError> {
        let bad = || NetError::InvalidArchitecture(format!("descriptor `{desc}`"));
        let parts: Vec<&str> = desc.split(':').collect();
        if parts.len() != 4 || parts[0] != "tcn" {
            return Err(bad());
        }
        let num = |s: &str, prefix: char| s.strip_prefix(prefix).and_then(|v| v.parse::<usize>().ok()).ok_or_else(bad);
        let channels = num(parts[1], 'c')?;
        let kernel = num(parts[2], 'k')?;
        let dilations = parts[3]
            .strip_prefix('d')
            .ok_or_else(bad)?
            .split('-')
            .map(|v| v.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::zeros(TcnConfig { channels, kernel, dilations })
    }
}
