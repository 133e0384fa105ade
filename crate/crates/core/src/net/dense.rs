//! Fully connected ReLU network with a linear output layer.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{NetError, Scalar};

/// How the raw output vector is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Linear,
    /// Mean and log standard deviation halves of a diagonal Gaussian.
    Gaussian { action_dim: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<S: Scalar> {
    sizes: Vec<usize>,
    head: Head,
    params: Vec<S>,
    version: u64,
}

/// Intermediates of a batched forward pass.
#[derive(Clone, Debug)]
pub struct DenseCache<S: Scalar> {
    version: u64,
    /// Input of every layer; entries after the first are post-ReLU.
    inputs: Vec<Array2<S>>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<S: Scalar> DenseNet<S> {
    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self, NetError> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(NetError::InvalidArchitecture(format!("layer sizes {sizes:?}")));
        }
        if let Head::Gaussian { action_dim } = head {
            if sizes[sizes.len() - 1] != 2 * action_dim {
                return Err(NetError::InvalidArchitecture(format!(
                    "Gaussian head over {action_dim} actions needs {} outputs",
                    2 * action_dim
                )));
            }
        }
        Ok(DenseNet { sizes: sizes.to_vec(), head, params: vec![S::zero(); param_count(sizes)], version: 0 })
    }

    /// Uniform `±1/√fan_in` initialization of weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], head: Head, rng: &mut R) -> Result<Self, NetError> {
        let mut net = Self::zeros(sizes, head)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + n] {
                *p = S::from_f64(rng.random_range(-bound..bound));
            }
            off += n;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
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

    pub fn version(&self) -> u64 {
        self.version
    }

    fn layer_offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Weight matrix (out × in) and bias of one layer.
    pub fn layer(&self, layer: usize) -> (ArrayView2<'_, S>, ArrayView1<'_, S>) {
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        let off = self.layer_offset(layer);
        let w = ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out]).expect("layer shape");
        let b = ArrayView1::from(&self.params[off + n_in * n_out..off + n_in * n_out + n_out]);
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<'_, S>) -> Result<(), NetError> {
        if x.ncols() != self.input_dim() {
            return Err(NetError::DimensionMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<'_, S>) -> Result<(Array2<S>, DenseCache<S>), NetError> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut h = x.to_owned();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w.t());
            z += &b;
            inputs.push(h);
            if l + 1 < self.n_layers() {
                z.mapv_inplace(|v| if v > S::zero() { v } else { S::zero() });
            }
            h = z;
        }
        Ok((h, DenseCache { version: self.version, inputs }))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: ArrayView2<'_, S>) -> Result<Array2<S>, NetError> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w.t());
            z += &b;
            if l + 1 < self.n_layers() {
                z.mapv_inplace(|v| if v > S::zero() { v } else { S::zero() });
            }
            h = z;
        }
        Ok(h)
    }

    pub fn predict_one(&self, x: &[S]) -> Result<Vec<S>, NetError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of a scalar loss with respect to every parameter and to the
    /// input batch, given `∂L/∂output`.
    pub fn backward(&self, cache: &DenseCache<S>, grad_out: ArrayView2<'_, S>) -> Result<(Vec<S>, Array2<S>), NetError> {
        if cache.version != self.version {
            return Err(NetError::StaleCache { cache: cache.version, current: self.version });
        }
        let batch = cache.inputs[0].nrows();
        if grad_out.dim() != (batch, self.output_dim()) {
            return Err(NetError::ShapeMismatch(format!(
                "output gradient {:?}, expected {:?}",
                grad_out.dim(),
                (batch, self.output_dim())
            )));
        }
        let mut grads = vec![S::zero(); self.params.len()];
        let mut dz = grad_out.to_owned();
        for l in (0..self.n_layers()).rev() {
            let (w, _) = self.layer(l);
            let input = &cache.inputs[l];
            let dw = dz.t().dot(input);
            let db: Array1<S> = dz.sum_axis(Axis(0));
            let off = self.layer_offset(l);
            let nw = dw.len();
            for (g, v) in grads[off..off + nw].iter_mut().zip(dw.iter()) {
                *g = *v;
            }
            for (g, v) in grads[off + nw..off + nw + db.len()].iter_mut().zip(db.iter()) {
                *g = *v;
            }
            let mut dx = dz.dot(&w);
            if l > 0 {
                ndarray::Zip::from(&mut dx).and(input).for_each(|d, &a| {
                    if a <= S::zero() {
                        *d = S::zero();
                    }
                });
            }
            dz = dx;
        }
        Ok((grads, dz))
    }

    /// Signature of every ReLU region visited by a forward pass.
    pub fn relu_mask(cache: &DenseCache<S>) -> Vec<bool> {
        cache.inputs[1..].iter().flat_map(|a| a.iter().map(|v| *v > S::zero())).collect()
    }

    /// Same architecture with converted parameters.
    pub fn cast<T: Scalar>(&self) -> DenseNet<T> {
        DenseNet {
            sizes: self.sizes.clone(),
            head: self.head,
            params: self.params.iter().map(|p| T::from_f64(p.as_f64())).collect(),
            version: 0,
        }
    }

    /// Architecture string used in checkpoints, e.g. `dense:4-8-2:linear`.
    pub fn descriptor(&self) -> String {
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let head = match self.head {
            Head::Linear => "linear",
            Head::Gaussian { .. } => "gaussian",
        };
        format!("dense:{}:{head}", sizes.join("-"))
    }

    pub fn from_descriptor(desc: &str) -> Result<Self, NetError> {
        let bad = || NetError::InvalidArchitecture(format!("descriptor `{desc}`"));
        let parts: Vec<&str> = desc.split(':').collect();
        if parts.len() != 3 || parts[0] != "dense" {
            return Err(bad());
        }
        let sizes = parts[1].split('-').map(usize::from_str).collect::<Result<Vec<_>, _>>().map_err(|_| bad())?;
        let head = match parts[2] {
            "linear" => Head::Linear,
            "gaussian" => Head::Gaussian { action_dim: sizes.last().copied().unwrap_or(0) / 2 },
            _ => return Err(bad()),
        };
        Self::zeros(&sizes, head)
    }
}

impl<S: Scalar> fmt::Display for DenseNet<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.descriptor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_last_bias() {
        let mut net = DenseNet::<f64>::zeros(&[3, 4, 2], Head::Linear).unwrap();
        let n = net.params().len();
        net.params_mut()[n - 2] = 0.5;
        net.params_mut()[n - 1] = -1.5;
        assert_eq!(net.predict_one(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = DenseNet::<f64>::zeros(&[3, 3], Head::Linear).unwrap();
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(net.predict_one(&[1.0, -2.0, 0.25]).unwrap(), vec![1.0, -2.0, 0.25]);
    }

    #[test]
    fn parameter_count() {
        let net = DenseNet::<f32>::zeros(&[93, 128, 128, 64, 24], Head::Gaussian { action_dim: 12 }).unwrap();
        assert_eq!(net.params().len(), 93 * 128 + 128 + 128 * 128 + 128 + 128 * 64 + 64 + 64 * 24 + 24);
        assert!(DenseNet::<f32>::zeros(&[4, 5], Head::Gaussian { action_dim: 2 }).is_err());
    }

    #[test]
    fn dimension_and_stale_cache_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = DenseNet::<f64>::new(&[2, 3, 1], Head::Linear, &mut rng).unwrap();
        assert!(matches!(net.predict_one(&[1.0]), Err(NetError::DimensionMismatch { .. })));
        let x = array![[0.1, 0.2]];
        let (_, cache) = net.forward(x.view()).unwrap();
        net.params_mut()[0] += 1.0;
        let g = array![[1.0]];
        assert!(matches!(net.backward(&cache, g.view()), Err(NetError::StaleCache { .. })));
    }

    #[test]
    fn linear_mse_gradient_matches_hand_form() {
        // y = W x + b, L = Σ (y − t)²  ⇒  ∂L/∂W = 2 (y − t) xᵀ, ∂L/∂b = 2 (y − t)
        let mut net = DenseNet::<f64>::zeros(&[2, 2], Head::Linear).unwrap();
        net.set_params(&[1.0, 2.0, -1.0, 0.5, 0.1, -0.2]).unwrap();
        let x = [0.3, -0.7];
        let t = [1.0, 0.0];
        let y = [1.0 * 0.3 + 2.0 * -0.7 + 0.1, -1.0 * 0.3 + 0.5 * -0.7 - 0.2];
        let e = [2.0 * (y[0] - t[0]), 2.0 * (y[1] - t[1])];
        let expect = [e[0] * x[0], e[0] * x[1], e[1] * x[0], e[1] * x[1], e[0], e[1]];
        let (out, cache) = net.forward(ArrayView2::from_shape((1, 2), &x).unwrap()).unwrap();
        assert!((out[[0, 0]] - y[0]).abs() < 1e-15);
        let g = array![[2.0 * (out[[0, 0]] - t[0]), 2.0 * (out[[0, 1]] - t[1])]];
        let (grads, _) = net.backward(&cache, g.view()).unwrap();
        for (a, b) in grads.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = DenseNet::<f64>::new(&[4, 6, 3], Head::Linear, &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i + j) as f64 * 0.1);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (g, dx) = net.backward(&cache, Array2::zeros((5, 3)).view()).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn descriptor_round_trip() {
        let net = DenseNet::<f32>::zeros(&[5, 7, 4], Head::Gaussian { action_dim: 2 }).unwrap();
        let back = DenseNet::<f32>::from_descriptor(&net.descriptor()).unwrap();
        assert_eq!(back.sizes(), net.sizes());
        assert_eq!(back.head(), net.head());
    }
}
