//! Fully connected ReLU network with L2-normalized outputs and manual backprop.

use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::feature_store::{FeatureMatrix, ZERO_NORM};
use crate::rng::Rng;

/// Affine layers with ReLU between them; the last layer is linear and
/// its output rows are L2-normalized.
///
/// Parameters live in one flat buffer: per layer, the `out x in` weight
/// matrix (row-major) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    dims: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    n: usize,
    /// Input to each layer (`n x in_l`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer (`n x out_l`).
    pre: Vec<Vec<f64>>,
    /// Row norms of the last pre-activation.
    norms: Vec<f64>,
    /// Normalized output.
    out: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpNetwork {
    /// He-normal weights and biases uniform in `±1/sqrt(fan_in)`. Nonzero
    /// biases keep an output row defined when every hidden unit is inactive.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let bound = 1.0 / (fan_in as f64).sqrt();
            let uniform = Uniform::new(-bound, bound).expect("nonempty range");
            let (weights, rest) = net.params[offset..].split_at_mut(fan_in * fan_out);
            weights.iter_mut().for_each(|p| *p = normal.sample(rng));
            rest[..fan_out].iter_mut().for_each(|p| *p = uniform.sample(rng));
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        Ok(Self { dims: dims.to_vec(), params: vec![0.0; param_count(dims)] })
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!("{} parameters for dims {dims:?}, expected {}", params.len(), net.params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Value("non-finite network parameter".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.dims.len() - 1);
        let mut o = 0;
        for w in self.dims.windows(2) {
            offs.push(o);
            o += w[0] * w[1] + w[1];
        }
        offs
    }

    /// Forward pass keeping activations for [`MlpNetwork::backward`].
    pub fn forward_cached(&self, x: &FeatureMatrix) -> Result<(FeatureMatrix, ForwardCache)> {
        if x.d() != self.in_dim() {
            return Err(Error::Shape(format!("input has d={}, network expects {}", x.d(), self.in_dim())));
        }
        let n = x.n();
        let layers = self.dims.len() - 1;
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut cur = x.data().to_vec();
        for (l, off) in self.layer_offsets().into_iter().enumerate() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + din * dout];
            let b = &self.params[off + din * dout..off + din * dout + dout];
            let mut z = vec![0.0; n * dout];
            for (xi, zi) in cur.chunks_exact(din).zip(z.chunks_exact_mut(dout)) {
                for (o, zo) in zi.iter_mut().enumerate() {
                    let wr = &w[o * din..(o + 1) * din];
                    *zo = b[o] + wr.iter().zip(xi).map(|(a, c)| a * c).sum::<f64>();
                }
            }
            let next = if l + 1 < layers { z.iter().map(|v| v.max(0.0)).collect() } else { Vec::new() };
            inputs.push(std::mem::replace(&mut cur, next));
            pre.push(z);
        }
        let last = pre.last().expect("at least one layer");
        let dout = self.out_dim();
        let mut norms = Vec::with_capacity(n);
        let mut out = last.clone();
        for (i, row) in out.chunks_exact_mut(dout).enumerate() {
            let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm.is_nan() || nrm < ZERO_NORM {
                return Err(Error::DegenerateOutput { row: i });
            }
            row.iter_mut().for_each(|v| *v /= nrm);
            norms.push(nrm);
        }
        let z = FeatureMatrix::new_normalized(n, dout, out.clone())?;
        Ok((z, ForwardCache { n, inputs, pre, norms, out }))
    }

    pub fn forward(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.forward_cached(x).map(|(z, _)| z)
    }

    /// Gradients with respect to the parameters and the input, given the
    /// gradient with respect to the normalized output.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = cache.n;
        let dout = self.out_dim();
        if grad_out.len() != n * dout {
            return Err(Error::Shape(format!("output gradient has {} entries, expected {}", grad_out.len(), n * dout)));
        }
        // through the row normalization: (g - (g.z) z) / |y|
        let mut g: Vec<f64> = Vec::with_capacity(n * dout);
        for ((gr, zr), &nrm) in grad_out.chunks_exact(dout).zip(cache.out.chunks_exact(dout)).zip(&cache.norms) {
            let gz: f64 = gr.iter().zip(zr).map(|(a, b)| a * b).sum();
            g.extend(gr.iter().zip(zr).map(|(a, b)| (a - gz * b) / nrm));
        }
        let mut grads = vec![0.0; self.params.len()];
        let offs = self.layer_offsets();
        for l in (0..self.dims.len() - 1).rev() {
            let (din, dout) = (self.dims[l], self.dims[l + 1]);
            let off = offs[l];
            let x = &cache.inputs[l];
            let w = &self.params[off..off + din * dout];
            let (gw, gb) = grads[off..off + din * dout + dout].split_at_mut(din * dout);
            let mut gx = vec![0.0; n * din];
            for ((gi, xi), gxi) in g.chunks_exact(dout).zip(x.chunks_exact(din)).zip(gx.chunks_exact_mut(din)) {
                for (o, &go) in gi.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    gb[o] += go;
                    let wr = &w[o * din..(o + 1) * din];
                    let gwr = &mut gw[o * din..(o + 1) * din];
                    for k in 0..din {
                        gwr[k] += go * xi[k];
                        gxi[k] += go * wr[k];
                    }
                }
            }
            if l > 0 {
                // ReLU on the previous layer's pre-activation
                for (gv, &p) in gx.iter_mut().zip(&cache.pre[l - 1]) {
                    if p <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            g = gx;
        }
        Ok((grads, g))
    }

    /// FNV-1a over the parameter bit patterns.
    pub fn param_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.params {
            for b in p.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// `target <- momentum * target + (1 - momentum) * online`, parameter-wise,
/// evaluated as `target + (1 - momentum) * (online - target)`.
pub fn ema_update(online: &MlpNetwork, target: &mut MlpNetwork, momentum: f64) -> Result<()> {
    if online.dims != target.dims {
        return Err(Error::Shape(format!("EMA between {:?} and {:?}", online.dims, target.dims)));
    }
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::Config(format!("EMA momentum {momentum} outside [0, 1]")));
    }
    if momentum == 0.0 {
        target.params.copy_from_slice(&online.params);
        return Ok(());
    }
    let step = 1.0 - momentum;
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t += step * (o - *t);
    }
    Ok(())
}

/// Plain SGD step. Refuses non-finite gradients without touching the parameters.
pub fn sgd_step(net: &mut MlpNetwork, grads: &[f64], lr: f64) -> Result<()> {
    if grads.len() != net.params.len() {
        return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), net.params.len())));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("parameter {i} of network {:?} (value {})", net.dims, grads[i])));
    }
    for (p, g) in net.params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}
