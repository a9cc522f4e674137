//! Small fully connected networks with reverse-mode gradients and Adam.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"LIRLMLP\0";
const FORMAT_VERSION: u32 = 1;

/// Default global gradient-norm clip.
pub const CLIP_NORM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => x.mapv_inplace(fast_tanh),
            Activation::Relu => x.mapv_inplace(|v| v.max(0.0)),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative(self, y: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => Array2::ones(y.raw_dim()),
            Activation::Tanh => y.mapv(|v| 1.0 - v * v),
            Activation::Relu => y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Relu),
            _ => Err(Error::Checkpoint(format!("unknown activation code {c}"))),
        }
    }
}

/// `tanh` through a branch-free `exp`, accurate to a few ulp. Unlike libm's
/// `tanh` it vectorizes, which matters in the training loop.
pub fn fast_tanh(x: f64) -> f64 {
    // tanh(±20) rounds to ±1
    let e = fast_exp(2.0 * x.clamp(-20.0, 20.0));
    (e - 1.0) / (e + 1.0)
}

/// `exp` for |t| ≤ 40: `2^k · e^r` with `|r| ≤ ln2 / 2` and a degree-12
/// Taylor polynomial for `e^r`.
fn fast_exp(t: f64) -> f64 {
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52, rounds to integer
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let kf = t * std::f64::consts::LOG2_E + SHIFT;
    let k = kf - SHIFT;
    let r = (t - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    for d in [39_916_800.0, 3_628_800.0, 362_880.0, 40_320.0, 5040.0, 720.0, 120.0, 24.0, 6.0, 2.0, 1.0, 1.0] {
        p = p * r + 1.0 / d;
    }
    // low mantissa bits of kf hold k; k + 1023 is the biased exponent
    let scale = f64::from_bits(kf.to_bits().wrapping_add(1023) << 52);
    p * scale
}

/// Dense layer computing `x·W + b` for row-major batches; `W` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    hidden: Activation,
    output: Activation,
}

/// Activations saved by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// `outputs[0]` is the input batch; `outputs[l + 1]` is layer `l`'s output.
    outputs: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("cache holds at least the input")
    }
}

/// Parameter gradients, shaped like the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales in place so the global norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            let s = max_norm / n;
            for l in &mut self.layers {
                l.w *= s;
                l.b *= s;
            }
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|g| g.is_finite()))
    }
}

impl Mlp {
    /// He-scaled uniform weights `U(−√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for layer in &mut net.layers {
            let bound = (6.0 / layer.w.nrows() as f64).sqrt();
            layer.w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                w: Array2::zeros((w[0], w[1])),
                b: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            hidden,
            output,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|_| Error::InvalidArgument("input vector".into()))?;
        let (y, _) = self.forward_batch(&batch)?;
        Ok(y.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a `batch × input` matrix.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Cache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                what: "network input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut h = outputs[l].dot(&layer.w) + &layer.b;
            self.activation(l).apply(&mut h);
            outputs.push(h);
        }
        let y = outputs.last().unwrap().clone();
        Ok((y, Cache { outputs }))
    }

    /// Reverse pass: `upstream` is dLoss/dOutput per batch row. Returns
    /// parameter gradients summed over the batch and the input gradient.
    pub fn backward(&self, cache: &Cache, upstream: &Array2<f64>) -> Result<(Grads, Array2<f64>)> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::Shape {
                what: "upstream gradient",
                expected: out.len(),
                got: upstream.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            delta *= &self.activation(l).derivative(&cache.outputs[l + 1]);
            let input = &cache.outputs[l];
            grads.push(Layer {
                w: input.t().dot(&delta),
                b: delta.sum_axis(Axis(0)),
            });
            delta = delta.dot(&self.layers[l].w.t());
        }
        grads.reverse();
        Ok((Grads { layers: grads }, delta))
    }

    /// Input gradient only; skips the parameter gradients.
    pub fn backward_input(&self, cache: &Cache, upstream: &Array2<f64>) -> Result<Array2<f64>> {
        if upstream.dim() != cache.output().dim() {
            return Err(Error::Shape {
                what: "upstream gradient",
                expected: cache.output().len(),
                got: upstream.len(),
            });
        }
        let mut delta = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            delta *= &self.activation(l).derivative(&cache.outputs[l + 1]);
            delta = delta.dot(&self.layers[l].w.t());
        }
        Ok(delta)
    }

    /// Polyak averaging `self ← τ·source + (1 − τ)·self`.
    pub fn soft_update(&mut self, source: &Mlp, tau: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            t.w.zip_mut_with(&s.w, |a, &b| *a = tau * b + (1.0 - tau) * *a);
            t.b.zip_mut_with(&s.b, |a, &b| *a = tau * b + (1.0 - tau) * *a);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|p| p.is_finite()))
    }

    /// Versioned little-endian binary: magic, version, layer sizes,
    /// activations, then each layer's weights (row-major) and biases.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        w.write_all(&[self.hidden.code(), self.output.code()])?;
        for layer in &self.layers {
            for p in layer.w.iter().chain(layer.b.iter()) {
                w.write_all(&p.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a network checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n) {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let sizes = (0..n)
            .map(|_| read_u32(&mut r).map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut act = [0u8; 2];
        r.read_exact(&mut act)?;
        let mut net = Self::zeros(&sizes, Activation::from_code(act[0])?, Activation::from_code(act[1])?)?;
        let mut buf = [0u8; 8];
        for layer in &mut net.layers {
            for p in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                r.read_exact(&mut buf)?;
                *p = f64::from_le_bytes(buf);
            }
        }
        Ok(net)
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Layer {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            cfg,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected Adam update. Non-finite gradients leave the network
    /// untouched and return an error.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Shape {
                what: "gradient layers",
                expected: net.layers.len(),
                got: grads.layers.len(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.w)
                .and(&g.w)
                .and(&mut m.w)
                .and(&mut v.w)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.b)
                .and(&g.b)
                .and(&mut m.b)
                .and(&mut v.b)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("network parameters after update".into()));
        }
        Ok(())
    }
}
