//! AdaIN-conditioned U-Net velocity field `v_θ(x, τ)`.
//!
//! Encoder block: stride-2 conv → AdaIN(cond) → SiLU. Decoder block:
//! ×2 upsample, concatenate the skip at that resolution, conv → SiLU. A final
//! conv maps back to the input channels. The condition vector comes from a
//! two-layer MLP of the raw scalar τ.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, save_checkpoint_with_meta, Checkpoint};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Grads, Graph, Padding, Tensor, Var};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub in_channels: usize,
    pub enc_channels: Vec<usize>,
    pub dec_channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    pub d_cond: usize,
    pub hidden: usize,
    #[serde(default = "default_eps")]
    pub norm_eps: f64,
    pub padding: Padding,
}

fn default_kernel() -> usize {
    3
}

fn default_eps() -> f64 {
    1e-5
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::with_channels(1, vec![16, 32], vec![32, 16], Padding::Circular)
    }
}

impl NetConfig {
    pub fn with_channels(in_channels: usize, enc: Vec<usize>, dec: Vec<usize>, padding: Padding) -> Self {
        Self {
            in_channels,
            enc_channels: enc,
            dec_channels: dec,
            kernel: 3,
            d_cond: 8,
            hidden: 16,
            norm_eps: 1e-5,
            padding,
        }
    }

    /// `[4, 8] / [8, 4]` channels, used by tests and smoke runs.
    pub fn tiny(in_channels: usize, padding: Padding) -> Self {
        Self::with_channels(in_channels, vec![4, 8], vec![8, 4], padding)
    }

    /// `[128, 256] / [256, 128]` channels.
    pub fn paper(in_channels: usize, padding: Padding) -> Self {
        Self::with_channels(in_channels, vec![128, 256], vec![256, 128], padding)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("net: {m}")));
        if self.enc_channels.is_empty() || self.enc_channels.len() != self.dec_channels.len() {
            return bad("encoder and decoder channel lists must be non-empty and of equal length");
        }
        if self.in_channels == 0 || self.enc_channels.iter().chain(&self.dec_channels).any(|&c| c == 0) {
            return bad("channel counts must be positive");
        }
        if self.kernel % 2 == 0 {
            return bad("kernel size must be odd");
        }
        if self.d_cond == 0 || self.hidden == 0 {
            return bad("d_cond and hidden must be positive");
        }
        if !(self.norm_eps > 0.0) {
            return bad("norm_eps must be positive");
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.enc_channels.len()
    }

    /// Parameter tensors in canonical flattening order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let mut s = vec![
            ("time.w1".to_string(), vec![self.hidden, 1]),
            ("time.b1".to_string(), vec![self.hidden]),
            ("time.w2".to_string(), vec![self.d_cond, self.hidden]),
            ("time.b2".to_string(), vec![self.d_cond]),
        ];
        let mut c_prev = self.in_channels;
        for (i, &c) in self.enc_channels.iter().enumerate() {
            s.push((format!("enc{i}.conv.w"), vec![c, c_prev, k, k]));
            s.push((format!("enc{i}.conv.b"), vec![c]));
            s.push((format!("enc{i}.adain.w"), vec![2 * c, self.d_cond]));
            s.push((format!("enc{i}.adain.b"), vec![2 * c]));
            c_prev = c;
        }
        let levels = self.levels();
        for (i, &c) in self.dec_channels.iter().enumerate() {
            let skip = self.skip_channels(levels - 1 - i);
            s.push((format!("dec{i}.conv.w"), vec![c, c_prev + skip, k, k]));
            s.push((format!("dec{i}.conv.b"), vec![c]));
            c_prev = c;
        }
        s.push(("out.conv.w".to_string(), vec![self.in_channels, c_prev, k, k]));
        s.push(("out.conv.b".to_string(), vec![self.in_channels]));
        s
    }

    /// Channels of the skip tensor at resolution level `l` (0 is the input).
    fn skip_channels(&self, level: usize) -> usize {
        if level == 0 {
            self.in_channels
        } else {
            self.enc_channels[level - 1]
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// Parameters of the velocity net as one flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    config: NetConfig,
    flat: Vec<f64>,
    offsets: Vec<(usize, Vec<usize>)>,
}

impl NetParams {
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        Self::from_flat(config, vec![0.0; config.param_count()])
    }

    pub fn from_flat(config: &NetConfig, flat: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let mut offsets = Vec::new();
        let mut at = 0;
        for (_, shape) in config.param_shapes() {
            let n: usize = shape.iter().product();
            offsets.push((at, shape));
            at += n;
        }
        if flat.len() != at {
            return Err(Error::InvalidArgument(format!(
                "expected {at} parameters for this net config, got {}",
                flat.len()
            )));
        }
        Ok(Self {
            config: config.clone(),
            flat,
            offsets,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    fn tensor(&self, i: usize) -> Tensor {
        let (at, shape) = &self.offsets[i];
        let n: usize = shape.iter().product();
        Tensor::new(shape.clone(), self.flat[*at..at + n].to_vec())
    }

    /// Put every parameter tensor on the tape, as leaves or as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> NetVars {
        let vars = (0..self.offsets.len())
            .map(|i| {
                let t = self.tensor(i);
                if trainable {
                    g.leaf(t)
                } else {
                    g.constant(t)
                }
            })
            .collect();
        NetVars { vars }
    }
}

/// Tape handles for one bound [`NetParams`].
#[derive(Clone, Debug)]
pub struct NetVars {
    vars: Vec<Var>,
}

impl NetVars {
    /// Flat gradient in canonical order.
    pub fn gradient(&self, g: &Graph, grads: &Grads) -> Vec<f64> {
        let mut out = Vec::new();
        for &v in &self.vars {
            out.extend(grads.get_or_zeros(v, g.value(v).len()));
        }
        out
    }
}

fn xavier(rng: &mut RngStream, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| (2.0 * rng.uniform() - 1.0) * limit).collect()
}

/// Xavier-uniform weights, zero biases, and AdaIN maps whose bias gives
/// `γ = 1, β = 0` at `cond = 0`.
pub fn init_params(config: &NetConfig, rng: &mut RngStream) -> Result<NetParams> {
    config.validate()?;
    let mut flat = Vec::with_capacity(config.param_count());
    for (name, shape) in config.param_shapes() {
        let n: usize = shape.iter().product();
        if name.ends_with("adain.b") {
            let c = n / 2;
            flat.extend((0..n).map(|i| if i < c { 1.0 } else { 0.0 }));
        } else if shape.len() == 1 {
            flat.extend(std::iter::repeat(0.0).take(n));
        } else {
            let receptive: usize = shape[2..].iter().product();
            let (fan_out, fan_in) = (shape[0] * receptive, shape[1] * receptive);
            flat.extend(xavier(rng, fan_in, fan_out, n));
        }
    }
    NetParams::from_flat(config, flat)
}

/// Indices into [`NetVars`] for each block.
struct Slots;

impl Slots {
    const TIME: usize = 0;

    fn enc(i: usize) -> usize {
        4 + 4 * i
    }

    fn dec(cfg: &NetConfig, i: usize) -> usize {
        4 + 4 * cfg.levels() + 2 * i
    }

    fn out(cfg: &NetConfig) -> usize {
        4 + 6 * cfg.levels()
    }
}

fn time_embed_var(g: &mut Graph, net: &NetVars, tau: f64) -> Var {
    let v = &net.vars[Slots::TIME..Slots::TIME + 4];
    let t = g.constant(Tensor::new(vec![1], vec![tau]));
    let h = g.linear(t, v[0], v[1]);
    let h = g.silu(h);
    g.linear(h, v[2], v[3])
}

fn adain_var(g: &mut Graph, x: Var, cond: Var, w: Var, b: Var, eps: f64) -> Var {
    let c = g.shape(x)[0];
    let gb = g.linear(cond, w, b);
    let gamma = g.slice(gb, 0, c);
    let beta = g.slice(gb, c, c);
    let n = g.instance_norm(x, eps);
    g.channel_affine(n, gamma, beta)
}

/// `[C, H, W]` view of a state of dims `[H, W]` or `[C, H, W]`.
pub fn channel_shape(config: &NetConfig, dims: &[usize]) -> Result<Vec<usize>> {
    let shape = match *dims {
        [h, w] => vec![1, h, w],
        [c, h, w] => vec![c, h, w],
        _ => {
            return Err(Error::ShapeMismatch {
                expected: vec![config.in_channels, 0, 0],
                got: dims.to_vec(),
            })
        }
    };
    let f = 1usize << config.levels();
    if shape[0] != config.in_channels || shape[1] % f != 0 || shape[2] % f != 0 {
        return Err(Error::ShapeMismatch {
            expected: vec![config.in_channels, f, f],
            got: dims.to_vec(),
        });
    }
    Ok(shape)
}

/// Velocity `v_θ(x, τ)` on the tape; `x` keeps its own shape.
pub fn velocity(g: &mut Graph, net: &NetVars, cfg: &NetConfig, x: Var, tau: f64) -> Var {
    let dims = g.shape(x).to_vec();
    let chw = channel_shape(cfg, &dims).expect("state shape validated by caller");
    let input = g.reshape(x, chw);
    let cond = time_embed_var(g, net, tau);
    let v = &net.vars;
    let mut skips = vec![input];
    let mut h = input;
    for i in 0..cfg.levels() {
        let s = Slots::enc(i);
        h = g.conv2d(h, v[s], v[s + 1], 2, cfg.padding);
        h = adain_var(g, h, cond, v[s + 2], v[s + 3], cfg.norm_eps);
        h = g.silu(h);
        skips.push(h);
    }
    for i in 0..cfg.levels() {
        let s = Slots::dec(cfg, i);
        let up = g.upsample2(h);
        let skip = skips[cfg.levels() - 1 - i];
        let cat = g.concat0(up, skip);
        h = g.conv2d(cat, v[s], v[s + 1], 1, cfg.padding);
        h = g.silu(h);
    }
    let s = Slots::out(cfg);
    let out = g.conv2d(h, v[s], v[s + 1], 1, cfg.padding);
    g.reshape(out, dims)
}

/// Condition vector `MLP(τ)`.
pub fn time_embed(tau: f64, params: &NetParams) -> Vec<f64> {
    let mut g = Graph::new();
    let net = params.bind(&mut g, false);
    let c = time_embed_var(&mut g, &net, tau);
    g.value(c).data.clone()
}

/// AdaIN of encoder block `block` applied to `x[C, H, W]` under `cond`.
pub fn adain(x: &Field, cond: &[f64], params: &NetParams, block: usize) -> Result<Field> {
    let cfg = params.config();
    let c = *cfg
        .enc_channels
        .get(block)
        .ok_or_else(|| Error::InvalidArgument(format!("no encoder block {block}")))?;
    if x.rank() != 3 || x.dims()[0] != c {
        return Err(Error::ShapeMismatch {
            expected: vec![c, 0, 0],
            got: x.dims().to_vec(),
        });
    }
    if cond.len() != cfg.d_cond {
        return Err(Error::ShapeMismatch {
            expected: vec![cfg.d_cond],
            got: vec![cond.len()],
        });
    }
    let mut g = Graph::new();
    let net = params.bind(&mut g, false);
    let xv = g.constant(Tensor::from_field(x));
    let cv = g.constant(Tensor::new(vec![cond.len()], cond.to_vec()));
    let s = Slots::enc(block);
    let y = adain_var(&mut g, xv, cv, net.vars[s + 2], net.vars[s + 3], cfg.norm_eps);
    g.value(y).to_field(x.dims())
}

/// Evaluate `v_θ(x, τ)` without recording gradients.
pub fn net_forward(x: &Field, tau: f64, params: &NetParams) -> Result<Field> {
    channel_shape(params.config(), x.dims())?;
    let mut g = Graph::new();
    let net = params.bind(&mut g, false);
    let xv = g.constant(Tensor::from_field(x));
    let v = velocity(&mut g, &net, params.config(), xv, tau);
    g.value(v).to_field(x.dims())
}
