//! Layer specification, flat parameter storage and exact forward/backward
//! passes over input sequences.
//!
//! GRU cell (gate order z, r, n inside every weight block):
//!
//! ```text
//! z  = sigmoid(Wz x + Uz h + bz)
//! r  = sigmoid(Wr x + Ur h + br)
//! n  = tanh(Wn x + r * (Un h) + bn)
//! h' = (1 - z) * n + z * h
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{NeuralError, Result};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Gru { hidden: usize },
    Fc { out: usize },
    Act(Activation),
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Gru { hidden } => write!(f, "gru:{hidden}"),
            LayerSpec::Fc { out } => write!(f, "fc:{out}"),
            LayerSpec::Act(a) => f.write_str(a.tag()),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse_dim = |v: &str| {
            v.parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| NeuralError::BadSpec(format!("bad dimension in '{s}'")))
        };
        if let Some(v) = s.strip_prefix("gru:") {
            return Ok(LayerSpec::Gru { hidden: parse_dim(v)? });
        }
        if let Some(v) = s.strip_prefix("fc:") {
            return Ok(LayerSpec::Fc { out: parse_dim(v)? });
        }
        let act = match s {
            "identity" => Activation::Identity,
            "leaky_relu" => Activation::LeakyRelu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            other => return Err(NeuralError::BadSpec(format!("unknown layer '{other}'"))),
        };
        Ok(LayerSpec::Act(act))
    }
}

/// One named weight block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Resolved geometry of one layer.
#[derive(Debug, Clone, Copy)]
struct LayerPlan {
    spec: LayerSpec,
    in_dim: usize,
    out_dim: usize,
    /// Offset of the layer's first parameter in the flat vector.
    offset: usize,
}

impl LayerPlan {
    fn param_count(&self) -> usize {
        match self.spec {
            LayerSpec::Gru { hidden } => 3 * hidden * (self.in_dim + hidden + 1),
            LayerSpec::Fc { out } => out * (self.in_dim + 1),
            LayerSpec::Act(_) => 0,
        }
    }
}

/// Flat parameter vector plus the shape table describing it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    input_dim: usize,
    layers: Vec<LayerSpec>,
    blocks: Vec<ParamBlock>,
    flat: Vec<f64>,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub outputs: Vec<Vec<f64>>,
    /// Final hidden state of every GRU layer, in layer order.
    pub final_hidden: Vec<Vec<f64>>,
    caches: Vec<LayerCache>,
    resets: Vec<bool>,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Gru {
        xs: Vec<Vec<f64>>,
        h_prev: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        r: Vec<Vec<f64>>,
        n: Vec<Vec<f64>>,
        /// `Un h_prev` (before the reset-gate product).
        un_h: Vec<Vec<f64>>,
    },
    Fc {
        xs: Vec<Vec<f64>>,
    },
    Act {
        pre: Vec<Vec<f64>>,
        post: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub inputs: Vec<Vec<f64>>,
    /// Gradient with respect to the initial hidden state of each GRU layer.
    pub h0: Vec<Vec<f64>>,
}

impl NetworkParams {
    /// Builds a zero-initialised network.
    pub fn new(input_dim: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_dim == 0 {
            return Err(NeuralError::BadSpec("input dimension must be positive".into()));
        }
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut dim = input_dim;
        for (i, spec) in layers.iter().enumerate() {
            match *spec {
                LayerSpec::Gru { hidden } => {
                    if hidden == 0 {
                        return Err(NeuralError::BadSpec("zero-width GRU".into()));
                    }
                    for (name, rows, cols) in [
                        ("w", 3 * hidden, dim),
                        ("u", 3 * hidden, hidden),
                        ("b", 3 * hidden, 1),
                    ] {
                        blocks.push(ParamBlock {
                            name: format!("l{i}.gru.{name}"),
                            rows,
                            cols,
                            offset,
                        });
                        offset += rows * cols;
                    }
                    dim = hidden;
                }
                LayerSpec::Fc { out } => {
                    if out == 0 {
                        return Err(NeuralError::BadSpec("zero-width FC".into()));
                    }
                    for (name, rows, cols) in [("w", out, dim), ("b", out, 1)] {
                        blocks.push(ParamBlock {
                            name: format!("l{i}.fc.{name}"),
                            rows,
                            cols,
                            offset,
                        });
                        offset += rows * cols;
                    }
                    dim = out;
                }
                LayerSpec::Act(_) => {}
            }
        }
        Ok(Self {
            input_dim,
            layers,
            blocks,
            flat: vec![0.0; offset],
        })
    }

    /// Builds a network with weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new_random<R: Rng + ?Sized>(
        input_dim: usize,
        layers: Vec<LayerSpec>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::new(input_dim, layers)?;
        net.init_uniform(rng);
        Ok(net)
    }

    pub fn init_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for plan in self.plans() {
            let fan_in = plan.in_dim.max(1) as f64;
            let bound = 1.0 / fan_in.sqrt();
            let range = plan.offset..plan.offset + plan.param_count();
            for p in &mut self.flat[range] {
                *p = rng.random_range(-bound..=bound);
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().fold(self.input_dim, |dim, l| match *l {
            LayerSpec::Gru { hidden } => hidden,
            LayerSpec::Fc { out } => out,
            LayerSpec::Act(_) => dim,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn params(&self) -> &[f64] {
        &self.flat
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.flat
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.flat.len() {
            return Err(NeuralError::DimMismatch {
                context: "set_params",
                expected: self.flat.len(),
                actual: params.len(),
            });
        }
        self.flat.copy_from_slice(params);
        Ok(())
    }

    /// Hidden width of every GRU layer, in order.
    pub fn gru_hidden_dims(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Gru { hidden } => Some(hidden),
                _ => None,
            })
            .collect()
    }

    /// Zero initial hidden state for every GRU layer.
    pub fn zero_hidden(&self) -> Vec<Vec<f64>> {
        self.gru_hidden_dims().into_iter().map(|h| vec![0.0; h]).collect()
    }

    /// Layer specification string, e.g. `in=4;gru:16;leaky_relu;fc:2`.
    pub fn spec_string(&self) -> String {
        let mut s = format!("in={}", self.input_dim);
        for l in &self.layers {
            s.push(';');
            s.push_str(&l.to_string());
        }
        s
    }

    pub fn from_spec_string(spec: &str) -> Result<Self> {
        let mut parts = spec.split(';');
        let head = parts.next().unwrap_or_default();
        let input_dim = head
            .trim()
            .strip_prefix("in=")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| NeuralError::BadSpec(format!("missing input dimension in '{spec}'")))?;
        let layers = parts
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Self::new(input_dim, layers)
    }

    fn plans(&self) -> Vec<LayerPlan> {
        let mut plans = Vec::with_capacity(self.layers.len());
        let mut dim = self.input_dim;
        let mut offset = 0;
        for &spec in &self.layers {
            let out_dim = match spec {
                LayerSpec::Gru { hidden } => hidden,
                LayerSpec::Fc { out } => out,
                LayerSpec::Act(_) => dim,
            };
            let plan = LayerPlan {
                spec,
                in_dim: dim,
                out_dim,
                offset,
            };
            offset += plan.param_count();
            plans.push(plan);
            dim = out_dim;
        }
        plans
    }

    /// Runs the network over `inputs`.
    ///
    /// `h0` holds one initial state per GRU layer (zeros when `None`).
    /// `resets[t] == true` zeroes every GRU hidden state before step `t`;
    /// gradients do not flow across a reset.
    pub fn forward(
        &self,
        inputs: &[Vec<f64>],
        h0: Option<&[Vec<f64>]>,
        resets: Option<&[bool]>,
    ) -> Result<ForwardPass> {
        let steps = inputs.len();
        for x in inputs {
            if x.len() != self.input_dim {
                return Err(NeuralError::DimMismatch {
                    context: "forward input",
                    expected: self.input_dim,
                    actual: x.len(),
                });
            }
        }
        let resets: Vec<bool> = match resets {
            Some(r) if r.len() != steps => {
                return Err(NeuralError::DimMismatch {
                    context: "forward resets",
                    expected: steps,
                    actual: r.len(),
                })
            }
            Some(r) => r.to_vec(),
            None => vec![false; steps],
        };
        let hidden_dims = self.gru_hidden_dims();
        if let Some(h0) = h0 {
            if h0.len() != hidden_dims.len() {
                return Err(NeuralError::DimMismatch {
                    context: "initial hidden layers",
                    expected: hidden_dims.len(),
                    actual: h0.len(),
                });
            }
            for (h, &d) in h0.iter().zip(&hidden_dims) {
                if h.len() != d {
                    return Err(NeuralError::DimMismatch {
                        context: "initial hidden width",
                        expected: d,
                        actual: h.len(),
                    });
                }
            }
        }

        let mut seq: Vec<Vec<f64>> = inputs.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut final_hidden = Vec::with_capacity(hidden_dims.len());
        let mut gru_index = 0;
        for plan in self.plans() {
            match plan.spec {
                LayerSpec::Gru { hidden } => {
                    let init = h0
                        .map(|h| h[gru_index].clone())
                        .unwrap_or_else(|| vec![0.0; hidden]);
                    let (out, cache, last) = self.gru_forward(&plan, &seq, init, &resets);
                    caches.push(cache);
                    final_hidden.push(last);
                    seq = out;
                    gru_index += 1;
                }
                LayerSpec::Fc { out } => {
                    let (w, b) = self.fc_weights(&plan);
                    let outs = seq
                        .iter()
                        .map(|x| {
                            let mut y = b.to_vec();
                            matvec_add(w, out, plan.in_dim, x, &mut y);
                            y
                        })
                        .collect();
                    caches.push(LayerCache::Fc { xs: seq });
                    seq = outs;
                }
                LayerSpec::Act(act) => {
                    let post: Vec<Vec<f64>> = seq
                        .iter()
                        .map(|x| x.iter().map(|&v| act.apply(v)).collect())
                        .collect();
                    caches.push(LayerCache::Act {
                        pre: seq,
                        post: post.clone(),
                    });
                    seq = post;
                }
            }
        }
        Ok(ForwardPass {
            outputs: seq,
            final_hidden,
            caches,
            resets,
        })
    }

    /// Convenience: forward over a single input vector with zero hidden state.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pass = self.forward(&[x.to_vec()], None, None)?;
        Ok(pass.outputs.into_iter().next().unwrap_or_default())
    }

    fn fc_weights(&self, plan: &LayerPlan) -> (&[f64], &[f64]) {
        let wlen = plan.out_dim * plan.in_dim;
        let w = &self.flat[plan.offset..plan.offset + wlen];
        let b = &self.flat[plan.offset + wlen..plan.offset + wlen + plan.out_dim];
        (w, b)
    }

    fn gru_weights(&self, plan: &LayerPlan) -> (&[f64], &[f64], &[f64]) {
        let h = plan.out_dim;
        let wlen = 3 * h * plan.in_dim;
        let ulen = 3 * h * h;
        let o = plan.offset;
        (
            &self.flat[o..o + wlen],
            &self.flat[o + wlen..o + wlen + ulen],
            &self.flat[o + wlen + ulen..o + wlen + ulen + 3 * h],
        )
    }

    fn gru_forward(
        &self,
        plan: &LayerPlan,
        xs: &[Vec<f64>],
        init: Vec<f64>,
        resets: &[bool],
    ) -> (Vec<Vec<f64>>, LayerCache, Vec<f64>) {
        let hd = plan.out_dim;
        let id = plan.in_dim;
        let (w, u, b) = self.gru_weights(plan);
        let steps = xs.len();
        let mut outs = Vec::with_capacity(steps);
        let mut h_prev_all = Vec::with_capacity(steps);
        let (mut zs, mut rs, mut ns, mut unhs) = (
            Vec::with_capacity(steps),
            Vec::with_capacity(steps),
            Vec::with_capacity(steps),
            Vec::with_capacity(steps),
        );
        let mut h = init;
        for (t, x) in xs.iter().enumerate() {
            if resets[t] {
                h = vec![0.0; hd];
            }
            let mut wx = b.to_vec();
            matvec_add(w, 3 * hd, id, x, &mut wx);
            let mut uh = vec![0.0; 3 * hd];
            matvec_add(u, 3 * hd, hd, &h, &mut uh);
            let mut z = vec![0.0; hd];
            let mut r = vec![0.0; hd];
            let mut n = vec![0.0; hd];
            let mut h_new = vec![0.0; hd];
            for j in 0..hd {
                z[j] = sigmoid(wx[j] + uh[j]);
                r[j] = sigmoid(wx[hd + j] + uh[hd + j]);
                n[j] = (wx[2 * hd + j] + r[j] * uh[2 * hd + j]).tanh();
                h_new[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
            }
            h_prev_all.push(h);
            zs.push(z);
            rs.push(r);
            ns.push(n);
            unhs.push(uh[2 * hd..].to_vec());
            outs.push(h_new.clone());
            h = h_new;
        }
        let cache = LayerCache::Gru {
            xs: xs.to_vec(),
            h_prev: h_prev_all,
            z: zs,
            r: rs,
            n: ns,
            un_h: unhs,
        };
        (outs, cache, h)
    }

    /// Exact gradients of `sum_t <d_outputs[t], outputs[t]> + sum_l <d_final_hidden[l], h_T^l>`.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        d_outputs: &[Vec<f64>],
        d_final_hidden: Option<&[Vec<f64>]>,
    ) -> Result<Gradients> {
        if d_outputs.len() != pass.outputs.len() {
            return Err(NeuralError::DimMismatch {
                context: "backward output steps",
                expected: pass.outputs.len(),
                actual: d_outputs.len(),
            });
        }
        let out_dim = self.output_dim();
        if let Some(bad) = d_outputs.iter().find(|g| g.len() != out_dim) {
            return Err(NeuralError::DimMismatch {
                context: "backward output width",
                expected: out_dim,
                actual: bad.len(),
            });
        }
        let plans = self.plans();
        let n_gru = self.gru_hidden_dims().len();
        let mut grads = vec![0.0; self.flat.len()];
        let mut h0_grads: Vec<Vec<f64>> = vec![Vec::new(); n_gru];
        let mut gru_index = n_gru;
        let mut d_seq: Vec<Vec<f64>> = d_outputs.to_vec();

        for (plan, cache) in plans.iter().zip(&pass.caches).rev() {
            match (plan.spec, cache) {
                (LayerSpec::Act(act), LayerCache::Act { pre, post }) => {
                    for ((g, x), y) in d_seq.iter_mut().zip(pre).zip(post) {
                        for ((gi, &xi), &yi) in g.iter_mut().zip(x).zip(y) {
                            *gi *= act.derivative(xi, yi);
                        }
                    }
                }
                (LayerSpec::Fc { out }, LayerCache::Fc { xs }) => {
                    let id = plan.in_dim;
                    let wlen = out * id;
                    let (w, _) = self.fc_weights(plan);
                    let mut d_in = Vec::with_capacity(xs.len());
                    {
                        let (gw, gb) = grads[plan.offset..plan.offset + wlen + out].split_at_mut(wlen);
                        for (g, x) in d_seq.iter().zip(xs) {
                            outer_add(gw, g, x);
                            for (b, &gi) in gb.iter_mut().zip(g) {
                                *b += gi;
                            }
                            let mut dx = vec![0.0; id];
                            matvec_t_add(w, out, id, g, &mut dx);
                            d_in.push(dx);
                        }
                    }
                    d_seq = d_in;
                }
                (LayerSpec::Gru { .. }, cache @ LayerCache::Gru { .. }) => {
                    gru_index -= 1;
                    let d_last = d_final_hidden.map(|d| d[gru_index].as_slice());
                    let (d_in, dh0) =
                        self.gru_backward(plan, cache, &d_seq, d_last, &pass.resets, &mut grads);
                    h0_grads[gru_index] = dh0;
                    d_seq = d_in;
                }
                _ => unreachable!("layer cache does not match layer spec"),
            }
        }
        Ok(Gradients {
            params: grads,
            inputs: d_seq,
            h0: h0_grads,
        })
    }

    fn gru_backward(
        &self,
        plan: &LayerPlan,
        cache: &LayerCache,
        d_out: &[Vec<f64>],
        d_last: Option<&[f64]>,
        resets: &[bool],
        grads: &mut [f64],
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let LayerCache::Gru {
            xs,
            h_prev,
            z,
            r,
            n,
            un_h,
        } = cache
        else {
            unreachable!()
        };
        let hd = plan.out_dim;
        let id = plan.in_dim;
        let (w, u, _) = self.gru_weights(plan);
        let wlen = 3 * hd * id;
        let ulen = 3 * hd * hd;
        let block = &mut grads[plan.offset..plan.offset + wlen + ulen + 3 * hd];
        let (gw, rest) = block.split_at_mut(wlen);
        let (gu, gb) = rest.split_at_mut(ulen);

        let steps = xs.len();
        let mut d_in = vec![Vec::new(); steps];
        let mut dh_next = match d_last {
            Some(d) if d.len() == hd => d.to_vec(),
            _ => vec![0.0; hd],
        };
        let mut da = vec![0.0; 3 * hd];
        // (da_n * r) is the gradient reaching Un h_prev.
        let mut da_u = vec![0.0; 3 * hd];
        for t in (0..steps).rev() {
            let dh: Vec<f64> = dh_next.iter().zip(&d_out[t]).map(|(a, b)| a + b).collect();
            let (zt, rt, nt, hp, unh) = (&z[t], &r[t], &n[t], &h_prev[t], &un_h[t]);
            let mut dh_prev = vec![0.0; hd];
            for j in 0..hd {
                let dn = dh[j] * (1.0 - zt[j]);
                let dz = dh[j] * (hp[j] - nt[j]);
                dh_prev[j] = dh[j] * zt[j];
                let dan = dn * (1.0 - nt[j] * nt[j]);
                let dr = dan * unh[j];
                da[j] = dz * zt[j] * (1.0 - zt[j]);
                da[hd + j] = dr * rt[j] * (1.0 - rt[j]);
                da[2 * hd + j] = dan;
                da_u[j] = da[j];
                da_u[hd + j] = da[hd + j];
                da_u[2 * hd + j] = dan * rt[j];
            }
            outer_add(gw, &da, &xs[t]);
            outer_add(gu, &da_u, hp);
            for (b, &g) in gb.iter_mut().zip(&da) {
                *b += g;
            }
            let mut dx = vec![0.0; id];
            matvec_t_add(w, 3 * hd, id, &da, &mut dx);
            d_in[t] = dx;
            matvec_t_add(u, 3 * hd, hd, &da_u, &mut dh_prev);
            dh_next = if resets[t] { vec![0.0; hd] } else { dh_prev };
        }
        (d_in, dh_next)
    }
}

/// `out += W x` for row-major `W` of shape `rows x cols`.
#[inline]
fn matvec_add(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        *o += dot(&w[i * cols..(i + 1) * cols], x);
    }
}

/// Dot product with four independent accumulators.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out += W^T g`.
#[inline]
fn matvec_t_add(w: &[f64], rows: usize, cols: usize, g: &[f64], out: &mut [f64]) {
    for (i, &gi) in g.iter().enumerate().take(rows) {
        if gi == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += gi * wij;
        }
    }
}

/// `dw += g x^T`.
#[inline]
fn outer_add(dw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, &gi) in g.iter().enumerate() {
        if gi == 0.0 {
            continue;
        }
        let row = &mut dw[i * cols..(i + 1) * cols];
        for (d, &xj) in row.iter_mut().zip(x) {
            *d += gi * xj;
        }
    }
}
