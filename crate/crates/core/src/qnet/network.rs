use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{axpy, conv3x3_backward, conv3x3_forward, dot, maxpool2_forward, sum, sum_sq_dev, ConvGeom};
use super::{NetError, NetworkSpec};
use crate::Scalar;

const BN_EPS: f64 = 1e-5;
/// Weight of the old running statistic in each batch-norm update.
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub enum Layer<T> {
    Conv { in_c: usize, out_c: usize, h: usize, w: usize, weight: Vec<T>, bias: Vec<T> },
    Relu,
    BatchNorm { channels: usize, plane: usize, gamma: Vec<T>, beta: Vec<T>, running_mean: Vec<T>, running_var: Vec<T> },
    MaxPool { channels: usize, h: usize, w: usize },
    Dense { inputs: usize, outputs: usize, weight: Vec<T>, bias: Vec<T> },
}

impl<T: Scalar> Layer<T> {
    fn output_len(&self, input_len: usize) -> usize {
        match self {
            Layer::Conv { out_c, h, w, .. } => out_c * h * w,
            Layer::Relu | Layer::BatchNorm { .. } => input_len,
            Layer::MaxPool { channels, h, w } => channels * (h / 2) * (w / 2),
            Layer::Dense { outputs, .. } => *outputs,
        }
    }

    fn has_params(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::BatchNorm { .. } | Layer::Dense { .. })
    }
}

/// All layer state: trainable weights plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Parameters<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Parameters<T> {
    /// Trainable tensors in a fixed order: per layer weight then bias
    /// (gamma then beta for batch norm).
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight.as_slice());
                    out.push(bias.as_slice());
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                    out.push(weight.as_mut_slice());
                    out.push(bias.as_mut_slice());
                }
                Layer::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| match l {
            Layer::Conv { weight, bias, .. } | Layer::Dense { weight, bias, .. } => {
                weight.iter().chain(bias).all(|v| v.is_finite())
            }
            Layer::BatchNorm { gamma, beta, running_mean, running_var, .. } => gamma
                .iter()
                .chain(beta)
                .chain(running_mean)
                .chain(running_var)
                .all(|v| v.is_finite()),
            _ => true,
        })
    }
}

/// Gradients aligned with [`Parameters::trainable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(params: &Parameters<T>) -> Self {
        Self { tensors: params.trainable().iter().map(|t| vec![T::zero(); t.len()]).collect() }
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm.
    Train,
    /// Running statistics in batch norm.
    Infer,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mean: Vec<T>,
    var: Vec<T>,
}

/// Activations of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    pub batch: usize,
    pub mode: Mode,
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Vec<T>>,
    bn: Vec<Option<BnCache<T>>>,
    pool: Vec<Option<Vec<u32>>>,
}

impl<T: Scalar> ForwardPass<T> {
    /// Network output, `batch x outputs` row-major.
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("a pass always holds its input")
    }

    /// Which side of every piecewise-linear kink each unit sits on: relu
    /// input signs and max-pool winners. Two passes with equal signatures lie
    /// in the same linear region of the network.
    pub fn kink_signature(&self, layers: &[Layer<T>]) -> Vec<u32> {
        let mut sig = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            match l {
                Layer::Relu => sig.extend(self.acts[i].iter().map(|v| u32::from(*v > T::zero()))),
                Layer::MaxPool { .. } => sig.extend_from_slice(self.pool[i].as_ref().expect("pool cache")),
                _ => {}
            }
        }
        sig
    }
}

/// Q-network: architecture plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QNetwork<T> {
    spec: NetworkSpec,
    params: Parameters<T>,
}

impl<T: Scalar> QNetwork<T> {
    /// Network with He-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self, NetError> {
        let mut net = Self::zeros(spec)?;
        for l in &mut net.params.layers {
            let (fan_in, weight) = match l {
                Layer::Conv { in_c, weight, .. } => (*in_c * 9, weight),
                Layer::Dense { inputs, weight, .. } => (*inputs, weight),
                _ => continue,
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            for w in weight.iter_mut() {
                *w = T::of(rng.gen_range(-limit..limit));
            }
        }
        Ok(net)
    }

    /// Network with every weight and bias zero (batch-norm scale one).
    pub fn zeros(spec: NetworkSpec) -> Result<Self, NetError> {
        spec.validate()?;
        let mut layers = Vec::new();
        let (mut c, mut h, mut w) = (spec.input_channels, spec.input_height, spec.input_width);
        for st in &spec.conv {
            layers.push(Layer::Conv {
                in_c: c,
                out_c: st.channels,
                h,
                w,
                weight: vec![T::zero(); st.channels * c * 9],
                bias: vec![T::zero(); st.channels],
            });
            c = st.channels;
            layers.push(Layer::Relu);
            if st.batch_norm {
                layers.push(Layer::BatchNorm {
                    channels: c,
                    plane: h * w,
                    gamma: vec![T::one(); c],
                    beta: vec![T::zero(); c],
                    running_mean: vec![T::zero(); c],
                    running_var: vec![T::one(); c],
                });
            }
            if st.pool {
                layers.push(Layer::MaxPool { channels: c, h, w });
                h /= 2;
                w /= 2;
            }
        }
        let mut width = c * h * w;
        for &d in &spec.dense {
            layers.push(Layer::Dense { inputs: width, outputs: d, weight: vec![T::zero(); d * width], bias: vec![T::zero(); d] });
            layers.push(Layer::Relu);
            width = d;
        }
        layers.push(Layer::Dense {
            inputs: width,
            outputs: spec.outputs,
            weight: vec![T::zero(); spec.outputs * width],
            bias: vec![T::zero(); spec.outputs],
        });
        Ok(Self { spec, params: Parameters { layers } })
    }

    /// Rebuilds a network from a spec and stored parameters, checking shapes.
    pub fn from_parts(spec: NetworkSpec, params: Parameters<T>) -> Result<Self, NetError> {
        let template = Self::zeros(spec.clone())?;
        let same_shape = template.params.layers.len() == params.layers.len()
            && template.params.trainable().iter().map(|t| t.len()).eq(params.trainable().iter().map(|t| t.len()));
        if !same_shape {
            return Err(NetError::InvalidSpec("parameters do not match the network spec".into()));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.count()
    }

    /// Inference-mode values for one observation.
    pub fn q_values(&self, obs: &[T]) -> Result<Vec<T>, NetError> {
        Ok(self.forward(obs, 1, Mode::Infer)?.acts.pop().expect("output"))
    }

    /// Batched forward pass. `input` holds `batch` observations back to back.
    pub fn forward(&self, input: &[T], batch: usize, mode: Mode) -> Result<ForwardPass<T>, NetError> {
        let expected = batch * self.spec.input_len();
        if input.len() != expected || batch == 0 {
            return Err(NetError::ShapeMismatch { expected, got: input.len() });
        }
        let n = self.params.layers.len();
        let mut acts = Vec::with_capacity(n + 1);
        let mut bn = vec![None; n];
        let mut pool = vec![None; n];
        acts.push(input.to_vec());
        let mut len = self.spec.input_len();
        for (i, layer) in self.params.layers.iter().enumerate() {
            let x = &acts[i];
            let out_len = layer.output_len(len);
            let mut y = vec![T::zero(); batch * out_len];
            match layer {
                Layer::Conv { in_c, out_c, h, w, weight, bias } => {
                    let g = ConvGeom { batch, in_c: *in_c, out_c: *out_c, h: *h, w: *w };
                    conv3x3_forward(g, x, weight, bias, &mut y);
                }
                Layer::Relu => {
                    for (o, &v) in y.iter_mut().zip(x) {
                        *o = if v > T::zero() { v } else { T::zero() };
                    }
                }
                Layer::BatchNorm { channels, plane, gamma, beta, running_mean, running_var } => match mode {
                    Mode::Train => {
                        let cache = bn_train_forward(batch, *channels, *plane, x, gamma, beta, &mut y);
                        bn[i] = Some(cache);
                    }
                    Mode::Infer => {
                        let eps = T::of(BN_EPS);
                        for c in 0..*channels {
                            let inv = (running_var[c] + eps).sqrt().recip();
                            let (scale, shift) = (gamma[c] * inv, beta[c] - gamma[c] * inv * running_mean[c]);
                            for b in 0..batch {
                                let off = (b * channels + c) * plane;
                                for (o, &v) in y[off..off + plane].iter_mut().zip(&x[off..off + plane]) {
                                    *o = v * scale + shift;
                                }
                            }
                        }
                    }
                },
                Layer::MaxPool { channels, h, w } => {
                    let mut arg = vec![0u32; y.len()];
                    maxpool2_forward(batch * channels, *h, *w, x, &mut y, &mut arg);
                    pool[i] = Some(arg);
                }
                Layer::Dense { inputs, outputs, weight, bias } => {
                    for b in 0..batch {
                        let xb = &x[b * inputs..][..*inputs];
                        for j in 0..*outputs {
                            y[b * outputs + j] = bias[j] + dot(&weight[j * inputs..][..*inputs], xb);
                        }
                    }
                }
            }
            acts.push(y);
            len = out_len;
        }
        if !acts[n].iter().all(|v| v.is_finite()) {
            return Err(NetError::NonFinite("network output"));
        }
        Ok(ForwardPass { batch, mode, acts, bn, pool })
    }

    /// Backpropagates `grad_output` (`batch x outputs`) through a pass.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_output: &[T]) -> Gradients<T> {
        assert_eq!(grad_output.len(), pass.output().len(), "gradient shape");
        let mut grads = Gradients::zeros_like(&self.params);
        let mut slot = grads.tensors.len();
        let batch = pass.batch;
        let mut g = grad_output.to_vec();
        for (i, layer) in self.params.layers.iter().enumerate().rev() {
            let x = &pass.acts[i];
            if layer.has_params() {
                slot -= 2;
            }
            let need_input_grad = i > 0;
            match layer {
                Layer::Conv { in_c, out_c, h, w, weight, .. } => {
                    let geom = ConvGeom { batch, in_c: *in_c, out_c: *out_c, h: *h, w: *w };
                    let mut gi = if need_input_grad { vec![T::zero(); x.len()] } else { Vec::new() };
                    let (gw, gb) = pair_mut(&mut grads.tensors, slot);
                    conv3x3_backward(geom, x, weight, &g, gw, gb, need_input_grad.then_some(gi.as_mut_slice()));
                    g = gi;
                }
                Layer::Relu => {
                    for (gv, &xv) in g.iter_mut().zip(x) {
                        if xv <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                }
                Layer::BatchNorm { channels, plane, gamma, running_var, running_mean, .. } => {
                    let (dgamma, dbeta) = pair_mut(&mut grads.tensors, slot);
                    match (&pass.bn[i], pass.mode) {
                        (Some(cache), Mode::Train) => {
                            let n = T::of((batch * plane) as f64);
                            for c in 0..*channels {
                                let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
                                for b in 0..batch {
                                    let off = (b * channels + c) * plane;
                                    sum_g += sum(&g[off..off + plane]);
                                    sum_gx += dot(&g[off..off + plane], &cache.xhat[off..off + plane]);
                                }
                                dgamma[c] += sum_gx;
                                dbeta[c] += sum_g;
                                let scale = gamma[c] * cache.inv_std[c] / n;
                                for b in 0..batch {
                                    let off = (b * channels + c) * plane;
                                    let xh = &cache.xhat[off..off + plane];
                                    for (gv, &h) in g[off..off + plane].iter_mut().zip(xh) {
                                        *gv = scale * (n * *gv - sum_g - h * sum_gx);
                                    }
                                }
                            }
                        }
                        _ => {
                            let eps = T::of(BN_EPS);
                            for c in 0..*channels {
                                let inv = (running_var[c] + eps).sqrt().recip();
                                for b in 0..batch {
                                    let off = (b * channels + c) * plane;
                                    for k in off..off + plane {
                                        dgamma[c] += g[k] * (x[k] - running_mean[c]) * inv;
                                        dbeta[c] += g[k];
                                        g[k] = g[k] * gamma[c] * inv;
                                    }
                                }
                            }
                        }
                    }
                }
                Layer::MaxPool { .. } => {
                    let arg = pass.pool[i].as_ref().expect("pool cache");
                    let mut gi = vec![T::zero(); x.len()];
                    for (o, &a) in arg.iter().enumerate() {
                        gi[a as usize] += g[o];
                    }
                    g = gi;
                }
                Layer::Dense { inputs, outputs, weight, .. } => {
                    let (gw, gb) = pair_mut(&mut grads.tensors, slot);
                    let mut gi = if need_input_grad { vec![T::zero(); x.len()] } else { Vec::new() };
                    for b in 0..batch {
                        let xb = &x[b * inputs..][..*inputs];
                        for j in 0..*outputs {
                            let gj = g[b * outputs + j];
                            if gj == T::zero() {
                                continue;
                            }
                            gb[j] += gj;
                            axpy(gj, xb, &mut gw[j * inputs..][..*inputs]);
                            if need_input_grad {
                                axpy(gj, &weight[j * inputs..][..*inputs], &mut gi[b * inputs..][..*inputs]);
                            }
                        }
                    }
                    g = gi;
                }
            }
        }
        grads
    }

    /// Folds the batch statistics of a training pass into the running
    /// statistics used at inference.
    pub fn commit_batch_stats(&mut self, pass: &ForwardPass<T>) {
        let m = T::of(BN_MOMENTUM);
        let one_minus = T::one() - m;
        for (i, layer) in self.params.layers.iter_mut().enumerate() {
            if let (Layer::BatchNorm { running_mean, running_var, .. }, Some(cache)) = (layer, &pass.bn[i]) {
                for c in 0..running_mean.len() {
                    running_mean[c] = m * running_mean[c] + one_minus * cache.mean[c];
                    running_var[c] = m * running_var[c] + one_minus * cache.var[c];
                }
            }
        }
    }
}

fn pair_mut<T>(v: &mut [Vec<T>], i: usize) -> (&mut Vec<T>, &mut Vec<T>) {
    let (head, tail) = v.split_at_mut(i + 1);
    (&mut head[i], &mut tail[0])
}

fn bn_train_forward<T: Scalar>(
    batch: usize,
    channels: usize,
    plane: usize,
    x: &[T],
    gamma: &[T],
    beta: &[T],
    y: &mut [T],
) -> BnCache<T> {
    let n = T::of((batch * plane) as f64);
    let eps = T::of(BN_EPS);
    let mut cache = BnCache {
        xhat: vec![T::zero(); x.len()],
        inv_std: vec![T::zero(); channels],
        mean: vec![T::zero(); channels],
        var: vec![T::zero(); channels],
    };
    for c in 0..channels {
        let mut total = T::zero();
        for b in 0..batch {
            let off = (b * channels + c) * plane;
            total += sum(&x[off..off + plane]);
        }
        let mean = total / n;
        let mut sq = T::zero();
        for b in 0..batch {
            let off = (b * channels + c) * plane;
            sq += sum_sq_dev(&x[off..off + plane], mean);
        }
        let var = sq / n;
        let inv = (var + eps).sqrt().recip();
        for b in 0..batch {
            let off = (b * channels + c) * plane;
            let (g, bt) = (gamma[c], beta[c]);
            let xs = &x[off..off + plane];
            for ((xh, o), &v) in cache.xhat[off..off + plane].iter_mut().zip(&mut y[off..off + plane]).zip(xs) {
                *xh = (v - mean) * inv;
                *o = g * *xh + bt;
            }
        }
        cache.mean[c] = mean;
        cache.var[c] = var;
        cache.inv_std[c] = inv;
    }
    cache
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode Q-values for one observation.
pub fn forward<T: Scalar>(net: &QNetwork<T>, obs: &[T]) -> Result<Vec<T>, NetError> {
    net.q_values(obs)
}
