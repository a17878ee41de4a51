use super::tensor::{matmul_into, matmul_t_into, matmul_tn_into, Tensor};
use super::AutogradError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Layout of a fused multi-head attention call.
///
/// Queries are `[batch * q_len, heads * head_dim]`, keys and values are
/// `[batch * k_len, heads * head_dim]`; `key_mask[b * k_len + j]` marks
/// attendable keys.
#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub batch: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub heads: usize,
    pub key_mask: Vec<bool>,
    pub causal: bool,
    /// Diagnostic mode: every attention weight is forced to zero.
    pub zero_weights: bool,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    RmsNorm {
        x: Var,
        scale: Var,
        inv_rms: Vec<f64>,
    },
    Gelu(Var),
    Relu(Var),
    Concat(Var, Var),
    Sum(Var),
    GatherBias {
        table: Var,
        buckets: Vec<usize>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        bias: Option<Var>,
        spec: AttentionSpec,
        probs: Vec<f64>,
    },
    DepthwiseConv {
        x: Var,
        w: Var,
        b: Var,
    },
    MaxRows {
        x: Var,
        argmax: Vec<usize>,
    },
    SymPair {
        u: Var,
        v: Var,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        active: Vec<bool>,
        softmax: Vec<f64>,
        count: usize,
    },
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
        active: Vec<bool>,
        count: usize,
    },
    Mse {
        pred: Var,
        targets: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of recorded operations. Values are computed eagerly; [`Graph::backward`]
/// walks the tape in reverse once.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Trainable input.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Attention probabilities recorded by an attention node, laid out
    /// `[batch, heads, q_len, k_len]`.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let t = Tensor::new(x.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::new(x.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        self.push(t, Op::Mul(a, b), rg)
    }

    /// Elementwise product with a fixed tensor (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), c.shape(), "mul_const shape mismatch");
        let data = x.data().iter().zip(c.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::new(x.shape().to_vec(), data);
        let rg = self.rg(&[a]);
        self.push(t, Op::MulConst(a, c), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let x = self.value(a);
        let t = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v * s).collect());
        let rg = self.rg(&[a]);
        self.push(t, Op::Scale(a, s), rg)
    }

    /// `x[.., c] + b[c]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        let c = xv.last_dim();
        assert_eq!(bv.len(), c, "bias length mismatch");
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(c) {
            for (o, bb) in row.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data);
        let rg = self.rg(&[x, b]);
        self.push(t, Op::AddBias(x, b), rg)
    }

    /// `x[.., k] @ w[k, m]`; leading dimensions of `x` are kept.
    pub fn matmul(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let k = xv.last_dim();
        assert_eq!(wv.shape().len(), 2, "matmul weight must be 2-D");
        assert_eq!(wv.shape()[0], k, "matmul inner dimension mismatch");
        let m = wv.shape()[1];
        let n = xv.rows();
        let mut out = vec![0.0; n * m];
        matmul_into(xv.data(), wv.data(), &mut out, n, k, m);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let rg = self.rg(&[x, w]);
        self.push(Tensor::new(shape, out), Op::MatMul(x, w), rg)
    }

    /// `x[.., k] @ w[m, k]^T`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let k = xv.last_dim();
        assert_eq!(wv.shape().len(), 2);
        assert_eq!(wv.shape()[1], k, "matmul_t inner dimension mismatch");
        let m = wv.shape()[0];
        let n = xv.rows();
        let mut out = vec![0.0; n * m];
        matmul_t_into(xv.data(), wv.data(), &mut out, n, k, m);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        let rg = self.rg(&[x, w]);
        self.push(Tensor::new(shape, out), Op::MatMulT(x, w), rg)
    }

    /// Rows of `table[vocab, d]` selected by `ids`, giving `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = self.value(table);
        let d = tv.last_dim();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(tv.row(id));
        }
        let rg = self.rg(&[table]);
        self.push(
            Tensor::new(vec![ids.len(), d], out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// Scale-only RMS normalization over the last dimension.
    pub fn rms_norm(&mut self, x: Var, scale: Var, eps: f64) -> Var {
        let (xv, sv) = (self.value(x), self.value(scale));
        let d = xv.last_dim();
        assert_eq!(sv.len(), d);
        let mut out = Vec::with_capacity(xv.len());
        let mut inv_rms = Vec::with_capacity(xv.rows());
        for row in xv.data().chunks(d) {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / d as f64;
            let r = 1.0 / (ms + eps).sqrt();
            inv_rms.push(r);
            out.extend(row.iter().zip(sv.data()).map(|(v, g)| v * r * g));
        }
        let t = Tensor::new(xv.shape().to_vec(), out);
        let rg = self.rg(&[x, scale]);
        self.push(
            t,
            Op::RmsNorm { x, scale, inv_rms },
            rg,
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let t = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| gelu(v)).collect());
        let rg = self.rg(&[x]);
        self.push(t, Op::Gelu(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let t = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| v.max(0.0)).collect());
        let rg = self.rg(&[x]);
        self.push(t, Op::Relu(x), rg)
    }

    /// Concatenation along the last dimension.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat row mismatch");
        let (da, db) = (av.last_dim(), bv.last_dim());
        let mut out = Vec::with_capacity(av.len() + bv.len());
        for i in 0..av.rows() {
            out.extend_from_slice(av.row(i));
            out.extend_from_slice(bv.row(i));
        }
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = da + db;
        let rg = self.rg(&[a, b]);
        self.push(Tensor::new(shape, out), Op::Concat(a, b), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Expands a `[buckets, heads]` table into a `[heads, q_len, k_len]` bias
    /// using `buckets[i * k_len + j]`.
    pub fn gather_bias(&mut self, table: Var, buckets: &[usize], q_len: usize, k_len: usize) -> Var {
        assert_eq!(buckets.len(), q_len * k_len);
        let tv = self.value(table);
        let heads = tv.last_dim();
        let mut out = vec![0.0; heads * q_len * k_len];
        for (ij, &b) in buckets.iter().enumerate() {
            for h in 0..heads {
                out[h * q_len * k_len + ij] = tv.data()[b * heads + h];
            }
        }
        let rg = self.rg(&[table]);
        self.push(
            Tensor::new(vec![heads, q_len, k_len], out),
            Op::GatherBias {
                table,
                buckets: buckets.to_vec(),
            },
            rg,
        )
    }

    /// Scaled dot-product attention over all heads with an optional additive
    /// `[heads, q_len, k_len]` bias shared across the batch.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, bias: Option<Var>, spec: AttentionSpec) -> Var {
        let AttentionSpec {
            batch,
            q_len,
            k_len,
            heads,
            ..
        } = spec;
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let width = qv.last_dim();
        assert_eq!(width % heads, 0);
        assert_eq!(qv.rows(), batch * q_len);
        assert_eq!(kv.rows(), batch * k_len);
        assert_eq!(vv.rows(), batch * k_len);
        assert_eq!(spec.key_mask.len(), batch * k_len);
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let bias_data = bias.map(|b| self.value(b).data());
        let mut probs = vec![0.0; batch * heads * q_len * k_len];
        let mut out = vec![0.0; batch * q_len * width];
        let mut scores = vec![0.0; k_len];
        for b in 0..batch {
            for h in 0..heads {
                for i in 0..q_len {
                    let qrow = &qv.data()[(b * q_len + i) * width + h * dh..][..dh];
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in scores.iter_mut().enumerate() {
                        let allowed = spec.key_mask[b * k_len + j] && !(spec.causal && j > i);
                        if !allowed {
                            *s = f64::NEG_INFINITY;
                            continue;
                        }
                        let krow = &kv.data()[(b * k_len + j) * width + h * dh..][..dh];
                        let mut dot: f64 = qrow.iter().zip(krow).map(|(x, y)| x * y).sum();
                        dot *= scale;
                        if let Some(bd) = bias_data {
                            dot += bd[(h * q_len + i) * k_len + j];
                        }
                        *s = dot;
                        max = max.max(dot);
                    }
                    if spec.zero_weights || max == f64::NEG_INFINITY {
                        continue;
                    }
                    let prow = &mut probs[((b * heads + h) * q_len + i) * k_len..][..k_len];
                    let mut z = 0.0;
                    for (p, &s) in prow.iter_mut().zip(&scores) {
                        *p = if s == f64::NEG_INFINITY { 0.0 } else { (s - max).exp() };
                        z += *p;
                    }
                    for p in prow.iter_mut() {
                        *p /= z;
                    }
                    let orow = &mut out[(b * q_len + i) * width + h * dh..][..dh];
                    for (j, &p) in prow.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let vrow = &vv.data()[(b * k_len + j) * width + h * dh..][..dh];
                        for (o, x) in orow.iter_mut().zip(vrow) {
                            *o += p * x;
                        }
                    }
                }
            }
        }
        let mut inputs = vec![q, k, v];
        inputs.extend(bias);
        let rg = self.rg(&inputs);
        self.push(
            Tensor::new(vec![batch * q_len, width], out),
            Op::Attention {
                q,
                k,
                v,
                bias,
                spec,
                probs,
            },
            rg,
        )
    }

    /// Depthwise 1-D convolution over rows of `x[len, channels]` with kernel
    /// `w[kernel, channels]`, bias `b[channels]` and symmetric zero padding.
    pub fn depthwise_conv(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let c = xv.last_dim();
        let len = xv.rows();
        let kernel = wv.shape()[0];
        assert_eq!(kernel % 2, 1, "kernel must be odd");
        assert_eq!(wv.last_dim(), c);
        let pad = kernel / 2;
        let mut out = vec![0.0; len * c];
        for i in 0..len {
            let orow = &mut out[i * c..(i + 1) * c];
            orow.copy_from_slice(bv.data());
            for t in 0..kernel {
                let src = i as isize + t as isize - pad as isize;
                if src < 0 || src >= len as isize {
                    continue;
                }
                let xrow = xv.row(src as usize);
                let wrow = wv.row(t);
                for ((o, xx), ww) in orow.iter_mut().zip(xrow).zip(wrow) {
                    *o += xx * ww;
                }
            }
        }
        let rg = self.rg(&[x, w, b]);
        self.push(
            Tensor::new(vec![len, c], out),
            Op::DepthwiseConv { x, w, b },
            rg,
        )
    }

    /// Column-wise maximum of `x[rows, c]`, giving `[c]`.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.last_dim();
        let mut best = vec![f64::NEG_INFINITY; c];
        let mut argmax = vec![0; c];
        for i in 0..xv.rows() {
            for (j, &v) in xv.row(i).iter().enumerate() {
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = i;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push(Tensor::new(vec![c], best), Op::MaxRows { x, argmax }, rg)
    }

    /// Symmetric pair scores from per-residue terms `u[len, 1]`, `v[len, 1]`:
    /// `out[i, j] = (u_i + v_j + u_j + v_i) / 2`.
    pub fn sym_pair(&mut self, u: Var, v: Var) -> Var {
        let (uv, vv) = (self.value(u), self.value(v));
        let len = uv.len();
        assert_eq!(vv.len(), len);
        let w: Vec<f64> = uv.data().iter().zip(vv.data()).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut out = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                out[i * len + j] = w[i] + w[j];
            }
        }
        let rg = self.rg(&[u, v]);
        self.push(Tensor::new(vec![len, len], out), Op::SymPair { u, v }, rg)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits[n, vocab]`, over rows where `active` is set.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], active: &[bool]) -> Result<Var, AutogradError> {
        let lv = self.value(logits);
        let vsize = lv.last_dim();
        assert_eq!(lv.rows(), targets.len());
        assert_eq!(targets.len(), active.len());
        let count = active.iter().filter(|&&a| a).count();
        if count == 0 {
            return Err(AutogradError::NoActivePositions);
        }
        let mut softmax = vec![0.0; lv.len()];
        let mut total = 0.0;
        for (i, row) in lv.data().chunks(vsize).enumerate() {
            if !active[i] {
                continue;
            }
            let lse = log_sum_exp(row);
            for (s, &x) in softmax[i * vsize..(i + 1) * vsize].iter_mut().zip(row) {
                *s = (x - lse).exp();
            }
            total += lse - row[targets[i]];
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                active: active.to_vec(),
                softmax,
                count,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy on logits over active entries.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], active: &[bool]) -> Result<Var, AutogradError> {
        let lv = self.value(logits);
        assert_eq!(lv.len(), targets.len());
        assert_eq!(lv.len(), active.len());
        let count = active.iter().filter(|&&a| a).count();
        if count == 0 {
            return Err(AutogradError::NoActivePositions);
        }
        let mut total = 0.0;
        for ((&x, &y), &a) in lv.data().iter().zip(targets).zip(active) {
            if a {
                // max(x, 0) - x*y + log(1 + exp(-|x|))
                total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
            }
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
                active: active.to_vec(),
                count,
            },
            rg,
        ))
    }

    /// Mean squared error.
    pub fn mse(&mut self, pred: Var, targets: &[f64]) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.len(), targets.len());
        let n = targets.len().max(1) as f64;
        let total: f64 = pv.data().iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
        let rg = self.rg(&[pred]);
        self.push(
            Tensor::scalar(total / n),
            Op::Mse {
                pred,
                targets: targets.to_vec(),
            },
            rg,
        )
    }

    /// Reverse pass from a scalar node. A graph can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutogradError> {
        if self.consumed {
            return Err(AutogradError::GraphConsumed);
        }
        if self.value(loss).len() != 1 {
            return Err(AutogradError::NotScalar(self.value(loss).shape().to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                grads[idx] = Some(gout);
                continue;
            }
            self.backprop_node(idx, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].requires_grad;
        let mut acc = |v: Var, t: Tensor| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |v: Var| &nodes[v.0].value;
        let like = |v: Var, data: Vec<f64>| Tensor::new(nodes[v.0].value.shape().to_vec(), data);

        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, like(*a, g.data().to_vec()));
                acc(*b, like(*b, g.data().to_vec()));
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let d = g.data().iter().zip(val(*b).data()).map(|(x, y)| x * y).collect();
                    acc(*a, like(*a, d));
                }
                if needs(*b) {
                    let d = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).collect();
                    acc(*b, like(*b, d));
                }
            }
            Op::MulConst(a, c) => {
                let d = g.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
                acc(*a, like(*a, d));
            }
            Op::Scale(a, s) => {
                acc(*a, like(*a, g.data().iter().map(|x| x * s).collect()));
            }
            Op::AddBias(x, b) => {
                acc(*x, like(*x, g.data().to_vec()));
                if needs(*b) {
                    let c = val(*b).len();
                    let mut d = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (o, v) in d.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    acc(*b, like(*b, d));
                }
            }
            Op::MatMul(x, w) => {
                let (xv, wv) = (val(*x), val(*w));
                let (n, k, m) = (xv.rows(), xv.last_dim(), wv.shape()[1]);
                if needs(*x) {
                    let mut d = vec![0.0; n * k];
                    // dx = g @ w^T, w is [k, m] so w^T rows are w's rows.
                    matmul_t_into(g.data(), wv.data(), &mut d, n, m, k);
                    acc(*x, like(*x, d));
                }
                if needs(*w) {
                    let mut d = vec![0.0; k * m];
                    matmul_tn_into(xv.data(), g.data(), &mut d, n, k, m);
                    acc(*w, like(*w, d));
                }
            }
            Op::MatMulT(x, w) => {
                let (xv, wv) = (val(*x), val(*w));
                let (n, k, m) = (xv.rows(), xv.last_dim(), wv.shape()[0]);
                if needs(*x) {
                    let mut d = vec![0.0; n * k];
                    matmul_into(g.data(), wv.data(), &mut d, n, m, k);
                    acc(*x, like(*x, d));
                }
                if needs(*w) {
                    let mut d = vec![0.0; m * k];
                    matmul_tn_into(g.data(), xv.data(), &mut d, n, m, k);
                    acc(*w, like(*w, d));
                }
            }
            Op::Embedding { table, ids } => {
                let tv = val(*table);
                let d = tv.last_dim();
                let mut out = vec![0.0; tv.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for (o, v) in out[id * d..(id + 1) * d].iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(*table, like(*table, out));
            }
            Op::RmsNorm {
                x,
                scale,
                inv_rms,
                ..
            } => {
                let (xv, sv) = (val(*x), val(*scale));
                let d = xv.last_dim();
                let mut dx = vec![0.0; xv.len()];
                let mut ds = vec![0.0; d];
                for (r, &inv) in inv_rms.iter().enumerate() {
                    let xr = xv.row(r);
                    let gr = g.row(r);
                    let mut dot = 0.0;
                    for j in 0..d {
                        ds[j] += gr[j] * xr[j] * inv;
                        dot += sv.data()[j] * gr[j] * xr[j];
                    }
                    let coef = inv * inv * inv * dot / d as f64;
                    for j in 0..d {
                        dx[r * d + j] = inv * sv.data()[j] * gr[j] - coef * xr[j];
                    }
                }
                if needs(*x) {
                    acc(*x, like(*x, dx));
                }
                acc(*scale, like(*scale, ds));
            }
            Op::Gelu(x) => {
                let d = g
                    .data()
                    .iter()
                    .zip(val(*x).data())
                    .map(|(gg, &xx)| gg * gelu_grad(xx))
                    .collect();
                acc(*x, like(*x, d));
            }
            Op::Relu(x) => {
                let d = g
                    .data()
                    .iter()
                    .zip(val(*x).data())
                    .map(|(gg, &xx)| if xx > 0.0 { *gg } else { 0.0 })
                    .collect();
                acc(*x, like(*x, d));
            }
            Op::Concat(a, b) => {
                let (da, db) = (val(*a).last_dim(), val(*b).last_dim());
                let rows = val(*a).rows();
                let mut ga = Vec::with_capacity(rows * da);
                let mut gb = Vec::with_capacity(rows * db);
                for r in 0..rows {
                    let row = g.row(r);
                    ga.extend_from_slice(&row[..da]);
                    gb.extend_from_slice(&row[da..]);
                }
                acc(*a, like(*a, ga));
                acc(*b, like(*b, gb));
            }
            Op::Sum(x) => {
                acc(*x, like(*x, vec![g.item(); val(*x).len()]));
            }
            Op::GatherBias { table, buckets } => {
                let tv = val(*table);
                let heads = tv.last_dim();
                let plane = buckets.len();
                let mut out = vec![0.0; tv.len()];
                for (ij, &b) in buckets.iter().enumerate() {
                    for h in 0..heads {
                        out[b * heads + h] += g.data()[h * plane + ij];
                    }
                }
                acc(*table, like(*table, out));
            }
            Op::Attention {
                q,
                k,
                v,
                bias,
                spec,
                probs,
            } => {
                self.attention_backward(g, *q, *k, *v, *bias, spec, probs, &mut acc);
            }
            Op::DepthwiseConv { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let c = xv.last_dim();
                let len = xv.rows();
                let kernel = wv.shape()[0];
                let pad = kernel / 2;
                let mut dx = vec![0.0; xv.len()];
                let mut dw = vec![0.0; wv.len()];
                let mut db = vec![0.0; c];
                for i in 0..len {
                    let grow = g.row(i);
                    for (o, v) in db.iter_mut().zip(grow) {
                        *o += v;
                    }
                    for t in 0..kernel {
                        let src = i as isize + t as isize - pad as isize;
                        if src < 0 || src >= len as isize {
                            continue;
                        }
                        let src = src as usize;
                        for ch in 0..c {
                            dx[src * c + ch] += grow[ch] * wv.data()[t * c + ch];
                            dw[t * c + ch] += grow[ch] * xv.data()[src * c + ch];
                        }
                    }
                }
                acc(*x, like(*x, dx));
                acc(*w, like(*w, dw));
                acc(*b, like(*b, db));
            }
            Op::MaxRows { x, argmax } => {
                let xv = val(*x);
                let c = xv.last_dim();
                let mut d = vec![0.0; xv.len()];
                for (j, &r) in argmax.iter().enumerate() {
                    d[r * c + j] += g.data()[j];
                }
                acc(*x, like(*x, d));
            }
            Op::SymPair { u, v } => {
                let len = val(*u).len();
                // d out[i,j] / d u_k = 0.5 * ([i == k] + [j == k]); same for v.
                let mut dw = vec![0.0; len];
                for i in 0..len {
                    for j in 0..len {
                        let gg = g.data()[i * len + j];
                        dw[i] += 0.5 * gg;
                        dw[j] += 0.5 * gg;
                    }
                }
                acc(*u, like(*u, dw.clone()));
                acc(*v, like(*v, dw));
            }
            Op::CrossEntropy {
                logits,
                targets,
                active,
                softmax,
                count,
            } => {
                let vsize = val(*logits).last_dim();
                let scale = g.item() / *count as f64;
                let mut d = vec![0.0; softmax.len()];
                for (i, (&t, &a)) in targets.iter().zip(active).enumerate() {
                    if !a {
                        continue;
                    }
                    let row = &mut d[i * vsize..(i + 1) * vsize];
                    for (o, s) in row.iter_mut().zip(&softmax[i * vsize..(i + 1) * vsize]) {
                        *o = s * scale;
                    }
                    row[t] -= scale;
                }
                acc(*logits, like(*logits, d));
            }
            Op::BceWithLogits {
                logits,
                targets,
                active,
                count,
            } => {
                let scale = g.item() / *count as f64;
                let d = val(*logits)
                    .data()
                    .iter()
                    .zip(targets)
                    .zip(active)
                    .map(|((&x, &y), &a)| {
                        if a {
                            (1.0 / (1.0 + (-x).exp()) - y) * scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                acc(*logits, like(*logits, d));
            }
            Op::Mse { pred, targets } => {
                let n = targets.len().max(1) as f64;
                let d = val(*pred)
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(p, t)| 2.0 * (p - t) / n * g.item())
                    .collect();
                acc(*pred, like(*pred, d));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        g: &Tensor,
        q: Var,
        k: Var,
        v: Var,
        bias: Option<Var>,
        spec: &AttentionSpec,
        probs: &[f64],
        acc: &mut impl FnMut(Var, Tensor),
    ) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let AttentionSpec {
            batch,
            q_len,
            k_len,
            heads,
            ..
        } = *spec;
        let width = qv.last_dim();
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; qv.len()];
        let mut dk = vec![0.0; kv.len()];
        let mut dv = vec![0.0; vv.len()];
        let mut dbias = vec![0.0; heads * q_len * k_len];
        let mut dp = vec![0.0; k_len];
        if !spec.zero_weights {
            for b in 0..batch {
                for h in 0..heads {
                    for i in 0..q_len {
                        let prow = &probs[((b * heads + h) * q_len + i) * k_len..][..k_len];
                        let grow = &g.data()[(b * q_len + i) * width + h * dh..][..dh];
                        let mut weighted = 0.0;
                        for j in 0..k_len {
                            let p = prow[j];
                            if p == 0.0 {
                                dp[j] = 0.0;
                                continue;
                            }
                            let voff = (b * k_len + j) * width + h * dh;
                            let mut dot = 0.0;
                            for t in 0..dh {
                                dot += grow[t] * vv.data()[voff + t];
                                dv[voff + t] += p * grow[t];
                            }
                            dp[j] = dot;
                            weighted += p * dot;
                        }
                        let qoff = (b * q_len + i) * width + h * dh;
                        for j in 0..k_len {
                            let p = prow[j];
                            if p == 0.0 {
                                continue;
                            }
                            let ds = p * (dp[j] - weighted);
                            dbias[(h * q_len + i) * k_len + j] += ds;
                            let koff = (b * k_len + j) * width + h * dh;
                            for t in 0..dh {
                                dq[qoff + t] += scale * ds * kv.data()[koff + t];
                                dk[koff + t] += scale * ds * qv.data()[qoff + t];
                            }
                        }
                    }
                }
            }
        }
        acc(q, Tensor::new(qv.shape().to_vec(), dq));
        acc(k, Tensor::new(kv.shape().to_vec(), dk));
        acc(v, Tensor::new(vv.shape().to_vec(), dv));
        if let Some(bv) = bias {
            acc(bv, Tensor::new(self.value(bv).shape().to_vec(), dbias));
        }
    }
}
