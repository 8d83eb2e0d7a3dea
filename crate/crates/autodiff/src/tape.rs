use crate::ops::{self, ConvGeom};
use crate::{AutodiffError, ParamId, Parameter, Result, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Relu(Var),
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Add(Var, Var),
    Subsample {
        input: Var,
        stride: usize,
    },
    GlobalAvgPool(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    WeightedSum {
        input: Var,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so it can be differentiated once.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    record: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
        }
    }

    /// A tape that keeps no backward caches; `backward` on it fails.
    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, mut value: Tensor) -> Var {
        value.clear_grad();
        self.push(value, Op::Leaf)
    }

    /// Copies a parameter's current values onto the tape as a leaf.
    pub fn param(&mut self, p: &Parameter) -> Var {
        let mut value = p.tensor.clone();
        value.clear_grad();
        self.push(value, Op::Param(p.id()))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let xs = self.value(input).shape();
        let ks = self.value(kernel).shape();
        let bs = self.value(bias).shape();
        if xs.len() != 4 {
            return Err(dim(OP, format!("input must be [N,C,H,W], got {xs:?}")));
        }
        if ks.len() != 4 {
            return Err(dim(OP, format!("kernel must be [K,C,kh,kw], got {ks:?}")));
        }
        if ks[1] != xs[1] {
            return Err(dim(
                OP,
                format!("input has {} channels but kernel expects {}", xs[1], ks[1]),
            ));
        }
        if bs != [ks[0]] {
            return Err(dim(OP, format!("bias must be [{}], got {bs:?}", ks[0])));
        }
        if stride == 0 {
            return Err(config(OP, "stride must be positive".into()));
        }
        let (h, w) = (xs[2] + 2 * padding, xs[3] + 2 * padding);
        if h < ks[2] || w < ks[3] {
            return Err(config(
                OP,
                format!(
                    "padded input {h}x{w} is smaller than the {}x{} kernel",
                    ks[2], ks[3]
                ),
            ));
        }
        let geom = ConvGeom {
            n: xs[0],
            c: xs[1],
            h: xs[2],
            w: xs[3],
            k: ks[0],
            kh: ks[2],
            kw: ks[3],
            stride,
            pad: padding,
            ho: (h - ks[2]) / stride + 1,
            wo: (w - ks[3]) / stride + 1,
        };
        let (out, cols) = ops::conv2d_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &geom,
        );
        let value = Tensor::new(vec![geom.n, geom.k, geom.ho, geom.wo], out)?;
        let cols = if self.record { cols } else { Vec::new() };
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            },
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("shape preserved");
        self.push(value, Op::Relu(input))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        const OP: &str = "linear";
        let xs = self.value(input).shape();
        let ws = self.value(weight).shape();
        let bs = self.value(bias).shape();
        if xs.len() != 2 || ws.len() != 2 {
            return Err(dim(OP, format!("expected [N,F] x [O,F], got {xs:?} x {ws:?}")));
        }
        if xs[1] != ws[1] {
            return Err(dim(
                OP,
                format!("input has {} features but weight expects {}", xs[1], ws[1]),
            ));
        }
        if bs != [ws[0]] {
            return Err(dim(OP, format!("bias must be [{}], got {bs:?}", ws[0])));
        }
        let (n, f, o) = (xs[0], xs[1], ws[0]);
        let out = ops::linear_forward(
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            n,
            f,
            o,
        );
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }))
    }

    /// Elementwise sum of two same-shaped tensors (residual join).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim(
                "add",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Keeps every `stride`-th row and column of each plane; the
    /// parameter-free counterpart of a strided 1x1 convolution.
    pub fn subsample(&mut self, input: Var, stride: usize) -> Result<Var> {
        let x = self.value(input);
        let s = x.shape();
        if s.len() != 4 {
            return Err(dim("subsample", format!("input must be [N,C,H,W], got {s:?}")));
        }
        if stride == 0 {
            return Err(config("subsample", "stride must be positive".into()));
        }
        let (nc, h, w) = (s[0] * s[1], s[2], s[3]);
        let (ho, wo) = (h.div_ceil(stride), w.div_ceil(stride));
        let mut out = Vec::with_capacity(nc * ho * wo);
        for plane in x.data().chunks_exact(h * w) {
            for oy in 0..ho {
                for ox in 0..wo {
                    out.push(plane[oy * stride * w + ox * stride]);
                }
            }
        }
        let value = Tensor::new(vec![s[0], s[1], ho, wo], out)?;
        Ok(self.push(value, Op::Subsample { input, stride }))
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let s = x.shape();
        if s.len() != 4 {
            return Err(dim("global_avg_pool", format!("input must be [N,C,H,W], got {s:?}")));
        }
        let hw = s[2] * s[3];
        let out = x
            .data()
            .chunks_exact(hw)
            .map(|plane| plane.iter().sum::<f64>() / hw as f64)
            .collect();
        let value = Tensor::new(vec![s[0], s[1]], out)?;
        Ok(self.push(value, Op::GlobalAvgPool(input)))
    }

    /// Mean softmax cross-entropy of `[N,C]` logits against class labels.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let z = self.value(logits);
        let s = z.shape();
        if s.len() != 2 || s[1] < 2 {
            return Err(dim(
                "softmax_cross_entropy",
                format!("logits must be [N,C] with C >= 2, got {s:?}"),
            ));
        }
        if labels.len() != s[0] {
            return Err(dim(
                "softmax_cross_entropy",
                format!("{} labels for {} rows", labels.len(), s[0]),
            ));
        }
        let classes = s[1];
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(AutodiffError::InvalidLabel { row, label, classes });
        }
        let (loss, probs) = ops::softmax_cross_entropy(z.data(), labels, classes);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// `sum_i weights[i] * x[i]` as a scalar.
    pub fn weighted_sum(&mut self, input: Var, weights: Vec<f64>) -> Result<Var> {
        let x = self.value(input);
        if weights.len() != x.len() {
            return Err(dim(
                "weighted_sum",
                format!("{} weights for {} elements", weights.len(), x.len()),
            ));
        }
        let total = x.data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { input, weights }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let n = self.value(input).len();
        self.weighted_sum(input, vec![1.0; n]).expect("length matches")
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.record {
            return Err(config("backward", "tape was built for inference".into()));
        }
        let ls = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                    cols,
                } => {
                    let cg = ops::conv2d_backward(&g, self.value(*kernel).data(), cols, geom);
                    accumulate(&mut grads, *input, cg.input);
                    accumulate(&mut grads, *kernel, cg.kernel);
                    accumulate(&mut grads, *bias, cg.bias);
                }
                Op::Relu(input) => {
                    let x = self.value(*input).data();
                    let gx = g
                        .iter()
                        .zip(x)
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *input, gx);
                }
                Op::Linear { input, weight, bias } => {
                    let xs = self.value(*input).shape();
                    let (n, f) = (xs[0], xs[1]);
                    let o = self.value(*weight).shape()[0];
                    let lg = ops::linear_backward(
                        &g,
                        self.value(*input).data(),
                        self.value(*weight).data(),
                        n,
                        f,
                        o,
                    );
                    accumulate(&mut grads, *input, lg.input);
                    accumulate(&mut grads, *weight, lg.weight);
                    accumulate(&mut grads, *bias, lg.bias);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Subsample { input, stride } => {
                    let s = self.value(*input).shape();
                    let (h, w) = (s[2], s[3]);
                    let os = node.value.shape();
                    let (ho, wo) = (os[2], os[3]);
                    let mut gx = vec![0.0; self.value(*input).len()];
                    for (plane, gplane) in gx.chunks_exact_mut(h * w).zip(g.chunks_exact(ho * wo)) {
                        for oy in 0..ho {
                            for ox in 0..wo {
                                plane[oy * stride * w + ox * stride] += gplane[oy * wo + ox];
                            }
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::GlobalAvgPool(input) => {
                    let s = self.value(*input).shape();
                    let hw = s[2] * s[3];
                    let scale = 1.0 / hw as f64;
                    let mut gx = Vec::with_capacity(self.value(*input).len());
                    for &gv in &g {
                        gx.extend(std::iter::repeat_n(gv * scale, hw));
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let classes = self.value(*logits).shape()[1];
                    let scale = g[0] / labels.len() as f64;
                    let mut gz = probs.clone();
                    for (row, &label) in labels.iter().enumerate() {
                        gz[row * classes + label] -= 1.0;
                    }
                    gz.iter_mut().for_each(|v| *v *= scale);
                    accumulate(&mut grads, *logits, gz);
                }
                Op::WeightedSum { input, weights } => {
                    let gx = weights.iter().map(|w| w * g[0]).collect();
                    accumulate(&mut grads, *input, gx);
                }
            }
        }
        let params = self.nodes[..=loss.0]
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
        slot @ None => *slot = Some(contribution),
    }
}

fn dim(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::DimensionMismatch { op, detail }
}

fn config(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::Configuration { op, detail }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a leaf, `None` if it did not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params
            .iter()
            .filter(|(pid, _)| *pid == id)
            .find_map(|&(_, idx)| self.grads[idx].as_deref())
    }

    /// Writes gradients into each parameter's grad buffer. Parameters that
    /// appear more than once on the tape receive the accumulated total;
    /// parameters absent from the tape receive zeros.
    pub fn write_to(&self, params: &mut [Parameter]) -> Result<()> {
        for p in params.iter_mut() {
            let mut total = vec![0.0; p.len()];
            for &(pid, idx) in &self.params {
                if pid == p.id() {
                    if let Some(g) = &self.grads[idx] {
                        if g.len() != total.len() {
                            return Err(dim(
                                "write_to",
                                format!("gradient for {pid} has {} entries, parameter has {}", g.len(), total.len()),
                            ));
                        }
                        total.iter_mut().zip(g).for_each(|(t, v)| *t += v);
                    }
                }
            }
            p.tensor.set_grad(total)?;
        }
        Ok(())
    }
}
