//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so node indices are already a
//! topological order. `backward` walks the indices from the loss node down
//! to zero and accumulates vector-Jacobian products into the inputs of each
//! node that carries gradient.

use std::sync::Arc;

use crate::error::{shape_err, Error, Result};
use crate::numerics::conv::{self, ConvGeometry};
use crate::numerics::fft::{check_pow2, fft2c_planes};
use crate::numerics::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulConst(usize, Arc<Tensor>),
    Scale(usize, f64),
    Relu(usize),
    LeakyRelu(usize, f64),
    Abs(usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    Sum(usize),
    Mean(usize),
    Conv {
        input: usize,
        weight: usize,
        bias: Option<usize>,
        geom: ConvGeometry,
        cols: Vec<f64>,
    },
    Upsample2(usize),
    Concat(Vec<usize>),
    Fft2c {
        input: usize,
        inverse: bool,
    },
    ComplexMulConst(usize, Arc<Tensor>),
    Magnitude(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
    visited: Vec<usize>,
}

impl Gradients {
    /// Gradient of `v`; leaves the loss does not depend on get exact zeros.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    /// Node ids in the order the backward sweep processed them.
    pub fn visit_order(&self) -> &[usize] {
        &self.visited
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Input-node ids of `v` (empty for leaves).
    pub fn inputs_of(&self, v: Var) -> Vec<usize> {
        op_inputs(&self.nodes[v.0].op)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let ng = self.nodes[a.0].needs_grad;
        self.push(value, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.any_grad(&[a.0, b.0]);
        Ok(self.push(value, Op::Add(a.0, b.0), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let ng = self.any_grad(&[a.0, b.0]);
        Ok(self.push(value, Op::Sub(a.0, b.0), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.any_grad(&[a.0, b.0]);
        Ok(self.push(value, Op::Mul(a.0, b.0), ng))
    }

    /// Elementwise product with a fixed tensor of the same shape.
    pub fn mul_const(&mut self, a: Var, factor: Arc<Tensor>) -> Result<Var> {
        let value = self.value(a).zip_map(&factor, |x, y| x * y)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::MulConst(a.0, factor), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.unary(a, Op::Scale(a.0, factor), |x| x * factor)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a.0), |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, Op::LeakyRelu(a.0, slope), |x| {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        })
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a.0), f64::abs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a.0), sigmoid)
    }

    /// `log(sigmoid(x))`, evaluated without overflow.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::LogSigmoid(a.0), log_sigmoid)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let ng = self.nodes[a.0].needs_grad;
        self.push(Tensor::scalar(s), Op::Sum(a.0), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        let ng = self.nodes[a.0].needs_grad;
        self.push(Tensor::scalar(m), Op::Mean(a.0), ng)
    }

    /// Cross-correlation of `[N,Ci,H,W]` with `[Co,Ci,k,k]`; see [`conv`](crate::numerics::conv).
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
    ) -> Result<Var> {
        let geom = ConvGeometry::new(
            self.value(input).shape(),
            self.value(weight).shape(),
            stride,
        )?;
        if let Some(b) = bias {
            if self.value(b).shape() != [geom.out_ch] {
                return Err(shape_err!(
                    "conv2d bias shape {:?}, expected [{}]",
                    self.value(b).shape(),
                    geom.out_ch
                ));
            }
        }
        let mut ids = vec![input.0, weight.0];
        ids.extend(bias.map(|b| b.0));
        let ng = self.any_grad(&ids);
        let keep_cols = self.nodes[weight.0].needs_grad;
        let (out, cols) = conv::forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            keep_cols,
        );
        let value = Tensor::new(&geom.out_shape(), out)?;
        Ok(self.push(
            value,
            Op::Conv {
                input: input.0,
                weight: weight.0,
                bias: bias.map(|b| b.0),
                geom,
                cols,
            },
            ng,
        ))
    }

    /// Nearest-neighbour ×2 upsampling of the last two axes.
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.shape();
        if s.len() < 2 {
            return Err(shape_err!("upsample2 needs rank ≥ 2, got {:?}", s));
        }
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        let planes = t.len() / (h * w);
        let mut out = vec![0.0; t.len() * 4];
        for p in 0..planes {
            let src = &t.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * 4 * h * w..(p + 1) * 4 * h * w];
            for y in 0..2 * h {
                for x in 0..2 * w {
                    dst[y * 2 * w + x] = src[(y / 2) * w + x / 2];
                }
            }
        }
        let mut shape = s.to_vec();
        let r = shape.len();
        shape[r - 2] *= 2;
        shape[r - 1] *= 2;
        let value = Tensor::new(&shape, out)?;
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::Upsample2(a.0), ng))
    }

    /// Concatenate `[N,Ci,H,W]` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.value(parts[0]).shape().to_vec();
        let &[n, _, h, w] = first.as_slice() else {
            return Err(shape_err!("concat expects rank-4 tensors, got {:?}", first));
        };
        let mut channels = 0;
        for p in parts {
            let s = self.value(*p).shape();
            if s.len() != 4 || s[0] != n || s[2] != h || s[3] != w {
                return Err(shape_err!("concat shape mismatch {:?} vs {:?}", s, first));
            }
            channels += s[1];
        }
        let mut out = Vec::with_capacity(n * channels * h * w);
        for b in 0..n {
            for p in parts {
                let t = self.value(*p);
                let per = t.shape()[1] * h * w;
                out.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
            }
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let ng = self.any_grad(&ids);
        let value = Tensor::new(&[n, channels, h, w], out)?;
        Ok(self.push(value, Op::Concat(ids), ng))
    }

    /// Centered unitary FFT over tensors shaped `[..., 2, H, W]` (re/im pairs).
    pub fn fft2c(&mut self, a: Var, inverse: bool) -> Result<Var> {
        let (h, w) = complex_dims(self.value(a).shape())?;
        check_pow2(h, w)?;
        let value = apply_fft(self.value(a), h, w, inverse);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(
            value,
            Op::Fft2c {
                input: a.0,
                inverse,
            },
            ng,
        ))
    }

    /// Pointwise complex product with a fixed `[2,H,W]` field, broadcast over leading axes.
    pub fn complex_mul_const(&mut self, a: Var, factor: Arc<Tensor>) -> Result<Var> {
        let (h, w) = complex_dims(self.value(a).shape())?;
        if factor.shape() != [2, h, w] {
            return Err(shape_err!(
                "complex factor {:?} incompatible with {:?}",
                factor.shape(),
                self.value(a).shape()
            ));
        }
        let value = complex_mul(self.value(a), &factor, false);
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(value, Op::ComplexMulConst(a.0, factor), ng))
    }

    /// `[N,2,H,W]` → `[N,1,H,W]` modulus.
    pub fn magnitude(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).shape().to_vec();
        let &[n, 2, h, w] = s.as_slice() else {
            return Err(shape_err!("magnitude expects [N,2,H,W], got {:?}", s));
        };
        let t = self.value(a);
        let hw = h * w;
        let mut out = vec![0.0; n * hw];
        for b in 0..n {
            for i in 0..hw {
                out[b * hw + i] = t.data()[b * 2 * hw + i].hypot(t.data()[b * 2 * hw + hw + i]);
            }
        }
        let ng = self.nodes[a.0].needs_grad;
        Ok(self.push(Tensor::new(&[n, 1, h, w], out)?, Op::Magnitude(a.0), ng))
    }

    /// Gradients of a scalar node with respect to every node that needs them.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        let mut visited = Vec::new();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor::scalar(1.0));
        }
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            visited.push(id);
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes,
            visited,
        })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let val = |i: usize| &self.nodes[i].value;
        let mut acc = |i: usize, t: Tensor| {
            if !self.nodes[i].needs_grad {
                return;
            }
            match &mut grads[i] {
                Some(existing) => existing.add_assign(&t).expect("gradient shape"),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(val(*b), |x, y| x * y).unwrap());
                acc(*b, g.zip_map(val(*a), |x, y| x * y).unwrap());
            }
            Op::MulConst(a, f) => acc(*a, g.zip_map(f, |x, y| x * y).unwrap()),
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Relu(a) => acc(
                *a,
                g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { 0.0 })
                    .unwrap(),
            ),
            Op::LeakyRelu(a, slope) => acc(
                *a,
                g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { slope * x })
                    .unwrap(),
            ),
            Op::Abs(a) => acc(*a, g.zip_map(val(*a), |x, v| x * sign(v)).unwrap()),
            Op::Sigmoid(a) => acc(
                *a,
                g.zip_map(&node.value, |x, s| x * s * (1.0 - s)).unwrap(),
            ),
            Op::LogSigmoid(a) => acc(*a, g.zip_map(val(*a), |x, v| x * sigmoid(-v)).unwrap()),
            Op::Sum(a) => {
                let s = g.data()[0];
                acc(*a, Tensor::full(val(*a).shape(), s));
            }
            Op::Mean(a) => {
                let t = val(*a);
                acc(*a, Tensor::full(t.shape(), g.data()[0] / t.len() as f64));
            }
            Op::Conv {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let want = (
                    self.nodes[*input].needs_grad,
                    self.nodes[*weight].needs_grad,
                    bias.is_some_and(|b| self.nodes[b].needs_grad),
                );
                let cg = conv::backward(geom, g.data(), cols, val(*weight).data(), want);
                if let Some(gi) = cg.input {
                    acc(*input, Tensor::new(val(*input).shape(), gi).unwrap());
                }
                if let Some(gw) = cg.weight {
                    acc(*weight, Tensor::new(val(*weight).shape(), gw).unwrap());
                }
                if let (Some(b), Some(gb)) = (bias, cg.bias) {
                    acc(*b, Tensor::new(val(*b).shape(), gb).unwrap());
                }
            }
            Op::Upsample2(a) => {
                let s = val(*a).shape();
                let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
                let planes = val(*a).len() / (h * w);
                let mut out = vec![0.0; val(*a).len()];
                for p in 0..planes {
                    let src = &g.data()[p * 4 * h * w..(p + 1) * 4 * h * w];
                    let dst = &mut out[p * h * w..(p + 1) * h * w];
                    for y in 0..2 * h {
                        for x in 0..2 * w {
                            dst[(y / 2) * w + x / 2] += src[y * 2 * w + x];
                        }
                    }
                }
                acc(*a, Tensor::new(s, out).unwrap());
            }
            Op::Concat(ids) => {
                let s = g.shape();
                let (n, total, hw) = (s[0], s[1], s[2] * s[3]);
                let mut offset = 0;
                for &i in ids {
                    let c = val(i).shape()[1];
                    let mut out = Vec::with_capacity(n * c * hw);
                    for b in 0..n {
                        let start = (b * total + offset) * hw;
                        out.extend_from_slice(&g.data()[start..start + c * hw]);
                    }
                    acc(i, Tensor::new(val(i).shape(), out).unwrap());
                    offset += c;
                }
            }
            Op::Fft2c { input, inverse } => {
                // unitary: the adjoint is the opposite-direction transform
                let (h, w) = complex_dims(g.shape()).unwrap();
                acc(*input, apply_fft(g, h, w, !inverse));
            }
            Op::ComplexMulConst(a, f) => acc(*a, complex_mul(g, f, true)),
            Op::Magnitude(a) => {
                let t = val(*a);
                let s = t.shape();
                let (n, hw) = (s[0], s[2] * s[3]);
                let mut out = vec![0.0; t.len()];
                for b in 0..n {
                    for i in 0..hw {
                        let m = node.value.data()[b * hw + i];
                        if m > 0.0 {
                            let gi = g.data()[b * hw + i] / m;
                            out[b * 2 * hw + i] = gi * t.data()[b * 2 * hw + i];
                            out[b * 2 * hw + hw + i] = gi * t.data()[b * 2 * hw + hw + i];
                        }
                    }
                }
                acc(*a, Tensor::new(s, out).unwrap());
            }
        }
    }
}

fn op_inputs(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
        Op::MulConst(a, _)
        | Op::Scale(a, _)
        | Op::Relu(a)
        | Op::LeakyRelu(a, _)
        | Op::Abs(a)
        | Op::Sigmoid(a)
        | Op::LogSigmoid(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::Upsample2(a)
        | Op::ComplexMulConst(a, _)
        | Op::Magnitude(a) => vec![*a],
        Op::Fft2c { input, .. } => vec![*input],
        Op::Conv {
            input,
            weight,
            bias,
            ..
        } => {
            let mut v = vec![*input, *weight];
            v.extend(*bias);
            v
        }
        Op::Concat(ids) => ids.clone(),
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

fn complex_dims(s: &[usize]) -> Result<(usize, usize)> {
    let r = s.len();
    if r < 3 || s[r - 3] != 2 {
        return Err(shape_err!(
            "expected [..., 2, H, W] complex layout, got {:?}",
            s
        ));
    }
    Ok((s[r - 2], s[r - 1]))
}

fn apply_fft(t: &Tensor, h: usize, w: usize, inverse: bool) -> Tensor {
    let mut out = t.clone();
    let hw = h * w;
    for pair in out.data_mut().chunks_exact_mut(2 * hw) {
        let (re, im) = pair.split_at_mut(hw);
        fft2c_planes(re, im, h, w, inverse);
    }
    out
}

/// Multiply each `[2,H,W]` block of `t` by `f` (or by `conj(f)`).
fn complex_mul(t: &Tensor, f: &Tensor, conjugate: bool) -> Tensor {
    let hw = f.len() / 2;
    let (fr, fi) = f.data().split_at(hw);
    let s = if conjugate { -1.0 } else { 1.0 };
    let mut out = t.clone();
    for pair in out.data_mut().chunks_exact_mut(2 * hw) {
        let (re, im) = pair.split_at_mut(hw);
        for i in 0..hw {
            let (a, b) = (re[i], im[i]);
            let (c, d) = (fr[i], s * fi[i]);
            re[i] = a * c - b * d;
            im[i] = a * d + b * c;
        }
    }
    out
}
