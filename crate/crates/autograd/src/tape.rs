//! The recording tape and its reverse sweep.
//!
//! Every operation appends a node holding its forward value and whatever
//! it needs to differentiate itself later. Node indices double as a
//! topological order, so [`Tape::backward`] is a single reverse scan.

use rand::Rng;

use crate::element::Element;
use crate::error::{AutogradError, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::{Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize },
    ConvTranspose2d { input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize },
    InstanceNorm { input: Var, gain: Var, bias: Var, xhat: Vec<T>, inv_std: Vec<T> },
    LeakyRelu { x: Var, slope: T },
    Tanh { x: Var },
    Sigmoid { x: Var },
    Dropout { x: Var, mask: Vec<T> },
    Concat { a: Var, b: Var },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    GlobalAvgPool { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, k: T },
    Sum { x: Var },
    L1 { a: Var, b: Var },
    Mse { a: Var, b: Var },
    Bce { logits: Var, targets: Var },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    /// Accumulated gradient; only leaves that require grad carry one.
    grad: Option<Vec<T>>,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// A tape is a single-threaded unit of work: build it, call
/// [`backward`](Tape::backward) one or more times, read gradients, drop it.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let grad = match (&op, requires_grad) {
            (Op::Leaf, true) => Some(vec![T::zero(); value.len()]),
            _ => None,
        };
        self.nodes.push(Node { value, op, requires_grad, grad });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Copies `v` into a fresh constant leaf, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if it requires one.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::from_vec(node.value.shape(), g.clone()).expect("grad matches value shape"))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.fill(T::zero());
            }
        }
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutogradError::ShapeMismatch { op, expected: sa, got: sb });
        }
        Ok(sa)
    }

    fn check_channel_vector(&self, op: &'static str, v: Var, channels: usize) -> Result<()> {
        let want = Shape::new(1, channels, 1, 1);
        let got = self.shape(v);
        if got != want {
            return Err(AutogradError::ShapeMismatch { op, expected: want, got });
        }
        Ok(())
    }

    /// 2-D cross-correlation. `weight` is `(c_out, c_in, k, k)`, `bias` is
    /// `(1, c_out, 1, 1)`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(input);
        let ws = self.shape(weight);
        if ws.c != xs.c || ws.h != ws.w {
            return Err(AutogradError::ShapeMismatch {
                op: "conv2d",
                expected: Shape::new(ws.n, xs.c, ws.h, ws.h),
                got: ws,
            });
        }
        if let Some(b) = bias {
            self.check_channel_vector("conv2d bias", b, ws.n)?;
        }
        let k = ws.h;
        let bad_geom = || AutogradError::InvalidArgument {
            op: "conv2d",
            reason: format!("kernel {k} stride {stride} pad {pad} does not fit input {xs}"),
        };
        let oh = kernels::conv_out(xs.h, k, stride, pad).ok_or_else(bad_geom)?;
        let ow = kernels::conv_out(xs.w, k, stride, pad).ok_or_else(bad_geom)?;
        let g = ConvGeom { channels: xs.c, h: xs.h, w: xs.w, k, stride, pad, oh, ow };
        let out_shape = Shape::new(xs.n, ws.n, oh, ow);
        let mut out = vec![T::zero(); out_shape.numel()];
        let mut col = vec![T::zero(); g.rows() * g.cols()];
        {
            let x = self.value(input).data();
            let w = self.value(weight).data();
            let in_per = xs.c * xs.plane();
            let out_per = ws.n * oh * ow;
            for n in 0..xs.n {
                kernels::im2col(&x[n * in_per..(n + 1) * in_per], &g, &mut col);
                let dst = &mut out[n * out_per..(n + 1) * out_per];
                T::gemm(ws.n, g.rows(), g.cols(), w, false, &col, false, dst, T::zero());
            }
            if let Some(b) = bias {
                add_channel_bias(&mut out, out_shape, self.value(b).data());
            }
        }
        let rg = self.any_grad(&[input, weight]) || bias.is_some_and(|b| self.requires_grad(b));
        let value = Tensor::from_vec(out_shape, out)?;
        Ok(self.push(value, Op::Conv2d { input, weight, bias, stride, pad }, rg))
    }

    /// Transposed convolution (the input-gradient of [`conv2d`](Tape::conv2d)).
    /// `weight` is `(c_in, c_out, k, k)`, `bias` is `(1, c_out, 1, 1)`.
    pub fn conv2d_transpose(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let ys = self.shape(input);
        let ws = self.shape(weight);
        if ws.n != ys.c || ws.h != ws.w {
            return Err(AutogradError::ShapeMismatch {
                op: "conv2d_transpose",
                expected: Shape::new(ys.c, ws.c, ws.h, ws.h),
                got: ws,
            });
        }
        if let Some(b) = bias {
            self.check_channel_vector("conv2d_transpose bias", b, ws.c)?;
        }
        let k = ws.h;
        let bad_geom = || AutogradError::InvalidArgument {
            op: "conv2d_transpose",
            reason: format!("kernel {k} stride {stride} pad {pad} gives empty output for {ys}"),
        };
        let oh = kernels::conv_transpose_out(ys.h, k, stride, pad).ok_or_else(bad_geom)?;
        let ow = kernels::conv_transpose_out(ys.w, k, stride, pad).ok_or_else(bad_geom)?;
        let g = ConvGeom { channels: ws.c, h: oh, w: ow, k, stride, pad, oh: ys.h, ow: ys.w };
        let out_shape = Shape::new(ys.n, ws.c, oh, ow);
        let mut out = vec![T::zero(); out_shape.numel()];
        let mut col = vec![T::zero(); g.rows() * g.cols()];
        {
            let y = self.value(input).data();
            let w = self.value(weight).data();
            let in_per = ys.c * ys.plane();
            let out_per = ws.c * oh * ow;
            for n in 0..ys.n {
                let src = &y[n * in_per..(n + 1) * in_per];
                T::gemm(g.rows(), ys.c, g.cols(), w, true, src, false, &mut col, T::zero());
                kernels::col2im(&col, &g, &mut out[n * out_per..(n + 1) * out_per]);
            }
            if let Some(b) = bias {
                add_channel_bias(&mut out, out_shape, self.value(b).data());
            }
        }
        let rg = self.any_grad(&[input, weight]) || bias.is_some_and(|b| self.requires_grad(b));
        let value = Tensor::from_vec(out_shape, out)?;
        Ok(self.push(value, Op::ConvTranspose2d { input, weight, bias, stride, pad }, rg))
    }

    /// Per-(n, c) plane normalisation followed by a per-channel affine map.
    pub fn instance_norm(&mut self, input: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let s = self.shape(input);
        self.check_channel_vector("instance_norm gain", gain, s.c)?;
        self.check_channel_vector("instance_norm bias", bias, s.c)?;
        let plane = s.plane();
        if plane == 0 {
            return Err(AutogradError::InvalidArgument { op: "instance_norm", reason: "empty plane".into() });
        }
        let eps = T::from_f64(eps);
        let count = T::from_f64(plane as f64);
        let x = self.value(input).data();
        let gv = self.value(gain).data();
        let bv = self.value(bias).data();
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(s.n * s.c);
        let mut out = vec![T::zero(); x.len()];
        for (p, chunk) in x.chunks(plane).enumerate() {
            let c = p % s.c;
            let mean = chunk.iter().copied().sum::<T>() / count;
            let var = chunk.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            let base = p * plane;
            for (i, &v) in chunk.iter().enumerate() {
                let nv = (v - mean) * inv;
                xhat[base + i] = nv;
                out[base + i] = nv * gv[c] + bv[c];
            }
        }
        let rg = self.any_grad(&[input, gain, bias]);
        let value = Tensor::from_vec(s, out)?;
        Ok(self.push(value, Op::InstanceNorm { input, gain, bias, xhat, inv_std }, rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let src = self.value(x);
        let shape = src.shape();
        let data = src.data().iter().map(|&v| f(v)).collect();
        let rg = self.requires_grad(x);
        self.push(Tensor::from_vec(shape, data).expect("unary keeps shape"), op, rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let k = T::from_f64(slope);
        self.unary(x, |v| if v > T::zero() { v } else { v * k }, Op::LeakyRelu { x, slope: k })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid { x })
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let k = T::from_f64(k);
        self.unary(x, |v| v * k, Op::Scale { x, k })
    }

    /// Inverted dropout: zeroes with probability `p` and rescales the
    /// survivors by `1/(1-p)` while training; identity otherwise.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(AutogradError::InvalidArgument { op: "dropout", reason: format!("p = {p} outside [0, 1)") });
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let src = self.value(x);
        let shape = src.shape();
        let mask: Vec<T> = (0..src.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = src.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::from_vec(shape, data)?, Op::Dropout { x, mask }, rg))
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
            return Err(AutogradError::ShapeMismatch {
                op: "concat_channels",
                expected: Shape::new(sa.n, sb.c, sa.h, sa.w),
                got: sb,
            });
        }
        let out_shape = Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w);
        let (pa, pb) = (sa.c * sa.plane(), sb.c * sb.plane());
        let mut data = Vec::with_capacity(out_shape.numel());
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for n in 0..sa.n {
            data.extend_from_slice(&da[n * pa..(n + 1) * pa]);
            data.extend_from_slice(&db[n * pb..(n + 1) * pb]);
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::from_vec(out_shape, data)?, Op::Concat { a, b }, rg))
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.h < 2 || s.w < 2 {
            return Err(AutogradError::InvalidArgument { op: "max_pool2", reason: format!("input {s} too small") });
        }
        let (oh, ow) = (s.h / 2, s.w / 2);
        let out_shape = Shape::new(s.n, s.c, oh, ow);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(out_shape.numel());
        let mut argmax = Vec::with_capacity(out_shape.numel());
        for p in 0..s.n * s.c {
            let base = p * s.plane();
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * s.w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * s.w + 2 * ox + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    argmax.push(best);
                    data.push(src[best]);
                }
            }
        }
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::from_vec(out_shape, data)?, Op::MaxPool2 { x, argmax }, rg))
    }

    /// Mean over each (n, c) plane, giving `(n, c, 1, 1)`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let s = self.shape(x);
        let count = T::from_f64(s.plane() as f64);
        let data = self
            .value(x)
            .data()
            .chunks(s.plane().max(1))
            .map(|p| p.iter().copied().sum::<T>() / count)
            .collect();
        let rg = self.requires_grad(x);
        self.push(
            Tensor::from_vec(Shape::new(s.n, s.c, 1, 1), data).expect("pool shape"),
            Op::GlobalAvgPool { x },
            rg,
        )
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let shape = self.same_shape(name, a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::from_vec(shape, data)?, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.requires_grad(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, rg)
    }

    fn reduce_pair(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let shape = self.same_shape(name, a, b)?;
        let count = T::from_f64(shape.numel().max(1) as f64);
        let total = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .sum::<T>();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::scalar(total / count), op, rg))
    }

    /// Mean absolute difference.
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.reduce_pair("l1_loss", a, b, |x, y| (x - y).abs(), Op::L1 { a, b })
    }

    /// Mean squared difference.
    pub fn mse_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        self.reduce_pair("mse_loss", a, b, |x, y| (x - y) * (x - y), Op::Mse { a, b })
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Var) -> Result<Var> {
        self.reduce_pair("bce_with_logits", logits, targets, kernels::bce_logit, Op::Bce { logits, targets })
    }

    /// [`bce_with_logits`](Tape::bce_with_logits) against a constant target.
    pub fn bce_with_logits_const(&mut self, logits: Var, target: f64) -> Result<Var> {
        let t = self.constant(Tensor::full(self.shape(logits), T::from_f64(target)));
        self.bce_with_logits(logits, t)
    }

    /// Reverse sweep from a scalar `loss`, adding `d loss / d leaf` into every
    /// leaf that requires grad. Gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(AutogradError::NotScalar(ls));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);
        let mut leaf_grads = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                leaf_grads.push((i, g));
                continue;
            }
            self.propagate(node, &g, &mut adj);
        }
        for (i, g) in leaf_grads {
            let acc = self.nodes[i].grad.as_mut().expect("grad leaf");
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node<T>, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => unreachable!("leaves handled by caller"),
            Op::Conv2d { input, weight, bias, stride, pad } => {
                let xs = self.shape(*input);
                let ws = self.shape(*weight);
                let so = out.shape();
                let gm = ConvGeom {
                    channels: xs.c,
                    h: xs.h,
                    w: xs.w,
                    k: ws.h,
                    stride: *stride,
                    pad: *pad,
                    oh: so.h,
                    ow: so.w,
                };
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                let (in_per, out_per) = (xs.c * xs.plane(), so.c * so.plane());
                let want_x = self.wants(*input);
                let want_w = self.wants(*weight);
                let mut dx = want_x.then(|| vec![T::zero(); x.len()]);
                let mut dw = want_w.then(|| vec![T::zero(); w.len()]);
                let mut col = vec![T::zero(); gm.rows() * gm.cols()];
                for n in 0..xs.n {
                    let gn = &g[n * out_per..(n + 1) * out_per];
                    if let Some(dw) = dw.as_mut() {
                        kernels::im2col(&x[n * in_per..(n + 1) * in_per], &gm, &mut col);
                        T::gemm(ws.n, gm.cols(), gm.rows(), gn, false, &col, true, dw, T::one());
                    }
                    if let Some(dx) = dx.as_mut() {
                        T::gemm(gm.rows(), ws.n, gm.cols(), w, true, gn, false, &mut col, T::zero());
                        kernels::col2im(&col, &gm, &mut dx[n * in_per..(n + 1) * in_per]);
                    }
                }
                if let Some(dx) = dx {
                    accumulate(adj, *input, dx);
                }
                if let Some(dw) = dw {
                    accumulate(adj, *weight, dw);
                }
                if let Some(b) = bias.filter(|b| self.wants(*b)) {
                    accumulate(adj, b, channel_sums(g, so));
                }
            }
            Op::ConvTranspose2d { input, weight, bias, stride, pad } => {
                let ys = self.shape(*input);
                let ws = self.shape(*weight);
                let so = out.shape();
                let gm = ConvGeom {
                    channels: ws.c,
                    h: so.h,
                    w: so.w,
                    k: ws.h,
                    stride: *stride,
                    pad: *pad,
                    oh: ys.h,
                    ow: ys.w,
                };
                let y = self.value(*input).data();
                let w = self.value(*weight).data();
                let (in_per, out_per) = (ys.c * ys.plane(), so.c * so.plane());
                let want_y = self.wants(*input);
                let want_w = self.wants(*weight);
                let mut dy = want_y.then(|| vec![T::zero(); y.len()]);
                let mut dw = want_w.then(|| vec![T::zero(); w.len()]);
                let mut col = vec![T::zero(); gm.rows() * gm.cols()];
                if want_y || want_w {
                    for n in 0..ys.n {
                        kernels::im2col(&g[n * out_per..(n + 1) * out_per], &gm, &mut col);
                        if let Some(dy) = dy.as_mut() {
                            let dst = &mut dy[n * in_per..(n + 1) * in_per];
                            T::gemm(ys.c, gm.rows(), gm.cols(), w, false, &col, false, dst, T::zero());
                        }
                        if let Some(dw) = dw.as_mut() {
                            let src = &y[n * in_per..(n + 1) * in_per];
                            T::gemm(ys.c, gm.cols(), gm.rows(), src, false, &col, true, dw, T::one());
                        }
                    }
                }
                if let Some(dy) = dy {
                    accumulate(adj, *input, dy);
                }
                if let Some(dw) = dw {
                    accumulate(adj, *weight, dw);
                }
                if let Some(b) = bias.filter(|b| self.wants(*b)) {
                    accumulate(adj, b, channel_sums(g, so));
                }
            }
            Op::InstanceNorm { input, gain, bias, xhat, inv_std } => {
                let s = out.shape();
                let plane = s.plane();
                let count = T::from_f64(plane as f64);
                let gv = self.value(*gain).data();
                let mut dgain = vec![T::zero(); s.c];
                let mut dbias = vec![T::zero(); s.c];
                let mut dx = self.wants(*input).then(|| vec![T::zero(); g.len()]);
                for p in 0..s.n * s.c {
                    let c = p % s.c;
                    let r = p * plane..(p + 1) * plane;
                    let (gp, xp) = (&g[r.clone()], &xhat[r.clone()]);
                    let mut sum_dy = T::zero();
                    let mut sum_dy_xhat = T::zero();
                    for (&d, &xh) in gp.iter().zip(xp) {
                        sum_dy += d;
                        sum_dy_xhat += d * xh;
                    }
                    dgain[c] += sum_dy_xhat;
                    dbias[c] += sum_dy;
                    if let Some(dx) = dx.as_mut() {
                        // d xhat = dy * gain; the two sums scale by gain too.
                        let k = gv[c] * inv_std[p] / count;
                        for ((o, &d), &xh) in dx[r].iter_mut().zip(gp).zip(xp) {
                            *o = k * (count * d - sum_dy - xh * sum_dy_xhat);
                        }
                    }
                }
                if let Some(dx) = dx {
                    accumulate(adj, *input, dx);
                }
                if self.wants(*gain) {
                    accumulate(adj, *gain, dgain);
                }
                if self.wants(*bias) {
                    accumulate(adj, *bias, dbias);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                let d = g.iter().zip(xv).map(|(&gv, &v)| if v > T::zero() { gv } else { gv * *slope }).collect();
                accumulate(adj, *x, d);
            }
            Op::Tanh { x } => {
                let d = g.iter().zip(out.data()).map(|(&gv, &y)| gv * (T::one() - y * y)).collect();
                accumulate(adj, *x, d);
            }
            Op::Sigmoid { x } => {
                let d = g.iter().zip(out.data()).map(|(&gv, &y)| gv * y * (T::one() - y)).collect();
                accumulate(adj, *x, d);
            }
            Op::Dropout { x, mask } => {
                let d = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                accumulate(adj, *x, d);
            }
            Op::Scale { x, k } => {
                let d = g.iter().map(|&gv| gv * *k).collect();
                accumulate(adj, *x, d);
            }
            Op::Concat { a, b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (pa, pb) = (sa.c * sa.plane(), sb.c * sb.plane());
                let mut ga = Vec::with_capacity(sa.numel());
                let mut gb = Vec::with_capacity(sb.numel());
                for chunk in g.chunks(pa + pb) {
                    ga.extend_from_slice(&chunk[..pa]);
                    gb.extend_from_slice(&chunk[pa..]);
                }
                if self.wants(*a) {
                    accumulate(adj, *a, ga);
                }
                if self.wants(*b) {
                    accumulate(adj, *b, gb);
                }
            }
            Op::MaxPool2 { x, argmax } => {
                let mut d = vec![T::zero(); self.shape(*x).numel()];
                for (&gv, &idx) in g.iter().zip(argmax) {
                    d[idx] += gv;
                }
                accumulate(adj, *x, d);
            }
            Op::GlobalAvgPool { x } => {
                let s = self.shape(*x);
                let inv = T::one() / T::from_f64(s.plane() as f64);
                let mut d = Vec::with_capacity(s.numel());
                for &gv in g {
                    d.extend(std::iter::repeat_n(gv * inv, s.plane()));
                }
                accumulate(adj, *x, d);
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(adj, *a, g.to_vec());
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g.to_vec());
                }
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    accumulate(adj, *a, g.iter().zip(vb).map(|(&gv, &y)| gv * y).collect());
                }
                if self.wants(*b) {
                    accumulate(adj, *b, g.iter().zip(va).map(|(&gv, &x)| gv * x).collect());
                }
            }
            Op::Sum { x } => {
                accumulate(adj, *x, vec![g[0]; self.shape(*x).numel()]);
            }
            Op::L1 { a, b } => {
                let k = g[0] / T::from_f64(self.shape(*a).numel() as f64);
                let diff = |x: T, y: T| {
                    let d = x - y;
                    if d > T::zero() {
                        k
                    } else if d < T::zero() {
                        -k
                    } else {
                        T::zero()
                    }
                };
                self.pair_grads(*a, *b, adj, diff);
            }
            Op::Mse { a, b } => {
                let k = T::from_f64(2.0) * g[0] / T::from_f64(self.shape(*a).numel() as f64);
                self.pair_grads(*a, *b, adj, |x, y| k * (x - y));
            }
            Op::Bce { logits, targets } => {
                let k = g[0] / T::from_f64(self.shape(*logits).numel() as f64);
                let (l, t) = (self.value(*logits).data(), self.value(*targets).data());
                if self.wants(*logits) {
                    let d = l.iter().zip(t).map(|(&lv, &tv)| k * (kernels::sigmoid(lv) - tv)).collect();
                    accumulate(adj, *logits, d);
                }
                if self.wants(*targets) {
                    accumulate(adj, *targets, l.iter().map(|&lv| -k * lv).collect());
                }
            }
        }
    }

    /// Gradient of a symmetric-in-sign pair loss: `f` is d/da; d/db = -f.
    fn pair_grads(&self, a: Var, b: Var, adj: &mut [Option<Vec<T>>], f: impl Fn(T, T) -> T) {
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let da: Vec<T> = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        if self.wants(b) {
            accumulate(adj, b, da.iter().map(|&v| -v).collect());
        }
        if self.wants(a) {
            accumulate(adj, a, da);
        }
    }
}

fn accumulate<T: Element>(adj: &mut [Option<Vec<T>>], v: Var, g: Vec<T>) {
    match &mut adj[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn add_channel_bias<T: Element>(out: &mut [T], s: Shape, bias: &[T]) {
    for (p, plane) in out.chunks_mut(s.plane().max(1)).enumerate() {
        let b = bias[p % s.c];
        for v in plane {
            *v += b;
        }
    }
}

fn channel_sums<T: Element>(g: &[T], s: Shape) -> Vec<T> {
    let mut sums = vec![T::zero(); s.c];
    for (p, plane) in g.chunks(s.plane().max(1)).enumerate() {
        sums[p % s.c] += plane.iter().copied().sum::<T>();
    }
    sums
}
