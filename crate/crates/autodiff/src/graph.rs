use crate::kernels::{self, ConvShape};
use crate::{AdError, Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Reshape(Var),
    SwapLeading { x: Var, a: usize, b: usize, inner: usize },
    GroupedContract { w: Var, x: Var, groups: usize, k: usize, inner: usize },
    Conv2d { x: Var, w: Var, b: Option<Var>, shape: ConvShape, col: Vec<T> },
    Relu(Var),
    LeakyRelu(Var, T),
    Clamp { x: Var, lo: T, hi: T },
    Sigmoid { x: Var, tau: T },
    SeparablePattern { rows: Var, cols: Var, tau: T, hard: bool },
    PixelShuffle { x: Var, c: usize, h: usize, w: usize, r: usize },
    SpaceToDepth { x: Var, c: usize, h: usize, w: usize, r: usize },
    Concat(Vec<Var>),
    Mse(Var, Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// A dynamically built tape of tensor operations.
///
/// Nodes are appended in evaluation order, so the tape is already
/// topologically sorted and the backward pass is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Graph::backward`] call. `None`
    /// for nodes that do not depend on any trainable leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AdError> {
        if self.shape(a) != self.shape(b) {
            return Err(AdError::ShapeMismatch {
                op,
                expected: self.shape(a).to_vec(),
                got: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.same_shape("add", a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.same_shape("mul", a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AdError> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Exchanges the first two axes: `[A, B, rest..] -> [B, A, rest..]`.
    pub fn swap_leading(&mut self, x: Var) -> Result<Var, AdError> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(AdError::InvalidShape {
                op: "swap_leading",
                reason: format!("needs rank >= 2, got {shape:?}"),
            });
        }
        let (a, b) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let src = self.value(x).data();
        let mut data = vec![T::zero(); src.len()];
        for i in 0..a {
            for j in 0..b {
                let s = (i * b + j) * inner;
                let d = (j * a + i) * inner;
                data[d..d + inner].copy_from_slice(&src[s..s + inner]);
            }
        }
        let mut out_shape = shape;
        out_shape.swap(0, 1);
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SwapLeading { x, a, b, inner }, rg))
    }

    /// `out[g, s..] = Σ_k w[g, k] · x[g, k, s..]`.
    ///
    /// This is a bank of bias-free 1×1 convolutions, one per group.
    pub fn grouped_contract(&mut self, w: Var, x: Var) -> Result<Var, AdError> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        if ws.len() != 2 || xs.len() < 2 || xs[0] != ws[0] || xs[1] != ws[1] {
            return Err(AdError::ShapeMismatch { op: "grouped_contract", expected: ws, got: xs });
        }
        let (groups, k) = (ws[0], ws[1]);
        let inner: usize = xs[2..].iter().product();
        let wv = self.value(w).data();
        let xv = self.value(x).data();
        let mut data = vec![T::zero(); groups * inner];
        for g in 0..groups {
            let out = &mut data[g * inner..(g + 1) * inner];
            for kk in 0..k {
                let wgk = wv[g * k + kk];
                let row = &xv[(g * k + kk) * inner..(g * k + kk + 1) * inner];
                for (o, &xv) in out.iter_mut().zip(row) {
                    *o = *o + wgk * xv;
                }
            }
        }
        let mut out_shape = vec![groups];
        out_shape.extend_from_slice(&xs[2..]);
        let value = Tensor::new(out_shape, data)?;
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(value, Op::GroupedContract { w, x, groups, k, inner }, rg))
    }

    /// Stride-1, size-preserving 2-D convolution of a `[C, H, W]` input with
    /// `[C_out, C, k, k]` weights and optional `[C_out]` bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, AdError> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] || ws[2] % 2 == 0 {
            return Err(AdError::ShapeMismatch { op: "conv2d", expected: ws, got: xs });
        }
        if let Some(b) = b {
            if self.shape(b) != [ws[0]] {
                return Err(AdError::ShapeMismatch {
                    op: "conv2d bias",
                    expected: vec![ws[0]],
                    got: self.shape(b).to_vec(),
                });
            }
        }
        let shape = ConvShape { c_in: xs[0], c_out: ws[0], height: xs[1], width: xs[2], kernel: ws[2] };
        let (out, col) = kernels::conv2d_im2col(
            shape,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(vec![shape.c_out, shape.height, shape.width], out)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::Conv2d { x, w, b, shape, col }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { v * slope });
        let rg = self.rg(x);
        self.push(value, Op::LeakyRelu(x, slope), rg)
    }

    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        let rg = self.rg(x);
        self.push(value, Op::Clamp { x, lo, hi }, rg)
    }

    /// Steep logistic `1 / (1 + exp(-τ·x))`.
    pub fn sigmoid(&mut self, x: Var, tau: T) -> Var {
        let value = self.value(x).map(|v| sigmoid(tau * v));
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid { x, tau }, rg)
    }

    /// Row-column separable pattern `out[t, j, i] = σ_τ(rows[t, j]) · σ_τ(cols[t, i])`.
    ///
    /// With `hard` the forward value is the binary `[rows > 0]·[cols > 0]`
    /// while the backward pass keeps the relaxed sigmoid-product gradient
    /// (straight-through estimator).
    pub fn separable_pattern(&mut self, rows: Var, cols: Var, tau: T, hard: bool) -> Result<Var, AdError> {
        let rs = self.shape(rows).to_vec();
        let cs = self.shape(cols).to_vec();
        if rs.len() != 2 || cs.len() != 2 || rs[0] != cs[0] {
            return Err(AdError::ShapeMismatch { op: "separable_pattern", expected: rs, got: cs });
        }
        let (t, m, n) = (rs[0], rs[1], cs[1]);
        let rv = self.value(rows).data();
        let cv = self.value(cols).data();
        let mut data = Vec::with_capacity(t * m * n);
        for tt in 0..t {
            for j in 0..m {
                let r = rv[tt * m + j];
                for i in 0..n {
                    let c = cv[tt * n + i];
                    data.push(if hard {
                        if r > T::zero() && c > T::zero() {
                            T::one()
                        } else {
                            T::zero()
                        }
                    } else {
                        sigmoid(tau * r) * sigmoid(tau * c)
                    });
                }
            }
        }
        let value = Tensor::new(vec![t, m, n], data)?;
        let rg = self.rg(rows) || self.rg(cols);
        Ok(self.push(value, Op::SeparablePattern { rows, cols, tau, hard }, rg))
    }

    /// `[C·r², H, W] -> [C, r·H, r·W]`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var, AdError> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || r == 0 || s[0] % (r * r) != 0 {
            return Err(AdError::InvalidShape {
                op: "pixel_shuffle",
                reason: format!("channels of {s:?} not divisible by {}", r * r),
            });
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let data = kernels::pixel_shuffle(c, h, w, r, self.value(x).data());
        let value = Tensor::new(vec![c / (r * r), h * r, w * r], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::PixelShuffle { x, c, h, w, r }, rg))
    }

    /// `[C, r·H, r·W] -> [C·r², H, W]`.
    pub fn space_to_depth(&mut self, x: Var, r: usize) -> Result<Var, AdError> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || r == 0 || s[1] % r != 0 || s[2] % r != 0 {
            return Err(AdError::InvalidShape {
                op: "space_to_depth",
                reason: format!("spatial size of {s:?} not divisible by {r}"),
            });
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let data = kernels::space_to_depth(c, h, w, r, self.value(x).data());
        let value = Tensor::new(vec![c * r * r, h / r, w / r], data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::SpaceToDepth { x, c, h, w, r }, rg))
    }

    /// Concatenation along the leading (channel) axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        let first = parts.first().ok_or(AdError::InvalidArgument {
            op: "concat",
            reason: "no inputs".into(),
        })?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(AdError::ShapeMismatch {
                    op: "concat",
                    expected: tail.clone(),
                    got: s.to_vec(),
                });
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let value = Tensor::new(shape, data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.same_shape("mse", a, b)?;
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let n = T::from_f64(va.len() as f64);
        let s: T = va.iter().zip(vb).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let value = Tensor::scalar(s / n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mse(a, b), rg))
    }

    /// Hash of every piecewise-linear branch decision on the tape (ReLU
    /// signs, clamp regions, hard thresholds). Two evaluations with equal
    /// signatures lie on the same smooth piece of the composed map.
    pub fn kink_signature(&self) -> u64 {
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |b: u8| {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        };
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) => {
                    for &v in self.value(*x).data() {
                        feed((v > T::zero()) as u8);
                    }
                }
                Op::Clamp { x, lo, hi } => {
                    for &v in self.value(*x).data() {
                        feed(if v < *lo { 0 } else if v > *hi { 2 } else { 1 });
                    }
                }
                Op::SeparablePattern { rows, cols, hard: true, .. } => {
                    for &v in self.value(*rows).data().iter().chain(self.value(*cols).data()) {
                        feed((v > T::zero()) as u8);
                    }
                }
                _ => {}
            }
        }
        h
    }

    /// Reverse sweep from a scalar `loss`, replacing any previous gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), AdError> {
        if self.value(loss).len() != 1 {
            return Err(AdError::NotScalar(self.shape(loss).to_vec()));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.rg(loss) {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else { continue };
            if self.nodes[i].requires_grad {
                self.propagate(i, &g);
            }
            self.nodes[i].grad = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contrib: Vec<T>) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&contrib),
            None => {
                node.grad = Some(Tensor::new(node.value.shape().to_vec(), contrib).expect("gradient shape"))
            }
        }
    }

    fn propagate(&mut self, i: usize, g: &Tensor<T>) {
        let gd = g.data();
        // Collect contributions first so the borrow of `self.nodes[i]` ends
        // before parents are mutated.
        let mut out: Vec<(Var, Vec<T>)> = Vec::with_capacity(2);
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                out.push((*a, gd.to_vec()));
                out.push((*b, gd.to_vec()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if self.rg(*a) {
                    out.push((*a, gd.iter().zip(vb).map(|(&g, &y)| g * y).collect()));
                }
                if self.rg(*b) {
                    out.push((*b, gd.iter().zip(va).map(|(&g, &x)| g * x).collect()));
                }
            }
            Op::Scale(a, s) => out.push((*a, gd.iter().map(|&g| g * *s).collect())),
            Op::Sum(a) => out.push((*a, vec![gd[0]; self.value(*a).len()])),
            Op::Reshape(a) => out.push((*a, gd.to_vec())),
            Op::SwapLeading { x, a, b, inner } => {
                let (a, b, inner) = (*a, *b, *inner);
                let mut d = vec![T::zero(); gd.len()];
                for i in 0..a {
                    for j in 0..b {
                        let src = (j * a + i) * inner;
                        let dst = (i * b + j) * inner;
                        d[dst..dst + inner].copy_from_slice(&gd[src..src + inner]);
                    }
                }
                out.push((*x, d));
            }
            Op::GroupedContract { w, x, groups, k, inner } => {
                let (groups, k, inner) = (*groups, *k, *inner);
                let wv = self.value(*w).data();
                let xv = self.value(*x).data();
                if self.rg(*w) {
                    let mut dw = vec![T::zero(); groups * k];
                    for g in 0..groups {
                        let grow = &gd[g * inner..(g + 1) * inner];
                        for kk in 0..k {
                            let row = &xv[(g * k + kk) * inner..(g * k + kk + 1) * inner];
                            dw[g * k + kk] = grow.iter().zip(row).map(|(&a, &b)| a * b).sum();
                        }
                    }
                    out.push((*w, dw));
                }
                if self.rg(*x) {
                    let mut dx = vec![T::zero(); xv.len()];
                    for g in 0..groups {
                        let grow = &gd[g * inner..(g + 1) * inner];
                        for kk in 0..k {
                            let wgk = wv[g * k + kk];
                            let dst = &mut dx[(g * k + kk) * inner..(g * k + kk + 1) * inner];
                            for (d, &gv) in dst.iter_mut().zip(grow) {
                                *d = wgk * gv;
                            }
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::Conv2d { x, w, b, shape, col } => {
                let s = *shape;
                let n = s.pixels();
                if let Some(b) = b {
                    if self.rg(*b) {
                        out.push((*b, gd.chunks(n).map(|c| c.iter().copied().sum()).collect()));
                    }
                }
                if self.rg(*w) {
                    let mut dw = vec![T::zero(); s.c_out * s.col_rows()];
                    T::gemm(s.c_out, n, s.col_rows(), gd, false, col, true, T::zero(), &mut dw);
                    out.push((*w, dw));
                }
                if self.rg(*x) {
                    let mut dcol = vec![T::zero(); s.col_rows() * n];
                    let wv = self.value(*w).data();
                    T::gemm(s.col_rows(), s.c_out, n, wv, true, gd, false, T::zero(), &mut dcol);
                    out.push((*x, kernels::col2im(s, &dcol)));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                out.push((*x, gd.iter().zip(xv).map(|(&g, &v)| if v > T::zero() { g } else { T::zero() }).collect()));
            }
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x).data();
                out.push((*x, gd.iter().zip(xv).map(|(&g, &v)| if v > T::zero() { g } else { g * *slope }).collect()));
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x).data();
                out.push((
                    *x,
                    gd.iter()
                        .zip(xv)
                        .map(|(&g, &v)| if v >= *lo && v <= *hi { g } else { T::zero() })
                        .collect(),
                ));
            }
            Op::Sigmoid { x, tau } => {
                let yv = self.nodes[i].value.data();
                out.push((*x, gd.iter().zip(yv).map(|(&g, &y)| g * *tau * y * (T::one() - y)).collect()));
            }
            Op::SeparablePattern { rows, cols, tau, .. } => {
                let tau = *tau;
                let rs = self.shape(*rows).to_vec();
                let (t, m) = (rs[0], rs[1]);
                let n = self.shape(*cols)[1];
                let sr: Vec<T> = self.value(*rows).data().iter().map(|&r| sigmoid(tau * r)).collect();
                let sc: Vec<T> = self.value(*cols).data().iter().map(|&c| sigmoid(tau * c)).collect();
                let mut dr = vec![T::zero(); t * m];
                let mut dc = vec![T::zero(); t * n];
                for tt in 0..t {
                    for j in 0..m {
                        let r = sr[tt * m + j];
                        for ii in 0..n {
                            let c = sc[tt * n + ii];
                            let gv = gd[(tt * m + j) * n + ii];
                            dr[tt * m + j] = dr[tt * m + j] + gv * c * tau * r * (T::one() - r);
                            dc[tt * n + ii] = dc[tt * n + ii] + gv * r * tau * c * (T::one() - c);
                        }
                    }
                }
                out.push((*rows, dr));
                out.push((*cols, dc));
            }
            Op::PixelShuffle { x, c, h, w, r } => {
                out.push((*x, kernels::space_to_depth(*c / (r * r), h * r, w * r, *r, gd)));
            }
            Op::SpaceToDepth { x, c, h, w, r } => {
                out.push((*x, kernels::pixel_shuffle(c * r * r, h / r, w / r, *r, gd)));
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    out.push((p, gd[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let k = gd[0] * T::from_f64(2.0 / va.len() as f64);
                let da: Vec<T> = va.iter().zip(vb).map(|(&x, &y)| k * (x - y)).collect();
                if self.rg(*b) {
                    out.push((*b, da.iter().map(|&v| -v).collect()));
                }
                out.push((*a, da));
            }
        }
        for (v, c) in out {
            self.accumulate(v, c);
        }
    }
}
