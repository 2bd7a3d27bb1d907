use super::conv::{self, Geometry};
use super::{numel, DiffTensor, Scalar, Shape};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geo: Geometry,
    },
    ConvT {
        x: Var,
        w: Var,
        b: Option<Var>,
        geo: Geometry,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    ScaleBy(Var, Var),
    Sqrt(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Wbce {
        logits: Var,
        occupied: Vec<bool>,
        zeta: f64,
    },
}

#[derive(Clone, Debug)]
struct Node<T> {
    tensor: DiffTensor<T>,
    op: Op<T>,
}

/// Append-only record of a computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, tensor: DiffTensor<T>) -> Var {
        self.push(tensor, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, shape: Shape, values: Vec<T>) -> Result<Var> {
        Ok(self.leaf(DiffTensor::new(shape, values, false)?))
    }

    pub fn tensor(&self, v: Var) -> &DiffTensor<T> {
        &self.nodes[v.0].tensor
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].tensor.values
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].tensor.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    /// Sign of every ReLU input (`true` when positive), in tape order.
    /// Finite-difference checks compare patterns to detect kinks between
    /// probe points.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu(x) = n.op {
                out.extend(self.value(x).iter().map(|&v| v > T::zero()));
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.tensor.grad = None;
        }
    }

    fn push(&mut self, tensor: DiffTensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::Graph(format!("variable {} is not on this tape", v.0)))
        }
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tensor.requires_grad)
    }

    fn derived(&mut self, shape: Shape, values: Vec<T>, inputs: &[Var], op: Op<T>) -> Var {
        let requires_grad = self.needs(inputs);
        self.push(
            DiffTensor {
                shape,
                values,
                grad: None,
                requires_grad,
            },
            op,
        )
    }

    fn conv_geometry(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        transpose: bool,
    ) -> Result<(Geometry, usize)> {
        self.check(x)?;
        self.check(w)?;
        if x == w {
            return Err(Error::Graph("input and weight must be different nodes".into()));
        }
        let xs = self.shape(x);
        let ws = self.shape(w);
        let k = ws[2];
        if ws[3] != k || ws[4] != k || k == 0 {
            return Err(Error::Shape(format!("kernel must be cubic, got {ws:?}")));
        }
        if ws[1] != xs[1] && !transpose || ws[0] != xs[1] && transpose {
            return Err(Error::Shape(format!(
                "weight {ws:?} does not match input channels {}",
                xs[1]
            )));
        }
        let c_out = if transpose { ws[1] } else { ws[0] };
        if let Some(b) = b {
            self.check(b)?;
            if numel(&self.shape(b)) != c_out {
                return Err(Error::Shape(format!(
                    "bias has {} entries for {c_out} channels",
                    numel(&self.shape(b))
                )));
            }
        }
        let side = |s: usize| {
            if transpose {
                conv::conv_transpose_output_side(s, k, stride, pad)
            } else {
                conv::conv_output_side(s, k, stride, pad)
            }
        };
        let mut out = [0usize; 3];
        for a in 0..3 {
            out[a] = side(xs[2 + a]).ok_or_else(|| {
                Error::Shape(format!(
                    "kernel {k} stride {stride} padding {pad} invalid for input {xs:?}"
                ))
            })?;
        }
        let spatial = [xs[2], xs[3], xs[4]];
        let geo = if transpose {
            Geometry {
                c_big: c_out,
                c_small: xs[1],
                big: out,
                small: spatial,
                k,
                stride,
                pad,
            }
        } else {
            Geometry {
                c_big: xs[1],
                c_small: c_out,
                big: spatial,
                small: out,
                k,
                stride,
                pad,
            }
        };
        Ok((geo, c_out))
    }

    /// 3D convolution; `w` is `[c_out, c_in, k, k, k]`.
    pub fn conv3d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (geo, c_out) = self.conv_geometry(x, w, b, stride, pad, false)?;
        let n = self.shape(x)[0];
        let in_len = geo.c_big * geo.big_len();
        let out_len = c_out * geo.small_len();
        let mut out = vec![T::zero(); n * out_len];
        let mut col = Vec::new();
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = b.map(|b| self.value(b));
        for i in 0..n {
            conv::conv_forward(
                &geo,
                &xv[i * in_len..(i + 1) * in_len],
                wv,
                bv,
                &mut col,
                &mut out[i * out_len..(i + 1) * out_len],
            );
        }
        let shape = [n, c_out, geo.small[0], geo.small[1], geo.small[2]];
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.derived(shape, out, &inputs, Op::Conv { x, w, b, geo }))
    }

    /// Transposed 3D convolution with `output_padding = stride - 1`;
    /// `w` is `[c_in, c_out, k, k, k]`.
    pub fn conv_transpose3d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (geo, c_out) = self.conv_geometry(x, w, b, stride, pad, true)?;
        let n = self.shape(x)[0];
        let in_len = geo.c_small * geo.small_len();
        let out_len = c_out * geo.big_len();
        let mut out = vec![T::zero(); n * out_len];
        let mut col = Vec::new();
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = b.map(|b| self.value(b));
        for i in 0..n {
            conv::conv_transpose_forward(
                &geo,
                &xv[i * in_len..(i + 1) * in_len],
                wv,
                bv,
                &mut col,
                &mut out[i * out_len..(i + 1) * out_len],
            );
        }
        let shape = [n, c_out, geo.big[0], geo.big[1], geo.big[2]];
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.derived(shape, out, &inputs, Op::ConvT { x, w, b, geo }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        Ok(self.derived(self.shape(x), out, &[x], Op::Relu(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let out = self.value(x).iter().map(|&v| T::of(sigmoid(v.f64()))).collect();
        Ok(self.derived(self.shape(x), out, &[x], Op::Sigmoid(x)))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        Ok(self.derived(self.shape(a), out, &[a, b], Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        Ok(self.derived(self.shape(a), out, &[a, b], Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        self.check(x)?;
        let out = self.value(x).iter().map(|&v| v * s).collect();
        Ok(self.derived(self.shape(x), out, &[x], Op::Scale(x, s)))
    }

    /// Multiplies every entry of `x` by the single value of `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check(x)?;
        self.check(s)?;
        if self.nodes[s.0].tensor.len() != 1 {
            return Err(Error::Shape(format!("scale must be a scalar, got {:?}", self.shape(s))));
        }
        let k = self.value(s)[0];
        let out = self.value(x).iter().map(|&v| v * k).collect();
        Ok(self.derived(self.shape(x), out, &[x, s], Op::ScaleBy(x, s)))
    }

    /// Elementwise square root; inputs must be positive.
    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        if let Some(v) = self.value(x).iter().find(|v| v.f64().is_nan() || v.f64() <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sqrt of non-positive value {}",
                v.f64()
            )));
        }
        let out = self.value(x).iter().map(|&v| v.sqrt()).collect();
        Ok(self.derived(self.shape(x), out, &[x], Op::Sqrt(x)))
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        for &p in parts {
            self.check(p)?;
        }
        let s0 = self.shape(first);
        let mut channels = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != s0[0] || s[2..] != s0[2..] {
                return Err(Error::Shape(format!("cannot concatenate {s:?} with {s0:?}")));
            }
            channels += s[1];
        }
        let n = s0[0];
        let plane = s0[2] * s0[3] * s0[4];
        let mut out = Vec::with_capacity(n * channels * plane);
        for i in 0..n {
            for &p in parts {
                let c = self.shape(p)[1];
                out.extend_from_slice(&self.value(p)[i * c * plane..(i + 1) * c * plane]);
            }
        }
        let shape = [n, channels, s0[2], s0[3], s0[4]];
        Ok(self.derived(shape, out, parts, Op::Concat(parts.to_vec())))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x)?;
        let s: f64 = self.value(x).iter().map(|v| v.f64()).sum();
        Ok(self.derived([1; 5], vec![T::of(s)], &[x], Op::Sum(x)))
    }

    /// Class-balanced binary cross entropy on logits:
    /// mean over occupied voxels of `-ln sigmoid(z)` plus `zeta` times the
    /// mean over empty voxels of `-ln(1 - sigmoid(z))`. A class with no
    /// voxels contributes zero.
    pub fn wbce(&mut self, logits: Var, occupied: &[bool], zeta: f64) -> Result<Var> {
        self.check(logits)?;
        let z = self.value(logits);
        if z.len() != occupied.len() {
            return Err(Error::Shape(format!(
                "{} logits for {} occupancy labels",
                z.len(),
                occupied.len()
            )));
        }
        let n_occ = occupied.iter().filter(|&&o| o).count();
        let n_empty = occupied.len() - n_occ;
        let (mut pos, mut neg) = (0.0f64, 0.0f64);
        for (&v, &o) in z.iter().zip(occupied) {
            if o {
                pos += softplus(-v.f64());
            } else {
                neg += softplus(v.f64());
            }
        }
        let mut loss = 0.0;
        if n_occ > 0 {
            loss += pos / n_occ as f64;
        }
        if n_empty > 0 {
            loss += zeta * neg / n_empty as f64;
        }
        let op = Op::Wbce {
            logits,
            occupied: occupied.to_vec(),
            zeta,
        };
        Ok(self.derived([1; 5], vec![T::of(loss)], &[logits], op))
    }

    /// Accumulates d(loss)/d(node) into every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check(loss)?;
        let root = &self.nodes[loss.0].tensor;
        if root.len() != 1 {
            return Err(Error::Graph(format!(
                "loss must be a scalar, got shape {:?}",
                root.shape
            )));
        }
        if !root.requires_grad {
            return Err(Error::Graph("loss does not depend on any trainable input".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![T::one()]);
        let mut col = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads, &mut col);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            if !node.tensor.requires_grad {
                continue;
            }
            match &mut node.tensor.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                None => node.tensor.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>], col: &mut Vec<T>) {
        let wants = |v: Var| self.nodes[v.0].tensor.requires_grad;
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv { x, w, b, geo } | Op::ConvT { x, w, b, geo } => {
                let transpose = matches!(node.op, Op::ConvT { .. });
                let n = node.tensor.shape[0];
                let (in_len, out_len) = if transpose {
                    (geo.c_small * geo.small_len(), geo.c_big * geo.big_len())
                } else {
                    (geo.c_big * geo.big_len(), geo.c_small * geo.small_len())
                };
                if let Some(b) = b.filter(|&b| wants(b)) {
                    let plane = out_len / numel(&self.shape(b));
                    let gb = grads[b.0].get_or_insert_with(|| vec![T::zero(); numel(&self.shape(b))]);
                    for item in 0..n {
                        conv::bias_backward(&g[item * out_len..(item + 1) * out_len], gb, plane);
                    }
                }
                let (want_x, want_w) = (wants(*x), wants(*w));
                if !want_x && !want_w {
                    return;
                }
                let take = |grads: &mut [Option<Vec<T>>], v: Var| {
                    grads[v.0]
                        .take()
                        .unwrap_or_else(|| vec![T::zero(); self.nodes[v.0].tensor.len()])
                };
                let mut gx = want_x.then(|| take(grads, *x));
                let mut gw = want_w.then(|| take(grads, *w));
                let xv = self.value(*x);
                let wv = self.value(*w);
                for item in 0..n {
                    let gxi = gx.as_mut().map(|b| &mut b[item * in_len..(item + 1) * in_len]);
                    let gwi = gw.as_deref_mut();
                    let xi = &xv[item * in_len..(item + 1) * in_len];
                    let gi = &g[item * out_len..(item + 1) * out_len];
                    if transpose {
                        conv::conv_transpose_backward(geo, xi, wv, gi, gxi, gwi, col);
                    } else {
                        conv::conv_backward(geo, xi, wv, gi, gxi, gwi, col);
                    }
                }
                if let Some(b) = gx {
                    grads[x.0] = Some(b);
                }
                if let Some(b) = gw {
                    grads[w.0] = Some(b);
                }
            }
            Op::Relu(x) => {
                if wants(*x) {
                    let out = &node.tensor.values;
                    let gx = grads[x.0].get_or_insert_with(|| vec![T::zero(); out.len()]);
                    for ((a, &o), &gv) in gx.iter_mut().zip(out).zip(g) {
                        if o > T::zero() {
                            *a += gv;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if wants(*x) {
                    let out = &node.tensor.values;
                    let gx = grads[x.0].get_or_insert_with(|| vec![T::zero(); out.len()]);
                    for ((a, &s), &gv) in gx.iter_mut().zip(out).zip(g) {
                        *a += gv * s * (T::one() - s);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        let gv = grads[v.0].get_or_insert_with(|| vec![T::zero(); g.len()]);
                        gv.iter_mut().zip(g).for_each(|(d, &s)| *d += s);
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if wants(v) {
                        let ov = self.value(other);
                        let gv = grads[v.0].get_or_insert_with(|| vec![T::zero(); g.len()]);
                        for ((d, &s), &o) in gv.iter_mut().zip(g).zip(ov) {
                            *d += s * o;
                        }
                    }
                }
            }
            Op::Scale(x, s) => {
                if wants(*x) {
                    let gx = grads[x.0].get_or_insert_with(|| vec![T::zero(); g.len()]);
                    gx.iter_mut().zip(g).for_each(|(d, &v)| *d += v * *s);
                }
            }
            Op::ScaleBy(x, k) => {
                let kv = self.value(*k)[0];
                if wants(*x) {
                    let gx = grads[x.0].get_or_insert_with(|| vec![T::zero(); g.len()]);
                    gx.iter_mut().zip(g).for_each(|(d, &v)| *d += v * kv);
                }
                if wants(*k) {
                    let dot: f64 = g.iter().zip(self.value(*x)).map(|(a, b)| a.f64() * b.f64()).sum();
                    let gk = grads[k.0].get_or_insert_with(|| vec![T::zero()]);
                    gk[0] += T::of(dot);
                }
            }
            Op::Sqrt(x) => {
                if wants(*x) {
                    let out = &node.tensor.values;
                    let gx = grads[x.0].get_or_insert_with(|| vec![T::zero(); out.len()]);
                    let half = T::of(0.5);
                    for ((d, &r), &v) in gx.iter_mut().zip(out).zip(g) {
                        *d += v * half / r;
                    }
                }
            }
            Op::Concat(parts) => {
                let shape = node.tensor.shape;
                let plane = shape[2] * shape[3] * shape[4];
                let total = shape[1] * plane;
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if wants(p) {
                        let len = self.nodes[p.0].tensor.len();
                        let gp = grads[p.0].get_or_insert_with(|| vec![T::zero(); len]);
                        for item in 0..shape[0] {
                            let src = &g[item * total + offset..item * total + offset + c * plane];
                            let dst = &mut gp[item * c * plane..(item + 1) * c * plane];
                            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                        }
                    }
                    offset += c * plane;
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    let len = self.nodes[x.0].tensor.len();
                    let gx = grads[x.0].get_or_insert_with(|| vec![T::zero(); len]);
                    gx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Wbce { logits, occupied, zeta } => {
                if wants(*logits) {
                    let z = self.value(*logits);
                    let n_occ = occupied.iter().filter(|&&o| o).count();
                    let n_empty = occupied.len() - n_occ;
                    let up = g[0].f64();
                    let gz = grads[logits.0].get_or_insert_with(|| vec![T::zero(); z.len()]);
                    for ((d, &v), &o) in gz.iter_mut().zip(z).zip(occupied) {
                        let s = sigmoid(v.f64());
                        let local = if o {
                            (s - 1.0) / n_occ as f64
                        } else {
                            zeta * s / n_empty as f64
                        };
                        *d += T::of(up * local);
                    }
                }
            }
        }
    }
}
