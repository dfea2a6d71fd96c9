use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Element-wise operation kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Sigmoid,
    Tanh,
    Relu,
    Add,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Sigmoid,
    Tanh,
    Relu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Unary(Unary, usize),
    Affine { input: usize, scale: f64 },
    Concat { parts: Vec<usize>, axis: usize },
    Narrow { input: usize, axis: usize, start: usize },
    Reshape(usize),
    Gather { table: usize, rows: Vec<usize> },
    Conv1d { input: usize, weight: usize, bias: usize, lens: Vec<usize> },
    MaxOverTime { input: usize, argmax: Vec<usize> },
    Sum(usize),
    Mean(usize),
    Bce { probs: usize, labels: Vec<f64>, eps: f64 },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of executed operations.
///
/// Nodes are appended in execution order, so the node list is already a
/// topological order; [`Tape::backward`] walks it in reverse once. A tape is
/// single use: after `backward` it is consumed.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if it was a grad-requiring leaf.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(|g| g.as_deref())
    }

    /// Adds this pass's gradient for `var` into `tensor.grad`.
    pub fn accumulate(&self, var: Var, tensor: &mut Tensor) -> Result<()> {
        match self.get(var) {
            Some(g) => tensor.accumulate_grad(g),
            None => Ok(()),
        }
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, var: Var) -> Result<usize> {
        if var.tape != self.id || var.index >= self.nodes.len() {
            return Err(Error::Tape("variable does not belong to this tape".into()));
        }
        if self.consumed {
            return Err(Error::Tape("tape already consumed by backward".into()));
        }
        Ok(var.index)
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node {
            shape,
            data: Arc::new(data),
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    fn rg(&self, index: usize) -> bool {
        self.nodes[index].requires_grad
    }

    /// Records `tensor` as a leaf. It participates in differentiation iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: &Tensor) -> Var {
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            data: tensor.shared_data(),
            op: Op::Leaf,
            requires_grad: tensor.requires_grad(),
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    /// Records a non-differentiable constant.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let t = tensor.with_grad(false);
        self.leaf(&t)
    }

    pub fn value(&self, var: Var) -> &[f64] {
        assert_eq!(var.tape, self.id, "variable does not belong to this tape");
        &self.nodes[var.index].data
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        assert_eq!(var.tape, self.id, "variable does not belong to this tape");
        &self.nodes[var.index].shape
    }

    pub fn tensor(&self, var: Var) -> Tensor {
        let n = &self.nodes[var.index];
        Tensor::from_parts(n.shape.clone(), Arc::clone(&n.data))
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.index].requires_grad
    }

    /// Matrix product `[m×k] · [k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (&self.node(ia).shape, &self.node(ib).shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul(&self.node(ia).data, &self.node(ib).data, &mut out, m, k, n);
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(vec![m, n], out, Op::MatMul(ia, ib), rg))
    }

    /// Element-wise `op_kind` applied to `a` (and `b` for binary kinds).
    pub fn elementwise(&mut self, op_kind: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        match (op_kind, b) {
            (Elementwise::Sigmoid, None) => self.unary(Unary::Sigmoid, a),
            (Elementwise::Tanh, None) => self.unary(Unary::Tanh, a),
            (Elementwise::Relu, None) => self.unary(Unary::Relu, a),
            (Elementwise::Add, Some(b)) => self.add(a, b),
            (Elementwise::Mul, Some(b)) => self.mul(a, b),
            (kind, _) => Err(Error::invalid(
                "elementwise",
                format!("wrong operand count for {kind:?}"),
            )),
        }
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let f: fn(f64) -> f64 = match kind {
            Unary::Sigmoid => kernels::sigmoid,
            Unary::Tanh => f64::tanh,
            Unary::Relu => |x| if x > 0.0 { x } else { 0.0 },
        };
        let out = self.node(ia).data.iter().map(|&x| f(x)).collect();
        let shape = self.node(ia).shape.clone();
        let rg = self.rg(ia);
        Ok(self.push(shape, out, Op::Unary(kind, ia), rg))
    }

    fn binary_shapes(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        if self.node(ia).shape != self.node(ib).shape {
            return Err(Error::shape(op, &self.node(ia).shape, &self.node(ib).shape));
        }
        Ok((ia, ib))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.binary_shapes("add", a, b)?;
        let out = kernels::zip(&self.node(ia).data, &self.node(ib).data, |x, y| x + y);
        let shape = self.node(ia).shape.clone();
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(shape, out, Op::Add(ia, ib), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = self.binary_shapes("mul", a, b)?;
        let out = kernels::zip(&self.node(ia).data, &self.node(ib).data, |x, y| x * y);
        let shape = self.node(ia).shape.clone();
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(shape, out, Op::Mul(ia, ib), rg))
    }

    /// Adds a bias row `b: [n]` (or `[1×n]`) to every row of `a: [m×n]`.
    /// This is the only broadcasting the tape supports.
    pub fn add_row_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (sa, sb) = (&self.node(ia).shape, &self.node(ib).shape);
        let n = *sa.last().unwrap_or(&0);
        if sa.len() != 2 || numel(sb) != n || sb.last() != Some(&n) {
            return Err(Error::shape("add_row_bias", sa, sb));
        }
        let bias = &self.node(ib).data;
        let mut out = self.node(ia).data.to_vec();
        for row in out.chunks_mut(n) {
            row.iter_mut().zip(bias.iter()).for_each(|(o, b)| *o += b);
        }
        let shape = sa.clone();
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(shape, out, Op::AddRow(ia, ib), rg))
    }

    /// `scale * a + shift`, element-wise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let ia = self.check(a)?;
        let out = self.node(ia).data.iter().map(|&x| scale * x + shift).collect();
        let shape = self.node(ia).shape.clone();
        let rg = self.rg(ia);
        Ok(self.push(shape, out, Op::Affine { input: ia, scale }, rg))
    }

    /// Concatenates `parts` along `axis`. A single part is returned unchanged.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "empty part list"))?;
        let indices = parts
            .iter()
            .map(|&p| self.check(p))
            .collect::<Result<Vec<_>>>()?;
        if parts.len() == 1 {
            return Ok(first);
        }
        let base = self.node(indices[0]).shape.clone();
        if axis >= base.len() {
            return Err(Error::invalid("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &i in &indices {
            let s = &self.node(i).shape;
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &i in &indices {
                let chunk = self.node(i).shape[axis] * inner;
                out.extend_from_slice(&self.node(i).data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = indices.iter().any(|&i| self.rg(i));
        Ok(self.push(shape, out, Op::Concat { parts: indices, axis }, rg))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let ia = self.check(a)?;
        let shape = self.node(ia).shape.clone();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::invalid(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = &self.node(ia).data;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * shape[axis] + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let rg = self.rg(ia);
        Ok(self.push(new_shape, out, Op::Narrow { input: ia, axis, start }, rg))
    }

    /// Splits along `axis` into consecutive pieces of the given sizes.
    pub fn split(&mut self, a: Var, axis: usize, sizes: &[usize]) -> Result<Vec<Var>> {
        let ia = self.check(a)?;
        let extent = self.node(ia).shape.get(axis).copied().unwrap_or(0);
        if sizes.iter().sum::<usize>() != extent {
            return Err(Error::invalid(
                "split",
                format!("sizes {sizes:?} do not sum to extent {extent}"),
            ));
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            out.push(self.narrow(a, axis, start, s)?);
            start += s;
        }
        Ok(out)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.check(a)?;
        if numel(shape) != self.node(ia).data.len() || shape.contains(&0) {
            return Err(Error::shape("reshape", &self.node(ia).shape, shape));
        }
        let data = Arc::clone(&self.node(ia).data);
        let rg = self.rg(ia);
        self.nodes.push(Node {
            shape: shape.to_vec(),
            data,
            op: Op::Reshape(ia),
            requires_grad: rg,
        });
        Ok(Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        })
    }

    /// Row lookup: `table: [V×d]`, result `[rows.len()×d]`.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let it = self.check(table)?;
        let shape = &self.node(it).shape;
        if shape.len() != 2 {
            return Err(Error::invalid("gather_rows", format!("table must be 2-D, got {shape:?}")));
        }
        if rows.is_empty() {
            return Err(Error::invalid("gather_rows", "no rows requested"));
        }
        let (v, d) = (shape[0], shape[1]);
        if let Some(&bad) = rows.iter().find(|&&r| r >= v) {
            return Err(Error::invalid(
                "gather_rows",
                format!("id {bad} out of range for table with {v} rows"),
            ));
        }
        let src = &self.node(it).data;
        let mut out = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            out.extend_from_slice(&src[r * d..(r + 1) * d]);
        }
        let rg = self.rg(it);
        Ok(self.push(
            vec![rows.len(), d],
            out,
            Op::Gather {
                table: it,
                rows: rows.to_vec(),
            },
            rg,
        ))
    }

    /// Same-padded 1-D convolution over a batch of variable-length sequences.
    ///
    /// `input: [N×C×I]`, `weight: [K×I×O]` with odd `K`, `bias: [O]`. Sequence `n`
    /// occupies positions `0..lens[n]`; positions at or beyond that length are read
    /// as zero and written as zero, so trailing padding never leaks into the result.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var, lens: &[usize]) -> Result<Var> {
        let (ix, iw, ib) = (self.check(input)?, self.check(weight)?, self.check(bias)?);
        let (sx, sw, sb) = (
            &self.node(ix).shape,
            &self.node(iw).shape,
            &self.node(ib).shape,
        );
        if sx.len() != 3 || sw.len() != 3 || sx[2] != sw[1] {
            return Err(Error::shape("conv1d", sx, sw));
        }
        if sw[0] % 2 == 0 {
            return Err(Error::invalid("conv1d", format!("kernel width {} is not odd", sw[0])));
        }
        if numel(sb) != sw[2] {
            return Err(Error::shape("conv1d", sw, sb));
        }
        if lens.len() != sx[0] || lens.iter().any(|&l| l > sx[1]) {
            return Err(Error::invalid(
                "conv1d",
                format!("lengths {lens:?} do not fit input {sx:?}"),
            ));
        }
        let dims = kernels::ConvDims {
            n: sx[0],
            c: sx[1],
            i: sx[2],
            k: sw[0],
            o: sw[2],
        };
        let out = kernels::conv1d_forward(
            &self.node(ix).data,
            &self.node(iw).data,
            &self.node(ib).data,
            lens,
            dims,
        );
        let rg = self.rg(ix) || self.rg(iw) || self.rg(ib);
        Ok(self.push(
            vec![dims.n, dims.c, dims.o],
            out,
            Op::Conv1d {
                input: ix,
                weight: iw,
                bias: ib,
                lens: lens.to_vec(),
            },
            rg,
        ))
    }

    /// Per-feature maximum over the first `valid_len` rows of `x: [T×F]`.
    /// Returns `[F]`.
    pub fn max_over_time(&mut self, x: Var, valid_len: usize) -> Result<Var> {
        let ix = self.check(x)?;
        let shape = self.node(ix).shape.clone();
        if shape.len() != 2 {
            return Err(Error::invalid("max_over_time", format!("expected [T×F], got {shape:?}")));
        }
        let seq = self.reshape(x, &[1, shape[0], shape[1]])?;
        let pooled = self.max_over_time_batched(seq, &[valid_len])?;
        self.reshape(pooled, &[shape[1]])
    }

    /// Batched form of [`Tape::max_over_time`]: `x: [N×T×F]` → `[N×F]`.
    /// Ties route the gradient to the lowest time index.
    pub fn max_over_time_batched(&mut self, x: Var, lens: &[usize]) -> Result<Var> {
        let ix = self.check(x)?;
        let shape = &self.node(ix).shape;
        if shape.len() != 3 || lens.len() != shape[0] {
            return Err(Error::invalid(
                "max_over_time",
                format!("lengths {lens:?} do not fit input {shape:?}"),
            ));
        }
        let (n, t, f) = (shape[0], shape[1], shape[2]);
        if let Some(&bad) = lens.iter().find(|&&l| l == 0 || l > t) {
            return Err(Error::invalid(
                "max_over_time",
                format!("valid_len {bad} outside 1..={t}"),
            ));
        }
        let src = &self.node(ix).data;
        let mut out = vec![0.0; n * f];
        let mut argmax = vec![0usize; n * f];
        for s in 0..n {
            for j in 0..f {
                let mut best = src[s * t * f + j];
                let mut at = 0;
                for step in 1..lens[s] {
                    let v = src[(s * t + step) * f + j];
                    if v > best {
                        best = v;
                        at = step;
                    }
                }
                out[s * f + j] = best;
                argmax[s * f + j] = (s * t + at) * f + j;
            }
        }
        let rg = self.rg(ix);
        Ok(self.push(vec![n, f], out, Op::MaxOverTime { input: ix, argmax }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let total = self.node(ia).data.iter().sum();
        let rg = self.rg(ia);
        Ok(self.push(vec![1], vec![total], Op::Sum(ia), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.check(a)?;
        let data = &self.node(ia).data;
        let m = data.iter().sum::<f64>() / data.len() as f64;
        let rg = self.rg(ia);
        Ok(self.push(vec![1], vec![m], Op::Mean(ia), rg))
    }

    /// Mean binary cross-entropy of probabilities against `{0,1}` labels, with
    /// probabilities clamped to `[eps, 1-eps]`. Clamped entries pass no gradient.
    pub fn bce(&mut self, probs: Var, labels: &[f64], eps: f64) -> Result<Var> {
        let ip = self.check(probs)?;
        let p = &self.node(ip).data;
        if p.len() != labels.len() {
            return Err(Error::shape("bce", &self.node(ip).shape, &[labels.len()]));
        }
        let loss = p
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let pc = p.clamp(eps, 1.0 - eps);
                -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
            })
            .sum::<f64>()
            / p.len() as f64;
        let rg = self.rg(ip);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::Bce {
                probs: ip,
                labels: labels.to_vec(),
                eps,
            },
            rg,
        ))
    }

    /// Reverse sweep from the scalar `loss`. Returns the gradient of every
    /// grad-requiring leaf and consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let il = self
            .check(loss)
            .map_err(|_| Error::Tape("loss is not on this tape (or tape consumed)".into()))?;
        if self.node(il).data.len() != 1 {
            return Err(Error::Tape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.node(il).shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.node(il).requires_grad {
            grads[il] = Some(vec![1.0]);
        }
        for i in (0..=il).rev() {
            let grad = match &self.nodes[i].op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(i, &grad, &mut grads);
        }
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !matches!(n.op, Op::Leaf) || !n.requires_grad {
                *g = None;
            }
        }
        self.consumed = true;
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let wants = |j: usize| nodes[j].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (&nodes[*a].shape, &nodes[*b].shape);
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if wants(*a) {
                    let acc = slot(grads, *a, m * k);
                    kernels::matmul_nt_acc(g, &nodes[*b].data, acc, m, n, k);
                }
                if wants(*b) {
                    let acc = slot(grads, *b, k * n);
                    kernels::matmul_tn_acc(&nodes[*a].data, g, acc, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for &j in [a, b] {
                    if wants(j) {
                        add_into(slot(grads, j, g.len()), g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let other = &nodes[*b].data;
                    let acc = slot(grads, *a, g.len());
                    for ((s, &gi), &o) in acc.iter_mut().zip(g).zip(other.iter()) {
                        *s += gi * o;
                    }
                }
                if wants(*b) {
                    let other = &nodes[*a].data;
                    let acc = slot(grads, *b, g.len());
                    for ((s, &gi), &o) in acc.iter_mut().zip(g).zip(other.iter()) {
                        *s += gi * o;
                    }
                }
            }
            Op::AddRow(a, b) => {
                if wants(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if wants(*b) {
                    let n = nodes[*b].data.len();
                    let acc = slot(grads, *b, n);
                    for row in g.chunks(n) {
                        add_into(acc, row);
                    }
                }
            }
            Op::Unary(kind, a) => {
                if !wants(*a) {
                    return;
                }
                let y = &node.data;
                let x = &nodes[*a].data;
                let acc = slot(grads, *a, g.len());
                match kind {
                    Unary::Sigmoid => {
                        for ((s, &gi), &yi) in acc.iter_mut().zip(g).zip(y.iter()) {
                            *s += gi * yi * (1.0 - yi);
                        }
                    }
                    Unary::Tanh => {
                        for ((s, &gi), &yi) in acc.iter_mut().zip(g).zip(y.iter()) {
                            *s += gi * (1.0 - yi * yi);
                        }
                    }
                    Unary::Relu => {
                        for ((s, &gi), &xi) in acc.iter_mut().zip(g).zip(x.iter()) {
                            if xi > 0.0 {
                                *s += gi;
                            }
                        }
                    }
                }
            }
            Op::Affine { input, scale } => {
                if wants(*input) {
                    let acc = slot(grads, *input, g.len());
                    for (s, &gi) in acc.iter_mut().zip(g) {
                        *s += scale * gi;
                    }
                }
            }
            Op::Concat { parts, axis } => {
                let shape = &node.shape;
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let row = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let chunk = nodes[p].shape[*axis] * inner;
                    if wants(p) {
                        let acc = slot(grads, p, outer * chunk);
                        for o in 0..outer {
                            let from = o * row + offset;
                            add_into(&mut acc[o * chunk..(o + 1) * chunk], &g[from..from + chunk]);
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Narrow { input, axis, start } => {
                if !wants(*input) {
                    return;
                }
                let full = &nodes[*input].shape;
                let outer: usize = full[..*axis].iter().product();
                let inner: usize = full[axis + 1..].iter().product();
                let len = node.shape[*axis];
                let acc = slot(grads, *input, numel(full));
                for o in 0..outer {
                    let base = (o * full[*axis] + start) * inner;
                    let chunk = len * inner;
                    add_into(&mut acc[base..base + chunk], &g[o * chunk..(o + 1) * chunk]);
                }
            }
            Op::Reshape(a) => {
                if wants(*a) {
                    add_into(slot(grads, *a, g.len()), g);
                }
            }
            Op::Gather { table, rows } => {
                if !wants(*table) {
                    return;
                }
                let d = nodes[*table].shape[1];
                let acc = slot(grads, *table, nodes[*table].data.len());
                for (r, &id) in rows.iter().enumerate() {
                    add_into(&mut acc[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                }
            }
            Op::Conv1d {
                input,
                weight,
                bias,
                lens,
            } => {
                let sx = &nodes[*input].shape;
                let sw = &nodes[*weight].shape;
                let dims = kernels::ConvDims {
                    n: sx[0],
                    c: sx[1],
                    i: sx[2],
                    k: sw[0],
                    o: sw[2],
                };
                if wants(*input) {
                    let acc = slot(grads, *input, numel(sx));
                    kernels::conv1d_backward_input(g, &nodes[*weight].data, lens, dims, acc);
                }
                if wants(*weight) {
                    let acc = slot(grads, *weight, numel(sw));
                    kernels::conv1d_backward_weight(g, &nodes[*input].data, lens, dims, acc);
                }
                if wants(*bias) {
                    let acc = slot(grads, *bias, dims.o);
                    for s in 0..dims.n {
                        for p in 0..lens[s] {
                            let at = (s * dims.c + p) * dims.o;
                            add_into(acc, &g[at..at + dims.o]);
                        }
                    }
                }
            }
            Op::MaxOverTime { input, argmax } => {
                if wants(*input) {
                    let acc = slot(grads, *input, nodes[*input].data.len());
                    for (&at, &gi) in argmax.iter().zip(g) {
                        acc[at] += gi;
                    }
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    let n = nodes[*a].data.len();
                    slot(grads, *a, n).iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::Mean(a) => {
                if wants(*a) {
                    let n = nodes[*a].data.len();
                    let share = g[0] / n as f64;
                    slot(grads, *a, n).iter_mut().for_each(|s| *s += share);
                }
            }
            Op::Bce { probs, labels, eps } => {
                if !wants(*probs) {
                    return;
                }
                let p = &nodes[*probs].data;
                let scale = g[0] / p.len() as f64;
                let acc = slot(grads, *probs, p.len());
                for ((s, &pi), &y) in acc.iter_mut().zip(p.iter()).zip(labels) {
                    if pi > *eps && pi < 1.0 - eps {
                        *s += scale * (-(y / pi) + (1.0 - y) / (1.0 - pi));
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], index: usize, len: usize) -> &mut [f64] {
    grads[index].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}
