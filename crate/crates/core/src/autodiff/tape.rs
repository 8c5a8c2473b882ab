use super::tensor::{matmul_nt, matmul_raw, matmul_tn};
use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    // saves 1/sigma per row; normalized output is the node value
    LayerNorm(NodeId, Vec<f64>),
    Softmax(NodeId),
    Gather(NodeId, Vec<usize>),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize, usize),
    Scale(NodeId, f64),
    Shift(NodeId),
    Dropout(NodeId, Tensor),
    Sum(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so recording order is a
/// topological order and [`Tape::backward`] simply walks it in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every recorded node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `node`; zeros when nothing flowed into it.
    pub fn get(&self, node: NodeId) -> Tensor {
        match &self.grads[node.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[node.0]),
        }
    }

    pub fn take(&mut self, node: NodeId) -> Option<Tensor> {
        self.grads[node.0].take()
    }
}

fn mismatch(op: &'static str, got: &[usize], expected: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        got: got.to_vec(),
        expected: expected.to_vec(),
    }
}

/// True when `b` broadcasts over the leading dims of `a`.
fn suffix_of(b: &[usize], a: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    pub fn requires_grad(&self, node: NodeId) -> bool {
        self.nodes[node.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(mismatch("matmul", sb, &[sa.get(1).copied().unwrap_or(0), sb.get(1).copied().unwrap_or(0)]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        if v.rank() != 2 {
            return Err(mismatch("transpose", v.shape(), &[0, 0]));
        }
        let value = v.transpose2();
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    fn broadcast_binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, AutodiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if !suffix_of(vb.shape(), va.shape()) {
            return Err(mismatch(name, vb.shape(), va.shape()));
        }
        let inner = vb.len().max(1);
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vb.data()[i % inner]))
            .collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    /// `a + b`, with `b` broadcast over the leading dims of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let value = self.broadcast_binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(mismatch("sub", self.value(b).shape(), self.value(a).shape()));
        }
        let value = self.broadcast_binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product, `b` broadcast over the leading dims of `a`.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let value = self.broadcast_binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    /// Normalizes each row of the last dim to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        let d = v.last_dim();
        if d == 0 {
            return Err(mismatch("layer_norm", v.shape(), &[1]));
        }
        let mut out = v.clone();
        let mut inv_sigma = Vec::with_capacity(v.outer());
        for r in 0..v.outer() {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
            inv_sigma.push(inv);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::LayerNorm(a, inv_sigma), rg))
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let mut out = self.value(a).clone();
        for r in 0..out.outer() {
            let row = out.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                z += *x;
            }
            row.iter_mut().for_each(|x| *x /= z);
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::Softmax(a), rg)
    }

    /// Row lookup into a 2-D table; also serves as embedding lookup.
    pub fn gather(&mut self, table: NodeId, rows: &[usize]) -> Result<NodeId, AutodiffError> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(mismatch("gather", t.shape(), &[0, 0]));
        }
        let (nrows, d) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= nrows {
                return Err(AutodiffError::IndexOutOfRange { index: r, len: nrows });
            }
            data.extend_from_slice(t.row(r));
        }
        let value = Tensor::new(vec![rows.len(), d], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(value, Op::Gather(table, rows.to_vec()), rg))
    }

    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId, AutodiffError> {
        self.gather(table, ids)
    }

    /// Concatenation along the last dim.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let first = self.value(parts[0]).shape().to_vec();
        let lead = &first[..first.len().saturating_sub(1)];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(mismatch("concat", s, &first));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let outer = self.value(parts[0]).outer();
        let mut data = Vec::with_capacity(outer * total);
        for r in 0..outer {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end` of the last dim.
    pub fn slice(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        let d = v.last_dim();
        if start >= end || end > d || v.rank() == 0 {
            return Err(mismatch("slice", v.shape(), &[start, end]));
        }
        let mut data = Vec::with_capacity(v.outer() * (end - start));
        for r in 0..v.outer() {
            data.extend_from_slice(&v.row(r)[start..end]);
        }
        let mut shape = v.shape().to_vec();
        *shape.last_mut().unwrap() = end - start;
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Slice(a, start, end), rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut value = self.value(a).clone();
        value.scale_in_place(c);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// Adds the constant `c` to every element.
    pub fn shift(&mut self, a: NodeId, c: f64) -> NodeId {
        let mut value = self.value(a).clone();
        value.data_mut().iter_mut().for_each(|x| *x += c);
        let rg = self.rg(&[a]);
        self.push(value, Op::Shift(a), rg)
    }

    /// Multiplies by a caller-supplied mask (typically 0 or `1/(1-p)`).
    pub fn dropout(&mut self, a: NodeId, mask: Tensor) -> Result<NodeId, AutodiffError> {
        let v = self.value(a);
        if v.shape() != mask.shape() {
            return Err(mismatch("dropout", mask.shape(), v.shape()));
        }
        let data = v.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
        let value = Tensor::new(v.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Dropout(a, mask), rg))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Sign pattern of every ReLU input; changes between two evaluations mark
    /// a crossing of a non-differentiable point.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                out.extend(self.nodes[a.0].value.data().iter().map(|&x| x > 0.0));
            }
        }
        out
    }

    /// Backpropagates from the scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, AutodiffError> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let shape = node.value.shape().to_vec();
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    if self.requires_grad(*a) {
                        let ga = matmul_nt(g.data(), vb.data(), m, n, k);
                        acc(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    }
                    if self.requires_grad(*b) {
                        let gb = matmul_tn(va.data(), g.data(), m, k, n);
                        acc(&mut grads, *b, Tensor::new(vec![k, n], gb)?);
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose2()),
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    if self.requires_grad(*b) {
                        let vb = self.value(*b);
                        let inner = vb.len().max(1);
                        let mut gb = vec![0.0; vb.len()];
                        for (i, x) in g.data().iter().enumerate() {
                            gb[i % inner] += sign * x;
                        }
                        acc(&mut grads, *b, Tensor::new(vb.shape().to_vec(), gb)?);
                    }
                    if self.requires_grad(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let inner = vb.len().max(1);
                    if self.requires_grad(*b) {
                        let mut gb = vec![0.0; vb.len()];
                        for (i, (x, av)) in g.data().iter().zip(va.data()).enumerate() {
                            gb[i % inner] += x * av;
                        }
                        acc(&mut grads, *b, Tensor::new(vb.shape().to_vec(), gb)?);
                    }
                    if self.requires_grad(*a) {
                        let ga = g
                            .data()
                            .iter()
                            .enumerate()
                            .map(|(i, x)| x * vb.data()[i % inner])
                            .collect();
                        acc(&mut grads, *a, Tensor::new(shape, ga)?);
                    }
                }
                Op::Relu(a) => {
                    let va = self.value(*a);
                    let ga = g
                        .data()
                        .iter()
                        .zip(va.data())
                        .map(|(x, v)| if *v > 0.0 { *x } else { 0.0 })
                        .collect();
                    acc(&mut grads, *a, Tensor::new(shape, ga)?);
                }
                Op::LayerNorm(a, inv_sigma) => {
                    let y = &node.value;
                    let d = y.last_dim();
                    let mut ga = g.clone();
                    for (r, inv) in inv_sigma.iter().enumerate() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let mean_g = gr.iter().sum::<f64>() / d as f64;
                        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for ((o, gv), yv) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o = inv * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = g.clone();
                    for r in 0..y.outer() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        for ((o, gv), yv) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o = yv * (gv - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(table, rows) => {
                    let mut gt = Tensor::zeros(self.value(*table).shape());
                    for (k, &r) in rows.iter().enumerate() {
                        for (o, x) in gt.row_mut(r).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let vp = self.value(p);
                        let w = vp.last_dim();
                        if self.requires_grad(p) {
                            let mut gp = Vec::with_capacity(vp.len());
                            for r in 0..g.outer() {
                                gp.extend_from_slice(&g.row(r)[offset..offset + w]);
                            }
                            acc(&mut grads, p, Tensor::new(vp.shape().to_vec(), gp)?);
                        }
                        offset += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let mut ga = Tensor::zeros(self.value(*a).shape());
                    for r in 0..g.outer() {
                        ga.row_mut(r)[*start..*end].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, c) => {
                    let mut ga = g;
                    ga.scale_in_place(*c);
                    acc(&mut grads, *a, ga);
                }
                Op::Shift(a) => acc(&mut grads, *a, g),
                Op::Dropout(a, mask) => {
                    let ga = g.data().iter().zip(mask.data()).map(|(x, m)| x * m).collect();
                    acc(&mut grads, *a, Tensor::new(shape, ga)?);
                }
                Op::Sum(a) => {
                    let ga = Tensor::filled(self.value(*a).shape(), g.item());
                    acc(&mut grads, *a, ga);
                }
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}
