use crate::autodiff::tensor::Tensor;
use crate::error::{GradError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Operation tag recorded per node; parents are stored inline.
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// rows + broadcast row vector
    AddBias(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Softplus(NodeId),
    Log(NodeId),
    Square(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    /// max(x, c); gradient passes where x >= c
    ClampMin(NodeId, f64),
    /// indicator x >= c; gradient is zero everywhere
    GeConst(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// row-wise sum: [r, c] -> [r, 1]
    SumCols(NodeId),
    ConcatCols(Vec<NodeId>),
    /// column range [start, end) of a 2-D parent
    SliceCols {
        src: NodeId,
        start: usize,
        end: usize,
    },
}

struct TapeNode {
    value: Tensor,
    op: Op,
}

/// Define-by-run computation graph. Forward values are computed eagerly as
/// ops are recorded; the tape is rebuilt for every forward pass, so insertion
/// order is a topological order and backward is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

/// Gradients produced by [`Tape::backward`], indexed by `NodeId`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or zeros of the given shape if the node was
    /// unreachable from the root.
    pub fn get_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

fn shape_err(op: &'static str, detail: String) -> GradError {
    GradError::ShapeMismatch { op, detail }
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(TapeNode { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Record an input (leaf) node. Leaves are where gradients land.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Tensor::scalar(value))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_op(shape, out), op)
    }

    fn map(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let out: Vec<f64> = self.value(a).data().iter().map(|&x| f(x)).collect();
        let shape = self.value(a).shape().to_vec();
        self.push(Tensor::from_op(shape, out), op)
    }

    /// Elementwise sum. Also accepts a trailing-dimension row vector on the
    /// right (bias broadcast over rows).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() == self.value(b).shape() {
            return Ok(self.zip_map(a, b, Op::Add(a, b), |x, y| x + y));
        }
        let (rows, cols) = self.value(a).dims2();
        let bs = self.value(b).shape();
        if bs == [cols] {
            let mut out = Vec::with_capacity(rows * cols);
            {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                for r in 0..rows {
                    for c in 0..cols {
                        out.push(av[r * cols + c] + bv[c]);
                    }
                }
            }
            let shape = self.value(a).shape().to_vec();
            return Ok(self.push(Tensor::from_op(shape, out), Op::AddBias(a, b)));
        }
        Err(shape_err(
            "add",
            format!("{:?} vs {:?}", self.value(a).shape(), bs),
        ))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_map(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_map(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("div", a, b)?;
        Ok(self.zip_map(a, b, Op::Div(a, b), |x, y| x / y))
    }

    /// Matrix product of 2-D operands: [m, k] x [k, n] -> [m, n].
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 {
            return Err(shape_err(
                "matmul",
                format!("need 2-D operands, got {:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (k2, n) = (bv.shape()[0], bv.shape()[1]);
        if k != k2 {
            return Err(shape_err(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let out = matmul_raw(av.data(), bv.data(), m, k, n);
        Ok(self.push(Tensor::from_op(vec![m, n], out), Op::Matmul(a, b)))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Softplus(a), softplus)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Square(a), |x| x * x)
    }

    pub fn sin(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Sin(a), f64::sin)
    }

    pub fn cos(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Cos(a), f64::cos)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, Op::AddScalar(a), |x| x + c)
    }

    /// max(x, c) elementwise; sub-threshold entries carry no gradient.
    pub fn clamp_min(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, Op::ClampMin(a, c), |x| x.max(c))
    }

    /// Indicator x >= c (1.0 / 0.0). Gradient defined as zero.
    pub fn ge_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map(a, Op::GeConst(a), |x| if x >= c { 1.0 } else { 0.0 })
    }

    /// Sum of all entries -> scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Mean of all entries -> scalar.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s: f64 = v.data().iter().sum();
        let n = v.len() as f64;
        self.push(Tensor::scalar(s / n), Op::Mean(a))
    }

    /// Row-wise sum: [r, c] -> [r, 1].
    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let (rows, cols) = self.value(a).dims2();
        let data = self.value(a).data();
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            out.push(data[r * cols..(r + 1) * cols].iter().sum());
        }
        self.push(Tensor::from_op(vec![rows, 1], out), Op::SumCols(a))
    }

    /// Concatenate 2-D nodes along columns (equal row counts).
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).dims2().0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2();
            if r != rows {
                return Err(shape_err(
                    "concat",
                    format!("row counts differ: {} vs {}", rows, r),
                ));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                let d = self.value(p).data();
                out.extend_from_slice(&d[r * w..(r + 1) * w]);
            }
        }
        Ok(self.push(
            Tensor::from_op(vec![rows, total], out),
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Column range [start, end) of a 2-D node.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (rows, cols) = self.value(a).dims2();
        if start >= end || end > cols {
            return Err(shape_err(
                "slice",
                format!("range {start}..{end} of {cols} columns"),
            ));
        }
        let w = end - start;
        let data = self.value(a).data();
        let mut out = Vec::with_capacity(rows * w);
        for r in 0..rows {
            out.extend_from_slice(&data[r * cols + start..r * cols + end]);
        }
        Ok(self.push(
            Tensor::from_op(vec![rows, w], out),
            Op::SliceCols { src: a, start, end },
        ))
    }

    /// Reverse sweep from a scalar root. For every node reachable from the
    /// root the accumulated gradient equals the partial derivative of the
    /// root; contributions from multiple paths sum.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if !self.value(root).is_scalar() {
            return Err(GradError::NonScalarRoot {
                shape: self.value(root).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.accumulate_parents(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate_parents(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        let mut send = |id: NodeId, contrib: Vec<f64>| {
            let shape = self.value(id).shape().to_vec();
            match &mut grads[id.0] {
                Some(acc) => {
                    for (a, c) in acc.data_mut().iter_mut().zip(&contrib) {
                        *a += c;
                    }
                }
                slot => *slot = Some(Tensor::from_op(shape, contrib)),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                send(*a, gd.to_vec());
                send(*b, gd.to_vec());
            }
            Op::AddBias(a, b) => {
                send(*a, gd.to_vec());
                let (rows, cols) = self.value(*a).dims2();
                let mut db = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        db[c] += gd[r * cols + c];
                    }
                }
                send(*b, db);
            }
            Op::Sub(a, b) => {
                send(*a, gd.to_vec());
                send(*b, gd.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                send(*a, gd.iter().zip(bv).map(|(g, y)| g * y).collect());
                send(*b, gd.iter().zip(av).map(|(g, x)| g * x).collect());
            }
            Op::Div(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                send(*a, gd.iter().zip(bv).map(|(g, y)| g / y).collect());
                send(
                    *b,
                    gd.iter()
                        .zip(av.iter().zip(bv))
                        .map(|(g, (x, y))| -g * x / (y * y))
                        .collect(),
                );
            }
            Op::Matmul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).dims2().1;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                // dA = dC · B^T
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += gd[i * n + j] * bv[kk * n + j];
                        }
                        da[i * k + kk] = acc;
                    }
                }
                send(*a, da);
                // dB = A^T · dC
                let mut db = vec![0.0; k * n];
                for i in 0..m {
                    for kk in 0..k {
                        let aik = av[i * k + kk];
                        if aik == 0.0 {
                            continue;
                        }
                        let row = &gd[i * n..(i + 1) * n];
                        let dst = &mut db[kk * n..(kk + 1) * n];
                        for j in 0..n {
                            dst[j] += aik * row[j];
                        }
                    }
                }
                send(*b, db);
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                send(*a, gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect());
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                send(*a, gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect());
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                send(
                    *a,
                    gd.iter()
                        .zip(x)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect(),
                );
            }
            Op::Softplus(a) => {
                let x = self.value(*a).data();
                send(*a, gd.iter().zip(x).map(|(g, x)| g * sigmoid(*x)).collect());
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                send(*a, gd.iter().zip(x).map(|(g, x)| g / x).collect());
            }
            Op::Square(a) => {
                let x = self.value(*a).data();
                send(*a, gd.iter().zip(x).map(|(g, x)| 2.0 * g * x).collect());
            }
            Op::Sin(a) => {
                let x = self.value(*a).data();
                send(*a, gd.iter().zip(x).map(|(g, x)| g * x.cos()).collect());
            }
            Op::Cos(a) => {
                let x = self.value(*a).data();
                send(*a, gd.iter().zip(x).map(|(g, x)| -g * x.sin()).collect());
            }
            Op::Scale(a, c) => {
                send(*a, gd.iter().map(|g| g * c).collect());
            }
            Op::AddScalar(a) => {
                send(*a, gd.to_vec());
            }
            Op::ClampMin(a, c) => {
                let x = self.value(*a).data();
                send(
                    *a,
                    gd.iter()
                        .zip(x)
                        .map(|(g, x)| if *x >= *c { *g } else { 0.0 })
                        .collect(),
                );
            }
            Op::GeConst(a) => {
                send(*a, vec![0.0; self.value(*a).len()]);
            }
            Op::Sum(a) => {
                send(*a, vec![gd[0]; self.value(*a).len()]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                send(*a, vec![gd[0] / n as f64; n]);
            }
            Op::SumCols(a) => {
                let (rows, cols) = self.value(*a).dims2();
                let mut da = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    da.extend(std::iter::repeat(gd[r]).take(cols));
                }
                send(*a, da);
            }
            Op::ConcatCols(parts) => {
                let rows = self.value(parts[0]).dims2().0;
                let total = node.value.dims2().1;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).dims2().1;
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&gd[r * total + offset..r * total + offset + w]);
                    }
                    send(p, dp);
                    offset += w;
                }
            }
            Op::SliceCols { src, start, end } => {
                let (rows, cols) = self.value(*src).dims2();
                let w = end - start;
                let mut ds = vec![0.0; rows * cols];
                for r in 0..rows {
                    ds[r * cols + start..r * cols + end].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                send(*src, ds);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x), overflow-safe.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_elementwise() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let b = t.leaf(Tensor::vector(vec![3.0, 4.0]).unwrap());
        let c = t.add(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn tanh_of_zero_is_zero() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[3]));
        let y = t.tanh(a);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn product_rule() {
        let mut t = Tape::new();
        let x = t.scalar(3.0);
        let y = t.scalar(5.0);
        let p = t.mul(x, y).unwrap();
        let g = t.backward(p).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 5.0);
        assert_eq!(g.get(y).unwrap().item(), 3.0);
    }

    #[test]
    fn tanh_grad_at_zero_is_one() {
        let mut t = Tape::new();
        let x = t.scalar(0.0);
        let y = t.tanh(x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn shared_subexpression_accumulates_k_fold() {
        // root = x + x + x reaches x via 3 paths
        let mut t = Tape::new();
        let x = t.scalar(2.0);
        let s1 = t.add(x, x).unwrap();
        let s2 = t.add(s1, x).unwrap();
        let g = t.backward(s2).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 3.0);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let y = t.tanh(x);
        assert!(matches!(
            t.backward(y),
            Err(GradError::NonScalarRoot { .. })
        ));
    }

    #[test]
    fn matmul_shape_error_names_op_and_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = t.leaf(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("matmul") && msg.contains("[2, 3]") && msg.contains("[2, 2]"));
    }

    #[test]
    fn slice_concat_roundtrip_grad() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let left = t.slice_cols(a, 0, 1).unwrap();
        let right = t.slice_cols(a, 1, 3).unwrap();
        let back = t.concat_cols(&[left, right]).unwrap();
        assert_eq!(t.value(back).data(), t.value(a).data());
        let s = t.sum(back);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn clamp_min_blocks_gradient_below_threshold() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 5.0]).unwrap());
        let y = t.clamp_min(x, 3.0);
        assert_eq!(t.value(y).data(), &[3.0, 5.0]);
        let s = t.sum(y);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }
}
