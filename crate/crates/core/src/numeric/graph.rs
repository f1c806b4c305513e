//! Recorded matrix computations with reverse-mode differentiation.
//!
//! Every primitive is appended to a [`DiffGraph`] in evaluation order and its
//! value is computed eagerly. [`DiffGraph::grad`] walks the graph backwards and
//! *records* each vector-Jacobian product as new nodes, so a gradient is itself
//! a node that can be differentiated again. That is all the gradient penalty
//! needs: the input-gradient of the critic is a node, its norm is a node, and
//! the parameter gradient of the penalty is one more backward pass.
//!
//! Two backward-only primitives (`sigmoid-grad`, `row-norm-grad`) have no rule
//! of their own; differentiating through them fails with
//! [`Error::Capability`].

use crate::numeric::Matrix;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// `a + bias`, bias `1×c` broadcast over rows.
    AddBias(NodeId, NodeId),
    /// Column sums, `n×c → 1×c`.
    SumRows(NodeId),
    /// `1×c → n×c`.
    RepeatRows(NodeId, usize),
    /// Row sums, `n×c → n×1`.
    SumCols(NodeId),
    /// `n×1 → n×c`.
    RepeatCols(NodeId, usize),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Square(NodeId),
    LeakyRelu(NodeId, f64),
    /// `grad ⊙ leaky'(pre)`; the mask is piecewise constant in `pre`.
    LeakyReluGrad {
        grad: NodeId,
        pre: NodeId,
        slope: f64,
    },
    Sigmoid(NodeId),
    SigmoidGrad {
        grad: NodeId,
        out: NodeId,
    },
    Sum(NodeId),
    Mean(NodeId),
    /// `1×1 → r×c`.
    Broadcast(NodeId, usize, usize),
    /// Row-wise Euclidean norm, `n×c → n×1`.
    RowNorm(NodeId),
    RowNormGrad {
        grad: NodeId,
        input: NodeId,
        norm: NodeId,
    },
    ConcatCols(NodeId, NodeId),
    SliceCols(NodeId, usize, usize),
    PadCols(NodeId, usize, usize),
}

impl Op {
    fn operands(&self) -> [Option<NodeId>; 3] {
        use Op::*;
        match *self {
            Leaf => [None, None, None],
            Transpose(a) | SumRows(a) | RepeatRows(a, _) | SumCols(a) | RepeatCols(a, _)
            | Scale(a, _) | AddScalar(a, _) | Square(a) | LeakyRelu(a, _) | Sigmoid(a)
            | Sum(a) | Mean(a) | Broadcast(a, _, _) | RowNorm(a) | SliceCols(a, _, _)
            | PadCols(a, _, _) => [Some(a), None, None],
            MatMul(a, b) | AddBias(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b)
            | ConcatCols(a, b) => [Some(a), Some(b), None],
            LeakyReluGrad { grad, pre, .. } => [Some(grad), Some(pre), None],
            SigmoidGrad { grad, out } => [Some(grad), Some(out), None],
            RowNormGrad { grad, input, norm } => [Some(grad), Some(input), Some(norm)],
        }
    }

    fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Leaf => "leaf",
            MatMul(..) => "matmul",
            Transpose(..) => "transpose",
            AddBias(..) => "add-bias",
            SumRows(..) => "sum-rows",
            RepeatRows(..) => "repeat-rows",
            SumCols(..) => "sum-cols",
            RepeatCols(..) => "repeat-cols",
            Add(..) => "add",
            Sub(..) => "subtract",
            Mul(..) => "elementwise-multiply",
            Scale(..) => "scale",
            AddScalar(..) => "add-scalar",
            Square(..) => "square",
            LeakyRelu(..) => "leaky-relu",
            LeakyReluGrad { .. } => "leaky-relu-grad",
            Sigmoid(..) => "sigmoid",
            SigmoidGrad { .. } => "sigmoid-grad",
            Sum(..) => "sum",
            Mean(..) => "mean",
            Broadcast(..) => "broadcast",
            RowNorm(..) => "l2-norm",
            RowNormGrad { .. } => "l2-norm-grad",
            ConcatCols(..) => "concat",
            SliceCols(..) => "slice",
            PadCols(..) => "pad",
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_relu_slope(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Append-only record of primitive matrix operations.
#[derive(Clone, Debug, Default)]
pub struct DiffGraph {
    nodes: Vec<Node>,
}

impl DiffGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// Name of the primitive that produced `id`.
    pub fn primitive(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Overwrites a leaf value. Call [`DiffGraph::replay`] afterwards to refresh
    /// dependent nodes.
    pub fn set_leaf(&mut self, id: NodeId, value: Matrix) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::Contract(format!("node {} is not a leaf", id.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::Shape(format!(
                "leaf {} is {:?}, replacement is {:?}",
                id.0,
                node.value.shape(),
                value.shape()
            )));
        }
        node.value = value;
        Ok(())
    }

    /// Re-evaluates every non-leaf node in recording order.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            self.nodes[i].value = self.eval(&op)?;
        }
        Ok(())
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let value = self.eval(&op)?;
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn eval(&self, op: &Op) -> Result<Matrix> {
        let v = |id: NodeId| &self.nodes[id.0].value;
        Ok(match *op {
            Op::Leaf => unreachable!("leaves are never evaluated"),
            Op::MatMul(a, b) => v(a).matmul(v(b))?,
            Op::Transpose(a) => v(a).transpose(),
            Op::AddBias(a, b) => v(a).add_row(v(b))?,
            Op::SumRows(a) => v(a).sum_rows(),
            Op::RepeatRows(a, n) => {
                if v(a).rows() != 1 {
                    return Err(Error::Shape("repeat-rows expects a single row".into()));
                }
                v(a).repeat_rows(n)
            }
            Op::SumCols(a) => v(a).sum_cols(),
            Op::RepeatCols(a, n) => {
                if v(a).cols() != 1 {
                    return Err(Error::Shape("repeat-cols expects a single column".into()));
                }
                v(a).repeat_cols(n)
            }
            Op::Add(a, b) => v(a).add(v(b))?,
            Op::Sub(a, b) => v(a).sub(v(b))?,
            Op::Mul(a, b) => v(a).hadamard(v(b))?,
            Op::Scale(a, s) => v(a).scale(s),
            Op::AddScalar(a, s) => v(a).map(|x| x + s),
            Op::Square(a) => v(a).map(|x| x * x),
            Op::LeakyRelu(a, slope) => v(a).map(|x| leaky_relu(x, slope)),
            Op::LeakyReluGrad { grad, pre, slope } => {
                v(grad).zip_map(v(pre), "leaky-relu-grad", |g, p| g * leaky_relu_slope(p, slope))?
            }
            Op::Sigmoid(a) => v(a).map(sigmoid),
            Op::SigmoidGrad { grad, out } => {
                v(grad).zip_map(v(out), "sigmoid-grad", |g, s| g * s * (1.0 - s))?
            }
            Op::Sum(a) => Matrix::scalar(v(a).sum()),
            Op::Mean(a) => {
                if v(a).is_empty() {
                    return Err(Error::Shape("mean of an empty matrix".into()));
                }
                Matrix::scalar(v(a).mean())
            }
            Op::Broadcast(a, r, c) => {
                if v(a).shape() != (1, 1) {
                    return Err(Error::Shape("broadcast expects a 1x1 value".into()));
                }
                Matrix::filled(r, c, v(a).item())
            }
            Op::RowNorm(a) => v(a).row_norms(),
            Op::RowNormGrad { grad, input, norm } => {
                let (g, x, n) = (v(grad), v(input), v(norm));
                if g.shape() != (x.rows(), 1) || n.shape() != g.shape() {
                    return Err(Error::Shape("row-norm-grad operand shapes".into()));
                }
                let mut out = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let nr = n.get(r, 0);
                    if nr > 0.0 {
                        let s = g.get(r, 0) / nr;
                        for (o, &xv) in out.row_mut(r).iter_mut().zip(x.row(r)) {
                            *o = s * xv;
                        }
                    }
                }
                out
            }
            Op::ConcatCols(a, b) => v(a).concat_cols(v(b))?,
            Op::SliceCols(a, s, e) => {
                if s > e || e > v(a).cols() {
                    return Err(Error::Shape(format!(
                        "slice {s}..{e} of a {}-column matrix",
                        v(a).cols()
                    )));
                }
                v(a).slice_cols(s, e)
            }
            Op::PadCols(a, s, total) => {
                if s + v(a).cols() > total {
                    return Err(Error::Shape("pad exceeds target width".into()));
                }
                v(a).pad_cols(s, total)
            }
        })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }

    /// `x·W + b`, the affine map of one dense layer.
    pub fn affine(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, weight)?;
        self.push(Op::AddBias(xw, bias))
    }

    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        self.push(Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.push(Op::AddScalar(a, s))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> Result<NodeId> {
        self.push(Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(a))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }

    pub fn row_norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowNorm(a))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::ConcatCols(a, b))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        self.push(Op::SliceCols(a, start, end))
    }

    /// Gradient of the scalar `output` with respect to each node in `wrt`,
    /// returned as recorded nodes.
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if self.shape(output) != (1, 1) {
            return Err(Error::Contract(format!(
                "gradient requested of a non-scalar node of shape {:?}",
                self.shape(output)
            )));
        }
        let seed = self.leaf(Matrix::scalar(1.0));
        self.backward(output, seed, wrt)
    }

    /// Gradient of `Σ_rows output` with respect to `input`, recorded so that it
    /// can be differentiated again. With a per-row scalar output whose rows do
    /// not interact, row `i` of the result is `∇_{input_i} output_i`.
    pub fn input_gradient(&mut self, output: NodeId, input: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.shape(output);
        if cols != 1 {
            return Err(Error::Contract(format!(
                "input gradient needs one scalar per row, output is {rows}x{cols}"
            )));
        }
        let seed = self.leaf(Matrix::filled(rows, 1, 1.0));
        Ok(self.backward(output, seed, &[input])?[0])
    }

    fn backward(&mut self, output: NodeId, seed: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let last = output.0;
        let mut depends = vec![false; last + 1];
        for w in wrt {
            if w.0 <= last {
                depends[w.0] = true;
            }
        }
        for i in 0..=last {
            if !depends[i] {
                depends[i] = self.nodes[i]
                    .op
                    .operands()
                    .iter()
                    .flatten()
                    .any(|o| depends[o.0]);
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; last + 1];
        adjoint[last] = Some(seed);
        let mut missing: Vec<&'static str> = Vec::new();

        for i in (0..=last).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !depends[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let contributions = match self.vjp(NodeId(i), &op, g, &depends)? {
                Some(c) => c,
                None => {
                    if !missing.contains(&op.name()) {
                        missing.push(op.name());
                    }
                    continue;
                }
            };
            for (operand, grad) in contributions {
                adjoint[operand.0] = Some(match adjoint[operand.0] {
                    None => grad,
                    Some(prev) => self.add(prev, grad)?,
                });
            }
        }
        if !missing.is_empty() {
            return Err(Error::Capability(missing));
        }

        wrt.iter()
            .map(|w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let (r, c) = self.shape(*w);
                    Ok(self.leaf(Matrix::zeros(r, c)))
                }
            })
            .collect()
    }

    /// Vector-Jacobian products of one node, restricted to operands that
    /// depend on the differentiation targets. `None` marks a primitive with no
    /// registered rule.
    #[allow(clippy::type_complexity)]
    fn vjp(
        &mut self,
        this: NodeId,
        op: &Op,
        g: NodeId,
        depends: &[bool],
    ) -> Result<Option<Vec<(NodeId, NodeId)>>> {
        let live = |id: NodeId| depends[id.0];
        let mut out = Vec::with_capacity(2);
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if live(a) {
                    let bt = self.transpose(b)?;
                    out.push((a, self.matmul(g, bt)?));
                }
                if live(b) {
                    let at = self.transpose(a)?;
                    out.push((b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => out.push((a, self.transpose(g)?)),
            Op::AddBias(a, b) => {
                if live(a) {
                    out.push((a, g));
                }
                if live(b) {
                    out.push((b, self.push(Op::SumRows(g))?));
                }
            }
            Op::SumRows(a) => {
                let n = self.shape(a).0;
                out.push((a, self.push(Op::RepeatRows(g, n))?));
            }
            Op::RepeatRows(a, _) => out.push((a, self.push(Op::SumRows(g))?)),
            Op::SumCols(a) => {
                let c = self.shape(a).1;
                out.push((a, self.push(Op::RepeatCols(g, c))?));
            }
            Op::RepeatCols(a, _) => out.push((a, self.push(Op::SumCols(g))?)),
            Op::Add(a, b) => {
                if live(a) {
                    out.push((a, g));
                }
                if live(b) {
                    out.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if live(a) {
                    out.push((a, g));
                }
                if live(b) {
                    out.push((b, self.scale(g, -1.0)?));
                }
            }
            Op::Mul(a, b) => {
                if live(a) {
                    out.push((a, self.mul(g, b)?));
                }
                if live(b) {
                    out.push((b, self.mul(g, a)?));
                }
            }
            Op::Scale(a, s) => out.push((a, self.scale(g, s)?)),
            Op::AddScalar(a, _) => out.push((a, g)),
            Op::Square(a) => {
                let ga = self.mul(g, a)?;
                out.push((a, self.scale(ga, 2.0)?));
            }
            Op::LeakyRelu(a, slope) => {
                out.push((a, self.push(Op::LeakyReluGrad { grad: g, pre: a, slope })?));
            }
            // The mask depends on `pre` only through its sign, so the
            // derivative with respect to `pre` vanishes almost everywhere.
            Op::LeakyReluGrad { grad, pre, slope } => {
                if live(grad) {
                    out.push((grad, self.push(Op::LeakyReluGrad { grad: g, pre, slope })?));
                }
            }
            Op::Sigmoid(a) => {
                out.push((a, self.push(Op::SigmoidGrad { grad: g, out: this })?));
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(a);
                out.push((a, self.push(Op::Broadcast(g, r, c))?));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(a);
                let scaled = self.scale(g, 1.0 / (r * c) as f64)?;
                out.push((a, self.push(Op::Broadcast(scaled, r, c))?));
            }
            Op::Broadcast(a, _, _) => out.push((a, self.sum(g)?)),
            Op::RowNorm(a) => {
                out.push((
                    a,
                    self.push(Op::RowNormGrad {
                        grad: g,
                        input: a,
                        norm: this,
                    })?,
                ));
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(a).1;
                let cb = self.shape(b).1;
                if live(a) {
                    out.push((a, self.slice_cols(g, 0, ca)?));
                }
                if live(b) {
                    out.push((b, self.slice_cols(g, ca, ca + cb)?));
                }
            }
            Op::SliceCols(a, s, _) => {
                let total = self.shape(a).1;
                out.push((a, self.push(Op::PadCols(g, s, total))?));
            }
            Op::PadCols(a, s, _) => {
                let c = self.shape(a).1;
                out.push((a, self.slice_cols(g, s, s + c)?));
            }
            Op::SigmoidGrad { .. } | Op::RowNormGrad { .. } => return Ok(None),
        }
        Ok(Some(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn linear_map_gradient_is_outer_product_mean() {
        // loss = mean(x·W), x fixed 2×3, W 3×2
        let x = m(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 4.0]]);
        let w = m(&[vec![0.1, 0.2], vec![0.3, -0.4], vec![0.5, 0.6]]);
        let mut g = DiffGraph::new();
        let xn = g.leaf(x.clone());
        let wn = g.leaf(w);
        let y = g.matmul(xn, wn).unwrap();
        let loss = g.mean(y).unwrap();
        let grad = g.grad(loss, &[wn]).unwrap()[0];
        // d mean / dW_kj = Σ_i x_ik / (n·m)
        let gv = g.value(grad);
        for k in 0..3 {
            let col_sum: f64 = (0..2).map(|i| x.get(i, k)).sum();
            for j in 0..2 {
                assert!((gv.get(k, j) - col_sum / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = DiffGraph::new();
        let a = g.leaf(Matrix::zeros(2, 2));
        assert!(matches!(g.grad(a, &[a]), Err(Error::Contract(_))));
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_value() {
        let w = m(&[vec![0.3, -1.2], vec![2.0, 0.0]]);
        let mut g = DiffGraph::new();
        let wn = g.leaf(w.clone());
        let sq = g.square(wn).unwrap();
        let loss = g.sum(sq).unwrap();
        let grad = g.grad(loss, &[wn]).unwrap()[0];
        assert_eq!(g.value(grad), &w.scale(2.0));
    }

    #[test]
    fn second_order_through_sigmoid_is_a_capability_error() {
        let mut g = DiffGraph::new();
        let x = g.leaf(Matrix::column(&[0.3, -0.2]));
        let w = g.leaf(Matrix::scalar(1.5));
        let xw = g.matmul(x, w).unwrap();
        let y = g.sigmoid(xw).unwrap();
        let gx = g.input_gradient(y, x).unwrap();
        let s = g.sum(gx).unwrap();
        match g.grad(s, &[w]) {
            Err(Error::Capability(list)) => assert_eq!(list, vec!["sigmoid-grad"]),
            other => panic!("expected capability error, got {other:?}"),
        }
    }

    #[test]
    fn unrelated_target_gets_zero_gradient() {
        let mut g = DiffGraph::new();
        let a = g.leaf(Matrix::scalar(2.0));
        let b = g.leaf(Matrix::filled(2, 3, 1.0));
        let s = g.square(a).unwrap();
        let grads = g.grad(s, &[a, b]).unwrap();
        assert_eq!(g.value(grads[0]).item(), 4.0);
        assert_eq!(g.value(grads[1]), &Matrix::zeros(2, 3));
    }

    #[test]
    fn replay_tracks_leaf_updates() {
        let mut g = DiffGraph::new();
        let a = g.leaf(Matrix::scalar(3.0));
        let s = g.square(a).unwrap();
        let grad = g.grad(s, &[a]).unwrap()[0];
        g.set_leaf(a, Matrix::scalar(-2.0)).unwrap();
        g.replay().unwrap();
        assert_eq!(g.value(s).item(), 4.0);
        assert_eq!(g.value(grad).item(), -4.0);
    }
}
