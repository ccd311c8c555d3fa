//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! A [`Tape`] is a Wengert list: every operation appends a node holding the
//! op, its input node ids, and the eagerly computed value. [`Tape::grad_nodes`]
//! walks the list in reverse and emits the adjoint of each requested node *as
//! new tape nodes*, so gradients are themselves differentiable. The WGAN-GP
//! penalty relies on this: the critic's input gradient is built once, turned
//! into a penalty scalar, and differentiated again with the same machinery.

use crate::error::{PiwadError, Result};

/// Handle to a node on a [`Tape`]. Only valid for the tape that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    /// Leaf value (input data, parameter binding, or constant).
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    /// Elementwise quotient.
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// Broadcast a 1x1 node over a matrix: `out = scalar * m`.
    Scale(NodeId, NodeId),
    /// Broadcast-add a 1x1 node to every entry: `out = m + scalar`.
    AddScalar(NodeId, NodeId),
    /// Broadcast-add a 1xD row to every row of an NxD matrix.
    AddRow(NodeId, NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Sqrt(NodeId),
    /// Full reduction to 1x1.
    Sum(NodeId),
    /// Full mean to 1x1.
    Mean(NodeId),
    /// NxD -> Nx1 row sums.
    RowSum(NodeId),
    /// NxD -> 1xD column sums.
    ColSum(NodeId),
    /// Row-wise softmax (max-shifted for stability).
    RowSoftmax(NodeId),
    /// L2 norm of each row: NxD -> Nx1, `sqrt(sum(x^2) + eps)`.
    RowNorm(NodeId),
    MulConst(NodeId, f64),
    // The shift is applied eagerly and never needed by the backward pass;
    // it is kept so Debug dumps show the full operation.
    AddConst(NodeId, #[allow(dead_code)] f64),
    Reshape(NodeId),
}

// Keeps the row-norm derivative finite at the origin without visibly
// biasing norms of magnitude ~1.
const ROW_NORM_EPS: f64 = 1e-24;

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
}

/// Wengert list of primitive operations with eagerly evaluated values.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Shape of a node as (rows, cols).
    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    /// Borrow the value of a node (row-major).
    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id.0];
        assert!(
            n.rows == 1 && n.cols == 1,
            "scalar_value on a {}x{} node",
            n.rows,
            n.cols
        );
        n.value[0]
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> NodeId {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            op,
            rows,
            cols,
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf holding arbitrary row-major data.
    pub fn leaf(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> NodeId {
        assert_eq!(
            data.len(),
            rows * cols,
            "leaf data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        self.push(Op::Leaf, rows, cols, data)
    }

    /// 1x1 leaf.
    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.push(Op::Leaf, 1, 1, vec![v])
    }

    /// Leaf filled with a constant.
    pub fn fill(&mut self, rows: usize, cols: usize, v: f64) -> NodeId {
        self.push(Op::Leaf, rows, cols, vec![v; rows * cols])
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> (usize, usize) {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        assert!(
            ar == br && ac == bc,
            "{what}: shape mismatch {ar}x{ac} vs {br}x{bc}"
        );
        (ar, ac)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.binary_same_shape(a, b, "add");
        let v = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x + y);
        self.push(Op::Add(a, b), r, c, v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.binary_same_shape(a, b, "sub");
        let v = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x - y);
        self.push(Op::Sub(a, b), r, c, v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.binary_same_shape(a, b, "mul");
        let v = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x * y);
        self.push(Op::Mul(a, b), r, c, v)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.binary_same_shape(a, b, "div");
        let v = zip_map(&self.nodes[a.0].value, &self.nodes[b.0].value, |x, y| x / y);
        self.push(Op::Div(a, b), r, c, v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = vec![0.0; m * n];
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        // i-k-j loop order keeps the inner loop contiguous in both operands.
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            for (kk, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[kk * n..(kk + 1) * n];
                for (o, &bkj) in orow.iter_mut().zip(brow.iter()) {
                    *o += aik * bkj;
                }
            }
        }
        self.push(Op::MatMul(a, b), m, n, out)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av[i * c + j];
            }
        }
        self.push(Op::Transpose(a), c, r, out)
    }

    /// `scalar * m`, where `scalar` is a 1x1 node.
    pub fn scale(&mut self, scalar: NodeId, m: NodeId) -> NodeId {
        let s = self.scalar_value(scalar);
        let (r, c) = self.shape(m);
        let v = self.nodes[m.0].value.iter().map(|x| s * x).collect();
        self.push(Op::Scale(scalar, m), r, c, v)
    }

    /// `m + scalar` broadcast, where `scalar` is a 1x1 node.
    pub fn add_scalar(&mut self, m: NodeId, scalar: NodeId) -> NodeId {
        let s = self.scalar_value(scalar);
        let (r, c) = self.shape(m);
        let v = self.nodes[m.0].value.iter().map(|x| x + s).collect();
        self.push(Op::AddScalar(m, scalar), r, c, v)
    }

    /// `m + row` with `row` a 1xD node broadcast over the N rows of `m`.
    pub fn add_row(&mut self, m: NodeId, row: NodeId) -> NodeId {
        let (r, c) = self.shape(m);
        let (rr, rc) = self.shape(row);
        assert!(
            rr == 1 && rc == c,
            "add_row: row is {rr}x{rc}, matrix is {r}x{c}"
        );
        let mv = &self.nodes[m.0].value;
        let rv = &self.nodes[row.0].value;
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(mv[i * c + j] + rv[j]);
            }
        }
        self.push(Op::AddRow(m, row), r, c, out)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        // Derivative at exactly 0 is taken as 0 (subgradient choice); the
        // backward mask below uses a strict comparison for the same reason.
        let v = self.nodes[a.0].value.iter().map(|&x| x.max(0.0)).collect();
        self.push(Op::Relu(a), r, c, v)
    }

    /// Leaky rectifier: `x` for positive inputs, `slope * x` otherwise
    /// (the non-positive branch applies at exactly 0, matching the relu
    /// subgradient convention).
    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0]
            .value
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        self.push(Op::LeakyRelu(a, slope), r, c, v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(Op::Tanh(a), r, c, v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x.exp()).collect();
        self.push(Op::Exp(a), r, c, v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x.ln()).collect();
        self.push(Op::Log(a), r, c, v)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x.sqrt()).collect();
        self.push(Op::Sqrt(a), r, c, v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v: f64 = self.nodes[a.0].value.iter().sum();
        self.push(Op::Sum(a), 1, 1, vec![v])
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.nodes[a.0].value.len().max(1);
        let v: f64 = self.nodes[a.0].value.iter().sum::<f64>() / n as f64;
        self.push(Op::Mean(a), 1, 1, vec![v])
    }

    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let v = (0..r)
            .map(|i| av[i * c..(i + 1) * c].iter().sum())
            .collect();
        self.push(Op::RowSum(a), r, 1, v)
    }

    pub fn col_sum(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut v = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                v[j] += av[i * c + j];
            }
        }
        self.push(Op::ColSum(a), 1, c, v)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let mut v = vec![0.0; r * c];
        for i in 0..r {
            let row = &av[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..c {
                let e = (row[j] - max).exp();
                v[i * c + j] = e;
                denom += e;
            }
            for j in 0..c {
                v[i * c + j] /= denom;
            }
        }
        self.push(Op::RowSoftmax(a), r, c, v)
    }

    /// Euclidean norm of each row of an NxD node, giving Nx1.
    pub fn row_norm(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let av = &self.nodes[a.0].value;
        let v = (0..r)
            .map(|i| {
                let ss: f64 = av[i * c..(i + 1) * c].iter().map(|x| x * x).sum();
                (ss + ROW_NORM_EPS).sqrt()
            })
            .collect();
        self.push(Op::RowNorm(a), r, 1, v)
    }

    pub fn mul_const(&mut self, a: NodeId, k: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x * k).collect();
        self.push(Op::MulConst(a, k), r, c, v)
    }

    pub fn add_const(&mut self, a: NodeId, k: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let v = self.nodes[a.0].value.iter().map(|x| x + k).collect();
        self.push(Op::AddConst(a, k), r, c, v)
    }

    /// Reinterpret the row-major data with a new shape of equal length.
    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let (r, c) = self.shape(a);
        assert_eq!(r * c, rows * cols, "reshape: {r}x{c} -> {rows}x{cols}");
        let v = self.nodes[a.0].value.clone();
        self.push(Op::Reshape(a), rows, cols, v)
    }

    /// Convenience: elementwise square.
    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    /// Convenience: `mean((a - b)^2)` of two same-shape nodes.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.sub(a, b);
        let sq = self.square(d);
        self.mean(sq)
    }

    fn op_inputs(op: &Op) -> [Option<NodeId>; 2] {
        use Op::*;
        match *op {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) | Scale(a, b)
            | AddScalar(a, b) | AddRow(a, b) => [Some(a), Some(b)],
            Transpose(a) | Relu(a) | LeakyRelu(a, _) | Tanh(a) | Exp(a) | Log(a) | Sqrt(a)
            | Sum(a) | Mean(a) | RowSum(a) | ColSum(a) | RowSoftmax(a) | RowNorm(a)
            | MulConst(a, _) | AddConst(a, _) | Reshape(a) => [Some(a), None],
        }
    }

    /// Build adjoint nodes of the scalar `output` with respect to each node in
    /// `wrt`. The adjoints are appended to the tape as ordinary nodes, so they
    /// can be differentiated again. Nodes the output does not depend on get a
    /// zero adjoint of matching shape.
    pub fn grad_nodes(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let (orows, ocols) = self.shape(output);
        if orows != 1 || ocols != 1 {
            return Err(PiwadError::Config(format!(
                "backward requires a scalar output node, got {orows}x{ocols}"
            )));
        }

        // Mark descendants of the wrt set; only those need adjoints.
        let upto = output.0;
        let mut needs = vec![false; upto + 1];
        for w in wrt {
            if w.0 <= upto {
                needs[w.0] = true;
            }
        }
        for i in 0..=upto {
            if needs[i] {
                continue;
            }
            let [a, b] = Self::op_inputs(&self.nodes[i].op);
            let dep = |x: Option<NodeId>| x.map(|n| needs[n.0]).unwrap_or(false);
            if dep(a) || dep(b) {
                needs[i] = true;
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; upto + 1];
        adjoint[output.0] = Some(self.scalar(1.0));

        for i in (0..=upto).rev() {
            if !needs[i] {
                continue;
            }
            let Some(delta) = adjoint[i] else { continue };
            let op = self.nodes[i].op.clone();
            let this = NodeId(i);
            let accumulate = |tape: &mut Tape,
                                  adjoint: &mut Vec<Option<NodeId>>,
                                  target: NodeId,
                                  contribution: NodeId| {
                if target.0 > upto || !needs[target.0] {
                    return;
                }
                adjoint[target.0] = Some(match adjoint[target.0] {
                    Some(existing) => tape.add(existing, contribution),
                    None => contribution,
                });
            };

            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(self, &mut adjoint, a, delta);
                    accumulate(self, &mut adjoint, b, delta);
                }
                Op::Sub(a, b) => {
                    accumulate(self, &mut adjoint, a, delta);
                    let neg = self.mul_const(delta, -1.0);
                    accumulate(self, &mut adjoint, b, neg);
                }
                Op::Mul(a, b) => {
                    let da = self.mul(delta, b);
                    accumulate(self, &mut adjoint, a, da);
                    let db = self.mul(delta, a);
                    accumulate(self, &mut adjoint, b, db);
                }
                Op::Div(a, b) => {
                    let da = self.div(delta, b);
                    accumulate(self, &mut adjoint, a, da);
                    let q = self.div(this, b);
                    let num = self.mul(delta, q);
                    let db = self.mul_const(num, -1.0);
                    accumulate(self, &mut adjoint, b, db);
                }
                Op::MatMul(a, b) => {
                    let bt = self.transpose(b);
                    let da = self.matmul(delta, bt);
                    accumulate(self, &mut adjoint, a, da);
                    let at = self.transpose(a);
                    let db = self.matmul(at, delta);
                    accumulate(self, &mut adjoint, b, db);
                }
                Op::Transpose(a) => {
                    let da = self.transpose(delta);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Scale(s, m) => {
                    let prod = self.mul(delta, m);
                    let ds = self.sum(prod);
                    accumulate(self, &mut adjoint, s, ds);
                    let dm = self.scale(s, delta);
                    accumulate(self, &mut adjoint, m, dm);
                }
                Op::AddScalar(m, s) => {
                    accumulate(self, &mut adjoint, m, delta);
                    let ds = self.sum(delta);
                    accumulate(self, &mut adjoint, s, ds);
                }
                Op::AddRow(m, row) => {
                    accumulate(self, &mut adjoint, m, delta);
                    let dr = self.col_sum(delta);
                    accumulate(self, &mut adjoint, row, dr);
                }
                Op::Relu(a) => {
                    let mask: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .map(|&x| if x > 0.0 { 1.0 } else { 0.0 })
                        .collect();
                    let (r, c) = self.shape(a);
                    let mask_node = self.leaf(r, c, mask);
                    let da = self.mul(delta, mask_node);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::LeakyRelu(a, slope) => {
                    let mask: Vec<f64> = self.nodes[a.0]
                        .value
                        .iter()
                        .map(|&x| if x > 0.0 { 1.0 } else { slope })
                        .collect();
                    let (r, c) = self.shape(a);
                    let mask_node = self.leaf(r, c, mask);
                    let da = self.mul(delta, mask_node);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Tanh(a) => {
                    let t2 = self.mul(this, this);
                    let neg = self.mul_const(t2, -1.0);
                    let omt = self.add_const(neg, 1.0);
                    let da = self.mul(delta, omt);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Exp(a) => {
                    let da = self.mul(delta, this);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Log(a) => {
                    let da = self.div(delta, a);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Sqrt(a) => {
                    let two = self.mul_const(this, 2.0);
                    let da = self.div(delta, two);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(a);
                    let ones = self.fill(r, c, 1.0);
                    let da = self.scale(delta, ones);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::Mean(a) => {
                    let (r, c) = self.shape(a);
                    let ones = self.fill(r, c, 1.0);
                    let spread = self.scale(delta, ones);
                    let da = self.mul_const(spread, 1.0 / (r * c) as f64);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::RowSum(a) => {
                    let (_, c) = self.shape(a);
                    let ones = self.fill(1, c, 1.0);
                    let da = self.matmul(delta, ones);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::ColSum(a) => {
                    let (r, _) = self.shape(a);
                    let ones = self.fill(r, 1, 1.0);
                    let da = self.matmul(ones, delta);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::RowSoftmax(a) => {
                    // da = y .* (delta - rowsum(y .* delta) broadcast)
                    let (_, c) = self.shape(a);
                    let yd = self.mul(this, delta);
                    let rs = self.row_sum(yd);
                    let ones = self.fill(1, c, 1.0);
                    let spread = self.matmul(rs, ones);
                    let centered = self.sub(delta, spread);
                    let da = self.mul(this, centered);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::RowNorm(a) => {
                    // d norm_i / d x_ij = x_ij / norm_i
                    let (_, c) = self.shape(a);
                    let ones = self.fill(1, c, 1.0);
                    let norm_spread = self.matmul(this, ones);
                    let unit = self.div(a, norm_spread);
                    let delta_spread = self.matmul(delta, ones);
                    let da = self.mul(delta_spread, unit);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::MulConst(a, k) => {
                    let da = self.mul_const(delta, k);
                    accumulate(self, &mut adjoint, a, da);
                }
                Op::AddConst(a, _) => {
                    accumulate(self, &mut adjoint, a, delta);
                }
                Op::Reshape(a) => {
                    let (r, c) = self.shape(a);
                    let da = self.reshape(delta, r, c);
                    accumulate(self, &mut adjoint, a, da);
                }
            }
        }

        Ok(wrt
            .iter()
            .map(|w| match adjoint.get(w.0).copied().flatten() {
                Some(id) => id,
                None => {
                    let (r, c) = self.shape(*w);
                    self.fill(r, c, 0.0)
                }
            })
            .collect())
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad_values(tape: &mut Tape, out: NodeId, wrt: NodeId) -> Vec<f64> {
        let g = tape.grad_nodes(out, &[wrt]).unwrap()[0];
        tape.value(g).to_vec()
    }

    #[test]
    fn square_derivative() {
        // f(w) = w^2 at w = 3 -> df/dw = 6
        let mut tape = Tape::new();
        let w = tape.scalar(3.0);
        let out = tape.square(w);
        assert_eq!(grad_values(&mut tape, out, w), vec![6.0]);
    }

    #[test]
    fn dead_relu_region() {
        // f(w) = relu(w) at w = -1 -> df/dw = 0
        let mut tape = Tape::new();
        let w = tape.scalar(-1.0);
        let out = tape.relu(w);
        assert_eq!(grad_values(&mut tape, out, w), vec![0.0]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let mut tape = Tape::new();
        let w = tape.scalar(0.0);
        let out = tape.relu(w);
        assert_eq!(grad_values(&mut tape, out, w), vec![0.0]);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut tape = Tape::new();
        let w = tape.leaf(2, 1, vec![1.0, 2.0]);
        let doubled = tape.mul_const(w, 2.0);
        assert!(tape.grad_nodes(doubled, &[w]).is_err());
    }

    #[test]
    fn matmul_values() {
        let mut tape = Tape::new();
        let a = tape.leaf(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = tape.leaf(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = tape.matmul(a, b);
        assert_eq!(tape.value(c), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let a = tape.leaf(2, 3, vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]);
        let s = tape.row_softmax(a);
        let v = tape.value(s);
        for i in 0..2 {
            let row: f64 = v[i * 3..(i + 1) * 3].iter().sum();
            assert!((row - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_linearity_on_random_tapes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let data: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();

            let mut tape = Tape::new();
            let w = tape.leaf(2, 3, data.clone());
            let xn = tape.leaf(3, 1, x.clone());
            let prod = tape.matmul(w, xn);
            let t = tape.tanh(prod);
            let f1 = tape.sum(t);
            let sq = tape.square(prod);
            let f2 = tape.mean(sq);
            let combined = tape.add(f1, f2);

            let g1 = grad_values(&mut tape, f1, w);
            let g2 = grad_values(&mut tape, f2, w);
            let gc = grad_values(&mut tape, combined, w);
            for i in 0..6 {
                assert!(
                    (gc[i] - (g1[i] + g2[i])).abs() < 1e-9,
                    "linearity violated at {i}: {} vs {}",
                    gc[i],
                    g1[i] + g2[i]
                );
            }
        }
    }

    #[test]
    fn second_derivative_through_grad_nodes() {
        // f(w) = w^3: f' = 3w^2, f'' = 6w. Differentiate the built gradient.
        let mut tape = Tape::new();
        let w = tape.scalar(2.0);
        let w2 = tape.square(w);
        let f = tape.mul(w2, w);
        let g = tape.grad_nodes(f, &[w]).unwrap()[0];
        assert!((tape.scalar_value(g) - 12.0).abs() < 1e-12);
        let gg = tape.grad_nodes(g, &[w]).unwrap()[0];
        assert!((tape.scalar_value(gg) - 12.0).abs() < 1e-12);
    }
}
