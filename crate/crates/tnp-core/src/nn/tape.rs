//! Reverse-mode automatic differentiation over a recorded operation tape.
//!
//! Forward values are computed eagerly as operations are recorded; a single
//! [`Tape::backward`] pass then visits every node exactly once in reverse
//! order and accumulates gradients for all leaves, including leaves that never
//! feed the loss (their gradient stays zero).
//!
//! Operations are matrix-level (matmul, row broadcasts, row-wise softmax, ...)
//! rather than scalar-level so batched network evaluations stay cheap. Shape
//! compatibility is asserted at record time: callers are expected to validate
//! user-facing dimensions before building a graph.

use super::array::RealArray;
use super::NnError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Matmul(Var, Var),
    /// `a * b^T` without materializing the transpose.
    MatmulNT(Var, Var),
    /// Matrix plus a `1 x cols` row vector added to every row.
    AddRow(Var, Var),
    /// Matrix times a `1 x cols` row vector, elementwise per row.
    MulRow(Var, Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    SumAll(Var),
    MeanAll(Var),
    /// Mean over rows, producing a `1 x cols` row vector.
    RowMean(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    /// Columns `start..end` of the operand.
    SliceCols(Var, usize, usize),
}

struct Node {
    op: Op,
    value: RealArray,
}

/// Gradients produced by [`Tape::backward`], one per recorded node.
pub struct GradientMap {
    grads: Vec<RealArray>,
}

impl GradientMap {
    /// Gradient of the loss with respect to the value at `v`.
    pub fn get(&self, v: Var) -> &RealArray {
        &self.grads[v.0]
    }
}

/// A Wengert list of matrix operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Current value at `v`.
    pub fn value(&self, v: Var) -> &RealArray {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).scalar_value()
    }

    fn push(&mut self, op: Op, value: RealArray) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records an input value. Leaves receive gradients like any other node.
    pub fn leaf(&mut self, value: RealArray) -> Var {
        self.push(Op::Leaf, value)
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> [usize; 2] {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        assert_eq!(sa, sb, "{op}: operand shapes {sa:?} vs {sb:?} differ");
        sa
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let [r, c] = self.same_shape(a, b, "add");
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        self.push(Op::Add(a, b), RealArray::new(r, c, data))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let [r, c] = self.same_shape(a, b, "sub");
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x - y);
        self.push(Op::Sub(a, b), RealArray::new(r, c, data))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let [r, c] = self.same_shape(a, b, "mul");
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        self.push(Op::Mul(a, b), RealArray::new(r, c, data))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let [r, c] = self.same_shape(a, b, "div");
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x / y);
        self.push(Op::Div(a, b), RealArray::new(r, c, data))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = RealArray::new(v.rows(), v.cols(), v.data().iter().map(|x| -x).collect());
        self.push(Op::Neg(a), out)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a);
        let out = RealArray::new(v.rows(), v.cols(), v.data().iter().map(|x| s * x).collect());
        self.push(Op::Scale(a, s), out)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a);
        let out = RealArray::new(v.rows(), v.cols(), v.data().iter().map(|x| x + s).collect());
        self.push(Op::AddScalar(a), out)
    }

    /// `a (m x k) * b (k x n) -> m x n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.cols(),
            vb.rows(),
            "matmul: inner dimensions {} vs {} differ",
            va.cols(),
            vb.rows()
        );
        let out = matmul_nn(va, vb);
        self.push(Op::Matmul(a, b), out)
    }

    /// `a (m x k) * b^T (k x n), b stored n x k -> m x n`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.cols(),
            vb.cols(),
            "matmul_nt: inner dimensions {} vs {} differ",
            va.cols(),
            vb.cols()
        );
        let out = matmul_nt(va, vb);
        self.push(Op::MatmulNT(a, b), out)
    }

    /// Adds a `1 x cols` row vector to every row of `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Var {
        let (vm, vr) = (self.value(m), self.value(row));
        assert_eq!(vr.rows(), 1, "add_row: second operand must be a row vector");
        assert_eq!(vm.cols(), vr.cols(), "add_row: column counts differ");
        let mut data = vm.data().to_vec();
        for r in 0..vm.rows() {
            for c in 0..vm.cols() {
                data[r * vm.cols() + c] += vr.data()[c];
            }
        }
        let out = RealArray::new(vm.rows(), vm.cols(), data);
        self.push(Op::AddRow(m, row), out)
    }

    /// Multiplies every row of `m` elementwise by a `1 x cols` row vector.
    pub fn mul_row(&mut self, m: Var, row: Var) -> Var {
        let (vm, vr) = (self.value(m), self.value(row));
        assert_eq!(vr.rows(), 1, "mul_row: second operand must be a row vector");
        assert_eq!(vm.cols(), vr.cols(), "mul_row: column counts differ");
        let mut data = vm.data().to_vec();
        for r in 0..vm.rows() {
            for c in 0..vm.cols() {
                data[r * vm.cols() + c] *= vr.data()[c];
            }
        }
        let out = RealArray::new(vm.rows(), vm.cols(), data);
        self.push(Op::MulRow(m, row), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = RealArray::new(
            v.rows(),
            v.cols(),
            v.data().iter().map(|x| x.max(0.0)).collect(),
        );
        self.push(Op::Relu(a), out)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = RealArray::new(v.rows(), v.cols(), v.data().iter().map(|&x| softplus(x)).collect());
        self.push(Op::Softplus(a), out)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = RealArray::new(v.rows(), v.cols(), v.data().iter().map(|x| x.exp()).collect());
        self.push(Op::Exp(a), out)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = RealArray::new(v.rows(), v.cols(), v.data().iter().map(|x| x.ln()).collect());
        self.push(Op::Ln(a), out)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = RealArray::new(v.rows(), v.cols(), v.data().iter().map(|x| x.sqrt()).collect());
        self.push(Op::Sqrt(a), out)
    }

    /// Row-wise softmax with the usual max-subtraction for stability.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = v.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..cols {
                let e = (row[c] - max).exp();
                data[r * cols + c] = e;
                sum += e;
            }
            for c in 0..cols {
                data[r * cols + c] /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), RealArray::new(rows, cols, data))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = v.get(r, c);
            }
        }
        self.push(Op::Transpose(a), RealArray::new(cols, rows, data))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll(a), RealArray::scalar(s))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: f64 = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Op::MeanAll(a), RealArray::scalar(s))
    }

    /// Mean over rows: `n x c -> 1 x c`.
    pub fn row_mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let (rows, cols) = (v.rows(), v.cols());
        let mut data = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c] += v.get(r, c);
            }
        }
        for x in &mut data {
            *x /= rows as f64;
        }
        self.push(Op::RowMean(a), RealArray::new(1, cols, data))
    }

    /// Stacks operands vertically. All must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no operands");
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows: column counts differ");
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        self.push(Op::ConcatRows(parts.to_vec()), RealArray::new(rows, cols, data))
    }

    /// Concatenates operands horizontally. All must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no operands");
        let rows = self.value(parts[0]).rows();
        let total_cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = vec![0.0; rows * total_cols];
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols: row counts differ");
            for r in 0..rows {
                let dst = r * total_cols + offset;
                data[dst..dst + v.cols()].copy_from_slice(v.row(r));
            }
            offset += v.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), RealArray::new(rows, total_cols, data))
    }

    /// Columns `start..end` of the operand.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a);
        assert!(start < end && end <= v.cols(), "slice_cols: bad range {start}..{end}");
        let (rows, cols) = (v.rows(), end - start);
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            data[r * cols..(r + 1) * cols].copy_from_slice(&v.row(r)[start..end]);
        }
        self.push(Op::SliceCols(a, start, end), RealArray::new(rows, cols, data))
    }

    /// Accumulates gradients of `loss` with respect to every node.
    ///
    /// `loss` must be a `1 x 1` node. Each node is visited once, in reverse
    /// recording order; leaves that do not influence the loss keep a zero
    /// gradient.
    pub fn backward(&self, loss: Var) -> Result<GradientMap, NnError> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(NnError::NonScalarLoss {
                rows: shape[0],
                cols: shape[1],
            });
        }
        let mut grads: Vec<RealArray> = self
            .nodes
            .iter()
            .map(|n| RealArray::zeros(n.value.rows(), n.value.cols()))
            .collect();
        grads[loss.0].data_mut()[0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            // Move the output gradient out to satisfy the borrow checker while
            // operand gradients are updated.
            let g = std::mem::replace(&mut grads[idx], RealArray::zeros(1, 1));
            if g.data().iter().all(|&x| x == 0.0) {
                grads[idx] = g;
                continue;
            }
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.data());
                    accumulate(&mut grads[b.0], g.data());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], g.data());
                    accumulate_scaled(&mut grads[b.0], g.data(), -1.0);
                }
                Op::Mul(a, b) => {
                    let gb: Vec<f64> = zip_map(g.data(), self.value(*a).data(), |x, y| x * y);
                    let ga: Vec<f64> = zip_map(g.data(), self.value(*b).data(), |x, y| x * y);
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Div(a, b) => {
                    let vb = self.value(*b).data();
                    let vout = self.nodes[idx].value.data();
                    let ga: Vec<f64> = zip_map(g.data(), vb, |x, y| x / y);
                    let gb: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(vout.iter().zip(vb.iter()))
                        .map(|(gi, (oi, bi))| -gi * oi / bi)
                        .collect();
                    accumulate(&mut grads[a.0], &ga);
                    accumulate(&mut grads[b.0], &gb);
                }
                Op::Neg(a) => accumulate_scaled(&mut grads[a.0], g.data(), -1.0),
                Op::Scale(a, s) => accumulate_scaled(&mut grads[a.0], g.data(), *s),
                Op::AddScalar(a) => accumulate(&mut grads[a.0], g.data()),
                Op::Matmul(a, b) => {
                    let ga = matmul_nt(&g, self.value(*b));
                    let gb = matmul_tn(self.value(*a), &g);
                    accumulate(&mut grads[a.0], ga.data());
                    accumulate(&mut grads[b.0], gb.data());
                }
                Op::MatmulNT(a, b) => {
                    let ga = matmul_nn(&g, self.value(*b));
                    let gb = matmul_tn(&g, self.value(*a));
                    accumulate(&mut grads[a.0], ga.data());
                    accumulate(&mut grads[b.0], gb.data());
                }
                Op::AddRow(m, row) => {
                    accumulate(&mut grads[m.0], g.data());
                    let col_sums = column_sums(&g);
                    accumulate(&mut grads[row.0], &col_sums);
                }
                Op::MulRow(m, row) => {
                    let vr = self.value(*row);
                    let vm = self.value(*m);
                    let cols = vm.cols();
                    let mut gm = vec![0.0; vm.len()];
                    let mut grow = vec![0.0; cols];
                    for r in 0..vm.rows() {
                        for c in 0..cols {
                            let gi = g.data()[r * cols + c];
                            gm[r * cols + c] = gi * vr.data()[c];
                            grow[c] += gi * vm.data()[r * cols + c];
                        }
                    }
                    accumulate(&mut grads[m.0], &gm);
                    accumulate(&mut grads[row.0], &grow);
                }
                Op::Relu(a) => {
                    let va = self.value(*a).data();
                    let ga: Vec<f64> = zip_map(g.data(), va, |gi, x| if x > 0.0 { gi } else { 0.0 });
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Softplus(a) => {
                    let va = self.value(*a).data();
                    let ga: Vec<f64> = zip_map(g.data(), va, |gi, x| gi * sigmoid(x));
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Exp(a) => {
                    let vout = self.nodes[idx].value.data();
                    let ga: Vec<f64> = zip_map(g.data(), vout, |gi, y| gi * y);
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Ln(a) => {
                    let va = self.value(*a).data();
                    let ga: Vec<f64> = zip_map(g.data(), va, |gi, x| gi / x);
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Sqrt(a) => {
                    let vout = self.nodes[idx].value.data();
                    let ga: Vec<f64> = zip_map(g.data(), vout, |gi, y| gi / (2.0 * y));
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::SoftmaxRows(a) => {
                    let vout = &self.nodes[idx].value;
                    let (rows, cols) = (vout.rows(), vout.cols());
                    let mut ga = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let s = vout.row(r);
                        let gr = &g.data()[r * cols..(r + 1) * cols];
                        let dot: f64 = gr.iter().zip(s.iter()).map(|(x, y)| x * y).sum();
                        for c in 0..cols {
                            ga[r * cols + c] = s[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::Transpose(a) => {
                    let (rows, cols) = (g.rows(), g.cols());
                    let mut ga = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for c in 0..cols {
                            ga[c * rows + r] = g.get(r, c);
                        }
                    }
                    accumulate(&mut grads[a.0], &ga);
                }
                Op::SumAll(a) => {
                    let gi = g.data()[0];
                    let target = &mut grads[a.0];
                    for x in target.data_mut() {
                        *x += gi;
                    }
                }
                Op::MeanAll(a) => {
                    let n = self.value(*a).len() as f64;
                    let gi = g.data()[0] / n;
                    let target = &mut grads[a.0];
                    for x in target.data_mut() {
                        *x += gi;
                    }
                }
                Op::RowMean(a) => {
                    let va = self.value(*a);
                    let (rows, cols) = (va.rows(), va.cols());
                    let target = &mut grads[a.0];
                    for r in 0..rows {
                        for c in 0..cols {
                            target.data_mut()[r * cols + c] += g.data()[c] / rows as f64;
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        accumulate(&mut grads[p.0], &g.data()[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let total_cols = g.cols();
                    let mut col_offset = 0;
                    for &p in parts {
                        let v = self.value(p);
                        let (rows, cols) = (v.rows(), v.cols());
                        let target = &mut grads[p.0];
                        for r in 0..rows {
                            for c in 0..cols {
                                target.data_mut()[r * cols + c] +=
                                    g.data()[r * total_cols + col_offset + c];
                            }
                        }
                        col_offset += cols;
                    }
                }
                Op::SliceCols(a, start, _end) => {
                    let va = self.value(*a);
                    let (rows, cols, width) = (va.rows(), va.cols(), g.cols());
                    let target = &mut grads[a.0];
                    for r in 0..rows {
                        for c in 0..width {
                            target.data_mut()[r * cols + start + c] += g.data()[r * width + c];
                        }
                    }
                }
            }
            grads[idx] = g;
        }
        Ok(GradientMap { grads })
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(&x, &y)| f(x, y)).collect()
}

fn accumulate(target: &mut RealArray, delta: &[f64]) {
    for (t, d) in target.data_mut().iter_mut().zip(delta.iter()) {
        *t += d;
    }
}

fn accumulate_scaled(target: &mut RealArray, delta: &[f64], scale: f64) {
    for (t, d) in target.data_mut().iter_mut().zip(delta.iter()) {
        *t += scale * d;
    }
}

fn column_sums(m: &RealArray) -> Vec<f64> {
    let mut sums = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (c, s) in sums.iter_mut().enumerate() {
            *s += m.get(r, c);
        }
    }
    sums
}

/// `a (m x k) * b (k x n)`.
fn matmul_nn(a: &RealArray, b: &RealArray) -> RealArray {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a.data()[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b.data()[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
    RealArray::new(m, n, out)
}

/// `a (m x k) * b^T` where `b` is `n x k`.
fn matmul_nt(a: &RealArray, b: &RealArray) -> RealArray {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data()[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b.data()[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            *o = acc;
        }
    }
    RealArray::new(m, n, out)
}

/// `a^T (k x m) * b (m x n)` where `a` is `m x k`.
fn matmul_tn(a: &RealArray, b: &RealArray) -> RealArray {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a.data()[i * k..(i + 1) * k];
        let brow = &b.data()[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
    RealArray::new(k, n, out)
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
