use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Handle to a node on a [`Tape`]. Only valid for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Elementwise sum of two same-shape tensors.
    Add(TensorId, TensorId),
    /// `[m, n]` matrix plus an `[n]` row vector broadcast over rows.
    AddRow(TensorId, TensorId),
    /// Elementwise product of two same-shape tensors.
    Mul(TensorId, TensorId),
    /// Multiplication by a compile-time constant scalar.
    Scale(TensorId, f64),
    /// `[m, k] x [k, n]` matrix product.
    MatMul(TensorId, TensorId),
    Silu(TensorId),
    /// Softmax over the last axis, rows independent.
    Softmax(TensorId),
    /// Column-wise concatenation of `[m, n_i]` matrices.
    ConcatCols(Vec<TensorId>),
    /// `[n]` vector tiled into `m` identical rows.
    RepeatRow(TensorId),
    /// Weighted sum of the rows of a frozen matrix: `[k]` weights over a
    /// `k x d` table produce a `[d]` vector. The table itself is constant.
    WeightedRows {
        weights: TensorId,
        table: Vec<f64>,
        cols: usize,
    },
    /// Mean of elementwise squared differences, a scalar.
    Mse(TensorId, TensorId),
    Sum(TensorId),
    Mean(TensorId),
}

/// Records a single forward computation for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so indices form a topological
/// order; `backward` replays them once, in reverse, accumulating gradients
/// into every node that requires them. A leaf used twice receives the sum
/// of both contributions.
pub struct Tape {
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    reqs: Vec<bool>,
    ops: Vec<Op>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            shapes: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            reqs: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<f64>, req: bool, op: Op) -> TensorId {
        let id = TensorId(self.ops.len());
        self.grads.push(if req { vec![0.0; values.len()] } else { Vec::new() });
        self.shapes.push(shape);
        self.values.push(values);
        self.reqs.push(req);
        self.ops.push(op);
        id
    }

    fn check(&self, id: TensorId) -> Result<()> {
        if id.0 >= self.ops.len() {
            return Err(Error::Usage(format!(
                "tensor id {} is not on this tape (len {})",
                id.0,
                self.ops.len()
            )));
        }
        Ok(())
    }

    /// Registers a leaf from an existing [`Tensor`].
    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(
            t.shape().to_vec(),
            t.values().to_vec(),
            t.requires_grad(),
            Op::Leaf,
        )
    }

    /// Registers a differentiable leaf from raw parts.
    pub fn leaf_from(&mut self, shape: &[usize], values: &[f64]) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.push(shape.to_vec(), values.to_vec(), true, Op::Leaf)
    }

    /// Registers a constant leaf (no gradient).
    pub fn constant(&mut self, shape: &[usize], values: &[f64]) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.push(shape.to_vec(), values.to_vec(), false, Op::Leaf)
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.shapes[id.0]
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.values[id.0]
    }

    /// Value of a one-element tensor.
    pub fn scalar_value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.values[id.0].len(), 1);
        self.values[id.0][0]
    }

    /// Gradient accumulated by the last `backward`; `None` for nodes that
    /// do not require gradients.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        if self.reqs[id.0] {
            Some(&self.grads[id.0])
        } else {
            None
        }
    }

    /// Exports a node as a standalone [`Tensor`], with the gradient slot
    /// filled for differentiable nodes.
    pub fn export(&self, id: TensorId) -> Tensor {
        let mut t = if self.reqs[id.0] {
            Tensor::with_grad(self.shapes[id.0].clone(), self.values[id.0].clone())
        } else {
            Tensor::new(self.shapes[id.0].clone(), self.values[id.0].clone())
        }
        .expect("tape node is always a valid tensor");
        if self.reqs[id.0] {
            t.attach_grad(self.grads[id.0].clone());
        }
        t
    }

    fn binary_same_shape(&self, a: TensorId, b: TensorId, what: &str) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if self.shapes[a.0] != self.shapes[b.0] {
            return Err(Error::Input(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shapes[a.0], self.shapes[b.0]
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "add")?;
        let values: Vec<f64> = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| x + y)
            .collect();
        let req = self.reqs[a.0] || self.reqs[b.0];
        Ok(self.push(self.shapes[a.0].clone(), values, req, Op::Add(a, b)))
    }

    /// `[m, n] + [n]`, the bias add of an affine layer.
    pub fn add_row(&mut self, m: TensorId, row: TensorId) -> Result<TensorId> {
        self.check(m)?;
        self.check(row)?;
        let (rows, cols) = self.as_matrix(m)?;
        if self.shapes[row.0] != [cols] {
            return Err(Error::Input(format!(
                "add_row: row shape {:?} does not match matrix columns {cols}",
                self.shapes[row.0]
            )));
        }
        let mut values = self.values[m.0].clone();
        let rv = &self.values[row.0];
        for r in 0..rows {
            for c in 0..cols {
                values[r * cols + c] += rv[c];
            }
        }
        let req = self.reqs[m.0] || self.reqs[row.0];
        Ok(self.push(self.shapes[m.0].clone(), values, req, Op::AddRow(m, row)))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "mul")?;
        let values: Vec<f64> = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| x * y)
            .collect();
        let req = self.reqs[a.0] || self.reqs[b.0];
        Ok(self.push(self.shapes[a.0].clone(), values, req, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        self.check(a)?;
        if !c.is_finite() {
            return Err(Error::Input("scale: non-finite factor".into()));
        }
        let values: Vec<f64> = self.values[a.0].iter().map(|x| x * c).collect();
        let req = self.reqs[a.0];
        Ok(self.push(self.shapes[a.0].clone(), values, req, Op::Scale(a, c)))
    }

    fn as_matrix(&self, id: TensorId) -> Result<(usize, usize)> {
        match self.shapes[id.0].as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::Input(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.check(a)?;
        self.check(b)?;
        let (m, ka) = self.as_matrix(a)?;
        let (kb, n) = self.as_matrix(b)?;
        if ka != kb {
            return Err(Error::Input(format!(
                "matmul: inner dimensions {ka} vs {kb} do not match"
            )));
        }
        let mut values = vec![0.0; m * n];
        matmul_into(&self.values[a.0], &self.values[b.0], &mut values, m, ka, n);
        let req = self.reqs[a.0] || self.reqs[b.0];
        Ok(self.push(vec![m, n], values, req, Op::MatMul(a, b)))
    }

    pub fn silu(&mut self, a: TensorId) -> Result<TensorId> {
        self.check(a)?;
        let mut values = self.values[a.0].clone();
        silu_into(&mut values);
        let req = self.reqs[a.0];
        Ok(self.push(self.shapes[a.0].clone(), values, req, Op::Silu(a)))
    }

    /// Softmax over the last axis; leading axes index independent rows.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        self.check(a)?;
        let shape = self.shapes[a.0].clone();
        let cols = *shape.last().expect("tensor shapes are non-empty");
        let rows = self.values[a.0].len() / cols;
        let mut values = vec![0.0; self.values[a.0].len()];
        softmax_rows_into(&self.values[a.0], &mut values, rows, cols);
        let req = self.reqs[a.0];
        Ok(self.push(shape, values, req, Op::Softmax(a)))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Input("concat_cols: no inputs".into()));
        }
        let mut rows = 0usize;
        let mut total_cols = 0usize;
        for (i, &p) in parts.iter().enumerate() {
            self.check(p)?;
            let (r, c) = self.as_matrix(p)?;
            if i == 0 {
                rows = r;
            } else if r != rows {
                return Err(Error::Input(format!(
                    "concat_cols: row count mismatch {r} vs {rows}"
                )));
            }
            total_cols += c;
        }
        let mut values = vec![0.0; rows * total_cols];
        let mut offset = 0usize;
        for &p in parts {
            let (_, c) = self.as_matrix(p)?;
            let src = &self.values[p.0];
            for r in 0..rows {
                values[r * total_cols + offset..r * total_cols + offset + c]
                    .copy_from_slice(&src[r * c..(r + 1) * c]);
            }
            offset += c;
        }
        let req = parts.iter().any(|p| self.reqs[p.0]);
        Ok(self.push(vec![rows, total_cols], values, req, Op::ConcatCols(parts.to_vec())))
    }

    /// Tiles an `[n]` vector into an `[m, n]` matrix of identical rows.
    pub fn repeat_row(&mut self, v: TensorId, m: usize) -> Result<TensorId> {
        self.check(v)?;
        if m == 0 {
            return Err(Error::Parameter("repeat_row: zero rows".into()));
        }
        let n = match self.shapes[v.0].as_slice() {
            &[n] => n,
            s => {
                return Err(Error::Input(format!(
                    "repeat_row: expected a vector, got shape {s:?}"
                )))
            }
        };
        let mut values = Vec::with_capacity(m * n);
        for _ in 0..m {
            values.extend_from_slice(&self.values[v.0]);
        }
        let req = self.reqs[v.0];
        Ok(self.push(vec![m, n], values, req, Op::RepeatRow(v)))
    }

    /// Embedding-weighted sum: `[k]` weights against a frozen `k x d` row
    /// table produce the `[d]` mixture vector.
    pub fn weighted_rows(&mut self, weights: TensorId, table: &[f64], cols: usize) -> Result<TensorId> {
        self.check(weights)?;
        let k = match self.shapes[weights.0].as_slice() {
            &[k] => k,
            s => {
                return Err(Error::Input(format!(
                    "weighted_rows: expected a weight vector, got shape {s:?}"
                )))
            }
        };
        if table.len() != k * cols {
            return Err(Error::Input(format!(
                "weighted_rows: table of {} values is not {k} x {cols}",
                table.len()
            )));
        }
        let w = &self.values[weights.0];
        let mut values = vec![0.0; cols];
        for i in 0..k {
            let row = &table[i * cols..(i + 1) * cols];
            for (o, &t) in values.iter_mut().zip(row) {
                *o += w[i] * t;
            }
        }
        let req = self.reqs[weights.0];
        Ok(self.push(
            vec![cols],
            values,
            req,
            Op::WeightedRows {
                weights,
                table: table.to_vec(),
                cols,
            },
        ))
    }

    /// Mean squared error over all elements, a scalar node.
    pub fn mse(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "mse")?;
        let n = self.values[a.0].len() as f64;
        let sum: f64 = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let req = self.reqs[a.0] || self.reqs[b.0];
        Ok(self.push(vec![1], vec![sum / n], req, Op::Mse(a, b)))
    }

    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        self.check(a)?;
        let s: f64 = self.values[a.0].iter().sum();
        let req = self.reqs[a.0];
        Ok(self.push(vec![1], vec![s], req, Op::Sum(a)))
    }

    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        self.check(a)?;
        let n = self.values[a.0].len() as f64;
        let s: f64 = self.values[a.0].iter().sum();
        let req = self.reqs[a.0];
        Ok(self.push(vec![1], vec![s / n], req, Op::Mean(a)))
    }

    /// Reverse pass from a scalar loss node.
    ///
    /// Gradients of all differentiable nodes are reset, then populated by
    /// visiting the tape once in reverse order. Leaves that do not lie on a
    /// path to the loss keep a zero gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        self.check(loss)?;
        if self.values[loss.0].len() != 1 {
            return Err(Error::Usage(format!(
                "backward: loss must be a scalar, got shape {:?}",
                self.shapes[loss.0]
            )));
        }
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v = 0.0;
            }
        }
        if !self.reqs[loss.0] {
            // Loss is constant with respect to every leaf; all gradients
            // stay zero.
            return Ok(());
        }
        self.grads[loss.0][0] = 1.0;
        for i in (0..=loss.0).rev() {
            if !self.reqs[i] {
                continue;
            }
            let g = std::mem::take(&mut self.grads[i]);
            self.propagate(i, &g);
            self.grads[i] = g;
        }
        Ok(())
    }

    fn propagate(&mut self, node: usize, g: &[f64]) {
        match &self.ops[node] {
            Op::Leaf => {}
            &Op::Add(a, b) => {
                if self.reqs[a.0] {
                    for (ga, &gv) in self.grads[a.0].iter_mut().zip(g) {
                        *ga += gv;
                    }
                }
                if self.reqs[b.0] {
                    for (gb, &gv) in self.grads[b.0].iter_mut().zip(g) {
                        *gb += gv;
                    }
                }
            }
            &Op::AddRow(m, row) => {
                if self.reqs[m.0] {
                    for (gm, &gv) in self.grads[m.0].iter_mut().zip(g) {
                        *gm += gv;
                    }
                }
                if self.reqs[row.0] {
                    let cols = self.grads[row.0].len();
                    let gr = &mut self.grads[row.0];
                    for (i, &gv) in g.iter().enumerate() {
                        gr[i % cols] += gv;
                    }
                }
            }
            &Op::Mul(a, b) => {
                if self.reqs[a.0] {
                    let bv = &self.values[b.0];
                    let ga = &mut self.grads[a.0];
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if self.reqs[b.0] {
                    let av = &self.values[a.0];
                    let gb = &mut self.grads[b.0];
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }
            &Op::Scale(a, c) => {
                if self.reqs[a.0] {
                    for (ga, &gv) in self.grads[a.0].iter_mut().zip(g) {
                        *ga += c * gv;
                    }
                }
            }
            &Op::MatMul(a, b) => {
                let (m, k) = (self.shapes[a.0][0], self.shapes[a.0][1]);
                let n = self.shapes[b.0][1];
                if self.reqs[a.0] {
                    // dA += g . B^T
                    let bv = &self.values[b.0];
                    let ga = &mut self.grads[a.0];
                    for i in 0..m {
                        for kk in 0..k {
                            let brow = &bv[kk * n..(kk + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += grow[j] * brow[j];
                            }
                            ga[i * k + kk] += acc;
                        }
                    }
                }
                if self.reqs[b.0] {
                    // dB += A^T . g
                    let av = &self.values[a.0];
                    let gb = &mut self.grads[b.0];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aval = av[i * k + kk];
                            let gbrow = &mut gb[kk * n..(kk + 1) * n];
                            for j in 0..n {
                                gbrow[j] += aval * grow[j];
                            }
                        }
                    }
                }
            }
            &Op::Silu(a) => {
                if self.reqs[a.0] {
                    let av = &self.values[a.0];
                    let ga = &mut self.grads[a.0];
                    for i in 0..g.len() {
                        let s = 1.0 / (1.0 + (-av[i]).exp());
                        ga[i] += g[i] * (s + av[i] * s * (1.0 - s));
                    }
                }
            }
            &Op::Softmax(a) => {
                if self.reqs[a.0] {
                    let yv = &self.values[node];
                    let cols = *self.shapes[node].last().expect("non-empty shape");
                    let rows = yv.len() / cols;
                    let ga = &mut self.grads[a.0];
                    for r in 0..rows {
                        let y = &yv[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = y.iter().zip(gr).map(|(yi, gi)| yi * gi).sum();
                        let gar = &mut ga[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            gar[j] += y[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let parts = parts.clone();
                let total_cols = *self.shapes[node].last().expect("non-empty shape");
                let rows = self.shapes[node][0];
                let mut offset = 0usize;
                for p in parts {
                    let c = self.shapes[p.0][1];
                    if self.reqs[p.0] {
                        let gp = &mut self.grads[p.0];
                        for r in 0..rows {
                            let src = &g[r * total_cols + offset..r * total_cols + offset + c];
                            let dst = &mut gp[r * c..(r + 1) * c];
                            for j in 0..c {
                                dst[j] += src[j];
                            }
                        }
                    }
                    offset += c;
                }
            }
            &Op::RepeatRow(v) => {
                if self.reqs[v.0] {
                    let n = self.grads[v.0].len();
                    let gv = &mut self.grads[v.0];
                    for (i, &gval) in g.iter().enumerate() {
                        gv[i % n] += gval;
                    }
                }
            }
            Op::WeightedRows { weights, table, cols } => {
                let weights = *weights;
                if self.reqs[weights.0] {
                    let cols = *cols;
                    let k = self.grads[weights.0].len();
                    // clone keeps the borrow checker happy; tables are tiny
                    let table = table.clone();
                    let gw = &mut self.grads[weights.0];
                    for i in 0..k {
                        let row = &table[i * cols..(i + 1) * cols];
                        let mut acc = 0.0;
                        for j in 0..cols {
                            acc += g[j] * row[j];
                        }
                        gw[i] += acc;
                    }
                }
            }
            &Op::Mse(a, b) => {
                let n = self.values[a.0].len() as f64;
                let c = 2.0 * g[0] / n;
                if self.reqs[a.0] {
                    let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                    let ga = &mut self.grads[a.0];
                    for i in 0..av.len() {
                        ga[i] += c * (av[i] - bv[i]);
                    }
                }
                if self.reqs[b.0] {
                    let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                    let gb = &mut self.grads[b.0];
                    for i in 0..av.len() {
                        gb[i] -= c * (av[i] - bv[i]);
                    }
                }
            }
            &Op::Sum(a) => {
                if self.reqs[a.0] {
                    for ga in self.grads[a.0].iter_mut() {
                        *ga += g[0];
                    }
                }
            }
            &Op::Mean(a) => {
                if self.reqs[a.0] {
                    let n = self.grads[a.0].len() as f64;
                    let c = g[0] / n;
                    for ga in self.grads[a.0].iter_mut() {
                        *ga += c;
                    }
                }
            }
        }
    }
}

/// `out = a . b` for row-major `[m, k] x [k, n]`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// In-place SiLU: `x * sigmoid(x)`.
pub(crate) fn silu_into(x: &mut [f64]) {
    for v in x.iter_mut() {
        let s = 1.0 / (1.0 + (-*v).exp());
        *v *= s;
    }
}

/// Numerically stable row-wise softmax.
pub(crate) fn softmax_rows_into(x: &[f64], out: &mut [f64], rows: usize, cols: usize) {
    debug_assert_eq!(x.len(), rows * cols);
    debug_assert_eq!(out.len(), rows * cols);
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let orow = &mut out[r * cols..(r + 1) * cols];
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let mut sum = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            let e = (v - max).exp();
            *o = e;
            sum += e;
        }
        for o in orow.iter_mut() {
            *o /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: &[usize], values: &[f64]) -> TensorId {
        tape.leaf_from(shape, values)
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[4], &[1.0, -2.0, 3.0, 0.5]);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn mse_against_detached_copy_has_zero_grad() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[3], &[0.2, -1.0, 4.0]);
        let target = tape.constant(&[3], &[0.2, -1.0, 4.0]);
        let loss = tape.mse(a, target).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.scalar_value(loss), 0.0);
        assert_eq!(tape.grad(a).unwrap(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn shared_leaf_accumulates_both_contributions() {
        // loss = sum(x * x) + sum(x)  =>  d/dx = 2x + 1
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3], &[1.0, 2.0, -3.0]);
        let sq = tape.mul(x, x).unwrap();
        let s1 = tape.sum(sq).unwrap();
        let s2 = tape.sum(x).unwrap();
        let loss = tape.add(s1, s2).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 5.0, -5.0]);
    }

    #[test]
    fn unreachable_leaf_gets_zero_grad() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], &[1.0, 2.0]);
        let y = leaf(&mut tape, &[2], &[5.0, 6.0]);
        let loss = tape.sum(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(y).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], &[1.0, 2.0]);
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn backward_rejects_foreign_id() {
        let mut other = Tape::new();
        let x = other.leaf_from(&[1], &[1.0]);
        let _more = other.leaf_from(&[1], &[2.0]);
        let mut tape = Tape::new();
        let err = tape.backward(x).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn matmul_known_product() {
        let mut tape = Tape::new();
        let a = tape.constant(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = tape.constant(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn concat_cols_layout_and_backward() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2, 1], &[1.0, 2.0]);
        let b = leaf(&mut tape, &[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let c = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.value(c), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let w = tape.constant(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let prod = tape.mul(c, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[1.0, 4.0]);
        assert_eq!(tape.grad(b).unwrap(), &[2.0, 3.0, 5.0, 6.0]);
    }

    #[test]
    fn weighted_rows_matches_manual_dot() {
        let mut tape = Tape::new();
        let w = leaf(&mut tape, &[2], &[0.25, 0.75]);
        let table = [1.0, 2.0, 3.0, 10.0, 20.0, 30.0];
        let out = tape.weighted_rows(w, &table, 3).unwrap();
        assert_eq!(tape.value(out), &[7.75, 15.5, 23.25]);
        let loss = tape.sum(out).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[6.0, 60.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(&[2, 3], &[1.0, 2.0, 3.0, -5.0, 0.0, 5.0]);
        let y = tape.softmax(x).unwrap();
        let v = tape.value(y);
        let s0: f64 = v[..3].iter().sum();
        let s1: f64 = v[3..].iter().sum();
        assert!((s0 - 1.0).abs() < 1e-12);
        assert!((s1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_leaves_grads_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2], &[1.0, 2.0]);
        let c = tape.constant(&[2], &[3.0, 4.0]);
        let loss = tape.sum(c).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0]);
    }
}
