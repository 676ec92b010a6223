//! Operation tape and backward pass.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{contract, Error, Result};

use super::{matmul_kernel, ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Fixed shortest-path structure for the differentiable closeness op.
///
/// `paths[v]` is `None` when node `v` cannot reach every other node
/// (its closeness is 0 with zero gradient). Otherwise it holds, per
/// reachable target, the feature-vector indices of the path's edges in
/// walk order, so forward sums match the plain Dijkstra result bit for bit.
#[derive(Debug, Clone)]
pub struct PathStructure {
    pub r: usize,
    pub paths: Vec<Option<Vec<Vec<usize>>>>,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Relu { x: NodeId },
    Sigmoid { x: NodeId },
    Abs { x: NodeId },
    Square { x: NodeId },
    Ln { x: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Scale { x: NodeId, k: f64 },
    AddScalar { x: NodeId },
    Sum { x: NodeId },
    Mean { x: NodeId },
    MeanRows { x: NodeId },
    Transpose { x: NodeId },
    Row { x: NodeId, index: usize },
    VStack { parts: Vec<NodeId> },
    NormalizeUnit { x: NodeId },
    DevectorizeRow { x: NodeId, r: usize },
    ClosenessPaths { x: NodeId, structure: Rc<PathStructure> },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Parameter this leaf mirrors, when it was placed trainable.
    param: Option<ParamId>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PlaceMode {
    Trainable,
    Frozen,
}

/// Records a computation so [`Tape::backward`] can run reverse-mode
/// differentiation over it. Nodes only reference earlier nodes, so the
/// recording order is already topological.
///
/// A tape is confined to one thread; distinct tapes are independent.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    placements: HashMap<ParamId, (NodeId, usize)>,
    last_backward_invocations: usize,
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

    /// Number of backward rules invoked by the most recent [`Tape::backward`].
    pub fn last_backward_invocations(&self) -> usize {
        self.last_backward_invocations
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated at a node, if backward has assigned one.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    /// Places a constant (no gradient tracked).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false, None)
    }

    /// Places an input that should receive a gradient.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true, None)
    }

    /// Stops gradient flow: copies a node's values into a fresh constant.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.clone();
        self.constant(Tensor {
            grad: None,
            requires_grad: false,
            ..value
        })
    }

    /// Places a stored parameter, caching so repeated placement of the same
    /// parameter shares one node. A parameter may not be placed both frozen
    /// and trainable on the same tape.
    pub fn place_param(&mut self, store: &ParamStore, id: ParamId) -> Result<NodeId> {
        self.place(store, id, PlaceMode::Trainable)
    }

    /// Places a parameter as a constant: its gradient is not tracked.
    pub fn place_frozen(&mut self, store: &ParamStore, id: ParamId) -> Result<NodeId> {
        self.place(store, id, PlaceMode::Frozen)
    }

    fn place(&mut self, store: &ParamStore, id: ParamId, mode: PlaceMode) -> Result<NodeId> {
        let mode_tag = match mode {
            PlaceMode::Trainable => 0,
            PlaceMode::Frozen => 1,
        };
        if let Some(&(node, tag)) = self.placements.get(&id) {
            if tag != mode_tag {
                return Err(contract(format!(
                    "parameter {} placed both frozen and trainable on one tape",
                    store.name(id)
                )));
            }
            return Ok(node);
        }
        let value = store.get(id).clone();
        let node = match mode {
            PlaceMode::Trainable => self.push_leaf(value, true, Some(id)),
            PlaceMode::Frozen => self.push_leaf(value, false, None),
        };
        self.placements.insert(id, (node, mode_tag));
        Ok(node)
    }

    /// Accumulates the gradients of trainable parameter leaves back into the
    /// store. Call once after [`Tape::backward`].
    pub fn flush_grads_into(&self, store: &mut ParamStore) -> Result<()> {
        for node in &self.nodes {
            if let Some(pid) = node.param {
                if let Some(g) = node.value.grad() {
                    let g = g.to_vec();
                    store.get_mut(pid).accumulate_grad(&g)?;
                }
            }
        }
        Ok(())
    }

    fn push_leaf(&mut self, mut value: Tensor, requires_grad: bool, param: Option<ParamId>) -> NodeId {
        value.requires_grad = requires_grad;
        value.grad = None;
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param,
        });
        id
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Ok(id)
    }

    fn shapes_match(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (ar, ac) = self.nodes[a.0].value.shape();
        let (br, bc) = self.nodes[b.0].value.shape();
        if (ar, ac) != (br, bc) {
            return Err(Error::ShapeMismatch {
                op,
                left_rows: ar,
                left_cols: ac,
                right_rows: br,
                right_cols: bc,
            });
        }
        Ok(())
    }

    // ---- forward operations -------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.nodes[a.0].value.shape();
        let (kb, n) = self.nodes[b.0].value.shape();
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left_rows: m,
                left_cols: ka,
                right_rows: kb,
                right_cols: n,
            });
        }
        let data = matmul_kernel(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            m,
            ka,
            n,
        );
        let value = Tensor::from_shape_unchecked(m, n, data);
        self.push("matmul", value, Op::MatMul { a, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.shapes_match("add", a, b)?;
        let value = self.binary_value(a, b, |x, y| x + y);
        self.push("add", value, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.shapes_match("sub", a, b)?;
        let value = self.binary_value(a, b, |x, y| x - y);
        self.push("sub", value, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.shapes_match("mul", a, b)?;
        let value = self.binary_value(a, b, |x, y| x * y);
        self.push("mul", value, Op::Mul { a, b })
    }

    fn binary_value(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_shape_unchecked(va.rows(), va.cols(), data)
    }

    fn unary(
        &mut self,
        name: &'static str,
        x: NodeId,
        op: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        let data = v.data().iter().map(|&a| f(a)).collect();
        let value = Tensor::from_shape_unchecked(v.rows(), v.cols(), data);
        self.push(name, value, op)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("relu", x, Op::Relu { x }, |a| a.max(0.0))
    }

    /// Hinge `max(x, 0)`; shares the relu rule (subgradient 0 at 0).
    pub fn max_with_zero(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("max_with_zero", x, Op::Relu { x }, |a| a.max(0.0))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("sigmoid", x, Op::Sigmoid { x }, |a| 1.0 / (1.0 + (-a).exp()))
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("abs", x, Op::Abs { x }, f64::abs)
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("square", x, Op::Square { x }, |a| a * a)
    }

    pub fn ln(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary("ln", x, Op::Ln { x }, f64::ln)
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.unary("clamp", x, Op::Clamp { x, lo, hi }, |a| a.clamp(lo, hi))
    }

    pub fn scale(&mut self, x: NodeId, k: f64) -> Result<NodeId> {
        self.unary("scale", x, Op::Scale { x, k }, |a| a * k)
    }

    pub fn add_scalar(&mut self, x: NodeId, k: f64) -> Result<NodeId> {
        self.unary("add_scalar", x, Op::AddScalar { x }, |a| a + k)
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.reduce("sum", x, Op::Sum { x }, |data| data.iter().sum())
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        self.reduce("mean", x, Op::Mean { x }, |data| {
            data.iter().sum::<f64>() / data.len() as f64
        })
    }

    fn reduce(
        &mut self,
        name: &'static str,
        x: NodeId,
        op: Op,
        f: impl Fn(&[f64]) -> f64,
    ) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        if v.is_empty() {
            return Err(Error::Degenerate(format!("{name} of an empty tensor")));
        }
        let value = Tensor::from_shape_unchecked(1, 1, vec![f(v.data())]);
        self.push(name, value, op)
    }

    /// Column means over rows: `n x m -> 1 x m`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        if v.is_empty() {
            return Err(Error::Degenerate("mean_rows of an empty tensor".into()));
        }
        let (rows, cols) = v.shape();
        let mut data = vec![0.0; cols];
        for i in 0..rows {
            for j in 0..cols {
                data[j] += v.get(i, j);
            }
        }
        for d in &mut data {
            *d /= rows as f64;
        }
        let value = Tensor::from_shape_unchecked(1, cols, data);
        self.push("mean_rows", value, Op::MeanRows { x })
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.nodes[x.0].value.transposed();
        self.push("transpose", value, Op::Transpose { x })
    }

    /// Extracts row `index` as a `1 x cols` node.
    pub fn row(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        if index >= v.rows() {
            return Err(contract(format!(
                "row {index} out of range for {} rows",
                v.rows()
            )));
        }
        let value = Tensor::from_shape_unchecked(1, v.cols(), v.row(index).to_vec());
        self.push("row", value, Op::Row { x, index })
    }

    pub fn vstack(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(contract("vstack of zero nodes"));
        }
        let cols = self.nodes[parts[0].0].value.cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = &self.nodes[p.0].value;
            if v.cols() != cols {
                return Err(Error::ShapeMismatch {
                    op: "vstack",
                    left_rows: rows,
                    left_cols: cols,
                    right_rows: v.rows(),
                    right_cols: v.cols(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::from_shape_unchecked(rows, cols, data);
        self.push("vstack", value, Op::VStack { parts: parts.to_vec() })
    }

    /// Scales the whole tensor to unit Frobenius norm.
    pub fn normalize_unit(&mut self, x: NodeId) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        let norm = v.frobenius_norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numerical(
                "normalize_unit: zero or non-finite norm".into(),
            ));
        }
        let data = v.data().iter().map(|&a| a / norm).collect();
        let value = Tensor::from_shape_unchecked(v.rows(), v.cols(), data);
        self.push("normalize_unit", value, Op::NormalizeUnit { x })
    }

    /// Scatters a `1 x r(r-1)/2` feature row into an `r x r` symmetric
    /// zero-diagonal matrix, clamping negative entries to 0 (clamped entries
    /// receive zero gradient).
    pub fn devectorize_row(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        let f = r * (r - 1) / 2;
        if v.rows() != 1 || v.cols() != f {
            return Err(contract(format!(
                "devectorize_row expects 1x{f}, got {}x{}",
                v.rows(),
                v.cols()
            )));
        }
        let mut data = vec![0.0; r * r];
        let mut k = 0;
        for i in 0..r {
            for j in (i + 1)..r {
                let w = v.data()[k].max(0.0);
                data[i * r + j] = w;
                data[j * r + i] = w;
                k += 1;
            }
        }
        let value = Tensor::from_shape_unchecked(r, r, data);
        self.push("devectorize_row", value, Op::DevectorizeRow { x, r })
    }

    /// Closeness centrality of a feature row along pre-fixed shortest paths.
    ///
    /// Output is `1 x r`. Distances are sums of `1/w` over each fixed path's
    /// edges; gradients are exact wherever the fixed paths are the unique
    /// shortest paths.
    pub fn closeness_fixed_paths(
        &mut self,
        x: NodeId,
        structure: Rc<PathStructure>,
    ) -> Result<NodeId> {
        let v = &self.nodes[x.0].value;
        let r = structure.r;
        let f = r * (r - 1) / 2;
        if v.rows() != 1 || v.cols() != f {
            return Err(contract(format!(
                "closeness_fixed_paths expects 1x{f}, got {}x{}",
                v.rows(),
                v.cols()
            )));
        }
        let data = closeness_forward(v.data(), &structure)?;
        let value = Tensor::from_shape_unchecked(1, r, data);
        self.push("closeness_fixed_paths", value, Op::ClosenessPaths { x, structure })
    }

    // ---- backward ------------------------------------------------------------

    /// Reverse sweep from a scalar loss. Gradients of this sweep are added
    /// into each node's accumulator, so repeated calls accumulate.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.shape() != (1, 1) {
            return Err(contract(format!(
                "backward requires a scalar loss, got {}x{}",
                loss_value.rows(),
                loss_value.cols()
            )));
        }
        if self.nodes.is_empty() {
            return Err(contract("backward on an empty tape"));
        }

        let mut sweep: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        sweep[loss.0][0] = 1.0;

        let mut invocations = 0;
        for i in (0..self.nodes.len()).rev() {
            invocations += 1;
            let g = std::mem::take(&mut sweep[i]);
            let op = self.nodes[i].op.clone();
            self.backward_rule(&op, i, &g, &mut sweep);
            sweep[i] = g;
        }
        self.last_backward_invocations = invocations;

        for (node, g) in self.nodes.iter_mut().zip(sweep) {
            if node.value.requires_grad || !matches!(node.op, Op::Leaf) {
                node.value.accumulate_grad(&g)?;
            }
        }
        Ok(())
    }

    fn backward_rule(&self, op: &Op, node: usize, g: &[f64], sweep: &mut [Vec<f64>]) {
        match *op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let va = &self.nodes[a.0].value;
                let vb = &self.nodes[b.0].value;
                let (m, k) = va.shape();
                let n = vb.cols();
                // dL/da = g . b^T
                let bt = vb.transposed();
                let da = matmul_kernel(g, bt.data(), m, n, k);
                for (acc, d) in sweep[a.0].iter_mut().zip(da) {
                    *acc += d;
                }
                // dL/db = a^T . g
                let at = va.transposed();
                let db = matmul_kernel(at.data(), g, k, m, n);
                for (acc, d) in sweep[b.0].iter_mut().zip(db) {
                    *acc += d;
                }
            }
            Op::Add { a, b } => {
                for (acc, &d) in sweep[a.0].iter_mut().zip(g) {
                    *acc += d;
                }
                for (acc, &d) in sweep[b.0].iter_mut().zip(g) {
                    *acc += d;
                }
            }
            Op::Sub { a, b } => {
                for (acc, &d) in sweep[a.0].iter_mut().zip(g) {
                    *acc += d;
                }
                for (acc, &d) in sweep[b.0].iter_mut().zip(g) {
                    *acc -= d;
                }
            }
            Op::Mul { a, b } => {
                let va = self.nodes[a.0].value.data();
                let vb = self.nodes[b.0].value.data();
                for ((acc, &d), &y) in sweep[a.0].iter_mut().zip(g).zip(vb) {
                    *acc += d * y;
                }
                for ((acc, &d), &x) in sweep[b.0].iter_mut().zip(g).zip(va) {
                    *acc += d * x;
                }
            }
            Op::Relu { x } => {
                let vx = self.nodes[x.0].value.data();
                for ((acc, &d), &a) in sweep[x.0].iter_mut().zip(g).zip(vx) {
                    if a > 0.0 {
                        *acc += d;
                    }
                }
            }
            Op::Sigmoid { x } => {
                let y = self.nodes[node].value.data();
                for ((acc, &d), &s) in sweep[x.0].iter_mut().zip(g).zip(y) {
                    *acc += d * s * (1.0 - s);
                }
            }
            Op::Abs { x } => {
                let vx = self.nodes[x.0].value.data();
                for ((acc, &d), &a) in sweep[x.0].iter_mut().zip(g).zip(vx) {
                    *acc += d * if a > 0.0 { 1.0 } else if a < 0.0 { -1.0 } else { 0.0 };
                }
            }
            Op::Square { x } => {
                let vx = self.nodes[x.0].value.data();
                for ((acc, &d), &a) in sweep[x.0].iter_mut().zip(g).zip(vx) {
                    *acc += d * 2.0 * a;
                }
            }
            Op::Ln { x } => {
                let vx = self.nodes[x.0].value.data();
                for ((acc, &d), &a) in sweep[x.0].iter_mut().zip(g).zip(vx) {
                    *acc += d / a;
                }
            }
            Op::Clamp { x, lo, hi } => {
                let vx = self.nodes[x.0].value.data();
                for ((acc, &d), &a) in sweep[x.0].iter_mut().zip(g).zip(vx) {
                    if a > lo && a < hi {
                        *acc += d;
                    }
                }
            }
            Op::Scale { x, k } => {
                for (acc, &d) in sweep[x.0].iter_mut().zip(g) {
                    *acc += d * k;
                }
            }
            Op::AddScalar { x } => {
                for (acc, &d) in sweep[x.0].iter_mut().zip(g) {
                    *acc += d;
                }
            }
            Op::Sum { x } => {
                let d = g[0];
                for acc in sweep[x.0].iter_mut() {
                    *acc += d;
                }
            }
            Op::Mean { x } => {
                let n = self.nodes[x.0].value.len() as f64;
                let d = g[0] / n;
                for acc in sweep[x.0].iter_mut() {
                    *acc += d;
                }
            }
            Op::MeanRows { x } => {
                let (rows, cols) = self.nodes[x.0].value.shape();
                let inv = 1.0 / rows as f64;
                for i in 0..rows {
                    for j in 0..cols {
                        sweep[x.0][i * cols + j] += g[j] * inv;
                    }
                }
            }
            Op::Transpose { x } => {
                let (rows, cols) = self.nodes[x.0].value.shape();
                for i in 0..rows {
                    for j in 0..cols {
                        sweep[x.0][i * cols + j] += g[j * rows + i];
                    }
                }
            }
            Op::Row { x, index } => {
                let cols = self.nodes[x.0].value.cols();
                for j in 0..cols {
                    sweep[x.0][index * cols + j] += g[j];
                }
            }
            Op::VStack { ref parts } => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.nodes[p.0].value.len();
                    for (acc, &d) in sweep[p.0].iter_mut().zip(&g[offset..offset + len]) {
                        *acc += d;
                    }
                    offset += len;
                }
            }
            Op::NormalizeUnit { x } => {
                let vx = self.nodes[x.0].value.data();
                let y = self.nodes[node].value.data();
                let norm = vx.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = y.iter().zip(g).map(|(&yi, &gi)| yi * gi).sum();
                for ((acc, &d), &yi) in sweep[x.0].iter_mut().zip(g).zip(y) {
                    *acc += (d - yi * dot) / norm;
                }
            }
            Op::DevectorizeRow { x, r } => {
                let vx = self.nodes[x.0].value.data();
                let mut k = 0;
                for i in 0..r {
                    for j in (i + 1)..r {
                        if vx[k] > 0.0 {
                            sweep[x.0][k] += g[i * r + j] + g[j * r + i];
                        }
                        k += 1;
                    }
                }
            }
            Op::ClosenessPaths { x, ref structure } => {
                let vx = self.nodes[x.0].value.data();
                let r = structure.r;
                for (v, paths) in structure.paths.iter().enumerate() {
                    let Some(paths) = paths else { continue };
                    let gv = g[v];
                    if gv == 0.0 {
                        continue;
                    }
                    let mut total = 0.0;
                    for path in paths {
                        for &k in path {
                            total += 1.0 / vx[k];
                        }
                    }
                    let coeff = gv * (r as f64 - 1.0) / (total * total);
                    for path in paths {
                        for &k in path {
                            sweep[x.0][k] += coeff / (vx[k] * vx[k]);
                        }
                    }
                }
            }
        }
    }
}

fn closeness_forward(x: &[f64], structure: &PathStructure) -> Result<Vec<f64>> {
    let r = structure.r;
    let mut out = vec![0.0; r];
    for (v, paths) in structure.paths.iter().enumerate() {
        let Some(paths) = paths else {
            out[v] = 0.0;
            continue;
        };
        let mut total = 0.0;
        for path in paths {
            let mut dist = 0.0;
            for &k in path {
                if x[k] <= 0.0 {
                    return Err(Error::Numerical(
                        "closeness_fixed_paths: path crosses a non-positive weight".into(),
                    ));
                }
                dist += 1.0 / x[k];
            }
            total += dist;
        }
        out[v] = (r as f64 - 1.0) / total;
    }
    Ok(out)
}

impl Tensor {
    fn from_shape_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(data.len(), rows * cols);
        Tensor {
            rows,
            cols,
            data,
            requires_grad: false,
            grad: None,
        }
    }
}
