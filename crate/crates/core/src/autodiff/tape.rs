//! A static computation graph over batch matrices (one row per sample) with
//! a reverse sweep for parameter gradients and input Jacobians.

use nalgebra::DMatrix;

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One-sided or two-sided hinge on a single column, summed over rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HingeKind {
    /// max(0, v - bound)
    AtMost { bound: f64 },
    /// max(0, bound - v)
    AtLeast { bound: f64 },
    /// max(0, |v - target| - margin)
    Within { target: f64, margin: f64 },
}

impl HingeKind {
    fn value(self, v: f64) -> f64 {
        match self {
            HingeKind::AtMost { bound } => (v - bound).max(0.0),
            HingeKind::AtLeast { bound } => (bound - v).max(0.0),
            HingeKind::Within { target, margin } => ((v - target).abs() - margin).max(0.0),
        }
    }

    fn slope(self, v: f64) -> f64 {
        match self {
            HingeKind::AtMost { bound } => f64::from(u8::from(v - bound > 0.0)),
            HingeKind::AtLeast { bound } => -f64::from(u8::from(bound - v > 0.0)),
            HingeKind::Within { target, margin } => {
                if (v - target).abs() - margin > 0.0 {
                    (v - target).signum()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input {
        slot: usize,
    },
    /// x·W + b, W stored fan_in x fan_out.
    Affine {
        x: NodeId,
        w: ParamId,
        b: ParamId,
    },
    /// x·W without bias; the tangent of an affine layer.
    Linear {
        x: NodeId,
        w: ParamId,
    },
    Relu(NodeId),
    /// t ⊙ 1[pre > 0]; `pre` is not differentiated.
    ReluGate {
        pre: NodeId,
        t: NodeId,
    },
    Concat(Vec<NodeId>),
    Columns {
        x: NodeId,
        cols: Vec<usize>,
    },
    /// Elementwise product with an input slot (for example a dropout mask).
    MulInput {
        x: NodeId,
        slot: usize,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    Add(NodeId, NodeId),
    ZerosLike {
        rows_like: NodeId,
    },
    /// Constant matrix whose every row is the unit vector e_col.
    UnitTangent {
        rows_like: NodeId,
        col: usize,
    },
    /// Σ_rows Σ_cols (pred - target)² / rows.
    SquaredError {
        pred: NodeId,
        target: NodeId,
    },
    Hinge {
        x: NodeId,
        col: usize,
        kind: HingeKind,
    },
    WeightedSum(Vec<(NodeId, f64)>),
    WeightL1(Vec<ParamId>),
    WeightL2(Vec<ParamId>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    width: usize,
    /// False for nodes created by `tangent`.
    primal: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    slot_widths: Vec<usize>,
}

/// Values of every evaluated node for one batch.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<DMatrix<f64>>,
    inputs: Vec<DMatrix<f64>>,
}

impl Trace {
    pub fn value(&self, node: NodeId) -> &DMatrix<f64> {
        &self.values[node.0]
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.values[node.0][(0, 0)]
    }

    pub fn n_rows(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.nrows())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_slots(&self) -> usize {
        self.slot_widths.len()
    }

    pub fn slot_width(&self, slot: usize) -> usize {
        self.slot_widths[slot]
    }

    pub fn width(&self, node: NodeId) -> usize {
        self.nodes[node.0].width
    }

    fn push(&mut self, op: Op, width: usize) -> NodeId {
        self.nodes.push(Node {
            op,
            width,
            primal: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Declare a batch input of the given width; returns its slot index.
    pub fn add_slot(&mut self, width: usize) -> usize {
        self.slot_widths.push(width);
        self.slot_widths.len() - 1
    }

    pub fn input(&mut self, slot: usize) -> NodeId {
        let w = self.slot_widths[slot];
        self.push(Op::Input { slot }, w)
    }

    pub fn affine(&mut self, params: &ParamStore, x: NodeId, w: ParamId, b: ParamId) -> NodeId {
        let (fan_in, fan_out) = params.get(w).shape();
        assert_eq!(fan_in, self.width(x), "affine input width");
        assert_eq!(params.get(b).shape(), (1, fan_out), "bias shape");
        self.push(Op::Affine { x, w, b }, fan_out)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x), self.width(x))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let w = parts.iter().map(|&p| self.width(p)).sum();
        self.push(Op::Concat(parts.to_vec()), w)
    }

    pub fn columns(&mut self, x: NodeId, cols: &[usize]) -> NodeId {
        assert!(cols.iter().all(|&c| c < self.width(x)), "column out of range");
        self.push(Op::Columns { x, cols: cols.to_vec() }, cols.len())
    }

    pub fn mul_input(&mut self, x: NodeId, slot: usize) -> NodeId {
        assert_eq!(self.slot_widths[slot], self.width(x), "mask width");
        self.push(Op::MulInput { x, slot }, self.width(x))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.push(Op::Scale { x, c }, self.width(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.width(a), self.width(b), "add widths");
        self.push(Op::Add(a, b), self.width(a))
    }

    pub fn squared_error(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        assert_eq!(self.width(target), self.width(pred), "target width");
        self.push(Op::SquaredError { pred, target }, 1)
    }

    pub fn hinge(&mut self, x: NodeId, col: usize, kind: HingeKind) -> NodeId {
        assert!(col < self.width(x));
        self.push(Op::Hinge { x, col, kind }, 1)
    }

    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        self.push(Op::WeightedSum(terms.to_vec()), 1)
    }

    pub fn weight_l1(&mut self, ids: &[ParamId]) -> NodeId {
        self.push(Op::WeightL1(ids.to_vec()), 1)
    }

    pub fn weight_l2(&mut self, ids: &[ParamId]) -> NodeId {
        self.push(Op::WeightL2(ids.to_vec()), 1)
    }

    /// Append nodes computing, for every primal node downstream of `seed`,
    /// the directional derivative along unit perturbations of `seed`'s
    /// column `col` (independently per row). Entry i is the tangent node of
    /// node i, or `None` when node i does not depend on the seed. The new
    /// nodes are ordinary tape nodes, so losses built on them can be
    /// differentiated with respect to the parameters.
    pub fn tangent(&mut self, seed: NodeId, col: usize) -> Vec<Option<NodeId>> {
        assert!(col < self.width(seed), "tangent column out of range");
        let n = self.nodes.len();
        let mut tan: Vec<Option<NodeId>> = vec![None; n];
        let unit = self.push(Op::UnitTangent { rows_like: seed, col }, self.width(seed));
        self.nodes[unit.0].primal = false;
        tan[seed.0] = Some(unit);
        for i in (seed.0 + 1)..n {
            if !self.nodes[i].primal {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let width = self.nodes[i].width;
            let new_op = match op {
                Op::Affine { x, w, .. } => tan[x.0].map(|t| Op::Linear { x: t, w }),
                Op::Relu(x) => tan[x.0].map(|t| Op::ReluGate { pre: x, t }),
                Op::Concat(parts) => {
                    if parts.iter().any(|p| tan[p.0].is_some()) {
                        let pieces: Vec<NodeId> = parts
                            .iter()
                            .map(|&p| match tan[p.0] {
                                Some(t) => t,
                                None => {
                                    let z = self.push(Op::ZerosLike { rows_like: p }, self.width(p));
                                    self.nodes[z.0].primal = false;
                                    z
                                }
                            })
                            .collect();
                        Some(Op::Concat(pieces))
                    } else {
                        None
                    }
                }
                Op::Columns { x, cols } => tan[x.0].map(|t| Op::Columns { x: t, cols }),
                Op::MulInput { x, slot } => tan[x.0].map(|t| Op::MulInput { x: t, slot }),
                Op::Scale { x, c } => tan[x.0].map(|t| Op::Scale { x: t, c }),
                Op::Add(a, b) => match (tan[a.0], tan[b.0]) {
                    (Some(ta), Some(tb)) => Some(Op::Add(ta, tb)),
                    (Some(t), None) | (None, Some(t)) => {
                        tan[i] = Some(t);
                        None
                    }
                    (None, None) => None,
                },
                // inputs, constants and scalar losses carry no tangent
                _ => None,
            };
            if let Some(op) = new_op {
                let id = self.push(op, width);
                self.nodes[id.0].primal = false;
                tan[i] = Some(id);
            }
        }
        tan
    }

    /// Evaluate every node.
    pub fn forward(&self, params: &ParamStore, inputs: &[DMatrix<f64>]) -> Result<Trace> {
        self.forward_upto(params, inputs, NodeId(self.nodes.len().saturating_sub(1)))
    }

    /// Evaluate nodes 0..=last only. Slots unused by those nodes may be
    /// passed as empty matrices.
    pub fn forward_upto(&self, params: &ParamStore, inputs: &[DMatrix<f64>], last: NodeId) -> Result<Trace> {
        if inputs.len() != self.slot_widths.len() {
            return Err(Error::Shape(format!(
                "tape has {} input slots, got {} matrices",
                self.slot_widths.len(),
                inputs.len()
            )));
        }
        let rows = inputs.iter().map(|m| m.nrows()).max().unwrap_or(0);
        for (k, m) in inputs.iter().enumerate() {
            let empty = m.nrows() == 0 && m.ncols() == 0;
            if !empty && (m.nrows() != rows || m.ncols() != self.slot_widths[k]) {
                return Err(Error::Shape(format!(
                    "slot {k} expects {rows}x{}, got {}x{}",
                    self.slot_widths[k],
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        let slot = |k: usize| -> Result<&DMatrix<f64>> {
            let m = &inputs[k];
            if m.ncols() != self.slot_widths[k] {
                return Err(Error::Shape(format!("slot {k} was left empty but is needed")));
            }
            Ok(m)
        };
        let count = if self.nodes.is_empty() { 0 } else { last.0 + 1 };
        let mut values: Vec<DMatrix<f64>> = Vec::with_capacity(count);
        for node in &self.nodes[..count] {
            let v = match &node.op {
                Op::Input { slot: k } => slot(*k)?.clone(),
                Op::Affine { x, w, b } => {
                    let mut y = &values[x.0] * params.get(*w);
                    let bias = params.get(*b);
                    for (j, mut col) in y.column_iter_mut().enumerate() {
                        col.add_scalar_mut(bias[(0, j)]);
                    }
                    y
                }
                Op::Linear { x, w } => &values[x.0] * params.get(*w),
                Op::Relu(x) => values[x.0].map(|v| v.max(0.0)),
                Op::ReluGate { pre, t } => values[t.0].zip_map(&values[pre.0], |t, p| if p > 0.0 { t } else { 0.0 }),
                Op::Concat(parts) => {
                    let mut y = DMatrix::zeros(rows, node.width);
                    let mut at = 0;
                    for p in parts {
                        let v = &values[p.0];
                        y.columns_mut(at, v.ncols()).copy_from(v);
                        at += v.ncols();
                    }
                    y
                }
                Op::Columns { x, cols } => values[x.0].select_columns(cols.iter()),
                Op::MulInput { x, slot: k } => values[x.0].component_mul(slot(*k)?),
                Op::Scale { x, c } => &values[x.0] * *c,
                Op::Add(a, b) => &values[a.0] + &values[b.0],
                Op::ZerosLike { rows_like } => DMatrix::zeros(values[rows_like.0].nrows(), node.width),
                Op::UnitTangent { rows_like, col } => {
                    let mut y = DMatrix::zeros(values[rows_like.0].nrows(), node.width);
                    y.column_mut(*col).fill(1.0);
                    y
                }
                Op::SquaredError { pred, target } => {
                    let p = &values[pred.0];
                    let n = p.nrows().max(1) as f64;
                    DMatrix::from_element(1, 1, (p - &values[target.0]).norm_squared() / n)
                }
                Op::Hinge { x, col, kind } => {
                    let s: f64 = values[x.0].column(*col).iter().map(|&v| kind.value(v)).sum();
                    DMatrix::from_element(1, 1, s)
                }
                Op::WeightedSum(terms) => {
                    DMatrix::from_element(1, 1, terms.iter().map(|(t, c)| c * values[t.0][(0, 0)]).sum())
                }
                Op::WeightL1(ids) => DMatrix::from_element(
                    1,
                    1,
                    ids.iter()
                        .map(|&id| params.get(id).iter().map(|x| x.abs()).sum::<f64>())
                        .sum(),
                ),
                Op::WeightL2(ids) => {
                    DMatrix::from_element(1, 1, ids.iter().map(|&id| params.get(id).norm_squared()).sum())
                }
            };
            values.push(v);
        }
        Ok(Trace {
            values,
            inputs: inputs.to_vec(),
        })
    }

    /// Reverse sweep from `seed` with initial adjoint `seed_adj`. Returns the
    /// per-slot input adjoints and, when requested, per-block parameter
    /// gradients.
    fn sweep(
        &self,
        params: &ParamStore,
        trace: &Trace,
        seed: NodeId,
        seed_adj: DMatrix<f64>,
        want_params: bool,
    ) -> (Vec<Option<DMatrix<f64>>>, Vec<Option<DMatrix<f64>>>) {
        let mut adj: Vec<Option<DMatrix<f64>>> = vec![None; seed.0 + 1];
        let mut slot_adj: Vec<Option<DMatrix<f64>>> = vec![None; self.slot_widths.len()];
        let mut pgrad: Vec<Option<DMatrix<f64>>> = vec![None; params.blocks().len()];
        adj[seed.0] = Some(seed_adj);

        fn acc(slot: &mut Option<DMatrix<f64>>, g: DMatrix<f64>) {
            match slot {
                Some(s) => *s += g,
                None => *slot = Some(g),
            }
        }

        for i in (0..=seed.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let vals = &trace.values;
            match &self.nodes[i].op {
                Op::Input { slot } => acc(&mut slot_adj[*slot], g),
                Op::Affine { x, w, b } => {
                    if want_params {
                        acc(&mut pgrad[w.0], vals[x.0].transpose() * &g);
                        acc(
                            &mut pgrad[b.0],
                            DMatrix::from_row_slice(1, g.ncols(), g.row_sum().as_slice()),
                        );
                    }
                    acc(&mut adj[x.0], &g * params.get(*w).transpose());
                }
                Op::Linear { x, w } => {
                    if want_params {
                        acc(&mut pgrad[w.0], vals[x.0].transpose() * &g);
                    }
                    acc(&mut adj[x.0], &g * params.get(*w).transpose());
                }
                Op::Relu(x) => {
                    let d = g.zip_map(&vals[i], |g, y| if y > 0.0 { g } else { 0.0 });
                    acc(&mut adj[x.0], d);
                }
                Op::ReluGate { pre, t } => {
                    let d = g.zip_map(&vals[pre.0], |g, p| if p > 0.0 { g } else { 0.0 });
                    acc(&mut adj[t.0], d);
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.nodes[p.0].width;
                        acc(&mut adj[p.0], g.columns(at, w).into_owned());
                        at += w;
                    }
                }
                Op::Columns { x, cols } => {
                    let mut d = DMatrix::zeros(g.nrows(), self.nodes[x.0].width);
                    for (k, &c) in cols.iter().enumerate() {
                        let mut col = d.column_mut(c);
                        col += g.column(k);
                    }
                    acc(&mut adj[x.0], d);
                }
                Op::MulInput { x, slot } => acc(&mut adj[x.0], g.component_mul(&trace.inputs[*slot])),
                Op::Scale { x, c } => acc(&mut adj[x.0], g * *c),
                Op::Add(a, b) => {
                    acc(&mut adj[a.0], g.clone());
                    acc(&mut adj[b.0], g);
                }
                Op::ZerosLike { .. } | Op::UnitTangent { .. } => {}
                Op::SquaredError { pred, target } => {
                    let p = &vals[pred.0];
                    let n = p.nrows().max(1) as f64;
                    let d = (p - &vals[target.0]) * (2.0 * g[(0, 0)] / n);
                    acc(&mut adj[target.0], -&d);
                    acc(&mut adj[pred.0], d);
                }
                Op::Hinge { x, col, kind } => {
                    let v = &vals[x.0];
                    let mut d = DMatrix::zeros(v.nrows(), v.ncols());
                    for r in 0..v.nrows() {
                        d[(r, *col)] = g[(0, 0)] * kind.slope(v[(r, *col)]);
                    }
                    acc(&mut adj[x.0], d);
                }
                Op::WeightedSum(terms) => {
                    for (t, c) in terms {
                        acc(&mut adj[t.0], DMatrix::from_element(1, 1, c * g[(0, 0)]));
                    }
                }
                Op::WeightL1(ids) => {
                    if want_params {
                        for id in ids {
                            acc(&mut pgrad[id.0], params.get(*id).map(|w| g[(0, 0)] * sign(w)));
                        }
                    }
                }
                Op::WeightL2(ids) => {
                    if want_params {
                        for id in ids {
                            acc(&mut pgrad[id.0], params.get(*id) * (2.0 * g[(0, 0)]));
                        }
                    }
                }
            }
        }
        (slot_adj, pgrad)
    }

    /// Gradient of a scalar node with respect to every parameter, flattened
    /// in `ParamStore` order with masked entries zeroed.
    pub fn backward(&self, params: &ParamStore, trace: &Trace, loss: NodeId) -> Result<Vec<f64>> {
        if loss.0 >= trace.values.len() {
            return Err(Error::Shape(format!("node {} was not evaluated", loss.0)));
        }
        if trace.values[loss.0].shape() != (1, 1) || self.nodes[loss.0].width != 1 {
            return Err(Error::Shape(format!("node {} is not a scalar", loss.0)));
        }
        let (_, pgrad) = self.sweep(params, trace, loss, DMatrix::from_element(1, 1, 1.0), true);
        let mut flat = Vec::with_capacity(params.n_params());
        for (b, g) in params.blocks().iter().zip(pgrad) {
            match g {
                Some(g) => flat.extend_from_slice(g.as_slice()),
                None => flat.extend(std::iter::repeat_n(0.0, b.value.len())),
            }
        }
        params.mask_flat(&mut flat);
        Ok(flat)
    }

    /// Jacobian for one sample row: entry (a, b) is
    /// ∂ outputs[a] / ∂ inputs[b], where outputs are (node, column) pairs and
    /// inputs are (slot, column) pairs. One reverse sweep per output.
    pub fn jacobian(
        &self,
        params: &ParamStore,
        trace: &Trace,
        outputs: &[(NodeId, usize)],
        inputs: &[(usize, usize)],
        row: usize,
    ) -> Result<DMatrix<f64>> {
        if row >= trace.n_rows() {
            return Err(Error::Shape(format!("row {row} out of range")));
        }
        let mut jac = DMatrix::zeros(outputs.len(), inputs.len());
        for (a, &(node, col)) in outputs.iter().enumerate() {
            if node.0 >= trace.values.len() || col >= self.nodes[node.0].width {
                return Err(Error::Shape(format!("output ({}, {col}) not available", node.0)));
            }
            let v = &trace.values[node.0];
            let mut seed = DMatrix::zeros(v.nrows(), v.ncols());
            seed[(row, col)] = 1.0;
            let (slot_adj, _) = self.sweep(params, trace, node, seed, false);
            for (b, &(slot, icol)) in inputs.iter().enumerate() {
                if slot >= self.slot_widths.len() || icol >= self.slot_widths[slot] {
                    return Err(Error::Shape(format!("input ({slot}, {icol}) not available")));
                }
                if let Some(g) = &slot_adj[slot] {
                    jac[(a, b)] = g[(row, icol)];
                }
            }
        }
        Ok(jac)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
