//! Compilation of a layered DAG into a multi-output network, and the losses
//! it is trained on.
//!
//! Layout (rows are samples):
//!
//! ```text
//! roots ─ trunk ─┬─ branch_b ─ layer 1 heads ─ layer 2 heads ─ … ─┐
//!                │                                                 ├─ fusion ─ output heads
//!                └─ branch_o ──────────────────────────────────────┘
//! ```
//!
//! Heads of layer j ≥ 2 read `branch_b` plus the heads of earlier layers,
//! masked so each head only sees the earlier heads that are its DAG parents.

mod prior;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamId, ParamStore, Tape, Trace};
use crate::error::{Error, Result};
use crate::graph::{CausalDag, NodePartition};

pub use prior::{DomainPrior, Relation, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Widths {
    pub trunk: usize,
    pub branch_b: usize,
    pub branch_o: usize,
    pub fusion: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Self {
            trunk: 32,
            branch_b: 16,
            branch_o: 16,
            fusion: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompileOptions {
    pub widths: Widths,
    /// Insert multiplicative mask inputs after the input and every hidden
    /// layer (used for dropout).
    pub dropout_masks: bool,
    /// Also build one squared-error node per modeled vertex.
    pub per_node_losses: bool,
}

#[derive(Debug, Clone)]
struct CompiledPrior {
    prior: DomainPrior,
    hinge: NodeId,
}

/// Where a modeled vertex's prediction lives: layer `Some(j)` (0-based
/// intermediate layer) or `None` for the output heads, plus a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct HeadLoc {
    layer: Option<usize>,
    col: usize,
}

#[derive(Debug, Clone)]
pub struct CinnArchitecture {
    partition: NodePartition,
    dag: CausalDag,
    target: usize,
    widths: Widths,
    tape: Tape,
    template: ParamStore,
    root_slot: usize,
    obs_b_slot: Option<usize>,
    obs_o_slot: usize,
    mask_slots: Vec<usize>,
    root_input: NodeId,
    layer_heads: Vec<NodeId>,
    output: NodeId,
    mse_b: Option<NodeId>,
    mse_o: NodeId,
    node_losses: Vec<(usize, NodeId)>,
    heads: BTreeMap<usize, HeadLoc>,
    priors: Vec<CompiledPrior>,
    domain: Option<NodeId>,
    penalty: Option<NodeId>,
}

/// Observed values for one batch, aligned with the partition ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// N x T root values.
    pub roots: DMatrix<f64>,
    /// N x ΣK intermediate observations, layer by layer.
    pub obs_b: DMatrix<f64>,
    /// N x Z leaf observations.
    pub obs_o: DMatrix<f64>,
}

impl Batch {
    pub fn n_rows(&self) -> usize {
        self.roots.nrows()
    }
}

/// Predictions for every modeled vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub intermediate: Vec<DMatrix<f64>>,
    pub outputs: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse_b: f64,
    pub mse_o: f64,
    pub domain: f64,
    pub gamma: f64,
    pub total: f64,
}

pub fn total_loss(mse_b: f64, mse_o: f64, domain: f64, gamma: f64) -> LossBreakdown {
    LossBreakdown {
        mse_b,
        mse_o,
        domain,
        gamma,
        total: mse_b + mse_o + gamma * domain,
    }
}

/// Weight penalty added to the training objective of the baseline network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightPenalty {
    L1(f64),
    L2(f64),
}

fn dense(
    params: &mut ParamStore,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    mask: Option<DMatrix<f64>>,
) -> (ParamId, ParamId) {
    let w = params.add(format!("{name}.weight"), DMatrix::zeros(fan_in, fan_out), mask, false);
    let b = params.add(format!("{name}.bias"), DMatrix::zeros(1, fan_out), None, true);
    (w, b)
}

impl CinnArchitecture {
    /// Build the network for `partition` (isolated vertices are ignored).
    pub fn compile(partition: &NodePartition, dag: &CausalDag, target: usize, opts: &CompileOptions) -> Result<Self> {
        let n = dag.n_vertices();
        if partition.n_vertices() != n {
            return Err(Error::Model(format!(
                "partition covers {} vertices, DAG has {n}",
                partition.n_vertices()
            )));
        }
        if target >= n {
            return Err(Error::Model(format!("target {target} out of range for {n} vertices")));
        }
        if partition.roots.is_empty() {
            return Err(Error::Model("no root vertices: the network has no inputs".into()));
        }
        if partition.roots.contains(&target) || partition.isolated.contains(&target) {
            return Err(Error::Model(format!(
                "target '{}' is a root or isolated vertex after refinement, so no head predicts it; \
                 add an edge into the target or reverse one of its outgoing edges",
                dag.name(target)
            )));
        }
        if partition.leaves.is_empty() {
            return Err(Error::Model("no leaf vertices".into()));
        }
        let w = opts.widths;
        if w.trunk == 0 || w.branch_o == 0 || w.fusion == 0 || (partition.n_layers() > 0 && w.branch_b == 0) {
            return Err(Error::Model("layer widths must be positive".into()));
        }

        let mut params = ParamStore::new();
        let mut tape = Tape::new();
        let t_in = partition.roots.len();
        let k_total: usize = partition.layer_sizes().iter().sum();
        let z = partition.leaves.len();

        let root_slot = tape.add_slot(t_in);
        let obs_b_slot = (k_total > 0).then(|| tape.add_slot(k_total));
        let obs_o_slot = tape.add_slot(z);
        let mut mask_slots = Vec::new();
        let mut maybe_mask = |tape: &mut Tape, x: NodeId| -> NodeId {
            if opts.dropout_masks {
                let s = tape.add_slot(tape.width(x));
                mask_slots.push(s);
                tape.mul_input(x, s)
            } else {
                x
            }
        };

        let root_input = tape.input(root_slot);
        let x0 = maybe_mask(&mut tape, root_input);
        let (tw, tb) = dense(&mut params, "trunk", t_in, w.trunk, None);
        let h1 = tape.affine(&params, x0, tw, tb);
        let h1 = tape.relu(h1);
        let h1 = maybe_mask(&mut tape, h1);

        let mut heads = BTreeMap::new();
        let mut layer_heads = Vec::new();
        if partition.n_layers() > 0 {
            let (bw, bb) = dense(&mut params, "branch_b", w.trunk, w.branch_b, None);
            let h2 = tape.affine(&params, h1, bw, bb);
            let h2 = tape.relu(h2);
            let h2 = maybe_mask(&mut tape, h2);
            let mut earlier: Vec<usize> = Vec::new();
            for (j, layer) in partition.intermediate_layers.iter().enumerate() {
                let name = format!("layer{}.heads", j + 1);
                let head = if j == 0 {
                    let (hw, hb) = dense(&mut params, &name, w.branch_b, layer.len(), None);
                    tape.affine(&params, h2, hw, hb)
                } else {
                    let fan_in = w.branch_b + earlier.len();
                    let mask = DMatrix::from_fn(fan_in, layer.len(), |r, c| {
                        if r < w.branch_b || dag.has_edge(earlier[r - w.branch_b], layer[c]) {
                            1.0
                        } else {
                            0.0
                        }
                    });
                    let (hw, hb) = dense(&mut params, &name, fan_in, layer.len(), Some(mask));
                    let mut parts = vec![h2];
                    parts.extend(&layer_heads);
                    let input = tape.concat(&parts);
                    tape.affine(&params, input, hw, hb)
                };
                for (c, &v) in layer.iter().enumerate() {
                    heads.insert(v, HeadLoc { layer: Some(j), col: c });
                }
                earlier.extend(layer);
                layer_heads.push(head);
            }
        }

        let (ow, ob) = dense(&mut params, "branch_o", w.trunk, w.branch_o, None);
        let h3 = tape.affine(&params, h1, ow, ob);
        let h3 = tape.relu(h3);
        let h3 = maybe_mask(&mut tape, h3);
        let fusion_in = match layer_heads.last() {
            Some(&last) => tape.concat(&[last, h3]),
            None => h3,
        };
        let (fw, fb) = dense(&mut params, "fusion", tape.width(fusion_in), w.fusion, None);
        let h4 = tape.affine(&params, fusion_in, fw, fb);
        let h4 = tape.relu(h4);
        let h4 = maybe_mask(&mut tape, h4);
        let (yw, yb) = dense(&mut params, "output", w.fusion, z, None);
        let output = tape.affine(&params, h4, yw, yb);
        for (c, &v) in partition.leaves.iter().enumerate() {
            heads.insert(v, HeadLoc { layer: None, col: c });
        }

        let obs_b = obs_b_slot.map(|slot| tape.input(slot));
        let obs_o = tape.input(obs_o_slot);
        let mse_b = obs_b.map(|obs| {
            let all = if layer_heads.len() == 1 {
                layer_heads[0]
            } else {
                tape.concat(&layer_heads)
            };
            tape.squared_error(all, obs)
        });
        let mse_o = tape.squared_error(output, obs_o);
        let mut node_losses = Vec::new();
        if opts.per_node_losses {
            let mut offset = 0;
            for (j, layer) in partition.intermediate_layers.iter().enumerate() {
                for (c, &v) in layer.iter().enumerate() {
                    let pred = tape.columns(layer_heads[j], &[c]);
                    let obs = tape.columns(obs_b.expect("layers imply observations"), &[offset + c]);
                    node_losses.push((v, tape.squared_error(pred, obs)));
                }
                offset += layer.len();
            }
            for (c, &v) in partition.leaves.iter().enumerate() {
                let pred = tape.columns(output, &[c]);
                let obs = tape.columns(obs_o, &[c]);
                node_losses.push((v, tape.squared_error(pred, obs)));
            }
        }

        Ok(Self {
            partition: partition.clone(),
            dag: dag.clone(),
            target,
            widths: w,
            tape,
            template: params,
            root_slot,
            obs_b_slot,
            obs_o_slot,
            mask_slots,
            root_input,
            layer_heads,
            output,
            mse_b,
            mse_o,
            node_losses,
            heads,
            priors: Vec::new(),
            domain: None,
            penalty: None,
        })
    }

    /// Fully connected regressor from every non-target column to the target,
    /// built as the degenerate hierarchy with no intermediate layers.
    pub fn baseline(n_columns: usize, target: usize, opts: &CompileOptions) -> Result<Self> {
        if target >= n_columns || n_columns < 2 {
            return Err(Error::Model(format!(
                "bad baseline shape: target {target} of {n_columns} columns"
            )));
        }
        let roots: Vec<usize> = (0..n_columns).filter(|&v| v != target).collect();
        let names = (0..n_columns).map(|i| i.to_string()).collect();
        let dag = CausalDag::new(names, roots.iter().map(|&r| (r, target)))?;
        let partition = NodePartition {
            isolated: Vec::new(),
            roots,
            intermediate_layers: Vec::new(),
            leaves: vec![target],
        };
        Self::compile(&partition, &dag, target, opts)
    }

    pub fn partition(&self) -> &NodePartition {
        &self.partition
    }

    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn widths(&self) -> Widths {
        self.widths
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn mask_slots(&self) -> &[usize] {
        &self.mask_slots
    }

    pub fn root_slot(&self) -> usize {
        self.root_slot
    }

    pub fn priors(&self) -> Vec<DomainPrior> {
        self.priors.iter().map(|p| p.prior).collect()
    }

    /// Parameter layout with every value zero.
    pub fn new_params(&self) -> ParamStore {
        self.template.clone()
    }

    pub fn n_params(&self) -> usize {
        self.template.n_trainable()
    }

    fn weight_ids(&self) -> Vec<ParamId> {
        (0..self.template.blocks().len())
            .map(crate::autodiff::ParamId)
            .filter(|&id| !self.template.block(id).is_bias)
            .collect()
    }

    pub fn loss_nodes(&self) -> LossNodes {
        LossNodes {
            mse_b: self.mse_b,
            mse_o: self.mse_o,
            per_node: self.node_losses.clone(),
            domain: self.domain,
            penalty: self.penalty,
        }
    }

    /// Tape node of the leaf heads (N x Z).
    pub fn output_node(&self) -> NodeId {
        self.output
    }

    /// Tape nodes of the intermediate heads, one per layer.
    pub fn layer_head_nodes(&self) -> &[NodeId] {
        &self.layer_heads
    }

    /// Node holding predictions for layer `j` (0-based), or the output heads.
    fn head_node(&self, layer: Option<usize>) -> NodeId {
        layer.map_or(self.output, |j| self.layer_heads[j])
    }

    fn last_prediction_node(&self) -> NodeId {
        self.output
    }

    pub fn is_modeled(&self, v: usize) -> bool {
        self.heads.contains_key(&v)
    }

    /// Add per-sample hinge penalties on network derivatives. Each prior's
    /// cause must be a root or an intermediate vertex, its effect a modeled
    /// vertex in a later layer, and the DAG must contain a directed path
    /// from cause to effect.
    pub fn attach_priors(&mut self, priors: &[DomainPrior]) -> Result<()> {
        let mut hinges = Vec::new();
        for p in priors {
            p.validate()?;
            let n = self.dag.n_vertices();
            if p.cause >= n || p.effect >= n {
                return Err(Error::Config(format!("prior {p}: vertex out of range")));
            }
            if !self.dag.has_path(p.cause, p.effect) {
                return Err(Error::Config(format!(
                    "prior {p}: the refined DAG has no directed path {} -> {}",
                    p.cause, p.effect
                )));
            }
            let effect = *self.heads.get(&p.effect).ok_or_else(|| {
                Error::Config(format!(
                    "prior {p}: effect {} is not predicted by the network",
                    p.effect
                ))
            })?;
            let (seed, seed_col, cause_layer) = if let Some(t) = self.partition.roots.iter().position(|&r| r == p.cause)
            {
                (self.root_input, t, None)
            } else {
                match self.heads.get(&p.cause) {
                    Some(HeadLoc { layer: Some(j), col }) => (self.layer_heads[*j], *col, Some(*j)),
                    _ => {
                        return Err(Error::Config(format!(
                            "prior {p}: cause {} must be a root or intermediate vertex",
                            p.cause
                        )))
                    }
                }
            };
            if let (Some(cj), Some(ej)) = (cause_layer, effect.layer) {
                if ej <= cj {
                    return Err(Error::Config(format!(
                        "prior {p}: effect layer does not follow cause layer"
                    )));
                }
            }
            let tangents = self.tape.tangent(seed, seed_col);
            let node = self.head_node(effect.layer);
            let t = tangents[node.index()]
                .ok_or_else(|| Error::Model(format!("prior {p}: the network output does not depend on the cause")))?;
            let hinge = self.tape.hinge(t, effect.col, p.hinge());
            hinges.push(CompiledPrior { prior: *p, hinge });
        }
        self.priors.extend(hinges);
        if !self.priors.is_empty() {
            let terms: Vec<(NodeId, f64)> = self.priors.iter().map(|p| (p.hinge, 1.0)).collect();
            self.domain = Some(self.tape.weighted_sum(&terms));
        }
        Ok(())
    }

    pub fn attach_penalty(&mut self, penalty: WeightPenalty) {
        let ids = self.weight_ids();
        let (raw, coef) = match penalty {
            WeightPenalty::L1(a) => (self.tape.weight_l1(&ids), a),
            WeightPenalty::L2(a) => (self.tape.weight_l2(&ids), a),
        };
        self.penalty = Some(self.tape.weighted_sum(&[(raw, coef)]));
    }

    /// Split encoded columns (one per vertex) into roots and observations.
    pub fn batch(&self, encoded: &DMatrix<f64>) -> Result<Batch> {
        if encoded.ncols() != self.dag.n_vertices() {
            return Err(Error::Shape(format!(
                "data has {} columns, DAG has {} vertices",
                encoded.ncols(),
                self.dag.n_vertices()
            )));
        }
        let inter: Vec<usize> = self.partition.intermediates().collect();
        Ok(Batch {
            roots: encoded.select_columns(self.partition.roots.iter()),
            obs_b: encoded.select_columns(inter.iter()),
            obs_o: encoded.select_columns(self.partition.leaves.iter()),
        })
    }

    /// Tape inputs for a batch; masks default to all ones.
    pub fn inputs(&self, batch: &Batch, masks: Option<Vec<DMatrix<f64>>>) -> Result<Vec<DMatrix<f64>>> {
        let rows = batch.n_rows();
        if batch.roots.ncols() != self.partition.roots.len()
            || batch.obs_o.ncols() != self.partition.leaves.len()
            || batch.obs_b.ncols() != self.partition.intermediates().count()
            || batch.obs_b.nrows() != rows
            || batch.obs_o.nrows() != rows
        {
            return Err(Error::Shape("batch does not match the compiled partition".into()));
        }
        let mut inputs = vec![DMatrix::zeros(0, 0); self.tape.n_slots()];
        inputs[self.root_slot] = batch.roots.clone();
        if let Some(s) = self.obs_b_slot {
            inputs[s] = batch.obs_b.clone();
        }
        inputs[self.obs_o_slot] = batch.obs_o.clone();
        match masks {
            Some(ms) => {
                if ms.len() != self.mask_slots.len() {
                    return Err(Error::Shape("wrong number of dropout masks".into()));
                }
                for (&s, m) in self.mask_slots.iter().zip(ms) {
                    inputs[s] = m;
                }
            }
            None => {
                for &s in &self.mask_slots {
                    inputs[s] = DMatrix::from_element(rows, self.tape.slot_width(s), 1.0);
                }
            }
        }
        Ok(inputs)
    }

    /// Evaluate the whole tape (predictions, losses, priors).
    pub fn trace(&self, params: &ParamStore, inputs: &[DMatrix<f64>]) -> Result<Trace> {
        self.tape.forward(params, inputs)
    }

    fn check_params(&self, params: &ParamStore) -> Result<()> {
        if !params.same_layout(&self.template) {
            return Err(Error::Shape("parameters do not match the architecture".into()));
        }
        Ok(())
    }

    /// Predictions for every intermediate and leaf vertex.
    pub fn forward_all(&self, params: &ParamStore, roots: &DMatrix<f64>) -> Result<Predictions> {
        self.check_params(params)?;
        if roots.ncols() != self.partition.roots.len() {
            return Err(Error::Shape(format!(
                "expected {} root values per row, got {}",
                self.partition.roots.len(),
                roots.ncols()
            )));
        }
        let mut inputs = vec![DMatrix::zeros(0, 0); self.tape.n_slots()];
        inputs[self.root_slot] = roots.clone();
        for &s in &self.mask_slots {
            inputs[s] = DMatrix::from_element(roots.nrows(), self.tape.slot_width(s), 1.0);
        }
        let tr = self.tape.forward_upto(params, &inputs, self.last_prediction_node())?;
        Ok(Predictions {
            intermediate: self.layer_heads.iter().map(|&h| tr.value(h).clone()).collect(),
            outputs: tr.value(self.output).clone(),
        })
    }

    /// Column of the target head, one value per row of `roots`.
    pub fn predict_target(&self, params: &ParamStore, roots: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.predict_vertex(params, roots, self.target)
    }

    pub fn predict_vertex(&self, params: &ParamStore, roots: &DMatrix<f64>, v: usize) -> Result<Vec<f64>> {
        let loc = *self
            .heads
            .get(&v)
            .ok_or_else(|| Error::Model(format!("vertex {v} is not predicted by the network (roots are inputs)")))?;
        let pred = self.forward_all(params, roots)?;
        let m = match loc.layer {
            Some(j) => &pred.intermediate[j],
            None => &pred.outputs,
        };
        Ok(m.column(loc.col).iter().copied().collect())
    }

    /// Observed target values of a batch.
    pub fn target_observed(&self, batch: &Batch) -> Vec<f64> {
        let loc = self.heads[&self.target];
        let (m, col) = match loc.layer {
            Some(j) => {
                let offset: usize = self.partition.layer_sizes()[..j].iter().sum();
                (&batch.obs_b, offset + loc.col)
            }
            None => (&batch.obs_o, loc.col),
        };
        m.column(col).iter().copied().collect()
    }

    /// Mean squared error of the target head over a batch.
    pub fn target_mse(&self, params: &ParamStore, batch: &Batch) -> Result<f64> {
        let pred = self.predict_target(params, &batch.roots)?;
        let obs = self.target_observed(batch);
        Ok(pred.iter().zip(&obs).map(|(p, o)| (p - o).powi(2)).sum::<f64>() / obs.len().max(1) as f64)
    }

    pub fn loss_mse(&self, params: &ParamStore, batch: &Batch) -> Result<(f64, f64)> {
        self.check_params(params)?;
        let inputs = self.inputs(batch, None)?;
        let last = self.mse_b.map_or(self.mse_o, |b| b.max(self.mse_o));
        let tr = self.tape.forward_upto(params, &inputs, last)?;
        Ok((self.mse_b.map_or(0.0, |b| tr.scalar(b)), tr.scalar(self.mse_o)))
    }

    /// Summed hinge penalties of the attached priors over the batch.
    pub fn loss_domain(&self, params: &ParamStore, batch: &Batch) -> Result<f64> {
        self.check_params(params)?;
        let Some(domain) = self.domain else { return Ok(0.0) };
        let inputs = self.inputs(batch, None)?;
        let tr = self.tape.forward_upto(params, &inputs, domain)?;
        Ok(tr.scalar(domain))
    }

    pub fn loss(&self, params: &ParamStore, batch: &Batch, gamma: f64) -> Result<LossBreakdown> {
        let (b, o) = self.loss_mse(params, batch)?;
        Ok(total_loss(b, o, self.loss_domain(params, batch)?, gamma))
    }

    /// Layer table and head-to-vertex mapping.
    pub fn summary(&self) -> String {
        let name = |v: usize| format!("{}({})", v, self.dag.name(v));
        let list = |vs: &[usize]| vs.iter().map(|&v| name(v)).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "target: {}", name(self.target));
        let _ = writeln!(
            s,
            "roots (T={}): {}",
            self.partition.roots.len(),
            list(&self.partition.roots)
        );
        for (j, layer) in self.partition.intermediate_layers.iter().enumerate() {
            let _ = writeln!(s, "intermediate layer {} (K={}): {}", j + 1, layer.len(), list(layer));
        }
        let _ = writeln!(
            s,
            "leaves (Z={}): {}",
            self.partition.leaves.len(),
            list(&self.partition.leaves)
        );
        let _ = writeln!(s, "isolated (dropped): {}", list(&self.partition.isolated));
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>8} {:>10}",
            "block", "fan_in", "fan_out", "trainable"
        );
        for b in self.template.blocks() {
            if b.is_bias {
                continue;
            }
            let trainable = b
                .mask
                .as_ref()
                .map_or(b.value.len(), |m| m.iter().filter(|&&x| x != 0.0).count());
            let layer = b.name.trim_end_matches(".weight");
            let _ = writeln!(
                s,
                "{:<16} {:>8} {:>8} {:>10}",
                layer,
                b.value.nrows(),
                b.value.ncols(),
                trainable
            );
        }
        let _ = writeln!(s, "total trainable parameters: {}", self.n_params());
        for p in &self.priors {
            let _ = writeln!(s, "prior: {}", p.prior);
        }
        s
    }
}

/// Scalar loss nodes of a compiled network.
#[derive(Debug, Clone)]
pub struct LossNodes {
    pub mse_b: Option<NodeId>,
    pub mse_o: NodeId,
    /// (vertex, squared-error node) when compiled with per-node losses.
    pub per_node: Vec<(usize, NodeId)>,
    pub domain: Option<NodeId>,
    pub penalty: Option<NodeId>,
}
