//! The column network: one feedforward mini-column per entity, inter-column
//! context aggregation per relation, shared per-layer parameters, softmax
//! output, and a hand-derived reverse pass.
//!
//! Layer computation for entity `i` at layer `t`:
//!
//! ```text
//! c_ir = mean of neighbors' h^{t-1} under relation r   (zero if isolated)
//! h_i  = g( b + gw_i * W h_i^{t-1} + (1/z) * sum_r gc_ir * V_r c_ir )
//! ```
//!
//! where `gw`/`gc` are the advice gates (all 1 when no advice is active, in
//! which case this is the ungated network: multiplying by 1.0 is exact).
//! The context term is evaluated as the neighbor mean of `V_r h_j^{t-1}`,
//! which lets layer 1 run on the sparse feature rows directly.
//!
//! Gates are constants within an epoch; no gradient flows into them.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::advice::gates::GateSet;
use crate::advice::masks::{AdviceMasks, LabelAdvice};
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::numerics::{axpy, cross_entropy, glorot_init, relu_grad, softmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CLNConfig {
    /// Number of hidden layers `T` (>= 1).
    pub layers: usize,
    /// Hidden units per layer `K`.
    pub hidden: usize,
    /// Context normalizer, conventionally the average neighbor count,
    /// clamped to >= 1.
    pub z: f64,
    pub activation: Activation,
    pub num_labels: usize,
    pub feature_dim: usize,
    /// Relation order; fixes the meaning of the per-relation weights.
    pub relation_names: Vec<String>,
    /// Share one weight set across layers 2..T instead of per-layer weights.
    pub tie_layers: bool,
}

impl CLNConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        if self.hidden < 1 {
            return Err(Error::Config("hidden units must be >= 1".into()));
        }
        if !(self.z >= 1.0) {
            return Err(Error::Config(format!("z must be >= 1, got {}", self.z)));
        }
        if self.num_labels < 2 {
            return Err(Error::Config("need at least 2 labels".into()));
        }
        Ok(())
    }

    /// Check the config matches the graph it is about to run on.
    pub fn check_against(&self, g: &KnowledgeGraph) -> Result<()> {
        if self.feature_dim != g.feature_dim() {
            return Err(Error::Config(format!(
                "config feature_dim {} != graph feature_dim {}",
                self.feature_dim,
                g.feature_dim()
            )));
        }
        if self.num_labels != g.num_labels() {
            return Err(Error::Config(format!(
                "config num_labels {} != graph labels {}",
                self.num_labels,
                g.num_labels()
            )));
        }
        if self.relation_names != g.relation_names() {
            return Err(Error::Config(format!(
                "config relations {:?} != graph relations {:?}",
                self.relation_names,
                g.relation_names()
            )));
        }
        Ok(())
    }

    /// Parameter slot for layer `t` (1-based). Untied: one slot per layer.
    /// Tied: layer 1 keeps its own slot (feature-width input), layers 2..T
    /// share slot 1.
    fn slot_of(&self, t: usize) -> usize {
        if self.tie_layers {
            usize::from(t > 1)
        } else {
            t - 1
        }
    }

    fn num_slots(&self) -> usize {
        if self.tie_layers {
            self.layers.min(2)
        } else {
            self.layers
        }
    }

    /// Input width of a slot: features for slot 0, hidden width above.
    fn slot_input(&self, slot: usize) -> usize {
        if slot == 0 {
            self.feature_dim
        } else {
            self.hidden
        }
    }
}

/// One layer's parameters: the column weight, per-relation context weights,
/// and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w: Matrix,
    pub v: Vec<Matrix>,
    pub b: Vec<f64>,
}

/// All network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CLNParams {
    pub layers: Vec<LayerParams>,
    pub w_out: Matrix,
    pub b_out: Vec<f64>,
}

impl CLNParams {
    /// Glorot-initialized weights, zero biases; deterministic per seed.
    pub fn init(cfg: &CLNConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = cfg.relation_names.len();
        let mut layers = Vec::with_capacity(cfg.num_slots());
        for slot in 0..cfg.num_slots() {
            let input = cfg.slot_input(slot);
            let w = glorot_init(cfg.hidden, input, &mut rng);
            let v = (0..r)
                .map(|_| glorot_init(cfg.hidden, input, &mut rng))
                .collect();
            layers.push(LayerParams {
                w,
                v,
                b: vec![0.0; cfg.hidden],
            });
        }
        let w_out = glorot_init(cfg.num_labels, cfg.hidden, &mut rng);
        CLNParams {
            layers,
            w_out,
            b_out: vec![0.0; cfg.num_labels],
        }
    }

    /// Zero tensors with the same shapes; the gradient container.
    pub fn zeros_like(cfg: &CLNConfig) -> Self {
        let r = cfg.relation_names.len();
        let layers = (0..cfg.num_slots())
            .map(|slot| {
                let input = cfg.slot_input(slot);
                LayerParams {
                    w: Matrix::zeros(cfg.hidden, input),
                    v: (0..r).map(|_| Matrix::zeros(cfg.hidden, input)).collect(),
                    b: vec![0.0; cfg.hidden],
                }
            })
            .collect();
        CLNParams {
            layers,
            w_out: Matrix::zeros(cfg.num_labels, cfg.hidden),
            b_out: vec![0.0; cfg.num_labels],
        }
    }

    pub fn validate(&self, cfg: &CLNConfig) -> Result<()> {
        if self.layers.len() != cfg.num_slots() {
            return Err(Error::Config(format!(
                "expected {} parameter slots, found {}",
                cfg.num_slots(),
                self.layers.len()
            )));
        }
        for (slot, lp) in self.layers.iter().enumerate() {
            let input = cfg.slot_input(slot);
            let shape_ok = lp.w.rows == cfg.hidden
                && lp.w.cols == input
                && lp.b.len() == cfg.hidden
                && lp.v.len() == cfg.relation_names.len()
                && lp.v.iter().all(|m| m.rows == cfg.hidden && m.cols == input);
            if !shape_ok {
                return Err(Error::Config(format!("bad parameter shapes at slot {slot}")));
            }
        }
        if self.w_out.rows != cfg.num_labels
            || self.w_out.cols != cfg.hidden
            || self.b_out.len() != cfg.num_labels
        {
            return Err(Error::Config("bad output layer shapes".into()));
        }
        Ok(())
    }

    /// Tensor views in a fixed order, aligned across `tensors`,
    /// `tensors_mut` and `shapes`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for lp in &self.layers {
            out.push(lp.w.data.as_slice());
            for v in &lp.v {
                out.push(v.data.as_slice());
            }
            out.push(lp.b.as_slice());
        }
        out.push(self.w_out.data.as_slice());
        out.push(self.b_out.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for lp in &mut self.layers {
            out.push(lp.w.data.as_mut_slice());
            for v in &mut lp.v {
                out.push(v.data.as_mut_slice());
            }
            out.push(lp.b.as_mut_slice());
        }
        out.push(self.w_out.data.as_mut_slice());
        out.push(self.b_out.as_mut_slice());
        out
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    /// Concatenation of all tensors; used by gradient checking.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }
}

/// Activations and outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `hidden[t-1]` is `h^t` for `t in 1..=T`; layer 0 is the (sparse)
    /// feature matrix held by the graph.
    pub hidden: Vec<Matrix>,
    /// Pre-activations per layer, same indexing.
    pub pre: Vec<Matrix>,
    /// Output distributions, one row per entity; rows sum to 1 within 1e-9.
    pub probs: Matrix,
}

impl ForwardCache {
    pub fn h_layer(&self, t: usize) -> &Matrix {
        &self.hidden[t - 1]
    }

    pub fn h_final(&self) -> &Matrix {
        self.hidden.last().expect("at least one layer")
    }
}

/// The context vector `c_ir^t`: mean of neighbors' previous-layer hidden
/// rows (the dense feature row at `t = 1`), zero for isolated entities.
/// Recomputed on demand; the hot path folds the mean into `V_r` space.
pub fn context_vector(
    g: &KnowledgeGraph,
    cache: &ForwardCache,
    cfg: &CLNConfig,
    t: usize,
    rel: usize,
    i: usize,
) -> Vec<f64> {
    let width = if t == 1 { cfg.feature_dim } else { cfg.hidden };
    let mut out = vec![0.0; width];
    let nbrs = g.relations()[rel].neighbors(i);
    if nbrs.is_empty() {
        return out;
    }
    for &j in nbrs {
        if t == 1 {
            for &(f, val) in g.features_of(j) {
                out[f] += val;
            }
        } else {
            axpy(&mut out, cache.h_layer(t - 1).row(j), 1.0);
        }
    }
    let scale = 1.0 / nbrs.len() as f64;
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

#[inline]
fn sparse_matvec(m: &Matrix, pairs: &[(usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows];
    for &(col, val) in pairs {
        for (o, row_start) in out.iter_mut().zip(0..m.rows) {
            *o += m.data[row_start * m.cols + col] * val;
        }
    }
    out
}

fn gate_w(gates: Option<&GateSet>, i: usize) -> f64 {
    gates.map_or(1.0, |gs| gs.gamma_w[i])
}

fn gate_c(gates: Option<&GateSet>, r: usize, i: usize) -> f64 {
    gates.map_or(1.0, |gs| gs.gamma_c[r][i])
}

/// Full forward pass over all entities. Layers advance strictly in order:
/// contexts at layer `t` read only layer `t-1` activations.
pub fn forward(
    g: &KnowledgeGraph,
    cfg: &CLNConfig,
    params: &CLNParams,
    gates: Option<&GateSet>,
) -> Result<ForwardCache> {
    cfg.validate()?;
    cfg.check_against(g)?;
    params.validate(cfg)?;
    let n = g.num_entities();
    let num_rel = cfg.relation_names.len();
    if let Some(gs) = gates {
        if gs.gamma_w.len() != n || gs.gamma_c.len() != num_rel {
            return Err(Error::Config("gate set does not cover the graph".into()));
        }
    }
    let inv_z = 1.0 / cfg.z;
    let k = cfg.hidden;

    let mut hidden: Vec<Matrix> = Vec::with_capacity(cfg.layers);
    let mut pre: Vec<Matrix> = Vec::with_capacity(cfg.layers);

    for t in 1..=cfg.layers {
        let lp = &params.layers[cfg.slot_of(t)];

        // per-relation projections u_j = V_r h_j^{t-1}; the context term for
        // entity i is then the mean of u over its neighborhood
        let mut projected: Vec<Matrix> = Vec::with_capacity(num_rel);
        for v in &lp.v {
            let mut u = Matrix::zeros(n, k);
            for j in 0..n {
                let uj = if t == 1 {
                    sparse_matvec(v, g.features_of(j))
                } else {
                    v.matvec(hidden[t - 2].row(j))
                };
                u.row_mut(j).copy_from_slice(&uj);
            }
            projected.push(u);
        }

        let mut pre_t = Matrix::zeros(n, k);
        for i in 0..n {
            let mut act = lp.b.clone();
            let wh = if t == 1 {
                sparse_matvec(&lp.w, g.features_of(i))
            } else {
                lp.w.matvec(hidden[t - 2].row(i))
            };
            axpy(&mut act, &wh, gate_w(gates, i));
            for (r, u) in projected.iter().enumerate() {
                let nbrs = g.relations()[r].neighbors(i);
                if nbrs.is_empty() {
                    continue; // empty neighborhood contributes nothing
                }
                let mut ctx = vec![0.0; k];
                for &j in nbrs {
                    axpy(&mut ctx, u.row(j), 1.0);
                }
                let scale = gate_c(gates, r, i) * inv_z / nbrs.len() as f64;
                axpy(&mut act, &ctx, scale);
            }
            pre_t.row_mut(i).copy_from_slice(&act);
        }
        if !pre_t.is_finite() {
            return Err(Error::Numeric(format!("non-finite activation at layer {t}")));
        }
        let mut h_t = pre_t.clone();
        for x in h_t.data.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        pre.push(pre_t);
        hidden.push(h_t);
    }

    let h_top = hidden.last().unwrap();
    let mut probs = Matrix::zeros(n, cfg.num_labels);
    for i in 0..n {
        let mut logits = params.b_out.clone();
        axpy(&mut logits, &params.w_out.matvec(h_top.row(i)), 1.0);
        probs.row_mut(i).copy_from_slice(&softmax(&logits));
    }
    if !probs.is_finite() {
        return Err(Error::Numeric("non-finite output probabilities".into()));
    }
    Ok(ForwardCache { hidden, pre, probs })
}

/// Mean cross-entropy over the given (labeled) entities.
pub fn loss(cache: &ForwardCache, g: &KnowledgeGraph, ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::Config("loss over an empty id set".into()));
    }
    let mut total = 0.0;
    for &i in ids {
        let gold = g
            .label_of(i)
            .ok_or_else(|| Error::Config(format!("entity {i} in loss set is unlabeled")))?;
        total += cross_entropy(cache.probs.row(i), gold);
    }
    Ok(total / ids.len() as f64)
}

/// Argmax prediction with ties broken toward the lower label index, plus
/// the full distribution.
pub fn predict(cache: &ForwardCache, i: usize) -> (usize, Vec<f64>) {
    let row = cache.probs.row(i);
    let mut best = 0;
    for (l, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = l;
        }
    }
    (best, row.to_vec())
}

/// Per-entity output-layer gradients (d loss / d logits) for plain
/// cross-entropy over `ids`, scaled by `1/|ids|`. Sparse: one row per id.
pub fn output_gradient_data(
    cache: &ForwardCache,
    g: &KnowledgeGraph,
    ids: &[usize],
) -> Result<Vec<(usize, Vec<f64>)>> {
    if ids.is_empty() {
        return Err(Error::Config("gradient over an empty id set".into()));
    }
    let scale = 1.0 / ids.len() as f64;
    let mut out = Vec::with_capacity(ids.len());
    for &i in ids {
        let gold = g
            .label_of(i)
            .ok_or_else(|| Error::Config(format!("entity {i} in gradient set is unlabeled")))?;
        let mut row: Vec<f64> = cache.probs.row(i).iter().map(|&p| p * scale).collect();
        row[gold] -= scale;
        out.push((i, row));
    }
    Ok(out)
}

/// Output-layer gradients for combined-loss training: per entity,
/// `(1-alpha) * data + alpha * advice` where the advice part is the descent
/// gradient of the advice log-likelihood at the current outputs (zero for
/// entities without label advice).
pub fn output_gradient_combined(
    cache: &ForwardCache,
    g: &KnowledgeGraph,
    ids: &[usize],
    masks: &AdviceMasks,
    alpha: f64,
) -> Result<Vec<(usize, Vec<f64>)>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0,1], got {alpha}")));
    }
    if ids.is_empty() {
        return Err(Error::Config("gradient over an empty id set".into()));
    }
    let scale = 1.0 / ids.len() as f64;
    let mut out = Vec::with_capacity(ids.len());
    for &i in ids {
        let gold = g
            .label_of(i)
            .ok_or_else(|| Error::Config(format!("entity {i} in gradient set is unlabeled")))?;
        let p = cache.probs.row(i);
        // the data term mirrors output_gradient_data exactly so that
        // alpha = 0 reproduces it bit for bit
        let data_w = (1.0 - alpha) * scale;
        let mut row: Vec<f64> = p.iter().map(|&pk| pk * data_w).collect();
        row[gold] -= data_w;
        if alpha > 0.0 {
            let adv_w = alpha * scale;
            match &masks.label_advice[i] {
                LabelAdvice::Prefer(l) => {
                    for (r, &pk) in row.iter_mut().zip(p) {
                        *r += adv_w * pk;
                    }
                    row[*l] -= adv_w;
                }
                LabelAdvice::Suppress(labels) => {
                    // zero indicator on suppressed labels: push their
                    // logits down
                    for &a in labels {
                        row[a] += adv_w * p[a];
                    }
                }
                LabelAdvice::None | LabelAdvice::Dropped => {}
            }
        }
        out.push((i, row));
    }
    Ok(out)
}

/// Reverse pass. `output_grads` are per-entity d loss / d logits rows (as
/// produced by the `output_gradient_*` functions); gates are the constants
/// used by the matching forward pass. Returns gradients for every parameter,
/// including flow through context edges.
pub fn backward(
    cache: &ForwardCache,
    g: &KnowledgeGraph,
    cfg: &CLNConfig,
    params: &CLNParams,
    gates: Option<&GateSet>,
    output_grads: &[(usize, Vec<f64>)],
) -> Result<CLNParams> {
    params.validate(cfg)?;
    if cache.hidden.len() != cfg.layers || cache.probs.rows != g.num_entities() {
        return Err(Error::Config("cache does not match config/graph".into()));
    }
    let n = g.num_entities();
    let k = cfg.hidden;
    let num_rel = cfg.relation_names.len();
    let inv_z = 1.0 / cfg.z;
    let mut grads = CLNParams::zeros_like(cfg);

    // output layer
    let h_top = cache.h_final();
    let mut dh = Matrix::zeros(n, k);
    for (i, dlogits) in output_grads {
        grads.w_out.add_outer(dlogits, h_top.row(*i), 1.0);
        axpy(&mut grads.b_out, dlogits, 1.0);
        axpy(dh.row_mut(*i), &params.w_out.matvec_t(dlogits), 1.0);
    }

    for t in (1..=cfg.layers).rev() {
        let slot = cfg.slot_of(t);
        let lp = &params.layers[slot];

        // dpre = dh * relu'(pre)
        let pre_t = &cache.pre[t - 1];
        let mut dpre = dh;
        for (dp, &p) in dpre.data.iter_mut().zip(&pre_t.data) {
            *dp *= relu_grad(p);
        }

        // bias gradient
        {
            let gb = &mut grads.layers[slot].b;
            for i in 0..n {
                axpy(gb, dpre.row(i), 1.0);
            }
        }

        // context flow: q_jr = sum over i with j in N_r(i) of
        // (gc_ir / (z |N_r(i)|)) dpre_i; then dV_r += q_jr x h_j^{t-1}
        // and dh_j += V_r^T q_jr
        let mut dh_prev = Matrix::zeros(n, if t == 1 { 0 } else { k });
        for r in 0..num_rel {
            let rel = &g.relations()[r];
            let mut q = Matrix::zeros(n, k);
            for j in 0..n {
                let qj = q.row_mut(j);
                for &i in rel.reverse_neighbors(j) {
                    let deg = rel.neighbors(i).len() as f64;
                    let coef = gate_c(gates, r, i) * inv_z / deg;
                    axpy(qj, dpre.row(i), coef);
                }
            }
            let gv = &mut grads.layers[slot].v[r];
            for j in 0..n {
                let qj = q.row(j);
                if qj.iter().all(|&x| x == 0.0) {
                    continue;
                }
                if t == 1 {
                    // layer 0 is the sparse feature matrix; no dh to push
                    for &(f, val) in g.features_of(j) {
                        for (row_idx, &qv) in qj.iter().enumerate() {
                            gv.data[row_idx * gv.cols + f] += qv * val;
                        }
                    }
                } else {
                    gv.add_outer(qj, cache.h_layer(t - 1).row(j), 1.0);
                    axpy(dh_prev.row_mut(j), &lp.v[r].matvec_t(qj), 1.0);
                }
            }
        }

        // column weight gradient and own-path flow to the previous layer
        {
            let gw = &mut grads.layers[slot].w;
            for i in 0..n {
                let gwi = gate_w(gates, i);
                let dpre_i = dpre.row(i);
                if dpre_i.iter().all(|&x| x == 0.0) {
                    continue;
                }
                if t == 1 {
                    for &(f, val) in g.features_of(i) {
                        let s = val * gwi;
                        for (row_idx, &dv) in dpre_i.iter().enumerate() {
                            gw.data[row_idx * gw.cols + f] += dv * s;
                        }
                    }
                } else {
                    gw.add_outer(dpre_i, cache.h_layer(t - 1).row(i), gwi);
                    axpy(dh_prev.row_mut(i), &lp.w.matvec_t(dpre_i), gwi);
                }
            }
        }

        dh = dh_prev;
    }
    Ok(grads)
}

/// Versioned parameter checkpoint; JSON round-trips f64 exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: CLNConfig,
    pub label_names: Vec<String>,
    pub params: CLNParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(config: CLNConfig, label_names: Vec<String>, params: CLNParams) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config,
            label_names,
            params,
        }
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_slice(bytes)
            .map_err(|e| Error::Checkpoint(format!("parse failure: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        ckpt.config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        ckpt.params
            .validate(&ckpt.config)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.label_names.len() != ckpt.config.num_labels {
            return Err(Error::Checkpoint("label names do not match config".into()));
        }
        Ok(ckpt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_slice(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Checkpoint(format!("serialize failure: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}
