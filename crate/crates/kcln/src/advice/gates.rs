//! Advice gradients and the exponential soft gates computed from them.
//!
//! At each epoch boundary the trainer stores, per entity in the satisfied
//! set, the gap between the advised label's indicator and the current output
//! distribution. The next epoch turns the scalar reduction of that gap into
//! multiplicative gates `exp(alpha * grad)`: above 1 where the model
//! under-predicts the advice, below 1 where a label is suppressed, exactly 1
//! outside the satisfied set.

use crate::advice::masks::{AdviceMasks, LabelAdvice};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Per-entity advice gradients stored at an epoch boundary.
#[derive(Debug, Clone)]
pub struct AdviceState {
    /// Full label-space gradient `I(advised) - P`, zero outside the
    /// satisfied set. Kept for the combined-gradient diagnostic.
    pub vec_grad: Matrix,
    /// Scalar reduction driving the gates: `1 - P(preferred)` for preferred
    /// labels, `-sum P(suppressed)` for avoid-only advice, 0 otherwise.
    pub scalar: Vec<f64>,
    /// Epoch the state was computed at; 0 is the all-zero initial state.
    pub epoch: usize,
    /// Output probabilities the gradients were computed from (none at
    /// epoch 0).
    pub probs: Option<Matrix>,
}

impl AdviceState {
    /// The all-zero state required at epoch 0.
    pub fn initial(num_entities: usize, num_labels: usize) -> Self {
        AdviceState {
            vec_grad: Matrix::zeros(num_entities, num_labels),
            scalar: vec![0.0; num_entities],
            epoch: 0,
            probs: None,
        }
    }
}

/// Compute advice gradients from output probabilities and the masks.
pub fn advice_gradient(probs: &Matrix, masks: &AdviceMasks, epoch: usize) -> Result<AdviceState> {
    if probs.rows != masks.num_entities || probs.cols != masks.num_labels {
        return Err(Error::Config(format!(
            "advice_gradient: probs {}x{} vs masks {}x{}",
            probs.rows, probs.cols, masks.num_entities, masks.num_labels
        )));
    }
    let mut vec_grad = Matrix::zeros(probs.rows, probs.cols);
    let mut scalar = vec![0.0; probs.rows];
    for i in 0..probs.rows {
        if !masks.satisfied[i] {
            continue;
        }
        let p = probs.row(i);
        match &masks.label_advice[i] {
            LabelAdvice::Prefer(l) => {
                let row = vec_grad.row_mut(i);
                for (k, &pk) in p.iter().enumerate() {
                    row[k] = if k == *l { 1.0 - pk } else { -pk };
                }
                scalar[i] = 1.0 - p[*l];
            }
            LabelAdvice::Suppress(labels) => {
                let row = vec_grad.row_mut(i);
                let mut s = 0.0;
                for &a in labels {
                    row[a] = -p[a];
                    s += p[a];
                }
                scalar[i] = -s;
            }
            LabelAdvice::None | LabelAdvice::Dropped => {}
        }
    }
    Ok(AdviceState {
        vec_grad,
        scalar,
        epoch,
        probs: Some(probs.clone()),
    })
}

/// Multiplicative soft gates for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSet {
    /// Hidden-unit gate per entity.
    pub gamma_w: Vec<f64>,
    /// Context gate per (relation, entity), indexed `[rel][entity]`.
    pub gamma_c: Vec<Vec<f64>>,
    pub alpha: f64,
}

impl GateSet {
    /// All-ones gates: the ungated network.
    pub fn ones(num_entities: usize, num_relations: usize) -> Self {
        GateSet {
            gamma_w: vec![1.0; num_entities],
            gamma_c: vec![vec![1.0; num_entities]; num_relations],
            alpha: 0.0,
        }
    }

    pub fn is_all_ones(&self) -> bool {
        self.gamma_w.iter().all(|&g| g == 1.0)
            && self.gamma_c.iter().all(|per| per.iter().all(|&g| g == 1.0))
    }

    /// (min, mean, max) over the gates of entities in the satisfied set,
    /// plus how many entities are gated. All-ones if nothing is gated.
    pub fn stats(&self, masks: &AdviceMasks) -> (f64, f64, f64, usize) {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.gamma_w.len() {
            if !masks.satisfied[i] {
                continue;
            }
            let mut vals = vec![];
            if masks.entity_gate_flag[i] {
                vals.push(self.gamma_w[i]);
            }
            for (r, per) in self.gamma_c.iter().enumerate() {
                if masks.m_c[r][i] {
                    vals.push(per[i]);
                }
            }
            if vals.is_empty() {
                continue;
            }
            count += 1;
            for v in vals {
                min = min.min(v);
                max = max.max(v);
                sum += v;
            }
        }
        if count == 0 {
            (1.0, 1.0, 1.0, 0)
        } else {
            let total: usize = (0..self.gamma_w.len())
                .map(|i| {
                    if !masks.satisfied[i] {
                        return 0;
                    }
                    let mut n = usize::from(masks.entity_gate_flag[i]);
                    n += (0..self.gamma_c.len()).filter(|&r| masks.m_c[r][i]).count();
                    n
                })
                .sum();
            (min, sum / total as f64, max, count)
        }
    }
}

/// Gates from a stored advice state: `exp(alpha * scalar)` wherever the
/// corresponding mask is set, exactly 1 elsewhere.
pub fn compute_gates(state: &AdviceState, masks: &AdviceMasks, alpha: f64) -> Result<GateSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0,1], got {alpha}")));
    }
    if state.scalar.len() != masks.num_entities {
        return Err(Error::Config(format!(
            "compute_gates: state over {} entities vs masks over {}",
            state.scalar.len(),
            masks.num_entities
        )));
    }
    let n = masks.num_entities;
    let mut gamma_w = vec![1.0; n];
    for i in 0..n {
        if masks.entity_gate_flag[i] {
            gamma_w[i] = (alpha * state.scalar[i]).exp();
        }
    }
    let mut gamma_c = vec![vec![1.0; n]; masks.m_c.len()];
    for (r, per) in gamma_c.iter_mut().enumerate() {
        for (i, g) in per.iter_mut().enumerate() {
            if masks.m_c[r][i] {
                *g = (alpha * state.scalar[i]).exp();
            }
        }
    }
    Ok(GateSet {
        gamma_w,
        gamma_c,
        alpha,
    })
}

/// The convex combination `(1-alpha) * data + alpha * advice` of per-entity
/// label-space gradients. Diagnostic for the modified objective; also the
/// output-layer gradient in combined-loss training.
pub fn combined_gradient_diag(data: &[f64], advice: &[f64], alpha: f64) -> Vec<f64> {
    assert_eq!(data.len(), advice.len(), "gradient length mismatch");
    data.iter()
        .zip(advice)
        .map(|(d, a)| (1.0 - alpha) * d + alpha * a)
        .collect()
}
