//! The training loop: masks are built once up front, advice gradients start
//! at zero, and each epoch computes gates from the previous epoch's stored
//! state, runs a gated forward/backward over all entities, takes one
//! full-batch Adam step, then refreshes the advice state from post-update
//! outputs. With empty advice every gate is 1 at every epoch and the loop is
//! the ungated baseline, bit for bit.

use std::time::Instant;

use crate::advice::gates::{advice_gradient, compute_gates, AdviceState, GateSet};
use crate::advice::lang::{validate, RuleSet};
use crate::advice::masks::{create_mask, AdviceMasks};
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::metrics::{auc_pr, micro_f1};
use crate::model::{
    backward, forward, loss, output_gradient_combined, output_gradient_data, CLNConfig, CLNParams,
};
use crate::numerics::AdamState;

/// Relative training-loss improvement below which an epoch counts as stalled
/// for early stopping.
pub const EARLY_STOP_REL_TOL: f64 = 1e-5;

/// When computing AUC-PR on binary problems, the positive class is the
/// second label in file order.
pub const POSITIVE_LABEL: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Advice acts only through the forward-pass gates (the default).
    Gated,
    /// Additionally blends the output-layer gradient: `(1-alpha) * data +
    /// alpha * advice` per entity.
    CombinedLoss,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gated" => Ok(TrainMode::Gated),
            "combined-loss" => Ok(TrainMode::CombinedLoss),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected 'gated' or 'combined-loss')"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub alpha: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: TrainMode,
    /// Labeled entities the loss is averaged over.
    pub train_ids: Vec<usize>,
    /// Held-out labeled entities tracked in the history (may be empty).
    pub eval_ids: Vec<usize>,
    /// Stop after this many consecutive stalled epochs, if set.
    pub patience: Option<usize>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.train_ids.is_empty() {
            return Err(Error::Config("no training ids".into()));
        }
        Ok(())
    }
}

/// One completed epoch.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_f1: f64,
    pub test_f1: Option<f64>,
    pub test_aucpr: Option<f64>,
    pub gate_min: f64,
    pub gate_mean: f64,
    pub gate_max: f64,
    pub gated_entities: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_test_f1(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.test_f1)
    }

    pub fn test_f1_series(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.test_f1.unwrap_or(f64::NAN))
            .collect()
    }

    /// Training log CSV with the stable header used by the CLI.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,loss,train_f1,test_f1,test_aucpr,gate_min,gate_mean,gate_max,seconds\n");
        for r in &self.records {
            let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.3}\n",
                r.epoch,
                r.loss,
                r.train_f1,
                opt(r.test_f1),
                opt(r.test_aucpr),
                r.gate_min,
                r.gate_mean,
                r.gate_max,
                r.seconds
            ));
        }
        out
    }
}

fn f1_over(
    probs: &crate::numerics::Matrix,
    g: &KnowledgeGraph,
    ids: &[usize],
) -> Result<f64> {
    let mut preds = Vec::with_capacity(ids.len());
    let mut golds = Vec::with_capacity(ids.len());
    for &i in ids {
        let row = probs.row(i);
        let mut best = 0;
        for (l, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = l;
            }
        }
        preds.push(best);
        golds.push(g.label_of(i).ok_or_else(|| {
            Error::Config(format!("entity {i} in metric set is unlabeled"))
        })?);
    }
    micro_f1(&preds, &golds, g.num_labels())
}

fn aucpr_over(
    probs: &crate::numerics::Matrix,
    g: &KnowledgeGraph,
    ids: &[usize],
) -> Option<f64> {
    if g.num_labels() != 2 || ids.is_empty() {
        return None;
    }
    let scores: Vec<f64> = ids.iter().map(|&i| probs.get(i, POSITIVE_LABEL)).collect();
    let golds: Vec<bool> = ids
        .iter()
        .map(|&i| g.label_of(i) == Some(POSITIVE_LABEL))
        .collect();
    auc_pr(&scores, &golds).ok()
}

/// Train with advice (Algorithm: masks once, zero initial gradients, gates
/// from the previous epoch, full-batch update, post-update state refresh).
/// Empty rules reduce to the vanilla baseline under the same seed.
pub fn train(
    g: &KnowledgeGraph,
    rules: &RuleSet,
    cln_cfg: &CLNConfig,
    t_cfg: &TrainConfig,
) -> Result<(CLNParams, TrainHistory)> {
    t_cfg.validate()?;
    cln_cfg.validate()?;
    cln_cfg.check_against(g)?;
    let diags = validate(rules, g);
    if !diags.is_empty() {
        return Err(Error::Diagnostics(
            diags.iter().map(|d| d.to_string()).collect(),
        ));
    }

    let masks = create_mask(g, rules);
    train_with_masks(g, &masks, cln_cfg, t_cfg)
}

/// The ungated baseline: the same loop with no advice.
pub fn train_vanilla(
    g: &KnowledgeGraph,
    cln_cfg: &CLNConfig,
    t_cfg: &TrainConfig,
) -> Result<(CLNParams, TrainHistory)> {
    train(g, &RuleSet::default(), cln_cfg, t_cfg)
}

/// Inner loop over prebuilt masks (the sweep harness reuses masks across
/// runs).
pub fn train_with_masks(
    g: &KnowledgeGraph,
    masks: &AdviceMasks,
    cln_cfg: &CLNConfig,
    t_cfg: &TrainConfig,
) -> Result<(CLNParams, TrainHistory)> {
    t_cfg.validate()?;
    let mut params = CLNParams::init(cln_cfg, t_cfg.seed);
    let mut adam = AdamState::new(t_cfg.learning_rate, &params.shapes());
    let mut state = AdviceState::initial(g.num_entities(), g.num_labels());
    let mut history = TrainHistory::default();
    let mut best_loss = f64::INFINITY;
    let mut stalled = 0usize;

    for epoch in 1..=t_cfg.epochs {
        let start = Instant::now();
        // gates from the previous epoch's stored gradients (all 1 at k=1)
        let gates: GateSet = compute_gates(&state, masks, t_cfg.alpha)?;

        let with_epoch = |e: Error| match e {
            Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
            other => other,
        };
        let cache = forward(g, cln_cfg, &params, Some(&gates)).map_err(with_epoch)?;
        let epoch_loss = loss(&cache, g, &t_cfg.train_ids)?;
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(format!("epoch {epoch}: non-finite loss")));
        }

        let dlogits = match t_cfg.mode {
            TrainMode::Gated => output_gradient_data(&cache, g, &t_cfg.train_ids)?,
            TrainMode::CombinedLoss => {
                output_gradient_combined(&cache, g, &t_cfg.train_ids, masks, t_cfg.alpha)?
            }
        };
        let grads = backward(&cache, g, cln_cfg, &params, Some(&gates), &dlogits)?;
        adam.step(&mut params.tensors_mut(), &grads.tensors());

        // post-update outputs for this epoch: metrics + advice refresh
        let post = forward(g, cln_cfg, &params, Some(&gates)).map_err(with_epoch)?;
        let train_f1 = f1_over(&post.probs, g, &t_cfg.train_ids)?;
        let test_f1 = if t_cfg.eval_ids.is_empty() {
            None
        } else {
            Some(f1_over(&post.probs, g, &t_cfg.eval_ids)?)
        };
        let test_aucpr = aucpr_over(&post.probs, g, &t_cfg.eval_ids);
        state = advice_gradient(&post.probs, masks, epoch)?;

        let (gate_min, gate_mean, gate_max, gated_entities) = gates.stats(masks);
        history.records.push(EpochRecord {
            epoch,
            loss: epoch_loss,
            train_f1,
            test_f1,
            test_aucpr,
            gate_min,
            gate_mean,
            gate_max,
            gated_entities,
            seconds: start.elapsed().as_secs_f64(),
        });

        if let Some(patience) = t_cfg.patience {
            let improved = (best_loss - epoch_loss) > EARLY_STOP_REL_TOL * best_loss.abs().max(1e-12);
            if improved {
                best_loss = epoch_loss;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= patience {
                    log::info!("early stop at epoch {epoch} after {stalled} stalled epochs");
                    break;
                }
            }
        }
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advice::lang::parse_rules;
    use crate::graph::load_graph_from_strs;
    use crate::model::Activation;

    fn toy_graph() -> KnowledgeGraph {
        // 8 entities, one relation ring, feature 0 marks label 'a'
        let mut nodes = String::new();
        for i in 0..8 {
            let (lbl, feats) = if i % 2 == 0 {
                ("a", "0:1.0")
            } else {
                ("b", "1:1.0")
            };
            nodes.push_str(&format!("e{i}\t{lbl}\t{feats}\n"));
        }
        let mut edges = String::new();
        for i in 0..8 {
            edges.push_str(&format!("r\te{i}\te{}\n", (i + 1) % 8));
        }
        load_graph_from_strs(&nodes, &edges, Some("W:m0\t0\nW:m1\t1\n"), true).unwrap()
    }

    fn cfg_for(g: &KnowledgeGraph) -> CLNConfig {
        CLNConfig {
            layers: 2,
            hidden: 4,
            z: g.average_degree().unwrap().max(1.0),
            activation: Activation::Relu,
            num_labels: g.num_labels(),
            feature_dim: g.feature_dim(),
            relation_names: g.relation_names(),
            tie_layers: false,
        }
    }

    fn tcfg(g: &KnowledgeGraph, alpha: f64, mode: TrainMode) -> TrainConfig {
        TrainConfig {
            epochs: 12,
            alpha,
            learning_rate: 1e-2,
            seed: 3,
            mode,
            train_ids: (0..6).collect(),
            eval_ids: (6..8).collect(),
            patience: None,
        }
    }

    #[test]
    fn empty_rules_match_vanilla_bitwise() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let t = tcfg(&g, 1.0, TrainMode::Gated);
        let (p1, h1) = train(&g, &RuleSet::default(), &cfg, &t).unwrap();
        let (p2, h2) = train_vanilla(&g, &cfg, &t).unwrap();
        assert_eq!(p1, p2);
        let l1: Vec<f64> = h1.records.iter().map(|r| r.loss).collect();
        let l2: Vec<f64> = h2.records.iter().map(|r| r.loss).collect();
        assert_eq!(l1, l2);
    }

    #[test]
    fn alpha_zero_with_rules_matches_vanilla_bitwise() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let rules = parse_rules("W(E,'m0') & r(E2,E) => label(E2,a)+").unwrap();
        assert!(crate::advice::lang::validate(&rules, &g).is_empty());
        let t = tcfg(&g, 0.0, TrainMode::Gated);
        let (p1, _) = train(&g, &rules, &cfg, &t).unwrap();
        let (p2, _) = train_vanilla(&g, &cfg, &t).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn first_epoch_equals_vanilla_first_epoch() {
        // gates at epoch 1 come from the zero-initialized state
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let rules = parse_rules("W(E,'m0') & r(E2,E) => label(E2,a)+").unwrap();
        let mut t = tcfg(&g, 1.0, TrainMode::Gated);
        t.epochs = 1;
        let (p1, h1) = train(&g, &rules, &cfg, &t).unwrap();
        let (p2, h2) = train_vanilla(&g, &cfg, &t).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1.records[0].loss, h2.records[0].loss);
        assert_eq!(h1.records[0].gate_mean, 1.0);
    }

    #[test]
    fn gates_after_first_epoch_differ_from_one() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let rules = parse_rules("W(E,'m0') & r(E2,E) => label(E2,a)+").unwrap();
        let t = tcfg(&g, 1.0, TrainMode::Gated);
        let (_, h) = train(&g, &rules, &cfg, &t).unwrap();
        // epoch 1 gated at 1 exactly; later epochs move
        assert_eq!(h.records[0].gate_mean, 1.0);
        assert!(h.records.iter().skip(1).any(|r| r.gate_mean != 1.0));
        assert!(h.records.iter().all(|r| r.gated_entities > 0));
    }

    #[test]
    fn same_seed_same_run() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let t = tcfg(&g, 1.0, TrainMode::Gated);
        let (p1, _) = train_vanilla(&g, &cfg, &t).unwrap();
        let (p2, _) = train_vanilla(&g, &cfg, &t).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn loss_decreases_over_training() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let mut t = tcfg(&g, 0.0, TrainMode::Gated);
        t.epochs = 50;
        let (_, h) = train_vanilla(&g, &cfg, &t).unwrap();
        assert!(h.records.last().unwrap().loss < h.records[0].loss);
        let epochs: Vec<usize> = h.records.iter().map(|r| r.epoch).collect();
        assert!(epochs.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn combined_loss_alpha_zero_equals_gated_no_rules() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let t_combined = tcfg(&g, 0.0, TrainMode::CombinedLoss);
        let t_gated = tcfg(&g, 0.0, TrainMode::Gated);
        let (p1, _) = train(&g, &RuleSet::default(), &cfg, &t_combined).unwrap();
        let (p2, _) = train(&g, &RuleSet::default(), &cfg, &t_gated).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn unvalidated_rules_rejected() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let rules = parse_rules("Nope(E,'q') => label(E,zz)+").unwrap();
        let t = tcfg(&g, 1.0, TrainMode::Gated);
        let err = train(&g, &rules, &cfg, &t).unwrap_err();
        assert!(matches!(err, Error::Diagnostics(_)));
    }

    #[test]
    fn exploding_learning_rate_aborts_with_numeric_error() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let mut t = tcfg(&g, 0.0, TrainMode::Gated);
        // Adam steps are bounded by the learning rate; it takes an absurd
        // one to overflow a 2-layer net
        t.learning_rate = 1e300;
        t.epochs = 30;
        let err = train_vanilla(&g, &cfg, &t).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("epoch"), "{msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn patience_stops_early_on_stalled_loss() {
        let g = toy_graph();
        let cfg = cfg_for(&g);
        let mut t = tcfg(&g, 0.0, TrainMode::Gated);
        t.epochs = 500;
        t.learning_rate = 0.0_f64.max(1e-9); // effectively frozen
        t.patience = Some(3);
        let (_, h) = train_vanilla(&g, &cfg, &t).unwrap();
        assert!(h.records.len() < 500, "ran {} epochs", h.records.len());
    }

    #[test]
    fn config_validation() {
        let g = toy_graph();
        let mut t = tcfg(&g, 1.0, TrainMode::Gated);
        t.alpha = 1.5;
        assert!(t.validate().is_err());
        t.alpha = 0.5;
        t.epochs = 0;
        assert!(t.validate().is_err());
    }
}
