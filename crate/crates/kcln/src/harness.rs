//! The three experimental protocols: sample-size curves, epoch curves at a
//! fixed subsample, and the alpha-robustness sweep with corrupted advice.
//!
//! All protocols share one hold-out split (fixed by `split_seed`); run seeds
//! vary only initialization and subsampling, so every report row sees the
//! same test set. Cells are independent training jobs; with `jobs > 1` they
//! run on a rayon pool and the merge is deterministic by sorted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::advice::lang::{validate, RuleSet};
use crate::advice::masks::{create_mask, AdviceMasks};
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::metrics::epochs_to_reach;
use crate::model::CLNConfig;
use crate::train::{train_with_masks, TrainConfig, TrainHistory, TrainMode};

/// Convergence tolerance for the epochs-to-best measure: first epoch within
/// this distance of the final test F1.
pub const CONVERGENCE_TOL: f64 = 0.01;

/// Offset added to a run seed to derive its subsample stream.
pub const SUBSAMPLE_SEED_OFFSET: u64 = 2;

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Training-set fractions for the sample curve and alpha sweep.
    pub fractions: Vec<f64>,
    /// Alpha grid for the robustness sweep; 0 is omitted because it equals
    /// the no-advice baseline.
    pub alphas: Vec<f64>,
    /// Run seeds; results are averaged over them.
    pub seeds: Vec<u64>,
    pub epochs: usize,
    /// Alpha used by the non-sweep protocols.
    pub alpha: f64,
    pub train_fraction: f64,
    /// Seed of the single hold-out split shared by every cell.
    pub split_seed: u64,
    /// Subsample fraction for the epoch curve (0.4 of the training split is
    /// 24% of the total data under a 60/40 split).
    pub epoch_curve_fraction: f64,
    pub corrupt_advice: bool,
    pub learning_rate: f64,
    pub mode: TrainMode,
    pub patience: Option<usize>,
    /// Parallel training jobs for independent cells.
    pub jobs: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            fractions: vec![0.05, 0.1, 0.2, 0.4, 0.6, 0.8],
            alphas: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            seeds: vec![1, 2, 3, 4, 5],
            epochs: 100,
            alpha: 1.0,
            train_fraction: 0.6,
            split_seed: 1000,
            epoch_curve_fraction: 0.4,
            corrupt_advice: false,
            learning_rate: 1e-3,
            mode: TrainMode::Gated,
            patience: None,
            jobs: 1,
        }
    }
}

impl ExperimentSpec {
    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must be nonempty".into()));
        }
        for &f in &self.fractions {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("fraction {f} outside (0,1]")));
            }
        }
        for &a in &self.alphas {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("alpha {a} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// One trained cell of a sweep.
#[derive(Debug, Clone)]
pub struct Cell {
    pub method: String,
    pub fraction: f64,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub f1: f64,
    pub aucpr: Option<f64>,
    pub epochs_to_best: usize,
}

#[derive(Debug, Clone)]
pub struct MetricReport {
    pub cells: Vec<Cell>,
    /// Stable hash of the shared test id set; identical in every row.
    pub test_ids_hash: String,
}

/// Per-epoch curves for both methods, one history per seed.
#[derive(Debug, Clone)]
pub struct EpochCurveReport {
    pub histories: BTreeMap<String, Vec<TrainHistory>>,
    pub test_ids_hash: String,
}

fn fnv1a(ids: &[usize]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &id in ids {
        for byte in (id as u64).to_le_bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    format!("{hash:016x}")
}

/// Flip every head label to a deterministically incorrect value: label index
/// +1 modulo the label set (the complement in the binary case).
pub fn corrupt_rules(rules: &RuleSet, g: &KnowledgeGraph) -> RuleSet {
    let names = g.label_names();
    let mut out = rules.clone();
    for rule in &mut out.rules {
        for head in &mut rule.heads {
            if let Some(idx) = g.label_index(&head.label) {
                head.label = names[(idx + 1) % names.len()].clone();
            }
        }
    }
    out
}

struct CellJob {
    method: &'static str,
    fraction: f64,
    alpha: Option<f64>,
    seed: u64,
}

fn run_cells(
    g: &KnowledgeGraph,
    masks: &AdviceMasks,
    empty_masks: &AdviceMasks,
    cln_cfg: &CLNConfig,
    spec: &ExperimentSpec,
    split: &crate::graph::DataSplit,
    jobs_list: Vec<CellJob>,
) -> Result<Vec<Cell>> {
    let run_one = |job: &CellJob| -> Result<Cell> {
        let train_ids = split.subsample(job.fraction, job.seed + SUBSAMPLE_SEED_OFFSET)?;
        let t_cfg = TrainConfig {
            epochs: spec.epochs,
            alpha: job.alpha.unwrap_or(0.0),
            learning_rate: spec.learning_rate,
            seed: job.seed,
            mode: spec.mode,
            train_ids,
            eval_ids: split.test_ids.clone(),
            patience: spec.patience,
        };
        let used_masks = if job.method == "vanilla" { empty_masks } else { masks };
        let (_, history) = train_with_masks(g, used_masks, cln_cfg, &t_cfg)?;
        let series = history.test_f1_series();
        Ok(Cell {
            method: job.method.to_string(),
            fraction: job.fraction,
            alpha: job.alpha,
            seed: job.seed,
            f1: history.final_test_f1().unwrap_or(f64::NAN),
            aucpr: history.records.last().and_then(|r| r.test_aucpr),
            epochs_to_best: epochs_to_reach(&series, CONVERGENCE_TOL),
        })
    };

    let mut cells: Vec<Cell> = if spec.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs_list.par_iter().map(run_one).collect::<Result<Vec<_>>>())?
    } else {
        jobs_list.iter().map(run_one).collect::<Result<Vec<_>>>()?
    };
    cells.sort_by(|a, b| {
        (a.fraction, &a.method, a.alpha.unwrap_or(-1.0), a.seed)
            .partial_cmp(&(b.fraction, &b.method, b.alpha.unwrap_or(-1.0), b.seed))
            .unwrap()
    });
    Ok(cells)
}

fn checked_masks(g: &KnowledgeGraph, rules: &RuleSet) -> Result<AdviceMasks> {
    let diags = validate(rules, g);
    if !diags.is_empty() {
        return Err(Error::Diagnostics(diags.iter().map(|d| d.to_string()).collect()));
    }
    Ok(create_mask(g, rules))
}

/// Sample-size curves: both methods trained at every fraction against the
/// fixed hold-out test set, averaged over seeds.
pub fn run_sample_curve(
    g: &KnowledgeGraph,
    rules: &RuleSet,
    cln_cfg: &CLNConfig,
    spec: &ExperimentSpec,
) -> Result<MetricReport> {
    spec.validate()?;
    let split = g.split(spec.train_fraction, spec.split_seed)?;
    let masks = checked_masks(g, rules)?;
    let empty = AdviceMasks::empty(g.num_entities(), g.num_relations(), g.num_labels());

    let mut jobs_list = Vec::new();
    for &fraction in &spec.fractions {
        for &seed in &spec.seeds {
            if !rules.is_empty() {
                jobs_list.push(CellJob {
                    method: "kcln",
                    fraction,
                    alpha: Some(spec.alpha),
                    seed,
                });
            }
            jobs_list.push(CellJob {
                method: "vanilla",
                fraction,
                alpha: None,
                seed,
            });
        }
    }
    let cells = run_cells(g, &masks, &empty, cln_cfg, spec, &split, jobs_list)?;
    Ok(MetricReport {
        cells,
        test_ids_hash: fnv1a(&split.test_ids),
    })
}

/// Epoch curves at the fixed epoch-curve subsample; returns full per-epoch
/// histories per method and seed.
pub fn run_epoch_curve(
    g: &KnowledgeGraph,
    rules: &RuleSet,
    cln_cfg: &CLNConfig,
    spec: &ExperimentSpec,
) -> Result<EpochCurveReport> {
    spec.validate()?;
    let split = g.split(spec.train_fraction, spec.split_seed)?;
    let masks = checked_masks(g, rules)?;
    let empty = AdviceMasks::empty(g.num_entities(), g.num_relations(), g.num_labels());

    let mut methods: Vec<(&str, &AdviceMasks, Option<f64>)> = vec![("vanilla", &empty, None)];
    if !rules.is_empty() {
        methods.insert(0, ("kcln", &masks, Some(spec.alpha)));
    }

    let mut jobs_list = Vec::new();
    for &(method, used_masks, alpha) in &methods {
        for &seed in &spec.seeds {
            jobs_list.push((method, used_masks, alpha, seed));
        }
    }
    let run_one = |&(method, used_masks, alpha, seed): &(
        &str,
        &AdviceMasks,
        Option<f64>,
        u64,
    )|
     -> Result<(String, u64, TrainHistory)> {
        let train_ids =
            split.subsample(spec.epoch_curve_fraction, seed + SUBSAMPLE_SEED_OFFSET)?;
        let t_cfg = TrainConfig {
            epochs: spec.epochs,
            alpha: alpha.unwrap_or(0.0),
            learning_rate: spec.learning_rate,
            seed,
            mode: spec.mode,
            train_ids,
            eval_ids: split.test_ids.clone(),
            patience: spec.patience,
        };
        let (_, history) = train_with_masks(g, used_masks, cln_cfg, &t_cfg)?;
        Ok((method.to_string(), seed, history))
    };
    let results: Vec<(String, u64, TrainHistory)> = if spec.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs_list.par_iter().map(run_one).collect::<Result<Vec<_>>>())?
    } else {
        jobs_list.iter().map(run_one).collect::<Result<Vec<_>>>()?
    };

    let mut histories: BTreeMap<String, Vec<TrainHistory>> = BTreeMap::new();
    let mut sorted = results;
    sorted.sort_by_key(|(m, s, _)| (m.clone(), *s));
    for (method, _, history) in sorted {
        histories.entry(method).or_default().push(history);
    }
    Ok(EpochCurveReport {
        histories,
        test_ids_hash: fnv1a(&split.test_ids),
    })
}

/// Alpha-robustness sweep. With `corrupt_advice` set, every head label is
/// flipped to an incorrect value before training. Vanilla cells are included
/// for reference (reported at alpha 0, which is equivalent).
pub fn run_alpha_sweep(
    g: &KnowledgeGraph,
    rules: &RuleSet,
    cln_cfg: &CLNConfig,
    spec: &ExperimentSpec,
) -> Result<MetricReport> {
    spec.validate()?;
    if rules.is_empty() {
        return Err(Error::Config("alpha sweep requires advice rules".into()));
    }
    let effective = if spec.corrupt_advice {
        corrupt_rules(rules, g)
    } else {
        rules.clone()
    };
    let split = g.split(spec.train_fraction, spec.split_seed)?;
    let masks = checked_masks(g, &effective)?;
    let empty = AdviceMasks::empty(g.num_entities(), g.num_relations(), g.num_labels());

    let mut jobs_list = Vec::new();
    for &fraction in &spec.fractions {
        for &seed in &spec.seeds {
            for &alpha in &spec.alphas {
                jobs_list.push(CellJob {
                    method: "kcln",
                    fraction,
                    alpha: Some(alpha),
                    seed,
                });
            }
            jobs_list.push(CellJob {
                method: "vanilla",
                fraction,
                alpha: None,
                seed,
            });
        }
    }
    let cells = run_cells(g, &masks, &empty, cln_cfg, spec, &split, jobs_list)?;
    Ok(MetricReport {
        cells,
        test_ids_hash: fnv1a(&split.test_ids),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricReport {
    /// Seed-aggregated rows keyed by (method, alpha, fraction).
    fn grouped(&self) -> BTreeMap<(String, String, String), Vec<&Cell>> {
        let mut groups: BTreeMap<(String, String, String), Vec<&Cell>> = BTreeMap::new();
        for cell in &self.cells {
            let key = (
                cell.method.clone(),
                cell.alpha.map(|a| format!("{a:.2}")).unwrap_or_else(|| "0.00".into()),
                format!("{:.4}", cell.fraction),
            );
            groups.entry(key).or_default().push(cell);
        }
        groups
    }

    pub fn sample_curve_csv(&self) -> String {
        let mut out = String::from(
            "method,fraction,f1_mean,f1_std,aucpr_mean,aucpr_std,epochs_to_best_mean,test_ids_hash\n",
        );
        for ((method, _, fraction), cells) in self.grouped() {
            let (f1m, f1s) = mean_std(&cells.iter().map(|c| c.f1).collect::<Vec<_>>());
            let aucs: Vec<f64> = cells.iter().filter_map(|c| c.aucpr).collect();
            let (am, asd) = if aucs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&aucs) };
            let etb =
                cells.iter().map(|c| c.epochs_to_best as f64).sum::<f64>() / cells.len() as f64;
            writeln!(
                out,
                "{method},{fraction},{f1m:.6},{f1s:.6},{},{},{etb:.1},{}",
                fmt_opt(if am.is_nan() { None } else { Some(am) }),
                fmt_opt(if asd.is_nan() { None } else { Some(asd) }),
                self.test_ids_hash
            )
            .unwrap();
        }
        out
    }

    pub fn alpha_sweep_csv(&self) -> String {
        let mut out = String::from("method,alpha,fraction,f1_mean,f1_std,aucpr_mean,aucpr_std\n");
        for ((method, alpha, fraction), cells) in self.grouped() {
            let (f1m, f1s) = mean_std(&cells.iter().map(|c| c.f1).collect::<Vec<_>>());
            let aucs: Vec<f64> = cells.iter().filter_map(|c| c.aucpr).collect();
            let (am, asd) = if aucs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&aucs) };
            writeln!(
                out,
                "{method},{alpha},{fraction},{f1m:.6},{f1s:.6},{},{}",
                fmt_opt(if am.is_nan() { None } else { Some(am) }),
                fmt_opt(if asd.is_nan() { None } else { Some(asd) }),
            )
            .unwrap();
        }
        out
    }

    /// Mean F1 over seeds for one (method, alpha, fraction) slice.
    pub fn mean_f1(&self, method: &str, alpha: Option<f64>, fraction: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| {
                c.method == method
                    && (c.fraction - fraction).abs() < 1e-12
                    && match (alpha, c.alpha) {
                        (None, None) => true,
                        (Some(a), Some(b)) => (a - b).abs() < 1e-12,
                        _ => false,
                    }
            })
            .map(|c| c.f1)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}

impl EpochCurveReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("method,epoch,loss_mean,test_f1_mean,test_f1_std,test_aucpr_mean\n");
        for (method, runs) in &self.histories {
            let max_epochs = runs.iter().map(|h| h.records.len()).max().unwrap_or(0);
            for e in 0..max_epochs {
                let losses: Vec<f64> = runs
                    .iter()
                    .filter_map(|h| h.records.get(e).map(|r| r.loss))
                    .collect();
                let f1s: Vec<f64> = runs
                    .iter()
                    .filter_map(|h| h.records.get(e).and_then(|r| r.test_f1))
                    .collect();
                let aucs: Vec<f64> = runs
                    .iter()
                    .filter_map(|h| h.records.get(e).and_then(|r| r.test_aucpr))
                    .collect();
                let (lm, _) = mean_std(&losses);
                let (fm, fs) = mean_std(&f1s);
                let am = if aucs.is_empty() {
                    None
                } else {
                    Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
                };
                writeln!(
                    out,
                    "{method},{},{lm:.6},{fm:.6},{fs:.6},{}",
                    e + 1,
                    fmt_opt(am)
                )
                .unwrap();
            }
        }
        out
    }

    /// Mean epochs-to-convergence (within [`CONVERGENCE_TOL`] of the final
    /// test F1) across a method's runs.
    pub fn mean_epochs_to_converge(&self, method: &str) -> Option<f64> {
        let runs = self.histories.get(method)?;
        let vals: Vec<f64> = runs
            .iter()
            .map(|h| epochs_to_reach(&h.test_f1_series(), CONVERGENCE_TOL) as f64)
            .collect();
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Re-emit a report CSV in gnuplot-ready columns: one x column, one series
/// per column, space separated, `nan` for missing cells.
pub fn plot_data(csv_text: &str) -> Result<String> {
    let mut lines = csv_text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty report".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);

    // (x, series, y) extraction per known report layout
    let (x_idx, y_idx, series_of): (usize, usize, Box<dyn Fn(&[&str]) -> String>) =
        if header.starts_with("method,fraction,") {
            let m = find("method").unwrap();
            (
                find("fraction").ok_or_else(|| Error::Config("bad header".into()))?,
                find("f1_mean").ok_or_else(|| Error::Config("bad header".into()))?,
                Box::new(move |f: &[&str]| f[m].to_string()),
            )
        } else if header.starts_with("method,epoch,") {
            let m = find("method").unwrap();
            (
                find("epoch").unwrap(),
                find("test_f1_mean").ok_or_else(|| Error::Config("bad header".into()))?,
                Box::new(move |f: &[&str]| f[m].to_string()),
            )
        } else if header.starts_with("method,alpha,") {
            let m = find("method").unwrap();
            let a = find("alpha").unwrap();
            (
                find("fraction").ok_or_else(|| Error::Config("bad header".into()))?,
                find("f1_mean").ok_or_else(|| Error::Config("bad header".into()))?,
                Box::new(move |f: &[&str]| format!("{}@a{}", f[m], f[a])),
            )
        } else {
            return Err(Error::Config(format!("unrecognized report header: {header}")));
        };

    let mut series_names: Vec<String> = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let series = series_of(&fields);
        if !series_names.contains(&series) {
            series_names.push(series.clone());
        }
        table
            .entry(fields[x_idx].to_string())
            .or_default()
            .insert(series, fields[y_idx].to_string());
    }
    series_names.sort();
    let mut out = format!("# x {}\n", series_names.join(" "));
    for (x, row) in &table {
        let mut line = x.clone();
        for s in &series_names {
            line.push(' ');
            line.push_str(row.get(s).map(String::as_str).unwrap_or("nan"));
        }
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}
