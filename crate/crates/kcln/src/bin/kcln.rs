//! Command-line frontend: data loading, rule validation, training,
//! evaluation, sweeps, mask debugging, synthetic data generation, and
//! report reshaping for plotting.
//!
//! Exit codes: 0 success, 1 user/config/data error, 2 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kcln::advice::lang::{parse_rules, validate, RuleSet};
use kcln::advice::masks::create_mask;
use kcln::config::{parse_config, RunConfig};
use kcln::error::{Error, Result};
use kcln::graph::{load_graph, KnowledgeGraph};
use kcln::harness::{
    plot_data, run_alpha_sweep, run_epoch_curve, run_sample_curve, ExperimentSpec,
};
use kcln::metrics::{auc_pr, micro_f1};
use kcln::model::{forward, predict, Activation, CLNConfig, Checkpoint};
use kcln::synth::{generate, SynthSpec};
use kcln::train::{train, TrainConfig, TrainMode, POSITIVE_LABEL};

/// Fixed offsets deriving per-component seed streams from `--seed`.
const SPLIT_SEED_OFFSET: u64 = 1;
const SUBSAMPLE_SEED_OFFSET: u64 = 2;

#[derive(Parser)]
#[command(
    name = "kcln",
    version,
    about = "Column networks for collective classification, with advice-gated training",
    long_about = "Column networks for collective classification on multi-relational graphs.\n\
        Advice is given as preference rules (see the .adv grammar in the README) and\n\
        enters training through multiplicative soft gates on hidden units and contexts.\n\n\
        All randomness flows from --seed; sub-streams use fixed offsets:\n\
        parameter init = seed, train/test split = seed + 1, subsample = seed + 2.\n\
        Set KCLN_LOG to quiet, info or debug to control logging."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (with advice when --advice is given) and write a
    /// checkpoint plus a training-log CSV
    Train(TrainArgs),
    /// Evaluate a checkpoint: micro-F1, plus AUC-PR on binary label sets
    Eval(EvalArgs),
    /// Run an experimental protocol (sample curve, epoch curve, alpha sweep)
    Sweep(SweepArgs),
    /// Match advice rules against a graph and report bindings and masks
    Match(MatchArgs),
    /// Generate a synthetic dataset with planted rules and true advice
    Gen(GenArgs),
    /// Re-emit a report CSV in gnuplot-ready column layout
    PlotData(PlotDataArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Nodes TSV: node_id<TAB>label<TAB>idx:val,...  ('?' = unlabeled)
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// Edges TSV: relation<TAB>src_id<TAB>dst_id
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Vocab TSV mapping attribute names (Attr:value) to feature indices
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Load edges as given instead of adding reverse edges
    #[arg(long)]
    no_symmetrize: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Advice rules (.adv); omit for the vanilla baseline
    #[arg(long)]
    advice: Option<PathBuf>,
    /// Flat key=value config file; command-line flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Advice trade-off in [0,1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Hidden layers
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden units per layer
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Context normalizer; defaults to the average degree (min 1)
    #[arg(long)]
    z: Option<f64>,
    /// gated | combined-loss
    #[arg(long)]
    mode: Option<String>,
    /// Fraction of labeled data in the training split
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Fraction of the training split actually used
    #[arg(long)]
    sample_fraction: Option<f64>,
    /// Share layer weights above layer 1
    #[arg(long)]
    tie_layers: bool,
    /// Early-stop patience in stalled epochs
    #[arg(long)]
    patience: Option<usize>,
    /// Checkpoint output path
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Training-log CSV output path
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Id set to evaluate: train | test | all
    #[arg(long)]
    on: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// samples | epochs | alpha
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    advice: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flip advice head labels to incorrect values first
    #[arg(long)]
    corrupt_advice: bool,
    /// Comma-separated training fractions
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    /// Comma-separated alpha grid
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Comma-separated run seeds
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Alpha for the non-sweep protocols
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tie_layers: bool,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Seed of the shared hold-out split
    #[arg(long)]
    split_seed: Option<u64>,
    /// Parallel training jobs
    #[arg(long)]
    jobs: Option<usize>,
    /// Report output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    advice: Option<PathBuf>,
    /// Write masks as sparse triples to this path
    #[arg(long)]
    dump_masks: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    entities: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    relations: Option<usize>,
    #[arg(long)]
    labels: Option<usize>,
    /// Planted rule count (at most one per label)
    #[arg(long)]
    rules: Option<usize>,
    /// Fraction of rule-determined entities with flipped labels
    #[arg(long)]
    label_noise: Option<f64>,
    #[arg(long)]
    feature_noise: Option<f64>,
    /// Target average degree (the z constant)
    #[arg(long)]
    edge_density: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Report CSV produced by `kcln sweep`
    #[arg(long)]
    report: PathBuf,
    /// Output path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_logging() {
    let level = match std::env::var("KCLN_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version display and exit 0; usage errors are exit 1
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Match(args) => cmd_match(args),
        Command::Gen(args) => cmd_gen(args),
        Command::PlotData(args) => cmd_plot_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_run_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text, &p.display().to_string())
        }
        None => Ok(RunConfig::default()),
    }
}

/// Resolve a required path: flag wins, then config, else an error naming
/// the missing option.
fn require_path(flag: &Option<PathBuf>, cfg: &RunConfig, key: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.get(key).map(PathBuf::from))
        .ok_or_else(|| Error::Config(format!("missing required option --{key}")))
}

fn optional_path(flag: &Option<PathBuf>, cfg: &RunConfig, key: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.get(key).map(PathBuf::from))
}

fn load_data(data: &DataArgs, cfg: &RunConfig) -> Result<KnowledgeGraph> {
    let nodes = require_path(&data.nodes, cfg, "nodes")?;
    let edges = require_path(&data.edges, cfg, "edges")?;
    let vocab = optional_path(&data.vocab, cfg, "vocab");
    let symmetrize = if data.no_symmetrize {
        false
    } else {
        cfg.get_bool("symmetrize").unwrap_or(true)
    };
    let g = load_graph(&nodes, &edges, vocab.as_deref(), symmetrize)?;
    log::info!(
        "loaded graph: {} entities, {} features, {} relations, {} labels",
        g.num_entities(),
        g.feature_dim(),
        g.num_relations(),
        g.num_labels()
    );
    Ok(g)
}

fn load_advice(path: &Option<PathBuf>, cfg: &RunConfig, g: &KnowledgeGraph) -> Result<RuleSet> {
    let path = optional_path(path, cfg, "advice");
    let Some(path) = path else {
        return Ok(RuleSet::default());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let rules = parse_rules(&text)?;
    let diags = validate(&rules, g);
    if !diags.is_empty() {
        return Err(Error::Diagnostics(
            diags.iter().map(|d| d.to_string()).collect(),
        ));
    }
    log::info!(
        "loaded {} advice rules from {}",
        rules.rules.len(),
        path.display()
    );
    Ok(rules)
}

fn alpha_in_range(alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must be in [0,1], got {alpha}")));
    }
    Ok(alpha)
}

fn cln_config_for(
    g: &KnowledgeGraph,
    cfg: &RunConfig,
    layers: Option<usize>,
    hidden: Option<usize>,
    z: Option<f64>,
    tie_layers: bool,
) -> Result<CLNConfig> {
    let z = match z.or_else(|| cfg.get_f64("z")) {
        Some(z) => z,
        None => g.average_degree()?.max(1.0),
    };
    let config = CLNConfig {
        layers: layers.or_else(|| cfg.get_usize("layers")).unwrap_or(10),
        hidden: hidden.or_else(|| cfg.get_usize("hidden")).unwrap_or(40),
        z,
        activation: Activation::Relu,
        num_labels: g.num_labels(),
        feature_dim: g.feature_dim(),
        relation_names: g.relation_names(),
        tie_layers: tie_layers || cfg.get_bool("tie_layers").unwrap_or(false),
    };
    config.validate()?;
    Ok(config)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = load_run_config(&args.config)?;
    let g = load_data(&args.data, &cfg)?;
    let rules = load_advice(&args.advice, &cfg, &g)?;
    let cln_cfg = cln_config_for(&g, &cfg, args.layers, args.hidden, args.z, args.tie_layers)?;

    let seed = args.seed.or_else(|| cfg.get_u64("seed")).unwrap_or(1);
    let train_fraction = args
        .train_fraction
        .or_else(|| cfg.get_f64("train_fraction"))
        .unwrap_or(0.6);
    let sample_fraction = args
        .sample_fraction
        .or_else(|| cfg.get_f64("sample_fraction"))
        .unwrap_or(1.0);
    let split = g.split(train_fraction, seed + SPLIT_SEED_OFFSET)?;
    let train_ids = split.subsample(sample_fraction, seed + SUBSAMPLE_SEED_OFFSET)?;

    let mode: TrainMode = args
        .mode
        .as_deref()
        .or_else(|| cfg.get("mode"))
        .unwrap_or("gated")
        .parse()?;
    let t_cfg = TrainConfig {
        epochs: args.epochs.or_else(|| cfg.get_usize("epochs")).unwrap_or(100),
        alpha: alpha_in_range(args.alpha.or_else(|| cfg.get_f64("alpha")).unwrap_or(1.0))?,
        learning_rate: args.lr.or_else(|| cfg.get_f64("lr")).unwrap_or(1e-3),
        seed,
        mode,
        train_ids,
        eval_ids: split.test_ids.clone(),
        patience: args.patience.or_else(|| cfg.get_usize("patience")),
    };
    log::info!(
        "training: {} layers x {} units, z = {:.3}, {} train ids, {} epochs, alpha = {}",
        cln_cfg.layers,
        cln_cfg.hidden,
        cln_cfg.z,
        t_cfg.train_ids.len(),
        t_cfg.epochs,
        t_cfg.alpha
    );

    let (params, history) = train(&g, &rules, &cln_cfg, &t_cfg)?;

    let ckpt_path = args
        .checkpoint
        .or_else(|| cfg.get("checkpoint").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("kcln_checkpoint.json"));
    let log_path = args
        .log
        .or_else(|| cfg.get("log").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("train_log.csv"));
    Checkpoint::new(cln_cfg, g.label_names().to_vec(), params).save(&ckpt_path)?;
    std::fs::write(&log_path, history.to_csv()).map_err(|e| Error::io(&log_path, e))?;
    // the entity id -> index mapping travels with the checkpoint
    let ids_path = ckpt_path.with_extension("ids.tsv");
    g.write_id_map(&ids_path)?;

    let last = history.records.last().expect("at least one epoch");
    println!(
        "trained {} epochs: loss {:.6}, train F1 {:.4}{}",
        last.epoch,
        last.loss,
        last.train_f1,
        last.test_f1
            .map(|f| format!(", test F1 {f:.4}"))
            .unwrap_or_default()
    );
    println!("checkpoint: {}", ckpt_path.display());
    println!("training log: {}", log_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let cfg = load_run_config(&args.config)?;
    let ckpt_path = require_path(&args.checkpoint, &cfg, "checkpoint")?;
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let g = load_data(&args.data, &cfg)?;
    if ckpt.label_names != g.label_names() {
        return Err(Error::Config(format!(
            "checkpoint labels {:?} do not match graph labels {:?}",
            ckpt.label_names,
            g.label_names()
        )));
    }

    let on = args.on.as_deref().or_else(|| cfg.get("on")).unwrap_or("test");
    let seed = args.seed.or_else(|| cfg.get_u64("seed")).unwrap_or(1);
    let train_fraction = args
        .train_fraction
        .or_else(|| cfg.get_f64("train_fraction"))
        .unwrap_or(0.6);
    let ids: Vec<usize> = match on {
        "all" => g.labeled_ids(),
        "train" => g.split(train_fraction, seed + SPLIT_SEED_OFFSET)?.train_ids,
        "test" => g.split(train_fraction, seed + SPLIT_SEED_OFFSET)?.test_ids,
        other => {
            return Err(Error::Config(format!(
                "unknown id set '{other}' (expected train, test or all)"
            )))
        }
    };
    if ids.is_empty() {
        return Err(Error::Config("empty evaluation id set".into()));
    }

    let cache = forward(&g, &ckpt.config, &ckpt.params, None)?;
    let mut preds = Vec::with_capacity(ids.len());
    let mut golds = Vec::with_capacity(ids.len());
    for &i in &ids {
        preds.push(predict(&cache, i).0);
        golds.push(g.label_of(i).expect("labeled id"));
    }
    let f1 = micro_f1(&preds, &golds, g.num_labels())?;
    println!("entities: {}", ids.len());
    println!("micro-F1: {f1:.6}");
    if g.num_labels() == 2 {
        let scores: Vec<f64> = ids
            .iter()
            .map(|&i| cache.probs.get(i, POSITIVE_LABEL))
            .collect();
        let bin: Vec<bool> = golds.iter().map(|&l| l == POSITIVE_LABEL).collect();
        match auc_pr(&scores, &bin) {
            Ok(ap) => println!("AUC-PR:   {ap:.6}"),
            Err(_) => println!("AUC-PR:   undefined (degenerate gold set)"),
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_run_config(&args.config)?;
    let g = load_data(&args.data, &cfg)?;
    let rules = load_advice(&args.advice, &cfg, &g)?;
    let cln_cfg = cln_config_for(&g, &cfg, args.layers, args.hidden, args.z, args.tie_layers)?;

    let protocol = args
        .protocol
        .as_deref()
        .or_else(|| cfg.get("protocol"))
        .ok_or_else(|| Error::Config("missing required option --protocol".into()))?
        .to_string();
    let mode: TrainMode = args
        .mode
        .as_deref()
        .or_else(|| cfg.get("mode"))
        .unwrap_or("gated")
        .parse()?;
    let defaults = ExperimentSpec::default();
    let spec = ExperimentSpec {
        fractions: args
            .fractions
            .or_else(|| cfg.get_f64_list("fractions"))
            .unwrap_or(defaults.fractions),
        alphas: args
            .alphas
            .or_else(|| cfg.get_f64_list("alphas"))
            .unwrap_or(defaults.alphas),
        seeds: args
            .seeds
            .or_else(|| cfg.get_u64_list("seeds"))
            .unwrap_or(defaults.seeds),
        epochs: args.epochs.or_else(|| cfg.get_usize("epochs")).unwrap_or(100),
        alpha: alpha_in_range(args.alpha.or_else(|| cfg.get_f64("alpha")).unwrap_or(1.0))?,
        train_fraction: args
            .train_fraction
            .or_else(|| cfg.get_f64("train_fraction"))
            .unwrap_or(0.6),
        split_seed: args
            .split_seed
            .or_else(|| cfg.get_u64("split_seed"))
            .unwrap_or(defaults.split_seed),
        epoch_curve_fraction: cfg
            .get_f64("epoch_fraction")
            .unwrap_or(defaults.epoch_curve_fraction),
        corrupt_advice: args.corrupt_advice || cfg.get_bool("corrupt_advice").unwrap_or(false),
        learning_rate: args.lr.or_else(|| cfg.get_f64("lr")).unwrap_or(1e-3),
        mode,
        patience: cfg.get_usize("patience"),
        jobs: args.jobs.or_else(|| cfg.get_usize("jobs")).unwrap_or(1),
    };
    let out_dir = args
        .out_dir
        .or_else(|| cfg.get("out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let (file, text) = match protocol.as_str() {
        "samples" => {
            let report = run_sample_curve(&g, &rules, &cln_cfg, &spec)?;
            ("sample_curve.csv", report.sample_curve_csv())
        }
        "epochs" => {
            let report = run_epoch_curve(&g, &rules, &cln_cfg, &spec)?;
            ("epoch_curve.csv", report.to_csv())
        }
        "alpha" => {
            let report = run_alpha_sweep(&g, &rules, &cln_cfg, &spec)?;
            ("alpha_sweep.csv", report.alpha_sweep_csv())
        }
        other => {
            return Err(Error::Config(format!(
                "unknown protocol '{other}' (expected samples, epochs or alpha)"
            )))
        }
    };
    let path = out_dir.join(file);
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    g.write_id_map(&out_dir.join("entity_ids.tsv"))?;
    println!("wrote {} ({} rows)", path.display(), text.lines().count() - 1);
    Ok(())
}

fn cmd_match(args: MatchArgs) -> Result<()> {
    let cfg = RunConfig::default();
    let g = load_data(&args.data, &cfg)?;
    let advice_path = args
        .advice
        .ok_or_else(|| Error::Config("missing required option --advice".into()))?;
    let text = std::fs::read_to_string(&advice_path).map_err(|e| Error::io(&advice_path, e))?;
    let rules = parse_rules(&text)?;
    let diags = validate(&rules, &g);
    if !diags.is_empty() {
        return Err(Error::Diagnostics(
            diags.iter().map(|d| d.to_string()).collect(),
        ));
    }

    for rule in &rules.rules {
        let bindings = kcln::advice::masks::match_rule(&g, rule);
        println!("rule (line {}): {} bindings", rule.source_line, bindings.len());
        for b in bindings.iter().take(5) {
            let pretty: Vec<String> = b
                .assignments
                .iter()
                .map(|(var, &e)| format!("{var}={}", g.entity_id(e)))
                .collect();
            println!("  {}", pretty.join(", "));
        }
        if bindings.len() > 5 {
            println!("  ... {} more", bindings.len() - 5);
        }
    }

    let masks = create_mask(&g, &rules);
    println!("satisfied entities: {}", masks.satisfied_ids().len());
    println!("entity/feature marks: {}", masks.m_w.len());
    for (r, per) in masks.m_c.iter().enumerate() {
        println!(
            "context marks under '{}': {}",
            g.relations()[r].name,
            per.iter().filter(|&&on| on).count()
        );
    }
    let preferred = masks
        .label_advice
        .iter()
        .filter(|a| matches!(a, kcln::advice::masks::LabelAdvice::Prefer(_)))
        .count();
    println!("entities with a preferred label: {preferred}");

    if let Some(dump) = args.dump_masks {
        masks.dump(&g, &dump)?;
        println!("mask dump: {}", dump.display());
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = load_run_config(&args.config)?;
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        num_entities: args
            .entities
            .or_else(|| cfg.get_usize("entities"))
            .unwrap_or(defaults.num_entities),
        feature_dim: args
            .features
            .or_else(|| cfg.get_usize("features"))
            .unwrap_or(defaults.feature_dim),
        num_relations: args
            .relations
            .or_else(|| cfg.get_usize("relations"))
            .unwrap_or(defaults.num_relations),
        num_labels: args
            .labels
            .or_else(|| cfg.get_usize("labels"))
            .unwrap_or(defaults.num_labels),
        num_rules: args
            .rules
            .or_else(|| cfg.get_usize("rules"))
            .unwrap_or(defaults.num_rules),
        label_noise: args
            .label_noise
            .or_else(|| cfg.get_f64("label_noise"))
            .unwrap_or(defaults.label_noise),
        feature_noise: args
            .feature_noise
            .or_else(|| cfg.get_f64("feature_noise"))
            .unwrap_or(defaults.feature_noise),
        edge_density: args
            .edge_density
            .or_else(|| cfg.get_f64("edge_density"))
            .unwrap_or(defaults.edge_density),
        seed: args.seed.or_else(|| cfg.get_u64("seed")).unwrap_or(defaults.seed),
    };
    let out_dir = args
        .out_dir
        .or_else(|| cfg.get("out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("synth"));
    let bundle = generate(&spec)?;
    let paths = bundle.write_to_dir(&out_dir)?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_plot_data(args: PlotDataArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.report).map_err(|e| Error::io(&args.report, e))?;
    let out = plot_data(&text)?;
    match args.out {
        Some(path) => std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?,
        None => print!("{out}"),
    }
    Ok(())
}
