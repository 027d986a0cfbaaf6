//! `miracle`: train, evaluate and query the DDI link predictor from the shell.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use miracle::data::{self, Dataset, DatasetSplit, DrugRecord, SplitTag};
use miracle::metrics::{self, MetricTriple, DECISION_THRESHOLD};
use miracle::model::{embeddings, predict_pairs, GraphContext, MiracleModel};
use miracle::smiles::{element_symbol, parse_smiles};
use miracle::train::{make_split, write_history, Checkpoint, StopReason, TrainConfig, Trainer};
use serde_json::json;

const CHECKPOINT: &str = "checkpoint.bin";
const SPLIT: &str = "split.csv";
const HISTORY: &str = "history.csv";
const DRUGS: &str = "drugs.csv";
const CONFIG: &str = "config.txt";

#[derive(Parser)]
#[command(name = "miracle", version, about = "Drug-drug interaction link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoint, split, history and config to a directory.
    Train(Box<TrainArgs>),
    /// Print AUROC, AUPRC and F1 of a trained model on one split.
    Evaluate(EvaluateArgs),
    /// Score drug pairs read from a TSV file.
    Predict(PredictArgs),
    /// Write one embedding row per drug.
    Embed(EmbedArgs),
    /// Dump the molecular graph of a SMILES string as JSON.
    ParseSmiles {
        smiles: String,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Drug table: `drug_id,smiles` with a header row.
    #[arg(long)]
    drugs: PathBuf,
    /// Interaction table: `drug_a,drug_b` with a header row.
    #[arg(long)]
    interactions: PathBuf,
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reuse a split written by an earlier run instead of drawing one.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Train seeds seed..seed+N-1 and report mean ± std on the test split.
    #[arg(long, default_value_t = 1)]
    repeat: u64,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    lr_init: Option<String>,
    #[arg(long)]
    lr_decay: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    d_h: Option<String>,
    #[arg(long)]
    d_g: Option<String>,
    #[arg(long)]
    d_u: Option<String>,
    #[arg(long)]
    d_hid: Option<String>,
    #[arg(long)]
    bampn_layers: Option<String>,
    #[arg(long)]
    gcn_layers: Option<String>,
    #[arg(long)]
    k_hop: Option<String>,
    /// `balanced`, `balanced:CAP` or a fixed count.
    #[arg(long)]
    neg_per_anchor: Option<String>,
    #[arg(long)]
    unlabeled_ratio: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> [(&'static str, &Option<String>); 17] {
        [
            ("lr_init", &self.lr_init),
            ("lr_decay", &self.lr_decay),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("dropout", &self.dropout),
            ("d_h", &self.d_h),
            ("d_g", &self.d_g),
            ("d_u", &self.d_u),
            ("d_hid", &self.d_hid),
            ("bampn_layers", &self.bampn_layers),
            ("gcn_layers", &self.gcn_layers),
            ("k_hop", &self.k_hop),
            ("neg_per_anchor", &self.neg_per_anchor),
            ("unlabeled_ratio", &self.unlabeled_ratio),
            ("epochs", &self.epochs),
            ("patience", &self.patience),
            ("seed", &self.seed),
        ]
    }
}

/// Where a trained model lives. `--run` supplies defaults for the rest.
#[derive(Args)]
struct RunFiles {
    /// Output directory of `train`.
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    drugs: Option<PathBuf>,
    /// Use the final parameters rather than the best-validation snapshot.
    #[arg(long)]
    last: bool,
    /// Map elements unseen in training to a zero embedding instead of failing.
    #[arg(long)]
    allow_unknown_atoms: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    files: RunFiles,
    #[arg(long, value_enum, default_value_t = Which::Test)]
    which: Which,
    /// Also write `drug_a,drug_b,label,score` per pair.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    files: RunFiles,
    /// TSV of `drug_a<TAB>drug_b`; a `drug_a<TAB>drug_b` header is optional.
    #[arg(long)]
    input: PathBuf,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    files: RunFiles,
    #[arg(long, value_enum, default_value_t = View::Inter)]
    view: View,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Val,
    Test,
}

/// Molecular-structure embedding `G` or network embedding `D`.
#[derive(Clone, Copy, ValueEnum)]
enum View {
    Inter,
    Intra,
}

/// A problem with the invocation rather than with the run itself.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} file not found: {}", path.display())))
    }
}

fn effective_config(args: &TrainArgs) -> anyhow::Result<TrainConfig> {
    let mut config = TrainConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config
            .apply_text(&text)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    for (key, value) in args.overrides.pairs() {
        if let Some(v) = value {
            config.set(key, v).map_err(|e| usage(format!("--{}: {e}", key.replace('_', "-"))))?;
        }
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn print_metrics(m: &MetricTriple) {
    println!("AUROC {:.6} AUPRC {:.6} F1 {:.6}", m.auroc, m.auprc, m.f1);
}

fn train_once(
    ds: &Dataset,
    config: TrainConfig,
    fixed_split: Option<&DatasetSplit>,
    dir: &Path,
) -> anyhow::Result<MetricTriple> {
    let split = match fixed_split {
        Some(s) => s.clone(),
        None => make_split(ds, config.seed)?,
    };
    info!(
        "seed {}: {} train, {} val, {} test pairs",
        config.seed,
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let mut tr = Trainer::new(config, &ds.graphs, split)?;
    let reason = tr.run(|r| {
        if r.epoch % 10 == 0 {
            info!(
                "epoch {} loss {:.4} (s {:.4} c {:.4} d {:.4}) val AUROC {:.4}",
                r.epoch, r.loss, r.loss_s, r.loss_c, r.loss_d, r.val_auroc
            );
        }
    })?;
    match reason {
        StopReason::EpochBudget => info!("finished {} epochs", tr.epoch),
        StopReason::EarlyStopped => info!("early stop after {} epochs", tr.epoch),
        StopReason::Diverged { epoch } => log::warn!("diverged at epoch {epoch}"),
    }

    fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    Checkpoint::from_trainer(&tr).save(&dir.join(CHECKPOINT))?;
    data::write_split(&dir.join(SPLIT), &tr.split, &ds.drugs)?;
    write_history(&dir.join(HISTORY), &tr.history)?;
    data::write_drugs(&dir.join(DRUGS), &ds.drugs)?;
    fs::write(dir.join(CONFIG), tr.config.to_text()).with_context(|| format!("writing {}", dir.display()))?;

    tr.model = tr.best_model();
    Ok(tr.evaluate(SplitTag::Test)?)
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    require_file(&args.drugs, "drugs")?;
    require_file(&args.interactions, "interactions")?;
    if let Some(p) = &args.config {
        require_file(p, "config")?;
    }
    if let Some(p) = &args.split {
        require_file(p, "split")?;
    }
    if args.repeat == 0 {
        return Err(usage("--repeat must be at least 1"));
    }
    let config = effective_config(&args)?;
    fs::create_dir_all(&args.out).map_err(|e| usage(format!("cannot create {}: {e}", args.out.display())))?;
    let ds = data::load(&args.drugs, &args.interactions)?;
    let fixed = args.split.as_deref().map(|p| data::read_split(p, &ds)).transpose()?;

    if args.repeat == 1 {
        let m = train_once(&ds, config, fixed.as_ref(), &args.out)?;
        print_metrics(&m);
        return Ok(());
    }
    let mut runs = Vec::new();
    for k in 0..args.repeat {
        let seed = config.seed + k;
        let run = TrainConfig { seed, ..config.clone() };
        let m = train_once(&ds, run, fixed.as_ref(), &args.out.join(format!("seed-{seed}")))?;
        print!("seed {seed}: ");
        print_metrics(&m);
        runs.push(m);
    }
    let agg = metrics::aggregate(&runs)?;
    println!(
        "AUROC {:.6} ± {:.6} AUPRC {:.6} ± {:.6} F1 {:.6} ± {:.6}",
        agg.auroc.mean, agg.auroc.std, agg.auprc.mean, agg.auprc.std, agg.f1.mean, agg.f1.std
    );
    Ok(())
}

/// A restored model with the drugs and training graph it was fitted on.
struct Loaded {
    drugs: Vec<DrugRecord>,
    ds: Dataset,
    split: DatasetSplit,
    model: MiracleModel,
    ctx: GraphContext,
    allow_unknown: bool,
}

fn load_run(files: &RunFiles) -> anyhow::Result<Loaded> {
    let pick = |given: &Option<PathBuf>, name: &str, flag: &str| -> anyhow::Result<PathBuf> {
        match (given, &files.run) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(run)) => Ok(run.join(name)),
            (None, None) => Err(usage(format!("--{flag} or --run is required"))),
        }
    };
    let checkpoint = pick(&files.checkpoint, CHECKPOINT, "checkpoint")?;
    let split_path = pick(&files.split, SPLIT, "split")?;
    let drugs_path = pick(&files.drugs, DRUGS, "drugs")?;
    require_file(&checkpoint, "checkpoint")?;
    require_file(&split_path, "split")?;
    require_file(&drugs_path, "drugs")?;

    let ck = Checkpoint::load(&checkpoint)?;
    let drugs: Vec<DrugRecord> = data::read_two_columns(&drugs_path)?
        .into_iter()
        .map(|(id, smiles)| DrugRecord { id, smiles })
        .collect();
    let ds = Dataset::from_records(drugs.clone(), &[])?;
    let split = data::read_split(&split_path, &ds)?;
    let model = ck.model(!files.last)?;
    let ctx = GraphContext::new(&ds.graphs, &split.train_positives())?;
    Ok(Loaded {
        drugs: ds.drugs.clone(),
        ds,
        split,
        model,
        ctx,
        allow_unknown: files.allow_unknown_atoms,
    })
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let run = load_run(&args.files)?;
    let tag = match args.which {
        Which::Val => SplitTag::Val,
        Which::Test => SplitTag::Test,
    };
    let part = run.split.part(tag);
    let pairs: Vec<_> = part.iter().map(|p| (p.i, p.j)).collect();
    let labels: Vec<u8> = part.iter().map(|p| p.label).collect();
    let scores = predict_pairs(&run.model, &run.ctx, &pairs, run.allow_unknown)?;
    print_metrics(&metrics::evaluate(&scores, &labels)?);
    if let Some(path) = &args.scores {
        let mut w = output(&Some(path.clone()))?;
        writeln!(w, "drug_a,drug_b,label,score")?;
        for (p, s) in part.iter().zip(&scores) {
            writeln!(w, "{},{},{},{s}", run.drugs[p.i].id, run.drugs[p.j].id, p.label)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> anyhow::Result<()> {
    require_file(&args.input, "input")?;
    let run = load_run(&args.files)?;
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || (n == 0 && line == "drug_a\tdrug_b") {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            bail!("{}:{}: expected two tab-separated drug ids", args.input.display(), n + 1);
        };
        let idx = |id: &str| {
            run.ds
                .index_of(id.trim())
                .with_context(|| format!("{}:{}: unknown drug id {id}", args.input.display(), n + 1))
        };
        let (i, j) = (idx(a)?, idx(b)?);
        if i == j {
            bail!("{}:{}: {a} is paired with itself", args.input.display(), n + 1);
        }
        rows.push((a.trim().to_string(), b.trim().to_string(), i, j));
    }
    let pairs: Vec<_> = rows.iter().map(|r| (r.2, r.3)).collect();
    let scores = predict_pairs(&run.model, &run.ctx, &pairs, run.allow_unknown)?;
    let mut w = output(&args.output)?;
    writeln!(w, "drug_a\tdrug_b\tp\tinteracts")?;
    for ((a, b, _, _), p) in rows.iter().zip(&scores) {
        writeln!(w, "{a}\t{b}\t{p}\t{}", u8::from(*p >= DECISION_THRESHOLD))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_embed(args: EmbedArgs) -> anyhow::Result<()> {
    let run = load_run(&args.files)?;
    let (g, d) = embeddings(&run.model, &run.ctx, run.allow_unknown)?;
    let table = match args.view {
        View::Inter => g,
        View::Intra => d,
    };
    let mut w = output(&args.output)?;
    for (k, drug) in run.drugs.iter().enumerate() {
        let values: Vec<String> = table.row(k).iter().map(f64::to_string).collect();
        writeln!(w, "{}\t{}", drug.id, values.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_parse_smiles(text: &str) -> anyhow::Result<()> {
    let g = parse_smiles(text).with_context(|| format!("cannot parse {text:?}"))?;
    let atoms: Vec<_> = g
        .atoms
        .iter()
        .enumerate()
        .map(|(k, a)| {
            json!({
                "index": k,
                "symbol": element_symbol(a.atomic_number),
                "atomic_number": a.atomic_number,
                "aromatic": a.aromatic,
                "formal_charge": a.formal_charge,
            })
        })
        .collect();
    let bonds: Vec<_> = g
        .bonds
        .iter()
        .map(|b| json!({ "i": b.i, "j": b.j, "type": format!("{:?}", b.bond_type).to_lowercase() }))
        .collect();
    let dump = json!({
        "smiles": text,
        "atom_count": g.atom_count(),
        "bond_count": g.bond_count(),
        "atoms": atoms,
        "bonds": bonds,
    });
    let mut w = output(&None)?;
    writeln!(w, "{}", serde_json::to_string_pretty(&dump)?)?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MIRACLE_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(*a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Embed(a) => cmd_embed(a),
        Command::ParseSmiles { smiles } => cmd_parse_smiles(&smiles),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
