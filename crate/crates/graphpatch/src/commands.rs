//! Command implementations behind the CLI binary. Each command resolves a
//! [`RunConfig`] (defaults, config file, flags, in that order), does its
//! work, writes artifacts under `--out`, and drops a `run-manifest.json`
//! recording the resolved configuration, seed, input checksums, and wall
//! time, so any run can be reproduced from its manifest alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_full, patch_count_sweep, variance_study, write_node_dump_tsv, write_report_csv,
    write_sweep_csv, write_variance_csv, StratifiedReport,
};
use crate::gnn::train_gnn;
use crate::graph::{load_graph, Graph};
use crate::patcher::train_patcher;
use crate::synth::gen_synth;

pub const MANIFEST_NAME: &str = "run-manifest.json";

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    /// Config file of flat `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Dataset directory (edges.tsv, features.f32, labels.tsv, splits.json).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Output directory for artifacts and the run manifest.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run seed; one seed drives every module.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for per-node evaluation (results are identical for
    /// any thread count).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl SharedArgs {
    /// Flag assignments in `set()` form, applied after the config file.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        if let Some(p) = &self.data {
            o.push(("data", p.display().to_string()));
        }
        if let Some(p) = &self.out {
            o.push(("out", p.display().to_string()));
        }
        if let Some(s) = self.seed {
            o.push(("seed", s.to_string()));
        }
        if let Some(t) = self.threads {
            o.push(("threads", t.to_string()));
        }
        o
    }
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
}

#[derive(Debug, Args)]
pub struct TrainGnnArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Hidden width of the classifier.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Training epoch budget.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f32>,
    /// Hidden-layer dropout probability.
    #[arg(long)]
    pub dropout: Option<f32>,
}

#[derive(Debug, Args)]
pub struct TrainPatcherArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Trained classifier checkpoint to patch against (stays frozen).
    #[arg(long, value_name = "PATH")]
    pub gnn_checkpoint: PathBuf,
    /// Base corruption strength t; the schedule is ⌊1/t⌋ decreasing steps.
    #[arg(long)]
    pub strength: Option<f64>,
    /// Keep only this many of the heaviest schedule entries.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Target graphs averaged per step loss.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Anchors per batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Batches per optimizer step.
    #[arg(long)]
    pub accum: Option<usize>,
    /// Anchor pool: train, train+valid, or all.
    #[arg(long)]
    pub anchors: Option<String>,
    /// Detach each step's input graph instead of backpropagating through
    /// the whole chain.
    #[arg(long, value_name = "BOOL")]
    pub detach_steps: Option<bool>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Trained classifier checkpoint.
    #[arg(long, value_name = "PATH")]
    pub gnn_checkpoint: PathBuf,
    /// Trained patcher checkpoint; without it only the baseline is scored.
    #[arg(long, value_name = "PATH")]
    pub patcher_checkpoint: Option<PathBuf>,
    /// Patch nodes added per test node.
    #[arg(long, default_value_t = 4)]
    pub n_patch: usize,
    /// Comma-separated patch counts to sweep, e.g. "0,1,2,3,4,5,6".
    #[arg(long, value_name = "LIST")]
    pub sweep: Option<String>,
}

#[derive(Debug, Args)]
pub struct VarianceStudyArgs {
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Trained classifier checkpoint.
    #[arg(long, value_name = "PATH")]
    pub gnn_checkpoint: PathBuf,
    /// Anchor node id to study.
    #[arg(long)]
    pub anchor: u32,
    /// Corruption strength for the target draws.
    #[arg(long, default_value_t = 0.3)]
    pub strength: f64,
    /// Comma-separated target-sample counts.
    #[arg(long = "L", value_name = "LIST", default_value = "1,5,10")]
    pub l_values: String,
    /// Loss evaluations per sample count (at least 30).
    #[arg(long, default_value_t = 60)]
    pub draws: usize,
}

// ---- manifest ------------------------------------------------------------------

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Accumulates what a run consumed and produced, then writes
/// `run-manifest.json`.
struct RunManifest {
    command: &'static str,
    started: Instant,
    config: Map<String, Value>,
    seed: u64,
    args: Map<String, Value>,
    inputs: BTreeMap<String, String>,
    extra: Map<String, Value>,
}

impl RunManifest {
    fn new(command: &'static str, cfg: &RunConfig) -> Self {
        RunManifest {
            command,
            started: Instant::now(),
            config: cfg.to_map(),
            seed: cfg.seed,
            args: Map::new(),
            inputs: BTreeMap::new(),
            extra: Map::new(),
        }
    }

    fn arg(&mut self, key: &str, value: Value) {
        self.args.insert(key.to_string(), value);
    }

    fn input_file(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.to_string(), sha256_file(path)?);
        Ok(())
    }

    fn input_dataset(&mut self, dir: &Path) -> Result<()> {
        for name in ["edges.tsv", "features.f32", "labels.tsv", "splits.json"] {
            self.input_file(&format!("data/{name}"), &dir.join(name))?;
        }
        Ok(())
    }

    fn extra(&mut self, key: &str, value: Value) {
        self.extra.insert(key.to_string(), value);
    }

    fn write(self, out_dir: &Path) -> Result<()> {
        let mut doc = Map::new();
        doc.insert("command".into(), json!(self.command));
        doc.insert("seed".into(), json!(self.seed));
        doc.insert("config".into(), Value::Object(self.config));
        doc.insert("args".into(), Value::Object(self.args));
        doc.insert("inputs".into(), json!(self.inputs));
        for (k, v) in self.extra {
            doc.insert(k, v);
        }
        doc.insert(
            "wall_time_seconds".into(),
            json!(self.started.elapsed().as_secs_f64()),
        );
        let path = out_dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("manifest serialize");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

// ---- shared plumbing -------------------------------------------------------------

fn exit_of(result: Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn require_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory: pass --out or set 'out'".into()))?;
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

fn require_data(cfg: &RunConfig) -> Result<(PathBuf, Graph)> {
    let dir = cfg
        .data
        .clone()
        .ok_or_else(|| Error::Config("no dataset directory: pass --data or set 'data'".into()))?;
    let g = load_graph(&dir)?;
    Ok((dir, g))
}

fn parse_count_list(what: &str, raw: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = raw
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{what}: bad count {:?}", tok.trim())))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        return Err(Error::Config(format!("{what}: empty list")));
    }
    Ok(values)
}

fn write_csv(path: &Path, render: impl FnOnce(&mut String)) -> Result<()> {
    let mut text = String::new();
    render(&mut text);
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn print_report(report: &StratifiedReport) {
    let line = |name: &str, pop: usize, base: f64, patched: f64| {
        println!(
            "{name:8} n={pop:<5} baseline {base:.4}  patched {patched:.4}  delta {:+.4}",
            patched - base
        );
    };
    line(
        "overall",
        report.overall_population,
        report.overall.baseline,
        report.overall.patched,
    );
    line(
        "low",
        report.low_population,
        report.low.baseline,
        report.low.patched,
    );
    line(
        "high",
        report.high_population,
        report.high.baseline,
        report.high.patched,
    );
}

// ---- commands -----------------------------------------------------------------

pub fn cmd_gen_synth(args: &GenSynthArgs) -> i32 {
    exit_of(run_gen_synth(args))
}

fn run_gen_synth(args: &GenSynthArgs) -> Result<()> {
    let cfg = RunConfig::load(args.shared.config.as_deref(), &args.shared.overrides())?;
    let out = require_out(&cfg)?;
    let manifest = RunManifest::new("gen-synth", &cfg);
    let synth_cfg = cfg.synth_config();
    let g = gen_synth(&synth_cfg, &out)?;
    println!(
        "generated {} nodes, {} edges, {} classes -> {}",
        g.num_nodes(),
        g.num_edges(),
        synth_cfg.classes,
        out.display()
    );
    manifest.write(&out)
}

pub fn cmd_train_gnn(args: &TrainGnnArgs) -> i32 {
    exit_of(run_train_gnn(args))
}

fn run_train_gnn(args: &TrainGnnArgs) -> Result<()> {
    let mut overrides = args.shared.overrides();
    if let Some(v) = args.hidden {
        overrides.push(("gnn.hidden", v.to_string()));
    }
    if let Some(v) = args.epochs {
        overrides.push(("gnn.epochs", v.to_string()));
    }
    if let Some(v) = args.lr {
        overrides.push(("gnn.lr", v.to_string()));
    }
    if let Some(v) = args.dropout {
        overrides.push(("gnn.dropout", v.to_string()));
    }
    let cfg = RunConfig::load(args.shared.config.as_deref(), &overrides)?;
    let (data_dir, g) = require_data(&cfg)?;
    let out = require_out(&cfg)?;
    let mut manifest = RunManifest::new("train-gnn", &cfg);
    manifest.input_dataset(&data_dir)?;

    let (model, history) = train_gnn(&g, &cfg.gnn_config())?;

    let ckpt = out.join("gnn.gpck");
    crate::gnn::save_checkpoint(&model, &ckpt)?;
    write_csv(&out.join("train-log.csv"), |text| {
        text.push_str("epoch,train_loss,valid_loss\n");
        for e in &history {
            text.push_str(&format!(
                "{},{:.6},{:.6}\n",
                e.epoch, e.train_loss, e.valid_loss
            ));
        }
    })?;

    let last = history.last().expect("at least one epoch");
    println!(
        "trained classifier for {} epochs (final valid loss {:.4}) -> {}",
        history.len(),
        last.valid_loss,
        ckpt.display()
    );
    manifest.write(&out)
}

pub fn cmd_train_patcher(args: &TrainPatcherArgs) -> i32 {
    exit_of(run_train_patcher(args))
}

fn run_train_patcher(args: &TrainPatcherArgs) -> Result<()> {
    let mut overrides = args.shared.overrides();
    if let Some(v) = args.strength {
        overrides.push(("patcher.strength", v.to_string()));
    }
    if let Some(v) = args.steps {
        overrides.push(("patcher.steps", v.to_string()));
    }
    if let Some(v) = args.samples {
        overrides.push(("patcher.samples", v.to_string()));
    }
    if let Some(v) = args.batch {
        overrides.push(("patcher.batch", v.to_string()));
    }
    if let Some(v) = args.accum {
        overrides.push(("patcher.accum", v.to_string()));
    }
    if let Some(v) = &args.anchors {
        overrides.push(("patcher.anchors", v.clone()));
    }
    if let Some(v) = args.detach_steps {
        overrides.push(("patcher.detach", v.to_string()));
    }
    let cfg = RunConfig::load(args.shared.config.as_deref(), &overrides)?;
    let (data_dir, g) = require_data(&cfg)?;
    let out = require_out(&cfg)?;
    let mut manifest = RunManifest::new("train-patcher", &cfg);
    manifest.input_dataset(&data_dir)?;
    manifest.input_file("gnn-checkpoint", &args.gnn_checkpoint)?;
    manifest.arg(
        "gnn_checkpoint",
        json!(args.gnn_checkpoint.display().to_string()),
    );

    let gnn = crate::gnn::load_checkpoint(&args.gnn_checkpoint)?;
    let patch_cfg = cfg.patcher_config();
    let schedule =
        crate::corruption::build_schedule(patch_cfg.strength, patch_cfg.steps)?;
    manifest.extra("schedule", json!(schedule.strengths()));

    let (patcher, history) = train_patcher(&gnn, &g, &patch_cfg)?;

    let ckpt = out.join("patcher.gpck");
    crate::patcher::save_checkpoint(&patcher, &ckpt)?;
    write_csv(&out.join("train-log.csv"), |text| {
        text.push_str("epoch,patch_loss,recon_loss,valid_loss\n");
        for e in &history {
            text.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                e.epoch, e.patch_loss, e.recon_loss, e.valid_loss
            ));
        }
    })?;

    let last = history.last().expect("at least one epoch");
    println!(
        "trained patcher over schedule {:?} for {} epochs (final valid loss {:.4}) -> {}",
        schedule.strengths(),
        history.len(),
        last.valid_loss,
        ckpt.display()
    );
    manifest.write(&out)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> i32 {
    exit_of(run_evaluate(args))
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::load(args.shared.config.as_deref(), &args.shared.overrides())?;
    let (data_dir, g) = require_data(&cfg)?;
    let out = require_out(&cfg)?;
    let mut manifest = RunManifest::new("evaluate", &cfg);
    manifest.input_dataset(&data_dir)?;
    manifest.input_file("gnn-checkpoint", &args.gnn_checkpoint)?;
    manifest.arg(
        "gnn_checkpoint",
        json!(args.gnn_checkpoint.display().to_string()),
    );
    manifest.arg("n_patch", json!(args.n_patch));

    let gnn = crate::gnn::load_checkpoint(&args.gnn_checkpoint)?;
    let patcher = match &args.patcher_checkpoint {
        Some(path) => {
            manifest.input_file("patcher-checkpoint", path)?;
            manifest.arg("patcher_checkpoint", json!(path.display().to_string()));
            Some(crate::patcher::load_checkpoint(path)?)
        }
        None => None,
    };

    let mut eval = evaluate_full(&gnn, &g, patcher.as_ref(), args.n_patch, cfg.threads)?;
    eval.report.seed = cfg.seed;
    write_report_csv(&eval.report, &out.join("report.csv"))?;
    write_node_dump_tsv(&eval.records, &out.join("nodes.tsv"))?;
    print_report(&eval.report);

    if let Some(raw) = &args.sweep {
        let n_values = parse_count_list("--sweep", raw)?;
        manifest.arg("sweep", json!(n_values));
        let points = patch_count_sweep(&gnn, &g, patcher.as_ref(), &n_values, cfg.threads)?;
        write_sweep_csv(&points, &out.join("sweep.csv"))?;
        for p in &points {
            println!(
                "sweep n={:<2} overall {:.4}  low {:.4}  high {:.4}",
                p.n_patch, p.overall, p.low, p.high
            );
        }
    }
    manifest.write(&out)
}

pub fn cmd_variance_study(args: &VarianceStudyArgs) -> i32 {
    exit_of(run_variance_study(args))
}

fn run_variance_study(args: &VarianceStudyArgs) -> Result<()> {
    let cfg = RunConfig::load(args.shared.config.as_deref(), &args.shared.overrides())?;
    let (data_dir, g) = require_data(&cfg)?;
    let out = require_out(&cfg)?;
    let mut manifest = RunManifest::new("variance-study", &cfg);
    manifest.input_dataset(&data_dir)?;
    manifest.input_file("gnn-checkpoint", &args.gnn_checkpoint)?;
    manifest.arg(
        "gnn_checkpoint",
        json!(args.gnn_checkpoint.display().to_string()),
    );
    manifest.arg("anchor", json!(args.anchor));
    manifest.arg("strength", json!(args.strength));
    manifest.arg("draws", json!(args.draws));

    let l_values = parse_count_list("--L", &args.l_values)?;
    manifest.arg("L", json!(l_values));

    let gnn = crate::gnn::load_checkpoint(&args.gnn_checkpoint)?;
    let points = variance_study(
        &gnn,
        &g,
        args.anchor,
        args.strength,
        &l_values,
        args.draws,
        cfg.seed,
    )?;
    write_variance_csv(&points, &out.join("variance.csv"))?;
    for p in &points {
        println!(
            "anchor {} strength {}: L={:<3} loss std {:.6e}",
            args.anchor, args.strength, p.samples, p.std_loss
        );
    }
    manifest.write(&out)
}
