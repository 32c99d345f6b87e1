//! Degree-stratified accuracy reporting. Every test node is scored twice,
//! once on its plain 2-hop ego-graph and once after patching, and the two
//! accuracy columns are aggregated overall and over the low/high thirds of
//! the test population's original-graph degrees. Also home to the
//! patch-count sweep and the target-sample variance study.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::corruption::sample_targets;
use crate::error::{Error, Result};
use crate::gnn::{gcn_forward, GCNModel, GCN_LAYERS};
use crate::graph::{degree_stratify, ego_extract, Graph};
use crate::patcher::{iterative_patch, patch_step_loss, PatcherModel};
use crate::rng::RngStream;

/// Stream id for the variance study's corruption draws (gnn uses 1..=2,
/// patcher training 3..=7).
const STREAM_EVAL_VARIANCE: u64 = 8;

/// Which degree stratum of the evaluated population a node fell into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stratum {
    Low,
    Mid,
    High,
}

impl std::fmt::Display for Stratum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stratum::Low => "low",
            Stratum::Mid => "mid",
            Stratum::High => "high",
        })
    }
}

/// One evaluated test node; the raw material behind every aggregate number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeRecord {
    pub node_id: u32,
    /// Degree in the original graph (what stratification ranked).
    pub degree: u32,
    pub stratum: Stratum,
    pub true_label: i32,
    pub baseline_pred: usize,
    pub patched_pred: usize,
}

/// Baseline and patched accuracy over one population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyPair {
    pub baseline: f64,
    pub patched: f64,
}

/// Accuracy summary over the test split and its degree strata.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedReport {
    pub overall: AccuracyPair,
    pub low: AccuracyPair,
    pub high: AccuracyPair,
    pub overall_population: usize,
    pub low_population: usize,
    pub high_population: usize,
    /// Run seed, recorded for provenance. Evaluation itself draws no
    /// randomness, so the caller stamps this.
    pub seed: u64,
    pub n_patch: usize,
}

/// A report plus the per-node dump it was aggregated from.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: StratifiedReport,
    pub records: Vec<NodeRecord>,
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    assert!(!row.is_empty(), "argmax of an empty row");
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn node_record(
    gnn: &GCNModel,
    g: &Graph,
    patcher: Option<&PatcherModel>,
    n_patch: usize,
    v: u32,
    stratum: Stratum,
) -> Result<NodeRecord> {
    let ego = ego_extract(g, v, GCN_LAYERS)?;
    let baseline_pred = argmax(gcn_forward(gnn, &ego).row(0));
    let patched_pred = match patcher {
        Some(p) => {
            let patched = iterative_patch(p, &ego, n_patch);
            argmax(gcn_forward(gnn, &patched).row(0))
        }
        None => baseline_pred,
    };
    Ok(NodeRecord {
        node_id: v,
        degree: g.degree(v),
        stratum,
        true_label: g.label(v),
        baseline_pred,
        patched_pred,
    })
}

fn aggregate(records: &[NodeRecord], seed: u64, n_patch: usize) -> StratifiedReport {
    let pair = |keep: &dyn Fn(&NodeRecord) -> bool| -> (AccuracyPair, usize) {
        let mut population = 0usize;
        let mut base_hits = 0usize;
        let mut patch_hits = 0usize;
        for r in records.iter().filter(|r| keep(r)) {
            population += 1;
            base_hits += (r.baseline_pred as i32 == r.true_label) as usize;
            patch_hits += (r.patched_pred as i32 == r.true_label) as usize;
        }
        let frac = |hits: usize| hits as f64 / population.max(1) as f64;
        (
            AccuracyPair {
                baseline: frac(base_hits),
                patched: frac(patch_hits),
            },
            population,
        )
    };
    let (overall, overall_population) = pair(&|_| true);
    let (low, low_population) = pair(&|r| r.stratum == Stratum::Low);
    let (high, high_population) = pair(&|r| r.stratum == Stratum::High);
    StratifiedReport {
        overall,
        low,
        high,
        overall_population,
        low_population,
        high_population,
        seed,
        n_patch,
    }
}

/// Scores every test node on its 2-hop ego-graph, before and after
/// `n_patch` rounds of patching, and returns the stratified report plus the
/// per-node dump. Strata come from original-graph degrees, so both columns
/// share one partition. `threads` splits the per-node work; results are
/// identical for every thread count.
pub fn evaluate_full(
    gnn: &GCNModel,
    g: &Graph,
    patcher: Option<&PatcherModel>,
    n_patch: usize,
    threads: usize,
) -> Result<Evaluation> {
    if threads == 0 {
        return Err(Error::InvalidArg("threads must be at least 1".into()));
    }
    let test = &g.splits().test;
    if test.is_empty() {
        return Err(Error::InvalidArg("test split is empty".into()));
    }
    if let Some(&v) = test.iter().find(|&&v| g.label(v) < 0) {
        return Err(Error::InvalidArg(format!("test node {v} is unlabeled")));
    }
    let strata = degree_stratify(g, test)?;
    let stratum_of = |v: u32| {
        if strata.low_set.binary_search(&v).is_ok() {
            Stratum::Low
        } else if strata.high_set.binary_search(&v).is_ok() {
            Stratum::High
        } else {
            Stratum::Mid
        }
    };
    let jobs: Vec<(u32, Stratum)> = test.iter().map(|&v| (v, stratum_of(v))).collect();

    let records: Vec<NodeRecord> = if threads == 1 {
        jobs.iter()
            .map(|&(v, s)| node_record(gnn, g, patcher, n_patch, v, s))
            .collect::<Result<_>>()?
    } else {
        // Contiguous chunks, joined in chunk order: the record list is the
        // same as the single-threaded one.
        let chunk = jobs.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|&(v, s)| node_record(gnn, g, patcher, n_patch, v, s))
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut all = Vec::with_capacity(jobs.len());
            for h in handles {
                all.extend(h.join().expect("evaluation worker panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };

    let report = aggregate(&records, 0, n_patch);
    Ok(Evaluation { report, records })
}

/// Single-threaded [`evaluate_full`], summary only.
pub fn evaluate(
    gnn: &GCNModel,
    g: &Graph,
    patcher: Option<&PatcherModel>,
    n_patch: usize,
) -> Result<StratifiedReport> {
    Ok(evaluate_full(gnn, g, patcher, n_patch, 1)?.report)
}

/// Patched accuracies at one patch count of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub n_patch: usize,
    pub overall: f64,
    pub low: f64,
    pub high: f64,
}

/// Evaluates once per entry of `n_values`, in order, duplicates included.
pub fn patch_count_sweep(
    gnn: &GCNModel,
    g: &Graph,
    patcher: Option<&PatcherModel>,
    n_values: &[usize],
    threads: usize,
) -> Result<Vec<SweepPoint>> {
    n_values
        .iter()
        .map(|&n| {
            let report = evaluate_full(gnn, g, patcher, n, threads)?.report;
            Ok(SweepPoint {
                n_patch: n,
                overall: report.overall.patched,
                low: report.low.patched,
                high: report.high.patched,
            })
        })
        .collect()
}

/// Spread of the patch-step loss at one target-sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePoint {
    /// Number of target graphs averaged per loss evaluation.
    pub samples: usize,
    /// Sample standard deviation of the loss over the draws.
    pub std_loss: f64,
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (ss / (n - 1.0)).sqrt()
}

/// Measures how the patch-step loss spreads as the target-sample count
/// grows: the prediction side is the anchor's fixed ego-graph, and each of
/// the `draws` evaluations re-samples its targets at strength `t`. More
/// averaged targets means a steadier loss, which is the premise behind
/// averaging them during training.
pub fn variance_study(
    gnn: &GCNModel,
    g: &Graph,
    anchor: u32,
    t: f64,
    l_values: &[usize],
    draws: usize,
    seed: u64,
) -> Result<Vec<VariancePoint>> {
    if draws < 30 {
        return Err(Error::InvalidArg(format!(
            "variance study needs at least 30 draws, got {draws}"
        )));
    }
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::InvalidArg(format!("strength {t} outside [0, 1]")));
    }
    if l_values.iter().any(|&l| l == 0) {
        return Err(Error::InvalidArg("sample counts must be positive".into()));
    }
    let ego = ego_extract(g, anchor, GCN_LAYERS)?;
    let root = RngStream::new(seed, STREAM_EVAL_VARIANCE);
    let mut points = Vec::with_capacity(l_values.len());
    for (li, &l) in l_values.iter().enumerate() {
        let losses: Vec<f64> = (0..draws)
            .map(|d| {
                let stream = root.child((li * draws + d) as u64);
                let targets = sample_targets(&ego, t, l, stream);
                patch_step_loss(gnn, &ego, &targets).0 as f64
            })
            .collect();
        points.push(VariancePoint {
            samples: l,
            std_loss: sample_std(&losses),
        });
    }
    Ok(points)
}

// ---- report writers ----------------------------------------------------------

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Summary CSV: one row per stratum, accuracies as 6-decimal fractions.
pub fn write_report_csv(report: &StratifiedReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let rows = [
        ("overall", report.overall_population, &report.overall),
        ("low", report.low_population, &report.low),
        ("high", report.high_population, &report.high),
    ];
    (|| {
        writeln!(w, "stratum,population,baseline_acc,patched_acc,delta")?;
        for (name, pop, pair) in rows {
            writeln!(
                w,
                "{name},{pop},{:.6},{:.6},{:.6}",
                pair.baseline,
                pair.patched,
                pair.patched - pair.baseline
            )?;
        }
        Ok(())
    })()
    .map_err(|e: std::io::Error| Error::io(path, e))?;
    finish(w, path)
}

/// Per-node prediction dump backing the summary numbers.
pub fn write_node_dump_tsv(records: &[NodeRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    (|| {
        writeln!(w, "node_id\tdegree\tstratum\ttrue\tbaseline_pred\tpatched_pred")?;
        for r in records {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.node_id, r.degree, r.stratum, r.true_label, r.baseline_pred, r.patched_pred
            )?;
        }
        Ok(())
    })()
    .map_err(|e: std::io::Error| Error::io(path, e))?;
    finish(w, path)
}

/// Patch-count sweep CSV, one row per requested count.
pub fn write_sweep_csv(points: &[SweepPoint], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    (|| {
        writeln!(w, "n_patch,overall_acc,low_acc,high_acc")?;
        for p in points {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6}",
                p.n_patch, p.overall, p.low, p.high
            )?;
        }
        Ok(())
    })()
    .map_err(|e: std::io::Error| Error::io(path, e))?;
    finish(w, path)
}

/// Variance-study CSV: loss std per target-sample count.
pub fn write_variance_csv(points: &[VariancePoint], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    (|| {
        writeln!(w, "samples,std_loss")?;
        for p in points {
            writeln!(w, "{},{:.6e}", p.samples, p.std_loss)?;
        }
        Ok(())
    })()
    .map_err(|e: std::io::Error| Error::io(path, e))?;
    finish(w, path)
}
