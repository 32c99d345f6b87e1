//! Scratch calibration harness for the acceptance-test constants.

use std::time::Instant;

use graphpatch::eval::{evaluate, evaluate_full};
use graphpatch::gnn::{train_gnn, TrainConfig};
use graphpatch::patcher::{train_patcher, PatchTrainConfig};
use graphpatch::synth::{build_synth, SynthConfig};

fn env_or<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn gnn_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        hidden: env_or("GNN_HIDDEN", 32),
        epochs: env_or("GNN_EPOCHS", 150),
        dropout: env_or("GNN_DROPOUT", 0.5),
        weight_decay: env_or("GNN_WD", 5e-4),
        patience: env_or("GNN_PATIENCE", 20),
        seed,
        ..Default::default()
    }
}

fn bias_grid() {
    let grid_p = [(0.008, 0.0005), (0.012, 0.001)];
    let grid_sigma = [0.8, 1.0, 1.2];
    let gamma = 2.5;
    for &(p_in, p_out) in &grid_p {
        for &sigma in &grid_sigma {
            let mut overall = 0.0;
            let mut low = 0.0;
            let mut high = 0.0;
            let mut mean_deg = 0.0;
            let started = Instant::now();
            for seed in 0..5u64 {
                let cfg = SynthConfig {
                    n: 2000,
                    classes: 5,
                    p_in,
                    p_out,
                    gamma,
                    feature_dim: env_or("FDIM", 16),
                    sigma,
                    seed,
                };
                let g = build_synth(&cfg).unwrap();
                mean_deg += 2.0 * g.num_edges() as f64 / g.num_nodes() as f64 / 5.0;
                let (model, _) = train_gnn(&g, &gnn_cfg(seed)).unwrap();
                let r = evaluate(&model, &g, None, 0).unwrap();
                overall += r.overall.baseline / 5.0;
                low += r.low.baseline / 5.0;
                high += r.high.baseline / 5.0;
            }
            println!(
                "p_in={p_in} p_out={p_out} sigma={sigma} | deg={mean_deg:.1} overall={overall:.3} low={low:.3} high={high:.3} gap={:.1}pts | {:?}",
                (high - low) * 100.0,
                started.elapsed()
            );
        }
    }
}

fn patch_probe(p_in: f64, p_out: f64, sigma: f64, max_epochs: usize, patience: usize, hidden: usize) {
    let gamma: f64 = env_or("GAMMA", 2.5);
    let seed = env_or("SEED", 0u64);
    let cfg = SynthConfig {
        n: 2000,
        classes: 5,
        p_in,
        p_out,
        gamma,
        feature_dim: env_or("FDIM", 16),
        sigma,
        seed,
    };
    let g = build_synth(&cfg).unwrap();
    let (model, _) = train_gnn(&g, &gnn_cfg(seed)).unwrap();

    let patch_cfg = PatchTrainConfig {
        max_epochs,
        seed,
        patience,
        hidden,
        ..Default::default()
    };
    let started = Instant::now();
    let (patcher, history) = train_patcher(&model, &g, &patch_cfg).unwrap();
    let train_time = started.elapsed();

    let started = Instant::now();
    let eval = evaluate_full(&model, &g, Some(&patcher), 4, 1).unwrap();
    let eval_time = started.elapsed();
    if std::env::var("DUMP_VALID").is_ok() {
        for h in &history {
            println!(
                "epoch {:4}  train_patch {:.6}  recon {:.6}  valid {:.6}",
                h.epoch, h.patch_loss, h.recon_loss, h.valid_loss
            );
        }
    }
    let r = &eval.report;
    println!(
        "max_epochs={max_epochs} ran={} | low {:.3}->{:.3} ({:+.1}pts) high {:.3}->{:.3} ({:+.1}pts) overall {:.3}->{:.3} | train {:?} eval {:?} | first/last valid {:.4}/{:.4}",
        history.len(),
        r.low.baseline,
        r.low.patched,
        (r.low.patched - r.low.baseline) * 100.0,
        r.high.baseline,
        r.high.patched,
        (r.high.patched - r.high.baseline) * 100.0,
        r.overall.baseline,
        r.overall.patched,
        train_time,
        eval_time,
        history.first().map(|h| h.valid_loss).unwrap_or(f32::NAN),
        history.last().map(|h| h.valid_loss).unwrap_or(f32::NAN),
    );
}

#[allow(dead_code)]
fn diag(p_in: f64, p_out: f64, sigma: f64, max_epochs: usize) {
    use graphpatch::gnn::gcn_forward;
    use graphpatch::graph::ego_extract;
    use graphpatch::patcher::{generate_patch, iterative_patch};

    let seed = 0u64;
    let cfg = SynthConfig {
        n: 2000,
        classes: 5,
        p_in,
        p_out,
        gamma: 2.5,
        feature_dim: env_or("FDIM", 16),
        sigma,
        seed,
    };
    let g = build_synth(&cfg).unwrap();
    let (model, _) = train_gnn(&g, &gnn_cfg(seed)).unwrap();
    let patch_cfg = PatchTrainConfig {
        max_epochs,
        seed,
        ..Default::default()
    };
    let (patcher, _) = train_patcher(&model, &g, &patch_cfg).unwrap();

    // Pick 3 low-degree and 3 high-degree test anchors.
    let mut test: Vec<u32> = g.splits().test.clone();
    test.sort_by_key(|&v| (g.degree(v), v));
    let picks: Vec<u32> = test[..3].iter().chain(test[test.len() - 3..].iter()).copied().collect();
    for v in picks {
        let ego = ego_extract(&g, v, 2).unwrap();
        let deg = g.degree(v);
        let base = gcn_forward(&model, &ego);
        let base_row: Vec<f32> = base.row(0).to_vec();
        let raw = generate_patch(&patcher, &ego);
        let norm: f32 = raw.iter().map(|x| x * x).sum::<f32>().sqrt();
        let patched = iterative_patch(&patcher, &ego, 4);
        let post = gcn_forward(&model, &patched);
        let post_row: Vec<f32> = post.row(0).to_vec();
        let label = g.labels()[v as usize];
        println!(
            "anchor {v} deg {deg} true {label}\n  base  {:?}\n  post4 {:?}\n  first patch |x| {norm:.2}",
            base_row.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            post_row.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        );
    }
    // Feature norm context: class means are one-hot, noise sigma per dim.
    let mean_feat_norm: f32 = {
        let mut s = 0.0f32;
        for v in 0..g.num_nodes() {
            let row = g.features().row(v);
            s += row.iter().map(|x| x * x).sum::<f32>().sqrt();
        }
        s / g.num_nodes() as f32
    };
    println!("mean node feature norm {mean_feat_norm:.2}");
}

/// Aggregate patch-direction statistics of a trained patcher on intact test
/// egos, split by stratum: cosine to the true class mean, norms, and how
/// often the injected direction points at the right class.
fn diag2(p_in: f64, p_out: f64, sigma: f64, max_epochs: usize, hidden: usize) {
    use graphpatch::eval::argmax;
    use graphpatch::gnn::gcn_forward;
    use graphpatch::graph::ego_extract;
    use graphpatch::patcher::generate_patch;

    let gamma: f64 = env_or("GAMMA", 2.5);
    let seed = 0u64;
    let cfg = SynthConfig {
        n: 2000,
        classes: 5,
        p_in,
        p_out,
        gamma,
        feature_dim: env_or("FDIM", 16),
        sigma,
        seed,
    };
    let g = build_synth(&cfg).unwrap();
    let (model, _) = train_gnn(&g, &gnn_cfg(seed)).unwrap();
    let patience: usize = std::env::var("PATIENCE").ok().and_then(|v| v.parse().ok()).unwrap_or(2);
    let patch_cfg = PatchTrainConfig {
        max_epochs,
        hidden,
        seed,
        patience,
        ..Default::default()
    };
    let (patcher, hist) = train_patcher(&model, &g, &patch_cfg).unwrap();
    println!(
        "trained {} epochs, valid first {:.4} last {:.4}",
        hist.len(),
        hist.first().map(|h| h.valid_loss).unwrap_or(f32::NAN),
        hist.last().map(|h| h.valid_loss).unwrap_or(f32::NAN)
    );
    let ev = evaluate_full(&model, &g, Some(&patcher), 4, 1).unwrap().report;
    println!(
        "eval low {:.3}->{:.3} ({:+.1}) high {:.3}->{:.3} ({:+.1}) overall {:.3}->{:.3}",
        ev.low.baseline, ev.low.patched, (ev.low.patched - ev.low.baseline) * 100.0,
        ev.high.baseline, ev.high.patched, (ev.high.patched - ev.high.baseline) * 100.0,
        ev.overall.baseline, ev.overall.patched
    );

    let mut test: Vec<u32> = g.splits().test.clone();
    test.sort_by_key(|&v| (g.degree(v), v));
    let third = test.len().div_ceil(3);
    let (low, high) = (&test[..third], &test[test.len() - (test.len() - 2 * third)..]);
    // Patch statistics on eval inputs (intact egos) vs training-distribution
    // inputs (0.9-corrupted bases) for the same anchors.
    use graphpatch::corruption::corrupt;
    use graphpatch::rng::RngStream;
    for (name, pop) in [("low", low), ("high", high)] {
        for (input, tag) in [(false, "intact"), (true, "corrupted")] {
            let mut cos_sum = 0.0f64;
            let mut norm_sum = 0.0f64;
            let mut right_dir = 0usize;
            let mut base_right = 0usize;
            for (i, &v) in pop.iter().enumerate() {
                let ego = ego_extract(&g, v, 2).unwrap();
                let label = g.labels()[v as usize] as usize;
                let source = if input {
                    corrupt(&ego, 0.9, RngStream::new(9, 9).child(i as u64))
                } else {
                    ego.clone()
                };
                let patch = generate_patch(&patcher, &source);
                let norm: f32 = patch.iter().map(|x| x * x).sum::<f32>().sqrt();
                // class mean is one-hot at `label`; cosine = x[label]/|x|
                let cos = if norm > 0.0 { patch[label] / norm } else { 0.0 };
                cos_sum += cos as f64;
                norm_sum += norm as f64;
                // does the biggest patch coordinate point at the true class?
                let dir = argmax(&patch[..5]);
                right_dir += usize::from(dir == label && patch[dir] > 0.0);
                let base = argmax(gcn_forward(&model, &ego).row(0));
                base_right += usize::from(base == label);
            }
            let n = pop.len() as f64;
            println!(
                "{name:4} {tag:9} n={} mean_cos {:.3} mean_norm {:.2} dir_acc {:.3} base_acc {:.3}",
                pop.len(),
                cos_sum / n,
                norm_sum / n,
                right_dir as f64 / n,
                base_right as f64 / n,
            );
        }
    }
}

/// Compares the chain objective achieved by hand-built class-mean patches
/// against a trained patcher's, over train-split anchors. Tells whether the
/// objective rewards the patches that would actually help at eval time.
fn objcheck(p_in: f64, p_out: f64, sigma: f64, max_epochs: usize, hidden: usize) {
    use graphpatch::graph::{add_patch_node, ego_extract};
    use graphpatch::corruption::{build_schedule, corrupt, sample_targets};
    use graphpatch::patcher::{chain_loss, patch_step_loss, recon_loss};
    use graphpatch::rng::RngStream;

    let gamma: f64 = env_or("GAMMA", 2.5);
    let seed = 0u64;
    let cfg = SynthConfig {
        n: 2000,
        classes: 5,
        p_in,
        p_out,
        gamma,
        feature_dim: env_or("FDIM", 16),
        sigma,
        seed,
    };
    let g = build_synth(&cfg).unwrap();
    let (model, _) = train_gnn(&g, &gnn_cfg(seed)).unwrap();
    let patch_cfg = PatchTrainConfig {
        max_epochs,
        hidden,
        seed,
        ..Default::default()
    };
    let (patcher, hist) = train_patcher(&model, &g, &patch_cfg).unwrap();
    println!("trained {} epochs", hist.len());

    let schedule = build_schedule(patch_cfg.strength, patch_cfg.steps).unwrap();
    let strengths = schedule.strengths().to_vec();
    let d = g.feature_dim();
    let scale: f32 = env_or("ORACLE_SCALE", 1.0);

    let mut oracle_total = 0.0f64;
    let mut trained_total = 0.0f64;
    let anchors = g.splits().train.clone();
    for (i, &v) in anchors.iter().enumerate() {
        let ego = ego_extract(&g, v, 2).unwrap();
        let label = g.labels()[v as usize] as usize;
        let mean: Vec<f32> = (0..d).map(|j| if j == label { scale } else { 0.0 }).collect();
        let stream = RngStream::new(123, 77).child(i as u64);

        // oracle chain: same draws as chain_loss uses (child 0 = base, child m = targets)
        let mut state = corrupt(&ego, strengths[0], stream.child(0));
        let mut total = 0.0f64;
        for m in 1..=strengths.len() {
            state = add_patch_node(&state, &mean);
            if m < strengths.len() {
                let targets = sample_targets(&ego, strengths[m], patch_cfg.samples, stream.child(m as u64));
                total += patch_step_loss(&model, &state, &targets).0 as f64;
            } else {
                total += recon_loss(&model, &state, &ego).0 as f64;
            }
        }
        oracle_total += total;

        let rep = chain_loss(&model, &patcher, &ego, &schedule, patch_cfg.samples, stream);
        trained_total += rep.total;
    }
    let n = anchors.len() as f64;
    println!(
        "mean chain loss: oracle(classmean x{scale}) {:.4}  trained {:.4}",
        oracle_total / n,
        trained_total / n
    );
}

/// Patches every test anchor with n copies of a hand-built feature vector
/// (true class mean, or the anchor's own features) to probe whether ideal
/// patches can help at all in this setup, independent of patcher training.
fn oracle(p_in: f64, p_out: f64, sigma: f64, kind: &str, n_patch: usize, scale: f32) {
    use graphpatch::eval::argmax;
    use graphpatch::gnn::gcn_forward;
    use graphpatch::graph::{add_patch_node, ego_extract};

    let gamma: f64 = env_or("GAMMA", 2.5);
    let seed = 0u64;
    let cfg = SynthConfig {
        n: 2000,
        classes: 5,
        p_in,
        p_out,
        gamma,
        feature_dim: env_or("FDIM", 16),
        sigma,
        seed,
    };
    let g = build_synth(&cfg).unwrap();
    let (model, _) = train_gnn(&g, &gnn_cfg(seed)).unwrap();

    let mut test: Vec<u32> = g.splits().test.clone();
    test.sort_by_key(|&v| (g.degree(v), v));
    let third = test.len().div_ceil(3);
    let strata = [
        ("low", &test[..third]),
        ("high", &test[test.len() - (test.len() - 2 * third)..]),
        ("all", &test[..]),
    ];
    for (name, pop) in strata {
        let mut base_ok = 0usize;
        let mut patch_ok = 0usize;
        for &v in pop {
            let ego = ego_extract(&g, v, 2).unwrap();
            let label = g.labels()[v as usize] as usize;
            let base = argmax(gcn_forward(&model, &ego).row(0));
            let feat: Vec<f32> = match kind {
                "classmean" => (0..g.feature_dim()).map(|j| if j == label { scale } else { 0.0 }).collect(),
                "self" => ego.features().row(0).iter().map(|x| x * scale).collect(),
                _ => panic!("kind must be classmean or self"),
            };
            let mut patched = ego.clone();
            for _ in 0..n_patch {
                patched = add_patch_node(&patched, &feat);
            }
            let post = argmax(gcn_forward(&model, &patched).row(0));
            base_ok += usize::from(base == label);
            patch_ok += usize::from(post == label);
        }
        println!(
            "{name:5} n={:4}  base {:.3}  patched({kind} x{scale}, n_patch={n_patch}) {:.3}  delta {:+.1}pts",
            pop.len(),
            base_ok as f64 / pop.len() as f64,
            patch_ok as f64 / pop.len() as f64,
            (patch_ok as f64 - base_ok as f64) / pop.len() as f64 * 100.0,
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    match args.get(1).map(String::as_str) {
        Some("bias") => bias_grid(),
        Some("patch") => {
            let p_in: f64 = args[2].parse().unwrap();
            let p_out: f64 = args[3].parse().unwrap();
            let sigma: f64 = args[4].parse().unwrap();
            let max_epochs: usize = args[5].parse().unwrap();
            let patience: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(2);
            let hidden: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(128);
            patch_probe(p_in, p_out, sigma, max_epochs, patience, hidden);
        }
        Some("diag") => {
            let p_in: f64 = args[2].parse().unwrap();
            let p_out: f64 = args[3].parse().unwrap();
            let sigma: f64 = args[4].parse().unwrap();
            let max_epochs: usize = args[5].parse().unwrap();
            diag(p_in, p_out, sigma, max_epochs);
        }
        Some("objcheck") => {
            let p_in: f64 = args[2].parse().unwrap();
            let p_out: f64 = args[3].parse().unwrap();
            let sigma: f64 = args[4].parse().unwrap();
            let max_epochs: usize = args[5].parse().unwrap();
            let hidden: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(16);
            objcheck(p_in, p_out, sigma, max_epochs, hidden);
        }
        Some("diag2") => {
            let p_in: f64 = args[2].parse().unwrap();
            let p_out: f64 = args[3].parse().unwrap();
            let sigma: f64 = args[4].parse().unwrap();
            let max_epochs: usize = args[5].parse().unwrap();
            let hidden: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(16);
            diag2(p_in, p_out, sigma, max_epochs, hidden);
        }
        Some("oracle") => {
            let p_in: f64 = args[2].parse().unwrap();
            let p_out: f64 = args[3].parse().unwrap();
            let sigma: f64 = args[4].parse().unwrap();
            let kind = args[5].as_str();
            let n_patch: usize = args[6].parse().unwrap();
            let scale: f32 = args[7].parse().unwrap();
            oracle(p_in, p_out, sigma, kind, n_patch, scale);
        }
        _ => eprintln!("usage: calibrate bias | calibrate (patch|diag) P_IN P_OUT SIGMA MAX_EPOCHS | calibrate oracle P_IN P_OUT SIGMA KIND N SCALE"),
    }
}
