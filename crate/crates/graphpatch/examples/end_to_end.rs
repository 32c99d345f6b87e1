//! The whole pipeline in one sitting: generate a degree-skewed graph, train
//! the classifier, train the patch generator against it, then score test
//! nodes before and after patching, stratified by degree, plus an
//! accuracy-vs-patch-count sweep.
//!
//!     cargo run --release --example end_to_end

use graphpatch::eval::{evaluate_full, patch_count_sweep};
use graphpatch::gnn::{train_gnn, TrainConfig};
use graphpatch::patcher::{train_patcher, PatchTrainConfig};
use graphpatch::synth::{build_synth, SynthConfig};

fn main() {
    let seed = 0;

    // A small graph with a heavy-tailed degree profile: most nodes have a
    // couple of neighbors, a few are hubs.
    let g = build_synth(&SynthConfig {
        n: 800,
        classes: 5,
        p_in: 0.02,
        p_out: 0.002,
        gamma: 2.5,
        feature_dim: 8,
        sigma: 0.7,
        seed,
    })
    .expect("graph generation");
    println!(
        "graph: {} nodes, {} edges, {} classes",
        g.num_nodes(),
        g.num_edges(),
        g.num_classes()
    );

    let (gnn, history) = train_gnn(
        &g,
        &TrainConfig {
            hidden: 32,
            epochs: 150,
            seed,
            ..TrainConfig::default()
        },
    )
    .expect("classifier training");
    println!(
        "classifier: {} epochs, final valid loss {:.4}",
        history.len(),
        history.last().unwrap().valid_loss
    );

    // The classifier stays frozen from here on; only the patcher learns.
    // Patch generation is iterative: corrupt an anchor's neighborhood hard,
    // then learn to put back virtual neighbors that restore the frozen
    // classifier's output step by step.
    let (patcher, history) = train_patcher(
        &gnn,
        &g,
        &PatchTrainConfig {
            max_epochs: 150,
            hidden: 16,
            seed,
            ..PatchTrainConfig::default()
        },
    )
    .expect("patcher training");
    println!(
        "patcher: {} epochs, final valid loss {:.4}",
        history.len(),
        history.last().unwrap().valid_loss
    );

    let eval = evaluate_full(&gnn, &g, Some(&patcher), 4, 1).expect("evaluation");
    let r = &eval.report;
    println!("\ntest accuracy with 4 patches per node:");
    for (name, pop, pair) in [
        ("overall", r.overall_population, &r.overall),
        ("low-deg", r.low_population, &r.low),
        ("high-deg", r.high_population, &r.high),
    ] {
        println!(
            "  {name:8} n={pop:<4} baseline {:.4}  patched {:.4}  delta {:+.4}",
            pair.baseline, pair.patched, pair.patched - pair.baseline
        );
    }

    println!("\noverall accuracy by patch count:");
    let points = patch_count_sweep(&gnn, &g, Some(&patcher), &[0, 1, 2, 3, 4, 5, 6], 1)
        .expect("sweep");
    for p in &points {
        println!(
            "  n={}  overall {:.4}  low {:.4}  high {:.4}",
            p.n_patch, p.overall, p.low, p.high
        );
    }
}
