//! Every stage of the pipeline is seeded and single-source: the same seed
//! must produce the same graph, the same trained weights, and byte-identical
//! checkpoints, on any machine. This example re-runs each stage twice and
//! compares SHA-256 checksums, then round-trips the checkpoints through disk.
//!
//!     cargo run --release --example determinism

use graphpatch::gnn::{self, train_gnn, TrainConfig};
use graphpatch::patcher::{self, train_patcher, PatchTrainConfig};
use graphpatch::synth::{build_synth, SynthConfig};

fn main() {
    let synth = SynthConfig {
        n: 300,
        classes: 3,
        p_in: 0.02,
        p_out: 0.002,
        gamma: 2.5,
        feature_dim: 8,
        sigma: 0.6,
        seed: 11,
    };
    let g1 = build_synth(&synth).expect("synthesis");
    let g2 = build_synth(&synth).expect("synthesis");
    assert_eq!(g1.num_edges(), g2.num_edges());
    assert_eq!(g1.features().data(), g2.features().data());
    println!(
        "graph: {} nodes, {} edges — identical across two builds",
        g1.num_nodes(),
        g1.num_edges()
    );

    let tcfg = TrainConfig { hidden: 16, epochs: 30, seed: 11, ..TrainConfig::default() };
    let (gnn_a, _) = train_gnn(&g1, &tcfg).expect("training");
    let (gnn_b, _) = train_gnn(&g2, &tcfg).expect("training");
    assert_eq!(gnn_a.checksum(), gnn_b.checksum());
    println!("classifier: two runs, one checksum {}", &gnn_a.checksum()[..16]);

    let pcfg = PatchTrainConfig {
        hidden: 8,
        samples: 2,
        batch_size: 8,
        max_epochs: 3,
        seed: 11,
        ..PatchTrainConfig::default()
    };
    let frozen_before = gnn_a.checksum();
    let (patch_a, _) = train_patcher(&gnn_a, &g1, &pcfg).expect("patcher training");
    let (patch_b, _) = train_patcher(&gnn_b, &g2, &pcfg).expect("patcher training");
    assert_eq!(patch_a.checksum(), patch_b.checksum());
    assert_eq!(gnn_a.checksum(), frozen_before, "classifier must stay frozen");
    println!("patcher: two runs, one checksum {}", &patch_a.checksum()[..16]);
    println!("classifier weights untouched by patcher training ✓");

    // Checkpoints round-trip byte-for-byte.
    let dir = tempfile::tempdir().expect("tempdir");
    let g_path = dir.path().join("classifier.gpck");
    let p_path = dir.path().join("patcher.gpck");
    gnn::save_checkpoint(&gnn_a, &g_path).expect("save");
    patcher::save_checkpoint(&patch_a, &p_path).expect("save");
    let gnn_loaded = gnn::load_checkpoint(&g_path).expect("load");
    let patch_loaded = patcher::load_checkpoint(&p_path).expect("load");
    assert_eq!(gnn_loaded.checksum(), gnn_a.checksum());
    assert_eq!(patch_loaded.checksum(), patch_a.checksum());
    let g_path2 = dir.path().join("classifier2.gpck");
    let p_path2 = dir.path().join("patcher2.gpck");
    gnn::save_checkpoint(&gnn_loaded, &g_path2).expect("save");
    patcher::save_checkpoint(&patch_loaded, &p_path2).expect("save");
    assert_eq!(std::fs::read(&g_path).unwrap(), std::fs::read(&g_path2).unwrap());
    assert_eq!(std::fs::read(&p_path).unwrap(), std::fs::read(&p_path2).unwrap());
    println!("checkpoints: save → load → save is byte-identical ✓");

    // And seeds matter: a different seed gives different weights.
    let (gnn_c, _) =
        train_gnn(&g1, &TrainConfig { seed: 12, ..tcfg }).expect("training");
    assert_ne!(gnn_c.checksum(), gnn_a.checksum());
    println!("different seed → different weights ✓");
}
