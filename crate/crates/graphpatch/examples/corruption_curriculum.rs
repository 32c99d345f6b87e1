//! The corruption side of patcher training: a base strength t expands into a
//! strictly decreasing schedule (one entry per patching step), and each
//! strength removes that fraction of the anchor's first-order neighbors.
//! Also shows the target-sampling side: several independent corruptions of
//! the same ego at the next-lower strength, whose predictions the patcher
//! averages over to steady its training signal.
//!
//!     cargo run --release --example corruption_curriculum

use graphpatch::corruption::{build_schedule, corrupt, sample_targets};
use graphpatch::graph::ego_extract;
use graphpatch::rng::RngStream;
use graphpatch::synth::{build_synth, SynthConfig};

fn main() {
    for t in [0.3, 0.25, 0.5] {
        let schedule = build_schedule(t, None).expect("valid strength");
        println!("base strength {t}: schedule {:?}", schedule.strengths());
    }

    let g = build_synth(&SynthConfig {
        n: 500,
        classes: 5,
        p_in: 0.03,
        p_out: 0.003,
        gamma: 2.5,
        feature_dim: 8,
        sigma: 0.8,
        seed: 3,
    })
    .expect("graph generation");

    // Pick the highest-degree node so the removals are easy to see.
    let anchor = (0..g.num_nodes() as u32).max_by_key(|&v| g.degree(v)).unwrap();
    let ego = ego_extract(&g, anchor, 2).expect("ego extraction");
    println!(
        "\nanchor {anchor}: degree {}, 2-hop ego of {} nodes",
        g.degree(anchor),
        ego.num_nodes()
    );

    let schedule = build_schedule(0.3, None).unwrap();
    for (i, &t) in schedule.strengths().iter().enumerate() {
        let corrupted = corrupt(&ego, t, RngStream::new(3, 10).child(i as u64));
        println!(
            "  strength {t}: anchor keeps {} of {} neighbors ({} nodes left in the ego)",
            corrupted.anchor_neighbors().len(),
            ego.anchor_neighbors().len(),
            corrupted.num_nodes()
        );
    }

    // Target samples are independent draws at one strength; each keeps a
    // different random subset.
    let targets = sample_targets(&ego, 0.6, 5, RngStream::new(3, 11));
    println!("\nfive independent target draws at strength 0.6:");
    for (i, tgt) in targets.iter().enumerate() {
        let kept: Vec<u32> = tgt.anchor_neighbors();
        println!("  draw {i}: keeps {} neighbors {kept:?}", kept.len());
    }

    // Determinism: the same stream reproduces the same corruption.
    let a = corrupt(&ego, 0.6, RngStream::new(3, 12));
    let b = corrupt(&ego, 0.6, RngStream::new(3, 12));
    println!(
        "\nsame stream, same draw: {}",
        if a.edges() == b.edges() { "yes" } else { "no" }
    );
}
