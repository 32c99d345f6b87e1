//! Anchor-neighborhood corruption and the decreasing-strength schedule that
//! drives iterative patching.
//!
//! Corruption removes a fixed fraction of the anchor's first-order neighbors
//! and then cascades: any node the removal left unreachable from the anchor
//! within the ego-graph's hop budget is dropped too. Stored global degrees
//! are untouched, so a corrupted ego-graph still normalizes exactly like its
//! source graph.

use std::collections::VecDeque;

use crate::graph::EgoGraph;
use crate::rng::{choose_k, RngStream};
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Decreasing sequence of corruption strengths, heaviest first. Each entry
/// lies in (0, 1) and the sequence is strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSchedule {
    strengths: Vec<f64>,
}

impl CorruptionSchedule {
    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    /// Number of patching steps the schedule drives.
    pub fn len(&self) -> usize {
        self.strengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strengths.is_empty()
    }
}

/// Strengths are exact to nine decimals so a schedule built from a round
/// base strength prints round (0.3 yields [0.9, 0.6, 0.3], not 0.899…99).
fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Arithmetic schedule `{M·t, (M−1)·t, …, t}` with `M = ⌊1/t⌋`, heaviest
/// first. A computed strength at or above 1 is capped to 0.99 (strength 1
/// always reduces the ego-graph to the bare anchor; the cap keeps a sliver
/// of neighborhood in play) and duplicates created by the cap are collapsed.
/// `steps` keeps only the heaviest `steps` entries when given.
pub fn build_schedule(base_strength: f64, steps: Option<usize>) -> Result<CorruptionSchedule> {
    if !base_strength.is_finite() || base_strength <= 0.0 || base_strength >= 1.0 {
        return Err(Error::InvalidArg(format!(
            "corruption strength must lie in (0, 1), got {base_strength}"
        )));
    }
    if steps == Some(0) {
        return Err(Error::InvalidArg("steps override must be at least 1".into()));
    }
    let m = (1.0 / base_strength).floor() as usize;
    let mut strengths: Vec<f64> = Vec::with_capacity(m);
    for k in (1..=m).rev() {
        let mut s = round9(base_strength * k as f64);
        if s >= 1.0 {
            s = 0.99;
        }
        if strengths.last() == Some(&s) {
            continue;
        }
        strengths.push(s);
    }
    if let Some(k) = steps {
        strengths.truncate(k);
    }
    Ok(CorruptionSchedule { strengths })
}

/// Removes exactly `round(t · local anchor degree)` uniformly-chosen
/// first-order neighbors of the anchor, then every node no longer reachable
/// from the anchor within the ego-graph's hop budget. The anchor survives
/// unconditionally and survivors keep their stored global degrees.
pub fn corrupt(ego: &EgoGraph, t: f64, stream: RngStream) -> EgoGraph {
    assert!(
        (0.0..=1.0).contains(&t),
        "corruption strength {t} outside [0, 1]"
    );
    let nbrs = ego.anchor_neighbors();
    let drop_count = (t * nbrs.len() as f64).round() as usize;
    if drop_count == 0 {
        return ego.clone();
    }
    let mut rng = stream.rng();
    let mut dropped = vec![false; ego.num_nodes()];
    for i in choose_k(&mut rng, nbrs.len(), drop_count) {
        dropped[nbrs[i] as usize] = true;
    }

    let n = ego.num_nodes();
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(u, v) in ego.edges() {
        if dropped[u as usize] || dropped[v as usize] {
            continue;
        }
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }

    // Depth-limited BFS: "unreachable" means unreachable within hops, so a
    // node that stays connected but only through a longer detour is dropped.
    let mut depth = vec![usize::MAX; n];
    depth[0] = 0;
    let mut queue = VecDeque::from([0u32]);
    while let Some(u) = queue.pop_front() {
        if depth[u as usize] == ego.hops() {
            continue;
        }
        for &v in &adj[u as usize] {
            if depth[v as usize] == usize::MAX {
                depth[v as usize] = depth[u as usize] + 1;
                queue.push_back(v);
            }
        }
    }

    let keep: Vec<u32> = (0..n as u32)
        .filter(|&v| depth[v as usize] != usize::MAX)
        .collect();
    let mut local_of = vec![u32::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        local_of[old as usize] = new as u32;
    }
    let local_to_global: Vec<u32> = keep
        .iter()
        .map(|&v| ego.local_to_global()[v as usize])
        .collect();
    let global_degree: Vec<u32> = keep
        .iter()
        .map(|&v| ego.global_degree()[v as usize])
        .collect();
    let mut features = Matrix::zeros(keep.len(), ego.feature_dim());
    for (new, &old) in keep.iter().enumerate() {
        features
            .row_mut(new)
            .copy_from_slice(ego.features().row(old as usize));
    }
    let edges: Vec<(u32, u32)> = ego
        .edges()
        .iter()
        .filter(|&&(u, v)| {
            local_of[u as usize] != u32::MAX && local_of[v as usize] != u32::MAX
        })
        .map(|&(u, v)| (local_of[u as usize], local_of[v as usize]))
        .collect();
    let patch_count = keep.iter().filter(|&&v| ego.is_patch(v)).count();
    EgoGraph::from_parts(
        local_to_global,
        edges,
        global_degree,
        features,
        patch_count,
        ego.hops(),
    )
}

/// `count` independent corruption draws at the same strength, one per
/// sub-stream `stream.child(0..count)`.
pub fn sample_targets(ego: &EgoGraph, t: f64, count: usize, stream: RngStream) -> Vec<EgoGraph> {
    assert!(count >= 1, "need at least one target sample");
    (0..count)
        .map(|l| corrupt(ego, t, stream.child(l as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ego_extract, Graph, Splits};
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn graph_from_edges(n: usize, edges: &[(u32, u32)]) -> Graph {
        let mut features = Matrix::zeros(n, 2);
        for i in 0..n {
            features.set(i, 0, i as f32);
            features.set(i, 1, 1.0);
        }
        Graph::new(edges, features, vec![0; n], Splits::default()).unwrap()
    }

    fn star(leaves: u32) -> Graph {
        let edges: Vec<(u32, u32)> = (1..=leaves).map(|v| (0, v)).collect();
        graph_from_edges(leaves as usize + 1, &edges)
    }

    /// Anchor 0 with first-order neighbors 1–4; node 5 hangs off 1, node 6
    /// off 2, node 7 off both 3 and 4, and 6–7 are linked so node 6 stays
    /// connected (but beyond 2 hops) whenever 2 is dropped.
    fn cascade_graph() -> Graph {
        graph_from_edges(
            8,
            &[
                (0, 1),
                (0, 2),
                (0, 3),
                (0, 4),
                (1, 5),
                (2, 6),
                (3, 7),
                (4, 7),
                (6, 7),
            ],
        )
    }

    fn globals(ego: &EgoGraph) -> BTreeSet<u32> {
        ego.local_to_global().iter().copied().collect()
    }

    #[test]
    fn zero_strength_is_identity() {
        let g = cascade_graph();
        let ego = ego_extract(&g, 0, 2).unwrap();
        let out = corrupt(&ego, 0.0, RngStream::new(1, 0));
        assert_eq!(out, ego);
    }

    #[test]
    fn zero_degree_anchor_is_returned_unchanged() {
        let g = graph_from_edges(3, &[(1, 2)]);
        let ego = ego_extract(&g, 0, 2).unwrap();
        let out = corrupt(&ego, 1.0, RngStream::new(1, 0));
        assert_eq!(out, ego);
    }

    #[test]
    fn full_strength_on_a_star_leaves_the_anchor_alone() {
        let g = star(5);
        let ego = ego_extract(&g, 0, 2).unwrap();
        let out = corrupt(&ego, 1.0, RngStream::new(7, 3));
        assert_eq!(out.num_nodes(), 1);
        assert_eq!(out.local_to_global(), &[0]);
        assert!(out.edges().is_empty());
        // The stored degree still reflects the source graph.
        assert_eq!(out.global_degree(), &[5]);
    }

    /// Reachability after each possible drop pair, enumerated by hand on the
    /// cascade graph (anchor degree 4, t = 0.5 removes exactly 2 neighbors,
    /// hop budget 2). Keyed by the surviving first-order neighbors.
    #[test]
    fn half_strength_cascade_matches_hand_enumeration() {
        let g = cascade_graph();
        let ego = ego_extract(&g, 0, 2).unwrap();
        let oracle: &[(&[u32], &[u32])] = &[
            (&[3, 4], &[0, 3, 4, 7]),       // dropped {1,2}: 5, 6 orphaned
            (&[2, 4], &[0, 2, 4, 6, 7]),    // dropped {1,3}
            (&[2, 3], &[0, 2, 3, 6, 7]),    // dropped {1,4}
            (&[1, 4], &[0, 1, 4, 5, 7]),    // dropped {2,3}: 6 now 3 hops away
            (&[1, 3], &[0, 1, 3, 5, 7]),    // dropped {2,4}: 6 now 3 hops away
            (&[1, 2], &[0, 1, 2, 5, 6]),    // dropped {3,4}: 7 now 3 hops away
        ];
        let mut seen: BTreeSet<Vec<u32>> = BTreeSet::new();
        for seed in 0..64 {
            let out = corrupt(&ego, 0.5, RngStream::new(seed, 0));
            let survivors = globals(&out);
            let kept_first_order: Vec<u32> = [1, 2, 3, 4]
                .into_iter()
                .filter(|v| survivors.contains(v))
                .collect();
            assert_eq!(kept_first_order.len(), 2, "exactly 2 of 4 neighbors dropped");
            let expected = oracle
                .iter()
                .find(|(kept, _)| *kept == kept_first_order.as_slice())
                .map(|(_, s)| s.iter().copied().collect::<BTreeSet<u32>>())
                .expect("every drop pair is in the table");
            assert_eq!(survivors, expected, "kept {kept_first_order:?}");
            seen.insert(kept_first_order);
        }
        // 64 seeds over 6 equally likely pairs: all outcomes observed.
        assert_eq!(seen.len(), 6, "all drop pairs occur across seeds");
    }

    #[test]
    fn survivor_degrees_come_from_the_source_graph() {
        let g = cascade_graph();
        let ego = ego_extract(&g, 0, 2).unwrap();
        for seed in 0..16 {
            let out = corrupt(&ego, 0.5, RngStream::new(seed, 1));
            for (local, &global) in out.local_to_global().iter().enumerate() {
                assert_eq!(out.global_degree()[local], g.degree(global));
            }
        }
    }

    #[test]
    fn corruption_is_deterministic_per_stream() {
        let g = cascade_graph();
        let ego = ego_extract(&g, 0, 2).unwrap();
        let a = corrupt(&ego, 0.5, RngStream::new(11, 4));
        let b = corrupt(&ego, 0.5, RngStream::new(11, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn schedule_for_strength_point_three() {
        let s = build_schedule(0.3, None).unwrap();
        assert_eq!(s.strengths(), &[0.9, 0.6, 0.3]);
    }

    #[test]
    fn schedule_caps_the_leading_entry() {
        let s = build_schedule(0.5, None).unwrap();
        assert_eq!(s.strengths(), &[0.99, 0.5]);
    }

    #[test]
    fn schedule_for_strength_point_one() {
        let s = build_schedule(0.1, None).unwrap();
        let expect = [0.99, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
        assert_eq!(s.strengths(), &expect);
    }

    #[test]
    fn steps_override_keeps_the_heaviest_entries() {
        let s = build_schedule(0.1, Some(5)).unwrap();
        assert_eq!(s.strengths(), &[0.99, 0.9, 0.8, 0.7, 0.6]);
    }

    #[test]
    fn cap_collapses_the_duplicate_it_creates() {
        // 1/0.01 = 100 steps: the raw head is [1.0, 0.99, …]; the cap turns
        // 1.0 into a second 0.99 which must collapse.
        let s = build_schedule(0.01, None).unwrap();
        assert_eq!(s.len(), 99);
        assert_eq!(s.strengths()[0], 0.99);
        assert_eq!(s.strengths()[1], 0.98);
        assert_eq!(*s.strengths().last().unwrap(), 0.01);
    }

    #[test]
    fn schedule_rejects_out_of_range_strengths() {
        for bad in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert!(build_schedule(bad, None).is_err(), "{bad} accepted");
        }
        assert!(build_schedule(0.3, Some(0)).is_err());
    }

    #[test]
    fn sample_targets_first_draw_matches_child_zero() {
        let g = cascade_graph();
        let ego = ego_extract(&g, 0, 2).unwrap();
        let stream = RngStream::new(5, 9);
        let targets = sample_targets(&ego, 0.5, 1, stream);
        assert_eq!(targets.len(), 1);
        assert_eq!(targets[0], corrupt(&ego, 0.5, stream.child(0)));
    }

    #[test]
    fn sample_targets_at_zero_strength_are_identical_copies() {
        let g = cascade_graph();
        let ego = ego_extract(&g, 0, 2).unwrap();
        let targets = sample_targets(&ego, 0.0, 10, RngStream::new(2, 2));
        assert_eq!(targets.len(), 10);
        for t in &targets {
            assert_eq!(*t, ego);
        }
    }

    #[test]
    fn sample_targets_on_a_star_drop_a_fixed_count() {
        let g = star(5);
        let ego = ego_extract(&g, 0, 2).unwrap();
        let targets = sample_targets(&ego, 0.4, 10, RngStream::new(3, 8));
        for t in &targets {
            // round(0.4 · 5) = 2 removed, 3 leaves + anchor remain.
            assert_eq!(t.num_nodes(), 4);
        }
    }

    fn arbitrary_ego() -> impl Strategy<Value = EgoGraph> {
        (4usize..16, any::<u64>(), 1usize..=3).prop_map(|(n, seed, hops)| {
            let mut rng = RngStream::new(seed, 77).rng();
            let mut edges = Vec::new();
            for u in 0..n as u32 {
                for v in (u + 1)..n as u32 {
                    if rng.gen_bool(0.35) {
                        edges.push((u, v));
                    }
                }
            }
            // Anchor 0 must exist in the graph even if isolated.
            let g = graph_from_edges(n, &edges);
            ego_extract(&g, 0, hops).unwrap()
        })
    }

    proptest! {
        #[test]
        fn corrupt_output_is_a_valid_sub_ego(
            ego in arbitrary_ego(),
            t in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            let out = corrupt(&ego, t, RngStream::new(seed, 5));
            // Anchor retained at local 0.
            prop_assert_eq!(out.local_to_global()[0], ego.local_to_global()[0]);
            // Node set is a subset of the input's.
            let inp = globals(&ego);
            let outp = globals(&out);
            prop_assert!(outp.is_subset(&inp));
            // Exact removal count on the anchor's first-order neighborhood.
            let before = ego.anchor_neighbors().len();
            let after = out.anchor_neighbors().len();
            let expect_drop = (t * before as f64).round() as usize;
            prop_assert_eq!(before - after, expect_drop);
            // Edges are a remapped subset: every output edge exists in the
            // input between the same global endpoints.
            let input_edges: BTreeSet<(u32, u32)> = ego
                .edges()
                .iter()
                .map(|&(u, v)| {
                    let (a, b) = (
                        ego.local_to_global()[u as usize],
                        ego.local_to_global()[v as usize],
                    );
                    (a.min(b), a.max(b))
                })
                .collect();
            for &(u, v) in out.edges() {
                let (a, b) = (
                    out.local_to_global()[u as usize],
                    out.local_to_global()[v as usize],
                );
                prop_assert!(input_edges.contains(&(a.min(b), a.max(b))));
            }
            // Survivor degrees are carried over unchanged.
            for (local, &global) in out.local_to_global().iter().enumerate() {
                let orig_local = ego
                    .local_to_global()
                    .iter()
                    .position(|&g| g == global)
                    .unwrap();
                prop_assert_eq!(
                    out.global_degree()[local],
                    ego.global_degree()[orig_local]
                );
            }
        }

        #[test]
        fn schedules_decrease_strictly_and_stay_in_range(
            t in 0.011f64..0.989,
        ) {
            let s = build_schedule(t, None).unwrap();
            prop_assert!(!s.is_empty());
            for w in s.strengths().windows(2) {
                prop_assert!(w[0] > w[1]);
            }
            for &v in s.strengths() {
                prop_assert!(v > 0.0 && v < 1.0);
            }
            let last = *s.strengths().last().unwrap();
            prop_assert!((last - t).abs() < 1e-9);
        }
    }
}
