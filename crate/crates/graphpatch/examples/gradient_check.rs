//! All gradients here are hand-derived, so they are checked against central
//! finite differences. This example runs the heaviest of those checks — the
//! full patcher objective (iterated patching, KL to corrupted-target
//! predictions, reconstruction against the original ego) with gradients
//! flowing through the whole chain — on a small hand-built graph.
//!
//!     cargo run --release --example gradient_check

use graphpatch::corruption::build_schedule;
use graphpatch::gnn::GCNModel;
use graphpatch::graph::{ego_extract, Graph, Splits};
use graphpatch::nn::gradcheck;
use graphpatch::patcher::{chain_loss_with_grads, PatcherModel};
use graphpatch::rng::{standard_normal, RngStream};
use graphpatch::tensor::Matrix;

fn main() {
    let dim = 6;
    let hidden = 5;

    // Ten nodes, all within 2 hops of node 0.
    let edges = vec![(0, 1), (0, 2), (1, 3), (2, 4), (0, 5), (5, 6), (3, 7), (4, 8), (0, 9)];
    let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
    let splits = Splits {
        train: (0..6).collect(),
        valid: vec![6, 7],
        test: vec![8, 9],
    };
    let mut rng = RngStream::new(1, 1).rng();
    let mut features = Matrix::zeros(10, dim);
    for v in features.data_mut() {
        *v = standard_normal(&mut rng) as f32 * 0.5;
    }
    let g = Graph::new(&edges, features, labels, splits).expect("valid graph");
    let ego = ego_extract(&g, 0, 2).expect("ego extraction");
    println!("ego of node 0: {} nodes", ego.num_nodes());

    let gnn = GCNModel::new(dim, 5, 2, RngStream::new(1, 2));
    let patcher = PatcherModel::new(dim, hidden, RngStream::new(1, 3));
    let schedule = build_schedule(0.3, None).unwrap();
    // The same stream is re-created for every evaluation so the corruption
    // draws are identical across f(φ), f(φ+h), and f(φ−h) — otherwise the
    // finite difference would measure sampling noise, not the gradient.
    let stream = || RngStream::new(1, 4);

    // Flatten φ, compute analytic gradients once, then compare every
    // coordinate against a central finite difference.
    let flat: Vec<f32> = [
        patcher.encoder1.weight.data(),
        patcher.encoder1.bias.data(),
        patcher.encoder2.weight.data(),
        patcher.encoder2.bias.data(),
        patcher.head1.weight.data(),
        patcher.head1.bias.data(),
        patcher.head2.weight.data(),
        patcher.head2.bias.data(),
    ]
    .concat();
    let load = |p: &[f32]| -> PatcherModel {
        let mut m = PatcherModel::new(dim, hidden, RngStream::new(1, 3));
        let mut at = 0;
        for layer in [&mut m.encoder1, &mut m.encoder2, &mut m.head1, &mut m.head2] {
            for tensor in [&mut layer.weight, &mut layer.bias] {
                let len = tensor.data().len();
                tensor.data_mut().copy_from_slice(&p[at..at + len]);
                at += len;
            }
        }
        m
    };

    let mut scratch = load(&flat);
    scratch.zero_grad();
    let report = chain_loss_with_grads(&gnn, &mut scratch, &ego, &schedule, 2, true, stream(), false);
    println!(
        "objective at φ₀: total {:.6} (step losses {:?}, reconstruction {:.6})",
        report.total, report.step_losses, report.recon_loss
    );
    let analytic: Vec<f32> = [
        scratch.encoder1.grad_weight.data(),
        scratch.encoder1.grad_bias.data(),
        scratch.encoder2.grad_weight.data(),
        scratch.encoder2.grad_bias.data(),
        scratch.head1.grad_weight.data(),
        scratch.head1.grad_bias.data(),
        scratch.head2.grad_weight.data(),
        scratch.head2.grad_bias.data(),
    ]
    .concat();

    let check = gradcheck(
        |p| {
            let mut m = load(p);
            chain_loss_with_grads(&gnn, &mut m, &ego, &schedule, 2, false, stream(), false).total
        },
        &flat,
        &analytic,
        1e-2,
    );
    println!(
        "finite differences over {} parameters: {} checked, {} skipped (kinks/flat), max relative error {:.3e}",
        flat.len(),
        check.checked,
        check.skipped,
        check.max_rel_err
    );
    assert!(check.max_rel_err < 1e-2, "gradient mismatch");
    println!("analytic gradients agree with finite differences.");
}
