//! Dense layers, losses with analytic gradients, an AdamW optimizer, and
//! finite-difference gradient checking. Scalars come back as f32; every
//! reduction runs in f64 internally.

use rand::Rng;

use crate::tensor::{matmul, matmul_a_bt, matmul_at_b, softmax_rows, Matrix};

/// One affine layer `x · W + b` with gradient accumulators of matching shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub grad_weight: Matrix,
    pub grad_bias: Matrix,
}

impl DenseLayer {
    /// Glorot-uniform initialization: U(−a, a) with a = √(6/(fan_in+fan_out)).
    pub fn glorot(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (d_in + d_out) as f64).sqrt();
        let data = (0..d_in * d_out)
            .map(|_| rng.gen_range(-a..a) as f32)
            .collect();
        DenseLayer {
            weight: Matrix::from_vec(d_in, d_out, data),
            bias: Matrix::zeros(1, d_out),
            grad_weight: Matrix::zeros(d_in, d_out),
            grad_bias: Matrix::zeros(1, d_out),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        DenseLayer {
            weight: Matrix::zeros(d_in, d_out),
            bias: Matrix::zeros(1, d_out),
            grad_weight: Matrix::zeros(d_in, d_out),
            grad_bias: Matrix::zeros(1, d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut out = matmul(x, &self.weight);
        out.add_bias(self.bias.row(0));
        out
    }

    /// Accumulates parameter gradients from `upstream` (dL/d output) and
    /// returns dL/d input. `x` must be the forward input.
    pub fn backward(&mut self, x: &Matrix, upstream: &Matrix) -> Matrix {
        self.grad_weight.add_assign(&matmul_at_b(x, upstream));
        let mut col_sums = Matrix::zeros(1, upstream.cols());
        for r in 0..upstream.rows() {
            for (s, &g) in col_sums.row_mut(0).iter_mut().zip(upstream.row(r)) {
                *s += g;
            }
        }
        self.grad_bias.add_assign(&col_sums);
        matmul_a_bt(upstream, &self.weight)
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.scale(0.0);
        self.grad_bias.scale(0.0);
    }
}

/// AdamW state: decoupled weight decay, bias-corrected moments.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub lr: f32,
    pub weight_decay: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl OptimizerState {
    /// `param_lens` fixes the number and length of the parameter blocks this
    /// state will be stepped with.
    pub fn new(lr: f32, weight_decay: f32, param_lens: &[usize]) -> Self {
        OptimizerState {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update over parallel parameter/gradient blocks:
/// p ← p·(1 − lr·wd); m, v updated with bias correction; p ← p − lr·m̂/(√v̂+ε).
pub fn optimizer_step(state: &mut OptimizerState, params: &mut [&mut [f32]], grads: &[&[f32]]) {
    assert_eq!(params.len(), state.m.len(), "optimizer block count");
    assert_eq!(grads.len(), state.m.len(), "gradient block count");
    state.step += 1;
    let t = state.step as i32;
    let lr = state.lr as f64;
    let wd = state.weight_decay as f64;
    let b1 = state.beta1 as f64;
    let b2 = state.beta2 as f64;
    let eps = state.eps as f64;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        assert_eq!(p.len(), m.len(), "optimizer param length");
        assert_eq!(g.len(), m.len(), "optimizer grad length");
        for i in 0..p.len() {
            let gi = g[i] as f64;
            let mut pi = p[i] as f64;
            pi *= 1.0 - lr * wd;
            let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            p[i] = (pi - lr * m_hat / (v_hat.sqrt() + eps)) as f32;
        }
    }
}

/// KL divergence with additive smoothing:
/// Σ_c (target_c+ε)·(log(target_c+ε) − log(pred_c+ε)). Zero when the two
/// arguments are identical; nonnegative up to the ε slack.
pub fn kl_div(target: &[f32], pred: &[f32], eps: f32) -> f32 {
    assert_eq!(target.len(), pred.len(), "kl_div length mismatch");
    assert!(eps > 0.0, "kl_div needs eps > 0");
    let mut acc = 0.0f64;
    for (&t, &p) in target.iter().zip(pred) {
        assert!(t.is_finite() && p.is_finite(), "kl_div non-finite input");
        let t = t as f64 + eps as f64;
        let p = p as f64 + eps as f64;
        acc += t * (t.ln() - p.ln());
    }
    acc as f32
}

/// Analytic ∂kl_div/∂pred_c = −(target_c+ε)/(pred_c+ε). Chaining through a
/// softmax that produced `pred` is the caller's job.
pub fn kl_div_grad(target: &[f32], pred: &[f32], eps: f32) -> Vec<f32> {
    assert_eq!(target.len(), pred.len(), "kl_div_grad length mismatch");
    target
        .iter()
        .zip(pred)
        .map(|(&t, &p)| -((t as f64 + eps as f64) / (p as f64 + eps as f64)) as f32)
        .collect()
}

/// Mean negative log softmax probability of the true class, plus the gradient
/// w.r.t. the logits: (softmax − onehot) / batch.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> (f32, Matrix) {
    assert_eq!(logits.rows(), labels.len(), "cross_entropy batch size");
    let n = logits.rows();
    assert!(n > 0, "cross_entropy on empty batch");
    let c = logits.cols();
    let mut loss = 0.0f64;
    for (r, &y) in labels.iter().enumerate() {
        assert!(y < c, "label {y} out of range for {c} classes");
        let row = logits.row(r);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let lse: f64 = row.iter().map(|&v| ((v as f64) - max).exp()).sum::<f64>().ln() + max;
        loss += lse - logits.get(r, y) as f64;
    }
    let mut grad = softmax_rows(logits);
    let inv = 1.0 / n as f32;
    for (r, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        row[y] -= 1.0;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    ((loss / n as f64) as f32, grad)
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates skipped: both slopes negligible, or the one-sided slopes
    /// disagree (the function has a kink there, e.g. relu at exactly 0).
    pub skipped: usize,
}

/// Central finite differences per coordinate against `analytic`, returning
/// the maximum relative discrepancy. `loss_fn` is evaluated at f32 parameter
/// values but must return its scalar in f64.
pub fn gradcheck(
    mut loss_fn: impl FnMut(&[f32]) -> f64,
    params: &[f32],
    analytic: &[f32],
    h: f32,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradcheck length mismatch");
    assert!(h > 0.0, "gradcheck step must be positive");
    let base = loss_fn(params);
    assert!(base.is_finite(), "gradcheck: non-finite loss at base point");
    let mut work = params.to_vec();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let mut eval_at = |work: &mut Vec<f32>, i: usize, v: f32| -> f64 {
        work[i] = v;
        let f = loss_fn(work);
        work[i] = params[i];
        assert!(f.is_finite(), "gradcheck: non-finite loss at coordinate {i}");
        f
    };
    for i in 0..params.len() {
        let p0 = params[i];
        let (p_plus, p_minus) = (p0 + h, p0 - h);
        let (q_plus, q_minus) = (p0 + h / 4.0, p0 - h / 4.0);
        let f_plus = eval_at(&mut work, i, p_plus);
        let f_minus = eval_at(&mut work, i, p_minus);
        let g_plus = eval_at(&mut work, i, q_plus);
        let g_minus = eval_at(&mut work, i, q_minus);
        // Use the actually-representable steps so quadratic losses check
        // exactly even after f32 rounding of p ± h.
        let num = (f_plus - f_minus) / ((p_plus as f64) - (p_minus as f64));
        let num_quarter = (g_plus - g_minus) / ((q_plus as f64) - (q_minus as f64));
        let ana = analytic[i] as f64;
        if num.abs() < 1e-6 && ana.abs() < 1e-6 {
            skipped += 1;
            continue;
        }
        // Kink detection, e.g. a relu crossing zero inside the stencil. A
        // kink exactly at p0 leaves the central difference consistent across
        // step sizes but splits the one-sided slopes; a kink elsewhere in
        // the interval shifts the central difference as the step shrinks.
        let fwd = (f_plus - base) / ((p_plus as f64) - (p0 as f64));
        let bwd = (base - f_minus) / ((p0 as f64) - (p_minus as f64));
        let one_sided_split = (fwd - bwd).abs() > 0.25 * fwd.abs().max(bwd.abs()).max(1e-6);
        let scale_shift = (num - num_quarter).abs() > 0.1 * num.abs().max(num_quarter.abs()).max(1e-6);
        if one_sided_split || scale_shift {
            skipped += 1;
            continue;
        }
        let rel = (num - ana).abs() / (num.abs() + ana.abs()).max(1e-6);
        if rel > max_rel {
            max_rel = rel;
        }
        checked += 1;
    }
    GradCheckReport {
        max_rel_err: max_rel,
        checked,
        skipped,
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// 1/(1−rate), so expected activation scale is unchanged.
pub fn dropout_mask(rng: &mut impl Rng, len: usize, rate: f32) -> Vec<f32> {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0,1)");
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    // Frozen oracle values, evaluated independently at 50-digit precision
    // from the smoothed closed form with eps = 1e-8.
    const KL_ONEHOT_VS_UNIFORM2: f64 = 0.69314700021608133;
    const KL_37_VS_64: f64 = 0.18378689355149844;

    #[test]
    fn kl_identical_distributions_is_exactly_zero() {
        let p = [0.2f32, 0.5, 0.3];
        assert_eq!(kl_div(&p, &p, 1e-8), 0.0);
    }

    #[test]
    fn kl_onehot_vs_uniform_matches_log2_oracle() {
        let v = kl_div(&[1.0, 0.0], &[0.5, 0.5], 1e-8) as f64;
        assert!(
            (v - KL_ONEHOT_VS_UNIFORM2).abs() < 1e-6,
            "kl = {v}, oracle = {KL_ONEHOT_VS_UNIFORM2}"
        );
        assert!((v - std::f64::consts::LN_2).abs() < 1e-4);
    }

    #[test]
    fn kl_matches_high_precision_oracle() {
        let v = kl_div(&[0.3, 0.7], &[0.6, 0.4], 1e-8) as f64;
        assert!((v - KL_37_VS_64).abs() < 1e-6, "kl = {v}, oracle = {KL_37_VS_64}");
    }

    #[test]
    fn kl_grad_matches_finite_differences() {
        let target = [0.25f32, 0.55, 0.20];
        let pred = [0.4f32, 0.3, 0.3];
        let analytic = kl_div_grad(&target, &pred, 1e-8);
        let report = gradcheck(
            |p| {
                let mut acc = 0.0f64;
                for (&t, &pi) in target.iter().zip(p) {
                    let t = t as f64 + 1e-8;
                    let pi = pi as f64 + 1e-8;
                    acc += t * (t.ln() - pi.ln());
                }
                acc
            },
            &pred,
            &analytic,
            1e-3,
        );
        assert!(report.max_rel_err < 1e-3, "max rel err {}", report.max_rel_err);
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn cross_entropy_certain_prediction_is_near_zero() {
        let logits = Matrix::from_vec(1, 3, vec![50.0, 0.0, 0.0]);
        let (loss, _) = cross_entropy(&logits, &[0]);
        assert!(loss.abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn cross_entropy_uniform_is_ln_c() {
        let logits = Matrix::zeros(2, 4);
        let (loss, _) = cross_entropy(&logits, &[1, 3]);
        assert!((loss as f64 - (4.0f64).ln()).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn cross_entropy_grad_matches_finite_differences() {
        let mut rng = RngStream::new(11, 0).rng();
        let logits = Matrix::from_vec(3, 4, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let labels = [2usize, 0, 3];
        let (_, grad) = cross_entropy(&logits, &labels);
        let report = gradcheck(
            |p| {
                let m = Matrix::from_vec(3, 4, p.to_vec());
                cross_entropy(&m, &labels).0 as f64
            },
            logits.data(),
            grad.data(),
            1e-3,
        );
        assert!(report.max_rel_err < 1e-3, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn adamw_zero_grad_zero_decay_leaves_params_alone() {
        let mut state = OptimizerState::new(0.1, 0.0, &[3]);
        let mut p = vec![1.0f32, -2.0, 0.5];
        let g = vec![0.0f32; 3];
        optimizer_step(&mut state, &mut [&mut p], &[&g]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn adamw_single_step_matches_hand_evaluation() {
        // p=1, g=1, lr=0.1: m̂=1, v̂=1 after bias correction, so the update is
        // lr/(1+eps) and the decay term is absent at wd=0.
        let mut state = OptimizerState::new(0.1, 0.0, &[1]);
        let mut p = vec![1.0f32];
        optimizer_step(&mut state, &mut [&mut p], &[&[1.0]]);
        assert!((p[0] as f64 - 0.9000000010).abs() < 1e-6, "p = {}", p[0]);
    }

    #[test]
    fn adamw_decoupled_decay_shrinks_parameters() {
        let mut state = OptimizerState::new(0.1, 0.5, &[1]);
        let mut p = vec![2.0f32];
        optimizer_step(&mut state, &mut [&mut p], &[&[0.0]]);
        // Zero gradient: only the decay factor 1 − lr·wd = 0.95 applies.
        assert!((p[0] - 1.9).abs() < 1e-6, "p = {}", p[0]);
    }

    #[test]
    fn adamw_is_deterministic() {
        let run = || {
            let mut state = OptimizerState::new(0.01, 1e-5, &[4]);
            let mut p = vec![0.5f32, -0.25, 1.5, -1.0];
            for k in 0..10 {
                let g: Vec<f32> = p.iter().map(|v| v * 0.3 + k as f32 * 0.01).collect();
                optimizer_step(&mut state, &mut [&mut p], &[&g]);
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn gradcheck_quadratic_is_nearly_exact() {
        let params = vec![0.3f32, -0.8, 1.2, 0.05];
        let analytic: Vec<f32> = params.iter().map(|p| 2.0 * p).collect();
        let report = gradcheck(
            |p| p.iter().map(|&v| (v as f64) * (v as f64)).sum(),
            &params,
            &analytic,
            1e-3,
        );
        assert!(report.max_rel_err < 1e-6, "max rel err {}", report.max_rel_err);
        assert_eq!(report.checked, 4);
    }

    #[test]
    fn gradcheck_skips_relu_kink_at_zero() {
        let params = vec![0.0f32, 1.0, -1.0];
        // Analytic gradient of sum(relu(p)): subgradient 0 chosen at the kink.
        let analytic = vec![0.0f32, 1.0, 0.0];
        let report = gradcheck(
            |p| p.iter().map(|&v| (v as f64).max(0.0)).sum(),
            &params,
            &analytic,
            1e-3,
        );
        assert_eq!(report.skipped, 2, "kink and flat coordinate are skipped");
        assert_eq!(report.checked, 1);
        assert!(report.max_rel_err < 1e-6);
    }

    #[test]
    fn dense_layer_backward_matches_finite_differences() {
        let mut rng = RngStream::new(5, 0).rng();
        let mut layer = DenseLayer::glorot(3, 2, &mut rng);
        let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0f32..1.0)).collect());
        let upstream = Matrix::from_vec(4, 2, (0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect());
        let loss = |w: &[f32], b: &[f32], xd: &[f32]| -> f64 {
            let wm = Matrix::from_vec(3, 2, w.to_vec());
            let bm = Matrix::from_vec(1, 2, b.to_vec());
            let xm = Matrix::from_vec(4, 3, xd.to_vec());
            let mut out = matmul(&xm, &wm);
            out.add_bias(bm.row(0));
            out.data()
                .iter()
                .zip(upstream.data())
                .map(|(&o, &u)| o as f64 * u as f64)
                .sum()
        };
        layer.zero_grad();
        let dx = layer.backward(&x, &upstream);

        let w0 = layer.weight.data().to_vec();
        let b0 = layer.bias.data().to_vec();
        let xd0 = x.data().to_vec();
        let rw = gradcheck(
            |w| loss(w, &b0, &xd0),
            &w0,
            layer.grad_weight.data(),
            1e-3,
        );
        let rb = gradcheck(
            |b| loss(&w0, b, &xd0),
            &b0,
            layer.grad_bias.data(),
            1e-3,
        );
        let rx = gradcheck(|xd| loss(&w0, &b0, xd), &xd0, dx.data(), 1e-3);
        assert!(rw.max_rel_err < 1e-4, "dW rel err {}", rw.max_rel_err);
        assert!(rb.max_rel_err < 1e-4, "db rel err {}", rb.max_rel_err);
        assert!(rx.max_rel_err < 1e-4, "dx rel err {}", rx.max_rel_err);
    }
}
