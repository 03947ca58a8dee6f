//! BCD for ReLU networks with skip connections.
//!
//! Differences from [`crate::monotone`]: `W_L` is drawn once and never
//! updated, hidden layers `j ≥ 2` use the residual map `v ↦ σ(W_j v) + v`,
//! auxiliary variables are projected onto `v ≥ 0` after every gradient step,
//! and `W_1` is fitted by linear least squares on `‖W_1 x_i − V_{1,i}‖²`.

use alloc::vec::Vec;

use crate::activation::Activation;
use crate::error::{Block, Error, Result};
use crate::grad;
use crate::init::{init_aux_relu, init_weights, svb};
use crate::matrix::{axpy, gemm, Matrix, Op};
use crate::monotone::{check_hidden_layer, check_labels, check_losses, guard};
use crate::network::{loss_relu_skip, output_residuals, LossBreakdown, NetworkShape, NetworkState, TrainingData};
use crate::schedule::TrainSchedule;
use crate::trace::{LossTrace, TraceObserver};

/// Initial draws tried before giving up on a mixed-sign output row.
pub const MAX_REDRAWS: usize = 32;

/// Element-wise `max{v, 0}`.
pub fn project_nonneg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

pub fn project_nonneg_in_place(v: &mut [f64]) {
    // `max` would keep -0.0 and NaN handling is not needed here
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Split of the output row into its positive and negative parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputRowStats {
    /// `‖w₊‖²`.
    pub w_plus_sq: f64,
    /// `‖w₋‖²`.
    pub w_minus_sq: f64,
    pub w_min_sq: f64,
    pub mixed_sign: bool,
}

pub fn output_row_stats(w: &[f64]) -> OutputRowStats {
    let mut w_plus_sq = 0.0;
    let mut w_minus_sq = 0.0;
    for &x in w {
        if x > 0.0 {
            w_plus_sq += x * x;
        } else if x < 0.0 {
            w_minus_sq += x * x;
        }
    }
    OutputRowStats {
        w_plus_sq,
        w_minus_sq,
        w_min_sq: w_plus_sq.min(w_minus_sq),
        mixed_sign: w_plus_sq > 0.0 && w_minus_sq > 0.0,
    }
}

fn mixed_sign_error() -> Error {
    Error::InvalidArgument(
        "the output row has no entries of both signs, so W_L v = y has no non-negative \
         solution in general"
            .into(),
    )
}

/// A non-negative `v` with `w · v = y`, supported on the largest entry of
/// the matching sign.
pub fn solve_nonneg_output(w: &[f64], y: f64) -> Result<Vec<f64>> {
    if !output_row_stats(w).mixed_sign {
        return Err(mixed_sign_error());
    }
    let mut v = alloc::vec![0.0; w.len()];
    if y == 0.0 {
        return Ok(v);
    }
    let want_positive = y > 0.0;
    let mut best: Option<usize> = None;
    for (p, &wp) in w.iter().enumerate() {
        let matches = if want_positive { wp > 0.0 } else { wp < 0.0 };
        if matches && best.is_none_or(|b| wp.abs() > w[b].abs()) {
            best = Some(p);
        }
    }
    let p = best.expect("mixed sign row has entries of both signs");
    v[p] = y / w[p];
    Ok(v)
}

/// One projected step `V_{L-1,i} ← (V_{L-1,i} − η · 2 W_Lᵀ r_i)⁺` per sample.
/// `W_L` is not touched.
pub fn update_output_aux_projected(state: &mut NetworkState, y: &[f64], eta: f64) -> Result<()> {
    check_labels(state, y)?;
    let (w_l, v) = state.output_block_mut();
    let res = output_residuals(w_l, v, y);
    let w = w_l.row(0);
    for (i, ri) in res.iter().enumerate() {
        let row = v.row_mut(i);
        axpy(-2.0 * eta * ri, w, row);
        project_nonneg_in_place(row);
    }
    Ok(())
}

/// One step `W_j ← W_j − γη ∇_{W_j} Σ_i ‖σ(W_j V_{j-1,i}) + V_{j-1,i} − V_{j,i}‖²`.
pub fn update_hidden_weights_skip(state: &mut NetworkState, j: usize, eta: f64, gamma: f64) -> Result<()> {
    check_hidden_layer(state, j)?;
    let (w, v_prev, v_next) = state.hidden_weights_mut(j);
    let g = grad::layer_weights(w, v_prev, v_next, Activation::Relu, true);
    w.add_scaled(-gamma * eta, &g);
    Ok(())
}

/// `k_v` projected steps on `V_{j-1,i}` of `‖σ(W_j V_{j-1,i}) + V_{j-1,i} − V_{j,i}‖²`
/// for a single sample.
pub fn update_hidden_aux_skip_sample(
    state: &mut NetworkState,
    j: usize,
    i: usize,
    eta: f64,
    gamma: f64,
    k_v: usize,
) -> Result<()> {
    check_hidden_layer(state, j)?;
    if i >= state.shape().n {
        return Err(Error::InvalidArgument(alloc::format!("sample index {i} out of range")));
    }
    let (w, v_prev, v_next) = state.hidden_block_mut(j);
    let target = v_next.row(i);
    for _ in 0..k_v {
        let g = grad::layer_aux_sample(w, v_prev.row(i), target, Activation::Relu, true);
        let row = v_prev.row_mut(i);
        axpy(-gamma * eta, &g, row);
        project_nonneg_in_place(row);
    }
    Ok(())
}

/// [`update_hidden_aux_skip_sample`] for every sample at once.
pub fn update_hidden_aux_skip(state: &mut NetworkState, j: usize, eta: f64, gamma: f64, k_v: usize) -> Result<()> {
    check_hidden_layer(state, j)?;
    let (w, v_prev, v_next) = state.hidden_block_mut(j);
    for _ in 0..k_v {
        let g = grad::layer_aux(w, v_prev, v_next, Activation::Relu, true);
        v_prev.add_scaled(-gamma * eta, &g);
        project_nonneg_in_place(v_prev.as_mut_slice());
    }
    Ok(())
}

/// `k_w` steps `W_1 ← W_1 − γη ∇_{W_1} Σ_i ‖W_1 x_i − V_{1,i}‖²`.
pub fn update_first_weights_linear(
    state: &mut NetworkState,
    x: &Matrix,
    eta: f64,
    gamma: f64,
    k_w: usize,
) -> Result<()> {
    x.expect_shape("data matrix", (state.shape().n, state.shape().d_in))?;
    let (w1, v1) = state.first_block_mut();
    for _ in 0..k_w {
        let g = grad::layer_weights(w1, x, v1, Activation::Identity, false);
        w1.add_scaled(-gamma * eta, &g);
    }
    Ok(())
}

/// Same iterates as [`update_first_weights_linear`], computed in sample
/// space: the predictions `P = X W_1ᵀ` follow `P ← P − 2γη G (P − V_1)` with
/// `G = X Xᵀ`, and `W_1` is updated once from the summed residuals. Cheaper
/// when `n < d_in`; agrees with the direct form up to rounding.
pub fn update_first_weights_linear_gram(
    state: &mut NetworkState,
    x: &Matrix,
    gram: &Matrix,
    eta: f64,
    gamma: f64,
    k_w: usize,
) -> Result<()> {
    let n = state.shape().n;
    x.expect_shape("data matrix", (n, state.shape().d_in))?;
    gram.expect_shape("Gram matrix", (n, n))?;
    let (w1, v1) = state.first_block_mut();
    let step = 2.0 * gamma * eta;
    let mut p = x.matmul_t(w1);
    let mut e = Matrix::zeros(n, w1.rows());
    let mut sum = Matrix::zeros(n, w1.rows());
    for _ in 0..k_w {
        for ((e, p), v) in e.as_mut_slice().iter_mut().zip(p.as_slice()).zip(v1.as_slice()) {
            *e = p - v;
        }
        sum.add_scaled(1.0, &e);
        gemm(-step, gram, Op::N, &e, Op::N, 1.0, &mut p);
    }
    gemm(-step, &sum, Op::T, x, Op::N, 1.0, w1);
    Ok(())
}

/// One outer iteration; returns the losses after it.
pub fn outer_step_relu(
    state: &mut NetworkState,
    data: &TrainingData<'_>,
    schedule: &TrainSchedule,
    iteration: usize,
) -> Result<LossBreakdown> {
    outer_step_relu_with(state, data, schedule, iteration, &mut |_: Block, _: &NetworkState| {})
}

/// [`outer_step_relu`], calling `after_block` once each block has been updated and
/// checked.
pub fn outer_step_relu_with(
    state: &mut NetworkState,
    data: &TrainingData<'_>,
    schedule: &TrainSchedule,
    iteration: usize,
    after_block: &mut impl FnMut(Block, &NetworkState),
) -> Result<LossBreakdown> {
    let l = state.layers();
    let s = schedule;
    let scaling = s.scaling;
    let act = Activation::Relu;

    let eta = scaling.output_aux(s.eta_v, state.weight(l));
    update_output_aux_projected(state, data.y, eta)?;
    guard(state.aux(l - 1), iteration, Block::OutputAux)?;
    after_block(Block::OutputAux, state);

    for j in (2..l).rev() {
        let eta = scaling.hidden_weights(s.eta_w1, s.gamma, state.aux(j - 1), act)?;
        update_hidden_weights_skip(state, j, eta, s.gamma)?;
        guard(state.weight(j), iteration, Block::HiddenWeights(j))?;
        after_block(Block::HiddenWeights(j), state);

        let eta = scaling.hidden_aux(s.eta_v, s.gamma, state.weight(j), act, true)?;
        update_hidden_aux_skip(state, j, eta, s.gamma, s.k_v)?;
        guard(state.aux(j - 1), iteration, Block::HiddenAux(j - 1))?;
        after_block(Block::HiddenAux(j - 1), state);
    }

    let eta = scaling.first_weights(s.eta_w2, s.gamma, data.x_norm, 1.0);
    if data.x.rows() < data.x.cols() {
        update_first_weights_linear_gram(state, data.x, data.gram(), eta, s.gamma, s.k_w)?;
    } else {
        update_first_weights_linear(state, data.x, eta, s.gamma, s.k_w)?;
    }
    guard(state.weight(1), iteration, Block::FirstWeights)?;
    after_block(Block::FirstWeights, state);

    let losses = loss_relu_skip(state, data.x, data.y, s.gamma, act)?;
    check_losses(&losses, iteration)?;
    Ok(losses)
}

/// An initialized ReLU state and the seed that produced it.
#[derive(Clone, Debug)]
pub struct ReluInit {
    pub state: NetworkState,
    /// `seed + redraws`.
    pub seed_used: u64,
    pub redraws: usize,
}

/// Draws weights from `seed, seed + 1, …` until `W_L` has entries of both
/// signs, then sets the exact skip-connection auxiliaries. SVB clips only
/// the hidden weights `W_2..W_{L-1}`.
pub fn initialize_relu(
    data: &TrainingData<'_>,
    shape: &NetworkShape,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<ReluInit> {
    if shape.strict {
        data.require_full_row_rank()?;
    }
    data.x.expect_shape("data matrix", (shape.n, shape.d_in))?;
    for redraws in 0..MAX_REDRAWS {
        let seed_used = seed.wrapping_add(redraws as u64);
        let mut weights = init_weights(shape, seed_used, None)?;
        // The fixed output row stays a raw Gaussian draw.
        if let Some(b) = schedule.svb {
            for w in &mut weights[1..shape.layers - 1] {
                *w = svb(w, b)?;
            }
        }
        if !output_row_stats(weights[shape.layers - 1].row(0)).mixed_sign {
            continue;
        }
        let aux = init_aux_relu(&weights, data.x)?;
        return Ok(ReluInit { state: NetworkState::new(*shape, weights, aux)?, seed_used, redraws });
    }
    Err(Error::MixedSignUnavailable { attempts: MAX_REDRAWS })
}

pub fn run_relu(
    state: &mut NetworkState,
    data: &TrainingData<'_>,
    schedule: &TrainSchedule,
    observer: &mut impl TraceObserver,
) -> Result<LossTrace> {
    schedule.validate()?;
    state.check_data(data.x, data.y)?;
    let mut trace = LossTrace::default();
    let initial = loss_relu_skip(state, data.x, data.y, schedule.gamma, Activation::Relu)?;
    observer.on_iteration(0, state, &initial);
    trace.push(0, initial);
    for k in 1..=schedule.k_outer {
        let losses = outer_step_relu(state, data, schedule, k)?;
        observer.on_iteration(k, state, &losses);
        trace.push(k, losses);
    }
    Ok(trace)
}

/// [`initialize_relu`] followed by [`run_relu`].
pub fn train_relu(
    data: &TrainingData<'_>,
    shape: &NetworkShape,
    schedule: &TrainSchedule,
    seed: u64,
    observer: &mut impl TraceObserver,
) -> Result<(ReluInit, LossTrace)> {
    let mut init = initialize_relu(data, shape, schedule, seed)?;
    let trace = run_relu(&mut init.state, data, schedule, observer)?;
    Ok((init, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    #[test]
    fn projection() {
        assert_eq!(project_nonneg(&[-1.0, 2.0]), [0.0, 2.0]);
        assert_eq!(project_nonneg(&[0.5, 3.0]), [0.5, 3.0]);
    }

    #[test]
    fn row_stats() {
        let st = output_row_stats(&[1.0, -1.0]);
        assert!(st.mixed_sign);
        assert_eq!(st.w_min_sq, 1.0);
        let st = output_row_stats(&[0.6, -0.8]);
        assert!((st.w_plus_sq - 0.36).abs() < 1e-15);
        assert!((st.w_minus_sq - 0.64).abs() < 1e-15);
        assert!((st.w_min_sq - 0.36).abs() < 1e-15);
        assert!(!output_row_stats(&[1.0, 1.0]).mixed_sign);
    }

    #[test]
    fn nonneg_solutions() {
        assert_eq!(solve_nonneg_output(&[2.0, -1.0], 4.0).unwrap(), [2.0, 0.0]);
        assert_eq!(solve_nonneg_output(&[2.0, -1.0], -3.0).unwrap(), [0.0, 3.0]);
        assert_eq!(solve_nonneg_output(&[2.0, -1.0], 0.0).unwrap(), [0.0, 0.0]);
        assert!(solve_nonneg_output(&[1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn scalar_skip_updates() {
        let shape = NetworkShape::new(1, 1, 3, 1).unwrap();
        let mut st = NetworkState::new(shape, [1.0, 1.0, 1.0].map(s).to_vec(), [1.0, 3.0].map(s).to_vec()).unwrap();
        update_hidden_weights_skip(&mut st, 2, 0.1, 1.0).unwrap();
        assert!((st.weight(2)[(0, 0)] - 1.2).abs() < 1e-15);

        let shape = NetworkShape::new(1, 1, 2, 1).unwrap();
        let mut st = NetworkState::new(shape, [0.0, 1.0].map(s).to_vec(), [2.0].map(s).to_vec()).unwrap();
        update_first_weights_linear(&mut st, &s(1.0), 0.25, 1.0, 1).unwrap();
        assert_eq!(st.weight(1)[(0, 0)], 1.0);
    }

    #[test]
    fn output_row_is_never_updated() {
        let shape = NetworkShape::new(1, 2, 2, 1).unwrap();
        let w = alloc::vec![Matrix::from_rows(&[[1.0], [0.5]]), Matrix::from_rows(&[[1.0, -1.0]])];
        let mut st = NetworkState::new(shape, w, alloc::vec![Matrix::from_rows(&[[1.0, 0.5]])]).unwrap();
        let x = s(1.0);
        let data = TrainingData::new(&x, &[3.0]).unwrap();
        let sched = TrainSchedule {
            eta_v: 0.1,
            eta_w1: 0.1,
            eta_w2: 0.1,
            k_outer: 3,
            k_v: 2,
            k_w: 2,
            gamma: 1.0,
            svb: None,
            scaling: crate::StepScaling::Raw,
        };
        let before = st.weight(2).clone();
        run_relu(&mut st, &data, &sched, &mut ()).unwrap();
        assert_eq!(st.weight(2), &before);
        assert!(st.aux(1).as_slice().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn gram_form_matches_direct_form() {
        let shape = NetworkShape::new(7, 3, 2, 4).unwrap();
        let x = crate::matrix::gaussian_matrix(4, 7, 1.0, 5).unwrap();
        let w =
            alloc::vec![crate::matrix::gaussian_matrix(3, 7, 0.2, 6).unwrap(), Matrix::from_rows(&[[1.0, -1.0, 0.5]])];
        let v = project_nonneg_matrix(crate::matrix::gaussian_matrix(4, 3, 1.0, 7).unwrap());
        let mut a = NetworkState::new(shape, w.clone(), alloc::vec![v.clone()]).unwrap();
        let mut b = NetworkState::new(shape, w, alloc::vec![v]).unwrap();
        update_first_weights_linear(&mut a, &x, 0.01, 1.0, 25).unwrap();
        update_first_weights_linear_gram(&mut b, &x, &x.matmul_t(&x), 0.01, 1.0, 25).unwrap();
        let mut diff = a.weight(1).clone();
        diff.add_scaled(-1.0, b.weight(1));
        assert!(diff.frobenius_norm() <= 1e-12 * a.weight(1).frobenius_norm());
    }

    fn project_nonneg_matrix(mut m: Matrix) -> Matrix {
        project_nonneg_in_place(m.as_mut_slice());
        m
    }
}
