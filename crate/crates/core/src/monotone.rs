//! BCD for strictly monotone activations.
//!
//! One outer iteration updates, in order: `W_L`, every `V_{L-1,i}` (one
//! step), then for `j = L-1` down to `2` the weights `W_j` (one step) and
//! every `V_{j-1,i}` (`K_V` steps on the local loss only), and finally `W_1`
//! (`K_W` steps).
//!
//! The step arguments of the `update_*` functions are the multipliers used
//! verbatim in the update rule; [`outer_step`] derives them from the
//! schedule through its [`StepScaling`](crate::StepScaling).

use crate::activation::Activation;
use crate::error::{Block, Error, Result};
use crate::grad;
use crate::init::{init_aux_monotone, init_weights};
use crate::matrix::{axpy, Matrix};
use crate::network::{loss_monotone, output_residuals, LossBreakdown, NetworkShape, NetworkState, TrainingData};
use crate::schedule::TrainSchedule;
use crate::trace::{LossTrace, TraceObserver};

/// Totals above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

pub(crate) fn check_labels(state: &NetworkState, y: &[f64]) -> Result<()> {
    if y.len() != state.shape().n {
        return Err(Error::ShapeMismatch { context: "labels", expected: (state.shape().n, 1), actual: (y.len(), 1) });
    }
    Ok(())
}

pub(crate) fn check_hidden_layer(state: &NetworkState, j: usize) -> Result<()> {
    if j < 2 || j >= state.layers() {
        return Err(Error::InvalidArgument(alloc::format!(
            "hidden layer index must lie in 2..={}, got {j}",
            state.layers() - 1
        )));
    }
    Ok(())
}

/// `W_L ← W_L − η · 2 Σ_i (W_L V_{L-1,i} − y_i) V_{L-1,i}ᵀ`.
pub fn update_output_weights(state: &mut NetworkState, y: &[f64], eta: f64) -> Result<()> {
    check_labels(state, y)?;
    let (w_l, v) = state.output_block_mut();
    let g = grad::output_weights(w_l, v, y);
    w_l.add_scaled(-eta, &g);
    Ok(())
}

/// One step `V_{L-1,i} ← V_{L-1,i} − η · 2 W_Lᵀ (W_L V_{L-1,i} − y_i)` per sample.
///
/// Each residual is multiplied by exactly `1 − 2η‖W_L‖²`.
pub fn update_output_aux(state: &mut NetworkState, y: &[f64], eta: f64) -> Result<()> {
    check_labels(state, y)?;
    let (w_l, v) = state.output_block_mut();
    let res = output_residuals(w_l, v, y);
    let w = w_l.row(0);
    for (i, ri) in res.iter().enumerate() {
        axpy(-2.0 * eta * ri, w, v.row_mut(i));
    }
    Ok(())
}

/// One step `W_j ← W_j − γη ∇_{W_j} Σ_i ‖σ(W_j V_{j-1,i}) − V_{j,i}‖²`, `2 ≤ j ≤ L-1`.
pub fn update_hidden_weights(state: &mut NetworkState, j: usize, eta: f64, gamma: f64, act: Activation) -> Result<()> {
    check_hidden_layer(state, j)?;
    let (w, v_prev, v_next) = state.hidden_weights_mut(j);
    let g = grad::layer_weights(w, v_prev, v_next, act, false);
    w.add_scaled(-gamma * eta, &g);
    Ok(())
}

/// `k_v` steps on `V_{j-1,i}` of the local loss `‖σ(W_j V_{j-1,i}) − V_{j,i}‖²`
/// for a single sample `i`.
pub fn update_hidden_aux_sample(
    state: &mut NetworkState,
    j: usize,
    i: usize,
    eta: f64,
    gamma: f64,
    k_v: usize,
    act: Activation,
) -> Result<()> {
    check_hidden_layer(state, j)?;
    if i >= state.shape().n {
        return Err(Error::InvalidArgument(alloc::format!("sample index {i} out of range")));
    }
    let (w, v_prev, v_next) = state.hidden_block_mut(j);
    let target = v_next.row(i);
    for _ in 0..k_v {
        let g = grad::layer_aux_sample(w, v_prev.row(i), target, act, false);
        axpy(-gamma * eta, &g, v_prev.row_mut(i));
    }
    Ok(())
}

/// [`update_hidden_aux_sample`] for every sample at once.
pub fn update_hidden_aux(
    state: &mut NetworkState,
    j: usize,
    eta: f64,
    gamma: f64,
    k_v: usize,
    act: Activation,
) -> Result<()> {
    check_hidden_layer(state, j)?;
    let (w, v_prev, v_next) = state.hidden_block_mut(j);
    for _ in 0..k_v {
        let g = grad::layer_aux(w, v_prev, v_next, act, false);
        v_prev.add_scaled(-gamma * eta, &g);
    }
    Ok(())
}

/// `k_w` steps `W_1 ← W_1 − γη ∇_{W_1} Σ_i ‖σ(W_1 x_i) − V_{1,i}‖²`.
pub fn update_first_weights(
    state: &mut NetworkState,
    x: &Matrix,
    eta: f64,
    gamma: f64,
    k_w: usize,
    act: Activation,
) -> Result<()> {
    x.expect_shape("data matrix", (state.shape().n, state.shape().d_in))?;
    let (w1, v1) = state.first_block_mut();
    for _ in 0..k_w {
        let g = grad::layer_weights(w1, x, v1, act, false);
        w1.add_scaled(-gamma * eta, &g);
    }
    Ok(())
}

pub(crate) fn guard(m: &Matrix, iteration: usize, block: Block) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, block, loss: f64::NAN })
    }
}

/// Fails when the total is non-finite or above [`DIVERGENCE_THRESHOLD`],
/// blaming the block that owns the largest loss term.
pub(crate) fn check_losses(losses: &LossBreakdown, iteration: usize) -> Result<()> {
    if losses.total.is_finite() && losses.total <= DIVERGENCE_THRESHOLD {
        return Ok(());
    }
    let mut block = Block::OutputAux;
    let mut worst = losses.output;
    for (k, &h) in losses.hidden.iter().enumerate() {
        if !h.is_finite() || h > worst {
            worst = h;
            block = if k == 0 { Block::FirstWeights } else { Block::HiddenWeights(k + 1) };
            if !h.is_finite() {
                break;
            }
        }
    }
    Err(Error::Divergence { iteration, block, loss: losses.total })
}

/// One outer iteration; returns the losses after it.
pub fn outer_step(
    state: &mut NetworkState,
    data: &TrainingData<'_>,
    schedule: &TrainSchedule,
    act: Activation,
    iteration: usize,
) -> Result<LossBreakdown> {
    outer_step_with(state, data, schedule, act, iteration, &mut |_: Block, _: &NetworkState| {})
}

/// [`outer_step`], calling `after_block` once each block has been updated and
/// checked.
pub fn outer_step_with(
    state: &mut NetworkState,
    data: &TrainingData<'_>,
    schedule: &TrainSchedule,
    act: Activation,
    iteration: usize,
    after_block: &mut impl FnMut(Block, &NetworkState),
) -> Result<LossBreakdown> {
    let l = state.layers();
    let s = schedule;
    let scaling = s.scaling;

    let eta = scaling.output_weights(s.eta_w1, state.aux(l - 1))?;
    update_output_weights(state, data.y, eta)?;
    guard(state.weight(l), iteration, Block::OutputWeights)?;
    after_block(Block::OutputWeights, state);

    let eta = scaling.output_aux(s.eta_v, state.weight(l));
    update_output_aux(state, data.y, eta)?;
    guard(state.aux(l - 1), iteration, Block::OutputAux)?;
    after_block(Block::OutputAux, state);

    for j in (2..l).rev() {
        let eta = scaling.hidden_weights(s.eta_w1, s.gamma, state.aux(j - 1), act)?;
        update_hidden_weights(state, j, eta, s.gamma, act)?;
        guard(state.weight(j), iteration, Block::HiddenWeights(j))?;
        after_block(Block::HiddenWeights(j), state);

        let eta = scaling.hidden_aux(s.eta_v, s.gamma, state.weight(j), act, false)?;
        update_hidden_aux(state, j, eta, s.gamma, s.k_v, act)?;
        guard(state.aux(j - 1), iteration, Block::HiddenAux(j - 1))?;
        after_block(Block::HiddenAux(j - 1), state);
    }

    let eta = scaling.first_weights(s.eta_w2, s.gamma, data.x_norm, act.ell());
    update_first_weights(state, data.x, eta, s.gamma, s.k_w, act)?;
    guard(state.weight(1), iteration, Block::FirstWeights)?;
    after_block(Block::FirstWeights, state);

    let losses = loss_monotone(state, data.x, data.y, s.gamma, act)?;
    check_losses(&losses, iteration)?;
    Ok(losses)
}

/// Gaussian weights (SVB per the schedule) and exact forward auxiliaries.
///
/// In strict mode the data matrix must have full row rank.
pub fn initialize(
    data: &TrainingData<'_>,
    shape: &NetworkShape,
    schedule: &TrainSchedule,
    act: Activation,
    seed: u64,
) -> Result<NetworkState> {
    if shape.strict {
        data.require_full_row_rank()?;
    }
    data.x.expect_shape("data matrix", (shape.n, shape.d_in))?;
    let weights = init_weights(shape, seed, schedule.svb)?;
    let aux = init_aux_monotone(&weights, data.x, act)?;
    NetworkState::new(*shape, weights, aux)
}

/// Runs `K` outer iterations from `state`, recording the initial losses as
/// iteration 0.
pub fn run(
    state: &mut NetworkState,
    data: &TrainingData<'_>,
    schedule: &TrainSchedule,
    act: Activation,
    observer: &mut impl TraceObserver,
) -> Result<LossTrace> {
    schedule.validate()?;
    state.check_data(data.x, data.y)?;
    let mut trace = LossTrace::default();
    let initial = loss_monotone(state, data.x, data.y, schedule.gamma, act)?;
    observer.on_iteration(0, state, &initial);
    trace.push(0, initial);
    for k in 1..=schedule.k_outer {
        let losses = outer_step(state, data, schedule, act, k)?;
        observer.on_iteration(k, state, &losses);
        trace.push(k, losses);
    }
    Ok(trace)
}

/// [`initialize`] followed by [`run`].
pub fn train(
    data: &TrainingData<'_>,
    shape: &NetworkShape,
    schedule: &TrainSchedule,
    act: Activation,
    seed: u64,
    observer: &mut impl TraceObserver,
) -> Result<(NetworkState, LossTrace)> {
    let mut state = initialize(data, shape, schedule, act, seed)?;
    let trace = run(&mut state, data, schedule, act, observer)?;
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn s(v: f64) -> Matrix {
        Matrix::from_rows(&[[v]])
    }

    fn scalar_state(layers: usize, w: &[f64], v: &[f64]) -> NetworkState {
        let shape = NetworkShape::new(1, 1, layers, 1).unwrap();
        NetworkState::new(shape, w.iter().map(|&a| s(a)).collect(), v.iter().map(|&a| s(a)).collect()).unwrap()
    }

    #[test]
    fn scalar_output_updates() {
        let mut st = scalar_state(2, &[1.0, 1.0], &[1.0]);
        update_output_weights(&mut st, &[0.0], 0.25).unwrap();
        assert_eq!(st.weight(2)[(0, 0)], 0.5);

        let mut st = scalar_state(2, &[1.0, 1.0], &[1.0]);
        update_output_aux(&mut st, &[0.0], 0.25).unwrap();
        assert_eq!(st.aux(1)[(0, 0)], 0.5);
    }

    #[test]
    fn scalar_hidden_updates() {
        let mut st = scalar_state(3, &[1.0, 2.0, 1.0], &[1.0, 1.0]);
        update_hidden_weights(&mut st, 2, 0.1, 1.0, Activation::Identity).unwrap();
        assert!((st.weight(2)[(0, 0)] - 1.8).abs() < 1e-15);

        let mut st = scalar_state(3, &[1.0, 1.0, 1.0], &[1.0, 2.0]);
        update_hidden_aux_sample(&mut st, 2, 0, 0.1, 1.0, 1, Activation::LeakyRelu(0.5)).unwrap();
        assert!((st.aux(1)[(0, 0)] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_is_a_fixed_point() {
        let mut st = scalar_state(3, &[2.0, 0.5, 4.0], &[2.0, 1.0]);
        let x = s(1.0);
        let y = [4.0];
        let before = st.clone();
        update_output_weights(&mut st, &y, 0.3).unwrap();
        update_output_aux(&mut st, &y, 0.3).unwrap();
        update_hidden_weights(&mut st, 2, 0.3, 1.0, Activation::LeakyRelu(0.5)).unwrap();
        update_hidden_aux(&mut st, 2, 0.3, 1.0, 5, Activation::LeakyRelu(0.5)).unwrap();
        update_first_weights(&mut st, &x, 0.3, 1.0, 5, Activation::LeakyRelu(0.5)).unwrap();
        assert_eq!(st, before);
    }

    #[test]
    fn rejects_bad_layer_index() {
        let mut st = scalar_state(3, &[1.0, 1.0, 1.0], &[1.0, 1.0]);
        assert!(update_hidden_weights(&mut st, 1, 0.1, 1.0, Activation::Identity).is_err());
        assert!(update_hidden_weights(&mut st, 3, 0.1, 1.0, Activation::Identity).is_err());
        assert!(update_output_aux(&mut st, &[1.0, 2.0], 0.1).is_err());
    }

    #[test]
    fn divergence_names_the_worst_block() {
        let losses = LossBreakdown { total: 2e12, output: 1.0, hidden: vec![1.0, 2e12], gamma: 1.0 };
        assert_eq!(
            check_losses(&losses, 7).unwrap_err(),
            Error::Divergence { iteration: 7, block: Block::HiddenWeights(2), loss: 2e12 }
        );
    }
}
