//! Central finite-difference checks of the analytic gradients.
//!
//! Each case is a small random instance. The oracle evaluates the loss with
//! plain loops, independently of the matrix kernels the gradients use, and
//! relu-type activations are only probed away from their kink.

use std::fmt;

use bcd_core::matrix::GaussianSampler;
use bcd_core::{grad, Activation, Matrix};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-6;
/// Cases with any pre-activation closer than this to 0 are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;
const MAX_REDRAWS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradKind {
    OutputWeights,
    OutputAux,
    HiddenWeights,
    HiddenWeightsSkip,
    HiddenAux,
    HiddenAuxSkip,
    FirstWeights,
    FirstWeightsLinear,
}

impl GradKind {
    pub const ALL: [GradKind; 8] = [
        GradKind::OutputWeights,
        GradKind::OutputAux,
        GradKind::HiddenWeights,
        GradKind::HiddenWeightsSkip,
        GradKind::HiddenAux,
        GradKind::HiddenAuxSkip,
        GradKind::FirstWeights,
        GradKind::FirstWeightsLinear,
    ];

    fn skip(self) -> bool {
        matches!(self, GradKind::HiddenWeightsSkip | GradKind::HiddenAuxSkip)
    }

    fn wrt_weights(self) -> bool {
        !matches!(self, GradKind::OutputAux | GradKind::HiddenAux | GradKind::HiddenAuxSkip)
    }
}

impl fmt::Display for GradKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradKind::OutputWeights => "output_w",
            GradKind::OutputAux => "output_v",
            GradKind::HiddenWeights => "hidden_w",
            GradKind::HiddenWeightsSkip => "hidden_w_skip",
            GradKind::HiddenAux => "hidden_v",
            GradKind::HiddenAuxSkip => "hidden_v_skip",
            GradKind::FirstWeights => "first_w",
            GradKind::FirstWeightsLinear => "first_w_linear",
        })
    }
}

/// One random instance. For the output kinds `w` is the `1 × r` row and
/// `v` the `n × r` auxiliaries; for layer kinds `w` is `m × k`, `v` the
/// `n × k` inputs and `target` the `n × m` next-layer auxiliaries.
#[derive(Clone, Debug)]
pub struct Case {
    pub kind: GradKind,
    pub act: Activation,
    pub w: Matrix,
    pub v: Matrix,
    pub target: Matrix,
    pub y: Vec<f64>,
}

impl Case {
    /// The loss with plain loops.
    pub fn loss(&self) -> f64 {
        let (w, v) = (&self.w, &self.v);
        let mut sum = 0.0;
        match self.kind {
            GradKind::OutputWeights | GradKind::OutputAux => {
                for i in 0..v.rows() {
                    let mut p = 0.0;
                    for q in 0..v.cols() {
                        p += w[(0, q)] * v[(i, q)];
                    }
                    sum += (p - self.y[i]) * (p - self.y[i]);
                }
            }
            _ => {
                for i in 0..v.rows() {
                    for p in 0..w.rows() {
                        let mut z = 0.0;
                        for q in 0..w.cols() {
                            z += w[(p, q)] * v[(i, q)];
                        }
                        let mut e = self.act.apply(z) - self.target[(i, p)];
                        if self.kind.skip() {
                            e += v[(i, p)];
                        }
                        sum += e * e;
                    }
                }
            }
        }
        sum
    }

    fn min_preactivation(&self) -> f64 {
        if matches!(self.kind, GradKind::OutputWeights | GradKind::OutputAux) {
            return f64::INFINITY;
        }
        self.v.matmul_t(&self.w).as_slice().iter().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    fn param_mut(&mut self) -> &mut Matrix {
        if self.kind.wrt_weights() {
            &mut self.w
        } else {
            &mut self.v
        }
    }

    /// Central differences with step [`STEP`].
    pub fn numeric_gradient(&self) -> Matrix {
        let mut probe = self.clone();
        let (rows, cols) = probe.param_mut().shape();
        let mut g = Matrix::zeros(rows, cols);
        for a in 0..rows {
            for b in 0..cols {
                let orig = probe.param_mut()[(a, b)];
                probe.param_mut()[(a, b)] = orig + STEP;
                let plus = probe.loss();
                probe.param_mut()[(a, b)] = orig - STEP;
                let minus = probe.loss();
                probe.param_mut()[(a, b)] = orig;
                g[(a, b)] = (plus - minus) / (2.0 * STEP);
            }
        }
        g
    }
}

/// The library gradient for a case.
pub fn analytic_gradient(c: &Case) -> Matrix {
    let skip = c.kind.skip();
    match c.kind {
        GradKind::OutputWeights => grad::output_weights(&c.w, &c.v, &c.y),
        GradKind::OutputAux => grad::output_aux(&c.w, &c.v, &c.y),
        GradKind::HiddenWeights
        | GradKind::HiddenWeightsSkip
        | GradKind::FirstWeights
        | GradKind::FirstWeightsLinear => grad::layer_weights(&c.w, &c.v, &c.target, c.act, skip),
        GradKind::HiddenAux | GradKind::HiddenAuxSkip => grad::layer_aux(&c.w, &c.v, &c.target, c.act, skip),
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let mut d = a.clone();
    d.add_scaled(-1.0, b);
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        0.0
    } else {
        d.frobenius_norm() / scale
    }
}

fn activation_for(kind: GradKind, trial: usize) -> Activation {
    if kind == GradKind::FirstWeightsLinear {
        return Activation::Identity;
    }
    match trial % 4 {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu(0.5),
        2 => Activation::LeakyRelu(0.1 + 0.2 * (trial % 5) as f64),
        _ => Activation::Identity,
    }
}

/// A random case for `trial`; dimensions cycle with the trial index.
pub fn random_case(kind: GradKind, trial: usize, rng: &mut GaussianSampler) -> Case {
    let n = 1 + trial % 4;
    let r = 1 + (trial / 4) % 5;
    let d = 1 + (trial / 3) % 6;
    let act = activation_for(kind, trial);
    for _ in 0..MAX_REDRAWS {
        let (w, v, target) = match kind {
            GradKind::OutputWeights | GradKind::OutputAux => {
                (rng.matrix(1, r, 1.0), rng.matrix(n, r, 1.0), Matrix::zeros(0, 0))
            }
            GradKind::FirstWeights | GradKind::FirstWeightsLinear => {
                (rng.matrix(r, d, 1.0), rng.matrix(n, d, 1.0), rng.matrix(n, r, 1.0))
            }
            _ => (rng.matrix(r, r, 1.0), rng.matrix(n, r, 1.0), rng.matrix(n, r, 1.0)),
        };
        let y = (0..n).map(|_| rng.standard_normal()).collect();
        let case = Case { kind, act, w, v, target, y };
        if act == Activation::Identity || case.min_preactivation() >= KINK_MARGIN {
            return case;
        }
    }
    unreachable!("no kink-free case in {MAX_REDRAWS} draws")
}

#[derive(Clone, Debug)]
pub struct KindReport {
    pub kind: GradKind,
    pub trials: usize,
    pub max_rel_err: f64,
    pub worst_trial: usize,
}

impl KindReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

#[derive(Clone, Debug)]
pub struct GradReport {
    pub seed: u64,
    pub kinds: Vec<KindReport>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.kinds.iter().all(KindReport::passed)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.kinds.iter().map(|k| k.max_rel_err).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in &self.kinds {
            writeln!(
                f,
                "{:<15} trials={:<4} max_rel_err={:.3e} worst_trial={:<4} {}",
                k.kind.to_string(),
                k.trials,
                k.max_rel_err,
                k.worst_trial,
                if k.passed() { "pass" } else { "FAIL" }
            )?;
        }
        write!(f, "overall max_rel_err={:.3e} tolerance={TOLERANCE:e}", self.max_rel_err())
    }
}

pub fn run_grad_check(seed: u64, trials: usize) -> GradReport {
    run_grad_check_with(seed, trials, analytic_gradient)
}

/// As [`run_grad_check`] with a substitute for the library gradients.
pub fn run_grad_check_with(seed: u64, trials: usize, analytic: impl Fn(&Case) -> Matrix) -> GradReport {
    let kinds = GradKind::ALL
        .iter()
        .enumerate()
        .map(|(stream, &kind)| {
            let mut rng = GaussianSampler::with_stream(seed, stream as u64);
            let mut report = KindReport { kind, trials, max_rel_err: 0.0, worst_trial: 0 };
            for t in 0..trials {
                let case = random_case(kind, t, &mut rng);
                let err = relative_error(&analytic(&case), &case.numeric_gradient());
                if !(err <= report.max_rel_err) {
                    report.max_rel_err = err;
                    report.worst_trial = t;
                }
            }
            report
        })
        .collect();
    GradReport { seed, kinds }
}
