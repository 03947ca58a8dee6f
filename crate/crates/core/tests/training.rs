use bcd_core::matrix::{gaussian_matrix, operator_norm, singular_values, GaussianSampler, Matrix};
use bcd_core::network::TrainingData;
use bcd_core::schedule::{derive_monotone, derive_relu, measure_stats};
use bcd_core::{
    monotone, relu, Activation, Block, Error, LossBreakdown, NetworkShape, NetworkState, StepScaling, SvbBounds,
    TrainSchedule,
};

fn instance(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = GaussianSampler::new(seed);
    let x = rng.matrix(n, d, 1.0);
    let y = (0..n).map(|_| rng.standard_normal()).collect();
    (x, y)
}

fn init_only(svb: Option<SvbBounds>) -> TrainSchedule {
    TrainSchedule {
        eta_v: 1.0,
        eta_w1: 1.0,
        eta_w2: 1.0,
        k_outer: 1,
        k_v: 1,
        k_w: 1,
        gamma: 1.0,
        svb,
        scaling: StepScaling::Raw,
    }
}

fn explicit(k: usize) -> TrainSchedule {
    TrainSchedule {
        k_outer: k,
        k_v: 20,
        k_w: 20,
        scaling: StepScaling::Smoothness,
        ..init_only(Some(SvbBounds::MONOTONE))
    }
}

#[test]
fn exact_init_has_zero_hidden_losses() {
    let (x, y) = instance(5, 8, 1);
    let data = TrainingData::new(&x, &y).unwrap();
    let shape = NetworkShape::new_strict(8, 4, 4, 5).unwrap();
    let (_, trace) = monotone::train(&data, &shape, &explicit(1), Activation::LeakyRelu(0.5), 3, &mut ()).unwrap();
    assert!(trace.first().unwrap().hidden.iter().all(|&h| h == 0.0));
}

#[test]
fn theorem_schedule_descends_and_keeps_singular_values() {
    let (n, d, r, l) = (4, 8, 3, 3);
    let act = Activation::LeakyRelu(0.5);
    let (x, y) = instance(n, d, 5);
    let data = TrainingData::new(&x, &y).unwrap();
    let shape = NetworkShape::new_strict(d, r, l, n).unwrap();
    let mut state = monotone::initialize(&data, &shape, &init_only(Some(SvbBounds::MONOTONE)), act, 2).unwrap();
    let stats = measure_stats(&state, &x, &y, act, 1.0, 1e-2).unwrap();
    let schedule = derive_monotone(&stats).unwrap().schedule;

    let mut probe = |_: usize, st: &NetworkState, _: &LossBreakdown| {
        for j in 2..=l {
            let sv = singular_values(st.weight(j)).unwrap();
            assert!(sv[0] <= 2.0 && *sv.last().unwrap() >= 0.5, "layer {j}: {sv:?}");
        }
    };
    let trace = monotone::run(&mut state, &data, &schedule, act, &mut probe).unwrap();
    assert!(trace.is_non_increasing(1e-12), "max uptick {}", trace.max_uptick());
    assert!(trace.last().unwrap().total <= 1e-2);
}

#[test]
fn strict_mode_refuses_rank_deficient_data() {
    let mut x = gaussian_matrix(3, 6, 1.0, 4).unwrap();
    let copy = x.row(0).to_vec();
    x.row_mut(2).copy_from_slice(&copy);
    let y = vec![0.0; 3];
    let data = TrainingData::new(&x, &y).unwrap();
    let shape = NetworkShape::new_strict(6, 2, 3, 3).unwrap();
    let err = monotone::initialize(&data, &shape, &init_only(None), Activation::Identity, 1).unwrap_err();
    assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
}

#[test]
fn oversized_steps_abort_with_divergence() {
    let (x, y) = instance(6, 10, 2);
    let y: Vec<f64> = y.iter().map(|v| v * 1e3).collect();
    let data = TrainingData::new(&x, &y).unwrap();
    let shape = NetworkShape::new(10, 4, 3, 6).unwrap();
    let schedule = TrainSchedule {
        eta_v: 50.0,
        eta_w1: 50.0,
        eta_w2: 50.0,
        k_outer: 200,
        scaling: StepScaling::Raw,
        ..explicit(200)
    };
    let err = monotone::train(&data, &shape, &schedule, Activation::LeakyRelu(0.5), 1, &mut ()).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
}

#[test]
fn relu_keeps_aux_nonnegative_and_output_row_fixed() {
    let (n, d, r, l) = (6, 12, 4, 4);
    let (x, y) = instance(n, d, 8);
    let data = TrainingData::new(&x, &y).unwrap();
    let shape = NetworkShape::new_strict(d, r, l, n).unwrap();
    let mut init = relu::initialize_relu(&data, &shape, &init_only(Some(SvbBounds::RELU)), 4).unwrap();
    let stats = measure_stats(&init.state, &x, &y, Activation::Relu, 1.0, 1e-3).unwrap();
    let schedule = TrainSchedule { k_outer: 15, ..derive_relu(&stats).unwrap().schedule };
    let w_l = init.state.weight(l).clone();

    for k in 1..=schedule.k_outer {
        relu::outer_step_relu_with(&mut init.state, &data, &schedule, k, &mut |block: Block, st: &NetworkState| {
            if let Block::OutputAux | Block::HiddenAux(_) = block {
                for v in st.aux_layers() {
                    assert!(v.as_slice().iter().all(|&e| e >= 0.0), "negative aux after {block}");
                }
            }
        })
        .unwrap();
        for j in 2..l {
            assert!(operator_norm(init.state.weight(j)).unwrap() <= 1.0 / 3.0);
        }
    }
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&w_l), bits(init.state.weight(l)));
}

#[test]
fn relu_init_redraws_until_the_output_row_has_both_signs() {
    let (x, y) = instance(3, 6, 1);
    let data = TrainingData::new(&x, &y).unwrap();
    // With r = 1 the row is a single entry, which can never have both signs.
    let shape = NetworkShape::new(6, 1, 3, 3).unwrap();
    let err = relu::initialize_relu(&data, &shape, &init_only(Some(SvbBounds::RELU)), 0).unwrap_err();
    assert!(matches!(err, Error::MixedSignUnavailable { .. }));

    let shape = NetworkShape::new(6, 2, 3, 3).unwrap();
    let init = relu::initialize_relu(&data, &shape, &init_only(Some(SvbBounds::RELU)), 0).unwrap();
    assert_eq!(init.seed_used, init.redraws as u64);
    let w = init.state.weight(3).row(0);
    assert!(w.iter().any(|&v| v > 0.0) && w.iter().any(|&v| v < 0.0));
}

#[test]
fn runs_are_bit_reproducible() {
    let (x, y) = instance(5, 9, 3);
    let data = TrainingData::new(&x, &y).unwrap();
    let shape = NetworkShape::new(9, 3, 3, 5).unwrap();
    let run = || monotone::train(&data, &shape, &explicit(5), Activation::LeakyRelu(0.5), 9, &mut ()).unwrap();
    let ((a, ta), (b, tb)) = (run(), run());
    assert_eq!(ta, tb);
    for (p, q) in a.weights().iter().zip(b.weights()) {
        assert!(p.as_slice().iter().zip(q.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}
