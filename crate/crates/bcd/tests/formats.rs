use bcd::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use bcd::data::{gen_teacher_data, gen_teacher_split, read_dataset, write_dataset, Teacher, TeacherConfig};
use bcd::gradcheck::{analytic_gradient, run_grad_check, run_grad_check_with, GradKind};
use bcd_core::matrix::GaussianSampler;
use bcd_core::{Activation, Matrix};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn datasets_round_trip_bit_exactly(n in 1usize..12, d in 1usize..12, seed in 0u64..1000, relu in any::<bool>()) {
        let act = if relu { Activation::Relu } else { Activation::LeakyRelu(0.5) };
        let data = gen_teacher_data(n, TeacherConfig::new(d, 3, act, seed)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        prop_assert_eq!(back.x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        data.x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        data.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in 0u64..1000, layers in 2usize..5) {
        let mut rng = GaussianSampler::new(seed);
        let (d, r) = (5, 3);
        let mut weights = vec![rng.matrix(r, d, 1.0)];
        weights.extend((2..layers).map(|_| rng.matrix(r, r, 1.0)));
        weights.push(rng.matrix(1, r, 1.0));
        let ckpt = Checkpoint { d_in: d, r, activation: Activation::LeakyRelu(0.25), skip: seed % 2 == 0, weights };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        write_checkpoint(&path, &ckpt).unwrap();
        prop_assert_eq!(read_checkpoint(&path).unwrap(), ckpt);
    }
}

#[test]
fn labels_follow_the_stored_teacher() {
    let cfg = TeacherConfig::new(7, 4, Activation::LeakyRelu(0.5), 3);
    let teacher = Teacher::new(cfg).unwrap();
    let (train, test) = gen_teacher_split(6, 5, cfg).unwrap();
    let test = test.unwrap();
    assert_eq!(teacher.labels(&train.x), train.y);
    assert_eq!(teacher.labels(&test.x), test.y);
    assert_ne!(train.x.row(0), test.x.row(0));
    // The extra test draw leaves the training set untouched.
    assert_eq!(gen_teacher_data(6, cfg).unwrap().x, train.x);
}

#[test]
fn zero_teacher_gives_zero_labels() {
    let cfg = TeacherConfig { scale: 0.0, ..TeacherConfig::new(4, 2, Activation::Relu, 1) };
    assert!(gen_teacher_data(5, cfg).unwrap().y.iter().all(|&y| y == 0.0));
}

#[test]
fn corrupt_inputs_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "f0,f1,y\n1,2,3\n4,oops,6\n").unwrap();
    let err = read_dataset(&path).unwrap_err().to_string();
    assert!(err.contains("oops") || err.contains("line 3"), "{err}");

    let ck = dir.path().join("bad.ckpt");
    std::fs::write(&ck, "bcd-checkpoint 1\nd_in 2\n").unwrap();
    assert!(read_checkpoint(&ck).is_err());
}

#[test]
fn grad_check_passes() {
    let report = run_grad_check(0, 10);
    assert!(report.passed(), "{report}");
    assert_eq!(report.kinds.len(), GradKind::ALL.len());
}

#[test]
fn sign_flipped_gradient_is_caught() {
    let report = run_grad_check_with(0, 3, |c| {
        let mut g: Matrix = analytic_gradient(c);
        if c.kind == GradKind::HiddenAuxSkip {
            g.scale(-1.0);
        }
        g
    });
    assert!(!report.passed());
    let failing: Vec<_> = report.kinds.iter().filter(|k| !k.passed()).map(|k| k.kind).collect();
    assert_eq!(failing, vec![GradKind::HiddenAuxSkip]);
}

#[test]
fn dropped_skip_term_is_caught() {
    let report = run_grad_check_with(1, 3, |c| match c.kind {
        GradKind::HiddenWeightsSkip => bcd_core::grad::layer_weights(&c.w, &c.v, &c.target, c.act, false),
        _ => analytic_gradient(c),
    });
    let failing: Vec<_> = report.kinds.iter().filter(|k| !k.passed()).map(|k| k.kind).collect();
    assert_eq!(failing, vec![GradKind::HiddenWeightsSkip]);
}
