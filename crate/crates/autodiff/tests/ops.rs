use proptest::prelude::*;
use radfed_autodiff::{AutodiffError, Tape, Tensor};

fn t(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

#[test]
fn conv2d_zero_input_gives_zero_output() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(vec![1, 1, 3, 3]).unwrap());
    let k = tape.input(t(&[2, 1, 2, 2], vec![0.3, -1.0, 2.0, 0.5, 1.0, 1.0, 1.0, 1.0]));
    let b = tape.input(Tensor::zeros(vec![2]).unwrap());
    let y = tape.conv2d(x, k, b, 1, 0).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 2, 2, 2]);
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv2d_identity_kernel_copies_input() {
    let data: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
    let mut tape = Tape::new();
    let x = tape.input(t(&[1, 1, 3, 3], data.clone()));
    let k = tape.input(t(&[1, 1, 1, 1], vec![1.0]));
    let b = tape.input(Tensor::zeros(vec![1]).unwrap());
    let y = tape.conv2d(x, k, b, 1, 0).unwrap();
    assert_eq!(tape.value(y).data(), &data[..]);
}

#[test]
fn conv2d_reports_channel_mismatch() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(vec![1, 2, 4, 4]).unwrap());
    let k = tape.input(Tensor::zeros(vec![1, 3, 3, 3]).unwrap());
    let b = tape.input(Tensor::zeros(vec![1]).unwrap());
    let err = tape.conv2d(x, k, b, 1, 0).unwrap_err();
    assert!(matches!(err, AutodiffError::DimensionMismatch { op: "conv2d", .. }), "{err}");
}

#[test]
fn conv2d_rejects_empty_output() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(vec![1, 1, 2, 2]).unwrap());
    let k = tape.input(Tensor::zeros(vec![1, 1, 3, 3]).unwrap());
    let b = tape.input(Tensor::zeros(vec![1]).unwrap());
    let err = tape.conv2d(x, k, b, 1, 0).unwrap_err();
    assert!(matches!(err, AutodiffError::Configuration { .. }), "{err}");
}

#[test]
fn relu_examples() {
    let mut tape = Tape::new();
    let x = tape.input(t(&[3], vec![-1.0, 0.0, 2.0]));
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);

    let mut tape = Tape::new();
    let x = tape.input(t(&[4], vec![0.1, 2.0, 3.5, 1e-9]));
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), tape.value(x).data());
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.input(t(&[2], vec![0.0, 1.0]));
    let y = tape.relu(x);
    let loss = tape.sum(y);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.wrt(x).unwrap(), &[0.0, 1.0]);
}

#[test]
fn linear_identity_and_bias_only() {
    let x_data = vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0];
    let mut tape = Tape::new();
    let x = tape.input(t(&[2, 3], x_data.clone()));
    let w = tape.input(t(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    let b = tape.input(Tensor::zeros(vec![3]).unwrap());
    let y = tape.linear(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &x_data[..]);

    let mut tape = Tape::new();
    let x = tape.input(t(&[2, 3], x_data));
    let w = tape.input(Tensor::zeros(vec![2, 3]).unwrap());
    let b = tape.input(t(&[2], vec![0.7, -0.2]));
    let y = tape.linear(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[0.7, -0.2, 0.7, -0.2]);
}

#[test]
fn linear_rejects_inner_mismatch() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(vec![2, 3]).unwrap());
    let w = tape.input(Tensor::zeros(vec![2, 4]).unwrap());
    let b = tape.input(Tensor::zeros(vec![2]).unwrap());
    assert!(tape.linear(x, w, b).is_err());
}

#[test]
fn global_avg_pool_examples() {
    let mut tape = Tape::new();
    let x = tape.input(t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let y = tape.global_avg_pool(x).unwrap();
    assert_eq!(tape.value(y).data(), &[2.5]);

    let mut tape = Tape::new();
    let x = tape.input(t(&[1, 2, 3, 3], [vec![-0.75; 9], vec![4.0; 9]].concat()));
    let y = tape.global_avg_pool(x).unwrap();
    assert_eq!(tape.value(y).data(), &[-0.75, 4.0]);
}

#[test]
fn cross_entropy_uniform_logits_is_ln2() {
    let mut tape = Tape::new();
    let z = tape.input(t(&[1, 2], vec![0.0, 0.0]));
    let loss = tape.softmax_cross_entropy(z, &[1]).unwrap();
    assert!((tape.value(loss).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn cross_entropy_saturated_correct_class() {
    let mut tape = Tape::new();
    let z = tape.input(t(&[1, 2], vec![-50.0, 50.0]));
    let loss = tape.softmax_cross_entropy(z, &[1]).unwrap();
    let v = tape.value(loss).data()[0];
    assert!(v.is_finite() && (0.0..=1e-20).contains(&v), "{v}");
    let grads = tape.backward(loss).unwrap();
    assert!(grads.wrt(z).unwrap().iter().all(|g| g.is_finite()));
}

#[test]
fn cross_entropy_matches_binary_form() {
    // -(l ln f + (1-l) ln(1-f)) with f the softmax probability of class 1.
    let logits: [f64; 8] = [0.3, -1.2, 2.0, 0.5, -0.7, -0.1, 1.9, 2.4];
    let labels = [1, 0, 0, 1];
    let mut expected: f64 = 0.0;
    for (row, &l) in logits.chunks(2).zip(&labels) {
        let f = row[1].exp() / (row[0].exp() + row[1].exp());
        let l = l as f64;
        expected -= l * f.ln() + (1.0 - l) * (1.0 - f).ln();
    }
    expected /= 4.0;
    let mut tape = Tape::new();
    let z = tape.input(t(&[4, 2], logits.to_vec()));
    let loss = tape.softmax_cross_entropy(z, &labels).unwrap();
    assert!((tape.value(loss).data()[0] - expected).abs() < 1e-12);
}

#[test]
fn cross_entropy_rejects_bad_label() {
    let mut tape = Tape::new();
    let z = tape.input(t(&[2, 2], vec![0.0; 4]));
    let err = tape.softmax_cross_entropy(z, &[0, 2]).unwrap_err();
    assert_eq!(err, AutodiffError::InvalidLabel { row: 1, label: 2, classes: 2 });
}

#[test]
fn residual_add_sends_same_gradient_to_both_branches() {
    let mut tape = Tape::new();
    let a = tape.input(t(&[3], vec![1.0, 2.0, 3.0]));
    let b = tape.input(t(&[3], vec![-1.0, 0.5, 0.0]));
    let y = tape.add(a, b).unwrap();
    let loss = tape.weighted_sum(y, vec![0.2, -3.0, 7.0]).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.wrt(a).unwrap(), grads.wrt(b).unwrap());
    assert_eq!(grads.wrt(a).unwrap(), &[0.2, -3.0, 7.0]);
}

#[test]
fn inference_tape_refuses_backward() {
    let mut tape = Tape::inference();
    let x = tape.input(t(&[1], vec![1.0]));
    let y = tape.sum(x);
    assert!(tape.backward(y).is_err());
}

proptest! {
    #[test]
    fn cross_entropy_is_non_negative(z in proptest::collection::vec(-30.0f64..30.0, 8), labels in proptest::collection::vec(0usize..2, 4)) {
        let mut tape = Tape::new();
        let zv = tape.input(t(&[4, 2], z));
        let loss = tape.softmax_cross_entropy(zv, &labels).unwrap();
        prop_assert!(tape.value(loss).data()[0] >= 0.0);
    }

    #[test]
    fn conv_forward_is_deterministic(x in proptest::collection::vec(-1.0f64..1.0, 2 * 16), k in proptest::collection::vec(-1.0f64..1.0, 3 * 2 * 9)) {
        let run = || {
            let mut tape = Tape::new();
            let xv = tape.input(t(&[1, 2, 4, 4], x.clone()));
            let kv = tape.input(t(&[3, 2, 3, 3], k.clone()));
            let bv = tape.input(Tensor::zeros(vec![3]).unwrap());
            let y = tape.conv2d(xv, kv, bv, 1, 1).unwrap();
            tape.value(y).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
