use radfed_autodiff::{adam_step, AdamConfig, AdamState, ParamId, Parameter, Role, Tensor};

/// Independent scalar Adam recurrence.
fn scalar_adam(mut p: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
    let (mut m, mut v) = (0.0, 0.0);
    for (i, &g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        p -= lr * mh / (vh.sqrt() + eps);
    }
    p
}

#[test]
fn two_steps_match_scalar_replay() {
    let cfg = AdamConfig::default();
    let mut t = Tensor::new(vec![1], vec![0.3]).unwrap();
    t.set_grad(vec![0.7]).unwrap();
    let mut params = vec![Parameter::new(ParamId(0), Role::Head, t)];
    let mut state = AdamState::new(&params, cfg);
    adam_step(&mut params, &mut state).unwrap();
    adam_step(&mut params, &mut state).unwrap();
    let expected = scalar_adam(0.3, &[0.7, 0.7], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    assert!((params[0].tensor.data()[0] - expected).abs() < 1e-12);
    assert_eq!(state.step, 2);
}

#[test]
fn misaligned_state_is_rejected() {
    let mut a = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
    a.set_grad(vec![1.0, 1.0]).unwrap();
    let mut params = vec![Parameter::new(ParamId(0), Role::Base, a)];
    let mut state = AdamState::new(&[], AdamConfig::default());
    assert!(adam_step(&mut params, &mut state).is_err());
}
