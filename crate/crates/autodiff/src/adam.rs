use crate::{AutodiffError, Parameter, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl AdamState {
    pub fn new(params: &[Parameter], config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self {
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            learning_rate: config.learning_rate,
        }
    }
}

/// One bias-corrected Adam update over every parameter. Gradients are left
/// in place; clearing them is the caller's job.
pub fn adam_step(params: &mut [Parameter], state: &mut AdamState) -> Result<()> {
    if params.len() != state.first_moment.len() || params.len() != state.second_moment.len() {
        return Err(AutodiffError::StateMismatch(format!(
            "{} parameters but {} moment slots",
            params.len(),
            state.first_moment.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.tensor.grad().is_none() {
            return Err(AutodiffError::MissingGradient(p.id().0));
        }
        if state.first_moment[i].len() != p.len() || state.second_moment[i].len() != p.len() {
            return Err(AutodiffError::StateMismatch(format!(
                "parameter {} has {} values, moments have {}",
                p.id(),
                p.len(),
                state.first_moment[i].len()
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;

    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let (data, grad) = p.tensor.split_mut();
        let grad = grad.expect("checked above");
        for (((w, &g), m), v) in data.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ParamId, Role, Tensor};

    fn scalar_param(value: f64, grad: Option<f64>) -> Parameter {
        let mut t = Tensor::new(vec![1], vec![value]).unwrap();
        if let Some(g) = grad {
            t.set_grad(vec![g]).unwrap();
        }
        Parameter::new(ParamId(0), Role::Base, t)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![scalar_param(0.25, Some(0.0))];
        let mut state = AdamState::new(&params, AdamConfig::default());
        adam_step(&mut params, &mut state).unwrap();
        assert_eq!(params[0].tensor.data(), &[0.25]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps).
        let mut params = vec![scalar_param(0.0, Some(1.0))];
        let mut state = AdamState::new(&params, AdamConfig::default());
        adam_step(&mut params, &mut state).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((params[0].tensor.data()[0] - expected).abs() < 1e-15);
        assert!((params[0].tensor.data()[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut params = vec![scalar_param(0.0, None)];
        let mut state = AdamState::new(&params, AdamConfig::default());
        let err = adam_step(&mut params, &mut state).unwrap_err();
        assert_eq!(err, AutodiffError::MissingGradient(0));
        assert_eq!(state.step, 0);
    }

    #[test]
    fn gradients_survive_the_step() {
        let mut params = vec![scalar_param(1.0, Some(0.5))];
        let mut state = AdamState::new(&params, AdamConfig::default());
        adam_step(&mut params, &mut state).unwrap();
        assert_eq!(params[0].tensor.grad(), Some(&[0.5][..]));
    }
}
