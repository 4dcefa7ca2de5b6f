use super::{ParamStore, Parameter};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 1e-3,
            rho: 0.9,
            epsilon: 1e-8,
        }
    }
}

/// Running mean of squared gradients for one parameter.
#[derive(Clone, Debug)]
pub struct RmsPropState {
    pub accum: Vec<f64>,
    pub rho: f64,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl RmsPropState {
    pub fn new(len: usize, config: RmsPropConfig) -> Self {
        RmsPropState {
            accum: vec![0.0; len],
            rho: config.rho,
            learning_rate: config.learning_rate,
            epsilon: config.epsilon,
        }
    }
}

/// `s ← ρs + (1−ρ)g²; θ ← θ − α g / (√s + ε)`, then clears the gradient.
pub fn rmsprop_step(param: &mut Parameter, state: &mut RmsPropState) {
    let (rho, lr, eps) = (state.rho, state.learning_rate, state.epsilon);
    let values = param.value.data_mut();
    let grads = param.grad.data_mut();
    for ((theta, g), s) in values
        .iter_mut()
        .zip(grads.iter_mut())
        .zip(state.accum.iter_mut())
    {
        *s = rho * *s + (1.0 - rho) * *g * *g;
        *theta -= lr * *g / (s.sqrt() + eps);
        *g = 0.0;
    }
}

/// RMSprop over every parameter of a store.
#[derive(Clone, Debug)]
pub struct RmsProp {
    config: RmsPropConfig,
    states: Vec<RmsPropState>,
}

impl RmsProp {
    pub fn new(store: &ParamStore, config: RmsPropConfig) -> Self {
        let states = store
            .iter()
            .map(|p| RmsPropState::new(p.value.len(), config))
            .collect();
        RmsProp { config, states }
    }

    pub fn config(&self) -> RmsPropConfig {
        self.config
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(store.len(), self.states.len(), "optimizer layout");
        for (p, s) in store.iter_mut().zip(self.states.iter_mut()) {
            rmsprop_step(p, s);
        }
    }

    pub fn states(&self) -> &[RmsPropState] {
        &self.states
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;
    use approx::assert_abs_diff_eq;

    fn scalar_param(theta: f64, g: f64) -> Parameter {
        let mut p = Parameter::new("theta", Tensor::vector(vec![theta]));
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn zero_gradient_leaves_theta_and_decays_state() {
        let mut p = scalar_param(2.0, 0.0);
        let mut s = RmsPropState::new(1, RmsPropConfig::default());
        s.accum[0] = 0.5;
        rmsprop_step(&mut p, &mut s);
        assert_eq!(p.value.data()[0], 2.0);
        assert_abs_diff_eq!(s.accum[0], 0.45, epsilon = 1e-15);
    }

    #[test]
    fn one_step_from_fresh_state() {
        let mut p = scalar_param(0.0, 1.0);
        let cfg = RmsPropConfig {
            learning_rate: 0.01,
            rho: 0.9,
            epsilon: 1e-8,
        };
        let mut s = RmsPropState::new(1, cfg);
        rmsprop_step(&mut p, &mut s);
        assert_abs_diff_eq!(s.accum[0], 0.1, epsilon = 1e-15);
        let expected = 0.01 / (0.1f64.sqrt() + 1e-8);
        assert_abs_diff_eq!(p.value.data()[0], -expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.031623, epsilon = 1e-6);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn step_opposes_gradient_sign() {
        for g in [-3.0, -1e-6, 1e-9, 0.7, 50.0] {
            let mut p = scalar_param(1.0, g);
            let mut s = RmsPropState::new(1, RmsPropConfig::default());
            rmsprop_step(&mut p, &mut s);
            let delta = p.value.data()[0] - 1.0;
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn rho_zero_is_sign_descent() {
        let cfg = RmsPropConfig {
            learning_rate: 0.05,
            rho: 0.0,
            epsilon: 1e-12,
        };
        for g in [-2.0, -0.3, 0.01, 4.0] {
            let mut p = scalar_param(0.0, g);
            let mut s = RmsPropState::new(1, cfg);
            rmsprop_step(&mut p, &mut s);
            assert_abs_diff_eq!(p.value.data()[0], -0.05 * f64::signum(g), epsilon = 1e-6);
        }
    }

    #[test]
    fn accumulator_stays_nonnegative() {
        let mut p = scalar_param(0.0, 0.0);
        let mut s = RmsPropState::new(1, RmsPropConfig::default());
        for k in 0..50 {
            p.grad.data_mut()[0] = ((k * 7919) % 13) as f64 - 6.0;
            rmsprop_step(&mut p, &mut s);
            assert!(s.accum[0] >= 0.0);
        }
    }
}
