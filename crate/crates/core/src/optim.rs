//! Parameter-update rules: SGD, Adam, and AdaDelta.
//!
//! The update equations follow the optimizers' original definitions:
//!
//! * SGD:      theta <- theta - eta * g
//! * Adam:     first/second moment EMAs with bias correction,
//!             theta <- theta - eta * m_hat / (sqrt(v_hat) + eps)
//! * AdaDelta: theta <- theta - eta * (RMS[dx] / RMS[g]) * g, with RMS[x] =
//!             sqrt(E[x^2] + eps). Canonically learning-rate free; `eta`
//!             multiplies the computed update (default 1.0) so rate sweeps
//!             can scale it.
//!
//! No momentum for SGD, no weight decay, no gradient clipping.

use crate::error::{Error, Result};
use crate::nn::GradientVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdaDelta,
}

impl OptimizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdaDelta => "adadelta",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adadelta" => Ok(OptimizerKind::AdaDelta),
            other => Err(Error::invalid_argument(format!(
                "unknown optimizer '{other}' (expected sgd, adam, or adadelta)"
            ))),
        }
    }
}

/// Optimizer choice plus hyperparameters. The learning rate doubles as the
/// unlearning rate during deletion updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
}

impl OptimizerSpec {
    /// Defaults from the optimizers' original papers; AdaDelta's rate is a
    /// plain multiplier of its self-scaled update.
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerSpec {
            kind,
            learning_rate,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn adadelta(rate_multiplier: f64) -> Self {
        Self::new(OptimizerKind::AdaDelta, rate_multiplier)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid_argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.validate_hyperparams()
    }

    /// Checks everything except the learning rate (the unlearning path
    /// admits a degenerate rate of zero).
    pub fn validate_hyperparams(&self) -> Result<()> {
        for (name, value) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("adadelta_rho", self.adadelta_rho),
        ] {
            if !(0.0..1.0).contains(&value) {
                return Err(Error::invalid_argument(format!(
                    "{name} must lie in [0, 1), got {value}"
                )));
            }
        }
        for (name, value) in [("adam_eps", self.adam_eps), ("adadelta_eps", self.adadelta_eps)] {
            if !(value > 0.0) {
                return Err(Error::invalid_argument(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-parameter accumulators, congruent with the flat parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd {
        steps: u64,
    },
    Adam {
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
        steps: u64,
    },
    AdaDelta {
        avg_sq_grad: Vec<f64>,
        avg_sq_update: Vec<f64>,
        steps: u64,
    },
}

impl OptimizerState {
    /// Fresh zeroed state for `param_count` parameters.
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd { steps: 0 },
            OptimizerKind::Adam => OptimizerState::Adam {
                first_moment: vec![0.0; param_count],
                second_moment: vec![0.0; param_count],
                steps: 0,
            },
            OptimizerKind::AdaDelta => OptimizerState::AdaDelta {
                avg_sq_grad: vec![0.0; param_count],
                avg_sq_update: vec![0.0; param_count],
                steps: 0,
            },
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            OptimizerState::Sgd { .. } => OptimizerKind::Sgd,
            OptimizerState::Adam { .. } => OptimizerKind::Adam,
            OptimizerState::AdaDelta { .. } => OptimizerKind::AdaDelta,
        }
    }

    pub fn steps(&self) -> u64 {
        match self {
            OptimizerState::Sgd { steps } => *steps,
            OptimizerState::Adam { steps, .. } => *steps,
            OptimizerState::AdaDelta { steps, .. } => *steps,
        }
    }

    fn check_len(&self, param_count: usize) -> Result<()> {
        let ok = match self {
            OptimizerState::Sgd { .. } => true,
            OptimizerState::Adam {
                first_moment,
                second_moment,
                ..
            } => first_moment.len() == param_count && second_moment.len() == param_count,
            OptimizerState::AdaDelta {
                avg_sq_grad,
                avg_sq_update,
                ..
            } => avg_sq_grad.len() == param_count && avg_sq_update.len() == param_count,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid_argument(
                "optimizer state length does not match parameter count".to_string(),
            ))
        }
    }
}

/// Apply exactly one update to `params` in place, advancing the state's
/// step counter.
pub fn step(
    spec: &OptimizerSpec,
    state: &mut OptimizerState,
    params: &mut [f64],
    grad: &GradientVector,
) -> Result<()> {
    spec.validate()?;
    if grad.values.len() != params.len() {
        return Err(Error::invalid_argument(format!(
            "gradient length {} != parameter length {}",
            grad.values.len(),
            params.len()
        )));
    }
    if state.kind() != spec.kind {
        return Err(Error::invalid_argument(format!(
            "optimizer state kind {:?} does not match spec kind {:?}",
            state.kind(),
            spec.kind
        )));
    }
    state.check_len(params.len())?;
    if grad.values.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient".to_string()));
    }

    let eta = spec.learning_rate;
    match state {
        OptimizerState::Sgd { steps } => {
            for (p, &g) in params.iter_mut().zip(&grad.values) {
                *p -= eta * g;
            }
            *steps += 1;
        }
        OptimizerState::Adam {
            first_moment,
            second_moment,
            steps,
        } => {
            *steps += 1;
            let t = *steps as i32;
            let b1 = spec.adam_beta1;
            let b2 = spec.adam_beta2;
            let bias1 = 1.0 - b1.powi(t);
            let bias2 = 1.0 - b2.powi(t);
            for ((p, &g), (m, v)) in params
                .iter_mut()
                .zip(&grad.values)
                .zip(first_moment.iter_mut().zip(second_moment.iter_mut()))
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= eta * m_hat / (v_hat.sqrt() + spec.adam_eps);
            }
        }
        OptimizerState::AdaDelta {
            avg_sq_grad,
            avg_sq_update,
            steps,
        } => {
            let rho = spec.adadelta_rho;
            let eps = spec.adadelta_eps;
            for ((p, &g), (eg, ex)) in params
                .iter_mut()
                .zip(&grad.values)
                .zip(avg_sq_grad.iter_mut().zip(avg_sq_update.iter_mut()))
            {
                *eg = rho * *eg + (1.0 - rho) * g * g;
                let update = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
                *ex = rho * *ex + (1.0 - rho) * update * update;
                *p += eta * update;
            }
            *steps += 1;
        }
    }

    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::numeric(
            "parameters became non-finite after update".to_string(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad(values: Vec<f64>) -> GradientVector {
        GradientVector { values }
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let spec = OptimizerSpec::sgd(0.1);
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        step(&spec, &mut state, &mut params, &grad(vec![0.0; 3])).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.steps(), 1);
    }

    #[test]
    fn sgd_analytic_step() {
        let spec = OptimizerSpec::sgd(0.1);
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 1);
        let mut params = vec![1.0];
        step(&spec, &mut state, &mut params, &grad(vec![2.0])).unwrap();
        assert!((params[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_hand_computed() {
        // t=1: m_hat = g, v_hat = g^2, so dtheta = -eta * g / (|g| + eps).
        let spec = OptimizerSpec::adam(0.001);
        let mut state = OptimizerState::new(OptimizerKind::Adam, 1);
        let mut params = vec![0.3];
        step(&spec, &mut state, &mut params, &grad(vec![0.5])).unwrap();
        let expected_delta = -0.001 * 0.5 / (0.5 + 1e-8);
        assert!(
            (params[0] - (0.3 + expected_delta)).abs() < 1e-15,
            "got delta {}",
            params[0] - 0.3
        );
    }

    #[test]
    fn adadelta_first_step_hand_computed() {
        // E[g^2] = 0.05; update = -sqrt(eps)/sqrt(0.05+eps) * g.
        let spec = OptimizerSpec::adadelta(1.0);
        let mut state = OptimizerState::new(OptimizerKind::AdaDelta, 1);
        let mut params = vec![0.0];
        step(&spec, &mut state, &mut params, &grad(vec![1.0])).unwrap();
        let eps: f64 = 1e-6;
        let expected = -(eps.sqrt() / (0.05f64 + eps).sqrt());
        assert!(
            (params[0] - expected).abs() < 1e-15,
            "got {} want {expected}",
            params[0]
        );
    }

    #[test]
    fn sgd_update_norm_bound_exact() {
        let spec = OptimizerSpec::sgd(0.37);
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 4);
        let g = vec![1.0, -2.0, 3.0, 0.25];
        let mut params = vec![0.0; 4];
        step(&spec, &mut state, &mut params, &grad(g.clone())).unwrap();
        let delta_norm: f64 = params.iter().map(|p| p * p).sum::<f64>().sqrt();
        let g_norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(delta_norm <= 0.37 * g_norm + 1e-15);
    }

    #[test]
    fn first_step_signs_oppose_gradient() {
        for spec in [OptimizerSpec::sgd(0.01), OptimizerSpec::adam(0.01)] {
            let mut state = OptimizerState::new(spec.kind, 3);
            let mut params = vec![0.0; 3];
            let g = vec![0.5, -1.5, 0.0];
            step(&spec, &mut state, &mut params, &grad(g.clone())).unwrap();
            for (delta, gi) in params.iter().zip(&g) {
                if *gi == 0.0 {
                    assert_eq!(*delta, 0.0, "{:?}", spec.kind);
                } else {
                    assert!(delta * gi < 0.0, "{:?}: delta {delta} vs g {gi}", spec.kind);
                }
            }
        }
    }

    #[test]
    fn rejects_length_mismatch_and_non_finite() {
        let spec = OptimizerSpec::sgd(0.1);
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 2);
        let mut params = vec![0.0; 2];
        assert!(step(&spec, &mut state, &mut params, &grad(vec![0.0; 3])).is_err());
        assert!(step(&spec, &mut state, &mut params, &grad(vec![f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn rejects_kind_mismatch() {
        let spec = OptimizerSpec::adam(0.1);
        let mut state = OptimizerState::new(OptimizerKind::Sgd, 1);
        let mut params = vec![0.0];
        assert!(step(&spec, &mut state, &mut params, &grad(vec![1.0])).is_err());
    }

    #[test]
    fn state_roundtrip_continues_bit_identically() {
        // Clone mid-run (stand-in for serialize/restore) and check both
        // trajectories agree bitwise.
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::AdaDelta] {
            let spec = OptimizerSpec::new(kind, 0.05);
            let mut state = OptimizerState::new(kind, 3);
            let mut params = vec![0.1, -0.2, 0.3];
            let gradients: Vec<Vec<f64>> = (0..10)
                .map(|i| vec![(i as f64).sin(), 0.5 - i as f64 * 0.1, (i as f64).cos()])
                .collect();

            for g in &gradients[..5] {
                step(&spec, &mut state, &mut params, &grad(g.clone())).unwrap();
            }
            let mut resumed_state = state.clone();
            let mut resumed_params = params.clone();
            for g in &gradients[5..] {
                step(&spec, &mut state, &mut params, &grad(g.clone())).unwrap();
                step(&spec, &mut resumed_state, &mut resumed_params, &grad(g.clone())).unwrap();
            }
            assert_eq!(params, resumed_params, "{kind:?}");
            assert_eq!(state, resumed_state, "{kind:?}");
        }
    }
}
