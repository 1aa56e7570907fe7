use serde::{Deserialize, Serialize};

use super::network::{GradientSet, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("optimizer.learning_rate must be positive"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return Err(Error::config("optimizer.beta1 must lie in (0, 1)"));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::config("optimizer.beta2 must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("optimizer.epsilon must be positive"));
        }
        Ok(())
    }
}

/// Per-network optimizer state. Adam moments are laid out like
/// [`Network::param_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, net: &Network) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Vec<f64>> = net
            .param_blocks()
            .iter()
            .map(|b| vec![0.0; b.len()])
            .collect();
        Ok(OptimizerState {
            config,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        })
    }

    /// Applies one descent step. Leaves `net` untouched when the gradient
    /// is non-finite or mis-shaped.
    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        let grad_blocks: Vec<&[f64]> = grads
            .layers
            .iter()
            .flatten()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect();
        let mut params = net.param_blocks_mut();
        if grad_blocks.len() != params.len()
            || grad_blocks
                .iter()
                .zip(&params)
                .any(|(g, p)| g.len() != p.len())
            || self.first_moment.len() != params.len()
        {
            return Err(Error::usage("gradient shapes do not match the network"));
        }
        if let Some(pos) = grad_blocks
            .iter()
            .position(|g| g.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::numerical(pos / 2, "non-finite gradient"));
        }

        self.step_count += 1;
        let cfg = self.config;
        match cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad_blocks) {
                    for (pv, gv) in p.iter_mut().zip(g.iter()) {
                        *pv -= cfg.learning_rate * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step_count as i32;
                let c1 = 1.0 - cfg.beta1.powi(t);
                let c2 = 1.0 - cfg.beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(&grad_blocks)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    for i in 0..p.len() {
                        let gi = g[i];
                        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::{DenseGrad, Layer};

    fn scalar_net(w: f64) -> Network {
        Network::from_layers(vec![Layer::Dense {
            in_width: 1,
            out_width: 1,
            weights: vec![w],
            bias: vec![0.0],
        }])
        .unwrap()
    }

    fn grad(w: f64, b: f64) -> GradientSet {
        GradientSet {
            layers: vec![Some(DenseGrad {
                weights: vec![w],
                bias: vec![b],
            })],
        }
    }

    #[test]
    fn sgd_step() {
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1), &net).unwrap();
        opt.step(&mut net, &grad(0.5, 0.0)).unwrap();
        assert!((net.param_blocks()[0][0] - 0.95).abs() < 1e-15);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for cfg in [OptimizerConfig::sgd(0.1), OptimizerConfig::default()] {
            let mut net = scalar_net(1.0);
            let before = net.clone();
            let mut opt = OptimizerState::new(cfg, &net).unwrap();
            opt.step(&mut net, &grad(0.0, 0.0)).unwrap();
            assert_eq!(net, before);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1 after bias correction, so the step is lr / (1 + eps)
        let mut net = scalar_net(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &net).unwrap();
        opt.step(&mut net, &grad(1.0, 0.0)).unwrap();
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((net.param_blocks()[0][0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_leaves_params_untouched() {
        let mut net = scalar_net(1.0);
        let before = net.clone();
        let mut opt = OptimizerState::new(OptimizerConfig::default(), &net).unwrap();
        assert!(matches!(
            opt.step(&mut net, &grad(f64::NAN, 0.0)),
            Err(Error::Numerical { .. })
        ));
        assert_eq!(net, before);
        assert_eq!(opt.step_count, 0);
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let net = scalar_net(1.0);
        let bad = OptimizerConfig {
            beta1: 1.0,
            ..Default::default()
        };
        assert!(OptimizerState::new(bad, &net).is_err());
        assert!(OptimizerState::new(OptimizerConfig::sgd(0.0), &net).is_err());
    }
}
