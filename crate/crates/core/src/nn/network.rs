use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Aux, DenseGrad, Layer, LayerKind, LayerSpec, Mode, PowerMode};
use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// A feed-forward stack of layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Everything a forward pass leaves behind for `backward`.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[i]` is the input of layer `i`; the last entry is the output.
    activations: Vec<Tensor2>,
    aux: Vec<Aux>,
}

impl Trace {
    pub fn output(&self) -> &Tensor2 {
        self.activations
            .last()
            .expect("trace always holds the input")
    }

    pub fn input(&self) -> &Tensor2 {
        &self.activations[0]
    }

    /// Input of every layer followed by the network output.
    pub fn activations(&self) -> &[Tensor2] {
        &self.activations
    }

    /// Pre-softmax logits when the network ends in a softmax layer.
    pub fn logits(&self) -> Option<&Tensor2> {
        let n = self.activations.len();
        (n >= 2).then(|| &self.activations[n - 2])
    }
}

/// Parameter gradients, one slot per layer (`None` for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Option<DenseGrad>>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Dense {
                        in_width,
                        out_width,
                        ..
                    } => Some(DenseGrad {
                        weights: vec![0.0; in_width * out_width],
                        bias: vec![0.0; *out_width],
                    }),
                    _ => None,
                })
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }

    /// Elementwise accumulation; shapes must agree.
    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::usage("gradient sets from different networks"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (Some(a), Some(b))
                    if a.weights.len() == b.weights.len() && a.bias.len() == b.bias.len() =>
                {
                    a.weights
                        .iter_mut()
                        .zip(&b.weights)
                        .for_each(|(x, y)| *x += y);
                    a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
                }
                (None, None) => {}
                _ => return Err(Error::usage("gradient sets from different networks")),
            }
        }
        Ok(())
    }
}

impl Network {
    pub fn from_specs(
        specs: &[LayerSpec],
        power_mode: PowerMode,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|&s| Layer::init(s, power_mode, rng))
            .collect();
        Network::from_layers(layers)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            l.validate()
                .map_err(|e| Error::config(format!("layer {i}: {e}")))?;
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::config(format!(
                    "layer {i} outputs width {} but layer {} expects {}",
                    pair[0].out_width(),
                    i + 1,
                    pair[1].in_width()
                )));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn out_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_width()
    }

    pub fn ends_with_softmax(&self) -> bool {
        self.layers.last().map(Layer::kind) == Some(LayerKind::Softmax)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weights, bias, .. } => weights.len() + bias.len(),
                _ => 0,
            })
            .sum()
    }

    /// Mutable views of every trainable parameter block, in a stable order
    /// (per dense layer: weights, then bias).
    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Layer::Dense { weights, bias, .. } = l {
                out.push(weights.as_mut_slice());
                out.push(bias.as_mut_slice());
            }
        }
        out
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            if let Layer::Dense { weights, bias, .. } = l {
                out.push(weights.as_slice());
                out.push(bias.as_slice());
            }
        }
        out
    }

    /// Runs the network without touching running statistics.
    pub fn forward(&self, input: &Tensor2, mode: Mode) -> Result<Trace> {
        if input.cols() != self.in_width() {
            return Err(Error::config(format!(
                "input width {} does not match network input width {}",
                input.cols(),
                self.in_width()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        activations.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, a) = layer.forward(&activations[i], mode).map_err(|e| match e {
                Error::Usage(msg) => Error::numerical(i, msg),
                other => other,
            })?;
            if !y.is_finite() {
                return Err(Error::numerical(i, "non-finite activation"));
            }
            activations.push(y);
            aux.push(a);
        }
        Ok(Trace { activations, aux })
    }

    /// Train-mode forward pass that also folds the batch statistics into
    /// the running scale of every normalization layer.
    pub fn forward_train(&mut self, input: &Tensor2) -> Result<Trace> {
        let trace = self.forward(input, Mode::Train)?;
        self.update_running_stats(&trace);
        Ok(trace)
    }

    pub fn update_running_stats(&mut self, trace: &Trace) {
        for (layer, aux) in self.layers.iter_mut().zip(&trace.aux) {
            if let Layer::BatchPowerNorm {
                running_scale,
                momentum,
                running_mean,
                running_var,
                ..
            } = layer
            {
                let m = *momentum;
                match aux {
                    Aux::BatchScale(s) => *running_scale = m * *running_scale + (1.0 - m) * s,
                    Aux::FeatureStats { mean, var } => {
                        for (r, v) in running_mean.iter_mut().zip(mean) {
                            *r = m * *r + (1.0 - m) * v;
                        }
                        for (r, v) in running_var.iter_mut().zip(var) {
                            *r = m * *r + (1.0 - m) * v;
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    /// Overwrites the running scale of every batch-average normalization
    /// layer with the power statistic measured on `input` (e.g. the full
    /// uniform message set).
    pub fn calibrate_running_stats(&mut self, input: &Tensor2) -> Result<()> {
        let trace = self.forward(input, Mode::Train)?;
        for (layer, aux) in self.layers.iter_mut().zip(&trace.aux) {
            if let Layer::BatchPowerNorm {
                running_scale,
                running_mean,
                running_var,
                ..
            } = layer
            {
                match aux {
                    Aux::BatchScale(s) => *running_scale = *s,
                    Aux::FeatureStats { mean, var } => {
                        running_mean.clone_from(mean);
                        running_var.clone_from(var);
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn infer(&self, input: &Tensor2) -> Result<Tensor2> {
        let mut trace = self.forward(input, Mode::Infer)?;
        Ok(trace.activations.pop().expect("non-empty trace"))
    }

    /// Backpropagates `output_grad` through every layer.
    pub fn backward(&self, trace: &Trace, output_grad: &Tensor2) -> Result<(GradientSet, Tensor2)> {
        self.backward_from(self.layers.len(), trace, output_grad)
    }

    /// Backpropagates a gradient taken w.r.t. the pre-softmax logits,
    /// skipping the final softmax layer.
    pub fn backward_from_logits(
        &self,
        trace: &Trace,
        logit_grad: &Tensor2,
    ) -> Result<(GradientSet, Tensor2)> {
        if !self.ends_with_softmax() {
            return Err(Error::usage("network does not end in a softmax layer"));
        }
        self.backward_from(self.layers.len() - 1, trace, logit_grad)
    }

    fn backward_from(
        &self,
        upto: usize,
        trace: &Trace,
        grad: &Tensor2,
    ) -> Result<(GradientSet, Tensor2)> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::usage("trace does not belong to this network"));
        }
        if grad.shape() != trace.activations[upto].shape() {
            return Err(Error::usage(format!(
                "output gradient shape {:?} does not match activation shape {:?}",
                grad.shape(),
                trace.activations[upto].shape()
            )));
        }
        let mut grads = GradientSet {
            layers: vec![None; self.layers.len()],
        };
        let mut g = grad.clone();
        for i in (0..upto).rev() {
            let (dx, dp) = self.layers[i].backward(
                &trace.activations[i],
                &trace.activations[i + 1],
                &trace.aux[i],
                &g,
            )?;
            grads.layers[i] = dp;
            g = dx;
        }
        for i in upto..self.layers.len() {
            if let Layer::Dense {
                in_width,
                out_width,
                ..
            } = self.layers[i]
            {
                grads.layers[i] = Some(DenseGrad {
                    weights: vec![0.0; in_width * out_width],
                    bias: vec![0.0; out_width],
                });
            }
        }
        Ok((grads, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net() -> Network {
        let specs = [
            LayerSpec::dense(3, 5).unwrap(),
            LayerSpec::elementwise(LayerKind::Relu, 5).unwrap(),
            LayerSpec::dense(5, 4).unwrap(),
            LayerSpec::elementwise(LayerKind::Softmax, 4).unwrap(),
        ];
        Network::from_specs(
            &specs,
            PowerMode::BatchAverage,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap()
    }

    #[test]
    fn rejects_width_chain_mismatch() {
        let layers = vec![Layer::Relu { width: 3 }, Layer::Linear { width: 4 }];
        assert!(Network::from_layers(layers).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = small_net();
        let x = Tensor2::from_rows(&[vec![0.3, -0.2, 1.0], vec![1.0, 0.5, -0.7]]).unwrap();
        let trace = net.forward(&x, Mode::Train).unwrap();
        let (g, dx) = net.backward(&trace, &Tensor2::zeros(2, 4)).unwrap();
        assert!(g.is_zero());
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_dense_weight_gradient_is_g_times_x() {
        let net = Network::from_layers(vec![Layer::Dense {
            in_width: 1,
            out_width: 1,
            weights: vec![2.0],
            bias: vec![0.0],
        }])
        .unwrap();
        let x = Tensor2::from_rows(&[vec![3.0]]).unwrap();
        let trace = net.forward(&x, Mode::Infer).unwrap();
        let (g, dx) = net
            .backward(&trace, &Tensor2::from_rows(&[vec![0.5]]).unwrap())
            .unwrap();
        let dense = g.layers[0].as_ref().unwrap();
        assert_eq!(dense.weights, vec![1.5]);
        assert_eq!(dense.bias, vec![0.5]);
        assert_eq!(dx.data(), &[1.0]);
    }

    #[test]
    fn wrong_input_width_is_config_error() {
        let net = small_net();
        let err = net.forward(&Tensor2::zeros(1, 2), Mode::Infer).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let net = Network::from_layers(vec![
            Layer::Dense {
                in_width: 1,
                out_width: 1,
                weights: vec![1e300],
                bias: vec![0.0],
            },
            Layer::Dense {
                in_width: 1,
                out_width: 1,
                weights: vec![1e300],
                bias: vec![0.0],
            },
        ])
        .unwrap();
        let err = net
            .forward(&Tensor2::from_rows(&[vec![1.0]]).unwrap(), Mode::Infer)
            .unwrap_err();
        assert!(matches!(err, Error::Numerical { layer: 1, .. }));
    }

    #[test]
    fn foreign_trace_is_rejected() {
        let net = small_net();
        let other = Network::from_layers(vec![Layer::Linear { width: 3 }]).unwrap();
        let x = Tensor2::zeros(2, 3);
        let trace = other.forward(&x, Mode::Infer).unwrap();
        assert!(matches!(
            net.backward(&trace, &Tensor2::zeros(2, 4)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn running_scale_tracks_batch_power() {
        let mut net = Network::from_layers(vec![Layer::BatchPowerNorm {
            width: 2,
            mode: PowerMode::BatchAverage,
            running_scale: 1.0,
            running_mean: Vec::new(),
            running_var: Vec::new(),
            momentum: 0.5,
        }])
        .unwrap();
        // mean squared entry = 4, so the batch scale is 2
        let x = Tensor2::from_rows(&[vec![2.0, 2.0], vec![-2.0, 2.0]]).unwrap();
        net.forward_train(&x).unwrap();
        match &net.layers()[0] {
            Layer::BatchPowerNorm { running_scale, .. } => assert_eq!(*running_scale, 1.5),
            _ => unreachable!(),
        }
        net.calibrate_running_stats(&x).unwrap();
        let y = net.infer(&x).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, -1.0, 1.0]);
    }
}
