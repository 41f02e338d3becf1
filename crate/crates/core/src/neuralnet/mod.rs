//! Dense feed-forward classifiers with exact backpropagation.
//!
//! A [`Network`] is a chain of fully connected layers whose last layer is a
//! softmax. Loss is always cross-entropy, against either a hard label or a
//! probability vector.

mod persist;
mod train;

pub use persist::{read_network, write_network};
pub use train::{train, OptimizerKind, TrainingConfig};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{argmax, Dataset, Targets};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
    Identity,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "softmax" => Some(Activation::Softmax),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// One dense layer. Weights are row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::Shape {
                expected: inputs * outputs,
                found: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::Shape {
                expected: outputs,
                found: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite layer parameter".into()));
        }
        Ok(Layer {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *zo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }

    fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// A feed-forward classifier: input dimension `n`, `m` output classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Gradient of the loss for every layer, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|g| *g *= factor);
            l.bias.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Flattens in the same order as [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Forward activations kept for backpropagation.
struct Trace {
    /// `activations[0]` is the input; `activations[i + 1]` is layer `i`'s output.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let last = layers
            .last()
            .ok_or_else(|| Error::invalid("network needs at least one layer"))?;
        if last.activation != Activation::Softmax {
            return Err(Error::invalid("final activation must be softmax"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape {
                    expected: pair[0].outputs,
                    found: pair[1].inputs,
                });
            }
            if pair[0].activation == Activation::Softmax {
                return Err(Error::invalid(format!(
                    "softmax only allowed on the final layer (layer {i})"
                )));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// All weights and biases, layer by layer, weights before bias.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Shape {
                expected: self.parameter_count(),
                found: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Class probabilities for `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.affine(&a);
            a = activate(layer.activation, &z);
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite activation".into()));
        }
        Ok(a)
    }

    /// Most probable class, lowest index on ties.
    pub fn predict_label(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    fn forward_trace(&self, x: &[f64], mut dropout: Option<(&mut Rng, f64)>) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&activations[i]);
            let mut a = activate(layer.activation, &z);
            let mask = match dropout.as_mut() {
                Some((rng, rate)) if i < last && *rate > 0.0 => {
                    let keep = 1.0 - *rate;
                    let m: Vec<f64> = (0..a.len())
                        .map(|_| {
                            if rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    a.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                    Some(m)
                }
                _ => None,
            };
            pre.push(z);
            masks.push(mask);
            activations.push(a);
        }
        Trace {
            activations,
            pre,
            masks,
        }
    }

    /// Backpropagates `delta` (dL/dz of the output layer). Accumulates
    /// parameter gradients into `grads` when given and returns dL/dx.
    fn backward(
        &self,
        trace: &Trace,
        mut delta: Vec<f64>,
        mut grads: Option<&mut Gradients>,
    ) -> Vec<f64> {
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[i];
            if let Some(g) = grads.as_deref_mut() {
                let lg = &mut g.layers[i];
                for (o, d) in delta.iter().enumerate() {
                    lg.bias[o] += d;
                    let row = &mut lg.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(gw, a)| *gw += d * a);
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
            }
            if i > 0 {
                let below = &self.layers[i - 1];
                if below.activation == Activation::Relu {
                    prev.iter_mut().zip(&trace.pre[i - 1]).for_each(|(p, z)| {
                        if *z <= 0.0 {
                            *p = 0.0
                        }
                    });
                }
                if let Some(mask) = &trace.masks[i - 1] {
                    prev.iter_mut().zip(mask).for_each(|(p, m)| *p *= m);
                }
            }
            delta = prev;
        }
        delta
    }

    /// Returns (loss, output delta) for one sample against a target row.
    fn output_delta(probs: &[f64], logits: &[f64], target: TargetRef<'_>) -> (f64, Vec<f64>) {
        let lse = log_sum_exp(logits);
        let mut delta = probs.to_vec();
        let loss = match target {
            TargetRef::Label(c) => {
                delta[c] -= 1.0;
                lse - logits[c]
            }
            TargetRef::Probs(p) => {
                let mut loss = 0.0;
                for (j, pj) in p.iter().enumerate() {
                    delta[j] -= pj;
                    if *pj > 0.0 {
                        loss -= pj * (logits[j] - lse);
                    }
                }
                loss
            }
        };
        (loss, delta)
    }

    /// Loss and summed gradient over `indices` of `data`.
    pub(crate) fn accumulate_gradients(
        &self,
        data: &Dataset,
        indices: &[usize],
        mut dropout: Option<(&mut Rng, f64)>,
    ) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for &i in indices {
            let trace = self.forward_trace(
                data.sample(i),
                dropout.as_mut().map(|(r, rate)| (&mut **r, *rate)),
            );
            let probs = trace.activations.last().unwrap();
            let logits = trace.pre.last().unwrap();
            let target = TargetRef::of(data.targets(), i);
            let (l, delta) = Self::output_delta(probs, logits, target);
            loss += l;
            self.backward(&trace, delta, Some(&mut grads));
        }
        (loss, grads)
    }

    /// Mean cross-entropy over a dataset.
    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_input(data.sample(0))?;
        let mut total = 0.0;
        for i in 0..data.len() {
            let trace = self.forward_trace(data.sample(i), None);
            let (l, _) = Self::output_delta(
                trace.activations.last().unwrap(),
                trace.pre.last().unwrap(),
                TargetRef::of(data.targets(), i),
            );
            total += l;
        }
        Ok(total / data.len() as f64)
    }

    /// Mean gradient of the cross-entropy loss over `batch`, per parameter.
    pub fn param_gradients(&self, batch: &Dataset) -> Result<Gradients> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_input(batch.sample(0))?;
        if batch.classes() != self.classes() {
            return Err(Error::Shape {
                expected: self.classes(),
                found: batch.classes(),
            });
        }
        let indices: Vec<usize> = (0..batch.len()).collect();
        let (_, mut grads) = self.accumulate_gradients(batch, &indices, None);
        grads.scale(1.0 / batch.len() as f64);
        Ok(grads)
    }

    /// Gradient of the cross-entropy loss for class `class` with respect to `x`.
    pub fn input_gradient(&self, x: &[f64], class: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if class >= self.classes() {
            return Err(Error::invalid(format!("class {class} out of range")));
        }
        let trace = self.forward_trace(x, None);
        let probs = trace.activations.last().unwrap();
        let logits = trace.pre.last().unwrap();
        let (_, delta) = Self::output_delta(probs, logits, TargetRef::Label(class));
        Ok(self.backward(&trace, delta, None))
    }

    /// Fraction of `data` whose (argmax) target matches the prediction.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut hits = 0usize;
        for i in 0..data.len() {
            if self.predict_label(data.sample(i))? == data.label(i) {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

#[derive(Clone, Copy)]
enum TargetRef<'a> {
    Label(usize),
    Probs(&'a [f64]),
}

impl<'a> TargetRef<'a> {
    fn of(targets: &'a Targets, i: usize) -> Self {
        match targets {
            Targets::Labels(l) => TargetRef::Label(l[i]),
            Targets::Probabilities(p) => TargetRef::Probs(&p[i]),
        }
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn activate(act: Activation, z: &[f64]) -> Vec<f64> {
    match act {
        Activation::Relu => z.iter().map(|v| v.max(0.0)).collect(),
        Activation::Identity => z.to_vec(),
        Activation::Softmax => softmax(z),
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Layer widths of a fully connected classifier; ReLU between layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

/// Hidden widths used by [`Architecture::family`], widest first.
const FAMILY_WIDTHS: [usize; 6] = [64, 64, 32, 32, 16, 16];

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, classes: usize) -> Self {
        Architecture {
            input_dim,
            hidden,
            classes,
        }
    }

    /// A member of the fully connected family with `depth` hidden layers.
    pub fn family(input_dim: usize, classes: usize, depth: usize) -> Result<Self> {
        if depth > FAMILY_WIDTHS.len() {
            return Err(Error::invalid(format!(
                "family depth {depth} exceeds {}",
                FAMILY_WIDTHS.len()
            )));
        }
        Ok(Self::new(
            input_dim,
            FAMILY_WIDTHS[..depth].to_vec(),
            classes,
        ))
    }

    /// Named presets. `blobs` fits the 2-D toy data, `digits` stands in for
    /// the image models at 8×8 input size.
    pub fn preset(name: &str, input_dim: usize, classes: usize) -> Result<Self> {
        match name {
            "blobs" => Ok(Self::new(input_dim, vec![16, 16], classes)),
            "digits" => Ok(Self::new(input_dim, vec![200, 100], classes)),
            "linear" => Ok(Self::new(input_dim, vec![], classes)),
            other => other
                .strip_prefix("family-")
                .and_then(|d| d.parse::<usize>().ok())
                .map_or_else(
                    || {
                        Err(Error::invalid(format!(
                            "unknown architecture preset `{name}`"
                        )))
                    },
                    |depth| Self::family(input_dim, classes, depth),
                ),
        }
    }

    pub fn parameter_count(&self) -> usize {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.classes);
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Fresh network with uniform ±sqrt(6/(in+out)) weights and zero biases.
    pub fn init(&self, seed: u64) -> Network {
        let mut rng = seeded(seed);
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.classes);
        let count = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                let activation = if i + 1 == count {
                    Activation::Softmax
                } else {
                    Activation::Relu
                };
                Layer {
                    inputs,
                    outputs,
                    weights,
                    bias: vec![0.0; outputs],
                    activation,
                }
            })
            .collect();
        Network { layers }
    }

    /// Same shape with every parameter zero.
    pub fn zeros(&self) -> Network {
        let mut net = self.init(0);
        let n = net.parameter_count();
        net.set_parameters(&vec![0.0; n]).expect("shape matches");
        net
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_two_two() -> Network {
        // 2-2-2 ReLU MLP with hand-picked weights
        let l1 = Layer::new(
            2,
            2,
            vec![0.5, -1.0, 1.5, 0.25],
            vec![0.1, -0.2],
            Activation::Relu,
        )
        .unwrap();
        let l2 = Layer::new(
            2,
            2,
            vec![1.0, -0.5, -2.0, 0.75],
            vec![0.0, 0.3],
            Activation::Softmax,
        )
        .unwrap();
        Network::new(vec![l1, l2]).unwrap()
    }

    #[test]
    fn zero_network_is_uniform() {
        let net = Architecture::new(3, vec![4], 5).zeros();
        let p = net.forward(&[0.3, -0.2, 0.9]).unwrap();
        for v in &p {
            assert!((v - 0.2).abs() < 1e-12);
        }
        assert_eq!(net.predict_label(&[0.3, -0.2, 0.9]).unwrap(), 0);
    }

    #[test]
    fn identity_layer_at_origin_is_half_half() {
        let l = Layer::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            Activation::Softmax,
        )
        .unwrap();
        let net = Network::new(vec![l]).unwrap();
        assert_eq!(net.forward(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn hand_forward_pass() {
        let net = two_two_two();
        let x = [0.4, -0.6];
        // layer 1: z = (0.5*0.4 + -1*-0.6 + 0.1, 1.5*0.4 + 0.25*-0.6 - 0.2) = (0.9, 0.25)
        let h = [0.9f64, 0.25];
        // layer 2: z = (0.9 - 0.125, -1.8 + 0.1875 + 0.3) = (0.775, -1.3125)
        let z = [h[0] - 0.5 * h[1], -2.0 * h[0] + 0.75 * h[1] + 0.3];
        let e0 = z[0].exp();
        let e1 = z[1].exp();
        let expected = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let got = net.forward(&x).unwrap();
        assert!((got[0] - expected[0]).abs() < 1e-9);
        assert!((got[1] - expected[1]).abs() < 1e-9);
        assert!((z[0] - 0.775).abs() < 1e-15 && (z[1] + 1.3125).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let net = two_two_two();
        assert!(matches!(
            net.forward(&[0.0]),
            Err(Error::Shape {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn network_validation() {
        let relu_last = Layer::new(2, 2, vec![0.0; 4], vec![0.0; 2], Activation::Relu).unwrap();
        assert!(Network::new(vec![relu_last]).is_err());
        let a = Layer::new(2, 3, vec![0.0; 6], vec![0.0; 3], Activation::Relu).unwrap();
        let b = Layer::new(2, 2, vec![0.0; 4], vec![0.0; 2], Activation::Softmax).unwrap();
        assert!(Network::new(vec![a, b]).is_err());
        assert!(Layer::new(1, 1, vec![f64::NAN], vec![0.0], Activation::Relu).is_err());
    }

    #[test]
    fn output_bias_gradient_is_mean_residual() {
        let net = Architecture::new(3, vec![5], 3).init(11);
        let data = Dataset::labeled(
            vec![
                vec![0.1, -0.3, 0.8],
                vec![-0.9, 0.2, 0.0],
                vec![0.5, 0.5, -0.5],
            ],
            vec![2, 0, 1],
            3,
        )
        .unwrap();
        let g = net.param_gradients(&data).unwrap();
        let mut expected = [0.0; 3];
        for i in 0..data.len() {
            let p = net.forward(data.sample(i)).unwrap();
            for c in 0..3 {
                let y = if data.label(i) == c { 1.0 } else { 0.0 };
                expected[c] += (p[c] - y) / 3.0;
            }
        }
        let got = &g.layers.last().unwrap().bias;
        for c in 0..3 {
            assert!((got[c] - expected[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let net = Architecture::new(2, vec![4], 2).init(3);
        let single =
            Dataset::labeled(vec![vec![0.2, -0.1], vec![0.7, 0.4]], vec![0, 1], 2).unwrap();
        let doubled = single.subset(&[0, 1, 0, 1]);
        let a = net.param_gradients(&single).unwrap().flatten();
        let b = net.param_gradients(&doubled).unwrap().flatten();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_network_has_zero_input_gradient() {
        let net = Architecture::new(3, vec![], 4).zeros();
        assert_eq!(
            net.input_gradient(&[0.1, 0.2, 0.3], 2).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn one_dimensional_linear_gradient_sign() {
        for &w in &[0.7, -1.3] {
            for &x in &[-0.5, 0.0, 0.6] {
                let l = Layer::new(1, 2, vec![w, -w], vec![0.0, 0.0], Activation::Softmax).unwrap();
                let net = Network::new(vec![l]).unwrap();
                let p = net.forward(&[x]).unwrap();
                let g = net.input_gradient(&[x], 0).unwrap()[0];
                // dL/dx = w(p0 - 1) - w(p1) = 2w(p0 - 1)
                let expected = w.signum() * (p[0] - 1.0).signum();
                assert_eq!(g.signum(), expected);
            }
        }
    }

    #[test]
    fn deeper_family_members_have_more_parameters() {
        for (input, classes) in [(2, 3), (64, 10)] {
            let counts: Vec<usize> = (0..=FAMILY_WIDTHS.len())
                .map(|d| {
                    Architecture::family(input, classes, d)
                        .unwrap()
                        .parameter_count()
                })
                .collect();
            assert!(counts.windows(2).all(|w| w[1] > w[0]), "{counts:?}");
            let net = Architecture::family(input, classes, 3).unwrap().init(1);
            assert_eq!(net.parameter_count(), counts[3]);
        }
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(
            Architecture::preset("blobs", 2, 3).unwrap().hidden,
            vec![16, 16]
        );
        assert_eq!(
            Architecture::preset("family-2", 2, 3).unwrap().hidden,
            vec![64, 64]
        );
        assert!(Architecture::preset("conv", 2, 3).is_err());
    }
}
