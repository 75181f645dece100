//! Minimal dense network substrate: layers, input dropout, forward and
//! backward passes.
//!
//! Layout conventions: a batch is a `Matrix` with one sample per row, and a
//! layer's weight matrix has shape `(in_dim, out_dim)` so the pre-activation
//! is `z = a · W + b`.

mod adam;
mod loss;

pub use adam::{AdamConfig, AdamState};
pub use loss::{metamorphic_loss, mse_loss, truth_metamorph, LossReport};

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    /// Glorot/Xavier uniform: `U(-l, l)` with `l = sqrt(6 / (in + out))`.
    Xavier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let weights = match init {
            Init::Zeros => Matrix::zeros(in_dim, out_dim),
            Init::Xavier => {
                let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                Matrix::from_fn(in_dim, out_dim, |_, _| dist.sample(rng))
            }
        };
        Self {
            weights,
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn from_parts(weights: Matrix, biases: Vec<f64>, activation: Activation) -> Result<Self> {
        if biases.len() != weights.cols() {
            return Err(Error::InvalidArgument(format!(
                "bias length {} does not match weight output width {}",
                biases.len(),
                weights.cols()
            )));
        }
        Ok(Self {
            weights,
            biases,
            activation,
        })
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }

    fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut z = input.matmul(&self.weights)?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.biases) {
                *v = self.activation.apply(*v + b);
            }
        }
        Ok(z)
    }
}

/// Inverted dropout applied to the network input during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub rate: f64,
}

impl DropoutSpec {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1]"
            )));
        }
        Ok(Self { rate })
    }

    /// Zeroes each entry with probability `rate` and divides survivors by
    /// the keep probability, so the expectation of every entry is unchanged.
    pub fn apply<R: Rng + ?Sized>(&self, input: &Matrix, rng: &mut R) -> Matrix {
        let mut out = input.clone();
        if self.rate == 0.0 {
            return out;
        }
        let keep = 1.0 - self.rate;
        for v in out.as_mut_slice() {
            if rng.gen::<f64>() < keep {
                *v /= keep;
            } else {
                *v = 0.0;
            }
        }
        out
    }
}

/// Parameter gradients, one entry per dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    /// Gradient slices in the same order as [`Network::parameters_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.biases.as_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input seen by each dense layer; entry 0 is the post-dropout batch.
    inputs: Vec<Matrix>,
    /// Activated output of each dense layer.
    outputs: Vec<Matrix>,
}

/// An input dropout stage followed by a stack of dense layers.
#[derive(Debug, Clone)]
pub struct Network {
    dropout: DropoutSpec,
    layers: Vec<DenseLayer>,
    cache: Option<ForwardCache>,
}

impl Network {
    pub fn new(dropout: DropoutSpec, layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self {
            dropout,
            layers,
            cache: None,
        })
    }

    pub fn dropout(&self) -> DropoutSpec {
        self.dropout
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Parameter slices `[w0, b0, w1, b1, ...]`.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    pub fn parameter_lengths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.biases.len()])
            .collect()
    }

    /// Runs the network on a batch.
    ///
    /// In [`Mode::Train`] a dropout mask is drawn from `rng` and per-layer
    /// activations are cached for [`Network::backward`]. In [`Mode::Infer`]
    /// the rng is untouched and any previous cache is kept.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        input: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Matrix> {
        if input.cols() != self.input_width() {
            return Err(Error::Shape {
                context: "network input",
                expected: (input.rows(), self.input_width()),
                actual: input.shape(),
            });
        }
        match mode {
            Mode::Infer => {
                let mut a = input.clone();
                for (i, layer) in self.layers.iter().enumerate() {
                    a = layer.forward(&a)?;
                    if !a.is_finite() {
                        return Err(Error::NonFinite { layer: i });
                    }
                }
                Ok(a)
            }
            Mode::Train => {
                let dropped = self.dropout.apply(input, rng);
                let mut inputs = Vec::with_capacity(self.layers.len());
                let mut outputs = Vec::with_capacity(self.layers.len());
                let mut a = dropped;
                for (i, layer) in self.layers.iter().enumerate() {
                    let out = layer.forward(&a)?;
                    if !out.is_finite() {
                        self.cache = None;
                        return Err(Error::NonFinite { layer: i });
                    }
                    inputs.push(a);
                    a = out.clone();
                    outputs.push(out);
                }
                self.cache = Some(ForwardCache { inputs, outputs });
                Ok(a)
            }
        }
    }

    /// Backpropagates `loss_grad = ∂L/∂output` through the cached training
    /// pass. Dropped input units contribute nothing to first-layer weight
    /// gradients because the cached layer-0 input already holds the mask.
    pub fn backward(&self, loss_grad: &Matrix) -> Result<Gradients> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        let last = cache.outputs.len() - 1;
        loss_grad.ensure_shape(cache.outputs[last].shape(), "loss gradient")?;

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = loss_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let out = &cache.outputs[i];
            let mut dz = upstream;
            for (d, &a) in dz.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *d *= layer.activation.derivative_from_output(a);
            }
            let dw = cache.inputs[i].t_matmul(&dz)?;
            let db = dz.column_sums();
            upstream = if i > 0 {
                dz.matmul_t(&layer.weights)?
            } else {
                Matrix::zeros(0, 0)
            };
            grads.push(LayerGradient {
                weights: dw,
                biases: db,
            });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut r = rng();
        let layers = vec![
            DenseLayer::new(3, 4, Activation::Tanh, Init::Zeros, &mut r),
            DenseLayer::new(4, 3, Activation::Identity, Init::Zeros, &mut r),
        ];
        let mut net = Network::new(DropoutSpec::new(0.5).unwrap(), layers).unwrap();
        let x = Matrix::from_fn(5, 3, |i, j| i as f64 * 1.5 - j as f64);
        for mode in [Mode::Train, Mode::Infer] {
            let y = net.forward(&x, mode, &mut r).unwrap();
            assert!(y.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn dropout_disabled_train_equals_infer() {
        let mut r = rng();
        let layers = vec![
            DenseLayer::new(3, 5, Activation::Tanh, Init::Xavier, &mut r),
            DenseLayer::new(5, 3, Activation::Identity, Init::Xavier, &mut r),
        ];
        let mut net = Network::new(DropoutSpec::new(0.0).unwrap(), layers).unwrap();
        let x = Matrix::from_fn(4, 3, |i, j| (i + j) as f64 * 0.3 - 0.5);
        let train = net.forward(&x, Mode::Train, &mut r).unwrap();
        let infer = net.forward(&x, Mode::Infer, &mut r).unwrap();
        assert_eq!(train, infer);
    }

    #[test]
    fn hand_set_two_two_two_chain() {
        // Independent hand evaluation:
        //   h = tanh([0.5, -1.0]·W1 + b1), W1 = [[0.1, 0.2], [0.3, 0.4]], b1 = [0.0, 0.1]
        //     z1 = [0.05 - 0.3, 0.1 - 0.4 + 0.1] = [-0.25, -0.2]
        //   y = h·W2 + b2, W2 = [[1.0, -1.0], [0.5, 2.0]], b2 = [0.2, -0.1]
        let w1 = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let w2 = Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        let layers = vec![
            DenseLayer::from_parts(w1, vec![0.0, 0.1], Activation::Tanh).unwrap(),
            DenseLayer::from_parts(w2, vec![0.2, -0.1], Activation::Identity).unwrap(),
        ];
        let mut net = Network::new(DropoutSpec::new(0.5).unwrap(), layers).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, -1.0]]).unwrap();
        let y = net.forward(&x, Mode::Infer, &mut rng()).unwrap();

        let h0 = (-0.25f64).tanh();
        let h1 = (-0.2f64).tanh();
        let expected = [h0 * 1.0 + h1 * 0.5 + 0.2, h0 * -1.0 + h1 * 2.0 - 0.1];
        // tanh(-0.25) = -0.24491866240370913, tanh(-0.2) = -0.197375320224904
        assert!((expected[0] - (-0.24491866240370913 - 0.098687660112452 + 0.2)).abs() < 1e-15);
        assert!((y.get(0, 0) - expected[0]).abs() < 1e-15);
        assert!((y.get(0, 1) - expected[1]).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_structural_error() {
        let mut r = rng();
        let layers = vec![DenseLayer::new(3, 3, Activation::Identity, Init::Xavier, &mut r)];
        let mut net = Network::new(DropoutSpec::new(0.5).unwrap(), layers).unwrap();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(
            net.forward(&x, Mode::Infer, &mut r),
            Err(Error::Shape { .. })
        ));
        let bad = vec![
            DenseLayer::new(3, 4, Activation::Tanh, Init::Xavier, &mut r),
            DenseLayer::new(5, 3, Activation::Identity, Init::Xavier, &mut r),
        ];
        assert!(Network::new(DropoutSpec::new(0.5).unwrap(), bad).is_err());
    }

    #[test]
    fn non_finite_activation_names_layer() {
        let w = Matrix::from_rows(&[vec![f64::MAX, 0.0], vec![f64::MAX, 0.0]]).unwrap();
        let layers = vec![
            DenseLayer::from_parts(Matrix::from_fn(2, 2, |i, j| (i == j) as u8 as f64), vec![0.0; 2], Activation::Identity).unwrap(),
            DenseLayer::from_parts(w, vec![0.0; 2], Activation::Identity).unwrap(),
        ];
        let mut net = Network::new(DropoutSpec::new(0.0).unwrap(), layers).unwrap();
        let x = Matrix::from_rows(&[vec![10.0, 10.0]]).unwrap();
        let err = net.forward(&x, Mode::Train, &mut rng()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 1 }));
    }

    #[test]
    fn backward_requires_training_pass() {
        let mut r = rng();
        let layers = vec![DenseLayer::new(2, 2, Activation::Tanh, Init::Xavier, &mut r)];
        let mut net = Network::new(DropoutSpec::new(0.5).unwrap(), layers).unwrap();
        let g = Matrix::zeros(1, 2);
        assert!(matches!(net.backward(&g), Err(Error::NoForwardCache)));
        net.forward(&Matrix::zeros(1, 2), Mode::Infer, &mut r).unwrap();
        assert!(matches!(net.backward(&g), Err(Error::NoForwardCache)));
    }

    #[test]
    fn zero_and_doubled_loss_gradients() {
        let mut r = rng();
        let layers = vec![
            DenseLayer::new(3, 4, Activation::Tanh, Init::Xavier, &mut r),
            DenseLayer::new(4, 3, Activation::Identity, Init::Xavier, &mut r),
        ];
        let mut net = Network::new(DropoutSpec::new(0.5).unwrap(), layers).unwrap();
        let x = Matrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin());
        net.forward(&x, Mode::Train, &mut r).unwrap();

        let zero = net.backward(&Matrix::zeros(6, 3)).unwrap();
        assert!(zero.flatten().iter().all(|&v| v == 0.0));

        let g = Matrix::from_fn(6, 3, |i, j| ((i + 2 * j) as f64).cos());
        let mut g2 = g.clone();
        g2.scale(2.0);
        let once = net.backward(&g).unwrap().flatten();
        let twice = net.backward(&g2).unwrap().flatten();
        for (a, b) in once.iter().zip(&twice) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn backward_respects_dropout_mask() {
        let mut r = rng();
        let layers = vec![DenseLayer::new(4, 2, Activation::Identity, Init::Xavier, &mut r)];
        let mut net = Network::new(DropoutSpec::new(0.5).unwrap(), layers).unwrap();
        let x = Matrix::from_fn(1, 4, |_, j| j as f64 + 1.0);
        net.forward(&x, Mode::Train, &mut r).unwrap();
        let dropped = net.cache.as_ref().unwrap().inputs[0].clone();
        let g = net.backward(&Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap()).unwrap();
        for j in 0..4 {
            let row = g.layers[0].weights.row(j);
            if dropped.get(0, j) == 0.0 {
                assert!(row.iter().all(|&v| v == 0.0));
            } else {
                assert_eq!(dropped.get(0, j), x.get(0, j) * 2.0);
                assert!(row.iter().all(|&v| v != 0.0));
            }
        }
    }

    #[test]
    fn dropout_is_unbiased() {
        // 2·10⁴ draws of a single entry; inverted scaling keeps the mean at the
        // raw value. Standard error of the scaled Bernoulli is x·sqrt(p/(1-p)) / sqrt(n).
        let spec = DropoutSpec::new(0.5).unwrap();
        let x = Matrix::from_rows(&[vec![1.7]]).unwrap();
        let mut r = rng();
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| spec.apply(&x, &mut r).get(0, 0)).sum::<f64>() / n as f64;
        let se = 1.7 / (n as f64).sqrt();
        assert!((mean - 1.7).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let run = || {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            let layers = vec![
                DenseLayer::new(3, 5, Activation::Tanh, Init::Xavier, &mut r),
                DenseLayer::new(5, 3, Activation::Identity, Init::Xavier, &mut r),
            ];
            let mut net = Network::new(DropoutSpec::new(0.5).unwrap(), layers).unwrap();
            let x = Matrix::from_fn(4, 3, |i, j| (i as f64 - j as f64) * 0.7);
            let mut adam = AdamState::new(&net.parameter_lengths(), AdamConfig::default());
            let mut trace = Vec::new();
            for _ in 0..5 {
                let y = net.forward(&x, Mode::Train, &mut r).unwrap();
                let loss = mse_loss(&x, &y).unwrap();
                let g = net.backward(&loss.gradient).unwrap();
                adam.step(&mut net.parameters_mut(), &g.slices()).unwrap();
                trace.push(loss.value.to_bits());
            }
            (trace, net.layers().to_vec())
        };
        assert_eq!(run(), run());
    }
}
