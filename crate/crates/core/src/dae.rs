//! The imputation autoencoder topology.
//!
//! Input dropout of 50%, then six dense layers whose widths ramp up by `theta`
//! per layer to a peak of `d + 3θ` and back down to `d`:
//!
//! ```text
//! d → d+θ → d+2θ → d+3θ → d+2θ → d+θ → d
//! ```
//!
//! Hidden layers use `tanh`; the output layer is linear because targets are
//! z-scores and may exceed the `tanh` range.

use rand::Rng;

use crate::nn::{Activation, DenseLayer, DropoutSpec, Init, Network};
use crate::{Error, Result};

pub const DEFAULT_THETA: usize = 7;
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Layer widths from input to output, `[d, d+θ, d+2θ, d+3θ, d+2θ, d+θ, d]`.
pub fn layer_widths(input_width: usize, theta: usize) -> Vec<usize> {
    [0, 1, 2, 3, 2, 1, 0]
        .iter()
        .map(|k| input_width + k * theta)
        .collect()
}

#[derive(Debug, Clone)]
pub struct DaeNetwork {
    network: Network,
    theta: usize,
}

impl DaeNetwork {
    pub fn input_width(&self) -> usize {
        self.network.input_width()
    }

    pub fn theta(&self) -> usize {
        self.theta
    }

    /// Widths of the input followed by each dense layer's output.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.network.input_width())
            .chain(self.network.layers().iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }
}

pub fn build_dae<R: Rng + ?Sized>(input_width: usize, theta: usize, rng: &mut R) -> Result<DaeNetwork> {
    build_dae_with_dropout(input_width, theta, DEFAULT_DROPOUT, rng)
}

pub fn build_dae_with_dropout<R: Rng + ?Sized>(
    input_width: usize,
    theta: usize,
    dropout: f64,
    rng: &mut R,
) -> Result<DaeNetwork> {
    if input_width == 0 {
        return Err(Error::InvalidArgument("autoencoder input width must be ≥ 1".into()));
    }
    let widths = layer_widths(input_width, theta);
    let n = widths.len() - 1;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 1 == n {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            DenseLayer::new(w[0], w[1], act, Init::Xavier, rng)
        })
        .collect();
    Ok(DaeNetwork {
        network: Network::new(DropoutSpec::new(dropout)?, layers)?,
        theta,
    })
}
