use crate::{Error, Result};

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

/// Adam moment accumulators for a list of parameter slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(lengths: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            first: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            second: lengths.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every parameter slice.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::InvalidArgument(format!(
                "adam expects {} parameter groups, got {} params / {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != self.first[i].len() {
                return Err(Error::Shape {
                    context: "adam_step",
                    expected: (self.first[i].len(), 1),
                    actual: (p.len().max(g.len()), 1),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
