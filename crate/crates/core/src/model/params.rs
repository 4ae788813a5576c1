use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Direction, RMNConfig, SharedWeightForm};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Parameter};

/// Weight and bias of one affine stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

/// Every trainable tensor of a network, in checkpoint order.
///
/// Instantiated as [`ModelParams`] (values with their gradient and momentum
/// buffers) and as [`Gradients`] (a detached gradient buffer, used when
/// several utterances are differentiated independently and merged).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub input_block: Dense<T>,
    pub projection: Dense<T>,
    pub memory_layers: Vec<Dense<T>>,
    /// Shared past-delay transform, reused by every memory layer.
    pub shared_past: T,
    /// Shared look-ahead transform (bidirectional networks only).
    pub shared_future: Option<T>,
    pub output_hidden: Dense<T>,
    pub output: Dense<T>,
}

pub type ModelParams = ParamSet<Parameter>;
pub type Gradients = ParamSet<Matrix>;

impl<T> ParamSet<T> {
    /// Tensors in declared order: input block, projection, memory layers,
    /// shared past, shared future, output hidden, output.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        fn dense<T>(d: &Dense<T>) -> impl Iterator<Item = &T> {
            [&d.weight, &d.bias].into_iter()
        }
        dense(&self.input_block)
            .chain(dense(&self.projection))
            .chain(self.memory_layers.iter().flat_map(dense))
            .chain(std::iter::once(&self.shared_past))
            .chain(self.shared_future.iter())
            .chain(dense(&self.output_hidden))
            .chain(dense(&self.output))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        fn dense<T>(d: &mut Dense<T>) -> impl Iterator<Item = &mut T> {
            [&mut d.weight, &mut d.bias].into_iter()
        }
        dense(&mut self.input_block)
            .chain(dense(&mut self.projection))
            .chain(self.memory_layers.iter_mut().flat_map(dense))
            .chain(std::iter::once(&mut self.shared_past))
            .chain(self.shared_future.iter_mut())
            .chain(dense(&mut self.output_hidden))
            .chain(dense(&mut self.output))
    }

    /// Names matching [`ParamSet::iter`] order.
    pub fn names(&self) -> Vec<String> {
        let mut out = vec![
            "input_block.weight".to_string(),
            "input_block.bias".to_string(),
            "projection.weight".to_string(),
            "projection.bias".to_string(),
        ];
        for l in 1..=self.memory_layers.len() {
            out.push(format!("memory_layer.{l}.weight"));
            out.push(format!("memory_layer.{l}.bias"));
        }
        out.push("shared_past".into());
        if self.shared_future.is_some() {
            out.push("shared_future".into());
        }
        for n in ["output_hidden", "output"] {
            out.push(format!("{n}.weight"));
            out.push(format!("{n}.bias"));
        }
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ParamSet<U> {
        let mut dense = |d: &Dense<T>| Dense {
            weight: f(&d.weight),
            bias: f(&d.bias),
        };
        let input_block = dense(&self.input_block);
        let projection = dense(&self.projection);
        let memory_layers = self.memory_layers.iter().map(&mut dense).collect();
        let output_hidden = dense(&self.output_hidden);
        let output = dense(&self.output);
        ParamSet {
            input_block,
            projection,
            memory_layers,
            shared_past: f(&self.shared_past),
            shared_future: self.shared_future.as_ref().map(&mut f),
            output_hidden,
            output,
        }
    }
}

/// Shapes of every tensor in declared order.
pub fn param_shapes(config: &RMNConfig) -> Vec<(usize, usize)> {
    let (i, w, m, k) = (
        config.input_dim,
        config.wide_dim,
        config.memory_dim,
        config.num_classes,
    );
    let shared = match config.shared_weight_form {
        SharedWeightForm::Diagonal => (1, m),
        SharedWeightForm::Full => (m, m),
    };
    let mut out = vec![(i, w), (1, w), (w, m), (1, m)];
    for _ in 0..config.num_memory_layers {
        out.extend([(m, m), (1, m)]);
    }
    out.push(shared);
    if config.direction == Direction::Bi {
        out.push(shared);
    }
    out.extend([(m, w), (1, w), (w, k), (1, k)]);
    out
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        params.map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
    }

    /// Elementwise `self += other`, tensor by tensor in declared order.
    pub fn add(&mut self, other: &Gradients) -> Result<()> {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

impl ModelParams {
    /// Builds a parameter set from values listed in declared order.
    pub fn from_values(config: &RMNConfig, values: Vec<Matrix>) -> Result<Self> {
        let shapes = param_shapes(config);
        if values.len() != shapes.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                values.len()
            )));
        }
        for (i, (v, s)) in values.iter().zip(&shapes).enumerate() {
            if v.shape() != *s {
                return Err(Error::Format(format!(
                    "tensor {i} has shape {}x{}, expected {}x{}",
                    v.rows(),
                    v.cols(),
                    s.0,
                    s.1
                )));
            }
        }
        let mut it = values.into_iter().map(Parameter::new);
        let mut next = || it.next().expect("length checked");
        let mut dense = || Dense {
            weight: next(),
            bias: next(),
        };
        let input_block = dense();
        let projection = dense();
        let memory_layers = (0..config.num_memory_layers).map(|_| dense()).collect();
        drop(dense);
        let shared_past = next();
        let shared_future = (config.direction == Direction::Bi).then(&mut next);
        let mut dense = || Dense {
            weight: next(),
            bias: next(),
        };
        let output_hidden = dense();
        let output = dense();
        Ok(ParamSet {
            input_block,
            projection,
            memory_layers,
            shared_past,
            shared_future,
            output_hidden,
            output,
        })
    }

    /// Errors unless every tensor has the shape `config` implies.
    pub fn check_shapes(&self, config: &RMNConfig) -> Result<()> {
        let shapes = param_shapes(config);
        let actual: Vec<_> = self.iter().map(|p| p.value.shape()).collect();
        if actual != shapes {
            return Err(Error::Consistency(format!(
                "parameter shapes {actual:?} do not match configuration {shapes:?}"
            )));
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn num_values(&self) -> usize {
        self.iter().map(Parameter::len).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.iter()
            .flat_map(|p| p.value.as_slice().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.iter()
            .flat_map(|p| p.grad.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_values() {
            return Err(Error::Input(format!(
                "expected {} values, got {}",
                self.num_values(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in self.iter_mut() {
            let n = p.len();
            p.value
                .as_mut_slice()
                .copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Adds a detached gradient buffer into the parameters' accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (p, g) in self.iter_mut().zip(grads.iter()) {
            p.grad.add_assign(g)?;
        }
        Ok(())
    }

    /// Adds uniform noise in `[-scale, scale]` to every value, including the
    /// shared delay weights. Used to move away from the zero-initialised
    /// delay path for probes and gradient checks.
    pub fn perturb(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in self.iter_mut() {
            for v in p.value.as_mut_slice() {
                *v += rng.random_range(-scale..=scale);
            }
        }
    }

    /// Overwrites the shared delay weights with uniform values in `[-scale, scale]`.
    pub fn randomize_shared(&mut self, seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shared = std::iter::once(&mut self.shared_past).chain(self.shared_future.iter_mut());
        for p in shared {
            for v in p.value.as_mut_slice() {
                *v = rng.random_range(-scale..=scale);
            }
        }
    }
}

/// Gaussian weights with standard deviation `0.2/√fan_in`, zero biases, and
/// zero shared delay weights so the first updates learn per-frame features
/// before any temporal information flows.
pub fn init_params(config: &RMNConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = param_shapes(config);
    let shared_range = 4 + 2 * config.num_memory_layers
        ..4 + 2 * config.num_memory_layers + if config.direction == Direction::Bi { 2 } else { 1 };
    let values = shapes
        .iter()
        .enumerate()
        .map(|(i, &(rows, cols))| {
            let is_bias = rows == 1 && !shared_range.contains(&i);
            if is_bias || shared_range.contains(&i) {
                return Matrix::zeros(rows, cols);
            }
            let normal = Normal::new(0.0, 0.2 / (rows as f64).sqrt()).expect("positive std");
            let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
            Matrix::from_vec(rows, cols, data).expect("shape")
        })
        .collect();
    ModelParams::from_values(config, values)
}
