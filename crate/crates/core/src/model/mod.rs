//! Residual memory network architecture.

mod analysis;
pub mod checkpoint;
mod config;
mod gradcheck;
mod network;
mod params;
mod streaming;

pub use analysis::{param_count, param_count_lstmp, probe_receptive_field, receptive_field};
pub use config::{DelaySchedule, Direction, RMNConfig, SharedWeightForm};
pub use gradcheck::{check_gradients, gradcheck_fixture, GradCheckReport};
pub use network::{backward, backward_into, forward, loss, ForwardCache};
pub use params::{init_params, param_shapes, Dense, Gradients, ModelParams, ParamSet};
pub use streaming::{context_window, streaming_forward};

use crate::data::{splice, FeatureStats};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A configuration together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: RMNConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: RMNConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    /// Splices raw features into the network's input layout.
    pub fn prepare_input(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.config.raw_input_dim() {
            return Err(Error::Dimension {
                op: "prepare_input",
                left: crate::error::Shape(features.rows(), self.config.raw_input_dim()),
                right: crate::error::Shape(features.rows(), features.cols()),
            });
        }
        Ok(splice(features, self.config.splice_left, self.config.splice_right))
    }

    /// Logits for raw (unspliced) features.
    pub fn logits(&self, features: &Matrix) -> Result<Matrix> {
        let x = self.prepare_input(features)?;
        Ok(forward(&self.params, &self.config, &x)?.1)
    }

    pub fn param_count(&self) -> u64 {
        param_count(&self.config)
    }

    /// Folds per-dimension normalisation of the raw features into the input
    /// layer, so that a model trained on normalised features can be run on
    /// raw ones.
    pub fn absorb_normalization(&mut self, stats: &FeatureStats) -> Result<()> {
        let raw = self.config.raw_input_dim();
        if stats.mean.len() != raw || stats.std.len() != raw {
            return Err(Error::Config(format!(
                "normalisation covers {} dimensions, model reads {raw}",
                stats.mean.len()
            )));
        }
        let w = &mut self.params.input_block.weight.value;
        let b = &mut self.params.input_block.bias.value;
        for r in 0..w.rows() {
            let i = r % raw;
            let scale = if stats.std[i] > 0.0 { 1.0 / stats.std[i] } else { 1.0 };
            for (wj, bj) in w.row_mut(r).iter_mut().zip(b.as_mut_slice()) {
                *wj *= scale;
                *bj -= stats.mean[i] * *wj;
            }
        }
        Ok(())
    }
}
