use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Direction, RMNConfig, SharedWeightForm};
use super::network::forward;
use super::params::ModelParams;
use crate::data::splice;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Closed-form number of trainable values for `config`.
pub fn param_count(config: &RMNConfig) -> u64 {
    let (i, w, m, k, l) = (
        config.input_dim as u64,
        config.wide_dim as u64,
        config.memory_dim as u64,
        config.num_classes as u64,
        config.num_memory_layers as u64,
    );
    let shared = match config.shared_weight_form {
        SharedWeightForm::Diagonal => m,
        SharedWeightForm::Full => m * m,
    };
    let shared_total = match config.direction {
        Direction::Uni => shared,
        Direction::Bi => 2 * shared,
    };
    i * w + w + w * m + m + l * (m * m + m) + m * w + w + w * k + k + shared_total
}

/// Parameters of a stack of projected LSTM layers (no peepholes) followed by
/// a softmax layer on the projection output.
pub fn param_count_lstmp(
    layers: usize,
    cells: usize,
    proj: usize,
    input_dim: usize,
    num_classes: usize,
) -> u64 {
    let (c, p) = (cells as u64, proj as u64);
    let mut total = 0u64;
    for layer in 0..layers {
        let input = if layer == 0 { input_dim as u64 } else { p };
        total += 4 * c * (input + p) + 4 * c + p * c;
    }
    total + p * num_classes as u64 + num_classes as u64
}

/// Analytic bound on the input frames visible from one output frame, as
/// `(past, future)`. Delays compound through the stack, so the memory layers
/// alone reach `L(L+1)/2` frames; splicing adds its own context.
pub fn receptive_field(config: &RMNConfig) -> (usize, usize) {
    (
        config.splice_left + config.model_past_reach(),
        config.splice_right + config.model_future_reach(),
    )
}

/// Measures the receptive field by perturbing single raw input frames of a
/// random `frames`-long sequence and recording which output frames change at
/// all. Frames outside the reach never read the bumped input, so they stay
/// bit-identical, while paths through many small initial weights can shrink
/// a genuine change far below any fixed threshold.
///
/// Shared delay weights that are still all zero (as after initialisation)
/// are replaced by random values first; otherwise no delayed path would
/// carry signal.
pub fn probe_receptive_field(
    params: &ModelParams,
    config: &RMNConfig,
    frames: usize,
    seed: u64,
) -> Result<(usize, usize)> {
    config.validate()?;
    params.check_shapes(config)?;
    let (past, future) = receptive_field(config);
    if frames < past + future + 2 {
        return Err(Error::Window(format!(
            "{frames} frames cannot expose a receptive field of {past} past + {future} future frames"
        )));
    }
    let mut params = params.clone();
    let is_zero = |m: &Matrix| m.as_slice().iter().all(|&v| v == 0.0);
    if is_zero(&params.shared_past.value)
        || params.shared_future.as_ref().is_some_and(|p| is_zero(&p.value))
    {
        params.randomize_shared(seed ^ 0x5eed, 1.0);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = config.raw_input_dim();
    let data = (0..frames * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw = Matrix::from_vec(frames, dim, data)?;
    let run = |raw: &Matrix| -> Result<Matrix> {
        let x = splice(raw, config.splice_left, config.splice_right);
        Ok(forward(&params, config, &x)?.1)
    };
    let base = run(&raw)?;

    // Every frame in `future..frames-past` has room for both reaches.
    let lo = future;
    let hi = frames - past;
    // A relu that happens to be off can hide a path at one site, so try many.
    let step = ((hi - lo) / 64).max(1);
    let (mut seen_past, mut seen_future) = (0usize, 0usize);
    for c in (lo..hi).step_by(step) {
        let mut bumped = raw.clone();
        for v in bumped.row_mut(c) {
            *v += if rng.random_bool(0.5) { 5.0 } else { -5.0 };
        }
        let out = run(&bumped)?;
        for t in 0..frames {
            let moved = base
                .row(t)
                .iter()
                .zip(out.row(t))
                .any(|(a, b)| a != b);
            if moved {
                if t >= c {
                    seen_past = seen_past.max(t - c);
                } else {
                    seen_future = seen_future.max(c - t);
                }
            }
        }
    }
    Ok((seen_past, seen_future))
}
