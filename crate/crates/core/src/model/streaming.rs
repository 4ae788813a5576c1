use std::ops::Range;

use super::config::RMNConfig;
use super::network::forward;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Frames a chunk must be evaluated with: enough history to serve every
/// delay tap exactly, plus `lookahead` frames of future, clipped to the
/// sequence.
pub fn context_window(
    config: &RMNConfig,
    frames: usize,
    chunk: &Range<usize>,
    lookahead: usize,
) -> Range<usize> {
    let start = chunk.start.saturating_sub(config.model_past_reach());
    let end = (chunk.end + lookahead).min(frames);
    start..end
}

/// Bounded-latency evaluation: `x` is consumed in chunks of `chunk_size`
/// frames and each chunk only sees `lookahead` frames past its end. Frames
/// beyond that horizon are treated exactly like the end of the sequence.
///
/// With `lookahead` at least the model's future reach the result equals
/// [`forward`] on the whole sequence; unidirectional models need none.
pub fn streaming_forward(
    params: &ModelParams,
    config: &RMNConfig,
    x: &Matrix,
    chunk_size: usize,
    lookahead: usize,
) -> Result<Matrix> {
    if chunk_size == 0 {
        return Err(Error::Input("chunk_size must be at least 1".into()));
    }
    let t = x.rows();
    if t == 0 {
        return Err(Error::Input("empty sequence".into()));
    }
    let mut out = Matrix::zeros(t, config.num_classes);
    for start in (0..t).step_by(chunk_size) {
        let chunk = start..(start + chunk_size).min(t);
        let window = context_window(config, t, &chunk, lookahead);
        let (_, logits) = forward(params, config, &x.slice_rows(window.start, window.end))?;
        for r in chunk {
            out.row_mut(r).copy_from_slice(logits.row(r - window.start));
        }
    }
    Ok(out)
}
