//! Forward and backward passes.
//!
//! Memory layer `l` of `L` computes
//!
//! ```text
//! h_l(t) = v_{l-1}(t) W_l + b_l
//! z_l(t) = h_l(t) + S(h_l(t - m_l)) [+ B(h_l(t + m_l))]
//! v_l(t) = relu(z_l(t)) [+ v_{l-r}(t) at the end of each residual block]
//! ```
//!
//! where `S`/`B` are the shared past/future transforms and taps outside the
//! sequence contribute zero.

use std::ops::Range;

use super::config::{Direction, RMNConfig, SharedWeightForm};
use super::params::{Gradients, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::{
    affine, affine_backward_acc, diag_scale, diag_scale_backward, linear, relu, relu_backward,
    softmax_xent_rows, Matrix,
};

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Matrix,
    pub input_pre: Matrix,
    pub input_act: Matrix,
    pub projection_pre: Matrix,
    /// `v_0 .. v_L`: stack input followed by each layer's output.
    pub layer_out: Vec<Matrix>,
    /// Pre-activation `h_l` of each memory layer, before the delayed terms.
    pub layer_pre: Vec<Matrix>,
    /// `z_l`: argument of each memory layer's relu.
    pub layer_sum: Vec<Matrix>,
    pub hidden_pre: Matrix,
    pub hidden_act: Matrix,
    pub logits: Matrix,
}

impl ForwardCache {
    pub fn frames(&self) -> usize {
        self.input.rows()
    }
}

fn shared_apply(form: SharedWeightForm, x: &Matrix, w: &Matrix) -> Result<Matrix> {
    match form {
        SharedWeightForm::Diagonal => diag_scale(x, w.as_slice()),
        SharedWeightForm::Full => linear(x, w),
    }
}

/// Accumulates the shared-weight gradient and returns the gradient w.r.t. `x`.
fn shared_backward(
    form: SharedWeightForm,
    x: &Matrix,
    w: &Matrix,
    grad_out: &Matrix,
    grad_w: &mut Matrix,
) -> Result<Matrix> {
    match form {
        SharedWeightForm::Diagonal => {
            diag_scale_backward(x, w.as_slice(), grad_out, grad_w.as_mut_slice())
        }
        SharedWeightForm::Full => affine_backward_acc(x, w, grad_out, grad_w, None),
    }
}

/// Runs the network over one sequence (`T x input_dim`, already spliced) and
/// returns the cache together with the `T x num_classes` logits.
pub fn forward(
    params: &ModelParams,
    config: &RMNConfig,
    x: &Matrix,
) -> Result<(ForwardCache, Matrix)> {
    if x.rows() == 0 {
        return Err(Error::Input("empty sequence".into()));
    }
    if x.cols() != config.input_dim {
        return Err(Error::Dimension {
            op: "forward input",
            left: crate::error::Shape(x.rows(), config.input_dim),
            right: crate::error::Shape(x.rows(), x.cols()),
        });
    }
    let layers = config.num_memory_layers;
    if params.memory_layers.len() != layers {
        return Err(Error::Consistency(format!(
            "{} memory layers in parameters, {} in configuration",
            params.memory_layers.len(),
            layers
        )));
    }
    let schedule = config.delay_schedule();
    let form = config.shared_weight_form;

    let input_pre = affine(x, &params.input_block.weight.value, &params.input_block.bias.value)?;
    let input_act = relu(&input_pre);
    let projection_pre = affine(
        &input_act,
        &params.projection.weight.value,
        &params.projection.bias.value,
    )?;

    let mut layer_out = Vec::with_capacity(layers + 1);
    let mut layer_pre = Vec::with_capacity(layers);
    let mut layer_sum = Vec::with_capacity(layers);
    layer_out.push(relu(&projection_pre));

    for l in 1..=layers {
        let dense = &params.memory_layers[l - 1];
        let h = affine(&layer_out[l - 1], &dense.weight.value, &dense.bias.value)?;
        let mut z = h.clone();
        if config.delay_enabled {
            let m = schedule.past(l) as isize;
            z.add_assign(&shared_apply(form, &h.shifted(m), &params.shared_past.value)?)?;
            if config.direction == Direction::Bi {
                let future = shared_future(params)?;
                z.add_assign(&shared_apply(form, &h.shifted(-m), &future.value)?)?;
            }
        }
        let mut v = relu(&z);
        if config.is_shortcut_end(l) {
            let r = config.residual_interval.expect("shortcut implies interval");
            v.add_assign(&layer_out[l - r])?;
        }
        layer_pre.push(h);
        layer_sum.push(z);
        layer_out.push(v);
    }

    let hidden_pre = affine(
        &layer_out[layers],
        &params.output_hidden.weight.value,
        &params.output_hidden.bias.value,
    )?;
    let hidden_act = relu(&hidden_pre);
    let logits = affine(&hidden_act, &params.output.weight.value, &params.output.bias.value)?;

    let cache = ForwardCache {
        input: x.clone(),
        input_pre,
        input_act,
        projection_pre,
        layer_out,
        layer_pre,
        layer_sum,
        hidden_pre,
        hidden_act,
        logits: logits.clone(),
    };
    Ok((cache, logits))
}

fn shared_future(params: &ModelParams) -> Result<&crate::numerics::Parameter> {
    params
        .shared_future
        .as_ref()
        .ok_or_else(|| Error::Consistency("bidirectional network without shared_future".into()))
}

fn check_cache(params: &ModelParams, config: &RMNConfig, cache: &ForwardCache) -> Result<()> {
    let layers = config.num_memory_layers;
    let t = cache.frames();
    let ok = cache.layer_out.len() == layers + 1
        && cache.layer_pre.len() == layers
        && cache.layer_sum.len() == layers
        && params.memory_layers.len() == layers
        && cache.input.cols() == config.input_dim
        && cache.logits.shape() == (t, config.num_classes)
        && cache
            .layer_pre
            .iter()
            .all(|h| h.shape() == (t, config.memory_dim))
        && params.input_block.weight.value.rows() == config.input_dim;
    if !ok {
        return Err(Error::Consistency(
            "forward cache was produced by a different architecture".into(),
        ));
    }
    Ok(())
}

/// Backpropagates cross-entropy over the frames in `rows` into `grads`.
///
/// The logit gradient is scaled by `scale` (e.g. `1/T` for a per-frame mean).
/// Frames outside `rows` are treated as fixed context: delayed taps may read
/// their activations, but no gradient flows back into them. Returns the
/// summed (unscaled) cross-entropy over `rows`.
pub fn backward_into(
    params: &ModelParams,
    config: &RMNConfig,
    cache: &ForwardCache,
    labels: &[usize],
    rows: Range<usize>,
    scale: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    check_cache(params, config, cache)?;
    let t = cache.frames();
    if labels.len() != t {
        return Err(Error::Consistency(format!(
            "{} labels for {} frames",
            labels.len(),
            t
        )));
    }
    if rows.end > t || rows.start > rows.end {
        return Err(Error::Input(format!("frame range {rows:?} outside 0..{t}")));
    }
    let layers = config.num_memory_layers;
    let schedule = config.delay_schedule();
    let form = config.shared_weight_form;

    let (loss, grad_logits) = softmax_xent_rows(&cache.logits, labels, rows.clone(), scale)?;

    let g = affine_backward_acc(
        &cache.hidden_act,
        &params.output.weight.value,
        &grad_logits,
        &mut grads.output.weight,
        Some(&mut grads.output.bias),
    )?;
    let g = relu_backward(&cache.hidden_pre, &g)?;
    let g_top = affine_backward_acc(
        &cache.layer_out[layers],
        &params.output_hidden.weight.value,
        &g,
        &mut grads.output_hidden.weight,
        Some(&mut grads.output_hidden.bias),
    )?;

    let mut g_out: Vec<Option<Matrix>> = vec![None; layers + 1];
    g_out[layers] = Some(g_top);
    let add_into = |slot: &mut Option<Matrix>, g: Matrix| -> Result<()> {
        match slot {
            Some(acc) => acc.add_assign(&g),
            None => {
                *slot = Some(g);
                Ok(())
            }
        }
    };

    for l in (1..=layers).rev() {
        let Some(g_v) = g_out[l].take() else {
            continue;
        };
        if config.is_shortcut_end(l) {
            let r = config.residual_interval.expect("shortcut implies interval");
            add_into(&mut g_out[l - r], g_v.clone())?;
        }
        let g_z = relu_backward(&cache.layer_sum[l - 1], &g_v)?;
        let h = &cache.layer_pre[l - 1];
        let mut g_h = g_z.clone();
        if config.delay_enabled {
            let m = schedule.past(l) as isize;
            let g_tap = shared_backward(
                form,
                &h.shifted(m),
                &params.shared_past.value,
                &g_z,
                &mut grads.shared_past,
            )?;
            g_tap.add_shifted_into(-m, &mut g_h);
            if config.direction == Direction::Bi {
                let future = shared_future(params)?;
                let grad_future = grads.shared_future.as_mut().ok_or_else(|| {
                    Error::Consistency("gradient buffer lacks shared_future".into())
                })?;
                let g_tap =
                    shared_backward(form, &h.shifted(-m), &future.value, &g_z, grad_future)?;
                g_tap.add_shifted_into(m, &mut g_h);
            }
        }
        for r in (0..rows.start).chain(rows.end..t) {
            g_h.row_mut(r).fill(0.0);
        }
        let dense = &params.memory_layers[l - 1];
        let gd = &mut grads.memory_layers[l - 1];
        let g_prev = affine_backward_acc(
            &cache.layer_out[l - 1],
            &dense.weight.value,
            &g_h,
            &mut gd.weight,
            Some(&mut gd.bias),
        )?;
        add_into(&mut g_out[l - 1], g_prev)?;
    }

    let g_v0 = g_out[0]
        .take()
        .unwrap_or_else(|| Matrix::zeros(t, config.memory_dim));
    let g = relu_backward(&cache.projection_pre, &g_v0)?;
    let g = affine_backward_acc(
        &cache.input_act,
        &params.projection.weight.value,
        &g,
        &mut grads.projection.weight,
        Some(&mut grads.projection.bias),
    )?;
    let g = relu_backward(&cache.input_pre, &g)?;
    affine_backward_acc(
        &cache.input,
        &params.input_block.weight.value,
        &g,
        &mut grads.input_block.weight,
        Some(&mut grads.input_block.bias),
    )?;
    Ok(loss)
}

/// Accumulates gradients of the mean per-frame cross-entropy into the
/// parameters' gradient buffers and returns that loss.
pub fn backward(
    params: &mut ModelParams,
    config: &RMNConfig,
    cache: &ForwardCache,
    labels: &[usize],
) -> Result<f64> {
    let t = cache.frames();
    let mut grads = Gradients::zeros_like(params);
    let sum = backward_into(params, config, cache, labels, 0..t, 1.0 / t as f64, &mut grads)?;
    params.accumulate(&grads)?;
    Ok(sum / t as f64)
}

/// Mean per-frame cross-entropy of a sequence, without gradients.
pub fn loss(params: &ModelParams, config: &RMNConfig, x: &Matrix, labels: &[usize]) -> Result<f64> {
    let (_, logits) = forward(params, config, x)?;
    let t = logits.rows();
    let (sum, _) = softmax_xent_rows(&logits, labels, 0..t, 0.0)?;
    Ok(sum / t as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::init_params;

    fn tiny(direction: Direction) -> RMNConfig {
        RMNConfig {
            input_dim: 3,
            wide_dim: 4,
            memory_dim: 3,
            num_memory_layers: 4,
            num_classes: 3,
            direction,
            residual_interval: Some(2),
            ..RMNConfig::default()
        }
    }

    fn seq(t: usize, d: usize) -> Matrix {
        let data = (0..t * d).map(|i| ((i * 7919) % 13) as f64 / 6.0 - 1.0).collect();
        Matrix::from_vec(t, d, data).unwrap()
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let c = tiny(Direction::Uni);
        let p = init_params(&c, 0).unwrap();
        assert!(matches!(
            forward(&p, &c, &Matrix::zeros(0, 3)),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            forward(&p, &c, &Matrix::zeros(2, 4)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn cache_shapes_track_sequence_length() {
        let c = tiny(Direction::Bi);
        let p = init_params(&c, 0).unwrap();
        let (cache, logits) = forward(&p, &c, &seq(9, 3)).unwrap();
        assert_eq!(logits.shape(), (9, 3));
        assert!(cache.layer_out.iter().all(|m| m.rows() == 9));
        assert!(cache.layer_sum.iter().all(|m| m.rows() == 9));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let c = tiny(Direction::Uni);
        let mut p = init_params(&c, 0).unwrap();
        let (cache, _) = forward(&p, &c, &seq(5, 3)).unwrap();
        let other = RMNConfig {
            num_memory_layers: 3,
            ..c.clone()
        };
        let err = backward(&mut p, &other, &cache, &[0; 5]).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
        let err = backward(&mut p, &c, &cache, &[0; 4]).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn all_zero_single_layer_gives_zero_logits() {
        let c = RMNConfig {
            num_memory_layers: 1,
            ..tiny(Direction::Uni)
        };
        let mut p = init_params(&c, 0).unwrap();
        for q in p.iter_mut() {
            q.value.fill(0.0);
        }
        let (_, logits) = forward(&p, &c, &seq(4, 3)).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_accumulates() {
        let c = tiny(Direction::Bi);
        let mut p = init_params(&c, 0).unwrap();
        p.perturb(2, 0.3);
        let x = seq(6, 3);
        let labels = [0, 1, 2, 0, 1, 2];
        let (cache, _) = forward(&p, &c, &x).unwrap();
        backward(&mut p, &c, &cache, &labels).unwrap();
        let once = p.flat_grads();
        backward(&mut p, &c, &cache, &labels).unwrap();
        for (a, b) in p.flat_grads().iter().zip(&once) {
            assert_eq!(*a, 2.0 * b);
        }
        p.zero_grads();
        assert!(p.flat_grads().iter().all(|&v| v == 0.0));
    }
}
