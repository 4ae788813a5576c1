use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{backward, forward, init_params, loss, ForwardCache, ModelParams, RMNConfig};
use crate::error::Result;
use crate::numerics::{Matrix, DEFAULT_GRAD_CHECK_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter holding the worst entry.
    pub worst: String,
    pub checked: usize,
}

/// Smallest distance of any relu argument from the kink at zero.
fn relu_margin(cache: &ForwardCache) -> f64 {
    std::iter::once(&cache.input_pre)
        .chain(&cache.layer_sum)
        .chain(std::iter::once(&cache.hidden_pre))
        .flat_map(|m| m.as_slice())
        .fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
}

/// Central differences straddling a relu kink measure a one-sided mix of two
/// slopes, so fixtures whose relu arguments come this close to zero are
/// redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

/// Rounding in the loss leaves central differences at `eps = 1e-5` with an
/// absolute noise of roughly 1e-11, so entries smaller than this are compared
/// on an absolute basis instead of a relative one.
pub const GRAD_FLOOR: f64 = 1e-6;

/// A seeded tiny model with every weight (shared ones included) moved well
/// away from its initial value, plus random inputs and labels. The draw is
/// repeated until no relu argument lies within [`KINK_MARGIN`] of zero.
pub fn gradcheck_fixture(
    config: &RMNConfig,
    frames: usize,
    seed: u64,
) -> Result<(ModelParams, Matrix, Vec<usize>)> {
    config.validate()?;
    let mut best = None;
    for attempt in 0..64u64 {
        let s = seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut params = init_params(config, s)?;
        params.perturb(s ^ 0xa5a5, 0.5);
        params.randomize_shared(s ^ 0x5a5a, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(s ^ 0xfeed);
        let data = (0..frames * config.input_dim)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let x = Matrix::from_vec(frames, config.input_dim, data)?;
        let labels = (0..frames)
            .map(|_| rng.random_range(0..config.num_classes))
            .collect();
        let margin = relu_margin(&forward(&params, config, &x)?.0);
        if margin >= KINK_MARGIN {
            return Ok((params, x, labels));
        }
        if best.as_ref().is_none_or(|(m, _)| margin > *m) {
            best = Some((margin, (params, x, labels)));
        }
    }
    // large configurations may never clear the margin; use the widest draw
    Ok(best.expect("at least one draw").1)
}

/// Compares backpropagated gradients of the mean-frame loss with central
/// differences over every parameter entry. `corrupt` may tamper with the
/// analytic gradient before the comparison.
pub fn check_gradients(
    config: &RMNConfig,
    frames: usize,
    seed: u64,
    corrupt: Option<&dyn Fn(&mut [f64])>,
) -> Result<GradCheckReport> {
    let (mut params, x, labels) = gradcheck_fixture(config, frames, seed)?;
    let (cache, _) = forward(&params, config, &x)?;
    params.zero_grads();
    backward(&mut params, config, &cache, &labels)?;
    let mut analytic = params.flat_grads();
    if let Some(f) = corrupt {
        f(&mut analytic);
    }

    let theta = params.flat_values();
    let mut probe = params.clone();
    let mut owner = Vec::with_capacity(theta.len());
    for (name, p) in params.names().into_iter().zip(params.iter()) {
        owner.extend(std::iter::repeat_n(name, p.len()));
    }
    let eps = DEFAULT_GRAD_CHECK_EPS;
    let mut eval = |th: &[f64]| -> Result<f64> {
        probe.set_flat_values(th)?;
        loss(&probe, config, &x, &labels)
    };
    let mut th = theta.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: theta.len(),
    };
    for i in 0..th.len() {
        th[i] = theta[i] + eps;
        let up = eval(&th)?;
        th[i] = theta[i] - eps;
        let down = eval(&th)?;
        th[i] = theta[i];
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(GRAD_FLOOR);
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = owner[i].clone();
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Direction;

    fn tiny(direction: Direction) -> RMNConfig {
        RMNConfig {
            input_dim: 6,
            wide_dim: 8,
            memory_dim: 5,
            num_memory_layers: 3,
            num_classes: 4,
            direction,
            ..RMNConfig::default()
        }
    }

    #[test]
    fn uni_and_bi_pass() {
        for d in [Direction::Uni, Direction::Bi] {
            let r = check_gradients(&tiny(d), 7, 1, None).unwrap();
            assert!(r.max_rel_error < 1e-4, "{d}: {r:?}");
        }
    }

    #[test]
    fn corruption_is_caught() {
        let bump = |g: &mut [f64]| g[3] += 0.1;
        let r = check_gradients(&tiny(Direction::Uni), 7, 1, Some(&bump)).unwrap();
        assert!(r.max_rel_error > 1e-2);
        assert_eq!(r.worst, "input_block.weight");
    }
}
