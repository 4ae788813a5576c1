use super::{Schedule, TrainConfig};

/// `true` when the validation cross-entropy recorded after epoch `e - 1`
/// is worse than the one after epoch `e - 2`.
fn degraded_before(epoch: usize, valid_ce: &[f64]) -> bool {
    epoch >= 3 && valid_ce.len() >= epoch - 1 && valid_ce[epoch - 2] > valid_ce[epoch - 3]
}

/// Learning rate for `epoch` (1-based) given the validation cross-entropy of
/// every completed epoch (`valid_ce[0]` belongs to epoch 1).
///
/// `RampThenHalve` climbs linearly from `base_lr` to `peak_lr` over the first
/// `ramp_epochs + 1` epochs, then keeps the rate and multiplies it by
/// `halve_factor` each time validation loss degrades between consecutive
/// epochs. `ConstantThenHalve` applies the same halving to `base_lr` from
/// epoch 2 on.
pub fn lr_for_epoch(config: &TrainConfig, epoch: usize, valid_ce: &[f64]) -> f64 {
    let epoch = epoch.max(1);
    match config.schedule {
        Schedule::RampThenHalve => {
            let ramp = config.ramp_epochs;
            if epoch <= ramp + 1 {
                if ramp == 0 {
                    return config.peak_lr;
                }
                let k = (epoch - 1) as f64;
                let r = ramp as f64;
                return ((r - k) * config.base_lr + k * config.peak_lr) / r;
            }
            let halvings = (ramp + 2..=epoch)
                .filter(|&e| degraded_before(e, valid_ce))
                .count();
            config.peak_lr * config.halve_factor.powi(halvings as i32)
        }
        Schedule::ConstantThenHalve => {
            let halvings = (2..=epoch)
                .filter(|&e| degraded_before(e, valid_ce))
                .count();
            config.base_lr * config.halve_factor.powi(halvings as i32)
        }
    }
}
