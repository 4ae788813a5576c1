use crate::error::{Error, Result};
use crate::model::ModelParams;

/// One momentum SGD update with coupled L2 decay, then clears the gradients:
///
/// ```text
/// velocity <- momentum * velocity - lr * (grad + l2 * value)
/// value    <- value + velocity
/// ```
pub fn sgd_step(params: &mut ModelParams, lr: f64, momentum: f64, l2: f64) -> Result<()> {
    let names = params.names();
    for (name, p) in names.iter().zip(params.iter()) {
        if !p.grad.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in {name}")));
        }
    }
    for (name, p) in names.iter().zip(params.iter_mut()) {
        let value = p.value.as_mut_slice();
        let vel = p.velocity.as_mut_slice();
        for ((v, u), &g) in value.iter_mut().zip(vel.iter_mut()).zip(p.grad.as_slice()) {
            *u = momentum * *u - lr * (g + l2 * *v);
            *v += *u;
        }
        if !p.value.is_finite() {
            return Err(Error::Numeric(format!("update made {name} non-finite (lr {lr})")));
        }
        p.zero_grad();
    }
    Ok(())
}
