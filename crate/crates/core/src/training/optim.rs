use crate::error::{GmemError, Result};
use crate::numerics::{ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub name: String,
    pub m: Tensor,
    pub v: Tensor,
}

/// Adam with bias correction. Moments are kept per trainable parameter, in
/// the order the stores are visited; frozen parameters are never touched.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig, stores: &[&ParamStore]) -> Self {
        let moments = stores
            .iter()
            .flat_map(|s| s.iter())
            .filter(|p| p.trainable)
            .map(|p| Moments {
                name: p.name.clone(),
                m: Tensor::zeros(p.value.shape()),
                v: Tensor::zeros(p.value.shape()),
            })
            .collect();
        Adam {
            config,
            step: 0,
            moments,
        }
    }

    /// Applies one update from the accumulated `grad` fields.
    pub fn update(&mut self, stores: &mut [&mut ParamStore]) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let mut slots = self.moments.iter_mut();
        for store in stores.iter_mut() {
            for p in store.iter_mut().filter(|p| p.trainable) {
                let mom = slots
                    .next()
                    .ok_or_else(|| GmemError::Contract("optimizer state has fewer tensors than the model".into()))?;
                if mom.name != p.name || mom.m.shape() != p.value.shape() {
                    return Err(GmemError::Contract(format!(
                        "optimizer state for {} does not match parameter {}",
                        mom.name, p.name
                    )));
                }
                let grads = p.grad.data();
                let values = p.value.data_mut();
                let m = mom.m.data_mut();
                let v = mom.v.data_mut();
                for k in 0..values.len() {
                    let g = grads[k];
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        if slots.next().is_some() {
            return Err(GmemError::Contract("optimizer state has more tensors than the model".into()));
        }
        Ok(())
    }
}

/// Rescales all trainable gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(stores: &mut [&mut ParamStore], max_norm: f64) -> f64 {
    let total: f64 = stores
        .iter()
        .flat_map(|s| s.iter())
        .filter(|p| p.trainable)
        .map(|p| p.grad.norm_sq())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && total > max_norm {
        let factor = max_norm / total;
        for store in stores.iter_mut() {
            for p in store.iter_mut().filter(|p| p.trainable) {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
            }
        }
    }
    total
}
