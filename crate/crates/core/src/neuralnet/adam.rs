use serde::{Deserialize, Serialize};

use super::{Gradients, NetConfig, Params, QNetwork};
use crate::scalar::Scalar;

/// Adaptive-moment optimizer. Embedding rows are updated only when the
/// batch read them; their moments stay frozen otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub settings: AdamSettings,
    pub steps: u64,
    m: Params<T>,
    v: Params<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: &NetConfig, settings: AdamSettings) -> Self {
        Adam {
            settings,
            steps: 0,
            m: Params::zeros(config),
            v: Params::zeros(config),
        }
    }

    /// Applies one update. A gradient with a non-finite entry is dropped
    /// and `false` returned.
    pub fn step(&mut self, net: &mut QNetwork<T>, grads: &Gradients<T>) -> bool {
        if !grads.is_finite() {
            log::warn!("non-finite gradient, update skipped");
            return false;
        }
        self.steps += 1;
        let s = self.settings;
        let t = self.steps as i32;
        let b1 = T::of(s.beta1);
        let b2 = T::of(s.beta2);
        let one = T::one();
        let c1 = T::of(1.0 - s.beta1.powi(t));
        let c2 = T::of(1.0 - s.beta2.powi(t));
        let lr = T::of(s.lr);
        let eps = T::of(s.eps);
        let width = net.config().embed_dim;
        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        let mut params = net.params.slices_mut();
        let gs = grads.params.slices();
        let mut ms = self.m.slices_mut();
        let mut vs = self.v.slices_mut();
        for k in 0..params.len() {
            let (p, g, m, v) = (&mut *params[k], gs[k], &mut *ms[k], &mut *vs[k]);
            if k == 0 {
                for (row, &hit) in grads.touched.iter().enumerate() {
                    if hit {
                        for i in row * width..(row + 1) * width {
                            update(&mut p[i], g[i], &mut m[i], &mut v[i]);
                        }
                    }
                }
            } else {
                for i in 0..p.len() {
                    update(&mut p[i], g[i], &mut m[i], &mut v[i]);
                }
            }
        }
        true
    }
}
