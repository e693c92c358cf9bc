use serde::{Deserialize, Serialize};

use super::mlp::Mlp;

/// Bias-corrected Adam moments for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Mlp,
    v: Mlp,
}

impl Adam {
    pub fn new(net: &Mlp) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: net.zeros_like(),
            v: net.zeros_like(),
        }
    }

    pub fn apply(&mut self, net: &mut Mlp, grad: &Mlp, lr: f64) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let gl = &grad.layers[l];
            let ml = &mut self.m.layers[l];
            let vl = &mut self.v.layers[l];
            for (((p, &g), m), v) in layer
                .w
                .iter_mut()
                .zip(gl.w.iter())
                .zip(ml.w.iter_mut())
                .zip(vl.w.iter_mut())
            {
                update(p, g, m, v);
            }
            for (((p, &g), m), v) in layer
                .b
                .iter_mut()
                .zip(gl.b.iter())
                .zip(ml.b.iter_mut())
                .zip(vl.b.iter_mut())
            {
                update(p, g, m, v);
            }
        }
    }
}
