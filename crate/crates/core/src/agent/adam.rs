use ndarray::{Array1, Array2, Zip};

use super::mlp::{Mlp, MlpGrads};

/// Adam optimiser state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros: Vec<_> = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        if self.lr == 0.0 {
            return;
        }
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut layer.weights)
                .and(mw)
                .and(vw)
                .and(gw)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(gb)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::mlp::Activation;
    use ndarray::Array2;

    #[test]
    fn descends_a_quadratic() {
        // Single linear unit fitting y = 2x.
        let mut net = Mlp::zeros(&[1, 1], Activation::Identity, Activation::Identity);
        let mut opt = Adam::new(&net, 0.05);
        let x = Array2::from_shape_vec((4, 1), vec![-1.0, -0.5, 0.5, 1.0]).unwrap();
        let y = &x * 2.0;
        for _ in 0..2000 {
            let (_, g) = net
                .gradients(x.view(), |out| {
                    let d = out - &y;
                    (d.mapv(|v| v * v).mean().unwrap(), d * (2.0 / 4.0))
                })
                .unwrap();
            opt.step(&mut net, &g);
        }
        assert!((net.layers()[0].weights[[0, 0]] - 2.0).abs() < 1e-3);
    }
}
