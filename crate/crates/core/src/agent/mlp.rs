use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// Bounded to (-1, 1); odd, so a zero network outputs zero.
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer computing `act(x·Wᵀ + b)`; `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpGrads {
    pub fn scale(&mut self, alpha: f64) {
        for (w, b) in &mut self.layers {
            *w *= alpha;
            *b *= alpha;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }
}

/// Intermediate values of a batched forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds the input")
    }
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self, AgentError> {
        if layers.is_empty() {
            return Err(AgentError::Usage("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(AgentError::Dimension {
                    context: format!("bias of layer {i}"),
                    expected: layer.output_dim(),
                    found: layer.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(AgentError::Dimension {
                    context: format!("input of layer {i}"),
                    expected: layers[i - 1].output_dim(),
                    found: layer.input_dim(),
                });
            }
            if !layer
                .weights
                .iter()
                .chain(layer.bias.iter())
                .all(|v| v.is_finite())
            {
                return Err(AgentError::Numeric(format!(
                    "layer {i} holds non-finite parameters"
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                weights: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
                activation: if i + 2 == dims.len() { output } else { hidden },
            })
            .collect();
        Self { layers }
    }

    /// Fan-in uniform initialisation; the output layer is drawn from
    /// `±final_scale` so initial outputs sit near zero.
    pub fn random<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        final_scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeros(dims, hidden, output);
        let n = net.layers.len();
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let bound = if i + 1 == n {
                final_scale
            } else {
                1.0 / (layer.input_dim() as f64).sqrt()
            };
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
            layer
                .bias
                .mapv_inplace(|_| rng.random_range(-bound..=bound));
        }
        net
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    /// Layer widths from input to output, e.g. `[48, 64, 64, 2]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters in storage order: per layer, row-major weights then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<(), AgentError> {
        if values.len() != self.param_count() {
            return Err(AgentError::Dimension {
                context: "parameter vector".into(),
                expected: self.param_count(),
                found: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, cols: usize) -> Result<(), AgentError> {
        if cols != self.input_dim() {
            return Err(AgentError::Dimension {
                context: "network input".into(),
                expected: self.input_dim(),
                found: cols,
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, AgentError> {
        self.check_input(input.ncols())?;
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weights.t());
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache, AgentError> {
        self.check_input(input.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(input.to_owned());
        for layer in &self.layers {
            let mut z = activations.last().unwrap().dot(&layer.weights.t());
            z += &layer.bias;
            let a = z.mapv(|v| layer.activation.apply(v));
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Backpropagates `output_grad` (∂L/∂output, batch × out) and returns the
    /// parameter gradients together with ∂L/∂input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>), AgentError> {
        let out = cache.output();
        if output_grad.dim() != out.dim() {
            return Err(AgentError::Dimension {
                context: "output gradient".into(),
                expected: out.len(),
                found: output_grad.len(),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre_activations[l];
            let a = &cache.activations[l + 1];
            let mut dz = upstream;
            Zip::from(&mut dz)
                .and(z)
                .and(a)
                .for_each(|g, &z, &a| *g *= layer.activation.derivative(z, a));
            let dw = dz.t().dot(&cache.activations[l]);
            let db = dz.sum_axis(Axis(0));
            upstream = dz.dot(&layer.weights);
            grads.push((dw, db));
        }
        grads.reverse();
        let grads = MlpGrads { layers: grads };
        if !grads.is_finite() || upstream.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::Numeric("non-finite gradient".into()));
        }
        Ok((grads, upstream))
    }

    /// Value and parameter gradient of a scalar loss of the batched output.
    /// `loss` returns the loss and its gradient w.r.t. the output.
    pub fn gradients<F>(
        &self,
        input: ArrayView2<f64>,
        loss: F,
    ) -> Result<(f64, MlpGrads), AgentError>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let cache = self.forward_cached(input)?;
        let (value, dout) = loss(cache.output());
        if !value.is_finite() {
            return Err(AgentError::Numeric(format!("non-finite loss {value}")));
        }
        let (grads, _) = self.backward(&cache, dout.view())?;
        Ok((value, grads))
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.dim() == b.weights.dim() && a.activation == b.activation)
    }
}

/// Polyak averaging `θ' ← τθ + (1 − τ)θ'` of every parameter.
pub fn soft_update(target: &Mlp, online: &Mlp, tau: f64) -> Result<Mlp, AgentError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(AgentError::Usage(format!(
            "tau must lie in (0, 1], got {tau}"
        )));
    }
    if !target.same_shape(online) {
        return Err(AgentError::Usage(format!(
            "soft update between mismatched networks {:?} and {:?}",
            target.dims(),
            online.dims()
        )));
    }
    let mut next = target.clone();
    soft_update_in_place(&mut next, online, tau);
    Ok(next)
}

pub(crate) fn soft_update_in_place(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weights)
            .and(&o.weights)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net(seed: u64, out: Activation) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::random(&[5, 7, 6, 3], Activation::Tanh, out, 0.5, &mut rng)
    }

    /// Central finite differences of `loss(net.forward(x))` per parameter.
    fn finite_difference<F>(net: &Mlp, x: ArrayView2<f64>, loss: F, h: f64) -> Vec<f64>
    where
        F: Fn(&Array2<f64>) -> f64,
    {
        let base = net.params();
        let mut probe = net.clone();
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] = base[i] + h;
                probe.set_params(&p).unwrap();
                let up = loss(&probe.forward(x).unwrap());
                p[i] = base[i] - h;
                probe.set_params(&p).unwrap();
                let down = loss(&probe.forward(x).unwrap());
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn one_one_one_tanh_net() {
        let layers = vec![
            Layer {
                weights: array![[1.0]],
                bias: array![0.0],
                activation: Activation::Relu,
            },
            Layer {
                weights: array![[1.0]],
                bias: array![0.0],
                activation: Activation::Tanh,
            },
        ];
        let net = Mlp::new(layers).unwrap();
        // tanh(0.5), evaluated independently.
        assert_eq!(net.forward_one(&[0.5]).unwrap(), vec![0.46211715726000974]);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let layers = vec![
            Layer {
                weights: Array2::zeros((3, 2)),
                bias: Array1::zeros(3),
                activation: Activation::Relu,
            },
            Layer {
                weights: Array2::zeros((1, 4)),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            },
        ];
        assert!(matches!(
            Mlp::new(layers),
            Err(AgentError::Dimension { .. })
        ));
    }

    #[test]
    fn wrong_input_width_is_dimension_error() {
        let net = small_net(1, Activation::Identity);
        assert!(matches!(
            net.forward_one(&[0.0; 4]),
            Err(AgentError::Dimension {
                expected: 5,
                found: 4,
                ..
            })
        ));
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let net = small_net(2, Activation::Identity);
        let x = Array2::from_elem((4, 5), 0.3);
        let (_, g) = net
            .gradients(x.view(), |out| (1.0, Array2::zeros(out.dim())))
            .unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn analytic_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..20 {
            let net = small_net(seed, Activation::Identity);
            let x = Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0));
            let target = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
            let loss = |out: &Array2<f64>| (out - &target).mapv(|d| d * d).sum();
            let (_, g) = net
                .gradients(x.view(), |out| (loss(out), (out - &target) * 2.0))
                .unwrap();
            let fd = finite_difference(&net, x.view(), loss, 1e-5);
            for (a, n) in g.flat().iter().zip(&fd) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
                assert!(rel <= 1e-4, "seed {seed}: analytic {a} vs fd {n}");
            }
        }
    }

    #[test]
    fn scaled_loss_scales_gradient() {
        let net = small_net(3, Activation::Tanh);
        let x = Array2::from_elem((2, 5), -0.4);
        let (_, g1) = net
            .gradients(x.view(), |out| (out.sum(), Array2::ones(out.dim())))
            .unwrap();
        let (_, g3) = net
            .gradients(x.view(), |out| {
                (3.0 * out.sum(), Array2::from_elem(out.dim(), 3.0))
            })
            .unwrap();
        let mut expected = g1.clone();
        expected.scale(3.0);
        for (a, b) in g3.flat().iter().zip(expected.flat()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let net = small_net(4, Activation::Identity);
        let x = Array2::zeros((1, 5));
        let r = net.gradients(x.view(), |out| (f64::NAN, Array2::zeros(out.dim())));
        assert!(matches!(r, Err(AgentError::Numeric(_))));
    }

    #[test]
    fn soft_update_examples() {
        let online = small_net(5, Activation::Tanh);
        let target = small_net(6, Activation::Tanh);
        assert_eq!(soft_update(&target, &online, 1.0).unwrap(), online);

        let mut zero = online.clone();
        zero.set_params(&vec![0.0; online.param_count()]).unwrap();
        let mut two = online.clone();
        two.set_params(&vec![2.0; online.param_count()]).unwrap();
        let mid = soft_update(&zero, &two, 0.5).unwrap();
        assert!(mid.params().iter().all(|&v| v == 1.0));

        assert!(soft_update(&target, &online, 0.0).is_err());
        assert!(soft_update(&target, &online, 1.5).is_err());
        let other = Mlp::zeros(&[5, 2], Activation::Relu, Activation::Tanh);
        assert!(soft_update(&target, &other, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn soft_update_contracts_towards_online(seed in 0u64..1000, tau in 0.001f64..1.0) {
            let online = small_net(seed, Activation::Tanh);
            let target = small_net(seed + 1, Activation::Tanh);
            let next = soft_update(&target, &online, tau).unwrap();
            for ((n, t), o) in next.params().iter().zip(target.params()).zip(online.params()) {
                let lo = t.min(o) - 1e-12;
                let hi = t.max(o) + 1e-12;
                prop_assert!(*n >= lo && *n <= hi);
                let expected = (1.0 - tau) * (t - o).abs();
                prop_assert!(((n - o).abs() - expected).abs() <= 1e-12);
            }
        }
    }
}
