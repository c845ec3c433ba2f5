use std::cell::RefCell;

use rand::Rng;

use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

/// Fully connected layer computing `x · weight + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `in x out`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Matrix::zeros(input, output),
            bias: Matrix::zeros(1, output),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt() as f32;
        let data = (0..input * output)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Linear {
            weight: Matrix::from_vec(input, output, data).expect("sized"),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Multi-layer perceptron with ReLU hidden activations and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
}

/// Layer inputs recorded by [`Mlp::forward`]; `inputs[0]` is the network input.
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
}

/// Forward-mode tangents recorded by [`Mlp::jvp`].
#[derive(Clone, Debug)]
pub struct TangentCache {
    tangents: Vec<Matrix>,
}

impl Mlp {
    /// Builds a network with layer widths `sizes` (input first, output last).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let layers = sizes
            .windows(2)
            .map(|w| Linear::glorot(w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("MLP without layers".into()));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::dim(
                    "Mlp::from_layers",
                    w[0].output_dim(),
                    w[1].input_dim(),
                ));
            }
        }
        for l in &layers {
            if l.bias.shape() != (1, l.output_dim()) {
                return Err(Error::dim("Mlp::from_layers bias", l.output_dim(), l.bias.cols()));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Linear::output_dim));
        s
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("mlp_forward", self.input_dim(), x.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weight)?;
            z.add_row_vector(layer.bias.data())?;
            if i < last {
                z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                trace_mask(&z);
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        Ok((h, MlpCache { inputs }))
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.matmul(&self.layers[0].weight)?;
        h.add_row_vector(self.layers[0].bias.data())?;
        for layer in &self.layers[1..] {
            h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            trace_mask(&h);
            h = h.matmul(&layer.weight)?;
            h.add_row_vector(layer.bias.data())?;
        }
        Ok(h)
    }

    /// Reverse-mode pass: returns parameter gradients and the gradient with
    /// respect to the network input.
    pub fn backward(&self, cache: &MlpCache, upstream: &Matrix) -> Result<(Mlp, Matrix)> {
        let batch = cache.inputs[0].rows();
        if upstream.shape() != (batch, self.output_dim()) {
            return Err(Error::dim(
                "mlp_backward",
                format!("{}x{}", batch, self.output_dim()),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            let dw = input.t_matmul(&delta)?;
            let db = delta.sum_rows();
            let mut dx = delta.matmul_t(&layer.weight)?;
            if i > 0 {
                relu_mask(&mut dx, input);
            }
            grads.push(Linear { weight: dw, bias: db });
            delta = dx;
        }
        grads.reverse();
        Ok((Mlp { layers: grads }, delta))
    }

    /// Forward-mode derivative along `tangent` at the point recorded in `cache`.
    /// Returns the output tangent `J · tangent` per row.
    pub fn jvp(&self, cache: &MlpCache, tangent: &Matrix) -> Result<(Matrix, TangentCache)> {
        cache.inputs[0].check_same_shape(tangent, "mlp_jvp")?;
        let mut tangents = Vec::with_capacity(self.layers.len());
        let mut t = tangent.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = t.matmul(&layer.weight)?;
            if i + 1 < self.layers.len() {
                relu_mask(&mut next, &cache.inputs[i + 1]);
            }
            tangents.push(std::mem::replace(&mut t, next));
        }
        Ok((t, TangentCache { tangents }))
    }

    /// Parameter gradient of `Σ upstream ⊙ (J · tangent)`, treating ReLU
    /// masks as locally constant. Bias gradients are zero.
    pub fn jvp_param_grads(
        &self,
        cache: &MlpCache,
        tangent_cache: &TangentCache,
        upstream: &Matrix,
    ) -> Result<Mlp> {
        let batch = cache.inputs[0].rows();
        if upstream.shape() != (batch, self.output_dim()) {
            return Err(Error::dim("mlp_jvp_param_grads", self.output_dim(), upstream.cols()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dw = tangent_cache.tangents[i].t_matmul(&delta)?;
            grads.push(Linear {
                weight: dw,
                bias: Matrix::zeros(1, layer.output_dim()),
            });
            if i > 0 {
                let mut dx = delta.matmul_t(&layer.weight)?;
                relu_mask(&mut dx, &cache.inputs[i]);
                delta = dx;
            }
        }
        grads.reverse();
        Ok(Mlp { layers: grads })
    }
}

thread_local! {
    static MASK_TRACE: RefCell<Option<Vec<u64>>> = const { RefCell::new(None) };
}

/// Runs `f` while recording a fingerprint of every ReLU activation pattern
/// computed on this thread.
pub(crate) fn with_mask_trace<T>(f: impl FnOnce() -> T) -> (T, Vec<u64>) {
    MASK_TRACE.with(|t| *t.borrow_mut() = Some(Vec::new()));
    let out = f();
    let trace = MASK_TRACE.with(|t| t.borrow_mut().take()).unwrap_or_default();
    (out, trace)
}

fn trace_mask(h: &Matrix) {
    MASK_TRACE.with(|t| {
        if let Some(trace) = t.borrow_mut().as_mut() {
            let mut hash = 0xcbf2_9ce4_8422_2325u64;
            for &v in h.data() {
                hash ^= (v > 0.0) as u64;
                hash = hash.wrapping_mul(0x0100_0000_01b3);
            }
            trace.push(hash);
        }
    });
}

fn relu_mask(grad: &mut Matrix, activation: &Matrix) {
    for (g, &a) in grad.data_mut().iter_mut().zip(activation.data()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

impl ParamSet for Mlp {
    fn tensors(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_grads_close, finite_difference};
    use crate::rng::stream_rng;

    fn random_input(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = stream_rng(seed, 99);
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::from_layers(vec![Linear::zeros(4, 3), Linear::zeros(3, 2)]).unwrap();
        let out = net.predict(&random_input(5, 4, 1)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Mlp::from_layers(vec![Linear {
            weight: Matrix::identity(3),
            bias: Matrix::zeros(1, 3),
        }])
        .unwrap();
        let x = random_input(4, 3, 2);
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn forward_matches_scalar_loops() {
        let mut rng = stream_rng(3, 0);
        let net = Mlp::new(&[4, 5, 2], &mut rng);
        let x = random_input(3, 4, 3);
        let out = net.predict(&x).unwrap();
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        for b in 0..3 {
            let mut hidden = [0.0f64; 5];
            for (j, h) in hidden.iter_mut().enumerate() {
                let mut s = l0.bias.get(0, j) as f64;
                for i in 0..4 {
                    s += x.get(b, i) as f64 * l0.weight.get(i, j) as f64;
                }
                *h = s.max(0.0);
            }
            for k in 0..2 {
                let mut s = l1.bias.get(0, k) as f64;
                for (j, h) in hidden.iter().enumerate() {
                    s += h * l1.weight.get(j, k) as f64;
                }
                assert!((s - out.get(b, k) as f64).abs() < 1e-6);
            }
        }
        let (cached, _) = net.forward(&x).unwrap();
        assert_eq!(cached, out);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let mut rng = stream_rng(3, 0);
        let net = Mlp::new(&[4, 5, 2], &mut rng);
        assert!(matches!(
            net.forward(&random_input(2, 3, 1)),
            Err(Error::Dimension { .. })
        ));
        let (_, cache) = net.forward(&random_input(2, 4, 1)).unwrap();
        assert!(net.backward(&cache, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream_rng(4, 0);
        let net = Mlp::new(&[3, 8, 8, 1], &mut rng);
        let x = random_input(6, 3, 4);
        let w = random_input(6, 1, 5);
        let loss = |n: &Mlp| -> f64 {
            let y = n.predict(&x).unwrap();
            y.data()
                .iter()
                .zip(w.data())
                .map(|(a, b)| (*a as f64) * (*b as f64) + 0.5 * (*a as f64).powi(2))
                .sum()
        };
        let (y, cache) = net.forward(&x).unwrap();
        let mut up = y.clone();
        for (u, wv) in up.data_mut().iter_mut().zip(w.data()) {
            *u += wv;
        }
        let (grads, dx) = net.backward(&cache, &up).unwrap();
        let numeric = finite_difference(&net, 1e-3, loss);
        assert_grads_close(&grads, &numeric, 1e-3);

        // input gradient
        let mut xp = x.clone();
        for i in 0..x.data().len() {
            let orig = xp.data()[i];
            xp.data_mut()[i] = orig + 1e-3;
            let yp = net.predict(&xp).unwrap();
            xp.data_mut()[i] = orig - 1e-3;
            let ym = net.predict(&xp).unwrap();
            xp.data_mut()[i] = orig;
            let f = |y: &Matrix| -> f64 {
                y.data()
                    .iter()
                    .zip(w.data())
                    .map(|(a, b)| (*a as f64) * (*b as f64) + 0.5 * (*a as f64).powi(2))
                    .sum()
            };
            let num = (f(&yp) - f(&ym)) / 2e-3;
            assert!((num - dx.data()[i] as f64).abs() < 1e-3 * (1.0 + num.abs()));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = stream_rng(5, 0);
        let net = Mlp::new(&[3, 4, 2], &mut rng);
        let x = random_input(2, 3, 5);
        let (_, cache) = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&cache, &Matrix::zeros(2, 2)).unwrap();
        assert!(g.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_input_gradient_is_upstream_times_weight_transpose() {
        let mut rng = stream_rng(6, 0);
        let net = Mlp::new(&[3, 2], &mut rng);
        let x = random_input(4, 3, 6);
        let up = random_input(4, 2, 7);
        let (_, cache) = net.forward(&x).unwrap();
        let (_, dx) = net.backward(&cache, &up).unwrap();
        assert_eq!(dx, up.matmul_t(&net.layers()[0].weight).unwrap());
    }

    #[test]
    fn jvp_matches_input_gradient() {
        let mut rng = stream_rng(7, 0);
        let net = Mlp::new(&[4, 8, 8, 1], &mut rng);
        let x = random_input(5, 4, 8);
        let v = random_input(5, 4, 9);
        let (_, cache) = net.forward(&x).unwrap();
        let (_, dx) = net.backward(&cache, &Matrix::filled(5, 1, 1.0)).unwrap();
        let (jv, _) = net.jvp(&cache, &v).unwrap();
        for b in 0..5 {
            let dot: f32 = dx.row(b).iter().zip(v.row(b)).map(|(a, c)| a * c).sum();
            assert!((dot - jv.get(b, 0)).abs() < 1e-5);
        }
    }

    #[test]
    fn jvp_param_grads_match_finite_differences() {
        let mut rng = stream_rng(8, 0);
        let net = Mlp::new(&[4, 8, 8, 1], &mut rng);
        let x = random_input(5, 4, 10);
        let v = random_input(5, 4, 11);
        let (_, cache) = net.forward(&x).unwrap();
        let (_, tc) = net.jvp(&cache, &v).unwrap();
        let analytic = net
            .jvp_param_grads(&cache, &tc, &Matrix::filled(5, 1, 1.0))
            .unwrap();
        let numeric = finite_difference(&net, 1e-3, |n| {
            let (_, c) = n.forward(&x).unwrap();
            let (jv, _) = n.jvp(&c, &v).unwrap();
            jv.data().iter().map(|&a| a as f64).sum()
        });
        assert_grads_close(&analytic, &numeric, 1e-3);
    }
}
