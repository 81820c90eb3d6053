use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{check_finite, init_uniform, softmax, Grads, Parameterized};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `x`.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => (x > 0.0) as u8 as f64,
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

/// Transformation applied to the last layer's linear output.
#[derive(Clone, Debug, PartialEq)]
pub enum Head {
    Linear,
    Softmax,
    /// Output is `num_actions` groups of `num_atoms` probabilities.
    CategoricalPerAction { num_actions: usize, num_atoms: usize },
    /// `low + (high - low) * (tanh(z) + 1) / 2` per dimension.
    TanhScaled { low: Vec<f64>, high: Vec<f64> },
    /// Last layer emits `[V, A_1..A_n]`; output is `V + A_a - mean(A)`.
    Dueling { num_actions: usize },
}

impl Head {
    fn output_dim(&self, raw: usize) -> usize {
        match self {
            Head::Dueling { num_actions } => *num_actions,
            _ => raw,
        }
    }

    fn check(&self, raw: usize) -> Result<()> {
        let ok = match self {
            Head::Linear => true,
            Head::Softmax => raw >= 1,
            Head::CategoricalPerAction { num_actions, num_atoms } => *num_atoms >= 1 && raw == num_actions * num_atoms,
            Head::TanhScaled { low, high } => {
                low.len() == raw && high.len() == raw && low.iter().zip(high).all(|(l, h)| l < h)
            }
            Head::Dueling { num_actions } => raw == num_actions + 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!("head {self:?} incompatible with {raw} outputs")))
        }
    }

    fn forward(&self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Head::Linear => z.clone(),
            Head::Softmax => grouped_softmax(z, z.ncols()),
            Head::CategoricalPerAction { num_atoms, .. } => grouped_softmax(z, *num_atoms),
            Head::TanhScaled { low, high } => {
                let mut out = z.clone();
                for mut row in out.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = low[j] + (high[j] - low[j]) * (v.tanh() + 1.0) / 2.0;
                    }
                }
                out
            }
            Head::Dueling { num_actions } => {
                let n = *num_actions;
                Array2::from_shape_fn((z.nrows(), n), |(b, a)| {
                    let mean = (1..=n).map(|j| z[[b, j]]).sum::<f64>() / n as f64;
                    z[[b, 0]] + z[[b, a + 1]] - mean
                })
            }
        }
    }

    /// Gradient with respect to `z` given the gradient with respect to the output.
    fn backward(&self, z: &Array2<f64>, out: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match self {
            Head::Linear => grad.clone(),
            Head::Softmax => grouped_softmax_backward(out, grad, out.ncols()),
            Head::CategoricalPerAction { num_atoms, .. } => grouped_softmax_backward(out, grad, *num_atoms),
            Head::TanhScaled { low, high } => Array2::from_shape_fn(z.raw_dim(), |(b, j)| {
                grad[[b, j]] * (high[j] - low[j]) / 2.0 * (1.0 - z[[b, j]].tanh().powi(2))
            }),
            Head::Dueling { num_actions } => {
                let n = *num_actions;
                let mut gz = Array2::zeros((z.nrows(), n + 1));
                for b in 0..z.nrows() {
                    let row = grad.row(b);
                    let total: f64 = row.sum();
                    gz[[b, 0]] = total;
                    for a in 0..n {
                        gz[[b, a + 1]] = row[a] - total / n as f64;
                    }
                }
                gz
            }
        }
    }
}

fn grouped_softmax(z: &Array2<f64>, group: usize) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let slice = row.as_slice_mut().expect("contiguous row");
        for chunk in slice.chunks_mut(group) {
            let p = softmax(chunk);
            chunk.copy_from_slice(&p);
        }
    }
    out
}

fn grouped_softmax_backward(p: &Array2<f64>, grad: &Array2<f64>, group: usize) -> Array2<f64> {
    let mut gz = Array2::zeros(p.raw_dim());
    for b in 0..p.nrows() {
        for start in (0..p.ncols()).step_by(group) {
            let dot: f64 = (start..start + group).map(|j| p[[b, j]] * grad[[b, j]]).sum();
            for j in start..start + group {
                gz[[b, j]] = p[[b, j]] * (grad[[b, j]] - dot);
            }
        }
    }
    gz
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
    head: Head,
}

/// Intermediates recorded by [`DenseNet::forward`].
#[derive(Clone, Debug)]
pub struct DenseTape {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer; the last one feeds the head.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl DenseTape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl DenseNet {
    /// `sizes = [input, hidden..., raw_output]`. Hidden layers use
    /// `activation`; the last layer is linear and feeds `head`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, head: Head, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        head.check(*sizes.last().unwrap())?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            weights.push(init_uniform(rng, pair[0], (pair[0], pair[1])));
            biases.push(init_uniform(rng, pair[0], (1, pair[1])).into_shape(pair[1]).expect("bias shape"));
        }
        Ok(Self { weights, biases, activation, head })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim(self.weights.last().unwrap().ncols())
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_mut(&mut self, index: usize) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.weights[index], &mut self.biases[index])
    }

    pub fn forward(&self, input: &Array2<f64>) -> Result<(Array2<f64>, DenseTape)> {
        if input.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} columns, expected {}", input.ncols(), self.input_dim())));
        }
        check_finite(input, "network input")?;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut x = input.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = x.dot(w) + b;
            inputs.push(x);
            x = if l + 1 < self.weights.len() { z.mapv(|v| self.activation.apply(v)) } else { z.clone() };
            pre.push(z);
        }
        let output = self.head.forward(pre.last().unwrap());
        Ok((output.clone(), DenseTape { inputs, pre, output }))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// Gradients of parameters (in [`Parameterized::params`] order) and of
    /// the input, given the gradient of some scalar with respect to the output.
    pub fn backward(&self, tape: &DenseTape, grad_output: &Array2<f64>) -> Result<(Grads, Array2<f64>)> {
        if grad_output.raw_dim() != tape.output.raw_dim() {
            return Err(Error::Shape(format!(
                "output gradient shape {:?}, expected {:?}",
                grad_output.shape(),
                tape.output.shape()
            )));
        }
        let mut g = self.head.backward(tape.pre.last().unwrap(), &tape.output, grad_output);
        let n = self.weights.len();
        let mut grads: Grads = vec![Vec::new(); 2 * n];
        for l in (0..n).rev() {
            let dw = tape.inputs[l].t().dot(&g);
            let db = g.sum_axis(Axis(0));
            grads[2 * l] = dw.into_raw_vec();
            grads[2 * l + 1] = db.into_raw_vec();
            let mut ga = g.dot(&self.weights[l].t());
            if l > 0 {
                let z = &tape.pre[l - 1];
                ga.zip_mut_with(z, |gv, zv| *gv *= self.activation.derivative(*zv));
            }
            g = ga;
        }
        Ok((grads, g))
    }
}

impl Parameterized for DenseNet {
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (l, w) in self.weights.iter().enumerate() {
            out.push((format!("w{l}"), vec![w.nrows(), w.ncols()]));
            out.push((format!("b{l}"), vec![w.ncols()]));
        }
        out
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::testutil::rel_err;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn heads() -> Vec<(Head, usize)> {
        vec![
            (Head::Linear, 3),
            (Head::Softmax, 3),
            (Head::CategoricalPerAction { num_actions: 2, num_atoms: 3 }, 6),
            (Head::TanhScaled { low: vec![-2.0, 0.0], high: vec![1.0, 4.0] }, 2),
            (Head::Dueling { num_actions: 3 }, 4),
        ]
    }

    /// Scalar loss sum(c * out) for fixed random coefficients c.
    fn check_gradients(net: &mut DenseNet, x: &Array2<f64>, coeffs: &Array2<f64>) -> f64 {
        let (_, tape) = net.forward(x).unwrap();
        let (grads, gx) = net.backward(&tape, coeffs).unwrap();
        let loss = |n: &DenseNet, x: &Array2<f64>| (n.predict(x).unwrap() * coeffs).sum();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        for (t, size) in sizes.into_iter().enumerate() {
            for i in 0..size {
                let orig = net.params()[t][i];
                net.params_mut()[t][i] = orig + h;
                let up = loss(net, x);
                net.params_mut()[t][i] = orig - h;
                let down = loss(net, x);
                net.params_mut()[t][i] = orig;
                worst = worst.max(rel_err((up - down) / (2.0 * h), grads[t][i]));
            }
        }
        let mut xp = x.clone();
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let orig = xp[[r, c]];
            xp[[r, c]] = orig + h;
            let up = loss(net, &xp);
            xp[[r, c]] = orig - h;
            let down = loss(net, &xp);
            xp[[r, c]] = orig;
            worst = worst.max(rel_err((up - down) / (2.0 * h), gx[[r, c]]));
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences_for_all_heads() {
        let mut rng = StdRng::seed_from_u64(7);
        for (head, raw) in heads() {
            for activation in [Activation::Tanh, Activation::Relu] {
                for _ in 0..4 {
                    let mut net = DenseNet::new(&[4, 5, 6, raw], activation, head.clone(), &mut rng).unwrap();
                    let x = Array2::from_shape_fn((3, 4), |_| rng.gen_range(-1.0..1.0));
                    let out_dim = net.output_dim();
                    let c = Array2::from_shape_fn((3, out_dim), |_| rng.gen_range(-1.0..1.0));
                    let err = check_gradients(&mut net, &x, &c);
                    assert!(err <= 1e-4, "{head:?} {activation:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut rng = StdRng::seed_from_u64(0);
        let mut net = DenseNet::new(&[3, 3], Activation::Identity, Head::Linear, &mut rng).unwrap();
        let (w, b) = net.layer_mut(0);
        w.assign(&Array2::eye(3));
        b.fill(0.0);
        let x = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn linear_sum_loss_gradient_is_outer_product() {
        let mut rng = StdRng::seed_from_u64(1);
        let net = DenseNet::new(&[2, 3], Activation::Identity, Head::Linear, &mut rng).unwrap();
        let x = Array2::from_shape_vec((1, 2), vec![0.5, -2.0]).unwrap();
        let (_, tape) = net.forward(&x).unwrap();
        let (grads, _) = net.backward(&tape, &Array2::ones((1, 3))).unwrap();
        assert_eq!(grads[0], vec![0.5, 0.5, 0.5, -2.0, -2.0, -2.0]);
        assert_eq!(grads[1], vec![1.0; 3]);
        let (zero, _) = net.backward(&tape, &Array2::zeros((1, 3))).unwrap();
        assert!(zero.iter().all(|g| g.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn softmax_heads_emit_distributions() {
        let mut rng = StdRng::seed_from_u64(2);
        let net = DenseNet::new(
            &[2, 8, 6],
            Activation::Relu,
            Head::CategoricalPerAction { num_actions: 2, num_atoms: 3 },
            &mut rng,
        )
        .unwrap();
        let x = Array2::from_shape_fn((5, 2), |_| rng.gen_range(-3.0..3.0));
        let out = net.predict(&x).unwrap();
        for row in out.rows() {
            for group in row.as_slice().unwrap().chunks(3) {
                assert!(group.iter().all(|p| *p >= 0.0));
                assert!((group.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
        // Deterministic.
        assert_eq!(net.predict(&x).unwrap(), out);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = StdRng::seed_from_u64(2);
        let net = DenseNet::new(&[2, 2], Activation::Relu, Head::Linear, &mut rng).unwrap();
        assert!(matches!(net.predict(&Array2::zeros((1, 3))), Err(Error::Shape(_))));
        assert!(matches!(net.predict(&Array2::from_elem((1, 2), f64::NAN)), Err(Error::NonFinite(_))));
        assert!(DenseNet::new(&[2, 5], Activation::Relu, Head::Dueling { num_actions: 3 }, &mut rng).is_err());
    }
}
