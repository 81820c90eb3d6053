use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{check_finite, init_uniform, sigmoid, Grads, Parameterized};
use crate::error::{Error, Result};

/// Gated recurrent cell:
///
/// ```text
/// z  = sigmoid(x Wz + h Uz + bz)
/// r  = sigmoid(x Wr + h Ur + br)
/// n  = tanh(x Wn + (r * h) Un + bn)
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    /// Input weights for the z, r and n gates.
    w: [Array2<f64>; 3],
    /// Recurrent weights.
    u: [Array2<f64>; 3],
    b: [Array1<f64>; 3],
}

#[derive(Clone, Debug)]
struct StepCache {
    x: Array2<f64>,
    h: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    n: Array2<f64>,
}

/// Per-step intermediates of an unroll, for backpropagation through time.
#[derive(Clone, Debug)]
pub struct GruTape {
    steps: Vec<StepCache>,
}

impl GruTape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

const GATES: [&str; 3] = ["z", "r", "n"];

impl GruCell {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Shape("GRU dimensions must be >= 1".into()));
        }
        let w = [(); 3].map(|_| init_uniform(rng, input_dim, (input_dim, hidden_dim)));
        let u = [(); 3].map(|_| init_uniform(rng, hidden_dim, (hidden_dim, hidden_dim)));
        let b = [(); 3].map(|_| init_uniform(rng, hidden_dim, (1, hidden_dim)).into_shape(hidden_dim).unwrap());
        Ok(Self { w, u, b })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w: [(); 3].map(|_| Array2::zeros((input_dim, hidden_dim))),
            u: [(); 3].map(|_| Array2::zeros((hidden_dim, hidden_dim))),
            b: [(); 3].map(|_| Array1::zeros(hidden_dim)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.u[0].nrows()
    }

    pub fn initial_state(&self, batch: usize) -> Array2<f64> {
        Array2::zeros((batch, self.hidden_dim()))
    }

    fn check(&self, x: &Array2<f64>, h: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() || h.ncols() != self.hidden_dim() || x.nrows() != h.nrows() {
            return Err(Error::Shape(format!(
                "GRU step got input {:?} and state {:?}, expected [_, {}] and [_, {}]",
                x.shape(),
                h.shape(),
                self.input_dim(),
                self.hidden_dim()
            )));
        }
        Ok(())
    }

    fn step_cached(&self, x: &Array2<f64>, h: &Array2<f64>) -> (Array2<f64>, StepCache) {
        let z = (x.dot(&self.w[0]) + h.dot(&self.u[0]) + &self.b[0]).mapv(sigmoid);
        let r = (x.dot(&self.w[1]) + h.dot(&self.u[1]) + &self.b[1]).mapv(sigmoid);
        let rh = &r * h;
        let n = (x.dot(&self.w[2]) + rh.dot(&self.u[2]) + &self.b[2]).mapv(f64::tanh);
        let next = (1.0 - &z) * &n + &z * h;
        (next, StepCache { x: x.clone(), h: h.clone(), z, r, n })
    }

    /// One application of the cell.
    pub fn step(&self, x: &Array2<f64>, h: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x, h)?;
        check_finite(x, "GRU input")?;
        Ok(self.step_cached(x, h).0)
    }

    /// Runs the cell over `inputs`, returning the state after every step.
    pub fn unroll(&self, initial: &Array2<f64>, inputs: &[Array2<f64>]) -> Result<(Vec<Array2<f64>>, GruTape)> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("unroll needs at least one input".into()));
        }
        let mut h = initial.clone();
        let mut states = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for x in inputs {
            self.check(x, &h)?;
            check_finite(x, "GRU input")?;
            let (next, cache) = self.step_cached(x, &h);
            steps.push(cache);
            states.push(next.clone());
            h = next;
        }
        Ok((states, GruTape { steps }))
    }

    /// Backpropagation through time. `grad_states[t]` is the gradient of the
    /// loss with respect to the state after step `t`. Returns parameter
    /// gradients, the gradient with respect to the initial state, and the
    /// gradient with respect to every input.
    pub fn backward(&self, tape: &GruTape, grad_states: &[Array2<f64>]) -> Result<(Grads, Array2<f64>, Vec<Array2<f64>>)> {
        if grad_states.len() != tape.steps.len() {
            return Err(Error::Shape(format!("{} state gradients for {} steps", grad_states.len(), tape.steps.len())));
        }
        let mut dw = self.w.clone().map(|w| Array2::<f64>::zeros(w.raw_dim()));
        let mut du = self.u.clone().map(|u| Array2::<f64>::zeros(u.raw_dim()));
        let mut db = self.b.clone().map(|b| Array1::<f64>::zeros(b.raw_dim()));
        let mut carry = Array2::zeros(tape.steps[0].h.raw_dim());
        let mut grad_inputs = vec![Array2::zeros((0, 0)); tape.steps.len()];
        for t in (0..tape.steps.len()).rev() {
            let c = &tape.steps[t];
            if grad_states[t].raw_dim() != carry.raw_dim() {
                return Err(Error::Shape("state gradient shape mismatch".into()));
            }
            let g = &grad_states[t] + &carry;
            let gz = &g * &(&c.h - &c.n);
            let gn = &g * &(1.0 - &c.z);
            let mut gh = &g * &c.z;

            let ga_n = gn * &(1.0 - &c.n * &c.n);
            let rh = &c.r * &c.h;
            dw[2] += &c.x.t().dot(&ga_n);
            du[2] += &rh.t().dot(&ga_n);
            db[2] += &ga_n.sum_axis(Axis(0));
            let grh = ga_n.dot(&self.u[2].t());
            let gr = &grh * &c.h;
            gh += &(&grh * &c.r);

            let ga_r = gr * &(&c.r * &(1.0 - &c.r));
            dw[1] += &c.x.t().dot(&ga_r);
            du[1] += &c.h.t().dot(&ga_r);
            db[1] += &ga_r.sum_axis(Axis(0));
            gh += &ga_r.dot(&self.u[1].t());

            let ga_z = gz * &(&c.z * &(1.0 - &c.z));
            dw[0] += &c.x.t().dot(&ga_z);
            du[0] += &c.h.t().dot(&ga_z);
            db[0] += &ga_z.sum_axis(Axis(0));
            gh += &ga_z.dot(&self.u[0].t());

            grad_inputs[t] = ga_n.dot(&self.w[2].t()) + ga_r.dot(&self.w[1].t()) + ga_z.dot(&self.w[0].t());
            carry = gh;
        }
        let mut grads = Vec::with_capacity(9);
        for g in 0..3 {
            grads.push(std::mem::take(&mut dw[g]).into_raw_vec());
            grads.push(std::mem::take(&mut du[g]).into_raw_vec());
            grads.push(std::mem::take(&mut db[g]).into_raw_vec());
        }
        Ok((grads, carry, grad_inputs))
    }
}

impl Parameterized for GruCell {
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (i, h) = (self.input_dim(), self.hidden_dim());
        GATES
            .iter()
            .flat_map(|g| {
                [(format!("w{g}"), vec![i, h]), (format!("u{g}"), vec![h, h]), (format!("b{g}"), vec![h])]
            })
            .collect()
    }

    fn params(&self) -> Vec<&[f64]> {
        (0..3)
            .flat_map(|g| {
                [
                    self.w[g].as_slice().expect("standard layout"),
                    self.u[g].as_slice().expect("standard layout"),
                    self.b[g].as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(9);
        for ((w, u), b) in self.w.iter_mut().zip(self.u.iter_mut()).zip(self.b.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(u.as_slice_mut().expect("standard layout"));
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

    #[test]
    fn zero_weights_give_zero_states() {
        let cell = GruCell::zeros(3, 4);
        let inputs: Vec<Array2<f64>> = (0..5).map(|t| Array2::from_elem((2, 3), t as f64)).collect();
        let (states, _) = cell.unroll(&cell.initial_state(2), &inputs).unwrap();
        assert!(states.iter().all(|s| s.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn single_step_unroll_matches_step() {
        let mut rng = StdRng::seed_from_u64(4);
        let cell = GruCell::new(2, 3, &mut rng).unwrap();
        let x = Array2::from_shape_fn((2, 2), |_| rng.gen_range(-1.0..1.0));
        let h = Array2::from_shape_fn((2, 3), |_| rng.gen_range(-1.0..1.0));
        let (states, _) = cell.unroll(&h, &[x.clone()]).unwrap();
        assert_eq!(states[0], cell.step(&x, &h).unwrap());
        assert!(cell.unroll(&h, &[]).is_err());
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let mut cell = GruCell::new(3, 4, &mut rng).unwrap();
            let h0 = Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0));
            let inputs: Vec<Array2<f64>> =
                (0..5).map(|_| Array2::from_shape_fn((2, 3), |_| rng.gen_range(-1.0..1.0))).collect();
            let coeffs: Vec<Array2<f64>> =
                (0..5).map(|_| Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0))).collect();
            let loss = |cell: &GruCell, h0: &Array2<f64>, inputs: &[Array2<f64>]| {
                let (states, _) = cell.unroll(h0, inputs).unwrap();
                states.iter().zip(&coeffs).map(|(s, c)| (s * c).sum()).sum::<f64>()
            };
            let (_, tape) = cell.unroll(&h0, &inputs).unwrap();
            let (grads, gh0, gx) = cell.backward(&tape, &coeffs).unwrap();
            let h = 1e-5;
            let sizes: Vec<usize> = cell.params().iter().map(|p| p.len()).collect();
            for (t, size) in sizes.into_iter().enumerate() {
                for i in 0..size {
                    let orig = cell.params()[t][i];
                    cell.params_mut()[t][i] = orig + h;
                    let up = loss(&cell, &h0, &inputs);
                    cell.params_mut()[t][i] = orig - h;
                    let down = loss(&cell, &h0, &inputs);
                    cell.params_mut()[t][i] = orig;
                    let err = rel_err((up - down) / (2.0 * h), grads[t][i]);
                    assert!(err <= 1e-4, "param {t}[{i}]: {err}");
                }
            }
            let mut hp = h0.clone();
            for idx in 0..hp.len() {
                let (r, c) = (idx / 4, idx % 4);
                let orig = hp[[r, c]];
                hp[[r, c]] = orig + h;
                let up = loss(&cell, &hp, &inputs);
                hp[[r, c]] = orig - h;
                let down = loss(&cell, &hp, &inputs);
                hp[[r, c]] = orig;
                assert!(rel_err((up - down) / (2.0 * h), gh0[[r, c]]) <= 1e-4);
            }
            let mut xs = inputs.clone();
            for t in 0..xs.len() {
                for idx in 0..6 {
                    let (r, c) = (idx / 3, idx % 3);
                    let orig = xs[t][[r, c]];
                    xs[t][[r, c]] = orig + h;
                    let up = loss(&cell, &h0, &xs);
                    xs[t][[r, c]] = orig - h;
                    let down = loss(&cell, &h0, &xs);
                    xs[t][[r, c]] = orig;
                    assert!(rel_err((up - down) / (2.0 * h), gx[t][[r, c]]) <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn states_stay_bounded() {
        let mut rng = StdRng::seed_from_u64(6);
        let cell = GruCell::new(2, 3, &mut rng).unwrap();
        let inputs: Vec<Array2<f64>> = (0..200).map(|_| Array2::from_elem((1, 2), 5.0)).collect();
        let (states, _) = cell.unroll(&cell.initial_state(1), &inputs).unwrap();
        assert!(states.iter().all(|s| s.iter().all(|v| v.abs() <= 1.0)));
    }
}
