//! Multi-layer perceptron regression head.
//!
//! Dense layers with ReLU between hidden layers and an identity output.
//! Weights are stored row-major as `[outputs][inputs]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Samples per gradient chunk. Fixed so the reduction order does not depend
/// on the number of worker threads.
const GRAD_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, b)| b + crate::linalg::dot(row, x)),
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHead {
    layers: Vec<Dense>,
}

/// Gradient with the same layout as the head's parameters.
pub type Gradients = RegressionHead;

impl RegressionHead {
    /// He-uniform weights (`U(-√(6/fan_in), √(6/fan_in))`) from a ChaCha8
    /// stream seeded with `seed`; zero biases.
    pub fn init(input: usize, hidden: &[usize], outputs: usize, seed: u64) -> Result<Self> {
        let dims = layer_dims(input, hidden, outputs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let mut layer = Dense::zeros(w[0], w[1]);
                let bound = (6.0 / w[0] as f64).sqrt();
                layer
                    .weights
                    .iter_mut()
                    .for_each(|x| *x = rng.random_range(-bound..bound));
                layer
            })
            .collect();
        Ok(RegressionHead { layers })
    }

    /// All-zero parameters.
    pub fn zeros(input: usize, hidden: &[usize], outputs: usize) -> Result<Self> {
        let dims = layer_dims(input, hidden, outputs)?;
        Ok(RegressionHead {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("head needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::Config(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Shape(format!("layer {i} parameter count")));
            }
        }
        for w in layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::Shape(format!(
                    "layer output {} feeds input {}",
                    w[0].outputs, w[1].inputs
                )));
            }
        }
        Ok(RegressionHead { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    /// `[input, hidden.., output]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Parameter tensors in layer order, weights before biases.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.biases])
    }

    pub(crate) fn zeros_like(&self) -> Self {
        RegressionHead {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward<V: AsRef<[f64]> + Sync>(&self, batch: &[V]) -> Result<Vec<Vec<f64>>> {
        batch
            .par_iter()
            .map(|x| self.forward_one(x.as_ref()))
            .collect()
    }

    /// Pre-activations of every layer for one input.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.apply(&act, &mut z);
            if i < last {
                act = z.iter().map(|v| v.max(0.0)).collect();
            }
            pre.push(z);
        }
        pre
    }

    /// Accumulates `∂L/∂θ` for one sample into `grads`, where the caller has
    /// already scaled `d_out = ∂L/∂output`.
    fn backprop_one(&self, x: &[f64], pre: &[Vec<f64>], mut delta: Vec<f64>, grads: &mut Self) {
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let input: Vec<f64>;
            let a_prev: &[f64] = if i == 0 {
                x
            } else {
                input = pre[i - 1].iter().map(|v| v.max(0.0)).collect();
                &input
            };
            for (o, &d) in delta.iter().enumerate() {
                g.biases[o] += d;
                if d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(a_prev).for_each(|(w, a)| *w += d * a);
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                }
                prev.iter_mut().zip(&pre[i - 1]).for_each(|(p, z)| {
                    if *z <= 0.0 {
                        *p = 0.0
                    }
                });
                delta = prev;
            }
        }
    }

    /// Gradient of [`mse_loss`] with respect to every parameter, by reverse
    /// accumulation. Returns the loss alongside.
    pub fn backward<V, T>(&self, batch: &[V], targets: &[T]) -> Result<(f64, Gradients)>
    where
        V: AsRef<[f64]> + Sync,
        T: AsRef<[f64]> + Sync,
    {
        if batch.is_empty() {
            return Err(Error::EmptyInput("batch"));
        }
        if batch.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs vs {} targets",
                batch.len(),
                targets.len()
            )));
        }
        let k = self.output_dim();
        for (x, t) in batch.iter().zip(targets) {
            self.check_input(x.as_ref())?;
            if t.as_ref().len() != k {
                return Err(Error::Shape(format!(
                    "target width {} vs head output {k}",
                    t.as_ref().len()
                )));
            }
        }
        let n = batch.len() as f64;
        let partials: Vec<(f64, Gradients)> = batch
            .par_chunks(GRAD_CHUNK)
            .zip(targets.par_chunks(GRAD_CHUNK))
            .map(|(xs, ts)| {
                let mut g = self.zeros_like();
                let mut loss = 0.0;
                for (x, t) in xs.iter().zip(ts) {
                    let x = x.as_ref();
                    let pre = self.trace(x);
                    let out = pre.last().expect("at least one layer");
                    let delta: Vec<f64> = out
                        .iter()
                        .zip(t.as_ref())
                        .map(|(p, y)| {
                            loss += (p - y) * (p - y);
                            2.0 * (p - y) / n
                        })
                        .collect();
                    self.backprop_one(x, &pre, delta, &mut g);
                }
                (loss, g)
            })
            .collect();

        let mut total = 0.0;
        let mut grads = self.zeros_like();
        for (loss, g) in partials {
            total += loss;
            for (acc, part) in grads.tensors_mut().zip(g.tensors()) {
                acc.iter_mut().zip(part).for_each(|(a, p)| *a += p);
            }
        }
        Ok((total / n, grads))
    }
}

fn layer_dims(input: usize, hidden: &[usize], outputs: usize) -> Result<Vec<usize>> {
    let dims: Vec<usize> = std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(outputs))
        .collect();
    if dims.contains(&0) {
        return Err(Error::Config(format!(
            "layer dimensions must be positive: {dims:?}"
        )));
    }
    Ok(dims)
}

/// `(1/n) Σ_i ‖pred_i − target_i‖²`: mean over samples, sum over outputs.
pub fn mse_loss<P: AsRef<[f64]>, T: AsRef<[f64]>>(pred: &[P], target: &[T]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != t.len() {
            return Err(Error::Shape(format!(
                "row width {} vs {}",
                p.len(),
                t.len()
            )));
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(n: usize, d: usize, k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys = (0..n)
            .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (xs, ys)
    }

    /// Independent forward: explicit index loops, no shared helpers.
    fn naive_forward(head: &RegressionHead, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let n = head.layers.len();
        for (li, l) in head.layers.iter().enumerate() {
            let mut z = vec![0.0; l.outputs];
            for o in 0..l.outputs {
                let mut s = l.biases[o];
                for i in 0..l.inputs {
                    s += l.weights[o * l.inputs + i] * a[i];
                }
                z[o] = if li + 1 < n && s < 0.0 { 0.0 } else { s };
            }
            a = z;
        }
        a
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = RegressionHead::init(16, &[8, 4], 2, 99).unwrap();
        let b = RegressionHead::init(16, &[8, 4], 2, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, RegressionHead::init(16, &[8, 4], 2, 100).unwrap());
        assert!(a.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn no_hidden_layers_is_linear() {
        let h = RegressionHead::init(5, &[], 2, 1).unwrap();
        assert_eq!(h.layers.len(), 1);
        assert_eq!(h.layer_dims(), vec![5, 2]);
    }

    #[test]
    fn parameter_count() {
        let h = RegressionHead::init(512, &[256, 64], 2, 0).unwrap();
        assert_eq!(
            h.param_count(),
            512 * 256 + 256 + 256 * 64 + 64 + 64 * 2 + 2
        );
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(
            RegressionHead::init(0, &[4], 2, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RegressionHead::init(4, &[0], 2, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_head_outputs_zero() {
        let h = RegressionHead::zeros(3, &[4], 2).unwrap();
        assert_eq!(
            h.forward(&[vec![1.0, -2.0, 3.0]]).unwrap(),
            vec![vec![0.0, 0.0]]
        );
    }

    #[test]
    fn scalar_linear_head_scales_input() {
        let mut h = RegressionHead::zeros(1, &[], 1).unwrap();
        h.layers[0].weights[0] = 2.5;
        assert_eq!(h.forward_one(&[4.0]).unwrap(), vec![10.0]);
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        let h = RegressionHead::init(7, &[9, 5], 2, 4).unwrap();
        let (xs, _) = random_batch(20, 7, 2, 8);
        let out = h.forward(&xs).unwrap();
        for (x, y) in xs.iter().zip(&out) {
            let n = naive_forward(&h, x);
            for (a, b) in y.iter().zip(&n) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_dimension_mismatch() {
        let h = RegressionHead::init(3, &[], 1, 0).unwrap();
        assert!(matches!(
            h.forward(&[vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[vec![1.0, 2.0]], &[vec![1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[vec![0.0]], &[vec![2.0]]).unwrap(), 4.0);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(matches!(
            mse_loss(&empty, &empty),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn mse_matches_loop() {
        let (p, t) = random_batch(13, 2, 2, 1);
        let mut s = 0.0;
        for i in 0..13 {
            for j in 0..2 {
                s += (p[i][j] - t[i][j]).powi(2);
            }
        }
        assert!((mse_loss(&p, &t).unwrap() - s / 13.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let h = RegressionHead::init(4, &[6], 2, 3).unwrap();
        let (xs, _) = random_batch(5, 4, 2, 2);
        let targets = h.forward(&xs).unwrap();
        let (loss, g) = h.backward(&xs, &targets).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_head_gradient_is_linear_in_residual() {
        let h = RegressionHead::init(4, &[], 2, 3).unwrap();
        let (xs, _) = random_batch(6, 4, 2, 5);
        let pred = h.forward(&xs).unwrap();
        let t1: Vec<Vec<f64>> = pred
            .iter()
            .map(|p| p.iter().map(|v| v - 0.25).collect())
            .collect();
        let t2: Vec<Vec<f64>> = pred
            .iter()
            .map(|p| p.iter().map(|v| v - 0.5).collect())
            .collect();
        let (_, g1) = h.backward(&xs, &t1).unwrap();
        let (_, g2) = h.backward(&xs, &t2).unwrap();
        for (a, b) in g1.tensors().zip(g2.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((2.0 * x - y).abs() < 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (hidden, seed) in [(vec![], 1u64), (vec![5], 2), (vec![6, 3], 3)] {
            let h = RegressionHead::init(4, &hidden, 2, seed).unwrap();
            let (xs, ys) = random_batch(7, 4, 2, seed + 10);
            let (_, g) = h.backward(&xs, &ys).unwrap();
            let eps = 1e-5;
            for li in 0..h.layers.len() {
                for which in 0..2 {
                    let len = if which == 0 {
                        h.layers[li].weights.len()
                    } else {
                        h.layers[li].biases.len()
                    };
                    for p in 0..len {
                        let mut plus = h.clone();
                        let mut minus = h.clone();
                        let (tp, tm) = if which == 0 {
                            (
                                &mut plus.layers[li].weights[p],
                                &mut minus.layers[li].weights[p],
                            )
                        } else {
                            (
                                &mut plus.layers[li].biases[p],
                                &mut minus.layers[li].biases[p],
                            )
                        };
                        *tp += eps;
                        *tm -= eps;
                        let lp = mse_loss(&plus.forward(&xs).unwrap(), &ys).unwrap();
                        let lm = mse_loss(&minus.forward(&xs).unwrap(), &ys).unwrap();
                        let fd = (lp - lm) / (2.0 * eps);
                        let an = if which == 0 {
                            g.layers[li].weights[p]
                        } else {
                            g.layers[li].biases[p]
                        };
                        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                        assert!(rel < 1e-4, "layer {li} param {p}: fd {fd} vs {an}");
                    }
                }
            }
        }
    }
}
