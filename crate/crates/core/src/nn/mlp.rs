//! Fully connected network with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat vector. Layer `l` contributes its weight
//! matrix in row-major order (`out x in`) followed by its bias vector.

use super::NnError;
use crate::seed::Rng;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
}

impl MlpSpec {
    /// `widths` = input, hidden..., output.
    pub fn new(widths: Vec<usize>) -> Result<Self, NnError> {
        if widths.len() < 3 {
            return Err(NnError::InvalidSpec(format!("need at least one hidden layer, got widths {widths:?}")));
        }
        if widths.contains(&0) {
            return Err(NnError::InvalidSpec(format!("zero width in {widths:?}")));
        }
        Ok(Self { widths })
    }

    pub fn with_hidden(input: usize, hidden: &[usize], output: usize) -> Result<Self, NnError> {
        let mut w = Vec::with_capacity(hidden.len() + 2);
        w.push(input);
        w.extend_from_slice(hidden);
        w.push(output);
        Self::new(w)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weight block in the flat vector.
    fn offset(&self, l: usize) -> usize {
        self.widths[..=l].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

/// Layer outputs kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l + 1]` the output of layer `l`
    /// (after tanh on hidden layers).
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: MlpSpec, rng: &mut Rng) -> Self {
        let mut params = vec![0.0; spec.n_params()];
        for l in 0..spec.n_layers() {
            let (fi, fo) = (spec.widths[l], spec.widths[l + 1]);
            let bound = (6.0 / (fi + fo) as f64).sqrt();
            let off = spec.offset(l);
            for p in &mut params[off..off + fi * fo] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Self { spec, params }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = vec![0.0; spec.n_params()];
        Self { spec, params }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self, NnError> {
        if params.len() != spec.n_params() {
            return Err(NnError::DimensionMismatch { what: "parameter vector", expected: spec.n_params(), got: params.len() });
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.spec.input_dim() {
            return Err(NnError::DimensionMismatch { what: "network input", expected: self.spec.input_dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_cached(x)?.acts.pop().unwrap())
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache, NnError> {
        self.check_input(x)?;
        let n = self.spec.n_layers();
        let mut acts = Vec::with_capacity(n + 1);
        acts.push(x.to_vec());
        for l in 0..n {
            let (fi, fo) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let off = self.spec.offset(l);
            let w = &self.params[off..off + fi * fo];
            let b = &self.params[off + fi * fo..off + fi * fo + fo];
            let input = &acts[l];
            let mut out: Vec<f64> = (0..fo)
                .map(|o| b[o] + w[o * fi..(o + 1) * fi].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < n {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        Ok(ForwardCache { acts })
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(grad_out.len(), self.spec.output_dim());
        let n = self.spec.n_layers();
        let mut delta = grad_out.to_vec();
        for l in (0..n).rev() {
            let (fi, fo) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let off = self.spec.offset(l);
            let input = &cache.acts[l];
            for o in 0..fo {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * fi..off + (o + 1) * fi];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + fi * fo + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + fi * fo];
            let mut prev = vec![0.0; fi];
            for o in 0..fo {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                    *p += d * wv;
                }
            }
            // tanh' = 1 - tanh^2, using the cached activation
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    /// Central differences of `f` around `params` at `idx`.
    fn fd(net: &Mlp, idx: usize, f: &dyn Fn(&Mlp) -> f64) -> f64 {
        let h = 1e-5;
        let mut a = net.clone();
        a.params[idx] += h;
        let mut b = net.clone();
        b.params[idx] -= h;
        (f(&a) - f(&b)) / (2.0 * h)
    }

    #[test]
    fn spec_validation_and_size() {
        assert!(MlpSpec::new(vec![3, 2]).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2]).is_err());
        let s = MlpSpec::new(vec![3, 4, 2]).unwrap();
        assert_eq!(s.n_params(), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(s.offset(1), 16);
    }

    #[test]
    fn hand_evaluated_forward() {
        let spec = MlpSpec::new(vec![2, 2, 1]).unwrap();
        // W1 = [[1, 2], [0, -1]], b1 = [0.5, 0], W2 = [[2, -3]], b2 = [1]
        let net = Mlp::from_params(spec, vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 2.0, -3.0, 1.0]).unwrap();
        let x = [0.25, -0.5];
        let h = [(0.25 - 1.0 + 0.5f64).tanh(), (0.5f64).tanh()];
        let expected = 2.0 * h[0] - 3.0 * h[1] + 1.0;
        assert!((net.forward(&x).unwrap()[0] - expected).abs() < 1e-15);
        assert!(matches!(net.forward(&[1.0]), Err(NnError::DimensionMismatch { .. })));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seed::rng(11);
        for (k, widths) in [vec![3, 5, 2], vec![4, 8, 6, 3], vec![2, 7, 7, 7, 1], vec![5, 32, 4]].into_iter().enumerate() {
            let net = Mlp::init(MlpSpec::new(widths).unwrap(), &mut rng);
            let x: Vec<f64> = (0..net.spec.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..net.spec.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            // loss = sum_j c_j y_j^2 / 2 + y_j
            let loss = |n: &Mlp| {
                n.forward(&x).unwrap().iter().zip(&c).map(|(y, c)| c * y * y / 2.0 + y).sum::<f64>()
            };
            let cache = net.forward_cached(&x).unwrap();
            let g_out: Vec<f64> = cache.output().iter().zip(&c).map(|(y, c)| c * y + 1.0).collect();
            let mut grad = vec![0.0; net.params.len()];
            net.backward(&cache, &g_out, &mut grad);
            for _ in 0..20 {
                let i = rng.random_range(0..net.params.len());
                let num = fd(&net, i, &loss);
                let err = (grad[i] - num).abs() / grad[i].abs().max(num.abs()).max(1e-8);
                assert!(err < 1e-4 || (grad[i] - num).abs() < 1e-9, "net {k} param {i}: {} vs {num}", grad[i]);
            }
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let net = Mlp::init(MlpSpec::new(vec![3, 4, 2]).unwrap(), &mut seed::rng(1));
        let cache = net.forward_cached(&[0.1, 0.2, 0.3]).unwrap();
        let mut grad = vec![0.0; net.params.len()];
        net.backward(&cache, &[0.0, 0.0], &mut grad);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_the_loss() {
        let mut rng = seed::rng(2);
        let net = Mlp::init(MlpSpec::new(vec![3, 6, 2]).unwrap(), &mut rng);
        let cache = net.forward_cached(&[0.3, -0.7, 0.2]).unwrap();
        let (g1, g2) = ([0.4, -1.0], [2.0, 0.5]);
        let (a, b) = (1.5, -0.25);
        let run = |g: &[f64]| {
            let mut out = vec![0.0; net.params.len()];
            net.backward(&cache, g, &mut out);
            out
        };
        let combined = run(&[a * g1[0] + b * g2[0], a * g1[1] + b * g2[1]]);
        let (r1, r2) = (run(&g1), run(&g2));
        for i in 0..combined.len() {
            assert!((combined[i] - (a * r1[i] + b * r2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = MlpSpec::new(vec![4, 16, 2]).unwrap();
        let a = Mlp::init(spec.clone(), &mut seed::rng(3));
        let b = Mlp::init(spec.clone(), &mut seed::rng(3));
        assert_eq!(a, b);
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(a.params[..64].iter().all(|p| p.abs() <= bound));
        assert!(a.params[64..80].iter().all(|p| *p == 0.0));
    }
}
