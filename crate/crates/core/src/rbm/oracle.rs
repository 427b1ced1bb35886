//! Exact inference for tiny Bernoulli–Bernoulli RBMs by enumerating every
//! joint state. Used to check contrastive divergence against the true
//! log-likelihood gradient.

use ndarray::{Array1, Array2, ArrayView2};

use super::{HiddenKind, RbmParams, VisibleKind};
use crate::error::{Error, Result};

/// Largest `n_visible + n_hidden` accepted for enumeration.
pub const MAX_UNITS: usize = 12;

#[derive(Debug, Clone)]
pub struct ExactRbm<'a> {
    params: &'a RbmParams,
    log_z: f64,
    /// `log p(v)` indexed by the bit pattern of `v` (bit `i` is `v_i`).
    log_marginals: Vec<f64>,
}

/// Exact gradient of the mean log-likelihood, `E_data[∇(−E)] − E_model[∇(−E)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactGradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl ExactGradient {
    /// Flattened in `(W row-major, b, c)` order.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .copied()
            .collect()
    }
}

fn bits(state: usize, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |i| ((state >> i) & 1) as f64)
}

fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl<'a> ExactRbm<'a> {
    pub fn new(params: &'a RbmParams) -> Result<Self> {
        params.validate()?;
        if params.visible_kind != VisibleKind::Bernoulli || params.hidden_kind != HiddenKind::Bernoulli {
            return Err(Error::Config("exact enumeration needs Bernoulli visible and hidden units".into()));
        }
        let (nv, nh) = (params.n_visible(), params.n_hidden());
        if nv + nh > MAX_UNITS {
            return Err(Error::EnumerationCap { units: nv + nh, cap: MAX_UNITS });
        }

        let hidden_states: Vec<Array1<f64>> = (0..1usize << nh).map(|s| bits(s, nh)).collect();
        let mut unnormalized = Vec::with_capacity(1 << nv);
        for vs in 0..1usize << nv {
            let v = bits(vs, nv);
            let terms = hidden_states
                .iter()
                .map(|h| -params.energy(v.view(), h.view()).expect("shapes checked"));
            unnormalized.push(log_sum_exp(terms));
        }
        let log_z = log_sum_exp(unnormalized.iter().copied());
        let log_marginals = unnormalized.iter().map(|u| u - log_z).collect();
        Ok(Self { params, log_z, log_marginals })
    }

    /// Partition function `Z = Σ_{v,h} exp(−E(v, h))`.
    pub fn partition(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn log_partition(&self) -> f64 {
        self.log_z
    }

    /// Marginal `p(v)` for every visible pattern, indexed by bit pattern.
    pub fn marginals(&self) -> Vec<f64> {
        self.log_marginals.iter().map(|l| l.exp()).collect()
    }

    pub fn log_marginal(&self, v: &[f64]) -> Result<f64> {
        Ok(self.log_marginals[self.index(v)?])
    }

    /// Mean of `log p(v)` over the rows of `data`.
    pub fn mean_log_likelihood(&self, data: ArrayView2<'_, f64>) -> Result<f64> {
        if data.nrows() == 0 {
            return Err(Error::InsufficientData("empty dataset".into()));
        }
        let mut total = 0.0;
        for row in data.rows() {
            total += self.log_marginal(&row.to_vec())?;
        }
        Ok(total / data.nrows() as f64)
    }

    /// Exact gradient of the mean log-likelihood of `data` by enumeration.
    pub fn gradient(&self, data: ArrayView2<'_, f64>) -> Result<ExactGradient> {
        let (nv, nh) = (self.params.n_visible(), self.params.n_hidden());
        if data.nrows() == 0 {
            return Err(Error::InsufficientData("empty dataset".into()));
        }
        let mut grad = ExactGradient {
            weights: Array2::zeros((nv, nh)),
            visible_bias: Array1::zeros(nv),
            hidden_bias: Array1::zeros(nh),
        };
        let hidden_states: Vec<Array1<f64>> = (0..1usize << nh).map(|s| bits(s, nh)).collect();

        // weight w: accumulate w * (v hᵀ, v, h)
        let accumulate = |v: &Array1<f64>, h: &Array1<f64>, w: f64, g: &mut ExactGradient| {
            for i in 0..nv {
                for j in 0..nh {
                    g.weights[[i, j]] += w * v[i] * h[j];
                }
                g.visible_bias[i] += w * v[i];
            }
            for j in 0..nh {
                g.hidden_bias[j] += w * h[j];
            }
        };

        // data term: E_{p(h|v)} for each data vector
        let n = data.nrows() as f64;
        for row in data.rows() {
            let vs = self.index(&row.to_vec())?;
            let v = bits(vs, nv);
            let log_joint: Vec<f64> = hidden_states
                .iter()
                .map(|h| -self.params.energy(v.view(), h.view()).expect("shapes checked"))
                .collect();
            let norm = log_sum_exp(log_joint.iter().copied());
            for (h, lj) in hidden_states.iter().zip(&log_joint) {
                accumulate(&v, h, (lj - norm).exp() / n, &mut grad);
            }
        }

        // model term: E_{p(v,h)}
        for vs in 0..1usize << nv {
            let v = bits(vs, nv);
            for h in &hidden_states {
                let lj = -self.params.energy(v.view(), h.view()).expect("shapes checked");
                accumulate(&v, h, -(lj - self.log_z).exp(), &mut grad);
            }
        }
        Ok(grad)
    }

    fn index(&self, v: &[f64]) -> Result<usize> {
        let nv = self.params.n_visible();
        if v.len() != nv {
            return Err(Error::DimensionMismatch { expected: nv, found: v.len() });
        }
        v.iter().enumerate().try_fold(0usize, |acc, (i, &x)| match x {
            0.0 => Ok(acc),
            1.0 => Ok(acc | (1 << i)),
            _ => Err(Error::Config(format!("visible value {x} is not binary"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn bb(nv: usize, nh: usize) -> RbmParams {
        RbmParams::zeros(nv, nh, VisibleKind::Bernoulli, HiddenKind::Bernoulli)
    }

    #[test]
    fn zero_two_by_two() {
        let p = bb(2, 2);
        let exact = ExactRbm::new(&p).unwrap();
        assert_relative_eq!(exact.partition(), 16.0, max_relative = 1e-14);
        for m in exact.marginals() {
            assert_relative_eq!(m, 0.25, max_relative = 1e-14);
        }
    }

    #[test]
    fn one_by_one_partition() {
        for w in [-1.5, 0.0, 0.7, 3.0] {
            let mut p = bb(1, 1);
            p.weights[[0, 0]] = w;
            // energies of (v,h) = 00, 01, 10, 11 are 0, 0, 0, -w
            let z = ExactRbm::new(&p).unwrap().partition();
            assert_relative_eq!(z, 3.0 + f64::exp(w), max_relative = 1e-14);
        }
    }

    #[test]
    fn uniform_data_at_zero_params_has_zero_gradient() {
        let p = bb(2, 2);
        let data = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let g = ExactRbm::new(&p).unwrap().gradient(data.view()).unwrap();
        assert!(g.flatten().iter().all(|x| x.abs() < 1e-15), "{g:?}");
    }

    #[test]
    fn marginals_sum_to_one() {
        let mut p = bb(3, 2);
        p.weights = array![[0.5, -1.0], [0.2, 0.3], [-0.7, 0.9]];
        p.visible_bias = array![0.1, -0.2, 0.3];
        p.hidden_bias = array![-0.4, 0.5];
        let total: f64 = ExactRbm::new(&p).unwrap().marginals().iter().sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    /// Finite differences of the exact log-likelihood agree with the
    /// enumerated gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut p = bb(3, 2);
        p.weights = array![[0.5, -1.0], [0.2, 0.3], [-0.7, 0.9]];
        p.visible_bias = array![0.1, -0.2, 0.3];
        p.hidden_bias = array![-0.4, 0.5];
        let data = array![[1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let grad = ExactRbm::new(&p).unwrap().gradient(data.view()).unwrap().flatten();

        let ll = |q: &RbmParams| ExactRbm::new(q).unwrap().mean_log_likelihood(data.view()).unwrap();
        let h = 1e-6;
        let n_w = 6;
        for (idx, &analytic) in grad.iter().enumerate() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            let poke = |q: &mut RbmParams, d: f64| {
                if idx < n_w {
                    q.weights[[idx / 2, idx % 2]] += d;
                } else if idx < n_w + 3 {
                    q.visible_bias[idx - n_w] += d;
                } else {
                    q.hidden_bias[idx - n_w - 3] += d;
                }
            };
            poke(&mut plus, h);
            poke(&mut minus, -h);
            let fd = (ll(&plus) - ll(&minus)) / (2.0 * h);
            assert!((fd - analytic).abs() < 1e-7, "param {idx}: fd {fd} vs {analytic}");
        }
    }

    #[test]
    fn enumeration_cap() {
        let p = bb(7, 6);
        assert!(matches!(ExactRbm::new(&p), Err(Error::EnumerationCap { units: 13, cap: 12 })));
        let g = RbmParams::zeros(2, 2, VisibleKind::Gaussian, HiddenKind::Relu);
        assert!(ExactRbm::new(&g).is_err());
    }
}
