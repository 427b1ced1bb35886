use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::GmmModel;
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Mixture size used for the background model and speaker models by default.
pub const UBM_COMPONENTS: usize = 64;

/// Frames required per component before the component count is reduced.
const FRAMES_PER_COMPONENT: usize = 10;

/// Components whose responsibility mass falls below this keep their previous
/// mean and variance.
const DEAD_MASS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub n_components: usize,
    pub max_iters: usize,
    /// Stop once the mean per-frame log-likelihood gains less than this.
    pub tol: f64,
    pub seed: u64,
    /// Variances are floored at `floor_ratio` times the reference variance.
    pub floor_ratio: f64,
    /// Per-dimension reference variance for the floor; defaults to the
    /// variance of the data being fit.
    pub reference_variance: Option<Array1<f64>>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_components: UBM_COMPONENTS,
            max_iters: 100,
            tol: 1e-3,
            seed: 0,
            floor_ratio: 1e-4,
            reference_variance: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GmmModel,
    /// Total log-likelihood of the data, entry 0 at the initial parameters
    /// and one entry after every iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Component count asked for, which may exceed `model.n_components()`.
    pub requested_components: usize,
}

/// Fits a diagonal GMM to the rows of `x`.
///
/// Means start at k-means++ seeds, variances at the global variance and
/// weights uniform. When there are fewer than ten frames per component the
/// component count is reduced (with a warning).
pub fn em_fit(x: ArrayView2<'_, f64>, cfg: &EmConfig) -> Result<EmFit> {
    let (n, dim) = x.dim();
    if n == 0 || dim == 0 {
        return Err(Error::InsufficientData("no features to fit".into()));
    }
    if cfg.n_components == 0 || cfg.max_iters == 0 {
        return Err(Error::Config("EM needs at least one component and one iteration".into()));
    }
    if cfg.tol.is_nan() || cfg.tol < 0.0 || cfg.floor_ratio.is_nan() || cfg.floor_ratio <= 0.0 {
        return Err(Error::Config("EM tolerance and floor ratio must be positive".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("non-finite feature value".into()));
    }

    let global_var = x.var_axis(Axis(0), 0.0);
    if global_var.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData(format!("all {n} feature vectors are identical")));
    }
    let floor = variance_floor(&global_var, cfg)?;

    let m = if n < FRAMES_PER_COMPONENT * cfg.n_components {
        let reduced = (n / FRAMES_PER_COMPONENT).max(1);
        log::warn!("{n} frames cannot support {} components; fitting {reduced}", cfg.n_components);
        reduced
    } else {
        cfg.n_components
    };

    let mut rng = rng_for(cfg.seed, 0);
    let means = kmeans_pp(x, m, &mut rng);
    let start: Array1<f64> = global_var.iter().zip(&floor).map(|(&v, &f)| v.max(f)).collect();
    let mut model = GmmModel {
        weights: Array1::from_elem(m, 1.0 / m as f64),
        means,
        variances: start.broadcast((m, dim)).expect("row broadcast").to_owned(),
    };

    let (mut resp, mut total) = e_step(&model, x)?;
    let mut history = vec![total];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        model = m_step(&model, x, &resp, &floor);
        iterations += 1;
        let (next_resp, next_total) = e_step(&model, x)?;
        let gain = (next_total - total) / n as f64;
        history.push(next_total);
        resp = next_resp;
        total = next_total;
        if gain < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(EmFit {
        model,
        log_likelihood: history,
        iterations,
        converged,
        requested_components: cfg.n_components,
    })
}

/// Background model over the pooled features of every speaker.
pub fn train_ubm(pooled: ArrayView2<'_, f64>, cfg: &EmConfig) -> Result<EmFit> {
    em_fit(pooled, cfg)
}

fn variance_floor(global_var: &Array1<f64>, cfg: &EmConfig) -> Result<Array1<f64>> {
    let reference = match &cfg.reference_variance {
        Some(r) if r.len() != global_var.len() => {
            return Err(Error::DimensionMismatch {
                expected: global_var.len(),
                found: r.len(),
            })
        }
        Some(r) => r.clone(),
        None => global_var.clone(),
    };
    // constant dimensions borrow the average scale of the others
    let positive: Vec<f64> = reference.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::DegenerateData("reference variance is zero in every dimension".into()));
    }
    let fallback = positive.iter().sum::<f64>() / positive.len() as f64;
    Ok(reference.mapv(|v| cfg.floor_ratio * if v > 0.0 { v } else { fallback }))
}

/// D² seeding: the first mean uniformly, each further one with probability
/// proportional to its squared distance from the nearest chosen mean.
fn kmeans_pp<R: Rng + ?Sized>(x: ArrayView2<'_, f64>, m: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut means = Array2::zeros((m, x.ncols()));
    let first = rng.random_range(0..n);
    means.row_mut(0).assign(&x.row(first));
    let sq_dist = |row: usize, centre: ndarray::ArrayView1<'_, f64>| -> f64 {
        x.row(row).iter().zip(centre).map(|(a, b)| (a - b) * (a - b)).sum()
    };
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(i, means.row(0))).collect();
    for k in 1..m {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        means.row_mut(k).assign(&x.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(i, means.row(k)));
        }
    }
    means
}

/// Responsibilities (rows sum to one) and the total log-likelihood.
fn e_step(model: &GmmModel, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, f64)> {
    let mut dens = model.weighted_log_densities(x)?;
    let mut total = 0.0;
    for mut row in dens.rows_mut() {
        let norm = super::log_sum_exp(row.iter().copied());
        total += norm;
        row.mapv_inplace(|v| (v - norm).exp());
    }
    if !total.is_finite() {
        return Err(Error::Divergence("EM log-likelihood is not finite".into()));
    }
    Ok((dens, total))
}

fn m_step(prev: &GmmModel, x: ArrayView2<'_, f64>, resp: &Array2<f64>, floor: &Array1<f64>) -> GmmModel {
    let n = x.nrows() as f64;
    let mass = resp.sum_axis(Axis(0));
    let first = resp.t().dot(&x);
    let second = resp.t().dot(&x.mapv(|v| v * v));

    let mut means = prev.means.clone();
    let mut variances = prev.variances.clone();
    for (k, &nk) in mass.iter().enumerate() {
        if nk < DEAD_MASS * n {
            continue;
        }
        for j in 0..x.ncols() {
            let mu = first[[k, j]] / nk;
            means[[k, j]] = mu;
            variances[[k, j]] = (second[[k, j]] / nk - mu * mu).max(floor[j]);
        }
    }
    let weights = &mass / mass.sum();
    GmmModel { weights, means, variances }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand_distr::{Distribution, Normal, StandardNormal};

    fn two_clusters(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_for(seed, 3);
        Array2::from_shape_fn((n, 1), |(i, _)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            if i % 2 == 0 { z } else { 100.0 + z }
        })
    }

    fn cfg(m: usize) -> EmConfig {
        EmConfig { n_components: m, seed: 5, ..Default::default() }
    }

    #[test]
    fn single_gaussian_recovery() {
        let n = 10_000;
        let (mu, sigma) = ([1.5, -3.0], [2.0, 0.5]);
        let mut rng = rng_for(42, 0);
        let x = Array2::from_shape_fn((n, 2), |(_, j)| Normal::new(mu[j], sigma[j]).unwrap().sample(&mut rng));
        let fit = em_fit(x.view(), &cfg(1)).unwrap();
        for j in 0..2 {
            let se = sigma[j] / (n as f64).sqrt();
            assert!((fit.model.means()[[0, j]] - mu[j]).abs() < 3.0 * se);
            let var = fit.model.variances()[[0, j]];
            assert!((var / (sigma[j] * sigma[j]) - 1.0).abs() < 0.1, "variance {var}");
        }
    }

    #[test]
    fn separated_clusters() {
        let x = two_clusters(2000, 1);
        let fit = em_fit(x.view(), &cfg(2)).unwrap();
        let mut comps: Vec<(f64, f64)> =
            fit.model.means().column(0).iter().copied().zip(fit.model.weights().iter().copied()).collect();
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(comps[0].0.abs() < 0.2 && (comps[1].0 - 100.0).abs() < 0.2, "{comps:?}");
        assert!(comps.iter().all(|c| (c.1 - 0.5).abs() < 0.05), "{comps:?}");
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let mut rng = rng_for(8, 0);
        let x = Array2::from_shape_fn((3000, 3), |(i, j)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + ((i % 4) as f64) * 2.0 * (j as f64 - 1.0)
        });
        let fit = em_fit(x.view(), &EmConfig { max_iters: 60, tol: 0.0, ..cfg(8) }).unwrap();
        assert_eq!(fit.log_likelihood.len(), fit.iterations + 1);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] - w[0] >= -1e-8, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn responsibilities_are_normalized() {
        let x = two_clusters(200, 2);
        let fit = em_fit(x.view(), &cfg(2)).unwrap();
        let (resp, _) = e_step(&fit.model, x.view()).unwrap();
        for row in resp.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-10);
        }
        let w = fit.model.weights();
        assert_abs_diff_eq!(w.sum(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn few_frames_reduce_components() {
        let x = two_clusters(100, 3);
        let fit = em_fit(x.view(), &cfg(64)).unwrap();
        assert_eq!(fit.model.n_components(), 10);
        assert_eq!(fit.requested_components, 64);
    }

    #[test]
    fn identical_features_are_degenerate() {
        let x = Array2::from_elem((50, 2), 3.0);
        assert!(matches!(em_fit(x.view(), &cfg(1)), Err(Error::DegenerateData(_))));
        assert!(em_fit(Array2::zeros((0, 2)).view(), &cfg(1)).is_err());
    }

    #[test]
    fn variances_respect_floor() {
        // many duplicated points tempt a component to collapse
        let mut x = Array2::zeros((400, 1));
        for i in 0..200 {
            x[[i, 0]] = (i as f64) * 0.01;
        }
        let fit = em_fit(x.view(), &cfg(4)).unwrap();
        let floor = 1e-4 * x.var_axis(Axis(0), 0.0)[0];
        assert!(fit.model.variances().iter().all(|&v| v >= floor));
    }

    #[test]
    fn reference_variance_sets_the_floor() {
        let x = array![[0.0, 1.0], [0.0, 2.0], [0.0, 3.0], [0.0, 4.0], [0.0, 5.0], [0.0, 6.0], [0.0, 7.0], [0.0, 8.0],
            [0.0, 9.0], [0.0, 10.0]];
        let c = EmConfig { reference_variance: Some(array![1.0, 1.0]), ..cfg(1) };
        let fit = em_fit(x.view(), &c).unwrap();
        assert_abs_diff_eq!(fit.model.variances()[[0, 0]], 1e-4, epsilon = 1e-18);
    }

    #[test]
    fn deterministic_under_seed() {
        let x = two_clusters(500, 4);
        let a = train_ubm(x.view(), &cfg(4)).unwrap();
        let b = train_ubm(x.view(), &cfg(4)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihood, b.log_likelihood);
    }

    #[test]
    fn kmeans_pp_picks_distinct_clusters() {
        let x = two_clusters(100, 6);
        let mut rng = rng_for(1, 0);
        let means = kmeans_pp(x.view(), 2, &mut rng);
        assert!((means[[0, 0]] - means[[1, 0]]).abs() > 90.0);
    }
}
