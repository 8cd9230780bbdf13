//! (mu/mu_w, lambda)-CMA-ES with the standard tutorial settings and no
//! restarts.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check, fitness_cmp, uniform_point, Algorithm, Optimizer};
use crate::error::Result;
use crate::linalg::{floored_eigen, recompose, symmetrize};
use crate::seed::{rng_from_seed, Rng};
use crate::tracing::{BudgetedEvaluator, Stop};

const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesParams {
    pub sigma0: f64,
    /// Overrides `4 + floor(3 ln d)`.
    pub lambda: Option<usize>,
    /// Stop once `sigma * sqrt(max eigenvalue)` falls below this.
    pub tol_x: f64,
    /// Stop once the condition number of `C` exceeds this.
    pub max_condition: f64,
}

impl Default for CmaesParams {
    fn default() -> Self {
        CmaesParams { sigma0: 0.5, lambda: None, tol_x: 1e-16, max_condition: 1e14 }
    }
}

impl CmaesParams {
    pub fn validate(&self) -> Result<()> {
        check(self.sigma0 > 0.0, "cmaes.sigma0 must be > 0")?;
        check(self.lambda.is_none_or(|l| l >= 2), "cmaes.lambda must be >= 2")?;
        check(self.tol_x > 0.0, "cmaes.tol_x must be > 0")?;
        check(self.max_condition > 1.0, "cmaes.max_condition must be > 1")
    }
}

/// Default population size, `4 + floor(3 ln d)`.
pub fn default_lambda(d: usize) -> usize {
    4 + (3.0 * (d as f64).ln()).floor() as usize
}

/// Positive recombination weights for the best `mu = lambda / 2` offspring,
/// normalized to sum to one.
pub fn recombination_weights(lambda: usize) -> Vec<f64> {
    let mu = lambda / 2;
    let raw: Vec<f64> = (1..=mu)
        .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Strategy constants derived from `d` and `lambda`.
#[derive(Debug, Clone)]
pub struct Strategy {
    pub lambda: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl Strategy {
    pub fn new(d: usize, lambda: usize) -> Self {
        let n = d as f64;
        let weights = recombination_weights(lambda);
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * f64::max(0.0, ((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu = f64::min(1.0 - c_1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff));
        let chi_n = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
        Strategy { lambda, weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }
}

#[derive(Debug, Clone)]
pub struct Cmaes {
    params: CmaesParams,
    pub strategy: Strategy,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub covariance: DMatrix<f64>,
    pub path_sigma: DVector<f64>,
    pub path_c: DVector<f64>,
    /// Eigenbasis `B` and axis lengths `D` of the current covariance.
    basis: DMatrix<f64>,
    axis: DVector<f64>,
    pub generation: usize,
    rng: Rng,
    finished: bool,
}

impl Cmaes {
    /// Cold start: mean uniform in `[0, 1)^d`, `sigma = sigma0`, `C = I`.
    pub fn new(params: CmaesParams, dimension: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mean = uniform_point(&mut rng, dimension, 0.0, 1.0);
        let sigma = params.sigma0;
        Self::from_state(params, mean, sigma, DMatrix::identity(dimension, dimension), rng)
    }

    /// Start from an explicit distribution. Evolution paths start at zero.
    pub fn warm(params: CmaesParams, mean: Vec<f64>, sigma: f64, covariance: DMatrix<f64>, seed: u64) -> Self {
        Self::from_state(params, mean, sigma, covariance, rng_from_seed(seed))
    }

    fn from_state(params: CmaesParams, mean: Vec<f64>, sigma: f64, covariance: DMatrix<f64>, rng: Rng) -> Self {
        let d = mean.len();
        let lambda = params.lambda.unwrap_or_else(|| default_lambda(d));
        let mut s = Cmaes {
            strategy: Strategy::new(d, lambda),
            params,
            mean: DVector::from_vec(mean),
            sigma,
            covariance,
            path_sigma: DVector::zeros(d),
            path_c: DVector::zeros(d),
            basis: DMatrix::identity(d, d),
            axis: DVector::from_element(d, 1.0),
            generation: 0,
            rng,
            finished: false,
        };
        s.refresh_eigen();
        s
    }

    fn refresh_eigen(&mut self) {
        let (eig, repaired) = floored_eigen(&self.covariance, EIGEN_FLOOR);
        if repaired {
            log::warn!("CMA-ES covariance not positive definite; flooring eigenvalues");
            self.covariance = recompose(&eig);
        } else {
            symmetrize(&mut self.covariance);
        }
        self.axis = eig.eigenvalues.map(f64::sqrt);
        self.basis = eig.eigenvectors;
    }

    /// Draws `lambda` steps `y = B D z` and the candidates `m + sigma * y`.
    pub fn ask(&mut self) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let d = self.mean.len();
        let mut steps = Vec::with_capacity(self.strategy.lambda);
        let mut xs = Vec::with_capacity(self.strategy.lambda);
        for _ in 0..self.strategy.lambda {
            let z = DVector::from_fn(d, |_, _| self.rng.sample::<f64, _>(StandardNormal));
            let y = &self.basis * z.component_mul(&self.axis);
            xs.push(&self.mean + &y * self.sigma);
            steps.push(y);
        }
        (steps, xs)
    }

    /// Updates the distribution from the steps and their fitness values.
    pub fn tell(&mut self, steps: &[DVector<f64>], fitness: &[f64]) {
        let st = &self.strategy;
        let d = self.mean.len();
        let n = d as f64;
        let mut order: Vec<usize> = (0..steps.len()).collect();
        order.sort_by(|&a, &b| fitness_cmp(fitness[a], fitness[b]));

        let mut y_w = DVector::zeros(d);
        for (w, &i) in st.weights.iter().zip(&order) {
            y_w += &steps[i] * *w;
        }
        self.mean += &y_w * self.sigma;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_y = &self.basis * (self.basis.transpose() * &y_w).component_div(&self.axis);
        self.path_sigma = &self.path_sigma * (1.0 - st.c_sigma)
            + inv_sqrt_y * (st.c_sigma * (2.0 - st.c_sigma) * st.mu_eff).sqrt();
        let gen = (self.generation + 1) as f64;
        let ps_norm = self.path_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - st.c_sigma).powf(2.0 * gen)).sqrt()
            < (1.4 + 2.0 / (n + 1.0)) * st.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.path_c = &self.path_c * (1.0 - st.c_c) + &y_w * (h * (st.c_c * (2.0 - st.c_c) * st.mu_eff).sqrt());

        let delta_h = (1.0 - h) * st.c_c * (2.0 - st.c_c);
        let weight_sum: f64 = st.weights.iter().sum();
        let mut c = &self.covariance * (1.0 + st.c_1 * delta_h - st.c_1 - st.c_mu * weight_sum);
        c += &self.path_c * self.path_c.transpose() * st.c_1;
        for (w, &i) in st.weights.iter().zip(&order) {
            c += &steps[i] * steps[i].transpose() * (st.c_mu * w);
        }
        self.covariance = c;
        self.sigma *= ((st.c_sigma / st.d_sigma) * (ps_norm / st.chi_n - 1.0)).exp();
        self.generation += 1;
        self.refresh_eigen();
        self.check_termination();
    }

    fn check_termination(&mut self) {
        let max_axis = self.axis.max();
        let min_axis = self.axis.min();
        let cond = (max_axis / min_axis).powi(2);
        if !self.sigma.is_finite()
            || self.sigma <= 0.0
            || self.sigma * max_axis < self.params.tol_x
            || !(cond <= self.params.max_condition)
            || self.mean.iter().any(|v| !v.is_finite())
        {
            self.finished = true;
        }
    }
}

impl Optimizer for Cmaes {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Cmaes
    }

    fn step(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        if self.finished {
            return Ok(());
        }
        let (steps, xs) = self.ask();
        let mut fitness = Vec::with_capacity(xs.len());
        for x in &xs {
            fitness.push(ev.eval_and_record(x.as_slice())?);
        }
        self.tell(&steps, &fitness);
        Ok(())
    }

    fn is_finished(&self) -> bool {
        self.finished
    }
}
