//! Hand-over of information from a suspended optimizer to its successor.
//!
//! [`extract`] snapshots whatever the source optimizer knows; the
//! `*_from_*` functions and [`generic`] build the successor's initial state.
//! No function in this module evaluates the objective.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{floored_eigen, recompose};
use crate::optimizers::{
    check, fitness_cmp, Algorithm, AnyOptimizer, Bfgs, Cmaes, De, Hyperparameters, Mlsl, Optimizer, OptimizerConfig,
    Pso,
};
use crate::problems::{LOWER_BOUND, UPPER_BOUND};
use crate::seed::{rng_from_seed, Rng};
use crate::tracing::BudgetedEvaluator;

const EIGEN_FLOOR: f64 = 1e-14;
const DEFAULT_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStartMode {
    /// Only the best point is handed over; everything else is default.
    PointOnly,
    /// Step size, covariance or population are transferred as well.
    Full,
}

impl fmt::Display for WarmStartMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarmStartMode::PointOnly => "point_only",
            WarmStartMode::Full => "full",
        })
    }
}

impl FromStr for WarmStartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "point_only" | "point" => Ok(WarmStartMode::PointOnly),
            "full" => Ok(WarmStartMode::Full),
            _ => Err(Error::config(format!("unknown warm-start mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStartPolicy {
    pub mode: WarmStartMode,
    /// Number of recent BFGS iterates used for the step-size estimate.
    pub window: usize,
    /// Half-width of the hyperbox around the best point.
    pub eta: f64,
    /// Scale of the inverse Hessian built from a CMA-ES state.
    pub beta: f64,
}

impl Default for WarmStartPolicy {
    fn default() -> Self {
        WarmStartPolicy { mode: WarmStartMode::Full, window: 10, eta: 0.1, beta: 1.0 }
    }
}

impl WarmStartPolicy {
    pub fn with_mode(mode: WarmStartMode) -> Self {
        WarmStartPolicy { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        check(self.window >= 2, "warm-start window must be >= 2")?;
        check(self.eta > 0.0, "warm-start eta must be > 0")?;
        check(self.beta > 0.0, "warm-start beta must be > 0")
    }
}

/// Everything a successor may inherit.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStartState {
    pub source: Algorithm,
    pub best_point: Vec<f64>,
    pub best_value: f64,
    /// Recent BFGS iterates, most recent first.
    pub recent_trajectory: Option<Vec<Vec<f64>>>,
    pub inv_hessian: Option<DMatrix<f64>>,
    pub mean: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub covariance: Option<DMatrix<f64>>,
    pub population: Option<Vec<(Vec<f64>, f64)>>,
    pub evaluations_spent: u64,
}

impl WarmStartState {
    /// A state holding only a best point.
    pub fn point(source: Algorithm, best_point: Vec<f64>, best_value: f64, evaluations_spent: u64) -> Self {
        WarmStartState {
            source,
            best_point,
            best_value,
            recent_trajectory: None,
            inv_hessian: None,
            mean: None,
            sigma: None,
            covariance: None,
            population: None,
            evaluations_spent,
        }
    }

    pub fn dimension(&self) -> usize {
        self.best_point.len()
    }
}

/// Snapshot of `opt` after it ran on `ev`. The best point is the run's
/// best-so-far.
pub fn extract(opt: &AnyOptimizer, ev: &BudgetedEvaluator<'_>) -> Result<WarmStartState> {
    if ev.evals_used() == 0 || ev.best_point().is_empty() {
        return Err(Error::NoEvaluations);
    }
    let mut ws = WarmStartState::point(
        opt.algorithm(),
        ev.best_point().to_vec(),
        ev.best_value(),
        ev.evals_used(),
    );
    match opt {
        AnyOptimizer::Bfgs(b) => {
            ws.recent_trajectory = Some(b.recent_points.iter().cloned().collect());
            ws.inv_hessian = Some(b.curvature_estimate().clone());
        }
        AnyOptimizer::Cmaes(c) => {
            ws.mean = Some(c.mean.as_slice().to_vec());
            ws.sigma = Some(c.sigma);
            ws.covariance = Some(c.covariance.clone());
        }
        AnyOptimizer::Pso(p) => {
            ws.population = Some(
                p.particles
                    .iter()
                    .filter(|q| q.best_value.is_finite())
                    .map(|q| (q.best_position.clone(), q.best_value))
                    .collect(),
            );
        }
        AnyOptimizer::De(d) => {
            ws.population = Some(
                d.population
                    .iter()
                    .zip(&d.values)
                    .filter_map(|(x, v)| v.map(|v| (x.clone(), v)))
                    .collect(),
            );
        }
        AnyOptimizer::Mlsl(m) => {
            ws.population = Some(m.population());
        }
    }
    Ok(ws)
}

/// Mean Euclidean step over the first `window` points of `trajectory`.
/// `None` if fewer than two points exist or every step is zero.
pub fn trajectory_step_size(trajectory: &[Vec<f64>], window: usize) -> Option<f64> {
    let pts = &trajectory[..trajectory.len().min(window)];
    if pts.len() < 2 {
        return None;
    }
    let total: f64 = pts.windows(2).map(|w| crate::linalg::distance(&w[0], &w[1])).sum();
    let s = total / (pts.len() - 1) as f64;
    (s > 0.0 && s.is_finite()).then_some(s)
}

/// Rescales a symmetric positive-definite matrix to unit determinant,
/// flooring eigenvalues first if needed.
pub fn unit_determinant(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (eig, repaired) = floored_eigen(m, EIGEN_FLOOR);
    if repaired {
        log::warn!("inverse Hessian not positive definite; flooring eigenvalues");
    }
    let d = eig.eigenvalues.len() as f64;
    let log_det: f64 = eig.eigenvalues.iter().map(|v| v.ln()).sum();
    let scale = (-log_det / d).exp();
    recompose(&eig) * scale
}

/// CMA-ES from a BFGS state: covariance from the unit-determinant inverse
/// Hessian and step size from the recent step lengths.
pub fn cmaes_from_bfgs(ws: &WarmStartState, policy: &WarmStartPolicy, params: &Hyperparameters, seed: u64) -> Cmaes {
    let d = ws.dimension();
    let p = params.cmaes.clone();
    if policy.mode == WarmStartMode::PointOnly {
        let sigma = p.sigma0;
        return Cmaes::warm(p, ws.best_point.clone(), sigma, DMatrix::identity(d, d), seed);
    }
    let covariance = match &ws.inv_hessian {
        Some(h) => unit_determinant(h),
        None => DMatrix::identity(d, d),
    };
    let sigma = ws
        .recent_trajectory
        .as_deref()
        .and_then(|t| trajectory_step_size(t, policy.window))
        .unwrap_or_else(|| {
            log::warn!("no usable BFGS trajectory; using default step size");
            DEFAULT_SIGMA
        });
    Cmaes::warm(p, ws.best_point.clone(), sigma, covariance, seed)
}

/// BFGS from a CMA-ES state: start at the best point with inverse Hessian
/// `beta * sigma^2 * C`.
pub fn bfgs_from_cmaes(ws: &WarmStartState, policy: &WarmStartPolicy, params: &Hyperparameters) -> Bfgs {
    let d = ws.dimension();
    let h = match (policy.mode, &ws.covariance, ws.sigma) {
        (WarmStartMode::Full, Some(c), Some(s)) => c * (policy.beta * s * s),
        _ => DMatrix::identity(d, d),
    };
    Bfgs::warm(params.bfgs.clone(), ws.best_point.clone(), Some(ws.best_value), h)
}

/// Hyperbox `[x - eta, x + eta]` intersected with the search box.
pub fn hyperbox(center: &[f64], eta: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = center.iter().map(|c| (c - eta).max(LOWER_BOUND)).collect();
    let hi = center.iter().map(|c| (c + eta).min(UPPER_BOUND)).collect();
    (lo, hi)
}

fn uniform_between(rng: &mut Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&a, &b)| if b > a { rng.random_range(a..b) } else { a })
        .collect()
}

/// `n` members: the best point (with its value) followed by uniform draws
/// from the hyperbox around it.
fn hyperbox_population(ws: &WarmStartState, eta: f64, n: usize, rng: &mut Rng) -> Vec<(Vec<f64>, Option<f64>)> {
    let (lo, hi) = hyperbox(&ws.best_point, eta);
    let mut pop = vec![(ws.best_point.clone(), Some(ws.best_value))];
    while pop.len() < n {
        pop.push((uniform_between(rng, &lo, &hi), None));
    }
    pop.truncate(n.max(1));
    pop
}

/// Members carried over from `ws.population` (best first, truncated to
/// `n`), padded from the hyperbox. Carried members keep their values.
fn carried_population(ws: &WarmStartState, eta: f64, n: usize, rng: &mut Rng) -> (Vec<(Vec<f64>, Option<f64>)>, usize) {
    let mut source: Vec<(Vec<f64>, f64)> = ws.population.clone().unwrap_or_default();
    source.sort_by(|a, b| fitness_cmp(a.1, b.1));
    let mut pop: Vec<(Vec<f64>, Option<f64>)> = Vec::with_capacity(n);
    if source.first().is_none_or(|b| fitness_cmp(ws.best_value, b.1).is_lt()) {
        pop.push((ws.best_point.clone(), Some(ws.best_value)));
    }
    pop.extend(source.into_iter().map(|(x, f)| (x, Some(f))));
    pop.truncate(n);
    let carried = pop.len();
    let (lo, hi) = hyperbox(&ws.best_point, eta);
    while pop.len() < n {
        pop.push((uniform_between(rng, &lo, &hi), None));
    }
    (pop, carried)
}

fn pso_from(members: Vec<(Vec<f64>, Option<f64>)>, carried: usize, eta: f64, params: &Hyperparameters, rng: &mut Rng, seed: u64) -> Pso {
    let swarm = members
        .into_iter()
        .enumerate()
        .map(|(i, (x, v))| {
            let vel = if i < carried { vec![0.0; x.len()] } else { x.iter().map(|_| rng.random_range(-eta..eta)).collect() };
            (x, vel, v)
        })
        .collect();
    Pso::from_swarm(params.pso.clone(), swarm, seed)
}

fn de_from(members: Vec<(Vec<f64>, Option<f64>)>, params: &Hyperparameters, seed: u64) -> De {
    let (pop, vals) = members.into_iter().unzip();
    De::warm(params.de.clone(), pop, vals, seed)
}

/// PSO or DE from an MLSL state: uniform in the hyperbox around the best
/// point, with the best point itself as one member. PSO velocities are
/// uniform in `[-eta, eta]^d`.
pub fn population_from_mlsl(
    ws: &WarmStartState,
    policy: &WarmStartPolicy,
    target: Algorithm,
    params: &Hyperparameters,
    seed: u64,
) -> Result<AnyOptimizer> {
    let d = ws.dimension();
    let mut rng = rng_from_seed(seed ^ 0x5157_4152_4d53_5441);
    let n = match target {
        Algorithm::Pso => params.pso.swarm_size,
        Algorithm::De => params.de.population_size(d),
        other => return Err(Error::config(format!("hyperbox warm start does not apply to {other}"))),
    };
    if policy.mode == WarmStartMode::PointOnly {
        return Ok(point_only(ws, target, params, 0, seed));
    }
    let members = hyperbox_population(ws, policy.eta, n, &mut rng);
    Ok(match target {
        Algorithm::Pso => AnyOptimizer::Pso(pso_from(members, 0, policy.eta, params, &mut rng, seed)),
        _ => AnyOptimizer::De(de_from(members, params, seed)),
    })
}

/// CMA-ES from an MLSL state: mean at the best point, default step size and
/// identity covariance.
pub fn cmaes_from_mlsl(ws: &WarmStartState, params: &Hyperparameters, seed: u64) -> Cmaes {
    let d = ws.dimension();
    let sigma = params.cmaes.sigma0;
    Cmaes::warm(params.cmaes.clone(), ws.best_point.clone(), sigma, DMatrix::identity(d, d), seed)
}

/// Cold defaults except that the best point is the start point, mean or a
/// population member.
fn point_only(
    ws: &WarmStartState,
    target: Algorithm,
    params: &Hyperparameters,
    budget: u64,
    seed: u64,
) -> AnyOptimizer {
    let d = ws.dimension();
    match target {
        Algorithm::Bfgs => AnyOptimizer::Bfgs(Bfgs::warm(
            params.bfgs.clone(),
            ws.best_point.clone(),
            Some(ws.best_value),
            DMatrix::identity(d, d),
        )),
        Algorithm::Cmaes => AnyOptimizer::Cmaes(cmaes_from_mlsl(ws, params, seed)),
        Algorithm::Pso => {
            let mut pso = Pso::new(params.pso.clone(), d, seed);
            let swarm = pso
                .particles
                .drain(..)
                .enumerate()
                .map(|(i, p)| {
                    if i == 0 {
                        (ws.best_point.clone(), vec![0.0; d], Some(ws.best_value))
                    } else {
                        (p.position, p.velocity, None)
                    }
                })
                .collect();
            AnyOptimizer::Pso(Pso::from_swarm(params.pso.clone(), swarm, seed))
        }
        Algorithm::De => {
            let mut de = De::new(params.de.clone(), d, seed);
            let mut values = vec![None; de.population.len()];
            if let Some(first) = de.population.first_mut() {
                *first = ws.best_point.clone();
                values[0] = Some(ws.best_value);
            }
            AnyOptimizer::De(De::warm(params.de.clone(), de.population, values, seed))
        }
        Algorithm::Mlsl => {
            AnyOptimizer::Mlsl(Mlsl::seeded(params.mlsl.clone(), d, budget, seed, ws.best_point.clone(), ws.best_value))
        }
    }
}

/// Root-mean-square per-coordinate standard deviation of a population.
pub fn population_spread(pop: &[(Vec<f64>, f64)]) -> Option<f64> {
    if pop.len() < 2 {
        return None;
    }
    let d = pop[0].0.len();
    let n = pop.len() as f64;
    let mut var_sum = 0.0;
    for k in 0..d {
        let mean = pop.iter().map(|p| p.0[k]).sum::<f64>() / n;
        var_sum += pop.iter().map(|p| (p.0[k] - mean).powi(2)).sum::<f64>() / n;
    }
    let s = (var_sum / d as f64).sqrt();
    (s > 0.0 && s.is_finite()).then_some(s)
}

/// Warm start for pairs without a dedicated rule.
pub fn generic(
    ws: &WarmStartState,
    target: Algorithm,
    policy: &WarmStartPolicy,
    params: &Hyperparameters,
    budget: u64,
    seed: u64,
) -> AnyOptimizer {
    let d = ws.dimension();
    if policy.mode == WarmStartMode::PointOnly {
        return point_only(ws, target, params, budget, seed);
    }
    let mut rng = rng_from_seed(seed ^ 0x4745_4e45_5249_4353);
    match target {
        Algorithm::Bfgs => AnyOptimizer::Bfgs(Bfgs::warm(
            params.bfgs.clone(),
            ws.best_point.clone(),
            Some(ws.best_value),
            DMatrix::identity(d, d),
        )),
        Algorithm::Cmaes => {
            let sigma = ws
                .population
                .as_deref()
                .and_then(population_spread)
                .map(|s| 0.5 * s)
                .unwrap_or(params.cmaes.sigma0);
            AnyOptimizer::Cmaes(Cmaes::warm(params.cmaes.clone(), ws.best_point.clone(), sigma, DMatrix::identity(d, d), seed))
        }
        Algorithm::Pso => {
            let (members, carried) = carried_population(ws, policy.eta, params.pso.swarm_size, &mut rng);
            AnyOptimizer::Pso(pso_from(members, carried, policy.eta, params, &mut rng, seed))
        }
        Algorithm::De => {
            let (members, _) = carried_population(ws, policy.eta, params.de.population_size(d), &mut rng);
            AnyOptimizer::De(de_from(members, params, seed))
        }
        Algorithm::Mlsl => AnyOptimizer::Mlsl(Mlsl::seeded(params.mlsl.clone(), d, budget, seed, ws.best_point.clone(), ws.best_value)),
    }
}

/// Builds the successor described by `target` from `ws`.
pub fn warm_start(
    ws: &WarmStartState,
    target: &OptimizerConfig,
    policy: &WarmStartPolicy,
    budget: u64,
) -> Result<AnyOptimizer> {
    policy.validate()?;
    target.validate()?;
    let params = &target.params;
    let seed = target.rng_seed;
    Ok(match (ws.source, target.algorithm) {
        (Algorithm::Bfgs, Algorithm::Cmaes) => AnyOptimizer::Cmaes(cmaes_from_bfgs(ws, policy, params, seed)),
        (Algorithm::Cmaes, Algorithm::Bfgs) => AnyOptimizer::Bfgs(bfgs_from_cmaes(ws, policy, params)),
        (Algorithm::Mlsl, Algorithm::Pso | Algorithm::De) => population_from_mlsl(ws, policy, target.algorithm, params, seed)?,
        (Algorithm::Mlsl, Algorithm::Cmaes) => AnyOptimizer::Cmaes(cmaes_from_mlsl(ws, params, seed)),
        (_, a) => generic(ws, a, policy, params, budget, seed),
    })
}
