//! The optimizer portfolio.
//!
//! Each optimizer is a suspendable state machine: [`Optimizer::step`] runs
//! one iteration, routing every evaluation through a
//! [`BudgetedEvaluator`], and returns early with the evaluator's [`Stop`]
//! signal when the run must end. State is left in place so that a switching
//! run can inspect it afterwards.

pub mod bfgs;
pub mod cmaes;
pub mod de;
pub mod linesearch;
pub mod mlsl;
pub mod powell;
pub mod pso;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ProblemInstance, LOWER_BOUND, UPPER_BOUND};
use crate::seed::Rng;
use crate::tracing::{BudgetedEvaluator, RunTrace, Stop, TargetGrid, TerminationReason};

pub use bfgs::{Bfgs, BfgsParams};
pub use cmaes::{Cmaes, CmaesParams};
pub use de::{De, DeParams};
pub use mlsl::{Mlsl, MlslParams};
pub use pso::{Pso, PsoParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "BFGS")]
    Bfgs,
    #[serde(rename = "MLSL")]
    Mlsl,
    #[serde(rename = "PSO")]
    Pso,
    #[serde(rename = "CMAES")]
    Cmaes,
    #[serde(rename = "DE")]
    De,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Bfgs,
        Algorithm::Mlsl,
        Algorithm::Pso,
        Algorithm::Cmaes,
        Algorithm::De,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Bfgs => "BFGS",
            Algorithm::Mlsl => "MLSL",
            Algorithm::Pso => "PSO",
            Algorithm::Cmaes => "CMAES",
            Algorithm::De => "DE",
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Algorithm::Bfgs => 1,
            Algorithm::Mlsl => 2,
            Algorithm::Pso => 3,
            Algorithm::Cmaes => 4,
            Algorithm::De => 5,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "BFGS" => Ok(Algorithm::Bfgs),
            "MLSL" => Ok(Algorithm::Mlsl),
            "PSO" => Ok(Algorithm::Pso),
            "CMAES" => Ok(Algorithm::Cmaes),
            "DE" => Ok(Algorithm::De),
            _ => Err(Error::config(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Hyperparameters of the whole portfolio. Defaults are the benchmark
/// settings; a TOML file with `[bfgs]`, `[cmaes]`, ... tables can override
/// any subset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub bfgs: BfgsParams,
    pub mlsl: MlslParams,
    pub pso: PsoParams,
    pub cmaes: CmaesParams,
    pub de: DeParams,
}

impl Hyperparameters {
    pub fn from_toml(text: &str) -> Result<Self> {
        let h: Hyperparameters = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        self.bfgs.validate()?;
        self.mlsl.validate()?;
        self.pso.validate()?;
        self.cmaes.validate()?;
        self.de.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub params: Hyperparameters,
    pub rng_seed: u64,
}

impl OptimizerConfig {
    pub fn new(algorithm: Algorithm, rng_seed: u64) -> Self {
        OptimizerConfig { algorithm, params: Hyperparameters::default(), rng_seed }
    }

    pub fn with_params(mut self, params: Hyperparameters) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()
    }
}

pub(crate) fn check(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(what.to_string()))
    }
}

/// Common step-wise interface of the portfolio.
pub trait Optimizer {
    fn algorithm(&self) -> Algorithm;

    /// Runs one iteration. Either performs at least one evaluation or leaves
    /// the optimizer finished. A `Stop` from the evaluator is passed through.
    fn step(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop>;

    /// Internal convergence: the optimizer has nothing left to try.
    fn is_finished(&self) -> bool;
}

/// One of the five portfolio members, with its full internal state.
#[derive(Debug, Clone)]
pub enum AnyOptimizer {
    Bfgs(Bfgs),
    Mlsl(Mlsl),
    Pso(Pso),
    Cmaes(Cmaes),
    De(De),
}

impl AnyOptimizer {
    /// Cold start with the default initialization of each algorithm.
    pub fn cold(config: &OptimizerConfig, dimension: usize, budget: u64) -> Result<Self> {
        config.validate()?;
        let p = &config.params;
        let seed = config.rng_seed;
        Ok(match config.algorithm {
            Algorithm::Bfgs => AnyOptimizer::Bfgs(Bfgs::new(p.bfgs.clone(), dimension, seed)),
            Algorithm::Mlsl => AnyOptimizer::Mlsl(Mlsl::new(p.mlsl.clone(), dimension, budget, seed)),
            Algorithm::Pso => AnyOptimizer::Pso(Pso::new(p.pso.clone(), dimension, seed)),
            Algorithm::Cmaes => AnyOptimizer::Cmaes(Cmaes::new(p.cmaes.clone(), dimension, seed)),
            Algorithm::De => AnyOptimizer::De(De::new(p.de.clone(), dimension, seed)),
        })
    }

    fn inner(&mut self) -> &mut dyn Optimizer {
        match self {
            AnyOptimizer::Bfgs(o) => o,
            AnyOptimizer::Mlsl(o) => o,
            AnyOptimizer::Pso(o) => o,
            AnyOptimizer::Cmaes(o) => o,
            AnyOptimizer::De(o) => o,
        }
    }
}

impl Optimizer for AnyOptimizer {
    fn algorithm(&self) -> Algorithm {
        match self {
            AnyOptimizer::Bfgs(_) => Algorithm::Bfgs,
            AnyOptimizer::Mlsl(_) => Algorithm::Mlsl,
            AnyOptimizer::Pso(_) => Algorithm::Pso,
            AnyOptimizer::Cmaes(_) => Algorithm::Cmaes,
            AnyOptimizer::De(_) => Algorithm::De,
        }
    }

    fn step(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        self.inner().step(ev)
    }

    fn is_finished(&self) -> bool {
        match self {
            AnyOptimizer::Bfgs(o) => o.is_finished(),
            AnyOptimizer::Mlsl(o) => o.is_finished(),
            AnyOptimizer::Pso(o) => o.is_finished(),
            AnyOptimizer::Cmaes(o) => o.is_finished(),
            AnyOptimizer::De(o) => o.is_finished(),
        }
    }
}

/// Steps `opt` until the evaluator's stop target is hit, the budget is
/// gone, or the optimizer converges internally.
pub fn drive(opt: &mut dyn Optimizer, ev: &mut BudgetedEvaluator<'_>) -> TerminationReason {
    loop {
        match ev.stop_reason() {
            Some(Stop::TargetHit) => return TerminationReason::TargetHit,
            Some(_) => return TerminationReason::BudgetExhausted,
            None => {}
        }
        if opt.is_finished() {
            return TerminationReason::AlgorithmConverged;
        }
        let before = ev.evals_used();
        match opt.step(ev) {
            Ok(()) => {
                if ev.evals_used() == before && !opt.is_finished() {
                    log::warn!("{} made no progress in a step; treating as converged", opt.algorithm());
                    return TerminationReason::AlgorithmConverged;
                }
            }
            Err(Stop::TargetHit) => return TerminationReason::TargetHit,
            Err(Stop::BudgetExhausted) => return TerminationReason::BudgetExhausted,
            Err(Stop::LocalBudget) => {}
        }
    }
}

/// A complete static run from a cold start. `final_target` is snapped to
/// the target grid.
pub fn run_single(
    config: &OptimizerConfig,
    problem: &ProblemInstance,
    budget: u64,
    final_target: f64,
) -> Result<RunTrace> {
    let final_index = TargetGrid::snap(final_target)?;
    let mut opt = AnyOptimizer::cold(config, problem.id.dimension, budget)?;
    let mut ev = BudgetedEvaluator::new(problem, budget, final_index);
    let reason = drive(&mut opt, &mut ev);
    Ok(ev.into_trace(problem.id, config.algorithm.label(), 0, reason))
}

pub(crate) fn uniform_point(rng: &mut Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

pub(crate) fn uniform_in_box(rng: &mut Rng, d: usize) -> Vec<f64> {
    uniform_point(rng, d, LOWER_BOUND, UPPER_BOUND)
}

/// Comparison key that sorts NaN last.
pub(crate) fn fitness_cmp(a: f64, b: f64) -> std::cmp::Ordering {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    key(a).total_cmp(&key(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{instantiate, ProblemId};

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("cma-es".parse::<Algorithm>().unwrap(), Algorithm::Cmaes);
        assert!("nelder".parse::<Algorithm>().is_err());
    }

    #[test]
    fn toml_overrides_subset() {
        let h = Hyperparameters::from_toml("[pso]\nswarm_size = 20\n[de]\ncr = 0.5\n").unwrap();
        assert_eq!(h.pso.swarm_size, 20);
        assert_eq!(h.de.cr, 0.5);
        assert_eq!(h.cmaes, CmaesParams::default());
        assert!(Hyperparameters::from_toml("[pso]\nswarm_size = 0\n").is_err());
        assert!(Hyperparameters::from_toml("[nope]\n").is_err());
    }

    #[test]
    fn zero_budget_run() {
        let p = instantiate(ProblemId::new(1, 2, 1).unwrap(), 1).unwrap();
        for a in Algorithm::ALL {
            let t = run_single(&OptimizerConfig::new(a, 3), &p, 0, 1e-8).unwrap();
            assert_eq!(t.evals_used, 0);
            assert_eq!(t.terminated_reason, TerminationReason::BudgetExhausted);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let p = instantiate(ProblemId::new(10, 3, 1).unwrap(), 1).unwrap();
        for a in Algorithm::ALL {
            let cfg = OptimizerConfig::new(a, 11);
            let t1 = run_single(&cfg, &p, 3000, 1e-8).unwrap();
            let t2 = run_single(&cfg, &p, 3000, 1e-8).unwrap();
            assert_eq!(t1.hit_at, t2.hit_at, "{a}");
            assert_eq!(t1.best_precision.to_bits(), t2.best_precision.to_bits());
            assert_eq!(t1.evals_used, t2.evals_used);
        }
    }
}
