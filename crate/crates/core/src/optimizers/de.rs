//! Differential evolution, `best/1/bin` with immediate updating.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check, fitness_cmp, uniform_in_box, Algorithm, Optimizer};
use crate::error::Result;
use crate::problems::{LOWER_BOUND, UPPER_BOUND};
use crate::seed::{rng_from_seed, Rng};
use crate::tracing::{BudgetedEvaluator, Stop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeParams {
    /// Population size is `pop_multiplier * d`.
    pub pop_multiplier: usize,
    pub cr: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Relative tolerance on the spread of population fitness.
    pub tol: f64,
}

impl Default for DeParams {
    fn default() -> Self {
        DeParams { pop_multiplier: 5, cr: 0.7, f_min: 0.5, f_max: 1.0, tol: 1e-12 }
    }
}

impl DeParams {
    pub fn validate(&self) -> Result<()> {
        check(self.pop_multiplier >= 1, "de.pop_multiplier must be >= 1")?;
        check((0.0..=1.0).contains(&self.cr), "de.cr must be in [0, 1]")?;
        check(0.0 <= self.f_min && self.f_min <= self.f_max && self.f_max < 2.0, "de needs 0 <= f_min <= f_max < 2")?;
        check(self.tol > 0.0, "de.tol must be > 0")
    }

    pub fn population_size(&self, d: usize) -> usize {
        (self.pop_multiplier * d).max(4)
    }
}

/// Binomial crossover mask: each gene takes the mutant with probability
/// `cr`, and one uniformly drawn index always does.
pub fn binomial_crossover_mask(d: usize, cr: f64, rng: &mut Rng) -> Vec<bool> {
    let forced = rng.random_range(0..d);
    (0..d).map(|k| k == forced || rng.random::<f64>() < cr).collect()
}

#[derive(Debug, Clone)]
pub struct De {
    params: DeParams,
    pub population: Vec<Vec<f64>>,
    /// `None` until the member has been evaluated.
    pub values: Vec<Option<f64>>,
    pub best: usize,
    pub generation: usize,
    rng: Rng,
    finished: bool,
}

impl De {
    /// Population of `5d` points uniform in the box.
    pub fn new(params: DeParams, dimension: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let n = params.population_size(dimension);
        let population = (0..n).map(|_| uniform_in_box(&mut rng, dimension)).collect();
        Self::build(params, population, vec![None; n], rng)
    }

    /// Explicit population; members with a known value are not re-evaluated.
    pub fn warm(params: DeParams, population: Vec<Vec<f64>>, values: Vec<Option<f64>>, seed: u64) -> Self {
        assert_eq!(population.len(), values.len());
        Self::build(params, population, values, rng_from_seed(seed))
    }

    fn build(params: DeParams, population: Vec<Vec<f64>>, values: Vec<Option<f64>>, rng: Rng) -> Self {
        let mut de = De { params, population, values, best: 0, generation: 0, rng, finished: false };
        de.refresh_best();
        de
    }

    pub fn params(&self) -> &DeParams {
        &self.params
    }

    fn refresh_best(&mut self) {
        let key = |v: &Option<f64>| v.unwrap_or(f64::INFINITY);
        self.best = (0..self.values.len())
            .min_by(|&a, &b| fitness_cmp(key(&self.values[a]), key(&self.values[b])))
            .unwrap_or(0);
    }

    pub fn best_value(&self) -> f64 {
        self.values.get(self.best).copied().flatten().unwrap_or(f64::INFINITY)
    }

    fn converged(&self) -> bool {
        let vals: Vec<f64> = self.values.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        std <= self.params.tol * mean.abs()
    }

    fn evaluate_pending(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        for i in 0..self.population.len() {
            if self.values[i].is_none() {
                self.values[i] = Some(ev.eval_and_record(&self.population[i])?);
            }
        }
        self.refresh_best();
        Ok(())
    }

    fn pick_distinct(&mut self, exclude: usize) -> (usize, usize) {
        let n = self.population.len();
        let r1 = loop {
            let r = self.rng.random_range(0..n);
            if r != exclude {
                break r;
            }
        };
        let r2 = loop {
            let r = self.rng.random_range(0..n);
            if r != exclude && r != r1 {
                break r;
            }
        };
        (r1, r2)
    }
}

impl Optimizer for De {
    fn algorithm(&self) -> Algorithm {
        Algorithm::De
    }

    fn step(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        if self.finished {
            return Ok(());
        }
        if self.values.iter().any(Option::is_none) {
            self.evaluate_pending(ev)?;
            self.finished = self.converged();
            return Ok(());
        }
        let n = self.population.len();
        if n < 3 {
            self.finished = true;
            return Ok(());
        }
        let d = self.population[0].len();
        let scale = self.rng.random_range(self.params.f_min..=self.params.f_max);
        for i in 0..n {
            let (r1, r2) = self.pick_distinct(i);
            let mask = binomial_crossover_mask(d, self.params.cr, &mut self.rng);
            let mut trial = self.population[i].clone();
            for k in 0..d {
                if mask[k] {
                    let b = &self.population[self.best];
                    let g = b[k] + scale * (self.population[r1][k] - self.population[r2][k]);
                    trial[k] = if (LOWER_BOUND..=UPPER_BOUND).contains(&g) {
                        g
                    } else {
                        self.rng.random_range(LOWER_BOUND..UPPER_BOUND)
                    };
                }
            }
            let v = ev.eval_and_record(&trial)?;
            let current = self.values[i].unwrap_or(f64::INFINITY);
            if fitness_cmp(v, current).is_le() {
                self.population[i] = trial;
                self.values[i] = Some(v);
                if fitness_cmp(v, self.best_value()).is_lt() {
                    self.best = i;
                }
            }
        }
        self.generation += 1;
        self.finished = self.converged();
        Ok(())
    }

    fn is_finished(&self) -> bool {
        self.finished
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{instantiate, ProblemId};
    use crate::tracing::TargetGrid;

    #[test]
    fn crossover_mask_mean_matches_binomial_expectation() {
        let mut rng = rng_from_seed(17);
        let samples = 100_000;
        let total: usize = (0..samples)
            .map(|_| binomial_crossover_mask(10, 0.7, &mut rng).iter().filter(|&&b| b).count())
            .sum();
        let mean = total as f64 / samples as f64;
        // One forced gene plus Binomial(9, 0.7) among the rest.
        let expected = 1.0 + 9.0 * 0.7;
        assert!((mean - expected).abs() / expected < 0.02, "mean {mean}");
        let mut rng = rng_from_seed(3);
        assert!((0..1000).all(|_| binomial_crossover_mask(4, 0.0, &mut rng).iter().filter(|&&b| b).count() == 1));
    }

    #[test]
    fn population_size_is_five_d() {
        let de = De::new(DeParams::default(), 10, 1);
        assert_eq!(de.population.len(), 50);
        assert!(de.population.iter().flatten().all(|&x| (LOWER_BOUND..=UPPER_BOUND).contains(&x)));
    }

    #[test]
    fn best_never_worsens_and_stays_in_box() {
        let prob = instantiate(ProblemId::new(1, 3, 1).unwrap(), 1).unwrap();
        let mut ev = BudgetedEvaluator::new(&prob, 3_000, TargetGrid::FINAL);
        let mut de = De::new(DeParams::default(), 3, 8);
        let mut last = f64::INFINITY;
        while de.step(&mut ev).is_ok() && !de.is_finished() {
            assert!(de.best_value() <= last);
            last = de.best_value();
            assert!(de.population.iter().flatten().all(|&x| (LOWER_BOUND..=UPPER_BOUND).contains(&x)));
        }
    }

    #[test]
    fn zero_scale_keeps_best() {
        let prob = instantiate(ProblemId::new(1, 2, 1).unwrap(), 1).unwrap();
        let p = DeParams { f_min: 0.0, f_max: 0.0, ..DeParams::default() };
        let mut ev = BudgetedEvaluator::new(&prob, 500, TargetGrid::FINAL);
        let mut de = De::new(p, 2, 2);
        de.step(&mut ev).unwrap();
        let b0 = de.best_value();
        for _ in 0..5 {
            de.step(&mut ev).unwrap();
            assert!(de.best_value() <= b0);
        }
    }

    #[test]
    fn known_values_are_not_reevaluated() {
        let prob = instantiate(ProblemId::new(1, 2, 1).unwrap(), 1).unwrap();
        let pop = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let vals = vec![Some(1.0), None, None, Some(5.0)];
        let mut ev = BudgetedEvaluator::new(&prob, 100, TargetGrid::FINAL);
        let mut de = De::warm(DeParams::default(), pop, vals, 1);
        de.step(&mut ev).unwrap();
        assert_eq!(ev.evals_used(), 2);
        assert!(de.values.iter().all(Option::is_some));
    }
}
