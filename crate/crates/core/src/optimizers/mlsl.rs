//! Multi-level single linkage: uniform sampling in levels, with Powell local
//! searches started from promising reduced-set points.

use std::collections::{HashSet, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::powell::{powell_minimize, CappedEvaluator};
use super::{check, fitness_cmp, uniform_in_box, Algorithm, Optimizer};
use crate::error::Result;
use crate::linalg::distance;
use crate::problems::{LOWER_BOUND, UPPER_BOUND};
use crate::seed::{rng_from_seed, Rng};
use crate::tracing::{BudgetedEvaluator, Stop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlslParams {
    /// Samples per level are `samples_per_dim * d`.
    pub samples_per_dim: usize,
    /// Fraction of all samples kept in the reduced set.
    pub gamma: f64,
    /// The `sigma` constant of the critical distance.
    pub sigma: f64,
    pub local_f_tol: f64,
    pub local_x_tol: f64,
    /// Cap on one local search, as a fraction of the run budget.
    pub local_budget_fraction: f64,
}

impl Default for MlslParams {
    fn default() -> Self {
        MlslParams {
            samples_per_dim: 50,
            gamma: 0.1,
            sigma: 2.0,
            local_f_tol: 1e-8,
            local_x_tol: 1e-4,
            local_budget_fraction: 0.1,
        }
    }
}

impl MlslParams {
    pub fn validate(&self) -> Result<()> {
        check(self.samples_per_dim >= 1, "mlsl.samples_per_dim must be >= 1")?;
        check(self.gamma > 0.0 && self.gamma <= 1.0, "mlsl.gamma must be in (0, 1]")?;
        check(self.sigma > 0.0, "mlsl.sigma must be > 0")?;
        check(self.local_f_tol > 0.0 && self.local_x_tol > 0.0, "mlsl local tolerances must be > 0")?;
        check(
            self.local_budget_fraction > 0.0 && self.local_budget_fraction <= 1.0,
            "mlsl.local_budget_fraction must be in (0, 1]",
        )
    }
}

/// `Gamma(1 + d/2)` for integer `d`.
fn gamma_one_plus_half(d: usize) -> f64 {
    if d % 2 == 0 {
        (1..=d / 2).map(|k| k as f64).product()
    } else {
        // Gamma(m + 1/2) with m = (d + 1) / 2
        let m = (d + 1) / 2;
        (0..m).map(|k| k as f64 + 0.5).product::<f64>() * PI.sqrt()
    }
}

/// Critical distance after `samples` uniform samples over the search box.
pub fn critical_distance(d: usize, samples: usize, sigma: f64) -> f64 {
    let n = samples.max(2) as f64;
    let volume = (UPPER_BOUND - LOWER_BOUND).powi(d as i32);
    let inner = gamma_one_plus_half(d) * volume * sigma * n.ln() / n;
    PI.powf(-0.5) * inner.powf(1.0 / d as f64)
}

/// Whether a local search may start at `x` with value `fx`: no strictly
/// better point among `known` lies within `radius`.
pub fn may_start(x: &[f64], fx: f64, known: &[(Vec<f64>, f64)], radius: f64) -> bool {
    !known.iter().any(|(y, fy)| *fy < fx && distance(x, y) <= radius)
}

/// Indices of the best `gamma` fraction of `samples` (at least one).
pub fn reduced_set(samples: &[(Vec<f64>, f64)], gamma: f64) -> Vec<usize> {
    let keep = ((gamma * samples.len() as f64).ceil() as usize).clamp(1, samples.len().max(1));
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.sort_by(|&a, &b| fitness_cmp(samples[a].1, samples[b].1).then(a.cmp(&b)));
    idx.truncate(keep.min(samples.len()));
    idx
}

#[derive(Debug, Clone)]
pub struct Mlsl {
    params: MlslParams,
    dimension: usize,
    local_cap: u64,
    /// Every uniform sample with its value.
    pub samples: Vec<(Vec<f64>, f64)>,
    /// Results of completed local searches.
    pub minima: Vec<(Vec<f64>, f64)>,
    started: HashSet<usize>,
    pending: VecDeque<usize>,
    pub level: usize,
    pub local_searches: usize,
    radius: f64,
    rng: Rng,
}

impl Mlsl {
    pub fn new(params: MlslParams, dimension: usize, budget: u64, seed: u64) -> Self {
        let local_cap = (params.local_budget_fraction * budget as f64).ceil() as u64;
        Mlsl {
            params,
            dimension,
            local_cap,
            samples: Vec::new(),
            minima: Vec::new(),
            started: HashSet::new(),
            pending: VecDeque::new(),
            level: 0,
            local_searches: 0,
            radius: f64::INFINITY,
            rng: rng_from_seed(seed),
        }
    }

    /// Like [`Mlsl::new`] with one already evaluated sample.
    pub fn seeded(params: MlslParams, dimension: usize, budget: u64, seed: u64, x: Vec<f64>, fx: f64) -> Self {
        let mut m = Self::new(params, dimension, budget, seed);
        m.samples.push((x, fx));
        m
    }

    pub fn params(&self) -> &MlslParams {
        &self.params
    }

    pub fn critical_radius(&self) -> f64 {
        self.radius
    }

    /// Best local-search result, or the best sample if none has finished.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.minima
            .iter()
            .chain(&self.samples)
            .min_by(|a, b| fitness_cmp(a.1, b.1))
            .map(|(x, f)| (x.as_slice(), *f))
    }

    /// The current reduced set followed by the local minima found.
    pub fn population(&self) -> Vec<(Vec<f64>, f64)> {
        reduced_set(&self.samples, self.params.gamma)
            .into_iter()
            .map(|i| self.samples[i].clone())
            .chain(self.minima.iter().cloned())
            .collect()
    }

    fn start_allowed(&self, i: usize) -> bool {
        let (x, fx) = &self.samples[i];
        !self.started.contains(&i)
            && may_start(x, *fx, &self.samples, self.radius)
            && may_start(x, *fx, &self.minima, self.radius)
    }

    fn sample_level(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        let n = self.params.samples_per_dim * self.dimension;
        for _ in 0..n {
            let x = uniform_in_box(&mut self.rng, self.dimension);
            let f = ev.eval_and_record(&x)?;
            self.samples.push((x, f));
        }
        self.level += 1;
        self.radius = critical_distance(self.dimension, self.samples.len(), self.params.sigma);
        self.pending = reduced_set(&self.samples, self.params.gamma).into_iter().collect();
        Ok(())
    }

    fn local_search(&mut self, i: usize, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        self.started.insert(i);
        self.local_searches += 1;
        let (x0, f0) = self.samples[i].clone();
        let cap = self.local_cap.min(ev.remaining());
        let mut capped = CappedEvaluator::new(ev, cap);
        let out = powell_minimize(&x0, Some(f0), &mut capped, self.params.local_f_tol, self.params.local_x_tol);
        self.minima.push((out.x, out.f));
        match out.stop {
            None | Some(Stop::LocalBudget) => Ok(()),
            Some(stop) => Err(stop),
        }
    }
}

impl Optimizer for Mlsl {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Mlsl
    }

    fn step(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        while let Some(i) = self.pending.pop_front() {
            if self.start_allowed(i) {
                return self.local_search(i, ev);
            }
        }
        self.sample_level(ev)
    }

    fn is_finished(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::Landscape;
    use crate::tracing::TargetGrid;

    struct Basins {
        centers: Vec<Vec<f64>>,
    }
    impl Landscape for Basins {
        fn dimension(&self) -> usize {
            self.centers[0].len()
        }
        // Unreachable optimum keeps the evaluator from stopping the run.
        fn f_opt(&self) -> f64 {
            -1.0
        }
        fn value(&self, x: &[f64]) -> f64 {
            self.centers.iter().map(|c| distance(x, c).powi(2)).fold(f64::INFINITY, f64::min)
        }
    }

    #[test]
    fn gamma_closed_forms() {
        assert!((gamma_one_plus_half(1) - PI.sqrt() / 2.0).abs() < 1e-14);
        assert_eq!(gamma_one_plus_half(2), 1.0);
        assert!((gamma_one_plus_half(3) - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert_eq!(gamma_one_plus_half(10), 120.0);
    }

    #[test]
    fn critical_distance_decreases() {
        for d in [1, 2, 5, 10, 20] {
            let r: Vec<f64> = (1..20).map(|k| critical_distance(d, k * 50 * d, 2.0)).collect();
            assert!(r.windows(2).all(|w| w[1] < w[0]), "d={d}: {r:?}");
        }
    }

    #[test]
    fn start_rule_matches_brute_force() {
        let mut rng = rng_from_seed(5);
        let pts: Vec<(Vec<f64>, f64)> = (0..200)
            .map(|_| {
                let x = uniform_in_box(&mut rng, 2);
                let f = x[0].sin() * x[1].cos() + 0.1 * x[0];
                (x, f)
            })
            .collect();
        for radius in [0.3, 1.0, 2.5] {
            for (x, fx) in &pts {
                let mut blocked = false;
                for (y, fy) in &pts {
                    let dd = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                    if fy < fx && dd <= radius {
                        blocked = true;
                    }
                }
                assert_eq!(may_start(x, *fx, &pts, radius), !blocked);
            }
        }
    }

    /// Replays the start rule on recorded samples, assuming every local
    /// search lands exactly on the planted minimum `c`.
    fn oracle_starts(samples: &[(Vec<f64>, f64)], per_level: usize, levels: usize, c: f64) -> usize {
        let mut started: Vec<usize> = Vec::new();
        let mut found = false;
        for k in 1..=levels {
            let n = k * per_level;
            let seen = &samples[..n];
            // Gamma(3/2) = sqrt(pi)/2, box length 10, sigma 2
            let r = (PI.sqrt() / 2.0 * 10.0 * 2.0 * (n as f64).ln() / n as f64) / PI.sqrt();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| seen[a].1.partial_cmp(&seen[b].1).unwrap());
            for &i in order.iter().take((n as f64 * 0.1).ceil() as usize) {
                let (x, fx) = (seen[i].0[0], seen[i].1);
                let blocked_by_sample = seen.iter().any(|(y, fy)| *fy < fx && (y[0] - x).abs() <= r);
                let blocked_by_min = found && fx > 0.0 && (c - x).abs() <= r;
                if !started.contains(&i) && !blocked_by_sample && !blocked_by_min {
                    started.push(i);
                    found = true;
                }
            }
        }
        started.len()
    }

    #[test]
    fn single_basin_start_count_matches_oracle() {
        let mut exactly_one = 0;
        for seed in 0..20 {
            let land = Basins { centers: vec![vec![0.7]] };
            let mut ev = BudgetedEvaluator::new(&land, 100_000, TargetGrid::FINAL);
            let mut m = Mlsl::new(MlslParams::default(), 1, 100_000, seed);
            // Stop before a third level would be sampled.
            while !(m.level == 2 && m.pending.iter().all(|&i| !m.start_allowed(i))) {
                m.step(&mut ev).unwrap();
            }
            assert_eq!(m.level, 2);
            assert!(m.local_searches >= 1);
            assert_eq!(m.local_searches, oracle_starts(&m.samples, 50, 2, 0.7), "seed {seed}");
            exactly_one += usize::from(m.local_searches == 1);
        }
        assert!(exactly_one >= 16, "{exactly_one}/20 runs started a single search");
    }

    #[test]
    fn two_basins_get_two_searches() {
        let land = Basins { centers: vec![vec![-3.0, -3.0], vec![3.0, 3.0]] };
        let mut ev = BudgetedEvaluator::new(&land, 20_000, TargetGrid::FINAL);
        let mut m = Mlsl::new(MlslParams::default(), 2, 20_000, 1);
        while m.local_searches < 2 && m.level < 10 {
            m.step(&mut ev).ok();
        }
        assert!(m.local_searches >= 2);
        let near = |c: [f64; 2]| m.minima.iter().any(|(x, _)| distance(x, &c) < 1e-3);
        assert!(near([-3.0, -3.0]) && near([3.0, 3.0]), "{:?}", m.minima);
    }

    #[test]
    fn reduced_set_keeps_best_fraction() {
        let s: Vec<(Vec<f64>, f64)> = (0..50).map(|i| (vec![i as f64], (50 - i) as f64)).collect();
        let r = reduced_set(&s, 0.1);
        assert_eq!(r, vec![49, 48, 47, 46, 45]);
    }
}
