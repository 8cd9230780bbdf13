//! Global-best particle swarm with a linearly decreasing inertia weight.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check, fitness_cmp, uniform_in_box, uniform_point, Algorithm, Optimizer};
use crate::error::Result;
use crate::problems::{LOWER_BOUND, UPPER_BOUND};
use crate::seed::{rng_from_seed, Rng};
use crate::tracing::{BudgetedEvaluator, Stop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoParams {
    pub swarm_size: usize,
    pub c1: f64,
    pub c2: f64,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub max_velocity: f64,
    /// Half-width of the initial velocity distribution.
    pub initial_velocity: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        PsoParams {
            swarm_size: 40,
            c1: 1.4944,
            c2: 1.4944,
            inertia_start: 0.9,
            inertia_end: 0.1,
            max_velocity: 5.0,
            initial_velocity: 1.0,
        }
    }
}

impl PsoParams {
    pub fn validate(&self) -> Result<()> {
        check(self.swarm_size >= 1, "pso.swarm_size must be >= 1")?;
        check(self.c1 > 0.0 && self.c1 < 2.0, "pso.c1 must be in (0, 2)")?;
        check(self.c2 > 0.0 && self.c2 < 2.0, "pso.c2 must be in (0, 2)")?;
        check(self.max_velocity > 0.0, "pso.max_velocity must be > 0")?;
        check(self.initial_velocity >= 0.0, "pso.initial_velocity must be >= 0")
    }

    /// Inertia at normalized progress `t` in `[0, 1]`.
    pub fn inertia(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        self.inertia_start - (self.inertia_start - self.inertia_end) * t
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_value: f64,
    /// Objective value at `position` if it has been evaluated.
    pub value: Option<f64>,
}

/// Velocity and position update of one particle followed by box clipping.
/// A clipped coordinate has its velocity zeroed.
#[allow(clippy::too_many_arguments)]
pub fn move_particle(
    p: &mut Particle,
    global_best: &[f64],
    omega: f64,
    c1: f64,
    c2: f64,
    v_max: f64,
    r1: &[f64],
    r2: &[f64],
) {
    for k in 0..p.position.len() {
        let v = omega * p.velocity[k]
            + c1 * r1[k] * (p.best_position[k] - p.position[k])
            + c2 * r2[k] * (global_best[k] - p.position[k]);
        let v = v.clamp(-v_max, v_max);
        let x = p.position[k] + v;
        if x > UPPER_BOUND {
            p.position[k] = UPPER_BOUND;
            p.velocity[k] = 0.0;
        } else if x < LOWER_BOUND {
            p.position[k] = LOWER_BOUND;
            p.velocity[k] = 0.0;
        } else {
            p.position[k] = x;
            p.velocity[k] = v;
        }
    }
    p.value = None;
}

#[derive(Debug, Clone)]
pub struct Pso {
    params: PsoParams,
    pub particles: Vec<Particle>,
    pub global_best: Vec<f64>,
    pub global_best_value: f64,
    rng: Rng,
}

impl Pso {
    /// Positions uniform in the box, velocities uniform in
    /// `[-initial_velocity, initial_velocity]^d`.
    pub fn new(params: PsoParams, dimension: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let v0 = params.initial_velocity;
        let swarm = (0..params.swarm_size)
            .map(|_| {
                let x = uniform_in_box(&mut rng, dimension);
                let v = if v0 > 0.0 { uniform_point(&mut rng, dimension, -v0, v0) } else { vec![0.0; dimension] };
                (x, v, None)
            })
            .collect();
        Self::warm(params, swarm, rng)
    }

    /// Builds a swarm from `(position, velocity, known value)` triples.
    pub fn from_swarm(params: PsoParams, swarm: Vec<(Vec<f64>, Vec<f64>, Option<f64>)>, seed: u64) -> Self {
        Self::warm(params, swarm, rng_from_seed(seed))
    }

    fn warm(params: PsoParams, swarm: Vec<(Vec<f64>, Vec<f64>, Option<f64>)>, rng: Rng) -> Self {
        let mut global_best = swarm.first().map(|s| s.0.clone()).unwrap_or_default();
        let mut global_best_value = f64::INFINITY;
        let particles = swarm
            .into_iter()
            .map(|(x, v, value)| {
                let best_value = value.unwrap_or(f64::INFINITY);
                if best_value < global_best_value {
                    global_best_value = best_value;
                    global_best = x.clone();
                }
                Particle { best_position: x.clone(), position: x, velocity: v, best_value, value }
            })
            .collect();
        Pso { params, particles, global_best, global_best_value, rng }
    }

    pub fn params(&self) -> &PsoParams {
        &self.params
    }

    fn evaluate_pending(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        for i in 0..self.particles.len() {
            if self.particles[i].value.is_some() {
                continue;
            }
            let v = ev.eval_and_record(&self.particles[i].position)?;
            let p = &mut self.particles[i];
            p.value = Some(v);
            if fitness_cmp(v, p.best_value).is_lt() {
                p.best_value = v;
                p.best_position = p.position.clone();
            }
            if fitness_cmp(v, self.global_best_value).is_lt() {
                self.global_best_value = v;
                self.global_best = p.position.clone();
            }
        }
        Ok(())
    }
}

impl Optimizer for Pso {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Pso
    }

    fn step(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        if self.particles.iter().any(|p| p.value.is_none()) {
            return self.evaluate_pending(ev);
        }
        let omega = self.params.inertia(ev.progress());
        let d = self.global_best.len();
        let PsoParams { c1, c2, max_velocity, .. } = self.params;
        for p in &mut self.particles {
            let r1: Vec<f64> = (0..d).map(|_| self.rng.random::<f64>()).collect();
            let r2: Vec<f64> = (0..d).map(|_| self.rng.random::<f64>()).collect();
            move_particle(p, &self.global_best, omega, c1, c2, max_velocity, &r1, &r2);
        }
        self.evaluate_pending(ev)
    }

    fn is_finished(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{instantiate, ProblemId};
    use crate::tracing::TargetGrid;

    #[test]
    fn inertia_schedule_endpoints() {
        let p = PsoParams::default();
        assert_eq!(p.inertia(0.0), 0.9);
        assert!((p.inertia(1.0) - 0.1).abs() < 1e-15);
        assert!((p.inertia(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn particle_at_global_best_is_fixed_point() {
        let x = vec![1.0, -2.0, 0.3];
        let mut p = Particle {
            position: x.clone(),
            velocity: vec![0.0; 3],
            best_position: x.clone(),
            best_value: 0.0,
            value: Some(0.0),
        };
        move_particle(&mut p, &x, 0.7, 1.4944, 1.4944, 5.0, &[0.3, 0.9, 0.1], &[0.5, 0.2, 0.8]);
        assert_eq!(p.position, x);
        assert_eq!(p.velocity, vec![0.0; 3]);
    }

    #[test]
    fn boundary_clips_and_zeroes_velocity() {
        let mut p = Particle {
            position: vec![4.5, 0.0],
            velocity: vec![3.0, 1.0],
            best_position: vec![4.5, 0.0],
            best_value: 1.0,
            value: Some(1.0),
        };
        move_particle(&mut p, &[4.5, 0.0], 1.0, 1.4944, 1.4944, 5.0, &[0.0, 0.0], &[0.0, 0.0]);
        assert_eq!(p.position, vec![5.0, 1.0]);
        assert_eq!(p.velocity, vec![0.0, 1.0]);
    }

    #[test]
    fn velocity_is_clamped() {
        let mut p = Particle {
            position: vec![-5.0],
            velocity: vec![0.0],
            best_position: vec![5.0],
            best_value: 1.0,
            value: Some(1.0),
        };
        move_particle(&mut p, &[5.0], 0.9, 1.4944, 1.4944, 5.0, &[1.0], &[1.0]);
        assert_eq!(p.velocity, vec![5.0]);
        assert_eq!(p.position, vec![0.0]);
    }

    #[test]
    fn swarm_stays_in_box_and_best_improves() {
        let prob = instantiate(ProblemId::new(1, 4, 2).unwrap(), 1).unwrap();
        let mut ev = BudgetedEvaluator::new(&prob, 4_000, TargetGrid::FINAL);
        let mut pso = Pso::new(PsoParams::default(), 4, 3);
        let mut last = f64::INFINITY;
        while pso.step(&mut ev).is_ok() {
            for p in &pso.particles {
                assert!(p.position.iter().all(|&x| (LOWER_BOUND..=UPPER_BOUND).contains(&x)));
                assert!(p.velocity.iter().all(|&v| v.abs() <= 5.0));
            }
            assert!(pso.global_best_value <= last);
            last = pso.global_best_value;
        }
        assert!(ev.best_precision() < 1e-2);
    }
}
