//! BFGS with forward-difference gradients.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linesearch::{strong_wolfe, LineFunction, WolfeParams};
use super::{check, uniform_in_box, Algorithm, Optimizer};
use crate::error::Result;
use crate::linalg::symmetrize;
use crate::seed::rng_from_seed;
use crate::tracing::{BudgetedEvaluator, Stop};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfgsParams {
    /// Infinity-norm gradient tolerance.
    pub gtol: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub line_search_iters: usize,
    /// Iterates kept for step-length averaging.
    pub history: usize,
}

impl Default for BfgsParams {
    fn default() -> Self {
        BfgsParams { gtol: 1e-10, wolfe_c1: 1e-4, wolfe_c2: 0.9, line_search_iters: 10, history: 11 }
    }
}

impl BfgsParams {
    pub fn validate(&self) -> Result<()> {
        check(self.gtol > 0.0, "bfgs.gtol must be > 0")?;
        check(
            0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0,
            "bfgs Wolfe constants need 0 < c1 < c2 < 1",
        )?;
        check(self.line_search_iters >= 1, "bfgs.line_search_iters must be >= 1")?;
        check(self.history >= 2, "bfgs.history must be >= 2")
    }
}

#[derive(Debug, Clone)]
pub struct Bfgs {
    params: BfgsParams,
    pub x: DVector<f64>,
    f: Option<f64>,
    g: Option<DVector<f64>>,
    pub inv_hessian: DMatrix<f64>,
    /// The inverse Hessian discarded by a reset, kept until the next update.
    discarded_hessian: Option<DMatrix<f64>>,
    /// Most recent iterate first.
    pub recent_points: VecDeque<Vec<f64>>,
    old_f: Option<f64>,
    reset_pending_retry: bool,
    finished: bool,
    pub iterations: usize,
}

impl Bfgs {
    /// Cold start: `x0` uniform in `[-5, 5]^d`, identity inverse Hessian.
    pub fn new(params: BfgsParams, dimension: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let x0 = uniform_in_box(&mut rng, dimension);
        Self::warm(params, x0, None, DMatrix::identity(dimension, dimension))
    }

    /// Start from `x0` with a given inverse Hessian and optionally a known
    /// objective value at `x0`.
    pub fn warm(params: BfgsParams, x0: Vec<f64>, f0: Option<f64>, inv_hessian: DMatrix<f64>) -> Self {
        let mut recent_points = VecDeque::with_capacity(params.history);
        recent_points.push_front(x0.clone());
        Bfgs {
            params,
            x: DVector::from_vec(x0),
            f: f0,
            g: None,
            inv_hessian,
            discarded_hessian: None,
            recent_points,
            old_f: None,
            reset_pending_retry: false,
            finished: false,
            iterations: 0,
        }
    }

    pub fn params(&self) -> &BfgsParams {
        &self.params
    }

    pub fn current_value(&self) -> Option<f64> {
        self.f
    }

    /// The latest inverse Hessian that carries curvature information: the
    /// current one, or the one replaced by identity if no update has
    /// happened since the reset.
    pub fn curvature_estimate(&self) -> &DMatrix<f64> {
        self.discarded_hessian.as_ref().unwrap_or(&self.inv_hessian)
    }

    fn push_recent(&mut self, x: &DVector<f64>) {
        self.recent_points.push_front(x.as_slice().to_vec());
        self.recent_points.truncate(self.params.history);
    }

    fn on_line_search_failure(&mut self) {
        if self.reset_pending_retry {
            self.finished = true;
        } else {
            log::debug!("BFGS line search failed; resetting inverse Hessian");
            let d = self.x.len();
            let old = std::mem::replace(&mut self.inv_hessian, DMatrix::identity(d, d));
            self.discarded_hessian.get_or_insert(old);
            self.old_f = None;
            self.reset_pending_retry = true;
        }
    }

    fn update_inverse_hessian(&mut self, s: &DVector<f64>, y: &DVector<f64>) {
        let ys = y.dot(s);
        if !(ys > 0.0) || !ys.is_finite() {
            return;
        }
        let rho = 1.0 / ys;
        let d = s.len();
        let id = DMatrix::<f64>::identity(d, d);
        let a1 = &id - s * y.transpose() * rho;
        let a2 = &id - y * s.transpose() * rho;
        let mut h = a1 * &self.inv_hessian * a2 + s * s.transpose() * rho;
        symmetrize(&mut h);
        if h.iter().all(|v| v.is_finite()) {
            self.inv_hessian = h;
            self.discarded_hessian = None;
        }
    }
}

/// Forward-difference gradient at `x` given `fx = f(x)`; costs `d`
/// evaluations.
pub fn fd_gradient(ev: &mut BudgetedEvaluator<'_>, x: &DVector<f64>, fx: f64) -> std::result::Result<DVector<f64>, Stop> {
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut g = DVector::zeros(x.len());
    let mut probe = x.as_slice().to_vec();
    for i in 0..x.len() {
        let xi = x[i];
        let h_nominal = sqrt_eps * xi.abs().max(1.0);
        probe[i] = xi + h_nominal;
        let h = probe[i] - xi;
        let fi = ev.eval_and_record(&probe)?;
        g[i] = (fi - fx) / h;
        probe[i] = xi;
    }
    Ok(g)
}

struct Line<'e, 'a> {
    ev: &'e mut BudgetedEvaluator<'a>,
    x: &'e DVector<f64>,
    p: &'e DVector<f64>,
    last: Option<(f64, f64)>,
    grad: Option<(f64, DVector<f64>)>,
}

impl LineFunction for Line<'_, '_> {
    fn value(&mut self, alpha: f64) -> std::result::Result<f64, Stop> {
        let xa = self.x + self.p * alpha;
        let v = self.ev.eval_and_record(xa.as_slice())?;
        self.last = Some((alpha, v));
        Ok(v)
    }

    fn slope(&mut self, alpha: f64) -> std::result::Result<f64, Stop> {
        let fa = match self.last {
            Some((a, v)) if a == alpha => v,
            _ => self.value(alpha)?,
        };
        let xa = self.x + self.p * alpha;
        let g = fd_gradient(self.ev, &xa, fa)?;
        let slope = g.dot(self.p);
        self.grad = Some((alpha, g));
        Ok(slope)
    }
}

impl Optimizer for Bfgs {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Bfgs
    }

    fn step(&mut self, ev: &mut BudgetedEvaluator<'_>) -> std::result::Result<(), Stop> {
        if self.finished {
            return Ok(());
        }
        let f = match self.f {
            Some(f) => f,
            None => {
                let f = ev.eval_and_record(self.x.as_slice())?;
                self.f = Some(f);
                f
            }
        };
        let g = match &self.g {
            Some(g) => g.clone(),
            None => {
                let g = fd_gradient(ev, &self.x, f)?;
                self.g = Some(g.clone());
                g
            }
        };
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            self.finished = true;
            return Ok(());
        }
        if g.amax() <= self.params.gtol {
            self.finished = true;
            return Ok(());
        }

        let p = -(&self.inv_hessian * &g);
        let derphi0 = g.dot(&p);
        if !(derphi0 < 0.0) {
            self.on_line_search_failure();
            return Ok(());
        }
        let old_f = self.old_f.unwrap_or(f + g.norm() / 2.0);
        let mut alpha1 = (1.01 * 2.0 * (f - old_f) / derphi0).min(1.0);
        if !(alpha1 > 0.0) {
            alpha1 = 1.0;
        }

        let wolfe = WolfeParams {
            c1: self.params.wolfe_c1,
            c2: self.params.wolfe_c2,
            max_iter: self.params.line_search_iters,
        };
        let x = self.x.clone();
        let mut line = Line { ev, x: &x, p: &p, last: None, grad: None };
        let found = strong_wolfe(&mut line, f, derphi0, alpha1, wolfe)?;
        let grad = line.grad.take();
        match (found, grad) {
            (Some(pt), Some((ga, g_new))) if ga == pt.alpha => {
                let s = &p * pt.alpha;
                let x_new = &x + &s;
                let y = &g_new - &g;
                self.update_inverse_hessian(&s, &y);
                self.push_recent(&x_new);
                self.x = x_new;
                self.old_f = Some(f);
                self.f = Some(pt.value);
                self.g = Some(g_new);
                self.reset_pending_retry = false;
                self.iterations += 1;
            }
            _ => self.on_line_search_failure(),
        }
        Ok(())
    }

    fn is_finished(&self) -> bool {
        self.finished
    }
}
