//! Powell's conjugate-direction method with Brent line minimization, used as
//! MLSL's local search.

use crate::tracing::{Evaluate, Stop};

const GOLD: f64 = 1.618034;
const GROW_LIMIT: f64 = 110.0;
const VERY_SMALL: f64 = 1e-21;
const CGOLD: f64 = 0.381_966_0;
const MIN_TOL: f64 = 1e-11;
const BRACKET_MAX_ITER: usize = 1000;
const BRENT_MAX_ITER: usize = 500;

/// Passes evaluations through to an inner evaluator until `cap` of them
/// have been spent, then reports [`Stop::LocalBudget`].
pub struct CappedEvaluator<'e> {
    inner: &'e mut dyn Evaluate,
    cap: u64,
    used: u64,
}

impl<'e> CappedEvaluator<'e> {
    pub fn new(inner: &'e mut dyn Evaluate, cap: u64) -> Self {
        CappedEvaluator { inner, cap, used: 0 }
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}

impl Evaluate for CappedEvaluator<'_> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn eval(&mut self, x: &[f64]) -> Result<f64, Stop> {
        if self.used >= self.cap {
            return Err(Stop::LocalBudget);
        }
        self.used += 1;
        self.inner.eval(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowellOutcome {
    /// Best point evaluated during the search (or `x0`).
    pub x: Vec<f64>,
    pub f: f64,
    /// Set when the search was cut short by a stop signal.
    pub stop: Option<Stop>,
}

struct Tracked<'e> {
    ev: &'e mut dyn Evaluate,
    best_x: Vec<f64>,
    best_f: f64,
}

impl Tracked<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<f64, Stop> {
        let v = self.ev.eval(x)?;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best_f {
            self.best_f = v;
            self.best_x = x.to_vec();
        }
        Ok(v)
    }

    fn along(&mut self, p: &[f64], dir: &[f64], alpha: f64) -> Result<f64, Stop> {
        let x: Vec<f64> = p.iter().zip(dir).map(|(a, b)| a + alpha * b).collect();
        self.eval(&x)
    }
}

/// Minimizes from `x0`. `f0` is the known value at `x0`, if any. Stops when
/// a full sweep improves `f` by less than `f_tol` relative, or on a stop
/// signal from `ev`.
pub fn powell_minimize(x0: &[f64], f0: Option<f64>, ev: &mut dyn Evaluate, f_tol: f64, x_tol: f64) -> PowellOutcome {
    let n = x0.len();
    let mut t = Tracked { ev, best_x: x0.to_vec(), best_f: f64::INFINITY };
    let result = (|| -> Result<(), Stop> {
        let mut fval = match f0 {
            Some(f) => {
                t.best_f = f;
                f
            }
            None => t.eval(x0)?,
        };
        let mut x = x0.to_vec();
        let mut x1 = x.clone();
        let mut direc: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let line_tol = x_tol * 100.0;
        loop {
            let fx = fval;
            let mut bigind = 0;
            let mut delta = 0.0;
            for (i, dir) in direc.iter().enumerate() {
                let fx2 = fval;
                let (alpha, fnew) = line_minimize(&mut t, &x, dir, fval, line_tol)?;
                if fnew < fval {
                    for (xk, dk) in x.iter_mut().zip(dir) {
                        *xk += alpha * dk;
                    }
                    fval = fnew;
                }
                if fx2 - fval > delta {
                    delta = fx2 - fval;
                    bigind = i;
                }
            }
            if 2.0 * (fx - fval) <= f_tol * (fx.abs() + fval.abs()) + 1e-20 {
                return Ok(());
            }
            let dnew: Vec<f64> = x.iter().zip(&x1).map(|(a, b)| a - b).collect();
            let x2: Vec<f64> = x.iter().zip(&x1).map(|(a, b)| 2.0 * a - b).collect();
            x1 = x.clone();
            let fx2 = t.eval(&x2)?;
            if fx > fx2 {
                let mut tt = 2.0 * (fx + fx2 - 2.0 * fval);
                let temp = fx - fval - delta;
                tt *= temp * temp;
                let temp = fx - fx2;
                tt -= delta * temp * temp;
                if tt < 0.0 {
                    let (alpha, fnew) = line_minimize(&mut t, &x, &dnew, fval, line_tol)?;
                    if fnew < fval {
                        for (xk, dk) in x.iter_mut().zip(&dnew) {
                            *xk += alpha * dk;
                        }
                        fval = fnew;
                    }
                    if alpha != 0.0 && dnew.iter().any(|&v| v != 0.0) {
                        direc[bigind] = direc[n - 1].clone();
                        direc[n - 1] = dnew.iter().map(|v| v * alpha).collect();
                    }
                }
            }
        }
    })();
    PowellOutcome { x: t.best_x, f: t.best_f, stop: result.err() }
}

/// Brent minimization of `alpha -> f(p + alpha * dir)` after bracketing from
/// `[0, 1]`. Returns the step and its value.
fn line_minimize(t: &mut Tracked<'_>, p: &[f64], dir: &[f64], f_at_0: f64, tol: f64) -> Result<(f64, f64), Stop> {
    let (xa, xb, xc, fb) = bracket(t, p, dir, f_at_0)?;
    brent(t, p, dir, (xa, xb, xc, fb), tol)
}

fn bracket(t: &mut Tracked<'_>, p: &[f64], dir: &[f64], f_at_0: f64) -> Result<(f64, f64, f64, f64), Stop> {
    let (mut xa, mut xb) = (0.0, 1.0);
    let mut fa = f_at_0;
    let mut fb = t.along(p, dir, xb)?;
    if fa < fb {
        std::mem::swap(&mut xa, &mut xb);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut xc = xb + GOLD * (xb - xa);
    let mut fc = t.along(p, dir, xc)?;
    let mut iter = 0;
    while fc < fb {
        let tmp1 = (xb - xa) * (fb - fc);
        let tmp2 = (xb - xc) * (fb - fa);
        let val = tmp2 - tmp1;
        let denom = if val.abs() < VERY_SMALL { 2.0 * VERY_SMALL } else { 2.0 * val };
        let mut w = xb - ((xb - xc) * tmp2 - (xb - xa) * tmp1) / denom;
        let wlim = xb + GROW_LIMIT * (xc - xb);
        iter += 1;
        if iter > BRACKET_MAX_ITER || !w.is_finite() {
            break;
        }
        let mut fw;
        if (w - xc) * (xb - w) > 0.0 {
            fw = t.along(p, dir, w)?;
            if fw < fc {
                return Ok((xb, w, xc, fw));
            } else if fw > fb {
                return Ok((xa, xb, w, fb));
            }
            w = xc + GOLD * (xc - xb);
            fw = t.along(p, dir, w)?;
        } else if (w - wlim) * (wlim - xc) >= 0.0 {
            w = wlim;
            fw = t.along(p, dir, w)?;
        } else if (w - wlim) * (xc - w) > 0.0 {
            fw = t.along(p, dir, w)?;
            if fw < fc {
                xb = xc;
                xc = w;
                w = xc + GOLD * (xc - xb);
                fb = fc;
                fc = fw;
                fw = t.along(p, dir, w)?;
            }
        } else {
            w = xc + GOLD * (xc - xb);
            fw = t.along(p, dir, w)?;
        }
        xa = xb;
        xb = xc;
        xc = w;
        fa = fb;
        fb = fc;
        fc = fw;
    }
    let _ = fa;
    Ok((xa, xb, xc, fb))
}

fn brent(
    t: &mut Tracked<'_>,
    p: &[f64],
    dir: &[f64],
    (xa, xb, xc, fb): (f64, f64, f64, f64),
    tol: f64,
) -> Result<(f64, f64), Stop> {
    let (mut x, mut w, mut v) = (xb, xb, xb);
    let (mut fx, mut fw, mut fv) = (fb, fb, fb);
    let (mut a, mut b) = if xa < xc { (xa, xc) } else { (xc, xa) };
    let mut deltax: f64 = 0.0;
    let mut rat: f64 = 0.0;
    for _ in 0..BRENT_MAX_ITER {
        let tol1 = tol * x.abs() + MIN_TOL;
        let tol2 = 2.0 * tol1;
        let xmid = 0.5 * (a + b);
        if (x - xmid).abs() < tol2 - 0.5 * (b - a) {
            break;
        }
        if deltax.abs() <= tol1 {
            deltax = if x >= xmid { a - x } else { b - x };
            rat = CGOLD * deltax;
        } else {
            let tmp1 = (x - w) * (fx - fv);
            let mut tmp2 = (x - v) * (fx - fw);
            let mut pp = (x - v) * tmp2 - (x - w) * tmp1;
            tmp2 = 2.0 * (tmp2 - tmp1);
            if tmp2 > 0.0 {
                pp = -pp;
            }
            tmp2 = tmp2.abs();
            let dx_temp = deltax;
            deltax = rat;
            if pp > tmp2 * (a - x) && pp < tmp2 * (b - x) && pp.abs() < (0.5 * tmp2 * dx_temp).abs() {
                rat = pp / tmp2;
                let u = x + rat;
                if (u - a) < tol2 || (b - u) < tol2 {
                    rat = if xmid - x >= 0.0 { tol1 } else { -tol1 };
                }
            } else {
                deltax = if x >= xmid { a - x } else { b - x };
                rat = CGOLD * deltax;
            }
        }
        let u = if rat.abs() < tol1 {
            if rat >= 0.0 {
                x + tol1
            } else {
                x - tol1
            }
        } else {
            x + rat
        };
        let fu = t.along(p, dir, u)?;
        if fu > fx {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        } else {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        }
    }
    Ok((x, fx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{instantiate, ProblemId};
    use crate::tracing::{BudgetedEvaluator, TargetGrid};

    struct FnEval<F: FnMut(&[f64]) -> f64> {
        f: F,
        d: usize,
        calls: u64,
    }
    impl<F: FnMut(&[f64]) -> f64> Evaluate for FnEval<F> {
        fn dimension(&self) -> usize {
            self.d
        }
        fn eval(&mut self, x: &[f64]) -> Result<f64, Stop> {
            self.calls += 1;
            Ok((self.f)(x))
        }
    }

    #[test]
    fn quadratic_1d_in_few_evaluations() {
        let mut e = FnEval { f: |x: &[f64]| (x[0] - 1.7).powi(2) + 3.0, d: 1, calls: 0 };
        let out = powell_minimize(&[-2.0], None, &mut e, 1e-8, 1e-4);
        assert!((out.x[0] - 1.7).abs() < 1e-6, "{:?}", out.x);
        assert!(e.calls < 50, "calls {}", e.calls);
        assert!(out.stop.is_none());
    }

    #[test]
    fn optimal_start_is_kept() {
        let mut e = FnEval { f: |x: &[f64]| x.iter().map(|v| v * v).sum(), d: 3, calls: 0 };
        let out = powell_minimize(&[0.0, 0.0, 0.0], None, &mut e, 1e-8, 1e-4);
        assert_eq!(out.x, vec![0.0, 0.0, 0.0]);
        assert_eq!(out.f, 0.0);
    }

    #[test]
    fn rotated_ellipsoid_2d_within_2000() {
        for inst in 1..=5 {
            let p = instantiate(ProblemId::new(10, 2, inst).unwrap(), 1).unwrap();
            let mut ev = BudgetedEvaluator::new(&p, 2_000, TargetGrid::FINAL);
            let out = powell_minimize(&[1.0, -1.0], None, &mut ev, 1e-8, 1e-4);
            assert!(ev.target_reached(), "instance {inst}: precision {} after {}", ev.best_precision(), ev.evals_used());
            assert_eq!(out.stop, Some(Stop::TargetHit));
        }
    }

    #[test]
    fn cap_is_enforced() {
        let mut e = FnEval { f: |x: &[f64]| x.iter().map(|v| (v - 3.0).powi(2)).sum(), d: 4, calls: 0 };
        let mut capped = CappedEvaluator::new(&mut e, 25);
        let out = powell_minimize(&[0.0; 4], None, &mut capped, 1e-8, 1e-4);
        assert_eq!(out.stop, Some(Stop::LocalBudget));
        assert_eq!(capped.used(), 25);
        assert_eq!(e.calls, 25);
        assert!(out.f < 36.0);
    }
}
