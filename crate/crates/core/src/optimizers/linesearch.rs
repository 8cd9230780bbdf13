//! Strong Wolfe line search (bracketing followed by zoom with cubic and
//! quadratic interpolation).

use crate::tracing::Stop;

/// A one-dimensional restriction `phi(alpha) = f(x + alpha * p)`.
pub trait LineFunction {
    fn value(&mut self, alpha: f64) -> Result<f64, Stop>;
    /// `phi'(alpha)`. Only called right after `value` at the same `alpha`.
    fn slope(&mut self, alpha: f64) -> Result<f64, Stop>;
}

#[derive(Debug, Clone, Copy)]
pub struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_iter: usize,
}

impl Default for WolfeParams {
    fn default() -> Self {
        WolfeParams { c1: 1e-4, c2: 0.9, max_iter: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WolfePoint {
    pub alpha: f64,
    pub value: f64,
    pub slope: f64,
}

/// Returns a step satisfying the strong Wolfe conditions, `None` if the
/// search fails, or the evaluator's stop signal.
pub fn strong_wolfe<L: LineFunction>(
    fun: &mut L,
    phi0: f64,
    derphi0: f64,
    initial_alpha: f64,
    params: WolfeParams,
) -> Result<Option<WolfePoint>, Stop> {
    let WolfeParams { c1, c2, max_iter } = params;
    let mut alpha0 = 0.0;
    let mut alpha1 = initial_alpha;
    let mut phi_a0 = phi0;
    let mut derphi_a0 = derphi0;
    let mut phi_a1 = fun.value(alpha1)?;

    for i in 0..max_iter {
        if alpha1 == 0.0 || !alpha1.is_finite() {
            return Ok(None);
        }
        if phi_a1 > phi0 + c1 * alpha1 * derphi0 || (phi_a1 >= phi_a0 && i > 0) || !phi_a1.is_finite() {
            return zoom(fun, alpha0, alpha1, phi_a0, phi_a1, derphi_a0, phi0, derphi0, params);
        }
        let derphi_a1 = fun.slope(alpha1)?;
        if derphi_a1.abs() <= -c2 * derphi0 {
            return Ok(Some(WolfePoint { alpha: alpha1, value: phi_a1, slope: derphi_a1 }));
        }
        if derphi_a1 >= 0.0 {
            return zoom(fun, alpha1, alpha0, phi_a1, phi_a0, derphi_a1, phi0, derphi0, params);
        }
        let alpha2 = 2.0 * alpha1;
        alpha0 = alpha1;
        alpha1 = alpha2;
        phi_a0 = phi_a1;
        derphi_a0 = derphi_a1;
        phi_a1 = fun.value(alpha1)?;
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn zoom<L: LineFunction>(
    fun: &mut L,
    mut a_lo: f64,
    mut a_hi: f64,
    mut phi_lo: f64,
    mut phi_hi: f64,
    mut derphi_lo: f64,
    phi0: f64,
    derphi0: f64,
    params: WolfeParams,
) -> Result<Option<WolfePoint>, Stop> {
    const DELTA_CUBIC: f64 = 0.2;
    const DELTA_QUAD: f64 = 0.1;
    let mut phi_rec = phi0;
    let mut a_rec = 0.0;
    for i in 0..=params.max_iter {
        let dalpha = a_hi - a_lo;
        let (a, b) = if dalpha < 0.0 { (a_hi, a_lo) } else { (a_lo, a_hi) };
        let mut a_j = None;
        if i > 0 {
            let cchk = DELTA_CUBIC * dalpha.abs();
            a_j = cubicmin(a_lo, phi_lo, derphi_lo, a_hi, phi_hi, a_rec, phi_rec)
                .filter(|&v| v <= b - cchk && v >= a + cchk);
        }
        if a_j.is_none() {
            let qchk = DELTA_QUAD * dalpha.abs();
            a_j = quadmin(a_lo, phi_lo, derphi_lo, a_hi, phi_hi).filter(|&v| v <= b - qchk && v >= a + qchk);
        }
        let a_j = a_j.unwrap_or(a_lo + 0.5 * dalpha);
        if a_j == a_lo || a_j == a_hi {
            return Ok(None);
        }

        let phi_aj = fun.value(a_j)?;
        if phi_aj > phi0 + params.c1 * a_j * derphi0 || phi_aj >= phi_lo || !phi_aj.is_finite() {
            phi_rec = phi_hi;
            a_rec = a_hi;
            a_hi = a_j;
            phi_hi = phi_aj;
        } else {
            let derphi_aj = fun.slope(a_j)?;
            if derphi_aj.abs() <= -params.c2 * derphi0 {
                return Ok(Some(WolfePoint { alpha: a_j, value: phi_aj, slope: derphi_aj }));
            }
            if derphi_aj * (a_hi - a_lo) >= 0.0 {
                phi_rec = phi_hi;
                a_rec = a_hi;
                a_hi = a_lo;
                phi_hi = phi_lo;
            } else {
                phi_rec = phi_lo;
                a_rec = a_lo;
            }
            a_lo = a_j;
            phi_lo = phi_aj;
            derphi_lo = derphi_aj;
        }
    }
    Ok(None)
}

/// Minimizer of the cubic through `(a, fa)` with slope `fpa`, `(b, fb)` and
/// `(c, fc)`.
fn cubicmin(a: f64, fa: f64, fpa: f64, b: f64, fb: f64, c: f64, fc: f64) -> Option<f64> {
    let db = b - a;
    let dc = c - a;
    let denom = (db * dc).powi(2) * (db - dc);
    if denom == 0.0 {
        return None;
    }
    let r1 = fb - fa - fpa * db;
    let r2 = fc - fa - fpa * dc;
    let ca = (dc * dc * r1 - db * db * r2) / denom;
    let cb = (-dc * dc * dc * r1 + db * db * db * r2) / denom;
    let radical = cb * cb - 3.0 * ca * fpa;
    let xmin = a + (-cb + radical.sqrt()) / (3.0 * ca);
    xmin.is_finite().then_some(xmin)
}

fn quadmin(a: f64, fa: f64, fpa: f64, b: f64, fb: f64) -> Option<f64> {
    let db = b - a;
    let bb = (fb - fa - fpa * db) / (db * db);
    let xmin = a - fpa / (2.0 * bb);
    xmin.is_finite().then_some(xmin)
}
