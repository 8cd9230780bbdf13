//! BBOB-style noiseless test functions.
//!
//! Twelve functions of the suite are implemented: F1, F2, F6, F8-F14, F21
//! and F22. Instances are produced from a suite seed: the optimum is shifted
//! uniformly into `[-4, 4]^d`, rotations come from Gram-Schmidt on seeded
//! Gaussian matrices and `f_opt` is always 0. Functions are defined on all of
//! `R^d`; no boundary penalty is added.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, Rng};

pub const FUNCTION_IDS: [u32; 12] = [1, 2, 6, 8, 9, 10, 11, 12, 13, 14, 21, 22];
pub const DIMENSIONS: [usize; 5] = [2, 3, 5, 10, 20];
pub const INSTANCES: [u32; 5] = [1, 2, 3, 4, 5];
pub const LOWER_BOUND: f64 = -5.0;
pub const UPPER_BOUND: f64 = 5.0;
pub const DEFAULT_SUITE_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProblemId {
    pub function_id: u32,
    pub dimension: usize,
    pub instance: u32,
}

impl ProblemId {
    pub fn new(function_id: u32, dimension: usize, instance: u32) -> Result<Self> {
        let id = ProblemId { function_id, dimension, instance };
        id.validate()?;
        Ok(id)
    }

    pub fn validate(&self) -> Result<()> {
        if !FUNCTION_IDS.contains(&self.function_id) {
            return Err(Error::UnknownFunction(self.function_id));
        }
        if self.dimension < 2 {
            return Err(Error::config(format!("dimension must be >= 2, got {}", self.dimension)));
        }
        if self.instance < 1 {
            return Err(Error::config("instance numbers start at 1"));
        }
        Ok(())
    }
}

impl std::fmt::Display for ProblemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "F{}/{}D/i{}", self.function_id, self.dimension, self.instance)
    }
}

/// Anything an evaluator can measure precision against.
pub trait Landscape: Sync {
    fn dimension(&self) -> usize;
    fn f_opt(&self) -> f64;
    /// Raw objective value; `x.len()` must equal `dimension()`.
    fn value(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone)]
struct Gallagher {
    /// Peak centres in the rotated frame, `R * y_i`.
    rotated_centres: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// Diagonal of `C_i` for every peak.
    scales: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub id: ProblemId,
    pub x_opt: Vec<f64>,
    pub f_opt: f64,
    pub rotation_r: DMatrix<f64>,
    pub rotation_q: DMatrix<f64>,
    /// `Q * diag(Lambda^10) * R`, used by F6 and F13.
    sector_map: DMatrix<f64>,
    gallagher: Option<Gallagher>,
}

/// Builds the instance `id` of the suite keyed by `suite_seed`.
pub fn instantiate(id: ProblemId, suite_seed: u64) -> Result<ProblemInstance> {
    id.validate()?;
    let d = id.dimension;
    let mut rng = rng_from_seed(derive_seed(&[
        suite_seed,
        id.function_id as u64,
        d as u64,
        id.instance as u64,
    ]));
    let x_opt: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..=4.0)).collect();

    let rotated = !matches!(id.function_id, 1 | 2 | 8);
    let (rotation_r, rotation_q) = if rotated {
        (random_rotation(d, &mut rng), random_rotation(d, &mut rng))
    } else {
        (DMatrix::identity(d, d), DMatrix::identity(d, d))
    };
    let lambda10 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(conditioning(10.0, d)));
    let sector_map = &rotation_q * lambda10 * &rotation_r;

    let gallagher = match id.function_id {
        21 => Some(gallagher_layout(&x_opt, &rotation_r, 101, 1000.0, 5.0, &mut rng)),
        22 => Some(gallagher_layout(&x_opt, &rotation_r, 21, 1000.0 * 1000.0, 4.9, &mut rng)),
        _ => None,
    };

    Ok(ProblemInstance { id, x_opt, f_opt: 0.0, rotation_r, rotation_q, sector_map, gallagher })
}

/// Raw objective value with a length check.
pub fn evaluate(p: &ProblemInstance, x: &[f64]) -> Result<f64> {
    if x.len() != p.id.dimension {
        return Err(Error::DimensionMismatch { expected: p.id.dimension, got: x.len() });
    }
    Ok(p.value(x))
}

/// `f_value - f_opt`, with round-off below the optimum clamped to zero.
pub fn precision(p: &dyn Landscape, f_value: f64) -> f64 {
    precision_of(f_value, p.f_opt())
}

pub(crate) fn precision_of(f_value: f64, f_opt: f64) -> f64 {
    let gap = f_value - f_opt;
    if gap.is_nan() {
        f64::INFINITY
    } else {
        gap.max(0.0)
    }
}

impl Landscape for ProblemInstance {
    fn dimension(&self) -> usize {
        self.id.dimension
    }

    fn f_opt(&self) -> f64 {
        self.f_opt
    }

    fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.id.dimension);
        let d = self.id.dimension;
        let shifted: Vec<f64> = x.iter().zip(&self.x_opt).map(|(a, b)| a - b).collect();
        let raw = match self.id.function_id {
            1 => shifted.iter().map(|z| z * z).sum(),
            2 => {
                let z: Vec<f64> = shifted.iter().map(|&v| t_osz(v)).collect();
                ellipsoid_sum(&z)
            }
            6 => {
                let z = mat_vec(&self.sector_map, &shifted);
                let s: f64 = z
                    .iter()
                    .zip(&self.x_opt)
                    .map(|(&zi, &oi)| {
                        let scale = if zi * oi > 0.0 { 100.0 } else { 1.0 };
                        (scale * zi).powi(2)
                    })
                    .sum();
                t_osz(s).powf(0.9)
            }
            8 => {
                let c = rosenbrock_scale(d);
                let z: Vec<f64> = shifted.iter().map(|v| c * v + 1.0).collect();
                rosenbrock_sum(&z)
            }
            9 => {
                let c = rosenbrock_scale(d);
                let z: Vec<f64> = mat_vec(&self.rotation_r, &shifted).iter().map(|v| c * v + 1.0).collect();
                rosenbrock_sum(&z)
            }
            10 => {
                let z: Vec<f64> = mat_vec(&self.rotation_r, &shifted).into_iter().map(t_osz).collect();
                ellipsoid_sum(&z)
            }
            11 => {
                let z: Vec<f64> = mat_vec(&self.rotation_r, &shifted).into_iter().map(t_osz).collect();
                1e6 * z[0] * z[0] + z[1..].iter().map(|v| v * v).sum::<f64>()
            }
            12 => {
                let inner = t_asy(&mat_vec(&self.rotation_r, &shifted), 0.5);
                let z = mat_vec(&self.rotation_r, &inner);
                z[0] * z[0] + 1e6 * z[1..].iter().map(|v| v * v).sum::<f64>()
            }
            13 => {
                let z = mat_vec(&self.sector_map, &shifted);
                z[0] * z[0] + 100.0 * z[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
            }
            14 => {
                let z = mat_vec(&self.rotation_r, &shifted);
                z.iter()
                    .enumerate()
                    .map(|(i, v)| v.abs().powf(2.0 + 4.0 * i as f64 / (d - 1) as f64))
                    .sum::<f64>()
                    .sqrt()
            }
            21 | 22 => self.gallagher_value(x),
            other => unreachable!("function {other} validated at construction"),
        };
        raw + self.f_opt
    }
}

impl ProblemInstance {
    fn gallagher_value(&self, x: &[f64]) -> f64 {
        let g = self.gallagher.as_ref().expect("gallagher layout present for F21/F22");
        let d = self.id.dimension as f64;
        let rx = mat_vec(&self.rotation_r, x);
        let mut best = f64::NEG_INFINITY;
        for ((centre, w), scale) in g.rotated_centres.iter().zip(&g.weights).zip(&g.scales) {
            let quad: f64 = rx
                .iter()
                .zip(centre)
                .zip(scale)
                .map(|((a, c), s)| s * (a - c) * (a - c))
                .sum();
            best = best.max(w * (-quad / (2.0 * d)).exp());
        }
        t_osz(10.0 - best).powi(2)
    }

    /// One manifest line: `function_id dimension instance f_opt x_opt...`,
    /// tab-separated with the coordinates comma-joined.
    pub fn manifest_line(&self) -> String {
        let coords: Vec<String> = self.x_opt.iter().map(|v| format!("{v:.17e}")).collect();
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.id.function_id,
            self.id.dimension,
            self.id.instance,
            self.f_opt,
            coords.join(",")
        )
    }
}

pub fn write_manifest<W: Write>(instances: &[ProblemInstance], mut out: W) -> Result<()> {
    writeln!(out, "function_id\tdimension\tinstance\tf_opt\tx_opt")?;
    for p in instances {
        writeln!(out, "{}", p.manifest_line())?;
    }
    Ok(())
}

/// Oscillation transform applied coordinate-wise.
pub fn t_osz(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let xh = x.abs().ln();
    let (c1, c2) = if x > 0.0 { (10.0, 7.9) } else { (5.5, 3.1) };
    x.signum() * (xh + 0.049 * ((c1 * xh).sin() + (c2 * xh).sin())).exp()
}

/// Asymmetry transform with exponent `beta`.
pub fn t_asy(x: &[f64], beta: f64) -> Vec<f64> {
    let d = x.len();
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                v.powf(1.0 + beta * i as f64 / (d - 1) as f64 * v.sqrt())
            } else {
                v
            }
        })
        .collect()
}

/// Diagonal of `Lambda^alpha`: `alpha^(0.5 * i / (d - 1))`.
pub fn conditioning(alpha: f64, d: usize) -> Vec<f64> {
    (0..d).map(|i| alpha.powf(0.5 * i as f64 / (d - 1) as f64)).collect()
}

fn ellipsoid_sum(z: &[f64]) -> f64 {
    let d = z.len();
    z.iter()
        .enumerate()
        .map(|(i, v)| 10f64.powf(6.0 * i as f64 / (d - 1) as f64) * v * v)
        .sum()
}

fn rosenbrock_scale(d: usize) -> f64 {
    f64::max(1.0, (d as f64).sqrt() / 8.0)
}

fn rosenbrock_sum(z: &[f64]) -> f64 {
    z.windows(2)
        .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
        .sum()
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, xj) in x.iter().enumerate() {
            acc += m[(i, j)] * xj;
        }
        *o = acc;
    }
    out
}

/// Orthonormalizes a seeded Gaussian matrix with two passes of modified
/// Gram-Schmidt over its columns.
pub fn random_rotation(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    for j in 0..d {
        for _pass in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..d).map(|i| m[(i, j)] * m[(i, k)]).sum();
                for i in 0..d {
                    m[(i, j)] -= dot * m[(i, k)];
                }
            }
        }
        let norm: f64 = (0..d).map(|i| m[(i, j)].powi(2)).sum::<f64>().sqrt();
        for i in 0..d {
            m[(i, j)] /= norm;
        }
    }
    m
}

fn gallagher_layout(
    x_opt: &[f64],
    rotation: &DMatrix<f64>,
    peaks: usize,
    alpha_global: f64,
    local_range: f64,
    rng: &mut Rng,
) -> Gallagher {
    let d = x_opt.len();
    let others = peaks - 1;
    let mut alphas: Vec<f64> = (0..others)
        .map(|j| 1000f64.powf(2.0 * j as f64 / (others - 1) as f64))
        .collect();
    alphas.shuffle(rng);

    let mut centres = vec![x_opt.to_vec()];
    let mut weights = vec![10.0];
    let mut scales = Vec::with_capacity(peaks);
    let diag_for = |alpha: f64, rng: &mut Rng| {
        let mut diag = conditioning(alpha, d);
        diag.shuffle(rng);
        let norm = alpha.powf(0.25);
        diag.iter().map(|v| v / norm).collect::<Vec<f64>>()
    };
    scales.push(diag_for(alpha_global, rng));
    for (i, &alpha) in alphas.iter().enumerate() {
        centres.push((0..d).map(|_| rng.random_range(-local_range..=local_range)).collect());
        weights.push(1.1 + 8.0 * i as f64 / (others - 1) as f64);
        scales.push(diag_for(alpha, rng));
    }
    let rotated_centres = centres.iter().map(|c| mat_vec(rotation, c)).collect();
    Gallagher { rotated_centres, weights, scales }
}
