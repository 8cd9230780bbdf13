//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix with eigenvalues floored at
/// `rel_floor * max_eig`. Returns the (possibly repaired) eigen pair and
/// whether any eigenvalue was raised.
pub fn floored_eigen(m: &DMatrix<f64>, rel_floor: f64) -> (SymmetricEigen<f64, nalgebra::Dyn>, bool) {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let mut eig = sym.symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floor = if max_eig.is_finite() && max_eig > 0.0 {
        rel_floor * max_eig
    } else {
        f64::MIN_POSITIVE
    };
    let mut repaired = false;
    for v in eig.eigenvalues.iter_mut() {
        if !(*v >= floor) {
            *v = floor;
            repaired = true;
        }
    }
    (eig, repaired)
}

pub fn recompose(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&eig.eigenvalues) * v.transpose();
    symmetrize(&mut out);
    out
}

/// Repairs `m` in place so that it is symmetric with eigenvalues at least
/// `rel_floor * max_eig`. Returns true if a repair happened.
pub fn repair_spd(m: &mut DMatrix<f64>, rel_floor: f64) -> bool {
    let (eig, repaired) = floored_eigen(m, rel_floor);
    if repaired {
        *m = recompose(&eig);
    } else {
        symmetrize(m);
    }
    repaired
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn to_dvector(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
