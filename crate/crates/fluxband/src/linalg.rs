//! Dense complex helpers shared by the physics modules.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };
pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn dagger(m: &ArrayView2<C64>) -> CMat {
    m.t().mapv(|z| z.conj())
}

pub fn eye(n: usize) -> CMat {
    let mut m = CMat::zeros((n, n));
    for i in 0..n {
        m[[i, i]] = c(1.0);
    }
    m
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = CMat::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::default() {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

/// ‖M − M†‖ / max(‖M‖, tiny).
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let diff = m - &dagger(&m.view());
    frobenius(&diff) / frobenius(m).max(1e-300)
}

fn to_nalgebra(m: &CMat) -> DMatrix<C64> {
    let (r, cl) = m.dim();
    DMatrix::from_fn(r, cl, |i, j| m[[i, j]])
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending; columns are eigenvectors.
pub fn eigh(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    // symmetrize to suppress round-off asymmetry
    let herm = (m + &dagger(&m.view())).mapv(|z| z * 0.5);
    let eig = to_nalgebra(&herm).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let mut vecs = CMat::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, col]] = eig.eigenvectors[(row, k)];
        }
    }
    Ok((vals, vecs))
}

/// Eigenvalues (ascending) and eigenvectors of a real symmetric matrix.
pub fn eigh_real(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &k) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, col]] = eig.eigenvectors[(row, k)];
        }
    }
    (vals, vecs)
}

/// exp(−i H t) for Hermitian H.
pub fn expm_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    let (vals, vecs) = eigh(h)?;
    Ok(spectral_exp(&vals, &vecs, t))
}

/// V · diag(exp(−i λ t)) · V†.
pub fn spectral_exp(vals: &[f64], vecs: &CMat, t: f64) -> CMat {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let ph = C64::from_polar(1.0, -v * t);
        for i in 0..n {
            scaled[[i, j]] *= ph;
        }
    }
    scaled.dot(&dagger(&vecs.view()))
}

/// exp(G) for anti-Hermitian G.
pub fn expm_antihermitian(g: &CMat) -> Result<CMat> {
    let defect = {
        let sum = g + &dagger(&g.view());
        frobenius(&sum) / frobenius(g).max(1e-300)
    };
    if defect > 1e-10 {
        return Err(Error::NotAntiHermitian(defect));
    }
    // G = −i H with H = i G Hermitian
    let h = g.mapv(|z| z * I);
    expm_hermitian(&h, 1.0)
}

/// ‖U†U − 1‖_F.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let p = dagger(&u.view()).dot(u);
    frobenius(&(p - eye(u.nrows())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_recovers_diagonal() {
        let mut m = CMat::zeros((3, 3));
        m[[0, 0]] = c(3.0);
        m[[1, 1]] = c(-1.0);
        m[[2, 2]] = c(2.0);
        let (vals, _) = eigh(&m).unwrap();
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn expm_of_pauli_x() {
        let mut x = CMat::zeros((2, 2));
        x[[0, 1]] = c(1.0);
        x[[1, 0]] = c(1.0);
        let u = expm_hermitian(&x, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((u[[0, 1]] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(u[[0, 0]].norm() < 1e-12);
    }

    #[test]
    fn kron_dimensions() {
        let a = eye(2);
        let b = eye(3);
        assert_eq!(kron(&a, &b).dim(), (6, 6));
    }
}
