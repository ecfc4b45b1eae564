//! Dense-matrix reference routines used by the oracle suites.
//!
//! Everything here is deliberately independent of the symbolic algebra:
//! Pauli strings are assembled with Kronecker products, exponentials and
//! logarithms go through eigen/Schur decompositions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pauli::{PauliSum, C64, DENSE_CAP};

pub type CMat = DMatrix<C64>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli_2x2(letter: char) -> CMat {
    let (o, z, i) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match letter {
        'X' => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        'Y' => CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        'Z' => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => CMat::identity(2, 2),
    }
}

/// Kronecker assembly of a label; qubit 0 is the least significant index bit.
pub fn label_matrix(label: &str) -> CMat {
    let mut m = CMat::identity(1, 1);
    for ch in label.chars() {
        m = pauli_2x2(ch).kronecker(&m);
    }
    m
}

/// Independent dense export: sum of coefficient times Kronecker product.
pub fn sum_matrix(a: &PauliSum) -> Result<CMat> {
    if a.n_qubits() > DENSE_CAP {
        return Err(Error::Resource(format!("{} qubits over dense cap", a.n_qubits())));
    }
    let dim = 1usize << a.n_qubits();
    let mut m = CMat::zeros(dim, dim);
    for (t, coef) in a.iter() {
        m += label_matrix(&t.label()) * *coef;
    }
    Ok(m)
}

/// `exp(i * theta * H)` for Hermitian `H`.
pub fn expi_hermitian(h: &CMat, theta: f64) -> CMat {
    let herm = (h + h.adjoint()) * c(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, theta * e)),
    );
    v * CMat::from_diagonal(&d) * v.adjoint()
}

/// Hermitian `Z` with `U = exp(iZ)`, principal branch, via complex Schur form.
pub fn log_unitary(u: &CMat) -> Result<CMat> {
    let schur = u.clone().schur();
    let (q, t) = schur.unpack();
    let n = t.nrows();
    let mut off = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off = off.max(t[(i, j)].norm());
            }
        }
    }
    if off > 1e-8 {
        return Err(Error::Numerical(format!("matrix not normal enough for log ({off:e})")));
    }
    let d = DVector::from_iterator(n, (0..n).map(|i| c(t[(i, i)].arg(), 0.0)));
    let z = &q * CMat::from_diagonal(&d) * q.adjoint();
    Ok((&z + z.adjoint()) * c(0.5, 0.0))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Frobenius distance scaled by `1/sqrt(dim)`, matching the normalized trace.
pub fn normalized_distance(a: &CMat, b: &CMat) -> f64 {
    frobenius(&(a - b)) / (a.nrows() as f64).sqrt()
}

/// Time-ordered propagator of `dU/dt = i H(t) U` by classical RK4.
pub fn time_ordered<F>(h: F, t0: f64, t1: f64, steps: usize) -> CMat
where
    F: Fn(f64) -> CMat,
{
    let i = c(0.0, 1.0);
    let dim = h(t0).nrows();
    let mut u = CMat::identity(dim, dim);
    let dt = (t1 - t0) / steps as f64;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let hm = h(t + 0.5 * dt);
        let k1 = h(t) * &u * i;
        let k2 = &hm * (&u + &k1 * c(0.5 * dt, 0.0)) * i;
        let k3 = &hm * (&u + &k2 * c(0.5 * dt, 0.0)) * i;
        let k4 = h(t + dt) * (&u + &k3 * c(dt, 0.0)) * i;
        u += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0);
    }
    u
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_log_roundtrip() {
        let h = label_matrix("XZ") * c(0.3, 0.0) + label_matrix("YI") * c(-0.7, 0.0);
        let u = expi_hermitian(&h, 1.0);
        let z = log_unitary(&u).unwrap();
        assert!(normalized_distance(&z, &h) < 1e-12);
    }

    #[test]
    fn rk4_matches_exponential_for_constant_h() {
        let h = label_matrix("XX") + label_matrix("ZI") * c(0.5, 0.0);
        let u = time_ordered(|_| h.clone(), 0.0, 0.7, 200);
        assert!(normalized_distance(&u, &expi_hermitian(&h, 0.7)) < 1e-10);
    }

    #[test]
    fn kron_order_matches_bits() {
        // X on qubit 0 flips the least significant bit.
        let m = label_matrix("XI");
        assert_eq!(m[(1, 0)], c(1.0, 0.0));
        assert_eq!(m[(2, 0)], c(0.0, 0.0));
    }
}
