//! Small dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Eigendecomposition of a Hermitian matrix, `h = V diag(λ) V†`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(h: &CMat) -> Self {
        let n = h.nrows();
        if n == 0 {
            return Self { values: Vec::new(), vectors: CMat::zeros(0, 0) };
        }
        if n == 1 {
            return Self { values: vec![h[(0, 0)].re], vectors: CMat::identity(1, 1) };
        }
        let eig = SymmetricEigen::new(h.clone());
        Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
    }

    /// `exp(-i h t)`.
    pub fn propagator(&self, t: f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let ph = C64::from_polar(1.0, -lam * t);
            for i in 0..n {
                scaled[(i, j)] *= ph;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    HermitianEigen::new(h).propagator(t)
}

/// `max |U†U - I|` over all entries.
pub fn unitarity_error(u: &CMat) -> f64 {
    let p = u.adjoint() * u;
    max_abs_diff(&p, &CMat::identity(u.nrows(), u.ncols()))
}

pub fn hermiticity_error(h: &CMat) -> f64 {
    max_abs_diff(h, &h.adjoint())
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// `tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Orthonormal basis for the orthogonal complement of the column span of
/// `cols` (assumed orthonormal), built by Gram-Schmidt over the standard
/// basis vectors in index order.
pub fn orthonormal_complement(cols: &[CVec], dim: usize) -> Vec<CVec> {
    let mut basis: Vec<CVec> = cols.to_vec();
    let mut out = Vec::new();
    for e in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut v = CVec::zeros(dim);
        v[e] = ONE;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&v);
                v -= b * c;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            v /= C64::from(n);
            basis.push(v.clone());
            out.push(v);
        }
    }
    out
}

/// `(e^{iθ} - 1) / (iθ)`, stable near zero.
pub fn phase_divided_difference(theta: f64) -> C64 {
    if theta.abs() < 1e-6 {
        C64::new(1.0 - theta * theta / 6.0, theta / 2.0)
    } else {
        let half = 0.5 * theta;
        C64::new(theta.sin() / theta, 2.0 * half.sin() * half.sin() / theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_pauli_x() {
        let h = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let t = 0.3_f64;
        let u = expm_hermitian(&h, t);
        assert!((u[(0, 0)] - C64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(0, 1)] - C64::new(0.0, -t.sin())).norm() < 1e-14);
        assert!(unitarity_error(&u) < 1e-14);
    }

    #[test]
    fn divided_difference_matches_direct_formula() {
        for &th in &[1e-4, 0.1, 2.0, -3.0] {
            let direct = (C64::from_polar(1.0, th) - ONE) / (I * th);
            assert!((phase_divided_difference(th) - direct).norm() < 1e-10, "{th}");
        }
        // the direct quotient cancels badly here, compare with the series
        let th = 1e-9;
        assert!((phase_divided_difference(th) - C64::new(1.0, th / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn complement_is_orthonormal() {
        let mut v = CVec::zeros(4);
        v[1] = C64::new(0.6, 0.0);
        v[2] = C64::new(0.0, 0.8);
        let comp = orthonormal_complement(std::slice::from_ref(&v), 4);
        assert_eq!(comp.len(), 3);
        for (i, a) in comp.iter().enumerate() {
            assert!(a.dotc(&v).norm() < 1e-12);
            for (j, b) in comp.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((a.dotc(b) - C64::from(expect)).norm() < 1e-12);
            }
        }
    }
}
