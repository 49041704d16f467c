//! Dense complex helpers shared by every layer: Hermitian spectra, operator
//! norms and seeded Gaussian sampling.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;

pub const POWER_ITERATION_CAP: usize = 10_000;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entrywise modulus of `a - b`. Shapes must agree.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// `max |a_ij - conj(a_ji)|`; zero for Hermitian matrices.
pub fn hermitian_defect(a: &CMat) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Smallest eigenvalue of the Hermitian part (`+inf` for an empty matrix).
pub fn min_eigenvalue(a: &CMat) -> f64 {
    hermitian_eigenvalues(a)
        .first()
        .copied()
        .unwrap_or(f64::INFINITY)
}

/// Index sets of the connected components of the nonzero pattern of `a`
/// (treated as an undirected graph on the row/column indices).
pub fn components(a: &CMat) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && a[(i, j)] != C64::new(0.0, 0.0) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// [`min_eigenvalue`] computed component by component.
///
/// A square matrix whose nonzero pattern splits into components is a
/// permuted direct sum of its principal submatrices on those components, so
/// the spectrum is the union of theirs. Exact, and much cheaper for the
/// sparse Choi matrices of amplification maps.
pub fn min_eigenvalue_sparse(a: &CMat) -> f64 {
    components(a)
        .par_iter()
        .map(|idx| {
            if idx.len() == 1 {
                a[(idx[0], idx[0])].re
            } else {
                let sub = CMat::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])]);
                min_eigenvalue(&sub)
            }
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Operator (spectral) norm, from the spectrum of the smaller Gram matrix.
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() <= a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    let top = hermitian_eigenvalues(&gram).last().copied().unwrap_or(0.0);
    top.max(0.0).sqrt()
}

/// Power iteration on `aᴴa` from the normalised all-ones vector.
///
/// Returns the estimate and the number of iterations used. Converges to
/// [`op_norm`] unless the start vector is orthogonal to the top singular
/// subspace; kept as an independent cross-check.
pub fn power_norm(a: &CMat, rel_tol: f64) -> (f64, usize) {
    if a.is_empty() {
        return (0.0, 0);
    }
    let n = a.ncols();
    let mut v = nalgebra::DVector::from_element(n, C64::new(1.0 / (n as f64).sqrt(), 0.0));
    let mut prev = 0.0;
    for it in 1..=POWER_ITERATION_CAP {
        let w = a.adjoint() * (a * &v);
        let lambda = w.norm();
        if lambda == 0.0 {
            return (0.0, it);
        }
        v = w / C64::new(lambda, 0.0);
        if (lambda - prev).abs() <= rel_tol * lambda {
            return (lambda.sqrt(), it);
        }
        prev = lambda;
    }
    (prev.sqrt(), POWER_ITERATION_CAP)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase correction.
pub fn random_unitary(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let g = gaussian_matrix(d, d, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

/// Block-diagonal direct sum.
pub fn direct_sum(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Frobenius inner product `Σ conj(a_ij) b_ij`.
pub fn frobenius_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}
