//! Finite-dimensional C*-algebras `A = M_{d_1}(ℂ) ⊕ … ⊕ M_{d_B}(ℂ)`.
//!
//! Elements are stored block by block. Norms, positivity and equality are
//! all tolerance based; the thresholds live in [`Tolerances`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{self, CMat, C64};

/// Numerical thresholds used by every check in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Entrywise equality.
    pub eq_tol: f64,
    /// Slack allowed below zero for a minimum eigenvalue.
    pub psd_tol: f64,
    pub norm_rel_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eq_tol: 1e-9,
            psd_tol: 1e-8,
            norm_rel_tol: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eq_tol", self.eq_tol),
            ("psd_tol", self.psd_tol),
            ("norm_rel_tol", self.norm_rel_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::Config(format!("tolerance {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Block structure of a finite-dimensional C*-algebra.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgebraSpec {
    block_dims: Vec<usize>,
}

impl AlgebraSpec {
    /// `[2]` is `M_2(ℂ)`, `[1, 1, 1]` is `ℂ³`, `[2, 3]` is `M_2 ⊕ M_3`.
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(LabError::Config("algebra needs at least one block".into()));
        }
        if let Some(bad) = block_dims.iter().find(|&&d| d == 0) {
            return Err(LabError::Config(format!("block dimension must be positive, got {bad}")));
        }
        Ok(AlgebraSpec { block_dims })
    }

    /// `ℂ^k`, the commutative algebra with `k` one-dimensional blocks.
    pub fn commutative(k: usize) -> Result<Self> {
        Self::new(vec![1; k])
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn num_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    /// Complex dimension `Σ d_s²`.
    pub fn basis_len(&self) -> usize {
        self.block_dims.iter().map(|d| d * d).sum()
    }

    pub fn unit(&self) -> AElement {
        AElement {
            blocks: self.block_dims.iter().map(|&d| CMat::identity(d, d)).collect(),
        }
    }

    pub fn zero(&self) -> AElement {
        AElement {
            blocks: self.block_dims.iter().map(|&d| CMat::zeros(d, d)).collect(),
        }
    }

    /// Matrix unit `E_{ij}` in block `s`.
    pub fn matrix_unit(&self, s: usize, i: usize, j: usize) -> AElement {
        let mut x = self.zero();
        x.blocks[s][(i, j)] = C64::new(1.0, 0.0);
        x
    }

    /// All matrix units, block-major then row-major.
    pub fn basis(&self) -> Vec<AElement> {
        let mut out = Vec::with_capacity(self.basis_len());
        for (s, &d) in self.block_dims.iter().enumerate() {
            for i in 0..d {
                for j in 0..d {
                    out.push(self.matrix_unit(s, i, j));
                }
            }
        }
        out
    }

    /// Element of `ℂ^k` from its coordinates (only for commutative specs).
    pub fn diagonal(&self, values: &[C64]) -> Result<AElement> {
        if self.block_dims.iter().any(|&d| d != 1) || values.len() != self.num_blocks() {
            return Err(LabError::Config("diagonal() needs a commutative algebra of matching size".into()));
        }
        Ok(AElement {
            blocks: values.iter().map(|&v| CMat::from_element(1, 1, v)).collect(),
        })
    }

    pub fn check(&self, x: &AElement) -> Result<()> {
        if x.dims() != self.block_dims {
            return Err(LabError::SpecMismatch {
                expected: self.block_dims.clone(),
                found: x.dims(),
            });
        }
        Ok(())
    }

    pub fn sample(&self, kind: SampleKind, seed: u64) -> AElement {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(kind, &mut rng)
    }

    pub(crate) fn sample_with(&self, kind: SampleKind, rng: &mut ChaCha8Rng) -> AElement {
        let blocks = self
            .block_dims
            .iter()
            .map(|&d| match kind {
                SampleKind::Element => linalg::gaussian_matrix(d, d, rng),
                SampleKind::Hermitian => {
                    let g = linalg::gaussian_matrix(d, d, rng);
                    (&g + g.adjoint()) * C64::new(0.5, 0.0)
                }
                SampleKind::Unitary => linalg::random_unitary(d, rng),
                SampleKind::Positive => {
                    let g = linalg::gaussian_matrix(d, d, rng);
                    g.adjoint() * g
                }
            })
            .collect();
        AElement { blocks }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Element,
    Hermitian,
    Unitary,
    Positive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArithOp {
    Add,
    Mul,
    Adjoint,
    Scale(C64),
}

/// An element of a finite-dimensional C*-algebra: one square matrix per block.
#[derive(Clone, Debug, PartialEq)]
pub struct AElement {
    blocks: Vec<CMat>,
}

impl AElement {
    pub fn from_blocks(spec: &AlgebraSpec, blocks: Vec<CMat>) -> Result<Self> {
        let x = AElement { blocks };
        spec.check(&x)?;
        for b in &x.blocks {
            if b.nrows() != b.ncols() {
                return Err(LabError::Config("algebra blocks must be square".into()));
            }
        }
        Ok(x)
    }

    pub(crate) fn from_blocks_unchecked(blocks: Vec<CMat>) -> Self {
        AElement { blocks }
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn block(&self, s: usize) -> &CMat {
        &self.blocks[s]
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.nrows()).collect()
    }

    fn same_shape(&self, other: &AElement) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(LabError::SpecMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &AElement, f: impl Fn(&CMat, &CMat) -> CMat) -> Result<AElement> {
        self.same_shape(other)?;
        Ok(AElement {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &AElement) -> Result<AElement> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &AElement) -> Result<AElement> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &AElement) -> Result<AElement> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn adjoint(&self) -> AElement {
        AElement {
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> AElement {
        AElement {
            blocks: self.blocks.iter().map(|b| b * z).collect(),
        }
    }

    /// Binary and unary operations in one entry point; `y` is ignored by the
    /// unary ones.
    pub fn arithmetic(&self, y: &AElement, op: ArithOp) -> Result<AElement> {
        match op {
            ArithOp::Add => self.add(y),
            ArithOp::Mul => self.mul(y),
            ArithOp::Adjoint => Ok(self.adjoint()),
            ArithOp::Scale(z) => Ok(self.scale(z)),
        }
    }

    /// Operator norm: the largest singular value over all blocks.
    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: &Tolerances) -> bool {
        self.blocks.iter().all(|b| linalg::hermitian_defect(b) <= tol.eq_tol)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(linalg::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self, tol: &Tolerances) -> bool {
        self.is_hermitian(tol) && self.min_eigenvalue() >= -tol.psd_tol
    }

    /// `(norm, is_positive)` in one call.
    pub fn norm_pos(&self, tol: &Tolerances) -> (f64, bool) {
        (self.norm(), self.is_positive(tol))
    }

    /// Largest entrywise deviation; `+inf` when the shapes differ.
    pub fn max_abs_diff(&self, other: &AElement) -> f64 {
        if self.dims() != other.dims() {
            return f64::INFINITY;
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| linalg::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }

    /// Coordinates in the matrix-unit basis of [`AlgebraSpec::basis`].
    pub fn coordinates(&self) -> Vec<C64> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for i in 0..b.nrows() {
                for j in 0..b.ncols() {
                    out.push(b[(i, j)]);
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Automorphism `a ↦ (V_s* a_{σ⁻¹(s)} V_s)_s` of `⊕ M_{d_s}`.
///
/// `perm[s] = σ(s)`; every automorphism of a finite-dimensional C*-algebra
/// has this form.
#[derive(Clone, Debug, PartialEq)]
pub struct Automorphism {
    perm: Vec<usize>,
    unitaries: Vec<CMat>,
}

impl Automorphism {
    pub fn new(spec: &AlgebraSpec, perm: Vec<usize>, unitaries: Vec<CMat>) -> Result<Self> {
        let b = spec.num_blocks();
        if perm.len() != b || unitaries.len() != b {
            return Err(LabError::Config(format!(
                "automorphism needs {b} permutation entries and {b} unitaries"
            )));
        }
        let mut seen = vec![false; b];
        for &p in &perm {
            if p >= b || seen[p] {
                return Err(LabError::Config(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        let dims = spec.block_dims();
        for s in 0..b {
            if dims[perm[s]] != dims[s] {
                return Err(LabError::Config(format!(
                    "permutation maps block {s} (dim {}) to block {} (dim {})",
                    dims[s], perm[s], dims[perm[s]]
                )));
            }
            if unitaries[s].shape() != (dims[s], dims[s]) {
                return Err(LabError::Config(format!("unitary {s} has wrong shape")));
            }
        }
        Ok(Automorphism { perm, unitaries })
    }

    pub fn identity(spec: &AlgebraSpec) -> Self {
        Automorphism {
            perm: (0..spec.num_blocks()).collect(),
            unitaries: spec.block_dims().iter().map(|&d| CMat::identity(d, d)).collect(),
        }
    }

    /// Pure block permutation `σ`.
    pub fn permutation(spec: &AlgebraSpec, perm: Vec<usize>) -> Result<Self> {
        let unitaries = spec.block_dims().iter().map(|&d| CMat::identity(d, d)).collect();
        Self::new(spec, perm, unitaries)
    }

    /// Inner automorphism `Ad V: a ↦ V* a V`.
    pub fn inner(spec: &AlgebraSpec, v: &AElement) -> Result<Self> {
        spec.check(v)?;
        Self::new(spec, (0..spec.num_blocks()).collect(), v.blocks().to_vec())
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn unitaries(&self) -> &[CMat] {
        &self.unitaries
    }

    fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (s, &p) in self.perm.iter().enumerate() {
            inv[p] = s;
        }
        inv
    }

    pub fn forward(&self, x: &AElement) -> AElement {
        let inv = self.inverse_perm();
        let blocks = (0..self.perm.len())
            .map(|s| {
                let v = &self.unitaries[s];
                v.adjoint() * &x.blocks[inv[s]] * v
            })
            .collect();
        AElement { blocks }
    }

    pub fn inverse(&self) -> Automorphism {
        let inv = self.inverse_perm();
        let unitaries = (0..self.perm.len())
            .map(|t| self.unitaries[self.perm[t]].adjoint())
            .collect();
        Automorphism { perm: inv, unitaries }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Automorphism) -> Automorphism {
        let inv = self.inverse_perm();
        let perm = (0..self.perm.len()).map(|s| self.perm[inner.perm[s]]).collect();
        let unitaries = (0..self.perm.len())
            .map(|s| &inner.unitaries[inv[s]] * &self.unitaries[s])
            .collect();
        Automorphism { perm, unitaries }
    }

    /// `self^k` for any integer `k`.
    pub fn pow(&self, k: i64) -> Automorphism {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut out = Automorphism {
            perm: (0..self.perm.len()).collect(),
            unitaries: self.unitaries.iter().map(|u| CMat::identity(u.nrows(), u.nrows())).collect(),
        };
        for _ in 0..k.unsigned_abs() {
            out = base.compose(&out);
        }
        out
    }

    pub fn apply(&self, x: &AElement, direction: Direction) -> AElement {
        match direction {
            Direction::Forward => self.forward(x),
            Direction::Inverse => self.inverse().forward(x),
        }
    }

    /// Worst `‖V_s*V_s − 1‖` entry over the blocks.
    pub fn unitarity_defect(&self) -> f64 {
        self.unitaries
            .iter()
            .map(|v| linalg::max_abs_diff(&(v.adjoint() * v), &CMat::identity(v.nrows(), v.nrows())))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn make_algebra_examples() {
        assert_eq!(AlgebraSpec::new(vec![2]).unwrap().total_dim(), 2);
        assert_eq!(AlgebraSpec::new(vec![1, 1, 1]).unwrap().total_dim(), 3);
        assert_eq!(AlgebraSpec::new(vec![2, 3]).unwrap().total_dim(), 5);
        assert!(matches!(AlgebraSpec::new(vec![]), Err(LabError::Config(_))));
        assert!(matches!(AlgebraSpec::new(vec![2, 0]), Err(LabError::Config(_))));
    }

    #[test]
    fn commutative_multiplication() {
        let a = AlgebraSpec::commutative(2).unwrap();
        let x = a.diagonal(&[c(1.0, 0.0), c(2.0, 0.0)]).unwrap();
        let y = a.diagonal(&[c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
        let z = x.arithmetic(&y, ArithOp::Mul).unwrap();
        assert_eq!(z, a.diagonal(&[c(3.0, 0.0), c(8.0, 0.0)]).unwrap());
    }

    #[test]
    fn adjoint_conjugates_scalars() {
        let a = AlgebraSpec::new(vec![1]).unwrap();
        let i = a.diagonal(&[c(0.0, 1.0)]).unwrap();
        assert_eq!(i.adjoint(), a.diagonal(&[c(0.0, -1.0)]).unwrap());
    }

    #[test]
    fn adjoint_is_antimultiplicative() {
        let a = AlgebraSpec::new(vec![2, 3]).unwrap();
        let x = a.sample(SampleKind::Element, 1);
        let y = a.sample(SampleKind::Element, 2);
        let lhs = x.mul(&y).unwrap().adjoint();
        let rhs = y.adjoint().mul(&x.adjoint()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < tol().eq_tol);
    }

    #[test]
    fn norm_and_positivity_examples() {
        let a = AlgebraSpec::commutative(2).unwrap();
        let x = a.diagonal(&[c(3.0, 0.0), c(-4.0, 0.0)]).unwrap();
        let (n, p) = x.norm_pos(&tol());
        assert!((n - 4.0).abs() < 1e-12);
        assert!(!p);

        let m2 = AlgebraSpec::new(vec![2]).unwrap();
        let shift = m2.matrix_unit(0, 0, 1);
        assert!((shift.norm() - 1.0).abs() < 1e-12);

        let y = m2.sample(SampleKind::Element, 9);
        assert!(y.adjoint().mul(&y).unwrap().is_positive(&tol()));
    }

    #[test]
    fn swap_and_flip_automorphisms() {
        let c2 = AlgebraSpec::commutative(2).unwrap();
        let swap = Automorphism::permutation(&c2, vec![1, 0]).unwrap();
        let x = c2.diagonal(&[c(5.0, 0.0), c(7.0, 0.0)]).unwrap();
        assert_eq!(swap.forward(&x), c2.diagonal(&[c(7.0, 0.0), c(5.0, 0.0)]).unwrap());

        let m2 = AlgebraSpec::new(vec![2]).unwrap();
        let v = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let flip = Automorphism::new(&m2, vec![0], vec![v]).unwrap();
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]);
        let x = AElement::from_blocks(&m2, vec![m]).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(4.0, 0.0), c(3.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert_eq!(flip.forward(&x).block(0), &expect);
    }

    #[test]
    fn inverse_undoes_forward_on_basis() {
        let a = AlgebraSpec::new(vec![2, 1, 2]).unwrap();
        let mut us = vec![];
        for (s, &d) in a.block_dims().iter().enumerate() {
            us.push(linalg::random_unitary(d, &mut ChaCha8Rng::seed_from_u64(s as u64)));
        }
        let alpha = Automorphism::new(&a, vec![2, 1, 0], us).unwrap();
        for e in a.basis() {
            let back = alpha.apply(&alpha.apply(&e, Direction::Forward), Direction::Inverse);
            assert!(back.max_abs_diff(&e) < tol().eq_tol);
        }
    }

    #[test]
    fn composition_and_powers() {
        let a = AlgebraSpec::new(vec![2, 2]).unwrap();
        let u0 = a.sample(SampleKind::Unitary, 3);
        let alpha = Automorphism::new(&a, vec![1, 0], u0.blocks().to_vec()).unwrap();
        let x = a.sample(SampleKind::Element, 4);
        let twice = alpha.forward(&alpha.forward(&x));
        assert!(alpha.pow(2).forward(&x).max_abs_diff(&twice) < 1e-12);
        assert!(alpha.pow(-2).forward(&twice).max_abs_diff(&x) < 1e-12);
        assert!(alpha.pow(0).forward(&x).max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn bad_automorphisms_rejected() {
        let a = AlgebraSpec::new(vec![1, 2]).unwrap();
        let us = vec![CMat::identity(1, 1), CMat::identity(2, 2)];
        assert!(Automorphism::new(&a, vec![1, 0], us.clone()).is_err());
        assert!(Automorphism::new(&a, vec![0, 0], us).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let c2 = AlgebraSpec::commutative(2).unwrap();
        let u = c2.sample(SampleKind::Unitary, 11);
        for b in u.blocks() {
            assert!((b[(0, 0)].norm() - 1.0).abs() < 1e-12);
        }
        assert_eq!(u, c2.sample(SampleKind::Unitary, 11));
        let m2 = AlgebraSpec::new(vec![2]).unwrap();
        assert!(m2.sample(SampleKind::Positive, 11).is_positive(&tol()));
        let w = m2.sample(SampleKind::Unitary, 12);
        let defect = w.adjoint().mul(&w).unwrap().sub(&m2.unit()).unwrap().norm();
        assert!(defect < tol().eq_tol);
    }
}
