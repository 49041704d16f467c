//! Free Hilbert A-modules and adjointable maps between them.
//!
//! An [`AMatrix`] is a `p×q` matrix over `A = ⊕ M_{d_s}`. It is stored
//! already flattened: one complex `(p·d_s)×(q·d_s)` matrix per algebra
//! block, with entry `(i, j)` of the A-matrix occupying rows
//! `i·d_s..(i+1)·d_s` and columns `j·d_s..(j+1)·d_s`. Products, adjoints,
//! norms and positivity are therefore blockwise complex linear algebra.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, LabError, Result};
use crate::linalg::{self, CMat, C64};
use crate::star::{AElement, AlgebraSpec, ArithOp, SampleKind, Tolerances};

pub const DEFAULT_CHOI_CAP: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct AMatrix {
    rows: usize,
    cols: usize,
    dims: Vec<usize>,
    blocks: Vec<CMat>,
}

impl AMatrix {
    pub fn zeros(spec: &AlgebraSpec, rows: usize, cols: usize) -> Self {
        AMatrix {
            rows,
            cols,
            dims: spec.block_dims().to_vec(),
            blocks: spec
                .block_dims()
                .iter()
                .map(|&d| CMat::zeros(rows * d, cols * d))
                .collect(),
        }
    }

    pub fn identity(spec: &AlgebraSpec, p: usize) -> Self {
        AMatrix {
            rows: p,
            cols: p,
            dims: spec.block_dims().to_vec(),
            blocks: spec.block_dims().iter().map(|&d| CMat::identity(p * d, p * d)).collect(),
        }
    }

    /// Row-major entries.
    pub fn from_entries(spec: &AlgebraSpec, rows: usize, cols: usize, entries: &[AElement]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(shape_err("from_entries", format!("{} entries for a {rows}x{cols} matrix", entries.len())));
        }
        let mut out = Self::zeros(spec, rows, cols);
        for (k, e) in entries.iter().enumerate() {
            spec.check(e)?;
            out.set_entry(k / cols, k % cols, e);
        }
        Ok(out)
    }

    /// Column vector in `A^p`.
    pub fn column(spec: &AlgebraSpec, entries: &[AElement]) -> Result<Self> {
        Self::from_entries(spec, entries.len(), 1, entries)
    }

    pub fn from_element(a: &AElement) -> Self {
        AMatrix {
            rows: 1,
            cols: 1,
            dims: a.dims(),
            blocks: a.blocks().to_vec(),
        }
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(spec: &AlgebraSpec, entries: &[AElement]) -> Self {
        let p = entries.len();
        let mut out = Self::zeros(spec, p, p);
        for (i, e) in entries.iter().enumerate() {
            out.set_entry(i, i, e);
        }
        out
    }

    pub(crate) fn from_flat_blocks(rows: usize, cols: usize, dims: Vec<usize>, blocks: Vec<CMat>) -> Self {
        debug_assert!(blocks
            .iter()
            .zip(&dims)
            .all(|(b, &d)| b.nrows() == rows * d && b.ncols() == cols * d));
        AMatrix { rows, cols, dims, blocks }
    }

    /// Rebuilds a matrix from flattened blocks, checking shapes.
    pub fn from_blocks(spec: &AlgebraSpec, rows: usize, cols: usize, blocks: Vec<CMat>) -> Result<Self> {
        let dims = spec.block_dims();
        if blocks.len() != dims.len()
            || blocks
                .iter()
                .zip(dims)
                .any(|(b, &d)| b.nrows() != rows * d || b.ncols() != cols * d)
        {
            return Err(shape_err("from_blocks", "flattened block shapes do not match"));
        }
        Ok(AMatrix { rows, cols, dims: dims.to_vec(), blocks })
    }

    pub fn sample(spec: &AlgebraSpec, rows: usize, cols: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AMatrix {
            rows,
            cols,
            dims: spec.block_dims().to_vec(),
            blocks: spec
                .block_dims()
                .iter()
                .map(|&d| linalg::gaussian_matrix(rows * d, cols * d, &mut rng))
                .collect(),
        }
    }

    /// Seeded vector in `A^p` normalised so that `‖⟨ξ, ξ⟩‖ = 1`.
    pub fn sample_unit_vector(spec: &AlgebraSpec, p: usize, seed: u64) -> Self {
        let v = Self::sample(spec, p, 1, seed);
        let n = v.norm();
        v.scale(C64::new(1.0 / n, 0.0))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn algebra(&self) -> AlgebraSpec {
        AlgebraSpec::new(self.dims.clone()).expect("dims were validated on construction")
    }

    pub fn flat_blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn into_flat_blocks(self) -> Vec<CMat> {
        self.blocks
    }

    pub fn entry(&self, i: usize, j: usize) -> AElement {
        let blocks = self
            .blocks
            .iter()
            .zip(&self.dims)
            .map(|(b, &d)| b.view((i * d, j * d), (d, d)).into_owned())
            .collect();
        AElement::from_blocks_unchecked(blocks)
    }

    pub fn set_entry(&mut self, i: usize, j: usize, a: &AElement) {
        for ((b, &d), ab) in self.blocks.iter_mut().zip(&self.dims).zip(a.blocks()) {
            b.view_mut((i * d, j * d), (d, d)).copy_from(ab);
        }
    }

    /// Sub-matrix of A-entries `[r0, r0+nr) × [c0, c0+nc)`.
    pub fn submatrix(&self, r0: usize, nr: usize, c0: usize, nc: usize) -> AMatrix {
        let blocks = self
            .blocks
            .iter()
            .zip(&self.dims)
            .map(|(b, &d)| b.view((r0 * d, c0 * d), (nr * d, nc * d)).into_owned())
            .collect();
        AMatrix {
            rows: nr,
            cols: nc,
            dims: self.dims.clone(),
            blocks,
        }
    }

    pub fn set_submatrix(&mut self, r0: usize, c0: usize, x: &AMatrix) {
        for ((b, &d), xb) in self.blocks.iter_mut().zip(&self.dims).zip(&x.blocks) {
            b.view_mut((r0 * d, c0 * d), (x.rows * d, x.cols * d)).copy_from(xb);
        }
    }

    pub fn add_submatrix(&mut self, r0: usize, c0: usize, x: &AMatrix) {
        for ((b, &d), xb) in self.blocks.iter_mut().zip(&self.dims).zip(&x.blocks) {
            let mut v = b.view_mut((r0 * d, c0 * d), (x.rows * d, x.cols * d));
            v += xb;
        }
    }

    fn check_same_algebra(&self, other: &AMatrix) -> Result<()> {
        if self.dims != other.dims {
            return Err(LabError::SpecMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &AMatrix) -> Result<AMatrix> {
        self.check_same_algebra(other)?;
        if self.shape() != other.shape() {
            return Err(shape_err("add", format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(self.zip_blocks(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &AMatrix) -> Result<AMatrix> {
        self.check_same_algebra(other)?;
        if self.shape() != other.shape() {
            return Err(shape_err("sub", format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(self.zip_blocks(other, |a, b| a - b))
    }

    pub fn mul(&self, other: &AMatrix) -> Result<AMatrix> {
        self.check_same_algebra(other)?;
        if self.cols != other.rows {
            return Err(shape_err("mul", format!("{:?} · {:?}", self.shape(), other.shape())));
        }
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a * b).collect();
        Ok(AMatrix {
            rows: self.rows,
            cols: other.cols,
            dims: self.dims.clone(),
            blocks,
        })
    }

    fn zip_blocks(&self, other: &AMatrix, f: impl Fn(&CMat, &CMat) -> CMat) -> AMatrix {
        AMatrix {
            rows: self.rows,
            cols: self.cols,
            dims: self.dims.clone(),
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect(),
        }
    }

    /// Conjugate transpose over A: entry `(i, j)` becomes `x_{ji}*`.
    pub fn adjoint(&self) -> AMatrix {
        AMatrix {
            rows: self.cols,
            cols: self.rows,
            dims: self.dims.clone(),
            blocks: self.blocks.iter().map(|b| b.adjoint()).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> AMatrix {
        AMatrix {
            rows: self.rows,
            cols: self.cols,
            dims: self.dims.clone(),
            blocks: self.blocks.iter().map(|b| b * z).collect(),
        }
    }

    /// Right multiplication of every entry by `a ∈ A` (the module action).
    pub fn right_mul(&self, a: &AElement) -> Result<AMatrix> {
        if a.dims() != self.dims {
            return Err(LabError::SpecMismatch {
                expected: self.dims.clone(),
                found: a.dims(),
            });
        }
        let p = self.cols;
        let diag = AMatrix::diagonal(&self.algebra(), &vec![a.clone(); p]);
        self.mul(&diag)
    }

    pub fn arithmetic(&self, y: &AMatrix, op: ArithOp) -> Result<AMatrix> {
        match op {
            ArithOp::Add => self.add(y),
            ArithOp::Mul => self.mul(y),
            ArithOp::Adjoint => Ok(self.adjoint()),
            ArithOp::Scale(z) => Ok(self.scale(z)),
        }
    }

    /// Block-diagonal complex matrix of `⊕_s M_{p·d_s × q·d_s}(ℂ)`.
    pub fn flatten(&self) -> CMat {
        linalg::direct_sum(&self.blocks)
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks.iter().map(linalg::min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self, tol: &Tolerances) -> bool {
        self.rows == self.cols
            && self.blocks.iter().all(|b| linalg::hermitian_defect(b) <= tol.eq_tol)
            && self.min_eigenvalue() >= -tol.psd_tol
    }

    /// Largest entrywise deviation; `+inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &AMatrix) -> f64 {
        if self.dims != other.dims || self.shape() != other.shape() {
            return f64::INFINITY;
        }
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| linalg::max_abs_diff(a, b))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    /// Frobenius inner product summed over algebra blocks.
    pub fn frobenius_inner(&self, other: &AMatrix) -> C64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| linalg::frobenius_inner(a, b))
            .sum()
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[AMatrix]) -> Result<AMatrix> {
        let first = parts.first().ok_or_else(|| shape_err("vstack", "nothing to stack"))?;
        let cols = first.cols;
        let rows: usize = parts.iter().map(|p| p.rows).sum();
        let mut out = AMatrix::zeros(&first.algebra(), rows, cols);
        let mut r0 = 0;
        for p in parts {
            first.check_same_algebra(p)?;
            if p.cols != cols {
                return Err(shape_err("vstack", "column counts differ"));
            }
            out.set_submatrix(r0, 0, p);
            r0 += p.rows;
        }
        Ok(out)
    }
}

/// `⟨ξ, η⟩ = Σ_i ξ_i* η_i` for column vectors in `A^p`.
pub fn inner(xi: &AMatrix, eta: &AMatrix) -> Result<AElement> {
    if xi.cols != 1 || eta.cols != 1 || xi.rows != eta.rows {
        return Err(shape_err("inner", format!("{:?} and {:?}", xi.shape(), eta.shape())));
    }
    let g = xi.adjoint().mul(eta)?;
    Ok(g.entry(0, 0))
}

/// Rank-one operator `e_{μ,ν}: ξ ↦ μ⟨ν, ξ⟩`, entries `μ_i ν_l*`.
pub fn rank_one(mu: &AMatrix, nu: &AMatrix) -> Result<AMatrix> {
    if mu.cols != 1 || nu.cols != 1 {
        return Err(shape_err("rank_one", "arguments must be column vectors"));
    }
    mu.mul(&nu.adjoint())
}

/// A linear map between direct sums of full matrix algebras, stored as the
/// images of the domain's matrix units.
#[derive(Clone, Debug)]
pub struct LinearMapTable {
    domain: Vec<usize>,
    codomain: Vec<usize>,
    images: Vec<Vec<CMat>>,
}

impl LinearMapTable {
    /// Tabulates `f` on every matrix unit of `⊕_s M_{domain[s]}`.
    pub fn from_fn<F>(domain: Vec<usize>, codomain: Vec<usize>, f: F) -> Result<Self>
    where
        F: Fn(&[CMat]) -> Result<Vec<CMat>> + Sync,
    {
        let mut units = Vec::new();
        for (s, &m) in domain.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    units.push((s, i, j));
                }
            }
        }
        let images = units
            .par_iter()
            .map(|&(s, i, j)| {
                let input: Vec<CMat> = domain
                    .iter()
                    .enumerate()
                    .map(|(t, &m)| {
                        let mut z = CMat::zeros(m, m);
                        if t == s {
                            z[(i, j)] = C64::new(1.0, 0.0);
                        }
                        z
                    })
                    .collect();
                let out = f(&input)?;
                if out.len() != codomain.len() || out.iter().zip(&codomain).any(|(o, &n)| o.shape() != (n, n)) {
                    return Err(shape_err("LinearMapTable::from_fn", "image has the wrong block shapes"));
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearMapTable { domain, codomain, images })
    }

    /// Tabulates a map `M_p(A) → M_q(A')` given on A-matrices.
    pub fn from_amatrix_map<F>(domain_spec: &AlgebraSpec, p: usize, codomain_spec: &AlgebraSpec, q: usize, f: F) -> Result<Self>
    where
        F: Fn(&AMatrix) -> Result<AMatrix> + Sync,
    {
        let domain: Vec<usize> = domain_spec.block_dims().iter().map(|d| d * p).collect();
        let codomain: Vec<usize> = codomain_spec.block_dims().iter().map(|d| d * q).collect();
        Self::from_fn(domain, codomain, |blocks| {
            let x = AMatrix::from_blocks(domain_spec, p, p, blocks.to_vec())?;
            let y = f(&x)?;
            if y.shape() != (q, q) || y.dims() != codomain_spec.block_dims() {
                return Err(shape_err("from_amatrix_map", "map returned the wrong shape"));
            }
            Ok(y.into_flat_blocks())
        })
    }

    pub fn identity(domain: Vec<usize>) -> Self {
        Self::from_fn(domain.clone(), domain, |x| Ok(x.to_vec())).expect("identity is shape preserving")
    }

    pub fn transpose(domain: Vec<usize>) -> Self {
        Self::from_fn(domain.clone(), domain, |x| Ok(x.iter().map(|b| b.transpose()).collect()))
            .expect("transpose is shape preserving")
    }

    pub fn domain(&self) -> &[usize] {
        &self.domain
    }

    pub fn codomain(&self) -> &[usize] {
        &self.codomain
    }

    fn offset(&self, s: usize) -> usize {
        self.domain[..s].iter().map(|m| m * m).sum()
    }

    /// Image of the matrix unit `E_{ij}` of domain block `s`.
    pub fn image(&self, s: usize, i: usize, j: usize) -> &[CMat] {
        &self.images[self.offset(s) + i * self.domain[s] + j]
    }

    pub fn apply(&self, x: &[CMat]) -> Result<Vec<CMat>> {
        if x.len() != self.domain.len() || x.iter().zip(&self.domain).any(|(b, &m)| b.shape() != (m, m)) {
            return Err(shape_err("LinearMapTable::apply", "input does not match the domain"));
        }
        let mut out: Vec<CMat> = self.codomain.iter().map(|&n| CMat::zeros(n, n)).collect();
        let mut idx = 0;
        for (s, &m) in self.domain.iter().enumerate() {
            for i in 0..m {
                for j in 0..m {
                    let z = x[s][(i, j)];
                    if z != C64::new(0.0, 0.0) {
                        for (o, img) in out.iter_mut().zip(&self.images[idx]) {
                            *o += img * z;
                        }
                    }
                    idx += 1;
                }
            }
        }
        Ok(out)
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &LinearMapTable) -> Result<LinearMapTable> {
        if self.codomain != next.domain {
            return Err(shape_err("LinearMapTable::then", "codomain/domain chain mismatch"));
        }
        let images = self
            .images
            .par_iter()
            .map(|img| next.apply(img))
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearMapTable {
            domain: self.domain.clone(),
            codomain: next.codomain.clone(),
            images,
        })
    }

    pub fn unit_image(&self) -> Vec<CMat> {
        let unit: Vec<CMat> = self.domain.iter().map(|&m| CMat::identity(m, m)).collect();
        self.apply(&unit).expect("unit matches the domain")
    }

    /// `‖Φ(1) − 1‖`, or `+inf` when the codomain is not the domain's shape
    /// class (the unit is still that of the codomain).
    pub fn unital_defect(&self) -> f64 {
        self.unit_image()
            .iter()
            .map(|b| linalg::op_norm(&(b - CMat::identity(b.nrows(), b.nrows()))))
            .fold(0.0, f64::max)
    }

    /// `‖Φ(1)‖`, which equals the cb-norm when Φ is completely positive.
    pub fn norm_bound(&self) -> f64 {
        self.unit_image().iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    /// Largest Choi side over block pairs.
    pub fn choi_side(&self) -> usize {
        let m = self.domain.iter().copied().max().unwrap_or(0);
        let n = self.codomain.iter().copied().max().unwrap_or(0);
        m * n
    }

    /// Choi matrix `Σ_{ij} E_ij ⊗ Φ(E_ij)_t` of the component from domain
    /// block `s` to codomain block `t`.
    pub fn choi_matrix(&self, s: usize, t: usize) -> CMat {
        let m = self.domain[s];
        let n = self.codomain[t];
        let mut choi = CMat::zeros(m * n, m * n);
        for i in 0..m {
            for j in 0..m {
                choi.view_mut((i * n, j * n), (n, n)).copy_from(&self.image(s, i, j)[t]);
            }
        }
        choi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpMethod {
    Choi,
    Probe,
}

/// Outcome of a complete-positivity check.
///
/// For [`CpMethod::Choi`] `min_eigenvalue` is the smallest Choi eigenvalue;
/// for [`CpMethod::Probe`] it is the worst eigenvalue seen over the probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CPReport {
    pub method: CpMethod,
    pub min_eigenvalue: f64,
    pub hermitian_defect: f64,
    pub unital_defect: f64,
    pub norm_bound: f64,
    pub pass: bool,
}

/// Exact CP test: every block-pair Choi matrix is Hermitian and PSD.
pub fn choi_cp_check(map: &LinearMapTable, cap: usize, tol: &Tolerances) -> Result<CPReport> {
    let side = map.choi_side();
    if side > cap {
        return Err(LabError::CapExceeded { side, cap });
    }
    let pairs: Vec<(usize, usize)> = (0..map.domain.len())
        .flat_map(|s| (0..map.codomain.len()).map(move |t| (s, t)))
        .collect();
    let stats: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(s, t)| {
            let choi = map.choi_matrix(s, t);
            (linalg::hermitian_defect(&choi), linalg::min_eigenvalue_sparse(&choi))
        })
        .collect();
    let herm = stats.iter().map(|s| s.0).fold(0.0, f64::max);
    let min_eig = stats.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(CPReport {
        method: CpMethod::Choi,
        min_eigenvalue: min_eig,
        hermitian_defect: herm,
        unital_defect: map.unital_defect(),
        norm_bound: map.norm_bound(),
        pass: herm <= tol.eq_tol && min_eig >= -tol.psd_tol,
    })
}

/// Necessary condition for complete positivity: applies `Φ ⊗ id_{M_k}` to
/// `trials` seeded rank-one positives and records the worst eigenvalue.
/// A clean probe does not prove complete positivity.
pub fn positivity_probe(map: &LinearMapTable, k: usize, trials: usize, seed: u64, tol: &Tolerances) -> Result<CPReport> {
    if k == 0 {
        return Err(LabError::Config("probe amplification k must be at least 1".into()));
    }
    let nblocks = map.domain.len();
    let stats: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            let s = trial % nblocks;
            let m = map.domain[s];
            let v = linalg::gaussian_matrix(k * m, 1, &mut rng);
            let x = &v * v.adjoint();
            let mut worst = f64::INFINITY;
            let mut herm = 0.0f64;
            for (t, &n) in map.codomain.iter().enumerate() {
                let mut y = CMat::zeros(k * n, k * n);
                for i in 0..m {
                    for j in 0..m {
                        let img = &map.image(s, i, j)[t];
                        for a in 0..k {
                            for b in 0..k {
                                let z = x[(a * m + i, b * m + j)];
                                let mut blk = y.view_mut((a * n, b * n), (n, n));
                                blk += img * z;
                            }
                        }
                    }
                }
                herm = herm.max(linalg::hermitian_defect(&y));
                worst = worst.min(linalg::min_eigenvalue(&y));
            }
            (herm, worst)
        })
        .collect();
    let herm = stats.iter().map(|s| s.0).fold(0.0, f64::max);
    let min_eig = stats.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Ok(CPReport {
        method: CpMethod::Probe,
        min_eigenvalue: min_eig,
        hermitian_defect: herm,
        unital_defect: map.unital_defect(),
        norm_bound: map.norm_bound(),
        pass: herm <= tol.eq_tol && min_eig >= -tol.psd_tol,
    })
}

/// Choi check when the map fits under `cap`, otherwise a `k = 2` probe.
pub fn certify_cp(map: &LinearMapTable, cap: usize, trials: usize, seed: u64, tol: &Tolerances) -> Result<CPReport> {
    match choi_cp_check(map, cap, tol) {
        Err(LabError::CapExceeded { .. }) => positivity_probe(map, 2, trials, seed, tol),
        other => other,
    }
}

/// Seeded A-matrix whose entries are drawn from `kind`.
pub fn sample_entries(spec: &AlgebraSpec, rows: usize, cols: usize, kind: SampleKind, seed: u64) -> AMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<AElement> = (0..rows * cols).map(|_| spec.sample_with(kind, &mut rng)).collect();
    AMatrix::from_entries(spec, rows, cols, &entries).expect("sampled entries match the spec")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn spec() -> AlgebraSpec {
        AlgebraSpec::new(vec![2, 1]).unwrap()
    }

    #[test]
    fn identity_is_neutral_and_adjoint_antimultiplies() {
        let a = spec();
        let x = AMatrix::sample(&a, 3, 3, 1);
        let y = AMatrix::sample(&a, 3, 2, 2);
        assert!(AMatrix::identity(&a, 3).mul(&x).unwrap().max_abs_diff(&x) < 1e-15);
        let lhs = x.mul(&y).unwrap().adjoint();
        let rhs = y.adjoint().mul(&x.adjoint()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < tol().eq_tol);
    }

    #[test]
    fn one_by_one_reduces_to_algebra() {
        let a = spec();
        let x = a.sample(SampleKind::Element, 3);
        let y = a.sample(SampleKind::Element, 4);
        let prod = AMatrix::from_element(&x).mul(&AMatrix::from_element(&y)).unwrap();
        assert!(prod.entry(0, 0).max_abs_diff(&x.mul(&y).unwrap()) < 1e-14);
    }

    #[test]
    fn entry_layout_matches_flattening() {
        let c2 = AlgebraSpec::commutative(2).unwrap();
        let e = |u: f64, v: f64| c2.diagonal(&[c(u, 0.0), c(v, 0.0)]).unwrap();
        let x = AMatrix::from_entries(&c2, 2, 2, &[e(1.0, 5.0), e(2.0, 6.0), e(3.0, 7.0), e(4.0, 8.0)]).unwrap();
        let f = x.flatten();
        assert_eq!(f.shape(), (4, 4));
        assert_eq!(f[(0, 1)], c(2.0, 0.0));
        assert_eq!(f[(3, 2)], c(7.0, 0.0));
        assert_eq!(f[(0, 2)], c(0.0, 0.0));

        let m2 = AlgebraSpec::new(vec![2]).unwrap();
        let a = m2.sample(SampleKind::Element, 8);
        assert_eq!(AMatrix::from_element(&a).flatten(), a.block(0).clone());
    }

    #[test]
    fn inner_product_examples() {
        let a = spec();
        let e1 = AMatrix::column(&a, &[a.unit(), a.zero()]).unwrap();
        assert!(inner(&e1, &e1).unwrap().max_abs_diff(&a.unit()) < 1e-15);

        let xi = AMatrix::sample(&a, 2, 1, 10);
        let eta = AMatrix::sample(&a, 2, 1, 11);
        let s = a.sample(SampleKind::Element, 12);
        let lhs = inner(&xi.right_mul(&s).unwrap(), &eta).unwrap();
        let rhs = s.adjoint().mul(&inner(&xi, &eta).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < tol().eq_tol);
        assert!(inner(&xi, &xi).unwrap().is_positive(&tol()));
    }

    #[test]
    fn rank_one_examples() {
        let a = spec();
        let e1 = AMatrix::column(&a, &[a.zero(), a.unit()]).unwrap();
        let p = rank_one(&e1, &e1).unwrap();
        assert!(p.mul(&p).unwrap().max_abs_diff(&p) < 1e-15);

        let mu = AMatrix::sample(&a, 3, 1, 20);
        let nu = AMatrix::sample(&a, 2, 1, 21);
        let xi = AMatrix::sample(&a, 2, 1, 22);
        let e = rank_one(&mu, &nu).unwrap();
        assert!(e.adjoint().max_abs_diff(&rank_one(&nu, &mu).unwrap()) < 1e-15);
        let lhs = e.mul(&xi).unwrap();
        let rhs = mu.right_mul(&inner(&nu, &xi).unwrap()).unwrap();
        assert!(lhs.max_abs_diff(&rhs) < tol().eq_tol);
    }

    #[test]
    fn choi_identity_and_transpose() {
        let id = LinearMapTable::identity(vec![2]);
        let r = choi_cp_check(&id, DEFAULT_CHOI_CAP, &tol()).unwrap();
        assert!(r.pass);
        assert!(r.min_eigenvalue.abs() < 1e-12);
        let ev = linalg::hermitian_eigenvalues(&id.choi_matrix(0, 0));
        assert_eq!(ev.iter().filter(|v| v.abs() > 1e-12).count(), 1);

        let tr = LinearMapTable::transpose(vec![2]);
        let r = choi_cp_check(&tr, DEFAULT_CHOI_CAP, &tol()).unwrap();
        assert!(!r.pass);
        assert!((r.min_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_trace_map_is_cp() {
        // M_2(M_2) → M_2, entrywise normalised trace of the outer 2×2.
        let m2 = AlgebraSpec::new(vec![2]).unwrap();
        let map = LinearMapTable::from_amatrix_map(&m2, 2, &m2, 1, |x| {
            let t = x.entry(0, 0).add(&x.entry(1, 1)).unwrap().scale(c(0.5, 0.0));
            Ok(AMatrix::from_element(&t))
        })
        .unwrap();
        let r = choi_cp_check(&map, DEFAULT_CHOI_CAP, &tol()).unwrap();
        assert!(r.pass);
        assert!(r.unital_defect < 1e-14);
    }

    #[test]
    fn cap_is_enforced() {
        let id = LinearMapTable::identity(vec![3]);
        assert!(matches!(choi_cp_check(&id, 8, &tol()), Err(LabError::CapExceeded { side: 9, cap: 8 })));
        assert_eq!(certify_cp(&id, 8, 5, 0, &tol()).unwrap().method, CpMethod::Probe);
    }

    #[test]
    fn probe_examples() {
        let id = LinearMapTable::identity(vec![2, 1]);
        for k in 1..=3 {
            assert!(positivity_probe(&id, k, 10, 7, &tol()).unwrap().pass);
        }
        let tr = LinearMapTable::transpose(vec![2]);
        assert!(positivity_probe(&tr, 1, 10, 7, &tol()).unwrap().pass);
        assert!(!positivity_probe(&tr, 2, 10, 7, &tol()).unwrap().pass);
    }

    #[test]
    fn composition_of_tables() {
        let tr = LinearMapTable::transpose(vec![2, 3]);
        let both = tr.then(&tr).unwrap();
        assert!(choi_cp_check(&both, DEFAULT_CHOI_CAP, &tol()).unwrap().pass);
    }
}
