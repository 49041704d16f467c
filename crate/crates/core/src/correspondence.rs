//! The free correspondence `E = ℓ²_n ⊗ A` with left action
//! `φ(a) = U* diag[α_1(a), …, α_n(a)] U`, and its tensor powers.
//!
//! Coordinates: `E^k ≅ A^{n^k}` with multi-index `(i_1, …, i_k)`, `i_1` most
//! significant. A tensor `ξ ⊗ η` with `ξ ∈ E^j`, `η ∈ E^k` has components
//! `(ξ ⊗ η)_{(i, m)} = [φ_k(ξ_i) η]_m`, and `x ⊗ I_{E^k}` is `φ_k` applied to
//! every entry of `x`.

use serde::Serialize;

use crate::error::{shape_err, LabError, Result};
use crate::hilbert::{AMatrix, LinearMapTable};
use crate::linalg::{self, c, CMat, C64};
use crate::star::{AElement, AlgebraSpec, Automorphism, Direction, SampleKind, Tolerances};

/// Version tag printed next to every preset name in outputs.
pub const PRESET_VERSION: &str = "presets-v1";

pub const PRESET_NAMES: [&str; 4] = ["cuntz2", "crossed-z3", "twisted2", "rotation-m2"];

/// Seed of the unitary `V` in the `rotation-m2` preset.
pub const ROTATION_M2_SEED: u64 = 2024;

pub fn default_max_degree(n: usize) -> usize {
    match n {
        1 => 12,
        2 => 8,
        3 => 5,
        _ => 4,
    }
}

#[derive(Clone, Debug)]
pub struct CorrespondenceSpec {
    name: String,
    algebra: AlgebraSpec,
    n: usize,
    u: AMatrix,
    alphas: Vec<Automorphism>,
    max_degree: usize,
    // phi_images[k][b] = φ_k(b-th matrix unit of A), an n^k × n^k A-matrix.
    phi_images: Vec<Vec<AMatrix>>,
}

impl CorrespondenceSpec {
    pub fn new(algebra: AlgebraSpec, u: AMatrix, alphas: Vec<Automorphism>) -> Result<Self> {
        let n = alphas.len();
        Self::with_max_degree(algebra, u, alphas, default_max_degree(n.max(1)))
    }

    pub fn with_max_degree(algebra: AlgebraSpec, u: AMatrix, alphas: Vec<Automorphism>, max_degree: usize) -> Result<Self> {
        let n = alphas.len();
        if n == 0 {
            return Err(LabError::Config("fiber multiplicity n must be at least 1".into()));
        }
        if u.shape() != (n, n) || u.dims() != algebra.block_dims() {
            return Err(LabError::Config(format!("U must be an {n}x{n} matrix over the coefficient algebra")));
        }
        let mut spec = CorrespondenceSpec {
            name: "custom".into(),
            algebra,
            n,
            u,
            alphas,
            max_degree,
            phi_images: Vec::new(),
        };
        spec.build_phi_cache();
        Ok(spec)
    }

    fn build_phi_cache(&mut self) {
        let basis = self.algebra.basis();
        let level0: Vec<AMatrix> = basis.iter().map(AMatrix::from_element).collect();
        let level1: Vec<AMatrix> = basis.iter().map(|e| self.phi1_direct(e)).collect();
        self.phi_images = vec![level0, level1.clone()];
        for k in 2..=self.max_degree {
            let prev = &self.phi_images[k - 1];
            let next = prev
                .iter()
                .map(|x| self.entrywise_with(x, &level1, self.n))
                .collect();
            self.phi_images.push(next);
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u(&self) -> &AMatrix {
        &self.u
    }

    pub fn alphas(&self) -> &[Automorphism] {
        &self.alphas
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Rank of `E^k` as a free module.
    pub fn rank(&self, k: usize) -> usize {
        self.n.pow(k as u32)
    }

    /// Copy with `U` replaced, e.g. to build negative controls.
    pub fn with_u(&self, u: AMatrix) -> Result<Self> {
        Ok(Self::with_max_degree(self.algebra.clone(), u, self.alphas.clone(), self.max_degree)?.named(&self.name))
    }

    /// `α̃(a) = diag[α_1(a), …, α_n(a)]`.
    pub fn alpha_tilde(&self, a: &AElement) -> Result<AMatrix> {
        self.algebra.check(a)?;
        let entries: Vec<AElement> = self.alphas.iter().map(|al| al.forward(a)).collect();
        Ok(AMatrix::diagonal(&self.algebra, &entries))
    }

    /// `α̂([a_ij]) = [δ_ij α_i⁻¹(a_ii)]`.
    pub fn alpha_hat(&self, x: &AMatrix) -> Result<AMatrix> {
        if x.shape() != (self.n, self.n) || x.dims() != self.algebra.block_dims() {
            return Err(shape_err("alpha_hat", format!("expected {0}x{0} over A", self.n)));
        }
        let entries: Vec<AElement> = (0..self.n)
            .map(|i| self.alphas[i].apply(&x.entry(i, i), Direction::Inverse))
            .collect();
        Ok(AMatrix::diagonal(&self.algebra, &entries))
    }

    fn phi1_direct(&self, a: &AElement) -> AMatrix {
        let d = self.alpha_tilde(a).expect("basis elements match the spec");
        self.u.adjoint().mul(&d).and_then(|m| m.mul(&self.u)).expect("n×n shapes agree")
    }

    /// `φ_k(a) ∈ M_{n^k}(A)`.
    pub fn phi(&self, k: usize, a: &AElement) -> Result<AMatrix> {
        self.algebra.check(a)?;
        let images = self.phi_level(k)?;
        let coords = a.coordinates();
        let m = self.rank(k);
        let mut out = AMatrix::zeros(&self.algebra, m, m);
        for (z, img) in coords.iter().zip(images) {
            if *z != C64::new(0.0, 0.0) {
                out = out.add(&img.scale(*z))?;
            }
        }
        Ok(out)
    }

    fn phi_level(&self, k: usize) -> Result<&[AMatrix]> {
        self.phi_images
            .get(k)
            .map(|v| v.as_slice())
            .ok_or(LabError::DegreeOverflow {
                degree: k as i64,
                limit: self.max_degree as i64,
            })
    }

    /// `φ_k` as a tabulated linear map `A → M_{n^k}(A)`.
    pub fn phi_table(&self, k: usize) -> Result<LinearMapTable> {
        let m = self.rank(k);
        LinearMapTable::from_amatrix_map(&self.algebra, 1, &self.algebra, m, |x| self.phi(k, &x.entry(0, 0)))
    }

    /// Literal form of the inductive step,
    /// `φ_k = Ad(I_{n^{k-1}} ⊗ U) ∘ (I_{n^{k-1}} ⊗ α̃) ∘ φ_{k-1}` with
    /// `Ad V(x) = V* x V`. Independent of the cached tower.
    pub fn phi_by_recursion(&self, k: usize, a: &AElement) -> Result<AMatrix> {
        if k == 0 {
            return Ok(AMatrix::from_element(a));
        }
        let prev = self.phi_by_recursion(k - 1, a)?;
        let p = prev.rows();
        let mut tilde = AMatrix::zeros(&self.algebra, p * self.n, p * self.n);
        for i in 0..p {
            for j in 0..p {
                tilde.set_submatrix(i * self.n, j * self.n, &self.alpha_tilde(&prev.entry(i, j))?);
            }
        }
        let mut big_u = AMatrix::zeros(&self.algebra, p * self.n, p * self.n);
        for i in 0..p {
            big_u.set_submatrix(i * self.n, i * self.n, &self.u);
        }
        big_u.adjoint().mul(&tilde)?.mul(&big_u)
    }

    fn log_n(&self, len: usize) -> Option<usize> {
        if self.n == 1 {
            return (len == 1).then_some(0);
        }
        let mut k = 0;
        let mut p = 1;
        while p < len {
            p *= self.n;
            k += 1;
        }
        (p == len).then_some(k)
    }

    /// Degree `k` with `n^k = len`, if any. For `n = 1` only `len = 1` is
    /// accepted and reported as degree 0.
    pub fn degree_of(&self, len: usize) -> Option<usize> {
        self.log_n(len)
    }

    /// Applies `images` (one A-matrix per matrix unit of A, all `m × m`) to
    /// every entry of `x`.
    fn entrywise_with(&self, x: &AMatrix, images: &[AMatrix], m: usize) -> AMatrix {
        let dims = self.algebra.block_dims();
        let (p, q) = x.shape();
        let mut out: Vec<CMat> = dims.iter().map(|&d| CMat::zeros(p * m * d, q * m * d)).collect();
        let mut b = 0;
        for (s, &ds) in dims.iter().enumerate() {
            let xs = &x.flat_blocks()[s];
            for al in 0..ds {
                for be in 0..ds {
                    let sub = CMat::from_fn(p, q, |i, j| xs[(i * ds + al, j * ds + be)]);
                    let image = &images[b];
                    b += 1;
                    if sub.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                        continue;
                    }
                    for (t, ob) in out.iter_mut().enumerate() {
                        let f = &image.flat_blocks()[t];
                        if f.iter().all(|z| *z == C64::new(0.0, 0.0)) {
                            continue;
                        }
                        *ob += sub.kronecker(f);
                    }
                }
            }
        }
        AMatrix::from_flat_blocks(p * m, q * m, dims.to_vec(), out)
    }

    /// `x ⊗ I_{E^k}`: `φ_k` applied entrywise to an `n^r × n^s` matrix.
    pub fn amplify(&self, x: &AMatrix, k: usize) -> Result<AMatrix> {
        if x.dims() != self.algebra.block_dims() {
            return Err(LabError::SpecMismatch {
                expected: self.algebra.block_dims().to_vec(),
                found: x.dims().to_vec(),
            });
        }
        if self.n > 1 && (self.log_n(x.rows()).is_none() || self.log_n(x.cols()).is_none()) {
            return Err(shape_err("amplify", format!("shape {:?} is not a power of n = {}", x.shape(), self.n)));
        }
        if k == 0 {
            return Ok(x.clone());
        }
        let images = self.phi_level(k)?;
        Ok(self.entrywise_with(x, images, self.rank(k)))
    }

    /// Entrywise `φ_1`, i.e. the embedding `T ↦ T ⊗ 1`.
    pub fn amplify_once(&self, x: &AMatrix) -> Result<AMatrix> {
        self.amplify(x, 1)
    }

    /// `ξ ⊗ η` for `ξ ∈ E^j` (any length `n^j`) and `η ∈ E^k`.
    pub fn tensor_vec(&self, xi: &AMatrix, eta: &AMatrix, eta_degree: usize) -> Result<AMatrix> {
        if xi.cols() != 1 || eta.cols() != 1 || eta.rows() != self.rank(eta_degree) {
            return Err(shape_err("tensor_vec", format!("{:?} ⊗ {:?} (degree {eta_degree})", xi.shape(), eta.shape())));
        }
        let parts = (0..xi.rows())
            .map(|i| self.phi(eta_degree, &xi.entry(i, 0))?.mul(eta))
            .collect::<Result<Vec<_>>>()?;
        AMatrix::vstack(&parts)
    }

    /// For `n = 1`: the automorphism `β = Ad U ∘ α_1` giving the left action
    /// on `X`, so that the action on `X^k` is `β^k` for every `k ∈ ℤ`.
    pub fn bimodule_automorphism(&self) -> Result<Automorphism> {
        if self.n != 1 {
            return Err(LabError::Unsupported("two-sided structure requires n = 1".into()));
        }
        let u = Automorphism::inner(&self.algebra, &self.u.entry(0, 0))?;
        Ok(u.compose(&self.alphas[0]))
    }

    /// Entrywise `β^k` for `k ∈ ℤ` (`n = 1`): `x ⊗ I_{X^k}` on the two-sided
    /// Fock module.
    pub fn amplify_signed(&self, x: &AMatrix, k: i64) -> Result<AMatrix> {
        let beta = self.bimodule_automorphism()?.pow(k);
        let mut out = x.clone();
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                out.set_entry(i, j, &beta.forward(&x.entry(i, j)));
            }
        }
        Ok(out)
    }

    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        let mut checks = Vec::new();
        let id_n = AMatrix::identity(&self.algebra, self.n);
        let utu = self.u.adjoint().mul(&self.u).and_then(|m| m.sub(&id_n)).map(|m| m.norm());
        let uut = self.u.mul(&self.u.adjoint()).and_then(|m| m.sub(&id_n)).map(|m| m.norm());
        let udev = utu.unwrap_or(f64::INFINITY).max(uut.unwrap_or(f64::INFINITY));
        checks.push(AxiomCheck::new("U unitary", udev, tol.eq_tol));

        let alpha_dev = self.alphas.iter().map(|a| a.unitarity_defect()).fold(0.0, f64::max);
        checks.push(AxiomCheck::new("alpha_i automorphisms", alpha_dev, tol.eq_tol));

        let unit_dev = self
            .phi(1, &self.algebra.unit())
            .and_then(|p| p.sub(&id_n))
            .map(|m| m.norm())
            .unwrap_or(f64::INFINITY);
        checks.push(AxiomCheck::new("phi unital", unit_dev, tol.eq_tol));

        let basis = self.algebra.basis();
        let images: Vec<AMatrix> = basis.iter().map(|e| self.phi1_direct(e)).collect();
        let mut mult_dev = 0.0f64;
        let mut star_dev = 0.0f64;
        for (x, px) in basis.iter().zip(&images) {
            let padj = self.phi1_direct(&x.adjoint());
            star_dev = star_dev.max(padj.max_abs_diff(&px.adjoint()));
            for (y, py) in basis.iter().zip(&images) {
                let lhs = self.phi1_direct(&x.mul(y).expect("same spec"));
                let rhs = px.mul(py).expect("same shape");
                mult_dev = mult_dev.max(lhs.max_abs_diff(&rhs));
            }
        }
        checks.push(AxiomCheck::new("phi multiplicative", mult_dev, tol.eq_tol));
        checks.push(AxiomCheck::new("phi *-preserving", star_dev, tol.eq_tol));

        // Faithfulness: the flattened images of the basis are linearly
        // independent, i.e. their Gram matrix is nonsingular.
        let nb = images.len();
        let gram = CMat::from_fn(nb, nb, |i, j| images[i].frobenius_inner(&images[j]));
        let smallest = linalg::min_eigenvalue(&gram).max(0.0).sqrt();
        let faith_dev = if smallest > tol.eq_tol { 0.0 } else { 1.0 - smallest };
        checks.push(AxiomCheck::new("phi faithful", faith_dev, tol.eq_tol));

        let pass = checks.iter().all(|c| c.pass);
        ValidationReport {
            spec: self.name.clone(),
            checks,
            pass,
        }
    }

    /// Like [`validate`](Self::validate) but turns a failure into an error
    /// naming the violated axioms.
    pub fn validate_strict(&self, tol: &Tolerances) -> Result<ValidationReport> {
        let report = self.validate(tol);
        if report.pass {
            Ok(report)
        } else {
            let failed: Vec<String> = report
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{} (deviation {:.3e})", c.axiom, c.deviation))
                .collect();
            Err(LabError::Validation(failed.join(", ")))
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let spec = match name {
            "cuntz2" => {
                let a = AlgebraSpec::new(vec![1])?;
                let u = AMatrix::identity(&a, 2);
                Self::new(a.clone(), u, vec![Automorphism::identity(&a); 2])?
            }
            "crossed-z3" => {
                let a = AlgebraSpec::commutative(3)?;
                let shift = Automorphism::permutation(&a, vec![1, 2, 0])?;
                Self::new(a.clone(), AMatrix::identity(&a, 1), vec![shift])?
            }
            "twisted2" => {
                let a = AlgebraSpec::commutative(2)?;
                let (c1, s1) = ((std::f64::consts::PI / 5.0).cos(), (std::f64::consts::PI / 5.0).sin());
                let (c2, s2) = ((std::f64::consts::PI / 7.0).cos(), (std::f64::consts::PI / 7.0).sin());
                let block0 = CMat::from_row_slice(2, 2, &[c(c1, 0.0), c(-s1, 0.0), c(s1, 0.0), c(c1, 0.0)]);
                let block1 = CMat::from_row_slice(2, 2, &[c(c2, 0.0), c(0.0, s2), c(0.0, s2), c(c2, 0.0)]);
                let u = AMatrix::from_blocks(&a, 2, 2, vec![block0, block1])?;
                let swap = Automorphism::permutation(&a, vec![1, 0])?;
                Self::new(a.clone(), u, vec![Automorphism::identity(&a), swap])?
            }
            "rotation-m2" => {
                let a = AlgebraSpec::new(vec![2])?;
                let v = a.sample(SampleKind::Unitary, ROTATION_M2_SEED);
                let alpha = Automorphism::inner(&a, &v)?;
                Self::new(a.clone(), AMatrix::identity(&a, 1), vec![alpha])?
            }
            other => {
                return Err(LabError::Config(format!(
                    "unknown preset '{other}' (known: {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(spec.named(name))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub deviation: f64,
    pub pass: bool,
}

impl AxiomCheck {
    pub(crate) fn new(axiom: &str, deviation: f64, tol: f64) -> Self {
        AxiomCheck {
            axiom: axiom.to_string(),
            deviation,
            pass: deviation <= tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub spec: String,
    pub checks: Vec<AxiomCheck>,
    pub pass: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            let spec = CorrespondenceSpec::preset(name).unwrap();
            let r = spec.validate(&tol());
            assert!(r.pass, "{name}: {r:?}");
        }
        assert!(CorrespondenceSpec::preset("nope").is_err());
    }

    #[test]
    fn scaled_u_fails_with_deviation_three() {
        let spec = CorrespondenceSpec::preset("cuntz2").unwrap();
        let bad = spec.with_u(spec.u().scale(c(2.0, 0.0))).unwrap();
        let r = bad.validate(&tol());
        assert!(!r.pass);
        let u = r.checks.iter().find(|c| c.axiom == "U unitary").unwrap();
        assert!((u.deviation - 3.0).abs() < 1e-12);
        match bad.validate_strict(&tol()) {
            Err(LabError::Validation(msg)) => assert!(msg.contains("U unitary")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn alpha_hat_inverts_alpha_tilde() {
        let spec = CorrespondenceSpec::preset("twisted2").unwrap();
        let a = spec.algebra().sample(SampleKind::Element, 3);
        let round = spec.alpha_hat(&spec.alpha_tilde(&a).unwrap()).unwrap();
        let diag = AMatrix::diagonal(spec.algebra(), &[a.clone(), a.clone()]);
        assert!(round.max_abs_diff(&diag) < tol().eq_tol);

        let off = AMatrix::from_entries(
            spec.algebra(),
            2,
            2,
            &[spec.algebra().zero(), a.clone(), a.clone(), spec.algebra().zero()],
        )
        .unwrap();
        assert!(spec.alpha_hat(&off).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn phi_zero_and_one() {
        let spec = CorrespondenceSpec::preset("twisted2").unwrap();
        let a = spec.algebra().sample(SampleKind::Element, 5);
        assert!(spec.phi(0, &a).unwrap().entry(0, 0).max_abs_diff(&a) < 1e-15);
        let direct = spec.u().adjoint().mul(&spec.alpha_tilde(&a).unwrap()).unwrap().mul(spec.u()).unwrap();
        assert!(spec.phi(1, &a).unwrap().max_abs_diff(&direct) < 1e-13);
    }

    #[test]
    fn cached_tower_matches_literal_recursion() {
        for name in ["twisted2", "rotation-m2"] {
            let spec = CorrespondenceSpec::preset(name).unwrap();
            let a = spec.algebra().sample(SampleKind::Element, 6);
            for k in 0..=3 {
                let lhs = spec.phi(k, &a).unwrap();
                let rhs = spec.phi_by_recursion(k, &a).unwrap();
                assert!(lhs.max_abs_diff(&rhs) < 1e-12, "{name} k={k}");
            }
        }
    }

    #[test]
    fn degree_beyond_cache_is_an_error() {
        let spec = CorrespondenceSpec::preset("cuntz2").unwrap();
        let a = spec.algebra().unit();
        assert!(matches!(spec.phi(9, &a), Err(LabError::DegreeOverflow { .. })));
    }

    #[test]
    fn amplify_examples() {
        let spec = CorrespondenceSpec::preset("twisted2").unwrap();
        let x = AMatrix::sample(spec.algebra(), 2, 4, 1);
        assert_eq!(spec.amplify(&x, 0).unwrap(), x);
        let one = AMatrix::identity(spec.algebra(), 4);
        assert!(spec.amplify(&one, 2).unwrap().max_abs_diff(&AMatrix::identity(spec.algebra(), 16)) < 1e-12);
        let bad = AMatrix::sample(spec.algebra(), 3, 2, 1);
        assert!(matches!(spec.amplify(&bad, 1), Err(LabError::Shape { .. })));
    }

    #[test]
    fn crossed_tensor_closed_form() {
        // n = 1: a ⊗ b = α^k(a) b for b ∈ X^k.
        let spec = CorrespondenceSpec::preset("crossed-z3").unwrap();
        let alg = spec.algebra();
        let a = AMatrix::from_element(&alg.sample(SampleKind::Element, 1));
        let b = AMatrix::from_element(&alg.sample(SampleKind::Element, 2));
        let alpha = &spec.alphas()[0];
        for k in 0..4 {
            let lhs = spec.tensor_vec(&a, &b, k).unwrap();
            let rhs = AMatrix::from_element(&alpha.pow(k as i64).forward(&a.entry(0, 0))).mul(&b).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        }
    }

    #[test]
    fn signed_amplification_matches_tower() {
        let spec = CorrespondenceSpec::preset("rotation-m2").unwrap();
        let x = AMatrix::sample(spec.algebra(), 1, 1, 8);
        for k in 0..4 {
            let lhs = spec.amplify_signed(&x, k).unwrap();
            assert!(lhs.max_abs_diff(&spec.amplify(&x, k as usize).unwrap()) < 1e-12);
        }
        let back = spec.amplify_signed(&spec.amplify_signed(&x, -3).unwrap(), 3).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-12);
        assert!(CorrespondenceSpec::preset("cuntz2").unwrap().bimodule_automorphism().is_err());
    }
}
