//! The conditional-expectation tower `Ex_k : M_{n^k}(A) → A` and the maps it
//! induces on `E ⊗ B` and on its adjointable operators, where
//! `B = M_{n^K}(A)` is a finite level of the inductive limit.
//!
//! `Ex_1 = Ex ∘ α̂ ∘ Ad U*` with `Ad V(x) = V* x V`, so `Ad U*(x) = U x U*`.
//! Higher levels apply `Ex_1` to each `n × n` block of the innermost index
//! and recurse, matching `φ_{k+1} = φ_1 ∘ φ_k` entrywise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::correspondence::CorrespondenceSpec;
use crate::error::{shape_err, LabError, Result};
use crate::hilbert::{self, AMatrix, CPReport, LinearMapTable, DEFAULT_CHOI_CAP};
use crate::linalg::C64;
use crate::star::{AElement, Automorphism, SampleKind, Tolerances};

/// `Ex([a_ij]) = (1/n) Σ a_ii`.
pub fn ex_trace(spec: &CorrespondenceSpec, x: &AMatrix) -> Result<AElement> {
    let n = spec.n();
    if x.shape() != (n, n) || x.dims() != spec.algebra().block_dims() {
        return Err(shape_err("ex_trace", format!("expected {n}x{n} over A, got {:?}", x.shape())));
    }
    let mut acc = spec.algebra().zero();
    for i in 0..n {
        acc = acc.add(&x.entry(i, i))?;
    }
    Ok(acc.scale(C64::new(1.0 / n as f64, 0.0)))
}

/// `T ↦ T ⊗ 1` from level `k` to level `k + 1`.
pub fn embed_jk(spec: &CorrespondenceSpec, k: usize, t: &AMatrix) -> Result<AMatrix> {
    let m = spec.rank(k);
    if t.shape() != (m, m) {
        return Err(shape_err("embed_jk", format!("level {k} needs {m}x{m}, got {:?}", t.shape())));
    }
    spec.amplify_once(t)
}

fn inverse_alphas(spec: &CorrespondenceSpec) -> Vec<Automorphism> {
    spec.alphas().iter().map(Automorphism::inverse).collect()
}

/// Applies `Ex_1` to every `n × n` block of a `(p·n) × (q·n)` matrix.
fn reduce_once(spec: &CorrespondenceSpec, inv: &[Automorphism], x: &AMatrix) -> Result<AMatrix> {
    let n = spec.n();
    let (rows, cols) = x.shape();
    if rows % n != 0 || cols % n != 0 {
        return Err(shape_err("ex_k", format!("shape {:?} is not a multiple of n = {n}", x.shape())));
    }
    let (p, q) = (rows / n, cols / n);
    let alg = spec.algebra();
    if n == 1 {
        let mut out = x.clone();
        for i in 0..p {
            for j in 0..q {
                let y = spec.u().mul(&x.submatrix(i, 1, j, 1))?.mul(&spec.u().adjoint())?;
                out.set_entry(i, j, &inv[0].forward(&y.entry(0, 0)));
            }
        }
        return Ok(out);
    }
    let u = spec.u();
    let ut = u.adjoint();
    let weight = C64::new(1.0 / n as f64, 0.0);
    let entries = (0..p * q)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / q, idx % q);
            let y = u.mul(&x.submatrix(i * n, n, j * n, n))?.mul(&ut)?;
            let mut acc = alg.zero();
            for (a, al) in inv.iter().enumerate() {
                acc = acc.add(&al.forward(&y.entry(a, a)))?;
            }
            Ok(acc.scale(weight))
        })
        .collect::<Result<Vec<_>>>()?;
    AMatrix::from_entries(alg, p, q, &entries)
}

/// `Ex_K` applied to every `n^K × n^K` block entry of `x`, where `x` has
/// shape `(p·n^K) × (q·n^K)`.
pub fn ex_entrywise(spec: &CorrespondenceSpec, level: usize, x: &AMatrix) -> Result<AMatrix> {
    if x.dims() != spec.algebra().block_dims() {
        return Err(LabError::SpecMismatch {
            expected: spec.algebra().block_dims().to_vec(),
            found: x.dims().to_vec(),
        });
    }
    let inv = inverse_alphas(spec);
    let mut cur = x.clone();
    for _ in 0..level {
        cur = reduce_once(spec, &inv, &cur)?;
    }
    Ok(cur)
}

/// `Ex_k : M_{n^k}(A) → A`.
pub fn ex_k(spec: &CorrespondenceSpec, k: usize, x: &AMatrix) -> Result<AElement> {
    let m = spec.rank(k);
    if x.shape() != (m, m) {
        return Err(shape_err("ex_k", format!("level {k} needs {m}x{m}, got {:?}", x.shape())));
    }
    Ok(ex_entrywise(spec, k, x)?.entry(0, 0))
}

/// `ξ ⊗ b ↦ φ_K(ξ_i) b`: coordinates of `E^m ⊗ B` as an `(n^m·n^K) × n^K`
/// matrix over A.
pub fn tensor_with_level(spec: &CorrespondenceSpec, level: usize, xi: &AMatrix, b: &AMatrix) -> Result<AMatrix> {
    let r = spec.rank(level);
    if xi.cols() != 1 || b.shape() != (r, r) {
        return Err(shape_err("tensor_with_level", format!("{:?} ⊗ {:?} at level {level}", xi.shape(), b.shape())));
    }
    spec.amplify(xi, level)?.mul(b)
}

/// `ε̄ : E^m ⊗ B → E^m`, entrywise `Ex_K`.
pub fn eps_bar(spec: &CorrespondenceSpec, level: usize, zeta: &AMatrix) -> Result<AMatrix> {
    let r = spec.rank(level);
    if zeta.cols() != r || zeta.rows() % r != 0 {
        return Err(shape_err("eps_bar", format!("{:?} is not a column over M_{r}(A)", zeta.shape())));
    }
    ex_entrywise(spec, level, zeta)
}

/// `ε̂ : M_m(B) → M_m(A)`, entrywise `Ex_K`.
pub fn eps_hat(spec: &CorrespondenceSpec, level: usize, t: &AMatrix) -> Result<AMatrix> {
    let r = spec.rank(level);
    if t.rows() % r != 0 || t.cols() % r != 0 {
        return Err(shape_err("eps_hat", format!("{:?} is not a matrix over M_{r}(A)", t.shape())));
    }
    ex_entrywise(spec, level, t)
}

/// `ε̂` on `M_m(B)` as a tabulated map, for CP certification.
pub fn eps_hat_table(spec: &CorrespondenceSpec, level: usize, m: usize) -> Result<LinearMapTable> {
    let alg = spec.algebra();
    LinearMapTable::from_amatrix_map(alg, m * spec.rank(level), alg, m, |t| eps_hat(spec, level, t))
}

/// One finite level of the tower with its tabulated maps.
#[derive(Clone, Debug)]
pub struct ExpectationLevel {
    k: usize,
    spec: CorrespondenceSpec,
    ex_table: LinearMapTable,
    embedding: Option<LinearMapTable>,
}

impl ExpectationLevel {
    pub fn new(spec: &CorrespondenceSpec, k: usize) -> Result<Self> {
        if k > spec.max_degree() {
            return Err(LabError::DegreeOverflow {
                degree: k as i64,
                limit: spec.max_degree() as i64,
            });
        }
        let alg = spec.algebra();
        let ex_table = LinearMapTable::from_amatrix_map(alg, spec.rank(k), alg, 1, |x| {
            Ok(AMatrix::from_element(&ex_k(spec, k, x)?))
        })?;
        let embedding = if k == 0 {
            None
        } else {
            Some(LinearMapTable::from_amatrix_map(alg, spec.rank(k - 1), alg, spec.rank(k), |t| {
                embed_jk(spec, k - 1, t)
            })?)
        };
        Ok(ExpectationLevel {
            k,
            spec: spec.clone(),
            ex_table,
            embedding,
        })
    }

    pub fn level(&self) -> usize {
        self.k
    }

    pub fn spec(&self) -> &CorrespondenceSpec {
        &self.spec
    }

    /// `Ex_k` tabulated on the matrix units of `M_{n^k}(A)`.
    pub fn ex_table(&self) -> &LinearMapTable {
        &self.ex_table
    }

    /// `j_{k−1} : M_{n^{k−1}}(A) → M_{n^k}(A)`; `None` at level 0.
    pub fn embedding(&self) -> Option<&LinearMapTable> {
        self.embedding.as_ref()
    }

    pub fn apply(&self, x: &AMatrix) -> Result<AElement> {
        let out = self.ex_table.apply(x.flat_blocks())?;
        AElement::from_blocks(self.spec.algebra(), out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CondExpCheck {
    pub axiom: String,
    pub level: usize,
    pub deviation: f64,
    pub pass: bool,
    /// Where the worst deviation was seen.
    pub witness: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CondExpReport {
    pub spec: String,
    pub level: usize,
    pub checks: Vec<CondExpCheck>,
    pub cp: CPReport,
    pub pass: bool,
}

impl CondExpReport {
    pub fn check(&self, axiom: &str) -> Option<&CondExpCheck> {
        self.checks.iter().find(|c| c.axiom == axiom)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} at level {} (deviation {:.3e}, {})", c.axiom, c.level, c.deviation, c.witness))
            .collect()
    }
}

struct Worst {
    value: f64,
    witness: String,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: 0.0,
            witness: "none".into(),
        }
    }

    fn see(&mut self, value: f64, witness: impl FnOnce() -> String) {
        if !(value <= self.value) {
            self.value = value;
            self.witness = witness();
        }
    }

    fn check(self, axiom: &str, level: usize, tol: f64) -> CondExpCheck {
        CondExpCheck {
            axiom: axiom.into(),
            level,
            deviation: self.value,
            pass: self.value <= tol,
            witness: self.witness,
        }
    }
}

/// Number of seeded samples per axiom.
pub const COND_EXP_TRIALS: usize = 8;

/// Checks the conditional-expectation axioms of `Ex_K` on seeded suites.
///
/// Axiom names: `"Ex_K∘φ_K = id"`, `"bimodule"`, `"Schwarz"`, `"tower"`,
/// `"unital"`, `"contractive"`, `"CP"`.
pub fn verify_cond_exp(spec: &CorrespondenceSpec, level: usize, seed: u64, tol: &Tolerances) -> Result<CondExpReport> {
    if level + 1 > spec.max_degree() {
        return Err(LabError::DegreeOverflow {
            degree: level as i64 + 1,
            limit: spec.max_degree() as i64,
        });
    }
    let alg = spec.algebra();
    let m = spec.rank(level);
    let lvl = ExpectationLevel::new(spec, level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut idem = Worst::new();
    for (b, e) in alg.basis().iter().enumerate() {
        let d = ex_k(spec, level, &spec.phi(level, e)?)?.max_abs_diff(e);
        idem.see(d, || format!("basis element {b}"));
    }
    for t in 0..COND_EXP_TRIALS {
        let a = alg.sample_with(SampleKind::Element, &mut rng);
        let d = ex_k(spec, level, &spec.phi(level, &a)?)?.max_abs_diff(&a);
        idem.see(d, || format!("seed {seed} sample {t}"));
    }
    checks.push(idem.check("Ex_K∘φ_K = id", level, tol.eq_tol));

    let mut bimod = Worst::new();
    for t in 0..COND_EXP_TRIALS {
        let a = alg.sample_with(SampleKind::Element, &mut rng);
        let b = alg.sample_with(SampleKind::Element, &mut rng);
        let x = AMatrix::from_entries(alg, m, m, &(0..m * m).map(|_| alg.sample_with(SampleKind::Element, &mut rng)).collect::<Vec<_>>())?;
        let lhs = ex_k(spec, level, &spec.phi(level, &a)?.mul(&x)?.mul(&spec.phi(level, &b)?)?)?;
        let rhs = a.mul(&ex_k(spec, level, &x)?)?.mul(&b)?;
        bimod.see(lhs.max_abs_diff(&rhs), || format!("seed {seed} sample {t}"));
    }
    checks.push(bimod.check("bimodule", level, tol.eq_tol));

    let mut schwarz = Worst::new();
    for t in 0..COND_EXP_TRIALS {
        let x = hilbert::sample_entries(alg, m, m, SampleKind::Element, seed.wrapping_add(1000 + t as u64));
        let ex = ex_k(spec, level, &x)?;
        let gap = ex_k(spec, level, &x.adjoint().mul(&x)?)?.sub(&ex.adjoint().mul(&ex)?)?;
        schwarz.see((-gap.min_eigenvalue()).max(0.0), || format!("seed {} ", seed.wrapping_add(1000 + t as u64)));
    }
    checks.push(schwarz.check("Schwarz", level, tol.psd_tol));

    let mut tower = Worst::new();
    for t in 0..COND_EXP_TRIALS {
        let x = hilbert::sample_entries(alg, m, m, SampleKind::Element, seed.wrapping_add(2000 + t as u64));
        let up = ex_k(spec, level + 1, &embed_jk(spec, level, &x)?)?;
        tower.see(up.max_abs_diff(&ex_k(spec, level, &x)?), || {
            format!("seed {}", seed.wrapping_add(2000 + t as u64))
        });
    }
    checks.push(tower.check("tower", level, tol.eq_tol));

    let cp = hilbert::certify_cp(lvl.ex_table(), DEFAULT_CHOI_CAP, 50, seed, tol)?;
    let mut unital = Worst::new();
    unital.see(cp.unital_defect, || "Ex_K(1)".into());
    checks.push(unital.check("unital", level, tol.eq_tol));
    let mut contractive = Worst::new();
    contractive.see((cp.norm_bound - 1.0).max(0.0), || "‖Ex_K(1)‖".into());
    checks.push(contractive.check("contractive", level, 1e-8));
    let mut cpw = Worst::new();
    cpw.see((-cp.min_eigenvalue).max(0.0).max(cp.hermitian_defect), || format!("{:?} check", cp.method));
    checks.push(cpw.check("CP", level, tol.psd_tol));

    let pass = checks.iter().all(|c| c.pass) && cp.pass;
    Ok(CondExpReport {
        spec: spec.name().to_string(),
        level,
        checks,
        cp,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsReport {
    pub spec: String,
    pub level: usize,
    /// Largest `‖ε̄ζ‖ / ‖ζ‖` over the seeded vectors.
    pub contraction_max_ratio: f64,
    /// `max |⟨ξ, ε̄ζ⟩ − ε(⟨ξ⊗1, ζ⟩)|`.
    pub inner_identity_dev: f64,
    /// `max |ε̂(e_{ξ⊗b, η⊗c}) − e_{ξε(bc*), η}|`.
    pub rank_one_dev: f64,
    pub unital_defect: f64,
    pub cp: CPReport,
    pub pass: bool,
}

/// Checks the maps `ε̄` and `ε̂` at level `K` on `trials` seeded vectors.
pub fn verify_eps(spec: &CorrespondenceSpec, level: usize, trials: usize, seed: u64, cap: usize, tol: &Tolerances) -> Result<EpsReport> {
    let alg = spec.algebra();
    let r = spec.rank(level);
    let n = spec.n();
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = seed.wrapping_add(t as u64 * 4);
            let zeta = AMatrix::sample(alg, n * r, r, s);
            let ratio = eps_bar(spec, level, &zeta)?.norm() / zeta.norm();
            let xi = AMatrix::sample(alg, n, 1, s + 1);
            let lhs = xi.adjoint().mul(&eps_bar(spec, level, &zeta)?)?;
            let rhs = ex_k(spec, level, &spec.amplify(&xi, level)?.adjoint().mul(&zeta)?)?;
            let inner_dev = lhs.entry(0, 0).max_abs_diff(&rhs);

            let eta = AMatrix::sample(alg, n, 1, s + 2);
            let b = AMatrix::sample(alg, r, r, s + 3);
            let c = AMatrix::sample(alg, r, r, s + 4);
            let x = tensor_with_level(spec, level, &xi, &b)?;
            let y = tensor_with_level(spec, level, &eta, &c)?;
            let hat = eps_hat(spec, level, &x.mul(&y.adjoint())?)?;
            let formula = xi.right_mul(&ex_k(spec, level, &b.mul(&c.adjoint())?)?)?.mul(&eta.adjoint())?;
            Ok((ratio, inner_dev, hat.max_abs_diff(&formula)))
        })
        .collect::<Result<Vec<_>>>()?;
    let fold = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let contraction_max_ratio = fold(|r| r.0);
    let inner_identity_dev = fold(|r| r.1);
    let rank_one_dev = fold(|r| r.2);
    let cp = hilbert::certify_cp(&eps_hat_table(spec, level, n)?, cap, 50, seed, tol)?;
    let unital_defect = eps_hat(spec, level, &AMatrix::identity(alg, n * r))?
        .sub(&AMatrix::identity(alg, n))?
        .max_abs();
    let pass = contraction_max_ratio <= 1.0 + 1e-8
        && inner_identity_dev <= tol.eq_tol
        && rank_one_dev <= tol.eq_tol
        && unital_defect <= tol.eq_tol
        && cp.pass;
    Ok(EpsReport {
        spec: spec.name().to_string(),
        level,
        contraction_max_ratio,
        inner_identity_dev,
        rank_one_dev,
        unital_defect,
        cp,
        pass,
    })
}

/// `spec` with `U` replaced by `scale·U`, a non-unitary negative control.
pub fn corrupted(spec: &CorrespondenceSpec, scale: f64) -> Result<CorrespondenceSpec> {
    spec.with_u(spec.u().scale(C64::new(scale, 0.0)))
}
