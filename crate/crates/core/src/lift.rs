//! Lifting machinery: the module `E_∞ = E ⊗ F_E` at a finite level, the
//! representations `π_i`, the defect identity behind the completely
//! positive lift, the compression lift for Hilbert bimodules, and CPAP
//! certificates built from the Fock factor maps.
//!
//! At level `K` the coefficient algebra is `B = M_{n^K}(A)` and
//! `(E_∞)^m ≅ E^m ⊗ B` has coordinates `(n^{m+K}) × n^K` over A, with
//! `ξ ⊗ b ↦ φ_K(ξ_i) b`.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::correspondence::{CorrespondenceSpec, PRESET_VERSION};
use crate::error::{shape_err, LabError, Result};
use crate::expectation;
use crate::fock::{self, FockVector, FockWindow, GradedOperator, Rational, Sided, TailSymbol};
use crate::hilbert::{self, AMatrix, CPReport, CpMethod, LinearMapTable};
use crate::linalg::CMat;
use crate::star::{AlgebraSpec, Tolerances};

/// Probe trials used when a Choi matrix exceeds the cap.
pub const PROBE_TRIALS: usize = 50;

/// Contractivity slack for certified maps.
pub const NORM_SLACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct EInftyContext {
    spec: CorrespondenceSpec,
    level: usize,
}

/// A homogeneous vector of `(E_∞)^degree` at a fixed level.
#[derive(Clone, Debug, PartialEq)]
pub struct EInftyVector {
    degree: usize,
    level: usize,
    coords: AMatrix,
}

impl EInftyVector {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coords(&self) -> &AMatrix {
        &self.coords
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `K(E_∞)`-valued: `θ_{x,y} = x yᴴ`.
    Left,
    /// `B`-valued: `xᴴ y`.
    Right,
}

impl EInftyContext {
    pub fn new(spec: &CorrespondenceSpec, level: usize) -> Result<Self> {
        if level > spec.max_degree() {
            return Err(LabError::DegreeOverflow {
                degree: level as i64,
                limit: spec.max_degree() as i64,
            });
        }
        Ok(EInftyContext {
            spec: spec.clone(),
            level,
        })
    }

    pub fn spec(&self) -> &CorrespondenceSpec {
        &self.spec
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Size of `B = M_{b_rank}(A)`.
    pub fn b_rank(&self) -> usize {
        self.spec.rank(self.level)
    }

    pub fn b_unit(&self) -> AMatrix {
        AMatrix::identity(self.spec.algebra(), self.b_rank())
    }

    /// `ξ ⊗ b`.
    pub fn vector(&self, xi: &FockVector, b: &AMatrix) -> Result<EInftyVector> {
        Ok(EInftyVector {
            degree: xi.degree(),
            level: self.level,
            coords: expectation::tensor_with_level(&self.spec, self.level, xi.coords(), b)?,
        })
    }

    /// Wraps raw coordinates of `(E_∞)^degree`.
    pub fn from_coords(&self, degree: usize, coords: AMatrix) -> Result<EInftyVector> {
        let r = self.b_rank();
        if coords.shape() != (self.spec.rank(degree) * r, r) {
            return Err(shape_err("EInftyContext::from_coords", format!("degree {degree} at level {}: got {:?}", self.level, coords.shape())));
        }
        Ok(EInftyVector {
            degree,
            level: self.level,
            coords,
        })
    }

    fn check(&self, x: &EInftyVector) -> Result<()> {
        if x.level != self.level || x.coords.dims() != self.spec.algebra().block_dims() {
            return Err(LabError::Structure(format!(
                "vector of level {} used in a level-{} context",
                x.level, self.level
            )));
        }
        Ok(())
    }
}

pub fn einfty_inner(ctx: &EInftyContext, x: &EInftyVector, y: &EInftyVector, side: Side) -> Result<AMatrix> {
    ctx.check(x)?;
    ctx.check(y)?;
    if x.degree != y.degree {
        return Err(shape_err("einfty_inner", format!("degrees {} and {} differ", x.degree, y.degree)));
    }
    match side {
        Side::Right => x.coords.adjoint().mul(&y.coords),
        Side::Left => x.coords.mul(&y.coords.adjoint()),
    }
}

/// `π_i(T)`: `T ⊗ I_{E^{j−i}}` on every degree `j ≥ i`, zero below.
pub fn pi_i(spec: &CorrespondenceSpec, i: usize, t: &AMatrix, window: &FockWindow) -> Result<GradedOperator> {
    if window.is_two_sided() || window.level() != 0 {
        return Err(LabError::Structure("π_i acts on the one-sided level-0 Fock module".into()));
    }
    if i as i64 > window.hi() {
        return Err(LabError::DegreeOverflow {
            degree: i as i64,
            limit: window.hi(),
        });
    }
    let m = spec.rank(i);
    if t.shape() != (m, m) {
        return Err(shape_err("pi_i", format!("K(E^{i}) needs {m}x{m}, got {:?}", t.shape())));
    }
    let mut out = GradedOperator::zero(window);
    let mut cur = t.clone();
    for j in (i as i64)..=window.hi() {
        if j > i as i64 {
            cur = spec.amplify_once(&cur)?;
        }
        out.insert(j, j, cur.clone())?;
    }
    Ok(out)
}

/// `t_x t_y*` on the Fock module of `E_∞`, i.e. `θ_{x,y} ⊗ I` on every
/// degree pair `(r+k, s+k)`. The window must carry the context's level.
pub fn toeplitz_infty(ctx: &EInftyContext, x: &EInftyVector, y: &EInftyVector, window: &FockWindow) -> Result<GradedOperator> {
    ctx.check(x)?;
    ctx.check(y)?;
    if window.is_two_sided() || window.level() != ctx.level {
        return Err(LabError::Structure(format!(
            "toeplitz_infty needs a one-sided window at level {}",
            ctx.level
        )));
    }
    let (r, s) = (x.degree as i64, y.degree as i64);
    if r.max(s) > window.hi() {
        return Err(LabError::DegreeOverflow {
            degree: r.max(s),
            limit: window.hi(),
        });
    }
    let mut cur = x.coords.mul(&y.coords.adjoint())?;
    let mut out = GradedOperator::zero(window);
    for k in 0..=(window.hi() - r.max(s)) {
        if k > 0 {
            cur = ctx.spec.amplify_once(&cur)?;
        }
        out.insert(r + k, s + k, cur.clone())?;
    }
    Ok(out)
}

/// Blockwise `ε̂`: an operator on the level-`K` module to one on `output`.
pub fn eps_hat_graded(ctx: &EInftyContext, x: &GradedOperator, output: &FockWindow) -> Result<GradedOperator> {
    if output.level() != 0 || output.lo() != x.window().lo() || output.hi() != x.window().hi() {
        return Err(LabError::Structure("ε̂ output window must be the level-0 copy of the input window".into()));
    }
    let mut out = GradedOperator::zero(output);
    for (&(i, j), b) in x.blocks() {
        out.insert(i, j, expectation::eps_hat(&ctx.spec, ctx.level, b)?)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectReport {
    pub i: usize,
    pub level: usize,
    pub r: i64,
    pub s: i64,
    /// `(k, max |block (r+k, s+k)|)` for every offset in the window.
    pub offsets: Vec<(i64, f64)>,
    /// Worst block with `k ≥ i`; should vanish.
    pub max_at_or_above_i: f64,
    /// Offsets whose block exceeds `eq_tol`: the compact part.
    pub support: Vec<i64>,
    pub pass: bool,
}

/// `ε̂(t_{μ⊗b} t_{ν⊗c}*) − t_μ π_i(b_i c_i*) t_ν*` with `b = b_i ⊗ I`,
/// `c = c_i ⊗ I` the level-`i` compacts pushed up to level `K`.
#[allow(clippy::too_many_arguments)]
pub fn lift_defect(
    ctx: &EInftyContext,
    mu: &FockVector,
    nu: &FockVector,
    b_i: &AMatrix,
    c_i: &AMatrix,
    i: usize,
    window: &FockWindow,
    tol: &Tolerances,
) -> Result<(GradedOperator, DefectReport)> {
    let spec = &ctx.spec;
    if i > ctx.level {
        return Err(LabError::Config(format!("i = {i} exceeds the level K = {}", ctx.level)));
    }
    let m = spec.rank(i);
    if b_i.shape() != (m, m) || c_i.shape() != (m, m) {
        return Err(shape_err("lift_defect", format!("b and c must be {m}x{m} over A")));
    }
    let b = spec.amplify(b_i, ctx.level - i)?;
    let c = spec.amplify(c_i, ctx.level - i)?;
    let x = ctx.vector(mu, &b)?;
    let y = ctx.vector(nu, &c)?;
    let upper = window.over_level(ctx.level)?;
    let lifted = eps_hat_graded(ctx, &toeplitz_infty(ctx, &x, &y, &upper)?, window)?;

    let t_mu = fock::creation_op(spec, mu, window)?;
    let t_nu = fock::creation_op(spec, nu, window)?;
    let middle = pi_i(spec, i, &b_i.mul(&c_i.adjoint())?, window)?;
    let expected = t_mu.mul(&middle)?.mul(&t_nu.adjoint())?;
    let defect = lifted.sub(&expected)?;

    let (r, s) = (mu.degree() as i64, nu.degree() as i64);
    let off_band = defect
        .blocks()
        .iter()
        .filter(|(&(p, q), _)| p - q != r - s)
        .map(|(_, b)| b.max_abs())
        .fold(0.0, f64::max);
    if off_band > tol.eq_tol {
        return Err(LabError::Structure(format!("defect has off-band blocks (size {off_band:.3e})")));
    }
    let mut report = DefectReport {
        i,
        level: ctx.level,
        r,
        s,
        offsets: Vec::new(),
        max_at_or_above_i: 0.0,
        support: Vec::new(),
        pass: true,
    };
    for k in 0..=(window.hi() - r.max(s)) {
        let dev = defect.block(r + k, s + k).map(|b| b.max_abs()).unwrap_or(0.0);
        report.offsets.push((k, dev));
        if k >= i as i64 {
            report.max_at_or_above_i = report.max_at_or_above_i.max(dev);
        }
        if dev > tol.eq_tol {
            report.support.push(k);
        }
    }
    report.pass = report.max_at_or_above_i <= tol.eq_tol && report.support.iter().all(|&k| k < i as i64);
    Ok((defect, report))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BilateralLiftReport {
    pub spec: String,
    pub r: i64,
    pub s: i64,
    /// `max |P s_μ s_ν* P − t_μ t_ν*|` over blocks.
    pub deviation: f64,
    /// `deviation ≤ eq_tol`.
    pub exact: bool,
    /// Offsets `k` (block `(r+k, s+k)`) where the two differ. The
    /// compression keeps `k ∈ [−min(r,s), 0)`, which `t_μ t_ν*` lacks, so
    /// this is empty exactly when `min(r, s) = 0`.
    pub difference_support: Vec<i64>,
    /// Deviation of the compression from its constant tail.
    pub tail_deviation: f64,
    /// Finite difference support below offset 0 and a matching tail: the
    /// two agree modulo compacts.
    pub quotient_consistent: bool,
    pub cp: CPReport,
    pub pass: bool,
}

/// The compression map `x ↦ P x P` from the two-sided window onto the
/// nonnegative degrees.
pub fn compression_table(two_sided: &FockWindow, one_sided: &FockWindow) -> Result<LinearMapTable> {
    fock::window_map_table(two_sided, one_sided, |x| Ok(x.restrict(one_sided)))
}

/// Compresses `s_μ s_ν*` on a two-sided window (`n = 1`) to the one-sided
/// module and compares it with `t_μ t_ν*`.
pub fn bilateral_lift(
    spec: &CorrespondenceSpec,
    mu: &FockVector,
    nu: &FockVector,
    window: &FockWindow,
    cap: usize,
    tol: &Tolerances,
) -> Result<(GradedOperator, BilateralLiftReport)> {
    if spec.n() != 1 {
        return Err(LabError::Unsupported(format!("bilateral lift requires n = 1, spec has n = {}", spec.n())));
    }
    if !window.is_two_sided() {
        return Err(LabError::Structure("bilateral lift starts from a two-sided window".into()));
    }
    let one = FockWindow::one_sided(spec, window.hi())?;
    let bilateral = fock::toeplitz_op(spec, mu, nu, window)?;
    let lifted = bilateral.restrict(&one);
    let target = fock::toeplitz_op(spec, mu, nu, &one)?;
    let deviation = lifted.max_abs_diff(&target);
    let symbol = TailSymbol::constant(
        mu.degree() as i64,
        nu.degree() as i64,
        hilbert::rank_one(mu.coords(), nu.coords())?,
        Rational::from_integer(1),
    );
    let cmp = fock::tail_compare(spec, &lifted, &symbol, tol)?;
    let cp = hilbert::certify_cp(&compression_table(window, &one)?, cap, PROBE_TRIALS, 0, tol)?;
    let (r, s) = (mu.degree() as i64, nu.degree() as i64);
    let diff = lifted.sub(&target)?;
    let difference_support: Vec<i64> = diff
        .blocks()
        .iter()
        .filter(|(_, b)| b.max_abs() > tol.eq_tol)
        .map(|(&(i, _), _)| i - r)
        .collect();
    let on_band = diff.blocks().keys().all(|&(i, j)| i - j == r - s);
    let quotient_consistent = on_band
        && difference_support.iter().all(|&k| k < 0)
        && cmp.max_deviation <= tol.eq_tol
        && cmp.compact_support.is_empty();
    let exact = deviation <= tol.eq_tol;
    let report = BilateralLiftReport {
        spec: spec.name().to_string(),
        r,
        s,
        deviation,
        exact,
        difference_support,
        tail_deviation: cmp.max_deviation,
        quotient_consistent,
        pass: exact && quotient_consistent && cp.pass,
        cp,
    };
    Ok((lifted, report))
}

/// A pair of linear maps `down: M_p(A) → M_q(A)` and `up: M_q(A) → M_p(A)`
/// whose composite approximates the identity on chosen generators.
#[derive(Clone, Debug)]
pub struct FactorPair {
    pub label: String,
    algebra: AlgebraSpec,
    source_rank: usize,
    middle_rank: usize,
    down: LinearMapTable,
    up: LinearMapTable,
}

impl FactorPair {
    pub fn new(label: &str, algebra: &AlgebraSpec, source_rank: usize, middle_rank: usize, down: LinearMapTable, up: LinearMapTable) -> Result<Self> {
        let src: Vec<usize> = algebra.block_dims().iter().map(|d| d * source_rank).collect();
        let mid: Vec<usize> = algebra.block_dims().iter().map(|d| d * middle_rank).collect();
        if down.domain() != src.as_slice() || down.codomain() != mid.as_slice() || up.domain() != mid.as_slice() || up.codomain() != src.as_slice() {
            return Err(shape_err("FactorPair::new", "maps do not chain M_p(A) → M_q(A) → M_p(A)"));
        }
        Ok(FactorPair {
            label: label.into(),
            algebra: algebra.clone(),
            source_rank,
            middle_rank,
            down,
            up,
        })
    }

    pub fn identity(algebra: &AlgebraSpec, rank: usize) -> Self {
        let dims: Vec<usize> = algebra.block_dims().iter().map(|d| d * rank).collect();
        FactorPair {
            label: "identity".into(),
            algebra: algebra.clone(),
            source_rank: rank,
            middle_rank: rank,
            down: LinearMapTable::identity(dims.clone()),
            up: LinearMapTable::identity(dims),
        }
    }

    /// The Fock factorization at truncation `N`: compress onto degrees
    /// `[0, N]` (an `M_D(A)`) and amplify back with weight `1/(N+1)`.
    pub fn fock(spec: &CorrespondenceSpec, window: &FockWindow, n_trunc: i64) -> Result<Self> {
        if n_trunc < 0 || n_trunc > window.hi() {
            return Err(LabError::Config(format!("truncation N = {n_trunc} outside [0, {}]", window.hi())));
        }
        if window.level() != 0 {
            return Err(LabError::Structure("factor maps act on the level-0 module".into()));
        }
        let alg = spec.algebra();
        let r = window.total_rank();
        let off = window.offset(0);
        let d: usize = (0..=n_trunc).map(|k| window.rank(k)).sum();
        let down = LinearMapTable::from_amatrix_map(alg, r, alg, d, |x| Ok(x.submatrix(off, d, off, d)))?;
        let up = LinearMapTable::from_amatrix_map(alg, d, alg, r, |y| {
            let mut full = AMatrix::zeros(alg, r, r);
            full.set_submatrix(off, off, y);
            let x = GradedOperator::from_amatrix(window, &full)?;
            Ok(fock::psi_amplify(spec, &x, n_trunc, window)?.to_amatrix())
        })?;
        let sided = if window.is_two_sided() { "two" } else { "one" };
        Self::new(&format!("fock-{sided}-N{n_trunc}"), alg, r, d, down, up)
    }

    pub fn source_rank(&self) -> usize {
        self.source_rank
    }

    pub fn middle_rank(&self) -> usize {
        self.middle_rank
    }

    pub fn down(&self) -> &LinearMapTable {
        &self.down
    }

    pub fn up(&self) -> &LinearMapTable {
        &self.up
    }

    fn apply_table(&self, table: &LinearMapTable, x: &AMatrix, out_rank: usize) -> Result<AMatrix> {
        let blocks: Vec<CMat> = table.apply(x.flat_blocks())?;
        AMatrix::from_blocks(&self.algebra, out_rank, out_rank, blocks)
    }

    pub fn apply_down(&self, x: &AMatrix) -> Result<AMatrix> {
        self.apply_table(&self.down, x, self.middle_rank)
    }

    pub fn apply_up(&self, y: &AMatrix) -> Result<AMatrix> {
        self.apply_table(&self.up, y, self.source_rank)
    }

    /// `‖up(down(g)) − g‖`.
    pub fn error(&self, g: &AMatrix) -> Result<f64> {
        Ok(self.apply_up(&self.apply_down(g)?)?.sub(g)?.norm())
    }

    /// `(inner.down ∘ self.down, self.up ∘ inner.up)`.
    pub fn then_inner(&self, inner: &FactorPair) -> Result<FactorPair> {
        if inner.algebra != self.algebra || inner.source_rank != self.middle_rank {
            return Err(shape_err("compose_certificates", format!(
                "outer middle M_{}(A) does not match inner source M_{}(A)",
                self.middle_rank, inner.source_rank
            )));
        }
        Ok(FactorPair {
            label: format!("{}∘{}", self.label, inner.label),
            algebra: self.algebra.clone(),
            source_rank: self.source_rank,
            middle_rank: inner.middle_rank,
            down: self.down.then(&inner.down)?,
            up: inner.up.then(&self.up)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompositionRow {
    pub outer_error: f64,
    pub inner_error: f64,
    pub composite_error: f64,
    /// `outer_error + ‖outer.up‖·inner_error`.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompositionReport {
    pub label: String,
    pub rows: Vec<CompositionRow>,
    pub down_cp: CPReport,
    pub up_cp: CPReport,
    pub pass: bool,
}

/// Composes two factorizations and re-certifies the composite. The error
/// on each generator obeys the triangle inequality
/// `‖ψψ'φ'φg − g‖ ≤ ‖ψφg − g‖ + ‖ψ‖·‖ψ'φ'(φg) − φg‖`.
pub fn compose_certificates(
    outer: &FactorPair,
    inner: &FactorPair,
    generators: &[AMatrix],
    cap: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<(FactorPair, CompositionReport)> {
    let composite = outer.then_inner(inner)?;
    let up_norm = outer.up.norm_bound();
    let rows = generators
        .par_iter()
        .map(|g| {
            let outer_error = outer.error(g)?;
            let inner_error = inner.error(&outer.apply_down(g)?)?;
            let composite_error = composite.error(g)?;
            let bound = outer_error + up_norm * inner_error;
            Ok(CompositionRow {
                outer_error,
                inner_error,
                composite_error,
                bound,
                pass: composite_error <= bound + tol.eq_tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let down_cp = hilbert::certify_cp(&composite.down, cap, PROBE_TRIALS, seed, tol)?;
    let up_cp = hilbert::certify_cp(&composite.up, cap, PROBE_TRIALS, seed, tol)?;
    let pass = rows.iter().all(|r| r.pass)
        && down_cp.pass
        && up_cp.pass
        && down_cp.norm_bound <= 1.0 + NORM_SLACK
        && up_cp.norm_bound <= 1.0 + NORM_SLACK;
    let report = CompositionReport {
        label: composite.label.clone(),
        rows,
        down_cp,
        up_cp,
        pass,
    };
    Ok((composite, report))
}

/// A generator `t_μ t_ν*` with seeded `μ ∈ E^r`, `ν ∈ E^s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Generator {
    pub r: usize,
    pub s: usize,
    pub seed: u64,
}

impl Generator {
    pub fn new(r: usize, s: usize, seed: u64) -> Self {
        Generator { r, s, seed }
    }

    /// Seeded generator for the pair `(r, s)` under a run seed.
    pub fn seeded(r: usize, s: usize, run_seed: u64) -> Self {
        Generator {
            r,
            s,
            seed: run_seed.wrapping_mul(1_000_003).wrapping_add((100 * r + s) as u64),
        }
    }

    /// Every `(r, s)` with `r, s ≤ band`.
    pub fn all_up_to(band: usize, run_seed: u64) -> Vec<Generator> {
        (0..=band)
            .flat_map(|r| (0..=band).map(move |s| Generator::seeded(r, s, run_seed)))
            .collect()
    }

    pub fn vectors(&self, spec: &CorrespondenceSpec) -> (FockVector, FockVector) {
        (
            FockVector::generator(spec, self.r, self.seed),
            FockVector::generator(spec, self.s, self.seed ^ 0x9E37_79B9_7F4A_7C15),
        )
    }

    /// `|r − s|` on a two-sided window, `max(r, s)` on a one-sided one.
    pub fn band(&self, sided: Sided) -> i64 {
        match sided {
            Sided::Two => (self.r as i64 - self.s as i64).abs(),
            Sided::One => self.r.max(self.s) as i64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateSpec {
    pub name: String,
    pub preset_version: String,
    pub block_dims: Vec<usize>,
    pub n: usize,
    pub window: [i64; 2],
    pub two_sided: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorRecord {
    pub r: usize,
    pub s: usize,
    pub seed: u64,
    pub coeff_expected: Rational,
    pub coeff_measured: f64,
    pub error: f64,
    /// `band/(N+1)·‖g‖ + eq_tol`.
    pub bound: f64,
    pub norm: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CpSummary {
    pub method: CpMethod,
    pub min_eig: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactorMapRecord {
    pub direction: String,
    pub cp: CpSummary,
    pub norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CPAPCertificate {
    pub spec: CertificateSpec,
    #[serde(rename = "N")]
    pub n_trunc: i64,
    #[serde(rename = "D")]
    pub d: usize,
    pub flatten_dim: usize,
    pub generators: Vec<GeneratorRecord>,
    pub factor_maps: Vec<FactorMapRecord>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub created: String,
    pub tool_version: String,
    pub pass: bool,
}

fn ratio_f64(q: &Rational) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn measure_generator(
    spec: &CorrespondenceSpec,
    g: &Generator,
    n_trunc: i64,
    window: &FockWindow,
    tol: &Tolerances,
) -> Result<GeneratorRecord> {
    let (mu, nu) = g.vectors(spec);
    let target = fock::toeplitz_op(spec, &mu, &nu, window)?;
    let norm = target.norm();
    let (r, s) = (g.r as i64, g.s as i64);
    let (expected, measured, error, sided) = if window.is_two_sided() {
        let (y, table) = fock::w_n(spec, &mu, &nu, n_trunc, window)?;
        if table.structure_defect > tol.eq_tol {
            return Err(LabError::Structure(format!("W_N({r},{s}) is not a multiple of the generator")));
        }
        let row = table.rows.iter().find(|row| row.l == 0).expect("offset 0 lies in the window");
        (row.expected, row.measured, y.sub(&target)?.norm(), Sided::Two)
    } else {
        let (y, _) = fock::v_n(spec, &mu, &nu, n_trunc, window)?;
        let symbol = TailSymbol::from_oracle(&mu, &nu, n_trunc)?;
        let cmp = fock::tail_compare(spec, &y, &symbol, tol)?;
        if cmp.max_deviation > tol.eq_tol {
            return Err(LabError::Structure(format!("V_N({r},{s}) deviates from its predicted symbol")));
        }
        // Distance to the generator in the tail, where compacts are invisible.
        let stab = symbol.stabilization();
        let mut error = 0.0f64;
        let mut measured = ratio_f64(&symbol.tail);
        for l in stab..=(window.hi() - r.max(s)) {
            let gb = target.block_or_zero(r + l, s + l);
            let yb = y.block_or_zero(r + l, s + l);
            error = error.max(yb.sub(&gb)?.norm());
            if l == stab {
                let gg = gb.frobenius_inner(&gb).re;
                measured = if gg > 0.0 { gb.frobenius_inner(&yb).re / gg } else { 0.0 };
            }
        }
        (symbol.tail, measured, error, Sided::One)
    };
    let bound = g.band(sided) as f64 / (n_trunc as f64 + 1.0) * norm + tol.eq_tol;
    Ok(GeneratorRecord {
        r: g.r,
        s: g.s,
        seed: g.seed,
        coeff_expected: expected,
        coeff_measured: measured,
        error,
        bound,
        norm,
        pass: error <= bound,
    })
}

/// Deterministic run identifier derived from the certificate inputs.
pub fn run_id(parts: &[String]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("run-{hex}")
}

/// Builds the factor pair at truncation `N`, certifies both maps, and
/// measures every generator.
pub fn cpap_certificate(
    spec: &CorrespondenceSpec,
    n_trunc: i64,
    generators: &[Generator],
    window: &FockWindow,
    seed: u64,
    cap: usize,
    tol: &Tolerances,
) -> Result<(CPAPCertificate, FactorPair)> {
    let pair = FactorPair::fock(spec, window, n_trunc)?;
    let records = generators
        .par_iter()
        .map(|g| {
            if g.r.max(g.s) as i64 > window.hi() {
                return Err(LabError::DegreeOverflow {
                    degree: g.r.max(g.s) as i64,
                    limit: window.hi(),
                });
            }
            measure_generator(spec, g, n_trunc, window, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut maps = Vec::new();
    let mut maps_pass = true;
    for (direction, table) in [("down", pair.down()), ("up", pair.up())] {
        let cp = hilbert::certify_cp(table, cap, PROBE_TRIALS, seed, tol)?;
        maps_pass &= cp.pass && cp.norm_bound <= 1.0 + NORM_SLACK;
        maps.push(FactorMapRecord {
            direction: direction.into(),
            cp: CpSummary {
                method: cp.method,
                min_eig: cp.min_eigenvalue,
            },
            norm: cp.norm_bound,
        });
    }
    let pass = maps_pass && records.iter().all(|r| r.pass);
    let cert_spec = CertificateSpec {
        name: spec.name().to_string(),
        preset_version: PRESET_VERSION.to_string(),
        block_dims: spec.algebra().block_dims().to_vec(),
        n: spec.n(),
        window: [window.lo(), window.hi()],
        two_sided: window.is_two_sided(),
    };
    let created = run_id(&[
        format!("{cert_spec:?}"),
        format!("{:?}", spec.u()),
        format!("{:?}", spec.alphas()),
        n_trunc.to_string(),
        format!("{generators:?}"),
        seed.to_string(),
        format!("{tol:?}"),
    ]);
    let cert = CPAPCertificate {
        spec: cert_spec,
        n_trunc,
        d: pair.middle_rank(),
        flatten_dim: pair.middle_rank() * spec.algebra().total_dim(),
        generators: records,
        factor_maps: maps,
        tolerances: *tol,
        seed,
        created,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        pass,
    };
    Ok((cert, pair))
}

/// The windowed generator `t_μ t_ν*` as one matrix, for composition checks.
pub fn generator_matrix(spec: &CorrespondenceSpec, g: &Generator, window: &FockWindow) -> Result<AMatrix> {
    let (mu, nu) = g.vectors(spec);
    Ok(fock::toeplitz_op(spec, &mu, &nu, window)?.to_amatrix())
}
