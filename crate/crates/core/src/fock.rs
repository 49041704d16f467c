//! Truncated Fock modules and graded (block-banded) operators on them.
//!
//! A [`GradedOperator`] stores the blocks `x_{i,j} ∈ L_A(E^j, E^i)` of an
//! operator on `⊕_{lo ≤ d ≤ hi} E^d` in a sparse map keyed by the degree pair.
//! Every operator built here (creation products, Toeplitz elements,
//! compressions, amplifications) is banded and moves degrees monotonically,
//! so each block inside the window equals the corresponding block of the
//! untruncated operator.
//!
//! The two-sided module (for `n = 1`) identifies every `X^k`, `k ∈ ℤ`, with
//! `A` carrying the left action `β^k`, where `β = Ad U ∘ α_1`. Tensoring is
//! `a ⊗ b ↦ β^k(a) b`.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::Serialize;

use crate::correspondence::CorrespondenceSpec;
use crate::error::{shape_err, LabError, Result};
use crate::hilbert::{self, AMatrix, LinearMapTable};
use crate::linalg::C64;
use crate::star::{AElement, AlgebraSpec, Tolerances};

/// Exact rational used for Schur coefficients.
pub type Rational = Ratio<i64>;

pub fn default_window(n: usize) -> i64 {
    match n {
        1 => 10,
        2 => 6,
        _ => 4,
    }
}

/// Degree range `[lo, hi]` of a truncated Fock module together with the
/// data fixing the rank of each degree.
///
/// `level > 0` describes the module `Γ_E ⊗ M_{n^level}(A)` over the finite
/// level `B = M_{n^level}(A)`, where degree `d` has rank `n^{d+level}` over A.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockWindow {
    lo: i64,
    hi: i64,
    n: usize,
    level: usize,
    algebra: AlgebraSpec,
}

impl FockWindow {
    pub fn one_sided(spec: &CorrespondenceSpec, hi: i64) -> Result<Self> {
        if hi < 0 {
            return Err(LabError::Config(format!("window bound must be nonnegative, got {hi}")));
        }
        if hi as usize > spec.max_degree() {
            return Err(LabError::DegreeOverflow {
                degree: hi,
                limit: spec.max_degree() as i64,
            });
        }
        Ok(FockWindow {
            lo: 0,
            hi,
            n: spec.n(),
            level: 0,
            algebra: spec.algebra().clone(),
        })
    }

    /// `[−m, m]`; only for `n = 1`.
    pub fn two_sided(spec: &CorrespondenceSpec, m: i64) -> Result<Self> {
        if spec.n() != 1 {
            return Err(LabError::Unsupported(format!(
                "two-sided Fock module requires n = 1, spec has n = {}",
                spec.n()
            )));
        }
        if m < 0 {
            return Err(LabError::Config(format!("window bound must be nonnegative, got {m}")));
        }
        Ok(FockWindow {
            lo: -m,
            hi: m,
            n: 1,
            level: 0,
            algebra: spec.algebra().clone(),
        })
    }

    /// The same degrees over the level-`level` coefficient algebra.
    pub fn over_level(&self, level: usize) -> Result<Self> {
        if self.is_two_sided() && level > 0 {
            return Err(LabError::Unsupported("two-sided windows have no level structure".into()));
        }
        Ok(FockWindow { level, ..self.clone() })
    }

    pub fn with_hi(&self, hi: i64) -> Self {
        let lo = if self.is_two_sided() { -hi } else { 0 };
        FockWindow { lo, hi, ..self.clone() }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        &self.algebra
    }

    pub fn is_two_sided(&self) -> bool {
        self.lo < 0
    }

    pub fn contains(&self, d: i64) -> bool {
        self.lo <= d && d <= self.hi
    }

    pub fn degrees(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    /// Rank over A of the degree-`d` summand.
    pub fn rank(&self, d: i64) -> usize {
        if self.is_two_sided() {
            1
        } else {
            self.n.pow((d + self.level as i64) as u32)
        }
    }

    /// Total rank of the window.
    pub fn total_rank(&self) -> usize {
        self.degrees().map(|d| self.rank(d)).sum()
    }

    /// Row offset of degree `d` in [`GradedOperator::to_amatrix`].
    pub fn offset(&self, d: i64) -> usize {
        (self.lo..d).map(|e| self.rank(e)).sum()
    }
}

/// A vector of homogeneous degree in `E^degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    degree: usize,
    coords: AMatrix,
}

impl FockVector {
    pub fn new(spec: &CorrespondenceSpec, degree: usize, coords: AMatrix) -> Result<Self> {
        if coords.cols() != 1 || coords.rows() != spec.rank(degree) || coords.dims() != spec.algebra().block_dims() {
            return Err(shape_err(
                "FockVector::new",
                format!("degree {degree} needs a {}x1 column over A, got {:?}", spec.rank(degree), coords.shape()),
            ));
        }
        Ok(FockVector { degree, coords })
    }

    /// The vacuum `1 ∈ E^0 = A`.
    pub fn vacuum(spec: &CorrespondenceSpec) -> Self {
        FockVector {
            degree: 0,
            coords: AMatrix::identity(spec.algebra(), 1),
        }
    }

    /// Seeded vector with `‖⟨ξ, ξ⟩‖ = 1`.
    pub fn sample_unit(spec: &CorrespondenceSpec, degree: usize, seed: u64) -> Self {
        FockVector {
            degree,
            coords: AMatrix::sample_unit_vector(spec.algebra(), spec.rank(degree), seed),
        }
    }

    /// Generator convention: degree 0 is the vacuum, higher degrees are
    /// seeded unit vectors.
    pub fn generator(spec: &CorrespondenceSpec, degree: usize, seed: u64) -> Self {
        if degree == 0 {
            Self::vacuum(spec)
        } else {
            Self::sample_unit(spec, degree, seed)
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coords(&self) -> &AMatrix {
        &self.coords
    }

    /// `self ⊗ other` in `E^{j+k}`.
    pub fn tensor(&self, spec: &CorrespondenceSpec, other: &FockVector) -> Result<FockVector> {
        Ok(FockVector {
            degree: self.degree + other.degree,
            coords: spec.tensor_vec(&self.coords, &other.coords, other.degree)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradedOperator {
    window: FockWindow,
    blocks: BTreeMap<(i64, i64), AMatrix>,
}

impl GradedOperator {
    pub fn zero(window: &FockWindow) -> Self {
        GradedOperator {
            window: window.clone(),
            blocks: BTreeMap::new(),
        }
    }

    pub fn identity(window: &FockWindow) -> Self {
        let mut out = Self::zero(window);
        for d in window.degrees() {
            out.blocks.insert((d, d), AMatrix::identity(&window.algebra, window.rank(d)));
        }
        out
    }

    pub fn window(&self) -> &FockWindow {
        &self.window
    }

    pub fn blocks(&self) -> &BTreeMap<(i64, i64), AMatrix> {
        &self.blocks
    }

    pub fn block(&self, i: i64, j: i64) -> Option<&AMatrix> {
        self.blocks.get(&(i, j))
    }

    /// Block `(i, j)` or an explicit zero of the right shape.
    pub fn block_or_zero(&self, i: i64, j: i64) -> AMatrix {
        self.blocks
            .get(&(i, j))
            .cloned()
            .unwrap_or_else(|| AMatrix::zeros(&self.window.algebra, self.window.rank(i), self.window.rank(j)))
    }

    pub fn insert(&mut self, i: i64, j: i64, x: AMatrix) -> Result<()> {
        if !self.window.contains(i) || !self.window.contains(j) {
            return Err(LabError::DegreeOverflow {
                degree: i.max(j),
                limit: self.window.hi,
            });
        }
        if x.shape() != (self.window.rank(i), self.window.rank(j)) {
            return Err(shape_err(
                "GradedOperator::insert",
                format!("block ({i},{j}) needs {}x{}, got {:?}", self.window.rank(i), self.window.rank(j), x.shape()),
            ));
        }
        self.blocks.insert((i, j), x);
        Ok(())
    }

    fn accumulate(&mut self, i: i64, j: i64, x: AMatrix) -> Result<()> {
        match self.blocks.get_mut(&(i, j)) {
            Some(b) => *b = b.add(&x)?,
            None => self.insert(i, j, x)?,
        }
        Ok(())
    }

    fn check_window(&self, other: &GradedOperator) -> Result<()> {
        if self.window != other.window {
            return Err(LabError::Structure("operators live on different windows".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &GradedOperator) -> Result<GradedOperator> {
        self.check_window(other)?;
        let mut out = self.clone();
        for (&(i, j), b) in &other.blocks {
            out.accumulate(i, j, b.clone())?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &GradedOperator) -> Result<GradedOperator> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, z: C64) -> GradedOperator {
        GradedOperator {
            window: self.window.clone(),
            blocks: self.blocks.iter().map(|(k, b)| (*k, b.scale(z))).collect(),
        }
    }

    pub fn adjoint(&self) -> GradedOperator {
        GradedOperator {
            window: self.window.clone(),
            blocks: self.blocks.iter().map(|(&(i, j), b)| ((j, i), b.adjoint())).collect(),
        }
    }

    /// Product of the truncations to the window (`P x P · P y P`).
    pub fn mul(&self, other: &GradedOperator) -> Result<GradedOperator> {
        self.check_window(other)?;
        let mut by_row: BTreeMap<i64, Vec<(i64, &AMatrix)>> = BTreeMap::new();
        for (&(j, k), b) in &other.blocks {
            by_row.entry(j).or_default().push((k, b));
        }
        let mut out = GradedOperator::zero(&self.window);
        for (&(i, j), a) in &self.blocks {
            if let Some(row) = by_row.get(&j) {
                for &(k, b) in row {
                    out.accumulate(i, k, a.mul(b)?)?;
                }
            }
        }
        Ok(out)
    }

    /// Largest entrywise deviation over the union of supports.
    pub fn max_abs_diff(&self, other: &GradedOperator) -> f64 {
        let keys: BTreeSet<(i64, i64)> = self.blocks.keys().chain(other.blocks.keys()).copied().collect();
        keys.into_iter()
            .map(|(i, j)| match (self.blocks.get(&(i, j)), other.blocks.get(&(i, j))) {
                (Some(a), Some(b)) => a.max_abs_diff(b),
                (Some(a), None) | (None, Some(a)) => a.max_abs(),
                (None, None) => 0.0,
            })
            .fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &GradedOperator, tol: &Tolerances) -> bool {
        self.max_abs_diff(other) <= tol.eq_tol
    }

    /// Keeps the blocks whose degrees both lie in `window` and re-homes the
    /// result there.
    pub fn restrict(&self, window: &FockWindow) -> GradedOperator {
        GradedOperator {
            window: window.clone(),
            blocks: self
                .blocks
                .iter()
                .filter(|(&(i, j), _)| window.contains(i) && window.contains(j))
                .map(|(k, b)| (*k, b.clone()))
                .collect(),
        }
    }

    /// Deviation on the blocks the two windows share.
    pub fn shared_block_deviation(&self, other: &GradedOperator) -> f64 {
        let lo = self.window.lo.max(other.window.lo);
        let hi = self.window.hi.min(other.window.hi);
        let inside = |(i, j): (i64, i64)| lo <= i && i <= hi && lo <= j && j <= hi;
        let keys: BTreeSet<(i64, i64)> = self
            .blocks
            .keys()
            .chain(other.blocks.keys())
            .copied()
            .filter(|&k| inside(k))
            .collect();
        keys.into_iter()
            .map(|(i, j)| match (self.blocks.get(&(i, j)), other.blocks.get(&(i, j))) {
                (Some(a), Some(b)) => a.max_abs_diff(b),
                (Some(a), None) | (None, Some(a)) => a.max_abs(),
                (None, None) => 0.0,
            })
            .fold(0.0, f64::max)
    }

    /// The whole windowed operator as one `R × R` matrix over A.
    pub fn to_amatrix(&self) -> AMatrix {
        let r = self.window.total_rank();
        let mut out = AMatrix::zeros(&self.window.algebra, r, r);
        for (&(i, j), b) in &self.blocks {
            out.set_submatrix(self.window.offset(i), self.window.offset(j), b);
        }
        out
    }

    pub fn from_amatrix(window: &FockWindow, x: &AMatrix) -> Result<GradedOperator> {
        let r = window.total_rank();
        if x.shape() != (r, r) {
            return Err(shape_err("GradedOperator::from_amatrix", format!("expected {r}x{r}, got {:?}", x.shape())));
        }
        let mut out = GradedOperator::zero(window);
        for i in window.degrees() {
            for j in window.degrees() {
                let b = x.submatrix(window.offset(i), window.rank(i), window.offset(j), window.rank(j));
                if b.max_abs() > 0.0 {
                    out.blocks.insert((i, j), b);
                }
            }
        }
        Ok(out)
    }

    /// Operator norm of the windowed operator.
    pub fn norm(&self) -> f64 {
        self.to_amatrix().norm()
    }

    pub fn nnz_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Tabulates a map on windowed operators for CP certification.
pub fn window_map_table<F>(input: &FockWindow, output: &FockWindow, f: F) -> Result<LinearMapTable>
where
    F: Fn(&GradedOperator) -> Result<GradedOperator> + Sync,
{
    LinearMapTable::from_amatrix_map(
        &input.algebra,
        input.total_rank(),
        &output.algebra,
        output.total_rank(),
        |x| {
            let y = f(&GradedOperator::from_amatrix(input, x)?)?;
            if y.window != *output {
                return Err(LabError::Structure("map returned an operator on the wrong window".into()));
            }
            Ok(y.to_amatrix())
        },
    )
}

/// `x ⊗ I_{E^k}` in the window's convention (signed `k` when two-sided).
fn amplify_in(spec: &CorrespondenceSpec, window: &FockWindow, x: &AMatrix, k: i64) -> Result<AMatrix> {
    if window.is_two_sided() {
        spec.amplify_signed(x, k)
    } else if k < 0 {
        Err(LabError::Structure("negative amplification on a one-sided module".into()))
    } else {
        spec.amplify(x, k as usize)
    }
}

/// Left action of `a ∈ A` on the window: `φ_d(a)` (or `β^d(a)`) on degree `d`.
pub fn left_action(spec: &CorrespondenceSpec, a: &AElement, window: &FockWindow) -> Result<GradedOperator> {
    let mut out = GradedOperator::zero(window);
    let x = AMatrix::from_element(a);
    for d in window.degrees() {
        out.insert(d, d, amplify_in(spec, window, &x, d)?)?;
    }
    Ok(out)
}

/// Creation operator `t_ξ: η ↦ ξ ⊗ η` for homogeneous `ξ ∈ E^d`.
pub fn creation_op(spec: &CorrespondenceSpec, xi: &FockVector, window: &FockWindow) -> Result<GradedOperator> {
    if window.level != 0 {
        return Err(LabError::Structure("creation operators act on the level-0 module".into()));
    }
    let d = xi.degree as i64;
    let mut out = GradedOperator::zero(window);
    for k in window.lo..=(window.hi - d) {
        out.insert(k + d, k, amplify_in(spec, window, &xi.coords, k)?)?;
    }
    Ok(out)
}

/// `t_μ t_ν* = Σ_k e_{μ,ν} ⊗ I_{E^k}`, summed over every `k` representable in
/// the window (`k ≥ 0` one-sided, `k ∈ ℤ` two-sided).
pub fn toeplitz_op(spec: &CorrespondenceSpec, mu: &FockVector, nu: &FockVector, window: &FockWindow) -> Result<GradedOperator> {
    let (r, s) = (mu.degree as i64, nu.degree as i64);
    if r.max(s) > window.hi {
        return Err(LabError::DegreeOverflow {
            degree: r.max(s),
            limit: window.hi,
        });
    }
    let e = hilbert::rank_one(&mu.coords, &nu.coords)?;
    let mut out = GradedOperator::zero(window);
    if window.is_two_sided() {
        for k in (window.lo - r.min(s))..=(window.hi - r.max(s)) {
            out.insert(r + k, s + k, spec.amplify_signed(&e, k)?)?;
        }
    } else {
        let mut cur = e;
        for k in 0..=(window.hi - r.max(s)) {
            if k > 0 {
                cur = spec.amplify_once(&cur)?;
            }
            out.insert(r + k, s + k, cur.clone())?;
        }
    }
    Ok(out)
}

/// `P_N x P_N`: keeps the blocks with both degrees in `[0, N]`.
pub fn compress(x: &GradedOperator, n_trunc: i64) -> Result<GradedOperator> {
    if n_trunc < 0 || n_trunc > x.window.hi {
        return Err(LabError::Config(format!(
            "truncation N = {n_trunc} outside [0, {}]",
            x.window.hi
        )));
    }
    Ok(GradedOperator {
        window: x.window.clone(),
        blocks: x
            .blocks
            .iter()
            .filter(|(&(i, j), _)| (0..=n_trunc).contains(&i) && (0..=n_trunc).contains(&j))
            .map(|(k, b)| (*k, b.clone()))
            .collect(),
    })
}

/// `Ψ_N(x) = (N+1)^{-1} Σ_k x ⊗ I_{E^k}` on the output window.
pub fn psi_amplify(spec: &CorrespondenceSpec, x: &GradedOperator, n_trunc: i64, output: &FockWindow) -> Result<GradedOperator> {
    if let Some((&(i, j), _)) = x.blocks.iter().find(|(&(i, j), _)| !(0..=n_trunc).contains(&i) || !(0..=n_trunc).contains(&j)) {
        return Err(LabError::Structure(format!(
            "psi_amplify input has block ({i},{j}) outside [0,{n_trunc}]²"
        )));
    }
    if output.is_two_sided() != x.window.is_two_sided() || output.level != x.window.level {
        return Err(LabError::Structure("psi_amplify output window has a different grading".into()));
    }
    let weight = C64::new(1.0 / (n_trunc as f64 + 1.0), 0.0);
    let mut out = GradedOperator::zero(output);
    if output.is_two_sided() {
        for (&(i, j), b) in &x.blocks {
            for k in (output.lo - i.min(j))..=(output.hi - i.max(j)) {
                out.accumulate(i + k, j + k, spec.amplify_signed(b, k)?.scale(weight))?;
            }
        }
    } else {
        // Running sums along each diagonal: S(a,b) = x(a,b) + S(a-1,b-1) ⊗ I_E.
        let mut sums: BTreeMap<(i64, i64), AMatrix> = BTreeMap::new();
        let mut order: Vec<(i64, i64)> = Vec::new();
        for a in output.degrees() {
            for b in output.degrees() {
                order.push((a, b));
            }
        }
        order.sort_by_key(|&(a, b)| (a.min(b), a, b));
        for (a, b) in order {
            let carried = match sums.get(&(a - 1, b - 1)) {
                Some(prev) => Some(spec.amplify_once(prev)?),
                None => None,
            };
            let own = x.blocks.get(&(a, b)).cloned();
            let s = match (own, carried) {
                (Some(o), Some(c)) => Some(o.add(&c)?),
                (Some(o), None) => Some(o),
                (None, Some(c)) => Some(c),
                (None, None) => None,
            };
            if let Some(s) = s {
                out.insert(a, b, s.scale(weight))?;
                sums.insert((a, b), s);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sided {
    One,
    Two,
}

impl Sided {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sided::One => "one",
            Sided::Two => "two",
        }
    }
}

/// Coefficient of `e_{μ,ν} ⊗ I_{E^l}` in `Ψ_N φ_N(t_μ t_ν*)` (one-sided) or
/// of every band block in `Ψ̂_N φ̂_N(s_μ s_ν*)` (two-sided), counted straight
/// from the definitions of the compression and the amplification.
pub fn schur_oracle(n_trunc: i64, r: i64, s: i64, l: i64, sided: Sided) -> Rational {
    let mut count = 0i64;
    match sided {
        Sided::One => {
            // Surviving compression terms k (block (r+k, s+k) with both
            // degrees ≤ N), amplified by l − k ≥ 0.
            for k in 0..=n_trunc {
                if r + k <= n_trunc && s + k <= n_trunc && k <= l {
                    count += 1;
                }
            }
        }
        Sided::Two => {
            let span = r.abs() + s.abs() + n_trunc + 1;
            for k in -span..=span {
                if 0 <= s + k && s + k <= n_trunc && 0 <= r + k && r + k <= n_trunc {
                    count += 1;
                }
            }
        }
    }
    Rational::new(count, n_trunc + 1)
}

/// The coefficient as printed with the two approximation lemmas:
/// `min(N−|μ|, N−|ν|)/(N+1)` when both degrees are at most `N`, else 0.
pub fn printed_coefficient(n_trunc: i64, r: i64, s: i64) -> Rational {
    if r <= n_trunc && s <= n_trunc {
        Rational::new((n_trunc - r).min(n_trunc - s), n_trunc + 1)
    } else {
        Rational::new(0, 1)
    }
}

/// One measured Schur coefficient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchurRow {
    pub n_trunc: i64,
    pub r: i64,
    pub s: i64,
    pub l: i64,
    pub expected: Rational,
    pub printed: Rational,
    pub measured: f64,
    pub abs_err: f64,
    pub sided: Sided,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SchurTable {
    pub rows: Vec<SchurRow>,
    /// Largest off-band block or in-band residual `‖B_l − c_l G_l‖`.
    pub structure_defect: f64,
}

pub const SCHUR_CSV_HEADER: &str = "N,r,s,l,expected_num,expected_den,measured,abs_err,sided";

impl SchurTable {
    pub fn merge(mut self, other: SchurTable) -> SchurTable {
        self.rows.extend(other.rows);
        self.structure_defect = self.structure_defect.max(other.structure_defect);
        self
    }

    pub fn max_abs_err(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_err).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SCHUR_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.n_trunc,
                row.r,
                row.s,
                row.l,
                row.expected.numer(),
                row.expected.denom(),
                fmt_f64(row.measured),
                fmt_f64(row.abs_err),
                row.sided.as_str()
            ));
        }
        out
    }
}

/// Fixed 17-significant-digit rendering used by every serialized number.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn ratio_to_f64(q: &Rational) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Least-squares coefficient `c` with `block ≈ c·generator`, and the residual.
fn measure_coefficient(block: &AMatrix, generator: &AMatrix) -> (f64, f64) {
    let gg = generator.frobenius_inner(generator).re;
    if gg == 0.0 {
        return (0.0, block.max_abs());
    }
    let c = generator.frobenius_inner(block) / gg;
    let residual = block
        .sub(&generator.scale(c))
        .map(|d| d.max_abs())
        .unwrap_or(f64::INFINITY);
    (c.re, residual.max(c.im.abs()))
}

fn off_band_defect(x: &GradedOperator, band: i64) -> f64 {
    x.blocks
        .iter()
        .filter(|(&(i, j), _)| i - j != band)
        .map(|(_, b)| b.max_abs())
        .fold(0.0, f64::max)
}

/// `Ψ_N φ_N(t_μ t_ν*)` on a one-sided window, with its measured Schur table.
pub fn v_n(
    spec: &CorrespondenceSpec,
    mu: &FockVector,
    nu: &FockVector,
    n_trunc: i64,
    window: &FockWindow,
) -> Result<(GradedOperator, SchurTable)> {
    if window.is_two_sided() {
        return Err(LabError::Structure("V_N acts on the one-sided Fock module".into()));
    }
    let x = toeplitz_op(spec, mu, nu, window)?;
    let y = psi_amplify(spec, &compress(&x, n_trunc)?, n_trunc, window)?;
    let (r, s) = (mu.degree as i64, nu.degree as i64);
    let printed = printed_coefficient(n_trunc, r, s);
    let mut table = SchurTable {
        rows: Vec::new(),
        structure_defect: off_band_defect(&y, r - s),
    };
    for l in 0..=(window.hi - r.max(s)) {
        let g = x.block_or_zero(r + l, s + l);
        let b = y.block_or_zero(r + l, s + l);
        let (measured, residual) = measure_coefficient(&b, &g);
        let expected = schur_oracle(n_trunc, r, s, l, Sided::One);
        table.structure_defect = table.structure_defect.max(residual);
        table.rows.push(SchurRow {
            n_trunc,
            r,
            s,
            l,
            expected,
            printed,
            measured,
            abs_err: (measured - ratio_to_f64(&expected)).abs(),
            sided: Sided::One,
        });
    }
    Ok((y, table))
}

/// `Ψ̂_N φ̂_N(s_μ s_ν*)` on a two-sided window (`n = 1`). Every band block
/// is measured; they should all carry one coefficient.
pub fn w_n(
    spec: &CorrespondenceSpec,
    mu: &FockVector,
    nu: &FockVector,
    n_trunc: i64,
    window: &FockWindow,
) -> Result<(GradedOperator, SchurTable)> {
    if spec.n() != 1 {
        return Err(LabError::Unsupported(format!("W_N requires n = 1, spec has n = {}", spec.n())));
    }
    if !window.is_two_sided() {
        return Err(LabError::Structure("W_N acts on the two-sided Fock module".into()));
    }
    let x = toeplitz_op(spec, mu, nu, window)?;
    let y = psi_amplify(spec, &compress(&x, n_trunc)?, n_trunc, window)?;
    let (r, s) = (mu.degree as i64, nu.degree as i64);
    let printed = printed_coefficient(n_trunc, r, s);
    let mut table = SchurTable {
        rows: Vec::new(),
        structure_defect: off_band_defect(&y, r - s),
    };
    for l in (window.lo - r.min(s))..=(window.hi - r.max(s)) {
        let g = x.block_or_zero(r + l, s + l);
        let b = y.block_or_zero(r + l, s + l);
        let (measured, residual) = measure_coefficient(&b, &g);
        let expected = schur_oracle(n_trunc, r, s, l, Sided::Two);
        table.structure_defect = table.structure_defect.max(residual);
        table.rows.push(SchurRow {
            n_trunc,
            r,
            s,
            l,
            expected,
            printed,
            measured,
            abs_err: (measured - ratio_to_f64(&expected)).abs(),
            sided: Sided::Two,
        });
    }
    Ok((y, table))
}

/// Eventual block data `Σ_l c_l (e ⊗ I_{E^l})`: an element of the Toeplitz
/// algebra described by a band generator and an eventually constant
/// coefficient sequence. The constant `tail` represents the class modulo
/// compacts.
#[derive(Clone, Debug, PartialEq)]
pub struct TailSymbol {
    pub r: i64,
    pub s: i64,
    pub e: AMatrix,
    /// `c_l` for `l = 0..coeffs.len()`; every later offset (and every
    /// negative offset on a two-sided window) uses `tail`.
    pub coeffs: Vec<Rational>,
    pub tail: Rational,
}

impl TailSymbol {
    pub fn constant(r: i64, s: i64, e: AMatrix, c: Rational) -> Self {
        TailSymbol {
            r,
            s,
            e,
            coeffs: Vec::new(),
            tail: c,
        }
    }

    /// One-sided symbol predicted by [`schur_oracle`].
    pub fn from_oracle(mu: &FockVector, nu: &FockVector, n_trunc: i64) -> Result<Self> {
        let (r, s) = (mu.degree as i64, nu.degree as i64);
        let e = hilbert::rank_one(&mu.coords, &nu.coords)?;
        let stab = (n_trunc - r.max(s)).max(0);
        Ok(TailSymbol {
            r,
            s,
            e,
            coeffs: (0..stab).map(|l| schur_oracle(n_trunc, r, s, l, Sided::One)).collect(),
            tail: schur_oracle(n_trunc, r, s, stab, Sided::One),
        })
    }

    pub fn coeff(&self, l: i64) -> Rational {
        if l >= 0 && (l as usize) < self.coeffs.len() {
            self.coeffs[l as usize]
        } else {
            self.tail
        }
    }

    /// Offset from which the sequence is constant.
    pub fn stabilization(&self) -> i64 {
        let mut k = self.coeffs.len();
        while k > 0 && self.coeffs[k - 1] == self.tail {
            k -= 1;
        }
        k as i64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailComparison {
    /// `(l, ‖B_l − c_l G_l‖_max, ‖B_l − c_∞ G_l‖_max)` per band offset.
    pub offsets: Vec<(i64, f64, f64)>,
    /// Worst deviation from the symbol over all offsets.
    pub max_deviation: f64,
    /// Worst deviation from the symbol past its stabilization point.
    pub max_tail_deviation: f64,
    /// Offsets deviating from the symbol by more than `eq_tol`.
    pub flagged: Vec<i64>,
    /// Offsets where the operator differs from its tail: the compact part.
    pub compact_support: Vec<i64>,
}

impl TailComparison {
    /// One past the largest offset of the compact part (0 when empty).
    pub fn compact_support_bound(&self) -> i64 {
        self.compact_support.last().map(|l| l + 1).unwrap_or(0)
    }
}

pub fn tail_compare(spec: &CorrespondenceSpec, x: &GradedOperator, t: &TailSymbol, tol: &Tolerances) -> Result<TailComparison> {
    let band = t.r - t.s;
    let off = off_band_defect(x, band);
    if off > tol.eq_tol {
        return Err(LabError::Structure(format!(
            "operator has blocks off the band i − j = {band} (size {off:.3e})"
        )));
    }
    let w = &x.window;
    let first = if w.is_two_sided() { w.lo - t.r.min(t.s) } else { 0 };
    let last = w.hi - t.r.max(t.s);
    let stab = t.stabilization();
    let tail = ratio_to_f64(&t.tail);
    let mut cmp = TailComparison {
        offsets: Vec::new(),
        max_deviation: 0.0,
        max_tail_deviation: 0.0,
        flagged: Vec::new(),
        compact_support: Vec::new(),
    };
    let mut g = t.e.clone();
    for l in first..=last {
        if w.is_two_sided() {
            g = spec.amplify_signed(&t.e, l)?;
        } else if l > 0 {
            g = spec.amplify_once(&g)?;
        }
        let b = x.block_or_zero(t.r + l, t.s + l);
        let c = ratio_to_f64(&t.coeff(l));
        let dev = b.sub(&g.scale(C64::new(c, 0.0)))?.max_abs();
        let tail_dev = b.sub(&g.scale(C64::new(tail, 0.0)))?.max_abs();
        cmp.max_deviation = cmp.max_deviation.max(dev);
        if l >= stab {
            cmp.max_tail_deviation = cmp.max_tail_deviation.max(dev);
        }
        if dev > tol.eq_tol {
            cmp.flagged.push(l);
        }
        if tail_dev > tol.eq_tol {
            cmp.compact_support.push(l);
        }
        cmp.offsets.push((l, dev, tail_dev));
    }
    Ok(cmp)
}
