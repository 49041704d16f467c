//! Batch front end: configuration, command runners, and serialization.
//!
//! Every output is a pure function of the effective configuration, so two
//! runs with the same inputs write byte-identical files. Timings go to
//! stderr only.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::correspondence::{default_max_degree, CorrespondenceSpec, ValidationReport, PRESET_VERSION};
use crate::error::{LabError, Result};
use crate::expectation::{self, CondExpReport, EpsReport};
use crate::fock::{self, FockVector, FockWindow, SchurTable, Sided};
use crate::hilbert::{AMatrix, DEFAULT_CHOI_CAP};
use crate::lift::{self, BilateralLiftReport, CPAPCertificate, DefectReport, EInftyContext, Generator};
use crate::linalg::{CMat, C64};
use crate::star::{AlgebraSpec, Automorphism, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Validate,
    Schur,
    LiftCheck,
    Expectation,
    Certificate,
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Schur => "schur",
            Command::LiftCheck => "lift-check",
            Command::Expectation => "expectation",
            Command::Certificate => "certificate",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "pimsner-lab", version, about = "Finite-truncation checks for Cuntz-Pimsner algebras of free correspondences")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Compiled-in preset: cuntz2, crossed-z3, twisted2, rotation-m2.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Truncation range `a..b` (inclusive) or a single value.
    #[arg(long = "N")]
    pub n_range: Option<String>,
    /// Fock window bound.
    #[arg(long = "M")]
    pub m: Option<i64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (a directory for `report`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// One automorphism: block permutation plus per-block unitaries, each a
/// row-major matrix of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutomorphismConfig {
    pub perm: Vec<usize>,
    pub unitaries: Vec<Vec<Vec<[f64; 2]>>>,
}

/// A JSON run configuration. Either `preset` or the explicit triple
/// `algebra`, `U`, `automorphisms` must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<String>,
    /// Block sizes `d_s` of `A`.
    pub algebra: Option<Vec<usize>>,
    pub n: Option<usize>,
    /// `U[i][j][s]` is block `s` of the `(i, j)` entry, row-major.
    #[serde(rename = "U")]
    pub u: Option<Vec<Vec<Vec<Vec<Vec<[f64; 2]>>>>>>,
    pub automorphisms: Option<Vec<AutomorphismConfig>>,
    pub max_degree: Option<usize>,
    #[serde(rename = "M")]
    pub m: Option<i64>,
    pub two_sided: Option<bool>,
    #[serde(rename = "N")]
    pub n_range: Option<[i64; 2]>,
    #[serde(rename = "certificate_N")]
    pub certificate_n_range: Option<[i64; 2]>,
    /// Largest generator degree `r, s`.
    pub band: Option<usize>,
    /// Largest conditional-expectation level.
    pub levels: Option<usize>,
    /// Largest level `K` in the lift-defect suite.
    pub lift_levels: Option<usize>,
    pub lift_window: Option<i64>,
    pub tolerances: Option<Tolerances>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub choi_cap: Option<usize>,
}

/// Fully resolved settings, printed into every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EffectiveConfig {
    pub preset: Option<PresetTag>,
    pub algebra: Vec<usize>,
    pub n: usize,
    pub max_degree: usize,
    #[serde(rename = "M")]
    pub m: i64,
    pub two_sided: bool,
    #[serde(rename = "N")]
    pub n_range: [i64; 2],
    #[serde(rename = "certificate_N")]
    pub certificate_n_range: [i64; 2],
    pub band: usize,
    pub levels: usize,
    pub lift_levels: usize,
    pub lift_window: i64,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub choi_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PresetTag {
    pub name: String,
    pub version: String,
}

/// Upper bound on stored complex entries in certificate factor tables.
pub const TABLE_BUDGET: usize = 1 << 25;

/// Number of seeded vectors in the ε̄ contraction suite.
pub const EPS_TRIALS: usize = 100;

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> LabError {
    LabError::Config(format!("{field}: {msg}"))
}

/// Re-tags an error from the library as a configuration error on `field`.
fn field_err(field: &str, e: LabError) -> LabError {
    match e {
        LabError::Config(msg) => cfg_err(field, msg),
        other => cfg_err(field, other),
    }
}

/// Parses `a..b` (inclusive) or `a`.
pub fn parse_range(s: &str) -> Result<[i64; 2]> {
    let parse = |t: &str| t.trim().parse::<i64>().map_err(|_| cfg_err("N", format!("cannot parse '{s}' as a..b")));
    let r = match s.split_once("..") {
        Some((a, b)) => [parse(a)?, parse(b.trim_start_matches('='))?],
        None => {
            let v = parse(s)?;
            [v, v]
        }
    };
    if r[0] < 0 || r[0] > r[1] {
        return Err(cfg_err("N", format!("range {}..{} is empty or negative", r[0], r[1])));
    }
    Ok(r)
}

fn cmat(field: &str, rows: &[Vec<[f64; 2]>], d: usize) -> Result<CMat> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(cfg_err(field, format!("expected a {d}x{d} matrix of [re, im] pairs")));
    }
    Ok(CMat::from_fn(d, d, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| cfg_err("config", format!("{}: {e}", path.display())))
    }

    /// Builds the correspondence; does not validate it.
    pub fn build_spec(&self) -> Result<CorrespondenceSpec> {
        let custom = self.algebra.is_some() || self.u.is_some() || self.automorphisms.is_some();
        let spec = match (&self.preset, custom) {
            (Some(_), true) => return Err(cfg_err("preset", "give either a preset or algebra/U/automorphisms, not both")),
            (Some(name), false) => {
                let spec = CorrespondenceSpec::preset(name).map_err(|e| field_err("preset", e))?;
                match self.max_degree {
                    Some(k) => CorrespondenceSpec::with_max_degree(spec.algebra().clone(), spec.u().clone(), spec.alphas().to_vec(), k)?.named(name),
                    None => spec,
                }
            }
            (None, false) => return Err(cfg_err("preset", "no preset and no explicit correspondence given")),
            (None, true) => {
                let dims = self.algebra.clone().ok_or_else(|| cfg_err("algebra", "missing"))?;
                let alg = AlgebraSpec::new(dims).map_err(|e| field_err("algebra", e))?;
                let autos = self.automorphisms.as_ref().ok_or_else(|| cfg_err("automorphisms", "missing"))?;
                let n = autos.len();
                if n == 0 {
                    return Err(cfg_err("automorphisms", "need at least one"));
                }
                if let Some(k) = self.n {
                    if k != n {
                        return Err(cfg_err("n", format!("n = {k} but {n} automorphisms given")));
                    }
                }
                let alphas = autos
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let field = format!("automorphisms[{i}]");
                        if a.unitaries.len() != alg.num_blocks() {
                            return Err(cfg_err(&field, format!("need {} unitaries", alg.num_blocks())));
                        }
                        let us = a
                            .unitaries
                            .iter()
                            .zip(alg.block_dims())
                            .map(|(m, &d)| cmat(&field, m, d))
                            .collect::<Result<Vec<_>>>()?;
                        Automorphism::new(&alg, a.perm.clone(), us).map_err(|e| field_err(&field, e))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let u = self.u.as_ref().ok_or_else(|| cfg_err("U", "missing"))?;
                if u.len() != n || u.iter().any(|row| row.len() != n) {
                    return Err(cfg_err("U", format!("expected {n}x{n} entries")));
                }
                let mut blocks: Vec<CMat> = alg.block_dims().iter().map(|&d| CMat::zeros(n * d, n * d)).collect();
                for i in 0..n {
                    for j in 0..n {
                        let entry = &u[i][j];
                        if entry.len() != alg.num_blocks() {
                            return Err(cfg_err("U", format!("entry ({i},{j}) needs {} blocks", alg.num_blocks())));
                        }
                        for (s, &d) in alg.block_dims().iter().enumerate() {
                            let m = cmat("U", &entry[s], d)?;
                            blocks[s].view_mut((i * d, j * d), (d, d)).copy_from(&m);
                        }
                    }
                }
                let u = AMatrix::from_blocks(&alg, n, n, blocks)?;
                let k = self.max_degree.unwrap_or_else(|| default_max_degree(n));
                CorrespondenceSpec::with_max_degree(alg, u, alphas, k)?.named("custom")
            }
        };
        Ok(spec)
    }

    /// Resolves defaults and checks the window against the requested ranges.
    pub fn resolve(&self, spec: &CorrespondenceSpec) -> Result<EffectiveConfig> {
        let n = spec.n();
        let tol = self.tolerances.unwrap_or_default();
        tol.validate().map_err(|e| field_err("tolerances", e))?;
        let two_sided = self.two_sided.unwrap_or(n == 1);
        if two_sided && n != 1 {
            return Err(cfg_err("two_sided", format!("two-sided windows need n = 1, spec has n = {n}")));
        }
        let m = self.m.unwrap_or_else(|| fock::default_window(n).min(spec.max_degree() as i64));
        if m < 0 {
            return Err(cfg_err("M", "must be nonnegative"));
        }
        if m as usize > spec.max_degree() {
            return Err(cfg_err("M", format!("window {m} exceeds the tensor-power cache (max_degree = {})", spec.max_degree())));
        }
        let n_range = self.n_range.unwrap_or([1, m.min(8)]);
        if n_range[0] < 0 || n_range[0] > n_range[1] {
            return Err(cfg_err("N", "range is empty or negative"));
        }
        if n_range[1] > m {
            return Err(cfg_err("N", format!("N = {} exceeds the window M = {m}", n_range[1])));
        }
        let certificate_n_range = self
            .certificate_n_range
            .unwrap_or(if n == 1 { n_range } else { [n_range[0].min(4), n_range[1].min(4)] });
        if certificate_n_range[0] < 0 || certificate_n_range[0] > certificate_n_range[1] {
            return Err(cfg_err("certificate_N", "range is empty or negative"));
        }
        let band = self.band.unwrap_or(4.min(m as usize));
        if band as i64 > m {
            return Err(cfg_err("band", format!("generator degree {band} exceeds the window M = {m}")));
        }
        let levels = self.levels.unwrap_or(3);
        if levels + 1 > spec.max_degree() {
            return Err(cfg_err("levels", format!("level {} exceeds max_degree = {}", levels + 1, spec.max_degree())));
        }
        let lift_levels = self.lift_levels.unwrap_or(2);
        let lift_window = self.lift_window.unwrap_or(m.min(4));
        if lift_window < 0 || lift_window as usize + lift_levels > spec.max_degree() || lift_window > m {
            return Err(cfg_err("lift_window", format!("window {lift_window} with level {lift_levels} does not fit (M = {m}, max_degree = {})", spec.max_degree())));
        }
        let preset = self.preset.as_ref().map(|name| PresetTag {
            name: name.clone(),
            version: PRESET_VERSION.to_string(),
        });
        Ok(EffectiveConfig {
            preset,
            algebra: spec.algebra().block_dims().to_vec(),
            n,
            max_degree: spec.max_degree(),
            m,
            two_sided,
            n_range,
            certificate_n_range,
            band,
            levels,
            lift_levels,
            lift_window,
            tolerances: tol,
            seed: self.seed.unwrap_or(0),
            choi_cap: self.choi_cap.unwrap_or(DEFAULT_CHOI_CAP),
        })
    }
}

/// JSON formatter that prints every float with 17 significant digits.
struct Sig17<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{}", fock::fmt_f64(value))
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with fixed 17-significant-digit floats (non-finite as null).
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[derive(Clone, Debug, Serialize)]
pub struct SchurSummary {
    pub rows: usize,
    pub max_abs_err: f64,
    pub structure_defect: f64,
    /// Rows where the printed coefficient differs from the counted one.
    pub printed_mismatches: usize,
    /// Largest `|c − 1|` for the identity generator on the two-sided
    /// window (`None` when no such rows exist).
    pub unitality_defect: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchurResult {
    pub summary: SchurSummary,
    pub table: SchurTable,
}

#[derive(Clone, Debug, Serialize)]
pub struct LiftCheckResult {
    pub bilateral: Vec<BilateralLiftReport>,
    pub defects: Vec<DefectReport>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectationResult {
    pub levels: Vec<CondExpReport>,
    pub eps: Vec<EpsReport>,
    pub pass: bool,
}

/// Everything a run produced.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ReportBundle {
    pub validation: Option<ValidationReport>,
    pub schur: Option<SchurResult>,
    pub lift_check: Option<LiftCheckResult>,
    pub expectation: Option<ExpectationResult>,
    pub certificates: Vec<CPAPCertificate>,
}

impl ReportBundle {
    /// Overall pass iff every suite that ran passes.
    pub fn pass(&self) -> bool {
        self.validation.as_ref().is_none_or(|v| v.pass)
            && self.schur.as_ref().is_none_or(|s| s.summary.pass)
            && self.lift_check.as_ref().is_none_or(|l| l.pass)
            && self.expectation.as_ref().is_none_or(|e| e.pass)
            && self.certificates.iter().all(|c| c.pass)
    }

    pub fn suites(&self) -> Vec<(&'static str, bool)> {
        let mut out = Vec::new();
        if let Some(v) = &self.validation {
            out.push(("validate", v.pass));
        }
        if let Some(s) = &self.schur {
            out.push(("schur", s.summary.pass));
        }
        if let Some(l) = &self.lift_check {
            out.push(("lift-check", l.pass));
        }
        if let Some(e) = &self.expectation {
            out.push(("expectation", e.pass));
        }
        if !self.certificates.is_empty() {
            out.push(("certificate", self.certificates.iter().all(|c| c.pass)));
        }
        out
    }
}

pub fn run_schur(spec: &CorrespondenceSpec, cfg: &EffectiveConfig) -> Result<SchurResult> {
    let tol = &cfg.tolerances;
    let gens = Generator::all_up_to(cfg.band, cfg.seed);
    let one = FockWindow::one_sided(spec, cfg.m)?;
    let two = if cfg.two_sided { Some(FockWindow::two_sided(spec, cfg.m)?) } else { None };
    let mut table = SchurTable::default();
    for n_trunc in cfg.n_range[0]..=cfg.n_range[1] {
        for g in &gens {
            let (mu, nu) = g.vectors(spec);
            table = table.merge(fock::v_n(spec, &mu, &nu, n_trunc, &one)?.1);
            if let Some(w) = &two {
                table = table.merge(fock::w_n(spec, &mu, &nu, n_trunc, w)?.1);
            }
        }
    }
    let unit_rows: Vec<f64> = table
        .rows
        .iter()
        .filter(|r| r.sided == Sided::Two && r.r == 0 && r.s == 0)
        .map(|r| (r.measured - 1.0).abs())
        .collect();
    let summary = SchurSummary {
        rows: table.rows.len(),
        max_abs_err: table.max_abs_err(),
        structure_defect: table.structure_defect,
        printed_mismatches: table.rows.iter().filter(|r| r.printed != r.expected).count(),
        unitality_defect: (!unit_rows.is_empty()).then(|| unit_rows.iter().copied().fold(0.0, f64::max)),
        pass: table.max_abs_err() <= tol.eq_tol && table.structure_defect <= tol.eq_tol,
    };
    Ok(SchurResult { summary, table })
}

pub fn run_lift_check(spec: &CorrespondenceSpec, cfg: &EffectiveConfig) -> Result<LiftCheckResult> {
    let tol = &cfg.tolerances;
    let mut bilateral = Vec::new();
    if spec.n() == 1 && cfg.two_sided {
        let w = FockWindow::two_sided(spec, cfg.m)?;
        for g in Generator::all_up_to(cfg.band, cfg.seed) {
            let (mu, nu) = g.vectors(spec);
            bilateral.push(lift::bilateral_lift(spec, &mu, &nu, &w, cfg.choi_cap, tol)?.1);
        }
    }
    let w = FockWindow::one_sided(spec, cfg.lift_window)?;
    let band = cfg.band.min(2).min(cfg.lift_window as usize);
    let mut defects = Vec::new();
    for level in 0..=cfg.lift_levels {
        let ctx = EInftyContext::new(spec, level)?;
        for i in 0..=level {
            for g in Generator::all_up_to(band, cfg.seed) {
                let (mu, nu): (FockVector, FockVector) = g.vectors(spec);
                let m = spec.rank(i);
                let b = AMatrix::sample(spec.algebra(), m, m, g.seed.wrapping_add(1));
                let c = AMatrix::sample(spec.algebra(), m, m, g.seed.wrapping_add(2));
                defects.push(lift::lift_defect(&ctx, &mu, &nu, &b, &c, i, &w, tol)?.1);
            }
        }
    }
    let pass = bilateral.iter().all(|b| b.pass) && defects.iter().all(|d| d.pass);
    Ok(LiftCheckResult { bilateral, defects, pass })
}

pub fn run_expectation(spec: &CorrespondenceSpec, cfg: &EffectiveConfig) -> Result<ExpectationResult> {
    let tol = &cfg.tolerances;
    let mut levels = Vec::new();
    let mut eps = Vec::new();
    for k in 0..=cfg.levels {
        levels.push(expectation::verify_cond_exp(spec, k, cfg.seed, tol)?);
        eps.push(expectation::verify_eps(spec, k, EPS_TRIALS, cfg.seed, cfg.choi_cap, tol)?);
    }
    let pass = levels.iter().all(|l| l.pass) && eps.iter().all(|e| e.pass);
    Ok(ExpectationResult { levels, eps, pass })
}

/// Window used for the certificate at truncation `N`.
pub fn certificate_window(spec: &CorrespondenceSpec, cfg: &EffectiveConfig, n_trunc: i64) -> Result<FockWindow> {
    if cfg.two_sided {
        if n_trunc > cfg.m {
            return Err(cfg_err("certificate_N", format!("N = {n_trunc} exceeds the window M = {}", cfg.m)));
        }
        return FockWindow::two_sided(spec, cfg.m);
    }
    let hi = (n_trunc + 1).min(cfg.m.max(n_trunc));
    let w = FockWindow::one_sided(spec, hi).map_err(|e| field_err("certificate_N", e))?;
    let r = w.total_rank();
    let d: usize = (0..=n_trunc).map(|k| w.rank(k)).sum();
    let sq: usize = spec.algebra().block_dims().iter().map(|x| x * x).sum();
    let entries = 2 * r * r * d * d * sq * sq;
    if entries > TABLE_BUDGET {
        return Err(cfg_err(
            "certificate_N",
            format!("factor tables at N = {n_trunc} need {entries} complex entries (budget {TABLE_BUDGET}); lower N"),
        ));
    }
    Ok(w)
}

pub fn run_certificates(spec: &CorrespondenceSpec, cfg: &EffectiveConfig, range: [i64; 2]) -> Result<Vec<CPAPCertificate>> {
    let mut out = Vec::new();
    for n_trunc in range[0]..=range[1] {
        let w = certificate_window(spec, cfg, n_trunc)?;
        let band = cfg.band.min(w.hi() as usize);
        let gens = Generator::all_up_to(band, cfg.seed);
        out.push(lift::cpap_certificate(spec, n_trunc, &gens, &w, cfg.seed, cfg.choi_cap, &cfg.tolerances)?.0);
    }
    Ok(out)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'static str,
    tool_version: &'static str,
    config: &'a EffectiveConfig,
    pass: bool,
    result: &'a T,
}

fn envelope<T: Serialize>(command: &'static str, cfg: &EffectiveConfig, pass: bool, result: &T) -> Result<String> {
    to_json(&Envelope {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        pass,
        result,
    })
}

fn certificates_json(certs: &[CPAPCertificate]) -> Result<String> {
    if certs.len() == 1 {
        to_json(&certs[0])
    } else {
        to_json(&certs)
    }
}

/// Result of a command: the bundle and the files it renders to, in order.
pub struct Outcome {
    pub bundle: ReportBundle,
    /// `(file name, contents)`; a single entry for every command but `report`.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.bundle.pass()
    }
}

/// Runs `command`. Validation failure stops the run with a violation.
pub fn run(command: Command, spec: &CorrespondenceSpec, cfg: &EffectiveConfig, format: Format) -> Result<Outcome> {
    if format == Format::Csv && !matches!(command, Command::Schur) {
        return Err(cfg_err("format", format!("csv output is only available for schur, not {}", command.name())));
    }
    let mut bundle = ReportBundle::default();
    let validation = spec.validate(&cfg.tolerances);
    let valid = validation.pass;
    bundle.validation = Some(validation);
    let mut files = Vec::new();
    if !valid || command == Command::Validate {
        let v = bundle.validation.as_ref().expect("set above");
        files.push(("validate.json".to_string(), envelope("validate", cfg, v.pass, v)?));
        return Ok(Outcome { bundle, files });
    }
    match command {
        Command::Validate => unreachable!(),
        Command::Schur => {
            let s = run_schur(spec, cfg)?;
            let text = match format {
                Format::Csv => s.table.to_csv(),
                Format::Json => envelope("schur", cfg, s.summary.pass, &s)?,
            };
            files.push((format!("schur.{}", if format == Format::Csv { "csv" } else { "json" }), text));
            bundle.schur = Some(s);
        }
        Command::LiftCheck => {
            let l = run_lift_check(spec, cfg)?;
            files.push(("lift-check.json".into(), envelope("lift-check", cfg, l.pass, &l)?));
            bundle.lift_check = Some(l);
        }
        Command::Expectation => {
            let e = run_expectation(spec, cfg)?;
            files.push(("expectation.json".into(), envelope("expectation", cfg, e.pass, &e)?));
            bundle.expectation = Some(e);
        }
        Command::Certificate => {
            let certs = run_certificates(spec, cfg, cfg.certificate_n_range)?;
            files.push(("certificate.json".into(), certificates_json(&certs)?));
            bundle.certificates = certs;
        }
        Command::Report => {
            let v = bundle.validation.as_ref().expect("set above");
            files.push(("validate.json".into(), envelope("validate", cfg, v.pass, v)?));
            let s = run_schur(spec, cfg)?;
            files.push(("schur.csv".into(), s.table.to_csv()));
            files.push(("schur.json".into(), envelope("schur", cfg, s.summary.pass, &s.summary)?));
            bundle.schur = Some(s);
            let l = run_lift_check(spec, cfg)?;
            files.push(("lift-check.json".into(), envelope("lift-check", cfg, l.pass, &l)?));
            bundle.lift_check = Some(l);
            let e = run_expectation(spec, cfg)?;
            files.push(("expectation.json".into(), envelope("expectation", cfg, e.pass, &e)?));
            bundle.expectation = Some(e);
            let certs = run_certificates(spec, cfg, cfg.certificate_n_range)?;
            files.push(("certificate.json".into(), certificates_json(&certs)?));
            bundle.certificates = certs;
            #[derive(Serialize)]
            struct Suite {
                suite: &'static str,
                pass: bool,
            }
            let suites: Vec<Suite> = bundle.suites().into_iter().map(|(suite, pass)| Suite { suite, pass }).collect();
            files.push(("report.json".into(), envelope("report", cfg, bundle.pass(), &suites)?));
        }
    }
    Ok(Outcome { bundle, files })
}

/// Exit code for an error: 1 for verification failures, 2 otherwise.
pub fn exit_code_for(err: &LabError) -> i32 {
    match err {
        LabError::Validation(_) | LabError::Structure(_) => 1,
        _ => 2,
    }
}

/// Builds the configuration from CLI flags (overriding a config file).
pub fn config_from_cli(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.preset {
        cfg.preset = Some(p.clone());
    }
    if let Some(r) = &cli.n_range {
        let r = parse_range(r)?;
        cfg.n_range = Some(r);
        if cfg.certificate_n_range.is_none() {
            cfg.certificate_n_range = Some(r);
        }
    }
    if let Some(m) = cli.m {
        cfg.m = Some(m);
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

/// Writes the outcome: into `out` (a directory for `report`), or stdout.
pub fn write_outcome(command: Command, outcome: &Outcome, out: Option<&Path>) -> Result<()> {
    match (command, out) {
        (Command::Report, Some(dir)) => {
            std::fs::create_dir_all(dir)?;
            for (name, text) in &outcome.files {
                std::fs::write(dir.join(name), text)?;
            }
        }
        (_, Some(path)) => {
            let text = &outcome.files.last().expect("every command renders a file").1;
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
        }
        (_, None) => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let text = &outcome.files.last().expect("every command renders a file").1;
            lock.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Full CLI entry point; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let start = std::time::Instant::now();
    let result = (|| -> Result<(Outcome, Option<PathBuf>)> {
        let cfg = config_from_cli(&cli)?;
        let spec = cfg.build_spec()?;
        let eff = cfg.resolve(&spec)?;
        let format = cli.format.unwrap_or(if cli.command == Command::Schur { Format::Csv } else { Format::Json });
        let outcome = run(cli.command, &spec, &eff, format)?;
        Ok((outcome, cfg.out.clone()))
    })();
    match result {
        Ok((outcome, out)) => {
            if let Err(e) = write_outcome(cli.command, &outcome, out.as_deref()) {
                eprintln!("error: {e}");
                return 2;
            }
            for (suite, pass) in outcome.bundle.suites() {
                eprintln!("{suite}: {}", if pass { "pass" } else { "FAIL" });
            }
            eprintln!("elapsed: {:.2}s", start.elapsed().as_secs_f64());
            if outcome.pass() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
