//! Command-line front end. Every subcommand writes one JSON report and maps
//! its outcome to an exit code.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::algebra::{self, AlgebraError, AlgebraName, IdentityTolerances, LieAlgebra};
use crate::bianchi::{self, BianchiError, NullspaceOptions, PropositionStatus};
use crate::geometry::{self, AbFamily, GeometryError, MetricParams};
use crate::numerics::{Method, NumericsError, RankPolicy};
use crate::roots::{self, CartanChoice, RootsError};

pub const SCHEMA_VERSION: &str = "1.0.0";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

const DEFAULT_ALGEBRAS: [&str; 8] = ["su2", "su3", "su4", "so5", "so7", "sp2", "sp3", "g2"];
const DEFAULT_PROPOSITION: [&str; 4] = ["su3", "sp2", "g2", "su4"];
const DEFAULT_TABLE1: [&str; 6] = ["su3", "su4", "sp2", "sp3", "so7", "g2"];

#[derive(Debug, Parser)]
#[command(
    name = "weylhom",
    version,
    about = "Lie-algebraic and curvature verification workbench"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Algebras, e.g. su3 sp2 g2.
    #[arg(long = "algebra", num_args = 1.., global = true)]
    pub algebras: Vec<String>,
    /// Tolerance overrides as key=value.
    #[arg(long = "tol", num_args = 1.., global = true)]
    pub tol: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structure-constant identities (Jacobi, orthonormality, Casimir, coboundary).
    VerifyIdentities(IdentityArgs),
    /// Nullspace of the second-Bianchi system.
    VerifyProposition(PropositionArgs),
    /// Ranks and minimal adjoint ranks.
    Table1(Table1Args),
    /// Curvature spectrum, Weyl homogeneity and the ∇R obstruction.
    Geometry(GeometryArgs),
}

#[derive(Debug, Args, Default)]
pub struct IdentityArgs {
    /// Structure tensors exported as JSON, checked in addition to --algebra.
    #[arg(long = "algebra-json", num_args = 1..)]
    pub algebra_json: Vec<PathBuf>,
    /// Random inputs per coboundary identity.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Apply a seeded random orthogonal basis change first.
    #[arg(long)]
    pub rotate: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restriction {
    Restricted,
    Unrestricted,
    Both,
}

#[derive(Debug, Args, Default)]
pub struct PropositionArgs {
    #[arg(long, conflicts_with_all = ["unrestricted", "both"])]
    pub restricted: bool,
    #[arg(long, conflicts_with_all = ["restricted", "both"])]
    pub unrestricted: bool,
    #[arg(long, conflicts_with_all = ["restricted", "unrestricted"])]
    pub both: bool,
    /// Force the Gram-matrix route.
    #[arg(long, conflicts_with = "dense")]
    pub gram: bool,
    /// Force the dense triangular-factor route.
    #[arg(long)]
    pub dense: bool,
    /// Abort when the factorization would need more memory than this.
    #[arg(long)]
    pub memory_cap_mb: Option<usize>,
    #[arg(long)]
    pub rotate: Option<u64>,
    /// Write the assembled systems as triplet files into this directory.
    #[arg(long)]
    pub export_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct Table1Args {
    #[arg(long)]
    pub rotate: Option<u64>,
    /// Use the centralizer of a random element seeded with this value.
    #[arg(long)]
    pub random_cartan: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct GeometryArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<i8>,
    /// Entries of D as i,j=value (1-based); the skew partner is implied.
    #[arg(long = "d", num_args = 1..)]
    pub d: Vec<String>,
    /// Set every entry of D to zero.
    #[arg(long)]
    pub d_zero: bool,
    #[arg(long, value_enum)]
    pub ab_family: Option<AbFamilyArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AbFamilyArg {
    Constant,
    Sine,
}

/// Settings file; every field mirrors a flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algebras: Option<Vec<String>>,
    pub tolerances: BTreeMap<String, f64>,
    pub restriction: Option<Restriction>,
    pub gram: Option<bool>,
    pub dense: Option<bool>,
    pub memory_cap_mb: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub rotate: Option<u64>,
    pub random_cartan: Option<u64>,
    pub samples: Option<usize>,
    pub algebra_json: Option<Vec<PathBuf>>,
    pub export_dir: Option<PathBuf>,
    pub geometry: GeometryConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub epsilon: Option<i8>,
    /// Entries as "i,j=value".
    pub d: Option<Vec<String>>,
    pub ab_family: Option<AbFamily>,
    pub samples: Option<usize>,
    pub scale: Option<f64>,
}

/// Tolerances resolved from defaults and overrides.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    pub identities: IdentityTolerances,
    pub rank: RankPolicy,
    pub classification: f64,
    pub spectrum: f64,
    pub weyl: f64,
    pub obstruction: f64,
    pub obstruction_zero: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identities: IdentityTolerances::default(),
            rank: RankPolicy::default(),
            classification: 1e-8,
            spectrum: 1e-6,
            weyl: 1e-6,
            obstruction: 1e-4,
            obstruction_zero: 1e-7,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 13] = [
        "jacobi",
        "orthonormality",
        "antisymmetry",
        "casimir",
        "coboundary",
        "rel_threshold",
        "min_gap_ratio",
        "gram_mode_row_cutoff",
        "classification",
        "spectrum",
        "weyl",
        "obstruction",
        "obstruction_zero",
    ];

    pub fn set(&mut self, key: &str, v: f64) -> Result<(), CliError> {
        if !v.is_finite() || v < 0.0 {
            return Err(CliError::Usage(format!(
                "tolerance {key} must be a finite non-negative number"
            )));
        }
        match key {
            "jacobi" => self.identities.jacobi = v,
            "orthonormality" => self.identities.orthonormality = v,
            "antisymmetry" => self.identities.antisymmetry = v,
            "casimir" => self.identities.casimir = v,
            "coboundary" => self.identities.coboundary = v,
            "rel_threshold" => self.rank.rel_threshold = v,
            "min_gap_ratio" => self.rank.min_gap_ratio = v,
            "gram_mode_row_cutoff" => self.rank.gram_mode_row_cutoff = v as usize,
            "classification" => self.classification = v,
            "spectrum" => self.spectrum = v,
            "weyl" => self.weyl = v,
            "obstruction" => self.obstruction = v,
            "obstruction_zero" => self.obstruction_zero = v,
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown tolerance {key:?}; known keys: {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        self.rank.validate().map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<AlgebraError> for CliError {
    fn from(e: AlgebraError) -> Self {
        match e {
            AlgebraError::Numerics(n) => CliError::Numerical(n.to_string()),
            AlgebraError::Construction(s) => CliError::Numerical(s),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::InvalidParams(_) | GeometryError::BadIndex(_) | GeometryError::DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

/// Outcome of one subcommand: the report and its exit code.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub exit_code: i32,
}

/// Effective settings after merging the config file and flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub tol: Tolerances,
    pub seed: u64,
}

fn parse_kv(s: &str) -> Result<(String, f64), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected key=value, got {s:?}")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("not a number in {s:?}")))?;
    Ok((k.trim().to_string(), v))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Merge flags over the config file. Only global flags are merged here;
/// subcommand flags are merged by the subcommand.
pub fn resolve(global: &GlobalArgs) -> Result<Resolved, CliError> {
    let mut config = match &global.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if !global.algebras.is_empty() {
        config.algebras = Some(global.algebras.clone());
    }
    for kv in &global.tol {
        let (k, v) = parse_kv(kv)?;
        config.tolerances.insert(k, v);
    }
    if global.seed.is_some() {
        config.seed = global.seed;
    }
    if global.threads.is_some() {
        config.threads = global.threads;
    }
    if global.out.is_some() {
        config.out = global.out.clone();
    }
    let mut tol = Tolerances::default();
    for (k, v) in &config.tolerances {
        tol.set(k, *v)?;
    }
    let seed = config.seed.unwrap_or(1);
    Ok(Resolved { config, tol, seed })
}

fn algebra_names(cfg: &RunConfig, default: &[&str]) -> Result<Vec<AlgebraName>, CliError> {
    let list: Vec<String> = match &cfg.algebras {
        Some(v) => v.clone(),
        None => default.iter().map(|s| s.to_string()).collect(),
    };
    list.iter()
        .map(|s| s.parse::<AlgebraName>().map_err(CliError::from))
        .collect()
}

fn build(name: AlgebraName, rotate: Option<u64>) -> Result<LieAlgebra, CliError> {
    let g = algebra::build_named(name)?;
    Ok(match rotate {
        Some(seed) => algebra::rotate_basis(&g, seed),
        None => g,
    })
}

fn envelope(command: &str, r: &Resolved, status: &str, exit_code: i32, results: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": status,
        "exit_code": exit_code,
        "seed": r.seed,
        "tolerances": r.tol,
        "results": results,
    })
}

fn status_word(code: i32) -> &'static str {
    match code {
        EXIT_PASS => "pass",
        EXIT_FAIL => "fail",
        EXIT_NUMERICAL => "numerical_failure",
        _ => "usage_error",
    }
}

/// Run `f` on every item, in parallel, keeping input order.
fn map_ordered<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

pub fn cmd_verify_identities(r: &Resolved, args: &IdentityArgs) -> Result<Outcome, CliError> {
    let mut cfg = r.config.clone();
    if !args.algebra_json.is_empty() {
        cfg.algebra_json = Some(args.algebra_json.clone());
    }
    let samples = args.samples.or(cfg.samples).unwrap_or(100);
    let rotate = args.rotate.or(cfg.rotate);

    let files = cfg.algebra_json.clone().unwrap_or_default();
    let mut algebras: Vec<(String, LieAlgebra)> = Vec::new();
    if cfg.algebras.is_some() || files.is_empty() {
        for name in algebra_names(&cfg, &DEFAULT_ALGEBRAS)? {
            algebras.push((name.to_string(), build(name, rotate)?));
        }
    }
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let g = LieAlgebra::from_json(&v)?;
        algebras.push((path.display().to_string(), g));
    }

    let tol = r.tol.identities;
    let results = map_ordered(&algebras, |(label, g)| {
        let t = Instant::now();
        let rep = algebra::check_identities(g, samples, r.seed);
        let failures = rep.failures(&tol);
        (
            label.clone(),
            g.dim(),
            g.below_hypothesis(),
            rep.summary(),
            failures,
            t.elapsed().as_secs_f64(),
        )
    });
    let mut code = EXIT_PASS;
    let mut out = Vec::new();
    for (label, dim, below, summary, failures, secs) in results {
        if let Some((name, value)) = failures.first() {
            eprintln!("{label}: FAIL first failing check {name} = {value:.3e}");
            code = EXIT_FAIL;
        } else {
            eprintln!("{label}: all identities pass");
        }
        out.push(json!({
            "algebra": label,
            "dim": dim,
            "below_hypothesis": below,
            "status": if failures.is_empty() { "pass" } else { "fail" },
            "first_failure": failures.first().map(|f| f.0),
            "failures": failures.iter().map(|(n, v)| json!({"check": n, "value": v})).collect::<Vec<_>>(),
            "residuals": summary,
            "wall_time_s": secs,
        }));
    }
    Ok(Outcome {
        report: envelope("verify-identities", r, status_word(code), code, Value::Array(out)),
        exit_code: code,
    })
}

pub fn cmd_verify_proposition(r: &Resolved, args: &PropositionArgs) -> Result<Outcome, CliError> {
    let cfg = &r.config;
    let restriction = if args.restricted {
        Restriction::Restricted
    } else if args.unrestricted {
        Restriction::Unrestricted
    } else if args.both {
        Restriction::Both
    } else {
        cfg.restriction.unwrap_or(Restriction::Both)
    };
    let method = if args.gram || (!args.dense && cfg.gram == Some(true)) {
        Some(Method::Gram)
    } else if args.dense || cfg.dense == Some(true) {
        Some(Method::DenseSvd)
    } else {
        None
    };
    let opts = NullspaceOptions {
        policy: r.tol.rank,
        method,
        memory_cap_bytes: args.memory_cap_mb.or(cfg.memory_cap_mb).map(|mb| mb << 20),
        classification_tol: r.tol.classification,
    };
    let rotate = args.rotate.or(cfg.rotate);
    let export = args.export_dir.clone().or(cfg.export_dir.clone());
    let names = algebra_names(cfg, &DEFAULT_PROPOSITION)?;

    let run = |name: &AlgebraName| -> Result<(Value, i32), CliError> {
        let g = build(*name, rotate)?;
        if let Some(dir) = &export {
            std::fs::create_dir_all(dir)?;
            for restricted in [false, true] {
                let sys = bianchi::assemble_system(&g, restricted).map_err(bianchi_err)?;
                let tag = if restricted { "restricted" } else { "unrestricted" };
                let f = std::fs::File::create(dir.join(format!("{name}_{tag}.triplets")))?;
                sys.write_triplets(std::io::BufWriter::new(f))?;
            }
        }
        match restriction {
            Restriction::Both => {
                let rep = bianchi::verify_proposition(&g, &opts).map_err(bianchi_err)?;
                let code = match rep.status {
                    PropositionStatus::Pass | PropositionStatus::OutsideHypothesis => EXIT_PASS,
                    PropositionStatus::Fail => EXIT_FAIL,
                    PropositionStatus::Ambiguous => EXIT_NUMERICAL,
                };
                eprintln!(
                    "{name}: {:?} dims ({}, {}) expected ({}, 0)",
                    rep.status, rep.unrestricted.dimension, rep.restricted.dimension, rep.expected_unrestricted
                );
                Ok((serde_json::to_value(&rep).expect("report serializes"), code))
            }
            single => {
                let restricted = single == Restriction::Restricted;
                let sys = bianchi::assemble_system(&g, restricted).map_err(bianchi_err)?;
                let rep = bianchi::nullspace(&g, &sys, &opts).map_err(bianchi_err)?;
                let n = g.dim();
                let expected = if restricted { 0 } else { n * n };
                let status = if rep.ambiguous {
                    PropositionStatus::Ambiguous
                } else if g.below_hypothesis() {
                    PropositionStatus::OutsideHypothesis
                } else if rep.dimension == expected
                    && rep.max_phi_norm <= opts.classification_tol
                    && rep.max_k_ad_residual <= opts.classification_tol
                {
                    PropositionStatus::Pass
                } else {
                    PropositionStatus::Fail
                };
                let code = match status {
                    PropositionStatus::Pass | PropositionStatus::OutsideHypothesis => EXIT_PASS,
                    PropositionStatus::Fail => EXIT_FAIL,
                    PropositionStatus::Ambiguous => EXIT_NUMERICAL,
                };
                eprintln!("{name}: {status:?} dim {} expected {expected}", rep.dimension);
                let key = if restricted { "restricted" } else { "unrestricted" };
                Ok((
                    json!({
                        "algebra": name,
                        "n": n,
                        "status": status,
                        "expected_dimension": expected,
                        key: rep,
                    }),
                    code,
                ))
            }
        }
    };
    let results = map_ordered(&names, |n| run(n));
    let mut code = EXIT_PASS;
    let mut out = Vec::new();
    for (name, res) in names.iter().zip(results) {
        match res {
            Ok((v, c)) => {
                code = code.max(c);
                out.push(v);
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                let c = e.exit_code();
                if c == EXIT_USAGE {
                    return Err(e);
                }
                code = code.max(c);
                out.push(json!({"algebra": name, "status": "error", "error": e.to_string()}));
            }
        }
    }
    Ok(Outcome {
        report: envelope("verify-proposition", r, status_word(code), code, Value::Array(out)),
        exit_code: code,
    })
}

fn bianchi_err(e: BianchiError) -> CliError {
    match e {
        BianchiError::Algebra(a) => a.into(),
        BianchiError::DimensionCap { .. } | BianchiError::LayoutMismatch { .. } => CliError::Usage(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn roots_err(e: RootsError) -> CliError {
    match e {
        RootsError::Algebra(a) => a.into(),
        other => CliError::Numerical(other.to_string()),
    }
}

pub fn cmd_table1(r: &Resolved, args: &Table1Args) -> Result<Outcome, CliError> {
    let cfg = &r.config;
    let rotate = args.rotate.or(cfg.rotate);
    let choice = match args.random_cartan.or(cfg.random_cartan) {
        Some(s) => CartanChoice::Random(s),
        None => CartanChoice::Standard,
    };
    let names = algebra_names(cfg, &DEFAULT_TABLE1)?;
    let policy = r.tol.rank;
    let results = map_ordered(&names, |name| -> Result<Value, CliError> {
        let g = build(*name, rotate)?;
        let rep = roots::min_adjoint_rank_with(&g, choice, &policy).map_err(roots_err)?;
        let table = name.table_values();
        let matches = table.map(|(rk, m)| rk == rep.rank_g && m == rep.m);
        let diagonal = if g.family() == algebra::Family::Su {
            let v = roots::su_minimal_diagonal(&g).map_err(roots_err)?;
            let a = algebra::ad(&g, &v)?;
            let d = crate::numerics::rank_and_nullspace_dense(&a.entries, &policy)
                .map_err(|e| CliError::Numerical(e.to_string()))?;
            Some(d.rank)
        } else {
            None
        };
        eprintln!(
            "{name}: rank {} m {} table {}",
            rep.rank_g,
            rep.m,
            table
                .map(|(a, b)| format!("({a}, {b})"))
                .unwrap_or_else(|| "not listed".into())
        );
        Ok(json!({
            "algebra": name,
            "rank": rep.rank_g,
            "m": rep.m,
            "table_rank": table.map(|t| t.0),
            "table_m": table.map(|t| t.1),
            "matches_table": matches,
            "sv_gap": if rep.sv_gap.is_finite() { json!(rep.sv_gap) } else { Value::Null },
            "highest_root": rep.highest_root,
            "diagonal_family_rank": diagonal,
        }))
    });
    let mut code = EXIT_PASS;
    let mut out = Vec::new();
    for (name, res) in names.iter().zip(results) {
        match res {
            Ok(v) => {
                if v["matches_table"] == json!(false) {
                    code = code.max(EXIT_FAIL);
                }
                out.push(v);
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                if e.exit_code() == EXIT_USAGE {
                    return Err(e);
                }
                code = code.max(e.exit_code());
                out.push(json!({"algebra": name, "status": "error", "error": e.to_string()}));
            }
        }
    }
    Ok(Outcome {
        report: envelope("table1", r, status_word(code), code, Value::Array(out)),
        exit_code: code,
    })
}

/// Parse `i,j=value` (1-based) into D, filling the skew partner.
pub fn apply_d_entries(p: &mut MetricParams, entries: &[String]) -> Result<(), CliError> {
    let m = p.n - 1;
    for e in entries {
        let (ij, v) = parse_kv(e)?;
        let (i, j) = ij
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| CliError::Usage(format!("expected i,j=value, got {e:?}")))?;
        if i == 0 || j == 0 || i > m || j > m || i == j {
            return Err(CliError::Usage(format!(
                "D index ({i},{j}) out of range 1..={m} or diagonal"
            )));
        }
        p.d[(i - 1) * m + (j - 1)] = v;
        p.d[(j - 1) * m + (i - 1)] = -v;
    }
    Ok(())
}

pub fn geometry_params(r: &Resolved, args: &GeometryArgs) -> Result<(MetricParams, usize), CliError> {
    let gc = &r.config.geometry;
    let n = args.n.or(gc.n).unwrap_or(5);
    if n < 4 {
        return Err(CliError::Usage("n must be at least 4".into()));
    }
    let mut p = MetricParams::example(n);
    p.lambda = args.lambda.or(gc.lambda).unwrap_or(1.0);
    p.epsilon = args.epsilon.or(gc.epsilon).unwrap_or(1);
    p.scale = args.scale.or(gc.scale).unwrap_or(1.0);
    p.ab_family = match args.ab_family {
        Some(AbFamilyArg::Constant) => AbFamily::Constant,
        Some(AbFamilyArg::Sine) => AbFamily::Sine,
        None => gc.ab_family.unwrap_or(AbFamily::Constant),
    };
    let entries = if !args.d.is_empty() {
        Some(args.d.clone())
    } else {
        gc.d.clone()
    };
    if args.d_zero || entries.is_some() {
        p.d.iter_mut().for_each(|x| *x = 0.0);
    }
    if let Some(e) = entries {
        apply_d_entries(&mut p, &e)?;
    }
    p.validate()?;
    let samples = args.samples.or(gc.samples).unwrap_or(20);
    Ok((p, samples))
}

pub fn cmd_geometry(r: &Resolved, args: &GeometryArgs) -> Result<Outcome, CliError> {
    let (p, samples) = geometry_params(r, args)?;
    let t = Instant::now();
    let rep = geometry::geometry_report(&p, samples, r.seed)?;
    let tol = &r.tol;
    let kappa = rep.kappa.abs();
    let twisted = p.d.iter().any(|&x| x != 0.0);
    let spectrum_ok = rep.spectrum_model_deviation <= tol.spectrum * kappa;
    let weyl_ok = rep.weyl_certificate <= tol.weyl;
    let obstruction_ok = rep.obstruction_samples.iter().all(|s| {
        if s.rhs == 0.0 {
            s.lhs.abs() <= tol.obstruction_zero
        } else {
            ((s.lhs - s.rhs) / s.rhs).abs() <= tol.obstruction && s.lhs.abs() >= 0.5 * s.rhs.abs()
        }
    });
    let nonsymmetric = rep
        .obstruction_samples
        .iter()
        .any(|s| s.lhs.abs() > tol.obstruction_zero);
    let code = if spectrum_ok && weyl_ok && obstruction_ok && (nonsymmetric == twisted_in_obstruction(&p)) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    };
    eprintln!(
        "geometry: spectrum deviation {:.3e}, Weyl certificate {:.3e}, obstruction error {:.3e}, excluded {}",
        rep.spectrum_model_deviation,
        rep.weyl_certificate,
        rep.max_obstruction_relative_error,
        rep.excluded_points.len()
    );
    let mut v = serde_json::to_value(&rep).expect("report serializes");
    v["checks"] = json!({
        "spectrum": spectrum_ok,
        "weyl_homogeneity": weyl_ok,
        "obstruction": obstruction_ok,
        "twisted": twisted,
        "not_symmetric": nonsymmetric,
    });
    v["excluded_count"] = json!(rep.excluded_points.len());
    v["wall_time_s"] = json!(t.elapsed().as_secs_f64());
    Ok(Outcome {
        report: envelope("geometry", r, status_word(code), code, v),
        exit_code: code,
    })
}

/// Whether some `D₁ᵢ`, `i ≥ 2`, is nonzero, so the obstruction must show.
fn twisted_in_obstruction(p: &MetricParams) -> bool {
    (2..p.n).any(|i| p.d_entry(1, i) != 0.0)
}

fn write_report(path: Option<&Path>, v: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).expect("reports serialize");
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text + "\n")?;
        }
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

/// Dispatch a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let r = match resolve(&cli.global) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    if let Some(t) = r.config.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("thread pool: {e}");
        }
    }
    let outcome = match &cli.command {
        Command::VerifyIdentities(a) => cmd_verify_identities(&r, a),
        Command::VerifyProposition(a) => cmd_verify_proposition(&r, a),
        Command::Table1(a) => cmd_table1(&r, a),
        Command::Geometry(a) => cmd_geometry(&r, a),
    };
    match outcome {
        Ok(o) => match write_report(r.config.out.as_deref(), &o.report) {
            Ok(()) => o.exit_code,
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

/// Parse process arguments, mapping clap errors to the usage exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            code
        }
    }
}

impl From<NumericsError> for CliError {
    fn from(e: NumericsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}
