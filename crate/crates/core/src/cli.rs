//! Command-line front end. [`run`] returns the exit code and the report text
//! so it can be driven from tests; `main` only prints.
//!
//! Exit codes: 0 on success, 1 when a check fails or is undetermined, 2 on
//! bad flags or input.

use std::fmt::Write as _;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::calculus::identities::{identity_suite, Backends, SuiteOptions};
use crate::calculus::ComplexFunction;
use crate::catalog::{check_entry, parse_guard, dual_agreement, Catalog, CatalogResult, Certainty, DualAgreement, Match};
use crate::construct::dualize;
use crate::error::{Error, Result};
use crate::expr::{Domain, ZeroPolicy};
use crate::morphism::conjecture::{conjecture_one, conjecture_two, Draw};
use crate::morphism::{check_morphism, classify, describe, CheckOptions, Mode, Verdict, SCHEMA_VERSION};
use crate::parse::{format, parse};

#[derive(Parser, Debug)]
#[command(name = "pqmorph", version, about = "Check complex-valued (p,q)-harmonic morphisms on Euclidean charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the (p,q) system and properness for one expression.
    Check(FunctionArgs),
    /// Run the (p,q) grid up to --p and --q.
    Classify(FunctionArgs),
    /// List or run catalog entries.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Run the identity suite on a catalog entry or an expression.
    Identities(FunctionArgs),
    /// Probes for the two open statements about inversions.
    Conjecture {
        #[command(subcommand)]
        which: Conjecture,
    },
    /// Print the dual (pull-back by the sphere inversion) of an entry or expression.
    Dual(FunctionArgs),
}

#[derive(Subcommand, Debug)]
enum CatalogAction {
    List {
        #[arg(long)]
        json: bool,
    },
    Run {
        /// Entry ids; every stated entry with --all.
        ids: Vec<String>,
        #[arg(long)]
        all: bool,
        /// Also run entries whose expected value is unknown (slow, informational).
        #[arg(long)]
        include_unknown: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand, Debug)]
enum Conjecture {
    /// Check the (p,p) system on random combinations of inverted coordinates.
    One {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = DrawArg::NullCone)]
        draw: DrawArg,
        #[command(flatten)]
        common: Common,
    },
    /// For a candidate on R^(2p-1): if it is (p,1), is it also harmonic?
    Two {
        #[arg(long)]
        candidate: String,
        #[arg(long = "guard")]
        guards: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DrawArg {
    NullCone,
    Generic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Symbolic,
    Numeric,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    p: Option<u32>,
    #[arg(long)]
    q: Option<u32>,
    /// symbolic (normal forms, sampling as fallback) or numeric.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
    /// Term-operation budget for symbolic normalization.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args, Debug)]
struct FunctionArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    expr: Option<String>,
    /// Domain guard such as `abs2(1,3)>0`, `x1!=0` or `x5+i*x6!<=0`; repeatable.
    #[arg(long = "guard")]
    guards: Vec<String>,
    /// Catalog entry instead of --dim/--expr.
    #[arg(long)]
    entry: Option<String>,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn options(&self) -> Result<CheckOptions> {
        let mut policy = ZeroPolicy { seed: self.seed, ..ZeroPolicy::default() };
        if let Some(n) = self.samples {
            if n == 0 {
                return Err(Error::InvalidArgument("--samples must be positive".into()));
            }
            policy.samples = n;
        }
        if let Some(t) = self.tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument("--tol must be positive".into()));
            }
            policy.tol = Some(t);
        }
        if let Some(b) = self.budget {
            policy.budget = b;
        }
        let mode = match self.mode {
            Some(ModeArg::Numeric) => Mode::NumericOnly,
            _ => Mode::SymbolicFirst,
        };
        Ok(CheckOptions { mode, policy })
    }

    fn pq(&self) -> Result<(u32, u32)> {
        let p = self.p.ok_or_else(|| Error::InvalidArgument("--p is required".into()))?;
        Ok((p, self.q.unwrap_or(1)))
    }
}

fn build_function(src: &str, dim: usize, guards: &[String]) -> Result<ComplexFunction> {
    let mut domain = Domain::new(dim);
    for g in guards {
        domain.guards.push(parse_guard(g, dim)?);
    }
    ComplexFunction::new(parse(src, dim)?, domain)
}

impl FunctionArgs {
    /// The function and a display name.
    fn function(&self) -> Result<(ComplexFunction, String)> {
        match (&self.entry, &self.expr) {
            (Some(_), Some(_)) => Err(Error::InvalidArgument("give either --entry or --expr".into())),
            (Some(id), None) => Ok((Catalog::load_default()?.get(id)?.function.clone(), id.clone())),
            (None, Some(src)) => {
                let dim = self.dim.ok_or_else(|| Error::InvalidArgument("--dim is required with --expr".into()))?;
                Ok((build_function(src, dim, &self.guards)?, src.clone()))
            }
            (None, None) => Err(Error::InvalidArgument("--expr (with --dim) or --entry is required".into())),
        }
    }
}

/// Exit code for an error: 2 for bad input, 1 otherwise.
fn error_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_)
        | Error::InvalidArgument(_)
        | Error::UnknownId(_)
        | Error::VariableOutOfRange { .. }
        | Error::DimensionMismatch { .. }
        | Error::OddDimension(_)
        | Error::NonHolomorphicInput(_)
        | Error::Catalog { .. } => 2,
        _ => 1,
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Runs the command line `argv` (program name first).
pub fn run<I, T>(argv: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return (code, e.render().to_string());
        }
    };
    match dispatch(cli.command) {
        Ok(r) => r,
        Err(e) => (error_code(&e), format!("error: {e}\n")),
    }
}

fn dispatch(cmd: Command) -> Result<(i32, String)> {
    match cmd {
        Command::Check(a) => cmd_check(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Catalog { action: CatalogAction::List { json } } => cmd_list(json),
        Command::Catalog { action: CatalogAction::Run { ids, all, include_unknown, common } } => {
            cmd_catalog_run(&ids, all, include_unknown, &common)
        }
        Command::Identities(a) => cmd_identities(&a),
        Command::Conjecture { which: Conjecture::One { trials, draw, common } } => cmd_conjecture_one(trials, draw, &common),
        Command::Conjecture { which: Conjecture::Two { candidate, guards, common } } => {
            cmd_conjecture_two(&candidate, &guards, &common)
        }
        Command::Dual(a) => cmd_dual(&a),
    }
}

fn verdict_code(v: Verdict) -> i32 {
    if v.holds() {
        0
    } else {
        1
    }
}

fn cmd_check(a: &FunctionArgs) -> Result<(i32, String)> {
    let (z, name) = a.function()?;
    let (p, q) = a.common.pq()?;
    let report = check_morphism(&z, p, q, &a.common.options()?)?.with_candidate(name);
    let out = if a.common.json { pretty(&report.to_json()) } else { format!("{report}\n") };
    Ok((verdict_code(report.verdict), out))
}

fn cmd_classify(a: &FunctionArgs) -> Result<(i32, String)> {
    let (z, name) = a.function()?;
    let max_p = a.common.p.unwrap_or(3);
    let max_q = a.common.q.unwrap_or(max_p);
    let c = classify(&z, max_p, max_q, &a.common.options()?)?;
    let code = if c.minimal_p.is_some() { 0 } else { 1 };
    if a.common.json {
        let mut v = c.to_json();
        v["candidate"] = json!(name);
        return Ok((code, pretty(&v)));
    }
    let mut out = format!("candidate: {name}\n");
    for q in (1..=max_q).rev() {
        let row: Vec<String> = (1..=max_p)
            .map(|p| {
                let cell = c.cell(p, q).expect("grid cell");
                let mark = match cell.verdict {
                    Verdict::Holds => "yes",
                    Verdict::HoldsNumericallyOnly => "yes~",
                    Verdict::Fails(_) => "no",
                    Verdict::Undetermined => "?",
                };
                format!("{mark:>5}")
            })
            .collect();
        let _ = writeln!(out, "q={q} {}", row.join(""));
    }
    let header: Vec<String> = (1..=max_p).map(|p| format!("{:>5}", format!("p={p}"))).collect();
    let _ = writeln!(out, "    {}", header.join(""));
    let _ = writeln!(out, "smallest (p,1): {}", c.label().unwrap_or_else(|| "none in range".into()));
    Ok((code, out))
}

fn cmd_list(json: bool) -> Result<(i32, String)> {
    let cat = Catalog::load_default()?;
    if json {
        let v: Vec<Value> = cat
            .entries()
            .iter()
            .map(|e| {
                json!({
                    "id": e.id,
                    "dim": e.function.dim(),
                    "expr": format(&e.function.expr),
                    "expected": e.expectation(),
                    "certainty": match e.certainty { Certainty::Stated => "stated", Certainty::Unknown => "unknown" },
                    "cite": e.cite,
                })
            })
            .collect();
        return Ok((0, pretty(&json!({ "schema": SCHEMA_VERSION, "entries": v }))));
    }
    let mut out = String::new();
    for e in cat.entries() {
        let _ = writeln!(out, "{:<24} R^{}  {:<24} {}", e.id, e.function.dim(), e.expectation(), e.cite);
    }
    Ok((0, out))
}

fn cmd_catalog_run(ids: &[String], all: bool, include_unknown: bool, common: &Common) -> Result<(i32, String)> {
    let cat = Catalog::load_default()?;
    let opts = common.options()?;
    let selected: Vec<_> = if all {
        if !ids.is_empty() {
            return Err(Error::InvalidArgument("give ids or --all, not both".into()));
        }
        cat.entries().iter().filter(|e| include_unknown || e.certainty == Certainty::Stated).collect()
    } else {
        if ids.is_empty() {
            return Err(Error::InvalidArgument("give entry ids or --all".into()));
        }
        ids.iter().map(|id| cat.get(id)).collect::<Result<_>>()?
    };
    let results: Vec<(CatalogResult, Option<DualAgreement>)> = selected
        .par_iter()
        .map(|e| Ok((check_entry(e, &opts)?, dual_agreement(&cat, e, &opts.policy)?)))
        .collect::<Result<_>>()?;
    let mismatches = results.iter().filter(|(r, d)| r.outcome == Match::Mismatch || matches!(d, Some(DualAgreement::Differs(_)))).count();
    let code = if mismatches > 0 { 1 } else { 0 };
    if common.json {
        let v: Vec<Value> = results
            .iter()
            .map(|(r, d)| {
                let mut j = r.to_json();
                if let Some(d) = d {
                    j["dual_agreement"] = json!(match d {
                        DualAgreement::Canonical => "canonical",
                        DualAgreement::Numeric(_) => "numeric",
                        DualAgreement::Differs(_) => "differs",
                    });
                }
                j
            })
            .collect();
        return Ok((code, pretty(&json!({ "schema": SCHEMA_VERSION, "mismatches": mismatches, "results": v }))));
    }
    let mut out = String::new();
    for (r, d) in &results {
        let dual = match d {
            None => String::new(),
            Some(DualAgreement::Canonical) => "  [dual: canonical]".into(),
            Some(DualAgreement::Numeric(_)) => "  [dual: numeric]".into(),
            Some(DualAgreement::Differs(s)) => format!("  [dual DIFFERS: {}]", describe(s)),
        };
        let note = if r.report.fallback.is_some() { "  (sampled)" } else { "" };
        let _ = writeln!(out, "{:<14} {:<24} expected {:<22} found {}{note}{dual}", r.outcome.to_string(), r.id, r.expectation, r.found());
    }
    let _ = writeln!(out, "{} entries, {mismatches} mismatches", results.len());
    Ok((code, out))
}

fn cmd_identities(a: &FunctionArgs) -> Result<(i32, String)> {
    let (z, name) = a.function()?;
    let opts = a.common.options()?;
    let backends = match opts.mode {
        Mode::SymbolicFirst => Backends::Both,
        Mode::NumericOnly => Backends::NumericOnly,
    };
    let report = identity_suite(&z, &SuiteOptions { policy: opts.policy, backends })?;
    let code = if report.all_zero() { 0 } else { 1 };
    if a.common.json {
        let mut v = serde_json::to_value(&report).expect("serializable");
        v["schema"] = json!(SCHEMA_VERSION);
        v["candidate"] = json!(name);
        return Ok((code, pretty(&v)));
    }
    let mut out = format!("candidate: {name}\n");
    for c in &report.checks {
        let _ = writeln!(out, "  {:<28} order {:>2}  {}", c.name, c.order, describe(&c.status));
    }
    for (n, why) in &report.skipped {
        let _ = writeln!(out, "  {n:<28} skipped: {why}");
    }
    let _ = writeln!(out, "max residual {:.1e}", report.max_residual());
    Ok((code, out))
}

fn cmd_conjecture_one(trials: usize, draw: DrawArg, common: &Common) -> Result<(i32, String)> {
    let p = common.p.ok_or_else(|| Error::InvalidArgument("--p is required".into()))?;
    let mut opts = common.options()?;
    if common.mode.is_none() {
        // Random Gaussian-rational coefficients make normal forms expensive.
        opts.mode = Mode::NumericOnly;
    }
    let draw = match draw {
        DrawArg::NullCone => Draw::NullCone,
        DrawArg::Generic => Draw::Generic,
    };
    let r = conjecture_one(p, trials, draw, common.seed, &opts)?;
    let code = if r.all_hold() { 0 } else { 1 };
    if common.json {
        return Ok((code, pretty(&r.to_json())));
    }
    let mut out = format!("(p,p) = ({p},{p}), {} draws, {trials} trials\n", draw.name());
    for (n, t) in r.trials.iter().enumerate() {
        let _ = writeln!(out, "  trial {n:>2}: {}  monomials vanish: {}", t.report.verdict, t.monomials_vanish());
    }
    let _ = writeln!(out, "max residual {:.1e}; all hold: {}", r.max_residual(), r.all_hold());
    Ok((code, out))
}

fn cmd_conjecture_two(candidate: &str, guards: &[String], common: &Common) -> Result<(i32, String)> {
    let p = common.p.ok_or_else(|| Error::InvalidArgument("--p is required".into()))?;
    if p < 2 {
        return Err(Error::InvalidArgument("--p must be at least 2".into()));
    }
    let phi = build_function(candidate, 2 * p as usize - 1, guards)?;
    let r = conjecture_two(&phi, p, &common.options()?)?;
    let code = if r.consistent() == Some(false) { 1 } else { 0 };
    if common.json {
        return Ok((code, pretty(&r.to_json())));
    }
    let mut out = format!("{}\n", r.report.clone().with_candidate(candidate));
    let line = match (&r.tension, r.consistent()) {
        (_, Some(false)) => format!("tau(phi) {}: a (p,1) candidate that is not harmonic", describe(r.tension.as_ref().expect("tension"))),
        (Some(t), _) => format!("tau(phi): {}", describe(t)),
        (None, _) => "not a (p,1)-harmonic morphism; nothing to check".to_string(),
    };
    let _ = writeln!(out, "{line}");
    Ok((code, out))
}

fn cmd_dual(a: &FunctionArgs) -> Result<(i32, String)> {
    let (z, name) = a.function()?;
    let d = dualize(&z)?;
    let guards: Vec<String> = d.domain.guards.iter().map(|g| format!("{}{}", format(&g.expr), g.relation.symbol())).collect();
    if a.common.json {
        let v = json!({ "schema": SCHEMA_VERSION, "candidate": name, "dim": d.dim(), "dual": format(&d.expr), "guards": guards });
        return Ok((0, pretty(&v)));
    }
    let mut out = format!("{}\n", format(&d.expr));
    for g in guards {
        let _ = writeln!(out, "  where {g}");
    }
    Ok((0, out))
}
