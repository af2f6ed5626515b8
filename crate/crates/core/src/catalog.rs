//! Registry of the worked examples and table rows, stored as text files.
//!
//! Each `.pq` file under the data directory holds one or more sections. A
//! section header `[id]` must equal the file stem or extend it with a dot
//! (`tbl1.pq` holds `tbl1.phi11`, `tbl1.phi11.dual`, ...). Inside a section:
//!
//! ```text
//! dim=4
//! guard=abs2(1,3)>0          relations: >0, !=0, !<=0 (off the negative axis)
//! box=-2,2                   or one lo,hi pair per variable separated by ;
//! margin=0.1
//! expect=2,1 proper          proper | not-proper | fails | ? p,q
//! cite=...
//! dual_of=other.id           expression defaults to the dual of that entry
//! constraint=1+i^2           a constant that vanishes iff the entry should hold
//! mode=numeric               force numeric-only checking
//! sqrt(abs2(1,3)) + i*x4     the expression: the one line without `=`
//! ```
//!
//! Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::calculus::ComplexFunction;
use crate::construct::dualize;
use crate::error::{Error, Result};
use crate::expr::{is_zero, simplify, Domain, Expr, Guard, Relation, ZeroPolicy, ZeroStatus};
use crate::morphism::{check_morphism, CheckOptions, Mode, MorphismReport, Verdict};
use crate::parse::parse;

/// Environment variable overriding the data directory.
pub const DATA_ENV: &str = "PQMORPH_DATA";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Proper,
    NotProper,
    /// The system at the given (p,q) should fail.
    Fails,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Certainty {
    Stated,
    /// The value is not known; results are informational.
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub id: String,
    pub function: ComplexFunction,
    /// (p,q) to check at.
    pub p: u32,
    pub q: u32,
    /// `None` for unknown entries.
    pub expected: Option<Outcome>,
    pub certainty: Certainty,
    pub cite: String,
    pub dual_of: Option<String>,
    pub constraint: Option<Expr>,
    pub mode: Option<Mode>,
    pub file: PathBuf,
}

impl CatalogEntry {
    /// `"(2,1) proper"` style label of the expectation.
    pub fn expectation(&self) -> String {
        match self.expected {
            None => format!("? at ({},{})", self.p, self.q),
            Some(Outcome::Proper) => format!("({},{}) proper", self.p, self.q),
            Some(Outcome::NotProper) => format!("({},{}) not proper", self.p, self.q),
            Some(Outcome::Fails) => format!("not ({},{})", self.p, self.q),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
}

/// Data directory: `$PQMORPH_DATA` if set, else the one shipped with the crate.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_ENV) {
        Some(d) => PathBuf::from(d),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("catalog"),
    }
}

impl Catalog {
    pub fn load_default() -> Result<Catalog> {
        Catalog::load(&data_dir())
    }

    pub fn load(dir: &Path) -> Result<Catalog> {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pq"))
            .collect();
        files.sort();
        let mut raw = Vec::new();
        for f in &files {
            raw.extend(parse_file(f)?);
        }
        let mut entries: Vec<CatalogEntry> = Vec::with_capacity(raw.len());
        for r in raw {
            let e = r.build(&entries)?;
            if entries.iter().any(|x| x.id == e.id) {
                return Err(catalog_error(&e.file, format!("duplicate id {}", e.id)));
            }
            entries.push(e);
        }
        Ok(Catalog { entries })
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Result<&CatalogEntry> {
        self.entries.iter().find(|e| e.id == id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

/// Ids of the default catalog, in file order.
pub fn catalog_list() -> Result<Vec<String>> {
    Ok(Catalog::load_default()?.ids().into_iter().map(String::from).collect())
}

fn catalog_error(file: &Path, message: String) -> Error {
    Error::Catalog { file: file.display().to_string(), message }
}

struct RawEntry {
    id: String,
    file: PathBuf,
    line: usize,
    keys: BTreeMap<String, Vec<String>>,
    expr: Option<String>,
}

fn parse_file(path: &Path) -> Result<Vec<RawEntry>> {
    let text = fs::read_to_string(path)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let mut out: Vec<RawEntry> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: String| catalog_error(path, format!("line {}: {m}", n + 1));
        if let Some(id) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let id = id.trim().to_string();
            if id != stem && !id.starts_with(&format!("{stem}.")) {
                return Err(err(format!("id `{id}` does not belong to file `{stem}`")));
            }
            out.push(RawEntry { id, file: path.to_path_buf(), line: n + 1, keys: BTreeMap::new(), expr: None });
            continue;
        }
        let cur = out.last_mut().ok_or_else(|| err("content before the first section".into()))?;
        match line.split_once('=') {
            Some((k, v)) if !v.starts_with('=') && is_key(k.trim()) => {
                cur.keys.entry(k.trim().to_string()).or_default().push(v.trim().to_string());
            }
            _ => {
                if cur.expr.is_some() {
                    return Err(err(format!("second expression in section {}", cur.id)));
                }
                cur.expr = Some(line.to_string());
            }
        }
    }
    Ok(out)
}

fn is_key(k: &str) -> bool {
    matches!(
        k,
        "dim" | "guard" | "box" | "margin" | "expect" | "certainty" | "cite" | "dual" | "dual_of" | "constraint"
            | "mode"
    )
}

/// Parses `expr>0`, `expr!=0` or `expr!<=0` (off the closed negative real axis).
pub fn parse_guard(s: &str, dim: usize) -> Result<Guard> {
    let (body, rel) = if let Some(b) = s.strip_suffix("!<=0") {
        (b, Relation::OffNegativeAxis)
    } else if let Some(b) = s.strip_suffix("!=0") {
        (b, Relation::NonZero)
    } else if let Some(b) = s.strip_suffix(">0") {
        (b, Relation::Positive)
    } else {
        return Err(Error::InvalidArgument(format!("guard `{s}` must end in >0, !=0 or !<=0")));
    };
    Ok(Guard { expr: parse(body, dim)?, relation: rel })
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lo,hi in `{s}`"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(format!("empty interval `{s}`"))
    }
}

fn parse_expect(s: &str) -> std::result::Result<(u32, u32, Option<Outcome>), String> {
    let (unknown, rest) = match s.strip_prefix('?') {
        Some(r) => (true, r.trim()),
        None => (false, s),
    };
    let mut parts = rest.split_whitespace();
    let pq = parts.next().ok_or("missing p,q")?;
    let (p, q) = pq.split_once(',').ok_or_else(|| format!("expected p,q in `{pq}`"))?;
    let p: u32 = p.parse().map_err(|_| format!("bad p `{p}`"))?;
    let q: u32 = q.parse().map_err(|_| format!("bad q `{q}`"))?;
    if unknown {
        return Ok((p, q, None));
    }
    let outcome = match parts.next() {
        Some("proper") => Outcome::Proper,
        Some("not-proper") => Outcome::NotProper,
        Some("fails") => Outcome::Fails,
        other => return Err(format!("expected proper, not-proper or fails, got {other:?}")),
    };
    Ok((p, q, Some(outcome)))
}

impl RawEntry {
    fn one(&self, key: &str) -> Option<&str> {
        self.keys.get(key).and_then(|v| v.last()).map(String::as_str)
    }

    fn build(self, earlier: &[CatalogEntry]) -> Result<CatalogEntry> {
        let err = |m: String| catalog_error(&self.file, format!("section {} (line {}): {m}", self.id, self.line));
        let dual_of = self.one("dual_of").map(String::from);
        let base = match &dual_of {
            Some(b) => Some(
                earlier.iter().find(|e| &e.id == b).ok_or_else(|| err(format!("dual_of `{b}` is not defined earlier")))?,
            ),
            None => None,
        };
        let dim: usize = match (self.one("dim"), base) {
            (Some(d), _) => d.parse().map_err(|_| err(format!("bad dim `{d}`")))?,
            (None, Some(b)) => b.function.dim(),
            (None, None) => return Err(err("missing dim".into())),
        };
        let derived = match base {
            Some(b) => Some(dualize(&b.function).map_err(|e| err(e.to_string()))?),
            None => None,
        };
        let mut domain = match (&derived, self.keys.contains_key("guard")) {
            (Some(d), false) => d.domain.clone(),
            _ => Domain::new(dim),
        };
        for g in self.keys.get("guard").into_iter().flatten() {
            domain.guards.push(parse_guard(g, dim).map_err(|e| err(e.to_string()))?);
        }
        if let Some(b) = self.one("box") {
            let pairs: Vec<&str> = b.split(';').collect();
            domain.bounds = if pairs.len() == 1 {
                vec![parse_pair(pairs[0]).map_err(&err)?; dim]
            } else if pairs.len() == dim {
                pairs.iter().map(|p| parse_pair(p)).collect::<std::result::Result<_, _>>().map_err(&err)?
            } else {
                return Err(err(format!("box has {} intervals for dimension {dim}", pairs.len())));
            };
        }
        if let Some(m) = self.one("margin") {
            domain.margin = m.parse().map_err(|_| err(format!("bad margin `{m}`")))?;
        }
        let expr = match (&self.expr, &derived) {
            (Some(src), _) => parse(src, dim).map_err(|e| err(e.to_string()))?,
            (None, Some(d)) => d.expr.clone(),
            (None, None) => return Err(err("missing expression".into())),
        };
        let function = ComplexFunction::new(expr, domain).map_err(|e| err(e.to_string()))?;
        let (p, q, expected) = parse_expect(self.one("expect").ok_or_else(|| err("missing expect".into()))?).map_err(&err)?;
        let certainty = if expected.is_some() { Certainty::Stated } else { Certainty::Unknown };
        if let Some(c) = self.one("certainty") {
            let stated = match c {
                "stated" => Certainty::Stated,
                "unknown" => Certainty::Unknown,
                _ => return Err(err(format!("unknown certainty `{c}`"))),
            };
            if stated != certainty {
                return Err(err(format!("certainty `{c}` disagrees with expect")));
            }
        }
        let constraint = match self.one("constraint") {
            Some(c) => Some(parse(c, dim).map_err(|e| err(e.to_string()))?),
            None => None,
        };
        let mode = match self.one("mode") {
            None => None,
            Some("numeric") => Some(Mode::NumericOnly),
            Some("symbolic") => Some(Mode::SymbolicFirst),
            Some(m) => return Err(err(format!("unknown mode `{m}`"))),
        };
        Ok(CatalogEntry {
            function,
            p,
            q,
            expected,
            certainty,
            dual_of,
            constraint,
            mode,
            cite: self.one("cite").unwrap_or_default().to_string(),
            id: self.id,
            file: self.file,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Match {
    Matches,
    Mismatch,
    /// Unknown expectation; the report is informational.
    Informational,
}

impl fmt::Display for Match {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Match::Matches => "match",
            Match::Mismatch => "MISMATCH",
            Match::Informational => "informational",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogResult {
    pub id: String,
    pub expectation: String,
    pub report: MorphismReport,
    pub outcome: Match,
}

impl CatalogResult {
    /// What was found, in the same style as the expectation.
    pub fn found(&self) -> String {
        let r = &self.report;
        match (r.verdict, r.proper()) {
            (Verdict::Fails(c), _) => format!("not ({},{}): fails at {c}", r.p, r.q),
            (Verdict::Undetermined, _) => format!("({},{}) undetermined", r.p, r.q),
            (_, Some(true)) => format!("({},{}) proper", r.p, r.q),
            (_, Some(false)) => format!("({},{}) not proper", r.p, r.q),
            (_, None) => format!("({},{}) properness undetermined", r.p, r.q),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": crate::morphism::SCHEMA_VERSION,
            "id": self.id,
            "expected": self.expectation,
            "found": self.found(),
            "outcome": self.outcome.to_string().to_lowercase(),
            "report": self.report.to_json(),
        })
    }
}

/// Checks `entry` at its (p,q) and compares with the expectation.
pub fn check_entry(entry: &CatalogEntry, opts: &CheckOptions) -> Result<CatalogResult> {
    let mut opts = opts.clone();
    if let Some(m) = entry.mode {
        opts.mode = m;
    }
    let report = check_morphism(&entry.function, entry.p, entry.q, &opts)?.with_candidate(entry.id.clone());
    let outcome = match entry.expected {
        None => Match::Informational,
        Some(want) => {
            let ok = match want {
                Outcome::Proper => report.holds() && report.proper() == Some(true),
                Outcome::NotProper => report.holds() && report.proper() == Some(false),
                Outcome::Fails => matches!(report.verdict, Verdict::Fails(_)),
            };
            if ok {
                Match::Matches
            } else {
                Match::Mismatch
            }
        }
    };
    Ok(CatalogResult { id: entry.id.clone(), expectation: entry.expectation(), report, outcome })
}

/// Looks up `id` in the default catalog and checks it.
pub fn catalog_check(id: &str, opts: &CheckOptions) -> Result<CatalogResult> {
    let cat = Catalog::load_default()?;
    check_entry(cat.get(id)?, opts)
}

/// How a dual entry relates to the dual of its base.
#[derive(Clone, Debug, PartialEq)]
pub enum DualAgreement {
    /// Identical normal forms.
    Canonical,
    /// The difference vanishes at sample points.
    Numeric(ZeroStatus),
    Differs(ZeroStatus),
}

/// Compares a dual entry's expression with `dualize` of its base.
pub fn dual_agreement(cat: &Catalog, entry: &CatalogEntry, policy: &ZeroPolicy) -> Result<Option<DualAgreement>> {
    let Some(base) = &entry.dual_of else { return Ok(None) };
    let d = dualize(&cat.get(base)?.function)?;
    if simplify(&d.expr) == simplify(&entry.function.expr) {
        return Ok(Some(DualAgreement::Canonical));
    }
    let diff = Expr::sum([d.expr.clone(), entry.function.expr.scale(&crate::expr::coeff_int(-1))]);
    let st = is_zero(&diff, &entry.function.domain, policy)?;
    Ok(Some(if st.is_zero() { DualAgreement::Numeric(st) } else { DualAgreement::Differs(st) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn tmpdir(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("pqmorph-cat-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn parses_sections_and_duals() {
        let d = tmpdir("ok");
        write(
            &d,
            "demo.pq",
            "# comment\n[demo]\ndim=4\nguard=abs2(1,3)>0\nexpect=2,1 proper\ncite=demo\nsqrt(abs2(1,3)) + i*x4\n\n[demo.dual]\ndual_of=demo\nexpect=? 2,1\n",
        );
        let c = Catalog::load(&d).unwrap();
        assert_eq!(c.ids(), vec!["demo", "demo.dual"]);
        let dual = c.get("demo.dual").unwrap();
        assert_eq!(dual.certainty, Certainty::Unknown);
        assert_eq!(dual.function.domain.guards.len(), 2);
        assert!(matches!(c.get("nope"), Err(Error::UnknownId(_))));
        assert_eq!(dual_agreement(&c, dual, &ZeroPolicy::default()).unwrap(), Some(DualAgreement::Canonical));
    }

    #[test]
    fn rejects_foreign_ids_and_bad_guards() {
        let d = tmpdir("bad");
        write(&d, "a.pq", "[b]\ndim=1\nexpect=1,1 proper\nx1\n");
        assert!(matches!(Catalog::load(&d), Err(Error::Catalog { .. })));
        let d = tmpdir("bad2");
        write(&d, "a.pq", "[a]\ndim=1\nguard=x1<0\nexpect=1,1 proper\nx1\n");
        assert!(matches!(Catalog::load(&d), Err(Error::Catalog { .. })));
    }

    #[test]
    fn expectation_syntax() {
        assert_eq!(parse_expect("2,1 proper").unwrap(), (2, 1, Some(Outcome::Proper)));
        assert_eq!(parse_expect("? 4,1").unwrap(), (4, 1, None));
        assert_eq!(parse_expect("2,1 fails").unwrap(), (2, 1, Some(Outcome::Fails)));
        assert!(parse_expect("2,1").is_err());
    }
}
