//! Condition systems for complex-valued (p,q)-harmonic morphisms and the
//! checker, properness test and classifier built on them.
//!
//! `z` is a (p,q)-harmonic morphism exactly when `κ(z,z) = 0` and
//! `τ^p(z^j conj(z)^k) = 0` for every pair of its [`ConditionSystem`]. For
//! `p < q` only constants qualify, and the check becomes `κ(z,z) = 0` together
//! with `κ(z,conj z) = 0`.

mod coefficients;
pub mod conjecture;

use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};

use crate::calculus::certify::{certify, Probe};
use crate::calculus::field::{Field, Monomials};
use crate::calculus::identities::Backends;
use crate::calculus::ComplexFunction;
use crate::error::{Error, Result};
use crate::expr::{ZeroPolicy, ZeroStatus};
use crate::parse::format;

pub use coefficients::{coefficients, coefficients_at, validate_coefficients, CoefficientReport, Coefficients};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionSystem {
    pub p: u32,
    pub q: u32,
    /// Exponents `(j,k)` of the monomials `z^j conj(z)^k`, by `k` then `j`.
    pub monomials: Vec<(u32, u32)>,
    pub includes_conformality: bool,
    pub constancy_mode: bool,
}

/// The monomials `z^j conj(z)^k` with `0 <= k <= q-1` and `max(1,k) <= j <= p`.
pub fn condition_system(p: u32, q: u32) -> Result<ConditionSystem> {
    if p == 0 || q == 0 {
        return Err(Error::InvalidArgument(format!("p and q must be positive, got ({p},{q})")));
    }
    let constancy_mode = p < q;
    let mut monomials = Vec::new();
    if !constancy_mode {
        for k in 0..q {
            for j in k.max(1)..=p {
                monomials.push((j, k));
            }
        }
    }
    Ok(ConditionSystem { p, q, monomials, includes_conformality: true, constancy_mode })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Normal forms first; sampling for whatever does not reduce to 0.
    #[default]
    SymbolicFirst,
    NumericOnly,
}

impl Mode {
    fn backends(self) -> Backends {
        match self {
            Mode::SymbolicFirst => Backends::SymbolicFirst,
            Mode::NumericOnly => Backends::NumericOnly,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::SymbolicFirst => "symbolic_first",
            Mode::NumericOnly => "numeric_only",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckOptions {
    pub mode: Mode,
    pub policy: ZeroPolicy,
}

/// Which condition a verdict refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditionLabel {
    /// `κ(z,z)`.
    Kappa,
    /// `κ(z,conj z)`, checked only for `p < q`.
    Gradient,
    Monomial { j: u32, k: u32 },
}

impl fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionLabel::Kappa => write!(f, "kappa(z,z)"),
            ConditionLabel::Gradient => write!(f, "kappa(z,conj z)"),
            ConditionLabel::Monomial { j, k } => write!(f, "({j},{k})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Every condition normalized to 0.
    Holds,
    /// Every condition vanished, at least one only at sample points.
    HoldsNumericallyOnly,
    Fails(ConditionLabel),
    /// Some residual sat between the tolerance and ten times it.
    Undetermined,
}

impl Verdict {
    pub fn holds(self) -> bool {
        matches!(self, Verdict::Holds | Verdict::HoldsNumericallyOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::HoldsNumericallyOnly => "holds_numerically_only",
            Verdict::Fails(_) => "fails",
            Verdict::Undetermined => "undetermined",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Fails(c) => write!(f, "fails at {c}"),
            v => f.write_str(v.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionResult {
    pub j: u32,
    pub k: u32,
    pub status: ZeroStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MorphismReport {
    pub candidate: String,
    pub dim: usize,
    pub p: u32,
    pub q: u32,
    pub mode: Mode,
    pub constancy_mode: bool,
    pub kappa: ZeroStatus,
    /// `κ(z,conj z)` in constancy mode.
    pub gradient: Option<ZeroStatus>,
    pub conditions: Vec<ConditionResult>,
    /// Status of `τ^(p-1)(z)`; nonzero means proper.
    pub properness: ZeroStatus,
    pub verdict: Verdict,
    /// Why some quantities were sampled instead of normalized.
    pub fallback: Option<String>,
}

impl MorphismReport {
    pub fn holds(&self) -> bool {
        self.verdict.holds()
    }

    /// `Some(true)` on a nonzero witness for `τ^(p-1)(z)`, `None` when that
    /// test was inconclusive.
    pub fn proper(&self) -> Option<bool> {
        proper_from(&self.properness)
    }

    pub fn condition(&self, j: u32, k: u32) -> Option<&ZeroStatus> {
        self.conditions.iter().find(|c| c.j == j && c.k == k).map(|c| &c.status)
    }

    pub fn with_candidate(mut self, name: impl Into<String>) -> Self {
        self.candidate = name.into();
        self
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "schema": SCHEMA_VERSION,
            "candidate": self.candidate,
            "dim": self.dim,
            "p": self.p,
            "q": self.q,
            "mode": self.mode.name(),
            "constancy_mode": self.constancy_mode,
            "conditions": self.conditions.iter().map(|c| {
                let mut e = status_json(&c.status);
                e["j"] = json!(c.j);
                e["k"] = json!(c.k);
                e
            }).collect::<Vec<_>>(),
            "kappa_status": status_json(&self.kappa),
            "proper": self.proper(),
            "proper_status": status_json(&self.properness),
            "verdict": self.verdict.name(),
        });
        if let Some(g) = &self.gradient {
            v["gradient_status"] = status_json(g);
        }
        if let Verdict::Fails(c) = self.verdict {
            v["failed_condition"] = json!(c.to_string());
        }
        if let Some(f) = &self.fallback {
            v["fallback"] = json!(f);
        }
        v
    }
}

impl fmt::Display for MorphismReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "candidate: {}", self.candidate)?;
        writeln!(f, "(p,q) = ({},{}), mode {}", self.p, self.q, self.mode.name())?;
        if self.constancy_mode {
            writeln!(f, "p < q: only constant functions qualify")?;
        }
        writeln!(f, "  kappa(z,z): {}", describe(&self.kappa))?;
        if let Some(g) = &self.gradient {
            writeln!(f, "  kappa(z,conj z): {}", describe(g))?;
        }
        for c in &self.conditions {
            writeln!(f, "  tau^{}(z^{} conj(z)^{}): {}", self.p, c.j, c.k, describe(&c.status))?;
        }
        let proper = match self.proper() {
            Some(true) => "proper",
            Some(false) => "not proper",
            None => "properness undetermined",
        };
        writeln!(f, "  tau^{}(z): {} ({proper})", self.p - 1, describe(&self.properness))?;
        if let Some(fb) = &self.fallback {
            writeln!(f, "  note: {fb}")?;
        }
        write!(f, "verdict: {}", self.verdict)
    }
}

pub(crate) fn describe(s: &ZeroStatus) -> String {
    match s {
        ZeroStatus::SymbolicZero => "0 (exact)".to_string(),
        ZeroStatus::NumericallyZero { samples, max_residual } => {
            format!("0 at {samples} points (max residual {max_residual:.1e})")
        }
        ZeroStatus::NonZero { witness, value, residual } => {
            format!("nonzero at {witness:?}: {}{:+}i (residual {residual:.1e})", value[0], value[1])
        }
        ZeroStatus::Inconclusive { samples, max_residual } => {
            format!("inconclusive after {samples} points (max residual {max_residual:.1e})")
        }
    }
}

/// `{status, residual, samples?, witness?, value?}`.
pub fn status_json(s: &ZeroStatus) -> Value {
    let mut v = json!({ "status": s.tag(), "residual": s.residual() });
    match s {
        ZeroStatus::SymbolicZero => {}
        ZeroStatus::NumericallyZero { samples, .. } | ZeroStatus::Inconclusive { samples, .. } => {
            v["samples"] = json!(samples);
        }
        ZeroStatus::NonZero { witness, value, .. } => {
            v["witness"] = json!(witness);
            v["value"] = json!(value);
        }
    }
    v
}

fn proper_from(s: &ZeroStatus) -> Option<bool> {
    match s {
        ZeroStatus::NonZero { .. } => Some(true),
        ZeroStatus::SymbolicZero | ZeroStatus::NumericallyZero { .. } => Some(false),
        ZeroStatus::Inconclusive { .. } => None,
    }
}

/// The scalar quantities a check is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Quantity {
    Kappa,
    Gradient,
    /// `τ^p(z^j conj(z)^k)`.
    Tension { p: usize, j: u32, k: u32 },
}

impl Probe for Quantity {
    fn order(&self) -> usize {
        match self {
            Quantity::Kappa | Quantity::Gradient => 1,
            Quantity::Tension { p, .. } => 2 * p,
        }
    }

    fn eval<F: Field>(&self, f: &mut F, m: &mut Monomials<F::V>) -> Result<F::V> {
        match *self {
            Quantity::Kappa => {
                let z = f.truncate(m.z(), 1);
                f.kappa(&z, &z)
            }
            Quantity::Gradient => {
                let z = f.truncate(m.z(), 1);
                let zb = f.truncate(m.zbar(), 1);
                f.kappa(&z, &zb)
            }
            Quantity::Tension { p, j, k } => m.tau(f, p, j, k),
        }
    }

    fn label(&self) -> String {
        match self {
            Quantity::Kappa => "kappa(z,z)".to_string(),
            Quantity::Gradient => "kappa(z,conj z)".to_string(),
            Quantity::Tension { p, j, k } => format!("tau^{p}(z^{j} conj(z)^{k})"),
        }
    }
}

fn verdict<'a>(entries: impl IntoIterator<Item = (ConditionLabel, &'a ZeroStatus)>) -> Verdict {
    let entries: Vec<_> = entries.into_iter().collect();
    if let Some((l, _)) = entries.iter().find(|(_, s)| s.is_nonzero()) {
        return Verdict::Fails(*l);
    }
    if entries.iter().any(|(_, s)| !s.is_zero()) {
        Verdict::Undetermined
    } else if entries.iter().all(|(_, s)| s.is_symbolic()) {
        Verdict::Holds
    } else {
        Verdict::HoldsNumericallyOnly
    }
}

/// Checks whether `z` is a (p,q)-harmonic morphism and whether it is proper.
pub fn check_morphism(z: &ComplexFunction, p: u32, q: u32, opts: &CheckOptions) -> Result<MorphismReport> {
    let sys = condition_system(p, q)?;
    let pu = p as usize;
    let mut qs = vec![Quantity::Kappa];
    if sys.constancy_mode {
        qs.push(Quantity::Gradient);
    }
    qs.extend(sys.monomials.iter().map(|&(j, k)| Quantity::Tension { p: pu, j, k }));
    qs.push(Quantity::Tension { p: pu - 1, j: 1, k: 0 });
    let batch = certify(&qs, z, &opts.policy, opts.mode.backends())?;
    let mut statuses = batch.results.into_iter().map(|c| c.status);

    let kappa = statuses.next().expect("kappa entry");
    let gradient = if sys.constancy_mode { statuses.next() } else { None };
    let conditions: Vec<ConditionResult> = sys
        .monomials
        .iter()
        .map(|&(j, k)| ConditionResult { j, k, status: statuses.next().expect("condition entry") })
        .collect();
    let properness = statuses.next().expect("properness entry");

    let mut entries = vec![(ConditionLabel::Kappa, &kappa)];
    if let Some(g) = &gradient {
        entries.push((ConditionLabel::Gradient, g));
    }
    entries.extend(conditions.iter().map(|c| (ConditionLabel::Monomial { j: c.j, k: c.k }, &c.status)));
    let verdict = verdict(entries);

    Ok(MorphismReport {
        candidate: format(&z.expr),
        dim: z.dim(),
        p,
        q,
        mode: opts.mode,
        constancy_mode: sys.constancy_mode,
        kappa,
        gradient,
        conditions,
        properness,
        verdict,
        fallback: batch.fallback,
    })
}

/// Status of `τ^(p-1)(z)`: a nonzero witness means `z` is proper at `p`.
pub fn check_properness(z: &ComplexFunction, p: u32, opts: &CheckOptions) -> Result<ZeroStatus> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    let q = [Quantity::Tension { p: p as usize - 1, j: 1, k: 0 }];
    let batch = certify(&q, z, &opts.policy, opts.mode.backends())?;
    Ok(batch.results.into_iter().next().expect("one entry").status)
}

/// Where a grid verdict came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Checked,
    /// Follows from the verdict at another cell: holding at (p,q) implies
    /// holding at (p',q') for `p' >= p`, `q' <= q`, and failing propagates
    /// the other way.
    Implied { p: u32, q: u32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub p: u32,
    pub q: u32,
    pub verdict: Verdict,
    pub source: Source,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub cells: Vec<GridCell>,
    /// Smallest `p` with (p,1) holding.
    pub minimal_p: Option<u32>,
    /// Properness at `minimal_p`.
    pub proper: Option<bool>,
    pub reports: Vec<MorphismReport>,
}

impl Classification {
    pub fn cell(&self, p: u32, q: u32) -> Option<&GridCell> {
        self.cells.iter().find(|c| c.p == p && c.q == q)
    }

    /// `"(p,1) proper"` style label, or `None` if no `p` in range worked.
    pub fn label(&self) -> Option<String> {
        let p = self.minimal_p?;
        let tail = match self.proper {
            Some(true) => " proper",
            Some(false) => " not proper",
            None => "",
        };
        Some(format!("({p},1){tail}"))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": SCHEMA_VERSION,
            "grid": self.cells.iter().map(|c| {
                let mut e = json!({ "p": c.p, "q": c.q, "verdict": c.verdict.name() });
                if let Source::Implied { p, q } = c.source {
                    e["implied_by"] = json!([p, q]);
                }
                e
            }).collect::<Vec<_>>(),
            "minimal_p": self.minimal_p,
            "proper": self.proper,
            "reports": self.reports.iter().map(MorphismReport::to_json).collect::<Vec<_>>(),
        })
    }
}

/// Runs the (p,q) grid in order of increasing `p`, then `q`, skipping cells
/// whose verdict follows from monotonicity.
pub fn classify(z: &ComplexFunction, max_p: u32, max_q: u32, opts: &CheckOptions) -> Result<Classification> {
    let mut cells: Vec<GridCell> = Vec::new();
    let mut reports = Vec::new();
    for p in 1..=max_p {
        for q in 1..=max_q {
            let implied_hold = cells
                .iter()
                .find(|c| c.source == Source::Checked && c.verdict.holds() && c.p <= p && c.q >= q);
            let implied_fail = cells
                .iter()
                .find(|c| c.source == Source::Checked && matches!(c.verdict, Verdict::Fails(_)) && c.p >= p && c.q <= q);
            let cell = match (implied_hold, implied_fail) {
                (Some(c), _) | (None, Some(c)) => {
                    GridCell { p, q, verdict: c.verdict, source: Source::Implied { p: c.p, q: c.q } }
                }
                (None, None) => {
                    let r = check_morphism(z, p, q, opts)?;
                    let cell = GridCell { p, q, verdict: r.verdict, source: Source::Checked };
                    reports.push(r);
                    cell
                }
            };
            cells.push(cell);
        }
    }
    let minimal = reports.iter().find(|r| r.q == 1 && r.holds());
    Ok(Classification {
        minimal_p: minimal.map(|r| r.p),
        proper: minimal.and_then(MorphismReport::proper),
        cells,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Domain, Relation};
    use crate::parse::parse;

    fn radial() -> ComplexFunction {
        let d = Domain::new(4).with_guard(parse("abs2(1,3)", 4).unwrap(), Relation::Positive).unwrap();
        ComplexFunction::new(parse("sqrt(abs2(1,3)) + i*x4", 4).unwrap(), d).unwrap()
    }

    fn quick(mode: Mode) -> CheckOptions {
        CheckOptions { mode, policy: ZeroPolicy { samples: 8, ..ZeroPolicy::default() } }
    }

    #[test]
    fn condition_lists() {
        assert_eq!(condition_system(2, 1).unwrap().monomials, vec![(1, 0), (2, 0)]);
        assert_eq!(condition_system(2, 2).unwrap().monomials, vec![(1, 0), (2, 0), (1, 1), (2, 1)]);
        let s = condition_system(1, 2).unwrap();
        assert!(s.constancy_mode && s.monomials.is_empty());
        assert!(condition_system(0, 1).is_err());
    }

    #[test]
    fn radial_example_is_proper_biharmonic_morphism() {
        for mode in [Mode::SymbolicFirst, Mode::NumericOnly] {
            let r = check_morphism(&radial(), 2, 1, &quick(mode)).unwrap();
            assert!(r.holds(), "{r}");
            assert_eq!(r.proper(), Some(true), "{r}");
        }
        let r = check_morphism(&radial(), 2, 1, &quick(Mode::SymbolicFirst)).unwrap();
        assert_eq!(r.verdict, Verdict::Holds, "{r}");
    }

    #[test]
    fn radial_example_fails_two_two() {
        let r = check_morphism(&radial(), 2, 2, &quick(Mode::SymbolicFirst)).unwrap();
        assert_eq!(r.verdict, Verdict::Fails(ConditionLabel::Monomial { j: 2, k: 1 }), "{r}");
        assert!(r.condition(1, 1).unwrap().is_zero());
    }

    #[test]
    fn holomorphic_is_not_proper_at_two() {
        let z = ComplexFunction::parse("x1 + i*x2", 2).unwrap();
        let r = check_morphism(&z, 2, 1, &quick(Mode::SymbolicFirst)).unwrap();
        assert_eq!(r.verdict, Verdict::Holds);
        assert_eq!(r.proper(), Some(false));
        assert_eq!(check_properness(&z, 2, &quick(Mode::SymbolicFirst)).unwrap(), ZeroStatus::SymbolicZero);
    }

    #[test]
    fn constancy_mode() {
        let z = ComplexFunction::parse("x1 + i*x2", 2).unwrap();
        let r = check_morphism(&z, 1, 2, &quick(Mode::SymbolicFirst)).unwrap();
        assert_eq!(r.verdict, Verdict::Fails(ConditionLabel::Gradient));
        let c = ComplexFunction::parse("3 + 2*i", 2).unwrap();
        let r = check_morphism(&c, 1, 2, &quick(Mode::NumericOnly)).unwrap();
        assert!(r.holds(), "{r}");
    }

    #[test]
    fn budget_fallback_is_recorded() {
        let opts = CheckOptions {
            mode: Mode::SymbolicFirst,
            policy: ZeroPolicy { samples: 5, budget: 50, ..ZeroPolicy::default() },
        };
        let r = check_morphism(&radial(), 2, 1, &opts).unwrap();
        assert!(r.fallback.is_some());
        assert_eq!(r.verdict, Verdict::HoldsNumericallyOnly, "{r}");
    }

    #[test]
    fn classification_prunes() {
        let c = classify(&radial(), 3, 2, &quick(Mode::SymbolicFirst)).unwrap();
        assert_eq!(c.minimal_p, Some(2));
        assert_eq!(c.proper, Some(true));
        assert_eq!(c.label().unwrap(), "(2,1) proper");
        assert_eq!(c.cell(3, 1).unwrap().source, Source::Implied { p: 2, q: 1 });
        assert!(!c.cell(1, 2).unwrap().verdict.holds());
    }

    #[test]
    fn report_json_shape() {
        let r = check_morphism(&radial(), 2, 1, &quick(Mode::SymbolicFirst)).unwrap();
        let v = r.to_json();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["conditions"].as_array().unwrap().len(), 2);
        assert_eq!(v["conditions"][1]["j"], 2);
        assert_eq!(v["proper"], true);
        assert_eq!(v["proper_status"]["witness"].as_array().unwrap().len(), 4);
    }
}
