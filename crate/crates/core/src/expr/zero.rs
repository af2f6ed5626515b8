//! Zero testing: certified simplification first, seeded sampling second.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{simplify_with, Expr, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::jet::{eval_jet, Scaled};

/// Side condition on the chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// Real and strictly positive.
    Positive,
    NonZero,
    /// Off the closed negative real half-axis, i.e. away from the principal
    /// branch cut of `sqrt` and `log`.
    OffNegativeAxis,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Positive => ">0",
            Relation::NonZero => "!=0",
            Relation::OffNegativeAxis => "!<=0",
        }
    }

    /// Whether `v` satisfies the relation with margin `eps`.
    pub fn holds(self, v: Complex64, eps: f64) -> bool {
        match self {
            Relation::Positive => v.re > eps && v.im.abs() <= 1e-12 * v.re.max(1.0),
            Relation::NonZero => v.norm() > eps,
            Relation::OffNegativeAxis => v.re > eps || v.im.abs() > eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Guard {
    pub expr: Expr,
    pub relation: Relation,
}

/// Chart dimension, guards and the sampling box.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub dim: usize,
    pub guards: Vec<Guard>,
    /// Per-variable sampling interval.
    pub bounds: Vec<(f64, f64)>,
    pub margin: f64,
}

impl Domain {
    /// All of `R^dim`, sampled in `[-2, 2]^dim` with margin 0.1.
    pub fn new(dim: usize) -> Domain {
        Domain { dim, guards: Vec::new(), bounds: vec![(-2.0, 2.0); dim], margin: 0.1 }
    }

    pub fn with_guard(mut self, expr: Expr, relation: Relation) -> Result<Domain> {
        let v = expr.max_var();
        if v as usize > self.dim {
            return Err(Error::VariableOutOfRange { index: v, dim: self.dim });
        }
        self.guards.push(Guard { expr, relation });
        Ok(self)
    }

    pub fn with_box(mut self, lo: f64, hi: f64) -> Domain {
        self.bounds = vec![(lo, hi); self.dim];
        self
    }

    pub fn with_margin(mut self, eps: f64) -> Domain {
        self.margin = eps;
        self
    }

    /// Whether `point` satisfies every guard with the configured margin.
    pub fn admits(&self, point: &[f64]) -> bool {
        self.guards.iter().all(|g| match eval_jet(&g.expr, point, 0) {
            Ok(j) => g.relation.holds(j.value(), self.margin),
            Err(_) => false,
        })
    }
}

/// Seeded sampler of admissible points.
pub struct Sampler<'a> {
    domain: &'a Domain,
    rng: ChaCha8Rng,
    attempts: usize,
}

impl<'a> Sampler<'a> {
    pub fn new(domain: &'a Domain, seed: u64) -> Self {
        Sampler { domain, rng: ChaCha8Rng::seed_from_u64(seed), attempts: 10_000 }
    }

    pub fn with_attempts(mut self, attempts: usize) -> Self {
        self.attempts = attempts.max(1);
        self
    }

    pub fn sample(&mut self) -> Result<Vec<f64>> {
        for _ in 0..self.attempts {
            let p: Vec<f64> = self
                .domain
                .bounds
                .iter()
                .map(|&(lo, hi)| self.rng.gen_range(lo..hi))
                .collect();
            if self.domain.admits(&p) {
                return Ok(p);
            }
        }
        Err(Error::SamplingFailed { attempts: self.attempts })
    }
}

/// Outcome of a zero test.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ZeroStatus {
    /// Simplification produced the literal zero.
    SymbolicZero,
    /// Every sampled scaled residual is within tolerance.
    NumericallyZero { samples: usize, max_residual: f64 },
    /// A witness point with scaled residual above ten times the tolerance.
    NonZero { witness: Vec<f64>, value: [f64; 2], residual: f64 },
    /// Residuals above tolerance but never above ten times it.
    Inconclusive { samples: usize, max_residual: f64 },
}

impl ZeroStatus {
    pub fn is_zero(&self) -> bool {
        matches!(self, ZeroStatus::SymbolicZero | ZeroStatus::NumericallyZero { .. })
    }

    pub fn is_nonzero(&self) -> bool {
        matches!(self, ZeroStatus::NonZero { .. })
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, ZeroStatus::SymbolicZero)
    }

    /// Largest scaled residual observed (0 for a symbolic zero).
    pub fn residual(&self) -> f64 {
        match self {
            ZeroStatus::SymbolicZero => 0.0,
            ZeroStatus::NumericallyZero { max_residual, .. }
            | ZeroStatus::Inconclusive { max_residual, .. } => *max_residual,
            ZeroStatus::NonZero { residual, .. } => *residual,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            ZeroStatus::SymbolicZero => "symbolic_zero",
            ZeroStatus::NumericallyZero { .. } => "numerically_zero",
            ZeroStatus::NonZero { .. } => "non_zero",
            ZeroStatus::Inconclusive { .. } => "inconclusive",
        }
    }
}

/// Sampling and tolerance settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroPolicy {
    pub samples: usize,
    /// Overrides the order-dependent default tolerance when set.
    pub tol: Option<f64>,
    pub seed: u64,
    pub budget: u64,
    pub attempts: usize,
}

impl Default for ZeroPolicy {
    fn default() -> Self {
        ZeroPolicy { samples: 20, tol: None, seed: 0, budget: DEFAULT_BUDGET, attempts: 10_000 }
    }
}

impl ZeroPolicy {
    /// Tolerance for a quantity involving derivatives of total order `order`:
    /// `1e-8` up to order 6, `1e-6` beyond.
    pub fn tolerance(&self, order: usize) -> f64 {
        self.tol.unwrap_or(if order <= 6 { 1e-8 } else { 1e-6 })
    }
}

/// Samples `f` at admissible points of `domain` and classifies the result.
///
/// Points where `f` hits a branch cut or a domain error are skipped; they
/// count against the attempt budget.
pub fn sample_zero(
    domain: &Domain,
    policy: &ZeroPolicy,
    tol: f64,
    mut f: impl FnMut(&[f64]) -> Result<Scaled>,
) -> Result<ZeroStatus> {
    let mut sampler = Sampler::new(domain, policy.seed).with_attempts(policy.attempts);
    let mut max_residual: f64 = 0.0;
    let mut used = 0;
    let mut skipped = 0;
    while used < policy.samples {
        let p = sampler.sample()?;
        let s = match f(&p) {
            Ok(s) => s,
            Err(Error::BranchCutViolation { .. } | Error::DomainViolation { .. } | Error::DivisionByZero) => {
                skipped += 1;
                if skipped >= policy.attempts {
                    return Err(Error::SamplingFailed { attempts: skipped });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let r = s.residual();
        if !r.is_finite() {
            skipped += 1;
            if skipped >= policy.attempts {
                return Err(Error::SamplingFailed { attempts: skipped });
            }
            continue;
        }
        used += 1;
        if r > 10.0 * tol {
            return Ok(ZeroStatus::NonZero { witness: p, value: [s.value.re, s.value.im], residual: r });
        }
        max_residual = max_residual.max(r);
    }
    if max_residual <= tol {
        Ok(ZeroStatus::NumericallyZero { samples: used, max_residual })
    } else {
        Ok(ZeroStatus::Inconclusive { samples: used, max_residual })
    }
}

/// Like [`sample_zero`] for several quantities evaluated at shared points.
///
/// `f` receives the point and a mask of the quantities still undecided; it
/// returns one value per quantity (masked entries are ignored). Sampling
/// stops early once every quantity has a nonzero witness.
pub fn sample_zeros(
    domain: &Domain,
    policy: &ZeroPolicy,
    tols: &[f64],
    mut f: impl FnMut(&[f64], &[bool]) -> Result<Vec<Scaled>>,
) -> Result<Vec<ZeroStatus>> {
    let n = tols.len();
    let mut sampler = Sampler::new(domain, policy.seed).with_attempts(policy.attempts);
    let mut max_residual = vec![0.0f64; n];
    let mut found: Vec<Option<ZeroStatus>> = vec![None; n];
    let mut used = 0;
    let mut skipped = 0;
    while used < policy.samples && found.iter().any(Option::is_none) {
        let p = sampler.sample()?;
        let active: Vec<bool> = found.iter().map(Option::is_none).collect();
        let values = match f(&p, &active) {
            Ok(v) => v,
            Err(Error::BranchCutViolation { .. } | Error::DomainViolation { .. } | Error::DivisionByZero) => {
                skipped += 1;
                if skipped >= policy.attempts {
                    return Err(Error::SamplingFailed { attempts: skipped });
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let residuals: Vec<f64> = values.iter().map(Scaled::residual).collect();
        if residuals.iter().zip(&active).any(|(r, a)| *a && !r.is_finite()) {
            skipped += 1;
            if skipped >= policy.attempts {
                return Err(Error::SamplingFailed { attempts: skipped });
            }
            continue;
        }
        used += 1;
        for i in (0..n).filter(|&i| active[i]) {
            let r = residuals[i];
            if r > 10.0 * tols[i] {
                let v = values[i].value;
                found[i] = Some(ZeroStatus::NonZero { witness: p.clone(), value: [v.re, v.im], residual: r });
            } else {
                max_residual[i] = max_residual[i].max(r);
            }
        }
    }
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.unwrap_or(if max_residual[i] <= tols[i] {
                ZeroStatus::NumericallyZero { samples: used, max_residual: max_residual[i] }
            } else {
                ZeroStatus::Inconclusive { samples: used, max_residual: max_residual[i] }
            })
        })
        .collect())
}

/// Decides whether `e` vanishes on `domain`.
pub fn is_zero(e: &Expr, domain: &Domain, policy: &ZeroPolicy) -> Result<ZeroStatus> {
    let v = e.max_var();
    if v as usize > domain.dim {
        return Err(Error::VariableOutOfRange { index: v, dim: domain.dim });
    }
    let simplified = match simplify_with(e, policy.budget) {
        Ok(s) => s,
        Err(Error::ExpressionBudgetExceeded { .. }) => e.clone(),
        Err(err) => return Err(err),
    };
    if simplified.is_zero() {
        return Ok(ZeroStatus::SymbolicZero);
    }
    let tol = policy.tolerance(0);
    sample_zero(domain, policy, tol, |p| {
        let j = eval_jet(&simplified, p, 0)?;
        Ok(Scaled { value: j.value(), scale: j.magnitudes()[0] })
    })
}
