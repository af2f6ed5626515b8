//! Certifies a batch of quantities that should vanish: normal forms in one
//! shared context first, then seeded sampling of whatever is left, with all
//! quantities evaluated at the same points from one jet of `z`.

use crate::error::{Error, Result};
use crate::expr::{is_zero, sample_zeros, Expr, ZeroPolicy, ZeroStatus};
use crate::jet::{eval_jet, Scaled};
use num_complex::Complex64;

use super::field::{Field, Monomials, Num, Sym};
use super::identities::{Backends, SymbolicOutcome};
use super::{Calculus, ComplexFunction};

/// A quantity built from `z` that is expected to vanish.
pub(crate) trait Probe {
    /// Highest derivative order involved; selects the tolerance.
    fn order(&self) -> usize;
    fn eval<F: Field>(&self, f: &mut F, m: &mut Monomials<F::V>) -> Result<F::V>;
    fn label(&self) -> String;
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Certified {
    pub symbolic: SymbolicOutcome,
    pub numeric: Option<ZeroStatus>,
    pub status: ZeroStatus,
}

pub(crate) struct Batch {
    pub results: Vec<Certified>,
    /// Set when the symbolic pass stopped early or could not be attempted.
    pub fallback: Option<String>,
}

pub(crate) fn certify<P: Probe>(
    probes: &[P],
    z: &ComplexFunction,
    policy: &ZeroPolicy,
    backends: Backends,
) -> Result<Batch> {
    let n = probes.len();
    let euclidean = z.metric.is_euclidean();
    let mut symbolic = vec![SymbolicOutcome::NotAttempted; n];
    let mut residuals: Vec<Option<Expr>> = vec![None; n];
    let mut fallback = None;

    if backends != Backends::NumericOnly || !euclidean {
        if backends == Backends::NumericOnly {
            fallback = Some("numeric backend needs a Euclidean chart; used normal forms".to_string());
        }
        let mut calc = Calculus::for_function(z, policy.budget)?;
        let start = Sym::new(&mut calc, &z.expr).and_then(|mut sym| {
            let m = Monomials::new(&mut sym)?;
            Ok((sym, m))
        });
        match start {
            Ok((mut sym, mut m)) => {
                for i in 0..n {
                    match probes[i].eval(&mut sym, &mut m) {
                        Ok(v) if v.is_zero() => symbolic[i] = SymbolicOutcome::Zero,
                        Ok(v) => {
                            symbolic[i] = SymbolicOutcome::Unresolved;
                            residuals[i] = Some(sym.calc.expr(&v));
                        }
                        Err(Error::ExpressionBudgetExceeded { limit }) => {
                            symbolic[i..].fill(SymbolicOutcome::BudgetExceeded);
                            fallback = Some(format!(
                                "expression budget of {limit} exceeded at {}; remaining quantities sampled",
                                probes[i].label()
                            ));
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Err(Error::ExpressionBudgetExceeded { limit }) => {
                symbolic.fill(SymbolicOutcome::BudgetExceeded);
                fallback = Some(format!("expression budget of {limit} exceeded before any quantity; all sampled"));
            }
            Err(e) => return Err(e),
        }
    }

    let wanted: Vec<usize> = (0..n)
        .filter(|&i| backends != Backends::SymbolicFirst || symbolic[i] != SymbolicOutcome::Zero)
        .collect();
    let mut numeric: Vec<Option<ZeroStatus>> = vec![None; n];
    if !wanted.is_empty() {
        if euclidean {
            let tols: Vec<f64> = wanted.iter().map(|&i| policy.tolerance(probes[i].order())).collect();
            let order = wanted.iter().map(|&i| probes[i].order()).max().unwrap_or(0);
            let statuses = sample_zeros(&z.domain, policy, &tols, |pt, active| {
                let mut num = Num { z: eval_jet(&z.expr, pt, order)? };
                let mut m = Monomials::new(&mut num)?;
                wanted
                    .iter()
                    .zip(active)
                    .map(|(&i, &a)| {
                        if !a {
                            return Ok(Scaled { value: Complex64::new(0.0, 0.0), scale: 0.0 });
                        }
                        let v = probes[i].eval(&mut num, &mut m)?;
                        Ok(Num::scaled(&v.truncate(0)))
                    })
                    .collect()
            })?;
            for (&i, s) in wanted.iter().zip(statuses) {
                numeric[i] = Some(s);
            }
        } else {
            for &i in &wanted {
                if let Some(e) = &residuals[i] {
                    numeric[i] = Some(is_zero(e, &z.domain, policy)?);
                }
            }
        }
    }

    let results = symbolic
        .into_iter()
        .zip(numeric)
        .map(|(symbolic, numeric)| {
            let status = match (&symbolic, &numeric) {
                (_, Some(s)) if s.is_nonzero() => s.clone(),
                (SymbolicOutcome::Zero, _) => ZeroStatus::SymbolicZero,
                (_, Some(s)) => s.clone(),
                (_, None) => ZeroStatus::Inconclusive { samples: 0, max_residual: f64::NAN },
            };
            Certified { symbolic, numeric, status }
        })
        .collect();
    Ok(Batch { results, fallback })
}
