//! The coefficient functions `c_jk` of `τ^p(f∘z) = Σ c_jk ∂^(j+k)f/∂z^j∂conj(z)^k`
//! and their consistency checks.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{status_json, CheckOptions, Quantity};
use crate::calculus::certify::{certify, Probe};
use crate::calculus::field::{coefficient_terms, eval_terms, Field, Monomials, Num, Sym};
use crate::calculus::identities::bitension_brackets;
use crate::calculus::{Calculus, ComplexFunction, WPoly};
use crate::error::{Error, Result};
use crate::expr::{coeff_int, Expr, ZeroStatus};
use crate::jet::eval_jet;

/// All `c_jk` with `1 <= j+k <= 2p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub p: usize,
    pub entries: BTreeMap<(u32, u32), Expr>,
}

impl Coefficients {
    pub fn get(&self, j: u32, k: u32) -> Option<&Expr> {
        self.entries.get(&(j, k))
    }
}

fn index_set(p: usize) -> Vec<(u32, u32)> {
    let n = 2 * p as u32;
    let mut out = Vec::new();
    for total in 1..=n {
        for j in (0..=total).rev() {
            out.push((j, total - j));
        }
    }
    out
}

/// The coefficients in normal form, from the closed formula in `τ^p(z^r conj(z)^s)`.
pub fn coefficients(z: &ComplexFunction, p: usize, budget: u64) -> Result<Coefficients> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    let mut calc = Calculus::for_function(z, budget)?;
    let mut sym = Sym::new(&mut calc, &z.expr)?;
    let mut m = Monomials::new(&mut sym)?;
    let mut entries = BTreeMap::new();
    for (j, k) in index_set(p) {
        let v = eval_terms(&mut sym, &mut m, p, &coefficient_terms(j, k))?;
        entries.insert((j, k), sym.calc.expr(&v));
    }
    Ok(Coefficients { p, entries })
}

/// The coefficients at one point of a Euclidean chart.
pub fn coefficients_at(z: &ComplexFunction, p: usize, point: &[f64]) -> Result<BTreeMap<(u32, u32), Complex64>> {
    if !z.metric.is_euclidean() {
        return Err(Error::InvalidArgument("numeric coefficients need a Euclidean chart".into()));
    }
    let mut num = Num { z: eval_jet(&z.expr, point, 2 * p)? };
    let mut m = Monomials::new(&mut num)?;
    index_set(p)
        .into_iter()
        .map(|(j, k)| Ok(((j, k), eval_terms(&mut num, &mut m, p, &coefficient_terms(j, k))?.value())))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
enum Check {
    /// `c_jk - conj(c_kj)`.
    Symmetry(u32, u32),
    /// `c_10 - τ^p(z)`.
    Linear,
    /// `c_(2p,0) - κ(z,z)^p`.
    Top,
    /// `c_(0,2p) - κ(conj z, conj z)^p`.
    TopConj,
    /// `c_pp - 2^p κ(z,conj z)^p`; only valid when `κ(z,z) = 0`.
    Diagonal,
    /// `c_20` against its form in `τ`, `κ` (p = 2).
    Bracket,
    /// `Σ c_jk ∂^(j+k)f/∂z^j∂conj(z)^k - τ^p(f∘z)` for a test polynomial `f`.
    Reconstruction(WPoly),
}

struct CoefProbe {
    p: usize,
    check: Check,
}

fn coef<F: Field>(f: &mut F, m: &mut Monomials<F::V>, p: usize, j: u32, k: u32) -> Result<F::V> {
    eval_terms(f, m, p, &coefficient_terms(j, k))
}

impl Probe for CoefProbe {
    fn order(&self) -> usize {
        2 * self.p
    }

    fn eval<F: Field>(&self, f: &mut F, m: &mut Monomials<F::V>) -> Result<F::V> {
        let p = self.p;
        let z = m.z().clone();
        let zb = m.zbar().clone();
        match &self.check {
            Check::Symmetry(j, k) => {
                let a = coef(f, m, p, *j, *k)?;
                let b = coef(f, m, p, *k, *j)?;
                let bc = f.conj(&b)?;
                f.sub(&a, &bc)
            }
            Check::Linear => {
                let a = coef(f, m, p, 1, 0)?;
                let t = f.tau_n(&z, p)?;
                f.sub(&a, &t)
            }
            Check::Top | Check::TopConj => {
                let (j, k, w) = if self.check == Check::Top { (2 * p as u32, 0, z) } else { (0, 2 * p as u32, zb) };
                let a = coef(f, m, p, j, k)?;
                let kw = f.kappa(&w, &w)?;
                let kp = f.pow(&kw, p as u32)?;
                f.sub(&a, &kp)
            }
            Check::Diagonal => {
                let a = coef(f, m, p, p as u32, p as u32)?;
                let k = f.kappa(&z, &zb)?;
                let kp = f.pow(&k, p as u32)?;
                let kp = f.scale(&kp, &coeff_int(1 << p));
                f.sub(&a, &kp)
            }
            Check::Bracket => {
                let a = coef(f, m, 2, 2, 0)?;
                let brackets = bitension_brackets(f)?;
                let b = brackets.into_iter().find(|(jk, _)| *jk == (2, 0)).expect("c20 bracket").1;
                f.sub(&a, &b)
            }
            Check::Reconstruction(poly) => {
                let fz = poly.eval(f, m)?;
                let direct = f.tau_n(&fz, p)?;
                let mut acc = f.constant(&coeff_int(0));
                for (j, k) in index_set(p) {
                    let d = poly.derivative(j, k);
                    if d.is_zero() {
                        continue;
                    }
                    let c = coef(f, m, p, j, k)?;
                    let dv = d.eval(f, m)?;
                    let t = f.mul(&c, &dv)?;
                    acc = f.add(&acc, &t)?;
                }
                f.sub(&acc, &direct)
            }
        }
    }

    fn label(&self) -> String {
        match &self.check {
            Check::Symmetry(j, k) => format!("symmetry c{j}{k}"),
            Check::Linear => "c10 = tau^p(z)".into(),
            Check::Top => "c(2p,0) = kappa(z,z)^p".into(),
            Check::TopConj => "c(0,2p) = kappa(conj z,conj z)^p".into(),
            Check::Diagonal => "c(p,p) = 2^p kappa(z,conj z)^p".into(),
            Check::Bracket => "c20 bracket form".into(),
            Check::Reconstruction(_) => "reconstruction".into(),
        }
    }
}

/// Outcome of the coefficient consistency checks. A failing entry is a
/// discrepancy to report, never a reason to adjust the formula.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientReport {
    pub p: usize,
    pub checks: Vec<(String, ZeroStatus)>,
    /// Checks left out, with the reason.
    pub skipped: Vec<(String, String)>,
    pub fallback: Option<String>,
}

impl CoefficientReport {
    pub fn discrepancies(&self) -> Vec<&str> {
        self.checks.iter().filter(|(_, s)| !s.is_zero()).map(|(n, _)| n.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ZeroStatus> {
        self.checks.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": super::SCHEMA_VERSION,
            "p": self.p,
            "checks": self.checks.iter().map(|(n, s)| {
                let mut e = status_json(s);
                e["name"] = json!(n);
                e
            }).collect::<Vec<_>>(),
            "skipped": self.skipped.iter().map(|(n, r)| json!({"name": n, "reason": r})).collect::<Vec<_>>(),
        })
    }
}

/// Symmetry under conjugation, the four anchors, the diagonal (for
/// horizontally conformal `z`), the bracket form of `c_20` at `p = 2`, and
/// reconstruction of `τ^p(f∘z)` for a random polynomial `f` of total degree
/// `2p`.
pub fn validate_coefficients(z: &ComplexFunction, p: usize, opts: &CheckOptions) -> Result<CoefficientReport> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    let mut checks = Vec::new();
    for (j, k) in index_set(p) {
        if j > k {
            checks.push(Check::Symmetry(j, k));
        }
    }
    checks.extend([Check::Linear, Check::Top, Check::TopConj]);
    let mut skipped = Vec::new();
    let kappa = certify(&[Quantity::Kappa], z, &opts.policy, opts.mode.backends())?;
    if kappa.results[0].status.is_zero() {
        checks.push(Check::Diagonal);
    } else {
        skipped.push(("c(p,p) = 2^p kappa(z,conj z)^p".to_string(), "kappa(z,z) does not vanish".to_string()));
    }
    if p == 2 {
        checks.push(Check::Bracket);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.policy.seed ^ 0xc0ef);
    let n = 2 * p as u32;
    checks.push(Check::Reconstruction(WPoly::random(&mut rng, n, n, n)));

    let probes: Vec<CoefProbe> = checks.into_iter().map(|check| CoefProbe { p, check }).collect();
    let batch = certify(&probes, z, &opts.policy, opts.mode.backends())?;
    Ok(CoefficientReport {
        p,
        checks: probes.iter().map(Probe::label).zip(batch.results.into_iter().map(|c| c.status)).collect(),
        skipped,
        fallback: batch.fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Domain, Relation, ZeroPolicy};
    use crate::parse::parse;

    fn quick() -> CheckOptions {
        CheckOptions { policy: ZeroPolicy { samples: 6, ..ZeroPolicy::default() }, ..CheckOptions::default() }
    }

    #[test]
    fn holomorphic_coefficients() {
        let z = ComplexFunction::parse("x1 + i*x2", 2).unwrap();
        let c = coefficients(&z, 1, crate::expr::DEFAULT_BUDGET).unwrap();
        assert!(c.get(2, 0).unwrap().is_zero());
        // 2κ(z, conj z), the factor the first-order chain rule puts on ∂²f/∂z∂conj(z).
        assert_eq!(c.get(1, 1).unwrap(), &Expr::int(4));
        assert!(c.get(1, 0).unwrap().is_zero());
        assert_eq!(c.entries.len(), 5);
    }

    #[test]
    fn radial_example_coefficients() {
        let d = Domain::new(4).with_guard(parse("abs2(1,3)", 4).unwrap(), Relation::Positive).unwrap();
        let z = ComplexFunction::new(parse("sqrt(abs2(1,3)) + i*x4", 4).unwrap(), d).unwrap();
        let c = coefficients(&z, 2, crate::expr::DEFAULT_BUDGET).unwrap();
        assert!(c.get(2, 0).unwrap().is_zero());
        let r = validate_coefficients(&z, 2, &quick()).unwrap();
        assert!(r.discrepancies().is_empty(), "{r:#?}");
        assert!(r.get("c20 bracket form").unwrap().is_symbolic());
    }

    #[test]
    fn non_conformal_skips_diagonal() {
        let z = ComplexFunction::parse("x1^2 + i*x1*x2", 2).unwrap();
        let r = validate_coefficients(&z, 2, &quick()).unwrap();
        assert!(r.discrepancies().is_empty(), "{r:#?}");
        assert_eq!(r.skipped.len(), 1);
    }

    #[test]
    fn numeric_matches_symbolic() {
        let z = ComplexFunction::parse("x1^3 - x2^2 + i*x1*x2", 2).unwrap();
        let c = coefficients(&z, 2, crate::expr::DEFAULT_BUDGET).unwrap();
        let pt = [0.3, -0.7];
        let n = coefficients_at(&z, 2, &pt).unwrap();
        for ((j, k), e) in &c.entries {
            let v = eval_jet(e, &pt, 0).unwrap().value();
            assert!((v - n[&(*j, *k)]).norm() < 1e-10 * (1.0 + v.norm()), "({j},{k})");
        }
    }
}
