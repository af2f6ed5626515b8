//! Numeric probes of two open statements: that every `Σ a_j F_j` over the
//! inversion components of `R^(2p)` is a (p,p)-harmonic morphism, and that a
//! (p,1)-harmonic morphism on `R^(2p-1)` is harmonic.
//!
//! `κ(Σ a_j F_j, Σ a_j F_j) = (Σ a_j²) / |x|⁴`, so only coefficient vectors on
//! the null cone `Σ a_j² = 0` can pass the conformality condition. Both draws
//! are offered: generic vectors, and exact Gaussian-rational points of the
//! cone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{check_morphism, status_json, CheckOptions, MorphismReport, Quantity, Verdict};
use crate::calculus::certify::certify;
use crate::calculus::ComplexFunction;
use crate::construct::{punctured, InversionMap};
use crate::error::{Error, Result};
use crate::expr::{coeff, rational, Coeff, Expr, Rational, ZeroStatus};
use crate::parse::format;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Draw {
    /// Gaussian integers with parts in `[-4, 4]`.
    Generic,
    /// Exact points of `Σ a_j² = 0`.
    #[default]
    NullCone,
}

impl Draw {
    pub fn name(self) -> &'static str {
        match self {
            Draw::Generic => "generic",
            Draw::NullCone => "null_cone",
        }
    }
}

fn gaussian_int(rng: &mut ChaCha8Rng) -> Coeff {
    coeff(rational(rng.gen_range(-4..=4), 1), rational(rng.gen_range(-4..=4), 1))
}

fn quadratic(a: &[Coeff]) -> Coeff {
    a.iter().fold(Coeff::new(Rational::from_integer(0.into()), Rational::from_integer(0.into())), |s, x| s + x * x)
}

/// A coefficient vector in `Q(i)^(2p)`.
pub fn draw_coefficients(rng: &mut ChaCha8Rng, p: usize, draw: Draw) -> Vec<Coeff> {
    let n = 2 * p;
    loop {
        let w: Vec<Coeff> = (0..n).map(|_| gaussian_int(rng)).collect();
        if w.iter().all(|c| c.re == Rational::from_integer(0.into()) && c.im == Rational::from_integer(0.into())) {
            continue;
        }
        if draw == Draw::Generic {
            return w;
        }
        // Move along the isotropic direction e = (1, i, 0, ..): Q(w + t e) =
        // Q(w) + 2t B(e, w), which vanishes at t = -Q(w) / 2B(e, w).
        let b = w[0].clone() + w[1].clone() * coeff(rational(0, 1), rational(1, 1));
        if b == coeff(rational(0, 1), rational(0, 1)) {
            continue;
        }
        let t = -quadratic(&w) / (b * coeff(rational(2, 1), rational(0, 1)));
        let mut a = w;
        a[0] = a[0].clone() + t.clone();
        a[1] = a[1].clone() + t * coeff(rational(0, 1), rational(1, 1));
        if a.iter().any(|c| c.re != Rational::from_integer(0.into()) || c.im != Rational::from_integer(0.into())) {
            return a;
        }
    }
}

/// `Σ a_j F_j` on `R^(2p) \ {0}`.
pub fn inversion_combination(a: &[Coeff]) -> Result<ComplexFunction> {
    if a.is_empty() || a.len() % 2 == 1 {
        return Err(Error::OddDimension(a.len()));
    }
    let inv = InversionMap::new(a.len() / 2);
    let expr = Expr::sum(inv.components.iter().zip(a).map(|(f, c)| f.scale(c)).collect::<Vec<_>>());
    ComplexFunction::new(expr, punctured(a.len()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub a: Vec<Coeff>,
    pub report: MorphismReport,
}

impl Trial {
    /// Whether every `τ^p(z^j conj(z)^k)` condition vanished, ignoring `κ(z,z)`.
    pub fn monomials_vanish(&self) -> bool {
        self.report.conditions.iter().all(|c| c.status.is_zero())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConjectureOneReport {
    pub p: u32,
    pub draw: Draw,
    pub trials: Vec<Trial>,
}

impl ConjectureOneReport {
    pub fn all_hold(&self) -> bool {
        self.trials.iter().all(|t| t.report.holds())
    }

    pub fn max_residual(&self) -> f64 {
        self.trials
            .iter()
            .flat_map(|t| t.report.conditions.iter().map(|c| c.status.residual()))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": super::SCHEMA_VERSION,
            "p": self.p,
            "draw": self.draw.name(),
            "all_hold": self.all_hold(),
            "trials": self.trials.iter().map(|t| json!({
                "a": t.a.iter().map(|c| format(&Expr::constant(c.clone()))).collect::<Vec<_>>(),
                "monomials_vanish": t.monomials_vanish(),
                "report": t.report.to_json(),
            })).collect::<Vec<_>>(),
        })
    }
}

/// Draws `trials` coefficient vectors from `seed` and checks the (p,p)
/// system of each `Σ a_j F_j`.
pub fn conjecture_one(p: u32, trials: usize, draw: Draw, seed: u64, opts: &CheckOptions) -> Result<ConjectureOneReport> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let a = draw_coefficients(&mut rng, p as usize, draw);
        let z = inversion_combination(&a)?;
        let report = check_morphism(&z, p, p, opts)?;
        out.push(Trial { a, report });
    }
    Ok(ConjectureOneReport { p, draw, trials: out })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConjectureTwoReport {
    pub p: u32,
    pub report: MorphismReport,
    /// `τ(φ)`, checked only when the (p,1) system holds.
    pub tension: Option<ZeroStatus>,
}

impl ConjectureTwoReport {
    /// `Some(false)` for a candidate that is a (p,1)-harmonic morphism with
    /// nonvanishing tension, i.e. a counterexample.
    pub fn consistent(&self) -> Option<bool> {
        match (&self.report.verdict, &self.tension) {
            (Verdict::Fails(_), _) => Some(true),
            (_, Some(t)) if t.is_zero() => Some(true),
            (_, Some(t)) if t.is_nonzero() => Some(false),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": super::SCHEMA_VERSION,
            "p": self.p,
            "report": self.report.to_json(),
            "tension": self.tension.as_ref().map(status_json),
            "consistent": self.consistent(),
        })
    }
}

/// For `φ` on `R^(2p-1)`: checks (p,1), and if it holds, whether `τ(φ) = 0`.
pub fn conjecture_two(phi: &ComplexFunction, p: u32, opts: &CheckOptions) -> Result<ConjectureTwoReport> {
    if p < 2 {
        return Err(Error::InvalidArgument("the statement concerns p >= 2".into()));
    }
    if phi.dim() != 2 * p as usize - 1 {
        return Err(Error::DimensionMismatch { left: phi.dim(), right: 2 * p as usize - 1 });
    }
    let report = check_morphism(phi, p, 1, opts)?;
    let tension = if report.holds() || report.verdict == Verdict::Undetermined {
        let q = [Quantity::Tension { p: 1, j: 1, k: 0 }];
        Some(certify(&q, phi, &opts.policy, opts.mode.backends())?.results.remove(0).status)
    } else {
        None
    };
    Ok(ConjectureTwoReport { p, report, tension })
}
