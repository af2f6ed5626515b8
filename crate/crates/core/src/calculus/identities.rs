//! Checks of the product rule, conjugation symmetry, the chain rule for
//! `τ(F(z, conj z))`, and the second- and third-order expansions of
//! `τ^p(f∘z)` for a given `z`.
//!
//! Each identity is written once against [`Field`] and evaluated on both
//! backends: exact normal forms and Euclidean jets at sampled points.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::field::{coefficient_terms, eval_terms, t, Field, Monomials, Num, Sym, Term, WPoly};
use super::{Calculus, ComplexFunction};
use crate::error::{Error, Result};
use crate::expr::{coeff_int, is_zero, sample_zero, ZeroPolicy, ZeroStatus};
use crate::jet::eval_jet;

/// Which backends an identity check runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backends {
    /// Normal forms; sampling only when the difference does not reduce to 0.
    SymbolicFirst,
    NumericOnly,
    /// Both, always; the numeric result is kept even after a symbolic zero.
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolicOutcome {
    Zero,
    /// The difference normalized to something other than the literal 0.
    Unresolved,
    BudgetExceeded,
    NotAttempted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub name: &'static str,
    /// Highest derivative order involved.
    pub order: usize,
    pub symbolic: SymbolicOutcome,
    pub numeric: Option<ZeroStatus>,
    pub status: ZeroStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub function: String,
    pub checks: Vec<IdentityCheck>,
    /// Identities not applicable to this function, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl IdentityReport {
    pub fn all_zero(&self) -> bool {
        self.checks.iter().all(|c| c.status.is_zero())
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.status.residual()).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOptions {
    pub policy: ZeroPolicy,
    pub backends: Backends,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { policy: ZeroPolicy::default(), backends: Backends::Both }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    ProductRule,
    ProductRuleSquare,
    ConjugateTension,
    ConjugateKappa,
    ChainTension,
    ChainKappa,
    /// One of the seven bracket identities, 1-based.
    Bracket(u8),
    BitensionBrackets,
    BitensionMonomials,
    TritensionMonomials,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::ProductRule => "product_rule",
            Kind::ProductRuleSquare => "product_rule_square",
            Kind::ConjugateTension => "conjugate_tension",
            Kind::ConjugateKappa => "conjugate_kappa",
            Kind::ChainTension => "chain_rule_tension",
            Kind::ChainKappa => "chain_rule_kappa",
            Kind::Bracket(1) => "bracket_zz",
            Kind::Bracket(2) => "bracket_zzbar",
            Kind::Bracket(3) => "bracket_zzz",
            Kind::Bracket(4) => "bracket_zzzbar",
            Kind::Bracket(5) => "bracket_zzzbarzbar",
            Kind::Bracket(6) => "bracket_zzzzbar",
            Kind::Bracket(_) => "bracket_zzzz",
            Kind::BitensionBrackets => "bitension_brackets",
            Kind::BitensionMonomials => "bitension_monomials",
            Kind::TritensionMonomials => "tritension_monomials",
        }
    }

    fn order(self) -> usize {
        match self {
            Kind::ConjugateKappa | Kind::ChainKappa => 1,
            Kind::ProductRule | Kind::ProductRuleSquare | Kind::ConjugateTension | Kind::ChainTension => 2,
            Kind::Bracket(_) | Kind::BitensionBrackets | Kind::BitensionMonomials => 4,
            Kind::TritensionMonomials => 6,
        }
    }
}

/// Random test functions `f(z, conj z)` drawn from the policy seed.
struct TestPolys {
    chain: WPoly,
    other: WPoly,
    second: WPoly,
    third: WPoly,
}

impl TestPolys {
    fn new(seed: u64) -> TestPolys {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f00d);
        TestPolys {
            chain: WPoly::random(&mut rng, 3, 3, 3),
            other: WPoly::random(&mut rng, 2, 2, 2),
            second: WPoly::random(&mut rng, 4, 4, 4),
            third: WPoly::random(&mut rng, 4, 4, 6),
        }
    }
}

/// `Σ_{(j,k)} coefficient(j,k) · ∂^{j+k} f / ∂z^j ∂conj(z)^k`, all along `z`.
fn expand<F: Field>(
    f: &mut F,
    m: &mut Monomials<F::V>,
    poly: &WPoly,
    coefficients: &[((u32, u32), F::V)],
) -> Result<F::V> {
    let mut acc = f.constant(&coeff_int(0));
    for ((j, k), c) in coefficients {
        let d = poly.derivative(*j, *k);
        if d.is_zero() {
            continue;
        }
        let dv = d.eval(f, m)?;
        let term = f.mul(c, &dv)?;
        acc = f.add(&acc, &term)?;
    }
    Ok(acc)
}

/// The coefficients of `τ²(f∘z)` in bracket form, as sums of products of
/// `τ`, `κ` and their compositions.
pub(crate) fn bitension_brackets<F: Field>(f: &mut F) -> Result<Vec<((u32, u32), F::V)>> {
    let z = f.z();
    let zb = f.zbar()?;
    let tz = f.tau(&z)?;
    let tzb = f.conj(&tz)?;
    let t2z = f.tau(&tz)?;
    let t2zb = f.conj(&t2z)?;
    let kzz = f.kappa(&z, &z)?;
    let kzbzb = f.conj(&kzz)?;
    let kzzb = f.kappa(&z, &zb)?;

    let one = coeff_int(1);
    let two = coeff_int(2);
    let four = coeff_int(4);

    // τ(z)² + 2κ(z,τz) + τ(κ(z,z))
    let a = f.mul(&tz, &tz)?;
    let b = f.kappa(&z, &tz)?;
    let c = f.tau(&kzz)?;
    let c20 = f.lin(&[(one.clone(), a), (two.clone(), b), (one.clone(), c)])?;
    let c02 = f.conj(&c20)?;

    // 2[τ(z)τ(zbar) + κ(z,τ zbar) + κ(zbar,τz) + τ(κ(z,zbar))]
    let a = f.mul(&tz, &tzb)?;
    let b = f.kappa(&z, &tzb)?;
    let c = f.kappa(&zb, &tz)?;
    let d = f.tau(&kzzb)?;
    let c11 = f.lin(&[(two.clone(), a), (two.clone(), b), (two.clone(), c), (two.clone(), d)])?;

    // 2[κ(z,z)τ(z) + κ(z,κ(z,z))]
    let a = f.mul(&kzz, &tz)?;
    let b = f.kappa(&z, &kzz)?;
    let c30 = f.lin(&[(two.clone(), a), (two.clone(), b)])?;
    let c03 = f.conj(&c30)?;

    // 2[2κ(z,zbar)τ(z) + κ(z,z)τ(zbar) + κ(zbar,κ(z,z)) + 2κ(z,κ(z,zbar))]
    let a = f.mul(&kzzb, &tz)?;
    let b = f.mul(&kzz, &tzb)?;
    let c = f.kappa(&zb, &kzz)?;
    let d = f.kappa(&z, &kzzb)?;
    let c21 = f.lin(&[(four.clone(), a), (two.clone(), b), (two.clone(), c), (four.clone(), d)])?;
    let c12 = f.conj(&c21)?;

    let c40 = f.mul(&kzz, &kzz)?;
    let c04 = f.conj(&c40)?;
    let a = f.mul(&kzz, &kzzb)?;
    let c31 = f.scale(&a, &four);
    let c13 = f.conj(&c31)?;
    let a = f.mul(&kzz, &kzbzb)?;
    let b = f.mul(&kzzb, &kzzb)?;
    let c22 = f.lin(&[(two.clone(), a), (four.clone(), b)])?;

    Ok(vec![
        ((1, 0), t2z),
        ((0, 1), t2zb),
        ((2, 0), c20),
        ((1, 1), c11),
        ((0, 2), c02),
        ((3, 0), c30),
        ((2, 1), c21),
        ((1, 2), c12),
        ((0, 3), c03),
        ((4, 0), c40),
        ((3, 1), c31),
        ((2, 2), c22),
        ((1, 3), c13),
        ((0, 4), c04),
    ])
}

/// Coefficients of `τ²(f∘z)` in terms of `τ²(z^r conj(z)^s)`, term by term.
/// With `printed` set, the `∂⁴f/∂z∂conj(z)³` coefficient carries
/// `z³ τ²(z)` where the closed formula has `conj(z)³ τ²(z)`.
pub(crate) fn bitension_table(printed: bool) -> Vec<((u32, u32), Vec<Term>)> {
    let c13_last = if printed { t(-1, 6, 3, 0, 1, 0) } else { t(-1, 6, 0, 3, 1, 0) };
    vec![
        ((1, 0), vec![t(1, 1, 0, 0, 1, 0)]),
        ((0, 1), vec![t(1, 1, 0, 0, 0, 1)]),
        ((2, 0), vec![t(1, 2, 0, 0, 2, 0), t(-1, 1, 1, 0, 1, 0)]),
        ((1, 1), vec![t(1, 1, 0, 0, 1, 1), t(-1, 1, 0, 1, 1, 0), t(-1, 1, 1, 0, 0, 1)]),
        ((0, 2), vec![t(1, 2, 0, 0, 0, 2), t(-1, 1, 0, 1, 0, 1)]),
        ((3, 0), vec![t(1, 6, 0, 0, 3, 0), t(-1, 2, 1, 0, 2, 0), t(1, 2, 2, 0, 1, 0)]),
        (
            (2, 1),
            vec![t(1, 2, 0, 0, 2, 1), t(-1, 2, 0, 1, 2, 0), t(1, 1, 1, 1, 1, 0), t(-1, 1, 1, 0, 1, 1), t(1, 2, 2, 0, 0, 1)],
        ),
        (
            (1, 2),
            vec![t(1, 2, 0, 0, 1, 2), t(-1, 2, 1, 0, 0, 2), t(1, 1, 1, 1, 0, 1), t(-1, 1, 0, 1, 1, 1), t(1, 2, 0, 2, 1, 0)],
        ),
        ((0, 3), vec![t(1, 6, 0, 0, 0, 3), t(-1, 2, 0, 1, 0, 2), t(1, 2, 0, 2, 0, 1)]),
        ((4, 0), vec![t(1, 24, 0, 0, 4, 0), t(-1, 6, 1, 0, 3, 0), t(1, 4, 2, 0, 2, 0), t(-1, 6, 3, 0, 1, 0)]),
        (
            (3, 1),
            vec![
                t(1, 6, 0, 0, 3, 1),
                t(-1, 6, 0, 1, 3, 0),
                t(1, 2, 1, 1, 2, 0),
                t(-1, 2, 1, 0, 2, 1),
                t(1, 2, 2, 0, 1, 1),
                t(-1, 6, 3, 0, 0, 1),
                t(-1, 2, 2, 1, 1, 0),
            ],
        ),
        (
            (2, 2),
            vec![
                t(1, 4, 0, 0, 2, 2),
                t(1, 4, 0, 2, 2, 0),
                t(1, 4, 2, 0, 0, 2),
                t(-1, 2, 0, 1, 2, 1),
                t(-1, 2, 1, 2, 1, 0),
                t(1, 1, 1, 1, 1, 1),
                t(-1, 2, 2, 1, 0, 1),
                t(-1, 2, 1, 0, 1, 2),
            ],
        ),
        (
            (1, 3),
            vec![
                t(1, 6, 0, 0, 1, 3),
                t(-1, 6, 1, 0, 0, 3),
                t(1, 2, 1, 1, 0, 2),
                t(-1, 2, 0, 1, 1, 2),
                t(1, 2, 0, 2, 1, 1),
                c13_last,
                t(-1, 2, 1, 2, 0, 1),
            ],
        ),
        ((0, 4), vec![t(1, 24, 0, 0, 0, 4), t(-1, 6, 0, 1, 0, 3), t(1, 4, 0, 2, 0, 2), t(-1, 6, 0, 3, 0, 1)]),
    ]
}

/// Coefficients of `τ³(f∘z)` for horizontally conformal `z`, except the
/// `∂⁶f/∂z³∂conj(z)³` coefficient `8κ(z,conj z)³`, which is added separately.
pub(crate) fn tritension_table() -> Vec<((u32, u32), Vec<Term>)> {
    vec![
        ((1, 0), vec![t(1, 1, 0, 0, 1, 0)]),
        ((0, 1), vec![t(1, 1, 0, 0, 0, 1)]),
        ((2, 0), vec![t(1, 2, 0, 0, 2, 0), t(-1, 1, 1, 0, 1, 0)]),
        ((1, 1), vec![t(1, 1, 0, 0, 1, 1), t(-1, 1, 0, 1, 1, 0), t(-1, 1, 1, 0, 0, 1)]),
        ((0, 2), vec![t(1, 2, 0, 0, 0, 2), t(-1, 1, 0, 1, 0, 1)]),
        ((3, 0), vec![t(1, 6, 0, 0, 3, 0), t(-1, 2, 1, 0, 2, 0), t(1, 2, 2, 0, 1, 0)]),
        (
            (2, 1),
            vec![t(1, 2, 0, 0, 2, 1), t(-1, 2, 0, 1, 2, 0), t(-1, 1, 1, 0, 1, 1), t(1, 1, 1, 1, 1, 0), t(1, 2, 2, 0, 0, 1)],
        ),
        (
            (1, 2),
            vec![t(1, 2, 0, 0, 1, 2), t(-1, 1, 0, 1, 1, 1), t(1, 2, 0, 2, 1, 0), t(-1, 2, 1, 0, 0, 2), t(1, 1, 1, 1, 0, 1)],
        ),
        ((0, 3), vec![t(1, 6, 0, 0, 0, 3), t(-1, 2, 0, 1, 0, 2), t(1, 2, 0, 2, 0, 1)]),
        (
            (3, 1),
            vec![
                t(1, 6, 0, 0, 3, 1),
                t(-1, 6, 0, 1, 3, 0),
                t(-1, 2, 1, 0, 2, 1),
                t(1, 2, 1, 1, 2, 0),
                t(1, 2, 2, 0, 1, 1),
                t(-1, 2, 2, 1, 1, 0),
                t(-1, 6, 3, 0, 0, 1),
            ],
        ),
        (
            (2, 2),
            vec![
                t(1, 4, 0, 0, 2, 2),
                t(-1, 2, 0, 1, 2, 1),
                t(1, 4, 0, 2, 2, 0),
                t(-1, 2, 1, 0, 1, 2),
                t(1, 1, 1, 1, 1, 1),
                t(-1, 2, 1, 2, 1, 0),
                t(1, 4, 2, 0, 0, 2),
                t(-1, 2, 2, 1, 0, 1),
            ],
        ),
        (
            (1, 3),
            vec![
                t(1, 6, 0, 0, 1, 3),
                t(-1, 2, 0, 1, 1, 2),
                t(1, 2, 0, 2, 1, 1),
                t(-1, 6, 0, 3, 1, 0),
                t(-1, 6, 1, 0, 0, 3),
                t(1, 2, 1, 1, 0, 2),
                t(-1, 2, 1, 2, 0, 1),
            ],
        ),
        (
            (3, 2),
            vec![
                t(1, 12, 0, 0, 3, 2),
                t(-1, 6, 0, 1, 3, 1),
                t(1, 12, 0, 2, 3, 0),
                t(-1, 4, 1, 0, 2, 2),
                t(1, 2, 1, 1, 2, 1),
                t(-1, 4, 1, 2, 2, 0),
                t(1, 4, 2, 0, 1, 2),
                t(-1, 2, 2, 1, 1, 1),
                t(1, 4, 2, 2, 1, 0),
                t(-1, 12, 3, 0, 0, 2),
                t(1, 6, 3, 1, 0, 1),
            ],
        ),
        (
            (2, 3),
            vec![
                t(1, 12, 0, 0, 2, 3),
                t(-1, 4, 0, 1, 2, 2),
                t(1, 4, 0, 2, 2, 1),
                t(-1, 12, 0, 3, 2, 0),
                t(-1, 6, 1, 0, 1, 3),
                t(1, 2, 1, 1, 1, 2),
                t(-1, 2, 1, 2, 1, 1),
                t(1, 6, 1, 3, 1, 0),
                t(1, 12, 2, 0, 0, 3),
                t(-1, 4, 2, 1, 0, 2),
                t(1, 4, 2, 2, 0, 1),
            ],
        ),
    ]
}

fn table_coefficients<F: Field>(
    f: &mut F,
    m: &mut Monomials<F::V>,
    p: usize,
    table: &[((u32, u32), Vec<Term>)],
) -> Result<Vec<((u32, u32), F::V)>> {
    table.iter().map(|(jk, terms)| Ok((*jk, eval_terms(f, m, p, terms)?))).collect()
}

/// Left and right hand sides of one identity.
fn sides<F: Field>(kind: Kind, f: &mut F, polys: &TestPolys, printed: bool) -> Result<(F::V, F::V)> {
    let mut m = Monomials::new(f)?;
    let z = m.z().clone();
    let zb = m.zbar().clone();
    let one = coeff_int(1);
    let two = coeff_int(2);
    match kind {
        Kind::ProductRule | Kind::ProductRuleSquare => {
            let w = if kind == Kind::ProductRule { zb } else { z.clone() };
            let zw = f.mul(&z, &w)?;
            let lhs = f.tau(&zw)?;
            let tz = f.tau(&z)?;
            let tw = f.tau(&w)?;
            let a = f.mul(&tz, &w)?;
            let b = f.kappa(&z, &w)?;
            let c = f.mul(&z, &tw)?;
            let rhs = f.lin(&[(one.clone(), a), (two, b), (one, c)])?;
            Ok((lhs, rhs))
        }
        Kind::ConjugateTension => {
            let tz = f.tau(&z)?;
            let lhs = f.conj(&tz)?;
            let rhs = f.tau(&zb)?;
            Ok((lhs, rhs))
        }
        Kind::ConjugateKappa => {
            let w = m.mono(f, 2, 1)?;
            let k = f.kappa(&z, &w)?;
            let lhs = f.conj(&k)?;
            let wb = f.conj(&w)?;
            let rhs = f.kappa(&zb, &wb)?;
            Ok((lhs, rhs))
        }
        Kind::ChainTension => {
            let fz = polys.chain.eval(f, &mut m)?;
            let lhs = f.tau(&fz)?;
            let tz = f.tau(&z)?;
            let tzb = f.conj(&tz)?;
            let kzz = f.kappa(&z, &z)?;
            let kzzb = f.kappa(&z, &zb)?;
            let kzbzb = f.conj(&kzz)?;
            let k2 = f.scale(&kzzb, &two);
            let coeffs = [((1, 0), tz), ((0, 1), tzb), ((2, 0), kzz), ((1, 1), k2), ((0, 2), kzbzb)];
            let rhs = expand(f, &mut m, &polys.chain, &coeffs)?;
            Ok((lhs, rhs))
        }
        Kind::ChainKappa => {
            let fz = polys.chain.eval(f, &mut m)?;
            let gz = polys.other.eval(f, &mut m)?;
            let lhs = f.kappa(&fz, &gz)?;
            let kz = f.kappa(&z, &gz)?;
            let kzb = f.kappa(&zb, &gz)?;
            let rhs = expand(f, &mut m, &polys.chain, &[((1, 0), kz), ((0, 1), kzb)])?;
            Ok((lhs, rhs))
        }
        Kind::Bracket(n) => bracket(f, &mut m, n),
        Kind::BitensionBrackets => {
            let fz = polys.second.eval(f, &mut m)?;
            let lhs = f.tau_n(&fz, 2)?;
            let coeffs = bitension_brackets(f)?;
            let rhs = expand(f, &mut m, &polys.second, &coeffs)?;
            Ok((lhs, rhs))
        }
        Kind::BitensionMonomials => {
            let fz = polys.second.eval(f, &mut m)?;
            let lhs = f.tau_n(&fz, 2)?;
            let coeffs = table_coefficients(f, &mut m, 2, &bitension_table(printed))?;
            let rhs = expand(f, &mut m, &polys.second, &coeffs)?;
            Ok((lhs, rhs))
        }
        Kind::TritensionMonomials => {
            let fz = polys.third.eval(f, &mut m)?;
            let lhs = f.tau_n(&fz, 3)?;
            let mut coeffs = table_coefficients(f, &mut m, 3, &tritension_table())?;
            let kzzb = f.kappa(&z, &zb)?;
            let k3 = f.pow(&kzzb, 3)?;
            coeffs.push(((3, 3), f.scale(&k3, &coeff_int(8))));
            let rhs = expand(f, &mut m, &polys.third, &coeffs)?;
            Ok((lhs, rhs))
        }
    }
}

/// The seven bracket identities: a combination of `τ`, `κ` on the left, the
/// matching closed-formula coefficient on the right.
fn bracket<F: Field>(f: &mut F, m: &mut Monomials<F::V>, n: u8) -> Result<(F::V, F::V)> {
    let z = m.z().clone();
    let zb = m.zbar().clone();
    let tz = f.tau(&z)?;
    let kzz = f.kappa(&z, &z)?;
    let kzzb = f.kappa(&z, &zb)?;
    let one = coeff_int(1);
    let two = coeff_int(2);
    let four = coeff_int(4);
    let (lhs, jk, half) = match n {
        1 => {
            let a = f.mul(&tz, &tz)?;
            let b = f.kappa(&z, &tz)?;
            let c = f.tau(&kzz)?;
            (f.lin(&[(one.clone(), a), (two, b), (one, c)])?, (2, 0), false)
        }
        2 => {
            let tzb = f.conj(&tz)?;
            let a = f.mul(&tz, &tzb)?;
            let b = f.kappa(&z, &tzb)?;
            let c = f.kappa(&zb, &tz)?;
            let d = f.tau(&kzzb)?;
            (f.lin(&[(one.clone(), a), (one.clone(), b), (one.clone(), c), (one, d)])?, (1, 1), true)
        }
        3 => {
            let a = f.mul(&tz, &kzz)?;
            let b = f.kappa(&z, &kzz)?;
            (f.lin(&[(two.clone(), a), (two, b)])?, (3, 0), false)
        }
        4 => {
            let tzb = f.conj(&tz)?;
            let a = f.mul(&kzzb, &tz)?;
            let b = f.kappa(&zb, &kzz)?;
            let c = f.mul(&tzb, &kzz)?;
            let d = f.kappa(&z, &kzzb)?;
            (f.lin(&[(two.clone(), a), (one.clone(), b), (one, c), (two, d)])?, (2, 1), true)
        }
        5 => {
            let kzbzb = f.conj(&kzz)?;
            let a = f.mul(&kzz, &kzbzb)?;
            let b = f.mul(&kzzb, &kzzb)?;
            (f.lin(&[(two, a), (four, b)])?, (2, 2), false)
        }
        6 => {
            let a = f.mul(&kzz, &kzzb)?;
            (f.scale(&a, &four), (3, 1), false)
        }
        _ => (f.mul(&kzz, &kzz)?, (4, 0), false),
    };
    let rhs = eval_terms(f, m, 2, &coefficient_terms(jk.0, jk.1))?;
    // The mixed brackets appear with a factor 2 in the expansion.
    let rhs = if half { f.scale(&rhs, &crate::expr::coeff_rational(crate::expr::rational(1, 2))) } else { rhs };
    Ok((lhs, rhs))
}

fn check(
    kind: Kind,
    z: &ComplexFunction,
    polys: &TestPolys,
    opts: &SuiteOptions,
    printed: bool,
) -> Result<IdentityCheck> {
    let policy = &opts.policy;
    let mut symbolic = SymbolicOutcome::NotAttempted;
    let mut residual_expr = None;
    if opts.backends != Backends::NumericOnly || !z.metric.is_euclidean() {
        let mut calc = Calculus::for_function(z, policy.budget)?;
        let outcome = (|| -> Result<_> {
            let mut sym = Sym::new(&mut calc, &z.expr)?;
            let (l, r) = sides(kind, &mut sym, polys, printed)?;
            sym.sub(&l, &r)
        })();
        match outcome {
            Ok(d) if d.is_zero() => symbolic = SymbolicOutcome::Zero,
            Ok(d) => {
                symbolic = SymbolicOutcome::Unresolved;
                residual_expr = Some(calc.expr(&d));
            }
            Err(Error::ExpressionBudgetExceeded { .. }) => symbolic = SymbolicOutcome::BudgetExceeded,
            Err(e) => return Err(e),
        }
    }
    let want_numeric = match opts.backends {
        Backends::SymbolicFirst => symbolic != SymbolicOutcome::Zero,
        _ => true,
    };
    let numeric = if !want_numeric {
        None
    } else if z.metric.is_euclidean() {
        let order = kind.order();
        let tol = policy.tolerance(order);
        Some(sample_zero(&z.domain, policy, tol, |pt| {
            let mut num = Num { z: eval_jet(&z.expr, pt, order)? };
            let (l, r) = sides(kind, &mut num, polys, printed)?;
            let d = num.sub(&l, &r)?;
            Ok(Num::scaled(&d.truncate(0)))
        })?)
    } else if let Some(e) = &residual_expr {
        Some(is_zero(e, &z.domain, policy)?)
    } else {
        None
    };
    let status = match (&symbolic, &numeric) {
        (_, Some(s)) if s.is_nonzero() => s.clone(),
        (SymbolicOutcome::Zero, _) => ZeroStatus::SymbolicZero,
        (_, Some(s)) => s.clone(),
        (_, None) => ZeroStatus::Inconclusive { samples: 0, max_residual: f64::NAN },
    };
    Ok(IdentityCheck { name: kind.name(), order: kind.order(), symbolic, numeric, status })
}

/// Runs every applicable identity on `z`. The third-order expansion is only
/// valid for horizontally conformal `z` and is skipped unless `κ(z,z)`
/// normalizes to zero.
pub fn identity_suite(z: &ComplexFunction, opts: &SuiteOptions) -> Result<IdentityReport> {
    let polys = TestPolys::new(opts.policy.seed);
    let mut kinds = vec![
        Kind::ProductRule,
        Kind::ProductRuleSquare,
        Kind::ConjugateTension,
        Kind::ConjugateKappa,
        Kind::ChainTension,
        Kind::ChainKappa,
    ];
    kinds.extend((1..=7).map(Kind::Bracket));
    kinds.push(Kind::BitensionBrackets);
    kinds.push(Kind::BitensionMonomials);
    let mut skipped = Vec::new();
    if conformal(z, opts.policy.budget)? {
        kinds.push(Kind::TritensionMonomials);
    } else {
        skipped.push((Kind::TritensionMonomials.name().to_string(), "kappa(z,z) is not symbolically zero".to_string()));
    }
    let checks = kinds.into_iter().map(|k| check(k, z, &polys, opts, false)).collect::<Result<Vec<_>>>()?;
    Ok(IdentityReport { function: z.expr.to_string(), checks, skipped })
}

fn conformal(z: &ComplexFunction, budget: u64) -> Result<bool> {
    let mut calc = Calculus::for_function(z, budget)?;
    let f = calc.frac(&z.expr)?;
    match calc.kappa(&f, &f) {
        Ok(k) => Ok(k.is_zero()),
        Err(Error::ExpressionBudgetExceeded { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// The second-order expansion with the `∂⁴f/∂z∂conj(z)³` coefficient exactly
/// as it is usually printed (`z³ τ²(z)` instead of `conj(z)³ τ²(z)`).
pub fn printed_bitension_expansion(z: &ComplexFunction, opts: &SuiteOptions) -> Result<IdentityCheck> {
    let polys = TestPolys::new(opts.policy.seed);
    check(Kind::BitensionMonomials, z, &polys, opts, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Domain, Relation};
    use crate::parse::parse;

    fn quick() -> SuiteOptions {
        SuiteOptions { policy: ZeroPolicy { samples: 5, ..ZeroPolicy::default() }, backends: Backends::Both }
    }

    #[test]
    fn holomorphic_function_is_exact() {
        let z = ComplexFunction::parse("x1 + i*x2", 2).unwrap();
        let r = identity_suite(&z, &quick()).unwrap();
        for c in &r.checks {
            assert_eq!(c.symbolic, SymbolicOutcome::Zero, "{}", c.name);
            assert!(c.numeric.as_ref().unwrap().is_zero(), "{}", c.name);
        }
        assert!(r.skipped.is_empty());
    }

    #[test]
    fn non_conformal_polynomial() {
        // κ(z,z) ≠ 0, so every term of the second-order expansion is exercised.
        let z = ComplexFunction::parse("x1^2 - x2 + i*x1*x2", 2).unwrap();
        let r = identity_suite(&z, &quick()).unwrap();
        assert!(r.all_zero(), "{r:#?}");
        assert_eq!(r.skipped.len(), 1);
    }

    #[test]
    fn printed_coefficient_fails_when_bitension_of_z_is_nonzero() {
        let z = ComplexFunction::parse("x1^4 + i*x2", 2).unwrap();
        let c = printed_bitension_expansion(&z, &quick()).unwrap();
        assert!(c.status.is_nonzero(), "{c:?}");
        let r = identity_suite(&z, &quick()).unwrap();
        assert!(r.get("bitension_monomials").unwrap().status.is_zero());
    }

    #[test]
    fn radial_example_numeric() {
        let d = Domain::new(4).with_guard(parse("abs2(1,3)", 4).unwrap(), Relation::Positive).unwrap();
        let z = ComplexFunction::new(parse("sqrt(abs2(1,3)) + i*x4", 4).unwrap(), d).unwrap();
        let opts = SuiteOptions { backends: Backends::NumericOnly, ..quick() };
        let r = identity_suite(&z, &opts).unwrap();
        assert!(r.all_zero(), "{r:#?}");
        assert!(r.get("tritension_monomials").is_some());
    }

    fn normalize(mut v: Vec<Term>) -> Vec<Term> {
        v.sort();
        v
    }

    #[test]
    fn tables_agree_with_closed_formula() {
        for ((j, k), terms) in bitension_table(false) {
            assert_eq!(normalize(terms), normalize(coefficient_terms(j, k)), "({j},{k})");
        }
        for ((j, k), terms) in tritension_table() {
            assert_eq!(normalize(terms), normalize(coefficient_terms(j, k)), "({j},{k})");
        }
        let printed = bitension_table(true);
        let (_, c13) = printed.iter().find(|(jk, _)| *jk == (1, 3)).unwrap();
        assert_ne!(normalize(c13.clone()), normalize(coefficient_terms(1, 3)));
    }
}
