//! Immutable expression IR.
//!
//! Expressions are trees over real chart variables `x1, x2, ...` with exact
//! complex rational constants. Every node is built through the smart
//! constructors on [`Expr`], which keep the tree in canonical form:
//!
//! * sums and products are flattened, constant-folded and sorted by a fixed
//!   total order;
//! * like terms of a sum and like bases of a product are merged;
//! * a power with exponent `1` and a sum or product with one element never
//!   appear.
//!
//! Each node carries a 128-bit structural identity computed bottom-up from
//! its children, so building the same expression twice yields the same
//! [`ExprId`] without any global table.

mod normal;
mod zero;

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rustc_hash::FxHashMap;

pub use normal::{simplify, simplify_with, Budget, Frac, Normalizer, DEFAULT_BUDGET};
pub use zero::{is_zero, sample_zero, sample_zeros, Domain, Guard, Relation, Sampler, ZeroPolicy, ZeroStatus};

pub type Rational = BigRational;
/// Exact complex rational `a + b i`.
pub type Coeff = Complex<BigRational>;

pub fn rational(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn coeff(re: Rational, im: Rational) -> Coeff {
    Complex::new(re, im)
}

pub fn coeff_int(n: i64) -> Coeff {
    Complex::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
}

pub fn coeff_rational(r: Rational) -> Coeff {
    Complex::new(r, BigRational::zero())
}

pub fn coeff_i() -> Coeff {
    Complex::new(BigRational::zero(), BigRational::one())
}

pub fn coeff_to_c64(c: &Coeff) -> Complex64 {
    Complex64::new(
        c.re.to_f64().unwrap_or(f64::NAN),
        c.im.to_f64().unwrap_or(f64::NAN),
    )
}

pub fn coeff_is_real(c: &Coeff) -> bool {
    c.im.is_zero()
}

pub(crate) fn rational_as_i64(r: &Rational) -> Option<i64> {
    if r.is_integer() {
        r.to_integer().to_i64()
    } else {
        None
    }
}

/// Structural identity of an expression node.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct ExprId(pub u128);

/// Elementary functions that stay as opaque atoms in the IR.
///
/// Square roots are not a primitive: `sqrt(u)` is the power `u^(1/2)` with the
/// principal branch.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Prim {
    Log,
    Exp,
    Sin,
    Cos,
    Acos,
}

impl Prim {
    pub fn name(self) -> &'static str {
        match self {
            Prim::Log => "log",
            Prim::Exp => "exp",
            Prim::Sin => "sin",
            Prim::Cos => "cos",
            Prim::Acos => "acos",
        }
    }

    fn rank(self) -> u8 {
        self as u8
    }
}

#[derive(Debug)]
pub enum Kind {
    Const(Coeff),
    /// Chart variable `x_k`, `k >= 1`.
    Var(u32),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Power(Expr, Rational),
    Prim(Prim, Expr),
}

#[derive(Debug)]
struct Node {
    kind: Kind,
    id: ExprId,
}

/// Shared handle to an immutable canonical expression node.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

fn structural_id(write: impl Fn(&mut DefaultHasher)) -> ExprId {
    let mut lo = DefaultHasher::new();
    lo.write_u64(0x243f_6a88_85a3_08d3);
    write(&mut lo);
    let mut hi = DefaultHasher::new();
    hi.write_u64(0x1319_8a2e_0370_7344);
    write(&mut hi);
    ExprId(((hi.finish() as u128) << 64) | lo.finish() as u128)
}

impl Expr {
    fn raw(kind: Kind) -> Expr {
        let id = match &kind {
            Kind::Const(c) => structural_id(|h| {
                h.write_u8(0);
                c.hash(h);
            }),
            Kind::Var(k) => structural_id(|h| {
                h.write_u8(1);
                h.write_u32(*k);
            }),
            Kind::Sum(ts) => structural_id(|h| {
                h.write_u8(2);
                for t in ts {
                    h.write_u128(t.id().0);
                }
            }),
            Kind::Product(fs) => structural_id(|h| {
                h.write_u8(3);
                for f in fs {
                    h.write_u128(f.id().0);
                }
            }),
            Kind::Power(b, e) => structural_id(|h| {
                h.write_u8(4);
                h.write_u128(b.id().0);
                e.hash(h);
            }),
            Kind::Prim(p, a) => structural_id(|h| {
                h.write_u8(5);
                h.write_u8(*p as u8);
                h.write_u128(a.id().0);
            }),
        };
        Expr(Arc::new(Node { kind, id }))
    }

    pub fn kind(&self) -> &Kind {
        &self.0.kind
    }

    pub fn id(&self) -> ExprId {
        self.0.id
    }

    // ---- leaves -------------------------------------------------------

    pub fn constant(c: Coeff) -> Expr {
        Expr::raw(Kind::Const(c))
    }

    pub fn int(n: i64) -> Expr {
        Expr::constant(coeff_int(n))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn rational(n: i64, d: i64) -> Expr {
        Expr::constant(coeff_rational(rational(n, d)))
    }

    pub fn i() -> Expr {
        Expr::constant(coeff_i())
    }

    /// The chart variable `x_k`.
    ///
    /// # Panics
    /// If `k == 0`; variable indices start at 1.
    pub fn var(k: u32) -> Expr {
        assert!(k >= 1, "variable indices start at 1");
        Expr::raw(Kind::Var(k))
    }

    // ---- queries ------------------------------------------------------

    pub fn as_const(&self) -> Option<&Coeff> {
        match self.kind() {
            Kind::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_zero())
    }

    pub fn is_one(&self) -> bool {
        self.as_const().is_some_and(|c| c.is_one())
    }

    pub fn is_const(&self) -> bool {
        self.as_const().is_some()
    }

    /// Largest variable index referenced, `0` for constants.
    pub fn max_var(&self) -> u32 {
        let mut best = 0;
        self.visit(&mut |e| {
            if let Kind::Var(k) = e.kind() {
                best = best.max(*k);
            }
        });
        best
    }

    /// Whether `x_k` occurs anywhere in the expression.
    pub fn depends_on(&self, k: u32) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e.kind(), Kind::Var(j) if *j == k) {
                found = true;
            }
        });
        found
    }

    /// Number of distinct nodes in the expression DAG.
    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Visits every distinct node once, children before parents.
    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        let mut seen = rustc_hash::FxHashSet::default();
        fn go(e: &Expr, seen: &mut rustc_hash::FxHashSet<ExprId>, f: &mut impl FnMut(&Expr)) {
            if !seen.insert(e.id()) {
                return;
            }
            match e.kind() {
                Kind::Const(_) | Kind::Var(_) => {}
                Kind::Sum(xs) | Kind::Product(xs) => {
                    for x in xs {
                        go(x, seen, f);
                    }
                }
                Kind::Power(b, _) => go(b, seen, f),
                Kind::Prim(_, a) => go(a, seen, f),
            }
            f(e);
        }
        go(self, &mut seen, f);
    }

    pub fn children(&self) -> Vec<Expr> {
        match self.kind() {
            Kind::Const(_) | Kind::Var(_) => vec![],
            Kind::Sum(xs) | Kind::Product(xs) => xs.clone(),
            Kind::Power(b, _) => vec![b.clone()],
            Kind::Prim(_, a) => vec![a.clone()],
        }
    }

    // ---- smart constructors ------------------------------------------

    pub fn sum(items: impl IntoIterator<Item = Expr>) -> Expr {
        let mut constant = Coeff::zero();
        let mut order: Vec<ExprId> = Vec::new();
        let mut terms: FxHashMap<ExprId, (Expr, Coeff)> = FxHashMap::default();
        let mut add_term = |t: &Expr, constant: &mut Coeff| {
            if let Kind::Const(c) = t.kind() {
                *constant += c;
                return;
            }
            let (c, body) = t.split_coeff();
            match terms.get_mut(&body.id()) {
                Some(slot) => slot.1 += c,
                None => {
                    order.push(body.id());
                    terms.insert(body.id(), (body, c));
                }
            }
        };
        for item in items {
            match item.kind() {
                Kind::Sum(ts) => {
                    for t in ts {
                        add_term(t, &mut constant);
                    }
                }
                _ => add_term(&item, &mut constant),
            }
        }
        let mut out: Vec<Expr> = order
            .into_iter()
            .filter_map(|id| {
                let (body, c) = terms.remove(&id).expect("term recorded");
                if c.is_zero() {
                    None
                } else {
                    Some(Expr::scaled(c, body))
                }
            })
            .collect();
        out.sort_by(cmp_expr);
        if !constant.is_zero() {
            out.insert(0, Expr::constant(constant));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().expect("one term"),
            _ => Expr::raw(Kind::Sum(out)),
        }
    }

    /// `c * body` where `body` is a canonical non-constant term without a
    /// numeric coefficient.
    fn scaled(c: Coeff, body: Expr) -> Expr {
        if c.is_one() {
            return body;
        }
        let mut fs = vec![Expr::constant(c)];
        match body.kind() {
            Kind::Product(xs) => fs.extend(xs.iter().cloned()),
            _ => fs.push(body),
        }
        Expr::raw(Kind::Product(fs))
    }

    /// Splits a canonical term into its numeric coefficient and the rest.
    pub fn split_coeff(&self) -> (Coeff, Expr) {
        match self.kind() {
            Kind::Const(c) => (c.clone(), Expr::one()),
            Kind::Product(fs) => {
                if let Kind::Const(c) = fs[0].kind() {
                    let rest = &fs[1..];
                    let body = if rest.len() == 1 {
                        rest[0].clone()
                    } else {
                        Expr::raw(Kind::Product(rest.to_vec()))
                    };
                    (c.clone(), body)
                } else {
                    (Coeff::one(), self.clone())
                }
            }
            _ => (Coeff::one(), self.clone()),
        }
    }

    pub fn product(items: impl IntoIterator<Item = Expr>) -> Expr {
        let mut pending: Vec<Expr> = items.into_iter().collect();
        loop {
            let mut coeff = Coeff::one();
            let mut order: Vec<ExprId> = Vec::new();
            let mut bases: FxHashMap<ExprId, (Expr, Rational)> = FxHashMap::default();
            let mut add_factor = |f: &Expr, coeff: &mut Coeff| match f.kind() {
                Kind::Const(c) => *coeff *= c,
                _ => {
                    let (b, e) = match f.kind() {
                        Kind::Power(b, e) => (b.clone(), e.clone()),
                        _ => (f.clone(), Rational::one()),
                    };
                    match bases.get_mut(&b.id()) {
                        Some(slot) => slot.1 += e,
                        None => {
                            order.push(b.id());
                            bases.insert(b.id(), (b, e));
                        }
                    }
                }
            };
            for f in &pending {
                match f.kind() {
                    Kind::Product(xs) => {
                        for x in xs {
                            add_factor(x, &mut coeff);
                        }
                    }
                    _ => add_factor(f, &mut coeff),
                }
            }
            if coeff.is_zero() {
                return Expr::zero();
            }
            let mut out = Vec::with_capacity(order.len());
            let mut again = false;
            for id in order {
                let (b, e) = bases.remove(&id).expect("base recorded");
                if e.is_zero() {
                    continue;
                }
                let f = Expr::pow(&b, &e);
                if matches!(f.kind(), Kind::Const(_) | Kind::Product(_)) {
                    again = true;
                }
                out.push(f);
            }
            if again {
                out.push(Expr::constant(coeff));
                pending = out;
                continue;
            }
            out.sort_by(cmp_expr);
            if out.is_empty() {
                return Expr::constant(coeff);
            }
            if coeff.is_one() && out.len() == 1 {
                return out.pop().expect("one factor");
            }
            if !coeff.is_one() {
                out.insert(0, Expr::constant(coeff));
            }
            return Expr::raw(Kind::Product(out));
        }
    }

    /// `base ^ exponent` for a rational exponent, principal branch.
    pub fn pow(base: &Expr, exponent: &Rational) -> Expr {
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return base.clone();
        }
        let integral = rational_as_i64(exponent);
        match base.kind() {
            Kind::Const(c) => {
                if let Some(n) = integral {
                    if c.is_zero() {
                        return if n > 0 {
                            Expr::zero()
                        } else {
                            Expr::raw(Kind::Power(base.clone(), exponent.clone()))
                        };
                    }
                    return Expr::constant(coeff_powi(c, n));
                }
                if c.is_zero() && exponent.is_positive() {
                    return Expr::zero();
                }
                if c.is_one() {
                    return Expr::one();
                }
                if let Some(exact) = exact_rational_root(c, exponent) {
                    return Expr::constant(exact);
                }
                Expr::raw(Kind::Power(base.clone(), exponent.clone()))
            }
            Kind::Power(b, e) if integral.is_some() => Expr::pow(b, &(e * exponent)),
            Kind::Product(fs) if integral.is_some() => {
                Expr::product(fs.iter().map(|f| Expr::pow(f, exponent)))
            }
            _ => Expr::raw(Kind::Power(base.clone(), exponent.clone())),
        }
    }

    pub fn powi(&self, n: i64) -> Expr {
        Expr::pow(self, &Rational::from_integer(BigInt::from(n)))
    }

    pub fn sqrt(&self) -> Expr {
        Expr::pow(self, &rational(1, 2))
    }

    pub fn recip(&self) -> Expr {
        self.powi(-1)
    }

    pub fn prim(p: Prim, arg: Expr) -> Expr {
        if let Kind::Const(c) = arg.kind() {
            if c.is_zero() {
                match p {
                    Prim::Exp | Prim::Cos => return Expr::one(),
                    Prim::Sin => return Expr::zero(),
                    _ => {}
                }
            }
            if c.is_one() && matches!(p, Prim::Log | Prim::Acos) {
                return Expr::zero();
            }
        }
        if let Kind::Prim(inner, u) = arg.kind() {
            match (p, inner) {
                (Prim::Exp, Prim::Log) | (Prim::Cos, Prim::Acos) => return u.clone(),
                _ => {}
            }
        }
        Expr::raw(Kind::Prim(p, arg))
    }

    pub fn log(&self) -> Expr {
        Expr::prim(Prim::Log, self.clone())
    }
    pub fn exp(&self) -> Expr {
        Expr::prim(Prim::Exp, self.clone())
    }
    pub fn sin(&self) -> Expr {
        Expr::prim(Prim::Sin, self.clone())
    }
    pub fn cos(&self) -> Expr {
        Expr::prim(Prim::Cos, self.clone())
    }
    pub fn acos(&self) -> Expr {
        Expr::prim(Prim::Acos, self.clone())
    }

    /// `x_k^2 + ... + x_l^2`.
    pub fn abs2(k: u32, l: u32) -> Expr {
        Expr::sum((k..=l).map(|j| Expr::var(j).powi(2)))
    }

    pub fn scale(&self, c: &Coeff) -> Expr {
        Expr::product([Expr::constant(c.clone()), self.clone()])
    }

    // ---- structural transforms ---------------------------------------

    /// Rebuilds the tree bottom-up through the smart constructors, replacing
    /// every variable with `f(k)`.
    pub fn substitute(&self, f: &dyn Fn(u32) -> Expr) -> Expr {
        let mut memo: FxHashMap<ExprId, Expr> = FxHashMap::default();
        self.rebuild(&mut memo, &|e| match e.kind() {
            Kind::Var(k) => Some(f(*k)),
            _ => None,
        }, &|c| c.clone())
    }

    /// Complex conjugate. Variables are real, so only constants change.
    pub fn conjugate(&self) -> Expr {
        let mut memo: FxHashMap<ExprId, Expr> = FxHashMap::default();
        self.rebuild(&mut memo, &|_| None, &|c| c.conj())
    }

    /// Shifts every variable index by `offset`.
    pub fn shift_vars(&self, offset: u32) -> Expr {
        if offset == 0 {
            return self.clone();
        }
        self.substitute(&|k| Expr::var(k + offset))
    }

    fn rebuild(
        &self,
        memo: &mut FxHashMap<ExprId, Expr>,
        leaf: &dyn Fn(&Expr) -> Option<Expr>,
        constant: &dyn Fn(&Coeff) -> Coeff,
    ) -> Expr {
        if let Some(done) = memo.get(&self.id()) {
            return done.clone();
        }
        let out = if let Some(r) = leaf(self) {
            r
        } else {
            match self.kind() {
                Kind::Const(c) => Expr::constant(constant(c)),
                Kind::Var(_) => self.clone(),
                Kind::Sum(ts) => {
                    Expr::sum(ts.iter().map(|t| t.rebuild(memo, leaf, constant)).collect::<Vec<_>>())
                }
                Kind::Product(fs) => Expr::product(
                    fs.iter().map(|t| t.rebuild(memo, leaf, constant)).collect::<Vec<_>>(),
                ),
                Kind::Power(b, e) => Expr::pow(&b.rebuild(memo, leaf, constant), e),
                Kind::Prim(p, a) => Expr::prim(*p, a.rebuild(memo, leaf, constant)),
            }
        };
        memo.insert(self.id(), out.clone());
        out
    }

    // ---- sign knowledge ------------------------------------------------

    /// Conservative test that the expression is real-valued wherever it is
    /// defined on real inputs.
    pub fn is_real(&self) -> bool {
        match self.kind() {
            Kind::Const(c) => c.im.is_zero(),
            Kind::Var(_) => true,
            Kind::Sum(xs) | Kind::Product(xs) => xs.iter().all(Expr::is_real),
            Kind::Power(b, e) => b.is_real() && (e.is_integer() || b.is_nonneg()),
            Kind::Prim(p, a) => match p {
                Prim::Sin | Prim::Cos | Prim::Exp => a.is_real(),
                Prim::Log => a.is_nonneg(),
                Prim::Acos => false,
            },
        }
    }

    /// Conservative test that the expression is a nonnegative real wherever
    /// it is defined on real inputs.
    pub fn is_nonneg(&self) -> bool {
        match self.kind() {
            Kind::Const(c) => c.im.is_zero() && !c.re.is_negative(),
            Kind::Var(_) => false,
            Kind::Sum(xs) | Kind::Product(xs) => xs.iter().all(Expr::is_nonneg),
            Kind::Power(b, e) => {
                b.is_nonneg() || (b.is_real() && e.numer().is_even() && e.denom().is_one())
            }
            Kind::Prim(Prim::Exp, a) => a.is_real(),
            Kind::Prim(..) => false,
        }
    }
}

trait BigIntParity {
    fn is_even(&self) -> bool;
}

impl BigIntParity for BigInt {
    fn is_even(&self) -> bool {
        num_integer::Integer::is_even(self)
    }
}

pub(crate) fn coeff_powi(c: &Coeff, n: i64) -> Coeff {
    let mut base = if n < 0 { Coeff::one() / c } else { c.clone() };
    let mut k = n.unsigned_abs();
    let mut acc = Coeff::one();
    while k > 0 {
        if k & 1 == 1 {
            acc *= &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// `c^(n/d)` when `c` is a positive rational whose numerator and denominator
/// are perfect `d`-th powers.
fn exact_rational_root(c: &Coeff, e: &Rational) -> Option<Coeff> {
    if !c.im.is_zero() || !c.re.is_positive() {
        return None;
    }
    let d = e.denom().to_u32()?;
    let n = e.numer().to_i64()?;
    let root = |x: &BigInt| {
        let r = x.nth_root(d);
        (r.pow(d) == *x).then_some(r)
    };
    let num = root(c.re.numer())?;
    let den = root(c.re.denom())?;
    let base = Coeff::new(BigRational::new(num, den), BigRational::zero());
    Some(coeff_powi(&base, n))
}

// ---- canonical order ----------------------------------------------------

fn kind_rank(e: &Expr) -> u8 {
    match e.kind() {
        Kind::Const(_) => 0,
        Kind::Var(_) => 1,
        Kind::Sum(_) => 2,
        Kind::Prim(..) => 3,
        Kind::Power(..) => 4,
        Kind::Product(_) => 5,
    }
}

/// Views an expression as a list of `(base, exponent)` factors, ignoring a
/// numeric coefficient.
fn factor_view(e: &Expr) -> Vec<(&Expr, Option<&Rational>)> {
    match e.kind() {
        Kind::Product(fs) => fs
            .iter()
            .filter(|f| !f.is_const())
            .map(|f| match f.kind() {
                Kind::Power(b, x) => (b, Some(x)),
                _ => (f, None),
            })
            .collect(),
        Kind::Power(b, x) => vec![(b, Some(x))],
        Kind::Const(_) => vec![],
        _ => vec![(e, None)],
    }
}

fn cmp_exponent(a: Option<&Rational>, b: Option<&Rational>) -> Ordering {
    let one = Rational::one();
    a.unwrap_or(&one).cmp(b.unwrap_or(&one))
}

fn cmp_coeff(a: &Coeff, b: &Coeff) -> Ordering {
    a.re.cmp(&b.re).then_with(|| a.im.cmp(&b.im))
}

/// Compares non-product, non-power nodes (factor bases).
fn cmp_base(a: &Expr, b: &Expr) -> Ordering {
    if a.id() == b.id() {
        return Ordering::Equal;
    }
    let (ra, rb) = (kind_rank(a), kind_rank(b));
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a.kind(), b.kind()) {
        (Kind::Const(x), Kind::Const(y)) => cmp_coeff(x, y),
        (Kind::Var(x), Kind::Var(y)) => x.cmp(y),
        (Kind::Sum(xs), Kind::Sum(ys)) => cmp_lists(xs, ys),
        (Kind::Prim(p, x), Kind::Prim(q, y)) => {
            p.rank().cmp(&q.rank()).then_with(|| cmp_expr(x, y))
        }
        _ => cmp_expr(a, b),
    }
}

fn cmp_lists(xs: &[Expr], ys: &[Expr]) -> Ordering {
    for (x, y) in xs.iter().zip(ys) {
        let o = cmp_expr(x, y);
        if o != Ordering::Equal {
            return o;
        }
    }
    xs.len().cmp(&ys.len())
}

/// The fixed total order used to sort sum terms and product factors.
pub fn cmp_expr(a: &Expr, b: &Expr) -> Ordering {
    if a.id() == b.id() {
        return Ordering::Equal;
    }
    let fa = factor_view(a);
    let fb = factor_view(b);
    if fa.is_empty() || fb.is_empty() {
        // constants first
        let o = fb.is_empty().cmp(&fa.is_empty());
        if o != Ordering::Equal {
            return o;
        }
    }
    for ((ba, ea), (bb, eb)) in fa.iter().zip(&fb) {
        let o = match (ba.kind(), bb.kind()) {
            (Kind::Power(..), _) | (_, Kind::Power(..)) | (Kind::Product(_), _) | (_, Kind::Product(_)) => {
                kind_rank(ba).cmp(&kind_rank(bb)).then_with(|| cmp_structural(ba, bb))
            }
            _ => cmp_base(ba, bb),
        };
        if o != Ordering::Equal {
            return o;
        }
        let o = cmp_exponent(*ea, *eb);
        if o != Ordering::Equal {
            return o;
        }
    }
    let o = fa.len().cmp(&fb.len());
    if o != Ordering::Equal {
        return o;
    }
    let (ca, _) = a.split_coeff();
    let (cb, _) = b.split_coeff();
    let o = cmp_coeff(&ca, &cb);
    if o != Ordering::Equal {
        return o;
    }
    cmp_structural(a, b)
}

/// Plain structural comparison; the tie-breaker of last resort.
fn cmp_structural(a: &Expr, b: &Expr) -> Ordering {
    if a.id() == b.id() {
        return Ordering::Equal;
    }
    let (ra, rb) = (kind_rank(a), kind_rank(b));
    if ra != rb {
        return ra.cmp(&rb);
    }
    match (a.kind(), b.kind()) {
        (Kind::Const(x), Kind::Const(y)) => cmp_coeff(x, y),
        (Kind::Var(x), Kind::Var(y)) => x.cmp(y),
        (Kind::Sum(xs), Kind::Sum(ys)) | (Kind::Product(xs), Kind::Product(ys)) => {
            for (x, y) in xs.iter().zip(ys) {
                let o = cmp_structural(x, y);
                if o != Ordering::Equal {
                    return o;
                }
            }
            xs.len().cmp(&ys.len())
        }
        (Kind::Power(x, e), Kind::Power(y, f)) => cmp_structural(x, y).then_with(|| e.cmp(f)),
        (Kind::Prim(p, x), Kind::Prim(q, y)) => p.cmp(q).then_with(|| cmp_structural(x, y)),
        _ => a.id().cmp(&b.id()),
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id().hash(state);
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_expr(self, other)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", crate::parse::format(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parse::format(self))
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &rhs)
            }
        }
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl $tr<&Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, rhs)
            }
        }
        impl $tr<Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::sum([a.clone(), -b]));
binop!(Mul, mul, |a, b| Expr::product([a.clone(), b.clone()]));
binop!(Div, div, |a, b| Expr::product([a.clone(), b.recip()]));

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.scale(&coeff_int(-1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(k: u32) -> Expr {
        Expr::var(k)
    }

    #[test]
    fn identity_elements_vanish() {
        let e = (x(1) + Expr::zero()) * Expr::one();
        assert_eq!(e, x(1));
    }

    #[test]
    fn like_terms_and_bases_merge() {
        let e = x(1) + x(2) + x(1);
        assert_eq!(e, Expr::int(2) * x(1) + x(2));
        let p = x(1) * x(2) * x(1);
        assert_eq!(p, x(1).powi(2) * x(2));
        assert_eq!(x(1) - x(1), Expr::zero());
        assert_eq!(x(1) / x(1), Expr::one());
    }

    #[test]
    fn building_twice_gives_same_identity() {
        let a = (x(1).powi(2) + x(2).powi(2)).sqrt() + Expr::i() * x(4);
        let b = Expr::i() * x(4) + (x(2).powi(2) + x(1).powi(2)).sqrt();
        assert_eq!(a.id(), b.id());
    }

    #[test]
    fn sqrt_times_sqrt_of_same_base_collapses() {
        let s = Expr::abs2(1, 2);
        assert_eq!(s.sqrt() * s.sqrt(), s);
        assert_eq!(s.sqrt().powi(2), s);
    }

    #[test]
    fn power_of_power_only_merges_for_integer_outer_exponent() {
        let e = x(1).powi(2).sqrt();
        assert!(matches!(e.kind(), Kind::Power(b, _) if matches!(b.kind(), Kind::Power(..))));
        assert_eq!(x(1).sqrt().powi(4), x(1).powi(2));
    }

    #[test]
    fn exact_constant_roots() {
        assert_eq!(Expr::rational(9, 4).sqrt(), Expr::rational(3, 2));
        assert!(matches!(Expr::int(2).sqrt().kind(), Kind::Power(..)));
        assert_eq!(Expr::int(2).sqrt() * Expr::int(2).sqrt(), Expr::int(2));
    }

    #[test]
    fn conjugate_negates_imaginary_constants() {
        let e = Expr::i() * x(4);
        assert_eq!(e.conjugate(), -(Expr::i() * x(4)));
        let w = (x(1) + Expr::i() * x(2)).powi(2);
        assert_eq!(w.conjugate(), (x(1) - Expr::i() * x(2)).powi(2));
        assert_eq!(w.conjugate().conjugate(), w);
    }

    #[test]
    fn prim_constant_folding_and_inverse_pairs() {
        assert_eq!(Expr::zero().exp(), Expr::one());
        assert_eq!(Expr::one().log(), Expr::zero());
        assert_eq!(x(1).log().exp(), x(1));
        assert_eq!(x(1).acos().cos(), x(1));
        // log(exp u) needs u real and is left to simplify
        assert!(matches!(x(1).exp().log().kind(), Kind::Prim(Prim::Log, _)));
    }

    #[test]
    fn sign_knowledge() {
        assert!(Expr::abs2(1, 3).is_nonneg());
        assert!(!x(1).is_nonneg());
        assert!(x(1).powi(2).is_nonneg());
        assert!(Expr::abs2(1, 3).sqrt().is_nonneg());
        assert!(!(Expr::i() * x(1)).is_real());
        assert!(x(1).sin().is_real());
    }

    #[test]
    fn substitution_and_shift() {
        let e = x(1) * x(2);
        let s = e.shift_vars(3);
        assert_eq!(s, x(4) * x(5));
        let t = e.substitute(&|k| if k == 1 { x(2) } else { x(k) });
        assert_eq!(t, x(2).powi(2));
    }

    #[test]
    fn sorting_is_total_and_stable() {
        let mut v = vec![x(2).powi(2), x(1), Expr::int(3), x(1).powi(2), x(2), x(1).sin()];
        v.sort();
        let w = {
            let mut w = v.clone();
            w.reverse();
            w.sort();
            w
        };
        assert_eq!(v, w);
        assert!(v[0].is_const());
    }
}
