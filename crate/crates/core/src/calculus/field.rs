//! One vocabulary for fields built from `z`, `τ` and `κ`, evaluated either
//! symbolically or on jets at a point.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;
use rand::Rng;

use super::Calculus;
use crate::error::{Error, Result};
use crate::expr::{coeff, coeff_int, coeff_to_c64, rational, Coeff, Expr, Frac};
use crate::jet::{Jet, Scaled};

pub(crate) trait Field {
    type V: Clone;

    fn z(&self) -> Self::V;
    fn constant(&mut self, c: &Coeff) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn scale(&mut self, a: &Self::V, c: &Coeff) -> Self::V;
    fn conj(&mut self, a: &Self::V) -> Result<Self::V>;
    fn tau(&mut self, a: &Self::V) -> Result<Self::V>;
    fn kappa(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;

    /// Drops derivative information above `order`; exact backends keep `a`.
    fn truncate(&mut self, a: &Self::V, _order: usize) -> Self::V {
        a.clone()
    }

    fn zbar(&mut self) -> Result<Self::V> {
        let z = self.z();
        self.conj(&z)
    }

    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V> {
        let nb = self.scale(b, &coeff_int(-1));
        self.add(a, &nb)
    }

    fn pow(&mut self, a: &Self::V, n: u32) -> Result<Self::V> {
        let mut acc = self.constant(&coeff_int(1));
        for _ in 0..n {
            acc = self.mul(&acc, a)?;
        }
        Ok(acc)
    }

    fn tau_n(&mut self, a: &Self::V, n: usize) -> Result<Self::V> {
        let mut cur = a.clone();
        for _ in 0..n {
            cur = self.tau(&cur)?;
        }
        Ok(cur)
    }

    /// `Σ c_i v_i`.
    fn lin(&mut self, terms: &[(Coeff, Self::V)]) -> Result<Self::V> {
        let mut acc = self.constant(&Coeff::zero());
        for (c, v) in terms {
            let t = self.scale(v, c);
            acc = self.add(&acc, &t)?;
        }
        Ok(acc)
    }
}

/// Symbolic backend: normal forms inside a [`Calculus`] context.
pub(crate) struct Sym<'a> {
    pub calc: &'a mut Calculus,
    pub z: Frac,
}

impl<'a> Sym<'a> {
    pub fn new(calc: &'a mut Calculus, z: &Expr) -> Result<Sym<'a>> {
        let z = calc.frac(z)?;
        Ok(Sym { calc, z })
    }
}

impl Field for Sym<'_> {
    type V = Frac;

    fn z(&self) -> Frac {
        self.z.clone()
    }

    fn constant(&mut self, c: &Coeff) -> Frac {
        Frac::constant(c.clone())
    }

    fn add(&mut self, a: &Frac, b: &Frac) -> Result<Frac> {
        self.calc.add(a, b)
    }

    fn mul(&mut self, a: &Frac, b: &Frac) -> Result<Frac> {
        self.calc.mul(a, b)
    }

    fn scale(&mut self, a: &Frac, c: &Coeff) -> Frac {
        self.calc.normalizer().scale(a, c)
    }

    fn conj(&mut self, a: &Frac) -> Result<Frac> {
        self.calc.conj(a)
    }

    fn tau(&mut self, a: &Frac) -> Result<Frac> {
        self.calc.tension(a)
    }

    fn kappa(&mut self, a: &Frac, b: &Frac) -> Result<Frac> {
        self.calc.kappa(a, b)
    }
}

/// Numeric backend: Euclidean jets at one point. Each operation that
/// differentiates lowers the jet order; mixed orders are truncated to the
/// smaller one.
pub(crate) struct Num {
    pub z: Jet,
}

fn fit(a: &Jet, b: &Jet) -> (Jet, Jet) {
    match a.order().cmp(&b.order()) {
        std::cmp::Ordering::Equal => (a.clone(), b.clone()),
        std::cmp::Ordering::Less => (a.clone(), b.truncate(a.order())),
        std::cmp::Ordering::Greater => (a.truncate(b.order()), b.clone()),
    }
}

impl Num {
    /// Value at the point together with its magnitude bound.
    pub fn scaled(v: &Jet) -> Scaled {
        Scaled { value: v.value(), scale: v.magnitudes()[0] }
    }
}

impl Field for Num {
    type V = Jet;

    fn z(&self) -> Jet {
        self.z.clone()
    }

    fn constant(&mut self, c: &Coeff) -> Jet {
        Jet::constant(self.z.layout(), coeff_to_c64(c))
    }

    fn add(&mut self, a: &Jet, b: &Jet) -> Result<Jet> {
        let (a, b) = fit(a, b);
        Ok(a.add(&b))
    }

    fn mul(&mut self, a: &Jet, b: &Jet) -> Result<Jet> {
        let (a, b) = fit(a, b);
        Ok(a.mul(&b))
    }

    fn scale(&mut self, a: &Jet, c: &Coeff) -> Jet {
        a.scale(coeff_to_c64(c))
    }

    fn conj(&mut self, a: &Jet) -> Result<Jet> {
        Ok(a.conj())
    }

    fn truncate(&mut self, a: &Jet, order: usize) -> Jet {
        if order >= a.order() {
            a.clone()
        } else {
            a.truncate(order)
        }
    }

    fn tau(&mut self, a: &Jet) -> Result<Jet> {
        a.laplacian()
    }

    fn kappa(&mut self, a: &Jet, b: &Jet) -> Result<Jet> {
        let (a, b) = fit(a, b);
        let mut acc: Option<Jet> = None;
        for k in 1..=a.dim() {
            let t = a.partial(k)?.mul(&b.partial(k)?);
            acc = Some(match acc {
                Some(s) => s.add(&t),
                None => t,
            });
        }
        acc.ok_or_else(|| Error::InvalidArgument("zero-dimensional chart".into()))
    }
}

/// Memo of `τ^p(z^r conj(z)^s)` inside one backend.
pub(crate) struct Monomials<V> {
    z: V,
    zb: V,
    powers: HashMap<(u32, u32), V>,
    tensions: HashMap<(usize, u32, u32), V>,
}

impl<V: Clone> Monomials<V> {
    pub fn new<F: Field<V = V>>(f: &mut F) -> Result<Monomials<V>> {
        let z = f.z();
        let zb = f.zbar()?;
        Ok(Monomials { z, zb, powers: HashMap::new(), tensions: HashMap::new() })
    }

    pub fn z(&self) -> &V {
        &self.z
    }

    pub fn zbar(&self) -> &V {
        &self.zb
    }

    /// `z^r conj(z)^s`.
    pub fn mono<F: Field<V = V>>(&mut self, f: &mut F, r: u32, s: u32) -> Result<V> {
        if let Some(v) = self.powers.get(&(r, s)) {
            return Ok(v.clone());
        }
        let v = if r == 0 && s == 0 {
            f.constant(&coeff_int(1))
        } else if r > 0 {
            let prev = self.mono(f, r - 1, s)?;
            f.mul(&prev, &self.z.clone())?
        } else {
            let prev = self.mono(f, 0, s - 1)?;
            f.mul(&prev, &self.zb.clone())?
        };
        self.powers.insert((r, s), v.clone());
        Ok(v)
    }

    /// `τ^p(z^r conj(z)^s)`.
    pub fn tau<F: Field<V = V>>(&mut self, f: &mut F, p: usize, r: u32, s: u32) -> Result<V> {
        if let Some(v) = self.tensions.get(&(p, r, s)) {
            return Ok(v.clone());
        }
        let v = if p == 0 {
            self.mono(f, r, s)?
        } else {
            let prev = self.tau(f, p - 1, r, s)?;
            f.tau(&prev)?
        };
        self.tensions.insert((p, r, s), v.clone());
        Ok(v)
    }
}

/// `(num/den) z^a conj(z)^b τ^p(z^r conj(z)^s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Term {
    pub num: i64,
    pub den: i64,
    pub a: u32,
    pub b: u32,
    pub r: u32,
    pub s: u32,
}

pub(crate) const fn t(num: i64, den: i64, a: u32, b: u32, r: u32, s: u32) -> Term {
    Term { num, den, a, b, r, s }
}

fn binomial(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

fn factorial(n: u32) -> i64 {
    (1..=n as i64).product()
}

/// Terms of the closed coefficient formula
/// `c_jk = Σ (-1)^(j-r+k-s) / (j! k!) C(j,r) C(k,s) z^(j-r) conj(z)^(k-s) τ^p(z^r conj(z)^s)`,
/// dropping `r = s = 0` since `τ^p(1) = 0` for `p >= 1`.
pub(crate) fn coefficient_terms(j: u32, k: u32) -> Vec<Term> {
    let mut out = Vec::new();
    let den = factorial(j) * factorial(k);
    for r in 0..=j {
        for s in 0..=k {
            if r == 0 && s == 0 {
                continue;
            }
            let sign = if (j - r + k - s) % 2 == 0 { 1 } else { -1 };
            let num = sign * binomial(j, r) * binomial(k, s);
            let g = gcd(num.abs(), den);
            out.push(t(num / g, den / g, j - r, k - s, r, s));
        }
    }
    out
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Evaluates a list of terms at tension order `p`.
pub(crate) fn eval_terms<F: Field>(
    f: &mut F,
    m: &mut Monomials<F::V>,
    p: usize,
    terms: &[Term],
) -> Result<F::V> {
    let mut acc = f.constant(&Coeff::zero());
    for tm in terms {
        let pre = m.mono(f, tm.a, tm.b)?;
        let tp = m.tau(f, p, tm.r, tm.s)?;
        let v = f.mul(&pre, &tp)?;
        let v = f.scale(&v, &coeff(rational(tm.num, tm.den), rational(0, 1)));
        acc = f.add(&acc, &v)?;
    }
    Ok(acc)
}

/// Polynomial in `z` and `conj(z)` with exact coefficients.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct WPoly {
    terms: BTreeMap<(u32, u32), Coeff>,
}

impl WPoly {
    pub fn new() -> WPoly {
        WPoly::default()
    }

    /// Adds `c z^a conj(z)^b`.
    pub fn with_term(mut self, a: u32, b: u32, c: Coeff) -> WPoly {
        let e = self.terms.entry((a, b)).or_insert_with(Coeff::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&(a, b));
        }
        self
    }

    /// Every monomial `z^a conj(z)^b` with `a <= max_a`, `b <= max_b` and
    /// `1 <= a + b <= max_total`, each with a nonzero Gaussian-integer
    /// coefficient in `[-3, 3] + i[-3, 3]`.
    pub fn random(rng: &mut impl Rng, max_a: u32, max_b: u32, max_total: u32) -> WPoly {
        let mut p = WPoly::new();
        for a in 0..=max_a {
            for b in 0..=max_b {
                if a + b == 0 || a + b > max_total {
                    continue;
                }
                let c = loop {
                    let re: i64 = rng.gen_range(-3..=3);
                    let im: i64 = rng.gen_range(-3..=3);
                    if re != 0 || im != 0 {
                        break coeff(rational(re, 1), rational(im, 1));
                    }
                };
                p = p.with_term(a, b, c);
            }
        }
        p
    }

    pub fn terms(&self) -> impl Iterator<Item = (u32, u32, &Coeff)> {
        self.terms.iter().map(|(&(a, b), c)| (a, b, c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest `a` and largest `b` over all terms.
    pub fn bidegree(&self) -> (u32, u32) {
        self.terms.keys().fold((0, 0), |(x, y), &(a, b)| (x.max(a), y.max(b)))
    }

    /// `∂^{j+k} / ∂z^j ∂conj(z)^k`.
    pub fn derivative(&self, j: u32, k: u32) -> WPoly {
        let mut out = WPoly::new();
        for (&(a, b), c) in &self.terms {
            if a < j || b < k {
                continue;
            }
            let f = falling(a, j) * falling(b, k);
            out = out.with_term(a - j, b - k, c * coeff_int(f));
        }
        out
    }

    pub(crate) fn eval<F: Field>(&self, f: &mut F, m: &mut Monomials<F::V>) -> Result<F::V> {
        let mut acc = f.constant(&Coeff::zero());
        for (&(a, b), c) in &self.terms {
            let v = m.mono(f, a, b)?;
            let v = f.scale(&v, c);
            acc = f.add(&acc, &v)?;
        }
        Ok(acc)
    }

    /// `self(z, conj z)` as an expression.
    pub fn compose(&self, z: &Expr) -> Expr {
        let zb = z.conjugate();
        Expr::sum(self.terms.iter().map(|(&(a, b), c)| {
            Expr::product([Expr::constant(c.clone()), z.powi(a as i64), zb.powi(b as i64)])
        }))
    }
}

fn falling(n: u32, k: u32) -> i64 {
    (0..k).map(|i| (n - i) as i64).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_terms() {
        // c_20 = ½ τ(z²) - z τ(z)
        assert_eq!(coefficient_terms(2, 0), vec![t(-1, 1, 1, 0, 1, 0), t(1, 2, 0, 0, 2, 0)]);
        // c_11 = τ(z zbar) - z τ(zbar) - zbar τ(z)
        assert_eq!(
            coefficient_terms(1, 1),
            vec![t(-1, 1, 1, 0, 0, 1), t(-1, 1, 0, 1, 1, 0), t(1, 1, 0, 0, 1, 1)]
        );
    }

    #[test]
    fn wpoly_derivatives() {
        let p = WPoly::new().with_term(3, 1, coeff_int(2)).with_term(1, 0, coeff_int(5));
        let d = p.derivative(2, 1);
        assert_eq!(d.terms().collect::<Vec<_>>(), vec![(1, 0, &coeff_int(12))]);
        assert!(p.derivative(0, 2).is_zero());
        assert_eq!(p.derivative(0, 0), p);
        assert_eq!(p.bidegree(), (3, 1));
    }
}
