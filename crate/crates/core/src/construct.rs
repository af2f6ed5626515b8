//! Building new candidates from old ones: duals under the inversion of the
//! unit sphere, sums and holomorphic combinations over product charts, and
//! the radial family `x/|x|^n`.
//!
//! Constructors only build expressions and domains. Whether the result is a
//! morphism, and whether it is proper, is left to the checker.

use crate::calculus::ComplexFunction;
use crate::error::{Error, Result};
use crate::expr::{rational, simplify_with, Domain, Expr, Guard, Relation, DEFAULT_BUDGET};
use crate::parse::parse;

/// `i_p(x) = x / |x|^2` on `R^(2p) \ {0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct InversionMap {
    pub half_dim: usize,
    pub components: Vec<Expr>,
}

impl InversionMap {
    pub fn new(half_dim: usize) -> InversionMap {
        let n = 2 * half_dim;
        InversionMap { half_dim, components: radial_components(2, n) }
    }

    pub fn dim(&self) -> usize {
        2 * self.half_dim
    }

    /// `e ∘ i_p`, normalized when that stays within the default budget.
    pub fn pull_back(&self, e: &Expr) -> Expr {
        let raw = e.substitute(&|k| self.components[k as usize - 1].clone());
        simplify_with(&raw, DEFAULT_BUDGET).unwrap_or(raw)
    }

    /// The components as functions on `R^(2p) \ {0}`.
    pub fn functions(&self) -> Vec<ComplexFunction> {
        let d = punctured(self.dim());
        self.components.iter().map(|c| ComplexFunction::new(c.clone(), d.clone()).expect("in range")).collect()
    }

    /// `Π_{s=1..k} 2s(2s - 2p)`, the factor in `τ^k(i_p) = factor / |x|^(2k) · i_p`.
    pub fn ladder_factor(&self, k: usize) -> i64 {
        let p = self.half_dim as i64;
        (1..=k as i64).map(|s| 2 * s * (2 * s - 2 * p)).product()
    }
}

/// `R^dim` minus the origin, sampled in `[-2,2]^dim` with margin 0.1.
pub fn punctured(dim: usize) -> Domain {
    Domain::new(dim).with_guard(Expr::abs2(1, dim as u32), Relation::Positive).expect("in range")
}

fn radial_components(n: i64, dim: usize) -> Vec<Expr> {
    let r2 = Expr::abs2(1, dim as u32);
    let w = Expr::pow(&r2, &rational(-n, 2));
    (1..=dim as u32).map(|k| Expr::product([Expr::var(k), w.clone()])).collect()
}

/// `φ* = φ ∘ i_p` for `φ` on `R^(2p)`. Guards are pulled back with `φ` and
/// the origin is excluded; the sampling box and margin are kept.
pub fn dualize(phi: &ComplexFunction) -> Result<ComplexFunction> {
    let m = phi.dim();
    if m % 2 == 1 {
        return Err(Error::OddDimension(m));
    }
    let inv = InversionMap::new(m / 2);
    let expr = inv.pull_back(&phi.expr);
    let mut domain = Domain { guards: Vec::new(), ..phi.domain.clone() };
    domain.guards.push(Guard { expr: Expr::abs2(1, m as u32), relation: Relation::Positive });
    for g in &phi.domain.guards {
        domain.guards.push(Guard { expr: inv.pull_back(&g.expr), relation: g.relation });
    }
    ComplexFunction::new(expr, domain)
}

fn product_domain(a: &Domain, b: &Domain) -> Domain {
    let offset = a.dim as u32;
    let mut guards = a.guards.clone();
    guards.extend(b.guards.iter().map(|g| Guard { expr: g.expr.shift_vars(offset), relation: g.relation }));
    let mut bounds = a.bounds.clone();
    bounds.extend(b.bounds.iter().copied());
    Domain { dim: a.dim + b.dim, guards, bounds, margin: a.margin.min(b.margin) }
}

/// `Φ(x,y) = φ(x) + ψ(y)` on `R^(m+n)`, with `ψ`'s variables shifted by `m`.
pub fn direct_sum(phi: &ComplexFunction, psi: &ComplexFunction) -> Result<ComplexFunction> {
    let expr = Expr::sum([phi.expr.clone(), psi.expr.shift_vars(phi.dim() as u32)]);
    ComplexFunction::new(expr, product_domain(&phi.domain, &psi.domain))
}

/// A holomorphic function of `arity` complex variables, stored over
/// `x1..x_arity` standing in for `w1..w_arity`.
#[derive(Clone, Debug, PartialEq)]
pub struct Holomorphic {
    pub expr: Expr,
    pub arity: usize,
}

impl Holomorphic {
    /// Parses `src` in the variables `names` (e.g. `["w"]` or `["w1","w2"]`).
    /// Any reference to a conjugate (`conj(..)` or a name ending in `bar`)
    /// is rejected.
    pub fn parse(src: &str, names: &[&str]) -> Result<Holomorphic> {
        let mut out = String::with_capacity(src.len());
        let mut chars = src.char_indices().peekable();
        while let Some((start, c)) = chars.next() {
            if c.is_ascii_alphabetic() || c == '_' {
                let mut end = start + c.len_utf8();
                while let Some(&(i, d)) = chars.peek() {
                    if d.is_ascii_alphanumeric() || d == '_' {
                        end = i + d.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let ident = &src[start..end];
                if ident == "conj" || ident.ends_with("bar") {
                    return Err(Error::NonHolomorphicInput(ident.to_string()));
                }
                match names.iter().position(|n| *n == ident) {
                    Some(k) => out.push_str(&format!("x{}", k + 1)),
                    None if ident.starts_with('x') && ident[1..].chars().all(|d| d.is_ascii_digit()) => {
                        return Err(Error::InvalidArgument(format!(
                            "`{ident}` is not one of the variables {names:?}"
                        )));
                    }
                    None => out.push_str(ident),
                }
            } else {
                out.push(c);
            }
        }
        Ok(Holomorphic { expr: parse(&out, names.len())?, arity: names.len() })
    }

    pub fn from_expr(expr: Expr, arity: usize) -> Result<Holomorphic> {
        let v = expr.max_var();
        if v as usize > arity {
            return Err(Error::VariableOutOfRange { index: v, dim: arity });
        }
        Ok(Holomorphic { expr, arity })
    }
}

/// `f ∘ φ` for holomorphic `f` of one variable.
pub fn post_compose_holomorphic(f: &Holomorphic, phi: &ComplexFunction) -> Result<ComplexFunction> {
    if f.arity != 1 {
        return Err(Error::InvalidArgument(format!("expected a function of one variable, got {}", f.arity)));
    }
    Ok(phi.with_expr(f.expr.substitute(&|_| phi.expr.clone())))
}

/// `Φ(x,y) = f(φ(x), ψ(y))` on the product chart.
pub fn holomorphic_combine(f: &Holomorphic, phi: &ComplexFunction, psi: &ComplexFunction) -> Result<ComplexFunction> {
    if f.arity != 2 {
        return Err(Error::InvalidArgument(format!("expected a function of two variables, got {}", f.arity)));
    }
    let shifted = psi.expr.shift_vars(phi.dim() as u32);
    let expr = f.expr.substitute(&|k| if k == 1 { phi.expr.clone() } else { shifted.clone() });
    ComplexFunction::new(expr, product_domain(&phi.domain, &psi.domain))
}

/// Components `x_k / |x|^n` on `R^dim \ {0}`.
pub fn radial_family(n: u32, dim: usize) -> Result<Vec<ComplexFunction>> {
    if n == 0 || dim == 0 {
        return Err(Error::InvalidArgument("n and the dimension must be positive".into()));
    }
    let d = punctured(dim);
    radial_components(n as i64, dim).into_iter().map(|e| ComplexFunction::new(e, d.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{kappa, tension};
    use crate::expr::simplify;

    fn f(src: &str, dim: usize) -> ComplexFunction {
        ComplexFunction::parse(src, dim).unwrap()
    }

    #[test]
    fn inversion_is_an_involution() {
        let inv = InversionMap::new(2);
        for (k, c) in inv.components.iter().enumerate() {
            assert_eq!(inv.pull_back(c), Expr::var(k as u32 + 1));
        }
    }

    #[test]
    fn dual_of_dual() {
        let phi = f("(x1 + i*x2)^2 + x3 - i*x4", 4);
        let back = dualize(&dualize(&phi).unwrap()).unwrap();
        assert_eq!(simplify(&back.expr), simplify(&phi.expr));
        assert!(matches!(dualize(&f("x1", 3)), Err(Error::OddDimension(3))));
    }

    #[test]
    fn direct_sum_shifts_variables() {
        let s = direct_sum(&f("sqrt(abs2(1,3)) + i*x4", 4), &f("x1 + i*x2", 2)).unwrap();
        assert_eq!(s.dim(), 6);
        assert_eq!(s.expr, parse("sqrt(abs2(1,3)) + i*x4 + x5 + i*x6", 6).unwrap());
    }

    #[test]
    fn holomorphic_parsing() {
        let w = Holomorphic::parse("exp(w)*w^2", &["w"]).unwrap();
        assert_eq!(w.expr, parse("exp(x1)*x1^2", 1).unwrap());
        assert!(matches!(Holomorphic::parse("w*conj(w)", &["w"]), Err(Error::NonHolomorphicInput(_))));
        assert!(matches!(Holomorphic::parse("w*wbar", &["w"]), Err(Error::NonHolomorphicInput(_))));
        let g = post_compose_holomorphic(&w, &f("x1 + i*x2", 2)).unwrap();
        assert_eq!(g.expr, parse("exp(x1+i*x2)*(x1+i*x2)^2", 2).unwrap());
        let id = Holomorphic::parse("w", &["w"]).unwrap();
        assert_eq!(post_compose_holomorphic(&id, &f("x1*x2", 2)).unwrap().expr, parse("x1*x2", 2).unwrap());
    }

    #[test]
    fn combine_with_sum_is_direct_sum() {
        let plus = Holomorphic::parse("w1 + w2", &["w1", "w2"]).unwrap();
        let a = f("x1 + i*x2", 2);
        let b = f("x1^2 - x2^2 + 2*i*x1*x2", 2);
        assert_eq!(holomorphic_combine(&plus, &a, &b).unwrap().expr, direct_sum(&a, &b).unwrap().expr);
    }

    #[test]
    fn inversion_components_are_conformal() {
        let fs = InversionMap::new(2).functions();
        let r4 = parse("abs2(1,4)^(-2)", 4).unwrap();
        for j in 0..4 {
            for k in 0..4 {
                let want = if j == k { r4.clone() } else { Expr::zero() };
                assert_eq!(kappa(&fs[j], &fs[k]).unwrap(), simplify(&want), "({j},{k})");
            }
        }
    }

    #[test]
    fn radial_tension_closed_form() {
        for (n, p) in [(1u32, 3usize), (2, 4), (3, 3)] {
            let fam = radial_family(n, p).unwrap();
            let c = (n as i64) * (n as i64 - p as i64);
            for phi in &fam {
                // n(n-p) x_k / |x|^(n+2), i.e. n(n-p) / |x|^2 times the component.
                let want = Expr::product([
                    Expr::int(c),
                    phi.expr.clone(),
                    Expr::pow(&Expr::abs2(1, p as u32), &rational(-1, 1)),
                ]);
                assert_eq!(tension(phi).unwrap(), simplify(&want), "n={n} p={p}");
            }
        }
    }
}
