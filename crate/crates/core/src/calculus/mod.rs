//! Tension field, conformality operator and their iterates on a coordinate
//! chart.
//!
//! Every operation runs inside a [`Calculus`] context, which owns a
//! [`Normalizer`] so partial derivatives are memoized across calls and each
//! intermediate field is kept in normal form.

pub(crate) mod certify;
pub(crate) mod field;
pub mod identities;

pub use field::WPoly;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr::{coeff_int, coeff_rational, rational, Domain, Expr, Frac, Normalizer, DEFAULT_BUDGET};
use crate::parse::parse;

/// Riemannian metric on a chart, `g_ij` as expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    dim: usize,
    entries: Vec<Vec<Expr>>,
    euclidean: bool,
}

impl Metric {
    pub fn euclidean(dim: usize) -> Metric {
        let entries = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect())
            .collect();
        Metric { dim, entries, euclidean: true }
    }

    /// A general metric. Entries must form a square matrix that is symmetric
    /// after simplification.
    pub fn new(entries: Vec<Vec<Expr>>) -> Result<Metric> {
        let dim = entries.len();
        for row in &entries {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: row.len() });
            }
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let d = crate::expr::simplify(&(entries[i][j].clone() - entries[j][i].clone()));
                if !d.is_zero() {
                    return Err(Error::InvalidArgument(format!("metric entries ({},{}) and ({},{}) differ", i + 1, j + 1, j + 1, i + 1)));
                }
            }
        }
        Ok(Metric { dim, entries, euclidean: false })
    }

    /// `factor * δ_ij`.
    pub fn conformal(dim: usize, factor: Expr) -> Metric {
        let entries = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { factor.clone() } else { Expr::zero() }).collect())
            .collect();
        Metric { dim, entries, euclidean: false }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_euclidean(&self) -> bool {
        self.euclidean
    }

    pub fn entry(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i][j]
    }
}

/// A complex-valued function on a chart: expression, domain and metric.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexFunction {
    pub expr: Expr,
    pub domain: Domain,
    pub metric: Metric,
}

impl ComplexFunction {
    /// Euclidean function on `domain`.
    pub fn new(expr: Expr, domain: Domain) -> Result<ComplexFunction> {
        let v = expr.max_var();
        if v as usize > domain.dim {
            return Err(Error::VariableOutOfRange { index: v, dim: domain.dim });
        }
        let metric = Metric::euclidean(domain.dim);
        Ok(ComplexFunction { expr, domain, metric })
    }

    /// Parses `src` on all of `R^dim`.
    pub fn parse(src: &str, dim: usize) -> Result<ComplexFunction> {
        ComplexFunction::new(parse(src, dim)?, Domain::new(dim))
    }

    pub fn with_metric(mut self, metric: Metric) -> Result<ComplexFunction> {
        if metric.dim != self.domain.dim {
            return Err(Error::DimensionMismatch { left: self.domain.dim, right: metric.dim });
        }
        self.metric = metric;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    /// `conj(z)` on the same chart.
    pub fn conjugate(&self) -> ComplexFunction {
        self.with_expr(self.expr.conjugate())
    }

    /// Another function on the same chart and metric.
    pub fn with_expr(&self, expr: Expr) -> ComplexFunction {
        ComplexFunction { expr, domain: self.domain.clone(), metric: self.metric.clone() }
    }
}

/// Differential operators over one normalization context.
pub struct Calculus {
    n: Normalizer,
    dim: usize,
    /// Inverse metric; `None` on a Euclidean chart.
    inverse: Option<Vec<Vec<Frac>>>,
    /// `∂_j |g| / (2 |g|)`.
    half_dlog: Vec<Frac>,
}

impl Calculus {
    pub fn euclidean(dim: usize) -> Calculus {
        Calculus::euclidean_with_budget(dim, DEFAULT_BUDGET)
    }

    pub fn euclidean_with_budget(dim: usize, budget: u64) -> Calculus {
        Calculus { n: Normalizer::with_budget(budget), dim, inverse: None, half_dlog: Vec::new() }
    }

    pub fn new(metric: &Metric, budget: u64) -> Result<Calculus> {
        let mut c = Calculus::euclidean_with_budget(metric.dim, budget);
        if metric.euclidean {
            return Ok(c);
        }
        let m = metric.dim;
        let mut g = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::with_capacity(m);
            for j in 0..m {
                row.push(c.n.from_expr(&metric.entries[i][j])?);
            }
            g.push(row);
        }
        let (det, inv) = c.invert(g)?;
        let mut half_dlog = Vec::with_capacity(m);
        let two_det = c.n.scale(&det, &coeff_int(2));
        for j in 1..=m {
            let d = c.n.diff(&det, j as u32)?;
            half_dlog.push(c.n.div(&d, &two_det)?);
        }
        c.inverse = Some(inv);
        c.half_dlog = half_dlog;
        Ok(c)
    }

    /// Context matching the chart of `f`.
    pub fn for_function(f: &ComplexFunction, budget: u64) -> Result<Calculus> {
        Calculus::new(&f.metric, budget)
    }

    /// Gauss-Jordan elimination over normalized rational functions.
    fn invert(&mut self, mut a: Vec<Vec<Frac>>) -> Result<(Frac, Vec<Vec<Frac>>)> {
        let m = a.len();
        let n = &mut self.n;
        let mut inv: Vec<Vec<Frac>> = (0..m)
            .map(|i| (0..m).map(|j| if i == j { Frac::one() } else { Frac::zero() }).collect())
            .collect();
        let mut det = Frac::one();
        for col in 0..m {
            let pivot = (col..m).find(|&r| !a[r][col].is_zero()).ok_or(Error::MetricSingular)?;
            if pivot != col {
                a.swap(pivot, col);
                inv.swap(pivot, col);
                det = n.neg(&det);
            }
            let p = a[col][col].clone();
            det = n.mul(&det, &p)?;
            let ip = n.inv(&p)?;
            for j in 0..m {
                a[col][j] = n.mul(&a[col][j], &ip)?;
                inv[col][j] = n.mul(&inv[col][j], &ip)?;
            }
            for r in 0..m {
                if r == col || a[r][col].is_zero() {
                    continue;
                }
                let f = a[r][col].clone();
                for j in 0..m {
                    let t = n.mul(&f, &a[col][j])?;
                    a[r][j] = n.sub(&a[r][j], &t)?;
                    let t = n.mul(&f, &inv[col][j])?;
                    inv[r][j] = n.sub(&inv[r][j], &t)?;
                }
            }
        }
        Ok((det, inv))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalizer(&mut self) -> &mut Normalizer {
        &mut self.n
    }

    pub fn frac(&mut self, e: &Expr) -> Result<Frac> {
        let v = e.max_var();
        if v as usize > self.dim {
            return Err(Error::VariableOutOfRange { index: v, dim: self.dim });
        }
        self.n.from_expr(e)
    }

    pub fn expr(&self, f: &Frac) -> Expr {
        self.n.to_expr(f)
    }

    pub fn conj(&mut self, f: &Frac) -> Result<Frac> {
        self.n.conj(f)
    }

    pub fn add(&mut self, a: &Frac, b: &Frac) -> Result<Frac> {
        self.n.add(a, b)
    }

    pub fn sub(&mut self, a: &Frac, b: &Frac) -> Result<Frac> {
        self.n.sub(a, b)
    }

    pub fn mul(&mut self, a: &Frac, b: &Frac) -> Result<Frac> {
        self.n.mul(a, b)
    }

    pub fn pow(&mut self, a: &Frac, e: i64) -> Result<Frac> {
        self.n.pow_int(a, e)
    }

    /// `a * (num/den)` for a rational constant.
    pub fn scale(&self, a: &Frac, num: i64, den: i64) -> Frac {
        self.n.scale(a, &coeff_rational(rational(num, den)))
    }

    /// `∂f/∂x_1, ..., ∂f/∂x_m`.
    pub fn partials(&mut self, f: &Frac) -> Result<Vec<Frac>> {
        (1..=self.dim as u32).map(|k| self.n.diff(f, k)).collect()
    }

    /// `∇f` with the index raised by the inverse metric.
    pub fn gradient(&mut self, f: &Frac) -> Result<Vec<Frac>> {
        let d = self.partials(f)?;
        let Some(inv) = &self.inverse else {
            return Ok(d);
        };
        let inv = inv.clone();
        let mut out = Vec::with_capacity(self.dim);
        for row in &inv {
            let mut acc = Frac::zero();
            for (gij, dj) in row.iter().zip(&d) {
                if gij.is_zero() || dj.is_zero() {
                    continue;
                }
                let t = self.n.mul(gij, dj)?;
                acc = self.n.add(&acc, &t)?;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Laplace-Beltrami operator `τ(f)`.
    pub fn tension(&mut self, f: &Frac) -> Result<Frac> {
        let grad = self.gradient(f)?;
        let mut acc = Frac::zero();
        for (i, x) in grad.iter().enumerate() {
            let d = self.n.diff(x, i as u32 + 1)?;
            acc = self.n.add(&acc, &d)?;
        }
        if self.inverse.is_some() {
            let h = self.half_dlog.clone();
            for (x, hi) in grad.iter().zip(&h) {
                if x.is_zero() || hi.is_zero() {
                    continue;
                }
                let t = self.n.mul(x, hi)?;
                acc = self.n.add(&acc, &t)?;
            }
        }
        Ok(acc)
    }

    /// Conformality operator `κ(f,h) = g(∇f, ∇h)`.
    pub fn kappa(&mut self, f: &Frac, h: &Frac) -> Result<Frac> {
        let df = self.partials(f)?;
        let gh = self.gradient(h)?;
        let mut acc = Frac::zero();
        for (a, b) in df.iter().zip(&gh) {
            if a.is_zero() || b.is_zero() {
                continue;
            }
            let t = self.n.mul(a, b)?;
            acc = self.n.add(&acc, &t)?;
        }
        Ok(acc)
    }

    /// `τ^p(f)`, with `τ^0(f) = f`.
    pub fn iterate(&mut self, f: &Frac, p: usize) -> Result<Frac> {
        let mut cur = f.clone();
        for _ in 0..p {
            if cur.is_zero() {
                break;
            }
            cur = self.tension(&cur)?;
        }
        Ok(cur)
    }

    /// `[f, τ f, ..., τ^p f]`.
    pub fn ladder(&mut self, f: &Frac, p: usize) -> Result<Vec<Frac>> {
        let mut out = vec![f.clone()];
        for _ in 0..p {
            let next = self.tension(out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }
}

fn check_pair(f: &ComplexFunction, h: &ComplexFunction) -> Result<()> {
    if f.dim() != h.dim() {
        return Err(Error::DimensionMismatch { left: f.dim(), right: h.dim() });
    }
    if f.metric != h.metric {
        return Err(Error::InvalidArgument("functions live on different metrics".into()));
    }
    Ok(())
}

/// Components of `∇f`.
pub fn gradient(f: &ComplexFunction) -> Result<Vec<Expr>> {
    let mut c = Calculus::for_function(f, DEFAULT_BUDGET)?;
    let x = c.frac(&f.expr)?;
    let g = c.gradient(&x)?;
    Ok(g.iter().map(|t| c.expr(t)).collect())
}

/// `τ(f)`.
pub fn tension(f: &ComplexFunction) -> Result<Expr> {
    iterate_tension(f, 1)
}

/// `κ(f, h)`.
pub fn kappa(f: &ComplexFunction, h: &ComplexFunction) -> Result<Expr> {
    check_pair(f, h)?;
    let mut c = Calculus::for_function(f, DEFAULT_BUDGET)?;
    let a = c.frac(&f.expr)?;
    let b = c.frac(&h.expr)?;
    let k = c.kappa(&a, &b)?;
    Ok(c.expr(&k))
}

/// `τ^p(f)` with the default budget.
pub fn iterate_tension(f: &ComplexFunction, p: usize) -> Result<Expr> {
    iterate_tension_with(f, p, DEFAULT_BUDGET)
}

/// `τ^p(f)`; fails with `ExpressionBudgetExceeded` past `budget` term
/// operations.
pub fn iterate_tension_with(f: &ComplexFunction, p: usize, budget: u64) -> Result<Expr> {
    let mut c = Calculus::for_function(f, budget)?;
    let x = c.frac(&f.expr)?;
    let t = c.iterate(&x, p)?;
    Ok(c.expr(&t))
}

/// Wirtinger partials `∂^{j+k} F / ∂z^j ∂conj(z)^k` of some `F(z, conj z)`,
/// already evaluated along `z`.
pub type Partials = BTreeMap<(u32, u32), Expr>;

/// `τ(F(z, conj z))` from the first and second Wirtinger partials of `F`:
///
/// `F_z τ(z) + F_zbar τ(zbar) + F_zz κ(z,z) + 2 F_zzbar κ(z,zbar) + F_zbarzbar κ(zbar,zbar)`.
pub fn tension_of_composition(partials: &Partials, z: &ComplexFunction) -> Result<Expr> {
    let get = |j: u32, k: u32| {
        partials.get(&(j, k)).cloned().ok_or_else(|| Error::MissingPartial(format!("({j},{k})")))
    };
    let (f10, f01, f20, f11, f02) = (get(1, 0)?, get(0, 1)?, get(2, 0)?, get(1, 1)?, get(0, 2)?);
    let mut c = Calculus::for_function(z, DEFAULT_BUDGET)?;
    let zf = c.frac(&z.expr)?;
    let zb = c.conj(&zf)?;
    let tz = c.tension(&zf)?;
    let tzb = c.conj(&tz)?;
    let kzz = c.kappa(&zf, &zf)?;
    let kzzb = c.kappa(&zf, &zb)?;
    let kzbzb = c.conj(&kzz)?;
    let terms = [(f10, tz, 1), (f01, tzb, 1), (f20, kzz, 1), (f11, kzzb, 2), (f02, kzbzb, 1)];
    let mut acc = Frac::zero();
    for (p, field, w) in terms {
        let pf = c.frac(&p)?;
        let t = c.mul(&pf, &field)?;
        let t = c.scale(&t, w, 1);
        acc = c.add(&acc, &t)?;
    }
    Ok(c.expr(&acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::simplify;

    fn f(src: &str, m: usize) -> ComplexFunction {
        ComplexFunction::parse(src, m).unwrap()
    }

    fn eq(a: &Expr, src: &str, m: usize) {
        let d = simplify(&(a.clone() - parse(src, m).unwrap()));
        assert!(d.is_zero(), "{a} != {src}");
    }

    #[test]
    fn gradients() {
        let g = gradient(&f("x1^2 + i*x2", 2)).unwrap();
        eq(&g[0], "2*x1", 2);
        eq(&g[1], "i", 2);
        let g = gradient(&f("sqrt(abs2(1,3)) + i*x4", 4)).unwrap();
        eq(&g[0], "x1/sqrt(x1^2+x2^2+x3^2)", 4);
    }

    #[test]
    fn tensions() {
        eq(&tension(&f("x1^2 + x2^2", 2)).unwrap(), "4", 2);
        eq(&tension(&f("sqrt(abs2(1,3)) + i*x4", 4)).unwrap(), "2/sqrt(x1^2+x2^2+x3^2)", 4);
        eq(&iterate_tension(&f("x1^4", 1), 2).unwrap(), "24", 1);
        assert!(iterate_tension(&f("sqrt(abs2(1,3)) + i*x4", 4), 2).unwrap().is_zero());
    }

    #[test]
    fn kappas() {
        let z = f("x1 + i*x2", 2);
        assert!(kappa(&z, &z).unwrap().is_zero());
        eq(&kappa(&z, &z.conjugate()).unwrap(), "2", 2);
        let z = f("sqrt(abs2(1,3)) + i*x4", 4);
        assert!(kappa(&z, &z).unwrap().is_zero());
    }

    #[test]
    fn kappa_rejects_mixed_charts() {
        assert!(matches!(
            kappa(&f("x1", 1), &f("x1", 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn inversion_component() {
        let z = f("x1/abs2(1,4)", 4);
        eq(&tension(&z).unwrap(), "-4*x1/(x1^2+x2^2+x3^2+x4^2)^2", 4);
        assert!(iterate_tension(&z, 2).unwrap().is_zero());
    }

    #[test]
    fn identity_metric_matches_euclidean_path() {
        let entries = (0..3)
            .map(|i| (0..3).map(|j| if i == j { Expr::one() } else { Expr::zero() }).collect())
            .collect();
        let g = Metric::new(entries).unwrap();
        assert!(!g.is_euclidean());
        let z = f("sqrt(abs2(1,2)) * x3 + i*x1^3", 3);
        let a = tension(&z).unwrap();
        let b = tension(&z.clone().with_metric(g).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn conformal_metric_tension() {
        // g = e^(2u) δ on R^2: τ f = e^(-2u) Δ f.
        let g = Metric::conformal(2, parse("exp(2*x1)", 2).unwrap());
        let z = f("x1^2 + x2^3", 2).with_metric(g).unwrap();
        eq(&tension(&z).unwrap(), "exp(-2*x1)*(2 + 6*x2)", 2);
        // In dimension 3 the density term appears: τ f = e^(-2u)(Δf + ∇u·∇f).
        let g = Metric::conformal(3, parse("exp(2*x1)", 3).unwrap());
        let z = f("x1^2", 3).with_metric(g).unwrap();
        eq(&tension(&z).unwrap(), "exp(-2*x1)*(2 + 2*x1)", 3);
    }

    #[test]
    fn singular_metric() {
        let g = Metric::new(vec![
            vec![Expr::one(), Expr::var(1)],
            vec![Expr::var(1), parse("x1^2", 2).unwrap()],
        ])
        .unwrap();
        let z = f("x1", 2).with_metric(g).unwrap();
        assert_eq!(tension(&z), Err(Error::MetricSingular));
    }

    #[test]
    fn asymmetric_metric_is_rejected() {
        let r = Metric::new(vec![vec![Expr::one(), Expr::var(1)], vec![Expr::zero(), Expr::one()]]);
        assert!(r.is_err());
    }

    fn partials(pairs: &[((u32, u32), &str)], m: usize) -> Partials {
        pairs.iter().map(|&(k, s)| (k, parse(s, m).unwrap())).collect()
    }

    #[test]
    fn composition_square() {
        let z = f("sqrt(abs2(1,3)) + i*x4", 4);
        let zs = "(sqrt(abs2(1,3)) + i*x4)";
        let p = partials(
            &[((1, 0), &format!("2*{zs}")), ((0, 1), "0"), ((2, 0), "2"), ((1, 1), "0"), ((0, 2), "0")],
            4,
        );
        let lhs = tension_of_composition(&p, &z).unwrap();
        let direct = tension(&z.with_expr(z.expr.powi(2))).unwrap();
        assert_eq!(simplify(&(lhs - direct)), Expr::zero());
    }

    #[test]
    fn composition_modulus() {
        let z = f("x1 + i*x2", 2);
        let p = partials(
            &[((1, 0), "x1 - i*x2"), ((0, 1), "x1 + i*x2"), ((2, 0), "0"), ((1, 1), "1"), ((0, 2), "0")],
            2,
        );
        eq(&tension_of_composition(&p, &z).unwrap(), "4", 2);
    }

    #[test]
    fn composition_needs_second_partials() {
        let z = f("x1", 1);
        let p = partials(&[((1, 0), "1"), ((0, 1), "0")], 1);
        assert!(matches!(tension_of_composition(&p, &z), Err(Error::MissingPartial(_))));
    }

    #[test]
    fn budget_is_enforced() {
        let z = f("sqrt(abs2(1,3)) + i*x4", 4);
        let r = iterate_tension_with(&z.with_expr(z.expr.powi(5)), 2, 1000);
        assert!(matches!(r, Err(Error::ExpressionBudgetExceeded { .. })));
    }
}
