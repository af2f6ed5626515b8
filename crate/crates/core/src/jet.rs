//! Truncated multivariate Taylor series over complex doubles.
//!
//! A [`Jet`] of order `D` in `m` variables stores `∂^β f / β!` for every
//! multi-index `|β| <= D`. Next to the coefficients it carries a magnitude
//! jet: for every coefficient, a bound on the sum of absolute values of the
//! additive terms that produced it. Residuals are reported relative to that
//! bound, so a value that is small only because large terms cancelled is
//! still recognised as rounding noise.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::expr::{coeff_to_c64, Expr, ExprId, Kind, Prim};

/// Multi-index table for jets of a given dimension and order.
///
/// Indices are stored in graded order, so the layout of order `d` is a prefix
/// of the layout of any order `D >= d`.
#[derive(Debug)]
pub struct Layout {
    m: usize,
    order: usize,
    alphas: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, u32>,
    /// `up[k][i]`: index of `alphas[i] + e_k`, or `u32::MAX` past the order.
    up: Vec<Vec<u32>>,
    /// First nonzero coordinate of each multi-index.
    pivot: Vec<u8>,
    /// Offsets into `pairs` per output index.
    offsets: Vec<u32>,
    /// `(δ, γ)` index pairs with `δ + γ = β`, grouped by `β`.
    pairs: Vec<(u32, u32)>,
    /// Index of the first coefficient of each total degree.
    degree_start: Vec<usize>,
}

fn layouts() -> &'static Mutex<FxHashMap<(usize, usize), Arc<Layout>>> {
    static CACHE: OnceLock<Mutex<FxHashMap<(usize, usize), Arc<Layout>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(FxHashMap::default()))
}

impl Layout {
    /// Shared layout for `m` variables and order `order`.
    pub fn get(m: usize, order: usize) -> Arc<Layout> {
        let mut cache = layouts().lock().expect("layout cache poisoned");
        cache
            .entry((m, order))
            .or_insert_with(|| Arc::new(Layout::build(m, order)))
            .clone()
    }

    fn build(m: usize, order: usize) -> Layout {
        let mut alphas: Vec<Vec<u8>> = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            degree_start.push(alphas.len());
            let mut cur = vec![0u8; m];
            compositions(m, d, 0, &mut cur, &mut alphas);
        }
        degree_start.push(alphas.len());
        let index: HashMap<Vec<u8>, u32> =
            alphas.iter().enumerate().map(|(i, a)| (a.clone(), i as u32)).collect();
        let mut up = vec![vec![u32::MAX; alphas.len()]; m];
        for (i, a) in alphas.iter().enumerate() {
            for (k, row) in up.iter_mut().enumerate() {
                let mut b = a.clone();
                b[k] += 1;
                if let Some(&j) = index.get(&b) {
                    row[i] = j;
                }
            }
        }
        let pivot = alphas
            .iter()
            .map(|a| a.iter().position(|&x| x > 0).unwrap_or(0) as u8)
            .collect();
        let mut offsets = Vec::with_capacity(alphas.len() + 1);
        let mut pairs = Vec::new();
        for beta in &alphas {
            offsets.push(pairs.len() as u32);
            let mut delta = vec![0u8; m];
            sub_indices(beta, 0, &mut delta, &mut |d| {
                let g: Vec<u8> = beta.iter().zip(d).map(|(b, x)| b - x).collect();
                pairs.push((index[d], index[&g]));
            });
        }
        offsets.push(pairs.len() as u32);
        Layout { m, order, alphas, index, up, pivot, offsets, pairs, degree_start }
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn multi_index(&self, i: usize) -> &[u8] {
        &self.alphas[i]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).map(|&i| i as usize)
    }

    /// Number of coefficients of total degree at most `d`.
    pub fn prefix_len(&self, d: usize) -> usize {
        self.degree_start[d.min(self.order) + 1]
    }

    fn pairs_of(&self, i: usize) -> &[(u32, u32)] {
        &self.pairs[self.offsets[i] as usize..self.offsets[i + 1] as usize]
    }
}

/// All multi-indices of length `m` and sum `d`, first coordinate descending.
fn compositions(m: usize, d: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == m {
        cur[pos] = d as u8;
        out.push(cur.clone());
        return;
    }
    if m == 0 {
        if d == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for x in (0..=d).rev() {
        cur[pos] = x as u8;
        compositions(m, d - x, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

fn sub_indices(beta: &[u8], pos: usize, cur: &mut Vec<u8>, f: &mut impl FnMut(&[u8])) {
    if pos == beta.len() {
        f(cur);
        return;
    }
    for x in 0..=beta[pos] {
        cur[pos] = x;
        sub_indices(beta, pos + 1, cur, f);
    }
    cur[pos] = 0;
}

/// Truncated Taylor expansion with a parallel magnitude bound.
#[derive(Clone, Debug)]
pub struct Jet {
    layout: Arc<Layout>,
    c: Vec<Complex64>,
    mag: Vec<f64>,
}

/// Tolerance for deciding that a value sits on the nonpositive real axis.
const AXIS_EPS: f64 = 1e-14;

impl Jet {
    pub fn constant(layout: &Arc<Layout>, v: Complex64) -> Jet {
        let mut c = vec![Complex64::new(0.0, 0.0); layout.len()];
        let mut mag = vec![0.0; layout.len()];
        c[0] = v;
        mag[0] = v.norm();
        Jet { layout: layout.clone(), c, mag }
    }

    /// The jet of `x_k` (1-based) at `point`.
    pub fn variable(layout: &Arc<Layout>, point: &[f64], k: usize) -> Jet {
        let mut j = Jet::constant(layout, Complex64::new(point[k - 1], 0.0));
        if layout.order >= 1 {
            let i = layout.up[k - 1][0] as usize;
            j.c[i] = Complex64::new(1.0, 0.0);
            j.mag[i] = 1.0;
        }
        j
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn dim(&self) -> usize {
        self.layout.m
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.c
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.mag
    }

    /// Coefficient `∂^α f / α!` at the expansion point.
    pub fn coeff(&self, alpha: &[u8]) -> Option<Complex64> {
        self.layout.index_of(alpha).map(|i| self.c[i])
    }

    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    fn same_layout(&self, other: &Jet) {
        assert!(
            Arc::ptr_eq(&self.layout, &other.layout),
            "jets with different layouts ({}x{} vs {}x{})",
            self.layout.m,
            self.layout.order,
            other.layout.m,
            other.layout.order
        );
    }

    pub fn add(&self, other: &Jet) -> Jet {
        self.same_layout(other);
        Jet {
            layout: self.layout.clone(),
            c: self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect(),
            mag: self.mag.iter().zip(&other.mag).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        self.same_layout(other);
        Jet {
            layout: self.layout.clone(),
            c: self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect(),
            mag: self.mag.iter().zip(&other.mag).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Jet {
        let n = s.norm();
        Jet {
            layout: self.layout.clone(),
            c: self.c.iter().map(|a| a * s).collect(),
            mag: self.mag.iter().map(|a| a * n).collect(),
        }
    }

    pub fn neg(&self) -> Jet {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// Coefficient-wise conjugate; the jet of `conj(f)` for real variables.
    pub fn conj(&self) -> Jet {
        Jet { layout: self.layout.clone(), c: self.c.iter().map(|a| a.conj()).collect(), mag: self.mag.clone() }
    }

    /// Whether every coefficient of degree two or more vanishes.
    fn is_affine(&self) -> bool {
        let start = self.layout.prefix_len(1);
        self.c[start..].iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        self.same_layout(other);
        if self.is_affine() {
            return other.mul_affine(self);
        }
        if other.is_affine() {
            return self.mul_affine(other);
        }
        let l = &self.layout;
        let mut c = vec![Complex64::new(0.0, 0.0); l.len()];
        let mut mag = vec![0.0; l.len()];
        for i in 0..l.len() {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut m = 0.0;
            for &(d, g) in l.pairs_of(i) {
                acc += self.c[d as usize] * other.c[g as usize];
                m += self.mag[d as usize] * other.mag[g as usize];
            }
            c[i] = acc;
            mag[i] = m;
        }
        Jet { layout: l.clone(), c, mag }
    }

    /// Product with a jet whose coefficients of degree >= 2 vanish.
    fn mul_affine(&self, a: &Jet) -> Jet {
        let l = &self.layout;
        let mut out = self.scale(a.c[0]);
        out.mag.iter_mut().zip(&self.mag).for_each(|(o, s)| *o = s * a.mag[0]);
        if l.order == 0 {
            return out;
        }
        let lower = l.prefix_len(l.order - 1);
        for k in 0..l.m {
            let ak = l.up[k][0] as usize;
            let (coef, cm) = (a.c[ak], a.mag[ak]);
            if coef.re == 0.0 && coef.im == 0.0 && cm == 0.0 {
                continue;
            }
            for i in 0..lower {
                let j = l.up[k][i] as usize;
                out.c[j] += coef * self.c[i];
                out.mag[j] += cm * self.mag[i];
            }
        }
        out
    }

    pub fn powi(&self, n: i64) -> Result<Jet> {
        if n < 0 {
            return self.pow_f64(n as f64, true);
        }
        let mut base = self.clone();
        let mut k = n as u64;
        let mut acc = Jet::constant(&self.layout, Complex64::new(1.0, 0.0));
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        Ok(acc)
    }

    /// Principal-branch power `u^e`.
    pub fn powf(&self, e: f64) -> Result<Jet> {
        if e.fract() == 0.0 && e.abs() < 1e15 {
            return self.powi(e as i64);
        }
        self.pow_f64(e, false)
    }

    fn check_cut(&self, function: &'static str) -> Result<()> {
        let u = self.c[0];
        if u.im.abs() <= AXIS_EPS * u.norm().max(1.0) && u.re <= 0.0 {
            return Err(Error::BranchCutViolation { function, re: u.re, im: u.im });
        }
        Ok(())
    }

    fn pow_f64(&self, e: f64, integral: bool) -> Result<Jet> {
        let u0 = self.c[0];
        if integral {
            if u0.norm() == 0.0 {
                return Err(Error::DivisionByZero);
            }
        } else {
            self.check_cut("power")?;
        }
        let l = &self.layout;
        let mut v = vec![Complex64::new(0.0, 0.0); l.len()];
        let mut vm = vec![0.0; l.len()];
        v[0] = if integral { u0.powi(e as i32) } else { u0.powf(e) };
        let du = (e * v[0] / u0).norm();
        vm[0] = v[0].norm() + du * (self.mag[0] - u0.norm()).max(0.0);
        let inv0 = 1.0 / u0;
        let inv0m = 1.0 / u0.norm();
        for i in 1..l.len() {
            let c = l.pivot[i] as usize;
            let beta = &l.alphas[i];
            let bc = beta[c] as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            let mut m = 0.0;
            for &(d, g) in l.pairs_of(i) {
                let (d, g) = (d as usize, g as usize);
                if g == i {
                    continue;
                }
                let w = e * l.alphas[d][c] as f64 - l.alphas[g][c] as f64;
                if w == 0.0 {
                    continue;
                }
                acc += w * self.c[d] * v[g];
                m += w.abs() * self.mag[d] * vm[g];
            }
            v[i] = acc * inv0 / bc;
            vm[i] = m * inv0m / bc;
        }
        Ok(Jet { layout: l.clone(), c: v, mag: vm })
    }

    pub fn exp(&self) -> Jet {
        let l = &self.layout;
        let mut v = vec![Complex64::new(0.0, 0.0); l.len()];
        let mut vm = vec![0.0; l.len()];
        v[0] = self.c[0].exp();
        vm[0] = v[0].norm() * (1.0 + (self.mag[0] - self.c[0].norm()).max(0.0));
        for i in 1..l.len() {
            let c = l.pivot[i] as usize;
            let bc = l.alphas[i][c] as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            let mut m = 0.0;
            for &(d, g) in l.pairs_of(i) {
                let (d, g) = (d as usize, g as usize);
                let w = l.alphas[d][c] as f64;
                if w == 0.0 {
                    continue;
                }
                acc += w * self.c[d] * v[g];
                m += w * self.mag[d] * vm[g];
            }
            v[i] = acc / bc;
            vm[i] = m / bc;
        }
        Jet { layout: l.clone(), c: v, mag: vm }
    }

    pub fn log(&self) -> Result<Jet> {
        self.check_cut("log")?;
        let l = &self.layout;
        let u0 = self.c[0];
        let mut v = vec![Complex64::new(0.0, 0.0); l.len()];
        let mut vm = vec![0.0; l.len()];
        v[0] = u0.ln();
        vm[0] = v[0].norm() + (self.mag[0] - u0.norm()).max(0.0) / u0.norm();
        let inv0 = 1.0 / u0;
        let inv0m = 1.0 / u0.norm();
        for i in 1..l.len() {
            let c = l.pivot[i] as usize;
            let bc = l.alphas[i][c] as f64;
            let mut acc = bc * self.c[i];
            let mut m = bc * self.mag[i];
            for &(d, g) in l.pairs_of(i) {
                let (d, g) = (d as usize, g as usize);
                if g == i {
                    continue;
                }
                let w = l.alphas[g][c] as f64;
                if w == 0.0 {
                    continue;
                }
                acc -= w * self.c[d] * v[g];
                m += w * self.mag[d] * vm[g];
            }
            v[i] = acc * inv0 / bc;
            vm[i] = m * inv0m / bc;
        }
        Ok(Jet { layout: l.clone(), c: v, mag: vm })
    }

    /// `(sin u, cos u)` computed together.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let l = &self.layout;
        let n = l.len();
        let mut s = vec![Complex64::new(0.0, 0.0); n];
        let mut k = vec![Complex64::new(0.0, 0.0); n];
        let mut sm = vec![0.0; n];
        let mut km = vec![0.0; n];
        let u0 = self.c[0];
        s[0] = u0.sin();
        k[0] = u0.cos();
        let slack = (self.mag[0] - u0.norm()).max(0.0);
        sm[0] = s[0].norm() + k[0].norm() * slack;
        km[0] = k[0].norm() + s[0].norm() * slack;
        for i in 1..n {
            let c = l.pivot[i] as usize;
            let bc = l.alphas[i][c] as f64;
            let (mut a, mut b) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            let (mut am, mut bm) = (0.0, 0.0);
            for &(d, g) in l.pairs_of(i) {
                let (d, g) = (d as usize, g as usize);
                let w = l.alphas[d][c] as f64;
                if w == 0.0 {
                    continue;
                }
                let t = w * self.c[d];
                a += t * k[g];
                b -= t * s[g];
                am += w * self.mag[d] * km[g];
                bm += w * self.mag[d] * sm[g];
            }
            s[i] = a / bc;
            k[i] = b / bc;
            sm[i] = am / bc;
            km[i] = bm / bc;
        }
        (
            Jet { layout: l.clone(), c: s, mag: sm },
            Jet { layout: l.clone(), c: k, mag: km },
        )
    }

    pub fn acos(&self) -> Result<Jet> {
        let u0 = self.c[0];
        if u0.im.abs() <= AXIS_EPS * u0.norm().max(1.0) && u0.re.abs() >= 1.0 {
            return Err(Error::DomainViolation { value: u0.re });
        }
        let l = &self.layout;
        let one = Jet::constant(l, Complex64::new(1.0, 0.0));
        let w = one.sub(&self.mul(self)).pow_f64(-0.5, false)?;
        let mut v = vec![Complex64::new(0.0, 0.0); l.len()];
        let mut vm = vec![0.0; l.len()];
        v[0] = u0.acos();
        vm[0] = v[0].norm() + w.c[0].norm() * (self.mag[0] - u0.norm()).max(0.0);
        for i in 1..l.len() {
            let c = l.pivot[i] as usize;
            let bc = l.alphas[i][c] as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            let mut m = 0.0;
            for &(d, g) in l.pairs_of(i) {
                let (d, g) = (d as usize, g as usize);
                let wt = l.alphas[d][c] as f64;
                if wt == 0.0 {
                    continue;
                }
                acc -= wt * self.c[d] * w.c[g];
                m += wt * self.mag[d] * w.mag[g];
            }
            v[i] = acc / bc;
            vm[i] = m / bc;
        }
        Ok(Jet { layout: l.clone(), c: v, mag: vm })
    }

    /// Restriction to order `d <= self.order()`.
    pub fn truncate(&self, d: usize) -> Jet {
        let layout = Layout::get(self.layout.m, d.min(self.layout.order));
        let n = layout.len();
        Jet { layout, c: self.c[..n].to_vec(), mag: self.mag[..n].to_vec() }
    }

    /// `∂f/∂x_k` (1-based) as a jet of one order less.
    pub fn partial(&self, k: usize) -> Result<Jet> {
        if k == 0 || k > self.layout.m {
            return Err(Error::VariableOutOfRange { index: k as u32, dim: self.layout.m });
        }
        if self.layout.order == 0 {
            return Err(Error::OrderTooLow { have: 0, need: 1 });
        }
        let layout = Layout::get(self.layout.m, self.layout.order - 1);
        let up = &self.layout.up[k - 1];
        let mut c = Vec::with_capacity(layout.len());
        let mut mag = Vec::with_capacity(layout.len());
        for i in 0..layout.len() {
            let f = (layout.alphas[i][k - 1] as f64) + 1.0;
            let j = up[i] as usize;
            c.push(f * self.c[j]);
            mag.push(f * self.mag[j]);
        }
        Ok(Jet { layout, c, mag })
    }

    /// Euclidean Laplacian as a jet of two orders less.
    pub fn laplacian(&self) -> Result<Jet> {
        if self.layout.order < 2 {
            return Err(Error::OrderTooLow { have: self.layout.order, need: 2 });
        }
        let layout = Layout::get(self.layout.m, self.layout.order - 2);
        let mut c = vec![Complex64::new(0.0, 0.0); layout.len()];
        let mut mag = vec![0.0; layout.len()];
        for k in 0..self.layout.m {
            let up = &self.layout.up[k];
            for i in 0..layout.len() {
                let b = layout.alphas[i][k] as f64;
                let f = (b + 1.0) * (b + 2.0);
                let j = up[up[i] as usize] as usize;
                c[i] += f * self.c[j];
                mag[i] += f * self.mag[j];
            }
        }
        Ok(Jet { layout, c, mag })
    }
}

/// Value and magnitude bound of a scalar extracted from a jet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub value: Complex64,
    /// Sum of absolute values of the additive terms behind `value`.
    pub scale: f64,
}

impl Scaled {
    /// `|value| / scale`, or `|value|` when the scale vanishes.
    pub fn residual(&self) -> f64 {
        let v = self.value.norm();
        if self.scale > 0.0 && self.scale.is_finite() {
            v / self.scale
        } else {
            v
        }
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `(Σ_k ∂²/∂x_k²)^p f` at the expansion point, with its magnitude bound.
pub fn laplacian_power_scaled(j: &Jet, p: usize) -> Result<Scaled> {
    let need = 2 * p;
    if j.order() < need {
        return Err(Error::OrderTooLow { have: j.order(), need });
    }
    let l = &j.layout;
    let mut value = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    let pf = factorial(p as u32);
    for i in l.degree_start[need]..l.degree_start[need + 1] {
        let beta = &l.alphas[i];
        if beta.iter().any(|b| b % 2 == 1) {
            continue;
        }
        let mut w = pf;
        for &b in beta {
            w *= factorial(b as u32) / factorial((b / 2) as u32);
        }
        value += w * j.c[i];
        scale += w * j.mag[i];
    }
    Ok(Scaled { value, scale })
}

/// `(Σ_k ∂²/∂x_k²)^p f` at the expansion point.
pub fn laplacian_power(j: &Jet, p: usize) -> Result<Complex64> {
    laplacian_power_scaled(j, p).map(|s| s.value)
}

/// Jet of `e` at `point` to total order `order`.
pub fn eval_jet(e: &Expr, point: &[f64], order: usize) -> Result<Jet> {
    let layout = Layout::get(point.len(), order);
    let mut memo = FxHashMap::default();
    eval_in(e, point, &layout, &mut memo)
}

/// Evaluates several expressions at one point, sharing common subtrees.
pub fn eval_jets(es: &[&Expr], point: &[f64], order: usize) -> Result<Vec<Jet>> {
    let layout = Layout::get(point.len(), order);
    let mut memo = FxHashMap::default();
    es.iter().map(|e| eval_in(e, point, &layout, &mut memo)).collect()
}

fn eval_in(
    e: &Expr,
    point: &[f64],
    layout: &Arc<Layout>,
    memo: &mut FxHashMap<ExprId, Jet>,
) -> Result<Jet> {
    if let Some(j) = memo.get(&e.id()) {
        return Ok(j.clone());
    }
    let j = match e.kind() {
        Kind::Const(c) => Jet::constant(layout, coeff_to_c64(c)),
        Kind::Var(k) => {
            let k = *k as usize;
            if k > point.len() {
                return Err(Error::VariableOutOfRange { index: k as u32, dim: point.len() });
            }
            Jet::variable(layout, point, k)
        }
        Kind::Sum(ts) => {
            let mut acc = eval_in(&ts[0], point, layout, memo)?;
            for t in &ts[1..] {
                acc = acc.add(&eval_in(t, point, layout, memo)?);
            }
            acc
        }
        Kind::Product(fs) => {
            let mut start = 1;
            let mut acc = match fs[0].as_const() {
                Some(c) if fs.len() > 1 => {
                    start = 2;
                    eval_in(&fs[1], point, layout, memo)?.scale(coeff_to_c64(c))
                }
                _ => eval_in(&fs[0], point, layout, memo)?,
            };
            for f in &fs[start..] {
                acc = acc.mul(&eval_in(f, point, layout, memo)?);
            }
            acc
        }
        Kind::Power(b, x) => {
            let jb = eval_in(b, point, layout, memo)?;
            if x.is_integer() {
                let n = crate::expr::rational_as_i64(x).ok_or_else(|| {
                    Error::InvalidArgument("integer exponent out of range".into())
                })?;
                jb.powi(n)?
            } else {
                let xf = num_traits::ToPrimitive::to_f64(x).unwrap_or(f64::NAN);
                jb.pow_f64(xf, false)?
            }
        }
        Kind::Prim(p, a) => {
            let ja = eval_in(a, point, layout, memo)?;
            match p {
                Prim::Log => ja.log()?,
                Prim::Exp => ja.exp(),
                Prim::Sin => ja.sin_cos().0,
                Prim::Cos => ja.sin_cos().1,
                Prim::Acos => ja.acos()?,
            }
        }
    };
    memo.insert(e.id(), j.clone());
    Ok(j)
}

/// `τ^p(z^j conj(z)^k)` at `point` for a Euclidean chart.
pub fn numeric_condition(z: &Expr, j: u32, k: u32, p: usize, point: &[f64]) -> Result<Scaled> {
    let zj = eval_jet(z, point, 2 * p)?;
    condition_from_jet(&zj, j, k, p)
}

/// Same as [`numeric_condition`] for an already computed jet of `z`.
pub fn condition_from_jet(zj: &Jet, j: u32, k: u32, p: usize) -> Result<Scaled> {
    let f = zj.powi(j as i64)?.mul(&zj.conj().powi(k as i64)?);
    laplacian_power_scaled(&f, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.norm())
    }

    #[test]
    fn layout_sizes_and_prefix() {
        let l = Layout::get(8, 8);
        assert_eq!(l.len(), 12870);
        let s = Layout::get(8, 6);
        assert_eq!(l.prefix_len(6), s.len());
        for i in 0..s.len() {
            assert_eq!(l.multi_index(i), s.multi_index(i));
        }
        assert_eq!(Layout::get(3, 0).len(), 1);
    }

    #[test]
    fn square_of_variable() {
        let j = eval_jet(&parse("x1^2", 1).unwrap(), &[3.0], 2).unwrap();
        assert_eq!(j.coeffs(), &[c(9.0), c(6.0), c(1.0)]);
    }

    #[test]
    fn square_root() {
        let j = eval_jet(&parse("sqrt(x1)", 1).unwrap(), &[4.0], 1).unwrap();
        assert!(close(j.coeffs()[0], c(2.0), 1e-15));
        assert!(close(j.coeffs()[1], c(0.25), 1e-15));
    }

    #[test]
    fn radius_second_coefficient() {
        let e = parse("sqrt(abs2(1,3)) + i*x4", 4).unwrap();
        let j = eval_jet(&e, &[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!(close(j.coeff(&[0, 2, 0, 0]).unwrap(), c(0.5), 1e-14));
    }

    #[test]
    fn laplacian_powers_of_polynomials() {
        let j = eval_jet(&parse("abs2(1,3)", 3).unwrap(), &[0.3, -1.2, 2.0], 2).unwrap();
        assert!(close(laplacian_power(&j, 1).unwrap(), c(6.0), 1e-14));
        let j = eval_jet(&parse("x1^4", 1).unwrap(), &[0.7], 4).unwrap();
        assert!(close(laplacian_power(&j, 2).unwrap(), c(24.0), 1e-13));
        assert!(matches!(laplacian_power(&j, 3), Err(Error::OrderTooLow { have: 4, need: 6 })));
    }

    #[test]
    fn biharmonic_radial_function() {
        let e = parse("sqrt(abs2(1,3)) + i*x4", 4).unwrap();
        for pt in [[1.0, 0.0, 0.0, 0.0], [0.3, -0.8, 1.1, 2.0]] {
            let j = eval_jet(&e, &pt, 4).unwrap();
            let s = laplacian_power_scaled(&j, 2).unwrap();
            assert!(s.value.norm() < 1e-10, "{:?}", s);
        }
        let j = eval_jet(&e, &[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!(close(laplacian_power(&j, 1).unwrap(), c(2.0), 1e-14));
    }

    #[test]
    fn conditions_on_holomorphic_and_radial() {
        let z = parse("x1+i*x2", 2).unwrap();
        let s = numeric_condition(&z, 1, 1, 1, &[0.4, -1.3]).unwrap();
        assert!(close(s.value, c(4.0), 1e-14));
        let z = parse("sqrt(abs2(1,3)) + i*x4", 4).unwrap();
        let pt = [0.3, -0.8, 1.1, 2.0];
        assert!(numeric_condition(&z, 2, 0, 2, &pt).unwrap().residual() < 1e-12);
        // z conj(z) = |x|^2 is biharmonic; the first failing (2,2) entry is (2,1)
        assert!(numeric_condition(&z, 1, 1, 2, &pt).unwrap().residual() < 1e-12);
        assert!(numeric_condition(&z, 2, 1, 2, &pt).unwrap().residual() > 1e-3);
    }

    #[test]
    fn transcendental_lifts_match_closed_forms() {
        // d/dx of each function against hand derivatives
        let pt = [0.6, 0.35];
        let cases: [(&str, fn(Complex64) -> Complex64); 5] = [
            ("exp(x1+i*x2)", |w| w.exp()),
            ("log(x1+i*x2)", |w| 1.0 / w),
            ("sin(x1+i*x2)", |w| w.cos()),
            ("cos(x1+i*x2)", |w| -w.sin()),
            ("(x1+i*x2)^(1/3)", |w| w.powf(-2.0 / 3.0) / 3.0),
        ];
        let w = Complex64::new(pt[0], pt[1]);
        for (src, d) in cases {
            let j = eval_jet(&parse(src, 2).unwrap(), &pt, 3).unwrap();
            assert!(close(j.coeff(&[1, 0]).unwrap(), d(w), 1e-13), "{src}");
            // holomorphic: ∂/∂x2 = i ∂/∂x1
            assert!(close(j.coeff(&[0, 1]).unwrap(), Complex64::i() * d(w), 1e-13), "{src}");
            assert!(j.laplacian().unwrap().value().norm() < 1e-12, "{src}");
        }
        let j = eval_jet(&parse("acos(x1)", 1).unwrap(), &[0.3], 3).unwrap();
        let want = -1.0 / (1.0f64 - 0.09).sqrt();
        assert!(close(j.coeffs()[1], c(want), 1e-14));
    }

    #[test]
    fn branch_cuts_and_domains() {
        let e = parse("sqrt(x1)", 1).unwrap();
        assert!(matches!(eval_jet(&e, &[-1.0], 2), Err(Error::BranchCutViolation { .. })));
        let e = parse("log(x1)", 1).unwrap();
        assert!(matches!(eval_jet(&e, &[0.0], 2), Err(Error::BranchCutViolation { .. })));
        let e = parse("acos(x1)", 1).unwrap();
        assert!(matches!(eval_jet(&e, &[1.5], 1), Err(Error::DomainViolation { .. })));
        let e = parse("1/x1", 1).unwrap();
        assert!(matches!(eval_jet(&e, &[0.0], 1), Err(Error::DivisionByZero)));
    }

    #[test]
    fn partials_and_laplacian_agree_with_laplacian_power() {
        let e = parse("exp(x1*x2)*sin(x3) + x1^3*x3", 3).unwrap();
        let j = eval_jet(&e, &[0.2, -0.5, 0.9], 6).unwrap();
        let l = j.laplacian().unwrap().laplacian().unwrap();
        assert!(close(l.value(), laplacian_power(&j, 2).unwrap(), 1e-12));
        let dx = j.partial(1).unwrap();
        assert_eq!(dx.order(), 5);
        assert!(close(dx.value(), j.coeff(&[1, 0, 0]).unwrap(), 1e-15));
    }

    #[test]
    fn cancellation_is_visible_in_scale() {
        let e = parse("(x1+1)^2 - x1^2 - 2*x1 - 1", 1).unwrap();
        let j = eval_jet(&e, &[1.0e6], 0).unwrap();
        let s = Scaled { value: j.value(), scale: j.magnitudes()[0] };
        assert!(s.residual() < 1e-14);
        assert!(s.scale > 1e11);
    }
}
