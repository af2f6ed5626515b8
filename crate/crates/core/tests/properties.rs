//! Property tests for the expression engine, the jet evaluator and the
//! calculus layer.

use num_complex::Complex64;
use pqmorph::calculus::{iterate_tension, kappa, tension, ComplexFunction};
use pqmorph::expr::{coeff, rational, simplify, Domain, Expr};
use pqmorph::jet::{eval_jet, laplacian_power};
use pqmorph::parse::{format, parse};
use proptest::prelude::*;

const DIM: usize = 3;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (1..=DIM as u32).prop_map(Expr::var),
        (-3i64..=3).prop_map(Expr::int),
        Just(Expr::i()),
        ((-4i64..=4), (1i64..=3)).prop_map(|(n, d)| Expr::rational(n, d)),
    ]
}

/// Polynomial-like expressions with occasional entire functions, so every
/// point of the sampling box is admissible.
fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::product),
            (inner.clone(), 2i64..=3).prop_map(|(e, n)| e.powi(n)),
            inner.clone().prop_map(|e| e.sin()),
            inner.clone().prop_map(|e| e.exp()),
            inner.prop_map(|e| e.conjugate()),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, DIM)
}

fn value(e: &Expr, x: &[f64]) -> Complex64 {
    eval_jet(e, x, 0).expect("entire expressions evaluate everywhere").value()
}

fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn simplify_is_idempotent(e in expr()) {
        let s = simplify(&e);
        prop_assert_eq!(simplify(&s), s);
    }

    #[test]
    fn simplify_preserves_values(e in expr(), x in point()) {
        prop_assert!(close(value(&e, &x), value(&simplify(&e), &x), 1e-9));
    }

    #[test]
    fn conjugation_is_an_involution(e in expr(), x in point()) {
        prop_assert_eq!(simplify(&e.conjugate().conjugate()), simplify(&e));
        prop_assert!(close(value(&e.conjugate(), &x), value(&e, &x).conj(), 1e-12));
    }

    #[test]
    fn printing_round_trips(e in expr()) {
        let s = simplify(&e);
        let back = parse(&format(&s), DIM).unwrap();
        prop_assert_eq!(simplify(&back), s);
    }

    #[test]
    fn jets_are_linear(f in expr(), g in expr(), x in point(), re in -2i64..=2, im in -2i64..=2) {
        let c = coeff(rational(re, 1), rational(im, 1));
        let lhs = eval_jet(&Expr::sum([f.scale(&c), g.clone()]), &x, 3).unwrap();
        let jf = eval_jet(&f, &x, 3).unwrap();
        let jg = eval_jet(&g, &x, 3).unwrap();
        let rhs = jf.scale(Complex64::new(re as f64, im as f64)).add(&jg);
        for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            prop_assert!(close(*a, *b, 1e-9));
        }
    }

    #[test]
    fn jet_product_rule(f in expr(), g in expr(), x in point(), k in 1..=DIM) {
        let jf = eval_jet(&f, &x, 2).unwrap();
        let jg = eval_jet(&g, &x, 2).unwrap();
        let d = jf.mul(&jg).partial(k).unwrap();
        let want = jf.partial(k).unwrap().mul(&jg.truncate(1)).add(&jf.truncate(1).mul(&jg.partial(k).unwrap()));
        for (a, b) in d.coeffs().iter().zip(want.coeffs()) {
            prop_assert!(close(*a, *b, 1e-9));
        }
    }

    #[test]
    fn tension_product_rule(f in expr(), g in expr(), x in point()) {
        // tau(fg) = f tau(g) + g tau(f) + 2 kappa(f,g)
        let ff = ComplexFunction::new(f.clone(), Domain::new(DIM)).unwrap();
        let gg = ComplexFunction::new(g.clone(), Domain::new(DIM)).unwrap();
        let fg = ComplexFunction::new(Expr::product([f.clone(), g.clone()]), Domain::new(DIM)).unwrap();
        let lhs = value(&tension(&fg).unwrap(), &x);
        let rhs = value(&f, &x) * value(&tension(&gg).unwrap(), &x)
            + value(&g, &x) * value(&tension(&ff).unwrap(), &x)
            + 2.0 * value(&kappa(&ff, &gg).unwrap(), &x);
        prop_assert!(close(lhs, rhs, 1e-8));
    }

    #[test]
    fn kappa_is_symmetric(f in expr(), g in expr(), x in point()) {
        let ff = ComplexFunction::new(f, Domain::new(DIM)).unwrap();
        let gg = ComplexFunction::new(g, Domain::new(DIM)).unwrap();
        prop_assert!(close(value(&kappa(&ff, &gg).unwrap(), &x), value(&kappa(&gg, &ff).unwrap(), &x), 1e-10));
    }

    #[test]
    fn symbolic_and_jet_bitension_agree(f in expr(), x in point()) {
        let ff = ComplexFunction::new(f.clone(), Domain::new(DIM)).unwrap();
        let sym = value(&iterate_tension(&ff, 2).unwrap(), &x);
        let num = laplacian_power(&eval_jet(&f, &x, 4).unwrap(), 2).unwrap();
        prop_assert!(close(sym, num, 1e-8), "{} vs {}", sym, num);
    }
}
