use pqmorph::catalog::{catalog_check, catalog_list, dual_agreement, Catalog, Certainty, DualAgreement, Match};
use pqmorph::expr::{coeff_int, simplify, Sampler, ZeroPolicy};
use pqmorph::morphism::CheckOptions;
use pqmorph::Error;

#[test]
fn list_is_deterministic_and_complete() {
    let ids = catalog_list().unwrap();
    assert_eq!(ids, catalog_list().unwrap());
    assert!(ids.len() >= 30, "{} entries", ids.len());
    for id in [
        "ex3.8", "ex4.2", "ex4.2.violating", "ex4.3", "ex4.3.dual", "ex4.4.dual", "ex4.5", "ex4.5.dual", "ex4.6.dual",
        "ex4.7.dual", "ex4.8.dual", "ex5.3", "ex6.4.dual", "ex7.6.dual", "tbl3.phi34", "tbl4.phi44.dual",
    ] {
        assert!(ids.iter().any(|i| i == id), "missing {id}");
    }
    for t in 1..=4 {
        let rows = if t <= 2 { 6 } else { 8 };
        assert_eq!(ids.iter().filter(|i| i.starts_with(&format!("tbl{t}."))).count(), rows, "table {t}");
    }
}

#[test]
fn unknown_rows_carry_no_expectation() {
    let cat = Catalog::load_default().unwrap();
    for e in cat.entries() {
        let unknown = ["tbl4.phi42.dual", "tbl4.phi43.dual", "tbl4.phi44.dual"].contains(&e.id.as_str());
        assert_eq!(e.certainty == Certainty::Unknown, unknown, "{}", e.id);
        assert_eq!(e.expected.is_none(), unknown, "{}", e.id);
    }
}

#[test]
fn constraints_decide_the_expected_verdict() {
    let cat = Catalog::load_default().unwrap();
    let mut seen = 0;
    for e in cat.entries() {
        let Some(c) = &e.constraint else { continue };
        seen += 1;
        let zero = simplify(c) == simplify(&pqmorph::Expr::constant(coeff_int(0)));
        assert_eq!(zero, e.expected.map(|o| o != pqmorph::catalog::Outcome::Fails).unwrap_or(true), "{}", e.id);
    }
    assert!(seen >= 4);
}

#[test]
fn every_entry_has_admissible_points() {
    let cat = Catalog::load_default().unwrap();
    for e in cat.entries() {
        let mut s = Sampler::new(&e.function.domain, 3);
        for _ in 0..5 {
            let x = s.sample().unwrap_or_else(|err| panic!("{}: {err}", e.id));
            pqmorph::jet::eval_jet(&e.function.expr, &x, 0).unwrap_or_else(|err| panic!("{}: {err}", e.id));
        }
    }
}

#[test]
fn duals_agree_with_dualize() {
    let cat = Catalog::load_default().unwrap();
    let mut n = 0;
    for e in cat.entries() {
        if let Some(a) = dual_agreement(&cat, e, &ZeroPolicy::default()).unwrap() {
            n += 1;
            assert_eq!(a, DualAgreement::Canonical, "{}", e.id);
        }
    }
    assert!(n >= 20);
}

#[test]
fn worked_examples_match() {
    for id in ["ex4.3", "ex4.8.dual", "tbl3.phi34", "ex4.2.violating", "ex4.6.dual"] {
        let r = catalog_check(id, &CheckOptions::default()).unwrap();
        assert_eq!(r.outcome, Match::Matches, "{id}: {}", r.found());
    }
    assert!(matches!(catalog_check("ex9.9", &CheckOptions::default()), Err(Error::UnknownId(_))));
}
