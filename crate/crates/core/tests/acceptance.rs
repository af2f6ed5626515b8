//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines reach stdout.
//!
//! `PQMORPH_LONG=1` adds the p = 4 probe to criterion 6.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pqmorph::calculus::identities::{identity_suite, Backends, SuiteOptions};
use pqmorph::calculus::{iterate_tension, iterate_tension_with, kappa, tension, ComplexFunction};
use pqmorph::catalog::{check_entry, dual_agreement, Catalog, CatalogResult, Certainty, DualAgreement, Match};
use pqmorph::construct::{punctured, radial_family, InversionMap};
use pqmorph::expr::{coeff, rational, simplify, Domain, Expr, Sampler, ZeroPolicy};
use pqmorph::jet::{eval_jet, laplacian_power_scaled};
use pqmorph::morphism::conjecture::{conjecture_one, Draw};
use pqmorph::morphism::{check_morphism, condition_system, CheckOptions, Mode, Verdict};

/// Criteria whose literal statement is known not to hold; they are reported
/// but do not fail the run.
const KNOWN_FAILING: &[u32] = &[6];

struct Line {
    n: u32,
    pass: bool,
    detail: String,
}

fn report(lines: &mut Vec<Line>, n: u32, pass: bool, detail: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n} {}  {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = out.flush();
    lines.push(Line { n, pass, detail });
}

fn main() {
    // `cargo test -- --list` and similar probes pass flags; nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut lines = Vec::new();
    let catalog = Catalog::load_default().expect("catalog loads");

    let results = criterion_1(&catalog, &mut lines);
    criterion_2(&mut lines);
    criterion_3(&catalog, &mut lines);
    criterion_4(&mut lines);
    criterion_5(&mut lines);
    criterion_6(&mut lines);
    criterion_7(&catalog, &results, &mut lines);
    criterion_8(&catalog, &mut lines);

    let gating: Vec<&Line> = lines.iter().filter(|l| !l.pass && !KNOWN_FAILING.contains(&l.n)).collect();
    if !gating.is_empty() {
        for l in gating {
            eprintln!("unexpected failure: criterion {}: {}", l.n, l.detail);
        }
        std::process::exit(1);
    }
}

/// Every entry with a stated label matches at default tolerances, in under ten minutes.
fn criterion_1(catalog: &Catalog, lines: &mut Vec<Line>) -> Vec<CatalogResult> {
    let t = Instant::now();
    let opts = CheckOptions::default();
    let stated: Vec<_> = catalog.entries().iter().filter(|e| e.certainty == Certainty::Stated).collect();
    let results: Vec<(CatalogResult, Option<DualAgreement>)> = stated
        .par_iter()
        .map(|e| {
            let r = check_entry(e, &opts).unwrap_or_else(|err| panic!("{}: {err}", e.id));
            let d = dual_agreement(catalog, e, &opts.policy).expect("dual agreement");
            (r, d)
        })
        .collect();
    let secs = t.elapsed().as_secs_f64();
    let bad: Vec<String> =
        results.iter().filter(|(r, _)| r.outcome != Match::Matches).map(|(r, _)| format!("{} ({})", r.id, r.found())).collect();
    let dual_bad: Vec<&str> = results
        .iter()
        .filter(|(_, d)| matches!(d, Some(DualAgreement::Differs(_))))
        .map(|(r, _)| r.id.as_str())
        .collect();
    let sampled = results.iter().filter(|(r, _)| r.report.fallback.is_some()).count();
    let pass = bad.is_empty() && dual_bad.is_empty() && secs < 600.0;
    let mut detail = format!(
        "catalog reproduction: {}/{} stated entries match ({sampled} settled by sampling after the symbolic budget), {:.0}s",
        results.len() - bad.len(),
        results.len(),
        secs
    );
    if !bad.is_empty() {
        detail += &format!("; mismatches: {}", bad.join(", "));
    }
    if !dual_bad.is_empty() {
        detail += &format!("; duals differing from dualize: {}", dual_bad.join(", "));
    }
    report(lines, 1, pass, detail);
    results.into_iter().map(|(r, _)| r).collect()
}

/// The general rule reproduces the printed condition lists.
fn criterion_2(lines: &mut Vec<Line>) {
    let printed: [((u32, u32), &[(u32, u32)]); 6] = [
        ((1, 1), &[(1, 0)]),
        ((2, 1), &[(1, 0), (2, 0)]),
        ((2, 2), &[(1, 0), (2, 0), (1, 1), (2, 1)]),
        ((3, 1), &[(1, 0), (2, 0), (3, 0)]),
        ((3, 2), &[(1, 0), (2, 0), (3, 0), (1, 1), (2, 1), (3, 1)]),
        ((3, 3), &[(1, 0), (2, 0), (3, 0), (1, 1), (2, 1), (3, 1), (2, 2), (3, 2)]),
    ];
    let mut bad = Vec::new();
    for ((p, q), want) in printed {
        let s = condition_system(p, q).unwrap();
        if s.monomials != want || !s.includes_conformality || s.constancy_mode {
            bad.push(format!("({p},{q})"));
        }
    }
    report(lines, 2, bad.is_empty(), format!("condition systems for 6 reference lists; mismatched: [{}]", bad.join(", ")));
}

/// Every identity on three catalog functions at 20 points each.
fn criterion_3(catalog: &Catalog, lines: &mut Vec<Line>) {
    let ids = ["ex3.8", "ex4.3", "ex4.6"];
    let opts = SuiteOptions { policy: ZeroPolicy { samples: 20, tol: Some(1e-8), ..ZeroPolicy::default() }, backends: Backends::Both };
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut count = 0;
    for id in ids {
        let r = identity_suite(&catalog.get(id).unwrap().function, &opts).unwrap();
        count = r.checks.len();
        if r.checks.len() != 16 || !r.skipped.is_empty() {
            bad.push(format!("{id}: {} identities, skipped {:?}", r.checks.len(), r.skipped));
        }
        for c in &r.checks {
            let numeric = c.numeric.as_ref().map(|s| s.residual()).unwrap_or(f64::INFINITY);
            worst = worst.max(numeric);
            if !c.status.is_zero() || numeric > 1e-8 {
                bad.push(format!("{id}/{}", c.name));
            }
        }
    }
    report(
        lines,
        3,
        bad.is_empty(),
        format!("identity suite: {count} identities x {} functions x 20 points, max scaled residual {worst:.1e}; failing: [{}]", ids.len(), bad.join(", ")),
    );
}

/// Inversion ladder, conformality of the inversion and the radial closed form.
fn criterion_4(lines: &mut Vec<Line>) {
    let mut bad = Vec::new();
    for p in 1..=3usize {
        let inv = InversionMap::new(p);
        let dim = inv.dim() as u32;
        for (j, f) in inv.functions().iter().enumerate() {
            for k in 1..=p {
                let got = iterate_tension(f, k).unwrap();
                let want = simplify(&Expr::product([
                    Expr::int(inv.ladder_factor(k)),
                    Expr::pow(&Expr::abs2(1, dim), &rational(-(k as i64), 1)),
                    f.expr.clone(),
                ]));
                if got != want {
                    bad.push(format!("tau^{k}(F{}) on R^{dim}", j + 1));
                }
            }
        }
    }
    // p = 4 numerically on the first component.
    let inv = InversionMap::new(4);
    let f = &inv.functions()[0];
    let mut worst = 0.0f64;
    let mut sampler = Sampler::new(&f.domain, 4);
    for _ in 0..20 {
        let x = sampler.sample().unwrap();
        let jet = eval_jet(&f.expr, &x, 8).unwrap();
        let r2: f64 = x.iter().map(|v| v * v).sum();
        for k in 1..=4 {
            let got = laplacian_power_scaled(&jet, k).unwrap();
            let want = inv.ladder_factor(k) as f64 / r2.powi(k as i32) * x[0] / r2;
            let res = (got.value - Complex64::new(want, 0.0)).norm() / got.scale.max(want.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max(res);
        }
    }
    if worst > 1e-8 {
        bad.push(format!("p=4 numeric residual {worst:.1e}"));
    }
    let fs = InversionMap::new(2).functions();
    for (j, a) in fs.iter().enumerate() {
        for (k, b) in fs.iter().enumerate() {
            let want = if j == k { simplify(&Expr::pow(&Expr::abs2(1, 4), &rational(-2, 1))) } else { Expr::zero() };
            if kappa(a, b).unwrap() != want {
                bad.push(format!("kappa(F{},F{})", j + 1, k + 1));
            }
        }
    }
    for (n, dim) in [(1u32, 3usize), (2, 4), (3, 6), (4, 8)] {
        let c = n as i64 * (n as i64 - dim as i64);
        for phi in radial_family(n, dim).unwrap() {
            let want = simplify(&Expr::product([Expr::int(c), phi.expr.clone(), Expr::pow(&Expr::abs2(1, dim as u32), &rational(-1, 1))]));
            if tension(&phi).unwrap() != want {
                bad.push(format!("radial n={n} on R^{dim}"));
                break;
            }
        }
    }
    report(
        lines,
        4,
        bad.is_empty(),
        format!("inversion ladder p<=3 exact, p=4 max residual {worst:.1e}; kappa(F_j,F_k) exact on R^4; radial family exact for 4 cases; failing: [{}]", bad.join(", ")),
    );
}

fn random_poly(rng: &mut ChaCha8Rng, m: usize, degree: u32, terms: usize) -> Expr {
    let mut out = Vec::new();
    for _ in 0..terms {
        let c = coeff(rational(rng.gen_range(-3..=3), 1), rational(rng.gen_range(-3..=3), 1));
        let mut factors = vec![Expr::constant(c)];
        let d = rng.gen_range(0..=degree);
        for _ in 0..d {
            factors.push(Expr::var(rng.gen_range(1..=m as u32)));
        }
        out.push(Expr::product(factors));
    }
    Expr::sum(out)
}

/// Symbolic iterated tension against the jet Laplacian power.
fn criterion_5(lines: &mut Vec<Line>) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    for t in 0..50 {
        let m = 1 + t % 4;
        let p = 1 + t % 3;
        let num = random_poly(&mut rng, m, 4, 4);
        // 1 + sum c_k x_k^2 stays positive.
        let den = Expr::sum(
            std::iter::once(Expr::one())
                .chain((1..=m as u32).map(|k| Expr::product([Expr::int(rng.gen_range(1..=3)), Expr::var(k).powi(2)]))),
        );
        let f = ComplexFunction::new(Expr::product([num, den.recip()]), Domain::new(m)).unwrap();
        let sym = iterate_tension_with(&f, p, 200_000_000).unwrap();
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = eval_jet(&sym, &x, 0).unwrap().value();
        let n = laplacian_power_scaled(&eval_jet(&f.expr, &x, 2 * p).unwrap(), p).unwrap();
        let rel = (s - n.value).norm() / s.norm().max(n.value.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        if rel > 1e-9 {
            bad.push(format!("#{t} (m={m}, p={p}, rel {rel:.1e})"));
        }
    }
    report(lines, 5, bad.is_empty(), format!("oracle equivalence: 50 random rational functions, max relative error {worst:.1e}; failing: [{}]", bad.join(", ")));
}

/// The (p,p) system for combinations of inverted coordinates. As printed the
/// statement covers every a; generic draws are checked, and the null cone
/// (where conformality holds) is reported alongside.
fn criterion_6(lines: &mut Vec<Line>) {
    let long = std::env::var_os("PQMORPH_LONG").is_some();
    let mut ps: Vec<(u32, f64)> = vec![(1, 1e-8), (2, 1e-8), (3, 1e-8)];
    if long {
        ps.push((4, 1e-6));
    }
    let mut parts = Vec::new();
    let mut pass = true;
    for (p, tol) in ps {
        let opts = CheckOptions { mode: Mode::NumericOnly, policy: ZeroPolicy { samples: 20, tol: Some(tol), seed: 6, ..ZeroPolicy::default() } };
        let generic = conjecture_one(p, 10, Draw::Generic, 6, &opts).unwrap();
        let cone = conjecture_one(p, 10, Draw::NullCone, 6, &opts).unwrap();
        let monomial_max = generic
            .trials
            .iter()
            .flat_map(|t| t.report.conditions.iter().map(|c| c.status.residual()))
            .fold(0.0, f64::max);
        let held = generic.trials.iter().filter(|t| t.report.holds()).count();
        pass &= held == generic.trials.len();
        parts.push(format!(
            "p={p}: generic {held}/10 hold (monomial conditions max {monomial_max:.1e}, kappa(z,z) nonzero), null cone {}/10 hold",
            cone.trials.iter().filter(|t| t.report.holds()).count()
        ));
    }
    if !long {
        parts.push("p=4 skipped (set PQMORPH_LONG=1)".into());
    }
    report(lines, 6, pass, format!("inversion combinations: {}", parts.join("; ")));
}

/// Holding at (p,q) implies holding at (p+1,q) and (p,q-1).
fn criterion_7(catalog: &Catalog, results: &[CatalogResult], lines: &mut Vec<Line>) {
    let t = Instant::now();
    let mut jobs = Vec::new();
    for r in results.iter().filter(|r| r.report.holds()) {
        let e = catalog.get(&r.id).unwrap();
        jobs.push((e, r.report.p + 1, r.report.q));
        if r.report.q > 1 {
            jobs.push((e, r.report.p, r.report.q - 1));
        }
    }
    let out: Vec<(String, Verdict)> = jobs
        .par_iter()
        .map(|(e, p, q)| {
            // Order 2p >= 8 jets are cheap; normal forms at that order are not.
            let mode = if 2 * p >= 8 { Mode::NumericOnly } else { Mode::SymbolicFirst };
            let opts = CheckOptions { mode, policy: ZeroPolicy::default() };
            let r = check_morphism(&e.function, *p, *q, &opts).unwrap_or_else(|err| panic!("{}: {err}", e.id));
            (format!("{} at ({p},{q})", e.id), r.verdict)
        })
        .collect();
    let bad: Vec<String> = out.iter().filter(|(_, v)| !v.holds()).map(|(s, v)| format!("{s}: {v}")).collect();
    report(
        lines,
        7,
        bad.is_empty(),
        format!("monotonicity: {} neighbouring cells of {} holding entries checked, {:.0}s; violations: [{}]", out.len(), results.iter().filter(|r| r.report.holds()).count(), t.elapsed().as_secs_f64(), bad.join(", ")),
    );
}

/// p < q forces constancy.
fn criterion_8(catalog: &Catalog, lines: &mut Vec<Line>) {
    let cells = [(1u32, 2u32), (1, 3), (2, 3)];
    let mut bad = BTreeSet::new();
    let opts = CheckOptions::default();
    let mut nonconstant = 0;
    for id in ["ex3.8", "ex4.3", "ex4.6", "ex4.8.dual", "tbl1.phi11", "ex4.5"] {
        nonconstant += 1;
        let f = &catalog.get(id).unwrap().function;
        for (p, q) in cells {
            let r = check_morphism(f, p, q, &opts).unwrap();
            if !matches!(r.verdict, Verdict::Fails(_)) || !r.constancy_mode {
                bad.insert(format!("{id} at ({p},{q})"));
            }
        }
    }
    let constants = ["0", "3 - 2*i", "1/7"];
    for (n, c) in constants.iter().enumerate() {
        let f = ComplexFunction::new(pqmorph::parse::parse(c, 2 + n).unwrap(), punctured(2 + n)).unwrap();
        for p in 1..=3 {
            for q in 1..=3 {
                if check_morphism(&f, p, q, &opts).unwrap().verdict != Verdict::Holds {
                    bad.insert(format!("constant {c} at ({p},{q})"));
                }
            }
        }
    }
    report(
        lines,
        8,
        bad.is_empty(),
        format!("degeneracy: {nonconstant} nonconstant functions x 3 cells with p<q, {} constants x 9 cells; failing: [{}]", constants.len(), bad.into_iter().collect::<Vec<_>>().join(", ")),
    );
}
