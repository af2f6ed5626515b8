use pqmorph::cli::run;
use serde_json::Value;

fn pq(args: &[&str]) -> (i32, String) {
    run(std::iter::once("pqmorph").chain(args.iter().copied()))
}

#[test]
fn check_first_example_holds() {
    let (code, out) = pq(&["check", "--dim", "4", "--expr", "sqrt(abs2(1,3))+i*x4", "--guard", "abs2(1,3)>0", "--p", "2", "--q", "1"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("verdict: holds") && out.contains("(proper)"), "{out}");
}

#[test]
fn constancy_mode_fails_nonconstant() {
    let (code, out) = pq(&["check", "--dim", "2", "--expr", "x1+i*x2", "--p", "1", "--q", "2", "--json"]);
    assert_eq!(code, 1);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["constancy_mode"], true);
    assert_eq!(v["verdict"], "fails");
    assert_eq!(v["schema"], 1);
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(pq(&["check", "--dim", "2", "--expr", "x1+", "--p", "1"]).0, 2);
    assert_eq!(pq(&["check", "--dim", "2", "--expr", "x3", "--p", "1"]).0, 2);
    assert_eq!(pq(&["check", "--dim", "2", "--expr", "x1", "--p", "1", "--mode", "fast"]).0, 2);
    assert_eq!(pq(&["check", "--dim", "2", "--expr", "x1", "--p", "1", "--guard", "x1<0"]).0, 2);
    assert_eq!(pq(&["dual", "--entry", "no.such.entry"]).0, 2);
    assert_eq!(pq(&["dual", "--dim", "3", "--expr", "x1"]).0, 2);
    assert_eq!(pq(&["frobnicate"]).0, 2);
}

#[test]
fn json_is_reproducible() {
    let args = ["check", "--dim", "4", "--expr", "(x1+i*x2)/abs2(1,4)", "--guard", "abs2(1,4)>0", "--p", "2", "--mode", "numeric", "--seed", "11", "--json"];
    let a = pq(&args);
    assert_eq!(a, pq(&args));
    let other = pq(&args.map(|s| if s == "11" { "12" } else { s }));
    assert_ne!(a.1, other.1);
}

#[test]
fn conjecture_one_small_p() {
    let (code, out) = pq(&["conjecture", "one", "--p", "2", "--trials", "10", "--seed", "7", "--json"]);
    assert_eq!(code, 0, "{out}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["all_hold"], true);
    let (code, _) = pq(&["conjecture", "one", "--p", "1", "--trials", "3", "--draw", "generic"]);
    assert_eq!(code, 1);
}

#[test]
fn conjecture_two_harmonic_candidate() {
    let (code, out) = pq(&["conjecture", "two", "--candidate", "x1+i*x2", "--p", "2"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("tau(phi): 0"), "{out}");
}

#[test]
fn dual_of_holomorphic_entry() {
    let (code, out) = pq(&["dual", "--entry", "ex4.8", "--json"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let d = v["dual"].as_str().unwrap();
    assert!(d.contains("cos(x1") && !d.contains("x1^2"), "{d}");
}

#[test]
fn catalog_commands() {
    let (code, out) = pq(&["catalog", "list"]);
    assert_eq!(code, 0);
    assert!(out.lines().count() >= 30);
    let (code, out) = pq(&["catalog", "run", "ex4.3", "ex4.7.dual", "--json"]);
    assert_eq!(code, 0, "{out}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["mismatches"], 0);
    assert_eq!(pq(&["catalog", "run"]).0, 2);
}

#[test]
fn classify_grid() {
    let (code, out) = pq(&["classify", "--entry", "ex4.8", "--p", "3", "--q", "2", "--json"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["minimal_p"], 2);
    assert_eq!(v["proper"], true);
}

#[test]
fn identities_on_entry() {
    let (code, out) = pq(&["identities", "--entry", "ex4.6", "--samples", "5"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("max residual"));
}
