use nilrect::scenario::{validate_scales, Scenario};
use std::path::PathBuf;

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> (String, Scenario) {
    let text = std::fs::read_to_string(dir().join(name)).unwrap();
    let s = Scenario::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    (text, s)
}

#[test]
fn bundled_files_are_canonical() {
    let mut names: Vec<String> = std::fs::read_dir(dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".cfg"))
        .collect();
    names.sort();
    assert!(names.len() >= 8, "{names:?}");
    for n in &names {
        let (text, s) = load(n);
        assert_eq!(s.to_string(), text, "{n} is not in canonical form");
    }
}

#[test]
fn chain_scenario_validates() {
    let (_, s) = load("z1_chain.cfg");
    let rep = validate_scales(&s);
    assert!(rep.ok(), "{rep}");
    assert!(rep.symbolic_only.is_empty());
}

#[test]
fn torus_chain_fails_only_on_room() {
    let (_, s) = load("z1_z2.cfg");
    let rep = validate_scales(&s);
    let names: Vec<&str> = rep.failures().iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["level 1 14pA in working", "level 2 14pA in working"]);
}

#[test]
fn shrunken_domain_is_reported() {
    let (_, s) = load("bad_dom.cfg");
    let rep = validate_scales(&s);
    assert!(rep.failures().iter().any(|c| c.name == "level 1 3Z in dom"));
    assert!(rep.failures().iter().any(|c| c.name == "level 1 working in dom"));
}

#[test]
fn top_row_budget_comes_from_the_file() {
    let (_, s) = load("full_line.cfg");
    assert_eq!(s.b(0), 2);
    let (_, s) = load("z1_chain.cfg");
    assert_eq!(s.b(0), s.columns);
}
