use nilrect::array::{build_free_array, generator_pairs, verify_eventual_agreement};
use nilrect::e0::{agreement_start, check_injective, check_thresholds, e0_encode, related_pairs};
use nilrect::group_catalog::Group;
use nilrect::rough::EqRel;
use nilrect::scenario::Scenario;
use nilrect::window::Window;
use proptest::prelude::*;
use std::path::PathBuf;

fn scenario(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::parse(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn line_chain_end_to_end() {
    let s = scenario("z1_chain.cfg");
    let levels = s.build_levels().unwrap();
    let n = levels[0].frame.len();
    let order = s.order(n);
    let st = build_free_array(levels, s.b(0), s.columns, &order);
    assert!(st.ok(), "{}", st.report());
    assert_eq!(st.columns.len(), s.columns);
    assert!(st.checks.iter().all(|c| c.pass));

    let rep = verify_eventual_agreement(&st, &generator_pairs(&st, None)).unwrap();
    assert!(rep.ok(), "{rep}");
    assert!(rep.max_row_failures <= 1);

    let rows = st.bottom_row();
    let code = e0_encode(&st.levels[0].frame.window, &rows, &order).unwrap();
    check_injective(&code).unwrap();
    let th = check_thresholds(&rows, &code, &related_pairs(&rows, 2000, 9));
    assert!(th.ok(), "{:?}", &th.bad[..th.bad.len().min(5)]);
    // Neighbours separated only by the first cut agree from column 2 on.
    let pair = (0..n - 1).find(|&x| agreement_start(&rows, x, x + 1) == Some(2));
    if let Some(x) = pair {
        assert_eq!(code.blocks[x][3..], code.blocks[x + 1][3..]);
    }
}

#[test]
fn arrays_are_reproducible() {
    let s = scenario("z1_chain.cfg");
    let run = || {
        let levels = s.build_levels().unwrap();
        let order = s.order(levels[0].frame.len());
        build_free_array(levels, s.b(0), 2, &order).report()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn block_codes_separate_points(n in 3u64..12, width in 1usize..5, cols in 0usize..3) {
        let w = Window::build(&Group::parse("Z^2").unwrap(), n).unwrap();
        let npts = w.len;
        // Vertical strips of the torus, widening per column.
        let rels: Vec<EqRel> = (0..cols)
            .map(|c| EqRel::from_labels(&(0..npts).map(|x| x / (n as usize * (width + c).min(n as usize))).collect::<Vec<_>>()))
            .collect();
        let rows: Vec<&EqRel> = rels.iter().collect();
        let order: Vec<usize> = (0..npts).collect();
        if let Ok(code) = e0_encode(&w, &rows, &order) {
            prop_assert!(check_injective(&code).is_ok());
            prop_assert_eq!(code.levels(), cols + 1);
        }
    }
}
