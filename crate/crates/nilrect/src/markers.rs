//! Greedy marker sets, bounded marker partitions and class selectors on
//! finite windows. Finite sets of group elements are given as quotient
//! elements of the window.

use crate::rough::EqRel;
use crate::window::{Window, WindowKind};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::HashSet;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MarkerError {
    #[error("F does not contain the identity")]
    MissingIdentity,
    #[error("F is not symmetric: the inverse of {0} is missing")]
    NotSymmetric(usize),
    #[error("F acts with a fixed point: g = {g} fixes x = {x}")]
    NotFree { x: usize, g: usize },
    #[error("separation fails: {g} carries marker {y} to marker {y2}")]
    Separation { y: usize, y2: usize, g: usize },
    #[error("coverage fails at {0}")]
    Coverage(usize),
    #[error("partition needs more than |F|+1 = {0} parts")]
    TooManyParts(usize),
    #[error("class {class} is not inside K·x for its member {x}")]
    Bound { class: u32, x: usize },
    #[error("selector law fails at {0}")]
    Selector(usize),
}

#[derive(Clone, Debug)]
pub struct MarkerSet {
    pub members: Vec<usize>,
    pub f: Vec<usize>,
    pub zone: Vec<bool>,
    pub order_hash: String,
}

/// Hex digest identifying a point enumeration order.
pub fn order_hash(order: &[usize]) -> String {
    let mut h = Sha256::new();
    for &x in order {
        h.update((x as u64).to_le_bytes());
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn index_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn check_f(w: &Window, f: &[usize]) -> Result<HashSet<usize>, MarkerError> {
    let set: HashSet<usize> = f.iter().copied().collect();
    if !set.contains(&w.quotient.identity()) {
        return Err(MarkerError::MissingIdentity);
    }
    if let Some(&g) = f.iter().find(|&&g| !set.contains(&w.quotient.inv(g))) {
        return Err(MarkerError::NotSymmetric(g));
    }
    Ok(set)
}

/// `F ∩ Stab(z) = {1}` for every `z` in the zone.
pub fn check_free(w: &Window, f: &[usize], zone: &[bool]) -> Result<(), MarkerError> {
    let id = w.quotient.identity();
    match &w.kind {
        // Left translation of a group on itself fixes nothing but by the identity.
        WindowKind::Regular => Ok(()),
        WindowKind::Coset { .. } => {
            let bad = (0..w.len).into_par_iter().filter(|&z| zone[z]).find_map_first(|z| {
                f.iter().find(|&&g| g != id && w.act_q(g, z) == z).map(|&g| MarkerError::NotFree { x: z, g })
            });
            bad.map_or(Ok(()), Err)
        }
    }
}

/// One greedy pass: admit `z` iff it is not yet in `F·Y`.
pub fn build_marker_set(w: &Window, f: &[usize], zone: &[bool], order: &[usize]) -> Result<MarkerSet, MarkerError> {
    check_f(w, f)?;
    check_free(w, f, zone)?;
    let mut covered = vec![false; w.len];
    let mut members = Vec::new();
    for &z in order {
        if zone[z] && !covered[z] {
            members.push(z);
            for &g in f {
                covered[w.act_q(g, z)] = true;
            }
        }
    }
    Ok(MarkerSet { members, f: f.to_vec(), zone: zone.to_vec(), order_hash: order_hash(order) })
}

/// Exhaustive check of separation and coverage.
pub fn verify_marker_set(w: &Window, m: &MarkerSet) -> Result<(), MarkerError> {
    let id = w.quotient.identity();
    let mut is_member = vec![false; w.len];
    for &y in &m.members {
        is_member[y] = true;
    }
    let sep = m.members.par_iter().find_map_first(|&y| {
        m.f.iter().filter(|&&g| g != id).find_map(|&g| {
            let y2 = w.act_q(g, y);
            is_member[y2].then_some(MarkerError::Separation { y, y2, g })
        })
    });
    if let Some(e) = sep {
        return Err(e);
    }
    let mut covered = vec![false; w.len];
    for &y in &m.members {
        for &g in &m.f {
            covered[w.act_q(g, y)] = true;
        }
    }
    match (0..w.len).find(|&z| m.zone[z] && !covered[z]) {
        Some(z) => Err(MarkerError::Coverage(z)),
        None => Ok(()),
    }
}

/// Repeated marker extraction on what remains of `y`; at most `|F|+1` parts.
pub fn partition_marker(w: &Window, f: &[usize], y: &[bool], order: &[usize]) -> Result<Vec<Vec<usize>>, MarkerError> {
    let limit = f.len() + 1;
    let mut rest = y.to_vec();
    let mut parts = Vec::new();
    while rest.iter().any(|&b| b) {
        if parts.len() == limit {
            return Err(MarkerError::TooManyParts(limit));
        }
        let m = build_marker_set(w, f, &rest, order)?;
        for &p in &m.members {
            rest[p] = false;
        }
        parts.push(m.members);
    }
    Ok(parts)
}

/// `S(x)` = the class member earliest in `order`, after checking `[x]_E ⊆ K·x`.
pub fn build_selector(w: &Window, e: &EqRel, k: &[usize], order: &[usize]) -> Result<Vec<usize>, MarkerError> {
    let classes = e.classes();
    let kset: HashSet<usize> = k.iter().copied().collect();
    let bad = classes.par_iter().enumerate().find_map_first(|(c, members)| {
        members.iter().find_map(|&x| {
            let inside = match &w.kind {
                WindowKind::Regular => {
                    let xi = w.quotient.inv(x);
                    members.iter().all(|&y| kset.contains(&w.quotient.mul(y, xi)))
                }
                WindowKind::Coset { .. } => {
                    let reach: HashSet<usize> = k.iter().map(|&g| w.act_q(g, x)).collect();
                    members.iter().all(|y| reach.contains(y))
                }
            };
            (!inside).then_some(MarkerError::Bound { class: c as u32, x })
        })
    });
    if let Some(err) = bad {
        return Err(err);
    }
    let mut rank = vec![usize::MAX; w.len];
    for (r, &x) in order.iter().enumerate() {
        rank[x] = r;
    }
    let reps: Vec<usize> = classes
        .iter()
        .map(|m| *m.iter().min_by_key(|&&x| (rank[x], x)).expect("nonempty class"))
        .collect();
    Ok((0..w.len).map(|x| reps[e.class[x] as usize]).collect())
}

/// `x E S(x)`, `x E y ⇔ S(x) = S(y)`, and `S∘S = S`.
pub fn verify_selector(e: &EqRel, s: &[usize]) -> Result<(), MarkerError> {
    let mut rep_of_class = vec![usize::MAX; e.num_classes()];
    for x in 0..s.len() {
        let c = e.class[x] as usize;
        if e.class[s[x]] != e.class[x] || s[s[x]] != s[x] {
            return Err(MarkerError::Selector(x));
        }
        if rep_of_class[c] == usize::MAX {
            rep_of_class[c] = s[x];
        } else if rep_of_class[c] != s[x] {
            return Err(MarkerError::Selector(x));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_catalog::{Elem, Group};
    use proptest::prelude::*;

    fn cyc(n: u64) -> Window {
        Window::build(&Group::parse("Z").unwrap(), n).unwrap()
    }

    fn interval(w: &Window, r: i64) -> Vec<usize> {
        (-r..=r).map(|k| w.quotient.reduce(&Elem::from_i64(&[k]))).collect()
    }

    #[test]
    fn trivial_f_keeps_everything() {
        let w = cyc(30);
        let m = build_marker_set(&w, &[0], &vec![true; 30], &index_order(30)).unwrap();
        assert_eq!(m.members, index_order(30));
    }

    #[test]
    fn cycle_markers_have_bounded_gaps() {
        let w = cyc(100);
        let f = interval(&w, 2);
        let m = build_marker_set(&w, &f, &vec![true; 100], &index_order(100)).unwrap();
        verify_marker_set(&w, &m).unwrap();
        assert!((20..=33).contains(&m.members.len()));
        let n = m.members.len();
        for j in 0..n {
            let gap = (m.members[(j + 1) % n] + 100 - m.members[j]) % 100;
            assert!((3..=5).contains(&gap), "gap {gap}");
        }
    }

    #[test]
    fn torus_markers_brute_force() {
        let g = Group::parse("Z^2").unwrap();
        let w = Window::build(&g, 20).unwrap();
        let mut f = Vec::new();
        for a in -1..=1 {
            for b in -1..=1 {
                f.push(w.quotient.reduce(&Elem::from_i64(&[a, b])));
            }
        }
        let m = build_marker_set(&w, &f, &vec![true; 400], &index_order(400)).unwrap();
        for &y in &m.members {
            for &y2 in &m.members {
                if y != y2 {
                    assert!(f.iter().all(|&g| w.act_q(g, y) != y2));
                }
            }
        }
        for z in 0..400 {
            assert!(m.members.iter().any(|&y| f.iter().any(|&g| w.act_q(g, y) == z)));
        }
    }

    #[test]
    fn partition_of_twelve_cycle() {
        let w = cyc(12);
        let f = interval(&w, 1);
        let parts = partition_marker(&w, &f, &vec![true; 12], &index_order(12)).unwrap();
        assert!(parts.len() <= 4);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, index_order(12));
        for p in &parts {
            for &a in p {
                for &b in p {
                    assert!(a == b || (a + 12 - b) % 12 >= 2 && (b + 12 - a) % 12 >= 2);
                }
            }
        }
        assert_eq!(partition_marker(&w, &[0], &vec![true; 12], &index_order(12)).unwrap().len(), 1);
    }

    #[test]
    fn non_symmetric_f_is_refused() {
        let w = cyc(10);
        assert_eq!(build_marker_set(&w, &[0, 1], &vec![true; 10], &index_order(10)).unwrap_err(), MarkerError::NotSymmetric(1));
        assert_eq!(build_marker_set(&w, &[1, 9], &vec![true; 10], &index_order(10)).unwrap_err(), MarkerError::MissingIdentity);
    }

    #[test]
    fn coset_fixed_point_is_named() {
        let g = Group::parse("Z^2").unwrap();
        let h = crate::group_catalog::Subgroup::new(vec![Elem::from_i64(&[1, 0])]);
        let w = Window::build_coset(&g, &h, 6, 100).unwrap();
        let e = w.quotient.reduce(&Elem::from_i64(&[1, 0]));
        let f = vec![0, e, w.quotient.inv(e)];
        assert!(matches!(build_marker_set(&w, &f, &vec![true; w.len], &index_order(w.len)), Err(MarkerError::NotFree { .. })));
    }

    #[test]
    fn selectors() {
        let w = cyc(100);
        let eq = EqRel::equality(100);
        let s = build_selector(&w, &eq, &[0], &index_order(100)).unwrap();
        assert_eq!(s, index_order(100));
        let blocks = EqRel::from_labels(&(0..100).map(|x| x / 10).collect::<Vec<_>>());
        let k = interval(&w, 9);
        let s = build_selector(&w, &blocks, &k, &index_order(100)).unwrap();
        verify_selector(&blocks, &s).unwrap();
        assert!((0..100).all(|x| s[x] == x / 10 * 10 && s[s[x]] == s[x]));
        let small = interval(&w, 8);
        assert!(matches!(build_selector(&w, &blocks, &small, &index_order(100)), Err(MarkerError::Bound { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn partition_count_bounded(n in 5u64..60, r in 0i64..4, seed in 0u64..1000) {
            let w = cyc(n);
            let f: Vec<usize> = {
                let mut v = interval(&w, r);
                v.sort_unstable();
                v.dedup();
                v
            };
            let mut order = index_order(n as usize);
            let mut s = seed;
            for i in (1..order.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let parts = partition_marker(&w, &f, &vec![true; n as usize], &order).unwrap();
            prop_assert!(parts.len() <= f.len() + 1);
        }
    }
}
