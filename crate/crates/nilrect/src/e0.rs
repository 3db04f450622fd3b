//! Coding of the bottom row of an array as binary words, so that eventual
//! agreement of the row becomes eventual agreement of words.

use crate::array::class_offsets;
use crate::markers::build_selector;
use crate::rough::EqRel;
use crate::window::{Window, WindowKind};
use rand::{Rng, SeedableRng};
use std::collections::{HashMap, HashSet};

#[derive(Debug, thiserror::Error)]
pub enum E0Error {
    #[error("coding needs a regular window")]
    NotRegular,
    #[error("level {level}: {msg}")]
    Selector { level: usize, msg: String },
    #[error("level {level}: point {x} has no factor in K_n K_(n-1)")]
    Factor { level: usize, x: usize },
}

/// Fixed-width blocks per point; block `n` ranks `(S_n(x), g_n(x))`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct E0Code {
    /// Bits per block.
    pub width: u32,
    /// `|K_n|` per level, level 0 first.
    pub k_sizes: Vec<usize>,
    pub blocks: Vec<Vec<u64>>,
}

impl E0Code {
    pub fn levels(&self) -> usize {
        self.k_sizes.len()
    }

    /// The concatenated word of `x`.
    pub fn word(&self, x: usize) -> String {
        self.blocks[x].iter().map(|b| format!("{:0w$b}", b, w = self.width as usize)).collect()
    }

    pub fn dump(&self) -> String {
        let mut s = format!("width {} levels {}\n", self.width, self.levels());
        for x in 0..self.blocks.len() {
            let hex: Vec<String> = self.blocks[x].iter().map(|b| format!("{b:x}")).collect();
            s.push_str(&format!("{x} {}\n", hex.join(" ")));
        }
        s
    }
}

fn bits(n: u128) -> u32 {
    (128 - n.saturating_sub(1).leading_zeros()).max(1)
}

/// Codes every point from a bottom row `E_{1,1}, …, E_{1,C}`, preceded by
/// equality at level 0.
pub fn e0_encode(w: &Window, rows: &[&EqRel], order: &[usize]) -> Result<E0Code, E0Error> {
    if !matches!(w.kind, WindowKind::Regular) {
        return Err(E0Error::NotRegular);
    }
    let q = &w.quotient;
    let npts = w.len;
    let qsize = q.size as u64;
    let width = bits(npts as u128 * qsize as u128);

    let mut k_prev: HashSet<usize> = HashSet::from([q.identity()]);
    let mut s_prev: Vec<usize> = (0..npts).collect();
    let mut k_sizes = vec![1];
    let mut blocks: Vec<Vec<u64>> = (0..npts).map(|x| vec![x as u64 * qsize + q.identity() as u64]).collect();
    for (n, &e) in rows.iter().enumerate().map(|(i, e)| (i + 1, e)) {
        let mut k_cur = k_prev.clone();
        k_cur.extend(class_offsets(w, e));
        let mut kv: Vec<usize> = k_cur.iter().copied().collect();
        kv.sort_unstable();
        let s = build_selector(w, e, &kv, order).map_err(|err| E0Error::Selector { level: n, msg: err.to_string() })?;
        for x in 0..npts {
            let xi = q.inv(x);
            let a = q.mul(s[x], xi);
            let b = q.mul(s_prev[x], xi);
            if !k_cur.contains(&a) || !k_prev.contains(&b) {
                return Err(E0Error::Factor { level: n, x });
            }
            let g = q.mul(s[x], q.inv(s_prev[x]));
            blocks[x].push(s[x] as u64 * qsize + g as u64);
        }
        k_sizes.push(k_cur.len());
        k_prev = k_cur;
        s_prev = s;
    }
    Ok(E0Code { width, k_sizes, blocks })
}

/// Distinct points get distinct codes; otherwise a colliding pair.
pub fn check_injective(code: &E0Code) -> Result<(), (usize, usize)> {
    let mut seen: HashMap<&[u64], usize> = HashMap::with_capacity(code.blocks.len());
    for (x, b) in code.blocks.iter().enumerate() {
        if let Some(&y) = seen.get(b.as_slice()) {
            return Err((y, x));
        }
        seen.insert(b.as_slice(), x);
    }
    Ok(())
}

/// Least `m ≥ 1` with `x E_{1,n} y` for every column `n ≥ m`.
pub fn agreement_start(rows: &[&EqRel], x: usize, y: usize) -> Option<usize> {
    if !rows.last()?.same(x, y) {
        return None;
    }
    let mut m = rows.len();
    while m > 1 && rows[m - 2].same(x, y) {
        m -= 1;
    }
    Some(m)
}

#[derive(Clone, Debug, Default)]
pub struct ThresholdReport {
    pub pairs: usize,
    /// `(x, y, threshold, first differing block)` for pairs that disagree past it.
    pub bad: Vec<(usize, usize, usize, usize)>,
    pub threshold_histogram: Vec<usize>,
}

impl ThresholdReport {
    pub fn ok(&self) -> bool {
        self.bad.is_empty()
    }
}

/// For related pairs agreeing from column `m`, blocks past `m` must coincide
/// (block `m` itself still carries `g_m`, which sees column `m − 1`).
pub fn check_thresholds(rows: &[&EqRel], code: &E0Code, pairs: &[(usize, usize)]) -> ThresholdReport {
    let mut rep = ThresholdReport { threshold_histogram: vec![0; code.levels() + 1], ..Default::default() };
    for &(x, y) in pairs {
        let Some(m) = agreement_start(rows, x, y) else { continue };
        rep.pairs += 1;
        let t = m + 1;
        rep.threshold_histogram[t.min(code.levels())] += 1;
        if let Some(b) = (t..code.levels()).find(|&b| code.blocks[x][b] != code.blocks[y][b]) {
            rep.bad.push((x, y, t, b));
        }
    }
    rep
}

/// Seeded pairs related by the last bottom-row relation.
pub fn related_pairs(rows: &[&EqRel], count: usize, seed: u64) -> Vec<(usize, usize)> {
    let Some(last) = rows.last() else { return Vec::new() };
    let classes = last.classes();
    let n = last.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = rng.gen_range(0..n);
            let c = &classes[last.class[x] as usize];
            (x, c[rng.gen_range(0..c.len())])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{build_free_array, ArrayState, Level};
    use crate::charts::build_abelian_chart;
    use crate::frame::{rect_from, Frame};
    use crate::group_catalog::{Elem, Group};
    use crate::ortho::OrthoParams;
    use crate::rect_algebra::{rat, Rect};
    use crate::rough::Regime;
    use crate::window::Window;
    use num_bigint::BigInt;
    use std::sync::Arc;

    fn chain(n: u64, work: i64, cols: usize) -> ArrayState {
        let g = Group::parse("Z").unwrap();
        let w = Arc::new(Window::build(&g, n).unwrap());
        let c = build_abelian_chart(&g, &[BigInt::from(1)], &rat(100000, 1)).unwrap();
        let f = Frame::new(w, &c, None, &rect_from(&[0], &[work], &[]), 1 << 24).unwrap();
        let prm = OrthoParams {
            a: Rect::rec_i64(&[32]),
            eps: rat(4, 5),
            q: rat(1, 32),
            b: 1,
            p: 16,
            guard2: 2,
            guard3: 64,
            regime: Regime::Relaxed,
        };
        let gens = vec![f.window.quotient.reduce(&Elem::from_i64(&[1]))];
        build_free_array(vec![Level::new(f, prm, gens, 2)], cols, cols, &(0..n as usize).collect::<Vec<_>>())
    }

    #[test]
    fn width_counts_bits() {
        assert_eq!(bits(1), 1);
        assert_eq!(bits(2), 1);
        assert_eq!(bits(3), 2);
        assert_eq!(bits(1 << 20), 20);
        assert_eq!(bits((1 << 20) + 1), 21);
    }

    #[test]
    fn codes_are_injective_and_stabilize() {
        let st = chain(20000, 7200, 2);
        assert!(st.ok(), "{}", st.report());
        let order: Vec<usize> = (0..20000).collect();
        let rows = st.bottom_row();
        let code = e0_encode(&st.levels[0].frame.window, &rows, &order).unwrap();
        assert_eq!(code.levels(), 3);
        check_injective(&code).unwrap();
        let rep = check_thresholds(&rows, &code, &related_pairs(&rows, 500, 3));
        assert!(rep.ok(), "{:?}", rep.bad);
        assert_eq!(rep.pairs, 500);
        // Same classes at every level means identical codes past block 0.
        let x = (0..20000).find(|&x| agreement_start(&rows, x, x + 1) == Some(1)).unwrap();
        assert_eq!(code.blocks[x][2..], code.blocks[x + 1][2..]);
        assert_eq!(code.word(x).len(), 3 * code.width as usize);
    }

    #[test]
    fn equality_alone_is_injective() {
        let w = Window::build(&Group::parse("Z^2").unwrap(), 7).unwrap();
        let code = e0_encode(&w, &[], &(0..49).collect::<Vec<_>>()).unwrap();
        assert_eq!(code.levels(), 1);
        check_injective(&code).unwrap();
    }
}
