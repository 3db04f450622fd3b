//! The column-by-column diagonalization array over a chain of subgroups
//! acting freely on a regular window, with independent clause checks.

use crate::frame::{Frame, FrameError};
use crate::markers::{build_selector, MarkerError};
use crate::ortho::{build_orthogonal_relation, is_orthogonal, OrthoError, OrthoParams};
use crate::rough::{saturated, verify_rectangular, EqRel};
use crate::window::Window;
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};
use std::fmt;

/// One rung of the chain: its frame, constants and orbit labels.
#[derive(Clone, Debug)]
pub struct Level {
    pub frame: Frame,
    pub prm: OrthoParams,
    /// Quotient elements of the generators `U_k`.
    pub gens: Vec<usize>,
    /// `G_k`-orbit id per point.
    pub orbit: Vec<u32>,
    /// Slack handed to `verify_rectangular` for witness domains.
    pub rect_bound: u64,
}

impl Level {
    pub fn new(frame: Frame, prm: OrthoParams, gens: Vec<usize>, rect_bound: u64) -> Level {
        let orbit = orbit_labels(&frame, &gens);
        Level { frame, prm, gens, orbit, rect_bound }
    }

    pub fn ell(&self) -> usize {
        self.frame.ell
    }
}

/// Orbit ids under the subgroup generated by `gens`, by flood fill.
pub fn orbit_labels(f: &Frame, gens: &[usize]) -> Vec<u32> {
    let w = &f.window;
    let inv: Vec<usize> = gens.iter().map(|&g| w.quotient.inv(g)).collect();
    let mut label = vec![u32::MAX; f.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for s in 0..f.len() {
        if label[s] != u32::MAX {
            continue;
        }
        label[s] = next;
        stack.push(s);
        while let Some(x) = stack.pop() {
            for &g in gens.iter().chain(&inv) {
                let y = w.act_q(g, x);
                if label[y] == u32::MAX {
                    label[y] = next;
                    stack.push(y);
                }
            }
        }
        next += 1;
    }
    label
}

/// A failed clause, located in the array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArrayFailure {
    pub column: usize,
    pub row: usize,
    pub clause: String,
    pub detail: String,
    pub witness: Vec<usize>,
}

impl fmt::Display for ArrayFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {} row {} clause {}: {}", self.column, self.row, self.clause, self.detail)?;
        if !self.witness.is_empty() {
            write!(f, " (points {:?})", self.witness)?;
        }
        Ok(())
    }
}

/// A clause check that ran, and its outcome.
#[derive(Clone, Debug)]
pub struct ClauseCheck {
    pub column: usize,
    pub row: usize,
    pub clause: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Column {
    /// `E_{k,n}` for `k = 1..=top`, bottom first.
    pub rows: Vec<EqRel>,
    /// The auxiliary relations `F_k`, bottom first.
    pub aux: Vec<EqRel>,
    /// `σ_k` for `k < top`.
    pub selectors: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct ArrayState {
    pub levels: Vec<Level>,
    pub columns: Vec<Column>,
    /// `b_k` per row.
    pub b: Vec<usize>,
    /// Per row, per point: relations in the row not saturating `φ_k(8p·A_k)·x`.
    pub counters: Vec<Vec<u32>>,
    pub checks: Vec<ClauseCheck>,
    /// Why construction stopped early, if it did.
    pub failure: Option<ArrayFailure>,
}

impl ArrayState {
    /// `E_{k,n}` with 1-based indices.
    pub fn rel(&self, k: usize, n: usize) -> Option<&EqRel> {
        self.columns.get(n.checked_sub(1)?)?.rows.get(k.checked_sub(1)?)
    }

    /// Rows present in column `n`: the chain is capped at its last level.
    pub fn top(&self, n: usize) -> usize {
        n.min(self.levels.len())
    }

    /// `E_{1,1}, …, E_{1,C}` over the built columns.
    pub fn bottom_row(&self) -> Vec<&EqRel> {
        self.columns.iter().map(|c| &c.rows[0]).collect()
    }

    pub fn ok(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.pass)
    }

    pub fn report(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("levels {}\ncolumns built {}\n", self.levels.len(), self.columns.len()));
        for (k, lv) in self.levels.iter().enumerate() {
            s.push_str(&format!("level {}: ell {} b {} A {}\n", k + 1, lv.ell(), self.b[k], lv.prm.a));
        }
        for c in &self.checks {
            let tag = if c.pass { "ok" } else { "FAIL" };
            s.push_str(&format!("column {} row {} ({}) {}: {}\n", c.column, c.row, c.clause, tag, c.detail));
        }
        for (n, col) in self.columns.iter().enumerate() {
            let sizes: Vec<String> = col.rows.iter().map(|e| e.num_classes().to_string()).collect();
            s.push_str(&format!("column {} classes per row: {}\n", n + 1, sizes.join(" ")));
        }
        match &self.failure {
            Some(f) => s.push_str(&format!("stopped: {f}\n")),
            None => s.push_str("complete\n"),
        }
        s
    }
}

fn fail(column: usize, row: usize, clause: &str, detail: impl Into<String>, witness: Vec<usize>) -> ArrayFailure {
    ArrayFailure { column, row, clause: clause.to_string(), detail: detail.into(), witness }
}

/// On `mask`, `e` and `g` induce the same partition; otherwise two points
/// related by exactly one of them.
pub fn agree_on(mask: &[bool], e: &EqRel, g: &EqRel) -> Result<(), (usize, usize)> {
    let mut by_e: HashMap<u32, usize> = HashMap::new();
    let mut by_g: HashMap<u32, usize> = HashMap::new();
    for x in (0..mask.len()).filter(|&x| mask[x]) {
        let y = *by_e.entry(e.class[x]).or_insert(x);
        if g.class[y] != g.class[x] {
            return Err((y, x));
        }
        let y = *by_g.entry(g.class[x]).or_insert(x);
        if e.class[y] != e.class[x] {
            return Err((y, x));
        }
    }
    Ok(())
}

/// Every `y·x⁻¹` with `x E y`, computed once per distinct class shape.
pub fn class_offsets(w: &Window, e: &EqRel) -> Vec<usize> {
    let q = &w.quotient;
    let mut shapes: HashSet<Vec<usize>> = HashSet::new();
    for members in e.classes() {
        let r = q.inv(members[0]);
        let mut d: Vec<usize> = members.iter().map(|&y| q.mul(y, r)).collect();
        d.sort_unstable();
        shapes.insert(d);
    }
    let mut out: HashSet<usize> = HashSet::new();
    for d in &shapes {
        let inv: Vec<usize> = d.iter().map(|&x| q.inv(x)).collect();
        for &a in d {
            for &b in &inv {
                out.insert(q.mul(a, b));
            }
        }
    }
    let mut v: Vec<usize> = out.into_iter().collect();
    v.sort_unstable();
    v
}

/// Builds `columns` columns left to right, checking every clause after each.
/// Construction stops at the first failure, keeping the columns already built.
pub fn build_free_array(levels: Vec<Level>, b_top: usize, columns: usize, order: &[usize]) -> ArrayState {
    let kk = levels.len();
    let b: Vec<usize> = (0..kk).map(|k| if k + 1 < kk { levels[k + 1].ell() + 1 } else { b_top }).collect();
    let npts = levels.first().map_or(0, |l| l.frame.len());
    let mut st = ArrayState {
        counters: vec![vec![0; npts]; kk],
        levels,
        columns: Vec::new(),
        b,
        checks: Vec::new(),
        failure: None,
    };
    for n in (1..=columns).take_while(|_| kk > 0) {
        if let Err(e) = add_column(&mut st, n, order) {
            st.failure = Some(e);
            break;
        }
    }
    st
}

fn add_column(st: &mut ArrayState, n: usize, order: &[usize]) -> Result<(), ArrayFailure> {
    let top = st.top(n);
    let aux: Vec<Result<EqRel, OrthoError>> = (1..=top)
        .into_par_iter()
        .map(|k| {
            let lv = &st.levels[k - 1];
            let existing: Vec<EqRel> = (k..n).filter_map(|m| st.rel(k, m).cloned()).collect();
            let prm = OrthoParams { b: st.b[k - 1], ..lv.prm.clone() };
            build_orthogonal_relation(&lv.frame, &prm, &existing).map(|o| o.f)
        })
        .collect();
    let mut fs = Vec::with_capacity(top);
    for (k, r) in aux.into_iter().enumerate() {
        match r {
            Ok(f) => fs.push(f),
            Err(e) => {
                let witness = match &e {
                    OrthoError::Bound { x, .. } => vec![*x],
                    OrthoError::NoAdmissible { y, .. } => vec![*y],
                    _ => Vec::new(),
                };
                return Err(fail(n, k + 1, "construction", e.to_string(), witness));
            }
        }
    }

    let mut selectors = Vec::new();
    for k in 1..top {
        let lv = &st.levels[k - 1];
        let kset = class_offsets(&lv.frame.window, &fs[k - 1]);
        let s = build_selector(&lv.frame.window, &fs[k - 1], &kset, order)
            .map_err(|e: MarkerError| fail(n, k, "selector", e.to_string(), Vec::new()))?;
        selectors.push(s);
    }
    let mut rows = vec![EqRel::equality(0); top];
    rows[top - 1] = fs[top - 1].clone();
    for k in (1..top).rev() {
        let above = &rows[k];
        let s = &selectors[k - 1];
        let labels: Vec<u32> = s.iter().map(|&y| above.class[y]).collect();
        rows[k - 1] = EqRel::from_labels(&labels);
    }
    st.columns.push(Column { rows, aux: fs, selectors });
    check_column(st, n)
}

fn record(st: &mut ArrayState, column: usize, row: usize, clause: &'static str, r: Result<String, (String, Vec<usize>)>) -> Result<(), ArrayFailure> {
    match r {
        Ok(detail) => {
            st.checks.push(ClauseCheck { column, row, clause, pass: true, detail });
            Ok(())
        }
        Err((detail, witness)) => {
            st.checks.push(ClauseCheck { column, row, clause, pass: false, detail: detail.clone() });
            Err(fail(column, row, clause, detail, witness))
        }
    }
}

fn frame_err(e: FrameError) -> (String, Vec<usize>) {
    (e.to_string(), Vec::new())
}

fn check_column(st: &mut ArrayState, n: usize) -> Result<(), ArrayFailure> {
    let top = st.top(n);
    for k in 1..=top {
        let r = clause_orbits(st, k, n);
        record(st, n, k, "orbits", r)?;
        let r = clause_rectangular(st, k, n);
        record(st, n, k, "rectangular", r)?;
        let r = clause_orthogonal(st, k, n);
        record(st, n, k, "orthogonal", r)?;
        if k < top {
            let r = clause_vertical(st, k, n);
            record(st, n, k, "vertical", r)?;
        }
        let r = clause_budget(st, k, n);
        record(st, n, k, "budget", r)?;
        if k > 1 {
            let r = clause_column(st, k, n);
            record(st, n, k, "column", r)?;
        }
    }
    Ok(())
}

/// Classes stay inside orbits: `F_k` in `G_k`-orbits, `E_{k,n}` in the
/// orbits of the column's top level.
fn clause_orbits(st: &ArrayState, k: usize, n: usize) -> Result<String, (String, Vec<usize>)> {
    let col = &st.columns[n - 1];
    let top = st.top(n);
    let lk = EqRel::from_labels(&st.levels[k - 1].orbit);
    let ltop = EqRel::from_labels(&st.levels[top - 1].orbit);
    col.aux[k - 1].refines(&lk).map_err(|(x, y)| ("F_k leaves a G_k-orbit".to_string(), vec![x, y]))?;
    let e = &col.rows[k - 1];
    e.refines(&ltop).map_err(|(x, y)| (format!("E_{{{k},{n}}} leaves a G_{top}-orbit"), vec![x, y]))?;
    let largest = e.classes().iter().map(|c| c.len()).max().unwrap_or(0);
    Ok(format!("{} classes, largest {}", e.num_classes(), largest))
}

/// `F_k` re-certifies as rectangular and sits inside `E_{k,n}`.
fn clause_rectangular(st: &ArrayState, k: usize, n: usize) -> Result<String, (String, Vec<usize>)> {
    let col = &st.columns[n - 1];
    let lv = &st.levels[k - 1];
    let cert = verify_rectangular(&lv.frame, &col.aux[k - 1], &lv.prm.a, &lv.prm.eps, lv.rect_bound)
        .map_err(|e| (format!("F_k not rectangular: class {} {:?}", e.class, e.kind), Vec::new()))?;
    col.aux[k - 1].refines(&col.rows[k - 1]).map_err(|(x, y)| ("F_k not inside E_{k,n}".to_string(), vec![x, y]))?;
    let certified = cert.witnesses.iter().filter(|w| w.is_some()).count();
    Ok(format!("{certified} witnessed classes"))
}

/// Row `k` stays pairwise orthogonal at `q_k·A_k`.
fn clause_orthogonal(st: &ArrayState, k: usize, n: usize) -> Result<String, (String, Vec<usize>)> {
    let lv = &st.levels[k - 1];
    let qa = lv.prm.a.scale(&lv.prm.q).map_err(|e| (e.to_string(), Vec::new()))?;
    let e = &st.columns[n - 1].rows[k - 1];
    let mut pairs = 0;
    for m in k..n {
        let prev = st.rel(k, m).expect("row present");
        if let Some((axis, x)) = is_orthogonal(&lv.frame, prev, e, &qa).map_err(frame_err)? {
            return Err((format!("E_{{{k},{m}}} and E_{{{k},{n}}} share a dilated boundary on axis {axis}"), vec![x]));
        }
        pairs += 1;
    }
    Ok(format!("{pairs} earlier relations"))
}

/// Points saturated at `φ_{k+1}(𝒵_{k+1})` see the same partition in rows `k` and `k+1`.
fn clause_vertical(st: &ArrayState, k: usize, n: usize) -> Result<String, (String, Vec<usize>)> {
    let up = &st.levels[k];
    let col = &st.columns[n - 1];
    let mask = saturated(&up.frame, &col.rows[k], &up.frame.zee).map_err(frame_err)?;
    agree_on(&mask, &col.rows[k - 1], &col.rows[k])
        .map_err(|(x, y)| ("rows disagree on saturated points".to_string(), vec![x, y]))?;
    Ok(format!("{} saturated points", mask.iter().filter(|&&b| b).count()))
}

/// The per-point count of unsaturated relations in row `k` stays within `b_k`.
fn clause_budget(st: &mut ArrayState, k: usize, n: usize) -> Result<String, (String, Vec<usize>)> {
    let lv = &st.levels[k - 1];
    let r = lv.prm.a.scale_int(8 * lv.prm.p);
    let sat = saturated(&lv.frame, &st.columns[n - 1].rows[k - 1], &r).map_err(frame_err)?;
    let counter = &mut st.counters[k - 1];
    for (x, s) in sat.iter().enumerate() {
        if !s {
            counter[x] += 1;
        }
    }
    let bk = st.b[k - 1] as u32;
    let worst = counter.iter().copied().max().unwrap_or(0);
    match counter.iter().position(|&c| c > bk) {
        Some(x) => Err((format!("point unsaturated in {} relations, b = {bk}", counter[x]), vec![x])),
        None => Ok(format!("max count {worst} of b = {bk}")),
    }
}

/// Points saturated at `φ_k(3·𝒵_k)` see the same partition in every row `t ≤ k`.
fn clause_column(st: &ArrayState, k: usize, n: usize) -> Result<String, (String, Vec<usize>)> {
    let lv = &st.levels[k - 1];
    let col = &st.columns[n - 1];
    let mask = saturated(&lv.frame, &col.rows[k - 1], &lv.frame.zee.scale_int(3)).map_err(frame_err)?;
    for t in 1..k {
        agree_on(&mask, &col.rows[k - 1], &col.rows[t - 1])
            .map_err(|(x, y)| (format!("rows {t} and {k} disagree on saturated points"), vec![x, y]))?;
    }
    Ok(format!("{} saturated points", mask.iter().filter(|&&b| b).count()))
}

/// Per-pair failure counts along row `k` and the bottom row.
#[derive(Clone, Debug)]
pub struct PairOutcome {
    pub level: usize,
    pub x: usize,
    pub y: usize,
    pub row_failures: Vec<usize>,
    pub bottom_failures: Vec<usize>,
    /// Bottom-row failures not covered by a row-`k` failure or a column where
    /// `x` or `y` is unsaturated at `φ_k(3·𝒵_k)`.
    pub unexplained: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct AgreementReport {
    pub pairs: usize,
    pub max_row_failures: usize,
    pub max_bottom_failures: usize,
    /// Pairs breaking the `ℓ_k` bound or with unexplained bottom failures.
    pub bad: Vec<PairOutcome>,
}

impl AgreementReport {
    pub fn ok(&self) -> bool {
        self.bad.is_empty()
    }
}

impl fmt::Display for AgreementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs {}", self.pairs)?;
        writeln!(f, "max row failures {}", self.max_row_failures)?;
        writeln!(f, "max bottom failures {}", self.max_bottom_failures)?;
        for p in &self.bad {
            writeln!(
                f,
                "bad level {} pair ({}, {}): row {:?} bottom {:?} unexplained {:?}",
                p.level, p.x, p.y, p.row_failures, p.bottom_failures, p.unexplained
            )?;
        }
        Ok(())
    }
}

/// Generator pairs `(x, u·x)` and `(x, u⁻¹·x)` at every level, for every point
/// or a seeded sample of `limit` points.
/// Bottom-row pairs `E_{1,m}`, `E_{1,n}` with `k ≤ m < n`, tested for
/// orthogonality at level `k`'s scale `q_k·A_k` for every level `k ≥ 2`.
/// Informational: a shared dilated boundary is recorded, not raised.
pub fn bottom_row_orthogonality(st: &ArrayState) -> Vec<String> {
    let mut out = Vec::new();
    let rows = st.bottom_row();
    for k in 2..=st.levels.len() {
        let lv = &st.levels[k - 1];
        let qa = match lv.prm.a.scale(&lv.prm.q) {
            Ok(r) => r,
            Err(e) => {
                out.push(format!("level {k}: {e}"));
                continue;
            }
        };
        for n in k..=rows.len() {
            for m in k..n {
                let verdict = match is_orthogonal(&lv.frame, rows[m - 1], rows[n - 1], &qa) {
                    Ok(None) => "orthogonal".to_string(),
                    Ok(Some((axis, x))) => format!("shared boundary on axis {axis} at {x}"),
                    Err(e) => format!("not evaluated: {e}"),
                };
                out.push(format!("level {k}: E_{{1,{m}}} vs E_{{1,{n}}}: {verdict}"));
            }
        }
    }
    out
}

pub fn generator_pairs(st: &ArrayState, limit: Option<(usize, u64)>) -> Vec<(usize, usize, usize)> {
    use rand::{Rng, SeedableRng};
    let Some(first) = st.levels.first() else { return Vec::new() };
    let npts = first.frame.len();
    let points: Vec<usize> = match limit {
        Some((m, seed)) if m < npts => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..m).map(|_| rng.gen_range(0..npts)).collect()
        }
        _ => (0..npts).collect(),
    };
    let mut out = Vec::new();
    for (k, lv) in st.levels.iter().enumerate() {
        let w = &lv.frame.window;
        for &g in &lv.gens {
            let gi = w.quotient.inv(g);
            for &x in &points {
                out.push((k + 1, x, w.act_q(g, x)));
                out.push((k + 1, x, w.act_q(gi, x)));
            }
        }
    }
    out
}

/// For `(k, x, y)`: columns `n ≥ k` where row `k` separates the pair, which
/// must number at most `ℓ_k`, and bottom-row separations, each of which must
/// be explained by a row-`k` separation or a `φ_k(3·𝒵_k)`-unsaturated endpoint.
pub fn verify_eventual_agreement(st: &ArrayState, pairs: &[(usize, usize, usize)]) -> Result<AgreementReport, FrameError> {
    let built = st.columns.len();
    // Saturation masks per (level, column), computed lazily per level.
    let mut sat3: HashMap<(usize, usize), Vec<bool>> = HashMap::new();
    let levels_used: HashSet<usize> = pairs.iter().map(|p| p.0).collect();
    let mut lvls: Vec<usize> = levels_used.into_iter().collect();
    lvls.sort_unstable();
    for &k in &lvls {
        let lv = &st.levels[k - 1];
        let r = lv.frame.zee.scale_int(3);
        for n in k..=built {
            sat3.insert((k, n), saturated(&lv.frame, st.rel(k, n).expect("row present"), &r)?);
        }
    }
    let mut rep = AgreementReport { pairs: pairs.len(), ..Default::default() };
    for &(k, x, y) in pairs {
        let row_failures: Vec<usize> = (k..=built).filter(|&n| !st.rel(k, n).expect("row").same(x, y)).collect();
        let bottom_failures: Vec<usize> = (k..=built).filter(|&n| !st.rel(1, n).expect("row").same(x, y)).collect();
        let unexplained: Vec<usize> = bottom_failures
            .iter()
            .copied()
            .filter(|&n| !row_failures.contains(&n) && sat3[&(k, n)][x] && sat3[&(k, n)][y])
            .collect();
        rep.max_row_failures = rep.max_row_failures.max(row_failures.len());
        rep.max_bottom_failures = rep.max_bottom_failures.max(bottom_failures.len());
        if row_failures.len() > st.levels[k - 1].ell() || !unexplained.is_empty() {
            rep.bad.push(PairOutcome { level: k, x, y, row_failures, bottom_failures, unexplained });
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::build_abelian_chart;
    use crate::frame::rect_from;
    use crate::group_catalog::{Elem, Group};
    use crate::rect_algebra::{rat, Rect};
    use crate::rough::Regime;
    use num_bigint::BigInt;
    use std::sync::Arc;

    fn line_level(n: u64, work: i64, a: i64, p: u64, q: i64) -> Level {
        let g = Group::parse("Z").unwrap();
        let w = Arc::new(Window::build(&g, n).unwrap());
        let c = build_abelian_chart(&g, &[BigInt::from(1)], &rat(100000, 1)).unwrap();
        let f = Frame::new(w, &c, None, &rect_from(&[0], &[work], &[]), 1 << 24).unwrap();
        let prm = OrthoParams {
            a: Rect::rec_i64(&[a]),
            eps: rat(4, 5),
            q: rat(1, q),
            b: 1,
            p,
            guard2: 2,
            guard3: 64,
            regime: Regime::Relaxed,
        };
        let gens = vec![f.window.quotient.reduce(&Elem::from_i64(&[1]))];
        Level::new(f, prm, gens, 2)
    }

    #[test]
    fn agree_on_detects_split() {
        let e = EqRel::from_labels(&[0, 0, 1, 1]);
        let g = EqRel::from_labels(&[0, 0, 0, 1]);
        assert!(agree_on(&[true, true, false, true], &e, &g).is_ok());
        assert_eq!(agree_on(&[true, true, true, true], &e, &g), Err((0, 2)));
    }

    #[test]
    fn class_offsets_of_intervals() {
        let lv = line_level(40, 10, 1, 1, 1);
        let e = EqRel::from_labels(&(0..40).map(|x| x / 4).collect::<Vec<_>>());
        let k = class_offsets(&lv.frame.window, &e);
        assert_eq!(k, vec![0, 1, 2, 3, 37, 38, 39]);
    }

    #[test]
    fn orbit_labels_on_torus() {
        let g = Group::parse("Z^2").unwrap();
        let w = Arc::new(Window::build(&g, 6).unwrap());
        let c = build_abelian_chart(&Group::parse("Z").unwrap(), &[BigInt::from(1)], &rat(10, 1)).unwrap();
        let gens = [Elem::from_i64(&[1, 0])];
        let f = Frame::new(w.clone(), &c, Some(&gens), &rect_from(&[0], &[2], &[]), 1 << 20).unwrap();
        let lab = orbit_labels(&f, &[w.quotient.reduce(&gens[0])]);
        assert_eq!(EqRel::from_labels(&lab).num_classes(), 6);
    }

    #[test]
    fn single_level_chain_is_an_orthogonal_sequence() {
        let lv = line_level(20000, 7200, 32, 16, 32);
        let st = build_free_array(vec![lv], 3, 2, &(0..20000).collect::<Vec<_>>());
        assert!(st.ok(), "{}", st.report());
        assert_eq!(st.columns.len(), 2);
        let pairs = generator_pairs(&st, None);
        let rep = verify_eventual_agreement(&st, &pairs).unwrap();
        assert!(rep.ok(), "{rep}");
        assert!(rep.max_row_failures <= 1);
        // Only levels above the first have a coarser scale to test against.
        assert!(bottom_row_orthogonality(&st).is_empty());
    }

    #[test]
    fn infeasible_column_stops_with_location() {
        let lv = line_level(8000, 2700, 24, 8, 24);
        let st = build_free_array(vec![lv], 3, 3, &(0..8000).collect::<Vec<_>>());
        let f = st.failure.as_ref().expect("p = 8 leaves no room");
        assert_eq!((f.column, f.row, f.clause.as_str()), (2, 1, "construction"));
        assert_eq!(st.columns.len(), 1);
    }
}
