//! Equivalence relations on window points, rough rectangles, facial
//! boundaries, and brute-force verifiers for their properties.

use crate::frame::{radius_i64, rect_from, Frame, FrameError};
use crate::rect_algebra::{rat, GVec, Rect};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};
use std::fmt;

/// A partition of `0..n`, numbered by first occurrence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EqRel {
    pub class: Vec<u32>,
    /// Optional certificate per class id.
    pub witnesses: Vec<Option<RoughWitness>>,
}

impl EqRel {
    pub fn from_labels<T: std::hash::Hash + Eq + Clone>(labels: &[T]) -> EqRel {
        let mut ids: HashMap<T, u32> = HashMap::new();
        let class: Vec<u32> = labels
            .iter()
            .map(|l| {
                let next = ids.len() as u32;
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect();
        let n = ids.len();
        EqRel { class, witnesses: vec![None; n] }
    }

    pub fn equality(n: usize) -> EqRel {
        EqRel { class: (0..n as u32).collect(), witnesses: vec![None; n] }
    }

    pub fn everything(n: usize) -> EqRel {
        EqRel { class: vec![0; n], witnesses: vec![None; usize::from(n > 0)] }
    }

    pub fn len(&self) -> usize {
        self.class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.witnesses.len()
    }

    pub fn same(&self, x: usize, y: usize) -> bool {
        self.class[x] == self.class[y]
    }

    /// Members of each class, ascending.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (x, &c) in self.class.iter().enumerate() {
            out[c as usize].push(x);
        }
        out
    }

    /// `self ⊆ other`; otherwise a pair related by `self` but not by `other`.
    pub fn refines(&self, other: &EqRel) -> Result<(), (usize, usize)> {
        let mut first: Vec<Option<usize>> = vec![None; self.num_classes()];
        for x in 0..self.len() {
            let c = self.class[x] as usize;
            match first[c] {
                None => first[c] = Some(x),
                Some(y) if other.class[y] != other.class[x] => return Err((y, x)),
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// One `point class` line per point.
    pub fn dump(&self) -> String {
        self.class.iter().enumerate().map(|(x, c)| format!("{x} {c}\n")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoughWitness {
    pub b: Rect,
    pub delta: BigRational,
    pub base: usize,
}

impl fmt::Display for RoughWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B={} delta={} base={}", self.b, self.delta, self.base)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RoughFailure {
    #[error("base {0} is not in X^H")]
    NotBase(usize),
    #[error("2Z does not fit in eps*A")]
    Fit,
    #[error("inner rectangle reaches {0}, which is outside the set")]
    Missing(usize),
    #[error("set point {0} is outside the outer rectangle")]
    Outside(usize),
    #[error("rectangle leaves the working region")]
    Region,
}

fn one_minus(eps: &BigRational) -> BigRational {
    BigRational::one() - eps
}

fn one_plus(eps: &BigRational) -> BigRational {
    BigRational::one() + eps
}

/// `φ((1−ε)A)·x ⊆ R ⊆ φ((1+ε)A)·x` and `2𝒵 ⊑ εA`, by enumeration.
pub fn verify_rough(f: &Frame, r: &[usize], a: &Rect, eps: &BigRational, x: usize) -> Result<(), RoughFailure> {
    if !f.xh[x] {
        return Err(RoughFailure::NotBase(x));
    }
    if !eps.is_positive() || !f.zee.scale_int(2).fits_in(&a.scale(eps).map_err(|_| RoughFailure::Fit)?).unwrap_or(false) {
        return Err(RoughFailure::Fit);
    }
    let members: HashSet<usize> = r.iter().copied().collect();
    if eps < &BigRational::one() {
        let inner = a.scale(&one_minus(eps)).map_err(|_| RoughFailure::Region)?;
        for k in f.rect_indices(&inner).map_err(|_| RoughFailure::Region)? {
            let y = f.act(k, x);
            if !members.contains(&y) {
                return Err(RoughFailure::Missing(y));
            }
        }
    }
    let outer = a.scale(&one_plus(eps)).map_err(|_| RoughFailure::Region)?;
    let reach: HashSet<usize> =
        f.image(&outer, x).map_err(|_| RoughFailure::Region)?.into_iter().collect();
    match r.iter().find(|y| !reach.contains(y)) {
        Some(&y) => Err(RoughFailure::Outside(y)),
        None => Ok(()),
    }
}

fn axis_shift(a: &Rect, i: usize, s: i64) -> GVec {
    let mut v = GVec::zero(a.ell(), a.gamma.len());
    v.ints[i] = &a.radius[i] * BigInt::from(s);
    v
}

/// `∂ᵢ(E, A)`: points of `X^ℋ` whose two opposite `A`-faces have disjoint
/// `E`-saturations.
pub fn boundary(f: &Frame, e: &EqRel, a: &Rect, i: usize) -> Result<Vec<bool>, FrameError> {
    let face = a.face(i).expect("axis in range");
    let lo = f.rect_indices(&face.translate(&axis_shift(a, i, -1)))?;
    let hi = f.rect_indices(&face.translate(&axis_shift(a, i, 1)))?;
    Ok((0..f.len())
        .into_par_iter()
        .map(|x| {
            if !f.xh[x] {
                return false;
            }
            let mut left: Vec<u32> = lo.iter().map(|&k| e.class[f.act(k, x)]).collect();
            left.sort_unstable();
            left.dedup();
            hi.iter().all(|&k| left.binary_search(&e.class[f.act(k, x)]).is_err())
        })
        .collect())
}

/// `φ(r)·x ⊆ [x]_E` for every point `x`; `r` must contain the origin.
pub fn saturated(f: &Frame, e: &EqRel, r: &Rect) -> Result<Vec<bool>, FrameError> {
    match &f.steps {
        Some(steps) if r.is_centered() => {
            f.rect_indices(r)?;
            Ok(saturated_by_runs(f, e, r, steps))
        }
        _ => saturated_brute(f, e, r),
    }
}

/// Enumerates `φ(r)·x` for each point, outermost vectors first.
pub fn saturated_brute(f: &Frame, e: &EqRel, r: &Rect) -> Result<Vec<bool>, FrameError> {
    let idx = f.rect_indices_outer_first(r)?;
    Ok((0..f.len())
        .into_par_iter()
        .map(|x| idx.iter().all(|&k| e.class[f.act(k, x)] == e.class[x]))
        .collect())
}

const BROKEN: u32 = u32::MAX;

/// Erodes the class labels one axis at a time: after axis `j` a point keeps
/// its label iff the label is constant along `[−rⱼ, rⱼ]` of the `j`-th
/// generator's cycle through it. Torsion axes use whole cycles.
fn saturated_by_runs(f: &Frame, e: &EqRel, r: &Rect, steps: &[usize]) -> Vec<bool> {
    let n = f.len();
    let mut label = e.class.clone();
    let radii: Vec<usize> = r
        .radius
        .iter()
        .map(|x| x.to_usize().expect("small"))
        .chain(f.gamma.iter().map(|_| usize::MAX))
        .collect();
    let mut seen = vec![false; n];
    let mut cycle = Vec::new();
    for (j, &s) in steps.iter().enumerate() {
        let rad = radii[j];
        if rad == 0 {
            continue;
        }
        seen.iter_mut().for_each(|b| *b = false);
        let mut next = vec![BROKEN; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            cycle.clear();
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                cycle.push(x);
                x = f.window.act_q(s, x);
            }
            erode_cycle(&cycle, &label, rad, &mut next);
        }
        label = next;
    }
    label.iter().map(|&l| l != BROKEN).collect()
}

fn erode_cycle(cycle: &[usize], label: &[u32], rad: usize, out: &mut [u32]) {
    let m = cycle.len();
    let lab = |j: usize| label[cycle[j % m]];
    if (0..m).all(|j| lab(j) == lab(0)) {
        for &x in cycle {
            out[x] = label[x];
        }
        return;
    }
    // Equal-label run lengths ahead of and behind each position, wrapping.
    let mut ahead = vec![0usize; m];
    let mut behind = vec![0usize; m];
    let pivot = (0..m).find(|&j| lab(j) != lab(j + 1)).expect("not constant");
    for t in 1..=m {
        let j = (pivot + m - t + 1) % m;
        let nxt = (j + 1) % m;
        ahead[j] = if t > 1 && lab(j) == lab(nxt) { ahead[nxt] + 1 } else { 0 };
    }
    let pivot_b = (0..m).find(|&j| lab(j) != lab(j + m - 1)).expect("not constant");
    for t in 0..m {
        let j = (pivot_b + t) % m;
        let prev = (j + m - 1) % m;
        behind[j] = if t > 0 && lab(j) == lab(prev) { behind[prev] + 1 } else { 0 };
    }
    for j in 0..m {
        let l = lab(j);
        out[cycle[j]] = if l != BROKEN && ahead[j] >= rad && behind[j] >= rad { l } else { BROKEN };
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RectFailureKind {
    /// A class missing `X^ℋ` has more than one point.
    NotSingleton,
    /// No candidate witness passed; the last reason is attached.
    NoWitness(String),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("class {class}: {kind:?}")]
pub struct RectFailure {
    pub class: u32,
    pub kind: RectFailureKind,
}

#[derive(Clone, Debug, Default)]
pub struct Certificate {
    pub witnesses: Vec<Option<RoughWitness>>,
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, w) in self.witnesses.iter().enumerate() {
            match w {
                Some(w) => writeln!(f, "class {c}: {w}")?,
                None => writeln!(f, "class {c}: singleton off X^H")?,
            }
        }
        Ok(())
    }
}

/// Conditions a candidate witness must meet besides the sandwich.
fn witness_shape(f: &Frame, a: &Rect, eps: &BigRational, bound: u64, w: &RoughWitness) -> Result<(), String> {
    if !a.fits_in(&w.b).unwrap_or(false) {
        return Err("A does not fit in B".into());
    }
    if !w.b.scale_int(bound).contained_in(&f.dom) {
        return Err(format!("{bound}*B leaves dom"));
    }
    let lhs = w.b.scale(&(&w.delta * BigInt::from(2))).map_err(|e| e.to_string())?;
    let rhs = a.scale(eps).map_err(|e| e.to_string())?;
    if !lhs.fits_in(&rhs).unwrap_or(false) {
        return Err("2*delta*B does not fit in eps*A".into());
    }
    Ok(())
}

fn check_witness(f: &Frame, members: &[usize], a: &Rect, eps: &BigRational, bound: u64, w: &RoughWitness) -> Result<(), String> {
    witness_shape(f, a, eps, bound, w)?;
    verify_rough(f, members, &w.b, &w.delta, w.base).map_err(|e| e.to_string())
}

/// Least `δ > 0` with `2𝒵 ⊑ δB`.
pub fn minimal_delta(zee: &Rect, b: &Rect) -> Option<BigRational> {
    let mut d = BigRational::zero();
    for (z, r) in zee.radius.iter().zip(&b.radius) {
        if r.is_zero() {
            if !z.is_zero() {
                return None;
            }
            continue;
        }
        d = d.max(BigRational::new(z * BigInt::from(2), r.clone()));
    }
    if d.is_zero() {
        d = BigRational::new(BigInt::one(), BigInt::from(1u64 << 20));
    }
    Some(d)
}

/// Search for a witness of the class `members` based at `base`.
fn search_at(f: &Frame, members: &[usize], base: usize, a: &Rect, eps: &BigRational, bound: u64) -> Result<RoughWitness, String> {
    let ell = f.ell;
    let mut lo = vec![i64::MAX; ell];
    let mut hi = vec![i64::MIN; ell];
    for &y in members {
        let k = f.offset(base, y).ok_or_else(|| format!("no offset from {base} to {y}"))?;
        let v = f.vector(k);
        for i in 0..ell {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    let radius: Vec<i64> = (0..ell).map(|i| (hi[i] - lo[i] + 1) / 2).collect();
    let center: Vec<i64> = (0..ell).map(|i| lo[i] + radius[i]).collect();
    let b = rect_from(&center, &radius, &f.gamma);
    let d0 = minimal_delta(&f.zee, &b).ok_or("B is flat along an axis of Z")?;
    // Enlarging δ only shrinks the inner rectangle and grows the outer one, so
    // the least passing δ among the breakpoints of floor((1−δ)bᵢ) is found by bisection.
    let mut cands: Vec<BigRational> = vec![d0.clone()];
    for &r in &radius {
        for k in 0..r {
            let c = BigRational::one() - BigRational::new(BigInt::from(k), BigInt::from(r));
            if c > d0 && c < BigRational::one() {
                cands.push(c);
            }
        }
    }
    cands.sort();
    cands.dedup();
    let pass = |d: &BigRational| verify_rough(f, members, &b, d, base).is_ok();
    let (mut l, mut h) = (0usize, cands.len());
    while l < h {
        let m = (l + h) / 2;
        if pass(&cands[m]) {
            h = m;
        } else {
            l = m + 1;
        }
    }
    if l == cands.len() {
        return Err(verify_rough(f, members, &b, cands.last().expect("nonempty"), base).unwrap_err().to_string());
    }
    let w = RoughWitness { b, delta: cands[l].clone(), base };
    witness_shape(f, a, eps, bound, &w)?;
    Ok(w)
}

const SEARCH_BASES: usize = 16;

fn certify_class(f: &Frame, e: &EqRel, c: usize, members: &[usize], a: &Rect, eps: &BigRational, bound: u64) -> Result<Option<RoughWitness>, RectFailure> {
    let fail = |kind| RectFailure { class: c as u32, kind };
    let bases: Vec<usize> = members.iter().copied().filter(|&x| f.xh[x]).collect();
    if bases.is_empty() {
        return if members.len() == 1 { Ok(None) } else { Err(fail(RectFailureKind::NotSingleton)) };
    }
    let mut last = String::from("no candidate");
    if let Some(Some(w)) = e.witnesses.get(c) {
        match check_witness(f, members, a, eps, bound, w) {
            Ok(()) => return Ok(Some(w.clone())),
            Err(msg) => last = format!("emitted witness: {msg}"),
        }
    }
    // Try bases nearest the middle of the class first.
    let first = bases[0];
    let mut keyed: Vec<(i64, usize)> = Vec::with_capacity(bases.len());
    let offs: Vec<Option<&[i64]>> = members.iter().map(|&y| f.offset(first, y).map(|k| f.vector(k))).collect();
    let ell = f.ell;
    let mut lo = vec![i64::MAX; ell];
    let mut hi = vec![i64::MIN; ell];
    for v in offs.iter().flatten() {
        for i in 0..ell {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    for (j, &y) in members.iter().enumerate() {
        if let (true, Some(v)) = (f.xh[y], offs[j]) {
            let d = (0..ell).map(|i| (2 * v[i] - lo[i] - hi[i]).abs()).max().unwrap_or(0);
            keyed.push((d, y));
        }
    }
    keyed.sort_unstable();
    for &(_, base) in keyed.iter().take(SEARCH_BASES) {
        match search_at(f, members, base, a, eps, bound) {
            Ok(w) => return Ok(Some(w)),
            Err(msg) => last = msg,
        }
    }
    Err(fail(RectFailureKind::NoWitness(last)))
}

/// Certifies every class meeting `X^ℋ` with `(B, δ)` such that `A ⊑ B`,
/// `bound·B ⊆ dom`, `2δB ⊑ εA` and the class is roughly `B` at its base.
pub fn verify_rectangular(f: &Frame, e: &EqRel, a: &Rect, eps: &BigRational, bound: u64) -> Result<Certificate, RectFailure> {
    let classes = e.classes();
    let results: Vec<Result<Option<RoughWitness>, RectFailure>> = classes
        .par_iter()
        .enumerate()
        .map(|(c, m)| certify_class(f, e, c, m, a, eps, bound))
        .collect();
    let mut witnesses = Vec::with_capacity(results.len());
    for r in results {
        witnesses.push(r?);
    }
    Ok(Certificate { witnesses })
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FindError {
    #[error("no certified class meets phi(M*A)*y")]
    NoClass,
    #[error("{0} is not in X^H")]
    NotBase(usize),
    #[error("no region vector carries y to the class base")]
    NoOffset,
    #[error("re-verification failed: {0}")]
    Verify(RoughFailure),
    #[error("{0}")]
    Frame(String),
}

/// Re-bases a certified class seen from `y`: the class is roughly `B + v` at
/// `y` with doubled error, where `φ(v)·y` is the class base.
pub fn find_base(f: &Frame, e: &EqRel, cert: &Certificate, a: &Rect, y: usize, m: u64) -> Result<(u32, RoughWitness), FindError> {
    if !f.xh[y] {
        return Err(FindError::NotBase(y));
    }
    let reach = f.image(&a.scale_int(m), y).map_err(|err| FindError::Frame(err.to_string()))?;
    let (c, w) = reach
        .iter()
        .find_map(|&z| {
            let c = e.class[z];
            cert.witnesses.get(c as usize).and_then(|w| w.as_ref()).map(|w| (c, w))
        })
        .ok_or(FindError::NoClass)?;
    let k = f.offset(y, w.base).ok_or(FindError::NoOffset)?;
    let v = f.gvec(k);
    let shifted = RoughWitness { b: w.b.translate(&v), delta: &w.delta * BigInt::from(2), base: y };
    let members: Vec<usize> = (0..f.len()).filter(|&x| e.class[x] == c).collect();
    verify_rough(f, &members, &shifted.b, &shifted.delta, y).map_err(FindError::Verify)?;
    Ok((c, shifted))
}

/// Which numeric regime a verifier runs in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Hypothesis violations refuse the run.
    Strict,
    /// Violations are reported and the run proceeds.
    Relaxed,
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("hypothesis violated: {0:?}")]
    Refused(Vec<String>),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("class {0} has no witness")]
    Uncertified(u32),
    #[error(transparent)]
    Rect(#[from] crate::rect_algebra::RectError),
}

/// Named inequalities `lo·ε < q < hi`, with the failing ones returned.
fn hypothesis(eps: &BigRational, q: &BigRational, lo_mult: i64, hi: &BigRational, hi_name: &str) -> Vec<String> {
    let mut out = Vec::new();
    if !(eps * BigInt::from(lo_mult) < *q) {
        out.push(format!("{lo_mult}*eps < q"));
    }
    if !(q < hi) {
        out.push(format!("q < {hi_name}"));
    }
    out
}

fn gate(regime: Regime, violated: Vec<String>) -> Result<Vec<String>, VerifyError> {
    if regime == Regime::Strict && !violated.is_empty() {
        return Err(VerifyError::Refused(violated));
    }
    Ok(violated)
}

#[derive(Clone, Debug, Default)]
pub struct FacesReport {
    pub violations: Vec<String>,
    /// Boundary points checked per axis.
    pub checked: Vec<usize>,
    /// Boundary points outside both slabs: (class, axis, point).
    pub strays: Vec<(u32, usize, usize)>,
}

impl FacesReport {
    pub fn ok(&self) -> bool {
        self.strays.is_empty()
    }
}

/// Boundary points of `∂ᵢ(E, qA)` inside a class lie in the two slabs
/// `φ(±bᵢ𝐞ᵢ + Bⁱ + 2qA)·base` of its witness.
pub fn verify_faces(f: &Frame, e: &EqRel, cert: &Certificate, a: &Rect, eps: &BigRational, q: &BigRational, regime: Regime) -> Result<FacesReport, VerifyError> {
    let violations = gate(regime, hypothesis(eps, q, 6, &one_minus(eps), "1 - eps"))?;
    let qa = a.scale(q)?;
    let pad = a.scale(&(q * BigInt::from(2)))?;
    let mut report = FacesReport { violations, ..Default::default() };
    for i in 0..f.ell {
        let bd = boundary(f, e, &qa, i)?;
        let mut slab_cache: HashMap<u32, HashSet<usize>> = HashMap::new();
        let mut checked = 0;
        for x in (0..f.len()).filter(|&x| bd[x]) {
            let c = e.class[x];
            let w = cert.witnesses[c as usize].as_ref().ok_or(VerifyError::Uncertified(c))?;
            if !slab_cache.contains_key(&c) {
                let face = w.b.face(i)?;
                let mut pts = HashSet::new();
                for s in [-1, 1] {
                    let slab = face.translate(&axis_shift(&w.b, i, s)).minkowski_sum(&pad)?;
                    pts.extend(f.image(&slab, w.base)?);
                }
                slab_cache.insert(c, pts);
            }
            checked += 1;
            if !slab_cache[&c].contains(&x) {
                report.strays.push((c, i, x));
            }
        }
        report.checked.push(checked);
    }
    Ok(report)
}

#[derive(Clone, Debug, Default)]
pub struct StrongBoundaryReport {
    pub violations: Vec<String>,
    /// Points whose `φ(3𝒵)`-neighborhood leaves their class.
    pub examined: usize,
    /// Points inside one class, skipped.
    pub interior: usize,
    /// Examined points not near any boundary.
    pub unexplained: Vec<usize>,
}

impl StrongBoundaryReport {
    pub fn ok(&self) -> bool {
        self.unexplained.is_empty()
    }
}

/// Every `x` (well inside `X^ℋ`) with `φ(3𝒵)·x ⊄ [x]` lies in
/// `φ(30ℓ·qA)·∂ᵢ(E, qA)` for some `i`.
pub fn verify_strong_boundary(f: &Frame, e: &EqRel, a: &Rect, eps: &BigRational, q: &BigRational, regime: Regime) -> Result<StrongBoundaryReport, VerifyError> {
    let ell = f.ell as i64;
    let violations = gate(regime, hypothesis(eps, q, 12, &rat(1, 24 * ell), &format!("1/{}", 24 * ell)))?;
    let qa = a.scale(q)?;
    let guard = f.rect_indices(&qa.scale_int(15 * f.ell as u64))?;
    let three_z = f.rect_indices(&f.zee.scale_int(3))?;
    let mut near = vec![false; f.len()];
    for i in 0..f.ell {
        let d = f.dilate(&boundary(f, e, &qa, i)?, &qa.scale_int(30 * f.ell as u64))?;
        near.iter_mut().zip(d).for_each(|(n, b)| *n |= b);
    }
    let status: Vec<u8> = (0..f.len())
        .into_par_iter()
        .map(|x| {
            if !f.xh[x] || !guard.iter().all(|&k| f.xh[f.act(k, x)]) {
                return 0;
            }
            if three_z.iter().all(|&k| e.class[f.act(k, x)] == e.class[x]) {
                1
            } else if near[x] {
                2
            } else {
                3
            }
        })
        .collect();
    Ok(StrongBoundaryReport {
        violations,
        examined: status.iter().filter(|&&s| s >= 2).count(),
        interior: status.iter().filter(|&&s| s == 1).count(),
        unexplained: (0..f.len()).filter(|&x| status[x] == 3).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct ClusterReport {
    pub violations: Vec<String>,
    pub axis: usize,
    /// Face multiplier used for the neighborhoods and its unclipped value.
    pub m_used: u64,
    pub m_full: BigInt,
    pub count: usize,
    pub bound: BigInt,
}

impl ClusterReport {
    pub fn ok(&self) -> bool {
        BigInt::from(self.count) <= self.bound
    }
}

/// `2^{22ℓ²}`.
pub fn cluster_bound(ell: usize) -> BigInt {
    BigInt::from(2).pow(22 * (ell * ell) as u32)
}

/// Greedy maximal family of `∂ᵢ(E, qA)` points whose neighborhoods
/// `φ(m·Aⁱ + 5qA)·z` are pairwise disjoint. `m` is clipped so the
/// neighborhood rectangle stays inside the working region.
pub fn count_boundary_clusters(f: &Frame, e: &EqRel, a: &Rect, eps: &BigRational, q: &BigRational, i: usize, m: u64, regime: Regime) -> Result<ClusterReport, VerifyError> {
    let violations = gate(regime, hypothesis(eps, q, 6, &rat(1, 2), "1/2"))?;
    let qa = a.scale(q)?;
    let five = a.scale(&(q * BigInt::from(5)))?;
    let face = a.face(i)?;
    let work = radius_i64(f.working());
    let fr = radius_i64(&face);
    let pad = radius_i64(&five);
    let mut m_used = m;
    for j in 0..f.ell {
        if fr[j] > 0 {
            let room = (work[j] - pad[j]).max(0) / fr[j];
            m_used = m_used.min(room as u64);
        }
    }
    let hood = face.scale_int(m_used).minkowski_sum(&five)?;
    let idx = f.rect_indices(&hood)?;
    let bd = boundary(f, e, &qa, i)?;
    let mut used = vec![false; f.len()];
    let mut count = 0;
    for z in (0..f.len()).filter(|&z| bd[z]) {
        if idx.iter().all(|&k| !used[f.act(k, z)]) {
            for &k in &idx {
                used[f.act(k, z)] = true;
            }
            count += 1;
        }
    }
    Ok(ClusterReport {
        violations,
        axis: i,
        m_used,
        m_full: BigInt::from(2).pow(19 * f.ell as u32),
        count,
        bound: cluster_bound(f.ell),
    })
}

/// Radius of `A` along each axis as machine integers, for reports.
pub fn radius_vec(a: &Rect) -> Vec<i64> {
    a.radius.iter().map(|r| r.to_i64().unwrap_or(i64::MAX)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::build_abelian_chart;
    use crate::group_catalog::Group;
    use crate::window::Window;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn line(n: u64, zee: i64, work: i64) -> Frame {
        let g = Group::parse("Z").unwrap();
        let c = build_abelian_chart(&g, &[BigInt::from(zee)], &rat(1000, 1)).unwrap();
        let w = Arc::new(Window::build(&g, n).unwrap());
        Frame::new(w, &c, None, &Rect::rec_i64(&[work]), 1 << 22).unwrap()
    }

    fn intervals(n: usize, len: usize) -> EqRel {
        EqRel::from_labels(&(0..n).map(|x| x / len).collect::<Vec<_>>())
    }

    /// The boundary definition evaluated with plain modular arithmetic.
    fn interval_boundary_oracle(n: i64, len: i64, r: i64) -> Vec<bool> {
        (0..n).map(|x| (x - r).rem_euclid(n) / len != (x + r).rem_euclid(n) / len).collect()
    }

    #[test]
    fn eqrel_basics() {
        let e = EqRel::from_labels(&["b", "a", "b", "c"]);
        assert_eq!(e.class, vec![0, 1, 0, 2]);
        assert_eq!(e.classes(), vec![vec![0, 2], vec![1], vec![3]]);
        assert!(EqRel::equality(4).refines(&e).is_ok());
        assert_eq!(e.refines(&EqRel::equality(4)), Err((0, 2)));
        assert!(e.refines(&EqRel::everything(4)).is_ok());
    }

    #[test]
    fn interval_boundary() {
        let f = line(100, 1, 40);
        let e = intervals(100, 10);
        let bd = boundary(&f, &e, &Rect::rec_i64(&[2]), 0).unwrap();
        let want: Vec<bool> = (0..100).map(|x| [8, 9, 0, 1].contains(&(x % 10))).collect();
        assert_eq!(bd, want);
        assert_eq!(bd, interval_boundary_oracle(100, 10, 2));
        assert!(boundary(&f, &EqRel::everything(100), &Rect::rec_i64(&[2]), 0).unwrap().iter().all(|b| !b));
    }

    #[test]
    fn exact_translate_is_rough() {
        let f = line(100, 1, 40);
        let a = Rect::rec_i64(&[10]);
        let set = f.image(&a, 40).unwrap();
        assert!(verify_rough(&f, &set, &a, &rat(1, 2), 40).is_ok());
        let mut missing = set.clone();
        missing.retain(|&y| y != 41);
        assert_eq!(verify_rough(&f, &missing, &a, &rat(1, 2), 40), Err(RoughFailure::Missing(41)));
        assert_eq!(verify_rough(&f, &set, &a, &rat(1, 10), 40), Err(RoughFailure::Fit));
        let mut extra = set;
        extra.push(70);
        assert_eq!(verify_rough(&f, &extra, &a, &rat(1, 2), 40), Err(RoughFailure::Outside(70)));
    }

    #[test]
    fn rectangular_certificates() {
        let f = line(99, 1, 40);
        let a = Rect::rec_i64(&[4]);
        let eps = rat(1, 1);
        // Nine exact translates of Rec(5).
        let e = EqRel::from_labels(&(0..99).map(|x| x / 11).collect::<Vec<_>>());
        let cert = verify_rectangular(&f, &e, &a, &eps, 2).unwrap();
        for wit in cert.witnesses.iter().flatten() {
            assert_eq!(radius_vec(&wit.b), vec![5]);
            assert_eq!(wit.delta, rat(2, 5));
        }
        let too_big = Rect::rec_i64(&[20]);
        assert!(matches!(
            verify_rectangular(&f, &e, &too_big, &eps, 2),
            Err(RectFailure { kind: RectFailureKind::NoWitness(_), .. })
        ));
        // A singleton on X^H has a flat B, which cannot hold 2Z.
        let mut labels: Vec<usize> = (0..99).map(|x| x / 11).collect();
        labels[98] = 100;
        let e = EqRel::from_labels(&labels);
        assert!(matches!(verify_rectangular(&f, &e, &a, &eps, 2), Err(RectFailure { class: 9, .. })));
    }

    #[test]
    fn singleton_off_base_is_vacuous() {
        let g = Group::parse("Z").unwrap();
        let c = build_abelian_chart(&g, &[BigInt::from(1)], &rat(1000, 1)).unwrap();
        let w = Arc::new(Window::build(&g, 20).unwrap());
        let mut f = Frame::new(w, &c, None, &Rect::rec_i64(&[9]), 1 << 20).unwrap();
        f.xh[0] = false;
        let mut labels: Vec<usize> = (0..20).map(|x| 1 + (x + 19) % 20 / 10).collect();
        labels[0] = 0;
        let e = EqRel::from_labels(&labels);
        let cert = verify_rectangular(&f, &e, &Rect::rec_i64(&[4]), &rat(1, 1), 1).unwrap();
        assert!(cert.witnesses[e.class[0] as usize].is_none());
    }

    #[test]
    fn rebasing_doubles_delta() {
        let g = Group::parse("Z").unwrap();
        let c = build_abelian_chart(&g, &[BigInt::from(1)], &rat(1000, 1)).unwrap();
        let w = Arc::new(Window::build(&g, 99).unwrap());
        let f = Frame::new(w, &c, None, &Rect::rec_i64(&[40]), 1 << 20).unwrap();
        let e = EqRel::from_labels(&(0..99).map(|x| x / 11).collect::<Vec<_>>());
        let a = Rect::rec_i64(&[4]);
        let cert = verify_rectangular(&f, &e, &a, &rat(1, 1), 2).unwrap();
        let base = cert.witnesses[2].as_ref().unwrap().base;
        let (c0, w0) = find_base(&f, &e, &cert, &a, base, 1).unwrap();
        assert_eq!(c0, e.class[base]);
        assert_eq!(w0.delta, rat(4, 5));
        let (_, w1) = find_base(&f, &e, &cert, &a, (base + 1) % 99, 1).unwrap();
        assert_eq!(radius_vec(&w1.b), vec![5]);
        assert_eq!(find_base(&f, &e, &Certificate { witnesses: vec![None; 9] }, &a, 5, 1), Err(FindError::NoClass));
    }

    #[test]
    fn faces_and_strong_boundary_on_intervals() {
        let g = Group::parse("Z").unwrap();
        let c = build_abelian_chart(&g, &[BigInt::from(1)], &rat(1000, 1)).unwrap();
        let w = Arc::new(Window::build(&g, 99).unwrap());
        let f = Frame::new(w, &c, None, &Rect::rec_i64(&[40]), 1 << 20).unwrap();
        let e = EqRel::from_labels(&(0..99).map(|x| x / 11).collect::<Vec<_>>());
        let a = Rect::rec_i64(&[8]);
        let eps = rat(1, 1);
        let cert = verify_rectangular(&f, &e, &Rect::rec_i64(&[4]), &eps, 2).unwrap();
        let q = rat(1, 4);
        let faces = verify_faces(&f, &e, &cert, &a, &rat(1, 100), &q, Regime::Relaxed).unwrap();
        assert!(faces.ok() && faces.violations.is_empty() && faces.checked[0] == 36);
        let wide = Rect::rec_i64(&[25]);
        let sb = verify_strong_boundary(&f, &e, &wide, &rat(1, 1000), &rat(1, 25), Regime::Relaxed).unwrap();
        assert!(sb.ok() && sb.violations.is_empty());
        // φ(3Z) stays inside a class of 11 only from its 5 middle points.
        assert_eq!((sb.interior, sb.examined), (45, 54));
        assert!(matches!(
            verify_strong_boundary(&f, &e, &wide, &rat(1, 10), &rat(1, 25), Regime::Strict),
            Err(VerifyError::Refused(_))
        ));
    }

    #[test]
    fn clusters_stay_below_bound() {
        let f = line(100, 1, 40);
        let e = intervals(100, 10);
        let r = count_boundary_clusters(&f, &e, &Rect::rec_i64(&[8]), &rat(1, 100), &rat(1, 4), 0, 1 << 19, Regime::Relaxed).unwrap();
        assert_eq!(cluster_bound(1), BigInt::from(4194304));
        assert!(r.ok());
        // Neighborhoods are radius-10 intervals; greedy takes 0, 21, 48, 69.
        assert_eq!(r.count, 4);
    }

    #[test]
    fn saturation_paths_agree_on_torus() {
        let g = Group::parse("Z^2 x C2").unwrap();
        let c = build_abelian_chart(&g, &[BigInt::from(1), BigInt::from(1)], &rat(1000, 1)).unwrap();
        let w = Arc::new(Window::build(&g, 12).unwrap());
        let f = Frame::new(w, &c, None, &Rect::rec(vec![BigInt::from(5), BigInt::from(5)], vec![2]), 1 << 20).unwrap();
        assert!(f.steps.is_some());
        let mut s = 7u64;
        for _ in 0..20 {
            let labels: Vec<u64> = (0..f.len())
                .map(|x| {
                    let v = f.window.quotient.decode(x);
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (v[0] / 4 + 3 * (v[1] / 3)) as u64 + if s >> 60 == 0 { 100 } else { 0 }
                })
                .collect();
            let e = EqRel::from_labels(&labels);
            for r in [[1, 0], [0, 2], [1, 1], [2, 3]] {
                let rect = Rect::rec(r.iter().map(|&k| BigInt::from(k)).collect(), vec![2]);
                assert_eq!(saturated(&f, &e, &rect).unwrap(), saturated_brute(&f, &e, &rect).unwrap());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn boundary_is_antimonotone(cuts in proptest::collection::btree_set(0usize..60, 1..12), extra in proptest::collection::btree_set(0usize..60, 0..8), r in 1i64..4) {
            let f = line(60, 1, 25);
            let label = |set: &std::collections::BTreeSet<usize>| -> Vec<usize> {
                (0..60).map(|x| set.iter().filter(|&&c| c <= x).count()).collect()
            };
            let coarse = EqRel::from_labels(&label(&cuts));
            let fine = EqRel::from_labels(&label(&cuts.union(&extra).copied().collect()));
            prop_assert!(fine.refines(&coarse).is_ok());
            let a = Rect::rec_i64(&[r]);
            let bc = boundary(&f, &coarse, &a, 0).unwrap();
            let bf = boundary(&f, &fine, &a, 0).unwrap();
            for x in 0..60 {
                prop_assert!(!bc[x] || bf[x]);
            }
        }
    }
}
