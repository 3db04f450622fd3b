//! Building a rectangular relation whose facial boundaries stay away from
//! those of a given list of relations, plus the orthogonality check, the
//! failure-count sweep and the exact parameter report.

use crate::frame::{rect_from, Frame, FrameError};
use crate::markers::{build_marker_set, partition_marker, MarkerError};
use crate::rect_algebra::{rat, Rect, RectError};
use crate::rough::{boundary, minimal_delta, saturated, EqRel, Regime, RoughWitness};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::HashMap;
use std::fmt;

#[derive(Clone, Debug)]
pub struct OrthoParams {
    pub a: Rect,
    pub eps: BigRational,
    pub q: BigRational,
    pub b: usize,
    pub p: u64,
    /// Separation between parallel faces of nearby blocks, in units of `aᵢ`.
    pub guard2: u64,
    /// Separation from existing boundaries, in units of `ℓ·q·aᵢ`.
    pub guard3: u64,
    pub regime: Regime,
}

impl OrthoParams {
    /// Full-strength constants for dimension `ell`.
    pub fn strict(a: Rect, eps: BigRational, q: BigRational, b: usize) -> OrthoParams {
        let ell = a.ell() as u32;
        OrthoParams { a, eps, q, b, p: 1u64 << (14 * ell).min(63), guard2: 2, guard3: 64, regime: Regime::Strict }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "ok  " } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug)]
pub struct ParamReport {
    pub strict: Vec<Check>,
    pub relaxed: Vec<Check>,
    /// The forbidden-interval budget at the configured constants, for
    /// information only.
    pub budget: Vec<String>,
}

impl ParamReport {
    pub fn passes(&self, regime: Regime) -> bool {
        match regime {
            Regime::Strict => self.strict.iter().all(|c| c.pass),
            Regime::Relaxed => self.relaxed.iter().all(|c| c.pass),
        }
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[full-size constants]")?;
        for c in &self.strict {
            writeln!(f, "{c}")?;
        }
        writeln!(f, "[configured constants]")?;
        for c in &self.relaxed {
            writeln!(f, "{c}")?;
        }
        for line in &self.budget {
            writeln!(f, "info {line}")?;
        }
        Ok(())
    }
}

fn pow2(e: usize) -> BigInt {
    BigInt::from(2).pow(e as u32)
}

/// `1/(4·306·ℓ·b·2^{22ℓ²})`.
pub fn q_upper_bound(ell: usize, b: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(4 * 306 * ell * b) * pow2(22 * ell * ell))
}

fn contained_check(name: &str, inner: &Rect, dom: &Rect) -> Check {
    let slack: Vec<String> = (0..inner.ell())
        .map(|i| (dom.hi(i).min(-dom.lo(i)) - inner.hi(i).max(-inner.lo(i))).to_string())
        .collect();
    Check { name: name.into(), pass: inner.contained_in(dom), detail: format!("slack per axis [{}]", slack.join(", ")) }
}

fn fits_check(name: &str, small: &Rect, big: &Rect) -> Check {
    let slack: Vec<String> = small.radius.iter().zip(&big.radius).map(|(s, b)| (b - s).to_string()).collect();
    Check {
        name: name.into(),
        pass: small.fits_in(big).unwrap_or(false),
        detail: format!("slack per axis [{}]", slack.join(", ")),
    }
}

fn less_check(name: &str, lo: &BigRational, hi: &BigRational) -> Check {
    Check { name: name.into(), pass: lo < hi, detail: format!("{lo} < {hi} (slack {})", hi - lo) }
}

/// Evaluates the hypotheses of the construction with exact rationals.
pub fn check_parameters(zee: &Rect, dom: &Rect, prm: &OrthoParams) -> ParamReport {
    let ell = prm.a.ell();
    let a = &prm.a;
    let eps_a = a.scale(&prm.eps).unwrap_or_else(|_| a.scale_int(0));
    let big = |k: BigInt| a.scale(&BigRational::from(k)).expect("positive");
    let strict = vec![
        contained_check("2^{40l} A in dom", &big(pow2(40 * ell)), dom),
        fits_check(
            "2*36^2*2^{14l} Z fits eps A",
            &zee.scale(&BigRational::from(BigInt::from(2 * 36 * 36) * pow2(14 * ell))).expect("positive"),
            &eps_a,
        ),
        less_check("8 eps < q", &(&prm.eps * BigInt::from(8)), &prm.q),
        less_check("q < 1/(4*306*l*b*2^{22l^2})", &prm.q, &q_upper_bound(ell, prm.b)),
    ];
    let relaxed = vec![
        fits_check("2 Z fits eps A", &zee.scale_int(2), &eps_a),
        contained_check("(18p+2) A in dom", &a.scale_int(18 * prm.p + 2), dom),
        less_check("0 < eps", &BigRational::zero(), &prm.eps),
        less_check("eps < 1", &prm.eps, &BigRational::one()),
        less_check("0 < q", &BigRational::zero(), &prm.q),
        less_check("q < 1", &prm.q, &BigRational::one()),
    ];
    let n1 = BigInt::from(84).pow(ell as u32);
    let n2 = pow2(22 * ell * ell);
    let budget = (0..ell)
        .map(|i| {
            let ai = BigRational::from(a.radius[i].clone());
            let range = &ai * BigInt::from(prm.p);
            let clause2 = &n1 * BigInt::from(4) * BigInt::from(2 * prm.guard2 + 1);
            let clause3 = BigRational::from(&n2 * BigInt::from(2 * prm.b))
                * (&prm.q * &ai * BigInt::from(2 * prm.guard3 * ell as u64) + BigRational::one());
            let left = &range - &ai * clause2 - clause3;
            format!("axis {i}: p*a - 4*N1*(2*g2+1)*a - 2b*N2*(2*g3*l*q*a+1) = {left}")
        })
        .collect();
    ParamReport { strict, relaxed, budget }
}

#[derive(Debug, thiserror::Error)]
pub enum OrthoError {
    #[error("parameters fail: {0:?}")]
    Parameters(Vec<String>),
    #[error("point {x} is unsaturated for {count} relations, more than b = {b}")]
    Bound { x: usize, count: usize, b: usize },
    #[error("no admissible radius for marker {y} on axis {axis}; forbidden {forbidden:?} within [{lo}, {hi}]")]
    NoAdmissible { y: usize, axis: usize, lo: i64, hi: i64, forbidden: Vec<(i64, i64)> },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error(transparent)]
    Rect(#[from] RectError),
}

#[derive(Clone, Debug)]
pub struct OrthoOutput {
    pub f: EqRel,
    pub markers: Vec<usize>,
    /// Parts of the marker partition, as positions into `markers`.
    pub parts: Vec<Vec<usize>>,
    /// Radius vector per marker.
    pub d: Vec<Vec<i64>>,
    /// The relation generated by membership in the blocks `R_y`.
    pub cover: EqRel,
    /// Points whose offsets to some `y ∈ 𝒮(x)` fall outside every block.
    pub unplaced: usize,
}

impl OrthoOutput {
    pub fn certificate(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("markers {}\n", self.markers.len()));
        for (j, part) in self.parts.iter().enumerate() {
            let pts: Vec<String> = part.iter().map(|&m| self.markers[m].to_string()).collect();
            s.push_str(&format!("part {j}: {}\n", pts.join(" ")));
        }
        for (m, d) in self.d.iter().enumerate() {
            let ds: Vec<String> = d.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("d {} = ({})\n", self.markers[m], ds.join(", ")));
        }
        for (c, w) in self.f.witnesses.iter().enumerate() {
            match w {
                Some(w) => s.push_str(&format!("class {c}: {w}\n")),
                None => s.push_str(&format!("class {c}: no witness\n")),
            }
        }
        s
    }
}

fn to_i64(x: &BigInt) -> i64 {
    x.to_i64().expect("small")
}

fn ceil_rat(x: &BigRational) -> i64 {
    to_i64(&x.ceil().to_integer())
}

fn merge(mut iv: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    iv.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::new();
    for (l, h) in iv {
        match out.last_mut() {
            Some(last) if l <= last.1 + 1 => last.1 = last.1.max(h),
            _ => out.push((l, h)),
        }
    }
    out
}

/// Least `d ∈ [lo, hi]` outside every closed interval in `forbidden`.
fn least_allowed(lo: i64, hi: i64, forbidden: &[(i64, i64)]) -> Option<i64> {
    let mut d = lo;
    for &(l, h) in forbidden {
        if h < d {
            continue;
        }
        if l > d {
            break;
        }
        d = h + 1;
    }
    (d <= hi).then_some(d)
}

/// Offsets of `D_y^α` along one axis, for `α ∈ {−1, 0, 1}`.
fn block_range(d: i64, alpha: i8) -> (i64, i64) {
    match alpha {
        -1 => (-9 * d - 1, -d - 1),
        0 => (-d, d),
        _ => (d + 1, 9 * d + 1),
    }
}

fn block_alpha(d: i64, v: i64) -> Option<i8> {
    if v.abs() <= d {
        Some(0)
    } else if v > d && v <= 9 * d + 1 {
        Some(1)
    } else if v < -d && v >= -9 * d - 1 {
        Some(-1)
    } else {
        None
    }
}

/// Runs the block construction against `existing`.
pub fn build_orthogonal_relation(f: &Frame, prm: &OrthoParams, existing: &[EqRel]) -> Result<OrthoOutput, OrthoError> {
    let report = check_parameters(&f.zee, &f.dom, prm);
    if prm.regime == Regime::Strict && !report.passes(Regime::Strict) {
        let failed = report.strict.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
        return Err(OrthoError::Parameters(failed));
    }
    let ell = f.ell;
    let a = &prm.a;
    let av: Vec<i64> = a.radius.iter().map(to_i64).collect();
    let p = prm.p as i64;

    // Per-point bound on unsaturated relations.
    let sats: Vec<Vec<bool>> =
        existing.iter().map(|e| saturated(f, e, &a.scale_int(8 * prm.p))).collect::<Result<_, _>>()?;
    if let Some((x, count)) = (0..f.len())
        .filter(|&x| f.xh[x])
        .map(|x| (x, sats.iter().filter(|s| !s[x]).count()))
        .find(|&(_, c)| c > prm.b)
    {
        return Err(OrthoError::Bound { x, count, b: prm.b });
    }

    // Markers and their partition.
    let order: Vec<usize> = (0..f.len()).collect();
    let k = f.symmetric_closure(&a.scale(&rat(3 * p, 4))?)?;
    let ys = build_marker_set(&f.window, &k, &f.xh, &order)?.members;
    let mut ymask = vec![false; f.len()];
    for &y in &ys {
        ymask[y] = true;
    }
    let near = a.scale_int(13 * prm.p);
    let f13 = f.symmetric_closure(&near)?;
    let pos: HashMap<usize, usize> = ys.iter().enumerate().map(|(j, &y)| (y, j)).collect();
    let parts: Vec<Vec<usize>> =
        partition_marker(&f.window, &f13, &ymask, &order)?.into_iter().map(|p| p.iter().map(|y| pos[y]).collect()).collect();

    // Boundaries of the existing relations at scale qA, per axis.
    let qa = a.scale(&prm.q)?;
    let bds: Vec<Vec<Vec<bool>>> =
        existing.iter().map(|e| (0..ell).map(|i| boundary(f, e, &qa, i)).collect::<Result<_, _>>()).collect::<Result<_, _>>()?;
    let any_bd: Vec<Vec<bool>> =
        (0..ell).map(|i| (0..f.len()).map(|x| bds.iter().any(|b| b[i][x])).collect()).collect();

    // Radii, least admissible value first.
    let near_idx = f.rect_indices(&near)?;
    let seven_idx = f.rect_indices(&a.scale_int(7 * prm.p))?;
    let g2: Vec<i64> = av.iter().map(|&ai| ai * prm.guard2 as i64).collect();
    let g3: Vec<i64> = av
        .iter()
        .map(|&ai| ceil_rat(&(&prm.q * BigInt::from(ai * prm.guard3 as i64 * ell as i64))))
        .collect();
    let mut d: Vec<Option<Vec<i64>>> = vec![None; ys.len()];
    for part in &parts {
        for &m in part {
            let y = ys[m];
            let mut forb: Vec<Vec<(i64, i64)>> = vec![Vec::new(); ell];
            for &kk in &near_idx {
                let u = f.vector(kk);
                if u[..ell].iter().all(|&c| c == 0) && f.gvec(kk).tors.iter().all(|t| t.is_zero()) {
                    continue;
                }
                let y2 = f.act(kk, y);
                if !ymask[y2] {
                    continue;
                }
                if let Some(d2) = &d[pos[&y2]] {
                    for i in 0..ell {
                        for c in [u[i] + d2[i], u[i] - d2[i], -u[i] + d2[i], -u[i] - d2[i]] {
                            forb[i].push((c - g2[i] + 1, c + g2[i] - 1));
                        }
                    }
                }
            }
            for &kk in &seven_idx {
                let z = f.act(kk, y);
                let u = f.vector(kk);
                for i in 0..ell {
                    if any_bd[i][z] {
                        for c in [u[i], -u[i]] {
                            forb[i].push((c - g3[i] + 1, c + g3[i] - 1));
                        }
                    }
                }
            }
            let mut dy = Vec::with_capacity(ell);
            for i in 0..ell {
                let merged = merge(std::mem::take(&mut forb[i]));
                let (lo, hi) = (p * av[i], 2 * p * av[i]);
                match least_allowed(lo, hi, &merged) {
                    Some(v) => dy.push(v),
                    None => {
                        let forbidden = merged.into_iter().filter(|&(l, h)| h >= lo && l <= hi).collect();
                        return Err(OrthoError::NoAdmissible { y, axis: i, lo, hi, forbidden });
                    }
                }
            }
            d[m] = Some(dy);
        }
    }
    let d: Vec<Vec<i64>> = d.into_iter().map(|v| v.expect("every marker is in a part")).collect();

    // Cover memberships x ∈ R_y.
    let mut member_of: Vec<Vec<u32>> = vec![Vec::new(); f.len()];
    for (m, &y) in ys.iter().enumerate() {
        let dy = rect_from(&vec![0; ell], &d[m], &f.gamma);
        for kk in f.rect_indices(&dy)? {
            member_of[f.act(kk, y)].push(m as u32);
        }
    }
    for v in member_of.iter_mut() {
        v.sort_unstable();
        v.dedup();
    }
    let cover = EqRel::from_labels(&member_of);
    let mut meets: Vec<Vec<u32>> = vec![Vec::new(); ys.len()];
    for v in &member_of {
        for &m in v {
            meets[m as usize].extend_from_slice(v);
        }
    }
    for v in meets.iter_mut() {
        v.sort_unstable();
        v.dedup();
    }

    // Signatures: 𝒮(x) and the block index of x relative to each member.
    type Sig = Vec<(u32, Vec<i8>)>;
    let sigs: Vec<(Sig, bool)> = (0..f.len())
        .into_par_iter()
        .map(|x| {
            let mut s: Vec<u32> = member_of[x].iter().flat_map(|&m| meets[m as usize].iter().copied()).collect();
            s.sort_unstable();
            s.dedup();
            let mut placed = true;
            let sig = s
                .into_iter()
                .map(|m| {
                    let alpha = match f.offset(ys[m as usize], x) {
                        Some(kk) => {
                            let v = f.vector(kk);
                            (0..ell)
                                .map(|i| block_alpha(d[m as usize][i], v[i]).unwrap_or_else(|| {
                                    placed = false;
                                    i8::MIN
                                }))
                                .collect()
                        }
                        None => {
                            placed = false;
                            vec![i8::MIN; ell]
                        }
                    };
                    (m, alpha)
                })
                .collect();
            (sig, placed)
        })
        .collect();
    let unplaced = sigs.iter().filter(|(_, ok)| !ok).count();
    let mut has_base: HashMap<&Sig, bool> = HashMap::new();
    for (x, (sig, _)) in sigs.iter().enumerate() {
        if !sig.is_empty() && f.xh[x] {
            has_base.insert(sig, true);
        }
    }
    #[derive(Hash, PartialEq, Eq, Clone)]
    enum Label {
        Group(usize),
        Alone(usize),
    }
    let mut group_id: HashMap<&Sig, usize> = HashMap::new();
    let labels: Vec<Label> = sigs
        .iter()
        .enumerate()
        .map(|(x, (sig, _))| {
            if has_base.contains_key(sig) {
                let next = group_id.len();
                Label::Group(*group_id.entry(sig).or_insert(next))
            } else {
                Label::Alone(x)
            }
        })
        .collect();
    let mut rel = EqRel::from_labels(&labels);

    // Witnesses from the interval intersection seen from the first base point.
    let delta_full = &prm.eps / BigInt::from(18 * prm.p);
    let classes = rel.classes();
    let witnesses: Vec<Option<RoughWitness>> = classes
        .par_iter()
        .map(|members| {
            let x = *members.iter().find(|&&x| f.xh[x])?;
            let sig = &sigs[x].0;
            if sig.is_empty() {
                return None;
            }
            let mut mu = vec![i64::MIN; ell];
            let mut nu = vec![i64::MAX; ell];
            for (m, alpha) in sig {
                let m = *m as usize;
                let u = f.vector(f.offset(x, ys[m])?);
                for i in 0..ell {
                    if alpha[i] == i8::MIN {
                        return None;
                    }
                    let (l, h) = block_range(d[m][i], alpha[i]);
                    mu[i] = mu[i].max(u[i] + l);
                    nu[i] = nu[i].min(u[i] + h);
                }
            }
            if (0..ell).any(|i| mu[i] > nu[i]) {
                return None;
            }
            let radius: Vec<i64> = (0..ell).map(|i| Integer::div_floor(&(nu[i] - mu[i]), &2)).collect();
            let center: Vec<i64> = (0..ell)
                .map(|i| {
                    let c1 = mu[i] + radius[i];
                    let c2 = nu[i] - radius[i];
                    if c2.abs() > c1.abs() { c2 } else { c1 }
                })
                .collect();
            let b = rect_from(&center, &radius, &f.gamma);
            let delta = match prm.regime {
                Regime::Strict => delta_full.clone(),
                Regime::Relaxed => match minimal_delta(&f.zee, &b) {
                    Some(m) if m > delta_full => m,
                    _ => delta_full.clone(),
                },
            };
            Some(RoughWitness { b, delta, base: x })
        })
        .collect();
    rel.witnesses = witnesses;
    Ok(OrthoOutput { f: rel, markers: ys, parts, d, cover, unplaced })
}

/// `φ(30ℓ·A)·∂ᵢ(E, A) ∩ φ(30ℓ·A)·∂ᵢ(F, A) = ∅` for every axis; otherwise
/// the axis and a common point.
pub fn is_orthogonal(f: &Frame, e: &EqRel, g: &EqRel, a: &Rect) -> Result<Option<(usize, usize)>, FrameError> {
    let grow = a.scale_int(30 * f.ell as u64);
    for i in 0..f.ell {
        let de = f.dilate(&boundary(f, e, a, i)?, &grow)?;
        let dg = f.dilate(&boundary(f, g, a, i)?, &grow)?;
        if let Some(x) = (0..f.len()).find(|&x| de[x] && dg[x]) {
            return Ok(Some((i, x)));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, Default)]
pub struct OrthoSeqReport {
    pub violations: Vec<String>,
    pub pairs: usize,
    pub max_failures: usize,
    /// Pairs with more than `ℓ` failing indices, with those indices.
    pub over: Vec<(usize, usize, Vec<usize>)>,
    /// Number of pairs per failure count.
    pub histogram: Vec<usize>,
}

impl OrthoSeqReport {
    pub fn ok(&self) -> bool {
        self.over.is_empty()
    }
}

/// Counts, per pair, the relations separating it; at most `ℓ` are allowed.
pub fn verify_orthoseq(
    f: &Frame,
    rels: &[EqRel],
    eps: &BigRational,
    q: &BigRational,
    pairs: &[(usize, usize)],
    regime: Regime,
) -> Result<OrthoSeqReport, OrthoError> {
    let ell = f.ell;
    let mut violations = Vec::new();
    if !(eps * BigInt::from(12) < *q) {
        violations.push("12*eps < q".to_string());
    }
    if !(*q < rat(1, 24 * ell as i64)) {
        violations.push(format!("q < 1/{}", 24 * ell));
    }
    if !(eps.is_positive() && *eps < rat(1, 4)) {
        violations.push("0 < eps < 1/4".to_string());
    }
    if regime == Regime::Strict && !violations.is_empty() {
        return Err(OrthoError::Parameters(violations));
    }
    let mut report = OrthoSeqReport { violations, pairs: pairs.len(), histogram: vec![0; rels.len() + 1], ..Default::default() };
    for &(x, y) in pairs {
        let fails: Vec<usize> = (0..rels.len()).filter(|&n| !rels[n].same(x, y)).collect();
        report.histogram[fails.len()] += 1;
        report.max_failures = report.max_failures.max(fails.len());
        if fails.len() > ell {
            report.over.push((x, y, fails));
        }
    }
    Ok(report)
}

/// All pairs `(x, φ(v)·x)` with `v ∈ 𝒵`, or a seeded sample of `limit` of them.
pub fn zee_pairs(f: &Frame, limit: Option<(usize, u64)>) -> Result<Vec<(usize, usize)>, FrameError> {
    let idx = f.rect_indices(&f.zee)?;
    let total = f.len() * idx.len();
    let pick = |t: usize| {
        let (x, j) = (t / idx.len(), t % idx.len());
        (x, f.act(idx[j], x))
    };
    Ok(match limit {
        Some((n, seed)) if n < total => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| pick(rng.gen_range(0..total))).collect()
        }
        _ => (0..total).map(pick).collect(),
    })
}
