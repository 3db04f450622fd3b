//! Finite windows: periodic quotients of catalog groups acting by left
//! translation, coset spaces of those quotients, and charts realized on them.

use crate::charts::Chart;
use crate::group_catalog::{Atom, Elem, Group, Membership, Subgroup};
use crate::rect_algebra::{GVec, Rect};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::ToPrimitive;
use std::collections::{HashMap, HashSet, VecDeque};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("period must be at least 2, got {0}")]
    Period(u64),
    #[error("window would have {0} points, above the budget {1}")]
    TooLarge(u128, u64),
    #[error("coset index explosion: subgroup closure exceeds {0} elements")]
    Index(u64),
    #[error("chart not injective on the window: phi({r:?})·x = phi({s:?})·x at point {x}")]
    Collision { r: Vec<i64>, s: Vec<i64>, x: usize },
    #[error("region is not contained in the chart domain")]
    Region,
    #[error("region has {0} vectors, above the budget {1}")]
    RegionBudget(BigInt, u64),
}

/// `G` reduced coordinatewise modulo the period; a genuine finite quotient group.
#[derive(Clone, Debug)]
pub struct Quotient {
    pub group: Group,
    pub radices: Vec<i64>,
    strides: Vec<usize>,
    pub size: usize,
    abelian: bool,
}

const STACK_DIM: usize = 48;

impl Quotient {
    pub fn new(group: &Group, n: u64, budget: u64) -> Result<Quotient, WindowError> {
        if n < 2 {
            return Err(WindowError::Period(n));
        }
        let radices: Vec<i64> = group
            .coord_moduli()
            .into_iter()
            .map(|m| m.unwrap_or(n) as i64)
            .collect();
        let total: u128 = radices.iter().map(|&r| r as u128).product();
        if total > budget as u128 || radices.len() > STACK_DIM {
            return Err(WindowError::TooLarge(total, budget));
        }
        let mut strides = vec![1usize; radices.len()];
        for k in (0..radices.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * radices[k + 1] as usize;
        }
        let abelian = !group.atoms.contains(&Atom::Heis);
        Ok(Quotient { group: group.clone(), radices, strides, size: total as usize, abelian })
    }

    pub fn decode(&self, idx: usize) -> Vec<i64> {
        self.radices
            .iter()
            .zip(&self.strides)
            .map(|(&r, &s)| ((idx / s) % r as usize) as i64)
            .collect()
    }

    pub fn encode(&self, c: &[i64]) -> usize {
        c.iter()
            .zip(&self.radices)
            .zip(&self.strides)
            .map(|((&x, &r), &s)| x.rem_euclid(r) as usize * s)
            .sum()
    }

    pub fn reduce(&self, g: &Elem) -> usize {
        let c: Vec<i64> = g
            .0
            .iter()
            .zip(&self.radices)
            .map(|(x, &r)| x.mod_floor(&BigInt::from(r)).to_i64().expect("reduced"))
            .collect();
        self.encode(&c)
    }

    pub fn mul(&self, x: usize, y: usize) -> usize {
        if self.abelian {
            let mut out = 0usize;
            for (&r, &s) in self.radices.iter().zip(&self.strides) {
                let r = r as usize;
                out += ((x / s % r + y / s % r) % r) * s;
            }
            return out;
        }
        let d = self.radices.len();
        let (mut a, mut b) = ([0i64; STACK_DIM], [0i64; STACK_DIM]);
        self.decode_into(x, &mut a[..d]);
        self.decode_into(y, &mut b[..d]);
        for (atom, &o) in self.group.atoms.iter().zip(&self.group.offsets) {
            match atom {
                Atom::Heis => {
                    let n = self.radices[o + 2];
                    let c = a[o + 2] + b[o + 2] - (b[o] * a[o + 1]) % n;
                    a[o] += b[o];
                    a[o + 1] += b[o + 1];
                    a[o + 2] = c;
                }
                _ => a[o] += b[o],
            }
        }
        self.encode(&a[..d])
    }

    pub fn inv(&self, x: usize) -> usize {
        let d = self.radices.len();
        let mut a = [0i64; STACK_DIM];
        self.decode_into(x, &mut a[..d]);
        for (atom, &o) in self.group.atoms.iter().zip(&self.group.offsets) {
            match atom {
                Atom::Heis => {
                    let c = -a[o + 2] - (a[o] * a[o + 1]) % self.radices[o + 2];
                    a[o] = -a[o];
                    a[o + 1] = -a[o + 1];
                    a[o + 2] = c;
                }
                _ => a[o] = -a[o],
            }
        }
        self.encode(&a[..d])
    }

    fn decode_into(&self, idx: usize, out: &mut [i64]) {
        for ((o, &r), &s) in out.iter_mut().zip(&self.radices).zip(&self.strides) {
            *o = ((idx / s) % r as usize) as i64;
        }
    }

    pub fn identity(&self) -> usize {
        0
    }

    /// Elements of the subgroup generated by `gens`, sorted.
    pub fn closure(&self, gens: &[usize], cap: u64) -> Result<Vec<usize>, WindowError> {
        let mut seen: HashSet<usize> = HashSet::from([0]);
        let mut queue = VecDeque::from([0usize]);
        let mut steps: Vec<usize> = gens.to_vec();
        steps.extend(gens.iter().map(|&g| self.inv(g)));
        while let Some(x) = queue.pop_front() {
            for &s in &steps {
                let y = self.mul(x, s);
                if seen.insert(y) {
                    if seen.len() as u64 > cap {
                        return Err(WindowError::Index(cap));
                    }
                    queue.push_back(y);
                }
            }
        }
        let mut out: Vec<usize> = seen.into_iter().collect();
        out.sort_unstable();
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub enum WindowKind {
    Regular,
    Coset {
        /// Image of the subgroup in the quotient, sorted.
        hbar: Vec<usize>,
        /// Least quotient element of each coset.
        reps: Vec<usize>,
        coset_of: Vec<u32>,
    },
}

#[derive(Clone, Debug)]
pub struct Window {
    pub quotient: Quotient,
    pub period: u64,
    pub kind: WindowKind,
    pub len: usize,
}

/// Largest quotient a window will be built over.
pub const WINDOW_BUDGET: u64 = 4_000_000;

impl Window {
    pub fn build(g: &Group, n: u64) -> Result<Window, WindowError> {
        let quotient = Quotient::new(g, n, WINDOW_BUDGET)?;
        let len = quotient.size;
        Ok(Window { quotient, period: n, kind: WindowKind::Regular, len })
    }

    pub fn build_coset(g: &Group, h: &Subgroup, n: u64, bound: u64) -> Result<Window, WindowError> {
        let quotient = Quotient::new(g, n, WINDOW_BUDGET)?;
        let gens: Vec<usize> = h.generators.iter().map(|x| quotient.reduce(x)).collect();
        let hbar = quotient.closure(&gens, bound)?;
        let mut coset_of = vec![u32::MAX; quotient.size];
        let mut reps = Vec::new();
        for x in 0..quotient.size {
            if coset_of[x] != u32::MAX {
                continue;
            }
            let id = reps.len() as u32;
            reps.push(x);
            for &k in &hbar {
                coset_of[quotient.mul(x, k)] = id;
            }
        }
        let len = reps.len();
        Ok(Window { quotient, period: n, kind: WindowKind::Coset { hbar, reps, coset_of }, len })
    }

    /// Action of a quotient element on a point.
    pub fn act_q(&self, q: usize, x: usize) -> usize {
        match &self.kind {
            WindowKind::Regular => self.quotient.mul(q, x),
            WindowKind::Coset { reps, coset_of, .. } => coset_of[self.quotient.mul(q, reps[x])] as usize,
        }
    }

    pub fn act(&self, g: &Elem, x: usize) -> usize {
        self.act_q(self.quotient.reduce(g), x)
    }

    /// Quotient elements fixing `x`, by scanning the whole quotient.
    pub fn stabilizer(&self, x: usize) -> Vec<usize> {
        (0..self.quotient.size).filter(|&q| self.act_q(q, x) == x).collect()
    }

    /// Whether `Stab(x)` equals the image of some member of `family`; the empty
    /// family stands for the trivial subgroup, whose image is the reduction kernel.
    pub fn in_family(&self, x: usize, family: &[Subgroup]) -> bool {
        let stab = self.stabilizer(x);
        if family.is_empty() {
            return stab == vec![0];
        }
        family.iter().any(|h| {
            let gens: Vec<usize> = h.generators.iter().map(|y| self.quotient.reduce(y)).collect();
            self.quotient.closure(&gens, self.quotient.size as u64).map_or(false, |c| c == stab)
        })
    }

    /// `X^ℋ` computed from the coset structure: `Stab(rH̄) = r·H̄·r⁻¹`.
    pub fn family_points(&self, family: &[Subgroup]) -> Vec<bool> {
        let images: Vec<Vec<usize>> = family
            .iter()
            .map(|h| {
                let gens: Vec<usize> = h.generators.iter().map(|y| self.quotient.reduce(y)).collect();
                self.quotient.closure(&gens, self.quotient.size as u64).unwrap_or_default()
            })
            .collect();
        (0..self.len)
            .map(|x| {
                let stab: Vec<usize> = match &self.kind {
                    WindowKind::Regular => vec![0],
                    WindowKind::Coset { hbar, reps, .. } => {
                        let r = reps[x];
                        let ri = self.quotient.inv(r);
                        let mut s: Vec<usize> =
                            hbar.iter().map(|&k| self.quotient.mul(self.quotient.mul(r, k), ri)).collect();
                        s.sort_unstable();
                        s
                    }
                };
                if family.is_empty() {
                    stab == vec![0]
                } else {
                    images.iter().any(|c| *c == stab)
                }
            })
            .collect()
    }
}

/// A chart tabulated over a region of its domain, with the inverse index
/// answering "which `v` in the region has `φ(v)·x = y`".
#[derive(Clone, Debug)]
pub struct RealizedChart {
    pub region: Rect,
    /// Region vectors (integer coordinates then torsion), in enumeration order.
    pub vecs: Vec<Vec<i64>>,
    /// Reduced image of each vector.
    pub q: Vec<usize>,
    by_q: HashMap<usize, Vec<u32>>,
    by_vec: HashMap<Vec<i64>, u32>,
    pub ell: usize,
}

fn gvec_i64(v: &GVec) -> Vec<i64> {
    v.ints.iter().chain(&v.tors).map(|x| x.to_i64().expect("small region")).collect()
}

pub fn to_gvec(v: &[i64], ell: usize) -> GVec {
    GVec {
        ints: v[..ell].iter().map(|&x| BigInt::from(x)).collect(),
        tors: v[ell..].iter().map(|&x| BigInt::from(x)).collect(),
    }
}

impl RealizedChart {
    pub fn new(c: &Chart, w: &Window, region: &Rect, budget: u64) -> Result<RealizedChart, WindowError> {
        if !region.contained_in(&c.dom) {
            return Err(WindowError::Region);
        }
        let base = w.family_points(&c.calh);
        RealizedChart::from_map(w, region, c.ell, |v| c.eval(v), &base, budget)
    }

    /// Tabulates an arbitrary map from region vectors into the window's group,
    /// checking injectivity of `v ↦ f(v)·x` for every base point `x`.
    pub fn from_map<F>(
        w: &Window,
        region: &Rect,
        ell: usize,
        f: F,
        base: &[bool],
        budget: u64,
    ) -> Result<RealizedChart, WindowError>
    where
        F: Fn(&GVec) -> Elem + Sync,
    {
        use rayon::prelude::*;
        let pts = region
            .enumerate(budget)
            .map_err(|_| WindowError::RegionBudget(region.cardinality(), budget))?;
        let vecs: Vec<Vec<i64>> = pts.iter().map(gvec_i64).collect();
        let q: Vec<usize> = pts.par_iter().map(|v| w.quotient.reduce(&f(v))).collect();
        let mut by_q: HashMap<usize, Vec<u32>> = HashMap::new();
        let mut by_vec = HashMap::with_capacity(vecs.len());
        for (k, (v, &qq)) in vecs.iter().zip(&q).enumerate() {
            by_q.entry(qq).or_default().push(k as u32);
            by_vec.insert(v.clone(), k as u32);
        }
        let rc = RealizedChart { region: region.clone(), vecs, q, by_q, by_vec, ell };
        rc.check_injective(w, base)?;
        Ok(rc)
    }

    fn check_injective(&self, w: &Window, base: &[bool]) -> Result<(), WindowError> {
        match &w.kind {
            WindowKind::Regular => {
                let mut ks: Vec<&Vec<u32>> = self.by_q.values().filter(|v| v.len() > 1).collect();
                ks.sort();
                match (ks.first(), base.iter().position(|&b| b)) {
                    (Some(v), Some(x)) => Err(WindowError::Collision {
                        r: self.vecs[v[0] as usize].clone(),
                        s: self.vecs[v[1] as usize].clone(),
                        x,
                    }),
                    _ => Ok(()),
                }
            }
            WindowKind::Coset { .. } => {
                for x in (0..w.len).filter(|&x| base[x]) {
                    let mut seen: HashMap<usize, u32> = HashMap::new();
                    for (k, &qq) in self.q.iter().enumerate() {
                        let y = w.act_q(qq, x);
                        if let Some(&j) = seen.get(&y) {
                            return Err(WindowError::Collision {
                                r: self.vecs[j as usize].clone(),
                                s: self.vecs[k].clone(),
                                x,
                            });
                        }
                        seen.insert(y, k as u32);
                    }
                }
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.vecs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vecs.is_empty()
    }

    pub fn index_of(&self, v: &[i64]) -> Option<usize> {
        self.by_vec.get(v).map(|&k| k as usize)
    }

    /// `φ(v_k)·x`.
    pub fn apply(&self, w: &Window, k: usize, x: usize) -> usize {
        w.act_q(self.q[k], x)
    }

    /// Region indices `k` with `φ(v_k)·x = y`.
    pub fn offsets(&self, w: &Window, x: usize, y: usize) -> Vec<usize> {
        match &w.kind {
            WindowKind::Regular => {
                let key = w.quotient.mul(y, w.quotient.inv(x));
                self.by_q.get(&key).map_or_else(Vec::new, |v| v.iter().map(|&k| k as usize).collect())
            }
            WindowKind::Coset { hbar, reps, .. } => {
                let (rx, ry) = (reps[x], reps[y]);
                let rxi = w.quotient.inv(rx);
                let mut out: Vec<usize> = hbar
                    .iter()
                    .filter_map(|&h| self.by_q.get(&w.quotient.mul(w.quotient.mul(ry, h), rxi)))
                    .flatten()
                    .map(|&k| k as usize)
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            }
        }
    }

    /// Region indices of the vectors lying in `sub`.
    pub fn indices_in(&self, sub: &Rect) -> Vec<usize> {
        (0..self.vecs.len()).filter(|&k| sub.member(&to_gvec(&self.vecs[k], self.ell))).collect()
    }
}

/// Whether every image coordinate of `φ` over `region` spans less than its
/// radix, which makes `φ` injective modulo the period on the region.
pub fn span_fits(c: &Chart, w: &Window, region: &Rect) -> bool {
    let ell = region.ell();
    let mut lo: Vec<Option<BigInt>> = vec![None; w.quotient.radices.len()];
    let mut hi: Vec<Option<BigInt>> = vec![None; w.quotient.radices.len()];
    for mask in 0u32..(1 << ell) {
        let ints: Vec<BigInt> = (0..ell)
            .map(|i| if mask >> i & 1 == 1 { region.hi(i) } else { region.lo(i) })
            .collect();
        let v = GVec { ints, tors: vec![BigInt::from(0); c.gamma.len()] };
        let e = c.eval(&v);
        for (k, x) in e.0.iter().enumerate() {
            if lo[k].as_ref().map_or(true, |l| x < l) {
                lo[k] = Some(x.clone());
            }
            if hi[k].as_ref().map_or(true, |h| x > h) {
                hi[k] = Some(x.clone());
            }
        }
    }
    let moduli = c.group.coord_moduli();
    (0..lo.len()).all(|k| {
        moduli[k].is_some()
            || match (&lo[k], &hi[k]) {
                (Some(l), Some(h)) => h - l < BigInt::from(w.quotient.radices[k]),
                _ => true,
            }
    })
}

/// `F ∩ Stab(x) = {1}` for every point, at window scale: no nonidentity
/// element of `f` reduces to a quotient element fixing a point.
pub fn locally_free(w: &Window, f: &[Elem]) -> Result<(), (usize, Elem)> {
    for g in f {
        if g.is_identity() {
            continue;
        }
        let q = w.quotient.reduce(g);
        for x in 0..w.len {
            if w.act_q(q, x) == x {
                return Err((x, g.clone()));
            }
        }
    }
    Ok(())
}

/// Membership of a group element in a subgroup via the window's reduction.
pub fn member_reduced(w: &Window, h: &Subgroup, g: &Elem) -> Membership {
    let gens: Vec<usize> = h.generators.iter().map(|y| w.quotient.reduce(y)).collect();
    match w.quotient.closure(&gens, w.quotient.size as u64) {
        Ok(c) if c.binary_search(&w.quotient.reduce(g)).is_ok() => Membership::Member,
        Ok(_) => Membership::NotMember,
        Err(_) => Membership::Inconclusive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::{build_abelian_chart, build_chart_free, ErrorScope};
    use crate::rect_algebra::rat;
    use num_traits::One;
    use rand::{Rng, SeedableRng};

    #[test]
    fn window_sizes() {
        assert_eq!(Window::build(&Group::parse("Z").unwrap(), 100).unwrap().len, 100);
        assert_eq!(Window::build(&Group::parse("heisenberg").unwrap(), 5).unwrap().len, 125);
        assert_eq!(Window::build(&Group::parse("Z^2 x C2").unwrap(), 20).unwrap().len, 800);
        assert!(Window::build(&Group::parse("Z").unwrap(), 1).is_err());
    }

    #[test]
    fn translation_on_cycle() {
        let w = Window::build(&Group::parse("Z").unwrap(), 100).unwrap();
        assert_eq!(w.act(&Elem::from_i64(&[7]), 95), 2);
        assert_eq!(w.act(&Elem::from_i64(&[-3]), 1), 98);
    }

    #[test]
    fn action_laws() {
        let g = Group::parse("heisenberg x C3").unwrap();
        let w = Window::build(&g, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let (a, b) = (g.random_elem(&mut rng, 40), g.random_elem(&mut rng, 40));
            let x = rng.gen_range(0..w.len);
            assert_eq!(w.act(&g.mul(&a, &b).unwrap(), x), w.act(&a, w.act(&b, x)));
            assert_eq!(w.act(&g.identity(), x), x);
        }
    }

    #[test]
    fn heisenberg_stabilizer_is_kernel() {
        let g = Group::parse("heisenberg").unwrap();
        let w = Window::build(&g, 5).unwrap();
        assert_eq!(w.stabilizer(17), vec![0]);
        for a in -4..=4i64 {
            for b in -4..=4i64 {
                for c in -4..=4i64 {
                    let e = Elem::from_i64(&[a, b, c]);
                    assert_eq!(w.act(&e, 17) == 17, (a, b, c) == (0, 0, 0));
                }
            }
        }
        assert_eq!(w.act(&Elem::from_i64(&[5, -10, 15]), 17), 17);
    }

    #[test]
    fn coset_windows() {
        let z2 = Group::parse("Z^2").unwrap();
        let w = Window::build_coset(&z2, &Subgroup::new(vec![Elem::from_i64(&[1, 0])]), 10, 1000).unwrap();
        assert_eq!(w.len, 10);
        let heis = Group::parse("heisenberg").unwrap();
        let center = Subgroup::new(vec![Elem::from_i64(&[0, 0, 1])]);
        let wh = Window::build_coset(&heis, &center, 4, 1000).unwrap();
        assert_eq!(wh.len, 16);
        let fam = [center];
        let fast = wh.family_points(&fam);
        for x in 0..wh.len {
            assert_eq!(fast[x], wh.in_family(x, &fam));
            assert!(fast[x]);
        }
        if let WindowKind::Coset { hbar, .. } = &wh.kind {
            assert_eq!(wh.stabilizer(0), *hbar);
        }
    }

    #[test]
    fn realized_abelian_chart() {
        let z = Group::parse("Z").unwrap();
        let c = build_abelian_chart(&z, &[BigInt::one()], &rat(20, 1)).unwrap();
        let w = Window::build(&z, 100).unwrap();
        let rc = RealizedChart::new(&c, &w, &Rect::rec_i64(&[10]), 1 << 20).unwrap();
        for x in [0usize, 50, 97] {
            for k in 0..rc.len() {
                let y = rc.apply(&w, k, x);
                assert_eq!(rc.offsets(&w, x, y), vec![k]);
            }
        }
        let w15 = Window::build(&z, 15).unwrap();
        match RealizedChart::new(&c, &w15, &Rect::rec_i64(&[10]), 1 << 20) {
            Err(WindowError::Collision { r, s, .. }) => assert_eq!((s[0] - r[0]).abs(), 15),
            other => panic!("expected collision, got {other:?}"),
        }
    }

    #[test]
    fn heisenberg_realization_tracks_span() {
        let g = Group::parse("heisenberg").unwrap();
        let c = build_chart_free(&g, &g.generators(), &rat(3, 1), &ErrorScope::default()).unwrap();
        let region = Rect::rec_i64(&[1, 1, 4]);
        for n in 2..12u64 {
            let w = Window::build(&g, n).unwrap();
            let ok = RealizedChart::new(&c, &w, &region, 1 << 20).is_ok();
            assert_eq!(ok, span_fits(&c, &w, &region), "n = {n}");
            assert_eq!(ok, n > 8, "n = {n}");
        }
    }
}
