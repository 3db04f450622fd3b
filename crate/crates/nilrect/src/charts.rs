//! Charts: almost-homomorphisms from a rectangle of `Z^ℓ × Γ` into a catalog group.
//!
//! Every chart built here is a product of layers evaluated in closed form.
//! A layer sends its coordinates linearly into one of three targets (the
//! group itself when abelian, the central quotient followed by the zero-center
//! section, or the center) and the layer images are multiplied in order.

use crate::group_catalog::{CenterDecomposition, Elem, Group, GroupSpec, Membership, Subgroup};
use crate::lattice::Diagonal;
use crate::rect_algebra::{floor_mul, GVec, Rect};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::collections::HashSet;
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ChartError {
    #[error("group {0} is not abelian")]
    NotAbelian(String),
    #[error("working region needs {needed} pairs, budget is {budget}")]
    Budget { needed: BigInt, budget: u64 },
    #[error("subgroups in S are not certified conjugate within bound {0}")]
    Inconclusive(u64),
    #[error("S must be nonempty")]
    EmptyFamily,
    #[error("scale factor must be positive")]
    Scale,
    #[error("groups of nilpotency class above two are not in the catalog")]
    Class,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    /// Coordinates of the (abelian) group itself.
    Direct,
    /// Coordinates of the central quotient, mapped back by the zero-center section.
    Lift,
    /// Integer and torsion coordinates of the center.
    Center,
}

#[derive(Clone, Debug)]
pub struct Layer {
    pub target: Target,
    pub int_dirs: Vec<Vec<BigInt>>,
    pub tors_dirs: Vec<Vec<BigInt>>,
    pub tors_orders: Vec<u64>,
    target_moduli: Vec<Option<u64>>,
    solver: Diagonal,
}

impl Layer {
    fn new(
        target: Target,
        int_dirs: Vec<Vec<BigInt>>,
        tors_dirs: Vec<Vec<BigInt>>,
        tors_orders: Vec<u64>,
        target_moduli: Vec<Option<u64>>,
    ) -> Layer {
        let width = target_moduli.len();
        let mut rows: Vec<Vec<BigInt>> = int_dirs.iter().chain(&tors_dirs).cloned().collect();
        for (k, m) in target_moduli.iter().enumerate() {
            if let Some(m) = m {
                let mut r = vec![BigInt::zero(); width];
                r[k] = BigInt::from(*m);
                rows.push(r);
            }
        }
        let solver = Diagonal::new(&rows, width);
        Layer { target, int_dirs, tors_dirs, tors_orders, target_moduli, solver }
    }

    fn ell(&self) -> usize {
        self.int_dirs.len()
    }

    fn image(&self, ints: &[BigInt], tors: &[BigInt]) -> Vec<BigInt> {
        let mut out = vec![BigInt::zero(); self.target_moduli.len()];
        for (c, d) in ints.iter().zip(&self.int_dirs).chain(tors.iter().zip(&self.tors_dirs)) {
            if c.is_zero() {
                continue;
            }
            for (o, x) in out.iter_mut().zip(d) {
                *o += c * x;
            }
        }
        for (o, m) in out.iter_mut().zip(&self.target_moduli) {
            if let Some(m) = m {
                *o = o.mod_floor(&BigInt::from(*m));
            }
        }
        out
    }

    /// Layer coordinates of a target vector, if it is in the image.
    fn solve(&self, target: &[BigInt]) -> Option<(Vec<BigInt>, Vec<BigInt>)> {
        if target.is_empty() {
            return Some((vec![BigInt::zero(); self.ell()], vec![BigInt::zero(); self.tors_dirs.len()]));
        }
        let n = self.solver.solve(target)?;
        let a = self.ell();
        let ints = n[..a].to_vec();
        let tors = n[a..a + self.tors_dirs.len()]
            .iter()
            .zip(&self.tors_orders)
            .map(|(x, &m)| x.mod_floor(&BigInt::from(m)))
            .collect();
        Some((ints, tors))
    }
}

#[derive(Clone, Debug)]
pub struct Chart {
    pub group: Group,
    pub ell: usize,
    pub gamma: Vec<u64>,
    pub zee: Rect,
    pub dom: Rect,
    /// The family `ℋ`; empty means the trivial family `{1}`.
    pub calh: Vec<Subgroup>,
    pub layers: Vec<Layer>,
    /// Region on which the central error set was computed; `None` means all of `dom`.
    pub scope: Option<Rect>,
    center: Option<CenterDecomposition>,
}

impl Chart {
    pub fn is_free(&self) -> bool {
        self.calh.iter().all(|h| h.generators.iter().all(|g| g.is_identity()))
    }

    pub fn zero(&self) -> GVec {
        GVec::zero(self.ell, self.gamma.len())
    }

    /// `φ(v)`.
    pub fn eval(&self, v: &GVec) -> Elem {
        let mut out = self.group.identity();
        let (mut io, mut to) = (0, 0);
        for layer in &self.layers {
            let ni = layer.ell();
            let nt = layer.tors_dirs.len();
            let img = layer.image(&v.ints[io..io + ni], &v.tors[to..to + nt]);
            io += ni;
            to += nt;
            let e = match layer.target {
                Target::Direct => Elem(img),
                Target::Lift => self.cd().lift(&self.group, &Elem(img)),
                Target::Center => {
                    let cd = self.cd();
                    let r = cd.center_rank;
                    cd.embed(&self.group, &img[..r], &img[r..])
                }
            };
            out = self.group.mul_raw(&out, &e);
        }
        out
    }

    fn cd(&self) -> &CenterDecomposition {
        self.center.as_ref().expect("layered chart carries its center decomposition")
    }

    /// The unique `v` in `Z^ℓ × Γ` with `φ(v) = g`, if any (the layered map is injective).
    pub fn preimage(&self, g: &Elem) -> Option<GVec> {
        let mut ints = Vec::with_capacity(self.ell);
        let mut tors = Vec::new();
        let mut rest = g.clone();
        for layer in &self.layers {
            let target: Vec<BigInt> = match layer.target {
                Target::Direct => rest.0.clone(),
                Target::Lift => self.cd().project(&rest).0,
                Target::Center => {
                    let (a, b) = self.cd().center_coords(&self.group, &rest)?;
                    a.into_iter().chain(b).collect()
                }
            };
            let (li, lt) = layer.solve(&target)?;
            let part = GVec { ints: li.clone(), tors: lt.clone() };
            let img = self.eval_layer(layer, &part);
            rest = self.group.mul_raw(&self.group.inv_raw(&img), &rest);
            ints.extend(li);
            tors.extend(lt);
        }
        if !rest.is_identity() {
            return None;
        }
        Some(GVec { ints, tors })
    }

    fn eval_layer(&self, layer: &Layer, part: &GVec) -> Elem {
        let img = layer.image(&part.ints, &part.tors);
        match layer.target {
            Target::Direct => Elem(img),
            Target::Lift => self.cd().lift(&self.group, &Elem(img)),
            Target::Center => {
                let r = self.cd().center_rank;
                self.cd().embed(&self.group, &img[..r], &img[r..])
            }
        }
    }

    pub fn add(&self, a: &GVec, b: &GVec) -> GVec {
        a.add(b, &self.gamma)
    }

    pub fn sub(&self, a: &GVec, b: &GVec) -> GVec {
        a.sub(b, &self.gamma)
    }

    pub fn neg(&self, a: &GVec) -> GVec {
        a.neg(&self.gamma)
    }

    /// Whether `g ∈ φ(𝒵)·H` for every `H ∈ ℋ`.
    pub fn covers(&self, g: &Elem, bound: u64) -> bool {
        if self.is_free() {
            return self.preimage(g).is_some_and(|v| self.zee.member(&v));
        }
        let zs = self.zee.enumerate(1 << 20).expect("error rectangle is small");
        self.calh.iter().all(|h| {
            zs.iter().any(|z| {
                let x = self.group.mul_raw(&self.group.inv_raw(&self.eval(z)), g);
                h.contains(&self.group, &x, bound) == Membership::Member
            })
        })
    }

    /// Whether `φ(u)Hφ(u)⁻¹ ∈ ℋ` for all `H ∈ s`, `u ∈ η·𝒵`.
    pub fn conjugation_closed(&self, s: &[Subgroup], eta: &BigRational, bound: u64) -> bool {
        let region = match self.zee.scale(eta) {
            Ok(r) => r,
            Err(_) => return false,
        };
        let Ok(us) = region.enumerate(1 << 16) else { return false };
        us.iter().all(|u| {
            let g = self.eval(u);
            s.iter().all(|h| {
                let c = h.conjugate_by(&self.group, &g);
                self.calh.iter().any(|k| c.equals(&self.group, k, bound) == Membership::Member)
            })
        })
    }

    pub fn certificate(&self, region: &Rect, report: &ChartReport) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "chart-certificate v1");
        let _ = writeln!(s, "group = {}", self.group.spec);
        let _ = writeln!(s, "ell = {}", self.ell);
        let _ = writeln!(s, "gamma = {:?}", self.gamma);
        let _ = writeln!(s, "zee = {}", self.zee);
        let _ = writeln!(s, "dom = {}", self.dom);
        if self.is_free() {
            let _ = writeln!(s, "family = trivial");
        } else {
            for (i, h) in self.calh.iter().enumerate() {
                let gens: Vec<String> = h.generators.iter().map(|g| g.to_string()).collect();
                let _ = writeln!(s, "family[{i}] = <{}>", gens.join(", "));
            }
        }
        match &self.scope {
            Some(r) => {
                let _ = writeln!(s, "error-scope = {r} (axioms guaranteed on this region only)");
            }
            None => {
                let _ = writeln!(s, "error-scope = dom");
            }
        }
        let _ = writeln!(s, "region = {region}");
        let _ = write!(s, "{report}");
        s
    }
}

/// Pass counts for the chart axioms over a region.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChartReport {
    pub structural: Vec<String>,
    pub points: usize,
    pub pairs: usize,
    pub injective: bool,
    /// `(checked, passed)` per implication: product, right quotient, left quotient, inverse.
    pub counts: [(usize, usize); 4],
    /// First failing pair for each implication, in implication order.
    pub counterexamples: Vec<Counterexample>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub axiom: &'static str,
    pub r: GVec,
    pub s: GVec,
    pub family_index: usize,
}

pub const AXIOMS: [&str; 4] = ["product", "right-quotient", "left-quotient", "inverse"];

impl ChartReport {
    pub fn ok(&self) -> bool {
        self.structural.is_empty() && self.injective && self.counterexamples.is_empty()
    }
}

impl std::fmt::Display for ChartReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "points = {}", self.points)?;
        writeln!(f, "pairs = {}", self.pairs)?;
        writeln!(f, "injective = {}", self.injective)?;
        for (name, (c, p)) in AXIOMS.iter().zip(&self.counts) {
            writeln!(f, "{name} = {p}/{c}")?;
        }
        for s in &self.structural {
            writeln!(f, "structural-failure = {s}")?;
        }
        for ce in &self.counterexamples {
            writeln!(
                f,
                "counterexample = {} r={:?} s={:?} family={}",
                ce.axiom,
                ce.r.ints.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                ce.s.ints.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
                ce.family_index
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Mode {
    Exhaustive,
    Sampled { trials: usize, seed: u64 },
}

/// Membership bound used when `ℋ` is nontrivial.
const MEMBER_BOUND: u64 = 64;

fn shifted_inside(t: &GVec, zee: &Rect, dom: &Rect) -> bool {
    t.ints
        .iter()
        .zip(&zee.radius)
        .zip(&dom.radius)
        .all(|((x, z), d)| x.abs() + z <= *d)
}

/// Checks the chart axioms on `region` (which must lie in `dom`).
pub fn verify_chart(c: &Chart, mode: Mode, region: &Rect, budget: u64) -> Result<ChartReport, ChartError> {
    let mut rep = ChartReport { injective: true, ..Default::default() };
    if !c.eval(&c.zero()).is_identity() {
        rep.structural.push("phi(0) is not the identity".into());
    }
    if c.zee.radius.iter().any(|r| !r.is_positive()) {
        rep.structural.push("error rectangle has a zero radius".into());
    }
    if !c.zee.scale_int(3).contained_in(&c.dom) || !c.dom.is_centered() {
        rep.structural.push("3·Z is not contained in a centered domain".into());
    }
    if !region.contained_in(&c.dom) {
        rep.structural.push("region is not contained in the domain".into());
    }
    let pts = region.enumerate(budget).map_err(|_| ChartError::Budget {
        needed: region.cardinality(),
        budget,
    })?;
    rep.points = pts.len();
    let imgs: Vec<Elem> = pts.par_iter().map(|v| c.eval(v)).collect();
    let free = c.is_free();
    let families: Vec<Subgroup> = if free { vec![Subgroup::trivial()] } else { c.calh.clone() };

    // injectivity modulo each H
    if free {
        let set: HashSet<&Elem> = imgs.iter().collect();
        rep.injective = set.len() == imgs.len();
    } else {
        rep.injective = (0..pts.len()).into_par_iter().all(|i| {
            (i + 1..pts.len()).all(|j| {
                let x = c.group.mul_raw(&c.group.inv_raw(&imgs[j]), &imgs[i]);
                families.iter().all(|h| h.contains(&c.group, &x, MEMBER_BOUND) != Membership::Member)
            })
        });
    }

    let pairs: Vec<(usize, usize)> = match mode {
        Mode::Exhaustive => {
            let n = BigInt::from(pts.len()) * BigInt::from(pts.len());
            if n > BigInt::from(budget) {
                return Err(ChartError::Budget { needed: n, budget });
            }
            (0..pts.len()).flat_map(|i| (0..pts.len()).map(move |j| (i, j))).collect()
        }
        Mode::Sampled { trials, seed } => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..trials).map(|_| (rng.gen_range(0..pts.len()), rng.gen_range(0..pts.len()))).collect()
        }
    };
    rep.pairs = pairs.len();
    let zs = if free { Vec::new() } else { c.zee.enumerate(budget).unwrap_or_default() };

    let per_pair: Vec<([(usize, usize); 4], Vec<Counterexample>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (r, s) = (&pts[i], &pts[j]);
            let (gr, gs) = (&imgs[i], &imgs[j]);
            let g = &c.group;
            let cases: [(GVec, Elem); 4] = [
                (c.add(r, s), g.mul_raw(gr, gs)),
                (c.sub(r, s), g.mul_raw(gr, &g.inv_raw(gs))),
                (c.add(&c.neg(r), s), g.mul_raw(&g.inv_raw(gr), gs)),
                (c.neg(s), g.inv_raw(gs)),
            ];
            let mut counts = [(0, 0); 4];
            let mut ce = Vec::new();
            for (k, (t, target)) in cases.iter().enumerate() {
                if !shifted_inside(t, &c.zee, &c.dom) {
                    continue;
                }
                counts[k].0 += 1;
                let mut all = true;
                for (hi, h) in families.iter().enumerate() {
                    let ok = if free {
                        c.preimage(target)
                            .map(|v| c.zee.member(&c.sub(&v, t)))
                            .unwrap_or(false)
                    } else {
                        zs.iter().any(|z| {
                            let x = g.mul_raw(&g.inv_raw(&c.eval(&c.add(t, z))), target);
                            h.contains(g, &x, MEMBER_BOUND) == Membership::Member
                        })
                    };
                    if !ok {
                        if all {
                            ce.push(Counterexample { axiom: AXIOMS[k], r: r.clone(), s: s.clone(), family_index: hi });
                        }
                        all = false;
                    }
                }
                if all {
                    counts[k].1 += 1;
                }
            }
            (counts, ce)
        })
        .collect();
    for (counts, ce) in per_pair {
        for k in 0..4 {
            rep.counts[k].0 += counts[k].0;
            rep.counts[k].1 += counts[k].1;
        }
        for x in ce {
            if !rep.counterexamples.iter().any(|y| y.axiom == x.axiom) {
                rep.counterexamples.push(x);
            }
        }
    }
    rep.counterexamples.sort_by_key(|x| AXIOMS.iter().position(|a| *a == x.axiom));
    Ok(rep)
}

fn center_group(cd: &CenterDecomposition) -> Group {
    let mut parts = Vec::new();
    if cd.center_rank > 0 {
        parts.push(GroupSpec::FreeAbelian(cd.center_rank as u32));
    }
    parts.extend(cd.center_torsion.iter().map(|&m| GroupSpec::Cyclic(m)));
    let spec = match parts.len() {
        0 => GroupSpec::FreeAbelian(0),
        1 => parts.pop().unwrap(),
        _ => GroupSpec::Product(parts),
    };
    Group::new(spec).expect("center spec is valid")
}

/// Quotient layer of an abelian group by a subgroup, with the error radius
/// covering `f` modulo the subgroup.
struct QuotientLayer {
    int_dirs: Vec<Vec<BigInt>>,
    tors_dirs: Vec<Vec<BigInt>>,
    tors_orders: Vec<u64>,
    diag: Option<Diagonal>,
    /// Integer coordinates of the quotient, as indices into the (diagonalised) target.
    free_cols: Vec<usize>,
}

fn quotient_layer(g: &Group, h: &Subgroup) -> QuotientLayer {
    let moduli = g.coord_moduli();
    let width = g.dim;
    let trivial = h.generators.iter().all(|x| x.is_identity());
    if trivial {
        let mut int_dirs = Vec::new();
        let mut tors_dirs = Vec::new();
        let mut tors_orders = Vec::new();
        let mut free_cols = Vec::new();
        for (k, m) in moduli.iter().enumerate() {
            let mut e = vec![BigInt::zero(); width];
            e[k] = BigInt::one();
            match m {
                None => {
                    int_dirs.push(e);
                    free_cols.push(k);
                }
                Some(m) => {
                    tors_dirs.push(e);
                    tors_orders.push(*m);
                }
            }
        }
        return QuotientLayer { int_dirs, tors_dirs, tors_orders, diag: None, free_cols };
    }
    let mut rows: Vec<Vec<BigInt>> = h.generators.iter().map(|x| x.0.clone()).collect();
    for (k, m) in moduli.iter().enumerate() {
        if let Some(m) = m {
            let mut r = vec![BigInt::zero(); width];
            r[k] = BigInt::from(*m);
            rows.push(r);
        }
    }
    let dg = Diagonal::new(&rows, width);
    let orders = dg.quotient_orders();
    let mut int_dirs = Vec::new();
    let mut tors_dirs = Vec::new();
    let mut tors_orders = Vec::new();
    let mut free_cols = Vec::new();
    for (j, d) in orders.iter().enumerate() {
        if d.is_zero() {
            int_dirs.push(dg.v_inv[j].clone());
            free_cols.push(j);
        } else if d > &BigInt::one() {
            tors_dirs.push(dg.v_inv[j].clone());
            tors_orders.push(d.to_u64().expect("torsion order fits in u64"));
        }
    }
    QuotientLayer { int_dirs, tors_dirs, tors_orders, diag: Some(dg), free_cols }
}

impl QuotientLayer {
    /// Free quotient coordinates of a target vector.
    fn free_coords(&self, x: &[BigInt]) -> Vec<BigInt> {
        let y = match &self.diag {
            None => x.to_vec(),
            Some(dg) => dg.to_diag(x),
        };
        self.free_cols.iter().map(|&j| y[j].clone()).collect()
    }
}

fn max_abs(rows: &[Vec<BigInt>], len: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); len];
    for r in rows {
        for (o, x) in out.iter_mut().zip(r) {
            if x.abs() > *o {
                *o = x.abs();
            }
        }
    }
    out
}

/// The coordinate-isomorphism chart of an abelian group: `dom = λ·Rec(zee_radius)`.
pub fn build_abelian_chart(g: &Group, zee_radius: &[BigInt], lambda: &BigRational) -> Result<Chart, ChartError> {
    if !g.is_abelian() {
        return Err(ChartError::NotAbelian(g.spec.to_string()));
    }
    if !lambda.is_positive() {
        return Err(ChartError::Scale);
    }
    let ql = quotient_layer(g, &Subgroup::trivial());
    let layer = Layer::new(Target::Direct, ql.int_dirs, ql.tors_dirs, ql.tors_orders.clone(), g.coord_moduli());
    let zee = Rect::rec(zee_radius.to_vec(), ql.tors_orders.clone());
    let dom = zee.scale(lambda).map_err(|_| ChartError::Scale)?;
    Ok(Chart {
        group: g.clone(),
        ell: layer.ell(),
        gamma: ql.tors_orders,
        zee,
        dom,
        calh: Vec::new(),
        layers: vec![layer],
        scope: None,
        center: None,
    })
}

/// Working-region options for the central error computation.
#[derive(Clone, Debug)]
pub struct ErrorScope {
    /// Quotient-coordinate region; defaults to the whole quotient domain.
    pub region: Option<Rect>,
    /// Maximum number of pairs to enumerate.
    pub budget: u64,
}

impl Default for ErrorScope {
    fn default() -> Self {
        ErrorScope { region: None, budget: 5_000_000 }
    }
}

/// Chart with trivial family for a catalog group, covering `f`, with `λ·𝒵 ⊆ dom`.
pub fn build_chart_free(g: &Group, f: &[Elem], lambda: &BigRational, scope: &ErrorScope) -> Result<Chart, ChartError> {
    build_layered(g, &[Subgroup::trivial()], f, lambda, lambda, scope, true)
}

/// Chart whose family `ℋ` is the closure of `s` under conjugation by `φ(η·𝒵₀)`.
pub fn build_chart_general(
    g: &Group,
    s: &[Subgroup],
    f: &[Elem],
    lambda: &BigRational,
    eta: &BigRational,
    scope: &ErrorScope,
) -> Result<Chart, ChartError> {
    if s.is_empty() {
        return Err(ChartError::EmptyFamily);
    }
    for w in s.windows(2) {
        if !g.is_abelian() {
            break;
        }
        if w[0].equals(g, &w[1], MEMBER_BOUND) != Membership::Member {
            return Err(ChartError::Inconclusive(MEMBER_BOUND));
        }
    }
    build_layered(g, s, f, lambda, eta, scope, false)
}

fn three() -> BigRational {
    BigRational::from_integer(BigInt::from(3))
}

fn build_layered(
    g: &Group,
    s: &[Subgroup],
    f: &[Elem],
    lambda: &BigRational,
    eta: &BigRational,
    scope: &ErrorScope,
    pad_center: bool,
) -> Result<Chart, ChartError> {
    if !lambda.is_positive() || !eta.is_positive() {
        return Err(ChartError::Scale);
    }
    let lambda = lambda.clone().max(three());
    let eta = eta.clone().max(three());
    if g.nilpotency_class() <= 1 {
        return abelian_base(g, &s[0], f, &lambda);
    }
    if g.nilpotency_class() > 2 {
        return Err(ChartError::Class);
    }
    let cd = g.center_decomposition();
    let q = cd.quotient.clone();

    // quotient chart for the projected family
    let s0: Vec<Subgroup> = s
        .iter()
        .map(|h| Subgroup::new(h.generators.iter().map(|x| cd.project(x)).collect()))
        .collect();
    let h0 = s0[0].clone();
    let ql = quotient_layer(&q, &h0);
    let fq: Vec<Vec<BigInt>> = f.iter().map(|x| ql.free_coords(&cd.project(x).0)).collect();
    let zee0_r: Vec<BigInt> =
        max_abs(&fq, ql.int_dirs.len()).into_iter().map(|x| x.max(BigInt::one())).collect();
    let layer0 = Layer::new(Target::Lift, ql.int_dirs.clone(), ql.tors_dirs.clone(), ql.tors_orders.clone(), q.coord_moduli());
    let gamma0 = ql.tors_orders.clone();
    let zee0 = Rect::rec(zee0_r, gamma0.clone());
    let dom0 = zee0.scale(&lambda).map_err(|_| ChartError::Scale)?;

    let mut partial = Chart {
        group: g.clone(),
        ell: layer0.ell(),
        gamma: gamma0.clone(),
        zee: zee0.clone(),
        dom: dom0.clone(),
        calh: Vec::new(),
        layers: vec![layer0.clone()],
        scope: None,
        center: Some(cd.clone()),
    };

    // family closed under conjugation by the section over η·𝒵₀
    let mut calh: Vec<Subgroup> = Vec::new();
    let conj_region = zee0.scale(&eta).map_err(|_| ChartError::Scale)?;
    let us = conj_region.enumerate(1 << 16).map_err(|_| ChartError::Budget {
        needed: conj_region.cardinality(),
        budget: 1 << 16,
    })?;
    for h in s {
        for u in &us {
            let c = h.conjugate_by(g, &partial.eval(u));
            let mut dup = false;
            for k in &calh {
                match c.equals(g, k, MEMBER_BOUND) {
                    Membership::Member => {
                        dup = true;
                        break;
                    }
                    Membership::Inconclusive => return Err(ChartError::Inconclusive(MEMBER_BOUND)),
                    Membership::NotMember => {}
                }
            }
            if !dup {
                calh.push(c);
            }
        }
    }
    let free = calh.iter().all(|h| h.generators.iter().all(|x| x.is_identity()));

    // central errors over the working region
    let region = scope.region.clone().unwrap_or_else(|| dom0.clone());
    let needed = region.cardinality() * region.cardinality();
    if needed > BigInt::from(scope.budget) {
        return Err(ChartError::Budget { needed, budget: scope.budget });
    }
    let pts = region.enumerate(scope.budget).expect("checked against budget");
    let imgs: Vec<Elem> = pts.iter().map(|v| partial.eval(v)).collect();
    let zs0 = zee0.enumerate(1 << 16).expect("small error rectangle");
    let fams: Vec<Subgroup> = if free { vec![Subgroup::trivial()] } else { calh.clone() };

    let central_of = |x: &Elem, h: &Subgroup| -> Option<Elem> {
        // b ∈ ζ(G) with x ∈ b·H
        if g.is_central(x) {
            return Some(x.clone());
        }
        let rows: Vec<Vec<BigInt>> = h.generators.iter().map(|y| cd.project(y).0).collect();
        if rows.is_empty() {
            return None;
        }
        let n = Diagonal::new(&rows, q.dim).solve(&cd.project(x).0)?;
        let mut hh = g.identity();
        for (y, k) in h.generators.iter().zip(&n) {
            hh = g.mul_raw(&hh, &g.pow(y, k).expect("layout"));
        }
        let b = g.mul_raw(x, &g.inv_raw(&hh));
        g.is_central(&b).then_some(b)
    };

    let errors: Vec<Vec<Elem>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            for j in 0..pts.len() {
                let (r, sv) = (&pts[i], &pts[j]);
                let (gr, gs) = (&imgs[i], &imgs[j]);
                let cases = [
                    (partial.add(r, sv), g.mul_raw(gr, gs)),
                    (partial.sub(r, sv), g.mul_raw(gr, &g.inv_raw(gs))),
                    (partial.add(&partial.neg(r), sv), g.mul_raw(&g.inv_raw(gr), gs)),
                ];
                let inv_case = (i == 0).then(|| (partial.neg(sv), g.inv_raw(gs)));
                for (t, prod) in cases.into_iter().chain(inv_case) {
                    if !shifted_inside(&t, &zee0, &dom0) {
                        continue;
                    }
                    for h in &fams {
                        let x = g.mul_raw(&g.inv_raw(&partial.eval(&t)), &prod);
                        if let Some(b) = central_of(&x, h) {
                            out.push(b);
                            continue;
                        }
                        for z in &zs0 {
                            let x = g.mul_raw(&g.inv_raw(&partial.eval(&partial.add(&t, z))), &prod);
                            if let Some(b) = central_of(&x, h) {
                                out.push(b);
                                break;
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut kset: Vec<Elem> = errors.into_iter().flatten().collect();
    // central parts of F
    for x in f {
        for h in &fams {
            let mut found = None;
            for z in &zs0 {
                let y = g.mul_raw(&g.inv_raw(&partial.eval(z)), x);
                if let Some(b) = central_of(&y, h) {
                    found = Some(b);
                    break;
                }
            }
            if let Some(b) = found {
                kset.push(b);
            }
        }
    }
    kset.sort();
    kset.dedup();

    // chart for the center modulo H ∩ ζ(G)
    let zg = center_group(&cd);
    let hz = if free { Subgroup::trivial() } else { calh[0].center_intersection(g) };
    let hz_coords = Subgroup::new(
        hz.generators
            .iter()
            .filter_map(|x| cd.center_coords(g, x))
            .map(|(a, b)| zg.elem(a.into_iter().chain(b).collect()).expect("center layout"))
            .collect(),
    );
    let ql1 = quotient_layer(&zg, &hz_coords);
    let kc: Vec<Vec<BigInt>> = kset
        .iter()
        .filter_map(|x| cd.center_coords(g, x))
        .map(|(a, b)| ql1.free_coords(&a.into_iter().chain(b).collect::<Vec<_>>()))
        .collect();
    let zee1_r: Vec<BigInt> = max_abs(&kc, ql1.int_dirs.len())
        .into_iter()
        .map(|x| if pad_center { x + BigInt::one() } else { x.max(BigInt::one()) })
        .collect();
    let layer1 = Layer::new(Target::Center, ql1.int_dirs.clone(), ql1.tors_dirs.clone(), ql1.tors_orders.clone(), zg.coord_moduli());
    let zee1 = Rect::rec(zee1_r, ql1.tors_orders.clone());
    let dom1 = zee1.scale(&lambda).map_err(|_| ChartError::Scale)?;

    let gamma: Vec<u64> = gamma0.iter().chain(&ql1.tors_orders).copied().collect();
    let zee = Rect::rec(zee0.radius.iter().chain(&zee1.radius).cloned().collect(), gamma.clone());
    let dom = Rect::rec(dom0.radius.iter().chain(&dom1.radius).cloned().collect(), gamma.clone());
    partial.ell = layer0.ell() + layer1.ell();
    partial.layers.push(layer1);
    partial.gamma = gamma;
    partial.zee = zee;
    partial.dom = dom;
    partial.calh = if free { Vec::new() } else { calh };
    partial.scope = scope.region.as_ref().map(|r| {
        let mut full = r.clone();
        full.center.extend(dom1.center.iter().cloned());
        full.radius.extend(dom1.radius.iter().cloned());
        full.gamma = partial.gamma.clone();
        full
    });
    Ok(partial)
}

fn abelian_base(g: &Group, h: &Subgroup, f: &[Elem], lambda: &BigRational) -> Result<Chart, ChartError> {
    let ql = quotient_layer(g, h);
    let fc: Vec<Vec<BigInt>> = f.iter().map(|x| ql.free_coords(&x.0)).collect();
    let zr: Vec<BigInt> = max_abs(&fc, ql.int_dirs.len()).into_iter().map(|x| x.max(BigInt::one())).collect();
    let free = h.generators.iter().all(|x| x.is_identity());
    let layer = Layer::new(Target::Direct, ql.int_dirs, ql.tors_dirs, ql.tors_orders.clone(), g.coord_moduli());
    let zee = Rect::rec(zr, ql.tors_orders.clone());
    let dom = zee.scale(lambda).map_err(|_| ChartError::Scale)?;
    Ok(Chart {
        group: g.clone(),
        ell: layer.ell(),
        gamma: ql.tors_orders,
        zee,
        dom,
        calh: if free { Vec::new() } else { vec![h.clone()] },
        layers: vec![layer],
        scope: None,
        center: Some(g.center_decomposition()),
    })
}

/// Replaces the error rectangle, keeping the map and domain.
pub fn with_zee(c: &Chart, zee_radius: &[i64]) -> Chart {
    let mut out = c.clone();
    out.zee = Rect::rec(zee_radius.iter().map(|&x| BigInt::from(x)).collect(), c.gamma.clone());
    out
}

/// `⌊λ·x⌋` on each radius, as used for domain sizing.
pub fn scaled_radius(r: &[BigInt], lambda: &BigRational) -> Vec<BigInt> {
    r.iter().map(|x| floor_mul(lambda, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rect_algebra::rat;

    fn heis() -> Group {
        Group::parse("heisenberg").unwrap()
    }

    #[test]
    fn abelian_chart_is_a_homomorphism() {
        let g = Group::parse("Z^2").unwrap();
        let c = build_abelian_chart(&g, &[BigInt::one(), BigInt::one()], &rat(100, 1)).unwrap();
        assert_eq!(c.dom.radius, vec![BigInt::from(100), BigInt::from(100)]);
        let rep = verify_chart(&c, Mode::Exhaustive, &Rect::rec_i64(&[3, 3]), 1 << 20).unwrap();
        assert!(rep.ok(), "{rep}");
        let g3 = Group::parse("Z x C3").unwrap();
        let c3 = build_abelian_chart(&g3, &[BigInt::one()], &rat(5, 1)).unwrap();
        assert_eq!(c3.gamma, vec![3]);
        assert_eq!(c3.ell, 1);
        let reg = Rect::rec(vec![BigInt::from(2)], vec![3]);
        assert!(verify_chart(&c3, Mode::Exhaustive, &reg, 1 << 20).unwrap().ok());
        assert!(build_abelian_chart(&heis(), &[BigInt::one()], &rat(3, 1)).is_err());
    }

    #[test]
    fn heisenberg_free_chart_shape() {
        let g = heis();
        let c = build_chart_free(&g, &g.generators(), &rat(3, 1), &ErrorScope::default()).unwrap();
        assert_eq!(c.ell, 3);
        assert_eq!(c.zee, Rect::rec_i64(&[1, 1, 10]));
        assert_eq!(c.dom, Rect::rec_i64(&[3, 3, 30]));
        for x in g.generators() {
            assert!(c.covers(&x, 8));
        }
        let v = GVec::from_i64(&[2, -1, 7]);
        assert_eq!(c.preimage(&c.eval(&v)), Some(v));
        let rep = verify_chart(&c, Mode::Exhaustive, &Rect::rec_i64(&[2, 2, 2]), 1 << 20).unwrap();
        assert!(rep.ok(), "{rep}");
        assert_eq!(rep.pairs, 15625);
    }

    #[test]
    fn undersized_error_rectangle_fails() {
        let g = heis();
        let c = build_chart_free(&g, &g.generators(), &rat(3, 1), &ErrorScope::default()).unwrap();
        let bad = with_zee(&c, &[1, 1, 1]);
        let rep = verify_chart(&bad, Mode::Exhaustive, &Rect::rec_i64(&[2, 2, 2]), 1 << 20).unwrap();
        let ce = rep.counterexamples.iter().find(|x| x.axiom == "product").expect("product axiom must fail");
        let prod = g.mul(&c.eval(&ce.r), &c.eval(&ce.s)).unwrap();
        let t = c.add(&ce.r, &ce.s);
        let err = &prod.0[2] - &c.eval(&t).0[2];
        assert!(err.abs() > BigInt::one());
    }

    #[test]
    fn product_error_range_is_quadratic() {
        // oracle: the central error of lift(r)·lift(s) against lift(r+s) is -s_1·r_2
        let g = heis();
        let c = build_chart_free(&g, &g.generators(), &rat(3, 1), &ErrorScope::default()).unwrap();
        for m in 1..=4i64 {
            let (mut lo, mut hi) = (0i64, 0i64);
            for r1 in -m..=m {
                for r2 in -m..=m {
                    for s1 in -m..=m {
                        for s2 in -m..=m {
                            let r = GVec::from_i64(&[r1, r2, 0]);
                            let s = GVec::from_i64(&[s1, s2, 0]);
                            let prod = g.mul(&c.eval(&r), &c.eval(&s)).unwrap();
                            let e = (&prod.0[2] - &c.eval(&c.add(&r, &s)).0[2]).to_i64().unwrap();
                            assert_eq!(e, -s1 * r2);
                            lo = lo.min(e);
                            hi = hi.max(e);
                        }
                    }
                }
            }
            assert_eq!((lo, hi), (-m * m, m * m));
        }
        // the free construction absorbs every error over its working region
        for m in 1..=3i64 {
            let scope = ErrorScope { region: Some(Rect::rec_i64(&[m, m])), budget: 1 << 20 };
            let c = build_chart_free(&g, &g.generators(), &rat(3 * m, 1), &scope).unwrap();
            assert!(c.zee.radius[2] > BigInt::from(m * m));
            let reg = Rect::rec_i64(&[m, m, 2]);
            assert!(verify_chart(&c, Mode::Exhaustive, &reg, 1 << 22).unwrap().ok());
        }
    }

    #[test]
    fn general_chart_center_family() {
        let g = heis();
        let center = Subgroup::new(vec![Elem::from_i64(&[0, 0, 1])]);
        let c = build_chart_general(&g, &[center.clone()], &g.generators(), &rat(3, 1), &rat(3, 1), &ErrorScope::default()).unwrap();
        assert_eq!(c.ell, 2);
        assert_eq!(c.calh.len(), 1);
        assert!(c.conjugation_closed(&[center], &rat(3, 1), 16));
        let rep = verify_chart(&c, Mode::Exhaustive, &Rect::rec_i64(&[2, 2]), 1 << 20).unwrap();
        assert!(rep.ok(), "{rep}");
    }

    #[test]
    fn general_chart_abelian_quotient() {
        let g = Group::parse("Z^2").unwrap();
        let h = Subgroup::new(vec![Elem::from_i64(&[1, 0])]);
        let c = build_chart_general(&g, &[h], &[Elem::from_i64(&[0, 2])], &rat(4, 1), &rat(3, 1), &ErrorScope::default()).unwrap();
        assert_eq!(c.ell, 1);
        assert!(c.covers(&Elem::from_i64(&[5, 2]), 16));
        let rep = verify_chart(&c, Mode::Exhaustive, &Rect::rec_i64(&[3]), 1 << 20).unwrap();
        assert!(rep.ok(), "{rep}");
    }

    #[test]
    fn general_chart_noncentral_family() {
        let g = heis();
        let h = Subgroup::new(vec![Elem::from_i64(&[-1, 0, 1])]);
        let c = build_chart_general(&g, &[h.clone()], &g.generators(), &rat(3, 1), &rat(3, 1), &ErrorScope::default()).unwrap();
        assert!(c.ell <= 3);
        assert!(c.conjugation_closed(&[h], &rat(3, 1), 16));
        let rep = verify_chart(&c, Mode::Sampled { trials: 400, seed: 1 }, &Rect::rec_i64(&[1, 1]), 1 << 20).unwrap();
        assert!(rep.ok(), "{rep}");
    }
}
