//! Rectangles in `Z^ℓ × Γ` with floor scaling about a genuine center.
//!
//! A rectangle is a center in `Z^ℓ` plus a radius vector; the torsion
//! coordinate is always unrestricted. `λ·A` keeps the center and floors each
//! radius, so `A + A` and `2·A` differ in general.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RectError {
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(BigRational),
    #[error("axis {axis} out of range for dimension {dim}")]
    Axis { axis: usize, dim: usize },
    #[error("shape mismatch: dimension {0} vs {1}")]
    Shape(usize, usize),
    #[error("enumeration needs {needed} points, budget is {budget}")]
    Budget { needed: BigInt, budget: u64 },
    #[error("cannot parse rectangle: {0}")]
    Parse(String),
}

/// A vector of `Z^ℓ × Γ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GVec {
    pub ints: Vec<BigInt>,
    pub tors: Vec<BigInt>,
}

impl GVec {
    pub fn zero(ell: usize, gamma_len: usize) -> GVec {
        GVec { ints: vec![BigInt::zero(); ell], tors: vec![BigInt::zero(); gamma_len] }
    }

    pub fn from_i64(ints: &[i64]) -> GVec {
        GVec { ints: ints.iter().map(|&x| BigInt::from(x)).collect(), tors: Vec::new() }
    }

    /// `e_i`, 0-based.
    pub fn unit(ell: usize, gamma_len: usize, i: usize) -> GVec {
        let mut v = GVec::zero(ell, gamma_len);
        v.ints[i] = BigInt::one();
        v
    }

    pub fn add(&self, o: &GVec, gamma: &[u64]) -> GVec {
        GVec {
            ints: self.ints.iter().zip(&o.ints).map(|(a, b)| a + b).collect(),
            tors: self
                .tors
                .iter()
                .zip(&o.tors)
                .zip(gamma)
                .map(|((a, b), &m)| (a + b).mod_floor(&BigInt::from(m)))
                .collect(),
        }
    }

    pub fn neg(&self, gamma: &[u64]) -> GVec {
        GVec {
            ints: self.ints.iter().map(|a| -a).collect(),
            tors: self.tors.iter().zip(gamma).map(|(a, &m)| (-a).mod_floor(&BigInt::from(m))).collect(),
        }
    }

    pub fn sub(&self, o: &GVec, gamma: &[u64]) -> GVec {
        self.add(&o.neg(gamma), gamma)
    }
}

/// `⌊λ·x⌋` exactly.
pub fn floor_mul(lambda: &BigRational, x: &BigInt) -> BigInt {
    (lambda * BigRational::from_integer(x.clone())).floor().to_integer()
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub center: Vec<BigInt>,
    pub radius: Vec<BigInt>,
    pub gamma: Vec<u64>,
}

impl Rect {
    /// `Rec(a)`: centered, radius `a`.
    pub fn rec(radius: Vec<BigInt>, gamma: Vec<u64>) -> Rect {
        Rect { center: vec![BigInt::zero(); radius.len()], radius, gamma }
    }

    pub fn rec_i64(radius: &[i64]) -> Rect {
        Rect::rec(radius.iter().map(|&x| BigInt::from(x)).collect(), Vec::new())
    }

    pub fn ell(&self) -> usize {
        self.radius.len()
    }

    pub fn is_centered(&self) -> bool {
        self.center.iter().all(|c| c.is_zero())
    }

    pub fn gamma_order(&self) -> BigInt {
        self.gamma.iter().map(|&m| BigInt::from(m)).product()
    }

    pub fn scale(&self, lambda: &BigRational) -> Result<Rect, RectError> {
        if !lambda.is_positive() {
            return Err(RectError::NonPositiveScale(lambda.clone()));
        }
        Ok(Rect {
            center: self.center.clone(),
            radius: self.radius.iter().map(|r| floor_mul(lambda, r)).collect(),
            gamma: self.gamma.clone(),
        })
    }

    /// `−λ·A`: centered at the negated center.
    pub fn neg_scale(&self, lambda: &BigRational) -> Result<Rect, RectError> {
        Ok(self.scale(lambda)?.negate())
    }

    pub fn scale_int(&self, k: u64) -> Rect {
        Rect {
            center: self.center.clone(),
            radius: self.radius.iter().map(|r| r * BigInt::from(k)).collect(),
            gamma: self.gamma.clone(),
        }
    }

    /// `A^i`: flattened along axis `i` (0-based).
    pub fn face(&self, i: usize) -> Result<Rect, RectError> {
        if i >= self.ell() {
            return Err(RectError::Axis { axis: i, dim: self.ell() });
        }
        let mut r = self.clone();
        r.radius[i] = BigInt::zero();
        Ok(r)
    }

    /// The `⊑` relation.
    pub fn fits_in(&self, other: &Rect) -> Result<bool, RectError> {
        self.same_shape(other)?;
        Ok(self.radius.iter().zip(&other.radius).all(|(a, b)| a <= b))
    }

    fn same_shape(&self, other: &Rect) -> Result<(), RectError> {
        if self.ell() != other.ell() || self.gamma != other.gamma {
            return Err(RectError::Shape(self.ell(), other.ell()));
        }
        Ok(())
    }

    pub fn cardinality(&self) -> BigInt {
        let boxes: BigInt =
            self.radius.iter().map(|r| BigInt::from(2) * r + BigInt::one()).product();
        self.gamma_order() * boxes
    }

    pub fn member(&self, v: &GVec) -> bool {
        v.ints
            .iter()
            .zip(&self.center)
            .zip(&self.radius)
            .all(|((x, c), r)| (x - c).abs() <= *r)
    }

    pub fn translate(&self, t: &GVec) -> Rect {
        Rect {
            center: self.center.iter().zip(&t.ints).map(|(c, x)| c + x).collect(),
            radius: self.radius.clone(),
            gamma: self.gamma.clone(),
        }
    }

    pub fn minkowski_sum(&self, other: &Rect) -> Result<Rect, RectError> {
        self.same_shape(other)?;
        Ok(Rect {
            center: self.center.iter().zip(&other.center).map(|(a, b)| a + b).collect(),
            radius: self.radius.iter().zip(&other.radius).map(|(a, b)| a + b).collect(),
            gamma: self.gamma.clone(),
        })
    }

    pub fn negate(&self) -> Rect {
        Rect {
            center: self.center.iter().map(|c| -c).collect(),
            radius: self.radius.clone(),
            gamma: self.gamma.clone(),
        }
    }

    pub fn lo(&self, i: usize) -> BigInt {
        &self.center[i] - &self.radius[i]
    }

    pub fn hi(&self, i: usize) -> BigInt {
        &self.center[i] + &self.radius[i]
    }

    /// Set containment, axis by axis.
    pub fn contained_in(&self, other: &Rect) -> bool {
        (0..self.ell()).all(|i| other.lo(i) <= self.lo(i) && self.hi(i) <= other.hi(i))
    }

    pub fn meets(&self, other: &Rect) -> bool {
        (0..self.ell()).all(|i| self.lo(i) <= other.hi(i) && other.lo(i) <= self.hi(i))
    }

    pub fn enumerate(&self, budget: u64) -> Result<Vec<GVec>, RectError> {
        let n = self.cardinality();
        if n > BigInt::from(budget) {
            return Err(RectError::Budget { needed: n, budget });
        }
        let mut out = vec![GVec { ints: Vec::new(), tors: Vec::new() }];
        for i in 0..self.ell() {
            let lo = self.lo(i).to_i64().expect("within budget");
            let hi = self.hi(i).to_i64().expect("within budget");
            out = out
                .into_iter()
                .flat_map(|v| {
                    (lo..=hi).map(move |x| {
                        let mut w = v.clone();
                        w.ints.push(BigInt::from(x));
                        w
                    })
                })
                .collect();
        }
        for &m in &self.gamma {
            out = out
                .into_iter()
                .flat_map(|v| {
                    (0..m).map(move |t| {
                        let mut w = v.clone();
                        w.tors.push(BigInt::from(t));
                        w
                    })
                })
                .collect();
        }
        Ok(out)
    }

    pub fn parse(s: &str) -> Result<Rect, RectError> {
        let err = || RectError::Parse(s.to_string());
        let body = s.trim().strip_prefix("rect(").and_then(|t| t.strip_suffix(')')).ok_or_else(err)?;
        let mut center = None;
        let mut radius = None;
        let mut gamma = None;
        for part in body.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(err)?;
            let v = v.trim().strip_prefix('[').and_then(|t| t.strip_suffix(']')).ok_or_else(err)?;
            let items: Vec<&str> = v.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
            match k.trim() {
                "center" => {
                    center = Some(
                        items.iter().map(|t| t.parse::<BigInt>().map_err(|_| err())).collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "radius" => {
                    radius = Some(
                        items.iter().map(|t| t.parse::<BigInt>().map_err(|_| err())).collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "gamma" => {
                    gamma = Some(
                        items.iter().map(|t| t.parse::<u64>().map_err(|_| err())).collect::<Result<Vec<_>, _>>()?,
                    )
                }
                _ => return Err(err()),
            }
        }
        let (center, radius, gamma) = (center.ok_or_else(err)?, radius.ok_or_else(err)?, gamma.unwrap_or_default());
        if center.len() != radius.len() || radius.iter().any(|r| r.is_negative()) || gamma.contains(&0) {
            return Err(err());
        }
        Ok(Rect { center, radius, gamma })
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(",");
        write!(
            f,
            "rect(center=[{}]; radius=[{}]; gamma=[{}])",
            join(self.center.iter().map(|x| x.to_string()).collect()),
            join(self.radius.iter().map(|x| x.to_string()).collect()),
            join(self.gamma.iter().map(|x| x.to_string()).collect()),
        )
    }
}

/// Counts for one clause of the law sweep.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClauseReport {
    pub name: &'static str,
    pub instances: usize,
    pub enumerated: usize,
    pub counterexamples: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct LawReport {
    pub clauses: Vec<ClauseReport>,
}

impl LawReport {
    pub fn ok(&self) -> bool {
        self.clauses.iter().all(|c| c.counterexamples.is_empty())
    }
}

/// Largest point set a law instance is enumerated against as a second check.
const ENUM_CHECK: u64 = 400;

fn random_rat<R: Rng>(rng: &mut R, max_num: i64, max_den: i64) -> BigRational {
    let d = rng.gen_range(1..=max_den);
    let n = rng.gen_range(1..=max_num);
    rat(n, d)
}

fn random_rect<R: Rng>(rng: &mut R, ell: usize, max_r: i64, centered: bool) -> Rect {
    Rect {
        center: (0..ell)
            .map(|_| BigInt::from(if centered { 0 } else { rng.gen_range(-20..=20) }))
            .collect(),
        radius: (0..ell).map(|_| BigInt::from(rng.gen_range(0..=max_r))).collect(),
        gamma: Vec::new(),
    }
}

/// Every point of `a + b` (elementwise sums) lies in `target`, by enumeration.
fn sum_inside_enum(a: &Rect, b: &Rect, target: &Rect) -> Option<bool> {
    let pa = a.enumerate(ENUM_CHECK).ok()?;
    let pb = b.enumerate(ENUM_CHECK).ok()?;
    Some(pa.iter().all(|x| pb.iter().all(|y| target.member(&x.add(y, &[])))))
}

fn subset_enum(a: &Rect, b: &Rect) -> Option<bool> {
    Some(a.enumerate(ENUM_CHECK).ok()?.iter().all(|x| b.member(x)))
}

struct Sweep<'a, R: Rng> {
    rng: &'a mut R,
    trials: usize,
}

impl<R: Rng> Sweep<'_, R> {
    /// Draws instances until `trials` satisfy the hypothesis; `gen` returns
    /// `None` when its hypothesis fails and `Some((interval_ok, enum_ok, desc))`.
    fn run<F>(&mut self, name: &'static str, mut gen: F) -> ClauseReport
    where
        F: FnMut(&mut R) -> Option<(bool, Option<bool>, String)>,
    {
        let mut rep = ClauseReport { name, ..Default::default() };
        let mut attempts = 0usize;
        while rep.instances < self.trials {
            attempts += 1;
            assert!(attempts < self.trials * 1000, "hypothesis for {name} too rarely satisfied");
            let Some((ok, enum_ok, desc)) = gen(self.rng) else { continue };
            rep.instances += 1;
            if let Some(e) = enum_ok {
                rep.enumerated += 1;
                if !e && rep.counterexamples.len() < 5 {
                    rep.counterexamples.push(format!("enumeration: {desc}"));
                }
            }
            if !ok && rep.counterexamples.len() < 5 {
                rep.counterexamples.push(desc);
            }
        }
        rep
    }
}

/// Random sweep of the rectangle scaling, fitting, and meeting laws.
pub fn verify_rect_laws(trials: usize, seed: u64) -> LawReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sw = Sweep { rng: &mut rng, trials };
    let one = BigRational::one();
    let rec1 = |ell: usize| Rect::rec(vec![BigInt::one(); ell], Vec::new());
    let mut clauses = Vec::new();

    clauses.push(sw.run("scale-of-scale", |r| {
        let ell = r.gen_range(1..=3);
        let a = random_rect(r, ell, 60, false);
        let (l, e) = (random_rat(r, 12, 6), random_rat(r, 12, 6));
        let lhs = a.scale(&e).ok()?.scale(&l).ok()?;
        let rhs = a.scale(&(&l * &e)).ok()?;
        Some((lhs.contained_in(&rhs), subset_enum(&lhs, &rhs), format!("{a} l={l} e={e}")))
    }));
    clauses.push(sw.run("monotone-in-factor", |r| {
        let ell = r.gen_range(1..=3);
        let a = random_rect(r, ell, 60, false);
        let (l, e) = (random_rat(r, 12, 6), random_rat(r, 12, 6));
        if l > e {
            return None;
        }
        let (x, y) = (a.scale(&l).ok()?, a.scale(&e).ok()?);
        Some((x.contained_in(&y), subset_enum(&x, &y), format!("{a} l={l} e={e}")))
    }));
    clauses.push(sw.run("fit-preserved-by-scale", |r| {
        let ell = r.gen_range(1..=3);
        let (a, b) = (random_rect(r, ell, 60, false), random_rect(r, ell, 60, false));
        if !a.fits_in(&b).ok()? {
            return None;
        }
        let l = random_rat(r, 12, 6);
        Some((a.scale(&l).ok()?.fits_in(&b.scale(&l).ok()?).ok()?, None, format!("{a} {b} l={l}")))
    }));
    clauses.push(sw.run("fit-transfer", |r| {
        let ell = r.gen_range(1..=3);
        let (a, b) = (random_rect(r, ell, 80, false), random_rect(r, ell, 80, false));
        let (d, e, l) = (random_rat(r, 3, 8), random_rat(r, 3, 8), random_rat(r, 12, 4));
        if !rec1(ell).fits_in(&b.scale(&d).ok()?).ok()?
            || !b.scale(&(&d * rat(2, 1))).ok()?.fits_in(&a.scale(&e).ok()?).ok()?
        {
            return None;
        }
        let ok = b.scale(&(&l * &d)).ok()?.fits_in(&a.scale(&(&l * &e)).ok()?).ok()?;
        Some((ok, None, format!("{a} {b} d={d} e={e} l={l}")))
    }));
    clauses.push(sw.run("sum-absorbed", |r| {
        let ell = r.gen_range(1..=3);
        let a = random_rect(r, ell, 30, true);
        let b = random_rect(r, ell, 80, false);
        let (l, e) = (random_rat(r, 12, 6), random_rat(r, 3, 8));
        if !a.fits_in(&b.scale(&e).ok()?).ok()? {
            return None;
        }
        let lhs = b.scale(&l).ok()?.minkowski_sum(&a).ok()?;
        let rhs = b.scale(&(&l + &e)).ok()?;
        let en = sum_inside_enum(&b.scale(&l).ok()?, &a, &rhs);
        Some((lhs.contained_in(&rhs), en, format!("{a} {b} l={l} e={e}")))
    }));
    clauses.push(sw.run("sum-covers", |r| {
        let ell = r.gen_range(1..=3);
        let a = random_rect(r, ell, 40, true);
        let b = random_rect(r, ell, 80, false);
        let (l, d) = (random_rat(r, 12, 6), random_rat(r, 3, 8));
        if !rec1(ell).fits_in(&b.scale(&d).ok()?).ok()?
            || !b.scale(&(&d * rat(2, 1))).ok()?.fits_in(&a).ok()?
        {
            return None;
        }
        let lhs = b.scale(&(&l + &d)).ok()?;
        let rhs = b.scale(&l).ok()?.minkowski_sum(&a).ok()?;
        Some((lhs.contained_in(&rhs), subset_enum(&lhs, &rhs), format!("{a} {b} l={l} d={d}")))
    }));
    clauses.push(sw.run("scaled-sum", |r| {
        let ell = r.gen_range(1..=3);
        let a = random_rect(r, ell, 60, true);
        let (l, e) = (random_rat(r, 12, 6), random_rat(r, 12, 6));
        let (x, y) = (a.scale(&l).ok()?, a.scale(&e).ok()?);
        let rhs = a.scale(&(&l + &e)).ok()?;
        let lhs = x.minkowski_sum(&y).ok()?;
        Some((lhs.contained_in(&rhs), sum_inside_enum(&x, &y, &rhs), format!("{a} l={l} e={e}")))
    }));
    clauses.push(sw.run("meeting-persists", |r| {
        let ell = r.gen_range(1..=3);
        let (a, b) = (random_rect(r, ell, 80, false), random_rect(r, ell, 80, false));
        let (d, e) = (random_rat(r, 3, 8), random_rat(r, 3, 8));
        if d >= one
            || !a.meets(&b)
            || !rec1(ell).fits_in(&b.scale(&d).ok()?).ok()?
            || !b.scale(&(&d * rat(2, 1))).ok()?.fits_in(&a.scale(&e).ok()?).ok()?
        {
            return None;
        }
        let (x, y) = (a.scale(&(&one + &e)).ok()?, b.scale(&(&one - &d)).ok()?);
        let en = x.enumerate(ENUM_CHECK).ok().map(|pts| pts.iter().any(|p| y.member(p)));
        Some((x.meets(&y), en, format!("{a} {b} d={d} e={e}")))
    }));
    clauses.push(sw.run("inner-placement", |r| {
        let ell = r.gen_range(1..=3);
        let a = random_rect(r, ell, 40, true);
        let b = random_rect(r, ell, 120, false);
        let (d, e, h) = (random_rat(r, 3, 16), random_rat(r, 3, 8), random_rat(r, 6, 4));
        if d >= one
            || !rec1(ell).fits_in(&b.scale(&d).ok()?).ok()?
            || !b.scale(&(&d * rat(4, 1))).ok()?.fits_in(&a.scale(&e).ok()?).ok()?
        {
            return None;
        }
        let inner = b.scale(&(&one - &d)).ok()?;
        let ha = a.scale(&h).ok()?;
        if !ha.fits_in(&inner).ok()? {
            return None;
        }
        let outer = b.scale(&(&one + &d)).ok()?;
        let w = GVec {
            ints: (0..ell)
                .map(|i| Some(BigInt::from(r.gen_range(outer.lo(i).to_i64()?..=outer.hi(i).to_i64()?))))
                .collect::<Option<Vec<_>>>()?,
            tors: Vec::new(),
        };
        let reach = a.scale(&(&h + &e)).ok()?;
        let mut s = Vec::with_capacity(ell);
        let mut ok = true;
        for i in 0..ell {
            let lo = (inner.lo(i) + &ha.radius[i] - &w.ints[i]).max(-reach.radius[i].clone());
            let hi = (inner.hi(i) - &ha.radius[i] - &w.ints[i]).min(reach.radius[i].clone());
            if lo > hi {
                ok = false;
                break;
            }
            s.push(lo);
        }
        let en = if ok {
            let sv = GVec { ints: s, tors: Vec::new() };
            let placed = ha.translate(&w.add(&sv, &[]));
            Some(reach.member(&sv) && subset_enum(&placed, &inner).unwrap_or(placed.contained_in(&inner)))
        } else {
            None
        };
        Some((ok, en, format!("{a} {b} w={:?} d={d} e={e} h={h}", w.ints)))
    }));
    LawReport { clauses }
}
