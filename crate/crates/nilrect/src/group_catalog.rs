//! Exact arithmetic for a closed catalog of finitely generated nilpotent groups.
//!
//! Every catalog group is a direct product of atoms `Z`, `C_m`, and the
//! integer Heisenberg group. Heisenberg elements are triples `(a, b, c)` with
//!
//! ```text
//! (a, b, c)(a', b', c') = (a + a', b + b', c + c' - a'b)
//! ```
//!
//! so that `[x, y] = x⁻¹y⁻¹xy = (0, 0, 1)` for `x = (1,0,0)`, `y = (0,1,0)`.

use crate::lattice::Diagonal;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use std::collections::{HashSet, VecDeque};
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("element has {got} coordinates, group layout expects {expected}")]
    SpecMismatch { expected: usize, got: usize },
    #[error("cannot parse group spec: {0}")]
    Parse(String),
    #[error("invalid group spec: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupSpec {
    FreeAbelian(u32),
    Cyclic(u64),
    Heisenberg,
    Product(Vec<GroupSpec>),
    Sum(Box<GroupSpec>, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Atom {
    Z,
    Cyc(u64),
    Heis,
}

impl Atom {
    pub fn width(self) -> usize {
        match self {
            Atom::Heis => 3,
            _ => 1,
        }
    }
}

impl GroupSpec {
    pub fn validate(&self) -> Result<(), GroupError> {
        match self {
            GroupSpec::Cyclic(0) => Err(GroupError::Invalid("cyclic order must be >= 1".into())),
            GroupSpec::Product(v) if v.is_empty() => {
                Err(GroupError::Invalid("empty direct product".into()))
            }
            GroupSpec::Product(v) => v.iter().try_for_each(|g| g.validate()),
            GroupSpec::Sum(g, _) => g.validate(),
            _ => Ok(()),
        }
    }

    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        self.push_atoms(&mut out);
        out
    }

    fn push_atoms(&self, out: &mut Vec<Atom>) {
        match self {
            GroupSpec::FreeAbelian(n) => out.extend(std::iter::repeat(Atom::Z).take(*n as usize)),
            GroupSpec::Cyclic(m) => out.push(Atom::Cyc(*m)),
            GroupSpec::Heisenberg => out.push(Atom::Heis),
            GroupSpec::Product(v) => v.iter().for_each(|g| g.push_atoms(out)),
            GroupSpec::Sum(g, n) => (0..*n).for_each(|_| g.push_atoms(out)),
        }
    }

    pub fn hirsch_length(&self) -> usize {
        match self {
            GroupSpec::FreeAbelian(n) => *n as usize,
            GroupSpec::Cyclic(_) => 0,
            GroupSpec::Heisenberg => 3,
            GroupSpec::Product(v) => v.iter().map(|g| g.hirsch_length()).sum(),
            GroupSpec::Sum(g, n) => g.hirsch_length() * *n as usize,
        }
    }

    /// Nilpotency class; the trivial group has class 0.
    pub fn nilpotency_class(&self) -> usize {
        let atoms = self.atoms();
        if atoms.iter().any(|a| *a == Atom::Heis) {
            2
        } else if atoms.iter().any(|a| !matches!(a, Atom::Cyc(1))) {
            1
        } else {
            0
        }
    }

    pub fn parse(s: &str) -> Result<GroupSpec, GroupError> {
        let toks = tokenize(s)?;
        let mut p = Parser { toks, pos: 0 };
        let g = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(GroupError::Parse(format!("trailing input in {s:?}")));
        }
        g.validate()?;
        Ok(g)
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::FreeAbelian(1) => write!(f, "Z"),
            GroupSpec::FreeAbelian(n) => write!(f, "Z^{n}"),
            GroupSpec::Cyclic(m) => write!(f, "C{m}"),
            GroupSpec::Heisenberg => write!(f, "heisenberg"),
            GroupSpec::Product(v) => {
                for (i, g) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " x ")?;
                    }
                    if matches!(g, GroupSpec::Product(_)) {
                        write!(f, "({g})")?;
                    } else {
                        write!(f, "{g}")?;
                    }
                }
                Ok(())
            }
            GroupSpec::Sum(g, n) => write!(f, "sum({g}, {n})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Num(u64),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, GroupError> {
    let mut out = Vec::new();
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let st = i;
            while i < cs.len() && cs[i].is_ascii_digit() {
                i += 1;
            }
            let t: String = cs[st..i].iter().collect();
            out.push(Tok::Num(t.parse().map_err(|_| GroupError::Parse(t.clone()))?));
        } else if c.is_ascii_alphabetic() {
            let st = i;
            while i < cs.len() && cs[i].is_ascii_alphabetic() {
                i += 1;
            }
            out.push(Tok::Word(cs[st..i].iter().collect()));
        } else if "()^,".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(GroupError::Parse(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect_sym(&mut self, c: char) -> Result<(), GroupError> {
        match self.next() {
            Some(Tok::Sym(d)) if d == c => Ok(()),
            other => Err(GroupError::Parse(format!("expected {c:?}, found {other:?}"))),
        }
    }

    fn num(&mut self) -> Result<u64, GroupError> {
        match self.next() {
            Some(Tok::Num(n)) => Ok(n),
            other => Err(GroupError::Parse(format!("expected a number, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<GroupSpec, GroupError> {
        let mut terms = vec![self.term()?];
        while matches!(self.peek(), Some(Tok::Word(w)) if w == "x") {
            self.pos += 1;
            terms.push(self.term()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { GroupSpec::Product(terms) })
    }

    fn term(&mut self) -> Result<GroupSpec, GroupError> {
        match self.next() {
            Some(Tok::Sym('(')) => {
                let g = self.expr()?;
                self.expect_sym(')')?;
                Ok(g)
            }
            Some(Tok::Word(w)) if w == "Z" => {
                if matches!(self.peek(), Some(Tok::Sym('^'))) {
                    self.pos += 1;
                    let n = self.num()?;
                    Ok(GroupSpec::FreeAbelian(
                        u32::try_from(n).map_err(|_| GroupError::Parse("rank too large".into()))?,
                    ))
                } else {
                    Ok(GroupSpec::FreeAbelian(1))
                }
            }
            Some(Tok::Word(w)) if w == "C" => Ok(GroupSpec::Cyclic(self.num()?)),
            Some(Tok::Word(w)) if w == "heisenberg" => Ok(GroupSpec::Heisenberg),
            Some(Tok::Word(w)) if w == "sum" => {
                self.expect_sym('(')?;
                let g = self.expr()?;
                self.expect_sym(',')?;
                let n = self.num()?;
                self.expect_sym(')')?;
                Ok(GroupSpec::Sum(
                    Box::new(g),
                    u32::try_from(n).map_err(|_| GroupError::Parse("count too large".into()))?,
                ))
            }
            other => Err(GroupError::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

/// Element coordinates in the flattened atom layout.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Elem(pub Vec<BigInt>);

impl Elem {
    pub fn from_i64(v: &[i64]) -> Elem {
        Elem(v.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|c| c.is_zero())
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub spec: GroupSpec,
    pub atoms: Vec<Atom>,
    pub offsets: Vec<usize>,
    pub dim: usize,
}

impl Group {
    pub fn new(spec: GroupSpec) -> Result<Group, GroupError> {
        spec.validate()?;
        let atoms = spec.atoms();
        let mut offsets = Vec::with_capacity(atoms.len());
        let mut dim = 0;
        for a in &atoms {
            offsets.push(dim);
            dim += a.width();
        }
        Ok(Group { spec, atoms, offsets, dim })
    }

    pub fn parse(s: &str) -> Result<Group, GroupError> {
        Group::new(GroupSpec::parse(s)?)
    }

    pub fn hirsch_length(&self) -> usize {
        self.spec.hirsch_length()
    }

    pub fn nilpotency_class(&self) -> usize {
        self.spec.nilpotency_class()
    }

    pub fn is_abelian(&self) -> bool {
        self.nilpotency_class() <= 1
    }

    pub fn identity(&self) -> Elem {
        Elem(vec![BigInt::zero(); self.dim])
    }

    /// Modulus of each coordinate; `None` for integer coordinates.
    pub fn coord_moduli(&self) -> Vec<Option<u64>> {
        let mut out = Vec::with_capacity(self.dim);
        for a in &self.atoms {
            match a {
                Atom::Cyc(m) => out.push(Some(*m)),
                Atom::Z => out.push(None),
                Atom::Heis => out.extend([None, None, None]),
            }
        }
        out
    }

    pub fn check(&self, g: &Elem) -> Result<(), GroupError> {
        if g.0.len() != self.dim {
            return Err(GroupError::SpecMismatch { expected: self.dim, got: g.0.len() });
        }
        Ok(())
    }

    /// Builds an element, reducing cyclic coordinates.
    pub fn elem(&self, coords: Vec<BigInt>) -> Result<Elem, GroupError> {
        let mut g = Elem(coords);
        self.check(&g)?;
        self.reduce(&mut g);
        Ok(g)
    }

    fn reduce(&self, g: &mut Elem) {
        for (a, &o) in self.atoms.iter().zip(&self.offsets) {
            if let Atom::Cyc(m) = a {
                g.0[o] = g.0[o].mod_floor(&BigInt::from(*m));
            }
        }
    }

    pub fn mul(&self, g: &Elem, h: &Elem) -> Result<Elem, GroupError> {
        self.check(g)?;
        self.check(h)?;
        Ok(self.mul_raw(g, h))
    }

    pub(crate) fn mul_raw(&self, g: &Elem, h: &Elem) -> Elem {
        let mut out = Vec::with_capacity(self.dim);
        for (a, &o) in self.atoms.iter().zip(&self.offsets) {
            match a {
                Atom::Z => out.push(&g.0[o] + &h.0[o]),
                Atom::Cyc(m) => out.push((&g.0[o] + &h.0[o]).mod_floor(&BigInt::from(*m))),
                Atom::Heis => {
                    let (a1, b1, c1) = (&g.0[o], &g.0[o + 1], &g.0[o + 2]);
                    let (a2, b2, c2) = (&h.0[o], &h.0[o + 1], &h.0[o + 2]);
                    out.push(a1 + a2);
                    out.push(b1 + b2);
                    out.push(c1 + c2 - a2 * b1);
                }
            }
        }
        Elem(out)
    }

    pub fn inv(&self, g: &Elem) -> Result<Elem, GroupError> {
        self.check(g)?;
        Ok(self.inv_raw(g))
    }

    pub(crate) fn inv_raw(&self, g: &Elem) -> Elem {
        let mut out = Vec::with_capacity(self.dim);
        for (a, &o) in self.atoms.iter().zip(&self.offsets) {
            match a {
                Atom::Z => out.push(-&g.0[o]),
                Atom::Cyc(m) => out.push((-&g.0[o]).mod_floor(&BigInt::from(*m))),
                Atom::Heis => {
                    let (a1, b1, c1) = (&g.0[o], &g.0[o + 1], &g.0[o + 2]);
                    out.push(-a1);
                    out.push(-b1);
                    out.push(-c1 - a1 * b1);
                }
            }
        }
        Elem(out)
    }

    /// `g^k` in closed form: `(a,b,c)^k = (ka, kb, kc - ab·k(k-1)/2)`.
    pub fn pow(&self, g: &Elem, k: &BigInt) -> Result<Elem, GroupError> {
        self.check(g)?;
        let tri: BigInt = (k * (k - BigInt::one())) / BigInt::from(2);
        let mut out = Vec::with_capacity(self.dim);
        for (a, &o) in self.atoms.iter().zip(&self.offsets) {
            match a {
                Atom::Z => out.push(k * &g.0[o]),
                Atom::Cyc(m) => out.push((k * &g.0[o]).mod_floor(&BigInt::from(*m))),
                Atom::Heis => {
                    let (a1, b1, c1) = (&g.0[o], &g.0[o + 1], &g.0[o + 2]);
                    out.push(k * a1);
                    out.push(k * b1);
                    out.push(k * c1 - a1 * b1 * &tri);
                }
            }
        }
        Ok(Elem(out))
    }

    /// `g⁻¹h⁻¹gh`.
    pub fn commutator(&self, g: &Elem, h: &Elem) -> Result<Elem, GroupError> {
        let gi = self.inv(g)?;
        let hi = self.inv(h)?;
        Ok(self.mul_raw(&self.mul_raw(&gi, &hi), &self.mul_raw(g, h)))
    }

    pub fn conjugate(&self, g: &Elem, h: &Elem) -> Elem {
        self.mul_raw(&self.mul_raw(g, h), &self.inv_raw(g))
    }

    /// Standard generators: one per `Z`/`C_m` atom and `a`, `b` per Heisenberg atom.
    pub fn generators(&self) -> Vec<Elem> {
        let mut out = Vec::new();
        for (a, &o) in self.atoms.iter().zip(&self.offsets) {
            let mut unit = |k: usize| {
                let mut e = self.identity();
                e.0[o + k] = BigInt::one();
                out.push(e);
            };
            match a {
                Atom::Cyc(1) => {}
                Atom::Heis => {
                    unit(0);
                    unit(1);
                }
                _ => unit(0),
            }
        }
        out
    }

    pub fn random_elem<R: Rng>(&self, rng: &mut R, radius: i64) -> Elem {
        let mut out = Vec::with_capacity(self.dim);
        for m in self.coord_moduli() {
            match m {
                Some(m) => out.push(BigInt::from(rng.gen_range(0..m))),
                None => out.push(BigInt::from(rng.gen_range(-radius..=radius))),
            }
        }
        Elem(out)
    }

    pub fn is_central(&self, g: &Elem) -> bool {
        self.atoms
            .iter()
            .zip(&self.offsets)
            .all(|(a, &o)| *a != Atom::Heis || (g.0[o].is_zero() && g.0[o + 1].is_zero()))
    }

    pub fn center_decomposition(&self) -> CenterDecomposition {
        let mut int_coords = Vec::new();
        let mut tors_coords = Vec::new();
        let mut tors_orders = Vec::new();
        let mut quot_coords = Vec::new();
        for (a, &o) in self.atoms.iter().zip(&self.offsets) {
            match a {
                Atom::Z => int_coords.push(o),
                Atom::Cyc(m) => {
                    tors_coords.push(o);
                    tors_orders.push(*m);
                }
                Atom::Heis => {
                    int_coords.push(o + 2);
                    quot_coords.push(o);
                    quot_coords.push(o + 1);
                }
            }
        }
        let quotient = Group::new(GroupSpec::FreeAbelian(quot_coords.len() as u32))
            .expect("free abelian spec is valid");
        CenterDecomposition {
            center_rank: int_coords.len(),
            center_torsion: tors_orders,
            int_coords,
            tors_coords,
            quot_coords,
            quotient,
        }
    }
}

/// Center `ζ(G) ≅ Z^{ℓ₁} × Γ₁` and the central quotient `G/ζ(G) ≅ Z^{2h}`.
#[derive(Clone, Debug)]
pub struct CenterDecomposition {
    pub center_rank: usize,
    pub center_torsion: Vec<u64>,
    int_coords: Vec<usize>,
    tors_coords: Vec<usize>,
    quot_coords: Vec<usize>,
    pub quotient: Group,
}

impl CenterDecomposition {
    /// Isomorphism `Z^{ℓ₁} × Γ₁ → ζ(G)`.
    pub fn embed(&self, g: &Group, ints: &[BigInt], tors: &[BigInt]) -> Elem {
        let mut e = g.identity();
        for (&c, v) in self.int_coords.iter().zip(ints) {
            e.0[c] = v.clone();
        }
        for ((&c, v), &m) in self.tors_coords.iter().zip(tors).zip(&self.center_torsion) {
            e.0[c] = v.mod_floor(&BigInt::from(m));
        }
        e
    }

    /// Inverse of [`embed`](Self::embed) on central elements.
    pub fn center_coords(&self, g: &Group, e: &Elem) -> Option<(Vec<BigInt>, Vec<BigInt>)> {
        if !g.is_central(e) {
            return None;
        }
        Some((
            self.int_coords.iter().map(|&c| e.0[c].clone()).collect(),
            self.tors_coords.iter().map(|&c| e.0[c].clone()).collect(),
        ))
    }

    pub fn project(&self, e: &Elem) -> Elem {
        Elem(self.quot_coords.iter().map(|&c| e.0[c].clone()).collect())
    }

    /// Section of the projection with all central coordinates zero.
    pub fn lift(&self, g: &Group, q: &Elem) -> Elem {
        let mut e = g.identity();
        for (&c, v) in self.quot_coords.iter().zip(&q.0) {
            e.0[c] = v.clone();
        }
        e
    }
}

/// The 3×3 unitriangular matrix of a Heisenberg triple, `(a,b,c) ↦ [[1,b,-c],[0,1,a],[0,0,1]]`.
pub fn heisenberg_matrix(a: &BigInt, b: &BigInt, c: &BigInt) -> [[BigInt; 3]; 3] {
    let z = BigInt::zero;
    let o = BigInt::one;
    [[o(), b.clone(), -c], [z(), o(), a.clone()], [z(), z(), o()]]
}

pub fn matrix_mul3(x: &[[BigInt; 3]; 3], y: &[[BigInt; 3]; 3]) -> [[BigInt; 3]; 3] {
    let mut out: [[BigInt; 3]; 3] = Default::default();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| &x[i][k] * &y[k][j]).sum();
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subgroup {
    pub generators: Vec<Elem>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Member,
    NotMember,
    Inconclusive,
}

/// Visited-state cap for the bounded word search.
const SEARCH_CAP: usize = 200_000;

impl Subgroup {
    pub fn new(generators: Vec<Elem>) -> Subgroup {
        Subgroup { generators }
    }

    pub fn trivial() -> Subgroup {
        Subgroup { generators: Vec::new() }
    }

    /// Three-valued membership. Exact certificates are used where the structure
    /// allows; otherwise a word search within the coordinate ball `bound`.
    pub fn contains(&self, g: &Group, x: &Elem, bound: u64) -> Membership {
        if x.is_identity() {
            return Membership::Member;
        }
        let gens: Vec<&Elem> = self.generators.iter().filter(|h| !h.is_identity()).collect();
        if gens.is_empty() {
            return Membership::NotMember;
        }
        if !abelianized_contains(g, &gens, x) {
            return Membership::NotMember;
        }
        if g.is_abelian() {
            return Membership::Member;
        }
        // disjoint atom supports split the subgroup into a direct product of cyclic groups
        let supports: Vec<Vec<usize>> = gens.iter().map(|h| support(g, h)).collect();
        let mut seen = vec![false; g.atoms.len()];
        let mut disjoint = true;
        for s in &supports {
            for &i in s {
                if seen[i] {
                    disjoint = false;
                }
                seen[i] = true;
            }
        }
        if disjoint {
            for (i, a) in seen.iter().enumerate() {
                if !a && !atom_is_zero(g, x, i) {
                    return Membership::NotMember;
                }
            }
            for (h, s) in gens.iter().zip(&supports) {
                let xr = restrict(g, x, s);
                let hr = restrict(g, h, s);
                match cyclic_contains(g, &hr, &xr) {
                    Some(true) => {}
                    Some(false) => return Membership::NotMember,
                    None => return Membership::Inconclusive,
                }
            }
            return Membership::Member;
        }
        if gens.len() == 1 {
            return match cyclic_contains(g, gens[0], x) {
                Some(true) => Membership::Member,
                Some(false) => Membership::NotMember,
                None => Membership::Inconclusive,
            };
        }
        word_search(g, &gens, x, bound)
    }

    /// Mutual generator membership.
    pub fn equals(&self, g: &Group, other: &Subgroup, bound: u64) -> Membership {
        let mut verdict = Membership::Member;
        for (a, b) in [(self, other), (other, self)] {
            for h in &a.generators {
                match b.contains(g, h, bound) {
                    Membership::NotMember => return Membership::NotMember,
                    Membership::Inconclusive => verdict = Membership::Inconclusive,
                    Membership::Member => {}
                }
            }
        }
        verdict
    }

    pub fn conjugate_by(&self, g: &Group, by: &Elem) -> Subgroup {
        Subgroup { generators: self.generators.iter().map(|h| g.conjugate(by, h)).collect() }
    }

    /// Generators of `H ∩ ζ(G)` for class at most two: central words given by the
    /// kernel of the projected generator matrix, plus pairwise commutators.
    pub fn center_intersection(&self, g: &Group) -> Subgroup {
        let cd = g.center_decomposition();
        let qdim = cd.quotient.dim;
        let rows: Vec<Vec<BigInt>> = self.generators.iter().map(|h| cd.project(h).0).collect();
        let mut out = Vec::new();
        if rows.is_empty() {
            return Subgroup::trivial();
        }
        let dg = Diagonal::new(&rows, qdim);
        for kv in dg.left_kernel() {
            let mut e = g.identity();
            for (h, n) in self.generators.iter().zip(&kv) {
                e = g.mul_raw(&e, &g.pow(h, n).expect("layout checked"));
            }
            if !e.is_identity() {
                out.push(e);
            }
        }
        for i in 0..self.generators.len() {
            for j in i + 1..self.generators.len() {
                let c = g.commutator(&self.generators[i], &self.generators[j]).expect("layout");
                if !c.is_identity() {
                    out.push(c);
                }
            }
        }
        Subgroup { generators: out }
    }
}

fn support(g: &Group, h: &Elem) -> Vec<usize> {
    (0..g.atoms.len()).filter(|&i| !atom_is_zero(g, h, i)).collect()
}

fn atom_is_zero(g: &Group, x: &Elem, i: usize) -> bool {
    let o = g.offsets[i];
    x.0[o..o + g.atoms[i].width()].iter().all(|c| c.is_zero())
}

fn restrict(g: &Group, x: &Elem, atoms: &[usize]) -> Elem {
    let mut e = g.identity();
    for &i in atoms {
        let o = g.offsets[i];
        for k in 0..g.atoms[i].width() {
            e.0[o + k] = x.0[o + k].clone();
        }
    }
    e
}

/// Image in the abelianisation, as integer vectors modulo cyclic relations.
fn abelianized_contains(g: &Group, gens: &[&Elem], x: &Elem) -> bool {
    let mut cols = Vec::new();
    let mut rel_orders = Vec::new();
    for (a, &o) in g.atoms.iter().zip(&g.offsets) {
        match a {
            Atom::Z => cols.push(o),
            Atom::Cyc(m) => {
                rel_orders.push((cols.len(), *m));
                cols.push(o);
            }
            Atom::Heis => {
                cols.push(o);
                cols.push(o + 1);
            }
        }
    }
    if cols.is_empty() {
        return true;
    }
    let mut rows: Vec<Vec<BigInt>> =
        gens.iter().map(|h| cols.iter().map(|&c| h.0[c].clone()).collect()).collect();
    for (col, m) in rel_orders {
        let mut r = vec![BigInt::zero(); cols.len()];
        r[col] = BigInt::from(m);
        rows.push(r);
    }
    let target: Vec<BigInt> = cols.iter().map(|&c| x.0[c].clone()).collect();
    Diagonal::new(&rows, cols.len()).contains(&target)
}

/// Exact test `x ∈ ⟨h⟩`; `None` when the cyclic part is too large to scan.
fn cyclic_contains(g: &Group, h: &Elem, x: &Elem) -> Option<bool> {
    let mut k: Option<BigInt> = None;
    let mut determined = |hc: &BigInt, xc: &BigInt| -> Option<bool> {
        if hc.is_zero() {
            return None;
        }
        let (q, r) = xc.div_rem(hc);
        if !r.is_zero() {
            return Some(false);
        }
        k = Some(q);
        Some(true)
    };
    let mut verdict = None;
    'outer: for pass in 0..2 {
        for (a, &o) in g.atoms.iter().zip(&g.offsets) {
            let idx: Vec<usize> = match (a, pass) {
                (Atom::Z, 0) => vec![o],
                (Atom::Heis, 0) => vec![o, o + 1],
                (Atom::Heis, 1) => vec![o + 2],
                _ => vec![],
            };
            for c in idx {
                if let Some(v) = determined(&h.0[c], &x.0[c]) {
                    verdict = Some(v);
                    break 'outer;
                }
            }
        }
    }
    match verdict {
        Some(false) => return Some(false),
        Some(true) => {
            let k = k.expect("set with verdict");
            return Some(g.pow(h, &k).ok()? == *x);
        }
        None => {}
    }
    // only cyclic coordinates are nonzero in h: scan one period
    let mut period = BigInt::one();
    for (a, &o) in g.atoms.iter().zip(&g.offsets) {
        if let Atom::Cyc(m) = a {
            if !h.0[o].is_zero() {
                period = period.lcm(&BigInt::from(*m));
            }
        }
    }
    let period = period.to_u64().filter(|&p| p <= 1_000_000)?;
    let mut acc = g.identity();
    for _ in 0..period {
        if acc == *x {
            return Some(true);
        }
        acc = g.mul_raw(&acc, h);
    }
    Some(false)
}

fn word_search(g: &Group, gens: &[&Elem], x: &Elem, bound: u64) -> Membership {
    let moduli = g.coord_moduli();
    let bound = BigInt::from(bound);
    let mut steps: Vec<Elem> = Vec::new();
    for h in gens {
        steps.push((*h).clone());
        steps.push(g.inv_raw(h));
    }
    let mut seen: HashSet<Elem> = HashSet::new();
    let mut queue = VecDeque::new();
    let id = g.identity();
    seen.insert(id.clone());
    queue.push_back(id);
    let mut truncated = false;
    while let Some(cur) = queue.pop_front() {
        for s in &steps {
            let nxt = g.mul_raw(&cur, s);
            if seen.contains(&nxt) {
                continue;
            }
            let inside = nxt.0.iter().zip(&moduli).all(|(c, m)| m.is_some() || c.abs() <= bound);
            if !inside {
                truncated = true;
                continue;
            }
            if nxt == *x {
                return Membership::Member;
            }
            if seen.len() >= SEARCH_CAP {
                return Membership::Inconclusive;
            }
            seen.insert(nxt.clone());
            queue.push_back(nxt);
        }
    }
    if truncated {
        Membership::Inconclusive
    } else {
        Membership::NotMember
    }
}

/// `⊕_{i<N} heisenberg` and the subgroup `⟨a_i⁻¹ c_i^{x(i)} : i < N⟩`.
pub fn hx_subgroup(x: &[bool]) -> (Group, Subgroup) {
    let n = x.len() as u32;
    let g = Group::new(GroupSpec::Sum(Box::new(GroupSpec::Heisenberg), n.max(1)))
        .expect("valid spec");
    let gens = x
        .iter()
        .enumerate()
        .map(|(i, &bit)| {
            let mut e = g.identity();
            e.0[3 * i] = BigInt::from(-1);
            e.0[3 * i + 2] = BigInt::from(bit as i64);
            e
        })
        .collect();
    (g, Subgroup::new(gens))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Conjugator {
    Found(Elem),
    NoneExists,
    Inconclusive,
}

fn factor_of(g: &Group, h: &Elem) -> Option<usize> {
    let s = support(g, h);
    if s.len() == 1 {
        Some(s[0])
    } else {
        None
    }
}

/// Heisenberg triples in the cube of radius `bound`, ordered by ℓ¹ norm then lexicographically.
fn ball_by_norm(bound: i64) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for a in -bound..=bound {
        for b in -bound..=bound {
            for c in -bound..=bound {
                out.push([a, b, c]);
            }
        }
    }
    out.sort_by_key(|v| (v.iter().map(|x| x.abs()).sum::<i64>(), *v));
    out
}

/// Searches `g` with `g·Hx·g⁻¹ = Hy`, factor by factor. Factors outside
/// `support` are forced to the identity. Every returned `g` is certified by
/// conjugating generators both ways and checking membership within `bound`.
pub fn conjugator_search(
    g: &Group,
    hx: &Subgroup,
    hy: &Subgroup,
    bound: u64,
    support_atoms: Option<&[usize]>,
) -> Conjugator {
    let nf = g.atoms.len();
    if g.atoms.iter().any(|a| *a != Atom::Heis) {
        return Conjugator::Inconclusive;
    }
    let mut by_factor_x: Vec<Vec<Elem>> = vec![Vec::new(); nf];
    let mut by_factor_y: Vec<Vec<Elem>> = vec![Vec::new(); nf];
    for (src, dst) in [(hx, &mut by_factor_x), (hy, &mut by_factor_y)] {
        for h in &src.generators {
            if h.is_identity() {
                continue;
            }
            match factor_of(g, h) {
                Some(f) => dst[f].push(h.clone()),
                None => return Conjugator::Inconclusive,
            }
        }
    }
    let ball = ball_by_norm(bound as i64);
    let mut result = g.identity();
    let mut inconclusive = false;
    for f in 0..nf {
        let allowed = support_atoms.map_or(true, |s| s.contains(&f));
        let sx = Subgroup::new(by_factor_x[f].clone());
        let sy = Subgroup::new(by_factor_y[f].clone());
        let o = g.offsets[f];
        let mut found = None;
        let mut undecided = false;
        let candidates: Vec<[i64; 3]> = if allowed { ball.clone() } else { vec![[0, 0, 0]] };
        for cand in candidates {
            let mut c = g.identity();
            for k in 0..3 {
                c.0[o + k] = BigInt::from(cand[k]);
            }
            let fwd = sx.conjugate_by(g, &c);
            match fwd.equals(g, &sy, bound) {
                Membership::Member => {
                    found = Some(c);
                    break;
                }
                Membership::Inconclusive => undecided = true,
                Membership::NotMember => {}
            }
        }
        match found {
            Some(c) => result = g.mul_raw(&result, &c),
            None if !allowed && !undecided => return Conjugator::NoneExists,
            None => inconclusive = true,
        }
    }
    if inconclusive {
        Conjugator::Inconclusive
    } else {
        Conjugator::Found(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn heis() -> Group {
        Group::parse("heisenberg").unwrap()
    }

    #[test]
    fn heisenberg_products() {
        let g = heis();
        let a = Elem::from_i64(&[1, 0, 0]);
        let b = Elem::from_i64(&[0, 1, 0]);
        assert_eq!(g.mul(&a, &b).unwrap(), Elem::from_i64(&[1, 1, 0]));
        assert_eq!(g.mul(&b, &a).unwrap(), Elem::from_i64(&[1, 1, -1]));
        assert_eq!(g.commutator(&a, &b).unwrap(), Elem::from_i64(&[0, 0, 1]));
    }

    #[test]
    fn trivial_laws() {
        let g = Group::parse("Z^2").unwrap();
        let x = Elem::from_i64(&[2, 3]);
        assert_eq!(g.mul(&x, &Elem::from_i64(&[-2, -3])).unwrap(), g.identity());
        assert_eq!(g.mul(&x, &g.identity()).unwrap(), x);
        assert!(matches!(
            g.mul(&x, &Elem::from_i64(&[1])),
            Err(GroupError::SpecMismatch { .. })
        ));
    }

    #[test]
    fn power_matches_repeated_product() {
        let g = Group::parse("heisenberg x C6").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = g.random_elem(&mut rng, 9);
            let k: i64 = rng.gen_range(-6..=6);
            let mut acc = g.identity();
            let step = if k >= 0 { x.clone() } else { g.inv(&x).unwrap() };
            for _ in 0..k.abs() {
                acc = g.mul(&acc, &step).unwrap();
            }
            assert_eq!(g.pow(&x, &BigInt::from(k)).unwrap(), acc);
        }
    }

    #[test]
    fn spec_round_trip_and_hirsch() {
        for s in ["heisenberg", "Z^3", "C6 x heisenberg", "sum(heisenberg, 4)", "Z", "(Z x C2) x Z^2"] {
            assert_eq!(GroupSpec::parse(s).unwrap().to_string(), s);
        }
        assert_eq!(GroupSpec::parse("Z^3").unwrap().hirsch_length(), 3);
        assert_eq!(GroupSpec::parse("heisenberg").unwrap().hirsch_length(), 3);
        assert_eq!(GroupSpec::parse("C6 x heisenberg").unwrap().hirsch_length(), 3);
        assert!(GroupSpec::parse("C0").is_err());
        assert!(GroupSpec::parse("Z x").is_err());
    }

    #[test]
    fn heisenberg_center_by_commutation() {
        let g = heis();
        let cd = g.center_decomposition();
        assert_eq!(cd.center_rank, 1);
        assert_eq!(cd.quotient.spec, GroupSpec::FreeAbelian(2));
        let gens = g.generators();
        let z = cd.embed(&g, &[BigInt::one()], &[]);
        assert_eq!(z, Elem::from_i64(&[0, 0, 1]));
        for h in &gens {
            assert_eq!(g.mul(&z, h).unwrap(), g.mul(h, &z).unwrap());
        }
        for a in -3..=3i64 {
            for b in -3..=3i64 {
                if (a, b) == (0, 0) {
                    continue;
                }
                let x = Elem::from_i64(&[a, b, 5]);
                let commutes_all =
                    gens.iter().all(|h| g.mul(&x, h).unwrap() == g.mul(h, &x).unwrap());
                assert!(!commutes_all);
            }
        }
        let q = Elem::from_i64(&[4, -2]);
        assert_eq!(cd.project(&cd.lift(&g, &q)), q);
        assert!(cd.lift(&cd.quotient, &cd.quotient.identity()).is_identity());
    }

    #[test]
    fn product_center() {
        let g = Group::parse("heisenberg x Z").unwrap();
        let cd = g.center_decomposition();
        assert_eq!(cd.center_rank, 2);
        assert_eq!(cd.quotient.dim, 2);
    }

    #[test]
    fn hx_examples() {
        let (g, h) = hx_subgroup(&[false, false]);
        assert_eq!(h.generators[0], Elem::from_i64(&[-1, 0, 0, 0, 0, 0]));
        let (g1, h1) = hx_subgroup(&[true]);
        let (_, h0) = hx_subgroup(&[false]);
        assert_eq!(h1.generators[0], Elem::from_i64(&[-1, 0, 1]));
        assert_eq!(h1.equals(&g1, &h0, 8), Membership::NotMember);
        let b0 = Elem::from_i64(&[0, 1, 0, 0, 0, 0]);
        assert_eq!(h.contains(&g, &b0, 8), Membership::NotMember);
    }

    #[test]
    fn conjugator_examples() {
        let (g, h0) = hx_subgroup(&[false]);
        let (_, h1) = hx_subgroup(&[true]);
        assert_eq!(conjugator_search(&g, &h0, &h0, 3, None), Conjugator::Found(g.identity()));
        assert_eq!(
            conjugator_search(&g, &h0, &h1, 3, None),
            Conjugator::Found(Elem::from_i64(&[0, 1, 0]))
        );
        let (g2, hx) = hx_subgroup(&[false, true]);
        let (_, hy) = hx_subgroup(&[true, false]);
        assert_eq!(conjugator_search(&g2, &hx, &hy, 3, Some(&[0])), Conjugator::NoneExists);
        assert_eq!(conjugator_search(&g2, &hx, &hy, 0, None), Conjugator::Inconclusive);
    }

    #[test]
    fn word_search_truncates_honestly() {
        let g = heis();
        let h = Subgroup::new(vec![Elem::from_i64(&[1, 0, 0]), Elem::from_i64(&[0, 1, 0])]);
        assert_eq!(h.contains(&g, &Elem::from_i64(&[0, 0, 1]), 3), Membership::Member);
        let far = Elem::from_i64(&[0, 0, 50]);
        assert_eq!(h.contains(&g, &far, 2), Membership::Inconclusive);
    }
}
