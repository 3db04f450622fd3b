//! Scenario files: a window, a chain of subgroups with per-level charts and
//! constants, and the checks that the configured scales fit the window.

use crate::array::Level;
use crate::charts::{build_abelian_chart, build_chart_free, build_chart_general, Chart, ErrorScope};
use crate::frame::{embed_elem, Frame};
use crate::group_catalog::{Elem, Group, GroupSpec, Subgroup};
use crate::ortho::{check_parameters, OrthoParams};
use crate::rect_algebra::{rat, Rect};
use crate::rough::Regime;
use crate::window::Window;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing key {0}")]
    Missing(String),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("{0}")]
    Build(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChartKind {
    /// `ℤ^m` on the level's `m` commuting generators.
    Abelian,
    /// Trivial family over the whole group, covering the generators.
    Free,
    /// Family generated from one subgroup.
    General,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WindowSpec {
    Regular,
    Coset(Vec<Elem>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrderSpec {
    Index,
    Shuffled,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSpec {
    pub generators: Vec<Elem>,
    pub chart: ChartKind,
    pub subgroup: Vec<Elem>,
    pub zee: Option<Rect>,
    pub lambda: BigRational,
    pub dom: Option<Rect>,
    pub region: Option<Rect>,
    pub working: Rect,
    pub a: Rect,
    pub epsilon: BigRational,
    pub q: BigRational,
    pub p: u64,
    pub guard2: u64,
    pub guard3: u64,
    pub regime: Regime,
    pub rect_bound: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub version: u32,
    pub group: GroupSpec,
    pub period: u64,
    pub window: WindowSpec,
    pub seed: u64,
    pub budget: u64,
    pub columns: usize,
    pub b_top: Option<usize>,
    pub order: OrderSpec,
    pub levels: Vec<LevelSpec>,
}

fn elems(v: &[Elem]) -> String {
    v.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_elems(s: &str) -> Result<Vec<Elem>, String> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let body = rest.strip_prefix('(').ok_or("expected '('")?;
        let end = body.find(')').ok_or("expected ')'")?;
        let coords = body[..end]
            .split(',')
            .map(|t| t.trim().parse::<BigInt>().map_err(|_| format!("bad coordinate {t:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Elem(coords));
        rest = body[end + 1..].trim_start();
    }
    Ok(out)
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Strict => "strict",
            Regime::Relaxed => "relaxed",
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "version = {}", self.version)?;
        writeln!(f, "group = {}", self.group)?;
        writeln!(f, "period = {}", self.period)?;
        match &self.window {
            WindowSpec::Regular => writeln!(f, "window = regular")?,
            WindowSpec::Coset(h) => writeln!(f, "window = coset {}", elems(h))?,
        }
        writeln!(f, "chain = {}", self.levels.len())?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "budget = {}", self.budget)?;
        writeln!(f, "columns = {}", self.columns)?;
        if let Some(b) = self.b_top {
            writeln!(f, "b_top = {b}")?;
        }
        match self.order {
            OrderSpec::Index => writeln!(f, "order = index")?,
            OrderSpec::Shuffled => writeln!(f, "order = shuffled")?,
        }
        for (k, l) in self.levels.iter().enumerate() {
            writeln!(f)?;
            writeln!(f, "[level {}]", k + 1)?;
            writeln!(f, "generators = {}", elems(&l.generators))?;
            let kind = match l.chart {
                ChartKind::Abelian => "abelian",
                ChartKind::Free => "free",
                ChartKind::General => "general",
            };
            writeln!(f, "chart = {kind}")?;
            if !l.subgroup.is_empty() {
                writeln!(f, "subgroup = {}", elems(&l.subgroup))?;
            }
            if let Some(z) = &l.zee {
                writeln!(f, "zee = {z}")?;
            }
            writeln!(f, "lambda = {}", l.lambda)?;
            if let Some(d) = &l.dom {
                writeln!(f, "dom = {d}")?;
            }
            if let Some(r) = &l.region {
                writeln!(f, "region = {r}")?;
            }
            writeln!(f, "working = {}", l.working)?;
            writeln!(f, "A = {}", l.a)?;
            writeln!(f, "epsilon = {}", l.epsilon)?;
            writeln!(f, "q = {}", l.q)?;
            writeln!(f, "p = {}", l.p)?;
            writeln!(f, "guard2 = {}", l.guard2)?;
            writeln!(f, "guard3 = {}", l.guard3)?;
            writeln!(f, "regime = {}", l.regime)?;
            writeln!(f, "rect_bound = {}", l.rect_bound)?;
        }
        Ok(())
    }
}

type Pairs = Vec<(usize, String, String)>;

fn take(kv: &mut Pairs, key: &str) -> Option<(usize, String)> {
    let pos = kv.iter().position(|(_, k, _)| k == key)?;
    let (line, _, v) = kv.remove(pos);
    Some((line, v))
}

fn need(kv: &mut Pairs, key: &str) -> Result<(usize, String), ScenarioError> {
    take(kv, key).ok_or_else(|| ScenarioError::Missing(key.to_string()))
}

fn num<T: std::str::FromStr>(line: usize, v: &str) -> Result<T, ScenarioError> {
    v.trim().parse::<T>().map_err(|_| ScenarioError::Parse { line, msg: format!("bad number {v:?}") })
}

fn rect(line: usize, v: &str) -> Result<Rect, ScenarioError> {
    Rect::parse(v).map_err(|e| ScenarioError::Parse { line, msg: e.to_string() })
}

fn ratio(line: usize, v: &str) -> Result<BigRational, ScenarioError> {
    let r: BigRational = num(line, v)?;
    if r <= rat(0, 1) {
        return Err(ScenarioError::Parse { line, msg: format!("{v} must be positive") });
    }
    Ok(r)
}

fn elem_list(line: usize, v: &str) -> Result<Vec<Elem>, ScenarioError> {
    parse_elems(v).map_err(|msg| ScenarioError::Parse { line, msg })
}

fn leftover(kv: &Pairs) -> Result<(), ScenarioError> {
    match kv.first() {
        Some((line, k, _)) => Err(ScenarioError::Parse { line: *line, msg: format!("unknown key {k:?}") }),
        None => Ok(()),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut head: Pairs = Vec::new();
        let mut sections: Vec<(usize, Pairs)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let k: usize = name
                    .strip_prefix("level")
                    .map(str::trim)
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| ScenarioError::Parse { line, msg: format!("bad section {t:?}") })?;
                if k != sections.len() + 1 {
                    return Err(ScenarioError::Parse { line, msg: format!("expected level {}", sections.len() + 1) });
                }
                sections.push((line, Vec::new()));
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| ScenarioError::Parse { line, msg: "expected key = value".into() })?;
            let entry = (line, k.trim().to_string(), v.trim().to_string());
            let target = match sections.last_mut() {
                Some((_, kv)) => kv,
                None => &mut head,
            };
            if target.iter().any(|(_, k2, _)| *k2 == entry.1) {
                return Err(ScenarioError::Parse { line, msg: format!("duplicate key {:?}", entry.1) });
            }
            target.push(entry);
        }

        let (line, v) = need(&mut head, "version")?;
        let version: u32 = num(line, &v)?;
        if version != VERSION {
            return Err(ScenarioError::Version(version));
        }
        let (line, v) = need(&mut head, "group")?;
        let group = GroupSpec::parse(&v).map_err(|e| ScenarioError::Parse { line, msg: e.to_string() })?;
        let (line, v) = need(&mut head, "period")?;
        let period: u64 = num(line, &v)?;
        if period < 2 {
            return Err(ScenarioError::Parse { line, msg: "period must be at least 2".into() });
        }
        let window = match take(&mut head, "window") {
            None => WindowSpec::Regular,
            Some((_, v)) if v == "regular" => WindowSpec::Regular,
            Some((line, v)) => match v.strip_prefix("coset") {
                Some(rest) => WindowSpec::Coset(elem_list(line, rest)?),
                None => return Err(ScenarioError::Parse { line, msg: format!("bad window {v:?}") }),
            },
        };
        let (line, v) = need(&mut head, "chain")?;
        let chain: usize = num(line, &v)?;
        if chain != sections.len() {
            return Err(ScenarioError::Parse { line, msg: format!("chain = {chain} but {} level sections", sections.len()) });
        }
        let (line, v) = need(&mut head, "seed")?;
        let seed = num(line, &v)?;
        let (line, v) = need(&mut head, "budget")?;
        let budget = num(line, &v)?;
        let (line, v) = need(&mut head, "columns")?;
        let columns = num(line, &v)?;
        let b_top = take(&mut head, "b_top").map(|(line, v)| num(line, &v)).transpose()?;
        let order = match take(&mut head, "order") {
            None => OrderSpec::Index,
            Some((_, v)) if v == "index" => OrderSpec::Index,
            Some((_, v)) if v == "shuffled" => OrderSpec::Shuffled,
            Some((line, v)) => return Err(ScenarioError::Parse { line, msg: format!("bad order {v:?}") }),
        };
        leftover(&head)?;

        let mut levels = Vec::new();
        for (_, mut kv) in sections {
            let (line, v) = need(&mut kv, "generators")?;
            let generators = elem_list(line, &v)?;
            let (line, v) = need(&mut kv, "chart")?;
            let chart = match v.as_str() {
                "abelian" => ChartKind::Abelian,
                "free" => ChartKind::Free,
                "general" => ChartKind::General,
                _ => return Err(ScenarioError::Parse { line, msg: format!("bad chart {v:?}") }),
            };
            let subgroup = take(&mut kv, "subgroup").map(|(l, v)| elem_list(l, &v)).transpose()?.unwrap_or_default();
            let zee = take(&mut kv, "zee").map(|(l, v)| rect(l, &v)).transpose()?;
            let (line, v) = need(&mut kv, "lambda")?;
            let lambda = ratio(line, &v)?;
            let dom = take(&mut kv, "dom").map(|(l, v)| rect(l, &v)).transpose()?;
            let region = take(&mut kv, "region").map(|(l, v)| rect(l, &v)).transpose()?;
            let (line, v) = need(&mut kv, "working")?;
            let working = rect(line, &v)?;
            let (line, v) = need(&mut kv, "A")?;
            let a = rect(line, &v)?;
            let (line, v) = need(&mut kv, "epsilon")?;
            let epsilon = ratio(line, &v)?;
            let (line, v) = need(&mut kv, "q")?;
            let q = ratio(line, &v)?;
            let (line, v) = need(&mut kv, "p")?;
            let p = num(line, &v)?;
            let (line, v) = need(&mut kv, "guard2")?;
            let guard2 = num(line, &v)?;
            let (line, v) = need(&mut kv, "guard3")?;
            let guard3 = num(line, &v)?;
            let (line, v) = need(&mut kv, "regime")?;
            let regime = match v.as_str() {
                "strict" => Regime::Strict,
                "relaxed" => Regime::Relaxed,
                _ => return Err(ScenarioError::Parse { line, msg: format!("bad regime {v:?}") }),
            };
            let rect_bound = take(&mut kv, "rect_bound").map(|(l, v)| num(l, &v)).transpose()?.unwrap_or(2);
            leftover(&kv)?;
            if chart == ChartKind::Abelian && zee.is_none() {
                return Err(ScenarioError::Missing("zee".into()));
            }
            levels.push(LevelSpec {
                generators,
                chart,
                subgroup,
                zee,
                lambda,
                dom,
                region,
                working,
                a,
                epsilon,
                q,
                p,
                guard2,
                guard3,
                regime,
                rect_bound,
            });
        }
        Ok(Scenario { version, group, period, window, seed, budget, columns, b_top, order, levels })
    }

    pub fn group(&self) -> Group {
        Group::new(self.group.clone()).expect("validated spec")
    }

    pub fn build_window(&self) -> Result<Window, ScenarioError> {
        let g = self.group();
        match &self.window {
            WindowSpec::Regular => Window::build(&g, self.period),
            WindowSpec::Coset(h) => Window::build_coset(&g, &Subgroup::new(h.clone()), self.period, self.budget),
        }
        .map_err(|e| ScenarioError::Build(e.to_string()))
    }

    /// Point enumeration order used by markers and selectors.
    pub fn order(&self, n: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).collect();
        if self.order == OrderSpec::Shuffled {
            v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(self.seed));
        }
        v
    }

    /// The level's chart, in the coordinates of its own group.
    pub fn chart(&self, k: usize) -> Result<Chart, ScenarioError> {
        let l = &self.levels[k];
        let g = self.group();
        let err = |e: crate::charts::ChartError| ScenarioError::Build(format!("level {}: {e}", k + 1));
        let mut c = match l.chart {
            ChartKind::Abelian => {
                let z = l.zee.as_ref().expect("checked at parse");
                let zg = Group::parse(&format!("Z^{}", l.generators.len())).map_err(|e| ScenarioError::Build(e.to_string()))?;
                build_abelian_chart(&zg, &z.radius, &l.lambda).map_err(err)?
            }
            ChartKind::Free => build_chart_free(&g, &l.generators, &l.lambda, &ErrorScope::default()).map_err(err)?,
            ChartKind::General => build_chart_general(
                &g,
                &[Subgroup::new(l.subgroup.clone())],
                &l.generators,
                &l.lambda,
                &rat(3, 1),
                &ErrorScope::default(),
            )
            .map_err(err)?,
        };
        if l.chart != ChartKind::Abelian {
            if let Some(z) = &l.zee {
                c.zee = z.clone();
            }
        }
        if let Some(d) = &l.dom {
            c.dom = d.clone();
        }
        Ok(c)
    }

    pub fn params(&self, k: usize) -> OrthoParams {
        let l = &self.levels[k];
        OrthoParams {
            a: l.a.clone(),
            eps: l.epsilon.clone(),
            q: l.q.clone(),
            b: self.b(k),
            p: l.p,
            guard2: l.guard2,
            guard3: l.guard3,
            regime: l.regime,
        }
    }

    /// `b_k = ℓ_{k+1} + 1` below the top; the top row takes `b_top` or the column count.
    pub fn b(&self, k: usize) -> usize {
        if k + 1 < self.levels.len() {
            self.chart(k + 1).map(|c| c.ell + 1).unwrap_or(1)
        } else {
            self.b_top.unwrap_or(self.columns)
        }
    }

    /// Group element of a chart vector, in the window's group.
    fn image(&self, k: usize, c: &Chart, v: &crate::rect_algebra::GVec) -> Elem {
        let l = &self.levels[k];
        match l.chart {
            ChartKind::Abelian => embed_elem(&self.group(), &l.generators, &c.eval(v)),
            _ => c.eval(v),
        }
    }

    pub fn frame(&self, k: usize, window: Arc<Window>) -> Result<Frame, ScenarioError> {
        let l = &self.levels[k];
        let c = self.chart(k)?;
        let embed = (l.chart == ChartKind::Abelian).then_some(l.generators.as_slice());
        Frame::new(window, &c, embed, &l.working, self.budget).map_err(|e| ScenarioError::Build(format!("level {}: {e}", k + 1)))
    }

    pub fn build_levels(&self) -> Result<Vec<Level>, ScenarioError> {
        let w = Arc::new(self.build_window()?);
        (0..self.levels.len())
            .map(|k| {
                let f = self.frame(k, w.clone())?;
                let gens = self.levels[k].generators.iter().map(|g| w.quotient.reduce(g)).collect();
                Ok(Level::new(f, self.params(k), gens, self.levels[k].rect_bound))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct ScaleCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<ScaleCheck>,
    /// Checks skipped because they would not fit the budget.
    pub symbolic_only: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&ScaleCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    fn push(&mut self, name: String, pass: bool, detail: impl Into<String>) {
        self.checks.push(ScaleCheck { name, pass, detail: detail.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail)?;
        }
        for s in &self.symbolic_only {
            writeln!(f, "skip {s}: unenumerable, symbolic-only")?;
        }
        Ok(())
    }
}

fn card(r: &Rect) -> u64 {
    r.cardinality().to_u64().unwrap_or(u64::MAX)
}

/// Every containment the downstream operations rely on, at the configured constants.
pub fn validate_scales(s: &Scenario) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let window = match s.build_window() {
        Ok(w) => {
            rep.push("window".into(), true, format!("{} points", w.len));
            Some(Arc::new(w))
        }
        Err(e) => {
            rep.push("window".into(), false, e.to_string());
            None
        }
    };
    let mut charts = Vec::new();
    for k in 0..s.levels.len() {
        let tag = |what: &str| format!("level {} {what}", k + 1);
        let l = &s.levels[k];
        let c = match s.chart(k) {
            Ok(c) => c,
            Err(e) => {
                rep.push(tag("chart"), false, e.to_string());
                charts.push(None);
                continue;
            }
        };
        rep.push(tag("chart"), true, format!("ell {} Z {} dom {}", c.ell, c.zee, c.dom));
        rep.push(tag("3Z in dom"), c.zee.scale_int(3).contained_in(&c.dom), format!("3Z = {}", c.zee.scale_int(3)));
        rep.push(tag("working in dom"), l.working.contained_in(&c.dom), format!("working = {}", l.working));
        let touched = l.a.scale_int(14 * l.p);
        rep.push(tag("14pA in working"), touched.contained_in(&l.working), format!("14pA = {touched}"));
        let prm = s.params(k);
        let pr = check_parameters(&c.zee, &c.dom, &prm);
        let block = if l.regime == Regime::Strict { &pr.strict } else { &pr.relaxed };
        for chk in block {
            rep.push(tag(&chk.name), chk.pass, chk.detail.clone());
        }
        match (&window, l.regime) {
            (Some(w), Regime::Relaxed) if card(&l.working) <= s.budget => match s.frame(k, w.clone()) {
                Ok(_) => rep.push(tag("working injects"), true, format!("{} vectors", card(&l.working))),
                Err(e) => rep.push(tag("working injects"), false, e.to_string()),
            },
            _ => rep.symbolic_only.push(tag("working injects")),
        }
        // U_k ⊆ φ_k(𝒵_k)
        let zimg = if card(&c.zee) <= s.budget {
            c.zee.enumerate(s.budget).ok().map(|vs| vs.iter().map(|v| s.image(k, &c, v)).collect::<HashSet<Elem>>())
        } else {
            None
        };
        match &zimg {
            Some(set) => {
                let missing: Vec<String> = l.generators.iter().filter(|g| !set.contains(g)).map(|g| g.to_string()).collect();
                rep.push(tag("U in phi(Z)"), missing.is_empty(), if missing.is_empty() { "covered".into() } else { format!("missing {}", missing.join(" ")) });
            }
            None => rep.symbolic_only.push(tag("U in phi(Z)")),
        }
        charts.push(Some((c, zimg)));
    }
    // Im(φ_k) ⊆ φ_{k+1}(𝒵_{k+1})
    for k in 0..s.levels.len().saturating_sub(1) {
        let name = format!("level {} image in level {} Z", k + 1, k + 2);
        let (Some((ck, _)), Some((_, Some(up)))) = (&charts[k], &charts[k + 1]) else {
            rep.symbolic_only.push(name);
            continue;
        };
        if card(&ck.dom) > s.budget {
            rep.symbolic_only.push(name);
            continue;
        }
        let vs = ck.dom.enumerate(s.budget).unwrap_or_default();
        let out = vs.iter().map(|v| s.image(k, ck, v)).find(|g| !up.contains(g));
        match out {
            None => rep.push(name, true, format!("{} elements", vs.len())),
            Some(g) => rep.push(name, false, format!("{g} is outside")),
        }
    }
    rep
}
