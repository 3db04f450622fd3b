use anyhow::Context;
use clap::{Parser, Subcommand};
use nilrect::array::{bottom_row_orthogonality, build_free_array, generator_pairs, verify_eventual_agreement};
use nilrect::charts::{verify_chart, Mode};
use nilrect::e0::{check_injective, check_thresholds, e0_encode, related_pairs};
use nilrect::group_catalog::{conjugator_search, hx_subgroup, Conjugator, Elem, Group};
use nilrect::markers::{build_marker_set, partition_marker, verify_marker_set};
use nilrect::ortho::{build_orthogonal_relation, check_parameters, is_orthogonal, q_upper_bound, verify_orthoseq, zee_pairs, OrthoParams};
use nilrect::rect_algebra::{rat, verify_rect_laws};
use nilrect::rough::{count_boundary_clusters, verify_rectangular, EqRel, Regime};
use nilrect::scenario::{validate_scales, Scenario};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "nilrect", about = "Desk-scale charts, rectangular relations and diagonalization arrays")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Full-size constants: symbolic checks only, no enumeration.
    #[arg(long, global = true)]
    strict_constants: bool,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the scenario enumeration budget.
    #[arg(long, global = true)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Random sweep of the rectangle laws.
    VerifyRects {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Builds each level's chart and checks its axioms on a region.
    VerifyChart {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Marker set and its partition for one level.
    Markers {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        level: usize,
    },
    /// Builds a sequence of relations, each orthogonal to the earlier ones.
    Orthogonalize {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long)]
        columns: Option<usize>,
    },
    /// The diagonalization array over the scenario's chain.
    FreeArray {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        columns: Option<usize>,
    },
    /// Binary codes of the array's bottom row.
    E0Encode {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        columns: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
    },
    /// Conjugators between the subgroups attached to binary words.
    ConjugacyDemo {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        bound: u64,
    },
    /// Exact evaluation of the orthogonalizer's parameter inequalities.
    CheckParams {
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    /// Unreadable or malformed input.
    Input(anyhow::Error),
    /// A check failed; carries the first witness.
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

type Outcome = Result<(), Failure>;

struct Ctx {
    out: PathBuf,
    seed: Option<u64>,
    strict: bool,
    budget: Option<u64>,
    summary: String,
}

impl Ctx {
    fn write(&self, name: &str, body: &str) -> anyhow::Result<()> {
        std::fs::write(self.out.join(name), body).with_context(|| format!("writing {name}"))
    }

    fn note(&mut self, line: impl AsRef<str>) {
        self.summary.push_str(line.as_ref());
        self.summary.push('\n');
    }

    fn load(&self, path: &Path) -> anyhow::Result<Scenario> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut s = Scenario::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(b) = self.budget {
            s.budget = b;
        }
        Ok(s)
    }
}

fn check(ok: bool, witness: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Check(witness()))
    }
}

fn level_index(s: &Scenario, level: usize) -> Result<usize, Failure> {
    if level == 0 || level > s.levels.len() {
        return Err(Failure::Input(anyhow::anyhow!("level {level} is not in the scenario")));
    }
    Ok(level - 1)
}

fn verify_rects(cx: &mut Ctx, trials: usize) -> Outcome {
    let rep = verify_rect_laws(trials, cx.seed.unwrap_or(0));
    let mut body = String::new();
    for c in &rep.clauses {
        let _ = writeln!(body, "{}: instances {} enumerated {} counterexamples {}", c.name, c.instances, c.enumerated, c.counterexamples.len());
        for ce in &c.counterexamples {
            let _ = writeln!(body, "  {ce}");
        }
    }
    cx.write("rect_laws.txt", &body)?;
    cx.note(format!("rectangle laws: {} clauses, {} trials each", rep.clauses.len(), trials));
    let first = rep.clauses.iter().find(|c| !c.counterexamples.is_empty());
    check(rep.ok(), || format!("{}: {}", first.unwrap().name, first.unwrap().counterexamples[0]))
}

fn verify_chart_cmd(cx: &mut Ctx, path: &Path) -> Outcome {
    let s = cx.load(path)?;
    let mut first_bad = None;
    for k in 0..s.levels.len() {
        let c = s.chart(k).map_err(|e| Failure::Check(e.to_string()))?;
        let region = s.levels[k].region.clone().unwrap_or_else(|| c.zee.clone());
        let mode = if cx.strict { Mode::Sampled { trials: 0, seed: s.seed } } else { Mode::Exhaustive };
        let rep = verify_chart(&c, mode, &region, s.budget).map_err(|e| Failure::Check(e.to_string()))?;
        cx.write(&format!("chart_level{}.txt", k + 1), &c.certificate(&region, &rep))?;
        cx.note(format!("level {}: ell {} pairs {} ok {}", k + 1, c.ell, rep.pairs, rep.ok()));
        if !rep.ok() && first_bad.is_none() {
            let what = rep
                .counterexamples
                .first()
                .map(|ce| format!("{} fails at r={} s={}", ce.axiom, Elem(ce.r.ints.clone()), Elem(ce.s.ints.clone())))
                .or_else(|| rep.structural.first().cloned())
                .unwrap_or_else(|| "not injective".into());
            first_bad = Some(format!("level {}: {what}", k + 1));
        }
    }
    check(first_bad.is_none(), || first_bad.unwrap())
}

fn markers_cmd(cx: &mut Ctx, path: &Path, level: usize) -> Outcome {
    let s = cx.load(path)?;
    let k = level_index(&s, level)?;
    let w = Arc::new(s.build_window().map_err(|e| Failure::Check(e.to_string()))?);
    let f = s.frame(k, w.clone()).map_err(|e| Failure::Check(e.to_string()))?;
    let l = &s.levels[k];
    let order = s.order(w.len);
    let fail = |e: &dyn std::fmt::Display| Failure::Check(e.to_string());
    let kset = f.symmetric_closure(&l.a.scale(&rat(3 * l.p as i64, 4)).map_err(|e| fail(&e))?).map_err(|e| fail(&e))?;
    let ms = build_marker_set(&w, &kset, &f.xh, &order).map_err(|e| fail(&e))?;
    verify_marker_set(&w, &ms).map_err(|e| fail(&e))?;
    let mut ymask = vec![false; w.len];
    for &y in &ms.members {
        ymask[y] = true;
    }
    let near = f.symmetric_closure(&l.a.scale_int(13 * l.p)).map_err(|e| fail(&e))?;
    let parts = partition_marker(&w, &near, &ymask, &order).map_err(|e| fail(&e))?;
    let mut body = format!("order {}\n|F| {}\nmarkers {}\n", ms.order_hash, kset.len(), ms.members.len());
    for y in &ms.members {
        let _ = writeln!(body, "{y}");
    }
    for (j, p) in parts.iter().enumerate() {
        let pts: Vec<String> = p.iter().map(|y| y.to_string()).collect();
        let _ = writeln!(body, "part {j}: {}", pts.join(" "));
    }
    cx.write("markers.txt", &body)?;
    cx.note(format!("level {level}: {} markers, {} parts, order {}", ms.members.len(), parts.len(), ms.order_hash));
    Ok(())
}

fn orthogonalize_cmd(cx: &mut Ctx, path: &Path, level: usize, columns: Option<usize>) -> Outcome {
    let s = cx.load(path)?;
    let k = level_index(&s, level)?;
    let w = Arc::new(s.build_window().map_err(|e| Failure::Check(e.to_string()))?);
    let f = s.frame(k, w).map_err(|e| Failure::Check(e.to_string()))?;
    let prm = s.params(k);
    let l = &s.levels[k];
    let qa = prm.a.scale(&prm.q).map_err(|e| Failure::Check(e.to_string()))?;
    let mut rels: Vec<EqRel> = Vec::new();
    let mut first_bad: Option<String> = None;
    let total = columns.unwrap_or(s.columns);
    for n in 1..=total {
        let out = match build_orthogonal_relation(&f, &prm, &rels) {
            Ok(o) => o,
            Err(e) => {
                cx.note(format!("relation {n}: construction failed: {e}"));
                first_bad.get_or_insert(format!("relation {n}: {e}"));
                break;
            }
        };
        let mut cert = out.certificate();
        let rect = verify_rectangular(&f, &out.f, &prm.a, &prm.eps, l.rect_bound);
        let rect_line = match &rect {
            Ok(c) => format!("rectangular: ok, {} witnessed classes", c.witnesses.iter().filter(|w| w.is_some()).count()),
            Err(e) => format!("rectangular: FAIL class {} {:?}", e.class, e.kind),
        };
        let _ = writeln!(cert, "{rect_line}");
        if rect.is_err() {
            first_bad.get_or_insert(format!("relation {n}: {rect_line}"));
        }
        for (m, prev) in rels.iter().enumerate() {
            let line = match is_orthogonal(&f, prev, &out.f, &qa) {
                Ok(None) => format!("orthogonal to relation {}: ok", m + 1),
                Ok(Some((axis, x))) => format!("orthogonal to relation {}: FAIL axis {axis} point {x}", m + 1),
                Err(e) => format!("orthogonal to relation {}: FAIL {e}", m + 1),
            };
            if line.contains("FAIL") {
                first_bad.get_or_insert(format!("relation {n}: {line}"));
            }
            let _ = writeln!(cert, "{line}");
        }
        for i in 0..f.ell {
            let m = 1u64 << (19 * f.ell).min(62);
            let line = match count_boundary_clusters(&f, &out.f, &prm.a, &prm.eps, &prm.q, i, m, prm.regime) {
                Ok(c) => {
                    if !c.ok() {
                        first_bad.get_or_insert(format!("relation {n}: {} clusters on axis {i} exceed {}", c.count, c.bound));
                    }
                    format!("clusters axis {i}: {} of bound {} (window {} of {})", c.count, c.bound, c.m_used, c.m_full)
                }
                Err(e) => {
                    first_bad.get_or_insert(format!("relation {n}: clusters: {e}"));
                    format!("clusters axis {i}: FAIL {e}")
                }
            };
            let _ = writeln!(cert, "{line}");
        }
        cx.write(&format!("relation_{n}.txt"), &out.f.dump())?;
        cx.write(&format!("certificate_{n}.txt"), &cert)?;
        cx.note(format!("relation {n}: {} classes, {} markers, {rect_line}", out.f.num_classes(), out.markers.len()));
        rels.push(out.f);
    }
    if rels.len() > 1 {
        let zsize = f.rect_indices(&f.zee).map(|v| v.len()).unwrap_or(0);
        let limit = (f.len() * zsize > 1_000_000).then_some((100_000, s.seed));
        let pairs = zee_pairs(&f, limit).map_err(|e| Failure::Check(e.to_string()))?;
        match verify_orthoseq(&f, &rels, &prm.eps, &prm.q, &pairs, prm.regime) {
            Ok(r) => {
                cx.note(format!("sequence: {} pairs, max failures {}, over ell {}", r.pairs, r.max_failures, r.over.len()));
                if let Some((x, y, fails)) = r.over.first() {
                    first_bad.get_or_insert(format!("pair ({x}, {y}) separated by relations {fails:?}"));
                }
            }
            Err(e) => {
                first_bad.get_or_insert(format!("sequence: {e}"));
            }
        }
    }
    check(first_bad.is_none(), || first_bad.unwrap())
}

fn free_array_cmd(cx: &mut Ctx, path: &Path, columns: Option<usize>) -> Outcome {
    let s = cx.load(path)?;
    let val = validate_scales(&s);
    cx.write("validation.txt", &val.to_string())?;
    if let Some(c) = val.failures().first() {
        cx.note(format!("scale validation failed: {}: {}", c.name, c.detail));
        return Err(Failure::Check(format!("{}: {}", c.name, c.detail)));
    }
    let levels = s.build_levels().map_err(|e| Failure::Check(e.to_string()))?;
    let npts = levels[0].frame.len();
    let order = s.order(npts);
    let b_top = s.b(s.levels.len() - 1);
    let st = build_free_array(levels, b_top, columns.unwrap_or(s.columns), &order);
    cx.write("array_report.txt", &st.report())?;
    for (n, col) in st.columns.iter().enumerate() {
        for (k, e) in col.rows.iter().enumerate() {
            cx.write(&format!("relation_{}_{}.txt", k + 1, n + 1), &e.dump())?;
        }
    }
    cx.note(format!("columns built {}", st.columns.len()));
    if let Some(f) = &st.failure {
        cx.note(format!("stopped: {f}"));
        return Err(Failure::Check(f.to_string()));
    }
    let limit = (npts > 100_000).then_some((1000, s.seed));
    let pairs = generator_pairs(&st, limit);
    let rep = verify_eventual_agreement(&st, &pairs).map_err(|e| Failure::Check(e.to_string()))?;
    let mut body = rep.to_string();
    for line in bottom_row_orthogonality(&st) {
        body.push_str(&line);
        body.push('\n');
    }
    cx.write("agreement.txt", &body)?;
    cx.note(format!("agreement: {} pairs, max row failures {}, bad {}", rep.pairs, rep.max_row_failures, rep.bad.len()));
    check(rep.ok(), || {
        let p = &rep.bad[0];
        format!("level {} pair ({}, {}): row failures {:?}, unexplained {:?}", p.level, p.x, p.y, p.row_failures, p.unexplained)
    })
}

fn e0_cmd(cx: &mut Ctx, path: &Path, columns: Option<usize>, npairs: usize) -> Outcome {
    let s = cx.load(path)?;
    let w = s.build_window().map_err(|e| Failure::Check(e.to_string()))?;
    let order = s.order(w.len);
    let val = validate_scales(&s);
    let st = if val.ok() {
        let levels = s.build_levels().map_err(|e| Failure::Check(e.to_string()))?;
        let b_top = s.b(s.levels.len() - 1);
        Some(build_free_array(levels, b_top, columns.unwrap_or(s.columns), &order))
    } else {
        cx.note(format!("array unavailable: {}", val.failures()[0].name));
        None
    };
    if let Some(f) = st.as_ref().and_then(|st| st.failure.as_ref()) {
        cx.note(format!("array stopped early: {f}"));
    }
    let rows = st.as_ref().map(|st| st.bottom_row()).unwrap_or_default();
    let code = e0_encode(&w, &rows, &order).map_err(|e| Failure::Check(e.to_string()))?;
    cx.write("e0_codes.txt", &code.dump())?;
    let inj = check_injective(&code);
    let pairs = related_pairs(&rows, npairs, s.seed);
    let th = check_thresholds(&rows, &code, &pairs);
    let mut body = format!("points {}\ncolumns {}\nblock width {}\n", w.len, rows.len(), code.width);
    let _ = writeln!(body, "K sizes {:?}", code.k_sizes);
    let _ = writeln!(body, "injective {}", inj.is_ok());
    let _ = writeln!(body, "related pairs {}\nthreshold histogram {:?}\nthreshold violations {}", th.pairs, th.threshold_histogram, th.bad.len());
    cx.write("e0_report.txt", &body)?;
    cx.note(format!("e0: {} points, {} columns, injective {}, threshold violations {}", w.len, rows.len(), inj.is_ok(), th.bad.len()));
    if let Err((x, y)) = inj {
        return Err(Failure::Check(format!("points {x} and {y} share a code")));
    }
    check(th.ok(), || {
        let (x, y, t, b) = th.bad[0];
        format!("pair ({x}, {y}) differs at block {b} past threshold {t}")
    })
}

fn conjugacy_cmd(cx: &mut Ctx, n: usize, bound: u64) -> Outcome {
    if n == 0 {
        return Err(Failure::Input(anyhow::anyhow!("n must be positive")));
    }
    let h = Group::parse("heisenberg").map_err(|e| Failure::Input(e.into()))?;
    let (a, b, c) = (Elem::from_i64(&[1, 0, 0]), Elem::from_i64(&[0, 1, 0]), Elem::from_i64(&[0, 0, 1]));
    let ai = h.inv(&a).expect("same group");
    let lhs = h.mul(&h.mul(&b, &ai).expect("same group"), &h.inv(&b).expect("same group")).expect("same group");
    let rhs = h.mul(&ai, &c).expect("same group");
    let mut first_bad = (lhs != rhs).then(|| format!("b a^-1 b^-1 = {lhs} but a^-1 c = {rhs}"));
    let mut body = format!("identity b0 a0^-1 b0^-1 = a0^-1 c0: {}\n", lhs == rhs);
    let words: Vec<Vec<bool>> = (0..1usize << n).map(|m| (0..n).map(|i| m >> i & 1 == 1).collect()).collect();
    let bits = |v: &[bool]| v.iter().map(|&t| if t { '1' } else { '0' }).collect::<String>();
    let mut found = 0;
    for x in &words {
        for y in &words {
            let (g, hx) = hx_subgroup(x);
            let (_, hy) = hx_subgroup(y);
            let mut expect = g.identity();
            for i in 0..n {
                expect.0[3 * i + 1] = (y[i] as i64 - x[i] as i64).into();
            }
            let res = conjugator_search(&g, &hx, &hy, bound, None);
            let shown = match &res {
                Conjugator::Found(e) => {
                    found += 1;
                    if *e != expect {
                        first_bad.get_or_insert(format!("{} -> {}: found {e}, expected {expect}", bits(x), bits(y)));
                    }
                    e.to_string()
                }
                other => {
                    first_bad.get_or_insert(format!("{} -> {}: {other:?}", bits(x), bits(y)));
                    format!("{other:?}")
                }
            };
            let mut restricted = Vec::new();
            for i in (0..n).filter(|&i| x[i] != y[i]) {
                let support: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let r = conjugator_search(&g, &hx, &hy, bound, Some(&support));
                if r != Conjugator::NoneExists {
                    first_bad.get_or_insert(format!("{} -> {}: search without factor {i} gave {r:?}", bits(x), bits(y)));
                }
                restricted.push(format!("without {i}: {}", if r == Conjugator::NoneExists { "none".into() } else { format!("{r:?}") }));
            }
            let _ = writeln!(body, "{} {} {} {}", bits(x), bits(y), shown, restricted.join("; "));
        }
    }
    cx.write("conjugacy.txt", &body)?;
    cx.note(format!("conjugacy: {} pairs, {} certified", words.len() * words.len(), found));
    check(first_bad.is_none(), || first_bad.unwrap())
}

fn check_params_cmd(cx: &mut Ctx, path: &Path) -> Outcome {
    let s = cx.load(path)?;
    let mut body = String::new();
    let mut first_bad = None;
    for k in 0..s.levels.len() {
        let c = s.chart(k).map_err(|e| Failure::Check(e.to_string()))?;
        let l = &s.levels[k];
        let b = s.b(k);
        let (prm, regime) = if cx.strict {
            (OrthoParams::strict(l.a.clone(), l.epsilon.clone(), l.q.clone(), b), Regime::Strict)
        } else {
            (s.params(k), l.regime)
        };
        let rep = check_parameters(&c.zee, &c.dom, &prm);
        let _ = writeln!(body, "[level {}] ell {} b {} p {} q-bound {}", k + 1, c.ell, b, prm.p, q_upper_bound(c.ell, b));
        let _ = write!(body, "{rep}");
        let block = if regime == Regime::Strict { &rep.strict } else { &rep.relaxed };
        if let Some(chk) = block.iter().find(|c| !c.pass) {
            first_bad.get_or_insert(format!("level {}: {} ({})", k + 1, chk.name, chk.detail));
        }
        cx.note(format!("level {}: {} block {}", k + 1, regime, if rep.passes(regime) { "passes" } else { "fails" }));
    }
    cx.write("params.txt", &body)?;
    check(first_bad.is_none(), || first_bad.unwrap())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: creating {}: {e}", cli.out.display());
        return ExitCode::from(2);
    }
    let mut cx = Ctx { out: cli.out.clone(), seed: cli.seed, strict: cli.strict_constants, budget: cli.budget, summary: String::new() };
    let res = match &cli.cmd {
        Cmd::VerifyRects { trials } => verify_rects(&mut cx, *trials),
        Cmd::VerifyChart { scenario } => verify_chart_cmd(&mut cx, scenario),
        Cmd::Markers { scenario, level } => markers_cmd(&mut cx, scenario, *level),
        Cmd::Orthogonalize { scenario, level, columns } => orthogonalize_cmd(&mut cx, scenario, *level, *columns),
        Cmd::FreeArray { scenario, columns } => free_array_cmd(&mut cx, scenario, *columns),
        Cmd::E0Encode { scenario, columns, pairs } => e0_cmd(&mut cx, scenario, *columns, *pairs),
        Cmd::ConjugacyDemo { n, bound } => conjugacy_cmd(&mut cx, *n, *bound),
        Cmd::CheckParams { scenario } => check_params_cmd(&mut cx, scenario),
    };
    let status = match &res {
        Ok(()) => "ok".to_string(),
        Err(Failure::Check(w)) => format!("FAIL {w}"),
        Err(Failure::Input(e)) => format!("input error: {e:#}"),
    };
    cx.note(format!("status {status}"));
    print!("{}", cx.summary);
    if let Err(e) = cx.write("summary.txt", &cx.summary) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(w)) => {
            eprintln!("assertion failed: {w}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
