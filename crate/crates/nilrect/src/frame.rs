//! A chart realized on a window over a fixed working region: the substrate
//! shared by the marker, boundary, orthogonalization and array code.

use crate::charts::Chart;
use crate::group_catalog::{Elem, Group};
use crate::rect_algebra::{GVec, Rect};
use crate::window::{RealizedChart, Window, WindowError, WindowKind};
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("rectangle {0} leaves the working region {1}")]
    Outside(Rect, Rect),
    #[error("working region is not contained in the chart domain")]
    Domain,
    #[error("subgroup embeddings need a regular window")]
    Embedding,
    #[error("embedding generators do not commute")]
    NotAbelian,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub window: Arc<Window>,
    pub ell: usize,
    pub gamma: Vec<u64>,
    pub zee: Rect,
    pub dom: Rect,
    pub rc: RealizedChart,
    /// `X^ℋ` as a point mask.
    pub xh: Vec<bool>,
    /// Quotient elements of the unit vectors (integer axes, then torsion)
    /// when `φ` is a homomorphism on the working region.
    pub steps: Option<Vec<usize>>,
    lo: Vec<i64>,
    hi: Vec<i64>,
    strides: Vec<usize>,
    tors_block: usize,
}

/// `∏ gens[j]^{e_j}` for commuting generators.
pub fn embed_elem(g: &Group, gens: &[Elem], e: &Elem) -> Elem {
    let mut out = g.identity();
    for (gen, k) in gens.iter().zip(&e.0) {
        out = g.mul(&out, &g.pow(gen, k).expect("same group")).expect("same group");
    }
    out
}

impl Frame {
    /// Realizes `c` over `working`. With `embed`, the chart's group is the free
    /// abelian group on `embed`, mapped into the window's group.
    pub fn new(
        window: Arc<Window>,
        c: &Chart,
        embed: Option<&[Elem]>,
        working: &Rect,
        budget: u64,
    ) -> Result<Frame, FrameError> {
        if !working.contained_in(&c.dom) {
            return Err(FrameError::Domain);
        }
        let (rc, base) = match embed {
            None => {
                let base = window.family_points(&c.calh);
                (RealizedChart::from_map(&window, working, c.ell, |v| c.eval(v), &base, budget)?, base)
            }
            Some(gens) => {
                if !matches!(window.kind, WindowKind::Regular) {
                    return Err(FrameError::Embedding);
                }
                let g = &window.quotient.group;
                for a in gens {
                    for b in gens {
                        if !g.commutator(a, b).map_or(false, |e| e.is_identity()) {
                            return Err(FrameError::NotAbelian);
                        }
                    }
                }
                let base = vec![true; window.len];
                let rc = RealizedChart::from_map(
                    &window,
                    working,
                    c.ell,
                    |v| embed_elem(g, gens, &c.eval(v)),
                    &base,
                    budget,
                )?;
                (rc, base)
            }
        };
        Ok(Frame::assemble(window, c, rc, base))
    }

    fn assemble(window: Arc<Window>, c: &Chart, rc: RealizedChart, xh: Vec<bool>) -> Frame {
        let r = &rc.region;
        let ell = r.ell();
        let lo: Vec<i64> = (0..ell).map(|i| r.lo(i).to_i64().expect("small")).collect();
        let hi: Vec<i64> = (0..ell).map(|i| r.hi(i).to_i64().expect("small")).collect();
        let tors_block: usize = c.gamma.iter().map(|&m| m as usize).product();
        let mut strides = vec![tors_block; ell];
        for i in (0..ell.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * (hi[i + 1] - lo[i + 1] + 1) as usize;
        }
        let mut f = Frame {
            window,
            ell,
            gamma: c.gamma.clone(),
            zee: c.zee.clone(),
            dom: c.dom.clone(),
            rc,
            xh,
            steps: None,
            lo,
            hi,
            strides,
            tors_block,
        };
        f.steps = f.translation_steps();
        f
    }

    /// `φ(v + eⱼ) = φ(eⱼ)·φ(v)` across the working region, checked exhaustively.
    fn translation_steps(&self) -> Option<Vec<usize>> {
        let dims = self.ell + self.gamma.len();
        let mut zero = vec![0i64; dims];
        let mut steps = Vec::with_capacity(dims);
        for j in 0..dims {
            zero[j] = 1;
            steps.push(self.rc.q[self.vec_index(&zero)?]);
            zero[j] = 0;
        }
        let quot = &self.window.quotient;
        for (k, v) in self.rc.vecs.iter().enumerate() {
            let mut w = v.clone();
            for j in 0..dims {
                w[j] += 1;
                if let Some(k2) = self.vec_index(&w) {
                    if self.rc.q[k2] != quot.mul(steps[j], self.rc.q[k]) {
                        return None;
                    }
                }
                w[j] -= 1;
            }
        }
        Some(steps)
    }

    pub fn len(&self) -> usize {
        self.window.len
    }

    pub fn is_empty(&self) -> bool {
        self.window.len == 0
    }

    pub fn working(&self) -> &Rect {
        &self.rc.region
    }

    /// Region index of a vector given as integer coordinates then torsion.
    pub fn vec_index(&self, v: &[i64]) -> Option<usize> {
        let mut k = 0usize;
        for i in 0..self.ell {
            if v[i] < self.lo[i] || v[i] > self.hi[i] {
                return None;
            }
            k += (v[i] - self.lo[i]) as usize * self.strides[i];
        }
        let mut t = 0usize;
        for (j, &m) in self.gamma.iter().enumerate() {
            t = t * m as usize + v[self.ell + j].rem_euclid(m as i64) as usize;
        }
        Some(k + t)
    }

    pub fn vector(&self, k: usize) -> &[i64] {
        &self.rc.vecs[k]
    }

    fn bounds(&self, r: &Rect) -> Result<(Vec<i64>, Vec<i64>), FrameError> {
        if !r.contained_in(&self.rc.region) {
            return Err(FrameError::Outside(r.clone(), self.rc.region.clone()));
        }
        let lo = (0..self.ell).map(|i| r.lo(i).to_i64().expect("inside region")).collect();
        let hi = (0..self.ell).map(|i| r.hi(i).to_i64().expect("inside region")).collect();
        Ok((lo, hi))
    }

    /// Region indices of the vectors of `r`, in enumeration order.
    pub fn rect_indices(&self, r: &Rect) -> Result<Vec<usize>, FrameError> {
        let (lo, hi) = self.bounds(r)?;
        let mut out = vec![0usize];
        for i in 0..self.ell {
            let mut next = Vec::with_capacity(out.len() * (hi[i] - lo[i] + 1) as usize);
            for &base in &out {
                for x in lo[i]..=hi[i] {
                    next.push(base + (x - self.lo[i]) as usize * self.strides[i]);
                }
            }
            out = next;
        }
        Ok(out.into_iter().flat_map(|b| (0..self.tors_block).map(move |t| b + t)).collect())
    }

    /// As `rect_indices`, ordered with the vectors farthest from the center first,
    /// so containment scans fail early.
    pub fn rect_indices_outer_first(&self, r: &Rect) -> Result<Vec<usize>, FrameError> {
        let mut idx = self.rect_indices(r)?;
        let center: Vec<i64> = r.center.iter().map(|c| c.to_i64().expect("small")).collect();
        let key = |k: &usize| {
            let v = &self.rc.vecs[*k];
            (0..self.ell).map(|i| (v[i] - center[i]).abs()).max().unwrap_or(0)
        };
        idx.sort_by_key(|k| std::cmp::Reverse(key(k)));
        Ok(idx)
    }

    /// `φ(v_k)·x`.
    pub fn act(&self, k: usize, x: usize) -> usize {
        self.window.act_q(self.rc.q[k], x)
    }

    /// `φ(r)·x`.
    pub fn image(&self, r: &Rect, x: usize) -> Result<Vec<usize>, FrameError> {
        Ok(self.rect_indices(r)?.into_iter().map(|k| self.act(k, x)).collect())
    }

    /// Region indices `k` with `φ(v_k)·x = y`.
    pub fn offsets(&self, x: usize, y: usize) -> Vec<usize> {
        self.rc.offsets(&self.window, x, y)
    }

    /// The unique region vector carrying `x` to `y`, if any.
    pub fn offset(&self, x: usize, y: usize) -> Option<usize> {
        self.offsets(x, y).into_iter().next()
    }

    /// `φ(r)·S` for a point mask `S`.
    pub fn dilate(&self, set: &[bool], r: &Rect) -> Result<Vec<bool>, FrameError> {
        let idx = self.rect_indices(r)?;
        let mut out = vec![false; set.len()];
        for x in (0..set.len()).filter(|&x| set[x]) {
            for &k in &idx {
                out[self.act(k, x)] = true;
            }
        }
        Ok(out)
    }

    /// Quotient elements of `φ(r) ∪ φ(r)⁻¹`, deduplicated and sorted.
    pub fn symmetric_closure(&self, r: &Rect) -> Result<Vec<usize>, FrameError> {
        let quot = &self.window.quotient;
        let mut out: Vec<usize> = self
            .rect_indices(r)?
            .into_iter()
            .flat_map(|k| [self.rc.q[k], quot.inv(self.rc.q[k])])
            .collect();
        out.push(quot.identity());
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn gvec(&self, k: usize) -> GVec {
        crate::window::to_gvec(&self.rc.vecs[k], self.ell)
    }

    pub fn axis_len(&self, r: &Rect, i: usize) -> i64 {
        r.radius[i].to_i64().expect("small")
    }
}

/// Radius vector as machine integers.
pub fn radius_i64(r: &Rect) -> Vec<i64> {
    r.radius.iter().map(|x| x.to_i64().expect("small")).collect()
}

pub fn rect_from(center: &[i64], radius: &[i64], gamma: &[u64]) -> Rect {
    Rect {
        center: center.iter().map(|&x| BigInt::from(x)).collect(),
        radius: radius.iter().map(|&x| BigInt::from(x)).collect(),
        gamma: gamma.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::build_abelian_chart;
    use crate::rect_algebra::rat;
    use num_traits::One;

    #[test]
    fn indices_match_enumeration() {
        let g = Group::parse("Z^2 x C3").unwrap();
        let c = build_abelian_chart(&g, &[BigInt::one(), BigInt::one()], &rat(10, 1)).unwrap();
        let w = Arc::new(Window::build(&g, 40).unwrap());
        let f = Frame::new(w, &c, None, &Rect::rec(vec![BigInt::from(4), BigInt::from(3)], vec![3]), 1 << 20).unwrap();
        let sub = rect_from(&[1, -1], &[2, 1], &[3]);
        let idx = f.rect_indices(&sub).unwrap();
        let direct: Vec<usize> = sub
            .enumerate(1000)
            .unwrap()
            .iter()
            .map(|v| {
                let raw: Vec<i64> = v.ints.iter().chain(&v.tors).map(|x| x.to_i64().unwrap()).collect();
                f.rc.index_of(&raw).unwrap()
            })
            .collect();
        assert_eq!(idx, direct);
        for &k in &idx {
            assert_eq!(f.vec_index(f.vector(k)), Some(k));
        }
        assert!(f.rect_indices(&Rect::rec(vec![BigInt::from(5), BigInt::from(1)], vec![3])).is_err());
    }

    #[test]
    fn embedded_line_in_plane() {
        let g = Group::parse("Z^2").unwrap();
        let z = Group::parse("Z").unwrap();
        let c = build_abelian_chart(&z, &[BigInt::one()], &rat(20, 1)).unwrap();
        let w = Arc::new(Window::build(&g, 30).unwrap());
        let gens = [Elem::from_i64(&[0, 1])];
        let f = Frame::new(w.clone(), &c, Some(&gens), &Rect::rec_i64(&[5]), 1 << 20).unwrap();
        let x = w.quotient.encode(&[3, 28]);
        let img = f.image(&Rect::rec_i64(&[2]), x).unwrap();
        let want: Vec<usize> = [26, 27, 28, 29, 0].iter().map(|&b| w.quotient.encode(&[3, b])).collect();
        assert_eq!(img, want);
    }
}
