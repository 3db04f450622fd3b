//! Integer lattices: diagonalisation with unimodular transforms.
//!
//! For an integer matrix `M` (rows are lattice generators) we compute `U`, `V`
//! unimodular and `D` diagonal with `U · M · V = D`. Row lattice membership,
//! integer combinations, left kernels, and quotient coordinates all follow.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

pub type Mat = Vec<Vec<BigInt>>;

fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect()
}

#[derive(Clone, Debug)]
pub struct Diagonal {
    pub rows: usize,
    pub cols: usize,
    /// Diagonal entries, length `min(rows, cols)`, all nonnegative.
    pub d: Vec<BigInt>,
    pub u: Mat,
    pub v: Mat,
    pub v_inv: Mat,
}

impl Diagonal {
    pub fn new(m: &[Vec<BigInt>], cols: usize) -> Self {
        let rows = m.len();
        let mut a: Mat = m.to_vec();
        for r in &a {
            assert_eq!(r.len(), cols, "ragged matrix");
        }
        let mut u = identity(rows);
        let mut v = identity(cols);
        let mut v_inv = identity(cols);
        let k = rows.min(cols);
        for t in 0..k {
            loop {
                // pivot: smallest nonzero |entry| in the lower-right block
                let mut best: Option<(usize, usize)> = None;
                for i in t..rows {
                    for j in t..cols {
                        if !a[i][j].is_zero() {
                            let better = match best {
                                None => true,
                                Some((bi, bj)) => a[i][j].abs() < a[bi][bj].abs(),
                            };
                            if better {
                                best = Some((i, j));
                            }
                        }
                    }
                }
                let Some((pi, pj)) = best else { break };
                if pi != t {
                    a.swap(pi, t);
                    u.swap(pi, t);
                }
                if pj != t {
                    for row in a.iter_mut() {
                        row.swap(pj, t);
                    }
                    for row in v.iter_mut() {
                        row.swap(pj, t);
                    }
                    v_inv.swap(pj, t);
                }
                let mut clean = true;
                for i in t + 1..rows {
                    if a[i][t].is_zero() {
                        continue;
                    }
                    let q = a[i][t].div_floor(&a[t][t]);
                    for j in 0..cols {
                        let s = &q * &a[t][j];
                        a[i][j] -= s;
                    }
                    for j in 0..rows {
                        let s = &q * &u[t][j];
                        u[i][j] -= s;
                    }
                    if !a[i][t].is_zero() {
                        clean = false;
                    }
                }
                for j in t + 1..cols {
                    if a[t][j].is_zero() {
                        continue;
                    }
                    let q = a[t][j].div_floor(&a[t][t]);
                    for i in 0..rows {
                        let s = &q * &a[i][t];
                        a[i][j] -= s;
                    }
                    for i in 0..cols {
                        let s = &q * &v[i][t];
                        v[i][j] -= s;
                    }
                    // inverse op: row_t += q * row_j
                    for i in 0..cols {
                        let s = &q * &v_inv[j][i];
                        v_inv[t][i] += s;
                    }
                    if !a[t][j].is_zero() {
                        clean = false;
                    }
                }
                if clean {
                    break;
                }
            }
            if a[t][t].is_negative() {
                for j in 0..cols {
                    a[t][j] = -a[t][j].clone();
                }
                for j in 0..rows {
                    u[t][j] = -u[t][j].clone();
                }
            }
        }
        let d = (0..k).map(|i| a[i][i].clone()).collect();
        Diagonal { rows, cols, d, u, v, v_inv }
    }

    pub fn rank(&self) -> usize {
        self.d.iter().filter(|x| !x.is_zero()).count()
    }

    fn row_times(x: &[BigInt], m: &Mat, out_len: usize) -> Vec<BigInt> {
        let mut out = vec![BigInt::zero(); out_len];
        for (i, xi) in x.iter().enumerate() {
            if xi.is_zero() {
                continue;
            }
            for j in 0..out_len {
                out[j] += xi * &m[i][j];
            }
        }
        out
    }

    /// Coordinates of `x` in the diagonal basis, `x · V`.
    pub fn to_diag(&self, x: &[BigInt]) -> Vec<BigInt> {
        Self::row_times(x, &self.v, self.cols)
    }

    pub fn from_diag(&self, y: &[BigInt]) -> Vec<BigInt> {
        Self::row_times(y, &self.v_inv, self.cols)
    }

    /// Integer row vector `n` with `n · M = x`, if `x` lies in the row lattice.
    pub fn solve(&self, x: &[BigInt]) -> Option<Vec<BigInt>> {
        let y = self.to_diag(x);
        let mut z = vec![BigInt::zero(); self.rows];
        for (i, yi) in y.iter().enumerate() {
            let di = self.d.get(i).cloned().unwrap_or_else(BigInt::zero);
            if di.is_zero() {
                if !yi.is_zero() {
                    return None;
                }
            } else {
                let (q, r) = yi.div_rem(&di);
                if !r.is_zero() {
                    return None;
                }
                z[i] = q;
            }
        }
        Some(Self::row_times(&z, &self.u, self.rows))
    }

    pub fn contains(&self, x: &[BigInt]) -> bool {
        self.solve(x).is_some()
    }

    /// A basis of `{n : n · M = 0}`.
    pub fn left_kernel(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows)
            .filter(|&i| self.d.get(i).map_or(true, |d| d.is_zero()))
            .map(|i| self.u[i].clone())
            .collect()
    }

    /// Structure of `Z^cols / rowspace`: for each diagonal column, `0` means a
    /// free coordinate and `m > 1` a torsion coordinate mod `m`; `1` columns vanish.
    pub fn quotient_orders(&self) -> Vec<BigInt> {
        (0..self.cols)
            .map(|i| self.d.get(i).cloned().unwrap_or_else(BigInt::zero))
            .collect()
    }
}
