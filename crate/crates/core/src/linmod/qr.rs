//! Householder QR with column pivoting restricted to column groups.
//!
//! Columns are admitted group by group; inside a group the candidate with the
//! largest remaining norm relative to its original norm is pivoted in next.
//! A candidate whose relative remaining norm falls below [`ALIAS_TOL`] lies in
//! the span of the columns already admitted and is reported as aliased. With
//! a single group this is ordinary pivoted QR; with the intercept and model
//! terms as groups, the squared entries of Q'y give sequential sums of
//! squares directly.

use std::ops::Range;

use super::LinModError;

/// Relative remaining-norm threshold below which a column counts as aliased.
pub const ALIAS_TOL: f64 = 1e-9;

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column {j} has wrong length");
            m.col_mut(j).copy_from_slice(c);
        }
        m
    }

    /// Builds from row slices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "row {i} has wrong length");
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Copy of the listed columns, in the order given.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let columns: Vec<Vec<f64>> = cols.iter().map(|&j| self.col(j).to_vec()).collect();
        Matrix::from_columns(self.rows, &columns)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (j, &b) in v.iter().enumerate() {
            if b != 0.0 {
                for (o, &x) in out.iter_mut().zip(self.col(j)) {
                    *o += x * b;
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    // Scaled to avoid overflow on large entries.
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// A Householder reflector acting on rows `start..`.
#[derive(Debug, Clone)]
struct Reflector {
    start: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// Reflector mapping `x` onto a multiple of the first unit vector.
    fn new(start: usize, x: &[f64]) -> (Self, f64) {
        let xn = norm(x);
        let alpha = if x[0] >= 0.0 { -xn } else { xn };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        let beta = if vv == 0.0 { 0.0 } else { 2.0 / vv };
        (Self { start, v, beta }, alpha)
    }

    fn apply(&self, z: &mut [f64]) {
        if self.beta == 0.0 {
            return;
        }
        let tail = &mut z[self.start..];
        let s = self.beta * dot(&self.v, tail);
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= s * v;
        }
    }
}

/// Result of the grouped decomposition.
#[derive(Debug, Clone)]
pub struct GroupedQr {
    /// Q'X; its first `rank` rows hold R for every column.
    qtx: Matrix,
    /// Original column indices in admission order.
    pub pivots: Vec<usize>,
    /// Columns judged linearly dependent on earlier ones.
    pub aliased: Vec<usize>,
    /// Rank gained by each group.
    pub group_rank: Vec<usize>,
    reflectors: Vec<Reflector>,
}

impl GroupedQr {
    pub fn decompose(x: &Matrix, groups: &[Range<usize>]) -> Result<Self, LinModError> {
        let n = x.rows();
        if n == 0 {
            return Err(LinModError::NoRows);
        }
        let mut a = x.clone();
        let orig: Vec<f64> = (0..x.cols()).map(|j| norm(x.col(j))).collect();
        let mut pivots = Vec::new();
        let mut aliased = Vec::new();
        let mut group_rank = Vec::with_capacity(groups.len());
        let mut reflectors: Vec<Reflector> = Vec::new();

        for (g, range) in groups.iter().enumerate() {
            let mut candidates: Vec<usize> = range.clone().collect();
            let mut gained = 0;
            loop {
                let k = pivots.len();
                if candidates.is_empty() {
                    break;
                }
                let best = if k < n {
                    candidates
                        .iter()
                        .enumerate()
                        .map(|(ci, &j)| {
                            let rel = if orig[j] > 0.0 {
                                norm(&a.col(j)[k..]) / orig[j]
                            } else {
                                0.0
                            };
                            (ci, rel)
                        })
                        .max_by(|p, q| p.1.total_cmp(&q.1))
                        .filter(|&(_, rel)| rel > ALIAS_TOL)
                } else {
                    None
                };
                let Some((ci, _)) = best else {
                    aliased.append(&mut candidates);
                    break;
                };
                let j = candidates.remove(ci);
                let (h, alpha) = Reflector::new(k, &a.col(j)[k..]);
                {
                    let col = a.col_mut(j);
                    col[k] = alpha;
                    col[k + 1..].iter_mut().for_each(|v| *v = 0.0);
                }
                // Later candidates in this group and every later group.
                let pending = candidates
                    .iter()
                    .copied()
                    .chain(groups[g + 1..].iter().flat_map(|r| r.clone()));
                for c in pending {
                    h.apply(a.col_mut(c));
                }
                // Aliased columns keep receiving reflectors so their R entries
                // stay valid for the minimum-norm solve.
                for &c in &aliased {
                    h.apply(a.col_mut(c));
                }
                reflectors.push(h);
                pivots.push(j);
                gained += 1;
            }
            group_rank.push(gained);
        }
        aliased.sort_unstable();
        Ok(Self {
            qtx: a,
            pivots,
            aliased,
            group_rank,
            reflectors,
        })
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Q'y.
    pub fn qt_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut z = y.to_vec();
        for h in &self.reflectors {
            h.apply(&mut z);
        }
        z
    }

    /// Minimum-norm least-squares coefficients, in original column order.
    pub fn solve_min_norm(&self, y: &[f64]) -> Vec<f64> {
        let p = self.qtx.cols();
        let r = self.rank();
        let qty = self.qt_apply(y);
        let c = &qty[..r];
        let mut beta = vec![0.0; p];
        if r == 0 {
            return beta;
        }
        // Columns ordered pivots first, then aliased; R1 = [R11 R12] is r x p.
        let order: Vec<usize> = self.pivots.iter().chain(&self.aliased).copied().collect();
        if self.aliased.is_empty() {
            let w = back_substitute(|i, j| self.qtx.get(i, order[j]), c);
            for (k, &j) in order.iter().enumerate() {
                beta[j] = w[k];
            }
            return beta;
        }
        // Complete orthogonal decomposition: R1' = Z [L; 0], so R1 = L' Z'.
        // Minimum-norm w solves L' u = c, then w = Z [u; 0].
        let mut m = Matrix::zeros(p, r);
        for i in 0..r {
            for (k, &j) in order.iter().enumerate() {
                m.set(k, i, self.qtx.get(i, j));
            }
        }
        let mut zrefl = Vec::with_capacity(r);
        for i in 0..r {
            let (h, alpha) = Reflector::new(i, &m.col(i)[i..]);
            {
                let col = m.col_mut(i);
                col[i] = alpha;
                col[i + 1..].iter_mut().for_each(|v| *v = 0.0);
            }
            for c2 in i + 1..r {
                h.apply(m.col_mut(c2));
            }
            zrefl.push(h);
        }
        // Forward substitution on L' (lower triangular, L'[i][j] = L[j][i]).
        let mut u = vec![0.0; p];
        for i in 0..r {
            let s: f64 = (0..i).map(|j| m.get(j, i) * u[j]).sum();
            u[i] = (c[i] - s) / m.get(i, i);
        }
        for h in zrefl.iter().rev() {
            h.apply(&mut u);
        }
        for (k, &j) in order.iter().enumerate() {
            beta[j] = u[k];
        }
        beta
    }
}

fn back_substitute(r: impl Fn(usize, usize) -> f64, c: &[f64]) -> Vec<f64> {
    let n = c.len();
    let mut w = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| r(i, j) * w[j]).sum();
        w[i] = (c[i] - s) / r(i, i);
    }
    w
}

/// Ordinary least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub residual_df: usize,
    pub rank: usize,
    pub aliased: Vec<usize>,
}

/// Minimum-norm least squares via pivoted QR; rank deficiency is allowed.
pub fn fit_least_squares(x: &Matrix, y: &[f64]) -> Result<LeastSquaresFit, LinModError> {
    if x.rows() == 0 {
        return Err(LinModError::NoRows);
    }
    if y.len() != x.rows() {
        return Err(LinModError::DimensionMismatch {
            rows: x.rows(),
            len: y.len(),
        });
    }
    let qr = GroupedQr::decompose(x, std::slice::from_ref(&(0..x.cols())))?;
    let coefficients = qr.solve_min_norm(y);
    let fitted = x.mul_vec(&coefficients);
    let rss = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(LeastSquaresFit {
        coefficients,
        rss,
        residual_df: x.rows() - qr.rank(),
        rank: qr.rank(),
        aliased: qr.aliased,
    })
}
