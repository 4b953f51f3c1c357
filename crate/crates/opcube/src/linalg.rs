//! Dense exact linear algebra over the rationals.
//!
//! Ranks and echelon forms go through fraction-free (Bareiss) elimination on
//! denominator-cleared integer rows; coinvariant projectors introduce
//! factorial denominators and plain rational pivoting blows coefficients up
//! noticeably on those. Pivots are chosen lexicographically (first usable
//! column, then first usable row) so every basis the module produces is
//! deterministic.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::Q;

/// Dense row-major matrix over `Q`. Entries are kept in reduced form by the
/// `BigRational` constructors.
#[derive(Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Q>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zero(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![Q::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zero(n, n);
        for i in 0..n {
            m.set(i, i, Q::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Q>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        for row in &rows {
            if row.len() != c {
                return Err(Error::Dimension { expected: c, got: row.len(), context: "matrix row" });
            }
        }
        Ok(Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Q) -> Self {
        let mut m = Matrix::zero(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                if !v.is_zero() {
                    m.set(i, j, v);
                }
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

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &Q {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Q) {
        self.data[i * self.cols + j] = v;
    }

    pub fn add_to(&mut self, i: usize, j: usize, v: &Q) {
        if !v.is_zero() {
            let cur = self.get(i, j).clone();
            self.set(i, j, cur + v);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn column(&self, j: usize) -> Vec<Q> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn scale(&self, c: &Q) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * c)
    }

    pub fn neg(&self) -> Matrix {
        Matrix::from_fn(self.rows, self.cols, |i, j| -self.get(i, j).clone())
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix add shape");
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "matrix sub shape");
        Matrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matrix mul shape");
        let mut out = Matrix::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.add_to(i, j, &(a * b));
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Q]) -> Vec<Q> {
        assert_eq!(self.cols, v.len(), "matrix-vector shape");
        let mut out = vec![Q::zero(); self.rows];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                if !a.is_zero() && !v[j].is_zero() {
                    out[i] += a * &v[j];
                }
            }
        }
        out
    }

    /// Stack `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "vstack shape");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix { rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn hstack(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "hstack shape");
        Matrix::from_fn(self.rows, self.cols + other.cols, |i, j| {
            if j < self.cols {
                self.get(i, j).clone()
            } else {
                other.get(i, j - self.cols).clone()
            }
        })
    }

    pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Matrix::zero(rows, cols);
        let (mut ro, mut co) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    let v = b.get(i, j);
                    if !v.is_zero() {
                        out.set(ro + i, co + j, v.clone());
                    }
                }
            }
            ro += b.rows;
            co += b.cols;
        }
        out
    }

    /// Copy `block` into `self` with its top-left corner at `(i, j)`.
    pub fn paste(&mut self, i: usize, j: usize, block: &Matrix) {
        for r in 0..block.rows {
            for c in 0..block.cols {
                let v = block.get(r, c);
                if !v.is_zero() {
                    self.add_to(i + r, j + c, v);
                }
            }
        }
    }

    /// Rank of the column span, by fraction-free elimination.
    pub fn rank(&self) -> usize {
        self.echelon_int().pivots.len()
    }

    /// A basis of the right kernel. Size is `cols - rank`; each vector `v`
    /// satisfies `self * v = 0`. Deterministic: one vector per free column,
    /// in column order, with a `1` in the free coordinate.
    pub fn kernel_basis(&self) -> Vec<Vec<Q>> {
        let ech = self.echelon_int();
        let pivot_set: Vec<usize> = ech.pivots.clone();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivot_set {
            is_pivot[p] = true;
        }
        let mut basis = Vec::new();
        for free in 0..self.cols {
            if is_pivot[free] {
                continue;
            }
            let mut v = vec![Q::zero(); self.cols];
            v[free] = Q::one();
            // Back-substitute the pivot coordinates, bottom row first.
            for (ri, &pc) in pivot_set.iter().enumerate().rev() {
                let row = &ech.rows[ri];
                let mut acc = Q::zero();
                for j in (pc + 1)..self.cols {
                    if !row[j].is_zero() && !v[j].is_zero() {
                        acc += Q::from(row[j].clone()) * &v[j];
                    }
                }
                if !acc.is_zero() {
                    v[pc] = -acc / Q::from(row[pc].clone());
                }
            }
            basis.push(v);
        }
        basis
    }

    /// Reduced row echelon form over `Q` together with the pivot columns.
    pub fn rref(&self) -> (Vec<Vec<Q>>, Vec<usize>) {
        let ech = self.echelon_int();
        let mut rows: Vec<Vec<Q>> = ech
            .rows
            .iter()
            .map(|r| r.iter().map(|x| Q::from(x.clone())).collect())
            .collect();
        let pivots = ech.pivots;
        // Normalize pivots to 1 and eliminate above.
        for ri in 0..pivots.len() {
            let pc = pivots[ri];
            let inv = rows[ri][pc].clone();
            for j in pc..self.cols {
                if !rows[ri][j].is_zero() {
                    let v = rows[ri][j].clone() / &inv;
                    rows[ri][j] = v;
                }
            }
            for up in 0..ri {
                let factor = rows[up][pc].clone();
                if factor.is_zero() {
                    continue;
                }
                for j in pc..self.cols {
                    if !rows[ri][j].is_zero() {
                        let v = rows[up][j].clone() - &factor * &rows[ri][j];
                        rows[up][j] = v;
                    }
                }
            }
        }
        (rows, pivots)
    }

    /// Solve `self * X = rhs` exactly. Free variables are set to zero, so the
    /// solution is deterministic. Returns `None` when inconsistent.
    pub fn solve_right(&self, rhs: &Matrix) -> Option<Matrix> {
        assert_eq!(self.rows, rhs.rows, "solve shape");
        let aug = self.hstack(rhs);
        let (rows, pivots) = aug.rref();
        // Any pivot inside the rhs block means inconsistency.
        if pivots.iter().any(|&p| p >= self.cols) {
            return None;
        }
        let mut x = Matrix::zero(self.cols, rhs.cols);
        for (ri, &pc) in pivots.iter().enumerate() {
            for k in 0..rhs.cols {
                let v = rows[ri][self.cols + k].clone();
                if !v.is_zero() {
                    x.set(pc, k, v);
                }
            }
        }
        Some(x)
    }

    fn echelon_int(&self) -> IntEchelon {
        // Clear denominators row by row, then run Bareiss.
        let mut rows: Vec<Vec<BigInt>> = (0..self.rows)
            .map(|i| {
                let mut l = BigInt::one();
                for j in 0..self.cols {
                    let d = self.get(i, j).denom();
                    l = l.lcm(d);
                }
                (0..self.cols)
                    .map(|j| {
                        let e = self.get(i, j);
                        e.numer() * (&l / e.denom())
                    })
                    .collect()
            })
            .collect();
        let mut pivots = Vec::new();
        let mut prev = BigInt::one();
        let mut r = 0;
        for col in 0..self.cols {
            let Some(pr) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
                continue;
            };
            rows.swap(r, pr);
            let pivot = rows[r][col].clone();
            for i in (r + 1)..rows.len() {
                // Bareiss one-step: every row below is rescaled, including
                // rows whose leading entry is already zero; the division by
                // the previous pivot is exact.
                let lead = rows[i][col].clone();
                for j in 0..self.cols {
                    let v = &pivot * &rows[i][j] - &lead * &rows[r][j];
                    rows[i][j] = &v / &prev;
                }
            }
            prev = pivot;
            pivots.push(col);
            r += 1;
            if r == rows.len() {
                break;
            }
        }
        rows.truncate(pivots.len());
        IntEchelon { rows, pivots }
    }
}

struct IntEchelon {
    rows: Vec<Vec<BigInt>>,
    pivots: Vec<usize>,
}

/// A canonical presentation of `Q^ambient / span(sub)`.
///
/// `proj` is the surjection onto the complement coordinates (the non-pivot
/// columns of the reduced span), `section` includes them back, and
/// `proj * section = id`.
#[derive(Clone, Debug)]
pub struct Quotient {
    pub proj: Matrix,
    pub section: Matrix,
    pub dim: usize,
}

/// Quotient of the ambient space by the span of the given vectors.
pub fn quotient_basis(sub: &[Vec<Q>], ambient: usize) -> Result<Quotient> {
    for v in sub {
        if v.len() != ambient {
            return Err(Error::Dimension { expected: ambient, got: v.len(), context: "quotient vector" });
        }
    }
    let m = Matrix::from_rows(sub.to_vec())?;
    let m = if sub.is_empty() { Matrix::zero(0, ambient) } else { m };
    let (rows, pivots) = m.rref();
    let mut is_pivot = vec![false; ambient];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let free: Vec<usize> = (0..ambient).filter(|&j| !is_pivot[j]).collect();
    let mut proj = Matrix::zero(free.len(), ambient);
    let mut section = Matrix::zero(ambient, free.len());
    for (a, &f) in free.iter().enumerate() {
        proj.set(a, f, Q::one());
        section.set(f, a, Q::one());
        for (ri, &pc) in pivots.iter().enumerate() {
            let c = &rows[ri][f];
            if !c.is_zero() {
                proj.set(a, pc, -c.clone());
            }
        }
    }
    Ok(Quotient { proj, section, dim: free.len() })
}

/// Quotient by the column span of a matrix (the cokernel presentation).
pub fn cokernel(m: &Matrix) -> Quotient {
    let cols: Vec<Vec<Q>> = (0..m.cols()).map(|j| m.column(j)).collect();
    quotient_basis(&cols, m.rows()).expect("columns have ambient length")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{q, qi};

    #[test]
    fn rank_empty_identity_and_dependent() {
        assert_eq!(Matrix::zero(0, 0).rank(), 0);
        assert_eq!(Matrix::identity(2).rank(), 2);
        let m = Matrix::from_rows(vec![vec![qi(1), qi(2)], vec![qi(2), qi(4)]]).unwrap();
        assert_eq!(m.rank(), 1);
    }

    #[test]
    fn kernel_sizes_and_membership() {
        assert!(Matrix::identity(3).kernel_basis().is_empty());
        assert_eq!(Matrix::zero(2, 3).kernel_basis().len(), 3);
        let m = Matrix::from_rows(vec![vec![qi(1), qi(1)]]).unwrap();
        let k = m.kernel_basis();
        assert_eq!(k.len(), 1);
        // Proportional to (1, -1).
        assert_eq!(k[0][0].clone() * &k[0][1].recip(), qi(-1));
        for v in &k {
            assert!(m.mul_vec(v).iter().all(|x| x.is_zero()));
        }
    }

    #[test]
    fn rank_plus_nullity() {
        let m = Matrix::from_rows(vec![
            vec![qi(1), qi(2), qi(3), qi(1)],
            vec![qi(0), qi(1), qi(1), qi(0)],
            vec![qi(1), qi(3), qi(4), qi(1)],
        ])
        .unwrap();
        assert_eq!(m.rank() + m.kernel_basis().len(), m.cols());
    }

    #[test]
    fn fractional_entries() {
        let m = Matrix::from_rows(vec![vec![q(1, 2), q(1, 3)], vec![q(1, 4), q(1, 6)]]).unwrap();
        assert_eq!(m.rank(), 1);
        let k = m.kernel_basis();
        assert_eq!(k.len(), 1);
        assert!(m.mul_vec(&k[0]).iter().all(|x| x.is_zero()));
    }

    #[test]
    fn quotient_examples() {
        // Empty sub: quotient is the identity on ambient.
        let quo = quotient_basis(&[], 2).unwrap();
        assert_eq!(quo.dim, 2);
        assert_eq!(quo.proj, Matrix::identity(2));
        // Sub spans ambient.
        let quo = quotient_basis(&[vec![qi(1), qi(0)], vec![qi(1), qi(1)]], 2).unwrap();
        assert_eq!(quo.dim, 0);
        // One vector in ambient 3.
        let quo = quotient_basis(&[vec![qi(1), qi(0), qi(0)]], 3).unwrap();
        assert_eq!(quo.dim, 2);
        let pi = quo.proj.mul(&quo.section);
        assert_eq!(pi, Matrix::identity(2));
        // Quotienting twice by the same subspace keeps the dimension.
        let again = quotient_basis(&[vec![qi(1), qi(0), qi(0)]], 3).unwrap();
        assert_eq!(again.dim, quo.dim);
        assert_eq!(again.proj, quo.proj);
    }

    #[test]
    fn quotient_length_mismatch() {
        let err = quotient_basis(&[vec![qi(1)]], 2).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn solve_right_consistent_and_not() {
        let a = Matrix::from_rows(vec![vec![qi(1), qi(2)], vec![qi(0), qi(1)]]).unwrap();
        let b = Matrix::from_rows(vec![vec![qi(5)], vec![qi(2)]]).unwrap();
        let x = a.solve_right(&b).unwrap();
        assert_eq!(a.mul(&x), b);
        let a = Matrix::from_rows(vec![vec![qi(1), qi(1)], vec![qi(1), qi(1)]]).unwrap();
        let b = Matrix::from_rows(vec![vec![qi(0)], vec![qi(1)]]).unwrap();
        assert!(a.solve_right(&b).is_none());
    }

    #[test]
    fn deterministic_elimination() {
        let m = Matrix::from_rows(vec![
            vec![qi(0), qi(2), qi(1)],
            vec![qi(3), qi(1), qi(0)],
            vec![qi(3), qi(3), qi(1)],
        ])
        .unwrap();
        assert_eq!(m.kernel_basis(), m.kernel_basis());
        assert_eq!(m.rref().1, vec![0, 1]);
    }
}
