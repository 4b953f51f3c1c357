//! Finitely supported chain complexes over `Q` and their calculus.
//!
//! Conventions, fixed once and used everywhere:
//!
//! * the differential in degree `n` is a map `C_n -> C_{n-1}`;
//! * `cone(f)_n = Y_n (+) X_{n-1}` with `d(y, x) = (dy + f x, -dx)`;
//! * `shift(C, k)` puts degree `n` in degree `n + k` and multiplies the
//!   differential by `(-1)^k`;
//! * `(C (x) D)_n = (+)_{p+q=n} C_p (x) D_q` with
//!   `d(x (x) y) = dx (x) y + (-1)^p x (x) dy`;
//! * a complex is `n`-connected when its homology vanishes in degrees `<= n`,
//!   and a map is `k`-connected when its cone is `k`-connected.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::linalg::{cokernel, Matrix, Quotient};
use crate::Q;

/// Integer extended with both infinities, ordered `-inf < n < +inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Connectivity {
    NegInfinite,
    Finite(i64),
    Infinite,
}

impl Connectivity {
    pub fn finite(self) -> Option<i64> {
        match self {
            Connectivity::Finite(n) => Some(n),
            _ => None,
        }
    }

    /// Addition with `+inf` absorbing; adding the two infinities is a bug.
    pub fn plus(self, other: Connectivity) -> Connectivity {
        use Connectivity::*;
        match (self, other) {
            (Infinite, NegInfinite) | (NegInfinite, Infinite) => {
                panic!("indeterminate sum of opposite infinities")
            }
            (Infinite, _) | (_, Infinite) => Infinite,
            (NegInfinite, _) | (_, NegInfinite) => NegInfinite,
            (Finite(a), Finite(b)) => Finite(a + b),
        }
    }

    pub fn plus_int(self, k: i64) -> Connectivity {
        self.plus(Connectivity::Finite(k))
    }
}

impl std::fmt::Display for Connectivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Connectivity::NegInfinite => write!(f, "-inf"),
            Connectivity::Finite(n) => write!(f, "{n}"),
            Connectivity::Infinite => write!(f, "inf"),
        }
    }
}

impl serde::Serialize for Connectivity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Connectivity::Finite(n) => s.serialize_i64(*n),
            Connectivity::Infinite => s.serialize_str("inf"),
            Connectivity::NegInfinite => s.serialize_str("-inf"),
        }
    }
}

impl<'de> serde::Deserialize<'de> for Connectivity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::Number(n) => n
                .as_i64()
                .map(Connectivity::Finite)
                .ok_or_else(|| D::Error::custom("connectivity out of range")),
            serde_json::Value::String(s) if s == "inf" => Ok(Connectivity::Infinite),
            serde_json::Value::String(s) if s == "-inf" => Ok(Connectivity::NegInfinite),
            other => Err(D::Error::custom(format!("bad connectivity value {other}"))),
        }
    }
}

/// A finitely supported chain complex. Degrees with zero dimension are not
/// stored; differentials are stored for degrees where source and target are
/// both nonzero.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ChainComplex {
    dims: BTreeMap<i64, usize>,
    d: BTreeMap<i64, Matrix>,
}

impl ChainComplex {
    /// Validating constructor: checks block shapes and `d * d = 0`.
    pub fn new(dims: BTreeMap<i64, usize>, d: BTreeMap<i64, Matrix>) -> Result<Self> {
        let c = Self::new_unchecked(dims, d);
        c.validate()?;
        Ok(c)
    }

    pub fn new_unchecked(dims: BTreeMap<i64, usize>, d: BTreeMap<i64, Matrix>) -> Self {
        let dims: BTreeMap<i64, usize> = dims.into_iter().filter(|&(_, n)| n > 0).collect();
        let d = d
            .into_iter()
            .filter(|(n, m)| {
                dims.contains_key(n) && dims.contains_key(&(n - 1)) && !m.is_zero()
            })
            .collect();
        ChainComplex { dims, d }
    }

    pub fn validate(&self) -> Result<()> {
        for (&n, m) in &self.d {
            if m.rows() != self.dim(n - 1) || m.cols() != self.dim(n) {
                return Err(Error::Shape(format!(
                    "differential at degree {n} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    self.dim(n - 1),
                    self.dim(n)
                )));
            }
        }
        for &n in self.dims.keys() {
            let dd = self.differential(n).mul(&self.differential(n + 1));
            if !dd.is_zero() {
                return Err(Error::NotAComplex { degree: n + 1 });
            }
        }
        Ok(())
    }

    pub fn zero() -> Self {
        ChainComplex { dims: BTreeMap::new(), d: BTreeMap::new() }
    }

    /// One copy of `Q` in the given degree.
    pub fn sphere(degree: i64) -> Self {
        ChainComplex { dims: BTreeMap::from([(degree, 1)]), d: BTreeMap::new() }
    }

    /// The monoidal unit: `Q` in degree zero.
    pub fn unit() -> Self {
        Self::sphere(0)
    }

    /// Acyclic two-step complex `Q -> Q` in degrees `top, top - 1`.
    pub fn disk(top: i64) -> Self {
        let dims = BTreeMap::from([(top, 1), (top - 1, 1)]);
        let d = BTreeMap::from([(top, Matrix::identity(1))]);
        ChainComplex { dims, d }
    }

    pub fn dim(&self, degree: i64) -> usize {
        self.dims.get(&degree).copied().unwrap_or(0)
    }

    pub fn dims(&self) -> &BTreeMap<i64, usize> {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn degrees(&self) -> impl Iterator<Item = i64> + '_ {
        self.dims.keys().copied()
    }

    pub fn min_degree(&self) -> Option<i64> {
        self.dims.keys().next().copied()
    }

    pub fn max_degree(&self) -> Option<i64> {
        self.dims.keys().next_back().copied()
    }

    /// The differential out of `degree`, materialized with correct shape.
    pub fn differential(&self, degree: i64) -> Matrix {
        match self.d.get(&degree) {
            Some(m) => m.clone(),
            None => Matrix::zero(self.dim(degree - 1), self.dim(degree)),
        }
    }

    pub fn stored_differentials(&self) -> &BTreeMap<i64, Matrix> {
        &self.d
    }

    /// `dim ker d_n - rank d_{n+1}`.
    pub fn homology(&self, degree: i64) -> usize {
        if self.dim(degree) == 0 {
            return 0;
        }
        let cycles = self.dim(degree) - self.differential(degree).rank();
        let boundaries = self.differential(degree + 1).rank();
        cycles - boundaries
    }

    pub fn homology_all(&self) -> BTreeMap<i64, usize> {
        self.degrees()
            .map(|n| (n, self.homology(n)))
            .filter(|&(_, h)| h > 0)
            .collect()
    }

    /// Largest `n` such that homology vanishes in all degrees `<= n`;
    /// `+inf` for an acyclic complex.
    pub fn connectivity(&self) -> Connectivity {
        match self.homology_all().keys().next() {
            Some(&n) => Connectivity::Finite(n - 1),
            None => Connectivity::Infinite,
        }
    }

    pub fn shift(&self, k: i64) -> ChainComplex {
        let sign = if k.rem_euclid(2) == 0 { 1 } else { -1 };
        let dims = self.dims.iter().map(|(&n, &v)| (n + k, v)).collect();
        let d = self
            .d
            .iter()
            .map(|(&n, m)| (n + k, if sign == 1 { m.clone() } else { m.neg() }))
            .collect();
        ChainComplex { dims, d }
    }

    /// Direct sum, together with the inclusion of each summand.
    pub fn direct_sum(parts: &[&ChainComplex]) -> (ChainComplex, Vec<ChainMap>) {
        let mut dims: BTreeMap<i64, usize> = BTreeMap::new();
        for p in parts {
            for (&n, &v) in &p.dims {
                *dims.entry(n).or_insert(0) += v;
            }
        }
        let mut d = BTreeMap::new();
        for &n in dims.keys() {
            let blocks: Vec<Matrix> = parts.iter().map(|p| p.differential(n)).collect();
            let refs: Vec<&Matrix> = blocks.iter().collect();
            let m = Matrix::block_diag(&refs);
            if !m.is_zero() {
                d.insert(n, m);
            }
        }
        let total = ChainComplex::new_unchecked(dims, d);
        let mut inclusions = Vec::new();
        for (i, p) in parts.iter().enumerate() {
            let mut blocks = BTreeMap::new();
            for &n in p.dims.keys() {
                let offset: usize = parts[..i].iter().map(|x| x.dim(n)).sum();
                let mut m = Matrix::zero(total.dim(n), p.dim(n));
                for j in 0..p.dim(n) {
                    m.set(offset + j, j, crate::qi(1));
                }
                blocks.insert(n, m);
            }
            inclusions.push(ChainMap::new_unchecked((*p).clone(), total.clone(), blocks));
        }
        (total, inclusions)
    }
}

/// A degreewise map of complexes. Missing blocks are zero.
#[derive(Clone, PartialEq, Debug)]
pub struct ChainMap {
    pub source: ChainComplex,
    pub target: ChainComplex,
    blocks: BTreeMap<i64, Matrix>,
}

impl ChainMap {
    pub fn new(source: ChainComplex, target: ChainComplex, blocks: BTreeMap<i64, Matrix>) -> Result<Self> {
        let f = Self::new_unchecked(source, target, blocks);
        f.validate()?;
        Ok(f)
    }

    pub fn new_unchecked(
        source: ChainComplex,
        target: ChainComplex,
        blocks: BTreeMap<i64, Matrix>,
    ) -> Self {
        let blocks = blocks
            .into_iter()
            .filter(|(n, m)| {
                source.dim(*n) > 0 && target.dim(*n) > 0 && !m.is_zero()
            })
            .collect();
        ChainMap { source, target, blocks }
    }

    pub fn validate(&self) -> Result<()> {
        for (&n, m) in &self.blocks {
            if m.rows() != self.target.dim(n) || m.cols() != self.source.dim(n) {
                return Err(Error::Shape(format!(
                    "map block at degree {n} is {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    self.target.dim(n),
                    self.source.dim(n)
                )));
            }
        }
        for &n in self.source.dims().keys() {
            let lhs = self.target.differential(n).mul(&self.block(n));
            let rhs = self.block(n - 1).mul(&self.source.differential(n));
            if lhs != rhs {
                return Err(Error::NotAChainMap { degree: n });
            }
        }
        Ok(())
    }

    pub fn identity(c: &ChainComplex) -> Self {
        let blocks = c.dims().keys().map(|&n| (n, Matrix::identity(c.dim(n)))).collect();
        ChainMap::new_unchecked(c.clone(), c.clone(), blocks)
    }

    pub fn zero(source: &ChainComplex, target: &ChainComplex) -> Self {
        ChainMap::new_unchecked(source.clone(), target.clone(), BTreeMap::new())
    }

    pub fn block(&self, degree: i64) -> Matrix {
        match self.blocks.get(&degree) {
            Some(m) => m.clone(),
            None => Matrix::zero(self.target.dim(degree), self.source.dim(degree)),
        }
    }

    pub fn stored_blocks(&self) -> &BTreeMap<i64, Matrix> {
        &self.blocks
    }

    pub fn is_zero_map(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `other` after `self` must compose: `self.target == other.source`.
    pub fn then(&self, other: &ChainMap) -> ChainMap {
        debug_assert_eq!(self.target, other.source, "composition mismatch");
        let mut blocks = BTreeMap::new();
        for &n in self.source.dims().keys() {
            if other.target.dim(n) == 0 {
                continue;
            }
            blocks.insert(n, other.block(n).mul(&self.block(n)));
        }
        ChainMap::new_unchecked(self.source.clone(), other.target.clone(), blocks)
    }

    pub fn add(&self, other: &ChainMap) -> ChainMap {
        debug_assert_eq!(self.source, other.source);
        debug_assert_eq!(self.target, other.target);
        let mut blocks = BTreeMap::new();
        for &n in self.source.dims().keys() {
            if self.target.dim(n) == 0 {
                continue;
            }
            blocks.insert(n, self.block(n).add(&other.block(n)));
        }
        ChainMap::new_unchecked(self.source.clone(), self.target.clone(), blocks)
    }

    pub fn sub(&self, other: &ChainMap) -> ChainMap {
        self.add(&other.scale(&-crate::qi(1)))
    }

    pub fn scale(&self, c: &Q) -> ChainMap {
        let blocks = self.blocks.iter().map(|(&n, m)| (n, m.scale(c))).collect();
        ChainMap::new_unchecked(self.source.clone(), self.target.clone(), blocks)
    }

    /// Mapping cone: `cone(f)_n = Y_n (+) X_{n-1}`, `d(y, x) = (dy + fx, -dx)`.
    pub fn cone(&self) -> ChainComplex {
        let x = &self.source;
        let y = &self.target;
        let mut dims = BTreeMap::new();
        let degs: Vec<i64> = y
            .degrees()
            .chain(x.degrees().map(|n| n + 1))
            .collect();
        for n in degs {
            let v = y.dim(n) + x.dim(n - 1);
            if v > 0 {
                dims.insert(n, v);
            }
        }
        let mut d = BTreeMap::new();
        for &n in dims.keys() {
            let rows = y.dim(n - 1) + x.dim(n - 2);
            let cols = y.dim(n) + x.dim(n - 1);
            let mut m = Matrix::zero(rows, cols);
            m.paste(0, 0, &y.differential(n));
            m.paste(0, y.dim(n), &self.block(n - 1));
            m.paste(y.dim(n - 1), y.dim(n), &x.differential(n - 1).neg());
            if !m.is_zero() {
                d.insert(n, m);
            }
        }
        ChainComplex::new_unchecked(dims, d)
    }

    /// Mapping fiber: `fib(f)_n = X_n (+) Y_{n+1}`, `d(x, y) = (dx, fx - dy)`.
    /// Isomorphic to `shift(cone(f), -1)`.
    pub fn fib(&self) -> ChainComplex {
        let x = &self.source;
        let y = &self.target;
        let mut dims = BTreeMap::new();
        let degs: Vec<i64> = x.degrees().chain(y.degrees().map(|n| n - 1)).collect();
        for n in degs {
            let v = x.dim(n) + y.dim(n + 1);
            if v > 0 {
                dims.insert(n, v);
            }
        }
        let mut d = BTreeMap::new();
        for &n in dims.keys() {
            let rows = x.dim(n - 1) + y.dim(n);
            let cols = x.dim(n) + y.dim(n + 1);
            let mut m = Matrix::zero(rows, cols);
            m.paste(0, 0, &x.differential(n));
            m.paste(x.dim(n - 1), 0, &self.block(n));
            m.paste(x.dim(n - 1), x.dim(n), &y.differential(n + 1).neg());
            if !m.is_zero() {
                d.insert(n, m);
            }
        }
        ChainComplex::new_unchecked(dims, d)
    }

    /// Connectivity of the cone; `+inf` exactly when `f` is a homology
    /// isomorphism.
    pub fn connectivity(&self) -> Connectivity {
        self.cone().connectivity()
    }

    /// Functoriality of the cone: given a commuting square
    /// `psi . f = g . phi`, the induced map `cone(f) -> cone(g)`.
    pub fn cone_functor(f: &ChainMap, g: &ChainMap, phi: &ChainMap, psi: &ChainMap) -> ChainMap {
        let cf = f.cone();
        let cg = g.cone();
        let mut blocks = BTreeMap::new();
        for &n in cf.dims().keys() {
            let mut m = Matrix::zero(cg.dim(n), cf.dim(n));
            m.paste(0, 0, &psi.block(n));
            m.paste(g.target.dim(n), f.target.dim(n), &phi.block(n - 1));
            blocks.insert(n, m);
        }
        ChainMap::new_unchecked(cf, cg, blocks)
    }

    /// Functoriality of the fiber, same square convention as `cone_functor`.
    pub fn fib_functor(f: &ChainMap, g: &ChainMap, phi: &ChainMap, psi: &ChainMap) -> ChainMap {
        let ff = f.fib();
        let fg = g.fib();
        let mut blocks = BTreeMap::new();
        for &n in ff.dims().keys() {
            let mut m = Matrix::zero(fg.dim(n), ff.dim(n));
            m.paste(0, 0, &phi.block(n));
            m.paste(g.source.dim(n), f.source.dim(n), &psi.block(n + 1));
            blocks.insert(n, m);
        }
        ChainMap::new_unchecked(ff, fg, blocks)
    }

    /// Direct sum of maps, block diagonal.
    pub fn direct_sum(maps: &[&ChainMap]) -> ChainMap {
        let sources: Vec<&ChainComplex> = maps.iter().map(|f| &f.source).collect();
        let targets: Vec<&ChainComplex> = maps.iter().map(|f| &f.target).collect();
        let (src, _) = ChainComplex::direct_sum(&sources);
        let (tgt, _) = ChainComplex::direct_sum(&targets);
        let mut blocks = BTreeMap::new();
        for &n in src.dims().keys() {
            if tgt.dim(n) == 0 {
                continue;
            }
            let mut m = Matrix::zero(tgt.dim(n), src.dim(n));
            let (mut ro, mut co) = (0, 0);
            for f in maps {
                m.paste(ro, co, &f.block(n));
                ro += f.target.dim(n);
                co += f.source.dim(n);
            }
            blocks.insert(n, m);
        }
        ChainMap::new_unchecked(src, tgt, blocks)
    }

    /// Whether every block is a monomorphism.
    pub fn is_mono(&self) -> bool {
        self.source.dims().keys().all(|&n| self.block(n).rank() == self.source.dim(n))
    }
}

// ---------------------------------------------------------------------------
// Tensor products
// ---------------------------------------------------------------------------

/// Basis bookkeeping for a tensor product of several complexes.
///
/// In each total degree the basis is grouped into blocks, one per tuple of
/// factor degrees (in ascending lexicographic order); within a block the
/// multi-index runs row-major (last factor fastest).
#[derive(Clone, Debug)]
pub struct TensorLayout {
    pub factor_dims: Vec<BTreeMap<i64, usize>>,
    pub blocks: BTreeMap<i64, Vec<TensorBlock>>,
}

#[derive(Clone, Debug)]
pub struct TensorBlock {
    pub degrees: Vec<i64>,
    pub dims: Vec<usize>,
    pub offset: usize,
    pub size: usize,
}

impl TensorBlock {
    pub fn flat(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (k, &i) in multi.iter().enumerate() {
            idx = idx * self.dims[k] + i;
        }
        self.offset + idx
    }

    pub fn unflat(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dims.len()];
        for k in (0..self.dims.len()).rev() {
            multi[k] = idx % self.dims[k];
            idx /= self.dims[k];
        }
        multi
    }
}

impl TensorLayout {
    pub fn block_for(&self, degree: i64, degrees: &[i64]) -> Option<&TensorBlock> {
        self.blocks.get(&degree)?.iter().find(|b| b.degrees == degrees)
    }

    pub fn dim(&self, degree: i64) -> usize {
        self.blocks.get(&degree).map_or(0, |bs| bs.iter().map(|b| b.size).sum())
    }
}

fn degree_tuples(factors: &[&ChainComplex]) -> Vec<Vec<i64>> {
    let mut tuples: Vec<Vec<i64>> = vec![vec![]];
    for f in factors {
        let degs: Vec<i64> = f.degrees().collect();
        let mut next = Vec::new();
        for t in &tuples {
            for &d in &degs {
                let mut t2 = t.clone();
                t2.push(d);
                next.push(t2);
            }
        }
        tuples = next;
    }
    tuples.sort();
    tuples
}

/// Tensor product of a list of complexes with its layout. The empty product
/// is the unit `Q` in degree zero.
pub fn tensor_many(factors: &[&ChainComplex]) -> (ChainComplex, TensorLayout) {
    if factors.iter().any(|f| f.is_zero()) {
        let layout = TensorLayout {
            factor_dims: factors.iter().map(|f| f.dims().clone()).collect(),
            blocks: BTreeMap::new(),
        };
        return (ChainComplex::zero(), layout);
    }
    let mut blocks: BTreeMap<i64, Vec<TensorBlock>> = BTreeMap::new();
    for tuple in degree_tuples(factors) {
        let total: i64 = tuple.iter().sum();
        let dims: Vec<usize> =
            tuple.iter().enumerate().map(|(k, &d)| factors[k].dim(d)).collect();
        let size: usize = dims.iter().product();
        if size == 0 {
            continue;
        }
        let entry = blocks.entry(total).or_default();
        let offset = entry.iter().map(|b| b.size).sum();
        entry.push(TensorBlock { degrees: tuple, dims, offset, size });
    }
    let layout = TensorLayout {
        factor_dims: factors.iter().map(|f| f.dims().clone()).collect(),
        blocks,
    };
    let dims: BTreeMap<i64, usize> = layout
        .blocks
        .iter()
        .map(|(&n, bs)| (n, bs.iter().map(|b| b.size).sum()))
        .filter(|&(_, v)| v > 0)
        .collect();
    let mut d = BTreeMap::new();
    for (&n, bs) in &layout.blocks {
        let rows = layout.dim(n - 1);
        let cols = layout.dim(n);
        if rows == 0 || cols == 0 {
            continue;
        }
        let mut m = Matrix::zero(rows, cols);
        for b in bs {
            for (k, factor) in factors.iter().enumerate() {
                let diff = factor.differential(b.degrees[k]);
                if diff.is_zero() {
                    continue;
                }
                let mut tdeg = b.degrees.clone();
                tdeg[k] -= 1;
                let Some(tb) = layout.block_for(n - 1, &tdeg) else { continue };
                let sign: Q = {
                    let s: i64 = b.degrees[..k].iter().sum();
                    if s.rem_euclid(2) == 0 {
                        crate::qi(1)
                    } else {
                        crate::qi(-1)
                    }
                };
                for idx in 0..b.size {
                    let multi = b.unflat(idx);
                    for i2 in 0..tb.dims[k] {
                        let e = diff.get(i2, multi[k]);
                        if e.is_zero() {
                            continue;
                        }
                        let mut tm = multi.clone();
                        tm[k] = i2;
                        m.add_to(tb.flat(&tm), b.flat(&multi), &(e * &sign));
                    }
                }
            }
        }
        if !m.is_zero() {
            d.insert(n, m);
        }
    }
    (ChainComplex::new_unchecked(dims, d), layout)
}

pub fn tensor(a: &ChainComplex, b: &ChainComplex) -> ChainComplex {
    tensor_many(&[a, b]).0
}

/// The Koszul sign of permuting homogeneous letters of the given degrees:
/// letter `k` moves to slot `perm[k]`; each inverted pair of odd-degree
/// letters contributes `-1`.
pub fn koszul_sign(perm: &[usize], degrees: &[i64]) -> Q {
    let mut sign = 1i64;
    for a in 0..perm.len() {
        for b in (a + 1)..perm.len() {
            if perm[a] > perm[b] && degrees[a].rem_euclid(2) == 1 && degrees[b].rem_euclid(2) == 1 {
                sign = -sign;
            }
        }
    }
    crate::qi(sign)
}

/// The map `(x)_k X_k -> (x)_k X_{perm^{-1}(k)}` permuting tensor factors
/// with Koszul signs: factor `k` is sent to slot `perm[k]`.
pub fn permute_factors(factors: &[&ChainComplex], perm: &[usize]) -> ChainMap {
    assert_eq!(factors.len(), perm.len(), "permutation arity");
    let (src, src_layout) = tensor_many(factors);
    let permuted: Vec<&ChainComplex> = {
        let mut v: Vec<&ChainComplex> = vec![factors[0]; factors.len()];
        for (k, &f) in factors.iter().enumerate() {
            v[perm[k]] = f;
        }
        v
    };
    let (tgt, tgt_layout) = tensor_many(&permuted);
    let mut blocks = BTreeMap::new();
    for (&n, bs) in &src_layout.blocks {
        let mut m = Matrix::zero(tgt_layout.dim(n), src_layout.dim(n));
        for b in bs {
            let mut tdeg = vec![0i64; perm.len()];
            for (k, &d) in b.degrees.iter().enumerate() {
                tdeg[perm[k]] = d;
            }
            let tb = tgt_layout.block_for(n, &tdeg).expect("permuted block exists");
            let sign = koszul_sign(perm, &b.degrees);
            for idx in 0..b.size {
                let multi = b.unflat(idx);
                let mut tm = vec![0usize; perm.len()];
                for (k, &i) in multi.iter().enumerate() {
                    tm[perm[k]] = i;
                }
                m.set(tb.flat(&tm), b.flat(&multi), sign.clone());
            }
        }
        if !m.is_zero() {
            blocks.insert(n, m);
        }
    }
    ChainMap::new_unchecked(src, tgt, blocks)
}

/// Apply chain maps factorwise: the map `(x) f_k` between tensor products.
/// All `f_k` are degree zero, so no signs appear.
pub fn factorwise_map(maps: &[&ChainMap]) -> ChainMap {
    let sources: Vec<&ChainComplex> = maps.iter().map(|f| &f.source).collect();
    let targets: Vec<&ChainComplex> = maps.iter().map(|f| &f.target).collect();
    let (src, src_layout) = tensor_many(&sources);
    let (tgt, tgt_layout) = tensor_many(&targets);
    let mut blocks = BTreeMap::new();
    for (&n, bs) in &src_layout.blocks {
        if tgt_layout.dim(n) == 0 {
            continue;
        }
        let mut m = Matrix::zero(tgt_layout.dim(n), src_layout.dim(n));
        for b in bs {
            let Some(tb) = tgt_layout.block_for(n, &b.degrees) else { continue };
            let mats: Vec<Matrix> = maps
                .iter()
                .enumerate()
                .map(|(k, f)| f.block(b.degrees[k]))
                .collect();
            for idx in 0..b.size {
                let multi = b.unflat(idx);
                // Expand the product of entries over target multi-indices.
                let mut terms: Vec<(Vec<usize>, Q)> = vec![(vec![], crate::qi(1))];
                for (k, mat) in mats.iter().enumerate() {
                    let mut next = Vec::new();
                    for (tm, coef) in &terms {
                        for i2 in 0..tb.dims[k] {
                            let e = mat.get(i2, multi[k]);
                            if e.is_zero() {
                                continue;
                            }
                            let mut tm2 = tm.clone();
                            tm2.push(i2);
                            next.push((tm2, coef * e));
                        }
                    }
                    terms = next;
                    if terms.is_empty() {
                        break;
                    }
                }
                for (tm, coef) in terms {
                    m.add_to(tb.flat(&tm), b.flat(&multi), &coef);
                }
            }
        }
        if !m.is_zero() {
            blocks.insert(n, m);
        }
    }
    ChainMap::new_unchecked(src, tgt, blocks)
}

/// Apply a degree-zero map to a consecutive run of tensor factors: given
/// `f` from `tensor(factors[pos..pos+len])` to a single complex, the induced
/// map `tensor(factors) -> tensor(factors with the run replaced by f.target)`.
/// Degree-zero maps cross no letters, so no Koszul signs appear.
pub fn apply_at_run(factors: &[&ChainComplex], pos: usize, len: usize, f: &ChainMap) -> ChainMap {
    let (run_src, run_layout) = tensor_many(&factors[pos..pos + len]);
    debug_assert_eq!(run_src, f.source, "run mismatch");
    let mut tgt_factors: Vec<&ChainComplex> = Vec::new();
    tgt_factors.extend_from_slice(&factors[..pos]);
    tgt_factors.push(&f.target);
    tgt_factors.extend_from_slice(&factors[pos + len..]);
    let (src, src_layout) = tensor_many(factors);
    let (tgt, tgt_layout) = tensor_many(&tgt_factors);
    let mut blocks = BTreeMap::new();
    for (&n, bs) in &src_layout.blocks {
        if tgt_layout.dim(n) == 0 {
            continue;
        }
        let mut m = Matrix::zero(tgt_layout.dim(n), src_layout.dim(n));
        for b in bs {
            let run_degs = &b.degrees[pos..pos + len];
            let run_total: i64 = run_degs.iter().sum();
            let Some(rb) = run_layout.block_for(run_total, run_degs) else { continue };
            let fb = f.block(run_total);
            if fb.is_zero() {
                continue;
            }
            let mut tdeg: Vec<i64> = Vec::new();
            tdeg.extend_from_slice(&b.degrees[..pos]);
            tdeg.push(run_total);
            tdeg.extend_from_slice(&b.degrees[pos + len..]);
            let Some(tb) = tgt_layout.block_for(n, &tdeg) else { continue };
            for idx in 0..b.size {
                let multi = b.unflat(idx);
                let run_flat = rb.flat(&multi[pos..pos + len]);
                for out in 0..f.target.dim(run_total) {
                    let e = fb.get(out, run_flat);
                    if e.is_zero() {
                        continue;
                    }
                    let mut tm: Vec<usize> = Vec::new();
                    tm.extend_from_slice(&multi[..pos]);
                    tm.push(out);
                    tm.extend_from_slice(&multi[pos + len..]);
                    m.add_to(tb.flat(&tm), b.flat(&multi), e);
                }
            }
        }
        if !m.is_zero() {
            blocks.insert(n, m);
        }
    }
    ChainMap::new_unchecked(src, tgt, blocks)
}

// ---------------------------------------------------------------------------
// Colimits over finite posets
// ---------------------------------------------------------------------------

/// A finite diagram: objects indexed `0..n`, arrows with their maps. The
/// arrows only need to generate the diagram category.
pub struct Diagram {
    pub objects: Vec<ChainComplex>,
    pub arrows: Vec<(usize, usize, ChainMap)>,
}

/// A computed colimit: the complex, the legs from each object, and the data
/// needed to induce maps out of it.
pub struct Colimit {
    pub complex: ChainComplex,
    pub legs: Vec<ChainMap>,
    proj: BTreeMap<i64, Quotient>,
    sum: ChainComplex,
    sum_inclusions: Vec<ChainMap>,
}

impl Colimit {
    /// The universal map out, given compatible legs into `target`.
    pub fn map_out(&self, target: &ChainComplex, legs: &[ChainMap]) -> ChainMap {
        assert_eq!(legs.len(), self.sum_inclusions.len(), "one leg per object");
        let mut blocks = BTreeMap::new();
        for &n in self.complex.dims().keys() {
            if target.dim(n) == 0 {
                continue;
            }
            let mut combined = Matrix::zero(target.dim(n), self.sum.dim(n));
            let mut off = 0;
            for (i, leg) in legs.iter().enumerate() {
                let w = leg.source.dim(n);
                combined.paste(0, off, &leg.block(n));
                let _ = i;
                off += w;
            }
            let section = &self.proj[&n].section;
            blocks.insert(n, combined.mul(section));
        }
        ChainMap::new_unchecked(self.complex.clone(), target.clone(), blocks)
    }
}

/// Degreewise colimit: the coequalizer of the relation `incl_u(x) ~
/// incl_v(f(x))` for every arrow `(u, v, f)`, computed as a cokernel.
pub fn colimit(diagram: &Diagram) -> Result<Colimit> {
    for (u, v, f) in &diagram.arrows {
        if *u >= diagram.objects.len() || *v >= diagram.objects.len() {
            return Err(Error::Shape(format!("arrow {u}->{v} out of range")));
        }
        if f.source != diagram.objects[*u] || f.target != diagram.objects[*v] {
            return Err(Error::Shape(format!("arrow {u}->{v} does not match its endpoints")));
        }
    }
    let refs: Vec<&ChainComplex> = diagram.objects.iter().collect();
    let (sum, incl) = ChainComplex::direct_sum(&refs);
    // Relation columns per degree.
    let mut quos: BTreeMap<i64, Quotient> = BTreeMap::new();
    let mut dims = BTreeMap::new();
    for &n in sum.dims().keys() {
        let mut rel_cols: Vec<Vec<Q>> = Vec::new();
        for (u, v, f) in &diagram.arrows {
            let iu = incl[*u].block(n);
            let iv = incl[*v].block(n);
            let fb = f.block(n);
            let rel = {
                let m = iv.mul(&fb);
                iu.sub(&m)
            };
            for j in 0..rel.cols() {
                rel_cols.push(rel.column(j));
            }
        }
        let quo = crate::linalg::quotient_basis(&rel_cols, sum.dim(n))?;
        if quo.dim > 0 {
            dims.insert(n, quo.dim);
        }
        quos.insert(n, quo);
    }
    let mut d = BTreeMap::new();
    for &n in dims.keys() {
        if dims.contains_key(&(n - 1)) {
            let m = quos[&(n - 1)].proj.mul(&sum.differential(n)).mul(&quos[&n].section);
            if !m.is_zero() {
                d.insert(n, m);
            }
        }
    }
    let complex = ChainComplex::new_unchecked(dims, d);
    let legs = diagram
        .objects
        .iter()
        .enumerate()
        .map(|(i, obj)| {
            let mut blocks = BTreeMap::new();
            for &n in obj.dims().keys() {
                if complex.dim(n) == 0 {
                    continue;
                }
                blocks.insert(n, quos[&n].proj.mul(&incl[i].block(n)));
            }
            ChainMap::new_unchecked(obj.clone(), complex.clone(), blocks)
        })
        .collect();
    Ok(Colimit { complex, legs, proj: quos, sum, sum_inclusions: incl })
}

/// Pushout of `f: X -> A`, `i: X -> Y` as a three-object colimit.
pub fn pushout(f: &ChainMap, i: &ChainMap) -> Result<Colimit> {
    assert_eq!(f.source, i.source, "pushout legs share their source");
    let diagram = Diagram {
        objects: vec![f.source.clone(), f.target.clone(), i.target.clone()],
        arrows: vec![(0, 1, f.clone()), (0, 2, i.clone())],
    };
    colimit(&diagram)
}

/// The kernel of a map as a subcomplex, with its inclusion.
pub fn kernel_complex(f: &ChainMap) -> (ChainComplex, ChainMap) {
    let mut basis: BTreeMap<i64, Vec<Vec<Q>>> = BTreeMap::new();
    for &n in f.source.dims().keys() {
        let k = f.block(n).kernel_basis();
        if !k.is_empty() {
            basis.insert(n, k);
        }
    }
    let dims: BTreeMap<i64, usize> = basis.iter().map(|(&n, b)| (n, b.len())).collect();
    let mut incl_blocks = BTreeMap::new();
    for (&n, b) in &basis {
        let mut m = Matrix::zero(f.source.dim(n), b.len());
        for (j, v) in b.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                if !x.is_zero() {
                    m.set(i, j, x.clone());
                }
            }
        }
        incl_blocks.insert(n, m);
    }
    let mut d = BTreeMap::new();
    for &n in dims.keys() {
        if !dims.contains_key(&(n - 1)) {
            continue;
        }
        let di = f.source.differential(n).mul(&incl_blocks[&n]);
        let m = incl_blocks[&(n - 1)]
            .solve_right(&di)
            .expect("differential preserves the kernel");
        if !m.is_zero() {
            d.insert(n, m);
        }
    }
    let kernel = ChainComplex::new_unchecked(dims, d);
    let incl = ChainMap::new_unchecked(kernel.clone(), f.source.clone(), incl_blocks);
    (kernel, incl)
}

/// A quotient complex together with its projection and a degreewise section
/// (`proj . section = id`; the section is linear, not a chain map, and is
/// only used to induce maps out of the quotient).
pub struct QuotientComplex {
    pub complex: ChainComplex,
    pub proj: ChainMap,
    sections: BTreeMap<i64, Matrix>,
}

impl QuotientComplex {
    pub fn section_block(&self, degree: i64) -> Matrix {
        match self.sections.get(&degree) {
            Some(m) => m.clone(),
            None => Matrix::zero(self.proj.source.dim(degree), self.complex.dim(degree)),
        }
    }

    /// Induce a map on quotients from `big` on the ambient spaces: requires
    /// `big` to carry the source relations into the target relations.
    pub fn induce(src: &QuotientComplex, dst: &QuotientComplex, big: &ChainMap) -> ChainMap {
        let mut blocks = BTreeMap::new();
        for &n in src.complex.dims().keys() {
            if dst.complex.dim(n) == 0 {
                continue;
            }
            let m = dst.proj.block(n).mul(&big.block(n)).mul(&src.section_block(n));
            blocks.insert(n, m);
        }
        ChainMap::new_unchecked(src.complex.clone(), dst.complex.clone(), blocks)
    }
}

/// Cokernel of a map as a quotient complex, with its projection.
pub fn cokernel_complex(f: &ChainMap) -> (ChainComplex, ChainMap) {
    let q = cokernel_quotient(f);
    (q.complex, q.proj)
}

pub fn cokernel_quotient(f: &ChainMap) -> QuotientComplex {
    let mut quos: BTreeMap<i64, Quotient> = BTreeMap::new();
    for &n in f.target.dims().keys() {
        quos.insert(n, cokernel(&f.block(n)));
    }
    let dims: BTreeMap<i64, usize> =
        quos.iter().map(|(&n, q)| (n, q.dim)).filter(|&(_, v)| v > 0).collect();
    let mut d = BTreeMap::new();
    for &n in dims.keys() {
        if dims.contains_key(&(n - 1)) {
            let m = quos[&(n - 1)].proj.mul(&f.target.differential(n)).mul(&quos[&n].section);
            if !m.is_zero() {
                d.insert(n, m);
            }
        }
    }
    let quotient = ChainComplex::new_unchecked(dims, d);
    let proj_blocks = quos
        .iter()
        .filter(|(_, q)| q.dim > 0)
        .map(|(&n, q)| (n, q.proj.clone()))
        .collect();
    let proj = ChainMap::new_unchecked(f.target.clone(), quotient.clone(), proj_blocks);
    let sections = quos
        .into_iter()
        .filter(|(_, q)| q.dim > 0)
        .map(|(n, q)| (n, q.section))
        .collect();
    QuotientComplex { complex: quotient, proj, sections }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qi;

    #[test]
    fn homology_examples() {
        let s3 = ChainComplex::sphere(3);
        assert_eq!(s3.homology(3), 1);
        assert_eq!(s3.homology(0), 0);
        assert_eq!(ChainComplex::disk(1).homology_all(), BTreeMap::new());
        // Q^2 in degree 0, Q in degree 1, d = (1,0)^T column.
        let c = ChainComplex::new(
            BTreeMap::from([(0, 2), (1, 1)]),
            BTreeMap::from([(1, Matrix::from_rows(vec![vec![qi(1)], vec![qi(0)]]).unwrap())]),
        )
        .unwrap();
        assert_eq!(c.homology(0), 1);
        assert_eq!(c.homology(1), 0);
        assert_eq!(c.connectivity(), Connectivity::Finite(-1));
    }

    #[test]
    fn connectivity_examples() {
        assert_eq!(ChainComplex::zero().connectivity(), Connectivity::Infinite);
        assert_eq!(ChainComplex::sphere(4).connectivity(), Connectivity::Finite(3));
    }

    #[test]
    fn cone_examples() {
        let s2 = ChainComplex::sphere(2);
        let id = ChainMap::identity(&s2);
        assert_eq!(id.cone().connectivity(), Connectivity::Infinite);
        assert_eq!(id.connectivity(), Connectivity::Infinite);
        // 0 -> sphere(d) is (d-1)-connected.
        let z = ChainMap::zero(&ChainComplex::zero(), &s2);
        assert_eq!(z.connectivity(), Connectivity::Finite(1));
        // sphere(2) -> 0 has cone = sphere(3).
        let to0 = ChainMap::zero(&s2, &ChainComplex::zero());
        let c = to0.cone();
        assert_eq!(c.dims(), &BTreeMap::from([(3, 1)]));
        // Zero map: homology splits.
        let s5 = ChainComplex::sphere(5);
        let (sum, incl) = ChainComplex::direct_sum(&[&ChainComplex::sphere(0), &s5]);
        let zmap = ChainMap::zero(&ChainComplex::sphere(1), &sum);
        let cz = zmap.cone();
        assert_eq!(cz.homology(0), 1);
        assert_eq!(cz.homology(2), 1);
        assert_eq!(cz.homology(5), 1);
        // Inclusion sphere(0) into sphere(0) + sphere(5) is 4-connected.
        assert_eq!(incl[0].connectivity(), Connectivity::Finite(4));
    }

    #[test]
    fn cone_d_squared_zero() {
        let d1 = ChainComplex::disk(1);
        let f = ChainMap::identity(&d1);
        f.cone().validate().unwrap();
        f.fib().validate().unwrap();
    }

    #[test]
    fn fib_matches_shifted_cone_homology() {
        let c = ChainComplex::new(
            BTreeMap::from([(0, 2), (1, 2)]),
            BTreeMap::from([(1, Matrix::from_rows(vec![vec![qi(1), qi(0)], vec![qi(0), qi(0)]]).unwrap())]),
        )
        .unwrap();
        let f = ChainMap::new(
            c.clone(),
            ChainComplex::sphere(0),
            BTreeMap::from([(0, Matrix::from_rows(vec![vec![qi(0), qi(1)]]).unwrap())]),
        )
        .unwrap();
        let cone = f.cone();
        let fib = f.fib();
        for n in -3..6 {
            assert_eq!(cone.homology(n), fib.homology(n - 1), "degree {n}");
        }
    }

    #[test]
    fn tensor_unit_and_spheres() {
        let c = ChainComplex::new(
            BTreeMap::from([(0, 1), (1, 2)]),
            BTreeMap::from([(1, Matrix::from_rows(vec![vec![qi(1), qi(0)]]).unwrap())]),
        )
        .unwrap();
        let t = tensor(&c, &ChainComplex::unit());
        assert_eq!(t.dims(), c.dims());
        assert_eq!(t.homology_all(), c.homology_all());
        let s = tensor(&ChainComplex::sphere(2), &ChainComplex::sphere(3));
        assert_eq!(s.dims(), &BTreeMap::from([(5, 1)]));
        t.validate().unwrap();
    }

    #[test]
    fn tensor_d_squared() {
        let d = ChainComplex::disk(2);
        let t = tensor(&d, &d);
        t.validate().unwrap();
        assert!(t.homology_all().is_empty());
    }

    #[test]
    fn shift_conventions() {
        let d = ChainComplex::disk(1);
        assert_eq!(d.shift(0), d);
        let s = d.shift(3);
        s.validate().unwrap();
        assert_eq!(s.dim(4), 1);
        let odd = d.shift(1);
        odd.validate().unwrap();
        assert_eq!(odd.differential(2), Matrix::identity(1).neg());
    }

    #[test]
    fn permute_factors_signs() {
        // Swap on x (x) x with |x| = 1 carries sign -1; degree 2 carries +1.
        for (deg, sign) in [(1i64, qi(-1)), (2, qi(1))] {
            let s = ChainComplex::sphere(deg);
            let swap = permute_factors(&[&s, &s], &[1, 0]);
            assert_eq!(swap.block(2 * deg), Matrix::from_rows(vec![vec![sign.clone()]]).unwrap());
        }
        // Identity permutation is the identity map.
        let s1 = ChainComplex::sphere(1);
        let s2 = ChainComplex::sphere(2);
        let idp = permute_factors(&[&s1, &s2], &[0, 1]);
        assert_eq!(idp.block(3), Matrix::identity(1));
    }

    #[test]
    fn permute_factors_is_chain_map() {
        let d = ChainComplex::disk(1);
        let s = ChainComplex::sphere(2);
        let f = permute_factors(&[&d, &s, &d], &[2, 0, 1]);
        f.validate().unwrap();
    }

    #[test]
    fn colimit_examples() {
        // One-object diagram.
        let c = ChainComplex::sphere(2);
        let col = colimit(&Diagram { objects: vec![c.clone()], arrows: vec![] }).unwrap();
        assert_eq!(col.complex, c);
        // Pushout of sphere(0) <- 0 -> sphere(1).
        let zero = ChainComplex::zero();
        let f = ChainMap::zero(&zero, &ChainComplex::sphere(0));
        let i = ChainMap::zero(&zero, &ChainComplex::sphere(1));
        let p = pushout(&f, &i).unwrap();
        assert_eq!(p.complex.dims(), &BTreeMap::from([(0, 1), (1, 1)]));
    }

    #[test]
    fn colimit_shape_error() {
        let c = ChainComplex::sphere(0);
        let bad = Diagram {
            objects: vec![c.clone()],
            arrows: vec![(0, 1, ChainMap::identity(&c))],
        };
        assert!(matches!(colimit(&bad), Err(Error::Shape(_))));
    }

    #[test]
    fn colimit_universal_map() {
        // colim of (A <- X -> Y) maps to any cocone.
        let x = ChainComplex::sphere(0);
        let a = ChainComplex::sphere(0);
        let y = ChainComplex::disk(1);
        let f = ChainMap::identity(&x);
        let i = ChainMap::new(
            x.clone(),
            y.clone(),
            BTreeMap::from([(0, Matrix::identity(1))]),
        )
        .unwrap();
        let p = pushout(&f, &i).unwrap();
        // Cocone to Y itself.
        let legs = vec![i.clone(), i.clone(), ChainMap::identity(&y)];
        let m = p.map_out(&y, &legs);
        m.validate().unwrap();
        for (k, leg) in p.legs.iter().enumerate() {
            assert_eq!(&leg.then(&m), &legs[k]);
        }
        let _ = a;
    }

    #[test]
    fn kernel_and_cokernel_complexes() {
        let d1 = ChainComplex::disk(1);
        let s1 = ChainComplex::sphere(1);
        let top = ChainMap::new(
            d1.clone(),
            s1.clone(),
            BTreeMap::from([(1, Matrix::identity(1))]),
        )
        .unwrap();
        let (ker, incl) = kernel_complex(&top);
        incl.validate().unwrap();
        assert_eq!(ker.dims(), &BTreeMap::from([(0, 1)]));
        let (coker, pmap) = cokernel_complex(&top);
        pmap.validate().unwrap();
        assert!(coker.is_zero());
    }
}
