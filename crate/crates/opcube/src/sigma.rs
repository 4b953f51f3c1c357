//! Symmetric-group actions on chain complexes, averaging idempotents and
//! coinvariants.
//!
//! Actions are stored on the adjacent transpositions `(i, i+1)` only;
//! arbitrary permutations act by composing generators along a reduced word.
//! Coinvariants are taken in characteristic zero as the image of the
//! averaging idempotent `e = (1/n!) sum_g g`, with the image basis chosen by
//! pivot columns, so every basis is deterministic.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::chain::{ChainComplex, ChainMap};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::{Q, MAX_ARITY};

/// A permutation of `{0..n-1}` in one-line notation: `i` maps to `images[i]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || seen[i] {
                return Err(Error::SigmaAction {
                    arity: n,
                    detail: format!("{images:?} is not a bijection"),
                });
            }
            seen[i] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(n: usize) -> Self {
        Permutation { images: (0..n).collect() }
    }

    /// The adjacent transposition swapping `i` and `i + 1`.
    pub fn adjacent(n: usize, i: usize) -> Self {
        let mut images: Vec<usize> = (0..n).collect();
        images.swap(i, i + 1);
        Permutation { images }
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.images[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `self` after `other`: `(self.compose(other))(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.n(), other.n());
        Permutation { images: other.images.iter().map(|&i| self.images[i]).collect() }
    }

    pub fn inverse(&self) -> Permutation {
        let mut images = vec![0; self.n()];
        for (i, &j) in self.images.iter().enumerate() {
            images[j] = i;
        }
        Permutation { images }
    }

    pub fn sign(&self) -> i64 {
        let mut s = 1;
        for a in 0..self.n() {
            for b in (a + 1)..self.n() {
                if self.images[a] > self.images[b] {
                    s = -s;
                }
            }
        }
        s
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// A reduced-enough word in adjacent transpositions, via bubble sort:
    /// `self = s_{w_1} s_{w_2} ... s_{w_k}` as a composite of functions
    /// (leftmost applied last).
    pub fn adjacent_word(&self) -> Vec<usize> {
        let mut v = self.images.clone();
        let mut word = Vec::new();
        // Sort v with adjacent swaps; each swap s_i applied on the right of
        // the remaining permutation ends up recorded in application order.
        loop {
            let mut swapped = false;
            for i in 0..v.len().saturating_sub(1) {
                if v[i] > v[i + 1] {
                    v.swap(i, i + 1);
                    word.push(i);
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }
        // v was sorted by applying s_{w_k} ... s_{w_1} on the left, so
        // self = s_{w_1}^{-1} ... = s_{w_1} ... reading the record backwards.
        word.reverse();
        word
    }

    /// All permutations of `{0..n-1}` in a Steinhaus-Johnson-Trotter order:
    /// consecutive entries differ by one adjacent transposition, whose index
    /// is recorded alongside.
    pub fn enumerate_sjt(n: usize) -> Vec<(Permutation, Option<usize>)> {
        assert!(n <= MAX_ARITY, "arity above the enumeration cap");
        if n == 0 {
            return vec![(Permutation::identity(0), None)];
        }
        // Plain changes: weave each new letter back and forth through the
        // permutations of the previous letters. Consecutive entries then
        // differ by one adjacent transposition.
        let mut perms: Vec<Vec<usize>> = vec![vec![0]];
        for k in 1..n {
            let mut next: Vec<Vec<usize>> = Vec::new();
            for (idx, p) in perms.iter().enumerate() {
                let positions: Vec<usize> = if idx % 2 == 0 {
                    (0..=k).rev().collect()
                } else {
                    (0..=k).collect()
                };
                for &pos in &positions {
                    let mut q = p.clone();
                    q.insert(pos, k);
                    next.push(q);
                }
            }
            perms = next;
        }
        // Recover the adjacent swap between consecutive entries.
        let mut out: Vec<(Permutation, Option<usize>)> = Vec::new();
        for (i, p) in perms.iter().enumerate() {
            let perm = Permutation { images: p.clone() };
            if i == 0 {
                out.push((perm, None));
            } else {
                let prev = &out[i - 1].0;
                let diff: Vec<usize> = (0..n).filter(|&j| prev.images[j] != p[j]).collect();
                debug_assert_eq!(diff.len(), 2);
                debug_assert_eq!(diff[1], diff[0] + 1);
                out.push((perm, Some(diff[0])));
            }
        }
        out
    }
}

/// A chain complex with a symmetric-group action of the given arity, stored
/// on adjacent transpositions. Arities `0` and `1` have no generators.
#[derive(Clone, Debug)]
pub struct SigmaModule {
    pub arity: usize,
    pub complex: ChainComplex,
    gens: Vec<ChainMap>,
}

impl SigmaModule {
    /// Validating constructor: generators must be chain endomorphisms that
    /// are involutions and satisfy the braid relations.
    pub fn new(arity: usize, complex: ChainComplex, gens: Vec<ChainMap>) -> Result<Self> {
        let m = Self::new_unchecked(arity, complex, gens);
        m.validate()?;
        Ok(m)
    }

    pub fn new_unchecked(arity: usize, complex: ChainComplex, gens: Vec<ChainMap>) -> Self {
        SigmaModule { arity, complex, gens }
    }

    /// The trivial action on a complex.
    pub fn trivial(arity: usize, complex: ChainComplex) -> Self {
        let gens = (0..arity.saturating_sub(1)).map(|_| ChainMap::identity(&complex)).collect();
        SigmaModule { arity, complex, gens }
    }

    pub fn zero(arity: usize) -> Self {
        Self::trivial(arity, ChainComplex::zero())
    }

    pub fn validate(&self) -> Result<()> {
        if self.arity > MAX_ARITY {
            return Err(Error::Capacity { arity: self.arity, cap: MAX_ARITY });
        }
        if self.gens.len() != self.arity.saturating_sub(1) {
            return Err(Error::SigmaAction {
                arity: self.arity,
                detail: format!("expected {} generators, got {}", self.arity.saturating_sub(1), self.gens.len()),
            });
        }
        let id = ChainMap::identity(&self.complex);
        for (i, g) in self.gens.iter().enumerate() {
            if g.source != self.complex || g.target != self.complex {
                return Err(Error::SigmaAction {
                    arity: self.arity,
                    detail: format!("generator {i} is not an endomorphism"),
                });
            }
            g.validate().map_err(|e| Error::SigmaAction {
                arity: self.arity,
                detail: format!("generator {i}: {e}"),
            })?;
            if g.then(g) != id {
                return Err(Error::SigmaAction {
                    arity: self.arity,
                    detail: format!("generator {i} is not an involution"),
                });
            }
        }
        for i in 0..self.gens.len() {
            for j in (i + 1)..self.gens.len() {
                let (a, b) = (&self.gens[i], &self.gens[j]);
                if j == i + 1 {
                    let lhs = a.then(b).then(a);
                    let rhs = b.then(a).then(b);
                    if lhs != rhs {
                        return Err(Error::SigmaAction {
                            arity: self.arity,
                            detail: format!("braid relation fails at ({i}, {j})"),
                        });
                    }
                } else if a.then(b) != b.then(a) {
                    return Err(Error::SigmaAction {
                        arity: self.arity,
                        detail: format!("distant generators ({i}, {j}) do not commute"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn gen(&self, i: usize) -> &ChainMap {
        &self.gens[i]
    }

    pub fn gens(&self) -> &[ChainMap] {
        &self.gens
    }

    /// The action of an arbitrary permutation, composed along an adjacent
    /// word. This is a left action: `action(p . q) = action(p) . action(q)`
    /// as linear maps.
    pub fn action(&self, p: &Permutation) -> ChainMap {
        assert_eq!(p.n(), self.arity, "permutation arity");
        let mut m = ChainMap::identity(&self.complex);
        // p = s_{w_1} ... s_{w_k} as functions; matrices compose in the same
        // order: action(p) = action(s_{w_1}) * ... * action(s_{w_k}).
        for &i in p.adjacent_word().iter().rev() {
            m = m.then(&self.gens[i]);
        }
        m
    }

    /// The averaging idempotent `(1/n!) sum_g action(g)`.
    pub fn average_idempotent(&self) -> ChainMap {
        if self.arity <= 1 {
            return ChainMap::identity(&self.complex);
        }
        let mut sum = ChainMap::identity(&self.complex);
        let mut current = ChainMap::identity(&self.complex);
        let mut count = 1u64;
        for (_, swap) in Permutation::enumerate_sjt(self.arity).into_iter().skip(1) {
            let i = swap.expect("SJT steps are adjacent swaps");
            current = self.gens[i].then(&current);
            sum = sum.add(&current);
            count += 1;
        }
        sum.scale(&Q::new(1.into(), count.into()))
    }

    /// Coinvariants as the image of the averaging idempotent, with the
    /// inclusion and the retraction (`proj . incl = id`,
    /// `incl . proj = e`).
    pub fn coinvariants(&self) -> Coinvariants {
        let e = self.average_idempotent();
        let mut incl_blocks = BTreeMap::new();
        let mut proj_blocks = BTreeMap::new();
        let mut dims = BTreeMap::new();
        for &n in self.complex.dims().keys() {
            let en = e.block(n);
            let (_, pivots) = en.rref();
            if pivots.is_empty() {
                continue;
            }
            let mut incl = Matrix::zero(self.complex.dim(n), pivots.len());
            for (j, &p) in pivots.iter().enumerate() {
                for i in 0..self.complex.dim(n) {
                    let v = en.get(i, p);
                    if !v.is_zero() {
                        incl.set(i, j, v.clone());
                    }
                }
            }
            // Retraction: solve incl * X = e so that X restricted along incl
            // is the identity; rows of X express e in the image basis.
            let proj = incl.solve_right(&en).expect("idempotent columns span the image");
            dims.insert(n, pivots.len());
            incl_blocks.insert(n, incl);
            proj_blocks.insert(n, proj);
        }
        // Induced differential through the retraction.
        let mut d = BTreeMap::new();
        for &n in dims.keys() {
            if !dims.contains_key(&(n - 1)) {
                continue;
            }
            let m = proj_blocks[&(n - 1)]
                .mul(&self.complex.differential(n))
                .mul(&incl_blocks[&n]);
            if !m.is_zero() {
                d.insert(n, m);
            }
        }
        let complex = ChainComplex::new_unchecked(dims, d);
        let incl = ChainMap::new_unchecked(complex.clone(), self.complex.clone(), incl_blocks);
        let proj = ChainMap::new_unchecked(self.complex.clone(), complex.clone(), proj_blocks);
        Coinvariants { complex, incl, proj }
    }

    /// Transport a commuting endomorphism (or a map to another module's
    /// underlying complex) through coinvariants: `proj . f . incl`.
    pub fn transport(src: &Coinvariants, dst: &Coinvariants, f: &ChainMap) -> ChainMap {
        src.incl.then(f).then(&dst.proj)
    }
}

/// The coinvariant quotient of a [`SigmaModule`], presented as the image of
/// the averaging idempotent.
#[derive(Clone, Debug)]
pub struct Coinvariants {
    pub complex: ChainComplex,
    pub incl: ChainMap,
    pub proj: ChainMap,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{permute_factors, tensor_many};
    use crate::qi;

    #[test]
    fn permutation_basics() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        let p = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(p.compose(&p.inverse()), Permutation::identity(3));
        assert_eq!(p.sign(), 1);
        assert_eq!(Permutation::adjacent(3, 1).sign(), -1);
        // adjacent_word reconstructs the permutation.
        let word = p.adjacent_word();
        let mut q = Permutation::identity(3);
        for &i in &word {
            q = q.compose(&Permutation::adjacent(3, i));
        }
        assert_eq!(q, p);
    }

    #[test]
    fn sjt_enumeration_covers_group() {
        for n in 0..=4usize {
            let perms = Permutation::enumerate_sjt(n);
            let expected: usize = (1..=n.max(1)).product();
            assert_eq!(perms.len(), expected);
            let mut seen: Vec<_> = perms.iter().map(|(p, _)| p.images().to_vec()).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), expected);
            for w in perms.windows(2) {
                let (prev, (next, swap)) = (&w[0].0, (&w[1].0, w[1].1));
                let i = swap.unwrap();
                assert_eq!(prev.compose(&Permutation::adjacent(n, i)), *next);
            }
        }
    }

    #[test]
    fn action_is_homomorphism() {
        // Regular-representation-like module: sign action of Sigma_2 twisted
        // by Koszul on sphere(1) tensor sphere(1).
        let s1 = ChainComplex::sphere(1);
        let swap = permute_factors(&[&s1, &s1], &[1, 0]);
        let (sq, _) = tensor_many(&[&s1, &s1]);
        let m = SigmaModule::new(2, sq, vec![swap]).unwrap();
        let p = Permutation::adjacent(2, 0);
        let a = m.action(&p);
        assert_eq!(a.then(&a), ChainMap::identity(&m.complex));
    }

    #[test]
    fn average_trivial_action_is_identity() {
        let c = ChainComplex::sphere(0);
        let m = SigmaModule::trivial(3, c);
        let e = m.average_idempotent();
        assert_eq!(e, ChainMap::identity(&m.complex));
        let coinv = m.coinvariants();
        assert_eq!(coinv.complex, m.complex);
    }

    #[test]
    fn average_regular_representation() {
        // Regular representation of Sigma_2 in degree 0: the projector is
        // rank one, (1/2)[[1,1],[1,1]].
        let c = ChainComplex::new_unchecked(BTreeMap::from([(0, 2)]), BTreeMap::new());
        let swap = ChainMap::new(
            c.clone(),
            c.clone(),
            BTreeMap::from([(0, Matrix::from_rows(vec![vec![qi(0), qi(1)], vec![qi(1), qi(0)]]).unwrap())]),
        )
        .unwrap();
        let m = SigmaModule::new(2, c, vec![swap]).unwrap();
        let e = m.average_idempotent();
        let expect = Matrix::from_rows(vec![
            vec![crate::q(1, 2), crate::q(1, 2)],
            vec![crate::q(1, 2), crate::q(1, 2)],
        ])
        .unwrap();
        assert_eq!(e.block(0), expect);
        assert_eq!(m.coinvariants().complex.dim(0), 1);
    }

    #[test]
    fn average_kills_odd_square() {
        // Koszul swap on sphere(1)^(x)2 averages to zero.
        let s1 = ChainComplex::sphere(1);
        let swap = permute_factors(&[&s1, &s1], &[1, 0]);
        let (sq, _) = tensor_many(&[&s1, &s1]);
        let m = SigmaModule::new(2, sq, vec![swap]).unwrap();
        assert!(m.average_idempotent().is_zero_map());
        assert!(m.coinvariants().complex.is_zero());
    }

    #[test]
    fn average_fixes_even_square() {
        let s2 = ChainComplex::sphere(2);
        let swap = permute_factors(&[&s2, &s2], &[1, 0]);
        let (sq, _) = tensor_many(&[&s2, &s2]);
        let m = SigmaModule::new(2, sq, vec![swap]).unwrap();
        let coinv = m.coinvariants();
        assert_eq!(coinv.complex.dims(), ChainComplex::sphere(4).dims());
    }

    #[test]
    fn idempotent_and_retraction_laws() {
        let s1 = ChainComplex::sphere(1);
        let d = ChainComplex::disk(2);
        let (t, _) = tensor_many(&[&s1, &d]);
        let swap = permute_factors(&[&s1, &d], &[1, 0]);
        let swap_back = permute_factors(&[&d, &s1], &[1, 0]);
        let gen = swap.then(&swap_back);
        let m = SigmaModule::new(2, t, vec![gen]).unwrap();
        let e = m.average_idempotent();
        assert_eq!(e.then(&e), e);
        e.validate().unwrap();
        let coinv = m.coinvariants();
        assert_eq!(coinv.incl.then(&coinv.proj), ChainMap::identity(&coinv.complex));
        assert_eq!(coinv.proj.then(&coinv.incl), e);
        coinv.complex.validate().unwrap();
        // Degreewise dimension equals the rank of the idempotent.
        for n in coinv.complex.degrees() {
            assert_eq!(coinv.complex.dim(n), e.block(n).rank());
        }
    }

    #[test]
    fn coinvariant_functoriality_on_triple() {
        // Composing permutations composes maps with signs, spot check on a
        // 3-letter Koszul action.
        let s1 = ChainComplex::sphere(1);
        let factors = [&s1, &s1, &s1];
        let (t, _) = tensor_many(&factors);
        let gens = vec![
            permute_factors(&factors, &[1, 0, 2]),
            permute_factors(&factors, &[0, 2, 1]),
        ];
        let m = SigmaModule::new(3, t, gens).unwrap();
        let p = Permutation::new(vec![1, 2, 0]).unwrap();
        let q = Permutation::new(vec![0, 2, 1]).unwrap();
        // action(p . q) = action(p) after action(q).
        assert_eq!(m.action(&p.compose(&q)), m.action(&q).then(&m.action(&p)));
    }

    #[test]
    fn bad_action_rejected() {
        let c = ChainComplex::sphere(0);
        let not_involution = ChainMap::new(
            c.clone(),
            c.clone(),
            BTreeMap::from([(0, Matrix::from_rows(vec![vec![qi(2)]]).unwrap())]),
        )
        .unwrap();
        assert!(matches!(
            SigmaModule::new(2, c, vec![not_involution]),
            Err(Error::SigmaAction { .. })
        ));
    }
}
