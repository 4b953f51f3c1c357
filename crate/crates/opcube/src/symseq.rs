//! Symmetric sequences in chain complexes: the levelwise tensor product, the
//! tensor powers over finite sets, and the circle product.
//!
//! The tensor product is computed by the function-indexed formula: the arity
//! `r` part is a direct sum over functions `pi: {1..r} -> {1..t}` of the
//! chain tensor of the factor values on the preimages. The symmetric group
//! of `r` acts by precomposition, relabelling summands; it never crosses
//! tensor factors, so it carries no Koszul signs of its own. The signs live
//! in the block action of `Sigma_t` on a tensor power, which does swap
//! factors, and that is the action the circle product coinvariants divide by.
//!
//! Arities are globally capped: operations taking a `cap` drop higher
//! arities only when an operand is already flagged truncated, and raise a
//! capacity error otherwise.

use std::collections::BTreeMap;

use crate::chain::{factorwise_map, permute_factors, tensor_many, ChainComplex, ChainMap, TensorLayout};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sigma::{Coinvariants, SigmaModule};
use crate::MAX_ARITY;

/// An ordered finite set of distinct labels, the indexing sets `R`, `T`, `W`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteSetLabel {
    elements: Vec<String>,
}

impl FiniteSetLabel {
    pub fn new(elements: Vec<String>) -> Result<Self> {
        let mut seen = elements.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != elements.len() {
            return Err(Error::BadSubset(format!("labels not distinct: {elements:?}")));
        }
        Ok(FiniteSetLabel { elements })
    }

    pub fn range(n: usize) -> Self {
        FiniteSetLabel { elements: (1..=n).map(|i| i.to_string()).collect() }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }
}

/// A finitely supported symmetric sequence: one [`SigmaModule`] per arity.
#[derive(Clone, Debug)]
pub struct SymSeq {
    arities: BTreeMap<usize, SigmaModule>,
    truncated: bool,
}

impl SymSeq {
    pub fn new(arities: BTreeMap<usize, SigmaModule>) -> Result<Self> {
        for (&r, m) in &arities {
            if m.arity != r {
                return Err(Error::Shape(format!(
                    "entry at arity {r} carries an action of arity {}",
                    m.arity
                )));
            }
            m.validate()?;
        }
        Ok(SymSeq {
            arities: arities.into_iter().filter(|(_, m)| !m.complex.is_zero()).collect(),
            truncated: false,
        })
    }

    pub fn new_unchecked(arities: BTreeMap<usize, SigmaModule>, truncated: bool) -> Self {
        SymSeq {
            arities: arities.into_iter().filter(|(_, m)| !m.complex.is_zero()).collect(),
            truncated,
        }
    }

    pub fn zero() -> Self {
        SymSeq { arities: BTreeMap::new(), truncated: false }
    }

    /// The unit for the levelwise tensor: `Q` concentrated at arity 0.
    pub fn tensor_unit() -> Self {
        Self::hat(&ChainComplex::unit())
    }

    /// The unit for the circle product: `Q` concentrated at arity 1.
    pub fn circle_unit() -> Self {
        let m = SigmaModule::trivial(1, ChainComplex::unit());
        SymSeq { arities: BTreeMap::from([(1, m)]), truncated: false }
    }

    /// Embed a complex at arity 0.
    pub fn hat(z: &ChainComplex) -> Self {
        if z.is_zero() {
            return Self::zero();
        }
        let m = SigmaModule::trivial(0, z.clone());
        SymSeq { arities: BTreeMap::from([(0, m)]), truncated: false }
    }

    /// Project the arity-0 part back out; `ev0(hat(z)) = z`.
    pub fn ev0(&self) -> ChainComplex {
        self.arities.get(&0).map_or_else(ChainComplex::zero, |m| m.complex.clone())
    }

    pub fn arity(&self, r: usize) -> Option<&SigmaModule> {
        self.arities.get(&r)
    }

    pub fn arities(&self) -> &BTreeMap<usize, SigmaModule> {
        &self.arities
    }

    pub fn arity_complex(&self, r: usize) -> ChainComplex {
        self.arities.get(&r).map_or_else(ChainComplex::zero, |m| m.complex.clone())
    }

    pub fn max_arity(&self) -> Option<usize> {
        self.arities.keys().next_back().copied()
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn mark_truncated(mut self) -> Self {
        self.truncated = true;
        self
    }

    pub fn dims(&self, r: usize) -> BTreeMap<i64, usize> {
        self.arity_complex(r).dims().clone()
    }

    /// Levelwise tensor product of a nonempty list of sequences.
    pub fn tensor(factors: &[&SymSeq], cap: usize) -> Result<SymSeq> {
        if factors.is_empty() {
            return Err(Error::Shape("tensor of an empty list".into()));
        }
        let reach: usize = factors.iter().map(|f| f.max_arity().unwrap_or(0)).sum();
        let any_zero = factors.iter().any(|f| f.arities.is_empty());
        let truncated_ok = factors.iter().any(|f| f.truncated);
        if !any_zero && reach > cap && !truncated_ok {
            return Err(Error::Capacity { arity: reach, cap });
        }
        let mut arities = BTreeMap::new();
        for r in 0..=cap.min(MAX_ARITY) {
            let at = ArityTensor::build(factors, r);
            if at.complex.is_zero() {
                continue;
            }
            arities.insert(r, SigmaModule::new_unchecked(r, at.complex, at.r_gens));
        }
        Ok(SymSeq { arities, truncated: truncated_ok || (!any_zero && reach > cap) })
    }

    /// The circle product `(A o B)[r] = (+)_t (A[t] (x) B^{(x)t}[r]) / Sigma_t`.
    pub fn circle(a: &SymSeq, b: &SymSeq, cap: usize) -> Result<SymSeq> {
        let reach = a
            .max_arity()
            .unwrap_or(0)
            .saturating_mul(b.max_arity().unwrap_or(0));
        if reach > cap && !(a.truncated || b.truncated) {
            return Err(Error::Capacity { arity: reach, cap });
        }
        let mut arities: BTreeMap<usize, SigmaModule> = BTreeMap::new();
        for r in 0..=cap.min(MAX_ARITY) {
            let mut part_complexes: Vec<ChainComplex> = Vec::new();
            let mut part_gens: Vec<Vec<ChainMap>> = Vec::new();
            for (&t, a_t) in &a.arities {
                if t > MAX_ARITY {
                    continue;
                }
                let part = CirclePart::build(a_t, b, t, r);
                let Some(part) = part else { continue };
                part_complexes.push(part.coinv.complex.clone());
                part_gens.push(part.r_gens);
            }
            if part_complexes.is_empty() {
                continue;
            }
            let refs: Vec<&ChainComplex> = part_complexes.iter().collect();
            let (total, _) = ChainComplex::direct_sum(&refs);
            let gens: Vec<ChainMap> = (0..r.saturating_sub(1))
                .map(|i| {
                    let maps: Vec<&ChainMap> = part_gens.iter().map(|g| &g[i]).collect();
                    ChainMap::direct_sum(&maps)
                })
                .collect();
            arities.insert(r, SigmaModule::new_unchecked(r, total, gens));
        }
        Ok(SymSeq {
            arities,
            truncated: a.truncated || b.truncated || reach > cap,
        })
    }

    /// Tensor power over finite sets: `(A^{(x)T})[R]`, with its residual
    /// `Sigma_R` action. For `T` empty this is the unit when `R` is empty and
    /// zero otherwise.
    pub fn power_over_set(a: &SymSeq, t_set: &FiniteSetLabel, r_set: &FiniteSetLabel) -> SigmaModule {
        let pow = PowerArity::build(a, t_set.len(), r_set.len());
        SigmaModule::new_unchecked(r_set.len(), pow.tensor.complex, pow.tensor.r_gens)
    }
}

/// One summand of a function-indexed tensor: the function `pi`, the factor
/// arities it induces, and the chain tensor of the factor values.
pub(crate) struct Summand {
    pub pi: Vec<usize>,
    pub factor_arities: Vec<usize>,
    pub complex: ChainComplex,
    #[allow(dead_code)]
    pub layout: TensorLayout,
}

/// The arity-`r` part of a tensor of sequences, with its `Sigma_r` action.
pub(crate) struct ArityTensor {
    pub summands: Vec<Summand>,
    pub complex: ChainComplex,
    pub offsets: Vec<BTreeMap<i64, usize>>,
    pub r_gens: Vec<ChainMap>,
}

fn functions(r: usize, t: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![vec![]];
    }
    if t == 0 {
        return vec![];
    }
    let mut fns: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..r {
        let mut next = Vec::new();
        for f in &fns {
            for v in 0..t {
                let mut g = f.clone();
                g.push(v);
                next.push(g);
            }
        }
        fns = next;
    }
    fns
}

impl ArityTensor {
    pub fn build(factors: &[&SymSeq], r: usize) -> ArityTensor {
        let t = factors.len();
        let mut summands = Vec::new();
        for pi in functions(r, t) {
            let mut factor_arities = vec![0usize; t];
            for &v in &pi {
                factor_arities[v] += 1;
            }
            let complexes: Vec<ChainComplex> =
                factor_arities.iter().enumerate().map(|(j, &rj)| factors[j].arity_complex(rj)).collect();
            if complexes.iter().any(|c| c.is_zero()) {
                continue;
            }
            let refs: Vec<&ChainComplex> = complexes.iter().collect();
            let (complex, layout) = tensor_many(&refs);
            summands.push(Summand { pi, factor_arities, complex, layout });
        }
        let refs: Vec<&ChainComplex> = summands.iter().map(|s| &s.complex).collect();
        let (complex, _) = ChainComplex::direct_sum(&refs);
        let offsets = summand_offsets(&summands, &complex);
        let r_gens = build_r_gens(factors, &summands, &complex, &offsets, r);
        ArityTensor { summands, complex, offsets, r_gens }
    }

    pub fn summand_index(&self, pi: &[usize]) -> Option<usize> {
        self.summands.iter().position(|s| s.pi == pi)
    }
}

fn summand_offsets(summands: &[Summand], total: &ChainComplex) -> Vec<BTreeMap<i64, usize>> {
    let mut offsets = vec![BTreeMap::new(); summands.len()];
    for &n in total.dims().keys() {
        let mut off = 0;
        for (si, s) in summands.iter().enumerate() {
            offsets[si].insert(n, off);
            off += s.complex.dim(n);
        }
    }
    offsets
}

/// The `Sigma_r` generators on a function-indexed sum: `s_i` precomposes the
/// indexing functions. When `pi(i) = pi(i+1)` the two letters sit in the same
/// factor and the factor's own action on the corresponding adjacent pair
/// applies; otherwise the summand is relabelled with identity matrices.
fn build_r_gens(
    factors: &[&SymSeq],
    summands: &[Summand],
    total: &ChainComplex,
    offsets: &[BTreeMap<i64, usize>],
    r: usize,
) -> Vec<ChainMap> {
    let mut gens = Vec::new();
    for i in 0..r.saturating_sub(1) {
        let mut blocks: BTreeMap<i64, Matrix> = total
            .dims()
            .keys()
            .map(|&n| (n, Matrix::zero(total.dim(n), total.dim(n))))
            .collect();
        for (si, s) in summands.iter().enumerate() {
            let mut pi2 = s.pi.clone();
            pi2.swap(i, i + 1);
            let ti = summands.iter().position(|x| x.pi == pi2).expect("relabelled summand");
            let local: ChainMap = if s.pi[i] == s.pi[i + 1] {
                let j = s.pi[i];
                let a = s.pi[..i].iter().filter(|&&v| v == j).count();
                let module = factors[j].arity(s.factor_arities[j]).expect("nonzero factor");
                let maps: Vec<ChainMap> = s
                    .factor_arities
                    .iter()
                    .enumerate()
                    .map(|(k, &rk)| {
                        let c = factors[k].arity_complex(rk);
                        if k == j {
                            module.gen(a).clone()
                        } else {
                            ChainMap::identity(&c)
                        }
                    })
                    .collect();
                let refs: Vec<&ChainMap> = maps.iter().collect();
                factorwise_map(&refs)
            } else {
                ChainMap::identity(&s.complex)
            };
            for &n in s.complex.dims().keys() {
                let b = local.block(n);
                if b.is_zero() {
                    continue;
                }
                let m = blocks.get_mut(&n).expect("degree present");
                m.paste(offsets[ti][&n], offsets[si][&n], &b);
            }
        }
        gens.push(ChainMap::new_unchecked(total.clone(), total.clone(), blocks));
    }
    gens
}

/// The arity-`r` part of the `t`-fold tensor power of one sequence, carrying
/// both the residual `Sigma_r` action and the block `Sigma_t` action that
/// permutes the power's factors (with Koszul signs).
pub(crate) struct PowerArity {
    pub tensor: ArityTensor,
    pub block_gens: Vec<ChainMap>,
}

impl PowerArity {
    pub fn build(a: &SymSeq, t: usize, r: usize) -> PowerArity {
        let factors: Vec<&SymSeq> = (0..t).map(|_| a).collect();
        let tensor = ArityTensor::build(&factors, r);
        let mut block_gens = Vec::new();
        for j in 0..t.saturating_sub(1) {
            let mut blocks: BTreeMap<i64, Matrix> = tensor
                .complex
                .dims()
                .keys()
                .map(|&n| (n, Matrix::zero(tensor.complex.dim(n), tensor.complex.dim(n))))
                .collect();
            for (si, s) in tensor.summands.iter().enumerate() {
                let pi2: Vec<usize> = s
                    .pi
                    .iter()
                    .map(|&v| {
                        if v == j {
                            j + 1
                        } else if v == j + 1 {
                            j
                        } else {
                            v
                        }
                    })
                    .collect();
                let ti = tensor.summand_index(&pi2).expect("relabelled summand");
                let complexes: Vec<ChainComplex> = s
                    .factor_arities
                    .iter()
                    .map(|&rk| a.arity_complex(rk))
                    .collect();
                let refs: Vec<&ChainComplex> = complexes.iter().collect();
                let mut perm: Vec<usize> = (0..t).collect();
                perm.swap(j, j + 1);
                let local = permute_factors(&refs, &perm);
                for &n in s.complex.dims().keys() {
                    let b = local.block(n);
                    if b.is_zero() {
                        continue;
                    }
                    let m = blocks.get_mut(&n).expect("degree present");
                    m.paste(tensor.offsets[ti][&n], tensor.offsets[si][&n], &b);
                }
            }
            block_gens.push(ChainMap::new_unchecked(
                tensor.complex.clone(),
                tensor.complex.clone(),
                blocks,
            ));
        }
        PowerArity { tensor, block_gens }
    }
}

/// One `t`-summand of a circle product arity: the diagonal coinvariants and
/// the residual `Sigma_r` generators transported through them.
pub(crate) struct CirclePart {
    pub coinv: Coinvariants,
    pub r_gens: Vec<ChainMap>,
}

impl CirclePart {
    pub fn build(a_t: &SigmaModule, b: &SymSeq, t: usize, r: usize) -> Option<CirclePart> {
        if a_t.complex.is_zero() {
            return None;
        }
        let pow = PowerArity::build(b, t, r);
        if pow.tensor.complex.is_zero() {
            return None;
        }
        // Diagonal Sigma_t module on A[t] (x) (B^{(x)t})[r].
        let diag_gens: Vec<ChainMap> = (0..t.saturating_sub(1))
            .map(|i| factorwise_map(&[a_t.gen(i), &pow.block_gens[i]]))
            .collect();
        let (product, _) = tensor_many(&[&a_t.complex, &pow.tensor.complex]);
        let diag = SigmaModule::new_unchecked(t, product.clone(), diag_gens);
        let coinv = diag.coinvariants();
        if coinv.complex.is_zero() {
            return None;
        }
        // Residual Sigma_r generators: id (x) gen, transported.
        let id_a = ChainMap::identity(&a_t.complex);
        let r_gens = (0..r.saturating_sub(1))
            .map(|i| {
                let big = factorwise_map(&[&id_a, &pow.tensor.r_gens[i]]);
                SigmaModule::transport(&coinv, &coinv, &big)
            })
            .collect();
        Some(CirclePart { coinv, r_gens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Connectivity;

    fn com_like(cap: usize) -> SymSeq {
        // K in arities 1..=cap, trivial action.
        let arities = (1..=cap)
            .map(|r| (r, SigmaModule::trivial(r, ChainComplex::unit())))
            .collect();
        SymSeq::new(arities).unwrap()
    }

    #[test]
    fn tensor_with_unit_keeps_dims() {
        let a = com_like(2);
        let t = SymSeq::tensor(&[&a, &SymSeq::tensor_unit()], 4).unwrap();
        for r in 0..=4 {
            assert_eq!(t.dims(r), a.dims(r), "arity {r}");
        }
    }

    #[test]
    fn tensor_dimension_count() {
        // A concentrated at 1 with value Q^2, B concentrated at 2 with value
        // Q: (A (x) B)[3] has dimension 6.
        let q2 = ChainComplex::new_unchecked(BTreeMap::from([(0, 2)]), BTreeMap::new());
        let a = SymSeq::new(BTreeMap::from([(1, SigmaModule::trivial(1, q2))])).unwrap();
        let b =
            SymSeq::new(BTreeMap::from([(2, SigmaModule::trivial(2, ChainComplex::unit()))]))
                .unwrap();
        let t = SymSeq::tensor(&[&a, &b], 4).unwrap();
        assert_eq!(t.dims(3), BTreeMap::from([(0, 6)]));
        // Empty arities: zero sequence tensors to zero.
        let z = SymSeq::tensor(&[&a, &SymSeq::zero()], 4).unwrap();
        assert!(z.arities().is_empty());
    }

    #[test]
    fn capacity_error_and_truncation_flag() {
        let a = com_like(3);
        let err = SymSeq::tensor(&[&a, &a], 4).unwrap_err();
        assert!(matches!(err, Error::Capacity { .. }));
        let trunc = a.clone().mark_truncated();
        let t = SymSeq::tensor(&[&trunc, &a], 4).unwrap();
        assert!(t.is_truncated());
        assert!(t.max_arity().unwrap() <= 4);
    }

    #[test]
    fn power_over_empty_set() {
        let a = com_like(2);
        let empty = FiniteSetLabel::new(vec![]).unwrap();
        let r2 = FiniteSetLabel::range(2);
        let p = SymSeq::power_over_set(&a, &empty, &empty);
        assert_eq!(p.complex.dims(), ChainComplex::unit().dims());
        let p = SymSeq::power_over_set(&a, &empty, &r2);
        assert!(p.complex.is_zero());
    }

    #[test]
    fn power_counts_bijections() {
        // A concentrated at 1: |T| = 2, |R| = 2 gives the two bijections.
        let a = SymSeq::new(BTreeMap::from([(
            1,
            SigmaModule::trivial(1, ChainComplex::sphere(1)),
        )]))
        .unwrap();
        let p = SymSeq::power_over_set(&a, &FiniteSetLabel::range(2), &FiniteSetLabel::range(2));
        assert_eq!(p.complex.dims(), &BTreeMap::from([(2, 2)]));
        p.validate().unwrap();
    }

    #[test]
    fn power_sigma_actions_validate() {
        // Mixed arities with a nontrivial graded value; both actions must be
        // genuine involutive braid-compatible chain maps.
        let mut arities = BTreeMap::new();
        arities.insert(0, SigmaModule::trivial(0, ChainComplex::sphere(1)));
        arities.insert(1, SigmaModule::trivial(1, ChainComplex::disk(2)));
        let a = SymSeq::new(arities).unwrap();
        let pow = PowerArity::build(&a, 2, 1);
        SigmaModule::new(1, pow.tensor.complex.clone(), pow.tensor.r_gens.clone()).unwrap();
        SigmaModule::new(2, pow.tensor.complex.clone(), pow.block_gens.clone()).unwrap();
    }

    #[test]
    fn circle_units_both_sides() {
        let a = com_like(2);
        let i = SymSeq::circle_unit();
        let left = SymSeq::circle(&i, &a, 4).unwrap();
        let right = SymSeq::circle(&a, &i, 4).unwrap();
        for r in 0..=4 {
            assert_eq!(left.dims(r), a.dims(r), "I o A at arity {r}");
            assert_eq!(right.dims(r), a.dims(r), "A o I at arity {r}");
            let want = a.arity_complex(r).homology_all();
            assert_eq!(left.arity_complex(r).homology_all(), want);
            assert_eq!(right.arity_complex(r).homology_all(), want);
        }
    }

    #[test]
    fn circle_with_zero_vanishes_positively() {
        let a = com_like(2);
        let z = SymSeq::circle(&a, &SymSeq::zero(), 4).unwrap();
        for r in 1..=4 {
            assert!(z.dims(r).is_empty(), "arity {r}");
        }
    }

    #[test]
    fn circle_kills_odd_square() {
        // Com-type A (arities <= 2) on B = hat(sphere(1)): the quadratic part
        // dies by signs, leaving only the linear part in arity 0.
        let a = com_like(2);
        let b = SymSeq::hat(&ChainComplex::sphere(1));
        let c = SymSeq::circle(&a, &b, 4).unwrap();
        assert_eq!(c.dims(0), BTreeMap::from([(1, 1)]));
        assert_eq!(c.ev0().connectivity(), Connectivity::Finite(0));
        for r in 1..=4 {
            assert!(c.dims(r).is_empty());
        }
    }

    #[test]
    fn hat_ev0_roundtrip() {
        let z = ChainComplex::disk(3);
        assert_eq!(SymSeq::hat(&z).ev0(), z);
        assert!(SymSeq::hat(&ChainComplex::zero()).arities().is_empty());
    }
}
