//! Operads as circle-product monoids, their built-in examples, free
//! algebras, and the enveloping sequence of a free algebra.
//!
//! Composition data is stored one signature at a time: for each
//! `(t; r_1..r_t)` within the arity cap, a chain map
//! `O[t] (x) O[r_1] (x) ... (x) O[r_t] -> O[r_1+...+r_t]`. Validation checks
//! the unit laws, equivariance on generators (head action paired with
//! argument swaps against the block inflation on the output) and full
//! associativity over every signature inside the cap, as matrix identities.
//!
//! The enveloping sequence of the free algebra `A = O(Z)` is computed in
//! closed form: `O_A[q] = (+)_p (O[p+q] (x) Z^{(x)p}) / Sigma_p`, where
//! `Sigma_p` acts diagonally on the first `p` inputs of the operation and on
//! the letters with Koszul signs, and the residual `Sigma_q` acts on the
//! remaining open slots. Substituting algebra elements into open slots is
//! operad composition with the letters carried along; that substitution is
//! the one primitive behind coproducts, the free structure map and the
//! cell-attachment filtration.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::chain::{
    apply_at_run, permute_factors, tensor_many, ChainComplex, ChainMap, Connectivity,
    TensorBlock, TensorLayout,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sigma::{Coinvariants, Permutation, SigmaModule};
use crate::symseq::SymSeq;
use crate::{Q, MAX_ARITY};

/// A composition signature: head arity `t`, argument arities `rs`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GammaKey {
    pub t: usize,
    pub rs: Vec<usize>,
}

impl GammaKey {
    pub fn total(&self) -> usize {
        self.rs.iter().sum()
    }
}

#[derive(Clone, Debug)]
pub struct Operad {
    name: String,
    cap: usize,
    seq: SymSeq,
    gamma: BTreeMap<GammaKey, ChainMap>,
    unit: ChainMap,
}

/// The built-in operads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    /// `K` concentrated at arity 1; algebras are plain complexes.
    Unit,
    /// `K` in every arity up to the cap with the trivial action.
    Com,
    /// The regular representation `K[Sigma_n]` in degree zero.
    Assoc,
}

impl Operad {
    /// Validating constructor; checks every monoid axiom within the cap and
    /// names the violated identity on failure.
    pub fn new(
        name: &str,
        seq: SymSeq,
        gamma: BTreeMap<GammaKey, ChainMap>,
        unit: Vec<Q>,
        cap: usize,
    ) -> Result<Operad> {
        let op = Self::assemble(name, seq, gamma, unit, cap)?;
        op.validate()?;
        Ok(op)
    }

    pub fn new_unchecked(
        name: &str,
        seq: SymSeq,
        gamma: BTreeMap<GammaKey, ChainMap>,
        unit: Vec<Q>,
        cap: usize,
    ) -> Operad {
        Self::assemble(name, seq, gamma, unit, cap).expect("well-shaped operad data")
    }

    fn assemble(
        name: &str,
        seq: SymSeq,
        gamma: BTreeMap<GammaKey, ChainMap>,
        unit: Vec<Q>,
        cap: usize,
    ) -> Result<Operad> {
        if cap > MAX_ARITY {
            return Err(Error::Capacity { arity: cap, cap: MAX_ARITY });
        }
        let one = seq.arity_complex(1);
        if one.dim(0) != unit.len() {
            return Err(Error::Dimension {
                expected: one.dim(0),
                got: unit.len(),
                context: "operad unit",
            });
        }
        let mut col = Matrix::zero(one.dim(0), 1);
        for (i, v) in unit.iter().enumerate() {
            col.set(i, 0, v.clone());
        }
        let unit_map =
            ChainMap::new_unchecked(ChainComplex::unit(), one, BTreeMap::from([(0, col)]));
        Ok(Operad { name: name.to_string(), cap, seq, gamma, unit: unit_map })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn seq(&self) -> &SymSeq {
        &self.seq
    }

    pub fn component(&self, r: usize) -> Option<&SigmaModule> {
        self.seq.arity(r)
    }

    pub fn complex(&self, r: usize) -> ChainComplex {
        self.seq.arity_complex(r)
    }

    /// The unit viewed as a map from the monoidal unit into `O[1]`.
    pub fn unit_map(&self) -> &ChainMap {
        &self.unit
    }

    pub fn gamma(&self, key: &GammaKey) -> Option<&ChainMap> {
        self.gamma.get(key)
    }

    pub fn gammas(&self) -> &BTreeMap<GammaKey, ChainMap> {
        &self.gamma
    }

    /// The flat factor list of a signature: `[O[t], O[r_1], .., O[r_t]]`.
    fn signature_factors(&self, key: &GammaKey) -> Vec<ChainComplex> {
        let mut v = vec![self.complex(key.t)];
        v.extend(key.rs.iter().map(|&r| self.complex(r)));
        v
    }

    /// Whether every component's homology vanishes in negative degrees.
    pub fn is_minus_one_connected(&self) -> bool {
        self.seq
            .arities()
            .values()
            .all(|m| m.complex.connectivity() >= Connectivity::Finite(-1))
    }

    fn signatures(&self) -> Vec<GammaKey> {
        signature_keys(&self.seq, self.cap)
    }

    /// Run the monoid axioms; errors name the violated identity.
    pub fn validate(&self) -> Result<()> {
        self.seq.arities().values().try_for_each(|m| m.validate())?;
        for (key, g) in &self.gamma {
            if key.rs.len() != key.t || key.total() > self.cap {
                return Err(Error::OperadAxiom {
                    identity: "signature shape",
                    arities: key.rs.clone(),
                    detail: format!("bad key {key:?}"),
                });
            }
            let refs: Vec<ChainComplex> = self.signature_factors(key);
            let fr: Vec<&ChainComplex> = refs.iter().collect();
            let (src, _) = tensor_many(&fr);
            if g.source != src || g.target != self.complex(key.total()) {
                return Err(Error::OperadAxiom {
                    identity: "signature shape",
                    arities: key.rs.clone(),
                    detail: format!("map endpoints do not match key {key:?}"),
                });
            }
            g.validate().map_err(|e| Error::OperadAxiom {
                identity: "gamma chain map",
                arities: key.rs.clone(),
                detail: e.to_string(),
            })?;
        }
        self.check_units()?;
        self.check_equivariance()?;
        self.check_associativity()
    }

    /// `gamma` of the signature applied to the first `1 + t` factors of a
    /// flat tensor; missing entries act as zero.
    fn gamma_at_head(&self, factors: &[&ChainComplex], key: &GammaKey) -> ChainMap {
        let g = self.gamma.get(key).cloned().unwrap_or_else(|| {
            let refs = self.signature_factors(key);
            let fr: Vec<&ChainComplex> = refs.iter().collect();
            ChainMap::zero(&tensor_many(&fr).0, &self.complex(key.total()))
        });
        apply_at_run(factors, 0, 1 + key.t, &g)
    }

    fn check_units(&self) -> Result<()> {
        let unit_c = ChainComplex::unit();
        for (&r, m) in self.seq.arities() {
            if r > self.cap {
                continue;
            }
            // Left unit: gamma(eta; b) = b.
            let key = GammaKey { t: 1, rs: vec![r] };
            let factors = [&unit_c, &m.complex];
            let embed = apply_at_run(&factors, 0, 1, &self.unit);
            let one = self.complex(1);
            let head = [&one, &m.complex];
            let composed = embed.then(&self.gamma_at_head(&head, &key));
            if composed != strip_units_iso(&factors, &m.complex) {
                return Err(Error::OperadAxiom {
                    identity: "left unit",
                    arities: vec![r],
                    detail: "gamma(eta; b) differs from b".into(),
                });
            }
            // Right unit: gamma(a; eta, .., eta) = a.
            let key = GammaKey { t: r, rs: vec![1; r] };
            let mut start: Vec<&ChainComplex> = vec![&m.complex];
            start.extend(std::iter::repeat_n(&unit_c, r));
            let mut cur_factors: Vec<ChainComplex> =
                start.iter().map(|c| (*c).clone()).collect();
            let mut cur = ChainMap::identity(&tensor_many(&start).0);
            for slot in 1..=r {
                let fr: Vec<&ChainComplex> = cur_factors.iter().collect();
                let step = apply_at_run(&fr, slot, 1, &self.unit);
                cur = cur.then(&step);
                cur_factors[slot] = self.complex(1);
            }
            let fr: Vec<&ChainComplex> = cur_factors.iter().collect();
            let composed = cur.then(&self.gamma_at_head(&fr, &key));
            if composed != strip_units_iso(&start, &m.complex) {
                return Err(Error::OperadAxiom {
                    identity: "right unit",
                    arities: vec![r],
                    detail: "gamma(a; eta..eta) differs from a".into(),
                });
            }
        }
        Ok(())
    }

    fn check_equivariance(&self) -> Result<()> {
        for key in self.signatures() {
            if self.complex(key.total()).is_zero() {
                continue;
            }
            let factors = self.signature_factors(&key);
            if factors.iter().any(|c| c.is_zero()) {
                continue;
            }
            let fr: Vec<&ChainComplex> = factors.iter().collect();
            let head = self.component(key.t).expect("head in support");
            let out = self.component(key.total()).expect("output in support").clone();
            // (a) gamma(g a; g b) = inflation(g) gamma(a; b) on generators.
            for i in 0..key.t.saturating_sub(1) {
                let act_head = apply_at_run(&fr, 0, 1, head.gen(i));
                let mut perm: Vec<usize> = (0..fr.len()).collect();
                perm.swap(i + 1, i + 2);
                let swap_args = permute_factors(&fr, &perm);
                let mut rs2 = key.rs.clone();
                rs2.swap(i, i + 1);
                let key2 = GammaKey { t: key.t, rs: rs2 };
                let swapped = self.signature_factors(&key2);
                let sf: Vec<&ChainComplex> = swapped.iter().collect();
                let lhs = act_head.then(&swap_args).then(&self.gamma_at_head(&sf, &key2));
                let rhs = self
                    .gamma_at_head(&fr, &key)
                    .then(&out.action(&block_inflation(&key.rs, i)));
                if lhs != rhs {
                    return Err(Error::OperadAxiom {
                        identity: "head equivariance",
                        arities: key.rs.clone(),
                        detail: format!("generator {i} of the head action"),
                    });
                }
            }
            // (b) argument actions against the shifted transposition.
            for (slot, &ri) in key.rs.iter().enumerate() {
                let arg = self.component(ri).expect("argument in support");
                let offset: usize = key.rs[..slot].iter().sum();
                for a in 0..ri.saturating_sub(1) {
                    let act_arg = apply_at_run(&fr, slot + 1, 1, arg.gen(a));
                    let lhs = act_arg.then(&self.gamma_at_head(&fr, &key));
                    let shifted = Permutation::adjacent(key.total(), offset + a);
                    let rhs = self.gamma_at_head(&fr, &key).then(&out.action(&shifted));
                    if lhs != rhs {
                        return Err(Error::OperadAxiom {
                            identity: "argument equivariance",
                            arities: key.rs.clone(),
                            detail: format!("slot {slot}, generator {a}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_associativity(&self) -> Result<()> {
        let support: Vec<usize> =
            self.seq.arities().keys().copied().filter(|&r| r <= self.cap).collect();
        for key in self.signatures() {
            let mut inners: Vec<Vec<Vec<usize>>> = vec![vec![]];
            for &ri in &key.rs {
                let mut next = Vec::new();
                for partial in &inners {
                    let used: usize = partial.iter().flatten().sum();
                    let mut stack: Vec<Vec<usize>> = vec![vec![]];
                    for _ in 0..ri {
                        let mut s2 = Vec::new();
                        for s in &stack {
                            let su: usize = s.iter().sum();
                            for &v in &support {
                                if used + su + v <= self.cap {
                                    let mut s3 = s.clone();
                                    s3.push(v);
                                    s2.push(s3);
                                }
                            }
                        }
                        stack = s2;
                    }
                    for s in stack {
                        if s.len() == ri {
                            let mut p2 = partial.clone();
                            p2.push(s);
                            next.push(p2);
                        }
                    }
                }
                inners = next;
            }
            for inner in inners {
                self.check_assoc_instance(&key, &inner)?;
            }
        }
        Ok(())
    }

    fn check_assoc_instance(&self, key: &GammaKey, inner: &[Vec<usize>]) -> Result<()> {
        let flat_inner: Vec<usize> = inner.iter().flatten().copied().collect();
        let out_arity: usize = flat_inner.iter().sum();
        if self.complex(out_arity).is_zero() {
            return Ok(());
        }
        let mut factors = vec![self.complex(key.t)];
        factors.extend(key.rs.iter().map(|&r| self.complex(r)));
        factors.extend(flat_inner.iter().map(|&s| self.complex(s)));
        if factors.iter().any(|c| c.is_zero()) {
            return Ok(());
        }
        let fr: Vec<&ChainComplex> = factors.iter().collect();
        // LHS: outer gamma first, then one flattened composition.
        let step1 = self.gamma_at_head(&fr, key);
        let mut mid = vec![self.complex(key.total())];
        mid.extend(flat_inner.iter().map(|&s| self.complex(s)));
        let mr: Vec<&ChainComplex> = mid.iter().collect();
        let key_flat = GammaKey { t: key.total(), rs: flat_inner.clone() };
        let lhs = step1.then(&self.gamma_at_head(&mr, &key_flat));
        // RHS: interleave the arguments, compose inside each slot, then the
        // outer gamma; the interleaving permutation carries the Koszul signs.
        let mut perm = vec![0usize];
        for i in 0..inner.len() {
            let dst: usize = 1 + inner[..i].iter().map(|v| 1 + v.len()).sum::<usize>();
            perm.push(dst);
        }
        for (i, s) in inner.iter().enumerate() {
            let base: usize = 1 + inner[..i].iter().map(|v| 1 + v.len()).sum::<usize>();
            for a in 0..s.len() {
                perm.push(base + 1 + a);
            }
        }
        let mut cur = permute_factors(&fr, &perm);
        let mut cur_factors: Vec<ChainComplex> = vec![self.complex(key.t)];
        for (i, s) in inner.iter().enumerate() {
            cur_factors.push(self.complex(key.rs[i]));
            cur_factors.extend(s.iter().map(|&v| self.complex(v)));
        }
        let mut slot_outputs = Vec::new();
        for (i, s) in inner.iter().enumerate() {
            let pos = 1 + i;
            let inner_key = GammaKey { t: key.rs[i], rs: s.clone() };
            let g = self.gamma.get(&inner_key).cloned().unwrap_or_else(|| {
                let refs = self.signature_factors(&inner_key);
                let rr: Vec<&ChainComplex> = refs.iter().collect();
                ChainMap::zero(&tensor_many(&rr).0, &self.complex(inner_key.total()))
            });
            let fr2: Vec<&ChainComplex> = cur_factors.iter().collect();
            let step = apply_at_run(&fr2, pos, 1 + s.len(), &g);
            cur = cur.then(&step);
            let out: usize = s.iter().sum();
            slot_outputs.push(out);
            cur_factors.splice(pos..pos + 1 + s.len(), [self.complex(out)]);
        }
        let outer_key = GammaKey { t: key.t, rs: slot_outputs };
        let fr3: Vec<&ChainComplex> = cur_factors.iter().collect();
        let rhs = cur.then(&self.gamma_at_head(&fr3, &outer_key));
        if lhs != rhs {
            return Err(Error::OperadAxiom {
                identity: "associativity",
                arities: key.rs.clone(),
                detail: format!("inner arities {inner:?}"),
            });
        }
        Ok(())
    }
}

/// The canonical isomorphism collapsing unit factors of a tensor whose only
/// non-unit factor is `kept`; basis order is preserved, so blocks are
/// identities.
fn strip_units_iso(factors: &[&ChainComplex], kept: &ChainComplex) -> ChainMap {
    let (src, _) = tensor_many(factors);
    debug_assert_eq!(src.dims(), kept.dims());
    let blocks = kept.dims().keys().map(|&n| (n, Matrix::identity(kept.dim(n)))).collect();
    ChainMap::new_unchecked(src, kept.clone(), blocks)
}

/// Block inflation of the adjacent transposition `s_i` for block sizes `rs`:
/// blocks `i` and `i + 1` trade places, preserving inner order.
pub fn block_inflation(rs: &[usize], i: usize) -> Permutation {
    let total: usize = rs.iter().sum();
    let mut images: Vec<usize> = (0..total).collect();
    let off: usize = rs[..i].iter().sum();
    let (a, b) = (rs[i], rs[i + 1]);
    for k in 0..a {
        images[off + k] = off + b + k;
    }
    for k in 0..b {
        images[off + a + k] = off + k;
    }
    Permutation::new(images).expect("block inflation is a bijection")
}

fn perms_lex(n: usize) -> Vec<Vec<usize>> {
    let mut stack: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &stack {
            for v in 0..n {
                if !p.contains(&v) {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
        }
        stack = next;
    }
    stack
}

fn signature_keys(seq: &SymSeq, cap: usize) -> Vec<GammaKey> {
    let support: Vec<usize> = seq.arities().keys().copied().filter(|&r| r <= cap).collect();
    let mut keys = Vec::new();
    for &t in &support {
        let mut stack: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..t {
            let mut next = Vec::new();
            for rs in &stack {
                let used: usize = rs.iter().sum();
                for &r in &support {
                    if used + r <= cap {
                        let mut rs2 = rs.clone();
                        rs2.push(r);
                        next.push(rs2);
                    }
                }
            }
            stack = next;
        }
        for rs in stack {
            if rs.len() == t {
                keys.push(GammaKey { t, rs });
            }
        }
    }
    keys
}

/// Construct one of the built-in operads, truncated at `cap`.
///
/// With `O[0] = 0` the truncation is a two-sided operadic ideal (every
/// argument has arity >= 1, so composition never lowers arity) and the
/// result is a genuine operad. `with_arity0` adds `O[0] = K`, and then
/// compositions through arities above the cap can re-enter it by plugging
/// in empty operations; for `cap >= 2` the truncation is only an operad up
/// to the cap (`validate` checks exactly that range), and constructions
/// that implicitly compose through higher arities, such as the enveloping
/// coequalizer, do not apply to it. `cap = 1` with `with_arity0` is sound:
/// that is the operad of pointed objects. The unit operad is concentrated
/// at arity 1 regardless of the flag.
pub fn builtin(which: Builtin, cap: usize, with_arity0: bool) -> Operad {
    assert!((1..=MAX_ARITY).contains(&cap), "builtin cap out of range");
    match which {
        Builtin::Unit => {
            let seq = SymSeq::circle_unit().mark_truncated();
            let gamma = scalar_gammas(&seq, cap);
            Operad::new_unchecked("unit", seq, gamma, vec![crate::qi(1)], cap)
        }
        Builtin::Com => {
            let lo = usize::from(!with_arity0);
            let arities: BTreeMap<usize, SigmaModule> = (lo..=cap)
                .map(|r| (r, SigmaModule::trivial(r, ChainComplex::unit())))
                .collect();
            let seq = SymSeq::new_unchecked(arities, true);
            let gamma = scalar_gammas(&seq, cap);
            Operad::new_unchecked("com", seq, gamma, vec![crate::qi(1)], cap)
        }
        Builtin::Assoc => {
            let lo = usize::from(!with_arity0);
            let arities: BTreeMap<usize, SigmaModule> = (lo..=cap)
                .map(|r| {
                    let perms = perms_lex(r);
                    let complex = ChainComplex::new_unchecked(
                        BTreeMap::from([(0, perms.len())]),
                        BTreeMap::new(),
                    );
                    let rank: BTreeMap<Vec<usize>, usize> =
                        perms.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
                    // Left translation: e_w -> e_{s_i . w}.
                    let gens = (0..r.saturating_sub(1))
                        .map(|i| {
                            let mut m = Matrix::zero(perms.len(), perms.len());
                            for (col, w) in perms.iter().enumerate() {
                                let mut v = w.clone();
                                for x in v.iter_mut() {
                                    if *x == i {
                                        *x = i + 1;
                                    } else if *x == i + 1 {
                                        *x = i;
                                    }
                                }
                                m.set(rank[&v], col, crate::qi(1));
                            }
                            ChainMap::new_unchecked(
                                complex.clone(),
                                complex.clone(),
                                BTreeMap::from([(0, m)]),
                            )
                        })
                        .collect();
                    (r, SigmaModule::new_unchecked(r, complex, gens))
                })
                .collect();
            let seq = SymSeq::new_unchecked(arities, true);
            let gamma = assoc_gammas(&seq, cap);
            Operad::new_unchecked("assoc", seq, gamma, vec![crate::qi(1)], cap)
        }
    }
}

/// Parse a builtin name as used by configs and the command line.
pub fn builtin_by_name(name: &str, cap: usize, with_arity0: bool) -> Result<Operad> {
    let which = match name {
        "unit" => Builtin::Unit,
        "com" => Builtin::Com,
        "assoc" => Builtin::Assoc,
        other => return Err(Error::Config(format!("unknown operad `{other}`"))),
    };
    Ok(builtin(which, cap, with_arity0))
}

/// Gamma maps for one-dimensional degree-zero components: every composition
/// is the scalar identity.
fn scalar_gammas(seq: &SymSeq, cap: usize) -> BTreeMap<GammaKey, ChainMap> {
    let mut gamma = BTreeMap::new();
    for key in signature_keys(seq, cap) {
        let target = seq.arity_complex(key.total());
        if target.is_zero() {
            continue;
        }
        let mut factors = vec![seq.arity_complex(key.t)];
        factors.extend(key.rs.iter().map(|&r| seq.arity_complex(r)));
        let fr: Vec<&ChainComplex> = factors.iter().collect();
        let (src, _) = tensor_many(&fr);
        let blocks = BTreeMap::from([(0, Matrix::identity(1))]);
        gamma.insert(key, ChainMap::new_unchecked(src, target, blocks));
    }
    gamma
}

/// Word substitution for the associative operad: the letter at each position
/// of the head word is replaced by the corresponding argument word, shifted
/// into its block of the output.
fn assoc_gammas(seq: &SymSeq, cap: usize) -> BTreeMap<GammaKey, ChainMap> {
    let mut gamma = BTreeMap::new();
    for key in signature_keys(seq, cap) {
        let out = key.total();
        let target = seq.arity_complex(out);
        if target.is_zero() {
            continue;
        }
        let mut factors = vec![seq.arity_complex(key.t)];
        factors.extend(key.rs.iter().map(|&r| seq.arity_complex(r)));
        let fr: Vec<&ChainComplex> = factors.iter().collect();
        let (src, layout) = tensor_many(&fr);
        let head_words = perms_lex(key.t);
        let arg_words: Vec<Vec<Vec<usize>>> = key.rs.iter().map(|&r| perms_lex(r)).collect();
        let out_rank: BTreeMap<Vec<usize>, usize> =
            perms_lex(out).into_iter().enumerate().map(|(i, p)| (p, i)).collect();
        let offsets: Vec<usize> = (0..key.t).map(|i| key.rs[..i].iter().sum()).collect();
        let block = layout.blocks.get(&0).and_then(|bs| bs.first()).expect("degree-zero block");
        let mut m = Matrix::zero(target.dim(0), src.dim(0));
        for idx in 0..block.size {
            let multi = block.unflat(idx);
            let w = &head_words[multi[0]];
            let mut word: Vec<usize> = Vec::with_capacity(out);
            for &letter in w {
                let u = &arg_words[letter][multi[1 + letter]];
                word.extend(u.iter().map(|&x| x + offsets[letter]));
            }
            m.set(out_rank[&word], block.flat(&multi), crate::qi(1));
        }
        gamma.insert(key, ChainMap::new_unchecked(src, target, BTreeMap::from([(0, m)])));
    }
    gamma
}

// ---------------------------------------------------------------------------
// Envelopes of free algebras
// ---------------------------------------------------------------------------

/// One `(q, p)` part of an envelope: the coinvariants of
/// `O[p+q] (x) Z^{(x)p}` under the diagonal `Sigma_p`.
#[derive(Clone, Debug)]
pub struct EnvPart {
    pub p: usize,
    pub factors: Vec<ChainComplex>,
    pub layout: TensorLayout,
    pub coinv: Coinvariants,
    pub offsets: BTreeMap<i64, usize>,
}

/// The arity-`q` piece `O_A[q]` of the enveloping sequence, with its
/// residual `Sigma_q` generators.
#[derive(Clone, Debug)]
pub struct EnvQ {
    pub q: usize,
    pub complex: ChainComplex,
    pub gens: Vec<ChainMap>,
    pub parts: Vec<EnvPart>,
}

impl EnvQ {
    /// Locate a basis vector: which part, and the index inside that part.
    pub fn resolve(&self, degree: i64, index: usize) -> (usize, usize) {
        for (pi, pt) in self.parts.iter().enumerate() {
            let off = pt.offsets.get(&degree).copied().unwrap_or(0);
            let d = pt.coinv.complex.dim(degree);
            if index >= off && index < off + d {
                return (pi, index - off);
            }
        }
        panic!("index {index} out of range in degree {degree}")
    }

    /// The residual action wrapped for arbitrary-permutation use.
    pub fn residual_module(&self) -> SigmaModule {
        SigmaModule::new_unchecked(self.q, self.complex.clone(), self.gens.clone())
    }
}

/// The enveloping sequence `O_A` of the free algebra `A = O(Z)`; the arity-0
/// piece is the underlying complex of `A`.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub generators: ChainComplex,
    qs: Vec<EnvQ>,
}

impl Envelope {
    pub fn q(&self, q: usize) -> &EnvQ {
        &self.qs[q]
    }

    pub fn arity_count(&self) -> usize {
        self.qs.len()
    }

    pub fn underlying(&self) -> &ChainComplex {
        &self.qs[0].complex
    }

    /// Every piece is (-1)-connected.
    pub fn is_minus_one_connected(&self) -> bool {
        self.qs.iter().all(|eq| eq.complex.connectivity() >= Connectivity::Finite(-1))
    }
}

/// Build a single arity of the envelope of `O(Z)`.
pub fn envelope_q(op: &Operad, z: &ChainComplex, q: usize) -> EnvQ {
    let mut parts = Vec::new();
    for p in 0..=op.cap().saturating_sub(q) {
        let head = op.complex(p + q);
        if head.is_zero() {
            continue;
        }
        let mut factors = vec![head.clone()];
        factors.extend(std::iter::repeat_n(z.clone(), p));
        let fr: Vec<&ChainComplex> = factors.iter().collect();
        let (big, layout) = tensor_many(&fr);
        if big.is_zero() {
            continue;
        }
        let head_mod = op.component(p + q).expect("head in support");
        let diag_gens: Vec<ChainMap> = (0..p.saturating_sub(1))
            .map(|i| {
                let on_head = apply_at_run(&fr, 0, 1, head_mod.gen(i));
                let mut perm: Vec<usize> = (0..fr.len()).collect();
                perm.swap(i + 1, i + 2);
                on_head.then(&permute_factors(&fr, &perm))
            })
            .collect();
        let module = SigmaModule::new_unchecked(p, big, diag_gens);
        let coinv = module.coinvariants();
        if coinv.complex.is_zero() {
            continue;
        }
        parts.push(EnvPart { p, factors, layout, coinv, offsets: BTreeMap::new() });
    }
    let refs: Vec<&ChainComplex> = parts.iter().map(|pt| &pt.coinv.complex).collect();
    let (complex, _) = ChainComplex::direct_sum(&refs);
    let degrees: Vec<i64> = complex.degrees().collect();
    for &n in &degrees {
        let mut off = 0;
        for pt in parts.iter_mut() {
            pt.offsets.insert(n, off);
            off += pt.coinv.complex.dim(n);
        }
    }
    let gens = (0..q.saturating_sub(1))
        .map(|j| {
            let maps: Vec<ChainMap> = parts
                .iter()
                .map(|pt| {
                    let fr: Vec<&ChainComplex> = pt.factors.iter().collect();
                    let head_mod = op.component(pt.p + q).expect("head in support");
                    let act = apply_at_run(&fr, 0, 1, head_mod.gen(pt.p + j));
                    SigmaModule::transport(&pt.coinv, &pt.coinv, &act)
                })
                .collect();
            let refs: Vec<&ChainMap> = maps.iter().collect();
            ChainMap::direct_sum(&refs)
        })
        .collect();
    EnvQ { q, complex, gens, parts }
}

/// Build the whole envelope.
pub fn envelope(op: &Operad, z: &ChainComplex) -> Envelope {
    let qs = (0..=op.cap()).map(|q| envelope_q(op, z, q)).collect();
    Envelope { generators: z.clone(), qs }
}

fn column_terms(m: &Matrix, col: usize) -> Vec<(usize, Q)> {
    (0..m.rows())
        .filter(|&i| !m.get(i, col).is_zero())
        .map(|i| (i, m.get(i, col).clone()))
        .collect()
}

fn locate(layout: &TensorLayout, degree: i64, index: usize) -> (&TensorBlock, Vec<usize>) {
    let bs = layout.blocks.get(&degree).expect("degree present");
    for b in bs {
        if index >= b.offset && index < b.offset + b.size {
            return (b, b.unflat(index - b.offset));
        }
    }
    panic!("index {index} not found in degree {degree}")
}

/// Substitution of `s` algebra elements into the first `s` open slots: a
/// chain map `O_A[q] (x) A^{(x)s} -> O_A[q-s]` with `A` the underlying
/// complex of the envelope's algebra. The substituted blocks expand in
/// place, so the filled coordinates stay in front; the only signs are the
/// Koszul crossings of each argument's operation over the letters to its
/// left.
pub fn substitution_map(op: &Operad, env: &Envelope, q: usize, s: usize) -> ChainMap {
    assert!(s <= q, "cannot fill more slots than are open");
    let a = env.underlying().clone();
    let src_q = env.q(q);
    let tgt_q = env.q(q - s);
    let mut factors: Vec<&ChainComplex> = vec![&src_q.complex];
    factors.extend(std::iter::repeat_n(&a, s));
    let (src, layout) = tensor_many(&factors);
    let unit_coords = column_terms(&op.unit_map().block(0), 0);
    let mut blocks: BTreeMap<i64, Matrix> = BTreeMap::new();
    for (&n, bs) in &layout.blocks {
        let rows = tgt_q.complex.dim(n);
        if rows == 0 {
            continue;
        }
        let mut m = Matrix::zero(rows, layout.dim(n));
        for b in bs {
            for idx in 0..b.size {
                let multi = b.unflat(idx);
                let col = b.flat(&multi);
                let (hp, hloc) = src_q.resolve(b.degrees[0], multi[0]);
                let head_part = &src_q.parts[hp];
                let head_terms = column_terms(&head_part.coinv.incl.block(b.degrees[0]), hloc);
                let mut arg_terms: Vec<Vec<(usize, Q)>> = Vec::new();
                let mut arg_parts: Vec<usize> = Vec::new();
                for j in 0..s {
                    let (ap, aloc) = env.q(0).resolve(b.degrees[1 + j], multi[1 + j]);
                    arg_parts.push(ap);
                    arg_terms.push(column_terms(
                        &env.q(0).parts[ap].coinv.incl.block(b.degrees[1 + j]),
                        aloc,
                    ));
                }
                let mut combos: Vec<(Vec<usize>, Q)> = vec![(vec![], crate::qi(1))];
                for terms in std::iter::once(&head_terms).chain(arg_terms.iter()) {
                    let mut next = Vec::new();
                    for (chosen, coef) in &combos {
                        for (row, c) in terms {
                            let mut ch = chosen.clone();
                            ch.push(*row);
                            next.push((ch, coef * c));
                        }
                    }
                    combos = next;
                }
                for (chosen, coef) in combos {
                    substitute_term(
                        op, env, q, s, head_part, &arg_parts, &b.degrees, &chosen, &coef,
                        &unit_coords, n, col, &mut m, tgt_q,
                    );
                }
            }
        }
        if !m.is_zero() {
            blocks.insert(n, m);
        }
    }
    ChainMap::new_unchecked(src, tgt_q.complex.clone(), blocks)
}

#[allow(clippy::too_many_arguments)]
fn substitute_term(
    op: &Operad,
    env: &Envelope,
    q: usize,
    s: usize,
    head_part: &EnvPart,
    arg_parts: &[usize],
    block_degrees: &[i64],
    chosen: &[usize],
    coef: &Q,
    unit_coords: &[(usize, Q)],
    n: i64,
    col: usize,
    m: &mut Matrix,
    tgt_q: &EnvQ,
) {
    let p = head_part.p;
    let (hblock, hmulti) = locate(&head_part.layout, block_degrees[0], chosen[0]);
    let e0 = hblock.degrees[0];
    let zeta0_degs = &hblock.degrees[1..];
    let zeta0_idx = &hmulti[1..];
    let q0 = env.q(0);
    let mut ops: Vec<(i64, usize)> = Vec::new();
    let mut letter_degs: Vec<Vec<i64>> = Vec::new();
    let mut letter_idx: Vec<Vec<usize>> = Vec::new();
    let mut arg_ps: Vec<usize> = Vec::new();
    for j in 0..s {
        let pt = &q0.parts[arg_parts[j]];
        let (ablock, amulti) = locate(&pt.layout, block_degrees[1 + j], chosen[1 + j]);
        ops.push((ablock.degrees[0], amulti[0]));
        letter_degs.push(ablock.degrees[1..].to_vec());
        letter_idx.push(amulti[1..].to_vec());
        arg_ps.push(pt.p);
    }
    let p_out: usize = p + arg_ps.iter().sum::<usize>();
    if p_out + (q - s) > op.cap() {
        return;
    }
    let Some(tgt_pos) = tgt_q.parts.iter().position(|pt| pt.p == p_out) else {
        return;
    };
    // Koszul: each argument operation crosses the letters accumulated so far.
    let mut crossing: i64 = zeta0_degs.iter().sum();
    let mut sign_odd = false;
    for j in 0..s {
        if ops[j].0.rem_euclid(2) == 1 && crossing.rem_euclid(2) == 1 {
            sign_odd = !sign_odd;
        }
        crossing += letter_degs[j].iter().sum::<i64>();
    }
    let mut rs = vec![1usize; p];
    rs.extend(arg_ps.iter().copied());
    rs.extend(std::iter::repeat_n(1, q - s));
    let key = GammaKey { t: p + q, rs };
    let Some(g) = op.gamma(&key) else { return };
    let gamma_factors: Vec<ChainComplex> = {
        let mut v = vec![op.complex(p + q)];
        v.extend(key.rs.iter().map(|&r| op.complex(r)));
        v
    };
    let fr: Vec<&ChainComplex> = gamma_factors.iter().collect();
    let (_, glayout) = tensor_many(&fr);
    let unit_slots = p + (q - s);
    let mut unit_combos: Vec<(Vec<usize>, Q)> = vec![(vec![], crate::qi(1))];
    for _ in 0..unit_slots {
        let mut next = Vec::new();
        for (cu, c) in &unit_combos {
            for (row, uc) in unit_coords {
                let mut cu2 = cu.clone();
                cu2.push(*row);
                next.push((cu2, c * uc));
            }
        }
        unit_combos = next;
    }
    let e_total: i64 = e0 + ops.iter().map(|&(e, _)| e).sum::<i64>();
    let gblock = g.block(e_total);
    if gblock.is_zero() {
        return;
    }
    for (unit_choice, ucoef) in unit_combos {
        let mut gdegs: Vec<i64> = vec![e0];
        let mut gmulti: Vec<usize> = vec![hmulti[0]];
        for k in 0..p {
            gdegs.push(0);
            gmulti.push(unit_choice[k]);
        }
        for j in 0..s {
            gdegs.push(ops[j].0);
            gmulti.push(ops[j].1);
        }
        for k in 0..(q - s) {
            gdegs.push(0);
            gmulti.push(unit_choice[p + k]);
        }
        let Some(gb) = glayout.block_for(e_total, &gdegs) else { continue };
        let gcol = gb.flat(&gmulti);
        let tgt_part = &tgt_q.parts[tgt_pos];
        let mut tdegs: Vec<i64> = vec![e_total];
        tdegs.extend_from_slice(zeta0_degs);
        for j in 0..s {
            tdegs.extend_from_slice(&letter_degs[j]);
        }
        let Some(tb) = tgt_part.layout.block_for(n, &tdegs) else { continue };
        let proj = tgt_part.coinv.proj.block(n);
        for out_row in 0..op.complex(key.total()).dim(e_total) {
            let gv = gblock.get(out_row, gcol);
            if gv.is_zero() {
                continue;
            }
            let mut tmulti: Vec<usize> = vec![out_row];
            tmulti.extend_from_slice(zeta0_idx);
            for j in 0..s {
                tmulti.extend_from_slice(&letter_idx[j]);
            }
            let big_row = tb.flat(&tmulti);
            for r2 in 0..proj.rows() {
                let pv = proj.get(r2, big_row);
                if pv.is_zero() {
                    continue;
                }
                let mut v = coef * &ucoef * gv * pv;
                if sign_odd {
                    v = -v;
                }
                let off = tgt_part.offsets.get(&n).copied().unwrap_or(0);
                m.add_to(off + r2, col, &v);
            }
        }
    }
}

/// Functoriality in the generators: `g: Z -> Z'` induces
/// `O_{O(Z)}[q] -> O_{O(Z')}[q]` by mapping every letter.
pub fn map_generators(src: &EnvQ, tgt: &EnvQ, g: &ChainMap) -> ChainMap {
    let mut maps: Vec<ChainMap> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (si, spart) in src.parts.iter().enumerate() {
        let Some(ti) = tgt.parts.iter().position(|t| t.p == spart.p) else {
            continue;
        };
        let tpart = &tgt.parts[ti];
        let mut cur_factors: Vec<ChainComplex> = spart.factors.clone();
        let mut cur: Option<ChainMap> = None;
        for slot in 1..=spart.p {
            let fr: Vec<&ChainComplex> = cur_factors.iter().collect();
            let step = apply_at_run(&fr, slot, 1, g);
            cur_factors[slot] = g.target.clone();
            cur = Some(match cur {
                None => step,
                Some(c) => c.then(&step),
            });
        }
        let big = match cur {
            None => {
                let fr: Vec<&ChainComplex> = spart.factors.iter().collect();
                ChainMap::identity(&tensor_many(&fr).0)
            }
            Some(c) => c,
        };
        maps.push(spart.coinv.incl.then(&big).then(&tpart.coinv.proj));
        pairs.push((si, ti));
    }
    let mut blocks: BTreeMap<i64, Matrix> = BTreeMap::new();
    for &n in src.complex.dims().keys() {
        if tgt.complex.dim(n) == 0 {
            continue;
        }
        let mut m = Matrix::zero(tgt.complex.dim(n), src.complex.dim(n));
        for (k, &(si, ti)) in pairs.iter().enumerate() {
            let b = maps[k].block(n);
            if b.is_zero() {
                continue;
            }
            let so = src.parts[si].offsets.get(&n).copied().unwrap_or(0);
            let to = tgt.parts[ti].offsets.get(&n).copied().unwrap_or(0);
            m.paste(to, so, &b);
        }
        if !m.is_zero() {
            blocks.insert(n, m);
        }
    }
    ChainMap::new_unchecked(src.complex.clone(), tgt.complex.clone(), blocks)
}

/// The free functor on a map of generators: `O(g): O(Z) -> O(Z')`.
pub fn free_map(env_src: &Envelope, env_tgt: &Envelope, g: &ChainMap) -> ChainMap {
    map_generators(env_src.q(0), env_tgt.q(0), g)
}

/// The structure map `m: O(A) -> A` of the free algebra `A = O(Z)`:
/// substitute every letter of an `O(A)`-element as an algebra element.
pub fn free_structure_map(op: &Operad, env_z: &Envelope, env_oa_q0: &EnvQ) -> ChainMap {
    let a = env_z.underlying().clone();
    let mut blocks: BTreeMap<i64, Matrix> = BTreeMap::new();
    for &n in env_oa_q0.complex.dims().keys() {
        blocks.insert(n, Matrix::zero(a.dim(n), env_oa_q0.complex.dim(n)));
    }
    for part in &env_oa_q0.parts {
        let s = part.p;
        let env_s = env_z.q(s);
        let Some(head_pos) = env_s.parts.iter().position(|pt| pt.p == 0) else {
            continue;
        };
        let head_part = &env_s.parts[head_pos];
        let subst = substitution_map(op, env_z, s, s);
        let mut sub_factors: Vec<&ChainComplex> = vec![&env_s.complex];
        sub_factors.extend(std::iter::repeat_n(&a, s));
        let (_, sub_layout) = tensor_many(&sub_factors);
        for &n in part.coinv.complex.dims().keys().cloned().collect::<Vec<_>>().iter() {
            let Some(mblock) = blocks.get_mut(&n) else { continue };
            if mblock.rows() == 0 {
                continue;
            }
            let incl = part.coinv.incl.block(n);
            let sblock = subst.block(n);
            for local in 0..part.coinv.complex.dim(n) {
                let colidx = part.offsets.get(&n).copied().unwrap_or(0) + local;
                for (brow, bcoef) in column_terms(&incl, local) {
                    let (blk, multi) = locate(&part.layout, n, brow);
                    // The pure-operation part embeds into O_A[s] at its
                    // offset; its coinvariants are trivial.
                    let head_off =
                        head_part.offsets.get(&blk.degrees[0]).copied().unwrap_or(0);
                    let sdegs: Vec<i64> = blk.degrees.clone();
                    let Some(sb) = sub_layout.block_for(n, &sdegs) else { continue };
                    let mut smulti: Vec<usize> = vec![head_off + multi[0]];
                    smulti.extend_from_slice(&multi[1..]);
                    let scol = sb.flat(&smulti);
                    for out in 0..a.dim(n) {
                        let sv = sblock.get(out, scol);
                        if sv.is_zero() {
                            continue;
                        }
                        mblock.add_to(out, colidx, &(&bcoef * sv));
                    }
                }
            }
        }
    }
    let blocks = blocks.into_iter().filter(|(_, m)| !m.is_zero()).collect();
    ChainMap::new_unchecked(env_oa_q0.complex.clone(), a, blocks)
}

/// The enveloping coequalizer at arity `q`, computed as the cokernel of
/// `d_0 - d_1` on the two-level presentation. Must agree with `envelope_q`
/// for free algebras; this is the brute-force oracle for the closed form.
pub fn envelope_coeq(op: &Operad, z: &ChainComplex, q: usize) -> ChainComplex {
    let env_z = envelope(op, z);
    let a = env_z.underlying().clone();
    let env_a_q = envelope_q(op, &a, q);
    let env_a_0 = envelope_q(op, &a, 0);
    let oa = env_a_0.complex.clone();
    let env_oa_q = envelope_q(op, &oa, q);
    let m_struct = free_structure_map(op, &env_z, &env_a_0);
    let d1 = map_generators(&env_oa_q, &env_a_q, &m_struct);
    let d0 = coeq_d0(op, &env_oa_q, &env_a_0, &env_a_q, q);
    let diff = d0.sub(&d1);
    crate::chain::cokernel_complex(&diff).0
}

/// `d_0` of the enveloping coequalizer: each `O(A)`-letter of the source is
/// an operation with `A`-letters; compose the operations into the head and
/// concatenate the letters.
fn coeq_d0(op: &Operad, src: &EnvQ, oa_structure: &EnvQ, tgt: &EnvQ, q: usize) -> ChainMap {
    let mut blocks: BTreeMap<i64, Matrix> = BTreeMap::new();
    for &n in src.complex.dims().keys() {
        blocks.insert(n, Matrix::zero(tgt.complex.dim(n), src.complex.dim(n)));
    }
    let unit_coords = column_terms(&op.unit_map().block(0), 0);
    for part in &src.parts {
        let p = part.p;
        for &n in part.coinv.complex.dims().keys().cloned().collect::<Vec<_>>().iter() {
            let Some(mblock) = blocks.get_mut(&n) else { continue };
            if mblock.rows() == 0 {
                continue;
            }
            let incl = part.coinv.incl.block(n);
            for local in 0..part.coinv.complex.dim(n) {
                let col = part.offsets.get(&n).copied().unwrap_or(0) + local;
                for (brow, bcoef) in column_terms(&incl, local) {
                    let (blk, multi) = locate(&part.layout, n, brow);
                    let mut letter_terms: Vec<Vec<(usize, usize, Q)>> = Vec::new();
                    for j in 0..p {
                        let (sp, sloc) = oa_structure.resolve(blk.degrees[1 + j], multi[1 + j]);
                        let spart = &oa_structure.parts[sp];
                        let terms =
                            column_terms(&spart.coinv.incl.block(blk.degrees[1 + j]), sloc)
                                .into_iter()
                                .map(|(row, c)| (sp, row, c))
                                .collect();
                        letter_terms.push(terms);
                    }
                    let mut combos: Vec<(Vec<(usize, usize)>, Q)> =
                        vec![(vec![], bcoef.clone())];
                    for terms in &letter_terms {
                        let mut next = Vec::new();
                        for (chosen, c) in &combos {
                            for (sp, row, cc) in terms {
                                let mut ch = chosen.clone();
                                ch.push((*sp, *row));
                                next.push((ch, c * cc));
                            }
                        }
                        combos = next;
                    }
                    for (chosen, coef) in combos {
                        coeq_d0_term(
                            op, oa_structure, tgt, q, p, blk, &multi, &chosen, &coef,
                            &unit_coords, n, col, mblock,
                        );
                    }
                }
            }
        }
    }
    let blocks = blocks.into_iter().filter(|(_, m)| !m.is_zero()).collect();
    ChainMap::new_unchecked(src.complex.clone(), tgt.complex.clone(), blocks)
}

#[allow(clippy::too_many_arguments)]
fn coeq_d0_term(
    op: &Operad,
    oa_structure: &EnvQ,
    tgt: &EnvQ,
    q: usize,
    p: usize,
    blk: &TensorBlock,
    multi: &[usize],
    chosen: &[(usize, usize)],
    coef: &Q,
    unit_coords: &[(usize, Q)],
    n: i64,
    col: usize,
    m: &mut Matrix,
) {
    let mut ops: Vec<(i64, usize)> = Vec::new();
    let mut letter_degs: Vec<Vec<i64>> = Vec::new();
    let mut letter_idx: Vec<Vec<usize>> = Vec::new();
    let mut ss: Vec<usize> = Vec::new();
    for (j, &(sp, row)) in chosen.iter().enumerate() {
        let spart = &oa_structure.parts[sp];
        let (ablk, amulti) = locate(&spart.layout, blk.degrees[1 + j], row);
        ops.push((ablk.degrees[0], amulti[0]));
        letter_degs.push(ablk.degrees[1..].to_vec());
        letter_idx.push(amulti[1..].to_vec());
        ss.push(spart.p);
    }
    let p_out: usize = ss.iter().sum();
    if p_out + q > op.cap() {
        return;
    }
    let Some(tgt_pos) = tgt.parts.iter().position(|pt| pt.p == p_out) else {
        return;
    };
    // Koszul: each operation crosses the letters of the arguments before it.
    let mut crossing: i64 = 0;
    let mut sign_odd = false;
    for j in 0..p {
        if ops[j].0.rem_euclid(2) == 1 && crossing.rem_euclid(2) == 1 {
            sign_odd = !sign_odd;
        }
        crossing += letter_degs[j].iter().sum::<i64>();
    }
    let mut rs: Vec<usize> = ss.clone();
    rs.extend(std::iter::repeat_n(1, q));
    let key = GammaKey { t: p + q, rs };
    let Some(g) = op.gamma(&key) else { return };
    let gamma_factors: Vec<ChainComplex> = {
        let mut v = vec![op.complex(p + q)];
        v.extend(key.rs.iter().map(|&r| op.complex(r)));
        v
    };
    let fr: Vec<&ChainComplex> = gamma_factors.iter().collect();
    let (_, glayout) = tensor_many(&fr);
    let mut unit_combos: Vec<(Vec<usize>, Q)> = vec![(vec![], crate::qi(1))];
    for _ in 0..q {
        let mut next = Vec::new();
        for (cu, c) in &unit_combos {
            for (row, uc) in unit_coords {
                let mut cu2 = cu.clone();
                cu2.push(*row);
                next.push((cu2, c * uc));
            }
        }
        unit_combos = next;
    }
    let e_total: i64 = blk.degrees[0] + ops.iter().map(|&(e, _)| e).sum::<i64>();
    let gblock = g.block(e_total);
    if gblock.is_zero() {
        return;
    }
    for (unit_choice, ucoef) in unit_combos {
        let mut gdegs: Vec<i64> = vec![blk.degrees[0]];
        let mut gmulti: Vec<usize> = vec![multi[0]];
        for j in 0..p {
            gdegs.push(ops[j].0);
            gmulti.push(ops[j].1);
        }
        for k in 0..q {
            gdegs.push(0);
            gmulti.push(unit_choice[k]);
        }
        let Some(gb) = glayout.block_for(e_total, &gdegs) else { continue };
        let gcol = gb.flat(&gmulti);
        let tgt_part = &tgt.parts[tgt_pos];
        let mut tdegs: Vec<i64> = vec![e_total];
        for j in 0..p {
            tdegs.extend_from_slice(&letter_degs[j]);
        }
        let Some(tb) = tgt_part.layout.block_for(n, &tdegs) else { continue };
        let proj = tgt_part.coinv.proj.block(n);
        for out_row in 0..op.complex(key.total()).dim(e_total) {
            let gv = gblock.get(out_row, gcol);
            if gv.is_zero() {
                continue;
            }
            let mut tmulti: Vec<usize> = vec![out_row];
            for j in 0..p {
                tmulti.extend_from_slice(&letter_idx[j]);
            }
            let big_row = tb.flat(&tmulti);
            for r2 in 0..proj.rows() {
                let pv = proj.get(r2, big_row);
                if pv.is_zero() {
                    continue;
                }
                let mut v = coef * &ucoef * gv * pv;
                if sign_odd {
                    v = -v;
                }
                let off = tgt_part.offsets.get(&n).copied().unwrap_or(0);
                m.add_to(off + r2, col, &v);
            }
        }
    }
}

/// The coinvariants of `head (x) Y^{(x)t}` under a diagonal action: the
/// head's generators paired with the Koszul swaps of the `Y` factors.
pub fn diagonal_power(
    head: &ChainComplex,
    head_gens: &[ChainMap],
    y: &ChainComplex,
    t: usize,
) -> (Vec<ChainComplex>, Coinvariants) {
    let mut factors = vec![head.clone()];
    factors.extend(std::iter::repeat_n(y.clone(), t));
    let fr: Vec<&ChainComplex> = factors.iter().collect();
    let (big, _) = tensor_many(&fr);
    let gens: Vec<ChainMap> = (0..t.saturating_sub(1))
        .map(|i| {
            let on_head = apply_at_run(&fr, 0, 1, &head_gens[i]);
            let mut perm: Vec<usize> = (0..fr.len()).collect();
            perm.swap(i + 1, i + 2);
            on_head.then(&permute_factors(&fr, &perm))
        })
        .collect();
    let module = SigmaModule::new_unchecked(t, big, gens);
    let coinv = module.coinvariants();
    (factors, coinv)
}

/// The coproduct `A (+) O(Y) = (+)_q (O_A[q] (x) Y^{(x)q}) / Sigma_q`.
pub fn coproduct_with_free(op: &Operad, env: &Envelope, y: &ChainComplex) -> ChainComplex {
    let mut parts: Vec<ChainComplex> = Vec::new();
    for q in 0..=op.cap() {
        let eq = env.q(q);
        if eq.complex.is_zero() {
            continue;
        }
        let (_, coinv) = diagonal_power(&eq.complex, &eq.gens, y, q);
        if !coinv.complex.is_zero() {
            parts.push(coinv.complex);
        }
    }
    let refs: Vec<&ChainComplex> = parts.iter().collect();
    ChainComplex::direct_sum(&refs).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Connectivity;
    use std::collections::BTreeMap as Map;

    #[test]
    fn builtins_validate() {
        for cap in 1..=4 {
            builtin(Builtin::Unit, cap, false).validate().unwrap();
            builtin(Builtin::Com, cap, false).validate().unwrap();
            builtin(Builtin::Assoc, cap, false).validate().unwrap();
        }
        // With O[0] = K the axioms hold within the cap only (and the
        // instance count grows steeply), so the flag variants are checked
        // at the caps the rest of the engine uses.
        for cap in 1..=3 {
            builtin(Builtin::Com, cap, true).validate().unwrap();
            builtin(Builtin::Assoc, cap, true).validate().unwrap();
        }
    }

    #[test]
    fn builtin_dimensions() {
        let assoc = builtin(Builtin::Assoc, 3, false);
        assert_eq!(assoc.complex(2).dim(0), 2);
        assert_eq!(assoc.complex(3).dim(0), 6);
        let com = builtin(Builtin::Com, 3, false);
        for r in 1..=3 {
            assert_eq!(com.complex(r).dim(0), 1);
        }
        let unit = builtin(Builtin::Unit, 3, false);
        assert!(unit.complex(0).is_zero());
        assert_eq!(unit.complex(1).dim(0), 1);
        assert!(unit.complex(2).is_zero());
    }

    #[test]
    fn broken_gamma_is_rejected() {
        let com = builtin(Builtin::Com, 2, false);
        let mut gamma = com.gammas().clone();
        let key = GammaKey { t: 2, rs: vec![1, 1] };
        let g = gamma.get(&key).unwrap().clone();
        gamma.insert(key, g.scale(&crate::qi(-1)));
        let err =
            Operad::new("broken", com.seq().clone(), gamma, vec![crate::qi(1)], 2).unwrap_err();
        assert!(matches!(err, Error::OperadAxiom { .. }), "got {err:?}");
    }

    #[test]
    fn free_algebra_examples() {
        let z = ChainComplex::disk(2);
        let unit = builtin(Builtin::Unit, 3, false);
        let env = envelope(&unit, &z);
        assert_eq!(env.underlying().dims(), z.dims());
        let com = builtin(Builtin::Com, 2, false);
        let env = envelope(&com, &ChainComplex::sphere(1));
        assert_eq!(env.underlying().dims(), &Map::from([(1, 1)]));
        let env = envelope(&com, &ChainComplex::sphere(2));
        assert_eq!(env.underlying().dims(), &Map::from([(2, 1), (4, 1)]));
        let assoc = builtin(Builtin::Assoc, 3, false);
        let env = envelope(&assoc, &ChainComplex::sphere(1));
        assert_eq!(env.underlying().dims(), &Map::from([(1, 1), (2, 1), (3, 1)]));
    }

    #[test]
    fn envelope_trivial_algebra_is_operad() {
        for op in [builtin(Builtin::Com, 3, false), builtin(Builtin::Assoc, 3, false)] {
            let env = envelope(&op, &ChainComplex::zero());
            for q in 0..=3 {
                assert_eq!(env.q(q).complex.dims(), op.complex(q).dims(), "arity {q}");
            }
        }
    }

    #[test]
    fn envelope_unit_operad() {
        let unit = builtin(Builtin::Unit, 3, false);
        let z = ChainComplex::sphere(2);
        let env = envelope(&unit, &z);
        assert_eq!(env.q(0).complex.dims(), z.dims());
        assert_eq!(env.q(1).complex.dims(), ChainComplex::unit().dims());
        for q in 2..=3 {
            assert!(env.q(q).complex.is_zero());
        }
    }

    #[test]
    fn envelope_com2_sphere2() {
        let com = builtin(Builtin::Com, 2, false);
        let env = envelope(&com, &ChainComplex::sphere(2));
        assert_eq!(env.q(1).complex.dims(), &Map::from([(0, 1), (2, 1)]));
    }

    #[test]
    fn envelope_minus_one_connected() {
        let com = builtin(Builtin::Com, 3, false);
        let env = envelope(&com, &ChainComplex::sphere(0));
        assert!(env.is_minus_one_connected());
    }

    #[test]
    fn coeq_matches_closed_form() {
        for (op, z) in [
            (builtin(Builtin::Com, 2, false), ChainComplex::sphere(1)),
            (builtin(Builtin::Com, 2, false), ChainComplex::sphere(2)),
            (builtin(Builtin::Unit, 2, false), ChainComplex::sphere(1)),
            (builtin(Builtin::Assoc, 2, false), ChainComplex::sphere(1)),
        ] {
            let env = envelope(&op, &z);
            for q in 0..=2 {
                let coeq = envelope_coeq(&op, &z, q);
                assert_eq!(coeq.dims(), env.q(q).complex.dims(), "{} arity {q}", op.name());
                assert_eq!(
                    coeq.homology_all(),
                    env.q(q).complex.homology_all(),
                    "{} arity {q} homology",
                    op.name()
                );
            }
        }
    }

    #[test]
    fn coproduct_examples() {
        let com = builtin(Builtin::Com, 2, false);
        let z = ChainComplex::sphere(2);
        let env = envelope(&com, &z);
        let c = coproduct_with_free(&com, &env, &ChainComplex::zero());
        assert_eq!(c.dims(), env.underlying().dims());
        let env0 = envelope(&com, &ChainComplex::zero());
        let y = ChainComplex::sphere(2);
        let c = coproduct_with_free(&com, &env0, &y);
        let free_y = envelope(&com, &y);
        assert_eq!(c.dims(), free_y.underlying().dims());
        let unit = builtin(Builtin::Unit, 2, false);
        let envu = envelope(&unit, &z);
        let c = coproduct_with_free(&unit, &envu, &y);
        assert_eq!(c.total_dim(), z.total_dim() + y.total_dim());
    }

    #[test]
    fn substitution_is_a_chain_map() {
        let com = builtin(Builtin::Com, 3, false);
        let z = ChainComplex::disk(2);
        let env = envelope(&com, &z);
        for q in 1..=3 {
            for s in 1..=q {
                substitution_map(&com, &env, q, s).validate().unwrap();
            }
        }
        let assoc = builtin(Builtin::Assoc, 2, false);
        let env = envelope(&assoc, &ChainComplex::sphere(1));
        substitution_map(&assoc, &env, 2, 1).validate().unwrap();
        substitution_map(&assoc, &env, 2, 2).validate().unwrap();
    }

    #[test]
    fn structure_map_is_a_chain_map() {
        for op in [builtin(Builtin::Com, 2, false), builtin(Builtin::Assoc, 2, false)] {
            let z = ChainComplex::sphere(1);
            let env = envelope(&op, &z);
            let env_a0 = envelope_q(&op, env.underlying(), 0);
            let m = free_structure_map(&op, &env, &env_a0);
            m.validate().unwrap();
            for &n in env.underlying().dims().keys() {
                assert_eq!(m.block(n).rank(), env.underlying().dim(n), "degree {n}");
            }
        }
    }

    #[test]
    fn free_over_unit_connectivity() {
        let unit = builtin(Builtin::Unit, 2, false);
        let env = envelope(&unit, &ChainComplex::sphere(3));
        assert_eq!(env.underlying().connectivity(), Connectivity::Finite(2));
    }
}
