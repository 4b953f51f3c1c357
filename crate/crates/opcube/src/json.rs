//! On-disk encodings: rational matrices, chain complexes, symmetric
//! sequences and operad bundles.
//!
//! Matrices are lists of rows with entries written `p/q` (`q > 0`); bare
//! integers are accepted on input. Degrees are decimal strings so the JSON
//! object keys stay well-formed. Operad bundles are validated on load:
//! a broken composition map fails with the violated identity named.

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainComplex, ChainMap};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::operad::{GammaKey, Operad};
use crate::sigma::SigmaModule;
use crate::symseq::SymSeq;
use crate::{Q, MAX_ARITY};

pub type MatrixJson = Vec<Vec<String>>;

pub fn matrix_to_json(m: &Matrix) -> MatrixJson {
    (0..m.rows())
        .map(|i| {
            (0..m.cols())
                .map(|j| {
                    let e = m.get(i, j);
                    format!("{}/{}", e.numer(), e.denom())
                })
                .collect()
        })
        .collect()
}

fn parse_entry(s: &str) -> Result<Q> {
    let bad = |_| Error::Config(format!("bad rational `{s}`"));
    match s.split_once('/') {
        Some((p, q)) => {
            let num = BigInt::from_str(p.trim()).map_err(bad)?;
            let den = BigInt::from_str(q.trim()).map_err(bad)?;
            if den <= BigInt::from(0) {
                return Err(Error::Config(format!("denominator must be positive in `{s}`")));
            }
            Ok(Q::new(num, den))
        }
        None => {
            let num = BigInt::from_str(s.trim()).map_err(bad)?;
            Ok(Q::from(num))
        }
    }
}

pub fn matrix_from_json(rows: &MatrixJson, expect_rows: usize, expect_cols: usize) -> Result<Matrix> {
    if rows.len() != expect_rows || rows.iter().any(|r| r.len() != expect_cols) {
        return Err(Error::Config(format!(
            "matrix shape {}x{} does not match expected {expect_rows}x{expect_cols}",
            rows.len(),
            rows.first().map_or(0, |r| r.len())
        )));
    }
    let mut m = Matrix::zero(expect_rows, expect_cols);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            let v = parse_entry(e)?;
            m.set(i, j, v);
        }
    }
    Ok(m)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexJson {
    pub dims: BTreeMap<String, usize>,
    #[serde(default)]
    pub d: BTreeMap<String, MatrixJson>,
}

fn parse_degree(s: &str) -> Result<i64> {
    s.parse::<i64>().map_err(|_| Error::Config(format!("bad degree `{s}`")))
}

pub fn complex_to_json(c: &ChainComplex) -> ComplexJson {
    ComplexJson {
        dims: c.dims().iter().map(|(&n, &v)| (n.to_string(), v)).collect(),
        d: c
            .stored_differentials()
            .iter()
            .map(|(&n, m)| (n.to_string(), matrix_to_json(m)))
            .collect(),
    }
}

pub fn complex_from_json(j: &ComplexJson) -> Result<ChainComplex> {
    let mut dims = BTreeMap::new();
    for (k, &v) in &j.dims {
        dims.insert(parse_degree(k)?, v);
    }
    let dim = |n: i64| dims.get(&n).copied().unwrap_or(0);
    let mut d = BTreeMap::new();
    for (k, rows) in &j.d {
        let n = parse_degree(k)?;
        d.insert(n, matrix_from_json(rows, dim(n - 1), dim(n))?);
    }
    ChainComplex::new(dims, d)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaModuleJson {
    pub arity: usize,
    pub complex: ComplexJson,
    /// One block map per adjacent transposition, degree-keyed.
    #[serde(default)]
    pub gens: Vec<BTreeMap<String, MatrixJson>>,
}

pub fn sigma_to_json(m: &SigmaModule) -> SigmaModuleJson {
    SigmaModuleJson {
        arity: m.arity,
        complex: complex_to_json(&m.complex),
        gens: m
            .gens()
            .iter()
            .map(|g| {
                g.stored_blocks()
                    .iter()
                    .map(|(&n, b)| (n.to_string(), matrix_to_json(b)))
                    .collect()
            })
            .collect(),
    }
}

pub fn sigma_from_json(j: &SigmaModuleJson) -> Result<SigmaModule> {
    let complex = complex_from_json(&j.complex)?;
    let mut gens = Vec::new();
    for blocks in &j.gens {
        let mut out = BTreeMap::new();
        for (k, rows) in blocks {
            let n = parse_degree(k)?;
            out.insert(n, matrix_from_json(rows, complex.dim(n), complex.dim(n))?);
        }
        gens.push(ChainMap::new(complex.clone(), complex.clone(), out)?);
    }
    SigmaModule::new(j.arity, complex, gens)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymSeqJson {
    pub arity: BTreeMap<String, SigmaModuleJson>,
    #[serde(default)]
    pub truncated: bool,
}

pub fn symseq_to_json(s: &SymSeq) -> SymSeqJson {
    SymSeqJson {
        arity: s.arities().iter().map(|(&r, m)| (r.to_string(), sigma_to_json(m))).collect(),
        truncated: s.is_truncated(),
    }
}

pub fn symseq_from_json(j: &SymSeqJson) -> Result<SymSeq> {
    let mut arities = BTreeMap::new();
    for (k, mj) in &j.arity {
        let r: usize =
            k.parse().map_err(|_| Error::Config(format!("bad arity key `{k}`")))?;
        if r > MAX_ARITY {
            return Err(Error::Capacity { arity: r, cap: MAX_ARITY });
        }
        arities.insert(r, sigma_from_json(mj)?);
    }
    let seq = SymSeq::new(arities)?;
    Ok(if j.truncated { seq.mark_truncated() } else { seq })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaJson {
    pub t: usize,
    pub rs: Vec<usize>,
    /// Degree-keyed blocks of the composition map.
    pub map: BTreeMap<String, MatrixJson>,
}

/// A full operad: sequence, unit coordinates, and composition maps.
/// Validated on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperadBundle {
    pub name: String,
    pub cap: usize,
    pub unit: Vec<String>,
    pub seq: SymSeqJson,
    pub gamma: Vec<GammaJson>,
}

pub fn operad_to_bundle(op: &Operad) -> OperadBundle {
    let unit = {
        let b = op.unit_map().block(0);
        (0..b.rows())
            .map(|i| format!("{}/{}", b.get(i, 0).numer(), b.get(i, 0).denom()))
            .collect()
    };
    OperadBundle {
        name: op.name().to_string(),
        cap: op.cap(),
        unit,
        seq: symseq_to_json(op.seq()),
        gamma: op
            .gammas()
            .iter()
            .map(|(key, g)| GammaJson {
                t: key.t,
                rs: key.rs.clone(),
                map: g
                    .stored_blocks()
                    .iter()
                    .map(|(&n, m)| (n.to_string(), matrix_to_json(m)))
                    .collect(),
            })
            .collect(),
    }
}

pub fn operad_from_bundle(bundle: &OperadBundle) -> Result<Operad> {
    let seq = symseq_from_json(&bundle.seq)?;
    let unit: Vec<Q> = bundle.unit.iter().map(|s| parse_entry(s)).collect::<Result<_>>()?;
    let mut gamma = BTreeMap::new();
    for gj in &bundle.gamma {
        let key = GammaKey { t: gj.t, rs: gj.rs.clone() };
        let mut factors = vec![seq.arity_complex(gj.t)];
        factors.extend(gj.rs.iter().map(|&r| seq.arity_complex(r)));
        let fr: Vec<&ChainComplex> = factors.iter().collect();
        let (src, _) = crate::chain::tensor_many(&fr);
        let tgt = seq.arity_complex(key.total());
        let mut blocks = BTreeMap::new();
        for (k, rows) in &gj.map {
            let n = parse_degree(k)?;
            blocks.insert(n, matrix_from_json(rows, tgt.dim(n), src.dim(n))?);
        }
        gamma.insert(key, ChainMap::new_unchecked(src, tgt, blocks));
    }
    Operad::new(&bundle.name, seq, gamma, unit, bundle.cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operad::{builtin, Builtin};
    use crate::qi;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn matrix_roundtrip_and_parse_forms() {
        let m = Matrix::from_rows(vec![
            vec![crate::q(1, 2), qi(-3)],
            vec![qi(0), crate::q(7, 5)],
        ])
        .unwrap();
        let j = matrix_to_json(&m);
        assert_eq!(j[0][0], "1/2");
        assert_eq!(j[0][1], "-3/1");
        let back = matrix_from_json(&j, 2, 2).unwrap();
        assert_eq!(m, back);
        // Bare integers parse too; nonpositive denominators are rejected.
        assert_eq!(parse_entry("4").unwrap(), qi(4));
        assert!(parse_entry("1/-2").is_err());
        assert!(parse_entry("x").is_err());
    }

    #[test]
    fn complex_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let c = crate::sample::random_complex(&mut rng, -1, 4, 4);
            let j = complex_to_json(&c);
            let back = complex_from_json(&j).unwrap();
            assert_eq!(c, back);
        }
    }

    #[test]
    fn complex_rejects_bad_shapes() {
        let j = ComplexJson {
            dims: BTreeMap::from([("0".into(), 1), ("1".into(), 1)]),
            d: BTreeMap::from([("1".into(), vec![vec!["1".into(), "2".into()]])]),
        };
        assert!(complex_from_json(&j).is_err());
    }

    #[test]
    fn operad_bundle_roundtrip_validates() {
        for op in [
            builtin(Builtin::Unit, 2, false),
            builtin(Builtin::Com, 2, true),
            builtin(Builtin::Assoc, 2, false),
        ] {
            let bundle = operad_to_bundle(&op);
            let back = operad_from_bundle(&bundle).unwrap();
            assert_eq!(back.name(), op.name());
            assert_eq!(back.cap(), op.cap());
        }
    }

    #[test]
    fn corrupted_bundle_fails_validation() {
        let op = builtin(Builtin::Com, 2, false);
        let mut bundle = operad_to_bundle(&op);
        for g in bundle.gamma.iter_mut() {
            if g.t == 2 && g.rs == vec![1, 1] {
                g.map.insert("0".into(), vec![vec!["-1".into()]]);
            }
        }
        let err = operad_from_bundle(&bundle).unwrap_err();
        assert!(matches!(err, Error::OperadAxiom { .. }), "got {err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn random_complex_roundtrips(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let c = crate::sample::random_complex(&mut rng, -2, 5, 5);
            let text = serde_json::to_string(&complex_to_json(&c)).unwrap();
            let parsed: ComplexJson = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(complex_from_json(&parsed).unwrap(), c);
        }
    }
}
