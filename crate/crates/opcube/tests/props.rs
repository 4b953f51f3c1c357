//! Property checks beyond the acceptance gate: structural invariants of
//! the calculus on randomly generated inputs, the convex-colimit laws, and
//! the truncation-stability spot check.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use opcube::attach::CellAttachment;
use opcube::chain::{tensor, ChainComplex, ChainMap, Connectivity};
use opcube::cube::{CellularCube, ConvexSet};
use opcube::operad::{builtin, Builtin};
use opcube::sample;
use opcube::verify::{check_theorem, default_suite};

fn fin(n: i64) -> Connectivity {
    Connectivity::Finite(n)
}

#[test]
fn kunneth_connectivity_bound() {
    // conn(C (x) D) >= conn C + conn D + 1 over a field.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let c = sample::random_complex(&mut rng, 0, 4, 3);
        let d = sample::random_complex(&mut rng, 0, 4, 3);
        let t = tensor(&c, &d);
        t.validate().unwrap();
        let bound = c.connectivity().plus(d.connectivity()).plus_int(1);
        assert!(t.connectivity() >= bound, "{} < {}", t.connectivity(), bound);
    }
}

#[test]
fn constructors_preserve_d_squared_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..25 {
        let a = sample::random_complex(&mut rng, -1, 4, 3);
        let b = sample::random_complex(&mut rng, -1, 4, 3);
        let f = sample::random_chain_map(&mut rng, &a, &b);
        f.cone().validate().unwrap();
        f.fib().validate().unwrap();
        tensor(&a, &b).validate().unwrap();
        a.shift(rng.gen_range(-2..=3)).validate().unwrap();
        let cube = sample::random_square(&mut rng, 0, 3, 2);
        cube.tcofib().validate().unwrap();
        cube.tfib().validate().unwrap();
    }
}

#[test]
fn acyclic_cone_detects_homology_isomorphisms() {
    // Identity maps have infinitely connected cones; and whenever a random
    // map has an acyclic cone, the two ends have equal homology.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut acyclic_seen = 0;
    for _ in 0..40 {
        let a = sample::random_complex(&mut rng, 0, 3, 3);
        assert_eq!(ChainMap::identity(&a).connectivity(), Connectivity::Infinite);
        let b = sample::random_complex(&mut rng, 0, 3, 3);
        let f = sample::random_chain_map(&mut rng, &a, &b);
        if f.connectivity() == Connectivity::Infinite {
            acyclic_seen += 1;
            assert_eq!(a.homology_all(), b.homology_all());
        }
    }
    assert!(acyclic_seen > 0, "no homology isomorphisms sampled");
}

#[test]
fn warmup_faces_inherit_cocartesian_estimates() {
    // On a cellular cube whose measured estimates are monotone, the face
    // between U and V is at least k_{V-U}-cocartesian.
    let com = builtin(Builtin::Com, 2, false);
    let z = ChainComplex::zero();
    let mut cube = CellularCube::new(
        3,
        com,
        &z,
        vec![
            CellAttachment::free(2, &ChainComplex::zero(), 0b001),
            CellAttachment::free(3, &ChainComplex::zero(), 0b010),
            CellAttachment::free(3, &ChainComplex::zero(), 0b100),
            CellAttachment::free(5, &ChainComplex::zero(), 0b011),
        ],
    )
    .unwrap();
    let mut kv: BTreeMap<u8, Connectivity> = BTreeMap::new();
    for v in 1..=7u8 {
        kv.insert(v, cube.cocartesian_degree_alg(0, v).unwrap());
    }
    // Monotone by construction (checked here so the premise is honest).
    for v in 1..=7u8 {
        for u in 1..v {
            if u & v == u {
                assert!(kv[&u] <= kv[&v], "premise fails at {u:#b} <= {v:#b}");
            }
        }
    }
    for v in 1..=7u8 {
        for u in 0..v {
            if u & v != u || u == 0 {
                continue;
            }
            let diff = v & !u;
            let got = cube.cocartesian_degree_alg(u, v).unwrap();
            assert!(
                got >= kv[&diff],
                "face ({u:#b},{v:#b}) measures {got}, needs at least {}",
                kv[&diff]
            );
        }
    }
}

#[test]
fn convex_colimit_laws() {
    let com = builtin(Builtin::Com, 2, false);
    let z = ChainComplex::zero();
    let mut cube = CellularCube::new(
        2,
        com,
        &z,
        vec![
            CellAttachment::free(2, &ChainComplex::zero(), 0b01),
            CellAttachment::free(3, &ChainComplex::zero(), 0b10),
            CellAttachment::free(5, &ChainComplex::zero(), 0b11),
        ],
    )
    .unwrap();
    // Members are reproduced on the nose.
    for v in 0..=3u8 {
        let a = ConvexSet::power(2, v);
        let from_colim = cube.convex_colim(&a).unwrap().b().clone();
        let vertex = cube.vertex(v).unwrap().b().clone();
        assert_eq!(from_colim, vertex, "member {v:#b}");
    }
    // For V outside A the punctured comparison is an isomorphism: the cell
    // sets agree, so the realizations are identical.
    let amin = ConvexSet::a_min(2);
    let whole = cube.convex_colim(&amin).unwrap().b().clone();
    let punctured = cube.convex_colim(&ConvexSet::punctured(2, 0b11)).unwrap().b().clone();
    assert_eq!(whole, punctured);
}

#[test]
fn truncation_is_invisible_inside_the_window() {
    // Enlarging the arity cap never changes homology inside the declared
    // window: com(2) vs com(3) on the same cellular square loaded from the
    // suite geometry.
    let (lo, hi) = (-1i64, 5i64);
    let build = |cap: usize| -> Vec<BTreeMap<i64, usize>> {
        let op = builtin(Builtin::Com, cap, false);
        let z = ChainComplex::sphere(2);
        let a = opcube::operad::envelope(&op, &z).underlying().clone();
        let mut cube = CellularCube::new(
            2,
            op,
            &z,
            vec![
                CellAttachment::free(3, &a, 0b01),
                CellAttachment::free(4, &a, 0b10),
            ],
        )
        .unwrap();
        (0..=3u8)
            .map(|v| {
                let b = cube.vertex(v).unwrap().b().clone();
                b.homology_all()
                    .into_iter()
                    .filter(|&(n, _)| n >= lo && n <= hi)
                    .collect()
            })
            .collect()
    };
    assert_eq!(build(2), build(3));
}

#[test]
fn attachment_tags_bound_measured_connectivity() {
    // Measured inclusion connectivities match the declared tags for the
    // two stock cell shapes, and the attachment is at least min-tag
    // connected.
    let com = builtin(Builtin::Com, 2, false);
    let env = opcube::operad::envelope(&com, &ChainComplex::sphere(2));
    let a = env.underlying().clone();
    let cells = vec![
        CellAttachment::free(3, &a, 1),
        CellAttachment::kill(2, &a, vec![opcube::qi(1)], 1).unwrap(),
    ];
    let at = opcube::attach::attach_cells(&com, &env, &cells).unwrap();
    let measured = at.measured_inclusions();
    assert_eq!(measured[0], fin(2));
    assert_eq!(measured[1], fin(2));
    let min_tag = cells.iter().map(|c| c.connectivity_tag).min().unwrap();
    assert!(at.attachment_connectivity() >= min_tag);
}

#[test]
fn suite_scenarios_have_windows_inside_the_horizon() {
    // Every bundled cellular scenario declares a window strictly below the
    // truncation horizon (cap + 1 times the least cell degree).
    for s in default_suite() {
        let r = check_theorem(&s);
        assert!(r.is_ok(), "{} rejected: {:?}", s.id, r.err());
    }
}
