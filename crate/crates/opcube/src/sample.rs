//! Seeded random generation of complexes, chain maps and cubes.
//!
//! Random chain maps are drawn honestly: the commuting conditions form a
//! linear system, its kernel is computed exactly, and a random small-integer
//! combination of kernel vectors is returned. Squares and cubes are sampled
//! progressively the same way, so every generated diagram commutes on the
//! nose. Everything is driven by a caller-supplied ChaCha stream, so a seed
//! determines the output bit for bit.

use std::collections::BTreeMap;

use num_traits::Zero;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{ChainComplex, ChainMap};
use crate::cube::ChainCube;
use crate::linalg::Matrix;
use crate::Q;

/// A random complex: a sum of spheres and disks in the window, conjugated
/// by random shear automorphisms so the matrices are not block diagonal.
pub fn random_complex(rng: &mut ChaCha8Rng, lo: i64, hi: i64, max_pieces: usize) -> ChainComplex {
    let pieces = rng.gen_range(0..=max_pieces);
    let mut parts: Vec<ChainComplex> = Vec::new();
    for _ in 0..pieces {
        let deg = rng.gen_range(lo..=hi);
        if rng.gen_bool(0.5) && deg > lo {
            parts.push(ChainComplex::disk(deg));
        } else {
            parts.push(ChainComplex::sphere(deg));
        }
    }
    let refs: Vec<&ChainComplex> = parts.iter().collect();
    let (sum, _) = ChainComplex::direct_sum(&refs);
    let dims = sum.dims().clone();
    // Conjugate by shears: d' = S_{n-1} d S_n^{-1}.
    let mut shears: BTreeMap<i64, (Matrix, Matrix)> = BTreeMap::new();
    for (&n, &v) in &dims {
        let mut s = Matrix::identity(v);
        if v >= 2 && rng.gen_bool(0.7) {
            let i = rng.gen_range(0..v);
            let mut j = rng.gen_range(0..v);
            if i == j {
                j = (j + 1) % v;
            }
            s.set(i, j, crate::qi(rng.gen_range(-2..=2)));
            if s.get(i, i).is_zero() {
                s.set(i, i, crate::qi(1));
            }
        }
        let inv = s.solve_right(&Matrix::identity(v)).expect("shear invertible");
        shears.insert(n, (s, inv));
    }
    let mut d = BTreeMap::new();
    for &n in dims.keys() {
        if !dims.contains_key(&(n - 1)) {
            continue;
        }
        let m = shears[&(n - 1)].0.mul(&sum.differential(n)).mul(&shears[&n].1);
        if !m.is_zero() {
            d.insert(n, m);
        }
    }
    ChainComplex::new_unchecked(dims, d)
}

/// A random chain map: the commuting conditions are one exact linear
/// system, and a random small combination of its kernel is returned.
pub fn random_chain_map(rng: &mut ChaCha8Rng, src: &ChainComplex, tgt: &ChainComplex) -> ChainMap {
    let basis = chain_map_space(src, tgt);
    combine(rng, src, tgt, &basis)
}

/// A basis of the space of chain maps `src -> tgt`.
fn chain_map_space(src: &ChainComplex, tgt: &ChainComplex) -> Vec<ChainMap> {
    let mut var_offsets: BTreeMap<i64, usize> = BTreeMap::new();
    let mut total = 0usize;
    for &n in src.dims().keys() {
        if tgt.dim(n) > 0 {
            var_offsets.insert(n, total);
            total += tgt.dim(n) * src.dim(n);
        }
    }
    if total == 0 {
        return vec![];
    }
    let mut rows: Vec<Vec<Q>> = Vec::new();
    for &n in src.dims().keys() {
        let td = tgt.differential(n);
        let sd = src.differential(n);
        let rows_n = tgt.dim(n - 1);
        let cols_n = src.dim(n);
        if rows_n == 0 || cols_n == 0 {
            continue;
        }
        for a in 0..rows_n {
            for b in 0..cols_n {
                let mut row = vec![Q::zero(); total];
                if let Some(&off) = var_offsets.get(&n) {
                    for i in 0..tgt.dim(n) {
                        let c = td.get(a, i);
                        if !c.is_zero() {
                            row[off + i * src.dim(n) + b] = c.clone();
                        }
                    }
                }
                if let Some(&off) = var_offsets.get(&(n - 1)) {
                    for bp in 0..src.dim(n - 1) {
                        let c = sd.get(bp, b);
                        if !c.is_zero() {
                            let cur = row[off + a * src.dim(n - 1) + bp].clone();
                            row[off + a * src.dim(n - 1) + bp] = cur - c;
                        }
                    }
                }
                if row.iter().any(|x| !x.is_zero()) {
                    rows.push(row);
                }
            }
        }
    }
    let system = if rows.is_empty() {
        Matrix::zero(0, total)
    } else {
        Matrix::from_rows(rows).expect("uniform rows")
    };
    system
        .kernel_basis()
        .into_iter()
        .map(|v| {
            let mut blocks = BTreeMap::new();
            for (&n, &off) in &var_offsets {
                let mut m = Matrix::zero(tgt.dim(n), src.dim(n));
                for i in 0..tgt.dim(n) {
                    for j in 0..src.dim(n) {
                        let x = &v[off + i * src.dim(n) + j];
                        if !x.is_zero() {
                            m.set(i, j, x.clone());
                        }
                    }
                }
                blocks.insert(n, m);
            }
            ChainMap::new_unchecked(src.clone(), tgt.clone(), blocks)
        })
        .collect()
}

fn combine(
    rng: &mut ChaCha8Rng,
    src: &ChainComplex,
    tgt: &ChainComplex,
    basis: &[ChainMap],
) -> ChainMap {
    let mut out = ChainMap::zero(src, tgt);
    for b in basis {
        let c = rng.gen_range(-2i64..=2);
        if c != 0 {
            out = out.add(&b.scale(&crate::qi(c)));
        }
    }
    out
}

/// Two composable random maps.
pub fn random_composable(
    rng: &mut ChaCha8Rng,
    lo: i64,
    hi: i64,
    max_pieces: usize,
) -> (ChainMap, ChainMap) {
    let a = random_complex(rng, lo, hi, max_pieces);
    let b = random_complex(rng, lo, hi, max_pieces);
    let c = random_complex(rng, lo, hi, max_pieces);
    (random_chain_map(rng, &a, &b), random_chain_map(rng, &b, &c))
}

/// One commuting constraint for a family solve: the composite of unknown
/// `left` after `pre_left` equals `post_right` after unknown `right` after
/// `pre_right`.
struct FamilyConstraint {
    left: usize,
    pre_left: ChainMap,
    right: usize,
    pre_right: ChainMap,
    post_right: ChainMap,
}

/// Sample a family of chain maps subject to homogeneous commuting
/// constraints: the joint kernel always contains zero, so this never fails,
/// and a random kernel element is returned.
fn solve_family(
    rng: &mut ChaCha8Rng,
    endpoints: &[(ChainComplex, ChainComplex)],
    constraints: &[FamilyConstraint],
) -> Vec<ChainMap> {
    let bases: Vec<Vec<ChainMap>> =
        endpoints.iter().map(|(s, t)| chain_map_space(s, t)).collect();
    let offsets: Vec<usize> = {
        let mut v = vec![0];
        for b in &bases {
            v.push(v.last().unwrap() + b.len());
        }
        v
    };
    let total = *offsets.last().unwrap();
    if total == 0 {
        return endpoints.iter().map(|(s, t)| ChainMap::zero(s, t)).collect();
    }
    let mut rows: Vec<Vec<Q>> = Vec::new();
    for c in constraints {
        let lhs: Vec<ChainMap> =
            bases[c.left].iter().map(|h| c.pre_left.then(h)).collect();
        let rhs: Vec<ChainMap> = bases[c.right]
            .iter()
            .map(|h| c.pre_right.then(h).then(&c.post_right))
            .collect();
        let common_src = &c.pre_left.source;
        let common_tgt = &c.post_right.target;
        for &n in common_src.dims().keys() {
            if common_tgt.dim(n) == 0 {
                continue;
            }
            let lbs: Vec<Matrix> = lhs.iter().map(|p| p.block(n)).collect();
            let rbs: Vec<Matrix> = rhs.iter().map(|p| p.block(n)).collect();
            for i in 0..common_tgt.dim(n) {
                for j in 0..common_src.dim(n) {
                    let mut row = vec![Q::zero(); total];
                    for (k, b) in lbs.iter().enumerate() {
                        let v = b.get(i, j);
                        if !v.is_zero() {
                            row[offsets[c.left] + k] = v.clone();
                        }
                    }
                    for (k, b) in rbs.iter().enumerate() {
                        let v = b.get(i, j);
                        if !v.is_zero() {
                            let cur = row[offsets[c.right] + k].clone();
                            row[offsets[c.right] + k] = cur - v;
                        }
                    }
                    if row.iter().any(|x| !x.is_zero()) {
                        rows.push(row);
                    }
                }
            }
        }
    }
    let system = if rows.is_empty() {
        Matrix::zero(0, total)
    } else {
        Matrix::from_rows(rows).expect("uniform rows")
    };
    let kernel = system.kernel_basis();
    let mut coeffs = vec![Q::zero(); total];
    for v in &kernel {
        let c = rng.gen_range(-2i64..=2);
        if c != 0 {
            for (k, x) in v.iter().enumerate() {
                if !x.is_zero() {
                    let add = x * &crate::qi(c);
                    let cur = coeffs[k].clone();
                    coeffs[k] = cur + add;
                }
            }
        }
    }
    endpoints
        .iter()
        .enumerate()
        .map(|(idx, (s, t))| {
            let mut out = ChainMap::zero(s, t);
            for (k, b) in bases[idx].iter().enumerate() {
                let c = &coeffs[offsets[idx] + k];
                if !c.is_zero() {
                    out = out.add(&b.scale(c));
                }
            }
            out
        })
        .collect()
}

/// A random commuting square: the maps out of the initial vertex are free,
/// the maps into the terminal vertex are a joint random solution of the
/// commuting system.
pub fn random_square(rng: &mut ChaCha8Rng, lo: i64, hi: i64, max_pieces: usize) -> ChainCube {
    let x0 = random_complex(rng, lo, hi, max_pieces);
    let x1 = random_complex(rng, lo, hi, max_pieces);
    let x2 = random_complex(rng, lo, hi, max_pieces);
    let x12 = random_complex(rng, lo, hi, max_pieces);
    let f = random_chain_map(rng, &x0, &x1);
    let g = random_chain_map(rng, &x0, &x2);
    let hs = solve_family(
        rng,
        &[(x1.clone(), x12.clone()), (x2.clone(), x12.clone())],
        &[FamilyConstraint {
            left: 0,
            pre_left: f.clone(),
            right: 1,
            pre_right: g.clone(),
            post_right: ChainMap::identity(&x12),
        }],
    );
    let mut vertices = BTreeMap::new();
    vertices.insert(0b00, x0);
    vertices.insert(0b01, x1);
    vertices.insert(0b10, x2);
    vertices.insert(0b11, x12);
    let mut covers = BTreeMap::new();
    covers.insert((0b00, 0b01), f);
    covers.insert((0b00, 0b10), g);
    covers.insert((0b01, 0b11), hs[0].clone());
    covers.insert((0b10, 0b11), hs[1].clone());
    ChainCube::new_unchecked(2, vertices, covers)
}

/// A random cube for `w <= 3`; all squares commute by construction.
pub fn random_cube(rng: &mut ChaCha8Rng, w: usize, lo: i64, hi: i64, max_pieces: usize) -> ChainCube {
    match w {
        0 => {
            let c = random_complex(rng, lo, hi, max_pieces);
            ChainCube::new_unchecked(0, BTreeMap::from([(0, c)]), BTreeMap::new())
        }
        1 => {
            let a = random_complex(rng, lo, hi, max_pieces);
            let b = random_complex(rng, lo, hi, max_pieces);
            let f = random_chain_map(rng, &a, &b);
            ChainCube::new_unchecked(
                1,
                BTreeMap::from([(0, a), (1, b)]),
                BTreeMap::from([((0, 1), f)]),
            )
        }
        2 => random_square(rng, lo, hi, max_pieces),
        3 => {
            let bottom = random_square(rng, lo, hi, max_pieces);
            let top = random_square(rng, lo, hi, max_pieces);
            // All four connecting maps are sampled jointly so the side
            // squares commute by construction.
            let endpoints: Vec<(ChainComplex, ChainComplex)> = (0..4u8)
                .map(|m| (bottom.vertex(m).clone(), top.vertex(m).clone()))
                .collect();
            let constraints = vec![
                FamilyConstraint {
                    left: 1,
                    pre_left: bottom.map(0, 1),
                    right: 0,
                    pre_right: ChainMap::identity(bottom.vertex(0)),
                    post_right: top.map(0, 1),
                },
                FamilyConstraint {
                    left: 2,
                    pre_left: bottom.map(0, 2),
                    right: 0,
                    pre_right: ChainMap::identity(bottom.vertex(0)),
                    post_right: top.map(0, 2),
                },
                FamilyConstraint {
                    left: 3,
                    pre_left: bottom.map(1, 3),
                    right: 1,
                    pre_right: ChainMap::identity(bottom.vertex(1)),
                    post_right: top.map(1, 3),
                },
                FamilyConstraint {
                    left: 3,
                    pre_left: bottom.map(2, 3),
                    right: 2,
                    pre_right: ChainMap::identity(bottom.vertex(2)),
                    post_right: top.map(2, 3),
                },
            ];
            let cs = solve_family(rng, &endpoints, &constraints);
            let mut vertices = BTreeMap::new();
            let mut covers = BTreeMap::new();
            for m in 0..4u8 {
                vertices.insert(m, bottom.vertex(m).clone());
                vertices.insert(m | 0b100, top.vertex(m).clone());
                for i in 0..2 {
                    if m & (1 << i) == 0 {
                        covers.insert((m, m | (1 << i)), bottom.map(m, m | (1 << i)));
                        covers
                            .insert((m | 0b100, m | (1 << i) | 0b100), top.map(m, m | (1 << i)));
                    }
                }
                covers.insert((m, m | 0b100), cs[m as usize].clone());
            }
            ChainCube::new_unchecked(3, vertices, covers)
        }
        _ => panic!("random cubes support w <= 3"),
    }
}

/// A random map of `w`-cubes out of a given cube, packaged as a
/// `(w+1)`-cube whose bottom half (top bit clear) is `src`. Supports
/// `w <= 2`.
pub fn random_cube_map(rng: &mut ChaCha8Rng, src: &ChainCube, lo: i64, hi: i64, max_pieces: usize) -> ChainCube {
    let w = src.w;
    assert!(w <= 2, "cube maps support w <= 2");
    let tgt = random_cube(rng, w, lo, hi, max_pieces);
    let full: u8 = ((1u16 << w) - 1) as u8;
    // Solve all connecting maps jointly against the fixed faces.
    let endpoints: Vec<(ChainComplex, ChainComplex)> =
        (0..=full).map(|m| (src.vertex(m).clone(), tgt.vertex(m).clone())).collect();
    let mut constraints = Vec::new();
    for m in 0..=full {
        for i in 0..w {
            if m & (1 << i) != 0 {
                continue;
            }
            let up = m | (1 << i);
            constraints.push(FamilyConstraint {
                left: up as usize,
                pre_left: src.map(m, up),
                right: m as usize,
                pre_right: ChainMap::identity(src.vertex(m)),
                post_right: tgt.map(m, up),
            });
        }
    }
    let cs = solve_family(rng, &endpoints, &constraints);
    let mut vertices = BTreeMap::new();
    let mut covers = BTreeMap::new();
    let top_bit = 1u8 << w;
    for m in 0..=full {
        vertices.insert(m, src.vertex(m).clone());
        vertices.insert(m | top_bit, tgt.vertex(m).clone());
        for i in 0..w {
            if m & (1 << i) == 0 {
                covers.insert((m, m | (1 << i)), src.map(m, m | (1 << i)));
                covers.insert((m | top_bit, m | (1 << i) | top_bit), tgt.map(m, m | (1 << i)));
            }
        }
        covers.insert((m, m | top_bit), cs[m as usize].clone());
    }
    ChainCube::new_unchecked(w + 1, vertices, covers)
}

/// A random degreewise-injective map out of `base`: inclusion into
/// `base (+) extra`, conjugated by a random chain automorphism.
pub fn random_cofibration(
    rng: &mut ChaCha8Rng,
    base: &ChainComplex,
    lo: i64,
    hi: i64,
    max_pieces: usize,
) -> ChainMap {
    let extra = random_complex(rng, lo, hi, max_pieces);
    let (sum, incls) = ChainComplex::direct_sum(&[base, &extra]);
    let incl = incls[0].clone();
    let aut = random_automorphism(rng, &sum);
    incl.then(&aut)
}

/// A random degreewise-surjective map onto `top`: a projection off a direct
/// sum, precomposed with a random chain automorphism of the source.
pub fn random_fibration(
    rng: &mut ChaCha8Rng,
    top: &ChainComplex,
    lo: i64,
    hi: i64,
    max_pieces: usize,
) -> ChainMap {
    let extra = random_complex(rng, lo, hi, max_pieces);
    let (sum, _) = ChainComplex::direct_sum(&[top, &extra]);
    let mut blocks = BTreeMap::new();
    for &n in sum.dims().keys() {
        if top.dim(n) == 0 {
            continue;
        }
        let mut m = Matrix::zero(top.dim(n), sum.dim(n));
        for j in 0..top.dim(n) {
            m.set(j, j, crate::qi(1));
        }
        blocks.insert(n, m);
    }
    let proj = ChainMap::new_unchecked(sum.clone(), top.clone(), blocks);
    random_automorphism(rng, &sum).then(&proj)
}

/// `id + random chain self-map`, falling back to the identity when the
/// perturbation fails to be invertible.
fn random_automorphism(rng: &mut ChaCha8Rng, c: &ChainComplex) -> ChainMap {
    let n = random_chain_map(rng, c, c);
    let candidate = ChainMap::identity(c).add(&n);
    for &deg in c.dims().keys() {
        if candidate.block(deg).solve_right(&Matrix::identity(c.dim(deg))).is_none() {
            return ChainMap::identity(c);
        }
    }
    candidate
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn random_complexes_are_complexes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            random_complex(&mut rng, -1, 4, 4).validate().unwrap();
        }
    }

    #[test]
    fn random_maps_commute() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_complex(&mut rng, 0, 3, 3);
            let b = random_complex(&mut rng, 0, 3, 3);
            random_chain_map(&mut rng, &a, &b).validate().unwrap();
        }
    }

    #[test]
    fn random_squares_and_cubes_commute() {
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sq = random_square(&mut rng, 0, 3, 2);
            ChainCube::new(
                2,
                (0..4u8).map(|m| (m, sq.vertex(m).clone())).collect(),
                [(0b00, 0b01), (0b00, 0b10), (0b01, 0b11), (0b10, 0b11)]
                    .into_iter()
                    .map(|(u, v)| ((u, v), sq.map(u, v)))
                    .collect(),
            )
            .unwrap();
        }
        for seed in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let cube = random_cube(&mut rng, 3, 0, 3, 2);
            let mut covers = BTreeMap::new();
            for m in 0..8u8 {
                for i in 0..3 {
                    if m & (1 << i) == 0 {
                        covers.insert((m, m | (1 << i)), cube.map(m, m | (1 << i)));
                    }
                }
            }
            ChainCube::new(3, (0..8u8).map(|m| (m, cube.vertex(m).clone())).collect(), covers)
                .unwrap();
        }
    }

    #[test]
    fn cofibrations_and_fibrations() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let base = random_complex(&mut rng, 0, 3, 3);
            let i = random_cofibration(&mut rng, &base, 0, 3, 2);
            i.validate().unwrap();
            assert!(i.is_mono());
            let p = random_fibration(&mut rng, &base, 0, 3, 2);
            p.validate().unwrap();
            for &n in base.dims().keys() {
                assert_eq!(p.block(n).rank(), base.dim(n), "degree {n} not surjective");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        let a = random_complex(&mut r1, 0, 4, 4);
        let b = random_complex(&mut r2, 0, 4, 4);
        assert_eq!(a, b);
    }
}
