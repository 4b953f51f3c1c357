//! Cell attachment: pushouts of algebras along free maps, computed through
//! the stage filtration, together with the induced envelopes.
//!
//! All cells attach simultaneously along maps into a free base `A = O(Z)`,
//! so the resulting algebra `B` is a single filtered pushout
//! `A = A_0 -> A_1 -> ... -> A_T = B`, where stage `t` glues
//! `O_A[t] (x)_{Sigma_t} Y^{(x)t}` along `O_A[t] (x)_{Sigma_t} Q_{t-1}^t`.
//! Each cell inclusion is re-coordinated so that its source sits on leading
//! coordinates; `Q_{t-1}^t` is then literally the span of basis tensors with
//! at least one factor inside `X`, a subcomplex on coordinate lines, and the
//! glue map substitutes the attaching image of every `X`-factor into the
//! envelope slots, with spectator factors riding into the lower stage.
//!
//! The same stages run at every residual arity `r`, which is how `O_B[r]`
//! and its `Sigma_r` action are produced.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::chain::{
    apply_at_run, cokernel_quotient, koszul_sign, permute_factors, tensor_many, ChainComplex,
    ChainMap, Connectivity, QuotientComplex, TensorBlock, TensorLayout,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::operad::{substitution_map, Envelope, Operad};
use crate::sigma::{Coinvariants, Permutation, SigmaModule};
use crate::Q;

/// A cell: a degreewise-split inclusion `i: X -> Y` with an attaching map
/// into the underlying complex of the free base, a stage (the cube vertex
/// subset that first carries the cell) and a declared connectivity for `i`.
#[derive(Clone, Debug)]
pub struct CellAttachment {
    pub source: ChainComplex,
    pub target: ChainComplex,
    pub inclusion: ChainMap,
    pub attaching: ChainMap,
    pub stage: u8,
    pub connectivity_tag: Connectivity,
}

impl CellAttachment {
    /// A free cell: `0 -> sphere(degree)`, trivial attaching map.
    pub fn free(degree: i64, base_underlying: &ChainComplex, stage: u8) -> CellAttachment {
        let zero = ChainComplex::zero();
        let y = ChainComplex::sphere(degree);
        CellAttachment {
            inclusion: ChainMap::zero(&zero, &y),
            attaching: ChainMap::zero(&zero, base_underlying),
            source: zero,
            target: y,
            stage,
            connectivity_tag: Connectivity::Finite(degree - 1),
        }
    }

    /// A killing cell: `sphere(d) -> disk(d+1)` attached along a cycle of
    /// the base in degree `d`, given by its coordinates.
    pub fn kill(
        degree: i64,
        base_underlying: &ChainComplex,
        cycle: Vec<Q>,
        stage: u8,
    ) -> Result<CellAttachment> {
        let x = ChainComplex::sphere(degree);
        let y = ChainComplex::disk(degree + 1);
        if cycle.len() != base_underlying.dim(degree) {
            return Err(Error::Dimension {
                expected: base_underlying.dim(degree),
                got: cycle.len(),
                context: "attaching cycle",
            });
        }
        let mut col = Matrix::zero(base_underlying.dim(degree), 1);
        for (i, v) in cycle.iter().enumerate() {
            col.set(i, 0, v.clone());
        }
        let attaching =
            ChainMap::new(x.clone(), base_underlying.clone(), BTreeMap::from([(degree, col)]))?;
        let inclusion = ChainMap::new_unchecked(
            x.clone(),
            y.clone(),
            BTreeMap::from([(degree, Matrix::identity(1))]),
        );
        Ok(CellAttachment {
            source: x,
            target: y,
            inclusion,
            attaching,
            stage,
            connectivity_tag: Connectivity::Finite(degree),
        })
    }
}

/// A cell after re-coordination: `Y` carries the `X` image on its leading
/// coordinates.
#[derive(Clone, Debug)]
struct ReCell {
    x_dims: BTreeMap<i64, usize>,
    y: ChainComplex,
    measured_inclusion: Connectivity,
}

/// One stage of the filtration at a fixed residual arity.
pub struct Stage {
    pub t: usize,
    /// Coinvariants of `O_A[t+r] (x) Y^{(x)t}`; zero when nothing glues.
    pub envy: Coinvariants,
    envy_layout: TensorLayout,
    /// The quotient presenting `A_t` out of `A_{t-1} (+) EnvY_t`.
    pub quotient: QuotientComplex,
    pub complex: ChainComplex,
    pub j: ChainMap,
    pub xi: ChainMap,
}

/// The filtered pushout at one residual arity, running from `O_A[r]` to
/// `O_B[r]`, with the transported `Sigma_r` generators.
pub struct RTower {
    pub r: usize,
    pub start: ChainComplex,
    pub stages: Vec<Stage>,
    pub gens: Vec<ChainMap>,
}

impl RTower {
    pub fn result(&self) -> &ChainComplex {
        self.stages.last().map_or(&self.start, |s| &s.complex)
    }
}

/// The composite `A_from -> A_to` of stage maps (`0` indexes the start).
fn lift_composite(stages: &[Stage], start: &ChainComplex, from: usize, to: usize) -> ChainMap {
    if from == to {
        let c = if from == 0 { start } else { &stages[from - 1].complex };
        return ChainMap::identity(c);
    }
    let mut m = stages[from].j.clone();
    for stage in &stages[from + 1..to] {
        m = m.then(&stage.j);
    }
    m
}

/// The result of attaching cells to a free base.
pub struct Attachment {
    pub env: Envelope,
    pub cells: Vec<CellAttachment>,
    recells: Vec<ReCell>,
    /// Direct sum of the re-coordinated cell targets.
    pub y: ChainComplex,
    pub towers: Vec<RTower>,
    pub include_base: ChainMap,
}

impl Attachment {
    /// The underlying complex of the attached algebra.
    pub fn b(&self) -> &ChainComplex {
        self.towers[0].result()
    }

    pub fn tower(&self, r: usize) -> &RTower {
        &self.towers[r]
    }

    /// Connectivity of the base inclusion `A -> B`.
    pub fn attachment_connectivity(&self) -> Connectivity {
        self.include_base.connectivity()
    }

    pub fn measured_inclusions(&self) -> Vec<Connectivity> {
        self.recells.iter().map(|c| c.measured_inclusion).collect()
    }
}

/// Re-coordinate one cell so its source sits on leading coordinates; the
/// change of basis is transported into the differential.
fn recoordinate(cell: &CellAttachment) -> Result<ReCell> {
    let x = &cell.source;
    let y = &cell.target;
    let mut u_blocks: BTreeMap<i64, Matrix> = BTreeMap::new();
    let mut u_inv: BTreeMap<i64, Matrix> = BTreeMap::new();
    for &n in y.dims().keys() {
        let i_n = cell.inclusion.block(n);
        if i_n.rank() != x.dim(n) {
            return Err(Error::NotMono { degree: n });
        }
        let (_, pivots) = i_n.transpose().rref();
        let mut is_pivot = vec![false; y.dim(n)];
        for &p in &pivots {
            is_pivot[p] = true;
        }
        let free: Vec<usize> = (0..y.dim(n)).filter(|&j| !is_pivot[j]).collect();
        let mut u = Matrix::zero(y.dim(n), y.dim(n));
        u.paste(0, 0, &i_n);
        for (k, &f) in free.iter().enumerate() {
            u.set(f, x.dim(n) + k, crate::qi(1));
        }
        let inv = u.solve_right(&Matrix::identity(y.dim(n))).ok_or(Error::NotMono { degree: n })?;
        u_blocks.insert(n, u);
        u_inv.insert(n, inv);
    }
    let mut d = BTreeMap::new();
    for &n in y.dims().keys() {
        if y.dim(n - 1) == 0 {
            continue;
        }
        let m = u_inv[&(n - 1)].mul(&y.differential(n)).mul(&u_blocks[&n]);
        if !m.is_zero() {
            d.insert(n, m);
        }
    }
    let y2 = ChainComplex::new_unchecked(y.dims().clone(), d);
    let incl_blocks: BTreeMap<i64, Matrix> = x
        .dims()
        .keys()
        .map(|&n| {
            let mut m = Matrix::zero(y2.dim(n), x.dim(n));
            m.paste(0, 0, &Matrix::identity(x.dim(n)));
            (n, m)
        })
        .collect();
    let incl = ChainMap::new_unchecked(x.clone(), y2.clone(), incl_blocks);
    let measured = incl.connectivity();
    Ok(ReCell { x_dims: x.dims().clone(), y: y2, measured_inclusion: measured })
}

/// Attach cells to the free base presented by `env`, computing the towers
/// for residual arities `0..count`. Vertex realizations only need
/// `count = 1`; the full enveloping data uses `count = cap + 1`.
pub fn attach_cells_r(
    op: &Operad,
    env: &Envelope,
    cells: &[CellAttachment],
    count: usize,
) -> Result<Attachment> {
    let a = env.underlying().clone();
    for cell in cells {
        if cell.attaching.target != a {
            return Err(Error::UnsupportedPresentation(
                "attaching map does not land in the free base".into(),
            ));
        }
        cell.attaching.validate()?;
    }
    let recells: Vec<ReCell> = cells.iter().map(recoordinate).collect::<Result<_>>()?;
    let ys: Vec<&ChainComplex> = recells.iter().map(|c| &c.y).collect();
    let (y, _) = ChainComplex::direct_sum(&ys);
    // Mark the X coordinates of the combined Y and record the attaching
    // column of each, in the coordinates of the base.
    let mut is_x: BTreeMap<i64, Vec<bool>> = BTreeMap::new();
    let mut x_attach_cols: BTreeMap<i64, Vec<Vec<(usize, Q)>>> = BTreeMap::new();
    for &n in y.dims().keys() {
        let mut marks = vec![false; y.dim(n)];
        let mut cols: Vec<Vec<(usize, Q)>> = vec![vec![]; y.dim(n)];
        let mut off = 0;
        for (c, cell) in recells.iter().zip(cells) {
            let xd = c.x_dims.get(&n).copied().unwrap_or(0);
            let fb = cell.attaching.block(n);
            for k in 0..xd {
                marks[off + k] = true;
                cols[off + k] = column_terms(&fb, k);
            }
            off += c.y.dim(n);
        }
        is_x.insert(n, marks);
        x_attach_cols.insert(n, cols);
    }
    let mut towers = Vec::new();
    let mut subst_cache: BTreeMap<(usize, usize), ChainMap> = BTreeMap::new();
    for r in 0..count.max(1) {
        towers.push(build_tower(op, env, &y, &is_x, &x_attach_cols, r, &mut subst_cache));
    }
    let include_base = {
        let t = &towers[0];
        lift_composite(&t.stages, &t.start, 0, t.stages.len())
    };
    Ok(Attachment { env: env.clone(), cells: cells.to_vec(), recells, y, towers, include_base })
}

/// Attach cells, computing only the underlying pushout (`r = 0`).
pub fn attach_cells(op: &Operad, env: &Envelope, cells: &[CellAttachment]) -> Result<Attachment> {
    attach_cells_r(op, env, cells, 1)
}

fn build_tower(
    op: &Operad,
    env: &Envelope,
    y: &ChainComplex,
    is_x: &BTreeMap<i64, Vec<bool>>,
    x_attach_cols: &BTreeMap<i64, Vec<Vec<(usize, Q)>>>,
    r: usize,
    subst_cache: &mut BTreeMap<(usize, usize), ChainMap>,
) -> RTower {
    let start = env.q(r).complex.clone();
    let mut gens: Vec<ChainMap> = env.q(r).gens.clone();
    let mut stages: Vec<Stage> = Vec::new();
    let cap = op.cap();
    for t in 1..=cap.saturating_sub(r) {
        let head = env.q(t + r);
        let prev = stages.last().map_or(&start, |s| &s.complex).clone();
        if head.complex.is_zero() || y.is_zero() {
            // Nothing glues; A_t = A_{t-1} on the nose.
            let envy = SigmaModule::zero(0).coinvariants();
            let quotient = trivial_quotient(&prev);
            let j = ChainMap::identity(&prev);
            let xi = ChainMap::zero(&envy.complex, &prev);
            stages.push(Stage {
                t,
                envy,
                envy_layout: tensor_many(&[&ChainComplex::zero()]).1,
                complex: prev.clone(),
                quotient,
                j,
                xi,
            });
            continue;
        }
        // EnvY_t: coinvariants of O_A[t+r] (x) Y^t under the diagonal
        // Sigma_t on the first t open slots.
        let mut factors: Vec<&ChainComplex> = vec![&head.complex];
        factors.extend(std::iter::repeat_n(y, t));
        let (big, big_layout) = tensor_many(&factors);
        let diag_gens: Vec<ChainMap> = (0..t.saturating_sub(1))
            .map(|i| {
                let on_head = apply_at_run(&factors, 0, 1, &head.gens[i]);
                let mut perm: Vec<usize> = (0..factors.len()).collect();
                perm.swap(i + 1, i + 2);
                on_head.then(&permute_factors(&factors, &perm))
            })
            .collect();
        let envy = SigmaModule::new_unchecked(t, big.clone(), diag_gens.clone()).coinvariants();
        // Q_{t-1}: basis tensors with at least one X factor.
        let (q_sel, q_big, q_incl) = select_q(&big, &big_layout, is_x);
        let q_gens: Vec<ChainMap> =
            diag_gens.iter().map(|g| restrict_map(g, &q_sel, &q_big)).collect();
        let q_coinv = SigmaModule::new_unchecked(t, q_big.clone(), q_gens).coinvariants();
        let fstar = build_fstar(
            op, env, is_x, x_attach_cols, r, t, &q_coinv, &q_sel, &big_layout, &stages, &start,
            subst_cache,
        );
        let incl_envy = q_coinv.incl.then(&q_incl).then(&envy.proj);
        let (sum, incls) = ChainComplex::direct_sum(&[&prev, &envy.complex]);
        let glue = {
            let upper = fstar.then(&incls[0]);
            let lower = incl_envy.then(&incls[1]).scale(&crate::qi(-1));
            upper.add(&lower)
        };
        let quotient = cokernel_quotient(&glue);
        let j = incls[0].then(&quotient.proj);
        let xi = incls[1].then(&quotient.proj);
        // Transport the residual Sigma_r generators through the quotient.
        gens = gens
            .iter()
            .enumerate()
            .map(|(gi, gprev)| {
                let on_envy = {
                    let act = apply_at_run(&factors, 0, 1, &head.gens[t + gi]);
                    SigmaModule::transport(&envy, &envy, &act)
                };
                let big_map = ChainMap::direct_sum(&[gprev, &on_envy]);
                debug_assert_eq!(big_map.source, sum);
                QuotientComplex::induce(&trivial_quotient(&sum), &quotient, &big_map)
            })
            .collect();
        stages.push(Stage {
            t,
            envy,
            envy_layout: big_layout,
            complex: quotient.complex.clone(),
            quotient,
            j,
            xi,
        });
    }
    RTower { r, start, stages, gens }
}

fn trivial_quotient(c: &ChainComplex) -> QuotientComplex {
    cokernel_quotient(&ChainMap::zero(&ChainComplex::zero(), c))
}

/// Restrict an endomorphism to a coordinate-selected subcomplex.
fn restrict_map(g: &ChainMap, sel: &BTreeMap<i64, Vec<usize>>, sub: &ChainComplex) -> ChainMap {
    let mut blocks = BTreeMap::new();
    for (&n, idx) in sel {
        if idx.is_empty() {
            continue;
        }
        let gb = g.block(n);
        let mut m = Matrix::zero(idx.len(), idx.len());
        for (jj, &cj) in idx.iter().enumerate() {
            for (ii, &ri) in idx.iter().enumerate() {
                let v = gb.get(ri, cj);
                if !v.is_zero() {
                    m.set(ii, jj, v.clone());
                }
            }
        }
        blocks.insert(n, m);
    }
    ChainMap::new_unchecked(sub.clone(), sub.clone(), blocks)
}

/// Select the `Q_{t-1}` coordinates of `head (x) Y^t`: all basis tensors
/// with at least one factor inside `X`. Returns the per-degree index lists,
/// the subcomplex, and its inclusion.
fn select_q(
    big: &ChainComplex,
    layout: &TensorLayout,
    is_x: &BTreeMap<i64, Vec<bool>>,
) -> (BTreeMap<i64, Vec<usize>>, ChainComplex, ChainMap) {
    let mut sel: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (&n, bs) in &layout.blocks {
        let mut idx = Vec::new();
        for b in bs {
            for k in 0..b.size {
                let multi = b.unflat(k);
                let inside = multi
                    .iter()
                    .enumerate()
                    .skip(1)
                    .any(|(f, &i)| is_x.get(&b.degrees[f]).is_some_and(|v| v[i]));
                if inside {
                    idx.push(b.offset + k);
                }
            }
        }
        sel.insert(n, idx);
    }
    let dims: BTreeMap<i64, usize> =
        sel.iter().map(|(&n, v)| (n, v.len())).filter(|&(_, v)| v > 0).collect();
    let mut incl_blocks = BTreeMap::new();
    for (&n, idx) in &sel {
        if idx.is_empty() {
            continue;
        }
        let mut incl = Matrix::zero(big.dim(n), idx.len());
        for (jj, &i) in idx.iter().enumerate() {
            incl.set(i, jj, crate::qi(1));
        }
        incl_blocks.insert(n, incl);
    }
    let mut d = BTreeMap::new();
    for (&n, idx) in &sel {
        if idx.is_empty() || sel.get(&(n - 1)).is_none_or(|v| v.is_empty()) {
            continue;
        }
        let db = big.differential(n);
        let prev = &sel[&(n - 1)];
        let mut m = Matrix::zero(prev.len(), idx.len());
        for (jj, &cj) in idx.iter().enumerate() {
            for (ii, &ri) in prev.iter().enumerate() {
                let v = db.get(ri, cj);
                if !v.is_zero() {
                    m.set(ii, jj, v.clone());
                }
            }
        }
        if !m.is_zero() {
            d.insert(n, m);
        }
    }
    let sub = ChainComplex::new_unchecked(dims, d);
    let incl = ChainMap::new_unchecked(sub.clone(), big.clone(), incl_blocks);
    (sel, sub, incl)
}

/// The glue map `f_*` of one stage: rewrite each basis tensor so its `X`
/// factors lead (acting on the envelope head by the shuffle and on the
/// letters with the Koszul sign), substitute the attaching images, and land
/// in the previous stage with the spectator factors riding along.
#[allow(clippy::too_many_arguments)]
fn build_fstar(
    op: &Operad,
    env: &Envelope,
    is_x: &BTreeMap<i64, Vec<bool>>,
    x_attach_cols: &BTreeMap<i64, Vec<Vec<(usize, Q)>>>,
    r: usize,
    t: usize,
    q_coinv: &Coinvariants,
    q_sel: &BTreeMap<i64, Vec<usize>>,
    big_layout: &TensorLayout,
    stages: &[Stage],
    start: &ChainComplex,
    subst_cache: &mut BTreeMap<(usize, usize), ChainMap>,
) -> ChainMap {
    let head = env.q(t + r);
    let head_module = head.residual_module();
    let prev = stages.last().map_or(start, |s| &s.complex).clone();
    let mut action_cache: BTreeMap<Vec<usize>, ChainMap> = BTreeMap::new();
    let mut lift_cache: BTreeMap<usize, ChainMap> = BTreeMap::new();
    let mut blocks: BTreeMap<i64, Matrix> = BTreeMap::new();
    for &n in q_coinv.complex.dims().keys() {
        let mut m = Matrix::zero(prev.dim(n), q_coinv.complex.dim(n));
        let incl = q_coinv.incl.block(n);
        let sel = &q_sel[&n];
        for col in 0..q_coinv.complex.dim(n) {
            for (qrow, qcoef) in column_terms(&incl, col) {
                let big_row = sel[qrow];
                let (blk, multi) = locate(big_layout, n, big_row);
                let mut s_positions: Vec<usize> = Vec::new();
                let mut c_positions: Vec<usize> = Vec::new();
                for f in 1..=t {
                    if is_x[&blk.degrees[f]][multi[f]] {
                        s_positions.push(f - 1);
                    } else {
                        c_positions.push(f - 1);
                    }
                }
                let s = s_positions.len();
                debug_assert!(s >= 1);
                // The shuffle moving X factors to the front, extended by the
                // identity on the residual slots.
                let mut slot: Vec<usize> = vec![0; t];
                for (rank, &f) in s_positions.iter().enumerate() {
                    slot[f] = rank;
                }
                for (rank, &f) in c_positions.iter().enumerate() {
                    slot[f] = s + rank;
                }
                let y_degs: Vec<i64> = (1..=t).map(|f| blk.degrees[f]).collect();
                let sign = koszul_sign(&slot, &y_degs);
                let act = action_cache
                    .entry(slot.clone())
                    .or_insert_with(|| {
                        let mut images = slot.clone();
                        images.extend(t..t + r);
                        let sigma = Permutation::new(images).expect("shuffle");
                        head_module.action(&sigma)
                    })
                    .block(blk.degrees[0]);
                let subst = subst_cache
                    .entry((t + r, s))
                    .or_insert_with(|| substitution_map(op, env, t + r, s))
                    .clone();
                let sub_layout = {
                    let a = env.underlying();
                    let mut fs: Vec<&ChainComplex> = vec![&head.complex];
                    fs.extend(std::iter::repeat_n(a, s));
                    tensor_many(&fs).1
                };
                for (hrow, hcoef) in column_terms(&act, multi[0]) {
                    let mut combos: Vec<(Vec<usize>, Q)> = vec![(vec![], &hcoef * &qcoef)];
                    for &f in &s_positions {
                        let deg = blk.degrees[1 + f];
                        let terms = &x_attach_cols[&deg][multi[1 + f]];
                        let mut next = Vec::new();
                        for (chosen, c) in &combos {
                            for (arow, acoef) in terms {
                                let mut ch = chosen.clone();
                                ch.push(*arow);
                                next.push((ch, c * acoef));
                            }
                        }
                        combos = next;
                    }
                    for (a_rows, coef) in combos {
                        let coef = &coef * &sign;
                        let mut sdegs: Vec<i64> = vec![blk.degrees[0]];
                        for &f in &s_positions {
                            sdegs.push(blk.degrees[1 + f]);
                        }
                        let stotal: i64 = sdegs.iter().sum();
                        let Some(sb) = sub_layout.block_for(stotal, &sdegs) else { continue };
                        let mut smulti: Vec<usize> = vec![hrow];
                        smulti.extend(a_rows.iter().copied());
                        let scol = sb.flat(&smulti);
                        let sblock = subst.block(stotal);
                        if sblock.is_zero() {
                            continue;
                        }
                        accumulate_into_prev(
                            env, r, t, s, &c_positions, blk, &multi, stotal, &sblock, scol,
                            &coef, stages, start, &mut lift_cache, n, col, &mut m,
                        );
                    }
                }
            }
        }
        if !m.is_zero() {
            blocks.insert(n, m);
        }
    }
    ChainMap::new_unchecked(q_coinv.complex.clone(), prev, blocks)
}

#[allow(clippy::too_many_arguments)]
fn accumulate_into_prev(
    env: &Envelope,
    r: usize,
    t: usize,
    s: usize,
    c_positions: &[usize],
    blk: &TensorBlock,
    multi: &[usize],
    stotal: i64,
    sblock: &Matrix,
    scol: usize,
    coef: &Q,
    stages: &[Stage],
    start: &ChainComplex,
    lift_cache: &mut BTreeMap<usize, ChainMap>,
    n: i64,
    col: usize,
    m: &mut Matrix,
) {
    let u = t - s;
    let target_env = env.q(u + r);
    let lift = lift_cache.entry(u).or_insert_with(|| {
        if u == 0 {
            lift_composite(stages, start, 0, t - 1)
        } else {
            stages[u - 1].xi.then(&lift_composite(stages, start, u, t - 1))
        }
    });
    let lb = lift.block(n);
    if lb.is_zero() {
        return;
    }
    if u == 0 {
        // No spectators: the substitution output lives in O_A[r] = A_0.
        for out in 0..target_env.complex.dim(stotal) {
            let sv = sblock.get(out, scol);
            if sv.is_zero() {
                continue;
            }
            for rr in 0..m.rows() {
                let lv = lb.get(rr, out);
                if !lv.is_zero() {
                    m.add_to(rr, col, &(coef * sv * lv));
                }
            }
        }
        return;
    }
    let stage_u = &stages[u - 1];
    if stage_u.envy.complex.is_zero() {
        return;
    }
    let c_degs: Vec<i64> = c_positions.iter().map(|&f| blk.degrees[1 + f]).collect();
    let c_idx: Vec<usize> = c_positions.iter().map(|&f| multi[1 + f]).collect();
    let proj = stage_u.envy.proj.block(n);
    let mut tdegs: Vec<i64> = vec![stotal];
    tdegs.extend(c_degs.iter().copied());
    let Some(tb) = stage_u.envy_layout.block_for(n, &tdegs) else { return };
    for out in 0..target_env.complex.dim(stotal) {
        let sv = sblock.get(out, scol);
        if sv.is_zero() {
            continue;
        }
        let mut tmulti: Vec<usize> = vec![out];
        tmulti.extend(c_idx.iter().copied());
        let big_row = tb.flat(&tmulti);
        for er in 0..proj.rows() {
            let pv = proj.get(er, big_row);
            if pv.is_zero() {
                continue;
            }
            for rr in 0..m.rows() {
                let lv = lb.get(rr, er);
                if !lv.is_zero() {
                    m.add_to(rr, col, &(coef * sv * pv * lv));
                }
            }
        }
    }
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

/// The interpolation between `X^{(x)t}` and `Y^{(x)t}` by the number of
/// factors outside `X`: stage `q` is the span of basis tensors with at most
/// `q` factors outside the image of `i`, a subcomplex once `Y` is
/// re-coordinated, with stage inclusions on coordinate lines and the block
/// `Sigma_t` action restricted to every stage.
pub struct QFiltration {
    pub t: usize,
    /// Stages `Q_0 .. Q_t`.
    pub stages: Vec<ChainComplex>,
    /// Inclusions `Q_{q-1} -> Q_q`.
    pub inclusions: Vec<ChainMap>,
    /// The re-coordinated `Y` power the stages live in.
    pub power: ChainComplex,
    /// Per stage, the restricted block generators of `Sigma_t`.
    pub gens: Vec<Vec<ChainMap>>,
}

/// Build the filtration of a degreewise-split inclusion.
pub fn q_filtration(i: &ChainMap, t: usize) -> Result<QFiltration> {
    let cell = CellAttachment {
        source: i.source.clone(),
        target: i.target.clone(),
        inclusion: i.clone(),
        attaching: ChainMap::zero(&i.source, &ChainComplex::zero()),
        stage: 0,
        connectivity_tag: Connectivity::NegInfinite,
    };
    let re = recoordinate(&cell)?;
    let y = re.y.clone();
    let is_x: BTreeMap<i64, Vec<bool>> = y
        .dims()
        .keys()
        .map(|&n| {
            let xd = re.x_dims.get(&n).copied().unwrap_or(0);
            (n, (0..y.dim(n)).map(|k| k < xd).collect())
        })
        .collect();
    let factors: Vec<&ChainComplex> = (0..t).map(|_| &y).collect();
    let (big, layout) = tensor_many(&factors);
    let block_gens: Vec<ChainMap> = (0..t.saturating_sub(1))
        .map(|k| {
            let mut perm: Vec<usize> = (0..t).collect();
            perm.swap(k, k + 1);
            permute_factors(&factors, &perm)
        })
        .collect();
    let mut stages = Vec::new();
    let mut selections: Vec<BTreeMap<i64, Vec<usize>>> = Vec::new();
    let mut gens = Vec::new();
    for q in 0..=t {
        let (sel, sub, _) = select_outside_at_most(&big, &layout, &is_x, q);
        let restricted = block_gens.iter().map(|g| restrict_map(g, &sel, &sub)).collect();
        stages.push(sub);
        selections.push(sel);
        gens.push(restricted);
    }
    let mut inclusions = Vec::new();
    for q in 1..=t {
        let (lo, hi) = (&selections[q - 1], &selections[q]);
        let mut blocks = BTreeMap::new();
        for (&n, lo_idx) in lo {
            if lo_idx.is_empty() {
                continue;
            }
            let hi_idx = &hi[&n];
            let mut m = Matrix::zero(hi_idx.len(), lo_idx.len());
            for (jj, &c) in lo_idx.iter().enumerate() {
                let ii = hi_idx.iter().position(|&x| x == c).expect("stages nest");
                m.set(ii, jj, crate::qi(1));
            }
            blocks.insert(n, m);
        }
        inclusions.push(ChainMap::new_unchecked(
            stages[q - 1].clone(),
            stages[q].clone(),
            blocks,
        ));
    }
    Ok(QFiltration { t, stages, inclusions, power: big, gens })
}

/// Basis tensors with at most `bound` factors outside `X`.
fn select_outside_at_most(
    big: &ChainComplex,
    layout: &TensorLayout,
    is_x: &BTreeMap<i64, Vec<bool>>,
    bound: usize,
) -> (BTreeMap<i64, Vec<usize>>, ChainComplex, ChainMap) {
    let mut sel: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (&n, bs) in &layout.blocks {
        let mut idx = Vec::new();
        for b in bs {
            for k in 0..b.size {
                let multi = b.unflat(k);
                let outside = multi
                    .iter()
                    .enumerate()
                    .filter(|&(f, &i)| !is_x.get(&b.degrees[f]).is_some_and(|v| v[i]))
                    .count();
                if outside <= bound {
                    idx.push(b.offset + k);
                }
            }
        }
        sel.insert(n, idx);
    }
    let dims: BTreeMap<i64, usize> =
        sel.iter().map(|(&n, v)| (n, v.len())).filter(|&(_, v)| v > 0).collect();
    let mut incl_blocks = BTreeMap::new();
    for (&n, idx) in &sel {
        if idx.is_empty() {
            continue;
        }
        let mut incl = Matrix::zero(big.dim(n), idx.len());
        for (jj, &i) in idx.iter().enumerate() {
            incl.set(i, jj, crate::qi(1));
        }
        incl_blocks.insert(n, incl);
    }
    let mut d = BTreeMap::new();
    for (&n, idx) in &sel {
        if idx.is_empty() || sel.get(&(n - 1)).is_none_or(|v| v.is_empty()) {
            continue;
        }
        let db = big.differential(n);
        let prev = &sel[&(n - 1)];
        let mut m = Matrix::zero(prev.len(), idx.len());
        for (jj, &cj) in idx.iter().enumerate() {
            for (ii, &ri) in prev.iter().enumerate() {
                let v = db.get(ri, cj);
                if !v.is_zero() {
                    m.set(ii, jj, v.clone());
                }
            }
        }
        if !m.is_zero() {
            d.insert(n, m);
        }
    }
    let sub = ChainComplex::new_unchecked(dims, d);
    let incl = ChainMap::new_unchecked(sub.clone(), big.clone(), incl_blocks);
    (sel, sub, incl)
}

/// The free algebra as a presentation with an empty cell list.
pub fn free_algebra(op: &Operad, z: &ChainComplex) -> Attachment {
    let env = crate::operad::envelope(op, z);
    attach_cells(op, &env, &[]).expect("empty attachment cannot fail")
}

/// The induced map between attachments over the same base when the source's
/// cells form a sublist of the target's; `positions[i]` is the index of
/// source cell `i` in the target's cell list.
pub fn induced_map(src: &Attachment, dst: &Attachment, positions: &[usize]) -> ChainMap {
    assert_eq!(positions.len(), src.recells.len(), "one position per cell");
    let mut y_incl_blocks: BTreeMap<i64, Matrix> = BTreeMap::new();
    for &n in src.y.dims().keys() {
        let mut mm = Matrix::zero(dst.y.dim(n), src.y.dim(n));
        let mut soff = 0;
        for (ci, c) in src.recells.iter().enumerate() {
            let doff: usize = dst.recells[..positions[ci]].iter().map(|d| d.y.dim(n)).sum();
            for k in 0..c.y.dim(n) {
                mm.set(doff + k, soff + k, crate::qi(1));
            }
            soff += c.y.dim(n);
        }
        y_incl_blocks.insert(n, mm);
    }
    let y_incl = ChainMap::new_unchecked(src.y.clone(), dst.y.clone(), y_incl_blocks);
    let st = &src.towers[0];
    let dt = &dst.towers[0];
    let mut phi = ChainMap::identity(&st.start);
    for (k, s_stage) in st.stages.iter().enumerate() {
        let d_stage = &dt.stages[k];
        let t = s_stage.t;
        let envy_map = if s_stage.envy.complex.is_zero() || d_stage.envy.complex.is_zero() {
            ChainMap::zero(&s_stage.envy.complex, &d_stage.envy.complex)
        } else {
            let head = &src.env.q(t).complex;
            let mut cur_factors: Vec<ChainComplex> = vec![head.clone()];
            cur_factors.extend(std::iter::repeat_n(src.y.clone(), t));
            let mut big: Option<ChainMap> = None;
            for slot in 1..=t {
                let fr: Vec<&ChainComplex> = cur_factors.iter().collect();
                let step = apply_at_run(&fr, slot, 1, &y_incl);
                cur_factors[slot] = dst.y.clone();
                big = Some(match big {
                    None => step,
                    Some(b) => b.then(&step),
                });
            }
            s_stage.envy.incl.then(&big.expect("t >= 1")).then(&d_stage.envy.proj)
        };
        let big_map = ChainMap::direct_sum(&[&phi, &envy_map]);
        phi = QuotientComplex::induce(&s_stage.quotient, &d_stage.quotient, &big_map);
    }
    phi
}
