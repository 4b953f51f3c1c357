//! Cubical diagrams: faces, total (co)fibers, convex-subset colimits, and
//! the measurement of cocartesian and cartesian degrees.
//!
//! A `W`-cube is indexed by bitmasks over `W = {0..w-1}`. Chain cubes store
//! their cover edges; longer structure maps compose along the canonical
//! ascending path (the constructor checks that cover squares commute, so the
//! path does not matter). Total cofibers iterate the mapping cone direction
//! by direction from the top bit down; total fibers iterate the mapping
//! fiber from the bottom bit up, so the two towers associate differently and
//! the stable shift law is a genuine cross-check of both.
//!
//! Algebra cubes come in two families over a shared free base: cellular
//! cubes realize each vertex by attaching the cells whose stage is contained
//! in the vertex, making every structure map a literal coordinate-induced
//! map; free-family cubes apply the free functor to a chain cube of
//! generators. Cocartesian degrees of algebra cubes are measured against
//! strict punctured colimits (legitimate for cofibration cubes, which these
//! are by construction); cartesian degrees always go through the underlying
//! chain cube and the stable shift.

use std::collections::{BTreeMap, BTreeSet};

use crate::attach::{attach_cells, induced_map, Attachment, CellAttachment};
use crate::chain::{colimit, ChainComplex, ChainMap, Connectivity, Diagram};
use crate::error::{Error, Result};
use crate::operad::{envelope, free_map, Envelope, Operad};

/// A cube of chain complexes indexed by subsets of `{0..w-1}` as bitmasks.
#[derive(Clone, Debug)]
pub struct ChainCube {
    pub w: usize,
    vertices: BTreeMap<u8, ChainComplex>,
    covers: BTreeMap<(u8, u8), ChainMap>,
}

fn submasks(mask: u8) -> Vec<u8> {
    let mut out = vec![];
    let mut s = mask;
    loop {
        out.push(s);
        if s == 0 {
            break;
        }
        s = (s - 1) & mask;
    }
    out.sort();
    out
}

impl ChainCube {
    /// Validating constructor: every vertex and cover edge must be present
    /// and well-typed, and all cover squares must commute.
    pub fn new(
        w: usize,
        vertices: BTreeMap<u8, ChainComplex>,
        covers: BTreeMap<(u8, u8), ChainMap>,
    ) -> Result<ChainCube> {
        let full: u8 = ((1u16 << w) - 1) as u8;
        for mask in 0..=full {
            if !vertices.contains_key(&mask) {
                return Err(Error::Shape(format!("missing vertex {mask:#b}")));
            }
        }
        let cube = ChainCube { w, vertices, covers };
        for mask in 0..=full {
            for i in 0..w {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let up = mask | (1 << i);
                let Some(e) = cube.covers.get(&(mask, up)) else {
                    return Err(Error::Shape(format!("missing edge {mask:#b} -> {up:#b}")));
                };
                if e.source != cube.vertices[&mask] || e.target != cube.vertices[&up] {
                    return Err(Error::Shape(format!("edge {mask:#b} -> {up:#b} mistyped")));
                }
                e.validate()?;
                for j in (i + 1)..w {
                    if mask & (1 << j) != 0 {
                        continue;
                    }
                    let right = cube.covers[&(mask, mask | (1 << j))]
                        .then(&cube.covers[&(mask | (1 << j), mask | (1 << i) | (1 << j))]);
                    let down =
                        cube.covers[&(mask, up)].then(&cube.covers[&(up, up | (1 << j))]);
                    if right != down {
                        return Err(Error::Shape(format!(
                            "square at {mask:#b} in directions {i},{j} does not commute"
                        )));
                    }
                }
            }
        }
        Ok(cube)
    }

    pub fn new_unchecked(
        w: usize,
        vertices: BTreeMap<u8, ChainComplex>,
        covers: BTreeMap<(u8, u8), ChainMap>,
    ) -> ChainCube {
        ChainCube { w, vertices, covers }
    }

    pub fn full_mask(&self) -> u8 {
        ((1u16 << self.w) - 1) as u8
    }

    pub fn vertex(&self, mask: u8) -> &ChainComplex {
        &self.vertices[&mask]
    }

    /// The structure map `X_U -> X_V`, composed along ascending covers.
    pub fn map(&self, u: u8, v: u8) -> ChainMap {
        assert_eq!(u & v, u, "U must be contained in V");
        let mut m = ChainMap::identity(&self.vertices[&u]);
        let mut cur = u;
        for i in 0..self.w {
            let bit = 1 << i;
            if v & bit != 0 && u & bit == 0 {
                m = m.then(&self.covers[&(cur, cur | bit)]);
                cur |= bit;
            }
        }
        m
    }

    /// The face between `U` and `V`, re-indexed as a `|V - U|`-cube.
    pub fn face(&self, u: u8, v: u8) -> Result<ChainCube> {
        if u & v != u || v & !self.full_mask() != 0 {
            return Err(Error::BadSubset(format!("face ({u:#b}, {v:#b}) is not nested")));
        }
        let dirs: Vec<usize> =
            (0..self.w).filter(|&i| v & (1 << i) != 0 && u & (1 << i) == 0).collect();
        let wf = dirs.len();
        let embed = |t: u8| -> u8 {
            let mut m = u;
            for (k, &d) in dirs.iter().enumerate() {
                if t & (1 << k) != 0 {
                    m |= 1 << d;
                }
            }
            m
        };
        let mut vertices = BTreeMap::new();
        let mut covers = BTreeMap::new();
        let fullf: u8 = ((1u16 << wf) - 1) as u8;
        for t in 0..=fullf {
            vertices.insert(t, self.vertices[&embed(t)].clone());
            for k in 0..wf {
                if t & (1 << k) == 0 {
                    let up = t | (1 << k);
                    covers.insert((t, up), self.covers[&(embed(t), embed(up))].clone());
                }
            }
        }
        Ok(ChainCube { w: wf, vertices, covers })
    }

    fn half(&self, bit: usize, value: bool) -> ChainCube {
        let dirs: Vec<usize> = (0..self.w).filter(|&i| i != bit).collect();
        let embed = |t: u8| -> u8 {
            let mut m = if value { 1 << bit } else { 0 };
            for (k, &d) in dirs.iter().enumerate() {
                if t & (1 << k) != 0 {
                    m |= 1 << d;
                }
            }
            m
        };
        let wf = self.w - 1;
        let fullf: u8 = ((1u16 << wf) - 1) as u8;
        let mut vertices = BTreeMap::new();
        let mut covers = BTreeMap::new();
        for t in 0..=fullf {
            vertices.insert(t, self.vertices[&embed(t)].clone());
            for k in 0..wf {
                if t & (1 << k) == 0 {
                    let up = t | (1 << k);
                    covers.insert((t, up), self.covers[&(embed(t), embed(up))].clone());
                }
            }
        }
        ChainCube { w: wf, vertices, covers }
    }

    fn connecting(&self, bit: usize) -> BTreeMap<u8, ChainMap> {
        let dirs: Vec<usize> = (0..self.w).filter(|&i| i != bit).collect();
        let embed = |t: u8| -> u8 {
            let mut m = 0u8;
            for (k, &d) in dirs.iter().enumerate() {
                if t & (1 << k) != 0 {
                    m |= 1 << d;
                }
            }
            m
        };
        let wf = self.w - 1;
        let fullf: u8 = ((1u16 << wf) - 1) as u8;
        (0..=fullf)
            .map(|t| {
                let lo = embed(t);
                (t, self.covers[&(lo, lo | (1 << bit))].clone())
            })
            .collect()
    }

    /// Total cofiber: the iterated mapping cone, top direction first.
    pub fn tcofib(&self) -> ChainComplex {
        if self.w == 0 {
            return self.vertices[&0].clone();
        }
        let bit = self.w - 1;
        tcofib_map(&self.half(bit, false), &self.half(bit, true), &self.connecting(bit)).cone()
    }

    /// Total fiber: the iterated mapping fiber, bottom direction first.
    pub fn tfib(&self) -> ChainComplex {
        if self.w == 0 {
            return self.vertices[&0].clone();
        }
        tfib_map(&self.half(0, false), &self.half(0, true), &self.connecting(0)).fib()
    }

    /// Connectivity of the total cofiber; for a 1-cube this is the map
    /// connectivity.
    pub fn cocartesian_degree(&self) -> Connectivity {
        self.tcofib().connectivity()
    }

    /// Cartesian degree through the stable shift: `k`-cocartesian iff
    /// `(k - |W| + 1)`-cartesian.
    pub fn cartesian_degree(&self) -> Connectivity {
        match self.cocartesian_degree() {
            Connectivity::Finite(k) => Connectivity::Finite(k - self.w as i64 + 1),
            other => other,
        }
    }

    /// The strict comparison map `colim_{P1(W)} X -> X_W`; for cofibration
    /// cubes this also computes the homotopy colimit.
    pub fn punctured_colimit_comparison(&self) -> Result<ChainMap> {
        let full = self.full_mask();
        let masks: Vec<u8> = (0..full).collect();
        let index = |m: u8| masks.iter().position(|&x| x == m).expect("proper subset");
        let mut arrows = Vec::new();
        for &m in &masks {
            for i in 0..self.w {
                let up = m | (1 << i);
                if up != m && up != full {
                    arrows.push((index(m), index(up), self.map(m, up)));
                }
            }
        }
        let diagram = Diagram {
            objects: masks.iter().map(|&m| self.vertices[&m].clone()).collect(),
            arrows,
        };
        let col = colimit(&diagram)?;
        let legs: Vec<ChainMap> = masks.iter().map(|&m| self.map(m, full)).collect();
        Ok(col.map_out(&self.vertices[&full], &legs))
    }
}

fn tcofib_map(a: &ChainCube, b: &ChainCube, conn: &BTreeMap<u8, ChainMap>) -> ChainMap {
    if a.w == 0 {
        return conn[&0].clone();
    }
    let bit = a.w - 1;
    let f = tcofib_map(&a.half(bit, false), &a.half(bit, true), &a.connecting(bit));
    let g = tcofib_map(&b.half(bit, false), &b.half(bit, true), &b.connecting(bit));
    let lo: BTreeMap<u8, ChainMap> = conn
        .iter()
        .filter(|(&m, _)| m & (1 << bit) == 0)
        .map(|(&m, e)| (m, e.clone()))
        .collect();
    let hi: BTreeMap<u8, ChainMap> = conn
        .iter()
        .filter(|(&m, _)| m & (1 << bit) != 0)
        .map(|(&m, e)| (m & !(1 << bit), e.clone()))
        .collect();
    let phi = tcofib_map(&a.half(bit, false), &b.half(bit, false), &lo);
    let psi = tcofib_map(&a.half(bit, true), &b.half(bit, true), &hi);
    ChainMap::cone_functor(&f, &g, &phi, &psi)
}

fn tfib_map(a: &ChainCube, b: &ChainCube, conn: &BTreeMap<u8, ChainMap>) -> ChainMap {
    if a.w == 0 {
        return conn[&0].clone();
    }
    let f = tfib_map(&a.half(0, false), &a.half(0, true), &a.connecting(0));
    let g = tfib_map(&b.half(0, false), &b.half(0, true), &b.connecting(0));
    let lo: BTreeMap<u8, ChainMap> =
        conn.iter().filter(|(&m, _)| m & 1 == 0).map(|(&m, e)| (m >> 1, e.clone())).collect();
    let hi: BTreeMap<u8, ChainMap> =
        conn.iter().filter(|(&m, _)| m & 1 != 0).map(|(&m, e)| (m >> 1, e.clone())).collect();
    let phi = tfib_map(&a.half(0, false), &b.half(0, false), &lo);
    let psi = tfib_map(&a.half(0, true), &b.half(0, true), &hi);
    ChainMap::fib_functor(&f, &g, &phi, &psi)
}

/// Build a pushout cube of complexes from the edge maps out of the initial
/// vertex: every vertex with two or more directions is the strict colimit.
pub fn pushout_chain_cube(base: &ChainComplex, edges: &[ChainMap]) -> Result<ChainCube> {
    let w = edges.len();
    for e in edges {
        if e.source != *base {
            return Err(Error::Shape("pushout cube edges must share the base".into()));
        }
    }
    let full: u8 = ((1u16 << w) - 1) as u8;
    let mut vertices: BTreeMap<u8, ChainComplex> = BTreeMap::new();
    let mut legs: BTreeMap<u8, Vec<ChainMap>> = BTreeMap::new();
    vertices.insert(0, base.clone());
    let span_colimit = |dirs: &[usize]| -> Result<crate::chain::Colimit> {
        let mut objects = vec![base.clone()];
        let mut arrows = Vec::new();
        for (k, &d) in dirs.iter().enumerate() {
            objects.push(edges[d].target.clone());
            arrows.push((0, k + 1, edges[d].clone()));
        }
        colimit(&Diagram { objects, arrows })
    };
    for mask in 1..=full {
        let dirs: Vec<usize> = (0..w).filter(|&i| mask & (1 << i) != 0).collect();
        if dirs.len() == 1 {
            vertices.insert(mask, edges[dirs[0]].target.clone());
            legs.insert(mask, vec![edges[dirs[0]].clone(), ChainMap::identity(&edges[dirs[0]].target)]);
            continue;
        }
        let col = span_colimit(&dirs)?;
        vertices.insert(mask, col.complex.clone());
        legs.insert(mask, col.legs.clone());
    }
    let mut covers = BTreeMap::new();
    for mask in 0..=full {
        for i in 0..w {
            if mask & (1 << i) != 0 {
                continue;
            }
            let up = mask | (1 << i);
            let updirs: Vec<usize> = (0..w).filter(|&j| up & (1 << j) != 0).collect();
            let m = if mask == 0 {
                legs[&up][0].clone()
            } else {
                let dirs: Vec<usize> = (0..w).filter(|&j| mask & (1 << j) != 0).collect();
                let col = span_colimit(&dirs)?;
                let mut target_legs = vec![legs[&up][0].clone()];
                for &d in &dirs {
                    let pos = updirs.iter().position(|&x| x == d).unwrap();
                    target_legs.push(legs[&up][1 + pos].clone());
                }
                col.map_out(&vertices[&up], &target_legs)
            };
            covers.insert((mask, up), m);
        }
    }
    ChainCube::new(w, vertices, covers)
}

/// Build a pullback cube of complexes from the maps into the terminal
/// vertex: every vertex missing two or more directions is the strict limit
/// (the compatible-tuple kernel).
pub fn pullback_chain_cube(top: &ChainComplex, edges: &[ChainMap]) -> Result<ChainCube> {
    let w = edges.len();
    for e in edges {
        if e.target != *top {
            return Err(Error::Shape("pullback cube edges must share the top".into()));
        }
    }
    let full: u8 = ((1u16 << w) - 1) as u8;
    let mut vertices: BTreeMap<u8, ChainComplex> = BTreeMap::new();
    let mut incls: BTreeMap<u8, ChainMap> = BTreeMap::new();
    let mut prod_incls: BTreeMap<u8, Vec<ChainMap>> = BTreeMap::new();
    vertices.insert(full, top.clone());
    for mask in (0..full).rev() {
        let missing: Vec<usize> = (0..w).filter(|&i| mask & (1 << i) == 0).collect();
        if missing.len() == 1 {
            vertices.insert(mask, edges[missing[0]].source.clone());
            continue;
        }
        let sources: Vec<&ChainComplex> = missing.iter().map(|&i| &edges[i].source).collect();
        let (prod, pincls) = ChainComplex::direct_sum(&sources);
        let m = missing.len();
        let tops: Vec<&ChainComplex> = (1..m).map(|_| top).collect();
        let (top_sum, top_incls) = ChainComplex::direct_sum(&tops);
        let mut diff = ChainMap::zero(&prod, &top_sum);
        for k in 0..(m - 1) {
            let a = prod_projection(&prod, &pincls, k).then(&edges[missing[k]]);
            let b = prod_projection(&prod, &pincls, k + 1).then(&edges[missing[k + 1]]);
            diff = diff.add(&a.sub(&b).then(&top_incls[k]));
        }
        let (ker, incl) = crate::chain::kernel_complex(&diff);
        vertices.insert(mask, ker);
        incls.insert(mask, incl);
        prod_incls.insert(mask, pincls);
    }
    let mut covers = BTreeMap::new();
    for mask in 0..=full {
        for i in 0..w {
            if mask & (1 << i) != 0 {
                continue;
            }
            let up = mask | (1 << i);
            let missing: Vec<usize> = (0..w).filter(|&j| mask & (1 << j) == 0).collect();
            let m = if missing.len() == 1 {
                edges[i].clone()
            } else {
                let up_missing: Vec<usize> = (0..w).filter(|&j| up & (1 << j) == 0).collect();
                let tuple = incls[&mask].clone();
                let pincls = &prod_incls[&mask];
                if up_missing.len() == 1 {
                    let pos = missing.iter().position(|&k| k == up_missing[0]).unwrap();
                    tuple.then(&prod_projection(&tuple.target, pincls, pos))
                } else {
                    let up_sources: Vec<&ChainComplex> =
                        up_missing.iter().map(|&k| &edges[k].source).collect();
                    let (up_prod, up_incls) = ChainComplex::direct_sum(&up_sources);
                    let mut proj = ChainMap::zero(&tuple.target, &up_prod);
                    for (kk, &k) in up_missing.iter().enumerate() {
                        let pos = missing.iter().position(|&x| x == k).unwrap();
                        proj = proj.add(
                            &prod_projection(&tuple.target, pincls, pos).then(&up_incls[kk]),
                        );
                    }
                    corestrict(&tuple.then(&proj), &incls[&up])
                }
            };
            covers.insert((mask, up), m);
        }
    }
    ChainCube::new(w, vertices, covers)
}

fn prod_projection(sum: &ChainComplex, incls: &[ChainMap], k: usize) -> ChainMap {
    let mut blocks = BTreeMap::new();
    for &n in sum.dims().keys() {
        let tgt = &incls[k].source;
        if tgt.dim(n) == 0 {
            continue;
        }
        let mut m = crate::linalg::Matrix::zero(tgt.dim(n), sum.dim(n));
        let offset: usize = incls[..k].iter().map(|f| f.source.dim(n)).sum();
        for j in 0..tgt.dim(n) {
            m.set(j, offset + j, crate::qi(1));
        }
        blocks.insert(n, m);
    }
    ChainMap::new_unchecked(sum.clone(), incls[k].source.clone(), blocks)
}

fn corestrict(f: &ChainMap, incl: &ChainMap) -> ChainMap {
    let mut blocks = BTreeMap::new();
    for &n in f.source.dims().keys() {
        if incl.source.dim(n) == 0 {
            continue;
        }
        let sol =
            incl.block(n).solve_right(&f.block(n)).expect("image lies in the subcomplex");
        blocks.insert(n, sol);
    }
    ChainMap::new_unchecked(f.source.clone(), incl.source.clone(), blocks)
}

// ---------------------------------------------------------------------------
// Convex subsets and algebra cubes
// ---------------------------------------------------------------------------

/// A downward-closed family of subsets of `P(W)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvexSet {
    pub w: usize,
    members: BTreeSet<u8>,
}

impl ConvexSet {
    pub fn new(w: usize, members: BTreeSet<u8>) -> Result<ConvexSet> {
        let full: u8 = ((1u16 << w) - 1) as u8;
        for &m in &members {
            if m & !full != 0 {
                return Err(Error::BadSubset(format!("{m:#b} is not a subset of W")));
            }
            for sub in submasks(m) {
                if !members.contains(&sub) {
                    return Err(Error::BadSubset(format!(
                        "not convex: {sub:#b} < {m:#b} is missing"
                    )));
                }
            }
        }
        Ok(ConvexSet { w, members })
    }

    /// `A_min = { V : |V| <= 1 }`.
    pub fn a_min(w: usize) -> ConvexSet {
        let mut members: BTreeSet<u8> = BTreeSet::from([0]);
        for i in 0..w {
            members.insert(1 << i);
        }
        ConvexSet { w, members }
    }

    /// The full power set of `V`.
    pub fn power(w: usize, v: u8) -> ConvexSet {
        ConvexSet { w, members: submasks(v).into_iter().collect() }
    }

    /// All proper subsets of `V`.
    pub fn punctured(w: usize, v: u8) -> ConvexSet {
        let mut members: BTreeSet<u8> = submasks(v).into_iter().collect();
        members.remove(&v);
        ConvexSet { w, members }
    }

    pub fn contains(&self, mask: u8) -> bool {
        self.members.contains(&mask)
    }

    pub fn members(&self) -> &BTreeSet<u8> {
        &self.members
    }
}

/// A cellular family of algebras over a shared free base: the vertex at `V`
/// attaches precisely the cells with stage contained in `V`.
pub struct CellularCube {
    pub w: usize,
    pub operad: Operad,
    pub env: Envelope,
    pub cells: Vec<CellAttachment>,
    realized: BTreeMap<Vec<usize>, Attachment>,
}

impl CellularCube {
    pub fn new(
        w: usize,
        operad: Operad,
        generators: &ChainComplex,
        cells: Vec<CellAttachment>,
    ) -> Result<CellularCube> {
        let env = envelope(&operad, generators);
        let full: u8 = ((1u16 << w) - 1) as u8;
        for c in &cells {
            if c.stage & !full != 0 {
                return Err(Error::BadSubset(format!("cell stage {:#b} outside W", c.stage)));
            }
        }
        Ok(CellularCube { w, operad, env, cells, realized: BTreeMap::new() })
    }

    fn cells_for_vertex(&self, mask: u8) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.stage & !mask == 0)
            .map(|(i, _)| i)
            .collect()
    }

    fn cells_for_convex(&self, a: &ConvexSet) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| a.members().iter().any(|&t| c.stage & !t == 0))
            .map(|(i, _)| i)
            .collect()
    }

    fn realize_cells(&mut self, idx: &[usize]) -> Result<&Attachment> {
        if !self.realized.contains_key(idx) {
            let subset: Vec<CellAttachment> =
                idx.iter().map(|&i| self.cells[i].clone()).collect();
            let at = attach_cells(&self.operad, &self.env, &subset)?;
            self.realized.insert(idx.to_vec(), at);
        }
        Ok(&self.realized[idx])
    }

    /// Realize a vertex.
    pub fn vertex(&mut self, mask: u8) -> Result<&Attachment> {
        let idx = self.cells_for_vertex(mask);
        self.realize_cells(&idx)
    }

    /// The colimit over a convex set containing the empty set; itself a
    /// cell attachment over the shared base.
    pub fn convex_colim(&mut self, a: &ConvexSet) -> Result<&Attachment> {
        if !a.contains(0) {
            return Err(Error::BadSubset("convex set must contain the empty set".into()));
        }
        let idx = self.cells_for_convex(a);
        self.realize_cells(&idx)
    }

    /// Cocartesian degree of the face between `U` and `V`, measured in the
    /// algebra category: the cone of `colim_{P1}(face) -> X_V`.
    pub fn cocartesian_degree_alg(&mut self, u: u8, v: u8) -> Result<Connectivity> {
        if u & v != u {
            return Err(Error::BadSubset(format!("face ({u:#b}, {v:#b}) is not nested")));
        }
        let diff = v & !u;
        if diff == 0 {
            let vx = self.vertex(v)?.b().clone();
            return Ok(ChainMap::zero(&ChainComplex::zero(), &vx).connectivity());
        }
        // Punctured cells of the face: stages inside V that miss at least
        // one face direction.
        let src_idx: Vec<usize> = self
            .cells_for_vertex(v)
            .into_iter()
            .filter(|&i| self.cells[i].stage & diff != diff)
            .collect();
        let dst_idx = self.cells_for_vertex(v);
        let positions: Vec<usize> = src_idx
            .iter()
            .map(|i| dst_idx.iter().position(|j| j == i).expect("subset"))
            .collect();
        self.realize_cells(&src_idx)?;
        self.realize_cells(&dst_idx)?;
        let m = induced_map(&self.realized[&src_idx], &self.realized[&dst_idx], &positions);
        Ok(m.connectivity())
    }

    /// The underlying chain cube, with coordinate-induced structure maps.
    pub fn chain_cube(&mut self) -> Result<ChainCube> {
        let full: u8 = ((1u16 << self.w) - 1) as u8;
        let mut vertices = BTreeMap::new();
        let mut covers = BTreeMap::new();
        for mask in 0..=full {
            let b = self.vertex(mask)?.b().clone();
            vertices.insert(mask, b);
        }
        for mask in 0..=full {
            for i in 0..self.w {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let up = mask | (1 << i);
                let src_idx = self.cells_for_vertex(mask);
                let dst_idx = self.cells_for_vertex(up);
                let positions: Vec<usize> = src_idx
                    .iter()
                    .map(|x| dst_idx.iter().position(|j| j == x).expect("subset"))
                    .collect();
                self.realize_cells(&src_idx)?;
                self.realize_cells(&dst_idx)?;
                let m =
                    induced_map(&self.realized[&src_idx], &self.realized[&dst_idx], &positions);
                covers.insert((mask, up), m);
            }
        }
        ChainCube::new(self.w, vertices, covers)
    }
}

/// A free family: the free functor applied to a chain cube of generators.
pub struct FreeCube {
    pub operad: Operad,
    pub generators: ChainCube,
    envs: BTreeMap<u8, Envelope>,
}

impl FreeCube {
    pub fn new(operad: Operad, generators: ChainCube) -> FreeCube {
        let full = generators.full_mask();
        let envs =
            (0..=full).map(|m| (m, envelope(&operad, generators.vertex(m)))).collect();
        FreeCube { operad, generators, envs }
    }

    pub fn env(&self, mask: u8) -> &Envelope {
        &self.envs[&mask]
    }

    /// The underlying chain cube of the free family.
    pub fn chain_cube(&self) -> Result<ChainCube> {
        let w = self.generators.w;
        let full = self.generators.full_mask();
        let mut vertices = BTreeMap::new();
        let mut covers = BTreeMap::new();
        for mask in 0..=full {
            vertices.insert(mask, self.envs[&mask].underlying().clone());
        }
        for mask in 0..=full {
            for i in 0..w {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let up = mask | (1 << i);
                let g = self.generators.map(mask, up);
                covers.insert((mask, up), free_map(&self.envs[&mask], &self.envs[&up], &g));
            }
        }
        ChainCube::new(w, vertices, covers)
    }

    /// The algebra-level cocartesian degree of a face: the free functor
    /// preserves colimits, so this is the free functor on the punctured
    /// chain comparison of the generators.
    pub fn cocartesian_degree_alg(&self, u: u8, v: u8) -> Result<Connectivity> {
        let face = self.generators.face(u, v)?;
        if face.w == 0 {
            let env = envelope(&self.operad, face.vertex(0));
            return Ok(ChainMap::zero(&ChainComplex::zero(), env.underlying()).connectivity());
        }
        let comparison = face.punctured_colimit_comparison()?;
        let env_src = envelope(&self.operad, &comparison.source);
        let env_tgt = envelope(&self.operad, &comparison.target);
        Ok(free_map(&env_src, &env_tgt, &comparison).connectivity())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operad::{builtin, Builtin};
    use std::collections::BTreeMap as Map;

    fn constant_cube(w: usize, c: &ChainComplex) -> ChainCube {
        let full: u8 = ((1u16 << w) - 1) as u8;
        let mut vertices = Map::new();
        let mut covers = Map::new();
        for m in 0..=full {
            vertices.insert(m, c.clone());
            for i in 0..w {
                if m & (1 << i) == 0 {
                    covers.insert((m, m | (1 << i)), ChainMap::identity(c));
                }
            }
        }
        ChainCube::new(w, vertices, covers).unwrap()
    }

    fn sphere_square() -> ChainCube {
        let s0 = ChainComplex::sphere(0);
        let z = ChainComplex::zero();
        let mut vertices = Map::new();
        vertices.insert(0b00, s0.clone());
        vertices.insert(0b01, z.clone());
        vertices.insert(0b10, z.clone());
        vertices.insert(0b11, z.clone());
        let mut covers = Map::new();
        covers.insert((0b00, 0b01), ChainMap::zero(&s0, &z));
        covers.insert((0b00, 0b10), ChainMap::zero(&s0, &z));
        covers.insert((0b01, 0b11), ChainMap::identity(&z));
        covers.insert((0b10, 0b11), ChainMap::identity(&z));
        ChainCube::new(2, vertices, covers).unwrap()
    }

    #[test]
    fn constant_cube_is_infinitely_cocartesian() {
        let c = ChainComplex::disk(2);
        for w in 1..=3 {
            let cube = constant_cube(w, &c);
            assert_eq!(cube.tcofib().homology_all(), Map::new(), "w = {w}");
            assert_eq!(cube.cocartesian_degree(), Connectivity::Infinite);
        }
    }

    #[test]
    fn sphere_square_tcofib() {
        let cube = sphere_square();
        let t = cube.tcofib();
        assert_eq!(t.dims(), ChainComplex::sphere(2).dims());
        assert_eq!(cube.cocartesian_degree(), Connectivity::Finite(1));
        assert_eq!(cube.cartesian_degree(), Connectivity::Finite(0));
    }

    #[test]
    fn shift_law_on_square() {
        let cube = sphere_square();
        let tc = cube.tcofib();
        let tf = cube.tfib();
        for n in -4..6 {
            assert_eq!(tc.homology(n), tf.homology(n - 2), "degree {n}");
        }
    }

    #[test]
    fn face_reindexing() {
        let cube = sphere_square();
        let whole = cube.face(0, 0b11).unwrap();
        assert_eq!(whole.vertex(0b00), cube.vertex(0b00));
        let edge = cube.face(0, 0b01).unwrap();
        assert_eq!(edge.w, 1);
        assert_eq!(
            edge.cocartesian_degree(),
            ChainMap::zero(cube.vertex(0), cube.vertex(1)).connectivity()
        );
        assert!(cube.face(0b10, 0b01).is_err());
    }

    #[test]
    fn pushout_cube_is_infinitely_cocartesian() {
        // Pushout cubes along cofibrations (degreewise monos) compute their
        // homotopy colimits, so they are infinitely cocartesian.
        let base = ChainComplex::sphere(0);
        let (sum1, incl1) = ChainComplex::direct_sum(&[&base, &ChainComplex::sphere(1)]);
        let disk = ChainComplex::disk(1);
        let bottom = ChainMap::new(
            base.clone(),
            disk.clone(),
            Map::from([(0, crate::linalg::Matrix::identity(1))]),
        )
        .unwrap();
        let _ = sum1;
        let cube = pushout_chain_cube(&base, &[incl1[0].clone(), bottom.clone()]).unwrap();
        assert_eq!(cube.cocartesian_degree(), Connectivity::Infinite);
        let cmp = cube.punctured_colimit_comparison().unwrap();
        assert_eq!(cmp.connectivity(), Connectivity::Infinite);
        let cube3 =
            pushout_chain_cube(&base, &[incl1[0].clone(), bottom, ChainMap::identity(&base)])
                .unwrap();
        assert_eq!(cube3.cocartesian_degree(), Connectivity::Infinite);
    }

    #[test]
    fn pullback_cube_is_infinitely_cartesian() {
        let x = ChainComplex::sphere(1);
        let f1 = ChainComplex::sphere(2);
        let f2 = ChainComplex::sphere(3);
        let (s1, _) = ChainComplex::direct_sum(&[&x, &f1]);
        let (s2, _) = ChainComplex::direct_sum(&[&x, &f2]);
        let proj_to_x = |s: &ChainComplex| {
            let mut blocks = Map::new();
            for &n in s.dims().keys() {
                let mut m = crate::linalg::Matrix::zero(x.dim(n), s.dim(n));
                for j in 0..x.dim(n) {
                    m.set(j, j, crate::qi(1));
                }
                blocks.insert(n, m);
            }
            ChainMap::new_unchecked(s.clone(), x.clone(), blocks)
        };
        let cube = pullback_chain_cube(&x, &[proj_to_x(&s1), proj_to_x(&s2)]).unwrap();
        assert_eq!(cube.cartesian_degree(), Connectivity::Infinite);
        assert_eq!(cube.vertex(0).dims(), &Map::from([(1, 1), (2, 1), (3, 1)]));
    }

    #[test]
    fn convex_sets() {
        assert!(ConvexSet::new(2, BTreeSet::from([0b11])).is_err());
        let a = ConvexSet::new(2, BTreeSet::from([0b00, 0b01])).unwrap();
        assert!(a.contains(0b01));
        let amin = ConvexSet::a_min(3);
        assert_eq!(amin.members().len(), 4);
        let p = ConvexSet::punctured(2, 0b11);
        assert!(!p.contains(0b11));
        assert_eq!(ConvexSet::power(2, 0b11).members().len(), 4);
    }

    #[test]
    fn cellular_pushout_square_faces() {
        // Cells only at singleton stages: every face of dimension >= 2 is
        // infinitely cocartesian, and edges measure the attachments.
        let com = builtin(Builtin::Com, 2, false);
        let z = ChainComplex::zero();
        let mut cube = CellularCube::new(
            2,
            com,
            &z,
            vec![
                CellAttachment::free(2, &ChainComplex::zero(), 0b01),
                CellAttachment::free(3, &ChainComplex::zero(), 0b10),
            ],
        )
        .unwrap();
        assert_eq!(cube.cocartesian_degree_alg(0, 0b11).unwrap(), Connectivity::Infinite);
        assert_eq!(cube.cocartesian_degree_alg(0, 0b01).unwrap(), Connectivity::Finite(1));
        assert_eq!(cube.cocartesian_degree_alg(0, 0b10).unwrap(), Connectivity::Finite(2));
    }

    #[test]
    fn cellular_top_cell_face_degree() {
        // Free cells at singleton stages plus a top-stage cell of inclusion
        // connectivity 4: the top face measures exactly 4.
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
        let got = cube.cocartesian_degree_alg(0, 0b11).unwrap();
        assert_eq!(got, Connectivity::Finite(4));
    }

    #[test]
    fn cellular_unit_operad_matches_chain_measurement() {
        let unit = builtin(Builtin::Unit, 2, false);
        let z = ChainComplex::sphere(0);
        let mut cube = CellularCube::new(
            2,
            unit,
            &z,
            vec![
                CellAttachment::free(1, &ChainComplex::sphere(0), 0b01),
                CellAttachment::free(2, &ChainComplex::sphere(0), 0b10),
                CellAttachment::free(3, &ChainComplex::sphere(0), 0b11),
            ],
        )
        .unwrap();
        let alg = cube.cocartesian_degree_alg(0, 0b11).unwrap();
        let ch = cube.chain_cube().unwrap().cocartesian_degree();
        assert_eq!(alg, ch);
    }

    #[test]
    fn convex_colim_examples() {
        let com = builtin(Builtin::Com, 2, false);
        let z = ChainComplex::zero();
        let mut cube = CellularCube::new(
            2,
            com,
            &z,
            vec![
                CellAttachment::free(2, &ChainComplex::zero(), 0b01),
                CellAttachment::free(3, &ChainComplex::zero(), 0b10),
                CellAttachment::free(4, &ChainComplex::zero(), 0b11),
            ],
        )
        .unwrap();
        let full = ConvexSet::power(2, 0b11);
        let vb = cube.vertex(0b11).unwrap().b().clone();
        let cb = cube.convex_colim(&full).unwrap().b().clone();
        assert_eq!(cb, vb);
        let amin = ConvexSet::a_min(2);
        let ab = cube.convex_colim(&amin).unwrap().b().clone();
        let single = cube.vertex(0b01).unwrap().b().clone();
        assert!(ab.total_dim() < vb.total_dim());
        assert!(ab.total_dim() > single.total_dim());
    }

    #[test]
    fn free_cube_measurements() {
        let com = builtin(Builtin::Com, 2, false);
        let base = ChainComplex::zero();
        let e1 = ChainMap::zero(&base, &ChainComplex::sphere(2));
        let e2 = ChainMap::zero(&base, &ChainComplex::sphere(3));
        let gens = pushout_chain_cube(&base, &[e1, e2]).unwrap();
        let cube = FreeCube::new(com, gens);
        assert_eq!(cube.cocartesian_degree_alg(0, 0b11).unwrap(), Connectivity::Infinite);
        // Sharp homotopy excision: the cross term z1 z2 sits in degree 5.
        let ch = cube.chain_cube().unwrap();
        assert_eq!(ch.cocartesian_degree(), Connectivity::Finite(4));
        assert_eq!(ch.cartesian_degree(), Connectivity::Finite(3));
    }
}
