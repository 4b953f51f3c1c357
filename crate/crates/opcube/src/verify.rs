//! Theorem bound formulas, scenario machinery, and the batch checker.
//!
//! Every check follows the same shape: build the cube a scenario describes,
//! measure the hypothesis quantities, reject the scenario with a diagnostic
//! if a hypothesis genuinely fails (that is not a failed verdict), compute
//! the predicted bound, measure the conclusion, and compare. The theorems
//! assert lower bounds, so a verdict passes when `measured >= predicted`;
//! the curated sharp instances additionally pin exact values in their own
//! tests.
//!
//! Cubes come in three families. Cellular and free families realize
//! cofibration cubes over a shared free base, so strict punctured colimits
//! measure algebra-level cocartesian degrees. Chain pullback families (unit
//! operad only) realize strongly infinity-cartesian cubes exactly.
//! Cartesian degrees are always measured through the underlying chain cube
//! and the stable shift.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attach::CellAttachment;
use crate::chain::{ChainComplex, ChainMap, Connectivity};
use crate::cube::{pullback_chain_cube, pushout_chain_cube, CellularCube, ChainCube, FreeCube};
use crate::error::{Error, Result};
use crate::json::OperadBundle;
use crate::operad::{builtin_by_name, Operad};

// ---------------------------------------------------------------------------
// Partitions and bounds
// ---------------------------------------------------------------------------

/// All partitions of `{0..w-1}` into nonempty blocks, each block a bitmask,
/// enumerated by restricted growth strings. `w <= 4` (Bell(4) = 15).
pub fn partitions(w: usize) -> Vec<Vec<u8>> {
    assert!((1..=4).contains(&w), "partitions support 1 <= w <= 4");
    let mut out = Vec::new();
    let mut assign = vec![0usize; w];
    loop {
        let blocks = *assign.iter().max().unwrap() + 1;
        let mut masks = vec![0u8; blocks];
        for (i, &b) in assign.iter().enumerate() {
            masks[b] |= 1 << i;
        }
        out.push(masks);
        // Next restricted growth string.
        let mut i = w;
        loop {
            if i == 1 {
                return out;
            }
            i -= 1;
            let cap = assign[..i].iter().max().unwrap() + 1;
            if assign[i] < cap {
                assign[i] += 1;
                for a in assign[i + 1..].iter_mut() {
                    *a = 0;
                }
                break;
            }
            assign[i] = 0;
        }
    }
}

fn validate_kv(w: usize, kv: &BTreeMap<u8, Connectivity>) -> Result<()> {
    let full: u8 = ((1u16 << w) - 1) as u8;
    for v in 1..=full {
        let Some(k) = kv.get(&v) else {
            return Err(Error::HypothesisViolation(format!(
                "missing estimate for subset {v:#b}"
            )));
        };
        if *k < Connectivity::Finite(-1) {
            return Err(Error::HypothesisViolation(format!(
                "estimate for {v:#b} is below -1"
            )));
        }
        for u in 1..v {
            if u & v == u && kv[&u] > kv[&v] {
                return Err(Error::HypothesisViolation(format!(
                    "estimates are not monotone: k({u:#b}) > k({v:#b})"
                )));
            }
        }
    }
    Ok(())
}

/// The higher Blakers-Massey bound: the minimum over partitions of `W` by
/// nonempty sets of `-|W| + sum (k_V + 1)`.
pub fn bm_bound(w: usize, kv: &BTreeMap<u8, Connectivity>) -> Result<Connectivity> {
    validate_kv(w, kv)?;
    let mut best = Connectivity::Infinite;
    for part in partitions(w) {
        let mut total = Connectivity::Finite(-(w as i64));
        for mask in part {
            total = total.plus(kv[&mask].plus_int(1));
        }
        best = best.min(total);
    }
    Ok(best)
}

/// The dual bound: the minimum of `k_W + |W| - 1` and, over partitions of
/// `W` by nonempty sets not equal to `W`, of `|W| + sum k_V`.
pub fn dual_bm_bound(w: usize, kv: &BTreeMap<u8, Connectivity>) -> Result<Connectivity> {
    validate_kv(w, kv)?;
    let full: u8 = ((1u16 << w) - 1) as u8;
    let mut best = kv[&full].plus_int(w as i64 - 1);
    for part in partitions(w) {
        if part.contains(&full) {
            continue;
        }
        let mut total = Connectivity::Finite(w as i64);
        for mask in part {
            total = total.plus(kv[&mask]);
        }
        best = best.min(total);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TheoremId {
    T11a,
    T11b,
    T12,
    T14a,
    T14b,
    T15,
    T16,
    T17,
    T19,
    T111,
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperadSpec {
    Builtin {
        name: String,
        cap: usize,
        #[serde(default)]
        arity0: bool,
    },
    Bundle {
        bundle: Box<OperadBundle>,
    },
}

impl OperadSpec {
    pub fn build(&self) -> Result<Operad> {
        match self {
            OperadSpec::Builtin { name, cap, arity0 } => builtin_by_name(name, *cap, *arity0),
            OperadSpec::Bundle { bundle } => crate::json::operad_from_bundle(bundle),
        }
    }

    pub fn cap(&self) -> usize {
        match self {
            OperadSpec::Builtin { cap, .. } => *cap,
            OperadSpec::Bundle { bundle } => bundle.cap,
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, OperadSpec::Builtin { name, .. } if name == "unit")
    }
}

/// Sphere summands of a generator or fiber complex.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummandSpec {
    pub degree: i64,
    #[serde(default = "one")]
    pub dim: usize,
}

fn one() -> usize {
    1
}

pub fn build_spheres(parts: &[SummandSpec]) -> ChainComplex {
    let mut dims: BTreeMap<i64, usize> = BTreeMap::new();
    for p in parts {
        *dims.entry(p.degree).or_insert(0) += p.dim;
    }
    ChainComplex::new_unchecked(dims, BTreeMap::new())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Free,
    Kill,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSpec {
    pub kind: CellKind,
    pub degree: i64,
    /// Stage as 1-based directions, e.g. `[1, 2]`.
    pub stage: Vec<usize>,
}

impl CellSpec {
    fn mask(&self, w: usize) -> Result<u8> {
        let mut m = 0u8;
        for &i in &self.stage {
            if i == 0 || i > w {
                return Err(Error::Config(format!("stage element {i} outside 1..={w}")));
            }
            m |= 1 << (i - 1);
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// Cells over a shared free base.
    Cellular { base: Vec<SummandSpec>, cells: Vec<CellSpec> },
    /// The free functor on a pushout cube of generators: direction `i`
    /// freely adds the listed summands.
    FreeFamily { base: Vec<SummandSpec>, edges: Vec<Vec<SummandSpec>> },
    /// A strict pullback cube of complexes (unit operad only): direction
    /// `i` projects away the listed fiber.
    ChainPullback { top: Vec<SummandSpec>, fibers: Vec<Vec<SummandSpec>> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub theorem: TheoremId,
    pub operad: OperadSpec,
    pub w: usize,
    #[serde(flatten)]
    pub family: FamilySpec,
    #[serde(default)]
    pub window: Option<(i64, i64)>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub id: String,
    pub theorem: TheoremId,
    #[serde(rename = "kV")]
    pub k_v: BTreeMap<String, Connectivity>,
    pub predicted: Connectivity,
    pub measured: Connectivity,
    pub pass: bool,
    pub millis: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RejectedScenario {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct Report {
    pub scenarios: Vec<ScenarioReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<RejectedScenario>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.scenarios.iter().all(|s| s.pass)
    }
}

fn subset_label(mask: u8, w: usize) -> String {
    let parts: Vec<String> =
        (0..w).filter(|&i| mask & (1 << i) != 0).map(|i| (i + 1).to_string()).collect();
    parts.join(",")
}

// ---------------------------------------------------------------------------
// Building and measuring
// ---------------------------------------------------------------------------

/// The realized cube of a scenario, with the measurements the theorems need.
enum Realized {
    Cellular(Box<CellularCube>),
    Free(Box<FreeCube>),
    Pullback(Box<ChainCube>),
}

impl Realized {
    fn chain_cube(&mut self) -> Result<ChainCube> {
        match self {
            Realized::Cellular(c) => c.chain_cube(),
            Realized::Free(c) => c.chain_cube(),
            Realized::Pullback(c) => Ok((**c).clone()),
        }
    }

    /// Algebra-level cocartesian degree of the face between `u` and `v`.
    /// For the pullback family the operad is the unit operad, where algebra
    /// colimits are chain colimits and the total cofiber measures them.
    fn cocartesian_alg(&mut self, u: u8, v: u8) -> Result<Connectivity> {
        match self {
            Realized::Cellular(c) => c.cocartesian_degree_alg(u, v),
            Realized::Free(c) => c.cocartesian_degree_alg(u, v),
            Realized::Pullback(c) => Ok(c.face(u, v)?.cocartesian_degree()),
        }
    }
}

fn build_realized(s: &Scenario, op: &Operad) -> Result<Realized> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    match &s.family {
        FamilySpec::Cellular { base, cells } => {
            let z = build_spheres(base);
            let env = crate::operad::envelope(op, &z);
            let a = env.underlying().clone();
            let mut built = Vec::new();
            for c in cells {
                let mask = c.mask(s.w)?;
                match c.kind {
                    CellKind::Free => built.push(CellAttachment::free(c.degree, &a, mask)),
                    CellKind::Kill => {
                        let dim = a.dim(c.degree);
                        if dim == 0 {
                            return Err(Error::HypothesisViolation(format!(
                                "no classes to kill in degree {}",
                                c.degree
                            )));
                        }
                        let mut cycle = vec![crate::qi(0); dim];
                        let nonzero = rng.gen_range(0..dim);
                        for (i, entry) in cycle.iter_mut().enumerate() {
                            let v: i64 =
                                if i == nonzero { 1 } else { rng.gen_range(-1..=1) };
                            *entry = crate::qi(v);
                        }
                        built.push(CellAttachment::kill(c.degree, &a, cycle, mask)?);
                    }
                }
            }
            Ok(Realized::Cellular(Box::new(CellularCube::new(
                s.w,
                op.clone(),
                &z,
                built,
            )?)))
        }
        FamilySpec::FreeFamily { base, edges } => {
            if edges.len() != s.w {
                return Err(Error::Config("one edge spec per direction".into()));
            }
            let b = build_spheres(base);
            let maps: Vec<ChainMap> = edges
                .iter()
                .map(|adds| {
                    let extra = build_spheres(adds);
                    let (sum, incls) = ChainComplex::direct_sum(&[&b, &extra]);
                    let _ = sum;
                    incls[0].clone()
                })
                .collect();
            let gens = pushout_chain_cube(&b, &maps)?;
            Ok(Realized::Free(Box::new(FreeCube::new(op.clone(), gens))))
        }
        FamilySpec::ChainPullback { top, fibers } => {
            if !s.operad.is_unit() {
                return Err(Error::HypothesisViolation(
                    "chain pullback families require the unit operad".into(),
                ));
            }
            if fibers.len() != s.w {
                return Err(Error::Config("one fiber spec per direction".into()));
            }
            let t = build_spheres(top);
            let maps: Vec<ChainMap> = fibers
                .iter()
                .map(|f| {
                    let extra = build_spheres(f);
                    let (sum, _) = ChainComplex::direct_sum(&[&t, &extra]);
                    let mut blocks = BTreeMap::new();
                    for &n in sum.dims().keys() {
                        if t.dim(n) == 0 {
                            continue;
                        }
                        let mut m = crate::linalg::Matrix::zero(t.dim(n), sum.dim(n));
                        for j in 0..t.dim(n) {
                            m.set(j, j, crate::qi(1));
                        }
                        blocks.insert(n, m);
                    }
                    ChainMap::new_unchecked(sum, t.clone(), blocks)
                })
                .collect();
            Ok(Realized::Pullback(Box::new(pullback_chain_cube(&t, &maps)?)))
        }
    }
}

fn min_cell_degree(s: &Scenario) -> Option<i64> {
    match &s.family {
        FamilySpec::Cellular { cells, .. } => cells.iter().map(|c| c.degree).min(),
        _ => None,
    }
}

fn check_window(s: &Scenario) -> Result<()> {
    if let (Some((_, hi)), Some(min_deg)) = (s.window, min_cell_degree(s)) {
        let cap = s.operad.cap() as i64;
        if hi >= (cap + 1) * min_deg {
            return Err(Error::HypothesisViolation(format!(
                "window top {hi} reaches the truncation horizon {}",
                (cap + 1) * min_deg
            )));
        }
    }
    Ok(())
}

/// Check one scenario: verify its hypotheses (rejecting on violation),
/// compute the predicted bound and the measured conclusion.
pub fn check_theorem(s: &Scenario) -> Result<ScenarioReport> {
    let start = Instant::now();
    let op = s.operad.build()?;
    check_window(s)?;
    if !op.is_minus_one_connected() {
        return Err(Error::HypothesisViolation("operad is not (-1)-connected".into()));
    }
    if s.w < 1 || s.w > 3 {
        return Err(Error::Config(format!("|W| = {} outside 1..=3", s.w)));
    }
    match s.theorem {
        TheoremId::T11a | TheoremId::T11b | TheoremId::T12 | TheoremId::T16 | TheoremId::T17
            if s.w != 2 => {
                return Err(Error::Config(format!("{} requires |W| = 2", s.theorem)));
            }
        _ => {}
    }
    let mut realized = build_realized(s, &op)?;
    let chain = realized.chain_cube()?;
    let full = chain.full_mask();
    // X_empty must be (-1)-connected.
    if chain.vertex(0).connectivity() < Connectivity::Finite(-1) {
        return Err(Error::HypothesisViolation(
            "initial vertex is not (-1)-connected".into(),
        ));
    }
    let mut k_v: BTreeMap<String, Connectivity> = BTreeMap::new();
    let (predicted, measured) = match s.theorem {
        TheoremId::T11a | TheoremId::T14a | TheoremId::T11b | TheoremId::T14b => {
            // Strongly infinity-cocartesian by construction: cellular cubes
            // need singleton stages; free families qualify as built.
            if let FamilySpec::Cellular { cells, .. } = &s.family {
                for c in cells {
                    if c.stage.len() != 1 {
                        return Err(Error::HypothesisViolation(
                            "higher excision needs cells at singleton stages only".into(),
                        ));
                    }
                }
            }
            if matches!(s.family, FamilySpec::ChainPullback { .. }) {
                return Err(Error::HypothesisViolation(
                    "higher excision needs a pushout-style family".into(),
                ));
            }
            let mut sum = Connectivity::Finite(0);
            for i in 0..s.w {
                let k = chain.face(0, 1 << i)?.cocartesian_degree();
                if k < Connectivity::Finite(-1) {
                    return Err(Error::HypothesisViolation(format!(
                        "edge {} has connectivity below -1",
                        i + 1
                    )));
                }
                k_v.insert(subset_label(1 << i, s.w), k);
                sum = sum.plus(k);
            }
            match s.theorem {
                TheoremId::T11a | TheoremId::T14a => {
                    (sum.plus_int(s.w as i64 - 1), chain.cocartesian_degree())
                }
                _ => (sum, chain.cartesian_degree()),
            }
        }
        TheoremId::T12 | TheoremId::T15 => {
            let mut kv_masks: BTreeMap<u8, Connectivity> = BTreeMap::new();
            for v in 1..=full {
                let k = realized.cocartesian_alg(0, v)?;
                kv_masks.insert(v, k);
                k_v.insert(subset_label(v, s.w), k);
            }
            let bound = bm_bound(s.w, &kv_masks)?;
            (bound, chain.cartesian_degree())
        }
        TheoremId::T16 | TheoremId::T19 => {
            // Strongly infinity-cartesian: every face of dimension >= 2.
            for v in 1..=full {
                for u in 0..v {
                    if u & v == u && (v & !u).count_ones() >= 2 {
                        let deg = chain.face(u, v)?.cartesian_degree();
                        if deg != Connectivity::Infinite {
                            return Err(Error::HypothesisViolation(format!(
                                "face ({u:#b}, {v:#b}) is not infinitely cartesian"
                            )));
                        }
                    }
                }
            }
            let mut sum = Connectivity::Finite(0);
            for i in 0..s.w {
                let k = chain.face(full & !(1 << i), full)?.cocartesian_degree();
                if k < Connectivity::Finite(-1) {
                    return Err(Error::HypothesisViolation(format!(
                        "top edge {} has connectivity below -1",
                        i + 1
                    )));
                }
                k_v.insert(subset_label(1 << i, s.w), k);
                sum = sum.plus(k);
            }
            (sum.plus_int(s.w as i64), realized.cocartesian_alg(0, full)?)
        }
        TheoremId::T17 | TheoremId::T111 => {
            let mut kv_masks: BTreeMap<u8, Connectivity> = BTreeMap::new();
            for v in 1..=full {
                let k = chain.face(full & !v, full)?.cartesian_degree();
                kv_masks.insert(v, k);
                k_v.insert(subset_label(v, s.w), k);
            }
            let bound = dual_bm_bound(s.w, &kv_masks)?;
            (bound, realized.cocartesian_alg(0, full)?)
        }
    };
    Ok(ScenarioReport {
        id: s.id.clone(),
        theorem: s.theorem,
        k_v,
        predicted,
        measured,
        pass: measured >= predicted,
        millis: start.elapsed().as_millis() as u64,
    })
}

/// Run a list of scenarios, optionally in parallel. Hypothesis violations
/// become rejections with a diagnostic; all other errors abort the run.
pub fn run_suite(scenarios: &[Scenario], jobs: usize) -> Result<Report> {
    let jobs = jobs.clamp(1, scenarios.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ScenarioReport>>>> =
        Mutex::new(vec![None; scenarios.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= scenarios.len() {
                    break;
                }
                let r = check_theorem(&scenarios[i]);
                results.lock().expect("no poisoned lock")[i] = Some(r);
            });
        }
    });
    let mut report = Report::default();
    for (i, r) in results.into_inner().expect("no poisoned lock").into_iter().enumerate() {
        match r.expect("every scenario ran") {
            Ok(entry) => report.scenarios.push(entry),
            Err(Error::HypothesisViolation(reason)) => {
                report.rejected.push(RejectedScenario { id: scenarios[i].id.clone(), reason })
            }
            Err(other) => return Err(other),
        }
    }
    report.scenarios.sort_by(|a, b| a.id.cmp(&b.id));
    report.rejected.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(report)
}

/// Write a report as pretty-printed JSON.
pub fn emit_report(report: &Report, path: &std::path::Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("cannot serialize report: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// The bundled suite
// ---------------------------------------------------------------------------

fn builtin_spec(name: &str, cap: usize, arity0: bool) -> OperadSpec {
    OperadSpec::Builtin { name: name.into(), cap, arity0 }
}

fn sph(degree: i64) -> SummandSpec {
    SummandSpec { degree, dim: 1 }
}

fn free_cell(degree: i64, stage: &[usize]) -> CellSpec {
    CellSpec { kind: CellKind::Free, degree, stage: stage.to_vec() }
}

fn kill_cell(degree: i64, stage: &[usize]) -> CellSpec {
    CellSpec { kind: CellKind::Kill, degree, stage: stage.to_vec() }
}

struct Catalog {
    scenarios: Vec<Scenario>,
}

impl Catalog {
    fn new() -> Catalog {
        Catalog { scenarios: Vec::new() }
    }

    #[allow(clippy::too_many_arguments)]
    fn cellular(
        &mut self,
        id: &str,
        theorem: TheoremId,
        operad: OperadSpec,
        w: usize,
        base: Vec<SummandSpec>,
        cells: Vec<CellSpec>,
        window: (i64, i64),
        seed: u64,
    ) {
        self.scenarios.push(Scenario {
            id: id.into(),
            theorem,
            operad,
            w,
            family: FamilySpec::Cellular { base, cells },
            window: Some(window),
            seed,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn free_family(
        &mut self,
        id: &str,
        theorem: TheoremId,
        operad: OperadSpec,
        base: Vec<SummandSpec>,
        edges: Vec<Vec<SummandSpec>>,
        seed: u64,
    ) {
        let w = edges.len();
        self.scenarios.push(Scenario {
            id: id.into(),
            theorem,
            operad,
            w,
            family: FamilySpec::FreeFamily { base, edges },
            window: None,
            seed,
        });
    }

    fn pullback(
        &mut self,
        id: &str,
        theorem: TheoremId,
        top: Vec<SummandSpec>,
        fibers: Vec<Vec<SummandSpec>>,
        seed: u64,
    ) {
        let w = fibers.len();
        self.scenarios.push(Scenario {
            id: id.into(),
            theorem,
            operad: builtin_spec("unit", 2, false),
            w,
            family: FamilySpec::ChainPullback { top, fibers },
            window: None,
            seed,
        });
    }
}

/// The bundled default suite: deterministic scenarios spanning every
/// theorem over the unit, commutative and associative operads, mixing
/// cellular and free families.
pub fn default_suite() -> Vec<Scenario> {
    let mut c = Catalog::new();
    let com2 = || builtin_spec("com", 2, false);
    // Pointed objects: the arity-0 representative that stays a genuine
    // operad under truncation.
    let com1z = || builtin_spec("com", 1, true);
    let com3 = || builtin_spec("com", 3, false);
    let assoc2 = || builtin_spec("assoc", 2, false);
    let unit2 = || builtin_spec("unit", 2, false);
    let unit3 = || builtin_spec("unit", 3, false);

    // Higher homotopy excision, squares (T11).
    c.cellular("t11a-com2-sharp", TheoremId::T11a, com2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2])], (-1, 5), 11);
    c.cellular("t11a-com2-deg34", TheoremId::T11a, com2(), 2, vec![],
        vec![free_cell(3, &[1]), free_cell(4, &[2])], (-1, 8), 12);
    c.cellular("t11a-assoc2", TheoremId::T11a, assoc2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(2, &[2])], (-1, 5), 13);
    c.cellular("t11a-unit2", TheoremId::T11a, unit2(), 2, vec![sph(0)],
        vec![free_cell(1, &[1]), free_cell(2, &[2])], (-1, 2), 14);
    c.cellular("t11a-com3", TheoremId::T11a, com3(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(4, &[2])], (-1, 7), 15);
    c.free_family("t11a-free-com2", TheoremId::T11a, com2(), vec![],
        vec![vec![sph(2)], vec![sph(3)]], 16);
    c.cellular("t11b-com2-sharp", TheoremId::T11b, com2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2])], (-1, 5), 21);
    c.cellular("t11b-assoc2", TheoremId::T11b, assoc2(), 2, vec![],
        vec![free_cell(3, &[1]), free_cell(3, &[2])], (-1, 5), 22);
    c.cellular("t11b-com2-deg24", TheoremId::T11b, com2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(4, &[2])], (-1, 5), 23);
    c.cellular("t11b-com1z", TheoremId::T11b, com1z(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2])], (-1, 3), 25);
    c.free_family("t11b-free-assoc2", TheoremId::T11b, assoc2(), vec![],
        vec![vec![sph(2)], vec![sph(2)]], 24);

    // Blakers-Massey squares (T12).
    c.cellular("t12-com2-top5", TheoremId::T12, com2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(5, &[1, 2])], (-1, 5), 31);
    c.cellular("t12-com2-kill", TheoremId::T12, com2(), 2, vec![sph(2)],
        vec![free_cell(3, &[1]), free_cell(4, &[2]), kill_cell(4, &[1, 2])], (-1, 5), 32);
    c.cellular("t12-assoc2", TheoremId::T12, assoc2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[1, 2])], (-1, 5), 33);
    c.cellular("t12-unit2", TheoremId::T12, unit2(), 2, vec![sph(0)],
        vec![free_cell(1, &[1]), free_cell(2, &[2]), free_cell(2, &[1, 2])], (-1, 2), 34);
    c.cellular("t12-com2-killedge", TheoremId::T12, com2(), 2, vec![sph(2)],
        vec![kill_cell(2, &[1]), free_cell(3, &[2]), free_cell(5, &[1, 2])], (-1, 5), 35);
    c.cellular("t12-com3", TheoremId::T12, com3(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(2, &[2]), free_cell(6, &[1, 2])], (-1, 7), 36);

    // Higher homotopy excision, 3-cubes (T14).
    c.cellular("t14a-com2", TheoremId::T14a, com2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3])], (-1, 5), 41);
    c.cellular("t14a-assoc2", TheoremId::T14a, assoc2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(2, &[2]), free_cell(3, &[3])], (-1, 5), 42);
    c.cellular("t14a-unit3", TheoremId::T14a, unit3(), 3, vec![sph(0)],
        vec![free_cell(1, &[1]), free_cell(2, &[2]), free_cell(3, &[3])], (-1, 2), 43);
    c.free_family("t14a-free-com2", TheoremId::T14a, com2(), vec![],
        vec![vec![sph(2)], vec![sph(3)], vec![sph(4)]], 44);
    c.cellular("t14b-com2", TheoremId::T14b, com2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(3, &[3])], (-1, 5), 45);
    c.cellular("t14b-unit3", TheoremId::T14b, unit3(), 3, vec![sph(0)],
        vec![free_cell(1, &[1]), free_cell(1, &[2]), free_cell(2, &[3])], (-1, 2), 46);
    c.free_family("t14b-free-com2", TheoremId::T14b, com2(), vec![],
        vec![vec![sph(2)], vec![sph(2)], vec![sph(3)]], 47);
    c.cellular("t14b-assoc2", TheoremId::T14b, assoc2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3])], (-1, 5), 48);

    // Higher Blakers-Massey, 3-cubes (T15).
    c.cellular("t15-com2-a", TheoremId::T15, com2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(6, &[1, 2])], (-1, 5), 51);
    c.cellular("t15-com2-b", TheoremId::T15, com2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(3, &[3]),
             free_cell(5, &[1, 2]), free_cell(5, &[1, 3]), free_cell(5, &[2, 3]),
             free_cell(7, &[1, 2, 3])], (-1, 5), 52);
    c.cellular("t15-assoc2", TheoremId::T15, assoc2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(2, &[2]), free_cell(3, &[3]),
             free_cell(5, &[2, 3])], (-1, 5), 53);
    c.cellular("t15-unit3", TheoremId::T15, unit3(), 3, vec![sph(0)],
        vec![free_cell(1, &[1]), free_cell(2, &[2]), free_cell(2, &[3]),
             free_cell(3, &[1, 2]), free_cell(3, &[1, 3]), free_cell(3, &[2, 3]),
             free_cell(4, &[1, 2, 3])], (-1, 2), 54);
    c.cellular("t15-com3", TheoremId::T15, com3(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(6, &[1, 2]), free_cell(6, &[1, 3]), free_cell(6, &[2, 3]),
             free_cell(7, &[1, 2, 3])], (-1, 7), 55);
    c.cellular("t15-com2-kill", TheoremId::T15, com2(), 3, vec![sph(2)],
        vec![kill_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(6, &[2, 3])], (-1, 5), 56);
    c.cellular("t15-assoc2-top", TheoremId::T15, assoc2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(6, &[1, 2])], (-1, 5), 57);
    c.cellular("t15-com2-c", TheoremId::T15, com2(), 3, vec![],
        vec![free_cell(3, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(6, &[1, 2]), free_cell(6, &[1, 3]), free_cell(6, &[2, 3]),
             free_cell(8, &[1, 2, 3])], (-1, 5), 58);

    // Dual homotopy excision, pullback squares (T16).
    c.pullback("t16-unit-a", TheoremId::T16, vec![sph(1)],
        vec![vec![sph(2)], vec![sph(3)]], 61);
    c.pullback("t16-unit-b", TheoremId::T16, vec![sph(0), sph(2)],
        vec![vec![sph(1)], vec![sph(2)]], 62);
    c.pullback("t16-unit-c", TheoremId::T16, vec![sph(2)],
        vec![vec![sph(1), sph(3)], vec![sph(2)]], 63);
    c.cellular("t16-com2-degenerate", TheoremId::T16, com2(), 2, vec![],
        vec![free_cell(2, &[1])], (-1, 5), 64);

    // Dual Blakers-Massey squares (T17).
    c.cellular("t17-com2-top", TheoremId::T17, com2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(5, &[1, 2])], (-1, 5), 71);
    c.cellular("t17-com2-kill", TheoremId::T17, com2(), 2, vec![sph(2)],
        vec![free_cell(3, &[1]), free_cell(4, &[2]), kill_cell(4, &[1, 2])], (-1, 5), 72);
    c.cellular("t17-assoc2", TheoremId::T17, assoc2(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[1, 2])], (-1, 5), 73);
    c.cellular("t17-unit2", TheoremId::T17, unit2(), 2, vec![sph(0)],
        vec![free_cell(1, &[1]), free_cell(2, &[2]), free_cell(3, &[1, 2])], (-1, 2), 74);
    c.cellular("t17-com3", TheoremId::T17, com3(), 2, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(6, &[1, 2])], (-1, 7), 75);
    c.cellular("t17-com2-deep", TheoremId::T17, com2(), 2, vec![],
        vec![free_cell(3, &[1]), free_cell(4, &[2]), free_cell(6, &[1, 2])], (-1, 8), 76);

    // Higher dual homotopy excision (T19).
    c.pullback("t19-unit-2cube", TheoremId::T19, vec![sph(1)],
        vec![vec![sph(2)], vec![sph(2)]], 81);
    c.pullback("t19-unit-3cube-a", TheoremId::T19, vec![sph(1)],
        vec![vec![sph(2)], vec![sph(3)], vec![sph(3)]], 82);
    c.pullback("t19-unit-3cube-b", TheoremId::T19, vec![sph(0), sph(1)],
        vec![vec![sph(1)], vec![sph(2)], vec![sph(2)]], 83);
    c.cellular("t19-com2-degenerate", TheoremId::T19, com2(), 3, vec![],
        vec![free_cell(2, &[1])], (-1, 5), 84);

    // Higher dual Blakers-Massey, 3-cubes (T111).
    c.cellular("t111-com2-a", TheoremId::T111, com2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(6, &[1, 2])], (-1, 5), 91);
    c.cellular("t111-com2-b", TheoremId::T111, com2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(3, &[3]),
             free_cell(5, &[1, 2]), free_cell(5, &[1, 3]), free_cell(5, &[2, 3]),
             free_cell(6, &[1, 2, 3])], (-1, 5), 92);
    c.cellular("t111-assoc2", TheoremId::T111, assoc2(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(2, &[2]), free_cell(3, &[3]),
             free_cell(5, &[2, 3])], (-1, 5), 93);
    c.cellular("t111-unit3", TheoremId::T111, unit3(), 3, vec![sph(0)],
        vec![free_cell(1, &[1]), free_cell(2, &[2]), free_cell(2, &[3]),
             free_cell(3, &[1, 2]), free_cell(3, &[1, 3]), free_cell(3, &[2, 3]),
             free_cell(4, &[1, 2, 3])], (-1, 2), 94);
    c.cellular("t111-com3", TheoremId::T111, com3(), 3, vec![],
        vec![free_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(7, &[1, 2])], (-1, 7), 95);
    c.cellular("t111-com2-kill", TheoremId::T111, com2(), 3, vec![sph(2)],
        vec![kill_cell(2, &[1]), free_cell(3, &[2]), free_cell(4, &[3]),
             free_cell(6, &[1, 3])], (-1, 5), 96);

    c.scenarios
}

/// Human-readable one-off demonstrations for the command line.
pub fn demo(which: &str) -> Result<String> {
    use std::fmt::Write as _;
    let mut out = String::new();
    let run = |id: &str| -> Result<ScenarioReport> {
        let suite = default_suite();
        let s = suite.iter().find(|s| s.id == id).expect("demo scenario exists");
        check_theorem(s)
    };
    match which {
        "excision" => {
            let r = run("t11a-com2-sharp")?;
            writeln!(out, "homotopy excision on the sharp pushout square").unwrap();
            writeln!(out, "  operad com(2), cells: spheres in degrees 2 and 3").unwrap();
            for (k, v) in &r.k_v {
                writeln!(out, "  edge {{{k}}} is {v}-connected").unwrap();
            }
            writeln!(out, "  predicted cocartesian degree >= {}", r.predicted).unwrap();
            writeln!(out, "  measured  cocartesian degree  = {}", r.measured).unwrap();
            writeln!(out, "  verdict: {}", if r.pass { "pass" } else { "FAIL" }).unwrap();
        }
        "blakers-massey" => {
            let r = run("t15-com2-b")?;
            writeln!(out, "higher Blakers-Massey on a 3-cube with higher cells").unwrap();
            for (k, v) in &r.k_v {
                writeln!(out, "  face at {{{k}}} is {v}-cocartesian in algebras").unwrap();
            }
            writeln!(out, "  partition-minimum bound: {}", r.predicted).unwrap();
            writeln!(out, "  measured cartesian degree: {}", r.measured).unwrap();
            writeln!(out, "  verdict: {}", if r.pass { "pass" } else { "FAIL" }).unwrap();
        }
        "dual" => {
            let r = run("t17-com2-kill")?;
            writeln!(out, "dual Blakers-Massey on a square with a killing top cell").unwrap();
            for (k, v) in &r.k_v {
                writeln!(out, "  face opposite {{{k}}} is {v}-cartesian").unwrap();
            }
            writeln!(out, "  dual bound: {}", r.predicted).unwrap();
            writeln!(out, "  measured cocartesian degree in algebras: {}", r.measured).unwrap();
            writeln!(out, "  verdict: {}", if r.pass { "pass" } else { "FAIL" }).unwrap();
        }
        other => return Err(Error::Config(format!("unknown demo `{other}`"))),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin(n: i64) -> Connectivity {
        Connectivity::Finite(n)
    }

    #[test]
    fn partition_counts_are_bell_numbers() {
        assert_eq!(partitions(1).len(), 1);
        assert_eq!(partitions(2).len(), 2);
        assert_eq!(partitions(3).len(), 5);
        assert_eq!(partitions(4).len(), 15);
    }

    #[test]
    fn bm_bound_examples() {
        // |W| = 3 with k_123 = 5, k_ij = 2, k_i = 1: values 3,2,2,2,3.
        let mut kv = BTreeMap::new();
        for v in 1..=7u8 {
            let k = match v.count_ones() {
                1 => 1,
                2 => 2,
                _ => 5,
            };
            kv.insert(v, fin(k));
        }
        assert_eq!(bm_bound(3, &kv).unwrap(), fin(2));
        // All infinite stays infinite.
        let kv: BTreeMap<u8, Connectivity> =
            (1..=7u8).map(|v| (v, Connectivity::Infinite)).collect();
        assert_eq!(bm_bound(3, &kv).unwrap(), Connectivity::Infinite);
        // |W| = 2 reduces to min(k12 - 1, k1 + k2).
        let kv = BTreeMap::from([(1u8, fin(1)), (2u8, fin(2)), (3u8, fin(4))]);
        assert_eq!(bm_bound(2, &kv).unwrap(), fin(3));
    }

    #[test]
    fn dual_bound_examples() {
        // |W| = 2: min(k12 + 1, k1 + k2 + 2).
        let kv = BTreeMap::from([(1u8, fin(0)), (2u8, fin(1)), (3u8, fin(3))]);
        assert_eq!(dual_bm_bound(2, &kv).unwrap(), fin(3));
        // Degenerate k_i = -1.
        let kv = BTreeMap::from([(1u8, fin(-1)), (2u8, fin(-1)), (3u8, fin(2))]);
        assert_eq!(dual_bm_bound(2, &kv).unwrap(), fin(0));
        // All proper estimates infinite.
        let kv: BTreeMap<u8, Connectivity> =
            (1..=3u8).map(|v| (v, Connectivity::Infinite)).collect();
        assert_eq!(dual_bm_bound(2, &kv).unwrap(), Connectivity::Infinite);
    }

    #[test]
    fn bounds_reject_bad_hypotheses() {
        // Non-monotone.
        let kv = BTreeMap::from([(1u8, fin(3)), (2u8, fin(1)), (3u8, fin(2))]);
        assert!(matches!(bm_bound(2, &kv), Err(Error::HypothesisViolation(_))));
        // Below -1.
        let kv = BTreeMap::from([(1u8, fin(-2)), (2u8, fin(1)), (3u8, fin(2))]);
        assert!(matches!(dual_bm_bound(2, &kv), Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn bounds_are_monotone_in_each_estimate() {
        let base = BTreeMap::from([(1u8, fin(1)), (2u8, fin(2)), (3u8, fin(3))]);
        let b0 = bm_bound(2, &base).unwrap();
        let d0 = dual_bm_bound(2, &base).unwrap();
        for bump in 1..=3u8 {
            let mut kv = base.clone();
            kv.insert(bump, kv[&bump].plus_int(1));
            if validate_kv(2, &kv).is_ok() {
                assert!(bm_bound(2, &kv).unwrap() >= b0);
                assert!(dual_bm_bound(2, &kv).unwrap() >= d0);
            }
        }
    }

    #[test]
    fn sharp_excision_scenario() {
        let suite = default_suite();
        let sharp = suite.iter().find(|s| s.id == "t11a-com2-sharp").unwrap();
        let r = check_theorem(sharp).unwrap();
        assert!(r.pass);
        assert_eq!(r.measured, fin(4));
        assert_eq!(r.predicted, fin(4));
        let sharp_b = suite.iter().find(|s| s.id == "t11b-com2-sharp").unwrap();
        let r = check_theorem(sharp_b).unwrap();
        assert_eq!(r.measured, fin(3));
        assert_eq!(r.predicted, fin(3));
    }

    #[test]
    fn suite_covers_every_theorem() {
        let suite = default_suite();
        assert!(suite.len() >= 50, "suite has {} scenarios", suite.len());
        for t in [
            TheoremId::T11a, TheoremId::T11b, TheoremId::T12, TheoremId::T14a,
            TheoremId::T14b, TheoremId::T15, TheoremId::T16, TheoremId::T17,
            TheoremId::T19, TheoremId::T111,
        ] {
            assert!(suite.iter().any(|s| s.theorem == t), "no scenario for {t}");
        }
        let mut ids: Vec<&str> = suite.iter().map(|s| s.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), suite.len(), "scenario ids must be unique");
    }

    #[test]
    fn scenario_json_roundtrip() {
        let suite = default_suite();
        let text = serde_json::to_string_pretty(&suite).unwrap();
        let back: Vec<Scenario> = serde_json::from_str(&text).unwrap();
        assert_eq!(back.len(), suite.len());
        let r1 = check_theorem(&suite[0]).unwrap();
        let r2 = check_theorem(&back[0]).unwrap();
        assert_eq!(r1.measured, r2.measured);
    }

    #[test]
    fn empty_suite_is_success() {
        let report = run_suite(&[], 2).unwrap();
        assert!(report.scenarios.is_empty());
        assert!(report.all_pass());
    }

    #[test]
    fn window_violation_rejects() {
        let mut c = Catalog::new();
        c.cellular("bad-window", TheoremId::T11a, builtin_spec("com", 2, false), 2,
            vec![], vec![free_cell(2, &[1]), free_cell(2, &[2])], (-1, 6), 1);
        let report = run_suite(&c.scenarios, 1).unwrap();
        assert!(report.scenarios.is_empty());
        assert_eq!(report.rejected.len(), 1);
    }

    #[test]
    fn demo_outputs() {
        for which in ["excision", "blakers-massey", "dual"] {
            let text = demo(which).unwrap();
            assert!(text.contains("pass"), "{which}: {text}");
        }
        assert!(demo("nope").is_err());
    }
}
