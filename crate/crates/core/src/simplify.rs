//! Greedy pair contraction driven by quadric cost.
//!
//! Candidate pairs are the mesh edges plus any vertex pair closer than the
//! pair threshold. The cheapest live pair is contracted into a fresh vertex
//! until the face budget is met; every contraction is logged so it can be
//! replayed or turned into a vertex tree.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::mesh::{Adjacency, Mesh};
use crate::quadric::{vertex_quadric, Quadric};
use crate::Vec3;

/// Non-edge pairs allowed per vertex before [`select_pairs`] gives up.
pub const PAIR_CAP_PER_VERTEX: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimplifyError {
    #[error("pair threshold {0} selects too many non-edge pairs ({1} for {2} vertices)")]
    PairExplosion(f64, usize, usize),
    #[error("vertex {0} is not alive")]
    DeadVertex(usize),
    #[error("cannot contract vertex {0} with itself")]
    SelfPair(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("ran out of pairs at {faces} faces (target {target})")]
    TargetUnreachable { faces: usize, target: usize },
    #[error("log record {index}: {reason}")]
    InconsistentLog { index: usize, reason: String },
    #[error("log line {line}: {message}")]
    LogParse { line: usize, message: String },
}

/// How the merged vertex is positioned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    /// Quadric minimizer, falling back to the best of endpoints and midpoint.
    #[default]
    Optimal,
    /// Best of `v1`, `v2`, midpoint only.
    Subset,
    /// Always the midpoint.
    Midpoint,
}

impl Placement {
    pub fn place(self, q: &Quadric, v1: &Vec3, v2: &Vec3) -> (Vec3, f64) {
        match self {
            Placement::Optimal => q.placement(v1, v2),
            Placement::Subset => q.best_of_subset(v1, v2),
            Placement::Midpoint => {
                let m = (v1 + v2) * 0.5;
                (m, q.eval(&m))
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Optimal => "optimal",
            Placement::Subset => "subset",
            Placement::Midpoint => "midpoint",
        }
    }
}

impl FromStr for Placement {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimal" => Ok(Placement::Optimal),
            "subset" | "subset-only" => Ok(Placement::Subset),
            "midpoint" => Ok(Placement::Midpoint),
            other => Err(format!("unknown placement {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplifyConfig {
    pub target_faces: usize,
    /// Non-edge pairs closer than this are candidates; 0 disables them.
    pub pair_threshold: f64,
    pub placement: Placement,
}

impl SimplifyConfig {
    pub fn new(target_faces: usize) -> Self {
        Self {
            target_faces,
            pair_threshold: 0.0,
            placement: Placement::Optimal,
        }
    }

    pub fn validate(&self) -> Result<(), SimplifyError> {
        if !(self.pair_threshold >= 0.0) {
            return Err(SimplifyError::InvalidConfig(format!(
                "pair threshold must be non-negative, got {}",
                self.pair_threshold
            )));
        }
        Ok(())
    }
}

/// One merge: `removed_a` and `removed_b` were replaced by `created`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRecord {
    pub removed_a: usize,
    pub removed_b: usize,
    pub created: usize,
    pub position: Vec3,
    pub cost: f64,
    /// Faces that lost a distinct corner. The text log does not carry this;
    /// [`replay`] recomputes it.
    pub faces_removed: Vec<usize>,
    pub was_edge: bool,
}

/// Edges of `mesh` plus every other vertex pair closer than `threshold`,
/// canonical `(i, j)` with `i < j`, sorted.
pub fn select_pairs(mesh: &Mesh, adj: &Adjacency, threshold: f64) -> Result<Vec<(usize, usize)>, SimplifyError> {
    let mut pairs: Vec<(usize, usize)> = adj.edges().to_vec();
    if threshold > 0.0 {
        let n = mesh.positions.len();
        let cap = PAIR_CAP_PER_VERTEX * n;
        let mut extra = Vec::new();
        let consider = |i: usize, j: usize, extra: &mut Vec<(usize, usize)>| {
            let (i, j) = (i.min(j), i.max(j));
            if (mesh.positions[i] - mesh.positions[j]).norm() < threshold && !adj.has_edge(i, j) {
                extra.push((i, j));
            }
            extra.len() <= cap
        };
        let within_cap = if threshold.is_finite() {
            let cell = |p: &Vec3| -> [i64; 3] {
                [
                    (p.x / threshold).floor() as i64,
                    (p.y / threshold).floor() as i64,
                    (p.z / threshold).floor() as i64,
                ]
            };
            let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
            for (i, p) in mesh.positions.iter().enumerate() {
                grid.entry(cell(p)).or_default().push(i);
            }
            let mut ok = true;
            'outer: for (i, p) in mesh.positions.iter().enumerate() {
                let c = cell(p);
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                            let Some(bucket) = grid.get(&key) else { continue };
                            for &j in bucket.iter().filter(|&&j| j > i) {
                                if !consider(i, j, &mut extra) {
                                    ok = false;
                                    break 'outer;
                                }
                            }
                        }
                    }
                }
            }
            ok
        } else {
            (0..n).all(|i| (i + 1..n).all(|j| consider(i, j, &mut extra)))
        };
        if !within_cap {
            return Err(SimplifyError::PairExplosion(threshold, extra.len(), n));
        }
        pairs.extend(extra);
        pairs.sort_unstable();
        pairs.dedup();
    }
    Ok(pairs)
}

/// Mutable contraction state over a cleaned copy of a mesh. Vertex ids are
/// never reused: the vertex created by the `k`-th contraction gets id
/// `original_vertex_count + k`.
#[derive(Debug, Clone)]
pub struct Contractor {
    positions: Vec<Vec3>,
    quadrics: Vec<Quadric>,
    alive: Vec<bool>,
    generation: Vec<u32>,
    faces: Vec<[usize; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<usize>>,
    partners: Vec<Vec<usize>>,
    live_faces: usize,
    live_vertices: usize,
}

impl Contractor {
    /// Starts from `mesh.cleanup()` with quadrics of the cleaned faces and no
    /// candidate pairs.
    pub fn new(mesh: &Mesh) -> Self {
        let mesh = mesh.cleanup();
        let adj = mesh.adjacency();
        let n = mesh.positions.len();
        let quadrics = (0..n).map(|i| vertex_quadric(&mesh, &adj, i)).collect();
        let vertex_faces = (0..n).map(|i| adj.faces_of(i).to_vec()).collect();
        Self {
            positions: mesh.positions,
            quadrics,
            alive: vec![true; n],
            generation: vec![0; n],
            face_alive: vec![true; mesh.faces.len()],
            live_faces: mesh.faces.len(),
            faces: mesh.faces,
            vertex_faces,
            partners: vec![Vec::new(); n],
            live_vertices: n,
        }
    }

    pub fn set_pairs(&mut self, pairs: &[(usize, usize)]) {
        for p in self.partners.iter_mut() {
            p.clear();
        }
        for &(i, j) in pairs {
            self.partners[i].push(j);
            self.partners[j].push(i);
        }
        for p in self.partners.iter_mut() {
            p.sort_unstable();
            p.dedup();
        }
    }

    pub fn is_alive(&self, v: usize) -> bool {
        self.alive.get(v).copied().unwrap_or(false)
    }

    pub fn generation(&self, v: usize) -> u32 {
        self.generation[v]
    }

    pub fn position(&self, v: usize) -> Vec3 {
        self.positions[v]
    }

    pub fn quadric(&self, v: usize) -> &Quadric {
        &self.quadrics[v]
    }

    pub fn live_face_count(&self) -> usize {
        self.live_faces
    }

    pub fn live_vertex_count(&self) -> usize {
        self.live_vertices
    }

    /// Id the next contraction will allocate.
    pub fn next_id(&self) -> usize {
        self.positions.len()
    }

    pub fn partners(&self, v: usize) -> &[usize] {
        &self.partners[v]
    }

    /// Live candidate pairs, canonical and sorted.
    pub fn live_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.partners.len())
            .filter(|&i| self.alive[i])
            .flat_map(|i| self.partners[i].iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    pub fn pair_cost(&self, i: usize, j: usize, placement: Placement) -> (Vec3, f64) {
        let (i, j) = (i.min(j), i.max(j));
        let q = self.quadrics[i] + self.quadrics[j];
        placement.place(&q, &self.positions[i], &self.positions[j])
    }

    /// Whether some live face currently contains both vertices.
    pub fn shares_face(&self, i: usize, j: usize) -> bool {
        self.vertex_faces[i].iter().any(|&f| self.faces[f].contains(&j))
    }

    /// Merges `i` and `j` into a fresh vertex at `position`.
    pub fn contract(&mut self, i: usize, j: usize, position: Vec3) -> Result<ContractionRecord, SimplifyError> {
        for v in [i, j] {
            if !self.is_alive(v) {
                return Err(SimplifyError::DeadVertex(v));
            }
        }
        if i == j {
            return Err(SimplifyError::SelfPair(i));
        }
        let (a, b) = (i.min(j), i.max(j));
        let k = self.positions.len();
        let was_edge = self.shares_face(a, b);
        let quadric = self.quadrics[a] + self.quadrics[b];
        let cost = quadric.eval(&position);

        self.positions.push(position);
        self.quadrics.push(quadric);
        self.alive.push(true);
        self.generation.push(0);
        for v in [a, b] {
            self.alive[v] = false;
            self.generation[v] += 1;
        }
        self.live_vertices -= 1;

        let mut touched: Vec<usize> = self.vertex_faces[a]
            .iter()
            .chain(&self.vertex_faces[b])
            .copied()
            .collect();
        touched.sort_unstable();
        touched.dedup();
        self.vertex_faces[a].clear();
        self.vertex_faces[b].clear();

        let mut faces_removed = Vec::new();
        let mut kept = Vec::new();
        for f in touched {
            let face = &mut self.faces[f];
            for c in face.iter_mut() {
                if *c == a || *c == b {
                    *c = k;
                }
            }
            let face = *face;
            let degenerate = face[0] == face[1] || face[1] == face[2] || face[0] == face[2];
            if !degenerate {
                kept.push(f);
                continue;
            }
            faces_removed.push(f);
            self.face_alive[f] = false;
            self.live_faces -= 1;
            for &c in face.iter().filter(|&&c| c != k) {
                self.vertex_faces[c].retain(|&g| g != f);
            }
        }
        self.vertex_faces.push(kept);

        let mut merged: Vec<usize> = self.partners[a]
            .iter()
            .chain(&self.partners[b])
            .copied()
            .filter(|&p| p != a && p != b)
            .collect();
        merged.sort_unstable();
        merged.dedup();
        for &p in &merged {
            let list = &mut self.partners[p];
            list.retain(|&x| x != a && x != b);
            list.push(k);
        }
        self.partners[a].clear();
        self.partners[b].clear();
        self.partners.push(merged);

        Ok(ContractionRecord {
            removed_a: a,
            removed_b: b,
            created: k,
            position,
            cost,
            faces_removed,
            was_edge,
        })
    }

    /// Live vertices in ascending id order and live faces in original order,
    /// reindexed.
    pub fn mesh(&self) -> Mesh {
        let mut remap = vec![usize::MAX; self.positions.len()];
        let mut positions = Vec::with_capacity(self.live_vertices);
        for (v, p) in self.positions.iter().enumerate() {
            if self.alive[v] {
                remap[v] = positions.len();
                positions.push(*p);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| f.map(|c| remap[c]))
            .collect();
        Mesh { positions, faces }
    }

    /// Live faces by vertex id (not reindexed), in original order.
    pub fn live_faces(&self) -> Vec<[usize; 3]> {
        self.faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| *f)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    i: usize,
    j: usize,
    target: Vec3,
    stamp_i: u32,
    stamp_j: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.i.cmp(&other.i))
            .then(self.j.cmp(&other.j))
    }
}

/// Contraction driver: a [`Contractor`] plus a lazily pruned min-heap of
/// candidate pairs keyed by `(cost, i, j)`.
#[derive(Debug)]
pub struct Simplifier {
    state: Contractor,
    heap: BinaryHeap<Reverse<Candidate>>,
    placement: Placement,
    log: Vec<ContractionRecord>,
}

impl Simplifier {
    pub fn new(mesh: &Mesh, cfg: &SimplifyConfig) -> Result<Self, SimplifyError> {
        cfg.validate()?;
        let mut state = Contractor::new(mesh);
        let cleaned = state.mesh();
        let pairs = select_pairs(&cleaned, &cleaned.adjacency(), cfg.pair_threshold)?;
        state.set_pairs(&pairs);
        let mut s = Self {
            state,
            heap: BinaryHeap::with_capacity(pairs.len()),
            placement: cfg.placement,
            log: Vec::new(),
        };
        for (i, j) in pairs {
            s.push(i, j);
        }
        Ok(s)
    }

    fn push(&mut self, i: usize, j: usize) {
        let (i, j) = (i.min(j), i.max(j));
        let (target, cost) = self.state.pair_cost(i, j, self.placement);
        self.heap.push(Reverse(Candidate {
            cost,
            i,
            j,
            target,
            stamp_i: self.state.generation(i),
            stamp_j: self.state.generation(j),
        }));
    }

    pub fn state(&self) -> &Contractor {
        &self.state
    }

    pub fn log(&self) -> &[ContractionRecord] {
        &self.log
    }

    /// Next pair to contract, after discarding stale heap entries.
    pub fn peek(&mut self) -> Option<(usize, usize, Vec3, f64)> {
        while let Some(Reverse(c)) = self.heap.peek() {
            let fresh = self.state.is_alive(c.i)
                && self.state.is_alive(c.j)
                && self.state.generation(c.i) == c.stamp_i
                && self.state.generation(c.j) == c.stamp_j;
            if fresh {
                return Some((c.i, c.j, c.target, c.cost));
            }
            self.heap.pop();
        }
        None
    }

    /// Contracts the cheapest live pair. `None` when no pairs remain.
    pub fn step(&mut self) -> Option<&ContractionRecord> {
        let (i, j, target, _) = self.peek()?;
        self.heap.pop();
        let record = self
            .state
            .contract(i, j, target)
            .expect("heap entries reference live vertices");
        let k = record.created;
        self.log.push(record);
        let partners = self.state.partners(k).to_vec();
        for p in partners {
            self.push(p, k);
        }
        self.log.last()
    }

    pub fn finish(self, target: usize) -> Simplified {
        Simplified {
            mesh: self.state.mesh(),
            target_reached: self.state.live_face_count() <= target,
            log: self.log,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simplified {
    pub mesh: Mesh,
    pub log: Vec<ContractionRecord>,
    pub target_reached: bool,
}

impl Simplified {
    pub fn total_cost(&self) -> f64 {
        self.log.iter().map(|r| r.cost).sum()
    }

    /// `TargetUnreachable` when pairs ran out above the face target.
    pub fn shortfall(&self, target: usize) -> Option<SimplifyError> {
        (!self.target_reached).then(|| SimplifyError::TargetUnreachable {
            faces: self.mesh.face_count(),
            target,
        })
    }
}

/// Greedily contracts the cheapest candidate pair until at most
/// `cfg.target_faces` faces remain or candidates run out (reported through
/// [`Simplified::target_reached`], with the best mesh achieved).
pub fn simplify(mesh: &Mesh, cfg: &SimplifyConfig) -> Result<Simplified, SimplifyError> {
    cfg.validate()?;
    if mesh.cleanup().face_count() <= cfg.target_faces {
        return Ok(Simplified {
            mesh: mesh.cleanup(),
            log: Vec::new(),
            target_reached: true,
        });
    }
    let mut s = Simplifier::new(mesh, cfg)?;
    while s.state().live_face_count() > cfg.target_faces {
        if s.step().is_none() {
            break;
        }
    }
    Ok(s.finish(cfg.target_faces))
}

/// Contracts candidate pairs until none remain, ignoring the face target.
/// On a connected mesh this yields a single-rooted hierarchy.
pub fn simplify_fully(mesh: &Mesh, cfg: &SimplifyConfig) -> Result<Simplified, SimplifyError> {
    let mut s = Simplifier::new(mesh, cfg)?;
    while s.step().is_some() {}
    Ok(s.finish(cfg.target_faces))
}

/// Re-applies `log` to `mesh`, returning the resulting mesh and fully
/// populated records.
pub fn replay(mesh: &Mesh, log: &[ContractionRecord]) -> Result<(Mesh, Vec<ContractionRecord>), SimplifyError> {
    let mut state = Contractor::new(mesh);
    let mut out = Vec::with_capacity(log.len());
    for (index, r) in log.iter().enumerate() {
        let inconsistent = |reason: String| SimplifyError::InconsistentLog { index, reason };
        if r.created != state.next_id() {
            return Err(inconsistent(format!(
                "creates id {} but the next fresh id is {}",
                r.created,
                state.next_id()
            )));
        }
        if !r.position.iter().all(|c| c.is_finite()) {
            return Err(inconsistent("non-finite position".into()));
        }
        let rec = state
            .contract(r.removed_a, r.removed_b, r.position)
            .map_err(|e| inconsistent(e.to_string()))?;
        out.push(rec);
    }
    Ok((state.mesh(), out))
}

/// Text form, one `C a b k x y z cost` line per record.
pub fn write_log(log: &[ContractionRecord]) -> String {
    let mut out = String::with_capacity(log.len() * 64);
    for r in log {
        let p = r.position;
        let _ = writeln!(
            out,
            "C {} {} {} {} {} {} {}",
            r.removed_a, r.removed_b, r.created, p.x, p.y, p.z, r.cost
        );
    }
    out
}

/// Parses the text log. Face bookkeeping fields come back empty.
pub fn read_log(text: &str) -> Result<Vec<ContractionRecord>, SimplifyError> {
    let mut log = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| SimplifyError::LogParse { line, message };
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 8 || tokens[0] != "C" {
            return Err(err(format!("expected `C a b k x y z cost`, got {content:?}")));
        }
        let id = |t: &str| t.parse::<usize>().map_err(|_| err(format!("bad id {t:?}")));
        let num = |t: &str| t.parse::<f64>().map_err(|_| err(format!("bad number {t:?}")));
        log.push(ContractionRecord {
            removed_a: id(tokens[1])?,
            removed_b: id(tokens[2])?,
            created: id(tokens[3])?,
            position: Vec3::new(num(tokens[4])?, num(tokens[5])?, num(tokens[6])?),
            cost: num(tokens[7])?,
            faces_removed: Vec::new(),
            was_edge: false,
        });
    }
    Ok(log)
}
