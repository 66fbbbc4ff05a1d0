//! View-dependent refinement of an active front through a vertex tree.
//!
//! Each frame the active nodes are visited once: internal nodes whose
//! projected error radius exceeds the pixel tolerance split into their
//! children, sibling pairs whose parent projects well under the tolerance
//! merge back. Nodes whose normal cone straddles the view-perpendicular
//! directions (silhouette candidates) use the tighter silhouette tolerance.

use std::collections::{BTreeSet, HashSet};
use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::sorted_triple;
use crate::tree::{angle_between, VertexNode, VertexTree};
use crate::Vec3;

/// Near-plane distance used when a camera path does not specify one.
pub const DEFAULT_NEAR: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ViewError {
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("invalid adaptation parameters: {0}")]
    Params(String),
    #[error("invalid front: {0}")]
    Front(String),
    #[error("camera path: {0}")]
    Path(String),
}

/// Pinhole camera with a vertical field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub eye: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub fov_y: f64,
    pub viewport_height: f64,
    pub near: f64,
}

impl Camera {
    pub fn new(
        eye: Vec3,
        forward: Vec3,
        up: Vec3,
        fov_y: f64,
        viewport_height: f64,
        near: f64,
    ) -> Result<Self, ViewError> {
        let cam = Camera {
            eye,
            forward,
            up,
            fov_y,
            viewport_height,
            near,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Orthonormalizes `up` against the direction to `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_y: f64, viewport_height: f64) -> Result<Self, ViewError> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| ViewError::Camera("eye coincides with target".into()))?;
        let up = (up - forward * forward.dot(&up))
            .try_normalize(1e-12)
            .ok_or_else(|| ViewError::Camera("up is parallel to the view direction".into()))?;
        Camera::new(eye, forward, up, fov_y, viewport_height, DEFAULT_NEAR)
    }

    pub fn validate(&self) -> Result<(), ViewError> {
        let bad = |m: &str| Err(ViewError::Camera(m.into()));
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !finite(&self.eye) || !finite(&self.forward) || !finite(&self.up) {
            return bad("non-finite vector");
        }
        if (self.forward.norm() - 1.0).abs() > 1e-9 || (self.up.norm() - 1.0).abs() > 1e-9 {
            return bad("forward and up must be unit vectors");
        }
        if self.forward.dot(&self.up).abs() > 1e-9 {
            return bad("forward and up must be orthogonal");
        }
        if !(self.fov_y > 0.0 && self.fov_y < PI) {
            return bad("fov_y must be in (0, π)");
        }
        if !(self.viewport_height > 0.0 && self.viewport_height.is_finite()) {
            return bad("viewport height must be positive");
        }
        if !(self.near > 0.0 && self.near.is_finite()) {
            return bad("near distance must be positive");
        }
        Ok(())
    }

    /// Pixels per unit length at unit depth.
    pub fn focal_pixels(&self) -> f64 {
        self.viewport_height / (2.0 * (self.fov_y / 2.0).tan())
    }

    /// View-space depth along `forward`.
    pub fn depth(&self, p: &Vec3) -> f64 {
        (p - self.eye).dot(&self.forward)
    }

    /// Pixel offset from the image centre, `None` behind the near plane.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        let rel = p - self.eye;
        let z = rel.dot(&self.forward);
        if z <= self.near {
            return None;
        }
        let right = self.forward.cross(&self.up);
        let f = self.focal_pixels();
        Some((f * rel.dot(&right) / z, f * rel.dot(&self.up) / z))
    }
}

/// Projected error radius of `node` in pixels; `+∞` when its error sphere
/// reaches the near plane. Zero-radius nodes always project to zero.
pub fn screen_space_error(node: &VertexNode, cam: &Camera) -> f64 {
    let r = node.error_radius;
    if r == 0.0 {
        return 0.0;
    }
    let depth = cam.depth(&node.position);
    if depth - r <= cam.near {
        return f64::INFINITY;
    }
    r * cam.focal_pixels() / depth.max(cam.near)
}

/// True when the node's normal cone contains a direction perpendicular to
/// the view ray through the node.
pub fn is_silhouette(node: &VertexNode, cam: &Camera) -> bool {
    if node.cone_angle >= PI {
        return true;
    }
    let Some(w) = (node.position - cam.eye).try_normalize(0.0) else {
        return true;
    };
    let theta = angle_between(&node.cone_axis, &w);
    (theta - FRAC_PI_2).abs() <= node.cone_angle
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptParams {
    /// Split threshold in pixels.
    pub tau: f64,
    /// Split threshold for silhouette nodes, at most `tau`.
    pub tau_silhouette: f64,
    /// Sibling pairs merge when the parent projects below `hysteresis · τ`.
    pub hysteresis: f64,
    pub max_ops_per_frame: Option<usize>,
}

impl AdaptParams {
    pub fn new(tau: f64, tau_silhouette: f64, hysteresis: f64) -> Result<Self, ViewError> {
        let p = AdaptParams {
            tau,
            tau_silhouette,
            hysteresis,
            max_ops_per_frame: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ViewError> {
        if !(self.tau >= 0.0) || !(self.tau_silhouette >= 0.0) {
            return Err(ViewError::Params("thresholds must be non-negative".into()));
        }
        if self.tau_silhouette > self.tau {
            return Err(ViewError::Params("tau_silhouette must not exceed tau".into()));
        }
        if !(0.0..1.0).contains(&self.hysteresis) {
            return Err(ViewError::Params("hysteresis must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Split threshold for a node.
    pub fn split_threshold(&self, node: &VertexNode, cam: &Camera) -> f64 {
        if is_silhouette(node, cam) {
            self.tau_silhouette
        } else {
            self.tau
        }
    }

    /// Merge threshold for a parent; zero hysteresis never merges.
    pub fn merge_threshold(&self, parent: &VertexNode, cam: &Camera) -> f64 {
        if self.hysteresis == 0.0 {
            0.0
        } else {
            self.hysteresis * self.split_threshold(parent, cam)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdaptStats {
    pub splits: usize,
    pub merges: usize,
    /// Eligible operations left for later frames by `max_ops_per_frame`.
    pub deferred: usize,
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Split(usize),
    Merge(usize),
}

/// A cut through the forest: each leaf has exactly one active
/// ancestor-or-self, recorded in `proxy`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveFront {
    active: BTreeSet<usize>,
    proxy: Vec<usize>,
    frame: u64,
}

impl ActiveFront {
    pub fn roots_only(tree: &VertexTree) -> Self {
        Self::from_valid(tree, tree.roots.iter().copied())
    }

    pub fn all_leaves(tree: &VertexTree) -> Self {
        Self::from_valid(tree, 0..tree.leaf_count)
    }

    fn from_valid(tree: &VertexTree, ids: impl IntoIterator<Item = usize>) -> Self {
        let active: BTreeSet<usize> = ids.into_iter().collect();
        let list: Vec<usize> = active.iter().copied().collect();
        ActiveFront {
            proxy: tree.proxy_map(&list),
            active,
            frame: 0,
        }
    }

    /// Checks that `ids` form a cut before adopting them.
    pub fn from_nodes(tree: &VertexTree, ids: &[usize]) -> Result<Self, ViewError> {
        if let Some(&bad) = ids.iter().find(|&&id| id >= tree.node_count()) {
            return Err(ViewError::Front(format!("unknown node {bad}")));
        }
        let front = Self::from_valid(tree, ids.iter().copied());
        front.check(tree)?;
        Ok(front)
    }

    pub fn active(&self) -> &BTreeSet<usize> {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn proxy(&self, leaf: usize) -> usize {
        self.proxy[leaf]
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.active.contains(&id)
    }

    /// Exhaustive cut check: every leaf sees exactly one active node on its
    /// root path and the proxy map names it.
    pub fn check(&self, tree: &VertexTree) -> Result<(), ViewError> {
        if self.proxy.len() != tree.leaf_count {
            return Err(ViewError::Front("proxy map does not match the tree".into()));
        }
        let mut covered = HashSet::new();
        for leaf in 0..tree.leaf_count {
            let on_path: Vec<usize> = std::iter::once(leaf)
                .chain(tree.ancestors(leaf))
                .filter(|n| self.active.contains(n))
                .collect();
            if on_path.len() != 1 {
                return Err(ViewError::Front(format!(
                    "leaf {leaf} has {} active ancestors",
                    on_path.len()
                )));
            }
            if self.proxy[leaf] != on_path[0] {
                return Err(ViewError::Front(format!("stale proxy for leaf {leaf}")));
            }
            covered.insert(on_path[0]);
        }
        if covered.len() != self.active.len() {
            return Err(ViewError::Front("active node covers no leaf".into()));
        }
        Ok(())
    }

    /// One adaptation pass. Decisions are made against the front as it was
    /// at the start of the call, so each node moves at most one level.
    pub fn adapt(&mut self, tree: &VertexTree, cam: &Camera, params: &AdaptParams) -> AdaptStats {
        let mut ops: Vec<(f64, usize, Op)> = Vec::new();
        let mut splitting = HashSet::new();
        for &id in &self.active {
            let node = &tree.nodes[id];
            if node.is_leaf() {
                continue;
            }
            let err = screen_space_error(node, cam);
            if err > params.split_threshold(node, cam) {
                ops.push((err, id, Op::Split(id)));
                splitting.insert(id);
            }
        }
        for &id in &self.active {
            let Some(parent) = tree.nodes[id].parent else { continue };
            let Some([a, b]) = tree.nodes[parent].children else {
                continue;
            };
            let sibling = if a == id { b } else { a };
            // visit each pair once, from its smaller child
            if id > sibling || !self.active.contains(&sibling) {
                continue;
            }
            if splitting.contains(&a) || splitting.contains(&b) {
                continue;
            }
            let p = &tree.nodes[parent];
            let err = screen_space_error(p, cam);
            if err < params.merge_threshold(p, cam) {
                ops.push((err, parent, Op::Merge(parent)));
            }
        }

        let mut stats = AdaptStats::default();
        if let Some(max) = params.max_ops_per_frame {
            if ops.len() > max {
                ops.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
                stats.deferred = ops.len() - max;
                ops.truncate(max);
            }
        }
        for (_, _, op) in ops {
            match op {
                Op::Split(id) => {
                    let [a, b] = tree.nodes[id].children.expect("split of internal node");
                    self.active.remove(&id);
                    for c in [a, b] {
                        self.active.insert(c);
                        for leaf in tree.leaves_under(c) {
                            self.proxy[leaf] = c;
                        }
                    }
                    stats.splits += 1;
                }
                Op::Merge(parent) => {
                    let [a, b] = tree.nodes[parent].children.expect("merge into internal node");
                    self.active.remove(&a);
                    self.active.remove(&b);
                    self.active.insert(parent);
                    for leaf in tree.leaves_under(parent) {
                        self.proxy[leaf] = parent;
                    }
                    stats.merges += 1;
                }
            }
        }
        self.frame += 1;
        stats
    }

    /// Repeats [`adapt`](Self::adapt) until nothing changes or `max_frames`
    /// passes have run. Returns the number of passes that changed the front.
    pub fn adapt_to_fixpoint(
        &mut self,
        tree: &VertexTree,
        cam: &Camera,
        params: &AdaptParams,
        max_frames: usize,
    ) -> usize {
        for n in 0..max_frames {
            let s = self.adapt(tree, cam, params);
            if s.splits == 0 && s.merges == 0 && s.deferred == 0 {
                return n;
            }
        }
        max_frames
    }

    /// Largest screen error among active internal nodes (0 if none).
    pub fn max_error(&self, tree: &VertexTree, cam: &Camera) -> f64 {
        self.active
            .iter()
            .filter(|&&id| !tree.is_leaf(id))
            .map(|&id| screen_space_error(&tree.nodes[id], cam))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderTriangle {
    pub ids: [usize; 3],
    pub positions: [Vec3; 3],
}

/// Triangles of the current front: original faces whose three proxies are
/// distinct, deduplicated by unordered id triple and sorted by it.
pub fn render_set(front: &ActiveFront, tree: &VertexTree) -> Vec<RenderTriangle> {
    let mut faces = tree.proxy_faces(|leaf| front.proxy(leaf));
    faces.sort_by_key(|f| sorted_triple(*f));
    faces
        .into_iter()
        .map(|ids| RenderTriangle {
            ids,
            positions: ids.map(|id| tree.nodes[id].position),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameStats {
    pub frame: usize,
    pub active: usize,
    pub triangles: usize,
    pub splits: usize,
    pub merges: usize,
    pub max_err_px: f64,
}

/// Runs one adaptation per camera, starting from the roots-only front.
pub fn flythrough(tree: &VertexTree, path: &[(f64, Camera)], params: &AdaptParams) -> Vec<FrameStats> {
    let mut front = ActiveFront::roots_only(tree);
    path.iter()
        .enumerate()
        .map(|(frame, (_, cam))| {
            let s = front.adapt(tree, cam, params);
            FrameStats {
                frame,
                active: front.active_count(),
                triangles: render_set(&front, tree).len(),
                splits: s.splits,
                merges: s.merges,
                max_err_px: front.max_error(tree, cam),
            }
        })
        .collect()
}

/// Writes `frame,active,triangles,splits,merges,max_err_px` rows.
pub fn write_stats_csv<W: std::io::Write>(rows: &[FrameStats], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PathEntry {
    t: f64,
    eye: [f64; 3],
    forward: [f64; 3],
    up: [f64; 3],
    fov_y: f64,
    viewport_height: f64,
    #[serde(default)]
    near: Option<f64>,
}

/// Parses a camera path: a JSON array of
/// `{t, eye, forward, up, fov_y, viewport_height}` with optional `near`.
/// `forward` is normalized and `up` orthonormalized against it.
pub fn parse_camera_path(text: &str) -> Result<Vec<(f64, Camera)>, ViewError> {
    let entries: Vec<PathEntry> = serde_json::from_str(text).map_err(|e| ViewError::Path(e.to_string()))?;
    if entries.is_empty() {
        return Err(ViewError::Path("path is empty".into()));
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let forward = Vec3::from(e.forward)
                .try_normalize(1e-12)
                .ok_or_else(|| ViewError::Path(format!("entry {i}: zero forward vector")))?;
            let up = Vec3::from(e.up);
            let up = (up - forward * forward.dot(&up))
                .try_normalize(1e-12)
                .ok_or_else(|| ViewError::Path(format!("entry {i}: up parallel to forward")))?;
            let cam = Camera::new(
                Vec3::from(e.eye),
                forward,
                up,
                e.fov_y,
                e.viewport_height,
                e.near.unwrap_or(DEFAULT_NEAR),
            )
            .map_err(|err| ViewError::Path(format!("entry {i}: {err}")))?;
            Ok((e.t, cam))
        })
        .collect()
}
