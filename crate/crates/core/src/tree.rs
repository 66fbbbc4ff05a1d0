//! Vertex trees: the binary merge forest recorded by a contraction log.
//!
//! Leaves are the original vertices (ids `0..leaf_count`), each internal node
//! is the vertex created by one log record. Faces live at the leaves; a cut
//! through the forest renders a face iff its three corners map to three
//! distinct active ancestors.

use std::collections::HashSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{sorted_triple, Mesh};
use crate::quadric::triangle_normal;
use crate::simplify::ContractionRecord;
use crate::Vec3;

pub const VTREE_MAGIC: &[u8; 7] = b"VTREE\0\0";
pub const VTREE_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("log record {index}: {reason}")]
    InconsistentLog { index: usize, reason: String },
    #[error("not a VTREE stream")]
    BadMagic,
    #[error("unsupported VTREE version {0}")]
    VersionMismatch(u8),
    #[error("VTREE checksum mismatch")]
    Checksum,
    #[error("malformed VTREE: {0}")]
    Malformed(String),
}

/// Cone of directions: every covered unit vector is within `angle` of `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalCone {
    pub axis: Vec3,
    pub angle: f64,
}

impl NormalCone {
    /// Covers every direction.
    pub const FULL: NormalCone = NormalCone {
        axis: Vec3::new(0.0, 0.0, 1.0),
        angle: PI,
    };

    pub fn of(direction: Vec3) -> Self {
        NormalCone {
            axis: direction,
            angle: 0.0,
        }
    }

    pub fn contains(&self, dir: &Vec3, slack: f64) -> bool {
        self.angle >= PI || angle_between(&self.axis, dir) <= self.angle + slack
    }

    /// Smallest cone containing both cones.
    pub fn merge(&self, other: &NormalCone) -> NormalCone {
        if self.angle >= PI || other.angle >= PI {
            return NormalCone::FULL;
        }
        let between = angle_between(&self.axis, &other.axis);
        if between + other.angle <= self.angle {
            return *self;
        }
        if between + self.angle <= other.angle {
            return *other;
        }
        let angle = 0.5 * (between + self.angle + other.angle);
        if angle >= PI {
            return NormalCone::FULL;
        }
        // rotate self.axis towards other.axis by (angle - self.angle)
        let mut perp = other.axis - self.axis * self.axis.dot(&other.axis);
        if perp.norm() < 1e-12 {
            perp = any_perpendicular(&self.axis);
        }
        let perp = perp.normalize();
        let turn = angle - self.angle;
        let axis = (self.axis * turn.cos() + perp * turn.sin()).normalize();
        NormalCone { axis, angle }
    }
}

pub(crate) fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    // atan2 keeps precision near 0 and π
    a.cross(b).norm().atan2(a.dot(b))
}

fn any_perpendicular(v: &Vec3) -> Vec3 {
    let helper = if v.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    v.cross(&helper)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexNode {
    pub position: Vec3,
    pub children: Option<[usize; 2]>,
    pub parent: Option<usize>,
    /// Merge cost from the log; zero for leaves.
    pub cost: f64,
    /// Upper bound on the distance to any leaf descendant.
    pub error_radius: f64,
    pub cone_axis: Vec3,
    pub cone_angle: f64,
}

impl VertexNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn cone(&self) -> NormalCone {
        NormalCone {
            axis: self.cone_axis,
            angle: self.cone_angle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexTree {
    pub nodes: Vec<VertexNode>,
    /// Nodes without a parent, ascending.
    pub roots: Vec<usize>,
    /// Cleaned original faces over leaf ids.
    pub original_faces: Vec<[usize; 3]>,
    pub leaf_count: usize,
}

impl VertexTree {
    /// Builds the forest for `mesh` (cleaned) and a contraction log over it.
    pub fn build(mesh: &Mesh, log: &[ContractionRecord]) -> Result<Self, TreeError> {
        let mesh = mesh.cleanup();
        let leaf_count = mesh.positions.len();

        let mut leaf_cones: Vec<Option<NormalCone>> = vec![None; leaf_count];
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.triangle(f);
            let Some(n) = triangle_normal(&a, &b, &c) else { continue };
            for &v in &mesh.faces[f] {
                let cone = NormalCone::of(n);
                leaf_cones[v] = Some(match leaf_cones[v] {
                    Some(existing) => existing.merge(&cone),
                    None => cone,
                });
            }
        }

        let mut nodes: Vec<VertexNode> = mesh
            .positions
            .iter()
            .zip(leaf_cones)
            .map(|(p, cone)| {
                let cone = cone.unwrap_or(NormalCone::FULL);
                VertexNode {
                    position: *p,
                    children: None,
                    parent: None,
                    cost: 0.0,
                    error_radius: 0.0,
                    cone_axis: cone.axis,
                    cone_angle: cone.angle,
                }
            })
            .collect();

        for (index, r) in log.iter().enumerate() {
            let bad = |reason: String| TreeError::InconsistentLog { index, reason };
            let id = nodes.len();
            if r.created != id {
                return Err(bad(format!("creates id {} but expected {id}", r.created)));
            }
            if r.removed_a == r.removed_b {
                return Err(bad(format!("merges vertex {} with itself", r.removed_a)));
            }
            for c in [r.removed_a, r.removed_b] {
                match nodes.get(c) {
                    None => return Err(bad(format!("unknown vertex {c}"))),
                    Some(n) if n.parent.is_some() => return Err(bad(format!("vertex {c} was already merged"))),
                    Some(_) => {}
                }
            }
            if !r.position.iter().all(|x| x.is_finite()) || !r.cost.is_finite() {
                return Err(bad("non-finite position or cost".into()));
            }
            let (a, b) = (&nodes[r.removed_a], &nodes[r.removed_b]);
            let error_radius = [a, b]
                .iter()
                .map(|c| c.error_radius + (r.position - c.position).norm())
                .fold(0.0, f64::max);
            let cone = a.cone().merge(&b.cone());
            nodes.push(VertexNode {
                position: r.position,
                children: Some([r.removed_a, r.removed_b]),
                parent: None,
                cost: r.cost.max(0.0),
                error_radius,
                cone_axis: cone.axis,
                cone_angle: cone.angle,
            });
            nodes[r.removed_a].parent = Some(id);
            nodes[r.removed_b].parent = Some(id);
        }

        let roots = (0..nodes.len()).filter(|&i| nodes[i].parent.is_none()).collect();
        Ok(VertexTree {
            nodes,
            roots,
            original_faces: mesh.faces,
            leaf_count,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id < self.leaf_count
    }

    /// Leaf descendants of `id` (itself if a leaf).
    pub fn leaves_under(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.nodes[n].children {
                Some([a, b]) => stack.extend([b, a]),
                None => out.push(n),
            }
        }
        out
    }

    pub fn ancestors(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.nodes[id].parent, |&p| self.nodes[p].parent)
    }

    /// Proxy-mapped faces in original order: corners replaced by `proxy`,
    /// faces with a repeated proxy dropped, duplicates dropped after their
    /// first occurrence.
    pub fn proxy_faces(&self, proxy: impl Fn(usize) -> usize) -> Vec<[usize; 3]> {
        let mut seen = HashSet::new();
        self.original_faces
            .iter()
            .map(|f| f.map(&proxy))
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .filter(|f| seen.insert(sorted_triple(*f)))
            .collect()
    }

    /// Mesh over the given active nodes (ascending ids become vertices).
    pub fn mesh_for(&self, active: &[usize], proxy: impl Fn(usize) -> usize) -> Mesh {
        let mut ids = active.to_vec();
        ids.sort_unstable();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        for (k, &id) in ids.iter().enumerate() {
            remap[id] = k;
        }
        let faces = self
            .proxy_faces(proxy)
            .into_iter()
            .map(|f| f.map(|c| remap[c]))
            .collect();
        Mesh {
            positions: ids.iter().map(|&id| self.nodes[id].position).collect(),
            faces,
        }
    }

    /// All leaves active.
    pub fn full_resolution(&self) -> Mesh {
        Mesh {
            positions: self.nodes[..self.leaf_count].iter().map(|n| n.position).collect(),
            faces: self.original_faces.clone(),
        }
        .cleanup()
    }

    /// Coarsest cut whose nodes all have cost ≤ `eps`: a node is active iff
    /// its cost is within `eps` and every proper ancestor's cost exceeds it.
    pub fn front_at_error(&self, eps: f64) -> Vec<usize> {
        let mut active = Vec::new();
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            match node.children {
                Some([a, b]) if !(node.cost <= eps) => stack.extend([b, a]),
                _ => active.push(n),
            }
        }
        active.sort_unstable();
        active
    }

    pub fn extract_at_error(&self, eps: f64) -> Mesh {
        let active = self.front_at_error(eps);
        let proxy = self.proxy_map(&active);
        self.mesh_for(&active, |leaf| proxy[leaf])
    }

    /// Leaf → active ancestor for a valid cut.
    pub fn proxy_map(&self, active: &[usize]) -> Vec<usize> {
        let mut proxy = vec![usize::MAX; self.leaf_count];
        for &a in active {
            for leaf in self.leaves_under(a) {
                proxy[leaf] = a;
            }
        }
        proxy
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = self.nodes.first()?.position;
        Some(
            self.nodes
                .iter()
                .fold((first, first), |(lo, hi), n| (lo.inf(&n.position), hi.sup(&n.position))),
        )
    }

    /// Serializes to the binary VTREE v1 layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let n = self.nodes.len();
        let internal = n - self.leaf_count;
        let mut out = Vec::with_capacity(16 + header.len() + n * 80 + internal * 8 + self.original_faces.len() * 12);
        out.extend_from_slice(VTREE_MAGIC);
        out.push(VTREE_VERSION);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for node in &self.nodes {
            for c in node.position.iter() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        for node in &self.nodes {
            out.extend_from_slice(&node.cost.to_le_bytes());
        }
        for node in &self.nodes {
            out.extend_from_slice(&node.error_radius.to_le_bytes());
        }
        for node in &self.nodes {
            for c in node.cone_axis.iter().chain([&node.cone_angle]) {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        for node in &self.nodes[self.leaf_count..] {
            let [a, b] = node.children.expect("internal node has children");
            out.extend_from_slice(&(a as u32).to_le_bytes());
            out.extend_from_slice(&(b as u32).to_le_bytes());
        }
        for f in &self.original_faces {
            for c in f {
                out.extend_from_slice(&(*c as u32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TreeError> {
        if bytes.len() >= 8 {
            if &bytes[..7] != VTREE_MAGIC {
                return Err(TreeError::BadMagic);
            }
            if bytes[7] != VTREE_VERSION {
                return Err(TreeError::VersionMismatch(bytes[7]));
            }
        }
        if bytes.len() < 16 {
            return Err(TreeError::Checksum);
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(TreeError::Checksum);
        }

        let mut r = Reader { buf: body, pos: 8 };
        let header_len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| TreeError::Malformed(format!("header: {e}")))?;
        let n = header.node_count;
        if header.leaf_count > n {
            return Err(TreeError::Malformed("more leaves than nodes".into()));
        }
        let internal = n - header.leaf_count;
        let expected = n * 8 * 9 + internal * 8 + header.face_count * 12;
        if r.remaining() != expected {
            return Err(TreeError::Malformed(format!(
                "payload is {} bytes, header implies {expected}",
                r.remaining()
            )));
        }
        let positions: Vec<Vec3> = (0..n)
            .map(|_| Ok(Vec3::new(r.f64()?, r.f64()?, r.f64()?)))
            .collect::<Result<_, TreeError>>()?;
        let costs = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let radii = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let cones = (0..n)
            .map(|_| Ok([r.f64()?, r.f64()?, r.f64()?, r.f64()?]))
            .collect::<Result<Vec<_>, TreeError>>()?;
        let children = (0..internal)
            .map(|_| Ok([r.u32()? as usize, r.u32()? as usize]))
            .collect::<Result<Vec<_>, TreeError>>()?;
        let faces = (0..header.face_count)
            .map(|_| Ok([r.u32()? as usize, r.u32()? as usize, r.u32()? as usize]))
            .collect::<Result<Vec<_>, TreeError>>()?;
        Self::assemble(header.leaf_count, positions, costs, radii, cones, children, faces)
    }

    fn header(&self) -> Header {
        Header {
            leaf_count: self.leaf_count,
            node_count: self.nodes.len(),
            face_count: self.original_faces.len(),
            bbox: self.bounding_box().map(|(lo, hi)| BoundingBox {
                min: [lo.x, lo.y, lo.z],
                max: [hi.x, hi.y, hi.z],
            }),
        }
    }

    /// Rebuilds a tree from flat arrays, checking structural invariants.
    fn assemble(
        leaf_count: usize,
        positions: Vec<Vec3>,
        costs: Vec<f64>,
        radii: Vec<f64>,
        cones: Vec<[f64; 4]>,
        children: Vec<[usize; 2]>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, TreeError> {
        let n = positions.len();
        let bad = |m: String| Err(TreeError::Malformed(m));
        if [costs.len(), radii.len(), cones.len()].iter().any(|&l| l != n) || leaf_count + children.len() != n {
            return bad("array lengths disagree".into());
        }
        let mut nodes: Vec<VertexNode> = (0..n)
            .map(|i| VertexNode {
                position: positions[i],
                children: None,
                parent: None,
                cost: costs[i],
                error_radius: radii[i],
                cone_axis: Vec3::new(cones[i][0], cones[i][1], cones[i][2]),
                cone_angle: cones[i][3],
            })
            .collect();
        for (k, node) in nodes.iter().enumerate() {
            let finite = node.position.iter().all(|c| c.is_finite())
                && node.cost.is_finite()
                && node.error_radius.is_finite()
                && node.cone_axis.iter().all(|c| c.is_finite());
            if !finite || node.cost < 0.0 || node.error_radius < 0.0 {
                return bad(format!("node {k} has invalid values"));
            }
            if !(0.0..=PI).contains(&node.cone_angle) {
                return bad(format!("node {k} cone angle out of range"));
            }
        }
        for (offset, &[a, b]) in children.iter().enumerate() {
            let id = leaf_count + offset;
            if a >= id || b >= id || a == b {
                return bad(format!("node {id} has invalid children ({a}, {b})"));
            }
            for c in [a, b] {
                if nodes[c].parent.replace(id).is_some() {
                    return bad(format!("node {c} has two parents"));
                }
            }
            nodes[id].children = Some([a, b]);
        }
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&c| c >= leaf_count)) {
            return bad(format!("face {f:?} references a non-leaf"));
        }
        let roots = (0..n).filter(|&i| nodes[i].parent.is_none()).collect();
        Ok(VertexTree {
            nodes,
            roots,
            original_faces: faces,
            leaf_count,
        })
    }

    /// Same content as [`to_bytes`](Self::to_bytes) as one JSON document.
    pub fn to_json(&self) -> String {
        let doc = TreeJson {
            format: "vtree".into(),
            version: VTREE_VERSION,
            header: self.header(),
            positions: self
                .nodes
                .iter()
                .map(|n| [n.position.x, n.position.y, n.position.z])
                .collect(),
            costs: self.nodes.iter().map(|n| n.cost).collect(),
            radii: self.nodes.iter().map(|n| n.error_radius).collect(),
            cones: self
                .nodes
                .iter()
                .map(|n| [n.cone_axis.x, n.cone_axis.y, n.cone_axis.z, n.cone_angle])
                .collect(),
            children: self.nodes[self.leaf_count..]
                .iter()
                .map(|n| n.children.expect("internal node has children"))
                .collect(),
            faces: self.original_faces.clone(),
        };
        serde_json::to_string(&doc).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let doc: TreeJson = serde_json::from_str(text).map_err(|e| TreeError::Malformed(e.to_string()))?;
        if doc.version != VTREE_VERSION {
            return Err(TreeError::VersionMismatch(doc.version));
        }
        let h = &doc.header;
        if h.node_count != doc.positions.len() || h.face_count != doc.faces.len() {
            return Err(TreeError::Malformed("header counts disagree with arrays".into()));
        }
        Self::assemble(
            h.leaf_count,
            doc.positions.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
            doc.costs,
            doc.radii,
            doc.cones,
            doc.children,
            doc.faces,
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundingBox {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    leaf_count: usize,
    node_count: usize,
    face_count: usize,
    bbox: Option<BoundingBox>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TreeJson {
    format: String,
    version: u8,
    #[serde(flatten)]
    header: Header,
    positions: Vec<[f64; 3]>,
    costs: Vec<f64>,
    radii: Vec<f64>,
    cones: Vec<[f64; 4]>,
    children: Vec<[usize; 2]>,
    faces: Vec<[usize; 3]>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8], TreeError> {
        if self.remaining() < len {
            return Err(TreeError::Malformed("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TreeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, TreeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
