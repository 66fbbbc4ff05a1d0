//! Indexed triangle meshes, a small OBJ subset, and adjacency queries.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face index {index} out of range ({vertex_count} vertices)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        vertex_count: usize,
    },
    #[error("mesh has no vertices")]
    Empty,
}

/// Indexed triangle set. Faces wind counter-clockwise around the outward normal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        Self { positions, faces }
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Checks index bounds and coordinate finiteness.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(p) = self.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(format!("vertex {p} has a non-finite coordinate"));
        }
        let n = self.positions.len();
        if let Some(f) = self.faces.iter().position(|f| f.iter().any(|&i| i >= n)) {
            return Err(format!("face {f} references a vertex out of range"));
        }
        Ok(())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.positions[a], self.positions[b], self.positions[c]]
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(
            self.positions
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }

    /// Half the diagonal of the axis-aligned bounding box.
    pub fn bounding_radius(&self) -> Result<f64, MeshError> {
        let (lo, hi) = self.bounding_box().ok_or(MeshError::Empty)?;
        Ok(0.5 * (hi - lo).norm())
    }

    /// Drops faces with a repeated corner and exact duplicates (same index
    /// set under any rotation or winding), keeping first occurrences.
    /// Vertices are left untouched.
    pub fn cleanup(&self) -> Mesh {
        let mut seen = HashSet::with_capacity(self.faces.len());
        let faces = self
            .faces
            .iter()
            .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
            .filter(|f| seen.insert(sorted_triple(**f)))
            .copied()
            .collect();
        Mesh {
            positions: self.positions.clone(),
            faces,
        }
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::new(self)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }
}

pub(crate) fn sorted_triple(mut f: [usize; 3]) -> [usize; 3] {
    f.sort_unstable();
    f
}

/// Vertex-to-face incidence and the undirected edge set of a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    vertex_faces: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
}

impl Adjacency {
    pub fn new(mesh: &Mesh) -> Self {
        let mut vertex_faces = vec![Vec::new(); mesh.positions.len()];
        let mut edges = Vec::with_capacity(mesh.faces.len() * 3);
        for (f, face) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let i = face[k];
                // repeated corners list the face once
                if !face[..k].contains(&i) {
                    vertex_faces[i].push(f);
                }
                let j = face[(k + 1) % 3];
                if i != j {
                    edges.push((i.min(j), i.max(j)));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Self { vertex_faces, edges }
    }

    pub fn faces_of(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// Canonically ordered (i < j), sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }
}

/// Parses `v` and `f` records of an ASCII OBJ file. Polygons are fan
/// triangulated from their first corner; everything else is ignored.
pub fn load_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    // (line, resolved zero-based index) for bounds checking once all vertices are known
    let mut pending: Vec<(usize, i64)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        line,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    *c = tok.parse::<f64>().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("bad coordinate {tok:?}"),
                    })?;
                    if !c.is_finite() {
                        return Err(MeshError::Parse {
                            line,
                            message: format!("non-finite coordinate {tok:?}"),
                        });
                    }
                }
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut corners = Vec::with_capacity(4);
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let k: i64 = head.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("bad face index {tok:?}"),
                    })?;
                    let resolved = match k {
                        0 => {
                            return Err(MeshError::IndexOutOfRange {
                                line,
                                index: 0,
                                vertex_count: positions.len(),
                            })
                        }
                        k if k > 0 => k - 1,
                        k => positions.len() as i64 + k,
                    };
                    if resolved < 0 {
                        return Err(MeshError::IndexOutOfRange {
                            line,
                            index: k,
                            vertex_count: positions.len(),
                        });
                    }
                    pending.push((line, resolved));
                    corners.push(resolved as usize);
                }
                if corners.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: "face needs at least three corners".into(),
                    });
                }
                for w in corners[1..].windows(2) {
                    faces.push([corners[0], w[0], w[1]]);
                }
            }
            _ => {}
        }
    }

    if let Some(&(line, index)) = pending.iter().find(|(_, i)| *i as usize >= positions.len()) {
        return Err(MeshError::IndexOutOfRange {
            line,
            index: index + 1,
            vertex_count: positions.len(),
        });
    }
    Ok(Mesh { positions, faces })
}

/// Writes `v` and `f` records. Coordinates use shortest round-trip decimal
/// formatting, so `load_obj(&save_obj(m)) == m` bit for bit.
pub fn save_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.positions.len() * 32 + mesh.faces.len() * 16);
    for p in &mesh.positions {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}
