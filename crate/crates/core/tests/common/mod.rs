//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's quadric or pair-selection code.

#![allow(dead_code)]

use std::collections::BTreeSet;

use meshforge::{Mesh, Vec3};
use nalgebra::Matrix3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

/// Unit normal and offset of the plane through a triangle, `None` if it has
/// no well-defined normal.
pub fn plane_of(p: [Vec3; 3]) -> Option<(Vec3, f64)> {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let len = n.norm();
    let longest = [(p[1] - p[0]), (p[2] - p[0]), (p[2] - p[1])]
        .iter()
        .map(|e| e.norm_squared())
        .fold(0.0, f64::max);
    if longest == 0.0 || len <= 1e-12 * longest {
        return None;
    }
    let n = n / len;
    Some((n, -n.dot(&p[0])))
}

/// Σ (n·x + d)² computed one plane at a time.
pub fn plane_sum(planes: &[(Vec3, f64)], x: &Vec3) -> f64 {
    planes.iter().map(|(n, d)| (n.dot(x) + d).powi(2)).sum()
}

/// Planes of the faces around vertex `i`.
pub fn vertex_planes(mesh: &Mesh, i: usize) -> Vec<(Vec3, f64)> {
    mesh.faces
        .iter()
        .filter(|f| f.contains(&i))
        .filter_map(|f| plane_of(f.map(|c| mesh.positions[c])))
        .collect()
}

/// Cheapest position among the stationary point of the plane sum (when the
/// normal matrix is comfortably invertible) and the two endpoints and their
/// midpoint, with the resulting cost.
pub fn best_merge(planes: &[(Vec3, f64)], a: &Vec3, b: &Vec3) -> f64 {
    let mut m = Matrix3::zeros();
    let mut rhs = Vec3::zeros();
    for (n, d) in planes {
        m += n * n.transpose();
        rhs -= n * *d;
    }
    let mut best = [a, b, &((a + b) / 2.0)]
        .iter()
        .map(|x| plane_sum(planes, x))
        .fold(f64::INFINITY, f64::min);
    let scale = m.abs().row_sum().max().max(1.0).powi(3);
    if m.determinant().abs() > 1e-10 * scale {
        if let Some(x) = m.lu().solve(&rhs) {
            best = best.min(plane_sum(planes, &x));
        }
    }
    best
}

/// Edges and, for `t > 0`, all other pairs closer than `t`, by brute force.
pub fn candidate_pairs(mesh: &Mesh, t: f64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            out.insert((a.min(b), a.max(b)));
        }
    }
    if t > 0.0 {
        let n = mesh.positions.len();
        for i in 0..n {
            for j in i + 1..n {
                if (mesh.positions[i] - mesh.positions[j]).norm() < t {
                    out.insert((i, j));
                }
            }
        }
    }
    out
}

/// Exhaustive first-contraction oracle: every candidate pair with its
/// merge cost, sorted by (cost, i, j).
pub fn ranked_first_pairs(mesh: &Mesh, t: f64) -> Vec<(f64, usize, usize)> {
    let mut ranked: Vec<(f64, usize, usize)> = candidate_pairs(mesh, t)
        .into_iter()
        .map(|(i, j)| {
            let mut planes = vertex_planes(mesh, i);
            planes.extend(vertex_planes(mesh, j));
            (best_merge(&planes, &mesh.positions[i], &mesh.positions[j]), i, j)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    ranked
}

/// Random triangle soup over `n` points in the unit cube, without repeated
/// corners, duplicate faces or unused vertices.
pub fn random_mesh(rng: &mut ChaCha8Rng, n: usize) -> Mesh {
    let positions: Vec<Vec3> = (0..n)
        .map(|_| {
            v(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let mut faces = Vec::new();
    let mut seen = BTreeSet::new();
    let mut push = |f: [usize; 3], faces: &mut Vec<[usize; 3]>| {
        let mut key = f;
        key.sort_unstable();
        if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] && seen.insert(key) {
            faces.push(f);
        }
    };
    // a fan through every vertex keeps them all referenced
    for i in 0..n {
        push([i, (i + 1) % n, (i + 2) % n], &mut faces);
    }
    for _ in 0..rng.gen_range(0..n) {
        let f = [rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..n)];
        push(f, &mut faces);
    }
    Mesh::new(positions, faces)
}

/// Faces as sets of exact corner coordinates, independent of vertex order.
pub fn face_set(mesh: &Mesh) -> BTreeSet<[[u64; 3]; 3]> {
    mesh.faces
        .iter()
        .map(|f| {
            let mut key = f.map(|c| mesh.positions[c].map(f64::to_bits).into());
            key.sort_unstable();
            key
        })
        .collect()
}

/// Oriented faces with coordinates, for exact mesh comparisons.
pub fn position_bits(mesh: &Mesh) -> Vec<[u64; 3]> {
    mesh.positions
        .iter()
        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect()
}

fn segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm()
}

/// Point–triangle distance by plane projection plus an inside test, falling
/// back to the nearest edge.
pub fn triangle_distance(p: &Vec3, t: &[Vec3; 3]) -> f64 {
    let edges = (0..3)
        .map(|k| segment_distance(p, &t[k], &t[(k + 1) % 3]))
        .fold(f64::INFINITY, f64::min);
    let n = (t[1] - t[0]).cross(&(t[2] - t[0]));
    if n.norm() == 0.0 {
        return edges;
    }
    let n = n.normalize();
    let h = (p - t[0]).dot(&n);
    let q = p - n * h;
    let inside = (0..3).all(|k| (t[(k + 1) % 3] - t[k]).cross(&(q - t[k])).dot(&n) >= 0.0);
    if inside {
        h.abs().min(edges)
    } else {
        edges
    }
}

/// Distance from `p` to the nearest face of `mesh`, scanning every face.
pub fn brute_nearest(mesh: &Mesh, p: &Vec3) -> f64 {
    (0..mesh.faces.len())
        .map(|f| triangle_distance(p, &mesh.triangle(f)))
        .fold(f64::INFINITY, f64::min)
}
