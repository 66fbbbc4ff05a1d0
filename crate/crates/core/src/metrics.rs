//! Sampled surface deviation between two meshes.
//!
//! Points are drawn area-uniformly on the source surface with a seeded
//! ChaCha8 generator (a counter-based stream cipher, so reports are
//! reproducible for a given seed), and each is matched to its nearest point
//! on the target surface through a uniform grid over the target triangles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::Mesh;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("source mesh has zero surface area")]
    ZeroArea,
    #[error("target mesh has no faces")]
    NoFaces,
    #[error("sample count must be positive")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AToB,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub mean: f64,
    pub max: f64,
    pub samples: usize,
    pub seed: u64,
    pub direction: Direction,
}

/// Euclidean distance from `p` to the closed triangle `tri`.
pub fn point_triangle_distance(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    (p - closest_point_on_triangle(p, tri)).norm()
}

/// Closest point on a (possibly degenerate) triangle, by Voronoi regions.
pub fn closest_point_on_triangle(p: &Vec3, [a, b, c]: &[Vec3; 3]) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let longest = ab.norm_squared().max(ac.norm_squared()).max((c - b).norm_squared());
    if ab.cross(&ac).norm_squared() <= 1e-24 * longest * longest {
        return [
            closest_on_segment(p, a, b),
            closest_on_segment(p, b, c),
            closest_on_segment(p, c, a),
        ]
        .into_iter()
        .min_by(|x, y| (p - x).norm_squared().total_cmp(&(p - y).norm_squared()))
        .expect("three candidates");
    }

    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    a + d * ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
}

/// Uniform grid over the triangles of a mesh for nearest-surface queries.
#[derive(Debug, Clone)]
pub struct TriangleGrid {
    triangles: Vec<[Vec3; 3]>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl TriangleGrid {
    pub fn new(mesh: &Mesh) -> Self {
        let triangles: Vec<[Vec3; 3]> = (0..mesh.faces.len()).map(|f| mesh.triangle(f)).collect();
        let (lo, hi) = triangles.iter().flatten().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.inf(p), hi.sup(p)),
        );
        let extent = if triangles.is_empty() { Vec3::zeros() } else { hi - lo };
        let origin = if triangles.is_empty() { Vec3::zeros() } else { lo };
        let per_axis = (triangles.len() as f64).cbrt().ceil().clamp(1.0, 128.0);
        let max_extent = extent.max();
        let cell = if max_extent > 0.0 { max_extent / per_axis } else { 1.0 };
        let dims = [0, 1, 2].map(|k| ((extent[k] / cell).ceil() as usize).clamp(1, 256));
        let mut grid = TriangleGrid {
            triangles,
            origin,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for (t, tri) in grid.triangles.iter().enumerate() {
            let lo = tri.iter().fold(tri[0], |m, p| m.inf(p));
            let hi = tri.iter().fold(tri[0], |m, p| m.sup(p));
            let (c0, c1) = (grid.clamped_cell(&lo), grid.clamped_cell(&hi));
            for z in c0[2]..=c1[2] {
                for y in c0[1]..=c1[1] {
                    for x in c0[0]..=c1[0] {
                        let i = grid.index([x, y, z]);
                        grid.cells[i].push(t as u32);
                    }
                }
            }
        }
        grid
    }

    fn raw_cell(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|k| ((p[k] - self.origin[k]) / self.cell).floor() as i64)
    }

    fn clamped_cell(&self, p: &Vec3) -> [usize; 3] {
        let c = self.raw_cell(p);
        [0, 1, 2].map(|k| c[k].clamp(0, self.dims[k] as i64 - 1) as usize)
    }

    fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    /// Distance from `p` to the nearest triangle, searching cube shells of
    /// cells outward until no unvisited cell can hold anything closer.
    pub fn nearest_distance(&self, p: &Vec3) -> f64 {
        if self.triangles.is_empty() {
            return f64::INFINITY;
        }
        let q = self.raw_cell(p);
        let lo = [0, 1, 2].map(|k| -q[k]);
        let hi = [0, 1, 2].map(|k| self.dims[k] as i64 - 1 - q[k]);
        // Chebyshev distance from q to the grid box; shells below it are empty
        let start = (0..3).map(|k| lo[k].max(-hi[k]).max(0)).max().unwrap_or(0);
        let reach = (0..3).map(|k| (-lo[k]).abs().max(hi[k].abs())).max().unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in start..=reach {
            let range = |k: usize| (-r).max(lo[k])..=r.min(hi[k]);
            for dz in range(2) {
                for dy in range(1) {
                    let on_face = dz.abs() == r || dy.abs() == r;
                    let xs: Vec<i64> = if on_face {
                        range(0).collect()
                    } else {
                        let mut ends = vec![-r, r];
                        ends.dedup();
                        ends.retain(|dx| range(0).contains(dx));
                        ends
                    };
                    for dx in xs {
                        let cell = [(q[0] + dx) as usize, (q[1] + dy) as usize, (q[2] + dz) as usize];
                        for &t in &self.cells[self.index(cell)] {
                            best = best.min(point_triangle_distance(p, &self.triangles[t as usize]));
                        }
                    }
                }
            }
            // anything outside shell r lies at least r cells away
            if best <= r as f64 * self.cell {
                break;
            }
        }
        best
    }

    /// Linear scan over all triangles.
    pub fn nearest_distance_brute(&self, p: &Vec3) -> f64 {
        self.triangles
            .iter()
            .map(|t| point_triangle_distance(p, t))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Area-uniform surface samples: a face is chosen with probability
/// proportional to its area, then a uniform barycentric point inside it.
pub fn sample_surface(mesh: &Mesh, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec3>, MetricsError> {
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(f);
        total += 0.5 * (b - a).cross(&(c - a)).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(MetricsError::ZeroArea);
    }
    Ok((0..count)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(f);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2)
        })
        .collect())
}

fn one_sided(a: &Mesh, grid: &TriangleGrid, samples: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64), MetricsError> {
    let points = sample_surface(a, samples, rng)?;
    let (mut sum, mut max) = (0.0, 0.0f64);
    for p in &points {
        let d = grid.nearest_distance(p);
        sum += d;
        max = max.max(d);
    }
    Ok((sum / samples as f64, max))
}

/// Mean and max distance from `samples` points on `a` to the surface of `b`.
/// Symmetric mode also samples `b` against `a` (on a second generator
/// stream) and reports the larger mean and larger max.
pub fn sampled_deviation(
    a: &Mesh,
    b: &Mesh,
    samples: usize,
    seed: u64,
    symmetric: bool,
) -> Result<DeviationReport, MetricsError> {
    if samples == 0 {
        return Err(MetricsError::NoSamples);
    }
    if a.surface_area() <= 0.0 || (symmetric && b.surface_area() <= 0.0) {
        return Err(MetricsError::ZeroArea);
    }
    if b.faces.is_empty() {
        return Err(MetricsError::NoFaces);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut max) = one_sided(a, &TriangleGrid::new(b), samples, &mut rng)?;
    if symmetric {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let (m, x) = one_sided(b, &TriangleGrid::new(a), samples, &mut rng)?;
        mean = mean.max(m);
        max = max.max(x);
    }
    Ok(DeviationReport {
        mean,
        max,
        samples,
        seed,
        direction: if symmetric {
            Direction::Symmetric
        } else {
            Direction::AToB
        },
    })
}
