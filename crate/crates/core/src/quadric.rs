//! Plane quadrics: accumulation of squared point-to-plane distances and
//! optimal merged-vertex placement.

use std::ops::{Add, AddAssign};

use nalgebra::Matrix3;
use thiserror::Error;

use crate::mesh::{Adjacency, Mesh};
use crate::Vec3;

/// Scaled-determinant threshold below which the 3×3 block counts as singular.
pub const SINGULAR_EPS: f64 = 1e-10;
/// Cross-product norm threshold, relative to the squared longest edge.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum QuadricError {
    #[error("degenerate triangle")]
    DegenerateTriangle,
}

/// Plane `ax + by + cz + d = 0` with unit normal `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Plane {
    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.a, self.b, self.c)
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal().dot(p) + self.d
    }

    pub fn through_triangle(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> Result<Self, QuadricError> {
        let n = triangle_normal(p0, p1, p2).ok_or(QuadricError::DegenerateTriangle)?;
        Ok(Plane {
            a: n.x,
            b: n.y,
            c: n.z,
            d: -n.dot(p0),
        })
    }
}

/// Unit normal of a triangle, or `None` when its area test fails.
pub fn triangle_normal(p0: &Vec3, p1: &Vec3, p2: &Vec3) -> Option<Vec3> {
    let e0 = p1 - p0;
    let e1 = p2 - p0;
    let cross = e0.cross(&e1);
    let longest = e0.norm_squared().max(e1.norm_squared()).max((p2 - p1).norm_squared());
    let norm = cross.norm();
    if !(norm > DEGENERATE_EPS * longest) || longest == 0.0 {
        return None;
    }
    Some(cross / norm)
}

/// Symmetric 4×4 form stored as its upper triangle, row-major:
/// `xx xy xz xw yy yz yw zz zw ww`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Quadric(pub [f64; 10]);

const INDEX: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];

impl Quadric {
    pub const ZERO: Quadric = Quadric([0.0; 10]);

    /// `p pᵀ` for the homogeneous plane vector.
    pub fn from_plane(p: &Plane) -> Self {
        let v = [p.a, p.b, p.c, p.d];
        let mut q = [0.0; 10];
        for r in 0..4 {
            for c in r..4 {
                q[INDEX[r][c]] = v[r] * v[c];
            }
        }
        Quadric(q)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[INDEX[row][col]]
    }

    /// `v̂ᵀ Q v̂` with `v̂ = (x, y, z, 1)`, clamped at zero.
    pub fn eval(&self, v: &Vec3) -> f64 {
        let q = &self.0;
        let (x, y, z) = (v.x, v.y, v.z);
        let e = q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9];
        e.max(0.0)
    }

    fn block(&self) -> (Matrix3<f64>, Vec3) {
        let q = &self.0;
        let a = Matrix3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7]);
        (a, Vec3::new(q[3], q[6], q[8]))
    }

    /// Stationary point of the form restricted to `w = 1`, i.e. the centre of
    /// its level ellipsoids, when the 3×3 block is safely invertible.
    pub fn minimizer(&self) -> Option<Vec3> {
        let (a, b) = self.block();
        let norm_inf = (0..3)
            .map(|r| a.row(r).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let det = a.determinant();
        if !(det.abs() > SINGULAR_EPS * norm_inf.powi(3).max(1.0)) {
            return None;
        }
        let x = a.lu().solve(&(-b))?;
        x.iter().all(|c| c.is_finite()).then_some(x)
    }

    /// Optimal placement for merging `v1` and `v2` under this form: the
    /// minimizer when the block is invertible, otherwise the cheapest of
    /// `v1`, `v2`, midpoint (ties in that order).
    pub fn placement(&self, v1: &Vec3, v2: &Vec3) -> (Vec3, f64) {
        let fallback = self.best_of_subset(v1, v2);
        match self.minimizer() {
            // a nearly singular solve can land far away; never do worse than the subset
            Some(x) => {
                let cost = self.eval(&x);
                if cost <= fallback.1 {
                    (x, cost)
                } else {
                    fallback
                }
            }
            None => fallback,
        }
    }

    pub fn best_of_subset(&self, v1: &Vec3, v2: &Vec3) -> (Vec3, f64) {
        let mid = (v1 + v2) * 0.5;
        let mut best = (*v1, self.eval(v1));
        for c in [*v2, mid] {
            let e = self.eval(&c);
            if e < best.1 {
                best = (c, e);
            }
        }
        best
    }
}

impl Add for Quadric {
    type Output = Quadric;
    fn add(mut self, rhs: Quadric) -> Quadric {
        self += rhs;
        self
    }
}

impl AddAssign for Quadric {
    fn add_assign(&mut self, rhs: Quadric) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

/// Sum of plane quadrics of the non-degenerate faces around vertex `i`.
pub fn vertex_quadric(mesh: &Mesh, adj: &Adjacency, i: usize) -> Quadric {
    adj.faces_of(i)
        .iter()
        .filter_map(|&f| {
            let [a, b, c] = mesh.triangle(f);
            Plane::through_triangle(&a, &b, &c).ok()
        })
        .fold(Quadric::ZERO, |q, p| q + Quadric::from_plane(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn axis_plane(axis: usize, offset: f64) -> Quadric {
        let mut n = [0.0; 3];
        n[axis] = 1.0;
        Quadric::from_plane(&Plane {
            a: n[0],
            b: n[1],
            c: n[2],
            d: -offset,
        })
    }

    #[test]
    fn planes_of_triangles() {
        let p = Plane::through_triangle(&v(0., 0., 0.), &v(1., 0., 0.), &v(0., 1., 0.)).unwrap();
        assert_eq!((p.a, p.b, p.c, p.d), (0.0, 0.0, 1.0, 0.0));
        let p = Plane::through_triangle(&v(0., 0., 1.), &v(1., 0., 1.), &v(0., 1., 1.)).unwrap();
        assert_eq!((p.a, p.b, p.c, p.d), (0.0, 0.0, 1.0, -1.0));
        assert_eq!(
            Plane::through_triangle(&v(0., 0., 0.), &v(1., 0., 0.), &v(2., 0., 0.)),
            Err(QuadricError::DegenerateTriangle)
        );
        assert!(Plane::through_triangle(&v(1., 1., 1.), &v(1., 1., 1.), &v(1., 1., 1.)).is_err());
    }

    #[test]
    fn outer_products() {
        let q = axis_plane(2, 0.0);
        for r in 0..4 {
            for c in 0..4 {
                let want = if (r, c) == (2, 2) { 1.0 } else { 0.0 };
                assert_eq!(q.get(r, c), want);
            }
        }
        let q = axis_plane(2, 1.0);
        assert_eq!(
            (q.get(2, 2), q.get(2, 3), q.get(3, 2), q.get(3, 3)),
            (1.0, -1.0, -1.0, 1.0)
        );
        assert_eq!(q.get(0, 0) + q.get(1, 1) + q.get(0, 3), 0.0);
        let q = axis_plane(0, 0.0);
        assert_eq!(q.0.iter().filter(|c| **c != 0.0).count(), 1);
        assert_eq!(q.get(0, 0), 1.0);
    }

    #[test]
    fn sums_and_double_weighting() {
        let s = axis_plane(2, 0.0) + axis_plane(0, 0.0);
        assert_eq!((s.get(0, 0), s.get(2, 2)), (1.0, 1.0));
        let q = axis_plane(1, 3.0);
        assert_eq!(q + Quadric::ZERO, q);
        let d = axis_plane(2, 0.0) + axis_plane(2, 0.0);
        assert_eq!(d.get(2, 2), 2.0);
    }

    #[test]
    fn evaluation() {
        assert_eq!(axis_plane(2, 0.0).eval(&v(0., 0., 1.)), 1.0);
        assert_eq!((axis_plane(2, 0.0) + axis_plane(0, 0.0)).eval(&v(1., 0., 2.)), 5.0);
        assert_eq!((axis_plane(2, 0.0) + axis_plane(2, 0.0)).eval(&v(0., 0., 1.)), 2.0);
    }

    #[test]
    fn placement_cases() {
        let q = axis_plane(0, 0.0) + axis_plane(1, 0.0) + axis_plane(2, 0.0);
        let (x, c) = q.placement(&v(1., 2., 3.), &v(-4., 0., 9.));
        assert!(x.norm() < 1e-15 && c == 0.0);

        let q = axis_plane(0, 1.0) + axis_plane(1, 1.0) + axis_plane(2, 1.0);
        let (x, c) = q.placement(&v(0., 0., 0.), &v(5., 5., 5.));
        assert!((x - v(1., 1., 1.)).norm() < 1e-12 && c < 1e-20);

        let q = axis_plane(2, 0.0) + axis_plane(2, 1.0);
        assert!(q.minimizer().is_none());
        let (x, c) = q.placement(&v(0., 0., 0.), &v(0., 0., 1.));
        assert_eq!(x, v(0., 0., 0.5));
        assert_eq!(c, 0.5);
    }

    #[test]
    fn subset_ties_prefer_listed_order() {
        let (x, c) = Quadric::ZERO.placement(&v(1., 0., 0.), &v(2., 0., 0.));
        assert_eq!((x, c), (v(1., 0., 0.), 0.0));
        let q = axis_plane(2, 0.5);
        let (x, _) = q.best_of_subset(&v(0., 0., 0.), &v(0., 0., 1.));
        assert_eq!(x, v(0., 0., 0.5));
    }

    #[test]
    fn vertex_quadric_fans_and_corners() {
        // flat fan around vertex 0
        let ring = [v(1., 0., 0.), v(0., 1., 0.), v(-1., 0., 0.), v(0., -1., 0.)];
        let mut pos = vec![v(0., 0., 0.)];
        pos.extend(ring);
        let faces = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]];
        let m = Mesh::new(pos, faces);
        let q = vertex_quadric(&m, &m.adjacency(), 0);
        assert!(q.eval(&v(3.0, -7.0, 0.0)) < 1e-12);
        assert!((q.eval(&v(0.0, 0.0, 1.0)) - 4.0).abs() < 1e-12);

        // cube corner on the three coordinate planes
        let m = Mesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(0., 0., 1.)],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2]],
        );
        let q = vertex_quadric(&m, &m.adjacency(), 0);
        for t in [0.5, -2.0, 3.0] {
            assert!((q.eval(&v(t, t, t)) - 3.0 * t * t).abs() < 1e-12);
        }

        let m = Mesh::new(vec![v(1., 2., 3.)], vec![]);
        assert_eq!(vertex_quadric(&m, &m.adjacency(), 0), Quadric::ZERO);
    }

    fn unit_plane() -> impl Strategy<Value = Plane> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -10.0f64..10.0)
            .prop_filter("nonzero normal", |(a, b, c, _)| a * a + b * b + c * c > 1e-3)
            .prop_map(|(a, b, c, d)| {
                let n = Vec3::new(a, b, c).normalize();
                Plane {
                    a: n.x,
                    b: n.y,
                    c: n.z,
                    d,
                }
            })
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn eval_matches_direct_distance_sum(planes in prop::collection::vec(unit_plane(), 0..=8), p in point()) {
            let q = planes.iter().fold(Quadric::ZERO, |q, pl| q + Quadric::from_plane(pl));
            let direct: f64 = planes.iter().map(|pl| pl.signed_distance(&p).powi(2)).sum();
            prop_assert!((q.eval(&p) - direct).abs() <= 1e-9 * direct.max(1.0));
        }

        #[test]
        fn add_commutes_exactly(a in prop::collection::vec(unit_plane(), 1..4), b in prop::collection::vec(unit_plane(), 1..4)) {
            let qa = a.iter().fold(Quadric::ZERO, |q, pl| q + Quadric::from_plane(pl));
            let qb = b.iter().fold(Quadric::ZERO, |q, pl| q + Quadric::from_plane(pl));
            prop_assert_eq!(qa + qb, qb + qa);
        }

        #[test]
        fn placement_never_worse_than_subset(planes in prop::collection::vec(unit_plane(), 0..=8), v1 in point(), v2 in point()) {
            let q = planes.iter().fold(Quadric::ZERO, |q, pl| q + Quadric::from_plane(pl));
            let (_, cost) = q.placement(&v1, &v2);
            prop_assert!(cost >= 0.0);
            for c in [v1, v2, (v1 + v2) * 0.5] {
                prop_assert!(cost <= q.eval(&c) + 1e-9);
            }
        }
    }
}
