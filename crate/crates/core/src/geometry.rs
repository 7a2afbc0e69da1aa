//! Measures, centroids, local frames and quadrature on edges, polygonal faces
//! and polyhedral cells.
//!
//! Faces are fan-triangulated about their vertex mean and cells are split into
//! signed pyramids (tetrahedra) with apex at the cell vertex mean, so nonconvex
//! but star-shaped elements are handled without special cases.

use crate::error::MeshError;
use crate::meshio::PolyMesh;
use crate::scalar::{Real, Vec3};

pub const DEFAULT_EDGE_DEGREE: usize = 7;
pub const DEFAULT_FACE_DEGREE: usize = 4;
pub const DEFAULT_CELL_DEGREE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceGeometry<T> {
    pub area: T,
    pub centroid: Vec3<T>,
    pub normal: Vec3<T>,
    pub diameter: T,
    /// In-plane orthonormal frame with `xi x eta = normal`.
    pub xi: Vec3<T>,
    pub eta: Vec3<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGeometry<T> {
    pub volume: T,
    pub centroid: Vec3<T>,
    pub diameter: T,
}

fn vertex_mean<T: Real>(mesh: &PolyMesh<T>, ids: &[usize]) -> Vec3<T> {
    ids.iter().map(|&v| mesh.vertex(v)).sum::<Vec3<T>>() / T::from_usize_lossy(ids.len())
}

/// Fan triangles `(apex, p_i, p_{i+1})` of face `f` with their area vectors.
fn face_fan<T: Real>(mesh: &PolyMesh<T>, f: usize) -> (Vec3<T>, Vec<(Vec3<T>, Vec3<T>, Vec3<T>)>) {
    let lp = mesh.face(f);
    let apex = vertex_mean(mesh, lp);
    let tris = (0..lp.len())
        .map(|i| {
            let a = mesh.vertex(lp[i]);
            let b = mesh.vertex(lp[(i + 1) % lp.len()]);
            (a, b, (a - apex).cross(b - apex) * T::lit(0.5))
        })
        .collect();
    (apex, tris)
}

/// `|F| n_F` for face `f`, oriented by the stored loop.
pub fn face_area_vector<T: Real>(mesh: &PolyMesh<T>, f: usize) -> Vec3<T> {
    face_fan(mesh, f).1.into_iter().map(|(_, _, av)| av).sum()
}

pub fn face_geometry<T: Real>(mesh: &PolyMesh<T>, f: usize) -> Result<FaceGeometry<T>, MeshError> {
    let (apex, tris) = face_fan(mesh, f);
    let area_vec: Vec3<T> = tris.iter().map(|t| t.2).sum();
    let diameter = mesh.face_diameter(f);
    let mag = area_vec.norm();
    if !(mag > T::epsilon() * diameter * diameter) {
        return Err(MeshError::Geometry(format!("face {f} has zero area")));
    }
    let normal = area_vec / mag;
    // signed triangle areas keep nonconvex fans exact
    let mut area = T::zero();
    let mut moment = Vec3::zero();
    for &(a, b, av) in &tris {
        let w = av.dot(normal);
        area += w;
        moment += (apex + a + b) * (w / T::lit(3.0));
    }
    let centroid = moment / area;
    let lp = mesh.face(f);
    let d = mesh.vertex(lp[1]) - mesh.vertex(lp[0]);
    let xi = (d - normal * d.dot(normal)).normalized();
    let eta = normal.cross(xi);
    Ok(FaceGeometry { area, centroid, normal, diameter, xi, eta })
}

/// Volume by the divergence theorem, `(1/3) sum_F s_F |F| (b_F - x0) . n_F`.
pub fn signed_volume<T: Real>(mesh: &PolyMesh<T>, k: usize) -> T {
    let apex = vertex_mean(mesh, &mesh.cell_vertices(k));
    let mut vol = T::zero();
    for sf in mesh.cell(k) {
        let (fa, tris) = face_fan(mesh, sf.face);
        let s = sf.sign.value::<T>();
        for (_, _, av) in tris {
            vol += s * av.dot(fa - apex);
        }
    }
    vol / T::lit(3.0)
}

/// Signed tetrahedra `(apex, face apex, p_i, p_{i+1})` covering cell `k`, with signed volumes.
fn cell_pyramids<T: Real>(mesh: &PolyMesh<T>, k: usize) -> Vec<([Vec3<T>; 4], T)> {
    let apex = vertex_mean(mesh, &mesh.cell_vertices(k));
    let mut tets = Vec::new();
    for sf in mesh.cell(k) {
        let (fa, tris) = face_fan(mesh, sf.face);
        let s = sf.sign.value::<T>();
        for (a, b, av) in tris {
            tets.push(([apex, fa, a, b], s * av.dot(fa - apex) / T::lit(3.0)));
        }
    }
    tets
}

pub fn cell_geometry<T: Real>(mesh: &PolyMesh<T>, k: usize) -> Result<CellGeometry<T>, MeshError> {
    let diameter = mesh.cell_diameter(k);
    let tets = cell_pyramids(mesh, k);
    let pyramid_volume: T = tets.iter().map(|t| t.1).sum();
    if !(pyramid_volume > T::zero()) {
        return Err(MeshError::Geometry(format!(
            "cell {k} has nonpositive volume {pyramid_volume}; check face orientation signs"
        )));
    }
    let moment: Vec3<T> = tets.iter().map(|(p, v)| (p[0] + p[1] + p[2] + p[3]) * (*v / T::lit(4.0))).sum();
    let volume = signed_volume(mesh, k);
    Ok(CellGeometry { volume, centroid: moment / pyramid_volume, diameter })
}

/// Cached face and cell geometry for a whole mesh.
#[derive(Clone, Debug)]
pub struct MeshGeometry<T> {
    pub faces: Vec<FaceGeometry<T>>,
    pub cells: Vec<CellGeometry<T>>,
}

impl<T: Real> MeshGeometry<T> {
    pub fn new(mesh: &PolyMesh<T>) -> Result<Self, MeshError> {
        let faces = (0..mesh.num_faces()).map(|f| face_geometry(mesh, f)).collect::<Result<Vec<_>, _>>()?;
        let cells = (0..mesh.num_cells()).map(|k| cell_geometry(mesh, k)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { faces, cells })
    }

    /// Mesh size `h = max_K h_K`.
    pub fn h(&self) -> T {
        self.cells.iter().map(|c| c.diameter).fold(T::zero(), T::max)
    }
}

/// Points and weights of a quadrature rule on one mesh entity.
#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    pub points: Vec<Vec3<T>>,
    pub weights: Vec<T>,
    pub degree: usize,
}

impl<T: Real> QuadratureRule<T> {
    pub fn integrate(&self, f: impl Fn(Vec3<T>) -> T) -> T {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    pub fn integrate_vec(&self, f: impl Fn(Vec3<T>) -> Vec3<T>) -> Vec3<T> {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| f(p) * w).sum()
    }

    pub fn measure(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Rule on the reference triangle: `(s, t)` coordinates along the two legs and
/// weights summing to one.
pub fn triangle_rule(degree: usize) -> Vec<([f64; 2], f64)> {
    match degree {
        0 | 1 => vec![([1.0 / 3.0, 1.0 / 3.0], 1.0)],
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            vec![([a, a], 1.0 / 3.0), ([b, a], 1.0 / 3.0), ([a, b], 1.0 / 3.0)]
        }
        3..=5 => {
            // seven-point symmetric rule, exact to degree five
            let r = 15f64.sqrt();
            let (a1, w1) = ((6.0 - r) / 21.0, (155.0 - r) / 1200.0);
            let (a2, w2) = ((6.0 + r) / 21.0, (155.0 + r) / 1200.0);
            let (b1, b2) = (1.0 - 2.0 * a1, 1.0 - 2.0 * a2);
            vec![
                ([1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
                ([a1, a1], w1),
                ([b1, a1], w1),
                ([a1, b1], w1),
                ([a2, a2], w2),
                ([b2, a2], w2),
                ([a2, b2], w2),
            ]
        }
        _ => {
            // collapsed Gauss product rule
            let n = (degree + 3) / 2;
            let (x, w) = gauss_legendre(n);
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let (a, b) = (x[i], x[j]);
                    out.push(([a, b * (1.0 - a)], 2.0 * w[i] * w[j] * (1.0 - a)));
                }
            }
            out
        }
    }
}

/// Rule on the reference tetrahedron with weights summing to one.
pub fn tetrahedron_rule(degree: usize) -> Vec<([f64; 3], f64)> {
    if degree <= 1 {
        return vec![([0.25, 0.25, 0.25], 1.0)];
    }
    let n = (degree + 4) / 2;
    let (x, w) = gauss_legendre(n);
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                let (a, b, c) = (x[i], x[j], x[l]);
                out.push((
                    [a, b * (1.0 - a), c * (1.0 - a) * (1.0 - b)],
                    6.0 * w[i] * w[j] * w[l] * (1.0 - a) * (1.0 - a) * (1.0 - b),
                ));
            }
        }
    }
    out
}

/// Gauss-Legendre rule on edge `e`, exact for polynomials of degree `degree`.
pub fn edge_quadrature<T: Real>(mesh: &PolyMesh<T>, e: usize, degree: usize) -> QuadratureRule<T> {
    let [a, b] = mesh.edge(e);
    let (pa, pb) = (mesh.vertex(a), mesh.vertex(b));
    let len = pa.distance(pb);
    let (x, w) = gauss_legendre(degree.max(1) / 2 + 1);
    QuadratureRule {
        points: x.iter().map(|&s| pa + (pb - pa) * T::lit(s)).collect(),
        weights: w.iter().map(|&wi| T::lit(wi) * len).collect(),
        degree,
    }
}

/// Fan-triangle rule on face `f`.
pub fn face_quadrature<T: Real>(mesh: &PolyMesh<T>, f: usize, degree: usize) -> QuadratureRule<T> {
    let (apex, tris) = face_fan(mesh, f);
    let normal = tris.iter().map(|t| t.2).sum::<Vec3<T>>().normalized();
    let reference = triangle_rule(degree);
    let mut points = Vec::with_capacity(tris.len() * reference.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (a, b, av) in tris {
        let area = av.dot(normal);
        for &([s, t], w) in &reference {
            points.push(apex + (a - apex) * T::lit(s) + (b - apex) * T::lit(t));
            weights.push(T::lit(w) * area);
        }
    }
    QuadratureRule { points, weights, degree }
}

/// Pyramid-decomposition rule on cell `k`.
pub fn cell_quadrature<T: Real>(mesh: &PolyMesh<T>, k: usize, degree: usize) -> QuadratureRule<T> {
    let reference = tetrahedron_rule(degree);
    let tets = cell_pyramids(mesh, k);
    let mut points = Vec::with_capacity(tets.len() * reference.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (p, vol) in tets {
        for &([u, v, s], w) in &reference {
            points.push(p[0] + (p[1] - p[0]) * T::lit(u) + (p[2] - p[0]) * T::lit(v) + (p[3] - p[0]) * T::lit(s));
            weights.push(T::lit(w) * vol);
        }
    }
    QuadratureRule { points, weights, degree }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshio::{derive_topology, generate_cube_mesh, BoxDomain, RawMesh, Sign, SignedFace};
    use std::f64::consts::PI;

    fn unit_cube() -> PolyMesh<f64> {
        generate_cube_mesh(1, BoxDomain::unit()).unwrap()
    }

    /// L-shaped hexagon (unit square minus the upper-right quarter) extruded to height 1.
    fn l_prism() -> PolyMesh<f64> {
        let base = [(0.0, 0.0), (1.0, 0.0), (1.0, 0.5), (0.5, 0.5), (0.5, 1.0), (0.0, 1.0)];
        let mut vertices = Vec::new();
        for z in [0.0, 1.0] {
            for &(x, y) in &base {
                vertices.push(Vec3::new(x, y, z));
            }
        }
        let m = base.len();
        let mut faces = vec![(0..m).rev().collect::<Vec<_>>(), (m..2 * m).collect()];
        for i in 0..m {
            let j = (i + 1) % m;
            faces.push(vec![i, j, j + m, i + m]);
        }
        let cells = vec![(0..faces.len()).map(|face| SignedFace { face, sign: Sign::Plus }).collect()];
        derive_topology(RawMesh { vertices, faces, cells, name: None }).unwrap()
    }

    #[test]
    fn unit_square_face() {
        let m = unit_cube();
        // bottom z-face is stored counterclockwise seen from +z
        let f = (0..6).find(|&f| m.face(f).iter().all(|&v| m.vertex(v).z == 0.0)).unwrap();
        let g = face_geometry(&m, f).unwrap();
        assert!((g.area - 1.0).abs() < 1e-15);
        assert!((g.centroid - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
        assert!((g.normal - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        assert!((g.xi.cross(g.eta) - g.normal).norm() < 1e-14);

        let mut raw = m.to_raw();
        raw.faces[f].reverse();
        raw.cells[0].iter_mut().filter(|sf| sf.face == f).for_each(|sf| sf.sign = sf.sign.flip());
        let flipped = derive_topology(raw).unwrap();
        let g = face_geometry(&flipped, f).unwrap();
        assert!((g.normal - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn l_shaped_face_and_prism() {
        let m = l_prism();
        let g = face_geometry(&m, 1).unwrap();
        assert!((g.area - 0.75).abs() < 1e-15);
        // rectangles [0,1]x[0,0.5] (area 0.5, centroid (0.5,0.25)) and [0,0.5]x[0.5,1] (0.25, (0.25,0.75))
        let expect = (Vec3::new(0.5, 0.25, 1.0) * 0.5 + Vec3::new(0.25, 0.75, 1.0) * 0.25) / 0.75;
        assert!((g.centroid - expect).norm() < 1e-15);
        let c = cell_geometry(&m, 0).unwrap();
        assert!((c.volume - 0.75).abs() < 1e-15);
        assert!((c.centroid - Vec3::new(expect.x, expect.y, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn unit_cube_cell() {
        let m = unit_cube();
        let c = cell_geometry(&m, 0).unwrap();
        assert!((c.volume - 1.0).abs() < 1e-15);
        assert!((c.centroid - Vec3::new(0.5, 0.5, 0.5)).norm() < 1e-15);
        assert!((c.diameter - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn flipped_sign_gives_nonpositive_volume() {
        let mut raw = unit_cube().to_raw();
        // flip every sign: still closed, but the surface now points inward
        raw.cells[0].iter_mut().for_each(|sf| sf.sign = sf.sign.flip());
        let m = derive_topology(raw).unwrap();
        assert!(matches!(cell_geometry(&m, 0), Err(MeshError::Geometry(_))));
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for p in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn edge_rules() {
        let m = unit_cube();
        for e in 0..m.num_edges() {
            let q = edge_quadrature(&m, e, DEFAULT_EDGE_DEGREE);
            assert_eq!(q.len(), 4);
            assert!((q.measure() - 1.0).abs() < 1e-15);
        }
        let e =
            m.edges().iter().position(|&[a, b]| m.vertex(a) == Vec3::zero() && m.vertex(b) == Vec3::new(1.0, 0.0, 0.0));
        let e = e.unwrap();
        let q = edge_quadrature(&m, e, DEFAULT_EDGE_DEGREE);
        assert!((q.integrate(|p| p.x) - 0.5).abs() < 1e-15);
        assert!((q.integrate(|p| p.x.cos()) - 1f64.sin()).abs() < 1e-9);
        let q = edge_quadrature(&m, e, 13);
        assert!((q.integrate(|p| p.x.cos()) - 1f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn face_and_cell_rules_on_cube() {
        let m = unit_cube();
        let q = face_quadrature(&m, 0, DEFAULT_FACE_DEGREE);
        assert!((q.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        let q = cell_quadrature(&m, 0, DEFAULT_CELL_DEGREE);
        assert!((q.integrate(|p| p.x) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn sine_product_on_pyramid_split_cube() {
        // 24 tetrahedra; the degree-4 rule misses the analytic value by ~1.2e-5,
        // degree 6 is needed to get below 1e-6
        let m = unit_cube();
        let f = |p: Vec3<f64>| (PI * p.x).sin() * (PI * p.y).sin() * (PI * p.z).sin();
        let exact = (2.0 / PI).powi(3);
        let q4 = cell_quadrature(&m, 0, 4).integrate(f);
        assert!((q4 - exact).abs() < 2e-5, "{}", q4 - exact);
        let q6 = cell_quadrature(&m, 0, 6).integrate(f);
        assert!((q6 - exact).abs() < 1e-6, "{}", q6 - exact);
    }

    #[test]
    fn rules_are_exact_on_boxes() {
        let dom = BoxDomain { lo: Vec3::new(0.2, -0.4, 1.0), hi: Vec3::new(1.1, 0.3, 1.5) };
        let m = generate_cube_mesh(1, dom).unwrap();
        let mono_exact = |lo: f64, hi: f64, p: i32| (hi.powi(p + 1) - lo.powi(p + 1)) / (p as f64 + 1.0);
        for degree in 1..=9 {
            let q = cell_quadrature(&m, 0, degree);
            for a in 0..=degree as i32 {
                for b in 0..=(degree as i32 - a) {
                    let c = degree as i32 - a - b;
                    let got = q.integrate(|p: Vec3<f64>| p.x.powi(a) * p.y.powi(b) * p.z.powi(c));
                    let want = mono_exact(0.2, 1.1, a) * mono_exact(-0.4, 0.3, b) * mono_exact(1.0, 1.5, c);
                    assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-3), "deg {degree} ({a},{b},{c})");
                }
            }
            for f in 0..m.num_faces() {
                let g = face_geometry(&m, f).unwrap();
                let q = face_quadrature(&m, f, degree);
                assert!((q.measure() - g.area).abs() < 1e-13 * g.area);
                // linear function integrates to its centroid value
                let lin = |p: Vec3<f64>| 1.0 + 2.0 * p.x - p.y + 0.5 * p.z;
                assert!((q.integrate(lin) - g.area * lin(g.centroid)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn triangle_rules_exact() {
        for degree in 1..=10 {
            let rule = triangle_rule(degree);
            let sum: f64 = rule.iter().map(|r| r.1).sum();
            assert!((sum - 1.0).abs() < 1e-14);
            for a in 0..=degree as i32 {
                let b = degree as i32 - a;
                // int_T s^a t^b = a! b! / (a+b+2)!, normalized by area 1/2
                let fact = |n: i32| (1..=n).map(|i| i as f64).product::<f64>();
                let want = 2.0 * fact(a) * fact(b) / fact(a + b + 2);
                let got: f64 = rule.iter().map(|([s, t], w)| w * s.powi(a) * t.powi(b)).sum();
                assert!((got - want).abs() < 1e-14, "deg {degree} a {a}");
            }
        }
    }

    #[test]
    fn volume_routes_agree_on_prism() {
        let m = l_prism();
        let c = cell_geometry(&m, 0).unwrap();
        let pyr: f64 = cell_pyramids(&m, 0).iter().map(|t| t.1).sum();
        assert!((c.volume - pyr).abs() < 1e-12 * c.volume);
    }
}
