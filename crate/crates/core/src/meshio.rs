//! Polyhedral mesh data model, PVM-JSON I/O, structured generators and
//! validity checks.
//!
//! Orientation conventions:
//! - an edge `(lo, hi)` always has `lo < hi`; its tangent points from `lo` to `hi`;
//! - a face normal follows the stored vertex loop by the right-hand rule;
//! - a cell lists its faces with a [`Sign`] telling whether the stored normal
//!   points out of the cell.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::MeshError;
use crate::geometry;
use crate::scalar::{Real, Vec3};

/// Orientation sign, `+1` or `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn value<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }
}

impl std::ops::Mul for Sign {
    type Output = Sign;
    fn mul(self, o: Sign) -> Sign {
        Sign::from_positive(self == o)
    }
}

/// Face reference inside a cell; `sign` is `Plus` when the stored normal is outward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SignedFace {
    pub face: usize,
    pub sign: Sign,
}

/// Edge reference inside a face loop; `sign` is `Plus` when the canonical
/// tangent agrees with the loop traversal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceEdge {
    pub edge: usize,
    pub sign: Sign,
}

/// Mesh as read from disk, before topology derivation.
#[derive(Clone, Debug, Default)]
pub struct RawMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<Vec<usize>>,
    pub cells: Vec<Vec<SignedFace>>,
    pub name: Option<String>,
}

/// Immutable polyhedral mesh with derived edges, orientation signs and boundary flags.
#[derive(Clone, Debug)]
pub struct PolyMesh<T> {
    vertices: Vec<Vec3<T>>,
    faces: Vec<Vec<usize>>,
    cells: Vec<Vec<SignedFace>>,
    edges: Vec<[usize; 2]>,
    face_edges: Vec<Vec<FaceEdge>>,
    cell_edges: Vec<Vec<usize>>,
    face_cells: Vec<Vec<(usize, Sign)>>,
    vertex_boundary: Vec<bool>,
    edge_boundary: Vec<bool>,
    face_boundary: Vec<bool>,
    name: Option<String>,
}

impl<T: Real> PolyMesh<T> {
    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Vec3<T> {
        self.vertices[v]
    }

    /// Vertex loop of face `f` in stored order.
    pub fn face(&self, f: usize) -> &[usize] {
        &self.faces[f]
    }

    pub fn cell(&self, k: usize) -> &[SignedFace] {
        &self.cells[k]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    /// Edges of face `f` in loop order; entry `i` joins loop vertices `i` and `i + 1`.
    pub fn face_edges(&self, f: usize) -> &[FaceEdge] {
        &self.face_edges[f]
    }

    /// Sorted, deduplicated edges of cell `k`.
    pub fn cell_edges(&self, k: usize) -> &[usize] {
        &self.cell_edges[k]
    }

    /// Cells sharing face `f` together with the face sign in each.
    pub fn face_cells(&self, f: usize) -> &[(usize, Sign)] {
        &self.face_cells[f]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_boundary[v]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_boundary[e]
    }

    pub fn is_boundary_face(&self, f: usize) -> bool {
        self.face_boundary[f]
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn edge_length(&self, e: usize) -> T {
        let [a, b] = self.edges[e];
        self.vertices[a].distance(self.vertices[b])
    }

    /// Unit tangent of edge `e`, pointing from the lower to the higher vertex index.
    pub fn edge_tangent(&self, e: usize) -> Vec3<T> {
        let [a, b] = self.edges[e];
        (self.vertices[b] - self.vertices[a]).normalized()
    }

    pub fn edge_midpoint(&self, e: usize) -> Vec3<T> {
        let [a, b] = self.edges[e];
        (self.vertices[a] + self.vertices[b]) * T::lit(0.5)
    }

    /// Distinct vertices of cell `k` in ascending order.
    pub fn cell_vertices(&self, k: usize) -> Vec<usize> {
        let mut vs: Vec<usize> = self.cells[k].iter().flat_map(|sf| self.faces[sf.face].iter().copied()).collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    /// Largest vertex-to-vertex distance of cell `k`.
    pub fn cell_diameter(&self, k: usize) -> T {
        diameter(&self.vertices, &self.cell_vertices(k))
    }

    pub fn face_diameter(&self, f: usize) -> T {
        diameter(&self.vertices, &self.faces[f])
    }

    /// Number of faces of cell `k` that contain edge `e`.
    pub fn faces_of_cell_containing_edge(&self, k: usize, e: usize) -> usize {
        self.cells[k].iter().filter(|sf| self.face_edges[sf.face].iter().any(|fe| fe.edge == e)).count()
    }

    /// Vertex, face and cell data in the layout [`derive_topology`] accepts.
    pub fn to_raw(&self) -> RawMesh<T> {
        RawMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
            cells: self.cells.clone(),
            name: self.name.clone(),
        }
    }

    /// Copy of the mesh with every vertex mapped through `map`.
    pub fn map_vertices(&self, map: impl Fn(Vec3<T>) -> Vec3<T>) -> Self {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = map(*v);
        }
        out
    }
}

fn diameter<T: Real>(vertices: &[Vec3<T>], ids: &[usize]) -> T {
    let mut best = T::zero();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            best = best.max(vertices[a].distance(vertices[b]));
        }
    }
    best
}

/// Derives edges, orientation signs and boundary flags from vertex loops and
/// signed face lists. Only combinatorial checks are performed here.
pub fn derive_topology<T: Real>(raw: RawMesh<T>) -> Result<PolyMesh<T>, MeshError> {
    let RawMesh { vertices, faces, cells, name } = raw;
    let nv = vertices.len();
    if cells.is_empty() {
        return Err(MeshError::Topology("mesh has no cells".into()));
    }

    for (f, lp) in faces.iter().enumerate() {
        if lp.len() < 3 {
            return Err(MeshError::Topology(format!("face {f} has fewer than 3 vertices")));
        }
        if let Some(&v) = lp.iter().find(|&&v| v >= nv) {
            return Err(MeshError::Topology(format!("face {f} references missing vertex {v}")));
        }
        let mut sorted = lp.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(MeshError::Topology(format!("inconsistent loop: face {f} repeats a vertex")));
        }
    }

    // Edges numbered by sorted (lo, hi) so numbering does not depend on face order.
    let mut edge_map: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    for lp in &faces {
        for i in 0..lp.len() {
            let (a, b) = (lp[i], lp[(i + 1) % lp.len()]);
            edge_map.insert([a.min(b), a.max(b)], 0);
        }
    }
    let mut edges = Vec::with_capacity(edge_map.len());
    for (idx, (key, slot)) in edge_map.iter_mut().enumerate() {
        *slot = idx;
        edges.push(*key);
    }
    let face_edges: Vec<Vec<FaceEdge>> = faces
        .iter()
        .map(|lp| {
            (0..lp.len())
                .map(|i| {
                    let (a, b) = (lp[i], lp[(i + 1) % lp.len()]);
                    FaceEdge { edge: edge_map[&[a.min(b), a.max(b)]], sign: Sign::from_positive(a < b) }
                })
                .collect()
        })
        .collect();

    let mut face_cells: Vec<Vec<(usize, Sign)>> = vec![Vec::new(); faces.len()];
    for (k, cell) in cells.iter().enumerate() {
        if cell.len() < 4 {
            return Err(MeshError::Topology(format!("cell {k} has fewer than 4 faces")));
        }
        for sf in cell {
            if sf.face >= faces.len() {
                return Err(MeshError::Topology(format!("cell {k} references missing face {}", sf.face)));
            }
            if face_cells[sf.face].iter().any(|&(c, _)| c == k) {
                return Err(MeshError::Topology(format!("cell {k} lists face {} twice", sf.face)));
            }
            face_cells[sf.face].push((k, sf.sign));
        }
    }
    for (f, users) in face_cells.iter().enumerate() {
        match users.as_slice() {
            [] | [_] => {}
            [(_, s0), (_, s1)] => {
                if s0 == s1 {
                    return Err(MeshError::Topology(format!(
                        "inconsistent face sharing: face {f} has the same sign in both cells"
                    )));
                }
            }
            _ => {
                return Err(MeshError::Topology(format!(
                    "dangling face: face {f} is referenced by {} cells",
                    users.len()
                )))
            }
        }
    }

    // Closed, consistently oriented cell surfaces: every edge of a cell is
    // traversed exactly twice, once in each direction.
    let mut cell_edges = Vec::with_capacity(cells.len());
    for (k, cell) in cells.iter().enumerate() {
        let mut tally: BTreeMap<usize, (usize, i32)> = BTreeMap::new();
        for sf in cell {
            for fe in &face_edges[sf.face] {
                let entry = tally.entry(fe.edge).or_insert((0, 0));
                entry.0 += 1;
                entry.1 += (sf.sign * fe.sign).as_i32();
            }
        }
        for (&e, &(count, sum)) in &tally {
            if count != 2 {
                return Err(MeshError::Topology(format!(
                    "open cell boundary: edge {e} appears in {count} faces of cell {k}"
                )));
            }
            if sum != 0 {
                return Err(MeshError::Topology(format!(
                    "inconsistent orientation: cell {k} traverses edge {e} twice in the same direction"
                )));
            }
        }
        cell_edges.push(tally.into_keys().collect());
    }

    if let Some(f) = face_cells.iter().position(|u| u.is_empty()) {
        return Err(MeshError::Topology(format!("face {f} is not used by any cell")));
    }

    let face_boundary: Vec<bool> = face_cells.iter().map(|u| u.len() == 1).collect();
    let mut edge_boundary = vec![false; edges.len()];
    let mut vertex_boundary = vec![false; nv];
    for (f, lp) in faces.iter().enumerate() {
        if face_boundary[f] {
            for fe in &face_edges[f] {
                edge_boundary[fe.edge] = true;
            }
            for &v in lp {
                vertex_boundary[v] = true;
            }
        }
    }

    Ok(PolyMesh {
        vertices,
        faces,
        cells,
        edges,
        face_edges,
        cell_edges,
        face_cells,
        vertex_boundary,
        edge_boundary,
        face_boundary,
        name,
    })
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxDomain<T> {
    pub lo: Vec3<T>,
    pub hi: Vec3<T>,
}

impl<T: Real> BoxDomain<T> {
    pub fn unit() -> Self {
        Self { lo: Vec3::zero(), hi: Vec3::new(T::one(), T::one(), T::one()) }
    }

    fn grid_point(&self, n: usize, i: usize, j: usize, k: usize) -> Vec3<T> {
        let nn = T::from_usize_lossy(n);
        let frac = |lo: T, hi: T, m: usize| lo + (hi - lo) * (T::from_usize_lossy(m) / nn);
        Vec3::new(frac(self.lo.x, self.hi.x, i), frac(self.lo.y, self.hi.y, j), frac(self.lo.z, self.hi.z, k))
    }

    fn check(&self) -> Result<(), MeshError> {
        let d = self.hi - self.lo;
        if d.x > T::zero() && d.y > T::zero() && d.z > T::zero() {
            Ok(())
        } else {
            Err(MeshError::InvalidInput("box must have positive extent on every axis".into()))
        }
    }
}

/// Structured grid indexing helper shared by the generators.
struct Grid {
    n: usize,
}

impl Grid {
    fn vertex(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.n + 1) + j) * (self.n + 1) + k
    }

    fn points<T: Real>(&self, domain: &BoxDomain<T>) -> Vec<Vec3<T>> {
        let n = self.n;
        let mut pts = Vec::with_capacity((n + 1).pow(3));
        for i in 0..=n {
            for j in 0..=n {
                for k in 0..=n {
                    pts.push(domain.grid_point(n, i, j, k));
                }
            }
        }
        pts
    }

    // Face blocks: x-normal (n+1)*n*n, then y-normal n*(n+1)*n, then z-normal n*n*(n+1).
    fn x_face(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    fn y_face(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.n;
        (n + 1) * n * n + (i * (n + 1) + j) * n + k
    }

    fn z_face(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.n;
        2 * (n + 1) * n * n + (i * n + j) * (n + 1) + k
    }

    /// Vertical (x- and y-normal) faces in block order, normals along +x / +y.
    fn vertical_faces(&self) -> Vec<Vec<usize>> {
        let n = self.n;
        let v = |i, j, k| self.vertex(i, j, k);
        let mut faces = Vec::new();
        for i in 0..=n {
            for j in 0..n {
                for k in 0..n {
                    faces.push(vec![v(i, j, k), v(i, j + 1, k), v(i, j + 1, k + 1), v(i, j, k + 1)]);
                }
            }
        }
        for i in 0..n {
            for j in 0..=n {
                for k in 0..n {
                    faces.push(vec![v(i, j, k), v(i, j, k + 1), v(i + 1, j, k + 1), v(i + 1, j, k)]);
                }
            }
        }
        faces
    }
}

/// Uniform hexahedral mesh of `n^3` cells on `domain`, ordered lexicographically by `(i, j, k)`.
pub fn generate_cube_mesh<T: Real>(n: usize, domain: BoxDomain<T>) -> Result<PolyMesh<T>, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidInput("cube mesh needs n >= 1".into()));
    }
    domain.check()?;
    let g = Grid { n };
    let v = |i, j, k| g.vertex(i, j, k);
    let mut faces = g.vertical_faces();
    for i in 0..n {
        for j in 0..n {
            for k in 0..=n {
                faces.push(vec![v(i, j, k), v(i + 1, j, k), v(i + 1, j + 1, k), v(i, j + 1, k)]);
            }
        }
    }
    let mut cells = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                cells.push(vec![
                    SignedFace { face: g.x_face(i, j, k), sign: Sign::Minus },
                    SignedFace { face: g.x_face(i + 1, j, k), sign: Sign::Plus },
                    SignedFace { face: g.y_face(i, j, k), sign: Sign::Minus },
                    SignedFace { face: g.y_face(i, j + 1, k), sign: Sign::Plus },
                    SignedFace { face: g.z_face(i, j, k), sign: Sign::Minus },
                    SignedFace { face: g.z_face(i, j, k + 1), sign: Sign::Plus },
                ]);
            }
        }
    }
    derive_topology(RawMesh { vertices: g.points(&domain), faces, cells, name: Some(format!("cube{}", n * n * n)) })
}

/// Triangular-prism mesh: every grid column cell is split along its `x = y`
/// diagonal into two right prisms, giving `2 n^3` cells.
pub fn generate_prism_mesh<T: Real>(n: usize, domain: BoxDomain<T>) -> Result<PolyMesh<T>, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidInput("prism mesh needs n >= 1".into()));
    }
    domain.check()?;
    let g = Grid { n };
    let v = |i, j, k| g.vertex(i, j, k);
    let mut faces = g.vertical_faces();
    let diag0 = faces.len();
    let diag = |i: usize, j: usize, k: usize| diag0 + (i * n + j) * n + k;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                faces.push(vec![v(i, j, k), v(i + 1, j + 1, k), v(i + 1, j + 1, k + 1), v(i, j, k + 1)]);
            }
        }
    }
    // Horizontal triangles: lower-right (a) and upper-left (b) halves, normals +z.
    let tri0 = faces.len();
    let tri = |i: usize, j: usize, k: usize, upper: usize| tri0 + ((i * n + j) * (n + 1) + k) * 2 + upper;
    for i in 0..n {
        for j in 0..n {
            for k in 0..=n {
                faces.push(vec![v(i, j, k), v(i + 1, j, k), v(i + 1, j + 1, k)]);
                faces.push(vec![v(i, j, k), v(i + 1, j + 1, k), v(i, j + 1, k)]);
            }
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n * n);
    let sf = |face, sign| SignedFace { face, sign };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                cells.push(vec![
                    sf(tri(i, j, k, 0), Sign::Minus),
                    sf(tri(i, j, k + 1, 0), Sign::Plus),
                    sf(g.y_face(i, j, k), Sign::Minus),
                    sf(g.x_face(i + 1, j, k), Sign::Plus),
                    sf(diag(i, j, k), Sign::Minus),
                ]);
                cells.push(vec![
                    sf(tri(i, j, k, 1), Sign::Minus),
                    sf(tri(i, j, k + 1, 1), Sign::Plus),
                    sf(g.x_face(i, j, k), Sign::Minus),
                    sf(g.y_face(i, j + 1, k), Sign::Plus),
                    sf(diag(i, j, k), Sign::Plus),
                ]);
            }
        }
    }
    derive_topology(RawMesh {
        vertices: g.points(&domain),
        faces,
        cells,
        name: Some(format!("prism{}", 2 * n * n * n)),
    })
}

/// Extrudes a planar polygonal partition into `layers` slabs between `z0` and `z1`.
///
/// `polygons` index into `points` and must be counter-clockwise. Polygons that
/// share a side must both list every vertex on it.
pub fn generate_extruded_mesh<T: Real>(
    points: &[[T; 2]],
    polygons: &[Vec<usize>],
    layers: usize,
    z0: T,
    z1: T,
) -> Result<PolyMesh<T>, MeshError> {
    if layers == 0 || !(z1 > z0) {
        return Err(MeshError::InvalidInput("extrusion needs layers >= 1 and z1 > z0".into()));
    }
    let np = points.len();
    let vid = |p: usize, l: usize| l * np + p;
    let mut vertices = Vec::with_capacity(np * (layers + 1));
    for l in 0..=layers {
        let z = z0 + (z1 - z0) * (T::from_usize_lossy(l) / T::from_usize_lossy(layers));
        vertices.extend(points.iter().map(|p| Vec3::new(p[0], p[1], z)));
    }
    let mut faces = Vec::new();
    // horizontal faces, normal +z, indexed by (level, polygon)
    for l in 0..=layers {
        for poly in polygons {
            faces.push(poly.iter().map(|&p| vid(p, l)).collect::<Vec<_>>());
        }
    }
    let horizontal = |l: usize, c: usize| l * polygons.len() + c;
    // one lateral column per undirected side, oriented by its first traversal
    let mut sides: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut side_list = Vec::new();
    for poly in polygons {
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            sides.entry((a.min(b), a.max(b))).or_insert_with(|| {
                side_list.push((a, b));
                side_list.len() - 1
            });
        }
    }
    let lateral0 = faces.len();
    for &(a, b) in &side_list {
        for l in 0..layers {
            faces.push(vec![vid(a, l), vid(b, l), vid(b, l + 1), vid(a, l + 1)]);
        }
    }
    let mut cells = Vec::with_capacity(layers * polygons.len());
    for l in 0..layers {
        for (c, poly) in polygons.iter().enumerate() {
            let mut cell = vec![
                SignedFace { face: horizontal(l, c), sign: Sign::Minus },
                SignedFace { face: horizontal(l + 1, c), sign: Sign::Plus },
            ];
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                let s = sides[&(a.min(b), a.max(b))];
                cell.push(SignedFace {
                    face: lateral0 + s * layers + l,
                    sign: Sign::from_positive(side_list[s] == (a, b)),
                });
            }
            cells.push(cell);
        }
    }
    derive_topology(RawMesh { vertices, faces, cells, name: None })
}

/// Nonconvex mesh of the box: each 2x2 block of an `n x n` grid in the
/// `xy` plane is split into an L-shaped hexagon and a square, then extruded
/// into `n` layers. `n` must be even.
pub fn generate_l_block_mesh<T: Real>(n: usize, domain: BoxDomain<T>) -> Result<PolyMesh<T>, MeshError> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(MeshError::InvalidInput("L-block mesh needs a positive even n".into()));
    }
    domain.check()?;
    let mut points = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let p = domain.grid_point(n, i, j, 0);
            points.push([p.x, p.y]);
        }
    }
    let v = |i: usize, j: usize| j * (n + 1) + i;
    let mut polygons = Vec::new();
    for bj in (0..n).step_by(2) {
        for bi in (0..n).step_by(2) {
            let (i, j) = (bi, bj);
            polygons.push(vec![
                v(i, j),
                v(i + 1, j),
                v(i + 2, j),
                v(i + 2, j + 1),
                v(i + 1, j + 1),
                v(i + 1, j + 2),
                v(i, j + 2),
                v(i, j + 1),
            ]);
            polygons.push(vec![v(i + 1, j + 1), v(i + 2, j + 1), v(i + 2, j + 2), v(i + 1, j + 2)]);
        }
    }
    let mesh = generate_extruded_mesh(&points, &polygons, n, domain.lo.z, domain.hi.z)?;
    Ok(mesh.with_name(format!("lblock{}", polygons.len() * n)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PvmJson {
    vertices: Vec<[f64; 3]>,
    faces: Vec<Vec<usize>>,
    cells: Vec<Vec<i64>>,
    #[serde(default)]
    name: Option<String>,
}

/// Parses PVM-JSON text into raw (underived) mesh data.
pub fn parse_pvm_json<T: Real>(text: &str) -> Result<RawMesh<T>, MeshError> {
    let doc: PvmJson = serde_json::from_str(text).map_err(|e| MeshError::Parse(e.to_string()))?;
    let mut cells = Vec::with_capacity(doc.cells.len());
    for (k, cell) in doc.cells.iter().enumerate() {
        let mut out = Vec::with_capacity(cell.len());
        for &idx in cell {
            if idx == 0 {
                return Err(MeshError::Parse(format!(
                    "cell {k}: face references are 1-based and signed, 0 is not allowed"
                )));
            }
            out.push(SignedFace { face: (idx.unsigned_abs() - 1) as usize, sign: Sign::from_positive(idx > 0) });
        }
        cells.push(out);
    }
    Ok(RawMesh {
        vertices: doc.vertices.into_iter().map(Vec3::from_f64).collect(),
        faces: doc.faces,
        cells,
        name: doc.name,
    })
}

/// Serializes to PVM-JSON, writing coordinates with 17 significant digits.
pub fn to_pvm_json<T: Real>(mesh: &PolyMesh<T>) -> String {
    let mut s = String::from("{\n");
    if let Some(name) = mesh.name() {
        let _ = writeln!(s, "  \"name\": {},", serde_json::Value::String(name.to_owned()));
    }
    s.push_str("  \"vertices\": [\n");
    for (i, p) in mesh.vertices().iter().enumerate() {
        let [x, y, z] = p.to_f64();
        let sep = if i + 1 < mesh.num_vertices() { "," } else { "" };
        let _ = writeln!(s, "    [{x:.16e}, {y:.16e}, {z:.16e}]{sep}");
    }
    s.push_str("  ],\n  \"faces\": [\n");
    for f in 0..mesh.num_faces() {
        let ids: Vec<String> = mesh.face(f).iter().map(|v| v.to_string()).collect();
        let sep = if f + 1 < mesh.num_faces() { "," } else { "" };
        let _ = writeln!(s, "    [{}]{sep}", ids.join(", "));
    }
    s.push_str("  ],\n  \"cells\": [\n");
    for k in 0..mesh.num_cells() {
        let ids: Vec<String> =
            mesh.cell(k).iter().map(|sf| (sf.sign.as_i32() as i64 * (sf.face as i64 + 1)).to_string()).collect();
        let sep = if k + 1 < mesh.num_cells() { "," } else { "" };
        let _ = writeln!(s, "    [{}]{sep}", ids.join(", "));
    }
    s.push_str("  ]\n}\n");
    s
}

/// Reads a PVM-JSON file and returns a fully derived and checked mesh.
pub fn load_mesh<T: Real>(path: impl AsRef<Path>) -> Result<PolyMesh<T>, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io { path: path.to_path_buf(), source })?;
    mesh_from_pvm_json(&text)
}

/// Parses, derives and checks a PVM-JSON document.
pub fn mesh_from_pvm_json<T: Real>(text: &str) -> Result<PolyMesh<T>, MeshError> {
    let mesh = derive_topology(parse_pvm_json(text)?)?;
    check_geometry(&mesh)?;
    Ok(mesh)
}

pub fn save_mesh<T: Real>(mesh: &PolyMesh<T>, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    std::fs::write(path, to_pvm_json(mesh)).map_err(|source| MeshError::Io { path: path.to_path_buf(), source })
}

/// Turns the first hard violation of [`validate_mesh`] into an error.
pub fn check_geometry<T: Real>(mesh: &PolyMesh<T>) -> Result<(), MeshError> {
    let report = validate_mesh(mesh);
    match report.violations.first() {
        None => Ok(()),
        Some(v @ Violation::OpenSurface { .. }) => Err(MeshError::Topology(v.to_string())),
        Some(v) => Err(MeshError::Geometry(v.to_string())),
    }
}

/// Sizes and observed regularity ratios of a mesh.
#[derive(Clone, Debug)]
pub struct MeshStats<T> {
    pub h: T,
    pub cell_diameters: Vec<T>,
    pub face_diameters: Vec<T>,
    pub edge_lengths: Vec<T>,
    /// Smallest `h_F / h_K` over faces `F` of cells `K`.
    pub min_face_to_cell: T,
    /// Smallest `h_e / h_F` over edges `e` of faces `F`.
    pub min_edge_to_face: T,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_faces: usize,
    pub num_cells: usize,
}

pub fn mesh_stats<T: Real>(mesh: &PolyMesh<T>) -> MeshStats<T> {
    let cell_diameters: Vec<T> = (0..mesh.num_cells()).map(|k| mesh.cell_diameter(k)).collect();
    let face_diameters: Vec<T> = (0..mesh.num_faces()).map(|f| mesh.face_diameter(f)).collect();
    let edge_lengths: Vec<T> = (0..mesh.num_edges()).map(|e| mesh.edge_length(e)).collect();
    let mut min_face_to_cell = T::infinity();
    for (k, &hk) in cell_diameters.iter().enumerate() {
        for sf in mesh.cell(k) {
            min_face_to_cell = min_face_to_cell.min(face_diameters[sf.face] / hk);
        }
    }
    let mut min_edge_to_face = T::infinity();
    for (f, &hf) in face_diameters.iter().enumerate() {
        for fe in mesh.face_edges(f) {
            min_edge_to_face = min_edge_to_face.min(edge_lengths[fe.edge] / hf);
        }
    }
    MeshStats {
        h: cell_diameters.iter().copied().fold(T::zero(), T::max),
        cell_diameters,
        face_diameters,
        edge_lengths,
        min_face_to_cell,
        min_edge_to_face,
        num_vertices: mesh.num_vertices(),
        num_edges: mesh.num_edges(),
        num_faces: mesh.num_faces(),
        num_cells: mesh.num_cells(),
    }
}

/// Hard invariant violations found by [`validate_mesh`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DegenerateFace { face: usize },
    NonPlanarFace { face: usize, residual: f64 },
    SelfIntersectingFace { face: usize },
    OpenSurface { cell: usize, residual: f64 },
    NonPositiveVolume { cell: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::DegenerateFace { face } => write!(f, "face {face} has zero area"),
            Violation::NonPlanarFace { face, residual } => {
                write!(f, "face {face} is not planar (distance to plane {residual:e})")
            }
            Violation::SelfIntersectingFace { face } => {
                write!(f, "face {face} boundary intersects itself")
            }
            Violation::OpenSurface { cell, residual } => {
                write!(f, "open cell boundary: cell {cell} area vectors do not close (residual {residual:e})")
            }
            Violation::NonPositiveVolume { cell } => {
                write!(f, "cell {cell} has nonpositive volume")
            }
        }
    }
}

/// Report-only mesh check; regularity ratios are observed, never enforced.
#[derive(Clone, Debug)]
pub struct ValidationReport<T> {
    /// Max vertex distance to the face plane, per face.
    pub planarity_residuals: Vec<T>,
    /// `|sum_F sign |F| n_F|` per cell.
    pub closed_surface_residuals: Vec<T>,
    pub min_face_to_cell: T,
    pub min_edge_to_face: T,
    pub violations: Vec<Violation>,
}

impl<T> ValidationReport<T> {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const PLANARITY_TOL: f64 = 1e-10;
pub const CLOSURE_TOL: f64 = 1e-12;

pub fn validate_mesh<T: Real>(mesh: &PolyMesh<T>) -> ValidationReport<T> {
    let stats = mesh_stats(mesh);
    let mut violations = Vec::new();
    let mut planarity = vec![T::zero(); mesh.num_faces()];
    let mut area_vectors = vec![Vec3::zero(); mesh.num_faces()];
    let mut degenerate = vec![false; mesh.num_faces()];
    for f in 0..mesh.num_faces() {
        let area_vec = geometry::face_area_vector(mesh, f);
        area_vectors[f] = area_vec;
        let hf = stats.face_diameters[f];
        if hf <= T::zero() || area_vec.norm() <= T::epsilon() * hf * hf {
            degenerate[f] = true;
            violations.push(Violation::DegenerateFace { face: f });
            continue;
        }
        let n = area_vec.normalized();
        let lp = mesh.face(f);
        let mean: Vec3<T> = lp.iter().map(|&v| mesh.vertex(v)).sum::<Vec3<T>>() / T::from_usize_lossy(lp.len());
        let res = lp.iter().map(|&v| (mesh.vertex(v) - mean).dot(n).abs()).fold(T::zero(), T::max);
        planarity[f] = res;
        if res > T::lit(PLANARITY_TOL) * hf {
            violations.push(Violation::NonPlanarFace { face: f, residual: res.as_f64() });
        } else if loop_self_intersects(mesh, f, n) {
            violations.push(Violation::SelfIntersectingFace { face: f });
        }
    }
    let mut closure = vec![T::zero(); mesh.num_cells()];
    for k in 0..mesh.num_cells() {
        let sum: Vec3<T> = mesh.cell(k).iter().map(|sf| area_vectors[sf.face] * sf.sign.value()).sum();
        closure[k] = sum.norm();
        let hk = stats.cell_diameters[k];
        if closure[k] > T::lit(CLOSURE_TOL) * hk * hk {
            violations.push(Violation::OpenSurface { cell: k, residual: closure[k].as_f64() });
        } else if !mesh.cell(k).iter().any(|sf| degenerate[sf.face]) && geometry::signed_volume(mesh, k) <= T::zero() {
            violations.push(Violation::NonPositiveVolume { cell: k });
        }
    }
    ValidationReport {
        planarity_residuals: planarity,
        closed_surface_residuals: closure,
        min_face_to_cell: stats.min_face_to_cell,
        min_edge_to_face: stats.min_edge_to_face,
        violations,
    }
}

/// Checks non-adjacent loop segments for intersection in the face plane.
fn loop_self_intersects<T: Real>(mesh: &PolyMesh<T>, f: usize, n: Vec3<T>) -> bool {
    let lp = mesh.face(f);
    let m = lp.len();
    if m < 4 {
        return false;
    }
    let p0 = mesh.vertex(lp[0]);
    let u = {
        let d = mesh.vertex(lp[1]) - p0;
        (d - n * d.dot(n)).normalized()
    };
    let w = n.cross(u);
    let pts: Vec<(T, T)> = lp
        .iter()
        .map(|&v| {
            let d = mesh.vertex(v) - p0;
            (d.dot(u), d.dot(w))
        })
        .collect();
    let orient = |a: (T, T), b: (T, T), c: (T, T)| (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    for i in 0..m {
        for j in i + 1..m {
            if j == i + 1 || (i == 0 && j == m - 1) {
                continue;
            }
            let (a, b) = (pts[i], pts[(i + 1) % m]);
            let (c, d) = (pts[j], pts[(j + 1) % m]);
            let d1 = orient(c, d, a);
            let d2 = orient(c, d, b);
            let d3 = orient(a, b, c);
            let d4 = orient(a, b, d);
            if d1 * d2 < T::zero() && d3 * d4 < T::zero() {
                return true;
            }
        }
    }
    false
}
