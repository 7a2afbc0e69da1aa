//! Discrete de Rham complex: DOF numbering, signed incidence operators,
//! element Π⁰ projectors and interpolation into the nodal, edge and face spaces.
//!
//! Edge DOFs are tangential components along the canonical edge tangent
//! (low to high vertex index). Face DOFs are normal components along the stored
//! face normal. Per-cell work applies the orientation signs explicitly.

use crate::geometry::{self, MeshGeometry};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::meshio::PolyMesh;
use crate::scalar::{Real, Vec3};

/// DOF counts, Dirichlet masks and interior numbering for the three spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct DeRhamDofs {
    pub node_boundary: Vec<bool>,
    pub edge_boundary: Vec<bool>,
    pub face_boundary: Vec<bool>,
    pub interior_nodes: Vec<usize>,
    pub interior_edges: Vec<usize>,
    pub interior_faces: Vec<usize>,
}

impl DeRhamDofs {
    pub fn new<T: Real>(mesh: &PolyMesh<T>) -> Self {
        let node_boundary: Vec<bool> = (0..mesh.num_vertices()).map(|v| mesh.is_boundary_vertex(v)).collect();
        let edge_boundary: Vec<bool> = (0..mesh.num_edges()).map(|e| mesh.is_boundary_edge(e)).collect();
        let face_boundary: Vec<bool> = (0..mesh.num_faces()).map(|f| mesh.is_boundary_face(f)).collect();
        let interior = |mask: &[bool]| (0..mask.len()).filter(|&i| !mask[i]).collect();
        Self {
            interior_nodes: interior(&node_boundary),
            interior_edges: interior(&edge_boundary),
            interior_faces: interior(&face_boundary),
            node_boundary,
            edge_boundary,
            face_boundary,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_boundary.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_boundary.len()
    }

    pub fn num_faces(&self) -> usize {
        self.face_boundary.len()
    }

    /// Interior edge values from a full edge vector.
    pub fn gather_edges<T: Copy>(&self, full: &[T]) -> Vec<T> {
        self.interior_edges.iter().map(|&e| full[e]).collect()
    }

    /// Full edge vector with zeros on boundary edges.
    pub fn scatter_edges<T: Real>(&self, interior: &[T]) -> Vec<T> {
        let mut full = vec![T::zero(); self.num_edges()];
        for (&e, &v) in self.interior_edges.iter().zip(interior) {
            full[e] = v;
        }
        full
    }

    /// Zeroes boundary entries in place.
    pub fn mask_edges<T: Real>(&self, full: &mut [T]) {
        for (v, &b) in full.iter_mut().zip(&self.edge_boundary) {
            if b {
                *v = T::zero();
            }
        }
    }

    pub fn mask_faces<T: Real>(&self, full: &mut [T]) {
        for (v, &b) in full.iter_mut().zip(&self.face_boundary) {
            if b {
                *v = T::zero();
            }
        }
    }
}

/// Discrete gradient (nodes to edges).
pub fn gradient_matrix<T: Real>(mesh: &PolyMesh<T>) -> SparseMatrix<T> {
    let mut t = Vec::with_capacity(2 * mesh.num_edges());
    for (e, &[lo, hi]) in mesh.edges().iter().enumerate() {
        let inv = T::one() / mesh.edge_length(e);
        t.push((e, hi, inv));
        t.push((e, lo, -inv));
    }
    SparseMatrix::from_triplets(mesh.num_edges(), mesh.num_vertices(), t)
}

/// Discrete curl (edges to faces), from Stokes' theorem on each face.
pub fn curl_matrix<T: Real>(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>) -> SparseMatrix<T> {
    let mut t = Vec::new();
    for f in 0..mesh.num_faces() {
        let area = geom.faces[f].area;
        for fe in mesh.face_edges(f) {
            t.push((f, fe.edge, fe.sign.value::<T>() * mesh.edge_length(fe.edge) / area));
        }
    }
    SparseMatrix::from_triplets(mesh.num_faces(), mesh.num_edges(), t)
}

/// Discrete divergence (faces to cells), from the divergence theorem on each cell.
pub fn divergence_matrix<T: Real>(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>) -> SparseMatrix<T> {
    let mut t = Vec::new();
    for k in 0..mesh.num_cells() {
        let vol = geom.cells[k].volume;
        for sf in mesh.cell(k) {
            t.push((k, sf.face, sf.sign.value::<T>() * geom.faces[sf.face].area / vol));
        }
    }
    SparseMatrix::from_triplets(mesh.num_cells(), mesh.num_faces(), t)
}

#[derive(Clone, Debug)]
pub struct IncidenceOps<T> {
    pub grad: SparseMatrix<T>,
    pub curl: SparseMatrix<T>,
    pub div: SparseMatrix<T>,
}

impl<T: Real> IncidenceOps<T> {
    pub fn new(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>) -> Self {
        Self { grad: gradient_matrix(mesh), curl: curl_matrix(mesh, geom), div: divergence_matrix(mesh, geom) }
    }
}

fn column<T: Real>(m: &mut DenseMatrix<T>, c: usize, v: Vec3<T>) {
    for r in 0..3 {
        m[(r, c)] = v[r];
    }
}

/// Matrix applying a 3 x n projector to a DOF vector.
pub fn apply_projector<T: Real>(p: &DenseMatrix<T>, dofs: &[T]) -> Vec3<T> {
    let v = p.mul_vec(dofs);
    Vec3::new(v[0], v[1], v[2])
}

/// Face average of the tangential trace, as a 3 x (edges of `f`) matrix with
/// columns in `mesh.face_edges(f)` order.
pub fn pi0_face_tangential<T: Real>(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>, f: usize) -> DenseMatrix<T> {
    let fg = &geom.faces[f];
    let edges = mesh.face_edges(f);
    let mut p = DenseMatrix::zeros(3, edges.len());
    for (j, fe) in edges.iter().enumerate() {
        let arm = fg.normal.cross(mesh.edge_midpoint(fe.edge) - fg.centroid);
        let w = fe.sign.value::<T>() * mesh.edge_length(fe.edge) / fg.area;
        column(&mut p, j, arm * w);
    }
    p
}

/// Local column of global edge `e` in cell `k` (columns follow `mesh.cell_edges(k)`).
pub fn local_edge_index<T: Real>(mesh: &PolyMesh<T>, k: usize, e: usize) -> usize {
    mesh.cell_edges(k).binary_search(&e).expect("edge belongs to cell")
}

/// Cell average of an edge-space function, as a 3 x (edges of `k`) matrix.
pub fn pi0_edge_cell<T: Real>(
    mesh: &PolyMesh<T>,
    geom: &MeshGeometry<T>,
    k: usize,
    face_projectors: &[DenseMatrix<T>],
) -> DenseMatrix<T> {
    let cg = &geom.cells[k];
    let mut p = DenseMatrix::zeros(3, mesh.cell_edges(k).len());
    let scale = T::one() / (T::lit(2.0) * cg.volume);
    for sf in mesh.cell(k) {
        let fg = &geom.faces[sf.face];
        let n_out = fg.normal * sf.sign.value::<T>();
        let arm = fg.centroid - cg.centroid;
        let d = n_out.dot(arm);
        let pf = &face_projectors[sf.face];
        for (j, fe) in mesh.face_edges(sf.face).iter().enumerate() {
            let pi = Vec3::new(pf[(0, j)], pf[(1, j)], pf[(2, j)]);
            let contrib = (pi * d - n_out * arm.dot(pi)) * (fg.area * scale);
            let c = local_edge_index(mesh, k, fe.edge);
            for r in 0..3 {
                p[(r, c)] += contrib[r];
            }
        }
    }
    p
}

/// Cell average of a face-space function, as a 3 x (faces of `k`) matrix with
/// columns in `mesh.cell(k)` order.
pub fn pi0_face_cell<T: Real>(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>, k: usize) -> DenseMatrix<T> {
    let cg = &geom.cells[k];
    let faces = mesh.cell(k);
    let mut p = DenseMatrix::zeros(3, faces.len());
    for (j, sf) in faces.iter().enumerate() {
        let fg = &geom.faces[sf.face];
        column(&mut p, j, (fg.centroid - cg.centroid) * (sf.sign.value::<T>() * fg.area / cg.volume));
    }
    p
}

/// All element projectors of a mesh.
#[derive(Clone, Debug)]
pub struct ElementOperators<T> {
    pub face_tangential: Vec<DenseMatrix<T>>,
    pub edge_cell: Vec<DenseMatrix<T>>,
    pub face_cell: Vec<DenseMatrix<T>>,
}

impl<T: Real> ElementOperators<T> {
    pub fn new(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>) -> Self {
        let face_tangential: Vec<_> = (0..mesh.num_faces()).map(|f| pi0_face_tangential(mesh, geom, f)).collect();
        let edge_cell = (0..mesh.num_cells()).map(|k| pi0_edge_cell(mesh, geom, k, &face_tangential)).collect();
        let face_cell = (0..mesh.num_cells()).map(|k| pi0_face_cell(mesh, geom, k)).collect();
        Self { face_tangential, edge_cell, face_cell }
    }

    /// Π⁰ of a global edge vector on cell `k`.
    pub fn edge_average(&self, mesh: &PolyMesh<T>, k: usize, edge_dofs: &[T]) -> Vec3<T> {
        let local: Vec<T> = mesh.cell_edges(k).iter().map(|&e| edge_dofs[e]).collect();
        apply_projector(&self.edge_cell[k], &local)
    }

    /// Π⁰ of a global face vector on cell `k`.
    pub fn face_average(&self, mesh: &PolyMesh<T>, k: usize, face_dofs: &[T]) -> Vec3<T> {
        let local: Vec<T> = mesh.cell(k).iter().map(|sf| face_dofs[sf.face]).collect();
        apply_projector(&self.face_cell[k], &local)
    }
}

/// `v_e = (1/|e|) ∫_e field · t_e` on every edge, boundary included.
pub fn interpolate_edge<T: Real>(mesh: &PolyMesh<T>, field: impl Fn(Vec3<T>) -> Vec3<T>, degree: usize) -> Vec<T> {
    (0..mesh.num_edges())
        .map(|e| {
            let t = mesh.edge_tangent(e);
            let q = geometry::edge_quadrature(mesh, e, degree);
            q.integrate(|x| field(x).dot(t)) / mesh.edge_length(e)
        })
        .collect()
}

/// `ψ_F = (1/|F|) ∫_F field · n_F` on every face, boundary included.
pub fn interpolate_face<T: Real>(
    mesh: &PolyMesh<T>,
    geom: &MeshGeometry<T>,
    field: impl Fn(Vec3<T>) -> Vec3<T>,
    degree: usize,
) -> Vec<T> {
    (0..mesh.num_faces())
        .map(|f| {
            let fg = &geom.faces[f];
            let q = geometry::face_quadrature(mesh, f, degree);
            q.integrate(|x| field(x).dot(fg.normal)) / fg.area
        })
        .collect()
}

/// Vertex values of a scalar field.
pub fn interpolate_node<T: Real>(mesh: &PolyMesh<T>, field: impl Fn(Vec3<T>) -> T) -> Vec<T> {
    mesh.vertices().iter().map(|&p| field(p)).collect()
}

/// Cell averages of a scalar field.
pub fn cell_average<T: Real>(
    mesh: &PolyMesh<T>,
    geom: &MeshGeometry<T>,
    field: impl Fn(Vec3<T>) -> T,
    degree: usize,
) -> Vec<T> {
    (0..mesh.num_cells())
        .map(|k| geometry::cell_quadrature(mesh, k, degree).integrate(&field) / geom.cells[k].volume)
        .collect()
}
