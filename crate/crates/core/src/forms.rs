//! Piecewise-constant material sampling and the stabilized discrete L²
//! products on the edge and face spaces.

use crate::derham::{DeRhamDofs, ElementOperators};
use crate::error::{Error, Result};
use crate::geometry::MeshGeometry;
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::meshio::PolyMesh;
use crate::scalar::{Real, Vec3};

/// Material coefficients as functions of position.
pub trait Material<T: Real> {
    fn epsilon(&self, x: Vec3<T>) -> T;
    fn sigma(&self, x: Vec3<T>) -> T;
    fn mu(&self, x: Vec3<T>) -> T;
}

/// Spatially constant material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformMaterial<T> {
    pub epsilon: T,
    pub sigma: T,
    pub mu: T,
}

impl<T: Real> UniformMaterial<T> {
    pub fn vacuum() -> Self {
        Self { epsilon: T::one(), sigma: T::zero(), mu: T::one() }
    }
}

impl<T: Real> Material<T> for UniformMaterial<T> {
    fn epsilon(&self, _: Vec3<T>) -> T {
        self.epsilon
    }
    fn sigma(&self, _: Vec3<T>) -> T {
        self.sigma
    }
    fn mu(&self, _: Vec3<T>) -> T {
        self.mu
    }
}

/// Per-cell samples at the cell centroids.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSet<T> {
    pub epsilon: Vec<T>,
    pub sigma: Vec<T>,
    pub mu: Vec<T>,
}

impl<T: Real> CoefficientSet<T> {
    pub fn inv_mu(&self) -> Vec<T> {
        self.mu.iter().map(|&m| T::one() / m).collect()
    }
}

pub fn sample_coefficients<T: Real>(
    material: &(impl Material<T> + ?Sized),
    geom: &MeshGeometry<T>,
) -> Result<CoefficientSet<T>> {
    let n = geom.cells.len();
    let mut set =
        CoefficientSet { epsilon: Vec::with_capacity(n), sigma: Vec::with_capacity(n), mu: Vec::with_capacity(n) };
    for (k, cell) in geom.cells.iter().enumerate() {
        let b = cell.centroid;
        let (eps, sig, mu) = (material.epsilon(b), material.sigma(b), material.mu(b));
        if !(eps > T::zero()) || !(mu > T::zero()) || !(sig >= T::zero()) {
            return Err(Error::Coefficient(format!(
                "cell {k} at {:?}: epsilon = {eps}, sigma = {sig}, mu = {mu} (need epsilon > 0, mu > 0, sigma >= 0)",
                b.to_f64()
            )));
        }
        set.epsilon.push(eps);
        set.sigma.push(sig);
        set.mu.push(mu);
    }
    Ok(set)
}

/// Stabilization weights multiplying the DOF-based forms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabWeights<T> {
    pub edge: T,
    pub face: T,
}

impl<T: Real> Default for StabWeights<T> {
    fn default() -> Self {
        Self { edge: T::lit(0.01), face: T::lit(0.5) }
    }
}

impl<T: Real> StabWeights<T> {
    pub fn new(edge: T, face: T) -> Result<Self> {
        if edge > T::zero() && face > T::zero() && edge.is_finite() && face.is_finite() {
            Ok(Self { edge, face })
        } else {
            Err(Error::Config(format!("stabilization weights must be positive, got {edge} and {face}")))
        }
    }
}

/// Edge stabilization of cell `k`: diagonal `h_K^2 m_e |e|`, `m_e` counting
/// the faces of `k` that contain `e`.
pub fn stab_edge<T: Real>(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>, k: usize) -> DenseMatrix<T> {
    let h = geom.cells[k].diameter;
    let edges = mesh.cell_edges(k);
    let mut s = DenseMatrix::zeros(edges.len(), edges.len());
    for (i, &e) in edges.iter().enumerate() {
        let m_e = T::from_usize_lossy(mesh.faces_of_cell_containing_edge(k, e));
        s[(i, i)] = h * h * m_e * mesh.edge_length(e);
    }
    s
}

/// Face stabilization of cell `k`: diagonal `h_K |F|`.
pub fn stab_face<T: Real>(mesh: &PolyMesh<T>, geom: &MeshGeometry<T>, k: usize) -> DenseMatrix<T> {
    let h = geom.cells[k].diameter;
    let faces = mesh.cell(k);
    let mut s = DenseMatrix::zeros(faces.len(), faces.len());
    for (i, sf) in faces.iter().enumerate() {
        s[(i, i)] = h * geom.faces[sf.face].area;
    }
    s
}

/// `|K| P^T P + eta (I - X P)^T S (I - X P)`, where row `i` of `X` extracts
/// the DOF of a constant field.
fn stabilized_mass<T: Real>(
    volume: T,
    p: &DenseMatrix<T>,
    x: &DenseMatrix<T>,
    s: &DenseMatrix<T>,
    eta: T,
) -> DenseMatrix<T> {
    let n = p.cols();
    let consistency = p.transpose().matmul(p).scaled(volume);
    let j = DenseMatrix::identity(n).add_scaled(T::one(), &x.matmul(p), -T::one());
    let stab = j.transpose().matmul(&s.matmul(&j));
    let m = consistency.add_scaled(T::one(), &stab, eta);
    // exact symmetry; the products above only agree up to round-off
    let half = T::lit(0.5);
    m.add_scaled(half, &m.transpose(), half)
}

/// Local edge product on cell `k`, rows and columns in `mesh.cell_edges(k)` order.
pub fn local_edge_mass<T: Real>(
    mesh: &PolyMesh<T>,
    geom: &MeshGeometry<T>,
    k: usize,
    projectors: &ElementOperators<T>,
    eta_edge: T,
) -> DenseMatrix<T> {
    let edges = mesh.cell_edges(k);
    let tangents = DenseMatrix::from_fn(edges.len(), 3, |i, c| mesh.edge_tangent(edges[i])[c]);
    stabilized_mass(geom.cells[k].volume, &projectors.edge_cell[k], &tangents, &stab_edge(mesh, geom, k), eta_edge)
}

/// Local face product on cell `k`, rows and columns in `mesh.cell(k)` order.
pub fn local_face_mass<T: Real>(
    mesh: &PolyMesh<T>,
    geom: &MeshGeometry<T>,
    k: usize,
    projectors: &ElementOperators<T>,
    eta_face: T,
) -> DenseMatrix<T> {
    let faces = mesh.cell(k);
    let normals = DenseMatrix::from_fn(faces.len(), 3, |i, c| geom.faces[faces[i].face].normal[c]);
    stabilized_mass(geom.cells[k].volume, &projectors.face_cell[k], &normals, &stab_face(mesh, geom, k), eta_face)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Edge,
    Face,
}

/// Unweighted local products of every cell for both spaces.
#[derive(Clone, Debug)]
pub struct LocalMasses<T> {
    pub edge: Vec<DenseMatrix<T>>,
    pub face: Vec<DenseMatrix<T>>,
}

impl<T: Real> LocalMasses<T> {
    pub fn new(
        mesh: &PolyMesh<T>,
        geom: &MeshGeometry<T>,
        projectors: &ElementOperators<T>,
        weights: StabWeights<T>,
    ) -> Self {
        let n = mesh.num_cells();
        Self {
            edge: (0..n).map(|k| local_edge_mass(mesh, geom, k, projectors, weights.edge)).collect(),
            face: (0..n).map(|k| local_face_mass(mesh, geom, k, projectors, weights.face)).collect(),
        }
    }

    fn global_indices(mesh: &PolyMesh<T>, space: Space, k: usize) -> Vec<usize> {
        match space {
            Space::Edge => mesh.cell_edges(k).to_vec(),
            Space::Face => mesh.cell(k).iter().map(|sf| sf.face).collect(),
        }
    }

    /// `Σ_K w_K M_K` over all DOFs of `space`, boundary included.
    pub fn assemble_full(&self, mesh: &PolyMesh<T>, space: Space, weights: &[T]) -> SparseMatrix<T> {
        let (locals, n) = match space {
            Space::Edge => (&self.edge, mesh.num_edges()),
            Space::Face => (&self.face, mesh.num_faces()),
        };
        let mut triplets = Vec::new();
        for (k, local) in locals.iter().enumerate() {
            let idx = Self::global_indices(mesh, space, k);
            for (i, &gi) in idx.iter().enumerate() {
                for (j, &gj) in idx.iter().enumerate() {
                    triplets.push((gi, gj, weights[k] * local[(i, j)]));
                }
            }
        }
        SparseMatrix::from_triplets(n, n, triplets)
    }
}

/// Weighted global product restricted to interior DOFs.
pub fn assemble_global<T: Real>(
    mesh: &PolyMesh<T>,
    dofs: &DeRhamDofs,
    masses: &LocalMasses<T>,
    space: Space,
    weights: &[T],
) -> SparseMatrix<T> {
    let full = masses.assemble_full(mesh, space, weights);
    let interior = match space {
        Space::Edge => &dofs.interior_edges,
        Space::Face => &dofs.interior_faces,
    };
    full.submatrix(interior, interior)
}
