//! Backward Euler on the reduced electric-field system, followed by the
//! exact face-DOF update of the induction.
//!
//! Each step solves
//!
//! ```text
//! (M_eps + tau M_sigma + tau^2 C^T M_f C) e' = M_eps e + tau M j' + tau C^T M_f b
//! b' = b - tau C e'
//! ```
//!
//! on interior DOFs, where `j'` is the edge interpolant of the current at the
//! new time level.

use std::fmt::Write as _;
use std::path::Path;

use crate::cases::Problem;
use crate::derham::{interpolate_edge, interpolate_face, DeRhamDofs, ElementOperators, IncidenceOps};
use crate::error::{Error, Result};
use crate::forms::{sample_coefficients, CoefficientSet, LocalMasses, Space, StabWeights};
use crate::geometry::{MeshGeometry, DEFAULT_EDGE_DEGREE, DEFAULT_FACE_DEGREE};
use crate::linalg::{dot, norm_inf, solve_spd, SolverConfig, SparseMatrix};
use crate::meshio::PolyMesh;
use crate::scalar::Real;

/// Everything that depends only on the mesh and the stabilization weights.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub mesh: PolyMesh<T>,
    pub geom: MeshGeometry<T>,
    pub dofs: DeRhamDofs,
    pub incidence: IncidenceOps<T>,
    pub projectors: ElementOperators<T>,
    pub masses: LocalMasses<T>,
}

impl<T: Real> Discretization<T> {
    pub fn new(mesh: PolyMesh<T>, weights: StabWeights<T>) -> Result<Self> {
        let geom = MeshGeometry::new(&mesh)?;
        let dofs = DeRhamDofs::new(&mesh);
        let incidence = IncidenceOps::new(&mesh, &geom);
        let projectors = ElementOperators::new(&mesh, &geom);
        let masses = LocalMasses::new(&mesh, &geom, &projectors, weights);
        Ok(Self { mesh, geom, dofs, incidence, projectors, masses })
    }

    /// Full face vector (boundary zeros) from interior values.
    pub fn scatter_faces(&self, interior: &[T]) -> Vec<T> {
        let mut full = vec![T::zero(); self.dofs.num_faces()];
        for (&f, &v) in self.dofs.interior_faces.iter().zip(interior) {
            full[f] = v;
        }
        full
    }

    pub fn gather_faces(&self, full: &[T]) -> Vec<T> {
        self.dofs.interior_faces.iter().map(|&f| full[f]).collect()
    }

    /// `||div B_h||_{0,Ω}` of a full face vector.
    pub fn divergence_norm(&self, b_full: &[T]) -> Result<T> {
        let div = self.incidence.div.spmv(b_full)?;
        Ok(self.geom.cells.iter().zip(&div).map(|(c, &d)| c.volume * d * d).sum::<T>().sqrt())
    }
}

/// Electric and magnetic DOFs on interior entities at time `step * tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationState<T> {
    pub e: Vec<T>,
    pub b: Vec<T>,
    pub step: usize,
    pub tau: T,
}

impl<T: Real> SimulationState<T> {
    pub fn time(&self) -> T {
        T::from_usize_lossy(self.step) * self.tau
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig {
    pub solver: SolverConfig,
    pub edge_degree: usize,
    pub face_degree: usize,
    /// Largest `|D b0|` accepted for the interpolated initial induction.
    pub initial_div_tol: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            edge_degree: DEFAULT_EDGE_DEGREE,
            face_degree: DEFAULT_FACE_DEGREE,
            initial_div_tol: 1e-9,
        }
    }
}

/// Assembled matrices for one `(mesh, coefficients, tau)` triple.
#[derive(Clone, Debug)]
pub struct StepOperators<T> {
    pub tau: T,
    pub m_eps: SparseMatrix<T>,
    pub m_sigma: SparseMatrix<T>,
    /// Unweighted edge product, interior rows by all columns.
    pub m_edge: SparseMatrix<T>,
    pub m_face: SparseMatrix<T>,
    pub curl: SparseMatrix<T>,
    pub curl_t: SparseMatrix<T>,
    pub system: SparseMatrix<T>,
}

/// Checks that curl rows of boundary faces only involve boundary edges.
pub fn check_boundary_coupling<T: Real>(mesh: &PolyMesh<T>) -> Result<()> {
    for f in (0..mesh.num_faces()).filter(|&f| mesh.is_boundary_face(f)) {
        if let Some(fe) = mesh.face_edges(f).iter().find(|fe| !mesh.is_boundary_edge(fe.edge)) {
            return Err(Error::BoundaryCoupling { face: f, edge: fe.edge });
        }
    }
    Ok(())
}

impl<T: Real> StepOperators<T> {
    pub fn new(disc: &Discretization<T>, coeffs: &CoefficientSet<T>, tau: T) -> Result<Self> {
        if !(tau > T::zero()) {
            return Err(Error::Config(format!("time step must be positive, got {tau}")));
        }
        check_boundary_coupling(&disc.mesh)?;
        let (mesh, dofs) = (&disc.mesh, &disc.dofs);
        let edge_full = |w: &[T]| disc.masses.assemble_full(mesh, Space::Edge, w);
        let ie = &dofs.interior_edges;
        let m_eps = edge_full(&coeffs.epsilon).submatrix(ie, ie);
        let m_sigma = edge_full(&coeffs.sigma).submatrix(ie, ie);
        let all_edges: Vec<usize> = (0..mesh.num_edges()).collect();
        let m_edge = edge_full(&vec![T::one(); mesh.num_cells()]).submatrix(ie, &all_edges);
        let m_face = disc.masses.assemble_full(mesh, Space::Face, &coeffs.inv_mu());
        let m_face = m_face.submatrix(&dofs.interior_faces, &dofs.interior_faces);
        let curl = disc.incidence.curl.submatrix(&dofs.interior_faces, ie);
        let curl_t = curl.transpose();
        let curl_curl = curl_t.matmul(&m_face.matmul(&curl));
        let system =
            m_eps.add_scaled(T::one(), &m_sigma, tau).add_scaled(T::one(), &curl_curl, tau * tau).symmetrized();
        Ok(Self { tau, m_eps, m_sigma, m_edge, m_face, curl, curl_t, system })
    }

    /// `[eps e, e] + [mu^-1 b, b]`.
    pub fn energy(&self, state: &SimulationState<T>) -> Result<T> {
        Ok(dot(&state.e, &self.m_eps.spmv(&state.e)?) + dot(&state.b, &self.m_face.spmv(&state.b)?))
    }
}

/// Interpolated initial data at `t = 0`, restricted to interior DOFs.
pub fn init_state<T: Real, P: Problem<T> + ?Sized>(
    disc: &Discretization<T>,
    problem: &P,
    tau: T,
    cfg: &StepConfig,
) -> Result<SimulationState<T>> {
    let t0 = T::zero();
    let e_full = interpolate_edge(&disc.mesh, |x| problem.electric(x, t0), cfg.edge_degree);
    let b_full = interpolate_face(&disc.mesh, &disc.geom, |x| problem.magnetic(x, t0), cfg.face_degree);
    let b = disc.gather_faces(&b_full);
    let div = disc.incidence.div.spmv(&disc.scatter_faces(&b))?;
    let worst = norm_inf(&div);
    if worst.as_f64() > cfg.initial_div_tol {
        return Err(Error::InitialDivergence(worst.as_f64()));
    }
    Ok(SimulationState { e: disc.dofs.gather_edges(&e_full), b, step: 0, tau })
}

/// Per-step monitor record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMonitor {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub div_b: f64,
    pub cg_iters: usize,
    pub residual: f64,
}

/// One backward Euler step.
pub fn advance<T: Real, P: Problem<T> + ?Sized>(
    disc: &Discretization<T>,
    ops: &StepOperators<T>,
    problem: &P,
    state: &SimulationState<T>,
    cfg: &StepConfig,
) -> Result<(SimulationState<T>, crate::linalg::SolveReport)> {
    let tau = ops.tau;
    let step = state.step + 1;
    let t_next = T::from_usize_lossy(step) * tau;
    let mut rhs = ops.m_eps.spmv(&state.e)?;
    if problem.has_current() {
        let j = interpolate_edge(&disc.mesh, |x| problem.current(x, t_next), cfg.edge_degree);
        let mj = ops.m_edge.spmv(&j)?;
        rhs.iter_mut().zip(&mj).for_each(|(r, &v)| *r += tau * v);
    }
    let cb = ops.curl_t.spmv(&ops.m_face.spmv(&state.b)?)?;
    rhs.iter_mut().zip(&cb).for_each(|(r, &v)| *r += tau * v);

    let (e, report) = solve_spd(&ops.system, &rhs, Some(state.e.clone()), &cfg.solver)
        .map_err(|err| Error::AtStep { step, source: Box::new(err.into()) })?;
    let ce = ops.curl.spmv(&e)?;
    let b = state.b.iter().zip(&ce).map(|(&b, &c)| b - tau * c).collect();
    Ok((SimulationState { e, b, step, tau }, report))
}

/// Final state and monitor series of a run.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub state: SimulationState<T>,
    pub monitors: Vec<StepMonitor>,
    pub cg_iters_total: usize,
}

/// Number of steps `M` with `M tau = T`, within `1e-12 T`.
pub fn step_count(tau: f64, final_time: f64) -> Result<usize> {
    if !(tau > 0.0) || !(final_time > 0.0) || !tau.is_finite() || !final_time.is_finite() {
        return Err(Error::Config(format!("need tau > 0 and T > 0, got tau = {tau}, T = {final_time}")));
    }
    let m = (final_time / tau).round();
    if m < 1.0 || (m * tau - final_time).abs() > 1e-12 * final_time {
        return Err(Error::Config(format!("tau = {tau} does not divide T = {final_time}")));
    }
    Ok(m as usize)
}

/// Runs `M = T / tau` steps from the interpolated initial data.
pub fn run<T: Real, P: Problem<T> + ?Sized>(
    disc: &Discretization<T>,
    problem: &P,
    tau: T,
    final_time: T,
    cfg: &StepConfig,
) -> Result<Trajectory<T>> {
    let steps = step_count(tau.as_f64(), final_time.as_f64())?;
    let coeffs = sample_coefficients(problem, &disc.geom)?;
    let ops = StepOperators::new(disc, &coeffs, tau)?;
    let mut state = init_state(disc, problem, tau, cfg)?;
    let monitor = |s: &SimulationState<T>, iters: usize, residual: f64| -> Result<StepMonitor> {
        Ok(StepMonitor {
            step: s.step,
            t: s.time().as_f64(),
            energy: ops.energy(s)?.as_f64(),
            div_b: disc.divergence_norm(&disc.scatter_faces(&s.b))?.as_f64(),
            cg_iters: iters,
            residual,
        })
    };
    let mut monitors = vec![monitor(&state, 0, 0.0)?];
    let mut total = 0;
    for _ in 0..steps {
        let (next, report) = advance(disc, &ops, problem, &state, cfg)?;
        total += report.iterations;
        state = next;
        monitors.push(monitor(&state, report.iterations, report.residual)?);
    }
    Ok(Trajectory { state, monitors, cg_iters_total: total })
}

pub const MONITOR_HEADER: &str = "step,t,energy,divB,cg_iters,residual";

pub fn monitors_csv(monitors: &[StepMonitor]) -> String {
    let mut out = String::from(MONITOR_HEADER);
    out.push('\n');
    for m in monitors {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            m.step, m.t, m.energy, m.div_b, m.cg_iters, m.residual
        );
    }
    out
}

pub fn write_monitors(path: impl AsRef<Path>, monitors: &[StepMonitor]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, monitors_csv(monitors))
        .map_err(|e| Error::Config(format!("cannot write monitors to {}: {e}", path.display())))
}
