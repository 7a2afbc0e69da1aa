//! Manufactured solutions and error measurement.

use crate::derham::interpolate_face;
use crate::error::{Error, Result};
use crate::forms::Material;
use crate::geometry::{cell_quadrature, DEFAULT_CELL_DEGREE};
use crate::meshio::BoxDomain;
use crate::scalar::{Real, Vec3};
use crate::stepper::{Discretization, SimulationState};

/// Time-dependent problem data: material, fields and current density.
pub trait Problem<T: Real>: Material<T> {
    fn electric(&self, x: Vec3<T>, t: T) -> Vec3<T>;
    fn magnetic(&self, x: Vec3<T>, t: T) -> Vec3<T>;
    fn current(&self, x: Vec3<T>, t: T) -> Vec3<T>;

    /// False when `current` is identically zero, which skips its interpolation.
    fn has_current(&self) -> bool {
        true
    }
}

/// Problem with a closed-form solution on a box.
pub trait ManufacturedCase<T: Real>: Problem<T> {
    fn name(&self) -> &'static str;
    fn final_time(&self) -> T;
    fn domain(&self) -> BoxDomain<T>;
    fn electric_dt(&self, x: Vec3<T>, t: T) -> Vec3<T>;
    /// `curl(mu^-1 B)`.
    fn curl_h(&self, x: Vec3<T>, t: T) -> Vec3<T>;
}

pub fn manufactured_case<T: Real>(id: u32) -> Result<Box<dyn ManufacturedCase<T>>> {
    match id {
        1 => Ok(Box::new(Case1::new())),
        2 => Ok(Box::new(Case2)),
        _ => Err(Error::Config(format!("unknown test case {id} (expected 1 or 2)"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Factor {
    /// `sin^2(pi p)`
    SinSq,
    /// `p^2 (1 - p)^2`
    Quartic,
    /// `sin(pi p)`
    Sin,
}

fn factor<T: Real>(kind: Factor, order: u8, p: T) -> T {
    let pi = T::PI();
    let lit = T::lit;
    match kind {
        Factor::SinSq => {
            let a = lit(2.0) * pi * p;
            match order {
                0 => (pi * p).sin().powi(2),
                1 => pi * a.sin(),
                2 => lit(2.0) * pi * pi * a.cos(),
                3 => -lit(4.0) * pi.powi(3) * a.sin(),
                4 => -lit(8.0) * pi.powi(4) * a.cos(),
                _ => unreachable!("derivative order above 4"),
            }
        }
        Factor::Quartic => match order {
            0 => p * p * (T::one() - p) * (T::one() - p),
            1 => lit(2.0) * p - lit(6.0) * p * p + lit(4.0) * p * p * p,
            2 => lit(2.0) - lit(12.0) * p + lit(12.0) * p * p,
            3 => lit(24.0) * p - lit(12.0),
            4 => lit(24.0),
            _ => unreachable!("derivative order above 4"),
        },
        Factor::Sin => {
            let (s, c) = (pi * p).sin_cos();
            let pk = pi.powi(order as i32);
            match order % 4 {
                0 => pk * s,
                1 => pk * c,
                2 => -pk * s,
                _ => -pk * c,
            }
        }
    }
}

/// `coef * f_x^(a)(x) f_y^(b)(y) f_z^(c)(z)`.
#[derive(Clone, Copy, Debug)]
struct Term {
    coef: f64,
    factors: [(Factor, u8); 3],
}

#[derive(Clone, Debug, Default)]
struct Separable(Vec<Term>);

impl Separable {
    fn product(coef: f64, kinds: [Factor; 3]) -> Self {
        Self(vec![Term { coef, factors: kinds.map(|k| (k, 0)) }])
    }

    fn diff(&self, axis: usize) -> Self {
        Self(
            self.0
                .iter()
                .map(|t| {
                    let mut t = *t;
                    t.factors[axis].1 += 1;
                    t
                })
                .collect(),
        )
    }

    fn minus(&self, other: &Self) -> Self {
        let mut terms = self.0.clone();
        terms.extend(other.0.iter().map(|t| Term { coef: -t.coef, ..*t }));
        Self(terms)
    }

    fn eval<T: Real>(&self, x: Vec3<T>) -> T {
        self.0
            .iter()
            .map(|t| {
                let [(a, i), (b, j), (c, k)] = t.factors;
                T::lit(t.coef) * factor(a, i, x.x) * factor(b, j, x.y) * factor(c, k, x.z)
            })
            .sum()
    }
}

type SeparableField = [Separable; 3];

fn curl(f: &SeparableField) -> SeparableField {
    [f[2].diff(1).minus(&f[1].diff(2)), f[0].diff(2).minus(&f[2].diff(0)), f[1].diff(0).minus(&f[0].diff(1))]
}

fn eval_field<T: Real>(f: &SeparableField, x: Vec3<T>) -> Vec3<T> {
    Vec3::new(f[0].eval(x), f[1].eval(x), f[2].eval(x))
}

/// Unit coefficients, `E = t curl φ + t^2 ∇s`, `B = -(t^2/2) curl curl φ` with
/// `φ = (S Q Q, Q S Q, Q Q S)`, `S = sin^2(pi .)`, `Q = p^2 (1-p)^2` and
/// `s = sin(pi x) sin(pi y) sin(pi z)`.
#[derive(Clone, Debug)]
pub struct Case1 {
    curl_phi: SeparableField,
    curl2_phi: SeparableField,
    curl3_phi: SeparableField,
    grad_s: SeparableField,
}

impl Default for Case1 {
    fn default() -> Self {
        Self::new()
    }
}

impl Case1 {
    pub fn new() -> Self {
        use Factor::{Quartic as Q, Sin, SinSq as S};
        let phi = [
            Separable::product(1.0, [S, Q, Q]),
            Separable::product(1.0, [Q, S, Q]),
            Separable::product(1.0, [Q, Q, S]),
        ];
        let s = Separable::product(1.0, [Sin, Sin, Sin]);
        let curl_phi = curl(&phi);
        let curl2_phi = curl(&curl_phi);
        let curl3_phi = curl(&curl2_phi);
        Self { curl_phi, curl2_phi, curl3_phi, grad_s: [s.diff(0), s.diff(1), s.diff(2)] }
    }
}

impl<T: Real> Material<T> for Case1 {
    fn epsilon(&self, _: Vec3<T>) -> T {
        T::one()
    }
    fn sigma(&self, _: Vec3<T>) -> T {
        T::one()
    }
    fn mu(&self, _: Vec3<T>) -> T {
        T::one()
    }
}

impl<T: Real> Problem<T> for Case1 {
    fn electric(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        eval_field(&self.curl_phi, x) * t + eval_field(&self.grad_s, x) * (t * t)
    }

    fn magnetic(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        eval_field(&self.curl2_phi, x) * (-t * t / T::lit(2.0))
    }

    fn current(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        self.electric_dt(x, t) + self.electric(x, t) - self.curl_h(x, t)
    }
}

impl<T: Real> ManufacturedCase<T> for Case1 {
    fn name(&self) -> &'static str {
        "case1"
    }

    fn final_time(&self) -> T {
        T::one()
    }

    fn domain(&self) -> BoxDomain<T> {
        BoxDomain::unit()
    }

    fn electric_dt(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        eval_field(&self.curl_phi, x) + eval_field(&self.grad_s, x) * (T::lit(2.0) * t)
    }

    fn curl_h(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        eval_field(&self.curl3_phi, x) * (-t * t / T::lit(2.0))
    }
}

/// Polarized standing wave with variable coefficients:
/// `mu = 1/(1+|x|^2)`, `eps = 2 - x^2 - z`, `sigma = 2 - y^2 + z`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Case2;

impl Case2 {
    pub const OMEGA_OVER_PI: f64 = 2.2;

    fn omega<T: Real>() -> T {
        T::lit(Self::OMEGA_OVER_PI) * T::PI()
    }

    /// `sin(2.2 pi t) / 2.2`
    fn b_time<T: Real>(t: T) -> T {
        (Self::omega::<T>() * t).sin() / T::lit(Self::OMEGA_OVER_PI)
    }
}

impl<T: Real> Material<T> for Case2 {
    fn epsilon(&self, x: Vec3<T>) -> T {
        T::lit(2.0) - x.x * x.x - x.z
    }
    fn sigma(&self, x: Vec3<T>) -> T {
        T::lit(2.0) - x.y * x.y + x.z
    }
    fn mu(&self, x: Vec3<T>) -> T {
        T::one() / (T::one() + x.norm_squared())
    }
}

impl<T: Real> Problem<T> for Case2 {
    fn electric(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        let pi = T::PI();
        Vec3::new(T::zero(), T::zero(), (pi * x.x).sin() * (pi * x.y).sin() * (Self::omega::<T>() * t).cos())
    }

    fn magnetic(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        let pi = T::PI();
        let (sx, cx) = (pi * x.x).sin_cos();
        let (sy, cy) = (pi * x.y).sin_cos();
        Vec3::new(-cy * sx, cx * sy, T::zero()) * Self::b_time(t)
    }

    fn current(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        self.electric_dt(x, t) * self.epsilon(x) + self.electric(x, t) * self.sigma(x) - self.curl_h(x, t)
    }
}

impl<T: Real> ManufacturedCase<T> for Case2 {
    fn name(&self) -> &'static str {
        "case2"
    }

    fn final_time(&self) -> T {
        T::one()
    }

    fn domain(&self) -> BoxDomain<T> {
        BoxDomain::unit()
    }

    fn electric_dt(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        let pi = T::PI();
        let w = Self::omega::<T>();
        Vec3::new(T::zero(), T::zero(), -w * (pi * x.x).sin() * (pi * x.y).sin() * (w * t).sin())
    }

    fn curl_h(&self, x: Vec3<T>, t: T) -> Vec3<T> {
        // curl(f B) = f curl B + grad f x B with f = 1 + |x|^2
        let pi = T::PI();
        let f = T::one() + x.norm_squared();
        let curl_b =
            Vec3::new(T::zero(), T::zero(), -T::lit(2.0) * pi * (pi * x.x).sin() * (pi * x.y).sin() * Self::b_time(t));
        curl_b * f + (x * T::lit(2.0)).cross(self.magnetic(x, t))
    }
}

/// Sixth-order central difference of `f` at `s` with step `h`.
fn derivative(f: impl Fn(f64) -> Vec3<f64>, s: f64, h: f64) -> Vec3<f64> {
    let w = [(1.0, 45.0), (2.0, -9.0), (3.0, 1.0)];
    w.iter().map(|&(k, c)| (f(s + k * h) - f(s - k * h)) * c).sum::<Vec3<f64>>() / (60.0 * h)
}

fn partial(f: &impl Fn(Vec3<f64>) -> Vec3<f64>, x: Vec3<f64>, axis: usize, h: f64) -> Vec3<f64> {
    derivative(
        |s| {
            let mut y = x;
            y[axis] = s;
            f(y)
        },
        x[axis],
        h,
    )
}

fn fd_curl(f: impl Fn(Vec3<f64>) -> Vec3<f64>, x: Vec3<f64>, h: f64) -> Vec3<f64> {
    let d: Vec<Vec3<f64>> = (0..3).map(|a| partial(&f, x, a, h)).collect();
    Vec3::new(d[1].z - d[2].y, d[2].x - d[0].z, d[0].y - d[1].x)
}

/// Finite-difference divergence with step `h`.
pub fn fd_divergence(f: impl Fn(Vec3<f64>) -> Vec3<f64>, x: Vec3<f64>, h: f64) -> f64 {
    (0..3).map(|a| partial(&f, x, a, h)[a]).sum()
}

/// Step of the finite-difference oracle in [`strong_form_residual`].
pub const FD_STEP: f64 = 1e-5;

/// Largest residual of `eps E_t + sigma E - curl(mu^-1 B) - J` and
/// `B_t + curl E` over the samples, with all derivatives by finite differences.
pub fn strong_form_residual(case: &dyn ManufacturedCase<f64>, samples: &[(Vec3<f64>, f64)]) -> (f64, f64) {
    let h = FD_STEP;
    let mut worst = (0.0f64, 0.0f64);
    for &(x, t) in samples {
        let e_t = derivative(|s| case.electric(x, s), t, h);
        let b_t = derivative(|s| case.magnetic(x, s), t, h);
        let curl_h = fd_curl(|y| case.magnetic(y, t) / case.mu(y), x, h);
        let curl_e = fd_curl(|y| case.electric(y, t), x, h);
        let ampere = e_t * case.epsilon(x) + case.electric(x, t) * case.sigma(x) - curl_h - case.current(x, t);
        let faraday = b_t + curl_e;
        worst.0 = worst.0.max(ampere.max_abs());
        worst.1 = worst.1.max(faraday.max_abs());
    }
    worst
}

/// Largest `|E x n|` and `|B . n|` over `per_face` points on each box face
/// at times drawn by `next` (uniform in `[0, 1)`), scaled to `[0, T]`.
pub fn boundary_trace_residual(
    case: &dyn ManufacturedCase<f64>,
    per_face: usize,
    mut next: impl FnMut() -> f64,
) -> (f64, f64) {
    let dom = case.domain();
    let mut worst = (0.0f64, 0.0f64);
    for axis in 0..3 {
        for side in [dom.lo[axis], dom.hi[axis]] {
            let n = Vec3::<f64>::axis(axis);
            for _ in 0..per_face {
                let mut x = Vec3::zero();
                for a in 0..3 {
                    x[a] = dom.lo[a] + (dom.hi[a] - dom.lo[a]) * next();
                }
                x[axis] = side;
                let t = case.final_time() * next();
                worst.0 = worst.0.max(case.electric(x, t).cross(n).norm());
                worst.1 = worst.1.max(case.magnetic(x, t).dot(n).abs());
            }
        }
    }
    worst
}

/// Errors of a discrete state against the exact fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorReport {
    /// `||E - Π⁰E_h||`
    pub err_e: f64,
    /// `||B - Π⁰B_h||`
    pub err_b: f64,
    pub div_b: f64,
    pub h: f64,
    pub tau: f64,
    /// Interior (unknown) edge DOFs.
    pub n_edge_dofs: usize,
    pub n_face_dofs: usize,
    pub cg_iters_total: usize,
    pub wall_s: f64,
}

/// L² errors of `Π⁰E_h`, `Π⁰B_h` at time `t`; solver fields are left zero.
pub fn l2_error<T: Real, P: Problem<T> + ?Sized>(
    disc: &Discretization<T>,
    state: &SimulationState<T>,
    problem: &P,
    t: T,
) -> Result<ErrorReport> {
    let e_full = disc.dofs.scatter_edges(&state.e);
    let b_full = disc.scatter_faces(&state.b);
    let mut err_e = T::zero();
    let mut err_b = T::zero();
    for k in 0..disc.mesh.num_cells() {
        let pe = disc.projectors.edge_average(&disc.mesh, k, &e_full);
        let pb = disc.projectors.face_average(&disc.mesh, k, &b_full);
        let q = cell_quadrature(&disc.mesh, k, DEFAULT_CELL_DEGREE);
        err_e += q.integrate(|x| (problem.electric(x, t) - pe).norm_squared());
        err_b += q.integrate(|x| (problem.magnetic(x, t) - pb).norm_squared());
    }
    Ok(ErrorReport {
        err_e: err_e.sqrt().as_f64(),
        err_b: err_b.sqrt().as_f64(),
        div_b: disc.divergence_norm(&b_full)?.as_f64(),
        h: disc.geom.h().as_f64(),
        tau: state.tau.as_f64(),
        n_edge_dofs: disc.dofs.interior_edges.len(),
        n_face_dofs: disc.dofs.interior_faces.len(),
        cg_iters_total: 0,
        wall_s: 0.0,
    })
}

/// `max_K |D I_face(B(., t))|_K` at quadrature degree `degree`.
pub fn interpolated_divergence<T: Real>(
    disc: &Discretization<T>,
    case: &dyn ManufacturedCase<T>,
    t: T,
    degree: usize,
) -> Result<f64> {
    let b = interpolate_face(&disc.mesh, &disc.geom, |x| case.magnetic(x, t), degree);
    let div = disc.incidence.div.spmv(&b)?;
    Ok(div.iter().map(|v| v.abs().as_f64()).fold(0.0, f64::max))
}
