//! Acceptance suite. Every test writes one `PASS`/`FAIL` line straight to
//! stderr (bypassing libtest capture) and then asserts on the same verdict.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vem_maxwell::cases::{
    boundary_trace_residual, fd_divergence, interpolated_divergence, manufactured_case, strong_form_residual,
    ErrorReport, Problem, FD_STEP,
};
use vem_maxwell::cli::{run_convergence, run_on_mesh, MeshSource, RunConfig};
use vem_maxwell::derham::{
    apply_projector, cell_average, curl_matrix, divergence_matrix, gradient_matrix, interpolate_edge, interpolate_face,
    interpolate_node, ElementOperators, IncidenceOps,
};
use vem_maxwell::forms::{LocalMasses, Material, Space, StabWeights, UniformMaterial};
use vem_maxwell::linalg::norm_inf;
use vem_maxwell::meshio::{
    generate_cube_mesh, generate_l_block_mesh, generate_prism_mesh, load_mesh, validate_mesh, BoxDomain,
};
use vem_maxwell::stepper::{run, StepConfig};
use vem_maxwell::{Disc, Geometry, Mesh, Point};

fn verdict(id: u32, title: &str, failures: &[String], detail: &str) {
    let status = if failures.is_empty() { "PASS" } else { "FAIL" };
    let line = format!("[criterion {id}] {status} {title}: {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(failures.is_empty(), "criterion {id} failed:\n  {}", failures.join("\n  "));
}

fn check(failures: &mut Vec<String>, ok: bool, what: impl FnOnce() -> String) {
    if !ok {
        failures.push(what());
    }
}

fn cube(n: usize) -> Mesh {
    generate_cube_mesh(n, BoxDomain::unit()).unwrap()
}

fn voronoi() -> Mesh {
    let mesh = load_mesh(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/voro27.json")).unwrap();
    assert!(validate_mesh(&mesh).is_valid());
    mesh
}

fn with_geometry(mesh: Mesh) -> (Mesh, Geometry) {
    let geom = Geometry::new(&mesh).unwrap();
    (mesh, geom)
}

/// Cube, prism, nonconvex L-block and Voronoi meshes, some on a skewed box.
fn mesh_families() -> Vec<(&'static str, Mesh, Geometry)> {
    let skew = BoxDomain { lo: Point::new(-0.3, 0.1, 0.2), hi: Point::new(0.9, 0.6, 1.7) };
    let meshes = vec![
        ("cube:3", cube(3)),
        ("cube:2 skewed", generate_cube_mesh(2, skew).unwrap()),
        ("prism:3", generate_prism_mesh(3, BoxDomain::unit()).unwrap()),
        ("lblock:2 skewed", generate_l_block_mesh(2, skew).unwrap()),
        ("lblock:4", generate_l_block_mesh(4, BoxDomain::unit()).unwrap()),
        ("voro27", voronoi()),
    ];
    meshes
        .into_iter()
        .map(|(name, m)| {
            let (m, g) = with_geometry(m);
            (name, m, g)
        })
        .collect()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn criterion_1_exact_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for (name, mesh) in [("cube:4", cube(4)), ("voro27", voronoi())] {
        let (mesh, geom) = with_geometry(mesh);
        let g = gradient_matrix(&mesh);
        let c = curl_matrix(&mesh, &geom);
        let d = divergence_matrix(&mesh, &geom);
        for _ in 0..50 {
            let p = random_vec(&mut rng, mesh.num_vertices());
            let gp = g.spmv(&p).unwrap();
            let cgp = norm_inf(&c.spmv(&gp).unwrap()) / norm_inf(&gp);
            let v = random_vec(&mut rng, mesh.num_edges());
            let cv = c.spmv(&v).unwrap();
            let dcv = norm_inf(&d.spmv(&cv).unwrap()) / norm_inf(&cv);
            worst = (worst.0.max(cgp), worst.1.max(dcv));
            check(&mut failures, cgp <= 1e-13, || format!("{name}: |CGp|/|Gp| = {cgp:e}"));
            check(&mut failures, dcv <= 1e-13, || format!("{name}: |DCv|/|Cv| = {dcv:e}"));
        }
    }
    let detail = format!("max |CGp|/|Gp| = {:.2e}, max |DCv|/|Cv| = {:.2e} (tol 1e-13)", worst.0, worst.1);
    verdict(1, "discrete exact sequence on cube:4 and voro27", &failures, &detail);
}

#[test]
fn criterion_2_commuting_diagrams() {
    let (s, c) = (|t: f64| (PI * t).sin(), |t: f64| (PI * t).cos());
    let (mesh, geom) = with_geometry(cube(4));
    let ops = IncidenceOps::new(&mesh, &geom);
    let mut failures = Vec::new();

    let field = |x: Point| Point::new(s(x.y) * s(x.z), x.x * x.x * x.z, c(x.x) * x.y);
    let curl = |x: Point| {
        Point::new(c(x.x) - x.x * x.x, PI * s(x.y) * c(x.z) + PI * s(x.x) * x.y, 2.0 * x.x * x.z - PI * c(x.y) * s(x.z))
    };
    let lhs = ops.curl.spmv(&interpolate_edge(&mesh, field, 21)).unwrap();
    let rhs = interpolate_face(&mesh, &geom, curl, 16);
    let curl_gap = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(&mut failures, curl_gap <= 1e-9, || format!("C I_edge(E) vs I_face(curl E): {curl_gap:e}"));

    let scalar = |x: Point| s(x.x) * c(x.y) + x.z * x.z * x.y;
    let grad = |x: Point| Point::new(PI * c(x.x) * c(x.y), -PI * s(x.x) * s(x.y) + x.z * x.z, 2.0 * x.z * x.y);
    let lhs = ops.grad.spmv(&interpolate_node(&mesh, scalar)).unwrap();
    let rhs = interpolate_edge(&mesh, grad, 21);
    let grad_gap = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(&mut failures, grad_gap <= 1e-9, || format!("G I_node(v) vs I_edge(grad v): {grad_gap:e}"));

    let b = |x: Point| Point::new(s(x.x) * x.y, x.z * c(x.y), x.x * x.z * x.z);
    let div = |x: Point| PI * c(x.x) * x.y - PI * x.z * s(x.y) + 2.0 * x.x * x.z;
    let lhs = ops.div.spmv(&interpolate_face(&mesh, &geom, b, 16)).unwrap();
    let rhs = cell_average(&mesh, &geom, div, 16);
    let div_gap = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(&mut failures, div_gap <= 1e-9, || format!("D I_face(B) vs cell averages of div B: {div_gap:e}"));

    let detail = format!("curl {curl_gap:.2e}, grad {grad_gap:.2e}, div {div_gap:.2e} (tol 1e-9)");
    verdict(2, "commuting diagrams on cube:4", &failures, &detail);
}

#[test]
fn criterion_3_projector_consistency() {
    let consts =
        [Point::new(1.0, 0.0, 0.0), Point::new(0.0, 1.0, 0.0), Point::new(0.0, 0.0, 1.0), Point::new(-0.8, 2.3, 0.4)];
    let grads = [Point::new(1.0, 2.0, 3.0), Point::new(-0.5, 0.25, 4.0)];
    let close = |a: Point, b: Point| (a - b).max_abs() <= 1e-12 * b.max_abs().max(1.0);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for (name, mesh, geom) in mesh_families() {
        let ops = ElementOperators::new(&mesh, &geom);
        for &c in &consts {
            let e = interpolate_edge(&mesh, |_| c, 1);
            let psi = interpolate_face(&mesh, &geom, |_| c, 1);
            for k in 0..mesh.num_cells() {
                let pe = ops.edge_average(&mesh, k, &e);
                let pf = ops.face_average(&mesh, k, &psi);
                worst = worst.max((pe - c).max_abs()).max((pf - c).max_abs());
                check(&mut failures, close(pe, c), || format!("{name} cell {k}: edge average {pe:?} != {c:?}"));
                check(&mut failures, close(pf, c), || format!("{name} cell {k}: face average {pf:?} != {c:?}"));
            }
            for f in 0..mesh.num_faces() {
                let n = geom.faces[f].normal;
                let local: Vec<f64> = mesh.face_edges(f).iter().map(|fe| e[fe.edge]).collect();
                let got = apply_projector(&ops.face_tangential[f], &local);
                let want = c - n * c.dot(n);
                worst = worst.max((got - want).max_abs());
                check(&mut failures, close(got, want), || format!("{name} face {f}: tangential {got:?} != {want:?}"));
            }
        }
        let g = gradient_matrix(&mesh);
        for &a in &grads {
            let e = g.spmv(&interpolate_node(&mesh, |x| a.dot(x) + 0.7)).unwrap();
            for k in 0..mesh.num_cells() {
                let pe = ops.edge_average(&mesh, k, &e);
                worst = worst.max((pe - a).max_abs());
                check(&mut failures, close(pe, a), || format!("{name} cell {k}: gradient average {pe:?} != {a:?}"));
            }
        }
    }
    let detail = format!("max deviation {worst:.2e} over cube, prism, L-block and Voronoi meshes (tol 1e-12)");
    verdict(3, "element projectors reproduce constants and linear gradients", &failures, &detail);
}

#[test]
fn criterion_4_discrete_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let consts = [Point::new(1.0, 0.0, 0.0), Point::new(0.3, -2.0, 0.7), Point::new(0.0, 0.5, 1.5)];
    let weights = StabWeights::default();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut min_rayleigh = f64::INFINITY;
    for (name, mesh, geom) in mesh_families() {
        let ops = ElementOperators::new(&mesh, &geom);
        let masses = LocalMasses::new(&mesh, &geom, &ops, weights);
        let ones = vec![1.0; mesh.num_cells()];
        for space in [Space::Edge, Space::Face] {
            let interp = |c: Point| match space {
                Space::Edge => interpolate_edge(&mesh, |_| c, 1),
                Space::Face => interpolate_face(&mesh, &geom, |_| c, 1),
            };
            for k in 0..mesh.num_cells() {
                let (m, idx): (_, Vec<usize>) = match space {
                    Space::Edge => (&masses.edge[k], mesh.cell_edges(k).to_vec()),
                    Space::Face => (&masses.face[k], mesh.cell(k).iter().map(|sf| sf.face).collect()),
                };
                check(&mut failures, m.add_scaled(1.0, &m.transpose(), -1.0).max_abs() == 0.0, || {
                    format!("{name} {space:?} cell {k}: local product not exactly symmetric")
                });
                let vol = geom.cells[k].volume;
                for &a in &consts {
                    for &b in &consts {
                        let (ia, ib) = (interp(a), interp(b));
                        let xa: Vec<f64> = idx.iter().map(|&i| ia[i]).collect();
                        let xb: Vec<f64> = idx.iter().map(|&i| ib[i]).collect();
                        let want = a.dot(b) * vol;
                        let err = (m.bilinear(&xa, &xb) - want).abs() / vol.max(want.abs());
                        worst = worst.max(err);
                        check(&mut failures, err <= 1e-12, || {
                            format!("{name} {space:?} cell {k}: consistency {err:e}")
                        });
                    }
                }
            }
            let global = masses.assemble_full(&mesh, space, &ones);
            check(&mut failures, global.is_symmetric(), || format!("{name} {space:?}: global product not symmetric"));
            for _ in 0..100 {
                let x = random_vec(&mut rng, global.nrows());
                let q: f64 = x.iter().zip(&global.spmv(&x).unwrap()).map(|(a, b)| a * b).sum();
                let r = q / x.iter().map(|v| v * v).sum::<f64>();
                min_rayleigh = min_rayleigh.min(r);
                check(&mut failures, q > 0.0, || format!("{name} {space:?}: x^T M x = {q:e}"));
            }
        }
    }
    let detail = format!(
        "max consistency error {worst:.2e} (tol 1e-12), symmetry exact, min Rayleigh quotient {min_rayleigh:.3e} over 100 vectors per mesh and space"
    );
    verdict(4, "discrete product consistency, symmetry, definiteness", &failures, &detail);
}

fn case_config(case: u32, tau: f64, levels: usize, n: usize) -> RunConfig {
    RunConfig {
        mesh: MeshSource::Cube(n),
        case,
        tau,
        final_time: 1.0,
        weights: StabWeights::default(),
        tol: 1e-12,
        out: None,
        monitors: None,
        levels,
        full_table: false,
        parallel: true,
    }
}

#[test]
fn criterion_5_divergence_free_induction() {
    let cfg = case_config(1, 0.125, 1, 4);
    let rec = run_on_mesh("cube:4", cube(4), &cfg, 0.125).unwrap();
    let worst_step = rec.monitors.iter().map(|m| m.div_b).fold(0.0, f64::max);
    let mut failures = Vec::new();
    let div = rec.report.div_b;
    check(&mut failures, div <= 1e-9, || format!("||div B_h(T)|| = {div:e}"));
    let detail = format!("||div B_h(1)|| = {div:.3e}, max over steps {worst_step:.3e} (tol 1e-9)");
    verdict(5, "Test Case 1, cube:4, tau=1/8: div B_h stays zero", &failures, &detail);
}

/// Source-free problem with solenoidal initial induction.
struct Relaxation {
    material: UniformMaterial<f64>,
}

fn q(s: f64) -> f64 {
    s * s * (1.0 - s) * (1.0 - s)
}

fn dq(s: f64) -> f64 {
    2.0 * s - 6.0 * s * s + 4.0 * s * s * s
}

impl Material<f64> for Relaxation {
    fn epsilon(&self, x: Point) -> f64 {
        self.material.epsilon(x)
    }
    fn sigma(&self, x: Point) -> f64 {
        self.material.sigma(x)
    }
    fn mu(&self, x: Point) -> f64 {
        self.material.mu(x)
    }
}

impl Problem<f64> for Relaxation {
    fn electric(&self, x: Point, _: f64) -> Point {
        Point::new((PI * x.y).sin() * (PI * x.z).sin(), x.x * x.z, (2.0 * x.x).cos())
    }
    // curl of (0, 0, q(x) q(y)) plus curl of (q(y) q(z), 0, 0)
    fn magnetic(&self, x: Point, _: f64) -> Point {
        Point::new(q(x.x) * dq(x.y), -dq(x.x) * q(x.y) + q(x.y) * dq(x.z), -dq(x.y) * q(x.z))
    }
    fn current(&self, _: Point, _: f64) -> Point {
        Point::zero()
    }
    fn has_current(&self) -> bool {
        false
    }
}

#[test]
fn criterion_6_energy_dissipation() {
    let disc = Disc::new(cube(4), StabWeights::default()).unwrap();
    let cfg = StepConfig { face_degree: 8, ..StepConfig::default() };
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for sigma in [0.0, 1.0] {
        let problem = Relaxation { material: UniformMaterial { epsilon: 1.0, sigma, mu: 1.0 } };
        let traj = run(&disc, &problem, 1.0 / 16.0, 1.0, &cfg).unwrap();
        check(&mut failures, traj.monitors.len() == 17, || format!("sigma {sigma}: {} monitors", traj.monitors.len()));
        for w in traj.monitors.windows(2) {
            check(&mut failures, w[1].energy <= w[0].energy, || {
                format!("sigma {sigma}, step {}: energy {} > {}", w[1].step, w[1].energy, w[0].energy)
            });
        }
        let (first, last) = (traj.monitors[0].energy, traj.monitors[16].energy);
        summary.push(format!("sigma={sigma}: {first:.6e} -> {last:.6e}"));
    }
    verdict(6, "energy non-increasing over 16 steps on cube:4 with J=0", &failures, &summary.join(", "));
}

fn row(label: &str, r: &ErrorReport) -> String {
    format!("{label} tau={:.6} err_E={:.5e} err_B={:.5e}", r.tau, r.err_e, r.err_b)
}

#[test]
fn criterion_7_convergence_rates() {
    let report = run_convergence(&case_config(2, 0.125, 3, 2)).unwrap();
    let rate = report.rates.last().unwrap();
    let mut failures = Vec::new();
    let within = |r: f64| (0.8..=1.3).contains(&r);
    check(&mut failures, within(rate.rate_e), || format!("finest-pair rate for E = {:.4}", rate.rate_e));
    check(&mut failures, within(rate.rate_b), || format!("finest-pair rate for B = {:.4}", rate.rate_b));
    let rows: Vec<String> = report.rows.iter().map(|r| row(&r.label, &r.report)).collect();
    let rates: Vec<String> = report.rates.iter().map(|r| format!("E {:.3} B {:.3}", r.rate_e, r.rate_b)).collect();
    let detail = format!(
        "finest-pair rates E {:.4}, B {:.4} (need [0.8, 1.3]); rows [{}]; rates [{}]",
        rate.rate_e,
        rate.rate_b,
        rows.join("; "),
        rates.join("; ")
    );
    verdict(7, "Test Case 2 rates on cube:2/4/8 with tau=1/8,1/16,1/32", &failures, &detail);
}

#[test]
fn criterion_8_row_monotonicity() {
    let taus = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let cfg = case_config(2, taus[0], 1, 4);
    let reports: Vec<ErrorReport> = std::thread::scope(|s| {
        let handles: Vec<_> = taus
            .iter()
            .map(|&tau| {
                let cfg = &cfg;
                s.spawn(move || run_on_mesh("cube:4", cube(4), cfg, tau).unwrap().report)
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut failures = Vec::new();
    for w in reports.windows(2) {
        check(&mut failures, w[1].err_e <= w[0].err_e, || {
            format!("err_E grows from tau={} ({:.5e}) to tau={} ({:.5e})", w[0].tau, w[0].err_e, w[1].tau, w[1].err_e)
        });
        check(&mut failures, w[1].err_b <= w[0].err_b, || {
            format!("err_B grows from tau={} ({:.5e}) to tau={} ({:.5e})", w[0].tau, w[0].err_b, w[1].tau, w[1].err_b)
        });
    }
    let fmt =
        |f: fn(&ErrorReport) -> f64| reports.iter().map(|r| format!("{:.5e}", f(r))).collect::<Vec<_>>().join(", ");
    let detail = format!("err_E [{}], err_B [{}]", fmt(|r| r.err_e), fmt(|r| r.err_b));
    verdict(8, "Test Case 2 on cube:4, tau=1/8..1/64: errors non-increasing", &failures, &detail);
}

#[test]
fn criterion_9_manufactured_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let disc = Disc::new(cube(4), StabWeights::default()).unwrap();
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for id in [1, 2] {
        let case = manufactured_case::<f64>(id).unwrap();
        let samples: Vec<(Point, f64)> = (0..1000)
            .map(|_| (Point::new(rng.gen(), rng.gen(), rng.gen()), rng.gen::<f64>() * case.final_time()))
            .collect();
        let (ampere, faraday) = strong_form_residual(case.as_ref(), &samples);
        check(&mut failures, ampere <= 1e-8, || format!("case {id}: Ampere residual {ampere:e}"));
        check(&mut failures, faraday <= 1e-8, || format!("case {id}: Faraday residual {faraday:e}"));

        let (et, bn) = boundary_trace_residual(case.as_ref(), 10_000usize.div_ceil(6), || rng.gen());
        check(&mut failures, et <= 1e-12, || format!("case {id}: |E x n| = {et:e}"));
        check(&mut failures, bn <= 1e-12, || format!("case {id}: |B . n| = {bn:e}"));

        let fd_div = samples[..100]
            .iter()
            .map(|&(x, t)| fd_divergence(|y| case.magnetic(y, t), x, FD_STEP).abs())
            .fold(0.0, f64::max);
        check(&mut failures, fd_div <= 1e-10, || format!("case {id}: finite-difference div B = {fd_div:e}"));

        let div0 = interpolated_divergence(&disc, case.as_ref(), 0.0, 8).unwrap();
        check(&mut failures, div0 <= 1e-10, || format!("case {id}: |D I_face(B0)| = {div0:e}"));
        summary.push(format!(
            "case {id}: residuals {ampere:.1e}/{faraday:.1e}, traces {et:.1e}/{bn:.1e}, div B {fd_div:.1e}, div B0 {div0:.1e}"
        ));
    }
    verdict(9, "manufactured-case self-check", &failures, &summary.join("; "));
}
