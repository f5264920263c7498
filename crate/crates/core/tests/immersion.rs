mod common;

use common::*;
use cubic_surfaces::frames::{group_residuals, FrameState, GroupTag, SpanningTree};
use cubic_surfaces::geometry::{BackgroundMetric, CubicDifferential, Domain, MetricSolution, SignCase};
use cubic_surfaces::immersion::*;
use cubic_surfaces::pde::PdeProblem;
use cubic_surfaces::Complex64;
use nalgebra::{DMatrix, Matrix3};
use ndarray::Array2;

const TOL: Tolerances = Tolerances { c: 60.0, floor: 1e-10 };

fn hyperbolic_torus(n: usize) -> (MetricSolution, CubicDifferential, ImmersionMesh) {
    let c = cx(0.8, 0.5);
    let (sol, q) = torus_constant(SignCase::HYPERBOLIC_AFFINE, c, n);
    let init = AffineInit::canonical(sol.psi[[n / 2, n / 2]], -1);
    let mesh = affine_sphere_immersion(&sol, &q, -1, &init, SpanningTree::RowFirst).unwrap();
    (sol, q, mesh)
}

#[test]
fn constant_torus_solution_is_the_titeica_surface() {
    let n = 24;
    let c = cx(0.8, 0.5);
    let (sol, _, mesh) = hyperbolic_torus(n);
    // x_k(z) = exp(2 Re(c^{1/3} ω_k (z − z₀))) satisfies x₁x₂x₃ = 1
    let z0 = sol.domain.z(n / 2, n / 2);
    let root = c.powf(1.0 / 3.0);
    let omegas: Vec<Complex64> = (0..3).map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / 3.0)).collect();
    let pts: Vec<((usize, usize), [f64; 3])> = mesh
        .positions
        .indexed_iter()
        .map(|(jk, p)| (jk, [p[0].re, p[1].re, p[2].re]))
        .collect();
    let design = DMatrix::from_fn(pts.len(), 3, |r, col| {
        let z = sol.domain.z(pts[r].0 .0, pts[r].0 .1) - z0;
        (2.0 * (root * omegas[col] * z).re).exp()
    });
    let svd = design.clone().svd(true, true);
    let mut worst: f64 = 0.0;
    for axis in 0..3 {
        let rhs = DMatrix::from_fn(pts.len(), 1, |r, _| pts[r].1[axis]);
        let coef = svd.solve(&rhs, 1e-14).unwrap();
        worst = worst.max((&design * coef - rhs).amax());
    }
    // RK4 transport is fourth order; 1e-6 is well above its error at n = 24
    assert!(worst < 1e-6, "linear fit residual {worst:e}");
}

#[test]
fn torus_mesh_satisfies_structure_equations() {
    let mut prev = None;
    for n in [16, 32] {
        let (sol, q, mesh) = hyperbolic_torus(n);
        let rep = verify_affine(&mesh, &sol, &q, -1, &TOL).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures());
        let det = rep.max("det");
        if let Some(p) = prev {
            let ratio: f64 = p / det;
            assert!(ratio > 3.5 && ratio < 4.5, "det residual ratio {ratio}");
        }
        prev = Some(det);
        assert!(rep.max("center") < 1e-12);
    }
}

#[test]
fn noisy_mesh_is_rejected() {
    let (sol, q, mesh) = hyperbolic_torus(32);
    let base = verify_affine(&mesh, &sol, &q, -1, &TOL).unwrap().max("det");
    let mut noisy = mesh.clone();
    let eta = noise(7, 3 * noisy.positions.len());
    for (i, p) in noisy.positions.iter_mut().enumerate() {
        for a in 0..3 {
            p[a] += cx(1e-3 * eta[3 * i + a], 0.0);
        }
    }
    let rep = verify_affine(&noisy, &sol, &q, -1, &TOL).unwrap();
    assert!(rep.max("det") >= 10.0 * base);
    assert!(!rep.passed());
}

#[test]
fn vanishing_cubic_is_recovered() {
    for lambda in [-1i8, 1] {
        let d = Domain::rectangle(0.8, 0.8, 41, 41).unwrap();
        let sol = round_psi(&d, lambda);
        let q = CubicDifferential::zero();
        let init = AffineInit::canonical(sol.psi[[20, 20]], lambda);
        let mesh = affine_sphere_immersion(&sol, &q, lambda, &init, SpanningTree::RowFirst).unwrap();
        let rep = verify_affine(&mesh, &sol, &q, lambda, &TOL).unwrap();
        assert!(rep.passed(), "λ = {lambda}: {:?}", rep.residuals);
        assert!(rep.max("cubic") <= TOL.at(d.h(), 2));
    }
}

#[test]
fn spanning_trees_agree() {
    let d = Domain::disk_patch(0.6, 33, 33).unwrap();
    let p = PdeProblem::new(
        d,
        BackgroundMetric::PoincareDisk,
        CubicDifferential::polynomial(vec![cx(0.3, 0.1), cx(0.2, 0.0)]),
        SignCase::HYPERBOLIC_AFFINE,
    )
    .unwrap();
    let sol = newton(&p, 0.0);
    let q = p.cubic.clone();
    let init = AffineInit::canonical(sol.psi[[16, 16]], -1);
    let rows = affine_sphere_immersion(&sol, &q, -1, &init, SpanningTree::RowFirst).unwrap();
    let cols = affine_sphere_immersion(&sol, &q, -1, &init, SpanningTree::ColumnFirst).unwrap();
    let gap = rows
        .positions
        .iter()
        .zip(cols.positions.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(gap <= TOL.at(d.h(), 2), "tree gap {gap:e}");
    let rep = verify_affine(&rows, &sol, &q, -1, &TOL).unwrap();
    assert!(rep.passed(), "{:?}", rep.residuals);
}

#[test]
fn sphere_frames_stay_real_and_unimodular() {
    let (sol, _, mesh) = hyperbolic_torus(16);
    for ((j, k), rows) in mesh.frames.indexed_iter() {
        let fs = sphere_frame(rows, sol.psi[[j, k]]);
        let state = FrameState { f: fs, group: GroupTag::Sl3rConjugate, det0: cx(0.0, 0.5) };
        let r = group_residuals(&state);
        assert!(r.membership.unwrap() < 1e-10 && r.det_drift < 1e-6, "{r:?}");
    }
}

#[test]
fn conormal_dual_negates_the_cubic() {
    let (sol, q, mesh) = hyperbolic_torus(32);
    let dual = conormal_dual(&mesh).unwrap();
    let (m0, _) = mesh_blaschke_data(&mesh).unwrap();
    let (m1, q1) = mesh_blaschke_data(&dual).unwrap();
    let lat = &mesh.lattice;
    let tol = TOL.at(lat.h(), 2);
    let qv = q.eval(cx(0.0, 0.0));
    assert!(finite_max(&q1.mapv(|v| (v + qv).norm())) <= tol);
    assert!(finite_max(&(&m1 - &m0)) <= tol);
    let e2 = (2.0 * sol.psi[[0, 0]]).exp();
    assert!(finite_max(&m0.mapv(|v| v - e2)) <= tol);
    let back = conormal_dual(&dual).unwrap();
    let gap = back.positions.iter().zip(mesh.positions.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(gap < 1e-10, "double dual gap {gap:e}");
}

#[test]
fn hyperboloid_dual_is_the_dual_cone_hyperboloid() {
    let d = Domain::disk_patch(0.7, 41, 41).unwrap();
    let pos = Array2::from_shape_fn(d.shape(), |(j, k)| {
        let z = d.z(j, k);
        let r = 1.0 - z.norm_sqr();
        nalgebra::Vector3::new(cx(2.0 * z.re / r, 0.0), cx(2.0 * z.im / r, 0.0), cx((1.0 + z.norm_sqr()) / r, 0.0))
    });
    let mesh = ImmersionMesh::from_positions(d.lattice(), pos, MeshTarget::AffineSphere { lambda: -1 }).unwrap();
    let dual = conormal_dual(&mesh).unwrap();
    let eta = Matrix3::from_diagonal(&nalgebra::Vector3::new(cx(-1.0, 0.0), cx(-1.0, 0.0), cx(1.0, 0.0)));
    let gap = Array2::from_shape_fn(d.shape(), |(j, k)| {
        if is_checked(d.lattice(), j, k) {
            (dual.positions[[j, k]] - eta * mesh.positions[[j, k]]).norm()
        } else {
            f64::NAN
        }
    });
    assert!(finite_max(&gap) <= TOL.at(d.h(), 2), "{:e}", finite_max(&gap));
    let (m0, _) = mesh_blaschke_data(&mesh).unwrap();
    let (m1, _) = mesh_blaschke_data(&dual).unwrap();
    let gap = finite_max(&(&m1 - &m0));
    assert!(gap <= TOL.at(d.h(), 2), "{gap:e} {:e} {:e}", finite_max(&m0), finite_max(&m1));
}

#[test]
fn c2_plane_from_real_frame() {
    let d = Domain::rectangle(1.0, 1.0, 17, 17).unwrap();
    let psi0 = -0.5 * std::f64::consts::LN_2;
    let sol = MetricSolution::from_psi(&d, &BackgroundMetric::default(), Array2::from_elem((17, 17), psi0)).unwrap();
    let init = C2Init { p: [cx(0.5, 0.0), cx(0.0, -0.5)], q: [cx(0.5, 0.0), cx(0.0, 0.5)], f0: [cx(0.0, 0.0); 2] };
    let mesh = minlag_c2_immersion(&sol, &CubicDifferential::zero(), &init, SpanningTree::RowFirst).unwrap();
    let z0 = d.z(8, 8);
    for ((j, k), p) in mesh.positions.indexed_iter() {
        let z = d.z(j, k) - z0;
        assert!((p[0] - z.re).norm() < 1e-14 && (p[1] - z.im).norm() < 1e-14);
    }
    let theta = lagrangian_angle(&mesh).unwrap();
    assert!(theta.iter().all(|t| t.abs() < 1e-13));
}

#[test]
fn canonical_c2_init_gives_the_plane_z_zbar() {
    let d = Domain::rectangle(1.0, 1.0, 17, 17).unwrap();
    let sol = MetricSolution::from_psi(&d, &BackgroundMetric::default(), Array2::zeros((17, 17))).unwrap();
    let mesh =
        minlag_c2_immersion(&sol, &CubicDifferential::zero(), &C2Init::canonical(0.0), SpanningTree::RowFirst).unwrap();
    let z0 = d.z(8, 8);
    for ((j, k), p) in mesh.positions.indexed_iter() {
        let z = d.z(j, k) - z0;
        assert!((p[0] - z).norm() < 1e-14 && (p[1] - z.conj()).norm() < 1e-14);
    }
    let rep = verify_minlag_c2(&mesh, &sol, &CubicDifferential::zero(), &TOL).unwrap();
    assert!(rep.passed(), "{:?}", rep.residuals);
}

#[test]
fn rotated_plane_has_constant_angle() {
    let d = Domain::rectangle(1.0, 1.0, 17, 17).unwrap();
    let t0 = 0.7;
    let rot = Complex64::from_polar(1.0, t0);
    let pos = Array2::from_shape_fn(d.shape(), |(j, k)| {
        let z = d.z(j, k);
        nalgebra::Vector3::new(rot * z.re, cx(z.im, 0.0), cx(0.0, 0.0))
    });
    let mesh = ImmersionMesh::from_positions(d.lattice(), pos, MeshTarget::MinlagC2).unwrap();
    let theta = lagrangian_angle(&mesh).unwrap();
    assert!(theta.iter().all(|t| (t - t0).abs() < 1e-12));
}

// 2ψ_zz̄ = |Q|²e^{−4ψ} with Dirichlet data is of Bratu type and has no
// solution once |Q| is too large; these cubics stay well below the fold.
fn c2_solution(n: usize, q: &CubicDifferential) -> MetricSolution {
    let d = Domain::rectangle(1.0, 1.0, n, n).unwrap();
    let p = PdeProblem::new(d, BackgroundMetric::default(), q.clone(), SignCase::MINLAG_C2).unwrap();
    newton(&p, 0.0)
}

#[test]
fn polynomial_c2_mesh_is_minimal_lagrangian() {
    let q = CubicDifferential::polynomial(vec![cx(0.15, 0.05), cx(0.1, -0.05), cx(0.08, 0.0)]);
    let mut prev = None;
    for n in [17, 33] {
        let sol = c2_solution(n, &q);
        let init = C2Init::canonical(sol.psi[[n / 2, n / 2]]);
        let mesh = minlag_c2_immersion(&sol, &q, &init, SpanningTree::RowFirst).unwrap();
        let rep = verify_minlag_c2(&mesh, &sol, &q, &TOL).unwrap();
        assert!(rep.passed(), "{:?}", rep.residuals);
        let h = rep.max("harmonic");
        if let Some(p) = prev {
            let ratio: f64 = p / h;
            assert!(ratio > 3.0, "harmonicity ratio {ratio}");
        }
        prev = Some(h);
    }
}

#[test]
fn shape_operator_matches_cubic_norm() {
    let q = CubicDifferential::polynomial(vec![cx(0.15, 0.05), cx(0.1, -0.05)]);
    let mut prev = None;
    for n in [17, 33, 65] {
        let sol = c2_solution(n, &q);
        let mesh = minlag_c2_immersion(&sol, &q, &C2Init::canonical(sol.psi[[n / 2, n / 2]]), SpanningTree::RowFirst)
            .unwrap();
        let field = shape_operator_norm(&mesh, &q, &sol).unwrap();
        let dev = field.max_deviation();
        assert!(dev <= TOL.at(mesh.lattice.h(), 1), "n = {n}: {dev:e}");
        if let Some(p) = prev {
            assert!(dev < p);
        }
        prev = Some(dev);
    }
}

#[test]
fn shape_operator_scales_with_the_cubic() {
    // Q → 2Q with ψ → ψ + ½ log 2 is again a solution, the surface scales
    // by √2 and 2|Q|/σ^{3/2} shrinks by √2
    let q = CubicDifferential::polynomial(vec![cx(0.15, 0.05), cx(0.1, -0.05)]);
    let sol = c2_solution(33, &q);
    let q2 = q.scaled(2.0);
    let sol2 = MetricSolution::from_psi(&sol.domain, &BackgroundMetric::default(), sol.psi.mapv(|p| p + 0.5 * std::f64::consts::LN_2))
        .unwrap();
    let m1 = minlag_c2_immersion(&sol, &q, &C2Init::canonical(sol.psi[[16, 16]]), SpanningTree::RowFirst).unwrap();
    let m2 = minlag_c2_immersion(&sol2, &q2, &C2Init::canonical(sol2.psi[[16, 16]]), SpanningTree::RowFirst).unwrap();
    let a = shape_operator_norm(&m1, &q, &sol).unwrap().measured;
    let b = shape_operator_norm(&m2, &q2, &sol2).unwrap().measured;
    let dev = finite_max(&(&b - &a.mapv(|v| v * std::f64::consts::FRAC_1_SQRT_2)));
    assert!(dev < 1e-8, "{dev:e}");
}

#[test]
fn cp2_torus_lift_is_horizontal() {
    for n in [16, 32] {
        let (sol, q) = torus_constant(SignCase::MINLAG_CP2, cx(0.6, -0.3), n);
        let mesh = minlag_projective_immersion(&sol, &q, SignCase::MINLAG_CP2, None, SpanningTree::RowFirst).unwrap();
        let rep = verify_projective(&mesh, &sol, &TOL).unwrap();
        assert!(rep.passed(), "{:?}", rep.residuals);
        assert_eq!(mesh.target, MeshTarget::MinlagCp2);
    }
}

#[test]
fn ch2_disk_patch_recovers_the_metric() {
    let d = Domain::disk_patch(0.6, 33, 33).unwrap();
    let q = CubicDifferential::constant(cx(0.05, 0.0));
    let p = PdeProblem::new(d, BackgroundMetric::PoincareDisk, q.clone(), SignCase::MINLAG_CH2).unwrap();
    let sol = newton(&p, 0.0);
    let mesh = minlag_projective_immersion(&sol, &q, SignCase::MINLAG_CH2, None, SpanningTree::ColumnFirst).unwrap();
    let rep = verify_projective(&mesh, &sol, &TOL).unwrap();
    assert!(rep.passed(), "{:?}", rep.residuals);
    let pt = cpn_point(&FrameState::new(mesh.frames[[3, 4]], GroupTag::Su21), -1);
    assert!((pt.norm_sq + 1.0).abs() <= TOL.at(d.h(), 4));
}

#[test]
fn wrong_targets_are_refused() {
    let (sol, q, mesh) = hyperbolic_torus(16);
    assert!(verify_minlag_c2(&mesh, &sol, &q, &TOL).is_err());
    assert!(verify_projective(&mesh, &sol, &TOL).is_err());
    assert!(lagrangian_angle(&mesh).is_err());
    assert!(minlag_projective_immersion(&sol, &q, SignCase::HYPERBOLIC_AFFINE, None, SpanningTree::RowFirst).is_err());
    let bad = AffineInit { f0: [0.0, 0.0, 2.0], ..AffineInit::canonical(sol.psi[[8, 8]], -1) };
    assert!(affine_sphere_immersion(&sol, &q, -1, &bad, SpanningTree::RowFirst).is_err());
}
