//! The thirteen acceptance criteria, one PASS/FAIL line each. Tolerances are
//! pinned here; any failure exits nonzero.

mod common;

use common::{cx, noise, round_psi, torus_constant};
use cubic_surfaces::frames::{
    build_connection, curvature_residual, group_residuals, reality_residual, FrameModel, FrameState, GroupTag,
    PathSpec, RealForm, SpanningTree,
};
use cubic_surfaces::geometry::{BackgroundMetric, CubicDifferential, Domain, MetricSolution, SignCase};
use cubic_surfaces::immersion::*;
use cubic_surfaces::pde::*;
use cubic_surfaces::projective::{holonomy_report, quadric_fit, semiflat_develop};
use cubic_surfaces::weierstrass::*;
use cubic_surfaces::Complex64;
use ndarray::{Array2, ArrayD, Dimension};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// `C·h^p + 1e-10`, the constant frozen for every mesh and PDE check.
const TOL: Tolerances = Tolerances { c: 60.0, floor: 1e-10 };
const RATIO: std::ops::RangeInclusive<f64> = 3.5..=4.5;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn interior_max(lat: &cubic_surfaces::lattice::Lattice, f: &Array2<f64>) -> f64 {
    f.indexed_iter()
        .filter(|((j, k), _)| lat.is_interior(*j, *k))
        .fold(0.0, |m, (_, v)| m.max(v.abs()))
}

fn finite_max_d(a: &ArrayD<f64>) -> f64 {
    a.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
}

fn newton_report(p: &PdeProblem, u0: f64) -> SolveReport {
    solve_newton(p, &Array2::from_elem(p.domain.shape(), u0), &NewtonOptions::default()).expect("valid problem")
}

fn torus(n: usize) -> Domain {
    Domain::torus(cx(0.0, 1.0), n, n).unwrap()
}

fn c1_torus_constant() -> Outcome {
    let target = 8f64.ln() / 3.0;
    let mut lines = Vec::new();
    for case in [SignCase::HYPERBOLIC_AFFINE, SignCase::MINLAG_CP2] {
        let p = PdeProblem::new(torus(128), BackgroundMetric::default(), CubicDifferential::constant(cx(1.0, 0.0)), case)
            .unwrap();
        let t0 = Instant::now();
        let rep = newton_report(&p, 0.0);
        let secs = t0.elapsed().as_secs_f64();
        let err = rep.u().iter().fold(0.0f64, |m, v| m.max((v - target).abs()));
        ensure!(rep.converged, "{case:?} did not converge");
        ensure!(err <= 1e-10, "{case:?}: max |u − ⅓log 8| = {err:e}");
        ensure!(secs < 5.0, "{case:?}: {secs:.2} s");
        lines.push(format!("(ε,λ)=({},{}) err {err:.1e} in {secs:.2}s", case.epsilon, case.lambda));
    }
    Ok(lines.join("; "))
}

fn c2_global_local_identity() -> Outcome {
    let q = CubicDifferential::polynomial(vec![cx(0.3, -0.1), cx(0.2, 0.25), cx(0.0, 0.1)]);
    let mut worst_ratio: (f64, f64) = (f64::INFINITY, 0.0);
    let mut worst_err: f64 = 0.0;
    for seed in 0..20u64 {
        let a = noise(seed, 8);
        let u_of = |z: Complex64| {
            0.4 * a[0]
                + 0.3 * a[1] * (2.0 * z.re + a[2]).sin()
                + 0.3 * a[3] * (1.5 * z.im - a[4]).cos()
                + 0.2 * a[5] * (z.re * z.im * 3.0 + a[6]).sin()
                + 0.2 * a[7] * z.norm_sqr()
        };
        let mut prev = None;
        for n in [33, 65] {
            let d = Domain::disk_patch(0.6, n, n).unwrap();
            let p = PdeProblem::new(d, BackgroundMetric::PoincareDisk, q.clone(), SignCase::HYPERBOLIC_AFFINE).unwrap();
            let u = d.field(u_of);
            let sol = MetricSolution::from_u(&d, &BackgroundMetric::PoincareDisk, u.clone()).unwrap();
            let g = residual_global(&u, &p);
            let l = residual_local(&sol.psi, &d, &q, SignCase::HYPERBOLIC_AFFINE);
            let diff = Array2::from_shape_fn(d.shape(), |(j, k)| g[[j, k]] - 4.0 / p.sigma()[[j, k]] * l[[j, k]]);
            let e = interior_max(d.lattice(), &diff);
            ensure!(e <= TOL.at(d.h(), 2), "seed {seed}, N = {n}: {e:e}");
            worst_err = worst_err.max(e);
            if let Some(pe) = prev {
                let r: f64 = pe / e;
                ensure!(RATIO.contains(&r), "seed {seed}: ratio {r:.3}");
                worst_ratio = (worst_ratio.0.min(r), worst_ratio.1.max(r));
            }
            prev = Some(e);
        }
    }
    Ok(format!(
        "20 fields, max gap {worst_err:.2e}, ratios in [{:.3}, {:.3}]",
        worst_ratio.0, worst_ratio.1
    ))
}

/// Max over the nodes with `|z| ≤ radius`: a fixed physical region, so the
/// ratio test is not skewed by the checked band creeping toward the corners
/// where `log(1 − |z|²)` steepens.
fn max_within(d: &Domain, f: &Array2<f64>, radius: f64) -> f64 {
    f.indexed_iter()
        .filter(|((j, k), v)| v.is_finite() && d.z(*j, *k).norm() <= radius)
        .fold(0.0, |m, (_, v)| m.max(v.abs()))
}

fn zetas() -> [Complex64; 4] {
    [cx(1.0, 0.0), Complex64::from_polar(1.0, PI / 3.0), cx(0.5, 0.0), cx(2.0, 0.0)]
}

fn c3_zero_curvature() -> Outcome {
    // exact constants where they exist (ελ = −1): curvature at rounding level
    let mut torus_worst: f64 = 0.0;
    for case in SignCase::TODA.into_iter().filter(|c| c.epsilon * c.lambda == -1) {
        let (sol, q) = torus_constant(case, cx(1.0, 0.0), 64);
        for z in zetas() {
            let al = build_connection(&sol, &q, case, z, FrameModel::TodaLoop).unwrap();
            torus_worst = torus_worst.max(finite_max(&curvature_residual(&al)));
        }
    }
    ensure!(torus_worst <= 1e-10, "torus constants: {torus_worst:e}");
    // all four cases: the round solutions with Q = 0, and a Newton solve with Q ≠ 0
    let mut ratios = Vec::new();
    for case in SignCase::TODA {
        for z in zetas() {
            let mut prev = None;
            for n in [33, 65] {
                let d = Domain::disk_patch(0.6, n, n).unwrap();
                let sol = round_psi(&d, case.lambda);
                let al = build_connection(&sol, &CubicDifferential::zero(), case, z, FrameModel::TodaLoop).unwrap();
                let r = max_within(&d, &curvature_residual(&al), 0.45);
                ensure!(r <= TOL.at(d.h(), 2), "{case:?} ζ={z}: N = {n}: {r:e}");
                if let Some(p) = prev {
                    let p: f64 = p;
                    ensure!(RATIO.contains(&(p / r)), "{case:?} ζ={z}: ratio {:.3}", p / r);
                    ratios.push(p / r);
                }
                prev = Some(r);
            }
        }
    }
    let q = CubicDifferential::polynomial(vec![cx(0.2, 0.1), cx(0.1, 0.0)]);
    let mut prev = None;
    for n in [33, 65, 129] {
        let d = Domain::rectangle(0.8, 0.8, n, n).unwrap();
        let p = PdeProblem::new(d, BackgroundMetric::default(), q.clone(), SignCase::HYPERBOLIC_AFFINE).unwrap();
        let rep = newton_report(&p, 0.0);
        ensure!(rep.converged, "Newton Q ≠ 0 at N = {n}");
        let al = build_connection(&rep.solution, &q, SignCase::HYPERBOLIC_AFFINE, zetas()[1], FrameModel::TodaLoop)
            .unwrap();
        // u = 0 on a square boundary with Δu ≠ 0 at the corners gives an
        // r² log r corner singularity, so the rate is measured inside
        let r = max_within(&d, &curvature_residual(&al), 0.3);
        ensure!(r <= TOL.at(d.h(), 2), "Newton Q ≠ 0, N = {n}: {r:e}");
        if let Some(p) = prev {
            let p: f64 = p;
            ratios.push(p / r);
            ensure!(RATIO.contains(&(p / r)), "Newton Q ≠ 0: ratio {:.3} at N = {n}", p / r);
        }
        prev = Some(r);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    Ok(format!("torus constants {torus_worst:.1e}; round/Newton ratios in [{lo:.2}, {hi:.2}]"))
}

fn c4_reality() -> Outcome {
    let d = torus(16);
    let mut own_worst: f64 = 0.0;
    let mut other_best = f64::INFINITY;
    let zs = [cx(1.0, 0.0), Complex64::from_polar(1.0, PI / 3.0), cx(0.5, 0.3), cx(2.0, -1.0)];
    for case in SignCase::TODA {
        // analytic constant data: ψ constant, Q constant (not a solution
        // unless ελ = −1, but the involutions are algebraic)
        let sol = MetricSolution::from_psi(&d, &BackgroundMetric::default(), Array2::from_elem((16, 16), 0.3)).unwrap();
        let q = CubicDifferential::constant(cx(0.7, -0.4));
        let al = build_connection(&sol, &q, case, cx(1.0, 0.0), FrameModel::TodaLoop).unwrap();
        let own = RealForm::for_case(case).unwrap();
        for form in RealForm::ALL {
            let r = reality_residual(&al, form, &zs).unwrap();
            if form == own {
                own_worst = own_worst.max(r);
            } else {
                other_best = other_best.min(r);
            }
        }
    }
    ensure!(own_worst <= 1e-12, "matched pairing residual {own_worst:e}");
    ensure!(other_best > 1e-3, "mismatched pairing residual {other_best:e}");
    Ok(format!("matched ≤ {own_worst:.1e}, mismatched ≥ {other_best:.2e}"))
}

fn c5_holonomy_commutes() -> Outcome {
    let mut out = Vec::new();
    for case in SignCase::TODA.into_iter().filter(|c| c.epsilon * c.lambda == -1) {
        let mut prev: Option<f64> = None;
        for n in [32, 64, 128] {
            let (sol, q) = torus_constant(case, cx(0.7, 0.2), n);
            let al = build_connection(&sol, &q, case, cx(0.5, 0.5), FrameModel::TodaLoop).unwrap();
            let loops: Vec<PathSpec> = (0..2).map(|w| PathSpec::torus_generator(&sol.domain, w, (3, 5)).unwrap()).collect();
            let c = holonomy_report(&al, &loops).unwrap().max_commutator();
            if n == 128 {
                ensure!(c <= 1e-6, "{case:?}: commutator {c:e} at N = 128");
                out.push(format!("({},{}) {c:.1e}", case.epsilon, case.lambda));
            }
            // the constant solution makes the commutator a rounding effect:
            // refinement must reduce it at second order or keep it at rounding
            if let Some(p) = prev {
                ensure!(c <= (p / 3.0).max(1e-11), "{case:?}: {p:e} → {c:e} at N = {n}");
            }
            prev = Some(c);
        }
    }
    Ok(format!("N = 128 commutators: {}", out.join(", ")))
}

fn hyperbolic_disk_mesh(n: usize, q: &CubicDifferential) -> Result<(Domain, ImmersionMesh), String> {
    let d = Domain::disk_patch(0.6, n, n).unwrap();
    let sol = if q.is_zero() {
        MetricSolution::from_u(&d, &BackgroundMetric::PoincareDisk, Array2::zeros((n, n))).unwrap()
    } else {
        let p = PdeProblem::new(d, BackgroundMetric::PoincareDisk, q.clone(), SignCase::HYPERBOLIC_AFFINE).unwrap();
        let rep = newton_report(&p, 0.0);
        if !rep.converged {
            return Err("Newton Q ≠ 0 on the disk".into());
        }
        rep.solution
    };
    let init = AffineInit::canonical(sol.psi[d.lattice().center()], -1);
    let mesh = affine_sphere_immersion(&sol, q, -1, &init, SpanningTree::RowFirst).map_err(|e| e.to_string())?;
    Ok((d, mesh))
}

fn c6_quadric() -> Outcome {
    let (d, mesh) = hyperbolic_disk_mesh(33, &CubicDifferential::zero())?;
    let fit = quadric_fit(&mesh.real_positions().unwrap()).map_err(|e| e.to_string())?;
    ensure!(fit.residual <= TOL.at(d.h(), 2), "Q = 0 residual {:e}", fit.residual);
    ensure!(fit.signature == (2, 1), "signature {:?}", fit.signature);
    let (_, bent) = hyperbolic_disk_mesh(33, &CubicDifferential::constant(cx(0.5, 0.0)))?;
    let other = quadric_fit(&bent.real_positions().unwrap()).map_err(|e| e.to_string())?;
    let sep = other.residual / fit.residual;
    ensure!(sep >= 100.0, "Q ≠ 0 only {sep:.1}× above");
    Ok(format!("Q = 0 residual {:.2e}, signature (2,1); Q = ½ is {sep:.0}× larger", fit.residual))
}

fn hyperbolic_torus(n: usize) -> (MetricSolution, CubicDifferential, ImmersionMesh) {
    let (sol, q) = torus_constant(SignCase::HYPERBOLIC_AFFINE, cx(0.8, 0.5), n);
    let init = AffineInit::canonical(sol.psi[[n / 2, n / 2]], -1);
    let mesh = affine_sphere_immersion(&sol, &q, -1, &init, SpanningTree::RowFirst).unwrap();
    (sol, q, mesh)
}

fn c7_structure_equations() -> Outcome {
    let (sol, q, mesh) = hyperbolic_torus(32);
    let rep = verify_affine(&mesh, &sol, &q, -1, &TOL).map_err(|e| e.to_string())?;
    ensure!(rep.passed(), "failures {:?}", rep.failures());
    let names = ["det", "f_zzbar", "f_zz", "xi_z", "cubic"];
    let worst = names.iter().map(|n| rep.max(n)).fold(0.0, f64::max);
    Ok(format!("max identity residual {worst:.2e} ≤ {:.2e}, Q̂ − Q {:.2e}", TOL.at(rep.h, 2), rep.max("cubic")))
}

fn c8_conormal_duality() -> Outcome {
    let (sol, q, mesh) = hyperbolic_torus(32);
    let tol = TOL.at(mesh.lattice.h(), 2);
    let dual = conormal_dual(&mesh).map_err(|e| e.to_string())?;
    let (m0, _) = mesh_blaschke_data(&mesh).map_err(|e| e.to_string())?;
    let (m1, q1) = mesh_blaschke_data(&dual).map_err(|e| e.to_string())?;
    let qv = q.eval(cx(0.0, 0.0));
    let cubic = finite_max(&q1.mapv(|v| (v + qv).norm()));
    let metric = finite_max(&(&m1 - &m0)).max(finite_max(&m0.mapv(|v| v - (2.0 * sol.psi[[0, 0]]).exp())));
    let back = conormal_dual(&dual).map_err(|e| e.to_string())?;
    let gap = back.positions.iter().zip(mesh.positions.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    ensure!(cubic <= tol, "dual cubic + Q: {cubic:e}");
    ensure!(metric <= tol, "Blaschke metric: {metric:e}");
    ensure!(gap <= tol, "double dual: {gap:e}");
    Ok(format!("−Q {cubic:.2e}, metric {metric:.2e}, double dual {gap:.1e} (tol {tol:.2e})"))
}

fn c9_weierstrass() -> Outcome {
    let poly = |c: &[(f64, f64)]| Poly::new(c.iter().map(|&(a, b)| cx(a, b)).collect());
    let pairs = [
        HoloPair::new(poly(&[]), Poly::z()),
        HoloPair::new(poly(&[(0.0, 0.0), (0.1, 0.0)]), Poly::z()),
        HoloPair::new(poly(&[(0.0, 0.0), (0.0, 0.0), (0.2, 0.1)]), poly(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (0.1, 0.0)])),
    ];
    let d = Domain::rectangle(1.0, 1.0, 33, 33).unwrap();
    let mut worst = [0.0f64; 4];
    for (i, pair) in pairs.iter().enumerate() {
        let mesh = parabolic_from_holomorphic(pair, &d).map_err(|e| format!("pair {i}: {e}"))?;
        let sf = finite_max(&semiflat_develop(&mesh).map_err(|e| e.to_string())?.monge_ampere);
        ensure!(sf <= TOL.at(d.h(), 2), "pair {i}: mesh MA {sf:e}");
        let n = 33;
        let h = 0.36 / (n - 1) as f64;
        let s = graph_over_box(pair, [-0.18; 2], [h; 2], [n; 2], cx(0.0, 0.0)).map_err(|e| e.to_string())?;
        let tol = TOL.at(s.h(), 2);
        let ma = finite_max_d(&monge_ampere_residual(&s, 0, 2).unwrap());
        ensure!(ma <= tol, "pair {i}: graph MA {ma:e}");
        let t = legendre_transform(&s).map_err(|e| e.to_string())?;
        let ma_dual = finite_max_d(&monge_ampere_residual(&t, 0, 2).unwrap());
        ensure!(ma_dual <= tol, "pair {i}: dual MA {ma_dual:e}");
        let back = legendre_transform(&t).map_err(|e| e.to_string())?;
        let mut inv: f64 = 0.0;
        for (idx, v) in back.values.indexed_iter() {
            let x = back.node(idx.slice());
            if let (true, Some((sv, _, _))) = (v.is_finite(), s.interpolate2([x[0], x[1]])) {
                inv = inv.max((v - sv).abs());
            }
        }
        ensure!(inv <= tol, "pair {i}: s** − s {inv:e}");
        for (w, v) in worst.iter_mut().zip([sf, ma, ma_dual, inv]) {
            *w = w.max(v);
        }
    }
    Ok(format!(
        "3 pairs: mesh MA {:.1e}, graph MA {:.1e}, dual MA {:.1e}, s** − s {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn c10_monotone_bracket() -> Outcome {
    // ‖Q‖² = 16(1 − |z|²)⁶/64 peaks at the central node (N odd): 8·16/64 = 2
    let n = 33;
    let d = Domain::disk_patch(0.6, n, n).unwrap();
    let p = PdeProblem::new(d, BackgroundMetric::PoincareDisk, CubicDifferential::constant(cx(4.0, 0.0)), SignCase::HYPERBOLIC_AFFINE)
        .unwrap();
    let qmax = 8.0 * p.cubic_norm_sq().iter().cloned().fold(0.0, f64::max);
    ensure!((qmax - 2.0).abs() < 1e-12, "max 8‖Q‖² = {qmax}");
    let log_m = supersolution_bound(&p).unwrap();
    let m = log_m.exp();
    ensure!((m * m * m - m * m - 2.0).abs() < 1e-12, "m = {m} is not the root");
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let opts = MonotoneOptions {
        tolerance: 1e-12,
        max_iterations: 20_000,
        ..MonotoneOptions::default()
    };
    let mono = solve_monotone_observed(&p, &opts, |s| {
        for &v in s.current.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    })
    .unwrap();
    ensure!(mono.converged, "monotone residual {:e}", mono.residual_inf);
    ensure!(lo >= -1e-14 && hi <= log_m + 1e-14, "iterates left [0, log m]: [{lo}, {hi}] vs {log_m}");
    let newton = newton_report(&p, 0.0);
    ensure!(newton.converged, "Newton did not converge");
    let gap = mono.u().iter().zip(newton.u().iter()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    ensure!(gap <= 1e-8, "monotone vs Newton {gap:e}");
    Ok(format!("gap {gap:.1e}; {} iterations in [{lo:.3}, {hi:.4}] ⊂ [0, {log_m:.4}]", mono.iterations))
}

fn c11_ch2_continuation() -> Outcome {
    let n = 33;
    let d = Domain::disk_patch(0.6, n, n).unwrap();
    let metric = BackgroundMetric::PoincareDisk;
    let q0 = CubicDifferential::polynomial(vec![cx(1.0, 0.5), cx(0.4, -0.3), cx(0.0, 0.2)]);
    let t = 0.5 * ch2_existence_threshold(&d, &metric, &q0).unwrap();
    let p0 = PdeProblem::new(d, metric.clone(), CubicDifferential::zero(), SignCase::MINLAG_CH2).unwrap();
    let grid: Vec<f64> = (0..=8).map(|i| t * i as f64 / 8.0).collect();
    let fam = continuation_family(&p0, &q0, &grid, &NewtonOptions::default()).unwrap();
    ensure!(fam.failed_at.is_none(), "continuation failed at step {:?}", fam.failed_at);
    let last = fam.last_converged().unwrap();
    let q = q0.scaled(t);
    let p = p0.with_cubic(q.clone()).unwrap();
    let norm = induced_cubic_norm(&p, last.report.u()).iter().cloned().fold(0.0, f64::max);
    ensure!(norm <= 0.25, "max ‖Q‖ = {norm}");
    let sol = &last.report.solution;
    let al = build_connection(sol, &q, SignCase::MINLAG_CH2, cx(1.0, 0.0), FrameModel::MinimalLagrangian).unwrap();
    let lat = d.lattice();
    let (c, e) = (lat.center(), n - 3);
    let paths = [
        PathSpec::polyline(lat, &[d.z(c.0, c.1), d.z(e, e)], false).unwrap(),
        PathSpec::polyline(lat, &[d.z(2, c.1), d.z(e, c.1), d.z(e, e), d.z(2, 2), d.z(2, c.1)], true).unwrap(),
        PathSpec::polyline(lat, &[d.z(2, e), d.z(c.0, c.1), d.z(e, 2)], false).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for path in &paths {
        let s = FrameState::identity(GroupTag::Su21).transported(&al, path).unwrap();
        worst = worst.max(group_residuals(&s).membership.unwrap());
    }
    let tol = TOL.at(d.h(), 2);
    ensure!(worst <= tol, "‖F†ηF − η‖ = {worst:e}");
    Ok(format!("t = {t:.4}, max ‖Q‖ {norm:.4} ≤ ¼, SU(2,1) residual {worst:.1e} ≤ {tol:.2e}"))
}

fn c12_minimal_lagrangian_c2() -> Outcome {
    let q = CubicDifferential::polynomial(vec![cx(0.15, 0.05), cx(0.1, -0.05), cx(0.08, 0.0)]);
    let n = 33;
    let d = Domain::rectangle(1.0, 1.0, n, n).unwrap();
    let p = PdeProblem::new(d, BackgroundMetric::default(), q.clone(), SignCase::MINLAG_C2).unwrap();
    let rep = newton_report(&p, 0.0);
    ensure!(rep.converged, "Newton did not converge");
    let sol = &rep.solution;
    let mesh = minlag_c2_immersion(sol, &q, &C2Init::canonical(sol.psi[[n / 2, n / 2]]), SpanningTree::RowFirst)
        .map_err(|e| e.to_string())?;
    let v = verify_minlag_c2(&mesh, sol, &q, &TOL).map_err(|e| e.to_string())?;
    ensure!(v.passed(), "failures {:?}", v.failures());
    let shape = shape_operator_norm(&mesh, &q, sol).map_err(|e| e.to_string())?.max_deviation();
    ensure!(shape <= TOL.at(d.h(), 1), "shape operator {shape:e}");
    Ok(format!(
        "f_zz̄ {:.1e}, lagrangian {:.1e}, conformal {:.1e}, angle {:.1e}, shape {shape:.1e}",
        v.max("harmonic"),
        v.max("lagrangian"),
        v.max("conformal"),
        v.max("angle")
    ))
}

fn c13_gauss_bonnet() -> Outcome {
    let mut out = Vec::new();
    for c in [cx(1.0, 0.0), cx(0.3, -0.2)] {
        for u0 in [-1.0, 0.0, 1.0] {
            let p = PdeProblem::new(torus(32), BackgroundMetric::default(), CubicDifferential::constant(c), SignCase::MINLAG_CH2)
                .unwrap();
            let rep = newton_report(&p, u0);
            ensure!(!rep.converged, "converged for c = {c}, u₀ = {u0}");
            ensure!(rep.residual_inf > rep.tolerance, "residual below tolerance for c = {c}, u₀ = {u0}");
            ensure!(rep.clone().require_converged().is_err(), "require_converged accepted");
            out.push(rep.residual_inf);
        }
    }
    let least = out.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!("6 starts, all non-converged; smallest final residual {least:.2e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("torus constant solution", c1_torus_constant),
        ("global/local residual identity", c2_global_local_identity),
        ("zero curvature", c3_zero_curvature),
        ("reality conditions", c4_reality),
        ("holonomy commutativity", c5_holonomy_commutes),
        ("Q = 0 quadric", c6_quadric),
        ("structure equations", c7_structure_equations),
        ("conormal duality", c8_conormal_duality),
        ("Weierstrass / Monge-Ampère", c9_weierstrass),
        ("maximum principle and monotone bracket", c10_monotone_bracket),
        ("CH² continuation", c11_ch2_continuation),
        ("C² minimal Lagrangian", c12_minimal_lagrangian_c2),
        ("torus Gauss-Bonnet obstruction", c13_gauss_bonnet),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("{:>2}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| x.trim() == label.trim() || name.contains(x.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{label}] {name}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{label}] {name}: {detail} ({secs:.2}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
