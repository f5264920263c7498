//! The pipeline behind every subcommand and the report it writes.

use super::config::{RunConfig, SolverMethod, WeierstrassSpec};
use super::export::export_mesh;
use crate::error::{Error, Result};
use crate::frames::{
    build_connection, curvature_residual, group_residuals, reality_check, FrameModel, FrameState, GroupTag, PathSpec,
    SpanningTree,
};
use crate::geometry::{DomainKind, SignCase};
use crate::immersion::{
    affine_sphere_immersion, finite_max, is_checked, minlag_c2_immersion, minlag_projective_immersion,
    shape_operator_norm, sphere_frame, verify_affine, verify_minlag_c2, verify_projective, AffineInit, C2Init,
    ImmersionMesh, Tolerances, VerificationReport,
};
use crate::pde::{
    constant_solution, continuation_family, solve_monotone, solve_newton, MonotoneOptions, NewtonOptions, PdeProblem,
    SolveReport,
};
use crate::projective::{develop_rp2, holonomy_report, quadric_fit, semiflat_develop};
use crate::weierstrass::{graph_over_box, legendre_transform, monge_ampere_residual, parabolic_from_holomorphic, HoloPair, Poly};
use ndarray::{Array2, ArrayD, Dimension};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The reality involution is algebraic in the sampled data, so only
/// rounding separates the two sides.
pub const REALITY_TOL: f64 = 1e-12;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Immerse,
    Verify,
    Develop,
    Weierstrass,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Immerse => "immerse",
            Command::Verify => "verify",
            Command::Develop => "develop",
            Command::Weierstrass => "weierstrass",
            Command::All => "all",
        }
    }

    fn immerses(self) -> bool {
        !matches!(self, Command::Solve | Command::Weierstrass)
    }
}

/// One tolerance check; `value` is `None` when the measured quantity was
/// not finite, which always fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub grid: [usize; 2],
    pub case: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub method: SolverMethod,
    pub converged: bool,
    pub iterations: usize,
    pub residual_inf: f64,
    pub tolerance: f64,
    pub history: Vec<f64>,
    pub u_min: f64,
    pub u_max: f64,
    pub u_mean: f64,
    /// Last continuation parameter reached.
    pub t_reached: Option<f64>,
    /// `⅓ log(8|c|²)` on tori with constant `Q`, when it exists.
    pub constant_solution: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: Command,
    pub case: String,
    pub grid: [usize; 2],
    pub h: f64,
    pub threads: usize,
    pub tree: Option<String>,
    pub solver: Option<SolverSummary>,
    pub checks: Vec<CheckEntry>,
    pub holonomy: Option<serde_json::Value>,
    pub quadric: Option<serde_json::Value>,
    pub mesh: Option<String>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub passed: bool,
    pub exit_code: i32,
}

impl RunReport {
    fn new(cfg: &RunConfig, command: Command) -> Self {
        let (grid, h) = cfg
            .domain
            .build()
            .map(|d| {
                let (n, m) = d.shape();
                ([n, m], d.h())
            })
            .unwrap_or(([0, 0], f64::NAN));
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command,
            case: cfg.case.clone(),
            grid,
            h,
            threads: rayon::current_num_threads(),
            tree: None,
            solver: None,
            checks: Vec::new(),
            holonomy: None,
            quadric: None,
            mesh: None,
            warnings: Vec::new(),
            error: None,
            timings: BTreeMap::new(),
            passed: false,
            exit_code: EXIT_OK,
        }
    }

    /// A report for a run that never got past configuration.
    pub fn config_failure(command: Command, message: String) -> Self {
        RunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            command,
            case: String::new(),
            grid: [0, 0],
            h: f64::NAN,
            threads: rayon::current_num_threads(),
            tree: None,
            solver: None,
            checks: Vec::new(),
            holonomy: None,
            quadric: None,
            mesh: None,
            warnings: Vec::new(),
            error: Some(message),
            timings: BTreeMap::new(),
            passed: false,
            exit_code: EXIT_CONFIG,
        }
    }

    fn check(&mut self, name: impl Into<String>, value: f64, tolerance: f64) {
        let pass = value.is_finite() && value <= tolerance;
        self.checks.push(CheckEntry {
            name: name.into(),
            value: value.is_finite().then_some(value),
            tolerance,
            pass,
            grid: self.grid,
            case: self.case.clone(),
        });
    }

    fn absorb(&mut self, prefix: &str, v: &VerificationReport) {
        for r in &v.residuals {
            self.check(format!("{prefix}.{}", r.name), r.max, r.tolerance);
        }
    }

    pub fn failures(&self) -> Vec<&CheckEntry> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn check_named(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Runs `command`, writes the mesh (when one is produced) and the report
/// into `out_dir`, and returns the report with its exit code set.
pub fn execute(cfg: &RunConfig, command: Command, out_dir: &Path, strict: bool) -> RunReport {
    let mut report = RunReport::new(cfg, command);
    let mut ctx = Context {
        cfg,
        command,
        out_dir,
        tol: cfg.checks.tolerances(),
        report: &mut report,
    };
    let outcome = ctx.run();
    report.exit_code = match outcome {
        Ok(()) if report.checks.iter().all(|c| c.pass) => EXIT_OK,
        Ok(()) => EXIT_CHECK_FAILED,
        Err(Error::Config(msg)) => {
            report.error = Some(msg);
            EXIT_CONFIG
        }
        Err(e @ Error::NonConvergence { .. }) => {
            report.error = Some(e.to_string());
            EXIT_NONCONVERGENCE
        }
        Err(e) => {
            report.error = Some(e.to_string());
            EXIT_CHECK_FAILED
        }
    };
    if strict && report.exit_code == EXIT_OK && !report.warnings.is_empty() {
        report.exit_code = EXIT_CHECK_FAILED;
    }
    report.passed = report.exit_code == EXIT_OK;
    let path = out_dir.join(&cfg.outputs.report);
    if let Err(e) = report.write(&path) {
        report.error = Some(format!("cannot write report {}: {e}", path.display()));
        report.exit_code = EXIT_CONFIG;
        report.passed = false;
    }
    report
}

struct Context<'a> {
    cfg: &'a RunConfig,
    command: Command,
    out_dir: &'a Path,
    tol: Tolerances,
    report: &'a mut RunReport,
}

impl<'a> Context<'a> {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let t0 = Instant::now();
        let out = f(self);
        *self.report.timings.entry(stage.into()).or_insert(0.0) += t0.elapsed().as_secs_f64();
        out
    }

    fn run(&mut self) -> Result<()> {
        self.cfg.validate()?;
        if !self.out_dir.is_dir() {
            return Err(Error::Config(format!("output directory {} does not exist", self.out_dir.display())));
        }
        let case = self.cfg.sign_case()?;
        if self.command == Command::Weierstrass {
            let w = self.require_weierstrass()?;
            return self.timed("weierstrass", |c| c.weierstrass(w));
        }
        let problem = PdeProblem::new(
            self.cfg.domain.build()?,
            self.cfg.metric.clone(),
            self.cfg.cubic.clone(),
            case,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let solved = self.timed("solve", |c| c.solve(&problem))?;
        if !self.command.immerses() {
            return Ok(());
        }
        let tree: SpanningTree = self.cfg.immersion.tree.into();
        self.report.tree = Some(format!("{tree:?}"));
        let mesh = self.timed("immerse", |c| c.immerse(&solved, case, tree))?;
        if matches!(self.command, Command::Immerse | Command::All) || self.cfg.outputs.mesh.is_some() {
            self.export(&mesh)?;
        }
        if matches!(self.command, Command::Verify | Command::All) {
            self.timed("verify", |c| c.verify(&solved, &mesh, case))?;
        }
        if matches!(self.command, Command::Develop | Command::All) {
            self.timed("develop", |c| c.develop(&solved, &mesh, case))?;
        }
        if self.command == Command::All {
            if let Some(w) = &self.cfg.weierstrass {
                self.timed("weierstrass", |c| c.weierstrass(w))?;
            }
        }
        Ok(())
    }

    fn require_weierstrass(&self) -> Result<&'a WeierstrassSpec> {
        self.cfg
            .weierstrass
            .as_ref()
            .ok_or_else(|| Error::Config("the weierstrass command needs a \"weierstrass\" section".into()))
    }

    fn solve(&mut self, p: &PdeProblem) -> Result<SolveReport> {
        let s = &self.cfg.solver;
        let newton = NewtonOptions {
            tolerance: s.tolerance,
            max_iterations: s.max_iterations,
            ..NewtonOptions::default()
        };
        let mut t_reached = None;
        let out = match s.method {
            SolverMethod::Newton => solve_newton(p, &Array2::from_elem(p.domain.shape(), s.initial), &newton)?,
            SolverMethod::Monotone => solve_monotone(
                p,
                &MonotoneOptions {
                    tolerance: s.tolerance,
                    max_iterations: s.max_iterations,
                    ..MonotoneOptions::default()
                },
            )?,
            SolverMethod::Continuation => {
                let fam = continuation_family(p, &p.cubic, &s.t_grid, &newton)?;
                let reached_end = fam.failed_at.is_none();
                let step = if reached_end {
                    fam.steps.last()
                } else {
                    fam.steps.get(fam.failed_at.unwrap_or(0))
                }
                .expect("continuation takes at least one step");
                t_reached = fam.last_converged().map(|s| s.t);
                if reached_end && step.t != 1.0 {
                    self.report.warnings.push(format!("continuation grid ends at t = {}", step.t));
                }
                step.report.clone()
            }
        };
        let u = out.u();
        let n = u.len() as f64;
        let constant = match (&p.cubic, p.domain.kind) {
            (crate::geometry::CubicDifferential::Constant { c }, DomainKind::Torus { .. }) => {
                constant_solution(*c, p.case).ok()
            }
            _ => None,
        };
        self.report.solver = Some(SolverSummary {
            method: s.method,
            converged: out.converged,
            iterations: out.iterations,
            residual_inf: out.residual_inf,
            tolerance: out.tolerance,
            history: out.history.clone(),
            u_min: u.iter().cloned().fold(f64::INFINITY, f64::min),
            u_max: u.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            u_mean: u.sum() / n,
            t_reached,
            constant_solution: constant,
        });
        self.report.check("pde.residual", out.residual_inf, out.tolerance);
        if !out.converged {
            if s.require_convergence {
                return out.require_converged();
            }
            self.report
                .warnings
                .push("solver did not converge; later stages use the last iterate".into());
        }
        Ok(out)
    }

    fn immerse(&mut self, solved: &SolveReport, case: SignCase, tree: SpanningTree) -> Result<ImmersionMesh> {
        let sol = &solved.solution;
        let q = &self.cfg.cubic;
        let psi0 = sol.psi[sol.domain.lattice().center()];
        if case.epsilon == 1 {
            affine_sphere_immersion(sol, q, case.lambda, &AffineInit::canonical(psi0, case.lambda), tree)
        } else if case.lambda == 0 {
            minlag_c2_immersion(sol, q, &C2Init::canonical(psi0), tree)
        } else {
            minlag_projective_immersion(sol, q, case, None, tree)
        }
    }

    fn export(&mut self, mesh: &ImmersionMesh) -> Result<()> {
        let name = match &self.cfg.outputs.mesh {
            Some(m) => m.clone(),
            None if mesh.target.embeds_in_r3() => "mesh.obj".into(),
            None => "mesh.json".into(),
        };
        if name.ends_with(".obj") && !mesh.target.embeds_in_r3() {
            return Err(Error::Config(format!(
                "target not embeddable in R³: {} meshes are written as .json",
                mesh.target.name()
            )));
        }
        let path: PathBuf = self.out_dir.join(&name);
        self.timed("export", |_| export_mesh(mesh, &path))?;
        self.report.mesh = Some(name);
        Ok(())
    }

    fn primary_model(case: SignCase) -> FrameModel {
        match (case.epsilon, case.lambda) {
            (1, _) => FrameModel::AffineStructure,
            (_, 0) => FrameModel::FlatC2,
            _ => FrameModel::MinimalLagrangian,
        }
    }

    fn verify(&mut self, solved: &SolveReport, mesh: &ImmersionMesh, case: SignCase) -> Result<()> {
        let sol = &solved.solution;
        let q = &self.cfg.cubic;
        let h = sol.domain.h();
        let h2 = self.tol.at(h, 2);
        let model = Self::primary_model(case);
        let alpha = build_connection(sol, q, case, Complex64::new(1.0, 0.0), model)?;
        self.report
            .check(format!("connection.curvature.{}", model_name(model)), core_max(&sol.domain, &curvature_residual(&alpha)), h2);
        if case.lambda != 0 {
            let toda = build_connection(sol, q, case, Complex64::new(1.0, 0.0), FrameModel::TodaLoop)?;
            for &z in &self.cfg.checks.zetas {
                let at = toda.at_zeta(z)?;
                self.report.check(
                    format!("connection.curvature.toda_loop[{}{:+}i]", z.re, z.im),
                    core_max(&sol.domain, &curvature_residual(&at)),
                    h2,
                );
            }
            let r = reality_check(&toda, case, &self.cfg.checks.zetas)?;
            self.report.check("connection.reality", r, REALITY_TOL);
        }
        match (case.epsilon, case.lambda) {
            (1, lambda) => {
                let v = verify_affine(mesh, sol, q, lambda, &self.tol)?;
                self.report.absorb("immersion", &v);
                if lambda != 0 {
                    let (member, det) = affine_group_residuals(mesh, sol);
                    self.report.check("immersion.group", member, h2);
                    self.report.check("immersion.group_det", det, h2);
                }
            }
            (_, 0) => {
                let v = verify_minlag_c2(mesh, sol, q, &self.tol)?;
                self.report.absorb("immersion", &v);
                let shape = shape_operator_norm(mesh, q, sol)?;
                self.report.check("immersion.shape_operator", shape.max_deviation(), self.tol.at(h, 1));
            }
            _ => {
                let v = verify_projective(mesh, sol, &self.tol)?;
                self.report.absorb("immersion", &v);
            }
        }
        Ok(())
    }

    fn develop(&mut self, solved: &SolveReport, mesh: &ImmersionMesh, case: SignCase) -> Result<()> {
        let sol = &solved.solution;
        let h = sol.domain.h();
        if sol.domain.is_torus() {
            let (model, zeta) = if case.lambda != 0 {
                (FrameModel::TodaLoop, Complex64::new(1.0, 0.0))
            } else {
                (Self::primary_model(case), Complex64::new(1.0, 0.0))
            };
            let alpha = build_connection(sol, &self.cfg.cubic, case, zeta, model)?;
            let base = sol.domain.lattice().center();
            let loops = [
                PathSpec::torus_generator(&sol.domain, 0, base)?,
                PathSpec::torus_generator(&sol.domain, 1, base)?,
            ];
            let hol = holonomy_report(&alpha, &loops)?;
            self.report.check("holonomy.commutator", hol.max_commutator(), self.tol.at(h, 2));
            // transport is fourth order
            self.report.check("holonomy.det", hol.max_det_residual(), self.tol.at(h, 4));
            self.report.holonomy = Some(serde_json::to_value(&hol)?);
            return Ok(());
        }
        match (case.epsilon, case.lambda) {
            (1, 0) => {
                let sf = semiflat_develop(mesh)?;
                self.report.check("develop.semiflat_monge_ampere", finite_max(&sf.monge_ampere), self.tol.at(h, 2));
            }
            (1, _) => {
                let pts = develop_rp2(mesh)?;
                let off_chart = pts.iter().filter(|p| p.affine_chart().is_none()).count();
                if off_chart > 0 {
                    self.report.warnings.push(format!("{off_chart} developed points lie at infinity"));
                }
                let positions = mesh.real_positions().expect("affine meshes are real");
                let fit = quadric_fit(&positions)?;
                self.report.quadric = Some(serde_json::to_value(&fit)?);
            }
            _ => self
                .report
                .warnings
                .push(format!("develop: nothing to develop for {} on a planar domain", self.cfg.case)),
        }
        Ok(())
    }

    fn weierstrass(&mut self, w: &WeierstrassSpec) -> Result<()> {
        let domain = self.cfg.domain.build()?;
        if domain.is_torus() {
            return Err(Error::Config("the weierstrass stage needs a planar domain".into()));
        }
        let pair = HoloPair::new(Poly::new(w.f.clone()), Poly::new(w.g.clone()));
        let mesh = parabolic_from_holomorphic(&pair, &domain)?;
        let sf = semiflat_develop(&mesh)?;
        self.report.check(
            "weierstrass.mesh_monge_ampere",
            finite_max(&sf.monge_ampere),
            self.tol.at(domain.h(), 2),
        );
        let step = 2.0 * w.half_width / (w.n - 1) as f64;
        let graph = graph_over_box(&pair, [-w.half_width; 2], [step; 2], [w.n; 2], Complex64::new(0.0, 0.0))?;
        let missing = graph.values.iter().filter(|v| !v.is_finite()).count();
        if missing > 0 {
            self.report
                .warnings
                .push(format!("{missing} graph nodes fall outside the chart image"));
        }
        let h2 = self.tol.at(graph.h(), 2);
        self.report
            .check("weierstrass.graph_monge_ampere", finite_max_d(&monge_ampere_residual(&graph, 0, 2)?), h2);
        let dual = legendre_transform(&graph)?;
        self.report
            .check("weierstrass.legendre_monge_ampere", finite_max_d(&monge_ampere_residual(&dual, 0, 2)?), h2);
        let back = legendre_transform(&dual)?;
        let mut worst: f64 = 0.0;
        for (idx, v) in back.values.indexed_iter() {
            let x = back.node(idx.slice());
            if let (true, Some((s, _, _))) = (v.is_finite(), graph.interpolate2([x[0], x[1]])) {
                worst = worst.max((v - s).abs());
            }
        }
        self.report.check("weierstrass.legendre_involution", worst, h2);
        if self.command == Command::Weierstrass {
            self.export(&mesh)?;
        }
        Ok(())
    }
}

fn model_name(m: FrameModel) -> &'static str {
    match m {
        FrameModel::TodaLoop => "toda_loop",
        FrameModel::AffineStructure => "affine_structure",
        FrameModel::MinimalLagrangian => "minimal_lagrangian",
        FrameModel::FlatC2 => "flat_c2",
        FrameModel::Custom => "custom",
    }
}

/// Max over the whole torus, or over the nodes at least a tenth of each side
/// in from a planar edge: Dirichlet data `u = 0` with `Δu ≠ 0` at a corner
/// leaves an `r² log r` singularity there, which no grid refinement removes.
fn core_max(domain: &crate::geometry::Domain, f: &Array2<f64>) -> f64 {
    if domain.is_torus() {
        return finite_max(f);
    }
    let (n, m) = domain.shape();
    let (mj, mk) = (((n - 1) as f64 / 10.0).ceil() as usize, ((m - 1) as f64 / 10.0).ceil() as usize);
    f.indexed_iter()
        .filter(|((j, k), v)| v.is_finite() && *j >= mj && *k >= mk && j + mj < n && k + mk < m)
        .fold(0.0, |acc, (_, v)| acc.max(v.abs()))
}

fn finite_max_d(a: &ArrayD<f64>) -> f64 {
    a.iter().filter(|v| v.is_finite()).fold(0.0, |m, v| m.max(v.abs()))
}

/// Distance of the real sphere frame from SL(3, R) (up to the constant
/// gauge) and its determinant drift from `i/2`, over the checked nodes.
fn affine_group_residuals(mesh: &ImmersionMesh, sol: &crate::geometry::MetricSolution) -> (f64, f64) {
    let lat = &mesh.lattice;
    let mut member: f64 = 0.0;
    let mut det: f64 = 0.0;
    for ((j, k), rows) in mesh.frames.indexed_iter() {
        if !is_checked(lat, j, k) {
            continue;
        }
        let state = FrameState {
            f: sphere_frame(rows, sol.psi[[j, k]]),
            group: GroupTag::Sl3rConjugate,
            det0: Complex64::new(0.0, 0.5),
        };
        let r = group_residuals(&state);
        member = member.max(r.membership.unwrap_or(f64::NAN));
        det = det.max(r.det_drift);
    }
    (member, det)
}
