//! Verification suites: conservation sweeps, convergence studies and
//! consistency checks of every solver layer, reported as named checks.
//!
//! Every measurement is also exposed on its own so tests can assert on it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::bc::{Field, FluidDirichlet, FluidMesh, SolidDirichlet};
use crate::cutcell::{classify_and_cut, CellKind, CutOptions};
use crate::error::{FsiError, Result};
use crate::fem::{eval_basis, gauss_quad};
use crate::fixtures::{cavity_bcs, embedded_disc_cavity, DiscCavity};
use crate::fluid::FluidParams;
use crate::geometry::{clip_by_convex, perimeter, signed_area, vec2, Vec2};
use crate::mesh::{generate_annulus_patch, generate_disc_mesh, generate_structured_rect, QuadMesh};
use crate::output::{interface_jumps, sample_points, Region};
use crate::problem::{DofMap, FieldState, Mode, Problem, ProblemDefinition};
use crate::solid::{oscillator_step, GAlpha, SolidIntegrator, SolidParams, SolidState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Geometry,
    Fluid,
    Solid,
    Coupling,
    Monolithic,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Geometry,
        Suite::Fluid,
        Suite::Solid,
        Suite::Coupling,
        Suite::Monolithic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Fluid => "fluid",
            Suite::Solid => "solid",
            Suite::Coupling => "coupling",
            Suite::Monolithic => "monolithic",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = FsiError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                FsiError::Usage(format!(
                    "unknown suite '{s}', expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// One named pass/fail measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. "< 1e-10".
    pub rule: String,
    pub passed: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            rule: format!("< {limit:e}"),
            passed: value < limit,
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            rule: format!(">= {limit}"),
            passed: value >= limit,
        }
    }

    pub fn zero(name: &str, value: f64) -> Check {
        Check {
            name: name.into(),
            value,
            rule: "= 0".into(),
            passed: value == 0.0,
        }
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            rule: format!("> {limit:e}"),
            passed: value > limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check: verdict, name, measured value and rule.
    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}/{}: {:e} (want {})\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    self.suite,
                    c.name,
                    c.value,
                    c.rule
                )
            })
            .collect()
    }
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Geometry => geometry_suite()?,
        Suite::Fluid => fluid_suite()?,
        Suite::Solid => solid_suite()?,
        Suite::Coupling => coupling_suite()?,
        Suite::Monolithic => monolithic_suite()?,
    };
    Ok(SuiteReport { suite, checks })
}

/// Errors on a sequence of refinements with mesh sizes `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
}

impl RateStudy {
    /// Observed orders between consecutive levels.
    pub fn rates(&self) -> Vec<f64> {
        (1..self.h.len())
            .map(|i| (self.errors[i - 1] / self.errors[i]).ln() / (self.h[i - 1] / self.h[i]).ln())
            .collect()
    }

    pub fn min_rate(&self) -> f64 {
        self.rates().into_iter().fold(f64::INFINITY, f64::min)
    }
}

// geometry

/// Outcome of a randomized cutter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaSweep {
    pub positions: usize,
    pub failures: usize,
    /// Worst |fluid area + cutter area − mesh area| over all positions.
    pub max_area_error: f64,
    /// Worst |Σ quadrature weights − fluid area|.
    pub max_weight_error: f64,
    /// Worst |Σ interface segment lengths − cutter perimeter|.
    pub max_length_error: f64,
}

fn random_cutter(rng: &mut impl Rng) -> Vec<Vec2> {
    let c = vec2(
        0.3 + 0.4 * rng.random::<f64>(),
        0.3 + 0.4 * rng.random::<f64>(),
    );
    let r = 0.05 + 0.2 * rng.random::<f64>();
    let n = rng.random_range(3..40usize);
    let phase = 2.0 * PI * rng.random::<f64>();
    let star = if rng.random::<bool>() {
        0.3 + 0.7 * rng.random::<f64>()
    } else {
        1.0
    };
    (0..n)
        .map(|k| {
            let a = phase + 2.0 * PI * k as f64 / n as f64;
            let rr = if k % 2 == 1 { r * star } else { r };
            c + vec2(rr * a.cos(), rr * a.sin())
        })
        .collect()
}

/// Cuts an `n`×`n` unit-square mesh with `positions` random star-shaped
/// polygons lying inside the square and checks area and length bookkeeping.
pub fn area_sweep(positions: usize, n: usize, seed: u64) -> Result<AreaSweep> {
    let mesh = generate_structured_rect(vec2(0.0, 0.0), vec2(1.0, 1.0), n, n)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = AreaSweep {
        positions,
        failures: 0,
        max_area_error: 0.0,
        max_weight_error: 0.0,
        max_length_error: 0.0,
    };
    for _ in 0..positions {
        let cutter = random_cutter(&mut rng);
        let cs = match classify_and_cut(&mesh, &cutter, None, &CutOptions::default()) {
            Ok(cs) => cs,
            Err(e) => {
                log::warn!("cut failed: {e}");
                out.failures += 1;
                continue;
            }
        };
        let fluid: f64 = (0..mesh.num_elements())
            .map(|e| cs.physical_area(&mesh, e))
            .sum();
        let covered: f64 = (0..mesh.num_elements())
            .map(|e| signed_area(&clip_by_convex(&cs.cutter, &mesh.element_polygon(e))))
            .sum();
        let weights: f64 = (0..mesh.num_elements())
            .map(|e| match cs.kind(e) {
                CellKind::Active => mesh.element_area(e),
                CellKind::Void => 0.0,
                CellKind::Cut => cs.cut_cells[&e].points.iter().map(|p| p.w).sum(),
            })
            .sum();
        let length: f64 = cs.segments.iter().map(|s| s.length()).sum();
        out.max_area_error = out
            .max_area_error
            .max((fluid + covered - mesh.total_area()).abs());
        out.max_weight_error = out.max_weight_error.max((weights - fluid).abs());
        out.max_length_error = out
            .max_length_error
            .max((length - perimeter(&cs.cutter)).abs());
    }
    Ok(out)
}

fn geometry_suite() -> Result<Vec<Check>> {
    let s = area_sweep(1000, 20, 7)?;
    Ok(vec![
        Check::below("sweep failures", s.failures as f64, 0.5),
        Check::below("sweep area error", s.max_area_error, 1e-10),
        Check::below("sweep quadrature weight error", s.max_weight_error, 1e-10),
        Check::below("sweep interface length error", s.max_length_error, 1e-10),
    ])
}

// fluid

fn mms_exact(x: Vec2) -> [f64; 3] {
    let (sx, cx) = (PI * x.x).sin_cos();
    let (sy, cy) = (PI * x.y).sin_cos();
    [sx * sy, cx * cy, cx * sy]
}

/// Body force per unit mass for [`mms_exact`] with kinematic viscosity `nu`
/// and density `rho`.
fn mms_force(x: Vec2, nu: f64, rho: f64) -> Vec2 {
    let (sx, cx) = (PI * x.x).sin_cos();
    let (sy, cy) = (PI * x.y).sin_cos();
    let conv = vec2(PI * sx * cx, -PI * sy * cy);
    let visc = vec2(sx * sy, cx * cy) * (2.0 * nu * PI * PI);
    let grad_p = vec2(-PI * sx * sy, PI * cx * cy) / rho;
    conv + visc + grad_p
}

fn all_boundary_nodes(mesh: &QuadMesh) -> Vec<usize> {
    let mut nodes: Vec<usize> = mesh.boundary_facets.iter().flat_map(|f| f.nodes).collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// Velocity (components 0, 1) fixed to `exact` on every boundary node, and
/// the pressure pinned to its exact value at node 0.
fn exact_boundary(mesh: &QuadMesh, exact: fn(Vec2) -> [f64; 3]) -> Vec<FluidDirichlet> {
    let nodes = all_boundary_nodes(mesh);
    let mut out: Vec<FluidDirichlet> = (0..2)
        .map(|c| FluidDirichlet {
            mesh: FluidMesh::Background,
            nodes: nodes.clone(),
            component: c,
            value: Field::from_fn(move |x, _| exact(x)[c]),
        })
        .collect();
    out.push(FluidDirichlet {
        mesh: FluidMesh::Background,
        nodes: vec![0],
        component: 2,
        value: Field::from_fn(move |x, _| exact(x)[2]),
    });
    out
}

/// L2 errors of velocity and mean-free pressure on an uncut mesh.
fn l2_errors(mesh: &QuadMesh, up: &[f64], exact: fn(Vec2) -> [f64; 3]) -> Result<(f64, f64)> {
    let rule = gauss_quad(4);
    let mut pts = Vec::new();
    for (e, el) in mesh.elements.iter().enumerate() {
        let poly = el.map(|n| mesh.nodes[n]);
        for &(xi, w) in &rule {
            let b = eval_basis(e, &poly, xi)?;
            let mut v = [0.0; 3];
            for (a, &n) in el.iter().enumerate() {
                for (c, vc) in v.iter_mut().enumerate() {
                    *vc += b.n[a] * up[3 * n + c];
                }
            }
            let ex = exact(b.x);
            pts.push((w * b.det_j, [v[0] - ex[0], v[1] - ex[1], v[2] - ex[2]]));
        }
    }
    let area: f64 = pts.iter().map(|p| p.0).sum();
    let mean_p = pts.iter().map(|p| p.0 * p.1[2]).sum::<f64>() / area;
    let eu = pts
        .iter()
        .map(|p| p.0 * (p.1[0].powi(2) + p.1[1].powi(2)))
        .sum::<f64>();
    let ep = pts
        .iter()
        .map(|p| p.0 * (p.1[2] - mean_p).powi(2))
        .sum::<f64>();
    Ok((eu.sqrt(), ep.sqrt()))
}

/// Steady stabilized Navier–Stokes on the unit square with a manufactured
/// solenoidal solution, one level per entry of `levels` (elements per side).
/// Returns the velocity and pressure studies.
pub fn mms_study(levels: &[usize]) -> Result<(RateStudy, RateStudy)> {
    let (rho, mu) = (1.0, 0.1);
    let mut vel = RateStudy {
        h: Vec::new(),
        errors: Vec::new(),
    };
    let mut pres = vel.clone();
    for &n in levels {
        let mesh = generate_structured_rect(vec2(0.0, 0.0), vec2(1.0, 1.0), n, n)?;
        let mut def =
            ProblemDefinition::new(Mode::SingleMesh, mesh.clone(), FluidParams::steady(rho, mu));
        def.fluid_bcs = exact_boundary(&mesh, mms_exact);
        let nu = mu / rho;
        def.body_force = Some(std::sync::Arc::new(move |x, _| mms_force(x, nu, rho)));
        let problem = Problem::new(def)?;
        let (state, _) = problem.step(&problem.initial_state()?)?;
        let (eu, ep) = l2_errors(&mesh, &state.bg.up, mms_exact)?;
        let h = 1.0 / n as f64;
        vel.h.push(h);
        vel.errors.push(eu);
        pres.h.push(h);
        pres.errors.push(ep);
    }
    Ok((vel, pres))
}

/// Unit-square background (8×8) cut by a straight vertical wall of a rigid
/// solid, leaving a fluid sliver of relative width `f` in the cut column.
/// Returns the 2-norm condition number of the background velocity block of
/// the tangent for each sliver fraction.
pub fn gp_conditioning(ghost: bool, fractions: &[f64]) -> Result<Vec<f64>> {
    let n = 8;
    let h = 1.0 / n as f64;
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let xc = 0.5 + f * h;
        let bg = generate_structured_rect(vec2(0.0, 0.0), vec2(1.0, 1.0), n, n)?;
        let solid = generate_structured_rect(vec2(xc, -0.5), vec2(1.5 - xc, 2.0), 2, 3)?;
        let mut fluid = FluidParams::new(1.0, 0.01, 1.0, 0.01);
        if !ghost {
            fluid.gamma_c = 0.0;
            fluid.gamma_u = 0.0;
            fluid.gamma_p = 0.0;
        }
        let all: Vec<usize> = (0..solid.num_nodes()).collect();
        let params = SolidParams {
            rho: 1.0,
            young: 100.0,
            poisson: 0.3,
            rho_inf: 1.0,
        };
        let mut def = ProblemDefinition::new(Mode::FixedGrid, bg.clone(), fluid);
        def.solid = Some((solid, params));
        def.solid_bcs = (0..2)
            .map(|c| SolidDirichlet {
                nodes: all.clone(),
                component: c,
                value: Field::constant(0.0),
            })
            .collect();
        def.fluid_bcs = cavity_bcs(&bg, FluidMesh::Background, 0.0);
        let problem = Problem::new(def)?;
        let (ctx, it, geom, _) = problem.prepare_step(&problem.initial_state()?)?;
        let dofs = DofMap::build(&problem, &geom.cut.active_nodes);
        let k = problem
            .assemble(&ctx, &it, &it, &geom, &dofs, true)?
            .matrix
            .expect("tangent requested")
            .to_dense();
        let vel: Vec<usize> = dofs
            .bg
            .iter()
            .enumerate()
            .filter(|(i, _)| i % 3 != 2)
            .filter_map(|(_, g)| *g)
            .collect();
        let block = k.select_rows(&vel).select_columns(&vel);
        let sv = block.singular_values();
        out.push(sv.max() / sv.min());
    }
    Ok(out)
}

/// Sliver fractions of the conditioning sweep.
pub const SLIVER_FRACTIONS: [f64; 7] = [0.5, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn fluid_suite() -> Result<Vec<Check>> {
    let (vel, pres) = mms_study(&[8, 16, 32, 64])?;
    let with = gp_conditioning(true, &SLIVER_FRACTIONS)?;
    let without = gp_conditioning(false, &SLIVER_FRACTIONS)?;
    Ok(vec![
        Check::at_least("manufactured velocity L2 rate", vel.min_rate(), 1.8),
        Check::at_least("manufactured pressure L2 rate", pres.min_rate(), 0.9),
        Check::below("condition spread with ghost penalty", spread(&with), 1e3),
        Check::above(
            "condition spread without ghost penalty",
            spread(&without),
            1e3,
        ),
    ])
}

// solid

/// Energy behaviour of the Generalized-α single-dof oscillator at ρ∞ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorCheck {
    /// Largest relative energy deviation over one period with Δt = T/200.
    pub drift: f64,
    pub galpha: GAlpha,
}

pub fn oscillator_check() -> Result<OscillatorCheck> {
    let (m, k) = (2.0f64, 5.0f64);
    let period = 2.0 * PI / (k / m).sqrt();
    let dt = period / 200.0;
    let galpha = GAlpha::from_spectral_radius(1.0)?;
    let mut s = (1.0, 0.0, -k / m);
    let e0 = 0.5 * k;
    let mut drift: f64 = 0.0;
    for _ in 0..200 {
        s = oscillator_step(m, k, &galpha, dt, s);
        let e = 0.5 * m * s.1 * s.1 + 0.5 * k * s.0 * s.0;
        drift = drift.max((e - e0).abs() / e0);
    }
    Ok(OscillatorCheck { drift, galpha })
}

/// A clamped elastic beam released with a bending velocity, advanced by the
/// coupled driver (fixed-grid mode with the fluid mesh far away) and by the
/// standalone integrator. Returns the largest relative displacement mismatch.
pub fn pure_solid_mismatch(steps: usize) -> Result<f64> {
    let beam = generate_structured_rect(vec2(0.0, 0.0), vec2(1.0, 0.2), 8, 2)?;
    let params = SolidParams {
        rho: 1.0,
        young: 100.0,
        poisson: 0.3,
        rho_inf: 0.8,
    };
    let dt = 0.02;
    let bg = generate_structured_rect(vec2(10.0, 10.0), vec2(1.0, 1.0), 2, 2)?;
    let clamped = beam.node_set("left")?.to_vec();
    let mut def = ProblemDefinition::new(
        Mode::FixedGrid,
        bg.clone(),
        FluidParams::new(1.0, 1.0, 1.0, dt),
    );
    def.solid = Some((beam.clone(), params));
    def.solid_bcs = (0..2)
        .map(|c| SolidDirichlet {
            nodes: clamped.clone(),
            component: c,
            value: Field::constant(0.0),
        })
        .collect();
    def.fluid_bcs = cavity_bcs(&bg, FluidMesh::Background, 0.0);
    def.newton.rtol = 1e-13;
    def.newton.atol = 1e-14;
    let problem = Problem::new(def)?;

    let n = 2 * beam.num_nodes();
    let mut fixed = vec![false; n];
    for &c in &clamped {
        fixed[2 * c] = true;
        fixed[2 * c + 1] = true;
    }
    let integrator = SolidIntegrator::new(&beam, params, fixed, vec![0.0; n])?;

    let mut state = problem.initial_state()?;
    let solid = state.solid.as_mut().expect("solid present");
    for (i, x) in beam.nodes.iter().enumerate() {
        if !clamped.contains(&i) {
            solid.v[2 * i + 1] = 0.5 * x.x;
        }
    }
    let mut reference: SolidState = solid.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        state = problem.step(&state)?.0;
        reference = integrator.step(&reference, dt)?;
        let d = &state.solid.as_ref().expect("solid present").d;
        let scale = reference.d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = d
            .iter()
            .zip(&reference.d)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

fn solid_suite() -> Result<Vec<Check>> {
    let osc = oscillator_check()?;
    let ga = osc.galpha;
    let formula_error = (ga.alpha_f - 0.5)
        .abs()
        .max((ga.alpha_m - 0.5).abs())
        .max((ga.beta - 0.25).abs())
        .max((ga.gamma - 0.5).abs());
    Ok(vec![
        Check::below("oscillator energy drift over one period", osc.drift, 1e-3),
        Check::zero("parameters at unit spectral radius", formula_error),
        Check::below(
            "coupled driver vs standalone integrator",
            pure_solid_mismatch(20)?,
            1e-12,
        ),
    ])
}

// coupling

/// Couette flow through a channel with an embedded rectangular patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouetteCheck {
    pub samples: usize,
    /// Largest velocity difference between the coupled and single-mesh solutions.
    pub max_difference: f64,
    /// Largest error of the single-mesh oracle against the exact profile.
    pub oracle_error: f64,
    /// L2 norm of the patch–background velocity jump on the interface.
    pub jump: f64,
}

fn couette_exact(x: Vec2) -> [f64; 3] {
    [x.y, 0.0, 0.0]
}

/// Rectangle mesh with its whole boundary tagged "ff".
fn patch_rect(origin: Vec2, extent: Vec2, nx: usize, ny: usize) -> Result<QuadMesh> {
    let m = generate_structured_rect(origin, extent, nx, ny)?;
    QuadMesh::from_elements(m.nodes, m.elements, |_, _| "ff".into())
}

pub fn couette_with_patch() -> Result<CouetteCheck> {
    let bg = generate_structured_rect(vec2(0.0, 0.0), vec2(1.0, 1.0), 10, 10)?;
    let fluid = FluidParams::steady(1.0, 1.0);
    let solve = |patch: Option<QuadMesh>| -> Result<(Problem, FieldState)> {
        let mode = if patch.is_some() {
            Mode::Hybrid
        } else {
            Mode::SingleMesh
        };
        let mut def = ProblemDefinition::new(mode, bg.clone(), fluid);
        def.patch = patch;
        def.fluid_bcs = exact_boundary(&bg, couette_exact);
        let problem = Problem::new(def)?;
        let state = problem.step(&problem.initial_state()?)?.0;
        Ok((problem, state))
    };
    let (coupled, cs) = solve(Some(patch_rect(vec2(0.33, 0.27), vec2(0.41, 0.36), 5, 4)?))?;
    let (single, ss) = solve(None)?;
    let points: Vec<Vec2> = (0..100)
        .map(|k| vec2(0.05 + 0.1 * (k % 10) as f64, 0.05 + 0.1 * (k / 10) as f64))
        .collect();
    let a = sample_points(&coupled, &cs, &points)?;
    let b = sample_points(&single, &ss, &points)?;
    let mut out = CouetteCheck {
        samples: points.len(),
        max_difference: 0.0,
        oracle_error: 0.0,
        jump: 0.0,
    };
    for ((x, sa), sb) in points.iter().zip(&a).zip(&b) {
        if sa.2 == Region::Void || sb.2 == Region::Void {
            return Err(FsiError::Geometry(format!(
                "sample ({}, {}) fell into void",
                x.x, x.y
            )));
        }
        out.max_difference = out.max_difference.max((sa.0 - sb.0).amax());
        let ex = couette_exact(*x);
        out.oracle_error = out.oracle_error.max((sb.0 - vec2(ex[0], ex[1])).amax());
    }
    out.jump = interface_jumps(&coupled, &cs)?.fluid_fluid;
    Ok(out)
}

/// Steady low-Reynolds flow past a fixed cylinder wrapped in a fluid patch;
/// level `m` uses an (8m)² background, 16m interface segments and 2m patch
/// layers. Returns the L2 norm of the fluid–solid velocity jump per level.
pub fn weak_noslip_study(levels: &[usize]) -> Result<RateStudy> {
    let center = vec2(0.47, 0.52);
    let mut study = RateStudy {
        h: Vec::new(),
        errors: Vec::new(),
    };
    for &m in levels {
        let n_bg = 8 * m;
        let bg = generate_structured_rect(vec2(0.0, 0.0), vec2(1.0, 1.0), n_bg, n_bg)?;
        let solid = generate_disc_mesh(center, 0.15, 16 * m)?;
        let patch = generate_annulus_patch(center, 0.15, 0.3, 16 * m, 2 * m, 1.0)?;
        let all: Vec<usize> = (0..solid.num_nodes()).collect();
        let params = SolidParams {
            rho: 1.0,
            young: 100.0,
            poisson: 0.3,
            rho_inf: 1.0,
        };
        let mut def =
            ProblemDefinition::new(Mode::Hybrid, bg.clone(), FluidParams::steady(1.0, 1.0));
        def.solid = Some((solid, params));
        def.patch = Some(patch);
        def.solid_bcs = (0..2)
            .map(|c| SolidDirichlet {
                nodes: all.clone(),
                component: c,
                value: Field::constant(0.0),
            })
            .collect();
        let mut inflow: Vec<usize> = Vec::new();
        for tag in ["left", "top", "bottom"] {
            inflow.extend_from_slice(bg.node_set(tag)?);
        }
        inflow.sort_unstable();
        inflow.dedup();
        def.fluid_bcs = (0..2)
            .map(|c| FluidDirichlet {
                mesh: FluidMesh::Background,
                nodes: inflow.clone(),
                component: c,
                value: Field::constant(if c == 0 { 1.0 } else { 0.0 }),
            })
            .collect();
        let problem = Problem::new(def)?;
        let state = problem.step(&problem.initial_state()?)?.0;
        study.h.push(1.0 / n_bg as f64);
        study
            .errors
            .push(interface_jumps(&problem, &state)?.fluid_solid);
    }
    Ok(study)
}

fn coupling_suite() -> Result<Vec<Check>> {
    let c = couette_with_patch()?;
    let noslip = weak_noslip_study(&[1, 2, 4])?;
    Ok(vec![
        Check::below("couette coupled vs single mesh", c.max_difference, 1e-8),
        Check::below("couette single mesh vs exact", c.oracle_error, 1e-8),
        Check::below("couette interface jump", c.jump, 1e-8),
        Check::at_least("weak no-slip jump rate", noslip.min_rate(), 1.4),
    ])
}

// monolithic

fn perturbed_start(
    problem: &Problem,
) -> Result<(
    crate::driver::StepContext,
    crate::driver::Iterate,
    crate::problem::Geometry,
)> {
    let mut prev = problem.initial_state()?;
    let wave = |k: usize, a: f64| a * ((k as f64) * 0.37).sin();
    for (k, v) in prev.bg.up.iter_mut().enumerate() {
        *v += wave(k, 0.3);
    }
    if let Some(p) = prev.patch.as_mut() {
        for (k, v) in p.up.iter_mut().enumerate() {
            *v += wave(k + 7, 0.3);
        }
    }
    if let Some(s) = prev.solid.as_mut() {
        for k in 0..s.d.len() {
            if !problem.solid_fixed[k] {
                s.v[k] = wave(k + 3, 0.2);
                s.a[k] = wave(k + 5, 0.5);
            }
        }
    }
    let (ctx, mut it, geom, _) = problem.prepare_step(&prev)?;
    for (k, v) in it.bg.iter_mut().enumerate() {
        *v += wave(k + 11, 0.1);
    }
    for (k, v) in it.patch.iter_mut().enumerate() {
        *v += wave(k + 13, 0.1);
    }
    Ok((ctx, it, geom))
}

/// Finite-difference check of the assembled tangent on the small disc-cavity
/// fixture in `mode`. Returns the unknown count and the relative mismatch.
pub fn jacobian_check(mode: Mode) -> Result<(usize, f64)> {
    let problem = embedded_disc_cavity(mode, &DiscCavity::default())?;
    let (ctx, it, geom) = perturbed_start(&problem)?;
    let n = DofMap::build(&problem, &geom.cut.active_nodes).len();
    Ok((n, problem.jacobian_mismatch(&ctx, &it, &geom, 1e-6)?))
}

/// Cycle statistics of a disc whose patch slides across the background grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleCheck {
    pub cycles: Vec<usize>,
    /// Steps whose active set differed from the predicted one.
    pub changed_steps: usize,
    /// Steps with more than one cycle although the prediction was right.
    pub spurious_cycles: usize,
    /// A cap of one cycle is reported as a cycle-limit error.
    pub cap_enforced: bool,
    /// Final background velocities of two identical runs agree bitwise.
    pub deterministic: bool,
}

fn sliding_disc(max_cycles: usize) -> Result<Problem> {
    let o = DiscCavity {
        n_background: 12,
        dt: 0.05,
        young: 200.0,
        ..DiscCavity::default()
    };
    let bg = generate_structured_rect(
        vec2(0.0, 0.0),
        vec2(1.0, 1.0),
        o.n_background,
        o.n_background,
    )?;
    let solid = generate_disc_mesh(o.center, o.radius, o.n_circum)?;
    let center = solid.node_set("center")?.to_vec();
    let params = SolidParams {
        rho: 1.0,
        young: o.young,
        poisson: 0.3,
        rho_inf: 1.0,
    };
    let mut def = ProblemDefinition::new(
        Mode::Hybrid,
        bg.clone(),
        FluidParams::new(1.0, o.mu, 1.0, o.dt),
    );
    def.fluid_bcs = cavity_bcs(&bg, FluidMesh::Background, 0.0);
    def.patch = Some(generate_annulus_patch(
        o.center,
        o.radius,
        o.patch_radius,
        o.n_circum,
        o.n_radial,
        1.0,
    )?);
    def.solid = Some((solid, params));
    // only the centre is driven, so the predictor extrapolates the rest
    def.solid_bcs = vec![
        SolidDirichlet {
            nodes: center.clone(),
            component: 0,
            value: Field::from_fn(|_, t| 0.15 * (2.0 * PI * t / 0.8).sin()),
        },
        SolidDirichlet {
            nodes: center,
            component: 1,
            value: Field::constant(0.0),
        },
    ];
    def.newton.max_cycles = max_cycles;
    Problem::new(def)
}

fn slide(problem: &Problem, steps: usize) -> Result<(Vec<usize>, usize, usize, FieldState)> {
    let mut state = problem.initial_state()?;
    let (mut cycles, mut changed, mut spurious) = (Vec::new(), 0, 0);
    for _ in 0..steps {
        let (ctx, it, geom, _) = problem.prepare_step(&state)?;
        let predicted = geom.cut.active_nodes.clone();
        let (next, report) = problem.solve_step(&state, ctx, it, geom)?;
        if next.active != predicted {
            changed += 1;
        } else if report.cycles > 1 {
            spurious += 1;
        }
        cycles.push(report.cycles);
        state = next;
    }
    Ok((cycles, changed, spurious, state))
}

pub fn cycle_check(steps: usize) -> Result<CycleCheck> {
    let (cycles, changed_steps, spurious_cycles, a) = slide(&sliding_disc(5)?, steps)?;
    let (_, _, _, b) = slide(&sliding_disc(5)?, steps)?;
    let deterministic =
        a.bg.up
            .iter()
            .zip(&b.bg.up)
            .all(|(x, y)| x.to_bits() == y.to_bits());
    let cap_enforced = matches!(
        slide(&sliding_disc(1)?, steps),
        Err(FsiError::CycleLimit(1))
    );
    Ok(CycleCheck {
        cycles,
        changed_steps,
        spurious_cycles,
        cap_enforced,
        deterministic,
    })
}

fn monolithic_suite() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for mode in [Mode::Hybrid, Mode::FixedGrid] {
        let (n, err) = jacobian_check(mode)?;
        let label = if mode == Mode::Hybrid {
            "hybrid"
        } else {
            "fixed grid"
        };
        checks.push(Check::below(
            &format!("{label} fixture unknowns"),
            n as f64,
            300.5,
        ));
        checks.push(Check::below(
            &format!("{label} tangent vs differences"),
            err,
            1e-4,
        ));
    }
    let c = cycle_check(16)?;
    let max = c.cycles.iter().copied().max().unwrap_or(0);
    checks.push(Check::above(
        "steps with a changed active set",
        c.changed_steps as f64,
        0.5,
    ));
    checks.push(Check::below(
        "extra cycles without a space change",
        c.spurious_cycles as f64,
        0.5,
    ));
    checks.push(Check::below("cycles per step", max as f64, 5.5));
    checks.push(Check::above(
        "cycle cap enforced",
        f64::from(u8::from(c.cap_enforced)),
        0.5,
    ));
    checks.push(Check::above(
        "rerun bitwise identical",
        f64::from(u8::from(c.deterministic)),
        0.5,
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!(matches!("nope".parse::<Suite>(), Err(FsiError::Usage(_))));
    }

    #[test]
    fn rates_of_exact_powers() {
        let s = RateStudy {
            h: vec![0.4, 0.2, 0.1],
            errors: vec![0.16, 0.04, 0.01],
        };
        for r in s.rates() {
            assert!((r - 2.0).abs() < 1e-12);
        }
        let flat = RateStudy {
            h: vec![0.2, 0.1],
            errors: vec![1.0, 1.0],
        };
        assert_eq!(flat.min_rate(), 0.0);
    }

    #[test]
    fn manufactured_force_balances_exact_fields() {
        // central differences of the exact fields reproduce the forcing
        let (nu, rho) = (0.1, 1.0);
        let x = vec2(0.31, 0.72);
        let e = 1e-4;
        let at = |dx: f64, dy: f64| mms_exact(x + vec2(dx, dy));
        let u = at(0.0, 0.0);
        let d = |c: usize, dx: f64, dy: f64| (at(dx, dy)[c] - at(-dx, -dy)[c]) / (2.0 * (dx + dy));
        let lap = |c: usize| {
            (at(e, 0.0)[c] + at(-e, 0.0)[c] + at(0.0, e)[c] + at(0.0, -e)[c] - 4.0 * u[c]) / (e * e)
        };
        let f = mms_force(x, nu, rho);
        for c in 0..2 {
            let conv = u[0] * d(c, e, 0.0) + u[1] * d(c, 0.0, e);
            let grad_p = if c == 0 { d(2, e, 0.0) } else { d(2, 0.0, e) };
            let expect = conv - nu * lap(c) + grad_p / rho;
            assert!((expect - f[c]).abs() < 1e-5, "{c}: {expect} vs {}", f[c]);
        }
        assert!((d(0, e, 0.0) + d(1, 0.0, e)).abs() < 1e-8);
    }

    #[test]
    fn small_area_sweep_is_clean() {
        let s = area_sweep(20, 10, 1).unwrap();
        assert_eq!(s.failures, 0);
        assert!(s.max_area_error < 1e-10 && s.max_length_error < 1e-10);
    }
}
