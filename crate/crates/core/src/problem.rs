//! Problem setup for the three discretization modes, degree-of-freedom
//! bookkeeping, time-level field state, per-iterate geometry and field
//! transcription between changing background function spaces.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ale::AleSolver;
use crate::bc::{FluidDirichlet, FluidMesh, SolidDirichlet};
use crate::cutcell::{classify_and_cut, CutOptions, CutState};
use crate::error::{FsiError, Result};
use crate::fluid::FluidParams;
use crate::geometry::{vec2, Vec2};
use crate::mesh::QuadMesh;
use crate::nitsche::NitscheParams;
use crate::solid::{assemble_mass, GAlpha, SolidParams, SolidState};
use crate::sparse::CscMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Background mesh cut by an embedded, moving fluid patch fitted to the solid.
    Hybrid,
    /// Background mesh cut directly by the solid boundary.
    FixedGrid,
    /// One uncut fluid mesh.
    SingleMesh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonParams {
    pub rtol: f64,
    pub atol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub max_cycles: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams {
            rtol: 1e-8,
            atol: 1e-10,
            max_iterations: 25,
            max_halvings: 4,
            max_cycles: 5,
        }
    }
}

pub type BodyForce = Arc<dyn Fn(Vec2, f64) -> Vec2 + Send + Sync>;

/// Everything needed to build a [`Problem`].
#[derive(Clone)]
pub struct ProblemDefinition {
    pub mode: Mode,
    pub background: QuadMesh,
    pub patch: Option<QuadMesh>,
    pub solid: Option<(QuadMesh, SolidParams)>,
    pub fluid: FluidParams,
    pub nitsche: NitscheParams,
    pub newton: NewtonParams,
    pub cut: CutOptions,
    pub fluid_bcs: Vec<FluidDirichlet>,
    pub solid_bcs: Vec<SolidDirichlet>,
    pub body_force: Option<BodyForce>,
    /// Re-assemble the previous-step interface force instead of using the archived one.
    pub recompute_previous_force: bool,
    pub t0: f64,
}

impl ProblemDefinition {
    pub fn new(mode: Mode, background: QuadMesh, fluid: FluidParams) -> Self {
        ProblemDefinition {
            mode,
            background,
            patch: None,
            solid: None,
            fluid,
            nitsche: NitscheParams::default(),
            newton: NewtonParams::default(),
            cut: CutOptions::default(),
            fluid_bcs: Vec::new(),
            solid_bcs: Vec::new(),
            body_force: None,
            recompute_previous_force: false,
            t0: 0.0,
        }
    }
}

/// Cutter edge on the patch's outer boundary.
#[derive(Debug, Clone, Copy)]
pub struct CutterEdge {
    pub facet: usize,
    /// True when the cutter runs against the facet's node order.
    pub reversed: bool,
}

pub struct PatchSetup {
    pub mesh: QuadMesh,
    /// Open CCW loop of patch node ids along the "ff" boundary.
    pub ff_loop: Vec<usize>,
    pub ff_edges: Vec<CutterEdge>,
    /// Boundary facets on the fluid–solid interface.
    pub fsi_facets: Vec<usize>,
    /// Boundary facets on fixed no-slip walls, coupled weakly like a resting solid.
    pub wall_facets: Vec<usize>,
    /// Solid node coinciding with each patch interface node.
    pub solid_match: BTreeMap<usize, usize>,
    pub ale: Option<AleSolver>,
}

pub struct SolidSetup {
    pub mesh: QuadMesh,
    pub params: SolidParams,
    pub lambda: f64,
    pub mu: f64,
    pub galpha: GAlpha,
    pub mass: CscMatrix,
    /// Open CCW loop over the whole solid boundary (fixed-grid cutter).
    pub boundary_loop: Vec<usize>,
}

pub struct Problem {
    pub mode: Mode,
    pub background: QuadMesh,
    pub patch: Option<PatchSetup>,
    pub solid: Option<SolidSetup>,
    pub fluid: FluidParams,
    pub nitsche: NitscheParams,
    pub newton: NewtonParams,
    pub cut: CutOptions,
    pub fluid_bcs: Vec<FluidDirichlet>,
    pub solid_bcs: Vec<SolidDirichlet>,
    pub body_force: Option<BodyForce>,
    pub recompute_previous_force: bool,
    pub t0: f64,
    /// Strongly constrained dof flags, 3 per fluid node and 2 per solid node.
    pub bg_fixed: Vec<bool>,
    pub patch_fixed: Vec<bool>,
    pub solid_fixed: Vec<bool>,
}

fn open_loop(mut ids: Vec<usize>) -> Vec<usize> {
    ids.pop();
    ids
}

impl Problem {
    pub fn new(def: ProblemDefinition) -> Result<Problem> {
        match def.mode {
            Mode::Hybrid if def.patch.is_none() => {
                return Err(FsiError::Config("hybrid mode needs a fluid patch".into()))
            }
            Mode::FixedGrid if def.solid.is_none() || def.patch.is_some() => {
                return Err(FsiError::Config(
                    "fixed-grid mode needs a solid and no fluid patch".into(),
                ))
            }
            Mode::SingleMesh if def.patch.is_some() || def.solid.is_some() => {
                return Err(FsiError::Config(
                    "single-mesh mode takes neither patch nor solid".into(),
                ))
            }
            _ => {}
        }
        if !(def.fluid.rho > 0.0 && def.fluid.mu > 0.0) {
            return Err(FsiError::Config(
                "fluid density and viscosity must be positive".into(),
            ));
        }
        if def.fluid.transient
            && !(def.fluid.dt > 0.0 && def.fluid.theta > 0.0 && def.fluid.theta <= 1.0)
        {
            return Err(FsiError::Config(format!(
                "need dt > 0 and theta in (0, 1], got dt={}, theta={}",
                def.fluid.dt, def.fluid.theta
            )));
        }

        let solid = match def.solid {
            Some((mesh, params)) => {
                let (lambda, mu) = params.lame()?;
                let galpha = params.galpha()?;
                let mass = assemble_mass(&mesh, params.rho)?;
                let boundary_loop = open_loop(mesh.boundary_loop("solid boundary", |_| true)?);
                Some(SolidSetup {
                    mesh,
                    params,
                    lambda,
                    mu,
                    galpha,
                    mass,
                    boundary_loop,
                })
            }
            None => None,
        };

        let patch = match def.patch {
            Some(mesh) => Some(build_patch(mesh, solid.as_ref())?),
            None => None,
        };

        let mut bg_fixed = vec![false; 3 * def.background.num_nodes()];
        let mut patch_fixed = vec![false; patch.as_ref().map_or(0, |p| 3 * p.mesh.num_nodes())];
        for bc in &def.fluid_bcs {
            if bc.component > 2 {
                return Err(FsiError::Config(format!(
                    "fluid component {} out of range",
                    bc.component
                )));
            }
            let target = match bc.mesh {
                FluidMesh::Background => &mut bg_fixed,
                FluidMesh::Patch => &mut patch_fixed,
            };
            for &n in &bc.nodes {
                *target.get_mut(3 * n + bc.component).ok_or_else(|| {
                    FsiError::Config(format!("fluid condition references missing node {n}"))
                })? = true;
            }
        }
        let mut solid_fixed = vec![false; solid.as_ref().map_or(0, |s| 2 * s.mesh.num_nodes())];
        for bc in &def.solid_bcs {
            if bc.component > 1 {
                return Err(FsiError::Config(format!(
                    "solid component {} out of range",
                    bc.component
                )));
            }
            for &n in &bc.nodes {
                *solid_fixed.get_mut(2 * n + bc.component).ok_or_else(|| {
                    FsiError::Config(format!("solid condition references missing node {n}"))
                })? = true;
            }
        }

        Ok(Problem {
            mode: def.mode,
            background: def.background,
            patch,
            solid,
            fluid: def.fluid,
            nitsche: def.nitsche,
            newton: def.newton,
            cut: def.cut,
            fluid_bcs: def.fluid_bcs,
            solid_bcs: def.solid_bcs,
            body_force: def.body_force,
            recompute_previous_force: def.recompute_previous_force,
            t0: def.t0,
            bg_fixed,
            patch_fixed,
            solid_fixed,
        })
    }

    pub fn dt(&self) -> f64 {
        self.fluid.dt
    }

    /// Applies fluid Dirichlet values at time `t`.
    pub fn apply_fluid_bcs(
        &self,
        bg: &mut [f64],
        patch: &mut [f64],
        patch_coords: Option<&[Vec2]>,
        t: f64,
    ) {
        for bc in &self.fluid_bcs {
            let (vals, coords): (&mut [f64], &[Vec2]) = match bc.mesh {
                FluidMesh::Background => (&mut *bg, &self.background.nodes),
                FluidMesh::Patch => match (patch_coords, &self.patch) {
                    (Some(c), _) => (&mut *patch, c),
                    (None, Some(p)) => (&mut *patch, &p.mesh.nodes),
                    (None, None) => continue,
                },
            };
            for &n in &bc.nodes {
                vals[3 * n + bc.component] = bc.value.0.value(coords[n], t);
            }
        }
    }

    /// Prescribed solid displacement, velocity and acceleration at time `t`.
    pub fn apply_solid_bcs(&self, d: &mut [f64], v: &mut [f64], a: &mut [f64], t: f64) {
        let Some(s) = &self.solid else { return };
        for bc in &self.solid_bcs {
            for &n in &bc.nodes {
                let x = s.mesh.nodes[n];
                let k = 2 * n + bc.component;
                d[k] = bc.value.0.value(x, t);
                v[k] = bc.value.0.rate(x, t);
                a[k] = bc.value.0.accel(x, t);
            }
        }
    }
}

fn build_patch(mesh: QuadMesh, solid: Option<&SolidSetup>) -> Result<PatchSetup> {
    let ff_loop = open_loop(mesh.boundary_polyline("ff")?);
    let mut by_nodes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, f) in mesh.boundary_facets.iter().enumerate() {
        by_nodes.insert((f.nodes[0].min(f.nodes[1]), f.nodes[0].max(f.nodes[1])), i);
    }
    let n = ff_loop.len();
    let mut ff_edges = Vec::with_capacity(n);
    for j in 0..n {
        let (a, b) = (ff_loop[j], ff_loop[(j + 1) % n]);
        let facet = *by_nodes.get(&(a.min(b), a.max(b))).ok_or_else(|| {
            FsiError::Geometry(format!("patch boundary edge ({a}, {b}) has no facet"))
        })?;
        ff_edges.push(CutterEdge {
            facet,
            reversed: mesh.boundary_facets[facet].nodes[0] != a,
        });
    }
    let fsi_facets: Vec<usize> = mesh.facets_with_tag("fsi").map(|(i, _)| i).collect();
    let wall_facets: Vec<usize> = mesh.facets_with_tag("wall").map(|(i, _)| i).collect();
    let mut solid_match = BTreeMap::new();
    let mut ale = None;
    if !fsi_facets.is_empty() {
        let s = solid.ok_or_else(|| {
            FsiError::Config("patch has an 'fsi' boundary but there is no solid".into())
        })?;
        let iface = mesh.node_set("fsi")?.to_vec();
        let h = crate::cutcell::mesh_length_scale(&mesh)
            .min(crate::cutcell::mesh_length_scale(&s.mesh));
        let solid_boundary: Vec<usize> = s.boundary_loop.clone();
        for &pn in &iface {
            let p = mesh.nodes[pn];
            let m = solid_boundary
                .iter()
                .copied()
                .filter(|&sn| (s.mesh.nodes[sn] - p).norm() <= 1e-8 * h)
                .min()
                .ok_or_else(|| {
                    FsiError::Config(format!(
                        "patch interface node {pn} at ({}, {}) has no matching solid node",
                        p.x, p.y
                    ))
                })?;
            solid_match.insert(pn, m);
        }
        let mut constrained = iface;
        if let Ok(w) = mesh.node_set("wall") {
            constrained.extend_from_slice(w);
        }
        constrained.sort_unstable();
        constrained.dedup();
        ale = Some(AleSolver::new(&mesh, &constrained, s.params.poisson)?);
    }
    Ok(PatchSetup {
        mesh,
        ff_loop,
        ff_edges,
        fsi_facets,
        wall_facets,
        solid_match,
        ale,
    })
}

/// Global unknown numbering: background fluid, then patch fluid, then solid.
/// Constrained and inactive dofs map to `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub bg: Vec<Option<usize>>,
    pub patch: Vec<Option<usize>>,
    pub solid: Vec<Option<usize>>,
    pub n_bg: usize,
    pub n_patch: usize,
    pub n_solid: usize,
}

impl DofMap {
    pub fn build(problem: &Problem, active_nodes: &[bool]) -> DofMap {
        let mut next = 0;
        let mut number = |fixed: &[bool],
                          stride: usize,
                          active: Option<&[bool]>|
         -> (Vec<Option<usize>>, usize) {
            let start = next;
            let map = fixed
                .iter()
                .enumerate()
                .map(|(k, &f)| {
                    if f || active.is_some_and(|a| !a[k / stride]) {
                        None
                    } else {
                        next += 1;
                        Some(next - 1)
                    }
                })
                .collect();
            (map, next - start)
        };
        let (bg, n_bg) = number(&problem.bg_fixed, 3, Some(active_nodes));
        let (patch, n_patch) = number(&problem.patch_fixed, 3, None);
        let (solid, n_solid) = number(&problem.solid_fixed, 2, None);
        DofMap {
            bg,
            patch,
            solid,
            n_bg,
            n_patch,
            n_solid,
        }
    }

    pub fn len(&self) -> usize {
        self.n_bg + self.n_patch + self.n_solid
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index ranges of the three blocks.
    pub fn blocks(&self) -> [std::ops::Range<usize>; 3] {
        let a = self.n_bg;
        let b = a + self.n_patch;
        [0..a, a..b, b..b + self.n_solid]
    }
}

/// Nodal values (u1, u2, p per node) and their time derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidField {
    pub up: Vec<f64>,
    pub acc: Vec<f64>,
}

impl FluidField {
    pub fn at_rest(n_nodes: usize) -> Self {
        FluidField {
            up: vec![0.0; 3 * n_nodes],
            acc: vec![0.0; 3 * n_nodes],
        }
    }
}

/// Complete solution at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub step: usize,
    pub time: f64,
    pub bg: FluidField,
    pub patch: Option<FluidField>,
    pub solid: Option<SolidState>,
    /// Patch grid displacement and velocity, 2 per node.
    pub grid_disp: Vec<f64>,
    pub grid_vel: Vec<f64>,
    /// Active background nodes of this level's cut configuration.
    pub active: Vec<bool>,
    /// Solid-side coupling residual C^{sf2} on all solid dofs (2 per node).
    pub interface_force: Vec<f64>,
}

/// Geometry of one iterate: patch placement and background cut.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub cut: CutState,
    pub patch_coords: Vec<Vec2>,
    pub grid_disp: Vec<f64>,
    pub grid_vel: Vec<Vec2>,
    pub solid_coords: Vec<Vec2>,
}

impl Problem {
    /// Patch placement from the solid displacement (hybrid) and the resulting
    /// background cut. `prev_grid` is the previous level's grid displacement.
    pub fn geometry(&self, solid_d: &[f64], prev_grid: &[f64], dt: f64) -> Result<Geometry> {
        let solid_coords: Vec<Vec2> = match &self.solid {
            Some(s) => s
                .mesh
                .nodes
                .iter()
                .enumerate()
                .map(|(i, x)| x + vec2(solid_d[2 * i], solid_d[2 * i + 1]))
                .collect(),
            None => Vec::new(),
        };
        match self.mode {
            Mode::SingleMesh => Ok(Geometry {
                cut: CutState::uncut(&self.background),
                patch_coords: Vec::new(),
                grid_disp: Vec::new(),
                grid_vel: Vec::new(),
                solid_coords,
            }),
            Mode::FixedGrid => {
                let s = self.solid.as_ref().expect("fixed-grid problem has a solid");
                let cutter: Vec<Vec2> = s.boundary_loop.iter().map(|&i| solid_coords[i]).collect();
                let cut = classify_and_cut(&self.background, &cutter, None, &self.cut)?;
                Ok(Geometry {
                    cut,
                    patch_coords: Vec::new(),
                    grid_disp: Vec::new(),
                    grid_vel: Vec::new(),
                    solid_coords,
                })
            }
            Mode::Hybrid => {
                let p = self.patch.as_ref().expect("hybrid problem has a patch");
                let grid_disp = match &p.ale {
                    Some(ale) => {
                        let pres: Vec<Vec2> = ale
                            .interface_nodes
                            .iter()
                            .map(|pn| match p.solid_match.get(pn) {
                                Some(&m) => vec2(solid_d[2 * m], solid_d[2 * m + 1]),
                                None => Vec2::zeros(),
                            })
                            .collect();
                        ale.solve(&pres)?
                    }
                    None => vec![0.0; 2 * p.mesh.num_nodes()],
                };
                let patch_coords: Vec<Vec2> = p
                    .mesh
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x + vec2(grid_disp[2 * i], grid_disp[2 * i + 1]))
                    .collect();
                let grid_vel: Vec<Vec2> = (0..p.mesh.num_nodes())
                    .map(|i| {
                        let old = if prev_grid.is_empty() {
                            Vec2::zeros()
                        } else {
                            vec2(prev_grid[2 * i], prev_grid[2 * i + 1])
                        };
                        (vec2(grid_disp[2 * i], grid_disp[2 * i + 1]) - old) / dt
                    })
                    .collect();
                let cutter: Vec<Vec2> = p.ff_loop.iter().map(|&i| patch_coords[i]).collect();
                let cut = classify_and_cut(&self.background, &cutter, None, &self.cut)?;
                Ok(Geometry {
                    cut,
                    patch_coords,
                    grid_disp,
                    grid_vel,
                    solid_coords,
                })
            }
        }
    }
}

/// Carries nodal values (`stride` per node) from one active set to another:
/// nodes active before keep their values; newly active nodes copy the
/// nearest previously active node (lowest id on ties).
pub fn transcribe(
    values: &[f64],
    stride: usize,
    nodes: &[Vec2],
    old_active: &[bool],
    new_active: &[bool],
) -> Vec<f64> {
    let mut out = values.to_vec();
    let donors: Vec<usize> = (0..nodes.len()).filter(|&i| old_active[i]).collect();
    if donors.is_empty() {
        return out;
    }
    for i in 0..nodes.len() {
        if new_active[i] && !old_active[i] {
            let mut best = donors[0];
            let mut best_d = (nodes[best] - nodes[i]).norm_squared();
            for &j in &donors[1..] {
                let d = (nodes[j] - nodes[i]).norm_squared();
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            out[stride * i..stride * (i + 1)]
                .copy_from_slice(&values[stride * best..stride * (best + 1)]);
        }
    }
    out
}
