//! Declarative scenario configuration (TOML) and the built-in scenarios.
//!
//! A config file is plain TOML. Scalars come first, then sections:
//!
//! ```toml
//! name = "moving_cylinder:desk"
//! mode = "hybrid"                      # hybrid | fixed_grid | single_mesh
//! notes = ["free text kept in the run manifest"]
//! recompute_previous_force = false
//!
//! [time]                               # t0, t_end, dt, theta, rho_inf
//! [fluid]                              # rho, mu
//! [background]                         # kind = "rect", origin, extent, nx, ny
//! [patch]                              # kind = "annulus" | "flag" (optional)
//! [solid]                              # rho, young, poisson, mesh = {kind = "disc" | "rect" | "flag_tail", ...}
//! [[fluid_bc]]                         # mesh, tags and/or nodes, component, law
//! [[solid_bc]]                         # node_set ("*" = all nodes), component, law
//! [stabilization]                      # c_u, c_sigma, gamma_c, gamma_u, gamma_p, gamma, c_trace, adjoint_sign
//! [newton]                             # rtol, atol, max_iterations, max_halvings, max_cycles
//! [cut]                                # volume_order, segment_points
//! [output]                             # snapshot_every, checkpoint_every, probe, [[output.line_cuts]]
//! ```
//!
//! Laws are inline tables tagged by `kind`: `{kind = "constant", value = 0.0}`,
//! `{kind = "cosine_ramp", amplitude, omega, t_end}` for amplitude·½(1 − cos ωt)
//! frozen after `t_end`, and `{kind = "sine", offset, amplitude, omega, t0}`.
//! Later conditions override earlier ones on shared dofs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bc::{Field, FluidDirichlet, FluidMesh, SolidDirichlet, TimeLaw};
use crate::cutcell::CutOptions;
use crate::error::{FsiError, Result};
use crate::fluid::FluidParams;
use crate::geometry::{vec2, Vec2};
use crate::mesh::{
    generate_annulus_patch, generate_disc_mesh, generate_flag_patch, generate_structured_rect,
    FlagLayout, QuadMesh,
};
use crate::nitsche::NitscheParams;
use crate::problem::{Mode, NewtonParams, Problem, ProblemDefinition};
use crate::solid::SolidParams;

pub const BUILTINS: [&str; 3] = ["compressing_ball", "moving_cylinder", "vibrating_flag"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Rect {
        origin: Vec2,
        extent: Vec2,
        nx: usize,
        ny: usize,
    },
    Disc {
        center: Vec2,
        radius: f64,
        n_circum: usize,
    },
    Annulus {
        center: Vec2,
        r_inner: f64,
        r_outer: f64,
        n_circum: usize,
        n_radial: usize,
        grading: f64,
    },
    /// O-grid around a head-and-tail body.
    Flag(FlagLayout),
    /// The flexible tail of a [`MeshSpec::Flag`] layout.
    FlagTail(FlagLayout),
}

impl MeshSpec {
    pub fn build(&self) -> Result<QuadMesh> {
        match self {
            MeshSpec::Rect {
                origin,
                extent,
                nx,
                ny,
            } => generate_structured_rect(*origin, *extent, *nx, *ny),
            MeshSpec::Disc {
                center,
                radius,
                n_circum,
            } => generate_disc_mesh(*center, *radius, *n_circum),
            MeshSpec::Annulus {
                center,
                r_inner,
                r_outer,
                n_circum,
                n_radial,
                grading,
            } => {
                generate_annulus_patch(*center, *r_inner, *r_outer, *n_circum, *n_radial, *grading)
            }
            MeshSpec::Flag(l) => generate_flag_patch(l),
            MeshSpec::FlagTail(l) => l.tail_mesh(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSection {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub theta: f64,
    /// Spectral radius at infinity of the solid's generalized-α scheme.
    pub rho_inf: f64,
}

impl TimeSection {
    /// Number of steps from `t0` to `t_end`, rounding to the nearest whole step.
    pub fn num_steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt).round().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidSection {
    pub rho: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolidSection {
    pub rho: f64,
    pub young: f64,
    pub poisson: f64,
    pub mesh: MeshSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidBcSpec {
    pub mesh: FluidMesh,
    /// Boundary tags whose nodes are constrained.
    #[serde(default)]
    pub tags: Vec<String>,
    /// Explicit node ids, e.g. a pressure pin.
    #[serde(default)]
    pub nodes: Vec<usize>,
    pub component: usize,
    pub law: TimeLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolidBcSpec {
    pub node_set: String,
    pub component: usize,
    pub law: TimeLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stabilization {
    pub c_u: f64,
    pub c_sigma: f64,
    pub gamma_c: f64,
    pub gamma_u: f64,
    pub gamma_p: f64,
    /// Nitsche penalty factor.
    pub gamma: f64,
    pub c_trace: f64,
    pub adjoint_sign: f64,
}

impl Default for Stabilization {
    fn default() -> Self {
        let f = FluidParams::new(1.0, 1.0, 1.0, 1.0);
        let n = NitscheParams::default();
        Stabilization {
            c_u: f.c_u,
            c_sigma: f.c_sigma,
            gamma_c: f.gamma_c,
            gamma_u: f.gamma_u,
            gamma_p: f.gamma_p,
            gamma: n.gamma,
            c_trace: n.c_trace,
            adjoint_sign: n.adjoint_sign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCutSpec {
    pub name: String,
    pub p0: Vec2,
    pub p1: Vec2,
    pub n_samples: usize,
    /// Sampling times; the step whose time is nearest each entry is sampled.
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputSpec {
    /// Field snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Reference position of the solid probe node (nearest node is used).
    #[serde(default)]
    pub probe: Option<Vec2>,
    #[serde(default)]
    pub line_cuts: Vec<LineCutSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub recompute_previous_force: bool,
    pub time: TimeSection,
    pub fluid: FluidSection,
    pub background: MeshSpec,
    #[serde(default)]
    pub patch: Option<MeshSpec>,
    #[serde(default)]
    pub solid: Option<SolidSection>,
    #[serde(default)]
    pub fluid_bc: Vec<FluidBcSpec>,
    #[serde(default)]
    pub solid_bc: Vec<SolidBcSpec>,
    #[serde(default)]
    pub stabilization: Stabilization,
    #[serde(default)]
    pub newton: NewtonParams,
    #[serde(default)]
    pub cut: CutOptions,
    #[serde(default)]
    pub output: OutputSpec,
}

fn resolve_tags(mesh: &QuadMesh, tags: &[String], what: &str) -> Result<Vec<usize>> {
    let mut nodes = Vec::new();
    for tag in tags {
        let set = mesh
            .node_set(tag)
            .map_err(|_| FsiError::Config(format!("{what} has no node set \"{tag}\"")))?;
        nodes.extend_from_slice(set);
    }
    Ok(nodes)
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FsiError::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FsiError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn fluid_params(&self) -> FluidParams {
        let s = &self.stabilization;
        FluidParams {
            c_u: s.c_u,
            c_sigma: s.c_sigma,
            gamma_c: s.gamma_c,
            gamma_u: s.gamma_u,
            gamma_p: s.gamma_p,
            ..FluidParams::new(self.fluid.rho, self.fluid.mu, self.time.theta, self.time.dt)
        }
    }

    pub fn solid_params(&self) -> Option<SolidParams> {
        self.solid.as_ref().map(|s| SolidParams {
            rho: s.rho,
            young: s.young,
            poisson: s.poisson,
            rho_inf: self.time.rho_inf,
        })
    }

    /// Builds meshes, resolves tags and returns the ready-to-run problem.
    pub fn build(&self) -> Result<Problem> {
        if !(self.time.dt > 0.0 && self.time.t_end >= self.time.t0) {
            return Err(FsiError::Config(format!(
                "bad time window [{}, {}] with dt {}",
                self.time.t0, self.time.t_end, self.time.dt
            )));
        }
        let background = match &self.background {
            spec @ MeshSpec::Rect { .. } => spec.build()?,
            _ => return Err(FsiError::Config("background mesh must be a rect".into())),
        };
        let patch = match (self.mode, &self.patch) {
            (Mode::Hybrid, Some(spec)) => Some(spec.build()?),
            _ => None,
        };
        let solid = match (&self.solid, self.mode) {
            (Some(_), Mode::SingleMesh) | (None, _) => None,
            (Some(s), _) => Some((
                s.mesh.build()?,
                self.solid_params().expect("solid section present"),
            )),
        };

        let mut fluid_bcs = Vec::new();
        for bc in &self.fluid_bc {
            let (mesh, what) = match bc.mesh {
                FluidMesh::Background => (&background, "background mesh"),
                FluidMesh::Patch => match &patch {
                    Some(p) => (p, "patch mesh"),
                    None => continue,
                },
            };
            let mut nodes = resolve_tags(mesh, &bc.tags, what)?;
            nodes.extend_from_slice(&bc.nodes);
            nodes.sort_unstable();
            nodes.dedup();
            fluid_bcs.push(FluidDirichlet {
                mesh: bc.mesh,
                nodes,
                component: bc.component,
                value: Field::law(bc.law),
            });
        }
        let mut solid_bcs = Vec::new();
        if let Some((mesh, _)) = &solid {
            for bc in &self.solid_bc {
                let nodes = if bc.node_set == "*" {
                    (0..mesh.num_nodes()).collect()
                } else {
                    resolve_tags(mesh, std::slice::from_ref(&bc.node_set), "solid mesh")?
                };
                solid_bcs.push(SolidDirichlet {
                    nodes,
                    component: bc.component,
                    value: Field::law(bc.law),
                });
            }
        }

        let s = &self.stabilization;
        let mut def = ProblemDefinition::new(self.mode, background, self.fluid_params());
        def.patch = patch;
        def.solid = solid;
        def.nitsche = NitscheParams {
            gamma: s.gamma,
            c_trace: s.c_trace,
            adjoint_sign: s.adjoint_sign,
        };
        def.newton = self.newton;
        def.cut = self.cut;
        def.fluid_bcs = fluid_bcs;
        def.solid_bcs = solid_bcs;
        def.recompute_previous_force = self.recompute_previous_force;
        def.t0 = self.time.t0;
        Problem::new(def)
    }

    /// Same physics in fixed-grid mode on an `nx`×`ny` background, without the patch.
    pub fn into_fixed_grid(mut self, nx: usize, ny: usize) -> Result<Self> {
        match &mut self.background {
            MeshSpec::Rect { nx: x, ny: y, .. } => {
                *x = nx;
                *y = ny;
            }
            _ => return Err(FsiError::Config("background mesh must be a rect".into())),
        }
        self.mode = Mode::FixedGrid;
        self.patch = None;
        self.fluid_bc.retain(|bc| bc.mesh == FluidMesh::Background);
        self.name = format!("{}:fixed_grid", self.name);
        Ok(self)
    }
}

fn wall(mesh: FluidMesh, tags: &[&str], component: usize, law: TimeLaw) -> FluidBcSpec {
    FluidBcSpec {
        mesh,
        tags: tags.iter().map(|t| t.to_string()).collect(),
        nodes: Vec::new(),
        component,
        law,
    }
}

fn compressing_ball(desk: bool) -> ScenarioConfig {
    let (n_bg, n_circum, n_radial, t_end) = if desk {
        (19, 24, 4, 1.0)
    } else {
        (55, 48, 10, 8.0)
    };
    let center = vec2(0.0, 0.0);
    let bg = FluidMesh::Background;
    let inflow = |a: f64| TimeLaw::half_sine_ramp(a, 5.0);
    ScenarioConfig {
        name: if desk {
            "compressing_ball:desk"
        } else {
            "compressing_ball"
        }
        .into(),
        mode: Mode::Hybrid,
        notes: vec![format!(
            "disc boundary uses {n_circum} segments (the all-quad disc needs a multiple of 4)"
        )],
        recompute_previous_force: false,
        time: TimeSection {
            t0: 0.0,
            t_end,
            dt: 0.01,
            theta: 1.0,
            rho_inf: 1.0,
        },
        fluid: FluidSection { rho: 1.0, mu: 1.0 },
        background: MeshSpec::Rect {
            origin: vec2(-2.0, -2.0),
            extent: vec2(4.0, 4.0),
            nx: n_bg,
            ny: n_bg,
        },
        patch: Some(MeshSpec::Annulus {
            center,
            r_inner: 0.75,
            r_outer: 0.9,
            n_circum,
            n_radial,
            grading: 4.0,
        }),
        solid: Some(SolidSection {
            rho: 1.0,
            young: 50.0,
            poisson: 0.3,
            mesh: MeshSpec::Disc {
                center,
                radius: 0.75,
                n_circum,
            },
        }),
        fluid_bc: vec![
            wall(bg, &["top"], 0, TimeLaw::zero()),
            wall(bg, &["top"], 1, inflow(-4.0)),
            wall(bg, &["bottom"], 0, TimeLaw::zero()),
            wall(bg, &["bottom"], 1, inflow(4.0)),
        ],
        solid_bc: (0..2)
            .map(|component| SolidBcSpec {
                node_set: "center".into(),
                component,
                law: TimeLaw::zero(),
            })
            .collect(),
        stabilization: Stabilization::default(),
        newton: NewtonParams::default(),
        cut: CutOptions::default(),
        output: OutputSpec {
            snapshot_every: 0,
            checkpoint_every: 0,
            probe: Some(vec2(0.0, 0.75)),
            line_cuts: Vec::new(),
        },
    }
}

fn moving_cylinder(desk: bool) -> ScenarioConfig {
    let (nx, ny, n_radial, dt, t_end) = if desk {
        (75, 15, 12, 0.005, 1.0)
    } else {
        (225, 45, 20, 0.001, 3.0)
    };
    let center = vec2(0.3, 0.23);
    let n_circum = 48;
    let bg = FluidMesh::Background;
    let mut fluid_bc = Vec::new();
    for c in 0..2 {
        fluid_bc.push(wall(bg, &["left", "top", "bottom"], c, TimeLaw::zero()));
    }
    ScenarioConfig {
        name: if desk { "moving_cylinder:desk" } else { "moving_cylinder" }.into(),
        mode: Mode::Hybrid,
        notes: vec![
            "centre x-position follows 1.1 + 0.8 sin(2/3 pi (t - 0.75)); the imposed displacement is that minus 0.3".into(),
            format!("cylinder boundary uses {n_circum} segments (the all-quad disc needs a multiple of 4)"),
            "the body is rigid: every solid dof is prescribed, so its material values are inert".into(),
        ],
        recompute_previous_force: false,
        time: TimeSection { t0: 0.0, t_end, dt, theta: 1.0, rho_inf: 1.0 },
        fluid: FluidSection { rho: 1.0, mu: 0.001 },
        background: MeshSpec::Rect { origin: vec2(0.0, 0.0), extent: vec2(2.2, 0.44), nx, ny },
        patch: Some(MeshSpec::Annulus { center, r_inner: 0.1, r_outer: 0.15, n_circum, n_radial, grading: 8.0 }),
        solid: Some(SolidSection { rho: 1.0, young: 1.0e3, poisson: 0.3, mesh: MeshSpec::Disc { center, radius: 0.1, n_circum } }),
        fluid_bc,
        solid_bc: vec![
            SolidBcSpec {
                node_set: "*".into(),
                component: 0,
                law: TimeLaw::Sine { offset: 0.8, amplitude: 0.8, omega: 2.0 * PI / 3.0, t0: 0.75 },
            },
            SolidBcSpec { node_set: "*".into(), component: 1, law: TimeLaw::zero() },
        ],
        stabilization: Stabilization::default(),
        newton: NewtonParams::default(),
        cut: CutOptions::default(),
        output: OutputSpec {
            snapshot_every: 0,
            checkpoint_every: 0,
            probe: Some(center),
            line_cuts: vec![LineCutSpec {
                name: "x0.7".into(),
                p0: vec2(0.7, 0.0),
                p1: vec2(0.7, 0.44),
                n_samples: 221,
                times: if desk { vec![0.5] } else { vec![0.5, 1.18, 2.03] },
            }],
        },
    }
}

fn vibrating_flag(desk: bool) -> ScenarioConfig {
    let (nx, ny, n_layers, dt, t_end) = if desk {
        (40, 14, 6, 0.002, 0.5)
    } else {
        (120, 41, 12, 0.001, 10.0)
    };
    let layout = FlagLayout {
        n_layers,
        grading: if desk { 6.0 } else { 12.0 },
        ..FlagLayout::default()
    };
    let bg = FluidMesh::Background;
    ScenarioConfig {
        name: if desk { "vibrating_flag:desk" } else { "vibrating_flag" }.into(),
        mode: Mode::Hybrid,
        notes: vec![
            "Young's modulus 2.0e6 (printed as 2.0e-6 in the reference setup, which cannot vibrate under this load)".into(),
            "head no-slip is imposed weakly on the patch facets tagged wall".into(),
        ],
        recompute_previous_force: false,
        time: TimeSection { t0: 0.0, t_end, dt, theta: 0.55, rho_inf: 1.0 },
        fluid: FluidSection { rho: 1.18e-3, mu: 1.82e-4 },
        background: MeshSpec::Rect { origin: vec2(-5.5, -6.0), extent: vec2(17.5, 12.0), nx, ny },
        patch: Some(MeshSpec::Flag(layout)),
        solid: Some(SolidSection { rho: 2.0, young: 2.0e6, poisson: 0.35, mesh: MeshSpec::FlagTail(layout) }),
        fluid_bc: vec![
            wall(bg, &["top", "bottom"], 1, TimeLaw::zero()),
            wall(bg, &["left"], 0, TimeLaw::CosineRamp { amplitude: 51.3, omega: 10.0 * PI, t_end: 0.1 }),
            wall(bg, &["left"], 1, TimeLaw::zero()),
        ],
        solid_bc: (0..2)
            .map(|component| SolidBcSpec { node_set: "left".into(), component, law: TimeLaw::zero() })
            .collect(),
        stabilization: Stabilization::default(),
        newton: NewtonParams::default(),
        cut: CutOptions::default(),
        output: OutputSpec {
            snapshot_every: 0,
            checkpoint_every: 0,
            probe: Some(vec2(layout.tail_length, layout.shift)),
            line_cuts: Vec::new(),
        },
    }
}

/// Built-in scenario by name; a `:desk` suffix selects the reduced resolution.
pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    let (base, desk) = match name.strip_suffix(":desk") {
        Some(b) => (b, true),
        None => (name, false),
    };
    match base {
        "compressing_ball" => Ok(compressing_ball(desk)),
        "moving_cylinder" => Ok(moving_cylinder(desk)),
        "vibrating_flag" => Ok(vibrating_flag(desk)),
        _ => Err(FsiError::Usage(format!(
            "unknown scenario \"{name}\"; built-ins are {} (append :desk for reduced resolution)",
            BUILTINS.join(", ")
        ))),
    }
}
