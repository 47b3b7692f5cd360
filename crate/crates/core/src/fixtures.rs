//! Small reference problems shared by the verification suites and tests.

use crate::bc::{Field, FluidDirichlet, FluidMesh, SolidDirichlet};
use crate::error::Result;
use crate::fluid::FluidParams;
use crate::geometry::{vec2, Vec2};
use crate::mesh::{generate_annulus_patch, generate_disc_mesh, generate_structured_rect, QuadMesh};
use crate::problem::{Mode, Problem, ProblemDefinition};
use crate::solid::SolidParams;

/// Velocity conditions on every boundary node of `mesh` (lid speed on "top")
/// plus a pressure pin at the first boundary node.
pub fn cavity_bcs(mesh: &QuadMesh, which: FluidMesh, lid: f64) -> Vec<FluidDirichlet> {
    let mut out = Vec::new();
    let mut walls = Vec::new();
    for tag in ["left", "right", "bottom"] {
        if let Ok(n) = mesh.node_set(tag) {
            walls.extend_from_slice(n);
        }
    }
    let top: Vec<usize> = mesh.node_set("top").map(|n| n.to_vec()).unwrap_or_default();
    walls.retain(|n| !top.contains(n));
    walls.sort_unstable();
    walls.dedup();
    for c in 0..2 {
        out.push(FluidDirichlet {
            mesh: which,
            nodes: walls.clone(),
            component: c,
            value: Field::constant(0.0),
        });
    }
    out.push(FluidDirichlet {
        mesh: which,
        nodes: top.clone(),
        component: 0,
        value: Field::constant(lid),
    });
    out.push(FluidDirichlet {
        mesh: which,
        nodes: top,
        component: 1,
        value: Field::constant(0.0),
    });
    out.push(FluidDirichlet {
        mesh: which,
        nodes: vec![0],
        component: 2,
        value: Field::constant(0.0),
    });
    out
}

/// Options of [`embedded_disc_cavity`].
#[derive(Debug, Clone, Copy)]
pub struct DiscCavity {
    pub n_background: usize,
    pub n_circum: usize,
    pub n_radial: usize,
    pub radius: f64,
    pub patch_radius: f64,
    pub center: Vec2,
    pub lid: f64,
    pub dt: f64,
    pub mu: f64,
    /// Pin the disc centre; otherwise the disc is free.
    pub pin_center: bool,
    pub young: f64,
}

impl Default for DiscCavity {
    fn default() -> Self {
        DiscCavity {
            n_background: 6,
            n_circum: 8,
            n_radial: 1,
            radius: 0.15,
            patch_radius: 0.3,
            center: vec2(0.5, 0.5),
            lid: 1.0,
            dt: 0.05,
            mu: 0.1,
            pin_center: true,
            young: 50.0,
        }
    }
}

/// Lid-driven unit cavity containing an elastic disc. Hybrid mode wraps the
/// disc in an annular patch; fixed-grid mode cuts the background with the disc.
pub fn embedded_disc_cavity(mode: Mode, o: &DiscCavity) -> Result<Problem> {
    let bg = generate_structured_rect(
        vec2(0.0, 0.0),
        vec2(1.0, 1.0),
        o.n_background,
        o.n_background,
    )?;
    let solid = generate_disc_mesh(o.center, o.radius, o.n_circum)?;
    let params = SolidParams {
        rho: 1.0,
        young: o.young,
        poisson: 0.3,
        rho_inf: 1.0,
    };
    let mut def = ProblemDefinition::new(mode, bg.clone(), FluidParams::new(1.0, o.mu, 1.0, o.dt));
    def.fluid_bcs = cavity_bcs(&bg, FluidMesh::Background, o.lid);
    if mode == Mode::Hybrid {
        def.patch = Some(generate_annulus_patch(
            o.center,
            o.radius,
            o.patch_radius,
            o.n_circum,
            o.n_radial,
            1.0,
        )?);
    }
    if o.pin_center {
        let c = solid.node_set("center")?.to_vec();
        for k in 0..2 {
            def.solid_bcs.push(SolidDirichlet {
                nodes: c.clone(),
                component: k,
                value: Field::constant(0.0),
            });
        }
    }
    def.solid = Some((solid, params));
    Problem::new(def)
}
