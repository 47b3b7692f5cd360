//! Monolithic residual and tangent assembly, the Newton loop with
//! function-space-change cycles, predictors and time-level advance.

use crate::cutcell::CellKind;
use crate::error::{FsiError, Result};
use crate::fem::{edge_point, gauss_1d};
use crate::fluid::{
    element_system, ghost_coefficients, ghost_facet_system, ElementData, ElementQuadrature,
    LocalSystem,
};
use crate::geometry::{vec2, Vec2};
use crate::nitsche::{fluid_fluid_segment, fluid_solid_facet, CouplingPoint};
use crate::problem::{transcribe, DofMap, FieldState, FluidField, Geometry, Mode, Problem};
use crate::solid::{assemble_internal, element_internal, SolidState};
use crate::sparse::{self, source, Assembler, CscMatrix};

/// Unknown fields of one Newton iterate, on all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub bg: Vec<f64>,
    pub patch: Vec<f64>,
    pub solid_d: Vec<f64>,
}

/// Solid velocity and acceleration implied by a displacement iterate.
#[derive(Debug, Clone)]
pub struct SolidKinematics {
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    /// ∂v/∂d for unconstrained dofs.
    pub velocity_factor: f64,
}

/// Data fixed over one time step.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub t: f64,
    /// Previous level with background fields transcribed to the current active set.
    pub prev: FieldState,
    pub prev_internal: Vec<f64>,
    pub prev_coupling: Vec<f64>,
    presc_v: Vec<f64>,
    presc_a: Vec<f64>,
}

pub struct Assembled {
    pub residual: Vec<f64>,
    pub matrix: Option<CscMatrix>,
    /// Solid-side coupling residual on all solid dofs.
    pub interface_force: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub cycles: usize,
    /// Residual 2-norm at every Newton iteration, over all cycles.
    pub history: Vec<f64>,
    pub predictor_fallback: bool,
}

enum Outcome {
    Converged {
        iterate: Iterate,
        geom: Geometry,
        assembled: Assembled,
    },
    SpaceChanged {
        iterate: Iterate,
        geom: Geometry,
        old_active: Vec<bool>,
    },
}

fn scatter(
    asm: &mut Option<Assembler>,
    res: &mut [f64],
    src: u64,
    ls: &LocalSystem,
    map: &[Option<usize>],
) {
    if let Some(a) = asm.as_mut() {
        a.begin_source(src);
    }
    for (r, gr) in map.iter().enumerate() {
        let Some(gr) = *gr else { continue };
        res[gr] += ls.r[r];
        if let Some(a) = asm.as_mut() {
            for (c, gc) in map.iter().enumerate() {
                if let Some(gc) = *gc {
                    let v = ls.k[r * ls.n + c];
                    if v != 0.0 {
                        a.add(gr, gc, v);
                    }
                }
            }
        }
    }
}

fn fluid_map(el: &[usize; 4], dofs: &[Option<usize>]) -> [Option<usize>; 12] {
    std::array::from_fn(|k| dofs[3 * el[k / 3] + k % 3])
}

fn gather12(el: &[usize; 4], v: &[f64]) -> [f64; 12] {
    std::array::from_fn(|k| v[3 * el[k / 3] + k % 3])
}

struct FluidView<'a> {
    elements: &'a [[usize; 4]],
    coords: &'a [Vec2],
    up: &'a [f64],
    lin: &'a [f64],
    old: &'a FluidField,
    grid_vel: Option<&'a [Vec2]>,
}

impl FluidView<'_> {
    fn element(&self, e: usize) -> ElementData {
        let el = &self.elements[e];
        ElementData {
            id: e,
            coords: std::array::from_fn(|a| self.coords[el[a]]),
            up: gather12(el, self.up),
            up_lin: gather12(el, self.lin),
            up_old: gather12(el, &self.old.up),
            acc_old: gather12(el, &self.old.acc),
            grid_vel: std::array::from_fn(|a| self.grid_vel.map_or(Vec2::zeros(), |g| g[el[a]])),
        }
    }
}

/// Outward unit normal and length of the element edge from `a` to `b` (CCW order).
fn edge_normal(a: Vec2, b: Vec2) -> (Vec2, f64) {
    let d = b - a;
    let len = d.norm();
    (vec2(d.y, -d.x) / len, len)
}

fn block_norms(r: &[f64], dofs: &DofMap) -> [f64; 3] {
    dofs.blocks()
        .map(|rg| r[rg].iter().map(|v| v * v).sum::<f64>().sqrt())
}

impl Problem {
    fn solid_kinematics(&self, ctx: &StepContext, d: &[f64]) -> SolidKinematics {
        let Some(s) = &self.solid else {
            return SolidKinematics {
                v: Vec::new(),
                a: Vec::new(),
                velocity_factor: 0.0,
            };
        };
        let old = ctx.prev.solid.as_ref().expect("solid state present");
        let dt = self.dt();
        let ga = &s.galpha;
        let n = d.len();
        let mut v = vec![0.0; n];
        let mut a = vec![0.0; n];
        for k in 0..n {
            if self.solid_fixed[k] {
                v[k] = ctx.presc_v[k];
                a[k] = ctx.presc_a[k];
            } else {
                v[k] = ga.velocity(dt, d[k], old.d[k], old.v[k], old.a[k]);
                a[k] = ga.acceleration(dt, d[k], old.d[k], old.v[k], old.a[k]);
            }
        }
        SolidKinematics {
            v,
            a,
            velocity_factor: ga.velocity_factor(dt),
        }
    }

    fn body_at(&self, t: f64) -> impl Fn(Vec2) -> Vec2 + '_ {
        move |x| self.body_force.as_ref().map_or(Vec2::zeros(), |f| f(x, t))
    }

    /// Adds fluid–solid coupling terms; returns the solid-side rows on all solid dofs.
    #[allow(clippy::too_many_arguments)]
    fn couple_fluid_solid(
        &self,
        fluid_up: &[f64],
        fluid_lin: &[f64],
        fluid_old: &FluidField,
        solid_v: &[f64],
        velocity_factor: f64,
        geom: &Geometry,
        dofs: Option<&DofMap>,
        asm: &mut Option<Assembler>,
        res: &mut [f64],
        with_tangent: bool,
    ) -> Result<Vec<f64>> {
        let Some(s) = &self.solid else {
            return Ok(Vec::new());
        };
        let mut force = vec![0.0; 2 * s.mesh.num_nodes()];
        let vel = |n: usize| vec2(solid_v[2 * n], solid_v[2 * n + 1]);
        let mut add = |src: u64,
                       ls: &LocalSystem,
                       fmap: [Option<usize>; 12],
                       sn: Option<[usize; 2]>,
                       asm: &mut Option<Assembler>,
                       res: &mut [f64]| {
            if let Some(sn) = sn {
                for b in 0..2 {
                    for i in 0..2 {
                        force[2 * sn[b] + i] += ls.r[12 + 2 * b + i];
                    }
                }
            }
            if let Some(d) = dofs {
                let mut map = [None; 16];
                map[..12].copy_from_slice(&fmap);
                if let Some(sn) = sn {
                    for b in 0..2 {
                        for i in 0..2 {
                            map[12 + 2 * b + i] = d.solid[2 * sn[b] + i];
                        }
                    }
                }
                scatter(asm, res, src, ls, &map);
            }
        };
        match self.mode {
            Mode::Hybrid => {
                let p = self.patch.as_ref().expect("hybrid problem has a patch");
                let view = FluidView {
                    elements: &p.mesh.elements,
                    coords: &geom.patch_coords,
                    up: fluid_up,
                    lin: fluid_lin,
                    old: fluid_old,
                    grid_vel: Some(&geom.grid_vel),
                };
                let walls = p.wall_facets.iter().map(|&fi| (fi, None));
                let facets = p.fsi_facets.iter().map(|&fi| (fi, Some(()))).chain(walls);
                for (q, (fi, moving)) in facets.enumerate() {
                    let f = &p.mesh.boundary_facets[fi];
                    let (a, b) = (f.nodes[0], f.nodes[1]);
                    let (n_out, len) = edge_normal(geom.patch_coords[a], geom.patch_coords[b]);
                    let pts: Vec<([f64; 2], f64, f64)> = gauss_1d(2)
                        .into_iter()
                        .map(|(g, w)| {
                            let t = 0.5 * (g + 1.0);
                            (edge_point(f.local_edge, t), t, 0.5 * w * len)
                        })
                        .collect();
                    let sn = moving.map(|_| [p.solid_match[&a], p.solid_match[&b]]);
                    let v = sn.map_or([Vec2::zeros(); 2], |sn| [vel(sn[0]), vel(sn[1])]);
                    let fel = view.element(f.element);
                    let ls = fluid_solid_facet(
                        &fel,
                        &pts,
                        &v,
                        velocity_factor,
                        &n_out,
                        len,
                        &self.fluid,
                        &self.nitsche,
                        with_tangent,
                    )?;
                    let fmap = dofs.map_or([None; 12], |d| {
                        fluid_map(&p.mesh.elements[f.element], &d.patch)
                    });
                    add(source::FLUID_SOLID + q as u64, &ls, fmap, sn, asm, res);
                }
            }
            Mode::FixedGrid => {
                let view = FluidView {
                    elements: &self.background.elements,
                    coords: &self.background.nodes,
                    up: fluid_up,
                    lin: fluid_lin,
                    old: fluid_old,
                    grid_vel: None,
                };
                let nl = s.boundary_loop.len();
                for (q, seg) in geom.cut.segments.iter().enumerate() {
                    let j = seg.cutter_edge;
                    let sn = [s.boundary_loop[j], s.boundary_loop[(j + 1) % nl]];
                    let pts: Vec<([f64; 2], f64, f64)> =
                        seg.points.iter().map(|sp| (sp.xi, sp.s, sp.w)).collect();
                    let fel = view.element(seg.element);
                    let h = fel.diameter();
                    let ls = fluid_solid_facet(
                        &fel,
                        &pts,
                        &[vel(sn[0]), vel(sn[1])],
                        velocity_factor,
                        &seg.normal,
                        h,
                        &self.fluid,
                        &self.nitsche,
                        with_tangent,
                    )?;
                    let fmap = dofs.map_or([None; 12], |d| {
                        fluid_map(&self.background.elements[seg.element], &d.bg)
                    });
                    add(
                        source::FLUID_SOLID + q as u64,
                        &ls,
                        fmap,
                        Some(sn),
                        asm,
                        res,
                    );
                }
            }
            Mode::SingleMesh => {}
        }
        Ok(force)
    }

    /// Global residual and (optionally) tangent at `it`, with stabilization
    /// parameters frozen at `lin` and geometry frozen at `geom`.
    pub fn assemble(
        &self,
        ctx: &StepContext,
        it: &Iterate,
        lin: &Iterate,
        geom: &Geometry,
        dofs: &DofMap,
        with_tangent: bool,
    ) -> Result<Assembled> {
        let n = dofs.len();
        let mut res = vec![0.0; n];
        let mut asm = with_tangent.then(|| Assembler::new(n, n));
        let body = self.body_at(ctx.t);
        let bg_mesh = &self.background;

        let bg_view = FluidView {
            elements: &bg_mesh.elements,
            coords: &bg_mesh.nodes,
            up: &it.bg,
            lin: &lin.bg,
            old: &ctx.prev.bg,
            grid_vel: None,
        };
        for e in 0..bg_mesh.num_elements() {
            let quad = match geom.cut.kind(e) {
                CellKind::Void => continue,
                CellKind::Active => ElementQuadrature::Full(2),
                CellKind::Cut => match geom.cut.cut_cells.get(&e) {
                    Some(c) => ElementQuadrature::Cut(&c.points),
                    None => {
                        return Err(FsiError::Assembly(format!(
                            "cut element {e} has no quadrature"
                        )))
                    }
                },
            };
            let ls = element_system(&bg_view.element(e), quad, &self.fluid, &body, with_tangent)?;
            scatter(
                &mut asm,
                &mut res,
                source::VOLUME + e as u64,
                &ls,
                &fluid_map(&bg_mesh.elements[e], &dofs.bg),
            );
        }

        let gp_pts = gauss_1d(2);
        for &fi in &geom.cut.gp_facets {
            let f = &bg_mesh.interior_facets[fi];
            let (n_f, len) = edge_normal(bg_mesh.nodes[f.nodes[0]], bg_mesh.nodes[f.nodes[1]]);
            let pts: Vec<([f64; 2], [f64; 2], f64)> = gp_pts
                .iter()
                .map(|&(g, w)| {
                    let s = 0.5 * (g + 1.0);
                    (
                        edge_point(f.left_edge, s),
                        edge_point(f.right_edge, 1.0 - s),
                        0.5 * w * len,
                    )
                })
                .collect();
            let (l, r) = (bg_view.element(f.left), bg_view.element(f.right));
            let coef = ghost_coefficients(&l, &r, &self.fluid);
            let ls = ghost_facet_system(&l, &r, &pts, &n_f, &coef, with_tangent)?;
            let mut map = [None; 24];
            map[..12].copy_from_slice(&fluid_map(&bg_mesh.elements[f.left], &dofs.bg));
            map[12..].copy_from_slice(&fluid_map(&bg_mesh.elements[f.right], &dofs.bg));
            scatter(&mut asm, &mut res, source::GHOST + fi as u64, &ls, &map);
        }

        let empty = FluidField {
            up: Vec::new(),
            acc: Vec::new(),
        };
        if let Some(p) = &self.patch {
            let old = ctx.prev.patch.as_ref().unwrap_or(&empty);
            let view = FluidView {
                elements: &p.mesh.elements,
                coords: &geom.patch_coords,
                up: &it.patch,
                lin: &lin.patch,
                old,
                grid_vel: Some(&geom.grid_vel),
            };
            for e in 0..p.mesh.num_elements() {
                let ls = element_system(
                    &view.element(e),
                    ElementQuadrature::Full(2),
                    &self.fluid,
                    &body,
                    with_tangent,
                )?;
                scatter(
                    &mut asm,
                    &mut res,
                    source::VOLUME + source::PATCH + e as u64,
                    &ls,
                    &fluid_map(&p.mesh.elements[e], &dofs.patch),
                );
            }
            for (q, seg) in geom.cut.segments.iter().enumerate() {
                let ce = p.ff_edges[seg.cutter_edge];
                let f = &p.mesh.boundary_facets[ce.facet];
                let h = (geom.patch_coords[f.nodes[1]] - geom.patch_coords[f.nodes[0]]).norm();
                let pts: Vec<CouplingPoint> = seg
                    .points
                    .iter()
                    .map(|sp| {
                        (
                            edge_point(f.local_edge, if ce.reversed { 1.0 - sp.s } else { sp.s }),
                            sp.xi,
                            sp.w,
                        )
                    })
                    .collect();
                let ls = fluid_fluid_segment(
                    &view.element(f.element),
                    &bg_view.element(seg.element),
                    &pts,
                    &seg.normal,
                    h,
                    &self.fluid,
                    &self.nitsche,
                    with_tangent,
                )?;
                let mut map = [None; 24];
                map[..12].copy_from_slice(&fluid_map(&p.mesh.elements[f.element], &dofs.patch));
                map[12..].copy_from_slice(&fluid_map(&bg_mesh.elements[seg.element], &dofs.bg));
                scatter(
                    &mut asm,
                    &mut res,
                    source::FLUID_FLUID + q as u64,
                    &ls,
                    &map,
                );
            }
        }

        let mut interface_force = Vec::new();
        if let Some(s) = &self.solid {
            let kin = self.solid_kinematics(ctx, &it.solid_d);
            let (up, lin_up, old) = match self.mode {
                Mode::Hybrid => (
                    &it.patch,
                    &lin.patch,
                    ctx.prev.patch.as_ref().unwrap_or(&empty),
                ),
                _ => (&it.bg, &lin.bg, &ctx.prev.bg),
            };
            interface_force = self.couple_fluid_solid(
                up,
                lin_up,
                old,
                &kin.v,
                kin.velocity_factor,
                geom,
                Some(dofs),
                &mut asm,
                &mut res,
                with_tangent,
            )?;

            let ga = &s.galpha;
            let old = ctx.prev.solid.as_ref().expect("solid state present");
            let nd = it.solid_d.len();
            let mix: Vec<f64> = (0..nd)
                .map(|k| (1.0 - ga.alpha_m) * kin.a[k] + ga.alpha_m * old.a[k])
                .collect();
            let ma = s.mass.mul_vec(&mix);
            for k in 0..nd {
                if let Some(g) = dofs.solid[k] {
                    res[g] += (ma[k] + ga.alpha_f * (ctx.prev_internal[k] + ctx.prev_coupling[k]))
                        / (1.0 - ga.alpha_f);
                }
            }
            for (e, el) in s.mesh.elements.iter().enumerate() {
                let disp: [f64; 8] = std::array::from_fn(|k| it.solid_d[2 * el[k / 2] + k % 2]);
                let (fe, ke) = element_internal(
                    e,
                    &s.mesh.element_polygon(e),
                    &disp,
                    s.lambda,
                    s.mu,
                    with_tangent,
                )?;
                let ls = LocalSystem {
                    n: 8,
                    r: fe.to_vec(),
                    k: ke.to_vec(),
                };
                let map: [Option<usize>; 8] =
                    std::array::from_fn(|k| dofs.solid[2 * el[k / 2] + k % 2]);
                scatter(&mut asm, &mut res, source::SOLID + e as u64, &ls, &map);
            }
            if let Some(a) = asm.as_mut() {
                let c = ga.mass_factor(self.dt());
                a.begin_source(source::DIAGONAL);
                for col in 0..nd {
                    let Some(gc) = dofs.solid[col] else { continue };
                    for q in s.mass.col_ptr[col]..s.mass.col_ptr[col + 1] {
                        if let Some(gr) = dofs.solid[s.mass.row_idx[q]] {
                            a.add(gr, gc, c * s.mass.values[q]);
                        }
                    }
                }
            }
        }

        Ok(Assembled {
            residual: res,
            matrix: asm.map(|a| a.finish()),
            interface_force,
        })
    }
}

fn total_norm(norms: &[f64; 3]) -> f64 {
    norms.iter().map(|n| n * n).sum::<f64>().sqrt()
}

impl Problem {
    /// Rest state at `t0` with boundary values applied.
    pub fn initial_state(&self) -> Result<FieldState> {
        let t = self.t0;
        let solid = self.solid.as_ref().map(|s| {
            let mut st = SolidState::at_rest(s.mesh.num_nodes());
            self.apply_solid_bcs(&mut st.d, &mut st.v, &mut st.a, t);
            st
        });
        let d = solid.as_ref().map_or(Vec::new(), |s| s.d.clone());
        let geom = self.geometry(&d, &[], 1.0)?;
        let mut bg = FluidField::at_rest(self.background.num_nodes());
        let mut patch = self
            .patch
            .as_ref()
            .map(|p| FluidField::at_rest(p.mesh.num_nodes()));
        let mut none = Vec::new();
        self.apply_fluid_bcs(
            &mut bg.up,
            patch.as_mut().map_or(&mut none, |p| &mut p.up),
            Some(&geom.patch_coords),
            t,
        );
        let grid_vel = vec![0.0; geom.grid_disp.len()];
        let mut state = FieldState {
            step: 0,
            time: t,
            bg,
            patch,
            solid,
            grid_disp: geom.grid_disp.clone(),
            grid_vel,
            active: geom.cut.active_nodes.clone(),
            interface_force: Vec::new(),
        };
        state.interface_force = self.recompute_interface_force(&state)?;
        Ok(state)
    }

    /// Solid-side coupling residual of a stored time level, re-assembled from its fields.
    pub fn recompute_interface_force(&self, state: &FieldState) -> Result<Vec<f64>> {
        let Some(solid) = &state.solid else {
            return Ok(Vec::new());
        };
        let mut geom = self.geometry(&solid.d, &state.grid_disp, 1.0)?;
        geom.grid_vel = (0..state.grid_vel.len() / 2)
            .map(|i| vec2(state.grid_vel[2 * i], state.grid_vel[2 * i + 1]))
            .collect();
        let empty = FluidField {
            up: Vec::new(),
            acc: Vec::new(),
        };
        let (up, old) = match self.mode {
            Mode::Hybrid => {
                let p = state.patch.as_ref().unwrap_or(&empty);
                (&p.up, p)
            }
            _ => (&state.bg.up, &state.bg),
        };
        self.couple_fluid_solid(
            up,
            up,
            old,
            &solid.v,
            0.0,
            &geom,
            None,
            &mut None,
            &mut [],
            false,
        )
    }

    /// Prediction, geometry and transcription for the step following `prev`.
    pub fn prepare_step(
        &self,
        prev: &FieldState,
    ) -> Result<(StepContext, Iterate, Geometry, bool)> {
        let dt = self.dt();
        let t = prev.time + dt;
        let mut presc_v = Vec::new();
        let mut presc_a = Vec::new();
        let mut fallback = false;
        let (solid_d, geom) = match (&self.solid, &prev.solid) {
            (Some(s), Some(old)) => {
                let n = old.d.len();
                let mut d_bc = old.d.clone();
                presc_v = vec![0.0; n];
                presc_a = vec![0.0; n];
                self.apply_solid_bcs(&mut d_bc, &mut presc_v, &mut presc_a, t);
                let fixed = |d: &mut Vec<f64>| {
                    for k in 0..n {
                        if self.solid_fixed[k] {
                            d[k] = d_bc[k];
                        }
                    }
                };
                let mut d: Vec<f64> = (0..n)
                    .map(|k| {
                        s.galpha
                            .predict_displacement(dt, old.d[k], old.v[k], old.a[k])
                    })
                    .collect();
                fixed(&mut d);
                match self.geometry(&d, &prev.grid_disp, dt) {
                    Ok(g) => (d, g),
                    Err(FsiError::MeshDistortion { element, det_j }) => {
                        log::warn!("predictor distorts patch element {element} (det J = {det_j:e}); using zero increment");
                        fallback = true;
                        let mut d = old.d.clone();
                        fixed(&mut d);
                        let g = self.geometry(&d, &prev.grid_disp, dt)?;
                        (d, g)
                    }
                    Err(e) => return Err(e),
                }
            }
            _ => (Vec::new(), self.geometry(&[], &prev.grid_disp, dt)?),
        };

        let bg_nodes = &self.background.nodes;
        let active = &geom.cut.active_nodes;
        let mut prev_t = prev.clone();
        prev_t.bg.up = transcribe(&prev.bg.up, 3, bg_nodes, &prev.active, active);
        prev_t.bg.acc = transcribe(&prev.bg.acc, 3, bg_nodes, &prev.active, active);

        let prev_internal = match (&self.solid, &prev.solid) {
            (Some(s), Some(old)) => assemble_internal(&s.mesh, &old.d, s.lambda, s.mu, false)?.0,
            _ => Vec::new(),
        };
        let prev_coupling = if self.recompute_previous_force {
            self.recompute_interface_force(prev)?
        } else {
            prev.interface_force.clone()
        };

        let mut iterate = Iterate {
            bg: prev_t.bg.up.clone(),
            patch: prev.patch.as_ref().map_or(Vec::new(), |p| p.up.clone()),
            solid_d,
        };
        self.apply_fluid_bcs(
            &mut iterate.bg,
            &mut iterate.patch,
            Some(&geom.patch_coords),
            t,
        );
        let ctx = StepContext {
            t,
            prev: prev_t,
            prev_internal,
            prev_coupling,
            presc_v,
            presc_a,
        };
        Ok((ctx, iterate, geom, fallback))
    }

    fn apply_increment(&self, it: &Iterate, dx: &[f64], dofs: &DofMap, scale: f64) -> Iterate {
        let mut out = it.clone();
        for (vals, map) in [
            (&mut out.bg, &dofs.bg),
            (&mut out.patch, &dofs.patch),
            (&mut out.solid_d, &dofs.solid),
        ] {
            for (k, g) in map.iter().enumerate() {
                if let Some(g) = *g {
                    vals[k] += scale * dx[g];
                }
            }
        }
        out
    }

    fn increment_ok(&self, it: &Iterate, dx: &[f64], dofs: &DofMap) -> bool {
        let state = [&it.bg, &it.patch, &it.solid_d];
        let maps = [&dofs.bg, &dofs.patch, &dofs.solid];
        (0..3).all(|b| {
            let mut dn = 0.0;
            let mut xn = 0.0;
            for (k, g) in maps[b].iter().enumerate() {
                if let Some(g) = *g {
                    dn += dx[g] * dx[g];
                    xn += state[b][k] * state[b][k];
                }
            }
            dn.sqrt() <= (self.newton.rtol * xn.sqrt()).max(self.newton.atol)
        })
    }

    fn newton(
        &self,
        ctx: &StepContext,
        mut it: Iterate,
        mut geom: Geometry,
        report: &mut StepReport,
    ) -> Result<Outcome> {
        let nw = self.newton;
        let dofs = DofMap::build(self, &geom.cut.active_nodes);
        let dt = self.dt();
        let mut sys = self.assemble(ctx, &it, &it, &geom, &dofs, true)?;
        let mut reference = [0.0f64; 3];
        let mut last_dx: Option<Vec<f64>> = None;
        for iter in 0..=nw.max_iterations {
            let norms = block_norms(&sys.residual, &dofs);
            for b in 0..3 {
                reference[b] = reference[b].max(norms[b]);
            }
            let merit = total_norm(&norms);
            report.history.push(merit);
            let res_ok = if iter == 0 {
                norms.iter().all(|&n| n <= nw.atol)
            } else {
                norms
                    .iter()
                    .zip(&reference)
                    .all(|(&n, &r)| n <= (nw.rtol * r).max(nw.atol))
            };
            let inc_ok = match &last_dx {
                None => true,
                Some(dx) => self.increment_ok(&it, dx, &dofs),
            };
            if res_ok && inc_ok {
                return Ok(Outcome::Converged {
                    iterate: it,
                    geom,
                    assembled: sys,
                });
            }
            if iter == nw.max_iterations {
                break;
            }
            report.iterations += 1;
            let matrix = sys.matrix.take().expect("tangent assembled");
            let rhs: Vec<f64> = sys.residual.iter().map(|v| -v).collect();
            let dx = sparse::solve(&matrix, &rhs)?;

            let mut step = 1.0;
            let mut accepted = None;
            for halving in 0..=nw.max_halvings {
                let trial = self.apply_increment(&it, &dx, &dofs, step);
                let last = halving == nw.max_halvings;
                let trial_geom = if self.solid.is_some() && self.mode != Mode::SingleMesh {
                    match self.geometry(&trial.solid_d, &ctx.prev.grid_disp, dt) {
                        Ok(g) => g,
                        Err(e @ FsiError::MeshDistortion { .. }) => {
                            if last {
                                return Err(e);
                            }
                            step *= 0.5;
                            continue;
                        }
                        Err(e) => return Err(e),
                    }
                } else {
                    geom.clone()
                };
                if !trial_geom.cut.same_active_set(&geom.cut) {
                    return Ok(Outcome::SpaceChanged {
                        iterate: trial,
                        geom: trial_geom,
                        old_active: geom.cut.active_nodes.clone(),
                    });
                }
                match self.assemble(ctx, &trial, &trial, &trial_geom, &dofs, true) {
                    Ok(s) => {
                        let tn = total_norm(&block_norms(&s.residual, &dofs));
                        if tn < merit || last {
                            accepted = Some((trial, trial_geom, s));
                            break;
                        }
                        if halving == 0 {
                            log::debug!(
                                "line search: residual {tn:e} did not decrease from {merit:e}"
                            );
                        }
                    }
                    Err(e @ FsiError::ElementInversion { .. }) if !last => {
                        log::debug!("line search: {e}");
                    }
                    Err(e) => return Err(e),
                }
                step *= 0.5;
            }
            let (trial, trial_geom, s) = accepted.expect("last halving is always accepted");
            it = trial;
            geom = trial_geom;
            sys = s;
            last_dx = Some(dx.iter().map(|v| v * step).collect());
        }
        let last = report.history.last().copied().unwrap_or(f64::NAN);
        Err(FsiError::NonlinearDivergence {
            iterations: nw.max_iterations,
            last,
            history: report.history.clone(),
        })
    }

    /// Advances one time step from `prev`.
    pub fn step(&self, prev: &FieldState) -> Result<(FieldState, StepReport)> {
        let (ctx, it, geom, fallback) = self.prepare_step(prev)?;
        let (state, mut report) = self.solve_step(prev, ctx, it, geom)?;
        report.predictor_fallback = fallback;
        Ok((state, report))
    }

    /// Newton cycles (Algorithm 1) from a given starting iterate and geometry.
    pub fn solve_step(
        &self,
        prev: &FieldState,
        mut ctx: StepContext,
        mut it: Iterate,
        mut geom: Geometry,
    ) -> Result<(FieldState, StepReport)> {
        let mut report = StepReport::default();
        let nodes = &self.background.nodes;
        loop {
            report.cycles += 1;
            if report.cycles > self.newton.max_cycles {
                return Err(FsiError::CycleLimit(self.newton.max_cycles));
            }
            match self.newton(&ctx, it, geom, &mut report)? {
                Outcome::Converged {
                    iterate,
                    geom,
                    assembled,
                } => {
                    let state = self.advance(&ctx, prev, iterate, &geom, assembled.interface_force);
                    return Ok((state, report));
                }
                Outcome::SpaceChanged {
                    mut iterate,
                    geom: new_geom,
                    old_active,
                } => {
                    log::debug!(
                        "active background set changed, starting cycle {}",
                        report.cycles + 1
                    );
                    let active = &new_geom.cut.active_nodes;
                    iterate.bg = transcribe(&iterate.bg, 3, nodes, &old_active, active);
                    ctx.prev.bg.up = transcribe(&prev.bg.up, 3, nodes, &prev.active, active);
                    ctx.prev.bg.acc = transcribe(&prev.bg.acc, 3, nodes, &prev.active, active);
                    self.apply_fluid_bcs(
                        &mut iterate.bg,
                        &mut iterate.patch,
                        Some(&new_geom.patch_coords),
                        ctx.t,
                    );
                    it = iterate;
                    geom = new_geom;
                }
            }
        }
    }

    fn advance(
        &self,
        ctx: &StepContext,
        prev: &FieldState,
        it: Iterate,
        geom: &Geometry,
        interface_force: Vec<f64>,
    ) -> FieldState {
        let fl = &self.fluid;
        let rate = |up: &[f64], old: &FluidField| -> Vec<f64> {
            if !fl.transient {
                return vec![0.0; up.len()];
            }
            let c = (1.0 - fl.theta) / fl.theta;
            (0..up.len())
                .map(|k| {
                    if k % 3 == 2 {
                        0.0
                    } else {
                        fl.sigma() * (up[k] - old.up[k]) - c * old.acc[k]
                    }
                })
                .collect()
        };
        let bg_acc = rate(&it.bg, &ctx.prev.bg);
        let patch = ctx.prev.patch.as_ref().map(|old| FluidField {
            acc: rate(&it.patch, old),
            up: it.patch.clone(),
        });
        let solid = self.solid.as_ref().map(|_| {
            let kin = self.solid_kinematics(ctx, &it.solid_d);
            SolidState {
                d: it.solid_d.clone(),
                v: kin.v,
                a: kin.a,
            }
        });
        FieldState {
            step: prev.step + 1,
            time: ctx.t,
            bg: FluidField {
                up: it.bg,
                acc: bg_acc,
            },
            patch,
            solid,
            grid_disp: geom.grid_disp.clone(),
            grid_vel: geom.grid_vel.iter().flat_map(|v| [v.x, v.y]).collect(),
            active: geom.cut.active_nodes.clone(),
            interface_force,
        }
    }

    /// Relative Frobenius mismatch between the assembled tangent and central
    /// differences of the residual, at frozen geometry and linearization state.
    pub fn jacobian_mismatch(
        &self,
        ctx: &StepContext,
        it: &Iterate,
        geom: &Geometry,
        eps: f64,
    ) -> Result<f64> {
        let dofs = DofMap::build(self, &geom.cut.active_nodes);
        let k = self
            .assemble(ctx, it, it, geom, &dofs, true)?
            .matrix
            .expect("tangent")
            .to_dense();
        let n = dofs.len();
        let mut diff = 0.0;
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let xp = self.apply_increment(it, &e, &dofs, eps);
            let xm = self.apply_increment(it, &e, &dofs, -eps);
            let rp = self.assemble(ctx, &xp, it, geom, &dofs, false)?.residual;
            let rm = self.assemble(ctx, &xm, it, geom, &dofs, false)?.residual;
            for i in 0..n {
                let fd = (rp[i] - rm[i]) / (2.0 * eps);
                diff += (fd - k[(i, j)]).powi(2);
            }
        }
        Ok(diff.sqrt() / k.norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{embedded_disc_cavity, DiscCavity};

    fn perturbed(problem: &Problem) -> (StepContext, Iterate, Geometry) {
        let mut prev = problem.initial_state().unwrap();
        let wave = |k: usize, a: f64| a * ((k as f64) * 0.37).sin();
        for (k, v) in prev.bg.up.iter_mut().enumerate() {
            *v += wave(k, 0.3);
        }
        if let Some(p) = prev.patch.as_mut() {
            for (k, v) in p.up.iter_mut().enumerate() {
                *v += wave(k + 7, 0.3);
            }
        }
        let s = prev.solid.as_mut().unwrap();
        for k in 0..s.d.len() {
            if !problem.solid_fixed[k] {
                s.v[k] = wave(k + 3, 0.2);
                s.a[k] = wave(k + 5, 0.5);
            }
        }
        let (ctx, mut it, geom, _) = problem.prepare_step(&prev).unwrap();
        for (k, v) in it.bg.iter_mut().enumerate() {
            *v += wave(k + 11, 0.1);
        }
        for (k, v) in it.patch.iter_mut().enumerate() {
            *v += wave(k + 13, 0.1);
        }
        (ctx, it, geom)
    }

    #[test]
    fn coupled_jacobian_matches_differences() {
        for mode in [Mode::Hybrid, Mode::FixedGrid] {
            let problem = embedded_disc_cavity(mode, &DiscCavity::default()).unwrap();
            let (ctx, it, geom) = perturbed(&problem);
            let dofs = DofMap::build(&problem, &geom.cut.active_nodes);
            assert!(dofs.len() <= 300, "{} dofs", dofs.len());
            let err = problem.jacobian_mismatch(&ctx, &it, &geom, 1e-6).unwrap();
            assert!(err < 1e-6, "{mode:?}: relative mismatch {err:e}");
        }
    }

    #[test]
    fn background_and_solid_blocks_are_uncoupled() {
        let problem = embedded_disc_cavity(Mode::Hybrid, &DiscCavity::default()).unwrap();
        let (ctx, it, geom) = perturbed(&problem);
        let dofs = DofMap::build(&problem, &geom.cut.active_nodes);
        let k = problem
            .assemble(&ctx, &it, &it, &geom, &dofs, true)
            .unwrap()
            .matrix
            .unwrap();
        let [bg, _, solid] = dofs.blocks();
        for c in 0..k.ncols {
            for q in k.col_ptr[c]..k.col_ptr[c + 1] {
                let r = k.row_idx[q];
                assert!(!(bg.contains(&r) && solid.contains(&c)), "entry ({r}, {c})");
                assert!(!(solid.contains(&r) && bg.contains(&c)), "entry ({r}, {c})");
            }
        }
        assert!(!solid.is_empty() && !bg.is_empty());
    }

    #[test]
    fn rest_state_persists() {
        for mode in [Mode::Hybrid, Mode::FixedGrid] {
            let problem = embedded_disc_cavity(
                mode,
                &DiscCavity {
                    lid: 0.0,
                    ..Default::default()
                },
            )
            .unwrap();
            let s0 = problem.initial_state().unwrap();
            let (s1, report) = problem.step(&s0).unwrap();
            assert_eq!(report.iterations, 0);
            assert_eq!(report.cycles, 1);
            assert!(s1.bg.up.iter().all(|v| *v == 0.0));
            assert!(s1.interface_force.iter().all(|v| *v == 0.0));
            assert!((s1.time - 0.05).abs() < 1e-15);
        }
    }

    #[test]
    fn driven_cavity_converges_and_archives_force() {
        for mode in [Mode::Hybrid, Mode::FixedGrid] {
            let problem = embedded_disc_cavity(mode, &DiscCavity::default()).unwrap();
            let mut s = problem.initial_state().unwrap();
            for _ in 0..3 {
                let (next, report) = problem.step(&s).unwrap();
                assert!(
                    report.iterations > 0 && report.iterations < 12,
                    "{report:?}"
                );
                let h = &report.history;
                assert!(h.last().unwrap() < &1e-7, "{h:?}");
                s = next;
            }
            let again = problem.recompute_interface_force(&s).unwrap();
            assert_eq!(again, s.interface_force);
            assert!(s.interface_force.iter().any(|v| v.abs() > 1e-6));
        }
    }
}
