//! File outputs: time-series rows, line cuts through the fluid and legacy
//! ASCII VTK snapshots of the background (with cut-cell sub-triangulation),
//! the moving patch and the solid.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cutcell::CellKind;
use crate::error::{FsiError, Result};
use crate::fem::{inverse_map, shape_values};
use crate::geometry::{point_in_polygon, segment_crossing, vec2, Vec2};
use crate::mesh::QuadMesh;
use crate::problem::{FieldState, Geometry, Mode, Problem};

pub const SERIES_COLUMNS: [&str; 7] = ["t", "d1", "d2", "f1", "f2", "iters", "cycles"];

/// One row of the per-step time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    /// Probe displacement.
    pub d: [f64; 2],
    /// Resultant of the solid-side interface force.
    pub f: [f64; 2],
    pub iterations: usize,
    pub cycles: usize,
}

impl SeriesRow {
    pub fn of(state: &FieldState, probe: Option<usize>, iterations: usize, cycles: usize) -> Self {
        let d = match (&state.solid, probe) {
            (Some(s), Some(n)) => [s.d[2 * n], s.d[2 * n + 1]],
            _ => [0.0; 2],
        };
        let mut f = [0.0; 2];
        for (k, v) in state.interface_force.iter().enumerate() {
            f[k % 2] += v;
        }
        SeriesRow {
            t: state.time,
            d,
            f,
            iterations,
            cycles,
        }
    }
}

pub fn series_csv(rows: &[SeriesRow]) -> String {
    let mut s = SERIES_COLUMNS.join(",");
    s.push_str("\r\n");
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}\r\n",
            r.t, r.d[0], r.d[1], r.f[0], r.f[1], r.iterations, r.cycles
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Patch,
    Background,
    /// Solid or otherwise non-fluid; values are NaN.
    Void,
}

impl Region {
    fn name(self) -> &'static str {
        match self {
            Region::Patch => "patch",
            Region::Background => "background",
            Region::Void => "void",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSample {
    /// Arc length from the start point.
    pub s: f64,
    pub x: Vec2,
    pub u: Vec2,
    pub p: f64,
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfaceKind {
    FluidFluid,
    FluidSolid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub s: f64,
    pub x: Vec2,
    pub kind: InterfaceKind,
    /// Patch minus background velocity at a fluid–fluid crossing.
    pub jump: Option<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineCut {
    pub t: f64,
    pub samples: Vec<LineSample>,
    pub crossings: Vec<Crossing>,
}

/// Patch placement and background cut of a stored time level.
pub fn state_geometry(problem: &Problem, state: &FieldState) -> Result<Geometry> {
    let d = state.solid.as_ref().map_or(Vec::new(), |s| s.d.clone());
    problem.geometry(&d, &state.grid_disp, 1.0)
}

/// Velocity and pressure interpolated at `x` in the mesh with nodes `coords`.
fn interpolate(
    mesh: &QuadMesh,
    coords: &[Vec2],
    up: &[f64],
    e: usize,
    x: &Vec2,
) -> Option<(Vec2, f64)> {
    let el = mesh.elements[e];
    let poly = el.map(|n| coords[n]);
    let xi = inverse_map(&poly, x)?;
    let n = shape_values(xi);
    let mut v = [0.0; 3];
    for (a, &node) in el.iter().enumerate() {
        for c in 0..3 {
            v[c] += n[a] * up[3 * node + c];
        }
    }
    Some((vec2(v[0], v[1]), v[2]))
}

fn locate_in(mesh: &QuadMesh, coords: &[Vec2], x: &Vec2) -> Option<usize> {
    (0..mesh.num_elements()).find(|&e| {
        let poly = mesh.elements[e].map(|n| coords[n]);
        let lo = poly
            .iter()
            .fold(vec2(f64::INFINITY, f64::INFINITY), |m, p| m.inf(p));
        let hi = poly
            .iter()
            .fold(vec2(f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| m.sup(p));
        let tol = 1e-12 * (hi - lo).norm();
        if x.x < lo.x - tol || x.x > hi.x + tol || x.y < lo.y - tol || x.y > hi.y + tol {
            return false;
        }
        inverse_map(&poly, x)
            .is_some_and(|xi| xi[0].abs() <= 1.0 + 1e-10 && xi[1].abs() <= 1.0 + 1e-10)
    })
}

struct Sampler<'a> {
    problem: &'a Problem,
    state: &'a FieldState,
    geom: Geometry,
}

impl Sampler<'_> {
    fn patch_value(&self, x: &Vec2) -> Option<(Vec2, f64)> {
        let (p, f) = (self.problem.patch.as_ref()?, self.state.patch.as_ref()?);
        let e = locate_in(&p.mesh, &self.geom.patch_coords, x)?;
        interpolate(&p.mesh, &self.geom.patch_coords, &f.up, e, x)
    }

    fn background_value(&self, x: &Vec2) -> Option<(Vec2, f64)> {
        let bg = &self.problem.background;
        let e = locate_in(bg, &bg.nodes, x)?;
        if self.geom.cut.kind(e) == CellKind::Void {
            return None;
        }
        interpolate(bg, &bg.nodes, &self.state.bg.up, e, x)
    }

    fn sample(&self, x: &Vec2) -> (Vec2, f64, Region) {
        if let Some((u, p)) = self.patch_value(x) {
            return (u, p, Region::Patch);
        }
        let inside_cutter =
            self.geom.cut.cutter.len() > 2 && point_in_polygon(x, &self.geom.cut.cutter);
        match self.background_value(x) {
            Some((u, p)) if !inside_cutter => (u, p, Region::Background),
            _ => (vec2(f64::NAN, f64::NAN), f64::NAN, Region::Void),
        }
    }

    fn solid_boundary(&self) -> Vec<Vec2> {
        self.problem.solid.as_ref().map_or(Vec::new(), |s| {
            s.boundary_loop
                .iter()
                .map(|&n| self.geom.solid_coords[n])
                .collect()
        })
    }
}

fn crossings_with(
    p0: &Vec2,
    p1: &Vec2,
    poly: &[Vec2],
    kind: InterfaceKind,
    out: &mut Vec<(f64, Vec2, InterfaceKind)>,
) {
    let n = poly.len();
    for i in 0..n {
        if let Some((t, _)) = segment_crossing(p0, p1, &poly[i], &poly[(i + 1) % n]) {
            out.push((t, p0 + (p1 - p0) * t, kind));
        }
    }
}

/// Samples u and p at `n_samples` equidistant points from `p0` to `p1`. The
/// patch takes precedence where it overlaps the background; points in the
/// solid or in void cells give NaN with region `Void`.
pub fn sample_line_cut(
    problem: &Problem,
    state: &FieldState,
    p0: Vec2,
    p1: Vec2,
    n_samples: usize,
) -> Result<LineCut> {
    if n_samples < 2 {
        return Err(FsiError::Config(format!(
            "a line cut needs at least 2 samples, got {n_samples}"
        )));
    }
    let sampler = Sampler {
        problem,
        state,
        geom: state_geometry(problem, state)?,
    };
    let len = (p1 - p0).norm();
    let samples = (0..n_samples)
        .map(|i| {
            let t = i as f64 / (n_samples - 1) as f64;
            let x = p0 + (p1 - p0) * t;
            let (u, p, region) = sampler.sample(&x);
            LineSample {
                s: t * len,
                x,
                u,
                p,
                region,
            }
        })
        .collect();

    let mut raw = Vec::new();
    match problem.mode {
        Mode::Hybrid => {
            let outer: Vec<Vec2> = problem.patch.as_ref().map_or(Vec::new(), |p| {
                p.ff_loop
                    .iter()
                    .map(|&n| sampler.geom.patch_coords[n])
                    .collect()
            });
            crossings_with(&p0, &p1, &outer, InterfaceKind::FluidFluid, &mut raw);
            crossings_with(
                &p0,
                &p1,
                &sampler.solid_boundary(),
                InterfaceKind::FluidSolid,
                &mut raw,
            );
        }
        Mode::FixedGrid => crossings_with(
            &p0,
            &p1,
            &sampler.solid_boundary(),
            InterfaceKind::FluidSolid,
            &mut raw,
        ),
        Mode::SingleMesh => {}
    }
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let crossings = raw
        .into_iter()
        .map(|(t, x, kind)| {
            let jump = match kind {
                InterfaceKind::FluidFluid => {
                    match (sampler.patch_value(&x), sampler.background_value(&x)) {
                        (Some((up, _)), Some((ub, _))) => Some(up - ub),
                        _ => None,
                    }
                }
                InterfaceKind::FluidSolid => None,
            };
            Crossing {
                s: t * len,
                x,
                kind,
                jump,
            }
        })
        .collect();
    Ok(LineCut {
        t: state.time,
        samples,
        crossings,
    })
}

/// Samples u, p and the region at arbitrary points, with the same precedence
/// rules as [`sample_line_cut`].
pub fn sample_points(
    problem: &Problem,
    state: &FieldState,
    points: &[Vec2],
) -> Result<Vec<(Vec2, f64, Region)>> {
    let sampler = Sampler {
        problem,
        state,
        geom: state_geometry(problem, state)?,
    };
    Ok(points.iter().map(|x| sampler.sample(x)).collect())
}

/// L2 norms of the velocity jumps across the coupling interfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceJumps {
    /// Patch minus background velocity on the cut part of the patch boundary.
    pub fluid_fluid: f64,
    /// Fluid minus solid velocity on the fluid–solid interface.
    pub fluid_solid: f64,
}

fn nodal_velocity(up: &[f64], n: usize) -> Vec2 {
    vec2(up[3 * n], up[3 * n + 1])
}

/// Velocity jump norms of a state: fluid–fluid on the background interface
/// segments (hybrid), fluid–solid on the patch interface facets (hybrid) or on
/// the background interface segments (fixed grid).
pub fn interface_jumps(problem: &Problem, state: &FieldState) -> Result<InterfaceJumps> {
    let sampler = Sampler {
        problem,
        state,
        geom: state_geometry(problem, state)?,
    };
    let geom = &sampler.geom;
    let bg = &problem.background;
    let background_at = |e: usize, xi: [f64; 2]| -> Vec2 {
        let n = shape_values(xi);
        bg.elements[e]
            .iter()
            .enumerate()
            .map(|(a, &node)| nodal_velocity(&state.bg.up, node) * n[a])
            .sum()
    };
    let solid_v = |n: usize| -> Vec2 {
        state
            .solid
            .as_ref()
            .map_or(Vec2::zeros(), |s| vec2(s.v[2 * n], s.v[2 * n + 1]))
    };
    let mut ff = 0.0;
    let mut fs = 0.0;
    match problem.mode {
        Mode::Hybrid => {
            for seg in &geom.cut.segments {
                for q in &seg.points {
                    if let Some((up, _)) = sampler.patch_value(&q.x) {
                        ff += q.w * (up - background_at(seg.element, q.xi)).norm_squared();
                    }
                }
            }
            if let (Some(p), Some(f)) = (&problem.patch, &state.patch) {
                let gauss = crate::fem::gauss_1d(2);
                for &fi in &p.fsi_facets {
                    let [a, b] = p.mesh.boundary_facets[fi].nodes;
                    let len = (geom.patch_coords[b] - geom.patch_coords[a]).norm();
                    let diff = |n: usize| nodal_velocity(&f.up, n) - solid_v(p.solid_match[&n]);
                    let (da, db) = (diff(a), diff(b));
                    for &(g, w) in &gauss {
                        let t = 0.5 * (g + 1.0);
                        fs += 0.5 * w * len * (da * (1.0 - t) + db * t).norm_squared();
                    }
                }
            }
        }
        Mode::FixedGrid => {
            let s = problem.solid.as_ref().expect("fixed-grid mode has a solid");
            let n = s.boundary_loop.len();
            for seg in &geom.cut.segments {
                let (a, b) = (
                    s.boundary_loop[seg.cutter_edge],
                    s.boundary_loop[(seg.cutter_edge + 1) % n],
                );
                let (xa, xb) = (geom.solid_coords[a], geom.solid_coords[b]);
                for q in &seg.points {
                    let t = ((q.x - xa).dot(&(xb - xa)) / (xb - xa).norm_squared()).clamp(0.0, 1.0);
                    let vs = solid_v(a) * (1.0 - t) + solid_v(b) * t;
                    fs += q.w * (background_at(seg.element, q.xi) - vs).norm_squared();
                }
            }
        }
        Mode::SingleMesh => {}
    }
    Ok(InterfaceJumps {
        fluid_fluid: ff.sqrt(),
        fluid_solid: fs.sqrt(),
    })
}

impl LineCut {
    pub fn samples_csv(&self) -> String {
        let mut s = String::from("s,x1,x2,u1,u2,p,region\r\n");
        for q in &self.samples {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{}\r\n",
                q.s,
                q.x.x,
                q.x.y,
                q.u.x,
                q.u.y,
                q.p,
                q.region.name()
            );
        }
        s
    }

    pub fn crossings_csv(&self) -> String {
        let mut s = String::from("s,x1,x2,interface,du1,du2\r\n");
        for c in &self.crossings {
            let kind = match c.kind {
                InterfaceKind::FluidFluid => "fluid_fluid",
                InterfaceKind::FluidSolid => "fluid_solid",
            };
            let j = c.jump.unwrap_or(vec2(f64::NAN, f64::NAN));
            let _ = write!(
                s,
                "{},{},{},{},{},{}\r\n",
                c.s, c.x.x, c.x.y, kind, j.x, j.y
            );
        }
        s
    }

    /// Largest patch-minus-background velocity jump over fluid–fluid crossings.
    pub fn max_interface_jump(&self) -> f64 {
        self.crossings
            .iter()
            .filter_map(|c| c.jump)
            .map(|j| j.norm())
            .fold(0.0, f64::max)
    }
}

/// Legacy VTK unstructured grid under construction.
#[derive(Default)]
struct VtkGrid {
    points: Vec<Vec2>,
    cells: Vec<(u8, Vec<usize>)>,
    scalars: Vec<(String, Vec<f64>)>,
    vectors: Vec<(String, Vec<Vec2>)>,
    cell_ints: Vec<(String, Vec<i64>)>,
}

const VTK_TRIANGLE: u8 = 5;
const VTK_QUAD: u8 = 9;

impl VtkGrid {
    fn render(&self, title: &str) -> String {
        let mut s = String::new();
        let _ = write!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {} double\n", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{} {} 0", p.x, p.y);
        }
        let size: usize = self.cells.iter().map(|(_, ids)| ids.len() + 1).sum();
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), size);
        for (_, ids) in &self.cells {
            let _ = write!(s, "{}", ids.len());
            for i in ids {
                let _ = write!(s, " {i}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cells.len());
        for (ty, _) in &self.cells {
            let _ = writeln!(s, "{ty}");
        }
        if !self.cell_ints.is_empty() {
            let _ = writeln!(s, "CELL_DATA {}", self.cells.len());
            for (name, vals) in &self.cell_ints {
                let _ = writeln!(s, "SCALARS {name} int 1\nLOOKUP_TABLE default");
                for v in vals {
                    let _ = writeln!(s, "{v}");
                }
            }
        }
        if !self.scalars.is_empty() || !self.vectors.is_empty() {
            let _ = writeln!(s, "POINT_DATA {}", self.points.len());
            for (name, vals) in &self.scalars {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for v in vals {
                    let _ = writeln!(s, "{v}");
                }
            }
            for (name, vals) in &self.vectors {
                let _ = writeln!(s, "VECTORS {name} double");
                for v in vals {
                    let _ = writeln!(s, "{} {} 0", v.x, v.y);
                }
            }
        }
        s
    }
}

fn fluid_grid(mesh: &QuadMesh, coords: &[Vec2], up: &[f64]) -> VtkGrid {
    let n = mesh.num_nodes();
    VtkGrid {
        points: coords.to_vec(),
        cells: mesh
            .elements
            .iter()
            .map(|el| (VTK_QUAD, el.to_vec()))
            .collect(),
        scalars: vec![("p".into(), (0..n).map(|i| up[3 * i + 2]).collect())],
        vectors: vec![(
            "u".into(),
            (0..n).map(|i| vec2(up[3 * i], up[3 * i + 1])).collect(),
        )],
        cell_ints: Vec::new(),
    }
}

/// Background fluid: active elements as quads, cut elements as the triangles
/// of their physical part with interpolated fields; void elements omitted.
fn background_vtk(problem: &Problem, state: &FieldState, geom: &Geometry) -> String {
    let mesh = &problem.background;
    let up = &state.bg.up;
    let mut g = fluid_grid(mesh, &mesh.nodes, up);
    g.cells.clear();
    let mut kind = Vec::new();
    let mut element = Vec::new();
    for (e, el) in mesh.elements.iter().enumerate() {
        match geom.cut.kind(e) {
            CellKind::Active => {
                g.cells.push((VTK_QUAD, el.to_vec()));
                kind.push(0);
                element.push(e as i64);
            }
            CellKind::Cut => {
                let Some(cell) = geom.cut.cut_cells.get(&e) else {
                    continue;
                };
                for tri in &cell.triangles {
                    let mut ids = Vec::with_capacity(3);
                    for x in tri {
                        let (u, p) = interpolate(mesh, &mesh.nodes, up, e, x)
                            .unwrap_or((vec2(f64::NAN, f64::NAN), f64::NAN));
                        ids.push(g.points.len());
                        g.points.push(*x);
                        g.scalars[0].1.push(p);
                        g.vectors[0].1.push(u);
                    }
                    g.cells.push((VTK_TRIANGLE, ids));
                    kind.push(1);
                    element.push(e as i64);
                }
            }
            CellKind::Void => {}
        }
    }
    g.cell_ints = vec![("cut".into(), kind), ("element".into(), element)];
    g.render("background fluid")
}

fn patch_vtk(problem: &Problem, state: &FieldState, geom: &Geometry) -> Option<String> {
    let (p, f) = (problem.patch.as_ref()?, state.patch.as_ref()?);
    let mut g = fluid_grid(&p.mesh, &geom.patch_coords, &f.up);
    let n = p.mesh.num_nodes();
    let at = |v: &[f64], i: usize| {
        if v.len() >= 2 * n {
            vec2(v[2 * i], v[2 * i + 1])
        } else {
            Vec2::zeros()
        }
    };
    g.vectors.push((
        "grid_displacement".into(),
        (0..n).map(|i| at(&state.grid_disp, i)).collect(),
    ));
    g.vectors.push((
        "grid_velocity".into(),
        (0..n).map(|i| at(&state.grid_vel, i)).collect(),
    ));
    Some(g.render("fluid patch"))
}

fn solid_vtk(problem: &Problem, state: &FieldState, geom: &Geometry) -> Option<String> {
    let (s, st) = (problem.solid.as_ref()?, state.solid.as_ref()?);
    let n = s.mesh.num_nodes();
    let vecs = |v: &[f64]| (0..n).map(|i| vec2(v[2 * i], v[2 * i + 1])).collect();
    let g = VtkGrid {
        points: geom.solid_coords.clone(),
        cells: s
            .mesh
            .elements
            .iter()
            .map(|el| (VTK_QUAD, el.to_vec()))
            .collect(),
        scalars: Vec::new(),
        vectors: vec![
            ("displacement".into(), vecs(&st.d)),
            ("velocity".into(), vecs(&st.v)),
            ("interface_force".into(), vecs(&state.interface_force)),
        ],
        cell_ints: Vec::new(),
    };
    Some(g.render("solid"))
}

/// Writes `<stem>_background.vtk` and, where present, `<stem>_patch.vtk` and
/// `<stem>_solid.vtk` into `dir`; returns the file names written.
pub fn write_snapshot(
    problem: &Problem,
    state: &FieldState,
    dir: &Path,
    stem: &str,
) -> Result<Vec<String>> {
    let geom = state_geometry(problem, state)?;
    let parts = [
        ("background", Some(background_vtk(problem, state, &geom))),
        ("patch", patch_vtk(problem, state, &geom)),
        ("solid", solid_vtk(problem, state, &geom)),
    ];
    let mut names = Vec::new();
    for (part, text) in parts {
        if let Some(text) = text {
            let name = format!("{stem}_{part}.vtk");
            write_file(&dir.join(&name), text.as_bytes())?;
            names.push(name);
        }
    }
    Ok(names)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::{Field, FluidDirichlet, FluidMesh};
    use crate::fluid::FluidParams;
    use crate::mesh::generate_structured_rect;
    use crate::problem::ProblemDefinition;

    fn single_mesh_state(f: impl Fn(Vec2) -> [f64; 3]) -> (Problem, FieldState) {
        let bg = generate_structured_rect(vec2(0.0, 0.0), vec2(1.0, 1.0), 4, 4).unwrap();
        let mut def = ProblemDefinition::new(
            Mode::SingleMesh,
            bg.clone(),
            FluidParams::new(1.0, 1.0, 1.0, 0.1),
        );
        def.fluid_bcs.push(FluidDirichlet {
            mesh: FluidMesh::Background,
            nodes: vec![0],
            component: 2,
            value: Field::constant(0.0),
        });
        let problem = Problem::new(def).unwrap();
        let mut state = problem.initial_state().unwrap();
        for (i, x) in bg.nodes.iter().enumerate() {
            state.bg.up[3 * i..3 * i + 3].copy_from_slice(&f(*x));
        }
        (problem, state)
    }

    #[test]
    fn constant_field_gives_constant_samples() {
        let (problem, state) = single_mesh_state(|_| [1.5, -0.5, 2.0]);
        let cut = sample_line_cut(&problem, &state, vec2(0.0, 0.1), vec2(1.0, 0.9), 17).unwrap();
        assert_eq!(cut.samples.len(), 17);
        for q in &cut.samples {
            assert_eq!(q.region, Region::Background);
            assert!((q.u - vec2(1.5, -0.5)).norm() < 1e-14 && (q.p - 2.0).abs() < 1e-14);
        }
        assert!(cut.crossings.is_empty());
    }

    #[test]
    fn bilinear_field_is_reproduced() {
        let (problem, state) = single_mesh_state(|x| [x.y, 0.0, x.x * x.y]);
        let cut = sample_line_cut(&problem, &state, vec2(0.3, 0.0), vec2(0.3, 1.0), 11).unwrap();
        for q in &cut.samples {
            assert!((q.u.x - q.x.y).abs() < 1e-13);
        }
        let text = cut.samples_csv();
        assert_eq!(text.lines().count(), 12);
        assert!(text.starts_with("s,x1,x2,u1,u2,p,region\r\n"));
    }

    #[test]
    fn vtk_counts_are_consistent() {
        let (problem, state) = single_mesh_state(|_| [0.0; 3]);
        let geom = state_geometry(&problem, &state).unwrap();
        let text = background_vtk(&problem, &state, &geom);
        assert!(text.contains("POINTS 25 double"));
        assert!(text.contains("CELLS 16 80"));
        assert!(text.contains("CELL_TYPES 16"));
    }

    #[test]
    fn series_has_header_and_rows() {
        let rows = [SeriesRow {
            t: 0.5,
            d: [1.0, 2.0],
            f: [3.0, 4.0],
            iterations: 3,
            cycles: 1,
        }];
        assert_eq!(
            series_csv(&rows),
            "t,d1,d2,f1,f2,iters,cycles\r\n0.5,1,2,3,4,3,1\r\n"
        );
    }
}
