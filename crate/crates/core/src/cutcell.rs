//! Intersection of a fixed background mesh with a closed cutter polygon:
//! element classification, cut-cell quadrature, interface segments and the
//! ghost-penalty facet set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FsiError, Result};
use crate::fem::{gauss_1d, inverse_map};
use crate::geometry::{
    clip_half_plane, cross, orient, point_in_polygon, point_segment_distance, signed_area, vec2,
    BoundingBox, Vec2,
};
use crate::mesh::QuadMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    Active,
    Cut,
    Void,
}

/// Quadrature point in a cut element: physical position, reference
/// coordinates in the owning element and physical weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadPoint {
    pub x: Vec2,
    pub xi: [f64; 2],
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutCell {
    /// Polygons partitioning the physical part of the element.
    pub polygons: Vec<Vec<Vec2>>,
    pub triangles: Vec<[Vec2; 3]>,
    pub points: Vec<QuadPoint>,
    pub area: f64,
}

/// Gauss point on an interface sub-segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentPoint {
    pub x: Vec2,
    /// Reference coordinates in the owning background element.
    pub xi: [f64; 2],
    /// Parameter along the originating cutter edge, in [0, 1].
    pub s: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSegment {
    pub element: usize,
    pub cutter_edge: usize,
    /// Caller-supplied id of the facet the cutter edge came from.
    pub source: usize,
    pub p0: Vec2,
    pub p1: Vec2,
    /// Unit normal pointing from the background fluid into the cutter interior.
    pub normal: Vec2,
    pub points: Vec<SegmentPoint>,
}

impl InterfaceSegment {
    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutOptions {
    /// Triangle rule order for cut-cell volume quadrature (1, 2 or ≥3).
    pub volume_order: usize,
    /// Number of Gauss points per interface sub-segment.
    pub segment_points: usize,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions {
            volume_order: 2,
            segment_points: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutState {
    pub kinds: Vec<CellKind>,
    pub cut_cells: BTreeMap<usize, CutCell>,
    pub segments: Vec<InterfaceSegment>,
    pub gp_facets: Vec<usize>,
    pub active_nodes: Vec<bool>,
    /// The cutter actually used, after degeneracy perturbation.
    pub cutter: Vec<Vec2>,
    pub perturbed_vertices: usize,
    pub dropped_slivers: usize,
}

impl CutState {
    /// State of an uncut mesh: everything active, no interface.
    pub fn uncut(mesh: &QuadMesh) -> Self {
        CutState {
            kinds: vec![CellKind::Active; mesh.num_elements()],
            cut_cells: BTreeMap::new(),
            segments: Vec::new(),
            gp_facets: Vec::new(),
            active_nodes: vec![true; mesh.num_nodes()],
            cutter: Vec::new(),
            perturbed_vertices: 0,
            dropped_slivers: 0,
        }
    }

    pub fn kind(&self, e: usize) -> CellKind {
        self.kinds[e]
    }

    /// Physical area of element `e` (full area if active, zero if void).
    pub fn physical_area(&self, mesh: &QuadMesh, e: usize) -> f64 {
        match self.kinds[e] {
            CellKind::Active => mesh.element_area(e),
            CellKind::Void => 0.0,
            CellKind::Cut => self.cut_cells.get(&e).map_or(0.0, |c| c.area),
        }
    }

    pub fn same_active_set(&self, other: &CutState) -> bool {
        self.active_nodes == other.active_nodes
    }
}

/// Outcome of subtracting the cutter from one convex element polygon.
#[derive(Debug, Clone, PartialEq)]
pub enum Difference {
    Outside,
    Inside,
    Pieces(Vec<Vec<Vec2>>),
}

#[derive(Debug, Clone, Copy)]
struct Crossing {
    e_edge: usize,
    t: f64,
    c_edge: usize,
    u: f64,
    p: Vec2,
    entering: bool,
}

fn lex_less(a: &Vec2, b: &Vec2) -> bool {
    a.x < b.x || (a.x == b.x && a.y < b.y)
}

/// Intersection point of two crossing segments, computed from a canonical
/// ordering of the endpoints so that both elements sharing a grid edge obtain
/// bitwise identical points.
fn canonical_point(a0: &Vec2, a1: &Vec2, b0: &Vec2, b1: &Vec2) -> Vec2 {
    let (mut p0, mut p1) = if lex_less(a1, a0) {
        (*a1, *a0)
    } else {
        (*a0, *a1)
    };
    let (mut q0, mut q1) = if lex_less(b1, b0) {
        (*b1, *b0)
    } else {
        (*b0, *b1)
    };
    if lex_less(&q0, &p0) || (q0 == p0 && lex_less(&q1, &p1)) {
        std::mem::swap(&mut p0, &mut q0);
        std::mem::swap(&mut p1, &mut q1);
    }
    let o3 = orient(&q0, &q1, &p0);
    let o4 = orient(&q0, &q1, &p1);
    let t = o3 / (o3 - o4);
    p0 + (p1 - p0) * t
}

/// Subtracts the CCW simple polygon `cutter` from the convex CCW polygon `elem`.
/// Boundaries are assumed to be in general position.
pub fn clip_element(elem: &[Vec2], cutter: &[Vec2]) -> Result<Difference> {
    let cut_bb = BoundingBox::of(cutter);
    let elem_bb = BoundingBox::of(elem);
    if !cut_bb.overlaps(&elem_bb) {
        return Ok(Difference::Outside);
    }
    let nc = cutter.len();
    let candidates: Vec<usize> = (0..nc)
        .filter(|&j| BoundingBox::of(&[cutter[j], cutter[(j + 1) % nc]]).overlaps(&elem_bb))
        .collect();
    difference_rec(elem, cutter, &candidates, 0)
}

fn difference_rec(
    elem: &[Vec2],
    cutter: &[Vec2],
    candidates: &[usize],
    depth: usize,
) -> Result<Difference> {
    let m = elem.len();
    let nc = cutter.len();
    let mut xs: Vec<Crossing> = Vec::new();
    for i in 0..m {
        let (e0, e1) = (&elem[i], &elem[(i + 1) % m]);
        for &j in candidates {
            let (c0, c1) = (&cutter[j], &cutter[(j + 1) % nc]);
            if let Some((t, u)) = crate::geometry::segment_crossing(e0, e1, c0, c1) {
                let entering = cross(&(c1 - c0), &(e1 - e0)) > 0.0;
                xs.push(Crossing {
                    e_edge: i,
                    t,
                    c_edge: j,
                    u,
                    p: canonical_point(e0, e1, c0, c1),
                    entering,
                });
            }
        }
    }

    if xs.is_empty() {
        let inside_elem = |p: &Vec2| (0..m).all(|i| orient(&elem[i], &elem[(i + 1) % m], p) > 0.0);
        if inside_elem(&cutter[0]) {
            if depth > 8 {
                return Err(FsiError::Geometry(
                    "cutter-inside-element split did not terminate".into(),
                ));
            }
            // The cutter is a hole in the element: split by a vertical line and recurse.
            let mut vx: Vec<f64> = cutter.iter().map(|p| p.x).collect();
            vx.sort_by(|a, b| a.total_cmp(b));
            vx.dedup();
            if vx.len() < 2 {
                return Err(FsiError::Geometry("degenerate cutter polygon".into()));
            }
            let k = (0..vx.len() - 1)
                .max_by(|&a, &b| (vx[a + 1] - vx[a]).total_cmp(&(vx[b + 1] - vx[b])))
                .unwrap_or(0);
            let xs_line = 0.5 * (vx[k] + vx[k + 1]);
            let a = vec2(xs_line, 0.0);
            let b = vec2(xs_line, 1.0);
            let mut pieces = Vec::new();
            for half in [clip_half_plane(elem, &a, &b), clip_half_plane(elem, &b, &a)] {
                if half.len() < 3 {
                    continue;
                }
                match difference_rec(&half, cutter, candidates, depth + 1)? {
                    Difference::Outside => pieces.push(half),
                    Difference::Inside => {}
                    Difference::Pieces(p) => pieces.extend(p),
                }
            }
            return Ok(Difference::Pieces(pieces));
        }
        let c = elem.iter().fold(Vec2::zeros(), |s, p| s + p) / m as f64;
        return Ok(if point_in_polygon(&c, cutter) {
            Difference::Inside
        } else {
            Difference::Outside
        });
    }

    let n = xs.len();
    if !n.is_multiple_of(2) {
        return Err(FsiError::Geometry(format!(
            "odd number ({n}) of boundary crossings"
        )));
    }
    let mut e_order: Vec<usize> = (0..n).collect();
    e_order.sort_by(|&a, &b| {
        (xs[a].e_edge, xs[a].t)
            .partial_cmp(&(xs[b].e_edge, xs[b].t))
            .unwrap()
    });
    let mut c_order: Vec<usize> = (0..n).collect();
    c_order.sort_by(|&a, &b| {
        (xs[a].c_edge, xs[a].u)
            .partial_cmp(&(xs[b].c_edge, xs[b].u))
            .unwrap()
    });
    let mut pos_e = vec![0; n];
    let mut pos_c = vec![0; n];
    for (k, &i) in e_order.iter().enumerate() {
        pos_e[i] = k;
    }
    for (k, &i) in c_order.iter().enumerate() {
        pos_c[i] = k;
    }

    let mut visited = vec![false; n];
    let mut pieces = Vec::new();
    for &start in &e_order {
        if xs[start].entering || visited[start] {
            continue;
        }
        let mut poly = Vec::new();
        let mut cur = start;
        let mut guard = 0;
        loop {
            guard += 1;
            if guard > n {
                return Err(FsiError::Geometry("polygon traversal did not close".into()));
            }
            visited[cur] = true;
            poly.push(xs[cur].p);
            let nxt = e_order[(pos_e[cur] + 1) % n];
            let (i, k) = (xs[cur].e_edge, xs[nxt].e_edge);
            let same_run = k == i && xs[nxt].t > xs[cur].t;
            if !same_run {
                let mut steps = (k + m - i) % m;
                if steps == 0 {
                    steps = m;
                }
                for s in 1..=steps {
                    poly.push(elem[(i + s) % m]);
                }
            }
            if !xs[nxt].entering {
                return Err(FsiError::Geometry(
                    "crossing classification inconsistent".into(),
                ));
            }
            visited[nxt] = true;
            poly.push(xs[nxt].p);
            let prv = c_order[(pos_c[nxt] + n - 1) % n];
            let (j, l) = (xs[nxt].c_edge, xs[prv].c_edge);
            let same_run = l == j && xs[prv].u < xs[nxt].u;
            if !same_run {
                let mut steps = (j + nc - l) % nc;
                if steps == 0 {
                    steps = nc;
                }
                for s in 1..=steps {
                    poly.push(cutter[(j + nc + 1 - s) % nc]);
                }
            }
            if prv == start {
                break;
            }
            if xs[prv].entering || visited[prv] {
                return Err(FsiError::Geometry(
                    "crossing classification inconsistent".into(),
                ));
            }
            cur = prv;
        }
        pieces.push(poly);
    }
    Ok(Difference::Pieces(pieces))
}

/// Removes repeated and exactly collinear consecutive vertices.
fn simplify(poly: &[Vec2], tol: f64) -> Vec<Vec2> {
    let mut p: Vec<Vec2> = Vec::with_capacity(poly.len());
    for v in poly {
        if p.last().is_none_or(|l| (l - v).norm() > tol) {
            p.push(*v);
        }
    }
    while p.len() > 1 && (p[0] - p[p.len() - 1]).norm() <= tol {
        p.pop();
    }
    let mut changed = true;
    while changed && p.len() > 3 {
        changed = false;
        let n = p.len();
        for i in 0..n {
            let a = p[(i + n - 1) % n];
            let b = p[i];
            let c = p[(i + 1) % n];
            let scale = (c - a).norm().max(tol);
            if orient(&a, &b, &c).abs() <= tol * scale * 1e-2 && (b - a).dot(&(c - b)) > 0.0 {
                p.remove(i);
                changed = true;
                break;
            }
        }
    }
    p
}

/// Ear-clipping triangulation of a simple polygon of either orientation.
/// Falls back to a fan when no ear is found.
pub fn triangulate(poly: &[Vec2]) -> Vec<[Vec2; 3]> {
    let mut idx: Vec<usize> = (0..poly.len()).collect();
    if signed_area(poly) < 0.0 {
        idx.reverse();
    }
    let mut tris = Vec::with_capacity(poly.len().saturating_sub(2));
    while idx.len() > 3 {
        let n = idx.len();
        let mut found = None;
        for i in 0..n {
            let (a, b, c) = (
                poly[idx[(i + n - 1) % n]],
                poly[idx[i]],
                poly[idx[(i + 1) % n]],
            );
            if orient(&a, &b, &c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&k| {
                let p = poly[k];
                if p == a || p == b || p == c {
                    return false;
                }
                orient(&a, &b, &p) >= 0.0 && orient(&b, &c, &p) >= 0.0 && orient(&c, &a, &p) >= 0.0
            });
            if !blocked {
                found = Some(i);
                break;
            }
        }
        match found {
            Some(i) => {
                let n = idx.len();
                tris.push([
                    poly[idx[(i + n - 1) % n]],
                    poly[idx[i]],
                    poly[idx[(i + 1) % n]],
                ]);
                idx.remove(i);
            }
            None => {
                log::debug!("ear clipping stalled on {} vertices, using fan", idx.len());
                for k in 1..idx.len() - 1 {
                    tris.push([poly[idx[0]], poly[idx[k]], poly[idx[k + 1]]]);
                }
                return tris;
            }
        }
    }
    if idx.len() == 3 {
        tris.push([poly[idx[0]], poly[idx[1]], poly[idx[2]]]);
    }
    tris
}

/// Barycentric points and weights (summing to 1) of a triangle rule.
pub fn triangle_rule(order: usize) -> Vec<([f64; 3], f64)> {
    match order {
        0 | 1 => vec![([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)],
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            vec![
                ([b, a, a], 1.0 / 3.0),
                ([a, b, a], 1.0 / 3.0),
                ([a, a, b], 1.0 / 3.0),
            ]
        }
        _ => {
            let a1 = 0.445_948_490_915_965;
            let w1 = 0.223_381_589_678_011;
            let a2 = 0.091_576_213_509_771;
            let w2 = 0.109_951_743_655_322;
            let b1 = 1.0 - 2.0 * a1;
            let b2 = 1.0 - 2.0 * a2;
            vec![
                ([b1, a1, a1], w1),
                ([a1, b1, a1], w1),
                ([a1, a1, b1], w1),
                ([b2, a2, a2], w2),
                ([a2, b2, a2], w2),
                ([a2, a2, b2], w2),
            ]
        }
    }
}

/// Triangulates the polygons and places a triangle rule of `order` on each
/// triangle. Returns physical (point, weight) pairs.
pub fn triangulate_and_weight(polygons: &[Vec<Vec2>], order: usize) -> Vec<(Vec2, f64)> {
    let rule = triangle_rule(order);
    let mut out = Vec::new();
    for poly in polygons {
        for t in triangulate(poly) {
            let area = 0.5 * orient(&t[0], &t[1], &t[2]);
            for (bary, w) in &rule {
                let x = t[0] * bary[0] + t[1] * bary[1] + t[2] * bary[2];
                out.push((x, w * area));
            }
        }
    }
    out
}

fn validate_cutter(cutter: &[Vec2], h: f64) -> Result<Vec<Vec2>> {
    let c = crate::geometry::open_polyline(cutter);
    if c.len() < 3 {
        return Err(FsiError::Geometry(format!(
            "cutter needs at least 3 vertices, got {}",
            c.len()
        )));
    }
    for i in 0..c.len() {
        let len = (c[(i + 1) % c.len()] - c[i]).norm();
        if len <= 1e-12 * h {
            return Err(FsiError::Geometry(format!(
                "cutter edge {i} has zero length"
            )));
        }
    }
    if signed_area(&c) <= 0.0 {
        return Err(FsiError::Geometry(
            "cutter polygon must be counterclockwise".into(),
        ));
    }
    Ok(c)
}

fn outward_edge_normal(a: &Vec2, b: &Vec2) -> Vec2 {
    let d = b - a;
    vec2(d.y, -d.x) / d.norm()
}

/// Shifts cutter vertices that nearly touch background nodes or edges, and
/// cutter edges that nearly touch background nodes, along the local outward
/// normal. Returns the number of vertex shifts.
fn perturb_cutter(mesh: &QuadMesh, cutter: &mut [Vec2], h: f64) -> usize {
    let tol = 1e-12 * h;
    let shift = 1e-10 * h;
    let n = cutter.len();
    let mut edges: Vec<[usize; 2]> = mesh.interior_facets.iter().map(|f| f.nodes).collect();
    edges.extend(mesh.boundary_facets.iter().map(|f| f.nodes));
    let mut total = 0;
    for _ in 0..20 {
        let mut moved = 0;
        for i in 0..n {
            let v = cutter[i];
            let vb = BoundingBox::of(&[v]).inflate(tol);
            let near = edges.iter().find(|e| {
                let (a, b) = (mesh.nodes[e[0]], mesh.nodes[e[1]]);
                BoundingBox::of(&[a, b]).overlaps(&vb) && point_segment_distance(&v, &a, &b) <= tol
            });
            if let Some(e) = near {
                let prev = cutter[(i + n - 1) % n];
                let next = cutter[(i + 1) % n];
                let out = outward_edge_normal(&prev, &v) + outward_edge_normal(&v, &next);
                // move off the grid edge, towards the cutter exterior when possible
                let mut dir = outward_edge_normal(&mesh.nodes[e[0]], &mesh.nodes[e[1]]);
                if dir.dot(&out) < 0.0 {
                    dir = -dir;
                }
                cutter[i] += dir * shift;
                moved += 1;
            }
        }
        for i in 0..n {
            let (a, b) = (cutter[i], cutter[(i + 1) % n]);
            let eb = BoundingBox::of(&[a, b]).inflate(tol);
            let near = mesh
                .nodes
                .iter()
                .any(|p| eb.contains(p) && point_segment_distance(p, &a, &b) <= tol);
            if near {
                let nrm = outward_edge_normal(&a, &b) * shift;
                cutter[i] += nrm;
                cutter[(i + 1) % n] += nrm;
                moved += 2;
            }
        }
        total += moved;
        if moved == 0 {
            break;
        }
    }
    if total > 0 {
        log::debug!("cutter perturbed at {total} vertex positions by {shift:e}");
    }
    total
}

/// Smallest element diameter, used as the length scale of all geometric tolerances.
pub fn mesh_length_scale(mesh: &QuadMesh) -> f64 {
    (0..mesh.num_elements())
        .map(|e| mesh.element_diameter(e))
        .fold(f64::INFINITY, f64::min)
}

/// Clips each cutter edge against every background element (Cyrus–Beck) and
/// places Gauss points on the resulting sub-segments.
pub fn interface_segments(
    mesh: &QuadMesh,
    cutter: &[Vec2],
    sources: &[usize],
    n_points: usize,
    h: f64,
) -> Result<(Vec<InterfaceSegment>, usize)> {
    let n = cutter.len();
    let gauss = gauss_1d(n_points.max(1));
    let boxes: Vec<BoundingBox> = (0..mesh.num_elements())
        .map(|e| BoundingBox::of(&mesh.element_polygon(e)))
        .collect();
    let mut out = Vec::new();
    let mut dropped = 0;
    for j in 0..n {
        let (a, b) = (cutter[j], cutter[(j + 1) % n]);
        let d = b - a;
        let len = d.norm();
        let normal = vec2(-d.y, d.x) / len;
        let sb = BoundingBox::of(&[a, b]);
        for e in 0..mesh.num_elements() {
            if !boxes[e].overlaps(&sb) {
                continue;
            }
            let poly = mesh.element_polygon(e);
            let (mut t0, mut t1) = (0.0f64, 1.0f64);
            let mut empty = false;
            for k in 0..4 {
                let (p, q) = (poly[k], poly[(k + 1) % 4]);
                // inside: orient(p, q, x) >= 0
                let f0 = orient(&p, &q, &a);
                let df = orient(&p, &q, &b) - f0;
                if df == 0.0 {
                    if f0 < 0.0 {
                        empty = true;
                        break;
                    }
                } else {
                    let t = -f0 / df;
                    if df > 0.0 {
                        t0 = t0.max(t);
                    } else {
                        t1 = t1.min(t);
                    }
                }
            }
            if empty || t1 <= t0 {
                continue;
            }
            let seg_len = (t1 - t0) * len;
            if seg_len < 1e-12 * h {
                dropped += 1;
                log::debug!("dropped interface sub-segment of length {seg_len:e} in element {e}");
                continue;
            }
            let mut points = Vec::with_capacity(gauss.len());
            for &(g, w) in &gauss {
                let s = t0 + (t1 - t0) * 0.5 * (g + 1.0);
                let x = a + d * s;
                let xi = inverse_map(&poly, &x).ok_or_else(|| {
                    FsiError::Geometry(format!(
                        "cannot invert map of element {e} at interface point"
                    ))
                })?;
                points.push(SegmentPoint {
                    x,
                    xi,
                    s,
                    w: 0.5 * w * seg_len,
                });
            }
            out.push(InterfaceSegment {
                element: e,
                cutter_edge: j,
                source: sources[j],
                p0: a + d * t0,
                p1: a + d * t1,
                normal,
                points,
            });
        }
    }
    Ok((out, dropped))
}

/// Classifies every background element against the cutter and builds all
/// cut-geometry data. `sources[j]` tags cutter edge j (defaults to j).
pub fn classify_and_cut(
    mesh: &QuadMesh,
    cutter: &[Vec2],
    sources: Option<&[usize]>,
    opts: &CutOptions,
) -> Result<CutState> {
    let h = mesh_length_scale(mesh);
    let mut cutter = validate_cutter(cutter, h)?;
    let default_sources: Vec<usize> = (0..cutter.len()).collect();
    let sources = sources.unwrap_or(&default_sources);
    if sources.len() != cutter.len() {
        return Err(FsiError::Geometry(
            "cutter source list length mismatch".into(),
        ));
    }
    let perturbed = perturb_cutter(mesh, &mut cutter, h);

    let ne = mesh.num_elements();
    let mut kinds = vec![CellKind::Active; ne];
    let mut cut_cells = BTreeMap::new();
    let mut dropped = 0;
    for e in 0..ne {
        let poly = mesh.element_polygon(e);
        match clip_element(&poly, &cutter)
            .map_err(|err| FsiError::Geometry(format!("element {e}: {err}")))?
        {
            Difference::Outside => {}
            Difference::Inside => kinds[e] = CellKind::Void,
            Difference::Pieces(pieces) => {
                kinds[e] = CellKind::Cut;
                let h_e = mesh.element_diameter(e);
                let mut kept = Vec::new();
                for p in pieces {
                    let p = simplify(&p, 1e-14 * h_e);
                    let a = signed_area(&p);
                    if p.len() < 3 || a < 1e-14 * h_e * h_e {
                        dropped += 1;
                        log::debug!("dropped sliver polygon of area {a:e} in element {e}");
                        continue;
                    }
                    kept.push(p);
                }
                let mut triangles = Vec::new();
                for p in &kept {
                    triangles.extend(triangulate(p));
                }
                let mut points = Vec::new();
                for (x, w) in triangulate_and_weight(&kept, opts.volume_order) {
                    let xi = inverse_map(&poly, &x).ok_or_else(|| {
                        FsiError::Geometry(format!("cannot invert map of element {e}"))
                    })?;
                    points.push(QuadPoint { x, xi, w });
                }
                let area = kept.iter().map(|p| signed_area(p)).sum();
                cut_cells.insert(
                    e,
                    CutCell {
                        polygons: kept,
                        triangles,
                        points,
                        area,
                    },
                );
            }
        }
    }

    let (segments, seg_dropped) =
        interface_segments(mesh, &cutter, sources, opts.segment_points, h)?;
    dropped += seg_dropped;

    let gp_facets = mesh
        .interior_facets
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            let (a, b) = (kinds[f.left], kinds[f.right]);
            (a == CellKind::Cut || b == CellKind::Cut) && a != CellKind::Void && b != CellKind::Void
        })
        .map(|(i, _)| i)
        .collect();

    let mut active_nodes = vec![false; mesh.num_nodes()];
    for (e, el) in mesh.elements.iter().enumerate() {
        if kinds[e] != CellKind::Void {
            for &n in el {
                active_nodes[n] = true;
            }
        }
    }

    Ok(CutState {
        kinds,
        cut_cells,
        segments,
        gp_facets,
        active_nodes,
        cutter,
        perturbed_vertices: perturbed,
        dropped_slivers: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_structured_rect;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2> {
        vec![vec2(x0, y0), vec2(x1, y0), vec2(x1, y1), vec2(x0, y1)]
    }

    fn area_of(d: &Difference, full: f64) -> f64 {
        match d {
            Difference::Outside => full,
            Difference::Inside => 0.0,
            Difference::Pieces(p) => p.iter().map(|q| signed_area(q)).sum(),
        }
    }

    #[test]
    fn hole_in_single_element() {
        let mesh = generate_structured_rect(vec2(0., 0.), vec2(2., 2.), 1, 1).unwrap();
        let cs = classify_and_cut(
            &mesh,
            &square(0.5, 0.5, 1.5, 1.5),
            None,
            &CutOptions::default(),
        )
        .unwrap();
        assert_eq!(cs.kinds[0], CellKind::Cut);
        assert!((cs.cut_cells[&0].area - 3.0).abs() < 1e-12);
        let wsum: f64 = cs.cut_cells[&0].points.iter().map(|p| p.w).sum();
        assert!((wsum - 3.0).abs() < 1e-12);
        assert_eq!(cs.segments.len(), 4);
        let total: f64 = cs.segments.iter().map(|s| s.length()).sum();
        assert!((total - 4.0).abs() < 1e-12);
        let bottom = cs.segments.iter().find(|s| s.cutter_edge == 0).unwrap();
        assert!((bottom.normal - vec2(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn cutter_outside_mesh() {
        let mesh = generate_structured_rect(vec2(0., 0.), vec2(1., 1.), 3, 3).unwrap();
        let cs =
            classify_and_cut(&mesh, &square(5., 5., 6., 6.), None, &CutOptions::default()).unwrap();
        assert!(cs.kinds.iter().all(|k| *k == CellKind::Active));
        assert!(cs.segments.is_empty());
        assert!(cs.gp_facets.is_empty());
    }

    #[test]
    fn aligned_cutter_is_perturbed() {
        let mesh = generate_structured_rect(vec2(0., 0.), vec2(2., 2.), 2, 2).unwrap();
        let cs =
            classify_and_cut(&mesh, &square(0., 0., 1., 1.), None, &CutOptions::default()).unwrap();
        assert!(cs.perturbed_vertices > 0);
        // oracle: element centroids against the unperturbed square
        let sq = square(0., 0., 1., 1.);
        for e in 0..4 {
            let c = mesh.element_centroid(e);
            if point_in_polygon(&c, &sq) {
                assert_ne!(cs.kinds[e], CellKind::Active);
            } else {
                assert_ne!(cs.kinds[e], CellKind::Void);
            }
        }
        assert!(!cs.gp_facets.is_empty());
        let area: f64 = (0..4).map(|e| cs.physical_area(&mesh, e)).sum();
        assert!((area - 3.0).abs() < 1e-8);
    }

    #[test]
    fn left_half_removed() {
        let e = square(0., 0., 1., 1.);
        let d = clip_element(&e, &square(-1., -1., 0.5, 2.)).unwrap();
        match &d {
            Difference::Pieces(p) => assert_eq!(p.len(), 1),
            _ => panic!("expected pieces"),
        }
        assert!((area_of(&d, 1.0) - 0.5).abs() < 1e-15);
        assert_eq!(
            clip_element(&e, &square(-1., -1., 2., 2.)).unwrap(),
            Difference::Inside
        );
    }

    #[test]
    fn notch_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let e = square(0., 0., 1., 1.);
        // concave cutter: a U-shape whose notch enters the bottom edge
        let c = vec![
            vec2(0.2, -0.5),
            vec2(0.8, -0.5),
            vec2(0.8, 0.6),
            vec2(0.6, 0.6),
            vec2(0.6, 0.1),
            vec2(0.4, 0.1),
            vec2(0.4, 0.6),
            vec2(0.2, 0.6),
        ];
        let d = clip_element(&e, &c).unwrap();
        let a = area_of(&d, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 400_000;
        let hits = (0..n)
            .filter(|_| {
                let p = vec2(rng.random::<f64>(), rng.random::<f64>());
                !point_in_polygon(&p, &c)
            })
            .count();
        assert!((a - hits as f64 / n as f64).abs() < 1e-3);
        assert!((a - (1.0 - (0.6 * 0.6 - 0.2 * 0.5))).abs() < 1e-14);
    }

    #[test]
    fn triangle_rules() {
        let pts = triangulate_and_weight(&[square(0., 0., 1., 1.)], 2);
        assert_eq!(pts.len(), 6);
        assert!((pts.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
        let tri = vec![vec2(0., 0.), vec2(1., 0.), vec2(0., 1.)];
        let p = triangulate_and_weight(std::slice::from_ref(&tri), 1);
        assert_eq!(p.len(), 1);
        assert!((p[0].0 - vec2(1. / 3., 1. / 3.)).norm() < 1e-15);
        assert!((p[0].1 - 0.5).abs() < 1e-15);
        let l = vec![
            vec2(0., 0.),
            vec2(1., 0.),
            vec2(1., 0.5),
            vec2(0.5, 0.5),
            vec2(0.5, 1.),
            vec2(0., 1.),
        ];
        let s: f64 = triangulate_and_weight(&[l], 3).iter().map(|p| p.1).sum();
        assert!((s - 0.75).abs() < 1e-12);
        // degree-4 rule integrates x^2 y^2 exactly on the reference triangle
        let q: f64 = triangulate_and_weight(&[tri], 3)
            .iter()
            .map(|(x, w)| w * x.x * x.x * x.y * x.y)
            .sum();
        assert!((q - 1.0 / 180.0).abs() < 1e-12);
    }

    #[test]
    fn clockwise_cutter_rejected() {
        let mesh = generate_structured_rect(vec2(0., 0.), vec2(1., 1.), 2, 2).unwrap();
        let mut c = square(0.2, 0.2, 0.7, 0.7);
        c.reverse();
        assert!(classify_and_cut(&mesh, &c, None, &CutOptions::default()).is_err());
        let dup = vec![
            vec2(0.2, 0.2),
            vec2(0.2, 0.2),
            vec2(0.7, 0.2),
            vec2(0.7, 0.7),
        ];
        assert!(classify_and_cut(&mesh, &dup, None, &CutOptions::default()).is_err());
    }

    #[test]
    fn edge_crossing_interior_facet_splits_once() {
        let mesh = generate_structured_rect(vec2(0., 0.), vec2(2., 1.), 2, 1).unwrap();
        let c = vec![vec2(0.3, 0.3), vec2(1.6, 0.35), vec2(1.0, 0.8)];
        let cs = classify_and_cut(&mesh, &c, None, &CutOptions::default()).unwrap();
        let parts: Vec<_> = cs.segments.iter().filter(|s| s.cutter_edge == 0).collect();
        assert_eq!(parts.len(), 2);
        let sum: f64 = parts.iter().map(|s| s.length()).sum();
        assert!((sum - (c[1] - c[0]).norm()).abs() < 1e-14);
    }
}
