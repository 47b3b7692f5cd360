//! Bilinear quadrilateral meshes, facet connectivity and structured generators.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FsiError, Result};
use crate::geometry::{signed_area, vec2, Vec2};

/// Facet shared by two elements. `nodes` follow the counterclockwise order of
/// `left`, so the facet normal (clockwise rotation of b − a) points from
/// `left` into `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorFacet {
    pub nodes: [usize; 2],
    pub left: usize,
    pub right: usize,
    pub left_edge: usize,
    pub right_edge: usize,
}

/// Facet on the mesh boundary; `nodes` follow the owning element's CCW order,
/// so the clockwise-rotated tangent is the outward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFacet {
    pub nodes: [usize; 2],
    pub element: usize,
    pub local_edge: usize,
    pub tag: String,
}

/// Local edge `k` connects local nodes `k` and `k+1`:
/// 0 is η = −1, 1 is ξ = 1, 2 is η = 1, 3 is ξ = −1.
pub const LOCAL_EDGES: [[usize; 2]; 4] = [[0, 1], [1, 2], [2, 3], [3, 0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadMesh {
    pub nodes: Vec<Vec2>,
    pub elements: Vec<[usize; 4]>,
    pub interior_facets: Vec<InteriorFacet>,
    pub boundary_facets: Vec<BoundaryFacet>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
    /// Interior facet ids touching each element.
    pub element_facets: Vec<Vec<usize>>,
}

impl QuadMesh {
    /// Builds connectivity from raw nodes and elements. Clockwise elements are
    /// reoriented; boundary facets are tagged by `tagger(a, b)`. Node sets named
    /// after every boundary tag are added automatically.
    pub fn from_elements<F>(
        nodes: Vec<Vec2>,
        mut elements: Vec<[usize; 4]>,
        tagger: F,
    ) -> Result<Self>
    where
        F: Fn(&Vec2, &Vec2) -> String,
    {
        for (e, el) in elements.iter_mut().enumerate() {
            if el.iter().any(|&n| n >= nodes.len()) {
                return Err(FsiError::Config(format!(
                    "element {e} references a missing node"
                )));
            }
            let poly = el.map(|n| nodes[n]);
            if signed_area(&poly) < 0.0 {
                el.swap(1, 3);
            }
            let poly = el.map(|n| nodes[n]);
            for i in 0..4 {
                let p = poly[i];
                let next = poly[(i + 1) % 4];
                let prev = poly[(i + 3) % 4];
                let det = crate::geometry::cross(&(next - p), &(prev - p));
                if det <= 0.0 {
                    return Err(FsiError::DegenerateElement {
                        element: e,
                        det_j: det / 4.0,
                    });
                }
            }
        }

        let mut edge_map: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut interior_facets = Vec::new();
        let mut element_facets = vec![Vec::new(); elements.len()];
        let mut pending: Vec<(usize, usize, [usize; 2])> = Vec::new();
        for (e, el) in elements.iter().enumerate() {
            for (k, le) in LOCAL_EDGES.iter().enumerate() {
                let a = el[le[0]];
                let b = el[le[1]];
                let key = (a.min(b), a.max(b));
                if let Some((e0, k0)) = edge_map.remove(&key) {
                    let nodes0 = [
                        elements[e0][LOCAL_EDGES[k0][0]],
                        elements[e0][LOCAL_EDGES[k0][1]],
                    ];
                    let id = interior_facets.len();
                    interior_facets.push(InteriorFacet {
                        nodes: nodes0,
                        left: e0,
                        right: e,
                        left_edge: k0,
                        right_edge: k,
                    });
                    element_facets[e0].push(id);
                    element_facets[e].push(id);
                } else {
                    edge_map.insert(key, (e, k));
                    pending.push((e, k, [a, b]));
                }
            }
        }
        let mut boundary_facets = Vec::new();
        for (e, k, [a, b]) in pending {
            let key = (a.min(b), a.max(b));
            if edge_map.contains_key(&key) {
                let tag = tagger(&nodes[a], &nodes[b]);
                boundary_facets.push(BoundaryFacet {
                    nodes: [a, b],
                    element: e,
                    local_edge: k,
                    tag,
                });
            }
        }

        let mut node_sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for f in &boundary_facets {
            let set = node_sets.entry(f.tag.clone()).or_default();
            set.extend_from_slice(&f.nodes);
        }
        for set in node_sets.values_mut() {
            set.sort_unstable();
            set.dedup();
        }

        Ok(QuadMesh {
            nodes,
            elements,
            interior_facets,
            boundary_facets,
            node_sets,
            element_facets,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn element_polygon(&self, e: usize) -> [Vec2; 4] {
        self.elements[e].map(|n| self.nodes[n])
    }

    pub fn element_area(&self, e: usize) -> f64 {
        signed_area(&self.element_polygon(e))
    }

    /// Largest vertex-to-vertex distance.
    pub fn element_diameter(&self, e: usize) -> f64 {
        let p = self.element_polygon(e);
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                d = d.max((p[i] - p[j]).norm());
            }
        }
        d
    }

    pub fn element_centroid(&self, e: usize) -> Vec2 {
        let p = self.element_polygon(e);
        (p[0] + p[1] + p[2] + p[3]) * 0.25
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.element_area(e)).sum()
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| FsiError::Config(format!("unknown node set '{name}'")))
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.boundary_facets.iter().any(|f| f.tag == tag)
    }

    pub fn facets_with_tag<'a>(
        &'a self,
        tag: &'a str,
    ) -> impl Iterator<Item = (usize, &'a BoundaryFacet)> + 'a {
        self.boundary_facets
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.tag == tag)
    }

    /// Returns a copy with node coordinates displaced by `disp` (2 entries per node).
    pub fn displaced(&self, disp: &[f64]) -> QuadMesh {
        let mut m = self.clone();
        for (i, p) in m.nodes.iter_mut().enumerate() {
            p.x += disp[2 * i];
            p.y += disp[2 * i + 1];
        }
        m
    }

    /// Ordered closed loop of node ids along the facets carrying `tag`,
    /// oriented counterclockwise, first id repeated at the end.
    pub fn boundary_polyline(&self, tag: &str) -> Result<Vec<usize>> {
        self.boundary_loop(tag, |t| t == tag)
    }

    /// Like [`QuadMesh::boundary_polyline`] over all facets whose tag passes
    /// `keep`; `label` names the loop in error messages.
    pub fn boundary_loop(&self, label: &str, keep: impl Fn(&str) -> bool) -> Result<Vec<usize>> {
        let tag = label;
        let facets: Vec<[usize; 2]> = self
            .boundary_facets
            .iter()
            .filter(|f| keep(&f.tag))
            .map(|f| f.nodes)
            .collect();
        if facets.is_empty() {
            return Err(FsiError::Geometry(format!(
                "no boundary facets tagged '{tag}'"
            )));
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for f in &facets {
            if next.insert(f[0], f[1]).is_some() {
                return Err(FsiError::Geometry(format!(
                    "boundary '{tag}' is not a simple loop"
                )));
            }
        }
        let start = facets.iter().map(|f| f[0]).min().unwrap_or(0);
        let mut loop_ids = vec![start];
        let mut cur = start;
        loop {
            let n = *next
                .get(&cur)
                .ok_or_else(|| FsiError::Geometry(format!("boundary '{tag}' is open")))?;
            loop_ids.push(n);
            if n == start {
                break;
            }
            if loop_ids.len() > facets.len() + 1 {
                return Err(FsiError::Geometry(format!(
                    "boundary '{tag}' is not a simple loop"
                )));
            }
            cur = n;
        }
        if loop_ids.len() != facets.len() + 1 {
            return Err(FsiError::Geometry(format!(
                "boundary '{tag}' has more than one component"
            )));
        }
        let pts: Vec<Vec2> = loop_ids[..loop_ids.len() - 1]
            .iter()
            .map(|&i| self.nodes[i])
            .collect();
        if signed_area(&pts) < 0.0 {
            loop_ids.reverse();
        }
        Ok(loop_ids)
    }

    pub fn boundary_points(&self, tag: &str) -> Result<Vec<Vec2>> {
        Ok(self
            .boundary_polyline(tag)?
            .iter()
            .map(|&i| self.nodes[i])
            .collect())
    }

    /// Element containing `p` by inverse bilinear mapping, with its reference
    /// coordinates. Brute force over a bounding-box prefilter.
    pub fn locate(&self, p: &Vec2) -> Option<(usize, [f64; 2])> {
        for e in 0..self.num_elements() {
            let poly = self.element_polygon(e);
            let bb = crate::geometry::BoundingBox::of(&poly);
            let tol = 1e-12 * (bb.max - bb.min).norm();
            if !bb.inflate(tol).contains(p) {
                continue;
            }
            if let Some(xi) = crate::fem::inverse_map(&poly, p) {
                if xi[0].abs() <= 1.0 + 1e-10 && xi[1].abs() <= 1.0 + 1e-10 {
                    return Some((e, xi));
                }
            }
        }
        None
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(FsiError::Config(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

/// nx × ny rectangle with tags left/right/bottom/top.
pub fn generate_structured_rect(
    origin: Vec2,
    extent: Vec2,
    nx: usize,
    ny: usize,
) -> Result<QuadMesh> {
    if nx == 0 || ny == 0 {
        return Err(FsiError::Config(format!(
            "element counts must be positive, got {nx}x{ny}"
        )));
    }
    check_positive("extent x", extent.x)?;
    check_positive("extent y", extent.y)?;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx {
                origin.x + extent.x
            } else {
                origin.x + extent.x * i as f64 / nx as f64
            };
            let y = if j == ny {
                origin.y + extent.y
            } else {
                origin.y + extent.y * j as f64 / ny as f64
            };
            nodes.push(vec2(x, y));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let (x0, y0) = (origin.x, origin.y);
    let (x1, y1) = (origin.x + extent.x, origin.y + extent.y);
    let tol = 1e-9 * extent.x.max(extent.y);
    QuadMesh::from_elements(nodes, elements, move |a, b| {
        let m = (a + b) * 0.5;
        if (m.x - x0).abs() < tol {
            "left".into()
        } else if (m.x - x1).abs() < tol {
            "right".into()
        } else if (m.y - y0).abs() < tol {
            "bottom".into()
        } else if (m.y - y1).abs() < tol {
            "top".into()
        } else {
            "boundary".into()
        }
    })
}

/// Angle of the j-th of `n` nodes on a circular boundary. Shared by the annulus
/// and disc generators so that their circular boundaries match node for node.
pub fn circle_angle(j: usize, n: usize) -> f64 {
    PI / 4.0 + 2.0 * PI * j as f64 / n as f64
}

/// Radii of `n_radial + 1` node rings with geometric grading; `grading` is the
/// ratio of outermost to innermost layer thickness.
pub fn graded_radii(r_inner: f64, r_outer: f64, n_radial: usize, grading: f64) -> Vec<f64> {
    let q = if n_radial > 1 {
        grading.powf(1.0 / (n_radial as f64 - 1.0))
    } else {
        1.0
    };
    let weights: Vec<f64> = (0..n_radial).map(|i| q.powi(i as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut radii = Vec::with_capacity(n_radial + 1);
    let mut r = r_inner;
    radii.push(r);
    for (i, w) in weights.iter().enumerate() {
        r += (r_outer - r_inner) * w / total;
        radii.push(if i + 1 == n_radial { r_outer } else { r });
    }
    radii
}

/// Ring mesh around `center`; inner boundary tagged "fsi", outer "ff".
pub fn generate_annulus_patch(
    center: Vec2,
    r_inner: f64,
    r_outer: f64,
    n_circum: usize,
    n_radial: usize,
    grading: f64,
) -> Result<QuadMesh> {
    if !(r_inner > 0.0 && r_inner < r_outer) {
        return Err(FsiError::Config(format!(
            "annulus radii out of order: {r_inner}, {r_outer}"
        )));
    }
    if n_circum < 8 {
        return Err(FsiError::Config(format!(
            "annulus needs at least 8 circumferential elements, got {n_circum}"
        )));
    }
    if n_radial == 0 {
        return Err(FsiError::Config("annulus needs at least one layer".into()));
    }
    check_positive("grading", grading)?;
    let radii = graded_radii(r_inner, r_outer, n_radial, grading);
    let mut nodes = Vec::with_capacity((n_radial + 1) * n_circum);
    for r in &radii {
        for j in 0..n_circum {
            let a = circle_angle(j, n_circum);
            nodes.push(center + vec2(r * a.cos(), r * a.sin()));
        }
    }
    let id = |k: usize, j: usize| k * n_circum + (j % n_circum);
    let mut elements = Vec::with_capacity(n_radial * n_circum);
    for k in 0..n_radial {
        for j in 0..n_circum {
            elements.push([id(k, j), id(k + 1, j), id(k + 1, j + 1), id(k, j + 1)]);
        }
    }
    let r_mid = 0.5 * (radii[0] + radii[1]);
    QuadMesh::from_elements(nodes, elements, move |a, b| {
        let m = (a + b) * 0.5;
        if (m - center).norm() < r_mid {
            "fsi".into()
        } else {
            "ff".into()
        }
    })
}

/// All-quad disc: an m×m core square (m = n_circum/4) blended to the circle
/// through ring layers. Boundary tagged "fsi"; node sets "center" (when m is
/// even) and "top" (when n_circum is a multiple of 8).
pub fn generate_disc_mesh(center: Vec2, r: f64, n_circum: usize) -> Result<QuadMesh> {
    if n_circum == 0 || !n_circum.is_multiple_of(4) {
        return Err(FsiError::Config(format!(
            "disc boundary count must be divisible by 4, got {n_circum}"
        )));
    }
    check_positive("radius", r)?;
    let m = n_circum / 4;
    let layers = (n_circum / 8).max(1);
    let a = 0.45 * r;
    let mut nodes = Vec::new();
    let core = |i: usize, j: usize| j * (m + 1) + i;
    for j in 0..=m {
        for i in 0..=m {
            let x = -a + 2.0 * a * i as f64 / m as f64;
            let y = -a + 2.0 * a * j as f64 / m as f64;
            nodes.push(center + vec2(x, y));
        }
    }
    let mut elements = Vec::new();
    for j in 0..m {
        for i in 0..m {
            elements.push([
                core(i, j),
                core(i + 1, j),
                core(i + 1, j + 1),
                core(i, j + 1),
            ]);
        }
    }
    // square boundary index k (CCW from the (a, a) corner) to core node
    let square_node = |k: usize| -> usize {
        let k = k % n_circum;
        let (side, t) = (k / m, k % m);
        match side {
            0 => core(m - t, m),
            1 => core(0, m - t),
            2 => core(t, 0),
            _ => core(m, t),
        }
    };
    let mut ring: Vec<Vec<usize>> = vec![(0..n_circum).map(square_node).collect()];
    for l in 1..=layers {
        let s = l as f64 / layers as f64;
        let mut ids = Vec::with_capacity(n_circum);
        for k in 0..n_circum {
            let ang = circle_angle(k, n_circum);
            let circ = center + vec2(r * ang.cos(), r * ang.sin());
            let p = if l == layers {
                circ
            } else {
                nodes[square_node(k)] * (1.0 - s) + circ * s
            };
            ids.push(nodes.len());
            nodes.push(p);
        }
        ring.push(ids);
    }
    for l in 0..layers {
        for k in 0..n_circum {
            let k1 = (k + 1) % n_circum;
            elements.push([ring[l][k], ring[l + 1][k], ring[l + 1][k1], ring[l][k1]]);
        }
    }
    let mut mesh = QuadMesh::from_elements(nodes, elements, |_, _| "fsi".to_string())?;
    if m.is_multiple_of(2) {
        mesh.node_sets
            .insert("center".into(), vec![core(m / 2, m / 2)]);
    }
    if n_circum.is_multiple_of(8) {
        mesh.node_sets
            .insert("top".into(), vec![ring[layers][n_circum / 8]]);
    }
    Ok(mesh)
}

/// Head-and-tail body with its surrounding box, all lengths in body units.
/// The body's origin is the midpoint of the tail's clamped end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagLayout {
    pub head: f64,
    pub tail_length: f64,
    pub tail_thickness: f64,
    /// Outer box of the patch as (lower-left, upper-right).
    pub box_min: Vec2,
    pub box_max: Vec2,
    /// Vertical shift applied to body and patch.
    pub shift: f64,
    pub n_tail: usize,
    pub n_tip: usize,
    /// Elements along each horizontal and the front head edge.
    pub n_head: usize,
    /// Elements along each head back edge between the head corner and the tail.
    pub n_step: usize,
    pub n_layers: usize,
    /// Ratio of outermost to innermost layer thickness.
    pub grading: f64,
}

impl Default for FlagLayout {
    fn default() -> Self {
        FlagLayout {
            head: 1.0,
            tail_length: 4.0,
            tail_thickness: 0.06,
            box_min: vec2(-2.0, -1.5),
            box_max: vec2(5.0, 1.5),
            shift: 1e-3,
            n_tail: 20,
            n_tip: 2,
            n_head: 5,
            n_step: 3,
            n_layers: 12,
            grading: 12.0,
        }
    }
}

impl FlagLayout {
    /// The flexible tail as a structured solid mesh; the clamped end is tagged "left".
    pub fn tail_mesh(&self) -> Result<QuadMesh> {
        generate_structured_rect(
            vec2(0.0, self.shift - 0.5 * self.tail_thickness),
            vec2(self.tail_length, self.tail_thickness),
            self.n_tail,
            self.n_tip,
        )
    }
}

/// Points of the straight segment a→b at i/n for i in 0..n.
fn segment_points(a: Vec2, b: Vec2, n: usize, out: &mut Vec<Vec2>) {
    for i in 0..n {
        let t = i as f64 / n as f64;
        out.push(vec2(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t));
    }
}

/// O-grid between the flag outline and its box. Tail facets are tagged "fsi",
/// head facets "wall", box facets "ff". Tail nodes coincide with
/// [`FlagLayout::tail_mesh`] up to rounding.
pub fn generate_flag_patch(l: &FlagLayout) -> Result<QuadMesh> {
    for (name, n) in [
        ("n_tail", l.n_tail),
        ("n_tip", l.n_tip),
        ("n_head", l.n_head),
        ("n_step", l.n_step),
        ("n_layers", l.n_layers),
    ] {
        if n == 0 {
            return Err(FsiError::Config(format!(
                "flag patch count {name} must be positive"
            )));
        }
    }
    check_positive("head", l.head)?;
    check_positive("tail length", l.tail_length)?;
    check_positive("tail thickness", l.tail_thickness)?;
    check_positive("grading", l.grading)?;
    let (hh, ht) = (0.5 * l.head, 0.5 * l.tail_thickness);
    if ht >= hh {
        return Err(FsiError::Config(
            "tail must be thinner than the head".into(),
        ));
    }
    let (x0, x1) = (l.box_min.x, l.box_max.x);
    let (y0, y1) = (l.box_min.y + l.shift, l.box_max.y + l.shift);
    if !(x0 < -l.head && x1 > l.tail_length && y0 < l.shift - hh && y1 > l.shift + hh) {
        return Err(FsiError::Config("flag box must enclose the body".into()));
    }
    let s = l.shift;
    let p = |x: f64, y: f64| vec2(x, y + s);
    let (xa, xc) = (hh, l.head);
    let segments = [
        (
            p(-l.head, -hh),
            p(0.0, -hh),
            vec2(x0, y0),
            vec2(xa, y0),
            l.n_head,
        ),
        (
            p(0.0, -hh),
            p(0.0, -ht),
            vec2(xa, y0),
            vec2(xc, y0),
            l.n_step,
        ),
        (
            p(0.0, -ht),
            p(l.tail_length, -ht),
            vec2(xc, y0),
            vec2(x1, y0),
            l.n_tail,
        ),
        (
            p(l.tail_length, -ht),
            p(l.tail_length, ht),
            vec2(x1, y0),
            vec2(x1, y1),
            l.n_tip,
        ),
        (
            p(l.tail_length, ht),
            p(0.0, ht),
            vec2(x1, y1),
            vec2(xc, y1),
            l.n_tail,
        ),
        (p(0.0, ht), p(0.0, hh), vec2(xc, y1), vec2(xa, y1), l.n_step),
        (
            p(0.0, hh),
            p(-l.head, hh),
            vec2(xa, y1),
            vec2(x0, y1),
            l.n_head,
        ),
        (
            p(-l.head, hh),
            p(-l.head, -hh),
            vec2(x0, y1),
            vec2(x0, y0),
            l.n_head,
        ),
    ];
    let (mut inner, mut outer) = (Vec::new(), Vec::new());
    for &(a, b, c, d, n) in &segments {
        segment_points(a, b, n, &mut inner);
        segment_points(c, d, n, &mut outer);
    }
    let n_loop = inner.len();
    let layers = graded_radii(0.0, 1.0, l.n_layers, l.grading);
    let mut nodes = Vec::with_capacity(n_loop * layers.len());
    for (k, &t) in layers.iter().enumerate() {
        for j in 0..n_loop {
            nodes.push(match k {
                0 => inner[j],
                _ if k == l.n_layers => outer[j],
                _ => inner[j] + (outer[j] - inner[j]) * t,
            });
        }
    }
    let id = |k: usize, j: usize| k * n_loop + (j % n_loop);
    let mut elements = Vec::with_capacity(l.n_layers * n_loop);
    for k in 0..l.n_layers {
        for j in 0..n_loop {
            elements.push([id(k, j), id(k, j + 1), id(k + 1, j + 1), id(k + 1, j)]);
        }
    }
    let tol = 1e-9 * (x1 - x0);
    QuadMesh::from_elements(nodes, elements, move |a, b| {
        let m = (a + b) * 0.5;
        if (m.x - x0).abs() < tol
            || (m.x - x1).abs() < tol
            || (m.y - y0).abs() < tol
            || (m.y - y1).abs() < tol
        {
            "ff".into()
        } else if m.x > tol {
            "fsi".into()
        } else {
            "wall".into()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polygon_self_intersects;

    #[test]
    fn single_element_rect() {
        let m = generate_structured_rect(vec2(0., 0.), vec2(1., 1.), 1, 1).unwrap();
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.boundary_facets.len(), 4);
        assert!(m.interior_facets.is_empty());
        let loop_ids = m.boundary_polyline("left").unwrap_err();
        assert!(matches!(loop_ids, FsiError::Geometry(_)));
    }

    #[test]
    fn flag_channel_element_count() {
        let m = generate_structured_rect(vec2(0., 0.), vec2(2.2, 0.44), 225, 45).unwrap();
        assert_eq!(m.num_elements(), 10125);
        assert!((m.total_area() - 2.2 * 0.44).abs() < 1e-12);
    }

    #[test]
    fn two_elements_share_one_facet() {
        let m = generate_structured_rect(vec2(0., 0.), vec2(2., 1.), 2, 1).unwrap();
        assert_eq!(m.interior_facets.len(), 1);
        let f = &m.interior_facets[0];
        assert_eq!((f.left, f.right), (0, 1));
        assert_eq!(f.left_edge, 1);
        assert_eq!(f.right_edge, 3);
        // normal of (a, b) rotated clockwise points from left into right
        let t = m.nodes[f.nodes[1]] - m.nodes[f.nodes[0]];
        assert!(t.y > 0.0);
    }

    #[test]
    fn bad_counts_rejected() {
        assert!(generate_structured_rect(vec2(0., 0.), vec2(1., 1.), 0, 1).is_err());
        assert!(generate_structured_rect(vec2(0., 0.), vec2(-1., 1.), 1, 1).is_err());
    }

    #[test]
    fn annulus_inner_boundary_chords() {
        let m = generate_annulus_patch(vec2(0., 0.), 0.75, 0.9, 50, 10, 1.0).unwrap();
        assert_eq!(m.num_elements(), 500);
        assert_eq!(m.facets_with_tag("fsi").count(), 50);
        assert_eq!(m.node_set("fsi").unwrap().len(), 50);
        let len: f64 = m
            .facets_with_tag("fsi")
            .map(|(_, f)| (m.nodes[f.nodes[1]] - m.nodes[f.nodes[0]]).norm())
            .sum();
        let exact = 2.0 * 50.0 * 0.75 * (PI / 50.0).sin();
        assert!((len - exact).abs() < 1e-12);
        assert!(len < 2.0 * PI * 0.75);
        assert_eq!(m.boundary_polyline("ff").unwrap().len(), 51);
    }

    #[test]
    fn uniform_grading_gives_equal_layers() {
        let r = graded_radii(1.0, 2.0, 2, 1.0);
        assert!((r[1] - r[0] - 0.5).abs() < 1e-15);
        assert!((r[2] - r[1] - 0.5).abs() < 1e-15);
        let g = graded_radii(1.0, 2.0, 4, 3.0);
        let first = g[1] - g[0];
        let last = g[4] - g[3];
        assert!((last / first - 3.0).abs() < 1e-12);
    }

    #[test]
    fn annulus_radii_validated() {
        assert!(generate_annulus_patch(vec2(0., 0.), 0.9, 0.75, 50, 10, 1.0).is_err());
    }

    #[test]
    fn disc_preconditions_and_shape() {
        assert!(generate_disc_mesh(vec2(0., 0.), 0.75, 50).is_err());
        let m = generate_disc_mesh(vec2(0., 0.), 1.0, 8).unwrap();
        assert_eq!(m.boundary_facets.len(), 8);
        let l = m.boundary_polyline("fsi").unwrap();
        assert_eq!(l.len(), 9);
        assert_eq!(l[0], l[8]);
        let d = generate_disc_mesh(vec2(0., 0.), 0.75, 48).unwrap();
        let poly = d.boundary_points("fsi").unwrap();
        let oracle = signed_area(&poly[..poly.len() - 1]);
        assert!((d.total_area() - oracle).abs() < 1e-12);
        assert!((d.total_area() / (PI * 0.75 * 0.75) - 1.0).abs() < 0.02);
        assert!(d.node_set("center").is_ok());
        let top = d.nodes[d.node_set("top").unwrap()[0]];
        assert!(top.x.abs() < 1e-14 && (top.y - 0.75).abs() < 1e-14);
    }

    #[test]
    fn disc_boundary_matches_annulus_inner_nodes() {
        let d = generate_disc_mesh(vec2(0.3, 0.2), 0.1, 16).unwrap();
        let a = generate_annulus_patch(vec2(0.3, 0.2), 0.1, 0.15, 16, 3, 1.0).unwrap();
        for &i in a.node_set("fsi").unwrap() {
            let p = a.nodes[i];
            let found = d
                .node_set("fsi")
                .unwrap()
                .iter()
                .any(|&j| (d.nodes[j] - p).norm() < 1e-14);
            assert!(found);
        }
    }

    #[test]
    fn reversed_input_is_normalized() {
        let nodes = vec![vec2(0., 0.), vec2(1., 0.), vec2(1., 1.), vec2(0., 1.)];
        let m = QuadMesh::from_elements(nodes, vec![[0, 3, 2, 1]], |_, _| "wall".into()).unwrap();
        assert!(m.element_area(0) > 0.0);
        let l = m.boundary_polyline("wall").unwrap();
        assert_eq!(l.len(), 5);
        let pts: Vec<Vec2> = l[..4].iter().map(|&i| m.nodes[i]).collect();
        assert!(signed_area(&pts) > 0.0);
        assert!(!polygon_self_intersects(&pts));
    }

    #[test]
    fn facet_nodes_belong_to_their_elements() {
        let m = generate_annulus_patch(vec2(0., 0.), 0.5, 1.0, 12, 3, 2.0).unwrap();
        for f in &m.interior_facets {
            for n in f.nodes {
                assert!(m.elements[f.left].contains(&n));
                assert!(m.elements[f.right].contains(&n));
            }
        }
        for f in &m.boundary_facets {
            assert!(f.nodes.iter().all(|n| m.elements[f.element].contains(n)));
        }
    }

    #[test]
    fn flag_patch_matches_tail_and_tags_boundaries() {
        let l = FlagLayout {
            n_layers: 6,
            ..FlagLayout::default()
        };
        let patch = generate_flag_patch(&l).unwrap();
        let tail = l.tail_mesh().unwrap();
        let n_loop = 2 * l.n_tail + l.n_tip + 3 * l.n_head + 2 * l.n_step;
        assert_eq!(patch.num_elements(), n_loop * l.n_layers);
        let fsi = patch.node_set("fsi").unwrap();
        assert_eq!(fsi.len(), 2 * l.n_tail + l.n_tip + 1);
        for &n in fsi {
            assert!(
                tail.nodes
                    .iter()
                    .any(|q| (q - patch.nodes[n]).norm() < 1e-12),
                "patch node {n} has no tail twin"
            );
        }
        assert_eq!(
            patch.facets_with_tag("wall").count(),
            3 * l.n_head + 2 * l.n_step
        );
        assert_eq!(patch.facets_with_tag("ff").count(), n_loop);
        let outline = patch.boundary_points("ff").unwrap();
        assert!(!polygon_self_intersects(&outline));
        let body = l.head * l.head + l.tail_length * l.tail_thickness;
        let boxed = (l.box_max.x - l.box_min.x) * (l.box_max.y - l.box_min.y);
        assert!((patch.total_area() - (boxed - body)).abs() < 1e-10);
    }
}
