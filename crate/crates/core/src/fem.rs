//! Bilinear quadrilateral basis, isoparametric mapping, metric tensor and Gauss rules.

use nalgebra::Matrix2;

use crate::error::{FsiError, Result};
use crate::geometry::{vec2, Vec2};

pub type Mat2 = Matrix2<f64>;

/// Reference coordinates of the four nodes.
pub const REF_NODES: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

pub fn shape_values(xi: [f64; 2]) -> [f64; 4] {
    let mut n = [0.0; 4];
    for (a, r) in REF_NODES.iter().enumerate() {
        n[a] = 0.25 * (1.0 + r[0] * xi[0]) * (1.0 + r[1] * xi[1]);
    }
    n
}

pub fn shape_ref_gradients(xi: [f64; 2]) -> [[f64; 2]; 4] {
    let mut g = [[0.0; 2]; 4];
    for (a, r) in REF_NODES.iter().enumerate() {
        g[a][0] = 0.25 * r[0] * (1.0 + r[1] * xi[1]);
        g[a][1] = 0.25 * r[1] * (1.0 + r[0] * xi[0]);
    }
    g
}

/// Basis sample at one point of one element.
#[derive(Debug, Clone)]
pub struct Basis {
    pub x: Vec2,
    pub n: [f64; 4],
    /// Physical gradients ∂N_a/∂x.
    pub grad: [Vec2; 4],
    /// J_ij = ∂x_i/∂ξ_j
    pub jac: Mat2,
    pub jinv: Mat2,
    pub det_j: f64,
}

impl Basis {
    /// G_kl = Σ_i ∂ξ_i/∂x_k ∂ξ_i/∂x_l
    pub fn metric(&self) -> Mat2 {
        self.jinv.transpose() * self.jinv
    }

    pub fn interpolate(&self, vals: &[f64; 4]) -> f64 {
        (0..4).map(|a| self.n[a] * vals[a]).sum()
    }

    pub fn gradient(&self, vals: &[f64; 4]) -> Vec2 {
        let mut g = Vec2::zeros();
        for a in 0..4 {
            g += self.grad[a] * vals[a];
        }
        g
    }

    /// Physical Hessians of the four shape functions, including the
    /// correction from the curvature of the bilinear map.
    pub fn hessians(&self, poly: &[Vec2; 4]) -> [Mat2; 4] {
        let mixed = |a: usize| 0.25 * REF_NODES[a][0] * REF_NODES[a][1];
        let href = |a: usize| Mat2::new(0.0, mixed(a), mixed(a), 0.0);
        let mut hx = [Mat2::zeros(); 2];
        for a in 0..4 {
            hx[0] += href(a) * poly[a].x;
            hx[1] += href(a) * poly[a].y;
        }
        let jt = self.jinv.transpose();
        let mut out = [Mat2::zeros(); 4];
        for a in 0..4 {
            let inner = href(a) - hx[0] * self.grad[a].x - hx[1] * self.grad[a].y;
            out[a] = jt * inner * self.jinv;
        }
        out
    }
}

/// Evaluates the basis on element `elem` with corner coordinates `poly`.
pub fn eval_basis(elem: usize, poly: &[Vec2; 4], xi: [f64; 2]) -> Result<Basis> {
    let n = shape_values(xi);
    let g = shape_ref_gradients(xi);
    let mut jac = Mat2::zeros();
    let mut x = Vec2::zeros();
    for a in 0..4 {
        x += poly[a] * n[a];
        jac[(0, 0)] += poly[a].x * g[a][0];
        jac[(0, 1)] += poly[a].x * g[a][1];
        jac[(1, 0)] += poly[a].y * g[a][0];
        jac[(1, 1)] += poly[a].y * g[a][1];
    }
    let det_j = jac.determinant();
    let scale = jac.norm_squared().max(f64::MIN_POSITIVE);
    if det_j.abs() < 1e-14 * scale || det_j.abs() < 1e-300 {
        return Err(FsiError::DegenerateElement {
            element: elem,
            det_j,
        });
    }
    let jinv = Mat2::new(jac[(1, 1)], -jac[(0, 1)], -jac[(1, 0)], jac[(0, 0)]) / det_j;
    let jt = jinv.transpose();
    let mut grad = [Vec2::zeros(); 4];
    for a in 0..4 {
        grad[a] = jt * vec2(g[a][0], g[a][1]);
    }
    Ok(Basis {
        x,
        n,
        grad,
        jac,
        jinv,
        det_j,
    })
}

/// (G, tr G, G:G) at a point.
pub fn metric_quantities(elem: usize, poly: &[Vec2; 4], xi: [f64; 2]) -> Result<(Mat2, f64, f64)> {
    let b = eval_basis(elem, poly, xi)?;
    let g = b.metric();
    Ok((g, g.trace(), g.component_mul(&g).sum()))
}

pub fn map_point(poly: &[Vec2; 4], xi: [f64; 2]) -> Vec2 {
    let n = shape_values(xi);
    poly[0] * n[0] + poly[1] * n[1] + poly[2] * n[2] + poly[3] * n[3]
}

/// Newton inversion of the bilinear map. Returns None when it does not converge.
pub fn inverse_map(poly: &[Vec2; 4], p: &Vec2) -> Option<[f64; 2]> {
    let mut xi = [0.0, 0.0];
    let scale = (poly[2] - poly[0]).norm().max((poly[3] - poly[1]).norm());
    for _ in 0..30 {
        let n = shape_values(xi);
        let g = shape_ref_gradients(xi);
        let mut x = Vec2::zeros();
        let mut jac = Mat2::zeros();
        for a in 0..4 {
            x += poly[a] * n[a];
            jac[(0, 0)] += poly[a].x * g[a][0];
            jac[(0, 1)] += poly[a].x * g[a][1];
            jac[(1, 0)] += poly[a].y * g[a][0];
            jac[(1, 1)] += poly[a].y * g[a][1];
        }
        let r = p - x;
        let inv = jac.try_inverse()?;
        let d = inv * r;
        xi[0] += d.x;
        xi[1] += d.y;
        if xi[0].abs() > 10.0 || xi[1].abs() > 10.0 {
            return None;
        }
        if r.norm() <= 1e-15 * scale.max(1.0) || d.norm() < 1e-15 {
            return Some(xi);
        }
    }
    let r = p - map_point(poly, xi);
    (r.norm() < 1e-11 * scale).then_some(xi)
}

/// Gauss–Legendre points and weights on [−1, 1].
pub fn gauss_1d(n: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(0.0, 2.0)],
        2 => {
            let a = 1.0 / 3f64.sqrt();
            vec![(-a, 1.0), (a, 1.0)]
        }
        3 => {
            let a = (0.6f64).sqrt();
            vec![(-a, 5.0 / 9.0), (0.0, 8.0 / 9.0), (a, 5.0 / 9.0)]
        }
        _ => {
            let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            vec![(-b, wb), (-a, wa), (a, wa), (b, wb)]
        }
    }
}

/// Tensor Gauss rule on the reference square.
pub fn gauss_quad(n: usize) -> Vec<([f64; 2], f64)> {
    let g = gauss_1d(n);
    let mut out = Vec::with_capacity(g.len() * g.len());
    for &(y, wy) in &g {
        for &(x, wx) in &g {
            out.push(([x, y], wx * wy));
        }
    }
    out
}

/// Reference coordinates of the point at parameter `s ∈ [0, 1]` along local edge `k`.
pub fn edge_point(k: usize, s: f64) -> [f64; 2] {
    let t = -1.0 + 2.0 * s;
    match k {
        0 => [t, -1.0],
        1 => [1.0, t],
        2 => [-t, 1.0],
        _ => [-1.0, -t],
    }
}
