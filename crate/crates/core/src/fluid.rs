//! Stabilized incompressible Navier–Stokes element and facet kernels in ALE
//! form on bilinear quads: Galerkin terms, residual-based SUPG/PSPG/LSIC
//! stabilization, one-step-θ time terms and face-jump ghost penalties.
//!
//! Local dof layout for one element is `3 * a + c` with velocity components
//! `c = 0, 1` and pressure `c = 2` at node `a`.

use serde::{Deserialize, Serialize};

use crate::cutcell::QuadPoint;
use crate::error::Result;
use crate::fem::{eval_basis, gauss_quad, Basis, Mat2};
use crate::geometry::{vec2, Vec2};

pub const C_I: f64 = 36.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub rho: f64,
    pub mu: f64,
    pub theta: f64,
    pub dt: f64,
    /// Without time terms, τ_M has no 2ρ/Δt contribution and σ = 0.
    pub transient: bool,
    pub c_u: f64,
    pub c_sigma: f64,
    pub gamma_c: f64,
    pub gamma_u: f64,
    pub gamma_p: f64,
    /// Disables SUPG/PSPG/LSIC (used by consistency tests).
    pub stabilized: bool,
}

impl FluidParams {
    pub fn new(rho: f64, mu: f64, theta: f64, dt: f64) -> Self {
        FluidParams {
            rho,
            mu,
            theta,
            dt,
            transient: true,
            c_u: 1.0,
            c_sigma: 1.0,
            gamma_c: 0.05,
            gamma_u: 0.05,
            gamma_p: 0.05,
            stabilized: true,
        }
    }

    pub fn steady(rho: f64, mu: f64) -> Self {
        FluidParams {
            transient: false,
            ..FluidParams::new(rho, mu, 1.0, 1.0)
        }
    }

    pub fn nu(&self) -> f64 {
        self.mu / self.rho
    }

    /// σ = 1/(θΔt), zero for steady problems.
    pub fn sigma(&self) -> f64 {
        if self.transient {
            1.0 / (self.theta * self.dt)
        } else {
            0.0
        }
    }

    /// φ_T = ν + c_u ‖c‖_∞ h + c_σ σ h²
    pub fn phi_t(&self, c_inf: f64, h: f64) -> f64 {
        self.nu() + self.c_u * c_inf * h + self.c_sigma * self.sigma() * h * h
    }
}

/// τ_M = ((2ρ/Δt)² + (ρc)·G(ρc) + C_I μ² G:G)^{-1/2}; `dt = None` drops the time term.
pub fn tau_m(rho: f64, mu: f64, dt: Option<f64>, c: &Vec2, g: &Mat2) -> f64 {
    let time = dt.map_or(0.0, |dt| (2.0 * rho / dt).powi(2));
    let rc = c * rho;
    let conv = rc.dot(&(g * rc));
    let visc = C_I * mu * mu * g.component_mul(g).sum();
    (time + conv + visc).powf(-0.5)
}

/// τ_C = 1/(τ_M tr G)
pub fn tau_c(tau_m: f64, tr_g: f64) -> f64 {
    1.0 / (tau_m * tr_g)
}

/// Nodal data of one fluid element. Positions are in the current configuration.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub id: usize,
    pub coords: [Vec2; 4],
    /// Current iterate (u1, u2, p) per node.
    pub up: [f64; 12],
    /// Linearization state used for the frozen stabilization parameters.
    pub up_lin: [f64; 12],
    /// Previous-step velocity and acceleration (pressure slots unused).
    pub up_old: [f64; 12],
    pub acc_old: [f64; 12],
    /// Grid velocity per node (zero on the fixed background mesh).
    pub grid_vel: [Vec2; 4],
}

impl ElementData {
    pub fn velocity(&self, a: usize) -> Vec2 {
        vec2(self.up[3 * a], self.up[3 * a + 1])
    }

    /// Max nodal convective speed |u − û| of the linearization state.
    pub fn c_inf(&self) -> f64 {
        (0..4)
            .map(|a| (vec2(self.up_lin[3 * a], self.up_lin[3 * a + 1]) - self.grid_vel[a]).norm())
            .fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        let p = &self.coords;
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                d = d.max((p[i] - p[j]).norm());
            }
        }
        d
    }

    /// Frozen (τ_M, τ_C) from the linearization state at the element center.
    pub fn taus(&self, params: &FluidParams) -> Result<(f64, f64)> {
        let b = eval_basis(self.id, &self.coords, [0.0, 0.0])?;
        let mut c = Vec2::zeros();
        for a in 0..4 {
            c += (vec2(self.up_lin[3 * a], self.up_lin[3 * a + 1]) - self.grid_vel[a]) * b.n[a];
        }
        let g = b.metric();
        let dt = params.transient.then_some(params.dt);
        let tm = tau_m(params.rho, params.mu, dt, &c, &g);
        Ok((tm, tau_c(tm, g.trace())))
    }
}

/// Dense local residual vector and tangent (row-major).
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub n: usize,
    pub r: Vec<f64>,
    pub k: Vec<f64>,
}

impl LocalSystem {
    pub fn zeros(n: usize) -> Self {
        LocalSystem {
            n,
            r: vec![0.0; n],
            k: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn kadd(&mut self, i: usize, j: usize, v: f64) {
        self.k[i * self.n + j] += v;
    }
}

/// Quadrature for one element: tensor Gauss on the full element, or the
/// physical-weight points of a cut cell.
#[derive(Debug, Clone, Copy)]
pub enum ElementQuadrature<'a> {
    Full(usize),
    Cut(&'a [QuadPoint]),
}

struct Sample {
    basis: Basis,
    hess: [Mat2; 4],
    w: f64,
}

fn samples(el: &ElementData, quad: ElementQuadrature) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    match quad {
        ElementQuadrature::Full(n) => {
            for (xi, w) in gauss_quad(n) {
                let basis = eval_basis(el.id, &el.coords, xi)?;
                let hess = basis.hessians(&el.coords);
                let w = w * basis.det_j;
                out.push(Sample { basis, hess, w });
            }
        }
        ElementQuadrature::Cut(points) => {
            for q in points {
                let basis = eval_basis(el.id, &el.coords, q.xi)?;
                let hess = basis.hessians(&el.coords);
                out.push(Sample {
                    basis,
                    hess,
                    w: q.w,
                });
            }
        }
    }
    Ok(out)
}

/// Momentum, continuity and stabilization residual with its consistent
/// tangent for one element (12 local dofs). `body` is the body force per unit mass.
pub fn element_system(
    el: &ElementData,
    quad: ElementQuadrature,
    params: &FluidParams,
    body: &dyn Fn(Vec2) -> Vec2,
    with_tangent: bool,
) -> Result<LocalSystem> {
    let rho = params.rho;
    let mu = params.mu;
    let st = params.sigma();
    let one_minus = if params.transient {
        (1.0 - params.theta) / params.theta
    } else {
        0.0
    };
    let (tm, tc) = if params.stabilized {
        el.taus(params)?
    } else {
        (0.0, 0.0)
    };
    let mut ls = LocalSystem::zeros(12);

    for s in samples(el, quad)? {
        let b = &s.basis;
        let w = s.w;
        let mut u = Vec2::zeros();
        let mut gu = Mat2::zeros(); // gu[(i, j)] = ∂u_i/∂x_j
        let mut p = 0.0;
        let mut gp = Vec2::zeros();
        let mut lap = Vec2::zeros();
        let mut grad_div = Vec2::zeros();
        let mut uhat = Vec2::zeros();
        let mut acc = Vec2::zeros();
        for a in 0..4 {
            let ua = el.velocity(a);
            u += ua * b.n[a];
            gu += ua * b.grad[a].transpose();
            p += el.up[3 * a + 2] * b.n[a];
            gp += b.grad[a] * el.up[3 * a + 2];
            lap += ua * s.hess[a].trace();
            grad_div += s.hess[a] * ua;
            uhat += el.grid_vel[a] * b.n[a];
            if params.transient {
                let uo = vec2(el.up_old[3 * a], el.up_old[3 * a + 1]);
                let ao = vec2(el.acc_old[3 * a], el.acc_old[3 * a + 1]);
                acc += ((ua - uo) * st - ao * one_minus) * b.n[a];
            }
        }
        let c = u - uhat;
        let conv = gu * c;
        let div = gu.trace();
        let f = body(b.x);
        let rm = (acc + conv - f) * rho + gp - (lap + grad_div) * mu;
        let eps2 = gu + gu.transpose();

        let c_grad: [f64; 4] = std::array::from_fn(|a| c.dot(&b.grad[a]));

        for bb in 0..4 {
            let nb = b.n[bb];
            let gb = b.grad[bb];
            for i in 0..2 {
                let visc = mu * (eps2.row(i).transpose().dot(&gb));
                let mut r = rho * (acc[i] + conv[i] - f[i]) * nb + visc - p * gb[i];
                r += tm * rm[i] * rho * c_grad[bb] + tc * div * gb[i];
                ls.r[3 * bb + i] += w * r;
            }
            ls.r[3 * bb + 2] += w * (div * nb + tm * rm.dot(&gb));
        }

        if !with_tangent {
            continue;
        }
        for a in 0..4 {
            let na = b.n[a];
            let ga = b.grad[a];
            let ha = &s.hess[a];
            // dR_M,i/du_{a,k}
            let mut drm = Mat2::zeros();
            for i in 0..2 {
                for k in 0..2 {
                    let delta = if i == k { 1.0 } else { 0.0 };
                    drm[(i, k)] = rho * (st * na * delta + c_grad[a] * delta + na * gu[(i, k)])
                        - mu * (ha.trace() * delta + ha[(i, k)]);
                }
            }
            for bb in 0..4 {
                let nb = b.n[bb];
                let gb = b.grad[bb];
                for i in 0..2 {
                    let row = 3 * bb + i;
                    for k in 0..2 {
                        let delta = if i == k { 1.0 } else { 0.0 };
                        let mut v =
                            rho * (st * na * delta + c_grad[a] * delta + na * gu[(i, k)]) * nb;
                        v += mu * (delta * ga.dot(&gb) + ga[i] * gb[k]);
                        v += tm * drm[(i, k)] * rho * c_grad[bb] + tm * rm[i] * rho * na * gb[k];
                        v += tc * ga[k] * gb[i];
                        ls.kadd(row, 3 * a + k, w * v);
                    }
                    let v = -na * gb[i] + tm * ga[i] * rho * c_grad[bb];
                    ls.kadd(row, 3 * a + 2, w * v);
                }
                let row = 3 * bb + 2;
                for k in 0..2 {
                    let v = ga[k] * nb + tm * (drm[(0, k)] * gb[0] + drm[(1, k)] * gb[1]);
                    ls.kadd(row, 3 * a + k, w * v);
                }
                ls.kadd(row, 3 * a + 2, w * tm * ga.dot(&gb));
            }
        }
    }
    Ok(ls)
}

/// Per-facet ghost-penalty coefficients (γ_c…, γ_u…, γ_p… prefactors including h_F).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhostCoefficients {
    pub c: f64,
    pub u: f64,
    pub p: f64,
}

/// Prefactors of the three face-jump penalties for a facet between `left`
/// and `right`; element quantities are averaged.
pub fn ghost_coefficients(
    left: &ElementData,
    right: &ElementData,
    params: &FluidParams,
) -> GhostCoefficients {
    let (hl, hr) = (left.diameter(), right.diameter());
    let (cl, cr) = (left.c_inf(), right.c_inf());
    let (pl, pr) = (params.phi_t(cl, hl), params.phi_t(cr, hr));
    let h_f = 0.5 * (hl + hr);
    let phi_u = 0.5 * (pl + pr);
    let phi_c = 0.5 * (hl * hl / pl + hr * hr / pr);
    let c_inf = cl.max(cr);
    let rho = params.rho;
    GhostCoefficients {
        c: params.gamma_c
            * rho
            * (params.nu() + phi_c * c_inf * c_inf + params.sigma() * h_f * h_f)
            * h_f,
        u: params.gamma_u * phi_u * rho * h_f,
        p: params.gamma_p * phi_c / rho * h_f,
    }
}

/// Ghost-penalty residual and tangent on one facet. Local dofs: the left
/// element's 12 followed by the right element's 12. `pts` are (ξ_left,
/// ξ_right, weight) triples and `n` is the unit normal from left to right.
pub fn ghost_facet_system(
    left: &ElementData,
    right: &ElementData,
    pts: &[([f64; 2], [f64; 2], f64)],
    n: &Vec2,
    coef: &GhostCoefficients,
    with_tangent: bool,
) -> Result<LocalSystem> {
    let mut ls = LocalSystem::zeros(24);
    for &(xl, xr, w) in pts {
        let bl = eval_basis(left.id, &left.coords, xl)?;
        let br = eval_basis(right.id, &right.coords, xr)?;
        // jump operators as linear functionals of the 24 local dofs
        let mut dn_u = [[0.0; 24]; 2];
        let mut div = [0.0; 24];
        let mut dn_p = [0.0; 24];
        for (side, b, sign) in [(0usize, &bl, 1.0), (1, &br, -1.0)] {
            for a in 0..4 {
                let g = b.grad[a];
                let dn = g.dot(n);
                let base = 12 * side + 3 * a;
                dn_u[0][base] = sign * dn;
                dn_u[1][base + 1] = sign * dn;
                div[base] = sign * g.x;
                div[base + 1] = sign * g.y;
                dn_p[base + 2] = sign * dn;
            }
        }
        let vals: Vec<f64> = left.up.iter().chain(right.up.iter()).copied().collect();
        let apply = |op: &[f64; 24]| -> f64 { op.iter().zip(&vals).map(|(o, v)| o * v).sum() };
        let terms: [(&[f64; 24], f64); 4] = [
            (&dn_u[0], coef.c),
            (&dn_u[1], coef.c),
            (&div, coef.u),
            (&dn_p, coef.p),
        ];
        for (op, cf) in terms {
            let j = apply(op);
            for r in 0..24 {
                if op[r] != 0.0 {
                    ls.r[r] += w * cf * j * op[r];
                    if with_tangent {
                        for col in 0..24 {
                            if op[col] != 0.0 {
                                ls.kadd(r, col, w * cf * op[r] * op[col]);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ls)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_element(h: f64) -> ElementData {
        ElementData {
            id: 0,
            coords: [vec2(0., 0.), vec2(h, 0.), vec2(h, h), vec2(0., h)],
            up: [0.0; 12],
            up_lin: [0.0; 12],
            up_old: [0.0; 12],
            acc_old: [0.0; 12],
            grid_vel: [Vec2::zeros(); 4],
        }
    }

    #[test]
    fn tau_values_for_unit_square() {
        let g = Mat2::new(4.0, 0.0, 0.0, 4.0);
        let tm = tau_m(1.0, 1.0, Some(1.0), &Vec2::zeros(), &g);
        assert!((tm - 1.0 / 34.0).abs() < 1e-15);
        assert!((tau_c(tm, 8.0) - 4.25).abs() < 1e-13);
        assert_eq!(tau_c(1.0, 1.0), 1.0);
        let lim = tau_m(1.0, 1.0, None, &Vec2::zeros(), &g);
        assert!((lim - (36.0f64 * 32.0).powf(-0.5)).abs() < 1e-15);
        let a = tau_m(2.0, 0.1, Some(0.1), &vec2(0.5, 0.25), &g);
        let b = tau_m(2.0, 0.1, Some(0.1), &vec2(0.5, 0.25), &g);
        assert_eq!(a, b);
        let c1 = tau_m(1.0, 0.0, None, &vec2(1.0, 2.0), &g);
        let c2 = tau_m(2.0, 0.0, None, &vec2(0.5, 1.0), &g);
        assert!((c1 - c2).abs() < 1e-15);
    }

    fn fd_check(el: &ElementData, params: &FluidParams) {
        let body = |x: Vec2| vec2(x.y.sin(), x.x * x.x);
        let ls = element_system(el, ElementQuadrature::Full(2), params, &body, true).unwrap();
        for j in 0..12 {
            let eps = 1e-6;
            let mut ep = el.clone();
            ep.up[j] += eps;
            let mut em = el.clone();
            em.up[j] -= eps;
            let rp = element_system(&ep, ElementQuadrature::Full(2), params, &body, false)
                .unwrap()
                .r;
            let rm = element_system(&em, ElementQuadrature::Full(2), params, &body, false)
                .unwrap()
                .r;
            for i in 0..12 {
                let fd = (rp[i] - rm[i]) / (2.0 * eps);
                let an = ls.k[i * 12 + j];
                assert!(
                    (fd - an).abs() < 1e-6 * (1.0 + an.abs()),
                    "i={i} j={j} fd={fd} an={an}"
                );
            }
        }
    }

    #[test]
    fn tangent_matches_finite_differences() {
        let mut el = square_element(1.0);
        el.coords = [
            vec2(0., 0.),
            vec2(1.1, 0.1),
            vec2(1.3, 0.9),
            vec2(-0.1, 1.2),
        ];
        for (k, v) in el.up.iter_mut().enumerate() {
            *v = ((k as f64) * 0.7).sin();
        }
        el.up_lin = el.up;
        el.up_lin[0] += 0.3;
        el.up_old = std::array::from_fn(|k| ((k as f64) * 1.3).cos());
        el.acc_old = std::array::from_fn(|k| (k as f64) * 0.1);
        el.grid_vel = [
            vec2(0.1, 0.0),
            vec2(0.2, 0.1),
            vec2(0.0, -0.1),
            vec2(0.05, 0.05),
        ];
        let mut params = FluidParams::new(1.3, 0.7, 0.55, 0.1);
        fd_check(&el, &params);
        params.transient = false;
        fd_check(&el, &params);
    }

    #[test]
    fn zero_state_gives_zero_residual() {
        let el = square_element(0.5);
        let ls = element_system(
            &el,
            ElementQuadrature::Full(2),
            &FluidParams::new(1.0, 1.0, 1.0, 0.1),
            &|_| Vec2::zeros(),
            false,
        )
        .unwrap();
        assert!(ls.r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rigid_translation_only_feels_time_terms() {
        let mut el = square_element(1.0);
        for a in 0..4 {
            el.up[3 * a] = 2.0;
            el.up[3 * a + 1] = -1.0;
            el.up_lin = el.up;
            el.up_old[3 * a] = 2.0;
            el.up_old[3 * a + 1] = -1.0;
        }
        let ls = element_system(
            &el,
            ElementQuadrature::Full(2),
            &FluidParams::new(1.0, 1.0, 1.0, 0.1),
            &|_| Vec2::zeros(),
            false,
        )
        .unwrap();
        assert!(ls.r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn couette_state_has_zero_residual() {
        let mut el = square_element(0.25);
        el.coords = el.coords.map(|p| p + vec2(0.5, 0.25));
        for a in 0..4 {
            el.up[3 * a] = el.coords[a].y;
        }
        el.up_lin = el.up;
        let params = FluidParams::steady(1.0, 1.0);
        let ls = element_system(
            &el,
            ElementQuadrature::Full(2),
            &params,
            &|_| Vec2::zeros(),
            false,
        )
        .unwrap();
        // interior residual sums: the viscous flux through the element boundary is all that remains
        for i in 0..2 {
            let sum: f64 = (0..4).map(|a| ls.r[3 * a + i]).sum();
            assert!(sum.abs() < 1e-14);
        }
        for a in 0..4 {
            assert!(ls.r[3 * a + 2].abs() < 1e-14);
        }
    }

    #[test]
    fn pspg_pressure_block_is_symmetric() {
        let mut el = square_element(1.0);
        el.coords = [
            vec2(0., 0.),
            vec2(1.1, 0.1),
            vec2(1.3, 0.9),
            vec2(-0.1, 1.2),
        ];
        let params = FluidParams::steady(1.0, 1.0);
        let ls = element_system(
            &el,
            ElementQuadrature::Full(2),
            &params,
            &|_| Vec2::zeros(),
            true,
        )
        .unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let (x, y) = (
                    ls.k[(3 * a + 2) * 12 + 3 * b + 2],
                    ls.k[(3 * b + 2) * 12 + 3 * a + 2],
                );
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ghost_penalty_single_facet_energy() {
        let left = square_element(1.0);
        let mut right = square_element(1.0);
        right.id = 1;
        right.coords = right.coords.map(|p| p + vec2(1.0, 0.0));
        // u1 = 0 on the left, u1 = x − 1 on the right: unit jump of ∂_n u1
        for a in 0..4 {
            right.up[3 * a] = right.coords[a].x - 1.0;
        }
        let mut params = FluidParams::steady(1.0, 1.0);
        params.gamma_c = 1.0;
        params.gamma_u = 0.0;
        params.gamma_p = 0.0;
        let coef = ghost_coefficients(&left, &right, &params);
        let h_f = 2f64.sqrt();
        assert!((coef.c - h_f).abs() < 1e-14);
        let pts: Vec<_> = crate::fem::gauss_1d(2)
            .iter()
            .map(|&(g, w)| {
                let s = 0.5 * (g + 1.0);
                (
                    crate::fem::edge_point(1, s),
                    crate::fem::edge_point(3, 1.0 - s),
                    0.5 * w,
                )
            })
            .collect();
        let ls = ghost_facet_system(&left, &right, &pts, &vec2(1.0, 0.0), &coef, true).unwrap();
        let vals: Vec<f64> = left.up.iter().chain(right.up.iter()).copied().collect();
        let energy: f64 = (0..24).map(|i| vals[i] * ls.r[i]).sum();
        assert!((energy - h_f).abs() < 1e-13);
    }

    #[test]
    fn ghost_penalty_vanishes_for_linear_fields() {
        let mut left = square_element(1.0);
        let mut right = square_element(1.0);
        right.id = 1;
        right.coords = right.coords.map(|p| p + vec2(1.0, 0.0));
        for el in [&mut left, &mut right] {
            for a in 0..4 {
                let x = el.coords[a];
                el.up[3 * a] = 2.0 * x.x - x.y;
                el.up[3 * a + 1] = 0.5 * x.y;
                el.up[3 * a + 2] = x.x + x.y;
            }
        }
        let params = FluidParams::new(1.0, 1.0, 1.0, 0.1);
        let coef = ghost_coefficients(&left, &right, &params);
        let pts = vec![(
            crate::fem::edge_point(1, 0.3),
            crate::fem::edge_point(3, 0.7),
            0.5,
        )];
        let ls = ghost_facet_system(&left, &right, &pts, &vec2(1.0, 0.0), &coef, false).unwrap();
        assert!(ls.r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn ghost_pressure_scaling_follows_h() {
        let params = FluidParams::new(1.0, 0.01, 1.0, 0.01);
        let make = |h: f64| {
            let l = square_element(h);
            let mut r = square_element(h);
            r.coords = r.coords.map(|p| p + vec2(h, 0.0));
            ghost_coefficients(&l, &r, &params).p
        };
        let (h1, h2) = (0.1, 0.05);
        let phi = |h: f64| params.phi_t(0.0, 2f64.sqrt() * h);
        let expected = (h2 * h2 / phi(h2) * h2) / (h1 * h1 / phi(h1) * h1);
        assert!((make(h2) / make(h1) - expected).abs() < 1e-12);
    }
}
