//! Nitsche-type weak coupling of a fluid to a second field across an
//! interface: fluid–fluid (patch to background) and fluid–solid.
//!
//! The flux is always taken from the "owning" fluid side F, whose outward
//! normal is `n_out`. The jump is J = u_F − u_other. Local dofs are the 12
//! fluid dofs of F (layout `3 * a + c`) followed by the other side's dofs.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::{eval_basis, Basis, Mat2};
use crate::fluid::{ElementData, FluidParams, LocalSystem};
use crate::geometry::{vec2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NitscheParams {
    pub gamma: f64,
    /// Trace-inequality constant of the viscous penalty μ C_tr / h.
    pub c_trace: f64,
    /// +1 for the non-symmetric adjoint-consistency term, −1 for the symmetric one.
    pub adjoint_sign: f64,
}

impl Default for NitscheParams {
    fn default() -> Self {
        NitscheParams {
            gamma: 50.0,
            c_trace: 8.0,
            adjoint_sign: 1.0,
        }
    }
}

/// Coefficients at one interface point.
#[derive(Debug, Clone, Copy)]
pub struct PointCoefficients {
    pub mu: f64,
    pub rho: f64,
    pub adjoint_sign: f64,
    /// γ μ C_tr / h
    pub visc_penalty: f64,
    /// γ ρ φ / h
    pub mass_penalty: f64,
    /// Fluid–fluid convective terms: normal pointing out of the other side and frozen |β|.
    pub convective: Option<(Vec2, f64)>,
}

/// Trace of the other side at one point.
pub struct OtherTrace<'a> {
    /// Shape values of the other side's nodes.
    pub n: &'a [f64],
    /// Dofs per node in the local layout (3 for fluid, 2 for solid).
    pub stride: usize,
    pub velocity: Vec2,
    /// ∂u_other/∂dof per unit shape value.
    pub velocity_factor: f64,
}

struct Column {
    dj: Vec2,
    dp: f64,
    dsn: Vec2,
    dbeta: f64,
}

/// Adds the weighted coupling integrand at one point to `ls`.
pub fn interface_point(
    ls: &mut LocalSystem,
    f: &Basis,
    fel: &ElementData,
    other: &OtherTrace,
    n: &Vec2,
    w: f64,
    c: &PointCoefficients,
    with_tangent: bool,
) {
    let no = other.n.len() * other.stride;
    debug_assert_eq!(ls.n, 12 + no);
    let mut uf = Vec2::zeros();
    let mut gu = Mat2::zeros();
    let mut p = 0.0;
    for a in 0..4 {
        let ua = fel.velocity(a);
        uf += ua * f.n[a];
        gu += ua * f.grad[a].transpose();
        p += fel.up[3 * a + 2] * f.n[a];
    }
    let sn = (gu + gu.transpose()) * n;
    let j = uf - other.velocity;
    let jn = j.dot(n);
    let (beta, beta_abs, n_ff) = match c.convective {
        Some((n_ff, beta_abs)) => (
            0.5 * c.rho * (uf + other.velocity).dot(&n_ff),
            beta_abs,
            n_ff,
        ),
        None => (0.0, 0.0, Vec2::zeros()),
    };
    let conv = c.convective.is_some();
    let mu = c.mu;

    // fluid-side rows
    for b in 0..4 {
        let nb = f.n[b];
        let gb = f.grad[b];
        let dn_b = gb.dot(n);
        for i in 0..2 {
            let mut r = -mu * sn[i] * nb + p * n[i] * nb;
            r += c.adjoint_sign * mu * (j[i] * dn_b + n[i] * j.dot(&gb));
            r += c.visc_penalty * j[i] * nb + c.mass_penalty * jn * n[i] * nb;
            if conv {
                r += -0.5 * beta * j[i] * nb + 0.5 * beta_abs * j[i] * nb;
            }
            ls.r[3 * b + i] += w * r;
        }
        ls.r[3 * b + 2] += w * (-jn * nb);
    }
    // other-side rows
    for b in 0..other.n.len() {
        let nb = other.n[b];
        for i in 0..2 {
            let mut r = mu * sn[i] * nb - p * n[i] * nb;
            r -= c.visc_penalty * j[i] * nb + c.mass_penalty * jn * n[i] * nb;
            if conv {
                r += -0.5 * beta * j[i] * nb - 0.5 * beta_abs * j[i] * nb;
            }
            ls.r[12 + other.stride * b + i] += w * r;
        }
    }
    if !with_tangent {
        return;
    }

    let mut cols: Vec<(usize, Column)> = Vec::with_capacity(12 + no);
    for a in 0..4 {
        let ga = f.grad[a];
        let dna = ga.dot(n);
        for k in 0..2 {
            let e = if k == 0 {
                vec2(1.0, 0.0)
            } else {
                vec2(0.0, 1.0)
            };
            cols.push((
                3 * a + k,
                Column {
                    dj: e * f.n[a],
                    dp: 0.0,
                    dsn: e * dna + ga * n[k],
                    dbeta: 0.5 * c.rho * n_ff[k] * f.n[a],
                },
            ));
        }
        cols.push((
            3 * a + 2,
            Column {
                dj: Vec2::zeros(),
                dp: f.n[a],
                dsn: Vec2::zeros(),
                dbeta: 0.0,
            },
        ));
    }
    for a in 0..other.n.len() {
        let v = other.n[a] * other.velocity_factor;
        for k in 0..2 {
            let e = if k == 0 {
                vec2(1.0, 0.0)
            } else {
                vec2(0.0, 1.0)
            };
            cols.push((
                12 + other.stride * a + k,
                Column {
                    dj: -e * v,
                    dp: 0.0,
                    dsn: Vec2::zeros(),
                    dbeta: 0.5 * c.rho * n_ff[k] * v,
                },
            ));
        }
    }

    for (col, d) in &cols {
        let djn = d.dj.dot(n);
        for b in 0..4 {
            let nb = f.n[b];
            let gb = f.grad[b];
            let dn_b = gb.dot(n);
            for i in 0..2 {
                let mut v = -mu * d.dsn[i] * nb + d.dp * n[i] * nb;
                v += c.adjoint_sign * mu * (d.dj[i] * dn_b + n[i] * d.dj.dot(&gb));
                v += c.visc_penalty * d.dj[i] * nb + c.mass_penalty * djn * n[i] * nb;
                if conv {
                    v += -0.5 * (d.dbeta * j[i] + beta * d.dj[i]) * nb
                        + 0.5 * beta_abs * d.dj[i] * nb;
                }
                if v != 0.0 {
                    ls.kadd(3 * b + i, *col, w * v);
                }
            }
            if djn != 0.0 {
                ls.kadd(3 * b + 2, *col, -w * djn * nb);
            }
        }
        for b in 0..other.n.len() {
            let nb = other.n[b];
            for i in 0..2 {
                let mut v = mu * d.dsn[i] * nb - d.dp * n[i] * nb;
                v -= c.visc_penalty * d.dj[i] * nb + c.mass_penalty * djn * n[i] * nb;
                if conv {
                    v += -0.5 * (d.dbeta * j[i] + beta * d.dj[i]) * nb
                        - 0.5 * beta_abs * d.dj[i] * nb;
                }
                if v != 0.0 {
                    ls.kadd(12 + other.stride * b + i, *col, w * v);
                }
            }
        }
    }
}

/// One point of a fluid–fluid interface segment: ξ in the patch element, ξ in
/// the background element and the weight.
pub type CouplingPoint = ([f64; 2], [f64; 2], f64);

fn nodal_velocity(up: &[f64; 12], n: &[f64; 4]) -> Vec2 {
    (0..4).fold(Vec2::zeros(), |acc, a| {
        acc + vec2(up[3 * a], up[3 * a + 1]) * n[a]
    })
}

/// Fluid–fluid coupling on one interface segment between a patch element
/// (flux side) and a background element. `n_bg` is the background outward
/// normal (pointing into the patch); `h` is the patch facet length.
/// Local dofs: patch 12 then background 12.
pub fn fluid_fluid_segment(
    patch: &ElementData,
    bg: &ElementData,
    points: &[CouplingPoint],
    n_bg: &Vec2,
    h: f64,
    fluid: &FluidParams,
    nit: &NitscheParams,
    with_tangent: bool,
) -> Result<LocalSystem> {
    let mut ls = LocalSystem::zeros(24);
    let phi = 0.5
        * (fluid.phi_t(bg.c_inf(), bg.diameter()) + fluid.phi_t(patch.c_inf(), patch.diameter()));
    let n_out = -n_bg;
    for &(xp, xb, w) in points {
        let fp = eval_basis(patch.id, &patch.coords, xp)?;
        let fb = eval_basis(bg.id, &bg.coords, xb)?;
        let u_bg = nodal_velocity(&bg.up, &fb.n);
        let beta_lin = 0.5
            * fluid.rho
            * (nodal_velocity(&patch.up_lin, &fp.n) + nodal_velocity(&bg.up_lin, &fb.n)).dot(n_bg);
        let coefs = PointCoefficients {
            mu: fluid.mu,
            rho: fluid.rho,
            adjoint_sign: nit.adjoint_sign,
            visc_penalty: nit.gamma * fluid.mu * nit.c_trace / h,
            mass_penalty: nit.gamma * fluid.rho * phi / h,
            convective: Some((*n_bg, beta_lin.abs())),
        };
        // background pressure dofs carry no coupling terms but keep the 3-dof stride
        let other = OtherTrace {
            n: &fb.n,
            stride: 3,
            velocity: u_bg,
            velocity_factor: 1.0,
        };
        interface_point(&mut ls, &fp, patch, &other, &n_out, w, &coefs, with_tangent);
    }
    Ok(ls)
}

/// Fluid–solid coupling on one interface piece. `points` are (ξ in the fluid
/// element, facet parameter s in [0, 1] between the two solid nodes, weight).
/// `velocity` holds the solid nodal velocities and `velocity_factor` is
/// ∂ḋ/∂D of the time integrator. `n_out` points from the fluid into the
/// solid. Local dofs: fluid 12 then solid 4 (layout `2 * b + i`).
#[allow(clippy::too_many_arguments)]
pub fn fluid_solid_facet(
    fluid_el: &ElementData,
    points: &[([f64; 2], f64, f64)],
    velocity: &[Vec2; 2],
    velocity_factor: f64,
    n_out: &Vec2,
    h: f64,
    fluid: &FluidParams,
    nit: &NitscheParams,
    with_tangent: bool,
) -> Result<LocalSystem> {
    let mut ls = LocalSystem::zeros(16);
    let phi = fluid.phi_t(fluid_el.c_inf(), fluid_el.diameter());
    let coefs = PointCoefficients {
        mu: fluid.mu,
        rho: fluid.rho,
        adjoint_sign: nit.adjoint_sign,
        visc_penalty: nit.gamma * fluid.mu * nit.c_trace / h,
        mass_penalty: nit.gamma * fluid.rho * phi / h,
        convective: None,
    };
    for &(xi, s, w) in points {
        let fb = eval_basis(fluid_el.id, &fluid_el.coords, xi)?;
        let ns = [1.0 - s, s];
        let other = OtherTrace {
            n: &ns,
            stride: 2,
            velocity: velocity[0] * ns[0] + velocity[1] * ns[1],
            velocity_factor,
        };
        interface_point(
            &mut ls,
            &fb,
            fluid_el,
            &other,
            n_out,
            w,
            &coefs,
            with_tangent,
        );
    }
    Ok(ls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::edge_point;

    fn element(id: usize, origin: Vec2, h: f64, field: impl Fn(Vec2) -> [f64; 3]) -> ElementData {
        let coords = [
            origin,
            origin + vec2(h, 0.),
            origin + vec2(h, h),
            origin + vec2(0., h),
        ];
        let mut up = [0.0; 12];
        for a in 0..4 {
            up[3 * a..3 * a + 3].copy_from_slice(&field(coords[a]));
        }
        ElementData {
            id,
            coords,
            up,
            up_lin: up,
            up_old: [0.0; 12],
            acc_old: [0.0; 12],
            grid_vel: [Vec2::zeros(); 4],
        }
    }

    fn wavy(x: Vec2) -> [f64; 3] {
        [0.3 + x.y * x.x, -0.2 + 0.5 * x.x, 1.0 + x.x - x.y]
    }

    fn shifted(x: Vec2) -> [f64; 3] {
        [0.1 - x.y, 0.4 * x.x * x.y, -x.y]
    }

    // patch element on [0,1]², background element on [1,2]×[0,1]; interface x = 1
    fn ff_points() -> Vec<CouplingPoint> {
        crate::fem::gauss_1d(2)
            .into_iter()
            .map(|(g, w)| {
                let s = 0.5 * (g + 1.0);
                (edge_point(1, s), edge_point(3, 1.0 - s), 0.5 * w)
            })
            .collect()
    }

    fn fd_check(ls: &LocalSystem, eval: &dyn Fn(usize, f64) -> Vec<f64>, cols: &[usize]) {
        let eps = 1e-6;
        let scale = ls.k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for &c in cols {
            let rp = eval(c, eps);
            let rm = eval(c, -eps);
            for r in 0..ls.n {
                let fd = (rp[r] - rm[r]) / (2.0 * eps);
                assert!(
                    (fd - ls.k[r * ls.n + c]).abs() < 1e-6 * scale,
                    "row {r} col {c}: fd {fd} vs {}",
                    ls.k[r * ls.n + c]
                );
            }
        }
    }

    #[test]
    fn fluid_fluid_tangent_matches_finite_differences() {
        let patch = element(0, vec2(0., 0.), 1.0, wavy);
        let bg = element(1, vec2(1., 0.), 1.0, shifted);
        let fp = FluidParams::new(1.3, 0.07, 1.0, 0.1);
        let nit = NitscheParams::default();
        let n_bg = vec2(-1.0, 0.0);
        let ls =
            fluid_fluid_segment(&patch, &bg, &ff_points(), &n_bg, 1.0, &fp, &nit, true).unwrap();
        let eval = |c: usize, e: f64| {
            let (mut p, mut b) = (patch.clone(), bg.clone());
            if c < 12 {
                p.up[c] += e;
            } else {
                b.up[c - 12] += e;
            }
            fluid_fluid_segment(&p, &b, &ff_points(), &n_bg, 1.0, &fp, &nit, false)
                .unwrap()
                .r
        };
        fd_check(&ls, &eval, &(0..24).collect::<Vec<_>>());
    }

    #[test]
    fn matching_fields_have_balanced_traction() {
        // identical linear fields on both sides: no jump, so the residual
        // reduces to equal and opposite consistency tractions
        let lin = |x: Vec2| [0.2 + x.y, 0.5 * x.x - 0.1, 2.0 - x.x];
        let patch = element(0, vec2(0., 0.), 1.0, lin);
        let bg = element(1, vec2(1., 0.), 1.0, lin);
        let fp = FluidParams::steady(1.0, 0.5);
        let ls = fluid_fluid_segment(
            &patch,
            &bg,
            &ff_points(),
            &vec2(-1., 0.),
            1.0,
            &fp,
            &NitscheParams::default(),
            false,
        )
        .unwrap();
        for i in 0..2 {
            let fside: f64 = (0..4).map(|a| ls.r[3 * a + i]).sum();
            let oside: f64 = (0..4).map(|a| ls.r[12 + 3 * a + i]).sum();
            assert!((fside + oside).abs() < 1e-13);
        }
        // traction σn with n = +x: σ = −p I + μ(∇u + ∇uᵀ), p = 2 − x = 1 on x = 1
        let sum_x: f64 = (0..4).map(|a| ls.r[3 * a]).sum();
        let sum_y: f64 = (0..4).map(|a| ls.r[3 * a + 1]).sum();
        assert!((sum_x - 1.0).abs() < 1e-13);
        assert!((sum_y + 0.5 * 1.5).abs() < 1e-13);
        for a in 0..4 {
            assert!(ls.r[3 * a + 2].abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_variant_gives_symmetric_velocity_block() {
        let patch = element(0, vec2(0., 0.), 1.0, wavy);
        let bg = element(1, vec2(1., 0.), 1.0, shifted);
        let mut c = PointCoefficients {
            mu: 0.3,
            rho: 1.0,
            adjoint_sign: -1.0,
            visc_penalty: 12.0,
            mass_penalty: 3.0,
            convective: None,
        };
        let mut ls = LocalSystem::zeros(24);
        for (xp, xb, w) in ff_points() {
            let fpb = eval_basis(0, &patch.coords, xp).unwrap();
            let fbb = eval_basis(1, &bg.coords, xb).unwrap();
            let other = OtherTrace {
                n: &fbb.n,
                stride: 3,
                velocity: nodal_velocity(&bg.up, &fbb.n),
                velocity_factor: 1.0,
            };
            interface_point(&mut ls, &fpb, &patch, &other, &vec2(1., 0.), w, &c, true);
        }
        let vel: Vec<usize> = (0..24).filter(|k| k % 3 != 2).collect();
        let patch_vel: Vec<usize> = (0..12).filter(|k| k % 3 != 2).collect();
        // the patch–patch velocity block is symmetric; the cross blocks are not
        // required to be (the flux comes from the patch only)
        for &r in &patch_vel {
            for &col in &patch_vel {
                assert!((ls.k[r * 24 + col] - ls.k[col * 24 + r]).abs() < 1e-12);
            }
        }
        // penalty-only operator is symmetric over all velocity dofs
        c.mu = 0.0;
        let mut pen = LocalSystem::zeros(24);
        for (xp, xb, w) in ff_points() {
            let fpb = eval_basis(0, &patch.coords, xp).unwrap();
            let fbb = eval_basis(1, &bg.coords, xb).unwrap();
            let other = OtherTrace {
                n: &fbb.n,
                stride: 3,
                velocity: nodal_velocity(&bg.up, &fbb.n),
                velocity_factor: 1.0,
            };
            interface_point(&mut pen, &fpb, &patch, &other, &vec2(1., 0.), w, &c, true);
        }
        for &r in &vel {
            for &col in &vel {
                assert!((pen.k[r * 24 + col] - pen.k[col * 24 + r]).abs() < 1e-12);
            }
        }
    }

    use crate::solid::GAlpha;

    #[derive(Clone, Copy)]
    struct Kin {
        d: [Vec2; 2],
        d_old: [Vec2; 2],
        v_old: [Vec2; 2],
        a_old: [Vec2; 2],
    }

    impl Kin {
        fn velocity(&self, ga: &GAlpha, dt: f64) -> [Vec2; 2] {
            std::array::from_fn(|k| {
                let f = |c: usize| {
                    ga.velocity(
                        dt,
                        self.d[k][c],
                        self.d_old[k][c],
                        self.v_old[k][c],
                        self.a_old[k][c],
                    )
                };
                vec2(f(0), f(1))
            })
        }
    }

    #[test]
    fn fluid_solid_tangent_matches_finite_differences() {
        let fel = element(0, vec2(0., 0.), 0.5, wavy);
        let ga = GAlpha::from_spectral_radius(0.8).unwrap();
        let solid = Kin {
            d: [vec2(0.01, -0.02), vec2(0.03, 0.0)],
            d_old: [vec2(0.0, -0.01), vec2(0.02, 0.01)],
            v_old: [vec2(0.1, 0.2), vec2(-0.1, 0.0)],
            a_old: [vec2(1.0, 0.0), vec2(0.0, -1.0)],
        };
        // solid occupies x > 0.5; fluid facet is the element's right edge
        let pts: Vec<_> = crate::fem::gauss_1d(3)
            .into_iter()
            .map(|(g, w)| {
                let s = 0.5 * (g + 1.0);
                (edge_point(1, s), s, 0.25 * w)
            })
            .collect();
        let fp = FluidParams::new(1.0, 0.1, 1.0, 0.05);
        let nit = NitscheParams::default();
        let n_out = vec2(1.0, 0.0);
        let vf = ga.velocity_factor(0.05);
        let ls = fluid_solid_facet(
            &fel,
            &pts,
            &solid.velocity(&ga, 0.05),
            vf,
            &n_out,
            0.5,
            &fp,
            &nit,
            true,
        )
        .unwrap();
        let eval = |c: usize, e: f64| {
            let mut f2 = fel.clone();
            let mut s2 = solid;
            if c < 12 {
                f2.up[c] += e;
            } else {
                let k = c - 12;
                s2.d[k / 2][k % 2] += e;
            }
            fluid_solid_facet(
                &f2,
                &pts,
                &s2.velocity(&ga, 0.05),
                vf,
                &n_out,
                0.5,
                &fp,
                &nit,
                false,
            )
            .unwrap()
            .r
        };
        fd_check(&ls, &eval, &(0..16).collect::<Vec<_>>());
    }

    #[test]
    fn solid_receives_opposite_force() {
        // fluid at rest with constant pressure 2 against a solid at rest:
        // the solid rows carry the pressure load, the fluid rows the reaction
        let fel = element(0, vec2(0., 0.), 1.0, |_| [0.0, 0.0, 2.0]);
        let z = [Vec2::zeros(); 2];
        let pts: Vec<_> = crate::fem::gauss_1d(2)
            .into_iter()
            .map(|(g, w)| {
                let s = 0.5 * (g + 1.0);
                (edge_point(1, s), s, 0.5 * w)
            })
            .collect();
        let fp = FluidParams::steady(1.0, 0.1);
        let ls = fluid_solid_facet(
            &fel,
            &pts,
            &z,
            10.0,
            &vec2(1., 0.),
            1.0,
            &fp,
            &NitscheParams::default(),
            false,
        )
        .unwrap();
        let solid_x: f64 = (0..2).map(|b| ls.r[12 + 2 * b]).sum();
        let fluid_x: f64 = (0..4).map(|a| ls.r[3 * a]).sum();
        assert!((solid_x + 2.0).abs() < 1e-14);
        assert!((fluid_x - 2.0).abs() < 1e-14);
    }
}
