//! Total-Lagrangian plane-strain Neo-Hookean solid and Generalized-α time integration.

use serde::{Deserialize, Serialize};

use crate::error::{FsiError, Result};
use crate::fem::{eval_basis, gauss_quad, Mat2};
use crate::geometry::Vec2;
use crate::mesh::QuadMesh;
use crate::sparse::{self, Assembler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolidParams {
    pub rho: f64,
    pub young: f64,
    pub poisson: f64,
    pub rho_inf: f64,
}

/// (λ, μ) from Young's modulus and Poisson ratio.
pub fn lame_from_engineering(e: f64, nu: f64) -> Result<(f64, f64)> {
    if !(e > 0.0) {
        return Err(FsiError::Config(format!(
            "Young's modulus must be positive, got {e}"
        )));
    }
    if !(nu > -1.0 && nu < 0.5) || (0.5 - nu) < 1e-9 {
        return Err(FsiError::Config(format!(
            "Poisson ratio {nu} outside (-1, 0.5)"
        )));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

impl SolidParams {
    pub fn lame(&self) -> Result<(f64, f64)> {
        lame_from_engineering(self.young, self.poisson)
    }

    pub fn galpha(&self) -> Result<GAlpha> {
        GAlpha::from_spectral_radius(self.rho_inf)
    }
}

/// Generalized-α parameters; α_f and α_m weight the previous time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GAlpha {
    pub alpha_f: f64,
    pub alpha_m: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl GAlpha {
    pub fn from_spectral_radius(rho_inf: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho_inf) {
            return Err(FsiError::Config(format!(
                "spectral radius {rho_inf} outside [0, 1]"
            )));
        }
        let alpha_f = rho_inf / (rho_inf + 1.0);
        let alpha_m = (2.0 * rho_inf - 1.0) / (rho_inf + 1.0);
        let beta = 0.25 * (1.0 - alpha_m + alpha_f).powi(2);
        let gamma = 0.5 - alpha_m + alpha_f;
        Ok(GAlpha {
            alpha_f,
            alpha_m,
            beta,
            gamma,
        })
    }

    /// Newmark acceleration from the new displacement.
    pub fn acceleration(&self, dt: f64, d: f64, d_old: f64, v_old: f64, a_old: f64) -> f64 {
        (d - d_old) / (self.beta * dt * dt)
            - v_old / (self.beta * dt)
            - (0.5 / self.beta - 1.0) * a_old
    }

    /// Newmark velocity from the new displacement.
    pub fn velocity(&self, dt: f64, d: f64, d_old: f64, v_old: f64, a_old: f64) -> f64 {
        self.gamma / (self.beta * dt) * (d - d_old)
            + (1.0 - self.gamma / self.beta) * v_old
            + dt * (1.0 - self.gamma / (2.0 * self.beta)) * a_old
    }

    /// ∂U/∂D of the Newmark velocity relation.
    pub fn velocity_factor(&self, dt: f64) -> f64 {
        self.gamma / (self.beta * dt)
    }

    /// Coefficient of M in the displacement tangent of the scaled residual.
    pub fn mass_factor(&self, dt: f64) -> f64 {
        (1.0 - self.alpha_m) / ((1.0 - self.alpha_f) * self.beta * dt * dt)
    }

    /// Displacement for a constant-velocity prediction (U^n = U^{n-1}).
    pub fn predict_displacement(&self, dt: f64, d_old: f64, v_old: f64, a_old: f64) -> f64 {
        d_old + dt * v_old + dt * dt * (0.5 - self.beta / self.gamma) * a_old
    }
}

/// PK2 stress and material tangent (Voigt order 11, 22, 12 with engineering
/// shear) of the plane-strain Neo-Hookean law.
pub fn pk2_stress(f: &Mat2, lambda: f64, mu: f64) -> Option<(Mat2, [[f64; 3]; 3])> {
    let j = f.determinant();
    if !(j > 0.0) {
        return None;
    }
    let c = f.transpose() * f;
    let ci = c.try_inverse()?;
    let lnj = j.ln();
    let s = (Mat2::identity() - ci) * mu + ci * (lambda * lnj);
    let idx = [(0, 0), (1, 1), (0, 1)];
    let coef = mu - lambda * lnj;
    let mut d = [[0.0; 3]; 3];
    for (a, &(i, jj)) in idx.iter().enumerate() {
        for (b, &(k, l)) in idx.iter().enumerate() {
            d[a][b] = lambda * ci[(i, jj)] * ci[(k, l)]
                + coef * (ci[(i, k)] * ci[(jj, l)] + ci[(i, l)] * ci[(jj, k)]);
        }
    }
    Some((s, d))
}

/// Internal force (8) and tangent stiffness (8×8 row-major) of one element.
/// Local dof layout `2 * a + i`.
pub fn element_internal(
    elem: usize,
    coords: &[Vec2; 4],
    disp: &[f64; 8],
    lambda: f64,
    mu: f64,
    with_tangent: bool,
) -> Result<([f64; 8], [f64; 64])> {
    let mut f_int = [0.0; 8];
    let mut k = [0.0; 64];
    for (xi, w) in gauss_quad(2) {
        let b = eval_basis(elem, coords, xi)?;
        let w = w * b.det_j;
        let mut f = Mat2::identity();
        for a in 0..4 {
            for i in 0..2 {
                for jj in 0..2 {
                    f[(i, jj)] += disp[2 * a + i] * b.grad[a][jj];
                }
            }
        }
        let (s, d) = pk2_stress(&f, lambda, mu).ok_or(FsiError::ElementInversion {
            element: elem,
            det_f: f.determinant(),
        })?;
        let p = f * s;
        for a in 0..4 {
            for i in 0..2 {
                f_int[2 * a + i] += w * (p[(i, 0)] * b.grad[a].x + p[(i, 1)] * b.grad[a].y);
            }
        }
        if !with_tangent {
            continue;
        }
        let mut bm = [[0.0; 8]; 3];
        for a in 0..4 {
            let g = b.grad[a];
            for i in 0..2 {
                bm[0][2 * a + i] = f[(i, 0)] * g.x;
                bm[1][2 * a + i] = f[(i, 1)] * g.y;
                bm[2][2 * a + i] = f[(i, 0)] * g.y + f[(i, 1)] * g.x;
            }
        }
        for r in 0..8 {
            for c in 0..8 {
                let mut v = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        v += bm[p][r] * d[p][q] * bm[q][c];
                    }
                }
                k[r * 8 + c] += w * v;
            }
        }
        for a in 0..4 {
            for bb in 0..4 {
                let geo = b.grad[a].dot(&(s * b.grad[bb]));
                for i in 0..2 {
                    k[(2 * a + i) * 8 + 2 * bb + i] += w * geo;
                }
            }
        }
    }
    Ok((f_int, k))
}

/// Consistent mass matrix (8×8 row-major).
pub fn element_mass(elem: usize, coords: &[Vec2; 4], rho: f64) -> Result<[f64; 64]> {
    let mut m = [0.0; 64];
    for (xi, w) in gauss_quad(2) {
        let b = eval_basis(elem, coords, xi)?;
        let w = w * b.det_j * rho;
        for a in 0..4 {
            for bb in 0..4 {
                for i in 0..2 {
                    m[(2 * a + i) * 8 + 2 * bb + i] += w * b.n[a] * b.n[bb];
                }
            }
        }
    }
    Ok(m)
}

/// Nodal kinematic state of the solid in the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolidState {
    pub d: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl SolidState {
    pub fn at_rest(n_nodes: usize) -> Self {
        SolidState {
            d: vec![0.0; 2 * n_nodes],
            v: vec![0.0; 2 * n_nodes],
            a: vec![0.0; 2 * n_nodes],
        }
    }
}

/// Global internal force and, optionally, tangent over all solid elements.
/// Entries are indexed by the full 2·N layout.
pub fn assemble_internal(
    mesh: &QuadMesh,
    d: &[f64],
    lambda: f64,
    mu: f64,
    with_tangent: bool,
) -> Result<(Vec<f64>, Option<sparse::CscMatrix>)> {
    let n = 2 * mesh.num_nodes();
    let mut f = vec![0.0; n];
    let mut asm = with_tangent.then(|| Assembler::new(n, n));
    for (e, el) in mesh.elements.iter().enumerate() {
        let disp: [f64; 8] = std::array::from_fn(|k| d[2 * el[k / 2] + k % 2]);
        let (fe, ke) =
            element_internal(e, &mesh.element_polygon(e), &disp, lambda, mu, with_tangent)?;
        let gl: [usize; 8] = std::array::from_fn(|k| 2 * el[k / 2] + k % 2);
        for r in 0..8 {
            f[gl[r]] += fe[r];
        }
        if let Some(a) = asm.as_mut() {
            a.begin_source(e as u64);
            for r in 0..8 {
                for c in 0..8 {
                    a.add(gl[r], gl[c], ke[r * 8 + c]);
                }
            }
        }
    }
    Ok((f, asm.map(|a| a.finish())))
}

pub fn assemble_mass(mesh: &QuadMesh, rho: f64) -> Result<sparse::CscMatrix> {
    let n = 2 * mesh.num_nodes();
    let mut asm = Assembler::new(n, n);
    for (e, el) in mesh.elements.iter().enumerate() {
        let me = element_mass(e, &mesh.element_polygon(e), rho)?;
        let gl: [usize; 8] = std::array::from_fn(|k| 2 * el[k / 2] + k % 2);
        asm.begin_source(e as u64);
        for r in 0..8 {
            for c in 0..8 {
                asm.add(gl[r], gl[c], me[r * 8 + c]);
            }
        }
    }
    Ok(asm.finish())
}

/// Standalone Generalized-α integrator for a solid with fixed (zero) Dirichlet
/// dofs and a constant external load, used for verification.
pub struct SolidIntegrator<'a> {
    pub mesh: &'a QuadMesh,
    pub params: SolidParams,
    pub fixed: Vec<bool>,
    pub f_ext: Vec<f64>,
    mass: sparse::CscMatrix,
}

impl<'a> SolidIntegrator<'a> {
    pub fn new(
        mesh: &'a QuadMesh,
        params: SolidParams,
        fixed: Vec<bool>,
        f_ext: Vec<f64>,
    ) -> Result<Self> {
        let mass = assemble_mass(mesh, params.rho)?;
        Ok(SolidIntegrator {
            mesh,
            params,
            fixed,
            f_ext,
            mass,
        })
    }

    pub fn step(&self, old: &SolidState, dt: f64) -> Result<SolidState> {
        let (lambda, mu) = self.params.lame()?;
        let ga = self.params.galpha()?;
        let n = old.d.len();
        let free: Vec<usize> = (0..n).filter(|&i| !self.fixed[i]).collect();
        let (f_old, _) = assemble_internal(self.mesh, &old.d, lambda, mu, false)?;
        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if self.fixed[i] {
                    old.d[i]
                } else {
                    ga.predict_displacement(dt, old.d[i], old.v[i], old.a[i])
                }
            })
            .collect();
        let mut first = None;
        for _ in 0..30 {
            let acc: Vec<f64> = (0..n)
                .map(|i| ga.acceleration(dt, d[i], old.d[i], old.v[i], old.a[i]))
                .collect();
            let mix: Vec<f64> = (0..n)
                .map(|i| (1.0 - ga.alpha_m) * acc[i] + ga.alpha_m * old.a[i])
                .collect();
            let ma = self.mass.mul_vec(&mix);
            let (f_new, k) = assemble_internal(self.mesh, &d, lambda, mu, true)?;
            let r: Vec<f64> = (0..n)
                .map(|i| {
                    (ma[i] + ga.alpha_f * (f_old[i] - self.f_ext[i])) / (1.0 - ga.alpha_f)
                        + f_new[i]
                        - self.f_ext[i]
                })
                .collect();
            let rf: Vec<f64> = free.iter().map(|&i| r[i]).collect();
            let norm = rf.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r0 = *first.get_or_insert(norm);
            if norm <= 1e-12 * r0.max(1e-300) || norm < 1e-14 {
                break;
            }
            let k = k.unwrap();
            let mut asm = Assembler::new(free.len(), free.len());
            let kf = k.select(&free, &free);
            let mf = self.mass.select(&free, &free);
            let c = ga.mass_factor(dt);
            for col in 0..free.len() {
                for q in kf.col_ptr[col]..kf.col_ptr[col + 1] {
                    asm.add(kf.row_idx[q], col, kf.values[q]);
                }
                for q in mf.col_ptr[col]..mf.col_ptr[col + 1] {
                    asm.add(mf.row_idx[q], col, c * mf.values[q]);
                }
            }
            let rhs: Vec<f64> = rf.iter().map(|v| -v).collect();
            let dx = sparse::solve(&asm.finish(), &rhs)?;
            for (k, &i) in free.iter().enumerate() {
                d[i] += dx[k];
            }
        }
        let v = (0..n)
            .map(|i| ga.velocity(dt, d[i], old.d[i], old.v[i], old.a[i]))
            .collect();
        let a = (0..n)
            .map(|i| ga.acceleration(dt, d[i], old.d[i], old.v[i], old.a[i]))
            .collect();
        Ok(SolidState { d, v, a })
    }
}

/// Single-dof linear oscillator m ü + k u = 0 advanced by Generalized-α.
pub fn oscillator_step(
    m: f64,
    k: f64,
    ga: &GAlpha,
    dt: f64,
    state: (f64, f64, f64),
) -> (f64, f64, f64) {
    let (d0, v0, a0) = state;
    // the residual is linear in d: solve directly
    let c_m = ga.mass_factor(dt);
    let acc_at = |d: f64| ga.acceleration(dt, d, d0, v0, a0);
    let resid = |d: f64| {
        m * ((1.0 - ga.alpha_m) * acc_at(d) + ga.alpha_m * a0) / (1.0 - ga.alpha_f)
            + ga.alpha_f / (1.0 - ga.alpha_f) * k * d0
            + k * d
    };
    let d = -resid(0.0) / (m * c_m + k);
    (d, ga.velocity(dt, d, d0, v0, a0), acc_at(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec2;
    use crate::mesh::generate_structured_rect;

    #[test]
    fn lame_parameters() {
        let (l, m) = lame_from_engineering(50.0, 0.3).unwrap();
        assert!((l - 15.0 / 0.52).abs() < 1e-12);
        assert!((m - 50.0 / 2.6).abs() < 1e-12);
        let (l, m) = lame_from_engineering(3.0, 0.0).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(m, 1.5);
        let (_, m) = lame_from_engineering(2.0, 0.35).unwrap();
        assert!((m - 2.0 / 2.7).abs() < 1e-15);
        assert!(lame_from_engineering(1.0, 0.5).is_err());
    }

    #[test]
    fn pk2_examples() {
        let (s, _) = pk2_stress(&Mat2::identity(), 1.0, 1.0).unwrap();
        assert!(s.norm() < 1e-15);
        let (s, _) = pk2_stress(&Mat2::new(2.0, 0.0, 0.0, 1.0), 1.0, 1.0).unwrap();
        assert!((s[(0, 0)] - (0.75 + 2f64.ln() * 0.25)).abs() < 1e-14);
        assert!((s[(1, 1)] - 2f64.ln()).abs() < 1e-14);
        let r = nalgebra::Rotation2::new(0.7).into_inner();
        let (s, _) = pk2_stress(&r, 3.0, 2.0).unwrap();
        assert!(s.norm() < 1e-14);
        assert!(pk2_stress(&Mat2::new(-1.0, 0.0, 0.0, 1.0), 1.0, 1.0).is_none());
    }

    #[test]
    fn galpha_parameters() {
        let g = GAlpha::from_spectral_radius(1.0).unwrap();
        assert_eq!(
            (g.alpha_f, g.alpha_m, g.beta, g.gamma),
            (0.5, 0.5, 0.25, 0.5)
        );
        let g = GAlpha::from_spectral_radius(0.8).unwrap();
        assert!((g.alpha_f - 4.0 / 9.0).abs() < 1e-15);
        assert!((g.alpha_m - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.beta - 25.0 / 81.0).abs() < 1e-15);
    }

    fn sheared() -> [Vec2; 4] {
        [vec2(0., 0.), vec2(1.2, 0.1), vec2(1.4, 1.0), vec2(0.1, 0.9)]
    }

    #[test]
    fn tangent_matches_finite_differences_and_is_symmetric() {
        let coords = sheared();
        let disp: [f64; 8] = std::array::from_fn(|k| 0.05 * ((k as f64) * 1.7).sin());
        let (_, k) = element_internal(0, &coords, &disp, 2.0, 1.5, true).unwrap();
        let eps = 1e-7;
        let mut err: f64 = 0.0;
        for j in 0..8 {
            let mut dp = disp;
            dp[j] += eps;
            let mut dm = disp;
            dm[j] -= eps;
            let (fp, _) = element_internal(0, &coords, &dp, 2.0, 1.5, false).unwrap();
            let (fm, _) = element_internal(0, &coords, &dm, 2.0, 1.5, false).unwrap();
            for i in 0..8 {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                err = err.max((fd - k[i * 8 + j]).abs());
            }
        }
        let knorm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err / knorm < 1e-5);
        let asym: f64 = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .map(|(i, j)| (k[i * 8 + j] - k[j * 8 + i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(asym / knorm < 1e-12);
    }

    #[test]
    fn rigid_motions_are_force_free() {
        let coords = sheared();
        let trans = [0.3, -0.2, 0.3, -0.2, 0.3, -0.2, 0.3, -0.2];
        let (f, _) = element_internal(0, &coords, &trans, 2.0, 1.0, false).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-14));
        let r = nalgebra::Rotation2::new(0.4);
        let rot: [f64; 8] = std::array::from_fn(|k| {
            let p = coords[k / 2];
            (r * p - p)[k % 2]
        });
        let (f, _) = element_internal(0, &coords, &rot, 2.0, 1.0, false).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn objectivity_of_internal_force() {
        let coords = sheared();
        let disp: [f64; 8] = std::array::from_fn(|k| 0.05 * ((k as f64) * 0.9).cos());
        let (f0, _) = element_internal(0, &coords, &disp, 2.0, 1.0, false).unwrap();
        let r = nalgebra::Rotation2::new(1.1);
        let rotated: [f64; 8] = std::array::from_fn(|k| {
            let a = k / 2;
            let x = coords[a] + vec2(disp[2 * a], disp[2 * a + 1]);
            (r * x - coords[a])[k % 2]
        });
        let (f1, _) = element_internal(0, &coords, &rotated, 2.0, 1.0, false).unwrap();
        for a in 0..4 {
            let back = r.inverse() * vec2(f1[2 * a], f1[2 * a + 1]);
            assert!((back - vec2(f0[2 * a], f0[2 * a + 1])).norm() < 1e-10);
        }
    }

    #[test]
    fn uniform_stretch_patch_test() {
        let mesh = generate_structured_rect(vec2(0., 0.), vec2(1., 1.), 2, 2).unwrap();
        let f = Mat2::new(1.1, 0.05, 0.0, 0.95);
        let d: Vec<f64> = mesh
            .nodes
            .iter()
            .flat_map(|p| {
                let x = f * p;
                [x.x - p.x, x.y - p.y]
            })
            .collect();
        let (fint, _) = assemble_internal(&mesh, &d, 1.0, 1.0, false).unwrap();
        // the center node is interior: a homogeneous state is in equilibrium
        let c = mesh
            .nodes
            .iter()
            .position(|p| (p - vec2(0.5, 0.5)).norm() < 1e-14)
            .unwrap();
        assert!(fint[2 * c].abs() < 1e-12 && fint[2 * c + 1].abs() < 1e-12);
        // boundary tractions equal F·S·N of the single-element stress
        let (s, _) = pk2_stress(&f, 1.0, 1.0).unwrap();
        let p = f * s;
        let right: f64 = mesh
            .node_set("right")
            .unwrap()
            .iter()
            .map(|&i| fint[2 * i])
            .sum();
        assert!((right - p[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn inversion_reported() {
        let coords = sheared();
        let disp = [0.0, 0.0, -2.5, 0.0, -2.5, 0.0, 0.0, 0.0];
        assert!(matches!(
            element_internal(3, &coords, &disp, 1.0, 1.0, false),
            Err(FsiError::ElementInversion { element: 3, .. })
        ));
    }

    #[test]
    fn oscillator_energy_is_preserved() {
        let (m, k) = (2.0f64, 5.0f64);
        let omega = (k / m).sqrt();
        let period = 2.0 * std::f64::consts::PI / omega;
        let dt = period / 200.0;
        let ga = GAlpha::from_spectral_radius(1.0).unwrap();
        let mut s = (1.0, 0.0, -k / m);
        let e0 = 0.5 * k;
        let mut drift: f64 = 0.0;
        for _ in 0..200 {
            s = oscillator_step(m, k, &ga, dt, s);
            let e = 0.5 * m * s.1 * s.1 + 0.5 * k * s.0 * s.0;
            drift = drift.max((e - e0).abs() / e0);
        }
        assert!(drift < 1e-3);
    }

    #[test]
    fn predictor_keeps_velocity() {
        let ga = GAlpha::from_spectral_radius(0.8).unwrap();
        let dt = 0.01;
        let (d0, v0, a0) = (0.3, 1.2, -0.7);
        let d = ga.predict_displacement(dt, d0, v0, a0);
        assert!((ga.velocity(dt, d, d0, v0, a0) - v0).abs() < 1e-12);
        assert!(
            (ga.acceleration(dt, d, d0, v0, a0) + (1.0 - ga.gamma) / ga.gamma * a0).abs() < 1e-10
        );
    }
}
