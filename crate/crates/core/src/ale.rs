//! Mesh motion of the moving fluid patch by a linear elastic pseudo-solid.
//! Interface nodes follow prescribed displacements; all other boundaries are
//! traction-free, so rigid interface motion moves the whole patch rigidly.

use crate::error::{FsiError, Result};
use crate::geometry::{cross, Vec2};
use crate::mesh::QuadMesh;
use crate::solid::{element_internal, lame_from_engineering};
use crate::sparse::{Assembler, CscMatrix, SparseLu};

pub struct AleSolver {
    reference: QuadMesh,
    /// Prescribed nodes, in the order expected by [`AleSolver::solve`].
    pub interface_nodes: Vec<usize>,
    free: Vec<usize>,
    fixed: Vec<usize>,
    k_fd: CscMatrix,
    lu: Option<SparseLu>,
}

impl AleSolver {
    /// Assembles and factorizes the pseudo-solid stiffness once. The motion
    /// depends only on the Poisson ratio of the pseudo-material.
    pub fn new(reference: &QuadMesh, interface_nodes: &[usize], poisson: f64) -> Result<Self> {
        let (lambda, mu) = lame_from_engineering(1.0, poisson)?;
        let n = 2 * reference.num_nodes();
        let mut is_fixed = vec![false; n];
        for &i in interface_nodes {
            is_fixed[2 * i] = true;
            is_fixed[2 * i + 1] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&k| !is_fixed[k]).collect();
        let fixed: Vec<usize> = interface_nodes
            .iter()
            .flat_map(|&i| [2 * i, 2 * i + 1])
            .collect();
        let mut asm = Assembler::new(n, n);
        for (e, el) in reference.elements.iter().enumerate() {
            let (_, k) = element_internal(
                e,
                &reference.element_polygon(e),
                &[0.0; 8],
                lambda,
                mu,
                true,
            )?;
            asm.begin_source(e as u64);
            for r in 0..8 {
                for c in 0..8 {
                    asm.add(2 * el[r / 2] + r % 2, 2 * el[c / 2] + c % 2, k[r * 8 + c]);
                }
            }
        }
        let k = asm.finish();
        let lu = if free.is_empty() {
            None
        } else {
            Some(SparseLu::factor(&k.select(&free, &free))?)
        };
        let k_fd = k.select(&free, &fixed);
        Ok(AleSolver {
            reference: reference.clone(),
            interface_nodes: interface_nodes.to_vec(),
            free,
            fixed,
            k_fd,
            lu,
        })
    }

    /// Mesh displacement (2 entries per node) for prescribed interface displacements.
    pub fn solve(&self, prescribed: &[Vec2]) -> Result<Vec<f64>> {
        if prescribed.len() != self.interface_nodes.len() {
            return Err(FsiError::Assembly(format!(
                "expected {} interface displacements, got {}",
                self.interface_nodes.len(),
                prescribed.len()
            )));
        }
        let n = 2 * self.reference.num_nodes();
        let mut d = vec![0.0; n];
        let ud: Vec<f64> = prescribed.iter().flat_map(|v| [v.x, v.y]).collect();
        for (k, &g) in self.fixed.iter().enumerate() {
            d[g] = ud[k];
        }
        if let Some(lu) = &self.lu {
            let rhs: Vec<f64> = self.k_fd.mul_vec(&ud).into_iter().map(|v| -v).collect();
            let uf = lu.solve(&rhs)?;
            for (k, &g) in self.free.iter().enumerate() {
                d[g] = uf[k];
            }
        }
        check_distortion(&self.reference, &d)?;
        Ok(d)
    }

    pub fn reference(&self) -> &QuadMesh {
        &self.reference
    }
}

/// Fails with [`FsiError::MeshDistortion`] if any displaced element has a
/// non-positive corner Jacobian.
pub fn check_distortion(reference: &QuadMesh, disp: &[f64]) -> Result<()> {
    for (e, el) in reference.elements.iter().enumerate() {
        let p: [Vec2; 4] = std::array::from_fn(|a| {
            reference.nodes[el[a]] + Vec2::new(disp[2 * el[a]], disp[2 * el[a] + 1])
        });
        for i in 0..4 {
            let det = cross(&(p[(i + 1) % 4] - p[i]), &(p[(i + 3) % 4] - p[i])) / 4.0;
            if det <= 0.0 {
                return Err(FsiError::MeshDistortion {
                    element: e,
                    det_j: det,
                });
            }
        }
    }
    Ok(())
}

/// Backward-difference grid velocity.
pub fn grid_velocity(d: &[f64], d_old: &[f64], dt: f64) -> Vec<f64> {
    d.iter().zip(d_old).map(|(a, b)| (a - b) / dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::vec2;
    use crate::mesh::generate_annulus_patch;

    fn setup() -> (QuadMesh, AleSolver) {
        let mesh = generate_annulus_patch(vec2(0.5, 0.5), 0.1, 0.3, 16, 3, 1.2).unwrap();
        let iface = mesh.node_set("fsi").unwrap().to_vec();
        let ale = AleSolver::new(&mesh, &iface, 0.3).unwrap();
        (mesh, ale)
    }

    #[test]
    fn zero_motion() {
        let (_, ale) = setup();
        let d = ale
            .solve(&vec![Vec2::zeros(); ale.interface_nodes.len()])
            .unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rigid_translation_moves_every_node() {
        let (_, ale) = setup();
        let t = vec2(0.03, -0.01);
        let d = ale.solve(&vec![t; ale.interface_nodes.len()]).unwrap();
        for k in 0..d.len() / 2 {
            assert!((vec2(d[2 * k], d[2 * k + 1]) - t).norm() < 1e-12);
        }
    }

    #[test]
    fn expansion_keeps_mesh_valid_and_is_linear() {
        let (mesh, ale) = setup();
        let c = vec2(0.5, 0.5);
        let pres: Vec<Vec2> = ale
            .interface_nodes
            .iter()
            .map(|&i| (mesh.nodes[i] - c) * 0.05)
            .collect();
        let d1 = ale.solve(&pres).unwrap();
        let twice: Vec<Vec2> = pres.iter().map(|v| v * 2.0).collect();
        let d2 = ale.solve(&twice).unwrap();
        for k in 0..d1.len() {
            assert!((2.0 * d1[k] - d2[k]).abs() < 1e-12);
        }
        check_distortion(&mesh, &d1).unwrap();
        // outer ring expands less than the interface
        let outer = mesh.node_set("ff").unwrap()[0];
        let r = vec2(d1[2 * outer], d1[2 * outer + 1]).norm();
        assert!(r > 0.0 && r < 0.05 * 0.1 + 1e-12);
    }

    #[test]
    fn distortion_is_reported() {
        let (mesh, ale) = setup();
        let c = vec2(0.5, 0.5);
        let pres: Vec<Vec2> = ale
            .interface_nodes
            .iter()
            .map(|&i| (mesh.nodes[i] - c) * 3.0)
            .collect();
        assert!(matches!(
            ale.solve(&pres),
            Err(FsiError::MeshDistortion { .. })
        ));
    }

    #[test]
    fn grid_velocity_difference() {
        assert_eq!(
            grid_velocity(&[1.0, 2.0], &[0.5, 2.5], 0.5),
            vec![1.0, -1.0]
        );
    }
}
