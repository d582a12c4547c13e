//! 2D isotropic linear elasticity on a structured quadrilateral mesh.
//!
//! The tissue occupies the rectangle (0,1) x (0,2) and is clamped along the
//! two vertical strips {0,1} x [1.5, 2]. Elements are 4-node bilinear quads
//! under plane strain, integrated with 2x2 Gauss quadrature (exact for the
//! affine tensor-grid geometry used here). The mass matrix is consistent.
//!
//! DOF ordering is fixed so every downstream artifact is reproducible:
//! nodes are numbered lexicographically by (y, x) and each node carries an
//! interleaved (u_x, u_y) pair.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gauss points for 2-point quadrature on [-1, 1].
const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Material parameters of the isotropic tissue.
#[derive(Debug, Clone, Copy)]
pub struct MaterialParams {
    /// First Lame parameter.
    pub lambda: f64,
    /// Second Lame parameter (shear modulus).
    pub mu: f64,
    /// Mass density.
    pub rho: f64,
}

impl MaterialParams {
    pub fn new(lambda: f64, mu: f64, rho: f64) -> Result<Self> {
        if lambda > 0.0 && mu > 0.0 && rho > 0.0 {
            Ok(Self { lambda, mu, rho })
        } else {
            Err(Error::InvalidMaterial { lambda, mu, rho })
        }
    }
}

/// Structured quadrilateral mesh of the tissue rectangle.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    /// Node coordinates, one (x, y) pair per node, (y, x)-lexicographic.
    pub coords: Vec<[f64; 2]>,
    /// Element connectivity: four node indices, counterclockwise.
    pub elements: Vec<[usize; 4]>,
    /// Node indices on the clamped boundary strip.
    pub dirichlet_nodes: Vec<usize>,
}

impl Mesh2D {
    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet_nodes.binary_search(&node).is_ok()
    }

    /// Free node closest to a point; ties break toward the lower index.
    pub fn nearest_free_node(&self, x: f64, y: f64) -> usize {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.coords.iter().enumerate() {
            if self.is_dirichlet(i) {
                continue;
            }
            let d = (c[0] - x).powi(2) + (c[1] - y).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Map from nodes to global displacement unknowns with the free/Dirichlet
/// split.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Global DOF index -> position in the free vector, or None if clamped.
    pub free_index: Vec<Option<usize>>,
    /// Free positions back to global DOF indices.
    pub free_dofs: Vec<usize>,
    /// Clamped global DOF indices, ascending.
    pub dirichlet_dofs: Vec<usize>,
}

impl DofMap {
    fn new(mesh: &Mesh2D) -> Self {
        let total = 2 * mesh.num_nodes();
        let mut free_index = vec![None; total];
        let mut free_dofs = Vec::new();
        let mut dirichlet_dofs = Vec::new();
        for node in 0..mesh.num_nodes() {
            for comp in 0..2 {
                let dof = 2 * node + comp;
                if mesh.is_dirichlet(node) {
                    dirichlet_dofs.push(dof);
                } else {
                    free_index[dof] = Some(free_dofs.len());
                    free_dofs.push(dof);
                }
            }
        }
        Self { free_index, free_dofs, dirichlet_dofs }
    }

    pub fn num_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn num_dirichlet(&self) -> usize {
        self.dirichlet_dofs.len()
    }

    pub fn total(&self) -> usize {
        self.free_index.len()
    }
}

/// Build the structured mesh. `ny` must be divisible by 4 so the clamp
/// boundary y = 1.5 falls on a grid line.
pub fn build_mesh(nx: usize, ny: usize) -> Result<Mesh2D> {
    if nx < 1 || ny < 1 {
        return Err(Error::EmptyMesh { nx, ny });
    }
    if ny % 4 != 0 {
        return Err(Error::MeshResolution { ny });
    }
    let dx = 1.0 / nx as f64;
    let dy = 2.0 / ny as f64;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            coords.push([ix as f64 * dx, iy as f64 * dy]);
        }
    }
    let node = |ix: usize, iy: usize| iy * (nx + 1) + ix;
    let mut elements = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            elements.push([node(ix, iy), node(ix + 1, iy), node(ix + 1, iy + 1), node(ix, iy + 1)]);
        }
    }
    let clamp_start = 3 * ny / 4;
    let mut dirichlet_nodes = Vec::new();
    for iy in clamp_start..=ny {
        dirichlet_nodes.push(node(0, iy));
        dirichlet_nodes.push(node(nx, iy));
    }
    dirichlet_nodes.sort_unstable();
    Ok(Mesh2D { nx, ny, coords, elements, dirichlet_nodes })
}

/// Plane-strain constitutive matrix in Voigt order (xx, yy, xy).
fn constitutive(mat: &MaterialParams) -> DMatrix<f64> {
    let l = mat.lambda;
    let m = mat.mu;
    DMatrix::from_row_slice(3, 3, &[l + 2.0 * m, l, 0.0, l, l + 2.0 * m, 0.0, 0.0, 0.0, m])
}

/// Bilinear shape functions and reference-coordinate gradients at (xi, eta).
fn shape(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let n = [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ];
    let dn = [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ];
    (n, dn)
}

fn jacobian(coords: &[[f64; 2]; 4], dn: &[[f64; 2]; 4]) -> ([[f64; 2]; 2], f64) {
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        for r in 0..2 {
            for c in 0..2 {
                j[r][c] += dn[a][c] * coords[a][r];
            }
        }
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    (j, det)
}

/// Element stiffness and consistent mass for one bilinear quad.
pub fn element_matrices(
    coords: &[[f64; 2]; 4],
    mat: &MaterialParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = constitutive(mat);
    let mut ke = DMatrix::zeros(8, 8);
    let mut me = DMatrix::zeros(8, 8);
    for &xi in &GAUSS_2 {
        for &eta in &GAUSS_2 {
            let (n, dn) = shape(xi, eta);
            let (j, det) = jacobian(coords, &dn);
            if det <= 1e-14 {
                return Err(Error::DegenerateElement { det_j: det });
            }
            let inv = [
                [j[1][1] / det, -j[0][1] / det],
                [-j[1][0] / det, j[0][0] / det],
            ];
            // Physical gradients dN/dx, dN/dy.
            let mut g = [[0.0; 2]; 4];
            for a in 0..4 {
                g[a][0] = inv[0][0] * dn[a][0] + inv[0][1] * dn[a][1];
                g[a][1] = inv[1][0] * dn[a][0] + inv[1][1] * dn[a][1];
            }
            // Strain-displacement matrix, Voigt (xx, yy, xy).
            let mut b = DMatrix::zeros(3, 8);
            for a in 0..4 {
                b[(0, 2 * a)] = g[a][0];
                b[(1, 2 * a + 1)] = g[a][1];
                b[(2, 2 * a)] = g[a][1];
                b[(2, 2 * a + 1)] = g[a][0];
            }
            let mut nm = DMatrix::zeros(2, 8);
            for a in 0..4 {
                nm[(0, 2 * a)] = n[a];
                nm[(1, 2 * a + 1)] = n[a];
            }
            let w = det; // unit Gauss weights for the 2-point rule
            ke += b.transpose() * &d * &b * w;
            me += nm.transpose() * &nm * (mat.rho * w);
        }
    }
    Ok((ke, me))
}

/// Assembled unconstrained operators plus the DOF bookkeeping.
#[derive(Clone)]
pub struct Assembled {
    /// Global stiffness over all displacement unknowns.
    pub k_full: DMatrix<f64>,
    /// Global consistent mass over all displacement unknowns.
    pub m_full: DMatrix<f64>,
    pub dof_map: DofMap,
    pub mesh: Mesh2D,
    pub material: MaterialParams,
}

/// Assemble global mass and stiffness over all displacement unknowns.
pub fn assemble(mesh: &Mesh2D, mat: &MaterialParams) -> Result<Assembled> {
    let total = 2 * mesh.num_nodes();
    let mut k_full = DMatrix::zeros(total, total);
    let mut m_full = DMatrix::zeros(total, total);
    for el in &mesh.elements {
        let coords = [
            mesh.coords[el[0]],
            mesh.coords[el[1]],
            mesh.coords[el[2]],
            mesh.coords[el[3]],
        ];
        let (ke, me) = element_matrices(&coords, mat)?;
        for (a, &na) in el.iter().enumerate() {
            for (b, &nb) in el.iter().enumerate() {
                for ca in 0..2 {
                    for cb in 0..2 {
                        let gi = 2 * na + ca;
                        let gj = 2 * nb + cb;
                        k_full[(gi, gj)] += ke[(2 * a + ca, 2 * b + cb)];
                        m_full[(gi, gj)] += me[(2 * a + ca, 2 * b + cb)];
                    }
                }
            }
        }
    }
    Ok(Assembled {
        k_full,
        m_full,
        dof_map: DofMap::new(mesh),
        mesh: mesh.clone(),
        material: *mat,
    })
}

/// Consistent load vector for a constant body force per unit volume.
pub fn body_force(mesh: &Mesh2D, density_force: [f64; 2]) -> Result<DVector<f64>> {
    if !density_force.iter().all(|f| f.is_finite()) {
        return Err(Error::NonFinite { context: "body force" });
    }
    let total = 2 * mesh.num_nodes();
    let mut load = DVector::zeros(total);
    for el in &mesh.elements {
        let coords = [
            mesh.coords[el[0]],
            mesh.coords[el[1]],
            mesh.coords[el[2]],
            mesh.coords[el[3]],
        ];
        for &xi in &GAUSS_2 {
            for &eta in &GAUSS_2 {
                let (n, dn) = shape(xi, eta);
                let (_, det) = jacobian(&coords, &dn);
                for (a, &node) in el.iter().enumerate() {
                    load[2 * node] += n[a] * density_force[0] * det;
                    load[2 * node + 1] += n[a] * density_force[1] * det;
                }
            }
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sym_eig;

    fn unit_square() -> [[f64; 2]; 4] {
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    }

    /// High-order quadrature oracle for the element integrals, independent
    /// of the 2x2 rule used by the implementation.
    fn element_oracle(
        coords: &[[f64; 2]; 4],
        mat: &MaterialParams,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        // 5-point Gauss-Legendre on [-1, 1].
        let pts = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        let wts = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let d = constitutive(mat);
        let mut ke = DMatrix::zeros(8, 8);
        let mut me = DMatrix::zeros(8, 8);
        for (i, &xi) in pts.iter().enumerate() {
            for (j, &eta) in pts.iter().enumerate() {
                let (n, dn) = shape(xi, eta);
                let (jac, det) = jacobian(coords, &dn);
                let inv = [
                    [jac[1][1] / det, -jac[0][1] / det],
                    [-jac[1][0] / det, jac[0][0] / det],
                ];
                let mut g = [[0.0; 2]; 4];
                for a in 0..4 {
                    g[a][0] = inv[0][0] * dn[a][0] + inv[0][1] * dn[a][1];
                    g[a][1] = inv[1][0] * dn[a][0] + inv[1][1] * dn[a][1];
                }
                let mut b = DMatrix::zeros(3, 8);
                for a in 0..4 {
                    b[(0, 2 * a)] = g[a][0];
                    b[(1, 2 * a + 1)] = g[a][1];
                    b[(2, 2 * a)] = g[a][1];
                    b[(2, 2 * a + 1)] = g[a][0];
                }
                let mut nm = DMatrix::zeros(2, 8);
                for a in 0..4 {
                    nm[(0, 2 * a)] = n[a];
                    nm[(1, 2 * a + 1)] = n[a];
                }
                let w = wts[i] * wts[j] * det;
                ke += b.transpose() * &d * &b * w;
                me += nm.transpose() * &nm * (mat.rho * w);
            }
        }
        (ke, me)
    }

    #[test]
    fn mesh_counts_small() {
        let mesh = build_mesh(1, 4).unwrap();
        assert_eq!(mesh.num_nodes(), 10);
        assert_eq!(mesh.num_elements(), 4);
        assert_eq!(mesh.dirichlet_nodes.len(), 4);
        // Clamped nodes sit at y in {1.5, 2.0} on both vertical edges.
        for &n in &mesh.dirichlet_nodes {
            let [x, y] = mesh.coords[n];
            assert!(x == 0.0 || x == 1.0);
            assert!(y >= 1.5);
        }
    }

    #[test]
    fn mesh_counts_desk_scale() {
        let mesh = build_mesh(10, 20).unwrap();
        assert_eq!(mesh.num_nodes(), 231);
        assert_eq!(mesh.dirichlet_nodes.len(), 12);
        let asm = assemble(&mesh, &MaterialParams::new(50.0, 50.0, 1.0).unwrap()).unwrap();
        assert_eq!(asm.dof_map.num_free(), 438);
    }

    #[test]
    fn mesh_rejects_bad_ny() {
        assert!(matches!(build_mesh(2, 2), Err(Error::MeshResolution { ny: 2 })));
        assert!(matches!(build_mesh(0, 4), Err(Error::EmptyMesh { .. })));
    }

    #[test]
    fn element_rigid_translation_is_nullspace() {
        let mat = MaterialParams::new(3.0, 2.0, 1.0).unwrap();
        let (ke, _) = element_matrices(&unit_square(), &mat).unwrap();
        let tx = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!((&ke * &tx).norm() < 1e-12 * ke.norm());
        let ty = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((&ke * &ty).norm() < 1e-12 * ke.norm());
        // Infinitesimal rotation (-y, x) at the four corners.
        let rot = DVector::from_vec(vec![0.0, 0.0, -0.0, 1.0, -1.0, 1.0, -1.0, 0.0]);
        assert!((&ke * &rot).norm() < 1e-12 * ke.norm());
    }

    #[test]
    fn element_mass_is_consistent() {
        let mat = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
        let (_, me) = element_matrices(&unit_square(), &mat).unwrap();
        let total: f64 = me.iter().sum();
        assert!((total - 2.0).abs() < 1e-12);
        // SPD: all eigenvalues positive.
        let (vals, _) = sym_eig(&me).unwrap();
        assert!(vals[vals.len() - 1] > 0.0);
    }

    #[test]
    fn element_stiffness_matches_quadrature_oracle() {
        let mat = MaterialParams::new(1.0, 1.0, 1.0).unwrap();
        let (ke, me) = element_matrices(&unit_square(), &mat).unwrap();
        let (ke_oracle, me_oracle) = element_oracle(&unit_square(), &mat);
        assert!((&ke - &ke_oracle).norm() < 1e-12 * ke_oracle.norm());
        assert!((&me - &me_oracle).norm() < 1e-12 * me_oracle.norm());
        // Frozen spot checks: exact integrals for this configuration are
        // ke00 = (lambda+2mu)/3 + mu/3 = 4/3 and ke01 = (lambda+mu)/4 = 1/2.
        assert!((ke[(0, 0)] - 4.0 / 3.0).abs() < 1e-12, "ke00 = {}", ke[(0, 0)]);
        assert!((ke[(0, 1)] - 0.5).abs() < 1e-12, "ke01 = {}", ke[(0, 1)]);
    }

    #[test]
    fn element_stiffness_psd_with_three_rigid_modes() {
        let mat = MaterialParams::new(4.0, 3.0, 1.0).unwrap();
        let (ke, _) = element_matrices(&unit_square(), &mat).unwrap();
        let (vals, _) = sym_eig(&ke).unwrap();
        let max = vals[0];
        assert!(vals[7].abs() < 1e-12 * max);
        assert!(vals[6].abs() < 1e-12 * max);
        assert!(vals[5].abs() < 1e-12 * max);
        assert!(vals[4] > 1e-6 * max);
    }

    #[test]
    fn assemble_rigid_mode_and_mass_sum() {
        let mesh = build_mesh(2, 4).unwrap();
        let mat = MaterialParams::new(7.0, 5.0, 1.0).unwrap();
        let asm = assemble(&mesh, &mat).unwrap();
        let total = asm.k_full.nrows();
        let tx = DVector::from_fn(total, |i, _| if i % 2 == 0 { 1.0 } else { 0.0 });
        assert!((&asm.k_full * &tx).norm() <= 1e-10 * asm.k_full.norm() * tx.norm());
        let mass_sum: f64 = asm.m_full.iter().sum();
        assert!((mass_sum - 4.0).abs() < 1e-10, "mass sum {mass_sum}");
        // Symmetry; the mass matrix is SPD (Cholesky succeeds).
        assert!((&asm.k_full - asm.k_full.transpose()).norm() <= 1e-12 * asm.k_full.norm());
        assert!((&asm.m_full - asm.m_full.transpose()).norm() <= 1e-12 * asm.m_full.norm());
        assert!(nalgebra::Cholesky::new(asm.m_full.clone()).is_some());
    }

    #[test]
    fn assemble_desk_scale_stiffness_is_psd() {
        let mesh = build_mesh(10, 20).unwrap();
        let mat = MaterialParams::new(50.0, 50.0, 1.0).unwrap();
        let asm = assemble(&mesh, &mat).unwrap();
        let (vals, _) = sym_eig(&asm.k_full).unwrap();
        let max = vals[0];
        for v in vals.iter() {
            assert!(*v >= -1e-10 * max);
        }
    }

    #[test]
    fn body_force_zero_and_consistency() {
        let mesh = build_mesh(2, 4).unwrap();
        let zero = body_force(&mesh, [0.0, 0.0]).unwrap();
        assert_eq!(zero.norm(), 0.0);

        let down = body_force(&mesh, [0.0, -1.0]).unwrap();
        let y_total: f64 = (0..mesh.num_nodes()).map(|n| down[2 * n + 1]).sum();
        assert!((y_total - (-2.0)).abs() < 1e-10, "y total {y_total}");
    }

    #[test]
    fn body_force_matches_elementwise_oracle() {
        let mesh = build_mesh(10, 20).unwrap();
        let load = body_force(&mesh, [1.0, 0.0]).unwrap();
        // Exact integral of each bilinear shape function over the elements
        // touching a node: area/4 per element on an affine grid.
        let area = (1.0 / 10.0) * (2.0 / 20.0);
        let mut oracle = DVector::zeros(2 * mesh.num_nodes());
        for el in &mesh.elements {
            for &n in el {
                oracle[2 * n] += area / 4.0;
            }
        }
        assert!((&load - &oracle).norm() < 1e-12 * oracle.norm());
        let x_total: f64 = (0..mesh.num_nodes()).map(|n| load[2 * n]).sum();
        assert!((x_total - 2.0).abs() < 1e-10);
    }

    #[test]
    fn patch_test_linear_field_reproduced() {
        // Impose u = [0.3 + 0.2 x - 0.1 y, -0.25 + 0.05 x + 0.4 y] on the
        // boundary of a small mesh; interior must reproduce it exactly.
        let mesh = build_mesh(3, 4).unwrap();
        let mat = MaterialParams::new(10.0, 7.0, 1.0).unwrap();
        let asm = assemble(&mesh, &mat).unwrap();
        let field = |x: f64, y: f64| [0.3 + 0.2 * x - 0.1 * y, -0.25 + 0.05 * x + 0.4 * y];

        let mut boundary = Vec::new();
        let mut interior = Vec::new();
        for (i, c) in mesh.coords.iter().enumerate() {
            let on_edge = c[0] == 0.0 || c[0] == 1.0 || c[1] == 0.0 || c[1] == 2.0;
            for comp in 0..2 {
                if on_edge {
                    boundary.push((2 * i + comp, field(c[0], c[1])[comp]));
                } else {
                    interior.push((2 * i + comp, field(c[0], c[1])[comp]));
                }
            }
        }
        let ib: Vec<usize> = boundary.iter().map(|&(d, _)| d).collect();
        let ii: Vec<usize> = interior.iter().map(|&(d, _)| d).collect();
        let ub = DVector::from_vec(boundary.iter().map(|&(_, v)| v).collect::<Vec<_>>());
        let k_ii = asm.k_full.select_rows(ii.iter()).select_columns(ii.iter());
        let k_ib = asm.k_full.select_rows(ii.iter()).select_columns(ib.iter());
        let rhs = -&k_ib * &ub;
        let sol = crate::numerics::factorize_and_solve(&k_ii, &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice())).unwrap();
        for (pos, &(_, expect)) in interior.iter().enumerate() {
            assert!(
                (sol[(pos, 0)] - expect).abs() < 1e-9,
                "interior dof {pos}: {} vs {expect}",
                sol[(pos, 0)]
            );
        }
    }

    #[test]
    fn refinement_converges_fundamental_frequency() {
        // Smallest constrained eigenfrequency under refinement; values must
        // approach each other monotonically within 1% noise.
        let mat = MaterialParams::new(50.0, 50.0, 1.0).unwrap();
        let mut freqs = Vec::new();
        for (nx, ny) in [(5, 8), (10, 16), (20, 32)] {
            let mesh = build_mesh(nx, ny).unwrap();
            let asm = assemble(&mesh, &mat).unwrap();
            let free: Vec<usize> = asm.dof_map.free_dofs.clone();
            let k = asm.k_full.select_rows(free.iter()).select_columns(free.iter());
            let m = asm.m_full.select_rows(free.iter()).select_columns(free.iter());
            let (_, m_inv_half) = crate::numerics::spd_sqrt_and_inv_sqrt(&m).unwrap();
            let a = &m_inv_half * &k * &m_inv_half;
            let (vals, _) = sym_eig(&a).unwrap();
            freqs.push(vals[vals.len() - 1].sqrt());
        }
        // Bilinear elements over-stiffen, so frequencies decrease with
        // refinement (up to 1% tolerance).
        assert!(freqs[1] <= freqs[0] * 1.01, "freqs: {freqs:?}");
        assert!(freqs[2] <= freqs[1] * 1.01, "freqs: {freqs:?}");
        // Successive changes shrink as the mesh resolves the mode.
        let d01 = (freqs[0] - freqs[1]).abs();
        let d12 = (freqs[1] - freqs[2]).abs();
        assert!(d12 <= d01 * 1.01, "refinement not converging: {freqs:?}");
    }
}
