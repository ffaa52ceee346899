//! Lagrange quadrilateral finite elements on a uniform grid of the unit
//! square with homogeneous Dirichlet conditions.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::legendre::gauss_legendre;
use crate::sparse::CsrMatrix;

/// Uniform `n × n` grid of quadrilaterals of order 1 (bilinear) or 2
/// (biquadratic). Boundary nodes are eliminated; interior nodes are
/// numbered lexicographically with `x_1` running fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mesh {
    cells: usize,
    order: usize,
    quadrature: usize,
}

impl Mesh {
    /// Mesh with the default quadrature of `order + 2` Gauss points per
    /// direction.
    pub fn new(cells: usize, order: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidArgument("mesh needs at least 2 cells per side"));
        }
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidArgument("element order must be 1 or 2"));
        }
        Ok(Self { cells, order, quadrature: order + 2 })
    }

    /// Overrides the number of Gauss points per direction used in assembly.
    pub fn with_quadrature(mut self, points: usize) -> Result<Self> {
        if points < self.order + 1 {
            return Err(Error::InvalidArgument("quadrature too coarse for the element order"));
        }
        self.quadrature = points;
        Ok(self)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn quadrature(&self) -> usize {
        self.quadrature
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Nodes per side including the boundary.
    fn grid(&self) -> usize {
        self.cells * self.order + 1
    }

    /// Interior nodes per side.
    fn inner(&self) -> usize {
        self.cells * self.order - 1
    }

    /// Number of interior degrees of freedom, `(n l - 1)²`.
    pub fn dofs(&self) -> usize {
        self.inner() * self.inner()
    }

    fn dof_of_node(&self, i: usize, j: usize) -> Option<usize> {
        let g = self.grid();
        if i == 0 || j == 0 || i == g - 1 || j == g - 1 {
            None
        } else {
            Some((j - 1) * self.inner() + (i - 1))
        }
    }

    pub fn dof_coordinates(&self, dof: usize) -> (f64, f64) {
        let inner = self.inner();
        let (i, j) = (dof % inner + 1, dof / inner + 1);
        let step = 1.0 / (self.cells * self.order) as f64;
        (i as f64 * step, j as f64 * step)
    }

    /// Nodal interpolant of `f` on the interior nodes.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.dofs())
            .map(|d| {
                let (x, y) = self.dof_coordinates(d);
                f(x, y)
            })
            .collect()
    }

    /// Global dofs (or `None` on the boundary) of the local nodes of cell
    /// `(ex, ey)`, local node `(a, b)` at index `b * (l + 1) + a`.
    fn cell_dofs(&self, ex: usize, ey: usize) -> Vec<Option<usize>> {
        let l = self.order;
        let mut out = Vec::with_capacity((l + 1) * (l + 1));
        for b in 0..=l {
            for a in 0..=l {
                out.push(self.dof_of_node(ex * l + a, ey * l + b));
            }
        }
        out
    }

    /// Value at `(x, y)` of the finite element function with interior
    /// coefficients `coeffs`.
    pub fn evaluate(&self, coeffs: &[f64], x: f64, y: f64) -> f64 {
        let n = self.cells as f64;
        let ex = ((x * n) as usize).min(self.cells - 1);
        let ey = ((y * n) as usize).min(self.cells - 1);
        let (xi, eta) = (x * n - ex as f64, y * n - ey as f64);
        let (fx, _) = lagrange_1d(self.order, xi);
        let (fy, _) = lagrange_1d(self.order, eta);
        let l = self.order;
        self.cell_dofs(ex, ey)
            .iter()
            .enumerate()
            .filter_map(|(k, d)| d.map(|d| coeffs[d] * fx[k % (l + 1)] * fy[k / (l + 1)]))
            .sum()
    }

    /// Interpolates a function of this mesh onto the interior nodes of
    /// `fine`. Exact when the meshes are nested and of equal order.
    pub fn prolongate(&self, coeffs: &[f64], fine: &Mesh) -> Vec<f64> {
        fine.interpolate(|x, y| self.evaluate(coeffs, x, y))
    }

    /// Sparsity pattern shared by all assembled matrices.
    fn pattern(&self) -> CsrMatrix {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); self.dofs()];
        for ey in 0..self.cells {
            for ex in 0..self.cells {
                let dofs: Vec<usize> = self.cell_dofs(ex, ey).into_iter().flatten().collect();
                for &i in &dofs {
                    rows[i].extend_from_slice(&dofs);
                }
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        CsrMatrix::from_pattern(self.dofs(), &rows)
    }
}

/// 1D Lagrange basis on equispaced nodes of `[0, 1]` and its derivative.
fn lagrange_1d(order: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    match order {
        1 => (vec![1.0 - t, t], vec![-1.0, 1.0]),
        2 => (
            vec![2.0 * (t - 0.5) * (t - 1.0), -4.0 * t * (t - 1.0), 2.0 * t * (t - 0.5)],
            vec![4.0 * t - 3.0, 4.0 - 8.0 * t, 4.0 * t - 1.0],
        ),
        _ => unreachable!("element order validated at mesh construction"),
    }
}

/// One term `a_m` of the diffusion coefficient `a(x, y) = a_0 + Σ y_m a_m`:
/// `a_0 = 1`; for odd `m` `(m+1)^{-ς} sin(mπx_1)`, for even `m`
/// `(m+1)^{-ς} sin(mπx_2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientTerm {
    pub m: usize,
    pub varsigma: f64,
}

impl CoefficientTerm {
    pub fn new(m: usize, varsigma: f64) -> Self {
        Self { m, varsigma }
    }

    pub fn amplitude(&self) -> f64 {
        if self.m == 0 {
            1.0
        } else {
            libm::pow((self.m + 1) as f64, -self.varsigma)
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let m = self.m;
        if m == 0 {
            return 1.0;
        }
        let arg = if m % 2 == 1 { x1 } else { x2 };
        self.amplitude() * libm::sin(m as f64 * PI * arg)
    }
}

/// `Σ_{m>=1} ‖a_m‖_∞` truncated at `terms`.
pub fn perturbation_bound(varsigma: f64, terms: usize) -> f64 {
    (1..=terms).map(|m| CoefficientTerm::new(m, varsigma).amplitude()).sum()
}

/// Mass matrix `M` and stiffness family `K^(0..=M)` sharing one pattern.
#[derive(Clone, Debug)]
pub struct ParametricOperator {
    mesh: Mesh,
    varsigma: f64,
    mass: CsrMatrix,
    stiffness: Vec<CsrMatrix>,
}

impl ParametricOperator {
    /// Assembles `M` and `K^(m)` for `m = 0..=terms`.
    pub fn assemble(mesh: &Mesh, varsigma: f64, terms: usize) -> Result<Self> {
        if !(varsigma > 1.0) {
            return Err(Error::InvalidArgument("decay exponent must exceed 1"));
        }
        let pattern = mesh.pattern();
        let mut mass = pattern.zeros_like();
        let mut stiffness = vec![pattern; terms + 1];
        let l = mesh.order;
        let nloc = (l + 1) * (l + 1);
        let h = mesh.h();

        let (gx, gw) = gauss_legendre(mesh.quadrature);
        let qpts: Vec<(f64, f64)> = gx.iter().zip(&gw).map(|(&x, &w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
        // reference shape values and gradients per tensor quadrature point
        let mut shapes = Vec::new();
        for &(t2, w2) in &qpts {
            for &(t1, w1) in &qpts {
                let (f1, d1) = lagrange_1d(l, t1);
                let (f2, d2) = lagrange_1d(l, t2);
                let mut phi = vec![0.0; nloc];
                let mut grad = vec![(0.0, 0.0); nloc];
                for b in 0..=l {
                    for a in 0..=l {
                        phi[b * (l + 1) + a] = f1[a] * f2[b];
                        grad[b * (l + 1) + a] = (d1[a] * f2[b], f1[a] * d2[b]);
                    }
                }
                shapes.push((t1, t2, w1 * w2, phi, grad));
            }
        }
        let coeffs: Vec<CoefficientTerm> = (0..=terms).map(|m| CoefficientTerm::new(m, varsigma)).collect();

        let mut local_mass = vec![0.0; nloc * nloc];
        let mut local_stiff = vec![0.0; nloc * nloc];
        let mut grad_gram = vec![0.0; nloc * nloc];
        for ey in 0..mesh.cells {
            for ex in 0..mesh.cells {
                let dofs = mesh.cell_dofs(ex, ey);
                let (x0, y0) = (ex as f64 * h, ey as f64 * h);
                local_mass.iter_mut().for_each(|v| *v = 0.0);
                // per term, accumulate Σ_q w a_m(x_q) ∇φ_i·∇φ_j
                let mut per_term = vec![vec![0.0; nloc * nloc]; terms + 1];
                for (t1, t2, w, phi, grad) in &shapes {
                    let (x1, x2) = (x0 + t1 * h, y0 + t2 * h);
                    for i in 0..nloc {
                        for j in 0..nloc {
                            local_mass[i * nloc + j] += w * h * h * (phi[i] * phi[j]);
                            grad_gram[i * nloc + j] = grad[i].0 * grad[j].0 + grad[i].1 * grad[j].1;
                        }
                    }
                    for (term, acc) in coeffs.iter().zip(per_term.iter_mut()) {
                        let a = w * term.eval(x1, x2);
                        for (dst, g) in acc.iter_mut().zip(&grad_gram) {
                            *dst += a * g;
                        }
                    }
                }
                for i in 0..nloc {
                    let Some(gi) = dofs[i] else { continue };
                    for j in 0..nloc {
                        let Some(gj) = dofs[j] else { continue };
                        mass.add_to(gi, gj, local_mass[i * nloc + j]);
                    }
                }
                for (k, acc) in stiffness.iter_mut().zip(&per_term) {
                    local_stiff.copy_from_slice(acc);
                    for i in 0..nloc {
                        let Some(gi) = dofs[i] else { continue };
                        for j in 0..nloc {
                            let Some(gj) = dofs[j] else { continue };
                            k.add_to(gi, gj, local_stiff[i * nloc + j]);
                        }
                    }
                }
            }
        }
        Ok(Self { mesh: mesh.clone(), varsigma, mass, stiffness })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn varsigma(&self) -> f64 {
        self.varsigma
    }

    pub fn dofs(&self) -> usize {
        self.mass.dim()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// `K^(m)`.
    pub fn stiffness(&self, m: usize) -> &CsrMatrix {
        &self.stiffness[m]
    }

    pub fn stiffness_family(&self) -> &[CsrMatrix] {
        &self.stiffness
    }

    /// Highest assembled term index.
    pub fn terms(&self) -> usize {
        self.stiffness.len() - 1
    }

    /// `K(y) = K^(0) + Σ_m y_m K^(m)` over the assembled terms; components of
    /// `y` beyond them are ignored and missing ones count as zero.
    pub fn pointwise(&self, y: &[f64]) -> CsrMatrix {
        let mut k = self.stiffness[0].clone();
        for (m, &ym) in y.iter().enumerate().take(self.terms()) {
            if ym != 0.0 {
                k.axpy(ym, &self.stiffness[m + 1]);
            }
        }
        k
    }

    /// Restriction to the first `terms` stochastic terms.
    pub fn truncated(&self, terms: usize) -> Result<Self> {
        if terms > self.terms() {
            return Err(Error::DimensionMismatch { expected: self.terms(), found: terms });
        }
        Ok(Self {
            mesh: self.mesh.clone(),
            varsigma: self.varsigma,
            mass: self.mass.clone(),
            stiffness: self.stiffness[..=terms].to_vec(),
        })
    }
}
