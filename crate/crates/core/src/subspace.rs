//! Spectral subspace iteration: block inverse iteration with Galerkin
//! Gram-Schmidt on chaos coefficients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fem::ParametricOperator;
use crate::galerkin::{
    newton_normalize, pcg_solve, weighted_gram, DeltaFactor, GalerkinSpace, KroneckerOperator,
    MeanPreconditioner, NewtonOptions, SpectralVector,
};
use crate::validation::deterministic_eigensolve;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubspaceConfig {
    /// Subspace dimension `Q`.
    pub q: usize,
    /// Stop once every per-vector increment is below `tol`.
    pub tol: f64,
    pub max_steps: usize,
    /// Replace the first solve by the sum of all solves before
    /// orthogonalizing.
    pub sum_trick: bool,
    /// Relative residual for the block solves. Held fixed: with the sum
    /// trick the basis keeps rotating inside the subspace, so per-vector
    /// increments do not shrink and cannot drive the tolerance.
    pub cg_tol: f64,
    pub cg_max_iterations: usize,
    pub newton: NewtonOptions,
    /// A second Gram-Schmidt pass runs when the projected overlap exceeds this.
    pub reorthogonalize_above: f64,
    /// `‖ŵ‖ < breakdown · ‖v̂‖` aborts the step.
    pub breakdown: f64,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self {
            q: 1,
            tol: 1e-10,
            max_steps: 100,
            sum_trick: false,
            cg_tol: 1e-10,
            cg_max_iterations: 1000,
            newton: NewtonOptions::default(),
            reorthogonalize_above: 1e-8,
            breakdown: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceStepRecord {
    pub k: usize,
    pub increments: Vec<f64>,
    /// Largest `‖F^v(û^(q), û^(i))‖`, `i < q`, after the step.
    pub orthogonality: f64,
    pub cg_iterations: Vec<usize>,
    pub newton_iterations: Vec<usize>,
    pub reorthogonalized: usize,
}

/// `Q` chaos vectors approximating a basis of the invariant subspace.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub vectors: Vec<SpectralVector>,
    pub history: Vec<SubspaceStepRecord>,
    solves: Vec<SpectralVector>,
}

impl SpectralBasis {
    pub fn new(vectors: Vec<SpectralVector>) -> Self {
        Self { vectors, history: Vec::new(), solves: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    pub fn steps(&self) -> usize {
        self.history.len()
    }

    pub fn max_increment(&self) -> Option<f64> {
        self.history.last().map(|r| r.increments.iter().cloned().fold(0.0, f64::max))
    }
}

pub struct SubspaceIteration<'a> {
    space: &'a GalerkinSpace,
    op: &'a ParametricOperator,
    kron: KroneckerOperator<'a>,
    precond: MeanPreconditioner,
    config: SubspaceConfig,
}

impl<'a> SubspaceIteration<'a> {
    pub fn new(
        space: &'a GalerkinSpace,
        op: &'a ParametricOperator,
        config: SubspaceConfig,
    ) -> Result<Self> {
        if config.q == 0 {
            return Err(Error::InvalidArgument("subspace dimension must be at least 1"));
        }
        if config.max_steps == 0 || !(config.tol > 0.0) {
            return Err(Error::InvalidArgument("need max_steps >= 1 and tol > 0"));
        }
        let kron = KroneckerOperator::new(space.moments(), op.stiffness_family(), op.mass())?;
        let precond = MeanPreconditioner::new(&kron)?;
        Ok(Self { space, op, kron, precond, config })
    }

    pub fn config(&self) -> &SubspaceConfig {
        &self.config
    }

    /// The `Q` smallest eigenvectors of `(K^(0), M)` in the mean blocks.
    pub fn initial_basis(&self) -> Result<SpectralBasis> {
        let sol = deterministic_eigensolve(self.op, &[], self.config.q)?;
        let p = self.space.len();
        Ok(SpectralBasis::new(
            sol.vectors.iter().map(|v| SpectralVector::from_mean(p, v)).collect(),
        ))
    }

    /// `ŵ - Σ_i T(F^v(ŵ, û_i)) û_i` over the given vectors.
    fn project_out(&self, w: &mut SpectralVector, against: &[SpectralVector]) {
        let tensor = self.space.tensor();
        let mass = self.op.mass();
        for ui in against {
            let f = weighted_gram(w, ui, tensor, mass);
            let delta = tensor.contract(&f);
            w.axpy(-1.0, &ui.apply_stochastic(&delta));
        }
    }

    fn overlap(&self, w: &SpectralVector, against: &[SpectralVector]) -> f64 {
        let tensor = self.space.tensor();
        against
            .iter()
            .map(|ui| {
                let f = weighted_gram(w, ui, tensor, self.op.mass());
                libm::sqrt(f.iter().map(|x| x * x).sum())
            })
            .fold(0.0, f64::max)
    }

    fn normalize(&self, w: &SpectralVector) -> Result<(SpectralVector, usize)> {
        let newton = newton_normalize(w, self.space.tensor(), self.op.mass(), &self.config.newton)?;
        let delta = DeltaFactor::new(self.space.tensor(), &newton.s)?;
        Ok((delta.solve_block(w), newton.iterations))
    }

    /// One step of the block iteration, updating `basis` in place.
    pub fn iterate_once(&self, basis: &mut SpectralBasis) -> Result<()> {
        let q = basis.dim();
        let mass = self.op.mass();
        let cg_tol = self.config.cg_tol;
        let mut solves = Vec::with_capacity(q);
        let mut cg_iterations = Vec::with_capacity(q);
        for (i, u) in basis.vectors.iter().enumerate() {
            let rhs = u.apply_mass(mass);
            let (v, info) = pcg_solve(
                &self.kron,
                &self.precond,
                &rhs,
                basis.solves.get(i),
                cg_tol,
                self.config.cg_max_iterations,
            )?;
            solves.push(v);
            cg_iterations.push(info.iterations);
        }
        let mut vs = solves.clone();
        if self.config.sum_trick && q > 1 {
            let mut sum = vs[0].clone();
            for v in &solves[1..] {
                sum.axpy(1.0, v);
            }
            vs[0] = sum;
        }
        let mut updated: Vec<SpectralVector> = Vec::with_capacity(q);
        let mut newton_iterations = Vec::with_capacity(q);
        let mut reorthogonalized = 0;
        let mut orthogonality: f64 = 0.0;
        for (idx, v) in vs.into_iter().enumerate() {
            let v_norm = v.mass_norm(mass);
            let mut w = v;
            self.project_out(&mut w, &updated);
            let w_norm = w.mass_norm(mass);
            if !(w_norm >= self.config.breakdown * v_norm) {
                return Err(Error::Breakdown { vector: idx, norm: w_norm });
            }
            let (mut u, mut its) = self.normalize(&w)?;
            let mut ov = self.overlap(&u, &updated);
            if ov > self.config.reorthogonalize_above {
                self.project_out(&mut u, &updated);
                let (u2, its2) = self.normalize(&u)?;
                u = u2;
                its += its2;
                ov = self.overlap(&u, &updated);
                reorthogonalized += 1;
            }
            orthogonality = orthogonality.max(ov);
            newton_iterations.push(its);
            updated.push(u);
        }
        let increments = updated
            .iter()
            .zip(&basis.vectors)
            .map(|(a, b)| a.mass_distance(b, mass))
            .collect();
        basis.history.push(SubspaceStepRecord {
            k: basis.history.len() + 1,
            increments,
            orthogonality,
            cg_iterations,
            newton_iterations,
            reorthogonalized,
        });
        basis.vectors = updated;
        basis.solves = solves;
        Ok(())
    }

    /// Runs from `basis`, calling `observe` after every step; stops when
    /// every increment is below `tol` or after `max_steps`.
    pub fn run_from(
        &self,
        mut basis: SpectralBasis,
        mut observe: impl FnMut(&SpectralBasis) -> Result<()>,
    ) -> Result<SpectralBasis> {
        while basis.steps() < self.config.max_steps {
            self.iterate_once(&mut basis)?;
            observe(&basis)?;
            if basis.max_increment().is_some_and(|d| d < self.config.tol) {
                break;
            }
        }
        Ok(basis)
    }

    pub fn run(&self) -> Result<SpectralBasis> {
        self.run_from(self.initial_basis()?, |_| Ok(()))
    }
}

/// Convenience wrapper: subspace iteration from the deterministic start.
pub fn run_subspace(
    space: &GalerkinSpace,
    op: &ParametricOperator,
    config: SubspaceConfig,
) -> Result<SpectralBasis> {
    SubspaceIteration::new(space, op, config)?.run()
}

/// Largest projected overlap `‖F^v(û_q, û_i)‖` over all pairs `i < q`.
pub fn galerkin_orthogonality(basis: &[SpectralVector], space: &GalerkinSpace, op: &ParametricOperator) -> f64 {
    let mut worst: f64 = 0.0;
    for q in 0..basis.len() {
        for i in 0..q {
            let f = weighted_gram(&basis[q], &basis[i], space.tensor(), op.mass());
            worst = worst.max(libm::sqrt(f.iter().map(|x| x * x).sum()));
        }
    }
    worst
}

/// Coefficients of `P_A(‖u_q‖²_M)`, which should be `ê_1` for every vector.
pub fn normalization_defect(basis: &[SpectralVector], space: &GalerkinSpace, op: &ParametricOperator) -> f64 {
    basis
        .iter()
        .map(|u| {
            let mut f = weighted_gram(u, u, space.tensor(), op.mass());
            f[0] -= 1.0;
            libm::sqrt(f.iter().map(|x| x * x).sum())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::fem::Mesh;
    use crate::inverse::{InverseIteration, IterationConfig};
    use crate::multiindex::{MultiIndexSet, WeightSequence};
    use crate::validation::{subspace_cosine, SplitMix64};

    #[test]
    fn single_vector_matches_inverse_iteration() {
        let set = MultiIndexSet::with_cardinality(WeightSequence::Decay { varsigma: 3.2 }, 6).unwrap();
        let sp = GalerkinSpace::new(set);
        let mesh = Mesh::new(5, 1).unwrap();
        let op = ParametricOperator::assemble(&mesh, 3.2, sp.set().active_dimensions()).unwrap();
        let inv = InverseIteration::new(&sp, &op, IterationConfig { tol: 1e-11, ..Default::default() })
            .unwrap()
            .run()
            .unwrap();
        let cfg = SubspaceConfig { q: 1, tol: 1e-11, ..Default::default() };
        let sub = run_subspace(&sp, &op, cfg).unwrap();
        assert!(sub.vectors[0].mass_distance(&inv.u, op.mass()) < 1e-9);
    }

    #[test]
    fn mean_only_space_is_classical_subspace_iteration() {
        let set = MultiIndexSet::generate(WeightSequence::Decay { varsigma: 3.2 }, 0.5).unwrap();
        let sp = GalerkinSpace::new(set);
        let mesh = Mesh::new(8, 1).unwrap();
        let op = ParametricOperator::assemble(&mesh, 3.2, 0).unwrap();
        // start from a scrambled basis so that the iteration has work to do
        let mut rng = SplitMix64::new(3);
        let n = op.dofs();
        let start: Vec<SpectralVector> = (0..3)
            .map(|_| SpectralVector::from_mean(1, &(0..n).map(|_| rng.next_symmetric()).collect::<Vec<_>>()))
            .collect();
        let cfg = SubspaceConfig { q: 3, tol: 1e-12, max_steps: 400, ..Default::default() };
        let it = SubspaceIteration::new(&sp, &op, cfg).unwrap();
        let basis = it.run_from(SpectralBasis::new(start), |_| Ok(())).unwrap();
        let det = deterministic_eigensolve(&op, &[], 3).unwrap();
        let got: Vec<Vec<f64>> = basis.vectors.iter().map(|v| v.block(0).to_vec()).collect();
        let cos = subspace_cosine(&got, &det.vectors, op.mass());
        assert!((cos - 1.0).abs() < 1e-9, "cos = {cos}");
        assert!(galerkin_orthogonality(&basis.vectors, &sp, &op) < 1e-10);
    }

    #[test]
    fn dependent_start_breaks_down() {
        let set = MultiIndexSet::generate(WeightSequence::Decay { varsigma: 3.2 }, 0.5).unwrap();
        let sp = GalerkinSpace::new(set);
        let mesh = Mesh::new(4, 1).unwrap();
        let op = ParametricOperator::assemble(&mesh, 3.2, 0).unwrap();
        let det = deterministic_eigensolve(&op, &[], 1).unwrap();
        let v = SpectralVector::from_mean(1, &det.vectors[0]);
        let cfg = SubspaceConfig { q: 2, ..Default::default() };
        let it = SubspaceIteration::new(&sp, &op, cfg).unwrap();
        let mut basis = SpectralBasis::new(vec![v.clone(), v]);
        assert!(matches!(it.iterate_once(&mut basis), Err(Error::Breakdown { vector: 1, .. })));
    }
}
