//! The convergence studies. Every function is deterministic for a fixed
//! configuration; parallel loops collect in input order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sgevp_core::fem::{Mesh, ParametricOperator};
use sgevp_core::galerkin::{GalerkinSpace, SpectralVector};
use sgevp_core::inverse::{EigenpairResult, InverseIteration, IterationConfig};
use sgevp_core::legendre::evaluate_scalar;
use sgevp_core::multiindex::MultiIndexSet;
use sgevp_core::subspace::{SpectralBasis, SubspaceConfig, SubspaceIteration};
use sgevp_core::validation::{
    coefficient_decay_report, deterministic_eigensolve, halton_points, linear_fit, loglog_fit,
    prolongate_spectral, sample_statistics, subspace_angle, DecayReport, LinearFit,
    PointwiseEigenSolution, SampleStatistics,
};

use crate::error::Result;

/// Mesh, operator and Galerkin space of one discretization.
pub struct Problem {
    pub mesh: Mesh,
    pub op: ParametricOperator,
    pub space: GalerkinSpace,
}

impl Problem {
    /// Assembles as many coefficient terms as the index set activates.
    pub fn new(
        cells: usize,
        order: usize,
        quadrature: Option<usize>,
        varsigma: f64,
        set: MultiIndexSet,
    ) -> Result<Self> {
        let mut mesh = Mesh::new(cells, order)?;
        if let Some(q) = quadrature {
            mesh = mesh.with_quadrature(q)?;
        }
        let op = ParametricOperator::assemble(&mesh, varsigma, set.active_dimensions())?;
        Ok(Self { mesh, op, space: GalerkinSpace::new(set) })
    }

    pub fn solve(&self, config: IterationConfig) -> Result<EigenpairResult> {
        Ok(InverseIteration::new(&self.space, &self.op, config)?.run()?)
    }

    pub fn active_dimensions(&self) -> usize {
        self.space.set().active_dimensions()
    }
}

/// `λ_i/λ_j` of the pointwise problem at `y = 0` (1-based indices).
pub fn center_ratio(op: &ParametricOperator, i: usize, j: usize) -> Result<f64> {
    let sol = deterministic_eigensolve(op, &[], j)?;
    Ok(sol.values[i - 1] / sol.values[j - 1])
}

/// Tensorized M-norm distance between two chaos solutions on the same mesh,
/// matching coefficients through their multi-indices. Coefficients missing
/// in one set count as zero.
pub fn embedded_distance(
    u: &SpectralVector,
    set_u: &MultiIndexSet,
    reference: &SpectralVector,
    set_ref: &MultiIndexSet,
    mass: &sgevp_core::sparse::CsrMatrix,
) -> f64 {
    let mut total = 0.0;
    let mut matched = vec![false; set_u.len()];
    for (r, alpha) in set_ref.iter().enumerate() {
        let rb = reference.block(r);
        let d: Vec<f64> = match set_u.position_of(alpha) {
            Some(k) => {
                matched[k] = true;
                u.block(k).iter().zip(rb).map(|(a, b)| a - b).collect()
            }
            None => rb.to_vec(),
        };
        total += mass.inner(&d, &d);
    }
    for (k, _) in matched.iter().enumerate().filter(|(_, m)| !**m) {
        total += mass.inner(u.block(k), u.block(k));
    }
    total.max(0.0).sqrt()
}

/// Euclidean distance of scalar chaos coefficients matched by multi-index.
pub fn embedded_scalar_distance(
    a: &[f64],
    set_a: &MultiIndexSet,
    b: &[f64],
    set_b: &MultiIndexSet,
) -> f64 {
    let mut total = 0.0;
    for (r, alpha) in set_b.iter().enumerate() {
        let x = set_a.position_of(alpha).map_or(0.0, |k| a[k]);
        total += (x - b[r]) * (x - b[r]);
    }
    for (k, alpha) in set_a.iter().enumerate() {
        if !set_b.contains(alpha) {
            total += a[k] * a[k];
        }
    }
    total.sqrt()
}

fn scalar_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- spatial

#[derive(Clone, Debug, Serialize)]
pub struct SpatialRow {
    pub cells: usize,
    pub h: f64,
    pub dofs: usize,
    pub eigenvector_error: f64,
    pub eigenvalue_error: f64,
    pub mean_eigenvalue: f64,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct SpatialStudy {
    pub rows: Vec<SpatialRow>,
    pub reference_cells: usize,
    pub reference_mean_eigenvalue: f64,
    pub eigenvector_fit: LinearFit,
    pub eigenvalue_fit: LinearFit,
}

/// Runs every mesh with the same index set and step budget and compares
/// with the reference mesh; slopes are fitted against `h`.
pub fn spatial_study(
    cells: &[usize],
    reference: &Problem,
    reference_solution: &EigenpairResult,
    order: usize,
    quadrature: Option<usize>,
    varsigma: f64,
    config: IterationConfig,
) -> Result<SpatialStudy> {
    let set = reference.space.set().clone();
    let rows = cells
        .par_iter()
        .map(|&c| -> Result<SpatialRow> {
            let problem = Problem::new(c, order, quadrature, varsigma, set.clone())?;
            let sol = problem.solve(config)?;
            let fine = prolongate_spectral(&sol.u, &problem.mesh, &reference.mesh);
            Ok(SpatialRow {
                cells: c,
                h: problem.mesh.h(),
                dofs: problem.op.dofs(),
                eigenvector_error: fine.mass_distance(&reference_solution.u, reference.op.mass()),
                eigenvalue_error: scalar_distance(&sol.mu, &reference_solution.mu),
                mean_eigenvalue: sol.mu[0],
                steps: sol.steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let ev: Vec<f64> = rows.iter().map(|r| r.eigenvector_error).collect();
    let el: Vec<f64> = rows.iter().map(|r| r.eigenvalue_error).collect();
    Ok(SpatialStudy {
        eigenvector_fit: loglog_fit(&h, &ev)?,
        eigenvalue_fit: loglog_fit(&h, &el)?,
        reference_cells: reference.mesh.cells(),
        reference_mean_eigenvalue: reference_solution.mu[0],
        rows,
    })
}

// ------------------------------------------------------------- stochastic

#[derive(Clone, Debug, Serialize)]
pub struct StochasticRow {
    pub cardinality: usize,
    pub active_dimensions: usize,
    pub eps: f64,
    pub eigenvector_error: f64,
    pub eigenvalue_error: f64,
    pub mean_eigenvalue: f64,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct StochasticStudy {
    pub rows: Vec<StochasticRow>,
    pub reference_cardinality: usize,
    pub eigenvector_fit: LinearFit,
    pub eigenvalue_fit: LinearFit,
}

/// Nested index sets on a fixed mesh, each converged, against a converged
/// solution on a larger set.
pub fn stochastic_study(
    sets: &[MultiIndexSet],
    reference: &Problem,
    reference_solution: &EigenpairResult,
    config: IterationConfig,
) -> Result<StochasticStudy> {
    let mesh = &reference.mesh;
    let varsigma = reference.op.varsigma();
    let ref_set = reference.space.set();
    let rows = sets
        .par_iter()
        .map(|set| -> Result<StochasticRow> {
            let problem = Problem::new(mesh.cells(), mesh.order(), Some(mesh.quadrature()), varsigma, set.clone())?;
            let sol = problem.solve(config)?;
            Ok(StochasticRow {
                cardinality: set.len(),
                active_dimensions: set.active_dimensions(),
                eps: set.eps().unwrap_or(f64::NAN),
                eigenvector_error: embedded_distance(
                    &sol.u,
                    set,
                    &reference_solution.u,
                    ref_set,
                    reference.op.mass(),
                ),
                eigenvalue_error: embedded_scalar_distance(&sol.mu, set, &reference_solution.mu, ref_set),
                mean_eigenvalue: sol.mu[0],
                steps: sol.steps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = rows.iter().map(|r| r.cardinality as f64).collect();
    let ev: Vec<f64> = rows.iter().map(|r| r.eigenvector_error).collect();
    let el: Vec<f64> = rows.iter().map(|r| r.eigenvalue_error).collect();
    Ok(StochasticStudy {
        eigenvector_fit: loglog_fit(&p, &ev)?,
        eigenvalue_fit: loglog_fit(&p, &el)?,
        reference_cardinality: ref_set.len(),
        rows,
    })
}

// -------------------------------------------------------------- iteration

#[derive(Clone, Debug, Serialize)]
pub struct IterationRow {
    pub k: usize,
    pub increment: f64,
    pub increment_ratio: f64,
    pub eigenvector_error: f64,
    pub eigenvalue_error: f64,
    pub total_eigenvector_error: f64,
    pub total_eigenvalue_error: f64,
    pub mu_change: f64,
    pub cg_iterations: usize,
    pub newton_iterations: usize,
    pub delta_condition: f64,
}

#[derive(Clone, Debug)]
pub struct IterationStudy {
    pub rows: Vec<IterationRow>,
    /// `μ_1(0)/μ_2(0)`.
    pub rate: f64,
    /// Rows after the burn-in and before the turning point.
    pub window: std::ops::Range<usize>,
    /// Distance of the fixed point to the overkill solution.
    pub stochastic_error: f64,
    pub stochastic_eigenvalue_error: f64,
    pub eigenvector_fit: LinearFit,
    pub eigenvalue_fit: LinearFit,
    pub newton_residuals: Vec<f64>,
}

/// Log-linear fit of `err` against `k` over a row range; NaN slope when the
/// range holds fewer than two rows.
fn window_fit(
    rows: &[IterationRow],
    window: &std::ops::Range<usize>,
    err: impl Fn(&IterationRow) -> f64,
) -> Result<LinearFit> {
    if window.len() < 2 {
        return Ok(LinearFit { slope: f64::NAN, intercept: f64::NAN, slope_error: f64::NAN });
    }
    let k: Vec<f64> = rows[window.clone()].iter().map(|r| r.k as f64).collect();
    let e: Vec<f64> = rows[window.clone()].iter().map(|r| err(r).ln()).collect();
    Ok(linear_fit(&k, &e)?)
}

/// Iteration errors per step, measured against the converged fixed point of
/// the same discretization. The overkill solution fixes the stochastic
/// error of that fixed point; the step at which the eigenvector iteration
/// error drops below it is the turning point. Fits and increment ratios use
/// the steps after `burn_in` and before the turning point.
pub fn iteration_study(
    problem: &Problem,
    overkill: (&Problem, &EigenpairResult),
    steps: usize,
    config: IterationConfig,
    burn_in: usize,
) -> Result<IterationStudy> {
    let tight = IterationConfig {
        tol: 1e-13,
        max_steps: 400,
        cg_tol_factor: 1e-8,
        cg_tol_min: 1e-14,
        ..config
    };
    let fixed = problem.solve(tight)?;
    let set = problem.space.set();
    let mass = problem.op.mass();
    let (ok_problem, ok_sol) = overkill;
    let ok_set = ok_problem.space.set();
    let stochastic_error = embedded_distance(&fixed.u, set, &ok_sol.u, ok_set, mass);
    let stochastic_eigenvalue_error = embedded_scalar_distance(&fixed.mu, set, &ok_sol.mu, ok_set);

    let it = InverseIteration::new(&problem.space, &problem.op, config)?;
    let mut state = it.start(it.initial_guess()?)?;
    let mut rows: Vec<IterationRow> = Vec::with_capacity(steps);
    for _ in 0..steps {
        it.step(&mut state)?;
        let rec = state.history.last().expect("one step done");
        let prev = rows.last().map_or(f64::NAN, |r| r.increment);
        rows.push(IterationRow {
            k: rec.k,
            increment: rec.increment,
            increment_ratio: rec.increment / prev,
            eigenvector_error: state.u.mass_distance(&fixed.u, mass),
            eigenvalue_error: scalar_distance(&state.mu, &fixed.mu),
            total_eigenvector_error: embedded_distance(&state.u, set, &ok_sol.u, ok_set, mass),
            total_eigenvalue_error: embedded_scalar_distance(&state.mu, set, &ok_sol.mu, ok_set),
            mu_change: rec.mu_change,
            cg_iterations: rec.cg_iterations,
            newton_iterations: rec.newton_iterations,
            delta_condition: rec.delta_condition,
        });
    }
    let newton = sgevp_core::galerkin::newton_normalize(
        state.v.as_ref().expect("stepped"),
        problem.space.tensor(),
        mass,
        &config.newton,
    )?;
    let turning = rows
        .iter()
        .position(|r| r.eigenvector_error <= stochastic_error)
        .unwrap_or(rows.len());
    let window = burn_in.min(turning)..turning;
    Ok(IterationStudy {
        rate: center_ratio(&problem.op, 1, 2)?,
        eigenvector_fit: window_fit(&rows, &window, |r| r.eigenvector_error)?,
        eigenvalue_fit: window_fit(&rows, &window, |r| r.eigenvalue_error)?,
        stochastic_error,
        stochastic_eigenvalue_error,
        window,
        rows,
        newton_residuals: newton.residuals,
    })
}

// ------------------------------------------------------------------ decay

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub position: usize,
    pub multi_index: String,
    pub eigenvector_norm: f64,
    pub eigenvalue_abs: f64,
    pub eigenvector_sorted: f64,
    pub eigenvalue_sorted: f64,
}

pub fn decay_rows(set: &MultiIndexSet, report: &DecayReport) -> Vec<DecayRow> {
    set.iter()
        .enumerate()
        .map(|(k, alpha)| DecayRow {
            position: k + 1,
            multi_index: format_index(alpha),
            eigenvector_norm: report.eigenvector_norms[k],
            eigenvalue_abs: report.eigenvalue_abs[k],
            eigenvector_sorted: report.eigenvector_sorted[k],
            eigenvalue_sorted: report.eigenvalue_sorted[k],
        })
        .collect()
}

pub fn decay_report(problem: &Problem, sol: &EigenpairResult, tail_from: usize) -> DecayReport {
    coefficient_decay_report(&sol.u, &sol.mu, problem.op.mass(), tail_from)
}

pub fn format_index(alpha: &sgevp_core::multiindex::MultiIndex) -> String {
    alpha.entries().iter().map(|(d, e)| format!("{d}:{e}")).collect::<Vec<_>>().join(" ")
}

// ------------------------------------------------------------- statistics

/// Uniform samples in `[-1, 1]^dims` from a seeded ChaCha generator.
pub fn uniform_samples(count: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dims).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct StatisticsSummary {
    pub samples: usize,
    pub chaos_mean: f64,
    pub chaos_variance: f64,
    pub mc_mean: f64,
    pub mc_variance: f64,
    pub mc_mean_error: f64,
    pub mc_variance_error: f64,
    /// `|chaos - MC| / standard error`.
    pub mean_z: f64,
    pub variance_z: f64,
}

/// Compares chaos moments of `μ` with Monte Carlo over pointwise solves in
/// the active dimensions.
pub fn statistics_study(
    problem: &Problem,
    sol: &EigenpairResult,
    samples: usize,
    seed: u64,
) -> Result<StatisticsSummary> {
    let ys = uniform_samples(samples, problem.active_dimensions(), seed);
    let values = ys
        .par_iter()
        .map(|y| Ok(deterministic_eigensolve(&problem.op, y, 1)?.values[0]))
        .collect::<Result<Vec<f64>>>()?;
    let mc: SampleStatistics = sample_statistics(values)?;
    let (chaos_mean, chaos_variance) = (sol.eigenvalue_mean(), sol.eigenvalue_variance());
    Ok(StatisticsSummary {
        samples,
        chaos_mean,
        chaos_variance,
        mc_mean: mc.mean,
        mc_variance: mc.variance,
        mc_mean_error: mc.mean_error,
        mc_variance_error: mc.variance_error,
        mean_z: (chaos_mean - mc.mean).abs() / mc.mean_error,
        variance_z: (chaos_variance - mc.variance).abs() / mc.variance_error,
    })
}

// --------------------------------------------------------------- residual

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub sample: usize,
    pub relative_residual: f64,
    pub normalization_defect: f64,
    pub eigenvalue_error: f64,
    pub eigenvector_error: f64,
}

/// `‖K(y)u - μMu‖ / (μ‖Mu‖)` and `|‖u(y)‖_M - 1|` at random parameters.
pub fn residual_study(
    problem: &Problem,
    sol: &EigenpairResult,
    samples: usize,
    seed: u64,
) -> Result<Vec<ResidualRow>> {
    let set = problem.space.set();
    let ys = uniform_samples(samples, problem.active_dimensions(), seed);
    ys.par_iter()
        .enumerate()
        .map(|(i, y)| {
            let u = sol.u.evaluate(set, y)?;
            let mu = evaluate_scalar(&sol.mu, set, y)?;
            let k = problem.op.pointwise(y);
            let mass = problem.op.mass();
            let ku = k.matvec(&u);
            let mu_vec = mass.matvec(&u);
            let r: f64 = ku.iter().zip(&mu_vec).map(|(a, b)| (a - mu * b).powi(2)).sum();
            let m: f64 = mu_vec.iter().map(|x| x * x).sum();
            let oracle = deterministic_eigensolve(&problem.op, y, 1)?;
            let err = sgevp_core::validation::pointwise_error_against(
                &sol.u, &sol.mu, set, mass, &oracle,
            )?;
            Ok(ResidualRow {
                sample: i,
                relative_residual: r.sqrt() / (mu.abs() * m.sqrt()),
                normalization_defect: (mass.inner(&u, &u).sqrt() - 1.0).abs(),
                eigenvalue_error: err.eigenvalue,
                eigenvector_error: err.eigenvector,
            })
        })
        .collect()
}

// --------------------------------------------------------------- subspace

#[derive(Clone, Debug, Serialize)]
pub struct SubspaceRow {
    pub k: usize,
    pub mean_theta: f64,
    pub var_theta: f64,
    pub angle: f64,
    pub angle_ratio: f64,
    pub max_increment: f64,
    pub orthogonality: f64,
}

#[derive(Clone, Debug)]
pub struct SubspaceStudy {
    pub rows: Vec<SubspaceRow>,
    /// `μ_Q(0)/μ_{Q+1}(0)`.
    pub rate: f64,
    /// Median resolved angle over the second half of the run.
    pub floor_angle: f64,
    /// Rows whose angle is still above twice the floor.
    pub window: std::ops::Range<usize>,
    /// Per-step factor of the angle fitted over the window.
    pub observed_rate: f64,
    /// `Var[θ_1]` over the smallest variance of the run.
    pub variance_reduction: f64,
    pub basis: SpectralBasis,
}

/// Pointwise reference subspaces at `count` Halton points in the active
/// dimensions.
pub fn angle_oracles(problem: &Problem, q: usize, count: usize) -> Result<Vec<PointwiseEigenSolution>> {
    halton_points(count, problem.active_dimensions(), 0)
        .par_iter()
        .map(|y| Ok(deterministic_eigensolve(&problem.op, y, q)?))
        .collect()
}

pub fn subspace_study(
    problem: &Problem,
    config: SubspaceConfig,
    angle_samples: usize,
) -> Result<SubspaceStudy> {
    let q = config.q;
    let oracles = angle_oracles(problem, q, angle_samples)?;
    let it = SubspaceIteration::new(&problem.space, &problem.op, config)?;
    let set = problem.space.set();
    let mass = problem.op.mass();
    let mut rows: Vec<SubspaceRow> = Vec::new();
    let basis = it.run_from(it.initial_basis()?, |b| {
        let thetas = oracles
            .par_iter()
            .map(|o| subspace_angle(&b.vectors, set, mass, o))
            .collect::<sgevp_core::Result<Vec<f64>>>()?;
        let n = thetas.len() as f64;
        let mean = thetas.iter().sum::<f64>() / n;
        let var = thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        let angle = mean.min(1.0).acos();
        let rec = b.history.last().expect("stepped");
        rows.push(SubspaceRow {
            k: rec.k,
            mean_theta: mean,
            var_theta: var,
            angle,
            angle_ratio: rows.last().map_or(f64::NAN, |r| angle / r.angle),
            max_increment: rec.increments.iter().cloned().fold(0.0, f64::max),
            orthogonality: rec.orthogonality,
        });
        Ok(())
    })?;
    // E[θ] above one means the angle is no longer resolved by the sample.
    let mut tail: Vec<f64> = rows[rows.len() / 2..].iter().map(|r| r.angle).filter(|a| *a > 0.0).collect();
    tail.sort_by(|a, b| a.total_cmp(b));
    let floor_angle = tail.get(tail.len() / 2).copied().unwrap_or(0.0);
    let end = rows.iter().position(|r| r.angle <= 2.0 * floor_angle).unwrap_or(rows.len());
    let window = 0..end;
    let observed_rate = if window.len() < 2 {
        f64::NAN
    } else {
        let k: Vec<f64> = rows[window.clone()].iter().map(|r| r.k as f64).collect();
        let a: Vec<f64> = rows[window.clone()].iter().map(|r| r.angle.ln()).collect();
        linear_fit(&k, &a)?.slope.exp()
    };
    let min_var = rows.iter().map(|r| r.var_theta).fold(f64::INFINITY, f64::min);
    let variance_reduction = rows.first().map_or(f64::NAN, |r| r.var_theta / min_var);
    Ok(SubspaceStudy {
        rows,
        rate: center_ratio(&problem.op, q, q + 1)?,
        floor_angle,
        window,
        observed_rate,
        variance_reduction,
        basis,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossingRow {
    pub y1: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
}

/// Sweeps `y_1` with the other parameters at zero. The second and third
/// eigenvalues cross when the eigenvector belonging to `μ_2` at one end has
/// its largest overlap with the `μ_3` eigenvector at the other end.
pub fn crossing_sweep(op: &ParametricOperator, points: usize) -> Result<(Vec<CrossingRow>, bool)> {
    let ys: Vec<f64> = (0..points).map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64).collect();
    let sols = ys
        .par_iter()
        .map(|&y1| Ok(deterministic_eigensolve(op, &[y1], 4)?))
        .collect::<Result<Vec<_>>>()?;
    let rows = sols
        .iter()
        .zip(&ys)
        .map(|(s, &y1)| CrossingRow { y1, mu1: s.values[0], mu2: s.values[1], mu3: s.values[2], mu4: s.values[3] })
        .collect();
    let (first, last) = (&sols[0], &sols[sols.len() - 1]);
    let m = op.mass();
    let o22 = m.inner(&first.vectors[1], &last.vectors[1]).abs();
    let o23 = m.inner(&first.vectors[1], &last.vectors[2]).abs();
    Ok((rows, o23 > o22))
}
