//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is always shown.
//! The process fails when a criterion outside `KNOWN_FAILING` fails, or when
//! a known failure starts passing and the list is out of date.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use sgevp::config::ExperimentConfig;
use sgevp::experiments::{iteration_study, Problem};
use sgevp::reference::obtain_reference;
use sgevp::run::{run_experiment, Summary};
use sgevp_core::dense::symmetric_eigen;
use sgevp_core::galerkin::{pcg_solve, GalerkinSpace, MeanPreconditioner};
use sgevp_core::multiindex::WeightSequence;
use sgevp_core::sparse::BandCholesky;
use sgevp_core::validation::SplitMix64;
use sgevp_core::{
    Error as CoreError, InverseIteration, IterationConfig, KroneckerOperator, MomentMatrices, MultiIndex,
    MultiIndexSet, ParametricOperator, SpectralVector, TripleProductTensor,
};
use sgevp_core::Mesh;

/// Variance of θ at the floor stays about 25x below its first-step value at
/// #A = 52; see the README.
const KNOWN_FAILING: &[usize] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).expect("shipped config")
}

fn run(name: &str, scratch: &Path) -> Summary {
    let cfg = config(name);
    let out: PathBuf = scratch.join(name.trim_end_matches(".toml"));
    run_experiment(&cfg, Some(&out)).expect("experiment").summary
}

fn decay_set(target: usize) -> MultiIndexSet {
    MultiIndexSet::with_cardinality(WeightSequence::Decay { varsigma: 3.2 }, target).unwrap()
}

// ------------------------------------------------------------ criterion 1

/// Monomial coefficients of the normalized Legendre polynomials.
fn legendre_monomials(max: usize) -> Vec<Vec<f64>> {
    let mut p: Vec<Vec<f64>> = vec![vec![1.0], vec![0.0, 1.0]];
    for n in 1..max {
        let mut next = vec![0.0; n + 2];
        for (k, c) in p[n].iter().enumerate() {
            next[k + 1] += (2 * n + 1) as f64 * c / (n + 1) as f64;
        }
        for (k, c) in p[n - 1].iter().enumerate() {
            next[k] -= n as f64 * c / (n + 1) as f64;
        }
        p.push(next);
    }
    p.truncate(max + 1);
    p.iter()
        .enumerate()
        .map(|(n, c)| c.iter().map(|x| x * ((2 * n + 1) as f64).sqrt()).collect())
        .collect()
}

/// Mean over [-1, 1] of a product of polynomials, exact on monomials.
fn mean_of_product(polys: &[&[f64]]) -> f64 {
    let mut prod = vec![1.0];
    for p in polys {
        let mut next = vec![0.0; prod.len() + p.len() - 1];
        for (i, a) in prod.iter().enumerate() {
            for (j, b) in p.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        prod = next;
    }
    prod.iter().enumerate().filter(|(k, _)| k % 2 == 0).map(|(k, c)| c / (k + 1) as f64).sum()
}

fn tensor_error(set: &MultiIndexSet) -> f64 {
    let dims = set.active_dimensions().max(1);
    let leg = legendre_monomials(3 * set.max_degree() as usize + 1);
    let x = [0.0, 1.0];
    let deg = |a: &MultiIndex, d| a.get(d) as usize;
    let tensor = TripleProductTensor::build(set);
    let moments = MomentMatrices::build(set);
    let p = set.len();
    let mut worst: f64 = 0.0;
    for a in 0..p {
        for b in 0..p {
            for c in 0..p {
                let (ia, ib, ic) = (set.get(a), set.get(b), set.get(c));
                let want: f64 = (1..=dims)
                    .map(|d| mean_of_product(&[&leg[deg(ia, d)], &leg[deg(ib, d)], &leg[deg(ic, d)]]))
                    .product();
                worst = worst.max((tensor.get(a, b, c) - want).abs());
            }
        }
    }
    for m in 1..=moments.terms() {
        let g = moments.to_dense(m);
        for b in 0..p {
            for c in 0..p {
                let (ib, ic) = (set.get(b), set.get(c));
                let want: f64 = (1..=dims)
                    .map(|d| {
                        let (j, k) = (&leg[deg(ib, d)], &leg[deg(ic, d)]);
                        if d == m { mean_of_product(&[&x, j, k]) } else { mean_of_product(&[j, k]) }
                    })
                    .product();
                worst = worst.max((g[(b, c)] - want).abs());
            }
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut sets: Vec<MultiIndexSet> = [4, 8, 12].iter().map(|&t| decay_set(t)).collect();
    sets.push(MultiIndexSet::with_cardinality(WeightSequence::Decay { varsigma: 1.6 }, 12).unwrap());
    for eps in [0.05, 0.1] {
        let s = MultiIndexSet::generate(WeightSequence::Geometric { ratio: 0.5 }, eps).unwrap();
        if s.len() <= 12 {
            sets.push(s);
        }
    }
    let worst = sets.iter().map(tensor_error).fold(0.0, f64::max);
    outcome(worst <= 1e-12, format!("{} sets, max |G - oracle| = {worst:.2e} (tol 1e-12)", sets.len()))
}

// ------------------------------------------------------------ criterion 2

fn criterion_2() -> Outcome {
    let set = MultiIndexSet::from_indices(vec![MultiIndex::zero()]).unwrap();
    let problem = Problem::new(8, 2, None, 3.2, set).unwrap();
    let op = &problem.op;
    let mass = op.mass();
    let k0 = op.pointwise(&[]);

    // start away from the eigenvector so that 20 steps are meaningful
    let start = problem.mesh.interpolate(|x, y| x * (1.0 - x) * y * (1.0 - y) * (1.0 + 3.0 * x * y));
    let cfg = IterationConfig { tol: 1e-300, max_steps: 20, cg_tol_factor: 1e-14, cg_tol_min: 1e-14, ..Default::default() };
    let it = InverseIteration::new(&problem.space, op, cfg).unwrap();
    let sol = it.run_from(SpectralVector::from_mean(1, &start)).unwrap();

    let chol = BandCholesky::factor(&k0).unwrap();
    let norm0 = mass.inner(&start, &start).sqrt();
    let mut u: Vec<f64> = start.iter().map(|x| x / norm0).collect();
    let mut mu = f64::NAN;
    for _ in 0..20 {
        let v = chol.solve(&mass.matvec(&u));
        let s = mass.inner(&v, &v).sqrt();
        mu = 1.0 / s;
        u = v.iter().map(|x| x / s).collect();
    }
    let de = (sol.mu[0] - mu).abs();
    let diff: Vec<f64> = sol.u.block(0).iter().zip(&u).map(|(a, b)| a - b).collect();
    let dv = mass.inner(&diff, &diff).sqrt();
    outcome(
        sol.steps == 20 && de <= 1e-10 && dv <= 1e-8,
        format!("20 steps, |Δμ| = {de:.2e} (tol 1e-10), M-distance {dv:.2e} (tol 1e-8)"),
    )
}

// ------------------------------------------------------------ criterion 3

fn criterion_3(scratch: &Path) -> Outcome {
    match run("spatial.toml", scratch) {
        Summary::Spatial { eigenvector, eigenvalue, .. } => {
            let (a, b) = (eigenvector.slope, eigenvalue.slope);
            outcome(
                (a - 3.0).abs() <= 0.5 && (b - 4.0).abs() <= 0.7,
                format!("h-slopes {a:.2} (3.0 ± 0.5) and {b:.2} (4.0 ± 0.7)"),
            )
        }
        _ => unreachable!(),
    }
}

// ------------------------------------------------------------ criterion 4

fn criterion_4() -> Outcome {
    let cfg = config("iteration.toml");
    let p = &cfg.problem;
    let problem = Problem::new(p.cells, p.order, p.quadrature, p.varsigma, cfg.index_set().unwrap()).unwrap();
    let (ok_problem, ok_sol) = obtain_reference(&cfg).unwrap();
    let s = iteration_study(
        &problem,
        (&ok_problem, &ok_sol),
        cfg.iteration.max_steps,
        cfg.iteration_config(),
        cfg.validation.burn_in,
    )
    .unwrap();
    let ratios: Vec<f64> = s.rows[s.window.clone()].iter().map(|r| r.increment_ratio).collect();
    let worst = ratios.iter().map(|r| (r - s.rate).abs()).fold(0.0, f64::max);
    let steeper = s.eigenvalue_fit.slope / s.eigenvector_fit.slope;
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    outcome(
        !ratios.is_empty() && worst <= 0.05 && steeper >= 1.5,
        format!(
            "#A = {}, k = {}..{}, ratios [{}] vs λ̄ = {:.4} (± 0.05), eigenvalue slope {:.2}x eigenvector slope (≥ 1.5)",
            problem.space.len(),
            s.window.start + 1,
            s.window.end,
            shown.join(", "),
            s.rate,
            steeper
        ),
    )
}

// ------------------------------------------------------------ criterion 5

fn criterion_5(scratch: &Path) -> Outcome {
    let (slope, monotone) = match run("stochastic.toml", scratch) {
        Summary::Stochastic { eigenvector, monotone, .. } => (eigenvector.slope, monotone),
        _ => unreachable!(),
    };
    let tail = match run("decay.toml", scratch) {
        Summary::Decay { eigenvector_slope, .. } => eigenvector_slope,
        _ => unreachable!(),
    };
    outcome(
        slope <= -1.4 && monotone && (tail + 2.4).abs() <= 0.6,
        format!("error slope {slope:.2} (≤ -1.4), monotone {monotone}, tail slope {tail:.2} (-2.4 ± 0.6)"),
    )
}

// ------------------------------------------------------------ criterion 6

fn criterion_6(scratch: &Path) -> Outcome {
    match run("residual.toml", scratch) {
        Summary::Residual { samples, max_relative_residual: r, max_normalization_defect: d } => outcome(
            samples == 20 && r <= 1e-4 && d <= 5e-3,
            format!("{samples} points, max residual {r:.2e} (≤ 1e-4), max |‖u‖_M - 1| {d:.2e} (≤ 5e-3)"),
        ),
        _ => unreachable!(),
    }
}

// ------------------------------------------------------------ criterion 7

fn criterion_7(scratch: &Path) -> Outcome {
    match run("statistics.toml", scratch) {
        Summary::Statistics(s) => outcome(
            s.samples >= 10_000 && s.mean_z < 3.0 && s.variance_z < 3.0,
            format!("{} samples, z(mean) {:.2}, z(variance) {:.2} (< 3)", s.samples, s.mean_z, s.variance_z),
        ),
        _ => unreachable!(),
    }
}

// ------------------------------------------------------------ criterion 8

fn criterion_8(scratch: &Path) -> Outcome {
    match run("subspace.toml", scratch) {
        Summary::Subspace { rate, observed_rate, floor_angle, variance_reduction, crossing } => {
            let rate_ok = (observed_rate - rate).abs() <= 0.1;
            let var_ok = variance_reduction >= 100.0;
            outcome(
                rate_ok && var_ok && crossing,
                format!(
                    "angle rate {observed_rate:.4} vs λ̄ = {rate:.4} (± 0.1) [{}], floor {floor_angle:.2e}, \
                     Var reduction {variance_reduction:.1}x (≥ 100) [{}], crossing {crossing}",
                    if rate_ok { "ok" } else { "fail" },
                    if var_ok { "ok" } else { "fail" },
                ),
            )
        }
        _ => unreachable!(),
    }
}

// ------------------------------------------------------------ criterion 9

fn criterion_9() -> Outcome {
    let mut rng = SplitMix64::new(23);
    let mut min_quotient = f64::INFINITY;
    let mut min_eigen = f64::INFINITY;
    let mut curvature_failures = 0;
    for (cells, target) in [(2, 12), (4, 6), (4, 12), (6, 12)] {
        let set = decay_set(target);
        let mesh = Mesh::new(cells, 2).unwrap();
        let op = ParametricOperator::assemble(&mesh, 3.2, set.active_dimensions()).unwrap();
        let space = GalerkinSpace::new(set);
        let kron = KroneckerOperator::new(space.moments(), op.stiffness_family(), op.mass()).unwrap();
        let pre = MeanPreconditioner::new(&kron).unwrap();
        let (p, n) = (space.len(), op.dofs());
        for _ in 0..25 {
            let data: Vec<f64> = (0..p * n).map(|_| rng.next_symmetric()).collect();
            let v = SpectralVector::from_data(p, n, data).unwrap();
            let q = v.dot(&kron.apply(&v)) / v.dot(&v);
            min_quotient = min_quotient.min(q);
            match pcg_solve(&kron, &pre, &v, None, 1e-12, 2000) {
                Err(CoreError::NegativeCurvature { .. }) => curvature_failures += 1,
                other => {
                    other.unwrap();
                }
            }
        }
        if p * n <= 120 {
            let (values, _) = symmetric_eigen(&kron.to_dense());
            min_eigen = min_eigen.min(values.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    }
    outcome(
        min_quotient > 0.0 && min_eigen > 0.0 && curvature_failures == 0,
        format!(
            "100 random v̂: min v̂ᵀK̂v̂/v̂ᵀv̂ {min_quotient:.3e}, min eigenvalue (#A = 12, n = 2) {min_eigen:.3e}, \
             negative curvature in {curvature_failures} pcg solves"
        ),
    )
}

// ----------------------------------------------------------- criterion 10

fn criterion_10() -> Outcome {
    let problem = Problem::new(8, 2, None, 3.2, decay_set(31)).unwrap();
    let cfg = IterationConfig::default();
    let it = InverseIteration::new(&problem.space, &problem.op, cfg).unwrap();
    let mut state = it.start(it.initial_guess().unwrap()).unwrap();
    while state.k < 30 && !state.last_increment().is_some_and(|d| d < 1e-10) {
        it.step(&mut state).unwrap();
    }
    let v = state.v.as_ref().unwrap();
    let newton = sgevp_core::galerkin::newton_normalize(
        v,
        problem.space.tensor(),
        problem.op.mass(),
        &sgevp_core::galerkin::NewtonOptions { tol: 1e-12, ..Default::default() },
    )
    .unwrap();
    // residuals relative to ‖v̂‖², the scale the stopping test uses
    let scale = newton.residuals[0].max(v.mass_norm(problem.op.mass()).powi(2));
    let r: Vec<f64> = newton.residuals.iter().map(|x| x / scale).collect();
    // quadratic tail: the order log r_{k+1} / log r_k of the last
    // contraction that is still above round-off
    let order = r
        .windows(2)
        .filter(|w| w[1] > 1e-15 && w[0] < 1e-1)
        .map(|w| w[1].ln() / w[0].ln())
        .last()
        .unwrap_or(f64::NAN);
    let shown: Vec<String> = r.iter().map(|x| format!("{x:.1e}")).collect();
    outcome(
        newton.iterations <= 10 && order >= 1.6,
        format!(
            "{} iterations (≤ 10), relative residuals [{}], tail order {order:.2} (≥ 1.6)",
            newton.iterations,
            shown.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let dir = scratch.path();
    type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;
    let checks: Vec<(usize, &str, Duration, Check)> = vec![
        (1, "tensor correctness", Duration::from_secs(1), Box::new(criterion_1)),
        (2, "deterministic reduction", Duration::from_secs(5), Box::new(criterion_2)),
        (3, "spatial rates", Duration::from_secs(300), Box::new(|| criterion_3(dir))),
        (4, "iteration rate", Duration::from_secs(120), Box::new(criterion_4)),
        (5, "stochastic decay", Duration::from_secs(600), Box::new(|| criterion_5(dir))),
        (6, "pointwise residual", Duration::from_secs(60), Box::new(|| criterion_6(dir))),
        (7, "statistics consistency", Duration::from_secs(300), Box::new(|| criterion_7(dir))),
        (8, "subspace study", Duration::from_secs(600), Box::new(|| criterion_8(dir))),
        (9, "positive definite operator", Duration::from_secs(10), Box::new(criterion_9)),
        (10, "newton normalization", Duration::from_secs(10), Box::new(criterion_10)),
    ];
    let mut unexpected = Vec::new();
    for (n, name, budget, check) in checks {
        let t = Instant::now();
        let o = check();
        let took = t.elapsed();
        let timely = took <= budget;
        let pass = o.pass && timely;
        println!(
            "criterion {n:>2} {name:<27} {}  {}; {:.2}s (budget {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
        if pass == KNOWN_FAILING.contains(&n) {
            unexpected.push(n);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcome for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
