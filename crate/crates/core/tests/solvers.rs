use sgevp_core::galerkin::{pcg_solve, GalerkinSpace, KroneckerOperator, MeanPreconditioner, SpectralVector};
use sgevp_core::inverse::{InverseIteration, IterationConfig};
use sgevp_core::multiindex::{MultiIndexSet, WeightSequence};
use sgevp_core::subspace::{SubspaceConfig, SubspaceIteration};
use sgevp_core::validation::{
    deterministic_eigensolve, pointwise_error, subspace_angle, subspace_cosine, PointwiseEigenSolution,
    SplitMix64,
};
use sgevp_core::{Mesh, ParametricOperator};

fn setup(cells: usize, target: usize) -> (ParametricOperator, GalerkinSpace) {
    let set = MultiIndexSet::with_cardinality(WeightSequence::Decay { varsigma: 3.2 }, target).unwrap();
    let mesh = Mesh::new(cells, 2).unwrap();
    let op = ParametricOperator::assemble(&mesh, 3.2, set.active_dimensions()).unwrap();
    (op, GalerkinSpace::new(set))
}

fn random_y(rng: &mut SplitMix64, dims: usize) -> Vec<f64> {
    (0..dims).map(|_| rng.next_symmetric()).collect()
}

#[test]
fn pcg_with_mean_preconditioner_is_fast() {
    let (op, space) = setup(8, 31);
    let kron = KroneckerOperator::new(space.moments(), op.stiffness_family(), op.mass()).unwrap();
    let pre = MeanPreconditioner::new(&kron).unwrap();
    let v0 = deterministic_eigensolve(&op, &[], 1).unwrap();
    let rhs = SpectralVector::from_mean(space.len(), &v0.vectors[0]).apply_mass(op.mass());
    let (_, info) = pcg_solve(&kron, &pre, &rhs, None, 1e-10, 500).unwrap();
    println!("pcg iterations {}", info.iterations);
    assert!(info.iterations <= 30, "{} iterations", info.iterations);
}

#[test]
fn oracle_pairs_hold_at_random_points() {
    let (op, _) = setup(8, 31);
    let mass = op.mass();
    let mut rng = SplitMix64::new(5);
    for _ in 0..100 {
        let y = random_y(&mut rng, op.terms());
        let sol = deterministic_eigensolve(&op, &y, 3).unwrap();
        let k = op.pointwise(&y);
        for (i, v) in sol.vectors.iter().enumerate() {
            let kv = k.matvec(v);
            let mv = mass.matvec(v);
            let r: f64 = kv.iter().zip(&mv).map(|(a, b)| (a - sol.values[i] * b).powi(2)).sum::<f64>().sqrt();
            let m: f64 = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(r <= 1e-9 * sol.values[i] * m);
            for (j, w) in sol.vectors.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((mass.inner(v, w) - want).abs() < 1e-10);
            }
        }
        assert!(sol.values.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn pointwise_errors_shrink_along_nested_sets() {
    let mut rng = SplitMix64::new(17);
    let ys: Vec<Vec<f64>> = (0..5).map(|_| random_y(&mut rng, 60)).collect();
    let mut last = vec![f64::INFINITY; ys.len()];
    for target in [6, 25, 120] {
        let (op, space) = setup(8, target);
        let cfg = IterationConfig { tol: 1e-11, ..IterationConfig::default() };
        let sol = InverseIteration::new(&space, &op, cfg).unwrap().run().unwrap();
        for (i, y) in ys.iter().enumerate() {
            let yy = &y[..op.terms()];
            let e = pointwise_error(&sol.u, &sol.mu, space.set(), &op, yy).unwrap();
            println!("#A {target} y{i}: {:.3e} {:.3e}", e.eigenvalue, e.eigenvector);
            assert!(e.eigenvector < last[i]);
            last[i] = e.eigenvector;
        }
    }
}

#[test]
fn center_point_subspace_is_recovered() {
    let (op, space) = setup(8, 264);
    let cfg = SubspaceConfig { q: 3, sum_trick: true, max_steps: 25, tol: 1e-13, ..SubspaceConfig::default() };
    let it = SubspaceIteration::new(&space, &op, cfg).unwrap();
    let basis = it.run().unwrap();
    let oracle = deterministic_eigensolve(&op, &vec![0.0; op.terms()], 3).unwrap();
    let theta = subspace_angle(&basis.vectors, space.set(), op.mass(), &oracle).unwrap();
    // remove the normalization defect: cos = |det UᵀMV| / sqrt(det UᵀMU)
    let u: Vec<Vec<f64>> = basis.vectors.iter().map(|b| b.evaluate(space.set(), &oracle.y).unwrap()).collect();
    let gram = subspace_cosine(&u, &u, op.mass());
    let cos = theta / gram.sqrt();
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    println!("theta(0) = {theta}, det gram {gram}, sin {sin:e}");
    assert!(sin <= 1e-6);
}

#[test]
fn subspace_cosine_extremes_and_rotation_invariance() {
    let (op, space) = setup(4, 6);
    let mass = op.mass();
    let y: Vec<f64> = (0..op.terms()).map(|m| 0.3 - 0.2 * m as f64).collect();
    let sol = deterministic_eigensolve(&op, &y, 5).unwrap();
    let three = PointwiseEigenSolution { vectors: sol.vectors[..3].to_vec(), values: sol.values[..3].to_vec(), ..sol.clone() };
    let basis: Vec<SpectralVector> =
        three.vectors.iter().map(|v| SpectralVector::from_mean(space.len(), v)).collect();
    // constant expansions evaluate to their mean block at any y
    let theta = subspace_angle(&basis, space.set(), mass, &three).unwrap();
    assert!((theta - 1.0).abs() < 1e-12);
    let orth = subspace_cosine(&sol.vectors[3..5].to_vec(), &sol.vectors[..2].to_vec(), mass);
    assert!(orth < 1e-12);

    // rotate inside the span
    let (c, s) = (0.6f64, 0.8f64);
    let v = &three.vectors;
    let mixed: Vec<Vec<f64>> = vec![
        v[0].iter().zip(&v[1]).map(|(a, b)| c * a - s * b).collect(),
        v[0].iter().zip(&v[1]).map(|(a, b)| s * a + c * b).collect(),
        v[2].iter().map(|x| -x).collect(),
    ];
    assert!((subspace_cosine(&mixed, v, mass) - 1.0).abs() < 1e-12);
    let half: Vec<Vec<f64>> = vec![
        v[0].clone(),
        v[1].iter().zip(&sol.vectors[3]).map(|(a, b)| (a + b) / 2f64.sqrt()).collect(),
        v[2].clone(),
    ];
    let t1 = subspace_cosine(&half, v, mass);
    let rotated: Vec<Vec<f64>> = vec![
        half[0].iter().zip(&half[2]).map(|(a, b)| c * a + s * b).collect(),
        half[1].clone(),
        half[0].iter().zip(&half[2]).map(|(a, b)| -s * a + c * b).collect(),
    ];
    assert!((subspace_cosine(&rotated, v, mass) - t1).abs() < 1e-12);
    assert!((t1 - 1.0 / 2f64.sqrt()).abs() < 1e-12);
}
