//! Runs one configured experiment and writes its artifact directory.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sgevp_core::validation::LinearFit;

use crate::config::{index_set, ExperimentConfig, ExperimentKind, StochasticSection};
use crate::error::{config_err, Result};
use crate::experiments::{
    crossing_sweep, decay_report, decay_rows, iteration_study, residual_study, spatial_study,
    statistics_study, stochastic_study, subspace_study, Problem,
};
use crate::output::ArtifactWriter;
use crate::reference::obtain_reference;

#[derive(Clone, Debug, Serialize)]
pub struct Fit {
    pub slope: f64,
    pub slope_error: f64,
}

impl From<LinearFit> for Fit {
    fn from(f: LinearFit) -> Self {
        Self { slope: f.slope, slope_error: f.slope_error }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Summary {
    Spatial {
        reference_cells: usize,
        eigenvector: Fit,
        eigenvalue: Fit,
    },
    Stochastic {
        reference_cardinality: usize,
        eigenvector: Fit,
        eigenvalue: Fit,
        monotone: bool,
    },
    Iteration {
        rate: f64,
        window_start: usize,
        window_end: usize,
        eigenvector: Fit,
        eigenvalue: Fit,
        stochastic_error: f64,
        newton_iterations: usize,
    },
    Decay {
        cardinality: usize,
        eigenvector_slope: f64,
        eigenvector_sorted_slope: f64,
        eigenvalue_slope: f64,
        eigenvalue_sorted_slope: f64,
    },
    Subspace {
        rate: f64,
        observed_rate: f64,
        floor_angle: f64,
        variance_reduction: f64,
        crossing: bool,
    },
    Statistics(crate::experiments::StatisticsSummary),
    Residual {
        samples: usize,
        max_relative_residual: f64,
        max_normalization_defect: f64,
    },
}

pub struct Artifact {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Summary,
}

fn problem_of(config: &ExperimentConfig) -> Result<Problem> {
    let p = &config.problem;
    Problem::new(p.cells, p.order, p.quadrature, p.varsigma, config.index_set()?)
}

/// `dir` overrides `config.output`; one of the two must be present.
pub fn run_experiment(config: &ExperimentConfig, dir: Option<&Path>) -> Result<Artifact> {
    config.validate()?;
    let dir = dir
        .map(Path::to_path_buf)
        .or_else(|| config.output.clone())
        .ok_or_else(|| config_err("output", "no output directory given"))?;
    let mut out = ArtifactWriter::new(&dir, &config.hash()?)?;
    let cfg = config.iteration_config();
    let p = &config.problem;
    let v = &config.validation;

    let summary = match config.experiment {
        ExperimentKind::Spatial => {
            let cells = &config.spatial.as_ref().expect("validated").cells;
            let (reference, ref_sol) = obtain_reference(config)?;
            let s = spatial_study(cells, &reference, &ref_sol, p.order, p.quadrature, p.varsigma, cfg)?;
            out.write_csv("spatial.csv", &s.rows)?;
            Summary::Spatial {
                reference_cells: s.reference_cells,
                eigenvector: s.eigenvector_fit.into(),
                eigenvalue: s.eigenvalue_fit.into(),
            }
        }
        ExperimentKind::Stochastic => {
            let sweep = config.sweep.as_ref().expect("validated");
            let sets = sweep
                .targets
                .iter()
                .map(|&t| index_set(p.varsigma, &StochasticSection { target: Some(t), eps: None }))
                .collect::<Result<Vec<_>>>()?;
            let (reference, ref_sol) = obtain_reference(config)?;
            let s = stochastic_study(&sets, &reference, &ref_sol, cfg)?;
            out.write_csv("stochastic.csv", &s.rows)?;
            let monotone = s.rows.windows(2).all(|w| w[1].eigenvector_error < w[0].eigenvector_error);
            Summary::Stochastic {
                reference_cardinality: s.reference_cardinality,
                eigenvector: s.eigenvector_fit.into(),
                eigenvalue: s.eigenvalue_fit.into(),
                monotone,
            }
        }
        ExperimentKind::Iteration => {
            let problem = problem_of(config)?;
            let (overkill, ok_sol) = obtain_reference(config)?;
            let s = iteration_study(&problem, (&overkill, &ok_sol), config.iteration.max_steps, cfg, v.burn_in)?;
            out.write_csv("iteration.csv", &s.rows)?;
            let newton: Vec<_> = s.newton_residuals.iter().map(|&r| NewtonRow { residual: r }).collect();
            out.write_csv("newton.csv", &newton)?;
            Summary::Iteration {
                rate: s.rate,
                window_start: s.window.start + 1,
                window_end: s.window.end,
                eigenvector: s.eigenvector_fit.into(),
                eigenvalue: s.eigenvalue_fit.into(),
                stochastic_error: s.stochastic_error,
                newton_iterations: s.newton_residuals.len().saturating_sub(1),
            }
        }
        ExperimentKind::Decay => {
            let problem = problem_of(config)?;
            let sol = problem.solve(cfg)?;
            let d = decay_report(&problem, &sol, v.tail_from);
            out.write_csv("decay.csv", &decay_rows(problem.space.set(), &d))?;
            Summary::Decay {
                cardinality: problem.space.len(),
                eigenvector_slope: d.eigenvector_slope,
                eigenvector_sorted_slope: d.eigenvector_sorted_slope,
                eigenvalue_slope: d.eigenvalue_slope,
                eigenvalue_sorted_slope: d.eigenvalue_sorted_slope,
            }
        }
        ExperimentKind::Subspace => {
            let problem = problem_of(config)?;
            let s = subspace_study(&problem, config.subspace_config(), v.angle_samples)?;
            out.write_csv("subspace.csv", &s.rows)?;
            let (crossing_rows, crossing) = crossing_sweep(&problem.op, 41)?;
            out.write_csv("crossing.csv", &crossing_rows)?;
            Summary::Subspace {
                rate: s.rate,
                observed_rate: s.observed_rate,
                floor_angle: s.floor_angle,
                variance_reduction: s.variance_reduction,
                crossing,
            }
        }
        ExperimentKind::Statistics => {
            let problem = problem_of(config)?;
            let sol = problem.solve(cfg)?;
            let s = statistics_study(&problem, &sol, v.samples, v.seed)?;
            out.write_csv("statistics.csv", std::slice::from_ref(&s))?;
            Summary::Statistics(s)
        }
        ExperimentKind::Residual => {
            let problem = problem_of(config)?;
            let sol = problem.solve(cfg)?;
            let rows = residual_study(&problem, &sol, v.samples, v.seed)?;
            out.write_csv("residual.csv", &rows)?;
            Summary::Residual {
                samples: rows.len(),
                max_relative_residual: rows.iter().map(|r| r.relative_residual).fold(0.0, f64::max),
                max_normalization_defect: rows.iter().map(|r| r.normalization_defect).fold(0.0, f64::max),
            }
        }
    };
    out.write_manifest(config, &summary)?;
    Ok(Artifact { dir, files: out.files().to_vec(), summary })
}

#[derive(Serialize)]
struct NewtonRow {
    residual: f64,
}
