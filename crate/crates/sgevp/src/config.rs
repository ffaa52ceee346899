//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sgevp_core::galerkin::NewtonOptions;
use sgevp_core::inverse::IterationConfig;
use sgevp_core::multiindex::{MultiIndexSet, WeightSequence};
use sgevp_core::subspace::SubspaceConfig;

use crate::error::{config_err, io_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    /// Error against a finer mesh for a list of meshes.
    Spatial,
    /// Error against a larger index set along nested index sets.
    Stochastic,
    /// Per-step increments and errors of a single run.
    Iteration,
    /// Coefficient norms of one converged solution.
    Decay,
    /// Subspace iteration with angle statistics.
    Subspace,
    /// Chaos moments against Monte Carlo over pointwise solves.
    Statistics,
    /// Pointwise residuals and normalization at random parameters.
    Residual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub cells: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_varsigma")]
    pub varsigma: f64,
    /// Gauss points per direction; `order + 2` when absent.
    #[serde(default)]
    pub quadrature: Option<usize>,
}

/// Exactly one of `target` (cardinality) and `eps` (threshold).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    #[serde(default)]
    pub target: Option<usize>,
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_cg_factor")]
    pub cg_tol_factor: f64,
    #[serde(default = "default_cg_min")]
    pub cg_tol_min: f64,
    /// Fixed relative CG tolerance of the subspace iteration.
    #[serde(default = "default_subspace_cg_tol")]
    pub subspace_cg_tol: f64,
    #[serde(default = "default_cg_max")]
    pub cg_max_iterations: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default)]
    pub shift: Option<f64>,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub sum_trick: bool,
}

impl Default for IterationSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_steps: default_max_steps(),
            cg_tol_factor: default_cg_factor(),
            cg_tol_min: default_cg_min(),
            subspace_cg_tol: default_subspace_cg_tol(),
            cg_max_iterations: default_cg_max(),
            newton_tol: default_newton_tol(),
            shift: None,
            q: default_q(),
            sum_trick: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_angle_samples")]
    pub angle_samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// 1-based position from which coefficient tails are fitted.
    #[serde(default = "default_tail_from")]
    pub tail_from: usize,
    /// Leading iteration steps left out of the rate fits.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            angle_samples: default_angle_samples(),
            seed: default_seed(),
            tail_from: default_tail_from(),
            burn_in: default_burn_in(),
        }
    }
}

/// Mesh sweep for the spatial study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialSection {
    pub cells: Vec<usize>,
    pub reference_cells: usize,
}

/// Nested index sets for the stochastic study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub targets: Vec<usize>,
    pub reference_target: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Stored reference solution to reuse instead of recomputing.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    pub problem: ProblemSection,
    pub stochastic: StochasticSection,
    #[serde(default)]
    pub iteration: IterationSection,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub spatial: Option<SpatialSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

fn default_order() -> usize {
    2
}
fn default_varsigma() -> f64 {
    3.2
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_steps() -> usize {
    100
}
fn default_cg_factor() -> f64 {
    1e-2
}
fn default_cg_min() -> f64 {
    1e-12
}
fn default_burn_in() -> usize {
    3
}
fn default_subspace_cg_tol() -> f64 {
    1e-10
}
fn default_cg_max() -> usize {
    2000
}
fn default_newton_tol() -> f64 {
    1e-12
}
fn default_q() -> usize {
    1
}
fn default_samples() -> usize {
    1000
}
fn default_angle_samples() -> usize {
    256
}
fn default_seed() -> u64 {
    20130
}
fn default_tail_from() -> usize {
    2
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical TOML serialization, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex_digest(self.to_toml()?.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.cells < 2 {
            return Err(config_err("problem.cells", "need at least 2 cells per side"));
        }
        if !matches!(p.order, 1 | 2) {
            return Err(config_err("problem.order", "element order must be 1 or 2"));
        }
        if !(p.varsigma > 1.0) {
            return Err(config_err("problem.varsigma", "decay exponent must exceed 1"));
        }
        if let Some(q) = p.quadrature {
            if q < p.order + 1 {
                return Err(config_err("problem.quadrature", "too few Gauss points for the element"));
            }
        }
        match (self.stochastic.target, self.stochastic.eps) {
            (Some(0), _) => return Err(config_err("stochastic.target", "must be at least 1")),
            (Some(_), None) => {}
            (None, Some(e)) if e > 0.0 && e < 1.0 => {}
            (None, Some(_)) => return Err(config_err("stochastic.eps", "must lie in (0, 1)")),
            _ => {
                return Err(config_err("stochastic", "set exactly one of `target` and `eps`"));
            }
        }
        let it = &self.iteration;
        if !(it.tol > 0.0) {
            return Err(config_err("iteration.tol", "must be positive"));
        }
        if it.max_steps == 0 {
            return Err(config_err("iteration.max_steps", "must be at least 1"));
        }
        if !(it.cg_tol_factor > 0.0) || !(it.cg_tol_min > 0.0) || !(it.subspace_cg_tol > 0.0) {
            return Err(config_err("iteration.cg_tol_factor", "cg tolerances must be positive"));
        }
        if it.q == 0 {
            return Err(config_err("iteration.q", "must be at least 1"));
        }
        if self.validation.samples < 2 {
            return Err(config_err("validation.samples", "need at least 2 samples"));
        }
        match self.experiment {
            ExperimentKind::Spatial => {
                let s = self
                    .spatial
                    .as_ref()
                    .ok_or_else(|| config_err("spatial", "required for a spatial study"))?;
                if s.cells.len() < 2 {
                    return Err(config_err("spatial.cells", "need at least two meshes to fit a rate"));
                }
                if s.cells.iter().any(|&c| c < 2 || s.reference_cells % c != 0) {
                    return Err(config_err(
                        "spatial.cells",
                        "every mesh must divide spatial.reference_cells",
                    ));
                }
            }
            ExperimentKind::Stochastic => {
                let s = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| config_err("sweep", "required for a stochastic study"))?;
                if s.targets.len() < 2 {
                    return Err(config_err("sweep.targets", "need at least two index sets"));
                }
                if s.targets.iter().any(|&t| t == 0 || t >= s.reference_target) {
                    return Err(config_err(
                        "sweep.targets",
                        "targets must be positive and below sweep.reference_target",
                    ));
                }
            }
            ExperimentKind::Iteration => {
                let s = self
                    .sweep
                    .as_ref()
                    .ok_or_else(|| config_err("sweep", "sweep.reference_target names the overkill set"))?;
                let own = self.index_set()?.len();
                if s.reference_target <= own {
                    return Err(config_err(
                        "sweep.reference_target",
                        "the overkill set must be larger than the iterated one",
                    ));
                }
            }
            ExperimentKind::Subspace if it.q < 2 => {
                return Err(config_err("iteration.q", "a subspace study needs q >= 2"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn index_set(&self) -> Result<MultiIndexSet> {
        index_set(self.problem.varsigma, &self.stochastic)
    }

    pub fn iteration_config(&self) -> IterationConfig {
        let it = &self.iteration;
        IterationConfig {
            tol: it.tol,
            max_steps: it.max_steps,
            cg_tol_factor: it.cg_tol_factor,
            cg_tol_min: it.cg_tol_min,
            cg_max_iterations: it.cg_max_iterations,
            newton: NewtonOptions { tol: it.newton_tol, ..NewtonOptions::default() },
            shift: it.shift,
        }
    }

    pub fn subspace_config(&self) -> SubspaceConfig {
        let it = &self.iteration;
        SubspaceConfig {
            q: it.q,
            tol: it.tol,
            max_steps: it.max_steps,
            sum_trick: it.sum_trick,
            cg_tol: it.subspace_cg_tol,
            cg_max_iterations: it.cg_max_iterations,
            newton: NewtonOptions { tol: it.newton_tol, ..NewtonOptions::default() },
            ..SubspaceConfig::default()
        }
    }
}

pub fn index_set(varsigma: f64, s: &StochasticSection) -> Result<MultiIndexSet> {
    let weights = WeightSequence::Decay { varsigma };
    Ok(match (s.target, s.eps) {
        (Some(t), _) => MultiIndexSet::with_cardinality(weights, t)?,
        (None, Some(e)) => MultiIndexSet::generate(weights, e)?,
        (None, None) => return Err(config_err("stochastic", "set `target` or `eps`")),
    })
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
