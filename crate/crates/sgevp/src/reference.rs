//! Stored reference solutions (JSON) with a content hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sgevp_core::galerkin::SpectralVector;
use sgevp_core::inverse::EigenpairResult;
use sgevp_core::multiindex::MultiIndexSet;

use crate::config::{index_set, ExperimentConfig, ExperimentKind, StochasticSection};
use crate::error::{io_err, Error, Result};
use crate::experiments::Problem;

/// Discretization a config wants as its reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceKey {
    pub cells: usize,
    pub order: usize,
    pub quadrature: Option<usize>,
    pub varsigma: f64,
    pub target: Option<usize>,
    pub eps: Option<f64>,
}

impl ReferenceKey {
    /// Spatial sweeps refine the mesh, the stochastic and iteration studies
    /// enlarge the index set; every other experiment is its own reference.
    pub fn of(config: &ExperimentConfig) -> Self {
        let p = &config.problem;
        let mut key = Self {
            cells: p.cells,
            order: p.order,
            quadrature: p.quadrature,
            varsigma: p.varsigma,
            target: config.stochastic.target,
            eps: config.stochastic.eps,
        };
        match config.experiment {
            ExperimentKind::Spatial => {
                if let Some(s) = &config.spatial {
                    key.cells = s.reference_cells;
                }
            }
            ExperimentKind::Stochastic | ExperimentKind::Iteration => {
                if let Some(s) = &config.sweep {
                    key.target = Some(s.reference_target);
                    key.eps = None;
                }
            }
            _ => {}
        }
        key
    }

    pub fn index_set(&self) -> Result<MultiIndexSet> {
        index_set(self.varsigma, &StochasticSection { target: self.target, eps: self.eps })
    }

    pub fn problem(&self) -> Result<Problem> {
        Problem::new(self.cells, self.order, self.quadrature, self.varsigma, self.index_set()?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredReference {
    pub cells: usize,
    pub order: usize,
    pub quadrature: Option<usize>,
    pub varsigma: f64,
    /// Index set in its text form.
    pub index_set: String,
    pub config_hash: String,
    pub steps: usize,
    pub converged: bool,
    pub spatial_dim: usize,
    pub mu: Vec<f64>,
    pub mu_rayleigh: Vec<f64>,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub payload_hash: String,
}

fn payload_hash(r: &StoredReference) -> String {
    let mut h = Sha256::new();
    h.update(r.index_set.as_bytes());
    for part in [&r.mu, &r.mu_rayleigh, &r.s, &r.u] {
        h.update((part.len() as u64).to_le_bytes());
        for x in part.iter() {
            h.update(x.to_le_bytes());
        }
    }
    crate::config::hex_digest(&h.finalize())
}

impl StoredReference {
    pub fn new(key: &ReferenceKey, set: &MultiIndexSet, sol: &EigenpairResult, config_hash: &str) -> Self {
        let mut r = Self {
            cells: key.cells,
            order: key.order,
            quadrature: key.quadrature,
            varsigma: key.varsigma,
            index_set: set.to_text(),
            config_hash: config_hash.to_string(),
            steps: sol.steps,
            converged: sol.converged,
            spatial_dim: sol.u.spatial_dim(),
            mu: sol.mu.clone(),
            mu_rayleigh: sol.mu_rayleigh.clone(),
            s: sol.s.clone(),
            u: sol.u.data().to_vec(),
            payload_hash: String::new(),
        };
        r.payload_hash = payload_hash(&r);
        r
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    /// Reads and re-hashes; a mismatch means the file was altered.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let r: Self = serde_json::from_str(&text)?;
        let h = payload_hash(&r);
        if h != r.payload_hash {
            return Err(Error::Reference {
                path: path.into(),
                message: format!("payload hash {h} differs from stored {}", r.payload_hash),
            });
        }
        Ok(r)
    }

    /// Checks the stored discretization against `key`.
    pub fn check(&self, key: &ReferenceKey, path: &Path) -> Result<()> {
        let set = key.index_set()?;
        let mismatch = |message: String| Error::Reference { path: path.into(), message };
        if self.cells != key.cells || self.order != key.order || self.quadrature != key.quadrature {
            return Err(mismatch(format!(
                "mesh ({}, order {}) differs from requested ({}, order {})",
                self.cells, self.order, key.cells, key.order
            )));
        }
        if self.varsigma != key.varsigma {
            return Err(mismatch(format!("varsigma {} differs from {}", self.varsigma, key.varsigma)));
        }
        if self.index_set != set.to_text() {
            return Err(mismatch("index set differs from the requested one".into()));
        }
        Ok(())
    }

    pub fn solution(&self) -> Result<EigenpairResult> {
        let p = self.mu.len();
        let u = SpectralVector::from_data(p, self.spatial_dim, self.u.clone())?;
        Ok(EigenpairResult {
            u,
            mu: self.mu.clone(),
            mu_rayleigh: self.mu_rayleigh.clone(),
            s: self.s.clone(),
            converged: self.converged,
            steps: self.steps,
            history: Vec::new(),
        })
    }
}

/// Solves the reference discretization of `config`.
pub fn make_reference(config: &ExperimentConfig) -> Result<(Problem, EigenpairResult, StoredReference)> {
    let key = ReferenceKey::of(config);
    let problem = key.problem()?;
    let sol = problem.solve(config.iteration_config())?;
    let stored = StoredReference::new(&key, problem.space.set(), &sol, &config.hash()?);
    Ok((problem, sol, stored))
}

/// The stored reference named by the config when there is one and it
/// matches, otherwise a fresh solve.
pub fn obtain_reference(config: &ExperimentConfig) -> Result<(Problem, EigenpairResult)> {
    let key = ReferenceKey::of(config);
    match &config.reference {
        Some(path) => {
            let stored = StoredReference::load(path)?;
            stored.check(&key, path)?;
            Ok((key.problem()?, stored.solution()?))
        }
        None => {
            let (problem, sol, _) = make_reference(config)?;
            Ok((problem, sol))
        }
    }
}
