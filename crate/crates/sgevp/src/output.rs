//! Artifact directories: CSV tables and a TOML manifest.
//!
//! Every CSV row starts with the config hash and the crate version.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{io_err, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct ArtifactWriter {
    dir: PathBuf,
    hash: String,
    files: Vec<String>,
}

/// Column names of a row type, read back from a one-row CSV.
fn header_of<T: Serialize>(row: &T) -> Result<Vec<String>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row)?;
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    Ok(r.headers()?.iter().map(String::from).collect())
}

impl ArtifactWriter {
    pub fn new(dir: &Path, hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.to_string(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let file = std::fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if let Some(first) = rows.first() {
            let mut header = vec!["config_hash".to_string(), "version".to_string()];
            header.extend(header_of(first)?);
            w.write_record(&header)?;
        }
        for row in rows {
            w.serialize((&self.hash, VERSION, row))?;
        }
        w.flush().map_err(io_err(&path))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    /// `manifest.toml`: run metadata, the summary table and the full config.
    pub fn write_manifest<S: Serialize>(&self, config: &ExperimentConfig, summary: &S) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Run<'a> {
            experiment: String,
            config_hash: &'a str,
            version: &'a str,
            files: &'a [String],
        }
        #[derive(Serialize)]
        struct Manifest<'a, S> {
            run: Run<'a>,
            summary: &'a S,
            config: &'a ExperimentConfig,
        }
        let m = Manifest {
            run: Run {
                experiment: format!("{:?}", config.experiment).to_lowercase(),
                config_hash: &self.hash,
                version: VERSION,
                files: &self.files,
            },
            summary,
            config,
        };
        let path = self.dir.join("manifest.toml");
        std::fs::write(&path, toml::to_string(&m)?).map_err(io_err(&path))?;
        Ok(path)
    }
}
