//! Data ingestion, simulation, study orchestration and reporting.

pub mod data;
pub mod dgp;
pub mod manifest;
pub mod report;
pub mod study;

use std::path::{Path, PathBuf};

pub use data::{apply_transforms, load_csv, read_dataset_file, write_csv, ColumnSchema, SourceFile};
pub use dgp::{simulate_dgp, DgpConfig, DgpKind, Noise, Truth};
pub use manifest::{parse_manifest, read_manifest, DataSource, Manifest};
pub use report::{parse_report_csv, render_report, ReportFormat};
pub use study::{run_study, EstimatorSet, StudyConfig, StudyReport};

use crate::error::{Error, Result};
use crate::model::{Block, Dataset, PosteriorChain};

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Table(path) => read_dataset_file(path),
            DataSource::Sources(sources) => load_csv(sources),
        }
    }
}

impl Manifest {
    /// Loads the data and runs the study; the report is rendered separately.
    pub fn run(&self) -> Result<StudyReport> {
        let data = self.data.load()?;
        run_study(&data, &self.spec, &self.taus, &self.estimators, &self.study)
    }
}

/// File name used for a persisted chain, e.g. `bqr_tau0.250.csv`.
pub fn chain_file_name(block: Block, chain: &PosteriorChain) -> String {
    format!("{}_tau{}.csv", block.key(), chain.tau)
}

/// Writes every chain to `dir` (created if needed) and returns the paths.
pub fn write_chains(dir: &Path, chains: &[(Block, PosteriorChain)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(e).context(format!("creating {}", dir.display())))?;
    chains
        .iter()
        .map(|(block, chain)| {
            let path = dir.join(chain_file_name(*block, chain));
            let file = std::fs::File::create(&path)
                .map_err(|e| Error::Io(e).context(format!("creating {}", path.display())))?;
            chain.write_csv(std::io::BufWriter::new(file))?;
            Ok(path)
        })
        .collect()
}
