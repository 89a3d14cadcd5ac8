//! Experiment orchestration for Cox subgroup discovery: data ingestion,
//! seeded train/test splits, hyperparameter sweeps, subgroup selection and
//! report emission.
//!
//! A sweep is fully determined by its [`config::ExperimentConfig`] and master
//! seed; output files are byte-identical across reruns and worker counts.

use std::path::PathBuf;

use cox_subgroup::synth::SynthError;
use cox_subgroup::{Region, SurvivalDataset};
use thiserror::Error;

pub mod config;
pub mod ingest;
pub mod report;
pub mod select;
pub mod sweep;

use config::{DatasetSource, ExperimentConfig};
use ingest::IngestError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Loads or generates the dataset and resolves the truth region: an explicit
/// `truth_region` wins over the generator's own.
pub fn load_dataset(
    config: &ExperimentConfig,
) -> Result<(SurvivalDataset, Option<Region>), HarnessError> {
    let (data, generated) = match &config.dataset {
        DatasetSource::Csv(path) => (ingest::load_csv(path, &config.columns)?.data, None),
        DatasetSource::Synthetic(spec) => spec.generate()?,
    };
    let truth = config.truth_region.clone().or(generated);
    if let Some(t) = &truth {
        if t.dim() != data.d_subgp() {
            return Err(HarnessError::Config(format!(
                "truth region has {} dimensions, data has {} subgroup features",
                t.dim(),
                data.d_subgp()
            )));
        }
    }
    Ok((data, truth))
}
