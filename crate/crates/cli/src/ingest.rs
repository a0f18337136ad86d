//! Reading task directories and preparing standardized splits.

use std::path::Path;

use mtlrrc::{split, MultiTaskData, SplitSpec, Standardizer};

use crate::error::{CliError, CliResult};

/// Parses and validates a task directory. Source files are only read.
pub fn ingest(dir: &Path) -> CliResult<(MultiTaskData<f64>, Vec<String>)> {
    Ok(mtlrrc::io::read_tasks(dir)?)
}

/// Raw split parts with their standardized copies. Statistics come from
/// the training part alone.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub standardizer: Standardizer,
    pub train: MultiTaskData<f64>,
    pub validation: MultiTaskData<f64>,
    pub test: Option<MultiTaskData<f64>>,
    pub raw_test: Option<MultiTaskData<f64>>,
    pub indices: Vec<[Vec<usize>; 3]>,
}

pub fn prepare(data: &MultiTaskData<f64>, spec: &SplitSpec, seed: u64) -> CliResult<Prepared> {
    let parts = split(data, spec, seed)?;
    let raw_val = parts
        .validation
        .ok_or_else(|| CliError::config("the split leaves no validation samples"))?;
    let standardizer = Standardizer::fit(&parts.train);
    let train = standardizer.apply(&parts.train)?;
    let validation = standardizer.apply(&raw_val)?;
    let test = parts.test.as_ref().map(|t| standardizer.apply(t)).transpose()?;
    Ok(Prepared {
        standardizer,
        train,
        validation,
        test,
        raw_test: parts.test,
        indices: parts.indices,
    })
}
