//! Batch commands behind the CLI.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use diva_core::casebase::{read_movies_csv, read_ratings_csv, CaseBaseError};
use diva_core::evaluation::{
    run_baseline, run_grid, synth_casebase, EvalContext, EvalError, ExperimentGrid, GridResult,
    SynthConfig,
};
use diva_core::ItemId;
use thiserror::Error;

use crate::store::{load_ground_truth, save_ground_truth, Store, StoreError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        source: CaseBaseError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("writing results: {0}")]
    Output(String),
    #[error("the data directory has no case base; run `ingest` or `synth` first")]
    NoCaseBase,
}

fn open(path: &Path) -> Result<BufReader<File>, CommandError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CommandError::Open {
            path: path.to_path_buf(),
            source,
        })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub movies: usize,
    pub users: usize,
    pub rejected: Vec<(usize, String)>,
    pub dropped_users: usize,
}

/// Reads a movies CSV and a ratings CSV into `data_dir`, keeping ratings of
/// catalog movies only. Existing accounts are kept.
pub fn ingest(
    ratings: &Path,
    movies: &Path,
    min_ratings: usize,
    data_dir: &Path,
) -> Result<IngestReport, CommandError> {
    let catalog = read_movies_csv(open(movies)?).map_err(|source| CommandError::Input {
        path: movies.into(),
        source,
    })?;
    let ingested = read_ratings_csv(open(ratings)?, min_ratings, |i: &ItemId| {
        catalog.contains(i)
    })
    .map_err(|source| CommandError::Input {
        path: ratings.into(),
        source,
    })?;
    let mut store = Store::load(data_dir)?;
    let report = IngestReport {
        movies: catalog.len(),
        users: ingested.casebase.len(),
        rejected: ingested
            .rejected
            .iter()
            .map(|r| (r.line, r.reason.clone()))
            .collect(),
        dropped_users: ingested.dropped_users.len(),
    };
    store.catalog = catalog.into();
    store.casebase = ingested.casebase.into();
    store.save_catalog(data_dir)?;
    store.save_casebase(data_dir)?;
    Ok(report)
}

/// Writes a synthetic catalog, case base and ground truth into `data_dir`.
pub fn synth(cfg: &SynthConfig, data_dir: &Path) -> Result<(), CommandError> {
    let s = synth_casebase(cfg);
    let mut store = Store::load(data_dir)?;
    store.catalog = s.catalog.into();
    store.casebase = s.casebase.into();
    store.save_catalog(data_dir)?;
    store.save_casebase(data_dir)?;
    save_ground_truth(data_dir, &s.ground_truth)?;
    Ok(())
}

fn eval_inputs(
    data_dir: &Path,
) -> Result<(Store, Option<crate::store::GroundTruth>), CommandError> {
    let store = Store::load(data_dir)?;
    if store.casebase.is_empty() {
        return Err(CommandError::NoCaseBase);
    }
    Ok((store, load_ground_truth(data_dir)?))
}

fn write_table(result: &GridResult, out: Option<&Path>) -> Result<(), CommandError> {
    if let Some(path) = out {
        let file = File::create(path)
            .map_err(|e| CommandError::Output(format!("{}: {e}", path.display())))?;
        result
            .write_csv(file)
            .map_err(|e| CommandError::Output(e.to_string()))?;
    }
    Ok(())
}

/// Runs the experiment grid; writes the per-row CSV to `out` when given.
pub fn eval(
    data_dir: &Path,
    grid: &ExperimentGrid,
    out: Option<&Path>,
) -> Result<GridResult, CommandError> {
    let (store, truth) = eval_inputs(data_dir)?;
    let ctx = EvalContext {
        catalog: store.catalog.ids().cloned().collect::<BTreeSet<_>>(),
        ground_truth: truth.as_ref(),
        ..Default::default()
    };
    let result = run_grid(&store.casebase, grid, &ctx)?;
    write_table(&result, out)?;
    Ok(result)
}

/// GroupLens and random lists only.
pub fn baseline_eval(
    data_dir: &Path,
    runs: usize,
    test_users: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<GridResult, CommandError> {
    let (store, truth) = eval_inputs(data_dir)?;
    let ctx = EvalContext {
        catalog: store.catalog.ids().cloned().collect::<BTreeSet<_>>(),
        ground_truth: truth.as_ref(),
        ..Default::default()
    };
    let result = run_baseline(&store.casebase, runs, test_users, seed, &ctx)?;
    write_table(&result, out)?;
    Ok(result)
}
