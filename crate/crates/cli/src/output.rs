//! File layout `out/<experiment>/<cell>/<trial>/*.csv` and the thread pool.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn trial_dir(root: &Path, experiment: &str, cell: &str, trial: usize) -> PathBuf {
    root.join(experiment).join(cell).join(format!("trial-{trial:03}"))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

/// Creates `path` and hands the writer to `fill`, flushing afterwards.
pub fn write_with<F>(path: &Path, fill: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> CliResult<()>,
{
    let mut w = create(path)?;
    fill(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))
    })
}

/// Runs `f(0..n)` on a pool of `threads` workers (all cores when `None`) and
/// returns the results in index order.
pub fn run_indexed<T, F>(threads: Option<usize>, n: usize, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build()?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}
