pub mod calibrate;
pub mod crossval;
pub mod ensemble;
pub mod evaluate;
pub mod featurize;
pub mod serve;
pub mod synth;

use std::path::PathBuf;

use oligoicp_core::config::{BackendSection, DataSection, RunSection};
use oligoicp_core::dataio::{load_dataset, Dataset};

use crate::error::CliError;
use crate::GlobalArgs;

/// Apply command-line flags over the shared config sections.
fn apply_overrides(
    g: &GlobalArgs,
    data: &mut DataSection,
    backend: &mut BackendSection,
    run: &mut RunSection,
    output_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some(b) = &g.backend {
        backend.spec = b.clone();
    }
    if let Some(s) = g.strictness() {
        data.strictness = s;
    }
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(CliError::Validation("--workers must be at least 1".into()));
        }
        run.workers = w;
    }
    if let Some(dir) = output_dir {
        run.output_dir = std::path::absolute(&dir).map_err(|e| CliError::io("cannot resolve output dir", e))?;
    }
    Ok(())
}

fn load(data: &DataSection, path: &std::path::Path) -> Result<Dataset, CliError> {
    let ds = load_dataset(path, data.format, data.strictness)?;
    for s in &ds.skipped {
        eprintln!("skipped {}: line {} ({}): {}", path.display(), s.line, s.column, s.reason);
    }
    Ok(ds)
}
