use std::path::Path;

use oligoicp_core::evalcal::Metrics;
use serde::Serialize;

use crate::error::CliError;
use crate::output::write_json;

#[derive(Serialize)]
struct Evaluation {
    n: usize,
    #[serde(flatten)]
    metrics: Metrics,
}

fn read_column(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => CliError::io(format!("cannot read {}", path.display()), std::io::Error::other(e.to_string())),
            _ => CliError::Parse(e.to_string()),
        })?;
    let idx = rdr
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::Parse(format!("{}: no column {column:?}", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = rec.get(idx).unwrap_or("");
        let v: f64 = cell.parse().map_err(|_| {
            CliError::Parse(format!("{}: line {}, column {column}: {cell:?} is not a number", path.display(), i + 2))
        })?;
        if !v.is_finite() {
            return Err(CliError::Parse(format!("{}: line {}: non-finite value", path.display(), i + 2)));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn run(predictions: &Path, truth: &Path, column: &str, truth_column: &str, output: Option<&Path>) -> Result<(), CliError> {
    let pred = read_column(predictions, column)?;
    let y = read_column(truth, truth_column)?;
    if pred.len() != y.len() {
        return Err(CliError::Validation(format!(
            "{} predictions but {} truth values",
            pred.len(),
            y.len()
        )));
    }
    let eval = Evaluation {
        n: y.len(),
        metrics: Metrics::compute(&pred, &y)?,
    };
    match output {
        Some(p) => write_json(p, &eval),
        None => {
            println!("{}", serde_json::to_string_pretty(&eval).expect("serializable"));
            Ok(())
        }
    }
}
