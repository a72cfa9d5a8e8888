use std::path::Path;

use oligoicp_core::dataio::{load_dataset, DatasetFormat};
use oligoicp_core::features::{feature_names, featurize_with, ThermoTables};

use crate::error::CliError;
use crate::output::{num, Table};
use crate::GlobalArgs;

/// One row per record: 574 feature columns, then label and ids.
pub fn run(g: &GlobalArgs, input: &Path, output: &Path, format: DatasetFormat, rounded: bool) -> Result<(), CliError> {
    let ds = load_dataset(input, format, g.strictness().unwrap_or_default())?;
    for s in &ds.skipped {
        eprintln!("skipped line {} ({}): {}", s.line, s.column, s.reason);
    }
    let tables = if rounded {
        ThermoTables::with_rounded_gc_enthalpy()
    } else {
        ThermoTables::default()
    };
    let mut header = feature_names();
    header.extend(["efficacy", "target_id", "source_id"].map(String::from));
    let mut table = Table::new(header);
    for r in &ds.records {
        let mut row: Vec<String> = featurize_with(r, &tables).as_slice().iter().map(|&v| num(v)).collect();
        row.extend([num(r.efficacy), r.target_id.clone(), r.source_id.clone()]);
        table.push(row);
    }
    table.write(output)?;
    log::info!("featurized {} records", ds.records.len());
    Ok(())
}
