use std::path::Path;

use oligoicp_core::dataio::{generate_synthetic, save_dataset, NoiseProfile, SynthConfig};

use crate::error::CliError;
use crate::output::{num, Table};
use crate::GlobalArgs;

pub fn run(
    g: &GlobalArgs,
    n: usize,
    targets: usize,
    noise: NoiseProfile,
    source_id: String,
    output: &Path,
    truth: Option<&Path>,
) -> Result<(), CliError> {
    let mut cfg = SynthConfig::new(n, targets, noise, g.seed.unwrap_or(0));
    cfg.source_id = source_id;
    let data = generate_synthetic(&cfg)?;
    save_dataset(output, &data.records)?;
    if let Some(path) = truth {
        let mut t = Table::new(["row", "clean", "noise_sd", "regime"]);
        for i in 0..data.records.len() {
            t.push(vec![
                i.to_string(),
                num(data.clean[i]),
                num(data.noise_sd[i]),
                data.regime[i].to_string(),
            ]);
        }
        t.write(path)?;
    }
    log::info!("wrote {} records to {}", data.records.len(), output.display());
    Ok(())
}
