use std::path::{Path, PathBuf};

use oligoicp_core::backend::Matrix;
use oligoicp_core::config::{self, EnsembleFile, RunFile};
use oligoicp_core::dataio::Dataset;
use oligoicp_core::ensemble::{run_experiment, ExperimentReport, PoolData, SubsetPool};
use oligoicp_core::seqmodel::SirnaRecord;

use super::{apply_overrides, load};
use crate::error::CliError;
use crate::output::{ensure_dir, num, opt_num, write_json, write_text, Table};
use crate::GlobalArgs;

struct Prepared {
    pool: SubsetPool,
    data: PoolData,
    test_x: Matrix,
    test_records: Vec<SirnaRecord>,
}

/// Training pool and test rows, either from a separate file or by holding
/// subsets of the main dataset out.
fn prepare(cfg: &EnsembleFile) -> Result<Prepared, CliError> {
    let tables = cfg.data.thermo_tables();
    let ds = load(&cfg.data, &cfg.data.dataset)?;
    if let Some(test_path) = &cfg.data.test_dataset {
        if !cfg.data.test_subsets.is_empty() {
            return Err(CliError::Validation("set either test_dataset or test_subsets, not both".into()));
        }
        let test: Dataset = load(&cfg.data, test_path)?;
        return Ok(Prepared {
            data: ds.pool_data(&tables),
            pool: ds.pool,
            test_x: test.feature_matrix(&tables),
            test_records: test.records,
        });
    }
    if cfg.data.test_subsets.is_empty() {
        return Err(CliError::Validation(
            "no test set: set data.test_subsets or data.test_dataset".into(),
        ));
    }
    let (test_pool, train_pool) = ds.pool.partition(&cfg.data.test_subsets)?;
    let test_pool = test_pool.expect("validated ids are non-empty");
    let train_pool = train_pool
        .ok_or_else(|| CliError::Validation("every subset is held out; nothing left to train on".into()))?;
    let data = ds.pool_data(&tables);
    let test_idx = test_pool.all_indices();
    Ok(Prepared {
        test_x: data.features.select_rows(&test_idx),
        test_records: test_idx.iter().map(|&i| ds.records[i].clone()).collect(),
        pool: train_pool,
        data,
    })
}

pub fn run(g: &GlobalArgs, config_path: &Path, output_dir: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg: EnsembleFile = config::load(config_path)?;
    apply_overrides(g, &mut cfg.data, &mut cfg.backend, &mut cfg.run, output_dir)?;
    if let Some(seed) = g.seed {
        cfg.ensemble.seed = seed;
        cfg.ensemble.seeds.clear();
    }
    cfg.ensemble.resolve_seeds();

    let prep = prepare(&cfg)?;
    let backend = cfg.backend.build()?;
    let exp = cfg.ensemble.experiment(cfg.run.workers)?;
    let truth: Option<Vec<f64>> = cfg
        .data
        .test_labeled
        .then(|| prep.test_records.iter().map(|r| r.efficacy).collect());
    log::info!(
        "{} models x {} repeat(s), {} pool subsets, {} test rows",
        exp.n_models,
        exp.seeds.len(),
        prep.pool.len(),
        prep.test_x.rows()
    );
    let report = run_experiment(&prep.pool, &prep.data, &prep.test_x, truth.as_deref(), &exp, &backend)?;

    let out = &cfg.run.output_dir;
    ensure_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    strategies_table(&report).write(&out.join("strategies.csv"))?;
    models_table(&report).write(&out.join("models.csv"))?;
    selected_table(&report).write(&out.join("selected.csv"))?;
    predictions_table(&report, &prep.test_records, truth.as_deref()).write(&out.join("predictions.csv"))?;
    write_text(&out.join("config.echo.toml"), &cfg.to_toml()?)?;

    print_summary(&report);
    Ok(())
}

/// Mean and 95% half-width per strategy; the interval columns are left out
/// for a single repeat.
fn strategies_table(report: &ExperimentReport) -> Table {
    let with_ci = report.repeats.len() > 1;
    let mut header = vec!["strategy", "repeats", "mae_mean"];
    if with_ci {
        header.push("mae_ci95");
    }
    header.push("pearson_mean");
    if with_ci {
        header.push("pearson_ci95");
    }
    header.push("pearson_undefined");
    let mut t = Table::new(header);
    for s in &report.summary {
        let mut row = vec![s.strategy.to_string(), report.repeats.len().to_string(), opt_num(s.mae.map(|m| m.mean))];
        if with_ci {
            row.push(opt_num(s.mae.and_then(|m| m.ci95)));
        }
        row.push(opt_num(s.pearson.map(|m| m.mean)));
        if with_ci {
            row.push(opt_num(s.pearson.and_then(|m| m.ci95)));
        }
        row.push(s.pearson_undefined.to_string());
        t.push(row);
    }
    t
}

fn models_table(report: &ExperimentReport) -> Table {
    let mut t = Table::new(["seed", "model_index", "k", "mean_iqr", "mae", "pearson", "selected", "subsets"]);
    for r in &report.repeats {
        for m in &r.models {
            let (mae, pearson) = match &m.metrics {
                Some(x) => (num(x.mae), opt_num(x.pearson.value())),
                None => (String::new(), String::new()),
            };
            t.push(vec![
                r.seed.to_string(),
                m.model_index.to_string(),
                m.k.to_string(),
                num(m.mean_iqr),
                mae,
                pearson,
                u8::from(r.selected.binary_search(&m.model_index).is_ok()).to_string(),
                m.subsets.join(";"),
            ]);
        }
    }
    t
}

fn selected_table(report: &ExperimentReport) -> Table {
    let mut t = Table::new(["seed", "model_index", "mean_iqr"]);
    for r in &report.repeats {
        for m in r.models.iter().filter(|m| r.selected.binary_search(&m.model_index).is_ok()) {
            t.push(vec![r.seed.to_string(), m.model_index.to_string(), num(m.mean_iqr)]);
        }
    }
    t
}

fn predictions_table(report: &ExperimentReport, test: &[SirnaRecord], truth: Option<&[f64]>) -> Table {
    let names: Vec<&str> = report.summary.iter().map(|s| s.strategy.name()).collect();
    let mut header = vec!["seed", "row", "target_id", "source_id"];
    if truth.is_some() {
        header.push("efficacy");
    }
    header.extend(&names);
    let mut t = Table::new(header);
    for r in &report.repeats {
        for (row, rec) in test.iter().enumerate() {
            let mut cells = vec![r.seed.to_string(), row.to_string(), rec.target_id.clone(), rec.source_id.clone()];
            if let Some(y) = truth {
                cells.push(num(y[row]));
            }
            cells.extend(r.strategies.iter().map(|s| num(s.prediction[row])));
            t.push(cells);
        }
    }
    t
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{} models, top fraction {}, {} test rows, {} repeat(s)",
        report.n_models,
        report.fraction,
        report.n_test,
        report.repeats.len()
    );
    let fmt = |m: Option<oligoicp_core::evalcal::MeanCi>| match m {
        Some(m) => match m.ci95 {
            Some(c) => format!("{:.4} ± {:.4}", m.mean, c),
            None => format!("{:.4}", m.mean),
        },
        None => "-".into(),
    };
    println!("{:<20} {:>20} {:>20}", "strategy", "MAE", "Pearson r");
    for s in &report.summary {
        println!("{:<20} {:>20} {:>20}", s.strategy.name(), fmt(s.mae), fmt(s.pearson));
    }
}
