use std::path::{Path, PathBuf};

use oligoicp_core::backend::{predict, QuantileRequest, TrainingContext};
use oligoicp_core::config::{self, CrossvalFile, RunFile};
use oligoicp_core::evalcal::{kfold_split, mean_ci95, MeanCi, Metrics};
use serde::Serialize;

use super::{apply_overrides, load};
use crate::error::CliError;
use crate::output::{ensure_dir, num, opt_num, write_json, write_text, Table};
use crate::GlobalArgs;

#[derive(Serialize)]
struct Fold {
    fold: usize,
    n_train: usize,
    n_test: usize,
    metrics: Metrics,
}

#[derive(Serialize)]
struct CrossvalReport {
    folds: Vec<Fold>,
    mae: Option<MeanCi>,
    pearson: Option<MeanCi>,
    pearson_undefined: usize,
}

pub fn run(g: &GlobalArgs, config_path: &Path, output_dir: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg: CrossvalFile = config::load(config_path)?;
    apply_overrides(g, &mut cfg.data, &mut cfg.backend, &mut cfg.run, output_dir)?;
    if let Some(seed) = g.seed {
        cfg.crossval.seed = seed;
    }
    let ds = load(&cfg.data, &cfg.data.dataset)?;
    let x = ds.feature_matrix(&cfg.data.thermo_tables());
    let y = ds.labels();
    let backend = cfg.backend.build()?;

    let mut folds = Vec::new();
    for (fold, (train, test)) in kfold_split(y.len(), cfg.crossval.folds, cfg.crossval.seed)?.into_iter().enumerate() {
        let ctx = TrainingContext::new(x.select_rows(&train), train.iter().map(|&i| y[i]).collect())?;
        let req = QuantileRequest::with_default_levels(x.select_rows(&test))?;
        let pred = predict(&backend, &ctx, &req, cfg.crossval.seed.wrapping_add(fold as u64))?;
        let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        folds.push(Fold {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            metrics: Metrics::compute(&pred.mean, &truth)?,
        });
    }
    let maes: Vec<f64> = folds.iter().map(|f| f.metrics.mae).collect();
    let rs: Vec<f64> = folds.iter().filter_map(|f| f.metrics.pearson.value()).collect();
    let report = CrossvalReport {
        mae: mean_ci95(&maes),
        pearson: mean_ci95(&rs),
        pearson_undefined: folds.len() - rs.len(),
        folds,
    };

    let out = &cfg.run.output_dir;
    ensure_dir(out)?;
    let mut t = Table::new(["fold", "n_train", "n_test", "mae", "pearson"]);
    for f in &report.folds {
        t.push(vec![
            f.fold.to_string(),
            f.n_train.to_string(),
            f.n_test.to_string(),
            num(f.metrics.mae),
            opt_num(f.metrics.pearson.value()),
        ]);
    }
    t.write(&out.join("folds.csv"))?;
    write_json(&out.join("crossval.json"), &report)?;
    write_text(&out.join("config.echo.toml"), &cfg.to_toml()?)?;

    let show = |m: Option<MeanCi>| m.map_or("-".into(), |m| format!("{:.4} ± {:.4}", m.mean, m.ci95.unwrap_or(0.0)));
    println!("{}-fold MAE {}  Pearson r {}", report.folds.len(), show(report.mae), show(report.pearson));
    Ok(())
}
