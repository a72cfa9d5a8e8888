use std::path::{Path, PathBuf};

use oligoicp_core::backend::{predict, QuantileRequest, TrainingContext, DEFAULT_QUANTILES};
use oligoicp_core::config::{self, CalibrateFile, RunFile};
use oligoicp_core::evalcal::{
    coverage_from_prediction, coverage_levels, iqr_error_analysis, train_test_split, CoveragePoint, IqrBin,
    RankCorrelation,
};
use serde::Serialize;

use super::{apply_overrides, load};
use crate::error::CliError;
use crate::output::{ensure_dir, num, write_json, write_text, Table};
use crate::GlobalArgs;

#[derive(Serialize)]
struct CalibrationReport {
    seed: u64,
    n_train: usize,
    n_test: usize,
    max_abs_error: f64,
    /// Some prediction band has numerically zero width.
    degenerate: bool,
    points: Vec<CoveragePoint>,
    iqr_bins: Vec<IqrBin>,
    iqr_error_spearman: Option<RankCorrelation>,
}

pub fn run(g: &GlobalArgs, config_path: &Path, output_dir: Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg: CalibrateFile = config::load(config_path)?;
    apply_overrides(g, &mut cfg.data, &mut cfg.backend, &mut cfg.run, output_dir)?;
    if let Some(seed) = g.seed {
        cfg.calibration.seed = seed;
    }
    let cal = &cfg.calibration;

    let ds = load(&cfg.data, &cfg.data.dataset)?;
    let tables = cfg.data.thermo_tables();
    let x = ds.feature_matrix(&tables);
    let y = ds.labels();
    let (train, test) = train_test_split(y.len(), cal.train_fraction, cal.seed)?;
    let ctx = TrainingContext::new(x.select_rows(&train), train.iter().map(|&i| y[i]).collect())?;
    let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();

    let mut levels = coverage_levels(&cal.grid)?;
    levels.extend(DEFAULT_QUANTILES);
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let req = QuantileRequest::new(x.select_rows(&test), levels)?;
    let backend = cfg.backend.build()?;
    let pred = predict(&backend, &ctx, &req, cal.seed)?;

    let curve = coverage_from_prediction(&pred, &truth, &cal.grid)?;
    let iqr = iqr_error_analysis(&pred, &truth, cal.iqr_bins)?;
    let report = CalibrationReport {
        seed: cal.seed,
        n_train: train.len(),
        n_test: test.len(),
        max_abs_error: curve.max_abs_error(),
        degenerate: curve.points.iter().any(|p| p.degenerate_bands > 0),
        points: curve.points.clone(),
        iqr_bins: iqr.bins.clone(),
        iqr_error_spearman: iqr.spearman,
    };

    let out = &cfg.run.output_dir;
    ensure_dir(out)?;
    let mut t = Table::new(["expected", "lower", "upper", "empirical", "abs_error", "n", "degenerate_bands"]);
    for p in &curve.points {
        t.push(vec![
            num(p.expected),
            num(p.lower),
            num(p.upper),
            num(p.empirical),
            num((p.empirical - p.expected).abs()),
            p.n.to_string(),
            p.degenerate_bands.to_string(),
        ]);
    }
    t.write(&out.join("coverage.csv"))?;
    let mut b = Table::new(["bin", "iqr_min", "iqr_max", "count", "mae", "error_q1", "error_median", "error_q3"]);
    for (i, bin) in iqr.bins.iter().enumerate() {
        b.push(vec![
            i.to_string(),
            num(bin.iqr_min),
            num(bin.iqr_max),
            bin.count.to_string(),
            num(bin.mae),
            num(bin.error_q1),
            num(bin.error_median),
            num(bin.error_q3),
        ]);
    }
    b.write(&out.join("iqr_bins.csv"))?;
    write_json(&out.join("coverage.json"), &report)?;
    write_text(&out.join("config.echo.toml"), &cfg.to_toml()?)?;

    println!("{:>9} {:>10} {:>10}", "expected", "empirical", "|error|");
    for p in &curve.points {
        println!("{:>9.2} {:>10.4} {:>10.4}", p.expected, p.empirical, (p.empirical - p.expected).abs());
    }
    println!("max |error| = {:.4}", report.max_abs_error);
    if report.degenerate {
        println!("warning: some prediction bands have zero width");
    }
    if let Some(s) = report.iqr_error_spearman {
        println!("IQR vs |error|: Spearman rho = {:.3} (p = {:.2e}, n = {})", s.rho, s.p_value, s.n);
    }
    Ok(())
}
