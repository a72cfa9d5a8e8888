//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p oligoicp-cli --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use common::naive_features::{naive, random_pair, record};
use common::{malformed_replies, CORPUS_ID, CORPUS_LEVELS, CORPUS_ROWS};
use oligoicp_core::backend::protocol::decode_response;
use oligoicp_core::backend::{predict, BackendError, KnnQuantile, Matrix, QuantilePrediction, QuantileRequest, TrainingContext};
use oligoicp_core::dataio::{feature_matrix, generate_synthetic, Dataset, NoiseProfile, SynthConfig};
use oligoicp_core::ensemble::{
    run_experiment, sample_model_specs, select_top_fraction, top_count, ExperimentConfig, ModelResult, ModelSpec, RunOptions,
};
use oligoicp_core::evalcal::{coverage_from_prediction, coverage_levels, default_coverage_grid, spearman};
use oligoicp_core::features::{featurize, thermo_breakdown, ThermoTables, FEATURE_LEN};
use oligoicp_core::seqmodel::{is_self_complementary, SirnaSeq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn feature_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240917);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (s, m) = random_pair(&mut rng);
        let (want, _) = naive(&s, &m);
        let fv = featurize(&record(&s, &m));
        check(fv.as_slice().len() == 574, || format!("length {}", fv.as_slice().len()))?;
        check(
            (fv.one_hot().len(), fv.trimers().len(), fv.thermo().len()) == (361, 189, 24),
            || "block lengths differ from 361/189/24".into(),
        )?;
        for (i, (a, b)) in fv.as_slice().iter().zip(&want).enumerate() {
            let d = (a - b).abs();
            check(d <= 1e-12, || format!("{s}/{m}: feature {i} is {a}, oracle {b}"))?;
            worst = worst.max(d);
        }
    }
    check(FEATURE_LEN == 574, || format!("FEATURE_LEN = {FEATURE_LEN}"))?;
    Ok(format!("1000 records, max deviation {worst:.1e}"))
}

fn thermo_golden_values() -> Outcome {
    let t = ThermoTables::default();
    let close = |got: f64, want: f64, what: &str| check((got - want).abs() <= 1e-9, || format!("{what}: {got} vs {want}"));

    let all_a = SirnaSeq::new(&"A".repeat(19)).unwrap();
    let b = thermo_breakdown(&all_a, &t);
    close(b.delta_h_all, 3.61 + 3.72 * 2.0 + 18.0 * -6.82, "all-A dH_all")?;
    close(b.delta_h_all, -111.71, "all-A dH_all")?;
    close(b.delta_delta_g_all, 0.90, "all-A ddG_all")?;
    close(b.delta_g_all, -11.75, "all-A dG_all")?;
    let fv = featurize(&record(&"A".repeat(19), &"X".repeat(57)));
    close(fv.thermo()[0], 0.90, "all-A thermo feature 0")?;
    close(fv.thermo()[5], -111.71, "all-A thermo feature 5")?;

    let gc = SirnaSeq::new("GCGCGCGCGCGCGCGCGCG").unwrap();
    close(thermo_breakdown(&gc, &t).delta_delta_g_all, -3.42 - -2.36, "GC ddG_all")?;
    close(thermo_breakdown(&gc, &t).delta_delta_g_all, -1.06, "GC ddG_all")?;
    Ok("dH_all -111.71, ddG_all 0.90 and -1.06".into())
}

fn self_complement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let t = ThermoTables::default();
    for _ in 0..10_000 {
        let s: String = (0..19).map(|_| ['A', 'U', 'C', 'G'][rng.random_range(0..4)]).collect();
        let seq = SirnaSeq::new(&s).unwrap();
        check(!is_self_complementary(seq.as_bytes()), || format!("{s} reported self-complementary"))?;
        check(!thermo_breakdown(&seq, &t).self_complementary, || format!("{s} got the symmetry term"))?;
    }
    for p in ["AU", "UA", "GC", "CG"] {
        check(is_self_complementary(p.as_bytes()), || format!("{p} not detected"))?;
    }
    for p in ["AA", "AC", "GU", "UG"] {
        check(!is_self_complementary(p.as_bytes()), || format!("{p} falsely detected"))?;
    }
    Ok("10000 random 19-mers never fire; AU/UA/GC/CG do".into())
}

fn reply_validation() -> Outcome {
    let corpus = malformed_replies();
    check(corpus.len() == 50, || format!("corpus has {} cases", corpus.len()))?;
    let mut detected = 0;
    for (label, line) in &corpus {
        match decode_response(line, CORPUS_ID, CORPUS_ROWS, &CORPUS_LEVELS) {
            Err(BackendError::ProtocolError(_)) => detected += 1,
            other => return Err(format!("{label}: got {other:?}")),
        }
    }

    let crossed = QuantilePrediction {
        mean: vec![0.5],
        quantiles: vec![(0.15, vec![0.7]), (0.85, vec![0.6])],
    };
    check(
        matches!(crossed.validate(1, &[0.15, 0.85]), Err(BackendError::ProtocolError(_))),
        || "crossed quantiles accepted".into(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let levels = vec![0.05, 0.15, 0.5, 0.85, 0.95];
    for _ in 0..200 {
        let n = rng.random_range(1..60);
        let d = rng.random_range(1..6);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let t: Vec<Vec<f64>> = (0..10).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let ctx = TrainingContext::new(Matrix::from_rows(&x).unwrap(), y).unwrap();
        let req = QuantileRequest::new(Matrix::from_rows(&t).unwrap(), levels.clone()).unwrap();
        let k = rng.random_range(1..80);
        let pred = predict(&KnnQuantile::new(k, None).unwrap(), &ctx, &req, 0).map_err(|e| e.to_string())?;
        pred.validate(10, &levels).map_err(|e| e.to_string())?;
        check(pred.iqr().unwrap().iter().all(|&w| w >= 0.0), || "negative IQR".into())?;
    }
    Ok(format!("{detected}/50 malformed replies rejected; 200 built-in replies monotone"))
}

fn calibration() -> Outcome {
    let start = Instant::now();
    let noise = NoiseProfile::Homoscedastic { sigma: 0.2 };
    let train = generate_synthetic(&SynthConfig::new(2000, 10, noise.clone(), 1)).unwrap();
    let test = generate_synthetic(&SynthConfig::new(1000, 10, noise, 2)).unwrap();
    let tables = ThermoTables::default();
    let ctx = TrainingContext::new(
        feature_matrix(&train.records, &tables),
        train.records.iter().map(|r| r.efficacy).collect(),
    )
    .unwrap();
    let truth: Vec<f64> = test.records.iter().map(|r| r.efficacy).collect();
    let grid = default_coverage_grid();
    let req = QuantileRequest::new(feature_matrix(&test.records, &tables), coverage_levels(&grid).unwrap()).unwrap();
    let pred = predict(&KnnQuantile::default(), &ctx, &req, 0).map_err(|e| e.to_string())?;
    let curve = coverage_from_prediction(&pred, &truth, &grid).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    check(curve.points.len() == 9, || format!("{} grid points", curve.points.len()))?;
    for p in &curve.points {
        check((p.empirical - p.expected).abs() <= 0.05, || {
            format!("coverage {:.3} at c = {}", p.empirical, p.expected)
        })?;
    }
    check(elapsed <= Duration::from_secs(120), || format!("took {elapsed:.1?}"))?;
    Ok(format!("max |error| {:.4}, {elapsed:.1?}", curve.max_abs_error()))
}

fn iqr_error_relation() -> Outcome {
    let tables = ThermoTables::default();
    let noise = NoiseProfile::TwoRegime {
        sigma_low: 0.03,
        sigma_high: 0.25,
    };
    let mut rhos = Vec::new();
    let mut worst_p = 0.0f64;
    for seed in 0..10u64 {
        let train = generate_synthetic(&SynthConfig::new(1000, 10, noise.clone(), 100 + seed)).unwrap();
        let test = generate_synthetic(&SynthConfig::new(500, 10, noise.clone(), 200 + seed)).unwrap();
        let ctx = TrainingContext::new(
            feature_matrix(&train.records, &tables),
            train.records.iter().map(|r| r.efficacy).collect(),
        )
        .unwrap();
        let truth: Vec<f64> = test.records.iter().map(|r| r.efficacy).collect();
        let req = QuantileRequest::with_default_levels(feature_matrix(&test.records, &tables)).unwrap();
        let pred = predict(&KnnQuantile::default(), &ctx, &req, seed).map_err(|e| e.to_string())?;
        let err: Vec<f64> = pred.mean.iter().zip(&truth).map(|(p, y)| (p - y).abs()).collect();
        let s = spearman(&pred.iqr().unwrap(), &err).map_err(|e| e.to_string())?;
        check(s.rho > 0.0 && s.p_value < 0.01, || {
            format!("seed {seed}: rho {:.3}, p {:.2e}", s.rho, s.p_value)
        })?;
        rhos.push(s.rho);
        worst_p = worst_p.max(s.p_value);
    }
    let lo = rhos.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(format!("10 seeds, rho {lo:.3}..{hi:.3}, max p {worst_p:.1e}"))
}

fn selection() -> Outcome {
    let tables = ThermoTables::default();
    let n_exp = 50u64;
    let mut wins = 0;
    let mut oracle_ok = 0;
    let mut slowest = Duration::ZERO;
    for e in 0..n_exp {
        let start = Instant::now();
        let pool = generate_synthetic(&SynthConfig::new(
            300,
            20,
            NoiseProfile::PerTarget {
                sigma_min: 0.0,
                sigma_max: 0.6,
            },
            1000 + e,
        ))
        .unwrap();
        let ds = Dataset::from_records(pool.records).unwrap();
        let test = generate_synthetic(&SynthConfig::new(60, 3, NoiseProfile::Homoscedastic { sigma: 0.0 }, 2000 + e)).unwrap();
        let truth: Vec<f64> = test.records.iter().map(|r| r.efficacy).collect();
        let cfg = ExperimentConfig {
            seeds: vec![e],
            run: RunOptions {
                workers: 8,
                ..RunOptions::default()
            },
            ..ExperimentConfig::default()
        };
        let rep = run_experiment(
            &ds.pool,
            &ds.pool_data(&tables),
            &feature_matrix(&test.records, &tables),
            Some(&truth),
            &cfg,
            &KnnQuantile::default(),
        )
        .map_err(|err| format!("experiment {e}: {err}"))?;
        slowest = slowest.max(start.elapsed());

        let r = &rep.repeats[0];
        check(r.models.len() == 400 && r.selected.len() == 40, || format!("experiment {e}: {} selected", r.selected.len()))?;
        let metrics = |name: &str| r.outcome(name).and_then(|o| o.metrics).ok_or(format!("experiment {e}: no {name}"));
        let top = metrics("top_fraction_mean")?;
        let full = metrics("full_mean")?;
        let oracle = metrics("oracle_best")?;
        if let (Some(a), Some(b)) = (top.pearson.value(), full.pearson.value()) {
            if a >= b {
                wins += 1;
            }
        }
        if r.strategies.iter().all(|s| s.metrics.is_some_and(|m| oracle.mae <= m.mae)) {
            oracle_ok += 1;
        }
    }
    let detail = format!("top-fraction r >= full-mean r in {wins}/{n_exp}, oracle best in {oracle_ok}/{n_exp}, slowest {slowest:.1?}");
    check(wins * 10 >= n_exp * 6, || detail.clone())?;
    check(oracle_ok == n_exp, || detail.clone())?;
    check(slowest <= Duration::from_secs(300), || detail.clone())?;
    Ok(detail)
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_oligoicp"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("oligoicp {args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Outcome {
    let tmp = tempfile::TempDir::new().unwrap();
    let dir = tmp.path();
    cli(dir, &["--seed", "3", "synth", "--n", "300", "--targets", "20", "--noise", "per-target", "--sigma-max", "0.6", "-o", "pool.csv"])?;
    cli(dir, &["--seed", "4", "synth", "--n", "60", "--targets", "3", "--sigma", "0", "-o", "test.csv"])?;
    fs::write(
        dir.join("ensemble.toml"),
        "[data]\ndataset = \"pool.csv\"\ntest_dataset = \"test.csv\"\n\n[run]\nworkers = 8\noutput_dir = \"out\"\n",
    )
    .unwrap();
    cli(dir, &["ensemble", "ensemble.toml"])?;
    let first = read_dir_bytes(&dir.join("out"));
    fs::copy(dir.join("out/config.echo.toml"), dir.join("echo.toml")).unwrap();
    cli(dir, &["ensemble", "echo.toml"])?;
    let second = read_dir_bytes(&dir.join("out"));
    check(first.len() == 6, || format!("{} output files", first.len()))?;
    for (name, bytes) in &first {
        check(second.get(name) == Some(bytes), || format!("{name} differs on rerun"))?;
    }
    let total: usize = first.values().map(Vec::len).sum();
    Ok(format!("{} files, {total} bytes identical", first.len()))
}

fn exact_counts() -> Outcome {
    check(top_count(400, 0.10) == 40, || format!("top_count = {}", top_count(400, 0.10)))?;
    let pool = generate_synthetic(&SynthConfig::new(300, 20, NoiseProfile::Homoscedastic { sigma: 0.1 }, 8)).unwrap();
    let ds = Dataset::from_records(pool.records).unwrap();
    check(ds.pool.len() == 20, || format!("pool has {} subsets", ds.pool.len()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut k_seen = [false; 21];
    for seed in 0..200 {
        let specs = sample_model_specs(&ds.pool, 400, 20, seed).map_err(|e| e.to_string())?;
        check(specs.len() == 400, || format!("{} specs", specs.len()))?;
        for s in &specs {
            check((1..=20).contains(&s.k) && s.subsets.len() == s.k, || format!("seed {seed}: k = {}", s.k))?;
            k_seen[s.k] = true;
        }
        let results: Vec<ModelResult> = specs.into_iter().map(|spec| fake_result(spec, rng.random_range(0.0..1.0))).collect();
        let chosen = select_top_fraction(&results, 0.10).map_err(|e| e.to_string())?;
        check(chosen.len() == 40, || format!("seed {seed}: selected {}", chosen.len()))?;
    }
    check(k_seen[1..].iter().all(|&s| s), || "some k in 1..=20 never drawn".into())?;
    Ok("200 draws of 400 models: 40 selected, k within [1, 20]".into())
}

fn fake_result(spec: ModelSpec, mean_iqr: f64) -> ModelResult {
    ModelResult {
        spec,
        prediction: QuantilePrediction {
            mean: vec![0.0],
            quantiles: vec![(0.15, vec![0.0]), (0.85, vec![mean_iqr])],
        },
        mean_iqr,
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("feature exactness", feature_exactness),
        ("thermo golden values", thermo_golden_values),
        ("self-complement impossibility", self_complement),
        ("reply monotonicity and malformed-reply detection", reply_validation),
        ("calibration on homoscedastic data", calibration),
        ("IQR-error relation on two-regime data", iqr_error_relation),
        ("top-fraction selection", selection),
        ("determinism from config echo", determinism),
        ("exact counts", exact_counts),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
