//! Dataset files, subset grouping and seeded synthetic data.
//!
//! Two CSV layouts are accepted (UTF-8, `.` decimals, header required):
//!
//! ```text
//! sirna,mrna_context,efficacy,target_id,source_id
//! sirna,transcript,binding_start,efficacy,target_id,source_id
//! ```
//!
//! Records are grouped into subsets keyed `target_id:source_id`, in order of
//! first appearance. Saving always writes the first layout.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Matrix;
use crate::ensemble::{PoolData, Subset, SubsetPool};
use crate::features::{featurize_with, ThermoTables, FEATURE_LEN};
use crate::seqmodel::{
    build_mrna_context, normalize_sirna, MrnaContext, RecordRow, SeqError, SirnaRecord, SirnaSeq,
    FLANK_LEN, MRNA_LEN, PAD, SIRNA_LEN,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: u64,
        column: String,
        reason: String,
    },
    #[error("dataset contains no usable records")]
    EmptyDataset,
    #[error("unrecognized header {0:?}")]
    UnknownFormat(Vec<String>),
    #[error("invalid synthetic configuration: {0}")]
    InvalidSynthConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    Auto,
    Context,
    Transcript,
}

/// Rows failing normalization abort the load (`Strict`) or are skipped and
/// reported (`Lenient`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowIssue {
    pub line: u64,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<SirnaRecord>,
    pub pool: SubsetPool,
    pub skipped: Vec<RowIssue>,
    /// Records whose mRNA binding site disagrees with the siRNA reverse
    /// complement (warned, not rejected).
    pub complementarity_warnings: usize,
}

impl Dataset {
    pub fn from_records(records: Vec<SirnaRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        let pool = group_subsets(&records);
        let complementarity_warnings = records
            .iter()
            .filter(|r| !r.complementarity_mismatches().is_empty())
            .count();
        Ok(Self {
            records,
            pool,
            skipped: Vec::new(),
            complementarity_warnings,
        })
    }

    pub fn labels(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.efficacy).collect()
    }

    /// Feature matrix of every record, in record order.
    pub fn feature_matrix(&self, tables: &ThermoTables) -> Matrix {
        feature_matrix(&self.records, tables)
    }

    pub fn pool_data(&self, tables: &ThermoTables) -> PoolData {
        PoolData {
            features: self.feature_matrix(tables),
            labels: self.labels(),
        }
    }
}

pub fn feature_matrix(records: &[SirnaRecord], tables: &ThermoTables) -> Matrix {
    let mut data = Vec::with_capacity(records.len() * FEATURE_LEN);
    for r in records {
        data.extend_from_slice(featurize_with(r, tables).as_slice());
    }
    Matrix::new(records.len(), FEATURE_LEN, data).expect("fixed width")
}

pub fn subset_key(target_id: &str, source_id: &str) -> String {
    format!("{target_id}:{source_id}")
}

/// Group record indices by `(target_id, source_id)` in first-seen order.
pub fn group_subsets(records: &[SirnaRecord]) -> SubsetPool {
    let mut order: Vec<Subset> = Vec::new();
    let mut pos: HashMap<String, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = subset_key(&r.target_id, &r.source_id);
        let p = *pos.entry(key.clone()).or_insert_with(|| {
            order.push(Subset {
                id: key,
                indices: Vec::new(),
            });
            order.len() - 1
        });
        order[p].indices.push(i);
    }
    SubsetPool::new(order).expect("non-empty groups")
}

#[derive(Debug, Deserialize)]
struct TranscriptRow {
    sirna: String,
    transcript: String,
    binding_start: usize,
    efficacy: f64,
    target_id: String,
    source_id: String,
}

fn detect_format(headers: &csv::StringRecord) -> Result<DatasetFormat, DataError> {
    let has = |name: &str| headers.iter().any(|h| h.trim() == name);
    let common = ["sirna", "efficacy", "target_id", "source_id"].iter().all(|h| has(h));
    if common && has("mrna_context") {
        Ok(DatasetFormat::Context)
    } else if common && has("transcript") && has("binding_start") {
        Ok(DatasetFormat::Transcript)
    } else {
        Err(DataError::UnknownFormat(headers.iter().map(String::from).collect()))
    }
}

fn issue(line: u64, column: &str, reason: impl ToString) -> RowIssue {
    RowIssue {
        line,
        column: column.to_string(),
        reason: reason.to_string(),
    }
}

fn build_record(
    line: u64,
    sirna: &str,
    mrna: Result<MrnaContext, SeqError>,
    mrna_column: &str,
    efficacy: f64,
    target_id: String,
    source_id: String,
) -> Result<SirnaRecord, RowIssue> {
    let sirna = normalize_sirna(sirna).map_err(|e| issue(line, "sirna", e))?;
    let mrna = mrna.map_err(|e| issue(line, mrna_column, e))?;
    if !efficacy.is_finite() {
        return Err(issue(line, "efficacy", "efficacy must be finite"));
    }
    if target_id.trim().is_empty() {
        return Err(issue(line, "target_id", "empty id"));
    }
    if source_id.trim().is_empty() {
        return Err(issue(line, "source_id", "empty id"));
    }
    Ok(SirnaRecord {
        sirna,
        mrna,
        efficacy,
        target_id,
        source_id,
    })
}

/// Load records from any reader. See the module docs for the layouts.
pub fn load_dataset_from_reader<R: Read>(
    reader: R,
    format: DatasetFormat,
    strictness: Strictness,
) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let detected = detect_format(&headers)?;
    let format = match format {
        DatasetFormat::Auto => detected,
        f if f == detected => f,
        f => {
            return Err(DataError::Parse {
                line: 1,
                column: "header".into(),
                reason: format!("header does not match the {f:?} layout"),
            })
        }
    };

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut raw = csv::StringRecord::new();
    loop {
        let line = rdr.position().line() + 1;
        let more = rdr.read_record(&mut raw).map_err(|e| DataError::Parse {
            line,
            column: "-".into(),
            reason: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = raw.position().map_or(line, |p| p.line());
        let parsed = match format {
            DatasetFormat::Context => raw
                .deserialize::<RecordRow>(Some(&headers))
                .map_err(|e| issue(line, "-", e))
                .and_then(|row| {
                    build_record(
                        line,
                        &row.sirna,
                        MrnaContext::new(&row.mrna_context),
                        "mrna_context",
                        row.efficacy,
                        row.target_id,
                        row.source_id,
                    )
                }),
            _ => raw
                .deserialize::<TranscriptRow>(Some(&headers))
                .map_err(|e| issue(line, "-", e))
                .and_then(|row| {
                    build_record(
                        line,
                        &row.sirna,
                        build_mrna_context(&row.transcript, row.binding_start),
                        "transcript",
                        row.efficacy,
                        row.target_id,
                        row.source_id,
                    )
                }),
        };
        match (parsed, strictness) {
            (Ok(rec), _) => records.push(rec),
            (Err(e), Strictness::Strict) => {
                return Err(DataError::Parse {
                    line: e.line,
                    column: e.column,
                    reason: e.reason,
                })
            }
            (Err(e), Strictness::Lenient) => {
                warn!("skipping line {} ({}): {}", e.line, e.column, e.reason);
                skipped.push(e);
            }
        }
    }

    let mut ds = Dataset::from_records(records)?;
    ds.skipped = skipped;
    if ds.complementarity_warnings > 0 {
        warn!(
            "{} record(s) have an mRNA binding site that is not the siRNA reverse complement",
            ds.complementarity_warnings
        );
    }
    Ok(ds)
}

pub fn load_dataset(path: &Path, format: DatasetFormat, strictness: Strictness) -> Result<Dataset, DataError> {
    load_dataset_from_reader(File::open(path)?, format, strictness)
}

pub fn write_dataset<W: Write>(writer: W, records: &[SirnaRecord]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(RecordRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, records: &[SirnaRecord]) -> Result<(), DataError> {
    write_dataset(File::create(path)?, records)
}

/// How label noise is laid over the planted signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseProfile {
    /// Same Gaussian noise for every record.
    Homoscedastic { sigma: f64 },
    /// Each record falls in a quiet or a noisy regime with equal odds. The
    /// regimes also differ in base composition (noisy records are GC-rich),
    /// so they are separable from sequence alone.
    TwoRegime { sigma_low: f64, sigma_high: f64 },
    /// Target `t` of `n` gets noise linearly spaced from `sigma_min`
    /// (first target) to `sigma_max` (last target).
    PerTarget { sigma_min: f64, sigma_max: f64 },
}

impl NoiseProfile {
    fn validate(&self) -> Result<(), DataError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match *self {
            Self::Homoscedastic { sigma } => ok(sigma),
            Self::TwoRegime { sigma_low, sigma_high } => ok(sigma_low) && ok(sigma_high),
            Self::PerTarget { sigma_min, sigma_max } => ok(sigma_min) && ok(sigma_max),
        };
        if valid {
            Ok(())
        } else {
            Err(DataError::InvalidSynthConfig(format!("bad noise levels in {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub n_targets: usize,
    pub noise: NoiseProfile,
    pub seed: u64,
    /// Prefix for generated target ids.
    #[serde(default = "default_target_prefix")]
    pub target_prefix: String,
    #[serde(default = "default_source")]
    pub source_id: String,
}

fn default_target_prefix() -> String {
    "T".into()
}

fn default_source() -> String {
    "synthetic".into()
}

impl SynthConfig {
    pub fn new(n: usize, n_targets: usize, noise: NoiseProfile, seed: u64) -> Self {
        Self {
            n,
            n_targets,
            noise,
            seed,
            target_prefix: default_target_prefix(),
            source_id: default_source(),
        }
    }
}

/// Generated records together with the ground truth behind their labels.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub records: Vec<SirnaRecord>,
    /// Noise-free label of each record.
    pub clean: Vec<f64>,
    /// Noise standard deviation applied to each record.
    pub noise_sd: Vec<f64>,
    /// Regime of each record (0 quiet, 1 noisy; always 0 outside the
    /// two-regime profile).
    pub regime: Vec<u8>,
}

/// The planted efficacy: higher for AU-rich siRNAs and for an A/U at the
/// 5' end, in roughly `[0.2, 0.85]`.
pub fn planted_efficacy(sirna: &SirnaSeq) -> f64 {
    let b = sirna.as_bytes();
    let gc = b.iter().filter(|&&c| c == b'G' || c == b'C').count() as f64 / SIRNA_LEN as f64;
    let au_5p = f64::from(u8::from(b[0] == b'A' || b[0] == b'U'));
    0.2 + 0.5 * (1.0 - gc) + 0.15 * au_5p
}

fn draw_base<R: Rng>(rng: &mut R, gc: f64) -> u8 {
    let strong = rng.random_bool(gc);
    let pick = usize::from(rng.random_bool(0.5));
    if strong {
        b"CG"[pick]
    } else {
        b"AU"[pick]
    }
}

/// Seeded synthetic dataset. Targets are assigned round-robin so every
/// target receives records.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData, DataError> {
    if cfg.n_targets == 0 || cfg.n < cfg.n_targets {
        return Err(DataError::InvalidSynthConfig(format!(
            "need n >= n_targets >= 1, got n = {}, n_targets = {}",
            cfg.n, cfg.n_targets
        )));
    }
    cfg.noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = SyntheticData {
        records: Vec::with_capacity(cfg.n),
        clean: Vec::with_capacity(cfg.n),
        noise_sd: Vec::with_capacity(cfg.n),
        regime: Vec::with_capacity(cfg.n),
    };

    for i in 0..cfg.n {
        let target = i % cfg.n_targets;
        let (gc, sigma, regime) = match cfg.noise {
            NoiseProfile::Homoscedastic { sigma } => (rng.random_range(0.2..0.8), sigma, 0),
            NoiseProfile::TwoRegime { sigma_low, sigma_high } => {
                if rng.random_bool(0.5) {
                    (rng.random_range(0.5..0.85), sigma_high, 1)
                } else {
                    (rng.random_range(0.15..0.5), sigma_low, 0)
                }
            }
            NoiseProfile::PerTarget { sigma_min, sigma_max } => {
                let t = if cfg.n_targets > 1 {
                    target as f64 / (cfg.n_targets - 1) as f64
                } else {
                    0.0
                };
                (rng.random_range(0.2..0.8), sigma_min + t * (sigma_max - sigma_min), 0)
            }
        };

        let sirna_bases: Vec<u8> = (0..SIRNA_LEN).map(|_| draw_base(&mut rng, gc)).collect();
        let sirna = SirnaSeq::new(std::str::from_utf8(&sirna_bases).expect("ascii")).expect("valid bases");
        let mut mrna = [0u8; MRNA_LEN];
        for (w, slot) in mrna.iter_mut().enumerate() {
            *slot = if (FLANK_LEN..FLANK_LEN + SIRNA_LEN).contains(&w) {
                sirna.reverse_complement()[w - FLANK_LEN]
            } else {
                draw_base(&mut rng, gc)
            };
        }
        // a few sites sit at a transcript end
        if rng.random_bool(0.05) {
            let pad = rng.random_range(1..=FLANK_LEN);
            if rng.random_bool(0.5) {
                mrna[..pad].fill(PAD);
            } else {
                mrna[MRNA_LEN - pad..].fill(PAD);
            }
        }
        let mrna = MrnaContext::new(std::str::from_utf8(&mrna).expect("ascii")).expect("valid context");

        let clean = planted_efficacy(&sirna);
        let z: f64 = StandardNormal.sample(&mut rng);
        let efficacy = clean + sigma * z;
        out.records.push(SirnaRecord {
            sirna,
            mrna,
            efficacy,
            target_id: format!("{}{}", cfg.target_prefix, target + 1),
            source_id: cfg.source_id.clone(),
        });
        out.clean.push(clean);
        out.noise_sd.push(sigma);
        out.regime.push(regime);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const S19: &str = "GCAUGCAUGCAUGCAUGCA";

    fn ctx_for(s: &str) -> String {
        let site = crate::seqmodel::reverse_complement(s).unwrap();
        format!("{}{}{}", "A".repeat(19), site, "C".repeat(19))
    }

    fn csv_with(rows: &[(&str, &str, &str, &str)]) -> String {
        let mut s = String::from("sirna,mrna_context,efficacy,target_id,source_id\n");
        for (sirna, eff, t, src) in rows {
            let ctx = ctx_for(&sirna[sirna.len() - 19..]);
            s.push_str(&format!("{sirna},{ctx},{eff},{t},{src}\n"));
        }
        s
    }

    #[test]
    fn groups_by_target_and_source() {
        let data = csv_with(&[(S19, "0.5", "T1", "A"), (S19, "0.4", "T2", "A"), (S19, "0.3", "T1", "A")]);
        let ds = load_dataset_from_reader(data.as_bytes(), DatasetFormat::Auto, Strictness::Strict).unwrap();
        assert_eq!(ds.records.len(), 3);
        assert_eq!(ds.pool.len(), 2);
        assert_eq!(ds.pool.subsets()[0].id, "T1:A");
        assert_eq!(ds.pool.subsets()[0].indices, vec![0, 2]);
        assert_eq!(ds.complementarity_warnings, 0);
    }

    #[test]
    fn short_sirna_strict_vs_lenient() {
        let mut data = csv_with(&[(S19, "0.5", "T1", "A")]);
        data.push_str(&format!("{},{},0.2,T1,A\n", &S19[..18], ctx_for(S19)));
        let err = load_dataset_from_reader(data.as_bytes(), DatasetFormat::Auto, Strictness::Strict).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 3, ref column, .. } if column == "sirna"));

        let ds = load_dataset_from_reader(data.as_bytes(), DatasetFormat::Auto, Strictness::Lenient).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.skipped.len(), 1);
        assert_eq!(ds.skipped[0].line, 3);
    }

    #[test]
    fn transcript_layout() {
        let t: String = "ACGU".repeat(25);
        let data = format!(
            "sirna,transcript,binding_start,efficacy,target_id,source_id\n{S19},{t},40,0.7,T9,B\n"
        );
        let ds = load_dataset_from_reader(data.as_bytes(), DatasetFormat::Auto, Strictness::Strict).unwrap();
        assert_eq!(ds.records[0].mrna.to_string(), &t[20..77]);
    }

    #[test]
    fn empty_and_unknown_inputs() {
        let empty = "sirna,mrna_context,efficacy,target_id,source_id\n";
        assert!(matches!(
            load_dataset_from_reader(empty.as_bytes(), DatasetFormat::Auto, Strictness::Strict),
            Err(DataError::EmptyDataset)
        ));
        assert!(matches!(
            load_dataset_from_reader("a,b\n1,2\n".as_bytes(), DatasetFormat::Auto, Strictness::Strict),
            Err(DataError::UnknownFormat(_))
        ));
    }

    #[test]
    fn non_finite_efficacy_rejected() {
        let data = csv_with(&[(S19, "NaN", "T1", "A")]);
        assert!(load_dataset_from_reader(data.as_bytes(), DatasetFormat::Auto, Strictness::Strict).is_err());
    }

    #[test]
    fn multi_target_file_gives_29_subsets() {
        let rows: Vec<(String, String)> = (0..58).map(|i| (format!("0.{i:02}"), format!("G{}", i % 29))).collect();
        let rows: Vec<(&str, &str, &str, &str)> =
            rows.iter().map(|(e, t)| (S19, e.as_str(), t.as_str(), "lab_a")).collect();
        let ds = load_dataset_from_reader(csv_with(&rows).as_bytes(), DatasetFormat::Auto, Strictness::Strict).unwrap();
        assert_eq!(ds.pool.len(), 29);
    }

    #[test]
    fn synthetic_is_seeded() {
        let cfg = SynthConfig::new(200, 5, NoiseProfile::Homoscedastic { sigma: 0.1 }, 11);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        let mut bytes_a = Vec::new();
        let mut bytes_b = Vec::new();
        write_dataset(&mut bytes_a, &a.records).unwrap();
        write_dataset(&mut bytes_b, &b.records).unwrap();
        assert_eq!(bytes_a, bytes_b);
        assert!(a.records.iter().all(|r| r.complementarity_mismatches().is_empty()));
    }

    #[test]
    fn zero_noise_labels_equal_planted_function() {
        let cfg = SynthConfig::new(100, 3, NoiseProfile::Homoscedastic { sigma: 0.0 }, 2);
        let d = generate_synthetic(&cfg).unwrap();
        for (r, c) in d.records.iter().zip(&d.clean) {
            assert_eq!(r.efficacy, *c);
            assert_eq!(planted_efficacy(&r.sirna), *c);
        }
    }

    #[test]
    fn invalid_synthetic_configs() {
        let bad = SynthConfig::new(2, 3, NoiseProfile::Homoscedastic { sigma: 0.1 }, 0);
        assert!(generate_synthetic(&bad).is_err());
        let bad = SynthConfig::new(10, 3, NoiseProfile::Homoscedastic { sigma: -1.0 }, 0);
        assert!(generate_synthetic(&bad).is_err());
    }
}
