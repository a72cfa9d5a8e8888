//! JSON Lines wire protocol for external backends.
//!
//! One request and one response per line:
//!
//! ```text
//! {"id":"m3-17","op":"predict","train_x":[[...]],"train_y":[...],"test_x":[[...]],"quantiles":[0.15,0.85],"seed":42}
//! {"id":"m3-17","ok":true,"mean":[...],"quantiles":{"0.15":[...],"0.85":[...]}}
//! {"id":"m3-17","ok":false,"error":"..."}
//! ```
//!
//! Responses are matched to requests by `id`. Quantile keys are the decimal
//! rendering of the requested level.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{BackendError, Matrix, QuantilePrediction, QuantileRequest, TrainingContext, LEVEL_TOLERANCE};

pub const OP_PREDICT: &str = "predict";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: String,
    pub op: String,
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<Vec<f64>>,
    pub quantiles: Vec<f64>,
    pub seed: u64,
}

impl PredictRequest {
    pub fn new(id: String, ctx: &TrainingContext, req: &QuantileRequest, seed: u64) -> Self {
        Self {
            id,
            op: OP_PREDICT.to_string(),
            train_x: ctx.features().iter_rows().map(<[f64]>::to_vec).collect(),
            train_y: ctx.labels().to_vec(),
            test_x: req.test_features().iter_rows().map(<[f64]>::to_vec).collect(),
            quantiles: req.levels().to_vec(),
            seed,
        }
    }

    /// Rebuild validated context and request objects on the serving side.
    pub fn to_parts(&self) -> Result<(TrainingContext, QuantileRequest), BackendError> {
        if self.op != OP_PREDICT {
            return Err(BackendError::InvalidInput(format!("unsupported op {:?}", self.op)));
        }
        let ctx = TrainingContext::new(Matrix::from_rows(&self.train_x)?, self.train_y.clone())?;
        let req = QuantileRequest::new(Matrix::from_rows(&self.test_x)?, self.quantiles.clone())?;
        if ctx.features().cols() != req.test_features().cols() {
            return Err(BackendError::DimensionMismatch {
                expected: ctx.features().cols(),
                actual: req.test_features().cols(),
            });
        }
        Ok((ctx, req))
    }
}

/// Response line as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<BTreeMap<String, Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictResponse {
    pub fn success(id: String, pred: &QuantilePrediction) -> Self {
        Self {
            id,
            ok: true,
            mean: Some(pred.mean.clone()),
            quantiles: Some(
                pred.quantiles
                    .iter()
                    .map(|(l, v)| (level_key(*l), v.clone()))
                    .collect(),
            ),
            error: None,
        }
    }

    pub fn failure(id: String, error: String) -> Self {
        Self {
            id,
            ok: false,
            mean: None,
            quantiles: None,
            error: Some(error),
        }
    }
}

/// Wire key for a quantile level, e.g. `0.15`.
pub fn level_key(level: f64) -> String {
    format!("{level}")
}

/// Extract the `id` of a response line, if it has one.
pub fn peek_id(line: &str) -> Result<String, BackendError> {
    #[derive(Deserialize)]
    struct IdOnly {
        id: String,
    }
    serde_json::from_str::<IdOnly>(line)
        .map(|v| v.id)
        .map_err(|e| BackendError::ProtocolError(format!("unreadable response: {e}")))
}

/// Parse and validate one response line against the request it answers.
pub fn decode_response(
    line: &str,
    expected_id: &str,
    n_test: usize,
    levels: &[f64],
) -> Result<QuantilePrediction, BackendError> {
    let proto = |msg: String| BackendError::ProtocolError(msg);
    let resp: PredictResponse =
        serde_json::from_str(line).map_err(|e| proto(format!("malformed response: {e}")))?;
    if resp.id != expected_id {
        return Err(proto(format!(
            "response id {:?} does not match request {expected_id:?}",
            resp.id
        )));
    }
    if !resp.ok {
        return Err(BackendError::Remote(
            resp.error.unwrap_or_else(|| "unspecified error".into()),
        ));
    }
    let mean = resp.mean.ok_or_else(|| proto("response lacks mean".into()))?;
    let raw = resp
        .quantiles
        .ok_or_else(|| proto("response lacks quantiles".into()))?;

    let mut quantiles = Vec::with_capacity(raw.len());
    for (key, values) in raw {
        let level: f64 = key
            .trim()
            .parse()
            .map_err(|_| proto(format!("quantile key {key:?} is not a number")))?;
        if !levels.iter().any(|l| (l - level).abs() < LEVEL_TOLERANCE) {
            return Err(proto(format!("unrequested quantile level {key}")));
        }
        quantiles.push((level, values));
    }
    quantiles.sort_by(|a, b| a.0.total_cmp(&b.0));
    if quantiles.windows(2).any(|w| (w[1].0 - w[0].0).abs() < LEVEL_TOLERANCE) {
        return Err(proto("duplicate quantile level".into()));
    }
    let pred = QuantilePrediction { mean, quantiles };
    pred.validate(n_test, levels)?;
    Ok(pred)
}

/// Counters from a finished serve loop.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ServeStats {
    pub answered: usize,
    pub failed: usize,
}

/// Answer requests line by line until the reader is exhausted.
///
/// A bad request line yields an `ok: false` reply and the loop continues.
pub fn serve<R, W, F>(reader: R, mut writer: W, mut handler: F) -> std::io::Result<ServeStats>
where
    R: BufRead,
    W: Write,
    F: FnMut(&TrainingContext, &QuantileRequest, u64) -> Result<QuantilePrediction, BackendError>,
{
    let mut stats = ServeStats::default();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<PredictRequest>(&line) {
            Ok(request) => {
                let outcome = request
                    .to_parts()
                    .and_then(|(ctx, req)| {
                        let pred = handler(&ctx, &req, request.seed)?;
                        pred.validate(req.test_features().rows(), req.levels())?;
                        Ok(pred)
                    });
                match outcome {
                    Ok(pred) => PredictResponse::success(request.id, &pred),
                    Err(e) => PredictResponse::failure(request.id, e.to_string()),
                }
            }
            Err(e) => {
                let id = peek_id(&line).unwrap_or_default();
                PredictResponse::failure(id, format!("malformed request: {e}"))
            }
        };
        if response.ok {
            stats.answered += 1;
        } else {
            stats.failed += 1;
        }
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::EchoBackend;
    use crate::backend::QuantileRegressor;

    #[test]
    fn level_keys_are_short_decimals() {
        assert_eq!(level_key(0.15), "0.15");
        assert_eq!(level_key(0.85), "0.85");
        assert_eq!(level_key(0.5), "0.5");
    }

    #[test]
    fn response_round_trip() {
        let pred = QuantilePrediction {
            mean: vec![0.5, 0.25],
            quantiles: vec![(0.15, vec![0.1, 0.2]), (0.85, vec![0.9, 0.3])],
        };
        let line = serde_json::to_string(&PredictResponse::success("a".into(), &pred)).unwrap();
        assert_eq!(decode_response(&line, "a", 2, &[0.15, 0.85]).unwrap(), pred);
    }

    #[test]
    fn remote_failure_is_not_a_protocol_error() {
        let line = r#"{"id":"a","ok":false,"error":"out of memory"}"#;
        assert!(matches!(
            decode_response(line, "a", 1, &[0.5]),
            Err(BackendError::Remote(m)) if m == "out of memory"
        ));
    }

    #[test]
    fn serve_loop_survives_bad_lines() {
        let good = PredictRequest {
            id: "r1".into(),
            op: "predict".into(),
            train_x: vec![vec![0.0], vec![1.0]],
            train_y: vec![1.0, 3.0],
            test_x: vec![vec![0.5]],
            quantiles: vec![0.15, 0.85],
            seed: 1,
        };
        let input = format!(
            "not json\n{}\n{{\"id\":\"r2\",\"op\":\"predict\"}}\n",
            serde_json::to_string(&good).unwrap()
        );
        let mut out = Vec::new();
        let echo = EchoBackend::default();
        let stats = serve(input.as_bytes(), &mut out, |c, r, s| echo.predict_raw(c, r, s)).unwrap();
        assert_eq!(stats, ServeStats { answered: 1, failed: 2 });
        let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
        assert_eq!(lines.len(), 3);
        let pred = decode_response(lines[1], "r1", 1, &[0.15, 0.85]).unwrap();
        assert_eq!(pred.mean, vec![2.0]);
        assert_eq!(peek_id(lines[2]).unwrap(), "r2");
    }
}
