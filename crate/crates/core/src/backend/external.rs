//! Client side of the wire protocol: a child process speaking JSON Lines on
//! stdin/stdout, or a TCP peer speaking the same.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use super::protocol::{decode_response, peek_id, PredictRequest};
use super::{BackendError, QuantilePrediction, QuantileRegressor, QuantileRequest, TrainingContext};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

static REQUEST_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Where an external backend lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Program and arguments, split on whitespace.
    Command(Vec<String>),
    /// `host:port`, written `tcp://host:port`.
    Tcp(String),
}

impl FromStr for Endpoint {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(BackendError::InvalidInput("empty tcp address".into()));
            }
            return Ok(Self::Tcp(addr.to_string()));
        }
        let argv: Vec<String> = s.split_whitespace().map(String::from).collect();
        if argv.is_empty() {
            return Err(BackendError::InvalidInput("empty backend command".into()));
        }
        Ok(Self::Command(argv))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Command(argv) => f.write_str(&argv.join(" ")),
            Self::Tcp(addr) => write!(f, "tcp://{addr}"),
        }
    }
}

/// One isolated process or connection per call.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub endpoint: Endpoint,
    pub timeout: Duration,
}

impl ExternalBackend {
    pub fn new(endpoint: Endpoint, timeout: Duration) -> Self {
        Self { endpoint, timeout }
    }

    fn next_id() -> String {
        format!(
            "{}-{}",
            std::process::id(),
            REQUEST_COUNTER.fetch_add(1, Ordering::Relaxed)
        )
    }
}

impl QuantileRegressor for ExternalBackend {
    fn predict_raw(
        &self,
        ctx: &TrainingContext,
        req: &QuantileRequest,
        seed: u64,
    ) -> Result<QuantilePrediction, BackendError> {
        let id = Self::next_id();
        let mut payload = serde_json::to_vec(&PredictRequest::new(id.clone(), ctx, req, seed))
            .map_err(|e| BackendError::InvalidInput(format!("cannot encode request: {e}")))?;
        payload.push(b'\n');
        let n_test = req.test_features().rows();
        let levels = req.levels().to_vec();

        match &self.endpoint {
            Endpoint::Command(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| BackendError::BackendUnavailable(format!("cannot start {}: {e}", argv[0])))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                let result = exchange(stdin, BufReader::new(stdout), payload, id, n_test, levels, self.timeout);
                reap(&mut child, result.is_err());
                result
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| BackendError::BackendUnavailable(format!("cannot connect to {addr}: {e}")))?;
                let reader = stream
                    .try_clone()
                    .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
                let result = exchange(
                    HalfClose(stream.try_clone().map_err(|e| BackendError::BackendUnavailable(e.to_string()))?),
                    BufReader::new(reader),
                    payload,
                    id,
                    n_test,
                    levels,
                    self.timeout,
                );
                let _ = stream.shutdown(Shutdown::Both);
                result
            }
        }
    }
}

/// Writer that signals end-of-input on drop by closing the write half.
struct HalfClose(TcpStream);

impl Write for HalfClose {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

impl Drop for HalfClose {
    fn drop(&mut self) {
        let _ = self.0.shutdown(Shutdown::Write);
    }
}

fn reap(child: &mut Child, failed: bool) {
    if failed {
        let _ = child.kill();
    }
    let _ = child.wait();
}

/// Send one request and wait for the matching response line.
///
/// Lines carrying another id are skipped; anything unparseable is a
/// protocol error. End of stream before an answer means the backend never
/// responded.
fn exchange<W, R>(
    mut writer: W,
    reader: R,
    payload: Vec<u8>,
    id: String,
    n_test: usize,
    levels: Vec<f64>,
    timeout: Duration,
) -> Result<QuantilePrediction, BackendError>
where
    W: Write + Send + 'static,
    R: BufRead + Send + 'static,
{
    // a writer thread keeps a large request from deadlocking against a
    // backend that starts answering before it has read everything
    thread::spawn(move || {
        let _ = writer.write_all(&payload).and_then(|()| writer.flush());
    });

    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let outcome = (|| {
            for line in reader.lines() {
                let line = line.map_err(|e| BackendError::BackendUnavailable(format!("read failed: {e}")))?;
                if line.trim().is_empty() {
                    continue;
                }
                if peek_id(&line)? != id {
                    continue;
                }
                return decode_response(&line, &id, n_test, &levels);
            }
            Err(BackendError::BackendUnavailable(
                "backend closed the stream without answering".into(),
            ))
        })();
        let _ = tx.send(outcome);
    });

    match rx.recv_timeout(timeout) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(BackendError::Timeout(timeout)),
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(BackendError::BackendUnavailable(
            "response reader terminated".into(),
        )),
    }
}
