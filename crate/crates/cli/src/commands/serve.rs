use std::io::{self, BufReader};
use std::net::TcpListener;

use oligoicp_core::backend::protocol::serve;
use oligoicp_core::backend::{predict, Backend, BackendSpec, EchoBackend, KnnQuantile};

use crate::error::CliError;
use crate::GlobalArgs;

pub fn run(g: &GlobalArgs, listen: Option<&str>, k_neighbors: usize, bandwidth: Option<f64>) -> Result<(), CliError> {
    let spec: BackendSpec = g.backend.as_deref().unwrap_or("builtin").parse()?;
    let backend = match spec {
        BackendSpec::Builtin => Backend::Builtin(KnnQuantile::new(k_neighbors, bandwidth)?),
        BackendSpec::Echo => Backend::Echo(EchoBackend::default()),
        BackendSpec::External(_) => {
            return Err(CliError::Validation("serve needs an in-process backend (builtin or echo)".into()))
        }
    };
    let handler = |ctx: &_, req: &_, seed| predict(&backend, ctx, req, seed);

    match listen {
        None => {
            let stats = serve(io::stdin().lock(), io::stdout().lock(), handler)
                .map_err(|e| CliError::io("serve loop", e))?;
            log::info!("answered {} request(s), {} failed", stats.answered, stats.failed);
        }
        Some(addr) => {
            let listener = TcpListener::bind(addr).map_err(|e| CliError::io(format!("cannot listen on {addr}"), e))?;
            eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::io("listener", e))?);
            for stream in listener.incoming() {
                let stream = match stream {
                    Ok(s) => s,
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        continue;
                    }
                };
                let reader = match stream.try_clone() {
                    Ok(r) => BufReader::new(r),
                    Err(e) => {
                        log::warn!("connection setup failed: {e}");
                        continue;
                    }
                };
                if let Err(e) = serve(reader, stream, handler) {
                    log::warn!("connection ended with error: {e}");
                }
            }
        }
    }
    Ok(())
}
