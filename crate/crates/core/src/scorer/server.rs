//! Serves a [`ScorerBundle`] over the wire protocol.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use tiny_http::{Header, Method, Request, Response, Server};

use super::wire::{
    self, CompleteRequest, CompleteResponse, ErrorBody, LoglikRequest, ProposeRequest,
    ProposeResponse, VerifyRequest, VerifyResponse,
};
use super::{ScorerBundle, ScorerError};
use crate::plan::{Goal, Step};

pub struct ScorerServer {
    server: Arc<Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

struct Reply {
    status: u16,
    body: String,
}

impl Reply {
    fn ok<T: Serialize>(value: &T) -> Self {
        Self {
            status: 200,
            body: serde_json::to_string(value).expect("response serialises"),
        }
    }

    fn error(status: u16, error: impl Into<String>, field: Option<String>) -> Self {
        Self {
            status,
            body: serde_json::to_string(&ErrorBody {
                error: error.into(),
                field,
            })
            .expect("error serialises"),
        }
    }

    fn from_scorer_error(e: ScorerError) -> Self {
        match e {
            ScorerError::Unavailable { .. } => Self::error(503, e.to_string(), None),
            ScorerError::Protocol { ref field, .. } => {
                let field = Some(field.clone());
                Self::error(502, e.to_string(), field)
            }
            ScorerError::Unsupported(_) => Self::error(501, e.to_string(), None),
            ScorerError::OffTree { .. } | ScorerError::InvalidRequest(_) => {
                Self::error(422, e.to_string(), None)
            }
        }
    }
}

fn decode<T: DeserializeOwned>(body: &str) -> Result<T, Reply> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| Reply::error(400, format!("malformed JSON: {e}"), None))?;
    serde_json::from_value(value).map_err(|e| Reply::error(400, format!("schema violation: {e}"), None))
}

fn handle(bundle: &ScorerBundle, route: &str, body: &str) -> Result<Reply, Reply> {
    match route {
        wire::PROPOSE => {
            let req: ProposeRequest = decode(body)?;
            req.method
                .validate()
                .map_err(|m| Reply::error(400, m, Some("method".into())))?;
            let instance = req.task.to_instance().map_err(Reply::from_scorer_error)?;
            let prefix = wire::to_steps(&req.prefix_steps, "prefix_steps").map_err(Reply::from_scorer_error)?;
            let candidates = bundle
                .proposer
                .propose(&instance, &prefix, req.n, &req.method)
                .map_err(Reply::from_scorer_error)?;
            Ok(Reply::ok(&ProposeResponse { candidates }))
        }
        wire::LOGLIK => {
            let req: LoglikRequest = decode(body)?;
            let instance = req.task.to_instance().map_err(Reply::from_scorer_error)?;
            let steps = wire::to_steps(&req.steps, "steps").map_err(Reply::from_scorer_error)?;
            let ll = bundle
                .likelihood
                .loglik(&instance, &steps)
                .map_err(Reply::from_scorer_error)?;
            Ok(Reply::ok(&ll))
        }
        wire::VERIFY => {
            let req: VerifyRequest = decode(body)?;
            let goal = Goal::new("remote", &req.goal).map_err(|e| Reply::error(400, e.to_string(), Some("goal".into())))?;
            let prefix = wire::to_steps(&req.prefix_steps, "prefix_steps").map_err(Reply::from_scorer_error)?;
            let candidate = Step::new(prefix.len() + 1, &req.candidate_step)
                .map_err(|e| Reply::error(400, e.to_string(), Some("candidate_step".into())))?;
            let validity = bundle
                .verifier
                .verify(&goal, &prefix, &candidate)
                .map_err(Reply::from_scorer_error)?;
            Ok(Reply::ok(&VerifyResponse { validity }))
        }
        wire::COMPLETE => {
            let req: CompleteRequest = decode(body)?;
            let completion = bundle
                .completion
                .as_ref()
                .ok_or_else(|| Reply::error(501, "completion is not available", None))?;
            let text = completion
                .complete(&req.prompt, &req.params())
                .map_err(Reply::from_scorer_error)?;
            Ok(Reply::ok(&CompleteResponse { text }))
        }
        other => Err(Reply::error(404, format!("no route {other}"), None)),
    }
}

fn respond(bundle: &ScorerBundle, mut request: Request) {
    let reply = if *request.method() != Method::Post {
        Reply::error(405, "only POST is supported", None)
    } else {
        let mut body = String::new();
        match request.as_reader().read_to_string(&mut body) {
            Ok(_) => {
                let route = request.url().split('?').next().unwrap_or("").to_string();
                handle(bundle, &route, &body).unwrap_or_else(|e| e)
            }
            Err(e) => Reply::error(400, format!("unreadable body: {e}"), None),
        }
    };
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let response = Response::from_string(reply.body)
        .with_status_code(reply.status)
        .with_header(header);
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}

impl ScorerServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts `workers`
    /// request threads.
    pub fn start(bundle: ScorerBundle, addr: &str, workers: usize) -> io::Result<Self> {
        let server = Server::http(addr).map_err(|e| io::Error::new(io::ErrorKind::AddrNotAvailable, e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::new(io::ErrorKind::Unsupported, "not an IP listener"))?;
        let server = Arc::new(server);
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let bundle = bundle.clone();
                thread::spawn(move || {
                    for request in server.incoming_requests() {
                        respond(&bundle, request);
                    }
                })
            })
            .collect();
        Ok(Self {
            server,
            addr,
            workers,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the worker threads exit.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ScorerServer {
    fn drop(&mut self) {
        self.stop();
    }
}
