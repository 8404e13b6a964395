//! Minimal HTTP validation endpoint.
//!
//! `POST /v1/validate` scores one response through the same [`Validator`]
//! that `filter` uses; `GET /v1/health` reports liveness. The loaded state is
//! immutable, so worker threads share it without locking.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use integrity_core::pipeline::{Validator, Verdict};
use integrity_core::schema::{AnswerValue, RawResponse};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateRequest {
    answers: BTreeMap<String, AnswerValue>,
    #[serde(default)]
    respondent_id: Option<String>,
}

/// Verdict body returned by `POST /v1/validate`.
pub fn verdict_json(v: &Verdict) -> Value {
    json!({
        "verdict": v.verdict.as_str(),
        "prob_fake": v.prob_fake,
        "logic_score": v.logic_score,
        "reasons": v.reasons,
    })
}

#[derive(Debug)]
pub struct Service {
    pub validator: Validator,
}

impl Service {
    pub fn new(validator: Validator) -> Self {
        Service { validator }
    }

    fn error(status: u16, message: impl Into<String>) -> (u16, Value) {
        (status, json!({ "error": message.into() }))
    }

    fn validate(&self, body: &[u8]) -> (u16, Value) {
        if body.iter().all(u8::is_ascii_whitespace) {
            return Self::error(400, "empty request body");
        }
        let req: ValidateRequest = match serde_json::from_slice(body) {
            Ok(r) => r,
            Err(e) => return Self::error(400, format!("malformed request: {e}")),
        };
        let unknown: Vec<&String> = req
            .answers
            .keys()
            .filter(|q| !self.validator.schema.contains(q))
            .collect();
        if !unknown.is_empty() {
            return (
                422,
                json!({ "error": "unknown question ids", "unknown": unknown }),
            );
        }
        let raw = RawResponse {
            respondent_id: req.respondent_id.unwrap_or_default(),
            answers: req.answers,
        };
        match self.validator.validate(&raw) {
            Ok(v) => (200, verdict_json(&v)),
            Err(e) => Self::error(422, e.to_string()),
        }
    }

    /// Routes one request to a status code and JSON body.
    pub fn handle(&self, method: &str, path: &str, body: &[u8]) -> (u16, Value) {
        let path = path.split('?').next().unwrap_or(path);
        match (method, path) {
            ("POST", "/v1/validate") => self.validate(body),
            ("GET", "/v1/health") => (
                200,
                json!({ "status": "ok", "model": self.validator.artifact.model.kind().as_str() }),
            ),
            (_, "/v1/validate") | (_, "/v1/health") => Self::error(405, "method not allowed"),
            _ => Self::error(404, "not found"),
        }
    }
}

fn respond(service: &Service, mut request: tiny_http::Request) {
    let mut body = Vec::new();
    let (status, value) = match request.as_reader().read_to_end(&mut body) {
        Ok(_) => service.handle(request.method().as_str(), request.url(), &body),
        Err(e) => (400, json!({ "error": format!("cannot read body: {e}") })),
    };
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
        .expect("static header is valid");
    let response = tiny_http::Response::from_string(value.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

/// Binds `addr`, prints the bound address on stdout and serves forever with
/// `workers` threads.
pub fn run_server(service: Service, addr: &str, workers: usize) -> Result<(), CliError> {
    let server = tiny_http::Server::http(addr)
        .map_err(|e| CliError::Data(format!("cannot listen on {addr}: {e}")))?;
    match server.server_addr().to_ip() {
        Some(a) => println!("listening on http://{a}"),
        None => println!("listening on {addr}"),
    }
    let server = Arc::new(server);
    let service = Arc::new(service);
    let handles: Vec<_> = (0..workers)
        .map(|_| {
            let server = Arc::clone(&server);
            let service = Arc::clone(&service);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    respond(&service, request);
                }
            })
        })
        .collect();
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}
