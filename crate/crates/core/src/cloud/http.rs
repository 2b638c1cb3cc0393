//! HTTP front end for [`ChoreoService`].
//!
//! Routes:
//! - `PUT /objects/<path>`: signed upload, answers with `X-Choreo-Revision`
//! - `GET /objects/latest`: newest inventory document
//! - `GET /manifest`: the store's write log
//!
//! Quota periods advance with the signed request timestamp, which keeps the
//! server as deterministic as the in-process store.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Method, Request, Response, Server};

use super::service::{ChoreoService, UploadRequest};
use super::{
    CloudError, HEADER_KEY, HEADER_NONCE, HEADER_QUOTA_LIMIT, HEADER_REVISION, HEADER_SIGNATURE,
    HEADER_TIMESTAMP,
};

/// Largest accepted upload body.
pub const MAX_BODY: usize = 8 << 20;

pub struct HttpServer {
    server: Arc<Server>,
    addr: SocketAddr,
    worker: Option<JoinHandle<()>>,
}

impl HttpServer {
    /// Binds `addr` (port 0 picks a free port) and serves on a background
    /// thread until [`HttpServer::shutdown`] or drop.
    pub fn start(service: Arc<ChoreoService>, addr: &str) -> Result<Self, CloudError> {
        let server = Server::http(addr).map_err(|e| CloudError::Transport(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| CloudError::Transport("not an IP listener".into()))?;
        let server = Arc::new(server);
        let worker = {
            let server = Arc::clone(&server);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(&service, request);
                }
            })
        };
        log::info!("store listening on http://{addr}");
        Ok(HttpServer {
            server,
            addr,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the serving thread ends.
    pub fn join(mut self) {
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn header_value(req: &Request, name: &'static str) -> Option<String> {
    req.headers()
        .iter()
        .find(|h| h.field.equiv(name))
        .map(|h| h.value.as_str().to_string())
}

fn text(code: u16, body: impl Into<String>) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_string(body.into()).with_status_code(code)
}

fn with_header<R: Read>(resp: Response<R>, name: &str, value: &str) -> Response<R> {
    match Header::from_bytes(name.as_bytes(), value.as_bytes()) {
        Ok(h) => resp.with_header(h),
        Err(()) => resp,
    }
}

fn error_response(e: &CloudError) -> Response<std::io::Cursor<Vec<u8>>> {
    let code = match e {
        CloudError::QuotaExceeded { .. } => 429,
        CloudError::BadSignature | CloudError::ReplayedNonce(_) | CloudError::EmptyCredential(_) => 401,
        CloudError::EmptyStore => 404,
        CloudError::EmptyPath | CloudError::BadPath(_) | CloudError::Protocol(_) => 400,
        CloudError::Manifest(_) | CloudError::Io(_) | CloudError::Transport(_) => 500,
    };
    let resp = text(code, e.to_string());
    match e {
        CloudError::QuotaExceeded { limit } => with_header(resp, HEADER_QUOTA_LIMIT, &limit.to_string()),
        _ => resp,
    }
}

fn read_upload(req: &mut Request, path: &str) -> Result<UploadRequest, CloudError> {
    let missing = |name: &str| CloudError::Protocol(format!("missing header {name}"));
    let signature = header_value(req, HEADER_SIGNATURE).ok_or_else(|| missing(HEADER_SIGNATURE))?;
    let nonce = header_value(req, HEADER_NONCE).ok_or_else(|| missing(HEADER_NONCE))?;
    let key_id = header_value(req, HEADER_KEY).ok_or_else(|| missing(HEADER_KEY))?;
    let timestamp_ms = header_value(req, HEADER_TIMESTAMP)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| missing(HEADER_TIMESTAMP))?;
    let mut body = Vec::new();
    req.as_reader()
        .take(MAX_BODY as u64 + 1)
        .read_to_end(&mut body)?;
    if body.len() > MAX_BODY {
        return Err(CloudError::Protocol("body too large".into()));
    }
    Ok(UploadRequest {
        path: path.to_string(),
        body,
        key_id,
        nonce,
        timestamp_ms,
        signature,
    })
}

fn handle(service: &ChoreoService, mut req: Request) {
    let url = req.url().split('?').next().unwrap_or_default().to_string();
    let method = req.method().clone();
    let result = match (&method, url.as_str()) {
        (Method::Get, "/objects/latest") => match service.fetch_latest() {
            Ok(latest) => {
                let resp = Response::from_data(latest.octets).with_status_code(200);
                let resp = with_header(resp, HEADER_REVISION, &latest.revision.to_string());
                req.respond(with_header(resp, "Content-Type", "application/json"))
            }
            Err(e) => req.respond(error_response(&e)),
        },
        (Method::Get, "/manifest") => req.respond(text(200, service.manifest_text())),
        (Method::Put, u) if u.starts_with("/objects/") => {
            let path = &u["/objects/".len()..];
            let outcome = read_upload(&mut req, path).and_then(|up| {
                let ts = up.timestamp_ms;
                service.upload(&up, ts)
            });
            match outcome {
                Ok(rev) => {
                    let resp = with_header(text(201, rev.to_string()), HEADER_REVISION, &rev.to_string());
                    req.respond(resp)
                }
                Err(e) => {
                    log::warn!("rejected upload of {path}: {e}");
                    req.respond(error_response(&e))
                }
            }
        }
        (_, u) if u.starts_with("/objects/") || u == "/manifest" => req.respond(text(405, "method not allowed")),
        _ => req.respond(text(404, "not found")),
    };
    if let Err(e) = result {
        log::warn!("failed to answer {method} {url}: {e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{
        ChoreoCredentials, HttpEndpoint, LatestSource, ObjectStore, QuotaLedger, Uploader,
    };

    fn creds() -> ChoreoCredentials {
        ChoreoCredentials::new("app", "k1", "tok", "k2").unwrap()
    }

    fn start(limit: u32) -> (Arc<ChoreoService>, HttpServer) {
        let svc = Arc::new(
            ChoreoService::new(ObjectStore::in_memory(), creds(), QuotaLedger::new(limit, 1000, 0)).unwrap(),
        );
        let server = HttpServer::start(svc.clone(), "127.0.0.1:0").unwrap();
        (svc, server)
    }

    #[test]
    fn upload_and_fetch_over_http() {
        let (svc, server) = start(2);
        let mut ep = HttpEndpoint::new(&server.url(), Some(creds()));
        assert_eq!(ep.fetch_latest(), Err(CloudError::EmptyStore));
        assert_eq!(ep.upload("inventory_0.json", b"{\"a\":1}", 5), Ok(1));
        assert_eq!(ep.upload("body_0.jpg", &[0xFF, 0xD8, 0xFF, 0xD9], 5), Ok(2));
        let latest = ep.fetch_latest().unwrap();
        assert_eq!((latest.octets.as_slice(), latest.revision), (&b"{\"a\":1}"[..], 1));
        assert_eq!(
            ep.upload("inventory_1.json", b"{}", 6),
            Err(CloudError::QuotaExceeded { limit: 2 })
        );
        assert_eq!(svc.ledger().used, 2);
        assert_eq!(ep.manifest_text().unwrap(), svc.manifest_text());
        server.shutdown();
    }

    #[test]
    fn wrong_credentials_get_401() {
        let (svc, server) = start(5);
        let other = ChoreoCredentials::new("app", "k1", "tok", "zz").unwrap();
        let mut ep = HttpEndpoint::new(&server.url(), Some(other));
        assert_eq!(ep.upload("inventory_0.json", b"x", 1), Err(CloudError::BadSignature));
        assert_eq!(svc.ledger().used, 0);
    }

    #[test]
    fn unsigned_put_is_rejected() {
        let (_svc, server) = start(5);
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        let resp = agent
            .put(format!("{}/objects/inventory_0.json", server.url()))
            .send(&b"x"[..])
            .unwrap();
        assert_eq!(resp.status().as_u16(), 400);
        let resp = agent.get(format!("{}/nowhere", server.url())).call().unwrap();
        assert_eq!(resp.status().as_u16(), 404);
    }
}
