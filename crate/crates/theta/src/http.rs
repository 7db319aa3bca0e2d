//! Local HTTP stand-ins for the live price API and the push service, and
//! the clients that talk to them.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use theta_core::cis::{CisError, Notification, NotificationSink, PriceSource, StationPrices};
use tiny_http::{Header, Method, Response, Server};

use crate::error::{io_err, Error, Result};

/// Wire form of the price API answer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceBody {
    pub e5: Option<f64>,
    pub e10: Option<f64>,
    pub diesel: Option<f64>,
}

impl From<StationPrices> for PriceBody {
    fn from(p: StationPrices) -> Self {
        PriceBody {
            e5: p.e5,
            e10: p.e10,
            diesel: p.diesel,
        }
    }
}

impl From<PriceBody> for StationPrices {
    fn from(p: PriceBody) -> Self {
        StationPrices {
            e5: p.e5,
            e10: p.e10,
            diesel: p.diesel,
        }
    }
}

/// A server thread bound to an ephemeral local port; stopped on drop.
struct Stub {
    server: Arc<Server>,
    addr: SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl Stub {
    fn spawn<F>(handle: F) -> Result<Stub>
    where
        F: Fn(&mut tiny_http::Request) -> Response<std::io::Cursor<Vec<u8>>> + Send + 'static,
    {
        let server = Server::http("127.0.0.1:0").map_err(|e| Error::Http(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Http("stub is not bound to an IP address".into()))?;
        let server = Arc::new(server);
        let srv = server.clone();
        let thread = std::thread::spawn(move || {
            for mut req in srv.incoming_requests() {
                let resp = handle(&mut req);
                let _ = req.respond(resp);
            }
        });
        Ok(Stub {
            server,
            addr,
            thread: Some(thread),
        })
    }

    fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body)
        .with_status_code(status)
        .with_header(header)
}

/// Answers `GET /prices/<station_id>`.
pub struct PriceStub {
    stub: Stub,
    hits: Arc<Mutex<u64>>,
}

impl PriceStub {
    pub fn start(prices: BTreeMap<String, StationPrices>) -> Result<Self> {
        let hits = Arc::new(Mutex::new(0));
        let counter = hits.clone();
        let stub = Stub::spawn(move |req| {
            *counter.lock().expect("hit counter") += 1;
            let id = req.url().strip_prefix("/prices/").map(str::to_string);
            match (req.method(), id) {
                (Method::Get, Some(id)) => match prices.get(&id) {
                    Some(p) => json_response(
                        200,
                        serde_json::to_string(&PriceBody::from(*p)).expect("price body"),
                    ),
                    None => json_response(404, r#"{"error":"unknown station"}"#.into()),
                },
                _ => json_response(404, r#"{"error":"not found"}"#.into()),
            }
        })?;
        Ok(PriceStub { stub, hits })
    }

    pub fn url(&self) -> String {
        self.stub.url()
    }

    pub fn hits(&self) -> u64 {
        *self.hits.lock().expect("hit counter")
    }
}

/// Accepts `POST /notify` and keeps every body.
pub struct NotifyStub {
    stub: Stub,
    received: Arc<Mutex<Vec<Notification>>>,
    fail_next: Arc<Mutex<u32>>,
}

impl NotifyStub {
    pub fn start() -> Result<Self> {
        let received = Arc::new(Mutex::new(Vec::new()));
        let fail_next = Arc::new(Mutex::new(0u32));
        let (log, fail) = (received.clone(), fail_next.clone());
        let stub = Stub::spawn(move |req| {
            if *req.method() != Method::Post || req.url() != "/notify" {
                return json_response(404, r#"{"error":"not found"}"#.into());
            }
            let mut body = String::new();
            if req.as_reader().read_to_string(&mut body).is_err() {
                return json_response(400, r#"{"error":"unreadable body"}"#.into());
            }
            {
                let mut f = fail.lock().expect("failure counter");
                if *f > 0 {
                    *f -= 1;
                    return json_response(503, r#"{"error":"unavailable"}"#.into());
                }
            }
            match serde_json::from_str::<Notification>(&body) {
                Ok(n) => {
                    log.lock().expect("notification log").push(n);
                    json_response(200, r#"{"ok":true}"#.into())
                }
                Err(_) => json_response(400, r#"{"error":"bad notification"}"#.into()),
            }
        })?;
        Ok(NotifyStub {
            stub,
            received,
            fail_next,
        })
    }

    pub fn url(&self) -> String {
        self.stub.url()
    }

    /// Makes the next `n` requests fail with 503.
    pub fn fail_next(&self, n: u32) {
        *self.fail_next.lock().expect("failure counter") = n;
    }

    pub fn received(&self) -> Vec<Notification> {
        self.received.lock().expect("notification log").clone()
    }
}

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new()
        .timeout(Duration::from_secs(5))
        .build()
}

/// Live prices over HTTP.
pub struct HttpPriceSource {
    base: String,
    agent: ureq::Agent,
}

impl HttpPriceSource {
    pub fn new(base_url: &str) -> Self {
        HttpPriceSource {
            base: base_url.trim_end_matches('/').to_string(),
            agent: agent(),
        }
    }
}

impl PriceSource for HttpPriceSource {
    fn fetch(&self, station_id: &str) -> std::result::Result<StationPrices, CisError> {
        let url = format!("{}/prices/{station_id}", self.base);
        match self.agent.get(&url).call() {
            Ok(resp) => resp
                .into_json::<PriceBody>()
                .map(StationPrices::from)
                .map_err(|e| CisError::Upstream(e.to_string())),
            Err(ureq::Error::Status(404, _)) => {
                Err(CisError::StationNotFound(station_id.to_string()))
            }
            Err(e) => Err(CisError::Upstream(e.to_string())),
        }
    }
}

/// Delivers notifications with an HTTP POST.
pub struct HttpSink {
    url: String,
    agent: ureq::Agent,
}

impl HttpSink {
    pub fn new(base_url: &str) -> Self {
        HttpSink {
            url: format!("{}/notify", base_url.trim_end_matches('/')),
            agent: agent(),
        }
    }
}

impl NotificationSink for HttpSink {
    fn deliver(&mut self, n: &Notification) -> std::result::Result<(), String> {
        self.agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&n.to_json())
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}

/// Appends one JSON line per notification.
pub struct FileSink {
    out: BufWriter<File>,
}

impl FileSink {
    pub fn create(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(FileSink {
            out: BufWriter::new(f),
        })
    }
}

impl NotificationSink for FileSink {
    fn deliver(&mut self, n: &Notification) -> std::result::Result<(), String> {
        writeln!(self.out, "{}", n.to_json())
            .and_then(|_| self.out.flush())
            .map_err(|e| e.to_string())
    }
}
