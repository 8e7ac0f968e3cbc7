//! Minimal HTTP forward proxy that applies boundary decisions before any
//! byte reaches the upstream host.
//!
//! Supports `CONNECT host:port` tunnels and absolute-form `http://` requests.
//! Every decision is appended to a JSON-lines log; repeated identical blocks
//! within the coalescing window collapse into one line carrying a count.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

use super::{
    classify_address, decide, AddressClass, BoundaryDecision, DecisionKind, LearnCache, NbsMode,
    Target,
};

pub const REASON_HEADER: &str = "X-Nbs-Reason";
const MAX_HEAD: usize = 64 * 1024;

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    pub listen: SocketAddr,
    pub mode: NbsMode,
    /// Class of the network the pages behind this proxy were served from.
    pub origin_class: AddressClass,
    pub log_path: Option<PathBuf>,
    pub coalesce_window: Duration,
    pub connect_timeout: Duration,
}

impl ProxyConfig {
    pub fn new(listen: SocketAddr, mode: NbsMode) -> Self {
        Self {
            listen,
            mode,
            origin_class: AddressClass::Public,
            log_path: None,
            coalesce_window: Duration::from_secs(10),
            connect_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLogLine {
    pub t: String,
    pub host: String,
    pub class: Option<AddressClass>,
    pub decision: DecisionKind,
    pub reason: String,
    pub coalesced: u64,
}

struct Window {
    opened: Instant,
    suppressed: u64,
    line: DecisionLogLine,
}

struct LogState {
    file: Option<File>,
    windows: HashMap<(String, Option<AddressClass>), Window>,
}

struct DecisionLog {
    window: Duration,
    state: Mutex<LogState>,
}

impl DecisionLog {
    fn open(path: Option<&PathBuf>, window: Duration) -> io::Result<Self> {
        let file = match path {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p)?),
            None => None,
        };
        Ok(Self {
            window,
            state: Mutex::new(LogState {
                file,
                windows: HashMap::new(),
            }),
        })
    }

    fn write_line(file: &mut Option<File>, line: &DecisionLogLine) {
        if let Some(f) = file {
            let mut text = serde_json::to_string(line).expect("log line serializes");
            text.push('\n');
            let _ = f.write_all(text.as_bytes()).and_then(|_| f.flush());
        }
    }

    fn record(&self, host: &str, decision: &BoundaryDecision) {
        let line = DecisionLogLine {
            t: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            host: host.to_string(),
            class: decision.target_class,
            decision: decision.kind,
            reason: decision.reason.clone(),
            coalesced: 1,
        };
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let st = &mut *st;
        if decision.kind != DecisionKind::Block {
            Self::write_line(&mut st.file, &line);
            return;
        }
        let key = (line.host.clone(), line.class);
        let now = Instant::now();
        if let Some(w) = st.windows.get_mut(&key) {
            if now.duration_since(w.opened) < self.window {
                w.suppressed += 1;
                return;
            }
            if w.suppressed > 0 {
                let mut summary = w.line.clone();
                summary.coalesced = w.suppressed;
                Self::write_line(&mut st.file, &summary);
            }
        }
        Self::write_line(&mut st.file, &line);
        st.windows.insert(
            key,
            Window {
                opened: now,
                suppressed: 0,
                line,
            },
        );
    }

    /// Emits summaries for windows that have closed. With `all`, every open
    /// window is closed.
    fn flush(&self, all: bool) {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let st = &mut *st;
        let now = Instant::now();
        let window = self.window;
        let file = &mut st.file;
        st.windows.retain(|_, w| {
            let expired = all || now.duration_since(w.opened) >= window;
            if expired && w.suppressed > 0 {
                let mut summary = w.line.clone();
                summary.t = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
                summary.coalesced = w.suppressed;
                Self::write_line(file, &summary);
            }
            !expired
        });
    }
}

impl Drop for DecisionLog {
    fn drop(&mut self) {
        self.flush(true);
    }
}

struct Shared {
    cfg: ProxyConfig,
    cache: LearnCache,
    log: DecisionLog,
}

pub struct Proxy {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Proxy {
    pub async fn bind(cfg: ProxyConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(cfg.listen).await?;
        let log = DecisionLog::open(cfg.log_path.as_ref(), cfg.coalesce_window)?;
        Ok(Self {
            listener,
            shared: Arc::new(Shared {
                cfg,
                cache: LearnCache::new(),
                log,
            }),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails.
    pub async fn serve(self) -> io::Result<()> {
        let ticker = {
            let weak = Arc::downgrade(&self.shared);
            tokio::spawn(async move {
                let mut iv = tokio::time::interval(Duration::from_millis(500));
                loop {
                    iv.tick().await;
                    match weak.upgrade() {
                        Some(s) => s.log.flush(false),
                        None => break,
                    }
                }
            })
        };
        let result = loop {
            let (sock, _) = match self.listener.accept().await {
                Ok(c) => c,
                Err(e) => break Err(e),
            };
            let shared = Arc::clone(&self.shared);
            tokio::spawn(async move {
                let _ = handle(sock, shared).await;
            });
        };
        ticker.abort();
        result
    }
}

pub async fn run_proxy(cfg: ProxyConfig) -> io::Result<()> {
    Proxy::bind(cfg).await?.serve().await
}

struct Request {
    connect: bool,
    host: String,
    port: u16,
    /// Bytes to send upstream before splicing: the rewritten head plus any
    /// body bytes already read. Empty for CONNECT.
    upstream_head: Vec<u8>,
}

fn find_head_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

fn parse_request(buf: &[u8], head_end: usize) -> Result<Request, &'static str> {
    let head = std::str::from_utf8(&buf[..head_end]).map_err(|_| "request head is not UTF-8")?;
    let mut lines = head.split("\r\n");
    let request_line = lines.next().ok_or("empty request")?;
    let mut parts = request_line.split(' ');
    let (method, target, version) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(m), Some(t), Some(v), None) if !m.is_empty() => (m, t, v),
        _ => return Err("malformed request line"),
    };
    let headers: Vec<&str> = lines.filter(|l| !l.is_empty()).collect();

    if method.eq_ignore_ascii_case("CONNECT") {
        let t = Target::parse(target).map_err(|_| "malformed CONNECT target")?;
        let port = t.port.ok_or("CONNECT target needs a port")?;
        return Ok(Request {
            connect: true,
            host: t.host,
            port,
            upstream_head: Vec::new(),
        });
    }

    let url = url::Url::parse(target)
        .map_err(|_| "proxy requests must use absolute-form http:// URLs")?;
    if url.scheme() != "http" {
        return Err("only http:// URLs are proxied; use CONNECT for TLS");
    }
    let host = match url.host().ok_or("URL has no host")? {
        url::Host::Domain(d) => d.trim_end_matches('.').to_ascii_lowercase(),
        url::Host::Ipv4(a) => a.to_string(),
        url::Host::Ipv6(a) => a.to_string(),
    };
    let port = url.port_or_known_default().unwrap_or(80);
    let mut path = url.path().to_string();
    if let Some(q) = url.query() {
        path.push('?');
        path.push_str(q);
    }

    let mut out = format!("{method} {path} {version}\r\n");
    let mut saw_host = false;
    for h in headers {
        let name = h
            .split(':')
            .next()
            .unwrap_or("")
            .trim()
            .to_ascii_lowercase();
        match name.as_str() {
            "proxy-connection" | "proxy-authorization" | "connection" | "keep-alive" => continue,
            "host" => saw_host = true,
            _ => {}
        }
        out.push_str(h);
        out.push_str("\r\n");
    }
    if !saw_host {
        out.push_str(&format!("Host: {}\r\n", url.host_str().unwrap_or(&host)));
    }
    out.push_str("Connection: close\r\n\r\n");
    let mut upstream_head = out.into_bytes();
    upstream_head.extend_from_slice(&buf[head_end..]);
    Ok(Request {
        connect: false,
        host,
        port,
        upstream_head,
    })
}

fn header_safe(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii() && !c.is_ascii_control() {
                c
            } else {
                ' '
            }
        })
        .collect()
}

async fn respond(
    sock: &mut TcpStream,
    status: &str,
    header: Option<(&str, &str)>,
    body: &str,
) -> io::Result<()> {
    let mut resp = format!("HTTP/1.1 {status}\r\n");
    if let Some((name, value)) = header {
        resp.push_str(&format!("{name}: {}\r\n", header_safe(value)));
    }
    resp.push_str(&format!(
        "Content-Type: text/plain; charset=utf-8\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    ));
    sock.write_all(resp.as_bytes()).await?;
    sock.shutdown().await
}

async fn resolve(host: &str, port: u16) -> io::Result<Vec<SocketAddr>> {
    if let Ok(ip) = host.parse::<IpAddr>() {
        return Ok(vec![SocketAddr::new(ip, port)]);
    }
    let addrs: Vec<SocketAddr> = tokio::net::lookup_host((host, port)).await?.collect();
    if addrs.is_empty() {
        return Err(io::Error::new(io::ErrorKind::NotFound, "no addresses"));
    }
    Ok(addrs)
}

async fn connect_any(addrs: &[SocketAddr], timeout: Duration) -> io::Result<TcpStream> {
    let mut last = io::Error::new(io::ErrorKind::NotFound, "no addresses");
    for a in addrs {
        match tokio::time::timeout(timeout, TcpStream::connect(a)).await {
            Ok(Ok(s)) => return Ok(s),
            Ok(Err(e)) => last = e,
            Err(_) => last = io::Error::new(io::ErrorKind::TimedOut, "connect timed out"),
        }
    }
    Err(last)
}

async fn handle(mut sock: TcpStream, shared: Arc<Shared>) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4096);
    let head_end = loop {
        if let Some(end) = find_head_end(&buf) {
            break end;
        }
        if buf.len() > MAX_HEAD {
            return respond(
                &mut sock,
                "431 Request Header Fields Too Large",
                None,
                "request head too large\n",
            )
            .await;
        }
        let mut chunk = [0u8; 4096];
        let n = sock.read(&mut chunk).await?;
        if n == 0 {
            return Ok(());
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let req = match parse_request(&buf, head_end) {
        Ok(r) => r,
        Err(msg) => return respond(&mut sock, "400 Bad Request", None, &format!("{msg}\n")).await,
    };
    let cfg = &shared.cfg;

    let upstream = match cfg.mode {
        NbsMode::PreResolve => {
            let addrs = match resolve(&req.host, req.port).await {
                Ok(a) => a,
                Err(e) => {
                    let msg = format!("cannot resolve {}: {e}", req.host);
                    return respond(&mut sock, "502 Bad Gateway", None, &format!("{msg}\n")).await;
                }
            };
            // Every resolved address must pass; a mixed answer is blocked.
            let decisions: Vec<BoundaryDecision> = addrs
                .iter()
                .map(|a| {
                    decide(
                        cfg.mode,
                        cfg.origin_class,
                        &req.host,
                        Some(a.ip()),
                        &shared.cache,
                    )
                })
                .collect::<Result<_, _>>()
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
            if let Some(block) = decisions.iter().find(|d| d.is_block()) {
                shared.log.record(&req.host, block);
                let body = format!("{}\n", block.reason);
                return respond(
                    &mut sock,
                    "403 Forbidden",
                    Some((REASON_HEADER, &block.reason)),
                    &body,
                )
                .await;
            }
            shared.log.record(&req.host, &decisions[0]);
            connect_any(&addrs, cfg.connect_timeout).await
        }
        NbsMode::LearnOnReply => {
            let d = decide(cfg.mode, cfg.origin_class, &req.host, None, &shared.cache)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
            if d.is_block() {
                shared.log.record(&req.host, &d);
                let body = format!("{}\n", d.reason);
                return respond(
                    &mut sock,
                    "403 Forbidden",
                    Some((REASON_HEADER, &d.reason)),
                    &body,
                )
                .await;
            }
            let conn = match resolve(&req.host, req.port).await {
                Ok(addrs) => connect_any(&addrs, cfg.connect_timeout).await,
                Err(e) => Err(e),
            };
            if let Ok(s) = &conn {
                if let Ok(peer) = s.peer_addr() {
                    let mut logged = d.clone();
                    if d.kind == DecisionKind::AllowAndLearn {
                        let class = shared.cache.observe_reply(&req.host, peer.ip());
                        logged.target_class = Some(class);
                        logged.reason = format!("{}; learned {class} ({})", d.reason, peer.ip());
                    } else {
                        logged.target_class = Some(classify_address(peer.ip()));
                    }
                    shared.log.record(&req.host, &logged);
                }
            }
            conn
        }
    };

    let mut upstream = match upstream {
        Ok(s) => s,
        Err(e) => {
            let msg = format!("upstream {}:{} unreachable: {e}", req.host, req.port);
            return respond(&mut sock, "502 Bad Gateway", None, &format!("{msg}\n")).await;
        }
    };
    if req.connect {
        sock.write_all(b"HTTP/1.1 200 Connection Established\r\n\r\n")
            .await?;
        let rest = &buf[head_end..];
        if !rest.is_empty() {
            upstream.write_all(rest).await?;
        }
    } else {
        upstream.write_all(&req.upstream_head).await?;
    }
    tokio::io::copy_bidirectional(&mut sock, &mut upstream).await?;
    Ok(())
}
