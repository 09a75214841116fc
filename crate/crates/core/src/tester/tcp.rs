//! Running scenarios against a live server over TCP.

use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use super::scenario::{Action, Scenario};
use crate::network_model::{ConnId, NetworkEvent, NetworkTrace};
use crate::server::{self, Mutant, ServerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcpConfig {
    /// How long a receive waits when a reply is expected.
    pub reply_timeout: Duration,
    /// How long a receive waits when no reply is expected.
    pub probe: Duration,
    /// How long to wait, once, for unexpected extra bytes at the end.
    pub extra_wait: Duration,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            reply_timeout: Duration::from_secs(2),
            probe: Duration::from_millis(3),
            extra_wait: Duration::from_millis(10),
        }
    }
}

#[derive(Debug, Error)]
pub enum TcpError {
    #[error("could not connect to {addr}: {source}")]
    Connect { addr: SocketAddr, source: io::Error },
    #[error("socket error: {0}")]
    Io(#[from] io::Error),
}

/// The observed client-side trace of one scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpRun {
    pub trace: NetworkTrace,
    pub reply_bytes: usize,
}

struct ClientConn {
    stream: Option<TcpStream>,
    /// Requests sent in full.
    complete: usize,
    received: usize,
}

impl ClientConn {
    fn outstanding(&self, ms: usize) -> usize {
        (self.complete * ms).saturating_sub(self.received)
    }
}

/// Executes the schedule over real sockets. Connection `i` of the scenario
/// is reported as connection id `i + 1`. Missing replies only truncate the
/// trace; failing to connect is an error (the run is inconclusive).
pub fn run_scenario_tcp(sc: &Scenario, addr: SocketAddr, cfg: &TcpConfig) -> Result<TcpRun, TcpError> {
    let ms = sc.message_size;
    let mut conns: Vec<ClientConn> =
        sc.connections.iter().map(|_| ClientConn { stream: None, complete: 0, received: 0 }).collect();
    let mut run = TcpRun { trace: Vec::new(), reply_bytes: 0 };
    let id = |c: usize| ConnId(c as u32 + 1);

    for step in &sc.schedule {
        let c = step.conn;
        match &step.action {
            Action::Open => {
                let stream = TcpStream::connect(addr).map_err(|source| TcpError::Connect { addr, source })?;
                stream.set_nodelay(true)?;
                conns[c].stream = Some(stream);
                run.trace.push(NetworkEvent::NewConnection(id(c)));
            }
            Action::Send { msg, start, end } => {
                let Some(stream) = conns[c].stream.as_mut() else { continue };
                let bytes = &sc.connections[c][*msg][*start..*end];
                if stream.write_all(bytes).is_err() {
                    // The server dropped the connection; nothing was observed.
                    conns[c].stream = None;
                    continue;
                }
                run.trace.extend(bytes.iter().map(|&b| NetworkEvent::ToServer(id(c), b)));
                if *end == ms {
                    conns[c].complete += 1;
                }
            }
            Action::Recv { max } => {
                let wait = if conns[c].outstanding(ms) > 0 { cfg.reply_timeout } else { cfg.probe };
                receive(&mut conns[c], id(c), *max, wait, &mut run)?;
            }
            Action::Close => {
                if let Some(stream) = conns[c].stream.take() {
                    let _ = stream.shutdown(Shutdown::Both);
                }
            }
        }
    }

    // Drain expected replies while they keep coming, then listen briefly
    // for bytes nobody asked for.
    for (c, conn) in conns.iter_mut().enumerate() {
        while conn.outstanding(ms) > 0 {
            let want = conn.outstanding(ms);
            if receive(conn, id(c), want, cfg.reply_timeout, &mut run)? == 0 {
                break;
            }
        }
    }
    std::thread::sleep(cfg.extra_wait);
    for (c, conn) in conns.iter_mut().enumerate() {
        if let Some(stream) = &conn.stream {
            stream.set_nonblocking(true)?;
        }
        while receive(conn, id(c), ms.max(64), Duration::ZERO, &mut run)? > 0 {}
    }
    Ok(run)
}

/// One receive of at most `max` bytes, waiting up to `wait`. Returns the
/// number of bytes observed.
fn receive(conn: &mut ClientConn, id: ConnId, max: usize, wait: Duration, run: &mut TcpRun) -> Result<usize, TcpError> {
    let Some(stream) = conn.stream.as_mut() else { return Ok(0) };
    if !wait.is_zero() {
        stream.set_read_timeout(Some(wait))?;
    }
    let mut buf = vec![0u8; max];
    match stream.read(&mut buf) {
        Ok(0) => {
            conn.stream = None;
            Ok(0)
        }
        Ok(k) => {
            run.trace.extend(buf[..k].iter().map(|&b| NetworkEvent::FromServer(id, b)));
            conn.received += k;
            run.reply_bytes += k;
            Ok(k)
        }
        Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted) => Ok(0),
        Err(e) if matches!(e.kind(), ErrorKind::ConnectionReset | ErrorKind::ConnectionAborted) => {
            conn.stream = None;
            Ok(0)
        }
        Err(e) => Err(e.into()),
    }
}

/// How to start a fresh server for each scenario.
#[derive(Debug, Clone)]
pub enum Launcher {
    /// Spawn the `swapnet` executable at this path with `serve --port 0`.
    Process(PathBuf),
    /// Run the server on a thread of this process.
    InProcess,
}

/// A running server; stopped when dropped.
pub struct ServerHandle {
    pub addr: SocketAddr,
    inner: HandleKind,
}

enum HandleKind {
    Child(Child),
    Thread(Arc<AtomicBool>, Option<JoinHandle<io::Result<()>>>),
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        match &mut self.inner {
            HandleKind::Child(child) => {
                let _ = child.kill();
                let _ = child.wait();
            }
            HandleKind::Thread(stop, handle) => {
                stop.store(true, Ordering::Relaxed);
                if let Some(h) = handle.take() {
                    let _ = h.join();
                }
            }
        }
    }
}

impl Launcher {
    pub fn launch(&self, message_size: usize, mutant: Option<Mutant>) -> io::Result<ServerHandle> {
        match self {
            Launcher::Process(exe) => {
                let mut cmd = Command::new(exe);
                cmd.args([
                    "serve",
                    "--port",
                    "0",
                    "--message-size",
                    &message_size.to_string(),
                    "--poll-timeout-ms",
                    "10",
                ]);
                if let Some(m) = mutant {
                    cmd.args(["--mutant", &m.id().to_string()]);
                }
                // Only explicit flags configure the child.
                for (var, _) in std::env::vars_os() {
                    if var.to_string_lossy().starts_with("SWAP_") {
                        cmd.env_remove(var);
                    }
                }
                let mut child = cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::inherit()).spawn()?;
                let stdout = child.stdout.take().expect("piped stdout");
                let mut line = String::new();
                BufReader::new(stdout).read_line(&mut line)?;
                let addr = line.trim().strip_prefix("listening on ").and_then(|a| a.parse().ok()).ok_or_else(|| {
                    let _ = child.kill();
                    io::Error::other(format!("unexpected server banner {line:?}"))
                })?;
                Ok(ServerHandle { addr, inner: HandleKind::Child(child) })
            }
            Launcher::InProcess => {
                let cfg = ServerConfig {
                    addr: SocketAddr::from(([127, 0, 0, 1], 0)),
                    message_size,
                    mutant,
                    poll_timeout_ms: 10,
                    ..ServerConfig::default()
                };
                let mut server = server::bind(cfg)?;
                let addr = server.local_addr()?;
                let stop = Arc::new(AtomicBool::new(false));
                let flag = stop.clone();
                let handle = std::thread::spawn(move || server.run(&flag));
                Ok(ServerHandle { addr, inner: HandleKind::Thread(stop, Some(handle)) })
            }
        }
    }
}
