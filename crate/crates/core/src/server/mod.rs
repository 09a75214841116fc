//! The swap server: one process, one thread, one readiness loop.
//!
//! Each loop iteration polls the listener and every live connection, accepts
//! at most one new connection, and then gives every ready connection one
//! nonblocking `recv` or `send`. A connection alternates between receiving
//! a request of exactly `message_size` bytes and sending the reply.

mod mutants;

pub use mutants::{mutant_registry, Mutant, UnknownMutant, ALL_MUTANTS};

use std::fs::File;
use std::io::{self, BufWriter, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::os::fd::AsRawFd;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use crate::impl_model::{ConnState, Connection};
use crate::network_model::{ConnId, NetworkEvent};
use crate::trace_file::render_event;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub message_size: usize,
    pub max_connections: usize,
    pub poll_timeout_ms: i32,
    pub mutant: Option<Mutant>,
    /// Where to write the server-side network trace, if anywhere.
    pub log_effects: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8421)),
            message_size: crate::swap_spec::DEFAULT_MESSAGE_SIZE,
            max_connections: 64,
            poll_timeout_ms: 50,
            mutant: None,
            log_effects: None,
        }
    }
}

struct LiveConnection {
    stream: TcpStream,
    conn: Connection,
    bytes_in: usize,
    bytes_out: usize,
    /// Set once a reply went out for the request in progress.
    replied_early: bool,
}

pub struct Server {
    listener: TcpListener,
    config: ServerConfig,
    /// Most recently accepted first.
    conns: Vec<LiveConnection>,
    last_full_msg: Vec<u8>,
    next_id: u32,
    accepts: usize,
    /// Scratch receive buffer; deliberately not cleared between calls.
    scratch: Vec<u8>,
    log: Option<BufWriter<File>>,
}

/// Binds the listening socket. Port 0 picks a free port; see
/// [`Server::local_addr`].
pub fn bind(config: ServerConfig) -> io::Result<Server> {
    if config.message_size == 0 {
        return Err(io::Error::new(ErrorKind::InvalidInput, "message size must be at least 1"));
    }
    let listener = TcpListener::bind(config.addr)?;
    listener.set_nonblocking(true)?;
    let log = match &config.log_effects {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    };
    let n = config.message_size;
    let last_full_msg = match config.mutant {
        Some(Mutant::NonzeroInitialStore) => vec![b'*'; n],
        _ => vec![0; n],
    };
    Ok(Server { listener, config, conns: Vec::new(), last_full_msg, next_id: 1, accepts: 0, scratch: vec![0; n], log })
}

impl Server {
    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Runs until `stop` is set.
    pub fn run(&mut self, stop: &AtomicBool) -> io::Result<()> {
        while !stop.load(Ordering::Relaxed) {
            self.iterate()?;
        }
        if let Some(log) = &mut self.log {
            log.flush()?;
        }
        Ok(())
    }

    /// Runs forever.
    pub fn serve(&mut self) -> io::Result<()> {
        self.run(&AtomicBool::new(false))
    }

    fn iterate(&mut self) -> io::Result<()> {
        let listening = self.conns.len() < self.config.max_connections;
        let mut fds = Vec::with_capacity(self.conns.len() + 1);
        fds.push(libc::pollfd {
            fd: self.listener.as_raw_fd(),
            events: if listening { libc::POLLIN } else { 0 },
            revents: 0,
        });
        for c in &self.conns {
            let events = match c.conn.state {
                ConnState::Sending => libc::POLLOUT,
                _ => libc::POLLIN,
            };
            fds.push(libc::pollfd { fd: c.stream.as_raw_fd(), events, revents: 0 });
        }
        // SAFETY: `fds` is a valid, exclusively borrowed array of pollfd.
        let n = unsafe { libc::poll(fds.as_mut_ptr(), fds.len() as libc::nfds_t, self.config.poll_timeout_ms) };
        if n < 0 {
            let err = io::Error::last_os_error();
            return if err.kind() == ErrorKind::Interrupted { Ok(()) } else { Err(err) };
        }
        let ready: Vec<bool> = fds[1..].iter().map(|p| p.revents != 0).collect();
        let listener_ready = fds[0].revents != 0;

        // A new connection goes to the head of the list and was not part of
        // this poll, so the polled ones shift by one.
        let shift = if listener_ready { self.accept_one()? } else { 0 };
        for (i, is_ready) in ready.into_iter().enumerate() {
            if is_ready && self.conns[i + shift].conn.state != ConnState::Deleted {
                self.process(i + shift);
            }
        }
        self.conns.retain(|c| c.conn.state != ConnState::Deleted);
        if let Some(log) = &mut self.log {
            log.flush()?;
        }
        Ok(())
    }

    fn record(&mut self, ev: NetworkEvent) {
        if let Some(log) = &mut self.log {
            let _ = writeln!(log, "{}", render_event(&ev));
        }
    }

    /// Accepts at most one connection; returns how many were accepted.
    fn accept_one(&mut self) -> io::Result<usize> {
        match self.listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(true)?;
                let _ = stream.set_nodelay(true);
                let id = ConnId(self.next_id);
                self.next_id += 1;
                self.accepts += 1;
                self.record(NetworkEvent::NewConnection(id));
                let live = LiveConnection {
                    stream,
                    conn: Connection::fresh(id),
                    bytes_in: 0,
                    bytes_out: 0,
                    replied_early: false,
                };
                self.conns.insert(0, live);
                Ok(1)
            }
            Err(e)
                if matches!(
                    e.kind(),
                    ErrorKind::WouldBlock | ErrorKind::Interrupted | ErrorKind::ConnectionAborted
                ) =>
            {
                Ok(0)
            }
            Err(e) => Err(e),
        }
    }

    fn mutant(&self) -> Option<Mutant> {
        self.config.mutant
    }

    fn process(&mut self, i: usize) {
        match self.conns[i].conn.state {
            ConnState::Recving => self.recv_on(i),
            ConnState::Sending => self.send_on(i),
            ConnState::Deleted => {}
        }
    }

    fn recv_on(&mut self, i: usize) {
        let n = self.config.message_size;
        let have = self.conns[i].conn.request_buf.len();
        let want = match self.mutant() {
            Some(Mutant::CompleteOneByteEarly) => (n - 1).max(1) - have,
            Some(Mutant::OffsetNotReset) => n - have % n,
            _ => n - have,
        };
        let want = want.min(self.scratch.len());
        let got = match self.conns[i].stream.read(&mut self.scratch[..want]) {
            Ok(0) if self.mutant() == Some(Mutant::ZeroRecvAsData) => 1,
            Ok(0) => return self.delete(i),
            Ok(k) => k,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::Interrupted) => return,
            Err(_) => return self.delete(i),
        };
        let data = self.scratch[..got].to_vec();
        let id = self.conns[i].conn.conn_id;
        for &b in &data {
            self.record(NetworkEvent::ToServer(id, b));
        }
        let live = &mut self.conns[i];
        live.bytes_in += got;
        live.conn.request_buf.extend_from_slice(&data);
        let len = live.conn.request_buf.len();
        let complete = match self.mutant() {
            Some(Mutant::CompleteOneByteEarly) => len >= (n - 1).max(1),
            Some(Mutant::OffsetNotReset) => len.is_multiple_of(n),
            _ => len >= n,
        };
        if !complete {
            if self.mutant() == Some(Mutant::ReplyBeforeComplete) && !self.conns[i].replied_early {
                let reply = self.last_full_msg.clone();
                let live = &mut self.conns[i];
                live.replied_early = true;
                live.conn.response_buf = reply;
                live.conn.state = ConnState::Sending;
            }
            return;
        }
        self.complete_request(i);
    }

    fn complete_request(&mut self, i: usize) {
        let n = self.config.message_size;
        let live = &mut self.conns[i];
        let request = match self.config.mutant {
            Some(Mutant::OffsetNotReset) => live.conn.request_buf[..n].to_vec(),
            _ => std::mem::take(&mut live.conn.request_buf),
        };
        let replied_early = std::mem::take(&mut live.replied_early);
        let frozen = self.config.mutant == Some(Mutant::FreezeAfterTwoAccepts) && self.accepts >= 2;
        let mut reply = match self.config.mutant {
            Some(Mutant::EchoRequest) => request.clone(),
            _ => self.last_full_msg.clone(),
        };
        match self.config.mutant {
            Some(Mutant::StoreNeverUpdated) => {}
            Some(Mutant::StoreBeforeReply) => {
                self.last_full_msg = request;
                reply = self.last_full_msg.clone();
            }
            _ if frozen => {}
            _ => self.last_full_msg = request,
        }
        match self.config.mutant {
            Some(Mutant::DuplicateReply) => reply.extend(reply.clone()),
            Some(Mutant::DropLastReplyByte) => {
                reply.pop();
            }
            _ => {}
        }
        if self.config.mutant == Some(Mutant::ReplyBeforeComplete) && replied_early {
            return;
        }
        if self.config.mutant == Some(Mutant::ReplyToNewestOther) {
            let me = self.conns[i].conn.conn_id;
            if let Some(j) = self.conns.iter().position(|c| c.conn.conn_id != me && c.conn.state != ConnState::Deleted)
            {
                self.send_now(j, &reply);
                return;
            }
        }
        if reply.is_empty() {
            return;
        }
        let live = &mut self.conns[i];
        live.conn.response_buf = reply;
        live.conn.state = ConnState::Sending;
    }

    /// Best-effort immediate write, used only by the misrouting mutant.
    fn send_now(&mut self, j: usize, bytes: &[u8]) {
        let sent = self.conns[j].stream.write(bytes).unwrap_or(0);
        let id = self.conns[j].conn.conn_id;
        for &b in &bytes[..sent] {
            self.record(NetworkEvent::FromServer(id, b));
        }
        self.conns[j].bytes_out += sent;
    }

    fn send_on(&mut self, i: usize) {
        let live = &mut self.conns[i];
        let sent = match live.stream.write(&live.conn.response_buf) {
            Ok(k) => k,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::Interrupted) => return,
            Err(_) => return self.delete(i),
        };
        let id = live.conn.conn_id;
        let bytes: Vec<u8> = live.conn.response_buf.drain(..sent).collect();
        live.bytes_out += sent;
        if live.conn.response_buf.is_empty() {
            live.conn.state = ConnState::Recving;
        }
        for b in bytes {
            self.record(NetworkEvent::FromServer(id, b));
        }
    }

    fn delete(&mut self, i: usize) {
        let live = &mut self.conns[i];
        live.conn.state = ConnState::Deleted;
        let _ = live.stream.shutdown(std::net::Shutdown::Both);
    }
}
