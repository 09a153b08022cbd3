use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::sync::Arc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::protocol::Timestamp;

use super::{Channel, ServerEndpoint, ServerEvent};

const MAX_DATAGRAM: usize = 2048;

/// Client channel over a connected UDP socket, timestamped with wall-clock time.
pub struct UdpChannel {
    socket: UdpSocket,
    started: Instant,
}

impl UdpChannel {
    pub fn connect(server: SocketAddr) -> io::Result<Self> {
        let local: SocketAddr = if server.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let socket = UdpSocket::bind(local)?;
        socket.connect(server)?;
        Ok(UdpChannel {
            socket,
            started: Instant::now(),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl Channel for UdpChannel {
    fn clock(&self) -> Timestamp {
        Timestamp::now()
    }

    fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        self.socket.send(datagram).map(|_| ())
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        self.socket.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        let mut buf = [0u8; MAX_DATAGRAM];
        match self.socket.recv(&mut buf) {
            Ok(n) => Ok(Some(buf[..n].to_vec())),
            // A refused port shows up as an error on the next read; keep
            // waiting so the retransmission schedule decides when to give up.
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut | io::ErrorKind::ConnectionRefused
                ) =>
            {
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

pub type EventSink = Arc<dyn Fn(SocketAddr, &ServerEvent) + Send + Sync>;

/// Running UDP server; dropping the handle stops the workers.
pub struct UdpServerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl UdpServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    /// Blocks until the workers exit, which only happens after `shutdown`
    /// from another handle or an I/O error.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    fn stop_workers(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for UdpServerHandle {
    fn drop(&mut self) {
        self.stop_workers();
    }
}

/// Binds `listen` and serves handshakes on `workers` threads sharing one
/// socket. Each worker gets its own RNG, seeded from `seed + index` when a
/// seed is given.
pub fn spawn_server(
    listen: SocketAddr,
    endpoint: Arc<ServerEndpoint>,
    workers: usize,
    seed: Option<u64>,
    sink: Option<EventSink>,
) -> io::Result<UdpServerHandle> {
    let socket = UdpSocket::bind(listen)?;
    socket.set_read_timeout(Some(Duration::from_millis(100)))?;
    let local_addr = socket.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let mut handles = Vec::new();
    for index in 0..workers.max(1) {
        let socket = socket.try_clone()?;
        let endpoint = endpoint.clone();
        let stop = stop.clone();
        let sink = sink.clone();
        let mut rng = match seed {
            Some(s) => ChaCha20Rng::seed_from_u64(s.wrapping_add(index as u64)),
            None => ChaCha20Rng::from_os_rng(),
        };
        handles.push(std::thread::spawn(move || {
            let mut buf = [0u8; MAX_DATAGRAM];
            while !stop.load(Ordering::SeqCst) {
                let (n, source) = match socket.recv_from(&mut buf) {
                    Ok(v) => v,
                    Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                    Err(_) => continue,
                };
                let handled = endpoint.handle_datagram(&buf[..n], source, Timestamp::now(), &mut rng);
                if let Some(reply) = &handled.reply {
                    let _ = socket.send_to(reply, source);
                }
                if let Some(sink) = &sink {
                    sink(source, &handled.event);
                }
            }
        }));
    }
    Ok(UdpServerHandle {
        local_addr,
        stop,
        workers: handles,
    })
}
