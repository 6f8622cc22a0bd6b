use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use super::ConnError;

/// Datagram transport under a connection.
pub trait DatagramIo: Send {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()>;

    /// Waits up to `timeout` for one datagram.
    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>>;
}

pub fn resolve(target: &str) -> Result<SocketAddr, ConnError> {
    target
        .to_socket_addrs()
        .map_err(|e| ConnError::Resolve(format!("{target}: {e}")))?
        .next()
        .ok_or_else(|| ConnError::Resolve(format!("{target}: no addresses")))
}

/// A UDP socket connected to one peer.
#[derive(Debug)]
pub struct UdpIo {
    socket: UdpSocket,
    buf: Vec<u8>,
}

impl UdpIo {
    pub fn connect(peer: SocketAddr) -> Result<Self, ConnError> {
        let local: SocketAddr = if peer.is_ipv4() {
            "0.0.0.0:0".parse().expect("valid literal")
        } else {
            "[::]:0".parse().expect("valid literal")
        };
        let socket = UdpSocket::bind(local).map_err(|e| ConnError::Bind(e.to_string()))?;
        socket.connect(peer).map_err(|e| ConnError::Bind(e.to_string()))?;
        Ok(UdpIo { socket, buf: vec![0u8; 65536] })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.socket.local_addr()
    }
}

impl DatagramIo for UdpIo {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        match self.socket.send(datagram) {
            Ok(_) => Ok(()),
            // An ICMP error from an earlier send; the datagram itself is lost.
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => Ok(()),
            Err(e) => Err(e),
        }
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        let timeout = timeout.max(Duration::from_millis(1));
        self.socket.set_read_timeout(Some(timeout))?;
        match self.socket.recv(&mut self.buf) {
            Ok(n) => Ok(Some(self.buf[..n].to_vec())),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Ok(None)
            }
            Err(e) if e.kind() == io::ErrorKind::ConnectionRefused => {
                // Nothing listens there: behave like silence.
                std::thread::sleep(timeout);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }
}

/// In-process transport for tests: records sends and replays scripted input.
#[derive(Debug, Default)]
pub struct MemoryIo {
    pub sent: Vec<Vec<u8>>,
    pub inbound: VecDeque<Vec<u8>>,
}

impl DatagramIo for MemoryIo {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        self.sent.push(datagram.to_vec());
        Ok(())
    }

    fn recv(&mut self, _timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        Ok(self.inbound.pop_front())
    }
}

/// One end of an in-process datagram pipe.
#[derive(Debug)]
pub struct ChannelIo {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl ChannelIo {
    pub fn pair() -> (ChannelIo, ChannelIo) {
        let (a_tx, b_rx) = std::sync::mpsc::channel();
        let (b_tx, a_rx) = std::sync::mpsc::channel();
        (ChannelIo { tx: a_tx, rx: a_rx }, ChannelIo { tx: b_tx, rx: b_rx })
    }
}

impl DatagramIo for ChannelIo {
    fn send(&mut self, datagram: &[u8]) -> io::Result<()> {
        // A dropped peer is silence, as with UDP.
        let _ = self.tx.send(datagram.to_vec());
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> io::Result<Option<Vec<u8>>> {
        match self.rx.recv_timeout(timeout) {
            Ok(d) => Ok(Some(d)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                std::thread::sleep(timeout);
                Ok(None)
            }
        }
    }
}
