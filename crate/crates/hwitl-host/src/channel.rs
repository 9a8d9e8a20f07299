//! OS-backed channels and the channel spec strings the tools accept.
//!
//! Specs:
//!
//! - `tcp:HOST:PORT` connects a TCP stream.
//! - `pipe:PATH` connects a Unix domain socket, the same-host duplex pipe.
//! - `serial:DEV:BAUD` opens a character device configured raw 8N1.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use hwitl::{Channel, ChannelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("channel spec '{0}' is not tcp:HOST:PORT, pipe:PATH, or serial:DEV:BAUD")]
    Malformed(String),
    #[error("bad port in '{0}'")]
    BadPort(String),
    #[error("bad baud rate in '{0}'")]
    BadBaud(String),
}

/// Parsed channel address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChannelSpec {
    Tcp { host: String, port: u16 },
    Pipe { path: PathBuf },
    Serial { device: PathBuf, baud: u32 },
}

impl FromStr for ChannelSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, SpecError> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| SpecError::Malformed(s.to_string()))?;
        match kind {
            "tcp" => {
                let (host, port) = rest
                    .rsplit_once(':')
                    .ok_or_else(|| SpecError::Malformed(s.to_string()))?;
                let port = port
                    .parse()
                    .map_err(|_| SpecError::BadPort(s.to_string()))?;
                Ok(ChannelSpec::Tcp {
                    host: host.to_string(),
                    port,
                })
            }
            "pipe" => Ok(ChannelSpec::Pipe {
                path: PathBuf::from(rest),
            }),
            "serial" => {
                let (dev, baud) = rest
                    .rsplit_once(':')
                    .ok_or_else(|| SpecError::Malformed(s.to_string()))?;
                let baud = baud
                    .parse()
                    .map_err(|_| SpecError::BadBaud(s.to_string()))?;
                Ok(ChannelSpec::Serial {
                    device: PathBuf::from(dev),
                    baud,
                })
            }
            _ => Err(SpecError::Malformed(s.to_string())),
        }
    }
}

impl std::fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelSpec::Tcp { host, port } => write!(f, "tcp:{host}:{port}"),
            ChannelSpec::Pipe { path } => write!(f, "pipe:{}", path.display()),
            ChannelSpec::Serial { device, baud } => {
                write!(f, "serial:{}:{baud}", device.display())
            }
        }
    }
}

/// Connect as an initiator to the given spec.
pub fn connect(spec: &ChannelSpec) -> std::io::Result<Box<dyn Channel + Send>> {
    match spec {
        ChannelSpec::Tcp { host, port } => {
            let stream = TcpStream::connect((host.as_str(), *port))?;
            Ok(Box::new(StreamChannel::new(stream)?))
        }
        ChannelSpec::Pipe { path } => {
            #[cfg(unix)]
            {
                let stream = std::os::unix::net::UnixStream::connect(path)?;
                Ok(Box::new(StreamChannel::new(stream)?))
            }
            #[cfg(not(unix))]
            {
                let _ = path;
                Err(std::io::Error::new(
                    std::io::ErrorKind::Unsupported,
                    "pipe channels require unix",
                ))
            }
        }
        ChannelSpec::Serial { device, baud } => {
            #[cfg(unix)]
            {
                Ok(Box::new(serial::SerialChannel::open(device, *baud)?))
            }
            #[cfg(not(unix))]
            {
                let _ = (device, baud);
                Err(std::io::Error::new(
                    std::io::ErrorKind::Unsupported,
                    "serial channels require unix",
                ))
            }
        }
    }
}

/// Open a serial device as a channel, configured raw 8N1 at `baud`.
#[cfg(unix)]
pub fn open_serial(device: &std::path::Path, baud: u32) -> std::io::Result<SerialChannel> {
    SerialChannel::open(device, baud)
}

#[cfg(unix)]
pub use serial::SerialChannel;

/// Anything that is both `Read` and `Write` with settable read timeouts.
pub trait TimedStream: Read + Write + Send {
    fn set_read_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()>;
}

impl TimedStream for TcpStream {
    fn set_read_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

#[cfg(unix)]
impl TimedStream for std::os::unix::net::UnixStream {
    fn set_read_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()> {
        std::os::unix::net::UnixStream::set_read_timeout(self, timeout)
    }
}

/// Channel over any timed byte stream. Bytes that arrive ahead of a failed
/// deadline stay in an internal buffer, so deadlines never lose data.
pub struct StreamChannel<S: TimedStream> {
    stream: S,
    buffered: VecDeque<u8>,
}

impl<S: TimedStream> StreamChannel<S> {
    pub fn new(stream: S) -> std::io::Result<Self> {
        Ok(Self {
            stream,
            buffered: VecDeque::new(),
        })
    }

    pub fn stream(&self) -> &S {
        &self.stream
    }
}

impl<S: TimedStream> Channel for StreamChannel<S> {
    fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError> {
        self.stream.write_all(bytes).map_err(io_to_channel)?;
        self.stream.flush().map_err(io_to_channel)
    }

    fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError> {
        let start = Instant::now();
        let mut scratch = [0u8; 256];
        while self.buffered.len() < buf.len() {
            let remaining = deadline.saturating_sub(start.elapsed());
            if remaining.is_zero() {
                return Err(ChannelError::DeadlineExceeded {
                    delivered: self.buffered.len(),
                    requested: buf.len(),
                });
            }
            // A zero timeout means block forever on most platforms; clamp up.
            self.stream
                .set_read_timeout(Some(remaining.max(Duration::from_millis(1))))
                .map_err(io_to_channel)?;
            match self.stream.read(&mut scratch) {
                Ok(0) => return Err(ChannelError::Closed),
                Ok(n) => self.buffered.extend(&scratch[..n]),
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(io_to_channel(e)),
            }
        }
        for slot in buf.iter_mut() {
            *slot = self.buffered.pop_front().expect("length checked above");
        }
        Ok(())
    }
}

fn io_to_channel(e: std::io::Error) -> ChannelError {
    match e.kind() {
        std::io::ErrorKind::UnexpectedEof
        | std::io::ErrorKind::ConnectionReset
        | std::io::ErrorKind::ConnectionAborted
        | std::io::ErrorKind::BrokenPipe
        | std::io::ErrorKind::NotConnected => ChannelError::Closed,
        _ => ChannelError::Device(e.to_string()),
    }
}

/// In-process duplex channel for tests and examples: two ends connected by
/// byte queues, usable across threads.
pub struct DuplexEnd {
    tx: mpsc::Sender<u8>,
    rx: mpsc::Receiver<u8>,
    buffered: VecDeque<u8>,
}

/// Create a connected pair of in-process channel ends.
pub fn duplex_pair() -> (DuplexEnd, DuplexEnd) {
    let (a_tx, a_rx) = mpsc::channel();
    let (b_tx, b_rx) = mpsc::channel();
    (
        DuplexEnd {
            tx: a_tx,
            rx: b_rx,
            buffered: VecDeque::new(),
        },
        DuplexEnd {
            tx: b_tx,
            rx: a_rx,
            buffered: VecDeque::new(),
        },
    )
}

impl Channel for DuplexEnd {
    fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError> {
        for &b in bytes {
            self.tx.send(b).map_err(|_| ChannelError::Closed)?;
        }
        Ok(())
    }

    fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError> {
        let start = Instant::now();
        while self.buffered.len() < buf.len() {
            let remaining = deadline.saturating_sub(start.elapsed());
            if remaining.is_zero() {
                return Err(ChannelError::DeadlineExceeded {
                    delivered: self.buffered.len(),
                    requested: buf.len(),
                });
            }
            match self.rx.recv_timeout(remaining) {
                Ok(b) => self.buffered.push_back(b),
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => return Err(ChannelError::Closed),
            }
        }
        for slot in buf.iter_mut() {
            *slot = self.buffered.pop_front().expect("length checked above");
        }
        Ok(())
    }
}

#[cfg(unix)]
pub mod serial {
    use super::*;
    use std::fs::{File, OpenOptions};
    use std::os::unix::io::AsRawFd;

    /// Raw 8N1 serial channel over a character device.
    pub struct SerialChannel {
        inner: StreamChannel<SerialStream>,
    }

    pub struct SerialStream {
        file: File,
    }

    impl SerialChannel {
        pub fn open(device: &std::path::Path, baud: u32) -> std::io::Result<Self> {
            let file = OpenOptions::new().read(true).write(true).open(device)?;
            configure_raw_8n1(&file, baud)?;
            Ok(Self {
                inner: StreamChannel::new(SerialStream { file })?,
            })
        }

        /// Drive the RTS flow-control line. The protocol itself never uses
        /// it; some adapters want it asserted.
        pub fn set_rts(&self, asserted: bool) -> std::io::Result<()> {
            self.set_modem_bit(libc::TIOCM_RTS, asserted)
        }

        /// Drive the DTR line.
        pub fn set_dtr(&self, asserted: bool) -> std::io::Result<()> {
            self.set_modem_bit(libc::TIOCM_DTR, asserted)
        }

        fn set_modem_bit(&self, bit: libc::c_int, asserted: bool) -> std::io::Result<()> {
            let fd = self.inner.stream().file.as_raw_fd();
            let request = if asserted {
                libc::TIOCMBIS
            } else {
                libc::TIOCMBIC
            };
            if unsafe { libc::ioctl(fd, request, &bit) } != 0 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        }
    }

    impl Channel for SerialChannel {
        fn send_all(&mut self, bytes: &[u8]) -> Result<(), ChannelError> {
            self.inner.send_all(bytes)
        }

        fn recv_exact(&mut self, buf: &mut [u8], deadline: Duration) -> Result<(), ChannelError> {
            self.inner.recv_exact(buf, deadline)
        }
    }

    impl Read for SerialStream {
        fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
            self.file.read(buf)
        }
    }

    impl Write for SerialStream {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.file.write(buf)
        }

        fn flush(&mut self) -> std::io::Result<()> {
            self.file.flush()
        }
    }

    impl TimedStream for SerialStream {
        fn set_read_timeout(&self, timeout: Option<Duration>) -> std::io::Result<()> {
            // VMIN=0/VTIME gives a read timeout in tenths of a second.
            let fd = self.file.as_raw_fd();
            let mut tio = std::mem::MaybeUninit::<libc::termios>::uninit();
            if unsafe { libc::tcgetattr(fd, tio.as_mut_ptr()) } != 0 {
                return Err(std::io::Error::last_os_error());
            }
            let mut tio = unsafe { tio.assume_init() };
            let deciseconds = timeout
                .map(|t| t.as_millis().div_ceil(100).clamp(1, 255) as libc::cc_t)
                .unwrap_or(0);
            tio.c_cc[libc::VMIN] = 0;
            tio.c_cc[libc::VTIME] = deciseconds;
            if unsafe { libc::tcsetattr(fd, libc::TCSANOW, &tio) } != 0 {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        }
    }

    fn configure_raw_8n1(file: &File, baud: u32) -> std::io::Result<()> {
        let fd = file.as_raw_fd();
        let mut tio = std::mem::MaybeUninit::<libc::termios>::uninit();
        if unsafe { libc::tcgetattr(fd, tio.as_mut_ptr()) } != 0 {
            return Err(std::io::Error::last_os_error());
        }
        let mut tio = unsafe { tio.assume_init() };
        unsafe { libc::cfmakeraw(&mut tio) };
        tio.c_cflag &= !(libc::CSTOPB | libc::PARENB | libc::CSIZE);
        tio.c_cflag |= libc::CS8 | libc::CLOCAL | libc::CREAD;
        let speed = baud_constant(baud).ok_or_else(|| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("unsupported baud rate {baud}"),
            )
        })?;
        unsafe {
            libc::cfsetispeed(&mut tio, speed);
            libc::cfsetospeed(&mut tio, speed);
        }
        tio.c_cc[libc::VMIN] = 0;
        tio.c_cc[libc::VTIME] = 1;
        // TCSAFLUSH also drops whatever arrived before raw mode was set.
        if unsafe { libc::tcsetattr(fd, libc::TCSAFLUSH, &tio) } != 0 {
            return Err(std::io::Error::last_os_error());
        }
        Ok(())
    }

    fn baud_constant(baud: u32) -> Option<libc::speed_t> {
        Some(match baud {
            9_600 => libc::B9600,
            19_200 => libc::B19200,
            38_400 => libc::B38400,
            57_600 => libc::B57600,
            115_200 => libc::B115200,
            230_400 => libc::B230400,
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_parse_and_display() {
        let tcp: ChannelSpec = "tcp:127.0.0.1:7450".parse().unwrap();
        assert_eq!(
            tcp,
            ChannelSpec::Tcp {
                host: "127.0.0.1".into(),
                port: 7450
            }
        );
        assert_eq!(tcp.to_string(), "tcp:127.0.0.1:7450");

        let pipe: ChannelSpec = "pipe:/tmp/hwitl.sock".parse().unwrap();
        assert_eq!(
            pipe,
            ChannelSpec::Pipe {
                path: "/tmp/hwitl.sock".into()
            }
        );

        let serial: ChannelSpec = "serial:/dev/ttyUSB0:115200".parse().unwrap();
        assert_eq!(
            serial,
            ChannelSpec::Serial {
                device: "/dev/ttyUSB0".into(),
                baud: 115_200
            }
        );
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!("tcp:localhost".parse::<ChannelSpec>().is_err());
        assert!("tcp:localhost:notaport".parse::<ChannelSpec>().is_err());
        assert!("carrier-pigeon:coop".parse::<ChannelSpec>().is_err());
        assert!("serial:/dev/ttyUSB0:fast".parse::<ChannelSpec>().is_err());
    }

    #[test]
    fn duplex_pair_moves_bytes_both_ways() {
        let (mut a, mut b) = duplex_pair();
        a.send_all(&[1, 2, 3]).unwrap();
        let mut buf = [0u8; 3];
        b.recv_exact(&mut buf, Duration::from_millis(100)).unwrap();
        assert_eq!(buf, [1, 2, 3]);
        b.send_all(&[9]).unwrap();
        let mut buf = [0u8; 1];
        a.recv_exact(&mut buf, Duration::from_millis(100)).unwrap();
        assert_eq!(buf, [9]);
    }

    #[test]
    fn duplex_deadline_keeps_partial_bytes() {
        let (mut a, mut b) = duplex_pair();
        a.send_all(&[0xAA, 0xBB]).unwrap();
        let mut buf = [0u8; 5];
        let err = b
            .recv_exact(&mut buf, Duration::from_millis(20))
            .unwrap_err();
        assert_eq!(
            err,
            ChannelError::DeadlineExceeded {
                delivered: 2,
                requested: 5
            }
        );
        a.send_all(&[0xCC, 0xDD, 0xEE]).unwrap();
        b.recv_exact(&mut buf, Duration::from_millis(100)).unwrap();
        assert_eq!(buf, [0xAA, 0xBB, 0xCC, 0xDD, 0xEE]);
    }

    #[test]
    fn dropped_peer_surfaces_as_closed() {
        let (mut a, b) = duplex_pair();
        drop(b);
        // Sends fail once the peer is gone.
        assert_eq!(a.send_all(&[1]), Err(ChannelError::Closed));
    }

    #[test]
    fn tcp_stream_channel_round_trips() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut ch = StreamChannel::new(stream).unwrap();
            let mut buf = [0u8; 4];
            ch.recv_exact(&mut buf, Duration::from_secs(2)).unwrap();
            ch.send_all(&buf).unwrap();
        });
        let stream = TcpStream::connect(addr).unwrap();
        let mut ch = StreamChannel::new(stream).unwrap();
        ch.send_all(&[0xDE, 0xAD, 0xBE, 0xEF]).unwrap();
        let mut buf = [0u8; 4];
        ch.recv_exact(&mut buf, Duration::from_secs(2)).unwrap();
        assert_eq!(buf, [0xDE, 0xAD, 0xBE, 0xEF]);
        server.join().unwrap();
    }
}
