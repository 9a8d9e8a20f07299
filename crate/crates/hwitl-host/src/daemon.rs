//! The responder daemon: accepts connections, runs one emulator session per
//! connection, and optionally exposes the virtual breadboard side channel.
//!
//! Sessions are independent: each connection gets a freshly built core from
//! the shared [`MapConfig`]. GPIO pin levels, however, live on shared pin
//! boards, so the environment persists across sessions the way a physical
//! breadboard would.
//!
//! The breadboard side channel is a line-based text protocol:
//!
//! ```text
//! set NAME 0x81   -> ok
//! levels NAME     -> 0x00000081        (what the environment presents)
//! get NAME        -> 0x00000055        (what the bank drives out)
//! ```

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use hwitl::peripherals::PinBoard;
use hwitl::responder::{run_session, SessionReport};
use thiserror::Error;

use crate::channel::{ChannelSpec, StreamChannel, TimedStream};
use crate::mapfile::{MapConfig, MapConfigError};
use crate::HostClock;

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Map(#[from] MapConfigError),
    #[error("cannot listen on '{0}': use tcp: or pipe:")]
    BadListenSpec(String),
}

#[derive(Debug, Clone)]
pub struct DaemonConfig {
    pub listen: ChannelSpec,
    pub watchdog: Duration,
    pub map: MapConfig,
    pub breadboard: Option<ChannelSpec>,
    /// Serve a single session, then return. Used by tests and scripts.
    pub once: bool,
}

impl DaemonConfig {
    pub fn new(listen: ChannelSpec) -> Self {
        Self {
            listen,
            watchdog: Duration::from_millis(2),
            map: MapConfig::standard(),
            breadboard: None,
            once: false,
        }
    }
}

fn log_report(peer: &str, report: &SessionReport) {
    let s = report.stats;
    eprintln!(
        "session {peer}: {:?}, reads {} writes {} resets {} irq-polls {} set-times {} exits {} protocol-errors {}",
        report.outcome, s.reads, s.writes, s.resets, s.irq_polls, s.set_times, s.exits,
        s.protocol_errors
    );
}

fn serve_stream<S: TimedStream>(
    stream: S,
    peer: String,
    config: &DaemonConfig,
    boards: &HashMap<String, PinBoard>,
) {
    let built = match config.map.build(config.watchdog, boards) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("session {peer}: cannot build responder: {e}");
            return;
        }
    };
    let mut core = built.core;
    let mut channel = match StreamChannel::new(stream) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("session {peer}: {e}");
            return;
        }
    };
    let report = run_session(&mut core, &mut channel, &HostClock::start());
    log_report(&peer, &report);
}

/// Run the daemon. `on_ready` receives one line per listener with the bound
/// address, after which connections are being accepted.
pub fn serve(config: DaemonConfig, mut on_ready: impl FnMut(String)) -> Result<(), DaemonError> {
    for line in config.map.describe() {
        eprintln!("map: {line}");
    }
    let boards = Arc::new(config.map.make_pin_boards());
    if let Some(spec) = &config.breadboard {
        let ChannelSpec::Tcp { host, port } = spec else {
            return Err(DaemonError::BadListenSpec(spec.to_string()));
        };
        let listener = TcpListener::bind((host.as_str(), *port))?;
        on_ready(format!("breadboard on tcp:{}", listener.local_addr()?));
        let boards = Arc::clone(&boards);
        std::thread::spawn(move || breadboard_loop(listener, boards));
    }

    match &config.listen {
        ChannelSpec::Tcp { host, port } => {
            let listener = TcpListener::bind((host.as_str(), *port))?;
            on_ready(format!("listening on tcp:{}", listener.local_addr()?));
            accept_loop(listener, config, boards)
        }
        #[cfg(unix)]
        ChannelSpec::Pipe { path } => {
            // A stale socket file from a previous run blocks the bind.
            let _ = std::fs::remove_file(path);
            let listener = std::os::unix::net::UnixListener::bind(path)?;
            on_ready(format!("listening on pipe:{}", path.display()));
            unix_accept_loop(listener, config, boards)
        }
        #[cfg(unix)]
        ChannelSpec::Serial { device, baud } => {
            let (device, baud) = (device.clone(), *baud);
            // Open before signaling readiness so the line is already raw.
            let first = crate::channel::open_serial(&device, baud)?;
            on_ready(format!("listening on serial:{}:{baud}", device.display()));
            serial_session_loop(first, &device, baud, config, boards)
        }
        #[allow(unreachable_patterns)]
        other => Err(DaemonError::BadListenSpec(other.to_string())),
    }
}

/// A serial line has one peer and no accept step: serve back-to-back
/// sessions on the open device, each with a fresh core.
#[cfg(unix)]
fn serial_session_loop(
    first: crate::channel::SerialChannel,
    device: &std::path::Path,
    baud: u32,
    config: DaemonConfig,
    boards: Arc<HashMap<String, PinBoard>>,
) -> Result<(), DaemonError> {
    let mut channel = Some(first);
    let mut n = 0usize;
    loop {
        let mut channel = match channel.take() {
            Some(c) => c,
            None => crate::channel::open_serial(device, baud)?,
        };
        n += 1;
        let built = config.map.build(config.watchdog, &boards)?;
        let mut core = built.core;
        let report = run_session(&mut core, &mut channel, &HostClock::start());
        log_report(&format!("serial#{n}"), &report);
        if config.once {
            return Ok(());
        }
    }
}

fn accept_loop(
    listener: TcpListener,
    config: DaemonConfig,
    boards: Arc<HashMap<String, PinBoard>>,
) -> Result<(), DaemonError> {
    loop {
        let (stream, peer) = listener.accept()?;
        let peer = peer.to_string();
        if config.once {
            serve_stream(stream, peer, &config, &boards);
            return Ok(());
        }
        let config = config.clone();
        let boards = Arc::clone(&boards);
        std::thread::spawn(move || serve_stream(stream, peer, &config, &boards));
    }
}

#[cfg(unix)]
fn unix_accept_loop(
    listener: std::os::unix::net::UnixListener,
    config: DaemonConfig,
    boards: Arc<HashMap<String, PinBoard>>,
) -> Result<(), DaemonError> {
    let mut n = 0usize;
    loop {
        let (stream, _) = listener.accept()?;
        n += 1;
        let peer = format!("pipe#{n}");
        if config.once {
            serve_stream(stream, peer, &config, &boards);
            return Ok(());
        }
        let config = config.clone();
        let boards = Arc::clone(&boards);
        std::thread::spawn(move || serve_stream(stream, peer, &config, &boards));
    }
}

fn breadboard_loop(listener: TcpListener, boards: Arc<HashMap<String, PinBoard>>) {
    loop {
        let Ok((stream, _)) = listener.accept() else {
            return;
        };
        let boards = Arc::clone(&boards);
        std::thread::spawn(move || {
            let mut writer = match stream.try_clone() {
                Ok(w) => w,
                Err(_) => return,
            };
            for line in BufReader::new(stream).lines() {
                let Ok(line) = line else { return };
                let reply = breadboard_command(&line, &boards);
                if writeln!(writer, "{reply}").is_err() {
                    return;
                }
            }
        });
    }
}

fn breadboard_command(line: &str, boards: &HashMap<String, PinBoard>) -> String {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let board = |name: &str| boards.get(name);
    match fields.as_slice() {
        ["set", name, value] => {
            let Ok(v) = u32::from_str_radix(value.trim_start_matches("0x"), 16) else {
                return format!("err bad value '{value}'");
            };
            match board(name) {
                Some(b) => {
                    b.set_levels(v);
                    "ok".into()
                }
                None => format!("err unknown bank '{name}'"),
            }
        }
        ["levels", name] => match board(name) {
            Some(b) => format!("0x{:08x}", b.levels()),
            None => format!("err unknown bank '{name}'"),
        },
        ["get", name] => match board(name) {
            Some(b) => format!("0x{:08x}", b.driven()),
            None => format!("err unknown bank '{name}'"),
        },
        [] => "err empty command".into(),
        _ => "err syntax: set NAME HEX | get NAME | levels NAME".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::busctl::{self, BusCommand};
    use crate::channel::connect;
    use hwitl::InitiatorBridge;

    fn spawn_daemon(config: DaemonConfig) -> (String, std::thread::JoinHandle<()>) {
        let (tx, rx) = std::sync::mpsc::channel();
        let handle = std::thread::spawn(move || {
            serve(config, move |line| {
                let _ = tx.send(line);
            })
            .unwrap();
        });
        // First readiness line is the main listener (no breadboard here).
        let line = rx.recv_timeout(Duration::from_secs(5)).unwrap();
        (line, handle)
    }

    fn addr_of(ready_line: &str) -> ChannelSpec {
        ready_line
            .rsplit_once("on ")
            .unwrap()
            .1
            .parse()
            .expect("ready line carries a channel spec")
    }

    #[test]
    fn tcp_daemon_serves_a_full_session() {
        let mut config = DaemonConfig::new("tcp:127.0.0.1:0".parse().unwrap());
        config.once = true;
        config.map.initial_pins.push(("GPIOA".into(), 0x81));
        let (ready, handle) = spawn_daemon(config);
        let spec = addr_of(&ready);

        let ch = connect(&spec).unwrap();
        let mut bridge = InitiatorBridge::new(ch);
        let out = busctl::execute(&mut bridge, BusCommand::Read { addr: 0x5000_1008 });
        assert_eq!(out.line, "0x00000081 ok");
        let out = busctl::execute(&mut bridge, BusCommand::Exit);
        assert_eq!(out.code, 0);
        handle.join().unwrap();
    }

    #[cfg(unix)]
    #[test]
    fn pipe_daemon_serves_over_a_unix_socket() {
        let dir = std::env::temp_dir().join(format!("hwitl-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let sock = dir.join("responder.sock");
        let mut config = DaemonConfig::new(ChannelSpec::Pipe { path: sock.clone() });
        config.once = true;
        let (_ready, handle) = spawn_daemon(config);

        let ch = connect(&ChannelSpec::Pipe { path: sock }).unwrap();
        let mut bridge = InitiatorBridge::new(ch);
        let out = busctl::execute(
            &mut bridge,
            BusCommand::Write {
                addr: 0x5000_0000,
                value: 0x7,
            },
        );
        assert_eq!(out.line, "ok");
        let out = busctl::execute(&mut bridge, BusCommand::Exit);
        assert_eq!(out.code, 0);
        handle.join().unwrap();
        let _ = std::fs::remove_dir_all(dir);
    }

    /// Serve one session over a pseudo-terminal: the slave side is the
    /// daemon's serial device, the master side plays the initiator.
    #[cfg(unix)]
    #[test]
    fn serial_daemon_serves_over_a_pty() {
        use std::ffi::CStr;
        use std::io::{Read, Write};
        use std::os::unix::io::FromRawFd;
        use std::time::Instant;

        let (master_fd, slave_path) = unsafe {
            let master = libc::posix_openpt(libc::O_RDWR | libc::O_NOCTTY);
            assert!(master >= 0, "posix_openpt failed");
            assert_eq!(libc::grantpt(master), 0);
            assert_eq!(libc::unlockpt(master), 0);
            let name = libc::ptsname(master);
            assert!(!name.is_null());
            let path = CStr::from_ptr(name).to_string_lossy().into_owned();
            // Nonblocking master so reads can poll with a deadline.
            let flags = libc::fcntl(master, libc::F_GETFL);
            assert_eq!(
                libc::fcntl(master, libc::F_SETFL, flags | libc::O_NONBLOCK),
                0
            );
            (master, path)
        };
        let mut master = unsafe { std::fs::File::from_raw_fd(master_fd) };

        let mut config = DaemonConfig::new(ChannelSpec::Serial {
            device: slave_path.into(),
            baud: 115_200,
        });
        config.once = true;
        config.map.initial_pins.push(("GPIOA".into(), 0x81));
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let handle = std::thread::spawn(move || {
            serve(config, move |line| {
                let _ = ready_tx.send(line);
            })
            .unwrap();
        });
        let ready = ready_rx.recv_timeout(Duration::from_secs(5)).unwrap();
        assert!(ready.starts_with("listening on serial:"), "{ready}");

        fn recv_exact(master: &mut std::fs::File, n: usize) -> Vec<u8> {
            let mut out = Vec::with_capacity(n);
            let mut scratch = [0u8; 16];
            let deadline = Instant::now() + Duration::from_secs(5);
            while out.len() < n {
                match master.read(&mut scratch) {
                    Ok(0) => panic!("pty closed"),
                    Ok(k) => out.extend_from_slice(&scratch[..k]),
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        assert!(Instant::now() < deadline, "timed out with {out:?}");
                        std::thread::sleep(Duration::from_millis(1));
                    }
                    Err(e) => panic!("pty read: {e}"),
                }
            }
            out
        }

        let request = [0x01u8, 0x08, 0x10, 0x00, 0x50];
        master.write_all(&request).unwrap();
        assert_eq!(recv_exact(&mut master, 5), [0x01, 0x81, 0x00, 0x00, 0x00]);

        master.write_all(&[0x05]).unwrap();
        assert_eq!(recv_exact(&mut master, 1), [0x01]);
        handle.join().unwrap();
    }

    #[test]
    fn breadboard_commands_drive_pin_boards() {
        let mut boards = HashMap::new();
        boards.insert("GPIOA".to_string(), PinBoard::new(0));
        assert_eq!(breadboard_command("set GPIOA 0x81", &boards), "ok");
        assert_eq!(breadboard_command("levels GPIOA", &boards), "0x00000081");
        assert_eq!(breadboard_command("get GPIOA", &boards), "0x00000000");
        assert!(breadboard_command("set NOPE 0x1", &boards).starts_with("err"));
        assert!(breadboard_command("sing GPIOA", &boards).starts_with("err"));
    }
}
