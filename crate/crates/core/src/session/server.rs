//! TCP service for the session protocol. Every connection gets its own
//! simulated lab; requests on a connection are handled in order.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::{info, warn};

use super::protocol::SimulatedLab;
use super::SessionConfig;
use crate::geometry::CameraTruth;
use crate::simulator::NoiseModel;

const POLL_INTERVAL: Duration = Duration::from_millis(50);

/// Accepts clients until `shutdown` is set.
pub fn serve_until(listener: TcpListener, config: SessionConfig, shutdown: Arc<AtomicBool>) -> io::Result<()> {
    let truth = CameraTruth {
        image: config.image,
        ..CameraTruth::default()
    };
    SimulatedLab::new(config.clone(), truth, NoiseModel::default())
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    listener.set_nonblocking(true)?;
    info!("event=listening addr={}", listener.local_addr()?);
    let mut next_id = 0u64;
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                next_id += 1;
                let id = next_id;
                let lab = SimulatedLab::new(config.clone(), truth, NoiseModel::default()).expect("validated above");
                let stop = Arc::clone(&shutdown);
                info!("event=client_connected id={id} peer={peer}");
                thread::spawn(move || {
                    if let Err(e) = handle_client(stream, lab, stop) {
                        warn!("event=client_error id={id} error={e:?}");
                    }
                    info!("event=client_closed id={id}");
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL_INTERVAL),
            Err(e) => return Err(e),
        }
    }
    info!("event=shutdown");
    Ok(())
}

/// Serves until the process receives an interrupt or termination signal.
pub fn serve(listener: TcpListener, config: SessionConfig) -> io::Result<()> {
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&shutdown);
    ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)).map_err(io::Error::other)?;
    serve_until(listener, config, shutdown)
}

fn handle_client(stream: TcpStream, mut lab: SimulatedLab, shutdown: Arc<AtomicBool>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(200)))?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    loop {
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) => {
                let request = line.trim();
                if !request.is_empty() {
                    let response = lab.handle_line(request);
                    writer.write_all(response.as_bytes())?;
                    writer.write_all(b"\n")?;
                    writer.flush()?;
                }
                line.clear();
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                // A partial line stays in `line` and is completed by the next read.
                if shutdown.load(Ordering::SeqCst) {
                    return Ok(());
                }
            }
            Err(e) => return Err(e),
        }
    }
}
