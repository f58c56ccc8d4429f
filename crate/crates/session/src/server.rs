//! TCP service. Each connection owns a session driven by a dedicated
//! thread at the tick rate; a writer task drains the session's outbox.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::Notify;

use crate::error::SessionError;
use crate::library::ModelLibrary;
use crate::protocol::{ClientMessage, ErrorPayload, FramePayload, SeqCounters, ServerPayload};
use crate::session::{Session, SessionConfig};
use crate::transport::{split_raw, split_ws, Framing, Receiver, Sender};

/// How long a new connection may stay silent before it is treated as raw TCP.
const SNIFF_TIMEOUT: Duration = Duration::from_millis(150);

/// Ticks the loop may fall behind before it stops trying to catch up.
const MAX_LAG: Duration = Duration::from_millis(50);

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub framing: Framing,
    pub session: SessionConfig,
}

/// Messages waiting for the writer. Frames are latest-wins, but events of
/// a replaced frame carry over so none are lost.
#[derive(Default)]
pub struct Outbox {
    state: Mutex<OutboxState>,
    notify: Notify,
}

#[derive(Default)]
struct OutboxState {
    replies: Vec<ServerPayload>,
    frame: Option<FramePayload>,
    closed: bool,
}

impl Outbox {
    pub fn push(&self, reply: ServerPayload) {
        self.state.lock().expect("outbox lock").replies.push(reply);
        self.notify.notify_one();
    }

    pub fn publish(&self, mut frame: FramePayload) {
        let mut s = self.state.lock().expect("outbox lock");
        if let Some(old) = s.frame.take() {
            let mut events = old.events;
            events.append(&mut frame.events);
            frame.events = events;
        }
        s.frame = Some(frame);
        drop(s);
        self.notify.notify_one();
    }

    pub fn close(&self) {
        self.state.lock().expect("outbox lock").closed = true;
        self.notify.notify_one();
    }

    /// Pending messages in delivery order, and whether the outbox is closed.
    fn drain(&self) -> (Vec<ServerPayload>, bool) {
        let mut s = self.state.lock().expect("outbox lock");
        let mut out = std::mem::take(&mut s.replies);
        if let Some(f) = s.frame.take() {
            out.push(ServerPayload::Frame(Box::new(f)));
        }
        (out, s.closed)
    }
}

/// Drives `session` at its tick rate until `stop` is set or the command
/// channel disconnects.
pub fn run_loop(
    mut session: Session,
    commands: mpsc::Receiver<ClientMessage>,
    outbox: Arc<Outbox>,
    stop: Arc<AtomicBool>,
) {
    let period = Duration::from_secs_f64(1.0 / session.config().tick_rate);
    let mut next = Instant::now();
    'run: while !stop.load(Ordering::Relaxed) {
        loop {
            match commands.try_recv() {
                Ok(msg) => {
                    let reply = match session.handle_command(msg.seq, &msg.command) {
                        Ok(ack) => ServerPayload::Ack(Box::new(ack)),
                        Err(e) => ServerPayload::Error(ErrorPayload {
                            command_seq: Some(msg.seq),
                            message: e.to_string(),
                        }),
                    };
                    outbox.push(reply);
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => break 'run,
            }
        }
        let report = session.tick();
        if report.publish {
            outbox.publish(session.take_frame(&report.frame));
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else if now - next > MAX_LAG {
            next = now;
        }
    }
    outbox.close();
}

async fn is_websocket(stream: &TcpStream) -> bool {
    let deadline = tokio::time::Instant::now() + SNIFF_TIMEOUT;
    let mut buf = [0u8; 4];
    loop {
        let peeked = tokio::time::timeout_at(deadline, stream.peek(&mut buf)).await;
        match peeked {
            Ok(Ok(n)) if n >= 4 => return &buf == b"GET ",
            Ok(Ok(0)) | Ok(Err(_)) | Err(_) => return false,
            Ok(Ok(n)) => {
                if buf[..n] != b"GET "[..n] {
                    return false;
                }
                tokio::time::sleep(Duration::from_millis(2)).await;
            }
        }
    }
}

async fn read_commands(mut rx: Receiver, commands: mpsc::Sender<ClientMessage>, outbox: Arc<Outbox>) {
    loop {
        match rx.recv().await {
            Ok(Some(text)) => match ClientMessage::parse(&text) {
                Ok(msg) => {
                    if commands.send(msg).is_err() {
                        return;
                    }
                }
                Err((seq, e)) => outbox.push(ServerPayload::Error(ErrorPayload {
                    command_seq: seq,
                    message: e.to_string(),
                })),
            },
            Ok(None) => return,
            Err(e) => {
                debug!("read error: {e}");
                return;
            }
        }
    }
}

async fn write_messages(tx: &mut Sender, outbox: &Outbox) -> Result<(), SessionError> {
    let mut counters = SeqCounters::default();
    loop {
        let (batch, closed) = outbox.drain();
        for payload in batch {
            tx.send(&counters.stamp(payload).to_json()).await?;
        }
        if closed {
            return Ok(());
        }
        outbox.notify.notified().await;
    }
}

/// Serves one connection until the peer disconnects.
pub async fn handle_connection(
    stream: TcpStream,
    library: Arc<ModelLibrary>,
    config: ServerConfig,
) -> Result<(), SessionError> {
    stream.set_nodelay(true)?;
    let (rx, mut tx) = if is_websocket(&stream).await {
        split_ws(tokio_tungstenite::accept_async(stream).await?)
    } else {
        split_raw(stream, config.framing)
    };
    let session = Session::new(library, config.session)?;
    let outbox = Arc::new(Outbox::default());
    outbox.push(ServerPayload::Hello(Box::new(session.hello())));
    let (cmd_tx, cmd_rx) = mpsc::channel();
    let stop = Arc::new(AtomicBool::new(false));
    let worker = {
        let (outbox, stop) = (outbox.clone(), stop.clone());
        thread::Builder::new()
            .name("haptic-loop".into())
            .spawn(move || run_loop(session, cmd_rx, outbox, stop))?
    };
    let result = tokio::select! {
        _ = read_commands(rx, cmd_tx, outbox.clone()) => Ok(()),
        r = write_messages(&mut tx, &outbox) => r,
    };
    stop.store(true, Ordering::Relaxed);
    let _ = tokio::task::spawn_blocking(move || worker.join()).await;
    let _ = tx.close().await;
    result
}

/// Accepts connections until `shutdown` resolves.
pub async fn serve_until(
    listener: TcpListener,
    library: Arc<ModelLibrary>,
    config: ServerConfig,
    shutdown: impl Future<Output = ()>,
) -> Result<(), SessionError> {
    config.session.validate()?;
    info!("listening on {}", listener.local_addr()?);
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                spawn_connection(stream, peer, library.clone(), config.clone());
            }
        }
    }
}

pub async fn serve(listener: TcpListener, library: Arc<ModelLibrary>, config: ServerConfig) -> Result<(), SessionError> {
    serve_until(listener, library, config, std::future::pending()).await
}

fn spawn_connection(stream: TcpStream, peer: SocketAddr, library: Arc<ModelLibrary>, config: ServerConfig) {
    info!("client {peer} connected");
    tokio::spawn(async move {
        match handle_connection(stream, library, config).await {
            Ok(()) => info!("client {peer} disconnected"),
            Err(e) => warn!("client {peer}: {e}"),
        }
    });
}
