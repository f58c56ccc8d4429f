//! Message transports: newline-delimited or length-prefixed JSON over TCP,
//! and WebSocket text frames.

use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;

use crate::error::SessionError;

/// Upper bound on one inbound message.
pub const MAX_MESSAGE_BYTES: usize = 1 << 20;

/// Framing of raw TCP connections.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framing {
    /// One JSON document per line.
    #[default]
    Newline,
    /// 4-byte big-endian length, then the JSON bytes.
    Length,
}

type Ws = WebSocketStream<TcpStream>;

pub enum Receiver {
    Raw(BufReader<OwnedReadHalf>, Framing),
    Ws(SplitStream<Ws>),
}

pub enum Sender {
    Raw(OwnedWriteHalf, Framing),
    Ws(SplitSink<Ws, Message>),
}

pub fn split_raw(stream: TcpStream, framing: Framing) -> (Receiver, Sender) {
    let (r, w) = stream.into_split();
    (
        Receiver::Raw(BufReader::new(r), framing),
        Sender::Raw(w, framing),
    )
}

pub fn split_ws(ws: Ws) -> (Receiver, Sender) {
    let (w, r) = ws.split();
    (Receiver::Ws(r), Sender::Ws(w))
}

impl Receiver {
    /// Next message text, or `None` once the peer has closed.
    pub async fn recv(&mut self) -> Result<Option<String>, SessionError> {
        match self {
            Receiver::Raw(r, Framing::Newline) => {
                let mut line = String::new();
                loop {
                    line.clear();
                    let n = (&mut *r)
                        .take(MAX_MESSAGE_BYTES as u64 + 1)
                        .read_line(&mut line)
                        .await?;
                    if n == 0 {
                        return Ok(None);
                    }
                    if n > MAX_MESSAGE_BYTES {
                        return Err(SessionError::Malformed("message too long".into()));
                    }
                    if !line.trim().is_empty() {
                        return Ok(Some(line.trim_end().to_owned()));
                    }
                }
            }
            Receiver::Raw(r, Framing::Length) => {
                let len = match r.read_u32().await {
                    Ok(n) => n as usize,
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
                    Err(e) => return Err(e.into()),
                };
                if len > MAX_MESSAGE_BYTES {
                    return Err(SessionError::Malformed(format!("message of {len} bytes is too long")));
                }
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf).await?;
                String::from_utf8(buf)
                    .map(Some)
                    .map_err(|_| SessionError::Malformed("message is not UTF-8".into()))
            }
            Receiver::Ws(r) => loop {
                match r.next().await {
                    None | Some(Ok(Message::Close(_))) => return Ok(None),
                    Some(Ok(Message::Text(t))) => return Ok(Some(t.as_str().to_owned())),
                    Some(Ok(Message::Binary(b))) => {
                        return String::from_utf8(b.to_vec())
                            .map(Some)
                            .map_err(|_| SessionError::Malformed("message is not UTF-8".into()))
                    }
                    Some(Ok(_)) => continue,
                    Some(Err(e)) => return Err(e.into()),
                }
            },
        }
    }
}

impl Sender {
    pub async fn send(&mut self, text: &str) -> Result<(), SessionError> {
        match self {
            Sender::Raw(w, Framing::Newline) => {
                w.write_all(text.as_bytes()).await?;
                w.write_all(b"\n").await?;
            }
            Sender::Raw(w, Framing::Length) => {
                w.write_u32(text.len() as u32).await?;
                w.write_all(text.as_bytes()).await?;
            }
            Sender::Ws(w) => w.send(Message::text(text)).await?,
        }
        Ok(())
    }

    pub async fn close(&mut self) -> Result<(), SessionError> {
        match self {
            Sender::Raw(w, _) => w.shutdown().await?,
            Sender::Ws(w) => w.close().await?,
        }
        Ok(())
    }
}
