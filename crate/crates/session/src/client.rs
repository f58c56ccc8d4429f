//! Minimal client, used by tests and tools.

use std::net::SocketAddr;

use tokio::net::TcpStream;

use crate::error::SessionError;
use crate::protocol::{ClientCommand, ClientMessage, ServerMessage};
use crate::transport::{split_raw, split_ws, Framing, Receiver, Sender};

pub struct Client {
    rx: Receiver,
    tx: Sender,
    next_seq: u64,
}

impl Client {
    pub async fn connect(addr: SocketAddr, framing: Framing) -> Result<Self, SessionError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (rx, tx) = split_raw(stream, framing);
        Ok(Self { rx, tx, next_seq: 0 })
    }

    pub async fn connect_ws(addr: SocketAddr) -> Result<Self, SessionError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (ws, _) = tokio_tungstenite::client_async(format!("ws://{addr}/"), stream).await?;
        let (rx, tx) = split_ws(ws);
        Ok(Self { rx, tx, next_seq: 0 })
    }

    /// Sends a command and returns the sequence number it was given.
    pub async fn send(&mut self, command: ClientCommand) -> Result<u64, SessionError> {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.tx.send(&ClientMessage { seq, command }.to_json()).await?;
        Ok(seq)
    }

    pub async fn send_text(&mut self, text: &str) -> Result<(), SessionError> {
        self.tx.send(text).await
    }

    pub async fn recv(&mut self) -> Result<Option<ServerMessage>, SessionError> {
        match self.rx.recv().await? {
            Some(text) => ServerMessage::parse(&text).map(Some),
            None => Ok(None),
        }
    }

    pub async fn close(mut self) -> Result<(), SessionError> {
        self.tx.close().await
    }
}
