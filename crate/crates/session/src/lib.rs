//! Live haptic sessions over TCP or WebSocket.
//!
//! A client sends HIP positions and view commands; the server runs the
//! haptic loop at its tick rate and publishes decimated frames carrying
//! every note event since the previous frame.

pub mod client;
pub mod error;
pub mod library;
pub mod protocol;
pub mod server;
pub mod session;
pub mod transport;

pub use client::Client;
pub use error::SessionError;
pub use library::{ModelLibrary, PreparedModel};
pub use protocol::{ClientCommand, ClientMessage, ServerMessage, ServerPayload};
pub use server::{serve, serve_until, ServerConfig};
pub use session::{Session, SessionConfig, TickReport};
pub use transport::Framing;
