//! Federated training over TCP.

pub mod client;
pub mod server;
pub mod wire;

pub use client::{run_client, ClientConfig, ClientSummary};
pub use server::{serve, Direction, ServeConfig, ServeOutcome, Server, TrafficRecord};
pub use wire::WireMessage;
