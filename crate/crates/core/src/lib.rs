//! Federated learning for RSS-fingerprint indoor localization.
//!
//! The crate covers the whole pipeline: loading and preprocessing
//! UJIIndoorLoc-format surveys ([`data`]), a small dense regression network
//! ([`nn`]) trained with Adam ([`optim`]), user partitioning under uniform and
//! spatially heterogeneous regimes ([`partition`]), federated averaging
//! ([`fed`]), the evaluation scenarios ([`scenarios`]) and a TCP
//! parameter-server runtime ([`net`]). The `fedloc` binary wraps it all in a
//! command line ([`cli`]).
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod cli;
pub mod data;
pub mod error;
pub mod fed;
pub mod net;
pub mod nn;
pub mod optim;
pub mod partition;
pub mod report;
pub mod scenarios;
pub mod synth;

pub use error::{Error, Result};
