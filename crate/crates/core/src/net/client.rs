//! Participant side of a networked federation.
//!
//! A client holds one shard, trains on it whenever a `GLOBAL_MODEL` arrives
//! and answers `EVALUATE` with the summed error over the shard. Only model
//! parameters, counts and that sum leave the process.

use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::Duration;

use crate::data::DatasetView;
use crate::error::{invalid, Error, Result};
use crate::fed::{local_train, TrainConfig, SERVER_ID};
use crate::net::wire::{read_message, write_message, WireMessage, PROTOCOL_VERSION};
use crate::nn::{MlpArch, ModelWeights, LABEL_DIM};
use crate::scenarios::localization_error_sum;

const MAX_BACKOFF: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub train: TrainConfig,
    /// Connection attempts before giving up. Only the initial connect is
    /// retried; a session that drops mid-way is an error.
    pub connect_attempts: u32,
    /// Delay after the first failed attempt, doubled each time up to 5 s.
    pub initial_backoff: Duration,
    /// Read timeout while waiting for the server; `None` waits forever.
    pub read_timeout: Option<Duration>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            connect_attempts: 20,
            initial_backoff: Duration::from_millis(100),
            read_timeout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientSummary {
    pub rounds_trained: u32,
    pub shutdown_reason: String,
}

fn connect(addr: impl ToSocketAddrs, cfg: &ClientConfig) -> Result<TcpStream> {
    let mut delay = cfg.initial_backoff;
    let mut last_err = None;
    for attempt in 1..=cfg.connect_attempts.max(1) {
        match TcpStream::connect(&addr) {
            Ok(stream) => return Ok(stream),
            Err(e) => {
                log::debug!("connect attempt {attempt} failed: {e}");
                last_err = Some(e);
                if attempt < cfg.connect_attempts {
                    thread::sleep(delay);
                    delay = (delay * 2).min(MAX_BACKOFF);
                }
            }
        }
    }
    Err(last_err.expect("at least one attempt").into())
}

fn check_arch(arch: &MlpArch, k: usize) -> Result<()> {
    if arch.input_dim != k || arch.output_dim != LABEL_DIM {
        return Err(Error::Protocol(format!(
            "server model maps {} -> {}, local data has {k} features and {LABEL_DIM} coordinates",
            arch.input_dim, arch.output_dim
        )));
    }
    Ok(())
}

/// Joins the federation at `addr` as `user_id` and serves rounds until the
/// server sends `SHUTDOWN`.
pub fn run_client(
    addr: impl ToSocketAddrs,
    user_id: u32,
    shard: &DatasetView<'_>,
    cfg: &ClientConfig,
) -> Result<ClientSummary> {
    if user_id == SERVER_ID {
        return Err(invalid(format!("user id {SERVER_ID} is reserved for the server")));
    }
    if shard.is_empty() {
        return Err(invalid("client shard is empty"));
    }
    cfg.train.validate()?;
    let mut stream = connect(addr, cfg)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(cfg.read_timeout)?;
    let sample_count = shard.len() as u64;
    write_message(
        &mut stream,
        &WireMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            user_id,
            sample_count,
        },
    )?;

    let mut arch: Option<MlpArch> = None;
    let mut rounds_trained = 0;
    loop {
        let msg = read_message(&mut stream).map_err(|e| match e {
            Error::Io(io) => Error::Protocol(format!("lost connection to server: {io}")),
            other => other,
        })?;
        match msg {
            WireMessage::GlobalModel {
                round,
                arch: model_arch,
                weights,
            } => {
                check_arch(&model_arch, shard.k)?;
                let global = ModelWeights::from_flat(&model_arch, &weights)?;
                let update = local_train(&global, shard, &cfg.train, user_id, round)?;
                write_message(
                    &mut stream,
                    &WireMessage::LocalUpdate {
                        round,
                        user_id,
                        sample_count,
                        weights: update.weights.to_flat(),
                    },
                )?;
                rounds_trained += 1;
                arch = Some(model_arch);
                log::debug!("user {user_id}: sent update for round {round}");
            }
            WireMessage::Evaluate { round, weights } => {
                let model_arch = arch
                    .as_ref()
                    .ok_or_else(|| Error::Protocol("EVALUATE before any GLOBAL_MODEL".into()))?;
                let model = ModelWeights::from_flat(model_arch, &weights)?;
                let (error_sum, count) = localization_error_sum(&model, shard)?;
                write_message(
                    &mut stream,
                    &WireMessage::EvalReport {
                        round,
                        user_id,
                        sample_count: count,
                        error_sum,
                    },
                )?;
            }
            WireMessage::Shutdown { reason } => {
                log::info!("user {user_id}: server closed the session ({reason})");
                return Ok(ClientSummary {
                    rounds_trained,
                    shutdown_reason: reason,
                });
            }
            other => {
                return Err(Error::Protocol(format!("unexpected {} from server", other.name())));
            }
        }
    }
}
