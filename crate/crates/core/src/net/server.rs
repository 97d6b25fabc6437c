//! Coordinating side of a networked federation.
//!
//! The server waits for the expected number of clients to say `HELLO`, then
//! runs the same round loop as [`crate::fed::run_federated`]: broadcast the
//! global model, collect one `LOCAL_UPDATE` per client, average, evaluate.
//! Training error is assembled from per-client `EVAL_REPORT` sums, so the
//! server never sees a fingerprint or a label.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use crate::data::{Dataset, DatasetView};
use crate::error::{invalid, Error, Result};
use crate::fed::{local_train, FedConfig, LocalUpdate, Progress, RoundState, SERVER_ID};
use crate::net::wire::{read_message, write_message, WireMessage, PROTOCOL_VERSION};
use crate::nn::ModelWeights;
use crate::scenarios::{localization_error, localization_error_sum, RoundReport};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub fed: FedConfig,
    /// Clients that must connect before round 1 starts.
    pub expected_clients: usize,
    /// Time allowed for all clients to connect.
    pub startup_timeout: Duration,
    /// Per-message read timeout once rounds are running; `None` waits forever.
    pub round_timeout: Option<Duration>,
    /// Keep a copy of every message sent and received.
    pub record_traffic: bool,
}

impl ServeConfig {
    pub fn new(fed: FedConfig, expected_clients: usize) -> Self {
        Self {
            fed,
            expected_clients,
            startup_timeout: Duration::from_secs(60),
            round_timeout: None,
            record_traffic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// One message as seen by the server.
#[derive(Debug, Clone)]
pub struct TrafficRecord {
    pub direction: Direction,
    pub peer: u32,
    pub message: WireMessage,
}

#[derive(Debug, Clone)]
pub struct ServeOutcome {
    pub reports: Vec<RoundReport>,
    pub model: ModelWeights,
    /// Empty unless [`ServeConfig::record_traffic`] was set.
    pub traffic: Vec<TrafficRecord>,
}

struct Client {
    user_id: u32,
    sample_count: u64,
    stream: TcpStream,
}

pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Runs the whole session. `own_share`, when given, trains on the server
    /// as user 0. Test error is measured on `test`.
    pub fn run(
        self,
        cfg: &ServeConfig,
        test: &Dataset,
        own_share: Option<&DatasetView<'_>>,
        mut observer: impl FnMut(&RoundReport),
    ) -> Result<ServeOutcome> {
        if cfg.fed.rounds == 0 {
            return Err(invalid("at least one round is required"));
        }
        if cfg.expected_clients == 0 && own_share.is_none() {
            return Err(invalid("nobody to train: no clients and no server share"));
        }
        if cfg.expected_clients > u32::MAX as usize {
            return Err(invalid("too many clients"));
        }
        cfg.fed.train.validate()?;
        let initial = cfg.fed.initial_model(test.k)?;
        let mut session = Session {
            cfg,
            clients: Vec::new(),
            traffic: Vec::new(),
        };
        session.accept_clients(&self.listener)?;
        drop(self.listener);
        let result = session.rounds(initial, test, own_share, &mut observer);
        let reason = match &result {
            Ok(_) => "training complete".to_string(),
            Err(e) => format!("server error: {e}"),
        };
        session.shutdown_all(&reason);
        let (reports, model) = result?;
        Ok(ServeOutcome {
            reports,
            model,
            traffic: session.traffic,
        })
    }
}

/// Binds `addr` and runs a session.
pub fn serve(
    addr: impl ToSocketAddrs,
    cfg: &ServeConfig,
    test: &Dataset,
    own_share: Option<&DatasetView<'_>>,
    observer: impl FnMut(&RoundReport),
) -> Result<ServeOutcome> {
    let server = Server::bind(addr)?;
    log::info!("listening on {}", server.local_addr()?);
    server.run(cfg, test, own_share, observer)
}

struct Session<'c> {
    cfg: &'c ServeConfig,
    clients: Vec<Client>,
    traffic: Vec<TrafficRecord>,
}

impl Session<'_> {
    fn record(&mut self, direction: Direction, peer: u32, message: &WireMessage) {
        if self.cfg.record_traffic {
            self.traffic.push(TrafficRecord {
                direction,
                peer,
                message: message.clone(),
            });
        }
    }

    fn accept_clients(&mut self, listener: &TcpListener) -> Result<()> {
        let deadline = Instant::now() + self.cfg.startup_timeout;
        listener.set_nonblocking(true)?;
        while self.clients.len() < self.cfg.expected_clients {
            let now = Instant::now();
            if now >= deadline {
                let msg = format!(
                    "{} of {} clients connected before the startup deadline",
                    self.clients.len(),
                    self.cfg.expected_clients
                );
                self.shutdown_all("startup timeout");
                return Err(Error::Timeout(msg));
            }
            let stream = match listener.accept() {
                Ok((stream, peer)) => {
                    log::debug!("connection from {peer}");
                    stream
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(5));
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            if let Err(e) = self.handshake(stream, deadline - now) {
                log::warn!("rejected client: {e}");
            }
        }
        self.clients.sort_by_key(|c| c.user_id);
        log::info!("{} clients connected", self.clients.len());
        Ok(())
    }

    fn handshake(&mut self, mut stream: TcpStream, remaining: Duration) -> Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(remaining.max(Duration::from_millis(1))))?;
        let hello = read_message(&mut stream)?;
        let WireMessage::Hello {
            protocol_version,
            user_id,
            sample_count,
        } = hello
        else {
            return Err(Error::Protocol(format!("expected HELLO, got {}", hello.name())));
        };
        self.record(Direction::Received, user_id, &hello);
        let refusal = if protocol_version != PROTOCOL_VERSION {
            Some(format!("unsupported protocol version {protocol_version}"))
        } else if user_id == SERVER_ID {
            Some(format!("user id {SERVER_ID} is reserved for the server"))
        } else if self.clients.iter().any(|c| c.user_id == user_id) {
            Some(format!("duplicate user id {user_id}"))
        } else if sample_count == 0 {
            Some(format!("user {user_id} has no samples"))
        } else {
            None
        };
        if let Some(reason) = refusal {
            let _ = write_message(&mut stream, &WireMessage::Shutdown { reason: reason.clone() });
            return Err(Error::Protocol(reason));
        }
        stream.set_read_timeout(self.cfg.round_timeout)?;
        log::info!("user {user_id} joined with {sample_count} samples");
        self.clients.push(Client {
            user_id,
            sample_count,
            stream,
        });
        Ok(())
    }

    fn send(&mut self, idx: usize, msg: &WireMessage, round: u32) -> Result<()> {
        let user_id = self.clients[idx].user_id;
        write_message(&mut self.clients[idx].stream, msg).map_err(|e| Error::ClientLost {
            user_id,
            round,
            reason: e.to_string(),
        })?;
        self.record(Direction::Sent, user_id, msg);
        Ok(())
    }

    fn broadcast(&mut self, msg: &WireMessage, round: u32) -> Result<()> {
        for idx in 0..self.clients.len() {
            self.send(idx, msg, round)?;
        }
        Ok(())
    }

    /// Reads one message from every client concurrently while `local` runs
    /// on this thread.
    fn gather<T: Send>(
        &mut self,
        round: u32,
        local: impl FnOnce() -> Result<T>,
    ) -> Result<(Vec<WireMessage>, T)> {
        let (replies, local_result) = thread::scope(|s| {
            let handles: Vec<_> = self
                .clients
                .iter_mut()
                .map(|c| s.spawn(move || read_message(&mut c.stream)))
                .collect();
            let local_result = local();
            let replies: Vec<_> = handles
                .into_iter()
                .map(|h| h.join().expect("reader thread panicked"))
                .collect();
            (replies, local_result)
        });
        let local_value = local_result?;
        let mut messages = Vec::with_capacity(replies.len());
        for (idx, reply) in replies.into_iter().enumerate() {
            let user_id = self.clients[idx].user_id;
            let msg = reply.map_err(|e| match e {
                Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                    Error::Timeout(format!("user {user_id} sent nothing in round {round}"))
                }
                Error::Io(io) => Error::ClientLost {
                    user_id,
                    round,
                    reason: io.to_string(),
                },
                other => other,
            })?;
            self.record(Direction::Received, user_id, &msg);
            messages.push(msg);
        }
        Ok((messages, local_value))
    }

    fn rounds(
        &mut self,
        initial: ModelWeights,
        test: &Dataset,
        own_share: Option<&DatasetView<'_>>,
        observer: &mut impl FnMut(&RoundReport),
    ) -> Result<(Vec<RoundReport>, ModelWeights)> {
        let cfg = self.cfg;
        let fed = &cfg.fed;
        let arch = initial.arch().clone();
        let n_params = arch.param_count();
        let test_view = test.view_all();
        let mut state = RoundState::new(initial);
        let mut progress = Progress::new(fed.early_stop);
        let mut reports = Vec::with_capacity(fed.rounds as usize);

        for round in 1..=fed.rounds {
            let global = state.global.clone();
            self.broadcast(
                &WireMessage::GlobalModel {
                    round,
                    arch: arch.clone(),
                    weights: global.to_flat(),
                },
                round,
            )?;
            let (replies, own_update) = self.gather(round, || {
                own_share
                    .map(|share| local_train(&global, share, &fed.train, SERVER_ID, round))
                    .transpose()
            })?;
            let mut updates: Vec<LocalUpdate> = own_update.into_iter().collect();
            for (client, msg) in self.clients.iter().zip(replies) {
                let WireMessage::LocalUpdate {
                    round: r,
                    user_id,
                    sample_count,
                    weights,
                } = msg
                else {
                    return Err(Error::Protocol(format!(
                        "user {}: expected LOCAL_UPDATE, got {}",
                        client.user_id,
                        msg.name()
                    )));
                };
                if r != round {
                    return Err(Error::Protocol(format!(
                        "user {}: update for round {r} during round {round}",
                        client.user_id
                    )));
                }
                if user_id != client.user_id {
                    return Err(Error::Protocol(format!(
                        "connection of user {} sent an update as user {user_id}",
                        client.user_id
                    )));
                }
                if weights.len() != n_params {
                    return Err(Error::Protocol(format!(
                        "user {user_id}: {} weights, expected {n_params}",
                        weights.len()
                    )));
                }
                if sample_count != client.sample_count {
                    log::warn!("user {user_id} announced {} samples, now reports {sample_count}", client.sample_count);
                }
                updates.push(LocalUpdate {
                    user_id,
                    sample_count,
                    weights: ModelWeights::from_flat(&arch, &weights)?,
                });
            }
            state.apply(&updates)?;

            let train_error = self.train_error(&state.global, own_share, round)?;
            let report = RoundReport {
                round,
                federated_test_mae_m: localization_error(&state.global, &test_view)?,
                federated_train_mae_m: train_error,
                centralized_test_mae_m: None,
                centralized_train_mae_m: None,
            };
            log::info!(
                "round {round}: test {:.3} m, train {:.3} m",
                report.federated_test_mae_m,
                report.federated_train_mae_m
            );
            observer(&report);
            reports.push(report);
            if progress.observe(report.federated_test_mae_m) {
                log::info!("early stop after round {round}, best {:.3} m", progress.best());
                break;
            }
        }
        Ok((reports, state.global))
    }

    /// Mean error over all shards: the server's own share plus each client's
    /// reported sum, combined in id order.
    fn train_error(&mut self, model: &ModelWeights, own_share: Option<&DatasetView<'_>>, round: u32) -> Result<f64> {
        self.broadcast(
            &WireMessage::Evaluate {
                round,
                weights: model.to_flat(),
            },
            round,
        )?;
        let (replies, own) = self.gather(round, || {
            own_share.map(|share| localization_error_sum(model, share)).transpose()
        })?;
        let (mut sum, mut count) = own.unwrap_or((0.0, 0));
        for (client, msg) in self.clients.iter().zip(replies) {
            match msg {
                WireMessage::EvalReport {
                    round: r,
                    user_id,
                    sample_count,
                    error_sum,
                } if r == round && user_id == client.user_id => {
                    sum += error_sum;
                    count += sample_count;
                }
                other => {
                    return Err(Error::Protocol(format!(
                        "user {}: expected EVAL_REPORT for round {round}, got {}",
                        client.user_id,
                        other.name()
                    )))
                }
            }
        }
        if count == 0 {
            return Err(invalid("no training samples to evaluate"));
        }
        Ok(sum / count as f64)
    }

    fn shutdown_all(&mut self, reason: &str) {
        let msg = WireMessage::Shutdown {
            reason: reason.to_string(),
        };
        for idx in 0..self.clients.len() {
            if self.send(idx, &msg, 0).is_err() {
                log::debug!("user {} already gone", self.clients[idx].user_id);
            }
        }
        self.clients.clear();
    }
}
