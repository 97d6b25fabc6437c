//! Federated training: local updates, sample-weighted averaging and the
//! round loop.
//!
//! Each round the current global model is handed to every participant, each
//! participant runs a few epochs of Adam on its own shard starting from a
//! fresh optimizer, and the server replaces the global model by the
//! sample-count-weighted mean of the returned models. Participants are
//! always processed in ascending `user_id` order, which makes the result
//! bit-identical whether local training runs serially, in parallel, or in
//! separate processes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetView, Sample};
use crate::error::{invalid, Result};
use crate::nn::{backward, init_weights, MlpArch, ModelWeights, DEFAULT_HIDDEN, LABEL_DIM};
use crate::optim::{AdamConfig, AdamState};
use crate::partition::Partition;
use crate::scenarios::{localization_error_sum, RoundReport};

/// Participant id of the server's own pool.
pub const SERVER_ID: u32 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Base seed for mini-batch shuffling; mixed with user id and round.
    pub seed: u64,
    /// Train participants of a round on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 100,
            epochs: 10,
            seed: 0,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(crate::Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stop once the best federated test error has not improved by at least
/// `min_delta` meters for `patience` consecutive rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: u32,
    pub min_delta: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            patience: 10,
            min_delta: 0.01,
        }
    }
}

/// Everything needed to run the round loop besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub train: TrainConfig,
    pub rounds: u32,
    pub hidden: Vec<usize>,
    pub init_seed: u64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            rounds: 100,
            hidden: DEFAULT_HIDDEN.to_vec(),
            init_seed: 0,
            early_stop: None,
        }
    }
}

impl FedConfig {
    pub fn initial_model(&self, k: usize) -> Result<ModelWeights> {
        init_weights(&MlpArch::localization(k, self.hidden.clone())?, self.init_seed)
    }
}

/// A participant's trained model and how many samples produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub user_id: u32,
    pub sample_count: u64,
    pub weights: ModelWeights,
}

/// Server-side state between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    /// Last completed round (0 before the first).
    pub round: u32,
    pub global: ModelWeights,
    /// Samples behind the current global model.
    pub total_samples: u64,
}

impl RoundState {
    pub fn new(initial: ModelWeights) -> Self {
        Self {
            round: 0,
            global: initial,
            total_samples: 0,
        }
    }

    /// Averages one round of updates into the global model.
    pub fn apply(&mut self, updates: &[LocalUpdate]) -> Result<()> {
        let averaged = federated_average(updates)?;
        if !averaged.same_shape(&self.global) {
            return Err(invalid("updates do not match the global model"));
        }
        self.global = averaged;
        self.total_samples = updates.iter().map(|u| u.sample_count).sum();
        self.round += 1;
        Ok(())
    }
}

/// Shuffle seed for one participant in one round.
pub fn shuffle_seed(base: u64, user_id: u32, round: u32) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(base ^ mix(user_id as u64)) ^ round as u64)
}

/// Trains a copy of `global` on `shard` for `cfg.epochs` epochs of shuffled
/// mini-batches with a fresh Adam state.
pub fn local_train(
    global: &ModelWeights,
    shard: &DatasetView<'_>,
    cfg: &TrainConfig,
    user_id: u32,
    round: u32,
) -> Result<LocalUpdate> {
    if shard.is_empty() {
        return Err(invalid(format!("user {user_id} has an empty shard")));
    }
    if global.arch().input_dim != shard.k || global.arch().output_dim != LABEL_DIM {
        return Err(invalid(format!(
            "model {}->{} does not fit {}-feature localization data",
            global.arch().input_dim,
            global.arch().output_dim,
            shard.k
        )));
    }
    cfg.validate()?;
    let mut model = global.clone();
    let mut state = AdamState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed(cfg.seed, user_id, round));
    let mut order: Vec<&Sample> = shard.samples.clone();
    let mut inputs: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    let mut labels: Vec<&[f64]> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            inputs.clear();
            labels.clear();
            for s in batch {
                inputs.push(&s.features);
                labels.push(&s.label);
            }
            let (grads, _) = backward(&model, &inputs, &labels)?;
            state.step(&mut model, &grads, &cfg.adam)?;
        }
    }
    Ok(LocalUpdate {
        user_id,
        sample_count: shard.len() as u64,
        weights: model,
    })
}

/// Number of optimizer steps [`local_train`] performs.
pub fn steps_per_round(shard_len: usize, cfg: &TrainConfig) -> usize {
    cfg.epochs * shard_len.div_ceil(cfg.batch_size.max(1))
}

/// Sample-weighted mean of the updates' parameters.
///
/// Each parameter is `sum_u (m_u / H) * w_u` accumulated in ascending
/// `user_id` order, then clamped to the range spanned by the inputs so the
/// result is always a convex combination despite rounding.
pub fn federated_average(updates: &[LocalUpdate]) -> Result<ModelWeights> {
    let first = updates.first().ok_or_else(|| invalid("no updates to average"))?;
    let mut ordered: Vec<&LocalUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.user_id);
    if ordered.windows(2).any(|w| w[0].user_id == w[1].user_id) {
        return Err(invalid("duplicate user id among updates"));
    }
    if ordered.iter().any(|u| !u.weights.same_shape(&first.weights)) {
        return Err(invalid("updates have mismatched model shapes"));
    }
    let total: u64 = ordered.iter().map(|u| u.sample_count).sum();
    if total == 0 {
        return Err(invalid("updates carry zero samples"));
    }
    let coeffs: Vec<f64> = ordered
        .iter()
        .map(|u| u.sample_count as f64 / total as f64)
        .collect();

    let mut out = ordered[0].weights.clone();
    let mut iters: Vec<_> = ordered.iter().map(|u| u.weights.params()).collect();
    for dst in out.params_mut() {
        let mut acc = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (it, &c) in iters.iter_mut().zip(&coeffs) {
            let w = *it.next().expect("shapes checked");
            acc += c * w;
            lo = lo.min(w);
            hi = hi.max(w);
        }
        *dst = acc.clamp(lo, hi);
    }
    Ok(out)
}

/// One training participant: an id and its borrowed shard.
#[derive(Debug, Clone)]
pub struct Participant<'a> {
    pub user_id: u32,
    pub shard: DatasetView<'a>,
}

/// Server share (id 0) followed by users `1..=n`, in id order.
pub fn participants<'a>(train: &'a Dataset, partition: &Partition) -> Result<Vec<Participant<'a>>> {
    partition.validate(train.len())?;
    let mut out = Vec::with_capacity(partition.n_users() + 1);
    if let Some(share) = &partition.server_share {
        out.push(Participant {
            user_id: SERVER_ID,
            shard: train.view(share)?,
        });
    }
    for (i, share) in partition.user_shares.iter().enumerate() {
        out.push(Participant {
            user_id: i as u32 + 1,
            shard: train.view(share)?,
        });
    }
    Ok(out)
}

/// Trains every participant for one round, returning updates in id order.
pub fn train_round(
    global: &ModelWeights,
    participants: &[Participant<'_>],
    cfg: &TrainConfig,
    round: u32,
) -> Result<Vec<LocalUpdate>> {
    let run = |p: &Participant<'_>| local_train(global, &p.shard, cfg, p.user_id, round);
    if cfg.parallel {
        participants.par_iter().map(run).collect()
    } else {
        participants.iter().map(run).collect()
    }
}

/// Mean localization error over the union of the participants' shards,
/// summed shard by shard in id order.
pub fn union_error(model: &ModelWeights, participants: &[Participant<'_>]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0u64;
    for p in participants {
        let (s, c) = localization_error_sum(model, &p.shard)?;
        sum += s;
        count += c;
    }
    if count == 0 {
        return Err(invalid("no training samples to evaluate"));
    }
    Ok(sum / count as f64)
}

/// Tracks the best test error and decides when to stop early.
#[derive(Debug, Clone)]
pub struct Progress {
    rule: Option<EarlyStop>,
    best: f64,
    stale: u32,
}

impl Progress {
    pub fn new(rule: Option<EarlyStop>) -> Self {
        Self {
            rule,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records a round; returns `true` when training should stop.
    pub fn observe(&mut self, test_error: f64) -> bool {
        let Some(rule) = self.rule else {
            self.best = self.best.min(test_error);
            return false;
        };
        if test_error < self.best - rule.min_delta {
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.best = self.best.min(test_error);
        self.stale >= rule.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Result of [`run_federated`].
#[derive(Debug, Clone)]
pub struct FederatedRun {
    pub reports: Vec<RoundReport>,
    pub model: ModelWeights,
}

/// The round loop: broadcast, local training, weighted averaging, evaluation.
///
/// The server share of the partition, if any, participates as user 0. Each
/// report carries the error of the freshly averaged model on `test` and on
/// the union of all shards; centralized columns are left empty.
pub fn run_federated(
    train: &Dataset,
    partition: &Partition,
    test: &Dataset,
    cfg: &FedConfig,
    mut observer: impl FnMut(&RoundReport),
) -> Result<FederatedRun> {
    if cfg.rounds == 0 {
        return Err(invalid("at least one round is required"));
    }
    let parts = participants(train, partition)?;
    if parts.is_empty() {
        return Err(invalid("partition has no participants"));
    }
    let test_view = test.view_all();
    let mut state = RoundState::new(cfg.initial_model(train.k)?);
    let mut progress = Progress::new(cfg.early_stop);
    let mut reports = Vec::with_capacity(cfg.rounds as usize);
    for round in 1..=cfg.rounds {
        let updates = train_round(&state.global, &parts, &cfg.train, round)?;
        state.apply(&updates)?;
        let report = RoundReport {
            round,
            federated_test_mae_m: crate::scenarios::localization_error(&state.global, &test_view)?,
            federated_train_mae_m: union_error(&state.global, &parts)?,
            centralized_test_mae_m: None,
            centralized_train_mae_m: None,
        };
        log::debug!(
            "round {round}: test {:.3} m, train {:.3} m",
            report.federated_test_mae_m,
            report.federated_train_mae_m
        );
        observer(&report);
        reports.push(report);
        if progress.observe(reports.last().map(|r| r.federated_test_mae_m).unwrap_or(f64::INFINITY)) {
            log::info!("early stop after round {round}, best {:.3} m", progress.best());
            break;
        }
    }
    Ok(FederatedRun {
        reports,
        model: state.global,
    })
}
