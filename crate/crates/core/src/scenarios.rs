//! The three evaluation scenarios and the localization metric.
//!
//! * **S1** — a server with a fixed 3000-sample pool trains centrally; users
//!   with 500 samples each join federated rounds alongside the server.
//! * **S2** — `n` users with 1000 uniformly drawn samples each; the
//!   centralized arm pools exactly the same samples.
//! * **S3** — like S2, but user sizes are Gaussian (1000 ± 500) and every
//!   user covers a spatially exclusive slab of the building.
//!
//! A centralized "round" is 10 epochs on the pooled data (the same work a
//! federated participant does per round), so both arms share an x-axis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetView};
use crate::error::{invalid, Error, Result};
use crate::fed::{local_train, run_federated, FedConfig, SERVER_ID};
use crate::nn::{forward_with, ModelWeights, Scratch};
use crate::partition::{partition_gaussian_spatial, partition_uniform, Partition};

/// Errors of one round, in meters. Centralized columns are empty when no
/// centralized arm ran (e.g. a networked federation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub federated_test_mae_m: f64,
    pub federated_train_mae_m: f64,
    pub centralized_test_mae_m: Option<f64>,
    pub centralized_train_mae_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    S1,
    S2,
    S3,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Scenario::S1),
            "s2" | "2" => Ok(Scenario::S2),
            "s3" | "3" => Ok(Scenario::S3),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_users: usize,
    pub fed: FedConfig,
    pub partition_seed: u64,
    pub s1_server_samples: usize,
    pub s1_user_samples: usize,
    pub s2_user_samples: usize,
    pub s3_mean: f64,
    pub s3_std: f64,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, n_users: usize) -> Self {
        Self {
            scenario,
            n_users,
            fed: FedConfig::default(),
            partition_seed: 0,
            s1_server_samples: 3000,
            s1_user_samples: 500,
            s2_user_samples: 1000,
            s3_mean: 1000.0,
            s3_std: 500.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fed.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.n_users == 0 && self.scenario != Scenario::S1 {
            return Err(Error::Config(format!("{} needs at least one user", self.scenario)));
        }
        self.fed.train.validate()
    }

    pub fn partition(&self, train: &Dataset) -> Result<Partition> {
        match self.scenario {
            Scenario::S1 => partition_uniform(
                train,
                self.n_users,
                self.s1_user_samples,
                self.s1_server_samples,
                self.partition_seed,
            ),
            Scenario::S2 => partition_uniform(train, self.n_users, self.s2_user_samples, 0, self.partition_seed),
            Scenario::S3 => {
                partition_gaussian_spatial(train, self.n_users, self.s3_mean, self.s3_std, self.partition_seed)
            }
        }
    }
}

/// `(sum of Euclidean errors, sample count)` over `eval_set`, summed in
/// sample order. Shared by every evaluation path so that partial sums from
/// different processes combine bit-identically.
pub fn localization_error_sum(model: &ModelWeights, eval_set: &DatasetView<'_>) -> Result<(f64, u64)> {
    let mut scratch = Scratch::new(model.arch());
    let mut sum = 0.0;
    for s in eval_set.iter() {
        let y = forward_with(model, &s.features, &mut scratch)?;
        if y.len() != s.label.len() {
            return Err(invalid("model output does not match label width"));
        }
        let dx = y[0] - s.label[0];
        let dy = y[1] - s.label[1];
        sum += (dx * dx + dy * dy).sqrt();
    }
    Ok((sum, eval_set.len() as u64))
}

/// Mean Euclidean distance between predicted and true positions, meters.
pub fn localization_error(model: &ModelWeights, eval_set: &DatasetView<'_>) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(invalid("cannot evaluate on an empty set"));
    }
    let (sum, n) = localization_error_sum(model, eval_set)?;
    Ok(sum / n as f64)
}

/// Mean absolute error per coordinate (the training loss), meters.
pub fn coordinate_mae(model: &ModelWeights, eval_set: &DatasetView<'_>) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(invalid("cannot evaluate on an empty set"));
    }
    let mut scratch = Scratch::new(model.arch());
    let mut sum = 0.0;
    for s in eval_set.iter() {
        let y = forward_with(model, &s.features, &mut scratch)?;
        sum += y.iter().zip(&s.label).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(sum / (2 * eval_set.len()) as f64)
}

/// Mean Euclidean error of always predicting `point`.
pub fn constant_predictor_error(point: [f64; 2], eval_set: &DatasetView<'_>) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(invalid("cannot evaluate on an empty set"));
    }
    let sum: f64 = eval_set
        .iter()
        .map(|s| ((point[0] - s.label[0]).powi(2) + (point[1] - s.label[1]).powi(2)).sqrt())
        .sum();
    Ok(sum / eval_set.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentralizedRound {
    pub round: u32,
    pub test_mae_m: f64,
    pub train_mae_m: f64,
}

#[derive(Debug, Clone)]
pub struct CentralizedRun {
    pub rounds: Vec<CentralizedRound>,
    /// Model after each round.
    pub models: Vec<ModelWeights>,
}

impl CentralizedRun {
    pub fn final_model(&self) -> &ModelWeights {
        self.models.last().expect("at least one round")
    }
}

/// Centralized training on a pooled dataset, 10 epochs (one
/// [`local_train`] call as the server participant) per round.
pub fn centralized_train(
    initial: &ModelWeights,
    pool: &DatasetView<'_>,
    test: &DatasetView<'_>,
    fed: &FedConfig,
) -> Result<CentralizedRun> {
    if pool.is_empty() {
        return Err(invalid("centralized pool is empty"));
    }
    if fed.rounds == 0 {
        return Err(invalid("at least one round is required"));
    }
    let mut model = initial.clone();
    let mut run = CentralizedRun {
        rounds: Vec::with_capacity(fed.rounds as usize),
        models: Vec::with_capacity(fed.rounds as usize),
    };
    for round in 1..=fed.rounds {
        model = local_train(&model, pool, &fed.train, SERVER_ID, round)?.weights;
        run.rounds.push(CentralizedRound {
            round,
            test_mae_m: localization_error(&model, test)?,
            train_mae_m: localization_error(&model, pool)?,
        });
        run.models.push(model.clone());
    }
    Ok(run)
}

/// Outcome of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    pub partition: Partition,
    pub reports: Vec<RoundReport>,
    pub federated_model: ModelWeights,
    pub centralized_model: ModelWeights,
    /// Per-coordinate test MAE of the final federated model.
    pub federated_test_coord_mae_m: f64,
    /// Per-coordinate test MAE of the final centralized model.
    pub centralized_test_coord_mae_m: f64,
}

impl ScenarioRun {
    pub fn last(&self) -> &RoundReport {
        self.reports.last().expect("at least one round")
    }
}

/// Runs both arms of a scenario from the same initial model.
///
/// In S1 the centralized arm is a constant baseline: its final-round errors
/// are reported on every row. Elsewhere the centralized arm trains on the
/// union of the user shares and reports its per-round errors.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    train: &Dataset,
    test: &Dataset,
    mut observer: impl FnMut(&RoundReport),
) -> Result<ScenarioRun> {
    cfg.validate()?;
    let partition = cfg.partition(train)?;
    let initial = cfg.fed.initial_model(train.k)?;
    let test_view = test.view_all();

    let pool = match &partition.server_share {
        Some(share) if cfg.scenario == Scenario::S1 => train.view(share)?,
        _ => {
            let views = partition
                .user_shares
                .iter()
                .map(|s| train.view(s))
                .collect::<Result<Vec<_>>>()?;
            DatasetView::concat(&views)?
        }
    };
    let central = centralized_train(&initial, &pool, &test_view, &cfg.fed)?;

    // The observer sees complete rows, so centralized numbers are known first.
    let central_at = |round: u32| -> CentralizedRound {
        if cfg.scenario == Scenario::S1 {
            *central.rounds.last().expect("rounds >= 1")
        } else {
            central.rounds[(round - 1) as usize]
        }
    };
    let fed_run = run_federated(train, &partition, test, &cfg.fed, |r| {
        let c = central_at(r.round);
        observer(&RoundReport {
            centralized_test_mae_m: Some(c.test_mae_m),
            centralized_train_mae_m: Some(c.train_mae_m),
            ..*r
        });
    })?;
    let reports = fed_run
        .reports
        .iter()
        .map(|r| {
            let c = central_at(r.round);
            RoundReport {
                centralized_test_mae_m: Some(c.test_mae_m),
                centralized_train_mae_m: Some(c.train_mae_m),
                ..*r
            }
        })
        .collect();

    // With early stopping, compare against the centralized model of the same round.
    let last_round = fed_run.reports.len();
    let centralized_model = if cfg.scenario == Scenario::S1 {
        central.final_model().clone()
    } else {
        central.models[last_round - 1].clone()
    };
    Ok(ScenarioRun {
        federated_test_coord_mae_m: coordinate_mae(&fed_run.model, &test_view)?,
        centralized_test_coord_mae_m: coordinate_mae(&centralized_model, &test_view)?,
        config: cfg.clone(),
        partition,
        reports,
        federated_model: fed_run.model,
        centralized_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use crate::nn::{Layer, MlpArch};

    fn identity_model() -> ModelWeights {
        let arch = MlpArch::new(2, vec![], 2).unwrap();
        let layer = Layer {
            in_dim: 2,
            out_dim: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![0.0, 0.0],
        };
        ModelWeights::from_layers(arch, vec![layer]).unwrap()
    }

    fn set(points: &[([f64; 2], [f64; 2])]) -> Dataset {
        Dataset {
            samples: points
                .iter()
                .map(|(x, y)| Sample {
                    features: x.to_vec(),
                    label: *y,
                })
                .collect(),
            k: 2,
            origin: (0.0, 0.0),
            missing_value: -150.0,
            normalized: true,
        }
    }

    #[test]
    fn perfect_predictor_has_zero_error() {
        let ds = set(&[([1.0, 2.0], [1.0, 2.0]), ([5.0, 0.5], [5.0, 0.5])]);
        assert_eq!(localization_error(&identity_model(), &ds.view_all()).unwrap(), 0.0);
    }

    #[test]
    fn three_four_five() {
        let ds = set(&[([3.0, 4.0], [0.0, 0.0])]);
        assert_eq!(localization_error(&identity_model(), &ds.view_all()).unwrap(), 5.0);
        assert_eq!(coordinate_mae(&identity_model(), &ds.view_all()).unwrap(), 3.5);
    }

    #[test]
    fn empty_eval_set_is_rejected() {
        let ds = set(&[]);
        assert!(localization_error(&identity_model(), &ds.view_all()).is_err());
        assert!(constant_predictor_error([0.0, 0.0], &ds.view_all()).is_err());
    }

    #[test]
    fn scenario_names_parse() {
        assert_eq!("S2".parse::<Scenario>().unwrap(), Scenario::S2);
        assert_eq!(Scenario::S3.to_string(), "s3");
        assert!("s4".parse::<Scenario>().is_err());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut cfg = ScenarioConfig::new(Scenario::S2, 0);
        assert!(cfg.validate().is_err());
        cfg.n_users = 2;
        cfg.fed.rounds = 0;
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::new(Scenario::S1, 0).validate().is_ok());
    }
}
