//! Command-line front end.
//!
//! Configuration is resolved in three layers: built-in defaults, then an
//! optional flat `key = value` file (`--config`), then flags. The resolved
//! configuration is written next to the results as `config.txt`, in the same
//! file format, so `--config out/config.txt` reproduces a run.
//!
//! Artifacts in `--out`:
//!
//! * `rounds.csv`, one row per round (`n<N>/rounds.csv` per user count when
//!   `--users` lists several values),
//! * `summary.json`, final-round numbers of every run,
//! * `config.txt`, the resolved configuration.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use clap::{Parser, ValueEnum};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::fed::{EarlyStop, FedConfig, TrainConfig};
use crate::net::{self, ClientConfig, ServeConfig, Server};
use crate::nn::DEFAULT_HIDDEN;
use crate::optim::AdamConfig;
use crate::report::{RoundsWriter, RunSummary, Summary};
use crate::scenarios::{self, centralized_train, coordinate_mae, RoundReport, Scenario, ScenarioConfig};
use crate::synth::{self, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Run federated and centralized training in one process.
    Simulate,
    /// Coordinate a federation of networked clients.
    Serve,
    /// Join a federation as one user.
    Client,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Serve => "serve",
            Mode::Client => "client",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <Mode as ValueEnum>::from_str(s, true).map_err(|_| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// Every setting of an experiment. Defaults are the reference
/// hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub scenario: Scenario,
    /// One run per entry in simulate mode. Serve mode uses exactly one entry
    /// as the number of clients to wait for.
    pub users: Vec<usize>,
    pub rounds: u32,
    pub train_csv: Option<PathBuf>,
    pub synthetic: bool,
    pub synthetic_samples: usize,
    pub test_count: usize,
    pub missing_value: f64,
    pub normalize: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden: Vec<usize>,
    pub seed_data: u64,
    pub seed_init: u64,
    pub seed_train: u64,
    pub seed_partition: u64,
    pub s1_server_samples: usize,
    pub s1_user_samples: usize,
    pub s2_user_samples: usize,
    pub s3_mean: f64,
    pub s3_std: f64,
    /// Rounds without improvement before stopping; 0 disables early stopping.
    pub patience: u32,
    pub min_delta: f64,
    pub parallel: bool,
    pub out: PathBuf,
    pub listen: String,
    pub connect: Option<String>,
    pub user_id: Option<u32>,
    pub startup_timeout_s: f64,
    /// 0 waits forever.
    pub round_timeout_s: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let train = TrainConfig::default();
        let sc = ScenarioConfig::new(Scenario::S2, 15);
        Self {
            mode: Mode::Simulate,
            scenario: Scenario::S2,
            users: vec![15],
            rounds: 100,
            train_csv: None,
            synthetic: false,
            synthetic_samples: SyntheticConfig::default().samples,
            test_count: 3000,
            missing_value: data::DEFAULT_MISSING_VALUE,
            normalize: data::DEFAULT_NORMALIZE,
            lr: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: train.batch_size,
            epochs: train.epochs,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed_data: 1,
            seed_init: 2,
            seed_train: 3,
            seed_partition: 4,
            s1_server_samples: sc.s1_server_samples,
            s1_user_samples: sc.s1_user_samples,
            s2_user_samples: sc.s2_user_samples,
            s3_mean: sc.s3_mean,
            s3_std: sc.s3_std,
            patience: 0,
            min_delta: EarlyStop::default().min_delta,
            parallel: true,
            out: PathBuf::from("out"),
            listen: "127.0.0.1:7878".into(),
            connect: None,
            user_id: None,
            startup_timeout_s: 300.0,
            round_timeout_s: 0.0,
        }
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl ExperimentConfig {
    /// `(key, value)` pairs in file order. Floats use their shortest exact
    /// representation, so the text reproduces the configuration bit for bit.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let opt = |o: &Option<String>| o.clone().unwrap_or_default();
        vec![
            ("mode", self.mode.as_str().into()),
            ("scenario", self.scenario.to_string()),
            ("users", join(&self.users)),
            ("rounds", self.rounds.to_string()),
            (
                "train_csv",
                self.train_csv.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            ),
            ("synthetic", self.synthetic.to_string()),
            ("synthetic_samples", self.synthetic_samples.to_string()),
            ("test_count", self.test_count.to_string()),
            ("missing_value", self.missing_value.to_string()),
            ("normalize", self.normalize.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("hidden", join(&self.hidden)),
            ("seed_data", self.seed_data.to_string()),
            ("seed_init", self.seed_init.to_string()),
            ("seed_train", self.seed_train.to_string()),
            ("seed_partition", self.seed_partition.to_string()),
            ("s1_server_samples", self.s1_server_samples.to_string()),
            ("s1_user_samples", self.s1_user_samples.to_string()),
            ("s2_user_samples", self.s2_user_samples.to_string()),
            ("s3_mean", self.s3_mean.to_string()),
            ("s3_std", self.s3_std.to_string()),
            ("patience", self.patience.to_string()),
            ("min_delta", self.min_delta.to_string()),
            ("parallel", self.parallel.to_string()),
            ("out", self.out.display().to_string()),
            ("listen", self.listen.clone()),
            ("connect", opt(&self.connect)),
            ("user_id", self.user_id.map(|u| u.to_string()).unwrap_or_default()),
            ("startup_timeout_s", self.startup_timeout_s.to_string()),
            ("round_timeout_s", self.round_timeout_s.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Sets one key from its textual value. Empty values clear optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let opt_string = || (!v.is_empty()).then(|| v.to_string());
        match key {
            "mode" => self.mode = v.parse()?,
            "scenario" => self.scenario = v.parse()?,
            "users" => self.users = parse_list(key, v)?,
            "rounds" => self.rounds = parse_value(key, v)?,
            "train_csv" => self.train_csv = opt_string().map(PathBuf::from),
            "synthetic" => self.synthetic = parse_value(key, v)?,
            "synthetic_samples" => self.synthetic_samples = parse_value(key, v)?,
            "test_count" => self.test_count = parse_value(key, v)?,
            "missing_value" => self.missing_value = parse_value(key, v)?,
            "normalize" => self.normalize = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "beta1" => self.beta1 = parse_value(key, v)?,
            "beta2" => self.beta2 = parse_value(key, v)?,
            "epsilon" => self.epsilon = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "seed_data" => self.seed_data = parse_value(key, v)?,
            "seed_init" => self.seed_init = parse_value(key, v)?,
            "seed_train" => self.seed_train = parse_value(key, v)?,
            "seed_partition" => self.seed_partition = parse_value(key, v)?,
            "s1_server_samples" => self.s1_server_samples = parse_value(key, v)?,
            "s1_user_samples" => self.s1_user_samples = parse_value(key, v)?,
            "s2_user_samples" => self.s2_user_samples = parse_value(key, v)?,
            "s3_mean" => self.s3_mean = parse_value(key, v)?,
            "s3_std" => self.s3_std = parse_value(key, v)?,
            "patience" => self.patience = parse_value(key, v)?,
            "min_delta" => self.min_delta = parse_value(key, v)?,
            "parallel" => self.parallel = parse_value(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "listen" => self.listen = v.to_string(),
            "connect" => self.connect = opt_string(),
            "user_id" => self.user_id = if v.is_empty() { None } else { Some(parse_value(key, v)?) },
            "startup_timeout_s" => self.startup_timeout_s = parse_value(key, v)?,
            "round_timeout_s" => self.round_timeout_s = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: i as u64 + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: i as u64 + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Rejects combinations that cannot run.
    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Config(m));
        if self.train_csv.is_none() && !self.synthetic {
            return usage("no training data: pass --train-csv or --synthetic".into());
        }
        if self.train_csv.is_some() && self.synthetic {
            return usage("--train-csv and --synthetic are mutually exclusive".into());
        }
        if self.rounds == 0 {
            return usage("--rounds must be at least 1".into());
        }
        if self.users.is_empty() {
            return usage("--users needs at least one value".into());
        }
        if self.missing_value >= data::MIN_RSS_DBM as f64 {
            return usage(format!(
                "--missing-value must be below the weakest detectable signal ({} dBm)",
                data::MIN_RSS_DBM
            ));
        }
        match self.mode {
            Mode::Simulate => {}
            Mode::Serve => {
                if self.users.len() != 1 {
                    return usage("serve mode takes a single --users value".into());
                }
                if self.users[0] == 0 && self.scenario != Scenario::S1 {
                    return usage("serve mode needs at least one client".into());
                }
            }
            Mode::Client => {
                if self.connect.is_none() {
                    return usage("client mode requires --connect".into());
                }
                match self.user_id {
                    None => return usage("client mode requires --user-id".into()),
                    Some(0) => return usage("--user-id 0 is reserved for the server".into()),
                    Some(_) => {}
                }
                if self.users.len() != 1 {
                    return usage("client mode takes a single --users value".into());
                }
            }
        }
        self.train_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: self.adam(),
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed_train,
            parallel: self.parallel,
        }
    }

    pub fn fed_config(&self) -> FedConfig {
        FedConfig {
            train: self.train_config(),
            rounds: self.rounds,
            hidden: self.hidden.clone(),
            init_seed: self.seed_init,
            early_stop: (self.patience > 0).then_some(EarlyStop {
                patience: self.patience,
                min_delta: self.min_delta,
            }),
        }
    }

    pub fn scenario_config(&self, n_users: usize) -> ScenarioConfig {
        ScenarioConfig {
            scenario: self.scenario,
            n_users,
            fed: self.fed_config(),
            partition_seed: self.seed_partition,
            s1_server_samples: self.s1_server_samples,
            s1_user_samples: self.s1_user_samples,
            s2_user_samples: self.s2_user_samples,
            s3_mean: self.s3_mean,
            s3_std: self.s3_std,
        }
    }

    /// Loads or generates the records, preprocesses them and splits off the
    /// test set. Every mode derives the same split from the same settings.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let records = match &self.train_csv {
            Some(path) => data::load_csv(path)?,
            None => synth::generate(&SyntheticConfig {
                samples: self.synthetic_samples,
                seed: self.seed_data,
                ..SyntheticConfig::default()
            }),
        };
        let dataset = data::preprocess(&records, self.missing_value, self.normalize)?;
        data::split_train_test(&dataset, self.test_count, self.seed_data)
    }
}

#[derive(Debug, Parser)]
#[command(name = "fedloc", version, about = "Federated RSS-fingerprint localization experiments")]
pub struct Args {
    /// Mode as a positional word (`fedloc simulate ...`).
    #[arg(value_enum)]
    pub mode_word: Option<Mode>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// s1 (server pool + users), s2 (uniform users) or s3 (Gaussian, spatial).
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// Number of users; a comma list runs a sweep.
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<usize>>,
    #[arg(long)]
    pub rounds: Option<u32>,
    /// UJIIndoorLoc-format training CSV.
    #[arg(long)]
    pub train_csv: Option<PathBuf>,
    /// Use generated fingerprints instead of a CSV.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub synthetic_samples: Option<usize>,
    /// Samples held out for testing.
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub seed_data: Option<u64>,
    #[arg(long)]
    pub seed_init: Option<u64>,
    #[arg(long)]
    pub seed_train: Option<u64>,
    #[arg(long)]
    pub seed_partition: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Address the server binds in serve mode.
    #[arg(long)]
    pub listen: Option<String>,
    /// Server address in client mode.
    #[arg(long)]
    pub connect: Option<String>,
    #[arg(long)]
    pub user_id: Option<u32>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Local epochs per round.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Value substituted for undetected access points (dBm).
    #[arg(long, allow_hyphen_values = true)]
    pub missing_value: Option<f64>,
    /// Map RSS affinely to [0, 1] (true/false).
    #[arg(long)]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub s1_server_samples: Option<usize>,
    #[arg(long)]
    pub s1_user_samples: Option<usize>,
    #[arg(long)]
    pub s2_user_samples: Option<usize>,
    #[arg(long)]
    pub s3_mean: Option<f64>,
    #[arg(long)]
    pub s3_std: Option<f64>,
    /// Stop after this many rounds without test improvement (0 = never).
    #[arg(long)]
    pub patience: Option<u32>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    /// Train users on several threads (results are identical either way).
    #[arg(long)]
    pub parallel: Option<bool>,
    #[arg(long)]
    pub startup_timeout_s: Option<f64>,
    #[arg(long)]
    pub round_timeout_s: Option<f64>,
}

impl Args {
    /// Resolves defaults, then the `--config` file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        match (self.mode_word, self.mode) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "conflicting modes {} and {}",
                    a.as_str(),
                    b.as_str()
                )))
            }
            (Some(m), _) | (None, Some(m)) => cfg.mode = m,
            (None, None) => {}
        }
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        take!(
            scenario, users, rounds, synthetic_samples, test_count, seed_data, seed_init, seed_train,
            seed_partition, out, listen, lr, beta1, beta2, epsilon, batch_size, epochs, hidden,
            missing_value, normalize, s1_server_samples, s1_user_samples, s2_user_samples, s3_mean,
            s3_std, patience, min_delta, parallel, startup_timeout_s, round_timeout_s
        );
        if let Some(p) = &self.train_csv {
            cfg.train_csv = Some(p.clone());
            cfg.synthetic = false;
        }
        if self.synthetic {
            cfg.synthetic = true;
            if self.train_csv.is_none() {
                cfg.train_csv = None;
            }
        }
        if let Some(c) = &self.connect {
            cfg.connect = Some(c.clone());
        }
        if let Some(u) = self.user_id {
            cfg.user_id = Some(u);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub out_dir: PathBuf,
}

fn rounds_path(cfg: &ExperimentConfig, n: usize) -> (PathBuf, String) {
    if cfg.users.len() > 1 {
        let rel = format!("n{n}/rounds.csv");
        (cfg.out.join(&rel), rel)
    } else {
        (cfg.out.join("rounds.csv"), "rounds.csv".to_string())
    }
}

/// Runs an experiment and writes its artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    let (train, test) = cfg.load_data()?;
    log::info!(
        "{} training and {} test samples, {} access points",
        train.len(),
        test.len(),
        train.k
    );
    let summary = match cfg.mode {
        Mode::Simulate => simulate(cfg, &train, &test)?,
        Mode::Serve => serve(cfg, &train, &test)?,
        Mode::Client => {
            client(cfg, &train)?;
            Summary {
                mode: cfg.mode.as_str().into(),
                runs: Vec::new(),
            }
        }
    };
    if cfg.mode != Mode::Client {
        crate::report::write_summary(cfg.out.join("summary.json"), &summary)?;
    }
    Ok(Outcome {
        summary,
        out_dir: cfg.out.clone(),
    })
}

/// Streams rows to `writer`, remembering the first write failure so the
/// training loop (which cannot fail from inside the observer) can report it.
struct RowSink {
    writer: RoundsWriter,
    failure: Option<Error>,
}

impl RowSink {
    fn new(path: &Path) -> Result<Self> {
        Ok(Self {
            writer: RoundsWriter::create(path)?,
            failure: None,
        })
    }

    fn push(&mut self, r: &RoundReport) {
        if self.failure.is_none() {
            if let Err(e) = self.writer.write(r) {
                self.failure = Some(e);
            }
        }
    }

    fn finish(self) -> Result<()> {
        self.failure.map_or(Ok(()), Err)
    }
}

fn simulate(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Summary> {
    let mut runs = Vec::with_capacity(cfg.users.len());
    for &n in &cfg.users {
        let sc = cfg.scenario_config(n);
        let (path, rel) = rounds_path(cfg, n);
        let mut sink = RowSink::new(&path)?;
        log::info!("{} with {n} users, {} rounds", cfg.scenario, cfg.rounds);
        let run = scenarios::run_scenario(&sc, train, test, |r| {
            log::info!(
                "n={n} round {}: federated {:.3} m, centralized {:.3} m",
                r.round,
                r.federated_test_mae_m,
                r.centralized_test_mae_m.unwrap_or(f64::NAN)
            );
            sink.push(r);
        })?;
        sink.finish()?;
        runs.push(RunSummary::from_run(&run, rel)?);
    }
    Ok(Summary {
        mode: cfg.mode.as_str().into(),
        runs,
    })
}

fn serve(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Summary> {
    let n = cfg.users[0];
    let sc = cfg.scenario_config(n);
    let partition = sc.partition(train)?;
    let own_share = partition.server_share.as_ref().map(|s| train.view(s)).transpose()?;
    // Bind before the baseline runs so early clients queue instead of failing.
    let server = Server::bind(&cfg.listen)?;
    log::info!("listening on {}, waiting for {n} clients", server.local_addr()?);

    let fed = cfg.fed_config();
    let test_view = test.view_all();
    let baseline = match (&own_share, cfg.scenario) {
        (Some(pool), Scenario::S1) => {
            let initial = fed.initial_model(train.k)?;
            let central = centralized_train(&initial, pool, &test_view, &fed)?;
            let last = *central.rounds.last().expect("rounds >= 1");
            Some((last, coordinate_mae(central.final_model(), &test_view)?))
        }
        _ => None,
    };

    let serve_cfg = ServeConfig {
        fed,
        expected_clients: n,
        startup_timeout: Duration::from_secs_f64(cfg.startup_timeout_s),
        round_timeout: (cfg.round_timeout_s > 0.0).then(|| Duration::from_secs_f64(cfg.round_timeout_s)),
        record_traffic: false,
    };
    let (path, rel) = rounds_path(cfg, n);
    let mut sink = RowSink::new(&path)?;
    let fill = |r: &RoundReport| RoundReport {
        centralized_test_mae_m: baseline.map(|(c, _)| c.test_mae_m),
        centralized_train_mae_m: baseline.map(|(c, _)| c.train_mae_m),
        ..*r
    };
    let outcome = server.run(&serve_cfg, test, own_share.as_ref(), |r| sink.push(&fill(r)))?;
    sink.finish()?;
    let reports: Vec<RoundReport> = outcome.reports.iter().map(fill).collect();
    let mut run = RunSummary::from_reports(&cfg.scenario.to_string(), n, &reports, partition.user_sizes(), rel)?;
    run.federated_test_coord_mae_m = Some(coordinate_mae(&outcome.model, &test_view)?);
    run.centralized_test_coord_mae_m = baseline.map(|(_, coord)| coord);
    Ok(Summary {
        mode: cfg.mode.as_str().into(),
        runs: vec![run],
    })
}

fn client(cfg: &ExperimentConfig, train: &Dataset) -> Result<()> {
    let user_id = cfg.user_id.expect("validated");
    let addr = cfg.connect.as_deref().expect("validated");
    let partition = cfg.scenario_config(cfg.users[0]).partition(train)?;
    let share = partition
        .user_shares
        .get(user_id as usize - 1)
        .ok_or_else(|| Error::Config(format!("user id {user_id} exceeds the {} users", partition.n_users())))?;
    let shard = train.view(share)?;
    let client_cfg = ClientConfig {
        train: cfg.train_config(),
        read_timeout: (cfg.round_timeout_s > 0.0).then(|| Duration::from_secs_f64(cfg.round_timeout_s)),
        ..ClientConfig::default()
    };
    let summary = net::run_client(addr, user_id, &shard, &client_cfg)?;
    log::info!(
        "user {user_id}: trained {} rounds, server said {:?}",
        summary.rounds_trained,
        summary.shutdown_reason
    );
    Ok(())
}

/// Parses `args`, runs, and returns the process exit code: 0 on success,
/// 2 for usage errors, 1 for failures during the run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run(&cfg) {
        Ok(outcome) => {
            for r in &outcome.summary.runs {
                println!(
                    "{}: federated test {:.3} m, centralized test {}",
                    r.label,
                    r.federated_test_mae_m,
                    r.centralized_test_mae_m
                        .map(|v| format!("{v:.3} m"))
                        .unwrap_or_else(|| "n/a".into())
                );
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                2
            } else {
                1
            }
        }
    }
}
