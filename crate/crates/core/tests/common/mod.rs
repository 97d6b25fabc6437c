//! Fixtures and reference implementations for the integration tests. The
//! oracles are written from the definitions, without the library's numerics.

#![allow(dead_code)]

use fedloc::data::{preprocess, split_train_test, Dataset, RawRecord, NOT_DETECTED};
use fedloc::fed::{FedConfig, TrainConfig};
use fedloc::nn::{backward, init_weights, MlpArch};
use fedloc::optim::AdamConfig;
use fedloc::partition::{partition_gaussian_spatial, partition_uniform, x_ranges, Partition};
use fedloc::synth::{generate, SyntheticConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small generated fingerprint set: `samples` records over `aps` access
/// points, split into train and `test_count` test samples.
pub fn small_data(samples: usize, aps: usize, test_count: usize, seed: u64) -> (Dataset, Dataset) {
    let records = generate(&SyntheticConfig {
        samples,
        access_points: aps,
        samples_per_point: 5,
        seed,
        ..SyntheticConfig::default()
    });
    let ds = preprocess(&records, -150.0, true).unwrap();
    split_train_test(&ds, test_count, seed).unwrap()
}

/// A quick configuration: tiny network, few steps.
pub fn quick_fed(rounds: u32) -> FedConfig {
    FedConfig {
        train: TrainConfig {
            adam: AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            batch_size: 16,
            epochs: 2,
            seed: 11,
            parallel: false,
        },
        rounds,
        hidden: vec![8, 4],
        init_seed: 5,
        early_stop: None,
    }
}

/// Layer widths `[input, hidden.., output]` of a dense ReLU network.
pub struct OracleNet {
    pub widths: Vec<usize>,
}

impl OracleNet {
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Forward pass over flat parameters laid out per layer as the
    /// row-major `out x in` weight matrix followed by the bias.
    pub fn forward(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let mut off = 0;
        let last = self.widths.len() - 2;
        for (l, w) in self.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            a = (0..n_out)
                .map(|o| {
                    let z: f64 = bias[o] + (0..n_in).map(|i| weights[o * n_in + i] * a[i]).sum::<f64>();
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
        }
        a
    }

    /// Mean over samples and output coordinates of `|prediction - label|`.
    pub fn loss(&self, params: &[f64], xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for (x, y) in xs.iter().zip(ys) {
            for (p, t) in self.forward(params, x).iter().zip(y) {
                total += (p - t).abs();
                count += 1;
            }
        }
        total / count as f64
    }

    /// Pre-activations of every layer, used to detect kinks.
    pub fn preactivations(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        let mut a = x.to_vec();
        let mut off = 0;
        for w in self.widths.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[off..off + n_in * n_out];
            let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let z: Vec<f64> = (0..n_out)
                .map(|o| bias[o] + (0..n_in).map(|i| weights[o * n_in + i] * a[i]).sum::<f64>())
                .collect();
            out.extend_from_slice(&z);
            a = z.iter().map(|v| v.max(0.0)).collect();
        }
        out
    }
}

/// Sample-weighted mean of parameter vectors, accumulated left to right.
pub fn weighted_mean(updates: &[(u64, Vec<f64>)]) -> Vec<f64> {
    let total: f64 = updates.iter().map(|(m, _)| *m as f64).sum();
    let dim = updates[0].1.len();
    (0..dim)
        .map(|j| updates.iter().map(|(m, w)| *m as f64 * w[j]).sum::<f64>() / total)
        .collect()
}

/// One bias-corrected Adam step written out term by term.
pub fn adam_reference(w: f64, g: f64, lr: f64, b1: f64, b2: f64, eps: f64) -> f64 {
    let m = (1.0 - b1) * g;
    let v = (1.0 - b2) * g * g;
    let m_hat = m / (1.0 - b1);
    let v_hat = v / (1.0 - b2);
    w - lr * m_hat / (v_hat.sqrt() + eps)
}

/// Finite-difference step and the distance every pre-activation and
/// residual must keep from zero so the step never crosses a kink.
const FD_STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;

/// Builds a random network with all widths at most 10 and a random batch,
/// then returns the largest relative disagreement between the analytic
/// gradient and central finite differences. Draws are repeated until the
/// point sits away from every kink.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let input = rng.random_range(1..=10);
        let hidden: Vec<usize> = (0..rng.random_range(0..=3)).map(|_| rng.random_range(1..=10)).collect();
        let output = rng.random_range(1..=10);
        let arch = MlpArch::new(input, hidden.clone(), output).unwrap();
        let mut model = init_weights(&arch, rng.random()).unwrap();
        for p in model.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let batch = rng.random_range(1..=6);
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..output).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let mut widths = vec![input];
        widths.extend(&hidden);
        widths.push(output);
        let net = OracleNet { widths };
        let flat = model.to_flat();
        let near_kink = xs.iter().zip(&ys).any(|(x, y)| {
            let z = net.preactivations(&flat, x);
            let hidden_z = &z[..z.len() - output];
            let pred = net.forward(&flat, x);
            hidden_z.iter().any(|v| v.abs() < KINK_MARGIN)
                || pred.iter().zip(y).any(|(p, t)| (p - t).abs() < KINK_MARGIN)
        });
        if near_kink {
            continue;
        }

        let (grads, _) = backward(&model, &xs, &ys).unwrap();
        let analytic = grads.to_flat();
        let mut worst = 0.0f64;
        let mut probe = flat.clone();
        for j in 0..flat.len() {
            probe[j] = flat[j] + FD_STEP;
            let up = net.loss(&probe, &xs, &ys);
            probe[j] = flat[j] - FD_STEP;
            let down = net.loss(&probe, &xs, &ys);
            probe[j] = flat[j];
            let numeric = (up - down) / (2.0 * FD_STEP);
            let scale = analytic[j].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[j] - numeric).abs() / scale);
        }
        return worst;
    }
}

fn disjoint(p: &Partition, len: usize) -> Result<(), String> {
    let mut seen = vec![false; len];
    for i in p.all_indices() {
        if i >= len {
            return Err(format!("index {i} out of range"));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(format!("index {i} used twice"));
        }
    }
    Ok(())
}

/// Checks every partitioning rule for one seed on `train`.
pub fn check_partitions(train: &Dataset, seed: u64) -> Result<(), String> {
    let len = train.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Uniform shares, with and without a server pool.
    let n = rng.random_range(1..=8);
    let per = rng.random_range(1..=len / (n + 1));
    let server = rng.random_range(0..=len - n * per);
    let p = partition_uniform(train, n, per, server, seed).map_err(|e| e.to_string())?;
    disjoint(&p, len)?;
    if p.user_sizes() != vec![per; n] || p.server_share.as_ref().map_or(0, Vec::len) != server {
        return Err(format!("uniform sizes wrong: {:?}", p.user_sizes()));
    }
    if p != partition_uniform(train, n, per, server, seed).unwrap() {
        return Err("uniform partition not deterministic".into());
    }
    // Exact cover: every sample assigned exactly once.
    let full = partition_uniform(train, 1, len, 0, seed).unwrap();
    if full.all_indices().len() != len {
        return Err("full partition does not cover the set".into());
    }
    disjoint(&full, len)?;

    // Gaussian sizes, spatially exclusive.
    let n = rng.random_range(2..=10);
    let p = partition_gaussian_spatial(train, n, 300.0, 150.0, seed).map_err(|e| e.to_string())?;
    disjoint(&p, len)?;
    if p != partition_gaussian_spatial(train, n, 300.0, 150.0, seed).unwrap() {
        return Err("spatial partition not deterministic".into());
    }
    let ranges = x_ranges(train, &p);
    for (i, a) in ranges.iter().enumerate() {
        for b in &ranges[i + 1..] {
            if !(a.1 < b.0 || b.1 < a.0) {
                return Err(format!("x ranges overlap: {a:?} {b:?}"));
            }
        }
    }
    if p.user_shares.iter().any(Vec::is_empty) {
        return Err("empty spatial share".into());
    }
    Ok(())
}

/// Preprocesses `records` three ways and checks the feature encoding.
pub fn check_preprocessing(records: &[RawRecord]) -> Result<(), String> {
    let raw = preprocess(records, -150.0, false).map_err(|e| e.to_string())?;
    let norm = preprocess(records, -150.0, true).map_err(|e| e.to_string())?;
    for ((rec, r), n) in records.iter().zip(&raw.samples).zip(&norm.samples) {
        for ((&rss, &f), &g) in rec.wap_rss.iter().zip(&r.features).zip(&n.features) {
            if f == NOT_DETECTED as f64 {
                return Err("sentinel survived preprocessing".into());
            }
            if rss == NOT_DETECTED && f != -150.0 {
                return Err(format!("missing AP encoded as {f}"));
            }
            if rss != NOT_DETECTED && f != rss as f64 {
                return Err(format!("detected {rss} dBm became {f}"));
            }
            if !(0.0..=1.04).contains(&g) {
                return Err(format!("normalized feature {g} out of range"));
            }
            let want = (rss.min(0) as f64 + 150.0) / 150.0;
            let want = if rss == NOT_DETECTED { 0.0 } else { want };
            if (g - want).abs() > 1e-15 {
                return Err(format!("normalized {rss} dBm gave {g}, expected {want}"));
            }
        }
        if r.label[0] < 0.0 || r.label[1] < 0.0 {
            return Err("labels not shifted to a non-negative frame".into());
        }
    }
    Ok(())
}

/// Runs a federation over loopback TCP: one thread per client, the server
/// on the calling thread.
pub fn networked_run(
    train: &Dataset,
    test: &Dataset,
    partition: &Partition,
    fed: &FedConfig,
    record_traffic: bool,
) -> fedloc::Result<fedloc::net::ServeOutcome> {
    use fedloc::net::{run_client, ClientConfig, ServeConfig, Server};
    use std::time::Duration;

    let server = Server::bind("127.0.0.1:0")?;
    let addr = server.local_addr()?;
    let cfg = ServeConfig {
        startup_timeout: Duration::from_secs(30),
        round_timeout: Some(Duration::from_secs(120)),
        record_traffic,
        ..ServeConfig::new(fed.clone(), partition.n_users())
    };
    let client_cfg = ClientConfig {
        train: fed.train.clone(),
        ..ClientConfig::default()
    };
    std::thread::scope(|s| {
        let clients: Vec<_> = partition
            .user_shares
            .iter()
            .enumerate()
            .map(|(i, share)| {
                let shard = train.view(share).unwrap();
                let client_cfg = &client_cfg;
                s.spawn(move || run_client(addr, i as u32 + 1, &shard, client_cfg))
            })
            .collect();
        let own = partition.server_share.as_ref().map(|sh| train.view(sh).unwrap());
        let outcome = server.run(&cfg, test, own.as_ref(), |_| {});
        for c in clients {
            let summary = c.join().expect("client thread")?;
            if outcome.is_ok() {
                assert_eq!(summary.rounds_trained as usize, fed.rounds as usize);
            }
        }
        outcome
    })
}

/// Compares an in-process run with a loopback run of the same setup.
pub fn check_mode_equivalence(n_users: usize, server_pool: usize, rounds: u32) -> Result<(), String> {
    let (train, test) = small_data(1400, 24, 200, 21);
    let partition = partition_uniform(&train, n_users, 120, server_pool, 3).map_err(|e| e.to_string())?;
    let fed = quick_fed(rounds);
    let local = fedloc::fed::run_federated(&train, &partition, &test, &fed, |_| {}).map_err(|e| e.to_string())?;
    let remote = networked_run(&train, &test, &partition, &fed, false).map_err(|e| e.to_string())?;
    if local.reports.len() != rounds as usize {
        return Err(format!("{} rounds in process", local.reports.len()));
    }
    for (a, b) in local.reports.iter().zip(&remote.reports) {
        let bits = |r: &fedloc::scenarios::RoundReport| {
            (r.round, r.federated_test_mae_m.to_bits(), r.federated_train_mae_m.to_bits())
        };
        if bits(a) != bits(b) {
            return Err(format!("round {} differs: {a:?} vs {b:?}", a.round));
        }
    }
    if local.reports.len() != remote.reports.len() {
        return Err("different number of rounds".into());
    }
    let same_model = local
        .model
        .params()
        .zip(remote.model.params())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same_model {
        return Err("final models differ".into());
    }
    Ok(())
}
