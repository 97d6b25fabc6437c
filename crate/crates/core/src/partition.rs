//! Assignment of training samples to users.
//!
//! [`partition_uniform`] draws equally sized random shares (optionally with a
//! server-held pool). [`partition_gaussian_spatial`] gives users Gaussian
//! sample counts and spatially exclusive regions: the training set is sorted
//! by x-coordinate and cut into contiguous slabs, one per user.

use std::collections::HashSet;

use rand::seq::{index, IndexedRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};

/// Users never receive fewer samples than this under Gaussian sizing.
pub const MIN_GAUSSIAN_SHARE: usize = 50;

/// Disjoint index lists into a training [`Dataset`].
///
/// `user_shares[i]` belongs to the user with id `i + 1`; id 0 is the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub user_shares: Vec<Vec<usize>>,
    pub server_share: Option<Vec<usize>>,
}

impl Partition {
    pub fn n_users(&self) -> usize {
        self.user_shares.len()
    }

    pub fn user_sizes(&self) -> Vec<usize> {
        self.user_shares.iter().map(Vec::len).collect()
    }

    /// Every index used by any share, server first then users in order.
    pub fn all_indices(&self) -> Vec<usize> {
        self.server_share
            .iter()
            .chain(&self.user_shares)
            .flat_map(|s| s.iter().copied())
            .collect()
    }

    /// Checks pairwise disjointness and that every index is `< train_len`.
    pub fn validate(&self, train_len: usize) -> Result<()> {
        let mut seen = HashSet::new();
        for idx in self.all_indices() {
            if idx >= train_len {
                return Err(invalid(format!("index {idx} outside training set of {train_len}")));
            }
            if !seen.insert(idx) {
                return Err(invalid(format!("index {idx} assigned twice")));
            }
        }
        Ok(())
    }
}

/// `n` users with exactly `per_user` random samples each, plus a server pool
/// of `server_count` samples when nonzero.
pub fn partition_uniform(
    train: &Dataset,
    n: usize,
    per_user: usize,
    server_count: usize,
    seed: u64,
) -> Result<Partition> {
    let needed = n
        .checked_mul(per_user)
        .and_then(|u| u.checked_add(server_count))
        .ok_or_else(|| invalid("requested share sizes overflow"))?;
    if needed > train.len() {
        return Err(invalid(format!(
            "{n} users x {per_user} + {server_count} server samples exceeds {} training samples",
            train.len()
        )));
    }
    if n > 0 && per_user == 0 {
        return Err(invalid("per_user must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, train.len(), needed).into_vec();
    let (server, users) = picked.split_at(server_count);
    let server_share = (server_count > 0).then(|| server.to_vec());
    let user_shares = users.chunks(per_user.max(1)).map(<[usize]>::to_vec).collect();
    Ok(Partition {
        user_shares,
        server_share,
    })
}

/// Gaussian share sizes: `Normal(mean, std)` draws rounded to the nearest
/// integer and clamped to `[MIN_GAUSSIAN_SHARE, available]`. When the total
/// exceeds `available`, sizes are scaled down proportionally.
pub fn gaussian_sizes(n: usize, mean: f64, std: f64, available: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(invalid("at least one user is required"));
    }
    if !mean.is_finite() || !std.is_finite() || mean <= 0.0 || std < 0.0 {
        return Err(invalid(format!("invalid size distribution N({mean}, {std})")));
    }
    let floor = MIN_GAUSSIAN_SHARE.min(available / n);
    if floor == 0 {
        return Err(invalid(format!("{available} samples cannot serve {n} users")));
    }
    let normal = Normal::new(mean, std).expect("validated parameters");
    let mut sizes: Vec<usize> = (0..n)
        .map(|_| {
            let draw = normal.sample(rng).round();
            draw.clamp(floor as f64, available as f64) as usize
        })
        .collect();
    let total: usize = sizes.iter().sum();
    if total > available {
        let scale = available as f64 / total as f64;
        for s in &mut sizes {
            *s = ((*s as f64 * scale).floor() as usize).max(1);
        }
    }
    Ok(sizes)
}

/// Spatially exclusive shares of Gaussian size.
///
/// Samples are sorted by x (ties broken by y, then index). Slab boundaries
/// sit at the cumulative size proportions of the sorted list and are moved
/// forward past equal x values, so no two users share an x-coordinate. Each
/// user draws its size at random from its own slab.
pub fn partition_gaussian_spatial(
    train: &Dataset,
    n: usize,
    mean: f64,
    std: f64,
    seed: u64,
) -> Result<Partition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = gaussian_sizes(n, mean, std, train.len(), &mut rng)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (train.samples[a].label, train.samples[b].label);
        la[0].total_cmp(&lb[0]).then(la[1].total_cmp(&lb[1])).then(a.cmp(&b))
    });
    let x_of = |pos: usize| train.samples[order[pos]].label[0];

    let total: usize = sizes.iter().sum();
    let len = order.len();
    let mut user_shares = Vec::with_capacity(n);
    let mut start = 0usize;
    let mut cumulative = 0usize;
    for (u, &size) in sizes.iter().enumerate() {
        cumulative += size;
        let mut end = if u + 1 == n {
            len
        } else {
            ((len as u128 * cumulative as u128) / total as u128) as usize
        };
        end = end.max(start);
        while end > 0 && end < len && x_of(end) == x_of(end - 1) {
            end += 1;
        }
        if end <= start {
            return Err(invalid(format!(
                "user {} got an empty spatial region; too few distinct x positions",
                u + 1
            )));
        }
        let slab = &order[start..end];
        let take = size.min(slab.len());
        let mut share: Vec<usize> = slab.choose_multiple(&mut rng, take).copied().collect();
        share.sort_unstable();
        user_shares.push(share);
        start = end;
    }
    Ok(Partition {
        user_shares,
        server_share: None,
    })
}

/// Closed x-interval covered by each share.
pub fn x_ranges(train: &Dataset, partition: &Partition) -> Vec<(f64, f64)> {
    partition
        .user_shares
        .iter()
        .map(|share| {
            share.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let x = train.samples[i].label[0];
                (lo.min(x), hi.max(x))
            })
        })
        .collect()
}
