//! Synthetic fingerprint surveys in the UJIIndoorLoc CSV layout.
//!
//! A log-distance path-loss model over a 390 m x 270 m campus of three
//! multi-floor buildings. Each reference point is surveyed several times, as
//! in the real survey, so many samples share one label. The output is only a
//! stand-in for demos and tests; it is not calibrated against real radio
//! measurements.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{RawRecord, MIN_RSS_DBM, NOT_DETECTED, UJI_WAP_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub samples: usize,
    pub access_points: usize,
    pub samples_per_point: usize,
    pub floors: u32,
    /// RSS at 1 m, dBm.
    pub tx_power: f64,
    pub path_loss_exponent: f64,
    pub floor_attenuation: f64,
    pub building_attenuation: f64,
    /// Static per (AP, reference point) shadowing, dB.
    pub shadowing_std: f64,
    /// Per-measurement noise, dB.
    pub noise_std: f64,
    /// Weakest RSS a phone reports; anything below is "not detected".
    pub sensitivity: f64,
    pub origin: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            samples: 19937,
            access_points: UJI_WAP_COUNT,
            samples_per_point: 20,
            floors: 4,
            tx_power: -35.0,
            path_loss_exponent: 3.3,
            floor_attenuation: 14.0,
            building_attenuation: 18.0,
            shadowing_std: 5.0,
            noise_std: 3.0,
            sensitivity: -100.0,
            origin: (-7691.3384, 4864745.7450),
            seed: 2014,
        }
    }
}

/// Building footprints `(x0, y0, x1, y1)` in local meters.
const BUILDINGS: [(f64, f64, f64, f64); 3] = [
    (0.0, 170.0, 120.0, 270.0),
    (110.0, 80.0, 260.0, 190.0),
    (250.0, 0.0, 390.0, 110.0),
];

#[derive(Debug, Clone, Copy)]
struct Site {
    x: f64,
    y: f64,
    floor: u32,
    building: usize,
}

fn random_site(rng: &mut ChaCha8Rng, floors: u32) -> Site {
    let building = rng.random_range(0..BUILDINGS.len());
    let (x0, y0, x1, y1) = BUILDINGS[building];
    Site {
        x: rng.random_range(x0..x1),
        y: rng.random_range(y0..y1),
        floor: rng.random_range(0..floors.max(1)),
        building,
    }
}

/// Generates `cfg.samples` records, deterministic in `cfg.seed`.
pub fn generate(cfg: &SyntheticConfig) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let aps: Vec<Site> = (0..cfg.access_points)
        .map(|_| random_site(&mut rng, cfg.floors))
        .collect();
    let per_point = cfg.samples_per_point.max(1);
    let n_points = cfg.samples.div_ceil(per_point);
    let points: Vec<Site> = (0..n_points).map(|_| random_site(&mut rng, cfg.floors)).collect();
    let shadow = Normal::new(0.0, cfg.shadowing_std.max(0.0)).expect("finite std");
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("finite std");

    let mut records = Vec::with_capacity(cfg.samples);
    for (p_idx, point) in points.iter().enumerate() {
        let mean_rss: Vec<f64> = aps
            .iter()
            .map(|ap| {
                let d = ((ap.x - point.x).powi(2) + (ap.y - point.y).powi(2) + (3.5 * (ap.floor as f64 - point.floor as f64)).powi(2))
                    .sqrt()
                    .max(1.0);
                let mut rss = cfg.tx_power - 10.0 * cfg.path_loss_exponent * d.log10();
                rss -= cfg.floor_attenuation * (ap.floor as f64 - point.floor as f64).abs();
                if ap.building != point.building {
                    rss -= cfg.building_attenuation;
                }
                rss + shadow.sample(&mut rng)
            })
            .collect();
        for rep in 0..per_point {
            if records.len() == cfg.samples {
                break;
            }
            let wap_rss = mean_rss
                .iter()
                .map(|&m| {
                    let rss = m + noise.sample(&mut rng);
                    if rss < cfg.sensitivity {
                        NOT_DETECTED
                    } else {
                        rss.round().clamp(MIN_RSS_DBM as f64, 0.0) as i32
                    }
                })
                .collect();
            records.push(RawRecord {
                wap_rss,
                longitude: cfg.origin.0 + point.x,
                latitude: cfg.origin.1 + point.y,
                floor: point.floor as i32,
                building_id: point.building as i32,
                space_id: (p_idx % 250) as i32,
                relative_position: 1 + (rep % 2) as i32,
                user_id: 1 + (p_idx % 18) as i32,
                phone_id: 1 + (rep % 24) as i32,
                timestamp: 1_371_700_000 + (p_idx * per_point + rep) as i64,
            });
        }
    }
    records
}
