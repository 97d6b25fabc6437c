//! UJIIndoorLoc-format ingestion and fingerprint preprocessing.
//!
//! The CSV layout is `WAP001..WAPnnn` followed by `LONGITUDE, LATITUDE, FLOOR,
//! BUILDINGID, SPACEID, RELATIVEPOSITION, USERID, PHONEID, TIMESTAMP`. RSS
//! values are integer dBm in `[-104, 0]`, or `+100` when the access point was
//! not heard. Coordinates are already metric.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::LABEL_DIM;

/// Access points in the UJIIndoorLoc survey.
pub const UJI_WAP_COUNT: usize = 520;
/// Marker the dataset uses for an access point that was not detected.
pub const NOT_DETECTED: i32 = 100;
/// Weakest RSS value the dataset can report.
pub const MIN_RSS_DBM: i32 = -104;
/// Default substitute for undetected access points.
pub const DEFAULT_MISSING_VALUE: f64 = -150.0;

/// Whether features are mapped to [0, 1] unless configured otherwise.
pub const DEFAULT_NORMALIZE: bool = false;
/// Environment variable naming the UJIIndoorLoc `trainingData.csv`.
pub const UJI_CSV_ENV: &str = "FEDLOC_UJI_TRAIN_CSV";

pub const LABEL_COLUMNS: [&str; 9] = [
    "LONGITUDE",
    "LATITUDE",
    "FLOOR",
    "BUILDINGID",
    "SPACEID",
    "RELATIVEPOSITION",
    "USERID",
    "PHONEID",
    "TIMESTAMP",
];

/// One CSV row as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub wap_rss: Vec<i32>,
    pub longitude: f64,
    pub latitude: f64,
    pub floor: i32,
    pub building_id: i32,
    pub space_id: i32,
    pub relative_position: i32,
    pub user_id: i32,
    pub phone_id: i32,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Position in meters, relative to the dataset origin.
    pub label: [f64; LABEL_DIM],
}

/// A preprocessed, labelled corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Feature width (number of access points).
    pub k: usize,
    /// `(min longitude, min latitude)` subtracted from every label.
    pub origin: (f64, f64),
    pub missing_value: f64,
    pub normalized: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn view_all(&self) -> DatasetView<'_> {
        DatasetView {
            k: self.k,
            samples: self.samples.iter().collect(),
        }
    }

    /// Borrowed subset. Fails on out-of-range indices.
    pub fn view(&self, indices: &[usize]) -> Result<DatasetView<'_>> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .ok_or_else(|| invalid(format!("sample index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DatasetView { k: self.k, samples })
    }

    /// Owned subset sharing `k`, origin and encoding.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let view = self.view(indices)?;
        Ok(Dataset {
            samples: view.samples.into_iter().cloned().collect(),
            k: self.k,
            origin: self.origin,
            missing_value: self.missing_value,
            normalized: self.normalized,
        })
    }

    /// Mean label, the best constant predictor under squared error.
    pub fn centroid(&self) -> Option<[f64; 2]> {
        if self.samples.is_empty() {
            return None;
        }
        let n = self.samples.len() as f64;
        let (sx, sy) = self
            .samples
            .iter()
            .fold((0.0, 0.0), |(x, y), s| (x + s.label[0], y + s.label[1]));
        Some([sx / n, sy / n])
    }
}

/// Borrowed list of samples, e.g. one user's shard.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    pub k: usize,
    pub samples: Vec<&'a Sample>,
}

impl<'a> DatasetView<'a> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Sample> + '_ {
        self.samples.iter().copied()
    }

    /// Concatenation in argument order.
    pub fn concat(views: &[DatasetView<'a>]) -> Result<DatasetView<'a>> {
        let k = views.first().map(|v| v.k).unwrap_or(0);
        if views.iter().any(|v| v.k != k) {
            return Err(invalid("cannot concatenate views of different width"));
        }
        Ok(DatasetView {
            k,
            samples: views.iter().flat_map(|v| v.samples.iter().copied()).collect(),
        })
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn wap_name(i: usize) -> String {
    format!("WAP{:03}", i + 1)
}

/// Reads every data row of a UJIIndoorLoc CSV, preserving order.
///
/// The number of WAP columns is taken from the header, which must list
/// `WAP001..WAPnnn` contiguously followed by the nine label columns.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<RawRecord>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if header.len() <= LABEL_COLUMNS.len() {
        return Err(parse_err(path, 1, "header has no WAP columns"));
    }
    let wap_count = header.len() - LABEL_COLUMNS.len();
    for (i, name) in header.iter().enumerate() {
        let expected = if i < wap_count {
            wap_name(i)
        } else {
            LABEL_COLUMNS[i - wap_count].to_string()
        };
        if name.trim_matches('"') != expected {
            return Err(parse_err(
                path,
                1,
                format!("column {} is {name:?}, expected {expected}", i + 1),
            ));
        }
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} columns, found {}", header.len(), row.len()),
            ));
        }
        let int = |col: usize| -> Result<i64> {
            let cell = &row[col];
            cell.parse::<i64>()
                .or_else(|_| {
                    // Some exports write integral columns as "2.0".
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| v.fract() == 0.0 && v.is_finite())
                        .map(|v| v as i64)
                        .ok_or(())
                })
                .map_err(|_| parse_err(path, line, format!("{}: not an integer: {cell:?}", &header[col])))
        };
        let real = |col: usize| -> Result<f64> {
            let cell = &row[col];
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("{}: not a number: {cell:?}", &header[col])))
        };

        let mut wap_rss = Vec::with_capacity(wap_count);
        for col in 0..wap_count {
            let v = int(col)? as i32;
            if v != NOT_DETECTED && !(MIN_RSS_DBM..=0).contains(&v) {
                return Err(parse_err(
                    path,
                    line,
                    format!("{}: RSS {v} outside [{MIN_RSS_DBM}, 0]", &header[col]),
                ));
            }
            wap_rss.push(v);
        }
        let b = wap_count;
        records.push(RawRecord {
            wap_rss,
            longitude: real(b)?,
            latitude: real(b + 1)?,
            floor: int(b + 2)? as i32,
            building_id: int(b + 3)? as i32,
            space_id: int(b + 4)? as i32,
            relative_position: int(b + 5)? as i32,
            user_id: int(b + 6)? as i32,
            phone_id: int(b + 7)? as i32,
            timestamp: int(b + 8)?,
        });
    }
    Ok(records)
}

/// Writes records in the same layout [`load_csv`] reads.
pub fn write_csv(path: impl AsRef<Path>, records: &[RawRecord]) -> Result<()> {
    let wap_count = records.first().map(|r| r.wap_rss.len()).unwrap_or(UJI_WAP_COUNT);
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let mut header: Vec<String> = (0..wap_count).map(wap_name).collect();
    header.extend(LABEL_COLUMNS.iter().map(|s| s.to_string()));
    writeln!(out, "{}", header.join(","))?;
    for r in records {
        if r.wap_rss.len() != wap_count {
            return Err(invalid("records have differing WAP counts"));
        }
        let mut line = String::with_capacity(wap_count * 4 + 64);
        for v in &r.wap_rss {
            line.push_str(&v.to_string());
            line.push(',');
        }
        line.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}",
            r.longitude,
            r.latitude,
            r.floor,
            r.building_id,
            r.space_id,
            r.relative_position,
            r.user_id,
            r.phone_id,
            r.timestamp
        ));
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Turns raw records into model inputs and local-frame labels.
///
/// Undetected access points become `missing_value`; labels are shifted so
/// the smallest longitude and latitude map to 0. With `normalize`, features
/// are mapped by `(r - C) / (0 - C)`, so a missing AP is 0.0 and 0 dBm is 1.0.
pub fn preprocess(records: &[RawRecord], missing_value: f64, normalize: bool) -> Result<Dataset> {
    if missing_value.is_nan() || missing_value >= MIN_RSS_DBM as f64 {
        return Err(Error::Config(format!(
            "missing-value constant {missing_value} must be below the weakest RSS ({MIN_RSS_DBM} dBm)"
        )));
    }
    let first = records.first().ok_or_else(|| invalid("no records to preprocess"))?;
    let k = first.wap_rss.len();
    if records.iter().any(|r| r.wap_rss.len() != k) {
        return Err(invalid("records have differing WAP counts"));
    }
    let min_lon = records.iter().map(|r| r.longitude).fold(f64::INFINITY, f64::min);
    let min_lat = records.iter().map(|r| r.latitude).fold(f64::INFINITY, f64::min);
    let scale = -missing_value;

    let samples = records
        .iter()
        .map(|r| {
            let features = r
                .wap_rss
                .iter()
                .map(|&v| {
                    let dbm = if v == NOT_DETECTED { missing_value } else { v as f64 };
                    if normalize {
                        (dbm - missing_value) / scale
                    } else {
                        dbm
                    }
                })
                .collect();
            Sample {
                features,
                label: [r.longitude - min_lon, r.latitude - min_lat],
            }
        })
        .collect();

    Ok(Dataset {
        samples,
        k,
        origin: (min_lon, min_lat),
        missing_value,
        normalized: normalize,
    })
}

/// Uniform random disjoint split into `(train, test)`. Both parts keep the
/// original relative order of their samples.
pub fn split_train_test(dataset: &Dataset, test_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if test_count >= dataset.len() {
        return Err(invalid(format!(
            "test_count {test_count} must be smaller than the {} available samples",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test_idx, train_idx) = order.split_at_mut(test_count);
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((dataset.subset(train_idx)?, dataset.subset(test_idx)?))
}

/// Path of the real UJIIndoorLoc training file, if configured and present.
pub fn uji_training_csv() -> Option<std::path::PathBuf> {
    let path = std::path::PathBuf::from(std::env::var_os(UJI_CSV_ENV)?);
    path.is_file().then_some(path)
}
