//! Generates a synthetic fingerprint survey in the UJIIndoorLoc CSV layout,
//! reads it back and preprocesses it.
//!
//! ```bash
//! cargo run --release -p fedloc --example synthetic_dataset -- [output.csv] [samples]
//! ```

mod common;

use fedloc::data::{load_csv, preprocess, write_csv, DEFAULT_MISSING_VALUE, NOT_DETECTED};
use fedloc::synth::{generate, SyntheticConfig};

fn main() -> fedloc::Result<()> {
    let path: String = common::arg(1, "synthetic_training.csv".to_string());
    let samples: usize = common::arg(2, 2000);
    let records = generate(&SyntheticConfig {
        samples,
        ..SyntheticConfig::default()
    });
    write_csv(&path, &records)?;
    let back = load_csv(&path)?;
    assert_eq!(back, records);

    let detected: Vec<usize> = records
        .iter()
        .map(|r| r.wap_rss.iter().filter(|&&v| v != NOT_DETECTED).count())
        .collect();
    let ds = preprocess(&back, DEFAULT_MISSING_VALUE, false)?;
    let (max_x, max_y) = ds
        .samples
        .iter()
        .fold((0.0f64, 0.0f64), |(x, y), s| (x.max(s.label[0]), y.max(s.label[1])));
    println!("wrote {} records to {path}", records.len());
    println!(
        "access points heard per sample: min {}, mean {:.1}, max {}",
        detected.iter().min().unwrap_or(&0),
        detected.iter().sum::<usize>() as f64 / detected.len().max(1) as f64,
        detected.iter().max().unwrap_or(&0)
    );
    println!("local frame extent: {max_x:.1} m x {max_y:.1} m");
    Ok(())
}
