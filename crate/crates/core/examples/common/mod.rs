//! Shared setup for the examples.

#![allow(dead_code)]

use fedloc::data::{load_csv, preprocess, split_train_test, uji_training_csv, Dataset, DEFAULT_MISSING_VALUE, DEFAULT_NORMALIZE};
use fedloc::scenarios::RoundReport;
use fedloc::synth::{generate, SyntheticConfig};

/// Train/test split of the UJIIndoorLoc file named by `$FEDLOC_UJI_TRAIN_CSV`,
/// or of a synthetic survey of the same shape when it is unset.
pub fn load_data() -> fedloc::Result<(Dataset, Dataset)> {
    let records = match uji_training_csv() {
        Some(path) => {
            eprintln!("using {}", path.display());
            load_csv(path)?
        }
        None => {
            eprintln!("FEDLOC_UJI_TRAIN_CSV not set; using synthetic fingerprints");
            generate(&SyntheticConfig::default())
        }
    };
    let dataset = preprocess(&records, DEFAULT_MISSING_VALUE, DEFAULT_NORMALIZE)?;
    split_train_test(&dataset, 3000, 1)
}

/// Positional argument `i` (after the program name), or `default`.
pub fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .map(|s| s.parse().unwrap_or_else(|_| panic!("cannot parse argument {i}: {s:?}")))
        .unwrap_or(default)
}

pub fn print_header() {
    println!("round  fed_test  cen_test  fed_train  cen_train");
}

pub fn print_row(r: &RoundReport) {
    println!(
        "{:>5}  {:>8.3}  {:>8.3}  {:>9.3}  {:>9.3}",
        r.round,
        r.federated_test_mae_m,
        r.centralized_test_mae_m.unwrap_or(f64::NAN),
        r.federated_train_mae_m,
        r.centralized_train_mae_m.unwrap_or(f64::NAN),
    );
}
