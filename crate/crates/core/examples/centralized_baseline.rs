//! Centralized training on one pooled dataset, compared with always
//! predicting the training centroid.
//!
//! ```bash
//! cargo run --release -p fedloc --example centralized_baseline -- [pool size] [rounds]
//! ```

mod common;

use fedloc::fed::FedConfig;
use fedloc::scenarios::{centralized_train, constant_predictor_error, coordinate_mae};

fn main() -> fedloc::Result<()> {
    let pool_size: usize = common::arg(1, 3000);
    let rounds: u32 = common::arg(2, 30);
    let (train, test) = common::load_data()?;
    let indices: Vec<usize> = (0..pool_size.min(train.len())).collect();
    let pool = train.view(&indices)?;
    let test_view = test.view_all();

    let fed = FedConfig {
        rounds,
        ..FedConfig::default()
    };
    let initial = fed.initial_model(train.k)?;
    let run = centralized_train(&initial, &pool, &test_view, &fed)?;
    println!("round  test (m)  train (m)");
    for r in &run.rounds {
        println!("{:>5}  {:>8.3}  {:>9.3}", r.round, r.test_mae_m, r.train_mae_m);
    }
    let centroid = train.centroid().expect("non-empty training set");
    println!(
        "centroid predictor: {:.2} m; trained model: {:.2} m (per-coordinate MAE {:.2} m)",
        constant_predictor_error(centroid, &test_view)?,
        run.rounds.last().expect("rounds >= 1").test_mae_m,
        coordinate_mae(run.final_model(), &test_view)?
    );
    Ok(())
}
