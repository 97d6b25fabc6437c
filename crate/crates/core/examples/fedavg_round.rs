//! One federated round by hand: broadcast, three local trainings, weighted
//! averaging, evaluation.
//!
//! ```bash
//! cargo run --release -p fedloc --example fedavg_round
//! ```

mod common;

use fedloc::fed::{federated_average, local_train, FedConfig};
use fedloc::partition::partition_uniform;
use fedloc::scenarios::localization_error;

fn main() -> fedloc::Result<()> {
    let (train, test) = common::load_data()?;
    let test_view = test.view_all();
    let fed = FedConfig::default();
    let global = fed.initial_model(train.k)?;
    println!("initial model: {:.2} m on the test set", localization_error(&global, &test_view)?);

    let partition = partition_uniform(&train, 3, 1000, 0, 7)?;
    let mut updates = Vec::new();
    for (i, share) in partition.user_shares.iter().enumerate() {
        let shard = train.view(share)?;
        let update = local_train(&global, &shard, &fed.train, i as u32 + 1, 1)?;
        println!(
            "user {}: {} samples, local model {:.2} m",
            update.user_id,
            update.sample_count,
            localization_error(&update.weights, &test_view)?
        );
        updates.push(update);
    }
    let averaged = federated_average(&updates)?;
    println!("averaged model: {:.2} m", localization_error(&averaged, &test_view)?);
    Ok(())
}
