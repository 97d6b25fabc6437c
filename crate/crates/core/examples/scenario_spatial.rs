//! Unbalanced, non-IID users: Gaussian share sizes and spatially exclusive
//! regions along the x axis.
//!
//! ```bash
//! cargo run --release -p fedloc --example scenario_spatial -- [users] [rounds]
//! ```

mod common;

use fedloc::partition::x_ranges;
use fedloc::scenarios::{run_scenario, Scenario, ScenarioConfig};

fn main() -> fedloc::Result<()> {
    let users: usize = common::arg(1, 15);
    let rounds: u32 = common::arg(2, 100);
    let (train, test) = common::load_data()?;

    let mut cfg = ScenarioConfig::new(Scenario::S3, users);
    cfg.fed.rounds = rounds;
    let partition = cfg.partition(&train)?;
    println!("user  samples  x range (m)");
    for (i, (share, (lo, hi))) in partition.user_shares.iter().zip(x_ranges(&train, &partition)).enumerate() {
        println!("{:>4}  {:>7}  {lo:>6.1} .. {hi:>6.1}", i + 1, share.len());
    }

    common::print_header();
    let run = run_scenario(&cfg, &train, &test, common::print_row)?;
    println!(
        "S3 n={users}: federated {:.2} m (per-coordinate MAE {:.2} m) vs centralized {:.2} m",
        run.last().federated_test_mae_m,
        run.federated_test_coord_mae_m,
        run.last().centralized_test_mae_m.unwrap_or(f64::NAN)
    );
    Ok(())
}
