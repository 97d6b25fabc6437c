//! Users with equal, uniformly drawn shares against a centralized model
//! trained on the pooled samples.
//!
//! ```bash
//! cargo run --release -p fedloc --example scenario_uniform -- [users] [rounds]
//! ```

mod common;

use std::time::Instant;

use fedloc::scenarios::{run_scenario, Scenario, ScenarioConfig};

fn main() -> fedloc::Result<()> {
    let users: usize = common::arg(1, 15);
    let rounds: u32 = common::arg(2, 100);
    let (train, test) = common::load_data()?;

    let mut cfg = ScenarioConfig::new(Scenario::S2, users);
    cfg.fed.rounds = rounds;
    let started = Instant::now();
    common::print_header();
    let run = run_scenario(&cfg, &train, &test, common::print_row)?;
    let last = run.last();
    println!(
        "S2 n={users} t={}: federated {:.2} m vs centralized {:.2} m ({:.1?})",
        last.round,
        last.federated_test_mae_m,
        last.centralized_test_mae_m.unwrap_or(f64::NAN),
        started.elapsed()
    );
    Ok(())
}
