//! A server with its own pool of 3000 samples, boosted by users that each
//! train on 500 private samples. The centralized column is the pool-only
//! model, which stays constant.
//!
//! ```bash
//! cargo run --release -p fedloc --example scenario_booster -- [users,..] [rounds]
//! ```

mod common;

use fedloc::scenarios::{run_scenario, Scenario, ScenarioConfig};

fn main() -> fedloc::Result<()> {
    let users: String = common::arg(1, "5,10,15".to_string());
    let rounds: u32 = common::arg(2, 100);
    let (train, test) = common::load_data()?;

    let mut summary = Vec::new();
    for n in users.split(',').map(|s| s.trim().parse::<usize>().expect("user count")) {
        let mut cfg = ScenarioConfig::new(Scenario::S1, n);
        cfg.fed.rounds = rounds;
        println!("n = {n}");
        common::print_header();
        let run = run_scenario(&cfg, &train, &test, common::print_row)?;
        let last = *run.last();
        summary.push((n, last));
    }
    println!("\nusers  federated  server-only  gain");
    for (n, r) in summary {
        let base = r.centralized_test_mae_m.unwrap_or(f64::NAN);
        println!("{n:>5}  {:>9.3}  {base:>11.3}  {:>+5.2}", r.federated_test_mae_m, base - r.federated_test_mae_m);
    }
    Ok(())
}
