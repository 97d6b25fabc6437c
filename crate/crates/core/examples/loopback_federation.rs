//! A federation over loopback TCP: the server and each user run on their own
//! thread and exchange only model parameters. The result is compared with
//! the same run in process.
//!
//! ```bash
//! cargo run --release -p fedloc --example loopback_federation -- [users] [rounds]
//! ```

mod common;

use std::thread;

use fedloc::fed::{run_federated, FedConfig};
use fedloc::net::{run_client, ClientConfig, ServeConfig, Server};
use fedloc::partition::partition_uniform;

fn main() -> fedloc::Result<()> {
    let users: usize = common::arg(1, 3);
    let rounds: u32 = common::arg(2, 5);
    let (train, test) = common::load_data()?;
    let partition = partition_uniform(&train, users, 1000, 0, 9)?;
    let fed = FedConfig {
        rounds,
        ..FedConfig::default()
    };

    let server = Server::bind("127.0.0.1:0")?;
    let addr = server.local_addr()?;
    println!("server on {addr}");
    let networked = thread::scope(|s| -> fedloc::Result<_> {
        for (i, share) in partition.user_shares.iter().enumerate() {
            let shard = train.view(share)?;
            let cfg = ClientConfig {
                train: fed.train.clone(),
                ..ClientConfig::default()
            };
            s.spawn(move || run_client(addr, i as u32 + 1, &shard, &cfg));
        }
        server.run(&ServeConfig::new(fed.clone(), users), &test, None, |r| {
            println!("round {:>3}: test {:.3} m, train {:.3} m", r.round, r.federated_test_mae_m, r.federated_train_mae_m)
        })
    })?;

    let local = run_federated(&train, &partition, &test, &fed, |_| {})?;
    let identical = local.reports == networked.reports && local.model == networked.model;
    println!("in-process run identical: {identical}");
    Ok(())
}
