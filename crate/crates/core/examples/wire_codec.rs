//! Encodes each protocol message, shows its bytes and decodes it again.
//!
//! ```bash
//! cargo run -p fedloc --example wire_codec
//! ```

use fedloc::net::wire::{decode, encode, PROTOCOL_VERSION, SCHEMA};
use fedloc::net::WireMessage;
use fedloc::nn::MlpArch;

fn hex(bytes: &[u8]) -> String {
    let shown: Vec<String> = bytes.iter().take(32).map(|b| format!("{b:02x}")).collect();
    let more = if bytes.len() > 32 { " .." } else { "" };
    format!("{}{more}", shown.join(" "))
}

fn main() -> fedloc::Result<()> {
    let arch = MlpArch::new(3, vec![2], 2)?;
    let weights: Vec<f64> = (0..arch.param_count()).map(|i| i as f64 / 8.0).collect();
    let messages = [
        WireMessage::Hello {
            protocol_version: PROTOCOL_VERSION,
            user_id: 7,
            sample_count: 1000,
        },
        WireMessage::GlobalModel {
            round: 1,
            arch,
            weights: weights.clone(),
        },
        WireMessage::LocalUpdate {
            round: 1,
            user_id: 7,
            sample_count: 1000,
            weights: weights.clone(),
        },
        WireMessage::Evaluate { round: 1, weights },
        WireMessage::EvalReport {
            round: 1,
            user_id: 7,
            sample_count: 1000,
            error_sum: 5250.5,
        },
        WireMessage::Shutdown { reason: String::new() },
    ];
    for msg in &messages {
        let frame = encode(msg);
        assert_eq!(&decode(&frame)?, msg);
        println!("{:<13} {:>4} bytes  {}", msg.name(), frame.len(), hex(&frame));
    }
    println!();
    for (tag, name, fields) in SCHEMA {
        let list: Vec<String> = fields.iter().map(|(f, k)| format!("{f}: {k:?}")).collect();
        println!("{tag} {name:<13} {}", list.join(", "));
    }
    Ok(())
}
