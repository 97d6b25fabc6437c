//! Compares backpropagated gradients of the MAE loss with central finite
//! differences on a small random network.
//!
//! ```bash
//! cargo run --release -p fedloc --example gradient_check -- [seed]
//! ```

mod common;

use fedloc::nn::{backward, init_weights, loss_mae, forward, MlpArch};

fn loss(model: &fedloc::nn::ModelWeights, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> f64 {
    let preds: Vec<Vec<f64>> = xs.iter().map(|x| forward(model, x).unwrap()).collect();
    loss_mae(&preds, ys).unwrap()
}

fn main() -> fedloc::Result<()> {
    let seed: u64 = common::arg(1, 3);
    let arch = MlpArch::new(4, vec![5, 3], 2)?;
    let model = init_weights(&arch, seed)?;
    let xs: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..4).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.3).collect())
        .collect();
    let ys: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.4, 1.0 - i as f64 * 0.25]).collect();

    let (grads, value) = backward(&model, &xs, &ys)?;
    println!("loss {value:.6}, {} parameters", model.param_count());
    let h = 1e-6;
    let flat = model.to_flat();
    let mut worst = 0.0f64;
    println!("param   analytic    numeric");
    for (j, g) in grads.to_flat().iter().enumerate() {
        let mut probe = flat.clone();
        probe[j] += h;
        let up = loss(&fedloc::nn::ModelWeights::from_flat(&arch, &probe)?, &xs, &ys);
        probe[j] -= 2.0 * h;
        let down = loss(&fedloc::nn::ModelWeights::from_flat(&arch, &probe)?, &xs, &ys);
        let numeric = (up - down) / (2.0 * h);
        if j < 10 {
            println!("{j:>5}  {g:>9.6}  {numeric:>9.6}");
        }
        worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6));
    }
    println!("largest relative difference: {worst:.2e}");
    Ok(())
}
