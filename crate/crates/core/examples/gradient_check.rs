//! Central finite differences against analytic gradients for a small conv net.
//!
//!     cargo run --example gradient_check

use fedsq::nn::{backward, forward, loss_ce, LayerSpec};
use fedsq::{ModelArch, ModelParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fedsq::Result<()> {
    let arch = ModelArch::new(
        vec![1, 5, 5],
        vec![
            LayerSpec::conv2d(1, 2, 3, 1, 0).relu(),
            LayerSpec::flatten(),
            LayerSpec::dense(18, 3),
        ],
        3,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = ModelParams::init(&arch, &mut rng);
    let x = Tensor::new(vec![4, 1, 5, 5], (0..100).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let labels = [0, 2, 1, 2];

    let trainable = vec![true; arch.num_param_layers()];
    let (_, grads) = backward(&arch, &params, &x, &labels, &trainable)?;
    let analytic = grads.flatten();
    let flat = params.flatten();
    let loss = |p: &[f64]| -> fedsq::Result<f64> {
        let logits = forward(&arch, &params.with_flat(p)?, &x)?.logits;
        loss_ce(&logits, &labels)
    };

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    println!("{} parameters, max relative error {worst:.2e}", flat.len());
    Ok(())
}
