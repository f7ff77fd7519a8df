//! Masks come from the frozen copy; the trainable copy only rescales inside
//! each linear region. Prints the local affine map and checks it.
//!
//!     cargo run --example dual_copy_masks

use fedsq::{make_dual_copy, DualCopyModel, ModelArch, ModelParams, Schedule, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> fedsq::Result<()> {
    let arch = ModelArch::mlp(2, &[4], 2)?;
    let w_pt = ModelParams::init(&arch, &mut ChaCha8Rng::seed_from_u64(3));
    let fresh = make_dual_copy(&arch, &w_pt, Schedule::all(&arch))?;

    let x = Tensor::new(vec![1, 2], vec![0.4, -0.7])?;
    let masks = fresh.compute_masks(&x)?;
    println!("open units: {:?}", masks.masks()[0].bits());

    // Move QK far from SK: the pattern is unchanged, the output is not.
    let qk = w_pt.scaled(-3.0);
    let moved = DualCopyModel::from_parts(arch.clone(), w_pt.clone(), qk, Schedule::all(&arch))?;
    assert_eq!(moved.compute_masks(&x)?, masks);
    println!("logits before {:?}", fresh.gated_forward(&masks, &x)?.data());
    println!("logits after  {:?}", moved.gated_forward(&masks, &x)?.data());

    let map = moved.extract_affine(&masks)?;
    println!("A = {:?}", map.a.data());
    println!("b = {:?}", map.b.data());
    println!("A x + b = {:?}", map.apply(x.data()));
    Ok(())
}
