//! Label skew of Dirichlet splits as alpha grows (mean over 20 seeds), next to
//! a stratified iid split.
//!
//!     cargo run --example partition_stats -- [clients]

use fedsq::partition::heterogeneity_index;
use fedsq::{dirichlet_split, generate, iid_split, SyntheticSpec};

fn main() -> fedsq::Result<()> {
    let m: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let data = generate(&SyntheticSpec::blobs(2000, 10, vec![2], 1.0, 0))?;

    println!("{:>10} {:>8} {:>10}", "alpha", "index", "smallest");
    for alpha in [0.05, 0.1, 0.5, 1.0, 10.0, 1e6] {
        let mut index = 0.0;
        let mut smallest = usize::MAX;
        for seed in 0..20 {
            let plan = dirichlet_split(&data, m, alpha, seed, 8)?;
            index += heterogeneity_index(&plan, &data) / 20.0;
            smallest = smallest.min(*plan.sizes().iter().min().unwrap());
        }
        println!("{alpha:>10} {index:>8.4} {smallest:>10}");
    }

    let plan = iid_split(&data, m, 0)?;
    println!("{:>10} {:>8.4}", "iid", heterogeneity_index(&plan, &data));
    for (i, h) in plan.client_histograms(&data).iter().take(3).enumerate() {
        println!("client {i}: {h:?}");
    }
    Ok(())
}
