//! Run a TOML experiment end to end and print its summary table.
//!
//!     cargo run --release --example experiment_from_config -- configs/iid_vs_fedsq.toml [out]

use std::path::PathBuf;

use fedsq::experiment::{self, ExperimentConfig};

fn main() -> fedsq::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/iid_vs_fedsq.toml".into());
    let mut cfg = ExperimentConfig::load(&path)?;
    if let Some(out) = args.next() {
        cfg.out_dir = PathBuf::from(out);
    }
    let outcome = experiment::run(&cfg)?;
    println!("{} with schedule {}", cfg.display_name(), outcome.summary.schedule);
    print!("{}", outcome.summary.to_csv());
    println!("logs in {}", cfg.out_dir.display());
    Ok(())
}
