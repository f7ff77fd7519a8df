//! Pretrain on the source task, then search for how many trailing layers to
//! unfreeze on the probe set.
//!
//!     cargo run --release --example calibrate_schedule -- [seed]

use fedsq::calibrate::{obtain_schedule, pretrain, CalibrationConfig};
use fedsq::scenario::TransferSpec;
use fedsq::SgdConfig;

fn main() -> fedsq::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let task = TransferSpec::default().build(seed)?;
    let pre = pretrain(&task.arch, &task.source, 20, &SgdConfig::default(), seed)?;
    println!("pretrain loss per epoch: {:?}", pre.curve.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>());

    let cfg = CalibrationConfig { seed, ..CalibrationConfig::default() };
    let report = obtain_schedule(&task.arch, &pre.params, &task.probe, &cfg)?;
    for c in &report.candidates {
        println!("{}  acc {:.4}", c.schedule, c.accuracy);
    }
    println!("selected {} ({:?})", report.selected, report.stop_reason);
    Ok(())
}
