//! FedAvg, FedProx and FedSQ on a shifted-blobs transfer task under a
//! Dirichlet(0.5) split, each compared with its centralized counterpart.
//!
//!     cargo run --release --example fedavg_vs_fedsq -- [seeds] [rounds]

use fedsq::calibrate::{obtain_schedule, pretrain, CalibrationConfig};
use fedsq::fedproto::{best_round, run_centralized, run_federation, FederationConfig, Strategy};
use fedsq::scenario::{oscillation, TransferSpec};
use fedsq::SgdConfig;

fn main() -> fedsq::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let rounds: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let spec = TransferSpec::default();

    println!("{:<8} {:>4} {:>8} {:>6} {:>8} {:>6} {:>8}", "strategy", "seed", "bva", "round", "central", "ratio", "osc");
    for seed in 0..seeds {
        let task = spec.build(seed)?;
        let pre = pretrain(&task.arch, &task.source, 20, &SgdConfig::default(), seed)?;
        let cal = CalibrationConfig { seed, ..CalibrationConfig::default() };
        let report = obtain_schedule(&task.arch, &pre.params, &task.probe, &cal)?;
        println!("seed {seed}: schedule {} ({:?})", report.selected, report.stop_reason);

        for strategy in [Strategy::FedAvg, Strategy::FedProx { mu: 0.01 }, Strategy::FedSq] {
            let mut cfg = FederationConfig::cross_silo(strategy, rounds);
            cfg.seed = seed;
            cfg.workers = 4;
            let fed = run_federation(&task.arch, &cfg, &task.target, &task.val, &pre.params, &report.selected)?;
            let (central, _) = run_centralized(&task.arch, &cfg, &task.target, &task.val, &pre.params, &report.selected)?;
            let best = fed.best.expect("evaluated");
            let reference = best_round(&central).expect("evaluated").accuracy;
            println!(
                "{:<8} {:>4} {:>8.4} {:>6} {:>8.4} {:>6.3} {:>8.4}",
                strategy.label(),
                seed,
                best.accuracy,
                best.round,
                reference,
                best.accuracy / reference,
                oscillation(&fed.logs, 5).unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
