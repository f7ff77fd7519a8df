//! Acceptance suite: one line per criterion with the measured values.
//! Runs without the libtest harness so the report is always printed.

mod common;

use std::time::{Duration, Instant};

use common::*;
use fedsq::calibrate::{obtain_schedule, pretrain, CalibrationConfig, StopReason};
use fedsq::experiment::{self, ExperimentConfig};
use fedsq::fedproto::{
    aggregate, aggregation_weights, best_round, run_centralized, run_federation, run_federation_with, ClientUpdate,
    FederationConfig, GlobalModel, PartitionSpec, RoundLog, Strategy, SCALAR_BYTES,
};
use fedsq::nn::{self, LayerParams};
use fedsq::partition::heterogeneity_index;
use fedsq::scenario::{oscillation, TransferSpec};
use fedsq::{
    dirichlet_split, generate, iid_split, make_dual_copy, DualCopyModel, ModelArch, ModelParams, Schedule, SgdConfig,
    SyntheticSpec, Tensor,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    /// Soft criteria are reported but do not fail the suite.
    soft: bool,
    detail: String,
}

fn hard(pass: bool, detail: String) -> Outcome {
    Outcome { pass, soft: false, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() <= limit_s as f64
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut lines = Vec::new();
    let mut ok = true;

    let mlp = ModelArch::mlp(6, &[10, 8], 4).unwrap();
    let p = ModelParams::init(&mlp, &mut r);
    let x = random_batch(&mlp, 5, &mut r);
    let y = random_labels(&mlp, 5, &mut r);
    let s = fd_check_relu(&mlp, &p, &x, &y, &(0..p.num_scalars()).collect::<Vec<_>>());
    ok &= s.checked >= 100 && s.max_rel <= 1e-4;
    lines.push(format!("dense n={} max_rel={:.2e}", s.checked, s.max_rel));

    let conv = conv_arch();
    let p = ModelParams::init(&conv, &mut r);
    let x = random_batch(&conv, 3, &mut r);
    let y = random_labels(&conv, 3, &mut r);
    let conv_idx: Vec<usize> = layer_ranges(&p)
        .into_iter()
        .filter(|(l, _)| layer_kind_name(&conv, *l) == "conv2d")
        .flat_map(|(_, range)| range)
        .collect();
    let s = fd_check_relu(&conv, &p, &x, &y, &conv_idx);
    ok &= s.checked >= 100 && s.max_rel <= 1e-4;
    lines.push(format!("conv2d n={} max_rel={:.2e}", s.checked, s.max_rel));

    let mut gated_n = 0;
    let mut gated_max: f64 = 0.0;
    for arch in [ModelArch::mlp(5, &[9, 7], 3).unwrap(), conv_arch()] {
        let sk = ModelParams::init(&arch, &mut r);
        let qk = perturbed(&sk, 0.3, &mut r);
        let model = dual(&arch, &sk, &qk);
        let x = random_batch(&arch, 4, &mut r);
        let y = random_labels(&arch, 4, &mut r);
        let s = fd_check_gated(&model, &x, &y, &(0..qk.num_scalars()).collect::<Vec<_>>());
        gated_n += s.checked;
        gated_max = gated_max.max(s.max_rel);
    }
    ok &= gated_n >= 100 && gated_max <= 1e-4;
    lines.push(format!("gated n={gated_n} max_rel={gated_max:.2e}"));
    let t = start.elapsed();
    hard(ok && within(t, 30), format!("{}; {:.2}s", lines.join(", "), t.as_secs_f64()))
}

fn relu_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(202);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let arch = if i % 2 == 0 {
            let hidden: Vec<usize> = (0..r.random_range(1..4)).map(|_| r.random_range(2..12)).collect();
            ModelArch::mlp(r.random_range(2..10), &hidden, r.random_range(2..6)).unwrap()
        } else {
            conv_arch()
        };
        let p = ModelParams::init(&arch, &mut r);
        let model = make_dual_copy(&arch, &p, Schedule::all(&arch)).unwrap();
        let x = random_batch(&arch, r.random_range(1..8), &mut r);
        let masks = model.compute_masks(&x).unwrap();
        let gated = model.gated_forward(&masks, &x).unwrap();
        let plain = nn::forward(&arch, &p, &x).unwrap().logits;
        worst = worst.max(gated.max_abs_diff(&plain));
    }
    let t = start.elapsed();
    hard(
        worst <= 1e-12 && within(t, 10),
        format!("100 instances, max |diff|={worst:.1e}; {:.2}s", t.as_secs_f64()),
    )
}

fn small_transfer() -> TransferSpec {
    TransferSpec {
        source_samples: 1200,
        probe_samples: 300,
        target_samples: 1500,
        val_samples: 300,
        ..TransferSpec::default()
    }
}

fn mask_stability() -> Outcome {
    let start = Instant::now();
    let task = small_transfer().build(5).unwrap();
    let w_pt = pretrain(&task.arch, &task.source, 5, &SgdConfig::default(), 5).unwrap().params;
    let mut cfg = FederationConfig::cross_silo(Strategy::FedSq, 10);
    cfg.partition = PartitionSpec::Dirichlet {
        alpha: 0.5,
        min_per_client: Some(32),
    };
    let (probe, _) = task.val.batch(&(0..64).collect::<Vec<_>>());
    let reference = make_dual_copy(&task.arch, &w_pt, Schedule::all(&task.arch))
        .unwrap()
        .compute_masks(&probe)
        .unwrap();
    let mut identical = 0;
    let mut qk_moved = true;
    let mut previous_qk = w_pt.clone();
    let out = run_federation_with(&task.arch, &cfg, &task.target, &task.val, &w_pt, &Schedule::all(&task.arch), |_, g| {
        let GlobalModel::Dual(d) = g else { return };
        if d.compute_masks(&probe).unwrap() == reference {
            identical += 1;
        }
        qk_moved &= d.qk() != &previous_qk;
        previous_qk = d.qk().clone();
    })
    .unwrap();
    let t = start.elapsed();
    let rounds = out.logs.len();
    hard(
        identical == rounds && rounds == 10 && qk_moved && within(t, 60),
        format!(
            "masks identical in {identical}/{rounds} rounds, QK changed every round: {qk_moved}; {:.2}s",
            t.as_secs_f64()
        ),
    )
}

fn within_region_affinity() -> Outcome {
    let mut r = rng(404);
    let (mut worst_affine, mut worst_super): (f64, f64) = (0.0, 0.0);
    for arch in [ModelArch::mlp(7, &[12, 9], 4).unwrap(), conv_arch()] {
        let sk = ModelParams::init(&arch, &mut r);
        let qk = perturbed(&sk, 0.2, &mut r);
        let model = dual(&arch, &sk, &qk);
        let anchor = random_batch(&arch, 1, &mut r);
        let masks = model.compute_masks(&anchor).unwrap();
        let map = model.extract_affine(&masks).unwrap();
        for _ in 0..100 {
            let x = random_batch(&arch, 1, &mut r);
            let f = model.gated_forward(&masks, &x).unwrap();
            for (a, b) in map.apply(x.data()).iter().zip(f.data()) {
                worst_affine = worst_affine.max((a - b).abs());
            }
            let (x1, x2) = (random_batch(&arch, 1, &mut r), random_batch(&arch, 1, &mut r));
            let lambda: f64 = r.random_range(0.0..1.0);
            let mixed = Tensor::new(
                x1.shape().to_vec(),
                x1.data().iter().zip(x2.data()).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect(),
            )
            .unwrap();
            let g = |x: &Tensor| model.gated_forward(&masks, x).unwrap().into_data();
            let (f1, f2, fm) = (g(&x1), g(&x2), g(&mixed));
            for j in 0..fm.len() {
                worst_super = worst_super.max((fm[j] - (lambda * f1[j] + (1.0 - lambda) * f2[j])).abs());
            }
        }
    }
    hard(
        worst_affine <= 1e-9 && worst_super <= 1e-9,
        format!("A x + b max err {worst_affine:.1e}, superposition max err {worst_super:.1e} (mlp + conv, 100 inputs each)"),
    )
}

fn aggregation_oracle() -> Outcome {
    let mut r = rng(505);
    let arch = ModelArch::mlp(6, &[8], 3).unwrap();
    let (mut worst, mut worst_sum): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let k = r.random_range(1..12);
        let counts: Vec<usize> = (0..k).map(|_| r.random_range(1..2000)).collect();
        let ups: Vec<ClientUpdate> = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| ClientUpdate {
                client: i,
                params: perturbed(&ModelParams::init(&arch, &mut r), 3.0, &mut r),
                n,
            })
            .collect();
        worst_sum = worst_sum.max((aggregation_weights(&counts).iter().sum::<f64>() - 1.0).abs());
        let agg = aggregate(&ups).unwrap().flatten();
        let total: usize = counts.iter().sum();
        let flats: Vec<Vec<f64>> = ups.iter().map(|u| u.params.flatten()).collect();
        for (j, v) in agg.iter().enumerate() {
            // Brute force: sum n_i x_i first, divide once.
            let oracle = flats.iter().zip(&counts).map(|(f, &n)| n as f64 * f[j]).sum::<f64>() / total as f64;
            worst = worst.max((v - oracle).abs());
        }
    }
    hard(
        worst <= 1e-12 && worst_sum <= 1e-15,
        format!("50 random sets, max |agg - oracle|={worst:.1e}, max |sum w - 1|={worst_sum:.1e}"),
    )
}

fn strip(logs: &[RoundLog]) -> Vec<RoundLog> {
    logs.iter()
        .map(|l| RoundLog {
            wall_time_s: 0.0,
            strategy: String::new(),
            ..l.clone()
        })
        .collect()
}

fn degenerate_federation() -> Outcome {
    let task = small_transfer().build(6).unwrap();
    let w_pt = pretrain(&task.arch, &task.source, 3, &SgdConfig::default(), 6).unwrap().params;
    let sched = Schedule::last_k(&task.arch, 2).unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for strategy in [Strategy::FedAvg, Strategy::FedProx { mu: 0.01 }, Strategy::FedSq] {
        let mut cfg = FederationConfig::cross_silo(strategy, 5);
        cfg.m = 1;
        cfg.k = 1;
        let fed = run_federation(&task.arch, &cfg, &task.target, &task.val, &w_pt, &sched).unwrap();
        let (logs, central) = run_centralized(&task.arch, &cfg, &task.target, &task.val, &w_pt, &sched).unwrap();
        let same = fed.final_model.params() == central.params()
            && fed.logs.iter().zip(&logs).all(|(a, b)| {
                a.train_loss_mean.to_bits() == b.train_loss_mean.to_bits() && a.val_accuracy == b.val_accuracy
            });
        ok &= same;
        parts.push(format!("{} M=K=1 bit-identical: {same}", strategy.label()));
    }
    let all = Schedule::all(&task.arch);
    let mut cfg = FederationConfig::cross_silo(Strategy::FedAvg, 10);
    cfg.partition = PartitionSpec::Dirichlet {
        alpha: 0.5,
        min_per_client: Some(32),
    };
    let avg = run_federation(&task.arch, &cfg, &task.target, &task.val, &w_pt, &all).unwrap();
    cfg.strategy = Strategy::FedProx { mu: 0.0 };
    let prox = run_federation(&task.arch, &cfg, &task.target, &task.val, &w_pt, &all).unwrap();
    let same = strip(&avg.logs) == strip(&prox.logs) && avg.final_model.params() == prox.final_model.params();
    ok &= same;
    parts.push(format!("FedProx(0) == FedAvg over 10 rounds: {same}"));
    hard(ok, parts.join(", "))
}

fn partition_statistics() -> Outcome {
    let start = Instant::now();
    let data = generate(&SyntheticSpec::blobs(1000, 10, vec![2], 1.0, 7)).unwrap();
    let alphas = [0.1, 0.5, 10.0, 1e6];
    let mut covers = true;
    let mut means = Vec::new();
    for &alpha in &alphas {
        let mut sum = 0.0;
        for seed in 0..50 {
            let plan = dirichlet_split(&data, 10, alpha, seed, 1).unwrap();
            let mut all: Vec<usize> = plan.assignments.iter().flatten().copied().collect();
            all.sort_unstable();
            covers &= all == (0..data.len()).collect::<Vec<_>>() && plan.validate(data.len()).is_ok();
            sum += heterogeneity_index(&plan, &data);
        }
        means.push(sum / 50.0);
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let iid_max = (0..50)
        .map(|seed| heterogeneity_index(&iid_split(&data, 10, seed).unwrap(), &data))
        .fold(0.0, f64::max);
    let t = start.elapsed();
    hard(
        covers && decreasing && iid_max <= 0.05 && within(t, 30),
        format!(
            "disjoint covers (4 alphas x 50 seeds): {covers}, mean index {:?} strictly decreasing: {decreasing}, iid max index {iid_max:.4}; {:.2}s",
            means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>(),
            t.as_secs_f64()
        ),
    )
}

fn conservation_and_accounting() -> Outcome {
    let task = small_transfer().build(8).unwrap();
    let w_pt = ModelParams::init(&task.arch, &mut rng(8));
    let sched = Schedule::last_k(&task.arch, 2).unwrap();
    let model = DualCopyModel::new(&task.arch, &w_pt, sched.clone()).unwrap();
    let single = sched.trainable_scalars(&task.arch);
    let conserved = model.trainable_scalars() == single;
    let mut cfg = FederationConfig::cross_silo(Strategy::FedAvg, 2);
    cfg.partition = PartitionSpec::Iid;
    let avg = run_federation(&task.arch, &cfg, &task.target, &task.val, &w_pt, &sched).unwrap();
    cfg.strategy = Strategy::FedSq;
    let sq = run_federation(&task.arch, &cfg, &task.target, &task.val, &w_pt, &sched).unwrap();
    let full_bytes = 10 * w_pt.num_scalars() as u64 * SCALAR_BYTES;
    let less = sq.logs.iter().zip(&avg.logs).all(|(s, a)| s.bytes_uploaded < a.bytes_uploaded)
        && avg.logs.iter().all(|a| a.bytes_uploaded == full_bytes);
    hard(
        conserved && less,
        format!(
            "trainable scalars dual={} single={} (stored {}), upload/round FedSQ={} FedAvg={}",
            model.trainable_scalars(),
            single,
            model.stored_scalars(),
            sq.logs[0].bytes_uploaded,
            avg.logs[0].bytes_uploaded
        ),
    )
}

fn qualitative_trend() -> Vec<Outcome> {
    let start = Instant::now();
    let spec = TransferSpec::default();
    let strategies = [Strategy::FedAvg, Strategy::FedProx { mu: 0.01 }, Strategy::FedSq];
    let mut min_ratio = [f64::MAX; 3];
    let mut osc = [0.0; 3];
    let seeds = 5;
    let mut per_seed = Vec::new();
    for seed in 0..seeds {
        let task = spec.build(seed).unwrap();
        let w_pt = pretrain(&task.arch, &task.source, 20, &SgdConfig::default(), seed).unwrap().params;
        let cal = CalibrationConfig {
            seed,
            ..CalibrationConfig::default()
        };
        let schedule = obtain_schedule(&task.arch, &w_pt, &task.probe, &cal).unwrap().selected;
        let mut row = format!("seed {seed} [{schedule}]");
        for (i, &strategy) in strategies.iter().enumerate() {
            let mut cfg = FederationConfig::cross_silo(strategy, 20);
            cfg.seed = seed;
            let fed = run_federation(&task.arch, &cfg, &task.target, &task.val, &w_pt, &schedule).unwrap();
            let (central, _) = run_centralized(&task.arch, &cfg, &task.target, &task.val, &w_pt, &schedule).unwrap();
            let bva = fed.best.unwrap().accuracy;
            let reference = best_round(&central).unwrap().accuracy;
            min_ratio[i] = min_ratio[i].min(bva / reference);
            let o = oscillation(&fed.logs, 5).unwrap();
            osc[i] += o / seeds as f64;
            row.push_str(&format!(" {}={:.3}/{:.3}", strategy.name(), bva, reference));
        }
        per_seed.push(row);
    }
    let t = start.elapsed();
    let ratios_ok = min_ratio.iter().all(|&r| r >= 0.9);
    vec![
        hard(
            ratios_ok && within(t, 300),
            format!(
                "min BVA / centralized over 5 seeds: FedAvg {:.3}, FedProx {:.3}, FedSQ {:.3} ({}); {:.1}s",
                min_ratio[0],
                min_ratio[1],
                min_ratio[2],
                per_seed.join("; "),
                t.as_secs_f64()
            ),
        ),
        Outcome {
            pass: osc[2] <= osc[0],
            soft: true,
            detail: format!(
                "mean |delta val acc| after round 5, 5-seed average: FedSQ {:.5}, FedAvg {:.5}, FedProx {:.5}",
                osc[2], osc[0], osc[1]
            ),
        },
    ]
}

const DETERMINISM_CONFIG: &str = r#"
name = "determinism"
strategies = ["fedavg", "fedprox", "fedsq"]
seed = 11
out_dir = "unused"

[model]
input_shape = [8]
num_classes = 4
[[model.layers]]
kind = "dense"
in_dim = 8
out_dim = 16
gated = true
[[model.layers]]
kind = "dense"
in_dim = 16
out_dim = 12
gated = true
[[model.layers]]
kind = "dense"
in_dim = 12
out_dim = 4

[data]
val_samples = 200
probe_samples = 200
[data.source]
generator = { kind = "gaussian_blobs" }
n_samples = 600
n_classes = 4
input_shape = [8]
noise_sigma = 1.0
seed = 1
task_seed = 5
[data.target]
generator = { kind = "shifted_blobs", domain_shift = 1.0 }
n_samples = 800
n_classes = 4
input_shape = [8]
noise_sigma = 1.0
seed = 2
task_seed = 5

[pretrain]
epochs = 3

[calibration]
epochs_per_candidate = 2

[federation]
m = 6
k = 4
t = 4
batch_size = 32

[partition]
scheme = "dirichlet"
alpha = 0.5
"#;

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: usize| {
        let mut cfg = ExperimentConfig::from_toml_str(DETERMINISM_CONFIG).unwrap();
        cfg.out_dir = dir.path().join(name);
        cfg.workers = workers;
        experiment::run(&cfg).unwrap();
        ["fedavg", "fedprox", "fedsq"]
            .map(|s| std::fs::read(cfg.out_dir.join(format!("{s}.csv"))).unwrap())
            .to_vec()
    };
    let a = run("a", 1);
    let b = run("b", 1);
    let c = run("c", 4);
    let bytes: usize = a.iter().map(Vec::len).sum();
    hard(
        a == b && a == c,
        format!(
            "3 strategy CSVs ({bytes} bytes): repeat identical {}, workers 1 vs 4 identical {}",
            a == b,
            a == c
        ),
    )
}

fn calibration_behavior() -> Outcome {
    let start = Instant::now();
    // Early layers are trained to convergence on the very distribution being
    // probed, then the head is replaced: only the head has anything to learn.
    let arch = ModelArch::mlp(8, &[24, 16, 12], 5).unwrap();
    let mut spec = SyntheticSpec::blobs(1500, 5, vec![8], 0.3, 3);
    spec.center_scale = 3.0;
    let source = generate(&spec).unwrap();
    spec.seed = 4;
    spec.n_samples = 600;
    let probe = generate(&spec).unwrap();
    let sgd = SgdConfig {
        lr: 0.05,
        ..SgdConfig::default()
    };
    let mut w_pt = pretrain(&arch, &source, 30, &sgd, 3).unwrap().params;
    let head = *arch.param_layers().last().unwrap();
    let fresh = ModelParams::init(&arch, &mut rng(77));
    *w_pt.get_mut(head).unwrap() = LayerParams {
        weight: fresh.get(head).unwrap().weight.clone(),
        bias: fresh.get(head).unwrap().bias.clone(),
    };
    let cal = CalibrationConfig {
        sgd,
        epochs_per_candidate: 20,
        ..CalibrationConfig::default()
    };
    let report = obtain_schedule(&arch, &w_pt, &probe, &cal).unwrap();
    let accs: Vec<f64> = report.candidates.iter().map(|c| c.accuracy).collect();
    let n_layers = arch.num_param_layers();
    let stopped_early = report.stop_reason == StopReason::NoImprovement
        && report.candidates.last().unwrap().schedule.num_trainable() < n_layers;
    let argmax = accs.iter().all(|&a| a <= report.candidates[report.selected_index].accuracy)
        && report.candidates[report.selected_index].schedule == report.selected;
    let ordered = report
        .candidates
        .windows(2)
        .all(|w| w[1].schedule.num_trainable() == w[0].schedule.num_trainable() + 1)
        && report.candidates[0].schedule.num_trainable() == 2;
    // Exactly one evaluation past the best: the first non-improvement stops the search.
    let stop_rule = accs[..accs.len() - 1].windows(2).all(|w| w[1] > w[0]) && accs[accs.len() - 1] <= accs[accs.len() - 2];
    let after_unfreeze = accs[1..].windows(2).all(|w| w[1] <= w[0]);
    let head_trainable = *report.selected.trainable().last().unwrap();
    let t = start.elapsed();
    hard(
        stopped_early && argmax && ordered && stop_rule && after_unfreeze && head_trainable && within(t, 60),
        format!(
            "candidates {:?}, selected {} ({:?}); early stop {stopped_early}, argmax {argmax}, ordering {ordered}, stop rule {stop_rule}; {:.2}s",
            report
                .candidates
                .iter()
                .map(|c| format!("{}:{:.4}", c.schedule, c.accuracy))
                .collect::<Vec<_>>(),
            report.selected,
            report.stop_reason,
            t.as_secs_f64()
        ),
    )
}

fn main() {
    let mut results: Vec<(String, Outcome)> = vec![
        ("1 gradient oracle".into(), gradient_oracle()),
        ("2 ReLU equivalence".into(), relu_equivalence()),
        ("3 mask stability".into(), mask_stability()),
        ("4 within-region affinity".into(), within_region_affinity()),
        ("5 aggregation oracle".into(), aggregation_oracle()),
        ("6 degenerate federation".into(), degenerate_federation()),
        ("7 partition statistics".into(), partition_statistics()),
        ("8 conservation and accounting".into(), conservation_and_accounting()),
    ];
    let mut trend = qualitative_trend().into_iter();
    results.push(("9a trend: BVA vs centralized".into(), trend.next().unwrap()));
    results.push(("9b trend: oscillation (soft)".into(), trend.next().unwrap()));
    results.push(("10 determinism".into(), determinism()));
    results.push(("11 calibration behavior".into(), calibration_behavior()));

    let mut hard_failures = 0;
    for (name, o) in &results {
        let verdict = match (o.pass, o.soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (soft, reported only)",
        };
        println!("criterion {name}: {verdict} | {}", o.detail);
        if !o.pass && !o.soft {
            hard_failures += 1;
        }
    }
    if hard_failures > 0 {
        eprintln!("{hard_failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
