mod common;

use std::sync::Arc;

use common::*;
use fedsq::checkpoint;
use fedsq::fedproto::{
    aggregate, aggregation_weights, client_seed, local_train_fedavg, local_train_fedprox, local_train_fedsq,
    run_centralized, run_federation, sample_clients, ClientState, ClientUpdate, FederationConfig, GlobalModel,
    PartitionSpec, RoundLog, ServerState, Strategy, SCALAR_BYTES,
};
use fedsq::training::{epoch_batches, SgdConfig};
use fedsq::{generate, nn, Dataset, DualCopyModel, Error, ModelArch, ModelParams, Schedule, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn task(n: usize, seed: u64) -> (ModelArch, Dataset, Dataset) {
    let arch = ModelArch::mlp(8, &[12, 10], 4).unwrap();
    let mut spec = SyntheticSpec::blobs(n, 4, vec![8], 0.8, seed);
    spec.task_seed = Some(99);
    let data = generate(&spec).unwrap();
    spec.seed = seed + 1000;
    spec.n_samples = 200;
    let val = generate(&spec).unwrap();
    (arch, data, val)
}

fn cfg(strategy: Strategy, m: usize, t: usize) -> FederationConfig {
    FederationConfig {
        m,
        k: m,
        e: 1,
        t,
        sgd: SgdConfig {
            lr: 0.05,
            wd: 1e-4,
            batch_size: 16,
        },
        strategy,
        partition: PartitionSpec::Iid,
        seed: 17,
        eval_every: 1,
        workers: 1,
    }
}

fn untimed(logs: &[RoundLog]) -> Vec<RoundLog> {
    logs.iter()
        .map(|l| RoundLog {
            wall_time_s: 0.0,
            ..l.clone()
        })
        .collect()
}

fn filled(params: &ModelParams, v: f64) -> ModelParams {
    params.with_flat(&vec![v; params.num_scalars()]).unwrap()
}

fn update(client: usize, params: ModelParams, n: usize) -> ClientUpdate {
    ClientUpdate { client, params, n }
}

#[test]
fn weighted_mean_of_two_scalars() {
    let arch = ModelArch::mlp(2, &[2], 2).unwrap();
    let z = ModelParams::zeros(&arch);
    let agg = aggregate(&[update(0, filled(&z, 0.0), 1), update(1, filled(&z, 4.0), 3)]).unwrap();
    assert!(agg.flatten().iter().all(|&v| v == 3.0));
}

#[test]
fn identical_updates_aggregate_to_themselves() {
    let arch = ModelArch::mlp(5, &[6], 3).unwrap();
    let mut r = rng(1);
    let p = ModelParams::init(&arch, &mut r);
    let ups: Vec<_> = [3, 7, 11, 2].iter().enumerate().map(|(i, &n)| update(i, p.clone(), n)).collect();
    assert!(aggregate(&ups).unwrap().max_abs_diff(&p) <= 1e-15);
}

#[test]
fn equal_weights_give_plain_average() {
    let arch = ModelArch::mlp(5, &[6], 3).unwrap();
    let mut r = rng(2);
    let ps: Vec<_> = (0..5).map(|_| ModelParams::init(&arch, &mut r)).collect();
    let ups: Vec<_> = ps.iter().enumerate().map(|(i, p)| update(i, p.clone(), 10)).collect();
    let agg = aggregate(&ups).unwrap().flatten();
    for (j, v) in agg.iter().enumerate() {
        let mean = ps.iter().map(|p| p.flatten()[j]).sum::<f64>() / 5.0;
        assert!((v - mean).abs() <= 1e-12);
    }
}

#[test]
fn aggregation_is_linear_and_weights_sum_to_one() {
    let arch = ModelArch::mlp(4, &[5], 2).unwrap();
    let mut r = rng(3);
    let counts: Vec<usize> = (0..7).map(|_| r.random_range(1..500)).collect();
    let w = aggregation_weights(&counts);
    assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
    let ups: Vec<_> = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| update(i, ModelParams::init(&arch, &mut r), n))
        .collect();
    let scaled: Vec<_> = ups.iter().map(|u| update(u.client, u.params.scaled(2.5), u.n)).collect();
    let lhs = aggregate(&scaled).unwrap();
    let rhs = aggregate(&ups).unwrap().scaled(2.5);
    assert!(lhs.max_abs_diff(&rhs) <= 1e-12);
}

#[test]
fn aggregation_errors() {
    assert!(matches!(aggregate(&[]), Err(Error::Protocol(_))));
    let a = ModelParams::zeros(&ModelArch::mlp(4, &[5], 2).unwrap());
    let b = ModelParams::zeros(&ModelArch::mlp(4, &[6], 2).unwrap());
    let err = aggregate(&[update(0, a, 1), update(7, b, 1)]).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)));
    assert!(err.to_string().contains("client 7"), "{err}");
}

#[test]
fn full_participation_returns_all_clients_in_order() {
    let c = cfg(Strategy::FedAvg, 10, 5);
    for round in 1..=5 {
        assert_eq!(sample_clients(&c, round), (0..10).collect::<Vec<_>>());
    }
}

#[test]
fn single_client_sampling_varies_and_repeats() {
    let mut c = cfg(Strategy::FedAvg, 10, 20);
    c.k = 1;
    let picks: Vec<_> = (1..=20).map(|r| sample_clients(&c, r)).collect();
    assert!(picks.iter().all(|p| p.len() == 1 && p[0] < 10));
    assert!(picks.windows(2).any(|w| w[0] != w[1]));
    assert_eq!(picks, (1..=20).map(|r| sample_clients(&c, r)).collect::<Vec<_>>());
    c.k = 4;
    for r in 1..=20 {
        let s = sample_clients(&c, r);
        assert_eq!(s.len(), 4);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}

#[test]
fn server_refuses_to_sample_past_last_round() {
    let (arch, _, _) = task(40, 0);
    let server = ServerState {
        round: 3,
        global: GlobalModel::Plain(ModelParams::zeros(&arch)),
        config: cfg(Strategy::FedAvg, 2, 3),
    };
    assert!(matches!(server.sample_clients(), Err(Error::Protocol(_))));
}

#[test]
fn zero_learning_rate_returns_global() {
    let (arch, data, _) = task(64, 1);
    let mut c = cfg(Strategy::FedAvg, 1, 1);
    c.sgd.lr = 0.0;
    let w = ModelParams::init(&arch, &mut rng(4));
    let client = ClientState::new(0, data).unwrap();
    let all = Schedule::all(&arch);
    assert_eq!(local_train_fedavg(&arch, &w, &client, &c, &all, 1).unwrap().params, w);
    let sk = Arc::new(w.clone());
    let out = local_train_fedsq(&arch, &w, &sk, &all, &client, &c, 1).unwrap();
    assert_eq!(out.params, w);
}

#[test]
fn single_batch_epoch_is_one_sgd_step() {
    let (arch, data, _) = task(12, 2);
    let mut c = cfg(Strategy::FedAvg, 1, 1);
    c.sgd.batch_size = 64;
    let w = ModelParams::init(&arch, &mut rng(5));
    let client = ClientState::new(3, data.clone()).unwrap();
    let out = local_train_fedavg(&arch, &w, &client, &c, &Schedule::all(&arch), 1).unwrap();
    // The shuffled order of one full batch only changes summation order.
    let (x, y) = data.all();
    let (_, g) = nn::backward(&arch, &w, &x, &y, &[true; 3]).unwrap();
    let expected: Vec<f64> = w
        .flatten()
        .iter()
        .zip(g.flatten())
        .map(|(p, g)| p - c.sgd.lr * (g + c.sgd.wd * p))
        .collect();
    for (a, b) in out.params.flatten().iter().zip(&expected) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn same_client_same_round_is_deterministic() {
    let (arch, data, _) = task(80, 3);
    let c = cfg(Strategy::FedAvg, 1, 1);
    let w = ModelParams::init(&arch, &mut rng(6));
    let all = Schedule::all(&arch);
    let a = local_train_fedavg(&arch, &w, &ClientState::new(2, data.clone()).unwrap(), &c, &all, 4).unwrap();
    let b = local_train_fedavg(&arch, &w, &ClientState::new(2, data).unwrap(), &c, &all, 4).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn fedprox_without_penalty_is_fedavg() {
    let (arch, data, _) = task(100, 4);
    let c = cfg(Strategy::FedAvg, 1, 1);
    let w = ModelParams::init(&arch, &mut rng(7));
    let client = ClientState::new(1, data).unwrap();
    let all = Schedule::all(&arch);
    let avg = local_train_fedavg(&arch, &w, &client, &c, &all, 2).unwrap();
    let prox = local_train_fedprox(&arch, &w, &client, &c, 0.0, &all, 2).unwrap();
    assert_eq!(avg.params, prox.params);
    assert_eq!(avg.mean_loss, prox.mean_loss);
}

#[test]
fn proximal_gradient_vanishes_at_the_global_point() {
    let (arch, data, _) = task(10, 5);
    let mut c = cfg(Strategy::FedAvg, 1, 1);
    c.sgd.batch_size = 64;
    let w = ModelParams::init(&arch, &mut rng(8));
    let client = ClientState::new(0, data).unwrap();
    let all = Schedule::all(&arch);
    // One batch: the only step is taken at w == global.
    let avg = local_train_fedavg(&arch, &w, &client, &c, &all, 1).unwrap();
    let prox = local_train_fedprox(&arch, &w, &client, &c, 50.0, &all, 1).unwrap();
    assert_eq!(avg.params, prox.params);
}

/// Independent replay of the proximal local loop.
fn prox_oracle(arch: &ModelArch, w: &ModelParams, client: &ClientState, c: &FederationConfig, mu: f64, round: usize) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(client_seed(c.seed, client.id, round));
    let g0 = w.flatten();
    let mut cur = g0.clone();
    for _ in 0..c.e {
        for batch in epoch_batches(client.n(), c.sgd.batch_size, &mut r) {
            let (x, y) = client.shard.batch(&batch);
            let p = w.with_flat(&cur).unwrap();
            let (_, g) = nn::backward(arch, &p, &x, &y, &[true; 3]).unwrap();
            for ((v, gv), w0) in cur.iter_mut().zip(g.flatten()).zip(&g0) {
                let grad = gv + mu * (*v - w0);
                *v -= c.sgd.lr * (grad + c.sgd.wd * *v);
            }
        }
    }
    cur
}

#[test]
fn strong_proximal_term_matches_direct_simulation_and_limits_drift() {
    let (arch, data, _) = task(160, 6);
    let mut c = cfg(Strategy::FedAvg, 1, 1);
    c.sgd.lr = 1e-2;
    let w = ModelParams::init(&arch, &mut rng(9));
    let client = ClientState::new(0, data).unwrap();
    let all = Schedule::all(&arch);
    let mu = 100.0;
    let prox = local_train_fedprox(&arch, &w, &client, &c, mu, &all, 1).unwrap();
    let oracle = prox_oracle(&arch, &w, &client, &c, mu, 1);
    for (a, b) in prox.params.flatten().iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-12);
    }
    let avg = local_train_fedavg(&arch, &w, &client, &c, &all, 1).unwrap();
    let drift_prox = prox.params.max_abs_diff(&w);
    let drift_avg = avg.params.max_abs_diff(&w);
    assert!(drift_prox < 0.5 * drift_avg, "prox {drift_prox} avg {drift_avg}");
}

#[test]
fn unstable_proximal_step_is_a_numeric_error_naming_the_client() {
    // lr * mu > 2 makes the explicit proximal step expand the drift every batch.
    let (arch, data, _) = task(400, 7);
    let mut c = cfg(Strategy::FedAvg, 1, 1);
    c.sgd.lr = 1e-2;
    c.sgd.batch_size = 1;
    let w = ModelParams::init(&arch, &mut rng(10));
    let client = ClientState::new(5, data).unwrap();
    let err = local_train_fedprox(&arch, &w, &client, &c, 1e6, &Schedule::all(&arch), 1).unwrap_err();
    match err {
        Error::Numeric { location, .. } => assert!(location.contains("client 5"), "{location}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn head_only_fedsq_equals_head_only_fedavg() {
    let (arch, data, _) = task(120, 8);
    let c = cfg(Strategy::FedSq, 1, 1);
    let w = ModelParams::init(&arch, &mut rng(11));
    let head = Schedule::head_only(&arch);
    let client = ClientState::new(0, data).unwrap();
    let sq = local_train_fedsq(&arch, &w, &Arc::new(w.clone()), &head, &client, &c, 1).unwrap();
    let avg = local_train_fedavg(&arch, &w, &client, &c, &head, 1).unwrap();
    // Sign stability: frozen gated layers keep every pre-activation of the batch.
    let (x, _) = client.shard.all();
    let before = nn::forward(&arch, &w, &x).unwrap().preacts;
    let after = nn::forward(&arch, &avg.params, &x).unwrap().preacts;
    assert_eq!(before, after);
    assert_eq!(sq.params, avg.params);
}

#[test]
fn local_fedsq_training_keeps_masks() {
    let (arch, data, val) = task(200, 9);
    let c = cfg(Strategy::FedSq, 1, 1);
    let w = ModelParams::init(&arch, &mut rng(12));
    let all = Schedule::all(&arch);
    let client = ClientState::new(0, data).unwrap();
    let sk = Arc::new(w.clone());
    let out = local_train_fedsq(&arch, &w, &sk, &all, &client, &c, 1).unwrap();
    assert_ne!(out.params, w);
    let (probe, _) = val.batch(&(0..32).collect::<Vec<_>>());
    let before = DualCopyModel::new(&arch, &w, all.clone()).unwrap();
    let after = DualCopyModel::from_parts(arch.clone(), w.clone(), out.params, all).unwrap();
    assert_eq!(before.compute_masks(&probe).unwrap(), after.compute_masks(&probe).unwrap());
}

fn pretrained(arch: &ModelArch, data: &Dataset) -> ModelParams {
    fedsq::pretrain(arch, data, 3, &SgdConfig::default(), 1).unwrap().params
}

#[test]
fn one_round_one_client_equals_local_training() {
    let (arch, data, val) = task(120, 10);
    let w = pretrained(&arch, &data);
    let all = Schedule::all(&arch);
    let c = cfg(Strategy::FedAvg, 1, 1);
    let out = run_federation(&arch, &c, &data, &val, &w, &all).unwrap();
    let local = local_train_fedavg(&arch, &w, &ClientState::new(0, data).unwrap(), &c, &all, 1).unwrap();
    assert_eq!(out.final_model.params(), &local.params);
}

#[test]
fn one_client_federation_is_centralized_training() {
    let (arch, data, val) = task(150, 11);
    let w = pretrained(&arch, &data);
    let sched = Schedule::last_k(&arch, 2).unwrap();
    for strategy in [Strategy::FedAvg, Strategy::FedProx { mu: 0.1 }, Strategy::FedSq] {
        let c = cfg(strategy, 1, 4);
        let fed = run_federation(&arch, &c, &data, &val, &w, &sched).unwrap();
        let (logs, model) = run_centralized(&arch, &c, &data, &val, &w, &sched).unwrap();
        assert_eq!(fed.final_model.params(), model.params(), "{strategy}");
        let acc = |l: &[RoundLog]| l.iter().map(|r| (r.train_loss_mean, r.val_accuracy, r.val_loss)).collect::<Vec<_>>();
        assert_eq!(acc(&fed.logs), acc(&logs), "{strategy}");
    }
}

#[test]
fn identical_shards_aggregate_to_either_local_output() {
    let (arch, data, _) = task(24, 12);
    let mut c = cfg(Strategy::FedAvg, 2, 1);
    c.sgd.batch_size = 64;
    let w = ModelParams::init(&arch, &mut rng(13));
    let all = Schedule::all(&arch);
    let outs: Vec<_> = (0..2)
        .map(|id| local_train_fedavg(&arch, &w, &ClientState::new(id, data.clone()).unwrap(), &c, &all, 1).unwrap())
        .collect();
    let agg = aggregate(&[update(0, outs[0].params.clone(), 24), update(1, outs[1].params.clone(), 24)]).unwrap();
    // Full-batch steps differ only in summation order across clients.
    assert!(agg.max_abs_diff(&outs[0].params) <= 1e-12);
    assert!(agg.max_abs_diff(&outs[1].params) <= 1e-12);
    let same = aggregate(&[update(0, outs[0].params.clone(), 24), update(1, outs[0].params.clone(), 24)]).unwrap();
    assert_eq!(same, outs[0].params);
}

#[test]
fn fedsq_structural_copy_never_changes() {
    let (arch, data, val) = task(300, 13);
    let w = pretrained(&arch, &data);
    let mut c = cfg(Strategy::FedSq, 3, 5);
    c.partition = PartitionSpec::Dirichlet {
        alpha: 0.5,
        min_per_client: Some(16),
    };
    let out = run_federation(&arch, &c, &data, &val, &w, &Schedule::all(&arch)).unwrap();
    assert_eq!(out.sk_digests.len(), 6);
    assert!(out.sk_digests.iter().all(|d| d == &checkpoint::digest(&w)));
    assert_eq!(out.final_model.as_dual().unwrap().sk(), &w);
    assert_ne!(out.final_model.params(), &w);
}

#[test]
fn fedprox_zero_mu_logs_match_fedavg() {
    let (arch, data, val) = task(400, 14);
    let w = pretrained(&arch, &data);
    let all = Schedule::all(&arch);
    let avg = run_federation(&arch, &cfg(Strategy::FedAvg, 4, 10), &data, &val, &w, &all).unwrap();
    let prox = run_federation(&arch, &cfg(Strategy::FedProx { mu: 0.0 }, 4, 10), &data, &val, &w, &all).unwrap();
    let strip = |l: &[RoundLog]| {
        untimed(l)
            .into_iter()
            .map(|r| RoundLog {
                strategy: String::new(),
                ..r
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&avg.logs), strip(&prox.logs));
    assert_eq!(avg.final_model.params(), prox.final_model.params());
}

#[test]
fn worker_count_does_not_change_results() {
    let (arch, data, val) = task(400, 15);
    let w = pretrained(&arch, &data);
    let sched = Schedule::last_k(&arch, 2).unwrap();
    for strategy in [Strategy::FedAvg, Strategy::FedSq] {
        let mut c = cfg(strategy, 5, 3);
        c.k = 3;
        let seq = run_federation(&arch, &c, &data, &val, &w, &sched).unwrap();
        c.workers = 4;
        let par = run_federation(&arch, &c, &data, &val, &w, &sched).unwrap();
        assert_eq!(untimed(&seq.logs), untimed(&par.logs));
        assert_eq!(seq.final_model.params(), par.final_model.params());
    }
}

#[test]
fn byte_accounting() {
    let (arch, data, val) = task(200, 16);
    let w = pretrained(&arch, &data);
    let sched = Schedule::last_k(&arch, 2).unwrap();
    let full = w.num_scalars() as u64;
    let enabled = sched.trainable_scalars(&arch) as u64;
    assert!(enabled < full);
    let avg = run_federation(&arch, &cfg(Strategy::FedAvg, 4, 3), &data, &val, &w, &sched).unwrap();
    let sq = run_federation(&arch, &cfg(Strategy::FedSq, 4, 3), &data, &val, &w, &sched).unwrap();
    for (a, s) in avg.logs.iter().zip(&sq.logs) {
        assert_eq!(a.bytes_uploaded, 4 * full * SCALAR_BYTES);
        assert_eq!(a.bytes_broadcast, 4 * full * SCALAR_BYTES);
        assert_eq!(s.bytes_uploaded, 4 * enabled * SCALAR_BYTES);
        assert!(s.bytes_uploaded < a.bytes_uploaded);
    }
    assert_eq!(sq.logs[0].bytes_broadcast, 4 * 2 * full * SCALAR_BYTES);
    assert_eq!(sq.logs[1].bytes_broadcast, 4 * enabled * SCALAR_BYTES);
}

#[test]
fn frozen_layers_stay_bit_exact_for_baselines() {
    let (arch, data, val) = task(200, 17);
    let w = pretrained(&arch, &data);
    let sched = Schedule::head_only(&arch);
    let out = run_federation(&arch, &cfg(Strategy::FedAvg, 3, 3), &data, &val, &w, &sched).unwrap();
    let p = out.final_model.params();
    assert_eq!(p.get(0), w.get(0));
    assert_eq!(p.get(1), w.get(1));
    assert_ne!(p.get(2), w.get(2));
}

#[test]
fn logs_are_complete() {
    let (arch, data, val) = task(200, 18);
    let w = pretrained(&arch, &data);
    let mut c = cfg(Strategy::FedAvg, 4, 5);
    c.k = 2;
    c.eval_every = 2;
    let out = run_federation(&arch, &c, &data, &val, &w, &Schedule::all(&arch)).unwrap();
    assert_eq!(out.logs.iter().map(|l| l.round).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    let evaluated: Vec<bool> = out.logs.iter().map(|l| l.val_accuracy.is_some()).collect();
    assert_eq!(evaluated, vec![false, true, false, true, true]);
    for l in &out.logs {
        assert_eq!(l.participating_clients.len(), 2);
        assert!(l.participating_clients.iter().all(|&i| i < 4));
    }
    let best = out.best.unwrap();
    let max = out.logs.iter().filter_map(|l| l.val_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(best.accuracy, max);
}

#[test]
fn failing_client_aborts_the_round() {
    let (arch, data, val) = task(200, 19);
    let w = pretrained(&arch, &data);
    let mut c = cfg(Strategy::FedProx { mu: 1e6 }, 2, 2);
    c.sgd.lr = 1e-2;
    c.sgd.batch_size = 1;
    let err = run_federation(&arch, &c, &data, &val, &w, &Schedule::all(&arch)).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)));
    assert!(err.to_string().contains("client"), "{err}");
}
