//! Synchronous federation: broadcast, client sampling, local training
//! (FedAvg, FedProx or FedSQ), weighted aggregation and per-round logging.
//!
//! Every random choice is seeded from the configuration seed, the round and
//! (for clients) the client id, and aggregation sums in ascending client id,
//! so results do not depend on how many workers train clients in parallel.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::Schedule;
use crate::checkpoint;
use crate::data::Dataset;
use crate::dualcopy::DualCopyModel;
use crate::error::{Error, Result};
use crate::nn::{self, ModelArch, ModelParams};
use crate::partition::{self, PartitionPlan};
use crate::training::{evaluate, evaluate_dual, sgd_epochs, Evaluation, SgdConfig};

/// Bytes per transmitted scalar.
pub const SCALAR_BYTES: u64 = 8;

/// Local-training and aggregation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Strategy {
    FedAvg,
    /// FedAvg with the proximal term `(mu / 2) * ||w - w_global||^2` added locally.
    FedProx { mu: f64 },
    /// Frozen structural copy gates a trained, federated quantitative copy.
    FedSq,
}

impl Strategy {
    /// Short lowercase name used in file names and logs.
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedProx { .. } => "fedprox",
            Strategy::FedSq => "fedsq",
        }
    }

    /// Display name as in result tables.
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::FedAvg => "FedAvg",
            Strategy::FedProx { .. } => "FedProx",
            Strategy::FedSq => "FedSQ",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// How client shards are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PartitionSpec {
    Iid,
    Dirichlet {
        alpha: f64,
        /// Defaults to one batch.
        #[serde(default)]
        min_per_client: Option<usize>,
    },
}

impl PartitionSpec {
    pub fn label(&self) -> String {
        match self {
            PartitionSpec::Iid => "i.i.d.".to_string(),
            PartitionSpec::Dirichlet { alpha, .. } => format!("Dirichlet({alpha})"),
        }
    }

    pub fn plan(&self, data: &Dataset, m: usize, seed: u64, batch_size: usize) -> Result<PartitionPlan> {
        match *self {
            PartitionSpec::Iid => partition::iid_split(data, m, seed),
            PartitionSpec::Dirichlet { alpha, min_per_client } => {
                partition::dirichlet_split(data, m, alpha, seed, min_per_client.unwrap_or(batch_size))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    /// Number of clients.
    pub m: usize,
    /// Clients sampled per round.
    pub k: usize,
    /// Local epochs per round.
    pub e: usize,
    /// Communication rounds.
    pub t: usize,
    pub sgd: SgdConfig,
    pub strategy: Strategy,
    pub partition: PartitionSpec,
    pub seed: u64,
    pub eval_every: usize,
    /// Worker threads for client training; results do not depend on it.
    pub workers: usize,
}

impl FederationConfig {
    /// Ten clients, full participation, one local epoch, SGD(1e-2, wd 1e-4), batch 64,
    /// Dirichlet(0.5) shards.
    pub fn cross_silo(strategy: Strategy, rounds: usize) -> Self {
        Self {
            m: 10,
            k: 10,
            e: 1,
            t: rounds,
            sgd: SgdConfig::default(),
            strategy,
            partition: PartitionSpec::Dirichlet {
                alpha: 0.5,
                min_per_client: None,
            },
            seed: 0,
            eval_every: 1,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k == 0 || self.k > self.m {
            return Err(Error::Config(format!("need 1 <= k <= m, got k={}, m={}", self.k, self.m)));
        }
        if self.e == 0 || self.t == 0 {
            return Err(Error::Config("local epochs e and rounds t must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if let Strategy::FedProx { mu } = self.strategy {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::Config(format!("FedProx mu {mu} must be >= 0")));
            }
        }
        if let PartitionSpec::Dirichlet { alpha, .. } = self.partition {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Config(format!("Dirichlet alpha {alpha} must be > 0")));
            }
        }
        self.sgd.validate()
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of a client's local generator in a given round.
pub fn client_seed(seed: u64, client: usize, round: usize) -> u64 {
    mix64(mix64(mix64(seed) ^ client as u64) ^ (round as u64).wrapping_mul(0x2545_f491_4f6c_dd1d))
}

const SAMPLING_STREAM: u64 = 0x5a4d_504c_455f_4b21;

/// `k` distinct clients for `round`, ascending; all clients when `k == m`.
pub fn sample_clients(cfg: &FederationConfig, round: usize) -> Vec<usize> {
    if cfg.k >= cfg.m {
        return (0..cfg.m).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ SAMPLING_STREAM) ^ mix64(round as u64));
    let mut ids = index::sample(&mut rng, cfg.m, cfg.k).into_vec();
    ids.sort_unstable();
    ids
}

/// One simulated participant.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub shard: Dataset,
}

impl ClientState {
    pub fn new(id: usize, shard: Dataset) -> Result<Self> {
        if shard.is_empty() {
            return Err(Error::Input(format!("client {id} has an empty shard")));
        }
        Ok(Self { id, shard })
    }

    pub fn n(&self) -> usize {
        self.shard.len()
    }
}

/// Parameters after local training and the mean batch loss seen on the way.
#[derive(Debug, Clone)]
pub struct LocalResult {
    pub params: ModelParams,
    pub mean_loss: f64,
}

fn tag_client(id: usize, e: Error) -> Error {
    match e {
        Error::Numeric { location, detail } => Error::Numeric {
            location: format!("client {id}, {location}"),
            detail,
        },
        other => other,
    }
}

fn local_sgd(
    arch: &ModelArch,
    global: &ModelParams,
    client: &ClientState,
    cfg: &FederationConfig,
    schedule: &Schedule,
    round: usize,
    mu: Option<f64>,
) -> Result<LocalResult> {
    schedule.check_arch(arch)?;
    let trainable = schedule.trainable();
    let mut rng = ChaCha8Rng::seed_from_u64(client_seed(cfg.seed, client.id, round));
    let mut current = global.clone();
    let curve = sgd_epochs(client.n(), cfg.sgd.batch_size, cfg.e, &mut rng, |batch| {
        let (x, y) = client.shard.batch(batch);
        let (loss, mut grads) = nn::backward(arch, &current, &x, &y, trainable)?;
        if let Some(mu) = mu {
            // Gradient of (mu/2)||w - w_global||^2 is mu (w - w_global).
            let drift = current.add_scaled(global, -1.0)?;
            for (l, g) in grads.layers_mut() {
                let d = drift.get(l).expect("congruent");
                for (gv, dv) in g.weight.data_mut().iter_mut().zip(d.weight.data()) {
                    *gv += mu * dv;
                }
                for (gv, dv) in g.bias.data_mut().iter_mut().zip(d.bias.data()) {
                    *gv += mu * dv;
                }
            }
        }
        current = nn::sgd_step(arch, &current, &grads, cfg.sgd.lr, cfg.sgd.wd, trainable)?;
        Ok(loss)
    })
    .map_err(|e| tag_client(client.id, e))?;
    Ok(LocalResult {
        params: current,
        mean_loss: curve.iter().sum::<f64>() / curve.len() as f64,
    })
}

/// E epochs of mini-batch SGD on the client shard, starting from `global`.
pub fn local_train_fedavg(
    arch: &ModelArch,
    global: &ModelParams,
    client: &ClientState,
    cfg: &FederationConfig,
    schedule: &Schedule,
    round: usize,
) -> Result<LocalResult> {
    local_sgd(arch, global, client, cfg, schedule, round, None)
}

/// As [`local_train_fedavg`], with `mu * (w - global)` added to every gradient.
pub fn local_train_fedprox(
    arch: &ModelArch,
    global: &ModelParams,
    client: &ClientState,
    cfg: &FederationConfig,
    mu: f64,
    schedule: &Schedule,
    round: usize,
) -> Result<LocalResult> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Config(format!("FedProx mu {mu} must be >= 0")));
    }
    local_sgd(arch, global, client, cfg, schedule, round, Some(mu))
}

/// Trains only the schedule-enabled QK tensors under masks from the frozen SK.
/// Masks are recomputed from SK for every batch.
pub fn local_train_fedsq(
    arch: &ModelArch,
    global_qk: &ModelParams,
    sk: &Arc<ModelParams>,
    schedule: &Schedule,
    client: &ClientState,
    cfg: &FederationConfig,
    round: usize,
) -> Result<LocalResult> {
    let mut model = DualCopyModel::with_shared_sk(arch.clone(), Arc::clone(sk), global_qk.clone(), schedule.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(client_seed(cfg.seed, client.id, round));
    let curve = sgd_epochs(client.n(), cfg.sgd.batch_size, cfg.e, &mut rng, |batch| {
        let (x, y) = client.shard.batch(batch);
        let masks = model.compute_masks(&x)?;
        let (loss, grads) = model.gated_backward(&masks, &x, &y)?;
        let next = nn::sgd_step(arch, model.qk(), &grads, cfg.sgd.lr, cfg.sgd.wd, schedule.trainable())?;
        model.set_qk(next)?;
        Ok(loss)
    })
    .map_err(|e| tag_client(client.id, e))?;
    Ok(LocalResult {
        params: model.into_qk(),
        mean_loss: curve.iter().sum::<f64>() / curve.len() as f64,
    })
}

/// One client's contribution to aggregation.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client: usize,
    pub params: ModelParams,
    pub n: usize,
}

/// Aggregation weights `n_i / sum_j n_j`.
pub fn aggregation_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&n| n as f64 / total as f64).collect()
}

/// Sample-weighted average of client parameters, summed in the given order.
pub fn aggregate(updates: &[ClientUpdate]) -> Result<ModelParams> {
    aggregate_layers(updates, None)
}

/// Weighted average restricted to `layers` (all layers when `None`); other
/// layers are taken from the first update unchanged.
pub fn aggregate_layers(updates: &[ClientUpdate], layers: Option<&[usize]>) -> Result<ModelParams> {
    let Some(first) = updates.first() else {
        return Err(Error::Protocol("no client updates to aggregate".into()));
    };
    if let Some(bad) = updates.iter().find(|u| u.n == 0) {
        return Err(Error::Protocol(format!("client {} reported zero samples", bad.client)));
    }
    let reference = first.params.layer_indices();
    for u in updates {
        let congruent = u.params.fingerprint() == first.params.fingerprint()
            && u.params.layer_indices() == reference
            && reference.iter().all(|&l| {
                let (a, b) = (u.params.get(l).unwrap(), first.params.get(l).unwrap());
                a.weight.same_shape(&b.weight) && a.bias.same_shape(&b.bias)
            });
        if !congruent {
            return Err(Error::Protocol(format!(
                "client {} sent parameters that do not match the global layout",
                u.client
            )));
        }
    }
    let counts: Vec<usize> = updates.iter().map(|u| u.n).collect();
    let weights = aggregation_weights(&counts);
    let selected: Vec<usize> = match layers {
        Some(ls) => ls.to_vec(),
        None => reference.clone(),
    };
    let mut out = first.params.clone();
    for &l in &selected {
        let Some(target) = out.get_mut(l) else {
            return Err(Error::Protocol(format!("layer {l} is not part of the update")));
        };
        let src = first.params.get(l).unwrap();
        for (x, &v) in target.weight.data_mut().iter_mut().zip(src.weight.data()) {
            *x = weights[0] * v;
        }
        for (x, &v) in target.bias.data_mut().iter_mut().zip(src.bias.data()) {
            *x = weights[0] * v;
        }
        for (u, &w) in updates.iter().zip(&weights).skip(1) {
            let p = u.params.get(l).unwrap();
            for (x, &v) in target.weight.data_mut().iter_mut().zip(p.weight.data()) {
                *x += w * v;
            }
            for (x, &v) in target.bias.data_mut().iter_mut().zip(p.bias.data()) {
                *x += w * v;
            }
        }
    }
    Ok(out)
}

/// Server-side model: a single copy, or the dual copy for FedSQ.
#[derive(Debug, Clone)]
pub enum GlobalModel {
    Plain(ModelParams),
    Dual(DualCopyModel),
}

impl GlobalModel {
    /// The federated parameters (the QK copy for FedSQ).
    pub fn params(&self) -> &ModelParams {
        match self {
            GlobalModel::Plain(p) => p,
            GlobalModel::Dual(d) => d.qk(),
        }
    }

    pub fn evaluate(&self, arch: &ModelArch, data: &Dataset) -> Result<Evaluation> {
        match self {
            GlobalModel::Plain(p) => evaluate(arch, p, data),
            GlobalModel::Dual(d) => evaluate_dual(d, data),
        }
    }

    pub fn as_dual(&self) -> Option<&DualCopyModel> {
        match self {
            GlobalModel::Dual(d) => Some(d),
            GlobalModel::Plain(_) => None,
        }
    }
}

/// Server bookkeeping between rounds.
#[derive(Debug, Clone)]
pub struct ServerState {
    /// Rounds completed so far.
    pub round: usize,
    pub global: GlobalModel,
    pub config: FederationConfig,
}

impl ServerState {
    /// Clients for the next round.
    pub fn sample_clients(&self) -> Result<Vec<usize>> {
        if self.round >= self.config.t {
            return Err(Error::Protocol(format!("all {} rounds already ran", self.config.t)));
        }
        Ok(sample_clients(&self.config, self.round + 1))
    }
}

/// Metrics of one communication round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based round index.
    pub round: usize,
    pub strategy: String,
    pub train_loss_mean: f64,
    /// `None` on rounds skipped by `eval_every`.
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub participating_clients: Vec<usize>,
    pub wall_time_s: f64,
    pub bytes_broadcast: u64,
    pub bytes_uploaded: u64,
}

/// Best validation accuracy and the (earliest) round attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestRound {
    pub round: usize,
    pub accuracy: f64,
}

pub fn best_round(logs: &[RoundLog]) -> Option<BestRound> {
    let mut best: Option<BestRound> = None;
    for log in logs {
        if let Some(acc) = log.val_accuracy {
            if best.is_none_or(|b| acc > b.accuracy) {
                best = Some(BestRound {
                    round: log.round,
                    accuracy: acc,
                });
            }
        }
    }
    best
}

/// Everything a finished federation produced.
#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub logs: Vec<RoundLog>,
    pub final_model: GlobalModel,
    pub plan: PartitionPlan,
    /// Structural checkpoint digest before round 1 and after every round (FedSQ only).
    pub sk_digests: Vec<String>,
    pub best: Option<BestRound>,
}

fn layer_scalars(params: &ModelParams, layers: impl Iterator<Item = usize>) -> u64 {
    layers
        .map(|l| params.get(l).map_or(0, |p| p.num_scalars() as u64))
        .sum()
}

/// Runs the full protocol and returns one log per round.
pub fn run_federation(
    arch: &ModelArch,
    cfg: &FederationConfig,
    data: &Dataset,
    val: &Dataset,
    w_pt: &ModelParams,
    schedule: &Schedule,
) -> Result<FederationOutcome> {
    run_federation_with(arch, cfg, data, val, w_pt, schedule, |_, _| {})
}

/// [`run_federation`] with an observer called after every round with the
/// round's log and the new global model.
pub fn run_federation_with<F>(
    arch: &ModelArch,
    cfg: &FederationConfig,
    data: &Dataset,
    val: &Dataset,
    w_pt: &ModelParams,
    schedule: &Schedule,
    mut observer: F,
) -> Result<FederationOutcome>
where
    F: FnMut(&RoundLog, &GlobalModel),
{
    cfg.validate()?;
    w_pt.validate(arch)?;
    schedule.check_arch(arch)?;
    let plan = cfg.partition.plan(data, cfg.m, cfg.seed, cfg.sgd.batch_size)?;
    let clients: Vec<ClientState> = plan
        .shards(data)
        .into_iter()
        .enumerate()
        .map(|(id, shard)| ClientState::new(id, shard))
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let enabled_layers: Vec<usize> = arch
        .param_layers()
        .iter()
        .zip(schedule.trainable())
        .filter_map(|(&l, &t)| t.then_some(l))
        .collect();
    let full_scalars = w_pt.num_scalars() as u64;
    let enabled_scalars = layer_scalars(w_pt, enabled_layers.iter().copied());

    let mut server = ServerState {
        round: 0,
        global: match cfg.strategy {
            Strategy::FedSq => GlobalModel::Dual(DualCopyModel::new(arch, w_pt, schedule.clone())?),
            _ => GlobalModel::Plain(w_pt.clone()),
        },
        config: *cfg,
    };
    let mut sk_digests = Vec::new();
    if let Some(d) = server.global.as_dual() {
        sk_digests.push(checkpoint::digest(d.sk()));
    }

    let mut logs = Vec::with_capacity(cfg.t);
    while server.round < cfg.t {
        let started = Instant::now();
        let round = server.round + 1;
        let sampled = server.sample_clients()?;
        let k = sampled.len() as u64;

        let (bytes_broadcast, bytes_uploaded) = match cfg.strategy {
            Strategy::FedSq => {
                // SK and the initial QK reach every client once before the first round;
                // afterwards only schedule-enabled QK tensors travel.
                let broadcast = if round == 1 {
                    cfg.m as u64 * 2 * full_scalars
                } else {
                    k * enabled_scalars
                };
                (broadcast * SCALAR_BYTES, k * enabled_scalars * SCALAR_BYTES)
            }
            _ => (k * full_scalars * SCALAR_BYTES, k * full_scalars * SCALAR_BYTES),
        };

        let global_params = server.global.params().clone();
        let shared_sk = server.global.as_dual().map(DualCopyModel::sk_shared);
        let results: Vec<Result<LocalResult>> = pool.install(|| {
            sampled
                .par_iter()
                .map(|&id| {
                    let client = &clients[id];
                    match (cfg.strategy, &shared_sk) {
                        (Strategy::FedAvg, _) => local_train_fedavg(arch, &global_params, client, cfg, schedule, round),
                        (Strategy::FedProx { mu }, _) => {
                            local_train_fedprox(arch, &global_params, client, cfg, mu, schedule, round)
                        }
                        (Strategy::FedSq, Some(sk)) => {
                            local_train_fedsq(arch, &global_params, sk, schedule, client, cfg, round)
                        }
                        (Strategy::FedSq, None) => unreachable!("FedSQ server always holds a dual copy"),
                    }
                })
                .collect()
        });

        let mut updates = Vec::with_capacity(sampled.len());
        let mut loss_sum = 0.0;
        for (&id, res) in sampled.iter().zip(results) {
            let local = res.map_err(|e| Error::Protocol(format!("round {round}: client {id} failed: {e}")))?;
            loss_sum += local.mean_loss;
            updates.push(ClientUpdate {
                client: id,
                params: local.params,
                n: clients[id].n(),
            });
        }
        // Frozen layers never change locally; they are kept bit-exact from the broadcast.
        let mut aggregated = aggregate_layers(&updates, Some(&enabled_layers))?;
        for &l in arch.param_layers() {
            if !enabled_layers.contains(&l) {
                aggregated.insert(l, global_params.get(l).unwrap().clone());
            }
        }
        match &mut server.global {
            GlobalModel::Plain(p) => *p = aggregated,
            GlobalModel::Dual(d) => d.set_qk(aggregated)?,
        }
        server.round = round;

        let evaluation = if round % cfg.eval_every == 0 || round == cfg.t {
            Some(server.global.evaluate(arch, val)?)
        } else {
            None
        };
        if let Some(d) = server.global.as_dual() {
            sk_digests.push(checkpoint::digest(d.sk()));
        }
        let log = RoundLog {
            round,
            strategy: cfg.strategy.name().to_string(),
            train_loss_mean: loss_sum / sampled.len() as f64,
            val_loss: evaluation.map(|e| e.loss),
            val_accuracy: evaluation.map(|e| e.accuracy),
            participating_clients: sampled,
            wall_time_s: started.elapsed().as_secs_f64(),
            bytes_broadcast,
            bytes_uploaded,
        };
        observer(&log, &server.global);
        logs.push(log);
    }

    Ok(FederationOutcome {
        best: best_round(&logs),
        logs,
        final_model: server.global,
        plan,
        sk_digests,
    })
}

/// Centralized counterpart of a federation: the whole dataset as one party,
/// `t` blocks of `e` epochs with the same local update rule and seeding as
/// client 0, evaluated after every block. Serves as the reference a
/// federation is compared against.
pub fn run_centralized(
    arch: &ModelArch,
    cfg: &FederationConfig,
    data: &Dataset,
    val: &Dataset,
    w_pt: &ModelParams,
    schedule: &Schedule,
) -> Result<(Vec<RoundLog>, GlobalModel)> {
    cfg.validate()?;
    let party = ClientState::new(0, data.clone())?;
    let mut global = match cfg.strategy {
        Strategy::FedSq => GlobalModel::Dual(DualCopyModel::new(arch, w_pt, schedule.clone())?),
        _ => GlobalModel::Plain(w_pt.clone()),
    };
    let mut logs = Vec::with_capacity(cfg.t);
    for round in 1..=cfg.t {
        let started = Instant::now();
        let local = match (&global, cfg.strategy) {
            (GlobalModel::Plain(p), Strategy::FedAvg) => local_train_fedavg(arch, p, &party, cfg, schedule, round)?,
            (GlobalModel::Plain(p), Strategy::FedProx { mu }) => {
                local_train_fedprox(arch, p, &party, cfg, mu, schedule, round)?
            }
            (GlobalModel::Dual(d), _) => {
                local_train_fedsq(arch, d.qk(), &d.sk_shared(), schedule, &party, cfg, round)?
            }
            (GlobalModel::Plain(_), Strategy::FedSq) => unreachable!("FedSQ always uses a dual copy"),
        };
        match &mut global {
            GlobalModel::Plain(p) => *p = local.params,
            GlobalModel::Dual(d) => d.set_qk(local.params)?,
        }
        let evaluation = if round % cfg.eval_every == 0 || round == cfg.t {
            Some(global.evaluate(arch, val)?)
        } else {
            None
        };
        logs.push(RoundLog {
            round,
            strategy: cfg.strategy.name().to_string(),
            train_loss_mean: local.mean_loss,
            val_loss: evaluation.map(|e| e.loss),
            val_accuracy: evaluation.map(|e| e.accuracy),
            participating_clients: vec![0],
            wall_time_s: started.elapsed().as_secs_f64(),
            bytes_broadcast: 0,
            bytes_uploaded: 0,
        });
    }
    Ok((logs, global))
}
