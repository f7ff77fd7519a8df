//! Config-driven experiments: data generation, pretraining, schedule
//! calibration and one federation per listed strategy, with every artifact
//! written to an output directory.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{obtain_schedule, pretrain, CalibrationConfig, CalibrationReport, Schedule};
use crate::checkpoint;
use crate::data::{generate, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fedproto::{
    best_round, run_federation_with, FederationConfig, GlobalModel, PartitionSpec, RoundLog, Strategy,
};
use crate::logs::{RoundLogWriter, WallTime};
use crate::nn::{ModelArch, ModelParams};
use crate::partition::{heterogeneity_index, PartitionPlan};
use crate::training::SgdConfig;

/// Strategy names accepted in `strategies`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    FedAvg,
    FedProx,
    FedSq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Pretraining distribution.
    pub source: SyntheticSpec,
    /// Federated task; its samples are split across clients.
    pub target: SyntheticSpec,
    /// Size of the server-side validation set drawn from the target distribution.
    #[serde(default = "default_val_samples")]
    pub val_samples: usize,
    /// Size of the probe set drawn from the source distribution.
    #[serde(default = "default_probe_samples")]
    pub probe_samples: usize,
}

fn default_val_samples() -> usize {
    1000
}
fn default_probe_samples() -> usize {
    600
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PretrainSection {
    #[serde(default = "default_pretrain_epochs")]
    pub epochs: usize,
    #[serde(flatten)]
    pub sgd: SgdConfig,
}

fn default_pretrain_epochs() -> usize {
    20
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            epochs: default_pretrain_epochs(),
            sgd: SgdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSection {
    #[serde(default = "default_candidate_epochs")]
    pub epochs_per_candidate: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Bitstring such as `"0011"`; skips the search when set.
    #[serde(default)]
    pub schedule: Option<Schedule>,
    #[serde(flatten)]
    pub sgd: SgdConfig,
}

fn default_candidate_epochs() -> usize {
    5
}
fn default_val_fraction() -> f64 {
    0.3
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            epochs_per_candidate: default_candidate_epochs(),
            val_fraction: default_val_fraction(),
            schedule: None,
            sgd: SgdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationSection {
    pub m: usize,
    /// Defaults to `m` (full participation).
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_one")]
    pub e: usize,
    pub t: usize,
    #[serde(default = "default_one")]
    pub eval_every: usize,
    /// FedProx proximal weight.
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(flatten)]
    pub sgd: SgdConfig,
}

fn default_one() -> usize {
    1
}
fn default_mu() -> f64 {
    0.01
}
fn default_workers() -> usize {
    1
}

/// Everything one experiment needs, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub strategies: Vec<StrategyName>,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub wall_time: WallTime,
    pub model: ModelArch,
    pub data: DataSection,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    pub federation: FederationSection,
    pub partition: PartitionSpec,
}

impl ExperimentConfig {
    /// Parses and validates; every failure is a configuration error naming the
    /// offending field (and line, for syntax and type errors).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        if self.strategies.is_empty() {
            return Err(Error::Config("strategies: list must not be empty".into()));
        }
        let distinct: BTreeSet<_> = self.strategies.iter().collect();
        if distinct.len() != self.strategies.len() {
            return Err(Error::Config("strategies: duplicate entry".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers: must be positive".into()));
        }
        self.data.source.validate().map_err(|e| field("data.source", e))?;
        self.data.target.validate().map_err(|e| field("data.target", e))?;
        for (name, spec) in [("data.source", &self.data.source), ("data.target", &self.data.target)] {
            if spec.input_shape != self.model.input_shape() {
                return Err(Error::Config(format!(
                    "{name}.input_shape: {:?} does not match model input {:?}",
                    spec.input_shape,
                    self.model.input_shape()
                )));
            }
            if spec.n_classes != self.model.num_classes() {
                return Err(Error::Config(format!(
                    "{name}.n_classes: {} does not match model classes {}",
                    spec.n_classes,
                    self.model.num_classes()
                )));
            }
        }
        if self.data.val_samples == 0 {
            return Err(Error::Config("data.val_samples: must be positive".into()));
        }
        if self.data.probe_samples < 2 {
            return Err(Error::Config("data.probe_samples: need at least 2".into()));
        }
        self.pretrain.sgd.validate().map_err(|e| field("pretrain", e))?;
        self.calibration.sgd.validate().map_err(|e| field("calibration", e))?;
        if !(self.calibration.val_fraction > 0.0 && self.calibration.val_fraction < 1.0) {
            return Err(Error::Config("calibration.val_fraction: must lie in (0, 1)".into()));
        }
        if let Some(s) = &self.calibration.schedule {
            s.check_arch(&self.model).map_err(|e| field("calibration.schedule", e))?;
        }
        for s in &self.strategies {
            self.federation_config(*s).validate().map_err(|e| field("federation", e))?;
        }
        Ok(())
    }

    pub fn strategy(&self, name: StrategyName) -> Strategy {
        match name {
            StrategyName::FedAvg => Strategy::FedAvg,
            StrategyName::FedProx => Strategy::FedProx { mu: self.federation.mu },
            StrategyName::FedSq => Strategy::FedSq,
        }
    }

    pub fn federation_config(&self, name: StrategyName) -> FederationConfig {
        let f = &self.federation;
        FederationConfig {
            m: f.m,
            k: f.k.unwrap_or(f.m),
            e: f.e,
            t: f.t,
            sgd: f.sgd,
            strategy: self.strategy(name),
            partition: self.partition,
            seed: self.seed,
            eval_every: f.eval_every,
            workers: self.workers,
        }
    }

    pub fn calibration_config(&self) -> CalibrationConfig {
        CalibrationConfig {
            sgd: self.calibration.sgd,
            epochs_per_candidate: self.calibration.epochs_per_candidate,
            val_fraction: self.calibration.val_fraction,
            seed: self.seed,
        }
    }

    /// Applies command-line overrides.
    pub fn override_with(&mut self, seed: Option<u64>, out: Option<PathBuf>, workers: Option<usize>) -> Result<()> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o;
        }
        if let Some(w) = workers {
            self.workers = w;
        }
        self.validate()
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "experiment".to_string())
    }
}

/// Same class geometry as `spec`, fresh sample noise.
fn resample(spec: &SyntheticSpec, n_samples: usize, salt: u64) -> SyntheticSpec {
    let mut s = spec.clone();
    s.task_seed = Some(spec.task_seed.unwrap_or(spec.seed));
    s.seed = crate::fedproto::mix64(spec.seed ^ salt);
    s.n_samples = n_samples;
    s
}

/// The four datasets of an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub source: Dataset,
    pub probe: Dataset,
    pub target: Dataset,
    pub val: Dataset,
}

impl ExperimentData {
    pub fn generate(cfg: &ExperimentConfig) -> Result<Self> {
        let d = &cfg.data;
        Ok(Self {
            source: generate(&d.source)?,
            probe: generate(&resample(&d.source, d.probe_samples, 0x70_726f_6265))?,
            target: generate(&d.target)?,
            val: generate(&resample(&d.target, d.val_samples, 0x76_616c))?,
        })
    }

    /// Writes `source.fsqd`, `probe.fsqd`, `target.fsqd` and `val.fsqd`.
    pub fn store(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        [("source", &self.source), ("probe", &self.probe), ("target", &self.target), ("val", &self.val)]
            .into_iter()
            .map(|(name, data)| {
                let path = dir.join(format!("{name}.fsqd"));
                data.store(&path)?;
                Ok(path)
            })
            .collect()
    }
}

/// Pretrained checkpoint plus the schedule every strategy shares.
#[derive(Debug, Clone)]
pub struct Calibrated {
    pub w_pt: ModelParams,
    pub pretrain_curve: Vec<f64>,
    /// `None` when the config fixes the schedule.
    pub report: Option<CalibrationReport>,
    pub schedule: Schedule,
}

pub fn calibrate(cfg: &ExperimentConfig, data: &ExperimentData) -> Result<Calibrated> {
    let pre = pretrain(&cfg.model, &data.source, cfg.pretrain.epochs, &cfg.pretrain.sgd, cfg.seed)?;
    let (report, schedule) = match &cfg.calibration.schedule {
        Some(s) => (None, s.clone()),
        None => {
            let report = obtain_schedule(&cfg.model, &pre.params, &data.probe, &cfg.calibration_config())?;
            let selected = report.selected.clone();
            (Some(report), selected)
        }
    };
    Ok(Calibrated {
        w_pt: pre.params,
        pretrain_curve: pre.curve,
        report,
        schedule,
    })
}

/// Writes `pretrained.ckpt`, `pretrain.csv` and (when searched) `calibration.json`.
pub fn store_calibration(cal: &Calibrated, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    checkpoint::save(&cal.w_pt, dir.join("pretrained.ckpt"))?;
    let mut curve = String::from("epoch,train_loss\n");
    for (i, l) in cal.pretrain_curve.iter().enumerate() {
        curve.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(&dir.join("pretrain.csv"), &curve)?;
    if let Some(r) = &cal.report {
        write_text(&dir.join("calibration.json"), &r.to_json())?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub partition: String,
    pub aggregation: String,
    /// Round at which the best validation accuracy was first reached.
    pub round: usize,
    pub bva: f64,
    pub final_accuracy: Option<f64>,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub seed: u64,
    pub schedule: Schedule,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("partition,aggregation,round,bva\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.partition, r.aggregation, r.round, r.bva));
        }
        s
    }
}

/// Outcome of a full [`run`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub logs: Vec<(StrategyName, Vec<RoundLog>)>,
    pub calibrated: Calibrated,
    pub plan: PartitionPlan,
}

pub fn log_path(dir: &Path, strategy: Strategy) -> PathBuf {
    dir.join(format!("{}.csv", strategy.name()))
}

/// Runs calibration and every strategy, writing into `cfg.out_dir`:
/// `pretrained.ckpt`, `pretrain.csv`, `calibration.json`, `partition.json`,
/// `<strategy>.csv` (streamed round by round, so a failed run keeps its
/// partial log), `<strategy>.timing.csv` in sidecar mode, final checkpoints
/// (`fedsq.dual` for FedSQ, `<strategy>.ckpt` otherwise), `summary.json`
/// and `summary.csv`.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = ExperimentData::generate(cfg)?;
    let calibrated = calibrate(cfg, &data)?;
    store_calibration(&calibrated, dir)?;

    let first = cfg.federation_config(cfg.strategies[0]);
    let plan = first.partition.plan(&data.target, first.m, first.seed, first.sgd.batch_size)?;
    plan.save(dir.join("partition.json"))?;

    let mut rows = Vec::new();
    let mut all_logs = Vec::new();
    for &name in &cfg.strategies {
        let fed = cfg.federation_config(name);
        let path = log_path(dir, fed.strategy);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = RoundLogWriter::new(BufWriter::new(file), cfg.wall_time)?;
        let mut write_err = None;
        let outcome = run_federation_with(
            &cfg.model,
            &fed,
            &data.target,
            &data.val,
            &calibrated.w_pt,
            &calibrated.schedule,
            |log, _| {
                if write_err.is_none() {
                    write_err = writer.append(log).err();
                }
            },
        )
        .map_err(|e| Error::Protocol(format!("{}: {e}", fed.strategy.label())))?;
        if let Some(e) = write_err {
            return Err(e);
        }
        writer.into_inner()?;
        if cfg.wall_time == WallTime::Sidecar {
            write_text(
                &dir.join(format!("{}.timing.csv", fed.strategy.name())),
                &crate::logs::timing_csv(&outcome.logs),
            )?;
        }
        match &outcome.final_model {
            GlobalModel::Dual(d) => {
                let p = dir.join("fedsq.dual");
                std::fs::write(&p, checkpoint::encode_dual(d)).map_err(|e| Error::io(&p, e))?;
            }
            GlobalModel::Plain(p) => checkpoint::save(p, dir.join(format!("{}.ckpt", fed.strategy.name())))?,
        }
        let best = best_round(&outcome.logs)
            .ok_or_else(|| Error::Internal("federation produced no evaluated round".into()))?;
        rows.push(SummaryRow {
            partition: cfg.partition.label(),
            aggregation: fed.strategy.label().to_string(),
            round: best.round,
            bva: best.accuracy,
            final_accuracy: outcome.logs.last().and_then(|l| l.val_accuracy),
            log: path.file_name().unwrap().to_string_lossy().into_owned(),
        });
        all_logs.push((name, outcome.logs));
    }

    let summary = Summary {
        experiment: cfg.display_name(),
        seed: cfg.seed,
        schedule: calibrated.schedule.clone(),
        rows,
    };
    write_text(&dir.join("summary.json"), &summary.to_json())?;
    write_text(&dir.join("summary.csv"), &summary.to_csv())?;
    Ok(ExperimentOutcome {
        summary,
        logs: all_logs,
        calibrated,
        plan,
    })
}

/// Per-client view of a partition plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub scheme: String,
    pub seed: u64,
    pub attempts: u32,
    pub heterogeneity_index: f64,
    pub sizes: Vec<usize>,
    pub histograms: Vec<Vec<usize>>,
}

pub fn inspect_partition(cfg: &ExperimentConfig) -> Result<(PartitionPlan, PartitionReport)> {
    let target = generate(&cfg.data.target)?;
    let fed = cfg.federation_config(cfg.strategies[0]);
    let plan = fed.partition.plan(&target, fed.m, fed.seed, fed.sgd.batch_size)?;
    let report = PartitionReport {
        scheme: cfg.partition.label(),
        seed: plan.seed,
        attempts: plan.attempts,
        heterogeneity_index: heterogeneity_index(&plan, &target),
        sizes: plan.sizes(),
        histograms: plan.client_histograms(&target),
    };
    Ok((plan, report))
}
