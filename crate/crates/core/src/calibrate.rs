//! Centralized phase before federation: pretraining the shared checkpoint and
//! choosing which layers train, by progressive unfreezing on a probe set.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{ModelArch, ModelParams};
use crate::training::{evaluate, train_epochs, SgdConfig};

/// Per-parameterized-layer trainability; the head is the last entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Schedule {
    trainable: Vec<bool>,
}

impl Schedule {
    /// Rejects schedules that freeze the head or train nothing.
    pub fn new(trainable: Vec<bool>) -> Result<Self> {
        match trainable.last() {
            None => Err(Error::Config("schedule is empty".into())),
            Some(false) => Err(Error::Config("schedule must keep the head trainable".into())),
            Some(true) => Ok(Self { trainable }),
        }
    }

    /// Only the last `k` parameterized layers train.
    pub fn last_k(arch: &ModelArch, k: usize) -> Result<Self> {
        let n = arch.num_param_layers();
        if k == 0 || k > n {
            return Err(Error::Config(format!("cannot train the last {k} of {n} layers")));
        }
        Self::new((0..n).map(|i| i >= n - k).collect())
    }

    pub fn head_only(arch: &ModelArch) -> Self {
        Self::last_k(arch, 1).expect("every architecture has a head")
    }

    pub fn all(arch: &ModelArch) -> Self {
        Self::last_k(arch, arch.num_param_layers()).expect("non-empty architecture")
    }

    pub fn trainable(&self) -> &[bool] {
        &self.trainable
    }

    pub fn len(&self) -> usize {
        self.trainable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trainable.is_empty()
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable.iter().filter(|&&t| t).count()
    }

    pub fn is_layer_trainable(&self, arch: &ModelArch, layer: usize) -> bool {
        arch.param_ordinal(layer).is_some_and(|o| self.trainable[o])
    }

    pub fn check_arch(&self, arch: &ModelArch) -> Result<()> {
        if self.trainable.len() != arch.num_param_layers() {
            return Err(Error::Config(format!(
                "schedule has {} entries for {} parameterized layers",
                self.trainable.len(),
                arch.num_param_layers()
            )));
        }
        Ok(())
    }

    /// Scalars in schedule-enabled layers of a single model copy.
    pub fn trainable_scalars(&self, arch: &ModelArch) -> usize {
        arch.param_layers()
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|(&l, _)| {
                let spec = &arch.layers()[l];
                spec.weight_shape().unwrap().iter().product::<usize>()
                    + spec.bias_shape().unwrap().iter().product::<usize>()
            })
            .sum()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &t in &self.trainable {
            f.write_str(if t { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Schedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::Config(format!("schedule bitstring has invalid character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Schedule::new(bits)
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Schedule::try_from(s.to_string())
    }
}

/// Output of [`pretrain`].
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub params: ModelParams,
    /// Mean training loss per epoch.
    pub curve: Vec<f64>,
}

/// Centralized training of every layer from a seeded He-uniform initialization.
pub fn pretrain(arch: &ModelArch, source: &Dataset, epochs: usize, sgd: &SgdConfig, seed: u64) -> Result<Pretrained> {
    if source.is_empty() {
        return Err(Error::Input("empty source dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = ModelParams::init(arch, &mut rng);
    let all = Schedule::all(arch);
    let (params, curve) = train_epochs(arch, &init, source, all.trainable(), sgd, epochs, &mut rng)?;
    Ok(Pretrained { params, curve })
}

/// Settings of the schedule search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    #[serde(default)]
    pub sgd: SgdConfig,
    /// Fine-tune budget per candidate.
    #[serde(default = "default_candidate_epochs")]
    pub epochs_per_candidate: usize,
    /// Share of the probe set held out to score candidates.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Shared by every candidate's fine-tune and by the probe split.
    #[serde(default)]
    pub seed: u64,
}

fn default_candidate_epochs() -> usize {
    5
}
fn default_val_fraction() -> f64 {
    0.3
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            epochs_per_candidate: default_candidate_epochs(),
            val_fraction: default_val_fraction(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    NoImprovement,
    AllUnfrozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub schedule: Schedule,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Evaluated candidates, fewest trainable layers first.
    pub candidates: Vec<Candidate>,
    pub selected: Schedule,
    pub selected_index: usize,
    pub stop_reason: StopReason,
    pub epochs_per_candidate: usize,
    pub seed: u64,
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(0, format!("calibration report: {e}")))
    }
}

/// Progressive unfreezing: start with the head and the last block trainable,
/// unfreeze one more layer per candidate, stop at the first candidate whose
/// probe accuracy does not strictly beat the best so far.
///
/// Each candidate fine-tunes a copy of `w_pt` on the calibration-train part of
/// `probe` for `epochs_per_candidate` epochs with the shared seed, and is
/// scored on the held-out part. Ties keep the earlier (smaller) schedule.
pub fn obtain_schedule(
    arch: &ModelArch,
    w_pt: &ModelParams,
    probe: &Dataset,
    cfg: &CalibrationConfig,
) -> Result<CalibrationReport> {
    if probe.is_empty() {
        return Err(Error::Input("empty probe set".into()));
    }
    w_pt.validate(arch)?;
    let (cal_train, cal_val) = probe.split(cfg.val_fraction, cfg.seed)?;
    let n = arch.num_param_layers();
    let first = 2.min(n);

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut best = 0;
    let mut stop_reason = StopReason::AllUnfrozen;
    for k in first..=n {
        let schedule = Schedule::last_k(arch, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (tuned, _) = train_epochs(
            arch,
            w_pt,
            &cal_train,
            schedule.trainable(),
            &cfg.sgd,
            cfg.epochs_per_candidate,
            &mut rng,
        )?;
        let accuracy = evaluate(arch, &tuned, &cal_val)?.accuracy;
        candidates.push(Candidate { schedule, accuracy });
        let idx = candidates.len() - 1;
        if idx == 0 || accuracy > candidates[best].accuracy {
            best = idx;
        } else {
            stop_reason = StopReason::NoImprovement;
            break;
        }
    }
    Ok(CalibrationReport {
        selected: candidates[best].schedule.clone(),
        selected_index: best,
        candidates,
        stop_reason,
        epochs_per_candidate: cfg.epochs_per_candidate,
        seed: cfg.seed,
    })
}
