//! Splitting a labeled dataset across simulated clients.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Redraw budget of the Dirichlet split before giving up.
pub const MAX_DIRICHLET_ATTEMPTS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Iid,
    Dirichlet { alpha: f64 },
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Iid => write!(f, "iid"),
            Scheme::Dirichlet { alpha } => write!(f, "dirichlet({alpha})"),
        }
    }
}

/// Disjoint per-client index lists covering a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub scheme: Scheme,
    pub seed: u64,
    /// Draws used; a Dirichlet draw `a` used seed `seed + a`.
    pub attempts: u32,
    pub assignments: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    /// Checks the disjoint-cover invariant against a dataset of `n` samples.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (c, a) in self.assignments.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::Partition(format!("client {c} has no samples")));
            }
            for &i in a {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::Partition(format!("index {i} of client {c} is out of range or repeated")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Partition("assignments do not cover the dataset".into()));
        }
        Ok(())
    }

    /// Materializes each client's shard.
    pub fn shards(&self, data: &Dataset) -> Vec<Dataset> {
        self.assignments.iter().map(|a| data.subset(a)).collect()
    }

    /// Label histogram per client.
    pub fn client_histograms(&self, data: &Dataset) -> Vec<Vec<usize>> {
        self.assignments
            .iter()
            .map(|a| {
                let mut h = vec![0; data.class_count()];
                for &i in a {
                    h[data.labels()[i]] += 1;
                }
                h
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(0, format!("partition plan: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn indices_by_class(data: &Dataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); data.class_count()];
    for (i, &y) in data.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    by_class
}

/// Uniform random assignment into `m` shards whose sizes differ by at most one.
///
/// Samples are shuffled within each class and dealt round-robin (over a
/// shuffled client order), so every client also receives each class in
/// proportion to its global frequency, up to rounding.
pub fn iid_split(data: &Dataset, m: usize, seed: u64) -> Result<PartitionPlan> {
    if m == 0 {
        return Err(Error::Input("client count must be at least 1".into()));
    }
    if data.len() < m {
        return Err(Error::Input(format!("{} samples cannot cover {m} clients", data.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    let mut assignments = vec![Vec::with_capacity(data.len() / m + 1); m];
    let mut pos = 0;
    for mut class_idx in indices_by_class(data) {
        class_idx.shuffle(&mut rng);
        for i in class_idx {
            assignments[order[pos % m]].push(i);
            pos += 1;
        }
    }
    assignments.iter_mut().for_each(|a| a.sort_unstable());
    Ok(PartitionPlan {
        scheme: Scheme::Iid,
        seed,
        attempts: 1,
        assignments,
    })
}

/// Draws client proportions `p ~ Dirichlet(alpha * 1_m)` via normalized gammas.
fn dirichlet_draw<R: Rng + ?Sized>(gamma: &Gamma<f64>, m: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter().map(|g| g / sum).collect()
    } else {
        vec![1.0 / m as f64; m]
    }
}

/// Label-skewed split: for each class, client shares are drawn from a
/// symmetric Dirichlet(`alpha`) and the class's samples are assigned
/// multinomially with those shares.
///
/// Draws are sequential in class order and, within a class, in client order
/// (conditional binomials). A draw leaving any client below `min_per_client`
/// is discarded and redrawn with the next seed, at most
/// [`MAX_DIRICHLET_ATTEMPTS`] times.
pub fn dirichlet_split(data: &Dataset, m: usize, alpha: f64, seed: u64, min_per_client: usize) -> Result<PartitionPlan> {
    if m == 0 {
        return Err(Error::Input("client count must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Input(format!("concentration {alpha} must be positive and finite")));
    }
    let min_per_client = min_per_client.max(1);
    if data.len() < m * min_per_client {
        return Err(Error::Input(format!(
            "{} samples cannot give {m} clients {min_per_client} each",
            data.len()
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Input(format!("gamma({alpha}): {e}")))?;
    let by_class = indices_by_class(data);

    for attempt in 0..MAX_DIRICHLET_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
        let mut assignments = vec![Vec::new(); m];
        for class_idx in &by_class {
            let mut idx = class_idx.clone();
            idx.shuffle(&mut rng);
            let p = dirichlet_draw(&gamma, m, &mut rng);
            let mut remaining = idx.len() as u64;
            let mut mass_left = 1.0;
            let mut start = 0usize;
            for (client, &share) in p.iter().enumerate() {
                let count = if client + 1 == m || remaining == 0 {
                    remaining
                } else {
                    let q = (share / mass_left).clamp(0.0, 1.0);
                    Binomial::new(remaining, q)
                        .map_err(|e| Error::Partition(format!("binomial draw: {e}")))?
                        .sample(&mut rng)
                };
                assignments[client].extend_from_slice(&idx[start..start + count as usize]);
                start += count as usize;
                remaining -= count;
                mass_left -= share;
                if mass_left <= 0.0 {
                    mass_left = f64::MIN_POSITIVE;
                }
            }
        }
        if assignments.iter().all(|a| a.len() >= min_per_client) {
            assignments.iter_mut().for_each(|a| a.sort_unstable());
            return Ok(PartitionPlan {
                scheme: Scheme::Dirichlet { alpha },
                seed,
                attempts: attempt + 1,
                assignments,
            });
        }
    }
    Err(Error::Partition(format!(
        "no Dirichlet({alpha}) draw gave all {m} clients at least {min_per_client} samples in {MAX_DIRICHLET_ATTEMPTS} attempts"
    )))
}

/// Mean total-variation distance between each client's label distribution
/// and the global one. Zero iff every client matches the global histogram.
pub fn heterogeneity_index(plan: &PartitionPlan, data: &Dataset) -> f64 {
    let global = data.class_histogram();
    let total = data.len().max(1) as f64;
    let q: Vec<f64> = global.iter().map(|&c| c as f64 / total).collect();
    let hists = plan.client_histograms(data);
    let mut sum = 0.0;
    let mut clients = 0usize;
    for h in &hists {
        let n: usize = h.iter().sum();
        if n == 0 {
            continue;
        }
        let tv: f64 = h
            .iter()
            .zip(&q)
            .map(|(&c, &qc)| (c as f64 / n as f64 - qc).abs())
            .sum::<f64>()
            * 0.5;
        sum += tv;
        clients += 1;
    }
    if clients == 0 {
        0.0
    } else {
        sum / clients as f64
    }
}
