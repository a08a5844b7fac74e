//! Synthetic benchmark datasets: generation, train/validation/test
//! splitting, model-input assembly, and on-disk serialization.

mod generate;
mod io;

pub use generate::{
    cubic_label, gen_cubic, gen_portfolio, gen_portfolio_with, gen_webadv, gen_webadv_with,
    generate, psd_project, PortfolioGenOptions,
};
pub use io::{load_dataset, save_dataset};

use std::collections::HashSet;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pto::{PtoInstance, Split};

/// Stamped into dataset headers so stale files are recognizable after
/// generator changes.
pub const GENERATOR_VERSION: &str = "datagen/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Cubic,
    CubicHard,
    Webadv,
    Portfolio,
}

impl Domain {
    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Cubic => "cubic",
            Domain::CubicHard => "cubic_hard",
            Domain::Webadv => "webadv",
            Domain::Portfolio => "portfolio",
        }
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic" => Ok(Domain::Cubic),
            "cubic_hard" => Ok(Domain::CubicHard),
            "webadv" => Ok(Domain::Webadv),
            "portfolio" => Ok(Domain::Portfolio),
            other => Err(Error::Input(format!(
                "unknown domain '{other}' (expected cubic, cubic_hard, webadv, or portfolio)"
            ))),
        }
    }
}

/// Shape and provenance of a dataset. Fields irrelevant to a domain are
/// zero; the per-domain constructors set the meaningful ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub domain: Domain,
    pub num_instances: usize,
    /// Resources (cubic) or stocks (portfolio); the flattened M·N for
    /// web advertising.
    pub num_resources: usize,
    /// Websites M (web advertising only).
    pub num_sites: usize,
    /// Users N (web advertising only).
    pub num_users: usize,
    /// Downstream selection size where the decision is a K-subset.
    pub k: usize,
    /// Return-history window per stock (portfolio only).
    pub history_len: usize,
    pub seed: u64,
    pub split_fractions: [f64; 3],
}

pub const DEFAULT_SPLIT_FRACTIONS: [f64; 3] = [0.7, 0.15, 0.15];

impl DatasetSpec {
    pub fn cubic(num_instances: usize, num_resources: usize, seed: u64) -> Self {
        Self {
            domain: Domain::Cubic,
            num_instances,
            num_resources,
            num_sites: 0,
            num_users: 0,
            k: 1,
            history_len: 0,
            seed,
            split_fractions: DEFAULT_SPLIT_FRACTIONS,
        }
    }

    pub fn cubic_hard(num_instances: usize, num_resources: usize, seed: u64) -> Self {
        Self {
            domain: Domain::CubicHard,
            ..Self::cubic(num_instances, num_resources, seed)
        }
    }

    pub fn webadv(num_instances: usize, num_sites: usize, num_users: usize, seed: u64) -> Self {
        Self {
            domain: Domain::Webadv,
            num_instances,
            num_resources: num_sites * num_users,
            num_sites,
            num_users,
            k: 2,
            history_len: 0,
            seed,
            split_fractions: DEFAULT_SPLIT_FRACTIONS,
        }
    }

    pub fn portfolio(num_instances: usize, num_stocks: usize, history_len: usize, seed: u64) -> Self {
        Self {
            domain: Domain::Portfolio,
            num_instances,
            num_resources: num_stocks,
            num_sites: 0,
            num_users: 0,
            k: 0,
            history_len,
            seed,
            split_fractions: DEFAULT_SPLIT_FRACTIONS,
        }
    }

    /// Label/prediction dimension D of each instance.
    pub fn dim(&self) -> usize {
        match self.domain {
            Domain::Cubic | Domain::CubicHard | Domain::Portfolio => self.num_resources,
            Domain::Webadv => self.num_sites * self.num_users,
        }
    }

    /// Length of the stored per-label feature rows.
    pub fn feature_width(&self) -> usize {
        match self.domain {
            Domain::Cubic | Domain::CubicHard => 1,
            Domain::Webadv => self.num_users,
            Domain::Portfolio => self.history_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_instances == 0 {
            return Err(Error::Input("dataset needs at least one instance".into()));
        }
        validate_fractions(&self.split_fractions)?;
        let shapes_ok = match self.domain {
            Domain::Cubic | Domain::CubicHard => self.num_resources >= 1,
            Domain::Webadv => {
                self.num_sites >= 1
                    && self.num_users >= 1
                    && self.num_resources == self.num_sites * self.num_users
            }
            Domain::Portfolio => self.num_resources >= 2 && self.history_len >= 1,
        };
        if !shapes_ok {
            return Err(Error::Input(format!(
                "invalid {} shape parameters",
                self.domain.as_str()
            )));
        }
        Ok(())
    }
}

fn validate_fractions(fractions: &[f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::Input(format!(
            "split fractions must be nonnegative, got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "split fractions must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// A generated dataset: instances in generation (time) order, plus the risk
/// matrix for the portfolio domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub generator_version: String,
    pub instances: Vec<PtoInstance>,
    /// Sample correlation matrix of the return series (portfolio only).
    pub q: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn instances_in(&self, split: Split) -> Vec<&PtoInstance> {
        self.instances.iter().filter(|i| i.split == split).collect()
    }

    /// Structural checks applied after deserialization, where instances
    /// bypass the constructor.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let mut ids = HashSet::new();
        for instance in &self.instances {
            if !ids.insert(instance.instance_id.as_str()) {
                return Err(Error::Input(format!(
                    "duplicate instance id {}",
                    instance.instance_id
                )));
            }
            if instance.labels.len() != self.spec.dim() {
                return Err(Error::Dimension {
                    expected: self.spec.dim(),
                    actual: instance.labels.len(),
                });
            }
            if instance.features.len() != instance.labels.len()
                || instance.features.iter().any(|f| f.len() != self.spec.feature_width())
            {
                return Err(Error::Input(format!(
                    "instance {} has malformed feature rows",
                    instance.instance_id
                )));
            }
            let finite = instance.labels.iter().all(|v| v.is_finite())
                && instance.features.iter().flatten().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Input(format!(
                    "instance {} contains non-finite entries",
                    instance.instance_id
                )));
            }
        }
        if self.spec.domain == Domain::Portfolio && self.q.is_none() {
            return Err(Error::Input("portfolio dataset is missing its Q matrix".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Iid,
    Temporal,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn round_half_down(x: f64) -> usize {
    (x - 0.5).ceil() as usize
}

/// Assign train/validation/test membership. Counts follow the fractions
/// with train rounded half-up, validation half-down, test taking the
/// remainder; iid mode shuffles assignment order with `seed`, temporal mode
/// keeps generation order (earliest instances train).
pub fn split_dataset(
    mut dataset: Dataset,
    fractions: [f64; 3],
    mode: SplitMode,
    seed: u64,
) -> Result<Dataset> {
    validate_fractions(&fractions)?;
    let n = dataset.instances.len();
    let populated = fractions.iter().filter(|f| **f > 0.0).count();
    if n < populated {
        return Err(Error::Input(format!(
            "{n} instances cannot populate {populated} splits"
        )));
    }
    let n_train = round_half_up(n as f64 * fractions[0]).min(n);
    let n_val = round_half_down(n as f64 * fractions[1]).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    if mode == SplitMode::Iid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    for (rank, idx) in order.into_iter().enumerate() {
        dataset.instances[idx].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    dataset.spec.split_fractions = fractions;
    Ok(dataset)
}

/// Width of the rows fed to predictive models, after any input assembly.
pub fn model_input_width(spec: &DatasetSpec, one_hot_users: bool) -> usize {
    if spec.domain == Domain::Webadv && one_hot_users {
        spec.feature_width() + spec.num_users
    } else {
        spec.feature_width()
    }
}

/// Rows fed to predictive models. Web-advertising labels within one site
/// share the site's feature vector; appending a one-hot user index (the
/// default in experiment configs) lets a shared model tell users apart.
pub fn model_inputs(
    spec: &DatasetSpec,
    instance: &PtoInstance,
    one_hot_users: bool,
) -> Vec<Vec<f64>> {
    if spec.domain == Domain::Webadv && one_hot_users {
        instance
            .features
            .iter()
            .enumerate()
            .map(|(j, row)| {
                let mut input = Vec::with_capacity(row.len() + spec.num_users);
                input.extend_from_slice(row);
                let mut one_hot = vec![0.0; spec.num_users];
                one_hot[j % spec.num_users] = 1.0;
                input.extend_from_slice(&one_hot);
                input
            })
            .collect()
    } else {
        instance.features.clone()
    }
}
