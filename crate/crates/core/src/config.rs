//! Run configuration shared by every subcommand.
//!
//! A config file is TOML with one section per stage; every section and field
//! is optional and unknown keys are rejected:
//!
//! ```toml
//! [model]
//! m = 4
//! n = 4
//! h = 2
//! h0 = 1
//!
//! [prior]
//! phi_u = 0.5
//! phi_v = 0.5
//!
//! [truth]
//! kind = "uniform"
//! low = 0.5
//! high = 1.5
//! seed = 1
//!
//! [data]
//! n = 500
//! seed = 7
//!
//! [gibbs]
//! burn_in = 20000
//! thin = 20
//! draws = 1000
//!
//! [experiment]
//! replicates = 20
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::GibbsConfig;
use crate::harness::{ExperimentConfig, TruthSpec};
use crate::io;
use crate::model::{Hyperparameters, ModelDims};
use crate::vb::VBConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub m: usize,
    pub n: usize,
    pub h: usize,
    pub h0: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { m: 4, n: 4, h: 2, h0: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub phi_u: f64,
    pub theta_u: f64,
    pub phi_v: f64,
    pub theta_v: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection { phi_u: 1.0, theta_u: 1.0, phi_v: 1.0, theta_v: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Training sample size when data is generated.
    pub n: usize,
    /// Test sample size; 100·n when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    pub seed: u64,
    /// Existing dataset (JSON lines) to use instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { n: 500, n_test: None, seed: 0, input: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub replicates: usize,
    pub master_seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { replicates: 20, master_seed: 2020 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectSection {
    /// Candidate inner dimensions, each at most `model.h`.
    pub ranks: Vec<usize>,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection { ranks: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Write every retained Gibbs state to `draws.jsonl`.
    pub save_draws: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub prior: PriorSection,
    pub truth: TruthSpec,
    pub data: DataSection,
    pub gibbs: GibbsConfig,
    pub vb: VBConfig,
    pub experiment: ExperimentSection,
    pub select: SelectSection,
    pub output: OutputSection,
}

/// Names accepted by [`RunConfig::preset`].
pub const PRESETS: [&str; 12] = [
    "table1_row1",
    "table1_row2",
    "table1_row3",
    "table1_row4",
    "table1_row1_n500",
    "table1_row2_n500",
    "table1_row3_n500",
    "table1_row4_n500",
    "table1_row1_n1000",
    "table1_row2_n1000",
    "table1_row3_n1000",
    "table1_row4_n1000",
];

const TABLE1_SHAPES: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { path: origin.display().to_string(), message: e.to_string() })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&io::read_text(path)?, path)
    }

    /// One reference experiment cell: `table1_row{1..4}_n{500,1000}`, rows
    /// ordered by shape 0.25, 0.5, 1, 2. Without a suffix n = 500.
    pub fn preset(name: &str) -> Result<Self> {
        let unknown = || Error::config(format!("unknown preset `{name}`; available: {}", PRESETS.join(", ")));
        let rest = name.strip_prefix("table1_row").ok_or_else(unknown)?;
        let (row, n) = match rest.split_once("_n") {
            Some((row, n)) => (row, n),
            None => (rest, "500"),
        };
        let row: usize = row.parse().map_err(|_| unknown())?;
        let n: usize = n.parse().map_err(|_| unknown())?;
        if !(1..=4).contains(&row) || !(n == 500 || n == 1000) {
            return Err(unknown());
        }
        Ok(Self::from_experiment(&ExperimentConfig::table1(TABLE1_SHAPES[row - 1], n)?))
    }

    pub fn from_experiment(e: &ExperimentConfig) -> Self {
        RunConfig {
            model: ModelSection { m: e.dims.m, n: e.dims.n, h: e.dims.h, h0: e.dims.h0 },
            prior: PriorSection {
                phi_u: e.hyper.phi_u,
                theta_u: e.hyper.theta_u,
                phi_v: e.hyper.phi_v,
                theta_v: e.hyper.theta_v,
            },
            truth: e.truth.clone(),
            data: DataSection { n: e.n, n_test: Some(e.n_test), ..DataSection::default() },
            gibbs: e.gibbs,
            experiment: ExperimentSection { replicates: e.replicates, master_seed: e.master_seed },
            ..RunConfig::default()
        }
    }

    /// Fills derived defaults so the snapshot written to a manifest is complete.
    pub fn resolved(mut self) -> Self {
        self.data.n_test.get_or_insert(100 * self.data.n);
        self
    }

    pub fn dims(&self) -> Result<ModelDims> {
        let s = &self.model;
        ModelDims::new(s.m, s.n, s.h, s.h0).map_err(as_config)
    }

    pub fn hyper(&self) -> Result<Hyperparameters> {
        let p = &self.prior;
        Hyperparameters::new(p.phi_u, p.theta_u, p.phi_v, p.theta_v).map_err(as_config)
    }

    pub fn n_test(&self) -> usize {
        self.data.n_test.unwrap_or(100 * self.data.n)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let e = ExperimentConfig {
            dims: self.dims()?,
            hyper: self.hyper()?,
            truth: self.truth.clone(),
            n: self.data.n,
            n_test: self.n_test(),
            replicates: self.experiment.replicates,
            gibbs: self.gibbs,
            master_seed: self.experiment.master_seed,
        };
        e.validate().map_err(as_config)?;
        Ok(e)
    }

    /// Checks every section that does not depend on the subcommand.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims()?;
        self.hyper()?;
        self.gibbs.validate()?;
        self.vb.validate()?;
        if self.data.input.is_none() {
            self.truth.resolve(&dims).map_err(as_config)?;
            if self.data.n == 0 {
                return Err(Error::config("data.n must be positive"));
            }
        }
        Ok(())
    }

    /// Checks the candidate ranks used by model selection.
    pub fn validate_ranks(&self) -> Result<()> {
        let h = self.model.h;
        if self.select.ranks.is_empty() {
            return Err(Error::config("select.ranks is empty"));
        }
        if let Some(&r) = self.select.ranks.iter().find(|&&r| r > h) {
            return Err(Error::config(format!("select rank {r} exceeds model.h = {h}")));
        }
        Ok(())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Domain(msg) | Error::Numeric(msg) | Error::Estimator(msg) => Error::Config(msg),
        other => other,
    }
}
