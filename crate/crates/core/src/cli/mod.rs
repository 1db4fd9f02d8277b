//! File formats, run configuration and the `flumn` commands.
//!
//! Every command builds all of its outputs in memory first and only then
//! writes them, each through a temporary file renamed into place, so a failed
//! run leaves no partial files behind.

mod args;
mod commands;
mod io;

pub use args::{Cli, Command};
pub use io::{content_hash, ingest_adjacency, ingest_counts, parse_adjacency, parse_counts, parse_series};

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::detection::FilterConfig;
use crate::error::{FluError, Result};
use crate::forecast::AR_ORDER;
use crate::model::{HyperPriors, ModelVariant};
use crate::sampler::ChainConfig;
use crate::synthetic::ScenarioSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Caps the worker threads used to run independent chains.
pub const THREADS_ENV: &str = "FLUMN_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Pretty,
    Compact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSettings {
    pub warm_burn_in: usize,
    pub warm_sweeps: usize,
    pub threshold: f64,
    pub peak_window: usize,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        let f = FilterConfig::default();
        Self { warm_burn_in: f.warm_burn_in, warm_sweeps: f.warm_sweeps, threshold: f.threshold, peak_window: f.peak_window }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    /// Last observed day of the first forecast; defaults to the middle of the
    /// panel but never before day 14.
    pub first_origin: Option<usize>,
    pub ar_order: usize,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self { first_origin: None, ar_order: AR_ORDER }
    }
}

/// Everything a command needs besides its command-line flags. Flags override
/// the matching fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: String,
    pub chain: ChainConfig,
    pub hyper: HyperPriors,
    pub detection: DetectionSettings,
    pub forecast: ForecastSettings,
    pub dic_variants: Vec<String>,
    /// Scenario for `simulate`; the reference scenario when absent.
    pub scenario: Option<ScenarioSpec>,
    pub report_format: ReportFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::FLU_MN.name().into(),
            chain: ChainConfig::default(),
            hyper: HyperPriors::default(),
            detection: DetectionSettings::default(),
            forecast: ForecastSettings::default(),
            dic_variants: [ModelVariant::FLU_MN, ModelVariant::FLU_MN_R, ModelVariant::TIME_HMM, ModelVariant::TWO_PHASE]
                .iter()
                .map(|v| v.name().to_string())
                .collect(),
            scenario: None,
            report_format: ReportFormat::Pretty,
            counts: None,
            adjacency: None,
            reference: None,
            predicted: None,
            actual: None,
            out: None,
        }
    }
}

/// Alarm rule without a model: moving average against an earlier season.
pub const AVERAGE_METHOD: &str = "average";

impl RunConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| FluError::Config(format!("config: {e}")))
    }

    /// Apply command-line overrides; flags win over the file.
    pub fn merge(mut self, cli: &Cli) -> Self {
        let set = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        };
        set(&mut self.counts, &cli.counts);
        set(&mut self.adjacency, &cli.adjacency);
        set(&mut self.reference, &cli.reference);
        set(&mut self.predicted, &cli.predicted);
        set(&mut self.actual, &cli.actual);
        set(&mut self.out, &cli.out);
        if let Some(v) = &cli.variant {
            self.variant.clone_from(v);
        }
        if let Some(seed) = cli.seed {
            self.chain.seed = seed;
            if let Some(s) = &mut self.scenario {
                s.seed = seed;
            }
        }
        self
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            chain: self.chain.clone(),
            warm_burn_in: self.detection.warm_burn_in,
            warm_sweeps: self.detection.warm_sweeps,
            threshold: self.detection.threshold,
            peak_window: self.detection.peak_window,
        }
    }

    /// The model variant, or `None` for the moving-average method.
    pub fn model_variant(&self) -> Result<Option<ModelVariant>> {
        if self.variant == AVERAGE_METHOD {
            return Ok(None);
        }
        ModelVariant::from_name(&self.variant).map(Some).ok_or_else(|| {
            FluError::Config(format!("unknown variant `{}` (flumn, timehmm, twophase, flumn-r, average)", self.variant))
        })
    }

    pub fn dic_model_variants(&self) -> Result<Vec<ModelVariant>> {
        if self.dic_variants.is_empty() {
            return Err(FluError::Config("dic_variants is empty".into()));
        }
        self.dic_variants
            .iter()
            .map(|n| ModelVariant::from_name(n).ok_or_else(|| FluError::Config(format!("unknown DIC variant `{n}`"))))
            .collect()
    }

    /// The configuration as echoed in reports: input paths are replaced by
    /// content hashes elsewhere in the report and the output directory is
    /// left out.
    pub(crate) fn echo(&self) -> Self {
        Self { counts: None, adjacency: None, reference: None, predicted: None, actual: None, out: None, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_variant()?;
        self.filter().validate()?;
        self.hyper.validate()?;
        if self.forecast.ar_order == 0 {
            return Err(FluError::Config("ar_order must be positive".into()));
        }
        Ok(())
    }
}

/// One file produced by a command.
pub struct Output {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

/// Write every output into `dir`, each through a temporary file renamed into
/// place.
pub fn write_outputs(dir: &Path, outputs: &[Output]) -> Result<()> {
    let io_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| FluError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    for out in outputs {
        let target = dir.join(out.name);
        let tmp = dir.join(format!(".{}.tmp", out.name));
        let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&out.bytes).and_then(|_| f.sync_all()).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &target).map_err(io_err(&target))?;
    }
    Ok(())
}

fn exit_code(err: &FluError) -> i32 {
    if err.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_RUNTIME
    }
}

/// Parse `args`, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Load the configuration, run the command and write its outputs.
pub fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::from_json(&io::read_input(path)?)?,
        None => RunConfig::default(),
    }
    .merge(cli);
    config.validate()?;
    let out = config.out.clone().ok_or_else(|| FluError::Config("--out is required".into()))?;
    let outputs = commands::execute(cli.command, &config)?;
    write_outputs(&out, &outputs)
}
