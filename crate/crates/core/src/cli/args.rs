use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "flumn", version, about = "Epidemic phase segmentation, alarms and forecasts from daily counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Daily counts CSV with header `region,date,count`.
    #[arg(long, global = true, value_name = "PATH")]
    pub counts: Option<PathBuf>,

    /// Bordering regions CSV with header `region_a,region_b`; an empty file means no borders.
    #[arg(long, global = true, value_name = "PATH")]
    pub adjacency: Option<PathBuf>,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Model variant: flumn, timehmm, twophase, flumn-r, or average (detect only).
    #[arg(long, global = true, value_name = "NAME")]
    pub variant: Option<String>,

    /// Seed of the chain and, for `simulate`, of the scenario.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Directory receiving every output file.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Earlier-season counts for the moving-average alarm baseline.
    #[arg(long, global = true, value_name = "PATH")]
    pub reference: Option<PathBuf>,

    /// Predicted series CSV `region,date,value` (evaluate).
    #[arg(long, global = true, value_name = "PATH")]
    pub predicted: Option<PathBuf>,

    /// Realised series CSV `region,date,value` (evaluate).
    #[arg(long, global = true, value_name = "PATH")]
    pub actual: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit one chain and report posterior intervals and phase marginals.
    Fit,
    /// Filter day by day and report epidemic probabilities and alarms.
    Detect,
    /// Rolling next-day count forecasts against an autoregressive baseline.
    Forecast,
    /// Simulate a panel from a known scenario.
    Simulate,
    /// Correlation and RMSE between two series files.
    Evaluate,
    /// Deviance information criterion of each configured variant.
    Dic,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Detect => "detect",
            Command::Forecast => "forecast",
            Command::Simulate => "simulate",
            Command::Evaluate => "evaluate",
            Command::Dic => "dic",
        }
    }
}
