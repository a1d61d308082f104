use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgAction, Args, Parser, Subcommand};
use mlca_core::{ClusterMethod, Estimator};

#[derive(Debug, Parser)]
#[command(name = "mlca", version, about = "Single-level and multilevel latent class analysis")]
pub struct Cli {
    /// Print the log-likelihood of every EM iteration to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate one model and print its summary.
    Fit(FitArgs),
    /// Choose the numbers of classes by BIC, then fit the chosen model.
    Select(SelectArgs),
    /// Bar chart of the response probabilities of a stored fit.
    Plot(PlotArgs),
    /// Draw a dataset from a model described in a JSON file.
    Simulate(SimulateArgs),
    /// Print the summary of a stored fit.
    Summary(SummaryArgs),
}

/// `a` or `a:b`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassRange {
    pub lo: usize,
    pub hi: usize,
}

impl ClassRange {
    pub fn single(n: usize) -> Self {
        ClassRange { lo: n, hi: n }
    }

    pub fn values(&self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }

    pub fn is_single(&self) -> bool {
        self.lo == self.hi
    }
}

impl FromStr for ClassRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| format!("`{v}` is not a positive integer"))
        };
        let r = match s.split_once(':') {
            Some((a, b)) => ClassRange {
                lo: parse(a)?,
                hi: parse(b)?,
            },
            None => ClassRange::single(parse(s)?),
        };
        if r.lo > r.hi {
            return Err(format!("range `{s}` is empty"));
        }
        Ok(r)
    }
}

impl fmt::Display for ClassRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_single() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "{}:{}", self.lo, self.hi)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,

    /// Indicator columns.
    #[arg(long, value_delimiter = ',', required = true)]
    pub items: Vec<String>,

    /// Column identifying the higher-level units.
    #[arg(long)]
    pub group: Option<String>,

    /// Covariates of the lower-level class membership.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,

    /// Covariates of the higher-level class membership (constant within group).
    #[arg(long, value_delimiter = ',')]
    pub group_covariates: Vec<String>,

    #[arg(long, default_value = "two_step")]
    pub estimator: Estimator,

    /// Two-stage only: re-estimate the response probabilities with the
    /// group proportions fixed before the structural step.
    #[arg(long)]
    pub cross_level: bool,

    #[arg(long, default_value = "kmeans")]
    pub init: ClusterMethod,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,

    /// Relative log-likelihood change that ends EM.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,

    /// Include posteriors and the covariance matrix in the JSON output.
    #[arg(long)]
    pub extended: bool,

    /// Where to write the fit as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Number of lower-level classes.
    #[arg(long, default_value_t = 1)]
    pub classes: usize,

    /// Number of higher-level classes (needs --group when above 1).
    #[arg(long, default_value_t = 1)]
    pub group_classes: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Lower-level class counts, `a` or `a:b`.
    #[arg(long, default_value = "1")]
    pub classes: ClassRange,

    /// Higher-level class counts, `a` or `a:b`.
    #[arg(long, default_value = "1")]
    pub group_classes: ClassRange,

    /// Fit the whole grid and take the smallest lower-level BIC.
    #[arg(long)]
    pub simultaneous: bool,

    /// Worker threads for --simultaneous.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,

    /// Where to write the selection table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// Fit JSON written by `mlca fit --out`.
    #[arg(long)]
    pub fit: PathBuf,

    /// Horizontal item labels; `--horiz false` turns them vertical.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub horiz: bool,

    /// Class labels replacing C1..CT.
    #[arg(long, value_delimiter = ',')]
    pub clab: Option<Vec<String>>,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON description of the generating model.
    #[arg(long)]
    pub truth: PathBuf,

    /// Number of groups.
    #[arg(long)]
    pub groups: usize,

    /// Units per group.
    #[arg(long)]
    pub group_size: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long)]
    pub out: PathBuf,

    /// True classes per unit; defaults to `<out>` with a `.latent.csv` suffix.
    #[arg(long)]
    pub latent: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SummaryArgs {
    #[arg(long)]
    pub fit: PathBuf,
}
