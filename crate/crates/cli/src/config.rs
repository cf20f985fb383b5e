//! Run configuration: JSON file, flag overrides, defaults and validation.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use limitcycle::MeshSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_CUTOFF: f64 = 100.0;
pub const DEFAULT_H_RANGE: Range = Range {
    lo: -10.0,
    hi: 10.0,
    n: 401,
};
pub const DEFAULT_K_SAMPLES: usize = 200;

/// Inclusive sweep `LO:HI:N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Range {
    /// `n` points spaced evenly in `ln x`, both ends included.
    pub fn log_points(&self) -> Vec<f64> {
        self.spaced(|t| (self.lo.ln() + t * (self.hi / self.lo).ln()).exp())
    }

    pub fn linear_points(&self) -> Vec<f64> {
        self.spaced(|t| self.lo + t * (self.hi - self.lo))
    }

    fn spaced(&self, at: impl Fn(f64) -> f64) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| match i {
                0 => self.lo,
                i if i == self.n - 1 => self.hi,
                i => at(i as f64 / last),
            })
            .collect()
    }

    fn check(&self, field: &str, positive: bool) -> CliResult<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.n >= 1
            && (!positive || self.lo > 0.0)
            && (self.hi > self.lo || (self.n == 1 && self.hi == self.lo));
        if ok {
            Ok(())
        } else {
            Err(CliError::config(format!(
                "{field} = {self}: need {}LO < HI and N >= 1 (LO = HI only with N = 1)",
                if positive { "0 < " } else { "" }
            )))
        }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(format!("expected LO:HI:N, got {s:?}"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        Ok(Self {
            lo: num(lo)?,
            hi: num(hi)?,
            n: n.trim().parse().map_err(|e| format!("{n:?}: {e}"))?,
        })
    }
}

impl TryFrom<String> for Range {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Range> for String {
    fn from(r: Range) -> Self {
        r.to_string()
    }
}

fn parse_window(s: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok([num(lo)?, num(hi)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rgflow,
    Beta,
    Spectrum,
    Phase,
    Xsec,
    Zeroenergy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rgflow => "rgflow",
            Self::Beta => "beta",
            Self::Spectrum => "spectrum",
            Self::Phase => "phase",
            Self::Xsec => "xsec",
            Self::Zeroenergy => "zeroenergy",
        }
    }

    fn needs_k_range(self) -> bool {
        matches!(self, Self::Phase | Self::Xsec)
    }
}

/// Flags shared by every subcommand. Any flag given here beats the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Potential strength ν; repeat or comma-separate for several values
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub nu: Vec<f64>,

    /// Scale Λ* of the running coupling
    #[arg(long, allow_negative_numbers = true)]
    pub lambda_star: Option<f64>,

    /// Single cutoff Λ
    #[arg(long, allow_negative_numbers = true, conflicts_with = "cutoff_range")]
    pub cutoff: Option<f64>,

    /// Log-spaced cutoff sweep
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true)]
    pub cutoff_range: Option<Range>,

    /// Quadrature nodes in the momentum mesh
    #[arg(long)]
    pub mesh_points: Option<usize>,

    /// Infrared floor of the mesh (default: 1e-6 Λ)
    #[arg(long, allow_negative_numbers = true)]
    pub k_min: Option<f64>,

    /// Gauss-Legendre order per panel
    #[arg(long)]
    pub panel_order: Option<usize>,

    /// Binding-energy window for `spectrum` (default: [10 k_min², 10 Λ²])
    #[arg(long, value_name = "B_LO:B_HI", allow_hyphen_values = true, value_parser = parse_window)]
    pub energy_window: Option<[f64; 2]>,

    /// Log-spaced momentum sweep for `phase` and `xsec`
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true)]
    pub k_range: Option<Range>,

    /// Linear sweep of H for `beta`
    #[arg(long, value_name = "LO:HI:N", allow_hyphen_values = true)]
    pub h_range: Option<Range>,

    /// Force h ≡ 0 at every cutoff
    #[arg(long)]
    pub unrenormalized: bool,

    /// `spectrum` only: emit the h ≡ 0 tower next to the renormalized one
    #[arg(long)]
    pub compare: bool,

    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Output file; further tables go next to it as `<stem>.<table>.csv`
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// JSON configuration file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: available processors)
    #[arg(long, env = "LIMITCYCLE_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum NuInput {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    nu: Option<NuInput>,
    lambda_star: Option<f64>,
    cutoff: Option<f64>,
    cutoff_range: Option<Range>,
    mesh_points: Option<usize>,
    k_min: Option<f64>,
    panel_order: Option<usize>,
    energy_window: Option<[f64; 2]>,
    k_range: Option<Range>,
    h_range: Option<Range>,
    unrenormalized: Option<bool>,
    compare: Option<bool>,
    format: Option<Format>,
    out: Option<PathBuf>,
    workers: Option<usize>,
}

/// Fully resolved configuration. Its JSON form is accepted back by `--config`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub nu: Vec<f64>,
    pub lambda_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_range: Option<Range>,
    pub mesh_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panel_order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_window: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_range: Option<Range>,
    pub h_range: Range,
    pub unrenormalized: bool,
    pub compare: bool,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Does not affect results, so it stays out of the emitted metadata.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn cutoffs(&self) -> Vec<f64> {
        match (self.cutoff, self.cutoff_range) {
            (_, Some(r)) => r.log_points(),
            (Some(c), None) => vec![c],
            (None, None) => vec![DEFAULT_CUTOFF],
        }
    }

    pub fn mesh_spec(&self, cutoff: f64) -> MeshSpec {
        let base = MeshSpec::default();
        MeshSpec {
            n_points: self.mesh_points,
            k_min_ratio: self.k_min.map_or(base.k_min_ratio, |k| k / cutoff),
            panel_order: self.panel_order,
        }
    }

    pub fn k_min_at(&self, cutoff: f64) -> f64 {
        self.mesh_spec(cutoff).k_min_ratio * cutoff
    }

    /// Momentum sweep; empty for commands that do not scan `k`.
    pub fn k_points(&self) -> Vec<f64> {
        self.k_range.map(|r| r.log_points()).unwrap_or_default()
    }

    fn validate(&self) -> CliResult<()> {
        if self.nu.is_empty() {
            return Err(CliError::config("nu: at least one value is required"));
        }
        for &nu in &self.nu {
            positive("nu", nu)?;
        }
        positive("lambda_star", self.lambda_star)?;
        if let Some(c) = self.cutoff {
            positive("cutoff", c)?;
        }
        if let Some(r) = self.cutoff_range {
            r.check("cutoff_range", true)?;
        }
        if self.mesh_points == 0 {
            return Err(CliError::config("mesh_points must be positive"));
        }
        if self.panel_order == Some(0) {
            return Err(CliError::config("panel_order must be positive"));
        }
        if let Some(k) = self.k_min {
            positive("k_min", k)?;
            let smallest = self.cutoffs().into_iter().fold(f64::INFINITY, f64::min);
            if k >= smallest {
                return Err(CliError::config(format!(
                    "k_min = {k} must lie below every cutoff (smallest is {smallest})"
                )));
            }
        }
        if let Some([lo, hi]) = self.energy_window {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(CliError::config(format!(
                    "energy_window = [{lo}, {hi}]: need 0 < B_LO < B_HI"
                )));
            }
        }
        if let Some(r) = self.k_range {
            r.check("k_range", true)?;
        }
        self.h_range.check("h_range", false)?;
        if self.workers == Some(0) {
            return Err(CliError::config("workers must be at least 1"));
        }
        Ok(())
    }
}

fn positive(field: &str, value: f64) -> CliResult<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "{field} must be positive and finite, got {value}"
        )))
    }
}

fn read_file(path: &PathBuf) -> CliResult<FileConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Merges file and flags (flags win), fills defaults and validates.
pub fn resolve(command: Command, args: &CommonArgs) -> CliResult<RunConfig> {
    let file = match &args.config {
        Some(path) => read_file(path)?,
        None => FileConfig::default(),
    };
    let nu = if !args.nu.is_empty() {
        args.nu.clone()
    } else {
        match file.nu {
            Some(NuInput::One(v)) => vec![v],
            Some(NuInput::Many(v)) => v,
            None => vec![1.0],
        }
    };
    let (cutoff, cutoff_range) = if args.cutoff.is_some() || args.cutoff_range.is_some() {
        (args.cutoff, args.cutoff_range)
    } else {
        (file.cutoff, file.cutoff_range)
    };
    if cutoff.is_some() && cutoff_range.is_some() {
        return Err(CliError::config(
            "give either cutoff or cutoff_range, not both",
        ));
    }
    let mut cfg = RunConfig {
        nu,
        lambda_star: args.lambda_star.or(file.lambda_star).unwrap_or(1.0),
        cutoff,
        cutoff_range,
        mesh_points: args
            .mesh_points
            .or(file.mesh_points)
            .unwrap_or(MeshSpec::default().n_points),
        k_min: args.k_min.or(file.k_min),
        panel_order: args.panel_order.or(file.panel_order),
        energy_window: args.energy_window.or(file.energy_window),
        k_range: args.k_range.or(file.k_range),
        h_range: args.h_range.or(file.h_range).unwrap_or(DEFAULT_H_RANGE),
        unrenormalized: args.unrenormalized || file.unrenormalized.unwrap_or(false),
        compare: args.compare || file.compare.unwrap_or(false),
        format: args.format.or(file.format).unwrap_or_default(),
        out: args.out.clone().or(file.out),
        workers: args.workers.or(file.workers),
    };
    cfg.validate()?;
    if command.needs_k_range() && cfg.k_range.is_none() {
        // Common grid inside every cutoff's open validity band [10 k_min, Λ/2].
        let cutoffs = cfg.cutoffs();
        let lo = cutoffs
            .iter()
            .map(|&c| 12.0 * cfg.k_min_at(c))
            .fold(0.0, f64::max);
        let hi = cutoffs
            .iter()
            .map(|&c| 0.4 * c)
            .fold(f64::INFINITY, f64::min);
        if !(lo < hi) {
            return Err(CliError::config(
                "no momentum lies inside every cutoff's validity band; pass --k-range",
            ));
        }
        cfg.k_range = Some(Range {
            lo,
            hi,
            n: DEFAULT_K_SAMPLES,
        });
    }
    Ok(cfg)
}
