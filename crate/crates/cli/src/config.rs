//! Flag and config-file handling. Precedence is flags, then the TOML file,
//! then per-command defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Inclusive, evenly spaced θ grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl ThetaRange {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

impl std::str::FromStr for ThetaRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected START:STOP:POINTS, got '{s}'"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"));
        let start = num(parts[0])?;
        let stop = num(parts[1])?;
        let points: usize = parts[2]
            .trim()
            .parse()
            .map_err(|e| format!("'{}': {e}", parts[2]))?;
        if !(start.is_finite() && stop.is_finite()) || start >= stop {
            return Err(format!(
                "range start must be below stop, got {start}:{stop}"
            ));
        }
        if points < 2 {
            return Err(format!("a range needs at least 2 points, got {points}"));
        }
        Ok(ThetaRange {
            start,
            stop,
            points,
        })
    }
}

/// `A:B` pair, used for the critical-θ bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bracket(pub f64, pub f64);

impl std::str::FromStr for Bracket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected LO:HI, got '{s}'"))?;
        let a: f64 = a.trim().parse().map_err(|e| format!("'{a}': {e}"))?;
        let b: f64 = b.trim().parse().map_err(|e| format!("'{b}': {e}"))?;
        Ok(Bracket(a, b))
    }
}

/// Which fixed-point law to sample from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LawChoice {
    Disordered,
    Minus,
    Plus,
    /// An explicit fixed point `x`.
    X(f64),
}

impl std::str::FromStr for LawChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disordered" => Ok(LawChoice::Disordered),
            "minus" => Ok(LawChoice::Minus),
            "plus" => Ok(LawChoice::Plus),
            other => other
                .strip_prefix("x=")
                .unwrap_or(other)
                .parse::<f64>()
                .map(LawChoice::X)
                .map_err(|_| {
                    format!("law must be disordered, minus, plus or x=<value>, got '{s}'")
                }),
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Comma-separated θ values.
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        conflicts_with = "theta_range"
    )]
    pub theta: Option<Vec<f64>>,

    /// Evenly spaced θ grid START:STOP:POINTS, endpoints included.
    #[arg(long, global = true, value_name = "A:B:N")]
    pub theta_range: Option<ThetaRange>,

    /// Comma-separated branching numbers.
    #[arg(long, global = true, value_delimiter = ',')]
    pub k: Option<Vec<u32>>,

    /// Points in the fixed-point scan grid.
    #[arg(long, global = true)]
    pub grid: Option<usize>,

    /// Final bracket width for critical θ.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file; standard output when neither this nor an output directory is set.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Directory for `<command>.<format>` when `--out` is absent.
    #[arg(long, global = true, env = "TISGM_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// TOML file with defaults for any of these flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// The config file mirrors the flags, with `-` replaced by `_`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub theta: Option<Vec<f64>>,
    pub theta_range: Option<String>,
    pub k: Option<Vec<u32>>,
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub bracket: Option<String>,
    pub depth: Option<usize>,
    pub trees: Option<usize>,
    pub law: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| UsageError(format!("config file {}: {e}", path.display())).into())
    }
}

/// Resolved settings for one run, echoed into every output.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub version: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub theta: Vec<f64>,
    pub k: Vec<u32>,
    pub grid: usize,
    pub tol: f64,
    pub seed: u64,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Per-command fallbacks used when neither a flag nor the file sets a value.
pub struct Defaults {
    pub theta: Vec<f64>,
    pub k: Vec<u32>,
    pub format: Format,
}

fn parse_usage<T: std::str::FromStr<Err = String>>(s: &str) -> anyhow::Result<T> {
    s.parse::<T>().map_err(|e| UsageError(e).into())
}

#[derive(Default)]
pub struct Extra {
    pub bracket: Option<Bracket>,
    pub depth: Option<usize>,
    pub trees: Option<usize>,
    pub law: Option<LawChoice>,
}

pub fn resolve(
    command: &str,
    common: &CommonArgs,
    defaults: Defaults,
) -> anyhow::Result<(RunConfig, FileConfig)> {
    let file = match &common.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if common.theta.is_some() && common.theta_range.is_some() {
        bail!(UsageError("--theta and --theta-range are exclusive".into()));
    }
    let file_range = file
        .theta_range
        .as_deref()
        .map(parse_usage::<ThetaRange>)
        .transpose()?;
    let theta = if let Some(t) = &common.theta {
        t.clone()
    } else if let Some(r) = &common.theta_range {
        r.grid()
    } else if let Some(t) = &file.theta {
        t.clone()
    } else if let Some(r) = file_range {
        r.grid()
    } else {
        defaults.theta
    };
    if theta.is_empty() {
        bail!(UsageError("the θ list is empty".into()));
    }
    if let Some(bad) = theta.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        bail!(UsageError(format!("θ must be positive, got {bad}")));
    }
    let k = common
        .k
        .clone()
        .or_else(|| file.k.clone())
        .unwrap_or(defaults.k);
    if k.is_empty() {
        bail!(UsageError("the k list is empty".into()));
    }
    if k.contains(&0) {
        bail!(UsageError("k must be at least 1".into()));
    }
    let grid = common
        .grid
        .or(file.grid)
        .unwrap_or(tisgm::solver::DEFAULT_GRID);
    let tol = common
        .tol
        .or(file.tol)
        .unwrap_or(tisgm::solver::CRITICAL_TOL);
    if tol.is_nan() || tol <= 0.0 {
        bail!(UsageError(format!("tolerance must be positive, got {tol}")));
    }
    let run = RunConfig {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        theta,
        k,
        grid,
        tol,
        seed: common.seed.or(file.seed).unwrap_or(0),
        format: common.format.or(file.format).unwrap_or(defaults.format),
        bracket: None,
        depth: None,
        trees: None,
        law: None,
        out: common.out.clone().or_else(|| file.out.clone()),
    };
    Ok((run, file))
}

impl RunConfig {
    /// Fill in subcommand-specific settings, flags first.
    pub fn extra(
        &mut self,
        file: &FileConfig,
        flags: Extra,
        fallback: Extra,
    ) -> anyhow::Result<Extra> {
        let bracket = match flags.bracket {
            Some(b) => Some(b),
            None => match &file.bracket {
                Some(s) => Some(parse_usage::<Bracket>(s)?),
                None => fallback.bracket,
            },
        };
        let law = match flags.law {
            Some(l) => Some(l),
            None => match &file.law {
                Some(s) => Some(parse_usage::<LawChoice>(s)?),
                None => fallback.law,
            },
        };
        let depth = flags.depth.or(file.depth).or(fallback.depth);
        let trees = flags.trees.or(file.trees).or(fallback.trees);
        self.bracket = bracket.map(|b| (b.0, b.1));
        self.depth = depth;
        self.trees = trees;
        self.law = law.map(|l| match l {
            LawChoice::X(x) => format!("x={x}"),
            other => serde_json::to_value(other)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
        });
        Ok(Extra {
            bracket,
            depth,
            trees,
            law,
        })
    }

    /// The effective configuration as `# key = value` lines.
    pub fn header(&self) -> String {
        let body = toml::to_string(self).unwrap_or_default();
        body.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| format!("# {l}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        let r: ThetaRange = "1:2:5".parse().unwrap();
        assert_eq!(r.grid(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        assert!("2:1:5".parse::<ThetaRange>().is_err());
        assert!("1:2:1".parse::<ThetaRange>().is_err());
        assert!("1:2".parse::<ThetaRange>().is_err());
    }

    #[test]
    fn law_parsing() {
        assert_eq!("plus".parse::<LawChoice>().unwrap(), LawChoice::Plus);
        assert_eq!("x=1.5".parse::<LawChoice>().unwrap(), LawChoice::X(1.5));
        assert_eq!("0.5".parse::<LawChoice>().unwrap(), LawChoice::X(0.5));
        assert!("sideways".parse::<LawChoice>().is_err());
    }

    #[test]
    fn bracket_parsing() {
        assert_eq!("2:3".parse::<Bracket>().unwrap(), Bracket(2.0, 3.0));
        assert!("2".parse::<Bracket>().is_err());
    }
}
