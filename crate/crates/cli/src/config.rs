//! Run configuration: a JSON file whose fields can be overridden by flags.
//!
//! Every field is optional; missing values are filled with per-experiment
//! defaults before the run, and the resolved configuration is echoed into
//! the JSON summary.

use crate::error::CliError;
use clap::Args;
use curvlab::curvature::Curv;
use curvlab::discriminant::DiscCase;
use curvlab::Convention;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    JetsCov,
    Wishart,
    Volume,
    DiscTail,
    Decay,
    CrossValidate,
    EmpiricalDensity,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::JetsCov => "jets-cov",
            Experiment::Wishart => "wishart",
            Experiment::Volume => "volume",
            Experiment::DiscTail => "disc-tail",
            Experiment::Decay => "decay",
            Experiment::CrossValidate => "cross-validate",
            Experiment::EmpiricalDensity => "empirical-density",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_list: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curv: Option<Curv>,
    /// Discriminant case for `disc-tail`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<DiscCase>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convention: Option<Convention>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    /// Use the certificate before optimising (hbc and hc only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<bool>,
    /// Number of sampled systems for `cross-validate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub systems: Option<usize>,
    /// Points per system for `cross-validate` and `empirical-density`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_path: Option<PathBuf>,
}

fn parse_case(s: &str) -> Result<DiscCase, String> {
    match s {
        "bilinear" => Ok(DiscCase::Bilinear),
        "quadratic" => Ok(DiscCase::Quadratic),
        "linearized" => Ok(DiscCase::Linearized),
        other => Err(format!("unknown case '{other}' (bilinear, quadratic, linearized)")),
    }
}

fn parse_convention(s: &str) -> Result<Convention, String> {
    match s {
        "var-two" => Ok(Convention::VarTwo),
        "var-one" => Ok(Convention::VarOne),
        other => Err(format!("unknown convention '{other}' (var-two, var-one)")),
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Size of the worker pool (results do not depend on it).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output CSV path; the JSON summary goes next to it with extension .json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub d_list: Option<Vec<u32>>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub a_list: Option<Vec<f64>>,
    #[arg(long)]
    pub curv: Option<Curv>,
    #[arg(long, value_parser = parse_case)]
    pub case: Option<DiscCase>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long, value_parser = parse_convention)]
    pub convention: Option<Convention>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub filter: Option<bool>,
    #[arg(long)]
    pub systems: Option<usize>,
    #[arg(long)]
    pub points: Option<usize>,
}

impl RunConfig {
    pub fn load(args: &RunArgs, experiment: Experiment) -> Result<RunConfig, CliError> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(found) = cfg.experiment {
            if found != experiment {
                return Err(CliError::Config(format!(
                    "config is for experiment '{}' but subcommand is '{}'",
                    found.name(),
                    experiment.name()
                )));
            }
        }
        cfg.experiment = Some(experiment);
        macro_rules! set {
            ($($field:ident),*) => {
                $(if args.$field.is_some() { cfg.$field = args.$field.clone(); })*
            };
        }
        set!(seed, n, r, d, d_list, a, a_list, curv, case, n_samples, convention, restarts, filter, systems, points);
        if args.out.is_some() {
            cfg.out_path = args.out.clone();
        }
        cfg.fill_defaults(experiment);
        cfg.validate(experiment)?;
        Ok(cfg)
    }

    fn fill_defaults(&mut self, experiment: Experiment) {
        use Experiment::*;
        let (n, r) = match experiment {
            DiscTail => (5, 3),
            _ => (2, 1),
        };
        self.n.get_or_insert(n);
        self.r.get_or_insert(r);
        self.seed.get_or_insert(0);
        self.convention.get_or_insert(Convention::VarTwo);
        self.out_path.get_or_insert_with(|| PathBuf::from(format!("{}.csv", experiment.name())));
        match experiment {
            JetsCov => {
                if self.d.is_none() {
                    self.d_list.get_or_insert_with(|| (0..7).map(|k| 10 << k).collect());
                }
            }
            Wishart => {
                self.n_samples.get_or_insert(1_000_000);
            }
            Volume => {
                if self.d.is_none() {
                    self.d_list.get_or_insert_with(|| (1..=10).collect());
                }
            }
            DiscTail => {
                self.case.get_or_insert(DiscCase::Bilinear);
                self.n_samples.get_or_insert(100_000);
                self.restarts.get_or_insert(64);
            }
            Decay => {
                self.curv.get_or_insert(Curv::Hbc);
                if self.a_list.is_none() {
                    self.a.get_or_insert(1.0);
                }
                if self.d.is_none() {
                    self.d_list.get_or_insert_with(|| vec![10, 20, 40, 80, 160]);
                }
                self.n_samples.get_or_insert(100_000);
                self.restarts.get_or_insert(32);
                self.filter.get_or_insert(true);
            }
            CrossValidate => {
                self.curv.get_or_insert(Curv::Hbc);
                self.d.get_or_insert(20);
                self.a.get_or_insert(1.0);
                self.n_samples.get_or_insert(100_000);
                self.systems.get_or_insert(100);
                self.points.get_or_insert(1000);
                self.restarts.get_or_insert(32);
                self.filter.get_or_insert(true);
            }
            EmpiricalDensity => {
                self.curv.get_or_insert(Curv::Hbc);
                self.d.get_or_insert(20);
                self.a.get_or_insert(1.0);
                self.points.get_or_insert(1000);
            }
        }
    }

    /// Thresholds for experiments that take one or several.
    pub fn thresholds(&self) -> Vec<f64> {
        match (&self.a_list, self.a) {
            (Some(list), _) => list.clone(),
            (None, Some(a)) => vec![a],
            (None, None) => Vec::new(),
        }
    }

    /// Degrees for experiments that take one or several.
    pub fn degrees(&self) -> Vec<u32> {
        match (&self.d_list, self.d) {
            (Some(list), _) => list.clone(),
            (None, Some(d)) => vec![d],
            (None, None) => Vec::new(),
        }
    }

    fn validate(&self, experiment: Experiment) -> Result<(), CliError> {
        use Experiment::*;
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.d.is_some() && self.d_list.is_some() {
            return bad("give either d or d_list, not both".into());
        }
        if self.a.is_some() && self.a_list.is_some() {
            return bad("give either a or a_list, not both".into());
        }
        if let Some(list) = &self.d_list {
            if list.is_empty() {
                return bad("d_list is empty".into());
            }
        }
        if let Some(list) = &self.a_list {
            if list.is_empty() {
                return bad("a_list is empty".into());
            }
            if experiment != Decay {
                return bad(format!("a_list is only supported by decay, not {}", experiment.name()));
            }
        }
        if self.thresholds().iter().any(|a| !(*a >= 0.0)) {
            return bad("thresholds must be >= 0".into());
        }
        if self.n_samples == Some(0) || self.systems == Some(0) || self.points == Some(0) || self.restarts == Some(0) {
            return bad("counts (n_samples, systems, points, restarts) must be positive".into());
        }
        let min_degree = match experiment {
            JetsCov | Decay | CrossValidate => 2,
            _ => 1,
        };
        if self.degrees().iter().any(|&d| d < min_degree) {
            return bad(format!("{} needs degrees >= {min_degree}", experiment.name()));
        }
        if matches!(experiment, CrossValidate | EmpiricalDensity) && self.r != Some(1) {
            return bad(format!("{} samples points by slicing hypersurfaces and needs r = 1", experiment.name()));
        }
        Ok(())
    }
}
