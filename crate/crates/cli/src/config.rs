//! Run configuration: command-line flags, an optional JSON file layered on
//! top, and validation.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use mtlrrc::{Case, PenaltyFamily, SimConfig, SplitSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fit,
    Simulate,
    Bench,
}

/// Estimators compared by the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MTLRRC-GL")]
    MtlrrcGl,
    #[serde(rename = "MTLRRC-GS")]
    MtlrrcGs,
    #[serde(rename = "MTLRRC-GM")]
    MtlrrcGm,
    #[serde(rename = "MTLCVX")]
    Mtlcvx,
    #[serde(rename = "HMTLK")]
    Hmtlk,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::MtlrrcGl,
        Method::MtlrrcGs,
        Method::MtlrrcGm,
        Method::Mtlcvx,
        Method::Hmtlk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MtlrrcGl => "MTLRRC-GL",
            Method::MtlrrcGs => "MTLRRC-GS",
            Method::MtlrrcGm => "MTLRRC-GM",
            Method::Mtlcvx => "MTLCVX",
            Method::Hmtlk => "HMTLK",
        }
    }

    /// Outlier penalty of the robust variants.
    pub fn penalty(self) -> Option<PenaltyFamily> {
        match self {
            Method::MtlrrcGl => Some(PenaltyFamily::GroupLasso),
            Method::MtlrrcGs => Some(PenaltyFamily::GroupScad),
            Method::MtlrrcGm => Some(PenaltyFamily::GroupMcp),
            Method::Mtlcvx | Method::Hmtlk => None,
        }
    }
}

/// `count` points from `10^lo` to `10^hi`, evenly spaced in log scale.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub data_dir: Option<PathBuf>,
    pub out: PathBuf,
    #[serde(serialize_with = "ser_family", deserialize_with = "de_family")]
    pub penalty: PenaltyFamily,
    #[serde(serialize_with = "ser_grid", deserialize_with = "de_grid")]
    pub lambda1: Vec<f64>,
    #[serde(serialize_with = "ser_grid", deserialize_with = "de_grid")]
    pub lambda2: Vec<f64>,
    #[serde(serialize_with = "ser_grid", deserialize_with = "de_grid")]
    pub lambda3: Vec<f64>,
    /// Shape parameter; the family default when absent.
    pub gamma: Option<f64>,
    pub k: usize,
    pub nu: f64,
    pub seed: u64,
    pub replicates: usize,
    pub workers: Option<usize>,
    /// Ridge penalty of the single-task fits behind the graph weights.
    pub stl_ridge: f64,
    pub tol: f64,
    pub max_outer: usize,
    pub max_fista: usize,
    /// Split of each task for `fit` and `bench`.
    pub split: SplitSpec,
    /// Simulation settings for `simulate` and `bench`. The seed inside is
    /// ignored in favour of `seed`.
    pub sim: SimConfig,
    pub methods: Vec<Method>,
    /// Chi-square level of the Hotelling screen.
    pub level: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Fit,
            data_dir: None,
            out: PathBuf::from("out"),
            penalty: PenaltyFamily::GroupScad,
            lambda1: log_grid(-2.0, 1.0, 7),
            lambda2: log_grid(-2.0, 2.0, 9),
            lambda3: log_grid(-1.0, 2.0, 7),
            gamma: None,
            k: 5,
            nu: 1.0,
            seed: 0,
            replicates: 40,
            workers: None,
            stl_ridge: 1e-2,
            tol: 1e-5,
            max_outer: 300,
            max_fista: 500,
            split: SplitSpec::Ratios(0.25, 0.5, 0.25),
            sim: SimConfig::default(),
            methods: Method::ALL.to_vec(),
            level: 0.95,
        }
    }
}

impl RunConfig {
    pub fn gamma_for(&self, family: PenaltyFamily) -> f64 {
        match self.gamma {
            Some(g) if family == self.penalty => g,
            _ => family.default_gamma(),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            seed: self.seed,
            ..self.sim
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        for (name, grid) in [
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("lambda3", &self.lambda3),
        ] {
            if grid.is_empty() {
                return Err(CliError::config(format!("{name} grid is empty")));
            }
            if grid.iter().any(|v| v.is_nan() || *v < 0.0) {
                return Err(CliError::config(format!("{name} grid must hold non-negative values")));
            }
        }
        if self.lambda1.iter().chain(&self.lambda2).any(|v| v.is_infinite()) {
            return Err(CliError::config("only lambda3 may be infinite"));
        }
        if self.k == 0 {
            return Err(CliError::config("k must be positive"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(CliError::config("nu must be positive"));
        }
        if let Some(g) = self.gamma {
            if !(g > 1.0 && g.is_finite()) {
                return Err(CliError::config("gamma must exceed 1"));
            }
        }
        if !(self.stl_ridge > 0.0 && self.stl_ridge.is_finite()) {
            return Err(CliError::config("stl_ridge must be positive"));
        }
        if !(self.tol > 0.0) || self.max_outer == 0 || self.max_fista == 0 {
            return Err(CliError::config("tolerances and iteration limits must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::config("level must lie in (0, 1)"));
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers must be positive"));
        }
        match self.mode {
            Mode::Fit if self.data_dir.is_none() => {
                return Err(CliError::config("fit mode needs a data directory"))
            }
            Mode::Bench if self.replicates == 0 => {
                return Err(CliError::config("bench needs at least one replicate"))
            }
            Mode::Bench if self.methods.is_empty() => {
                return Err(CliError::config("bench needs at least one method"))
            }
            _ => {}
        }
        if self.mode != Mode::Fit {
            self.sim_config().validate().map_err(CliError::Core)?;
        }
        check_writable(&self.out)
    }
}

fn check_writable(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"").map_err(|e| CliError::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| CliError::io(&probe, e))
}

fn ser_family<S: Serializer>(f: &PenaltyFamily, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(f.code())
}

fn de_family<'de, D: Deserializer<'de>>(d: D) -> Result<PenaltyFamily, D::Error> {
    let code = String::deserialize(d)?;
    parse_family(&code).map_err(serde::de::Error::custom)
}

fn parse_family(code: &str) -> Result<PenaltyFamily, String> {
    PenaltyFamily::from_code(code)
        .or_else(|| serde_json::from_value(Value::String(code.to_string())).ok())
        .ok_or_else(|| format!("unknown penalty `{code}` (expected gl, gs, gm or tukey)"))
}

fn ser_grid<S: Serializer>(g: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(g.len()))?;
    for &v in g {
        if v.is_finite() {
            seq.serialize_element(&v)?;
        } else {
            seq.serialize_element("inf")?;
        }
    }
    seq.end()
}

/// Grid values are numbers or the string `"inf"`.
fn de_grid<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Item {
        Num(f64),
        Text(String),
    }
    Vec::<Item>::deserialize(d)?
        .into_iter()
        .map(|item| match item {
            Item::Num(v) => Ok(v),
            Item::Text(t) => parse_value(&t).map_err(serde::de::Error::custom),
        })
        .collect()
}

fn parse_value(text: &str) -> Result<f64, String> {
    match text.trim() {
        "inf" | "Inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CaseArg {
    Case1,
    Case2,
}

/// Multi-task GLM estimation with robust task clustering.
#[derive(Debug, Parser)]
#[command(name = "mtlrrc", version)]
pub struct Cli {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Directory of per-task CSV files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_family)]
    penalty: Option<PenaltyFamily>,
    /// Comma-separated grid.
    #[arg(long, value_parser = parse_value, value_delimiter = ',')]
    lambda1: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_value, value_delimiter = ',')]
    lambda2: Option<Vec<f64>>,
    /// Comma-separated grid; `inf` pins the outlier block to zero.
    #[arg(long, value_parser = parse_value, value_delimiter = ',')]
    lambda3: Option<Vec<f64>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    stl_ridge: Option<f64>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, value_enum)]
    case: Option<CaseArg>,
    /// JSON file whose keys override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Cli {
    pub fn into_config(self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        take!(mode, penalty, lambda1, lambda2, lambda3, k, nu, seed, replicates, out, stl_ridge);
        cfg.data_dir = self.data_dir.or(cfg.data_dir);
        cfg.gamma = self.gamma.or(cfg.gamma);
        cfg.workers = self.workers.or(cfg.workers);
        if let Some(v) = self.tasks {
            cfg.sim.n_tasks = v;
        }
        if let Some(v) = self.features {
            cfg.sim.n_features = v;
        }
        if let Some(v) = self.clusters {
            cfg.sim.n_clusters = v;
        }
        if let Some(v) = self.samples {
            cfg.sim.n_samples = v;
        }
        if let Some(v) = self.kappa {
            cfg.sim.kappa = v;
        }
        if let Some(c) = self.case {
            cfg.sim.case = match c {
                CaseArg::Case1 => Case::Case1,
                CaseArg::Case2 => Case::Case2,
            };
        }
        if let Some(path) = self.config {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let overlay: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            cfg = overlay_config(&cfg, overlay)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        }
        Ok(cfg)
    }
}

/// Replaces the fields of `base` named in `overlay`. The `sim` object
/// merges key by key; every other field is replaced whole.
pub fn overlay_config(base: &RunConfig, overlay: Value) -> Result<RunConfig, serde_json::Error> {
    let mut merged = serde_json::to_value(base)?;
    let Value::Object(fields) = overlay else {
        return Err(serde::de::Error::custom("the configuration file must hold a JSON object"));
    };
    for (key, value) in fields {
        match (merged.get_mut(&key), value) {
            (Some(Value::Object(slot)), Value::Object(part)) if key == "sim" => slot.extend(part),
            (_, value) => {
                merged[key.as_str()] = value;
            }
        }
    }
    serde_json::from_value(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids_have_the_documented_sizes() {
        let c = RunConfig::default();
        assert_eq!((c.lambda1.len(), c.lambda2.len(), c.lambda3.len()), (7, 9, 7));
        assert!((c.lambda1[0] - 0.01).abs() < 1e-15 && (c.lambda1[6] - 10.0).abs() < 1e-12);
        assert!((c.lambda3[6] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn file_overrides_flags() {
        let cli = Cli::parse_from(["mtlrrc", "--mode", "bench", "--k", "3", "--lambda3", "1,inf"]);
        let cfg = cli.into_config().unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.lambda3, vec![1.0, f64::INFINITY]);
        let over = serde_json::json!({
            "k": 7, "penalty": "gm", "sim": {"kappa": 0.3}, "lambda3": ["inf"],
            "split": {"counts": [2, 2, 2]}
        });
        let merged = overlay_config(&cfg, over).unwrap();
        assert_eq!(merged.k, 7);
        assert_eq!(merged.mode, Mode::Bench);
        assert_eq!(merged.penalty, PenaltyFamily::GroupMcp);
        assert_eq!(merged.sim.kappa, 0.3);
        assert_eq!(merged.sim.n_tasks, 150);
        assert_eq!(merged.lambda3, vec![f64::INFINITY]);
        assert_eq!(merged.split, SplitSpec::Counts(2, 2, 2));
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = RunConfig::default();
        c.lambda2.clear();
        assert!(c.validate().is_err());
        assert!(overlay_config(&RunConfig::default(), serde_json::json!({"penalty": "ridge"})).is_err());
        assert!(overlay_config(&RunConfig::default(), serde_json::json!({"bogus": 1})).is_err());
    }
}
