//! Command-line front end: config parsing, overrides, dispatch and exit codes.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    run_barenblatt_convergence, run_dirac_trace, run_giant, run_invariants, run_minorant, run_propagation,
    run_slanted, Artifacts, BarenblattConfig, DiracConfig, ExperimentReport, GiantConfig, InvariantConfig,
    MinorantConfig, PropagationConfig, SlantedConfig,
};

pub const RUNS_DIR_ENV: &str = "PLAP_RUNS_DIR";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Barenblatt,
    Giant,
    Minorant,
    Propagation,
    Slanted,
    Dirac,
    Proptest,
}

impl Experiment {
    /// Case-insensitive lookup by subcommand name.
    pub fn from_name(name: &str) -> Option<Self> {
        <Self as ValueEnum>::from_str(name, true).ok()
    }

    pub fn section(self) -> &'static str {
        match self {
            Experiment::Barenblatt => "barenblatt",
            Experiment::Giant => "giant",
            Experiment::Minorant => "minorant",
            Experiment::Propagation => "propagation",
            Experiment::Slanted => "slanted",
            Experiment::Dirac => "dirac",
            Experiment::Proptest => "proptest",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.section())
    }
}

#[derive(Debug, Parser)]
#[command(name = "plap", version, about = "Slow-diffusion p-Laplace numerical lab")]
pub struct Args {
    /// Experiment to run.
    pub experiment: Experiment,
    /// TOML file with one section per experiment.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config entry; bare keys refer to the selected experiment.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run directory (default: $PLAP_RUNS_DIR or ./runs, then <experiment>/<timestamp>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for the randomized suite; overrides `proptest.seed` when set.
    pub seed: Option<u64>,
    /// Output root; the environment variable and `./runs` are fallbacks.
    pub output: Option<PathBuf>,
    pub barenblatt: BarenblattConfig,
    pub giant: GiantConfig,
    pub minorant: MinorantConfig,
    pub propagation: PropagationConfig,
    pub slanted: SlantedConfig,
    pub dirac: DiracConfig,
    pub proptest: InvariantConfig,
}

const TOP_LEVEL: [&str; 2] = ["seed", "output"];

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn parse(text: &str, overrides: &[String], experiment: Experiment) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item, experiment)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(seed) = cfg.seed {
            cfg.proptest.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String], experiment: Experiment) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::parse(&text, overrides, experiment)
    }

    pub fn validate(&self) -> Result<()> {
        self.barenblatt.validate()?;
        self.giant.validate()?;
        self.minorant.validate()?;
        self.propagation.validate()?;
        self.slanted.validate()?;
        self.dirac.validate()?;
        self.proptest.validate()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn apply_override(table: &mut toml::Table, item: &str, experiment: Experiment) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{item}' is not KEY=VALUE")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override '{item}' has an empty key")));
    }
    let mut path: Vec<&str> = key.split('.').collect();
    let root = path[0];
    let sections = [
        "barenblatt",
        "giant",
        "minorant",
        "propagation",
        "slanted",
        "dirac",
        "proptest",
    ];
    if !TOP_LEVEL.contains(&root) && !sections.contains(&root) {
        path.insert(0, experiment.section());
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("nonempty key");
    let mut cursor = table;
    for part in parents {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{part}' in '{key}' is not a section")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Run directory: `--out` as given, else `<root>/<experiment>/<timestamp>`.
pub fn run_dir(out: Option<&Path>, cfg: &RunConfig, experiment: Experiment) -> PathBuf {
    if let Some(out) = out {
        return out.to_path_buf();
    }
    let root = cfg
        .output
        .clone()
        .or_else(|| std::env::var_os(RUNS_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f").to_string();
    let base = root.join(experiment.section());
    let mut dir = base.join(&stamp);
    let mut n = 1;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{n}"));
        n += 1;
    }
    dir
}

pub fn run(cfg: &RunConfig, experiment: Experiment, artifacts: &Artifacts) -> Result<ExperimentReport> {
    match experiment {
        Experiment::Barenblatt => run_barenblatt_convergence(&cfg.barenblatt, artifacts),
        Experiment::Giant => run_giant(&cfg.giant, artifacts),
        Experiment::Minorant => run_minorant(&cfg.minorant, artifacts),
        Experiment::Propagation => run_propagation(&cfg.propagation, artifacts),
        Experiment::Slanted => run_slanted(&cfg.slanted, artifacts),
        Experiment::Dirac => run_dirac_trace(&cfg.dirac),
        Experiment::Proptest => run_invariants(&cfg.proptest),
    }
}

#[derive(Serialize)]
struct Failure<'a> {
    experiment: &'a str,
    error: String,
    kind: &'a str,
    config: &'a RunConfig,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidGrid(_) => "invalid_grid",
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::NonFinite { .. } => "non_finite",
        Error::NotConverged { .. } => "not_converged",
        Error::LinearBreakdown(_) => "linear_breakdown",
        Error::TrivialSolution { .. } => "trivial_solution",
        Error::Partition(_) => "partition",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn is_usage(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::Partition(_))
}

/// Runs the parsed command and returns the process exit code.
pub fn execute(args: &Args) -> i32 {
    let experiment = args.experiment;
    let cfg = match RunConfig::load(args.config.as_deref(), &args.set, experiment) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("plap: {e}");
            return EXIT_USAGE;
        }
    };
    if args.print_config {
        return match cfg.to_toml() {
            Ok(text) => {
                print!("{text}");
                EXIT_PASS
            }
            Err(e) => {
                eprintln!("plap: {e}");
                EXIT_USAGE
            }
        };
    }
    let dir = run_dir(args.out.as_deref(), &cfg, experiment);
    let outcome = run(&cfg, experiment, &Artifacts::at(&dir)).and_then(|mut report| {
        report.validate()?;
        report.write_tables(&dir)?;
        let path = report.write_json(&dir)?;
        Ok((report, path))
    });
    match outcome {
        Ok((report, path)) => {
            print!("{}", report.summary());
            println!("report: {}", path.display());
            if report.passed() {
                EXIT_PASS
            } else {
                EXIT_VERDICT
            }
        }
        Err(e) => {
            let failure = Failure {
                experiment: experiment.section(),
                error: e.to_string(),
                kind: error_kind(&e),
                config: &cfg,
            };
            let json = serde_json::to_string_pretty(&failure).unwrap_or_else(|_| format!("{{\"error\": {:?}}}", e.to_string()));
            if std::fs::create_dir_all(&dir).is_ok() {
                let _ = std::fs::write(dir.join("failure.json"), &json);
            }
            eprintln!("{json}");
            if is_usage(&e) {
                EXIT_USAGE
            } else {
                EXIT_SOLVER
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = RunConfig::parse("", &[], Experiment::Barenblatt).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn bare_keys_go_to_the_selected_section() {
        let cfg = RunConfig::parse("", &["p=3.5".into(), "giant.p=4".into()], Experiment::Barenblatt).unwrap();
        assert_eq!(cfg.barenblatt.p, 3.5);
        assert_eq!(cfg.giant.p, 4.0);
        assert_eq!(cfg.minorant.p, 3.0);
    }

    #[test]
    fn p_two_is_rejected_with_the_regime_message() {
        let err = RunConfig::parse("[barenblatt]\np = 2.0\n", &[], Experiment::Barenblatt).unwrap_err();
        assert!(err.to_string().contains("requires p > 2"), "{err}");
    }

    #[test]
    fn unknown_keys_fail_fast() {
        assert!(RunConfig::parse("[barenblatt]\nbogus = 1\n", &[], Experiment::Barenblatt).is_err());
        assert!(RunConfig::parse("nonsense = 1\n", &[], Experiment::Barenblatt).is_err());
        assert!(RunConfig::parse("", &["bogus=1".into()], Experiment::Giant).is_err());
    }

    #[test]
    fn malformed_numbers_fail() {
        assert!(RunConfig::parse("", &["p=three".into()], Experiment::Barenblatt).is_err());
        assert!(RunConfig::parse("", &["p".into()], Experiment::Barenblatt).is_err());
    }

    #[test]
    fn probe_outside_domain_fails() {
        assert!(RunConfig::parse("", &["probes=[[1.5]]".into()], Experiment::Minorant).is_err());
    }

    #[test]
    fn seed_overrides_suite_seed() {
        let cfg = RunConfig::parse("seed = 9\n", &[], Experiment::Proptest).unwrap();
        assert_eq!(cfg.proptest.seed, 9);
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::parse("", &["dt=2e-4".into()], Experiment::Minorant).unwrap();
        let again = RunConfig::parse(&cfg.to_toml().unwrap(), &[], Experiment::Minorant).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn explicit_out_is_used_verbatim() {
        let cfg = RunConfig::default();
        assert_eq!(run_dir(Some(Path::new("x/y")), &cfg, Experiment::Giant), PathBuf::from("x/y"));
        let cfg = RunConfig {
            output: Some("root".into()),
            ..Default::default()
        };
        let d = run_dir(None, &cfg, Experiment::Giant);
        assert!(d.starts_with("root/giant"));
    }
}
