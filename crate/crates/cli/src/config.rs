//! Command line, environment and config-file layers resolved into one `RunConfig`.
//!
//! Precedence is flag > `GTSPEC_*` variable > `--config` file > built-in default.
//! Clap merges the first two; the file fills whatever is still unset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gtspec", version, about = "Decay rates of damped kinetic transport on the circle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// Run the constant-σ oracle suite and exit.
    #[arg(long, global = true)]
    pub selftest: bool,

    #[command(flatten)]
    pub opts: Flags,
}

impl Cli {
    /// Like `try_parse_from`, but a sigma source given as a flag silences the
    /// other source's environment variable instead of conflicting with it.
    pub fn parse_layers<I, T>(args: I) -> Result<Self, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<std::ffi::OsString> + Clone,
    {
        let matches = Self::command().try_get_matches_from(args)?;
        let mut cli = Self::from_arg_matches(&matches)?;
        let m = matches.subcommand().map_or(&matches, |(_, sub)| sub);
        let from_env = |m: &ArgMatches, id: &str| m.value_source(id) == Some(ValueSource::EnvVariable);
        if cli.opts.sigma_const.is_some() && cli.opts.sigma_file.is_some() {
            match (from_env(m, "sigma_const"), from_env(m, "sigma_file")) {
                (true, false) => cli.opts.sigma_const = None,
                (false, true) => cli.opts.sigma_file = None,
                _ => {}
            }
        }
        Ok(cli)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Eigenvalues in the gap search box.
    Spectrum,
    /// Spectral gap, leading cluster and bounds.
    Gap,
    /// Slow real eigenvalue certified through the Schrödinger operator.
    Schrodinger,
    /// Time integration of the kinetic equation with a fitted decay rate.
    Simulate,
    /// Gap of constant profiles over a range of values.
    Sweep,
    /// Gap maximization over K uniform cells.
    Optimize,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Gap => "gap",
            Command::Schrodinger => "schrodinger",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Summary,
    Csv,
}

/// Every option is global so it may follow the subcommand; commands ignore
/// the ones they do not use.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// key=value file supplying defaults for any option below.
    #[arg(long, global = true, env = "GTSPEC_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Constant jump rate σ.
    #[arg(long, global = true, env = "GTSPEC_SIGMA_CONST")]
    pub sigma_const: Option<f64>,
    /// Profile file (`x_break value` lines closed by `2π —`).
    #[arg(long, global = true, env = "GTSPEC_SIGMA_FILE", value_name = "PATH")]
    pub sigma_file: Option<PathBuf>,
    /// Root-finding tolerance [default: 1e-10].
    #[arg(long, global = true, env = "GTSPEC_TOL")]
    pub tol: Option<f64>,
    /// Half-height of the search box [default: 3·max(1, ‖σ‖₁/4π) + 10].
    #[arg(long, global = true, env = "GTSPEC_IM_CUTOFF")]
    pub im_cutoff: Option<f64>,
    /// Real-part window of the leading cluster [default: 1e-6].
    #[arg(long, global = true, env = "GTSPEC_CLUSTER_TOL")]
    pub cluster_tol: Option<f64>,
    /// Grid points for simulate and schrodinger [default: 512].
    #[arg(long, global = true, env = "GTSPEC_N")]
    pub n: Option<usize>,
    /// Final time of simulate [default: 30].
    #[arg(long = "t-end", short = 'T', global = true, env = "GTSPEC_T_END")]
    pub t_end: Option<f64>,
    /// Number of uniform cells for optimize [default: 8].
    #[arg(long, global = true, env = "GTSPEC_K")]
    pub k: Option<usize>,
    /// Iteration cap for optimize [default: 200].
    #[arg(long, global = true, env = "GTSPEC_MAX_ITERS")]
    pub max_iters: Option<usize>,
    /// Seed for `--init random` [default: 0].
    #[arg(long, global = true, env = "GTSPEC_SEED")]
    pub seed: Option<u64>,
    /// Starting profile of optimize: `const:V`, `random:MAX` or `file:PATH`
    /// [default: the sigma source, else const:5].
    #[arg(long, global = true, env = "GTSPEC_INIT")]
    pub init: Option<String>,
    /// Sweep grid `a:b:n` [default: 0.1:6:60].
    #[arg(long, global = true, env = "GTSPEC_CONST_RANGE")]
    pub const_range: Option<String>,
    /// CSV artifact path (CSV goes to stdout when the format is csv and no path is given).
    #[arg(long, short = 'o', global = true, env = "GTSPEC_OUTPUT", value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// What is printed on stdout [default: summary].
    #[arg(long, global = true, env = "GTSPEC_FORMAT", value_enum)]
    pub format: Option<Format>,
    /// Worker threads [default: machine parallelism].
    #[arg(long, global = true, env = "GTSPEC_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSource {
    Const(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Const(f64),
    Random(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub sigma: Option<SigmaSource>,
    pub tol: f64,
    pub im_cutoff: Option<f64>,
    pub cluster_tol: f64,
    pub n: usize,
    pub t_end: f64,
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub init: Option<Init>,
    pub const_range: (f64, f64, usize),
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
}

const KEYS: &[&str] = &[
    "sigma-const",
    "sigma-file",
    "tol",
    "im-cutoff",
    "cluster-tol",
    "n",
    "t-end",
    "k",
    "max-iters",
    "seed",
    "init",
    "const-range",
    "output",
    "format",
    "threads",
];

/// Parses a `key = value` file; `#` starts a comment, `_` and `-` are interchangeable in keys.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|m| CliError::Usage(format!("{}: {m}", path.display())))
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let key = key.trim().replace('_', "-").to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key '{key}'", i + 1));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key '{key}'", i + 1));
        }
    }
    Ok(map)
}

struct Layer<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layer<'_> {
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key '{key}': cannot parse '{v}'"))),
        }
    }
}

fn parse_init(s: &str) -> Result<Init, CliError> {
    let bad = || CliError::Usage(format!("--init '{s}': expected const:V, random:MAX or file:PATH"));
    let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "const" => arg.parse().map(Init::Const).map_err(|_| bad()),
        "random" => arg.parse().map(Init::Random).map_err(|_| bad()),
        "file" => Ok(Init::File(PathBuf::from(arg))),
        _ => Err(bad()),
    }
}

pub fn parse_range(s: &str) -> Result<(f64, f64, usize), CliError> {
    let bad = || CliError::Usage(format!("--const-range '{s}': expected a:b:n"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    Ok((a, b, n))
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{name} must be positive (got {v})")))
    }
}

impl RunConfig {
    pub fn resolve(command: Command, flags: Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => read_config_file(p)?,
            None => BTreeMap::new(),
        };
        let layer = Layer { file: &file };

        // a source given by flag or environment replaces the file's source as a whole
        let sigma = match (flags.sigma_const, flags.sigma_file) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("--sigma-const and --sigma-file are mutually exclusive".into()))
            }
            (Some(c), None) => Some(SigmaSource::Const(c)),
            (None, Some(p)) => Some(SigmaSource::File(p)),
            (None, None) => match (file.get("sigma-const"), file.get("sigma-file")) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage("config sets both sigma-const and sigma-file".into()))
                }
                (Some(_), None) => layer.get::<f64>(None, "sigma-const")?.map(SigmaSource::Const),
                (None, Some(p)) => Some(SigmaSource::File(PathBuf::from(p))),
                (None, None) => None,
            },
        };

        let tol = positive("tol", layer.get(flags.tol, "tol")?.unwrap_or(1e-10))?;
        let im_cutoff = layer.get(flags.im_cutoff, "im-cutoff")?.map(|v| positive("im-cutoff", v)).transpose()?;
        let cluster_tol = positive("cluster-tol", layer.get(flags.cluster_tol, "cluster-tol")?.unwrap_or(1e-6))?;
        let n = layer.get(flags.n, "n")?.unwrap_or(512);
        let t_end = positive("T", layer.get(flags.t_end, "t-end")?.unwrap_or(30.0))?;
        let k = layer.get(flags.k, "k")?.unwrap_or(8);
        if k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        let max_iters = layer.get(flags.max_iters, "max-iters")?.unwrap_or(200);
        let seed = layer.get(flags.seed, "seed")?.unwrap_or(0);
        let init = layer.get(flags.init, "init")?.map(|s: String| parse_init(&s)).transpose()?;
        let range = layer.get(flags.const_range, "const-range")?;
        let const_range = parse_range(range.as_deref().unwrap_or("0.1:6:60"))?;
        let output = layer.get(flags.output.map(|p| p.display().to_string()), "output")?.map(PathBuf::from);
        let format = match flags.format {
            Some(f) => f,
            None => match file.get("format").map(String::as_str) {
                None | Some("summary") => Format::Summary,
                Some("csv") => Format::Csv,
                Some(other) => return Err(CliError::Usage(format!("config key 'format': unknown value '{other}'"))),
            },
        };
        let threads = layer.get(flags.threads, "threads")?;
        if threads == Some(0) {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        Ok(Self {
            command,
            sigma,
            tol,
            im_cutoff,
            cluster_tol,
            n,
            t_end,
            k,
            max_iters,
            seed,
            init,
            const_range,
            output,
            format,
            threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        let cli = Cli::parse_layers(args).map_err(|e| CliError::Usage(e.to_string()))?;
        RunConfig::resolve(cli.command.unwrap(), cli.opts)
    }

    #[test]
    fn flag_parse_uses_defaults() {
        let cfg = parse(&["gtspec", "gap", "--sigma-const", "2"]).unwrap();
        assert_eq!(cfg.command, Command::Gap);
        assert_eq!(cfg.sigma, Some(SigmaSource::Const(2.0)));
        assert_eq!((cfg.tol, cfg.cluster_tol, cfg.k, cfg.max_iters), (1e-10, 1e-6, 8, 200));
        assert_eq!(cfg.const_range, (0.1, 6.0, 60));
        assert_eq!(cfg.format, Format::Summary);
    }

    #[test]
    fn conflicting_sources_are_rejected() {
        assert!(parse(&["gtspec", "gap", "--sigma-const", "2", "--sigma-file", "p.txt"]).is_err());
    }

    #[test]
    fn config_text_is_strict() {
        assert!(parse_config_text("tol = 1e-8\n# note\n\nk=4").is_ok());
        assert!(parse_config_text("tolerance = 1e-8").unwrap_err().contains("unknown key"));
        assert!(parse_config_text("tol 1e-8").is_err());
        assert!(parse_config_text("tol=1\ntol=2").unwrap_err().contains("duplicate"));
        assert_eq!(parse_config_text("max_iters=3").unwrap()["max-iters"], "3");
    }

    #[test]
    fn negative_tolerance_is_a_usage_error() {
        assert!(matches!(parse(&["gtspec", "gap", "--tol=-1e-8"]), Err(CliError::Usage(_))));
    }

    #[test]
    fn init_and_range_forms() {
        assert_eq!(parse_init("const:5").unwrap(), Init::Const(5.0));
        assert_eq!(parse_init("random:4").unwrap(), Init::Random(4.0));
        assert_eq!(parse_init("file:a.txt").unwrap(), Init::File("a.txt".into()));
        assert!(parse_init("5").is_err());
        assert_eq!(parse_range("0.1:6:60").unwrap(), (0.1, 6.0, 60));
        assert!(parse_range("0.1:6").is_err());
    }
}
