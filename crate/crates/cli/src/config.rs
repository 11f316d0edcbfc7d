//! Run configuration: merging config file sections with command-line flags,
//! typed validation, and the canonical echo written next to the outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use copula_bounds::corrmodels::{CorrelationModel, Family};
use copula_bounds::estimators::Estimator;
use copula_bounds::infobounds::{linspace, Regime, DEFAULT_GRID_POINTS, GRID_TRIM};
use copula_bounds::{Error, MarginSpec, Result};
use ini::{EscapePolicy, Ini, LineSeparator, ParseOption, WriteOption};

pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-10;
pub const DEFAULT_QUADCONV_NS: [usize; 4] = [100, 400, 1600, 6400];
pub const DEFAULT_LAN_REPS: usize = 1000;
pub const DEFAULT_QUADCONV_REPS: usize = 200;
pub const DEFAULT_ESTIMATE_REPS: usize = 1000;
/// Dimension of the default symmetry panel when `p` is not given.
pub const DEFAULT_PANEL_P: usize = 4;

/// Name of the file-level section that applies to every subcommand, as an
/// alternative to keys placed before the first section header.
pub const GENERAL_SECTION: &str = "general";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Bounds,
    Symmetry,
    Lan,
    Quadconv,
    Estimate,
}

impl Subcommand {
    pub const ALL: [Subcommand; 5] = [
        Subcommand::Bounds,
        Subcommand::Symmetry,
        Subcommand::Lan,
        Subcommand::Quadconv,
        Subcommand::Estimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Bounds => "bounds",
            Subcommand::Symmetry => "symmetry",
            Subcommand::Lan => "lan",
            Subcommand::Quadconv => "quadconv",
            Subcommand::Estimate => "estimate",
        }
    }

    /// Keys this subcommand reads, in echo order.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Subcommand::Bounds => &[
                "family",
                "p",
                "theta",
                "grid",
                "regime",
                "differences",
                "out",
                "threads",
            ],
            Subcommand::Symmetry => &["family", "p", "theta", "grid", "tol", "out", "threads"],
            Subcommand::Lan => &[
                "family", "p", "theta", "s", "regime", "n", "reps", "seed", "margins", "out",
                "threads",
            ],
            Subcommand::Quadconv => &[
                "family", "p", "theta", "s", "regime", "n", "reps", "seed", "out", "threads",
            ],
            Subcommand::Estimate => &[
                "family",
                "p",
                "theta",
                "n",
                "reps",
                "seed",
                "estimators",
                "margins",
                "out",
                "threads",
            ],
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Every key known to any subcommand.
pub const ALL_KEYS: [&str; 15] = [
    "family",
    "p",
    "theta",
    "grid",
    "regime",
    "n",
    "reps",
    "seed",
    "margins",
    "out",
    "threads",
    "s",
    "estimators",
    "tol",
    "differences",
];

/// `lo:hi:count`, kept as written for the echo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    /// Grid points for `model`. An endpoint sitting exactly on the domain
    /// boundary is pulled inside by [`GRID_TRIM`]; one beyond it is left for
    /// the domain check to reject.
    pub fn points(&self, model: &CorrelationModel) -> Result<Vec<f64>> {
        let (dlo, dhi) = model.domain_interval().ok_or_else(|| {
            Error::InvalidInput(format!(
                "a grid needs a one-parameter family, {model} has {}",
                model.q()
            ))
        })?;
        let lo = if self.lo == dlo {
            dlo + GRID_TRIM
        } else {
            self.lo
        };
        let hi = if self.hi == dhi {
            dhi - GRID_TRIM
        } else {
            self.hi
        };
        let pts = linspace(lo, hi, self.count);
        if let Some(&bad) = pts.iter().find(|&&t| !model.domain_check(&[t])) {
            return Err(Error::Domain {
                family: model.to_string(),
                theta: vec![bad],
            });
        }
        Ok(pts)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.count)
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("grid must be 'lo:hi:count', got '{s}'"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(bad());
        };
        let lo: f64 = lo.parse().map_err(|_| bad())?;
        let hi: f64 = hi.parse().map_err(|_| bad())?;
        let count: usize = count.parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite()) || count == 0 || (count > 1 && hi <= lo) {
            return Err(Error::InvalidInput(format!(
                "grid '{s}' needs finite lo < hi and count ≥ 1"
            )));
        }
        Ok(GridSpec { lo, hi, count })
    }
}

/// Fully resolved settings for one run. Fields a subcommand does not read
/// keep their defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Subcommand,
    /// `None` only for `symmetry`, which then runs its default panel.
    pub model: Option<CorrelationModel>,
    /// Dimension as given; sizes the default symmetry panel.
    pub p: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub grid: Option<GridSpec>,
    pub regimes: Vec<Regime>,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub seed: Option<u64>,
    pub margins: MarginSpec,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub s: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub tol: f64,
    pub differences: bool,
}

/// Raw `key = value` pairs after merging, before typing.
pub type RawConfig = BTreeMap<String, String>;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn parse_options() -> ParseOption {
    ParseOption {
        enabled_quote: false,
        enabled_escape: false,
        ..ParseOption::default()
    }
}

/// Keys from the general part of `text` overlaid by the `[command]` section.
/// Sections for other subcommands are checked for unknown keys but otherwise
/// ignored.
pub fn read_config_text(text: &str, command: Subcommand) -> Result<RawConfig> {
    let ini = Ini::load_from_str_opt(text, parse_options())
        .map_err(|e| invalid(format!("config: {e}")))?;
    let mut general = RawConfig::new();
    let mut own = RawConfig::new();
    for (section, props) in ini.iter() {
        let target = match section {
            None | Some(GENERAL_SECTION) => &mut general,
            Some(name) if name == command.name() => &mut own,
            Some(name) if Subcommand::ALL.iter().any(|c| c.name() == name) => {
                for (k, _) in props.iter() {
                    check_known(k, Some(name))?;
                }
                continue;
            }
            Some(name) => return Err(invalid(format!("config: unknown section [{name}]"))),
        };
        for (k, v) in props.iter() {
            check_known(k, section)?;
            if target.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(invalid(format!(
                    "config: key '{k}' repeated in {}",
                    section_label(section)
                )));
            }
        }
    }
    for k in own.keys() {
        if !command.keys().contains(&k.as_str()) {
            return Err(invalid(format!(
                "config: key '{k}' is not used by {command}"
            )));
        }
    }
    general.retain(|k, _| command.keys().contains(&k.as_str()));
    general.extend(own);
    Ok(general)
}

fn section_label(section: Option<&str>) -> String {
    section.map_or_else(|| "the general section".to_string(), |s| format!("[{s}]"))
}

fn check_known(key: &str, section: Option<&str>) -> Result<()> {
    if ALL_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(invalid(format!(
            "config: unknown key '{key}' in {}",
            section_label(section)
        )))
    }
}

pub fn read_config_file(path: &Path, command: Subcommand) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
    read_config_text(&text, command)
}

/// Apply command-line values on top of `raw`. Flags the subcommand does not
/// read are rejected.
pub fn apply_overrides(
    raw: &mut RawConfig,
    command: Subcommand,
    flags: Vec<(&'static str, String)>,
) -> Result<()> {
    for (k, v) in flags {
        if !command.keys().contains(&k) {
            return Err(invalid(format!("--{k} is not used by {command}")));
        }
        raw.insert(k.to_string(), v.trim().to_string());
    }
    Ok(())
}

fn list<T>(value: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|item| {
            parse(item.trim())
                .ok_or_else(|| invalid(format!("bad {what} '{}' in '{value}'", item.trim())))
        })
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(invalid(format!("empty {what} list")));
    }
    Ok(items)
}

fn floats(value: &str, what: &str) -> Result<Vec<f64>> {
    list(value, what, |s| {
        s.parse::<f64>().ok().filter(|x| x.is_finite())
    })
}

fn parse_usize(value: &str, key: &str) -> Result<usize> {
    value.parse().map_err(|_| {
        invalid(format!(
            "{key} must be a non-negative integer, got '{value}'"
        ))
    })
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!(
            "{key} must be true or false, got '{value}'"
        ))),
    }
}

/// `family` may carry its own dimension (`ar1:4`); `bivariate` and
/// `circular` imply theirs.
fn resolve_model(family: &str, p: Option<usize>) -> Result<CorrelationModel> {
    let family = family.trim();
    let model = if family.contains(':') || family.eq_ignore_ascii_case("bivariate") {
        family.parse::<CorrelationModel>()?
    } else {
        let fam: Family = family.parse()?;
        match (fam, p) {
            (Family::Circular, None) => CorrelationModel::circular(),
            (_, Some(p)) => CorrelationModel::new(fam, p)?,
            (_, None) => return Err(invalid(format!("family '{fam}' needs --p"))),
        }
    };
    if let Some(p) = p {
        if p != model.p() {
            return Err(invalid(format!(
                "family '{family}' has dimension {}, but p = {p}",
                model.p()
            )));
        }
    }
    Ok(model)
}

impl RunConfig {
    /// Type and validate the merged key-value pairs.
    pub fn resolve(command: Subcommand, raw: &RawConfig) -> Result<Self> {
        let get = |k: &str| raw.get(k).map(String::as_str).filter(|v| !v.is_empty());
        let p = get("p").map(|v| parse_usize(v, "p")).transpose()?;
        let model = match get("family") {
            Some(f) => Some(resolve_model(f, p)?),
            None if command == Subcommand::Symmetry => None,
            None => return Err(invalid(format!("{command} needs --family"))),
        };
        let theta = get("theta").map(|v| floats(v, "theta")).transpose()?;
        let grid = get("grid").map(str::parse::<GridSpec>).transpose()?;
        if theta.is_some() && grid.is_some() {
            return Err(invalid("give either theta or grid, not both"));
        }
        let regimes = match get("regime") {
            Some(v) => list(v, "regime", |s| s.parse().ok())?,
            None if command == Subcommand::Bounds => Regime::ALL.to_vec(),
            None => vec![Regime::Unequal],
        };
        let ns = match get("n") {
            Some(v) => list(v, "sample size", |s| s.parse().ok())?,
            None if command == Subcommand::Quadconv => DEFAULT_QUADCONV_NS.to_vec(),
            None if matches!(command, Subcommand::Lan | Subcommand::Estimate) => {
                return Err(invalid(format!("{command} needs --n")))
            }
            None => vec![],
        };
        let reps = match get("reps") {
            Some(v) => parse_usize(v, "reps")?,
            None => match command {
                Subcommand::Lan => DEFAULT_LAN_REPS,
                Subcommand::Quadconv => DEFAULT_QUADCONV_REPS,
                Subcommand::Estimate => DEFAULT_ESTIMATE_REPS,
                _ => 0,
            },
        };
        let seed = get("seed")
            .map(|v| {
                v.parse::<u64>().map_err(|_| {
                    invalid(format!("seed must be a 64-bit unsigned integer, got '{v}'"))
                })
            })
            .transpose()?;
        let margins = get("margins")
            .map(str::parse::<MarginSpec>)
            .transpose()?
            .unwrap_or_default();
        let out = get("out").map(PathBuf::from);
        let threads = get("threads")
            .map(|v| parse_usize(v, "threads"))
            .transpose()?;
        if threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        let q = model.as_ref().map_or(1, CorrelationModel::q);
        let s = match get("s") {
            Some(v) => floats(v, "s")?,
            None => vec![1.0; q],
        };
        let estimators = match get("estimators") {
            Some(v) => list(v, "estimator", |s| s.parse().ok())?,
            None => match &model {
                Some(m) if m.p() == 2 => Estimator::ALL.to_vec(),
                _ => vec![Estimator::OneStep],
            },
        };
        let tol = match get("tol") {
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|t| *t >= 0.0)
                .ok_or_else(|| invalid(format!("bad tol '{v}'")))?,
            None => DEFAULT_SYMMETRY_TOL,
        };
        let differences = get("differences")
            .map(|v| parse_bool(v, "differences"))
            .transpose()?
            .unwrap_or(false);

        let config = RunConfig {
            command,
            model,
            p,
            theta,
            grid,
            regimes,
            ns,
            reps,
            seed,
            margins,
            out,
            threads,
            s,
            estimators,
            tol,
            differences,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let randomized = matches!(
            self.command,
            Subcommand::Lan | Subcommand::Quadconv | Subcommand::Estimate
        );
        if randomized {
            if self.seed.is_none() {
                return Err(invalid(format!(
                    "{} needs an explicit --seed",
                    self.command
                )));
            }
            if self.grid.is_some() {
                return Err(invalid(format!(
                    "{} takes a single theta, not a grid",
                    self.command
                )));
            }
            let model = self.model()?;
            let theta = self
                .theta
                .as_ref()
                .ok_or_else(|| invalid(format!("{} needs --theta", self.command)))?;
            if theta.len() != model.q() {
                return Err(Error::Shape(format!(
                    "{model} has {} parameters, theta has {}",
                    model.q(),
                    theta.len()
                )));
            }
            if !model.domain_check(theta) {
                return Err(Error::Domain {
                    family: model.to_string(),
                    theta: theta.clone(),
                });
            }
            if self.ns.iter().any(|&n| n < 2) {
                return Err(invalid("sample sizes must be at least 2"));
            }
        }
        match self.command {
            Subcommand::Lan | Subcommand::Quadconv => {
                let model = self.model()?;
                if self.s.len() != model.q() {
                    return Err(Error::Shape(format!(
                        "{model} has {} parameters, s has {}",
                        model.q(),
                        self.s.len()
                    )));
                }
                if self.regimes.len() != 1 {
                    return Err(invalid(format!("{} takes a single regime", self.command)));
                }
                if self.command == Subcommand::Lan && self.ns.len() != 1 {
                    return Err(invalid("lan takes a single sample size"));
                }
            }
            Subcommand::Estimate if self.ns.len() != 1 => {
                return Err(invalid("estimate takes a single sample size"))
            }
            Subcommand::Bounds => {
                let model = self.model()?;
                if model.q() != 1 {
                    return Err(invalid(format!(
                        "bounds needs a one-parameter family, {model} has {}",
                        model.q()
                    )));
                }
                if self.differences && self.regimes.len() != Regime::ALL.len() {
                    return Err(invalid("--differences needs all three regimes"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn model(&self) -> Result<&CorrelationModel> {
        self.model
            .as_ref()
            .ok_or_else(|| invalid(format!("{} needs --family", self.command)))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| invalid(format!("{} needs an explicit --seed", self.command)))
    }

    /// The θ values a grid-type command visits for `model`: an explicit
    /// `theta` list, the `grid`, or the family's default grid.
    pub fn grid_points(&self, model: &CorrelationModel) -> Result<Vec<Vec<f64>>> {
        if model.q() != 1 {
            let theta = self.theta.as_ref().ok_or_else(|| {
                invalid(format!(
                    "{model} has {} parameters; give one point with --theta",
                    model.q()
                ))
            })?;
            if theta.len() != model.q() {
                return Err(Error::Shape(format!(
                    "{model} has {} parameters, theta has {}",
                    model.q(),
                    theta.len()
                )));
            }
            if !model.domain_check(theta) {
                return Err(Error::Domain {
                    family: model.to_string(),
                    theta: theta.clone(),
                });
            }
            return Ok(vec![theta.clone()]);
        }
        let pts = match (&self.theta, &self.grid) {
            (Some(t), _) => {
                if let Some(&bad) = t.iter().find(|&&x| !model.domain_check(&[x])) {
                    return Err(Error::Domain {
                        family: model.to_string(),
                        theta: vec![bad],
                    });
                }
                t.clone()
            }
            (None, Some(g)) => g.points(model)?,
            (None, None) => copula_bounds::infobounds::default_grid(model, DEFAULT_GRID_POINTS)?,
        };
        Ok(pts.into_iter().map(|t| vec![t]).collect())
    }

    /// Canonical `key = value` pairs; reading them back yields the same
    /// config. Keys left at "not given" are omitted.
    pub fn canonical(&self) -> Vec<(&'static str, String)> {
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut pairs = Vec::new();
        for &key in self.command.keys() {
            let value = match key {
                "family" => self.model.as_ref().map(|m| m.family().name().to_string()),
                "p" => self
                    .model
                    .as_ref()
                    .map(CorrelationModel::p)
                    .or(self.p)
                    .map(|p| p.to_string()),
                "theta" => self.theta.as_deref().map(join),
                "grid" => self.grid.map(|g| g.to_string()),
                "regime" => Some(
                    self.regimes
                        .iter()
                        .map(|r| r.name())
                        .collect::<Vec<_>>()
                        .join(","),
                ),
                "n" => Some(
                    self.ns
                        .iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(","),
                ),
                "reps" => Some(self.reps.to_string()),
                "seed" => self.seed.map(|s| s.to_string()),
                "margins" => Some(self.margins.to_string()),
                "out" => self.out.as_ref().map(|p| p.display().to_string()),
                "threads" => self.threads.map(|t| t.to_string()),
                "s" => Some(join(&self.s)),
                "estimators" => Some(
                    self.estimators
                        .iter()
                        .map(|e| e.name())
                        .collect::<Vec<_>>()
                        .join(","),
                ),
                "tol" => Some(self.tol.to_string()),
                "differences" => Some(self.differences.to_string()),
                _ => None,
            };
            if let Some(v) = value {
                pairs.push((key, v));
            }
        }
        pairs
    }

    /// Write the canonical config under a `[command]` section.
    pub fn write_ini<W: Write>(&self, mut out: W) -> Result<()> {
        let mut ini = Ini::new();
        {
            let mut section = ini.with_section(Some(self.command.name()));
            for (k, v) in self.canonical() {
                section.set(k, v);
            }
        }
        let opt = WriteOption {
            escape_policy: EscapePolicy::Nothing,
            line_separator: LineSeparator::CR,
            kv_separator: " = ",
        };
        ini.write_to_opt(&mut out, opt)?;
        Ok(())
    }
}
