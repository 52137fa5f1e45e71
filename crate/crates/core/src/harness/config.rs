use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algorithms::Algorithm;
use crate::error::{Error, Result};

/// Serde adapter for types with a textual form (`FromStr` + `Display`).
mod text {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphSpec {
    Ring,
    Complete,
    ErdosRenyi(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleSpec {
    /// Theoretical `beta_0 / sqrt(k + 1)`.
    Diminishing,
    /// Theoretical constant stepsize of the chosen method.
    Constant,
    /// Practical `beta_hat`, rescaled by the sample sizes.
    User(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Synthetic { d: usize, r: usize, m: usize, gap: f64 },
    Dsv { path: PathBuf, r: usize, divisor: f64 },
}

impl ProblemSpec {
    pub fn r(&self) -> usize {
        match self {
            ProblemSpec::Synthetic { r, .. } | ProblemSpec::Dsv { r, .. } => *r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitSpec {
    /// One random point copied to every agent.
    Shared,
    /// An independent random point per agent.
    Independent,
}

/// How a user `beta_hat` becomes a DRSGD stepsize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrsgdScaling {
    /// `beta_hat / sqrt(max_epochs)` per sample.
    Epochs,
    /// `beta_hat sqrt(n) / (10000 sqrt(300))` per sample.
    Speedup,
}

/// Splits `name(a, b, ...)` into the name and trimmed arguments.
fn call_syntax(s: &str) -> Option<(&str, Vec<&str>)> {
    let s = s.trim();
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    Some((s[..open].trim(), args))
}

fn parse_num<T: FromStr>(what: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("{what}: cannot parse `{s}`")))
}

impl FromStr for GraphSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ring" => return Ok(GraphSpec::Ring),
            "complete" => return Ok(GraphSpec::Complete),
            _ => {}
        }
        match call_syntax(s) {
            Some((name, args)) if name.eq_ignore_ascii_case("er") && args.len() == 1 => {
                Ok(GraphSpec::ErdosRenyi(parse_num("graph er(p)", args[0])?))
            }
            _ => Err(Error::Config(format!(
                "graph: unknown topology `{s}` (expected ring, complete or er(p))"
            ))),
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Ring => f.write_str("ring"),
            GraphSpec::Complete => f.write_str("complete"),
            GraphSpec::ErdosRenyi(p) => write!(f, "er({p:?})"),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diminishing" => return Ok(ScheduleSpec::Diminishing),
            "constant" => return Ok(ScheduleSpec::Constant),
            _ => {}
        }
        match call_syntax(s) {
            Some((name, args)) if name.eq_ignore_ascii_case("user") && args.len() == 1 => {
                Ok(ScheduleSpec::User(parse_num("schedule user(beta_hat)", args[0])?))
            }
            _ => Err(Error::Config(format!(
                "schedule: unknown kind `{s}` (expected diminishing, constant or user(beta_hat))"
            ))),
        }
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleSpec::Diminishing => f.write_str("diminishing"),
            ScheduleSpec::Constant => f.write_str("constant"),
            ScheduleSpec::User(b) => write!(f, "user({b:?})"),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "problem: cannot parse `{s}` (expected synthetic(d, r, m, gap) or dsv(path, r, divisor))"
            ))
        };
        let (name, args) = call_syntax(s).ok_or_else(bad)?;
        match (name.to_ascii_lowercase().as_str(), args.len()) {
            ("synthetic", 4) => Ok(ProblemSpec::Synthetic {
                d: parse_num("problem d", args[0])?,
                r: parse_num("problem r", args[1])?,
                m: parse_num("problem m", args[2])?,
                gap: parse_num("problem gap", args[3])?,
            }),
            ("dsv", 3) => Ok(ProblemSpec::Dsv {
                path: PathBuf::from(args[0].trim_matches(|c| c == '"' || c == '\'')),
                r: parse_num("problem r", args[1])?,
                divisor: parse_num("problem divisor", args[2])?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemSpec::Synthetic { d, r, m, gap } => write!(f, "synthetic({d}, {r}, {m}, {gap:?})"),
            ProblemSpec::Dsv { path, r, divisor } => write!(f, "dsv({}, {r}, {divisor:?})", path.display()),
        }
    }
}

/// Everything needed to reproduce one experiment. Loaded from TOML with
/// the same field names as the command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(with = "text")]
    pub algorithm: Algorithm,
    #[serde(with = "text")]
    pub graph: GraphSpec,
    pub n: usize,
    /// Communication rounds per iteration; 0 picks the theoretical minimum.
    pub t: usize,
    /// Consensus stepsize; 0 picks `alpha_bar`.
    pub alpha: f64,
    #[serde(with = "text")]
    pub schedule: ScheduleSpec,
    #[serde(with = "text")]
    pub problem: ProblemSpec,
    pub max_iters: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub tol_ds: Option<f64>,
    pub tol_grad: Option<f64>,
    pub tol_consensus: Option<f64>,
    pub seed: u64,
    pub init: InitSpec,
    /// Norm of the tangent noise added to each agent's initial point.
    pub perturb: f64,
    pub drsgd_scaling: DrsgdScaling,
    /// Apply `W` round by round instead of a precomputed `W^t`.
    pub gossip: bool,
    pub timing: bool,
    /// Where the log goes; not echoed, so logs of one run written to
    /// different files stay identical.
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Drgta,
            graph: GraphSpec::Ring,
            n: 8,
            t: 1,
            alpha: 1.0,
            schedule: ScheduleSpec::User(0.05),
            problem: ProblemSpec::Synthetic {
                d: 30,
                r: 5,
                m: 100,
                gap: 0.8,
            },
            max_iters: 10_000,
            max_epochs: 200,
            batch_size: 1,
            tol_ds: None,
            tol_grad: None,
            tol_consensus: None,
            seed: 0,
            init: InitSpec::Shared,
            perturb: 0.0,
            drsgd_scaling: DrsgdScaling::Epochs,
            gossip: false,
            timing: false,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are plain TOML values")
    }

    /// Recovers the configuration echoed into a run log header.
    pub fn from_log_header(log: &str) -> Result<Self> {
        let mut body = String::new();
        let mut inside = false;
        for line in log.lines() {
            let Some(rest) = line.strip_prefix('#') else { break };
            let rest = rest.strip_prefix(' ').unwrap_or(rest);
            if rest.starts_with('[') {
                inside = rest == CONFIG_SECTION;
                continue;
            }
            if inside {
                body.push_str(rest);
                body.push('\n');
            }
        }
        if body.is_empty() {
            return Err(Error::Config("log header carries no configuration".into()));
        }
        Self::from_toml_str(&body)
    }

    /// Field-level range checks.
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, reason: String| Err(Error::Config(format!("{field}: {reason}")));
        if self.n == 0 {
            return fail("n", "at least one agent is required".into());
        }
        if let GraphSpec::ErdosRenyi(p) = self.graph {
            if !(p > 0.0 && p <= 1.0) {
                return fail("graph", format!("edge probability {p} outside (0, 1]"));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha", format!("{} must be nonnegative (0 = auto)", self.alpha));
        }
        if let ScheduleSpec::User(b) = self.schedule {
            if !(b > 0.0 && b.is_finite()) {
                return fail("schedule", format!("beta_hat {b} must be positive"));
            }
        }
        match &self.problem {
            ProblemSpec::Synthetic { d, r, m, gap } => {
                if *r == 0 || r > d {
                    return fail("problem", format!("need 1 <= r <= d, got d = {d}, r = {r}"));
                }
                if *m == 0 {
                    return fail("problem", "m must be positive".into());
                }
                if !(*gap > 0.0 && *gap <= 1.0) {
                    return fail("problem", format!("gap {gap} outside (0, 1]"));
                }
            }
            ProblemSpec::Dsv { r, divisor, .. } => {
                if *r == 0 {
                    return fail("problem", "r must be positive".into());
                }
                if !(*divisor > 0.0 && divisor.is_finite()) {
                    return fail("problem", format!("divisor {divisor} must be positive"));
                }
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be positive".into());
        }
        if self.algorithm == Algorithm::Drsgd && self.max_epochs == 0 {
            return fail("max_epochs", "must be positive".into());
        }
        for (field, tol) in [
            ("tol_ds", self.tol_ds),
            ("tol_grad", self.tol_grad),
            ("tol_consensus", self.tol_consensus),
        ] {
            if let Some(v) = tol {
                if !(v > 0.0) {
                    return fail(field, format!("{v} must be positive"));
                }
            }
        }
        if !(self.perturb >= 0.0 && self.perturb.is_finite()) {
            return fail("perturb", format!("{} must be nonnegative", self.perturb));
        }
        Ok(())
    }

    /// Problems with the configuration that do not stop a run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.algorithm == Algorithm::Drgta && self.schedule == ScheduleSpec::Diminishing {
            out.push("drgta with a diminishing schedule gives up exact convergence".into());
        }
        if self.algorithm == Algorithm::Drcs && self.schedule != ExperimentConfig::default().schedule {
            out.push("drcs takes no gradient steps; the schedule is ignored".into());
        }
        out
    }
}

pub(crate) const CONFIG_SECTION: &str = "[config]";
