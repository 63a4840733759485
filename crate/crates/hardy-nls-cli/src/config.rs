use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use hardy_nls::grid::GridSpec;
use hardy_nls::nls_sim::{Direction, RunSpec};
use hardy_nls::{Error, Params, Result};

/// Environment variable holding the output root.
pub const OUT_ENV: &str = "HARDY_NLS_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub d: u32,
    pub p: f64,
    pub a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shooting {
    pub rtol: f64,
    pub tol_b: f64,
    /// Bisection bracket; widened from `(0.1, 10)` when absent.
    pub bracket: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub r_min: f64,
    pub r_max: f64,
    pub nodes: usize,
}

impl Grid {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::with_nodes(self.r_min, self.r_max, self.nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub b_min: f64,
    pub b_max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolution {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub delta: f64,
    pub direction: Option<Direction>,
    #[serde(rename = "R")]
    pub radius: f64,
    pub record_every: usize,
    pub reverse: bool,
    pub project: bool,
}

impl Evolution {
    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            dt: self.dt,
            t_end: self.t_end,
            delta: self.delta,
            direction: self.direction,
            record_every: self.record_every,
            radius: self.radius,
            reverse: self.reverse,
            project: self.project,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gn {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    /// Output directory, relative to the output root.
    pub dir: PathBuf,
    /// Also write a gnuplot script next to the data.
    pub plot: bool,
}

/// Fully resolved configuration of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub shooting: Shooting,
    pub grid: Grid,
    pub scan: Scan,
    /// Number of eigenpairs reported per operator.
    pub eigen_count: usize,
    pub evolution: Evolution,
    pub gn: Gn,
    /// Directory with `profile.csv` and `profile.json`; computed when absent.
    pub profile: Option<PathBuf>,
    pub output: Output,
}

impl RunConfig {
    pub fn params(&self) -> Result<Params> {
        Params::new(self.problem.d, self.problem.p, self.problem.a)
    }

    /// Checks everything that does not need a computation.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.grid.spec()?;
        let s = &self.shooting;
        if !(s.rtol > 0.0 && s.rtol < 1e-3) {
            return Err(Error::InvalidArgument(format!("rtol must lie in (0, 1e-3), got {}", s.rtol)));
        }
        if !(s.tol_b > 0.0) {
            return Err(Error::InvalidArgument(format!("tol_b must be positive, got {}", s.tol_b)));
        }
        if let Some((lo, hi)) = s.bracket {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::InvalidArgument(format!("bad bracket ({lo}, {hi})")));
            }
        }
        let sc = &self.scan;
        if sc.count > 0 && !(sc.b_min > 0.0 && sc.b_max >= sc.b_min) {
            return Err(Error::InvalidArgument(format!(
                "scan range must satisfy 0 < b_min <= b_max, got [{}, {}]",
                sc.b_min, sc.b_max
            )));
        }
        if self.eigen_count == 0 {
            return Err(Error::InvalidArgument("eigen_count must be at least 1".into()));
        }
        self.evolution.run_spec().validate()
    }

    /// Output directory under `root`.
    pub fn out_dir(&self, root: &Path) -> PathBuf {
        root.join(&self.output.dir)
    }
}

/// Command-line flags; every one is optional and falls back to the
/// defaults of [`RunConfig`].
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration; its entries override the flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<u32>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub rtol: Option<f64>,
    #[arg(long)]
    pub tol_b: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub bracket: Option<Vec<f64>>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub b_min: Option<f64>,
    #[arg(long)]
    pub b_max: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub eigen_count: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "T", id = "t_end")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// stable_minus, stable_plus, unstable_plus or unstable_minus.
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long = "R", id = "radius")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub reverse: bool,
    /// Skip the projection onto the mass-energy surface of Q.
    #[arg(long)]
    pub no_project: bool,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Profile directory written by `ground-state`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Output directory relative to the output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Emit a gnuplot script.
    #[arg(long)]
    pub plot: bool,
}

fn defaults(command: &str) -> RunConfig {
    RunConfig {
        problem: Problem { d: 3, p: 2.0, a: -0.1 },
        shooting: Shooting {
            rtol: 1e-12,
            tol_b: 1e-10,
            bracket: None,
        },
        grid: Grid {
            r_min: 1e-6,
            r_max: 30.0,
            nodes: 8001,
        },
        scan: Scan {
            b_min: 0.1,
            b_max: 10.0,
            count: 200,
        },
        eigen_count: 4,
        evolution: Evolution {
            dt: 1e-3,
            t_end: 1.0,
            delta: 1e-3,
            direction: None,
            radius: 20.0,
            record_every: 10,
            reverse: false,
            project: true,
        },
        gn: Gn { trials: 100, seed: 1 },
        profile: None,
        output: Output {
            dir: PathBuf::from(command),
            plot: false,
        },
    }
}

fn parse_direction(s: &str) -> Result<Option<Direction>> {
    if s == "none" {
        return Ok(None);
    }
    serde_json::from_value(Value::String(s.to_string()))
        .map(Some)
        .map_err(|_| Error::InvalidArgument(format!("unknown direction {s:?}")))
}

/// Recursively replaces entries of `base` by those of `over`.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults, then flags, then the `--config` file.
pub fn resolve(command: &str, flags: &Flags) -> Result<RunConfig> {
    let mut c = defaults(command);
    if let Some(v) = flags.d {
        c.problem.d = v;
    }
    if let Some(v) = flags.p {
        c.problem.p = v;
    }
    if let Some(v) = flags.a {
        c.problem.a = v;
    }
    if let Some(v) = flags.rtol {
        c.shooting.rtol = v;
    }
    if let Some(v) = flags.tol_b {
        c.shooting.tol_b = v;
    }
    if let Some(v) = &flags.bracket {
        c.shooting.bracket = Some((v[0], v[1]));
    }
    if let Some(v) = flags.r_min {
        c.grid.r_min = v;
    }
    if let Some(v) = flags.r_max {
        c.grid.r_max = v;
    }
    if let Some(v) = flags.nodes {
        c.grid.nodes = v;
    }
    if let Some(v) = flags.b_min {
        c.scan.b_min = v;
    }
    if let Some(v) = flags.b_max {
        c.scan.b_max = v;
    }
    if let Some(v) = flags.count {
        c.scan.count = v;
    }
    if let Some(v) = flags.eigen_count {
        c.eigen_count = v;
    }
    if let Some(v) = flags.dt {
        c.evolution.dt = v;
    }
    if let Some(v) = flags.t_end {
        c.evolution.t_end = v;
    }
    if let Some(v) = flags.delta {
        c.evolution.delta = v;
    }
    if let Some(v) = &flags.direction {
        c.evolution.direction = parse_direction(v)?;
    }
    if let Some(v) = flags.radius {
        c.evolution.radius = v;
    }
    if let Some(v) = flags.record_every {
        c.evolution.record_every = v;
    }
    if flags.reverse {
        c.evolution.reverse = true;
    }
    if flags.no_project {
        c.evolution.project = false;
    }
    if let Some(v) = flags.trials {
        c.gn.trials = v;
    }
    if let Some(v) = flags.seed {
        c.gn.seed = v;
    }
    if let Some(v) = &flags.profile {
        c.profile = Some(v.clone());
    }
    if let Some(v) = &flags.out {
        c.output.dir = v.clone();
    }
    if flags.plot {
        c.output.plot = true;
    }
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)?;
        let over: Value =
            serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        let mut base = serde_json::to_value(&c)?;
        merge(&mut base, over);
        c = serde_json::from_value(base).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    }
    c.validate()?;
    Ok(c)
}
