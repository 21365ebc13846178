//! Command-line front end.
//!
//! Settings come from flags, then an optional JSON file given by `--config`, then
//! the `PERCGAME_SEED` environment variable (seed only), then built-in defaults.
//! Exit status: 0 on success, 2 on invalid input, 3 when an iteration does not
//! converge, 1 on any other failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::criteria::{
    duration_criterion, kappa2_draw_zero, kappa3_bounds, kappa3_contraction_holds,
    kappa3_p0_zero_check, kappa3_special_ratio, p0_zero_product, special_ratio_alpha,
};
use crate::error::{invalid, Error, Result};
use crate::fixpoint::{
    analytic_iterates, classify_draw, default_seeds, find_fixed_points, solve, DrawVerdict,
    EdgeWeightLaw, FixedPointOptions, GameSpec, SolveOptions, DEFAULT_CLUSTER_RADIUS,
    DEFAULT_DRAW_EPSILON, DEFAULT_MAX_ITER, DEFAULT_POSITIVE_THRESHOLD, DEFAULT_TOL,
};
use crate::offspring::OffspringDistribution;
use crate::oracle::{estimate_probs, OracleOptions, DEFAULT_NODE_CAP};

/// Environment variable supplying a default seed.
pub const SEED_ENV: &str = "PERCGAME_SEED";

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for failures other than validation and convergence.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for invalid input.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for non-convergence.
pub const EXIT_NON_CONVERGENCE: i32 = 3;

/// Subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Solve,
    FixedPoints,
    CheckKappa2,
    CheckKappa3,
    CheckSpecial,
    Duration,
    Simulate,
    Sweep,
}

/// Output encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(
    name = "percgame",
    version,
    about = "Percolation games on edge-weighted Galton-Watson trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Loss, win and draw matrices by monotone iteration.
    Solve(Flags),
    /// Distinct fixed points reached from the default seed grid.
    FixedPoints(Flags),
    /// Exact zero-draw test at kappa = 2.
    CheckKappa2(Flags),
    /// Contraction bounds at kappa = 3.
    CheckKappa3(Flags),
    /// Special-law tests at kappa = 3 (binary tree ratio law, or p0 = 0).
    CheckSpecial(Flags),
    /// Finite expected duration row-sum test.
    Duration(Flags),
    /// Monte-Carlo estimates from sampled trees.
    Simulate(Flags),
    /// Run solve, check-kappa2 or check-kappa3 over a grid.
    Sweep(Flags),
}

#[derive(clap::Args, Debug, Default, Clone)]
struct Flags {
    /// JSON config file; flags take precedence over its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Offspring family: dirac, uniform_range, binomial, poisson, neg_binomial, geometric, two_point, explicit.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    r: Option<u32>,
    #[arg(long)]
    d: Option<u32>,
    /// Explicit pmf as comma-separated probabilities.
    #[arg(long, value_delimiter = ',')]
    pmf: Option<Vec<f64>>,
    #[arg(long)]
    kappa: Option<u32>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<u64>,
    #[arg(long)]
    draw_epsilon: Option<f64>,
    #[arg(long)]
    positive_threshold: Option<f64>,
    #[arg(long)]
    cluster_radius: Option<f64>,
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    node_cap: Option<usize>,
    /// Ratio for the binary-tree law 1 : alpha : alpha^2.
    #[arg(long)]
    alpha: Option<f64>,
    /// Also count fixed points (check-kappa3).
    #[arg(long)]
    count_fixed_points: bool,
    /// Command run at every sweep point.
    #[arg(long, value_enum)]
    sweep_command: Option<CommandKind>,
    /// Sweep grid as `p0:p1` pairs separated by commas.
    #[arg(long)]
    grid: Option<String>,
    /// Values of the family's main parameter to sweep over.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Maximum worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Sweep settings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub command: Option<CommandKind>,
    #[serde(default)]
    pub grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub dists: Vec<OffspringDistribution>,
}

/// Contents of a `--config` file; every field is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dist: Option<OffspringDistribution>,
    pub kappa: Option<u32>,
    pub p0: Option<f64>,
    pub p1: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<u64>,
    pub draw_epsilon: Option<f64>,
    pub positive_threshold: Option<f64>,
    pub cluster_radius: Option<f64>,
    pub horizon: Option<u32>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub node_cap: Option<usize>,
    pub alpha: Option<f64>,
    pub count_fixed_points: Option<bool>,
    pub jobs: Option<usize>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub sweep: Option<SweepConfig>,
}

/// Fully resolved run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub dist: Option<OffspringDistribution>,
    pub kappa: Option<u32>,
    pub p0: Option<f64>,
    pub p1: Option<f64>,
    pub tol: f64,
    pub max_iter: u64,
    pub draw_epsilon: f64,
    pub positive_threshold: f64,
    pub cluster_radius: f64,
    pub horizon: Option<u32>,
    pub samples: u64,
    pub seed: u64,
    pub node_cap: usize,
    pub alpha: Option<f64>,
    pub count_fixed_points: bool,
    pub jobs: Option<usize>,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub sweep: SweepConfig,
}

fn need<T: Copy>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| invalid(field, "missing"))
}

fn dist_from_flags(f: &Flags) -> Result<Option<OffspringDistribution>> {
    let Some(family) = f.family.as_deref() else {
        return Ok(None);
    };
    let d = match family {
        "dirac" => OffspringDistribution::dirac(need(f.m, "m")?),
        "uniform_range" | "uniform" => OffspringDistribution::uniform_range(need(f.m, "m")?),
        "binomial" => OffspringDistribution::binomial(need(f.n, "n")?, need(f.pi, "pi")?),
        "poisson" => OffspringDistribution::poisson(need(f.lambda, "lambda")?),
        "neg_binomial" | "negbinomial" => {
            OffspringDistribution::neg_binomial(need(f.r, "r")?, need(f.pi, "pi")?)
        }
        "geometric" => OffspringDistribution::geometric(need(f.pi, "pi")?),
        "two_point" | "twopoint" => {
            OffspringDistribution::two_point(need(f.pi, "pi")?, need(f.d, "d")?)
        }
        "explicit" => {
            OffspringDistribution::explicit(f.pmf.clone().ok_or_else(|| invalid("pmf", "missing"))?)
        }
        other => return Err(invalid("family", format!("unknown family `{other}`"))),
    }?;
    Ok(Some(d))
}

fn parse_grid(s: &str) -> Result<Vec<[f64; 2]>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| invalid("grid", format!("`{pair}` is not of the form p0:p1")))?;
            let p0 = a
                .trim()
                .parse()
                .map_err(|_| invalid("grid", format!("bad p0 `{a}`")))?;
            let p1 = b
                .trim()
                .parse()
                .map_err(|_| invalid("grid", format!("bad p1 `{b}`")))?;
            Ok([p0, p1])
        })
        .collect()
}

fn with_main_param(d: &OffspringDistribution, v: f64) -> Result<OffspringDistribution> {
    let as_int = |field: &str| -> Result<u32> {
        if v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
            Ok(v as u32)
        } else {
            Err(invalid(field, format!("{v} is not a non-negative integer")))
        }
    };
    let out = match d {
        OffspringDistribution::Dirac { .. } => OffspringDistribution::Dirac { m: as_int("m")? },
        OffspringDistribution::UniformRange { .. } => {
            OffspringDistribution::UniformRange { m: as_int("m")? }
        }
        OffspringDistribution::Binomial { pi, .. } => OffspringDistribution::Binomial {
            n: as_int("n")?,
            pi: *pi,
        },
        OffspringDistribution::Poisson { .. } => OffspringDistribution::Poisson { lambda: v },
        OffspringDistribution::NegBinomial { pi, .. } => OffspringDistribution::NegBinomial {
            r: as_int("r")?,
            pi: *pi,
        },
        OffspringDistribution::TwoPoint { pi, .. } => OffspringDistribution::TwoPoint {
            pi: *pi,
            d: as_int("d")?,
        },
        OffspringDistribution::Explicit { .. } => {
            return Err(invalid("values", "explicit laws have no main parameter"))
        }
    };
    out.validate()?;
    Ok(out)
}

fn flags_with_main_param(f: &Flags, v: f64) -> Result<Flags> {
    let as_int = |field: &str| -> Result<Option<u32>> {
        if v >= 0.0 && v.fract() == 0.0 && v <= f64::from(u32::MAX) {
            Ok(Some(v as u32))
        } else {
            Err(invalid(field, format!("{v} is not a non-negative integer")))
        }
    };
    let mut out = f.clone();
    match f.family.as_deref().unwrap_or_default() {
        "dirac" | "uniform_range" | "uniform" => out.m = as_int("m")?,
        "binomial" => out.n = as_int("n")?,
        "poisson" => out.lambda = Some(v),
        "neg_binomial" | "negbinomial" => out.r = as_int("r")?,
        "two_point" | "twopoint" => out.d = as_int("d")?,
        "geometric" => out.pi = Some(v),
        other => {
            return Err(invalid(
                "values",
                format!("family `{other}` has no main parameter"),
            ))
        }
    }
    Ok(out)
}

impl RunConfig {
    fn resolve(command: CommandKind, f: Flags, env_seed: Option<&str>) -> Result<Self> {
        let file: ConfigFile = match &f.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| invalid("config", e.to_string()))?
            }
            None => ConfigFile::default(),
        };
        let env_seed = match env_seed {
            Some(s) => Some(
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| invalid(SEED_ENV, format!("`{s}` is not a 64-bit integer")))?,
            ),
            None => None,
        };
        let dist = match (&f.values, &f.family) {
            (Some(vals), Some(_)) => match vals.first() {
                Some(&v) => dist_from_flags(&flags_with_main_param(&f, v)?)?,
                None => return Err(invalid("values", "empty list")),
            },
            _ => match dist_from_flags(&f)? {
                Some(d) => Some(d),
                None => file.dist.clone(),
            },
        };
        let mut sweep = file.sweep.clone().unwrap_or_default();
        if let Some(c) = f.sweep_command {
            sweep.command = Some(c);
        }
        if let Some(g) = &f.grid {
            sweep.grid = parse_grid(g)?;
        }
        if let Some(vals) = &f.values {
            sweep.dists = if f.family.is_some() {
                vals.iter()
                    .map(|&v| {
                        dist_from_flags(&flags_with_main_param(&f, v)?)?
                            .ok_or_else(|| invalid("family", "missing"))
                    })
                    .collect::<Result<_>>()?
            } else {
                let base = dist
                    .clone()
                    .ok_or_else(|| invalid("family", "needed with --values"))?;
                vals.iter()
                    .map(|&v| with_main_param(&base, v))
                    .collect::<Result<_>>()?
            };
        }
        let default_format = if command == CommandKind::Sweep {
            Format::Csv
        } else {
            Format::Json
        };
        let cfg = Self {
            command,
            dist,
            kappa: f.kappa.or(file.kappa),
            p0: f.p0.or(file.p0),
            p1: f.p1.or(file.p1),
            tol: f.tol.or(file.tol).unwrap_or(DEFAULT_TOL),
            max_iter: f.max_iter.or(file.max_iter).unwrap_or(DEFAULT_MAX_ITER),
            draw_epsilon: f
                .draw_epsilon
                .or(file.draw_epsilon)
                .unwrap_or(DEFAULT_DRAW_EPSILON),
            positive_threshold: f
                .positive_threshold
                .or(file.positive_threshold)
                .unwrap_or(DEFAULT_POSITIVE_THRESHOLD),
            cluster_radius: f
                .cluster_radius
                .or(file.cluster_radius)
                .unwrap_or(DEFAULT_CLUSTER_RADIUS),
            horizon: f.horizon.or(file.horizon),
            samples: f
                .samples
                .or(file.samples)
                .unwrap_or(OracleOptions::default().samples),
            seed: f.seed.or(file.seed).or(env_seed).unwrap_or(0),
            node_cap: f.node_cap.or(file.node_cap).unwrap_or(DEFAULT_NODE_CAP),
            alpha: f.alpha.or(file.alpha),
            count_fixed_points: f.count_fixed_points || file.count_fixed_points.unwrap_or(false),
            jobs: f.jobs.or(file.jobs),
            format: f.format.or(file.format).unwrap_or(default_format),
            output: f.output.clone().or(file.output),
            sweep,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks knobs and grid points.
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(invalid("tol", "must be positive"));
        }
        if !(self.positive_threshold > 0.0) {
            return Err(invalid("positive_threshold", "must be positive"));
        }
        if !(self.draw_epsilon >= 0.0) {
            return Err(invalid("draw_epsilon", "must be non-negative"));
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs", "must be at least 1"));
        }
        for [p0, p1] in &self.sweep.grid {
            if !(*p0 >= 0.0 && *p1 >= 0.0 && p0 + p1 <= 1.0 + 1e-12) {
                return Err(invalid(
                    "grid",
                    format!("point ({p0}, {p1}) needs p0, p1 >= 0 and p0 + p1 <= 1"),
                ));
            }
        }
        Ok(())
    }

    fn dist(&self) -> Result<OffspringDistribution> {
        self.dist
            .clone()
            .ok_or_else(|| invalid("family", "missing"))
    }

    fn law(&self) -> Result<EdgeWeightLaw> {
        EdgeWeightLaw::from_p0_p1(need(self.p0, "p0")?, need(self.p1, "p1")?)
    }

    fn spec(&self) -> Result<GameSpec> {
        GameSpec::new(need(self.kappa, "kappa")?, self.dist()?, self.law()?)
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            draw_epsilon: self.draw_epsilon,
        }
    }

    fn fixed_point_options(&self) -> FixedPointOptions {
        FixedPointOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            cluster_radius: self.cluster_radius,
        }
    }
}

/// Formats a real with 9 decimals; magnitudes below `1e-4` use scientific notation
/// with 9 fractional digits so tiny entries stay visible.
pub fn format_real(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:.9e}")
    } else {
        format!("{x:.9}")
    }
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            let r: f64 = format_real(x).parse().expect("formatted real parses");
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Tabular or structured result of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub json: Value,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// True when some iteration failed to converge.
    pub unconverged: bool,
}

impl Artifact {
    /// Renders in the requested format; always ends with a newline.
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => {
                let mut v = self.json.clone();
                round_json(&mut v);
                let mut s = serde_json::to_string_pretty(&v)
                    .map_err(|e| Error::Precondition(e.to_string()))?;
                s.push('\n');
                Ok(s)
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let io = |e: csv::Error| Error::Precondition(e.to_string());
                w.write_record(&self.header).map_err(io)?;
                for r in &self.rows {
                    w.write_record(r).map_err(io)?;
                }
                let bytes = w
                    .into_inner()
                    .map_err(|e| Error::Precondition(e.to_string()))?;
                String::from_utf8(bytes).map_err(|e| Error::Precondition(e.to_string()))
            }
        }
    }
}

fn verdict_name(v: DrawVerdict) -> &'static str {
    match v {
        DrawVerdict::Zero => "ZERO",
        DrawVerdict::Positive => "POSITIVE",
        DrawVerdict::Inconclusive => "INCONCLUSIVE",
    }
}

fn cmd_solve(cfg: &RunConfig) -> Result<Artifact> {
    let spec = cfg.spec()?;
    let r = solve(&spec, &cfg.solve_options())?;
    let verdicts = if r.converged {
        Some(classify_draw(
            &r,
            &spec.law,
            cfg.tol,
            cfg.positive_threshold,
        )?)
    } else {
        None
    };
    let n = spec.dim();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![
                (i + 1).to_string(),
                (j + 1).to_string(),
                format_real(r.l.get(i, j)),
                format_real(r.w.get(i, j)),
                format_real(r.d.get(i, j)),
                verdicts
                    .as_ref()
                    .map_or("UNCONVERGED", |v| verdict_name(v[i][j]))
                    .to_string(),
            ]);
        }
    }
    let mut json = serde_json::to_value(&r).map_err(|e| Error::Precondition(e.to_string()))?;
    json["spec"] = serde_json::to_value(&spec).map_err(|e| Error::Precondition(e.to_string()))?;
    json["verdicts"] =
        serde_json::to_value(&verdicts).map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(Artifact {
        json,
        header: ["i", "j", "l", "w", "d", "verdict"]
            .map(String::from)
            .to_vec(),
        rows,
        unconverged: !r.converged,
    })
}

fn cmd_fixed_points(cfg: &RunConfig) -> Result<Artifact> {
    let spec = cfg.spec()?;
    let f = find_fixed_points(
        &spec,
        &default_seeds(spec.dim()),
        &cfg.fixed_point_options(),
    )?;
    let n = spec.dim();
    let mut rows = Vec::new();
    for (k, p) in f.points.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                rows.push(vec![
                    k.to_string(),
                    (i + 1).to_string(),
                    (j + 1).to_string(),
                    format_real(p.get(i, j)),
                ]);
            }
        }
    }
    Ok(Artifact {
        json: json!({
            "spec": spec,
            "count": f.points.len(),
            "dropped": f.dropped,
            "spread": f.spread(),
            "points": f.points,
        }),
        header: ["index", "i", "j", "value"].map(String::from).to_vec(),
        rows,
        unconverged: f.points.is_empty(),
    })
}

fn kappa2_row(dist: &OffspringDistribution, law: &EdgeWeightLaw) -> Result<(Value, Vec<String>)> {
    let holds = kappa2_draw_zero(dist, law)?;
    Ok((
        json!({"distribution": dist, "p0": law.p_0, "p1": law.p_1, "p_minus1": law.p_minus1, "draw_zero": holds}),
        vec![
            dist.label(),
            format_real(law.p_0),
            format_real(law.p_1),
            holds.to_string(),
        ],
    ))
}

fn cmd_check_kappa2(cfg: &RunConfig) -> Result<Artifact> {
    let (json, row) = kappa2_row(&cfg.dist()?, &cfg.law()?)?;
    Ok(Artifact {
        json,
        header: ["distribution", "p0", "p1", "draw_zero"]
            .map(String::from)
            .to_vec(),
        rows: vec![row],
        unconverged: false,
    })
}

fn kappa3_header(count: bool) -> Vec<String> {
    let mut h: Vec<String> = ["distribution", "p1", "p_minus1", "p0"]
        .map(String::from)
        .to_vec();
    if count {
        h.extend(["maxE", "fixed_point_count"].map(String::from));
    } else {
        h.extend(["E11", "E12", "E21", "E22"].map(String::from));
    }
    h
}

fn kappa3_row(
    cfg: &RunConfig,
    dist: &OffspringDistribution,
    law: &EdgeWeightLaw,
) -> Result<(Value, Vec<String>, bool)> {
    let b = kappa3_bounds(dist, law)?;
    let holds = kappa3_contraction_holds(&b);
    let mut json = json!({
        "distribution": dist,
        "p1": law.p_1,
        "p_minus1": law.p_minus1,
        "p0": law.p_0,
        "bounds": b,
        "max_E": b.max_e(),
        "contraction_holds": holds,
    });
    let mut row = vec![
        dist.label(),
        format_real(law.p_1),
        format_real(law.p_minus1),
        format_real(law.p_0),
    ];
    let mut unconverged = false;
    if cfg.count_fixed_points {
        let spec = GameSpec::new(3, dist.clone(), *law)?;
        let f = find_fixed_points(&spec, &default_seeds(2), &cfg.fixed_point_options())?;
        unconverged = f.points.is_empty();
        json["fixed_point_count"] = json!(f.points.len());
        row.push(format_real(b.max_e()));
        row.push(f.points.len().to_string());
    } else {
        row.extend(b.e.iter().flatten().map(|&x| format_real(x)));
    }
    Ok((json, row, unconverged))
}

fn cmd_check_kappa3(cfg: &RunConfig) -> Result<Artifact> {
    let (json, row, unconverged) = kappa3_row(cfg, &cfg.dist()?, &cfg.law()?)?;
    Ok(Artifact {
        json,
        header: kappa3_header(cfg.count_fixed_points),
        rows: vec![row],
        unconverged,
    })
}

fn cmd_check_special(cfg: &RunConfig) -> Result<Artifact> {
    let dist = cfg.dist()?;
    if cfg.p0 == Some(0.0) {
        let law = cfg.law()?;
        let holds = kappa3_p0_zero_check(&dist, law.p_minus1)?;
        let product = p0_zero_product(&dist, law.p_minus1);
        return Ok(Artifact {
            json: json!({"test": "p0_zero", "distribution": dist, "p_minus1": law.p_minus1, "product": product, "draws_zero": holds}),
            header: ["test", "distribution", "p_minus1", "product", "draws_zero"]
                .map(String::from)
                .to_vec(),
            rows: vec![vec![
                "p0_zero".into(),
                dist.label(),
                format_real(law.p_minus1),
                format_real(product),
                holds.to_string(),
            ]],
            unconverged: false,
        });
    }
    if dist != (OffspringDistribution::Dirac { m: 2 }) {
        return Err(invalid(
            "family",
            "the ratio test applies to dirac with m = 2 only",
        ));
    }
    let alpha = match (cfg.alpha, cfg.p0, cfg.p1) {
        (Some(a), None, None) => a,
        (a, Some(_), Some(_)) => {
            let found = special_ratio_alpha(&cfg.law()?)?;
            if let Some(a) = a {
                if (a - found).abs() > 1e-9 * a.max(1.0) {
                    return Err(Error::LawMismatch(format!(
                        "law has alpha {found}, flag says {a}"
                    )));
                }
            }
            found
        }
        _ => return Err(invalid("alpha", "give --alpha, or both --p0 and --p1")),
    };
    let holds = kappa3_special_ratio(alpha)?;
    Ok(Artifact {
        json: json!({"test": "ratio", "alpha": alpha, "draws_zero": holds}),
        header: ["test", "alpha", "draws_zero"].map(String::from).to_vec(),
        rows: vec![vec!["ratio".into(), format_real(alpha), holds.to_string()]],
        unconverged: false,
    })
}

fn cmd_duration(cfg: &RunConfig) -> Result<Artifact> {
    let spec = cfg.spec()?;
    let r = solve(&spec, &cfg.solve_options())?;
    if !r.converged {
        return Err(Error::NonConvergence {
            iterations: r.iterations,
            residual: r.residual,
        });
    }
    let rep = duration_criterion(&spec, &r, cfg.tol)?;
    let n = spec.dim();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![
                (i + 1).to_string(),
                (j + 1).to_string(),
                format_real(rep.alpha.get(i, j)),
                format_real(rep.beta.get(i, j)),
                format_real(rep.row_sums[i][j]),
            ]);
        }
    }
    Ok(Artifact {
        json: serde_json::to_value(&rep).map_err(|e| Error::Precondition(e.to_string()))?,
        header: ["i", "j", "alpha", "beta", "row_sum"]
            .map(String::from)
            .to_vec(),
        rows,
        unconverged: false,
    })
}

fn cmd_simulate(cfg: &RunConfig) -> Result<Artifact> {
    let spec = cfg.spec()?;
    let horizon = need(cfg.horizon, "horizon")?;
    let opts = OracleOptions {
        samples: cfg.samples,
        seed: cfg.seed,
        node_cap: cfg.node_cap,
    };
    let est = estimate_probs(&spec, horizon, &opts)?;
    let it = analytic_iterates(&spec, horizon as usize);
    let (l_it, w_it) = &it[horizon as usize];
    let n = spec.dim();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            rows.push(vec![
                horizon.to_string(),
                (i + 1).to_string(),
                (j + 1).to_string(),
                format_real(est.l.get(i, j)),
                format_real(est.l_stderr.get(i, j)),
                format_real(l_it.get(i, j)),
                format_real(est.w.get(i, j)),
                format_real(est.w_stderr.get(i, j)),
                format_real(w_it.get(i, j)),
            ]);
        }
    }
    let mut json = serde_json::to_value(&est).map_err(|e| Error::Precondition(e.to_string()))?;
    json["L_iterate"] =
        serde_json::to_value(l_it).map_err(|e| Error::Precondition(e.to_string()))?;
    json["W_iterate"] =
        serde_json::to_value(w_it).map_err(|e| Error::Precondition(e.to_string()))?;
    json["seed"] = json!(cfg.seed);
    Ok(Artifact {
        json,
        header: [
            "horizon",
            "i",
            "j",
            "l_hat",
            "l_stderr",
            "l_iterate",
            "w_hat",
            "w_stderr",
            "w_iterate",
        ]
        .map(String::from)
        .to_vec(),
        rows,
        unconverged: false,
    })
}

fn sweep_point(
    cfg: &RunConfig,
    cmd: CommandKind,
    dist: &OffspringDistribution,
    p0: f64,
    p1: f64,
) -> Result<(Value, Vec<String>, bool)> {
    let law = EdgeWeightLaw::from_p0_p1(p0, p1)?;
    match cmd {
        CommandKind::Solve => {
            let spec = GameSpec::new(need(cfg.kappa, "kappa")?, dist.clone(), law)?;
            let r = solve(&spec, &cfg.solve_options())?;
            let verdicts = if r.converged {
                Some(classify_draw(&r, &law, cfg.tol, cfg.positive_threshold)?)
            } else {
                None
            };
            let mut row = vec![dist.label(), format_real(p0), format_real(p1)];
            row.extend(r.d.entries().iter().map(|&x| format_real(x)));
            let d12_ge_d21 = spec.kappa >= 3 && r.d.get(0, 1) >= r.d.get(1, 0) - cfg.tol;
            if spec.kappa >= 3 {
                row.push(d12_ge_d21.to_string());
            }
            row.push(r.converged.to_string());
            Ok((
                json!({"distribution": dist, "p0": p0, "p1": p1, "D": r.d, "converged": r.converged, "verdicts": verdicts}),
                row,
                !r.converged,
            ))
        }
        CommandKind::CheckKappa2 => {
            let (j, r) = kappa2_row(dist, &law)?;
            Ok((j, r, false))
        }
        CommandKind::CheckKappa3 => kappa3_row(cfg, dist, &law),
        other => Err(invalid(
            "sweep_command",
            format!("{other:?} cannot be swept"),
        )),
    }
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Artifact> {
    let cmd = cfg
        .sweep
        .command
        .ok_or_else(|| invalid("sweep_command", "missing"))?;
    let dists = if cfg.sweep.dists.is_empty() {
        vec![cfg.dist()?]
    } else {
        cfg.sweep.dists.clone()
    };
    let grid = if cfg.sweep.grid.is_empty() {
        vec![[need(cfg.p0, "p0")?, need(cfg.p1, "p1")?]]
    } else {
        cfg.sweep.grid.clone()
    };
    let points: Vec<(OffspringDistribution, f64, f64)> = dists
        .iter()
        .flat_map(|d| grid.iter().map(move |[p0, p1]| (d.clone(), *p0, *p1)))
        .collect();
    let run = || -> Vec<Result<(Value, Vec<String>, bool)>> {
        points
            .par_iter()
            .map(|(d, p0, p1)| sweep_point(cfg, cmd, d, *p0, *p1))
            .collect()
    };
    let results = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Precondition(e.to_string()))?
            .install(run),
        None => run(),
    };
    let header = match cmd {
        CommandKind::Solve => {
            let k = need(cfg.kappa, "kappa")?;
            let mut h: Vec<String> = ["distribution", "p0", "p1"].map(String::from).to_vec();
            for i in 1..k {
                for j in 1..k {
                    h.push(format!("d{i}{j}"));
                }
            }
            if k >= 3 {
                h.push("d12_ge_d21".into());
            }
            h.push("converged".into());
            h
        }
        CommandKind::CheckKappa2 => ["distribution", "p0", "p1", "draw_zero"]
            .map(String::from)
            .to_vec(),
        _ => kappa3_header(cfg.count_fixed_points),
    };
    let mut rows = Vec::new();
    let mut items = Vec::new();
    let mut unconverged = false;
    for r in results {
        let (j, row, u) = r?;
        items.push(j);
        rows.push(row);
        unconverged |= u;
    }
    Ok(Artifact {
        json: json!({"command": cmd, "rows": items}),
        header,
        rows,
        unconverged,
    })
}

/// Executes a resolved configuration.
pub fn execute(cfg: &RunConfig) -> Result<Artifact> {
    match cfg.command {
        CommandKind::Solve => cmd_solve(cfg),
        CommandKind::FixedPoints => cmd_fixed_points(cfg),
        CommandKind::CheckKappa2 => cmd_check_kappa2(cfg),
        CommandKind::CheckKappa3 => cmd_check_kappa3(cfg),
        CommandKind::CheckSpecial => cmd_check_special(cfg),
        CommandKind::Duration => cmd_duration(cfg),
        CommandKind::Simulate => cmd_simulate(cfg),
        CommandKind::Sweep => cmd_sweep(cfg),
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        Error::InternalInconsistency(_) | Error::NodeCapExceeded { .. } => EXIT_FAILURE,
        _ => EXIT_VALIDATION,
    }
}

/// Parses arguments, runs the command, writes the artifact and returns the exit status.
pub fn run<I, T>(
    args: I,
    env_seed: Option<&str>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            if code == EXIT_OK {
                let _ = write!(stdout, "{e}");
            } else {
                let _ = write!(stderr, "{e}");
            }
            return code;
        }
    };
    let (command, flags) = match cli.command {
        Cmd::Solve(f) => (CommandKind::Solve, f),
        Cmd::FixedPoints(f) => (CommandKind::FixedPoints, f),
        Cmd::CheckKappa2(f) => (CommandKind::CheckKappa2, f),
        Cmd::CheckKappa3(f) => (CommandKind::CheckKappa3, f),
        Cmd::CheckSpecial(f) => (CommandKind::CheckSpecial, f),
        Cmd::Duration(f) => (CommandKind::Duration, f),
        Cmd::Simulate(f) => (CommandKind::Simulate, f),
        Cmd::Sweep(f) => (CommandKind::Sweep, f),
    };
    let result = RunConfig::resolve(command, flags, env_seed).and_then(|cfg| {
        let art = execute(&cfg)?;
        let text = art.render(cfg.format)?;
        match &cfg.output {
            Some(path) => fs::write(path, text)
                .map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?,
            None => stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::Precondition(e.to_string()))?,
        }
        Ok(art.unconverged)
    });
    match result {
        Ok(false) => EXIT_OK,
        Ok(true) => {
            let _ = writeln!(stderr, "warning: iteration did not converge");
            EXIT_NON_CONVERGENCE
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point used by the binary: process arguments, environment and standard streams.
pub fn main_entry() -> i32 {
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(
        std::env::args_os(),
        env_seed.as_deref(),
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}
