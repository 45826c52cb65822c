//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] from defaults, an optional
//! `key=value` config file, and flags (flags win), then writes the resolved
//! values next to its outputs as `<command>.config`. That echo is itself a
//! valid `--config` file.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    compare_gradient_norms, empirical_p1_samples, h1_curve, h2_evaluate, pareto_c, read_h2_file,
    support_from_grid, ModelFamily,
};
use crate::dataset::{
    generate_dataset, mix_datasets, DatasetConfig, Generator, GridSpec, ReferSource, TemplateId,
    DEFAULT_ADVISOR_ALPHA, DEFAULT_REFER_SEED,
};
use crate::error::Error;
use crate::ingest::{
    class_paths, class_representative, read_participants, write_exclusions, ParticipantRecord,
    DEFAULT_RECONSTRUCTION_SEED,
};
use crate::market::{DecisionGrid, DecisionPath, MarketParams};
use crate::metrics::{
    class_means, class_stats, consistency, format_reduction, mse_reduction, overall_mse,
    pool_groups, write_plot_tsv, ClassKey, TEST_LEVEL,
};
use crate::solver::{merton_path, optimal_path, optimal_path_with_eta, HerdKind, SolverConfig};
use crate::template::TemplateSet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Risk-aversion values swept by the H1 check in `analyze`.
pub const H1_ALPHAS: [f64; 5] = [0.09, 0.13, 0.19, 0.26, 0.38];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => match e {
                Error::ConvergenceFailure { .. }
                | Error::DegenerateWealth { .. }
                | Error::ContractViolation(_)
                | Error::UndefinedCorrelation(_)
                | Error::DegenerateSample(_)
                | Error::UndefinedBaseline => EXIT_NUMERIC,
                _ => EXIT_DATA,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "herdalign", version, about = "Herd-behaviour investment theory, dataset synthesis, and alignment metrics")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// key=value config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Template directory (defaults to $HERDALIGN_TEMPLATES, then built-ins).
    #[arg(long, global = true, value_name = "DIR")]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve eta and print both agents' optimal paths.
    Solve {
        #[arg(long)]
        alpha1: f64,
        #[arg(long)]
        alpha2: Option<f64>,
        #[arg(long)]
        theta: f64,
    },
    /// Generate the theory-driven SFT dataset.
    GenDataset {
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "P3_SFT")]
        template: String,
        /// Generate cells one by one instead of in parallel.
        #[arg(long)]
        serial: bool,
        /// Comma-separated percents used as the advisor list verbatim.
        #[arg(long, value_name = "LIST")]
        refer_literal: Option<String>,
        /// Mix the result with a user record file at ratio M:N.
        #[arg(long, num_args = 2, value_names = ["FILE", "M:N"])]
        mix: Option<Vec<String>>,
    },
    /// Mix theory and user record files at ratio M:N.
    Mix {
        #[arg(long)]
        theory: PathBuf,
        #[arg(long)]
        user: PathBuf,
        #[arg(long, value_name = "M:N")]
        ratio: String,
    },
    /// Class statistics, overall MSEs, reductions, and consistency tests.
    Metrics {
        /// Participant table of real users.
        #[arg(long)]
        user: PathBuf,
        /// Agent decision table; repeat to pool several agents.
        #[arg(long)]
        agent: Vec<PathBuf>,
        /// Pre-fine-tuning agent table; repeat to pool.
        #[arg(long)]
        baseline: Vec<PathBuf>,
        /// Compare against theoretical solutions and run the d/rho tests.
        #[arg(long)]
        theory: bool,
        /// Null mean for the correlation test.
        #[arg(long, default_value_t = 0.85)]
        rho0: f64,
    },
    /// Density, overlap, KS, and H1 analysis.
    Analyze {
        /// Noise half-width as a fraction of each support width.
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Model family: pareto:A, exponential:RATE, or linear:SLOPE. Repeatable.
        #[arg(long)]
        family: Vec<String>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        /// Decision time of the KS diagnostic.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
    /// Mean terminal fund sum per theta from paired decision files.
    H2 {
        #[arg(long)]
        input: PathBuf,
    },
    /// Percent change between two overall MSE values.
    Reduction {
        #[arg(long)]
        pre: f64,
        #[arg(long)]
        post: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::GenDataset { .. } => "gen-dataset",
            Command::Mix { .. } => "mix",
            Command::Metrics { .. } => "metrics",
            Command::Analyze { .. } => "analyze",
            Command::H2 { .. } => "h2",
            Command::Reduction { .. } => "reduction",
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: MarketParams,
    pub grid_layout: DecisionGrid,
    pub solver: SolverConfig,
    pub alpha2: f64,
    pub grid: GridSpec,
    pub refer_seed: u64,
    pub reconstruction_seed: u64,
    pub templates: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: MarketParams::default(),
            grid_layout: DecisionGrid::StartOfYear,
            solver: SolverConfig::default(),
            alpha2: DEFAULT_ADVISOR_ALPHA,
            grid: GridSpec::default(),
            refer_seed: DEFAULT_REFER_SEED,
            reconstruction_seed: DEFAULT_RECONSTRUCTION_SEED,
            templates: None,
            out: PathBuf::from("herdalign-out"),
        }
    }
}

fn parse_list(key: &str, v: &str) -> CliResult<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("{key}: bad number {s:?}")))
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.trim()
        .parse()
        .map_err(|_| usage(format!("{key}: cannot parse {v:?}")))
}

/// Shortest round-tripping text, in exponent form for tiny magnitudes.
fn num_text(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| num_text(x)).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        match key {
            "r" => self.params.r = parse_num(key, value)?,
            "v" => self.params.v = parse_num(key, value)?,
            "sigma" => self.params.sigma = parse_num(key, value)?,
            "horizon" => self.params.horizon = parse_num(key, value)?,
            "x0" => self.params.x0 = parse_num(key, value)?,
            "substeps" => self.params.substeps = parse_num(key, value)?,
            "decision_grid" => {
                self.grid_layout = DecisionGrid::parse(value.trim())
                    .ok_or_else(|| usage(format!("decision_grid: expected start or end, got {value:?}")))?
            }
            "alpha2" => self.alpha2 = parse_num(key, value)?,
            "tolerance" => self.solver.tolerance = parse_num(key, value)?,
            "max_iterations" => self.solver.max_iterations = parse_num(key, value)?,
            "quadrature_panels" => self.solver.quadrature_panels = parse_num(key, value)?,
            "alphas" => self.grid.alphas = parse_list(key, value)?,
            "thetas" => self.grid.thetas = parse_list(key, value)?,
            "trials" => self.grid.trials = parse_num(key, value)?,
            "seed" => self.grid.base_seed = parse_num(key, value)?,
            "refer_seed" => self.refer_seed = parse_num(key, value)?,
            "reconstruction_seed" => self.reconstruction_seed = parse_num(key, value)?,
            "templates" => self.templates = Some(PathBuf::from(value.trim())),
            "out" => self.out = PathBuf::from(value.trim()),
            _ => return Err(usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Market parameters with the decision grid laid out for the horizon.
    pub fn market(&self) -> MarketParams {
        self.params.clone().with_grid(self.grid_layout)
    }

    pub fn echo(&self) -> String {
        let p = &self.params;
        let s = &self.solver;
        let g = &self.grid;
        let layout = match self.grid_layout {
            DecisionGrid::StartOfYear => "start",
            DecisionGrid::EndOfYear => "end",
        };
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("r", format!("{}", p.r));
        kv("v", format!("{}", p.v));
        kv("sigma", format!("{}", p.sigma));
        kv("horizon", p.horizon.to_string());
        kv("x0", format!("{}", p.x0));
        kv("substeps", p.substeps.to_string());
        kv("decision_grid", layout.into());
        kv("alpha2", format!("{}", self.alpha2));
        kv("tolerance", format!("{:e}", s.tolerance));
        kv("max_iterations", s.max_iterations.to_string());
        kv("quadrature_panels", s.quadrature_panels.to_string());
        kv("alphas", join(&g.alphas));
        kv("thetas", join(&g.thetas));
        kv("trials", g.trials.to_string());
        kv("seed", g.base_seed.to_string());
        kv("refer_seed", self.refer_seed.to_string());
        kv("reconstruction_seed", self.reconstruction_seed.to_string());
        if let Some(t) = &self.templates {
            kv("templates", t.display().to_string());
        }
        kv("out", self.out.display().to_string());
        out
    }

    pub fn resolve(common: &CommonArgs) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &common.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        if let Some(seed) = common.seed {
            cfg.grid.base_seed = seed;
        }
        if let Some(out) = &common.out {
            cfg.out = out.clone();
        }
        if let Some(t) = &common.templates {
            cfg.templates = Some(t.clone());
        }
        Ok(cfg)
    }
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(v).expect("json serialises");
    s.push('\n');
    write_file(path, &s)
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn parse_ratio(s: &str) -> CliResult<(u32, u32)> {
    let (m, n) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("ratio must be M:N, got {s:?}")))?;
    let m = parse_num("ratio", m)?;
    let n = parse_num("ratio", n)?;
    if m == 0 && n == 0 {
        return Err(usage("ratio 0:0"));
    }
    Ok((m, n))
}

fn parse_family(s: &str) -> CliResult<ModelFamily> {
    let (name, val) = s
        .split_once(':')
        .ok_or_else(|| usage(format!("family must be NAME:VALUE, got {s:?}")))?;
    let x: f64 = parse_num("family", val)?;
    match name {
        "pareto" => Ok(ModelFamily::TruncatedPareto { exponent: x }),
        "exponential" => Ok(ModelFamily::TruncatedExponential { rate: x }),
        "linear" => Ok(ModelFamily::Linear { slope: x }),
        _ => Err(usage(format!("unknown family {name:?}"))),
    }
}

fn range_of(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Runs the parsed command and returns the text for stdout.
pub fn run(cli: &Cli) -> CliResult<String> {
    let cfg = RunConfig::resolve(&cli.common)?;
    let params = cfg.market();
    params.validate()?;
    cfg.solver.validate()?;
    ensure_dir(&cfg.out)?;
    let argv: Vec<String> = std::env::args().skip(1).collect();
    write_file(
        &cfg.out.join(format!("{}.config", cli.command.name())),
        &format!("# herdalign {}\n{}", argv.join(" "), cfg.echo()),
    )?;
    match &cli.command {
        Command::Solve {
            alpha1,
            alpha2,
            theta,
        } => cmd_solve(&cfg, &params, *alpha1, alpha2.unwrap_or(cfg.alpha2), *theta),
        Command::GenDataset {
            trials,
            template,
            serial,
            refer_literal,
            mix,
        } => cmd_gen_dataset(&cfg, &params, *trials, template, *serial, refer_literal.as_deref(), mix.as_deref()),
        Command::Mix {
            theory,
            user,
            ratio,
        } => {
            let (m, n) = parse_ratio(ratio)?;
            let out = cfg.out.join("mixed.jsonl");
            let counts = mix_datasets(theory, user, m, n, cfg.grid.base_seed, &out)?;
            write_json(&cfg.out.join("mix.json"), &json!({"ratio": ratio, "counts": counts}))?;
            Ok(format!("mixed {} theory + {} user records into {}\n", counts.theory, counts.user, out.display()))
        }
        Command::Metrics {
            user,
            agent,
            baseline,
            theory,
            rho0,
        } => cmd_metrics(&cfg, &params, user, agent, baseline, *theory, *rho0),
        Command::Analyze {
            eps,
            family,
            samples,
            time,
        } => cmd_analyze(&cfg, &params, *eps, family, *samples, *time),
        Command::H2 { input } => {
            let data = read_h2_file(input, params.decision_count())?;
            let r = h2_evaluate(&data, &params, cfg.grid.base_seed)?;
            write_json(&cfg.out.join("h2.json"), &serde_json::to_value(&r).expect("json"))?;
            let mut s = String::from("theta\ttrials\tmean_terminal_sum\n");
            for p in &r.points {
                let _ = writeln!(s, "{}\t{}\t{:.6}", p.label, p.trials, p.mean_terminal_sum);
            }
            let _ = writeln!(s, "trend: {:?}", r.trend);
            Ok(s)
        }
        Command::Reduction { pre, post } => {
            let r = mse_reduction(*pre, *post)?;
            write_json(&cfg.out.join("reduction.json"), &json!({"pre": pre, "post": post, "percent": r, "rendered": format_reduction(r)}))?;
            Ok(format!("{}\n", format_reduction(r)))
        }
    }
}

fn cmd_solve(cfg: &RunConfig, params: &MarketParams, alpha1: f64, alpha2: f64, theta: f64) -> CliResult<String> {
    if !(alpha1 > 0.0 && alpha2 > 0.0 && theta >= 0.0) {
        return Err(usage("need alpha1 > 0, alpha2 > 0, theta >= 0"));
    }
    let (p1, sol) = optimal_path_with_eta(params, alpha1, alpha2, theta, &cfg.solver)?;
    let p2 = merton_path(params, alpha2);
    let m1 = merton_path(params, alpha1);
    let mut s = String::new();
    let _ = writeln!(s, "eta = {:.12e} (iterations {}, residual {:e})", sol.eta, sol.iterations, sol.residual);
    let _ = writeln!(s, "t\tP1\tP2\tmerton(alpha1)");
    for (i, t) in params.decision_times.iter().enumerate() {
        let _ = writeln!(s, "{t}\t{:.6}\t{:.6}\t{:.6}", p1.amounts[i], p2.amounts[i], m1.amounts[i]);
    }
    write_json(
        &cfg.out.join("solve.json"),
        &json!({
            "alpha1": alpha1, "alpha2": alpha2, "theta": theta,
            "eta": sol.eta, "iterations": sol.iterations, "residual": sol.residual,
            "times": params.decision_times, "p1": p1.amounts, "p2": p2.amounts,
            "merton_alpha1": m1.amounts,
        }),
    )?;
    Ok(s)
}

fn cmd_gen_dataset(
    cfg: &RunConfig,
    params: &MarketParams,
    trials: Option<usize>,
    template: &str,
    serial: bool,
    refer_literal: Option<&str>,
    mix: Option<&[String]>,
) -> CliResult<String> {
    let template_id = TemplateId::parse(template).ok_or_else(|| usage(format!("unknown template {template:?}")))?;
    let mut spec = cfg.grid.clone();
    if let Some(t) = trials {
        spec.trials = t;
    }
    let refer = match refer_literal {
        Some(list) => ReferSource::Literal(parse_list("refer_literal", list)?),
        None => ReferSource::Simulated { seed: cfg.refer_seed },
    };
    let generator = Generator::new(DatasetConfig {
        params: params.clone(),
        solver: cfg.solver,
        alpha2: cfg.alpha2,
        refer: refer.clone(),
        templates: TemplateSet::resolve(cfg.templates.as_deref())?,
    })?;
    let out = cfg.out.join("dataset.jsonl");
    let n = generate_dataset(&generator, &spec, template_id, &out, !serial)?;
    let mut manifest = json!({
        "records": n,
        "template": template_id.as_str(),
        "grid": spec,
        "refer": refer,
        "refer_ratios": generator.refer_rendered(),
        "files": {"dataset.jsonl": sha256_file(&out)?},
    });
    let mut msg = format!("wrote {n} records to {}\n", out.display());
    if let Some([user, ratio]) = mix {
        let (m, k) = parse_ratio(ratio)?;
        let mixed = cfg.out.join("mixed.jsonl");
        let counts = mix_datasets(&out, Path::new(user), m, k, spec.base_seed, &mixed)?;
        manifest["mix"] = json!({"user": user, "ratio": ratio, "counts": counts});
        manifest["files"]["mixed.jsonl"] = json!(sha256_file(&mixed)?);
        let _ = writeln!(msg, "mixed {} theory + {} user records into {}", counts.theory, counts.user, mixed.display());
    }
    write_json(&cfg.out.join("manifest.json"), &manifest)?;
    Ok(msg)
}

type Groups = BTreeMap<ClassKey, Vec<DecisionPath>>;

fn load_groups(cfg: &RunConfig, params: &MarketParams, paths: &[PathBuf], tag: &str) -> CliResult<(Groups, usize)> {
    let mut pooled = Groups::new();
    let mut excluded = 0;
    for (i, p) in paths.iter().enumerate() {
        let ing = read_participants(p, params, cfg.reconstruction_seed)?;
        excluded += ing.excluded.len();
        write_exclusions(&cfg.out.join(format!("exclusions_{tag}_{i}.jsonl")), &ing.excluded)?;
        pooled = pool_groups(&pooled, &class_paths(&ing.accepted));
    }
    Ok((pooled, excluded))
}

fn theory_groups(cfg: &RunConfig, params: &MarketParams, keys: impl Iterator<Item = ClassKey>) -> CliResult<Groups> {
    let mut g = Groups::new();
    for k in keys {
        let (a, th) = class_representative(k)?;
        g.insert(k, vec![optimal_path(params, a, cfg.alpha2, th, &cfg.solver)?]);
    }
    Ok(g)
}

fn cmd_metrics(
    cfg: &RunConfig,
    params: &MarketParams,
    user: &Path,
    agent: &[PathBuf],
    baseline: &[PathBuf],
    theory: bool,
    rho0: f64,
) -> CliResult<String> {
    if agent.is_empty() && !theory {
        return Err(usage("metrics needs --agent or --theory"));
    }
    if !baseline.is_empty() && agent.is_empty() {
        return Err(usage("--baseline needs --agent"));
    }
    let ing = read_participants(user, params, cfg.reconstruction_seed)?;
    write_exclusions(&cfg.out.join("exclusions_user.jsonl"), &ing.excluded)?;
    let user_groups = class_paths(&ing.accepted);
    let (user_stats, user_notes) = class_stats(&user_groups)?;
    write_plot_tsv(&cfg.out.join("plot_user.tsv"), &user_stats, &params.decision_times)?;
    let user_means = class_means(&user_stats);

    let mut report = json!({
        "user": {"accepted": ing.accepted.len(), "excluded": ing.excluded.len(), "classes": user_stats, "notes": user_notes},
    });
    let mut text = String::new();

    let mut compare = |name: &str, groups: &Groups, excluded: usize| -> CliResult<f64> {
        let (stats, notes) = class_stats(groups)?;
        write_plot_tsv(&cfg.out.join(format!("plot_{name}.tsv")), &stats, &params.decision_times)?;
        let mse = overall_mse(&class_means(&stats), &user_means)?;
        report[name] = json!({"excluded": excluded, "classes": stats, "notes": notes, "overall_mse": mse});
        let _ = writeln!(text, "overall MSE ({name} vs user): {mse:.6}");
        Ok(mse)
    };

    let mut agent_mse = None;
    if !agent.is_empty() {
        let (g, x) = load_groups(cfg, params, agent, "agent")?;
        agent_mse = Some(compare("agent", &g, x)?);
    }
    let mut baseline_mse = None;
    if !baseline.is_empty() {
        let (g, x) = load_groups(cfg, params, baseline, "baseline")?;
        baseline_mse = Some(compare("baseline", &g, x)?);
    }
    if theory {
        let g = theory_groups(cfg, params, user_groups.keys().copied())?;
        compare("theory", &g, 0)?;
    }
    if let (Some(pre), Some(post)) = (baseline_mse, agent_mse) {
        let r = mse_reduction(pre, post)?;
        report["reduction"] = json!({"percent": r, "rendered": format_reduction(r)});
        let _ = writeln!(text, "reduction: {}", format_reduction(r));
    }
    if theory {
        let pairs = ing
            .accepted
            .iter()
            .map(|r: &ParticipantRecord| {
                let th = optimal_path(params, r.alpha, cfg.alpha2, r.theta, &cfg.solver)?;
                Ok((r.amounts.clone(), th.amounts))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let c = consistency(&pairs, rho0, TEST_LEVEL)?;
        for (name, t) in [("d", &c.d_test), ("rho", &c.rho_test)] {
            if let Some(t) = t {
                let _ = writeln!(text, "t-test {name}: t = {:.4}, df = {}, p = {:.4}, reject = {}", t.t, t.df, t.p_value, t.reject);
            }
        }
        report["consistency"] = serde_json::to_value(&c).expect("json");
    }
    write_json(&cfg.out.join("metrics.json"), &report)?;
    Ok(text)
}

fn cmd_analyze(
    cfg: &RunConfig,
    params: &MarketParams,
    eps: f64,
    families: &[String],
    samples: usize,
    time: f64,
) -> CliResult<String> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(usage(format!("--eps must lie in (0, 0.5), got {eps}")));
    }
    if samples < 1000 {
        return Err(usage("--samples must be at least 1000"));
    }
    let families: Vec<ModelFamily> = if families.is_empty() {
        vec![ModelFamily::TruncatedPareto { exponent: 2.0 }]
    } else {
        families.iter().map(|f| parse_family(f)).collect::<CliResult<_>>()?
    };
    let a_range = range_of(&cfg.grid.alphas);
    let th_range = range_of(&cfg.grid.thetas);
    let supports = params
        .decision_times
        .iter()
        .map(|&t| support_from_grid(params, a_range, th_range, cfg.alpha2, t, &cfg.solver))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut text = String::new();
    let mut comparisons = Vec::new();
    for f in &families {
        let c = compare_gradient_norms(&supports, eps, *f)?;
        let _ = writeln!(
            text,
            "{}: factor_theory = {:.9}, factor_user = {:.9}, inequality_holds = {}",
            c.family, c.factor_theory, c.factor_user, c.inequality_holds
        );
        comparisons.push(c);
    }
    let fit = empirical_p1_samples(params, samples, a_range, th_range, cfg.alpha2, time, cfg.grid.base_seed, &cfg.solver)?;
    let _ = writeln!(text, "KS distance at t = {time}: {:.6} (n = {samples}, failures {})", fit.ks, fit.failures);
    let mut h1 = Vec::new();
    for &a in &H1_ALPHAS {
        let c = h1_curve(params, a, cfg.alpha2, &cfg.grid.thetas, HerdKind::Absolute, &cfg.solver)?;
        let _ = writeln!(text, "H1 alpha1 = {a}: {:?}", c.trend);
        h1.push(c);
    }
    let report = json!({
        "supports": supports.iter().zip(&params.decision_times).map(|(s, t)| json!({"t": t, "pmin": s.pmin, "pmax": s.pmax, "c": pareto_c(s)})).collect::<Vec<_>>(),
        "eps_fraction": eps,
        "comparisons": comparisons,
        "ks": {"t": time, "n": samples, "distance": fit.ks, "failures": fit.failures, "support": fit.support, "c": fit.c},
        "h1": h1,
    });
    write_json(&cfg.out.join("analysis.json"), &report)?;
    Ok(text)
}

/// Binary entry point; returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("herdalign {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
