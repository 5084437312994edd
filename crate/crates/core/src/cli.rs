//! Batch front-end: one JSON config (flags override its fields), one JSON
//! artifact per run plus a text summary and plot-ready CSV.

use crate::covering::{
    check_density_plan, cover_compact, cover_multiples, cover_sphere_capped, density_blocks, sphere_samples,
    verify_approx, verify_multiples, verify_separation, verify_sphere_coverage, AxisBox, CompactOptions, Covering,
    DEFAULT_MAX_POINTS, DEFAULT_SPHERE_POINTS,
};
use crate::obstruction::{adversarial_candidate, choose_obstruction_params, peel_certify, Interval, PeelOutcome};
use crate::operator_sim::{
    common_hc_construct, fhc_vector, norm_lp, BumpSum, CommonHcOptions, FhcOptions, GridSpec, Weight, WeightedGrid,
};
use crate::rational::{parse_q, q_from_f64, q_int, Q};
use crate::sequences::{b_constant, check_plan, check_sg, split_with_floor, ParamSequence};
use clap::{Parser, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandId {
    Split,
    CoverBox,
    CoverSphere,
    CoverMultiples,
    Verify,
    Peel,
    SimulateChc,
    SimulateFhc,
    DensityBlocks,
}

impl CommandId {
    pub fn name(self) -> &'static str {
        match self {
            CommandId::Split => "split",
            CommandId::CoverBox => "cover-box",
            CommandId::CoverSphere => "cover-sphere",
            CommandId::CoverMultiples => "cover-multiples",
            CommandId::Verify => "verify",
            CommandId::Peel => "peel",
            CommandId::SimulateChc => "simulate-chc",
            CommandId::SimulateFhc => "simulate-fhc",
            CommandId::DensityBlocks => "density-blocks",
        }
    }
}

/// Rational given as a JSON number or as text (`"3/2"`, `"0.125"`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    fn to_q(&self) -> Result<Q, String> {
        match self {
            Scalar::Num(x) if x.is_finite() => Ok(q_from_f64(*x)),
            Scalar::Num(x) => Err(format!("non-finite number {x}")),
            Scalar::Text(s) => parse_q(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Values {
    One(f64),
    Many(Vec<f64>),
}

impl Values {
    fn to_vec(&self) -> Vec<f64> {
        match self {
            Values::One(x) => vec![*x],
            Values::Many(v) => v.clone(),
        }
    }
}

/// `"n"`, `"n^1.5"`, `"2^n"`, `"3/2^n"`, `"table:1,2,5"`, or a full object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeqSpec {
    Text(String),
    Full(ParamSequence),
}

impl SeqSpec {
    pub fn build(&self) -> Result<ParamSequence, String> {
        let s = match self {
            SeqSpec::Full(p) => return p.validate().map(|_| p.clone()).map_err(|e| e.to_string()),
            SeqSpec::Text(s) => s.trim(),
        };
        let r = if s == "n" {
            Ok(ParamSequence::integers())
        } else if let Some(vals) = s.strip_prefix("table:") {
            let v: Result<Vec<Q>, String> = vals.split(',').map(parse_q).collect();
            ParamSequence::table(v?).map_err(|e| e.to_string())
        } else if let Some(e) = s.strip_prefix("n^") {
            let e: f64 = e.parse().map_err(|_| format!("bad exponent in `{s}`"))?;
            ParamSequence::polynomial(e, 1).map_err(|e| e.to_string())
        } else if let Some(r) = s.strip_suffix("^n") {
            ParamSequence::geometric(parse_q(r)?, 1).map_err(|e| e.to_string())
        } else {
            Err(format!("unknown sequence `{s}`"))
        };
        r
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Option<CommandId>,
    pub seq: Option<SeqSpec>,
    pub d: Option<usize>,
    #[serde(rename = "A")]
    pub a: Option<Scalar>,
    pub q: Option<Scalar>,
    pub epsilon: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub delta: Option<Values>,
    #[serde(rename = "B")]
    pub b: Option<Values>,
    /// `"lo,hi"`.
    pub interval: Option<String>,
    /// `"lo,hi"`, the cube `[lo, hi]^d`.
    #[serde(rename = "box")]
    pub cube: Option<String>,
    pub grid: Option<GridSpec>,
    pub eps_target: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub p_max: Option<usize>,
    pub stages: Option<usize>,
    pub step: Option<f64>,
    pub max_points: Option<usize>,
    pub radius: Option<f64>,
    pub target_norm: Option<f64>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Parser, Debug, Default)]
#[command(name = "chc", version, about = "Covering nets, splittings, obstruction certificates and hypercyclic simulations")]
pub struct Cli {
    /// Subcommand (or the config's `command` field).
    #[arg(value_enum)]
    pub command: Option<CommandId>,
    /// JSON config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seq: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long = "A")]
    pub a: Option<String>,
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "C")]
    pub c: Option<f64>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Comma-separated list.
    #[arg(long)]
    pub delta: Option<String>,
    /// Comma-separated list.
    #[arg(long = "B")]
    pub b: Option<String>,
    #[arg(long)]
    pub interval: Option<String>,
    #[arg(long = "box")]
    pub cube: Option<String>,
    #[arg(long = "grid-R")]
    pub grid_r: Option<f64>,
    #[arg(long = "grid-h")]
    pub grid_h: Option<f64>,
    /// `gaussian` or `power:<beta>`.
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub eps_target: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub p_max: Option<usize>,
    #[arg(long)]
    pub stages: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_points: Option<usize>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub target_norm: Option<f64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Run(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Run(_) => "runtime",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| cfg_err(format!("bad number `{t}` in `{s}`")))).collect()
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), CliError> {
    let v = parse_list(s)?;
    match v[..] {
        [lo, hi] if lo <= hi => Ok((lo, hi)),
        _ => Err(cfg_err(format!("{what} must be `lo,hi` with lo <= hi, got `{s}`"))),
    }
}

fn parse_weight(s: &str) -> Result<Weight, CliError> {
    if s == "gaussian" {
        return Ok(Weight::Gaussian);
    }
    if let Some(b) = s.strip_prefix("power:") {
        let beta = b.parse().map_err(|_| cfg_err(format!("bad beta in `{s}`")))?;
        return Ok(Weight::Power { beta });
    }
    Err(cfg_err(format!("unknown weight `{s}`")))
}

/// Reads the config file (if any) and applies the flags on top.
pub fn merge(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| cfg_err(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| cfg_err(format!("malformed config: {e}")))?
        }
        None => ExperimentConfig::default(),
    };
    macro_rules! over {
        ($field:ident, $val:expr) => {
            if let Some(v) = $val {
                cfg.$field = Some(v);
            }
        };
    }
    over!(command, cli.command);
    over!(out, cli.out.clone());
    over!(seq, cli.seq.clone().map(SeqSpec::Text));
    over!(d, cli.d);
    over!(a, cli.a.clone().map(Scalar::Text));
    over!(q, cli.q.clone().map(Scalar::Text));
    over!(epsilon, cli.epsilon);
    over!(c, cli.c);
    over!(n, cli.n);
    over!(delta, cli.delta.as_deref().map(parse_list).transpose()?.map(Values::Many));
    over!(b, cli.b.as_deref().map(parse_list).transpose()?.map(Values::Many));
    over!(interval, cli.interval.clone());
    over!(cube, cli.cube.clone());
    over!(eps_target, cli.eps_target);
    over!(samples, cli.samples);
    over!(seed, cli.seed);
    over!(horizon, cli.horizon);
    over!(p_max, cli.p_max);
    over!(stages, cli.stages);
    over!(step, cli.step);
    over!(max_points, cli.max_points);
    over!(radius, cli.radius);
    over!(target_norm, cli.target_norm);
    over!(input, cli.input.clone());
    if cli.grid_r.is_some() || cli.grid_h.is_some() || cli.weight.is_some() || cli.p.is_some() {
        let mut g = cfg.grid.clone().unwrap_or_else(|| default_grid(cfg.d.unwrap_or(1)));
        if let Some(r) = cli.grid_r {
            g.half_width = r;
        }
        if let Some(h) = cli.grid_h {
            g.step = h;
        }
        if let Some(w) = &cli.weight {
            g.weight = parse_weight(w)?;
        }
        if let Some(p) = cli.p {
            g.p = p;
        }
        cfg.grid = Some(g);
    }
    Ok(cfg)
}

fn default_grid(d: usize) -> GridSpec {
    GridSpec { d, half_width: 60.0, step: 0.05, weight: Weight::Gaussian, p: 2.0 }
}

/// Result of one run: the JSON artifact, a text summary and extra files.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub command: CommandId,
    pub artifact: String,
    pub summary: String,
    pub files: Vec<(String, Vec<u8>)>,
    /// All internal assertions held.
    pub ok: bool,
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

impl ExperimentConfig {
    fn need<T: Clone>(&self, v: &Option<T>, name: &str) -> Result<T, CliError> {
        v.clone().ok_or_else(|| cfg_err(format!("`{name}` is required for {}", self.command_name())))
    }

    fn command_name(&self) -> &'static str {
        self.command.map_or("this command", CommandId::name)
    }

    fn sequence(&self, default: &str) -> Result<ParamSequence, CliError> {
        self.seq.clone().unwrap_or(SeqSpec::Text(default.into())).build().map_err(cfg_err)
    }

    fn positive(&self, v: Option<f64>, name: &str) -> Result<f64, CliError> {
        let x = self.need(&v, name)?;
        if !(x > 0.0 && x.is_finite()) {
            return Err(cfg_err(format!("`{name}` must be positive, got {x}")));
        }
        Ok(x)
    }

    fn seed(&self) -> Result<u64, CliError> {
        self.need(&self.seed, "seed")
    }

    fn dim(&self) -> Result<usize, CliError> {
        match self.d.unwrap_or(1) {
            0 => Err(cfg_err("`d` must be >= 1")),
            d => Ok(d),
        }
    }

    fn cube_boxes(&self, d: usize) -> Result<Vec<AxisBox>, CliError> {
        let (lo, hi) = parse_pair(&self.need(&self.cube, "box")?, "box")?;
        Ok(vec![AxisBox::cube(d, lo, hi)])
    }

    fn grid(&self) -> Result<std::sync::Arc<WeightedGrid>, CliError> {
        let spec = self.grid.clone().unwrap_or_else(|| default_grid(self.d.unwrap_or(1)));
        WeightedGrid::new(spec).map_err(|e| cfg_err(e.to_string()))
    }
}

/// Runs the configured command.
pub fn execute(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let command = cfg.command.ok_or_else(|| cfg_err("no command given (flag or config `command`)"))?;
    match command {
        CommandId::Split => split(cfg),
        CommandId::CoverBox => cover_box_cmd(cfg),
        CommandId::CoverSphere => cover_sphere_cmd(cfg),
        CommandId::CoverMultiples => cover_multiples_cmd(cfg),
        CommandId::Verify => verify_cmd(cfg),
        CommandId::Peel => peel_cmd(cfg),
        CommandId::SimulateChc => simulate_chc(cfg),
        CommandId::SimulateFhc => simulate_fhc(cfg),
        CommandId::DensityBlocks => density_cmd(cfg),
    }
}

fn split(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq = cfg.sequence("n")?;
    let d = cfg.dim()?;
    let a = cfg.need(&cfg.a, "A")?.to_q().map_err(cfg_err)?;
    if a <= q_int(0) {
        return Err(cfg_err("`A` must be positive"));
    }
    let b = b_constant(d, &a);
    let horizon = seq.clamp(cfg.horizon.unwrap_or(1 << 40));
    let sg = check_sg(&seq, &b, horizon)
        .map_err(run_err)?
        .ok_or_else(|| run_err("the sequence has no growth witness within the horizon"))?;
    let plan = split_with_floor(&seq, &sg, d, &a, 0).map_err(run_err)?;
    let violations = check_plan(&plan, &sg.view(&seq));
    let mapped = plan.map_indices(|k| sg.indices[k]);
    let mut summary = format!(
        "split d={d} A={a} B={b}: {} leaves, {} nodes, indices {:?}..={:?}\n",
        mapped.phi.len(),
        mapped.sr.len(),
        mapped.min_index(),
        mapped.max_index()
    );
    for v in &violations {
        summary.push_str(&format!("violation: {v:?}\n"));
    }
    summary.push_str(&format!("violations: {}\n", violations.len()));
    Ok(Output { command: CommandId::Split, artifact: to_json(&mapped), summary, files: vec![], ok: violations.is_empty() })
}

#[derive(Serialize)]
struct CoverArtifact<'a, A: Serialize> {
    covering: &'a Covering,
    separation: crate::covering::SeparationReport,
    approx: A,
}

fn cover_box_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq = cfg.sequence("n")?;
    let d = cfg.dim()?;
    let k = cfg.cube_boxes(d)?;
    let eps = cfg.positive(cfg.epsilon, "epsilon")?;
    let c = cfg.positive(cfg.c, "C")?;
    let opts = CompactOptions { max_points: cfg.max_points.unwrap_or(DEFAULT_MAX_POINTS), ..Default::default() };
    let cov = cover_compact(&k, &seq, eps, c, cfg.n.unwrap_or(0), &opts).map_err(run_err)?;
    let sep = verify_separation(&cov, c);
    let step = cfg.step.unwrap_or(eps / (10.0 * cov.lambda_max()));
    let approx = verify_approx(&cov, &k, step);
    let ok = sep.ok && approx.covered && approx.sound;
    let summary = format!(
        "cover-box: {} points, N={} M={}, separation violations {}, approx covered={} sound={} (step {step:e})\n",
        cov.points.len(),
        cov.params.n,
        cov.params.m,
        sep.violation_count,
        approx.covered,
        approx.sound
    );
    let files = vec![("points.csv".into(), cov.to_csv().into_bytes())];
    let artifact = to_json(&CoverArtifact { covering: &cov, separation: sep, approx });
    Ok(Output { command: CommandId::CoverBox, artifact, summary, files, ok })
}

fn cover_sphere_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq = cfg.sequence("n")?;
    let d = cfg.dim()?;
    let delta = cfg.positive(cfg.delta.as_ref().map(|v| v.to_vec()[0]), "delta")?;
    let b = cfg.positive(cfg.b.as_ref().map(|v| v.to_vec()[0]), "B")?;
    let seed = cfg.seed()?;
    let max_points = cfg.max_points.unwrap_or(DEFAULT_SPHERE_POINTS);
    let net = cover_sphere_capped(d, delta, b, cfg.n.unwrap_or(0), &seq, max_points).map_err(run_err)?;
    let sep = verify_separation(&net.covering, b);
    let samples = sphere_samples(d, cfg.samples.unwrap_or(10_000), seed);
    let coverage = verify_sphere_coverage(&net.covering, delta, &samples);
    let ok = sep.ok && coverage.covered;
    let summary = format!(
        "cover-sphere d={d} delta={delta} B={b}: {} points, q={} (bound {}), separation violations {}, {} of {} samples uncovered\n",
        net.covering.points.len(),
        net.q,
        net.layout.q_bound,
        sep.violation_count,
        coverage.uncovered_count,
        coverage.samples
    );
    let files = vec![("points.csv".into(), net.covering.to_csv().into_bytes())];
    let artifact = to_json(&serde_json::json!({ "net": net, "separation": sep, "coverage": coverage }));
    Ok(Output { command: CommandId::CoverSphere, artifact, summary, files, ok })
}

fn cover_multiples_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let d = cfg.dim()?;
    let delta = cfg.positive(cfg.delta.as_ref().map(|v| v.to_vec()[0]), "delta")?;
    let b = cfg.positive(cfg.b.as_ref().map(|v| v.to_vec()[0]), "B")?;
    let (lo, hi) = parse_pair(&cfg.need(&cfg.interval, "interval")?, "interval")?;
    let seed = cfg.seed()?;
    let cov = cover_multiples(d, delta, b, (lo, hi), cfg.max_points.unwrap_or(DEFAULT_MAX_POINTS)).map_err(run_err)?;
    let count = cfg.samples.unwrap_or(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphas: Vec<f64> = (0..count.min(200)).map(|_| lo + rng.gen::<f64>() * (hi - lo)).collect();
    let dirs = sphere_samples(d, count, seed.wrapping_add(1));
    let report = verify_multiples(&cov.triples, &alphas, &dirs, delta);
    let summary = format!(
        "cover-multiples d={d} delta={delta} B={} on [{lo},{hi}]: {} triples, q={}, {} uncovered samples\n",
        cov.b,
        cov.triples.len(),
        cov.q,
        report.uncovered_count
    );
    let ok = report.covered;
    let artifact = to_json(&serde_json::json!({ "covering": cov, "coverage": report }));
    Ok(Output { command: CommandId::CoverMultiples, artifact, summary, files: vec![], ok })
}

fn verify_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let path = cfg.need(&cfg.input, "input")?;
    let text = std::fs::read_to_string(&path).map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| cfg_err(format!("malformed input: {e}")))?;
    let inner = value.get("covering").cloned().unwrap_or(value);
    let cov: Covering = serde_json::from_value(inner).map_err(|e| cfg_err(format!("input is not a covering: {e}")))?;
    let k = cfg.cube_boxes(cov.dim)?;
    let c = cfg.c.unwrap_or(cov.params.c);
    let sep = verify_separation(&cov, c);
    let step = cfg.step.unwrap_or(cov.params.epsilon / (10.0 * cov.lambda_max()));
    let approx = verify_approx(&cov, &k, step);
    let ok = sep.ok && approx.covered;
    let summary = format!(
        "verify: {} points, separation violations {}, approx covered={} sound={} uncovered={}\n",
        cov.points.len(),
        sep.violation_count,
        approx.covered,
        approx.sound,
        approx.uncovered_count
    );
    let mut files = vec![("separation.csv".into(), sep.to_csv().into_bytes())];
    files.push(("approx.csv".into(), approx.to_csv().into_bytes()));
    let artifact = to_json(&serde_json::json!({ "separation": sep, "approx": approx }));
    Ok(Output { command: CommandId::Verify, artifact, summary, files, ok })
}

/// The library calls behind `peel`, shared with tests that compare outputs.
pub fn peel_outcome(
    seq: &ParamSequence,
    q: &Q,
    interval: &Interval,
    stages: usize,
    seed: u64,
) -> Result<PeelOutcome, CliError> {
    let params = choose_obstruction_params(q, interval, seq).map_err(run_err)?;
    let candidate = adversarial_candidate(seq, interval, &params, stages * params.m, seed);
    peel_certify(seq, interval, &candidate, &params, stages).map_err(run_err)
}

fn peel_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq = cfg.sequence("2^n")?;
    let q = cfg.need(&cfg.q, "q")?.to_q().map_err(cfg_err)?;
    let interval = Interval::parse(&cfg.need(&cfg.interval, "interval")?).map_err(|e| cfg_err(e.to_string()))?;
    let seed = cfg.seed.unwrap_or(0);
    let stages = cfg.stages.unwrap_or(10);
    let outcome = peel_outcome(&seq, &q, &interval, stages, seed)?;
    let (ok, summary) = match &outcome {
        PeelOutcome::Certificate(c) => (
            true,
            format!(
                "peel: certificate with m={} N={}, {} stages, uncovered point {}\n",
                c.params.m,
                c.params.n,
                c.stages.len(),
                crate::rational::fmt_q(&c.uncovered_point)
            ),
        ),
        PeelOutcome::Refutation(r) => (false, format!("peel: refuted ({}): {}\n", r.hypothesis, r.detail)),
    };
    Ok(Output { command: CommandId::Peel, artifact: to_json(&outcome), summary, files: vec![], ok })
}

fn simulate_chc(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq = cfg.sequence("n")?;
    let grid = cfg.grid()?;
    let d = grid.d();
    let k = cfg.cube_boxes(d)?;
    let seed = cfg.seed()?;
    let eps = cfg.eps_target.unwrap_or(0.1);
    let v = BumpSum::single(vec![0.0; d], cfg.radius.unwrap_or(1.0), 1.0);
    let opts = CommonHcOptions { samples: cfg.samples.unwrap_or(100), seed, ..Default::default() };
    let run = common_hc_construct(&k, &seq, &BumpSum::zero(d), &v, eps, &grid, &opts).map_err(run_err)?;
    let worst = run.report.samples.iter().map(|s| s.best_distance).fold(0.0, f64::max);
    let summary = format!(
        "simulate-chc: C={} eps_cov={:.6} net {} points (M={}), worst sampled minimum {worst:.6} vs {} + tol {:.2e}, ok={}\n",
        run.c,
        run.eps_cov,
        run.covering.points.len(),
        run.covering.params.m,
        run.report.threshold,
        run.report.tolerance,
        run.report.ok
    );
    let mut csv = String::from("sample,a,best_n,best_distance\n");
    for (i, s) in run.report.samples.iter().enumerate() {
        let a: Vec<String> = s.a.iter().map(|x| x.to_string()).collect();
        csv.push_str(&format!("{i},{},{},{}\n", a.join(" "), s.best_n, s.best_distance));
    }
    let field = run.f.sample(&grid, &vec![0.0; d]);
    let files = vec![("samples.csv".into(), csv.into_bytes()), ("f.bin".into(), field.to_bytes())];
    Ok(Output { command: CommandId::SimulateChc, artifact: to_json(&run), summary, files, ok: run.report.ok })
}

fn simulate_fhc(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq = cfg.sequence("n")?;
    let grid = cfg.grid()?;
    let d = grid.d();
    let seed = cfg.seed()?;
    let radius = cfg.radius.unwrap_or(0.45);
    let unit = norm_lp(&BumpSum::single(vec![0.0; d], radius, 1.0).sample(&grid, &vec![0.0; d])).value;
    if unit == 0.0 {
        return Err(cfg_err("target bump is below the grid resolution"));
    }
    let target = BumpSum::single(vec![0.0; d], radius, cfg.target_norm.unwrap_or(3.0) / unit);
    let opts = FhcOptions {
        horizon: cfg.horizon.unwrap_or(5000),
        directions: cfg.samples.unwrap_or(16),
        seed,
        max_points: cfg.max_points.unwrap_or(DEFAULT_SPHERE_POINTS),
    };
    let run = fhc_vector(&[target], &seq, &grid, &opts).map_err(run_err)?;
    let mut summary = format!("simulate-fhc: B={:?} delta={:?} q={:?} gap={}\n", run.b, run.delta, run.plan.q, run.plan.gap);
    let mut csv = String::from("direction,p,n\n");
    for (i, t) in run.report.targets.iter().enumerate() {
        summary.push_str(&format!(
            "  direction {:?} p={}: {} hits, {} windows, {} missed, lower density {:.5} (bound {:.5})\n",
            t.direction,
            t.p,
            t.hits.len(),
            t.windows,
            t.windows_missed.len(),
            t.lower_density,
            t.density_bound
        ));
        for n in &t.hits {
            csv.push_str(&format!("{i},{},{n}\n", t.p));
        }
    }
    let ok = run.report.ok && run.plan_issues.is_empty();
    let files = vec![("hits.csv".into(), csv.into_bytes())];
    Ok(Output { command: CommandId::SimulateFhc, artifact: to_json(&run), summary, files, ok })
}

fn density_cmd(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq = cfg.sequence("n")?;
    let d = cfg.dim()?;
    let b = cfg.need(&cfg.b, "B")?.to_vec();
    let delta = cfg.need(&cfg.delta, "delta")?.to_vec();
    let p_max = cfg.p_max.unwrap_or(b.len());
    if b.iter().chain(&delta).any(|x| !(*x > 0.0)) {
        return Err(cfg_err("`B` and `delta` entries must be positive"));
    }
    let plan = density_blocks(&b, &delta, &seq, p_max, cfg.horizon.unwrap_or(5000), d).map_err(run_err)?;
    let issues = check_density_plan(&plan);
    let mut summary = format!("density-blocks: q={:?} gap={} bound={:.3e}\n", plan.q, plan.gap, plan.density_bound);
    for (p, s) in plan.sets.iter().enumerate() {
        summary.push_str(&format!("  N_{}: {} elements, lower density {:.5}\n", p + 1, s.len(), plan.empirical_density[p]));
    }
    for i in &issues {
        summary.push_str(&format!("issue: {i}\n"));
    }
    Ok(Output { command: CommandId::DensityBlocks, artifact: to_json(&plan), summary, files: vec![], ok: issues.is_empty() })
}

fn write_outputs(dir: &Path, out: &Output) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let name = out.command.name();
    std::fs::write(dir.join(format!("{name}.json")), &out.artifact)?;
    std::fs::write(dir.join(format!("{name}.txt")), &out.summary)?;
    for (file, bytes) in &out.files {
        std::fs::write(dir.join(format!("{name}.{file}")), bytes)?;
    }
    Ok(())
}

/// Full CLI run; returns the process exit status (0 iff every internal
/// assertion held, 2 for malformed configs, 1 otherwise).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let err = cfg_err(e.to_string().trim().to_string());
            println!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let result = merge(&cli).and_then(|cfg| {
        let out = execute(&cfg)?;
        match &cfg.out {
            Some(dir) => {
                write_outputs(dir, &out)?;
                print!("{}", out.summary);
            }
            None => {
                print!("{}", out.artifact);
                eprint!("{}", out.summary);
            }
        }
        Ok(out.ok)
    });
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            println!("{}", e.to_json());
            e.exit_code()
        }
    }
}
