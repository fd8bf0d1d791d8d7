//! Configuration, dispatch and run manifests for the `curvarb` command line.
//!
//! A run reads an optional JSON config with flat keys, applies flag
//! overrides, executes one command inside a thread pool of the requested
//! size and writes its artifacts plus `manifest.json` (config, version, wall
//! time, summary numbers and a SHA-256 for every file) to the output
//! directory.

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use curvarb::fmt::{round12, sig12};
use curvarb::mcf2d::{self, ArrivalField, FrontConfig, FrontPolygon, LevelSetConfig};
use curvarb::mincurv::{
    check_certificate_with, refine, solve_mincurv_cfg, solve_mincurv_with, CandidateSpec, CertificateConfig,
    MinCurvConfig, MinCurvField, Verdict, ZeroBoundary,
};
use curvarb::portfolio::{
    check_sufficient_volatility, generate_strategy, relative_arbitrage_verdict, GeneratingFunction, StrategyReport,
    VolatilityCondition,
};
use curvarb::sde::{self, DiskField, GradientSource, LevelField, SimConfig};
use curvarb::{build_isometry, Ball, ConvexDomain, PolytopeK};

pub const VERSION: &str = env!("CURVARB_VERSION");

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "CURV_ARB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    SolveMcf,
    SolveMincurv,
    SimulateSde,
    SimulateMarket,
    CheckCertificate,
    Tstar,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// Chart of the simplex with `d` vertices.
    #[default]
    Simplex,
    /// Unit disk.
    Disk,
    /// Chart of `{max mu_i <= 1 - delta}` for three assets.
    Diverse,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Process {
    Circle,
    #[default]
    SkewGradient,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    AnalyticDisk,
    ArrivalField,
    MincurvField,
}

impl From<Source> for GradientSource {
    fn from(s: Source) -> Self {
        match s {
            Source::AnalyticDisk => GradientSource::AnalyticDisk,
            Source::ArrivalField => GradientSource::ArrivalField,
            Source::MincurvField => GradientSource::MincurvField,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    #[default]
    Quadratic,
    Entropy,
    Geometric,
}

impl From<Generator> for GeneratingFunction {
    fn from(g: Generator) -> Self {
        match g {
            Generator::Quadratic => GeneratingFunction::Quadratic,
            Generator::Entropy => GeneratingFunction::Entropy,
            Generator::Geometric => GeneratingFunction::Geometric,
        }
    }
}

/// Everything a run needs; serialized verbatim into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    /// Number of assets; the chart has dimension `d - 1`.
    pub d: usize,
    /// Grid spacing; each command has its own default.
    pub h: Option<f64>,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub delta: f64,
    pub domain: DomainKind,
    pub candidate: String,
    pub stencil_radius: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub process: Process,
    /// Defaults to the analytic field on the disk and the wide-stencil field elsewhere.
    pub source: Option<Source>,
    /// Field CSV from `solve-mcf` or `solve-mincurv` instead of solving afresh.
    pub field: Option<PathBuf>,
    /// Start in chart coordinates; defaults to the origin.
    pub x0: Option<Vec<f64>>,
    /// Market horizon; defaults to `1 - |mu(0)|^2 + 0.05`.
    pub horizon: Option<f64>,
    pub generator: Generator,
    pub samples: usize,
    /// Keep every n-th simulated step in the CSV output, 0 for endpoints only.
    pub record_every: usize,
    /// Step cap for the wide-stencil solver; exceeding it is a nonconvergence.
    pub max_steps: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            d: 3,
            h: None,
            dt: 1e-4,
            n_paths: 1000,
            seed: 0,
            delta: 0.1,
            domain: DomainKind::Simplex,
            candidate: "quadratic".into(),
            stencil_radius: 1,
            out: PathBuf::from("out"),
            threads: None,
            process: Process::SkewGradient,
            source: None,
            field: None,
            x0: None,
            horizon: None,
            generator: Generator::Quadratic,
            samples: 20_000,
            record_every: 100,
            max_steps: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    /// Rejects parameters outside their documented ranges.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let Some(command) = self.command else { return bad("no command given".into()) };
        if !(2..=8).contains(&self.d) {
            return bad(format!("d must lie in 2..=8, got {}", self.d));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h <= 0.5) {
                return bad(format!("h must lie in (0, 0.5], got {h}"));
            }
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return bad(format!("dt must lie in (0, 0.1], got {}", self.dt));
        }
        if !(1..=10_000_000).contains(&self.n_paths) {
            return bad(format!("n_paths must lie in 1..=10^7, got {}", self.n_paths));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad(format!("delta must lie in (0, 1/2), got {}", self.delta));
        }
        if !(1..=4).contains(&self.stencil_radius) {
            return bad(format!("stencil_radius must lie in 1..=4, got {}", self.stencil_radius));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be at least 1".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return bad("x0 must be finite".into());
            }
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("horizon must be positive, got {t}"));
            }
        }
        let planar = matches!(
            command,
            CommandKind::SolveMcf | CommandKind::SimulateSde | CommandKind::SimulateMarket
        );
        if planar && self.domain != DomainKind::Disk && self.d != 3 {
            return bad(format!("{command:?} runs in the plane: d must be 3, got {}", self.d));
        }
        match command {
            CommandKind::SolveMincurv if self.domain == DomainKind::Simplex && !(3..=4).contains(&self.d) => {
                bad(format!("solve-mincurv supports d = 3 or 4, got {}", self.d))
            }
            CommandKind::Tstar if self.d > 4 => bad(format!("tstar supports d <= 4, got {}", self.d)),
            CommandKind::CheckCertificate if self.d < 3 => bad("check-certificate needs d >= 3".into()),
            CommandKind::SimulateMarket if self.domain == DomainKind::Disk => {
                bad("simulate-market needs a simplex or diverse domain".into())
            }
            _ => Ok(()),
        }
    }
}

/// Flags; each mirrors a config key.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// JSON config file with flat keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub domain: Option<DomainKind>,
    /// `quadratic`, `inscribed-ball` or a JSON candidate object.
    #[arg(long)]
    pub candidate: Option<String>,
    #[arg(long)]
    pub stencil_radius: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to CURV_ARB_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub process: Option<Process>,
    #[arg(long, value_enum)]
    pub source: Option<Source>,
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Start point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub generator: Option<Generator>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "curvarb", version = VERSION, about = "Sharp relative-arbitrage horizons via curvature-flow arrival times")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Curve shortening arrival time on a planar domain (level set and front tracking).
    SolveMcf(Flags),
    /// Wide-stencil solution of the minimum-curvature arrival equation.
    SolveMincurv(Flags),
    /// Circle or skew-gradient SDE ensembles and exit-time statistics.
    SimulateSde(Flags),
    /// Skew-gradient markets and functionally generated strategies on them.
    SimulateMarket(Flags),
    /// Sub/supersolution evidence for a candidate on the simplex chart.
    CheckCertificate(Flags),
    /// Estimate of the sharp horizon for `d` assets.
    Tstar(Flags),
    /// Run the command named in the config file.
    Run(Flags),
}

impl Cmd {
    /// Config from the file (if any), the subcommand and the flags, in that order.
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let (kind, flags) = match self {
            Cmd::SolveMcf(f) => (Some(CommandKind::SolveMcf), f),
            Cmd::SolveMincurv(f) => (Some(CommandKind::SolveMincurv), f),
            Cmd::SimulateSde(f) => (Some(CommandKind::SimulateSde), f),
            Cmd::SimulateMarket(f) => (Some(CommandKind::SimulateMarket), f),
            Cmd::CheckCertificate(f) => (Some(CommandKind::CheckCertificate), f),
            Cmd::Tstar(f) => (Some(CommandKind::Tstar), f),
            Cmd::Run(f) => (None, f),
        };
        let mut cfg = match &flags.config {
            Some(p) => RunConfig::from_json(&fs::read_to_string(p).map_err(CliError::Io)?)?,
            None => RunConfig::default(),
        };
        if kind.is_some() {
            cfg.command = kind;
        }
        flags.apply(&mut cfg);
        if cfg.threads.is_none() {
            if let Ok(v) = std::env::var(THREADS_ENV) {
                let n = v.trim().parse().map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a count")))?;
                cfg.threads = Some(n);
            }
        }
        Ok(cfg)
    }
}

impl Flags {
    fn apply(self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(d, dt, n_paths, seed, delta, domain, candidate, stencil_radius, out, process, generator, samples, record_every);
        macro_rules! set_opt {
            ($($f:ident),*) => { $(if self.$f.is_some() { cfg.$f = self.$f; })* };
        }
        set_opt!(h, threads, source, field, x0, horizon, max_steps);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] curvarb::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 2 invalid config, 3 nonconvergence, 4 I/O.
    pub fn status(&self) -> i32 {
        use curvarb::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
            CliError::Core(e) => match e {
                E::NoConvergence { .. } => 3,
                E::Io(_) | E::Csv(_) | E::Json(_) => 4,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        use curvarb::Error as E;
        match self {
            CliError::Config(_) => "invalid-config",
            CliError::Io(_) => "io",
            CliError::Core(e) => match e {
                E::InvalidDimension(_) => "invalid-dimension",
                E::InvalidArgument(_) => "invalid-argument",
                E::OutsideDomain(_) => "outside-domain",
                E::BoundaryEvaluation(_) => "boundary-evaluation",
                E::NonConvex(_) => "non-convex",
                E::GridTooCoarse(_) => "grid-too-coarse",
                E::NoConvergence { .. } => "no-convergence",
                E::NotSymmetric(_) => "not-symmetric",
                E::EmptyEnsemble => "empty-ensemble",
                E::CandidateUndefined(_) => "candidate-undefined",
                E::Parse(_) => "parse",
                E::Io(_) | E::Csv(_) | E::Json(_) => "io",
            },
        }
    }

    /// Machine-readable error record.
    pub fn to_json(&self) -> Value {
        let mut v = json!({"error": {"kind": self.kind(), "status": self.status(), "message": self.to_string()}});
        if let CliError::Core(curvarb::Error::NoConvergence { iterations, residual, history }) = self {
            v["error"]["iterations"] = json!(iterations);
            v["error"]["residual"] = json!(residual);
            v["error"]["history"] = json!(history);
        }
        v
    }
}

/// What a finished run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    /// Text printed on stdout.
    pub printed: String,
    pub summary: Value,
    /// Artifact files, relative to the output directory.
    pub files: Vec<String>,
    pub manifest: PathBuf,
}

/// Validates, runs and writes the manifest.
pub fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    fs::create_dir_all(&cfg.out)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let mut art = Artifacts { dir: cfg.out.clone(), files: Vec::new() };
    let (printed, summary) = pool.install(|| dispatch(cfg, &mut art))?;
    let mut files = Vec::new();
    for name in &art.files {
        let bytes = fs::read(cfg.out.join(name))?;
        files.push(json!({"path": name, "bytes": bytes.len(), "sha256": hex::encode(Sha256::digest(&bytes))}));
    }
    let manifest = json!({
        "version": VERSION,
        "command": cfg.command,
        "config": cfg,
        "threads": pool.current_num_threads(),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "summary": summary,
        "files": files,
    });
    let path = cfg.out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(curvarb::Error::from)? + "\n")?;
    Ok(Outcome { printed, summary, files: art.files, manifest: path })
}

struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<BufWriter<fs::File>, CliError> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(fs::File::create(self.dir.join(name))?))
    }

    fn write_json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        self.files.push(name.to_string());
        let text = serde_json::to_string_pretty(v).map_err(curvarb::Error::from)?;
        fs::write(self.dir.join(name), text + "\n")?;
        Ok(())
    }
}

fn dispatch(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    match cfg.command.expect("validated") {
        CommandKind::SolveMcf => solve_mcf(cfg, art),
        CommandKind::SolveMincurv => solve_mincurv_cmd(cfg, art),
        CommandKind::SimulateSde => simulate_sde(cfg, art),
        CommandKind::SimulateMarket => simulate_market(cfg, art),
        CommandKind::CheckCertificate => check_certificate_cmd(cfg, art),
        CommandKind::Tstar => tstar(cfg, art),
    }
}

/// Rounded for the JSON outputs.
fn r(x: f64) -> Value {
    json!(round12(x))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("values serialize")
}

/// A planar domain together with its closed-form maximum arrival time.
enum Planar {
    Polygon(PolytopeK),
    Disk(Ball),
}

impl Planar {
    fn from_config(cfg: &RunConfig) -> Result<Self, CliError> {
        Ok(match cfg.domain {
            DomainKind::Simplex => Planar::Polygon(PolytopeK::simplex(3)?),
            DomainKind::Disk => Planar::Disk(Ball::unit(2)),
            DomainKind::Diverse => Planar::Polygon(mcf2d::diverse_truncation(cfg.delta)?.0),
        })
    }

    fn domain(&self) -> &dyn ConvexDomain {
        match self {
            Planar::Polygon(k) => k,
            Planar::Disk(b) => b,
        }
    }

    fn inradius(&self) -> f64 {
        match self {
            Planar::Polygon(k) => k.inradius(),
            Planar::Disk(b) => b.radius,
        }
    }

    /// `area / pi`, exact for every convex planar domain.
    fn expected_max(&self) -> f64 {
        mcf2d::max_arrival_from_area(self.domain().measure())
    }

    fn front(&self) -> Result<FrontPolygon, CliError> {
        Ok(match self {
            Planar::Polygon(k) => FrontPolygon::from_polygon(k, 256)?,
            Planar::Disk(b) => FrontPolygon::circle([b.center[0], b.center[1]], b.radius, 256)?,
        })
    }
}

fn mincurv_config(cfg: &RunConfig) -> MinCurvConfig {
    let mut mc = MinCurvConfig::with_radius(cfg.stencil_radius);
    if let Some(n) = cfg.max_steps {
        mc.max_steps = n;
    }
    mc
}

fn solve_mcf(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let planar = Planar::from_config(cfg)?;
    let h = cfg.h.unwrap_or(planar.inradius() / 80.0);
    let run = mcf2d::arrival_grid_with(planar.domain(), h, &LevelSetConfig::default())?;
    run.field.write_csv(art.create("field.csv")?)?;
    let history = mcf2d::evolve_front(&planar.front()?, &FrontConfig::default())?;
    art.files.push("fronts.json".into());
    fs::write(art.dir.join("fronts.json"), history.to_json()?)?;
    let expected = planar.expected_max();
    let max = run.field.max_value();
    let c = run.field.critical_point();
    let summary = json!({
        "h": r(h),
        "max": r(max),
        "area_over_pi": r(expected),
        "relative_error": r((max - expected).abs() / expected),
        "critical_point": [r(c[0]), r(c[1])],
        "steps": run.steps,
        "front_arrival_max": r(2.0 * history.extinction_time()),
        "front_area_rate": history.smooth_area_rate(0.2).map(round12),
    });
    art.write_json("summary.json", &summary)?;
    Ok((pretty(&summary), summary))
}

fn solve_planar_mincurv(planar: &Planar, h: f64, cfg: &MinCurvConfig) -> Result<MinCurvField, CliError> {
    Ok(match planar {
        Planar::Polygon(k) => solve_mincurv_cfg(k, h, cfg)?,
        Planar::Disk(b) => solve_mincurv_with(b, h, cfg, &ZeroBoundary)?,
    })
}

fn field_summary(field: &MinCurvField) -> Result<Value, CliError> {
    Ok(serde_json::from_str(&field.summary_json()?).map_err(curvarb::Error::from)?)
}

fn solve_mincurv_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let mc = mincurv_config(cfg);
    let (field, expected) = if cfg.domain == DomainKind::Simplex && cfg.d == 4 {
        let k = PolytopeK::simplex(4)?;
        (solve_mincurv_cfg(&k, cfg.h.unwrap_or(k.inradius() / 6.0), &mc)?, None)
    } else {
        let planar = Planar::from_config(cfg)?;
        let h = cfg.h.unwrap_or(planar.inradius() / 40.0);
        (solve_planar_mincurv(&planar, h, &mc)?, Some(planar.expected_max()))
    };
    field.write_csv(art.create("field.csv")?)?;
    let mut summary = field_summary(&field)?;
    if let Some(e) = expected {
        summary["area_over_pi"] = r(e);
        summary["relative_error"] = r((field.max_value() - e).abs() / e);
    }
    art.write_json("summary.json", &summary)?;
    Ok((pretty(&summary), summary))
}

fn start_point(cfg: &RunConfig) -> Result<[f64; 2], CliError> {
    match cfg.x0.as_deref() {
        None => Ok([0.0, 0.0]),
        Some([a, b]) => Ok([*a, *b]),
        Some(v) => Err(CliError::Config(format!("x0 needs 2 coordinates, got {}", v.len()))),
    }
}

/// The level field driving the skew-gradient SDE, and its provenance.
fn level_field(cfg: &RunConfig, planar: &Planar) -> Result<(Box<dyn LevelField>, Source), CliError> {
    let source = cfg.source.unwrap_or(match planar {
        Planar::Disk(_) => Source::AnalyticDisk,
        Planar::Polygon(_) => Source::MincurvField,
    });
    let h = cfg.h.unwrap_or(planar.inradius() / 80.0);
    let field: Box<dyn LevelField> = match (source, &cfg.field) {
        (Source::AnalyticDisk, _) => match planar {
            Planar::Disk(b) if b.radius == 1.0 && b.center.iter().all(|c| *c == 0.0) => Box::new(DiskField),
            _ => return Err(CliError::Config("the analytic field needs the unit disk domain".into())),
        },
        (_, Some(path)) => Box::new(ArrivalField::read_csv(fs::File::open(path)?, planar.domain())?),
        (Source::ArrivalField, None) => Box::new(mcf2d::arrival_grid(planar.domain(), h)?),
        (Source::MincurvField, None) => {
            Box::new(sde::mincurv_level_field(&solve_planar_mincurv(planar, h, &mincurv_config(cfg))?)?)
        }
    };
    Ok((field, source))
}

fn sim_config(cfg: &RunConfig, source: Source, record_every: usize) -> SimConfig {
    SimConfig {
        dt: cfg.dt,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        gradient_source: source.into(),
        brownian_dim: 1,
        t_max: None,
        record_every,
    }
}

fn simulate_sde(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let planar = Planar::from_config(cfg)?;
    let x0 = start_point(cfg)?;
    let (sim, ensemble) = match cfg.process {
        Process::Circle => {
            let sim = sim_config(cfg, cfg.source.unwrap_or(Source::AnalyticDisk), cfg.record_every);
            let e = sde::circle_ensemble(x0, planar.domain(), &sim)?;
            (sim, e)
        }
        Process::SkewGradient => {
            let (field, source) = level_field(cfg, &planar)?;
            let sim = sim_config(cfg, source, cfg.record_every);
            let e = sde::skew_gradient_ensemble(x0, field.as_ref(), planar.domain(), &sim)?;
            (sim, e)
        }
    };
    sde::write_ensemble_csv(&ensemble, art.create("paths.csv")?)?;
    let stats = sde::exit_time_statistics(&ensemble)?;
    let mut summary: Value =
        serde_json::from_str(&sde::summary_json(&sim, &stats, &ensemble)?).map_err(curvarb::Error::from)?;
    summary["process"] = json!(cfg.process);
    art.write_json("summary.json", &summary)?;
    Ok((pretty(&summary), summary))
}

fn simulate_market(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let planar = Planar::from_config(cfg)?;
    let x0 = start_point(cfg)?;
    let chart = build_isometry(3)?;
    let mu0 = chart.lift(&x0);
    let horizon = cfg.horizon.unwrap_or(1.0 - mu0.iter().map(|v| v * v).sum::<f64>() + 0.05);
    let (field, source) = level_field(cfg, &planar)?;
    let sim = sim_config(cfg, source, 1);
    let markets = sde::simulate_market(x0, field.as_ref(), planar.domain(), &chart, &sim, horizon)?;
    sde::write_markets_csv(&markets, cfg.record_every, art.create("markets.csv")?)?;
    let band = 5.0 * cfg.dt.sqrt();
    let g: GeneratingFunction = cfg.generator.into();
    let mut reports = Vec::with_capacity(markets.len());
    let mut worst_margin = f64::INFINITY;
    let mut residual_ok = true;
    for m in &markets {
        let strategy = generate_strategy(m, g)?;
        let report = StrategyReport::new(m, &strategy, horizon)?;
        residual_ok &= report.self_financing_residual <= report.residual_bound;
        worst_margin = worst_margin.min(check_sufficient_volatility(m, VolatilityCondition::Trace, band)?.worst_margin);
        reports.push(report);
    }
    let verdict = relative_arbitrage_verdict(&reports.iter().map(|r| r.arbitrage).collect::<Vec<_>>());
    let rows: Vec<Value> = reports
        .iter()
        .enumerate()
        .map(|(i, rep)| {
            json!({
                "path_id": i,
                "gain": r(rep.arbitrage.gain),
                "min_value": r(rep.arbitrage.min_value),
                "initial_value": r(rep.initial_value),
                "final_value": r(rep.final_value),
                "gamma_final": r(rep.gamma_final),
                "self_financing_residual": r(rep.self_financing_residual),
                "residual_bound": r(rep.residual_bound),
            })
        })
        .collect();
    art.write_json("strategies.json", &json!(rows))?;
    let summary = json!({
        "generating_function": g.name(),
        "horizon": r(horizon),
        "paths": verdict.paths,
        "relative_arbitrage": verdict.relative_arbitrage,
        "all_nonneg": verdict.all_nonneg,
        "all_gains_positive": reports.iter().all(|rep| rep.arbitrage.gain > 0.0),
        "min_gain": r(verdict.min_gain),
        "trace_margin_min": r(worst_margin),
        "trace_band": r(band),
        "self_financing_within_bound": residual_ok,
    });
    art.write_json("summary.json", &summary)?;
    Ok((pretty(&summary), summary))
}

fn certificate(k: &PolytopeK, spec: &CandidateSpec, samples: usize) -> Result<curvarb::mincurv::CertificateReport, CliError> {
    let candidate = spec.build(k)?;
    Ok(check_certificate_with(candidate.as_ref(), k, &CertificateConfig { samples, ..CertificateConfig::default() })?)
}

fn check_certificate_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    let k = PolytopeK::simplex(cfg.d)?;
    let spec = CandidateSpec::parse(&cfg.candidate)?;
    let report = certificate(&k, &spec, cfg.samples)?;
    let summary = json!({
        "d": cfg.d,
        "candidate": report.candidate_id,
        "verdict": report.verdict,
        "bound": report.bound_value.map(round12),
        "residual_min": r(report.residual_min),
        "residual_max": r(report.residual_max),
        "boundary_min": r(report.boundary_min),
        "boundary_max": r(report.boundary_max),
        "max_value": r(report.max_value),
        "samples": report.samples,
    });
    let mut full = serde_json::to_value(&report).map_err(curvarb::Error::from)?;
    round_floats(&mut full);
    art.write_json("certificate.json", &full)?;
    Ok((pretty(&summary), summary))
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => *v = r(n.as_f64().expect("f64")),
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn tstar(cfg: &RunConfig, art: &mut Artifacts) -> Result<(String, Value), CliError> {
    match cfg.d {
        2 => {
            // two-asset markets admit arbitrage over every horizon
            let summary = json!({"d": 2, "tstar": 0.0});
            art.write_json("summary.json", &summary)?;
            Ok(("0".into(), summary))
        }
        3 => {
            let planar = Planar::from_config(cfg)?;
            let h = cfg.h.unwrap_or(planar.inradius() / 80.0);
            let field = solve_planar_mincurv(&planar, h, &mincurv_config(cfg))?;
            field.write_csv(art.create("field.csv")?)?;
            let mut summary = field_summary(&field)?;
            summary["d"] = json!(3);
            summary["tstar"] = r(field.max_value());
            summary["area_over_pi"] = r(planar.expected_max());
            art.write_json("summary.json", &summary)?;
            Ok((sig12(field.max_value()), summary))
        }
        _ => {
            let k = PolytopeK::simplex(4)?;
            let h = cfg.h.unwrap_or(k.inradius() / 6.0);
            let (refinement, fine) = refine(&k, h, &mincurv_config(cfg))?;
            fine.write_csv(art.create("field.csv")?)?;
            let lower = certificate(&k, &CandidateSpec::InscribedBall { scale: 1.0 }, cfg.samples)?;
            let upper = certificate(&k, &CandidateSpec::Quadratic, cfg.samples)?;
            let bound = |rep: &curvarb::mincurv::CertificateReport, want: Verdict| {
                (rep.verdict == want || rep.verdict == Verdict::SolutionEvidence).then_some(rep.bound_value).flatten()
            };
            let lo = bound(&lower, Verdict::SubsolutionEvidence);
            let hi = bound(&upper, Verdict::SupersolutionEvidence);
            let estimate = fine.max_value();
            let lip = fine.lipschitz_estimate();
            let summary = json!({
                "d": 4,
                "tstar": r(estimate),
                "coarse": r(refinement.coarse.max),
                "h_coarse": r(refinement.coarse.h),
                "h_fine": r(refinement.fine.h),
                "error_bar": r(refinement.error_bar),
                "extrapolated": r(refinement.extrapolated),
                "lower_bound": lo.map(round12),
                "upper_bound": hi.map(round12),
                "within_sandwich": matches!((lo, hi), (Some(a), Some(b)) if a < estimate && estimate < b),
                "quasi_concavity_violation": r(fine.quasi_concavity_violation()),
                "max_near_edges": r(fine.max_near_edges(&k)),
                "edge_bound": r(2.0 * fine.h() * lip),
                "steps": refinement.fine.steps,
            });
            art.write_json("summary.json", &summary)?;
            Ok((format!("{} +- {}", sig12(estimate), sig12(refinement.error_bar)), summary))
        }
    }
}

