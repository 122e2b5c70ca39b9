//! `ttplab` command line: configuration, run orchestration and outputs.
//!
//! Every run writes its files plus `manifest.json`, which records the
//! command, the seed, a hash of the effective configuration and a digest of
//! every output file. Usage errors exit with 2, numerical failures with 3;
//! both leave an `error.json` in the output directory when it is writable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::ensemble::{self, EnsembleConfig};
use crate::error::LabError;
use crate::fields::{self, Aabb, FieldScenario, ScenarioSpec};
use crate::kinetics::{self, P0Track, PseudoPressureState, P0};
use crate::quadrature::{QuadratureGrid, DEFAULT_ORDER};
use crate::rng;
use crate::stochastic::{self, Averaging, P0Policy, StochasticModel, TtpSpec};
use crate::ttp::{self, ITPState, TTPState};
use crate::Vec3;

#[derive(Parser, Debug, Clone)]
#[command(name = "ttplab", version, about = "Thermal tracer particles in analytic Navier-Stokes-Fourier fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 or unset: one per core).
    #[arg(long, global = true, env = "TTPLAB_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "ttplab-out")]
    pub out: PathBuf,
    /// Also write columnar files for external plotting.
    #[arg(long, global = true)]
    pub emit_plot_data: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Integrate TTP trajectories with the p0 ledger.
    Simulate,
    /// Sample and evolve a TTP ensemble, with correspondence moments.
    Ensemble,
    /// Per-α runs, Kramers-Moyal table, ordering ratios and entropy inequality.
    Stochastic,
    /// Field-equation residuals and derivative checks on a space-time lattice.
    Residuals,
    /// Solve S(f_M(t0)) = 0 for p0.
    #[command(name = "p0-solve")]
    P0Solve,
    /// Run the built-in invariant suite.
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Stochastic => "stochastic",
            Command::Residuals => "residuals",
            Command::P0Solve => "p0-solve",
            Command::Check => "check",
        }
    }
}

/// A built-in scenario by name, or an inline scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Inline(ScenarioSpec),
}

impl Default for ScenarioRef {
    fn default() -> Self {
        ScenarioRef::Named("uniform".into())
    }
}

impl ScenarioRef {
    pub fn build(&self) -> crate::Result<FieldScenario> {
        match self {
            ScenarioRef::Named(id) => FieldScenario::builtin(id),
            ScenarioRef::Inline(spec) => FieldScenario::from_spec(spec),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_particles: usize,
    /// Defaults to the degenerate box at the domain center.
    #[serde(default)]
    pub spawn_region: Option<Aabb>,
    #[serde(default = "one")]
    pub spawn_points: usize,
    #[serde(default = "ten")]
    pub snapshot_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    pub model: StochasticModel,
    #[serde(default = "monte_carlo")]
    pub mode: Averaging,
    pub m_alpha: usize,
    #[serde(default = "three")]
    pub n_max: usize,
    /// Snapshot time; defaults to t0.
    #[serde(default)]
    pub snapshot_t: Option<f64>,
    #[serde(default = "entropy_tol")]
    pub entropy_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualSection {
    #[serde(default = "five")]
    pub points_per_axis: usize,
    #[serde(default = "five")]
    pub times: usize,
    #[serde(default = "fd_h")]
    pub fd_h: f64,
}

impl Default for ResidualSection {
    fn default() -> Self {
        ResidualSection { points_per_axis: 5, times: 5, fd_h: 1e-4 }
    }
}

fn one() -> usize {
    1
}
fn three() -> usize {
    3
}
fn five() -> usize {
    5
}
fn ten() -> usize {
    10
}
fn fd_h() -> f64 {
    1e-4
}
fn entropy_tol() -> f64 {
    1e-8
}
fn monte_carlo() -> Averaging {
    Averaging::MonteCarlo
}

/// JSON run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// If present, must name the subcommand being run.
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub scenario: ScenarioRef,
    #[serde(default)]
    pub t0: Option<f64>,
    #[serde(default)]
    pub t1: Option<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub p0: P0Policy,
    #[serde(default)]
    pub quadrature_order: Option<[usize; 3]>,
    #[serde(default)]
    pub particles: Vec<TtpSpec>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub stochastic: Option<StochasticSection>,
    #[serde(default)]
    pub residuals: Option<ResidualSection>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            scenario: ScenarioRef::default(),
            t0: None,
            t1: None,
            dt: None,
            p0: P0Policy::Entropy,
            quadrature_order: None,
            particles: Vec::new(),
            record_every: 1,
            ensemble: None,
            stochastic: None,
            residuals: None,
            seed: None,
        }
    }
}

/// Failure of a run, mapped to an exit code.
#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Numerical(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Numerical(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Usage(_) => "usage",
            RunError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            RunError::Usage(m) | RunError::Numerical(m) => m,
        }
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Config(_) => RunError::Usage(e.to_string()),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

type RunResult<T> = std::result::Result<T, RunError>;

fn usage(msg: impl Into<String>) -> RunError {
    RunError::Usage(msg.into())
}

/// Files produced by a command plus headline numbers for the manifest.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: BTreeMap<String, Vec<u8>>,
    pub results: serde_json::Map<String, Value>,
    /// Set by commands that report pass/fail (check); a failure exits with 3.
    pub failed: Option<String>,
}

impl Outputs {
    fn text(&mut self, name: &str, body: String) {
        self.files.insert(name.to_string(), body.into_bytes());
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> RunResult<()> {
        let mut body = serde_json::to_vec_pretty(value).map_err(|e| RunError::Numerical(e.to_string()))?;
        body.push(b'\n');
        self.files.insert(name.to_string(), body);
        Ok(())
    }

    fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }
}

/// Everything a command needs besides its own section.
pub struct Context {
    pub command: Command,
    pub config: RunConfig,
    pub scenario: FieldScenario,
    pub seed: u64,
    pub emit_plot_data: bool,
}

impl Context {
    pub fn new(command: Command, mut config: RunConfig, seed: Option<u64>, emit_plot_data: bool) -> RunResult<Self> {
        if let Some(c) = &config.command {
            if c != command.name() {
                return Err(usage(format!("configuration is for '{c}' but the command is '{}'", command.name())));
            }
        }
        if seed.is_some() {
            config.seed = seed;
        }
        let scenario = config.scenario.build().map_err(|e| usage(e.to_string()))?;
        if let Some(dt) = config.dt {
            if !(dt > 0.0) {
                return Err(usage(format!("dt={dt} must be positive")));
            }
        }
        if config.record_every == 0 {
            return Err(usage("record_every must be at least 1"));
        }
        let seed = config.seed.unwrap_or(0);
        Ok(Context { command, config, scenario, seed, emit_plot_data })
    }

    fn t0(&self) -> f64 {
        self.config.t0.unwrap_or(self.scenario.t_span[0])
    }

    fn t1(&self) -> RunResult<f64> {
        let t1 = self.config.t1.ok_or_else(|| usage("t1 is required for this command"))?;
        if !(t1 > self.t0()) {
            return Err(usage(format!("t1={t1} must exceed t0={}", self.t0())));
        }
        Ok(t1)
    }

    fn dt(&self) -> RunResult<f64> {
        self.config.dt.ok_or_else(|| usage("dt is required for this command"))
    }

    fn grid(&self) -> RunResult<QuadratureGrid> {
        let order = self.config.quadrature_order.unwrap_or([DEFAULT_ORDER; 3]);
        Ok(QuadratureGrid::new(self.scenario.domain, order)?)
    }

    /// Hash of the effective configuration (seed override included).
    pub fn config_sha256(&self) -> String {
        let mut effective = self.config.clone();
        effective.seed = Some(self.seed);
        let body = serde_json::to_vec(&effective).expect("configuration serializes");
        hex(&Sha256::digest(&body))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Run a command to in-memory outputs, including the manifest.
pub fn execute(ctx: &Context) -> RunResult<Outputs> {
    let mut out = match ctx.command {
        Command::Simulate => simulate(ctx)?,
        Command::Ensemble => ensemble_cmd(ctx)?,
        Command::Stochastic => stochastic_cmd(ctx)?,
        Command::Residuals => residuals_cmd(ctx)?,
        Command::P0Solve => p0_solve(ctx)?,
        Command::Check => check_cmd(ctx)?,
    };
    let mut digest = Sha256::new();
    let mut files = Vec::new();
    for (name, body) in &out.files {
        let h = hex(&Sha256::digest(body));
        digest.update(name.as_bytes());
        digest.update([0]);
        digest.update(h.as_bytes());
        digest.update(b"\n");
        files.push(json!({ "name": name, "sha256": h, "bytes": body.len() }));
    }
    let manifest = json!({
        "tool": "ttplab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": ctx.command.name(),
        "scenario": ctx.scenario.id,
        "seed": ctx.seed,
        "config_sha256": ctx.config_sha256(),
        "files": files,
        "content_digest": hex(&digest.finalize()),
        "results": Value::Object(out.results.clone()),
    });
    out.json("manifest.json", &manifest)?;
    Ok(out)
}

fn write_outputs(dir: &Path, out: &Outputs) -> RunResult<()> {
    for (name, body) in &out.files {
        let path = dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| usage(format!("cannot create {}: {e}", parent.display())))?;
        }
        std::fs::write(&path, body).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn write_error(dir: &Path, command: &str, err: &RunError) {
    let report = json!({
        "command": command,
        "kind": err.kind(),
        "exit_code": err.exit_code(),
        "message": err.message(),
    });
    eprintln!("{report}");
    if std::fs::create_dir_all(dir).is_ok() {
        let _ = std::fs::write(dir.join("error.json"), format!("{:#}\n", report));
    }
}

fn load_config(path: Option<&Path>) -> RunResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("invalid configuration {}: {e}", path.display())))
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let name = cli.command.name();
    let result = (|| -> RunResult<Outputs> {
        let config = load_config(cli.config.as_deref())?;
        let ctx = Context::new(cli.command, config, cli.seed, cli.emit_plot_data)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads.unwrap_or(0))
            .build()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
        let out = pool.install(|| execute(&ctx))?;
        std::fs::create_dir_all(&cli.out).map_err(|e| usage(format!("cannot create {}: {e}", cli.out.display())))?;
        write_outputs(&cli.out, &out)?;
        Ok(out)
    })();
    match result {
        Ok(out) => match out.failed {
            None => 0,
            Some(msg) => {
                write_error(&cli.out, name, &RunError::Numerical(msg));
                3
            }
        },
        Err(e) => {
            write_error(&cli.out, name, &e);
            e.exit_code()
        }
    }
}

/// Process entry point: parse arguments and run.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

fn ledger_plot(out: &mut Outputs, ledger: &PseudoPressureState) {
    let mut s = String::from("t,p0,dp0_dt,S_fM,dS_T_dt\n");
    for r in &ledger.history {
        let _ = writeln!(s, "{},{},{},{},{}", r.t, r.p0, r.dp0_dt, r.s_fm, r.ds_t_dt);
    }
    out.text("plot/p0_ledger.csv", s);
}

fn simulate(ctx: &Context) -> RunResult<Outputs> {
    let (t0, t1, dt) = (ctx.t0(), ctx.t1()?, ctx.dt()?);
    if ctx.config.particles.is_empty() {
        return Err(usage("simulate needs at least one entry in 'particles'"));
    }
    let grid = ctx.grid()?;
    let sc = &ctx.scenario;
    let start = match ctx.config.p0 {
        P0Policy::Entropy => PseudoPressureState::initialize(sc, t0, &grid)?,
        P0Policy::Fixed { p0 } => PseudoPressureState::at(sc, t0, p0, &grid)?,
    };
    let ledger = kinetics::integrate_p0(start, sc, t1, dt, &grid)?;
    let track = P0Track::from_state(&ledger);
    let states: Vec<TTPState> = ctx
        .config
        .particles
        .iter()
        .map(|p| stochastic::spawn_from_spec(sc, p, t0, track.at(t0)))
        .collect::<crate::Result<_>>()?;
    let trajs = ttp::integrate_batch(&states, sc, &track, t1, dt, ctx.config.record_every);
    let mut out = Outputs::default();
    let mut summary = Vec::new();
    let mut worst_drift: f64 = 0.0;
    for (i, tr) in trajs.into_iter().enumerate() {
        let tr = tr?;
        out.text(&format!("trajectory_{i:03}.csv"), tr.to_csv());
        worst_drift = worst_drift.max(tr.max_beta_drift);
        summary.push(json!({
            "index": i,
            "initial": states[i],
            "status": tr.status,
            "rows": tr.rows.len(),
            "max_beta_drift": tr.max_beta_drift,
            "tangency_drift": tr.tangency_drift,
            "max_tangency_defect": tr.max_tangency_defect,
            "max_post_defect": tr.max_post_defect,
            "max_norm_defect": tr.max_norm_defect,
            "degenerate_steps": tr.degenerate_steps,
        }));
        if ctx.emit_plot_data {
            let mut s = String::from("t,x,y,z,beta\n");
            for r in &tr.rows {
                let _ = writeln!(s, "{},{},{},{},{}", r.t, r.r.x, r.r.y, r.r.z, r.beta);
            }
            out.text(&format!("plot/trajectory_{i:03}_xyz.csv"), s);
        }
    }
    out.text("p0_ledger.csv", ledger.ledger_csv());
    if ctx.emit_plot_data {
        ledger_plot(&mut out, &ledger);
    }
    out.json("simulate.json", &json!({ "particles": summary, "p0_initial": ledger.history[0].p0 }))?;
    out.result("p0_initial", json!(ledger.history[0].p0));
    out.result("max_beta_drift", json!(worst_drift));
    Ok(out)
}

fn ensemble_cmd(ctx: &Context) -> RunResult<Outputs> {
    let (t0, t1, dt) = (ctx.t0(), ctx.t1()?, ctx.dt()?);
    let sec = ctx.config.ensemble.as_ref().ok_or_else(|| usage("ensemble needs an 'ensemble' section"))?;
    let sc = &ctx.scenario;
    let grid = ctx.grid()?;
    let c = sc.domain.center();
    let cfg = EnsembleConfig {
        n_particles: sec.n_particles,
        seed: ctx.seed,
        spawn_region: sec.spawn_region.unwrap_or(Aabb { min: [c.x, c.y, c.z], max: [c.x, c.y, c.z] }),
        t0,
        spawn_points: sec.spawn_points,
    };
    let start = match ctx.config.p0 {
        P0Policy::Entropy => PseudoPressureState::initialize(sc, t0, &grid)?,
        P0Policy::Fixed { p0 } => PseudoPressureState::at(sc, t0, p0, &grid)?,
    };
    let run = ensemble::evolve_ensemble(&cfg, sc, &start, &grid, t1, dt, sec.snapshot_every)?;
    let mut out = Outputs::default();
    let ledger: Vec<Value> = run
        .ledger
        .history
        .iter()
        .map(|r| json!({ "t": r.t, "p0": r.p0, "S_fM": r.s_fm, "dS_T_dt": r.ds_t_dt }))
        .collect();
    out.json(
        "ensemble.json",
        &json!({
            "config": cfg,
            "spawn_points": run.spawn_points,
            "snapshots": run.snapshots,
            "entropy_ledger": ledger,
            "failures": run.failures,
        }),
    )?;
    out.text("p0_ledger.csv", run.ledger.ledger_csv());
    if ctx.emit_plot_data {
        let mut s = String::from("t,point,n,rho_hat,vx_hat,vy_hat,vz_hat,p1_hat,p1_stderr,p1_ref\n");
        for snap in &run.snapshots {
            for (p, m) in snap.moments.iter().enumerate() {
                if let Some(m) = m {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{},{},{},{},{}",
                        snap.t, p, m.n_samples, m.rho_hat, m.v_hat.x, m.v_hat.y, m.v_hat.z, m.p1_hat, m.stderr.p1, m.p1_ref
                    );
                }
            }
        }
        out.text("plot/moments.csv", s);
        ledger_plot(&mut out, &run.ledger);
    }
    let worst = run
        .snapshots
        .iter()
        .flat_map(|s| s.moments.iter().flatten())
        .map(|m| m.max_z())
        .fold(0.0, f64::max);
    out.result("max_moment_z", json!(worst));
    out.result("failures", json!(run.failures.total()));
    Ok(out)
}

fn stochastic_cmd(ctx: &Context) -> RunResult<Outputs> {
    let (t0, t1, dt) = (ctx.t0(), ctx.t1()?, ctx.dt()?);
    let sec = ctx.config.stochastic.as_ref().ok_or_else(|| usage("stochastic needs a 'stochastic' section"))?;
    let spec = ctx.config.particles.first().ok_or_else(|| usage("stochastic needs one entry in 'particles'"))?;
    let sc = &ctx.scenario;
    if sc.alpha_hooks.len() != sec.model.k() {
        return Err(usage(format!("model has {} components, scenario has {} α hooks", sec.model.k(), sc.alpha_hooks.len())));
    }
    let grid = ctx.grid()?;
    let draws = sec.model.draws(sec.mode, sec.m_alpha, ctx.seed)?;
    let bundle = stochastic::langevin_run(sc, spec, &draws, ctx.config.p0, t0, t1, dt, &grid, ctx.config.record_every)?;
    let ts = sec.snapshot_t.unwrap_or(t0);
    let snaps = stochastic::bundle_snapshots(&bundle, sc, &spec.r0, ts, spec.beta, &spec.direction)?;
    let km = stochastic::kramers_moyal(&snaps, &draws, sec.n_max)?;
    let ordering = stochastic::ordering_report(&snaps, &draws)?;
    let ineq = stochastic::entropy_inequality_check(sc, &draws, t0, &grid, sec.entropy_tol)?;
    let mut out = Outputs::default();
    out.json("km.json", &km)?;
    out.json("ordering.json", &ordering)?;
    out.json("entropy_inequality.json", &ineq)?;
    let members: Vec<Value> = bundle
        .members
        .iter()
        .map(|m| match &m.run {
            Ok(r) => json!({
                "alpha": m.alpha,
                "weight": m.weight,
                "p0_initial": r.ledger.history[0].p0,
                "status": r.trajectory.status,
                "max_beta_drift": r.trajectory.max_beta_drift,
                "final": r.trajectory.final_row(),
            }),
            Err(e) => json!({ "alpha": m.alpha, "weight": m.weight, "error": e }),
        })
        .collect();
    out.json(
        "bundle.json",
        &json!({ "mode": bundle.mode, "success_fraction": bundle.success_fraction, "members": members, "snapshots": snaps }),
    )?;
    if ctx.emit_plot_data {
        let mut s = String::from("member,t,x,y,z,beta\n");
        for (i, m) in bundle.members.iter().enumerate() {
            if let Ok(r) = &m.run {
                for row in &r.trajectory.rows {
                    let _ = writeln!(s, "{i},{},{},{},{},{}", row.t, row.r.x, row.r.y, row.r.z, row.beta);
                }
            }
        }
        out.text("plot/members.csv", s);
    }
    out.result("success_fraction", json!(bundle.success_fraction));
    out.result("entropy_inequality_holds", json!(ineq.holds));
    if !ineq.holds {
        out.failed = Some(format!(
            "entropy inequality violated: S(<f1>)={} < <S(f1)>={}",
            ineq.s_of_mean, ineq.mean_of_s
        ));
    }
    Ok(out)
}

fn lattice(domain: &Aabb, n: usize) -> Vec<Vec3> {
    // Cell-centred points keep central-difference stencils inside the box.
    let mut pts = Vec::with_capacity(n * n * n);
    let at = |a: usize, i: usize| domain.min[a] + (domain.max[a] - domain.min[a]) * (i as f64 + 0.5) / n as f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                pts.push(Vec3::new(at(0, i), at(1, j), at(2, k)));
            }
        }
    }
    pts
}

fn time_samples(t_span: [f64; 2], n: usize) -> Vec<f64> {
    (0..n).map(|i| t_span[0] + (t_span[1] - t_span[0]) * (i as f64 + 0.5) / n as f64).collect()
}

fn residuals_cmd(ctx: &Context) -> RunResult<Outputs> {
    let sec = ctx.config.residuals.clone().unwrap_or_default();
    if sec.points_per_axis == 0 || sec.times == 0 || !(sec.fd_h > 0.0) {
        return Err(usage("residuals needs positive points_per_axis, times and fd_h"));
    }
    let sc = &ctx.scenario;
    let pts = lattice(&sc.domain, sec.points_per_axis);
    let times = time_samples(sc.t_span, sec.times);
    let mut csv = String::from("x,y,z,t,continuity,momentum_x,momentum_y,momentum_z,fourier\n");
    let (mut worst, mut fd, mut fd_half) = (0.0f64, 0.0f64, 0.0f64);
    for &t in &times {
        for r in &pts {
            let res = fields::residuals(sc, r, t)?;
            worst = worst.max(res.max_abs());
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                r.x, r.y, r.z, t, res.continuity, res.momentum.x, res.momentum.y, res.momentum.z, res.fourier
            );
            fd = fd.max(fields::fd_check(sc, r, t, sec.fd_h)?);
            fd_half = fd_half.max(fields::fd_check(sc, r, t, 0.5 * sec.fd_h)?);
        }
    }
    let mut out = Outputs::default();
    out.text("residuals.csv", csv);
    let summary = json!({
        "points": pts.len() * times.len(),
        "max_abs_residual": worst,
        "fd_h": sec.fd_h,
        "fd_max_deviation": fd,
        "fd_max_deviation_half_h": fd_half,
    });
    out.json("residuals.json", &summary)?;
    out.result("max_abs_residual", json!(worst));
    out.result("fd_max_deviation", json!(fd));
    Ok(out)
}

fn p0_solve(ctx: &Context) -> RunResult<Outputs> {
    let t0 = ctx.t0();
    let sc = &ctx.scenario;
    let grid = ctx.grid()?;
    let p0 = kinetics::solve_initial_p0(sc, t0, &grid)?;
    let s = kinetics::gaussian_entropy(sc, p0, t0, &grid)?;
    let p_inf = kinetics::p0_infimum(sc, t0, &grid)?;
    let mut out = Outputs::default();
    out.json("p0.json", &json!({ "t0": t0, "p0": p0, "S_fM": s, "p0_infimum": p_inf, "order": grid.order }))?;
    out.result("p0", json!(p0));
    out.result("S_fM", json!(s));
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckItem {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type CheckFn = fn(u64) -> crate::Result<(bool, String)>;

/// The built-in invariant suite, sized to run in a few seconds.
pub fn invariant_suite(seed: u64) -> Vec<CheckItem> {
    let checks: Vec<(&'static str, CheckFn)> = vec![
        ("exact scenario residuals", check_residuals),
        ("derivatives vs finite differences", check_fd),
        ("uniform p0 closed form", check_uniform_p0),
        ("omega parallel component", check_omega),
        ("force decomposition", check_forces),
        ("beta invariance on rotation", check_beta),
        ("f1 normalization and moments", check_moments),
        ("velocity variance", check_hre),
        ("delta model reproduces deterministic run", check_delta),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f(seed) {
            Ok((pass, detail)) => CheckItem { name, pass, detail },
            Err(e) => CheckItem { name, pass: false, detail: format!("error: {e}") },
        })
        .collect()
}

fn check_residuals(_: u64) -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for id in ["uniform", "rigid-rotation", "taylor-green", "couette", "manufactured-compressible"] {
        let sc = FieldScenario::builtin(id)?;
        for t in time_samples(sc.t_span, 3) {
            for r in lattice(&sc.domain, 3) {
                worst = worst.max(fields::residuals(&sc, &r, t)?.max_abs());
            }
        }
    }
    Ok((worst < 1e-8, format!("max residual {worst:.2e}")))
}

fn check_fd(_: u64) -> crate::Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for id in ["taylor-green", "manufactured-compressible"] {
        let sc = FieldScenario::builtin(id)?;
        for r in lattice(&sc.domain, 2) {
            worst = worst.max(fields::fd_check(&sc, &r, 0.5 * (sc.t_span[0] + sc.t_span[1]), 1e-4)?);
        }
    }
    Ok((worst < 1e-6, format!("max deviation {worst:.2e}")))
}

fn check_uniform_p0(_: u64) -> crate::Result<(bool, String)> {
    let sc = FieldScenario::builtin("uniform")?;
    let grid = QuadratureGrid::cubic(sc.domain, 4)?;
    let p0 = kinetics::solve_initial_p0(&sc, 0.0, &grid)?;
    let exact = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E);
    Ok(((p0 - exact).abs() < 1e-10, format!("p0 = {p0}, closed form {exact}")))
}

fn rotation_states(seed: u64, count: u64) -> crate::Result<(FieldScenario, Vec<TTPState>)> {
    let sc = FieldScenario::builtin("rigid-rotation")?;
    let mut states = Vec::new();
    for i in 0..count {
        let mut g = rng::stream(seed, i);
        let r = Vec3::new(g.random_range(-1.5..1.5), g.random_range(-1.5..1.5), g.random_range(-1.0..1.0));
        if r.xy().norm() < 0.2 {
            continue;
        }
        let s = ensemble::sample_ttp(&sc, &r, 0.0, P0::steady(1.0), &mut g)?;
        states.push(s);
    }
    Ok((sc, states))
}

fn check_omega(seed: u64) -> crate::Result<(bool, String)> {
    let (sc, states) = rotation_states(seed, 200)?;
    let mut worst: f64 = 0.0;
    for s in &states {
        let sample = fields::eval_sample(&sc, &s.r, 0.0, &[])?;
        let kf = kinetics::kinetic_fields(&sample, P0::steady(1.0), &sc)?;
        let b = kf.b.ok_or(LabError::DegenerateGradient { r: [s.r.x, s.r.y, s.r.z] })?;
        let om = ttp::omega(&sc, s, 0.0, P0::steady(1.0))?;
        worst = worst.max((om.dot(&b) + fields::vorticity(&sample).dot(&b)).abs());
    }
    Ok((worst < 1e-10, format!("max |Ω·b + ξ·b| {worst:.2e}")))
}

fn check_forces(seed: u64) -> crate::Result<(bool, String)> {
    let (sc, states) = rotation_states(seed, 200)?;
    let mut worst: f64 = 0.0;
    let p0 = P0::steady(1.0);
    for s in &states {
        let total = ttp::ttp_mean_field(&sc, s, 0.0, p0)?;
        let itp = ttp::itp_mean_field_gaussian(&sc, &ITPState { r: s.r, u: s.u(), t: 0.0 }, 0.0, p0)?;
        let gauge = ttp::gauge_field_ttp(&sc, s, 0.0, p0)?;
        worst = worst.max((total - itp - gauge).amax() / total.amax().max(1.0));
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn check_beta(seed: u64) -> crate::Result<(bool, String)> {
    let (mut sc, states) = rotation_states(seed, 8)?;
    sc.domain = Aabb::new([-2.0, -2.0, -100.0], [2.0, 2.0, 100.0])?;
    let trajs = ttp::integrate_batch(&states, &sc, &P0Track::steady(1.0), std::f64::consts::PI, 1e-3, 1000);
    let mut worst: f64 = 0.0;
    for t in trajs {
        let t = t?;
        if !matches!(t.status, ttp::TrajectoryStatus::Completed) {
            return Ok((false, format!("trajectory ended early: {:?}", t.status)));
        }
        worst = worst.max(t.max_beta_drift);
    }
    Ok((worst < 1e-8, format!("max relative β drift {worst:.2e}")))
}

fn check_moments(seed: u64) -> crate::Result<(bool, String)> {
    let sc = FieldScenario::builtin("rigid-rotation")?;
    let r = Vec3::new(0.8, -0.3, 0.1);
    let sample = fields::eval_sample(&sc, &r, 0.0, &[])?;
    let kf = kinetics::kinetic_fields(&sample, P0::steady(1.0), &sc)?;
    let mass = ensemble::f1m_mass(sample.rho, kf.v_th);
    let pressure = ensemble::f1m_pressure(sample.rho, kf.v_th);
    let samples = ensemble::sample_at_point(&sc, &r, 0.0, P0::steady(1.0), 20_000, seed)?;
    let m = ensemble::estimate_moments(&samples, &sc, &P0Track::steady(1.0), &sc.domain)?;
    let pass = (mass - sample.rho).abs() < 1e-10 && (pressure - kf.p1).abs() < 1e-10 * kf.p1 && m.max_z() < 5.0;
    Ok((pass, format!("mass {mass}, pressure {pressure} vs {}, max z {:.2}", kf.p1, m.max_z())))
}

fn check_hre(seed: u64) -> crate::Result<(bool, String)> {
    let sc = FieldScenario::builtin("rigid-rotation")?;
    let rep = ensemble::hre_variance_check(&sc, &Vec3::new(0.5, 0.5, 0.0), 0.0, P0::steady(1.0), 100_000, seed)?;
    let z = (rep.lhs - rep.rhs).abs() / rep.stderr;
    Ok((z < 5.0, format!("lhs {} rhs {} ({z:.2} stderr)", rep.lhs, rep.rhs)))
}

fn check_delta(_: u64) -> crate::Result<(bool, String)> {
    let sc = FieldScenario::builtin("rigid-rotation")?.with_hooks(vec![fields::AlphaHook {
        param: "omega".into(),
        amplitude: 0.1,
    }]);
    let grid = QuadratureGrid::new(sc.domain, [4, 4, 1])?;
    let spec = TtpSpec { r0: Vec3::new(1.0, 0.0, 0.0), beta: 0.7, direction: Vec3::new(0.0, 1.0, 0.3) };
    let policy = P0Policy::Fixed { p0: 1.0 };
    let det = stochastic::run_deterministic(&sc, &spec, policy, 0.0, 0.5, 0.01, &grid, 1)?;
    let draws = StochasticModel::delta(&[0.0]).draws(Averaging::MonteCarlo, 3, 0)?;
    let bundle = stochastic::langevin_run(&sc, &spec, &draws, policy, 0.0, 0.5, 0.01, &grid, 1)?;
    let same = bundle.members.iter().all(|m| m.run.as_ref().map(|r| r == &det).unwrap_or(false));
    Ok((same, format!("{} members bit-identical: {same}", bundle.members.len())))
}

fn check_cmd(ctx: &Context) -> RunResult<Outputs> {
    let items = invariant_suite(ctx.seed);
    let passed = items.iter().filter(|i| i.pass).count();
    let failed = items.len() - passed;
    let mut out = Outputs::default();
    out.json("check.json", &json!({ "passed": passed, "failed": failed, "checks": items }))?;
    out.result("passed", json!(passed));
    out.result("failed", json!(failed));
    if failed > 0 {
        let names: Vec<&str> = items.iter().filter(|i| !i.pass).map(|i| i.name).collect();
        out.failed = Some(format!("{failed} invariant check(s) failed: {}", names.join(", ")));
    }
    Ok(out)
}
