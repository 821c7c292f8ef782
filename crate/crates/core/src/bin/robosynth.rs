use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use robosynth::cloop::{
    iss_proxy, roa_from_dataset, sample_initial_states, simulate, simulate_rhc, validate,
    DisturbanceSampler, ValidationConfig, DEFAULT_ROLLOUTS_PER_STATE, DEFAULT_STEPS,
};
use robosynth::datagen::{
    default_workers, generate, generate_grid, oracle_action, random_states, Dataset, Sampling,
};
use robosynth::error::{Error, Result};
use robosynth::manifest::{Manifest, RunConfig};
use robosynth::msa::{exact_solve, SAConfig};
use robosynth::nnfs::{size_for_width, train, TrainConfig, TrainingMeta};
use robosynth::policy::{Policy, PolicyModel};
use robosynth::problem::ProblemSpec;
use robosynth::quifs::{estimate_l0, lattice_data, verify_uniform, QuifsConfig, QuifsModel};
use robosynth::sip::Transcription;

#[derive(Parser)]
#[command(
    name = "robosynth",
    version,
    about = "Explicit feedback synthesis for robust linear MPC"
)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "ROBOSYNTH_WORKERS")]
    workers: Option<usize>,
    /// Directory for outputs without an explicit path and for the manifest.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Problem spec utilities.
    Spec {
        #[command(subcommand)]
        cmd: SpecCmd,
    },
    /// Exact solve at one state.
    Solve(SolveArgs),
    /// Label a grid or random sample of states.
    Datagen(DatagenArgs),
    /// Fit a learned policy.
    Learn {
        #[command(subcommand)]
        cmd: LearnCmd,
    },
    /// Train a network policy.
    Train {
        #[command(subcommand)]
        cmd: TrainCmd,
    },
    /// Evaluate a stored policy.
    Policy {
        #[command(subcommand)]
        cmd: PolicyCmd,
    },
    /// Closed-loop rollout.
    Simulate(SimulateArgs),
    /// Feasibility masks over a grid.
    Roa(RoaArgs),
    /// Probabilistic validation of a policy.
    Validate(ValidateArgs),
}

#[derive(Subcommand)]
enum SpecCmd {
    /// Check a spec file and print its hash and dimensions.
    Validate { spec: String },
}

#[derive(Subcommand)]
enum LearnCmd {
    /// Quasi-interpolation policy from a grid dataset.
    Quifs(QuifsArgs),
}

#[derive(Subcommand)]
enum TrainCmd {
    /// ReLU network regression on a dataset.
    Nn(NnArgs),
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Print `u = policy(x)`.
    Eval {
        #[arg(long, alias = "model")]
        policy: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x: Vec<f64>,
        /// Refuse the policy unless it was built for this spec.
        #[arg(long)]
        spec: Option<String>,
    },
}

#[derive(Args, Clone, Default)]
struct SaArgs {
    /// `desk` or `full`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    step_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Spec file, or `example1` / `example2`.
    #[arg(long)]
    spec: Option<String>,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    x0: Vec<f64>,
    #[command(flatten)]
    sa: SaArgs,
    /// Annealing history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    spec: Option<String>,
    /// Grid step over the state set.
    #[arg(long, conflicts_with = "random")]
    h: Option<f64>,
    /// Number of uniform random states instead of a grid.
    #[arg(long)]
    random: Option<usize>,
    #[command(flatten)]
    sa: SaArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QuifsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    spec: Option<String>,
    /// Target uniform error; defaults to the spec's ε.
    #[arg(long)]
    eps: Option<f64>,
    /// Lipschitz rank; estimated from the data when absent.
    #[arg(long)]
    l0: Option<f64>,
    /// `laguerre_gaussian6` or `gaussian2`.
    #[arg(long)]
    generator: Option<String>,
    /// Fresh exact solves for the uniform-error check (0 skips it).
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NnArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    width: Option<usize>,
    /// Hidden layers.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Uniform-error threshold for the probe check.
    #[arg(long)]
    eps: Option<f64>,
    /// Lipschitz rank for the sizing report; estimated from the data when absent.
    #[arg(long)]
    l0: Option<f64>,
    #[arg(long)]
    probes: Option<usize>,
    /// Print the depth the approximation bound certifies at this width.
    #[arg(long)]
    report_certified_depth: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: Option<String>,
    /// Learned policy; omit with `--rhc`.
    #[arg(long, required_unless_present = "rhc")]
    policy: Option<PathBuf>,
    /// Solve the exact problem online at every step.
    #[arg(long)]
    rhc: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<usize>,
    /// `uniform`, `vertex` or `zero`.
    #[arg(long)]
    sampler: Option<DisturbanceSampler>,
    /// Neighbourhood radius for the entry-time report.
    #[arg(long, default_value_t = 0.3)]
    radius: f64,
    #[command(flatten)]
    sa: SaArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RoaArgs {
    #[arg(long)]
    spec: Option<String>,
    /// Reuse the feasibility flags of a grid dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    h: Option<f64>,
    #[command(flatten)]
    sa: SaArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    spec: Option<String>,
    #[arg(long)]
    policy: PathBuf,
    /// Grid dataset whose fully feasible cells supply initial states.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    delta_h: Option<f64>,
    #[arg(long)]
    mu_crit: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    rollouts_per_state: Option<usize>,
    #[arg(long)]
    sampler: Option<DisturbanceSampler>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Command failed its own acceptance threshold.
#[derive(Debug)]
struct Unmet(String);

enum Failure {
    Infeasible(String),
    Unmet(Unmet),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::OutsideFeasibleSet { .. } => Failure::Infeasible(e.to_string()),
            e => Failure::Error(e),
        }
    }
}

impl From<Unmet> for Failure {
    fn from(u: Unmet) -> Self {
        Failure::Unmet(u)
    }
}

type CmdResult = std::result::Result<(), Failure>;

struct Ctx {
    cfg: RunConfig,
    workers: usize,
    out_dir: PathBuf,
}

impl Ctx {
    fn spec(&self, flag: &Option<String>) -> Result<ProblemSpec> {
        let name = flag
            .clone()
            .or_else(|| self.cfg.spec_path.as_ref().map(|p| p.display().to_string()))
            .ok_or_else(|| {
                Error::InvalidArgument(
                    "no spec given (use --spec or spec_path in the config)".into(),
                )
            })?;
        load_spec(&name)
    }

    fn sa(&self, a: &SaArgs) -> Result<SAConfig> {
        let s = &self.cfg.sa;
        let preset = a
            .preset
            .clone()
            .or_else(|| s.preset.clone())
            .unwrap_or_else(|| "desk".into());
        let mut sa = SAConfig::preset(&preset)?;
        if let Some(v) = a.iters.or(s.iters) {
            sa.iters = v;
        }
        if let Some(v) = a.t0.or(s.t0) {
            sa.t0 = v;
        }
        if let Some(v) = a.decay.or(s.decay) {
            sa.decay = v;
        }
        if let Some(v) = a.step_scale.or(s.step_scale) {
            sa.step_scale = v;
        }
        sa.seed = a.seed.or(self.cfg.seed).unwrap_or(0);
        sa.validate()?;
        Ok(sa)
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.cfg.seed).unwrap_or(0)
    }

    fn output(&self, flag: &Option<PathBuf>, default_name: &str) -> Result<PathBuf> {
        let path = flag
            .clone()
            .unwrap_or_else(|| self.out_dir.join(default_name));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        Ok(path)
    }

    fn finish(&self, manifest: &Manifest) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = manifest.write(&self.out_dir)?;
        eprintln!("manifest: {}", path.display());
        Ok(())
    }
}

fn load_spec(name: &str) -> Result<ProblemSpec> {
    if !Path::new(name).exists() {
        match name {
            "example1" => return Ok(ProblemSpec::example1()),
            "example2" => return Ok(ProblemSpec::example2()),
            _ => {}
        }
    }
    ProblemSpec::load(name)
}

fn load_dataset(path: &Path, spec: &ProblemSpec) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "dataset {} not found (run `datagen` first)",
            path.display()
        )));
    }
    let ds = Dataset::load(path)?;
    ds.check_spec(spec)?;
    Ok(ds)
}

fn load_policy(path: &Path, spec: &ProblemSpec) -> Result<PolicyModel> {
    if !path.exists() {
        return Err(Error::Dependency(format!(
            "policy {} not found (run `learn quifs` or `train nn` first)",
            path.display()
        )));
    }
    let p = PolicyModel::load(path)?;
    p.check_spec(&spec.hash())?;
    Ok(p)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible(msg)) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Unmet(Unmet(msg))) => {
            eprintln!("threshold not met: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let workers = cli.workers.or(cfg.workers).unwrap_or_else(default_workers);
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| ".".into());
    let ctx = Ctx {
        cfg,
        workers,
        out_dir,
    };
    match cli.cmd {
        Cmd::Spec {
            cmd: SpecCmd::Validate { spec },
        } => cmd_spec_validate(&spec),
        Cmd::Solve(a) => cmd_solve(&ctx, a),
        Cmd::Datagen(a) => cmd_datagen(&ctx, a),
        Cmd::Learn {
            cmd: LearnCmd::Quifs(a),
        } => cmd_learn_quifs(&ctx, a),
        Cmd::Train {
            cmd: TrainCmd::Nn(a),
        } => cmd_train_nn(&ctx, a),
        Cmd::Policy {
            cmd: PolicyCmd::Eval { policy, x, spec },
        } => cmd_policy_eval(&policy, &x, spec.as_deref()),
        Cmd::Simulate(a) => cmd_simulate(&ctx, a),
        Cmd::Roa(a) => cmd_roa(&ctx, a),
        Cmd::Validate(a) => cmd_validate(&ctx, a),
    }
}

fn cmd_spec_validate(name: &str) -> CmdResult {
    let spec = load_spec(name)?;
    let dims = spec.dims();
    println!("valid");
    println!("hash {}", spec.hash());
    println!(
        "d={} m={} n_w={} N={} n_z={} eps={}",
        dims.d,
        dims.m,
        dims.n_w,
        dims.horizon,
        spec.n_z(),
        spec.eps()
    );
    Ok(())
}

fn cmd_solve(ctx: &Ctx, a: SolveArgs) -> CmdResult {
    let spec = ctx.spec(&a.spec)?;
    let sa = ctx.sa(&a.sa)?;
    let res = exact_solve(&spec, &a.x0, &sa)?;
    let mut manifest = Manifest::new("solve", spec.hash(), json!({ "x0": a.x0, "sa": sa }));
    if let Some(path) = &a.history {
        res.write_history_csv(path)?;
        manifest.add_output(path)?;
    }
    println!("feasible {}", res.feasible);
    if !res.feasible {
        ctx.finish(&manifest)?;
        return Err(Failure::Infeasible(format!(
            "x0 = [{}] is outside the feasible set",
            fmt_vec(&a.x0)
        )));
    }
    println!("value {:.6}", res.value);
    println!("u0 {}", fmt_vec(&res.first_control().unwrap_or_default()));
    println!(
        "inner_solves {} accepted {} stalls {}",
        res.inner_solves, res.accepted, res.stalls
    );
    ctx.finish(&manifest)?;
    Ok(())
}

fn cmd_datagen(ctx: &Ctx, a: DatagenArgs) -> CmdResult {
    let spec = ctx.spec(&a.spec)?;
    let sa = ctx.sa(&a.sa)?;
    let ds = match (a.random, a.h.or(ctx.cfg.grid.h)) {
        (Some(n), _) => {
            let states = random_states(spec.state_set(), n, sa.seed)?;
            let mut ds = generate(&spec, &states, &sa, ctx.workers)?;
            ds.meta.sampling = Sampling::Random {
                count: n,
                seed: sa.seed,
            };
            ds
        }
        (None, Some(h)) => generate_grid(&spec, h, &sa, ctx.workers)?,
        (None, None) => return Err(Error::InvalidArgument("give --h or --random".into()).into()),
    };
    let out = ctx.output(&a.out, "dataset.csv")?;
    ds.save(&out)?;
    println!(
        "{} states, {} feasible, {} infeasible ({:.2}%), {} stalled",
        ds.len(),
        ds.n_feasible(),
        ds.n_infeasible(),
        100.0 * ds.infeasible_fraction(),
        ds.meta.stalled.len()
    );
    let mut manifest = Manifest::new(
        "datagen",
        spec.hash(),
        json!({ "sampling": ds.meta.sampling, "sa": sa }),
    );
    manifest.add_output(&out)?;
    manifest.add_output(robosynth::datagen::sidecar_path(&out))?;
    ctx.finish(&manifest)?;
    Ok(())
}

fn probe_states(ds: &Dataset, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    sample_initial_states(ds, n, seed ^ 0x7072_6f62)
}

fn cmd_learn_quifs(ctx: &Ctx, a: QuifsArgs) -> CmdResult {
    let spec = ctx.spec(&a.spec)?;
    let ds = load_dataset(&a.data, &spec)?;
    if ds.n_feasible() == 0 {
        return Err(Error::Dependency(format!(
            "dataset {} has no feasible records",
            a.data.display()
        ))
        .into());
    }
    let q = &ctx.cfg.quifs;
    let mut qc = QuifsConfig::new(a.eps.or(q.eps).unwrap_or(spec.eps()));
    qc.l0 = a.l0.or(q.l0);
    if let Some(g) = a.generator.clone().or_else(|| q.generator.clone()) {
        qc.generator = serde_json::from_value(json!(g))
            .map_err(|_| Error::InvalidArgument(format!("unknown generator `{g}`")))?;
    }
    let model = QuifsModel::fit(&ds, &qc)?;
    println!(
        "h {} D {} r0 {} L0 {:.4} bound {:.4e} h_required {:.4e} grid_meets_margin {}",
        model.h,
        model.shape,
        model.r0,
        model.l0,
        model.error_bound(),
        model.h_required,
        model.grid_meets_margin()
    );
    let out = ctx.output(&a.out, "quifs.json")?;
    model.save(&out)?;
    let probes = a.probes.or(q.probes).unwrap_or(200);
    let seed = ctx.seed(a.seed);
    let mut config = json!({ "quifs": qc, "probes": probes, "seed": seed });
    let mut verdict = Ok(());
    if probes > 0 {
        let states = probe_states(&ds, probes, seed)?;
        let tr = Transcription::new(&spec);
        let sa = ds.meta.sa;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let rep = pool.install(|| model.verify_uniform(&states, |x| oracle_action(&tr, x, &sa)))?;
        println!(
            "uniform error {:.4e} over {} probes ({} skipped), eps {}",
            rep.max_err, rep.n_probes, rep.skipped, rep.eps
        );
        config["report"] = json!(rep);
        if !rep.pass {
            verdict = Err(Unmet(format!(
                "uniform error {:.4e} exceeds eps {}",
                rep.max_err, rep.eps
            )));
        }
    }
    let mut manifest = Manifest::new("learn quifs", spec.hash(), config);
    manifest.add_input(&a.data)?;
    manifest.add_output(&out)?;
    ctx.finish(&manifest)?;
    Ok(verdict?)
}

fn cmd_train_nn(ctx: &Ctx, a: NnArgs) -> CmdResult {
    let spec = ctx.spec(&a.spec)?;
    let ds = load_dataset(&a.data, &spec)?;
    if ds.n_feasible() == 0 {
        return Err(Error::Dependency(format!(
            "dataset {} has no feasible records",
            a.data.display()
        ))
        .into());
    }
    let n = &ctx.cfg.nn;
    let d0 = TrainConfig::desk();
    let tc = TrainConfig {
        width: a.width.or(n.width).unwrap_or(d0.width),
        hidden: a.hidden.or(n.hidden).unwrap_or(d0.hidden),
        lr: a.lr.or(n.lr).unwrap_or(d0.lr),
        epochs: a.epochs.or(n.epochs).unwrap_or(d0.epochs),
        batch: a.batch.or(n.batch).unwrap_or(d0.batch),
        seed: ctx.seed(a.seed),
    };
    let eps = a.eps.or(n.eps).unwrap_or(0.1);
    if a.report_certified_depth {
        let l0 = match a.l0.or(n.l0) {
            Some(l) => l,
            None => {
                let (h, nodes) = lattice_data(&ds)?;
                estimate_l0(h, &nodes)
            }
        };
        let s = size_for_width(ds.meta.d, l0, eps, tc.width as u64)?;
        println!(
            "certified depth {} at width {} (L0 {:.4}, eps {}, bound {:.6}); trained depth {}",
            s.depth,
            tc.width,
            l0,
            eps,
            s.bound(),
            tc.hidden
        );
    }
    let res = train(&ds, &tc)?;
    let final_loss = res.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} epochs, final loss {:.4e}",
        res.losses.len(),
        final_loss
    );
    let out = ctx.output(&a.out, "nn.json")?;
    let meta = TrainingMeta {
        hyper: tc,
        samples: ds.n_feasible(),
        final_loss,
        spec_hash: Some(spec.hash()),
    };
    res.net.save(&out, Some(meta))?;
    let probes = a.probes.or(n.probes).unwrap_or(200);
    let mut config = json!({ "train": tc, "eps": eps, "probes": probes });
    let mut verdict = Ok(());
    if probes > 0 {
        let states = probe_states(&ds, probes, tc.seed)?;
        let tr = Transcription::new(&spec);
        let sa = ds.meta.sa;
        let net = &res.net;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(ctx.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let rep = pool.install(|| {
            verify_uniform(
                |x| Ok(net.eval(x)),
                &states,
                |x| oracle_action(&tr, x, &sa),
                eps,
            )
        })?;
        println!(
            "uniform error {:.4e} over {} probes ({} skipped), eps {}",
            rep.max_err, rep.n_probes, rep.skipped, eps
        );
        config["report"] = json!(rep);
        if !rep.pass {
            verdict = Err(Unmet(format!(
                "uniform error {:.4e} exceeds eps {eps}",
                rep.max_err
            )));
        }
    }
    let mut manifest = Manifest::new("train nn", spec.hash(), config);
    manifest.add_input(&a.data)?;
    manifest.add_output(&out)?;
    ctx.finish(&manifest)?;
    Ok(verdict?)
}

fn cmd_policy_eval(path: &Path, x: &[f64], spec: Option<&str>) -> CmdResult {
    let policy = match spec {
        Some(s) => load_policy(path, &load_spec(s)?)?,
        None => PolicyModel::load(path)?,
    };
    println!("{}", fmt_vec(&policy.action(x)?));
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, a: SimulateArgs) -> CmdResult {
    let spec = ctx.spec(&a.spec)?;
    let s = &ctx.cfg.sim;
    let x0 =
        a.x0.clone()
            .or_else(|| s.x0.clone())
            .ok_or_else(|| Error::InvalidArgument("no initial state (use --x0)".into()))?;
    let steps = a.steps.or(s.steps).unwrap_or(DEFAULT_STEPS);
    let sampler = a.sampler.or(s.sampler).unwrap_or_default();
    let seed = ctx.seed(a.sa.seed);
    let mut manifest;
    let trace = if a.rhc {
        let sa = ctx.sa(&a.sa)?;
        manifest = Manifest::new(
            "simulate",
            spec.hash(),
            json!({ "x0": x0, "steps": steps, "sampler": sampler, "seed": seed, "rhc": sa }),
        );
        simulate_rhc(&spec, &sa, &x0, steps, sampler, seed)?
    } else {
        let path = a
            .policy
            .clone()
            .expect("clap requires --policy without --rhc");
        let policy = load_policy(&path, &spec)?;
        manifest = Manifest::new(
            "simulate",
            spec.hash(),
            json!({ "x0": x0, "steps": steps, "sampler": sampler, "seed": seed }),
        );
        manifest.add_input(&path)?;
        simulate(&spec, &policy, &x0, steps, sampler, seed)?
    };
    let out = ctx.output(&a.out, "trace.csv")?;
    trace.write_csv(&out)?;
    manifest.add_output(&out)?;
    println!(
        "steps {} violations {} final [{}]",
        trace.steps(),
        trace.violations.len(),
        fmt_vec(trace.final_state())
    );
    match iss_proxy(&trace, a.radius) {
        Some(p) => println!(
            "entered ‖x‖∞ <= {} at t = {}, max norm afterwards {:.4}",
            a.radius, p.entry_time, p.gamma_hat
        ),
        None => println!("never entered ‖x‖∞ <= {}", a.radius),
    }
    ctx.finish(&manifest)?;
    if let Some(exit) = &trace.exit {
        return Err(Unmet(format!("trace stopped early: {exit:?}")).into());
    }
    if !trace.violations.is_empty() {
        return Err(Unmet(format!("{} constraint violations", trace.violations.len())).into());
    }
    Ok(())
}

fn cmd_roa(ctx: &Ctx, a: RoaArgs) -> CmdResult {
    let spec = ctx.spec(&a.spec)?;
    let mut manifest;
    let ds = match &a.data {
        Some(path) => {
            let ds = load_dataset(path, &spec)?;
            manifest = Manifest::new("roa", spec.hash(), json!({ "data": true }));
            manifest.add_input(path)?;
            ds
        }
        None => {
            let h =
                a.h.or(ctx.cfg.grid.h)
                    .ok_or_else(|| Error::InvalidArgument("give --data or --h".into()))?;
            let sa = ctx.sa(&a.sa)?;
            manifest = Manifest::new("roa", spec.hash(), json!({ "h": h, "sa": sa }));
            generate_grid(&spec, h, &sa, ctx.workers)?
        }
    };
    let roa = roa_from_dataset(&spec, &ds, ctx.workers)?;
    let out = ctx.output(&a.out, "roa.csv")?;
    roa.write_csv(&out)?;
    manifest.add_output(&out)?;
    println!(
        "{} states: exact feasible {}, baseline feasible {}, exact infeasible fraction {:.2}%",
        roa.states.len(),
        roa.n_exact(),
        roa.n_baseline(),
        100.0 * (roa.states.len() - roa.n_exact()) as f64 / roa.states.len() as f64
    );
    ctx.finish(&manifest)?;
    let fails = roa.dominance_failures();
    if !fails.is_empty() {
        return Err(Unmet(format!(
            "baseline feasible but exact infeasible at {} states",
            fails.len()
        ))
        .into());
    }
    Ok(())
}

fn cmd_validate(ctx: &Ctx, a: ValidateArgs) -> CmdResult {
    let spec = ctx.spec(&a.spec)?;
    let policy = load_policy(&a.policy, &spec)?;
    let ds = load_dataset(&a.data, &spec)?;
    let v = &ctx.cfg.validate;
    let d0 = ValidationConfig::default();
    let vc = ValidationConfig {
        delta_h: a.delta_h.or(v.delta_h).unwrap_or(d0.delta_h),
        mu_crit: a.mu_crit.or(v.mu_crit).unwrap_or(d0.mu_crit),
        steps: a.steps.or(v.steps).unwrap_or(DEFAULT_STEPS),
        rollouts_per_state: a
            .rollouts_per_state
            .or(v.rollouts_per_state)
            .unwrap_or(DEFAULT_ROLLOUTS_PER_STATE),
        sampler: a.sampler.or(v.sampler).unwrap_or_default(),
        seed: ctx.seed(a.seed),
    };
    let p = a.p.or(v.p).unwrap_or(2000);
    let states = sample_initial_states(&ds, p, vc.seed)?;
    let rep = validate(&spec, &policy, &states, &vc, ctx.workers)?;
    let out = ctx.output(&a.out, "validation.json")?;
    rep.save(&out)?;
    println!(
        "p {} mu_tilde {:.4} eps_h {:.4} mu_crit {} pass {} (coverage exits {}, violating {})",
        rep.p, rep.mu_tilde, rep.eps_h, rep.mu_crit, rep.pass, rep.coverage_exits, rep.violating
    );
    let mut manifest = Manifest::new("validate", spec.hash(), json!({ "p": p, "validation": vc }));
    manifest.add_input(&a.policy)?;
    manifest.add_input(&a.data)?;
    manifest.add_output(&out)?;
    ctx.finish(&manifest)?;
    if !rep.pass {
        return Err(Unmet(format!(
            "mu_tilde - eps_h = {:.4} <= mu_crit {}",
            rep.mu_tilde - rep.eps_h,
            rep.mu_crit
        ))
        .into());
    }
    Ok(())
}
