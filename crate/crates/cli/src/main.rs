use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use std::path::{Path, PathBuf};

use fmip_core::config::{FmipConfig, SamplingConfig, SolverKind};
use fmip_core::downstream::{run_strategy, ApolloConfig, Marginals, NdConfig, PmvbConfig, PsConfig, Strategy};
use fmip_core::eval::{evaluate, read_eval_set, EvalOptions};
use fmip_core::flow::ScheduleKind;
use fmip_core::gen::{generate, label_dataset, make_mixed, Dataset, Family, GenSpec};
use fmip_core::guidance::{sample_solutions, CandidatePool};
use fmip_core::milp::{MilpInstance, FEAS_TOL};
use fmip_core::model::{Checkpoint, Model};
use fmip_core::selfcheck::{run_suite, CheckStatus};
use fmip_core::train::train_from;

#[derive(Parser)]
#[command(name = "fmip", version, about = "Flow matching for mixed-integer linear programs")]
struct Cli {
    /// TOML configuration with [model] [train] [guidance] [nd] [ps] [pmvb] [apollo] [backend] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Generate(GenerateArgs),
    /// Solve every instance of a dataset and store the incumbents as labels.
    Label(LabelArgs),
    /// Train a model on a labeled dataset.
    Train(TrainArgs),
    /// Sample a pool of candidate solutions for one instance.
    Sample(SampleArgs),
    /// Run a downstream strategy on one instance.
    Solve(SolveArgs),
    /// Evaluate strategies on a test set and write reports.
    Eval(EvalArgs),
    /// Run the verification suite and print a JSON manifest.
    Selfcheck(SelfcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    SetCover,
    IndepSet,
    CombAuction,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    rows: usize,
    #[arg(long, default_value_t = 40)]
    cols: usize,
    #[arg(long, default_value_t = 0.1)]
    density: f64,
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 0.2)]
    edge_prob: f64,
    #[arg(long, default_value_t = 15)]
    items: usize,
    #[arg(long, default_value_t = 30)]
    bids: usize,
    /// Relax this fraction of the variables to continuous ones.
    #[arg(long)]
    frac_continuous: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LabelArgs {
    dataset: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Bnb,
    Brute,
    External,
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct GuidanceFlags {
    #[arg(long)]
    no_guidance: bool,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    sample_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Cosine,
    Uniform,
}

impl GuidanceFlags {
    fn apply(&self, mut s: SamplingConfig) -> Result<SamplingConfig> {
        if self.no_guidance {
            s.enabled = false;
        }
        s.gamma = self.gamma.unwrap_or(s.gamma);
        s.rho = self.rho.unwrap_or(s.rho);
        s.tau = self.tau.unwrap_or(s.tau);
        s.n_samples = self.n_samples.unwrap_or(s.n_samples);
        s.n_iter = self.n_iter.unwrap_or(s.n_iter);
        s.steps = self.steps.unwrap_or(s.steps);
        s.candidates = self.candidates.unwrap_or(s.candidates);
        s.seed = self.sample_seed.unwrap_or(s.seed);
        if let Some(k) = self.schedule {
            s.schedule = match k {
                ScheduleArg::Cosine => ScheduleKind::Cosine,
                ScheduleArg::Uniform => ScheduleKind::Uniform,
            };
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[command(flatten)]
    guidance: GuidanceFlags,
    #[arg(long)]
    pool: PathBuf,
}

#[derive(Args, Clone, Default)]
struct StrategyFlags {
    /// Neural Diving `[K_nd, α]`.
    #[arg(long)]
    nd: Option<String>,
    /// Predict&Search `[k0, k1, Δ]`.
    #[arg(long)]
    ps: Option<String>,
    /// PMVB `[δ, τ]`.
    #[arg(long)]
    pmvb: Option<String>,
    /// Apollo `[k0, k1, Δ, K_it]`.
    #[arg(long)]
    apollo: Option<String>,
}

impl StrategyFlags {
    fn apply(&self, cfg: &mut FmipConfig) -> Result<()> {
        if let Some(s) = &self.nd {
            let seed = cfg.nd.seed;
            cfg.nd = NdConfig { seed, ..NdConfig::parse(s)? };
        }
        if let Some(s) = &self.ps {
            cfg.ps = PsConfig::parse(s)?;
        }
        if let Some(s) = &self.pmvb {
            cfg.pmvb = PmvbConfig::parse(s)?;
        }
        if let Some(s) = &self.apollo {
            cfg.apollo = ApolloConfig::parse(s)?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Marginals from a sampled pool.
    #[arg(long, conflicts_with = "ckpt")]
    pool: Option<PathBuf>,
    /// Sample a fresh pool from this checkpoint (Apollo re-samples on every reduced instance).
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    strategy: Strategy,
    #[command(flatten)]
    flags: StrategyFlags,
    #[command(flatten)]
    guidance: GuidanceFlags,
    #[arg(long)]
    time_limit: Option<f64>,
    /// Write the result as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    testset: PathBuf,
    /// Comma-separated strategies.
    #[arg(long, value_delimiter = ',', default_value = "nd,ps,pmvb,apollo")]
    strategies: Vec<Strategy>,
    #[arg(long)]
    report: PathBuf,
    /// Also run every strategy on unguided pools.
    #[arg(long)]
    compare_guidance: bool,
    #[command(flatten)]
    flags: StrategyFlags,
    #[command(flatten)]
    guidance: GuidanceFlags,
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Include the memorization and guidance-effect experiments (several minutes).
    #[arg(long)]
    full: bool,
    /// Also write the manifest to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<FmipConfig> {
    match path {
        Some(p) => Ok(FmipConfig::load(p)?),
        None => Ok(FmipConfig::default()),
    }
}

fn read_instance(path: &Path) -> Result<MilpInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(MilpInstance::from_json(&text)?)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let family = match a.family {
        FamilyArg::SetCover => Family::SetCover {
            rows: a.rows,
            cols: a.cols,
            density: a.density,
        },
        FamilyArg::IndepSet => Family::IndepSet {
            nodes: a.nodes,
            edge_prob: a.edge_prob,
        },
        FamilyArg::CombAuction => Family::CombAuction { items: a.items, bids: a.bids },
    };
    let specs: Vec<GenSpec> = (0..a.count as u64)
        .map(|k| GenSpec {
            family: family.clone(),
            seed: a.seed + k,
        })
        .collect();
    let instances = specs
        .iter()
        .map(|s| match a.frac_continuous {
            Some(f) => make_mixed(s, f),
            None => generate(s),
        })
        .collect::<fmip_core::Result<Vec<_>>>()?;
    Dataset::write_instances(&a.out, &specs, a.frac_continuous, &instances)?;
    println!("wrote {} instances to {}", instances.len(), a.out.display());
    Ok(())
}

fn cmd_label(a: LabelArgs, mut cfg: FmipConfig) -> Result<()> {
    if let Some(b) = a.backend {
        cfg.backend.solver = match b {
            BackendArg::Bnb => SolverKind::Bnb,
            BackendArg::Brute => SolverKind::Brute,
            BackendArg::External => SolverKind::External,
        };
    }
    let tl = a.time_limit.unwrap_or(cfg.backend.time_limit);
    let backend = cfg.backend.build()?;
    let instances = Dataset::read_instances(&a.dataset)?;
    let report = label_dataset(&instances, backend.as_ref(), tl);
    Dataset::write_labels(&a.dataset, &report)?;
    println!("labeled {}/{} instances with {}", report.labeled.len(), instances.len(), backend.name());
    for (name, reason) in &report.dropped {
        println!("dropped {name}: {reason}");
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, mut cfg: FmipConfig) -> Result<()> {
    let data = Dataset::read_labeled(&a.dataset)?;
    if data.is_empty() {
        bail!("{} has no labeled instances; run `fmip label` first", a.dataset.display());
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    let (model, resume) = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            let state = ck.train_state.clone().context("checkpoint carries no training state")?;
            (Model::from_checkpoint(&ck)?, Some(state))
        }
        None => {
            let cats: Vec<u32> = data.iter().filter(|l| l.instance.num_int > 0).map(|l| l.instance.int_bound).collect();
            if let Some(&k) = cats.first() {
                if cats.iter().any(|&c| c != k) {
                    bail!("instances mix different integer bounds; the model needs one category count");
                }
                cfg.model.int_categories = k as usize + 1;
            }
            (Model::init(cfg.model.clone(), cfg.train.seed)?, None)
        }
    };
    info!("training {} parameters on {} instances", model.num_parameters(), data.len());
    let out = train_from(model, resume, &data, &cfg.train, None, |r| {
        println!("epoch {:>4}  loss {:.6}  lr {:.3e}", r.epoch, r.mean_loss, r.learning_rate);
    })?;
    out.model.save(&a.out, Some(out.state))?;
    println!("saved checkpoint to {}", a.out.display());
    Ok(())
}

fn cmd_sample(a: SampleArgs, cfg: FmipConfig) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let inst = read_instance(&a.instance)?;
    let s = a.guidance.apply(cfg.guidance)?;
    let pool = sample_solutions(&inst, &model, &s.guidance(), &s.schedule()?, s.candidates, s.seed)?;
    pool.save(&a.pool)?;
    let best = pool.best().map_or("none".to_string(), |c| format!("{:.4}", c.f));
    println!(
        "{} candidates, {} feasible, mean f {:.4}, best f {best}; pool written to {}",
        pool.candidates.len(),
        pool.feasible_count(),
        pool.mean_f(),
        a.pool.display()
    );
    Ok(())
}

fn cmd_solve(a: SolveArgs, mut cfg: FmipConfig) -> Result<()> {
    a.flags.apply(&mut cfg)?;
    let inst = read_instance(&a.instance)?;
    let backend = cfg.backend.build()?;
    let tl = a.time_limit.unwrap_or(cfg.backend.time_limit);
    let strategies = cfg.strategies();
    let result = match (&a.pool, &a.ckpt) {
        (Some(p), _) => {
            let pool = CandidatePool::load(p)?;
            run_strategy(a.strategy, &pool.marginals, None, &inst, &strategies, backend.as_ref(), tl)?
        }
        (None, Some(c)) => {
            let model = Model::load(c)?;
            let s = a.guidance.apply(cfg.guidance.clone())?;
            let (g, sched) = (s.guidance(), s.schedule()?);
            let mut repredict =
                |sub: &MilpInstance| -> fmip_core::Result<Marginals> { Ok(sample_solutions(sub, &model, &g, &sched, s.candidates, s.seed)?.marginals) };
            let marg = repredict(&inst)?;
            run_strategy(a.strategy, &marg, Some(&mut repredict), &inst, &strategies, backend.as_ref(), tl)?
        }
        (None, None) => bail!("solve needs --pool or --ckpt"),
    };
    let feasible = match &result.assignment {
        Some(x) => inst.evaluate(x, FEAS_TOL)?.feasible,
        None => false,
    };
    println!(
        "{} on {}: status {:?}, objective {}, feasible {feasible}, {:.3}s",
        a.strategy.name(),
        inst.name,
        result.status,
        if result.has_solution() {
            format!("{:.6}", result.objective)
        } else {
            "-".into()
        },
        result.wall_time_s
    );
    if let Some(out) = a.out {
        std::fs::write(&out, serde_json::to_string_pretty(&result)?)?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, mut cfg: FmipConfig) -> Result<()> {
    a.flags.apply(&mut cfg)?;
    let model = Model::load(&a.ckpt)?;
    let set = read_eval_set(&a.testset)?;
    let backend = cfg.backend.build()?;
    let opts = EvalOptions {
        strategies: a.strategies.clone(),
        strategy_cfg: cfg.strategies(),
        sampling: a.guidance.apply(cfg.guidance.clone())?,
        time_limit_s: a.time_limit.unwrap_or(cfg.backend.time_limit),
        compare_guidance: a.compare_guidance,
    };
    let report = evaluate(&model, &set, &opts, backend.as_ref())?;
    report.write(&a.report)?;
    print!("{}", report.to_text());
    println!("\nreports written to {}", a.report.display());
    Ok(())
}

fn cmd_selfcheck(a: SelfcheckArgs) -> Result<bool> {
    let manifest = run_suite(a.full, |r| {
        let tag = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        eprintln!("{tag} [{}] {} ({:.1}s): {}", r.id, r.name, r.seconds, r.detail);
    });
    let json = manifest.to_json();
    if let Some(out) = &a.out {
        std::fs::write(out, &json)?;
    }
    println!("{json}");
    for c in manifest.failing() {
        eprintln!("failing criterion {}: {}", c.id, c.name);
    }
    Ok(manifest.passed)
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let run = || -> Result<bool> {
        let cfg = load_config(cli.config.as_deref())?;
        match cli.command {
            Command::Generate(a) => cmd_generate(a)?,
            Command::Label(a) => cmd_label(a, cfg)?,
            Command::Train(a) => cmd_train(a, cfg)?,
            Command::Sample(a) => cmd_sample(a, cfg)?,
            Command::Solve(a) => cmd_solve(a, cfg)?,
            Command::Eval(a) => cmd_eval(a, cfg)?,
            Command::Selfcheck(a) => return cmd_selfcheck(a),
        }
        Ok(true)
    };
    match run() {
        Ok(true) => std::process::ExitCode::SUCCESS,
        Ok(false) => std::process::ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::from(2)
        }
    }
}
