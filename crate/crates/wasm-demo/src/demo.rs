use serde::Serialize;
use serde_json::json;

use fmip_core::backend::{brute_force, BranchAndBound, MilpBackend, SolveResult};
use fmip_core::downstream::{predict_and_search, PsConfig};
use fmip_core::flow::Schedule;
use fmip_core::gen::{generate as gen_instance, label_dataset, make_mixed, Family, GenSpec};
use fmip_core::guidance::{sample_solutions, CandidatePool, GuidanceConfig};
use fmip_core::lpfile::write_lp;
use fmip_core::milp::MilpInstance;
use fmip_core::model::ModelConfig;
use fmip_core::train::{train, BatchSize, TrainConfig};

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Maps a family name and a single size knob onto a [`GenSpec`].
pub fn spec(family: &str, size: usize, seed: u64) -> Res<GenSpec> {
    let family = match family {
        "set-cover" => Family::SetCover {
            rows: size,
            cols: 2 * size,
            density: 0.25,
        },
        "indep-set" => Family::IndepSet { nodes: size, edge_prob: 0.25 },
        "comb-auction" => Family::CombAuction { items: size, bids: 2 * size },
        other => return Err(format!("unknown family '{other}'")),
    };
    Ok(GenSpec { family, seed })
}

pub fn build(family: &str, size: usize, seed: u64, frac_continuous: f64) -> Res<MilpInstance> {
    let spec = spec(family, size, seed)?;
    if frac_continuous > 0.0 {
        make_mixed(&spec, frac_continuous).map_err(err)
    } else {
        gen_instance(&spec).map_err(err)
    }
}

pub fn generate(family: &str, size: usize, seed: u64, frac_continuous: f64) -> Res<String> {
    let inst = build(family, size, seed, frac_continuous)?;
    Ok(json!({
        "name": inst.name,
        "num_vars": inst.num_vars,
        "num_int": inst.num_int,
        "num_cons": inst.num_cons,
        "lp": write_lp(&inst),
    })
    .to_string())
}

#[derive(Serialize)]
struct SolveSummary {
    status: String,
    objective: Option<f64>,
    nodes: u64,
    wall_time_ms: f64,
    message: Option<String>,
}

impl From<&SolveResult> for SolveSummary {
    fn from(r: &SolveResult) -> Self {
        Self {
            status: format!("{:?}", r.status).to_lowercase(),
            objective: r.has_solution().then_some(r.objective),
            nodes: r.nodes,
            wall_time_ms: r.wall_time_s * 1e3,
            message: r.message.clone(),
        }
    }
}

pub fn solve(family: &str, size: usize, seed: u64, frac_continuous: f64, time_limit_s: f64) -> Res<String> {
    let inst = build(family, size, seed, frac_continuous)?;
    let bnb = BranchAndBound::default().solve(&inst, time_limit_s);
    let brute = brute_force(&inst);
    Ok(json!({
        "name": inst.name,
        "bnb": SolveSummary::from(&bnb),
        "brute": SolveSummary::from(&brute),
    })
    .to_string())
}

/// Settings for [`guidance`]. The defaults finish in a few seconds in a
/// browser.
#[derive(Debug, Clone)]
pub struct GuidanceDemo {
    pub nodes: usize,
    pub train_instances: usize,
    pub epochs: usize,
    pub layers: usize,
    pub hidden: usize,
    pub candidates: usize,
    pub steps: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for GuidanceDemo {
    fn default() -> Self {
        Self {
            nodes: 10,
            train_instances: 6,
            epochs: 100,
            layers: 2,
            hidden: 16,
            candidates: 32,
            steps: 20,
            tau: 1.0,
            seed: 0,
        }
    }
}

#[derive(Serialize)]
struct PoolSummary {
    feasible: usize,
    total: usize,
    mean_f: f64,
    best_f: Option<f64>,
}

impl From<&CandidatePool> for PoolSummary {
    fn from(p: &CandidatePool) -> Self {
        Self {
            feasible: p.feasible_count(),
            total: p.candidates.len(),
            mean_f: p.mean_f(),
            best_f: p.best().filter(|c| c.feasible).map(|c| c.f),
        }
    }
}

pub fn guidance(opts: &GuidanceDemo) -> Res<String> {
    let mis = |seed| build("indep-set", opts.nodes, seed, 0.0);
    let instances = (0..opts.train_instances as u64).map(|k| mis(opts.seed + k)).collect::<Res<Vec<_>>>()?;
    let bnb = BranchAndBound::default();
    let labeled = label_dataset(&instances, &bnb, 30.0).labeled;
    if labeled.is_empty() {
        return Err("no training instance could be labeled".into());
    }

    let model_cfg = ModelConfig {
        layers: opts.layers,
        hidden: opts.hidden,
        ..Default::default()
    };
    let train_cfg = TrainConfig {
        epochs: opts.epochs,
        learning_rate: 1e-3,
        batch_size: BatchSize::Fixed(1),
        seed: opts.seed,
        ..Default::default()
    };
    let mut losses = Vec::with_capacity(opts.epochs);
    let model = train(&labeled, model_cfg, &train_cfg, |r| losses.push(r.mean_loss)).map_err(err)?.model;

    let test = mis(opts.seed + 1000)?;
    let bks = bnb.solve(&test, 30.0);
    let sched = Schedule::cosine(opts.steps).map_err(err)?;
    let guided_cfg = GuidanceConfig {
        tau: opts.tau,
        ..Default::default()
    };
    let guided = sample_solutions(&test, &model, &guided_cfg, &sched, opts.candidates, opts.seed).map_err(err)?;
    let unguided = sample_solutions(&test, &model, &GuidanceConfig::disabled(), &sched, opts.candidates, opts.seed).map_err(err)?;
    let ps = predict_and_search(&guided.marginals, &test, &PsConfig::default(), &bnb, 30.0).map_err(err)?;

    Ok(json!({
        "train_instances": labeled.len(),
        "parameters": model.num_parameters(),
        "losses": losses,
        "test_instance": test.name,
        "bks": bks.has_solution().then_some(bks.objective),
        "guided": PoolSummary::from(&guided),
        "unguided": PoolSummary::from(&unguided),
        "predict_and_search": SolveSummary::from(&ps),
    })
    .to_string())
}
