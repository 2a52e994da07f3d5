//! Verification suite: metric arithmetic, solver oracles, flow invariants,
//! gradient checks, loss sanity, memorization, guidance effect, strategy
//! contracts, incumbent feasibility and persistence round-trips.
//!
//! Every check uses fixed seeds and independent oracles (enumeration,
//! finite differences, Monte-Carlo). [`run_suite`] produces the JSON
//! manifest behind `fmip selfcheck`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::backend::{brute_force, BranchAndBound, MilpBackend, SolveStatus};
use crate::downstream::{
    apollo, neural_diving_subproblems, pmvb_gamma, predict_and_search, ps_trust_region, run_strategy, ApolloConfig, Marginals, NdConfig, PsConfig, Strategy,
    StrategyConfig,
};
use crate::error::Result;
use crate::flow::{
    cond_rate_row, cond_velocity, euler_step_cont, path_probability, rates_from_probs, sample_conditional, training_loss, training_loss_probs, Schedule,
};
use crate::gen::{generate, label_dataset, make_mixed, Family, GenSpec, LabeledInstance};
use crate::graph::SolutionState;
use crate::guidance::{guided_rate_matrix, sample_solutions, CandidatePool, GuidanceConfig};
use crate::lpfile::{read_lp, write_lp};
use crate::metrics::{gap, imp};
use crate::milp::{Coef, MilpInstance, FEAS_TOL};
use crate::model::{Model, ModelConfig, ModelOutput};
use crate::rng::SplitMix64;
use crate::train::{loss_and_grads, sample_states, train, BatchSize, TrainConfig, TrainItem};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }

    fn from_result(r: Result<CheckOutcome>) -> Self {
        r.unwrap_or_else(|e| Self::new(false, format!("error: {e}")))
    }
}

/// Rate-row function under test: `(probabilities, current state, t) → rows`.
pub type RateFn<'a> = &'a dyn Fn(&Array2<f64>, &[usize], f64) -> Array2<f64>;

/// The model's unguided rate rows.
pub fn model_rates(probs: &Array2<f64>, d: &[usize], t: f64) -> Array2<f64> {
    rates_from_probs(probs, d, t)
}

/// Check 1: Gap and improvement arithmetic.
pub fn check_metrics() -> CheckOutcome {
    let g = gap(401.00, 400.70);
    let i = imp(0.30, 0.10);
    let ok = format!("{g:.2}") == "0.30" && (g - 0.30).abs() < 1e-9 && i.to_string() == "66.67%";
    CheckOutcome::new(ok, format!("gap {g:.2}, imp {i}"))
}

/// Small random MILP: `q` binaries, `p` continuous in `[0, 4]`, rows built
/// around a random point so most instances are feasible.
pub fn random_instance(q: usize, p: usize, seed: u64) -> MilpInstance {
    let mut rng = SplitMix64::stream(seed, 0x6f7263);
    let n = q + p;
    let m = 2 + rng.below(4) as usize;
    let obj: Vec<f64> = (0..n).map(|_| (rng.below(21) as f64) - 10.0).collect();
    let x0: Vec<f64> = (0..n).map(|j| if j < q { rng.below(2) as f64 } else { rng.uniform(0.0, 4.0) }).collect();
    let mut coefs = Vec::new();
    let mut rhs = Vec::new();
    for row in 0..m {
        let mut act = 0.0;
        for (col, x) in x0.iter().enumerate() {
            if rng.bernoulli(0.6) {
                let val = (rng.below(11) as f64) - 5.0;
                if val != 0.0 {
                    coefs.push(Coef { row, col, val });
                    act += val * x;
                }
            }
        }
        rhs.push((act + rng.uniform(0.0, 3.0)).round());
    }
    let lower = vec![0.0; n];
    let upper: Vec<f64> = (0..n).map(|j| if j < q { 1.0 } else { 4.0 }).collect();
    MilpInstance::new(format!("rand-{q}-{p}-s{seed}"), q, 1, obj, coefs, rhs, lower, upper).expect("random instance is valid")
}

/// Check 2: Branch and bound against enumeration on 50 random instances.
pub fn check_oracle(count: usize) -> CheckOutcome {
    let bnb = BranchAndBound::default();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut infeasible = 0;
    for s in 0..count as u64 {
        let mut rng = SplitMix64::stream(s, 1);
        let q = 1 + rng.below(12) as usize;
        let p = rng.below(4) as usize;
        let inst = random_instance(q, p, s);
        let a = bnb.solve(&inst, 60.0);
        let b = brute_force(&inst);
        let same = match (a.status, b.status) {
            (SolveStatus::Infeasible, SolveStatus::Infeasible) => {
                infeasible += 1;
                true
            }
            (SolveStatus::Optimal, SolveStatus::Optimal) => {
                worst = worst.max((a.objective - b.objective).abs());
                (a.objective - b.objective).abs() <= 1e-6
            }
            _ => false,
        };
        if !same {
            bad.push(inst.name);
        }
    }
    CheckOutcome::new(
        bad.is_empty(),
        format!("{count} instances ({infeasible} infeasible), max |Δobj| {worst:.2e}, mismatches {bad:?}"),
    )
}

/// Check 3(a): An Euler step of size `1 − t` with the exact velocity lands on `c_1`.
pub fn check_euler_landing() -> CheckOutcome {
    let mut rng = SplitMix64::new(31);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let t = rng.uniform(0.0, 0.999);
        let c1: Vec<f64> = (0..5).map(|_| rng.uniform(-50.0, 50.0)).collect();
        let ct: Vec<f64> = (0..5).map(|_| rng.uniform(-50.0, 50.0)).collect();
        let v = cond_velocity(&ct, &c1, t).expect("t < 1");
        let end = euler_step_cont(&ct, &v, 1.0 - t);
        worst = end.iter().zip(&c1).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    CheckOutcome::new(worst <= 1e-9, format!("max landing error {worst:.2e}"))
}

/// Check 3(b): Conditional path marginals by Monte-Carlo, within 3 sigma.
pub fn check_path_marginals(draws: usize) -> CheckOutcome {
    let k = 2u32;
    let cats = k as usize + 1;
    let (d1, c1) = (vec![1usize], vec![2.5]);
    let mut worst_z: f64 = 0.0;
    for (ti, &t) in [0.0, 0.25, 0.5, 0.75].iter().enumerate() {
        let mut rng = SplitMix64::stream(77, ti as u64);
        let mut counts = vec![0usize; cats];
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let s = sample_conditional(&d1, &c1, t, k, &mut rng);
            counts[s.d[0]] += 1;
            sum += s.c[0];
            sum_sq += s.c[0] * s.c[0];
        }
        let n = draws as f64;
        for (j, &c) in counts.iter().enumerate() {
            let p = path_probability(j, d1[0], t, k);
            let sd = (p * (1.0 - p) / n).sqrt();
            worst_z = worst_z.max((c as f64 / n - p).abs() / sd);
        }
        let mean = sum / n;
        let sd = 1.0 - t;
        worst_z = worst_z.max((mean - t * c1[0]).abs() / (sd / n.sqrt()));
        // Sample variance of a Gaussian has standard error σ²·sqrt(2/(n−1)).
        let var = sum_sq / n - mean * mean;
        worst_z = worst_z.max((var - sd * sd).abs() / (sd * sd * (2.0 / (n - 1.0)).sqrt()));
    }
    CheckOutcome::new(worst_z <= 3.0, format!("{draws} draws per time, max |z| {worst_z:.2}"))
}

/// Check 3(c): Rate rows are nonnegative and vanish at the current state, for
/// the supplied rate function and for the closed-form and guided rates.
pub fn check_rate_rows(rates: RateFn<'_>) -> CheckOutcome {
    let mut rng = SplitMix64::new(5);
    let mut violations = 0;
    let mut cases = 0;
    for _ in 0..100 {
        let q = 1 + rng.below(6) as usize;
        let cats = 2 + rng.below(4) as usize;
        let t = rng.uniform(0.0, 0.99);
        let probs = random_probs(q, cats, &mut rng);
        let d: Vec<usize> = (0..q).map(|_| rng.below(cats as u64) as usize).collect();
        let rows = rates(&probs, &d, t);
        cases += 1;
        if !rows_ok(&rows, &d) {
            violations += 1;
        }
        let d1 = rng.below(cats as u64) as usize;
        let cond = Array2::from_shape_vec((1, cats), cond_rate_row(d[0], d1, t, cats).expect("t < 1")).expect("shape");
        cases += 1;
        if !rows_ok(&cond, &d[..1]) {
            violations += 1;
        }
    }
    let inst = crate::milp::toy_instance();
    for s in 0..20 {
        let mut rng = SplitMix64::new(100 + s);
        let probs = random_probs(1, 6, &mut rng);
        let out = ModelOutput {
            int_logits: probs.mapv(f64::ln),
            cont_values: vec![rng.uniform(0.0, 3.0)],
        };
        let t = rng.uniform(0.0, 0.99);
        let state = SolutionState {
            d: vec![rng.below(6) as usize],
            c: vec![0.5],
            t,
        };
        cases += 1;
        match guided_rate_matrix(&state, &out, &inst, &GuidanceConfig::default(), t, &mut rng) {
            Ok(rows) if rows_ok(&rows, &state.d) => {}
            _ => violations += 1,
        }
    }
    CheckOutcome::new(violations == 0, format!("{violations} violating rate matrices out of {cases}"))
}

fn random_probs(q: usize, cats: usize, rng: &mut SplitMix64) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((q, cats), |_| rng.uniform(0.01, 1.0));
    for mut row in p.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

fn rows_ok(rows: &Array2<f64>, d: &[usize]) -> bool {
    rows.iter().all(|&r| r >= 0.0) && d.iter().enumerate().all(|(i, &di)| rows[[i, di]] == 0.0)
}

/// Check 3(d): Cosine schedule endpoints and strictly shrinking steps.
pub fn check_schedule() -> CheckOutcome {
    let mut ok = true;
    for n in [2, 3, 5, 10, 30, 100, 1000] {
        let s = Schedule::cosine(n).expect("n > 0");
        let h = s.step_sizes();
        ok &= s.times[0] == 0.0 && s.times[n] == 1.0 && h.windows(2).all(|w| w[1] < w[0]);
    }
    CheckOutcome::new(ok, "N in {2, 3, 5, 10, 30, 100, 1000}")
}

fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Check 4(a): Analytic gradient of the guidance target against central
/// differences.
pub fn check_target_gradient() -> CheckOutcome {
    let inst = random_instance(4, 3, 11);
    let mut rng = SplitMix64::new(8);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..5 {
        let x: Vec<f64> = (0..inst.num_vars)
            .map(|j| if j < inst.num_int { rng.below(2) as f64 } else { rng.uniform(-2.0, 6.0) })
            .collect();
        let grad = inst.target_grad_continuous(&x, 10.0).expect("length matches");
        for (k, g) in grad.iter().enumerate() {
            let j = inst.num_int + k;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += h;
            xm[j] -= h;
            let fd = (inst.target_f(&xp, 10.0).unwrap() - inst.target_f(&xm, 10.0).unwrap()) / (2.0 * h);
            worst = worst.max(relative_error(*g, fd, 1.0));
        }
    }
    CheckOutcome::new(worst <= 1e-5, format!("5 points, max relative error {worst:.2e}"))
}

/// The 3-variable example used for the parameter gradient check:
/// two binaries and one continuous variable.
pub fn three_variable_toy() -> MilpInstance {
    MilpInstance::new(
        "toy3",
        2,
        1,
        vec![-2.0, -1.0, 0.5],
        vec![
            Coef { row: 0, col: 0, val: 1.0 },
            Coef { row: 0, col: 1, val: 1.0 },
            Coef { row: 1, col: 0, val: 1.0 },
            Coef { row: 1, col: 2, val: -1.0 },
        ],
        vec![1.0, 0.5],
        vec![0.0, 0.0, 0.0],
        vec![1.0, 1.0, 2.0],
    )
    .expect("toy is valid")
}

/// Check 4(b): Every parameter gradient of the training loss against central
/// differences with step 1e-4.
pub fn check_loss_gradient() -> Result<CheckOutcome> {
    let inst = three_variable_toy();
    let label = brute_force(&inst).assignment.expect("toy is feasible");
    let li = LabeledInstance {
        label_objective: inst.objective(&label.values),
        instance: inst,
        label,
        solve_status: SolveStatus::Optimal,
    };
    let item = TrainItem::new(&li, true)?;
    let mut model = Model::init(
        ModelConfig {
            layers: 2,
            hidden: 8,
            ..Default::default()
        },
        3,
    )?;
    let items = [&item];
    let states = sample_states(&items, &mut SplitMix64::new(12));
    let (_, grads) = loss_and_grads(&model, &items, &states, 1.0)?;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for p in 0..grads.len() {
        for idx in 0..grads[p].len() {
            let (r, c) = (idx / grads[p].ncols(), idx % grads[p].ncols());
            let orig = model.params()[p][[r, c]];
            model.params_mut()[p][[r, c]] = orig + h;
            let up = loss_and_grads(&model, &items, &states, 1.0)?.0;
            model.params_mut()[p][[r, c]] = orig - h;
            let down = loss_and_grads(&model, &items, &states, 1.0)?.0;
            model.params_mut()[p][[r, c]] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grads[p][[r, c]], fd, 1e-2));
            checked += 1;
        }
    }
    Ok(CheckOutcome::new(
        worst <= 1e-4,
        format!("{checked} parameters, max relative error {worst:.2e}"),
    ))
}

/// Check 5: Loss is zero for a perfect prediction and `ω ln 2` for a uniform
/// binary head.
pub fn check_loss_sanity() -> CheckOutcome {
    let probs = Array2::from_shape_vec((2, 2), vec![0.0, 1.0, 1.0, 0.0]).expect("shape");
    let perfect = training_loss_probs(&probs, &[1.5, -2.0], &[1, 0], &[1.5, -2.0], 0.4, 1.0);
    let mut ok = perfect == 0.0;
    let mut detail = format!("perfect {perfect}");
    for omega in [1.0, 2.5] {
        let uniform = ModelOutput {
            int_logits: Array2::zeros((1, 2)),
            cont_values: vec![],
        };
        let from_logits = training_loss(&uniform, &[1], &[], 0.3, omega);
        let from_probs = training_loss_probs(&Array2::from_elem((1, 2), 0.5), &[], &[0], &[], 0.3, omega);
        let expect = omega * std::f64::consts::LN_2;
        ok &= from_logits == expect && from_probs == expect;
        detail += &format!(", ω={omega}: {from_logits} / {from_probs} vs {expect}");
    }
    CheckOutcome::new(ok, detail)
}

/// The memorization set: ten labeled maximum independent set instances.
pub fn memorization_dataset() -> Result<Vec<LabeledInstance>> {
    let insts = (0..10)
        .map(|s| {
            generate(&GenSpec {
                family: Family::IndepSet { nodes: 15, edge_prob: 0.25 },
                seed: s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = label_dataset(&insts, &BranchAndBound::default(), 60.0);
    Ok(report.labeled)
}

/// Training settings of the memorization runs: the default schedule with
/// one instance per step.
pub fn memorization_train_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: BatchSize::Fixed(1),
        ..Default::default()
    }
}

fn within_target(best_f: f64, label: f64) -> bool {
    best_f <= label + 0.05 * label.abs() + 1e-9
}

/// Check 6: Sampling from a memorized model recovers near-optimal feasible
/// solutions.
pub fn check_memorization(data: &[LabeledInstance], model: &Model) -> Result<CheckOutcome> {
    let sched = Schedule::cosine(30)?;
    let mut hits = 0;
    let mut lines = Vec::new();
    for (k, li) in data.iter().enumerate() {
        let pool = sample_solutions(&li.instance, model, &GuidanceConfig::default(), &sched, 64, k as u64)?;
        let best = pool.best().filter(|c| c.feasible);
        let hit = best.is_some_and(|b| within_target(b.f, li.label_objective));
        hits += hit as usize;
        lines.push(format!(
            "{}:{}",
            li.instance.name,
            best.map_or("none".into(), |b| format!("{:.2}/{:.2}", b.f, li.label_objective))
        ));
    }
    Ok(CheckOutcome::new(hits >= 8, format!("{hits}/{} within 5% [{}]", data.len(), lines.join(" "))))
}

/// Check 7: Guided pools have lower mean target and feed Predict&Search at
/// least as well as unguided pools.
pub fn check_guidance_effect(data: &[LabeledInstance], model: &Model) -> Result<CheckOutcome> {
    let sched = Schedule::cosine(30)?;
    let backend = BranchAndBound::default();
    let (mut f_on, mut f_off) = (0.0, 0.0);
    let mut ps_wins = 0;
    for (k, li) in data.iter().enumerate() {
        let seed = 1000 + k as u64;
        let on = sample_solutions(&li.instance, model, &GuidanceConfig::default(), &sched, 100, seed)?;
        let off = sample_solutions(&li.instance, model, &GuidanceConfig::disabled(), &sched, 100, seed)?;
        f_on += on.mean_f();
        f_off += off.mean_f();
        let obj = |pool: &CandidatePool| -> Result<f64> {
            let r = predict_and_search(&pool.marginals, &li.instance, &PsConfig::default(), &backend, 30.0)?;
            Ok(if r.has_solution() { r.objective } else { f64::INFINITY })
        };
        if obj(&on)? <= obj(&off)? + 1e-9 {
            ps_wins += 1;
        }
    }
    let n = data.len() as f64;
    let (f_on, f_off) = (f_on / n, f_off / n);
    Ok(CheckOutcome::new(
        f_on <= f_off && ps_wins >= 7,
        format!(
            "mean target guided {f_on:.3} vs unguided {f_off:.3}; PS guided ≤ unguided on {ps_wins}/{}",
            data.len()
        ),
    ))
}

/// Check 8: Structural contracts of the four strategies.
pub fn check_contracts() -> Result<CheckOutcome> {
    let inst = generate(&GenSpec {
        family: Family::IndepSet { nodes: 12, edge_prob: 0.3 },
        seed: 2,
    })?;
    let q = inst.num_int;
    let mut rng = SplitMix64::new(4);
    let marg = Marginals::from_probs(&sharpen(random_probs(q, 2, &mut rng)))?;
    let mut notes = Vec::new();
    let mut ok = true;

    let nd = NdConfig {
        num_candidates: 7,
        fix_fraction: 0.3,
        seed: 1,
    };
    let subs = neural_diving_subproblems(&marg, &inst, &nd)?;
    let want = (nd.fix_fraction * q as f64).ceil() as usize;
    let nd_ok = subs.len() == nd.num_candidates && subs.iter().all(|(_, f)| f.len() == want);
    ok &= nd_ok;
    notes.push(format!("ND {} sub-MIPs fixing {want}: {nd_ok}", subs.len()));

    let ps = PsConfig::default();
    let tr = ps_trust_region(&marg, &ps, None).expect("sharpened marginals have confident variables");
    let rhs = (ps.delta * (tr.t0.len() + tr.t1.len()) as f64).floor();
    let ps_ok = tr.rhs == rhs;
    ok &= ps_ok;
    notes.push(format!("PS |T0|={} |T1|={} rhs {}: {ps_ok}", tr.t0.len(), tr.t1.len(), tr.rhs));

    let g = pmvb_gamma(8, 0.5);
    let g_ok = format!("{g:.5}") == "2.35482";
    ok &= g_ok;
    notes.push(format!("PMVB γ(8, 0.5) = {g:.5}: {g_ok}"));

    let backend = BranchAndBound::default();
    let ps_res = predict_and_search(&marg, &inst, &ps, &backend, 30.0)?;
    let ap = apollo(
        &mut |_| Ok(marg.clone()),
        &inst,
        &ApolloConfig {
            iterations: 1,
            ..Default::default()
        },
        &backend,
        30.0,
    )?;
    let ap_ok = ap.same_outcome(&ps_res);
    ok &= ap_ok;
    notes.push(format!("Apollo K_it=1 equals PS: {ap_ok}"));
    Ok(CheckOutcome::new(ok, notes.join("; ")))
}

fn sharpen(p: Array2<f64>) -> Array2<f64> {
    let mut p = p.mapv(|v| v.powi(4));
    for mut row in p.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Check 9: Every incumbent returned by the backend and by each strategy is
/// feasible for the original instance.
pub fn check_incumbents() -> Result<CheckOutcome> {
    let specs = [
        GenSpec {
            family: Family::SetCover {
                rows: 8,
                cols: 12,
                density: 0.3,
            },
            seed: 1,
        },
        GenSpec {
            family: Family::IndepSet { nodes: 12, edge_prob: 0.3 },
            seed: 2,
        },
        GenSpec {
            family: Family::CombAuction { items: 8, bids: 12 },
            seed: 3,
        },
    ];
    let mut insts = specs.iter().map(generate).collect::<Result<Vec<_>>>()?;
    insts.push(make_mixed(&specs[1], 0.3)?);
    let backend = BranchAndBound::default();
    let cfg = StrategyConfig::default();
    let (mut total, mut bad) = (0, Vec::new());
    for (k, inst) in insts.iter().enumerate() {
        let mut rng = SplitMix64::new(40 + k as u64);
        let marg = Marginals::from_probs(&sharpen(random_probs(inst.num_int, 2, &mut rng)))?;
        let mut results = vec![("backend".to_string(), backend.solve(inst, 30.0))];
        for s in Strategy::ALL {
            results.push((s.name().to_string(), run_strategy(s, &marg, None, inst, &cfg, &backend, 30.0)?));
        }
        for (name, r) in results {
            if let Some(a) = &r.assignment {
                total += 1;
                if !inst.evaluate(a, FEAS_TOL)?.feasible {
                    bad.push(format!("{}:{name}", inst.name));
                }
            }
        }
    }
    Ok(CheckOutcome::new(bad.is_empty(), format!("{total} incumbents checked, infeasible {bad:?}")))
}

/// Check 10: Instance JSON, checkpoint, pool and LP round-trips.
pub fn check_round_trips() -> Result<CheckOutcome> {
    let inst = make_mixed(
        &GenSpec {
            family: Family::CombAuction { items: 6, bids: 9 },
            seed: 5,
        },
        0.3,
    )?;
    let json_ok = MilpInstance::from_json(&inst.to_json())? == inst;
    let lp_ok = read_lp(&write_lp(&inst))? == inst;

    let model = Model::init(
        ModelConfig {
            layers: 2,
            hidden: 8,
            ..Default::default()
        },
        9,
    )?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("ckpt.json");
    model.save(&path, None)?;
    let loaded = Model::load(&path)?;
    let sched = Schedule::cosine(3)?;
    let pool = sample_solutions(&inst, &model, &GuidanceConfig::default(), &sched, 4, 1)?;
    let pool_again = sample_solutions(&inst, &loaded, &GuidanceConfig::default(), &sched, 4, 1)?;
    let ckpt_ok = loaded.params() == model.params() && loaded.config == model.config && pool == pool_again;
    let pool_path = dir.path().join("pool.json");
    pool.save(&pool_path)?;
    let pool_ok = CandidatePool::load(&pool_path)? == pool;
    Ok(CheckOutcome::new(
        json_ok && lp_ok && ckpt_ok && pool_ok,
        format!("instance {json_ok}, LP {lp_ok}, checkpoint {ckpt_ok}, pool {pool_ok}"),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub id: String,
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub suite: String,
    pub full: bool,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

impl SuiteManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn failing(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }
}

fn timed(id: &str, name: &str, f: impl FnOnce() -> CheckOutcome) -> CheckRecord {
    let started = Instant::now();
    let out = f();
    CheckRecord {
        id: id.into(),
        name: name.into(),
        status: if out.passed { CheckStatus::Pass } else { CheckStatus::Fail },
        detail: out.detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Runs the suite. The memorization and guidance-effect experiments train
/// models for several minutes and only run when `full` is set.
pub fn run_suite(full: bool, mut progress: impl FnMut(&CheckRecord)) -> SuiteManifest {
    let mut checks = Vec::new();
    let mut push = |r: CheckRecord, checks: &mut Vec<CheckRecord>| {
        progress(&r);
        checks.push(r);
    };
    push(timed("1", "metric arithmetic", check_metrics), &mut checks);
    push(timed("2", "branch and bound vs brute force", || check_oracle(50)), &mut checks);
    push(timed("3a", "Euler step lands on c1", check_euler_landing), &mut checks);
    push(timed("3b", "path marginals (Monte-Carlo)", || check_path_marginals(100_000)), &mut checks);
    push(
        timed("3c", "rate rows nonnegative, zero diagonal", || check_rate_rows(&model_rates)),
        &mut checks,
    );
    push(timed("3d", "cosine schedule", check_schedule), &mut checks);
    push(timed("4a", "target gradient vs finite differences", check_target_gradient), &mut checks);
    push(
        timed("4b", "loss gradient vs finite differences", || CheckOutcome::from_result(check_loss_gradient())),
        &mut checks,
    );
    push(timed("5", "loss sanity", check_loss_sanity), &mut checks);
    if full {
        let started = Instant::now();
        let setup = memorization_dataset().and_then(|data| {
            let memorized = train(&data, ModelConfig::default(), &memorization_train_config(300), |_| {})?.model;
            let undertrained = train(&data, ModelConfig::default(), &memorization_train_config(30), |_| {})?.model;
            Ok((data, memorized, undertrained))
        });
        let train_s = started.elapsed().as_secs_f64();
        match setup {
            Ok((data, memorized, undertrained)) => {
                let mut r6 = timed("6", "memorization", || CheckOutcome::from_result(check_memorization(&data, &memorized)));
                r6.seconds += train_s;
                push(r6, &mut checks);
                push(
                    timed("7", "guidance effect", || {
                        CheckOutcome::from_result(check_guidance_effect(&data, &undertrained))
                    }),
                    &mut checks,
                );
            }
            Err(e) => {
                for (id, name) in [("6", "memorization"), ("7", "guidance effect")] {
                    push(
                        CheckRecord {
                            id: id.into(),
                            name: name.into(),
                            status: CheckStatus::Fail,
                            detail: format!("setup failed: {e}"),
                            seconds: train_s,
                        },
                        &mut checks,
                    );
                }
            }
        }
    } else {
        for (id, name) in [("6", "memorization"), ("7", "guidance effect")] {
            push(
                CheckRecord {
                    id: id.into(),
                    name: name.into(),
                    status: CheckStatus::Skipped,
                    detail: "run with --full".into(),
                    seconds: 0.0,
                },
                &mut checks,
            );
        }
    }
    push(timed("8", "strategy contracts", || CheckOutcome::from_result(check_contracts())), &mut checks);
    push(
        timed("9", "incumbent feasibility", || CheckOutcome::from_result(check_incumbents())),
        &mut checks,
    );
    push(timed("10", "round-trips", || CheckOutcome::from_result(check_round_trips())), &mut checks);
    let passed = checks.iter().all(|c| c.status != CheckStatus::Fail);
    SuiteManifest {
        suite: "fmip-selfcheck".into(),
        full,
        checks,
        passed,
    }
}
