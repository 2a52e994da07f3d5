//! Guided sampling: Boltzmann-weighted discrete rates, gradient descent on
//! the continuous block, and the full inference loop that turns a trained
//! model into a pool of candidate solutions.

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::downstream::Marginals;
use crate::error::{FmipError, Result};
use crate::flow::{categorical_step, cond_rate_row, rates_from_probs, Schedule};
use crate::graph::{attach_state, encode, SolutionState, TripartiteGraph};
use crate::milp::{Assignment, MilpInstance, FEAS_TOL};
use crate::model::{Model, ModelOutput};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub gamma: f64,
    pub rho: f64,
    pub tau: f64,
    pub n_samples: usize,
    pub n_iter: usize,
    pub enabled: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            rho: 1e-2,
            tau: 1.0,
            n_samples: 8,
            n_iter: 3,
            enabled: true,
        }
    }
}

impl GuidanceConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma >= 0.0 && self.rho > 0.0 && self.tau > 0.0 && self.n_samples >= 1;
        if ok {
            Ok(())
        } else {
            Err(FmipError::Config(format!("invalid guidance config {self:?}")))
        }
    }
}

/// Normalized `exp(−f/τ)`, shifted by the smallest finite value. Non-finite
/// entries get zero weight; if nothing is finite the weights are uniform.
pub fn boltzmann_weights(f: &[f64], tau: f64) -> Vec<f64> {
    let fmin = f.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !fmin.is_finite() {
        warn!("all {} guidance targets are non-finite; using uniform weights", f.len());
        return vec![1.0 / f.len() as f64; f.len()];
    }
    let w: Vec<f64> = f.iter().map(|&v| if v.is_finite() { (-(v - fmin) / tau).exp() } else { 0.0 }).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// `Σ_r w_r R_{t|1}(d_t^{(i)}, · | d_r^{(i)})` for every integer variable.
pub fn weighted_rate_rows(d_t: &[usize], samples: &[Vec<usize>], weights: &[f64], t: f64, categories: usize) -> Result<Array2<f64>> {
    let mut rows = Array2::zeros((d_t.len(), categories));
    for (sample, &w) in samples.iter().zip(weights) {
        for (i, (&d, &target)) in d_t.iter().zip(sample).enumerate() {
            for (j, r) in cond_rate_row(d, target, t, categories)?.into_iter().enumerate() {
                rows[[i, j]] += w * r;
            }
        }
    }
    Ok(rows)
}

fn draw_assignment(probs: &Array2<f64>, rng: &mut SplitMix64) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|r| rng.categorical(r.as_slice().expect("standard layout")))
        .collect()
}

fn full_vector(d: &[usize], c: &[f64]) -> Vec<f64> {
    d.iter().map(|&v| v as f64).chain(c.iter().copied()).collect()
}

/// Discrete guidance: `n_samples` assignments from the model, weighted by
/// the Boltzmann factor of their target value at the predicted continuous
/// block.
pub fn guided_rate_matrix(
    state: &SolutionState,
    output: &ModelOutput,
    inst: &MilpInstance,
    cfg: &GuidanceConfig,
    t: f64,
    rng: &mut SplitMix64,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let probs = output.int_probs();
    let samples: Vec<Vec<usize>> = (0..cfg.n_samples).map(|_| draw_assignment(&probs, rng)).collect();
    let f = samples
        .iter()
        .map(|s| inst.target_f(&full_vector(s, &output.cont_values), cfg.gamma))
        .collect::<Result<Vec<f64>>>()?;
    weighted_rate_rows(&state.d, &samples, &boltzmann_weights(&f, cfg.tau), t, probs.ncols())
}

fn descend(inst: &MilpInstance, d1: &[usize], c_hat: &[f64], c: &mut [f64], cfg: &GuidanceConfig) -> Result<()> {
    let grad = inst.target_grad_continuous(&full_vector(d1, c_hat), cfg.gamma)?;
    for (v, g) in c.iter_mut().zip(grad) {
        *v -= cfg.rho * g;
    }
    project_cont(inst, c);
    Ok(())
}

/// Continuous guidance: draws `d_{1|t}` from the model and runs `n_iter`
/// descent steps on `c_t` along `∇_c f(d_{1|t}, ĉ_1)`. When `predictor` is
/// given it re-predicts `ĉ_1` from the moved state after every step.
/// Returns the new `c_t` and the final prediction.
pub fn guided_cont_step(
    state: &SolutionState,
    output: &ModelOutput,
    inst: &MilpInstance,
    cfg: &GuidanceConfig,
    rng: &mut SplitMix64,
    mut predictor: Option<&mut dyn FnMut(&[f64]) -> Result<Vec<f64>>>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d1 = draw_assignment(&output.int_probs(), rng);
    let mut c = state.c.clone();
    let mut c_hat = output.cont_values.clone();
    for _ in 0..cfg.n_iter {
        descend(inst, &d1, &c_hat, &mut c, cfg)?;
        if let Some(p) = predictor.as_mut() {
            c_hat = p(&c)?;
        }
    }
    Ok((c, c_hat))
}

fn project_cont(inst: &MilpInstance, c: &mut [f64]) {
    let q = inst.num_int;
    for (k, v) in c.iter_mut().enumerate() {
        *v = v.max(inst.lower[q + k]).min(inst.upper[q + k]);
    }
}

fn project_int(inst: &MilpInstance, d: &mut [usize]) {
    for (i, v) in d.iter_mut().enumerate() {
        let lo = inst.lower[i].ceil().max(0.0) as usize;
        let hi = inst.upper[i].floor().max(0.0) as usize;
        *v = (*v).max(lo).min(hi.max(lo));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub values: Vec<f64>,
    pub f: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub candidates: Vec<Candidate>,
    pub marginals: Marginals,
}

impl CandidatePool {
    /// Scores assignments and counts integer values into marginals.
    pub fn from_assignments(inst: &MilpInstance, values: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(FmipError::Domain("a candidate pool needs at least one candidate".into()));
        }
        let cats = inst.int_bound as usize + 1;
        let mut counts = vec![vec![0.0; cats]; inst.num_int];
        let mut candidates = Vec::with_capacity(values.len());
        for v in values {
            for (i, row) in counts.iter_mut().enumerate() {
                row[(v[i].round().max(0.0) as usize).min(cats - 1)] += 1.0;
            }
            let f = inst.target_f(&v, gamma)?;
            let feasible = inst.evaluate(&Assignment::new(v.clone()), FEAS_TOL)?.feasible;
            candidates.push(Candidate { values: v, f, feasible });
        }
        let n = candidates.len() as f64;
        let marginals = Marginals::new(counts.into_iter().map(|r| r.into_iter().map(|c| c / n).collect()).collect())?;
        Ok(Self { candidates, marginals })
    }

    pub fn feasible_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.feasible).count()
    }

    pub fn mean_f(&self) -> f64 {
        self.candidates.iter().map(|c| c.f).sum::<f64>() / self.candidates.len() as f64
    }

    /// Lowest target among feasible candidates, else among all.
    pub fn best(&self) -> Option<&Candidate> {
        let pick = |feasible_only: bool| {
            self.candidates
                .iter()
                .filter(|c| !feasible_only || c.feasible)
                .min_by(|a, b| a.f.total_cmp(&b.f))
        };
        pick(true).or_else(|| pick(false))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pool serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pool: Self = serde_json::from_str(text)?;
        Marginals::new(pool.marginals.rows.clone())?;
        Ok(pool)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

struct Trajectory {
    rng: SplitMix64,
    d: Vec<usize>,
    c: Vec<f64>,
}

impl Trajectory {
    fn start(inst: &MilpInstance, mut rng: SplitMix64) -> Self {
        let cats = inst.int_bound as u64 + 1;
        let mut d: Vec<usize> = (0..inst.num_int).map(|_| rng.below(cats) as usize).collect();
        let mut c: Vec<f64> = (0..inst.num_cont()).map(|_| rng.normal()).collect();
        project_int(inst, &mut d);
        project_cont(inst, &mut c);
        Self { rng, d, c }
    }

    fn state(&self, t: f64) -> SolutionState {
        SolutionState {
            d: self.d.clone(),
            c: self.c.clone(),
            t,
        }
    }
}

fn predict_states(model: &Model, graph: &TripartiteGraph, states: &[SolutionState]) -> Result<Vec<ModelOutput>> {
    let mut outs = Vec::with_capacity(states.len());
    for s in states {
        outs.extend(model.predict(&[attach_state(graph, s)?]));
    }
    Ok(outs)
}

/// Runs the given trajectories to `t = 1`. Entries come back `None` when
/// the model produced non-finite output along the way.
fn run_trajectories(
    model: &Model,
    graph: &TripartiteGraph,
    inst: &MilpInstance,
    cfg: &GuidanceConfig,
    sched: &Schedule,
    mut trajs: Vec<Trajectory>,
) -> Result<Vec<Option<Vec<f64>>>> {
    let mut alive = vec![true; trajs.len()];
    let guide = cfg.enabled;
    for (k, dt) in sched.step_sizes().into_iter().enumerate() {
        let t = sched.times[k];
        let idx: Vec<usize> = (0..trajs.len()).filter(|&i| alive[i]).collect();
        if idx.is_empty() {
            break;
        }
        let states: Vec<SolutionState> = idx.iter().map(|&i| trajs[i].state(t)).collect();
        let outs = predict_states(model, graph, &states)?;
        let mut c_hats = Vec::with_capacity(idx.len());
        let mut d1s = Vec::with_capacity(idx.len());
        for ((&i, out), state) in idx.iter().zip(&outs).zip(&states) {
            if !out.is_finite() {
                alive[i] = false;
                c_hats.push(Vec::new());
                d1s.push(Vec::new());
                continue;
            }
            let tr = &mut trajs[i];
            if inst.num_int > 0 {
                let rates = if guide {
                    guided_rate_matrix(state, out, inst, cfg, t, &mut tr.rng)?
                } else {
                    rates_from_probs(&out.int_probs(), &state.d, t)
                };
                for (v, row) in tr.d.iter_mut().zip(rates.rows()) {
                    *v = categorical_step(*v, row.as_slice().expect("standard layout"), dt, &mut tr.rng)?;
                }
                project_int(inst, &mut tr.d);
            }
            let cont_guided = guide && inst.num_cont() > 0 && cfg.n_iter > 0;
            d1s.push(if cont_guided {
                draw_assignment(&out.int_probs(), &mut tr.rng)
            } else {
                Vec::new()
            });
            c_hats.push(out.cont_values.clone());
        }
        if guide && inst.num_cont() > 0 && cfg.n_iter > 0 {
            for _ in 0..cfg.n_iter {
                let live: Vec<usize> = (0..idx.len()).filter(|&j| alive[idx[j]]).collect();
                for &j in &live {
                    descend(inst, &d1s[j], &c_hats[j], &mut trajs[idx[j]].c, cfg)?;
                }
                let refresh: Vec<SolutionState> = live
                    .iter()
                    .map(|&j| SolutionState {
                        c: trajs[idx[j]].c.clone(),
                        ..states[j].clone()
                    })
                    .collect();
                for (&j, out) in live.iter().zip(predict_states(model, graph, &refresh)?) {
                    if out.cont_values.iter().all(|v| v.is_finite()) {
                        c_hats[j] = out.cont_values;
                    } else {
                        alive[idx[j]] = false;
                    }
                }
            }
        }
        for (j, &i) in idx.iter().enumerate() {
            if !alive[i] {
                continue;
            }
            let tr = &mut trajs[i];
            for (c, target) in tr.c.iter_mut().zip(&c_hats[j]) {
                *c += (target - *c) / (1.0 - t) * dt;
            }
            project_cont(inst, &mut tr.c);
        }
    }
    Ok(trajs
        .into_iter()
        .zip(alive)
        .map(|(tr, ok)| {
            ok.then(|| {
                let mut v = full_vector(&tr.d, &tr.c);
                inst.project_in_place(&mut v, true);
                v
            })
        })
        .collect())
}

/// Draws `n_candidates` solutions by integrating the learned flow from
/// noise. Candidate `i` uses the stream `(seed, i)`; a candidate whose
/// trajectory hits non-finite model output is redrawn once on stream
/// `(seed, i + n_candidates)`.
pub fn sample_solutions(inst: &MilpInstance, model: &Model, cfg: &GuidanceConfig, sched: &Schedule, n_candidates: usize, seed: u64) -> Result<CandidatePool> {
    cfg.validate()?;
    if n_candidates == 0 {
        return Err(FmipError::Domain("n_candidates must be positive".into()));
    }
    crate::error::check_len("model integer categories", inst.int_bound as usize + 1, model.config.int_categories)?;
    let graph = encode(inst, model.config.normalize);
    let trajs = (0..n_candidates).map(|i| Trajectory::start(inst, SplitMix64::stream(seed, i as u64))).collect();
    let mut results = run_trajectories(model, &graph, inst, cfg, sched, trajs)?;
    let failed: Vec<usize> = (0..n_candidates).filter(|&i| results[i].is_none()).collect();
    if !failed.is_empty() {
        warn!("{} trajectories hit non-finite model output on {}; redrawing", failed.len(), inst.name);
        let retry = failed
            .iter()
            .map(|&i| Trajectory::start(inst, SplitMix64::stream(seed, (i + n_candidates) as u64)))
            .collect();
        for (&i, r) in failed.iter().zip(run_trajectories(model, &graph, inst, cfg, sched, retry)?) {
            results[i] = Some(r.ok_or_else(|| FmipError::Model(format!("candidate {i} on {} produced non-finite output twice", inst.name)))?);
        }
    }
    CandidatePool::from_assignments(inst, results.into_iter().map(|r| r.expect("filled above")).collect(), cfg.gamma)
}
