//! Primal heuristics driven by integer-variable marginals: Neural Diving,
//! Predict&Search, PMVB and Apollo. Each builds restricted sub-MILPs
//! (tighter bounds or extra rows, never a changed objective) and hands
//! them to a [`MilpBackend`].

use log::{info, warn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use web_time::Instant;

use crate::backend::{MilpBackend, SolveResult, SolveStatus};
use crate::error::{FmipError, Result};
use crate::milp::MilpInstance;
use crate::rng::SplitMix64;

/// Per-variable category probabilities over the integer block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Marginals {
    pub rows: Vec<Vec<f64>>,
}

impl Marginals {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width || width == 0 {
                return Err(FmipError::Domain(format!(
                    "marginal row {i} has {} entries, expected {}",
                    r.len(),
                    width.max(1)
                )));
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || r.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(FmipError::Domain(format!("marginal row {i} is not a distribution: {r:?}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_probs(p: &Array2<f64>) -> Result<Self> {
        Self::new(p.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Point masses on the (rounded) integer values.
    pub fn point_mass(values: &[f64], categories: usize) -> Self {
        Self {
            rows: values
                .iter()
                .map(|&v| {
                    let mut r = vec![0.0; categories];
                    r[(v.round().max(0.0) as usize).min(categories - 1)] = 1.0;
                    r
                })
                .collect(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.rows.len()
    }

    /// Probability of value 1 (binary problems).
    pub fn p1(&self, i: usize) -> f64 {
        self.rows[i][1]
    }

    pub fn confidence(&self, i: usize) -> f64 {
        self.rows[i].iter().copied().fold(0.0, f64::max)
    }

    /// Most probable category; ties go to the smaller value.
    pub fn argmax(&self, i: usize) -> usize {
        let r = &self.rows[i];
        (0..r.len()).fold(0, |best, j| if r[j] > r[best] { j } else { best })
    }

    fn check(&self, inst: &MilpInstance) -> Result<()> {
        crate::error::check_len("marginal rows", inst.num_int, self.num_vars())?;
        if self.num_vars() > 0 {
            crate::error::check_len("marginal width", inst.int_bound as usize + 1, self.rows[0].len())?;
        }
        Ok(())
    }
}

/// Parses a bracketed list such as `"[0.3, 0.06, 0.3]"`.
pub fn parse_bracket(text: &str) -> Result<Vec<f64>> {
    let inner = text
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| FmipError::Config(format!("expected a bracketed list, got {text:?}")))?;
    inner
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| FmipError::Config(format!("bad number {s:?} in {text:?}: {e}")))
        })
        .collect()
}

fn expect_len(text: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(FmipError::Config(format!("{text:?} needs {n} values, has {}", v.len())))
    }
}

fn config_err(msg: String) -> FmipError {
    FmipError::Config(msg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NdConfig {
    pub num_candidates: usize,
    pub fix_fraction: f64,
    pub seed: u64,
}

impl Default for NdConfig {
    fn default() -> Self {
        Self {
            num_candidates: 50,
            fix_fraction: 0.1,
            seed: 0,
        }
    }
}

impl NdConfig {
    /// `"[K_nd, α]"`.
    pub fn parse(text: &str) -> Result<Self> {
        let v = parse_bracket(text)?;
        expect_len(text, &v, 2)?;
        let cfg = Self {
            num_candidates: v[0] as usize,
            fix_fraction: v[1],
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_candidates == 0 || !(0.0..1.0).contains(&self.fix_fraction) {
            return Err(config_err(format!("invalid neural diving config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsConfig {
    pub k0: f64,
    pub k1: f64,
    pub delta: f64,
}

impl Default for PsConfig {
    fn default() -> Self {
        Self { k0: 0.3, k1: 0.06, delta: 0.3 }
    }
}

impl PsConfig {
    /// `"[k0, k1, Δ]"`.
    pub fn parse(text: &str) -> Result<Self> {
        let v = parse_bracket(text)?;
        expect_len(text, &v, 3)?;
        let cfg = Self {
            k0: v[0],
            k1: v[1],
            delta: v[2],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.k0) && unit(self.k1) && self.delta >= 0.0) {
            return Err(config_err(format!("invalid predict&search config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmvbConfig {
    /// Confidence parameter `δ`.
    pub conf: f64,
    /// Probability threshold `τ`.
    pub threshold: f64,
}

impl Default for PmvbConfig {
    fn default() -> Self {
        Self { conf: 0.7, threshold: 0.9 }
    }
}

impl PmvbConfig {
    /// `"[δ, τ]"`.
    pub fn parse(text: &str) -> Result<Self> {
        let v = parse_bracket(text)?;
        expect_len(text, &v, 2)?;
        let cfg = Self { conf: v[0], threshold: v[1] };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 1.0;
        if !(open(self.conf) && open(self.threshold)) {
            return Err(config_err(format!("invalid PMVB config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApolloConfig {
    pub k0: f64,
    pub k1: f64,
    pub delta: f64,
    pub iterations: usize,
}

impl Default for ApolloConfig {
    fn default() -> Self {
        Self {
            k0: 0.3,
            k1: 0.06,
            delta: 0.3,
            iterations: 2,
        }
    }
}

impl ApolloConfig {
    /// `"[k0, k1, Δ, K_it]"`.
    pub fn parse(text: &str) -> Result<Self> {
        let v = parse_bracket(text)?;
        expect_len(text, &v, 4)?;
        let cfg = Self {
            k0: v[0],
            k1: v[1],
            delta: v[2],
            iterations: v[3] as usize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ps(&self) -> PsConfig {
        PsConfig {
            k0: self.k0,
            k1: self.k1,
            delta: self.delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ps().validate()?;
        if self.iterations == 0 {
            return Err(config_err("apollo needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// All strategy parameters; defaults are the combinatorial-auction column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub nd: NdConfig,
    pub ps: PsConfig,
    pub pmvb: PmvbConfig,
    pub apollo: ApolloConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Nd,
    Ps,
    Pmvb,
    Apollo,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Nd, Strategy::Ps, Strategy::Pmvb, Strategy::Apollo];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Nd => "nd",
            Strategy::Ps => "ps",
            Strategy::Pmvb => "pmvb",
            Strategy::Apollo => "apollo",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = FmipError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nd" | "neural_diving" | "neural-diving" => Ok(Strategy::Nd),
            "ps" | "predict_and_search" | "predict-and-search" => Ok(Strategy::Ps),
            "pmvb" => Ok(Strategy::Pmvb),
            "apollo" => Ok(Strategy::Apollo),
            _ => Err(FmipError::Config(format!("unknown strategy {s:?} (nd, ps, pmvb, apollo)"))),
        }
    }
}

fn require_binary(inst: &MilpInstance, what: &str) -> Result<()> {
    if inst.num_int > 0 && !inst.is_binary() {
        return Err(FmipError::Contract(format!(
            "{what} needs a binary integer block (K = 1), got K = {}",
            inst.int_bound
        )));
    }
    Ok(())
}

/// Keeps the better of two results (lower objective among those with an
/// assignment; the earlier one on ties).
fn better(best: Option<SolveResult>, cand: SolveResult) -> Option<SolveResult> {
    match best {
        Some(b) if !cand.has_solution() || (b.has_solution() && b.objective <= cand.objective) => Some(b),
        _ => Some(cand),
    }
}

/// The `K_nd` diving sub-MIPs with the `(index, value)` fixes of each.
pub fn neural_diving_subproblems(marg: &Marginals, inst: &MilpInstance, cfg: &NdConfig) -> Result<Vec<(MilpInstance, Vec<(usize, f64)>)>> {
    cfg.validate()?;
    marg.check(inst)?;
    let q = inst.num_int;
    let count = (cfg.fix_fraction * q as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| marg.confidence(b).total_cmp(&marg.confidence(a)).then(a.cmp(&b)));
    let chosen = &order[..count.min(q)];
    Ok((0..cfg.num_candidates)
        .map(|s| {
            let mut rng = SplitMix64::stream(cfg.seed, s as u64);
            let fixes: Vec<(usize, f64)> = chosen
                .iter()
                .map(|&i| {
                    let v = rng.categorical(&marg.rows[i]) as f64;
                    (i, v.max(inst.lower[i]).min(inst.upper[i]))
                })
                .collect();
            (inst.with_fixed(&fixes), fixes)
        })
        .collect())
}

fn solve_all(backend: &dyn MilpBackend, subs: &[MilpInstance], time_limit_s: f64) -> Vec<SolveResult> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(subs.len()).max(1);
    if workers == 1 {
        return subs.iter().map(|s| backend.solve(s, time_limit_s)).collect();
    }
    let chunk = subs.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = subs
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|s| backend.solve(s, time_limit_s)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("solver thread panicked")).collect()
    })
}

pub fn neural_diving(marg: &Marginals, inst: &MilpInstance, cfg: &NdConfig, backend: &dyn MilpBackend, time_limit_s: f64) -> Result<SolveResult> {
    let started = Instant::now();
    let subs: Vec<MilpInstance> = neural_diving_subproblems(marg, inst, cfg)?.into_iter().map(|(s, _)| s).collect();
    let results = solve_all(backend, &subs, time_limit_s);
    let nodes = results.iter().map(|r| r.nodes).sum();
    let mut best = None;
    for r in &results {
        if r.has_solution() {
            best = better(best, r.clone());
        }
    }
    let mut out = match best {
        Some(mut b) => {
            b.status = SolveStatus::Feasible;
            b.bound = f64::NEG_INFINITY;
            b
        }
        None => {
            let status = if results.iter().all(|r| r.status == SolveStatus::Infeasible) {
                SolveStatus::Infeasible
            } else {
                results
                    .iter()
                    .map(|r| r.status)
                    .find(|s| *s != SolveStatus::Infeasible)
                    .unwrap_or(SolveStatus::Error)
            };
            SolveResult::failure(status, started, format!("no feasible sub-MIP among {}", subs.len()))
        }
    };
    out.nodes = nodes;
    out.wall_time_s = started.elapsed().as_secs_f64();
    Ok(out)
}

/// Trust region `Σ_{T0} x + Σ_{T1} (1 − x) ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegion {
    pub t0: Vec<usize>,
    pub t1: Vec<usize>,
    pub rhs: f64,
}

impl TrustRegion {
    /// The constraint in `Σ coef·x ≤ b` form.
    pub fn row(&self) -> (Vec<(usize, f64)>, f64) {
        let mut row: Vec<(usize, f64)> = self.t0.iter().map(|&i| (i, 1.0)).chain(self.t1.iter().map(|&i| (i, -1.0))).collect();
        row.sort_by_key(|&(i, _)| i);
        (row, self.rhs - self.t1.len() as f64)
    }
}

/// Trust region over the variables selected by `mask` (all when `None`).
pub fn ps_trust_region(marg: &Marginals, cfg: &PsConfig, mask: Option<&[bool]>) -> Option<TrustRegion> {
    let active = |i: usize| mask.is_none_or(|m| m[i]);
    let t0: Vec<usize> = (0..marg.num_vars()).filter(|&i| active(i) && marg.p1(i) <= cfg.k0).collect();
    let t1: Vec<usize> = (0..marg.num_vars())
        .filter(|&i| active(i) && marg.p1(i) >= 1.0 - cfg.k1 && marg.p1(i) > cfg.k0)
        .collect();
    if t0.is_empty() && t1.is_empty() {
        return None;
    }
    let size = (t0.len() + t1.len()) as f64;
    let rhs = (cfg.delta * size + 1e-9).floor();
    Some(TrustRegion { t0, t1, rhs })
}

fn ps_masked(
    marg: &Marginals,
    inst: &MilpInstance,
    cfg: &PsConfig,
    backend: &dyn MilpBackend,
    time_limit_s: f64,
    mask: Option<&[bool]>,
) -> Result<SolveResult> {
    cfg.validate()?;
    require_binary(inst, "predict&search")?;
    marg.check(inst)?;
    match ps_trust_region(marg, cfg, mask) {
        Some(tr) => {
            let (row, rhs) = tr.row();
            Ok(backend.solve(&inst.with_row(&row, rhs), time_limit_s))
        }
        None => {
            info!("predict&search: no confident variables on {}; solving unchanged", inst.name);
            Ok(backend.solve(inst, time_limit_s))
        }
    }
}

pub fn predict_and_search(marg: &Marginals, inst: &MilpInstance, cfg: &PsConfig, backend: &dyn MilpBackend, time_limit_s: f64) -> Result<SolveResult> {
    ps_masked(marg, inst, cfg, backend, time_limit_s, None)
}

/// `γ_S = sqrt(|S| ln(2/δ) / 2)`.
pub fn pmvb_gamma(size: usize, conf: f64) -> f64 {
    (size as f64 * (2.0 / conf).ln() / 2.0).sqrt()
}

/// Cardinality rows of PMVB; `None` marks an omitted (vacuous or
/// contradictory) row.
#[derive(Debug, Clone, PartialEq)]
pub struct PmvbRows {
    pub upper_set: Vec<usize>,
    pub lower_set: Vec<usize>,
    /// `Σ_U x ≥ at_least`.
    pub at_least: Option<f64>,
    /// `Σ_L x ≤ at_most`.
    pub at_most: Option<f64>,
}

pub fn pmvb_rows(marg: &Marginals, cfg: &PmvbConfig) -> PmvbRows {
    let u: Vec<usize> = (0..marg.num_vars()).filter(|&i| marg.p1(i) >= cfg.threshold).collect();
    let l: Vec<usize> = (0..marg.num_vars()).filter(|&i| marg.p1(i) <= 1.0 - cfg.threshold).collect();
    let sum_p = |s: &[usize]| s.iter().map(|&i| marg.p1(i)).sum::<f64>();
    let ge = ((1.0 - cfg.conf) * sum_p(&u) - pmvb_gamma(u.len(), cfg.conf)).ceil();
    let le = (cfg.conf * sum_p(&l) + pmvb_gamma(l.len(), cfg.conf)).floor();
    PmvbRows {
        at_least: (!u.is_empty() && ge > 0.0 && ge <= u.len() as f64).then_some(ge),
        at_most: (!l.is_empty() && le >= 0.0 && le < l.len() as f64).then_some(le),
        upper_set: u,
        lower_set: l,
    }
}

pub fn pmvb(marg: &Marginals, inst: &MilpInstance, cfg: &PmvbConfig, backend: &dyn MilpBackend, time_limit_s: f64) -> Result<SolveResult> {
    cfg.validate()?;
    require_binary(inst, "PMVB")?;
    marg.check(inst)?;
    let rows = pmvb_rows(marg, cfg);
    let mut sub = inst.clone();
    if let Some(k) = rows.at_least {
        let row: Vec<(usize, f64)> = rows.upper_set.iter().map(|&i| (i, -1.0)).collect();
        sub = sub.with_row(&row, -k);
    }
    if let Some(k) = rows.at_most {
        let row: Vec<(usize, f64)> = rows.lower_set.iter().map(|&i| (i, 1.0)).collect();
        sub = sub.with_row(&row, k);
    }
    if sub.num_cons == inst.num_cons {
        info!("PMVB: both cardinality rows vacuous on {}; solving unchanged", inst.name);
    }
    Ok(backend.solve(&sub, time_limit_s))
}

/// Alternates re-prediction on the reduced instance with a
/// Predict&Search reference solve, fixing variables on which both agree.
pub fn apollo(
    marg_fn: &mut dyn FnMut(&MilpInstance) -> Result<Marginals>,
    inst: &MilpInstance,
    cfg: &ApolloConfig,
    backend: &dyn MilpBackend,
    time_limit_s: f64,
) -> Result<SolveResult> {
    cfg.validate()?;
    require_binary(inst, "apollo")?;
    let ps = cfg.ps();
    let per_iter = time_limit_s / cfg.iterations as f64;
    let q = inst.num_int;
    let mut current = inst.clone();
    let mut previous: Option<MilpInstance> = None;
    let mut fixed = vec![false; q];
    let mut best: Option<SolveResult> = None;
    let mut last: Option<SolveResult> = None;

    for it in 0..cfg.iterations {
        let marg = marg_fn(&current)?;
        let mask: Vec<bool> = fixed.iter().map(|f| !f).collect();
        let res = ps_masked(&marg, &current, &ps, backend, per_iter, Some(&mask))?;
        if !res.has_solution() {
            if let (SolveStatus::Infeasible, Some(prev)) = (res.status, previous.take()) {
                warn!("apollo: reduction infeasible at iteration {}; unfixing the last batch", it + 1);
                let retry = backend.solve(&prev, per_iter);
                best = better(best, retry.clone());
                return Ok(best.filter(|b| b.has_solution()).unwrap_or(retry));
            }
            last = Some(res);
            break;
        }
        best = better(best, res.clone());
        let reference = res.assignment.as_ref().expect("checked above").values.clone();
        last = Some(res);
        if it + 1 < cfg.iterations {
            let batch: Vec<(usize, f64)> = (0..q)
                .filter(|&i| !fixed[i] && marg.argmax(i) as f64 == reference[i].round())
                .map(|i| (i, reference[i].round()))
                .collect();
            for &(i, _) in &batch {
                fixed[i] = true;
            }
            previous = Some(current.clone());
            current = current.with_fixed(&batch);
        }
    }
    let last = last.expect("at least one iteration");
    Ok(if last.has_solution() {
        last
    } else {
        best.filter(|b| b.has_solution()).unwrap_or(last)
    })
}

/// Runs one strategy. Apollo re-predicts through `repredict` when given
/// and otherwise reuses `marg` on every reduced instance.
pub fn run_strategy(
    strategy: Strategy,
    marg: &Marginals,
    repredict: Option<&mut dyn FnMut(&MilpInstance) -> Result<Marginals>>,
    inst: &MilpInstance,
    cfg: &StrategyConfig,
    backend: &dyn MilpBackend,
    time_limit_s: f64,
) -> Result<SolveResult> {
    match strategy {
        Strategy::Nd => neural_diving(marg, inst, &cfg.nd, backend, time_limit_s),
        Strategy::Ps => predict_and_search(marg, inst, &cfg.ps, backend, time_limit_s),
        Strategy::Pmvb => pmvb(marg, inst, &cfg.pmvb, backend, time_limit_s),
        Strategy::Apollo => match repredict {
            Some(f) => apollo(f, inst, &cfg.apollo, backend, time_limit_s),
            None => {
                let mut fixed = |sub: &MilpInstance| {
                    marg.check(sub)?;
                    Ok(marg.clone())
                };
                apollo(&mut fixed, inst, &cfg.apollo, backend, time_limit_s)
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{brute_force, BranchAndBound, BruteForce};
    use crate::gen::{generate, Family, GenSpec};
    use crate::milp::FEAS_TOL;

    fn mis() -> MilpInstance {
        generate(&GenSpec {
            family: Family::IndepSet { nodes: 10, edge_prob: 0.3 },
            seed: 4,
        })
        .unwrap()
    }

    fn uniform(q: usize) -> Marginals {
        Marginals::new(vec![vec![0.5, 0.5]; q]).unwrap()
    }

    #[test]
    fn table4_strings() {
        assert_eq!(NdConfig::parse("[50, 0.1]").unwrap().num_candidates, 50);
        assert_eq!(PsConfig::parse("[0.3, 0.06, 0.3]").unwrap(), PsConfig::default());
        assert_eq!(PmvbConfig::parse("[0.7, 0.9]").unwrap(), PmvbConfig::default());
        let a = ApolloConfig::parse("[0.3, 0.06, 0.3, 2]").unwrap();
        assert_eq!((a.ps(), a.iterations), (PsConfig::default(), 2));
        assert!(PsConfig::parse("[0.3, 0.06]").is_err());
        assert!(NdConfig::parse("50, 0.1").is_err());
    }

    #[test]
    fn marginals_validation() {
        assert!(Marginals::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(Marginals::new(vec![vec![1.0, 0.0], vec![1.0]]).is_err());
        let m = Marginals::point_mass(&[1.0, 0.0], 2);
        assert_eq!((m.p1(0), m.argmax(1)), (1.0, 0));
    }

    #[test]
    fn nd_fix_counts() {
        let inst = mis();
        let subs = neural_diving_subproblems(&uniform(10), &inst, &NdConfig::default()).unwrap();
        assert_eq!(subs.len(), 50);
        assert!(subs.iter().all(|(_, f)| f.len() == 1));
        let zero = NdConfig {
            fix_fraction: 0.0,
            ..Default::default()
        };
        for (sub, fixes) in neural_diving_subproblems(&uniform(10), &inst, &zero).unwrap() {
            assert!(fixes.is_empty());
            assert_eq!(sub, inst);
        }
    }

    #[test]
    fn nd_point_mass_reaches_optimum() {
        let inst = mis();
        let opt = brute_force(&inst);
        let marg = Marginals::point_mass(&opt.assignment.unwrap().values, 2);
        let cfg = NdConfig {
            fix_fraction: 0.5,
            num_candidates: 3,
            ..Default::default()
        };
        let r = neural_diving(&marg, &inst, &cfg, &BranchAndBound::default(), 10.0).unwrap();
        assert_eq!(r.objective, opt.objective);
        let r = neural_diving(&uniform(10), &inst, &cfg, &BranchAndBound::default(), 10.0).unwrap();
        assert!(r.objective >= opt.objective);
        assert!(inst.evaluate(r.assignment.as_ref().unwrap(), FEAS_TOL).unwrap().feasible);
    }

    #[test]
    fn ps_thresholds_and_rhs() {
        let m = Marginals::new(vec![vec![0.05, 0.95], vec![0.8, 0.2], vec![0.5, 0.5]]).unwrap();
        let tr = ps_trust_region(&m, &PsConfig::default(), None).unwrap();
        assert_eq!((tr.t0.clone(), tr.t1.clone()), (vec![1], vec![0]));
        assert_eq!(tr.rhs, (0.3f64 * 2.0).floor());
        assert!(ps_trust_region(&uniform(3), &PsConfig::default(), None).is_none());
    }

    #[test]
    fn ps_point_mass_any_delta_is_optimal() {
        let inst = mis();
        let opt = brute_force(&inst);
        let marg = Marginals::point_mass(&opt.assignment.unwrap().values, 2);
        for delta in [0.0, 0.3, 5.0] {
            let cfg = PsConfig { delta, ..Default::default() };
            let r = predict_and_search(&marg, &inst, &cfg, &BruteForce, 10.0).unwrap();
            assert_eq!(r.objective, opt.objective);
        }
    }

    #[test]
    fn pmvb_gamma_value() {
        assert!((pmvb_gamma(8, 0.5) - 2.35482).abs() < 1e-5);
    }

    #[test]
    fn pmvb_rows_and_solve() {
        let inst = mis();
        let opt = brute_force(&inst);
        let marg = Marginals::point_mass(&opt.assignment.unwrap().values, 2);
        let cfg = PmvbConfig { conf: 0.5, threshold: 0.9 };
        let r = pmvb(&marg, &inst, &cfg, &BranchAndBound::default(), 10.0).unwrap();
        assert_eq!(r.objective, opt.objective);
        let only_low = Marginals::new(vec![vec![1.0, 0.0]; 10]).unwrap();
        let rows = pmvb_rows(&only_low, &cfg);
        assert!(rows.upper_set.is_empty() && rows.at_least.is_none());
        assert_eq!(rows.at_most, Some((pmvb_gamma(10, 0.5)).floor()));
    }

    #[test]
    fn apollo_single_iteration_is_ps() {
        let inst = mis();
        let marg = Marginals::new((0..10).map(|i| if i % 3 == 0 { vec![0.9, 0.1] } else { vec![0.02, 0.98] }).collect()).unwrap();
        let ps = predict_and_search(&marg, &inst, &PsConfig::default(), &BranchAndBound::default(), 10.0).unwrap();
        let cfg = ApolloConfig {
            iterations: 1,
            ..Default::default()
        };
        let ap = apollo(&mut |_| Ok(marg.clone()), &inst, &cfg, &BranchAndBound::default(), 10.0).unwrap();
        assert!(ap.same_outcome(&ps));
    }

    #[test]
    fn apollo_fixes_all_on_agreement() {
        let inst = mis();
        let opt = brute_force(&inst);
        let marg = Marginals::point_mass(&opt.assignment.clone().unwrap().values, 2);
        let mut seen = vec![];
        let ap = apollo(
            &mut |sub| {
                seen.push((0..sub.num_int).filter(|&i| sub.lower[i] == sub.upper[i]).count());
                Ok(marg.clone())
            },
            &inst,
            &ApolloConfig::default(),
            &BranchAndBound::default(),
            10.0,
        )
        .unwrap();
        assert_eq!(seen, vec![0, 10]);
        assert_eq!(ap.objective, opt.objective);
    }

    #[test]
    fn general_integer_rejected_by_ps() {
        let inst = crate::milp::toy_instance();
        let marg = Marginals::new(vec![vec![1.0 / 6.0; 6]]).unwrap();
        assert!(matches!(
            predict_and_search(&marg, &inst, &PsConfig::default(), &BruteForce, 1.0),
            Err(FmipError::Contract(_))
        ));
    }
}
