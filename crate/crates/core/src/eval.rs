//! Evaluation of sampled marginals and downstream strategies against the
//! best known solution, with CSV and plain-text reports.

use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use web_time::Instant;

use crate::backend::{brute_force, MilpBackend, SolveResult, BRUTE_FORCE_LIMIT};
use crate::config::SamplingConfig;
use crate::downstream::{run_strategy, Marginals, Strategy, StrategyConfig};
use crate::error::{FmipError, Result};
use crate::gen::{Dataset, LabeledInstance};
use crate::guidance::{sample_solutions, CandidatePool, GuidanceConfig};
use crate::metrics::{cross_entropy, gap, imp};
use crate::milp::{Assignment, MilpInstance, FEAS_TOL};
use crate::model::Model;

/// Method name of the best pool candidate.
pub const SAMPLER: &str = "sampler";
/// Method name of a direct backend solve.
pub const BACKEND: &str = "backend";
/// Method name of the independent reference solve behind the BKS.
pub const REFERENCE: &str = "reference";
/// Suffix of methods run on unguided pools.
pub const UNGUIDED_SUFFIX: &str = "/unguided";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance: String,
    pub method: String,
    /// Objective of the returned solution; infinite when none was found.
    pub obj: f64,
    pub bks: f64,
    pub gap: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyRecord {
    pub instance: String,
    pub variant: String,
    pub cross_entropy: f64,
}

/// One test instance with its label when known.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub instance: MilpInstance,
    pub label: Option<Assignment>,
}

impl From<LabeledInstance> for EvalInstance {
    fn from(li: LabeledInstance) -> Self {
        Self {
            instance: li.instance,
            label: Some(li.label),
        }
    }
}

/// Instances of a dataset directory, labeled where labels exist.
pub fn read_eval_set(dir: &Path) -> Result<Vec<EvalInstance>> {
    let labeled = Dataset::read_labeled(dir)?;
    let instances = Dataset::read_instances(dir)?;
    Ok(instances
        .into_iter()
        .map(|instance| {
            let label = labeled.iter().find(|l| l.instance.name == instance.name).map(|l| l.label.clone());
            EvalInstance { instance, label }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub strategies: Vec<Strategy>,
    pub strategy_cfg: StrategyConfig,
    pub sampling: SamplingConfig,
    /// Seconds per strategy run and for the direct backend solve.
    pub time_limit_s: f64,
    /// Also run every strategy on an unguided pool.
    pub compare_guidance: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub cross_entropy: Vec<CrossEntropyRecord>,
    /// `(instance, message)` for instances that could not be evaluated.
    pub failures: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub instances: usize,
    pub solved: usize,
    pub mean_obj: f64,
    pub mean_gap: f64,
    pub mean_time_s: f64,
}

fn objective_of(res: &SolveResult) -> f64 {
    if res.has_solution() {
        res.objective
    } else {
        f64::INFINITY
    }
}

fn label_ints(a: &Assignment, q: usize) -> Vec<usize> {
    a.values[..q].iter().map(|v| v.round().max(0.0) as usize).collect()
}

/// Independent reference solve: enumeration when it fits, else the
/// backend with four times the usual limit.
fn reference_solve(inst: &MilpInstance, backend: &dyn MilpBackend, time_limit_s: f64) -> SolveResult {
    let size = (inst.int_bound as f64 + 1.0).powi(inst.num_int as i32);
    if size <= BRUTE_FORCE_LIMIT as f64 {
        brute_force(inst)
    } else {
        backend.solve(inst, 4.0 * time_limit_s)
    }
}

struct Run {
    method: String,
    obj: f64,
    time: f64,
}

fn evaluate_instance(model: &Model, item: &EvalInstance, opts: &EvalOptions, backend: &dyn MilpBackend, report: &mut EvalReport) -> Result<()> {
    let inst = &item.instance;
    let sched = opts.sampling.schedule()?;
    let n = opts.sampling.candidates;
    let seed = opts.sampling.seed;
    let mut runs = Vec::new();
    let mut pools: Vec<(&str, GuidanceConfig, CandidatePool)> = Vec::new();
    let mut variants = vec![("guided", opts.sampling.guidance())];
    if opts.compare_guidance {
        variants.push((
            "unguided",
            GuidanceConfig {
                enabled: false,
                ..opts.sampling.guidance()
            },
        ));
    }
    for (variant, g) in variants {
        let started = Instant::now();
        let pool = sample_solutions(inst, model, &g, &sched, n, seed)?;
        let suffix = if variant == "guided" { "" } else { UNGUIDED_SUFFIX };
        let obj = pool.best().filter(|c| c.feasible).map_or(f64::INFINITY, |c| inst.objective(&c.values));
        runs.push(Run {
            method: format!("{SAMPLER}{suffix}"),
            obj,
            time: started.elapsed().as_secs_f64(),
        });
        pools.push((variant, g, pool));
    }

    let reference = reference_solve(inst, backend, opts.time_limit_s);
    runs.push(Run {
        method: REFERENCE.into(),
        obj: objective_of(&reference),
        time: reference.wall_time_s,
    });
    let direct = backend.solve(inst, opts.time_limit_s);
    runs.push(Run {
        method: BACKEND.into(),
        obj: objective_of(&direct),
        time: direct.wall_time_s,
    });

    for (variant, g, pool) in &pools {
        let suffix = if *variant == "guided" { "" } else { UNGUIDED_SUFFIX };
        for &strategy in &opts.strategies {
            let mut repredict = |sub: &MilpInstance| -> Result<Marginals> { Ok(sample_solutions(sub, model, g, &sched, n, seed)?.marginals) };
            let started = Instant::now();
            let res = run_strategy(
                strategy,
                &pool.marginals,
                Some(&mut repredict),
                inst,
                &opts.strategy_cfg,
                backend,
                opts.time_limit_s,
            )?;
            if let Some(a) = &res.assignment {
                if !inst.evaluate(a, FEAS_TOL)?.feasible {
                    return Err(FmipError::Contract(format!(
                        "{} returned an infeasible incumbent on {}",
                        strategy.name(),
                        inst.name
                    )));
                }
            }
            runs.push(Run {
                method: format!("{}{suffix}", strategy.name()),
                obj: objective_of(&res),
                time: started.elapsed().as_secs_f64(),
            });
        }
    }

    let bks = runs.iter().map(|r| r.obj).fold(f64::INFINITY, f64::min);
    for r in runs {
        report.records.push(EvalRecord {
            instance: inst.name.clone(),
            method: r.method,
            obj: r.obj,
            bks,
            gap: if r.obj == bks { 0.0 } else { gap(r.obj, bks) },
            wall_time_s: r.time,
        });
    }

    let label = item.label.clone().or(reference.assignment);
    if let (Some(label), true) = (label, inst.num_int > 0) {
        let ints = label_ints(&label, inst.num_int);
        for (variant, _, pool) in &pools {
            report.cross_entropy.push(CrossEntropyRecord {
                instance: inst.name.clone(),
                variant: variant.to_string(),
                cross_entropy: cross_entropy(&pool.marginals, &ints)?,
            });
        }
    }
    Ok(())
}

/// Samples pools, runs every strategy and scores all methods against the
/// best known solution. Per-instance errors are recorded and skipped.
pub fn evaluate(model: &Model, test_set: &[EvalInstance], opts: &EvalOptions, backend: &dyn MilpBackend) -> Result<EvalReport> {
    opts.sampling.validate()?;
    let mut report = EvalReport::default();
    for item in test_set {
        info!("evaluating {}", item.instance.name);
        let mut partial = EvalReport::default();
        match evaluate_instance(model, item, opts, backend, &mut partial) {
            Ok(()) => {
                report.records.extend(partial.records);
                report.cross_entropy.extend(partial.cross_entropy);
            }
            Err(e) => {
                warn!("evaluation of {} failed: {e}", item.instance.name);
                report.failures.push((item.instance.name.clone(), e.to_string()));
            }
        }
    }
    Ok(report)
}

impl EvalReport {
    /// Methods in first-seen order.
    pub fn methods(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        seen
    }

    pub fn summary(&self) -> Vec<MethodSummary> {
        self.methods()
            .into_iter()
            .map(|m| {
                let rows: Vec<&EvalRecord> = self.records.iter().filter(|r| r.method == m).collect();
                let mean = |f: &dyn Fn(&EvalRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64;
                MethodSummary {
                    instances: rows.len(),
                    solved: rows.iter().filter(|r| r.obj.is_finite()).count(),
                    mean_obj: mean(&|r| r.obj),
                    mean_gap: mean(&|r| r.gap),
                    mean_time_s: mean(&|r| r.wall_time_s),
                    method: m,
                }
            })
            .collect()
    }

    /// Mean cross-entropy per pool variant.
    pub fn mean_cross_entropy(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &self.cross_entropy {
            let e = acc.entry(r.variant.clone()).or_default();
            e.0 += r.cross_entropy;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// `(method, unguided mean GAP, guided mean GAP)` for every method run
    /// both ways.
    pub fn guidance_pairs(&self) -> Vec<(String, f64, f64)> {
        let summary = self.summary();
        summary
            .iter()
            .filter(|s| !s.method.ends_with(UNGUIDED_SUFFIX))
            .filter_map(|s| {
                let off = summary.iter().find(|o| o.method == format!("{}{UNGUIDED_SUFFIX}", s.method))?;
                Some((s.method.clone(), off.mean_gap, s.mean_gap))
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| FmipError::Config(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| FmipError::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn records_from_csv(text: &str) -> Result<Vec<EvalRecord>> {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<Vec<EvalRecord>, _>>()
            .map_err(|e| FmipError::Parse {
                field: "report csv".into(),
                msg: e.to_string(),
            })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let methods = self.methods();
        let mut instances: Vec<&str> = Vec::new();
        for r in &self.records {
            if !instances.contains(&r.instance.as_str()) {
                instances.push(&r.instance);
            }
        }
        let fmt = |v: f64| if v.is_finite() { format!("{v:.2}") } else { "-".into() };

        let _ = writeln!(out, "OBJ / GAP per instance");
        let _ = write!(out, "{:<28}{:>12}", "instance", "BKS");
        for m in &methods {
            let _ = write!(out, "{:>22}", m);
        }
        let _ = writeln!(out);
        for inst in &instances {
            let rows: Vec<&EvalRecord> = self.records.iter().filter(|r| r.instance == *inst).collect();
            let _ = write!(out, "{:<28}{:>12}", inst, fmt(rows[0].bks));
            for m in &methods {
                let cell = rows
                    .iter()
                    .find(|r| &r.method == m)
                    .map_or("".into(), |r| format!("{} / {}", fmt(r.obj), fmt(r.gap)));
                let _ = write!(out, "{cell:>22}");
            }
            let _ = writeln!(out);
        }

        let _ = writeln!(out, "\nMean over instances");
        let _ = writeln!(out, "{:<22}{:>8}{:>14}{:>12}{:>12}", "method", "solved", "OBJ", "GAP", "time_s");
        for s in self.summary() {
            let _ = writeln!(
                out,
                "{:<22}{:>8}{:>14}{:>12}{:>12.3}",
                s.method,
                format!("{}/{}", s.solved, s.instances),
                fmt(s.mean_obj),
                fmt(s.mean_gap),
                s.mean_time_s
            );
        }

        let ce = self.mean_cross_entropy();
        if !ce.is_empty() {
            let _ = writeln!(out, "\nMean cross-entropy of pool marginals");
            for (variant, v) in ce {
                let _ = writeln!(out, "{variant:<22}{v:>12.4}");
            }
        }

        let pairs = self.guidance_pairs();
        if !pairs.is_empty() {
            let _ = writeln!(out, "\nGuidance off vs on");
            let _ = writeln!(out, "{:<22}{:>12}{:>12}{:>10}", "method", "GAP off", "GAP on", "Imp");
            for (m, off, on) in pairs {
                let _ = writeln!(out, "{m:<22}{:>12}{:>12}{:>10}", fmt(off), fmt(on), imp(off, on).to_string());
            }
        }

        if !self.failures.is_empty() {
            let _ = writeln!(out, "\nFailures");
            for (inst, msg) in &self.failures {
                let _ = writeln!(out, "{inst}: {msg}");
            }
        }
        out
    }

    /// Writes `report.csv`, `cross_entropy.csv` and `report.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.to_csv()?)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.cross_entropy {
            w.serialize(r).map_err(|e| FmipError::Config(format!("csv: {e}")))?;
        }
        std::fs::write(
            dir.join("cross_entropy.csv"),
            w.into_inner().map_err(|e| FmipError::Config(format!("csv: {e}")))?,
        )?;
        std::fs::write(dir.join("report.txt"), self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BranchAndBound;
    use crate::gen::{generate, Family, GenSpec};
    use crate::model::ModelConfig;

    fn small_model() -> Model {
        Model::init(
            ModelConfig {
                layers: 1,
                hidden: 8,
                ..Default::default()
            },
            0,
        )
        .unwrap()
    }

    fn opts() -> EvalOptions {
        EvalOptions {
            strategies: Strategy::ALL.to_vec(),
            strategy_cfg: StrategyConfig::default(),
            sampling: SamplingConfig {
                steps: 4,
                candidates: 6,
                ..Default::default()
            },
            time_limit_s: 5.0,
            compare_guidance: true,
        }
    }

    #[test]
    fn report_invariants() {
        let set: Vec<EvalInstance> = (0..2)
            .map(|s| EvalInstance {
                instance: generate(&GenSpec {
                    family: Family::IndepSet { nodes: 8, edge_prob: 0.3 },
                    seed: s,
                })
                .unwrap(),
                label: None,
            })
            .collect();
        let report = evaluate(&small_model(), &set, &opts(), &BranchAndBound::default()).unwrap();
        assert!(report.failures.is_empty(), "{:?}", report.failures);
        assert_eq!(report.methods().len(), 2 + 2 + 2 * 4);
        for inst in &set {
            let rows: Vec<_> = report.records.iter().filter(|r| r.instance == inst.instance.name).collect();
            let min = rows.iter().map(|r| r.obj).fold(f64::INFINITY, f64::min);
            assert_eq!(min, rows[0].bks);
            for r in &rows {
                assert_eq!(r.gap, gap(r.obj, r.bks));
            }
        }
        assert_eq!(report.guidance_pairs().len(), 5);
        assert!(report.to_text().contains("Imp"));
        let parsed = EvalReport::records_from_csv(&report.to_csv().unwrap()).unwrap();
        let again = EvalReport {
            records: parsed,
            ..Default::default()
        };
        assert_eq!(again.summary(), report.summary());
    }

    #[test]
    fn failures_are_recorded() {
        let bad = EvalInstance {
            instance: crate::milp::toy_instance(),
            label: None,
        };
        let report = evaluate(&small_model(), &[bad], &opts(), &BranchAndBound::default()).unwrap();
        assert_eq!(report.failures.len(), 1);
        assert!(report.records.is_empty());
    }
}
