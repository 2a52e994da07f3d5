//! Desk-scale benchmark generators (set cover, independent set,
//! combinatorial auction) and dataset labeling.
//!
//! Maximization families are stored negated, so every instance minimizes.
//! All randomness comes from [`SplitMix64`] seeded by [`GenSpec::seed`].

use log::warn;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::backend::{MilpBackend, SolveStatus};
use crate::error::{FmipError, Result};
use crate::milp::{Assignment, Coef, MilpInstance, FEAS_TOL};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    SetCover { rows: usize, cols: usize, density: f64 },
    IndepSet { nodes: usize, edge_prob: f64 },
    CombAuction { items: usize, bids: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    #[serde(flatten)]
    pub family: Family,
    pub seed: u64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FmipError::Generation(m.to_string()));
        let unit = |p: f64| p > 0.0 && p < 1.0;
        match self.family {
            Family::SetCover { rows, cols, density } => {
                if rows == 0 || cols == 0 {
                    return bad("set_cover needs positive rows and cols");
                }
                if !unit(density) {
                    return bad("set_cover density must lie in (0, 1)");
                }
                if (cols as f64) * density < 1.0 {
                    return bad("set_cover column count too small for density (expected < 1 nonzero per row)");
                }
            }
            Family::IndepSet { nodes, edge_prob } => {
                if nodes == 0 {
                    return bad("indep_set needs positive nodes");
                }
                if !unit(edge_prob) {
                    return bad("indep_set edge_prob must lie in (0, 1)");
                }
            }
            Family::CombAuction { items, bids } => {
                if items == 0 || bids == 0 {
                    return bad("comb_auction needs positive items and bids");
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match self.family {
            Family::SetCover { rows, cols, density } => {
                format!("sc-{rows}x{cols}-d{density}-s{}", self.seed)
            }
            Family::IndepSet { nodes, edge_prob } => format!("mis-{nodes}-p{edge_prob}-s{}", self.seed),
            Family::CombAuction { items, bids } => format!("ca-{items}x{bids}-s{}", self.seed),
        }
    }
}

fn binary_instance(name: String, obj: Vec<f64>, rows: Vec<Vec<(usize, f64)>>, rhs: Vec<f64>) -> Result<MilpInstance> {
    let n = obj.len();
    let coefs = rows
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().map(move |&(col, val)| Coef { row: r, col, val }))
        .collect();
    MilpInstance::new(name, n, 1, obj, coefs, rhs, vec![0.0; n], vec![1.0; n])
}

/// Independent set on an explicit edge list: `min −Σx` s.t. `x_u + x_v ≤ 1`.
pub fn indep_set_from_edges(name: impl Into<String>, nodes: usize, edges: &[(usize, usize)]) -> Result<MilpInstance> {
    let rows = edges.iter().map(|&(u, v)| vec![(u, 1.0), (v, 1.0)]).collect();
    binary_instance(name.into(), vec![-1.0; nodes], rows, vec![1.0; edges.len()])
}

pub fn generate(spec: &GenSpec) -> Result<MilpInstance> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let name = spec.name();
    match spec.family {
        Family::SetCover { rows, cols, density } => {
            let cost: Vec<f64> = (0..cols).map(|_| (1 + rng.below(100)) as f64).collect();
            let mut a = Vec::with_capacity(rows);
            let mut rhs = Vec::with_capacity(rows);
            for _ in 0..rows {
                let mut row: Vec<(usize, f64)> = (0..cols).filter(|_| rng.bernoulli(density)).map(|c| (c, -1.0)).collect();
                if row.is_empty() {
                    row.push((rng.below(cols as u64) as usize, -1.0));
                }
                a.push(row);
                rhs.push(-1.0);
            }
            binary_instance(name, cost, a, rhs)
        }
        Family::IndepSet { nodes, edge_prob } => {
            let mut edges = Vec::new();
            for u in 0..nodes {
                for v in u + 1..nodes {
                    if rng.bernoulli(edge_prob) {
                        edges.push((u, v));
                    }
                }
            }
            let mut inst = indep_set_from_edges(name, nodes, &edges)?;
            inst.name = spec.name();
            Ok(inst)
        }
        Family::CombAuction { items, bids } => {
            let values: Vec<f64> = (0..items).map(|_| (1 + rng.below(20)) as f64).collect();
            let mut bundles: Vec<Vec<usize>> = Vec::with_capacity(bids);
            let mut prices = Vec::with_capacity(bids);
            for _ in 0..bids {
                let size = 1 + rng.below(3.min(items as u64)) as usize;
                let mut pool: Vec<usize> = (0..items).collect();
                rng.shuffle(&mut pool);
                let mut bundle = pool[..size].to_vec();
                bundle.sort_unstable();
                let base: f64 = bundle.iter().map(|&i| values[i]).sum();
                prices.push((base * rng.uniform(1.0, 1.5)).round());
                bundles.push(bundle);
            }
            let mut rows = Vec::new();
            for item in 0..items {
                let row: Vec<(usize, f64)> = bundles.iter().enumerate().filter(|(_, b)| b.contains(&item)).map(|(j, _)| (j, 1.0)).collect();
                if !row.is_empty() {
                    rows.push(row);
                }
            }
            let m = rows.len();
            binary_instance(name, prices.iter().map(|p| -p).collect(), rows, vec![1.0; m])
        }
    }
}

/// Turns `count` seeded-random variables into continuous `[0, 1]`
/// variables and moves the remaining integer block first.
pub fn relax_fraction(inst: &MilpInstance, count: usize, seed: u64) -> MilpInstance {
    let n = inst.num_vars;
    let count = count.min(inst.num_int);
    if count == 0 {
        return inst.clone();
    }
    let mut ints: Vec<usize> = (0..inst.num_int).collect();
    SplitMix64::stream(seed, 0x6d69_7865).shuffle(&mut ints);
    let mut relaxed: Vec<usize> = ints[..count].to_vec();
    relaxed.sort_unstable();
    let is_relaxed = |i: usize| relaxed.binary_search(&i).is_ok();
    let mut perm: Vec<usize> = (0..inst.num_int).filter(|&i| !is_relaxed(i)).collect();
    let num_int = perm.len();
    perm.extend(relaxed.iter().copied());
    perm.extend(inst.num_int..n);
    let mut new_index = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        new_index[old] = new;
    }
    let mut coefs: Vec<Coef> = inst.coefs.iter().map(|c| Coef { col: new_index[c.col], ..*c }).collect();
    coefs.sort_by_key(|c| (c.row, c.col));
    let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let mut lower = pick(&inst.lower);
    let mut upper = pick(&inst.upper);
    for i in num_int..num_int + count {
        lower[i] = lower[i].max(0.0);
        upper[i] = upper[i].min(1.0).max(lower[i]);
    }
    MilpInstance {
        name: format!("{}-mixed{count}", inst.name),
        num_vars: n,
        num_cons: inst.num_cons,
        num_int,
        int_bound: inst.int_bound,
        obj: pick(&inst.obj),
        rhs: inst.rhs.clone(),
        lower,
        upper,
        coefs,
    }
}

/// Generates the instance for `spec` and relaxes `⌈frac·n⌉` variables.
pub fn make_mixed(spec: &GenSpec, frac_continuous: f64) -> Result<MilpInstance> {
    Ok(make_mixed_with_perm(spec, frac_continuous)?.0)
}

/// Like [`make_mixed`], also returning `perm[new] = old` column indices.
pub fn make_mixed_with_perm(spec: &GenSpec, frac_continuous: f64) -> Result<(MilpInstance, Vec<usize>)> {
    if !(frac_continuous > 0.0 && frac_continuous < 1.0) {
        return Err(FmipError::Generation(format!("frac_continuous {frac_continuous} outside (0, 1)")));
    }
    let inst = generate(spec)?;
    let count = (frac_continuous * inst.num_vars as f64).ceil() as usize;
    let mut tagged = inst.clone();
    tagged.obj = (0..inst.num_vars).map(|i| i as f64).collect();
    let perm: Vec<usize> = relax_fraction(&tagged, count, spec.seed).obj.iter().map(|&v| v as usize).collect();
    Ok((relax_fraction(&inst, count, spec.seed), perm))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub instance: MilpInstance,
    pub label: Assignment,
    pub label_objective: f64,
    pub solve_status: SolveStatus,
}

#[derive(Debug, Clone, Default)]
pub struct LabelReport {
    pub labeled: Vec<LabeledInstance>,
    /// `(instance name, reason)` for every dropped instance.
    pub dropped: Vec<(String, String)>,
}

/// Solves each instance and keeps the best incumbent as its label.
pub fn label_dataset(instances: &[MilpInstance], backend: &dyn MilpBackend, time_limit_s: f64) -> LabelReport {
    let mut report = LabelReport::default();
    for inst in instances {
        let res = backend.solve(inst, time_limit_s);
        let reason = match (&res.assignment, res.status) {
            (_, SolveStatus::Error) => Some(format!("backend error: {}", res.message.clone().unwrap_or_default())),
            (None, status) => Some(format!("no incumbent (status {status:?})")),
            (Some(a), _) => match inst.evaluate(a, FEAS_TOL) {
                Ok(r) if r.feasible => {
                    report.labeled.push(LabeledInstance {
                        instance: inst.clone(),
                        label: Assignment {
                            values: a.values.clone(),
                            objective: Some(r.objective),
                        },
                        label_objective: r.objective,
                        solve_status: res.status,
                    });
                    None
                }
                _ => Some("backend returned an infeasible incumbent".into()),
            },
        };
        if let Some(reason) = reason {
            warn!("dropping {}: {reason}", inst.name);
            report.dropped.push((inst.name.clone(), reason));
        }
    }
    report
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub instance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<SolveStatus>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub specs: Vec<GenSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frac_continuous: Option<f64>,
    pub pairs: Vec<ManifestEntry>,
}

/// On-disk dataset: `instances/*.json`, `labels/*.json`, `manifest.json`.
pub struct Dataset;

impl Dataset {
    pub fn write_instances(dir: &Path, specs: &[GenSpec], frac_continuous: Option<f64>, instances: &[MilpInstance]) -> Result<()> {
        std::fs::create_dir_all(dir.join("instances"))?;
        let mut manifest = Manifest {
            specs: specs.to_vec(),
            frac_continuous,
            pairs: vec![],
        };
        for inst in instances {
            let rel = format!("instances/{}.json", inst.name);
            std::fs::write(dir.join(&rel), inst.to_json())?;
            manifest.pairs.push(ManifestEntry {
                name: inst.name.clone(),
                instance: rel,
                label: None,
                label_objective: None,
                status: None,
            });
        }
        Self::write_manifest(dir, &manifest)
    }

    pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest)?)?;
        Ok(())
    }

    pub fn read_manifest(dir: &Path) -> Result<Manifest> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?)
    }

    pub fn read_instances(dir: &Path) -> Result<Vec<MilpInstance>> {
        Self::read_manifest(dir)?
            .pairs
            .iter()
            .map(|p| MilpInstance::from_json(&std::fs::read_to_string(dir.join(&p.instance))?))
            .collect()
    }

    /// Writes labels and marks the manifest; dropped instances stay unlabeled.
    pub fn write_labels(dir: &Path, report: &LabelReport) -> Result<()> {
        std::fs::create_dir_all(dir.join("labels"))?;
        let mut manifest = Self::read_manifest(dir)?;
        for li in &report.labeled {
            let rel = format!("labels/{}.json", li.instance.name);
            std::fs::write(dir.join(&rel), serde_json::to_string_pretty(&li.label)?)?;
            if let Some(p) = manifest.pairs.iter_mut().find(|p| p.name == li.instance.name) {
                p.label = Some(rel);
                p.label_objective = Some(li.label_objective);
                p.status = Some(li.solve_status);
            }
        }
        Self::write_manifest(dir, &manifest)
    }

    /// Loads every labeled pair.
    pub fn read_labeled(dir: &Path) -> Result<Vec<LabeledInstance>> {
        let manifest = Self::read_manifest(dir)?;
        let mut out = Vec::new();
        for p in &manifest.pairs {
            let Some(label_path) = &p.label else { continue };
            let instance = MilpInstance::from_json(&std::fs::read_to_string(dir.join(&p.instance))?)?;
            let label: Assignment = serde_json::from_str(&std::fs::read_to_string(dir.join(label_path))?)?;
            let label_objective = instance.objective(&label.values);
            out.push(LabeledInstance {
                instance,
                label,
                label_objective,
                solve_status: p.status.unwrap_or(SolveStatus::Feasible),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{brute_force, BranchAndBound, BruteForce};

    fn sc(seed: u64) -> GenSpec {
        GenSpec {
            family: Family::SetCover {
                rows: 20,
                cols: 40,
                density: 0.2,
            },
            seed,
        }
    }

    #[test]
    fn two_node_indep_set() {
        let inst = indep_set_from_edges("mis2", 2, &[(0, 1)]).unwrap();
        assert_eq!(inst.num_cons, 1);
        assert_eq!(inst.obj, vec![-1.0, -1.0]);
        assert_eq!(inst.coefs.len(), 2);
        assert_eq!(inst.rhs, vec![1.0]);
    }

    #[test]
    fn deterministic_in_seed() {
        for spec in [
            sc(7),
            GenSpec {
                family: Family::IndepSet { nodes: 15, edge_prob: 0.3 },
                seed: 3,
            },
            GenSpec {
                family: Family::CombAuction { items: 10, bids: 20 },
                seed: 9,
            },
        ] {
            assert_eq!(generate(&spec).unwrap().to_json(), generate(&spec).unwrap().to_json());
        }
        assert_ne!(generate(&sc(7)).unwrap(), generate(&sc(8)).unwrap());
    }

    #[test]
    fn set_cover_rows_covered() {
        let inst = generate(&sc(7)).unwrap();
        assert_eq!((inst.num_cons, inst.num_vars), (20, 40));
        let mut per_row = [0; 20];
        for c in &inst.coefs {
            per_row[c.row] += 1;
        }
        assert!(per_row.iter().all(|&k| k >= 1));
        // All ones covers every row.
        let r = inst.evaluate(&Assignment::new(vec![1.0; 40]), FEAS_TOL).unwrap();
        assert!(r.feasible);
    }

    #[test]
    fn zero_is_feasible_for_packing_families() {
        for spec in [
            GenSpec {
                family: Family::IndepSet { nodes: 12, edge_prob: 0.4 },
                seed: 1,
            },
            GenSpec {
                family: Family::CombAuction { items: 8, bids: 12 },
                seed: 1,
            },
        ] {
            let inst = generate(&spec).unwrap();
            let zero = Assignment::new(vec![0.0; inst.num_vars]);
            assert!(inst.evaluate(&zero, FEAS_TOL).unwrap().feasible);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let s = GenSpec {
            family: Family::SetCover {
                rows: 5,
                cols: 3,
                density: 0.2,
            },
            seed: 0,
        };
        assert!(matches!(generate(&s), Err(FmipError::Generation(_))));
        let s = GenSpec {
            family: Family::IndepSet { nodes: 5, edge_prob: 1.0 },
            seed: 0,
        };
        assert!(generate(&s).is_err());
    }

    #[test]
    fn mixed_counts_and_feasibility() {
        let spec = GenSpec {
            family: Family::IndepSet { nodes: 10, edge_prob: 0.3 },
            seed: 5,
        };
        let base = generate(&spec).unwrap();
        let (mixed, perm) = make_mixed_with_perm(&spec, 0.25).unwrap();
        assert_eq!(mixed.num_int, 10 - 3);
        assert_eq!(relax_fraction(&base, 0, 1), base);
        let label = brute_force(&base).assignment.unwrap();
        let permuted: Vec<f64> = perm.iter().map(|&old| label.values[old]).collect();
        assert!(mixed.evaluate(&Assignment::new(permuted), FEAS_TOL).unwrap().feasible);
        assert!(make_mixed(&spec, 0.0).is_err());
    }

    #[test]
    fn labels_two_node_toy_and_drops_infeasible() {
        let toy = indep_set_from_edges("mis2", 2, &[(0, 1)]).unwrap();
        let infeasible = MilpInstance::new(
            "bad",
            1,
            1,
            vec![1.0],
            vec![Coef { row: 0, col: 0, val: -1.0 }],
            vec![-2.0],
            vec![0.0],
            vec![1.0],
        )
        .unwrap();
        let report = label_dataset(&[toy, infeasible], &BruteForce, 10.0);
        assert_eq!(report.labeled.len(), 1);
        assert_eq!(report.labeled[0].label_objective, -1.0);
        let v = &report.labeled[0].label.values;
        assert!(v == &vec![1.0, 0.0] || v == &vec![0.0, 1.0]);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].0, "bad");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let specs = vec![
            GenSpec {
                family: Family::IndepSet { nodes: 8, edge_prob: 0.3 },
                seed: 1,
            },
            GenSpec {
                family: Family::CombAuction { items: 5, bids: 8 },
                seed: 2,
            },
        ];
        let insts: Vec<_> = specs.iter().map(|s| generate(s).unwrap()).collect();
        Dataset::write_instances(dir.path(), &specs, None, &insts).unwrap();
        assert_eq!(Dataset::read_instances(dir.path()).unwrap(), insts);
        let report = label_dataset(&insts, &BranchAndBound::default(), 10.0);
        Dataset::write_labels(dir.path(), &report).unwrap();
        let labeled = Dataset::read_labeled(dir.path()).unwrap();
        assert_eq!(labeled.len(), 2);
        for li in &labeled {
            assert!(li.instance.evaluate(&li.label, FEAS_TOL).unwrap().feasible);
        }
    }
}
