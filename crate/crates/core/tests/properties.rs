use fmip_core::backend::{brute_force, BranchAndBound, MilpBackend, SolveStatus};
use fmip_core::downstream::{ps_trust_region, Marginals, PsConfig};
use fmip_core::graph::{attach_state, encode, SolutionState};
use fmip_core::guidance::boltzmann_weights;
use fmip_core::lpfile::{read_lp, write_lp};
use fmip_core::milp::{Coef, MilpInstance};
use fmip_core::model::{Model, ModelConfig};
use fmip_core::selfcheck::random_instance;
use proptest::prelude::*;

/// Reorders the integer block by `perm[new] = old` and reverses the rows.
fn permute(inst: &MilpInstance, perm: &[usize]) -> MilpInstance {
    let q = inst.num_int;
    let mut inv: Vec<usize> = (0..inst.num_vars).collect();
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    let pick = |v: &[f64]| (0..inst.num_vars).map(|j| if j < q { v[perm[j]] } else { v[j] }).collect::<Vec<_>>();
    let m = inst.num_cons;
    let coefs = inst
        .coefs
        .iter()
        .map(|c| Coef {
            row: m - 1 - c.row,
            col: inv[c.col],
            val: c.val,
        })
        .collect();
    let rhs = inst.rhs.iter().rev().copied().collect();
    MilpInstance::new("perm", q, inst.int_bound, pick(&inst.obj), coefs, rhs, pick(&inst.lower), pick(&inst.upper)).unwrap()
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = fmip_core::rng::SplitMix64::new(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.below(i as u64 + 1) as usize);
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bnb_matches_enumeration(q in 1usize..10, p in 0usize..3, seed in 0u64..10_000) {
        let inst = random_instance(q, p, seed);
        let a = BranchAndBound::default().solve(&inst, 30.0);
        let b = brute_force(&inst);
        prop_assert_eq!(a.status == SolveStatus::Infeasible, b.status == SolveStatus::Infeasible);
        if b.status == SolveStatus::Optimal {
            prop_assert!((a.objective - b.objective).abs() <= 1e-6, "{} vs {}", a.objective, b.objective);
            let x = a.assignment.unwrap();
            prop_assert!(inst.evaluate(&x, 1e-6).unwrap().feasible);
        }
    }

    #[test]
    fn lp_text_preserves_the_problem(q in 1usize..8, p in 0usize..3, seed in 0u64..10_000) {
        let inst = random_instance(q, p, seed);
        let back = read_lp(&write_lp(&inst)).unwrap();
        prop_assert_eq!((back.num_vars, back.num_int, back.num_cons), (inst.num_vars, inst.num_int, inst.num_cons));
        let x: Vec<f64> = (0..inst.num_vars).map(|j| (j as f64 * 0.37 + seed as f64 * 0.01).fract() * inst.upper[j]).collect();
        prop_assert!((back.objective(&x) - inst.objective(&x)).abs() < 1e-9);
        for (a, b) in back.activities(&x).iter().zip(inst.activities(&x)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert_eq!(&back.rhs, &inst.rhs);
    }

    #[test]
    fn boltzmann_weights_are_a_decreasing_distribution(f in proptest::collection::vec(-1e3f64..1e3, 1..20), tau in 0.01f64..100.0) {
        let w = boltzmann_weights(&f, tau);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..f.len() {
            prop_assert!(w[i] >= 0.0);
            for j in 0..f.len() {
                if f[i] < f[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn trust_region_is_disjoint_and_admits_the_rounded_point(
        p1 in proptest::collection::vec(0.0f64..=1.0, 1..30),
        k0 in 0.0f64..0.5, k1 in 0.0f64..0.5, delta in 0.0f64..1.0,
    ) {
        let marg = Marginals::new(p1.iter().map(|&v| vec![1.0 - v, v]).collect()).unwrap();
        let cfg = PsConfig { k0, k1, delta };
        if let Some(tr) = ps_trust_region(&marg, &cfg, None) {
            prop_assert!(tr.t0.iter().all(|i| !tr.t1.contains(i)));
            prop_assert!(tr.rhs <= delta * (tr.t0.len() + tr.t1.len()) as f64 + 1e-9);
            let (row, rhs) = tr.row();
            let mut x = vec![0.0; p1.len()];
            for &i in &tr.t1 {
                x[i] = 1.0;
            }
            let act: f64 = row.iter().map(|&(j, a)| a * x[j]).sum();
            prop_assert!(act <= rhs + 1e-9);
        }
    }

    #[test]
    fn model_is_equivariant_to_variable_and_row_order(q in 2usize..7, p in 0usize..3, seed in 0u64..1000, t in 0.0f64..0.99) {
        let inst = random_instance(q, p, seed);
        let perm = shuffled(q, seed);
        let moved = permute(&inst, &perm);
        let model = Model::init(ModelConfig { layers: 2, hidden: 8, ..Default::default() }, seed).unwrap();
        let d: Vec<usize> = (0..q).map(|i| (i + seed as usize) % 2).collect();
        let c: Vec<f64> = (0..p).map(|j| j as f64 * 0.5).collect();
        let (g, gm) = (encode(&inst, true), encode(&moved, true));
        let state = SolutionState { d: d.clone(), c: c.clone(), t };
        let moved_state = SolutionState { d: perm.iter().map(|&o| d[o]).collect(), c, t };
        let a = model.predict(&[attach_state(&g, &state).unwrap()]).remove(0);
        let b = model.predict(&[attach_state(&gm, &moved_state).unwrap()]).remove(0);
        let (pa, pb) = (a.int_probs(), b.int_probs());
        for (new, &old) in perm.iter().enumerate() {
            for k in 0..pa.ncols() {
                prop_assert!((pa[[old, k]] - pb[[new, k]]).abs() < 1e-9);
            }
        }
        for (x, y) in a.cont_values.iter().zip(&b.cont_values) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
