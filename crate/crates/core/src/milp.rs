//! MILP data model: `min wᵀx  s.t.  A x ≤ b,  lb ≤ x ≤ ub`, with the first
//! `num_int` variables integer-valued in `{0, …, K}`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::HashSet;

use crate::error::{check_len, parse_err, FmipError, Result};

/// Default absolute feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-6;

/// One nonzero of the constraint matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coef {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    pub name: String,
    pub num_vars: usize,
    pub num_cons: usize,
    pub num_int: usize,
    pub int_bound: u32,
    pub obj: Vec<f64>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub coefs: Vec<Coef>,
}

/// A full assignment `x = (d, c)`; the first `num_int` entries form the
/// integer block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

impl Assignment {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, objective: None }
    }

    pub fn int_block(&self, q: usize) -> &[f64] {
        &self.values[..q]
    }

    pub fn cont_block(&self, q: usize) -> &[f64] {
        &self.values[q..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub objective: f64,
    pub violations: Vec<f64>,
    pub max_violation: f64,
    pub feasible: bool,
}

impl MilpInstance {
    /// Builds an instance and checks every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        num_int: usize,
        int_bound: u32,
        obj: Vec<f64>,
        coefs: Vec<Coef>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let inst = Self {
            name: name.into(),
            num_vars: obj.len(),
            num_cons: rhs.len(),
            num_int,
            int_bound,
            obj,
            rhs,
            lower,
            upper,
            coefs,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        let m = self.num_cons;
        let bad = |field: &str, msg: String| Err(parse_err(field, msg));
        if self.obj.len() != n {
            return bad("obj", format!("length {} != num_vars {n}", self.obj.len()));
        }
        if self.rhs.len() != m {
            return bad("rhs", format!("length {} != num_cons {m}", self.rhs.len()));
        }
        if self.lower.len() != n {
            return bad("lower", format!("length {} != num_vars {n}", self.lower.len()));
        }
        if self.upper.len() != n {
            return bad("upper", format!("length {} != num_vars {n}", self.upper.len()));
        }
        if self.num_int > n {
            return bad("num_int", format!("{} exceeds num_vars {n}", self.num_int));
        }
        if self.int_bound < 1 {
            return bad("int_bound", "must be >= 1".into());
        }
        if self.obj.iter().chain(&self.rhs).any(|v| !v.is_finite()) {
            return bad("obj/rhs", "non-finite entry".into());
        }
        let mut seen = HashSet::with_capacity(self.coefs.len());
        for (k, c) in self.coefs.iter().enumerate() {
            if c.row >= m || c.col >= n {
                return bad("A", format!("entry {k} ({}, {}) out of range", c.row, c.col));
            }
            if !c.val.is_finite() {
                return bad("A", format!("entry {k} is not finite"));
            }
            if !seen.insert((c.row, c.col)) {
                return bad("A", format!("duplicate coordinate ({}, {})", c.row, c.col));
            }
        }
        for i in 0..n {
            let (lb, ub) = (self.lower[i], self.upper[i]);
            if lb.is_nan() || ub.is_nan() || lb == f64::INFINITY || ub == f64::NEG_INFINITY {
                return bad("lower/upper", format!("variable {i} has invalid bound"));
            }
            if lb > ub {
                return bad("lower", format!("variable {i}: lb {lb} > ub {ub}"));
            }
            if i < self.num_int {
                let k = self.int_bound as f64;
                if !lb.is_finite() || !ub.is_finite() || lb < 0.0 || ub > k {
                    return bad("lower/upper", format!("integer variable {i} bounds [{lb}, {ub}] outside [0, {k}]"));
                }
            }
        }
        Ok(())
    }

    pub fn num_cont(&self) -> usize {
        self.num_vars - self.num_int
    }

    pub fn is_binary(&self) -> bool {
        self.int_bound == 1
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_cons];
        for c in &self.coefs {
            act[c.row] += c.val * x[c.col];
        }
        act
    }

    /// Positive parts `(A x − b)_+` per row.
    pub fn violations(&self, x: &[f64]) -> Vec<f64> {
        self.activities(x).iter().zip(&self.rhs).map(|(a, b)| (a - b).max(0.0)).collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.obj.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn evaluate(&self, x: &Assignment, tol: f64) -> Result<EvalReport> {
        check_len("assignment", self.num_vars, x.values.len())?;
        let v = &x.values;
        let objective = self.objective(v);
        let violations = self.violations(v);
        let max_violation = violations.iter().cloned().fold(0.0, f64::max);
        let bounds_ok = (0..self.num_vars).all(|i| v[i] >= self.lower[i] - tol && v[i] <= self.upper[i] + tol);
        let integral = v[..self.num_int].iter().all(|d| (d - d.round()).abs() <= tol);
        let feasible = max_violation <= tol && bounds_ok && integral && v.iter().all(|x| x.is_finite());
        Ok(EvalReport {
            objective,
            violations,
            max_violation,
            feasible,
        })
    }

    /// Guidance target `wᵀx + γ Σ_j (A_j x − b_j)_+²`.
    pub fn target_f(&self, x: &[f64], gamma: f64) -> Result<f64> {
        check_len("assignment", self.num_vars, x.len())?;
        if gamma < 0.0 {
            return Err(FmipError::Domain(format!("gamma {gamma} < 0")));
        }
        let penalty: f64 = self.violations(x).iter().map(|v| v * v).sum();
        Ok(self.objective(x) + gamma * penalty)
    }

    /// Exact gradient of [`Self::target_f`] with respect to the continuous
    /// block: `w_C + 2γ Σ_j (A_j x − b_j)_+ A_{j,C}`.
    pub fn target_grad_continuous(&self, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
        check_len("assignment", self.num_vars, x.len())?;
        if gamma < 0.0 {
            return Err(FmipError::Domain(format!("gamma {gamma} < 0")));
        }
        let q = self.num_int;
        let viol = self.violations(x);
        let mut grad = self.obj[q..].to_vec();
        for c in &self.coefs {
            if c.col >= q && viol[c.row] > 0.0 {
                grad[c.col - q] += 2.0 * gamma * viol[c.row] * c.val;
            }
        }
        Ok(grad)
    }

    /// Clamp into `[lb, ub]`; integer entries are first rounded (ties to even)
    /// when `round_integers` is set.
    pub fn project_bounds(&self, x: &Assignment, round_integers: bool) -> Assignment {
        let mut values = x.values.clone();
        self.project_in_place(&mut values, round_integers);
        Assignment::new(values)
    }

    pub fn project_in_place(&self, values: &mut [f64], round_integers: bool) {
        for (i, v) in values.iter_mut().enumerate() {
            if round_integers && i < self.num_int {
                *v = v.round_ties_even();
            }
            // Infinite bounds clamp to themselves, i.e. not at all.
            *v = v.max(self.lower[i]).min(self.upper[i]);
        }
    }

    /// Copy with `lb = ub = value` for each `(index, value)`.
    pub fn with_fixed(&self, fixes: &[(usize, f64)]) -> MilpInstance {
        let mut out = self.clone();
        for &(i, v) in fixes {
            out.lower[i] = v;
            out.upper[i] = v;
        }
        out
    }

    /// Copy with one extra row `Σ coef·x ≤ rhs`.
    pub fn with_row(&self, row: &[(usize, f64)], rhs: f64) -> MilpInstance {
        let mut out = self.clone();
        let r = out.num_cons;
        out.coefs.extend(row.iter().map(|&(col, val)| Coef { row: r, col, val }));
        out.rhs.push(rhs);
        out.num_cons += 1;
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceDoc::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| parse_err("document", e.to_string()))?;
        doc.into_instance()
    }
}

/// A bound that may be infinite; JSON uses the strings `"inf"`/`"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bound(f64);

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bound(v)),
            Raw::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(Bound(f64::INFINITY)),
                "-inf" => Ok(Bound(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("bad bound literal {other:?}"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    name: String,
    num_vars: usize,
    num_cons: usize,
    num_int: usize,
    int_bound: u32,
    obj: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<Bound>,
    upper: Vec<Bound>,
    #[serde(rename = "A")]
    a: Vec<(usize, usize, f64)>,
}

impl From<&MilpInstance> for InstanceDoc {
    fn from(inst: &MilpInstance) -> Self {
        Self {
            name: inst.name.clone(),
            num_vars: inst.num_vars,
            num_cons: inst.num_cons,
            num_int: inst.num_int,
            int_bound: inst.int_bound,
            obj: inst.obj.clone(),
            rhs: inst.rhs.clone(),
            lower: inst.lower.iter().map(|&v| Bound(v)).collect(),
            upper: inst.upper.iter().map(|&v| Bound(v)).collect(),
            a: inst.coefs.iter().map(|c| (c.row, c.col, c.val)).collect(),
        }
    }
}

impl InstanceDoc {
    fn into_instance(self) -> Result<MilpInstance> {
        let inst = MilpInstance {
            name: self.name,
            num_vars: self.num_vars,
            num_cons: self.num_cons,
            num_int: self.num_int,
            int_bound: self.int_bound,
            obj: self.obj,
            rhs: self.rhs,
            lower: self.lower.into_iter().map(|b| b.0).collect(),
            upper: self.upper.into_iter().map(|b| b.0).collect(),
            coefs: self.a.into_iter().map(|(row, col, val)| Coef { row, col, val }).collect(),
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// The two-variable example used throughout the tests:
/// `min 4x1 + x2` s.t. `3x1 + x2 ≤ 1`, `x1 + x2 ≤ 2`, `x1 ∈ {0..5}`, `0 ≤ x2 ≤ 3`.
/// The lower bound of `x1` is taken as 0.
pub fn toy_instance() -> MilpInstance {
    MilpInstance::new(
        "toy",
        1,
        5,
        vec![4.0, 1.0],
        vec![
            Coef { row: 0, col: 0, val: 3.0 },
            Coef { row: 0, col: 1, val: 1.0 },
            Coef { row: 1, col: 0, val: 1.0 },
            Coef { row: 1, col: 1, val: 1.0 },
        ],
        vec![1.0, 2.0],
        vec![0.0, 0.0],
        vec![5.0, 3.0],
    )
    .expect("toy instance is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(v: &[f64]) -> Assignment {
        Assignment::new(v.to_vec())
    }

    #[test]
    fn evaluate_toy() {
        let inst = toy_instance();
        let r = inst.evaluate(&x(&[0.0, 1.0]), FEAS_TOL).unwrap();
        assert_eq!(r.objective, 1.0);
        assert_eq!(r.violations, vec![0.0, 0.0]);
        assert!(r.feasible);

        let r = inst.evaluate(&x(&[1.0, 1.0]), FEAS_TOL).unwrap();
        assert_eq!(r.objective, 5.0);
        assert_eq!(r.violations, vec![3.0, 0.0]);
        assert!(!r.feasible);

        let r = inst.evaluate(&x(&[0.0, 0.0]), FEAS_TOL).unwrap();
        assert_eq!(r.objective, 0.0);
        assert!(r.violations.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn evaluate_rejects_length() {
        let inst = toy_instance();
        assert!(matches!(inst.evaluate(&x(&[0.0]), FEAS_TOL), Err(FmipError::Dimension { .. })));
    }

    #[test]
    fn fractional_integer_is_infeasible() {
        let inst = toy_instance();
        assert!(!inst.evaluate(&x(&[0.2, 0.0]), FEAS_TOL).unwrap().feasible);
    }

    #[test]
    fn target_values() {
        let inst = toy_instance();
        assert_eq!(inst.target_f(&[0.0, 1.0], 1.0).unwrap(), 1.0);
        assert_eq!(inst.target_f(&[1.0, 1.0], 1.0).unwrap(), 14.0);
        assert_eq!(inst.target_f(&[1.0, 1.0], 0.0).unwrap(), 5.0);
        assert!(inst.target_f(&[1.0, 1.0], -1.0).is_err());
    }

    #[test]
    fn grad_interior_is_objective() {
        let inst = toy_instance();
        let g = inst.target_grad_continuous(&[0.0, 0.5], 7.0).unwrap();
        assert_eq!(g, vec![1.0]);
    }

    #[test]
    fn grad_single_violated_row() {
        // min 2c s.t. 3c <= 1, c = 1 => v = 2, grad = 2 + 2*gamma*2*3
        let inst = MilpInstance::new(
            "one",
            0,
            1,
            vec![2.0],
            vec![Coef { row: 0, col: 0, val: 3.0 }],
            vec![1.0],
            vec![f64::NEG_INFINITY],
            vec![f64::INFINITY],
        )
        .unwrap();
        let g = inst.target_grad_continuous(&[1.0], 0.5).unwrap();
        assert_eq!(g, vec![2.0 + 2.0 * 0.5 * 2.0 * 3.0]);
    }

    #[test]
    fn project_examples() {
        let inst = MilpInstance::new("p", 1, 5, vec![0.0, 0.0], vec![], vec![], vec![0.0, 0.0], vec![5.0, f64::INFINITY]).unwrap();
        assert_eq!(inst.project_bounds(&x(&[7.3, -2.1]), true).values, vec![5.0, 0.0]);
        assert_eq!(inst.project_bounds(&x(&[2.5, 1e9]), true).values, vec![2.0, 1e9]);
        assert_eq!(inst.project_bounds(&x(&[3.0, 4.0]), false).values, vec![3.0, 4.0]);
    }

    #[test]
    fn json_round_trip_toy_and_empty() {
        let inst = toy_instance();
        assert_eq!(MilpInstance::from_json(&inst.to_json()).unwrap(), inst);

        let empty = MilpInstance::new("empty", 0, 1, vec![1.0], vec![], vec![], vec![f64::NEG_INFINITY], vec![f64::INFINITY]).unwrap();
        let text = empty.to_json();
        assert!(text.contains("\"-inf\"") && text.contains("\"inf\""));
        assert_eq!(MilpInstance::from_json(&text).unwrap(), empty);
    }

    #[test]
    fn parse_rejects_bad_documents() {
        let mut doc: serde_json::Value = serde_json::from_str(&toy_instance().to_json()).unwrap();
        doc["lower"][1] = serde_json::json!(4.0);
        let err = MilpInstance::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("lower"), "{err}");

        let mut doc: serde_json::Value = serde_json::from_str(&toy_instance().to_json()).unwrap();
        doc["A"][1] = serde_json::json!([0, 0, 2.0]);
        let err = MilpInstance::from_json(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        assert!(MilpInstance::from_json("{\"name\": 3}").is_err());
    }

    fn arb_instance() -> impl Strategy<Value = MilpInstance> {
        (1usize..5, 0usize..4, 0usize..3).prop_flat_map(|(n, m, q)| {
            let q = q.min(n);
            (
                proptest::collection::vec(-5.0f64..5.0, n),
                proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, n), m),
                proptest::collection::vec(-2.0f64..6.0, m),
                proptest::collection::vec(-1e3f64..1e3, n),
            )
                .prop_map(move |(obj, rows, rhs, bnd)| {
                    let mut coefs = vec![];
                    for (r, row) in rows.iter().enumerate() {
                        for (c, &v) in row.iter().enumerate() {
                            if v.abs() > 0.5 {
                                coefs.push(Coef { row: r, col: c, val: v });
                            }
                        }
                    }
                    let lower = (0..n)
                        .map(|i| {
                            if i < q {
                                0.0
                            } else if bnd[i] < 0.0 {
                                f64::NEG_INFINITY
                            } else {
                                -bnd[i]
                            }
                        })
                        .collect();
                    let upper = (0..n)
                        .map(|i| {
                            if i < q {
                                3.0
                            } else if bnd[i] > 500.0 {
                                f64::INFINITY
                            } else {
                                bnd[i].abs()
                            }
                        })
                        .collect();
                    MilpInstance::new("rand", q, 3, obj, coefs, rhs, lower, upper).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn json_round_trip(inst in arb_instance()) {
            prop_assert_eq!(MilpInstance::from_json(&inst.to_json()).unwrap(), inst);
        }

        #[test]
        fn projection_idempotent(inst in arb_instance(), seed in 0u64..1000) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let v: Vec<f64> = (0..inst.num_vars).map(|_| rng.uniform(-2e3, 2e3)).collect();
            let once = inst.project_bounds(&Assignment::new(v), true);
            let twice = inst.project_bounds(&once, true);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn target_monotone_in_gamma(inst in arb_instance(), seed in 0u64..1000) {
            let mut rng = crate::rng::SplitMix64::new(seed);
            let v: Vec<f64> = (0..inst.num_vars).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let obj = inst.objective(&v);
            prop_assert_eq!(inst.target_f(&v, 0.0).unwrap(), obj);
            let f1 = inst.target_f(&v, 1.0).unwrap();
            let f2 = inst.target_f(&v, 2.0).unwrap();
            prop_assert!(f2 >= f1 && f1 >= obj);
            if inst.violations(&v).iter().all(|&x| x == 0.0) {
                prop_assert_eq!(f1, f2);
            }
        }
    }
}
