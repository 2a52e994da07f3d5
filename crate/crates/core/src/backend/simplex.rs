//! Dense bounded-variable primal simplex.
//!
//! Solves `min cᵀx  s.t.  A x ≤ b,  l ≤ x ≤ u` with every bound finite.
//! Variables are shifted to `y = x − l ∈ [0, u − l]`; each row gets a slack
//! and rows with a negative shifted right-hand side get an artificial for
//! phase one. Upper bounds are handled implicitly (nonbasic variables sit at
//! either bound), so the tableau is only `m × (n + m + k)`.

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Dense row-major LP in inequality form.
pub struct DenseLp<'a> {
    pub cost: &'a [f64],
    /// `rows[i]` holds the sparse entries `(col, coef)` of row `i`.
    pub rows: &'a [Vec<(usize, f64)>],
    pub rhs: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

struct Tableau {
    m: usize,
    ncols: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    ub: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn is_basic(&self) -> Vec<bool> {
        let mut b = vec![false; self.ncols];
        for &v in &self.basis {
            b[v] = true;
        }
        b
    }

    fn value_of_nonbasic(&self, j: usize) -> f64 {
        if self.at_upper[j] {
            self.ub[j]
        } else {
            0.0
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let n = self.ncols;
        let p = self.t[r * n + j];
        for k in 0..n {
            self.t[r * n + k] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        for row in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            let f = row[j];
            if f != 0.0 {
                for k in 0..n {
                    row[k] -= f * prow[k];
                }
                row[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for k in 0..n {
                self.d[k] -= f * prow[k];
            }
            self.d[j] = 0.0;
        }
        self.basis[r] = j;
        self.at_upper[j] = false;
    }

    /// Runs simplex iterations on the current reduced costs. `allowed`
    /// masks columns that may enter. Returns false on unboundedness.
    fn optimize(&mut self, allowed: &[bool], bland_after: usize, max_iter: usize) -> Option<bool> {
        let m = self.m;
        let mut local = 0usize;
        loop {
            if local > max_iter {
                return None;
            }
            let bland = local >= bland_after;
            let basic = self.is_basic();
            // Entering column and direction.
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncols {
                if basic[j] || !allowed[j] {
                    continue;
                }
                let dj = self.d[j];
                let sigma = if !self.at_upper[j] && dj < -COST_TOL {
                    1.0
                } else if self.at_upper[j] && dj > COST_TOL {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, sigma));
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = Some((j, sigma));
                }
            }
            let Some((j, sigma)) = enter else {
                return Some(true);
            };

            // Ratio test.
            let mut theta = self.ub[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..m {
                let delta = sigma * self.at(i, j);
                let limit = if delta > PIVOT_TOL {
                    (self.beta[i].max(0.0)) / delta
                } else if delta < -PIVOT_TOL && self.ub[self.basis[i]].is_finite() {
                    (self.ub[self.basis[i]] - self.beta[i]).max(0.0) / -delta
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < theta,
                    Some((r, _)) => limit < theta - 1e-12 || (bland && limit <= theta + 1e-12 && self.basis[i] < self.basis[r]),
                };
                if better {
                    theta = limit;
                    leave = Some((i, delta < 0.0));
                }
            }
            if !theta.is_finite() {
                return Some(false);
            }
            for i in 0..m {
                self.beta[i] -= sigma * theta * self.at(i, j);
            }
            match leave {
                None => {
                    // Bound flip, no basis change.
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let leaving = self.basis[r];
                    let entering_value = if sigma > 0.0 { theta } else { self.ub[j] - theta };
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                    self.at_upper[leaving] = to_upper;
                }
            }
            local += 1;
            self.iterations += 1;
        }
    }
}

pub fn solve(lp: &DenseLp<'_>) -> LpOutcome {
    let n = lp.cost.len();
    let m = lp.rhs.len();
    debug_assert!(lp.lower.iter().chain(lp.upper).all(|v| v.is_finite()));

    for j in 0..n {
        if lp.lower[j] > lp.upper[j] + FEAS_TOL {
            return LpOutcome::Infeasible;
        }
    }
    if m == 0 {
        let x: Vec<f64> = (0..n).map(|j| if lp.cost[j] < 0.0 { lp.upper[j] } else { lp.lower[j] }).collect();
        let objective = x.iter().zip(lp.cost).map(|(a, b)| a * b).sum();
        return LpOutcome::Optimal { x, objective };
    }

    // Shifted right-hand side b' = b − A l.
    let mut bshift = lp.rhs.to_vec();
    for (i, row) in lp.rows.iter().enumerate() {
        for &(c, v) in row {
            bshift[i] -= v * lp.lower[c];
        }
    }
    let negative: Vec<usize> = (0..m).filter(|&i| bshift[i] < 0.0).collect();
    let k = negative.len();
    let ncols = n + m + k;
    let mut t = vec![0.0; m * ncols];
    let mut beta = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut art_of_row = vec![usize::MAX; m];
    for (a, &i) in negative.iter().enumerate() {
        art_of_row[i] = n + m + a;
    }
    for (i, row) in lp.rows.iter().enumerate() {
        let sign = if art_of_row[i] != usize::MAX { -1.0 } else { 1.0 };
        for &(c, v) in row {
            t[i * ncols + c] += sign * v;
        }
        t[i * ncols + n + i] = sign;
        if art_of_row[i] != usize::MAX {
            t[i * ncols + art_of_row[i]] = 1.0;
            basis[i] = art_of_row[i];
        } else {
            basis[i] = n + i;
        }
        beta[i] = sign * bshift[i];
    }
    let mut ub = vec![f64::INFINITY; ncols];
    for j in 0..n {
        ub[j] = (lp.upper[j] - lp.lower[j]).max(0.0);
    }
    let mut tab = Tableau {
        m,
        ncols,
        t,
        beta,
        basis,
        at_upper: vec![false; ncols],
        ub,
        d: vec![0.0; ncols],
        iterations: 0,
    };
    let bland_after = 10 * (n + m);
    let max_iter = 50 * (ncols + m) + 1000;

    if k > 0 {
        // Phase one: minimize the sum of artificials.
        for &i in &negative {
            for j in 0..ncols {
                tab.d[j] -= tab.at(i, j);
            }
        }
        for a in 0..k {
            tab.d[n + m + a] = 0.0;
        }
        let allowed = vec![true; ncols];
        if tab.optimize(&allowed, bland_after, max_iter).is_none() {
            return LpOutcome::IterationLimit;
        }
        let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= n + m).map(|i| tab.beta[i]).sum();
        if infeas > FEAS_TOL {
            return LpOutcome::Infeasible;
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= n + m {
                let basic = tab.is_basic();
                if let Some(j) = (0..n + m).find(|&j| tab.at(r, j).abs() > 1e-7 && !basic[j]) {
                    let entering_value = tab.value_of_nonbasic(j);
                    let leaving = tab.basis[r];
                    tab.pivot(r, j);
                    tab.beta[r] = entering_value;
                    tab.at_upper[leaving] = false;
                }
            }
        }
        for a in 0..k {
            tab.ub[n + m + a] = 0.0;
        }
    }

    // Phase two reduced costs d = c − c_Bᵀ T.
    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(lp.cost);
    for j in 0..ncols {
        let mut dj = cost[j];
        for i in 0..m {
            let cb = cost[tab.basis[i]];
            if cb != 0.0 {
                dj -= cb * tab.at(i, j);
            }
        }
        tab.d[j] = dj;
    }
    let mut allowed = vec![true; ncols];
    for a in 0..k {
        allowed[n + m + a] = false;
    }
    match tab.optimize(&allowed, bland_after, max_iter) {
        None => return LpOutcome::IterationLimit,
        Some(false) => return LpOutcome::Unbounded,
        Some(true) => {}
    }

    let mut y = vec![0.0; ncols];
    for j in 0..ncols {
        y[j] = tab.value_of_nonbasic(j);
    }
    for i in 0..m {
        y[tab.basis[i]] = tab.beta[i];
    }
    let x: Vec<f64> = (0..n).map(|j| (lp.lower[j] + y[j]).clamp(lp.lower[j], lp.upper[j])).collect();
    let objective = x.iter().zip(lp.cost).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, objective }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(cost: &[f64], rows: &[Vec<(usize, f64)>], rhs: &[f64], lo: &[f64], up: &[f64]) -> LpOutcome {
        solve(&DenseLp {
            cost,
            rows,
            rhs,
            lower: lo,
            upper: up,
        })
    }

    #[test]
    fn textbook_max() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let rows = vec![vec![(0, 1.0)], vec![(1, 2.0)], vec![(0, 3.0), (1, 2.0)]];
        match run(&[-3.0, -5.0], &rows, &[4.0, 12.0, 18.0], &[0.0, 0.0], &[100.0, 100.0]) {
            LpOutcome::Optimal { x, objective } => {
                assert!((objective + 36.0).abs() < 1e-9);
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
            }
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn needs_phase_one() {
        // min x + y s.t. x + y >= 2 (−x − y <= −2), x - y <= 1
        let rows = vec![vec![(0, -1.0), (1, -1.0)], vec![(0, 1.0), (1, -1.0)]];
        match run(&[1.0, 1.0], &rows, &[-2.0, 1.0], &[0.0, 0.0], &[10.0, 10.0]) {
            LpOutcome::Optimal { objective, .. } => assert!((objective - 2.0).abs() < 1e-9),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn infeasible_rows() {
        let rows = vec![vec![(0, 1.0)], vec![(0, -1.0)]];
        assert_eq!(run(&[1.0], &rows, &[0.0, -1.0], &[-10.0], &[10.0]), LpOutcome::Infeasible);
    }

    #[test]
    fn bound_flip_only() {
        // min -x, 0 <= x <= 3, loose row
        let rows = vec![vec![(0, 1.0)]];
        match run(&[-1.0], &rows, &[10.0], &[0.0], &[3.0]) {
            LpOutcome::Optimal { x, .. } => assert_eq!(x, vec![3.0]),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn negative_lower_bounds() {
        // min x s.t. x >= -2.5 via row, bounds [-5, 5]
        let rows = vec![vec![(0, -1.0)]];
        match run(&[1.0], &rows, &[2.5], &[-5.0], &[5.0]) {
            LpOutcome::Optimal { x, .. } => assert!((x[0] + 2.5).abs() < 1e-12),
            o => panic!("{o:?}"),
        }
    }
}
