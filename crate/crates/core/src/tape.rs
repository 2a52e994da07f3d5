//! A small reverse-mode automatic differentiation tape over row-major
//! `f64` matrices, with exactly the operations the network needs.

use ndarray::{concatenate, s, Array2, Axis, Zip};
use std::rc::Rc;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Gelu(Var),
    Sigmoid(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    Gather(Var, Rc<[usize]>),
    ScatterAdd(Var, Rc<[usize]>),
    ConcatCols(Var, Var),
    WeightedSqErr {
        pred: Var,
        target: Vec<f64>,
        weights: Vec<f64>,
    },
    WeightedCe {
        logits: Var,
        labels: Vec<usize>,
        weights: Vec<f64>,
        probs: Array2<f64>,
    },
}

struct Node {
    value: Option<Array2<f64>>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p [Array2<f64>],
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_K * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let th = (GELU_K * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    p
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Array2<f64>]) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(1024),
            param_vars: vec![None; params.len()],
        }
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        match (&self.nodes[v.0].value, &self.nodes[v.0].op) {
            (Some(x), _) => x,
            (None, Op::Param(i)) => &self.params[*i],
            _ => unreachable!("node without a value"),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes held by recorded (non-parameter) values.
    pub fn value_bytes(&self) -> usize {
        let cached: usize = self
            .nodes
            .iter()
            .map(|n| match &n.op {
                Op::LayerNorm { xhat, .. } => xhat.len(),
                Op::WeightedCe { probs, .. } => probs.len(),
                _ => 0,
            })
            .sum();
        let values: usize = self.nodes.iter().filter_map(|n| n.value.as_ref()).map(|v| v.len()).sum();
        8 * (values + cached)
    }

    pub fn input(&mut self, x: Array2<f64>) -> Var {
        self.push(x, Op::Input)
    }

    pub fn param(&mut self, index: usize) -> Var {
        if let Some(v) = self.param_vars[index] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(index),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[index] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a).dot(self.value(b));
        self.push(y, Op::MatMul(a, b))
    }

    /// `a + bias` with a `1 × cols` bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let y = self.value(a) + self.value(bias);
        self.push(y, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) + self.value(b);
        self.push(y, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let y = self.value(a) * self.value(b);
        self.push(y, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(|v| 1.0 - v);
        self.push(y, Op::OneMinus(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(gelu);
        self.push(y, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = self.value(a).mapv(sigmoid);
        self.push(y, Op::Sigmoid(a))
    }

    /// Layer normalization over each row with `1 × cols` scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / cols;
            row.mapv_inplace(|v| v - mean);
            let var = row.fold(0.0, |a, &v| a + v * v) / cols;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| v * is);
            inv_std.push(is);
        }
        let y = &xhat * self.value(gamma) + self.value(beta);
        self.push(y, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Row `i` of the result is row `idx[i]` of `a`.
    pub fn gather(&mut self, a: Var, idx: &Rc<[usize]>) -> Var {
        let av = self.value(a);
        let mut y = Array2::zeros((idx.len(), av.ncols()));
        for (i, &j) in idx.iter().enumerate() {
            y.row_mut(i).assign(&av.row(j));
        }
        self.push(y, Op::Gather(a, idx.clone()))
    }

    /// Sums row `i` of `a` into row `idx[i]` of an `n`-row result.
    pub fn scatter_add(&mut self, a: Var, idx: &Rc<[usize]>, n: usize) -> Var {
        let av = self.value(a);
        let mut y = Array2::zeros((n, av.ncols()));
        for (i, &j) in idx.iter().enumerate() {
            y.row_mut(j).scaled_add(1.0, &av.row(i));
        }
        self.push(y, Op::ScatterAdd(a, idx.clone()))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let y = concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()]).expect("concat row counts differ");
        self.push(y, Op::ConcatCols(a, b))
    }

    /// `Σ_i weights_i · (pred_i − target_i)²` for an `n × 1` prediction.
    pub fn weighted_sq_err(&mut self, pred: Var, target: Vec<f64>, weights: Vec<f64>) -> Var {
        let pv = self.value(pred);
        let loss: f64 = pv.iter().zip(&target).zip(&weights).map(|((p, t), w)| w * (p - t) * (p - t)).sum();
        self.push(Array2::from_elem((1, 1), loss), Op::WeightedSqErr { pred, target, weights })
    }

    /// `Σ_i weights_i · −log softmax(logits_i)[labels_i]`.
    pub fn weighted_ce(&mut self, logits: Var, labels: Vec<usize>, weights: Vec<f64>) -> Var {
        let lv = self.value(logits);
        let mut loss = 0.0;
        for ((row, &label), &w) in lv.rows().into_iter().zip(&labels).zip(&weights) {
            let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            loss += w * (lse - row[label]);
        }
        let probs = softmax_rows(lv);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::WeightedCe {
                logits,
                labels,
                weights,
                probs,
            },
        )
    }

    /// Convenience: `x · W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    /// Gradients of the scalar `loss` with respect to every parameter
    /// (zeros for parameters not on the tape).
    pub fn backward(&self, loss: Var) -> Vec<Array2<f64>> {
        let mut grads: Vec<Option<Array2<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut param_grads: Vec<Array2<f64>> = self.params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Param(i) => param_grads[*i] += &g,
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddBias(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::OneMinus(a) => acc(&mut grads, *a, -g),
                Op::Gelu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|gv, &x| *gv *= gelu_grad(x));
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[idx].value.as_ref().expect("sigmoid value");
                    let mut ga = g;
                    Zip::from(&mut ga).and(y).for_each(|gv, &s| *gv *= s * (1.0 - s));
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let mut dxhat = &g * self.value(*gamma);
                    let cols = xhat.ncols() as f64;
                    for ((mut d, xh), &is) in dxhat.rows_mut().into_iter().zip(xhat.rows()).zip(inv_std) {
                        let sum_d = d.sum();
                        let sum_dx = d.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>();
                        Zip::from(&mut d)
                            .and(&xh)
                            .for_each(|dv, &h| *dv = is * (*dv - sum_d / cols - h * sum_dx / cols));
                    }
                    acc(&mut grads, *gamma, ggamma);
                    acc(&mut grads, *beta, gbeta);
                    acc(&mut grads, *x, dxhat);
                }
                Op::Gather(a, index) => {
                    let av = self.value(*a);
                    let mut ga = Array2::zeros(av.raw_dim());
                    for (i, &j) in index.iter().enumerate() {
                        ga.row_mut(j).scaled_add(1.0, &g.row(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterAdd(a, index) => {
                    let mut ga = Array2::zeros((index.len(), g.ncols()));
                    for (i, &j) in index.iter().enumerate() {
                        ga.row_mut(i).assign(&g.row(j));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let split = self.value(*a).ncols();
                    acc(&mut grads, *a, g.slice(s![.., ..split]).to_owned());
                    acc(&mut grads, *b, g.slice(s![.., split..]).to_owned());
                }
                Op::WeightedSqErr { pred, target, weights } => {
                    let scale = g[[0, 0]];
                    let pv = self.value(*pred);
                    let mut gp = Array2::zeros(pv.raw_dim());
                    for (i, (p, (t, w))) in pv.iter().zip(target.iter().zip(weights)).enumerate() {
                        gp[[i, 0]] = scale * 2.0 * w * (p - t);
                    }
                    acc(&mut grads, *pred, gp);
                }
                Op::WeightedCe {
                    logits,
                    labels,
                    weights,
                    probs,
                } => {
                    let scale = g[[0, 0]];
                    let mut gl = probs.clone();
                    for ((mut row, &label), &w) in gl.rows_mut().into_iter().zip(labels).zip(weights) {
                        row[label] -= 1.0;
                        row.mapv_inplace(|v| v * w * scale);
                    }
                    acc(&mut grads, *logits, gl);
                }
            }
        }
        param_grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn rand_mat(rng: &mut SplitMix64, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.uniform(-1.0, 1.0))
    }

    /// Builds a scalar through every op, using params as the only inputs.
    fn graph(t: &mut Tape) -> Var {
        let idx: Rc<[usize]> = Rc::from(vec![0, 2, 2, 1]);
        let (x, w, b, gam, bet, w2) = (t.param(0), t.param(1), t.param(2), t.param(3), t.param(4), t.param(5));
        let h = t.linear(x, w, b); // 3x4
        let h = t.layer_norm(h, gam, bet);
        let h = t.gelu(h);
        let e = t.gather(h, &idx); // 4x4
        let e2 = t.sigmoid(e);
        let e3 = t.one_minus(e2);
        let e = t.mul(e, e3);
        let agg = t.scatter_add(e, &idx, 3); // 3x4
        let agg = t.add(agg, h);
        let cat = t.concat_cols(agg, h); // 3x8
        let logits = t.matmul(cat, w2); // 3x3
        let ce = t.weighted_ce(logits, vec![0, 2, 1], vec![1.0, 0.5, 2.0]);
        let p = t.param(6); // 3x1 prediction
        let sq = t.weighted_sq_err(p, vec![0.1, -0.2, 0.3], vec![1.0, 2.0, 0.5]);
        t.add(ce, sq)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = SplitMix64::new(11);
        let mut params = vec![
            rand_mat(&mut rng, 3, 2),
            rand_mat(&mut rng, 2, 4),
            rand_mat(&mut rng, 1, 4),
            rand_mat(&mut rng, 1, 4),
            rand_mat(&mut rng, 1, 4),
            rand_mat(&mut rng, 8, 3),
            rand_mat(&mut rng, 3, 1),
        ];
        let grads = {
            let mut t = Tape::new(&params);
            let loss = graph(&mut t);
            t.backward(loss)
        };
        let h = 1e-5;
        for p in 0..params.len() {
            for k in 0..params[p].len() {
                let orig = params[p].as_slice().unwrap()[k];
                let mut eval = |v: f64| {
                    params[p].as_slice_mut().unwrap()[k] = v;
                    let mut t = Tape::new(&params);
                    let l = graph(&mut t);
                    t.value(l)[[0, 0]]
                };
                let fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                params[p].as_slice_mut().unwrap()[k] = orig;
                let an = grads[p].as_slice().unwrap()[k];
                assert!((fd - an).abs() <= 1e-6 * (1.0 + an.abs()), "param {p}[{k}]: fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn layer_norm_normalizes() {
        let params = vec![
            Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -1.0, 0.0, 5.0]).unwrap(),
            Array2::ones((1, 3)),
            Array2::zeros((1, 3)),
        ];
        let mut t = Tape::new(&params);
        let (x, g, b) = (t.param(0), t.param(1), t.param(2));
        let y = t.layer_norm(x, g, b);
        for row in t.value(y).rows() {
            assert!(row.sum().abs() < 1e-12);
            assert!((row.mapv(|v| v * v).sum() / 3.0 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn empty_rows_are_fine() {
        let params = vec![Array2::zeros((0, 3)), Array2::ones((3, 2)), Array2::zeros((1, 2))];
        let mut t = Tape::new(&params);
        let (x, w, b) = (t.param(0), t.param(1), t.param(2));
        let y = t.linear(x, w, b);
        assert_eq!(t.value(y).dim(), (0, 2));
        let l = t.weighted_ce(y, vec![], vec![]);
        assert_eq!(t.value(l)[[0, 0]], 0.0);
        let g = t.backward(l);
        assert!(g[1].iter().all(|&v| v == 0.0));
    }
}
