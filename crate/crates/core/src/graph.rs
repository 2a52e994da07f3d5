//! Tripartite graph encoding of a MILP instance.
//!
//! Integer variables, continuous variables and constraints form three node
//! partitions; every nonzero coefficient becomes an edge between its
//! constraint and its variable. Variable bounds are node features.

use ndarray::{s, Array2};

use crate::error::{check_len, Result};
use crate::milp::MilpInstance;

/// Width of the static variable feature rows `[w, lb, ub, hlb, hub]`.
pub const VAR_FEATS: usize = 5;

/// Coordinate list of constraint-variable edges within one partition.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeList {
    pub con: Vec<usize>,
    pub var: Vec<usize>,
    pub coef: Vec<f64>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.coef.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coef.is_empty()
    }

    fn push(&mut self, con: usize, var: usize, coef: f64) {
        self.con.push(con);
        self.var.push(var);
        self.coef.push(coef);
    }
}

/// Factors divided out during normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalers {
    pub row: Vec<f64>,
    pub obj: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripartiteGraph {
    pub ivar_feats: Array2<f64>,
    pub cvar_feats: Array2<f64>,
    pub con_feats: Array2<f64>,
    pub edges_int: EdgeList,
    pub edges_cont: EdgeList,
    pub scalers: Scalers,
}

fn var_row(w: f64, lb: f64, ub: f64) -> [f64; VAR_FEATS] {
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let flag = |v: f64| if v.is_finite() { 1.0 } else { 0.0 };
    [w, finite(lb), finite(ub), flag(lb), flag(ub)]
}

pub fn encode(inst: &MilpInstance, normalize: bool) -> TripartiteGraph {
    let q = inst.num_int;
    let m = inst.num_cons;
    let mut row_scale = vec![1.0; m];
    let mut obj_scale = 1.0;
    if normalize {
        let mut row_max = vec![0.0f64; m];
        for c in &inst.coefs {
            row_max[c.row] = row_max[c.row].max(c.val.abs());
        }
        for (s, mx) in row_scale.iter_mut().zip(row_max) {
            if mx > 0.0 {
                *s = mx;
            }
        }
        let wmax = inst.obj.iter().fold(0.0f64, |a, w| a.max(w.abs()));
        if wmax > 0.0 {
            obj_scale = wmax;
        }
    }

    let mut ivar_feats = Array2::zeros((q, VAR_FEATS));
    let mut cvar_feats = Array2::zeros((inst.num_cont(), VAR_FEATS));
    for i in 0..inst.num_vars {
        let row = var_row(inst.obj[i] / obj_scale, inst.lower[i], inst.upper[i]);
        let mut target = if i < q { ivar_feats.row_mut(i) } else { cvar_feats.row_mut(i - q) };
        for (k, v) in row.into_iter().enumerate() {
            target[k] = v;
        }
    }
    let con_feats = Array2::from_shape_fn((m, 1), |(j, _)| inst.rhs[j] / row_scale[j]);

    let mut coefs: Vec<_> = inst.coefs.iter().filter(|c| c.val != 0.0).collect();
    coefs.sort_by_key(|c| (c.row, c.col));
    let mut edges_int = EdgeList::default();
    let mut edges_cont = EdgeList::default();
    for c in coefs {
        let v = c.val / row_scale[c.row];
        if c.col < q {
            edges_int.push(c.row, c.col, v);
        } else {
            edges_cont.push(c.row, c.col - q, v);
        }
    }
    TripartiteGraph {
        ivar_feats,
        cvar_feats,
        con_feats,
        edges_int,
        edges_cont,
        scalers: Scalers {
            row: row_scale,
            obj: obj_scale,
        },
    }
}

impl TripartiteGraph {
    pub fn num_int(&self) -> usize {
        self.ivar_feats.nrows()
    }

    pub fn num_cont(&self) -> usize {
        self.cvar_feats.nrows()
    }

    pub fn num_cons(&self) -> usize {
        self.con_feats.nrows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges_int.len() + self.edges_cont.len()
    }

    /// Undoes normalization: `(row, col, coef)` triples and `b`.
    pub fn unscaled(&self) -> (Vec<(usize, usize, f64)>, Vec<f64>) {
        let q = self.num_int();
        let mut triples: Vec<_> = self
            .edges_int
            .con
            .iter()
            .zip(&self.edges_int.var)
            .zip(&self.edges_int.coef)
            .map(|((&r, &c), &v)| (r, c, v * self.scalers.row[r]))
            .chain(
                self.edges_cont
                    .con
                    .iter()
                    .zip(&self.edges_cont.var)
                    .zip(&self.edges_cont.coef)
                    .map(|((&r, &c), &v)| (r, c + q, v * self.scalers.row[r])),
            )
            .collect();
        triples.sort_by_key(|&(r, c, _)| (r, c));
        let b = (0..self.num_cons()).map(|j| self.con_feats[[j, 0]] * self.scalers.row[j]).collect();
        (triples, b)
    }
}

/// Current point of the flow: integer block `d`, continuous block `c`, time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub d: Vec<usize>,
    pub c: Vec<f64>,
    pub t: f64,
}

/// Graph whose variable rows carry the current state as a sixth column.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedGraph<'g> {
    pub graph: &'g TripartiteGraph,
    pub ivar_feats: Array2<f64>,
    pub cvar_feats: Array2<f64>,
    pub t: f64,
}

fn widen(base: &Array2<f64>, col: impl Iterator<Item = f64>) -> Array2<f64> {
    let mut out = Array2::zeros((base.nrows(), VAR_FEATS + 1));
    out.slice_mut(s![.., ..VAR_FEATS]).assign(base);
    for (i, v) in col.enumerate() {
        out[[i, VAR_FEATS]] = v;
    }
    out
}

pub fn attach_state<'g>(g: &'g TripartiteGraph, s: &SolutionState) -> Result<AugmentedGraph<'g>> {
    check_len("integer state", g.num_int(), s.d.len())?;
    check_len("continuous state", g.num_cont(), s.c.len())?;
    Ok(AugmentedGraph {
        graph: g,
        ivar_feats: widen(&g.ivar_feats, s.d.iter().map(|&d| d as f64)),
        cvar_feats: widen(&g.cvar_feats, s.c.iter().copied()),
        t: s.t,
    })
}

impl AugmentedGraph<'_> {
    /// Reads the state column back.
    pub fn state(&self) -> SolutionState {
        SolutionState {
            d: self.ivar_feats.column(VAR_FEATS).iter().map(|&v| v as usize).collect(),
            c: self.cvar_feats.column(VAR_FEATS).to_vec(),
            t: self.t,
        }
    }
}

/// Disjoint union of augmented graphs, each with its own time.
#[derive(Debug, Clone, Default)]
pub struct GraphBatch {
    pub ivar: Array2<f64>,
    pub cvar: Array2<f64>,
    pub con: Array2<f64>,
    pub ivar_graph: Vec<usize>,
    pub cvar_graph: Vec<usize>,
    pub con_graph: Vec<usize>,
    pub edges_int: EdgeList,
    pub edges_cont: EdgeList,
    pub t: Vec<f64>,
    /// Start offsets of each graph's integer and continuous nodes, with a
    /// trailing total.
    pub ivar_offsets: Vec<usize>,
    pub cvar_offsets: Vec<usize>,
}

fn stack(parts: &[&Array2<f64>], width: usize) -> Array2<f64> {
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Array2::zeros((rows, width));
    let mut at = 0;
    for p in parts {
        out.slice_mut(s![at..at + p.nrows(), ..]).assign(*p);
        at += p.nrows();
    }
    out
}

impl GraphBatch {
    pub fn new(graphs: &[AugmentedGraph<'_>]) -> Self {
        let ivar = stack(&graphs.iter().map(|g| &g.ivar_feats).collect::<Vec<_>>(), VAR_FEATS + 1);
        let cvar = stack(&graphs.iter().map(|g| &g.cvar_feats).collect::<Vec<_>>(), VAR_FEATS + 1);
        let con = stack(&graphs.iter().map(|g| &g.graph.con_feats).collect::<Vec<_>>(), 1);
        let mut b = GraphBatch {
            ivar,
            cvar,
            con,
            t: graphs.iter().map(|g| g.t).collect(),
            ..Default::default()
        };
        let (mut oi, mut oc, mut om) = (0, 0, 0);
        for (k, g) in graphs.iter().enumerate() {
            let gr = g.graph;
            b.ivar_offsets.push(oi);
            b.cvar_offsets.push(oc);
            b.ivar_graph.extend(std::iter::repeat_n(k, gr.num_int()));
            b.cvar_graph.extend(std::iter::repeat_n(k, gr.num_cont()));
            b.con_graph.extend(std::iter::repeat_n(k, gr.num_cons()));
            for (src, dst, off) in [(&gr.edges_int, &mut b.edges_int, oi), (&gr.edges_cont, &mut b.edges_cont, oc)] {
                for e in 0..src.len() {
                    dst.push(src.con[e] + om, src.var[e] + off, src.coef[e]);
                }
            }
            oi += gr.num_int();
            oc += gr.num_cont();
            om += gr.num_cons();
        }
        b.ivar_offsets.push(oi);
        b.cvar_offsets.push(oc);
        b
    }

    pub fn num_graphs(&self) -> usize {
        self.t.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{toy_instance, Coef};
    use proptest::prelude::*;

    #[test]
    fn toy_graph() {
        let g = encode(&toy_instance(), false);
        assert_eq!((g.num_int(), g.num_cont(), g.num_cons()), (1, 1, 2));
        assert_eq!(g.num_edges(), 4);
        let mut w: Vec<f64> = g.edges_int.coef.iter().chain(&g.edges_cont.coef).copied().collect();
        w.sort_by(f64::total_cmp);
        assert_eq!(w, vec![1.0, 1.0, 1.0, 3.0]);
        assert_eq!(g.ivar_feats.row(0).to_vec(), vec![4.0, 0.0, 5.0, 1.0, 1.0]);
        assert_eq!(g.cvar_feats.row(0).to_vec(), vec![1.0, 0.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn infinite_bound_sentinel_and_empty_rows() {
        let inst = MilpInstance::new("free", 0, 1, vec![1.0], vec![], vec![], vec![f64::NEG_INFINITY], vec![2.0]).unwrap();
        let g = encode(&inst, true);
        assert_eq!(g.cvar_feats.row(0).to_vec(), vec![1.0, 0.0, 2.0, 0.0, 1.0]);
        assert_eq!((g.num_cons(), g.num_edges()), (0, 0));
    }

    #[test]
    fn normalization_scales_rows() {
        let g = encode(&toy_instance(), true);
        assert_eq!(g.scalers.row, vec![3.0, 1.0]);
        assert_eq!(g.scalers.obj, 4.0);
        assert_eq!(g.ivar_feats[[0, 0]], 1.0);
        let (triples, b) = g.unscaled();
        assert_eq!(b, toy_instance().rhs);
        assert_eq!(triples, vec![(0, 0, 3.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
    }

    #[test]
    fn attach_widths_and_round_trip() {
        let g = encode(&toy_instance(), true);
        let s = SolutionState {
            d: vec![3],
            c: vec![0.25],
            t: 0.4,
        };
        let a = attach_state(&g, &s).unwrap();
        assert_eq!((a.ivar_feats.ncols(), a.cvar_feats.ncols(), g.con_feats.ncols()), (6, 6, 1));
        assert_eq!(a.state(), s);
        let zero = attach_state(
            &g,
            &SolutionState {
                d: vec![0],
                c: vec![0.0],
                t: 0.0,
            },
        )
        .unwrap();
        assert!(zero.ivar_feats.column(5).iter().all(|&v| v == 0.0));
        assert!(attach_state(
            &g,
            &SolutionState {
                d: vec![],
                c: vec![0.0],
                t: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn batch_offsets_edges() {
        let g = encode(&toy_instance(), true);
        let s = SolutionState {
            d: vec![1],
            c: vec![0.5],
            t: 0.2,
        };
        let a = attach_state(&g, &s).unwrap();
        let b = GraphBatch::new(&[a.clone(), a]);
        assert_eq!(b.ivar_offsets, vec![0, 1, 2]);
        assert_eq!(b.con_graph, vec![0, 0, 1, 1]);
        assert_eq!(b.edges_int.con, vec![0, 1, 2, 3]);
        assert_eq!(b.edges_cont.var, vec![0, 0, 1, 1]);
    }

    fn arb_coefs() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
        proptest::collection::btree_map((0usize..4, 0usize..5), -9.0f64..9.0, 1..15)
            .prop_map(|m| m.into_iter().filter(|(_, v)| v.abs() > 1e-3).map(|((r, c), v)| (r, c, v)).collect())
    }

    fn build(triples: &[(usize, usize, f64)], b: &[f64]) -> MilpInstance {
        let coefs = triples.iter().map(|&(row, col, val)| Coef { row, col, val }).collect();
        MilpInstance::new("p", 3, 2, vec![1.0, -2.0, 0.5, 3.0, 0.0], coefs, b.to_vec(), vec![0.0; 5], vec![2.0; 5]).unwrap()
    }

    proptest! {
        #[test]
        fn unscaling_recovers_a_and_b(triples in arb_coefs(), b in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let inst = build(&triples, &b);
            let g = encode(&inst, true);
            prop_assert_eq!(g.num_edges(), triples.len());
            let (back, b2) = g.unscaled();
            for ((r, c, v), (r2, c2, v2)) in triples.iter().zip(&back) {
                prop_assert_eq!((r, c), (r2, c2));
                prop_assert!((v - v2).abs() <= 1e-12);
            }
            for (x, y) in b.iter().zip(&b2) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            let mut row_max = [0.0f64; 4];
            for e in [&g.edges_int, &g.edges_cont] {
                for (&r, &v) in e.con.iter().zip(&e.coef) {
                    row_max[r] = row_max[r].max(v.abs());
                }
            }
            for (r, &mx) in row_max.iter().enumerate() {
                if triples.iter().any(|t| t.0 == r) {
                    prop_assert!((mx - 1.0).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn order_of_triples_irrelevant(triples in arb_coefs(), seed in any::<u64>()) {
            let b = [1.0; 4];
            let mut shuffled = triples.clone();
            crate::rng::SplitMix64::new(seed).shuffle(&mut shuffled);
            prop_assert_eq!(encode(&build(&triples, &b), true), encode(&build(&shuffled, &b), true));
        }
    }
}
