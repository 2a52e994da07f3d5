//! Residual tripartite graph convolutional network.
//!
//! Each layer first updates constraint nodes from both variable partitions
//! (gated TriConv), then each variable partition from the updated
//! constraints (BiConv), with additive residual and time terms.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::rc::Rc;

use crate::error::{FmipError, Result};
use crate::graph::{AugmentedGraph, EdgeList, GraphBatch, VAR_FEATS};
use crate::rng::SplitMix64;
use crate::tape::{softmax_rows, Tape, Var};
use crate::train::TrainState;

pub const CHECKPOINT_VERSION: &str = "fmip-ckpt-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Number of integer categories, `K + 1`.
    pub int_categories: usize,
    pub out_dim_cont: usize,
    /// Normalize instances before encoding (must match between training
    /// and inference).
    pub normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 12,
            hidden: 64,
            int_categories: 2,
            out_dim_cont: 1,
            normalize: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FmipError::Model(m));
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if self.hidden == 0 || !self.hidden.is_multiple_of(2) {
            return bad(format!("hidden width {} must be positive and even", self.hidden));
        }
        if self.int_categories < 2 {
            return bad(format!("int_categories {} must be at least 2", self.int_categories));
        }
        if self.out_dim_cont != 1 {
            return bad("out_dim_cont must be 1".into());
        }
        Ok(())
    }
}

/// Sinusoidal embedding of `t·1000`.
pub fn time_embedding(t: f64, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; h];
    for i in 0..h / 2 {
        let arg = t * 1000.0 / 10000f64.powf(2.0 * i as f64 / h as f64);
        out[2 * i] = arg.sin();
        out[2 * i + 1] = arg.cos();
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Lin {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ln {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Mlp {
    l1: Lin,
    l2: Lin,
}

#[derive(Debug, Clone)]
struct Conv {
    t: Lin,
    s1: Lin,
    s2: Option<Lin>,
    e: Lin,
    fin: Lin,
    fg: Lin,
    o1: Lin,
    o2: Lin,
    ln_pn: Ln,
    ln_pc: Ln,
    ln_out: Ln,
}

#[derive(Debug, Clone)]
struct Layer {
    time: Mlp,
    tri: Conv,
    bi_int: Conv,
    bi_cont: Conv,
    mlp_con: Mlp,
    mlp_int: Mlp,
    mlp_cont: Mlp,
}

#[derive(Debug, Clone)]
struct Layout {
    enc_int: Mlp,
    enc_cont: Mlp,
    enc_con: Mlp,
    layers: Vec<Layer>,
    head_int: Mlp,
    head_cont: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Default)]
struct Builder {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: String, shape: (usize, usize), init: Init) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.inits.push(init);
        self.names.len() - 1
    }

    fn lin(&mut self, name: &str, fan_in: usize, out: usize) -> Lin {
        let init = Init::Uniform { fan_in };
        Lin {
            w: self.add(format!("{name}.w"), (fan_in, out), init),
            b: self.add(format!("{name}.b"), (1, out), init),
        }
    }

    fn ln(&mut self, name: &str, h: usize) -> Ln {
        Ln {
            g: self.add(format!("{name}.g"), (1, h), Init::Ones),
            b: self.add(format!("{name}.b"), (1, h), Init::Zeros),
        }
    }

    fn mlp(&mut self, name: &str, fan_in: usize, h: usize, out: usize) -> Mlp {
        Mlp {
            l1: self.lin(&format!("{name}.l1"), fan_in, h),
            l2: self.lin(&format!("{name}.l2"), h, out),
        }
    }

    fn conv(&mut self, name: &str, h: usize, two_sources: bool) -> Conv {
        Conv {
            t: self.lin(&format!("{name}.t"), h, h),
            s1: self.lin(&format!("{name}.s1"), h, h),
            s2: two_sources.then(|| self.lin(&format!("{name}.s2"), h, h)),
            e: self.lin(&format!("{name}.e"), 1, h),
            fin: self.lin(&format!("{name}.final"), h, h),
            fg: self.lin(&format!("{name}.fg"), 2 * h, h),
            o1: self.lin(&format!("{name}.o1"), 2 * h, h),
            o2: self.lin(&format!("{name}.o2"), h, h),
            ln_pn: self.ln(&format!("{name}.ln_pn"), h),
            ln_pc: self.ln(&format!("{name}.ln_pc"), h),
            ln_out: self.ln(&format!("{name}.ln_out"), h),
        }
    }
}

fn layout(cfg: &ModelConfig) -> (Layout, Builder) {
    let h = cfg.hidden;
    let f = VAR_FEATS + 1;
    let mut b = Builder::default();
    let enc_int = b.mlp("enc_ivar", f, h, h);
    let enc_cont = b.mlp("enc_cvar", f, h, h);
    let enc_con = b.mlp("enc_con", 1, h, h);
    let layers = (0..cfg.layers)
        .map(|l| Layer {
            time: b.mlp(&format!("layer{l}.time"), h, h, h),
            tri: b.conv(&format!("layer{l}.tri"), h, true),
            bi_int: b.conv(&format!("layer{l}.bi_ivar"), h, false),
            bi_cont: b.conv(&format!("layer{l}.bi_cvar"), h, false),
            mlp_con: b.mlp(&format!("layer{l}.mlp_con"), h, h, h),
            mlp_int: b.mlp(&format!("layer{l}.mlp_ivar"), h, h, h),
            mlp_cont: b.mlp(&format!("layer{l}.mlp_cvar"), h, h, h),
        })
        .collect();
    let head_int = b.mlp("head_ivar", h, h, cfg.int_categories);
    let head_cont = b.mlp("head_cvar", h, h, cfg.out_dim_cont);
    (
        Layout {
            enc_int,
            enc_cont,
            enc_con,
            layers,
            head_int,
            head_cont,
        },
        b,
    )
}

/// Per-graph network output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// `q × (K+1)` logits.
    pub int_logits: Array2<f64>,
    pub cont_values: Vec<f64>,
}

impl ModelOutput {
    pub fn int_probs(&self) -> Array2<f64> {
        softmax_rows(&self.int_logits)
    }

    pub fn is_finite(&self) -> bool {
        self.int_logits.iter().all(|v| v.is_finite()) && self.cont_values.iter().all(|v| v.is_finite())
    }
}

/// Tape handles of a batched forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub logits: Var,
    pub cont: Var,
}

struct EdgeIdx {
    con: Rc<[usize]>,
    var: Rc<[usize]>,
    coef: Var,
}

fn edge_idx(t: &mut Tape, e: &EdgeList) -> EdgeIdx {
    EdgeIdx {
        con: Rc::from(e.con.as_slice()),
        var: Rc::from(e.var.as_slice()),
        coef: t.input(Array2::from_shape_vec((e.len(), 1), e.coef.clone()).expect("edge column")),
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub seed: u64,
    names: Vec<String>,
    params: Vec<Array2<f64>>,
    layout: Layout,
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

impl Model {
    /// Uniform `±1/sqrt(fan_in)` linear weights, unit layer-norm scales;
    /// values are rounded to `f32` so checkpoints are exact.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, b) = layout(&config);
        let mut rng = SplitMix64::stream(seed, 0x696e_6974);
        let params = b
            .shapes
            .iter()
            .zip(&b.inits)
            .map(|(&shape, &init)| match init {
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Array2::from_shape_simple_fn(shape, || round_f32(rng.uniform(-bound, bound)))
                }
                Init::Ones => Array2::ones(shape),
                Init::Zeros => Array2::zeros(shape),
            })
            .collect();
        Ok(Self {
            config,
            seed,
            names: b.names,
            params,
            layout,
        })
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn round_params(&mut self) {
        for p in &mut self.params {
            p.mapv_inplace(round_f32);
        }
    }

    fn lin(&self, t: &mut Tape, l: Lin, x: Var) -> Var {
        let (w, b) = (t.param(l.w), t.param(l.b));
        t.linear(x, w, b)
    }

    fn ln(&self, t: &mut Tape, l: Ln, x: Var) -> Var {
        let (g, b) = (t.param(l.g), t.param(l.b));
        t.layer_norm(x, g, b)
    }

    fn mlp(&self, t: &mut Tape, m: Mlp, x: Var) -> Var {
        let h = self.lin(t, m.l1, x);
        let h = t.gelu(h);
        self.lin(t, m.l2, h)
    }

    /// Gated message aggregation into `target`. `sources` holds one or two
    /// `(features, edges, source linear)` partitions; edges index the target
    /// through `tgt_of` and the source through the other endpoint.
    fn conv(&self, t: &mut Tape, c: &Conv, target: Var, n_target: usize, sources: &[(Var, &Rc<[usize]>, &Rc<[usize]>, Var, Lin)]) -> Var {
        let h = self.config.hidden;
        let lt = self.lin(t, c.t, target);
        let mut agg = Vec::with_capacity(2);
        for &(src, tgt_idx, src_idx, coef, s) in sources {
            let from_t = t.gather(lt, tgt_idx);
            let ls = self.lin(t, s, src);
            let from_s = t.gather(ls, src_idx);
            let from_e = self.lin(t, c.e, coef);
            let pre = t.add(from_t, from_s);
            let pre = t.add(pre, from_e);
            let z = self.ln(t, c.ln_pn, pre);
            let z = t.gelu(z);
            let m = self.lin(t, c.fin, z);
            agg.push(t.scatter_add(m, tgt_idx, n_target));
        }
        let a1 = agg[0];
        let a2 = match agg.get(1) {
            Some(&a) => a,
            None => t.input(Array2::zeros((n_target, h))),
        };
        let gate_in = t.concat_cols(a1, a2);
        let g = self.lin(t, c.fg, gate_in);
        let g = t.sigmoid(g);
        let pooled = if agg.len() > 1 {
            let ga = t.mul(g, a1);
            let one_g = t.one_minus(g);
            let gb = t.mul(one_g, a2);
            t.add(ga, gb)
        } else {
            t.mul(g, a1)
        };
        let pooled = self.ln(t, c.ln_pc, pooled);
        let z = t.concat_cols(pooled, target);
        let z = self.lin(t, c.o1, z);
        let z = t.gelu(z);
        let z = self.lin(t, c.o2, z);
        let z = self.ln(t, c.ln_out, z);
        t.add(z, target)
    }

    /// Batched forward pass recorded on `tape` (which must borrow this
    /// model's parameters).
    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch) -> ForwardVars {
        let h = self.config.hidden;
        let lay = &self.layout;
        let t = tape;
        let (nq, np, nm) = (batch.ivar.nrows(), batch.cvar.nrows(), batch.con.nrows());
        let ivar_graph: Rc<[usize]> = Rc::from(batch.ivar_graph.as_slice());
        let cvar_graph: Rc<[usize]> = Rc::from(batch.cvar_graph.as_slice());
        let con_graph: Rc<[usize]> = Rc::from(batch.con_graph.as_slice());
        let ei = edge_idx(t, &batch.edges_int);
        let ec = edge_idx(t, &batch.edges_cont);

        let mut temb = Array2::zeros((batch.num_graphs(), h));
        for (g, &tg) in batch.t.iter().enumerate() {
            for (k, v) in time_embedding(tg, h).into_iter().enumerate() {
                temb[[g, k]] = v;
            }
        }
        let temb = t.input(temb);

        let x = t.input(batch.ivar.clone());
        let mut ivar = self.mlp(t, lay.enc_int, x);
        let x = t.input(batch.cvar.clone());
        let mut cvar = self.mlp(t, lay.enc_cont, x);
        let x = t.input(batch.con.clone());
        let mut con = self.mlp(t, lay.enc_con, x);

        for layer in &lay.layers {
            let ht = self.mlp(t, layer.time, temb);
            let tri = self.conv(
                t,
                &layer.tri,
                con,
                nm,
                &[
                    (ivar, &ei.con, &ei.var, ei.coef, layer.tri.s1),
                    (cvar, &ec.con, &ec.var, ec.coef, layer.tri.s2.expect("tri conv has two sources")),
                ],
            );
            let upd = self.mlp(t, layer.mlp_con, tri);
            let hc = t.gather(ht, &con_graph);
            let c1 = t.add(con, hc);
            con = t.add(c1, upd);

            let bi = self.conv(t, &layer.bi_int, ivar, nq, &[(con, &ei.var, &ei.con, ei.coef, layer.bi_int.s1)]);
            let upd = self.mlp(t, layer.mlp_int, bi);
            let hi = t.gather(ht, &ivar_graph);
            let v1 = t.add(ivar, hi);
            let new_ivar = t.add(v1, upd);

            let bi = self.conv(t, &layer.bi_cont, cvar, np, &[(con, &ec.var, &ec.con, ec.coef, layer.bi_cont.s1)]);
            let upd = self.mlp(t, layer.mlp_cont, bi);
            let hcv = t.gather(ht, &cvar_graph);
            let v1 = t.add(cvar, hcv);
            cvar = t.add(v1, upd);
            ivar = new_ivar;
        }
        ForwardVars {
            logits: self.mlp(t, lay.head_int, ivar),
            cont: self.mlp(t, lay.head_cont, cvar),
        }
    }

    /// Forward pass over a batch, split back into per-graph outputs.
    pub fn predict_batch(&self, batch: &GraphBatch) -> Vec<ModelOutput> {
        let mut tape = Tape::new(&self.params);
        let out = self.forward(&mut tape, batch);
        let logits = tape.value(out.logits);
        let cont = tape.value(out.cont);
        (0..batch.num_graphs())
            .map(|g| {
                let (a, b) = (batch.ivar_offsets[g], batch.ivar_offsets[g + 1]);
                let (c, d) = (batch.cvar_offsets[g], batch.cvar_offsets[g + 1]);
                ModelOutput {
                    int_logits: logits.slice(ndarray::s![a..b, ..]).to_owned(),
                    cont_values: cont.slice(ndarray::s![c..d, 0]).to_vec(),
                }
            })
            .collect()
    }

    pub fn predict(&self, graphs: &[AugmentedGraph<'_>]) -> Vec<ModelOutput> {
        self.predict_batch(&GraphBatch::new(graphs))
    }

    pub fn to_checkpoint(&self, train_state: Option<TrainState>) -> Checkpoint {
        let params = self
            .names
            .iter()
            .zip(&self.params)
            .map(|(n, p)| {
                let bytes: Vec<u8> = p.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
                (
                    n.clone(),
                    ParamBlob {
                        shape: vec![p.nrows(), p.ncols()],
                        data: B64.encode(bytes),
                    },
                )
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            config: self.config.clone(),
            seed: self.seed,
            params,
            train_state,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(FmipError::Model(format!(
                "unsupported checkpoint version {:?} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let mut model = Self::init(ck.config.clone(), ck.seed)?;
        if ck.params.len() != model.names.len() {
            return Err(FmipError::Model(format!(
                "checkpoint has {} parameter arrays, config needs {}",
                ck.params.len(),
                model.names.len()
            )));
        }
        for (name, p) in model.names.iter().zip(model.params.iter_mut()) {
            let blob = ck
                .params
                .get(name)
                .ok_or_else(|| FmipError::Model(format!("checkpoint is missing parameter {name}")))?;
            if blob.shape != [p.nrows(), p.ncols()] {
                return Err(FmipError::Model(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    blob.shape,
                    [p.nrows(), p.ncols()]
                )));
            }
            let values = decode_f32(&blob.data, p.len()).map_err(|m| FmipError::Model(format!("parameter {name}: {m}")))?;
            for (dst, v) in p.iter_mut().zip(values) {
                *dst = v;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path, train_state: Option<TrainState>) -> Result<()> {
        self.to_checkpoint(train_state).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub(crate) fn decode_f32(data: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(data).map_err(|e| format!("bad base64: {e}"))?;
    if bytes.len() != 4 * expected {
        return Err(format!("{} bytes for {expected} f32 values", bytes.len()));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

pub(crate) fn encode_f64(values: &[f64]) -> String {
    B64.encode(values.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>())
}

pub(crate) fn decode_f64(data: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let bytes = B64.decode(data).map_err(|e| format!("bad base64: {e}"))?;
    if bytes.len() != 8 * expected {
        return Err(format!("{} bytes for {expected} f64 values", bytes.len()));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlob {
    pub shape: Vec<usize>,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub params: BTreeMap<String, ParamBlob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_state: Option<TrainState>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes via a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        std::io::Write::write_all(&mut tmp, self.to_json().as_bytes())?;
        tmp.persist(path).map_err(|e| FmipError::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{attach_state, encode, SolutionState};
    use crate::milp::{toy_instance, Coef, MilpInstance};

    fn small() -> ModelConfig {
        ModelConfig {
            layers: 2,
            hidden: 8,
            int_categories: 6,
            ..Default::default()
        }
    }

    #[test]
    fn time_embedding_basics() {
        let e = time_embedding(0.0, 8);
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let sched = crate::flow::Schedule::cosine(30).unwrap();
        let embs: Vec<_> = sched.times.iter().map(|&t| time_embedding(t, 64)).collect();
        for i in 0..embs.len() {
            for j in i + 1..embs.len() {
                assert_ne!(embs[i], embs[j]);
            }
        }
    }

    #[test]
    fn init_deterministic_and_bounded() {
        let a = Model::init(small(), 1).unwrap();
        let b = Model::init(small(), 1).unwrap();
        let c = Model::init(small(), 2).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
        for (name, p) in a.names.iter().zip(&a.params) {
            assert!(p.iter().all(|v| v.is_finite() && v.abs() <= 1.0), "{name}");
        }
    }

    #[test]
    fn toy_shapes_and_softmax() {
        let inst = toy_instance();
        let g = encode(&inst, true);
        let model = Model::init(small(), 3).unwrap();
        let a = attach_state(
            &g,
            &SolutionState {
                d: vec![2],
                c: vec![0.5],
                t: 0.3,
            },
        )
        .unwrap();
        let out = &model.predict(&[a])[0];
        assert_eq!(out.int_logits.dim(), (1, 6));
        assert_eq!(out.cont_values.len(), 1);
        for row in out.int_probs().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn no_integer_variables() {
        let inst = MilpInstance::new(
            "lp",
            0,
            1,
            vec![1.0, 1.0],
            vec![Coef { row: 0, col: 0, val: 1.0 }],
            vec![1.0],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap();
        let g = encode(&inst, true);
        let model = Model::init(
            ModelConfig {
                layers: 1,
                hidden: 4,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let a = attach_state(
            &g,
            &SolutionState {
                d: vec![],
                c: vec![0.0, 0.0],
                t: 0.1,
            },
        )
        .unwrap();
        let out = &model.predict(&[a])[0];
        assert_eq!(out.int_logits.dim(), (0, 2));
        assert_eq!(out.cont_values.len(), 2);
    }

    #[test]
    fn batching_matches_single() {
        let inst = toy_instance();
        let g = encode(&inst, true);
        let model = Model::init(small(), 5).unwrap();
        let a = attach_state(
            &g,
            &SolutionState {
                d: vec![1],
                c: vec![0.2],
                t: 0.1,
            },
        )
        .unwrap();
        let b = attach_state(
            &g,
            &SolutionState {
                d: vec![4],
                c: vec![2.0],
                t: 0.8,
            },
        )
        .unwrap();
        let both = model.predict(&[a.clone(), b.clone()]);
        let one = model.predict(&[b]);
        let first = model.predict(&[a]);
        for (x, y) in [(&both[0], &first[0]), (&both[1], &one[0])] {
            assert!((&x.int_logits - &y.int_logits).iter().all(|d| d.abs() < 1e-12));
            assert!((x.cont_values[0] - y.cont_values[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn biconv_identity_with_zero_output_path() {
        let mut model = Model::init(small(), 9).unwrap();
        let conv = model.layout.layers[0].bi_int.clone();
        for l in [conv.o1, conv.o2] {
            model.params[l.w].fill(0.0);
            model.params[l.b].fill(0.0);
        }
        let params = model.params.clone();
        let mut t = Tape::new(&params);
        let target = t.input(Array2::from_shape_fn((3, 8), |(i, j)| (i * 8 + j) as f64 * 0.1));
        let src = t.input(Array2::ones((2, 8)));
        let coef = t.input(Array2::ones((1, 1)));
        let tgt: Rc<[usize]> = Rc::from(vec![0]);
        let sidx: Rc<[usize]> = Rc::from(vec![1]);
        let out = model.conv(&mut t, &conv, target, 3, &[(src, &tgt, &sidx, coef, conv.s1)]);
        assert_eq!(t.value(out), t.value(target));
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = Model::init(small(), 4).unwrap();
        let ck = model.to_checkpoint(None);
        let json = ck.to_json();
        let back = Model::from_checkpoint(&Checkpoint::from_json(&json).unwrap()).unwrap();
        assert_eq!(back.params, model.params);
        assert_eq!(back.to_checkpoint(None).to_json(), json);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path, None).unwrap();
        assert_eq!(Model::load(&path).unwrap().params, model.params);
        let mut bad = ck.clone();
        bad.version = "other".into();
        assert!(Model::from_checkpoint(&bad).is_err());
    }
}
