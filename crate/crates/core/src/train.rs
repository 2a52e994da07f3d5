//! Training loop: conditional path sampling, batched loss on the tape,
//! AdamW with cosine learning-rate decay, resumable state.

use log::{debug, info};
use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;

use crate::error::{FmipError, Result};
use crate::flow::{sample_conditional, EPS_TRAIN};
use crate::gen::LabeledInstance;
use crate::graph::{attach_state, encode, GraphBatch, SolutionState, TripartiteGraph};
use crate::model::{decode_f64, encode_f64, Model, ModelConfig};
use crate::rng::SplitMix64;
use crate::tape::{Tape, Var};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Cosine,
    Constant,
}

/// Explicit batch size, or the largest size that fits the memory budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchSize {
    #[default]
    Auto,
    Fixed(usize),
}

impl Serialize for BatchSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BatchSize::Auto => s.serialize_str("auto"),
            BatchSize::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BatchSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(serde::de::Error::custom("batch_size must be positive")),
            Raw::Num(n) => Ok(BatchSize::Fixed(n)),
            Raw::Text(s) if s == "auto" => Ok(BatchSize::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("batch_size must be a number or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub batch_size: BatchSize,
    pub omega: f64,
    pub seed: u64,
    /// Tape memory budget for the automatic batch-size probe.
    pub memory_budget_mb: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 2e-4,
            weight_decay: 1e-4,
            lr_schedule: LrSchedule::Cosine,
            batch_size: BatchSize::Auto,
            omega: 1.0,
            seed: 0,
            memory_budget_mb: 512,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs >= 1 && self.learning_rate > 0.0 && self.weight_decay >= 0.0 && self.omega >= 0.0 && self.memory_budget_mb > 0;
        if ok {
            Ok(())
        } else {
            Err(FmipError::Config(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

/// Optimizer and progress state stored alongside a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub step: u64,
    pub batch_size: usize,
    pub config: TrainConfig,
    /// Adam moments as base64 little-endian `f64`.
    pub adam_m: BTreeMap<String, String>,
    pub adam_v: BTreeMap<String, String>,
    pub loss_curve: Vec<EpochRecord>,
}

struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    step: u64,
}

impl Adam {
    fn new(model: &Model) -> Self {
        let zeros = || model.params().iter().map(|p| Array2::zeros(p.raw_dim())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn from_state(model: &Model, st: &TrainState) -> Result<Self> {
        let load = |map: &BTreeMap<String, String>| -> Result<Vec<Array2<f64>>> {
            model
                .param_names()
                .iter()
                .zip(model.params())
                .map(|(name, p)| {
                    let data = map.get(name).ok_or_else(|| FmipError::Training(format!("optimizer state lacks {name}")))?;
                    let vals = decode_f64(data, p.len()).map_err(|m| FmipError::Training(format!("{name}: {m}")))?;
                    Ok(Array2::from_shape_vec(p.raw_dim(), vals).expect("shape checked by decode"))
                })
                .collect()
        };
        Ok(Self {
            m: load(&st.adam_m)?,
            v: load(&st.adam_v)?,
            step: st.step,
        })
    }

    fn export(&self, model: &Model) -> (BTreeMap<String, String>, BTreeMap<String, String>) {
        let dump = |arrs: &[Array2<f64>]| {
            model
                .param_names()
                .iter()
                .zip(arrs)
                .map(|(n, a)| (n.clone(), encode_f64(a.as_slice().expect("standard layout"))))
                .collect()
        };
        (dump(&self.m), dump(&self.v))
    }

    /// Decoupled weight decay; parameters are rounded to `f32` afterwards.
    fn update(&mut self, model: &mut Model, grads: &[Array2<f64>], lr: f64, wd: f64) {
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        for (((p, g), m), v) in model.params_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let upd = (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
                *p = (*p - lr * (upd + wd * *p)) as f32 as f64;
            });
        }
    }
}

pub fn learning_rate(cfg: &TrainConfig, step: u64, total_steps: u64) -> f64 {
    match cfg.lr_schedule {
        LrSchedule::Constant => cfg.learning_rate,
        LrSchedule::Cosine => {
            let frac = step as f64 / total_steps.max(1) as f64;
            0.5 * cfg.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
        }
    }
}

/// One labeled example prepared for training.
pub struct TrainItem {
    pub name: String,
    pub graph: TripartiteGraph,
    pub int_bound: u32,
    pub d1: Vec<usize>,
    pub c1: Vec<f64>,
}

impl TrainItem {
    pub fn new(li: &LabeledInstance, normalize: bool) -> Result<Self> {
        let inst = &li.instance;
        crate::error::check_len("label", inst.num_vars, li.label.values.len())?;
        let q = inst.num_int;
        let k = inst.int_bound as f64;
        Ok(Self {
            name: inst.name.clone(),
            graph: encode(inst, normalize),
            int_bound: inst.int_bound,
            d1: li.label.values[..q].iter().map(|v| v.round().clamp(0.0, k) as usize).collect(),
            c1: li.label.values[q..].to_vec(),
        })
    }
}

/// Records the batched training loss on `tape`; returns the scalar handle.
pub fn batch_loss(model: &Model, tape: &mut Tape, items: &[&TrainItem], states: &[SolutionState], omega: f64) -> Result<Var> {
    let graphs = items.iter().zip(states).map(|(it, s)| attach_state(&it.graph, s)).collect::<Result<Vec<_>>>()?;
    let batch = GraphBatch::new(&graphs);
    let out = model.forward(tape, &batch);
    let b = items.len() as f64;
    let (mut labels, mut wi, mut target, mut wc) = (vec![], vec![], vec![], vec![]);
    for (it, s) in items.iter().zip(states) {
        labels.extend_from_slice(&it.d1);
        wi.extend(std::iter::repeat_n(omega / b, it.d1.len()));
        target.extend_from_slice(&it.c1);
        wc.extend(std::iter::repeat_n(1.0 / ((1.0 - s.t) * b), it.c1.len()));
    }
    let ce = tape.weighted_ce(out.logits, labels, wi);
    let sq = tape.weighted_sq_err(out.cont, target, wc);
    Ok(tape.add(ce, sq))
}

/// Draws one conditional path sample per item at times `U(0, 1−ε)`.
pub fn sample_states(items: &[&TrainItem], rng: &mut SplitMix64) -> Vec<SolutionState> {
    items
        .iter()
        .map(|it| {
            let t = rng.uniform(0.0, 1.0 - EPS_TRAIN);
            sample_conditional(&it.d1, &it.c1, t, it.int_bound, rng)
        })
        .collect()
}

/// Loss value and parameter gradients for one batch.
pub fn loss_and_grads(model: &Model, items: &[&TrainItem], states: &[SolutionState], omega: f64) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut tape = Tape::new(model.params());
    let loss = batch_loss(model, &mut tape, items, states, omega)?;
    Ok((tape.value(loss)[[0, 0]], tape.backward(loss)))
}

/// Largest power-of-two batch (capped by the dataset size) whose recorded
/// forward/backward tape fits the memory budget.
pub fn probe_batch_size(model: &Model, items: &[TrainItem], budget_bytes: usize) -> usize {
    let mut best = 1;
    let mut b = 1;
    let mut rng = SplitMix64::new(0);
    while b <= items.len() {
        let refs: Vec<&TrainItem> = items.iter().take(b).collect();
        let states = sample_states(&refs, &mut rng);
        let mut tape = Tape::new(model.params());
        if batch_loss(model, &mut tape, &refs, &states, 1.0).is_err() {
            break;
        }
        // Values plus gradients of similar size.
        let bytes = 2 * tape.value_bytes();
        debug!("batch-size probe: {b} items need ~{} MiB", bytes >> 20);
        if bytes > budget_bytes {
            break;
        }
        best = b;
        b *= 2;
    }
    best
}

pub struct TrainOutcome {
    pub model: Model,
    pub state: TrainState,
}

/// Trains a fresh model.
pub fn train(data: &[LabeledInstance], model_cfg: ModelConfig, cfg: &TrainConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    let model = Model::init(model_cfg, cfg.seed)?;
    train_from(model, None, data, cfg, None, on_epoch)
}

/// Continues training `model` from `resume` (or from scratch) until
/// `cfg.epochs` epochs have completed, or stops early after epoch `until`.
pub fn train_from(
    mut model: Model,
    resume: Option<TrainState>,
    data: &[LabeledInstance],
    cfg: &TrainConfig,
    until: Option<usize>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(FmipError::Training("labeled dataset is empty".into()));
    }
    let cats = model.config.int_categories;
    for li in data {
        if li.instance.int_bound as usize + 1 != cats && li.instance.num_int > 0 {
            return Err(FmipError::Training(format!(
                "instance {} has {} integer categories but the model predicts {cats}",
                li.instance.name,
                li.instance.int_bound + 1
            )));
        }
    }
    let items = data.iter().map(|li| TrainItem::new(li, model.config.normalize)).collect::<Result<Vec<_>>>()?;

    let (mut adam, mut state) = match resume {
        Some(st) => (Adam::from_state(&model, &st)?, st),
        None => {
            let batch_size = match cfg.batch_size {
                BatchSize::Fixed(n) => n.min(items.len()),
                BatchSize::Auto => probe_batch_size(&model, &items, cfg.memory_budget_mb << 20),
            };
            info!("training with batch size {batch_size}");
            (
                Adam::new(&model),
                TrainState {
                    epoch: 0,
                    step: 0,
                    batch_size,
                    config: cfg.clone(),
                    adam_m: BTreeMap::new(),
                    adam_v: BTreeMap::new(),
                    loss_curve: vec![],
                },
            )
        }
    };
    let bs = state.batch_size.max(1);
    let steps_per_epoch = items.len().div_ceil(bs) as u64;
    let total_steps = steps_per_epoch * cfg.epochs as u64;

    for epoch in state.epoch..until.unwrap_or(cfg.epochs).min(cfg.epochs) {
        let mut rng = SplitMix64::stream(cfg.seed, epoch as u64 + 1);
        let mut order: Vec<usize> = (0..items.len()).collect();
        rng.shuffle(&mut order);
        let mut sum = 0.0;
        let mut lr = cfg.learning_rate;
        for chunk in order.chunks(bs) {
            let refs: Vec<&TrainItem> = chunk.iter().map(|&i| &items[i]).collect();
            let states = sample_states(&refs, &mut rng);
            let (loss, grads) = loss_and_grads(&model, &refs, &states, cfg.omega)?;
            if !loss.is_finite() {
                let names: Vec<&str> = refs.iter().map(|r| r.name.as_str()).collect();
                return Err(FmipError::Training(format!("non-finite loss {loss} at epoch {epoch} on batch {names:?}")));
            }
            lr = learning_rate(cfg, state.step, total_steps);
            adam.update(&mut model, &grads, lr, cfg.weight_decay);
            state.step += 1;
            sum += loss * refs.len() as f64;
        }
        let rec = EpochRecord {
            epoch: epoch + 1,
            mean_loss: sum / items.len() as f64,
            learning_rate: lr,
        };
        debug!("epoch {} loss {:.6}", rec.epoch, rec.mean_loss);
        on_epoch(&rec);
        state.loss_curve.push(rec);
        state.epoch = epoch + 1;
    }
    let (m, v) = adam.export(&model);
    state.adam_m = m;
    state.adam_v = v;
    state.config = cfg.clone();
    Ok(TrainOutcome { model, state })
}
