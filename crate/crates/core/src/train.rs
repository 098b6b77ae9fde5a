//! Training loop: category-aware up-sampling, mini-batch Adam on the MSE
//! loss, per-epoch evaluation, and the model-family ablation grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{self, Pnr};
use crate::model::{
    forward_batch, score_graphs, EncodedGraph, Mode, ModelConfig, ModelParams, ParamVars,
};
use crate::tensor::{Adam, AdamConfig, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub graph: EncodedGraph,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub upsample: bool,
    /// Graphs per tape inside a batch. Fixed independently of `threads` so
    /// results do not depend on the machine.
    pub micro_batch: usize,
    /// Worker threads; 0 picks the available parallelism.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            epochs: 25,
            seed: 0,
            upsample: true,
            micro_batch: 8,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.batch_size == 0 || self.micro_batch == 0 {
            return Err(Error::Config(
                "batch_size and micro_batch must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.adam_eps <= 0.0
        {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn worker_threads(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// A category whose examples all carry one label; it is passed through
/// unchanged by [`upsample`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingClass {
    pub category: usize,
    pub present_label: u8,
    pub count: usize,
}

/// Balances labels within every category. `strata[i]` is `(category, label)`
/// of item `i`. Returns item indices: every original index once, plus
/// minority-label duplicates drawn with replacement, shuffled.
pub fn upsample_indices(strata: &[(usize, u8)], seed: u64) -> (Vec<usize>, Vec<MissingClass>) {
    let mut by_cat: BTreeMap<usize, [Vec<usize>; 2]> = BTreeMap::new();
    for (i, &(c, l)) in strata.iter().enumerate() {
        by_cat.entry(c).or_default()[usize::from(l.min(1))].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<usize> = (0..strata.len()).collect();
    let mut warnings = Vec::new();
    for (&cat, [neg, pos]) in &by_cat {
        if neg.is_empty() || pos.is_empty() {
            let (present_label, count) = if neg.is_empty() {
                (1, pos.len())
            } else {
                (0, neg.len())
            };
            warnings.push(MissingClass {
                category: cat,
                present_label,
                count,
            });
            continue;
        }
        let (minority, deficit) = if neg.len() < pos.len() {
            (neg, pos.len() - neg.len())
        } else {
            (pos, neg.len() - pos.len())
        };
        out.extend((0..deficit).map(|_| minority[rng.gen_range(0..minority.len())]));
    }
    out.shuffle(&mut rng);
    (out, warnings)
}

/// Owned-data form of [`upsample_indices`].
pub fn upsample(dataset: &[Example], seed: u64) -> (Vec<Example>, Vec<MissingClass>) {
    let strata: Vec<(usize, u8)> = dataset
        .iter()
        .map(|e| (e.graph.category, e.label))
        .collect();
    let (idx, warnings) = upsample_indices(&strata, seed);
    (
        idx.into_iter().map(|i| dataset[i].clone()).collect(),
        warnings,
    )
}

/// `(1/P) Σ (y_p − s_p)²`
pub fn mse_loss(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(s, y)| (y - s) * (y - s))
        .sum::<f64>()
        / scores.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub pnr: Pnr,
    pub auc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best eval AUC (initial params when
    /// no epoch ran).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub warnings: Vec<MissingClass>,
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss,pnr,auc\n");
    for e in log {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.loss, e.pnr.value(), e.auc);
    }
    s
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix-style combination; only needs to be deterministic and well spread
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loss contribution and gradients of one micro-batch. The loss is scaled by
/// `1 / batch_len` so that micro-batch gradients sum to the batch gradient.
fn micro_step(
    params: &ModelParams,
    config: &ModelConfig,
    examples: &[&Example],
    batch_len: usize,
    seed: u64,
) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, true);
    let graphs: Vec<&EncodedGraph> = examples.iter().map(|e| &e.graph).collect();
    let out = forward_batch(&mut tape, &vars, config, &graphs, Mode::Train { seed })?;
    let targets: Vec<f64> = examples.iter().map(|e| f64::from(e.label)).collect();
    let loss = tape.mse(out.scores, &targets)?;
    let loss = tape.scale(loss, examples.len() as f64 / batch_len as f64)?;
    let grads = tape.backward(loss)?;
    Ok((
        tape.value(loss).item(),
        vars.vars().into_iter().map(|v| grads.get(v)).collect(),
    ))
}

fn batch_step(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &[&Example],
    micro: usize,
    threads: usize,
    seed: u64,
) -> Result<(f64, Vec<Tensor>)> {
    let micros: Vec<&[&Example]> = batch.chunks(micro).collect();
    let run = |i: usize| {
        micro_step(
            params,
            config,
            micros[i],
            batch.len(),
            mix(seed, i as u64, 0),
        )
    };
    type Part = Result<(f64, Vec<Tensor>)>;
    let mut parts: Vec<Option<Part>> = (0..micros.len()).map(|_| None).collect();
    let threads = threads.clamp(1, micros.len());
    if threads == 1 {
        for (i, slot) in parts.iter_mut().enumerate() {
            *slot = Some(run(i));
        }
    } else {
        let per = micros.len().div_ceil(threads);
        std::thread::scope(|s| {
            for (w, slots) in parts.chunks_mut(per).enumerate() {
                let run = &run;
                s.spawn(move || {
                    for (j, slot) in slots.iter_mut().enumerate() {
                        *slot = Some(run(w * per + j));
                    }
                });
            }
        });
    }
    // reduce in micro-batch order
    let mut total_loss = 0.0;
    let mut total: Option<Vec<Tensor>> = None;
    for part in parts {
        let (loss, grads) = part.expect("micro-batch ran")?;
        total_loss += loss;
        match total.as_mut() {
            None => total = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    Ok((total_loss, total.unwrap_or_default()))
}

fn eval_metrics(
    params: &ModelParams,
    config: &ModelConfig,
    eval: &[Example],
    threads: usize,
) -> Result<(Pnr, f64)> {
    let labels: Vec<u8> = eval.iter().map(|e| e.label).collect();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if eval.is_empty() || pos == 0 || pos == labels.len() {
        return Ok((Pnr::AllTied, f64::NAN));
    }
    let graphs: Vec<EncodedGraph> = eval.iter().map(|e| e.graph.clone()).collect();
    let scores = score_graphs(params, config, &graphs, threads)?;
    Ok((
        metrics::pnr(&scores, &labels)?,
        metrics::auc(&scores, &labels)?,
    ))
}

/// Trains from a seeded initialization. Epochs are numbered from 1.
pub fn train(
    train_set: &[Example],
    eval_set: &[Example],
    config: &ModelConfig,
    train_config: &TrainConfig,
    table_sizes: &[usize],
    num_categories: usize,
) -> Result<TrainOutcome> {
    let params = ModelParams::init(config, table_sizes, num_categories, train_config.seed)?;
    train_from(params, train_set, eval_set, config, train_config)
}

/// Trains starting from `params`.
pub fn train_from(
    mut params: ModelParams,
    train_set: &[Example],
    eval_set: &[Example],
    config: &ModelConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    tc.validate()?;
    let pos = train_set.iter().filter(|e| e.label == 1).count();
    if pos == 0 || pos == train_set.len() {
        return Err(Error::SingleLabelDataset);
    }
    let threads = tc.worker_threads();
    let strata: Vec<(usize, u8)> = train_set
        .iter()
        .map(|e| (e.graph.category, e.label))
        .collect();
    let mut adam = Adam::new(tc.adam());
    let mut log = Vec::with_capacity(tc.epochs);
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut warnings = Vec::new();

    for epoch in 1..=tc.epochs {
        let epoch_seed = mix(tc.seed, epoch as u64, 1);
        let order = if tc.upsample {
            let (order, w) = upsample_indices(&strata, epoch_seed);
            if epoch == 1 {
                for m in &w {
                    log::warn!(
                        "category {} has only label {} ({} examples); not up-sampled",
                        m.category,
                        m.present_label,
                        m.count
                    );
                }
                warnings = w;
            }
            order
        } else {
            let mut order: Vec<usize> = (0..train_set.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
            order
        };

        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_step(
                &params,
                config,
                &batch,
                tc.micro_batch,
                threads,
                mix(epoch_seed, b as u64, 2),
            )?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += loss * batch.len() as f64;
            let mut refs = params.tensors_mut();
            adam.step(&mut refs, &grads)?;
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
        let loss = loss_sum / order.len() as f64;
        let (pnr, auc) = eval_metrics(&params, config, eval_set, threads)?;
        log::info!("epoch {epoch}: loss {loss:.6} eval PNR {pnr} AUC {auc:.4}");
        log.push(EpochLog {
            epoch,
            loss,
            pnr,
            auc,
        });
        // ties go to the later epoch; NaN AUC (no usable eval set) keeps the latest
        if auc.is_nan() || auc >= best.2 {
            best = (
                params.clone(),
                epoch,
                if auc.is_nan() { best.2 } else { auc },
            );
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        best_epoch: best.1,
        log,
        warnings,
    })
}

// ---- ablation ----

/// Test-set metrics of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub family: String,
    pub num_layers: usize,
    pub seed: u64,
    #[serde(with = "nonfinite::map")]
    pub values: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub family: String,
    pub num_layers: usize,
    pub runs: usize,
    /// metric name → (mean, sample standard deviation)
    #[serde(with = "nonfinite::pair_map")]
    pub stats: BTreeMap<String, (f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub families: Vec<AblationRow>,
    pub depth_sweep: Vec<AblationRow>,
    pub runs: Vec<RunMetrics>,
}

/// JSON has no infinities or NaN (PNR can be either), so those are written as
/// the strings `"inf"`, `"-inf"` and `"nan"`.
mod nonfinite {
    use std::collections::BTreeMap;

    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(x: f64) -> Repr {
        match x {
            x if x.is_finite() => Repr::Num(x),
            x if x.is_nan() => Repr::Text("nan".into()),
            x if x > 0.0 => Repr::Text("inf".into()),
            _ => Repr::Text("-inf".into()),
        }
    }

    fn from_repr<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::custom(format!("expected a number, got {t:?}"))),
            },
        }
    }

    pub mod map {
        use super::*;

        pub fn serialize<S: Serializer>(
            m: &BTreeMap<String, f64>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            s.collect_map(m.iter().map(|(k, &v)| (k, to_repr(v))))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<BTreeMap<String, f64>, D::Error> {
            BTreeMap::<String, Repr>::deserialize(d)?
                .into_iter()
                .map(|(k, v)| Ok((k, from_repr(v)?)))
                .collect()
        }
    }

    pub mod pair_map {
        use super::*;

        pub fn serialize<S: Serializer>(
            m: &BTreeMap<String, (f64, f64)>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            s.collect_map(m.iter().map(|(k, &(a, b))| (k, (to_repr(a), to_repr(b)))))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<BTreeMap<String, (f64, f64)>, D::Error> {
            BTreeMap::<String, (Repr, Repr)>::deserialize(d)?
                .into_iter()
                .map(|(k, (a, b))| Ok((k, (from_repr(a)?, from_repr(b)?))))
                .collect()
        }
    }
}

pub const ABLATION_METRICS: [&str; 8] = [
    "PNR",
    "AUC",
    "P_label0",
    "R_label0",
    "F1_label0",
    "P_label1",
    "R_label1",
    "F1_label1",
];

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(runs: &[RunMetrics]) -> AblationRow {
    let stats = ABLATION_METRICS
        .iter()
        .map(|m| {
            let vals: Vec<f64> = runs.iter().map(|r| r.values[*m]).collect();
            (m.to_string(), mean_std(&vals))
        })
        .collect();
    AblationRow {
        family: runs[0].family.clone(),
        num_layers: runs[0].num_layers,
        runs: runs.len(),
        stats,
    }
}

/// Trains one model and reports its test-set metrics.
pub fn train_and_evaluate(
    train_set: &[Example],
    eval_set: &[Example],
    test_set: &[Example],
    config: &ModelConfig,
    tc: &TrainConfig,
    table_sizes: &[usize],
    num_categories: usize,
) -> Result<RunMetrics> {
    let outcome = train(train_set, eval_set, config, tc, table_sizes, num_categories)?;
    let graphs: Vec<EncodedGraph> = test_set.iter().map(|e| e.graph.clone()).collect();
    let labels: Vec<u8> = test_set.iter().map(|e| e.label).collect();
    let scores = score_graphs(&outcome.params, config, &graphs, tc.worker_threads())?;
    let report = metrics::EvalReport::compute(&scores, &labels)?;
    Ok(RunMetrics {
        family: config.family(),
        num_layers: config.num_layers,
        seed: tc.seed,
        values: report.metrics().into_iter().collect(),
    })
}

pub struct AblationPlan<'a> {
    pub families: &'a [ModelConfig],
    pub seeds: &'a [u64],
    /// Layer counts for the depth sweep of `sweep_family`; empty to skip.
    pub depths: &'a [usize],
    pub sweep_family: &'a ModelConfig,
}

/// Trains every family for every seed, plus the depth sweep, and aggregates
/// test metrics into mean ± std rows.
pub fn run_ablation(
    splits: (&[Example], &[Example], &[Example]),
    plan: &AblationPlan<'_>,
    tc: &TrainConfig,
    table_sizes: &[usize],
    num_categories: usize,
) -> Result<AblationTable> {
    if plan.seeds.len() < 2 {
        return Err(Error::Config("an ablation needs at least two seeds".into()));
    }
    let (train_set, eval_set, test_set) = splits;
    let mut all_runs = Vec::new();
    let mut run_group = |config: &ModelConfig| -> Result<AblationRow> {
        let mut runs = Vec::with_capacity(plan.seeds.len());
        for &seed in plan.seeds {
            let tc = TrainConfig { seed, ..tc.clone() };
            log::info!("ablation: {config} seed {seed}");
            runs.push(train_and_evaluate(
                train_set,
                eval_set,
                test_set,
                config,
                &tc,
                table_sizes,
                num_categories,
            )?);
        }
        let row = summarize(&runs);
        all_runs.extend(runs);
        Ok(row)
    };
    let families = plan
        .families
        .iter()
        .map(&mut run_group)
        .collect::<Result<Vec<_>>>()?;
    let depth_sweep = plan
        .depths
        .iter()
        .map(|&k| {
            run_group(&ModelConfig {
                num_layers: k,
                ..plan.sweep_family.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable {
        families,
        depth_sweep,
        runs: all_runs,
    })
}

impl AblationTable {
    /// Plain-text table, one row per (family, K).
    pub fn render(&self) -> String {
        let mut s = String::new();
        let header = |s: &mut String| {
            let _ = write!(s, "{:<14} {:>3}", "model", "K");
            for m in ABLATION_METRICS {
                let _ = write!(s, " {:>17}", m);
            }
            s.push('\n');
        };
        let row = |s: &mut String, r: &AblationRow| {
            let _ = write!(s, "{:<14} {:>3}", r.family, r.num_layers);
            for m in ABLATION_METRICS {
                let (mean, std) = r.stats[m];
                let _ = write!(s, " {:>17}", format!("{mean:.4} ± {std:.4}"));
            }
            s.push('\n');
        };
        s.push_str("Model families\n");
        header(&mut s);
        for r in &self.families {
            row(&mut s, r);
        }
        if !self.depth_sweep.is_empty() {
            s.push_str("\nLayer-depth sweep\n");
            header(&mut s);
            for r in &self.depth_sweep {
                row(&mut s, r);
            }
        }
        s
    }

    /// Mean AUC of a family row, if present.
    pub fn mean_auc(&self, family: &str) -> Option<f64> {
        self.families
            .iter()
            .find(|r| r.family == family)
            .map(|r| r.stats["AUC"].0)
    }
}
