//! Graph attention (and GIN) quality model over layout graphs.

mod checkpoint;
mod forward;
mod layers;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::tensor::{Tape, Tensor, Var};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use forward::{encode_graph, forward_batch, score_graphs, EncodedGraph, ForwardOutput, Mode};
pub use layers::{gat_layer, gin_layer, EdgeIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Gat,
    Gin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    MeanPool,
    Virtual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Sigmoid,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub readout: Readout,
    pub use_category: bool,
    pub d: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub head: Head,
    /// Attention heads per GAT layer; head outputs are averaged.
    pub heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Gat,
            readout: Readout::Virtual,
            use_category: true,
            d: 64,
            num_layers: 5,
            dropout: 0.2,
            leaky_slope: 0.2,
            head: Head::Sigmoid,
            heads: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d == 0 {
            return bad("d must be positive");
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if self.heads == 0 {
            return bad("heads must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::BadProbability(self.dropout));
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite");
        }
        Ok(())
    }

    /// Table-style family label, e.g. `Virt-GAT`, `GIN-NC`.
    pub fn family(&self) -> String {
        let mut s = String::new();
        if self.readout == Readout::Virtual {
            s.push_str("Virt-");
        }
        s.push_str(match self.arch {
            Arch::Gat => "GAT",
            Arch::Gin => "GIN",
        });
        if !self.use_category {
            s.push_str("-NC");
        }
        s
    }

    /// Parses a family label back into a config, keeping the other fields of `base`.
    pub fn with_family(&self, family: &str) -> Result<ModelConfig> {
        let mut rest = family.trim();
        let mut cfg = self.clone();
        cfg.readout = match rest.strip_prefix("Virt-") {
            Some(r) => {
                rest = r;
                Readout::Virtual
            }
            None => Readout::MeanPool,
        };
        cfg.use_category = match rest.strip_suffix("-NC") {
            Some(r) => {
                rest = r;
                false
            }
            None => true,
        };
        cfg.arch = match rest {
            "GAT" => Arch::Gat,
            "GIN" => Arch::Gin,
            _ => return Err(Error::Config(format!("unknown model family `{family}`"))),
        };
        Ok(cfg)
    }

    /// The eight model families of the offline comparison table.
    pub fn all_families() -> [&'static str; 8] {
        [
            "GIN-NC",
            "GAT-NC",
            "Virt-GIN-NC",
            "Virt-GAT-NC",
            "GIN",
            "GAT",
            "Virt-GIN",
            "Virt-GAT",
        ]
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (d={}, K={})", self.family(), self.d, self.num_layers)
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gat" => Ok(Arch::Gat),
            "gin" => Ok(Arch::Gin),
            _ => Err(Error::Config(format!("unknown arch `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatHead {
    pub w1: Tensor,
    pub w2: Tensor,
    pub w3: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Gat(Vec<GatHead>),
    Gin {
        eps: Tensor,
        mlp0: Tensor,
        mlp1: Tensor,
    },
}

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// One `[table_size, d]` table per node feature, in schema order.
    pub feature_embeddings: Vec<Tensor>,
    /// `[1, d]`, the initial state of the virtual node.
    pub virtual_init: Tensor,
    pub layers: Vec<LayerParams>,
    /// `[num_categories, d]`; present only when the config uses categories.
    pub category_embeddings: Option<Tensor>,
    pub readout_w: Tensor,
    pub readout_b: Tensor,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], a: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

impl ModelParams {
    /// Seeded initialization. Linear maps use Glorot-uniform; embedding rows are
    /// scaled so that the sum over all features has unit variance per dimension;
    /// the readout starts at zero so the initial score is exactly 0.5.
    pub fn init(
        config: &ModelConfig,
        table_sizes: &[usize],
        num_categories: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb_a = (3.0 / table_sizes.len().max(1) as f64).sqrt();
        let feature_embeddings = table_sizes
            .iter()
            .map(|&n| uniform(&mut rng, &[n, d], emb_a))
            .collect();
        let virtual_init = uniform(&mut rng, &[1, d], emb_a);
        let glorot = (6.0 / (2 * d) as f64).sqrt();
        let glorot_w3 = (6.0 / (2 * d + 1) as f64).sqrt();
        let layers = (0..config.num_layers)
            .map(|_| match config.arch {
                Arch::Gat => LayerParams::Gat(
                    (0..config.heads)
                        .map(|_| GatHead {
                            w1: uniform(&mut rng, &[d, d], glorot),
                            w2: uniform(&mut rng, &[d, d], glorot),
                            w3: uniform(&mut rng, &[1, 2 * d], glorot_w3),
                        })
                        .collect(),
                ),
                Arch::Gin => LayerParams::Gin {
                    eps: Tensor::scalar(0.0),
                    mlp0: uniform(&mut rng, &[d, d], glorot),
                    mlp1: uniform(&mut rng, &[d, d], glorot),
                },
            })
            .collect();
        let category_embeddings = config.use_category.then(|| {
            uniform(
                &mut rng,
                &[num_categories.max(1), d],
                (3.0 / d as f64).sqrt(),
            )
        });
        Ok(ModelParams {
            feature_embeddings,
            virtual_init,
            layers,
            category_embeddings,
            readout_w: Tensor::zeros(&[1, d]),
            readout_b: Tensor::scalar(0.0),
        })
    }

    /// Parameter names in the canonical flattening order.
    pub fn names(&self, schema_features: &[String]) -> Vec<String> {
        let mut out: Vec<String> = schema_features
            .iter()
            .map(|f| format!("embed.{f}"))
            .collect();
        out.push("virtual_init".into());
        for (k, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Gat(heads) => {
                    for h in 0..heads.len() {
                        for w in ["w1", "w2", "w3"] {
                            out.push(format!("layer{k}.head{h}.{w}"));
                        }
                    }
                }
                LayerParams::Gin { .. } => {
                    for w in ["eps", "mlp0", "mlp1"] {
                        out.push(format!("layer{k}.{w}"));
                    }
                }
            }
        }
        if self.category_embeddings.is_some() {
            out.push("category".into());
        }
        out.push("readout.w".into());
        out.push("readout.b".into());
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.feature_embeddings.iter().collect();
        out.push(&self.virtual_init);
        for layer in &self.layers {
            match layer {
                LayerParams::Gat(heads) => {
                    for h in heads {
                        out.extend([&h.w1, &h.w2, &h.w3]);
                    }
                }
                LayerParams::Gin { eps, mlp0, mlp1 } => out.extend([eps, mlp0, mlp1]),
            }
        }
        out.extend(self.category_embeddings.as_ref());
        out.push(&self.readout_w);
        out.push(&self.readout_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.feature_embeddings.iter_mut().collect();
        out.push(&mut self.virtual_init);
        for layer in &mut self.layers {
            match layer {
                LayerParams::Gat(heads) => {
                    for h in heads {
                        out.extend([&mut h.w1, &mut h.w2, &mut h.w3]);
                    }
                }
                LayerParams::Gin { eps, mlp0, mlp1 } => out.extend([eps, mlp0, mlp1]),
            }
        }
        out.extend(self.category_embeddings.as_mut());
        out.push(&mut self.readout_w);
        out.push(&mut self.readout_b);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Rebuilds parameters from tensors listed in canonical order.
    pub fn from_tensors(
        config: &ModelConfig,
        num_features: usize,
        tensors: Vec<Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d;
        let mut it = tensors.into_iter();
        let mut next = |what: &str, shape: Option<&[usize]>| -> Result<Tensor> {
            let t = it
                .next()
                .ok_or_else(|| Error::Data(format!("checkpoint is missing `{what}`")))?;
            let ok = match shape {
                Some(s) => t.shape() == s,
                None => t.shape().len() == 2 && t.shape()[1] == d,
            };
            if !ok {
                return Err(Error::ShapeMismatch {
                    op: "checkpoint",
                    detail: format!("`{what}` has shape {:?}", t.shape()),
                });
            }
            Ok(t)
        };
        let feature_embeddings = (0..num_features)
            .map(|f| next(&format!("embedding {f}"), None))
            .collect::<Result<Vec<_>>>()?;
        let virtual_init = next("virtual_init", Some(&[1, d]))?;
        let mut layers = Vec::with_capacity(config.num_layers);
        for _ in 0..config.num_layers {
            layers.push(match config.arch {
                Arch::Gat => LayerParams::Gat(
                    (0..config.heads)
                        .map(|_| {
                            Ok(GatHead {
                                w1: next("w1", Some(&[d, d]))?,
                                w2: next("w2", Some(&[d, d]))?,
                                w3: next("w3", Some(&[1, 2 * d]))?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                ),
                Arch::Gin => LayerParams::Gin {
                    eps: next("eps", Some(&[1]))?,
                    mlp0: next("mlp0", Some(&[d, d]))?,
                    mlp1: next("mlp1", Some(&[d, d]))?,
                },
            });
        }
        let category_embeddings = if config.use_category {
            Some(next("category", None)?)
        } else {
            None
        };
        let readout_w = next("readout.w", Some(&[1, d]))?;
        let readout_b = next("readout.b", Some(&[1]))?;
        if it.next().is_some() {
            return Err(Error::Data("checkpoint has extra tensors".into()));
        }
        Ok(ModelParams {
            feature_embeddings,
            virtual_init,
            layers,
            category_embeddings,
            readout_w,
            readout_b,
        })
    }

    /// Number of embedding tables, i.e. node features.
    pub fn num_features(&self) -> usize {
        self.feature_embeddings.len()
    }
}

/// Parameters registered on a tape, mirroring [`ModelParams`].
pub struct ParamVars {
    pub feature_embeddings: Vec<Var>,
    pub virtual_init: Var,
    pub layers: Vec<LayerVars>,
    pub category_embeddings: Option<Var>,
    pub readout_w: Var,
    pub readout_b: Var,
}

pub enum LayerVars {
    Gat(Vec<[Var; 3]>),
    Gin { eps: Var, mlp0: Var, mlp1: Var },
}

impl ParamVars {
    /// Registers every tensor of `params` on `tape`. With `trainable` false the
    /// tensors are constants and no gradient bookkeeping happens.
    pub fn register(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Self {
        let mut reg = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let feature_embeddings = params.feature_embeddings.iter().map(&mut reg).collect();
        let virtual_init = reg(&params.virtual_init);
        let layers = params
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Gat(heads) => LayerVars::Gat(
                    heads
                        .iter()
                        .map(|h| [reg(&h.w1), reg(&h.w2), reg(&h.w3)])
                        .collect(),
                ),
                LayerParams::Gin { eps, mlp0, mlp1 } => LayerVars::Gin {
                    eps: reg(eps),
                    mlp0: reg(mlp0),
                    mlp1: reg(mlp1),
                },
            })
            .collect();
        let category_embeddings = params.category_embeddings.as_ref().map(&mut reg);
        let readout_w = reg(&params.readout_w);
        let readout_b = reg(&params.readout_b);
        ParamVars {
            feature_embeddings,
            virtual_init,
            layers,
            category_embeddings,
            readout_w,
            readout_b,
        }
    }

    /// Vars in the same canonical order as [`ModelParams::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.feature_embeddings.clone();
        out.push(self.virtual_init);
        for layer in &self.layers {
            match layer {
                LayerVars::Gat(heads) => heads.iter().for_each(|h| out.extend(h)),
                LayerVars::Gin { eps, mlp0, mlp1 } => out.extend([*eps, *mlp0, *mlp1]),
            }
        }
        out.extend(self.category_embeddings);
        out.push(self.readout_w);
        out.push(self.readout_b);
        out
    }
}

/// Convenience: initial parameters sized for `schema`.
pub fn init_for_schema(
    config: &ModelConfig,
    schema: &FeatureSchema,
    seed: u64,
) -> Result<ModelParams> {
    ModelParams::init(config, &schema.table_sizes(), schema.num_categories(), seed)
}

#[cfg(test)]
mod tests;
