//! The four-component predictor: piecewise linear part, attention-weighted
//! second-order part, MLP higher-order part, and an embedding head for
//! unstructured content, summed behind a ReLU.
//!
//! The tape-based batch forward drives training; the direct per-sample
//! functions drive prediction and effect estimation. Tests pin the two routes
//! to each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, NodeId, ParamStore, Tape};
use crate::data::{FeatureTable, NormStats};
use crate::encoders::{self, EncoderKind, Gamma, PiecewiseSpec};
use crate::error::{PiwadError, Result};

/// Which components contribute to the prediction. A disabled component
/// contributes exactly 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct ComponentToggles {
    pub piecewise: bool,
    pub second_order: bool,
    pub higher_order: bool,
    pub unstructured: bool,
    /// With the second-order component on but attention off, interaction
    /// terms are weighted uniformly instead of by learned scores.
    pub attention: bool,
}

impl Default for ComponentToggles {
    fn default() -> Self {
        ComponentToggles {
            piecewise: true,
            second_order: true,
            higher_order: true,
            unstructured: true,
            attention: true,
        }
    }
}

/// Architecture and initialization settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderKind,
    /// Intervals per feature for the piecewise/ordinal encodings.
    pub gamma: usize,
    pub toggles: ComponentToggles,
    /// Hidden layers in the higher-order MLP.
    pub hidden_layers: usize,
    /// Neurons per hidden layer.
    pub hidden_width: usize,
    /// Width of the attention scoring parameters; 1 keeps them scalar.
    pub attention_width: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderKind::Piecewise,
            gamma: 10,
            toggles: ComponentToggles::default(),
            hidden_layers: 3,
            hidden_width: 16,
            attention_width: 1,
            seed: 0,
        }
    }
}

/// One sample at prediction time: raw features plus the optional
/// precomputed content embedding.
#[derive(Debug, Clone, Copy)]
pub struct SampleInput<'a> {
    pub features: &'a [f64],
    pub embedding: Option<&'a [f64]>,
}

/// Per-component contributions before the ReLU head (0 for disabled parts).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ComponentOutputs {
    pub piecewise: f64,
    pub second_order: f64,
    pub higher_order: f64,
    pub unstructured: f64,
}

impl ComponentOutputs {
    pub fn total(&self) -> f64 {
        self.piecewise + self.second_order + self.higher_order + self.unstructured
    }
}

/// Second-order output with its attention map (row-major over ordered pairs,
/// entry `j * m + j2` weighting the product `x_j * x_j2`).
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// Nodes produced by one batch forward pass on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BatchForward {
    /// Nx1 predictions after the ReLU head.
    pub prediction: NodeId,
    pub piecewise: Option<NodeId>,
    pub second_order: Option<NodeId>,
    pub higher_order: Option<NodeId>,
    pub unstructured: Option<NodeId>,
}

/// The predictor: encoder spec, normalization stats, and parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiwadModel {
    pub config: ModelConfig,
    pub feature_names: Vec<String>,
    pub spec: PiecewiseSpec,
    pub norm: NormStats,
    /// Some(dim) iff the unstructured component is active.
    pub embedding_dim: Option<usize>,
    pub params: ParamStore,
}

fn uniform_init(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let r = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

impl PiwadModel {
    /// Initialize parameters for the given training table.
    ///
    /// The unstructured component activates only when both the toggle is set
    /// and the table carries embeddings.
    pub fn init(config: ModelConfig, table: &FeatureTable) -> Result<Self> {
        if config.hidden_layers == 0 || config.hidden_width == 0 {
            return Err(PiwadError::Config(
                "higher-order component needs at least one layer and one neuron".into(),
            ));
        }
        if config.attention_width == 0 {
            return Err(PiwadError::Config("attention width must be >= 1".into()));
        }
        let spec = encoders::fit_piecewise(table, &Gamma::Uniform(config.gamma))?;
        let norm = table.norm_stats();
        let embedding_dim = if config.toggles.unstructured {
            table.embedding_dim()
        } else {
            None
        };

        let m = table.n_features();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();

        let enc_width = spec.encoded_width(config.encoder);
        let w = uniform_init(&mut rng, enc_width, enc_width);
        params.insert("linear.weight", enc_width, 1, w)?;
        params.insert("linear.bias", 1, 1, vec![0.0])?;

        let h = config.attention_width;
        params.insert("attention.weight", 1, h, uniform_init(&mut rng, h, 1))?;
        params.insert("attention.bias", 1, h, vec![0.0; h])?;
        params.insert("attention.score", h, 1, uniform_init(&mut rng, h, h))?;
        params.insert("attention.output", 1, 1, uniform_init(&mut rng, 1, 1))?;

        let width = config.hidden_width;
        let mut fan_in = m;
        for l in 1..=config.hidden_layers {
            params.insert(
                &format!("deep.w{l}"),
                fan_in,
                width,
                uniform_init(&mut rng, fan_in * width, fan_in),
            )?;
            params.insert(&format!("deep.b{l}"), 1, width, vec![0.0; width])?;
            fan_in = width;
        }
        params.insert("deep.out", width, 1, uniform_init(&mut rng, width, width))?;

        if let Some(dim) = embedding_dim {
            params.insert("embed.head", dim, 1, uniform_init(&mut rng, dim, dim))?;
        }

        Ok(PiwadModel {
            config,
            feature_names: table.columns.clone(),
            spec,
            norm,
            embedding_dim,
            params,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn unstructured_active(&self) -> bool {
        self.config.toggles.unstructured && self.embedding_dim.is_some()
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(PiwadError::shape(
                "feature vector",
                format!("{}", self.n_features()),
                format!("{}", x.len()),
            ));
        }
        Ok(())
    }

    /// Interaction terms of one normalized sample: all ordered pairs
    /// including self-pairs, row-major.
    fn interaction_terms(&self, xn: &[f64]) -> Vec<f64> {
        let m = xn.len();
        let mut s = Vec::with_capacity(m * m);
        for &a in xn {
            for &b in xn {
                s.push(a * b);
            }
        }
        s
    }

    // ----- direct per-sample forward ---------------------------------------

    /// Linear component over the encoded features.
    pub fn forward_piecewise(&self, x: &[f64]) -> Result<f64> {
        self.check_features(x)?;
        let phi = encoders::encode(self.config.encoder, &self.spec, x)?;
        let w = self.params.get("linear.weight")?;
        let b = self.params.get("linear.bias")?.value[0];
        Ok(dot(&phi, &w.value) + b)
    }

    /// Attention-weighted sum of pairwise products of normalized features.
    pub fn forward_attention(&self, x: &[f64]) -> Result<AttentionOutput> {
        self.check_features(x)?;
        let xn = self.norm.normalize(x);
        let s = self.interaction_terms(&xn);
        let weights = self.attention_weights(&s)?;
        let w_out = self.params.get("attention.output")?.value[0];
        let value = w_out
            * s.iter()
                .zip(weights.iter())
                .map(|(si, ai)| si * ai)
                .sum::<f64>();
        Ok(AttentionOutput { value, weights })
    }

    fn attention_weights(&self, s: &[f64]) -> Result<Vec<f64>> {
        let p = s.len();
        if !self.config.toggles.attention {
            return Ok(vec![1.0 / p as f64; p]);
        }
        let w = &self.params.get("attention.weight")?.value;
        let b = &self.params.get("attention.bias")?.value;
        let hv = &self.params.get("attention.score")?.value;
        let h = w.len();
        let mut scores = Vec::with_capacity(p);
        for &si in s {
            let mut score = 0.0;
            for k in 0..h {
                score += (w[k] * si + b[k]).tanh() * hv[k];
            }
            scores.push(score);
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = scores.iter().map(|u| (u - max).exp()).collect();
        let denom: f64 = weights.iter().sum();
        for a in &mut weights {
            *a /= denom;
        }
        Ok(weights)
    }

    /// MLP over normalized features.
    pub fn forward_higher(&self, x: &[f64]) -> Result<f64> {
        self.check_features(x)?;
        let mut act = self.norm.normalize(x);
        let width = self.config.hidden_width;
        for l in 1..=self.config.hidden_layers {
            let w = self.params.get(&format!("deep.w{l}"))?;
            let b = &self.params.get(&format!("deep.b{l}"))?.value;
            let mut next = vec![0.0; width];
            for (i, &a) in act.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &w.value[i * width..(i + 1) * width];
                for (n, &wij) in next.iter_mut().zip(row.iter()) {
                    *n += a * wij;
                }
            }
            for (n, &bj) in next.iter_mut().zip(b.iter()) {
                *n = (*n + bj).max(0.0);
            }
            act = next;
        }
        let out = &self.params.get("deep.out")?.value;
        Ok(dot(&act, out))
    }

    /// Learned head over a precomputed content embedding.
    pub fn forward_embed(&self, e: &[f64]) -> Result<f64> {
        let dim = self
            .embedding_dim
            .ok_or_else(|| PiwadError::Config("unstructured component is not active".into()))?;
        if e.len() != dim {
            return Err(PiwadError::shape(
                "embedding",
                format!("{dim}"),
                format!("{}", e.len()),
            ));
        }
        let head = &self.params.get("embed.head")?.value;
        Ok(dot(e, head))
    }

    /// All component contributions for one sample (0 for disabled parts).
    pub fn component_outputs(&self, sample: &SampleInput) -> Result<ComponentOutputs> {
        let t = &self.config.toggles;
        let mut out = ComponentOutputs::default();
        if t.piecewise {
            out.piecewise = self.forward_piecewise(sample.features)?;
        }
        if t.second_order {
            out.second_order = self.forward_attention(sample.features)?.value;
        }
        if t.higher_order {
            out.higher_order = self.forward_higher(sample.features)?;
        }
        if self.unstructured_active() {
            let e = sample.embedding.ok_or_else(|| {
                PiwadError::Data("sample is missing the embedding this model requires".into())
            })?;
            out.unstructured = self.forward_embed(e)?;
        } else if sample.embedding.is_some() {
            return Err(PiwadError::Data(
                "sample carries an embedding but the model has no unstructured component".into(),
            ));
        }
        Ok(out)
    }

    /// Non-negative prediction: ReLU over the summed components.
    pub fn predict(&self, sample: &SampleInput) -> Result<f64> {
        Ok(self.component_outputs(sample)?.total().max(0.0))
    }

    pub fn predict_batch(
        &self,
        rows: &[Vec<f64>],
        embeddings: Option<&[Vec<f64>]>,
    ) -> Result<Vec<f64>> {
        rows.iter()
            .enumerate()
            .map(|(i, row)| {
                let embedding = embeddings.map(|e| e[i].as_slice());
                self.predict(&SampleInput {
                    features: row,
                    embedding,
                })
            })
            .collect()
    }

    // ----- tape forward (training) -----------------------------------------

    /// Batch forward pass on a tape with parameters bound as leaves, for
    /// gradient-based training.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        bindings: &Bindings,
        rows: &[Vec<f64>],
        embeddings: Option<&[Vec<f64>]>,
    ) -> Result<BatchForward> {
        let n = rows.len();
        if n == 0 {
            return Err(PiwadError::Config("empty batch".into()));
        }
        for row in rows {
            self.check_features(row)?;
        }
        let m = self.n_features();
        let t = &self.config.toggles;

        let mut parts: Vec<NodeId> = Vec::new();
        let mut fwd = BatchForward {
            prediction: NodeId(usize::MAX),
            piecewise: None,
            second_order: None,
            higher_order: None,
            unstructured: None,
        };

        if t.piecewise {
            let width = self.spec.encoded_width(self.config.encoder);
            let mut phi = Vec::with_capacity(n * width);
            for row in rows {
                phi.extend(encoders::encode(self.config.encoder, &self.spec, row)?);
            }
            let phi_node = tape.leaf(n, width, phi);
            let wx = tape.matmul(phi_node, bindings.node("linear.weight"));
            let y = tape.add_scalar(wx, bindings.node("linear.bias"));
            fwd.piecewise = Some(y);
            parts.push(y);
        }

        let normalized: Vec<Vec<f64>> = rows.iter().map(|r| self.norm.normalize(r)).collect();

        if t.second_order {
            let p = m * m;
            let mut s_data = Vec::with_capacity(n * p);
            for xn in &normalized {
                s_data.extend(self.interaction_terms(xn));
            }
            let s = tape.leaf(n, p, s_data);
            let sums = if t.attention {
                let s_col = tape.reshape(s, n * p, 1);
                let pre = tape.matmul(s_col, bindings.node("attention.weight"));
                let pre_b = tape.add_row(pre, bindings.node("attention.bias"));
                let u = tape.tanh(pre_b);
                let score_col = tape.matmul(u, bindings.node("attention.score"));
                let scores = tape.reshape(score_col, n, p);
                let a = tape.row_softmax(scores);
                let weighted = tape.mul(a, s);
                tape.row_sum(weighted)
            } else {
                let total = tape.row_sum(s);
                tape.mul_const(total, 1.0 / p as f64)
            };
            let y = tape.scale(bindings.node("attention.output"), sums);
            fwd.second_order = Some(y);
            parts.push(y);
        }

        if t.higher_order {
            let mut flat = Vec::with_capacity(n * m);
            for xn in &normalized {
                flat.extend_from_slice(xn);
            }
            let mut act = tape.leaf(n, m, flat);
            for l in 1..=self.config.hidden_layers {
                let wx = tape.matmul(act, bindings.node(&format!("deep.w{l}")));
                let pre = tape.add_row(wx, bindings.node(&format!("deep.b{l}")));
                act = tape.relu(pre);
            }
            let y = tape.matmul(act, bindings.node("deep.out"));
            fwd.higher_order = Some(y);
            parts.push(y);
        }

        if self.unstructured_active() {
            let dim = self.embedding_dim.unwrap();
            let embeddings = embeddings.ok_or_else(|| {
                PiwadError::Data("batch is missing the embeddings this model requires".into())
            })?;
            if embeddings.len() != n {
                return Err(PiwadError::shape(
                    "batch embeddings",
                    format!("{n} rows"),
                    format!("{} rows", embeddings.len()),
                ));
            }
            let mut flat = Vec::with_capacity(n * dim);
            for e in embeddings {
                if e.len() != dim {
                    return Err(PiwadError::shape(
                        "embedding",
                        format!("{dim}"),
                        format!("{}", e.len()),
                    ));
                }
                flat.extend_from_slice(e);
            }
            let emb = tape.leaf(n, dim, flat);
            let y = tape.matmul(emb, bindings.node("embed.head"));
            fwd.unstructured = Some(y);
            parts.push(y);
        }

        let summed = match parts.split_first() {
            Some((first, rest)) => rest.iter().fold(*first, |acc, part| tape.add(acc, *part)),
            None => tape.fill(n, 1, 0.0),
        };
        fwd.prediction = tape.relu(summed);
        Ok(fwd)
    }

    /// Fingerprint of the full serialized model, for report metadata.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("model serialization cannot fail");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hex::encode(&hasher.finalize()[..8])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
