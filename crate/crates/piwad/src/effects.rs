//! Total-effect estimation.
//!
//! The dynamic total effect of a feature at value c is the Monte-Carlo
//! average, over generator samples with that feature overridden, of the
//! prediction change per raw unit when the feature steps from c upward. The
//! average total effect summarizes the curve two ways (endpoint slope and
//! grid mean), and the report contrasts both with the linear part's main
//! effect.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureTable;
use crate::encoders::EncoderKind;
use crate::error::{PiwadError, Result};
use crate::model::{PiwadModel, SampleInput};
use crate::util;
use crate::wgan::{self, GanModel};

/// Report-level effect settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct EffectConfig {
    /// Grid points per feature across its observed range.
    pub grid_points: usize,
    /// Monte-Carlo samples per grid point.
    pub mc_samples: usize,
    /// Probe step in raw units; None picks 1 raw unit, shrinking to
    /// range/gamma for sub-unit ranges (binary features always flip 0 to 1).
    pub step: Option<f64>,
    /// Clamp probe points at the observed maximum (sliding the window back);
    /// with clamping off, probes past the range are an error.
    pub clamp_probes: bool,
    pub seed: u64,
}

impl Default for EffectConfig {
    fn default() -> Self {
        EffectConfig {
            grid_points: 21,
            mc_samples: 512,
            step: None,
            clamp_probes: true,
            seed: 0,
        }
    }
}

/// A fully resolved per-feature effect query.
#[derive(Debug, Clone)]
pub struct EffectQuery {
    pub feature: usize,
    /// Ascending grid of raw feature values within the observed range.
    pub grid: Vec<f64>,
    /// Probe step in raw units.
    pub step: f64,
    pub mc_samples: usize,
    pub clamp_probes: bool,
    pub seed: u64,
}

/// One grid point of a dynamic total-effect curve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EffectCurvePoint {
    /// Feature value c.
    pub value: f64,
    /// Mean prediction change per raw unit.
    pub effect: f64,
    /// Monte-Carlo standard error of the mean.
    pub std_error: f64,
}

/// How to collapse a curve into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageMode {
    /// Difference of the endpoint effects over the grid span.
    EndpointSlope,
    /// Unweighted mean of the per-grid-point effects.
    GridMean,
}

/// Per-feature entry of an effect report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureEffect {
    pub feature: String,
    /// Average local slope of the linear component, when the encoder
    /// supports one.
    pub main_effect: Option<f64>,
    pub total_effect_grid_mean: f64,
    /// Endpoint-difference summary; None for degenerate (constant) ranges.
    pub total_effect_endpoint_slope: Option<f64>,
    /// Standard error of the grid-mean total effect.
    pub mean_std_error: f64,
    /// Sign disagreement between main and total effect with both magnitudes
    /// above the 2x standard-error noise floor.
    pub sign_flip: bool,
    pub binary: bool,
    pub step: f64,
    pub curve: Vec<EffectCurvePoint>,
}

/// Effects for every feature plus reproducibility metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectReport {
    pub mc_samples: usize,
    pub seed: u64,
    pub model_fingerprint: String,
    pub features: Vec<FeatureEffect>,
}

/// Default probe step for a feature.
pub fn default_step(model: &PiwadModel, feature: usize) -> f64 {
    let bins = &model.spec.features[feature];
    if bins.binary {
        return 1.0;
    }
    let range = bins.max - bins.min;
    if range > 0.0 && range < 1.0 {
        range / bins.intervals as f64
    } else {
        1.0
    }
}

/// Equally spaced grid over the feature's observed range (a single point for
/// constant features, the 0/1 pair for binary ones).
pub fn default_grid(model: &PiwadModel, feature: usize, points: usize) -> Vec<f64> {
    let bins = &model.spec.features[feature];
    if bins.binary {
        return vec![0.0, 1.0];
    }
    if bins.constant || points <= 1 {
        return vec![bins.min];
    }
    (0..points)
        .map(|i| bins.min + (i as f64 / (points - 1) as f64) * (bins.max - bins.min))
        .collect()
}

/// Monte-Carlo dynamic total-effect curve for one feature.
///
/// Each grid point draws its own synthetic batch from a seed-derived stream,
/// so points are independent and the whole curve is reproducible.
pub fn dynamic_total_effect(
    model: &PiwadModel,
    gan: &GanModel,
    query: &EffectQuery,
) -> Result<Vec<EffectCurvePoint>> {
    if gan.trained_iterations == 0 {
        return Err(PiwadError::Config(
            "the generator is untrained; train the WGAN before estimating effects".into(),
        ));
    }
    if query.mc_samples == 0 {
        return Err(PiwadError::Config("mc_samples must be >= 1".into()));
    }
    if query.step <= 0.0 {
        return Err(PiwadError::Config("probe step must be positive".into()));
    }
    if query.feature >= model.n_features() {
        return Err(PiwadError::Config(format!(
            "feature index {} out of range",
            query.feature
        )));
    }
    let bins = &model.spec.features[query.feature];
    let binary = bins.binary;

    let mut curve = Vec::with_capacity(query.grid.len());
    for (grid_index, &c) in query.grid.iter().enumerate() {
        if !binary && (c < bins.min - 1e-12 || c > bins.max + 1e-12) {
            return Err(PiwadError::Config(format!(
                "grid value {c} outside the observed range [{}, {}]",
                bins.min, bins.max
            )));
        }
        let (lo, hi) = if binary {
            (0.0, 1.0)
        } else {
            let mut hi = c + query.step;
            if hi > bins.max {
                if !query.clamp_probes {
                    return Err(PiwadError::Config(format!(
                        "probe {hi} beyond the observed maximum {} with clamping disabled",
                        bins.max
                    )));
                }
                hi = bins.max;
            }
            // Keep the window at full width where possible by sliding its
            // lower edge back; at the very top this measures the slope just
            // below the maximum.
            let lo = (hi - query.step).max(bins.min);
            if hi <= lo {
                return Err(PiwadError::Config(format!(
                    "degenerate probe window at {c} (feature range [{}, {}])",
                    bins.min, bins.max
                )));
            }
            (lo, hi)
        };
        let width = hi - lo;

        let mut rng = ChaCha8Rng::seed_from_u64(query.seed);
        rng.set_stream(((query.feature as u64) << 32) | grid_index as u64);
        let synthetic = wgan::sample_synthetic(gan, query.mc_samples, &mut rng)?;

        let mut diffs = Vec::with_capacity(query.mc_samples);
        let mut row = vec![0.0; model.n_features()];
        for (i, sample_row) in synthetic.rows.iter().enumerate() {
            row.copy_from_slice(sample_row);
            let embedding = synthetic.embeddings.as_ref().map(|e| e[i].as_slice());
            row[query.feature] = hi;
            let up = model.predict(&SampleInput {
                features: &row,
                embedding,
            })?;
            row[query.feature] = lo;
            let down = model.predict(&SampleInput {
                features: &row,
                embedding,
            })?;
            diffs.push((up - down) / width);
        }
        let effect = util::mean(&diffs);
        let std_error = if diffs.len() > 1 {
            util::sample_std(&diffs) / (diffs.len() as f64).sqrt()
        } else {
            0.0
        };
        curve.push(EffectCurvePoint {
            value: c,
            effect,
            std_error,
        });
    }
    Ok(curve)
}

/// Collapse a curve to a single average effect.
pub fn average_total_effect(curve: &[EffectCurvePoint], mode: AverageMode) -> Result<f64> {
    if curve.len() < 2 {
        return Err(PiwadError::Config(
            "average total effect needs at least 2 grid points".into(),
        ));
    }
    match mode {
        AverageMode::GridMean => {
            let effects: Vec<f64> = curve.iter().map(|p| p.effect).collect();
            Ok(util::mean(&effects))
        }
        AverageMode::EndpointSlope => {
            let first = curve.first().unwrap();
            let last = curve.last().unwrap();
            let span = last.value - first.value;
            if span == 0.0 {
                return Err(PiwadError::Config(
                    "endpoint average is undefined on a degenerate value range".into(),
                ));
            }
            Ok((last.effect - first.effect) / span)
        }
    }
}

/// Average local slope of the linear component per raw unit of feature `j`.
///
/// Identity encoding reads the weight directly; the ramp encoding aggregates
/// per-interval slopes weighted by interval width. Other encodings have no
/// per-unit linear reading.
pub fn main_effect(model: &PiwadModel, feature: usize) -> Result<f64> {
    if feature >= model.n_features() {
        return Err(PiwadError::Config(format!(
            "feature index {feature} out of range"
        )));
    }
    let bins = &model.spec.features[feature];
    if bins.constant {
        return Ok(0.0);
    }
    let weights = &model.params.get("linear.weight")?.value;
    match model.config.encoder {
        EncoderKind::SimpleLinear => Ok(weights[feature]),
        EncoderKind::Piecewise => {
            let offset = model.spec.block_offset(feature);
            let block = &weights[offset..offset + bins.intervals];
            Ok(block.iter().sum::<f64>() / (bins.max - bins.min))
        }
        other => Err(PiwadError::Config(format!(
            "main effect is undefined for the {other} encoder"
        ))),
    }
}

/// Build the full per-feature report: curves, both averages, main effects,
/// and the sign-divergence flags.
pub fn effect_report(
    model: &PiwadModel,
    gan: &GanModel,
    config: &EffectConfig,
) -> Result<EffectReport> {
    let mut features = Vec::with_capacity(model.n_features());
    for j in 0..model.n_features() {
        let bins = &model.spec.features[j];
        let name = model.feature_names[j].clone();
        let main = match main_effect(model, j) {
            Ok(v) => Some(v),
            Err(PiwadError::Config(_)) => None,
            Err(e) => return Err(e),
        };

        if bins.constant {
            features.push(FeatureEffect {
                feature: name,
                main_effect: main,
                total_effect_grid_mean: 0.0,
                total_effect_endpoint_slope: None,
                mean_std_error: 0.0,
                sign_flip: false,
                binary: false,
                step: 0.0,
                curve: vec![EffectCurvePoint {
                    value: bins.min,
                    effect: 0.0,
                    std_error: 0.0,
                }],
            });
            continue;
        }

        let step = config.step.unwrap_or_else(|| default_step(model, j));
        let query = EffectQuery {
            feature: j,
            grid: default_grid(model, j, config.grid_points),
            step,
            mc_samples: config.mc_samples,
            clamp_probes: config.clamp_probes,
            seed: util::derive_seed(config.seed, &format!("effect-{name}")),
        };
        let curve = dynamic_total_effect(model, gan, &query)?;
        let grid_mean = average_total_effect(&curve, AverageMode::GridMean)?;
        let endpoint = average_total_effect(&curve, AverageMode::EndpointSlope).ok();
        let mean_std_error = curve
            .iter()
            .map(|p| p.std_error * p.std_error)
            .sum::<f64>()
            .sqrt()
            / curve.len() as f64;

        let noise_floor = 2.0 * mean_std_error;
        let sign_flip = main
            .map(|m| {
                m.signum() != grid_mean.signum()
                    && m.abs() > noise_floor
                    && grid_mean.abs() > noise_floor
            })
            .unwrap_or(false);

        features.push(FeatureEffect {
            feature: name,
            main_effect: main,
            total_effect_grid_mean: grid_mean,
            total_effect_endpoint_slope: endpoint,
            mean_std_error,
            sign_flip,
            binary: bins.binary,
            step,
            curve,
        });
    }
    Ok(EffectReport {
        mc_samples: config.mc_samples,
        seed: config.seed,
        model_fingerprint: model.fingerprint(),
        features,
    })
}

/// Rescale effect magnitudes so the largest absolute grid-mean total effect
/// is 1 (the same factor applies to every summarized column).
pub fn normalize_report(report: &mut EffectReport) {
    let max_abs = report
        .features
        .iter()
        .map(|f| f.total_effect_grid_mean.abs())
        .fold(0.0f64, f64::max);
    if max_abs == 0.0 {
        return;
    }
    for f in &mut report.features {
        f.total_effect_grid_mean /= max_abs;
        if let Some(e) = &mut f.total_effect_endpoint_slope {
            *e /= max_abs;
        }
        if let Some(m) = &mut f.main_effect {
            *m /= max_abs;
        }
        f.mean_std_error /= max_abs;
    }
}
