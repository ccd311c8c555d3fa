//! Predictor training, regression metrics, cross validation, and the
//! component/encoder ablation matrix.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::AdamParams;
use crate::data::FeatureTable;
use crate::effects::EffectConfig;
use crate::encoders::EncoderKind;
use crate::error::{PiwadError, Result};
use crate::model::{ModelConfig, PiwadModel};
use crate::util;
use crate::wgan::GanConfig;

/// Full run configuration: training loop, model, GAN, and effect settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Early-stop tolerance on the validation-loss change.
    pub epsilon: f64,
    /// Epochs that must complete before the stop rule may fire. 1 gives the
    /// literal rule, whose zero-initialized baseline can stop a barely
    /// trained model on the first epoch.
    pub min_epochs: usize,
    pub adam: AdamParams,
    /// Master seed; subsystem seeds derive from it.
    pub seed: u64,
    pub model: ModelConfig,
    pub gan: GanConfig,
    pub effects: EffectConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            batch_size: 64,
            epsilon: 0.1,
            min_epochs: 5,
            adam: AdamParams::default(),
            seed: 0,
            model: ModelConfig::default(),
            gan: GanConfig::default(),
            effects: EffectConfig::default(),
        }
    }
}

/// The validation-loss stop rule: a zero-initialized baseline, updated to
/// the latest loss each epoch; training stops once the absolute change
/// drops to the tolerance (and the minimum epoch count has passed).
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    baseline: f64,
    epsilon: f64,
    min_epochs: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(epsilon: f64, min_epochs: usize) -> Self {
        EarlyStopping {
            baseline: 0.0,
            epsilon,
            min_epochs,
            epoch: 0,
        }
    }

    /// Feed one epoch's validation loss; true means stop after this epoch.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        self.epoch += 1;
        let delta = (val_loss - self.baseline).abs();
        self.baseline = val_loss;
        delta <= self.epsilon && self.epoch >= self.min_epochs
    }
}

/// Per-epoch loss record.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub val: f64,
}

/// Train the predictor with mini-batch MSE and the validation stop rule.
/// Returns the model as of the stopping epoch plus the loss history.
pub fn train(
    config: &TrainConfig,
    train_table: &FeatureTable,
    val_table: &FeatureTable,
) -> Result<(PiwadModel, Vec<EpochLoss>)> {
    if config.batch_size == 0 {
        return Err(PiwadError::Config("batch size must be >= 1".into()));
    }
    if config.epsilon <= 0.0 {
        return Err(PiwadError::Config("epsilon must be positive".into()));
    }
    if val_table.n_rows() == 0 {
        return Err(PiwadError::Data("validation table is empty".into()));
    }
    if train_table.columns != val_table.columns {
        return Err(PiwadError::Data(
            "training and validation tables have different columns".into(),
        ));
    }
    let targets = train_table
        .target
        .as_ref()
        .ok_or_else(|| PiwadError::Data("training table has no target".into()))?;
    let val_targets = val_table
        .target
        .as_ref()
        .ok_or_else(|| PiwadError::Data("validation table has no target".into()))?;

    let mut model = PiwadModel::init(config.model.clone(), train_table)?;
    let mut history = Vec::new();
    let mut stopper = EarlyStopping::new(config.epsilon, config.min_epochs);
    let n = train_table.n_rows();

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(util::derive_seed(
            config.seed,
            &format!("shuffle-epoch-{epoch}"),
        ));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size).enumerate() {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| train_table.rows[i].clone()).collect();
            let batch_targets: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            let embeddings: Option<Vec<Vec<f64>>> = train_table
                .embeddings
                .as_ref()
                .map(|e| chunk.iter().map(|&i| e[i].clone()).collect());

            let mut tape = crate::autodiff::Tape::new();
            let bindings = model.params.bind(&mut tape);
            let fwd = model.forward_batch(&mut tape, &bindings, &rows, embeddings.as_deref())?;
            let target_node = tape.leaf(batch_targets.len(), 1, batch_targets);
            let loss = tape.mse(fwd.prediction, target_node);
            let loss_value = tape.scalar_value(loss);
            if !loss_value.is_finite() {
                return Err(PiwadError::Numeric(format!(
                    "training loss became {loss_value} at epoch {epoch}, batch {batch_index}"
                )));
            }
            loss_sum += loss_value * chunk.len() as f64;
            let grads = bindings.gradients(&mut tape, loss)?;
            model.params.adam_step(&grads, &config.adam)?;
        }
        let train_loss = loss_sum / n as f64;

        let val_preds =
            model.predict_batch(&val_table.rows, val_table.embeddings.as_deref())?;
        let val_loss = val_preds
            .iter()
            .zip(val_targets.iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / val_preds.len() as f64;
        if !val_loss.is_finite() {
            return Err(PiwadError::Numeric(format!(
                "validation loss became {val_loss} at epoch {epoch}"
            )));
        }

        history.push(EpochLoss {
            epoch,
            train: train_loss,
            val: val_loss,
        });
        if stopper.observe(val_loss) {
            break;
        }
    }

    Ok((model, history))
}

/// The four regression metrics over paired predictions and targets.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct MetricSet {
    pub mse: f64,
    pub mae: f64,
    pub msle: f64,
    pub male: f64,
}

/// Mean squared/absolute error plus their log1p counterparts.
pub fn metrics(predictions: &[f64], targets: &[f64]) -> Result<MetricSet> {
    if predictions.len() != targets.len() {
        return Err(PiwadError::shape(
            "metrics",
            format!("{} targets", targets.len()),
            format!("{} predictions", predictions.len()),
        ));
    }
    if predictions.is_empty() {
        return Err(PiwadError::Config("metrics need at least one pair".into()));
    }
    let n = predictions.len() as f64;
    let mut out = MetricSet::default();
    for (&p, &t) in predictions.iter().zip(targets.iter()) {
        if p < 0.0 || t < 0.0 {
            return Err(PiwadError::Data(format!(
                "metrics need non-negative values, got prediction {p}, target {t}"
            )));
        }
        let d = t - p;
        out.mse += d * d;
        out.mae += d.abs();
        let ld = (1.0 + t).ln() - (1.0 + p).ln();
        out.msle += ld * ld;
        out.male += ld.abs();
    }
    out.mse /= n;
    out.mae /= n;
    out.msle /= n;
    out.male /= n;
    Ok(out)
}

/// Cross-validation outcome: per-fold metrics plus their mean and sample
/// standard deviation.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub per_fold: Vec<MetricSet>,
    pub mean: MetricSet,
    pub std: MetricSet,
}

/// Rotating k-fold evaluation: fold i tests, fold i+1 validates, the rest
/// train.
pub fn cross_validate(config: &TrainConfig, table: &FeatureTable, folds: usize) -> Result<CvReport> {
    if folds < 3 {
        return Err(PiwadError::Config(format!(
            "cross validation needs >= 3 folds, got {folds}"
        )));
    }
    if folds > table.n_rows() {
        return Err(PiwadError::Config(format!(
            "fold count {folds} exceeds row count {}",
            table.n_rows()
        )));
    }
    let chunks = fold_indices(table.n_rows(), folds, util::derive_seed(config.seed, "cv-folds"));

    let mut per_fold = Vec::with_capacity(folds);
    for i in 0..folds {
        let test_idx = &chunks[i];
        let val_idx = &chunks[(i + 1) % folds];
        let train_idx: Vec<usize> = (0..folds)
            .filter(|&f| f != i && f != (i + 1) % folds)
            .flat_map(|f| chunks[f].iter().copied())
            .collect();

        let mut fold_config = config.clone();
        fold_config.seed = util::derive_seed(config.seed, &format!("cv-fold-{i}"));
        fold_config.model.seed = util::derive_seed(fold_config.seed, "model-init");

        let train_table = table.subset(&train_idx);
        let val_table = table.subset(val_idx);
        let test_table = table.subset(test_idx);
        let (model, _) = train(&fold_config, &train_table, &val_table)?;
        let preds = model.predict_batch(&test_table.rows, test_table.embeddings.as_deref())?;
        per_fold.push(metrics(
            &preds,
            test_table
                .target
                .as_ref()
                .ok_or_else(|| PiwadError::Data("test fold has no target".into()))?,
        )?);
    }

    let agg = |f: fn(&MetricSet) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = per_fold.iter().map(f).collect();
        (util::mean(&vals), util::sample_std(&vals))
    };
    let (mse_m, mse_s) = agg(|m| m.mse);
    let (mae_m, mae_s) = agg(|m| m.mae);
    let (msle_m, msle_s) = agg(|m| m.msle);
    let (male_m, male_s) = agg(|m| m.male);
    Ok(CvReport {
        per_fold,
        mean: MetricSet {
            mse: mse_m,
            mae: mae_m,
            msle: msle_m,
            male: male_m,
        },
        std: MetricSet {
            mse: mse_s,
            mae: mae_s,
            msle: msle_s,
            male: male_s,
        },
    })
}

/// Shuffled fold assignment; sizes differ by at most one.
fn fold_indices(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = n / folds;
    let extra = n % folds;
    let mut chunks = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        chunks.push(order[start..start + size].to_vec());
        start += size;
    }
    chunks
}

/// Deterministic train/validation/test split by fractions of shuffled rows.
pub fn holdout_split(
    table: &FeatureTable,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> (FeatureTable, FeatureTable, FeatureTable) {
    let n = table.n_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * val_fraction).round() as usize).max(1);
    let n_test = ((n as f64 * test_fraction).round() as usize).max(1);
    let test_idx = &order[..n_test];
    let val_idx = &order[n_test..n_test + n_val];
    let train_idx = &order[n_test + n_val..];
    (
        table.subset(train_idx),
        table.subset(val_idx),
        table.subset(test_idx),
    )
}

/// One ablation row: variant name and its held-out metrics.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub metrics: MetricSet,
}

/// The ablation variant names, base first.
pub fn ablation_variants() -> Vec<&'static str> {
    vec![
        "full",
        "without-unstructured",
        "without-piecewise",
        "without-second-order",
        "without-higher-order",
        "simple-linear-encoding",
        "ordinal-one-hot-10",
        "ordinal-one-hot-20",
        "ordinal-10",
        "ordinal-20",
        "without-attention",
    ]
}

/// Map a variant name onto the base configuration.
pub fn apply_variant(config: &TrainConfig, variant: &str) -> Result<TrainConfig> {
    let mut out = config.clone();
    match variant {
        "full" => {}
        "without-unstructured" => out.model.toggles.unstructured = false,
        "without-piecewise" => out.model.toggles.piecewise = false,
        "without-second-order" => out.model.toggles.second_order = false,
        "without-higher-order" => out.model.toggles.higher_order = false,
        "without-attention" => out.model.toggles.attention = false,
        "simple-linear-encoding" => out.model.encoder = EncoderKind::SimpleLinear,
        "ordinal-one-hot-10" => {
            out.model.encoder = EncoderKind::OrdinalOneHot;
            out.model.gamma = 10;
        }
        "ordinal-one-hot-20" => {
            out.model.encoder = EncoderKind::OrdinalOneHot;
            out.model.gamma = 20;
        }
        "ordinal-10" => {
            out.model.encoder = EncoderKind::Ordinal;
            out.model.gamma = 10;
        }
        "ordinal-20" => {
            out.model.encoder = EncoderKind::Ordinal;
            out.model.gamma = 20;
        }
        other => {
            return Err(PiwadError::Config(format!(
                "unknown ablation variant {other:?}"
            )))
        }
    }
    Ok(out)
}

/// Train and evaluate every ablation variant on a shared 80/10/10 split.
pub fn run_ablation(config: &TrainConfig, table: &FeatureTable) -> Result<Vec<AblationRow>> {
    let split_seed = util::derive_seed(config.seed, "ablation-split");
    let (train_table, val_table, test_table) = holdout_split(table, 0.1, 0.1, split_seed);
    let test_targets = test_table
        .target
        .as_ref()
        .ok_or_else(|| PiwadError::Data("ablation table has no target".into()))?;

    let mut rows = Vec::new();
    for variant in ablation_variants() {
        let mut variant_config = apply_variant(config, variant)?;
        variant_config.model.seed = util::derive_seed(config.seed, "ablation-model");
        let (model, _) = train(&variant_config, &train_table, &val_table)?;
        let preds = model.predict_batch(&test_table.rows, test_table.embeddings.as_deref())?;
        rows.push(AblationRow {
            variant: variant.to_string(),
            metrics: metrics(&preds, test_targets)?,
        });
    }
    Ok(rows)
}
