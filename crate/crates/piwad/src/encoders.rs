//! Feature encodings for the linear component.
//!
//! The primary encoding splits each feature's observed range into equal-width
//! intervals and emits one saturating ramp per interval: 1 when the value has
//! passed the interval, a linear ratio inside it, 0 below it. Alternatives
//! (identity, ordinal bin index, one-hot bin index) exist as ablation
//! configurations.

use serde::{Deserialize, Serialize};

use crate::data::FeatureTable;
use crate::error::{PiwadError, Result};

/// Which encoding feeds the linear component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Piecewise,
    SimpleLinear,
    Ordinal,
    OrdinalOneHot,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EncoderKind::Piecewise => "piecewise",
            EncoderKind::SimpleLinear => "simple-linear",
            EncoderKind::Ordinal => "ordinal",
            EncoderKind::OrdinalOneHot => "ordinal-one-hot",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = PiwadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise" => Ok(EncoderKind::Piecewise),
            "simple-linear" => Ok(EncoderKind::SimpleLinear),
            "ordinal" => Ok(EncoderKind::Ordinal),
            "ordinal-one-hot" => Ok(EncoderKind::OrdinalOneHot),
            other => Err(PiwadError::Config(format!("unknown encoder kind {other:?}"))),
        }
    }
}

/// Interval count per feature: one value for all, or one per feature.
#[derive(Debug, Clone)]
pub enum Gamma {
    Uniform(usize),
    PerFeature(Vec<usize>),
}

/// Equal-width interval boundaries for one feature.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeatureBins {
    pub name: String,
    /// Observed minimum over the fitting data.
    pub min: f64,
    /// Observed maximum over the fitting data.
    pub max: f64,
    /// Number of intervals.
    pub intervals: usize,
    /// `intervals + 1` ascending boundaries from min to max.
    pub boundaries: Vec<f64>,
    /// True when min == max; such features encode to zeros.
    pub constant: bool,
    /// True when the fitted values were exactly {0, 1} with both present;
    /// effect probes flip such features instead of stepping them.
    pub binary: bool,
}

impl FeatureBins {
    /// 0-based index of the interval containing `x` (clamped), in
    /// `0..intervals`.
    pub fn bin_index(&self, x: f64) -> usize {
        if self.constant {
            return 0;
        }
        let x = x.clamp(self.min, self.max);
        let mut idx = 0;
        for k in 0..self.intervals {
            if x >= self.boundaries[k] {
                idx = k;
            }
        }
        idx
    }
}

/// Per-feature interval boundaries for the whole table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PiecewiseSpec {
    pub features: Vec<FeatureBins>,
}

impl PiecewiseSpec {
    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Width of the piecewise (and ordinal one-hot) encoding.
    pub fn ramp_width(&self) -> usize {
        self.features.iter().map(|f| f.intervals).sum()
    }

    /// Encoded width for a given encoder kind.
    pub fn encoded_width(&self, kind: EncoderKind) -> usize {
        match kind {
            EncoderKind::Piecewise | EncoderKind::OrdinalOneHot => self.ramp_width(),
            EncoderKind::SimpleLinear | EncoderKind::Ordinal => self.n_features(),
        }
    }

    /// Offset of feature `j`'s block in the ramp/one-hot encoding.
    pub fn block_offset(&self, j: usize) -> usize {
        self.features[..j].iter().map(|f| f.intervals).sum()
    }
}

/// Fit equal-width interval boundaries from observed per-feature ranges.
pub fn fit_piecewise(table: &FeatureTable, gamma: &Gamma) -> Result<PiecewiseSpec> {
    if table.n_rows() < 2 {
        return Err(PiwadError::Data(format!(
            "piecewise fit needs at least 2 rows, got {}",
            table.n_rows()
        )));
    }
    let m = table.n_features();
    let gammas: Vec<usize> = match gamma {
        Gamma::Uniform(g) => vec![*g; m],
        Gamma::PerFeature(gs) => {
            if gs.len() != m {
                return Err(PiwadError::shape(
                    "per-feature gamma",
                    format!("{m} entries"),
                    format!("{} entries", gs.len()),
                ));
            }
            gs.clone()
        }
    };
    if let Some(bad) = gammas.iter().find(|&&g| g == 0) {
        return Err(PiwadError::Config(format!(
            "interval count must be >= 1, got {bad}"
        )));
    }

    let mut features = Vec::with_capacity(m);
    for j in 0..m {
        let g = gammas[j];
        let lo = table.min[j];
        let hi = table.max[j];
        let constant = lo == hi;
        let mut boundaries = Vec::with_capacity(g + 1);
        for k in 0..=g {
            boundaries.push(lo + (k as f64 / g as f64) * (hi - lo));
        }
        // Pin the endpoints so clamping and saturation are exact.
        boundaries[0] = lo;
        boundaries[g] = hi;
        features.push(FeatureBins {
            name: table.columns[j].clone(),
            min: lo,
            max: hi,
            intervals: g,
            boundaries,
            constant,
            binary: table.is_binary(j),
        });
    }
    Ok(PiecewiseSpec { features })
}

/// Ramp-encode one feature value into `out` (one slot per interval).
fn encode_feature_piecewise(bins: &FeatureBins, x: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), bins.intervals);
    if bins.constant {
        out.fill(0.0);
        return;
    }
    let x = x.clamp(bins.min, bins.max);
    for k in 1..=bins.intervals {
        let upper = bins.boundaries[k];
        let lower = bins.boundaries[k - 1];
        out[k - 1] = if x > upper {
            1.0
        } else if x >= lower {
            (x - lower) / (upper - lower)
        } else {
            0.0
        };
    }
}

/// Ramp encoding of a full feature vector (length `ramp_width`).
pub fn encode_piecewise(spec: &PiecewiseSpec, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != spec.n_features() {
        return Err(PiwadError::shape(
            "piecewise encode",
            format!("{} features", spec.n_features()),
            format!("{} features", x.len()),
        ));
    }
    let mut out = vec![0.0; spec.ramp_width()];
    let mut offset = 0;
    for (j, bins) in spec.features.iter().enumerate() {
        encode_feature_piecewise(bins, x[j], &mut out[offset..offset + bins.intervals]);
        offset += bins.intervals;
    }
    Ok(out)
}

/// Non-piecewise encodings: identity, ordinal bin index, or one-hot bin index.
pub fn encode_alternative(kind: EncoderKind, spec: &PiecewiseSpec, x: &[f64]) -> Result<Vec<f64>> {
    if kind == EncoderKind::Piecewise {
        return Err(PiwadError::Config(
            "encode_alternative does not handle the piecewise kind".into(),
        ));
    }
    if x.len() != spec.n_features() {
        return Err(PiwadError::shape(
            "encode",
            format!("{} features", spec.n_features()),
            format!("{} features", x.len()),
        ));
    }
    match kind {
        EncoderKind::SimpleLinear => Ok(x.to_vec()),
        EncoderKind::Ordinal => Ok(spec
            .features
            .iter()
            .zip(x.iter())
            .map(|(bins, &v)| {
                if bins.constant {
                    0.0
                } else {
                    bins.bin_index(v) as f64
                }
            })
            .collect()),
        EncoderKind::OrdinalOneHot => {
            let mut out = vec![0.0; spec.ramp_width()];
            let mut offset = 0;
            for (bins, &v) in spec.features.iter().zip(x.iter()) {
                if !bins.constant {
                    out[offset + bins.bin_index(v)] = 1.0;
                }
                offset += bins.intervals;
            }
            Ok(out)
        }
        EncoderKind::Piecewise => unreachable!(),
    }
}

/// Encode with any kind.
pub fn encode(kind: EncoderKind, spec: &PiecewiseSpec, x: &[f64]) -> Result<Vec<f64>> {
    match kind {
        EncoderKind::Piecewise => encode_piecewise(spec, x),
        other => encode_alternative(other, spec, x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureTable;
    use proptest::prelude::*;

    fn table_from_column(values: &[f64]) -> FeatureTable {
        FeatureTable::from_rows(
            vec!["x1".into()],
            values.iter().map(|&v| vec![v]).collect(),
            None,
        )
        .unwrap()
    }

    fn spec_0_to_10_gamma5() -> PiecewiseSpec {
        let table = table_from_column(&[0.0, 10.0]);
        fit_piecewise(&table, &Gamma::Uniform(5)).unwrap()
    }

    /// Literal transcription of the ramp rule, used as the encoding oracle.
    pub(crate) fn naive_ramp_encode(bins: &FeatureBins, x: f64) -> Vec<f64> {
        if bins.constant {
            return vec![0.0; bins.intervals];
        }
        let x = x.clamp(bins.min, bins.max);
        (1..=bins.intervals)
            .map(|k| {
                if x > bins.boundaries[k] {
                    1.0
                } else if bins.boundaries[k - 1] <= x && x <= bins.boundaries[k] {
                    (x - bins.boundaries[k - 1]) / (bins.boundaries[k] - bins.boundaries[k - 1])
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn boundaries_for_span_0_10_gamma_5() {
        let spec = spec_0_to_10_gamma5();
        let expected: Vec<f64> = (0..=5).map(|k| 0.0 + (k as f64 / 5.0) * 10.0).collect();
        assert_eq!(spec.features[0].boundaries, expected);
        assert_eq!(spec.features[0].boundaries, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn single_interval_degenerates_to_one_ramp() {
        let table = table_from_column(&[1.0, 3.0]);
        let spec = fit_piecewise(&table, &Gamma::Uniform(1)).unwrap();
        assert_eq!(spec.features[0].boundaries, vec![1.0, 3.0]);
        assert_eq!(encode_piecewise(&spec, &[2.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn constant_feature_encodes_to_zeros() {
        let table = table_from_column(&[4.0, 4.0, 4.0]);
        let spec = fit_piecewise(&table, &Gamma::Uniform(3)).unwrap();
        assert!(spec.features[0].constant);
        assert_eq!(encode_piecewise(&spec, &[4.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(encode_piecewise(&spec, &[7.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn empty_table_rejected() {
        let table = table_from_column(&[1.0]);
        assert!(fit_piecewise(&table, &Gamma::Uniform(3)).is_err());
    }

    #[test]
    fn midpoint_example_blocks() {
        let spec = spec_0_to_10_gamma5();
        let phi = encode_piecewise(&spec, &[5.0]).unwrap();
        assert_eq!(phi, vec![1.0, 1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn range_extremes() {
        let spec = spec_0_to_10_gamma5();
        assert_eq!(encode_piecewise(&spec, &[0.0]).unwrap(), vec![0.0; 5]);
        assert_eq!(encode_piecewise(&spec, &[10.0]).unwrap(), vec![1.0; 5]);
        // Out-of-range values clamp to the same extremes.
        assert_eq!(encode_piecewise(&spec, &[-3.0]).unwrap(), vec![0.0; 5]);
        assert_eq!(encode_piecewise(&spec, &[42.0]).unwrap(), vec![1.0; 5]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let spec = spec_0_to_10_gamma5();
        assert!(encode_piecewise(&spec, &[1.0, 2.0]).is_err());
        assert!(encode_alternative(EncoderKind::Ordinal, &spec, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn alternative_encodings() {
        let spec = spec_0_to_10_gamma5();
        assert_eq!(
            encode_alternative(EncoderKind::SimpleLinear, &spec, &[5.0]).unwrap(),
            vec![5.0]
        );
        // x = 5 lies in [4, 6), the third interval.
        assert_eq!(
            encode_alternative(EncoderKind::Ordinal, &spec, &[5.0]).unwrap(),
            vec![2.0]
        );
        assert_eq!(
            encode_alternative(EncoderKind::OrdinalOneHot, &spec, &[5.0]).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn ordinal_top_of_range_uses_last_bin() {
        let spec = spec_0_to_10_gamma5();
        assert_eq!(
            encode_alternative(EncoderKind::Ordinal, &spec, &[10.0]).unwrap(),
            vec![4.0]
        );
    }

    #[test]
    fn encode_alternative_rejects_piecewise_kind() {
        let spec = spec_0_to_10_gamma5();
        assert!(encode_alternative(EncoderKind::Piecewise, &spec, &[5.0]).is_err());
    }

    proptest! {
        #[test]
        fn matches_naive_oracle(x in -5.0f64..15.0, gamma in 1usize..12) {
            let table = table_from_column(&[0.0, 10.0]);
            let spec = fit_piecewise(&table, &Gamma::Uniform(gamma)).unwrap();
            let fast = encode_piecewise(&spec, &[x]).unwrap();
            let naive = naive_ramp_encode(&spec.features[0], x);
            prop_assert_eq!(fast, naive);
        }

        #[test]
        fn monotone_in_the_raw_value(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let spec = spec_0_to_10_gamma5();
            let pa = encode_piecewise(&spec, &[lo]).unwrap();
            let pb = encode_piecewise(&spec, &[hi]).unwrap();
            for (x, y) in pa.iter().zip(pb.iter()) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn continuous_at_boundaries(k in 1usize..5) {
            let spec = spec_0_to_10_gamma5();
            let b = spec.features[0].boundaries[k];
            let before = encode_piecewise(&spec, &[b - 1e-9]).unwrap();
            let after = encode_piecewise(&spec, &[b + 1e-9]).unwrap();
            for (x, y) in before.iter().zip(after.iter()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn ramps_reconstruct_the_value(x in 0.0f64..10.0, gamma in 1usize..12) {
            let table = table_from_column(&[0.0, 10.0]);
            let spec = fit_piecewise(&table, &Gamma::Uniform(gamma)).unwrap();
            let phi = encode_piecewise(&spec, &[x]).unwrap();
            let bins = &spec.features[0];
            let recon: f64 = phi
                .iter()
                .enumerate()
                .map(|(i, v)| v * (bins.boundaries[i + 1] - bins.boundaries[i]))
                .sum();
            prop_assert!((recon - (x - bins.min)).abs() < 1e-9);
        }
    }
}
