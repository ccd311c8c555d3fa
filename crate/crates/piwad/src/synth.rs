//! Synthetic ground-truth datasets.
//!
//! Each family fully determines a dataset given its seed and carries the
//! analytic dynamic total effect of every feature in closed form, so the
//! effect-estimation pipeline can be judged against exact answers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::FeatureTable;
use crate::error::{PiwadError, Result};

/// Generating law of a synthetic dataset.
///
/// Feature 0 plays the probed role in every family; `passive` adds inert
/// uniform features so fixtures have realistic width.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SynthFamily {
    /// `y = relu(intercept + sum(coeffs * x))`, features uniform per range.
    Linear {
        intercept: f64,
        coeffs: Vec<f64>,
        ranges: Vec<(f64, f64)>,
    },
    /// `y = relu(scale * x0 * x1)` with `x0 ~ U(x0_range)` and
    /// `x1 = x1_base + x1_slope * x0 + U(-x1_spread, x1_spread)`.
    /// A nonzero slope correlates the pair without changing the closed-form
    /// effects (the effect of x0 marginalizes over x1's marginal).
    Interaction {
        scale: f64,
        x0_range: (f64, f64),
        x1_base: f64,
        x1_slope: f64,
        x1_spread: f64,
        passive: usize,
        passive_range: (f64, f64),
    },
    /// `y = relu(x0 - threshold)` with `x0 ~ U(range)`: zero effect below the
    /// threshold, unit slope above it.
    ReluCensored {
        threshold: f64,
        range: (f64, f64),
        passive: usize,
        passive_range: (f64, f64),
    },
    /// `y = relu(intercept + pw(x0))` where `pw` is continuous piecewise
    /// linear with the given segment boundaries and slopes.
    Piecewise {
        intercept: f64,
        boundaries: Vec<f64>,
        slopes: Vec<f64>,
        passive: usize,
        passive_range: (f64, f64),
    },
}

/// A reproducible synthetic dataset: family, size, noise level, seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthSpec {
    pub family: SynthFamily,
    pub n_rows: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Built-in defaults per family name, for the CLI.
    pub fn default_for(family: &str, n_rows: usize, noise_std: f64, seed: u64) -> Result<Self> {
        let family = match family {
            "linear" => SynthFamily::Linear {
                intercept: 20.0,
                coeffs: vec![2.0, 3.0, -1.0, 0.5, 0.0],
                ranges: vec![(0.0, 10.0); 5],
            },
            "interaction" => SynthFamily::Interaction {
                scale: 1.0,
                x0_range: (2.0, 6.0),
                x1_base: 4.0,
                x1_slope: 0.0,
                x1_spread: 2.0,
                passive: 0,
                passive_range: (0.0, 1.0),
            },
            "relu-censored" => SynthFamily::ReluCensored {
                threshold: 5.0,
                range: (0.0, 10.0),
                passive: 1,
                passive_range: (0.0, 1.0),
            },
            "piecewise" => SynthFamily::Piecewise {
                intercept: 1.0,
                boundaries: vec![0.0, 5.0, 10.0],
                slopes: vec![1.0, 3.0],
                passive: 1,
                passive_range: (0.0, 1.0),
            },
            other => {
                return Err(PiwadError::Config(format!(
                    "unknown synthetic family {other:?} (expected linear, interaction, relu-censored, or piecewise)"
                )))
            }
        };
        Ok(SynthSpec {
            family,
            n_rows,
            noise_std,
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        match &self.family {
            SynthFamily::Linear { coeffs, .. } => coeffs.len(),
            SynthFamily::Interaction { passive, .. } => 2 + passive,
            SynthFamily::ReluCensored { passive, .. } | SynthFamily::Piecewise { passive, .. } => {
                1 + passive
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(PiwadError::Config("n_rows must be >= 1".into()));
        }
        if self.noise_std < 0.0 {
            return Err(PiwadError::Config("noise_std must be >= 0".into()));
        }
        match &self.family {
            SynthFamily::Linear {
                coeffs,
                ranges,
                intercept,
            } => {
                if coeffs.len() != ranges.len() {
                    return Err(PiwadError::Config(
                        "linear family needs one range per coefficient".into(),
                    ));
                }
                // The closed-form effect assumes no censoring: check the
                // worst-case corner of the box stays non-negative.
                let worst: f64 = intercept
                    + coeffs
                        .iter()
                        .zip(ranges.iter())
                        .map(|(c, (lo, hi))| (c * lo).min(c * hi))
                        .sum::<f64>();
                if worst < 0.0 {
                    return Err(PiwadError::Config(format!(
                        "linear family can go negative (worst corner {worst}); raise the intercept so the oracle slopes stay exact"
                    )));
                }
            }
            SynthFamily::Interaction { .. } => {}
            SynthFamily::ReluCensored { range, .. } => {
                if range.0 >= range.1 {
                    return Err(PiwadError::Config("degenerate feature range".into()));
                }
            }
            SynthFamily::Piecewise {
                boundaries, slopes, ..
            } => {
                if boundaries.len() != slopes.len() + 1 {
                    return Err(PiwadError::Config(
                        "piecewise family needs one more boundary than slopes".into(),
                    ));
                }
                if boundaries.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(PiwadError::Config(
                        "piecewise boundaries must be strictly ascending".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Draw one feature vector from the family's feature distribution.
    pub fn sample_features(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.family {
            SynthFamily::Linear { ranges, .. } => ranges
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..=*hi))
                .collect(),
            SynthFamily::Interaction {
                x0_range,
                x1_base,
                x1_slope,
                x1_spread,
                passive,
                passive_range,
                ..
            } => {
                let x0 = rng.gen_range(x0_range.0..=x0_range.1);
                let noise = if *x1_spread > 0.0 {
                    rng.gen_range(-x1_spread..=*x1_spread)
                } else {
                    0.0
                };
                let x1 = x1_base + x1_slope * x0 + noise;
                let mut row = vec![x0, x1];
                for _ in 0..*passive {
                    row.push(rng.gen_range(passive_range.0..=passive_range.1));
                }
                row
            }
            SynthFamily::ReluCensored {
                range,
                passive,
                passive_range,
                ..
            } => {
                let mut row = vec![rng.gen_range(range.0..=range.1)];
                for _ in 0..*passive {
                    row.push(rng.gen_range(passive_range.0..=passive_range.1));
                }
                row
            }
            SynthFamily::Piecewise {
                boundaries,
                passive,
                passive_range,
                ..
            } => {
                let lo = boundaries[0];
                let hi = *boundaries.last().unwrap();
                let mut row = vec![rng.gen_range(lo..=hi)];
                for _ in 0..*passive {
                    row.push(rng.gen_range(passive_range.0..=passive_range.1));
                }
                row
            }
        }
    }

    /// Noiseless regression function, including the non-negativity clamp.
    pub fn true_law(&self, x: &[f64]) -> f64 {
        let raw = match &self.family {
            SynthFamily::Linear {
                intercept, coeffs, ..
            } => {
                // Left-to-right accumulation so noiseless targets equal the
                // written-out formula bit for bit.
                let mut acc = *intercept;
                for (c, v) in coeffs.iter().zip(x.iter()) {
                    acc += c * v;
                }
                acc
            }
            SynthFamily::Interaction { scale, .. } => scale * x[0] * x[1],
            SynthFamily::ReluCensored { threshold, .. } => (x[0] - threshold).max(0.0),
            SynthFamily::Piecewise {
                intercept,
                boundaries,
                slopes,
                ..
            } => intercept + piecewise_value(boundaries, slopes, x[0]),
        };
        raw.max(0.0)
    }

    /// Closed-form dynamic total effect of feature `j` at value `c` with probe
    /// step `h`: the expectation over the other features of
    /// `(law(x_j = c + h) - law(x_j = c)) / h`.
    pub fn true_effect(&self, j: usize, c: f64, h: f64) -> f64 {
        match &self.family {
            SynthFamily::Linear { coeffs, .. } => coeffs[j],
            SynthFamily::Interaction {
                scale,
                x0_range,
                x1_base,
                x1_slope,
                ..
            } => {
                let e_x0 = (x0_range.0 + x0_range.1) / 2.0;
                match j {
                    // Overriding x0 breaks the dependence, so the expectation
                    // runs over x1's marginal.
                    0 => scale * (x1_base + x1_slope * e_x0),
                    1 => scale * e_x0,
                    _ => 0.0,
                }
            }
            SynthFamily::ReluCensored { threshold, .. } => {
                if j != 0 {
                    return 0.0;
                }
                ((c + h - threshold).max(0.0) - (c - threshold).max(0.0)) / h
            }
            SynthFamily::Piecewise {
                boundaries, slopes, ..
            } => {
                if j != 0 {
                    return 0.0;
                }
                (piecewise_value(boundaries, slopes, c + h)
                    - piecewise_value(boundaries, slopes, c))
                    / h
            }
        }
    }

    /// Monte-Carlo estimate of the same effect from the true law, used to
    /// validate the closed forms.
    pub fn brute_force_effect(&self, j: usize, c: f64, h: f64, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = 0.0;
        for _ in 0..draws {
            let mut x = self.sample_features(&mut rng);
            x[j] = c + h;
            let hi = self.true_law(&x);
            x[j] = c;
            let lo = self.true_law(&x);
            acc += (hi - lo) / h;
        }
        acc / draws as f64
    }

    /// Materialize the dataset: features from the family distribution, target
    /// `relu(formula + gaussian noise)`.
    pub fn generate(&self) -> Result<FeatureTable> {
        self.validate()?;
        let m = self.n_features();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.noise_std.max(f64::MIN_POSITIVE))
            .map_err(|e| PiwadError::Config(format!("bad noise distribution: {e}")))?;
        let mut rows = Vec::with_capacity(self.n_rows);
        let mut target = Vec::with_capacity(self.n_rows);
        for _ in 0..self.n_rows {
            let x = self.sample_features(&mut rng);
            let eps = if self.noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            target.push((self.true_law(&x) + eps).max(0.0));
            rows.push(x);
        }
        let columns = (1..=m).map(|j| format!("x{j}")).collect();
        FeatureTable::from_rows(columns, rows, Some(target))
    }
}

/// Generate the dataset described by a spec. The spec itself is the
/// true-effect oracle (`SynthSpec::true_effect`).
pub fn gen_synthetic(spec: &SynthSpec) -> Result<FeatureTable> {
    spec.generate()
}

/// Continuous piecewise-linear function: 0 at the first boundary,
/// accumulating each segment's slope. Values are clamped to the covered
/// range.
fn piecewise_value(boundaries: &[f64], slopes: &[f64], v: f64) -> f64 {
    let v = v.clamp(boundaries[0], *boundaries.last().unwrap());
    let mut acc = 0.0;
    for (k, slope) in slopes.iter().enumerate() {
        let lo = boundaries[k];
        let hi = boundaries[k + 1];
        if v <= lo {
            break;
        }
        acc += slope * (v.min(hi) - lo);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_spec(noise: f64) -> SynthSpec {
        SynthSpec::default_for("linear", 200, noise, 11).unwrap()
    }

    #[test]
    fn noiseless_linear_targets_match_the_law_exactly() {
        let spec = SynthSpec {
            family: SynthFamily::Linear {
                intercept: 10.0,
                coeffs: vec![2.0, 3.0],
                ranges: vec![(0.0, 10.0), (0.0, 10.0)],
            },
            n_rows: 100,
            noise_std: 0.0,
            seed: 3,
        };
        let table = spec.generate().unwrap();
        let target = table.target.as_ref().unwrap();
        for (row, t) in table.rows.iter().zip(target.iter()) {
            assert_eq!(*t, (10.0 + 2.0 * row[0] + 3.0 * row[1]).max(0.0));
        }
    }

    #[test]
    fn interaction_oracle_is_expected_partner_value() {
        let spec = SynthSpec::default_for("interaction", 10, 0.0, 5).unwrap();
        assert_eq!(spec.true_effect(0, 3.0, 1.0), 4.0);
        assert_eq!(spec.true_effect(1, 5.0, 1.0), 4.0);
        let brute = spec.brute_force_effect(0, 3.0, 1.0, 1_000_000, 17);
        assert!(
            (brute - 4.0).abs() / 4.0 < 0.005,
            "brute force {brute} vs oracle 4.0"
        );
    }

    #[test]
    fn censored_oracle_dead_and_live_regions() {
        let spec = SynthSpec::default_for("relu-censored", 10, 0.0, 5).unwrap();
        assert_eq!(spec.true_effect(0, 2.0, 1.0), 0.0);
        assert_eq!(spec.true_effect(0, 8.0, 1.0), 1.0);
        // Straddling the threshold gives the partial slope.
        assert!((spec.true_effect(0, 4.5, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn every_family_oracle_matches_brute_force() {
        let specs = [
            linear_spec(0.0),
            SynthSpec::default_for("interaction", 10, 0.0, 5).unwrap(),
            SynthSpec::default_for("relu-censored", 10, 0.0, 5).unwrap(),
            SynthSpec::default_for("piecewise", 10, 0.0, 5).unwrap(),
        ];
        for spec in &specs {
            let m = spec.n_features();
            for j in 0..m {
                for c in [2.5, 4.0, 5.5] {
                    let oracle = spec.true_effect(j, c, 0.5);
                    let brute = spec.brute_force_effect(j, c, 0.5, 1_000_000, 99);
                    let denom = oracle.abs().max(1.0);
                    assert!(
                        (oracle - brute).abs() / denom < 0.005,
                        "family {:?} feature {j} at {c}: oracle {oracle}, brute {brute}",
                        spec.family
                    );
                }
            }
        }
    }

    #[test]
    fn correlated_interaction_oracle_uses_the_marginal() {
        // x1 stays positive over its whole support, so the clamp never bites
        // and the closed form is exact: E[x1] = 10.5 - 1.0 * E[x0] = 3.5.
        let spec = SynthSpec {
            family: SynthFamily::Interaction {
                scale: 1.0,
                x0_range: (4.0, 10.0),
                x1_base: 10.5,
                x1_slope: -1.0,
                x1_spread: 0.4,
                passive: 0,
                passive_range: (0.0, 1.0),
            },
            n_rows: 10,
            noise_std: 0.0,
            seed: 21,
        };
        assert_eq!(spec.true_effect(0, 5.0, 1.0), 3.5);
        let brute = spec.brute_force_effect(0, 5.0, 1.0, 1_000_000, 4);
        assert!((brute - 3.5).abs() / 3.5 < 0.005, "{brute}");
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = linear_spec(0.3);
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn piecewise_value_accumulates_segments() {
        let b = [0.0, 5.0, 10.0];
        let s = [1.0, 3.0];
        assert_eq!(piecewise_value(&b, &s, 0.0), 0.0);
        assert_eq!(piecewise_value(&b, &s, 5.0), 5.0);
        assert_eq!(piecewise_value(&b, &s, 7.0), 5.0 + 6.0);
        assert_eq!(piecewise_value(&b, &s, 10.0), 20.0);
        // Clamped outside the covered range.
        assert_eq!(piecewise_value(&b, &s, 12.0), 20.0);
    }

    #[test]
    fn negative_capable_linear_family_is_rejected() {
        let spec = SynthSpec {
            family: SynthFamily::Linear {
                intercept: 1.0,
                coeffs: vec![-2.0],
                ranges: vec![(0.0, 10.0)],
            },
            n_rows: 10,
            noise_std: 0.0,
            seed: 0,
        };
        assert!(spec.generate().is_err());
    }
}
