//! Generative-fidelity audit: PCA projection of real versus synthetic
//! samples, then per-component mean t-tests and variance F-tests. The audit
//! passes only when every p-value clears 0.05.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::data::FeatureTable;
use crate::error::{PiwadError, Result};
use crate::util;

/// Statistics for one principal component.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ComponentFidelity {
    pub real_mean: f64,
    pub synthetic_mean: f64,
    /// Two-sided Welch t-test p-value comparing the means.
    pub mean_p_value: f64,
    pub real_variance: f64,
    pub synthetic_variance: f64,
    /// Two-sided F-test p-value comparing the variances.
    pub variance_p_value: f64,
}

/// Audit result over the first k principal components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityReport {
    pub components: Vec<ComponentFidelity>,
    /// True iff every mean and variance p-value exceeds 0.05.
    pub pass: bool,
}

impl FidelityReport {
    pub const ALPHA: f64 = 0.05;
}

/// Project both tables onto the PCA basis of the real data and compare the
/// first `k` components statistically.
pub fn fidelity_audit(real: &FeatureTable, synthetic: &FeatureTable, k: usize) -> Result<FidelityReport> {
    let m = real.n_features();
    if synthetic.n_features() != m {
        return Err(PiwadError::shape(
            "fidelity audit",
            format!("{m} features"),
            format!("{} features", synthetic.n_features()),
        ));
    }
    if k == 0 || k > m {
        return Err(PiwadError::Config(format!(
            "component count {k} must be in 1..={m}"
        )));
    }
    if real.n_rows() < 3 || synthetic.n_rows() < 3 {
        return Err(PiwadError::Data(
            "fidelity audit needs at least 3 rows per table".into(),
        ));
    }

    let basis = principal_axes(real, k)?;
    let real_proj = project(real, &basis);
    let synth_proj = project(synthetic, &basis);

    let mut components = Vec::with_capacity(k);
    let mut pass = true;
    for c in 0..k {
        let a: Vec<f64> = real_proj.iter().map(|row| row[c]).collect();
        let b: Vec<f64> = synth_proj.iter().map(|row| row[c]).collect();
        let entry = ComponentFidelity {
            real_mean: util::mean(&a),
            synthetic_mean: util::mean(&b),
            mean_p_value: welch_t_p_value(&a, &b),
            real_variance: util::sample_variance(&a),
            synthetic_variance: util::sample_variance(&b),
            variance_p_value: f_test_p_value(&a, &b),
        };
        pass &= entry.mean_p_value > FidelityReport::ALPHA
            && entry.variance_p_value > FidelityReport::ALPHA;
        components.push(entry);
    }
    Ok(FidelityReport { components, pass })
}

struct PcaBasis {
    mean: Vec<f64>,
    /// k column vectors of length m.
    axes: Vec<Vec<f64>>,
}

fn principal_axes(table: &FeatureTable, k: usize) -> Result<PcaBasis> {
    let n = table.n_rows();
    let m = table.n_features();
    let mean: Vec<f64> = (0..m)
        .map(|j| table.rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();

    let mut cov = DMatrix::zeros(m, m);
    for row in &table.rows {
        for i in 0..m {
            let di = row[i] - mean[i];
            for j in i..m {
                let dj = row[j] - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eigen = cov.symmetric_eigen();
    let eigenvalues: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let max_eigen = eigenvalues[order[0]].max(0.0);
    let rank_tol = max_eigen * 1e-10;
    let rank = order
        .iter()
        .filter(|&&i| eigenvalues[i] > rank_tol)
        .count();
    if k > rank {
        return Err(PiwadError::Config(format!(
            "requested {k} components but the data rank is {rank}"
        )));
    }

    let mut axes = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eigen.eigenvectors.column(idx);
        let mut axis: Vec<f64> = col.iter().copied().collect();
        // Deterministic orientation: largest-magnitude loading is positive.
        let lead = axis
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                a.abs()
                    .partial_cmp(&b.abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        if axis[lead] < 0.0 {
            for v in &mut axis {
                *v = -*v;
            }
        }
        axes.push(axis);
    }
    Ok(PcaBasis { mean, axes })
}

fn project(table: &FeatureTable, basis: &PcaBasis) -> Vec<Vec<f64>> {
    table
        .rows
        .iter()
        .map(|row| {
            basis
                .axes
                .iter()
                .map(|axis| {
                    row.iter()
                        .zip(basis.mean.iter())
                        .zip(axis.iter())
                        .map(|((x, mu), a)| (x - mu) * a)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Two-sided Welch t-test p-value for a mean difference.
fn welch_t_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (util::mean(a), util::mean(b));
    let (va, vb) = (util::sample_variance(a), util::sample_variance(b));
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / se2.sqrt();
    if t == 0.0 {
        return 1.0;
    }
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    if !df.is_finite() || df <= 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid t distribution");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Two-sided F-test p-value for a variance ratio.
fn f_test_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (va, vb) = (util::sample_variance(a), util::sample_variance(b));
    if va == 0.0 || vb == 0.0 {
        return if va == vb { 1.0 } else { 0.0 };
    }
    let f = va / vb;
    let d1 = (a.len() - 1) as f64;
    let d2 = (b.len() - 1) as f64;
    let dist = FisherSnedecor::new(d1, d2).expect("valid F distribution");
    let cdf = dist.cdf(f);
    2.0 * cdf.min(1.0 - cdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_table(n: usize, m: usize, seed: u64) -> FeatureTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|j| rng.sample::<f64, _>(StandardNormal) * (j + 1) as f64)
                    .collect()
            })
            .collect();
        FeatureTable::from_rows((1..=m).map(|j| format!("x{j}")).collect(), rows, None).unwrap()
    }

    #[test]
    fn identical_tables_pass_with_unit_mean_p_values() {
        let real = gaussian_table(500, 4, 8);
        let report = fidelity_audit(&real, &real, 4).unwrap();
        assert!(report.pass);
        for comp in &report.components {
            assert_eq!(comp.mean_p_value, 1.0);
            assert!(comp.variance_p_value > 0.99);
            assert_eq!(comp.real_mean, comp.synthetic_mean);
        }
    }

    #[test]
    fn planted_shift_fails_loudly() {
        let real = gaussian_table(500, 4, 9);
        let mut shifted = real.clone();
        // +10 sigma on the widest feature.
        let sigma = 4.0;
        for row in &mut shifted.rows {
            row[3] += 10.0 * sigma;
        }
        let report = fidelity_audit(&real, &shifted, 4).unwrap();
        assert!(!report.pass);
        let min_p = report
            .components
            .iter()
            .map(|c| c.mean_p_value)
            .fold(f64::INFINITY, f64::min);
        assert!(min_p < 0.001, "min mean p-value {min_p}");
    }

    #[test]
    fn independent_draws_from_same_law_mostly_pass_each_test() {
        // Not a strict pass (20 tests at alpha=0.05 fail jointly often), but
        // no single p-value should be degenerate.
        let real = gaussian_table(800, 3, 10);
        let synth = gaussian_table(800, 3, 11);
        let report = fidelity_audit(&real, &synth, 3).unwrap();
        for comp in &report.components {
            assert!(comp.mean_p_value > 1e-4);
            assert!(comp.variance_p_value > 1e-4);
        }
    }

    #[test]
    fn rank_limit_is_enforced() {
        // Second column is a copy of the first: rank 1.
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, i as f64]).collect();
        let table =
            FeatureTable::from_rows(vec!["a".into(), "b".into()], rows, None).unwrap();
        assert!(fidelity_audit(&table, &table, 2).is_err());
        assert!(fidelity_audit(&table, &table, 1).is_ok());
    }

    #[test]
    fn feature_count_mismatch_rejected() {
        let a = gaussian_table(50, 2, 1);
        let b = gaussian_table(50, 3, 2);
        assert!(fidelity_audit(&a, &b, 2).is_err());
    }

    #[test]
    fn welch_detects_a_clear_shift() {
        let a: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 3.0).collect();
        assert!(welch_t_p_value(&a, &b) < 1e-6);
        assert_eq!(welch_t_p_value(&a, &a), 1.0);
    }

    #[test]
    fn f_test_detects_a_variance_blowup() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = a.iter().map(|x| x * 3.0).collect();
        assert!(f_test_p_value(&a, &b) < 1e-6);
        assert!(f_test_p_value(&a, &a) > 0.99);
    }
}
