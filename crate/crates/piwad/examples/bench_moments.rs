use piwad::data::FeatureTable;
use piwad::fidelity::fidelity_audit;
use piwad::wgan::{sample_synthetic, train_wgan, GanConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn correlated_gaussian(n: usize, m: usize, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| {
        let shared: f64 = rng.sample(StandardNormal);
        (0..m).map(|j| {
            let own: f64 = rng.sample(StandardNormal);
            (0.6 * shared + 0.8 * own) * (1.0 + j as f64 * 0.3) + j as f64
        }).collect()
    }).collect();
    FeatureTable::from_rows((1..=m).map(|j| format!("x{j}")).collect(), rows, None).unwrap()
}

fn col_stats(t: &FeatureTable, j: usize) -> (f64, f64) {
    let col: Vec<f64> = t.rows.iter().map(|r| r[j]).collect();
    let m = col.iter().sum::<f64>() / col.len() as f64;
    let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64;
    (m, v.sqrt())
}

fn main() {
    let iters: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let table = correlated_gaussian(2000, 10, 1);
    let lambda: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let config = GanConfig { iterations: iters, penalty_weight: lambda, seed: 0, ..GanConfig::default() };
    let (gan, trace) = train_wgan(&table, &config).unwrap();
    let synth = sample_synthetic(&gan, 2000, &mut ChaCha8Rng::seed_from_u64(1000)).unwrap();
    for j in [0, 4, 9] {
        let (rm, rs) = col_stats(&table, j);
        let (sm, ss) = col_stats(&synth, j);
        println!("col {j}: real mean {rm:.3} std {rs:.3} | synth mean {sm:.3} std {ss:.3}");
    }
    let report = fidelity_audit(&table, &synth, 10).unwrap();
    for (i, c) in report.components.iter().enumerate() {
        println!("comp {}: mean {:.3} vs {:.3} (p {:.4}) | var {:.3} vs {:.3} (p {:.4})",
            i + 1, c.real_mean, c.synthetic_mean, c.mean_p_value,
            c.real_variance, c.synthetic_variance, c.variance_p_value);
    }
    let k = trace.len();
    println!("L_d: {:.3} .. {:.3} .. {:.3}", trace[0].critic_loss, trace[k/2].critic_loss, trace[k-1].critic_loss);
    println!("L_g: {:.3} .. {:.3} .. {:.3}", trace[0].generator_loss, trace[k/2].generator_loss, trace[k-1].generator_loss);
}
