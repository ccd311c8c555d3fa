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

fn main() {
    let iters: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let table = correlated_gaussian(2000, 10, 1);
    let mut passes = 0;
    for seed in 0..10u64 {
        let lambda: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
        let ema: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0.999);
        let config = GanConfig { iterations: iters, penalty_weight: lambda, lr_decay: true,
            ema_decay: if ema > 0.0 { Some(ema) } else { None }, seed, ..GanConfig::default() };
        let t0 = std::time::Instant::now();
        let (gan, _) = train_wgan(&table, &config).unwrap();
        let synth = sample_synthetic(&gan, 2000, &mut ChaCha8Rng::seed_from_u64(seed + 1000)).unwrap();
        let report = fidelity_audit(&table, &synth, 10).unwrap();
        let min_mean_p = report.components.iter().map(|c| c.mean_p_value).fold(f64::INFINITY, f64::min);
        let min_var_p = report.components.iter().map(|c| c.variance_p_value).fold(f64::INFINITY, f64::min);
        println!("seed {seed}: pass={} min_mean_p={:.4} min_var_p={:.4} ({:.1?})", report.pass, min_mean_p, min_var_p, t0.elapsed());
        if report.pass { passes += 1; }
    }
    println!("{passes}/10 passes at {iters} iterations");
}
