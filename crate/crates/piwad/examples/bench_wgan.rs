use piwad::data::FeatureTable;
use piwad::wgan::{train_wgan, GanConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    // 10-D correlated Gaussian, N=2000
    let m = 10;
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| {
        let shared: f64 = rng.sample(StandardNormal);
        (0..m).map(|j| {
            let own: f64 = rng.sample(StandardNormal);
            (0.6 * shared + 0.8 * own) * (1.0 + j as f64 * 0.3) + j as f64
        }).collect()
    }).collect();
    let table = FeatureTable::from_rows((1..=m).map(|j| format!("x{j}")).collect(), rows, None).unwrap();
    let config = GanConfig { iterations: 200, seed: 7, ..GanConfig::default() };
    let t0 = std::time::Instant::now();
    let (_gan, trace) = train_wgan(&table, &config).unwrap();
    let dt = t0.elapsed();
    println!("200 iterations in {:.2?} -> {:.2} ms/iter", dt, dt.as_secs_f64() * 1000.0 / 200.0);
    println!("L_d first {:.3} mid {:.3} last {:.3}", trace[0].critic_loss, trace[100].critic_loss, trace[199].critic_loss);
}
