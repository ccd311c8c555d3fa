use piwad::data::FeatureTable;
use piwad::wgan::{sample_synthetic, train_wgan, GanConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.sample::<f64, _>(StandardNormal)]).collect();
    let table = FeatureTable::from_rows(vec!["x1".into()], rows, None).unwrap();
    for (lambda, iters) in [(0.1, 3000usize), (0.1, 6000), (0.3, 3000), (0.3, 6000), (1.0, 6000)] {
        let config = GanConfig { iterations: iters, penalty_weight: lambda, seed: 3, ..GanConfig::default() };
        let t0 = std::time::Instant::now();
        let (gan, _) = train_wgan(&table, &config).unwrap();
        let synth = sample_synthetic(&gan, 4000, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let col: Vec<f64> = synth.rows.iter().map(|r| r[0]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let s = (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
        println!("lambda {lambda} iters {iters}: mean {m:+.3} std {s:.3} ({:.0?})", t0.elapsed());
    }
}
