use piwad::data::FeatureTable;
use piwad::wgan::{sample_synthetic, train_wgan, GanConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.sample::<f64, _>(StandardNormal)]).collect();
    let table = FeatureTable::from_rows(vec!["x1".into()], rows, None).unwrap();
    for (lambda, lr, b1, nd) in [
        (1.0, 1e-4, 0.0, 5usize),
        (0.1, 1e-4, 0.0, 5),
        (10.0, 5e-4, 0.0, 5),
        (10.0, 1e-3, 0.5, 5),
        (1.0, 1e-3, 0.5, 5),
        (10.0, 1e-4, 0.0, 10),
    ] {
        let mut config = GanConfig { iterations: 2000, penalty_weight: lambda, critic_steps: nd, seed: 3, ..GanConfig::default() };
        config.adam.learning_rate = lr;
        config.adam.beta1 = b1;
        let (gan, _) = train_wgan(&table, &config).unwrap();
        let synth = sample_synthetic(&gan, 4000, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let col: Vec<f64> = synth.rows.iter().map(|r| r[0]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let s = (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
        println!("lambda {lambda:4} lr {lr} b1 {b1} nd {nd}: mean {m:+.3} std {s:.3}");
    }
}
