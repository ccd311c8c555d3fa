use piwad::data::FeatureTable;
use piwad::wgan::{sample_synthetic, train_wgan, GanConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.sample::<f64, _>(StandardNormal)]).collect();
    let table = FeatureTable::from_rows(vec!["x1".into()], rows, None).unwrap();
    for iters in [50usize, 200, 500, 1000, 2000, 3000] {
        let config = GanConfig { iterations: iters, seed: 3, ..GanConfig::default() };
        let (gan, trace) = train_wgan(&table, &config).unwrap();
        let synth = sample_synthetic(&gan, 2000, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let col: Vec<f64> = synth.rows.iter().map(|r| r[0]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let s = (col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64).sqrt();
        let last = trace.last().unwrap();
        println!("after {iters:5}: fake mean {m:7.3} std {s:6.3} | L_d {:7.3} L_g {:7.3}", last.critic_loss, last.generator_loss);
    }
}
