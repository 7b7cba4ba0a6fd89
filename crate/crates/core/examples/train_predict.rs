//! Train the routed model and the flat one-vs-all baseline, then compare
//! precision and prediction cost.

use std::time::Instant;

use blockpart::bp::BpConfig;
use blockpart::linear::TrainConfig;
use blockpart::metrics::{precision_at_k, speedup};
use blockpart::pipeline::{predict_bp, predict_naive, train_bp, train_naive};
use blockpart::synth::{generate_train_test, PlantedSpec};

fn main() -> blockpart::Result<()> {
    let spec = PlantedSpec {
        q_true: 8,
        instances_per_block: 100,
        labels_per_block: 30,
        d: 200,
        seed: 2,
        ..Default::default()
    };
    let (mut train, mut test, _) = generate_train_test(&spec, 50)?;
    train.normalize_rows_l2();
    test.normalize_rows_l2();
    let config = TrainConfig::default();
    let m = train.num_labels() as u64;

    let t = Instant::now();
    let model = train_bp(&train, &BpConfig::with_q(8, 0.3), &config)?;
    println!("routed model trained in {:.2?}", t.elapsed());
    let t = Instant::now();
    let naive = train_naive(&train, &config)?;
    println!("flat model trained in {:.2?}", t.elapsed());

    let routed = predict_bp(&model, test.features(), 5)?;
    let flat = predict_naive(&naive, test.features(), 5)?;
    for (name, r) in [("routed", &routed), ("flat", &flat)] {
        println!(
            "{name:>6}: P@1 {:.3}  P@5 {:.3}  mean mults {:.1}  speedup {:.1}x",
            precision_at_k(test.labels(), &r.top_labels, 1)?,
            precision_at_k(test.labels(), &r.top_labels, 5)?,
            r.mean_mults(),
            speedup(&r.mults_used, m)?,
        );
    }
    Ok(())
}
