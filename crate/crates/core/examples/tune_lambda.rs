//! Cross-validate the label penalty and print the per-fold table.

use blockpart::bp::BpConfig;
use blockpart::synth::{generate, PlantedSpec};
use blockpart::tuning::{default_lambda_grid, select_lambda, LambdaSearchConfig};

fn main() -> blockpart::Result<()> {
    let spec = PlantedSpec {
        q_true: 3,
        instances_per_block: 100,
        labels_per_block: 10,
        popular_labels: 2,
        seed: 4,
        ..Default::default()
    };
    let (mut data, _) = generate(&spec)?;
    data.normalize_rows_l2();

    let config = LambdaSearchConfig {
        k: 5,
        bp: BpConfig::with_q(3, 1.0),
        ..Default::default()
    };
    let selection = select_lambda(&data, &default_lambda_grid(), &config)?;
    selection.write_csv(std::io::stdout().lock())?;
    for fold in &selection.per_fold {
        let (lo, hi) = fold.range();
        println!("fold {}: best P@5 {:.3}, accepted [{lo:.3}, {hi:.3}]", fold.fold, fold.best_accuracy);
    }
    println!("common candidates: {:?}", selection.intersection);
    println!(
        "speed-driven {}, accuracy-driven {}",
        selection.speed_driven(),
        selection.accuracy_driven()
    );
    Ok(())
}
