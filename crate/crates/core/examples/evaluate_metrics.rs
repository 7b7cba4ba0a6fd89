//! Precision, recall and propensity-scored precision on a tiny example.

use blockpart::metrics::{label_propensities, EvalReport, PropensityParams};
use blockpart::sparse::BinaryLabelMatrix;

fn main() -> blockpart::Result<()> {
    let truth = BinaryLabelMatrix::from_rows(6, vec![vec![0, 3], vec![1], vec![2, 4, 5], vec![]])?;
    let predictions = vec![vec![3, 1, 0], vec![1, 2, 0], vec![5, 0, 4], vec![0, 1, 2]];
    let train_counts = [500, 120, 40, 300, 5, 1];
    let propensities = label_propensities(&train_counts, 10_000, PropensityParams::default())?;
    for (j, p) in propensities.iter().enumerate() {
        println!("label {j}: {} training tags, propensity {p:.3}", train_counts[j]);
    }

    let mults = [9, 7, 12, 9];
    let report = EvalReport::compute(&truth, &predictions, &propensities, &[1, 3, 5], Some((&mults, 60)))?;
    report.write_csv(std::io::stdout().lock())?;
    print!("{}", report.summary_table());
    Ok(())
}
