//! Fit a partition on planted block data and compare it with the truth.

use blockpart::bp::{fit_partition, objective, BpConfig};
use blockpart::synth::{generate, partition_agreement, PlantedSpec};

fn main() -> blockpart::Result<()> {
    let spec = PlantedSpec {
        q_true: 4,
        instances_per_block: 150,
        labels_per_block: 12,
        popular_labels: 2,
        seed: 7,
        ..Default::default()
    };
    let (mut data, truth) = generate(&spec)?;
    data.normalize_rows_l2();

    let fit = fit_partition(&data, &BpConfig::with_q(4, 0.5))?;
    let value = objective(data.labels(), &fit)?;
    println!("objective trace: {:?}", fit.objective_trace());
    println!(
        "captured {} of {} tagged entries, penalty {}",
        value.captured_ones,
        data.labels().nnz(),
        value.penalty
    );
    for (l, labels) in fit.label_clusters().iter().enumerate() {
        println!("cluster {l}: {} instances, labels {labels:?}", fit.cluster_sizes()[l]);
    }

    let agreement = partition_agreement(&fit, &truth)?;
    println!("ARI {:.3}, label Jaccard per block {:?}", agreement.ari, agreement.label_jaccard);
    Ok(())
}
