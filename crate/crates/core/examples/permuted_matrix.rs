//! Write the reordered label matrix as a PGM image plus index CSVs.
//!
//! Usage: cargo run --example permuted_matrix -- [output prefix]

use std::fs::File;
use std::io::BufWriter;

use blockpart::bp::{fit_partition, BpConfig};
use blockpart::export::export_permuted_matrix;
use blockpart::synth::{generate, PlantedSpec};

fn main() -> blockpart::Result<()> {
    let prefix = std::env::args().nth(1).unwrap_or_else(|| "permuted".into());
    let spec = PlantedSpec {
        q_true: 3,
        instances_per_block: 120,
        labels_per_block: 15,
        popular_labels: 3,
        off_block_noise: 0.03,
        seed: 9,
        ..Default::default()
    };
    let (mut data, _) = generate(&spec)?;
    data.normalize_rows_l2();
    let fit = fit_partition(&data, &BpConfig::with_q(3, 1.0))?;

    let image = export_permuted_matrix(data.labels(), &fit, 100)?;
    image.write_pgm(BufWriter::new(File::create(format!("{prefix}.pgm"))?))?;
    image.write_rows_csv(BufWriter::new(File::create(format!("{prefix}.rows.csv"))?))?;
    image.write_cols_csv(BufWriter::new(File::create(format!("{prefix}.cols.csv"))?))?;

    let total = image.pixels.iter().filter(|&&p| p).count();
    let inside: u64 = image.block_pixel_counts().iter().sum();
    println!(
        "{}x{} image, {inside} of {total} tags inside the diagonal blocks, written to {prefix}.pgm",
        image.rows(),
        image.cols()
    );
    Ok(())
}
