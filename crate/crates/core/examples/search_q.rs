//! Grow the number of clusters until a pair comes out empty.

use blockpart::bp::{search_q, BpConfig};
use blockpart::synth::{generate, PlantedSpec};

fn main() -> blockpart::Result<()> {
    let spec = PlantedSpec {
        q_true: 5,
        instances_per_block: 80,
        labels_per_block: 8,
        seed: 1,
        ..Default::default()
    };
    let (mut data, _) = generate(&spec)?;
    data.normalize_rows_l2();

    let base = BpConfig {
        lambda: 2.0,
        ..Default::default()
    };
    let search = search_q(&data, &base, 10)?;
    println!("q  captured  empty pair");
    for r in &search.reports {
        println!("{:<2} {:>7.2}%  {}", r.q, 100.0 * r.captured_proportion, r.any_empty);
    }
    println!("chosen q = {}", search.chosen_q);
    Ok(())
}
