//! Read and write the repository text format, then the binary container.

use blockpart::codec::Encode;
use blockpart::ingest::{kfold_split, parse_dataset, write_dataset};
use blockpart::sparse::SparseMatrix;

const TEXT: &str = "\
4 5 3
0,2 0:1.5 3:-2
1 1:0.25
 4:1
0,1,2 0:3 2:1 4:0.5
";

fn main() -> blockpart::Result<()> {
    let data = parse_dataset(TEXT.as_bytes())?;
    println!(
        "{} instances, {} features, {} labels, {} tags",
        data.num_instances(),
        data.num_features(),
        data.num_labels(),
        data.labels().nnz()
    );
    for i in 0..data.num_instances() {
        let row = data.features().row(i);
        println!("row {i}: labels {:?} features {:?}", data.labels().row(i), row.iter().collect::<Vec<_>>());
    }

    let mut out = Vec::new();
    write_dataset(&data, &mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    assert_eq!(parse_dataset(out.as_slice())?, data);

    let bytes = data.features().to_bytes();
    println!("binary container: {} bytes, magic {:?}", bytes.len(), String::from_utf8_lossy(&bytes[..4]));
    assert_eq!(&SparseMatrix::from_bytes(&bytes)?, data.features());

    for fold in kfold_split(&data, 2, 0)? {
        println!("validation rows {:?}", fold.validation_indices);
    }
    Ok(())
}
