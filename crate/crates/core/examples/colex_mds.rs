//! Builds a colexification matrix from the synthetic fixture and projects it
//! to two dimensions.
//!
//! cargo run --example colex_mds

use indefinite::typology::{build_matrix, embed_matrix, load_colex_records, overlap_breadth, DistanceTransform};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");
    let records = load_colex_records(format!("{dir}/colex_synthetic.csv"))?;
    let matrix = build_matrix(&records)?;
    let emb = embed_matrix(&matrix, DistanceTransform::OneMinusShare, 2)?;
    print!("{}", emb.to_csv());

    let ten = load_colex_records(format!("{dir}/overlap_10.csv"))?;
    println!("overlap breadth (>= 6 classes, >= 5 shared): {:.2}", overlap_breadth(&ten, 6, 5));
    Ok(())
}
