//! Row-wise top-k inner products with the tiled kernel.

use kmip::mipkernel::{rowwise_topk, TileConfig};
use kmip::{Matrix, Rng, Workspace};

fn main() -> kmip::Result<()> {
    let q = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])?;
    let key = Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0], [1.0, 1.0]])?;
    let r = rowwise_topk(&q, &key, 2, TileConfig::default(), &Workspace::new())?;
    println!("indices {:?}", r.indices.to_rows());
    println!("values  {:?}", r.values.to_rows());

    // a larger problem on small tiles
    let mut rng = Rng::new(1);
    let q: Matrix = Matrix::random_normal(4096, 16, &mut rng);
    let ws = Workspace::new();
    let r = rowwise_topk(&q, &q, 8, TileConfig::new(32, 256)?, &ws)?;
    println!("row 0 neighbours {:?}", r.indices.row(0));
    println!("peak workspace {} bytes (dense scores would need {})", ws.peak_bytes(), 4096 * 4096 * 8);
    Ok(())
}
