//! Laplacian eigenvector and random-walk encodings of a small graph.

use kmip::wl::{laplacian_pe, laplacian_spectrum, rwse};
use kmip::Graph;

fn print(name: &str, m: &kmip::Matrix) {
    println!("{name}");
    for r in m.to_rows() {
        println!("  {}", r.iter().map(|v| format!("{v:7.3}")).collect::<Vec<_>>().join(" "));
    }
}

fn main() -> kmip::Result<()> {
    let g = Graph::undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])?;
    let (eigvals, _) = laplacian_spectrum(&g);
    println!("laplacian spectrum {:?}", eigvals.iter().map(|v| (v * 1e6).round() / 1e6).collect::<Vec<_>>());
    print("lap_pe (3)", &laplacian_pe(&g, 3));
    print("rwse (4)", &rwse(&g, 4));
    Ok(())
}
