//! Builds a k-nearest-neighbour graph from a point cloud and saves it.

use kmip::graph::knn_graph;
use kmip::{Matrix, Rng};

fn main() -> kmip::Result<()> {
    let mut rng = Rng::new(11);
    let points: Matrix = Matrix::random_normal(200, 2, &mut rng);
    let g = knn_graph(&points, 5)?.with_labels((0..200).map(|i| usize::from(points.get(i, 0) > 0.0)).collect())?;
    println!("{} nodes, {} directed edges", g.num_nodes(), g.num_edges());
    let path = std::env::temp_dir().join("knn_example.json");
    g.save(&path)?;
    let back = kmip::Graph::load(&path)?;
    println!("saved to {} and reloaded: equal = {}", path.display(), back == g);
    Ok(())
}
