//! Trains a small GPS model with k-MIP attention on clustered point clouds.

use kmip::cli::{fit, generate, DataKind, GenArgs};
use kmip::gps::TrainConfig;

fn main() -> kmip::Result<()> {
    let data = GenArgs { kind: DataKind::Clusters, n: 300, num_graphs: 10, knn_k: 8, classes: 4, sigma: 0.5, dim: 2 };
    let graphs = generate(&data, 0)?;
    let cfg = TrainConfig { epochs: 10, lr: 5e-3, warmup_epochs: 2, layers: 2, hidden: 16, k: 8, ..TrainConfig::default() };
    let out = fit(&graphs, &cfg, |r| {
        println!("epoch {:>2} loss {:.4} train acc {:.3} ({:.2}s)", r.epoch, r.loss, r.train_acc, r.epoch_seconds)
    })?;
    println!("test accuracy {:.3}", out.test_acc);
    Ok(())
}
