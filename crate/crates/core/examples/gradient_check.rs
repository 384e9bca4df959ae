//! Analytic gradients of k-MIP attention against central differences.

use kmip::attention::{kmip_attention_backward, kmip_attention_forward, AttentionParams};
use kmip::mipkernel::TileConfig;
use kmip::{Matrix, Rng, Workspace};

fn loss(x: &Matrix, p: &AttentionParams, c: &Matrix) -> f64 {
    let y = kmip_attention_forward(x, p, TileConfig::default(), &Workspace::new()).unwrap().0;
    y.hadamard(c).unwrap().sum()
}

fn main() -> kmip::Result<()> {
    let mut rng = Rng::new(3);
    let x: Matrix = Matrix::random_normal(12, 5, &mut rng);
    let p: AttentionParams = AttentionParams::random(5, 2, 3, 3, 4, &mut rng);
    let c = Matrix::random_normal(12, 5, &mut rng);

    let (_, tape) = kmip_attention_forward(&x, &p, TileConfig::default(), &Workspace::new())?;
    let (gx, _) = kmip_attention_backward(&tape, &x, &p, &c)?;

    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut xx = x.clone();
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let v = x.get(i, j);
            xx.set(i, j, v + h);
            let up = loss(&xx, &p, &c);
            xx.set(i, j, v - h);
            let down = loss(&xx, &p, &c);
            xx.set(i, j, v);
            worst = worst.max((gx.get(i, j) - (up - down) / (2.0 * h)).abs());
        }
    }
    println!("max |analytic - numeric| over dL/dX: {worst:.3e}");
    Ok(())
}
