//! k-MIP attention against dense attention as k grows.

use kmip::attention::{full_attention_forward, kmip_attention_forward, AttentionParams};
use kmip::mipkernel::TileConfig;
use kmip::{Matrix, Rng, Workspace};

fn main() -> kmip::Result<()> {
    let mut rng = Rng::new(7);
    let n = 256;
    let x: Matrix = Matrix::random_normal(n, 16, &mut rng);
    let base: AttentionParams = AttentionParams::random(16, 4, 8, 8, n, &mut rng);
    let ws = Workspace::new();
    let full = full_attention_forward(&x, &base, &ws)?.0;
    for k in [1, 4, 16, 64, n] {
        let p = AttentionParams { k, ..base.clone() };
        let y = kmip_attention_forward(&x, &p, TileConfig::default(), &ws)?.0;
        println!("k = {k:>3}: max |y_kmip - y_full| = {:.3e}", y.max_abs_diff(&full)?);
    }
    Ok(())
}
