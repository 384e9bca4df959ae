//! Peak workspace of dense and k-MIP attention as N doubles.

use kmip::attention::memory::AttentionShape;
use kmip::attention::TopKSelector;
use kmip::mipkernel::TileConfig;
use kmip::stats::poly_fit;

fn main() {
    let (mut ns, mut tiled) = (Vec::new(), Vec::new());
    println!("{:>7} {:>16} {:>16} {:>14}", "N", "full", "kmip_naive", "kmip_tiled");
    for p in 10..=18 {
        let n = 1usize << p;
        let s = AttentionShape { n, d_model: 10, heads: 1, d_k: 10, d_v: 10, k: 10 };
        let t = s.kmip_peak_bytes::<f64>(TopKSelector::Tiled(TileConfig::default()), 1, true);
        println!(
            "{n:>7} {:>16} {:>16} {t:>14}",
            s.full_peak_bytes::<f64>(true),
            s.kmip_peak_bytes::<f64>(TopKSelector::Dense, 1, true)
        );
        ns.push(n as f64);
        tiled.push(t as f64);
    }
    let fit = poly_fit(&ns, &tiled, 1).unwrap();
    println!("tiled peak ~ {:.1} + {:.1} N bytes (R^2 = {:.6})", fit.coeffs[0], fit.coeffs[1], fit.r_squared);
}
