//! How closely k-MIP attention tracks dense attention for a range of k.

use kmip::cli::{approx_study, default_k_list};

fn main() -> kmip::Result<()> {
    let n = 500;
    let rows = approx_study(n, 10, 1, &default_k_list(n), 2, None, 0)?;
    println!("{:>5} {:>12} {:>12}", "k", "mean L2", "top-k mass");
    for r in rows {
        println!("{:>5} {:>12.5} {:>12.5}", r.k, r.l2_mean, r.cum_weight_mean);
    }
    Ok(())
}
