use std::path::PathBuf;

use clap::Args;

use super::{emit, GlobalArgs};
use crate::error::Result;
use crate::graph::Graph;
use crate::wl::{distinguishes, wl1_distinguishes, EncodingScheme};

#[derive(Args, Debug, Clone)]
pub struct WlArgs {
    pub graph_a: PathBuf,
    pub graph_b: PathBuf,
    /// `wl1`, `constant`, `lap_pe[:M]`, `rwse[:M]`, `gps`, `gps_lap_pe[:M]` or `gps_rwse[:M]`.
    #[arg(long, default_value = "constant")]
    pub scheme: String,
    #[arg(long, default_value_t = 12)]
    pub max_iters: usize,
}

/// Emits `{"distinguished", "iteration", "classes_per_iter"}` as JSON.
pub fn run_wl(g: &GlobalArgs, a: &WlArgs) -> Result<()> {
    let ga = Graph::load(&a.graph_a)?;
    let gb = Graph::load(&a.graph_b)?;
    let verdict = if a.scheme == "wl1" {
        wl1_distinguishes(&ga, &gb, a.max_iters)?
    } else {
        let scheme: EncodingScheme = a.scheme.parse()?;
        distinguishes(&ga, &gb, &scheme, a.max_iters)?
    };
    let mut text = serde_json::to_string(&verdict).expect("verdict serializes");
    text.push('\n');
    emit(g.out.as_deref(), &text)
}
