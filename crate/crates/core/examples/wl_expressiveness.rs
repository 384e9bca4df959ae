//! Colour refinement on two triangles versus a hexagon.

use kmip::gps::PeKind;
use kmip::wl::{check_refinement_property, distinguishes, wl1_distinguishes, EncodingScheme};
use kmip::Graph;

fn main() -> kmip::Result<()> {
    let a = Graph::cycle(3).disjoint_union(&Graph::cycle(3))?;
    let b = Graph::cycle(6);
    println!("1-WL: {:?}", wl1_distinguishes(&a, &b, 12)?);
    for scheme in [
        EncodingScheme::constant(),
        EncodingScheme::lap_pe(8),
        EncodingScheme::rwse(4),
        EncodingScheme::gps(PeKind::None, None),
        EncodingScheme::gps(PeKind::LapPe(3), None),
    ] {
        let d = distinguishes(&a, &b, &scheme, 12)?;
        println!("{:<12} distinguished={} at iteration {:?}", scheme.name, d.distinguished, d.iteration);
    }
    let v = check_refinement_property(&Graph::path(3), &Graph::cycle(3), &EncodingScheme::constant(), &EncodingScheme::rwse(3), 12)?;
    println!("P3 vs C3, rwse refines constant: {}", v.holds);
    Ok(())
}
