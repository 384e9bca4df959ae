mod common;

use kmip::attention::AttentionKind;
use kmip::gps::{model_forward, GpsModel, ModelConfig, PeKind};
use kmip::graph::Graph;
use kmip::rng::Rng;
use kmip::wl::{
    check_refinement_property, distinguishes, laplacian_spectrum, seg_wl_refine, wl1_distinguishes, wl1_refine,
    Coloring, EncodingScheme,
};
use kmip::Workspace;

use common::{featured_graph, max_row_set_diff, random_graph};

fn directed_graph(n: usize, p: f64, rng: &mut Rng) -> Graph {
    let edges = (0..n)
        .flat_map(|s| (0..n).map(move |d| (s, d)))
        .filter(|&(s, d)| s != d)
        .filter(|_| rng.bernoulli(p))
        .collect::<Vec<_>>();
    Graph::from_edges(n, edges).unwrap()
}

fn any_graph(rng: &mut Rng, max_n: usize) -> Graph {
    let n = 1 + rng.below(max_n);
    let p = 0.1 + 0.5 * rng.uniform();
    if rng.bernoulli(0.3) {
        directed_graph(n, p, rng)
    } else {
        random_graph(n, p, rng)
    }
}

fn two_triangles() -> Graph {
    Graph::cycle(3).disjoint_union(&Graph::cycle(3)).unwrap()
}

#[test]
fn constant_scheme_recovers_wl1_partitions() {
    let mut rng = Rng::new(1);
    for i in 0..500 {
        let g = any_graph(&mut rng, 15);
        let n = g.num_nodes();
        let a = wl1_refine(&g, &Coloring::constant(n), 20).unwrap();
        let b = seg_wl_refine(&g, &EncodingScheme::constant(), 20).unwrap();
        assert_eq!(a.len(), b.len(), "graph {i}");
        for (l, (ca, cb)) in a.iter().zip(&b).enumerate() {
            assert!(ca.same_partition(cb), "graph {i}, iteration {l}");
        }
    }
}

#[test]
fn partitions_only_split_and_stabilize_within_n() {
    let mut rng = Rng::new(2);
    let schemes = [EncodingScheme::constant(), EncodingScheme::rwse(3), EncodingScheme::lap_pe(3)];
    for _ in 0..100 {
        let g = any_graph(&mut rng, 12);
        let n = g.num_nodes();
        let mut runs = vec![wl1_refine(&g, &Coloring::constant(n), n + 2).unwrap()];
        runs.extend(schemes.iter().map(|s| seg_wl_refine(&g, s, n + 2).unwrap()));
        for cols in runs {
            assert!(cols.len() <= n + 1);
            for w in cols.windows(2) {
                assert!(w[1].refines(&w[0]));
            }
        }
    }
}

#[test]
fn fig4_pair() {
    let (a, b) = (two_triangles(), Graph::cycle(6));
    let c = distinguishes(&a, &b, &EncodingScheme::constant(), 12).unwrap();
    assert!(!c.distinguished && c.iteration.is_none());
    assert!(!wl1_distinguishes(&a, &b, 12).unwrap().distinguished);
    let l = distinguishes(&a, &b, &"lap_pe".parse().unwrap(), 12).unwrap();
    assert_eq!((l.distinguished, l.iteration), (true, Some(0)));
    let gps = distinguishes(&a, &b, &EncodingScheme::gps(PeKind::LapPe(6), None), 12).unwrap();
    assert_eq!(gps.iteration, Some(0));

    let (sa, _) = laplacian_spectrum(&a);
    let (sb, _) = laplacian_spectrum(&b);
    for (x, y) in sa.iter().zip([0.0, 0.0, 3.0, 3.0, 3.0, 3.0]) {
        assert!((x - y).abs() < 1e-8);
    }
    for (x, y) in sb.iter().zip([0.0, 1.0, 1.0, 3.0, 3.0, 4.0]) {
        assert!((x - y).abs() < 1e-8);
    }
}

#[test]
fn p3_versus_c3() {
    let (p3, c3) = (Graph::path(3), Graph::cycle(3));
    let d = distinguishes(&p3, &c3, &EncodingScheme::constant(), 12).unwrap();
    assert_eq!(d.iteration, Some(1));
    let v = check_refinement_property(&p3, &c3, &EncodingScheme::constant(), &EncodingScheme::lap_pe(3), 12).unwrap();
    assert!(v.holds);
    assert!(v.fine.iteration.unwrap() <= 1);
}

#[test]
fn identical_graphs_hold_vacuously() {
    let g = Graph::cycle(5);
    let v = check_refinement_property(&g, &g, &EncodingScheme::constant(), &EncodingScheme::rwse(4), 12).unwrap();
    assert!(v.holds);
    assert!(!v.coarse.distinguished && !v.fine.distinguished);
}

#[test]
fn refinement_property_on_random_pairs() {
    let mut rng = Rng::new(3);
    let fine = [EncodingScheme::lap_pe(4), EncodingScheme::rwse(4), EncodingScheme::gps(PeKind::Rwse(3), Some(2))];
    let mut violations = Vec::new();
    for i in 0..200 {
        let n = 2 + rng.below(11);
        let p = 0.2 + 0.4 * rng.uniform();
        let (a, b) = (random_graph(n, p, &mut rng), random_graph(n, p, &mut rng));
        let v = check_refinement_property(&a, &b, &EncodingScheme::constant(), &fine[i % 3], 12).unwrap();
        if !v.holds {
            violations.push(v.detail);
        }
    }
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn isomorphic_copies_are_never_distinguished() {
    let mut rng = Rng::new(4);
    let schemes: Vec<EncodingScheme> = ["constant", "lap_pe:4", "rwse:4", "gps", "gps_rwse:3"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    for i in 0..100 {
        let n = 1 + rng.below(10);
        let g = featured_graph(n, 0.4, 2, 1, &mut rng);
        let h = g.relabel(&rng.permutation(n)).unwrap();
        assert!(!wl1_distinguishes(&g, &h, 12).unwrap().distinguished, "graph {i}");
        for s in &schemes {
            assert!(!distinguishes(&g, &h, s, 12).unwrap().distinguished, "graph {i}, {}", s.name);
        }
    }
}

#[test]
fn unknown_scheme_name_is_rejected() {
    assert!("spectral".parse::<EncodingScheme>().is_err());
    assert!("lap_pe:0".parse::<EncodingScheme>().is_err());
}

fn plain_config(k: usize) -> ModelConfig {
    ModelConfig {
        d_in: 1,
        d_edge_in: 0,
        hidden: 6,
        layers: 2,
        heads: 2,
        d_k: 3,
        d_v: 3,
        k,
        mlp_hidden: 8,
        classes: 3,
        pe: PeKind::None,
        layer_norm: true,
        dropout: 0.0,
    }
}

#[test]
fn gps_agrees_on_pairs_the_scheme_cannot_separate() {
    let mut rng = Rng::new(5);
    let mut pairs = vec![
        (two_triangles(), Graph::cycle(6)),
        (Graph::cycle(4).disjoint_union(&Graph::cycle(4)).unwrap(), Graph::cycle(8)),
        (Graph::cycle(3).disjoint_union(&Graph::cycle(5)).unwrap(), Graph::cycle(8)),
    ];
    for _ in 0..40 {
        let n = 2 + rng.below(8);
        let g = random_graph(n, 0.4, &mut rng);
        let h = if rng.bernoulli(0.5) {
            g.relabel(&rng.permutation(n)).unwrap()
        } else {
            random_graph(n, 0.4, &mut rng)
        };
        pairs.push((g, h));
    }
    let scheme = EncodingScheme::gps(PeKind::None, None);
    let ws = Workspace::new();
    let mut tested = 0;
    for (a, b) in &pairs {
        if distinguishes(a, b, &scheme, 12).unwrap().distinguished {
            continue;
        }
        tested += 1;
        for kind in [AttentionKind::Kmip, AttentionKind::Full] {
            let m = GpsModel::new(plain_config(3), &mut rng).unwrap();
            let ya = model_forward(a, &m, kind, &ws).unwrap();
            let yb = model_forward(b, &m, kind, &ws).unwrap();
            assert!(max_row_set_diff(&ya, &yb) < 1e-6);
        }
    }
    assert!(tested >= 20, "{tested}");
}
