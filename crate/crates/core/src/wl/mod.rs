//! Colour refinement: 1-WL and the SEG-WL test over structural encoding schemes.
//!
//! Colours are interned from exact byte serializations of their descriptions,
//! so two nodes share a colour only if their descriptions are equal. Several
//! graphs are always refined together with shared interners, which makes
//! colour IDs comparable across graphs.

mod scheme;
mod spectral;

use std::collections::HashMap;

use serde::Serialize;

pub use scheme::{AbsoluteFn, EncodingScheme, RelativeFn, SchemeKind, Token, DEFAULT_Q};
pub use spectral::{canonical_sign, jacobi_eigen, laplacian, laplacian_pe, laplacian_spectrum, rwse, walk_matrix, JACOBI_TOL};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Colour per node with IDs dense in `0..num_classes` for this graph's run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<usize>,
}

impl Coloring {
    pub fn new(colors: Vec<usize>) -> Self {
        Self { colors }
    }

    pub fn constant(n: usize) -> Self {
        Self { colors: vec![0; n] }
    }

    pub fn num_classes(&self) -> usize {
        let mut c = self.colors.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// The same partition with classes numbered by first occurrence.
    pub fn canonical(&self) -> Coloring {
        let mut map = HashMap::new();
        let colors = self
            .colors
            .iter()
            .map(|c| {
                let next = map.len();
                *map.entry(*c).or_insert(next)
            })
            .collect();
        Coloring { colors }
    }

    pub fn same_partition(&self, other: &Coloring) -> bool {
        self.canonical() == other.canonical()
    }

    /// True if every class of `self` lies inside one class of `coarser`.
    pub fn refines(&self, coarser: &Coloring) -> bool {
        let mut map = HashMap::new();
        self.colors
            .iter()
            .zip(&coarser.colors)
            .all(|(f, c)| *map.entry(*f).or_insert(*c) == *c)
    }

    /// Sorted colour multiset.
    pub fn histogram(&self) -> Vec<usize> {
        let mut c = self.colors.clone();
        c.sort_unstable();
        c
    }
}

/// Maps descriptions to dense IDs in order of first appearance.
#[derive(Default)]
struct Interner {
    ids: HashMap<Vec<u8>, usize>,
}

impl Interner {
    fn intern(&mut self, bytes: Vec<u8>) -> usize {
        let next = self.ids.len();
        *self.ids.entry(bytes).or_insert(next)
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

/// Groups real values whose sorted neighbours lie within `q` of each other.
struct Quantizer {
    values: Vec<f64>,
    cluster: Vec<u64>,
}

impl Quantizer {
    fn new(mut values: Vec<f64>, q: f64) -> Self {
        values.sort_by(|a, b| a.total_cmp(b));
        values.dedup_by(|a, b| a.to_bits() == b.to_bits());
        let mut cluster = Vec::with_capacity(values.len());
        let mut id = 0u64;
        for i in 0..values.len() {
            if i > 0 && !(values[i] - values[i - 1] <= q) {
                id += 1;
            }
            cluster.push(id);
        }
        Self { values, cluster }
    }

    fn id(&self, v: f64) -> u64 {
        let i = self
            .values
            .binary_search_by(|x| x.total_cmp(&v))
            .expect("value was registered with the quantizer");
        self.cluster[i]
    }
}

fn serialize(tokens: &[Token], quant: &Quantizer, out: &mut Vec<u8>) {
    out.extend((tokens.len() as u64).to_le_bytes());
    for t in tokens {
        match *t {
            Token::Int(i) => {
                out.push(0);
                out.extend(i.to_le_bytes());
            }
            Token::Real(x) => {
                out.push(1);
                out.extend(quant.id(x).to_le_bytes());
            }
        }
    }
}

fn collect_reals<'a>(tokens: impl IntoIterator<Item = &'a Token>, into: &mut Vec<f64>) {
    for t in tokens {
        if let Token::Real(x) = *t {
            into.push(x);
        }
    }
}

/// Result of refining several graphs with shared colour interners.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointRefinement {
    /// `colorings[l][i]` is graph `i` at iteration `l`.
    pub colorings: Vec<Vec<Coloring>>,
    /// Distinct colours over all graphs, per iteration.
    pub classes: Vec<usize>,
    /// First iteration whose partition equals that of the next iteration.
    pub stable_at: Option<usize>,
}

impl JointRefinement {
    pub fn for_graph(&self, i: usize) -> Vec<Coloring> {
        self.colorings.iter().map(|it| it[i].clone()).collect()
    }

    /// First iteration at which graphs `a` and `b` have different colour multisets.
    pub fn first_difference(&self, a: usize, b: usize) -> Option<usize> {
        self.colorings
            .iter()
            .position(|it| it[a].histogram() != it[b].histogram())
    }
}

/// Drives the refinement loop: `step` maps iteration `l - 1` colours to
/// serialized descriptions for iteration `l`.
fn run_joint(
    initial: Vec<Vec<Vec<u8>>>,
    max_iters: usize,
    mut step: impl FnMut(&[Coloring], usize, usize) -> Vec<u8>,
) -> JointRefinement {
    let intern_all = |descs: Vec<Vec<Vec<u8>>>| -> (Vec<Coloring>, usize) {
        let mut interner = Interner::default();
        let cols = descs
            .into_iter()
            .map(|g| Coloring::new(g.into_iter().map(|d| interner.intern(d)).collect()))
            .collect();
        (cols, interner.len())
    };
    let (first, count) = intern_all(initial);
    let mut colorings = vec![first];
    let mut classes = vec![count];
    let mut stable_at = None;
    for l in 1..=max_iters {
        let prev = colorings.last().expect("non-empty");
        let descs = prev
            .iter()
            .enumerate()
            .map(|(gi, c)| (0..c.colors.len()).map(|v| step(prev, gi, v)).collect())
            .collect();
        let (next, count) = intern_all(descs);
        if count == classes[l - 1] {
            stable_at = Some(l - 1);
            break;
        }
        colorings.push(next);
        classes.push(count);
    }
    JointRefinement { colorings, classes, stable_at }
}

/// Joint 1-WL: `c^l(v) = tau(c^{l-1}(v), {{c^{l-1}(u) : u -> v}})`.
///
/// Initial colours are taken as given and must be comparable across graphs.
pub fn wl1_refine_joint(graphs: &[&Graph], init: &[Coloring], max_iters: usize) -> Result<JointRefinement> {
    if graphs.len() != init.len() {
        return Err(Error::Validation("one initial coloring per graph required".into()));
    }
    for (g, c) in graphs.iter().zip(init) {
        if c.colors.len() != g.num_nodes() {
            return Err(Error::Validation(format!(
                "initial coloring covers {} of {} nodes",
                c.colors.len(),
                g.num_nodes()
            )));
        }
    }
    let in_nbrs: Vec<Vec<Vec<usize>>> = graphs
        .iter()
        .map(|g| g.in_edges().into_iter().map(|l| l.into_iter().map(|(s, _)| s).collect()).collect())
        .collect();
    let initial = init
        .iter()
        .map(|c| c.colors.iter().map(|&x| (x as u64).to_le_bytes().to_vec()).collect())
        .collect();
    Ok(run_joint(initial, max_iters, |prev, gi, v| {
        let colors = &prev[gi].colors;
        let mut nb: Vec<usize> = in_nbrs[gi][v].iter().map(|&u| colors[u]).collect();
        nb.sort_unstable();
        let mut d = Vec::with_capacity(8 * (nb.len() + 2));
        d.extend((colors[v] as u64).to_le_bytes());
        d.extend((nb.len() as u64).to_le_bytes());
        for c in nb {
            d.extend((c as u64).to_le_bytes());
        }
        d
    }))
}

/// 1-WL on one graph. Stops once the partition no longer changes.
pub fn wl1_refine(g: &Graph, init: &Coloring, max_iters: usize) -> Result<Vec<Coloring>> {
    Ok(wl1_refine_joint(&[g], std::slice::from_ref(init), max_iters)?.for_graph(0))
}

/// Initial 1-WL colours from node features, shared across `graphs`.
pub fn feature_colorings(graphs: &[&Graph], q: f64) -> Vec<Coloring> {
    let mut reals = Vec::new();
    for g in graphs {
        reals.extend_from_slice(g.node_features().as_slice());
    }
    let quant = Quantizer::new(reals, q);
    let mut interner = Interner::default();
    graphs
        .iter()
        .map(|g| {
            let x = g.node_features();
            Coloring::new(
                (0..g.num_nodes())
                    .map(|v| {
                        let tokens: Vec<Token> = x.row(v).iter().map(|&r| Token::Real(r)).collect();
                        let mut b = Vec::new();
                        serialize(&tokens, &quant, &mut b);
                        interner.intern(b)
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Joint SEG-WL:
/// `c^0(v) = Phi_0(X_v, f_A(v))`, `c^l(v) = Phi({{ (c^{l-1}(r), f_R(v, r)) : r in V }})`.
pub fn seg_wl_refine_joint(graphs: &[&Graph], scheme: &EncodingScheme, max_iters: usize) -> Result<JointRefinement> {
    let encoded: Vec<_> = graphs.iter().map(|g| scheme.encode(g)).collect();
    let mut reals = Vec::new();
    for (g, (abs, rel)) in graphs.iter().zip(&encoded) {
        reals.extend_from_slice(g.node_features().as_slice());
        for a in abs {
            collect_reals(a, &mut reals);
        }
        for row in rel {
            for d in row {
                collect_reals(d, &mut reals);
            }
        }
    }
    let quant = Quantizer::new(reals, scheme.q);

    let mut rel_interner = Interner::default();
    let mut rel_ids: Vec<Vec<Vec<u64>>> = Vec::with_capacity(graphs.len());
    for (gi, (_, rel)) in encoded.iter().enumerate() {
        let ids: Vec<Vec<u64>> = rel
            .iter()
            .map(|row| {
                row.iter()
                    .map(|d| {
                        let mut b = Vec::new();
                        serialize(d, &quant, &mut b);
                        rel_interner.intern(b) as u64
                    })
                    .collect()
            })
            .collect();
        check_strongly_regular(&ids).map_err(|detail| {
            Error::Scheme(format!("scheme '{}' is not strongly regular on graph {gi}: {detail}", scheme.name))
        })?;
        rel_ids.push(ids);
    }

    let initial = graphs
        .iter()
        .zip(&encoded)
        .map(|(g, (abs, _))| {
            let x = g.node_features();
            (0..g.num_nodes())
                .map(|v| {
                    let feats: Vec<Token> = x.row(v).iter().map(|&r| Token::Real(r)).collect();
                    let mut b = Vec::new();
                    serialize(&feats, &quant, &mut b);
                    serialize(&abs[v], &quant, &mut b);
                    b
                })
                .collect()
        })
        .collect();
    Ok(run_joint(initial, max_iters, |prev, gi, v| {
        let colors = &prev[gi].colors;
        let mut pairs: Vec<(u64, u64)> = colors
            .iter()
            .zip(&rel_ids[gi][v])
            .map(|(&c, &r)| (c as u64, r))
            .collect();
        pairs.sort_unstable();
        let mut d = Vec::with_capacity(16 * pairs.len() + 8);
        d.extend((pairs.len() as u64).to_le_bytes());
        for (c, r) in pairs {
            d.extend(c.to_le_bytes());
            d.extend(r.to_le_bytes());
        }
        d
    }))
}

/// SEG-WL on one graph.
pub fn seg_wl_refine(g: &Graph, scheme: &EncodingScheme, max_iters: usize) -> Result<Vec<Coloring>> {
    Ok(seg_wl_refine_joint(&[g], scheme, max_iters)?.for_graph(0))
}

/// The relative descriptions of self-pairs must never occur off the diagonal.
fn check_strongly_regular(ids: &[Vec<u64>]) -> std::result::Result<(), String> {
    let diag: std::collections::HashSet<u64> = (0..ids.len()).map(|v| ids[v][v]).collect();
    for (v, row) in ids.iter().enumerate() {
        for (r, id) in row.iter().enumerate() {
            if r != v && diag.contains(id) {
                return Err(format!("f_R({v}, {r}) equals a self-pair description"));
            }
        }
    }
    Ok(())
}

/// Whether a refinement test separates two graphs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Distinction {
    pub distinguished: bool,
    /// First iteration with different colour multisets.
    pub iteration: Option<usize>,
    /// Joint distinct colour count per iteration.
    pub classes_per_iter: Vec<usize>,
}

impl Distinction {
    fn from_joint(r: &JointRefinement) -> Self {
        let iteration = r.first_difference(0, 1);
        Self { distinguished: iteration.is_some(), iteration, classes_per_iter: r.classes.clone() }
    }
}

/// Runs `scheme`'s SEG-WL test on both graphs with shared interners.
pub fn distinguishes(ga: &Graph, gb: &Graph, scheme: &EncodingScheme, max_iters: usize) -> Result<Distinction> {
    Ok(Distinction::from_joint(&seg_wl_refine_joint(&[ga, gb], scheme, max_iters)?))
}

/// 1-WL test on both graphs, starting from their node features.
pub fn wl1_distinguishes(ga: &Graph, gb: &Graph, max_iters: usize) -> Result<Distinction> {
    let init = feature_colorings(&[ga, gb], DEFAULT_Q);
    Ok(Distinction::from_joint(&wl1_refine_joint(&[ga, gb], &init, max_iters)?))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefinementVerdict {
    pub holds: bool,
    pub coarse: Distinction,
    pub fine: Distinction,
    pub detail: String,
}

/// Checks that if `coarse` separates the pair at iteration `t`, `fine` does so at some iteration `<= t`.
pub fn check_refinement_property(
    ga: &Graph,
    gb: &Graph,
    coarse: &EncodingScheme,
    fine: &EncodingScheme,
    max_iters: usize,
) -> Result<RefinementVerdict> {
    let c = distinguishes(ga, gb, coarse, max_iters)?;
    let f = distinguishes(ga, gb, fine, max_iters)?;
    let (holds, detail) = match (c.iteration, f.iteration) {
        (None, _) => (true, format!("{} does not distinguish", coarse.name)),
        (Some(t), Some(s)) if s <= t => (true, format!("{} at {t}, {} at {s}", coarse.name, fine.name)),
        (Some(t), s) => (
            false,
            format!("{} distinguishes at {t} but {} gives {s:?}", coarse.name, fine.name),
        ),
    };
    Ok(RefinementVerdict { holds, coarse: c, fine: f, detail })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> Graph {
        Graph::cycle(3).disjoint_union(&Graph::cycle(3)).unwrap()
    }

    #[test]
    fn c6_stays_one_class() {
        let cols = wl1_refine(&Graph::cycle(6), &Coloring::constant(6), 10).unwrap();
        assert!(cols.iter().all(|c| c.num_classes() == 1));
    }

    #[test]
    fn p3_splits_after_one_iteration() {
        let cols = wl1_refine(&Graph::path(3), &Coloring::constant(3), 10).unwrap();
        assert_eq!(cols[1].canonical().colors, vec![0, 1, 0]);
    }

    #[test]
    fn five_node_example_first_iteration() {
        // labels a,a,b,b,b; edges 0-1, 0-2, 1-2, 2-3, 3-4
        let g = Graph::undirected(5, &[(0, 1), (0, 2), (1, 2), (2, 3), (3, 4)]).unwrap();
        let init = Coloring::new(vec![0, 0, 1, 1, 1]);
        let cols = wl1_refine(&g, &init, 1).unwrap();
        assert_eq!(cols[1].canonical().colors, vec![0, 0, 1, 2, 3]);
    }

    #[test]
    fn single_node_is_stable_at_zero() {
        let g = Graph::from_edges(1, vec![]).unwrap();
        let r = seg_wl_refine_joint(&[&g], &EncodingScheme::constant(), 5).unwrap();
        assert_eq!(r.stable_at, Some(0));
        assert_eq!(r.colorings.len(), 1);
    }

    #[test]
    fn known_pairs() {
        let (a, b) = (two_triangles(), Graph::cycle(6));
        let d = distinguishes(&a, &b, &EncodingScheme::constant(), 12).unwrap();
        assert!(!d.distinguished);
        assert!(!wl1_distinguishes(&a, &b, 12).unwrap().distinguished);
        let d = distinguishes(&a, &b, &EncodingScheme::lap_pe(3), 12).unwrap();
        assert_eq!(d.iteration, Some(0));
        let d = distinguishes(&Graph::path(3), &Graph::cycle(3), &EncodingScheme::constant(), 12).unwrap();
        assert_eq!(d.iteration, Some(1));
    }

    #[test]
    fn non_regular_scheme_is_rejected() {
        let bad = EncodingScheme::custom("flat", |_, _| vec![], |_, _, _| vec![Token::Int(0)]);
        assert!(matches!(distinguishes(&Graph::cycle(3), &Graph::cycle(3), &bad, 3), Err(Error::Scheme(_))));
    }

    #[test]
    fn quantizer_merges_close_values_only() {
        let q = Quantizer::new(vec![1.0, 1.0 + 1e-12, 2.0, -0.0, 0.0], 1e-8);
        assert_eq!(q.id(1.0), q.id(1.0 + 1e-12));
        assert_ne!(q.id(1.0), q.id(2.0));
        assert_eq!(q.id(0.0), q.id(-0.0));
    }

    #[test]
    fn refinement_relation() {
        let fine = Coloring::new(vec![0, 1, 2, 2]);
        let coarse = Coloring::new(vec![5, 5, 7, 7]);
        assert!(fine.refines(&coarse));
        assert!(!coarse.refines(&fine));
        assert!(Coloring::new(vec![3, 3, 1]).same_partition(&Coloring::new(vec![0, 0, 9])));
    }
}
