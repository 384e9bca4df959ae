//! Structural encoding schemes `S = (f_A, f_R)`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::spectral::{laplacian_pe, laplacian_spectrum, rwse, walk_matrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::gps::PeKind;
use crate::matrix::{matmul, Matrix};

/// Default step below which real-valued encodings are treated as equal.
pub const DEFAULT_Q: f64 = 1e-8;

/// One atom of a color description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Token {
    Int(i64),
    /// Compared up to the scheme's quantization step.
    Real(f64),
}

impl From<bool> for Token {
    fn from(b: bool) -> Self {
        Token::Int(b as i64)
    }
}

pub type AbsoluteFn = dyn Fn(usize, &Graph) -> Vec<Token> + Send + Sync;
pub type RelativeFn = dyn Fn(usize, usize, &Graph) -> Vec<Token> + Send + Sync;

#[derive(Clone)]
pub enum SchemeKind {
    /// `f_A` constant; `f_R(v, u)` = (edge `u -> v`, `u == v`). Recovers 1-WL.
    Constant,
    /// Constant `f_R`; `f_A` holds the `m` smallest Laplacian eigenvalues and,
    /// for each simple one, the node's absolute eigenvector entry.
    LapPe(usize),
    /// Constant `f_R`; `f_A` is the node's `m` random-walk return probabilities.
    Rwse(usize),
    /// The scheme induced by a GPS model: `f_A(v) = nu(A)_v` and
    /// `f_R(v, u)` = (edge `u -> v`, `u == v`, features of edge `u -> v`, `mu(A)_uv`)
    /// where `mu(A)_uv` lists `(D^-1 A)^t_uv` for `t = 1..=mu` when set.
    Gps { nu: PeKind, mu: Option<usize> },
    Custom { f_a: Arc<AbsoluteFn>, f_r: Arc<RelativeFn> },
}

#[derive(Clone)]
pub struct EncodingScheme {
    pub name: String,
    pub kind: SchemeKind,
    pub q: f64,
}

impl fmt::Debug for EncodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncodingScheme({}, q={})", self.name, self.q)
    }
}

impl EncodingScheme {
    pub fn new(kind: SchemeKind) -> Self {
        let name = match &kind {
            SchemeKind::Constant => "constant".to_string(),
            SchemeKind::LapPe(m) => format!("lap_pe:{m}"),
            SchemeKind::Rwse(m) => format!("rwse:{m}"),
            SchemeKind::Gps { nu, mu: None } => format!("gps:{nu}"),
            SchemeKind::Gps { nu, mu: Some(t) } => format!("gps:{nu}:mu{t}"),
            SchemeKind::Custom { .. } => "custom".to_string(),
        };
        Self { name, kind, q: DEFAULT_Q }
    }

    pub fn constant() -> Self {
        Self::new(SchemeKind::Constant)
    }

    pub fn lap_pe(m: usize) -> Self {
        Self::new(SchemeKind::LapPe(m))
    }

    pub fn rwse(m: usize) -> Self {
        Self::new(SchemeKind::Rwse(m))
    }

    pub fn gps(nu: PeKind, mu: Option<usize>) -> Self {
        Self::new(SchemeKind::Gps { nu, mu })
    }

    pub fn custom(
        name: &str,
        f_a: impl Fn(usize, &Graph) -> Vec<Token> + Send + Sync + 'static,
        f_r: impl Fn(usize, usize, &Graph) -> Vec<Token> + Send + Sync + 'static,
    ) -> Self {
        let mut s = Self::new(SchemeKind::Custom { f_a: Arc::new(f_a), f_r: Arc::new(f_r) });
        s.name = name.to_string();
        s
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    /// `f_A` for every node and `f_R(v, r)` for every ordered pair, as `rel[v][r]`.
    pub(crate) fn encode(&self, g: &Graph) -> (Vec<Vec<Token>>, Vec<Vec<Vec<Token>>>) {
        let n = g.num_nodes();
        let flags = |v: usize, r: usize| vec![Token::from(g.has_edge(r, v)), Token::from(r == v)];
        match &self.kind {
            SchemeKind::Constant => (vec![Vec::new(); n], pairs(n, flags_table(g))),
            SchemeKind::LapPe(m) => (lap_pe_colors(g, *m, self.q), pairs(n, flags_table(g))),
            SchemeKind::Rwse(m) => (rows_as_tokens(&rwse(g, *m)), pairs(n, flags_table(g))),
            SchemeKind::Gps { nu, mu } => {
                let absolute = match nu {
                    PeKind::None => vec![Vec::new(); n],
                    PeKind::LapPe(m) => rows_as_tokens(&laplacian_pe(g, *m)),
                    PeKind::Rwse(m) => rows_as_tokens(&rwse(g, *m)),
                };
                let edge_index: HashMap<(usize, usize), usize> =
                    g.edges().iter().enumerate().map(|(i, &e)| (e, i)).collect();
                let powers = mu.map(|t| walk_powers(g, t)).unwrap_or_default();
                let rel = (0..n)
                    .map(|v| {
                        (0..n)
                            .map(|r| {
                                let mut d = flags(v, r);
                                if let Some(&ei) = edge_index.get(&(r, v)) {
                                    d.extend(g.edge_features().row(ei).iter().map(|&x| Token::Real(x)));
                                }
                                d.extend(powers.iter().map(|p| Token::Real(p.get(r, v))));
                                d
                            })
                            .collect()
                    })
                    .collect();
                (absolute, rel)
            }
            SchemeKind::Custom { f_a, f_r } => {
                let absolute = (0..n).map(|v| f_a(v, g)).collect();
                let rel = (0..n).map(|v| (0..n).map(|r| f_r(v, r, g)).collect()).collect();
                (absolute, rel)
            }
        }
    }
}

impl FromStr for EncodingScheme {
    type Err = Error;

    /// `constant`, `lap_pe[:M]`, `rwse[:M]`, `gps` (no PE), `gps_lap_pe[:M]`, `gps_rwse[:M]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, m) = match s.split_once(':') {
            Some((n, m)) => {
                let m: usize = m
                    .parse()
                    .ok()
                    .filter(|&m| m > 0)
                    .ok_or_else(|| Error::Validation(format!("bad dimension in scheme '{s}'")))?;
                (n, Some(m))
            }
            None => (s, None),
        };
        let m = m.unwrap_or(8);
        match name {
            "constant" => Ok(Self::constant()),
            "lap_pe" => Ok(Self::lap_pe(m)),
            "rwse" => Ok(Self::rwse(m)),
            "gps" => Ok(Self::gps(PeKind::None, None)),
            "gps_lap_pe" => Ok(Self::gps(PeKind::LapPe(m), None)),
            "gps_rwse" => Ok(Self::gps(PeKind::Rwse(m), None)),
            _ => Err(Error::Validation(format!(
                "unknown scheme '{s}'; expected constant, lap_pe[:M], rwse[:M], gps, gps_lap_pe[:M] or gps_rwse[:M]"
            ))),
        }
    }
}

fn flags_table(g: &Graph) -> impl Fn(usize, usize) -> Vec<Token> + '_ {
    move |v, r| vec![Token::from(g.has_edge(r, v)), Token::from(r == v)]
}

fn pairs(n: usize, f: impl Fn(usize, usize) -> Vec<Token>) -> Vec<Vec<Vec<Token>>> {
    (0..n).map(|v| (0..n).map(|r| f(v, r)).collect()).collect()
}

fn rows_as_tokens(m: &Matrix) -> Vec<Vec<Token>> {
    (0..m.rows()).map(|i| m.row(i).iter().map(|&x| Token::Real(x)).collect()).collect()
}

fn walk_powers(g: &Graph, t: usize) -> Vec<Matrix> {
    let p = walk_matrix(g);
    let mut out = vec![p.clone()];
    for _ in 1..t {
        let next = matmul(out.last().expect("non-empty"), &p).expect("square");
        out.push(next);
    }
    out
}

/// Per node: for each of the `m` smallest eigenvalues, the value, plus the
/// absolute eigenvector entry when no other eigenvalue lies within `q`.
/// Slots beyond `N` are marked as padding.
fn lap_pe_colors(g: &Graph, m: usize, q: f64) -> Vec<Vec<Token>> {
    let n = g.num_nodes();
    let (vals, vecs) = laplacian_spectrum(g);
    let tol = q.max(1e-9);
    let simple: Vec<bool> = (0..n)
        .map(|c| (0..n).all(|o| o == c || (vals[o] - vals[c]).abs() > tol))
        .collect();
    (0..n)
        .map(|v| {
            let mut d = Vec::with_capacity(3 * m);
            for c in 0..m {
                if c >= n {
                    d.push(Token::Int(-1));
                    continue;
                }
                d.push(Token::Int(simple[c] as i64));
                d.push(Token::Real(vals[c]));
                if simple[c] {
                    d.push(Token::Real(vecs.get(v, c).abs()));
                }
            }
            d
        })
        .collect()
}
