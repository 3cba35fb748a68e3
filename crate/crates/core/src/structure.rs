//! Dependency graphs extracted from fitted networks.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::depnet::DependencyNetwork;
use crate::error::{Error, Result};

/// `d x d` matrix with entry `(j, i)` the coefficient of variable `j` in the
/// model for variable `i`. Intercepts are excluded; the diagonal is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix(pub DMatrix<f64>);

impl AdjacencyMatrix {
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.0[(from, to)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

pub type EdgeSet = Vec<Edge>;

pub fn adjacency(dn: &DependencyNetwork) -> AdjacencyMatrix {
    let d = dn.d;
    AdjacencyMatrix(DMatrix::from_fn(d, d, |from, to| {
        dn.edge_weight(from, to).unwrap_or(0.0)
    }))
}

/// The `count` largest strictly positive entries, largest first; equal weights
/// are ordered by `(from, to)`.
pub fn top_positive_edges(a: &AdjacencyMatrix, count: usize) -> EdgeSet {
    let d = a.dim();
    let mut edges: Vec<Edge> = (0..d)
        .flat_map(|from| (0..d).map(move |to| (from, to)))
        .filter(|&(from, to)| from != to && a.get(from, to) > 0.0)
        .map(|(from, to)| Edge {
            from,
            to,
            weight: a.get(from, to),
        })
        .collect();
    edges.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then(x.from.cmp(&y.from))
            .then(x.to.cmp(&y.to))
    });
    edges.truncate(count);
    edges
}

/// `|A - B|_F`.
pub fn frobenius_difference(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<f64> {
    if a.0.shape() != b.0.shape() {
        return Err(Error::DimensionMismatch {
            what: "adjacency dimension",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok((&a.0 - &b.0).norm())
}

fn label(names: Option<&[String]>, i: usize) -> String {
    names
        .and_then(|n| n.get(i).cloned())
        .unwrap_or_else(|| i.to_string())
}

/// CSV with header `from,to,weight`.
pub fn write_edges_csv<W: Write>(
    edges: &[Edge],
    names: Option<&[String]>,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["from", "to", "weight"])?;
    for e in edges {
        out.write_record([
            label(names, e.from),
            label(names, e.to),
            e.weight.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Graphviz `digraph` description of the edges.
pub fn write_edges_dot<W: Write>(
    edges: &[Edge],
    names: Option<&[String]>,
    mut writer: W,
) -> Result<()> {
    writeln!(writer, "digraph dependency_network {{")?;
    for e in edges {
        writeln!(
            writer,
            "  \"{}\" -> \"{}\" [weight={}];",
            label(names, e.from).replace('"', "\\\""),
            label(names, e.to).replace('"', "\\\""),
            e.weight
        )?;
    }
    writeln!(writer, "}}")?;
    Ok(())
}
