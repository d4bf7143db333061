//! Input-to-output paths, the structure matrix, and the path-sum form of
//! the network output.

use std::io::Write;
use std::path::Path as FsPath;

use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::nn::forward;
use crate::rank::exact_rank_sparse;

pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// One node per layer, `nodes[0]` an input node and `nodes[L]` an output
/// node, plus the `L` edge indices connecting them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

impl Path {
    pub fn from_nodes(arch: &Architecture, nodes: Vec<usize>) -> Result<Self> {
        if nodes.len() != arch.depth() + 1 {
            return Err(Error::Shape(format!(
                "path needs {} nodes, got {}",
                arch.depth() + 1,
                nodes.len()
            )));
        }
        for (l, &n) in nodes.iter().enumerate() {
            if n >= arch.width(l) {
                return Err(Error::Shape(format!(
                    "node {n} out of range for layer {l} of width {}",
                    arch.width(l)
                )));
            }
        }
        let edges = (1..=arch.depth())
            .map(|l| arch.edge_index(l, nodes[l - 1], nodes[l]))
            .collect();
        Ok(Self { nodes, edges })
    }

    /// Builds a path from consecutive edges; fails if they do not chain.
    pub fn from_edges(arch: &Architecture, edges: &[usize]) -> Result<Self> {
        if edges.len() != arch.depth() {
            return Err(Error::Shape(format!(
                "path needs {} edges, got {}",
                arch.depth(),
                edges.len()
            )));
        }
        let mut nodes = Vec::with_capacity(edges.len() + 1);
        for (i, &e) in edges.iter().enumerate() {
            if e >= arch.num_edges() {
                return Err(Error::Shape(format!("edge {e} out of range")));
            }
            let edge = arch.edge(e);
            if edge.layer != i + 1 {
                return Err(Error::Shape(format!(
                    "edge {e} is in layer {}, expected layer {}",
                    edge.layer,
                    i + 1
                )));
            }
            if i == 0 {
                nodes.push(edge.src);
            } else if nodes[i] != edge.src {
                return Err(Error::Shape(format!("edge {e} does not continue the path")));
            }
            nodes.push(edge.dst);
        }
        Ok(Self {
            nodes,
            edges: edges.to_vec(),
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn input(&self) -> usize {
        self.nodes[0]
    }

    pub fn output(&self) -> usize {
        *self.nodes.last().expect("path has nodes")
    }

    pub fn contains_edge(&self, e: usize) -> bool {
        self.edges.contains(&e)
    }

    /// The `{0,1}^m` exponent vector of this path.
    pub fn exponent_vector(&self, m: usize) -> Vec<u8> {
        let mut p = vec![0u8; m];
        for &e in &self.edges {
            p[e] = 1;
        }
        p
    }
}

impl std::fmt::Display for Path {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, n) in self.nodes.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// Product of the weights along `p`.
pub fn path_value(w: &[f64], p: &Path) -> f64 {
    p.edges.iter().fold(1.0, |acc, &e| acc * w[e])
}

fn check_cap(arch: &Architecture, cap: usize) -> Result<()> {
    let needed = arch.num_paths();
    if needed > cap as u128 {
        return Err(Error::EnumerationTooLarge { needed, cap });
    }
    Ok(())
}

/// Calls `f` on every node sequence in lexicographic order.
fn for_each_node_sequence(arch: &Architecture, mut f: impl FnMut(&[usize])) {
    let widths = arch.widths();
    let mut nodes = vec![0usize; widths.len()];
    loop {
        f(&nodes);
        let mut l = widths.len();
        loop {
            if l == 0 {
                return;
            }
            l -= 1;
            nodes[l] += 1;
            if nodes[l] < widths[l] {
                break;
            }
            nodes[l] = 0;
        }
    }
}

pub fn enumerate_paths(arch: &Architecture, cap: usize) -> Result<Vec<Path>> {
    check_cap(arch, cap)?;
    let mut out = Vec::with_capacity(arch.num_paths() as usize);
    for_each_node_sequence(arch, |nodes| {
        out.push(Path::from_nodes(arch, nodes.to_vec()).expect("enumerated nodes are in range"));
    });
    Ok(out)
}

/// `m x n` 0/1 matrix whose column `j` is the exponent vector of path `j`,
/// stored as the sorted row indices of each column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureMatrix {
    rows: usize,
    columns: Vec<Vec<usize>>,
}

impl StructureMatrix {
    pub fn from_paths<'a>(rows: usize, paths: impl IntoIterator<Item = &'a Path>) -> Self {
        let columns = paths
            .into_iter()
            .map(|p| {
                let mut c = p.edges().to_vec();
                c.sort_unstable();
                c
            })
            .collect();
        Self { rows, columns }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[usize] {
        &self.columns[j]
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut d = vec![vec![0u8; self.cols()]; self.rows];
        for (j, col) in self.columns.iter().enumerate() {
            for &r in col {
                d[r][j] = 1;
            }
        }
        d
    }

    /// Writes `m n nnz` followed by one `row col 1` line per entry (0-based).
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.rows, self.cols(), self.nnz())?;
        for (j, col) in self.columns.iter().enumerate() {
            for &r in col {
                writeln!(out, "{r} {j} 1")?;
            }
        }
        Ok(())
    }

    pub fn save_triplets(&self, path: &FsPath) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_triplets(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn structure_matrix(arch: &Architecture, cap: usize) -> Result<StructureMatrix> {
    let paths = enumerate_paths(arch, cap)?;
    Ok(StructureMatrix::from_paths(arch.num_edges(), &paths))
}

/// Rank over the rationals, by exact fraction-free elimination.
pub fn exact_rank(m: &StructureMatrix) -> usize {
    let cols: Vec<Vec<(usize, i64)>> = m
        .columns
        .iter()
        .map(|c| c.iter().map(|&r| (r, 1)).collect())
        .collect();
    exact_rank_sparse(m.rows, &cols)
}

/// `1{o > 0}` for every hidden node, layer-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationPattern {
    pub statuses: Vec<bool>,
}

impl ActivationPattern {
    /// `a_p(x; w)`: whether every hidden node on `p` is active.
    pub fn path_status(&self, arch: &Architecture, p: &Path) -> bool {
        (1..arch.depth()).all(|l| {
            let node = crate::arch::Node {
                layer: l,
                index: p.nodes[l],
            };
            self.statuses[arch.hidden_index(node)]
        })
    }
}

pub fn activation_pattern(arch: &Architecture, w: &[f64], x: &[f64]) -> Result<ActivationPattern> {
    let trace = forward(arch, w, x)?;
    let statuses = (1..arch.depth())
        .flat_map(|l| trace.hidden(l).iter().map(|&o| o > 0.0).collect::<Vec<_>>())
        .collect();
    Ok(ActivationPattern { statuses })
}

/// Output computed as `sum_p v_p(w) a_p(x; w) x_{p.input}` over all paths.
pub fn path_sum_output(arch: &Architecture, w: &[f64], x: &[f64], cap: usize) -> Result<Vec<f64>> {
    check_cap(arch, cap)?;
    let pattern = activation_pattern(arch, w, x)?;
    let mut out = vec![0.0; arch.output_dim()];
    for_each_node_sequence(arch, |nodes| {
        let active = (1..arch.depth()).all(|l| {
            pattern.statuses[arch.hidden_index(crate::arch::Node {
                layer: l,
                index: nodes[l],
            })]
        });
        if active {
            let v = (1..=arch.depth()).fold(1.0, |acc, l| {
                acc * w[arch.edge_index(l, nodes[l - 1], nodes[l])]
            });
            out[nodes[arch.depth()]] += v * x[nodes[0]];
        }
    });
    Ok(out)
}
