//! Layer widths and the flat edge layout shared by every other module.
//!
//! Edges of layer `l` (1-based, `1..=L`) connect node `src` of layer `l-1`
//! to node `dst` of layer `l`. They are stored layer-major, then by target
//! node, then by source node:
//!
//! ```text
//! index(l, src, dst) = offset(l) + dst * h[l-1] + src
//! ```
//!
//! Hidden nodes (layers `1..L`) are numbered layer-major as well, which is
//! the order used by scaling vectors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    widths: Vec<usize>,
    offsets: Vec<usize>,
    hidden_offsets: Vec<usize>,
}

/// Endpoints of one edge: layer `l` in `1..=L`, source node in layer `l-1`,
/// target node in layer `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub layer: usize,
    pub src: usize,
    pub dst: usize,
}

/// A hidden node: `layer` in `1..L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub layer: usize,
    pub index: usize,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Architecture(format!(
                "need at least an input and an output layer, got {} widths",
                widths.len()
            )));
        }
        if let Some(pos) = widths.iter().position(|&h| h == 0) {
            return Err(Error::Architecture(format!("layer {pos} has width 0")));
        }
        let depth = widths.len() - 1;
        let mut offsets = Vec::with_capacity(depth + 2);
        // offsets[l] for l in 1..=L; offsets[0] is unused and set to 0.
        offsets.push(0);
        let mut acc = 0usize;
        for l in 1..=depth {
            offsets.push(acc);
            acc += widths[l - 1] * widths[l];
        }
        offsets.push(acc);
        let mut hidden_offsets = Vec::with_capacity(depth + 1);
        let mut hacc = 0usize;
        hidden_offsets.push(0);
        for l in 1..depth {
            hidden_offsets.push(hacc);
            hacc += widths[l];
        }
        hidden_offsets.push(hacc);
        Ok(Self {
            widths,
            offsets,
            hidden_offsets,
        })
    }

    /// Parses a comma- or colon-separated width list such as `49,8,8,10`.
    pub fn parse(s: &str) -> Result<Self> {
        let widths = s
            .split([',', ':'])
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Architecture(format!("bad width `{}` in `{s}`", t.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.depth()]
    }

    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    /// Total number of edges `m`.
    pub fn num_edges(&self) -> usize {
        self.offsets[self.depth() + 1]
    }

    /// Total number of hidden nodes `H`.
    pub fn num_hidden(&self) -> usize {
        self.hidden_offsets[self.depth()]
    }

    /// Invariant ratio `H / m`.
    pub fn invariant_ratio(&self) -> f64 {
        self.num_hidden() as f64 / self.num_edges() as f64
    }

    /// Number of input-to-output paths, `prod h_l`, saturating.
    pub fn num_paths(&self) -> u128 {
        self.widths
            .iter()
            .fold(1u128, |acc, &h| acc.saturating_mul(h as u128))
    }

    /// First edge index of weight layer `layer` (1-based).
    pub fn layer_offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    pub fn layer_edges(&self, layer: usize) -> std::ops::Range<usize> {
        self.offsets[layer]..self.offsets[layer + 1]
    }

    pub fn edge_index(&self, layer: usize, src: usize, dst: usize) -> usize {
        debug_assert!(layer >= 1 && layer <= self.depth());
        debug_assert!(src < self.widths[layer - 1] && dst < self.widths[layer]);
        self.offsets[layer] + dst * self.widths[layer - 1] + src
    }

    pub fn edge(&self, index: usize) -> Edge {
        debug_assert!(index < self.num_edges());
        // offsets is sorted; layer is the last l with offsets[l] <= index.
        let layer = (1..=self.depth())
            .rev()
            .find(|&l| self.offsets[l] <= index)
            .expect("edge index in range");
        let local = index - self.offsets[layer];
        let fan_in = self.widths[layer - 1];
        Edge {
            layer,
            src: local % fan_in,
            dst: local / fan_in,
        }
    }

    pub fn hidden_index(&self, node: Node) -> usize {
        debug_assert!(node.layer >= 1 && node.layer < self.depth());
        self.hidden_offsets[node.layer] + node.index
    }

    pub fn hidden_node(&self, index: usize) -> Node {
        let layer = (1..self.depth())
            .rev()
            .find(|&l| self.hidden_offsets[l] <= index)
            .expect("hidden index in range");
        Node {
            layer,
            index: index - self.hidden_offsets[layer],
        }
    }

    pub fn hidden_nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (1..self.depth())
            .flat_map(move |layer| (0..self.widths[layer]).map(move |index| Node { layer, index }))
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, h) in self.widths.iter().enumerate() {
            if i > 0 {
                write!(f, ":")?;
            }
            write!(f, "{h}")?;
        }
        write!(f, "]")
    }
}
