//! Skeleton weights, free skeleton weights and basis paths for an MLP of
//! arbitrary widths.
//!
//! Every hidden node `j` in layer `k` gets an incoming skeleton edge from
//! node `j mod h[k-1]` and an outgoing skeleton edge to node `j mod h[k+1]`.
//! The outgoing ones are the free skeleton edges: `H` of them, held fixed
//! by G-SGD. The remaining skeleton edges are carriers, and each carrier
//! owns one all-basis path built only from skeleton edges:
//!
//! * the canonical prefix of a node follows incoming skeleton edges back to
//!   the input layer;
//! * the chain of a node follows outgoing skeleton edges to the output.
//!
//! Layer-1 skeleton edges are always carriers. In a layer that widens
//! (`h[k-1] < h[k]`), node `j >= h[k-1]` receives its incoming skeleton edge
//! from a node whose outgoing skeleton edge points elsewhere (a "dotted"
//! edge); that edge is a carrier too, which yields the extra all-basis paths
//! of widening layers.
//!
//! Each non-skeleton edge `a -> b` gets one skip-basis path:
//! `prefix(a) ++ [edge] ++ chain(b)`.
//!
//! Ordering all-basis paths by carrier layer makes the basis matrix
//! unit-triangular on the carrier rows, so both gradient conversion and
//! weight allocation are plain substitutions.

use std::io::Write;
use std::path::Path as FsPath;

use crate::arch::{Architecture, Node};
use crate::error::{Error, Result};
use crate::paths::{exact_rank, Path, StructureMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllBasisPath {
    pub path: Path,
    /// The non-free skeleton edge whose weight carries this path's value.
    pub carrier: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipBasisPath {
    pub path: Path,
    /// The single non-skeleton edge on the path.
    pub edge: usize,
}

#[derive(Debug, Clone)]
pub struct SkeletonPlan {
    arch: Architecture,
    skeleton_mask: Vec<bool>,
    skeleton_edges: Vec<usize>,
    free_mask: Vec<bool>,
    free_edges: Vec<usize>,
    all_basis: Vec<AllBasisPath>,
    skip_basis: Vec<SkipBasisPath>,
    carrier_of: Vec<Option<usize>>,
    path_of_nonskeleton: Vec<Option<usize>>,
    incidence: Vec<Vec<usize>>,
}

impl SkeletonPlan {
    /// Assembles a plan from its parts and builds the lookup tables.
    ///
    /// Only structural problems are rejected here (indexes out of range, a
    /// carrier missing from its path, all-basis paths not ordered so that
    /// each carrier appears only in its own or later all-basis paths).
    /// Whether the paths actually form a basis is [`verify_basis`]'s job.
    pub fn from_parts(
        arch: &Architecture,
        skeleton_edges: Vec<usize>,
        free_edges: Vec<usize>,
        all_basis: Vec<AllBasisPath>,
        skip_basis: Vec<SkipBasisPath>,
    ) -> Result<Self> {
        let m = arch.num_edges();
        let defect = |msg: String| Err(Error::DefectivePlan(msg));
        let mut skeleton_mask = vec![false; m];
        for &e in &skeleton_edges {
            if e >= m {
                return defect(format!("skeleton edge {e} out of range"));
            }
            skeleton_mask[e] = true;
        }
        let skeleton_edges: Vec<usize> = (0..m).filter(|&e| skeleton_mask[e]).collect();
        if free_edges.len() != arch.num_hidden() {
            return defect(format!(
                "{} free skeleton edges for {} hidden nodes",
                free_edges.len(),
                arch.num_hidden()
            ));
        }
        let mut free_mask = vec![false; m];
        for &e in &free_edges {
            if e >= m || !skeleton_mask[e] {
                return defect(format!("free edge {e} is not a skeleton edge"));
            }
            if free_mask[e] {
                return defect(format!("free edge {e} listed twice"));
            }
            free_mask[e] = true;
        }
        let check_path = |p: &Path| -> Result<()> {
            if p.edges().len() != arch.depth() || p.edges().iter().any(|&e| e >= m) {
                return Err(Error::DefectivePlan(format!(
                    "path {p} does not fit {arch}"
                )));
            }
            Ok(())
        };
        for a in &all_basis {
            check_path(&a.path)?;
            if !a.path.contains_edge(a.carrier) {
                return defect(format!("carrier {} is not on path {}", a.carrier, a.path));
            }
            if free_mask[a.carrier] {
                return defect(format!("carrier {} is a free edge", a.carrier));
            }
        }
        for s in &skip_basis {
            check_path(&s.path)?;
            if !s.path.contains_edge(s.edge) {
                return defect(format!("edge {} is not on path {}", s.edge, s.path));
            }
        }
        for (j, a) in all_basis.iter().enumerate() {
            if let Some(k) = all_basis
                .iter()
                .enumerate()
                .position(|(k, b)| k < j && b.path.contains_edge(a.carrier))
            {
                return defect(format!(
                    "carrier of all-basis path {j} also lies on earlier all-basis path {k}"
                ));
            }
        }

        let num_all = all_basis.len();
        let mut incidence = vec![Vec::new(); m];
        let paths = all_basis
            .iter()
            .map(|a| &a.path)
            .chain(skip_basis.iter().map(|s| &s.path));
        for (i, p) in paths.enumerate() {
            for &e in p.edges() {
                incidence[e].push(i);
            }
        }
        let mut path_of_nonskeleton = vec![None; m];
        for (i, s) in skip_basis.iter().enumerate() {
            path_of_nonskeleton[s.edge].get_or_insert(num_all + i);
        }
        let mut carrier_of = vec![None; arch.num_hidden()];
        for (j, a) in all_basis.iter().enumerate() {
            for layer in 1..arch.depth() {
                let h = arch.hidden_index(Node {
                    layer,
                    index: a.path.nodes()[layer],
                });
                carrier_of[h].get_or_insert(j);
            }
        }
        Ok(Self {
            arch: arch.clone(),
            skeleton_mask,
            skeleton_edges,
            free_mask,
            free_edges,
            all_basis,
            skip_basis,
            carrier_of,
            path_of_nonskeleton,
            incidence,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn skeleton_edges(&self) -> &[usize] {
        &self.skeleton_edges
    }

    pub fn is_skeleton(&self, e: usize) -> bool {
        self.skeleton_mask[e]
    }

    /// Free skeleton edges, one per hidden node in layer-major order.
    pub fn free_edges(&self) -> &[usize] {
        &self.free_edges
    }

    pub fn is_free(&self, e: usize) -> bool {
        self.free_mask[e]
    }

    pub fn all_basis(&self) -> &[AllBasisPath] {
        &self.all_basis
    }

    pub fn skip_basis(&self) -> &[SkipBasisPath] {
        &self.skip_basis
    }

    /// Number of basis paths, all-basis first.
    pub fn num_basis(&self) -> usize {
        self.all_basis.len() + self.skip_basis.len()
    }

    /// Basis path `i` in the order all-basis ++ skip-basis.
    pub fn basis_path(&self, i: usize) -> &Path {
        match i.checked_sub(self.all_basis.len()) {
            None => &self.all_basis[i].path,
            Some(s) => &self.skip_basis[s].path,
        }
    }

    pub fn basis_paths(&self) -> impl Iterator<Item = &Path> + '_ {
        self.all_basis
            .iter()
            .map(|a| &a.path)
            .chain(self.skip_basis.iter().map(|s| &s.path))
    }

    /// Index of an all-basis path through the hidden node.
    pub fn carrier_of(&self, node: Node) -> Option<usize> {
        self.carrier_of[self.arch.hidden_index(node)]
    }

    /// Basis index of the skip-basis path owned by a non-skeleton edge.
    pub fn path_of_nonskeleton(&self, e: usize) -> Option<usize> {
        self.path_of_nonskeleton[e]
    }

    /// Basis indexes of every basis path containing edge `e`.
    pub fn paths_through(&self, e: usize) -> &[usize] {
        &self.incidence[e]
    }

    pub fn basis_matrix(&self) -> StructureMatrix {
        StructureMatrix::from_paths(self.arch.num_edges(), self.basis_paths())
    }

    /// Writes one tagged record per line:
    ///
    /// ```text
    /// SKEL <edge>
    /// FREE <hidden-node> <edge>
    /// ABASIS <index> <carrier-edge> <nodes> <edges>
    /// SBASIS <index> <edge> <nodes> <edges>
    /// ```
    ///
    /// Node and edge lists are comma-separated; indexes are 0-based and
    /// basis indexes follow the all-basis ++ skip-basis order.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let list = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(out, "# skeleton plan for {}", self.arch)?;
        for &e in &self.skeleton_edges {
            writeln!(out, "SKEL {e}")?;
        }
        for (h, &e) in self.free_edges.iter().enumerate() {
            writeln!(out, "FREE {h} {e}")?;
        }
        for (j, a) in self.all_basis.iter().enumerate() {
            writeln!(
                out,
                "ABASIS {j} {} {} {}",
                a.carrier,
                list(a.path.nodes()),
                list(a.path.edges())
            )?;
        }
        let base = self.all_basis.len();
        for (i, s) in self.skip_basis.iter().enumerate() {
            writeln!(
                out,
                "SBASIS {} {} {} {}",
                base + i,
                s.edge,
                list(s.path.nodes()),
                list(s.path.edges())
            )?;
        }
        Ok(())
    }

    pub fn save_text(&self, path: &FsPath) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_text(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

struct Rules<'a> {
    arch: &'a Architecture,
}

impl Rules<'_> {
    /// Incoming skeleton edge of node `j` in layer `k >= 1`.
    fn incoming(&self, k: usize, j: usize) -> usize {
        self.arch.edge_index(k, j % self.arch.width(k - 1), j)
    }

    /// Outgoing skeleton edge of node `i` in layer `k < L`.
    fn outgoing(&self, k: usize, i: usize) -> usize {
        self.arch.edge_index(k + 1, i, i % self.arch.width(k + 1))
    }

    fn prefix(&self, k: usize, j: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mut p = self.prefix(k - 1, j % self.arch.width(k - 1));
        p.push(self.incoming(k, j));
        p
    }

    fn chain(&self, k: usize, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let (mut k, mut i) = (k, i);
        while k < self.arch.depth() {
            out.push(self.outgoing(k, i));
            i %= self.arch.width(k + 1);
            k += 1;
        }
        out
    }
}

pub fn build_skeleton(arch: &Architecture) -> SkeletonPlan {
    let rules = Rules { arch };
    let depth = arch.depth();
    let m = arch.num_edges();

    let mut skeleton = Vec::new();
    let mut free_edges = Vec::with_capacity(arch.num_hidden());
    for node in arch.hidden_nodes() {
        skeleton.push(rules.incoming(node.layer, node.index));
        let out = rules.outgoing(node.layer, node.index);
        skeleton.push(out);
        free_edges.push(out);
    }
    let mut free_mask = vec![false; m];
    for &e in &free_edges {
        free_mask[e] = true;
    }

    let mut all_basis = Vec::new();
    for k in 1..depth {
        for j in 0..arch.width(k) {
            let carrier = rules.incoming(k, j);
            if free_mask[carrier] {
                continue;
            }
            let mut edges = rules.prefix(k, j);
            edges.extend(rules.chain(k, j));
            let path =
                Path::from_edges(arch, &edges).expect("skeleton rules produce chained paths");
            all_basis.push(AllBasisPath { path, carrier });
        }
    }

    let mut skeleton_mask = vec![false; m];
    for &e in &skeleton {
        skeleton_mask[e] = true;
    }
    let mut skip_basis = Vec::new();
    for (e, &is_skel) in skeleton_mask.iter().enumerate() {
        if is_skel {
            continue;
        }
        let edge = arch.edge(e);
        let mut edges = rules.prefix(edge.layer - 1, edge.src);
        edges.push(e);
        edges.extend(rules.chain(edge.layer, edge.dst));
        let path = Path::from_edges(arch, &edges).expect("skeleton rules produce chained paths");
        skip_basis.push(SkipBasisPath { path, edge: e });
    }

    SkeletonPlan::from_parts(arch, skeleton, free_edges, all_basis, skip_basis)
        .expect("generated plan is structurally sound")
}

/// `m - H`, the dimension of the space of basis-path values.
pub fn count_basis_paths(arch: &Architecture) -> usize {
    arch.num_edges() - arch.num_hidden()
}

/// Number of all-basis paths, `h_1 + sum_{l=1}^{L-2} (max(h_l, h_{l+1}) - h_l)`.
pub fn count_all_basis_paths(arch: &Architecture) -> usize {
    let depth = arch.depth();
    if depth < 2 {
        return 0;
    }
    arch.width(1)
        + (1..depth - 1)
            .map(|l| arch.width(l).max(arch.width(l + 1)) - arch.width(l))
            .sum::<usize>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisReport {
    pub basis_count: usize,
    pub rank: usize,
    /// Basis size equals `m - H`.
    pub count_ok: bool,
    /// The basis columns have exact rank `m - H`.
    pub rank_ok: bool,
    /// Every non-skeleton edge lies on exactly one basis path, its own
    /// skip-basis path; all-basis paths use skeleton edges only.
    pub uniqueness_ok: bool,
    /// Every hidden node lies on some all-basis path.
    pub coverage_ok: bool,
}

impl BasisReport {
    pub fn all_ok(&self) -> bool {
        self.count_ok && self.rank_ok && self.uniqueness_ok && self.coverage_ok
    }
}

pub fn verify_basis(arch: &Architecture, plan: &SkeletonPlan) -> BasisReport {
    let target = count_basis_paths(arch);
    let basis_count = plan.num_basis();
    let rank = exact_rank(&plan.basis_matrix());

    let num_all = plan.all_basis.len();
    let nonskeleton_ok = (0..arch.num_edges())
        .filter(|&e| !plan.is_skeleton(e))
        .all(|e| {
            let through = plan.paths_through(e);
            through.len() == 1
                && through[0] >= num_all
                && plan.skip_basis[through[0] - num_all].edge == e
        });
    let skip_ok = plan.skip_basis.iter().all(|s| {
        !plan.is_skeleton(s.edge)
            && s.path
                .edges()
                .iter()
                .all(|&e| e == s.edge || plan.is_skeleton(e))
    });
    let all_ok = plan
        .all_basis
        .iter()
        .all(|a| a.path.edges().iter().all(|&e| plan.is_skeleton(e)));

    BasisReport {
        basis_count,
        rank,
        count_ok: basis_count == target,
        rank_ok: rank == target,
        uniqueness_ok: nonskeleton_ok && skip_ok && all_ok,
        coverage_ok: plan.carrier_of.iter().all(Option::is_some),
    }
}

/// Integer coefficients `alpha` over the basis (all-basis ++ skip-basis
/// order) with `exponent(p) = sum_i alpha_i exponent(p^i)`.
///
/// Skip-basis coefficients are 0 or 1; all-basis coefficients come out
/// non-positive, so `v_p(w) = prod v_skip^alpha / prod v_all^|alpha|`.
pub fn express_nonbasis(plan: &SkeletonPlan, p: &Path) -> Result<Vec<i64>> {
    let arch = &plan.arch;
    let m = arch.num_edges();
    if p.edges().len() != arch.depth() || p.edges().iter().any(|&e| e >= m) {
        return Err(Error::Shape(format!("path {p} does not fit {arch}")));
    }
    let mut residual = vec![0i64; m];
    for &e in p.edges() {
        residual[e] += 1;
    }
    let num_all = plan.all_basis.len();
    let mut coef = vec![0i64; plan.num_basis()];
    for (i, s) in plan.skip_basis.iter().enumerate() {
        let c = residual[s.edge];
        if c != 0 {
            coef[num_all + i] = c;
            for &e in s.path.edges() {
                residual[e] -= c;
            }
        }
    }
    for (j, a) in plan.all_basis.iter().enumerate().rev() {
        let c = residual[a.carrier];
        if c != 0 {
            coef[j] = c;
            for &e in a.path.edges() {
                residual[e] -= c;
            }
        }
    }
    if let Some(e) = residual.iter().position(|&r| r != 0) {
        return Err(Error::DefectivePlan(format!(
            "path {p} is not spanned by the basis (residual on edge {e})"
        )));
    }
    Ok(coef)
}
