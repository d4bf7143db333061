//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's forward pass, path enumeration or rank routines.

#![allow(dead_code)]

use gspace_core::nn::{batch_loss, LossSpec, Sample};
use gspace_core::optim::{basis_values, weight_allocation};
use gspace_core::{Architecture, SkeletonPlan};
use rand::Rng;

/// `|a - b| <= tol * max(|a|, |b|, floor)`.
pub fn rel_close(a: f64, b: f64, tol: f64, floor: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(floor)
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn random_weights<R: Rng>(arch: &Architecture, rng: &mut R) -> Vec<f64> {
    (0..arch.num_edges())
        .map(|_| {
            let mag = rng.gen_range(0.2..1.5);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

pub fn random_input<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Scaling factors drawn log-uniformly from `[lo, hi]`.
pub fn random_factors<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(lo.ln()..hi.ln()).exp())
        .collect()
}

/// Weight `(l, src, dst)` read straight from the documented layout.
fn weight(arch: &Architecture, w: &[f64], l: usize, src: usize, dst: usize) -> f64 {
    let offset: usize = (1..l).map(|k| arch.width(k - 1) * arch.width(k)).sum();
    w[offset + dst * arch.width(l - 1) + src]
}

/// Layer-by-layer forward pass: hidden pre-activations and outputs.
pub fn naive_forward(arch: &Architecture, w: &[f64], x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let depth = arch.depth();
    let mut values = x.to_vec();
    let mut pre = Vec::new();
    for l in 1..=depth {
        let z: Vec<f64> = (0..arch.width(l))
            .map(|dst| {
                (0..arch.width(l - 1))
                    .map(|src| weight(arch, w, l, src, dst) * values[src])
                    .sum()
            })
            .collect();
        if l < depth {
            values = z.iter().map(|&v| v.max(0.0)).collect();
            pre.push(z);
        } else {
            values = z;
        }
    }
    (pre, values)
}

/// Sum over every input-output path of value times activation status
/// times input, by explicit recursion over node sequences.
pub fn naive_path_sum(arch: &Architecture, w: &[f64], x: &[f64]) -> Vec<f64> {
    let (pre, _) = naive_forward(arch, w, x);
    let mut out = vec![0.0; arch.output_dim()];
    fn walk(
        arch: &Architecture,
        w: &[f64],
        pre: &[Vec<f64>],
        layer: usize,
        node: usize,
        acc: f64,
        out: &mut [f64],
    ) {
        if layer == arch.depth() {
            out[node] += acc;
            return;
        }
        if layer > 0 && pre[layer - 1][node] <= 0.0 {
            return;
        }
        for next in 0..arch.width(layer + 1) {
            let wt = weight(arch, w, layer + 1, node, next);
            walk(arch, w, pre, layer + 1, next, acc * wt, out);
        }
    }
    for (i, &xi) in x.iter().enumerate() {
        walk(arch, w, &pre, 0, i, xi, &mut out);
    }
    out
}

/// Every path as its edge-index list, enumerated independently.
pub fn naive_paths(arch: &Architecture) -> Vec<Vec<usize>> {
    let mut paths: Vec<Vec<usize>> = (0..arch.input_dim()).map(|i| vec![i]).collect();
    for l in 1..=arch.depth() {
        paths = paths
            .into_iter()
            .flat_map(|nodes| {
                (0..arch.width(l)).map(move |n| {
                    let mut next = nodes.clone();
                    next.push(n);
                    next
                })
            })
            .collect();
    }
    paths
        .into_iter()
        .map(|nodes| {
            (1..=arch.depth())
                .map(|l| {
                    let offset: usize = (1..l).map(|k| arch.width(k - 1) * arch.width(k)).sum();
                    offset + nodes[l] * arch.width(l - 1) + nodes[l - 1]
                })
                .collect()
        })
        .collect()
}

/// Rank over GF(p), `p = 2^61 - 1`, by dense Gaussian elimination. Equals
/// the rational rank unless `p` divides a minor, which is vanishingly rare
/// for 0/1 matrices of this size.
pub fn rank_mod_p(rows: usize, cols: &[Vec<usize>]) -> usize {
    const P: u128 = (1 << 61) - 1;
    let mut m: Vec<Vec<u128>> = vec![vec![0; cols.len()]; rows];
    for (j, col) in cols.iter().enumerate() {
        for &r in col {
            m[r][j] = 1;
        }
    }
    let pow = |mut b: u128, mut e: u128| {
        let mut acc = 1u128;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % P;
            }
            b = b * b % P;
            e >>= 1;
        }
        acc
    };
    let mut rank = 0;
    for c in 0..cols.len() {
        let Some(pivot) = (rank..rows).find(|&r| m[r][c] != 0) else {
            continue;
        };
        m.swap(rank, pivot);
        let inv = pow(m[rank][c], P - 2);
        for r in 0..rows {
            if r != rank && m[r][c] != 0 {
                let f = m[r][c] * inv % P;
                for k in c..cols.len() {
                    let sub = f * m[rank][k] % P;
                    m[r][k] = (m[r][k] + P - sub) % P;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// `min |pre-activation|` over the inputs, from the naive forward pass.
pub fn kink_margin(arch: &Architecture, w: &[f64], xs: &[&[f64]]) -> f64 {
    xs.iter()
        .flat_map(|x| naive_forward(arch, w, x).0.into_iter().flatten())
        .fold(f64::INFINITY, |acc, z| acc.min(z.abs()))
}

/// Hidden activation signs for every input.
pub fn pattern(arch: &Architecture, w: &[f64], xs: &[&[f64]]) -> Vec<bool> {
    xs.iter()
        .flat_map(|x| naive_forward(arch, w, x).0.into_iter().flatten())
        .map(|z| z > 0.0)
        .collect()
}

/// Central differences of the batch loss along each basis coordinate:
/// path ratio `R_j = (v_j +- eps) / v_j`, all other ratios 1, mapped to
/// weights by weight allocation. `None` if a perturbation crosses a kink.
pub fn gspace_fd_gradient(
    arch: &Architecture,
    w: &[f64],
    batch: &[Sample<'_>],
    plan: &SkeletonPlan,
    loss: LossSpec,
    eps: f64,
) -> Option<Vec<f64>> {
    let v = basis_values(w, plan).unwrap();
    let xs: Vec<&[f64]> = batch.iter().map(|s| s.x).collect();
    let base = pattern(arch, w, &xs);
    let eval = |j: usize, delta: f64| -> Option<f64> {
        let mut ratios = vec![1.0; v.len()];
        ratios[j] = (v[j] + delta) / v[j];
        let r = weight_allocation(&ratios, plan).unwrap();
        let moved: Vec<f64> = w.iter().zip(&r).map(|(a, b)| a * b).collect();
        if pattern(arch, &moved, &xs) != base {
            return None;
        }
        Some(batch_loss(arch, &moved, batch, loss).unwrap())
    };
    (0..v.len())
        .map(|j| Some((eval(j, eps)? - eval(j, -eps)?) / (2.0 * eps)))
        .collect()
}

/// Central differences of the batch loss in weight space.
pub fn weight_fd_gradient(
    arch: &Architecture,
    w: &[f64],
    batch: &[Sample<'_>],
    loss: LossSpec,
    eps: f64,
) -> Vec<f64> {
    (0..w.len())
        .map(|i| {
            let mut plus = w.to_vec();
            plus[i] += eps;
            let mut minus = w.to_vec();
            minus[i] -= eps;
            (batch_loss(arch, &plus, batch, loss).unwrap()
                - batch_loss(arch, &minus, batch, loss).unwrap())
                / (2.0 * eps)
        })
        .collect()
}
