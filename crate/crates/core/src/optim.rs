//! G-SGD: gradient descent on basis-path values, and plain SGD for
//! comparison.
//!
//! A G-SGD step runs back-propagation at the current weights, converts the
//! weight gradient into a gradient over basis-path values (inverse chain
//! rule), takes the step in that space, and turns the resulting per-path
//! ratios back into per-weight ratios (weight allocation). Free skeleton
//! weights get ratio exactly 1, so they never change.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::arch::Architecture;
use crate::error::{Error, Result};
use crate::nn::{batch_loss_and_gradient, LossSpec, Sample, WeightVector};
use crate::paths::path_value;
use crate::skeleton::SkeletonPlan;

/// Values of the basis paths, all-basis first.
pub fn basis_values(w: &[f64], plan: &SkeletonPlan) -> Result<Vec<f64>> {
    if let Some(i) = w.iter().position(|&x| x == 0.0) {
        return Err(Error::Domain(format!("weight {i} is zero")));
    }
    Ok(plan.basis_paths().map(|p| path_value(w, p)).collect())
}

fn check_basis_values(v: &[f64]) -> Result<()> {
    match v.iter().position(|&x| x == 0.0) {
        Some(index) => Err(Error::DegeneratePath { index }),
        None => Ok(()),
    }
}

/// Solves `w_e * dL/dw_e = sum_{p ∋ e} v_p * dL/dv_p` for `dL/dv` using only
/// the non-free edges.
///
/// A non-skeleton edge lies on one basis path, which gives that path's
/// gradient directly. A carrier edge lies on its own all-basis path plus
/// paths already solved (skip-basis paths and later all-basis paths), so
/// the all-basis paths are solved last-to-first.
pub fn icr_gradients(
    grad_w: &[f64],
    w: &[f64],
    v: &[f64],
    plan: &SkeletonPlan,
) -> Result<Vec<f64>> {
    if let Some(i) = w.iter().position(|&x| x == 0.0) {
        return Err(Error::Domain(format!("weight {i} is zero")));
    }
    check_basis_values(v)?;
    let num_all = plan.all_basis().len();
    let mut grad_v = vec![0.0; plan.num_basis()];
    for (i, s) in plan.skip_basis().iter().enumerate() {
        let k = num_all + i;
        grad_v[k] = grad_w[s.edge] * w[s.edge] / v[k];
    }
    for (j, a) in plan.all_basis().iter().enumerate().rev() {
        let c = a.carrier;
        let others: f64 = plan
            .paths_through(c)
            .iter()
            .filter(|&&k| k != j)
            .map(|&k| v[k] * grad_v[k])
            .sum();
        grad_v[j] = (w[c] * grad_w[c] - others) / v[j];
    }
    Ok(grad_v)
}

/// For each free skeleton edge, `|w_e dL/dw_e - sum_{p ∋ e} v_p dL/dv_p|`
/// relative to `max(1, |w_e dL/dw_e|)`. These equations are not used by
/// [`icr_gradients`]; a small residual confirms the loss depends on the
/// weights only through the basis-path values.
pub fn icr_free_residuals(
    grad_w: &[f64],
    w: &[f64],
    v: &[f64],
    grad_v: &[f64],
    plan: &SkeletonPlan,
) -> Vec<f64> {
    plan.free_edges()
        .iter()
        .map(|&e| {
            let lhs = w[e] * grad_w[e];
            let rhs: f64 = plan
                .paths_through(e)
                .iter()
                .map(|&k| v[k] * grad_v[k])
                .sum();
            (lhs - rhs).abs() / lhs.abs().max(1.0)
        })
        .collect()
}

/// Per-weight ratios `r` with `prod_{e ∈ p} r_e = R_p` for every basis path
/// and `r_e = 1` on free skeleton edges.
pub fn weight_allocation(path_ratios: &[f64], plan: &SkeletonPlan) -> Result<Vec<f64>> {
    if path_ratios.len() != plan.num_basis() {
        return Err(Error::Shape(format!(
            "{} path ratios for {} basis paths",
            path_ratios.len(),
            plan.num_basis()
        )));
    }
    if let Some(index) = path_ratios.iter().position(|&x| x == 0.0) {
        return Err(Error::DegenerateUpdate { index });
    }
    let mut r = vec![1.0; plan.arch().num_edges()];
    for (j, a) in plan.all_basis().iter().enumerate() {
        let rest: f64 = a
            .path
            .edges()
            .iter()
            .filter(|&&e| e != a.carrier)
            .map(|&e| r[e])
            .product();
        r[a.carrier] = path_ratios[j] / rest;
    }
    let num_all = plan.all_basis().len();
    for (i, s) in plan.skip_basis().iter().enumerate() {
        let rest: f64 = s
            .path
            .edges()
            .iter()
            .filter(|&&e| e != s.edge)
            .map(|&e| r[e])
            .product();
        r[s.edge] = path_ratios[num_all + i] / rest;
    }
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct GsgdStep {
    pub weights: WeightVector,
    /// Basis-path values targeted by the step, `v - lr * dL/dv`.
    pub values: Vec<f64>,
    /// Mean batch loss before the step.
    pub loss: f64,
}

/// One G-SGD step with its intermediate quantities.
pub fn gsgd_update(
    arch: &Architecture,
    w: &WeightVector,
    batch: &[Sample<'_>],
    lr: f64,
    plan: &SkeletonPlan,
    loss: LossSpec,
) -> Result<GsgdStep> {
    w.check_nonzero()?;
    let (value, grad_w) = batch_loss_and_gradient(arch, w, batch, loss)?;
    let v = basis_values(w, plan)?;
    let grad_v = icr_gradients(&grad_w, w, &v, plan)?;
    let stepped: Vec<f64> = v.iter().zip(&grad_v).map(|(a, g)| a - lr * g).collect();
    if let Some(j) = stepped.iter().position(|&x| x == 0.0 || !x.is_finite()) {
        return Err(Error::StepRejected(format!(
            "basis path {j} would move to {}",
            stepped[j]
        )));
    }
    let ratios: Vec<f64> = stepped.iter().zip(&v).map(|(a, b)| a / b).collect();
    let r = weight_allocation(&ratios, plan)?;
    let next: Vec<f64> = w.iter().zip(&r).map(|(a, b)| a * b).collect();
    if let Some(i) = next.iter().position(|&x| x == 0.0 || !x.is_finite()) {
        return Err(Error::StepRejected(format!(
            "weight {i} would become {}",
            next[i]
        )));
    }
    Ok(GsgdStep {
        weights: WeightVector::new(arch, next)?,
        values: stepped,
        loss: value,
    })
}

pub fn gsgd_step(
    arch: &Architecture,
    w: &WeightVector,
    batch: &[Sample<'_>],
    lr: f64,
    plan: &SkeletonPlan,
    loss: LossSpec,
) -> Result<WeightVector> {
    gsgd_update(arch, w, batch, lr, plan, loss).map(|s| s.weights)
}

/// `w - lr * grad`, also returning the mean batch loss before the step.
pub fn sgd_update(
    arch: &Architecture,
    w: &WeightVector,
    batch: &[Sample<'_>],
    lr: f64,
    loss: LossSpec,
) -> Result<(WeightVector, f64)> {
    let (value, grad) = batch_loss_and_gradient(arch, w, batch, loss)?;
    let next = w.iter().zip(&grad).map(|(a, g)| a - lr * g).collect();
    Ok((WeightVector::new(arch, next)?, value))
}

pub fn sgd_step(
    arch: &Architecture,
    w: &WeightVector,
    batch: &[Sample<'_>],
    lr: f64,
    loss: LossSpec,
) -> Result<WeightVector> {
    sgd_update(arch, w, batch, lr, loss).map(|(w, _)| w)
}

fn nonzero_normal<R: Rng + ?Sized>(dist: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let x = dist.sample(rng);
        if x != 0.0 {
            return x;
        }
    }
}

/// He-normal weights: `N(0, 2 / fan_in)` per layer.
pub fn he_init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> WeightVector {
    let mut w = Vec::with_capacity(arch.num_edges());
    for l in 1..=arch.depth() {
        let std = (2.0 / arch.width(l - 1) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("finite std");
        for _ in arch.layer_edges(l) {
            w.push(nonzero_normal(&dist, rng));
        }
    }
    WeightVector::new(arch, w).expect("one weight per edge")
}

/// He-normal weights with every skeleton weight set to 1.
pub fn skeleton_init<R: Rng + ?Sized>(
    arch: &Architecture,
    plan: &SkeletonPlan,
    rng: &mut R,
) -> WeightVector {
    let mut w = he_init(arch, rng);
    for &e in plan.skeleton_edges() {
        w[e] = 1.0;
    }
    w
}
