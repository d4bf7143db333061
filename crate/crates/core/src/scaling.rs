//! Positive scaling operators: multiply every incoming weight of a hidden
//! node by `c > 0` and every outgoing weight by `1 / c`.

use crate::arch::{Architecture, Node};
use crate::error::{Error, Result};
use crate::nn::WeightVector;
use crate::paths::path_value;
use crate::skeleton::SkeletonPlan;

/// One positive factor per hidden node, layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVector(Vec<f64>);

impl ScalingVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if let Some(i) = c.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!(
                "scaling factor {i} must be positive and finite, got {}",
                c[i]
            )));
        }
        Ok(Self(c))
    }

    pub fn identity(arch: &Architecture) -> Self {
        Self(vec![1.0; arch.num_hidden()])
    }

    /// The same factor on every hidden node.
    pub fn uniform(arch: &Architecture, c: f64) -> Result<Self> {
        Self::new(vec![c; arch.num_hidden()])
    }

    pub fn factors(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `compose(g1, g2)` acts as `g1 ∘ g2`; the factors multiply.
pub fn compose(g1: &ScalingVector, g2: &ScalingVector) -> Result<ScalingVector> {
    if g1.len() != g2.len() {
        return Err(Error::Shape(format!(
            "cannot compose scalings of lengths {} and {}",
            g1.len(),
            g2.len()
        )));
    }
    Ok(ScalingVector(
        g1.0.iter().zip(&g2.0).map(|(a, b)| a * b).collect(),
    ))
}

pub fn inverse(g: &ScalingVector) -> ScalingVector {
    ScalingVector(g.0.iter().map(|c| c.recip()).collect())
}

pub fn apply_scaling(arch: &Architecture, w: &[f64], g: &ScalingVector) -> Result<WeightVector> {
    if g.len() != arch.num_hidden() {
        return Err(Error::Shape(format!(
            "scaling has {} factors, {arch} has {} hidden nodes",
            g.len(),
            arch.num_hidden()
        )));
    }
    if w.len() != arch.num_edges() {
        return Err(Error::Shape(format!(
            "weight vector has {} entries, {arch} needs {}",
            w.len(),
            arch.num_edges()
        )));
    }
    let depth = arch.depth();
    let factor = |layer: usize, index: usize| -> f64 {
        if layer == 0 || layer == depth {
            1.0
        } else {
            g.0[arch.hidden_index(Node { layer, index })]
        }
    };
    let mut out = w.to_vec();
    for l in 1..=depth {
        for dst in 0..arch.width(l) {
            let c_dst = factor(l, dst);
            for src in 0..arch.width(l - 1) {
                let e = arch.edge_index(l, src, dst);
                out[e] = w[e] * c_dst / factor(l - 1, src);
            }
        }
    }
    WeightVector::new(arch, out)
}

/// Positive-scale equivalence through basis-path values: the free skeleton
/// weights must share signs and every basis-path value must agree within
/// `tol * max(1, |v_p(w)|)`.
pub fn check_equivalence(
    arch: &Architecture,
    w: &[f64],
    other: &[f64],
    plan: &SkeletonPlan,
    tol: f64,
) -> Result<bool> {
    for (name, v) in [("first", w), ("second", other)] {
        if v.len() != arch.num_edges() {
            return Err(Error::Shape(format!(
                "{name} weight vector has wrong length"
            )));
        }
        if let Some(i) = v.iter().position(|&x| x == 0.0) {
            return Err(Error::Domain(format!(
                "{name} weight vector has zero entry {i}"
            )));
        }
    }
    let signs_match = plan
        .free_edges()
        .iter()
        .all(|&e| w[e].is_sign_positive() == other[e].is_sign_positive());
    if !signs_match {
        return Ok(false);
    }
    Ok(plan.basis_paths().all(|p| {
        let a = path_value(w, p);
        let b = path_value(other, p);
        (a - b).abs() <= tol * a.abs().max(1.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::build_skeleton;

    fn tiny() -> Architecture {
        Architecture::new(vec![2, 1, 2]).unwrap()
    }

    #[test]
    fn identity_leaves_weights() {
        let a = Architecture::new(vec![3, 4, 2]).unwrap();
        let w: Vec<f64> = (0..a.num_edges()).map(|i| i as f64 - 5.5).collect();
        let out = apply_scaling(&a, &w, &ScalingVector::identity(&a)).unwrap();
        assert_eq!(out.as_slice(), w.as_slice());
    }

    #[test]
    fn single_hidden_node_scaling() {
        let w = [1.5, -2.0, 3.0, 0.25];
        let g = ScalingVector::new(vec![2.0]).unwrap();
        let out = apply_scaling(&tiny(), &w, &g).unwrap();
        assert_eq!(out.as_slice(), &[3.0, -4.0, 1.5, 0.125]);
        let back = apply_scaling(&tiny(), &out, &inverse(&g)).unwrap();
        assert_eq!(back.as_slice(), &w);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(ScalingVector::new(vec![1.0, 0.0]).is_err());
        assert!(ScalingVector::new(vec![-1.0]).is_err());
        assert!(ScalingVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn compose_and_inverse_examples() {
        let g = ScalingVector::new(vec![2.0, 3.0]).unwrap();
        let one = ScalingVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(compose(&g, &one).unwrap(), g);
        let h = ScalingVector::new(vec![0.5, 4.0]).unwrap();
        assert_eq!(compose(&g, &h).unwrap().factors(), &[1.0, 12.0]);
        let q = ScalingVector::new(vec![2.0, 0.25]).unwrap();
        assert_eq!(inverse(&q).factors(), &[0.5, 4.0]);
        assert_eq!(inverse(&inverse(&q)), q);
        assert_eq!(inverse(&one), one);
        let d = ScalingVector::new(vec![4.0, 0.125]).unwrap();
        assert_eq!(compose(&d, &inverse(&d)).unwrap(), one);
    }

    #[test]
    fn compose_matches_sequential_application() {
        let a = Architecture::new(vec![2, 3, 2, 2]).unwrap();
        let w: Vec<f64> = (0..a.num_edges())
            .map(|i| 0.25 * (i as f64 + 1.0))
            .collect();
        // Dyadic factors keep every product exact.
        let g1 = ScalingVector::new(vec![2.0, 0.5, 4.0, 0.25, 8.0]).unwrap();
        let g2 = ScalingVector::new(vec![0.5, 0.5, 2.0, 16.0, 1.0]).unwrap();
        let once = apply_scaling(&a, &w, &compose(&g1, &g2).unwrap()).unwrap();
        let twice = apply_scaling(&a, &apply_scaling(&a, &w, &g2).unwrap(), &g1).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn equivalence_checks() {
        let a = tiny();
        let plan = build_skeleton(&a);
        let w = [1.5, -2.0, 3.0, 0.25];
        let scaled = apply_scaling(&a, &w, &ScalingVector::new(vec![7.3]).unwrap()).unwrap();
        assert!(check_equivalence(&a, &w, &scaled, &plan, 1e-12).unwrap());
        // w2 is not a skeleton weight; its skip-basis path value moves.
        let mut bumped = w;
        bumped[1] += 1.0;
        assert!(!check_equivalence(&a, &w, &bumped, &plan, 1e-12).unwrap());
        // w3 is the free skeleton weight; negating it fails the sign clause.
        let mut flipped = w;
        flipped[2] = -flipped[2];
        assert!(!check_equivalence(&a, &w, &flipped, &plan, 1e-12).unwrap());
        let mut zero = w;
        zero[0] = 0.0;
        assert!(check_equivalence(&a, &w, &zero, &plan, 1e-12).is_err());
    }
}
