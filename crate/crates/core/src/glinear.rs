//! The generalized linear space over `(R \ {0})^m`: addition is the
//! elementwise product and scalar multiplication by `alpha > 0` raises
//! magnitudes to the power `ln(alpha)` while keeping signs.
//!
//! Paths are encoded as `{0, 1}` exponent vectors, which turns generalized
//! linear independence into ordinary linear independence over the rationals.

use crate::error::{Error, Result};

fn check_nonzero(w: &[f64], what: &str) -> Result<()> {
    match w.iter().position(|&x| x == 0.0) {
        Some(i) => Err(Error::Domain(format!("{what} has zero entry at {i}"))),
        None => Ok(()),
    }
}

/// `w ⊕ w'`: elementwise product.
pub fn gadd(w: &[f64], other: &[f64]) -> Result<Vec<f64>> {
    if w.len() != other.len() {
        return Err(Error::Shape(format!(
            "generalized addition of lengths {} and {}",
            w.len(),
            other.len()
        )));
    }
    check_nonzero(w, "left operand")?;
    check_nonzero(other, "right operand")?;
    Ok(w.iter().zip(other).map(|(a, b)| a * b).collect())
}

/// `alpha ⊙ w = sgn(w_i) |w_i|^ln(alpha)`.
pub fn gscale(alpha: f64, w: &[f64]) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!(
            "scalar must be positive, got {alpha}"
        )));
    }
    check_nonzero(w, "operand")?;
    let power = alpha.ln();
    Ok(w.iter()
        .map(|&x| x.signum() * x.abs().powf(power))
        .collect())
}

/// Additive inverse in the generalized space: the elementwise reciprocal.
pub fn gneg(w: &[f64]) -> Result<Vec<f64>> {
    check_nonzero(w, "operand")?;
    Ok(w.iter().map(|x| x.recip()).collect())
}

/// Generalized inner product `<w, p>` of a weight vector with a path given
/// by its exponent vector: the ⊕-sum of the entries of `w` where `p` is 1.
pub fn ginner(w: &[f64], exponents: &[u8]) -> f64 {
    debug_assert_eq!(w.len(), exponents.len());
    w.iter()
        .zip(exponents)
        .filter(|(_, &p)| p == 1)
        .fold(1.0, |acc, (&x, _)| acc * x)
}
