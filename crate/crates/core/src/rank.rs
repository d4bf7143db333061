//! Exact rank of integer matrices by fraction-free elimination.
//!
//! Columns are fed one at a time into an echelon basis. Each reduction is
//! the integer combination `a * v - b * p` followed by division by the
//! content (gcd of entries), so no fractions ever appear. Entries stay small
//! for path matrices; the `i128` pass is retried with big integers if any
//! intermediate overflows.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

trait ExactInt: Clone + PartialEq + Sized {
    fn from_i64(v: i64) -> Self;
    fn is_zero(&self) -> bool;
    fn is_one(&self) -> bool;
    fn is_negative(&self) -> bool;
    fn neg(&self) -> Self;
    fn mul_sub(&self, a: &Self, b: &Self, c: &Self) -> Option<Self>;
    fn sub_mul(&self, b: &Self, c: &Self) -> Option<Self>;
    fn gcd(&self, other: &Self) -> Self;
    fn div_exact(&self, d: &Self) -> Self;
}

impl ExactInt for i128 {
    fn from_i64(v: i64) -> Self {
        v as i128
    }
    fn is_zero(&self) -> bool {
        *self == 0
    }
    fn is_one(&self) -> bool {
        *self == 1
    }
    fn is_negative(&self) -> bool {
        *self < 0
    }
    fn neg(&self) -> Self {
        -*self
    }
    /// `a * self - b * c`
    fn mul_sub(&self, a: &Self, b: &Self, c: &Self) -> Option<Self> {
        a.checked_mul(*self)?.checked_sub(b.checked_mul(*c)?)
    }
    /// `self - b * c`
    fn sub_mul(&self, b: &Self, c: &Self) -> Option<Self> {
        self.checked_sub(b.checked_mul(*c)?)
    }
    fn gcd(&self, other: &Self) -> Self {
        Integer::gcd(self, other)
    }
    fn div_exact(&self, d: &Self) -> Self {
        self / d
    }
}

impl ExactInt for BigInt {
    fn from_i64(v: i64) -> Self {
        BigInt::from(v)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_one(&self) -> bool {
        One::is_one(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
    fn neg(&self) -> Self {
        -self
    }
    fn mul_sub(&self, a: &Self, b: &Self, c: &Self) -> Option<Self> {
        Some(a * self - b * c)
    }
    fn sub_mul(&self, b: &Self, c: &Self) -> Option<Self> {
        Some(self - b * c)
    }
    fn gcd(&self, other: &Self) -> Self {
        Integer::gcd(self, other)
    }
    fn div_exact(&self, d: &Self) -> Self {
        self / d
    }
}

struct Pivot<T> {
    /// Dense entries; zero below the lead.
    values: Vec<T>,
    /// Positions of nonzero entries, ascending.
    support: Vec<usize>,
}

/// Divides by the content and makes the first nonzero entry positive.
fn normalize<T: ExactInt>(v: &mut [T], from: usize) {
    let mut g = T::from_i64(0);
    let mut lead_negative = None;
    for x in &v[from..] {
        if !x.is_zero() {
            if lead_negative.is_none() {
                lead_negative = Some(x.is_negative());
            }
            g = g.gcd(x);
            if g.is_one() {
                break;
            }
        }
    }
    let Some(lead_negative) = lead_negative else {
        return;
    };
    let g = if lead_negative { g.neg() } else { g };
    if !g.is_one() {
        for x in &mut v[from..] {
            if !x.is_zero() {
                *x = x.div_exact(&g);
            }
        }
    }
}

fn eliminate<T: ExactInt>(nrows: usize, columns: &[Vec<(usize, i64)>]) -> Option<usize> {
    let zero = T::from_i64(0);
    let mut pivots: Vec<Option<Pivot<T>>> = (0..nrows).map(|_| None).collect();
    let mut rank = 0;
    let mut v: Vec<T> = vec![zero.clone(); nrows];
    for col in columns {
        v.iter_mut().for_each(|x| *x = zero.clone());
        for &(r, val) in col {
            v[r] = T::from_i64(val);
        }
        let mut i = 0;
        while i < nrows {
            if v[i].is_zero() {
                i += 1;
                continue;
            }
            match &pivots[i] {
                Some(p) => {
                    let lead = &p.values[i];
                    let b = v[i].clone();
                    if lead.is_one() {
                        for &j in &p.support {
                            v[j] = v[j].sub_mul(&b, &p.values[j])?;
                        }
                    } else {
                        for j in i..nrows {
                            v[j] = v[j].mul_sub(lead, &b, &p.values[j])?;
                        }
                        normalize(&mut v, i + 1);
                    }
                    debug_assert!(v[i].is_zero());
                    i += 1;
                }
                None => {
                    normalize(&mut v, i);
                    let support = (i..nrows).filter(|&j| !v[j].is_zero()).collect();
                    pivots[i] = Some(Pivot {
                        values: std::mem::replace(&mut v, vec![zero.clone(); nrows]),
                        support,
                    });
                    rank += 1;
                    break;
                }
            }
        }
        if rank == nrows {
            break;
        }
    }
    Some(rank)
}

/// Rank over the rationals of the `nrows`-row matrix whose columns are given
/// as sparse `(row, value)` lists.
pub fn exact_rank_sparse(nrows: usize, columns: &[Vec<(usize, i64)>]) -> usize {
    eliminate::<i128>(nrows, columns).unwrap_or_else(|| {
        eliminate::<BigInt>(nrows, columns).expect("big-integer elimination cannot overflow")
    })
}

/// Rank of a dense integer matrix given row-major.
pub fn exact_rank_dense(rows: &[Vec<i64>]) -> usize {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    let columns: Vec<Vec<(usize, i64)>> = (0..ncols)
        .map(|c| {
            (0..nrows)
                .filter(|&r| rows[r][c] != 0)
                .map(|r| (r, rows[r][c]))
                .collect()
        })
        .collect();
    exact_rank_sparse(nrows, &columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dense_ranks() {
        assert_eq!(exact_rank_dense(&[vec![1, 2], vec![2, 4]]), 1);
        assert_eq!(exact_rank_dense(&[vec![1, 2], vec![3, 4]]), 2);
        assert_eq!(exact_rank_dense(&[vec![0, 0], vec![0, 0]]), 0);
        assert_eq!(
            exact_rank_dense(&[vec![2, 4, 6], vec![1, 3, 5], vec![3, 7, 11]]),
            2
        );
    }

    #[test]
    fn detects_dependency_needing_fractions() {
        // Third column is (1/2)(c0 + c1) over the rationals.
        let rows = vec![vec![2, 0, 1], vec![0, 2, 1], vec![4, 2, 3]];
        assert_eq!(exact_rank_dense(&rows), 2);
    }

    #[test]
    fn big_integer_fallback_agrees() {
        // Entries near i64::MAX make the i128 pass overflow during reduction.
        let big = i64::MAX / 3;
        let cols = vec![
            vec![(0, big), (1, big - 1), (2, 7)],
            vec![(0, big - 5), (1, big), (2, 11)],
            vec![(0, 3), (1, big - 2), (2, big)],
        ];
        assert!(eliminate::<i128>(3, &cols).is_none() || eliminate::<i128>(3, &cols) == Some(3));
        assert_eq!(eliminate::<BigInt>(3, &cols), Some(3));
        assert_eq!(exact_rank_sparse(3, &cols), 3);
    }

    #[test]
    fn hilbert_like_matrix_full_rank() {
        // Integer-scaled Hilbert matrix: full rank, ill-conditioned in floats.
        let n = 8;
        let lcm: i64 = (1..=(2 * n as i64)).fold(1, |acc, k| Integer::lcm(&acc, &k));
        let rows: Vec<Vec<i64>> = (0..n)
            .map(|i| (0..n).map(|j| lcm / (i + j + 1) as i64).collect())
            .collect();
        assert_eq!(exact_rank_dense(&rows), n);
    }
}
