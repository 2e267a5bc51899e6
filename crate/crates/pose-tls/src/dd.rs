//! Minimal double-double arithmetic (unevaluated sums of two doubles).
//!
//! The attitude-cost gradient cancels terms five to six orders larger than
//! its value; forming the residual ingredients in plain f64 leaves an
//! absolute error floor far above the solver's convergence certificate.
//! These helpers carry roughly twice f64 precision through exactly those
//! formations. Only the operations the solver needs are implemented.

use crate::geometry::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

/// Error-free sum for `|a| >= |b|`.
fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd {
        hi: s,
        lo: b - (s - a),
    }
}

/// Error-free sum of two doubles (Knuth).
fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd {
        hi: s,
        lo: (a - (s - bb)) + (b - bb),
    }
}

/// Error-free product via fused multiply-add.
fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd {
        hi: p,
        lo: a.mul_add(b, -p),
    }
}

impl Dd {
    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Full-accuracy double-double addition.
    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let u = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(u.hi, u.lo + t.lo)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(Dd {
            hi: -o.hi,
            lo: -o.lo,
        })
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn mul_f64(self, c: f64) -> Dd {
        let p = two_prod(self.hi, c);
        quick_two_sum(p.hi, p.lo + self.lo * c)
    }
}

pub(crate) type DdVec3 = [Dd; 3];

pub(crate) const DD_ZERO3: DdVec3 = [Dd { hi: 0.0, lo: 0.0 }; 3];

pub(crate) fn to_vec3(v: DdVec3) -> Vec3 {
    Vec3::new(v[0].to_f64(), v[1].to_f64(), v[2].to_f64())
}

pub(crate) fn add3(a: DdVec3, b: DdVec3) -> DdVec3 {
    [a[0].add(b[0]), a[1].add(b[1]), a[2].add(b[2])]
}

pub(crate) fn sub3(a: DdVec3, b: DdVec3) -> DdVec3 {
    [a[0].sub(b[0]), a[1].sub(b[1]), a[2].sub(b[2])]
}

pub(crate) fn neg3(a: DdVec3) -> DdVec3 {
    [a[0].neg(), a[1].neg(), a[2].neg()]
}

/// `m * x` with an f64 matrix and a double-double vector.
pub(crate) fn mat_mul(m: &Mat3, x: &DdVec3) -> DdVec3 {
    let mut y = DD_ZERO3;
    for i in 0..3 {
        let mut acc = Dd::new(0.0);
        for (j, xj) in x.iter().enumerate() {
            acc = acc.add(xj.mul_f64(m[(i, j)]));
        }
        y[i] = acc;
    }
    y
}

/// `b - m * v` with all-f64 inputs, formed without intermediate rounding.
pub(crate) fn residual_vec(b: Vec3, m: &Mat3, v: Vec3) -> DdVec3 {
    let mut out = DD_ZERO3;
    for i in 0..3 {
        let mut acc = Dd::new(b[i]);
        for j in 0..3 {
            acc = acc.sub(two_prod(m[(i, j)], v[j]));
        }
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addition_keeps_cancelled_tail() {
        let big = Dd::new(1e16);
        let sum = big.add(Dd::new(1.0)).sub(big);
        assert_eq!(sum.to_f64(), 1.0);
    }

    #[test]
    fn product_error_term_recovered() {
        let p = two_prod(1.0 + f64::EPSILON, 1.0 + f64::EPSILON);
        // (1+eps)^2 = 1 + 2 eps + eps^2; the hi part rounds eps^2 away.
        assert_eq!(p.hi, 1.0 + 2.0 * f64::EPSILON);
        assert_eq!(p.lo, f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn residual_vec_matches_plain_arithmetic_on_benign_data() {
        let b = Vec3::new(0.25, -0.5, 1.0);
        let m = Mat3::identity() * 2.0;
        let v = Vec3::new(0.125, 0.25, -0.375);
        let r = to_vec3(residual_vec(b, &m, v));
        assert_eq!(r, b - m * v);
    }
}
