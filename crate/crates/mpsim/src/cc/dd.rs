//! Double-double arithmetic for the coupling identities.
//!
//! The rate-coupling weights must satisfy sum(beta_i * bw_i) = max(bw) and
//! (2 + 6*alpha_i)/8 = beta_i to the last bit. Plain f64 evaluation of
//! bw_i * max / sum(bw^2) rounds three times and misses that bar, so the
//! weights are computed in ~106-bit double-double precision and rounded once.

/// Unevaluated sum hi + lo with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free sum of two doubles (Knuth two-sum).
pub fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let v = s - a;
    let e = (a - (s - v)) + (b - v);
    Dd { hi: s, lo: e }
}

/// Error-free product of two doubles via fused multiply-add.
pub fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let e = a.mul_add(b, -p);
    Dd { hi: p, lo: e }
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn add(self, rhs: Dd) -> Dd {
        let s = two_sum(self.hi, rhs.hi);
        let t = two_sum(self.lo, rhs.lo);
        let mut lo = s.lo + t.hi;
        let r = quick_two_sum(s.hi, lo);
        lo = r.lo + t.lo;
        quick_two_sum(r.hi, lo)
    }

    pub fn add_f64(self, rhs: f64) -> Dd {
        self.add(Dd::from(rhs))
    }

    pub fn mul(self, rhs: Dd) -> Dd {
        let p = two_prod(self.hi, rhs.hi);
        let lo = p.lo + self.hi * rhs.lo + self.lo * rhs.hi;
        quick_two_sum(p.hi, lo)
    }

    pub fn div(self, rhs: Dd) -> Dd {
        let q1 = self.hi / rhs.hi;
        let r = self.add(rhs.mul(Dd::from(-q1)));
        let q2 = r.hi / rhs.hi;
        let r2 = r.add(rhs.mul(Dd::from(-q2)));
        let q3 = r2.hi / rhs.hi;
        quick_two_sum(q1, q2).add_f64(q3)
    }

    pub fn scale(self, k: f64) -> Dd {
        self.mul(Dd::from(k))
    }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let e = b - (s - a);
    Dd { hi: s, lo: e }
}

/// One unit in the last place of a positive finite double.
pub fn ulp(x: f64) -> f64 {
    debug_assert!(x.is_finite());
    let a = x.abs();
    if a == 0.0 {
        return f64::from_bits(1);
    }
    f64::from_bits(a.to_bits() + 1) - a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sum_recovers_lost_bits() {
        let s = two_sum(1e16, 1.0);
        assert_eq!(s.hi + s.lo, 1e16 + 1.0);
        assert_eq!(s.lo, 1.0 - (s.hi - 1e16));
    }

    #[test]
    fn two_prod_is_exact() {
        let a = 1.0 + f64::EPSILON;
        let b = 1.0 - f64::EPSILON;
        let p = two_prod(a, b);
        // a*b = 1 - eps^2 exactly; hi rounds to 1, lo carries -eps^2.
        assert_eq!(p.hi, 1.0);
        assert_eq!(p.lo, -f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn div_beats_plain_f64() {
        // 1/3 in dd then rounded equals the correctly rounded f64 third.
        let third = Dd::from(1.0).div(Dd::from(3.0));
        assert_eq!(third.to_f64(), 1.0 / 3.0);
        assert!(third.lo.abs() > 0.0);
    }

    #[test]
    fn ulp_of_one_is_epsilon() {
        assert_eq!(ulp(1.0), f64::EPSILON);
    }
}
