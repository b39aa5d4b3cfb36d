//! Values carrying a rigorous error radius.
//!
//! A `CertifiedValue` asserts that the true quantity lies within `radius` of
//! `value`. Radii are propagated with outward-rounded linear bounds: coarse
//! but sound, which is what the certificates need.

/// A numeric result with a certified absolute error bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifiedValue {
    /// Computed value.
    pub value: f64,
    /// Absolute error bound; `0.0` means exact up to rounding.
    pub radius: f64,
    /// Truncation depth (window length, volume steps) behind the value.
    pub n_used: usize,
}

impl CertifiedValue {
    /// A value with no truncation error.
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            radius: 0.0,
            n_used: 0,
        }
    }

    /// A value with the given radius and truncation depth.
    pub fn new(value: f64, radius: f64, n_used: usize) -> Self {
        debug_assert!(radius >= 0.0);
        Self {
            value,
            radius,
            n_used,
        }
    }

    /// True when `x` lies within `radius + slack` of the value.
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        (x - self.value).abs() <= self.radius + slack
    }

    /// Lower end of the certified interval.
    pub fn lo(&self) -> f64 {
        self.value - self.radius
    }

    /// Upper end of the certified interval.
    pub fn hi(&self) -> f64 {
        self.value + self.radius
    }

    /// Same value with the radius enlarged by `extra`.
    pub fn widened(&self, extra: f64) -> Self {
        Self {
            value: self.value,
            radius: self.radius + extra,
            n_used: self.n_used,
        }
    }

    /// Sum; radii add.
    pub fn add(&self, other: &Self) -> Self {
        Self {
            value: self.value + other.value,
            radius: self.radius + other.radius,
            n_used: self.n_used.max(other.n_used),
        }
    }

    /// Difference; radii add.
    pub fn sub(&self, other: &Self) -> Self {
        Self {
            value: self.value - other.value,
            radius: self.radius + other.radius,
            n_used: self.n_used.max(other.n_used),
        }
    }

    /// Product; radius covers both cross terms and the second-order term.
    pub fn mul(&self, other: &Self) -> Self {
        let r = self.value.abs() * other.radius
            + other.value.abs() * self.radius
            + self.radius * other.radius;
        Self {
            value: self.value * other.value,
            radius: r,
            n_used: self.n_used.max(other.n_used),
        }
    }

    /// Quotient; requires the divisor interval to stay away from zero.
    ///
    /// Returns `None` when `other` may straddle zero.
    pub fn div(&self, other: &Self) -> Option<Self> {
        let d_lo = other.value.abs() - other.radius;
        if d_lo <= 0.0 {
            return None;
        }
        let q = self.value / other.value;
        let r = (self.radius + q.abs() * other.radius) / d_lo;
        Some(Self {
            value: q,
            radius: r,
            n_used: self.n_used.max(other.n_used),
        })
    }

    /// Renders as `value ± radius` or `value (exact)`.
    pub fn render(&self) -> String {
        if self.radius == 0.0 {
            format!("{:.17} exact", self.value)
        } else {
            format!("{:.17} +-{:.3e}", self.value, self.radius)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_arithmetic_is_outward() {
        let a = CertifiedValue::new(0.5, 0.01, 3);
        let b = CertifiedValue::new(0.25, 0.002, 5);
        let p = a.mul(&b);
        // true products of endpoint combinations stay inside
        for ta in [a.lo(), a.hi()] {
            for tb in [b.lo(), b.hi()] {
                assert!(p.contains(ta * tb, 1e-15));
            }
        }
        let q = a.div(&b).unwrap();
        for ta in [a.lo(), a.hi()] {
            for tb in [b.lo(), b.hi()] {
                assert!(q.contains(ta / tb, 1e-15));
            }
        }
        assert_eq!(p.n_used, 5);
    }

    #[test]
    fn division_by_straddling_interval_refused() {
        let a = CertifiedValue::exact(1.0);
        let b = CertifiedValue::new(0.01, 0.02, 1);
        assert!(a.div(&b).is_none());
    }

    #[test]
    fn exact_values_render_as_exact() {
        assert!(CertifiedValue::exact(0.12).render().ends_with("exact"));
        assert!(CertifiedValue::new(0.12, 1e-9, 4).render().contains("+-"));
    }
}
