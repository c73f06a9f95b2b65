//! The control action: a bounded antisymmetric matrix of per-pair handover
//! offsets in dB.

use crate::scalar::Real;

/// Inclusive CIO bounds in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CioBounds<F> {
    pub min_db: F,
    pub max_db: F,
}

impl<F: Real> Default for CioBounds<F> {
    fn default() -> Self {
        CioBounds { min_db: F::lit(-6.0), max_db: F::lit(6.0) }
    }
}

impl<F: Real> CioBounds<F> {
    /// Largest magnitude such that both `v` and `-v` stay within bounds;
    /// antisymmetry makes only the symmetric part of the range usable.
    pub fn clamp_pair(&self, v: F) -> F {
        let lo = self.min_db.max(-self.max_db);
        let hi = self.max_db.min(-self.min_db);
        v.max(lo).min(hi)
    }

    pub fn contains(&self, v: F) -> bool {
        v >= self.min_db && v <= self.max_db
    }
}

/// Antisymmetric cell-individual-offset matrix: `get(i, j) = -get(j, i)`,
/// zero diagonal, every entry within bounds. Lowering the (i, j) offset
/// pushes users from cell i toward cell j.
#[derive(Debug, Clone, PartialEq)]
pub struct CioMatrix<F> {
    n: usize,
    pub(crate) values: Vec<F>,
    bounds: CioBounds<F>,
}

/// Number of strictly-upper-triangle entries of an n x n matrix.
pub(crate) fn upper_len(n: usize) -> usize {
    n * (n - 1) / 2
}

impl<F: Real> CioMatrix<F> {
    pub fn zero(n: usize) -> Self {
        Self::zero_with_bounds(n, CioBounds::default())
    }

    pub fn zero_with_bounds(n: usize, bounds: CioBounds<F>) -> Self {
        CioMatrix { n, values: vec![F::zero(); n * n], bounds }
    }

    /// Builds the full matrix from its strict upper triangle, row-major
    /// (0,1), (0,2), ..., (n-2, n-1); the lower triangle is the negation.
    /// Entries are clamped to the (antisymmetry-compatible) bounds.
    pub fn from_upper_triangle(n: usize, upper: &[F], bounds: CioBounds<F>) -> Self {
        assert_eq!(upper.len(), upper_len(n), "upper triangle length mismatch");
        let mut m = Self::zero_with_bounds(n, bounds);
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                m.set(i, j, upper[k]);
                k += 1;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bounds(&self) -> CioBounds<F> {
        self.bounds
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.values[i * self.n + j]
    }

    /// Sets the (i, j) offset (clamped) and enforces antisymmetry by
    /// writing the negation at (j, i). Diagonal writes are ignored.
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        if i == j {
            return;
        }
        let v = self.bounds.clamp_pair(v);
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = -v;
    }

    /// Adds `delta` to the (i, j) offset, clamped, antisymmetry preserved.
    pub fn adjust(&mut self, i: usize, j: usize, delta: F) {
        let v = self.get(i, j) + delta;
        self.set(i, j, v);
    }

    /// Strict upper triangle in the row-major pair order.
    pub fn upper_triangle(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(upper_len(self.n));
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Exact antisymmetry, zero diagonal, and bounds check.
    pub fn is_valid(&self) -> bool {
        for i in 0..self.n {
            if self.get(i, i) != F::zero() {
                return false;
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if v != -self.get(j, i) || !self.bounds.contains(v) || !v.is_finite() {
                    return false;
                }
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_enforces_antisymmetry_and_bounds() {
        let mut m = CioMatrix::<f64>::zero(4);
        m.set(0, 2, 3.5);
        assert_eq!(m.get(0, 2), 3.5);
        assert_eq!(m.get(2, 0), -3.5);
        m.set(1, 3, 99.0);
        assert_eq!(m.get(1, 3), 6.0);
        assert_eq!(m.get(3, 1), -6.0);
        m.set(2, 2, 1.0);
        assert_eq!(m.get(2, 2), 0.0);
        assert!(m.is_valid());
    }

    #[test]
    fn upper_triangle_roundtrip() {
        let upper = vec![1.0, -2.0, 3.0, 0.5, -0.5, 6.0];
        let m = CioMatrix::<f64>::from_upper_triangle(4, &upper, CioBounds::default());
        assert!(m.is_valid());
        assert_eq!(m.upper_triangle(), upper);
        assert_eq!(m.get(2, 1), -0.5); // mirror of (1,2) = 0.5
    }

    #[test]
    fn asymmetric_bounds_clamp_to_symmetric_core() {
        let b = CioBounds { min_db: -6.0, max_db: 3.0 };
        let mut m = CioMatrix::zero_with_bounds(3, b);
        m.set(0, 1, -5.0);
        // -5 would force +5 at (1,0), outside max_db = 3.
        assert_eq!(m.get(0, 1), -3.0);
        assert!(m.is_valid());
    }
}
