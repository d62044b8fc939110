//! Eigenvalues of −Δ in the central-function sector, character products and
//! multiplication-operator matrices.
//!
//! Central functions are spanned by the characters `χ_m`; on SU(2) the
//! product rule is
//!
//! ```text
//! χ_h χ_m = Σ_{k=0}^{min(h,m)} χ_{h+m-2k}
//! ```
//!
//! and the characters are real, so multiplication by a real central function
//! is a real symmetric banded matrix in the character basis. SO(3) labels
//! are mapped onto the even SU(2) sublattice before the rule is applied.

use ndarray::Array2;
use std::collections::BTreeMap;

use crate::fitting::linear_fit;
use crate::lattice::GroupSpec;
use crate::{C64, Error, Result};

/// Laplace–Beltrami eigenvalue `(j+ρ)² − ρ²` of label `m`.
///
/// For SU(2) this is `m(m+2)/8 ∈ ℕ/8`; for SO(3) under the even-label
/// convention it is `n(n+1)/2`.
pub fn eigenvalue(m: usize, g: &GroupSpec) -> f64 {
    let j = g.weight(m);
    (j + g.rho) * (j + g.rho) - g.rho * g.rho
}

/// Labels appearing in `χ_h χ_m`, ascending: `{h+m-2k : k = 0..min(h,m)}`.
pub fn char_product(h: usize, m: usize) -> Vec<usize> {
    let kmax = h.min(m);
    (0..=kmax).map(|k| h + m - 2 * (kmax - k)).collect()
}

/// A central function `b = Σ_m b_m χ_m` with finitely many coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CentralFunction {
    /// Coefficients by label, in the group's own label units.
    pub coeffs: BTreeMap<usize, C64>,
}

impl CentralFunction {
    pub fn zero() -> Self {
        CentralFunction::default()
    }

    pub fn from_pairs(pairs: &[(usize, C64)]) -> Self {
        let mut coeffs = BTreeMap::new();
        for &(m, c) in pairs {
            if c != C64::new(0.0, 0.0) {
                *coeffs.entry(m).or_insert(C64::new(0.0, 0.0)) += c;
            }
        }
        coeffs.retain(|_, c| *c != C64::new(0.0, 0.0));
        CentralFunction { coeffs }
    }

    /// The single character `χ_m`.
    pub fn character(m: usize) -> Self {
        CentralFunction::from_pairs(&[(m, C64::new(1.0, 0.0))])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest label with a nonzero coefficient.
    pub fn max_label(&self) -> usize {
        self.coeffs.keys().next_back().copied().unwrap_or(0)
    }

    /// Real-valued iff all coefficients are real (the characters are real).
    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs.values().all(|c| c.im.abs() <= tol)
    }

    pub fn conj(&self) -> Self {
        CentralFunction {
            coeffs: self.coeffs.iter().map(|(&m, c)| (m, c.conj())).collect(),
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        CentralFunction::from_pairs(
            &self
                .coeffs
                .iter()
                .map(|(&m, &c)| (m, c * z))
                .collect::<Vec<_>>(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut pairs: Vec<(usize, C64)> =
            self.coeffs.iter().map(|(&m, &c)| (m, c)).collect();
        pairs.extend(other.coeffs.iter().map(|(&m, &c)| (m, c)));
        CentralFunction::from_pairs(&pairs)
    }

    /// Pointwise product, expanded through the character product rule in the
    /// group's SU(2)-equivalent units.
    pub fn mul(&self, other: &Self, g: &GroupSpec) -> Self {
        let u = g.su2_units();
        let mut pairs = Vec::new();
        for (&h, &bh) in &self.coeffs {
            for (&m, &cm) in &other.coeffs {
                for lab in char_product(h * u, m * u) {
                    debug_assert_eq!(lab % u, 0);
                    pairs.push((lab / u, bh * cm));
                }
            }
        }
        CentralFunction::from_pairs(&pairs)
    }
}

/// Matrix of the multiplication operator `u ↦ b·u` in the character basis,
/// over labels `0..=m_max`.
///
/// Entry `B[m][m']` sums `b_h` over all `h` with `|m-m'| ≤ h ≤ m+m'` and
/// `h ≡ m+m' (mod 2)` in SU(2) units, so `B` is banded with bandwidth equal
/// to the largest support label of `b`, and symmetric when `b` is real.
pub fn multiplication_matrix(
    b: &CentralFunction,
    m_max: usize,
    g: &GroupSpec,
) -> Result<Array2<C64>> {
    if !b.is_zero() && b.max_label() > 2 * m_max {
        return Err(Error::AliasedSupport {
            what: "central function support vs label truncation",
            support: b.max_label(),
            limit: 2 * m_max,
        });
    }
    let u = g.su2_units();
    let n = m_max + 1;
    let mut mat = Array2::zeros((n, n));
    for (&h, &bh) in &b.coeffs {
        let hu = h * u;
        for m in 0..n {
            for m2 in 0..n {
                let lo = (m * u).abs_diff(m2 * u);
                let hi = (m + m2) * u;
                if hu >= lo && hu <= hi && (hu + (m + m2) * u) % 2 == 0 {
                    mat[[m, m2]] += bh;
                }
            }
        }
    }
    Ok(mat)
}

/// Result of fitting the off-diagonal decay of a multiplication matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum DecayProfile {
    /// Too few distinct off-diagonal distances to fit: the matrix is an
    /// exact band of the reported width.
    ExactBand { width: usize },
    /// Least-squares fit of `log|B[m][m']| ≈ log C − s·log⟨m−m'⟩`.
    Fitted { exponent: f64, constant: f64 },
}

/// Fits `log|B[m][m']|` against `−log⟨m−m'⟩` over the nonzero off-diagonal
/// entries, one point per distance taking the sup along each diagonal
/// (`⟨x⟩ = 1 + |x|` here).
pub fn decay_profile(b: &Array2<C64>) -> DecayProfile {
    let n = b.nrows();
    let mut width = 0usize;
    let mut sup_by_dm: BTreeMap<usize, f64> = BTreeMap::new();
    for m in 0..n {
        for m2 in 0..n {
            if m == m2 {
                continue;
            }
            let v = b[[m, m2]].norm();
            if v > 0.0 {
                let dm = m.abs_diff(m2);
                width = width.max(dm);
                let e = sup_by_dm.entry(dm).or_insert(0.0);
                *e = e.max(v);
            }
        }
    }
    if sup_by_dm.len() < 3 {
        return DecayProfile::ExactBand { width };
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&dm, &v) in &sup_by_dm {
        xs.push(-((1 + dm) as f64).ln());
        ys.push(v.ln());
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    DecayProfile::Fitted {
        exponent: slope,
        constant: intercept.exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GroupKind;

    fn su2() -> GroupSpec {
        GroupSpec::new(GroupKind::Su2)
    }

    /// Brute-force oracle: expands `b·χ_{m'}` through the product rule and
    /// collects the coefficient of `χ_m`.
    fn mult_entry_oracle(b: &CentralFunction, m: usize, m2: usize, g: &GroupSpec) -> C64 {
        let u = g.su2_units();
        let mut total = C64::new(0.0, 0.0);
        for (&h, &bh) in &b.coeffs {
            for lab in char_product(h * u, m2 * u) {
                if lab == m * u {
                    total += bh;
                }
            }
        }
        total
    }

    #[test]
    fn eigenvalue_values() {
        let g = su2();
        assert_eq!(eigenvalue(0, &g), 0.0);
        assert!((eigenvalue(1, &g) - 0.375).abs() < 1e-15);
        // in ℕ/8 for SU(2)
        for m in 0..40 {
            let e8 = eigenvalue(m, &g) * 8.0;
            assert!((e8 - e8.round()).abs() < 1e-9, "m={m}");
        }
        let so3 = GroupSpec::new(GroupKind::So3);
        assert!((eigenvalue(1, &so3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn char_product_basic() {
        assert_eq!(char_product(0, 5), vec![5]);
        assert_eq!(char_product(1, 1), vec![0, 2]);
        assert_eq!(char_product(2, 3), vec![1, 3, 5]);
    }

    #[test]
    fn char_product_commutative_with_count() {
        for h in 0..=30 {
            for m in 0..=30 {
                let p = char_product(h, m);
                assert_eq!(p, char_product(m, h));
                assert_eq!(p.len(), h.min(m) + 1);
            }
        }
    }

    #[test]
    fn char_product_dimension_bookkeeping() {
        // Σ over the product of (label+1) = (h+1)(m+1): representation
        // dimensions multiply.
        for h in 0..=30usize {
            for m in 0..=30usize {
                let total: usize = char_product(h, m).iter().map(|&x| x + 1).sum();
                assert_eq!(total, (h + 1) * (m + 1), "h={h} m={m}");
            }
        }
    }

    #[test]
    fn mult_matrix_identity() {
        let g = su2();
        let b = CentralFunction::character(0);
        let mat = multiplication_matrix(&b, 4, &g).unwrap();
        for m in 0..=4 {
            for m2 in 0..=4 {
                let expect = if m == m2 { 1.0 } else { 0.0 };
                assert_eq!(mat[[m, m2]], C64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn mult_matrix_chi1_tridiagonal() {
        let g = su2();
        let mat = multiplication_matrix(&CentralFunction::character(1), 2, &g).unwrap();
        for m in 0..=2usize {
            for m2 in 0..=2usize {
                let expect = if m.abs_diff(m2) == 1 { 1.0 } else { 0.0 };
                assert_eq!(mat[[m, m2]], C64::new(expect, 0.0), "m={m} m'={m2}");
            }
        }
    }

    #[test]
    fn mult_matrix_band_bound() {
        let g = su2();
        let b = CentralFunction::from_pairs(&[
            (1, C64::new(1.0, 0.0)),
            (3, C64::new(1.0, 0.0)),
        ]);
        let mat = multiplication_matrix(&b, 8, &g).unwrap();
        for m in 0..=8usize {
            for m2 in 0..=8usize {
                if m.abs_diff(m2) > 3 {
                    assert_eq!(mat[[m, m2]], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn mult_matrix_matches_expansion_oracle() {
        let g = su2();
        let b = CentralFunction::from_pairs(&[
            (0, C64::new(0.3, 0.0)),
            (2, C64::new(-1.25, 0.5)),
            (5, C64::new(0.7, -0.1)),
        ]);
        let mat = multiplication_matrix(&b, 10, &g).unwrap();
        for m in 0..=10 {
            for m2 in 0..=10 {
                let expect = mult_entry_oracle(&b, m, m2, &g);
                assert!((mat[[m, m2]] - expect).norm() < 1e-14);
            }
        }
        // SO(3): even-sublattice rule, cross-checked the same way.
        let so3 = GroupSpec::new(GroupKind::So3);
        let b3 = CentralFunction::from_pairs(&[
            (1, C64::new(0.9, 0.0)),
            (2, C64::new(0.4, 0.0)),
        ]);
        let mat3 = multiplication_matrix(&b3, 7, &so3).unwrap();
        for m in 0..=7 {
            for m2 in 0..=7 {
                let expect = mult_entry_oracle(&b3, m, m2, &so3);
                assert!((mat3[[m, m2]] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn mult_matrix_symmetric_and_linear() {
        let g = su2();
        let b = CentralFunction::from_pairs(&[
            (1, C64::new(0.5, 0.0)),
            (4, C64::new(-2.0, 0.0)),
        ]);
        let c = CentralFunction::from_pairs(&[(2, C64::new(1.5, 0.0))]);
        let mb = multiplication_matrix(&b, 9, &g).unwrap();
        let mc = multiplication_matrix(&c, 9, &g).unwrap();
        let msum = multiplication_matrix(&b.add(&c), 9, &g).unwrap();
        for m in 0..=9 {
            for m2 in 0..=9 {
                assert_eq!(mb[[m, m2]], mb[[m2, m]]);
                assert!((msum[[m, m2]] - mb[[m, m2]] - mc[[m, m2]]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn mult_matrix_homomorphism_on_safe_subblock() {
        // matrix(b)·matrix(c) = matrix(b·c) where truncation cannot leak.
        let g = su2();
        let b = CentralFunction::from_pairs(&[
            (1, C64::new(1.0, 0.0)),
            (2, C64::new(0.25, 0.0)),
        ]);
        let c = CentralFunction::from_pairs(&[(3, C64::new(-0.5, 0.0))]);
        let m_max = 12usize;
        let mb = multiplication_matrix(&b, m_max, &g).unwrap();
        let mc = multiplication_matrix(&c, m_max, &g).unwrap();
        let mbc = multiplication_matrix(&b.mul(&c, &g), m_max, &g).unwrap();
        let prod = mb.dot(&mc);
        let safe = m_max - b.max_label() - c.max_label();
        for m in 0..=safe {
            for m2 in 0..=safe {
                assert!(
                    (prod[[m, m2]] - mbc[[m, m2]]).norm() < 1e-13,
                    "m={m} m'={m2}"
                );
            }
        }
    }

    #[test]
    fn mult_matrix_rejects_aliasing_support() {
        let g = su2();
        let b = CentralFunction::character(9);
        match multiplication_matrix(&b, 4, &g) {
            Err(Error::AliasedSupport { support, limit, .. }) => {
                assert_eq!(support, 9);
                assert_eq!(limit, 8);
            }
            other => panic!("expected aliasing rejection, got {other:?}"),
        }
    }

    #[test]
    fn decay_profile_exact_bands() {
        let g = su2();
        let id = multiplication_matrix(&CentralFunction::character(0), 6, &g).unwrap();
        assert_eq!(decay_profile(&id), DecayProfile::ExactBand { width: 0 });
        let chi1 = multiplication_matrix(&CentralFunction::character(1), 6, &g).unwrap();
        assert_eq!(decay_profile(&chi1), DecayProfile::ExactBand { width: 1 });
    }

    #[test]
    fn decay_profile_polynomial_coefficients() {
        let g = su2();
        let pairs: Vec<(usize, C64)> = (0..=20)
            .map(|h| (h, C64::new((1.0 + h as f64).powi(-4), 0.0)))
            .collect();
        let b = CentralFunction::from_pairs(&pairs);
        let mat = multiplication_matrix(&b, 10, &g).unwrap();
        match decay_profile(&mat) {
            DecayProfile::Fitted { exponent, .. } => {
                assert!(exponent >= 3.5, "fitted exponent {exponent}");
            }
            other => panic!("expected fit, got {other:?}"),
        }
    }
}
