//! Index sets, distances, Sobolev weights and Diophantine frequency
//! directions.
//!
//! Sites are `k = (l, m, sign)` with `l ∈ ℤ^d` a time-Fourier index, `m ∈ ℕ`
//! a representation label and `sign = ±1`. The label `m` carries the weight
//! `j = m · label_step` on the dominant-weight ray, with `ρ` the
//! fundamental-weight norm. For SU(2), `Λ₊ ≅ ℕ/√8` and `ρ = 1/√8`; SO(3) is
//! represented on the even SU(2) sublattice (`label_step = 2ρ`, same `ρ`),
//! which yields the eigenvalues `n(n+1)/2`.

use serde::{Deserialize, Serialize};

/// Which compact group the central-function sector lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Su2,
    So3,
}

/// Group data entering distances, weights and eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSpec {
    pub kind: GroupKind,
    /// Fundamental-weight norm ρ (= 1/√8 for both SU(2) and the even-label
    /// SO(3) embedding).
    pub rho: f64,
    /// Weight of one label unit: `j(m) = m · label_step`.
    pub label_step: f64,
}

impl GroupSpec {
    pub fn new(kind: GroupKind) -> Self {
        let rho = 1.0 / 8f64.sqrt();
        let label_step = match kind {
            GroupKind::Su2 => rho,
            GroupKind::So3 => 2.0 * rho,
        };
        GroupSpec {
            kind,
            rho,
            label_step,
        }
    }

    /// Dominant weight `j = m · label_step` of label `m`.
    pub fn weight(&self, m: usize) -> f64 {
        m as f64 * self.label_step
    }

    /// Ratio `label_step / ρ` as an integer: the SU(2) label units carried by
    /// one label of this group (1 for SU(2), 2 for SO(3)).
    pub fn su2_units(&self) -> usize {
        (self.label_step / self.rho).round() as usize
    }
}

/// A point of the truncated index set: `(l, m, sign)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SiteIndex {
    /// Time-Fourier index, length `d`.
    pub l: Vec<i64>,
    /// Representation label (`j = m · label_step`).
    pub m: usize,
    /// Sign `𝔞 ∈ {+1, -1}` of the doubled phase space.
    pub a: i8,
}

impl SiteIndex {
    pub fn new(l: Vec<i64>, m: usize, a: i8) -> Self {
        debug_assert!(a == 1 || a == -1);
        SiteIndex { l, m, a }
    }
}

/// `|l|_∞` of an integer vector.
pub fn linf(l: &[i64]) -> i64 {
    l.iter().map(|x| x.abs()).max().unwrap_or(0)
}

/// Distance between two sites: 1 if they differ only in the sign, otherwise
/// `max(|l - l'|_∞, |j - j'|)`.
pub fn site_distance(k: &SiteIndex, k2: &SiteIndex, g: &GroupSpec) -> f64 {
    debug_assert_eq!(k.l.len(), k2.l.len());
    if k.l == k2.l && k.m == k2.m && k.a != k2.a {
        return 1.0;
    }
    let dl = k
        .l
        .iter()
        .zip(&k2.l)
        .map(|(a, b)| (a - b).abs())
        .max()
        .unwrap_or(0) as f64;
    let dj = (k.m as f64 - k2.m as f64).abs() * g.label_step;
    dl.max(dj)
}

/// Distance in the Töplitz coordinates `(h = l - l', m, a, m', a')`.
pub fn shift_distance(h: &[i64], m: usize, a: i8, m2: usize, a2: i8, g: &GroupSpec) -> f64 {
    if h.iter().all(|&x| x == 0) && m == m2 && a != a2 {
        return 1.0;
    }
    let dl = linf(h) as f64;
    let dj = (m as f64 - m2 as f64).abs() * g.label_step;
    dl.max(dj)
}

/// Sobolev weight `|j + ρ|` of a site.
pub fn sobolev_weight(k: &SiteIndex, g: &GroupSpec) -> f64 {
    g.weight(k.m) + g.rho
}

/// Weight `|j + ρ|` by label only.
pub fn label_weight(m: usize, g: &GroupSpec) -> f64 {
    g.weight(m) + g.rho
}

/// A Diophantine frequency direction `ω̃` with `|ω̃·l| ≥ 2γ₀|l|^{-d}` verified
/// for all `0 < |l|_∞ ≤ certified_up_to`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDirection {
    pub omega_tilde: Vec<f64>,
    pub gamma0: f64,
    pub certified_up_to: i64,
}

/// Outcome of a Diophantine scan.
#[derive(Debug, Clone, PartialEq)]
pub enum DiophantineOutcome {
    Certified { up_to: i64 },
    Violated { l: Vec<i64>, value: f64, bound: f64 },
}

impl FrequencyDirection {
    /// Builds a direction with `|ω̃|₁` scaled to `l1_target ∈ (0, 1]`, fixing
    /// `γ₀` as half the scanned minimum of `|ω̃·l| · |l|^d` over
    /// `0 < |l|_∞ ≤ scan_l`.
    pub fn from_direction(raw: &[f64], l1_target: f64, scan_l: i64) -> crate::Result<Self> {
        if !(l1_target > 0.0 && l1_target <= 1.0) {
            return Err(crate::Error::Config(
                "frequency scale must lie in (0, 1]".into(),
            ));
        }
        let norm1: f64 = raw.iter().map(|x| x.abs()).sum();
        if norm1 <= 0.0 {
            return Err(crate::Error::Config("frequency direction is zero".into()));
        }
        let mut omega: Vec<f64> = raw.iter().map(|x| x * l1_target / norm1).collect();
        // One more pass: floating-point division can leave |ω̃|₁ a hair over.
        let s: f64 = omega.iter().map(|x| x.abs()).sum();
        if s > 1.0 {
            for w in &mut omega {
                *w /= s;
            }
        }
        let d = omega.len() as i32;
        let mut min_scaled = f64::INFINITY;
        for_each_l(omega.len(), scan_l, &mut |l| {
            let dot: f64 = omega.iter().zip(l).map(|(w, &li)| w * li as f64).sum();
            let scaled = dot.abs() * (linf(l) as f64).powi(d);
            if scaled < min_scaled {
                min_scaled = scaled;
            }
        });
        if min_scaled <= 0.0 {
            return Err(crate::Error::Config(
                "frequency direction is rationally dependent within scan range".into(),
            ));
        }
        Ok(FrequencyDirection {
            omega_tilde: omega,
            gamma0: min_scaled / 2.0,
            certified_up_to: scan_l,
        })
    }

    /// Builds a direction normalized to `|ω̃|₁ = 1`.
    pub fn from_scan(raw: &[f64], scan_l: i64) -> crate::Result<Self> {
        Self::from_direction(raw, 1.0, scan_l)
    }

    /// The direction `(1, √2 - 1)` normalized to `|·|₁ = 1`.
    pub fn default_2d(scan_l: i64) -> Self {
        FrequencyDirection::from_scan(&[1.0, 2f64.sqrt() - 1.0], scan_l)
            .expect("default direction is irrational")
    }

    /// The same direction scaled to `|·|₁ = 1/5`: with eigenvalue gaps no
    /// smaller than 3/8, no `|l|_∞ ≤ 1` harmonic can resonate on
    /// `λ ∈ [1/2, 3/2]`, so the resonant parameter set stays O(γ) with a
    /// small constant.
    pub fn default_2d_scaled(scan_l: i64) -> Self {
        FrequencyDirection::from_direction(&[1.0, 2f64.sqrt() - 1.0], 0.2, scan_l)
            .expect("default direction is irrational")
    }

    pub fn dim(&self) -> usize {
        self.omega_tilde.len()
    }

    /// `ω̃ · l`.
    pub fn dot(&self, l: &[i64]) -> f64 {
        self.omega_tilde
            .iter()
            .zip(l)
            .map(|(w, &li)| w * li as f64)
            .sum()
    }
}

/// Scans all `0 < |l|_∞ ≤ scan_l` against `|ω̃·l| ≥ 2γ₀|l|^{-d}` and returns
/// either a certificate or the first violating `l` (in lexicographic order).
pub fn diophantine_check(f: &FrequencyDirection, scan_l: i64) -> DiophantineOutcome {
    assert!(scan_l >= 1);
    let d = f.dim() as i32;
    let mut violation: Option<(Vec<i64>, f64, f64)> = None;
    for_each_l(f.dim(), scan_l, &mut |l| {
        if violation.is_some() {
            return;
        }
        let value = f.dot(l).abs();
        let bound = 2.0 * f.gamma0 * (linf(l) as f64).powi(-d);
        if value < bound {
            violation = Some((l.to_vec(), value, bound));
        }
    });
    match violation {
        Some((l, value, bound)) => DiophantineOutcome::Violated { l, value, bound },
        None => DiophantineOutcome::Certified { up_to: scan_l },
    }
}

/// Visits every nonzero `l ∈ ℤ^dim` with `|l|_∞ ≤ bound`, lexicographically.
pub fn for_each_l(dim: usize, bound: i64, f: &mut dyn FnMut(&[i64])) {
    let mut l = vec![-bound; dim];
    loop {
        if l.iter().any(|&x| x != 0) {
            f(&l);
        }
        // odometer increment
        let mut i = dim;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if l[i] < bound {
                l[i] += 1;
                for x in l.iter_mut().skip(i + 1) {
                    *x = -bound;
                }
                break;
            }
        }
    }
}

/// All `l ∈ ℤ^dim` (including 0) with `|l|_∞ ≤ bound`, lexicographic.
pub fn l_box(dim: usize, bound: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut l = vec![-bound; dim];
    loop {
        out.push(l.clone());
        let mut i = dim;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if l[i] < bound {
                l[i] += 1;
                for x in l.iter_mut().skip(i + 1) {
                    *x = -bound;
                }
                break;
            }
        }
    }
}
