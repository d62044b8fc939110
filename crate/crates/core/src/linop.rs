//! Assembly of the linearized operator `𝓛_ε = (-Δ + m)σ₃ - εT` and
//! verification of its Hamiltonian block structure.
//!
//! The forcing enters in two shapes: a real multiplicative potential
//! `V(φ, x)u` (trig polynomial in `φ`, central in `x`), or the cubic term
//! `|u|²u` linearized at a prescribed central quasi-periodic profile `w`. In
//! both cases `T` is Töplitz in time with multiplication-operator blocks,
//! and `-iεT` is a linear Hamiltonian vector field.

use std::collections::BTreeMap;

use crate::decay_norm::{ToeplitzOp, SIGNS};
use crate::harmonics::{multiplication_matrix, CentralFunction};
use crate::kam_step::DiagonalPart;
use crate::lattice::{linf, FrequencyDirection, GroupSpec};
use crate::{C64, Error, Result};

/// Trig polynomial in `φ` with central-function coefficients: a map from the
/// time harmonic `h` to the coefficient function.
pub type PhiPolynomial = BTreeMap<Vec<i64>, CentralFunction>;

/// Forcing specification; the profile for the cubic mode is the prescribed
/// approximate solution, which this engine treats as input data.
#[derive(Debug, Clone)]
pub enum ForcingSpec {
    /// `f = V(φ, x)·u` with `V` real valued.
    LinearPotential { potential: PhiPolynomial },
    /// `f = |u|²u` linearized at the central quasi-periodic profile `w`.
    CubicAtProfile { profile: PhiPolynomial },
}

impl ForcingSpec {
    /// Reality check for the potential: the coefficient at `-h` must be the
    /// conjugate of the coefficient at `h` (with real characters this makes
    /// `V` real valued).
    pub fn validate(&self) -> Result<()> {
        if let ForcingSpec::LinearPotential { potential } = self {
            for (h, c) in potential {
                let neg: Vec<i64> = h.iter().map(|&x| -x).collect();
                let mirror = potential.get(&neg).cloned().unwrap_or_default();
                let diff = mirror.add(&c.conj().scale(C64::new(-1.0, 0.0)));
                let worst = diff
                    .coeffs
                    .values()
                    .map(|z| z.norm())
                    .fold(0.0f64, f64::max);
                if worst > 1e-12 {
                    return Err(Error::Config(format!(
                        "potential is not real: coefficient mismatch {worst:.3e} at h={h:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest `|h|_∞` of the forcing data.
    pub fn shift_support(&self) -> i64 {
        let map = match self {
            ForcingSpec::LinearPotential { potential } => potential,
            ForcingSpec::CubicAtProfile { profile } => profile,
        };
        map.keys().map(|h| linf(h)).max().unwrap_or(0)
    }
}

/// Lattice truncation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub l_max: i64,
    pub m_max: usize,
    pub h_cap: i64,
}

/// A model instance: group, frequency, mass, forcing and truncations.
#[derive(Debug, Clone)]
pub struct NlsModel {
    pub group: GroupSpec,
    pub d: usize,
    pub freq: FrequencyDirection,
    pub mass: f64,
    pub eps: f64,
    pub forcing: ForcingSpec,
    pub trunc: Truncation,
}

impl NlsModel {
    pub fn validate(&self) -> Result<()> {
        if self.mass <= 0.0 {
            return Err(Error::Config("mass must be positive".into()));
        }
        if self.eps < 0.0 {
            return Err(Error::Config("eps must be nonnegative".into()));
        }
        if self.freq.dim() != self.d {
            return Err(Error::Config("frequency dimension mismatch".into()));
        }
        self.forcing.validate()
    }
}

/// Convolves two `φ`-polynomials of central functions, expanding the
/// pointwise products through the character rule.
fn phi_poly_mul(a: &PhiPolynomial, b: &PhiPolynomial, g: &GroupSpec) -> PhiPolynomial {
    let mut out: PhiPolynomial = BTreeMap::new();
    for (ha, ca) in a {
        for (hb, cb) in b {
            let h: Vec<i64> = ha.iter().zip(hb).map(|(x, y)| x + y).collect();
            let prod = ca.mul(cb, g);
            let entry = out.entry(h).or_default();
            *entry = entry.add(&prod);
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn phi_poly_conj(a: &PhiPolynomial) -> PhiPolynomial {
    a.iter()
        .map(|(h, c)| (h.iter().map(|&x| -x).collect(), c.conj()))
        .collect()
}

fn phi_poly_scale(a: &PhiPolynomial, z: C64) -> PhiPolynomial {
    a.iter().map(|(h, c)| (h.clone(), c.scale(z))).collect()
}

/// Sobolev norm of a profile: `sqrt(Σ_{h,m} |j_m+ρ|^{2s} |c_{h,m}|²)`.
pub fn profile_norm_s(w: &PhiPolynomial, g: &GroupSpec, s: f64) -> f64 {
    let mut total = 0.0;
    for c in w.values() {
        for (&m, z) in &c.coeffs {
            total += (g.weight(m) + g.rho).powf(2.0 * s) * z.norm_sqr();
        }
    }
    total.sqrt()
}

/// Writes a multiplication matrix into one quadrant of a shift block.
fn add_quadrant(
    op: &mut ToeplitzOp,
    h: &[i64],
    a: i8,
    a2: i8,
    mat: &ndarray::Array2<C64>,
    scale: C64,
) {
    for m in 0..=op.m_max {
        for m2 in 0..=op.m_max {
            let z = mat[[m, m2]] * scale;
            if z != C64::new(0.0, 0.0) {
                let prev = op.entry(h, m, a, m2, a2);
                op.set_entry(h, m, a, m2, a2, prev + z);
            }
        }
    }
}

/// Builds the Töplitz perturbation `T` of `𝓛_ε = (-Δ+m)σ₃ - εT`.
///
/// Linear mode: `T = [[V, 0], [0, -V]]` blockwise per time harmonic. Cubic
/// mode at profile `w`: diagonal blocks multiply by `2|w|²`, off-diagonal by
/// `w²` and its conjugate following the doubled-system sign pattern.
pub fn build_t(model: &NlsModel) -> Result<ToeplitzOp> {
    model.validate()?;
    let g = model.group;
    let m_max = model.trunc.m_max;
    let mut op = ToeplitzOp::zero(g, model.d, m_max);
    let reject_support = |poly: &PhiPolynomial, what: &'static str| -> Result<()> {
        let hs = poly.keys().map(|h| linf(h)).max().unwrap_or(0);
        if hs > model.trunc.l_max {
            return Err(Error::AliasedSupport {
                what,
                support: hs as usize,
                limit: model.trunc.l_max as usize,
            });
        }
        Ok(())
    };
    match &model.forcing {
        ForcingSpec::LinearPotential { potential } => {
            reject_support(potential, "potential time support vs l_max")?;
            for (h, v) in potential {
                let mat = multiplication_matrix(v, m_max, &g)?;
                add_quadrant(&mut op, h, 1, 1, &mat, C64::new(1.0, 0.0));
                add_quadrant(&mut op, h, -1, -1, &mat, C64::new(-1.0, 0.0));
            }
        }
        ForcingSpec::CubicAtProfile { profile } => {
            let w = profile;
            let wbar = phi_poly_conj(w);
            let w2 = phi_poly_mul(w, w, &g);
            let wbar2 = phi_poly_mul(&wbar, &wbar, &g);
            let absw2 = phi_poly_scale(&phi_poly_mul(w, &wbar, &g), C64::new(2.0, 0.0));
            reject_support(&w2, "profile-squared time support vs l_max")?;
            for (poly, a, a2, sgn) in [
                (&absw2, 1i8, 1i8, 1.0),
                (&absw2, -1, -1, -1.0),
                (&w2, 1, -1, -1.0),
                (&wbar2, -1, 1, 1.0),
            ] {
                for (h, c) in poly {
                    let mat = multiplication_matrix(c, m_max, &g)?;
                    add_quadrant(&mut op, h, a, a2, &mat, C64::new(sgn, 0.0));
                }
            }
        }
    }
    op.prune_zero_blocks();
    Ok(op)
}

/// Unperturbed corrected eigenvalues `μ_m = (j+ρ)² - ρ² + mass`, both signs
/// carried through the `σ₃` convention.
pub fn build_diagonal(model: &NlsModel) -> DiagonalPart {
    DiagonalPart::unperturbed(model.group, model.trunc.m_max, model.mass)
}

/// `σ₃ M`: negates the block rows with sign `-`.
pub fn sigma3_mul(op: &ToeplitzOp) -> ToeplitzOp {
    let mut out = ToeplitzOp::zero(op.group, op.d, op.m_max);
    for (hk, blk) in op.shifts() {
        let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
        let mut flipped = blk.clone();
        let mlen = op.mlen();
        for row in mlen..2 * mlen {
            for col in 0..2 * mlen {
                flipped[[row, col]] = -flipped[[row, col]];
            }
        }
        out.add_block(&h, &flipped, op.band);
    }
    out
}

/// Location and size of the worst Hamiltonian-structure violation.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianWitness {
    pub h: Vec<i64>,
    pub m: usize,
    pub a: i8,
    pub m2: usize,
    pub a2: i8,
    pub value: f64,
}

/// Report of [`check_hamiltonian`].
#[derive(Debug, Clone)]
pub struct HamiltonianReport {
    /// `s`-norm (at the requested `s`) of `iσ₃M - (iσ₃M)*`.
    pub s_norm_residual: f64,
    /// Largest entry of the defect.
    pub sup_residual: f64,
    pub worst: Option<HamiltonianWitness>,
    pub tol: f64,
}

impl HamiltonianReport {
    pub fn passed(&self) -> bool {
        self.s_norm_residual <= self.tol
    }
}

/// Verifies that `M` generates a linear Hamiltonian field: `iσ₃M` must be
/// self-adjoint in the lattice sense (shift `h` block against the
/// conjugate-transposed shift `-h` block).
pub fn check_hamiltonian(m: &ToeplitzOp, s: f64, tol: f64) -> HamiltonianReport {
    let skew = sigma3_mul(m).scale(C64::new(0.0, 1.0));
    let defect = skew.sub(&skew.adjoint());
    let mut sup = 0.0f64;
    let mut worst = None;
    for (hk, blk) in defect.shifts() {
        let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
        let mlen = defect.mlen();
        for m1 in 0..mlen {
            for a in SIGNS {
                for m2 in 0..mlen {
                    for a2 in SIGNS {
                        let v = blk[[defect.pidx(m1, a), defect.pidx(m2, a2)]].norm();
                        if v > sup {
                            sup = v;
                            worst = Some(HamiltonianWitness {
                                h: h.clone(),
                                m: m1,
                                a,
                                m2,
                                a2,
                                value: v,
                            });
                        }
                    }
                }
            }
        }
    }
    HamiltonianReport {
        s_norm_residual: defect.s_norm(s),
        sup_residual: sup,
        worst,
        tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::eigenvalue;
    use crate::lattice::GroupKind;
    use crate::materialize::{materialize, LatticeGrid, SparseLattice};
    use crate::synth::rng_from;
    use rand::Rng;

    fn su2() -> GroupSpec {
        GroupSpec::new(GroupKind::Su2)
    }

    fn model_with(forcing: ForcingSpec, m_max: usize) -> NlsModel {
        NlsModel {
            group: su2(),
            d: 2,
            freq: FrequencyDirection::default_2d(50),
            mass: 1.0,
            eps: 1e-3,
            forcing,
            trunc: Truncation {
                l_max: 8,
                m_max,
                h_cap: 16,
            },
        }
    }

    /// `V = 2cos(φ₁)·χ₁` as a φ-polynomial.
    fn cos_chi1() -> PhiPolynomial {
        let mut p = PhiPolynomial::new();
        p.insert(vec![1, 0], CentralFunction::character(1));
        p.insert(vec![-1, 0], CentralFunction::character(1));
        p
    }

    #[test]
    fn zero_potential_gives_zero_operator() {
        let model = model_with(
            ForcingSpec::LinearPotential {
                potential: PhiPolynomial::new(),
            },
            4,
        );
        let t = build_t(&model).unwrap();
        assert_eq!(t.s_norm(2.0), 0.0);
    }

    #[test]
    fn cosine_potential_blocks() {
        let model = model_with(
            ForcingSpec::LinearPotential {
                potential: cos_chi1(),
            },
            2,
        );
        let t = build_t(&model).unwrap();
        for h in [[1i64, 0], [-1, 0]] {
            for m in 0..=2usize {
                for m2 in 0..=2usize {
                    let expect = if m.abs_diff(m2) == 1 { 1.0 } else { 0.0 };
                    assert_eq!(t.entry(&h, m, 1, m2, 1), C64::new(expect, 0.0));
                    assert_eq!(t.entry(&h, m, -1, m2, -1), C64::new(-expect, 0.0));
                    assert_eq!(t.entry(&h, m, 1, m2, -1), C64::new(0.0, 0.0));
                    assert_eq!(t.entry(&h, m, -1, m2, 1), C64::new(0.0, 0.0));
                }
            }
        }
        assert_eq!(t.entry(&[0, 0], 1, 1, 0, 1), C64::new(0.0, 0.0));
    }

    #[test]
    fn diagonal_values() {
        let model = model_with(
            ForcingSpec::LinearPotential {
                potential: cos_chi1(),
            },
            4,
        );
        let d = build_diagonal(&model);
        assert_eq!(d.mu(0), 1.0);
        assert!((d.mu(1) - 1.375).abs() < 1e-15);
        for m in 0..=4 {
            assert_eq!(d.mu(m), eigenvalue(m, &su2()) + 1.0);
            assert_eq!(d.r(m), 0.0);
        }
    }

    #[test]
    fn real_potential_is_hamiltonian_field() {
        // complex harmonic coefficients with the reality pairing
        let mut p = cos_chi1();
        p.insert(
            vec![0, 1],
            CentralFunction::from_pairs(&[(2, C64::new(0.25, -0.125))]),
        );
        p.insert(
            vec![0, -1],
            CentralFunction::from_pairs(&[(2, C64::new(0.25, 0.125))]),
        );
        let model = model_with(ForcingSpec::LinearPotential { potential: p }, 5);
        let t = build_t(&model).unwrap();
        // the vector-field matrix is -iT (up to the ε scale)
        let field = t.scale(C64::new(0.0, -1.0));
        let report = check_hamiltonian(&field, 2.0, 1e-12);
        assert!(report.passed(), "residual {}", report.s_norm_residual);
        // σ₃·T materialized is Hermitian to rounding
        let grid = LatticeGrid::new(su2(), 2, 2, 5);
        let sp = materialize(&sigma3_mul(&t), &grid);
        let mut adj = SparseLattice::zeros(sp.n);
        for (i, row) in sp.rows.iter().enumerate() {
            for &(c, z) in row {
                adj.push(c as usize, i, z.conj());
            }
        }
        adj.sort_rows();
        assert!(sp.sub(&adj).frob() < 1e-12);
    }

    #[test]
    fn cubic_profile_is_hamiltonian_field() {
        let mut w = PhiPolynomial::new();
        w.insert(
            vec![1, 0],
            CentralFunction::from_pairs(&[(1, C64::new(0.3, 0.1))]),
        );
        w.insert(
            vec![0, -1],
            CentralFunction::from_pairs(&[(0, C64::new(-0.2, 0.05))]),
        );
        let model = model_with(ForcingSpec::CubicAtProfile { profile: w }, 6);
        let t = build_t(&model).unwrap();
        assert!(t.s_norm(2.0) > 0.0);
        let report = check_hamiltonian(&t.scale(C64::new(0.0, -1.0)), 2.0, 1e-12);
        assert!(report.passed(), "residual {}", report.s_norm_residual);
    }

    #[test]
    fn unmatched_entry_is_located() {
        let model = model_with(
            ForcingSpec::LinearPotential {
                potential: cos_chi1(),
            },
            3,
        );
        let mut field = build_t(&model).unwrap().scale(C64::new(0.0, -1.0));
        field.set_entry(&[1, 0], 2, 1, 1, 1, C64::new(0.5, 0.25));
        let report = check_hamiltonian(&field, 2.0, 1e-12);
        assert!(!report.passed());
        let w = report.worst.unwrap();
        // the defect shows up mirrored at ±h; either orientation locates it
        assert!((w.m, w.m2) == (2, 1) || (w.m, w.m2) == (1, 2));
        assert_eq!(w.h.iter().map(|x| x.abs()).max(), Some(1));
    }

    #[test]
    fn zero_operator_passes() {
        let z = ToeplitzOp::zero(su2(), 2, 3);
        assert!(check_hamiltonian(&z, 2.0, 1e-12).passed());
    }

    #[test]
    fn complex_unpaired_potential_rejected() {
        let mut p = PhiPolynomial::new();
        p.insert(
            vec![1, 0],
            CentralFunction::from_pairs(&[(1, C64::new(0.0, 1.0))]),
        );
        let spec = ForcingSpec::LinearPotential { potential: p };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn forcing_support_beyond_l_max_rejected() {
        let mut p = PhiPolynomial::new();
        p.insert(vec![9, 0], CentralFunction::character(1));
        p.insert(vec![-9, 0], CentralFunction::character(1));
        let model = model_with(ForcingSpec::LinearPotential { potential: p }, 3);
        match build_t(&model) {
            Err(Error::AliasedSupport { support, limit, .. }) => {
                assert_eq!(support, 9);
                assert_eq!(limit, 8);
            }
            other => panic!("expected aliasing rejection, got {other:?}"),
        }
    }

    #[test]
    fn build_t_lipschitz_in_profile() {
        // |T(w) - T(w')|_{s-ν₀} ≤ C(‖w-w'‖_s + (‖w‖_s+‖w'‖_s)‖w-w'‖_{s₀})
        let mut rng = rng_from(31);
        let s0 = 2.0;
        let s = 4.0;
        let nu0 = (2.0 * 2.0 + 5.0) / 2.0;
        let mut samples = Vec::new();
        for _ in 0..12 {
            let mut w1 = PhiPolynomial::new();
            let mut w2 = PhiPolynomial::new();
            for h in [vec![1i64, 0], vec![0, 1]] {
                let c1: Vec<(usize, C64)> = (0..3)
                    .map(|m| {
                        (m, C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
                    })
                    .collect();
                let c2: Vec<(usize, C64)> = (0..3)
                    .map(|m| {
                        (m, C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
                    })
                    .collect();
                w1.insert(h.clone(), CentralFunction::from_pairs(&c1));
                w2.insert(h, CentralFunction::from_pairs(&c2));
            }
            let m1 = model_with(ForcingSpec::CubicAtProfile { profile: w1.clone() }, 10);
            let m2 = model_with(ForcingSpec::CubicAtProfile { profile: w2.clone() }, 10);
            let t1 = build_t(&m1).unwrap();
            let t2 = build_t(&m2).unwrap();
            let lhs = t1.sub(&t2).s_norm(s - nu0);
            let mut dw = w1.clone();
            for (h, c) in &w2 {
                let e = dw.entry(h.clone()).or_default();
                *e = e.add(&c.scale(C64::new(-1.0, 0.0)));
            }
            let g = su2();
            let rhs = profile_norm_s(&dw, &g, s)
                + (profile_norm_s(&w1, &g, s) + profile_norm_s(&w2, &g, s))
                    * profile_norm_s(&dw, &g, s0);
            samples.push((lhs, rhs));
        }
        let c = crate::fitting::fitted_constant(&samples);
        assert!(c.is_finite() && c < 50.0, "Lipschitz fit blew up: {c}");
    }
}
