//! One step of the KAM reduction: Melnikov screening, homological equation,
//! Lie-series conjugation, new diagonal, remainder bounds.
//!
//! The ambient operator is `𝔏 = D + R` with `D = diag(i(λω̃·l + 𝔞μ_m))` and
//! `R` a Hamiltonian Töplitz remainder. The generator `A` solves
//!
//! ```text
//! Π_N R + [A, D] = diag(R),   A_k^{k'} = R_k^{k'} / (d_k - d_{k'})
//! ```
//!
//! over `0 < dist(k,k') ≤ N`, and the conjugated remainder is
//!
//! ```text
//! R₁ = Π_N^⊥ R + Σ_{m≥2} ad_A^{m-1}(diag R - Π_N R)/m! + Σ_{m≥1} ad_A^m(R)/m!
//! ```
//!
//! The `iω·l` symbol is never stored: commutators with `ω·∂_φ` act on a
//! shift-`h` block as multiplication by `iλω̃·h`, which the small divisors
//! absorb.

use std::fmt;

use crate::decay_norm::ToeplitzOp;
use crate::harmonics::eigenvalue;
use crate::lattice::{linf, shift_distance, FrequencyDirection, GroupSpec};
use crate::linop::check_hamiltonian;
use crate::{C64, Error, Result};

/// Corrected eigenvalues `μ_m = (j+ρ)² - ρ² + mass + r_m` at one parameter
/// value, plus bookkeeping for the reality projection.
#[derive(Debug, Clone)]
pub struct DiagonalPart {
    pub group: GroupSpec,
    pub mass: f64,
    pub m_max: usize,
    base: Vec<f64>,
    r: Vec<f64>,
    /// KAM step index this diagonal belongs to.
    pub step: usize,
    /// Largest discarded non-real residue of a diagonal correction so far.
    pub imag_residue: f64,
    /// Largest observed asymmetry between the `±` corrections so far.
    pub mirror_asymmetry: f64,
}

impl DiagonalPart {
    pub fn unperturbed(group: GroupSpec, m_max: usize, mass: f64) -> Self {
        let base = (0..=m_max).map(|m| eigenvalue(m, &group) + mass).collect();
        DiagonalPart {
            group,
            mass,
            m_max,
            base,
            r: vec![0.0; m_max + 1],
            step: 0,
            imag_residue: 0.0,
            mirror_asymmetry: 0.0,
        }
    }

    /// Builds a diagonal with prescribed corrections (used by the sieve).
    pub fn with_corrections(group: GroupSpec, m_max: usize, mass: f64, r: Vec<f64>) -> Self {
        assert_eq!(r.len(), m_max + 1);
        let mut d = Self::unperturbed(group, m_max, mass);
        d.r = r;
        d
    }

    pub fn mu(&self, m: usize) -> f64 {
        self.base[m] + self.r[m]
    }

    pub fn r(&self, m: usize) -> f64 {
        self.r[m]
    }

    pub fn mu_vec(&self) -> Vec<f64> {
        (0..=self.m_max).map(|m| self.mu(m)).collect()
    }

    pub fn r_vec(&self) -> &[f64] {
        &self.r
    }

    /// Site symbol `d_k = i(λω̃·l + 𝔞μ_m)` evaluated at a shift: the
    /// difference `d_k - d_{k'}` over a shift `h = l - l'`.
    pub fn symbol_diff(
        &self,
        freq: &FrequencyDirection,
        lambda: f64,
        h: &[i64],
        m: usize,
        a: i8,
        m2: usize,
        a2: i8,
    ) -> C64 {
        C64::new(0.0, small_divisor(freq, lambda, h, m, a, m2, a2, self))
    }
}

/// The small divisor `λω̃·h + 𝔞μ_m(λ) - 𝔞'μ_{m'}(λ)`.
#[allow(clippy::too_many_arguments)]
pub fn small_divisor(
    freq: &FrequencyDirection,
    lambda: f64,
    h: &[i64],
    m: usize,
    a: i8,
    m2: usize,
    a2: i8,
    d: &DiagonalPart,
) -> f64 {
    lambda * freq.dot(h) + a as f64 * d.mu(m) - a2 as f64 * d.mu(m2)
}

/// A divisor location `(h, m, 𝔞, m', 𝔞')` with its value and screened bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DivisorWitness {
    pub h: Vec<i64>,
    pub m: usize,
    pub a: i8,
    pub m2: usize,
    pub a2: i8,
    pub divisor: f64,
    pub bound: f64,
}

impl fmt::Display for DivisorWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(h={:?}, m={}, a={:+}, m'={}, a'={:+}): |{:.6e}| < {:.6e}",
            self.h, self.m, self.a, self.m2, self.a2, self.divisor, self.bound
        )
    }
}

/// Result of the second-order Melnikov screen.
#[derive(Debug, Clone)]
pub struct MelnikovScreen {
    /// Minimal-divisor violation, if any.
    pub witness: Option<DivisorWitness>,
    /// Number of divisor candidates actually evaluated.
    pub evaluated: usize,
    /// Minimum |divisor| among evaluated candidates.
    pub min_divisor: f64,
}

impl MelnikovScreen {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

/// Canonical representative of a divisor tuple: the orbit `(h,m,a,m',a') ↔
/// (-h,m',a',m,a)` flips the divisor sign; report the positive one.
fn canonical_witness(
    h: &[i64],
    m: usize,
    a: i8,
    m2: usize,
    a2: i8,
    div: f64,
    bound: f64,
) -> DivisorWitness {
    if div >= 0.0 {
        DivisorWitness {
            h: h.to_vec(),
            m,
            a,
            m2,
            a2,
            divisor: div,
            bound,
        }
    } else {
        DivisorWitness {
            h: h.iter().map(|&x| -x).collect(),
            m: m2,
            a: a2,
            m2: m,
            a2: a,
            divisor: -div,
            bound,
        }
    }
}

/// Screens `|λω̃·l + 𝔞μ_m - 𝔞'μ_{m'}| ≥ γ⟨l⟩^{-τ}` over `|l|_∞ ≤ n_cut` and
/// all pairs `(m,𝔞) ≠ (m',𝔞')` within the truncation.
///
/// Pairs at `l = 0` are checked directly; elsewhere a window search over the
/// sorted eigenvalues visits exactly the near-cancellations.
pub fn melnikov_screen(
    d: &DiagonalPart,
    freq: &FrequencyDirection,
    lambda: f64,
    gamma: f64,
    tau: f64,
    n_cut: f64,
) -> MelnikovScreen {
    let mu = d.mu_vec();
    let mut evaluated = 0usize;
    let mut min_div = f64::INFINITY;
    let mut worst: Option<DivisorWitness> = None;
    let mut consider = |h: &[i64], m: usize, a: i8, m2: usize, a2: i8, div: f64, thr: f64| {
        evaluated += 1;
        let ad = div.abs();
        if ad < min_div {
            min_div = ad;
        }
        if ad < thr {
            let better = match &worst {
                Some(w) => ad < w.divisor.abs(),
                None => true,
            };
            if better {
                worst = Some(canonical_witness(h, m, a, m2, a2, div, thr));
            }
        }
    };

    // l = 0: every distinct pair.
    let h0 = vec![0i64; freq.dim()];
    for m in 0..=d.m_max {
        for a in [1i8, -1] {
            for m2 in 0..=d.m_max {
                for a2 in [1i8, -1] {
                    if m == m2 && a == a2 {
                        continue;
                    }
                    let div = a as f64 * mu[m] - a2 as f64 * mu[m2];
                    consider(&h0, m, a, m2, a2, div, gamma);
                }
            }
        }
    }

    // l ≠ 0: window search for near-cancellations only.
    let n_l = n_cut.floor() as i64;
    if n_l >= 1 {
        let mut scan = |l: &[i64]| {
            let w = lambda * freq.dot(l);
            let thr = gamma * (linf(l).max(1) as f64).powf(-tau);
            let win = thr * (1.0 + 1e-12) + 1e-300;
            for a in [1i8, -1] {
                for a2 in [1i8, -1] {
                    for m in 0..=d.m_max {
                        let t = w + a as f64 * mu[m];
                        let (lo, hi) = if a2 == 1 {
                            (t - win, t + win)
                        } else {
                            (-t - win, -t + win)
                        };
                        let i0 = mu.partition_point(|&x| x < lo);
                        let i1 = mu.partition_point(|&x| x <= hi);
                        for m2 in i0..i1 {
                            if m == m2 && a == a2 {
                                continue;
                            }
                            let div = t - a2 as f64 * mu[m2];
                            consider(l, m, a, m2, a2, div, thr);
                        }
                    }
                }
            }
        };
        crate::lattice::for_each_l(freq.dim(), n_l, &mut scan);
    }

    MelnikovScreen {
        witness: worst,
        evaluated,
        min_divisor: min_div,
    }
}

/// Solves the homological equation: `A` entries are `R / (i·divisor)` over
/// `0 < dist ≤ N`, zero elsewhere. Divisors below the screened bound are a
/// contract violation (the screen must pass first).
pub fn solve_homological(
    r_op: &ToeplitzOp,
    d: &DiagonalPart,
    freq: &FrequencyDirection,
    lambda: f64,
    n_cut: f64,
    gamma: f64,
    tau: f64,
) -> Result<ToeplitzOp> {
    let g = r_op.group;
    let mut a_op = ToeplitzOp::zero(g, r_op.d, r_op.m_max);
    for (hk, blk) in r_op.shifts() {
        let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
        if linf(&h) as f64 > n_cut {
            continue;
        }
        let thr = gamma * (linf(&h).max(1) as f64).powf(-tau);
        for m in 0..=r_op.m_max {
            for a in [1i8, -1] {
                for m2 in 0..=r_op.m_max {
                    for a2 in [1i8, -1] {
                        let z = blk[[r_op.pidx(m, a), r_op.pidx(m2, a2)]];
                        if z == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let dist = shift_distance(&h, m, a, m2, a2, &g);
                        if dist == 0.0 || dist > n_cut {
                            continue;
                        }
                        let div = small_divisor(freq, lambda, &h, m, a, m2, a2, d);
                        if div.abs() < thr {
                            return Err(Error::ScreenViolation {
                                witness: canonical_witness(&h, m, a, m2, a2, div, thr),
                                divisor: div.abs(),
                                bound: thr,
                            });
                        }
                        // d_k - d_{k'} = i·divisor
                        a_op.set_entry(&h, m, a, m2, a2, z / C64::new(0.0, div));
                    }
                }
            }
        }
    }
    a_op.prune_zero_blocks();
    Ok(a_op)
}

/// Tuning knobs for the Lie series.
#[derive(Debug, Clone, Copy)]
pub struct LieParams {
    /// Relative term tolerance: stop when a term drops below
    /// `lie_tol_rel · |R|_{s₀}`.
    pub lie_tol_rel: f64,
    /// Hard shift cap applied to every composition.
    pub h_cap: i64,
    pub s0: f64,
    pub s_high: f64,
}

impl Default for LieParams {
    fn default() -> Self {
        LieParams {
            lie_tol_rel: 1e-14,
            h_cap: 16,
            s0: 2.0,
            s_high: 4.0,
        }
    }
}

/// Per-step diagnostics appended to the run report.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub step: usize,
    pub n_cut: f64,
    pub r_s0_before: f64,
    pub r_s0_after: f64,
    pub r_shigh_before: f64,
    pub r_shigh_after: f64,
    pub a_s0: f64,
    pub screened: usize,
    pub min_divisor: f64,
    /// Bound on the s₀-norm mass dropped by composition truncation.
    pub tail_s0: f64,
    /// Same at the high norm.
    pub tail_shigh: f64,
    pub hamiltonian_residual: f64,
    pub series_terms: usize,
    pub imag_residue: f64,
    pub mirror_asymmetry: f64,
    /// Largest eigenvalue correction `|r^{(n+1)} - r^{(n)}|` this step.
    pub eigenvalue_shift: f64,
}

/// Output of one KAM step at one parameter value.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Advanced {
        d_next: DiagonalPart,
        r_next: ToeplitzOp,
        generator: ToeplitzOp,
        diag: Box<StepDiagnostics>,
    },
    ScreenFailed {
        witness: DivisorWitness,
    },
}

/// Conjugates `D + R` by `e^A`: returns the new diagonal, the new remainder
/// and diagnostics. `A` must satisfy the homological equation for the given
/// smoothing cutoff.
pub fn conjugate(
    d: &DiagonalPart,
    r_op: &ToeplitzOp,
    a_op: &ToeplitzOp,
    n_cut: f64,
    lie: &LieParams,
) -> Result<(DiagonalPart, ToeplitzOp, StepDiagnostics)> {
    let s_pair = [lie.s0, lie.s_high];
    let a_s0 = a_op.s_norm(lie.s0);
    if a_s0 >= 0.5 {
        return Err(Error::SeriesAbort {
            reason: format!("generator too large: |A|_s0 = {a_s0:.3e} >= 1/2"),
        });
    }
    let r_s0 = r_op.s_norm(lie.s0);
    let r_shigh = r_op.s_norm(lie.s_high);
    let tol_abs = (lie.lie_tol_rel * r_s0).max(1e-300);
    let pair_floor = tol_abs * 1e-6;

    let diag_r = r_op.diag_op();
    let (pi_r, pi_perp_r) = r_op.smooth_project(n_cut);
    // B₁ = diag(R) - Π_N R = [A, D] by the homological equation.
    let b1 = diag_r.sub(&pi_r);

    let mut r_next = pi_perp_r;
    let mut tails = [0.0f64; 2];
    let mut terms = 0usize;

    let ad = |x: &ToeplitzOp, tails: &mut [f64; 2]| -> ToeplitzOp {
        let (ax, d1) = a_op.compose_filtered(x, lie.h_cap, pair_floor, &s_pair);
        let (xa, d2) = x.compose_filtered(a_op, lie.h_cap, pair_floor, &s_pair);
        tails[0] += d1[0] + d2[0];
        tails[1] += d1[1] + d2[1];
        ax.sub(&xa)
    };

    // Σ_{k≥1} ad_A^k(R)/k!
    let mut u = r_op.clone();
    let mut history: Vec<f64> = Vec::new();
    for k in 1..=80 {
        u = ad(&u, &mut tails).scale(C64::new(1.0 / k as f64, 0.0));
        let t_norm = u.s_norm(lie.s0);
        terms += 1;
        r_next = r_next.add(&u);
        if t_norm <= tol_abs {
            tails[0] += 2.0 * t_norm;
            tails[1] += 2.0 * u.s_norm(lie.s_high);
            break;
        }
        history.push(t_norm);
        if history.len() >= 3 {
            let h = &history[history.len() - 3..];
            if h[2] >= h[1] && h[1] >= h[0] {
                return Err(Error::SeriesAbort {
                    reason: format!(
                        "ad^k(R) terms non-decreasing for 3 terms at k={k}: {:?}",
                        h
                    ),
                });
            }
        }
        if k == 80 {
            return Err(Error::SeriesAbort {
                reason: "ad^k(R) series did not reach tolerance in 80 terms".into(),
            });
        }
    }

    // Σ_{k≥2} ad_A^{k-1}(B₁)/k!
    if b1.s_norm(lie.s0) > 0.0 {
        let mut v = b1.clone();
        let mut history: Vec<f64> = Vec::new();
        for k in 2..=81 {
            v = ad(&v, &mut tails).scale(C64::new(1.0 / k as f64, 0.0));
            let t_norm = v.s_norm(lie.s0);
            terms += 1;
            r_next = r_next.add(&v);
            if t_norm <= tol_abs {
                tails[0] += 2.0 * t_norm;
                tails[1] += 2.0 * v.s_norm(lie.s_high);
                break;
            }
            history.push(t_norm);
            if history.len() >= 3 {
                let h = &history[history.len() - 3..];
                if h[2] >= h[1] && h[1] >= h[0] {
                    return Err(Error::SeriesAbort {
                        reason: format!(
                            "ad^k(B₁) terms non-decreasing for 3 terms at k={k}: {:?}",
                            h
                        ),
                    });
                }
            }
            if k == 81 {
                return Err(Error::SeriesAbort {
                    reason: "ad^k(B₁) series did not reach tolerance in 81 terms".into(),
                });
            }
        }
    }
    r_next.prune_zero_blocks();

    // D₁ = D + diag(R), projected to real eigenvalues.
    let dv = r_op.diag_vector();
    let mlen = r_op.mlen();
    let mut d_next = d.clone();
    d_next.step = d.step + 1;
    let mut shift = 0.0f64;
    for m in 0..=d.m_max {
        let v_plus = dv[m];
        let v_minus = dv[mlen + m];
        let delta = v_plus.im;
        d_next.r[m] += delta;
        shift = shift.max(delta.abs());
        d_next.imag_residue = d_next.imag_residue.max(v_plus.re.abs()).max(v_minus.re.abs());
        d_next.mirror_asymmetry = d_next.mirror_asymmetry.max((v_plus.im + v_minus.im).abs());
    }

    let ham = check_hamiltonian(&r_next, lie.s0, 1e-10);
    let diag = StepDiagnostics {
        step: d.step,
        n_cut,
        r_s0_before: r_s0,
        r_s0_after: r_next.s_norm(lie.s0),
        r_shigh_before: r_shigh,
        r_shigh_after: r_next.s_norm(lie.s_high),
        a_s0,
        screened: 0,
        min_divisor: f64::INFINITY,
        tail_s0: tails[0],
        tail_shigh: tails[1],
        hamiltonian_residual: ham.s_norm_residual,
        series_terms: terms,
        imag_residue: d_next.imag_residue,
        mirror_asymmetry: d_next.mirror_asymmetry,
        eigenvalue_shift: shift,
    };
    Ok((d_next, r_next, diag))
}

/// One full KAM step: screen, solve, conjugate.
#[allow(clippy::too_many_arguments)]
pub fn kam_single_step(
    d: &DiagonalPart,
    r_op: &ToeplitzOp,
    freq: &FrequencyDirection,
    lambda: f64,
    gamma: f64,
    tau: f64,
    n_cut: f64,
    lie: &LieParams,
) -> Result<StepOutcome> {
    let screen = melnikov_screen(d, freq, lambda, gamma, tau, n_cut);
    if let Some(witness) = screen.witness {
        return Ok(StepOutcome::ScreenFailed { witness });
    }
    let a_op = solve_homological(r_op, d, freq, lambda, n_cut, gamma, tau)?;
    let (d_next, r_next, mut diag) = conjugate(d, r_op, &a_op, n_cut, lie)?;
    diag.screened = screen.evaluated;
    diag.min_divisor = screen.min_divisor;
    Ok(StepOutcome::Advanced {
        d_next,
        r_next,
        generator: a_op,
        diag: Box::new(diag),
    })
}
