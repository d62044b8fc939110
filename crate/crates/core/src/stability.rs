//! Time integration of the linearized flow and the stability band of the
//! reduced dynamics.
//!
//! The linearized equation on the phase-space truncation is
//!
//! ```text
//! dh/dt = -i 𝓛(λω̃t) h,    𝓛(φ) = diag(𝔞μ⁰_m) - ε T(φ)
//! ```
//!
//! integrated with an adaptive Dormand–Prince 5(4) pair. The reduced flow is
//! the exact rotation `v_m(t) = e^{-i𝔞μ^∞_m t} v_m(0)`, an isometry in every
//! Sobolev norm; the stability band of the original flow is what we measure.
//!
//! Error control is per unit time: a step of size `h` is accepted when its
//! local error estimate stays below `tol·h·max(1, ‖y‖)`, so the accumulated
//! error over `[0, t]` is of order `tol·t`.

use ndarray::Array2;

use crate::decay_norm::{phase_norm_s, ToeplitzOp};
use crate::kam_driver::TransformChain;
use crate::lattice::{FrequencyDirection, GroupSpec};
use crate::linop::{build_diagonal, build_t, NlsModel};
use crate::{C64, Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Sampled solution curve with online norm extrema.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    /// `(s, inf, sup)` of `‖h(t)‖_s / ‖h(0)‖_s` over every accepted step.
    pub norm_band: Vec<(f64, f64, f64)>,
    pub steps: usize,
    pub rejected: usize,
    pub min_step: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[C64] {
        self.states.last().expect("nonempty trajectory")
    }
}

/// Extrema of `‖h(t)‖_s / ‖h(0)‖_s`: from the online band when the norm
/// index matches, otherwise recomputed over the samples.
pub fn stability_band(traj: &Trajectory, s: f64, g: &GroupSpec, m_max: usize) -> (f64, f64) {
    for &(bs, lo, hi) in &traj.norm_band {
        if bs == s {
            return (lo, hi);
        }
    }
    let h0 = phase_norm_s(&traj.states[0], g, m_max, s);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for st in &traj.states {
        let r = phase_norm_s(st, g, m_max, s) / h0;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// Precomputed slice machinery for `T(φ(t))·y`.
struct SliceApplier {
    blocks: Vec<(f64, Array2<C64>, usize)>,
    mlen: usize,
}

impl SliceApplier {
    fn new(t_op: &ToeplitzOp, freq: &FrequencyDirection, lambda: f64) -> Self {
        let blocks = t_op
            .shifts()
            .map(|(hk, blk)| {
                let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
                (lambda * freq.dot(&h), blk.clone(), t_op.band)
            })
            .collect();
        SliceApplier {
            blocks,
            mlen: t_op.mlen(),
        }
    }

    /// `out += Σ_h e^{i(ω̃·h)λt} blk·y`, band-aware.
    fn apply(&self, t: f64, y: &[C64], out: &mut [C64]) {
        let mlen = self.mlen;
        let p = 2 * mlen;
        for (wdot, blk, band) in &self.blocks {
            let phase = C64::from_polar(1.0, wdot * t);
            let bsl = blk.as_slice().expect("standard layout");
            for si in 0..2 {
                for m in 0..mlen {
                    let row = si * mlen + m;
                    let rsl = &bsl[row * p..(row + 1) * p];
                    let mut acc = ZERO;
                    let lo = m.saturating_sub(*band);
                    let hi = (m + *band).min(mlen - 1);
                    for sj in 0..2 {
                        let off = sj * mlen;
                        for mj in lo..=hi {
                            acc += rsl[off + mj] * y[off + mj];
                        }
                    }
                    out[row] += acc * phase;
                }
            }
        }
    }
}

// Dormand–Prince 5(4) coefficients.
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

/// Adaptive DP5(4) for `y' = f(t, y)` on complex state vectors.
fn integrate_dp54<F>(
    y0: &[C64],
    t_end: f64,
    tol: f64,
    sample_dt: f64,
    norm_s: &[f64],
    g: &GroupSpec,
    m_max: usize,
    mut f: F,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut k: Vec<Vec<C64>> = vec![vec![ZERO; n]; 7];
    let mut ytmp = vec![ZERO; n];
    f(0.0, &y, &mut k[0]);

    let base_norms: Vec<f64> = norm_s
        .iter()
        .map(|&s| phase_norm_s(y0, g, m_max, s))
        .collect();
    let mut band: Vec<(f64, f64, f64)> = norm_s.iter().map(|&s| (s, 1.0, 1.0)).collect();

    let mut traj_t = vec![0.0];
    let mut traj_y = vec![y.clone()];
    let mut next_sample = sample_dt;

    let f0_norm = k[0].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut h = (0.1 / f0_norm.max(1e-8)).min(t_end).max(1e-8);
    let mut steps = 0usize;
    let mut rejected = 0usize;
    let mut min_step = f64::INFINITY;
    let max_steps = 400_000_000usize;

    while t < t_end {
        if steps + rejected > max_steps {
            return Err(Error::Integration {
                reason: format!("step budget exhausted at t = {t:.3e}"),
            });
        }
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::Integration {
                reason: format!("step size underflow at t = {t:.3e}"),
            });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        // stages
        for stage in 0..6 {
            for i in 0..n {
                let mut acc = ZERO;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    let a = DP_A[stage][j];
                    if a != 0.0 {
                        acc += kj[i] * a;
                    }
                }
                ytmp[i] = y[i] + acc * h;
            }
            let (head, tail) = k.split_at_mut(stage + 1);
            let _ = head;
            f(t + DP_C[stage] * h, &ytmp, &mut tail[0]);
        }
        // error estimate: y5 is the last stage state (FSAL structure)
        let mut err2 = 0.0f64;
        for i in 0..n {
            let mut e = ZERO;
            for (j, kj) in k.iter().enumerate() {
                if DP_E[j] != 0.0 {
                    e += kj[i] * DP_E[j];
                }
            }
            err2 += (e * h).norm_sqr();
        }
        let err = err2.sqrt();
        let y_scale = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
        let budget = tol * h * y_scale;
        if err <= budget {
            // accept: the 6th stage evaluated at (t+h, y5) is the new k0
            t += h;
            for i in 0..n {
                let mut acc = ZERO;
                for (j, kj) in k.iter().enumerate().take(6) {
                    let a = DP_A[5][j];
                    if a != 0.0 {
                        acc += kj[i] * a;
                    }
                }
                y[i] += acc * h;
            }
            k[0] = k[6].clone();
            steps += 1;
            min_step = min_step.min(h);
            for (bi, &s) in norm_s.iter().enumerate() {
                let r = phase_norm_s(&y, g, m_max, s) / base_norms[bi];
                band[bi].1 = band[bi].1.min(r);
                band[bi].2 = band[bi].2.max(r);
            }
            if t >= next_sample || t >= t_end {
                traj_t.push(t);
                traj_y.push(y.clone());
                next_sample = t + sample_dt;
            }
        } else {
            rejected += 1;
        }
        let factor = if err > 0.0 {
            0.9 * (budget / err).powf(0.2)
        } else {
            5.0
        };
        h *= factor.clamp(0.2, 5.0);
    }
    Ok(Trajectory {
        times: traj_t,
        states: traj_y,
        norm_band: band,
        steps,
        rejected,
        min_step,
    })
}

/// Integrates the linearized flow `dh/dt = -i𝓛(λω̃t)h` from `h0` to `t_end`.
///
/// `norm_s` lists the Sobolev indices whose norm band is tracked at every
/// accepted step; the trajectory itself is sampled every `sample_dt`.
pub fn evolve_linearized(
    model: &NlsModel,
    lambda: f64,
    h0: &[C64],
    t_end: f64,
    tol: f64,
    sample_dt: f64,
    norm_s: &[f64],
) -> Result<Trajectory> {
    let t_op = build_t(model)?;
    let d0 = build_diagonal(model);
    let mu = d0.mu_vec();
    let mlen = model.trunc.m_max + 1;
    assert_eq!(h0.len(), 2 * mlen);
    let slicer = SliceApplier::new(&t_op, &model.freq, lambda);
    let eps = model.eps;
    let mut ty = vec![ZERO; 2 * mlen];
    let rhs = move |t: f64, y: &[C64], out: &mut [C64]| {
        // out = -i(diag(𝔞μ)y - ε T(φ)y)
        ty.iter_mut().for_each(|z| *z = ZERO);
        slicer.apply(t, y, &mut ty);
        for m in 0..mlen {
            out[m] = C64::new(0.0, -1.0) * (y[m] * mu[m] - ty[m] * eps);
            out[mlen + m] = C64::new(0.0, -1.0) * (-y[mlen + m] * mu[m] - ty[mlen + m] * eps);
        }
    };
    integrate_dp54(
        h0,
        t_end,
        tol,
        sample_dt,
        norm_s,
        &model.group,
        model.trunc.m_max,
        rhs,
    )
}

/// Exact reduced evolution: `v_m(t) = e^{-i𝔞μ^∞_m t} v_m(0)`.
pub fn evolve_reduced(mu_inf: &[f64], v0: &[C64], t: f64) -> Vec<C64> {
    let mlen = mu_inf.len();
    assert_eq!(v0.len(), 2 * mlen);
    let mut out = vec![ZERO; 2 * mlen];
    for m in 0..mlen {
        out[m] = v0[m] * C64::from_polar(1.0, -mu_inf[m] * t);
        out[mlen + m] = v0[mlen + m] * C64::from_polar(1.0, mu_inf[m] * t);
    }
    out
}

/// `‖Ψ(φ)^{-1}h - h‖_s / ‖h‖_s` at one angle.
pub fn transform_error(
    chain: &TransformChain,
    phi: &[f64],
    h: &[C64],
    s: f64,
    g: &GroupSpec,
    m_max: usize,
) -> f64 {
    let psi_inv = chain.psi_inv.phase_space_slice(phi);
    let mlen = m_max + 1;
    let mut out = vec![ZERO; 2 * mlen];
    for (i, oi) in out.iter_mut().enumerate() {
        let mut acc = ZERO;
        for (j, hj) in h.iter().enumerate() {
            acc += psi_inv[[i, j]] * hj;
        }
        *oi = acc - h[i];
    }
    phase_norm_s(&out, g, m_max, s) / phase_norm_s(h, g, m_max, s)
}

/// The conjugated flow `h(t) = Ψ(λω̃t) · e^{-i𝔇_∞ t} · Ψ(0)^{-1} h0`.
pub fn conjugated_state(
    chain: &TransformChain,
    mu_inf: &[f64],
    freq: &FrequencyDirection,
    lambda: f64,
    h0: &[C64],
    t: f64,
) -> Vec<C64> {
    let dim = freq.dim();
    let mlen = mu_inf.len();
    let phi0 = vec![0.0; dim];
    let psi_inv0 = chain.psi_inv.phase_space_slice(&phi0);
    let mut v0 = vec![ZERO; 2 * mlen];
    for (i, vi) in v0.iter_mut().enumerate() {
        for (j, hj) in h0.iter().enumerate() {
            *vi += psi_inv0[[i, j]] * hj;
        }
    }
    let vt = evolve_reduced(mu_inf, &v0, t);
    let phi_t: Vec<f64> = freq.omega_tilde.iter().map(|w| w * lambda * t).collect();
    let psi_t = chain.psi.phase_space_slice(&phi_t);
    let mut out = vec![ZERO; 2 * mlen];
    for (i, oi) in out.iter_mut().enumerate() {
        for (j, vj) in vt.iter().enumerate() {
            *oi += psi_t[[i, j]] * vj;
        }
    }
    out
}

/// Largest violation of the reality pairing `h⁻ = conj(h⁺)`.
pub fn pairing_defect(h: &[C64]) -> f64 {
    let mlen = h.len() / 2;
    (0..mlen)
        .map(|m| (h[mlen + m] - h[m].conj()).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::CentralFunction;
    use crate::lattice::GroupKind;
    use crate::linop::{ForcingSpec, PhiPolynomial, Truncation};

    fn su2() -> GroupSpec {
        GroupSpec::new(GroupKind::Su2)
    }

    fn model(eps: f64, m_max: usize) -> NlsModel {
        let mut p = PhiPolynomial::new();
        p.insert(
            vec![0, 0],
            CentralFunction::from_pairs(&[(0, C64::new(0.3, 0.0))]),
        );
        p.insert(
            vec![1, 0],
            CentralFunction::from_pairs(&[(1, C64::new(0.5, 0.0))]),
        );
        p.insert(
            vec![-1, 0],
            CentralFunction::from_pairs(&[(1, C64::new(0.5, 0.0))]),
        );
        NlsModel {
            group: su2(),
            d: 2,
            freq: crate::lattice::FrequencyDirection::default_2d_scaled(50),
            mass: 1.0,
            eps,
            forcing: ForcingSpec::LinearPotential { potential: p },
            trunc: Truncation {
                l_max: 8,
                m_max,
                h_cap: 16,
            },
        }
    }

    fn init_state(m_max: usize) -> Vec<C64> {
        let mlen = m_max + 1;
        let mut h0 = vec![ZERO; 2 * mlen];
        for m in 0..mlen {
            let z = C64::new(1.0 / (1.0 + m as f64 * m as f64), 0.3 / (1.0 + m as f64));
            h0[m] = z;
            h0[mlen + m] = z.conj();
        }
        h0
    }

    #[test]
    fn free_flow_rotates_each_mode() {
        let model = model(0.0, 5);
        let h0 = init_state(5);
        let t_end = 7.0;
        let traj =
            evolve_linearized(&model, 1.0, &h0, t_end, 1e-11, 1.0, &[2.0]).unwrap();
        let hf = traj.final_state();
        let mu = build_diagonal(&model).mu_vec();
        for m in 0..=5 {
            let expect = h0[m] * C64::from_polar(1.0, -mu[m] * t_end);
            assert!((hf[m] - expect).norm() < 1e-8, "m={m}");
            let expect2 = h0[6 + m] * C64::from_polar(1.0, mu[m] * t_end);
            assert!((hf[6 + m] - expect2).norm() < 1e-8);
        }
        let (lo, hi) = stability_band(&traj, 2.0, &su2(), 5);
        assert!((lo - 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn time_reversal_recovers_initial_state() {
        let model = model(5e-2, 4);
        let h0 = init_state(4);
        let tol = 1e-11;
        let t_end = 10.0;
        let fwd = evolve_linearized(&model, 0.93, &h0, t_end, tol, 10.0, &[2.0]).unwrap();
        // integrate the reversed equation: g(τ) = h(t_end - τ)
        let t_op = build_t(&model).unwrap();
        let d0 = build_diagonal(&model);
        let mu = d0.mu_vec();
        let mlen = 5;
        let slicer = SliceApplier::new(&t_op, &model.freq, 0.93);
        let eps = model.eps;
        let rhs = move |tau: f64, y: &[C64], out: &mut [C64]| {
            let t = t_end - tau;
            let mut ty = vec![ZERO; y.len()];
            slicer.apply(t, y, &mut ty);
            for m in 0..mlen {
                out[m] = C64::new(0.0, 1.0) * (y[m] * mu[m] - ty[m] * eps);
                out[mlen + m] =
                    C64::new(0.0, 1.0) * (-y[mlen + m] * mu[m] - ty[mlen + m] * eps);
            }
        };
        let back = integrate_dp54(
            fwd.final_state(),
            t_end,
            tol,
            10.0,
            &[2.0],
            &su2(),
            4,
            rhs,
        )
        .unwrap();
        let hb = back.final_state();
        let err: f64 = hb
            .iter()
            .zip(&h0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 10.0 * tol * t_end.max(1.0), "reversal error {err}");
    }

    #[test]
    fn reality_pairing_preserved() {
        let model = model(5e-2, 5);
        let h0 = init_state(5);
        assert!(pairing_defect(&h0) < 1e-15);
        let traj = evolve_linearized(&model, 1.1, &h0, 20.0, 1e-10, 2.0, &[2.0]).unwrap();
        for st in &traj.states {
            assert!(pairing_defect(st) < 1e-7);
        }
    }

    #[test]
    fn reduced_flow_is_isometric_rotation() {
        let mu = vec![1.0, 1.375, 2.0, 2.875];
        let mut v0 = init_state(3);
        v0[2] = C64::new(-0.4, 0.9);
        let g = su2();
        let n0 = phase_norm_s(&v0, &g, 3, 2.0);
        // t = 0 identity
        let v_at_0 = evolve_reduced(&mu, &v0, 0.0);
        assert_eq!(v_at_0, v0);
        // norm conserved to rounding at long times
        let vt = evolve_reduced(&mu, &v0, 1e3);
        assert!((phase_norm_s(&vt, &g, 3, 2.0) - n0).abs() <= 1e-12 * n0);
        // two-time composition
        let a = evolve_reduced(&mu, &evolve_reduced(&mu, &v0, 3.7), 2.1);
        let b = evolve_reduced(&mu, &v0, 5.8);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn extended_phase_space_cross_check() {
        // autonomous formulation: carry φ as extra state with φ' = λω̃
        let model = model(5e-2, 3);
        let lambda = 0.87;
        let h0 = init_state(3);
        let t_end = 5.0;
        let tol = 1e-11;
        let direct =
            evolve_linearized(&model, lambda, &h0, t_end, tol, t_end, &[2.0]).unwrap();
        let t_op = build_t(&model).unwrap();
        let mu = build_diagonal(&model).mu_vec();
        let mlen = 4;
        let eps = model.eps;
        let omega: Vec<f64> = model
            .freq
            .omega_tilde
            .iter()
            .map(|w| w * lambda)
            .collect();
        let blocks: Vec<(Vec<i64>, Array2<C64>)> = t_op
            .shifts()
            .map(|(hk, blk)| (hk.iter().map(|&x| x as i64).collect(), blk.clone()))
            .collect();
        let mut y0 = h0.clone();
        y0.push(ZERO); // φ₁
        y0.push(ZERO); // φ₂
        let rhs = move |_t: f64, y: &[C64], out: &mut [C64]| {
            let phi = [y[2 * mlen].re, y[2 * mlen + 1].re];
            let mut ty = vec![ZERO; 2 * mlen];
            for (h, blk) in &blocks {
                let arg: f64 = h.iter().zip(&phi).map(|(&hi, &p)| hi as f64 * p).sum();
                let phase = C64::from_polar(1.0, arg);
                for i in 0..2 * mlen {
                    let mut acc = ZERO;
                    for j in 0..2 * mlen {
                        acc += blk[[i, j]] * y[j];
                    }
                    ty[i] += acc * phase;
                }
            }
            for m in 0..mlen {
                out[m] = C64::new(0.0, -1.0) * (y[m] * mu[m] - ty[m] * eps);
                out[mlen + m] =
                    C64::new(0.0, -1.0) * (-y[mlen + m] * mu[m] - ty[mlen + m] * eps);
            }
            out[2 * mlen] = C64::new(omega[0], 0.0);
            out[2 * mlen + 1] = C64::new(omega[1], 0.0);
        };
        let ext = integrate_dp54(&y0, t_end, tol, t_end, &[], &su2(), 3, rhs).unwrap();
        let hf_ext = &ext.final_state()[..2 * mlen];
        let err: f64 = hf_ext
            .iter()
            .zip(direct.final_state())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 100.0 * tol * t_end, "cross-check error {err}");
    }
}
