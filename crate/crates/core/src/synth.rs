//! Seeded random inputs for property tests, the verify suite and fitted
//! inequality constants.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decay_norm::ToeplitzOp;
use crate::harmonics::CentralFunction;
use crate::lattice::{l_box, GroupSpec};
use crate::C64;

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_complex(rng: &mut ChaCha8Rng, amp: f64) -> C64 {
    C64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp))
}

/// Dense-in-band random operator with shifts `|h|_∞ ≤ h_radius` and labels
/// within `band` of each other.
pub fn random_op(
    rng: &mut ChaCha8Rng,
    group: GroupSpec,
    d: usize,
    m_max: usize,
    h_radius: i64,
    band: usize,
    amp: f64,
) -> ToeplitzOp {
    let mut op = ToeplitzOp::zero(group, d, m_max);
    for h in l_box(d, h_radius) {
        for m in 0..=m_max {
            for m2 in m.saturating_sub(band)..=(m + band).min(m_max) {
                for a in [1i8, -1] {
                    for a2 in [1i8, -1] {
                        op.set_entry(&h, m, a, m2, a2, unit_complex(rng, amp));
                    }
                }
            }
        }
    }
    op
}

/// Random operator with the linear-Hamiltonian-field block structure: with
/// quadrants `M = [[P, S], [S', P']]` it satisfies `P[h] = -conj(P[-h])ᵀ`,
/// `P'[h] = conj(P[-h])`, `S[h] = S[h]ᵀ` and `S'[h] = conj(S[-h])`, so that
/// `iσ₃M` is self-adjoint.
pub fn random_hamiltonian_op(
    rng: &mut ChaCha8Rng,
    group: GroupSpec,
    d: usize,
    m_max: usize,
    h_radius: i64,
    band: usize,
    amp: f64,
) -> ToeplitzOp {
    let mut op = ToeplitzOp::zero(group, d, m_max);
    let mlen = m_max + 1;
    let in_band = |m: usize, m2: usize| m.abs_diff(m2) <= band;
    let draw_block = |rng: &mut ChaCha8Rng| -> Array2<C64> {
        let mut blk = Array2::zeros((mlen, mlen));
        for m in 0..mlen {
            for m2 in 0..mlen {
                if in_band(m, m2) {
                    blk[[m, m2]] = unit_complex(rng, amp);
                }
            }
        }
        blk
    };
    for h in l_box(d, h_radius) {
        // visit each {h, -h} orbit once
        if h.iter().find(|&&x| x != 0).map(|&x| x < 0).unwrap_or(false) {
            continue;
        }
        let neg: Vec<i64> = h.iter().map(|&x| -x).collect();
        let zero_shift = h.iter().all(|&x| x == 0);

        // ++ quadrant: free at h, reflected at -h (anti-Hermitian pair).
        let mut p = draw_block(rng);
        if zero_shift {
            let q = p.clone();
            for m in 0..mlen {
                for m2 in 0..mlen {
                    p[[m, m2]] = (q[[m, m2]] - q[[m2, m]].conj()) * 0.5;
                }
            }
        }
        let p_neg = -p.t().mapv(|z| z.conj());
        for (hh, blk) in [(&h, &p), (&neg, &p_neg)] {
            for m in 0..mlen {
                for m2 in 0..mlen {
                    if blk[[m, m2]] != C64::new(0.0, 0.0) {
                        op.set_entry(hh, m, 1, m2, 1, blk[[m, m2]]);
                        // -- quadrant mirrors: M--[h'] = conj(M++[-h'])
                    }
                }
            }
            if zero_shift {
                break;
            }
        }

        // +- quadrant: symmetric block at each of h and -h independently.
        for hh in if zero_shift {
            vec![h.clone()]
        } else {
            vec![h.clone(), neg.clone()]
        } {
            let raw = draw_block(rng);
            for m in 0..mlen {
                for m2 in m..mlen {
                    if in_band(m, m2) {
                        let sym = (raw[[m, m2]] + raw[[m2, m]]) * 0.5;
                        op.set_entry(&hh, m, 1, m2, -1, sym);
                        op.set_entry(&hh, m2, 1, m, -1, sym);
                    }
                }
            }
        }
    }
    // Close the structure: M--[h] = conj(M++[-h]), M-+[h] = conj(M+-[-h]).
    let closed = op.clone();
    for (hk, _) in closed.shifts() {
        let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
        let neg: Vec<i64> = h.iter().map(|&x| -x).collect();
        for m in 0..mlen {
            for m2 in 0..mlen {
                let pp = closed.entry(&neg, m, 1, m2, 1);
                if pp != C64::new(0.0, 0.0) {
                    op.set_entry(&h, m, -1, m2, -1, pp.conj());
                }
                let pm = closed.entry(&neg, m, 1, m2, -1);
                if pm != C64::new(0.0, 0.0) {
                    op.set_entry(&h, m, -1, m2, 1, pm.conj());
                }
            }
        }
    }
    op
}

/// Random real central function supported on `0..=max_label`.
pub fn random_real_central(
    rng: &mut ChaCha8Rng,
    max_label: usize,
    amp: f64,
) -> CentralFunction {
    let pairs: Vec<(usize, C64)> = (0..=max_label)
        .map(|m| (m, C64::new(rng.gen_range(-amp..amp), 0.0)))
        .collect();
    CentralFunction::from_pairs(&pairs)
}

/// Random phase-space vector of the given layout.
pub fn random_phase_vector(rng: &mut ChaCha8Rng, m_max: usize, amp: f64) -> Vec<C64> {
    (0..2 * (m_max + 1))
        .map(|_| unit_complex(rng, amp))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GroupKind;

    #[test]
    fn hamiltonian_structure_closes() {
        let g = GroupSpec::new(GroupKind::Su2);
        let mut rng = rng_from(3);
        let op = random_hamiltonian_op(&mut rng, g, 2, 5, 2, 3, 1.0);
        // iσ₃M self-adjoint ⇔ the four block conditions; spot-check two.
        for (hk, _) in op.shifts() {
            let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
            let neg: Vec<i64> = h.iter().map(|&x| -x).collect();
            for m in 0..=5 {
                for m2 in 0..=5 {
                    let pp = op.entry(&h, m, 1, m2, 1);
                    assert!(
                        (pp + op.entry(&neg, m2, 1, m, 1).conj()).norm() < 1e-14
                    );
                    let mm = op.entry(&h, m, -1, m2, -1);
                    assert!((mm - op.entry(&neg, m, 1, m2, 1).conj()).norm() < 1e-14);
                    let pm = op.entry(&h, m, 1, m2, -1);
                    assert!((pm - op.entry(&h, m2, 1, m, -1)).norm() < 1e-14);
                    assert!((pm - op.entry(&neg, m, -1, m2, 1).conj()).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn seeded_rng_reproducible() {
        let g = GroupSpec::new(GroupKind::Su2);
        let a = random_op(&mut rng_from(5), g, 2, 4, 1, 2, 1.0);
        let b = random_op(&mut rng_from(5), g, 2, 4, 1, 2, 1.0);
        assert!(a.sub(&b).s_norm(0.0) == 0.0);
    }
}
