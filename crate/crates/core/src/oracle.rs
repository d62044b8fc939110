//! Independent brute-force oracles for the Töplitz machinery.
//!
//! Everything here works on the materialized lattice with generic sparse
//! algebra, never through the shift-convolution code paths it is meant to
//! check: the homological equation is re-verified as a plain matrix
//! identity, and one KAM step is replayed as a dense `e^A (D+R) e^{-A}`
//! conjugation column by column.

use rayon::prelude::*;

use crate::decay_norm::ToeplitzOp;
use crate::kam_step::{small_divisor, DiagonalPart, DivisorWitness};
use crate::lattice::{linf, site_distance, FrequencyDirection};
use crate::materialize::{materialize, LatticeGrid, SparseLattice};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Exhaustive Melnikov screen used to audit the windowed one: scans every
/// tuple directly and returns the minimal-divisor violation.
pub fn melnikov_screen_bruteforce(
    d: &DiagonalPart,
    freq: &FrequencyDirection,
    lambda: f64,
    gamma: f64,
    tau: f64,
    n_cut: f64,
) -> Option<DivisorWitness> {
    let mut worst: Option<DivisorWitness> = None;
    let n_l = n_cut.floor() as i64;
    for l in crate::lattice::l_box(freq.dim(), n_l.max(0)) {
        let thr = gamma * (linf(&l).max(1) as f64).powf(-tau);
        for m in 0..=d.m_max {
            for a in [1i8, -1] {
                for m2 in 0..=d.m_max {
                    for a2 in [1i8, -1] {
                        if m == m2 && a == a2 {
                            continue;
                        }
                        let div = small_divisor(freq, lambda, &l, m, a, m2, a2, d);
                        if div.abs() < thr {
                            let better = match &worst {
                                Some(w) => div.abs() < w.divisor.abs(),
                                None => true,
                            };
                            if better {
                                let (h, mm, aa, mm2, aa2, dv) = if div >= 0.0 {
                                    (l.clone(), m, a, m2, a2, div)
                                } else {
                                    (
                                        l.iter().map(|&x| -x).collect(),
                                        m2,
                                        a2,
                                        m,
                                        a,
                                        -div,
                                    )
                                };
                                worst = Some(DivisorWitness {
                                    h,
                                    m: mm,
                                    a: aa,
                                    m2: mm2,
                                    a2: aa2,
                                    divisor: dv,
                                    bound: thr,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Zeroes the entries of a materialized matrix beyond site distance `n`.
fn project_sites(sp: &SparseLattice, grid: &LatticeGrid, n: f64) -> SparseLattice {
    let mut out = SparseLattice::zeros(sp.n);
    for (i, row) in sp.rows.iter().enumerate() {
        let ki = grid.site(i);
        for &(c, z) in row {
            let kc = grid.site(c as usize);
            if site_distance(&ki, &kc, &grid.group) <= n {
                out.push(i, c as usize, z);
            }
        }
    }
    out
}

/// Checks `Π_N R + [A, D] - diag(R) = 0` on the materialized truncation via
/// generic sparse algebra. Returns `(‖residual‖_F, ‖R‖_F)`.
#[allow(clippy::too_many_arguments)]
pub fn homological_residual(
    grid: &LatticeGrid,
    r_op: &ToeplitzOp,
    a_op: &ToeplitzOp,
    d: &DiagonalPart,
    freq: &FrequencyDirection,
    lambda: f64,
    n_cut: f64,
) -> (f64, f64) {
    let mat_r = materialize(r_op, grid);
    let mat_a = materialize(a_op, grid);
    let dvec = grid.diagonal_symbol(lambda, &freq.omega_tilde, &d.mu_vec());
    // [A, D] = A·D - D·A through column/row scaling
    let comm = mat_a.scale_cols(&dvec).sub(&mat_a.scale_rows(&dvec));
    let pi_r = project_sites(&mat_r, grid, n_cut);
    let diag: Vec<C64> = mat_r.diagonal().iter().map(|z| -z).collect();
    let residual = pi_r.add_scaled(&comm, C64::new(1.0, 0.0)).add_diag(&diag);
    (residual.frob(), mat_r.frob())
}

/// `e^{±M} v` by the Taylor series on a sparse matrix.
pub fn exp_apply(sp: &SparseLattice, v: &[C64], sign: f64, tol: f64) -> Vec<C64> {
    let n = v.len();
    let mut out = v.to_vec();
    let mut term = v.to_vec();
    let mut scratch = vec![ZERO; n];
    let v_norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for k in 1..=120 {
        sp.matvec(&term, &mut scratch);
        let scale = sign / k as f64;
        for (t, s) in term.iter_mut().zip(&scratch) {
            *t = s * scale;
        }
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t;
        }
        let t_norm = term.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if t_norm <= tol * v_norm.max(1e-300) {
            break;
        }
    }
    out
}

/// Replays one KAM step densely: for every interior column `k'`, compares
/// `e^A (D + R) e^{-A} e_{k'}` against the Töplitz-step result `D₁ + R₁`.
/// Returns `(‖difference‖_F, ‖reference‖_F)` over the interior block.
#[allow(clippy::too_many_arguments)]
pub fn dense_conjugation_residual(
    grid: &LatticeGrid,
    a_op: &ToeplitzOp,
    r_op: &ToeplitzOp,
    d: &DiagonalPart,
    d_next: &DiagonalPart,
    r_next: &ToeplitzOp,
    freq: &FrequencyDirection,
    lambda: f64,
    margin: i64,
    series_tol: f64,
) -> (f64, f64) {
    let n = grid.n_sites();
    let mat_a = materialize(a_op, grid);
    let mat_r = materialize(r_op, grid);
    let dvec = grid.diagonal_symbol(lambda, &freq.omega_tilde, &d.mu_vec());
    let d1vec = grid.diagonal_symbol(lambda, &freq.omega_tilde, &d_next.mu_vec());
    let mat_r1_cols = transpose(&materialize(r_next, grid));
    let interior = grid.interior(margin);
    let mut mask = vec![false; n];
    for &i in &interior {
        mask[i] = true;
    }

    let partials: Vec<(f64, f64)> = interior
        .par_iter()
        .map(|&col| {
            let mut e = vec![ZERO; n];
            e[col] = C64::new(1.0, 0.0);
            let v = exp_apply(&mat_a, &e, -1.0, series_tol);
            let mut u = vec![ZERO; n];
            mat_r.matvec(&v, &mut u);
            for i in 0..n {
                u[i] += dvec[i] * v[i];
            }
            let w = exp_apply(&mat_a, &u, 1.0, series_tol);
            // reference column of D₁ + R₁
            let mut diff2 = 0.0;
            let mut ref2 = 0.0;
            let mut refs = vec![ZERO; n];
            for &(rrow, z) in &mat_r1_cols.rows[col] {
                refs[rrow as usize] = z;
            }
            refs[col] += d1vec[col];
            for i in 0..n {
                if !mask[i] {
                    continue;
                }
                ref2 += refs[i].norm_sqr();
                diff2 += (w[i] - refs[i]).norm_sqr();
            }
            (diff2, ref2)
        })
        .collect();
    let diff: f64 = partials.iter().map(|p| p.0).sum();
    let reference: f64 = partials.iter().map(|p| p.1).sum();
    (diff.sqrt(), reference.sqrt())
}

/// Compares a Töplitz-series exponential against the dense one on the
/// interior block. Returns `(‖difference‖_F, ‖reference‖_F)`.
pub fn dense_exp_residual(
    grid: &LatticeGrid,
    a_op: &ToeplitzOp,
    exp_op: &ToeplitzOp,
    margin: i64,
    series_tol: f64,
) -> (f64, f64) {
    let n = grid.n_sites();
    let mat_a = materialize(a_op, grid);
    let ref_cols = transpose(&materialize(exp_op, grid));
    let interior = grid.interior(margin);
    let mut mask = vec![false; n];
    for &i in &interior {
        mask[i] = true;
    }
    let partials: Vec<(f64, f64)> = interior
        .par_iter()
        .map(|&col| {
            let mut e = vec![ZERO; n];
            e[col] = C64::new(1.0, 0.0);
            let w = exp_apply(&mat_a, &e, 1.0, series_tol);
            let mut refs = vec![ZERO; n];
            for &(rrow, z) in &ref_cols.rows[col] {
                refs[rrow as usize] = z;
            }
            let mut diff2 = 0.0;
            let mut ref2 = 0.0;
            for i in 0..n {
                if !mask[i] {
                    continue;
                }
                ref2 += refs[i].norm_sqr();
                diff2 += (w[i] - refs[i]).norm_sqr();
            }
            (diff2, ref2)
        })
        .collect();
    let diff: f64 = partials.iter().map(|p| p.0).sum();
    let reference: f64 = partials.iter().map(|p| p.1).sum();
    (diff.sqrt(), reference.sqrt())
}

/// Column-major view of a sparse matrix (rows of the result are columns of
/// the input).
pub fn transpose(sp: &SparseLattice) -> SparseLattice {
    let mut out = SparseLattice::zeros(sp.n);
    for (i, row) in sp.rows.iter().enumerate() {
        for &(c, z) in row {
            out.rows[c as usize].push((i as u32, z));
        }
    }
    out.sort_rows();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kam_step::{conjugate, melnikov_screen, solve_homological, LieParams, StepOutcome};
    use crate::lattice::{GroupKind, GroupSpec};
    use crate::synth::{random_hamiltonian_op, rng_from};

    fn su2() -> GroupSpec {
        GroupSpec::new(GroupKind::Su2)
    }

    fn screened_lambda(
        d: &DiagonalPart,
        f: &FrequencyDirection,
        gamma: f64,
        tau: f64,
        n_cut: f64,
    ) -> f64 {
        for lambda in [0.937, 0.961, 1.043, 1.087, 1.123, 0.873] {
            if melnikov_screen(d, f, lambda, gamma, tau, n_cut).passed() {
                return lambda;
            }
        }
        panic!("no screened lambda among candidates");
    }

    #[test]
    fn homological_residual_is_rounding_level() {
        let mut rng = rng_from(50);
        let d = DiagonalPart::unperturbed(su2(), 6, 1.0);
        let f = FrequencyDirection::default_2d(50);
        let grid = LatticeGrid::new(su2(), 2, 3, 6);
        let lambda = screened_lambda(&d, &f, 1e-3, 5.0, 3.0);
        for _ in 0..3 {
            let r = random_hamiltonian_op(&mut rng, su2(), 2, 6, 1, 2, 1e-3);
            let a = solve_homological(&r, &d, &f, lambda, 3.0, 1e-3, 5.0).unwrap();
            let (res, r_norm) = homological_residual(&grid, &r, &a, &d, &f, lambda, 3.0);
            assert!(res <= 1e-12 * r_norm, "residual {res} vs {r_norm}");
        }
    }

    #[test]
    fn dense_conjugation_matches_toeplitz_step() {
        let mut rng = rng_from(51);
        let d = DiagonalPart::unperturbed(su2(), 5, 1.0);
        let f = FrequencyDirection::default_2d(50);
        let d_probe = DiagonalPart::unperturbed(su2(), 5, 1.0);
        let lambda = screened_lambda(&d_probe, &f, 1e-3, 5.0, 3.0);
        let n_cut = 3.0;
        let r = random_hamiltonian_op(&mut rng, su2(), 2, 5, 1, 2, 2e-3);
        let lie = LieParams {
            h_cap: 64,
            ..LieParams::default()
        };
        match crate::kam_step::kam_single_step(&d, &r, &f, lambda, 1e-3, 5.0, n_cut, &lie)
            .unwrap()
        {
            StepOutcome::Advanced {
                d_next,
                r_next,
                generator,
                ..
            } => {
                let grid = LatticeGrid::new(su2(), 2, 5, 5);
                let (diff, reference) = dense_conjugation_residual(
                    &grid, &generator, &r, &d, &d_next, &r_next, &f, lambda, 4, 1e-16,
                );
                assert!(
                    diff <= 1e-10 * reference,
                    "relative {:.3e}",
                    diff / reference
                );
            }
            _ => panic!("screen failed unexpectedly"),
        }
    }

    #[test]
    fn dense_conjugation_detects_sign_flip() {
        let mut rng = rng_from(52);
        let d = DiagonalPart::unperturbed(su2(), 5, 1.0);
        let f = FrequencyDirection::default_2d(50);
        let r = random_hamiltonian_op(&mut rng, su2(), 2, 5, 1, 2, 2e-3);
        let lie = LieParams {
            h_cap: 64,
            ..LieParams::default()
        };
        let lambda = screened_lambda(&d, &f, 1e-3, 5.0, 3.0);
        let a = solve_homological(&r, &d, &f, lambda, 3.0, 1e-3, 5.0).unwrap();
        let (d1, r1, _) = conjugate(&d, &r, &a, 3.0, &lie).unwrap();
        let grid = LatticeGrid::new(su2(), 2, 5, 5);
        let flipped = a.scale(C64::new(-1.0, 0.0));
        let (diff, reference) = dense_conjugation_residual(
            &grid, &flipped, &r, &d, &d1, &r1, &f, lambda, 4, 1e-16,
        );
        // corrupting the generator leaves a residual at the size of R
        let r_frob = materialize(&r, &grid).frob();
        assert!(diff / reference > 0.1 * r_frob / reference);
        assert!(diff > 1e-6);
    }

    #[test]
    fn exp_series_matches_dense_oracle() {
        let mut rng = rng_from(53);
        let a = random_hamiltonian_op(&mut rng, su2(), 2, 4, 1, 2, 0.02);
        let (ea, _) = a.exp_series(1e-16, 32, &[2.0]).unwrap();
        let grid = LatticeGrid::new(su2(), 2, 4, 4);
        let (diff, reference) = dense_exp_residual(&grid, &a, &ea, 3, 1e-16);
        assert!(diff <= 1e-10 * reference, "rel {:.3e}", diff / reference);
    }
}
