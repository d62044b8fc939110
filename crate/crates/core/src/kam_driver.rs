//! The full KAM iteration: per-parameter step chains, nested acceptance,
//! limit eigenvalues, transform composition and final reduction residuals.
//!
//! Each parameter `λ` runs its own pipeline: screen at the current cutoff
//! `N_n`, solve the homological equation, conjugate, repeat. A screen
//! failure rejects `λ` with the witness (this realizes the nested parameter
//! sets of the iteration); a Lie-series abort rejects with the reason. For
//! accepted `λ` the residual sequence must contract below the configured
//! relative threshold.

use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::decay_norm::ToeplitzOp;
use crate::kam_step::{
    kam_single_step, DiagonalPart, DivisorWitness, LieParams, StepDiagnostics, StepOutcome,
};
use crate::lattice::{FrequencyDirection, GroupSpec};
use crate::linop::{build_diagonal, build_t, NlsModel};
use crate::{C64, Result};

/// Iteration schedule: cutoffs `N_n = ⌈N₀^{(3/2)^n}⌉` (clipped to the
/// lattice diameter), `β = 6τ + 5`, norms and Lie-series knobs.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub n0: usize,
    pub max_steps: usize,
    pub tau: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lie: LieParams,
    /// Effective cutoffs per step, after clipping.
    pub n_values: Vec<f64>,
    /// Set when clipping to the lattice diameter occurred.
    pub clipped: bool,
    /// Acceptance threshold on `|R_final|/|R₀|` at `s₀`.
    pub accept_residual_rel: f64,
    /// `ε γ^{-1}` above this produces a run warning (not an error).
    pub smallness_warn: f64,
}

impl Schedule {
    pub fn new(
        n0: usize,
        max_steps: usize,
        tau: f64,
        gamma: f64,
        lie: LieParams,
        diameter: f64,
    ) -> Self {
        assert!(n0 >= 2);
        let mut n_values = Vec::with_capacity(max_steps);
        let mut clipped = false;
        let mut prev_raw = 0.0;
        for n in 0..max_steps {
            let raw = (n0 as f64).powf(1.5f64.powi(n as i32)).ceil();
            assert!(raw > prev_raw, "cutoff schedule must increase");
            prev_raw = raw;
            if raw > diameter {
                clipped = true;
                n_values.push(diameter);
            } else {
                n_values.push(raw);
            }
        }
        Schedule {
            n0,
            max_steps,
            tau,
            beta: 6.0 * tau + 5.0,
            gamma,
            lie,
            n_values,
            clipped,
            accept_residual_rel: 1e-8,
            smallness_warn: 0.5,
        }
    }
}

/// Uniform parameter grid on `[1/2, 3/2]`.
pub fn lambda_grid(count: usize) -> Vec<f64> {
    assert!(count >= 2);
    (0..count)
        .map(|k| 0.5 + k as f64 / (count - 1) as f64)
        .collect()
}

/// Why a parameter was not accepted.
#[derive(Debug, Clone)]
pub enum Rejection {
    Screen { step: usize, witness: DivisorWitness },
    Abort { step: usize, reason: String },
    Residual { final_rel: f64 },
}

/// Everything recorded for one parameter value.
#[derive(Debug, Clone)]
pub struct LambdaOutcome {
    pub lambda: f64,
    pub accepted: bool,
    pub rejection: Option<Rejection>,
    pub steps_done: usize,
    /// `|R_n|_{s₀}` for `n = 0..=steps_done`.
    pub residuals_s0: Vec<f64>,
    pub residuals_shigh: Vec<f64>,
    /// Corrections `r^{(n)}_m` per completed step (row `n`, column `m`).
    pub r_table: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Eigenvalues after the last completed step (the carried value for
    /// rejected parameters).
    pub mu_final: Vec<f64>,
    pub r_final: Vec<f64>,
    /// Accumulated truncation budget at `s₀` across steps.
    pub budget_s0: f64,
    pub imag_residue: f64,
}

/// A composed change of variables with bookkeeping.
#[derive(Debug, Clone)]
pub struct TransformChain {
    pub generators: Vec<ToeplitzOp>,
    pub psi: ToeplitzOp,
    pub psi_inv: ToeplitzOp,
    /// `|Ψ_k - Ψ_{k-1}|_{s₀}` per composition step (the first entry is
    /// `|Ψ₀ - Id|_{s₀}`).
    pub increments_s0: Vec<f64>,
    /// Truncation/series budget accumulated at `(s₀, s_high)`.
    pub budget: [f64; 2],
}

/// Which parameters retain their transform chains.
#[derive(Debug, Clone, PartialEq)]
pub enum KeepTransforms {
    None,
    FirstAccepted,
    Indices(Vec<usize>),
}

/// Result of a full reduction run.
#[derive(Debug, Clone)]
pub struct ReducibilityResult {
    pub group: GroupSpec,
    pub mass: f64,
    pub lambdas: Vec<f64>,
    pub outcomes: Vec<LambdaOutcome>,
    pub transforms: BTreeMap<usize, TransformChain>,
    pub warnings: Vec<String>,
    pub schedule: Schedule,
    pub initial_residual_s0: f64,
}

impl ReducibilityResult {
    pub fn accepted_indices(&self) -> Vec<usize> {
        (0..self.outcomes.len())
            .filter(|&i| self.outcomes[i].accepted)
            .collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted_indices().len() as f64 / self.outcomes.len().max(1) as f64
    }

    /// Eigenvalue family over the grid; rejected points carry their last
    /// completed values (the desk-scale Lipschitz extension).
    pub fn mu_family(&self) -> MuFamily {
        MuFamily {
            group: self.group,
            mass: self.mass,
            lambdas: self.lambdas.clone(),
            r: self.outcomes.iter().map(|o| o.r_final.clone()).collect(),
        }
    }
}

/// Piecewise-linear eigenvalue family `μ_m(λ)` over a parameter grid.
#[derive(Debug, Clone)]
pub struct MuFamily {
    pub group: GroupSpec,
    pub mass: f64,
    pub lambdas: Vec<f64>,
    /// Corrections per grid point, each of length `m_max + 1`.
    pub r: Vec<Vec<f64>>,
}

impl MuFamily {
    pub fn m_max(&self) -> usize {
        self.r[0].len() - 1
    }

    /// Unperturbed family (`r ≡ 0`) on a grid.
    pub fn unperturbed(group: GroupSpec, mass: f64, m_max: usize, lambdas: Vec<f64>) -> Self {
        let n = lambdas.len();
        MuFamily {
            group,
            mass,
            lambdas,
            r: vec![vec![0.0; m_max + 1]; n],
        }
    }

    /// Piecewise-linear interpolation of the corrections at `λ`.
    pub fn interp_r(&self, lambda: f64) -> Vec<f64> {
        let n = self.lambdas.len();
        if lambda <= self.lambdas[0] {
            return self.r[0].clone();
        }
        if lambda >= self.lambdas[n - 1] {
            return self.r[n - 1].clone();
        }
        let i = match self
            .lambdas
            .binary_search_by(|x| x.partial_cmp(&lambda).unwrap())
        {
            Ok(i) => return self.r[i].clone(),
            Err(i) => i,
        };
        let (x0, x1) = (self.lambdas[i - 1], self.lambdas[i]);
        let t = (lambda - x0) / (x1 - x0);
        self.r[i - 1]
            .iter()
            .zip(&self.r[i])
            .map(|(a, b)| a + t * (b - a))
            .collect()
    }

    /// Diagonal part at an interpolated parameter.
    pub fn diagonal_at(&self, lambda: f64) -> DiagonalPart {
        DiagonalPart::with_corrections(
            self.group,
            self.m_max(),
            self.mass,
            self.interp_r(lambda),
        )
    }
}

struct LambdaRun {
    outcome: LambdaOutcome,
    generators: Option<Vec<ToeplitzOp>>,
}

fn run_lambda(
    lambda: f64,
    d0: &DiagonalPart,
    r0: &ToeplitzOp,
    freq: &FrequencyDirection,
    sched: &Schedule,
    keep_generators: bool,
) -> LambdaRun {
    let mut d = d0.clone();
    let mut r = r0.clone();
    let initial = r.s_norm(sched.lie.s0);
    let mut outcome = LambdaOutcome {
        lambda,
        accepted: false,
        rejection: None,
        steps_done: 0,
        residuals_s0: vec![initial],
        residuals_shigh: vec![r.s_norm(sched.lie.s_high)],
        r_table: vec![d.r_vec().to_vec()],
        diagnostics: Vec::new(),
        mu_final: d.mu_vec(),
        r_final: d.r_vec().to_vec(),
        budget_s0: 0.0,
        imag_residue: 0.0,
    };
    let mut generators = keep_generators.then(Vec::new);
    for n in 0..sched.max_steps {
        let n_cut = sched.n_values[n];
        match kam_single_step(
            &d, &r, freq, lambda, sched.gamma, sched.tau, n_cut, &sched.lie,
        ) {
            Ok(StepOutcome::Advanced {
                d_next,
                r_next,
                generator,
                diag,
            }) => {
                d = d_next;
                r = r_next;
                outcome.steps_done = n + 1;
                outcome.residuals_s0.push(diag.r_s0_after);
                outcome.residuals_shigh.push(diag.r_shigh_after);
                outcome.budget_s0 += diag.tail_s0;
                outcome.r_table.push(d.r_vec().to_vec());
                outcome.diagnostics.push(*diag);
                if let Some(gens) = &mut generators {
                    gens.push(generator);
                }
            }
            Ok(StepOutcome::ScreenFailed { witness }) => {
                outcome.rejection = Some(Rejection::Screen { step: n, witness });
                break;
            }
            Err(e) => {
                outcome.rejection = Some(Rejection::Abort {
                    step: n,
                    reason: e.to_string(),
                });
                break;
            }
        }
    }
    outcome.mu_final = d.mu_vec();
    outcome.r_final = d.r_vec().to_vec();
    outcome.imag_residue = d.imag_residue;
    if outcome.rejection.is_none() {
        let final_rel = if initial > 0.0 {
            outcome.residuals_s0.last().unwrap() / initial
        } else {
            0.0
        };
        if final_rel <= sched.accept_residual_rel {
            outcome.accepted = true;
        } else {
            outcome.rejection = Some(Rejection::Residual { final_rel });
        }
    }
    LambdaRun {
        outcome,
        generators,
    }
}

/// Runs the full iteration over a parameter grid.
pub fn iterate(
    model: &NlsModel,
    sched: &Schedule,
    lambdas: &[f64],
    keep: KeepTransforms,
) -> Result<ReducibilityResult> {
    let t = build_t(model)?;
    let r0 = t.scale(C64::new(0.0, -model.eps));
    let d0 = build_diagonal(model);
    let mut warnings = Vec::new();
    if sched.gamma > 0.0 && model.eps / sched.gamma > sched.smallness_warn {
        warnings.push(format!(
            "smallness exceeded: eps/gamma = {:.3e} > {:.3e}; run proceeds and reports divergence",
            model.eps / sched.gamma,
            sched.smallness_warn
        ));
    }
    if sched.clipped {
        warnings.push(format!(
            "cutoff schedule clipped to lattice diameter {}",
            sched.n_values.last().unwrap()
        ));
    }
    let runs: Vec<LambdaOutcome> = lambdas
        .par_iter()
        .map(|&lambda| run_lambda(lambda, &d0, &r0, &model.freq, sched, false).outcome)
        .collect();

    let keep_indices: Vec<usize> = match &keep {
        KeepTransforms::None => Vec::new(),
        KeepTransforms::FirstAccepted => runs
            .iter()
            .position(|o| o.accepted)
            .map(|i| vec![i])
            .unwrap_or_default(),
        KeepTransforms::Indices(v) => v.clone(),
    };
    let mut transforms = BTreeMap::new();
    for idx in keep_indices {
        let rerun = run_lambda(lambdas[idx], &d0, &r0, &model.freq, sched, true);
        if let Some(gens) = rerun.generators {
            transforms.insert(
                idx,
                compose_transform(&gens, &sched.lie, model.group, model.d, model.trunc.m_max)?,
            );
        }
    }
    Ok(ReducibilityResult {
        group: model.group,
        mass: model.mass,
        lambdas: lambdas.to_vec(),
        outcomes: runs,
        transforms,
        warnings,
        schedule: sched.clone(),
        initial_residual_s0: r0.s_norm(sched.lie.s0),
    })
}

/// Composes the accumulated change of variables and its inverse; the empty
/// chain is the identity.
///
/// Each step conjugates by `e^{A_n}` on the left (`𝔏_{n+1} = e^{A_n} 𝔏_n
/// e^{-A_n}`), so the variable change satisfying `𝔏_final = Ψ^{-1} 𝔏₀ Ψ`
/// collects the inverse factors: `Ψ = e^{-A₀} ∘ e^{-A₁} ∘ … ∘ e^{-A_n}`.
pub fn compose_transform(
    generators: &[ToeplitzOp],
    lie: &LieParams,
    group: GroupSpec,
    dim: usize,
    m_max: usize,
) -> Result<TransformChain> {
    let s_pair = [lie.s0, lie.s_high];
    let exp_tol = 1e-16;
    let mut budget = [0.0f64; 2];
    let mut increments = Vec::new();
    let mut psi = ToeplitzOp::identity(group, dim, m_max);
    let mut psi_inv = psi.clone();
    for a in generators {
        let (e_minus, drops) = a
            .scale(C64::new(-1.0, 0.0))
            .exp_series(exp_tol, lie.h_cap, &s_pair)?;
        let (e_plus, drops_inv) = a.exp_series(exp_tol, lie.h_cap, &s_pair)?;
        budget[0] += drops[0] + drops_inv[0];
        budget[1] += drops[1] + drops_inv[1];
        let (next, d1) = psi.compose_filtered(&e_minus, lie.h_cap, 0.0, &s_pair);
        let (next_inv, d2) = e_plus.compose_filtered(&psi_inv, lie.h_cap, 0.0, &s_pair);
        budget[0] += d1[0] + d2[0];
        budget[1] += d1[1] + d2[1];
        increments.push(next.sub(&psi).s_norm(lie.s0));
        psi = next;
        psi_inv = next_inv;
    }
    Ok(TransformChain {
        generators: generators.to_vec(),
        psi,
        psi_inv,
        increments_s0: increments,
        budget,
    })
}

/// Limit eigenvalues with their convergence certificate.
#[derive(Debug, Clone)]
pub struct LimitEigenvalues {
    pub mu_inf: Vec<f64>,
    pub r_inf: Vec<f64>,
    /// `max_m |μ^{(n)} - μ^{(n-1)}|` per step.
    pub certificate: Vec<f64>,
    pub converged: bool,
    pub imag_residue: f64,
}

/// Extracts the limit eigenvalues from a per-λ outcome; the certificate must
/// decrease (and the reality residue stay below 1e-12) or the parameter is
/// flagged non-converged.
pub fn limit_eigenvalues(outcome: &LambdaOutcome) -> LimitEigenvalues {
    assert!(
        outcome.r_table.len() >= 2,
        "need at least two completed steps"
    );
    let mut certificate = Vec::new();
    for n in 1..outcome.r_table.len() {
        let d: f64 = outcome.r_table[n]
            .iter()
            .zip(&outcome.r_table[n - 1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        certificate.push(d);
    }
    let converged = certificate.windows(2).all(|w| w[1] <= w[0] || w[1] == 0.0)
        && outcome.imag_residue <= 1e-12;
    LimitEigenvalues {
        mu_inf: outcome.mu_final.clone(),
        r_inf: outcome.r_final.clone(),
        certificate,
        converged,
        imag_residue: outcome.imag_residue,
    }
}

/// Töplitz diagonal `i𝔞μ_m` at shift zero.
pub fn diag_toeplitz(d: &DiagonalPart, dim: usize) -> ToeplitzOp {
    let mut op = ToeplitzOp::zero(d.group, dim, d.m_max);
    let h0 = vec![0i64; dim];
    for m in 0..=d.m_max {
        op.set_entry(&h0, m, 1, m, 1, C64::new(0.0, d.mu(m)));
        op.set_entry(&h0, m, -1, m, -1, C64::new(0.0, -d.mu(m)));
    }
    op
}

/// Transport term of a conjugation: the shift-`h` block of `Ψ` picks up the
/// factor `iλω̃·h`.
pub fn derivative_op(psi: &ToeplitzOp, freq: &FrequencyDirection, lambda: f64) -> ToeplitzOp {
    let mut out = ToeplitzOp::zero(psi.group, psi.d, psi.m_max);
    for (hk, blk) in psi.shifts() {
        let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
        let factor = C64::new(0.0, lambda * freq.dot(&h));
        if factor == C64::new(0.0, 0.0) {
            continue;
        }
        out.add_block(&h, &blk.mapv(|z| z * factor), psi.band);
    }
    out
}

/// Residual report of the final reduction `Ψ^{-1}∘(D₀+R₀)∘Ψ - D_∞`.
#[derive(Debug, Clone)]
pub struct ReductionResidual {
    pub absolute_s0: f64,
    /// Relative to the initial perturbation `|R₀|_{s₀}`.
    pub relative: f64,
    /// Truncation/series allowance the residual is compared against.
    pub budget: f64,
    pub passed: bool,
}

/// Conjugates the initial operator by the composed transform and measures
/// the distance to the limit diagonal on the Töplitz truncation.
pub fn verify_reduction(
    model: &NlsModel,
    chain: &TransformChain,
    outcome: &LambdaOutcome,
    sched: &Schedule,
) -> Result<ReductionResidual> {
    let t = build_t(model)?;
    let r0 = t.scale(C64::new(0.0, -model.eps));
    let d0 = build_diagonal(model);
    let lambda = outcome.lambda;
    let s0 = sched.lie.s0;
    let h_cap = sched.lie.h_cap;
    let x = diag_toeplitz(&d0, model.d).add(&r0);
    let s_pair = [s0, sched.lie.s_high];
    let mut budget = chain.budget[0] + outcome.budget_s0;
    let (xpsi, d1) = x.compose_filtered(&chain.psi, h_cap, 0.0, &s_pair);
    let (conj, d2) = chain.psi_inv.compose_filtered(&xpsi, h_cap, 0.0, &s_pair);
    let dpsi = derivative_op(&chain.psi, &model.freq, lambda);
    let (transport, d3) = chain.psi_inv.compose_filtered(&dpsi, h_cap, 0.0, &s_pair);
    budget += d1[0] + d2[0] + d3[0];
    let d_inf = DiagonalPart::with_corrections(
        model.group,
        model.trunc.m_max,
        model.mass,
        outcome.r_final.clone(),
    );
    let residual_op = conj.add(&transport).sub(&diag_toeplitz(&d_inf, model.d));
    let absolute = residual_op.s_norm(s0);
    let initial = r0.s_norm(s0).max(1e-300);
    // what the chain cannot remove: the final remainder plus every logged drop
    let final_r = *outcome.residuals_s0.last().unwrap();
    let allowance = 4.0 * (final_r + budget) + 1e-12 * x.s_norm(s0);
    Ok(ReductionResidual {
        absolute_s0: absolute,
        relative: absolute / initial,
        budget: allowance,
        passed: absolute <= allowance,
    })
}
