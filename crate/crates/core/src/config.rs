//! Run configuration: a flat key-value TOML file, validated against the
//! constraint set of the reduction, with a content hash naming the run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::harmonics::CentralFunction;
use crate::kam_driver::{lambda_grid, Schedule};
use crate::kam_step::LieParams;
use crate::lattice::{
    diophantine_check, DiophantineOutcome, FrequencyDirection, GroupKind, GroupSpec,
};
use crate::linop::{ForcingSpec, NlsModel, PhiPolynomial, Truncation};
use crate::{C64, Error, Result};

/// Flat run configuration. Every knob has a default; the file only needs
/// the keys that differ.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupKind,
    pub dim: usize,
    /// Frequency direction (any scale; rescaled to `omega_l1`).
    pub omega_dir: Vec<f64>,
    /// Target `|ω̃|₁ ∈ (0, 1]`.
    pub omega_l1: f64,
    /// Range of the Diophantine certification scan.
    pub dioph_scan: i64,
    pub mass: f64,
    pub eps: f64,
    /// Melnikov constant; when absent it couples to ε as `ε^{1/S}` with
    /// `S = gamma_coupling_s`.
    pub gamma: Option<f64>,
    pub gamma_coupling_s: f64,
    /// Defaults to `dim + 3`.
    pub tau: Option<f64>,
    /// Defaults to `1 + dim/2`.
    pub s0: Option<f64>,
    /// Defaults to `s0 + 2`.
    pub s_high: Option<f64>,
    pub n0: usize,
    pub max_steps: usize,
    pub m_max: usize,
    pub l_max: i64,
    pub h_cap: i64,
    pub lambda_samples: usize,
    pub accept_residual_rel: f64,
    pub lie_tol_rel: f64,
    /// `linear_potential` or `cubic_at_profile`.
    pub forcing_mode: String,
    /// Rows `[h_1..h_d, label, re, im]`.
    pub potential: Vec<Vec<f64>>,
    /// Rows `[h_1..h_d, label, re, im]` for the prescribed profile.
    pub profile: Vec<Vec<f64>>,
    /// Overall profile amplitude δ.
    pub profile_scale: f64,
    pub sieve_gammas: Vec<f64>,
    pub sieve_l_max: i64,
    pub sieve_m_max: usize,
    pub sieve_lambda_samples: usize,
    /// Stability horizon `t_end = t_end_factor / eps`.
    pub t_end_factor: f64,
    /// Local integrator error per unit time.
    pub ode_tol: f64,
    /// Sobolev index for trajectory norms (besides s₀).
    pub stability_s: f64,
    pub seed: u64,
    pub output_dir: String,
    /// Reduce-run artifacts consumed by the stability/sieve commands.
    pub artifacts_from: Option<String>,
    /// `none` or `first_accepted`.
    pub keep_transforms: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            group: GroupKind::Su2,
            dim: 2,
            omega_dir: vec![1.0, 2f64.sqrt() - 1.0],
            omega_l1: 0.2,
            dioph_scan: 200,
            mass: 1.0,
            eps: 1e-3,
            gamma: Some(1e-2),
            gamma_coupling_s: 2.0,
            tau: None,
            s0: None,
            s_high: None,
            n0: 4,
            max_steps: 4,
            m_max: 24,
            l_max: 8,
            h_cap: 16,
            lambda_samples: 200,
            accept_residual_rel: 1e-8,
            lie_tol_rel: 1e-14,
            forcing_mode: "linear_potential".into(),
            potential: default_potential_rows(),
            profile: default_profile_rows(),
            profile_scale: 1.0,
            sieve_gammas: vec![1e-2, 3e-3, 1e-3],
            sieve_l_max: 8,
            sieve_m_max: 80,
            sieve_lambda_samples: 2000,
            t_end_factor: 100.0,
            ode_tol: 1e-10,
            stability_s: 4.0,
            seed: 42,
            output_dir: "runs".into(),
            artifacts_from: None,
            keep_transforms: "first_accepted".into(),
        }
    }
}

/// The default linear potential: a static central part plus three time
/// harmonics with the reality pairing.
fn default_potential_rows() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0, 0.0, 0.3, 0.0],
        vec![0.0, 0.0, 2.0, 0.15, 0.0],
        vec![1.0, 0.0, 1.0, 0.5, 0.0],
        vec![-1.0, 0.0, 1.0, 0.5, 0.0],
        vec![0.0, 1.0, 2.0, 0.25, -0.125],
        vec![0.0, -1.0, 2.0, 0.25, 0.125],
        vec![1.0, 1.0, 0.0, 0.0, 0.2],
        vec![-1.0, -1.0, 0.0, 0.0, -0.2],
    ]
}

/// The default prescribed profile for the cubic mode.
fn default_profile_rows() -> Vec<Vec<f64>> {
    vec![
        vec![1.0, 0.0, 1.0, 0.3, 0.1],
        vec![0.0, -1.0, 0.0, -0.2, 0.05],
    ]
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("TOML parse failed: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn tau_eff(&self) -> f64 {
        self.tau.unwrap_or(self.dim as f64 + 3.0)
    }

    pub fn s0_eff(&self) -> f64 {
        self.s0.unwrap_or(1.0 + self.dim as f64 / 2.0)
    }

    pub fn s_high_eff(&self) -> f64 {
        self.s_high.unwrap_or(self.s0_eff() + 2.0)
    }

    pub fn gamma_eff(&self) -> f64 {
        self.gamma
            .unwrap_or_else(|| self.eps.powf(1.0 / self.gamma_coupling_s))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim as f64;
        if self.omega_dir.len() != self.dim {
            return Err(Error::Config(format!(
                "omega_dir has {} entries, dim = {}",
                self.omega_dir.len(),
                self.dim
            )));
        }
        if self.tau_eff() <= d {
            return Err(Error::Config(format!(
                "tau = {} must exceed dim = {}",
                self.tau_eff(),
                self.dim
            )));
        }
        if self.s0_eff() <= (d + 1.0) / 2.0 {
            return Err(Error::Config(format!(
                "s0 = {} must exceed (dim+1)/2 = {}",
                self.s0_eff(),
                (d + 1.0) / 2.0
            )));
        }
        if self.mass <= 0.0 {
            return Err(Error::Config("mass must be positive".into()));
        }
        if self.eps < 0.0 {
            return Err(Error::Config("eps must be nonnegative".into()));
        }
        if self.n0 < 2 {
            return Err(Error::Config("n0 must be at least 2".into()));
        }
        if self.lambda_samples < 2 {
            return Err(Error::Config("lambda_samples must be at least 2".into()));
        }
        if !matches!(
            self.forcing_mode.as_str(),
            "linear_potential" | "cubic_at_profile"
        ) {
            return Err(Error::Config(format!(
                "unknown forcing_mode '{}'",
                self.forcing_mode
            )));
        }
        if !matches!(self.keep_transforms.as_str(), "none" | "first_accepted") {
            return Err(Error::Config(format!(
                "unknown keep_transforms '{}'",
                self.keep_transforms
            )));
        }
        for row in self.potential.iter().chain(&self.profile) {
            if row.len() != self.dim + 3 {
                return Err(Error::Config(format!(
                    "forcing row needs {} entries [h.., label, re, im], got {}",
                    self.dim + 3,
                    row.len()
                )));
            }
            for x in &row[..self.dim + 1] {
                if x.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "harmonic/label entries must be integers, got {x}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Validation for sieve runs: the measure estimate needs `τ > d + 2`.
    pub fn validate_for_sieve(&self) -> Result<()> {
        self.validate()?;
        if self.tau_eff() <= self.dim as f64 + 2.0 {
            return Err(Error::Config(format!(
                "sieve needs tau > dim + 2 (tau = {}, dim = {})",
                self.tau_eff(),
                self.dim
            )));
        }
        Ok(())
    }

    pub fn group_spec(&self) -> GroupSpec {
        GroupSpec::new(self.group)
    }

    /// Certified frequency direction; fails on rationally dependent input.
    pub fn frequency(&self) -> Result<FrequencyDirection> {
        let f = FrequencyDirection::from_direction(&self.omega_dir, self.omega_l1, self.dioph_scan)?;
        match diophantine_check(&f, self.dioph_scan) {
            DiophantineOutcome::Certified { .. } => Ok(f),
            DiophantineOutcome::Violated { l, value, bound } => Err(Error::Config(format!(
                "direction fails the Diophantine check at l = {l:?}: {value:.3e} < {bound:.3e}"
            ))),
        }
    }

    fn rows_to_poly(&self, rows: &[Vec<f64>], scale: f64) -> PhiPolynomial {
        let mut poly = PhiPolynomial::new();
        for row in rows {
            let h: Vec<i64> = row[..self.dim].iter().map(|&x| x as i64).collect();
            let label = row[self.dim] as usize;
            let z = C64::new(row[self.dim + 1], row[self.dim + 2]) * scale;
            let entry = poly.entry(h).or_default();
            *entry = entry.add(&CentralFunction::from_pairs(&[(label, z)]));
        }
        poly.retain(|_, c| !c.is_zero());
        poly
    }

    pub fn forcing(&self) -> ForcingSpec {
        match self.forcing_mode.as_str() {
            "linear_potential" => ForcingSpec::LinearPotential {
                potential: self.rows_to_poly(&self.potential, 1.0),
            },
            _ => ForcingSpec::CubicAtProfile {
                profile: self.rows_to_poly(&self.profile, self.profile_scale),
            },
        }
    }

    pub fn model(&self) -> Result<NlsModel> {
        let model = NlsModel {
            group: self.group_spec(),
            d: self.dim,
            freq: self.frequency()?,
            mass: self.mass,
            eps: self.eps,
            forcing: self.forcing(),
            trunc: Truncation {
                l_max: self.l_max,
                m_max: self.m_max,
                h_cap: self.h_cap,
            },
        };
        model.validate()?;
        Ok(model)
    }

    pub fn lie_params(&self) -> LieParams {
        LieParams {
            lie_tol_rel: self.lie_tol_rel,
            h_cap: self.h_cap,
            s0: self.s0_eff(),
            s_high: self.s_high_eff(),
        }
    }

    pub fn schedule(&self) -> Schedule {
        let mut sched = Schedule::new(
            self.n0,
            self.max_steps,
            self.tau_eff(),
            self.gamma_eff(),
            self.lie_params(),
            2.0 * self.l_max as f64,
        );
        sched.accept_residual_rel = self.accept_residual_rel;
        sched
    }

    pub fn lambdas(&self) -> Vec<f64> {
        lambda_grid(self.lambda_samples)
    }

    /// Canonical serialized form (field order fixed by the struct).
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// 12-hex-digit content hash of the canonical config plus the crate
    /// version; names the run directory.
    pub fn manifest_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_toml().as_bytes());
        hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
        let digest = hasher.finalize();
        digest[..6].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.validate_for_sieve().unwrap();
        let model = cfg.model().unwrap();
        assert_eq!(model.trunc.m_max, 24);
        assert_eq!(cfg.tau_eff(), 5.0);
        assert_eq!(cfg.s0_eff(), 2.0);
        assert_eq!(cfg.gamma_eff(), 1e-2);
    }

    #[test]
    fn gamma_couples_to_eps_when_unset() {
        let mut cfg = RunConfig::default();
        cfg.gamma = None;
        assert!((cfg.gamma_eff() - cfg.eps.sqrt()).abs() < 1e-15);
        cfg.eps = 0.0;
        assert_eq!(cfg.gamma_eff(), 0.0);
    }

    #[test]
    fn tau_at_dim_rejected() {
        let mut cfg = RunConfig::default();
        cfg.tau = Some(2.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tau_d_plus_one_rejected_for_sieve_only() {
        let mut cfg = RunConfig::default();
        cfg.tau = Some(3.0);
        assert!(cfg.validate().is_ok());
        assert!(cfg.validate_for_sieve().is_err());
    }

    #[test]
    fn toml_round_trip_and_hash_stability() {
        let cfg = RunConfig::default();
        let text = cfg.canonical_toml();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.canonical_toml(), text);
        assert_eq!(back.manifest_hash(), cfg.manifest_hash());
        assert_eq!(cfg.manifest_hash().len(), 12);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml_str("massive = 1.0");
        assert!(err.is_err());
    }

    #[test]
    fn bad_forcing_row_rejected() {
        let mut cfg = RunConfig::default();
        cfg.potential.push(vec![1.0, 0.0, 0.5, 1.0, 0.0]); // fractional label
        assert!(cfg.validate().is_err());
        let mut cfg2 = RunConfig::default();
        cfg2.potential.push(vec![1.0, 1.0, 0.0]);
        assert!(cfg2.validate().is_err());
    }

    #[test]
    fn default_direction_is_certified() {
        let cfg = RunConfig::default();
        let f = cfg.frequency().unwrap();
        assert!(f.omega_tilde.iter().map(|x| x.abs()).sum::<f64>() <= 1.0);
        assert!((f.omega_tilde.iter().map(|x| x.abs()).sum::<f64>() - 0.2).abs() < 1e-12);
    }
}
