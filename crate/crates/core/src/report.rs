//! Artifact emission: run directories named by the manifest hash, CSV
//! tables, and the bit-exact operator dump format.
//!
//! Floats destined for golden comparisons are encoded as the 16-hex-digit
//! IEEE-754 bit pattern; human-facing columns use the shortest round-trip
//! decimal. Nothing here writes wall-clock state, so reruns with the same
//! config are byte-identical.

use std::fmt::Write as FmtWrite;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::decay_norm::{ToeplitzOp, SIGNS};
use crate::kam_driver::{MuFamily, ReducibilityResult, Rejection, TransformChain};
use crate::lattice::GroupSpec;
use crate::melnikov_sieve::SieveReport;
use crate::stability::Trajectory;
use crate::{C64, Error, Result};

/// Exact hex encoding of an `f64` (IEEE-754 bits).
pub fn f64_to_hex(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

/// Inverse of [`f64_to_hex`].
pub fn f64_from_hex(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| Error::Artifact(format!("bad hex float '{s}': {e}")))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content)
        .map_err(|e| Error::Artifact(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))
}

/// Creates `output_dir/<hash>/`, writes the manifest, returns the path.
pub fn create_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let hash = cfg.manifest_hash();
    let dir = PathBuf::from(&cfg.output_dir).join(&hash);
    fs::create_dir_all(&dir)
        .map_err(|e| Error::Artifact(format!("cannot create {}: {e}", dir.display())))?;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "# manifest: {hash}");
    let _ = writeln!(manifest, "# engine-version: {}", env!("CARGO_PKG_VERSION"));
    manifest.push_str(&cfg.canonical_toml());
    write_file(&dir.join("manifest.toml"), &manifest)?;
    Ok(dir)
}

/// Reads the config back from a run directory's manifest.
pub fn load_manifest(dir: &Path) -> Result<RunConfig> {
    let text = read_file(&dir.join("manifest.toml"))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    RunConfig::from_toml_str(&body)
}

fn rejection_label(r: &Option<Rejection>) -> String {
    match r {
        None => "".into(),
        Some(Rejection::Screen { step, witness }) => {
            format!("screen@{step}:{witness}")
        }
        Some(Rejection::Abort { step, reason }) => format!("abort@{step}:{reason}"),
        Some(Rejection::Residual { final_rel }) => format!("residual:{final_rel:e}"),
    }
}

/// Per-λ acceptance table.
pub fn write_acceptance_csv(dir: &Path, hash: &str, res: &ReducibilityResult) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest: {hash}");
    let _ = writeln!(
        out,
        "index,lambda,accepted,steps,initial_s0,final_s0,max_abs_r_inf,rejection"
    );
    for (i, o) in res.outcomes.iter().enumerate() {
        let max_r = o.r_final.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},\"{}\"",
            i,
            o.lambda,
            o.accepted,
            o.steps_done,
            o.residuals_s0.first().unwrap(),
            o.residuals_s0.last().unwrap(),
            max_r,
            rejection_label(&o.rejection)
        );
    }
    write_file(&dir.join("acceptance.csv"), &out)
}

/// Per-step residual/diagnostic table.
pub fn write_residuals_csv(dir: &Path, hash: &str, res: &ReducibilityResult) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest: {hash}");
    let _ = writeln!(
        out,
        "index,lambda,step,n_cut,r_s0_before,r_s0_after,r_shigh_after,a_s0,min_divisor,\
         screened,tail_s0,hamiltonian_residual,series_terms,eigenvalue_shift"
    );
    for (i, o) in res.outcomes.iter().enumerate() {
        for d in &o.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                i,
                o.lambda,
                d.step,
                d.n_cut,
                d.r_s0_before,
                d.r_s0_after,
                d.r_shigh_after,
                d.a_s0,
                d.min_divisor,
                d.screened,
                d.tail_s0,
                d.hamiltonian_residual,
                d.series_terms,
                d.eigenvalue_shift
            );
        }
    }
    write_file(&dir.join("residuals.csv"), &out)
}

/// Final eigenvalue corrections, with exact bit columns for regression use.
pub fn write_eigenvalues_csv(dir: &Path, hash: &str, res: &ReducibilityResult) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest: {hash}");
    let _ = writeln!(
        out,
        "# group: {:?}, mass: {}, m_max: {}",
        res.group.kind,
        res.mass,
        res.outcomes[0].r_final.len() - 1
    );
    let _ = writeln!(out, "index,lambda,m,r_inf,mu_inf,r_inf_bits");
    for (i, o) in res.outcomes.iter().enumerate() {
        for (m, (&r, &mu)) in o.r_final.iter().zip(&o.mu_final).enumerate() {
            let _ = writeln!(out, "{},{},{},{},{},{}", i, o.lambda, m, r, mu, f64_to_hex(r));
        }
    }
    write_file(&dir.join("eigenvalues.csv"), &out)
}

/// Reloads the eigenvalue family (plus per-λ acceptance) from a run dir.
pub fn load_mu_family(dir: &Path) -> Result<(MuFamily, Vec<bool>)> {
    let cfg = load_manifest(dir)?;
    let group = GroupSpec::new(cfg.group);
    let text = read_file(&dir.join("eigenvalues.csv"))?;
    let mut lambdas: Vec<f64> = Vec::new();
    let mut r: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().skip(3) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 6 {
            continue;
        }
        let idx: usize = cols[0]
            .parse()
            .map_err(|e| Error::Artifact(format!("bad index: {e}")))?;
        let lambda: f64 = cols[1]
            .parse()
            .map_err(|e| Error::Artifact(format!("bad lambda: {e}")))?;
        let rv = f64_from_hex(cols[5])?;
        if idx == lambdas.len() {
            lambdas.push(lambda);
            r.push(Vec::new());
        }
        r[idx].push(rv);
    }
    if lambdas.is_empty() {
        return Err(Error::Artifact("eigenvalues.csv has no rows".into()));
    }
    let accept_text = read_file(&dir.join("acceptance.csv"))?;
    let mut accepted = vec![false; lambdas.len()];
    for line in accept_text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() >= 3 {
            if let Ok(idx) = cols[0].parse::<usize>() {
                accepted[idx] = cols[2] == "true";
            }
        }
    }
    Ok((
        MuFamily {
            group,
            mass: cfg.mass,
            lambdas,
            r,
        },
        accepted,
    ))
}

/// Bit-exact operator dump: one record per entry.
pub fn write_op(path: &Path, op: &ToeplitzOp) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# toeplitz-op v1");
    let _ = writeln!(
        out,
        "# group: {:?}, d: {}, m_max: {}, band: {}",
        op.group.kind, op.d, op.m_max, op.band
    );
    let _ = writeln!(out, "# columns: h[0..d] m a m2 a2 re_bits im_bits");
    for (hk, blk) in op.shifts() {
        for m in 0..=op.m_max {
            for a in SIGNS {
                for m2 in 0..=op.m_max {
                    for a2 in SIGNS {
                        let z = blk[[op.pidx(m, a), op.pidx(m2, a2)]];
                        if z == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let hs: Vec<String> = hk.iter().map(|x| x.to_string()).collect();
                        let _ = writeln!(
                            out,
                            "{} {} {} {} {} {} {}",
                            hs.join(" "),
                            m,
                            a,
                            m2,
                            a2,
                            f64_to_hex(z.re),
                            f64_to_hex(z.im)
                        );
                    }
                }
            }
        }
    }
    write_file(path, &out)
}

/// Reads an operator dump written by [`write_op`].
pub fn read_op(path: &Path, group: GroupSpec, d: usize, m_max: usize) -> Result<ToeplitzOp> {
    let text = read_file(path)?;
    let mut op = ToeplitzOp::zero(group, d, m_max);
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != d + 6 {
            return Err(Error::Artifact(format!(
                "operator record needs {} fields, got {}",
                d + 6,
                cols.len()
            )));
        }
        let h: Vec<i64> = cols[..d]
            .iter()
            .map(|s| s.parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Artifact(format!("bad shift: {e}")))?;
        let parse_us =
            |s: &str| -> Result<usize> { s.parse().map_err(|e| Error::Artifact(format!("{e}"))) };
        let parse_i8 =
            |s: &str| -> Result<i8> { s.parse().map_err(|e| Error::Artifact(format!("{e}"))) };
        let m = parse_us(cols[d])?;
        let a = parse_i8(cols[d + 1])?;
        let m2 = parse_us(cols[d + 2])?;
        let a2 = parse_i8(cols[d + 3])?;
        let re = f64_from_hex(cols[d + 4])?;
        let im = f64_from_hex(cols[d + 5])?;
        op.set_entry(&h, m, a, m2, a2, C64::new(re, im));
    }
    Ok(op)
}

/// Writes the kept transform chains (`psi`/`psi_inv` per index).
pub fn write_transforms(dir: &Path, res: &ReducibilityResult) -> Result<()> {
    for (idx, chain) in &res.transforms {
        write_op(&dir.join(format!("transform_{idx}_psi.ops")), &chain.psi)?;
        write_op(
            &dir.join(format!("transform_{idx}_psi_inv.ops")),
            &chain.psi_inv,
        )?;
    }
    Ok(())
}

/// Loads one transform chain back (generators and budgets are not part of
/// the dump; the chain carries only what the stability pipeline needs).
pub fn load_transform(
    dir: &Path,
    idx: usize,
    group: GroupSpec,
    d: usize,
    m_max: usize,
) -> Result<TransformChain> {
    let psi = read_op(&dir.join(format!("transform_{idx}_psi.ops")), group, d, m_max)?;
    let psi_inv = read_op(
        &dir.join(format!("transform_{idx}_psi_inv.ops")),
        group,
        d,
        m_max,
    )?;
    Ok(TransformChain {
        generators: Vec::new(),
        psi,
        psi_inv,
        increments_s0: Vec::new(),
        budget: [0.0, 0.0],
    })
}

/// Writes the reduction-residual table for the kept transforms.
pub fn write_reduction_residuals(
    dir: &Path,
    hash: &str,
    rows: &[(usize, f64, f64, f64, f64, bool)],
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest: {hash}");
    let _ = writeln!(out, "index,lambda,absolute_s0,relative,allowance,passed");
    for (idx, lambda, abs, rel, budget, passed) in rows {
        let _ = writeln!(out, "{idx},{lambda},{abs},{rel},{budget},{passed}");
    }
    write_file(&dir.join("reduction_residual.csv"), &out)
}

/// Reads the reduction-residual table.
pub fn load_reduction_residuals(dir: &Path) -> Result<Vec<(usize, f64, f64, f64, f64, bool)>> {
    let text = read_file(&dir.join("reduction_residual.csv"))?;
    let mut rows = Vec::new();
    for line in text.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            continue;
        }
        rows.push((
            cols[0]
                .parse()
                .map_err(|e| Error::Artifact(format!("{e}")))?,
            cols[1]
                .parse()
                .map_err(|e| Error::Artifact(format!("{e}")))?,
            cols[2]
                .parse()
                .map_err(|e| Error::Artifact(format!("{e}")))?,
            cols[3]
                .parse()
                .map_err(|e| Error::Artifact(format!("{e}")))?,
            cols[4]
                .parse()
                .map_err(|e| Error::Artifact(format!("{e}")))?,
            cols[5] == "true",
        ));
    }
    Ok(rows)
}

/// `(γ, fraction)` table plus pruning statistics.
pub fn write_sieve_csv(dir: &Path, hash: &str, report: &SieveReport) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest: {hash}");
    let _ = writeln!(
        out,
        "gamma,resonant_fraction,resonant_count,l_pruned,tuples_label_bound,\
         tuples_fanculo,tuples_direct,gap_bound,prune_violations"
    );
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.gamma,
            r.resonant_fraction,
            r.resonant_count,
            r.census.l_pruned,
            r.census.tuples_label_bound,
            r.census.tuples_fanculo,
            r.census.tuples_direct,
            r.census.gap_bound,
            r.stats.prune_violations
        );
    }
    write_file(&dir.join("sieve.csv"), &out)?;
    let mut plot = String::new();
    let _ = writeln!(plot, "# manifest: {hash}");
    let _ = writeln!(plot, "gamma,fraction");
    for r in &report.rows {
        let _ = writeln!(plot, "{},{}", r.gamma, r.resonant_fraction);
    }
    if let Some(slope) = report.slope {
        let _ = writeln!(plot, "# loglog_slope: {slope}");
    }
    if report.degenerate {
        let _ = writeln!(plot, "# degenerate: true");
    }
    write_file(&dir.join("gamma_fractions.csv"), &plot)
}

/// Trajectory norms `(t, ‖h‖_{s₀}, ‖h‖_s)` for plotting.
pub fn write_trajectory_csv(
    path: &Path,
    hash: &str,
    traj: &Trajectory,
    g: &GroupSpec,
    m_max: usize,
    s0: f64,
    s: f64,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest: {hash}");
    let _ = writeln!(out, "t,norm_s0,norm_s");
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let n0 = crate::decay_norm::phase_norm_s(state, g, m_max, s0);
        let ns = crate::decay_norm::phase_norm_s(state, g, m_max, s);
        let _ = writeln!(out, "{t},{n0},{ns}");
    }
    write_file(path, &out)
}

/// One pass/fail line per named check; used by the verify command.
pub fn render_check_lines(checks: &[(String, bool, String)]) -> String {
    let mut out = String::new();
    for (name, passed, detail) in checks {
        let tag = if *passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{tag}] {name}: {detail}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GroupKind;
    use crate::synth::{random_op, rng_from};

    #[test]
    fn hex_round_trip() {
        for x in [0.0, -0.0, 1.5, -3.7e-300, f64::MAX, 1e-3 + 1e-17] {
            assert_eq!(f64_from_hex(&f64_to_hex(x)).unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn op_dump_round_trip() {
        let g = GroupSpec::new(GroupKind::Su2);
        let mut rng = rng_from(77);
        let op = random_op(&mut rng, g, 2, 5, 2, 3, 1.0);
        let dir = std::env::temp_dir().join("kamred_test_opdump");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("op.ops");
        write_op(&path, &op).unwrap();
        let back = read_op(&path, g, 2, 5).unwrap();
        assert!(back.sub(&op).s_norm(0.0) == 0.0);
        // byte-identical on rewrite
        let first = std::fs::read(&path).unwrap();
        write_op(&path, &back).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
        std::fs::remove_dir_all(&dir).ok();
    }
}
