//! Töplitz-in-time block operators, the `s`-decay norm, smoothing
//! projectors and Lipschitz parameter families.
//!
//! A lattice operator `T` acting on sequences over `ℤ^d × Λ₊ × {±}` is
//! Töplitz in time when its entries depend on `(l, l')` only through the
//! shift `h = l - l'`. We store exactly that: a map from `h` to a complex
//! block over `(m, sign) × (m', sign')`, with `sign` laid out block-major
//! (`p = sign·(m_max+1) + m`). All label bands are tracked so block products
//! only touch the populated bands.

use ndarray::Array2;
use std::collections::BTreeMap;

use crate::lattice::{linf, shift_distance, GroupSpec};
use crate::{C64, Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Spectral norm of the 2×2 complex matrix `[[a, b], [c, d]]`.
pub fn two_by_two_norm(a: C64, b: C64, c: C64, d: C64) -> f64 {
    let f = a.norm_sqr() + b.norm_sqr() + c.norm_sqr() + d.norm_sqr();
    let det = (a * d - b * c).norm_sqr();
    let disc = (f * f - 4.0 * det).max(0.0);
    (0.5 * (f + disc.sqrt())).sqrt()
}

/// Sign index: `+1 ↦ 0`, `-1 ↦ 1`.
pub fn sign_index(a: i8) -> usize {
    if a == 1 {
        0
    } else {
        1
    }
}

pub const SIGNS: [i8; 2] = [1, -1];

/// A Töplitz-in-time block operator on the truncated lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzOp {
    pub group: GroupSpec,
    /// Number of time frequencies `d`.
    pub d: usize,
    /// Label truncation: labels run over `0..=m_max`.
    pub m_max: usize,
    /// Bound on `|m - m'|` over all nonzero entries.
    pub band: usize,
    shifts: BTreeMap<Vec<i16>, Array2<C64>>,
}

impl ToeplitzOp {
    pub fn zero(group: GroupSpec, d: usize, m_max: usize) -> Self {
        ToeplitzOp {
            group,
            d,
            m_max,
            band: 0,
            shifts: BTreeMap::new(),
        }
    }

    pub fn identity(group: GroupSpec, d: usize, m_max: usize) -> Self {
        let mut op = Self::zero(group, d, m_max);
        let p = op.pdim();
        let mut blk = Array2::zeros((p, p));
        for i in 0..p {
            blk[[i, i]] = C64::new(1.0, 0.0);
        }
        op.shifts.insert(vec![0; d], blk);
        op
    }

    /// Labels per sign block.
    pub fn mlen(&self) -> usize {
        self.m_max + 1
    }

    /// Phase-space dimension `2(m_max+1)`.
    pub fn pdim(&self) -> usize {
        2 * self.mlen()
    }

    pub fn pidx(&self, m: usize, a: i8) -> usize {
        sign_index(a) * self.mlen() + m
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.group == other.group && self.d == other.d && self.m_max == other.m_max
    }

    pub fn shifts(&self) -> impl Iterator<Item = (&Vec<i16>, &Array2<C64>)> {
        self.shifts.iter()
    }

    pub fn num_shifts(&self) -> usize {
        self.shifts.len()
    }

    pub fn block(&self, h: &[i64]) -> Option<&Array2<C64>> {
        let key: Vec<i16> = h.iter().map(|&x| x as i16).collect();
        self.shifts.get(&key)
    }

    /// Largest `|h|_∞` over stored shifts.
    pub fn shift_radius(&self) -> i64 {
        self.shifts
            .keys()
            .map(|h| h.iter().map(|&x| (x as i64).abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    pub fn entry(&self, h: &[i64], m: usize, a: i8, m2: usize, a2: i8) -> C64 {
        match self.block(h) {
            Some(blk) => blk[[self.pidx(m, a), self.pidx(m2, a2)]],
            None => ZERO,
        }
    }

    pub fn set_entry(&mut self, h: &[i64], m: usize, a: i8, m2: usize, a2: i8, z: C64) {
        assert!(m <= self.m_max && m2 <= self.m_max);
        assert_eq!(h.len(), self.d);
        let key: Vec<i16> = h.iter().map(|&x| x as i16).collect();
        let p = self.pdim();
        let (row, col) = (self.pidx(m, a), self.pidx(m2, a2));
        let blk = self
            .shifts
            .entry(key)
            .or_insert_with(|| Array2::zeros((p, p)));
        blk[[row, col]] = z;
        if z != ZERO {
            self.band = self.band.max(m.abs_diff(m2));
        }
    }

    /// Inserts a whole shift block (adding to any existing one) and widens
    /// the band bound accordingly.
    pub fn add_block(&mut self, h: &[i64], blk: &Array2<C64>, block_band: usize) {
        assert_eq!(h.len(), self.d);
        assert_eq!(blk.nrows(), self.pdim());
        let key: Vec<i16> = h.iter().map(|&x| x as i16).collect();
        let p = self.pdim();
        let dst = self
            .shifts
            .entry(key)
            .or_insert_with(|| Array2::zeros((p, p)));
        *dst += blk;
        self.band = self.band.min(self.m_max).max(block_band.min(self.m_max));
    }

    pub fn scale(&self, z: C64) -> Self {
        let mut out = self.clone();
        for blk in out.shifts.values_mut() {
            blk.mapv_inplace(|v| v * z);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert!(self.same_shape(other));
        let mut out = self.clone();
        out.band = out.band.max(other.band);
        for (h, blk) in &other.shifts {
            let p = out.pdim();
            let dst = out
                .shifts
                .entry(h.clone())
                .or_insert_with(|| Array2::zeros((p, p)));
            *dst += blk;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Lattice adjoint: `(M*)[h] = conj(M[-h])ᵀ`.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.group, self.d, self.m_max);
        out.band = self.band;
        for (h, blk) in &self.shifts {
            let neg: Vec<i16> = h.iter().map(|&x| -x).collect();
            let p = blk.nrows();
            let conj_t = Array2::from_shape_fn((p, p), |(i, j)| blk[[j, i]].conj());
            out.shifts.insert(neg, conj_t);
        }
        out
    }

    /// Drops blocks that are exactly zero.
    pub fn prune_zero_blocks(&mut self) {
        self.shifts.retain(|_, blk| blk.iter().any(|z| *z != ZERO));
    }

    /// Diagonal of the zero-shift block, indexed by `p = sign·mlen + m`.
    pub fn diag_vector(&self) -> Vec<C64> {
        let p = self.pdim();
        match self.block(&vec![0i64; self.d]) {
            Some(blk) => (0..p).map(|i| blk[[i, i]]).collect(),
            None => vec![ZERO; p],
        }
    }

    /// The operator `diag(M)`: only the zero-shift diagonal survives.
    pub fn diag_op(&self) -> Self {
        let mut out = Self::zero(self.group, self.d, self.m_max);
        let dv = self.diag_vector();
        let p = self.pdim();
        let mut blk = Array2::zeros((p, p));
        let mut any = false;
        for (i, z) in dv.iter().enumerate() {
            blk[[i, i]] = *z;
            any |= *z != ZERO;
        }
        if any {
            out.shifts.insert(vec![0; self.d], blk);
        }
        out
    }

    /// Frobenius norm per shift block, keyed like `shifts`.
    pub fn frob_by_shift(&self) -> BTreeMap<Vec<i16>, f64> {
        self.shifts
            .iter()
            .map(|(h, blk)| {
                (
                    h.clone(),
                    blk.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
                )
            })
            .collect()
    }

    /// Largest entry magnitude.
    pub fn sup_entry(&self) -> f64 {
        self.shifts
            .values()
            .flat_map(|blk| blk.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    /// Block profile `[M(i)]` at `i = (h, Δm)`: the sup over labels of the
    /// spectral norm of the 2×2 sign block along that diagonal.
    pub fn block_profile(&self, h: &[i64], dm: i64) -> f64 {
        match self.block(h) {
            Some(blk) => self.profile_of_block(blk, dm),
            None => 0.0,
        }
    }

    fn profile_of_block(&self, blk: &Array2<C64>, dm: i64) -> f64 {
        let mlen = self.mlen();
        let mut best = 0.0f64;
        for m in 0..mlen {
            let m2 = m as i64 - dm;
            if m2 < 0 || m2 >= mlen as i64 {
                continue;
            }
            let m2 = m2 as usize;
            let n = two_by_two_norm(
                blk[[m, m2]],
                blk[[m, mlen + m2]],
                blk[[mlen + m, m2]],
                blk[[mlen + m, mlen + m2]],
            );
            if n > best {
                best = n;
            }
        }
        best
    }

    /// `|i|` of a profile index.
    pub fn index_modulus(&self, h: &[i64], dm: i64) -> f64 {
        (linf(h) as f64).max(dm.unsigned_abs() as f64 * self.group.label_step)
    }

    /// The `s`-decay norm: `sqrt(Σ_i [M(i)]² ⟨i⟩^{2s})`.
    pub fn s_norm(&self, s: f64) -> f64 {
        let mut total = 0.0f64;
        let band = self.band.min(self.m_max) as i64;
        for (hk, blk) in &self.shifts {
            let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
            let hmod = linf(&h) as f64;
            for dm in -band..=band {
                let prof = self.profile_of_block(blk, dm);
                if prof == 0.0 {
                    continue;
                }
                let im = hmod.max(dm.unsigned_abs() as f64 * self.group.label_step);
                let bracket = im.max(1.0);
                total += prof * prof * bracket.powf(2.0 * s);
            }
        }
        total.sqrt()
    }

    /// Splits into `(Π_N M, Π_N^⊥ M)` by site distance.
    pub fn smooth_project(&self, n: f64) -> (Self, Self) {
        assert!(n > 0.0);
        let mut kept = Self::zero(self.group, self.d, self.m_max);
        let mut tail = Self::zero(self.group, self.d, self.m_max);
        kept.band = self.band;
        tail.band = self.band;
        let mlen = self.mlen();
        for (hk, blk) in &self.shifts {
            let h: Vec<i64> = hk.iter().map(|&x| x as i64).collect();
            let p = self.pdim();
            let mut bk = Array2::zeros((p, p));
            let mut bt = Array2::zeros((p, p));
            let mut any_k = false;
            let mut any_t = false;
            for m in 0..mlen {
                for a in SIGNS {
                    for m2 in 0..mlen {
                        for a2 in SIGNS {
                            let z = blk[[self.pidx(m, a), self.pidx(m2, a2)]];
                            if z == ZERO {
                                continue;
                            }
                            let dist = shift_distance(&h, m, a, m2, a2, &self.group);
                            if dist <= n {
                                bk[[self.pidx(m, a), self.pidx(m2, a2)]] = z;
                                any_k = true;
                            } else {
                                bt[[self.pidx(m, a), self.pidx(m2, a2)]] = z;
                                any_t = true;
                            }
                        }
                    }
                }
            }
            if any_k {
                kept.shifts.insert(hk.clone(), bk);
            }
            if any_t {
                tail.shifts.insert(hk.clone(), bt);
            }
        }
        (kept, tail)
    }

    /// Phase-space slice `T(φ) = Σ_h T[h] e^{i h·φ}`.
    pub fn phase_space_slice(&self, phi: &[f64]) -> Array2<C64> {
        assert_eq!(phi.len(), self.d);
        let p = self.pdim();
        let mut out = Array2::zeros((p, p));
        for (hk, blk) in &self.shifts {
            let arg: f64 = hk
                .iter()
                .zip(phi)
                .map(|(&hi, &ph)| hi as f64 * ph)
                .sum();
            let phase = C64::from_polar(1.0, arg);
            out.zip_mut_with(blk, |o, &b| *o += b * phase);
        }
        out
    }

    /// Shift-convolution product, exact: `out[h] = Σ_{h₁+h₂=h} A[h₁]·B[h₂]`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::Mismatch(
                "compose requires matching group/d/m_max".into(),
            ));
        }
        Ok(self.compose_filtered(other, i64::MAX, 0.0, &[]).0)
    }

    /// Shift-convolution with an explicit truncation policy: products whose
    /// target shift exceeds `h_cap`, or whose Frobenius bound falls below
    /// `pair_floor`, are skipped; upper bounds on the skipped `s`-norm mass
    /// at each requested `s` are returned alongside.
    pub fn compose_filtered(
        &self,
        other: &Self,
        h_cap: i64,
        pair_floor: f64,
        s_values: &[f64],
    ) -> (Self, Vec<f64>) {
        assert!(self.same_shape(other));
        let mut out = Self::zero(self.group, self.d, self.m_max);
        out.band = (self.band + other.band).min(self.m_max);
        let mut dropped = vec![0.0f64; s_values.len()];
        let na = self.frob_by_shift();
        let nb = other.frob_by_shift();
        let p = self.pdim();
        let reach = (out.band as f64) * self.group.label_step;
        for (h1, blk_a) in &self.shifts {
            let fa = na[h1];
            if fa == 0.0 {
                continue;
            }
            for (h2, blk_b) in &other.shifts {
                let fb = nb[h2];
                if fb == 0.0 {
                    continue;
                }
                let target: Vec<i16> = h1.iter().zip(h2).map(|(&a, &b)| a + b).collect();
                let tmod = target.iter().map(|&x| (x as i64).abs()).max().unwrap_or(0);
                let skip = tmod > h_cap || fa * fb < pair_floor;
                if skip {
                    let im = (tmod as f64).max(reach).max(1.0);
                    for (k, &s) in s_values.iter().enumerate() {
                        dropped[k] += fa * fb * im.powf(s);
                    }
                    continue;
                }
                let dst = out
                    .shifts
                    .entry(target)
                    .or_insert_with(|| Array2::zeros((p, p)));
                mul_banded_into(
                    blk_a,
                    self.band,
                    blk_b,
                    other.band,
                    self.mlen(),
                    dst,
                );
            }
        }
        out.prune_zero_blocks();
        (out, dropped)
    }

    /// Commutator `[self, other]`, exact.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(self.compose(other)?.sub(&other.compose(self)?))
    }

    /// Exponential `e^M` by the Taylor series, with the compose truncation
    /// policy applied termwise. Returns the series together with dropped-mass
    /// bounds at the requested `s` values (remainder estimate included).
    pub fn exp_series(
        &self,
        tol: f64,
        h_cap: i64,
        s_values: &[f64],
    ) -> Result<(Self, Vec<f64>)> {
        let mut out = Self::identity(self.group, self.d, self.m_max);
        let mut term = out.clone();
        let mut dropped = vec![0.0f64; s_values.len()];
        let a_s0 = self.s_norm(s_values.first().copied().unwrap_or(0.0));
        for k in 1..=60 {
            let (next, drop) = term.compose_filtered(self, h_cap, tol * 1e-3, s_values);
            term = next.scale(C64::new(1.0 / k as f64, 0.0));
            for (acc, d) in dropped.iter_mut().zip(&drop) {
                *acc += d / k as f64;
            }
            out = out.add(&term);
            let t_norm = term.s_norm(s_values.first().copied().unwrap_or(0.0));
            if t_norm < tol {
                // first-omitted-term remainder estimate, all requested s
                for (k_s, &s) in s_values.iter().enumerate() {
                    dropped[k_s] += 2.0 * term.s_norm(s) * a_s0.min(1.0);
                }
                return Ok((out, dropped));
            }
        }
        Err(Error::SeriesAbort {
            reason: format!("exp series did not reach tol {tol:.3e} in 60 terms"),
        })
    }
}

/// Banded block product accumulated into `dst += a · b`.
///
/// Both factors are `2·mlen` square with sign-major layout; entries with
/// `|m - m'|` beyond the stated bands are known to vanish.
pub fn mul_banded_into(
    a: &Array2<C64>,
    band_a: usize,
    b: &Array2<C64>,
    band_b: usize,
    mlen: usize,
    dst: &mut Array2<C64>,
) {
    let p = 2 * mlen;
    debug_assert_eq!(a.nrows(), p);
    debug_assert_eq!(b.nrows(), p);
    let asl = a.as_slice().expect("standard layout");
    let bsl = b.as_slice().expect("standard layout");
    let dsl = dst.as_slice_mut().expect("standard layout");
    let ba = band_a.min(mlen - 1);
    let bb = band_b.min(mlen - 1);
    for sa in 0..2 {
        for ma in 0..mlen {
            let row = sa * mlen + ma;
            let out_row = &mut dsl[row * p..(row + 1) * p];
            for sk in 0..2 {
                let k_lo = ma.saturating_sub(ba);
                let k_hi = (ma + ba).min(mlen - 1);
                for mk in k_lo..=k_hi {
                    let k = sk * mlen + mk;
                    let coeff = asl[row * p + k];
                    if coeff == ZERO {
                        continue;
                    }
                    let b_row = &bsl[k * p..(k + 1) * p];
                    let j_lo = mk.saturating_sub(bb);
                    let j_hi = (mk + bb).min(mlen - 1);
                    for sq in 0..2 {
                        let off = sq * mlen;
                        for mq in j_lo..=j_hi {
                            out_row[off + mq] += coeff * b_row[off + mq];
                        }
                    }
                }
            }
        }
    }
}

/// Sobolev norm of a phase-space vector indexed like the operator blocks.
pub fn phase_norm_s(v: &[C64], g: &GroupSpec, m_max: usize, s: f64) -> f64 {
    let mlen = m_max + 1;
    assert_eq!(v.len(), 2 * mlen);
    let mut total = 0.0;
    for si in 0..2 {
        for m in 0..mlen {
            let w = (g.weight(m) + g.rho).powf(2.0 * s);
            total += w * v[si * mlen + m].norm_sqr();
        }
    }
    total.sqrt()
}

/// `s`-decay norm of a phase-space matrix (profile over label differences).
pub fn ps_s_norm(mat: &Array2<C64>, g: &GroupSpec, m_max: usize, s: f64) -> f64 {
    let mlen = m_max + 1;
    assert_eq!(mat.nrows(), 2 * mlen);
    let mut total = 0.0;
    for dm in -(m_max as i64)..=(m_max as i64) {
        let mut best = 0.0f64;
        for m in 0..mlen {
            let m2 = m as i64 - dm;
            if m2 < 0 || m2 >= mlen as i64 {
                continue;
            }
            let m2 = m2 as usize;
            let n = two_by_two_norm(
                mat[[m, m2]],
                mat[[m, mlen + m2]],
                mat[[mlen + m, m2]],
                mat[[mlen + m, mlen + m2]],
            );
            best = best.max(n);
        }
        if best > 0.0 {
            let im = (dm.unsigned_abs() as f64 * g.label_step).max(1.0);
            total += best * best * im.powf(2.0 * s);
        }
    }
    total.sqrt()
}

/// A family of operators sampled on a uniform parameter grid.
#[derive(Debug, Clone)]
pub struct OpFamily {
    pub lambdas: Vec<f64>,
    pub ops: Vec<ToeplitzOp>,
}

/// Result of the `|·|_{s,γ}` evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipNorm {
    pub sup: f64,
    pub lip: f64,
    pub value: f64,
    /// Set when the family has a single sample and the Lipschitz part is
    /// reported as zero.
    pub single_sample: bool,
}

impl OpFamily {
    pub fn new(lambdas: Vec<f64>, ops: Vec<ToeplitzOp>) -> Self {
        assert_eq!(lambdas.len(), ops.len());
        assert!(!lambdas.is_empty());
        OpFamily { lambdas, ops }
    }

    /// `|M|_{s,γ} = sup_λ |M(λ)|_s + γ · sup over adjacent pairs of
    /// `|M(λ₁)-M(λ₂)|_s / |λ₁-λ₂|`.
    pub fn lip_norm(&self, s: f64, gamma: f64) -> LipNorm {
        let sup = self
            .ops
            .iter()
            .map(|op| op.s_norm(s))
            .fold(0.0f64, f64::max);
        if self.ops.len() < 2 {
            return LipNorm {
                sup,
                lip: 0.0,
                value: sup,
                single_sample: true,
            };
        }
        let mut lip = 0.0f64;
        for i in 0..self.ops.len() - 1 {
            let step = (self.lambdas[i + 1] - self.lambdas[i]).abs();
            assert!(step > 0.0);
            let diff = self.ops[i + 1].sub(&self.ops[i]).s_norm(s);
            lip = lip.max(diff / step);
        }
        LipNorm {
            sup,
            lip,
            value: sup + gamma * lip,
            single_sample: false,
        }
    }
}
