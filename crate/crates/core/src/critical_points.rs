//! Critical couplings where a pair of periodic eigenvalues coalesces on the
//! real line and leaves it, and the reality scan over `V`.
//!
//! `find_critical(k)` follows the pair `(λ_{2k−3}(0), λ_{2k−2}(0))`. Both
//! members share a symmetry class (Neumann for even `k`, Dirichlet for odd
//! `k`), so the collision is tracked on the class matrix alone, where it is a
//! generic real-to-complex transition of two eigenvalues.

use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::bloch_bands::{bloch_seeds, is_real, periodic_spectrum};
use crate::error::{HillError, Result};
use crate::hill_core::{fundamental, PotentialForm, PotentialParams};
use crate::matrix_oracle::{truncation_order, BoundaryKind, TruncatedSystem};

pub const BRACKET_WIDTH: f64 = 1e-9;
pub const SCAN_SAMPLES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalPoint {
    pub k: usize,
    pub c_k: f64,
    pub v_k: f64,
    pub lambda_star: f64,
    /// `(c_lo, c_hi)`: the pair is real at `c_lo` and conjugate at `c_hi`.
    pub bracket: (f64, f64),
    /// `‖(F − 2, F')‖` at `(λ★, c_k)`.
    pub residual: f64,
    pub f_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CollisionGap {
    Real(f64),
    NonReal,
}

/// `λ_{2k}(0) − λ_{2k−1}(0)` while both are real.
pub fn collision_gap(params: &PotentialParams, k: usize) -> Result<CollisionGap> {
    if k == 0 {
        return Err(HillError::Domain("pair index starts at 1".into()));
    }
    let per = periodic_spectrum(params, 2 * k)?;
    let (a, b) = (per[2 * k - 2], per[2 * k - 1]);
    if is_real(a) && is_real(b) {
        Ok(CollisionGap::Real(b.re - a.re))
    } else {
        Ok(CollisionGap::NonReal)
    }
}

fn class_and_offset(k: usize) -> (BoundaryKind, usize) {
    let kind = if k % 2 == 0 { BoundaryKind::Neumann } else { BoundaryKind::Dirichlet };
    (kind, 2 * ((k - 2) / 2))
}

/// The tracked pair on the class matrix at coupling `c` and whether it is real.
fn pair_at(c: f64, k: usize) -> Result<(bool, C, C)> {
    let (kind, i0) = class_and_offset(k);
    let params = PotentialParams::from_c(c)?;
    let m = truncation_order(c, i0 + 2);
    let eigs = TruncatedSystem::boundary(&params, kind, m).eigenvalues()?;
    let (a, b) = (eigs[i0], eigs[i0 + 1]);
    let real = |z: C| z.im.abs() <= 1e-12 * z.norm().max(1.0);
    Ok((real(a) && real(b), a, b))
}

/// Doublings of the scan window tried after the initial range.
pub const MAX_WIDENINGS: usize = 4;

/// Critical point `c_k`, scanning `[max(0.1, k−1), 2k+2]` first and then
/// `[hi, 2·hi]` windows while the pair stays real. `c_k` grows faster than
/// linearly (`c_4 ≈ 16.5`), so the initial range only covers `k <= 3`.
pub fn find_critical(k: usize) -> Result<CriticalPoint> {
    if k < 2 {
        return Err(HillError::Domain(format!("critical points start at k = 2, got {k}")));
    }
    let mut lo = (k as f64 - 1.0).max(0.1);
    let mut hi = 2.0 * k as f64 + 2.0;
    let mut last = None;
    for _ in 0..=MAX_WIDENINGS {
        match find_critical_in(k, lo, hi, SCAN_SAMPLES) {
            Err(HillError::NotBracketed { .. }) if pair_at(hi, k)?.0 => {
                last = Some(HillError::NotBracketed { k, lo, hi });
                lo = hi;
                hi *= 2.0;
            }
            other => return other,
        }
    }
    Err(last.expect("loop ran at least once"))
}

/// Critical point `c_k` searched for in `[c_lo, c_hi]`.
pub fn find_critical_in(k: usize, c_lo: f64, c_hi: f64, samples: usize) -> Result<CriticalPoint> {
    if k < 2 {
        return Err(HillError::Domain(format!("critical points start at k = 2, got {k}")));
    }
    if !(c_lo > 0.0 && c_hi > c_lo) || samples < 2 {
        return Err(HillError::Domain(format!("bad scan range [{c_lo}, {c_hi}]")));
    }
    let cs: Vec<f64> = (0..samples).map(|i| c_lo + (c_hi - c_lo) * i as f64 / (samples - 1) as f64).collect();
    let real: Vec<bool> = cs.par_iter().map(|&c| pair_at(c, k).map(|p| p.0)).collect::<Result<_>>()?;
    let j = (0..samples - 1)
        .find(|&j| real[j] && !real[j + 1])
        .ok_or(HillError::NotBracketed { k, lo: c_lo, hi: c_hi })?;
    let (mut lo, mut hi) = (cs[j], cs[j + 1]);
    while hi - lo >= BRACKET_WIDTH / 2.0 {
        let mid = 0.5 * (lo + hi);
        if pair_at(mid, k)?.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, a, b) = pair_at(lo, k)?;
    let (lambda, c) = polish(0.5 * (a.re + b.re), 0.5 * (lo + hi))?;

    let params = PotentialParams::from_c(c)?;
    let d = fundamental(&params, C::new(lambda, 0.0), PotentialForm::Shifted)?;
    let residual = d.two_minus_f().re.hypot(d.f_prime.re);
    let f_second = second_lambda(lambda, c)?;
    if residual >= 1e-8 {
        return Err(HillError::NoConvergence { lambda: C::new(lambda, 0.0), residual });
    }
    if f_second.abs() <= 1e-6 {
        return Err(HillError::Degenerate(format!("F'' = {f_second:e} at the collision")));
    }
    Ok(CriticalPoint {
        k,
        c_k: c,
        v_k: 0.5 * (c * c + 1.0).sqrt(),
        lambda_star: lambda,
        bracket: (lo, hi),
        residual,
        f_second,
    })
}

/// `(F − 2, F')` at real `(λ, c)`; `F − 2` from the cancellation-free form.
fn system(lambda: f64, c: f64) -> Result<(f64, f64)> {
    let d = fundamental(&PotentialParams::from_c(c)?, C::new(lambda, 0.0), PotentialForm::Shifted)?;
    Ok((-d.two_minus_f().re, d.f_prime.re))
}

fn second_lambda(lambda: f64, c: f64) -> Result<f64> {
    let h = 1e-4 * lambda.abs().max(1.0);
    Ok((system(lambda + h, c)?.1 - system(lambda - h, c)?.1) / (2.0 * h))
}

/// Newton on `(F − 2, F') = 0` in `(λ, c)`.
fn polish(mut lambda: f64, mut c: f64) -> Result<(f64, f64)> {
    for _ in 0..30 {
        let (g1, g2) = system(lambda, c)?;
        let hl = 1e-4 * lambda.abs().max(1.0);
        let hc = 1e-5 * c.max(1.0);
        let (p_l, m_l) = (system(lambda + hl, c)?, system(lambda - hl, c)?);
        let (p_c, m_c) = (system(lambda, c + hc)?, system(lambda, c - hc)?);
        // rows: (∂λ, ∂c) of F − 2 and of F'
        let j11 = (p_l.0 - m_l.0) / (2.0 * hl);
        let j12 = (p_c.0 - m_c.0) / (2.0 * hc);
        let j21 = (p_l.1 - m_l.1) / (2.0 * hl);
        let j22 = (p_c.1 - m_c.1) / (2.0 * hc);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 {
            return Err(HillError::Degenerate("singular Jacobian at the collision".into()));
        }
        let dl = (g1 * j22 - g2 * j12) / det;
        let dc = (j11 * g2 - j21 * g1) / det;
        lambda -= dl;
        c -= dc;
        if dl.abs() <= 1e-14 * lambda.abs().max(1.0) && dc.abs() <= 1e-15 * c.max(1.0) {
            break;
        }
    }
    Ok((lambda, c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealityRow {
    pub v: f64,
    pub c: f64,
    /// `is_real(λ_n(0))` for `n = 1..=n_max`.
    pub periodic_real: Vec<bool>,
    pub real_periodic_count: usize,
    /// Whether band `n` has a real point on the sampled `t` grid.
    pub band_has_real: Vec<bool>,
    pub real_band_count: usize,
}

const SCAN_T_POINTS: usize = 33;

/// Reality of `λ_1(0), ..., λ_{n_max}(0)` and of bands `1..=n_max` across `V`.
pub fn reality_scan(v_grid: &[f64], n_max: usize) -> Result<Vec<RealityRow>> {
    v_grid
        .par_iter()
        .map(|&v| {
            let params = PotentialParams::from_v(v)?;
            let periodic_real: Vec<bool> = periodic_spectrum(&params, n_max)?.into_iter().map(is_real).collect();
            let mut band_has_real = vec![false; n_max];
            for i in 0..SCAN_T_POINTS {
                let t = i as f64 / (SCAN_T_POINTS - 1) as f64;
                for (flag, z) in band_has_real.iter_mut().zip(bloch_seeds(&params, t, n_max)?) {
                    *flag |= is_real(z);
                }
            }
            Ok(RealityRow {
                v,
                c: params.c,
                real_periodic_count: periodic_real.iter().filter(|&&r| r).count(),
                real_band_count: band_has_real.iter().filter(|&&r| r).count(),
                periodic_real,
                band_has_real,
            })
        })
        .collect()
}

/// True when, along increasing `V`, no periodic eigenvalue regains reality.
pub fn reality_loss_is_monotone(rows: &[RealityRow]) -> bool {
    let mut sorted: Vec<&RealityRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.v.total_cmp(&b.v));
    sorted.windows(2).all(|w| {
        w[0].periodic_real.iter().zip(&w[1].periodic_real).all(|(&before, &after)| before || !after)
    })
}
