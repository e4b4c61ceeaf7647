//! Bloch eigenvalues `λ_n(t)`, the roots of `F(λ) = 2cos(πt)`, and the bands
//! they trace as `t` runs over `[0, 1]`.
//!
//! Numbering follows the spectral order of [`spectral_sort`]: by real part,
//! with conjugate pairs adjacent and the lower half-plane member first.

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::error::{HillError, Result};
use crate::boundary_spectra::odd_class_split;
use crate::hill_core::{
    discriminant, discriminant_second_derivative, fundamental, FundamentalData, PotentialForm, PotentialParams,
};
use crate::matrix_oracle::{converged, spectral_sort, truncation_order, TruncatedSystem};

/// Residual accepted for a Bloch eigenvalue.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// `|F'|` below which a root is treated as multiple.
pub const SINGULAR_TOL: f64 = 1e-8;
/// Attainable accuracy of `F`; two roots closer than `sqrt(2η/|F''|)`
/// cannot be told apart and are reported as a multiple root.
const F_RESOLUTION: f64 = 1e-12;
/// `|Im λ|` below which an eigenvalue counts as real.
pub const REAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochPoint {
    /// Band index (1-based); 0 when the point was refined without numbering.
    pub n: usize,
    pub t: f64,
    pub lambda: C,
    pub residual: f64,
    pub simple: bool,
}

/// The double eigenvalue shared by bands `2k-1` and `2k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublePoint {
    pub k: usize,
    pub t: f64,
    /// `1 − t`, kept separately: for large `k` the point sits closer to
    /// `t = 1` than an `f64` near 1 can resolve.
    pub one_minus_t: f64,
    pub lambda: f64,
    pub f_second: C,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub n: usize,
    pub samples: Vec<BlochPoint>,
    pub double_point: Option<DoublePoint>,
    /// First maximal `t`-interval on which the band is real.
    pub real_segment: Option<(f64, f64)>,
}

impl Band {
    /// Real parts covered by the real segment.
    pub fn real_range(&self) -> Option<(f64, f64)> {
        let (a, b) = self.real_segment?;
        let vals: Vec<f64> = self.samples.iter().filter(|p| p.t >= a && p.t <= b).map(|p| p.lambda.re).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((lo, hi))
    }
}

pub fn is_real(z: C) -> bool {
    z.im.abs() <= REAL_TOL * z.norm().max(1.0)
}

/// Newton refinement of a root of `F(λ) = 2cos(πt)` from `lambda0`.
///
/// Returns `NearSingular` (carrying the converged value) when the root is
/// numerically multiple; callers at double points switch to
/// [`find_double_point`].
pub fn refine(params: &PotentialParams, t: f64, lambda0: C) -> Result<BlochPoint> {
    let target = 2.0 * (PI * t).cos();
    let mut lam = lambda0;
    for _ in 0..50 {
        let (f, fp) = discriminant(params, lam)?;
        if fp.norm() == 0.0 {
            break;
        }
        let step = (f - target) / fp;
        lam -= step;
        if !(lam.re.is_finite() && lam.im.is_finite()) {
            return Err(HillError::NoConvergence { lambda: lambda0, residual: f64::INFINITY });
        }
        if step.norm() <= 1e-14 * lam.norm().max(1.0) {
            break;
        }
    }
    let (f, fp) = discriminant(params, lam)?;
    let residual = (f - target).norm();
    if residual >= RESIDUAL_TOL {
        return Err(HillError::NoConvergence { lambda: lambda0, residual });
    }
    let fpn = fp.norm();
    let near = fpn < SINGULAR_TOL || {
        fpn < 1e-2 && {
            let f2 = discriminant_second_derivative(params, lam)?;
            fpn * fpn < 2.0 * f2.norm() * F_RESOLUTION
        }
    };
    if near {
        let (lambda, f_prime, residual) = polish_multiple(params, target, lam, fpn, residual)?;
        return Err(HillError::NearSingular { lambda, f_prime, residual });
    }
    Ok(BlochPoint { n: 0, t, lambda: lam, residual, simple: true })
}

/// Newton on `F'` near a numerically multiple root: the root of `F'` is
/// well conditioned, while the roots of `F − 2cos(πt)` only resolve to the
/// square root of the rounding level there.
fn polish_multiple(params: &PotentialParams, target: f64, lam0: C, fp0: f64, res0: f64) -> Result<(C, f64, f64)> {
    let mut lam = lam0;
    for _ in 0..8 {
        let (_, fp) = discriminant(params, lam)?;
        let f2 = discriminant_second_derivative(params, lam)?;
        if f2.norm() == 0.0 {
            break;
        }
        let step = fp / f2;
        lam -= step;
        if step.norm() <= 1e-14 * lam.norm().max(1.0) {
            break;
        }
    }
    let (f, fp) = discriminant(params, lam)?;
    let residual = (f - target).norm();
    if residual < RESIDUAL_TOL && (lam - lam0).norm() < 1e-4 * lam0.norm().max(1.0) {
        Ok((lam, fp.norm(), residual))
    } else {
        Ok((lam0, fp0, res0))
    }
}

/// Like [`refine`] but accepts numerically multiple roots, flagging them.
pub fn refine_lenient(params: &PotentialParams, t: f64, lambda0: C) -> Result<BlochPoint> {
    match refine(params, t, lambda0) {
        Ok(p) => Ok(p),
        Err(HillError::NearSingular { lambda, residual, .. }) => Ok(BlochPoint { n: 0, t, lambda, residual, simple: false }),
        Err(e) => Err(e),
    }
}

/// Matrix estimates of `λ_1(t), ..., λ_count(t)` in spectral order.
pub fn bloch_seeds(params: &PotentialParams, t: f64, count: usize) -> Result<Vec<C>> {
    let m = truncation_order(params.c, count);
    let eigs = converged(&TruncatedSystem::bloch(params, t, m).eigenvalues()?, m);
    if eigs.len() < count {
        return Err(HillError::Domain(format!("only {} converged eigenvalues, {count} requested", eigs.len())));
    }
    Ok(eigs[..count].to_vec())
}

/// Periodic eigenvalues `λ_1(0), ..., λ_count(0)` in spectral order.
pub fn periodic_spectrum(params: &PotentialParams, count: usize) -> Result<Vec<C>> {
    bloch_seeds(params, 0.0, count)
}

/// Antiperiodic eigenvalues `λ_1(1), ..., λ_count(1)` in spectral order.
pub fn antiperiodic_spectrum(params: &PotentialParams, count: usize) -> Result<Vec<C>> {
    bloch_seeds(params, 1.0, count)
}

/// Refined `λ_n(t)`; numerically multiple roots are kept and flagged.
pub fn bloch_point(params: &PotentialParams, n: usize, t: f64) -> Result<BlochPoint> {
    if n == 0 {
        return Err(HillError::Domain("band indices start at 1".into()));
    }
    let seeds = bloch_seeds(params, t, n)?;
    let mut p = refine_lenient(params, t, seeds[n - 1])?;
    p.n = n;
    Ok(p)
}

fn distance_to_segment(z: C, a: C, b: C) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let s = (((z - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + d * s)).norm()
}

/// Midpoint test used for continuation: `λ(t_mid)` must lie within twice the
/// chord length of the chord `[λ(t_a), λ(t_b)]`.
pub fn chord_ok(a: C, mid: C, b: C) -> bool {
    let chord = (b - a).norm();
    distance_to_segment(mid, a, b) <= 2.0 * chord + 1e-9 * mid.norm().max(1.0)
}

/// Uniform grid of `points` values on `[0, 1]`.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
}

const MAX_BAND_POINTS: usize = 1 << 14;
const MAX_HALVINGS: usize = 10;

/// Traces band `n` over `t_grid ⊂ [0, 1]`, inserting the pair's double point
/// when one exists and bisecting intervals that fail the chord test.
pub fn trace_band(params: &PotentialParams, n: usize, t_grid: &[f64]) -> Result<Band> {
    if n == 0 {
        return Err(HillError::Domain("band indices start at 1".into()));
    }
    let k = n.div_ceil(2);
    let dp = find_double_point(params, k).ok();

    let mut ts: Vec<f64> = t_grid.iter().copied().filter(|t| (0.0..=1.0).contains(t)).collect();
    if let Some(d) = dp {
        ts.push(d.t);
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if ts.is_empty() {
        return Err(HillError::Domain("empty t grid".into()));
    }

    let eval = |t: f64| -> Result<BlochPoint> {
        if let Some(d) = dp {
            if (t - d.t).abs() < 1e-15 {
                let lam = C::new(d.lambda, 0.0);
                let (f, _) = discriminant(params, lam)?;
                let residual = (f - 2.0 * (PI * t).cos()).norm();
                return Ok(BlochPoint { n, t, lambda: lam, residual, simple: false });
            }
        }
        bloch_point(params, n, t)
    };

    let mut samples: Vec<BlochPoint> = ts.par_iter().map(|&t| eval(t)).collect::<Result<_>>()?;

    // Bisect until every interval passes the chord test.
    let mut depth = vec![0usize; samples.len().saturating_sub(1)];
    let mut i = 0;
    while i + 1 < samples.len() {
        let (a, b) = (samples[i], samples[i + 1]);
        let tm = 0.5 * (a.t + b.t);
        if samples.len() >= MAX_BAND_POINTS || b.t - a.t < 1e-12 {
            i += 1;
            continue;
        }
        let mid = eval(tm)?;
        if chord_ok(a.lambda, mid.lambda, b.lambda) {
            i += 1;
            continue;
        }
        if depth[i] >= MAX_HALVINGS {
            return Err(HillError::BandJump { n, t: tm });
        }
        let d = depth[i] + 1;
        samples.insert(i + 1, mid);
        depth[i] = d;
        depth.insert(i + 1, d);
    }

    let real_segment = first_real_run(&samples);
    Ok(Band { n, samples, double_point: dp, real_segment })
}

fn first_real_run(samples: &[BlochPoint]) -> Option<(f64, f64)> {
    let start = samples.iter().position(|p| is_real(p.lambda))?;
    let mut end = start;
    while end + 1 < samples.len() && is_real(samples[end + 1].lambda) {
        end += 1;
    }
    Some((samples[start].t, samples[end].t))
}

/// Plain continuation from `lambda0` at `t_grid[0]`: each step is seeded by
/// linear extrapolation and halved when Newton fails or the chord test
/// rejects it.
pub fn continue_from(params: &PotentialParams, t_grid: &[f64], lambda0: C) -> Result<Vec<BlochPoint>> {
    let Some(&t0) = t_grid.first() else {
        return Ok(Vec::new());
    };
    let mut out = vec![refine_lenient(params, t0, lambda0)?];
    for &target in &t_grid[1..] {
        let mut halvings = 0;
        while out.last().map(|p| p.t).unwrap_or(target) < target {
            let last = *out.last().unwrap();
            let prev = if out.len() >= 2 { Some(out[out.len() - 2]) } else { None };
            let mut dt = target - last.t;
            loop {
                let t = last.t + dt;
                let seed = match prev {
                    Some(p) if last.t > p.t => last.lambda + (last.lambda - p.lambda) * (dt / (last.t - p.t)),
                    _ => last.lambda,
                };
                let accepted = refine_lenient(params, t, seed).ok().filter(|q| {
                    let check = refine_lenient(params, last.t + 0.5 * dt, 0.5 * (last.lambda + q.lambda)).ok();
                    check.is_some_and(|m| chord_ok(last.lambda, m.lambda, q.lambda))
                });
                match accepted {
                    Some(q) => {
                        out.push(q);
                        break;
                    }
                    None => {
                        halvings += 1;
                        if halvings > MAX_HALVINGS {
                            return Err(HillError::BandJump { n: 0, t });
                        }
                        dt *= 0.5;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Locates the double eigenvalue of the pair `(2k-1, 2k)` inside
/// `I_k = [λ_{2k-1}(0), λ_{2k}(0)]` as the root of `F'` with `|F| < 2`.
pub fn find_double_point(params: &PotentialParams, k: usize) -> Result<DoublePoint> {
    if k == 0 {
        return Err(HillError::Domain("pair index k starts at 1".into()));
    }
    let per = periodic_spectrum(params, 2 * k)?;
    let (a, b) = (per[2 * k - 2], per[2 * k - 1]);
    if !is_real(a) || !is_real(b) {
        return Err(HillError::NotFound(format!("periodic pair {k} is not real")));
    }
    let (lo, hi) = (a.re, b.re);
    if hi - lo <= 1e-9 * hi.abs().max(1.0) {
        return Err(HillError::NotFound(format!("interval I_{k} is degenerate")));
    }
    let fprime = |x: f64| -> Result<f64> { Ok(discriminant(params, C::new(x, 0.0))?.1.re) };

    const SAMPLES: usize = 64;
    let xs: Vec<f64> = (1..SAMPLES).map(|i| lo + (hi - lo) * i as f64 / SAMPLES as f64).collect();
    let vals: Vec<f64> = xs.par_iter().map(|&x| fprime(x)).collect::<Result<_>>()?;

    let mut found = Vec::new();
    for i in 0..vals.len() - 1 {
        if vals[i] == 0.0 || vals[i].signum() != vals[i + 1].signum() {
            let root = solve_fprime_zero(params, xs[i], xs[i + 1], vals[i])?;
            let fd = fundamental(params, C::new(root, 0.0), PotentialForm::Shifted)?;
            if let Some(dist) = distance_to_edge(params, root, &fd)? {
                found.push((root, fd.f.re, dist));
            }
        }
    }
    match found.len() {
        0 => Err(HillError::NotFound(format!("no interior root of F' with |F| < 2 in I_{k}"))),
        1 => {
            let (root, f, dist) = found[0];
            let f2 = discriminant_second_derivative(params, C::new(root, 0.0))?;
            if f2.norm() < 1e-6 {
                return Err(HillError::Degenerate(format!("|F''| = {:e} at {root}", f2.norm())));
            }
            // 2 ∓ 2cos(πs) = 4sin²(πs/2) with s the distance of t to the near end
            let s = 2.0 / PI * (dist / 4.0).sqrt().min(1.0).asin();
            let (t, one_minus_t) = if f < 0.0 { (1.0 - s, s) } else { (s, 1.0 - s) };
            Ok(DoublePoint { k, t, one_minus_t, lambda: root, f_second: f2 })
        }
        m => Err(HillError::Degenerate(format!("{m} interior double points in I_{k}"))),
    }
}

/// `F + 2` or `2 − F` at a real critical point of `F`, whichever edge is
/// nearer; `None` when `F` is not strictly inside `(−2, 2)`.
///
/// Near `−2` the sign is read off the antiperiodic pair around the critical
/// point when shooting cannot resolve it. That pair is `{μ, μ̄}` (the cosine
/// class is the conjugate of the sine class), so `F > −2` on the real axis
/// exactly when `Im μ ≠ 0`, and then `F + 2 ≈ (F''/2)(Im μ)²`.
fn distance_to_edge(params: &PotentialParams, root: f64, fd: &FundamentalData) -> Result<Option<f64>> {
    let margin = fd.pm_two_uncertainty();
    if fd.f.re >= 0.0 {
        let minus = fd.two_minus_f().re;
        return Ok((minus > margin).then_some(minus));
    }
    let plus = fd.f_plus_two().re;
    if plus.abs() > 1e3 * margin {
        return Ok((plus > 0.0).then_some(plus));
    }
    let n = ((root.max(1.0).sqrt() + 1.0) / 2.0).round().max(1.0) as usize;
    let im = 0.5 * odd_class_split(params.c, n, root).im;
    let f2 = discriminant_second_derivative(params, C::new(root, 0.0))?.re;
    let plus = 0.5 * f2 * im * im;
    Ok((plus > 0.0 && im != 0.0).then_some(plus))
}

/// Safeguarded Newton for `F'(λ) = 0` on a sign-change bracket.
fn solve_fprime_zero(params: &PotentialParams, mut a: f64, mut b: f64, fa: f64) -> Result<f64> {
    let sa = fa.signum();
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (_, fp) = discriminant(params, C::new(x, 0.0))?;
        let g = fp.re;
        if g == 0.0 {
            return Ok(x);
        }
        if g.signum() == sa {
            a = x;
        } else {
            b = x;
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return Ok(0.5 * (a + b));
        }
        let f2 = discriminant_second_derivative(params, C::new(x, 0.0))?.re;
        let newton = x - g / f2;
        let next = if f2 != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealSpectrum {
    /// Smallest real periodic eigenvalue among those computed.
    pub mu: Option<f64>,
    /// `[λ_{2m+1}(0), λ_{2m+2}(0)]` for `m >= n₁ + 2`.
    pub intervals: Vec<(f64, f64)>,
    /// `(λ_{2m}(0), λ_{2m+1}(0))` for `m >= n₁ + 2`.
    pub gaps: Vec<(f64, f64)>,
    /// `F > 2` on a sample grid left of `μ`.
    pub clear_left_of_mu: bool,
}

/// Real spectrum structure above `λ_{2n}(0)`, `n = n₁ + 2`, using periodic
/// eigenvalues up to index `n_max`.
pub fn real_spectrum(params: &PotentialParams, n_max: usize) -> Result<RealSpectrum> {
    let n = params.n1 + 2;
    let per = periodic_spectrum(params, n_max.max(2 * n + 2))?;
    let at = |i: usize| per[i - 1].re;
    let mut intervals = Vec::new();
    let mut gaps = Vec::new();
    let mut m = n;
    while 2 * m + 2 <= per.len() {
        gaps.push((at(2 * m), at(2 * m + 1)));
        intervals.push((at(2 * m + 1), at(2 * m + 2)));
        m += 1;
    }
    let mu = per.iter().filter(|z| is_real(**z)).map(|z| z.re).fold(None, |acc: Option<f64>, x| {
        Some(acc.map_or(x, |a| a.min(x)))
    });
    let clear_left_of_mu = match mu {
        Some(mu) => {
            let width = 10.0 + mu.abs();
            let gap = 1e-3 * mu.abs().max(1.0);
            (0..200)
                .into_par_iter()
                .map(|i| {
                    let x = mu - gap - width * i as f64 / 199.0;
                    discriminant(params, C::new(x, 0.0)).map(|(f, _)| f.re > 2.0)
                })
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .all(|b| b)
        }
        None => true,
    };
    Ok(RealSpectrum { mu, intervals, gaps, clear_left_of_mu })
}

/// Sorts a list of values in spectral order; re-exported for callers that
/// assemble spectra from several sources.
pub fn sort_spectrum(v: &mut [C]) {
    spectral_sort(v);
}
