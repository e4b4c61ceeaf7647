//! Dirichlet and Neumann spectra on `[0, π]` and the PD/PN/AD/AN
//! classification of periodic and antiperiodic eigenvalues.
//!
//! Every 2-periodic eigenvalue lies in exactly one of the Dirichlet
//! (`φ(π,λ) = 0`) and Neumann (`θ'(π,λ) = 0`) spectra. For small `c` a PD and
//! a PN eigenvalue near `(2n)²` differ by `O(c^{2n})`, far below rounding for
//! moderate `n`; the order of such pairs is taken from the exact
//! continued-fraction difference of the two symmetry classes, which has no
//! cancellation.

use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::bloch_bands::is_real;
use crate::error::{HillError, Result};
use crate::hill_core::{fundamental, PotentialForm, PotentialParams};
use crate::matrix_oracle::{converged, spectral_sort, truncation_order, BoundaryKind, TruncatedSystem};

/// Normalized boundary residual above which a value is neither D nor N.
pub const CLASSIFY_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EigenClass {
    PD,
    PN,
    AD,
    AN,
}

impl EigenClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EigenClass::PD => "PD",
            EigenClass::PN => "PN",
            EigenClass::AD => "AD",
            EigenClass::AN => "AN",
        }
    }
}

impl std::fmt::Display for EigenClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    Periodic,
    Antiperiodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Condition {
    Dirichlet,
    Neumann,
}

/// Newton on `φ(π,λ) = 0` or `θ'(π,λ) = 0`.
fn boundary_newton(params: &PotentialParams, cond: Condition, seed: C) -> Result<C> {
    let eval = |lam: C| -> Result<(C, C)> {
        let d = fundamental(params, lam, PotentialForm::Shifted)?;
        Ok(match cond {
            Condition::Dirichlet => (d.phi, d.d_phi),
            Condition::Neumann => (d.theta_prime, d.d_theta_prime),
        })
    };
    let mut lam = seed;
    for _ in 0..50 {
        let (g, dg) = eval(lam)?;
        if dg.norm() == 0.0 {
            break;
        }
        let step = g / dg;
        lam -= step;
        if step.norm() <= 1e-14 * lam.norm().max(1.0) {
            break;
        }
    }
    let (g, _) = eval(lam)?;
    if g.norm() >= 1e-9 || (lam - seed).norm() > 0.5 {
        return Err(HillError::NoConvergence { lambda: seed, residual: g.norm() });
    }
    Ok(lam)
}

fn class_values(params: &PotentialParams, kind: BoundaryKind, count: usize) -> Result<Vec<C>> {
    let m = truncation_order(params.c, count);
    let eigs = converged(&TruncatedSystem::boundary(params, kind, m).eigenvalues()?, m);
    Ok(eigs.into_iter().take(count).collect())
}

fn refined_class(params: &PotentialParams, kind: BoundaryKind, count: usize) -> Result<Vec<C>> {
    let cond = match kind {
        BoundaryKind::Dirichlet | BoundaryKind::AntiperiodicSine => Condition::Dirichlet,
        BoundaryKind::Neumann | BoundaryKind::AntiperiodicCosine => Condition::Neumann,
    };
    let mut v: Vec<C> = class_values(params, kind, count)?
        .par_iter()
        .map(|&s| boundary_newton(params, cond, s))
        .collect::<Result<_>>()?;
    // Keep real seeds exactly real: Newton on a real function cannot leave the axis.
    for z in v.iter_mut() {
        if z.im.abs() < 1e-14 * z.norm().max(1.0) {
            z.im = 0.0;
        }
    }
    Ok(v)
}

fn merged(params: &PotentialParams, a: BoundaryKind, b: BoundaryKind, count: usize) -> Result<Vec<C>> {
    let mut v = refined_class(params, a, count)?;
    v.extend(refined_class(params, b, count)?);
    spectral_sort(&mut v);
    v.truncate(count);
    if v.len() < count {
        return Err(HillError::Domain(format!("only {} converged eigenvalues, {count} requested", v.len())));
    }
    Ok(v)
}

/// The first `count` roots of `φ(π,λ) = 0` in spectral order.
pub fn dirichlet_spectrum(params: &PotentialParams, count: usize) -> Result<Vec<C>> {
    merged(params, BoundaryKind::Dirichlet, BoundaryKind::AntiperiodicSine, count)
}

/// The first `count` roots of `θ'(π,λ) = 0` in spectral order.
pub fn neumann_spectrum(params: &PotentialParams, count: usize) -> Result<Vec<C>> {
    merged(params, BoundaryKind::Neumann, BoundaryKind::AntiperiodicCosine, count)
}

/// Normalized distances `(|φ/φ_λ|, |θ'/θ'_λ|)` from `λ` to the nearest
/// Dirichlet and Neumann eigenvalue.
pub fn boundary_residuals(params: &PotentialParams, lambda: C) -> Result<(f64, f64)> {
    let d = fundamental(params, lambda, PotentialForm::Shifted)?;
    let rd = d.phi.norm() / d.d_phi.norm().max(f64::MIN_POSITIVE);
    let rn = d.theta_prime.norm() / d.d_theta_prime.norm().max(f64::MIN_POSITIVE);
    Ok((rd, rn))
}

/// Tags a periodic or antiperiodic eigenvalue by the boundary condition it
/// satisfies.
pub fn classify(params: &PotentialParams, lambda: C, kind: SpectrumKind) -> Result<EigenClass> {
    let (rd, rn) = boundary_residuals(params, lambda)?;
    if rd.min(rn) > CLASSIFY_TOL {
        return Err(HillError::Unclassified(lambda));
    }
    let dirichlet = rd < rn;
    Ok(match (kind, dirichlet) {
        (SpectrumKind::Periodic, true) => EigenClass::PD,
        (SpectrumKind::Periodic, false) => EigenClass::PN,
        (SpectrumKind::Antiperiodic, true) => EigenClass::AD,
        (SpectrumKind::Antiperiodic, false) => EigenClass::AN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedEigenvalue {
    /// 1-based position in spectral order.
    pub index: usize,
    pub lambda: C,
    pub class: EigenClass,
    /// Agreement of the residual test [`classify`] with the class; `None`
    /// when the partner of the other class is closer than the residual test
    /// can resolve.
    pub residual_check: Option<bool>,
}

/// The first `count` periodic or antiperiodic eigenvalues with their classes.
pub fn classified_spectrum(params: &PotentialParams, kind: SpectrumKind, count: usize) -> Result<Vec<ClassifiedEigenvalue>> {
    let (kd, kn, cd, cn) = match kind {
        SpectrumKind::Periodic => (BoundaryKind::Dirichlet, BoundaryKind::Neumann, EigenClass::PD, EigenClass::PN),
        SpectrumKind::Antiperiodic => (
            BoundaryKind::AntiperiodicSine,
            BoundaryKind::AntiperiodicCosine,
            EigenClass::AD,
            EigenClass::AN,
        ),
    };
    let mut all: Vec<(C, EigenClass)> = refined_class(params, kd, count)?.into_iter().map(|z| (z, cd)).collect();
    all.extend(refined_class(params, kn, count)?.into_iter().map(|z| (z, cn)));

    let mut values: Vec<C> = all.iter().map(|p| p.0).collect();
    spectral_sort(&mut values);
    let mut ordered: Vec<(C, EigenClass)> = Vec::with_capacity(all.len());
    for z in values {
        let pos = all.iter().position(|p| p.0 == z).expect("value taken from the list");
        ordered.push(all.swap_remove(pos));
    }

    // Order pairs from different classes that rounding cannot separate.
    let mut i = 0;
    while i + 1 < ordered.len() {
        let (a, ca) = ordered[i];
        let (b, cb) = ordered[i + 1];
        let scale = a.norm().max(1.0);
        if ca != cb && (a - b).norm() <= 1e-9 * scale {
            let first_is_d = match kind {
                SpectrumKind::Periodic => {
                    let n = (a.re.max(0.0).sqrt() / 2.0).round() as usize;
                    even_class_split(params.c, n.max(1), a.re) < 0.0
                }
                SpectrumKind::Antiperiodic => {
                    let n = ((a.re.max(0.0).sqrt() + 1.0) / 2.0).round() as usize;
                    odd_class_split(params.c, n.max(1), a.re).im < 0.0
                }
            };
            let d_first = ca == cd;
            if first_is_d != d_first {
                ordered.swap(i, i + 1);
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    ordered.truncate(count);
    if ordered.len() < count {
        return Err(HillError::Domain(format!("only {} converged eigenvalues, {count} requested", ordered.len())));
    }

    let tags: Vec<(C, EigenClass)> = ordered.clone();
    ordered
        .par_iter()
        .enumerate()
        .map(|(i, &(lambda, class))| {
            let partner = tags
                .iter()
                .filter(|(_, c)| *c != class)
                .map(|(z, _)| (z - lambda).norm())
                .fold(f64::INFINITY, f64::min);
            let residual_check = if partner > 1e-6 * lambda.norm().max(1.0) {
                Some(classify(params, lambda, kind).map(|c| c == class).unwrap_or(false))
            } else {
                None
            };
            Ok(ClassifiedEigenvalue { index: i + 1, lambda, class, residual_check })
        })
        .collect()
}

/// Depth of the continued fractions used for the symmetry-class splits.
const CF_DEPTH: usize = 60;

/// `g_N(λ) = λ − (2n)² − ℓᴺ_n − u_n` for the even cosine class, with the lower
/// fraction `ℓᴺ` and the shared upper fraction `u`.
fn even_g(c: f64, n: usize, lam: f64) -> (f64, f64) {
    let a2 = -c * c;
    let sq = |k: usize| (4 * k * k) as f64;
    // lower fractions and their difference δ = ℓᴰ − ℓᴺ
    let mut ld = 0.0;
    let mut ln = 2.0 * a2 / lam;
    let mut delta = -2.0 * a2 / lam;
    for k in 1..n {
        let nd = a2 / (lam - sq(k) - ld);
        let nn = a2 / (lam - sq(k) - ln);
        delta = if a2 == 0.0 { 0.0 } else { nd * nn * delta / a2 };
        ld = nd;
        ln = nn;
    }
    let mut u = 0.0;
    for k in (n..n + CF_DEPTH).rev() {
        u = a2 / (lam - sq(k + 1) - u);
    }
    (lam - sq(n) - ln - u, delta)
}

/// First-order `λ_PD − λ_PN` near `(2n)²`, evaluated at the PN eigenvalue
/// found by Newton on the cosine-class fraction from `seed`.
pub fn even_class_split(c: f64, n: usize, seed: f64) -> f64 {
    let mut lam = seed;
    for _ in 0..50 {
        let h = 1e-7 * lam.abs().max(1.0);
        let g = even_g(c, n, lam).0;
        let dg = (even_g(c, n, lam + h).0 - even_g(c, n, lam - h).0) / (2.0 * h);
        let step = g / dg;
        lam -= step;
        if step.abs() <= 1e-15 * lam.abs().max(1.0) {
            break;
        }
    }
    let h = 1e-7 * lam.abs().max(1.0);
    let dg = (even_g(c, n, lam + h).0 - even_g(c, n, lam - h).0) / (2.0 * h);
    even_g(c, n, lam).1 / dg
}

/// First-order `λ_AD − λ_AN` near `(2n−1)²`, evaluated on the real axis at
/// `re_lambda`. For the conjugate pair its imaginary part is `2 Im λ_AD`.
pub fn odd_class_split(c: f64, n: usize, re_lambda: f64) -> C {
    let a = C::new(0.0, c);
    let a2 = a * a;
    let lam = C::new(re_lambda, 0.0);
    let sq = |k: usize| {
        let o = (2 * k - 1) as f64;
        o * o
    };
    let mut ls = -a;
    let mut lc = a;
    let mut delta = -a * 2.0;
    for k in 1..n {
        let ns = a2 / (lam - sq(k) - ls);
        let nc = a2 / (lam - sq(k) - lc);
        delta = if c == 0.0 { C::default() } else { ns * nc * delta / a2 };
        ls = ns;
        lc = nc;
    }
    let mut u = C::default();
    for k in (n..n + CF_DEPTH).rev() {
        u = a2 / (lam - sq(k + 1) - u);
    }
    let g = |l: C, low: C| l - sq(n) - low - u;
    // g' ≈ 1 + O(c²); the difference quotient uses the cosine-class fraction
    let h = 1e-7 * re_lambda.abs().max(1.0);
    let dg = (g(lam + h, lc) - g(lam - h, lc)) / (2.0 * h);
    delta / dg
}

/// Closed form for `λ_PD − λ_PN` near `(2n)²`:
/// `−2(−1)ⁿc^{2n} / (((2n)²−4)²(2n)²) · ∏_{k=2}^{n−1} ((2n)²−(2k)²)^{−2}`.
pub fn pd_pn_splitting_predicted(c: f64, n: usize) -> f64 {
    let n2 = (4 * n * n) as f64;
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let mut v = -2.0 * sign * c.powi(2 * n as i32) / ((n2 - 4.0).powi(2) * n2);
    for k in 2..n {
        v /= (n2 - (4 * k * k) as f64).powi(2);
    }
    v
}

/// `(measured, predicted)` PD − PN splitting near `(2n)²`, `n >= 2`.
pub fn pd_pn_splitting(params: &PotentialParams, n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(HillError::Domain("the splitting formula needs n >= 2".into()));
    }
    let center = (4 * n * n) as f64;
    let neumann = class_values(params, BoundaryKind::Neumann, n + 2)?;
    let dirichlet = class_values(params, BoundaryKind::Dirichlet, n + 2)?;
    let nearest = |v: &[C]| v.iter().copied().min_by(|a, b| (a - center).norm().total_cmp(&(b - center).norm()));
    let (Some(pn), Some(pd)) = (nearest(&neumann), nearest(&dirichlet)) else {
        return Err(HillError::Regime("no eigenvalues near the requested center".into()));
    };
    if !is_real(pn) || !is_real(pd) {
        return Err(HillError::Regime(format!("eigenvalues near {center} are not real")));
    }
    let measured = even_class_split(params.c, n, pn.re);
    Ok((measured, pd_pn_splitting_predicted(params.c, n)))
}

/// The antiperiodic Dirichlet eigenvalue in the disk around `(2n−1)²`.
pub fn ad_eigenvalue(params: &PotentialParams, n: usize) -> Result<C> {
    if n == 0 {
        return Err(HillError::Domain("n starts at 1".into()));
    }
    let center = ((2 * n - 1) * (2 * n - 1)) as f64;
    let seeds = class_values(params, BoundaryKind::AntiperiodicSine, n + 2)?;
    let seed = seeds
        .iter()
        .copied()
        .min_by(|a, b| (a - center).norm().total_cmp(&(b - center).norm()))
        .ok_or_else(|| HillError::Regime("no antiperiodic eigenvalue found".into()))?;
    if (seed - center).norm() > 2.0 * params.c + 1e-9 {
        return Err(HillError::Regime(format!("no AD eigenvalue inside the disk around {center}")));
    }
    boundary_newton(params, Condition::Dirichlet, seed)
}

/// `(Im λ_AD(c), exponent)` where the exponent is the log₂ slope of
/// `|Im λ_AD|` between `c/2` and `c`.
pub fn ad_imag_asymptote(params: &PotentialParams, n: usize) -> Result<(f64, f64)> {
    if params.c > 0.3 || params.c == 0.0 {
        return Err(HillError::Regime(format!("asymptotics need 0 < c <= 0.3, got {}", params.c)));
    }
    let here = ad_eigenvalue(params, n)?;
    let half = ad_eigenvalue(&PotentialParams::from_c(params.c / 2.0)?, n)?;
    let exponent = (here.im.abs() / half.im.abs()).log2();
    Ok((here.im, exponent))
}

/// Max-norm distance of the monodromy matrix at `λ` from `I` (periodic) or
/// `−I` (antiperiodic).
pub fn monodromy_deviation(params: &PotentialParams, lambda: C, kind: SpectrumKind) -> Result<f64> {
    let d = fundamental(params, lambda, PotentialForm::Shifted)?;
    let s = match kind {
        SpectrumKind::Periodic => 1.0,
        SpectrumKind::Antiperiodic => -1.0,
    };
    let m = d.monodromy();
    Ok([(m[0][0] - s).norm(), m[0][1].norm(), m[1][0].norm(), (m[1][1] - s).norm()]
        .into_iter()
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c: f64) -> PotentialParams {
        PotentialParams::from_c(c).unwrap()
    }

    #[test]
    fn free_boundary_spectra() {
        let d = dirichlet_spectrum(&params(0.0), 4).unwrap();
        let n = neumann_spectrum(&params(0.0), 4).unwrap();
        for (z, e) in d.iter().zip([1.0, 4.0, 9.0, 16.0]) {
            assert!((z - e).norm() < 1e-9);
        }
        for (z, e) in n.iter().zip([0.0, 1.0, 4.0, 9.0]) {
            assert!((z - e).norm() < 1e-9);
        }
    }

    #[test]
    fn predicted_splitting_at_n2() {
        let c: f64 = 0.3;
        assert!((pd_pn_splitting_predicted(c, 2) + c.powi(4) / 1152.0).abs() < 1e-18);
    }

    #[test]
    fn lowest_three_periodic_classes() {
        let v = classified_spectrum(&params(0.1), SpectrumKind::Periodic, 3).unwrap();
        let tags: Vec<_> = v.iter().map(|e| e.class).collect();
        assert_eq!(tags, [EigenClass::PN, EigenClass::PN, EigenClass::PD]);
        assert!(v.iter().all(|e| e.residual_check == Some(true)));
    }

    #[test]
    fn small_c_pattern_through_nine() {
        use EigenClass::*;
        let v = classified_spectrum(&params(0.1), SpectrumKind::Periodic, 9).unwrap();
        let tags: Vec<_> = v.iter().map(|e| e.class).collect();
        assert_eq!(tags, [PN, PN, PD, PD, PN, PN, PD, PD, PN]);
    }

    #[test]
    fn antiperiodic_pairs_are_conjugate() {
        let v = classified_spectrum(&params(0.1), SpectrumKind::Antiperiodic, 8).unwrap();
        for pair in v.chunks(2) {
            assert_ne!(pair[0].class, pair[1].class);
            assert!((pair[0].lambda - pair[1].lambda.conj()).norm() < 1e-8);
        }
    }

    #[test]
    fn far_from_spectrum_is_unclassified() {
        let err = classify(&params(1.0), C::new(7.0, 0.0), SpectrumKind::Periodic).unwrap_err();
        assert!(matches!(err, HillError::Unclassified(_)));
    }

    #[test]
    fn split_sign_matches_matrices_when_resolvable() {
        let p = params(0.3);
        let (measured, predicted) = pd_pn_splitting(&p, 2).unwrap();
        let d = class_values(&p, BoundaryKind::Dirichlet, 3).unwrap();
        let n = class_values(&p, BoundaryKind::Neumann, 3).unwrap();
        let direct = d[1].re - n[2].re;
        // first-order in the split, so agreement is to O(split) relative
        assert!((measured - direct).abs() < 1e-4 * direct.abs(), "{measured} {direct}");
        assert!((measured / predicted - 1.0).abs() < 0.05);
    }

    #[test]
    fn odd_split_matches_ad_imaginary_part() {
        let p = params(0.2);
        let ad = ad_eigenvalue(&p, 2).unwrap();
        let split = odd_class_split(0.2, 2, ad.re);
        assert!((split.im / 2.0 - ad.im).abs() < 1e-3 * ad.im.abs(), "{split} {ad}");
    }
}
