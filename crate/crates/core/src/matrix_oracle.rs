//! Truncated Fourier systems for the Bloch and boundary problems.
//!
//! In the basis `e^{i(2n+t)x}`, `n = -M..M`, the shifted operator is the
//! tridiagonal matrix with diagonal `(2n+t)²` and both off-diagonals `a = ic`.
//! The even and odd symmetry classes reduce to half-line tridiagonals:
//!
//! | class                  | basis              | diagonal          | first row          |
//! |------------------------|--------------------|-------------------|--------------------|
//! | Dirichlet (periodic)   | `sin 2kx`, k ≥ 1   | `(2k)²`           | plain              |
//! | Neumann (periodic)     | `cos 2kx`, k ≥ 0   | `(2k)²`           | `A₀` couples by `2a` |
//! | antiperiodic sine      | `sin (2k-1)x`      | `(2k-1)²`         | `1 - a`            |
//! | antiperiodic cosine    | `cos (2k-1)x`      | `(2k-1)²`         | `1 + a`            |
//!
//! Every off-diagonal product is real and negative except in the
//! antiperiodic classes, so those systems are diagonally similar to real
//! tridiagonals and are solved in real arithmetic. Real eigenvalues then come
//! out exactly real and conjugate pairs exactly conjugate.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64 as C;

use crate::error::{HillError, Result};
use crate::hill_core::PotentialParams;

/// Symmetry class of a boundary problem on `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    /// Periodic eigenfunctions vanishing at 0 (`sin 2kx` series).
    Dirichlet,
    /// Periodic eigenfunctions with zero slope at 0 (`cos 2kx` series).
    Neumann,
    /// Antiperiodic `sin (2k-1)x` series; Dirichlet at both ends.
    AntiperiodicSine,
    /// Antiperiodic `cos (2k-1)x` series; Neumann at both ends.
    AntiperiodicCosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemKind {
    Bloch(f64),
    Boundary(BoundaryKind),
}

/// A tridiagonal truncation. `sub[i]` couples row `i+1` to column `i`,
/// `sup[i]` couples row `i` to column `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSystem {
    pub kind: SystemKind,
    pub m: usize,
    pub diag: Vec<C>,
    pub sub: Vec<C>,
    pub sup: Vec<C>,
}

/// `M(c, n_max) = n_max + ⌈2c⌉ + 16`.
pub fn truncation_order(c: f64, n_max: usize) -> usize {
    n_max + (2.0 * c).ceil() as usize + 16
}

/// Smallest admissible truncation for coupling `c`.
pub fn min_truncation(c: f64) -> usize {
    (2.0 * c).ceil() as usize + 16
}

/// Eigenvalues with `|λ| <= (2(M-8))² / 2` are trusted.
pub fn convergence_radius(m: usize) -> f64 {
    let k = 2.0 * (m as f64 - 8.0).max(0.0);
    k * k / 2.0
}

pub fn converged(eigs: &[C], m: usize) -> Vec<C> {
    let r = convergence_radius(m);
    eigs.iter().copied().filter(|z| z.norm() <= r).collect()
}

/// Sorts by real part, breaking near-ties by imaginary part so that
/// conjugate pairs sit at adjacent indices with the lower half-plane first.
pub fn spectral_sort(v: &mut [C]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut start = 0;
    while start < v.len() {
        let mut end = start + 1;
        while end < v.len() && (v[end].re - v[end - 1].re).abs() <= 1e-9 * v[end].re.abs().max(1.0) {
            end += 1;
        }
        v[start..end].sort_by(|a, b| a.im.total_cmp(&b.im));
        start = end;
    }
}

impl TruncatedSystem {
    /// Bloch operator at quasimomentum `t` with modes `n = -M..M`.
    pub fn bloch(params: &PotentialParams, t: f64, m: usize) -> Self {
        let a = params.coupling();
        let diag = (0..=2 * m)
            .map(|j| {
                let k = 2.0 * (j as f64 - m as f64) + t;
                C::new(k * k, 0.0)
            })
            .collect();
        TruncatedSystem {
            kind: SystemKind::Bloch(t),
            m,
            diag,
            sub: vec![a; 2 * m],
            sup: vec![a; 2 * m],
        }
    }

    pub fn periodic(params: &PotentialParams, m: usize) -> Self {
        Self::bloch(params, 0.0, m)
    }

    pub fn antiperiodic(params: &PotentialParams, m: usize) -> Self {
        Self::bloch(params, 1.0, m)
    }

    /// One symmetry class with `M` retained modes.
    pub fn boundary(params: &PotentialParams, kind: BoundaryKind, m: usize) -> Self {
        let a = params.coupling();
        let m = m.max(2);
        let (diag, sub, sup) = match kind {
            BoundaryKind::Dirichlet => {
                let diag = (1..=m).map(|k| C::new((4 * k * k) as f64, 0.0)).collect();
                (diag, vec![a; m - 1], vec![a; m - 1])
            }
            BoundaryKind::Neumann => {
                // modes k = 0..M
                let diag = (0..=m).map(|k| C::new((4 * k * k) as f64, 0.0)).collect();
                let mut sub = vec![a; m];
                sub[0] = a * 2.0;
                (diag, sub, vec![a; m])
            }
            BoundaryKind::AntiperiodicSine | BoundaryKind::AntiperiodicCosine => {
                let mut diag: Vec<C> = (1..=m)
                    .map(|k| {
                        let o = (2 * k - 1) as f64;
                        C::new(o * o, 0.0)
                    })
                    .collect();
                diag[0] += if kind == BoundaryKind::AntiperiodicSine { -a } else { a };
                (diag, vec![a; m - 1], vec![a; m - 1])
            }
        };
        TruncatedSystem { kind: SystemKind::Boundary(kind), m, diag, sub, sup }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// The interior coupling `a = ic`.
    pub fn offdiag(&self) -> C {
        self.sup.last().copied().unwrap_or_default()
    }

    /// Wavenumber of basis function `j` for Bloch systems (`2n + t`).
    pub fn wavenumber(&self, j: usize) -> Option<f64> {
        match self.kind {
            SystemKind::Bloch(t) => Some(2.0 * (j as f64 - self.m as f64) + t),
            SystemKind::Boundary(_) => None,
        }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        TruncatedSystem {
            kind: self.kind,
            m: self.m,
            diag: self.diag.iter().map(|z| z.conj()).collect(),
            sub: self.sup.iter().map(|z| z.conj()).collect(),
            sup: self.sub.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn apply(&self, v: &[C]) -> Vec<C> {
        let n = self.dim();
        let mut out: Vec<C> = (0..n).map(|i| self.diag[i] * v[i]).collect();
        for i in 0..n - 1 {
            out[i] += self.sup[i] * v[i + 1];
            out[i + 1] += self.sub[i] * v[i];
        }
        out
    }

    fn real_form(&self) -> Option<DMatrix<f64>> {
        let n = self.dim();
        if self.diag.iter().any(|z| z.im != 0.0) {
            return None;
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i].re;
        }
        for i in 0..n - 1 {
            let p = self.sub[i] * self.sup[i];
            if p.im != 0.0 {
                return None;
            }
            let s = p.re.abs().sqrt();
            m[(i, i + 1)] = s;
            m[(i + 1, i)] = if p.re < 0.0 { -s } else { s };
        }
        Some(m)
    }

    /// All eigenvalues in spectral order (see [`spectral_sort`]).
    pub fn eigenvalues(&self) -> Result<Vec<C>> {
        let n = self.dim();
        let max_iter = 200 * n;
        let mut eigs: Vec<C> = if let Some(m) = self.real_form() {
            let schur = Schur::try_new(m, f64::EPSILON, max_iter).ok_or(HillError::Convergence { size: n })?;
            schur.complex_eigenvalues().iter().copied().collect()
        } else {
            let mut m = DMatrix::<C>::zeros(n, n);
            for i in 0..n {
                m[(i, i)] = self.diag[i];
            }
            for i in 0..n - 1 {
                m[(i, i + 1)] = self.sup[i];
                m[(i + 1, i)] = self.sub[i];
            }
            let schur = Schur::try_new(m, f64::EPSILON, max_iter).ok_or(HillError::Convergence { size: n })?;
            schur
                .eigenvalues()
                .ok_or(HillError::Convergence { size: n })?
                .iter()
                .copied()
                .collect()
        };
        spectral_sort(&mut eigs);
        Ok(eigs)
    }

    /// Eigenvalues inside the trusted radius.
    pub fn converged_eigenvalues(&self) -> Result<Vec<C>> {
        Ok(converged(&self.eigenvalues()?, self.m))
    }

    /// Unit eigenvector for the (already computed) eigenvalue `lambda` by
    /// inverse iteration; the largest coefficient is made real and positive.
    pub fn eigenvector(&self, lambda: C) -> Vec<C> {
        let n = self.dim();
        let mut v: Vec<C> = (0..n).map(|j| C::new(1.0 + 0.37 * ((j * 7 + 3) % 11) as f64 / 11.0, 0.0)).collect();
        normalize(&mut v);
        let shift: Vec<C> = self.diag.iter().map(|d| d - lambda).collect();
        for _ in 0..3 {
            solve_tridiagonal(&self.sub, &shift, &self.sup, &mut v);
            normalize(&mut v);
        }
        fix_phase(&mut v);
        v
    }
}

fn normalize(v: &mut [C]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        for z in v.iter_mut() {
            *z /= norm;
        }
    }
}

/// Rotates `v` so its largest-magnitude entry is real and positive.
pub fn fix_phase(v: &mut [C]) {
    if let Some(big) = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
        if big.norm() > 0.0 {
            let rot = big.conj() / big.norm();
            for z in v.iter_mut() {
                *z *= rot;
            }
        }
    }
}

/// Solves a tridiagonal system in place with partial pivoting (the LAPACK
/// `gtsv` scheme). Zero pivots are replaced by a tiny value so inverse
/// iteration at an exact eigenvalue still produces a direction.
pub fn solve_tridiagonal(sub: &[C], diag: &[C], sup: &[C], b: &mut [C]) {
    let n = diag.len();
    if n == 1 {
        b[0] /= nonzero(diag[0], 1.0);
        return;
    }
    let scale = diag.iter().chain(sub).chain(sup).map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let dl = sub.to_vec();
    let mut du2 = vec![C::default(); n];
    for i in 0..n - 1 {
        if d[i].norm() >= dl[i].norm() {
            let piv = nonzero(d[i], scale);
            d[i] = piv;
            let fact = dl[i] / piv;
            d[i + 1] -= fact * du[i];
            b[i + 1] = b[i + 1] - fact * b[i];
            du2[i] = C::default();
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let bi = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bi - fact * b[i + 1];
        }
    }
    d[n - 1] = nonzero(d[n - 1], scale);
    b[n - 1] /= d[n - 1];
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
}

fn nonzero(z: C, scale: f64) -> C {
    if z.norm() < f64::EPSILON * scale * 1e-3 {
        C::new(f64::EPSILON * scale * 1e-3, 0.0)
    } else {
        z
    }
}

/// Eigenvalues of the Bloch truncation at `t`.
pub fn bloch_eigenvalues(params: &PotentialParams, t: f64, m: usize) -> Result<Vec<C>> {
    check_truncation(params, m)?;
    TruncatedSystem::bloch(params, t, m).eigenvalues()
}

/// Eigenvalues of one boundary symmetry class.
pub fn boundary_eigenvalues(params: &PotentialParams, kind: BoundaryKind, m: usize) -> Result<Vec<C>> {
    check_truncation(params, m)?;
    TruncatedSystem::boundary(params, kind, m).eigenvalues()
}

fn check_truncation(params: &PotentialParams, m: usize) -> Result<()> {
    let need = min_truncation(params.c);
    if m < need {
        return Err(HillError::Domain(format!("truncation M = {m} below the minimum {need} for c = {}", params.c)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiskCoverReport {
    pub all_covered: bool,
    pub violators: Vec<C>,
}

/// Checks that every eigenvalue lies in some disk `|λ − (2n+t)²| <= 2c`.
pub fn disk_cover_check(params: &PotentialParams, t: f64, eigs: &[C]) -> DiskCoverReport {
    let r = 2.0 * params.c;
    let violators: Vec<C> = eigs
        .iter()
        .copied()
        .filter(|z| {
            let span = (z.norm().sqrt() / 2.0 + params.c + 3.0).ceil() as i64;
            let best = (-span..=span)
                .map(|n| {
                    let k = 2.0 * n as f64 + t;
                    (z - k * k).norm()
                })
                .fold(f64::INFINITY, f64::min);
            best > r + 1e-9 * z.norm().max(1.0)
        })
        .collect();
    DiskCoverReport { all_covered: violators.is_empty(), violators }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountKind {
    Periodic,
    Antiperiodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCounts {
    pub rectangle: usize,
    pub rectangle_expected: usize,
    /// `(center index n, count)` for each checked far disk.
    pub disks: Vec<(usize, usize)>,
}

/// Counts eigenvalues in the low rectangle and in each far disk
/// `D_{2c}((2n)²)` (periodic, `n > n₁`) or `D_{2c}((2n+1)²)`
/// (antiperiodic, `n > n₂`). Only disks inside the converged window of the
/// supplied eigenvalues are checked.
pub fn count_in_regions(params: &PotentialParams, eigs: &[C], kind: CountKind) -> Result<RegionCounts> {
    let c = params.c;
    let (first, expected, re_max, center): (usize, usize, f64, fn(usize) -> f64) = match kind {
        CountKind::Periodic => {
            let n1 = params.n1;
            (n1 + 1, 2 * n1 + 1, (2 * n1 * 2 * n1) as f64 + 2.0 * c, |n| (2 * n * 2 * n) as f64)
        }
        CountKind::Antiperiodic => {
            let n2 = params.n2;
            let o = (2 * n2 + 1) as f64;
            (n2 + 1, 2 * n2 + 2, o * o + 2.0 * c, |n| ((2 * n + 1) * (2 * n + 1)) as f64)
        }
    };
    let inside_rect = |z: &C| z.im.abs() <= 2.0 * c + 1e-9 && z.re >= -2.0 * c - 1e-9 && z.re <= re_max + 1e-9;
    let rectangle = eigs.iter().filter(|z| inside_rect(z)).count();
    if rectangle != expected {
        return Err(HillError::CountMismatch { region: "rectangle".into(), expected, found: rectangle });
    }
    let top = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let mut disks = Vec::new();
    let mut n = first;
    while center(n) + 2.0 * c < top {
        let z0 = center(n);
        let count = eigs.iter().filter(|z| (**z - z0).norm() <= 2.0 * c + 1e-9).count();
        if count != 2 {
            return Err(HillError::CountMismatch { region: format!("disk around {z0}"), expected: 2, found: count });
        }
        disks.push((n, count));
        n += 1;
    }
    Ok(RegionCounts { rectangle, rectangle_expected: expected, disks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(c: f64) -> PotentialParams {
        PotentialParams::from_c(c).unwrap()
    }

    #[test]
    fn free_bloch_is_diagonal() {
        let eigs = TruncatedSystem::bloch(&params(0.0), 0.5, 10).eigenvalues().unwrap();
        let mut expect: Vec<f64> = (-10..=10).map(|n| (2.0 * n as f64 + 0.5).powi(2)).collect();
        expect.sort_by(f64::total_cmp);
        for (z, e) in eigs.iter().zip(&expect) {
            assert!((z - e).norm() < 1e-12);
        }
    }

    #[test]
    fn neumann_and_dirichlet_at_zero_coupling() {
        let d = TruncatedSystem::boundary(&params(0.0), BoundaryKind::Dirichlet, 20).eigenvalues().unwrap();
        assert!((d[0] - 4.0).norm() < 1e-12 && (d[1] - 16.0).norm() < 1e-12);
        let n = TruncatedSystem::boundary(&params(0.0), BoundaryKind::Neumann, 20).eigenvalues().unwrap();
        assert!(n[0].norm() < 1e-12 && (n[1] - 4.0).norm() < 1e-12);
    }

    #[test]
    fn classes_partition_the_full_matrix() {
        let p = params(1.3);
        let m = 30;
        let mut classes: Vec<C> = [BoundaryKind::Dirichlet, BoundaryKind::Neumann]
            .iter()
            .flat_map(|&k| TruncatedSystem::boundary(&p, k, m).converged_eigenvalues().unwrap())
            .collect();
        spectral_sort(&mut classes);
        let full = TruncatedSystem::periodic(&p, m).converged_eigenvalues().unwrap();
        for z in classes.iter().take(20) {
            let best = full.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-9, "{z}");
        }
    }

    #[test]
    fn antiperiodic_classes_are_conjugate() {
        let p = params(0.2);
        let s = TruncatedSystem::boundary(&p, BoundaryKind::AntiperiodicSine, 20).eigenvalues().unwrap();
        let c = TruncatedSystem::boundary(&p, BoundaryKind::AntiperiodicCosine, 20).eigenvalues().unwrap();
        for z in s.iter().take(8) {
            let best = c.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-10);
        }
    }

    #[test]
    fn eigenvector_residual_and_adjoint() {
        let sys = TruncatedSystem::bloch(&params(1.1), 0.37, 24);
        let eigs = sys.eigenvalues().unwrap();
        for &lam in eigs.iter().take(6) {
            let v = sys.eigenvector(lam);
            let av = sys.apply(&v);
            let res: f64 = av.iter().zip(&v).map(|(x, y)| (x - lam * y).norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-10, "{lam}: {res}");
            let adj = sys.adjoint();
            let w = adj.eigenvector(lam.conj());
            let aw = adj.apply(&w);
            let res: f64 = aw.iter().zip(&w).map(|(x, y)| (x - lam.conj() * y).norm_sqr()).sum::<f64>().sqrt();
            assert!(res < 1e-10);
        }
    }

    #[test]
    fn pivoting_solver_matches_dense() {
        let sub = vec![C::new(3.0, 1.0), C::new(-2.0, 0.5), C::new(0.1, 0.0)];
        let diag = vec![C::new(0.0, 0.0), C::new(1.0, -1.0), C::new(0.2, 0.0), C::new(4.0, 2.0)];
        let sup = vec![C::new(1.0, 0.0), C::new(0.0, 2.0), C::new(-1.0, 1.0)];
        let x = vec![C::new(1.0, 2.0), C::new(-0.5, 0.0), C::new(0.0, 1.0), C::new(2.0, -1.0)];
        let sys = TruncatedSystem { kind: SystemKind::Bloch(0.0), m: 0, diag: diag.clone(), sub: sub.clone(), sup: sup.clone() };
        let mut b = sys.apply(&x);
        solve_tridiagonal(&sub, &diag, &sup, &mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).norm() < 1e-12);
        }
    }

    #[test]
    fn synthetic_violator_is_reported() {
        let p = params(1.0);
        let t = 0.3;
        let z = C::new((2.0 + t) * (2.0 + t) + 2.01, 0.0);
        let rep = disk_cover_check(&p, t, &[z]);
        assert!(!rep.all_covered);
        assert_eq!(rep.violators, vec![z]);
    }

    #[test]
    fn spectral_sort_pairs_conjugates() {
        let mut v = vec![C::new(2.0, 1.0), C::new(1.0, 0.0), C::new(2.0, -1.0)];
        spectral_sort(&mut v);
        assert_eq!(v, vec![C::new(1.0, 0.0), C::new(2.0, -1.0), C::new(2.0, 1.0)]);
    }
}
