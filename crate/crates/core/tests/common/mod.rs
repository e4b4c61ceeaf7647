//! Oracles and invariant checks shared by the property and acceptance tests.
//! Each check returns the worst observed error so callers can print it.
#![allow(dead_code)]

use std::f64::consts::PI;

use hillspec::boundary_spectra::{dirichlet_spectrum, neumann_spectrum};
use hillspec::expansion::pairing;
use hillspec::matrix_oracle::{converged, truncation_order};
use hillspec::{
    antiperiodic_spectrum, bloch_eigenvalues, eigen_pair, fundamental, periodic_spectrum, Complex64 as C,
    PotentialForm, PotentialParams,
};

pub fn params(c: f64) -> PotentialParams {
    PotentialParams::from_c(c).unwrap()
}

/// Fixed-step classical RK4 for `−y'' + 2ic cos(2x) y = λy` on `[0, π]`,
/// returning `θ(π) + φ'(π)`. Independent of the library integrator.
pub fn rk4_discriminant(c: f64, lambda: C, steps: usize) -> C {
    let h = PI / steps as f64;
    let rhs = |x: f64, y: [C; 4]| {
        let w = C::new(0.0, 2.0 * c * (2.0 * x).cos()) - lambda;
        [y[1], w * y[0], y[3], w * y[2]]
    };
    let add = |y: [C; 4], k: [C; 4], s: f64| [y[0] + k[0] * s, y[1] + k[1] * s, y[2] + k[2] * s, y[3] + k[3] * s];
    let mut y = [C::new(1.0, 0.0), C::default(), C::default(), C::new(1.0, 0.0)];
    for i in 0..steps {
        let x = i as f64 * h;
        let k1 = rhs(x, y);
        let k2 = rhs(x + 0.5 * h, add(y, k1, 0.5 * h));
        let k3 = rhs(x + 0.5 * h, add(y, k2, 0.5 * h));
        let k4 = rhs(x + h, add(y, k3, h));
        for j in 0..4 {
            y[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
        }
    }
    y[0] + y[3]
}

/// `|W − 1|` relative to the size of the products forming `W`.
pub fn wronskian_error(p: &PotentialParams, lambda: C) -> f64 {
    let fd = fundamental(p, lambda, PotentialForm::Shifted).unwrap();
    (fd.wronskian() - 1.0).norm() / fd.wronskian_scale().max(1.0)
}

/// Deterministic quasi-random `(λ, c)` with `|λ| <= 200`, `c <= 8`.
pub fn wronskian_grid(count: usize) -> Vec<(C, f64)> {
    let (g1, g2, g3) = (0.754_877_666_246_692_7, 0.569_840_290_998_053_2, 0.362_182_845_130_071_6);
    (1..=count)
        .map(|i| {
            let i = i as f64;
            let r = 200.0 * (i * g1).fract().sqrt();
            let arg = 2.0 * PI * (i * g2).fract();
            (C::from_polar(r, arg), 8.0 * (i * g3).fract())
        })
        .collect()
}

/// Largest distance from `conj(z)` to the set, over `z` in the set.
pub fn conjugation_defect(eigs: &[C]) -> f64 {
    eigs.iter()
        .map(|z| eigs.iter().map(|w| (z.conj() - w).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Converged Bloch eigenvalues at `t` for a window of `count` bands.
pub fn bloch_window(p: &PotentialParams, t: f64, count: usize) -> Vec<C> {
    let m = truncation_order(p.c, count);
    converged(&bloch_eigenvalues(p, t, m).unwrap(), m)
}

pub fn dn_min_distance(p: &PotentialParams, count: usize) -> f64 {
    let d = dirichlet_spectrum(p, count).unwrap();
    let n = neumann_spectrum(p, count).unwrap();
    d.iter().flat_map(|a| n.iter().map(move |b| (a - b).norm())).fold(f64::INFINITY, f64::min)
}

/// Greedy matching distance between two multisets restricted to
/// `Re z < cut`; `INFINITY` when the restricted counts differ.
pub fn multiset_distance(a: &[C], b: &[C], cut: f64) -> f64 {
    let a: Vec<C> = a.iter().copied().filter(|z| z.re < cut).collect();
    let mut b: Vec<C> = b.iter().copied().filter(|z| z.re < cut).collect();
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for z in a {
        let (i, d) = b.iter().map(|w| (z - w).norm()).enumerate().fold((0, f64::INFINITY), |m, (i, d)| if d < m.1 { (i, d) } else { m });
        worst = worst.max(d);
        b.swap_remove(i);
    }
    worst
}

/// `σ(H₀) ∪ σ(H₁)` against `σ(D) ∪ σ(N)` on the low part where all four
/// lists are complete.
pub fn union_identity_defect(p: &PotentialParams, count: usize) -> f64 {
    let per = periodic_spectrum(p, count).unwrap();
    let anti = antiperiodic_spectrum(p, count).unwrap();
    let d = dirichlet_spectrum(p, count).unwrap();
    let n = neumann_spectrum(p, count).unwrap();
    let cut = [&per, &anti, &d, &n].iter().map(|v| v.last().unwrap().re).fold(f64::INFINITY, f64::min) - 1.0;
    let left: Vec<C> = per.into_iter().chain(anti).collect();
    let right: Vec<C> = d.into_iter().chain(n).collect();
    multiset_distance(&left, &right, cut)
}

/// Largest `|(Ψₘ, Ψ*ₙ)|`, `m ≠ n`, among bands `1..=n_max` at `t`, using
/// unit-norm coefficient vectors.
pub fn biorthogonality_defect(p: &PotentialParams, t: f64, n_max: usize) -> f64 {
    let m = truncation_order(p.c, n_max) + 8;
    let pairs: Vec<_> = (1..=n_max).filter_map(|n| eigen_pair(p, n, t, m).ok()).collect();
    let mut worst: f64 = 0.0;
    for a in &pairs {
        for b in &pairs {
            if a.n != b.n {
                worst = worst.max(pairing(&a.psi, &b.psi_star).norm());
            }
        }
    }
    worst
}

/// `‖P(Pv) − Pv‖∞` for the rank-one projection of band `n` at `t`.
pub fn idempotence_defect(p: &PotentialParams, n: usize, t: f64, seed: u64) -> f64 {
    let m = truncation_order(p.c, n) + 8;
    let pair = eigen_pair(p, n, t, m).unwrap();
    let v: Vec<C> = (0..pair.psi.len())
        .map(|j| {
            let s = (seed as f64 + 1.0) * 0.618_033_988_75 + j as f64;
            C::new((s * 12.9898).sin(), (s * 78.233).cos())
        })
        .collect();
    let once = pair.project(&v);
    let twice = pair.project(&once);
    once.iter().zip(&twice).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}
