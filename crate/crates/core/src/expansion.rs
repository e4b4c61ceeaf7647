//! Bloch eigenfunction pairings, expansion coefficients and numerical
//! evaluation of the spectral expansion, in the quasimomentum form and in the
//! form parametrized by `λ`.
//!
//! Everything here uses the operator with potential `2ic cos 2x`, which has
//! the same discriminant, bands and singular points as the optical one, and
//! reduces to the free operator at `c = 0`.
//!
//! With `t ∈ (−1, 1]` and eigenfunctions of unit norm in `L₂[0, π]`,
//!
//! ```text
//! f(x) = ½ Σₙ ∫ aₙ(t) Ψₙ,ₜ(x) dt,   aₙ(t) = (f, Ψ*ₙ,ₜ) / dₙ(t),   dₙ(t) = (Ψₙ,ₜ, Ψ*ₙ,ₜ).
//! ```

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use rayon::prelude::*;

use crate::bloch_bands::{bloch_point, bloch_seeds, find_double_point, refine_lenient, SINGULAR_TOL};
use crate::error::{HillError, Result};
use crate::hill_core::{discriminant, fundamental, solutions_at, PotentialForm, PotentialParams};
use crate::matrix_oracle::{spectral_sort, truncation_order, BoundaryKind, TruncatedSystem};

/// Two eigenvalues of one symmetry class closer than this (relative) are
/// treated as a multiple periodic or antiperiodic eigenvalue.
pub const ESS_TOL: f64 = 1e-4;
/// Relative change under ε-refinement below which an excised integral is
/// declared convergent.
pub const REFINEMENT_TOL: f64 = 1e-4;
/// Gauss–Legendre points per panel of the `t` rules.
const PANEL: usize = 16;
/// Gauss–Legendre points per sample interval of `f`.
const X_NODES: usize = 8;

/// The excision sequence `ε_j = 2^{−j}`, `j = 3..=12`.
pub fn default_epsilons() -> Vec<f64> {
    (3..=12).map(|j| 0.5f64.powi(j)).collect()
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    Linear,
    #[default]
    Cubic,
}

/// Uniform samples of a function supported on `[x0, x0 + (len−1)·dx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<C>,
    pub interpolation: Interpolation,
}

impl SampledFunction {
    pub fn new(x0: f64, dx: f64, values: Vec<C>, interpolation: Interpolation) -> Result<Self> {
        let min = match interpolation {
            Interpolation::Linear => 2,
            Interpolation::Cubic => 4,
        };
        if !(dx > 0.0) || !x0.is_finite() || values.len() < min {
            return Err(HillError::Domain(format!("need dx > 0 and at least {min} samples")));
        }
        Ok(SampledFunction { x0, dx, values, interpolation })
    }

    /// From points that must lie on a uniform grid.
    pub fn from_points(xs: &[f64], values: Vec<C>, interpolation: Interpolation) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(HillError::Domain("x and f columns differ in length or are too short".into()));
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for (i, &x) in xs.iter().enumerate() {
            if (x - (xs[0] + i as f64 * dx)).abs() > 1e-6 * dx {
                return Err(HillError::Domain(format!("x grid is not uniform at row {}", i + 1)));
            }
        }
        Self::new(xs[0], dx, values, interpolation)
    }

    /// Samples `f` on `points` uniform points of `[a, b]`.
    pub fn sample(f: impl Fn(f64) -> C, a: f64, b: f64, points: usize, interpolation: Interpolation) -> Result<Self> {
        let dx = (b - a) / (points.max(2) - 1) as f64;
        Self::new(a, dx, (0..points).map(|i| f(a + i as f64 * dx)).collect(), interpolation)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.x0, self.x0 + (self.values.len() - 1) as f64 * self.dx)
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.x0 + i as f64 * self.dx).collect()
    }

    /// Interpolated value; zero outside the support.
    pub fn eval(&self, x: f64) -> C {
        let (a, b) = self.support();
        if x < a || x > b {
            return C::default();
        }
        let n = self.values.len();
        let s = (x - self.x0) / self.dx;
        let i = (s.floor() as usize).min(n - 2);
        let u = s - i as f64;
        match self.interpolation {
            Interpolation::Linear => self.values[i] * (1.0 - u) + self.values[i + 1] * u,
            Interpolation::Cubic => {
                // four-point Lagrange stencil, shifted inwards at the ends
                let j = i.saturating_sub(1).min(n - 4);
                let r = s - j as f64;
                let w = [
                    -(r - 1.0) * (r - 2.0) * (r - 3.0) / 6.0,
                    r * (r - 2.0) * (r - 3.0) / 2.0,
                    -r * (r - 1.0) * (r - 3.0) / 2.0,
                    r * (r - 1.0) * (r - 2.0) / 6.0,
                ];
                (0..4).map(|q| self.values[j + q] * w[q]).sum()
            }
        }
    }

    /// `(x, w·f(x))` of a composite Gauss–Legendre rule over the support.
    pub fn weighted_nodes(&self) -> Vec<(f64, C)> {
        let gl = gauss_legendre(X_NODES);
        let h = 0.5 * self.dx;
        let mut out = Vec::with_capacity((self.values.len() - 1) * X_NODES);
        for i in 0..self.values.len() - 1 {
            let mid = self.x0 + (i as f64 + 0.5) * self.dx;
            for &(u, w) in &gl {
                let x = mid + h * u;
                out.push((x, self.eval(x) * (w * h)));
            }
        }
        out
    }

    /// `‖f‖` in `L₂` from the interpolant.
    pub fn l2_norm(&self) -> f64 {
        let gl = gauss_legendre(X_NODES);
        let h = 0.5 * self.dx;
        let mut s = 0.0;
        for i in 0..self.values.len() - 1 {
            let mid = self.x0 + (i as f64 + 0.5) * self.dx;
            s += gl.iter().map(|&(u, w)| w * h * self.eval(mid + h * u).norm_sqr()).sum::<f64>();
        }
        s.sqrt()
    }
}

/// `f̂(ξ) = ∫ f(x) e^{−iξx} dx` at the Bloch wavenumbers `ξ_j = 2(j−m) + t`.
struct Transform {
    nodes: Vec<(f64, C)>,
}

impl Transform {
    fn new(f: &SampledFunction) -> Self {
        Transform { nodes: f.weighted_nodes() }
    }

    fn at_wavenumbers(&self, t: f64, m: usize) -> Vec<C> {
        let mut out = vec![C::default(); 2 * m + 1];
        for &(x, wf) in &self.nodes {
            let step = C::from_polar(1.0, -2.0 * x);
            let mut z = wf * C::from_polar(1.0, -(t - 2.0 * m as f64) * x);
            for o in out.iter_mut() {
                *o += z;
                z *= step;
            }
        }
        out
    }
}

/// `(1/√π) Σ_j c_j e^{i ξ_j x}` at each `x`.
fn synthesize(coeffs: &[C], t: f64, m: usize, xs: &[f64]) -> Vec<C> {
    let norm = 1.0 / PI.sqrt();
    xs.iter()
        .map(|&x| {
            let step = C::from_polar(1.0, 2.0 * x);
            let mut z = C::from_polar(norm, (t - 2.0 * m as f64) * x);
            let mut s = C::default();
            for &c in coeffs {
                s += c * z;
                z *= step;
            }
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub n: usize,
    pub t: f64,
    pub lambda: C,
    /// Truncation order; coefficient `j` multiplies `e^{i(2(j−m)+t)x}/√π`.
    pub m: usize,
    pub psi: Vec<C>,
    pub psi_star: Vec<C>,
    pub d: C,
}

impl EigenPair {
    /// `Ψₙ,ₜ(x)`.
    pub fn eval(&self, x: f64) -> C {
        synthesize(&self.psi, self.t, self.m, &[x])[0]
    }

    /// `Ψ*ₙ,ₜ(x)`.
    pub fn eval_star(&self, x: f64) -> C {
        synthesize(&self.psi_star, self.t, self.m, &[x])[0]
    }

    /// Rank-one spectral projection `v ↦ (v, Ψ*) Ψ / d` in coefficient space.
    pub fn project(&self, v: &[C]) -> Vec<C> {
        let s = pairing(v, &self.psi_star) / self.d;
        self.psi.iter().map(|&p| p * s).collect()
    }
}

/// `Σ u_j conj(v_j)`.
pub fn pairing(u: &[C], v: &[C]) -> C {
    u.iter().zip(v).map(|(a, b)| a * b.conj()).sum()
}

fn pair_from(sys: &TruncatedSystem, adj: &TruncatedSystem, n: usize, t: f64, lambda: C) -> EigenPair {
    let psi = sys.eigenvector(lambda);
    let psi_star = adj.eigenvector(lambda.conj());
    let d = pairing(&psi, &psi_star);
    EigenPair { n, t, lambda, m: sys.m, psi, psi_star, d }
}

/// Eigenfunction pair of `λₙ(t)` from the truncated Bloch system of order `m`
/// and its conjugate transpose.
pub fn eigen_pair(params: &PotentialParams, n: usize, t: f64, m: usize) -> Result<EigenPair> {
    if n == 0 {
        return Err(HillError::Domain("band indices start at 1".into()));
    }
    if m < truncation_order(params.c, n) {
        return Err(HillError::Domain(format!("truncation {m} too small for band {n}")));
    }
    let sys = TruncatedSystem::bloch(params, t, m);
    let eigs = sys.eigenvalues()?;
    let lambda = eigs[n - 1];
    let (_, fp) = discriminant(params, lambda)?;
    if fp.norm() < SINGULAR_TOL {
        return Err(HillError::NearSingular { lambda, f_prime: fp.norm(), residual: 0.0 });
    }
    Ok(pair_from(&sys, &sys.adjoint(), n, t, lambda))
}

/// `‖e(λₙ(t))‖ = 1/|dₙ(t)|`.
pub fn projection_norm(pair: &EigenPair) -> Result<f64> {
    let d = pair.d.norm();
    if d == 0.0 || !d.is_finite() {
        return Err(HillError::DivisionByZero);
    }
    Ok(1.0 / d)
}

/// `aₙ(t) = (f, Ψ*ₙ,ₜ) / dₙ(t)` with the integral taken over the support of `f`.
pub fn coefficient_a(pair: &EigenPair, f: &SampledFunction) -> Result<C> {
    let fhat = Transform::new(f).at_wavenumbers(pair.t, pair.m);
    coefficient_from_transform(pair, &fhat)
}

fn coefficient_from_transform(pair: &EigenPair, fhat: &[C]) -> Result<C> {
    if pair.d.norm() == 0.0 {
        return Err(HillError::DivisionByZero);
    }
    let inner: C = pair.psi_star.iter().zip(fhat).map(|(s, fh)| s.conj() * fh).sum();
    Ok(inner / PI.sqrt() / pair.d)
}

/// A multiple periodic (`t0 = 0`) or antiperiodic (`t0 = 1`) eigenvalue:
/// `λₙ(t0) = λₙ₊₁(t0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssPoint {
    pub t0: f64,
    pub n: usize,
    pub lambda: C,
}

/// Multiple 2-periodic eigenvalues touching bands `1..=n_max`. Equal
/// eigenvalues from different symmetry classes (as in the free operator)
/// are semisimple and are not reported.
pub fn ess_points(params: &PotentialParams, n_max: usize) -> Result<Vec<EssPoint>> {
    let mut out = Vec::new();
    let cases = [
        (0.0, [BoundaryKind::Dirichlet, BoundaryKind::Neumann]),
        (1.0, [BoundaryKind::AntiperiodicSine, BoundaryKind::AntiperiodicCosine]),
    ];
    for (t0, kinds) in cases {
        let spectrum = bloch_seeds(params, t0, n_max + 2)?;
        for kind in kinds {
            let m = truncation_order(params.c, n_max + 2);
            let mut eigs = TruncatedSystem::boundary(params, kind, m).eigenvalues()?;
            eigs.truncate(n_max + 2);
            spectral_sort(&mut eigs);
            for w in eigs.windows(2) {
                if (w[0] - w[1]).norm() <= ESS_TOL * w[0].norm().max(1.0) {
                    let lambda = 0.5 * (w[0] + w[1]);
                    let n = 1 + spectrum
                        .iter()
                        .enumerate()
                        .min_by(|a, b| (a.1 - lambda).norm().total_cmp(&(b.1 - lambda).norm()))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    // the pair occupies n and n+1 (or n−1 and n)
                    let n = if n >= 2 && (spectrum[n - 2] - lambda).norm() <= ESS_TOL * lambda.norm().max(1.0) * 10.0 {
                        n - 1
                    } else {
                        n
                    };
                    if n <= n_max {
                        out.push(EssPoint { t0, n, lambda });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.t0.total_cmp(&b.t0).then(a.n.cmp(&b.n)));
    Ok(out)
}

/// Interior double points `t_k` of the pairs within bands `1..=n_max`.
fn interior_breaks(params: &PotentialParams, n_max: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for k in 1..=n_max.div_ceil(2) {
        match find_double_point(params, k) {
            Ok(dp) if dp.t > 0.0 && dp.t < 1.0 => out.push(dp.t),
            Ok(_) | Err(HillError::NotFound(_) | HillError::Degenerate(_) | HillError::Regime(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Composite rule on the segments between `breaks`, each half-segment mapped
/// by `t = p + (q − p)u²` towards its break so that `|t − p|^{−1/2}`
/// singularities become smooth.
fn graded_rule(breaks: &[f64], nodes_per_half: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(PANEL);
    let panels = nodes_per_half.div_ceil(PANEL).max(1);
    let mut out = Vec::new();
    for seg in breaks.windows(2) {
        let (p, q) = (seg[0], seg[1]);
        if q - p <= 0.0 {
            continue;
        }
        let mid = 0.5 * (p + q);
        for (anchor, len) in [(p, mid - p), (q, mid - q)] {
            for k in 0..panels {
                let (u0, u1) = (k as f64 / panels as f64, (k + 1) as f64 / panels as f64);
                let (c, h) = (0.5 * (u0 + u1), 0.5 * (u1 - u0));
                for &(s, w) in &gl {
                    let u = c + h * s;
                    out.push((anchor + len * u * u, (2.0 * len * u * w * h).abs()));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn sorted_breaks(domain: (f64, f64), extra: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut b: Vec<f64> = vec![domain.0, domain.1];
    b.extend(extra.into_iter().filter(|&t| t > domain.0 && t < domain.1));
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    b
}

/// Result of integrating a band group over `A(ε)` for a decreasing `ε`
/// sequence and extrapolating `ε → 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub bands: Vec<usize>,
    pub epsilons: Vec<f64>,
    /// Relative `L₂` change between successive extrapolated values.
    pub changes: Vec<f64>,
    pub converged: bool,
    /// The last extrapolated value on the evaluation grid.
    pub value: Vec<C>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    None,
    /// Bands whose joint integral is taken over `A(ε)` with `ε → 0`.
    EssGrouped { bands: Vec<usize>, epsilons: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub x: Vec<f64>,
    pub values: Vec<C>,
    /// `‖f − f̂‖ / ‖f‖` on the sample grid.
    pub relative_l2_error: f64,
    pub refinement: Option<Refinement>,
}

fn l2(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Quasimomentum or `λ` form of the expansion; both produce, at a node `t`,
/// the contribution of each requested band on the evaluation grid.
trait Integrand: Sync {
    fn domain(&self) -> (f64, f64);
    /// Points excised by `A(ε)`.
    fn excised(&self) -> Vec<f64>;
    fn breaks(&self) -> &[f64];
    /// Summed contribution of `bands` at `t`, without quadrature weight.
    fn eval(&self, t: f64, bands: &[usize]) -> Result<Vec<C>>;
    fn grid_len(&self) -> usize;
}

fn integrate(ig: &dyn Integrand, rule: &[(f64, f64)], bands: &[usize]) -> Result<Vec<C>> {
    let parts: Vec<Vec<C>> = rule
        .par_iter()
        .map(|&(t, w)| Ok(ig.eval(t, bands)?.into_iter().map(|z| z * w).collect()))
        .collect::<Result<_>>()?;
    let mut acc = vec![C::default(); ig.grid_len()];
    for p in parts {
        for (a, z) in acc.iter_mut().zip(p) {
            *a += z;
        }
    }
    Ok(acc)
}

fn full_rule(ig: &dyn Integrand, t_points: usize) -> Vec<(f64, f64)> {
    let breaks = sorted_breaks(ig.domain(), ig.breaks().iter().copied().chain(ig.excised()));
    let halves = 2 * (breaks.len() - 1);
    graded_rule(&breaks, (t_points / halves).max(PANEL))
}

fn refine_group(ig: &dyn Integrand, bands: &[usize], epsilons: &[f64], t_points: usize) -> Result<Refinement> {
    if epsilons.len() < 3 || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HillError::Domain("need at least three decreasing ε values".into()));
    }
    let (lo, hi) = ig.domain();
    let e0 = epsilons[0];
    let cuts: Vec<f64> = ig.excised().iter().flat_map(|&p| [p - e0, p + e0]).collect();
    let breaks = sorted_breaks((lo, hi), ig.breaks().iter().copied().chain(cuts).chain(ig.excised()));
    let near = |t: f64| ig.excised().iter().any(|&p| (t - p).abs() < e0);
    let kept: Vec<f64> = breaks
        .windows(2)
        .filter(|s| !near(0.5 * (s[0] + s[1])))
        .flat_map(|s| [s[0], s[1]])
        .collect();
    let halves = kept.len().max(2);
    let mut outer_rule = Vec::new();
    for s in kept.chunks(2) {
        outer_rule.extend(graded_rule(s, (t_points / halves).max(PANEL)));
    }
    let mut running = integrate(ig, &outer_rule, bands)?;
    let mut sums = vec![running.clone()];
    let gl = gauss_legendre(PANEL);
    for w in epsilons.windows(2) {
        let (a, b) = (w[1], w[0]);
        let mut strip = Vec::new();
        for &p in &ig.excised() {
            for side in [-1.0, 1.0] {
                let (s0, s1) = (p + side * b, p + side * a);
                if s0.min(s1) < lo - 1e-15 || s0.max(s1) > hi + 1e-15 {
                    continue;
                }
                let (c, h) = (0.5 * (s0 + s1), 0.5 * (s1 - s0).abs());
                strip.extend(gl.iter().map(|&(u, wt)| (c + h * u, wt * h)));
            }
        }
        for (r, z) in running.iter_mut().zip(integrate(ig, &strip, bands)?) {
            *r += z;
        }
        sums.push(running.clone());
    }
    // halving ε removes the O(ε) excision error
    let extrapolated: Vec<Vec<C>> = sums
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b * 2.0 - a).collect())
        .collect();
    let changes: Vec<f64> = extrapolated
        .windows(2)
        .map(|w| {
            let diff: Vec<C> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
            l2(&diff) / l2(&w[1]).max(f64::MIN_POSITIVE)
        })
        .collect();
    let converged = changes.last().is_some_and(|&c| c < REFINEMENT_TOL);
    Ok(Refinement {
        bands: bands.to_vec(),
        epsilons: epsilons.to_vec(),
        changes,
        converged,
        value: extrapolated.last().cloned().unwrap_or_default(),
    })
}

struct TForm<'a> {
    params: PotentialParams,
    m: usize,
    transform: Transform,
    x: &'a [f64],
    breaks: Vec<f64>,
}

impl TForm<'_> {
    fn coefficients(&self, t: f64, bands: &[usize]) -> Result<Vec<C>> {
        let sys = TruncatedSystem::bloch(&self.params, t, self.m);
        let adj = sys.adjoint();
        let eigs = sys.eigenvalues()?;
        let fhat = self.transform.at_wavenumbers(t, self.m);
        let mut acc = vec![C::default(); sys.dim()];
        for &n in bands {
            let pair = pair_from(&sys, &adj, n, t, eigs[n - 1]);
            let a = coefficient_from_transform(&pair, &fhat)?;
            for (s, p) in acc.iter_mut().zip(&pair.psi) {
                *s += a * p;
            }
        }
        Ok(acc)
    }
}

impl Integrand for TForm<'_> {
    fn domain(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
    fn excised(&self) -> Vec<f64> {
        vec![-1.0, 0.0, 1.0]
    }
    fn breaks(&self) -> &[f64] {
        &self.breaks
    }
    fn eval(&self, t: f64, bands: &[usize]) -> Result<Vec<C>> {
        let coeffs = self.coefficients(t, bands)?;
        Ok(synthesize(&coeffs, t, self.m, self.x).into_iter().map(|z| z * 0.5).collect())
    }
    fn grid_len(&self) -> usize {
        self.x.len()
    }
}

struct LambdaForm<'a> {
    params: PotentialParams,
    nodes: Vec<(f64, C)>,
    x: &'a [f64],
    breaks: Vec<f64>,
}

/// How `λ'(t)` is obtained along a band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeMethod {
    /// `F'(λ)λ' = −2π sin πt`, exact for a simple eigenvalue.
    #[default]
    Implicit,
    /// Fourth-order centered differences of refined band points, with step
    /// `min(1e−3, dist/10)` where `dist` is the distance to `break_points`.
    CenteredDifference,
}

/// `λ'(t)` at the band point `λ = λₙ(t)`.
pub fn band_derivative(params: &PotentialParams, t: f64, lambda: C, method: DerivativeMethod, break_points: &[f64]) -> Result<C> {
    match method {
        DerivativeMethod::Implicit => {
            let (_, fp) = discriminant(params, lambda)?;
            Ok(-2.0 * PI * (PI * t).sin() / fp)
        }
        DerivativeMethod::CenteredDifference => {
            let dist = break_points.iter().chain(&[0.0, 1.0]).map(|b| (t - b).abs()).fold(f64::INFINITY, f64::min);
            let h = (dist / 10.0).min(1e-3);
            let at = |s: f64| -> Result<C> { Ok(refine_lenient(params, t + s, lambda)?.lambda) };
            Ok((at(-2.0 * h)? - at(2.0 * h)? + (at(h)? - at(-h)?) * 8.0) / (12.0 * h))
        }
    }
}

impl Integrand for LambdaForm<'_> {
    fn domain(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn excised(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
    fn breaks(&self) -> &[f64] {
        &self.breaks
    }
    fn eval(&self, t: f64, bands: &[usize]) -> Result<Vec<C>> {
        let mut acc = vec![C::default(); self.x.len()];
        let mut xs: Vec<f64> = self.nodes.iter().map(|p| p.0).collect();
        xs.extend_from_slice(self.x);
        let q = self.nodes.len();
        let seeds = bloch_seeds(&self.params, t, bands.iter().copied().max().unwrap_or(0) + 1)?;
        let target = 2.0 * (PI * t).cos();
        for &n in bands {
            let seed = seeds[n - 1];
            let mut fd = fundamental(&self.params, seed, PotentialForm::Shifted)?;
            // One Newton correction of the matrix value. Near a numerically
            // double root the step would jump to the zero of F', so it is only
            // taken when small against the distance to the other seeds.
            let gap = seeds.iter().filter(|&&z| z != seed).map(|z| (z - seed).norm()).fold(f64::INFINITY, f64::min);
            let step = (fd.f - target) / fd.f_prime;
            if step.norm() > 1e-14 * seed.norm().max(1.0) && step.norm() < 1e-3 * gap {
                fd = fundamental(&self.params, seed - step, PotentialForm::Shifted)?;
            }
            let lambda = fd.lambda;
            let sol = solutions_at(&self.params, lambda, &xs)?;
            let (mut h, mut g) = (C::default(), C::default());
            for (&(_, wf), &(th, ph)) in self.nodes.iter().zip(&sol[..q]) {
                h += ph * wf;
                g += th * wf;
            }
            let half = (fd.theta - fd.phi_prime) * 0.5;
            // (1/π)·(−λ'/p) with the band traversed from t = 1 to t = 0 and
            // λ' = −2π sin(πt)/F', p = 2 sin(πt)
            let scale = 1.0 / fd.f_prime;
            for (a, &(th, ph)) in acc.iter_mut().zip(&sol[q..]) {
                let big_phi = fd.theta_prime * h * ph + half * (h * th + g * ph) - fd.phi * g * th;
                *a += big_phi * scale;
            }
        }
        Ok(acc)
    }
    fn grid_len(&self) -> usize {
        self.x.len()
    }
}

fn all_bands(n_bands: usize) -> Vec<usize> {
    (1..=n_bands).collect()
}

fn finish(ig: &dyn Integrand, f: &SampledFunction, x: Vec<f64>, n_bands: usize, t_points: usize, grouping: &Grouping, ess: &[EssPoint]) -> Result<Reconstruction> {
    let (grouped, refinement) = match grouping {
        Grouping::None => {
            if let Some(p) = ess.iter().find(|p| p.n <= n_bands) {
                let r = refine_group(ig, &[p.n], &default_epsilons(), t_points)?;
                if !r.converged {
                    return Err(HillError::NonIntegrable { last_change: r.changes.last().copied().unwrap_or(f64::NAN) });
                }
            }
            (Vec::new(), None)
        }
        Grouping::EssGrouped { bands, epsilons } => {
            if bands.iter().any(|&n| n == 0 || n > n_bands) {
                return Err(HillError::Domain(format!("grouped bands must lie in 1..={n_bands}")));
            }
            let r = refine_group(ig, bands, epsilons, t_points)?;
            if !r.converged {
                return Err(HillError::NonIntegrable { last_change: r.changes.last().copied().unwrap_or(f64::NAN) });
            }
            (bands.clone(), Some(r))
        }
    };
    let rest: Vec<usize> = all_bands(n_bands).into_iter().filter(|n| !grouped.contains(n)).collect();
    let mut values = integrate(ig, &full_rule(ig, t_points), &rest)?;
    if let Some(r) = &refinement {
        for (v, z) in values.iter_mut().zip(&r.value) {
            *v += z;
        }
    }
    let diff: Vec<C> = x.iter().zip(&values).map(|(&xi, v)| f.eval(xi) - v).collect();
    let exact: Vec<C> = x.iter().map(|&xi| f.eval(xi)).collect();
    let relative_l2_error = l2(&diff) / l2(&exact).max(f64::MIN_POSITIVE);
    Ok(Reconstruction { x, values, relative_l2_error, refinement })
}

fn check_bands(n_bands: usize, t_points: usize) -> Result<()> {
    if n_bands == 0 || t_points < 2 {
        return Err(HillError::Domain("need n_bands >= 1 and t_points >= 2".into()));
    }
    Ok(())
}

fn t_form<'a>(params: &PotentialParams, f: &SampledFunction, x: &'a [f64], n_bands: usize) -> Result<TForm<'a>> {
    let inner = interior_breaks(params, n_bands)?;
    Ok(TForm {
        params: *params,
        m: truncation_order(params.c, n_bands + 2),
        transform: Transform::new(f),
        x,
        breaks: inner.iter().flat_map(|&t| [-t, t]).collect(),
    })
}

fn lambda_form<'a>(params: &PotentialParams, f: &SampledFunction, x: &'a [f64], n_bands: usize) -> Result<LambdaForm<'a>> {
    Ok(LambdaForm {
        params: *params,
        nodes: f.weighted_nodes(),
        x,
        breaks: interior_breaks(params, n_bands)?,
    })
}

/// `f̂(x) = ½ Σₙ ∫ aₙ(t) Ψₙ,ₜ(x) dt` over bands `1..=n_bands` on the sample
/// grid of `f`, with about `t_points` quadrature nodes in `t`.
///
/// With [`Grouping::None`], a band touching a multiple 2-periodic eigenvalue
/// makes the call fail with `NonIntegrable`.
pub fn reconstruct(params: &PotentialParams, f: &SampledFunction, n_bands: usize, t_points: usize, grouping: &Grouping) -> Result<Reconstruction> {
    check_bands(n_bands, t_points)?;
    let x = f.grid();
    let ig = t_form(params, f, &x, n_bands)?;
    let ess = ess_points(params, n_bands)?;
    finish(&ig, f, x.clone(), n_bands, t_points, grouping, &ess)
}

/// `(1/π) Σₖ ∫_{Γₖ} Φ(x,λ)/p(λ) dλ`, each band parametrized by `t ∈ (0,1)`
/// with `p = 2 sin πt` and `dλ = λ'(t) dt`.
pub fn reconstruct_lambda_form(params: &PotentialParams, f: &SampledFunction, n_bands: usize, t_points: usize, grouping: &Grouping) -> Result<Reconstruction> {
    check_bands(n_bands, t_points)?;
    let x = f.grid();
    let ig = lambda_form(params, f, &x, n_bands)?;
    let ess = ess_points(params, n_bands)?;
    finish(&ig, f, x.clone(), n_bands, t_points, grouping, &ess)
}

/// ε-refinement of the joint `t`-integral of `bands`, reported whether or
/// not it converges.
pub fn band_refinement(params: &PotentialParams, f: &SampledFunction, bands: &[usize], epsilons: &[f64], t_points: usize) -> Result<Refinement> {
    let n_max = bands.iter().copied().max().unwrap_or(0);
    check_bands(n_max, t_points)?;
    let x = f.grid();
    let ig = t_form(params, f, &x, n_max)?;
    refine_group(&ig, bands, epsilons, t_points)
}

/// As [`band_refinement`] for the `λ`-parametrized form.
pub fn band_refinement_lambda_form(params: &PotentialParams, f: &SampledFunction, bands: &[usize], epsilons: &[f64], t_points: usize) -> Result<Refinement> {
    let n_max = bands.iter().copied().max().unwrap_or(0);
    check_bands(n_max, t_points)?;
    let x = f.grid();
    let ig = lambda_form(params, f, &x, n_max)?;
    refine_group(&ig, bands, epsilons, t_points)
}

/// `½ Σₙ ∫ |aₙ(t)|² dt`, which equals `‖f‖²` for the free operator.
pub fn parseval_energy(params: &PotentialParams, f: &SampledFunction, n_bands: usize, t_points: usize) -> Result<f64> {
    check_bands(n_bands, t_points)?;
    let m = truncation_order(params.c, n_bands + 2);
    let transform = Transform::new(f);
    let breaks = sorted_breaks((-1.0, 1.0), [0.0]);
    let rule = graded_rule(&breaks, (t_points / 4).max(PANEL));
    let parts: Vec<f64> = rule
        .par_iter()
        .map(|&(t, w)| {
            let sys = TruncatedSystem::bloch(params, t, m);
            let adj = sys.adjoint();
            let eigs = sys.eigenvalues()?;
            let fhat = transform.at_wavenumbers(t, m);
            let mut s = 0.0;
            for n in 1..=n_bands {
                let pair = pair_from(&sys, &adj, n, t, eigs[n - 1]);
                s += coefficient_from_transform(&pair, &fhat)?.norm_sqr();
            }
            Ok(0.5 * w * s)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityKind {
    Simple,
    SpectralSingularity,
    Ess,
}

impl SingularityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SingularityKind::Simple => "simple",
            SingularityKind::SpectralSingularity => "spectral_singularity",
            SingularityKind::Ess => "ESS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityReport {
    pub location: C,
    pub t0: f64,
    pub n: usize,
    pub kind: SingularityKind,
    /// Fitted `α` in `|dₙ(t)| ~ |t − t₀|^α`; `None` when sampling failed.
    pub decay_exponent: Option<f64>,
}

/// Eight offsets from `t₀` for the decay fit, starting at
/// `min(1e−2, dist/10)` where `dist` is the distance from an interior `t₀`
/// to the nearer end of the zone, so the fit sees only the local behavior.
pub fn decay_offsets(t0: f64) -> Vec<f64> {
    let dist = if t0 > 0.0 && t0 < 1.0 { t0.min(1.0 - t0) } else { 1.0 };
    let start = (dist / 10.0).min(1e-2);
    (0..8).map(|i| start * 0.25f64.powi(i)).collect()
}

/// Least-squares slope of `log|dₙ|` against `log|t − t₀|`, approaching from
/// the side given by `direction` (±1).
pub fn decay_exponent(params: &PotentialParams, n: usize, t0: f64, direction: f64) -> Result<f64> {
    let m = truncation_order(params.c, n + 2);
    let pts: Vec<(f64, f64)> = decay_offsets(t0)
        .par_iter()
        .map(|&delta| {
            let pair = eigen_pair(params, n, t0 + direction * delta, m)?;
            Ok((delta.ln(), pair.d.norm().ln()))
        })
        .collect::<Result<_>>()?;
    let k = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / k, sy / k);
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(num / den)
}

/// Interior double points (spectral singularities) and multiple 2-periodic
/// eigenvalues (ESS) touching bands `1..=n_max`.
pub fn detect_singularities(params: &PotentialParams, n_max: usize) -> Result<Vec<SingularityReport>> {
    let mut out = Vec::new();
    for k in 1..=n_max / 2 {
        match find_double_point(params, k) {
            Ok(dp) if dp.t > 0.0 && dp.one_minus_t > 0.0 => {
                let n = 2 * k - 1;
                let dir = if dp.t > 0.5 { -1.0 } else { 1.0 };
                out.push(SingularityReport {
                    location: C::new(dp.lambda, 0.0),
                    t0: dp.t,
                    n,
                    kind: SingularityKind::SpectralSingularity,
                    decay_exponent: decay_exponent(params, n, dp.t, dir).ok(),
                });
            }
            Ok(_) | Err(HillError::NotFound(_) | HillError::Degenerate(_) | HillError::Regime(_)) => {}
            Err(e) => return Err(e),
        }
    }
    for p in ess_points(params, n_max)? {
        let dir = if p.t0 == 0.0 { 1.0 } else { -1.0 };
        out.push(SingularityReport {
            location: p.lambda,
            t0: p.t0,
            n: p.n,
            kind: SingularityKind::Ess,
            decay_exponent: decay_exponent(params, p.n, p.t0, dir).ok(),
        });
    }
    out.sort_by(|a, b| a.n.cmp(&b.n).then(a.t0.total_cmp(&b.t0)));
    Ok(out)
}

/// Kind of the point `λₙ(t)` alone.
pub fn point_kind(params: &PotentialParams, n: usize, t: f64) -> Result<SingularityKind> {
    let ess = ess_points(params, n)?;
    if ess.iter().any(|p| (p.n == n || p.n + 1 == n) && (p.t0 - t.abs()).abs() < 1e-12) {
        return Ok(SingularityKind::Ess);
    }
    match bloch_point(params, n, t) {
        Ok(_) => Ok(SingularityKind::Simple),
        Err(HillError::NearSingular { .. }) => Ok(SingularityKind::SpectralSingularity),
        Err(e) => Err(e),
    }
}
